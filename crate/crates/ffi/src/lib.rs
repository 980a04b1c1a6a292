//! C ABI over `interop_core`.
//!
//! Conventions:
//! - Every function returns an [`InteropStatus`]; outputs go through
//!   pointer arguments and are written only on success.
//! - Keys and decoded messages are opaque handles released with their
//!   `_free` function.
//! - Variable-length outputs are [`InteropBuffer`]s owned by the caller and
//!   released with [`interop_buffer_free`].
//! - After a failure, [`interop_last_error`] describes it. The message is
//!   per thread and valid until the next call on that thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;
use std::time::Duration;

use interop_core::codec::{sha256, Canonical};
use interop_core::crypto::{generate_keypair, hybrid_decrypt, hybrid_encrypt, verify, HybridCiphertext, KeyPair};
use interop_core::scenario::{run_scenario, Attack, ScenarioSpec};
use interop_core::wire::{decode, encode, Message};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteropStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Crypto = 3,
    Decode = 4,
    Scenario = 5,
    Panic = 6,
}

/// Caller-owned byte buffer.
#[repr(C)]
pub struct InteropBuffer {
    pub data: *mut u8,
    pub len: usize,
}

impl InteropBuffer {
    fn from_vec(bytes: Vec<u8>) -> Self {
        let boxed = bytes.into_boxed_slice();
        let len = boxed.len();
        let data = Box::into_raw(boxed) as *mut u8;
        Self { data, len }
    }
}

/// Signing and encryption key pair.
pub struct InteropKeyPair(KeyPair);

/// A decoded request or response.
pub struct InteropMessage(Message);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("interior nul removed"));
}

fn fail(status: InteropStatus, message: impl Into<String>) -> InteropStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> InteropStatus + UnwindSafe) -> InteropStatus {
    match catch_unwind(f) {
        Ok(status) => {
            if status == InteropStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(InteropStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `data` must be null with `len == 0`, or point to `len` readable bytes.
unsafe fn slice<'a>(data: *const u8, len: usize) -> Option<&'a [u8]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(data, len))
    }
}

/// # Safety
/// `data` must be null or point to `N` readable bytes.
unsafe fn array<const N: usize>(data: *const u8) -> Option<[u8; N]> {
    (!data.is_null()).then(|| {
        let mut out = [0u8; N];
        ptr::copy_nonoverlapping(data, out.as_mut_ptr(), N);
        out
    })
}

/// # Safety
/// `out` must point to `src.len()` writable bytes.
unsafe fn write_bytes(out: *mut u8, src: &[u8]) {
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
}

/// Description of the last failure on this thread; empty after a success.
#[no_mangle]
pub extern "C" fn interop_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a buffer returned by this library. A null buffer is ignored.
///
/// # Safety
/// `buffer` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn interop_buffer_free(buffer: InteropBuffer) {
    if !buffer.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buffer.data, buffer.len)));
    }
}

/// Generates a key pair: deterministic from `seed` when `seeded`, else from
/// OS entropy.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn interop_keypair_generate(seed: u64, seeded: bool, out: *mut *mut InteropKeyPair) -> InteropStatus {
    guard(|| {
        if out.is_null() {
            return fail(InteropStatus::NullArgument, "out is null");
        }
        let keys = generate_keypair(seeded.then_some(seed));
        *out = Box::into_raw(Box::new(InteropKeyPair(keys)));
        InteropStatus::Ok
    })
}

/// # Safety
/// `keys` must be null or a handle from [`interop_keypair_generate`].
#[no_mangle]
pub unsafe extern "C" fn interop_keypair_free(keys: *mut InteropKeyPair) {
    if !keys.is_null() {
        drop(Box::from_raw(keys));
    }
}

/// Writes the 32-byte signing key and the 32-byte encryption key.
///
/// # Safety
/// `keys` must be a live handle; each output must hold 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn interop_keypair_public_keys(
    keys: *const InteropKeyPair,
    out_public_key: *mut u8,
    out_enc_public_key: *mut u8,
) -> InteropStatus {
    guard(|| {
        let Some(keys) = keys.as_ref() else { return fail(InteropStatus::NullArgument, "keys is null") };
        if out_public_key.is_null() || out_enc_public_key.is_null() {
            return fail(InteropStatus::NullArgument, "output is null");
        }
        write_bytes(out_public_key, &keys.0.public_key);
        write_bytes(out_enc_public_key, &keys.0.enc_public_key);
        InteropStatus::Ok
    })
}

/// Signs `message`; writes a 64-byte signature.
///
/// # Safety
/// `keys` must be a live handle, `message` must hold `message_len` bytes and
/// `out_signature` 64 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn interop_sign(
    keys: *const InteropKeyPair,
    message: *const u8,
    message_len: usize,
    out_signature: *mut u8,
) -> InteropStatus {
    guard(|| {
        let Some(keys) = keys.as_ref() else { return fail(InteropStatus::NullArgument, "keys is null") };
        let Some(message) = slice(message, message_len) else {
            return fail(InteropStatus::NullArgument, "message is null");
        };
        if out_signature.is_null() {
            return fail(InteropStatus::NullArgument, "out_signature is null");
        }
        write_bytes(out_signature, &keys.0.sign(message));
        InteropStatus::Ok
    })
}

/// Checks a signature. A malformed public key is an error; a wrong
/// signature is `Ok` with `*out_valid == false`.
///
/// # Safety
/// `public_key` must hold 32 bytes, `signature` 64, `message` `message_len`.
#[no_mangle]
pub unsafe extern "C" fn interop_verify(
    public_key: *const u8,
    message: *const u8,
    message_len: usize,
    signature: *const u8,
    out_valid: *mut bool,
) -> InteropStatus {
    guard(|| {
        let (Some(pk), Some(sig)) = (array::<32>(public_key), array::<64>(signature)) else {
            return fail(InteropStatus::NullArgument, "key or signature is null");
        };
        let Some(message) = slice(message, message_len) else {
            return fail(InteropStatus::NullArgument, "message is null");
        };
        if out_valid.is_null() {
            return fail(InteropStatus::NullArgument, "out_valid is null");
        }
        match verify(&pk, message, &sig) {
            Ok(valid) => {
                *out_valid = valid;
                InteropStatus::Ok
            }
            Err(e) => fail(InteropStatus::Crypto, e.to_string()),
        }
    })
}

/// Seals `plaintext` for the holder of `recipient_enc_public_key`. The
/// output is the canonical encoding of the ciphertext.
///
/// # Safety
/// `recipient_enc_public_key` must hold 32 bytes, `plaintext`
/// `plaintext_len`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn interop_hybrid_encrypt(
    recipient_enc_public_key: *const u8,
    plaintext: *const u8,
    plaintext_len: usize,
    out: *mut InteropBuffer,
) -> InteropStatus {
    guard(|| {
        let Some(pk) = array::<32>(recipient_enc_public_key) else {
            return fail(InteropStatus::NullArgument, "recipient key is null");
        };
        let Some(plaintext) = slice(plaintext, plaintext_len) else {
            return fail(InteropStatus::NullArgument, "plaintext is null");
        };
        if out.is_null() {
            return fail(InteropStatus::NullArgument, "out is null");
        }
        match hybrid_encrypt(&pk, plaintext) {
            Ok(ct) => {
                *out = InteropBuffer::from_vec(ct.to_canonical_bytes());
                InteropStatus::Ok
            }
            Err(e) => fail(InteropStatus::Crypto, e.to_string()),
        }
    })
}

/// Opens a ciphertext from [`interop_hybrid_encrypt`] with `keys`.
///
/// # Safety
/// `keys` must be a live handle, `ciphertext` must hold `ciphertext_len`
/// bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn interop_hybrid_decrypt(
    keys: *const InteropKeyPair,
    ciphertext: *const u8,
    ciphertext_len: usize,
    out: *mut InteropBuffer,
) -> InteropStatus {
    guard(|| {
        let Some(keys) = keys.as_ref() else { return fail(InteropStatus::NullArgument, "keys is null") };
        let Some(bytes) = slice(ciphertext, ciphertext_len) else {
            return fail(InteropStatus::NullArgument, "ciphertext is null");
        };
        if out.is_null() {
            return fail(InteropStatus::NullArgument, "out is null");
        }
        let ct = match HybridCiphertext::from_canonical_bytes(bytes) {
            Ok(ct) => ct,
            Err(e) => return fail(InteropStatus::Decode, e.to_string()),
        };
        match hybrid_decrypt(&keys.0.enc_private_key, &ct) {
            Ok(plain) => {
                *out = InteropBuffer::from_vec(plain);
                InteropStatus::Ok
            }
            Err(e) => fail(InteropStatus::Crypto, e.to_string()),
        }
    })
}

/// SHA-256 of a canonical byte string (a byte string encodes as itself).
///
/// # Safety
/// `data` must hold `len` bytes and `out_digest` 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn interop_canonical_digest(data: *const u8, len: usize, out_digest: *mut u8) -> InteropStatus {
    guard(|| {
        let Some(data) = slice(data, len) else { return fail(InteropStatus::NullArgument, "data is null") };
        if out_digest.is_null() {
            return fail(InteropStatus::NullArgument, "out_digest is null");
        }
        write_bytes(out_digest, &sha256(data));
        InteropStatus::Ok
    })
}

/// Decodes one complete frame.
///
/// # Safety
/// `frame` must hold `frame_len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn interop_message_decode(
    frame: *const u8,
    frame_len: usize,
    out: *mut *mut InteropMessage,
) -> InteropStatus {
    guard(|| {
        let Some(frame) = slice(frame, frame_len) else { return fail(InteropStatus::NullArgument, "frame is null") };
        if out.is_null() {
            return fail(InteropStatus::NullArgument, "out is null");
        }
        match decode(frame) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(InteropMessage(m)));
                InteropStatus::Ok
            }
            Err(e) => fail(InteropStatus::Decode, e.to_string()),
        }
    })
}

/// # Safety
/// `message` must be null or a handle from [`interop_message_decode`].
#[no_mangle]
pub unsafe extern "C" fn interop_message_free(message: *mut InteropMessage) {
    if !message.is_null() {
        drop(Box::from_raw(message));
    }
}

/// Re-encodes a decoded message into a frame.
///
/// # Safety
/// `message` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn interop_message_encode(message: *const InteropMessage, out: *mut InteropBuffer) -> InteropStatus {
    guard(|| {
        let Some(message) = message.as_ref() else { return fail(InteropStatus::NullArgument, "message is null") };
        if out.is_null() {
            return fail(InteropStatus::NullArgument, "out is null");
        }
        *out = InteropBuffer::from_vec(encode(&message.0));
        InteropStatus::Ok
    })
}

/// Writes the 16-byte request id and whether the message is a request.
///
/// # Safety
/// `message` must be a live handle; `out_request_id` must hold 16 bytes.
#[no_mangle]
pub unsafe extern "C" fn interop_message_request_id(
    message: *const InteropMessage,
    out_request_id: *mut u8,
    out_is_request: *mut bool,
) -> InteropStatus {
    guard(|| {
        let Some(message) = message.as_ref() else { return fail(InteropStatus::NullArgument, "message is null") };
        if out_request_id.is_null() || out_is_request.is_null() {
            return fail(InteropStatus::NullArgument, "output is null");
        }
        write_bytes(out_request_id, &message.0.request_id());
        *out_is_request = matches!(message.0, Message::Request(_));
        InteropStatus::Ok
    })
}

/// The digest attestations bind to. Fails for responses.
///
/// # Safety
/// `message` must be a live handle; `out_digest` must hold 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn interop_request_digest(message: *const InteropMessage, out_digest: *mut u8) -> InteropStatus {
    guard(|| {
        let Some(message) = message.as_ref() else { return fail(InteropStatus::NullArgument, "message is null") };
        if out_digest.is_null() {
            return fail(InteropStatus::NullArgument, "out_digest is null");
        }
        match &message.0 {
            Message::Request(r) => {
                write_bytes(out_digest, &r.digest());
                InteropStatus::Ok
            }
            Message::Response(_) => fail(InteropStatus::InvalidArgument, "message is a response"),
        }
    })
}

/// Runs the trade scenario in process. `attack` is one of `none`, `tamper`,
/// `replay`, `unauthorized`, `censor`. Writes the JSON-lines transcript and
/// whether every expected verdict was reached.
///
/// # Safety
/// `attack` must be a nul-terminated string; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn interop_scenario_run(
    seed: u64,
    attack: *const c_char,
    deadline_ms: u64,
    out_transcript: *mut InteropBuffer,
    out_expected: *mut bool,
) -> InteropStatus {
    guard(|| {
        if attack.is_null() || out_transcript.is_null() || out_expected.is_null() {
            return fail(InteropStatus::NullArgument, "argument is null");
        }
        let attack: Attack = match CStr::from_ptr(attack).to_str().ok().map(str::parse) {
            Some(Ok(a)) => a,
            _ => return fail(InteropStatus::InvalidArgument, "unknown attack"),
        };
        let spec = ScenarioSpec { seed, attack, deadline: Duration::from_millis(deadline_ms), relay_binary: None };
        match run_scenario(spec) {
            Ok(report) => {
                *out_expected = report.transcript.expected_reached;
                *out_transcript = InteropBuffer::from_vec(report.transcript.to_jsonl().into_bytes());
                InteropStatus::Ok
            }
            Err(e) => fail(InteropStatus::Scenario, e.to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(interop_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn sign_and_verify_round_trip() {
        unsafe {
            let mut keys = ptr::null_mut();
            assert_eq!(interop_keypair_generate(7, true, &mut keys), InteropStatus::Ok);
            let (mut pk, mut epk) = ([0u8; 32], [0u8; 32]);
            assert_eq!(interop_keypair_public_keys(keys, pk.as_mut_ptr(), epk.as_mut_ptr()), InteropStatus::Ok);
            let msg = b"hello";
            let mut sig = [0u8; 64];
            assert_eq!(interop_sign(keys, msg.as_ptr(), msg.len(), sig.as_mut_ptr()), InteropStatus::Ok);
            let mut valid = false;
            assert_eq!(interop_verify(pk.as_ptr(), msg.as_ptr(), msg.len(), sig.as_ptr(), &mut valid), InteropStatus::Ok);
            assert!(valid);
            sig[0] ^= 1;
            assert_eq!(interop_verify(pk.as_ptr(), msg.as_ptr(), msg.len(), sig.as_ptr(), &mut valid), InteropStatus::Ok);
            assert!(!valid);
            interop_keypair_free(keys);
        }
    }

    #[test]
    fn null_arguments_are_reported() {
        unsafe {
            assert_eq!(interop_keypair_generate(0, false, ptr::null_mut()), InteropStatus::NullArgument);
            assert_eq!(last_error(), "out is null");
            let mut out = [0u8; 32];
            assert_eq!(interop_canonical_digest(ptr::null(), 0, out.as_mut_ptr()), InteropStatus::Ok);
            assert_eq!(last_error(), "");
            assert_eq!(interop_canonical_digest(ptr::null(), 3, out.as_mut_ptr()), InteropStatus::NullArgument);
        }
    }

    #[test]
    fn hybrid_round_trip_and_tamper() {
        unsafe {
            let mut keys = ptr::null_mut();
            interop_keypair_generate(9, true, &mut keys);
            let (mut pk, mut epk) = ([0u8; 32], [0u8; 32]);
            interop_keypair_public_keys(keys, pk.as_mut_ptr(), epk.as_mut_ptr());
            let mut ct = InteropBuffer { data: ptr::null_mut(), len: 0 };
            let pt = b"sealed";
            assert_eq!(interop_hybrid_encrypt(epk.as_ptr(), pt.as_ptr(), pt.len(), &mut ct), InteropStatus::Ok);
            let mut plain = InteropBuffer { data: ptr::null_mut(), len: 0 };
            assert_eq!(interop_hybrid_decrypt(keys, ct.data, ct.len, &mut plain), InteropStatus::Ok);
            assert_eq!(std::slice::from_raw_parts(plain.data, plain.len), pt);
            interop_buffer_free(plain);
            *ct.data.add(ct.len - 1) ^= 1;
            let mut again = InteropBuffer { data: ptr::null_mut(), len: 0 };
            assert_eq!(interop_hybrid_decrypt(keys, ct.data, ct.len, &mut again), InteropStatus::Crypto);
            interop_buffer_free(ct);
            interop_keypair_free(keys);
        }
    }
}
