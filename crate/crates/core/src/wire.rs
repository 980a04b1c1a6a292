//! Relay wire messages and framing.
//!
//! A frame is `[len: u32 BE][tag: u8][body]` where `len` counts the tag and
//! body, tag 1 is a [`QueryRequest`] and tag 2 a [`QueryResponse`], and the
//! body is the canonical encoding. Frames above [`MAX_FRAME_LEN`] are
//! rejected before any allocation.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::codec::{sha256, Canonical, CodecError, Digest, StructReader, StructWriter};
use crate::crypto::{Certificate, HybridCiphertext};
use crate::system::VerificationPolicy;

pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;
pub const TAG_REQUEST: u8 = 1;
pub const TAG_RESPONSE: u8 = 2;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("truncated frame")]
    Truncated,
    #[error("frame length {0} exceeds the 16 MiB limit")]
    Oversize(usize),
    #[error("empty frame")]
    Empty,
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("trailing bytes after frame")]
    TrailingBytes,
    #[error("malformed body: {0}")]
    Body(#[from] CodecError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRequest {
    pub request_id: [u8; 16],
    pub dest_network_id: String,
    pub ledger_id: String,
    pub contract_name: String,
    pub function_name: String,
    pub args: Vec<Vec<u8>>,
    pub verification_policy: VerificationPolicy,
    pub requestor_cert: Certificate,
    pub nonce: [u8; 16],
}

impl QueryRequest {
    /// Binds attestations to what was executed: destination, ledger,
    /// contract, function, args and nonce. Request id, requestor and policy
    /// are excluded.
    pub fn digest(&self) -> Digest {
        request_digest_parts(
            &self.dest_network_id,
            &self.ledger_id,
            &self.contract_name,
            &self.function_name,
            &self.args,
            &self.nonce,
        )
    }
}

pub fn request_digest(request: &QueryRequest) -> Digest {
    request.digest()
}

/// [`QueryRequest::digest`] from loose fields, for contracts that rebuild
/// the expected request.
pub fn request_digest_parts(
    dest_network_id: &str,
    ledger_id: &str,
    contract_name: &str,
    function_name: &str,
    args: &[Vec<u8>],
    nonce: &[u8; 16],
) -> Digest {
    let mut out = Vec::new();
    StructWriter::new(&mut out)
        .str(1, dest_network_id)
        .str(2, ledger_id)
        .str(3, contract_name)
        .str(4, function_name)
        .bytes_list(5, args)
        .raw(6, nonce);
    sha256(&out)
}

impl Canonical for QueryRequest {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .raw(1, &self.request_id)
            .str(2, &self.dest_network_id)
            .str(3, &self.ledger_id)
            .str(4, &self.contract_name)
            .str(5, &self.function_name)
            .bytes_list(6, &self.args)
            .value(7, &self.verification_policy)
            .value(8, &self.requestor_cert)
            .raw(9, &self.nonce);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let req = QueryRequest {
            request_id: r.fixed(1)?,
            dest_network_id: r.string(2)?,
            ledger_id: r.string(3)?,
            contract_name: r.string(4)?,
            function_name: r.string(5)?,
            args: r.bytes_list(6)?,
            verification_policy: r.value(7)?,
            requestor_cert: r.value(8)?,
            nonce: r.fixed(9)?,
        };
        r.finish()?;
        Ok(req)
    }
}

/// One peer's contribution to a proof. Only the certificate is readable
/// without the requestor's key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attestation {
    pub signer_cert: Certificate,
    pub encrypted_metadata: HybridCiphertext,
    pub signature: [u8; 64],
}

impl Canonical for Attestation {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .value(1, &self.signer_cert)
            .value(2, &self.encrypted_metadata)
            .raw(3, &self.signature);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let a = Attestation { signer_cert: r.value(1)?, encrypted_metadata: r.value(2)?, signature: r.fixed(3)? };
        r.finish()?;
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Denied,
    Error,
}

impl Status {
    fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Denied => 1,
            Status::Error => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, CodecError> {
        match code {
            0 => Ok(Status::Ok),
            1 => Ok(Status::Denied),
            2 => Ok(Status::Error),
            other => Err(CodecError::InvalidEnum(other)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Denied => "denied",
            Status::Error => "error",
        }
    }
}

/// Successful payload: the sealed result and its proof.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedResult {
    pub encrypted_result: HybridCiphertext,
    pub attestations: Vec<Attestation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResponse {
    pub request_id: [u8; 16],
    pub status: Status,
    pub reason: String,
    /// Present iff `status` is `Ok`; then `attestations` is nonempty.
    pub payload: Option<SealedResult>,
}

impl QueryResponse {
    pub fn ok(request_id: [u8; 16], encrypted_result: HybridCiphertext, attestations: Vec<Attestation>) -> Self {
        assert!(!attestations.is_empty(), "ok response needs attestations");
        Self {
            request_id,
            status: Status::Ok,
            reason: String::new(),
            payload: Some(SealedResult { encrypted_result, attestations }),
        }
    }

    pub fn denied(request_id: [u8; 16], reason: impl Into<String>) -> Self {
        Self { request_id, status: Status::Denied, reason: reason.into(), payload: None }
    }

    pub fn error(request_id: [u8; 16], reason: impl Into<String>) -> Self {
        Self { request_id, status: Status::Error, reason: reason.into(), payload: None }
    }

    pub fn attestation_count(&self) -> usize {
        self.payload.as_ref().map_or(0, |p| p.attestations.len())
    }
}

impl Canonical for QueryResponse {
    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut w = StructWriter::new(out);
        w.raw(1, &self.request_id).u8(2, self.status.code()).str(3, &self.reason);
        if let Some(p) = &self.payload {
            w.value(4, &p.encrypted_result).list(5, &p.attestations);
        }
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let request_id = r.fixed(1)?;
        let status = Status::from_code(r.u8(2)?)?;
        let reason = r.string(3)?;
        let encrypted_result: Option<HybridCiphertext> = r.opt_value(4)?;
        let attestations: Option<Vec<Attestation>> = r.opt_raw(5)?.map(crate::codec::decode_list).transpose()?;
        r.finish()?;
        let payload = match (status, encrypted_result, attestations) {
            (Status::Ok, Some(encrypted_result), Some(attestations)) if !attestations.is_empty() => {
                Some(SealedResult { encrypted_result, attestations })
            }
            (Status::Ok, _, _) => return Err(CodecError::Invalid("ok response without result and attestations")),
            (_, None, None) => None,
            _ => return Err(CodecError::Invalid("non-ok response carries a payload")),
        };
        Ok(QueryResponse { request_id, status, reason, payload })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Request(QueryRequest),
    Response(QueryResponse),
}

impl Message {
    pub fn request_id(&self) -> [u8; 16] {
        match self {
            Message::Request(r) => r.request_id,
            Message::Response(r) => r.request_id,
        }
    }
}

pub fn encode(message: &Message) -> Vec<u8> {
    let (tag, body) = match message {
        Message::Request(r) => (TAG_REQUEST, r.to_canonical_bytes()),
        Message::Response(r) => (TAG_RESPONSE, r.to_canonical_bytes()),
    };
    let mut out = Vec::with_capacity(5 + body.len());
    out.extend_from_slice(&((body.len() + 1) as u32).to_be_bytes());
    out.push(tag);
    out.extend_from_slice(&body);
    out
}

/// Length announced by a frame header, validated against the limit.
pub fn frame_len(header: [u8; 4]) -> Result<usize, WireError> {
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        Err(WireError::Oversize(len))
    } else if len == 0 {
        Err(WireError::Empty)
    } else {
        Ok(len)
    }
}

/// Decodes exactly one complete frame.
pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
    let header: [u8; 4] = bytes.get(..4).ok_or(WireError::Truncated)?.try_into().expect("4 bytes");
    let len = frame_len(header)?;
    let rest = &bytes[4..];
    if rest.len() < len {
        return Err(WireError::Truncated);
    }
    if rest.len() > len {
        return Err(WireError::TrailingBytes);
    }
    decode_payload(rest)
}

/// Decodes `tag ‖ body` (a frame without its length prefix).
pub fn decode_payload(payload: &[u8]) -> Result<Message, WireError> {
    let (&tag, body) = payload.split_first().ok_or(WireError::Empty)?;
    match tag {
        TAG_REQUEST => Ok(Message::Request(QueryRequest::decode_from(body)?)),
        TAG_RESPONSE => Ok(Message::Response(QueryResponse::decode_from(body)?)),
        other => Err(WireError::UnknownTag(other)),
    }
}

pub fn write_frame<W: Write>(w: &mut W, message: &Message) -> Result<Vec<u8>, WireError> {
    let bytes = encode(message);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(bytes)
}

/// Blocking read of one frame; returns the message and the raw bytes read.
pub fn read_frame<R: Read>(r: &mut R) -> Result<(Message, Vec<u8>), WireError> {
    let mut header = [0u8; 4];
    r.read_exact(&mut header).map_err(eof_as_truncated)?;
    let len = frame_len(header)?;
    let mut raw = vec![0u8; 4 + len];
    raw[..4].copy_from_slice(&header);
    r.read_exact(&mut raw[4..]).map_err(eof_as_truncated)?;
    Ok((decode_payload(&raw[4..])?, raw))
}

fn eof_as_truncated(e: io::Error) -> WireError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        WireError::Truncated
    } else {
        WireError::Io(e)
    }
}

/// Incremental frame splitter for non-blocking or timeout-driven readers.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: Vec<u8>,
}

impl FrameBuffer {
    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Pops the next complete frame, if any. Oversize or zero-length
    /// headers fail immediately.
    pub fn next_frame(&mut self) -> Result<Option<Vec<u8>>, WireError> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let len = frame_len(self.buf[..4].try_into().expect("4 bytes"))?;
        if self.buf.len() < 4 + len {
            return Ok(None);
        }
        let rest = self.buf.split_off(4 + len);
        Ok(Some(std::mem::replace(&mut self.buf, rest)))
    }
}
