//! Keys, certificates, signatures ("sig-v1": Ed25519) and hybrid
//! encryption ("enc-v1": X25519 ephemeral-static + HKDF-SHA256 +
//! ChaCha20-Poly1305).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use chacha20poly1305::aead::{Aead, Payload};
use chacha20poly1305::{ChaCha20Poly1305, KeyInit, Nonce};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::Sha256;
use thiserror::Error;
use x25519_dalek::{PublicKey as XPublicKey, StaticSecret};

use crate::codec::{Canonical, CodecError, StructReader, StructWriter};

pub const SIG_SUITE: &str = "sig-v1";
pub const ENC_SUITE: &str = "enc-v1";

pub type PublicKey = [u8; 32];
pub type Signature = [u8; 64];

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("malformed key")]
    MalformedKey,
    #[error("decryption failed: authentication error")]
    Decryption,
    #[error("subject {0:?} already issued by this authority")]
    DuplicateSubject(String),
    #[error("codec: {0}")]
    Codec(#[from] CodecError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public_key: PublicKey,
    pub private_key: [u8; 32],
    pub enc_public_key: PublicKey,
    pub enc_private_key: [u8; 32],
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &hex::encode(self.public_key))
            .field("enc_public_key", &hex::encode(self.enc_public_key))
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_rng<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut sig_seed = [0u8; 32];
        let mut enc_secret = [0u8; 32];
        rng.fill_bytes(&mut sig_seed);
        rng.fill_bytes(&mut enc_secret);
        Self::from_secrets(sig_seed, enc_secret)
    }

    pub fn from_secrets(sig_seed: [u8; 32], enc_secret: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&sig_seed);
        let secret = StaticSecret::from(enc_secret);
        Self {
            public_key: signing.verifying_key().to_bytes(),
            private_key: sig_seed,
            enc_public_key: XPublicKey::from(&secret).to_bytes(),
            enc_private_key: secret.to_bytes(),
        }
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        SigningKey::from_bytes(&self.private_key).sign(message).to_bytes()
    }
}

/// Fresh key pair. With a seed, the pair is a pure function of the seed.
pub fn generate_keypair(seed: Option<u64>) -> KeyPair {
    match seed {
        Some(seed) => KeyPair::from_rng(&mut ChaCha20Rng::seed_from_u64(seed)),
        None => KeyPair::from_rng(&mut rand::rngs::OsRng),
    }
}

impl Canonical for KeyPair {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .raw(1, &self.public_key)
            .raw(2, &self.private_key)
            .raw(3, &self.enc_public_key)
            .raw(4, &self.enc_private_key);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let public_key = r.fixed(1)?;
        let private_key = r.fixed(2)?;
        let enc_public_key = r.fixed(3)?;
        let enc_private_key = r.fixed(4)?;
        r.finish()?;
        let pair = KeyPair::from_secrets(private_key, enc_private_key);
        if pair.public_key != public_key || pair.enc_public_key != enc_public_key {
            return Err(CodecError::Invalid("public keys do not match private keys"));
        }
        Ok(pair)
    }
}

pub fn sign(private_key: &[u8], message: &[u8]) -> Result<Signature, CryptoError> {
    let seed: [u8; 32] = private_key.try_into().map_err(|_| CryptoError::MalformedKey)?;
    Ok(SigningKey::from_bytes(&seed).sign(message).to_bytes())
}

/// Strict Ed25519 verification. A malformed public key is an error; a
/// malformed signature simply does not verify.
pub fn verify(public_key: &[u8], message: &[u8], signature: &[u8]) -> Result<bool, CryptoError> {
    let pk: [u8; 32] = public_key.try_into().map_err(|_| CryptoError::MalformedKey)?;
    let key = VerifyingKey::from_bytes(&pk).map_err(|_| CryptoError::MalformedKey)?;
    let Ok(sig) = <[u8; 64]>::try_from(signature) else {
        return Ok(false);
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig);
    Ok(key.verify_strict(message, &sig).is_ok() && key.verify(message, &sig).is_ok())
}

/// `verify` with malformed keys folded into `false`.
pub fn verifies(public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
    verify(public_key, message, signature).unwrap_or(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubjectKind {
    Authority,
    Peer,
    Client,
}

impl SubjectKind {
    fn code(self) -> u8 {
        match self {
            SubjectKind::Authority => 0,
            SubjectKind::Peer => 1,
            SubjectKind::Client => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, CodecError> {
        match code {
            0 => Ok(SubjectKind::Authority),
            1 => Ok(SubjectKind::Peer),
            2 => Ok(SubjectKind::Client),
            other => Err(CodecError::InvalidEnum(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subject_id: String,
    pub subject_kind: SubjectKind,
    pub org_id: String,
    pub network_id: String,
    pub public_key: PublicKey,
    pub enc_public_key: PublicKey,
    pub issuer_org_id: String,
    pub signature: Signature,
}

impl Certificate {
    /// The bytes the issuer signs: every field but the signature.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_body(&mut StructWriter::new(&mut out));
        out
    }

    fn write_body(&self, w: &mut StructWriter<'_>) {
        w.str(1, &self.subject_id)
            .u8(2, self.subject_kind.code())
            .str(3, &self.org_id)
            .str(4, &self.network_id)
            .raw(5, &self.public_key)
            .raw(6, &self.enc_public_key)
            .str(7, &self.issuer_org_id);
    }

    pub fn save(&self, path: &Path) -> Result<(), CryptoError> {
        Ok(std::fs::write(path, self.to_canonical_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, CryptoError> {
        Ok(Self::from_canonical_bytes(&std::fs::read(path)?)?)
    }
}

impl Canonical for Certificate {
    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut w = StructWriter::new(out);
        self.write_body(&mut w);
        w.raw(8, &self.signature);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let cert = Certificate {
            subject_id: r.string(1)?,
            subject_kind: SubjectKind::from_code(r.u8(2)?)?,
            org_id: r.string(3)?,
            network_id: r.string(4)?,
            public_key: r.fixed(5)?,
            enc_public_key: r.fixed(6)?,
            issuer_org_id: r.string(7)?,
            signature: r.fixed(8)?,
        };
        r.finish()?;
        Ok(cert)
    }
}

pub fn save_keypair(path: &Path, keys: &KeyPair) -> Result<(), CryptoError> {
    Ok(std::fs::write(path, keys.to_canonical_bytes())?)
}

pub fn load_keypair(path: &Path) -> Result<KeyPair, CryptoError> {
    Ok(KeyPair::from_canonical_bytes(&std::fs::read(path)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("issuing organization not among trusted roots")]
    UnknownOrg,
    #[error("issuer does not match subject organization")]
    IssuerMismatch,
    #[error("issuer signature does not verify")]
    BadSignature,
}

impl ChainError {
    pub fn code(self) -> &'static str {
        match self {
            ChainError::UnknownOrg => "unknown-org",
            ChainError::IssuerMismatch => "issuer-mismatch",
            ChainError::BadSignature => "bad-signature",
        }
    }
}

/// Single-level chain check: org root → subject.
pub fn check_chain(cert: &Certificate, trusted_roots: &BTreeMap<String, PublicKey>) -> Result<(), ChainError> {
    if cert.org_id != cert.issuer_org_id {
        return Err(ChainError::IssuerMismatch);
    }
    let root = trusted_roots.get(&cert.org_id).ok_or(ChainError::UnknownOrg)?;
    if verifies(root, &cert.body_bytes(), &cert.signature) {
        Ok(())
    } else {
        Err(ChainError::BadSignature)
    }
}

pub fn validate_chain(cert: &Certificate, trusted_roots: &BTreeMap<String, PublicKey>) -> bool {
    check_chain(cert, trusted_roots).is_ok()
}

/// Per-organization identity authority.
pub struct RootAuthority {
    pub org_id: String,
    pub network_id: String,
    pub root_keypair: KeyPair,
    issued_serials: Mutex<BTreeMap<String, u64>>,
}

impl fmt::Debug for RootAuthority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RootAuthority")
            .field("org_id", &self.org_id)
            .field("network_id", &self.network_id)
            .field("root_keypair", &self.root_keypair)
            .finish_non_exhaustive()
    }
}

impl RootAuthority {
    pub fn new(org_id: impl Into<String>, network_id: impl Into<String>, root_keypair: KeyPair) -> Self {
        Self {
            org_id: org_id.into(),
            network_id: network_id.into(),
            root_keypair,
            issued_serials: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn root_public_key(&self) -> PublicKey {
        self.root_keypair.public_key
    }

    /// Self-signed certificate for the root key.
    pub fn root_certificate(&self) -> Certificate {
        self.sign_body(&self.org_id, SubjectKind::Authority, &self.root_keypair)
    }

    pub fn issue_certificate(
        &self,
        subject_id: &str,
        subject_kind: SubjectKind,
        keys: &KeyPair,
    ) -> Result<Certificate, CryptoError> {
        let mut serials = self.issued_serials.lock().expect("serial set poisoned");
        if serials.contains_key(subject_id) || subject_id == self.org_id {
            return Err(CryptoError::DuplicateSubject(subject_id.to_string()));
        }
        let serial = serials.len() as u64 + 1;
        serials.insert(subject_id.to_string(), serial);
        Ok(self.sign_body(subject_id, subject_kind, keys))
    }

    pub fn serial_of(&self, subject_id: &str) -> Option<u64> {
        self.issued_serials.lock().expect("serial set poisoned").get(subject_id).copied()
    }

    fn sign_body(&self, subject_id: &str, subject_kind: SubjectKind, keys: &KeyPair) -> Certificate {
        let mut cert = Certificate {
            subject_id: subject_id.to_string(),
            subject_kind,
            org_id: self.org_id.clone(),
            network_id: self.network_id.clone(),
            public_key: keys.public_key,
            enc_public_key: keys.enc_public_key,
            issuer_org_id: self.org_id.clone(),
            signature: [0; 64],
        };
        cert.signature = self.root_keypair.sign(&cert.body_bytes());
        cert
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HybridCiphertext {
    pub ephemeral_public_key: PublicKey,
    pub nonce_iv: [u8; 12],
    pub body: Vec<u8>,
}

impl Canonical for HybridCiphertext {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .raw(1, &self.ephemeral_public_key)
            .raw(2, &self.nonce_iv)
            .raw(3, &self.body);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let ct = HybridCiphertext {
            ephemeral_public_key: r.fixed(1)?,
            nonce_iv: r.fixed(2)?,
            body: r.bytes(3)?,
        };
        r.finish()?;
        Ok(ct)
    }
}

fn derive_key(shared: &[u8; 32], ephemeral: &PublicKey, recipient: &PublicKey) -> [u8; 32] {
    let mut info = Vec::with_capacity(6 + 64);
    info.extend_from_slice(ENC_SUITE.as_bytes());
    info.extend_from_slice(ephemeral);
    info.extend_from_slice(recipient);
    let mut key = [0u8; 32];
    Hkdf::<Sha256>::new(None, shared)
        .expand(&info, &mut key)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    key
}

pub fn hybrid_encrypt(recipient_enc_public_key: &PublicKey, plaintext: &[u8]) -> Result<HybridCiphertext, CryptoError> {
    hybrid_encrypt_with_rng(&mut rand::rngs::OsRng, recipient_enc_public_key, plaintext)
}

pub fn hybrid_encrypt_with_rng<R: RngCore + CryptoRng>(
    rng: &mut R,
    recipient_enc_public_key: &PublicKey,
    plaintext: &[u8],
) -> Result<HybridCiphertext, CryptoError> {
    let mut eph_secret = [0u8; 32];
    rng.fill_bytes(&mut eph_secret);
    let eph = StaticSecret::from(eph_secret);
    let ephemeral_public_key = XPublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&XPublicKey::from(*recipient_enc_public_key));
    if !shared.was_contributory() {
        return Err(CryptoError::MalformedKey);
    }
    let key = derive_key(shared.as_bytes(), &ephemeral_public_key, recipient_enc_public_key);
    let mut nonce_iv = [0u8; 12];
    rng.fill_bytes(&mut nonce_iv);
    let body = ChaCha20Poly1305::new(&key.into())
        .encrypt(Nonce::from_slice(&nonce_iv), Payload { msg: plaintext, aad: ENC_SUITE.as_bytes() })
        .map_err(|_| CryptoError::Decryption)?;
    Ok(HybridCiphertext { ephemeral_public_key, nonce_iv, body })
}

pub fn hybrid_decrypt(enc_private_key: &[u8; 32], ct: &HybridCiphertext) -> Result<Vec<u8>, CryptoError> {
    let secret = StaticSecret::from(*enc_private_key);
    let recipient = XPublicKey::from(&secret).to_bytes();
    let shared = secret.diffie_hellman(&XPublicKey::from(ct.ephemeral_public_key));
    if !shared.was_contributory() {
        return Err(CryptoError::Decryption);
    }
    let key = derive_key(shared.as_bytes(), &ct.ephemeral_public_key, &recipient);
    ChaCha20Poly1305::new(&key.into())
        .decrypt(Nonce::from_slice(&ct.nonce_iv), Payload { msg: &ct.body, aad: ENC_SUITE.as_bytes() })
        .map_err(|_| CryptoError::Decryption)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn roots(auth: &RootAuthority) -> BTreeMap<String, PublicKey> {
        BTreeMap::from([(auth.org_id.clone(), auth.root_public_key())])
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        assert_eq!(generate_keypair(Some(42)), generate_keypair(Some(42)));
        assert_ne!(generate_keypair(Some(42)).public_key, generate_keypair(Some(43)).public_key);
    }

    #[test]
    fn unseeded_generation_has_no_collisions() {
        let keys: HashSet<_> = (0..1000).map(|_| generate_keypair(None).public_key).collect();
        assert_eq!(keys.len(), 1000);
    }

    #[test]
    fn issue_and_validate() {
        let carrier = RootAuthority::new("carrier-org", "trade-lens", generate_keypair(Some(1)));
        let seller = RootAuthority::new("seller-org", "trade-lens", generate_keypair(Some(2)));
        let cert = carrier
            .issue_certificate("carrier-peer-0", SubjectKind::Peer, &generate_keypair(Some(3)))
            .unwrap();
        assert!(validate_chain(&cert, &roots(&carrier)));
        // Wrong root under the right org name.
        let forged_roots = BTreeMap::from([("carrier-org".to_string(), seller.root_public_key())]);
        assert_eq!(check_chain(&cert, &forged_roots), Err(ChainError::BadSignature));
        assert_eq!(check_chain(&cert, &roots(&seller)), Err(ChainError::UnknownOrg));
        assert_eq!(carrier.serial_of("carrier-peer-0"), Some(1));
    }

    #[test]
    fn duplicate_subject_rejected() {
        let auth = RootAuthority::new("seller-org", "trade-lens", generate_keypair(Some(1)));
        let keys = generate_keypair(Some(5));
        auth.issue_certificate("seller-peer-0", SubjectKind::Peer, &keys).unwrap();
        assert!(matches!(
            auth.issue_certificate("seller-peer-0", SubjectKind::Client, &keys),
            Err(CryptoError::DuplicateSubject(_))
        ));
    }

    #[test]
    fn root_certificate_validates_itself() {
        let auth = RootAuthority::new("seller-org", "trade-lens", generate_keypair(Some(1)));
        let root = auth.root_certificate();
        assert_eq!(root.public_key, auth.root_public_key());
        assert!(validate_chain(&root, &roots(&auth)));
    }

    #[test]
    fn every_body_bit_flip_breaks_the_chain() {
        let auth = RootAuthority::new("carrier-org", "trade-lens", generate_keypair(Some(1)));
        let cert = auth.issue_certificate("carrier-peer-0", SubjectKind::Peer, &generate_keypair(Some(2))).unwrap();
        let encoded = cert.to_canonical_bytes();
        let trusted = roots(&auth);
        for pos in 0..encoded.len() {
            for bit in 0..8 {
                let mut mutated = encoded.clone();
                mutated[pos] ^= 1 << bit;
                if let Ok(c) = Certificate::from_canonical_bytes(&mutated) {
                    assert!(!validate_chain(&c, &trusted), "flip at byte {pos} bit {bit} still validates");
                }
            }
        }
    }

    #[test]
    fn sign_verify_round_trip_and_failures() {
        let a = generate_keypair(Some(1));
        let b = generate_keypair(Some(2));
        let sig = sign(&a.private_key, b"").unwrap();
        assert!(verify(&a.public_key, b"", &sig).unwrap());
        assert!(!verify(&b.public_key, b"", &sig).unwrap());
        assert!(!verify(&a.public_key, b"x", &sig).unwrap());
        assert!(!verify(&a.public_key, b"", &sig[..63]).unwrap());
        assert!(matches!(sign(&[0u8; 31], b""), Err(CryptoError::MalformedKey)));
        assert!(matches!(verify(&[1u8; 5], b"", &sig), Err(CryptoError::MalformedKey)));
    }

    #[test]
    fn hybrid_round_trip_and_tamper() {
        let keys = generate_keypair(Some(9));
        let empty = hybrid_encrypt(&keys.enc_public_key, b"").unwrap();
        assert_eq!(hybrid_decrypt(&keys.enc_private_key, &empty).unwrap(), b"");

        let ct = hybrid_encrypt(&keys.enc_public_key, b"attack at dawn").unwrap();
        let mut flipped = ct.clone();
        flipped.body[0] ^= 1;
        assert!(matches!(hybrid_decrypt(&keys.enc_private_key, &flipped), Err(CryptoError::Decryption)));
        let other = generate_keypair(Some(10));
        assert!(hybrid_decrypt(&other.enc_private_key, &ct).is_err());
    }

    #[test]
    fn keypair_encoding_checks_consistency() {
        let keys = generate_keypair(Some(3));
        assert_eq!(KeyPair::from_canonical_bytes(&keys.to_canonical_bytes()).unwrap(), keys);
        let mut bad = keys.clone();
        bad.public_key = generate_keypair(Some(4)).public_key;
        assert!(KeyPair::from_canonical_bytes(&bad.to_canonical_bytes()).is_err());
    }
}
