//! Proof validation clauses shared by the acceptance contract and the
//! client pre-flight check.

use thiserror::Error;

use crate::codec::{Canonical, CodecError, Digest, StructReader, StructWriter};
use crate::crypto::{check_chain, verifies, SubjectKind};

use super::{ForeignNetworkConfig, ProofEntry, VerificationPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum ProofRejection {
    #[error("signature")]
    Signature,
    #[error("chain")]
    Chain,
    #[error("identity-mismatch")]
    IdentityMismatch,
    #[error("result-mismatch")]
    ResultMismatch,
    #[error("digest-mismatch")]
    DigestMismatch,
    #[error("nonce-mismatch")]
    NonceMismatch,
    #[error("policy-unsatisfied")]
    PolicyUnsatisfied,
    #[error("nonce-replayed")]
    NonceReplayed,
}

impl ProofRejection {
    pub const ALL: [ProofRejection; 8] = [
        ProofRejection::Signature,
        ProofRejection::Chain,
        ProofRejection::IdentityMismatch,
        ProofRejection::ResultMismatch,
        ProofRejection::DigestMismatch,
        ProofRejection::NonceMismatch,
        ProofRejection::PolicyUnsatisfied,
        ProofRejection::NonceReplayed,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ProofRejection::Signature => "signature",
            ProofRejection::Chain => "chain",
            ProofRejection::IdentityMismatch => "identity-mismatch",
            ProofRejection::ResultMismatch => "result-mismatch",
            ProofRejection::DigestMismatch => "digest-mismatch",
            ProofRejection::NonceMismatch => "nonce-mismatch",
            ProofRejection::PolicyUnsatisfied => "policy-unsatisfied",
            ProofRejection::NonceReplayed => "nonce-replayed",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofVerdict {
    Valid,
    Invalid(ProofRejection),
}

impl ProofVerdict {
    pub fn is_valid(self) -> bool {
        self == ProofVerdict::Valid
    }
}

impl From<Result<(), ProofRejection>> for ProofVerdict {
    fn from(r: Result<(), ProofRejection>) -> Self {
        match r {
            Ok(()) => ProofVerdict::Valid,
            Err(e) => ProofVerdict::Invalid(e),
        }
    }
}

impl Canonical for ProofVerdict {
    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut w = StructWriter::new(out);
        match self {
            ProofVerdict::Valid => w.u8(1, 1),
            ProofVerdict::Invalid(r) => w.u8(1, 0).str(2, r.code()),
        };
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let v = match r.u8(1)? {
            1 => ProofVerdict::Valid,
            0 => {
                let code = r.string(2)?;
                ProofVerdict::Invalid(ProofRejection::from_code(&code).ok_or(CodecError::Invalid("unknown rejection code"))?)
            }
            other => return Err(CodecError::InvalidEnum(other)),
        };
        r.finish()?;
        Ok(v)
    }
}

/// Clause (g): every required org is covered by at least one attestation.
pub fn policy_covered(policy: &VerificationPolicy, entries: &[ProofEntry]) -> bool {
    policy
        .required_orgs
        .iter()
        .all(|org| entries.iter().any(|e| &e.metadata.org_id == org))
}

/// Runs clauses (a) through (g) in order; the first failing clause names
/// the rejection. Replay (h) needs ledger state and is checked by the
/// acceptance contract.
pub fn check_proof(
    config: &ForeignNetworkConfig,
    policy: &VerificationPolicy,
    request_digest: &Digest,
    nonce: &[u8; 16],
    result: &[u8],
    entries: &[ProofEntry],
) -> Result<(), ProofRejection> {
    // (a)
    if !entries
        .iter()
        .all(|e| verifies(&e.signer_cert.public_key, &e.metadata.to_canonical_bytes(), &e.signature))
    {
        return Err(ProofRejection::Signature);
    }
    // (b)
    let roots = config.roots();
    let chained = entries.iter().all(|e| {
        roots.get(&e.metadata.org_id).is_some_and(|root| {
            let single = [(e.metadata.org_id.clone(), *root)].into_iter().collect();
            check_chain(&e.signer_cert, &single).is_ok()
        })
    });
    if !chained {
        return Err(ProofRejection::Chain);
    }
    // (c)
    let identities_match = entries.iter().all(|e| {
        let (c, m) = (&e.signer_cert, &e.metadata);
        c.subject_kind == SubjectKind::Peer
            && c.subject_id == m.peer_id
            && c.org_id == m.org_id
            && c.network_id == m.network_id
            && m.network_id == policy.network_id
            && m.network_id == config.network_id
    });
    if !identities_match {
        return Err(ProofRejection::IdentityMismatch);
    }
    // (d)
    if !entries.iter().all(|e| e.metadata.result == result) {
        return Err(ProofRejection::ResultMismatch);
    }
    // (e)
    if !entries.iter().all(|e| &e.metadata.request_digest == request_digest) {
        return Err(ProofRejection::DigestMismatch);
    }
    // (f)
    if !entries.iter().all(|e| &e.metadata.nonce == nonce) {
        return Err(ProofRejection::NonceMismatch);
    }
    // (g)
    if !policy_covered(policy, entries) {
        return Err(ProofRejection::PolicyUnsatisfied);
    }
    Ok(())
}
