//! Interoperation system contracts and the records they keep on-ledger.
//!
//! * [`ecc::ExposureControl`] (source side): access rules and result sealing.
//! * [`cmdac::ConfigAcceptance`] (destination side): foreign network identities,
//!   verification policies, proof validation and the nonce registry.
//!
//! World-state key prefixes: `rule/`, `config/`, `policy/`, `nonce/`.

pub mod cmdac;
pub mod ecc;
pub mod proof;

use std::collections::BTreeMap;

use crate::codec::{Canonical, CodecError, Digest, StructReader, StructWriter};
use crate::crypto::{Certificate, PublicKey};

pub use cmdac::ConfigAcceptance;
pub use ecc::ExposureControl;
pub use proof::{check_proof, ProofRejection, ProofVerdict};

pub const ECC: &str = "ECC";
pub const CMDAC: &str = "CMDAC";

pub const RULE_PREFIX: &[u8] = b"rule/";
pub const CONFIG_PREFIX: &[u8] = b"config/";
pub const POLICY_PREFIX: &[u8] = b"policy/";
pub const NONCE_PREFIX: &[u8] = b"nonce/";

/// Policy language version: a conjunction of organizations.
pub const POLICY_VERSION: u8 = 1;

/// Org-level exposure rule: members of `org_id` in `network_id` may call
/// `contract_name.function_name`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccessRule {
    pub network_id: String,
    pub org_id: String,
    pub contract_name: String,
    pub function_name: String,
}

impl AccessRule {
    pub fn new(network_id: &str, org_id: &str, contract_name: &str, function_name: &str) -> Self {
        Self {
            network_id: network_id.into(),
            org_id: org_id.into(),
            contract_name: contract_name.into(),
            function_name: function_name.into(),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        [&self.network_id, &self.org_id, &self.contract_name, &self.function_name]
            .iter()
            .all(|f| !f.is_empty())
    }

    pub fn storage_key(&self) -> Vec<u8> {
        [RULE_PREFIX, &self.to_canonical_bytes()].concat()
    }
}

impl Canonical for AccessRule {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .str(1, &self.network_id)
            .str(2, &self.org_id)
            .str(3, &self.contract_name)
            .str(4, &self.function_name);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let rule = AccessRule {
            network_id: r.string(1)?,
            org_id: r.string(2)?,
            contract_name: r.string(3)?,
            function_name: r.string(4)?,
        };
        r.finish()?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrgRoot {
    pub org_id: String,
    pub root_public_key: PublicKey,
    pub root_enc_public_key: PublicKey,
}

impl Canonical for OrgRoot {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .str(1, &self.org_id)
            .raw(2, &self.root_public_key)
            .raw(3, &self.root_enc_public_key);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let org = OrgRoot { org_id: r.string(1)?, root_public_key: r.fixed(2)?, root_enc_public_key: r.fixed(3)? };
        r.finish()?;
        Ok(org)
    }
}

/// Identity roots of a network, as recorded on another network's ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForeignNetworkConfig {
    pub network_id: String,
    pub orgs: Vec<OrgRoot>,
}

impl ForeignNetworkConfig {
    pub fn roots(&self) -> BTreeMap<String, PublicKey> {
        self.orgs.iter().map(|o| (o.org_id.clone(), o.root_public_key)).collect()
    }

    pub fn has_org(&self, org_id: &str) -> bool {
        self.orgs.iter().any(|o| o.org_id == org_id)
    }

    pub fn from_network(network: &crate::ledger::Network) -> Self {
        Self {
            network_id: network.network_id().to_string(),
            orgs: network
                .org_ids()
                .iter()
                .map(|org| {
                    let auth = network.authority(org).expect("org listed by network");
                    OrgRoot {
                        org_id: org.clone(),
                        root_public_key: auth.root_keypair.public_key,
                        root_enc_public_key: auth.root_keypair.enc_public_key,
                    }
                })
                .collect(),
        }
    }
}

impl Canonical for ForeignNetworkConfig {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out).str(1, &self.network_id).list(2, &self.orgs);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let cfg = ForeignNetworkConfig { network_id: r.string(1)?, orgs: r.list(2)? };
        r.finish()?;
        Ok(cfg)
    }
}

/// Destination-side acceptance criteria: one attesting peer from each
/// listed org of the foreign network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationPolicy {
    pub version: u8,
    pub policy_id: String,
    pub network_id: String,
    pub required_orgs: Vec<String>,
}

impl VerificationPolicy {
    pub fn new<S: Into<String>>(policy_id: &str, network_id: &str, orgs: impl IntoIterator<Item = S>) -> Self {
        Self {
            version: POLICY_VERSION,
            policy_id: policy_id.into(),
            network_id: network_id.into(),
            required_orgs: orgs.into_iter().map(Into::into).collect(),
        }
    }
}

impl Canonical for VerificationPolicy {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .u8(1, self.version)
            .str(2, &self.policy_id)
            .str(3, &self.network_id)
            .str_list(4, &self.required_orgs);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let p = VerificationPolicy {
            version: r.u8(1)?,
            policy_id: r.string(2)?,
            network_id: r.string(3)?,
            required_orgs: r.str_list(4)?,
        };
        r.finish()?;
        Ok(p)
    }
}

/// What a source peer signs (and then encrypts for the requestor).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttestationMetadata {
    pub network_id: String,
    pub peer_id: String,
    pub org_id: String,
    pub request_digest: Digest,
    pub nonce: [u8; 16],
    pub result: Vec<u8>,
}

impl Canonical for AttestationMetadata {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .str(1, &self.network_id)
            .str(2, &self.peer_id)
            .str(3, &self.org_id)
            .raw(4, &self.request_digest)
            .raw(5, &self.nonce)
            .raw(6, &self.result);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let m = AttestationMetadata {
            network_id: r.string(1)?,
            peer_id: r.string(2)?,
            org_id: r.string(3)?,
            request_digest: r.fixed(4)?,
            nonce: r.fixed(5)?,
            result: r.bytes(6)?,
        };
        r.finish()?;
        Ok(m)
    }
}

/// One decrypted attestation: the unit of a plaintext proof.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofEntry {
    pub signer_cert: Certificate,
    pub metadata: AttestationMetadata,
    pub signature: [u8; 64],
}

impl Canonical for ProofEntry {
    fn encode_into(&self, out: &mut Vec<u8>) {
        StructWriter::new(out)
            .value(1, &self.signer_cert)
            .value(2, &self.metadata)
            .raw(3, &self.signature);
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let e = ProofEntry { signer_cert: r.value(1)?, metadata: r.value(2)?, signature: r.fixed(3)? };
        r.finish()?;
        Ok(e)
    }
}

/// Canonical encoding of a proof (list of entries), as carried in
/// transaction arguments.
pub fn encode_proof(entries: &[ProofEntry]) -> Vec<u8> {
    crate::codec::encode_list_bytes(entries)
}

pub fn decode_proof(bytes: &[u8]) -> Result<Vec<ProofEntry>, CodecError> {
    crate::codec::decode_list(bytes)
}

/// Result of an exposure-control check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessDecision {
    Allow,
    Deny(String),
}

impl Canonical for AccessDecision {
    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut w = StructWriter::new(out);
        match self {
            AccessDecision::Allow => w.u8(1, 1),
            AccessDecision::Deny(reason) => w.u8(1, 0).str(2, reason),
        };
    }

    fn decode_from(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = StructReader::new(bytes);
        let d = match r.u8(1)? {
            1 => AccessDecision::Allow,
            0 => AccessDecision::Deny(r.string(2)?),
            other => return Err(CodecError::InvalidEnum(other)),
        };
        r.finish()?;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_key_is_prefixed_and_injective() {
        let a = AccessRule::new("we-trade", "seller-org", "TradeLensCC", "GetBillOfLading");
        let b = AccessRule::new("we-trade", "seller-orgT", "radeLensCC", "GetBillOfLading");
        assert!(a.storage_key().starts_with(RULE_PREFIX));
        assert_ne!(a.storage_key(), b.storage_key());
        assert!(!AccessRule::new("we-trade", "", "c", "f").is_well_formed());
    }

    #[test]
    fn decision_round_trip() {
        for d in [AccessDecision::Allow, AccessDecision::Deny("no-rule".into())] {
            assert_eq!(AccessDecision::from_canonical_bytes(&d.to_canonical_bytes()).unwrap(), d);
        }
    }
}
