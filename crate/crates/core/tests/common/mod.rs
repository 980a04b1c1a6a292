//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use proptest::prelude::*;

use interop_core::codec::{Canonical, Digest};
use interop_core::crypto::{Certificate, HybridCiphertext, KeyPair, SubjectKind};
use interop_core::ledger::{EndorsementPolicy, Network};
use interop_core::system::cmdac::{self, ConfigAcceptance};
use interop_core::system::ecc::ExposureControl;
use interop_core::system::{AttestationMetadata, ForeignNetworkConfig, ProofEntry, VerificationPolicy, CMDAC, ECC};
use interop_core::wire::{Attestation, Message, QueryRequest, QueryResponse};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

/// `name hex` lines of a fixture file.
pub fn hex_fixtures(name: &str) -> BTreeMap<String, Vec<u8>> {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture readable");
    text.lines()
        .filter_map(|l| l.split_once(' '))
        .map(|(k, v)| (k.to_string(), hex::decode(v.trim()).expect("fixture is hex")))
        .collect()
}

/// Certificate with filler keys and signature, laid out like the oracle's.
pub fn filler_cert(subject: &str, kind: SubjectKind, org: &str, net: &str, fill: u8) -> Certificate {
    Certificate {
        subject_id: subject.into(),
        subject_kind: kind,
        org_id: org.into(),
        network_id: net.into(),
        public_key: [fill; 32],
        enc_public_key: [fill + 1; 32],
        issuer_org_id: org.into(),
        signature: [fill + 2; 64],
    }
}

pub fn filler_ciphertext(fill: u8, body: &[u8]) -> HybridCiphertext {
    HybridCiphertext { ephemeral_public_key: [fill; 32], nonce_iv: [fill + 1; 12], body: body.to_vec() }
}

// ---- generators -----------------------------------------------------------

fn text() -> impl Strategy<Value = String> {
    "\\PC{0,12}"
}

fn blob(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(any::<u8>(), 0..max)
}

pub fn arb_cert() -> impl Strategy<Value = Certificate> {
    (
        text(),
        prop_oneof![Just(SubjectKind::Authority), Just(SubjectKind::Peer), Just(SubjectKind::Client)],
        text(),
        text(),
        any::<[u8; 32]>(),
        any::<[u8; 32]>(),
        text(),
        prop::collection::vec(any::<u8>(), 64),
    )
        .prop_map(|(subject_id, subject_kind, org_id, network_id, public_key, enc_public_key, issuer_org_id, sig)| {
            Certificate {
                subject_id,
                subject_kind,
                org_id,
                network_id,
                public_key,
                enc_public_key,
                issuer_org_id,
                signature: sig.try_into().expect("64 bytes"),
            }
        })
}

pub fn arb_ciphertext() -> impl Strategy<Value = HybridCiphertext> {
    (any::<[u8; 32]>(), any::<[u8; 12]>(), blob(96))
        .prop_map(|(ephemeral_public_key, nonce_iv, body)| HybridCiphertext { ephemeral_public_key, nonce_iv, body })
}

pub fn arb_policy() -> impl Strategy<Value = VerificationPolicy> {
    (any::<u8>(), text(), text(), prop::collection::vec(text(), 0..4)).prop_map(
        |(version, policy_id, network_id, required_orgs)| VerificationPolicy { version, policy_id, network_id, required_orgs },
    )
}

pub fn arb_request() -> impl Strategy<Value = QueryRequest> {
    (
        any::<[u8; 16]>(),
        (text(), text(), text(), text()),
        prop::collection::vec(blob(24), 0..5),
        arb_policy(),
        arb_cert(),
        any::<[u8; 16]>(),
    )
        .prop_map(|(request_id, (dest, ledger, contract, function), args, policy, cert, nonce)| QueryRequest {
            request_id,
            dest_network_id: dest,
            ledger_id: ledger,
            contract_name: contract,
            function_name: function,
            args,
            verification_policy: policy,
            requestor_cert: cert,
            nonce,
        })
}

pub fn arb_attestation() -> impl Strategy<Value = Attestation> {
    (arb_cert(), arb_ciphertext(), prop::collection::vec(any::<u8>(), 64)).prop_map(|(signer_cert, encrypted_metadata, sig)| {
        Attestation { signer_cert, encrypted_metadata, signature: sig.try_into().expect("64 bytes") }
    })
}

pub fn arb_response() -> impl Strategy<Value = QueryResponse> {
    prop_oneof![
        (any::<[u8; 16]>(), arb_ciphertext(), prop::collection::vec(arb_attestation(), 1..4))
            .prop_map(|(id, ct, atts)| QueryResponse::ok(id, ct, atts)),
        (any::<[u8; 16]>(), text()).prop_map(|(id, r)| QueryResponse::denied(id, r)),
        (any::<[u8; 16]>(), text()).prop_map(|(id, r)| QueryResponse::error(id, r)),
    ]
}

pub fn arb_message() -> impl Strategy<Value = Message> {
    prop_oneof![arb_request().prop_map(Message::Request), arb_response().prop_map(Message::Response)]
}

// ---- small networks -------------------------------------------------------

/// Network with the two system contracts deployed, endorsed by every org.
pub fn network_with_system(id: &str, orgs: &[&str], peers_per_org: usize, seed: u64) -> Arc<Network> {
    let net = Arc::new(Network::with_orgs(id, orgs, peers_per_org, Some(seed)).expect("network"));
    let policy = EndorsementPolicy::new(orgs.iter().copied());
    net.deploy_contract(CMDAC, Arc::new(ConfigAcceptance), policy.clone()).expect("deploy CMDAC");
    net.deploy_contract(ECC, Arc::new(ExposureControl), policy).expect("deploy ECC");
    net
}

/// A certificate issued by `org` of `net` for a fresh key pair.
pub fn member(net: &Network, org: &str, subject: &str, kind: SubjectKind, seed: u64) -> (KeyPair, Certificate) {
    let keys = interop_core::crypto::generate_keypair(Some(seed));
    let cert = net.authority(org).expect("org exists").issue_certificate(subject, kind, &keys).expect("issue");
    (keys, cert)
}

pub fn nonce_of(n: u64) -> [u8; 16] {
    let mut out = [0u8; 16];
    out[8..].copy_from_slice(&n.to_be_bytes());
    out
}

/// Records `foreign`'s identity roots on `net`.
pub fn record_config(net: &Network, admin: &Certificate, foreign: &Network, nonce: u64) {
    let config = ForeignNetworkConfig::from_network(foreign).to_canonical_bytes();
    net.submit_transaction(CMDAC, cmdac::RECORD_CONFIG, &[config], admin, nonce_of(nonce)).expect("record config");
}

pub fn record_policy(net: &Network, admin: &Certificate, policy: &VerificationPolicy, nonce: u64) {
    net.submit_transaction(CMDAC, cmdac::RECORD_POLICY, &[policy.to_canonical_bytes()], admin, nonce_of(nonce))
        .expect("record policy");
}

/// A correctly signed attestation from `peer_id` of `source`.
pub fn signed_entry(source: &Network, peer_id: &str, digest: Digest, nonce: [u8; 16], result: &[u8]) -> ProofEntry {
    let info = source.peers().into_iter().find(|p| p.peer_id == peer_id).expect("peer exists");
    let metadata = AttestationMetadata {
        network_id: source.network_id().to_string(),
        peer_id: info.peer_id.clone(),
        org_id: info.org_id.clone(),
        request_digest: digest,
        nonce,
        result: result.to_vec(),
    };
    let signature = source.peer_sign(peer_id, &metadata.to_canonical_bytes()).expect("peer signs");
    ProofEntry { signer_cert: info.certificate, metadata, signature }
}
