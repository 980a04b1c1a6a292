mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use common::{member, network_with_system, nonce_of, record_config, record_policy, signed_entry};
use interop_core::codec::{canonical_digest, Canonical, Digest};
use interop_core::crypto::{hybrid_decrypt, Certificate, HybridCiphertext, RootAuthority, SubjectKind};
use interop_core::ledger::Network;
use interop_core::scenario::{bill_of_lading, BL_MARKER, PO_REF, STL_ORGS, SWT_ORGS};
use interop_core::system::cmdac::{self, nonce_key, validate_proof_args};
use interop_core::system::ecc::{self, check_access_args};
use interop_core::system::proof::policy_covered;
use interop_core::system::{
    AccessDecision, AccessRule, ProofEntry, ProofRejection, ProofVerdict, VerificationPolicy, CMDAC, ECC,
};

const RESULT: &[u8] = b"bill of lading bytes";
const BOTH: &str = "seller-and-carrier";
const SELLER_ONLY: &str = "seller-only";

/// Source with a 4-peer pool, destination with both policies recorded.
struct Fixture {
    source: Arc<Network>,
    dest: Arc<Network>,
    admin: Certificate,
}

fn fixture() -> Fixture {
    let source = Arc::new(Network::with_orgs("trade-lens", &STL_ORGS, 2, Some(40)).unwrap());
    let dest = network_with_system("we-trade", &SWT_ORGS, 2, 41);
    let (_, admin) = member(&dest, "seller-org", "swt-admin", SubjectKind::Client, 42);
    record_config(&dest, &admin, &source, 1);
    record_policy(&dest, &admin, &VerificationPolicy::new(BOTH, "trade-lens", STL_ORGS), 2);
    record_policy(&dest, &admin, &VerificationPolicy::new(SELLER_ONLY, "trade-lens", ["seller-org"]), 3);
    Fixture { source, dest, admin }
}

fn digest() -> Digest {
    canonical_digest(&VerificationPolicy::new("any", "thing", ["x"]))
}

fn entries(f: &Fixture, peers: &[&str], nonce: [u8; 16]) -> Vec<ProofEntry> {
    peers.iter().map(|p| signed_entry(&f.source, p, digest(), nonce, RESULT)).collect()
}

fn query_verdict(f: &Fixture, peer: &str, args: &[Vec<u8>]) -> Option<ProofVerdict> {
    let bytes = f.dest.query(peer, CMDAC, cmdac::VALIDATE_PROOF, args, &f.admin, [0; 16]).ok()?;
    ProofVerdict::from_canonical_bytes(&bytes).ok()
}

fn validate(f: &Fixture, policy: &str, nonce: [u8; 16], result: &[u8], proof: &[ProofEntry]) -> Option<ProofVerdict> {
    query_verdict(f, &f.dest.peer_ids()[0], &validate_proof_args(policy, &digest(), &nonce, result, proof))
}

#[test]
fn seller_and_carrier_proof_is_valid_once() {
    let f = fixture();
    let nonce = nonce_of(100);
    let proof = entries(&f, &["seller-peer-0", "carrier-peer-0"], nonce);
    let args = validate_proof_args(BOTH, &digest(), &nonce, RESULT, &proof);
    assert_eq!(validate(&f, BOTH, nonce, RESULT, &proof), Some(ProofVerdict::Valid));

    let committed = f.dest.submit_transaction(CMDAC, cmdac::VALIDATE_PROOF, &args, &f.admin, nonce_of(4)).unwrap();
    assert_eq!(ProofVerdict::from_canonical_bytes(&committed.result).unwrap(), ProofVerdict::Valid);
    for peer in f.dest.peer_ids() {
        assert_eq!(
            query_verdict(&f, &peer, &args),
            Some(ProofVerdict::Invalid(ProofRejection::NonceReplayed)),
            "{peer}"
        );
        assert!(f.dest.snapshot(&peer).unwrap().world_state.contains_key(&nonce_key(&nonce)));
    }
    // A rejected proof consumes nothing.
    let again = f.dest.submit_transaction(CMDAC, cmdac::VALIDATE_PROOF, &args, &f.admin, nonce_of(5)).unwrap();
    assert_eq!(
        ProofVerdict::from_canonical_bytes(&again.result).unwrap(),
        ProofVerdict::Invalid(ProofRejection::NonceReplayed)
    );
}

#[test]
fn each_clause_has_its_own_reason() {
    let f = fixture();
    let nonce = nonce_of(200);
    let good = entries(&f, &["seller-peer-0", "carrier-peer-0"], nonce);
    let invalid = |r| Some(ProofVerdict::Invalid(r));

    let mut flipped = good.clone();
    flipped[0].metadata.result[0] ^= 1;
    assert_eq!(validate(&f, BOTH, nonce, RESULT, &flipped), invalid(ProofRejection::Signature));

    // Same org name, different root.
    let impostor = Network::with_orgs("trade-lens", &STL_ORGS, 2, Some(99)).unwrap();
    let mut foreign = good.clone();
    foreign[1] = signed_entry(&impostor, "carrier-peer-0", digest(), nonce, RESULT);
    assert_eq!(validate(&f, BOTH, nonce, RESULT, &foreign), invalid(ProofRejection::Chain));

    // Signed by carrier-peer-0 while claiming to be carrier-peer-1.
    let mut renamed = good.clone();
    renamed[1].metadata.peer_id = "carrier-peer-1".into();
    renamed[1].signature = f.source.peer_sign("carrier-peer-0", &renamed[1].metadata.to_canonical_bytes()).unwrap();
    assert_eq!(validate(&f, BOTH, nonce, RESULT, &renamed), invalid(ProofRejection::IdentityMismatch));

    assert_eq!(validate(&f, BOTH, nonce, b"other result", &good), invalid(ProofRejection::ResultMismatch));
    let args = validate_proof_args(BOTH, &[7; 32], &nonce, RESULT, &good);
    assert_eq!(query_verdict(&f, &f.dest.peer_ids()[0], &args), invalid(ProofRejection::DigestMismatch));
    assert_eq!(validate(&f, BOTH, nonce_of(201), RESULT, &good), invalid(ProofRejection::NonceMismatch));
    assert_eq!(validate(&f, BOTH, nonce, RESULT, &good[..1]), invalid(ProofRejection::PolicyUnsatisfied));
    assert_eq!(validate(&f, SELLER_ONLY, nonce, RESULT, &good[..1]), Some(ProofVerdict::Valid));
    assert_eq!(validate(&f, "no-such-policy", nonce, RESULT, &good), None);
}

#[test]
fn any_single_byte_change_in_an_attestation_invalidates() {
    let f = fixture();
    let nonce = nonce_of(300);
    let good = entries(&f, &["seller-peer-0", "carrier-peer-0"], nonce);
    let peer = f.dest.peer_ids()[0].clone();
    let mut checked = 0;
    for which in 0..good.len() {
        let bytes = good[which].to_canonical_bytes();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x01;
            let Ok(entry) = ProofEntry::from_canonical_bytes(&bad) else { continue };
            let mut proof = good.clone();
            proof[which] = entry;
            let verdict = query_verdict(&f, &peer, &validate_proof_args(BOTH, &digest(), &nonce, RESULT, &proof));
            assert!(!matches!(verdict, Some(ProofVerdict::Valid)), "entry {which} byte {i}");
            checked += 1;
        }
    }
    assert!(checked > 500);
    // The supplied fields are covered too.
    for i in 0..RESULT.len() {
        let mut result = RESULT.to_vec();
        result[i] ^= 0x80;
        assert!(!validate(&f, BOTH, nonce, &result, &good).unwrap().is_valid());
    }
}

#[test]
fn clause_g_matches_brute_force_over_all_subsets() {
    let f = fixture();
    let nonce = nonce_of(400);
    let pool = ["carrier-peer-0", "carrier-peer-1", "seller-peer-0", "seller-peer-1"];
    let org_of = |p: &str| if p.starts_with("seller") { "seller-org" } else { "carrier-org" };
    for (policy_id, orgs) in [(SELLER_ONLY, vec!["seller-org"]), (BOTH, vec!["seller-org", "carrier-org"])] {
        let policy = VerificationPolicy::new(policy_id, "trade-lens", orgs.clone());
        for mask in 0u32..16 {
            let subset: Vec<&str> = (0..4).filter(|i| mask & (1 << i) != 0).map(|i| pool[i]).collect();
            let covered: BTreeSet<&str> = subset.iter().map(|p| org_of(p)).collect();
            let expected = orgs.iter().all(|o| covered.contains(o));
            let proof = entries(&f, &subset, nonce);
            assert_eq!(policy_covered(&policy, &proof), expected);
            let verdict = validate(&f, policy_id, nonce, RESULT, &proof).unwrap();
            let want = if expected { ProofVerdict::Valid } else { ProofVerdict::Invalid(ProofRejection::PolicyUnsatisfied) };
            assert_eq!(verdict, want, "{policy_id} {subset:?}");
        }
    }
}

#[test]
fn policies_need_a_recorded_network_and_known_orgs() {
    let source = Network::with_orgs("trade-lens", &STL_ORGS, 1, Some(50)).unwrap();
    let dest = network_with_system("we-trade", &SWT_ORGS, 1, 51);
    let (_, admin) = member(&dest, "buyer-org", "admin", SubjectKind::Client, 52);
    let policy = VerificationPolicy::new("p", "trade-lens", STL_ORGS);
    let submit = |p: &VerificationPolicy, n| {
        dest.submit_transaction(CMDAC, cmdac::RECORD_POLICY, &[p.to_canonical_bytes()], &admin, nonce_of(n))
    };
    assert_eq!(submit(&policy, 1).unwrap_err().contract_code(), Some("unknown-network"));
    record_config(&dest, &admin, &source, 2);
    assert_eq!(submit(&VerificationPolicy::new("p", "trade-lens", Vec::<String>::new()), 3).unwrap_err().contract_code(), Some("empty-policy"));
    assert_eq!(submit(&VerificationPolicy::new("p", "trade-lens", ["customs-org"]), 4).unwrap_err().contract_code(), Some("unknown-org"));
    submit(&policy, 5).unwrap();
    for peer in dest.peer_ids() {
        let got = dest.query(&peer, CMDAC, cmdac::GET_POLICY, &[b"p".to_vec()], &admin, [0; 16]).unwrap();
        assert_eq!(VerificationPolicy::from_canonical_bytes(&got).unwrap(), policy);
    }
    // Recording is transactional only.
    let q = dest.query(&dest.peer_ids()[0], CMDAC, cmdac::RECORD_POLICY, &[policy.to_canonical_bytes()], &admin, [0; 16]);
    assert!(q.is_err());
}

/// Source hosting ECC, plus two identity networks with all three orgs.
struct Exposure {
    source: Arc<Network>,
    admin: Certificate,
    certs: Vec<Certificate>,
}

const ORGS3: [&str; 3] = ["seller-org", "buyer-org", "carrier-org"];
const NETS: [&str; 2] = ["we-trade", "trade-lens"];
const CONTRACTS: [&str; 2] = ["TradeLensCC", "WeTradeCC"];
const FUNCTIONS: [&str; 2] = ["GetBillOfLading", "RecordBillOfLading"];

fn exposure() -> Exposure {
    let source = network_with_system("source-net", &STL_ORGS, 1, 60);
    let (_, admin) = member(&source, "seller-org", "admin", SubjectKind::Client, 61);
    let mut certs = Vec::new();
    for (i, net_id) in NETS.iter().enumerate() {
        let ids = Network::with_orgs(net_id, &ORGS3, 1, Some(62 + i as u64)).unwrap();
        record_config(&source, &admin, &ids, 10 + i as u64);
        for org in ORGS3 {
            certs.push(member(&ids, org, &format!("{org}-client"), SubjectKind::Client, 70).1);
        }
    }
    Exposure { source, admin, certs }
}

fn check(e: &Exposure, cert: &Certificate, contract: &str, function: &str) -> AccessDecision {
    let out = e
        .source
        .query(&e.source.peer_ids()[0], ECC, ecc::CHECK_ACCESS, &check_access_args(cert, contract, function), &e.admin, [0; 16])
        .unwrap();
    AccessDecision::from_canonical_bytes(&out).unwrap()
}

fn set_rule(e: &Exposure, rule: &AccessRule, n: u64) {
    e.source.submit_transaction(ECC, ecc::SET_RULE, &[rule.to_canonical_bytes()], &e.admin, nonce_of(n)).unwrap();
}

#[test]
fn exposure_rule_examples() {
    let e = exposure();
    set_rule(&e, &AccessRule::new("we-trade", "seller-org", "TradeLensCC", "GetBillOfLading"), 1);
    let seller = &e.certs[0];
    assert_eq!(check(&e, seller, "TradeLensCC", "GetBillOfLading"), AccessDecision::Allow);
    assert_eq!(check(&e, seller, "TradeLensCC", "RecordBillOfLading"), AccessDecision::Deny("no-rule".into()));

    let rogue = RootAuthority::new("seller-org", "we-trade", interop_core::crypto::generate_keypair(Some(80)));
    let keys = interop_core::crypto::generate_keypair(Some(81));
    let forged = rogue.issue_certificate("seller-org-client", SubjectKind::Client, &keys).unwrap();
    assert_eq!(check(&e, &forged, "TradeLensCC", "GetBillOfLading"), AccessDecision::Deny("bad-certificate".into()));

    let nowhere = RootAuthority::new("seller-org", "nowhere", interop_core::crypto::generate_keypair(Some(82)));
    let stranger = nowhere.issue_certificate("x", SubjectKind::Client, &keys).unwrap();
    assert_eq!(check(&e, &stranger, "TradeLensCC", "GetBillOfLading"), AccessDecision::Deny("unknown-network".into()));

    let blank = AccessRule::new("we-trade", "", "TradeLensCC", "GetBillOfLading");
    let err = e.source.submit_transaction(ECC, ecc::SET_RULE, &[blank.to_canonical_bytes()], &e.admin, nonce_of(2));
    assert_eq!(err.unwrap_err().contract_code(), Some("bad-rule"));
}

#[test]
fn encrypt_for_seals_to_the_requestor_only() {
    let source = network_with_system("trade-lens", &STL_ORGS, 1, 90);
    let swt = Network::with_orgs("we-trade", &SWT_ORGS, 1, Some(91)).unwrap();
    let (_, admin) = member(&source, "seller-org", "admin", SubjectKind::Client, 92);
    record_config(&source, &admin, &swt, 1);
    let (keys, cert) = member(&swt, "seller-org", "swt-seller-client", SubjectKind::Client, 93);
    let bill = bill_of_lading(PO_REF);
    let peer = &source.peer_ids()[0];
    let out = source
        .query_detailed(peer, ECC, ecc::ENCRYPT_FOR, &[cert.to_canonical_bytes(), bill.clone()], &admin, [0; 16])
        .unwrap();
    assert_eq!(out.private_output.as_deref(), Some(bill.as_slice()));
    assert!(!out.result.windows(BL_MARKER.len()).any(|w| w == BL_MARKER.as_bytes()));
    let ct = HybridCiphertext::from_canonical_bytes(&out.result).unwrap();
    assert_eq!(hybrid_decrypt(&keys.enc_private_key, &ct).unwrap(), bill);
    let relay_keys = interop_core::crypto::generate_keypair(Some(94));
    assert!(hybrid_decrypt(&relay_keys.enc_private_key, &ct).is_err());

    let rogue = RootAuthority::new("seller-org", "we-trade", interop_core::crypto::generate_keypair(Some(95)));
    let forged = rogue.issue_certificate("swt-seller-client", SubjectKind::Client, &keys).unwrap();
    let err = source.query(peer, ECC, ecc::ENCRYPT_FOR, &[forged.to_canonical_bytes(), bill], &admin, [0; 16]);
    assert_eq!(err.unwrap_err().contract_code(), Some("bad-certificate"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Allow iff the exact quadruple was recorded; no wildcards.
    #[test]
    fn exposure_is_exact_match(mask in 0u32..(1 << 24)) {
        let e = exposure();
        let mut universe = Vec::new();
        for (ci, cert) in e.certs.iter().enumerate() {
            for c in CONTRACTS {
                for f in FUNCTIONS {
                    universe.push((ci, cert, c, f));
                }
            }
        }
        let mut rules = BTreeSet::new();
        for (i, (_, cert, c, f)) in universe.iter().enumerate() {
            if mask & (1 << i) != 0 {
                let rule = AccessRule::new(&cert.network_id, &cert.org_id, c, f);
                set_rule(&e, &rule, 100 + i as u64);
                rules.insert(rule);
            }
        }
        for (_, cert, c, f) in &universe {
            let wanted = rules.contains(&AccessRule::new(&cert.network_id, &cert.org_id, c, f));
            let got = check(&e, cert, c, f);
            prop_assert_eq!(got == AccessDecision::Allow, wanted, "{} {} {} {}", cert.network_id, cert.org_id, c, f);
        }
    }
}
