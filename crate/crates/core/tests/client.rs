use std::time::Duration;

use interop_core::client::{build_dependent_transaction, split_dependent_args, ClientError};
use interop_core::ledger::LedgerError;
use interop_core::scenario::contracts::{bill_key, docs_key, UPLOAD_DISPATCH_DOCS};
use interop_core::scenario::{
    bill_of_lading, Attack, Environment, ScenarioSpec, CARRIER_ORG, PO_REF, SELLER_ORG, STL_NETWORK, WE_TRADE_CC,
};
use interop_core::system::{check_proof, encode_proof, ProofRejection, VerificationPolicy};

const DEADLINE: Duration = Duration::from_secs(5);

fn ready() -> Environment {
    let mut env = Environment::setup(ScenarioSpec { deadline: DEADLINE, ..ScenarioSpec::default() }).unwrap();
    env.prepare_trade().unwrap();
    env
}

fn proof_code(e: &LedgerError) -> Option<&str> {
    match e {
        LedgerError::Contract(c) if c.code == "proof" => Some(c.message.as_str()),
        _ => None,
    }
}

#[test]
fn honest_query_yields_a_two_org_proof() {
    let mut env = ready();
    let step = env.query_bill(false, 1).unwrap();
    assert_eq!(step.attempts, 1);
    let verified = step.outcome.unwrap();
    assert_eq!(verified.result, bill_of_lading(PO_REF));
    let orgs: Vec<_> = verified.proof.iter().map(|e| e.metadata.org_id.as_str()).collect();
    assert_eq!(orgs, [SELLER_ORG, CARRIER_ORG]);
    assert_eq!(verified.nonce, step.request.nonce);
    assert_eq!(verified.request_digest, step.request.digest());

    let before = env.swt().height();
    env.upload_docs(&verified).unwrap();
    assert_eq!(env.swt().height(), before + 1);
    assert_eq!(env.stored(env.swt(), &docs_key(PO_REF.as_bytes())), env.stored(env.stl(), &bill_key(PO_REF.as_bytes())));
}

#[test]
fn dependent_transaction_layout() {
    let mut env = ready();
    let verified = env.query_bill(false, 1).unwrap().outcome.unwrap();
    let extra = vec![PO_REF.as_bytes().to_vec()];
    let tx = build_dependent_transaction(&verified, WE_TRADE_CC, UPLOAD_DISPATCH_DOCS, &extra).unwrap();
    assert_eq!((tx.contract_name.as_str(), tx.function_name.as_str()), (WE_TRADE_CC, UPLOAD_DISPATCH_DOCS));
    assert_eq!(tx.args.len(), 5);
    assert_eq!(tx.args[1], verified.result);
    assert_eq!(tx.args[2], encode_proof(&verified.proof));
    let (rest, result, proof, digest, nonce) = split_dependent_args(&tx.args).unwrap();
    assert_eq!((rest, result, &proof, digest, nonce), (&extra[..], &verified.result[..], &verified.proof, verified.request_digest, verified.nonce));
    assert!(split_dependent_args(&tx.args[..3]).is_none());
}

#[test]
fn tampered_result_never_reaches_the_ledger() {
    let mut env = Environment::setup(ScenarioSpec { attack: Attack::Tamper, deadline: DEADLINE, ..ScenarioSpec::default() })
        .unwrap();
    let transcript = env.run().unwrap();
    assert!(transcript.expected_reached);
    let query = transcript.find("9", "remote-query");
    assert_eq!(query.len(), 1);
    assert_eq!(query[0].verdict, "proof-tamper");
    assert_eq!(transcript.find("10", "upload-dispatch-docs")[0].verdict, "rejected: proof-tamper");
}

#[test]
fn narrower_policy_passes_preflight_but_not_the_contract() {
    let mut env = ready();
    let (recorded, config) = env.recorded_policy_and_config().unwrap();
    assert_eq!(recorded.required_orgs, [SELLER_ORG, CARRIER_ORG]);
    let narrow = VerificationPolicy::new(&recorded.policy_id, STL_NETWORK, [SELLER_ORG]);
    let client = env.seller_client();
    let attempt = client.attempt(&Environment::bill_target(), &narrow, &config, DEADLINE);
    let verified = attempt.outcome.unwrap();
    assert_eq!(verified.proof.len(), 1);
    // The contract judges by the policy it recorded, not by the request.
    let tx = build_dependent_transaction(&verified, WE_TRADE_CC, UPLOAD_DISPATCH_DOCS, &[PO_REF.as_bytes().to_vec()])
        .unwrap();
    let before = env.swt().height();
    let err = env.submit_upload(tx.args).unwrap_err();
    assert_eq!(proof_code(&err), Some("policy-unsatisfied"));
    assert_eq!(env.swt().height(), before);

    // The full policy then succeeds with a fresh nonce.
    let full = env.query_bill(false, 1).unwrap().outcome.unwrap();
    assert_eq!(full.proof.len(), 2);
    env.upload_docs(&full).unwrap();
}

#[test]
fn preflight_and_contract_agree_on_corrupted_proofs() {
    let mut env = ready();
    let (policy, config) = env.recorded_policy_and_config().unwrap();
    let verified = env.query_bill(false, 1).unwrap().outcome.unwrap();
    let honest = build_dependent_transaction(&verified, WE_TRADE_CC, UPLOAD_DISPATCH_DOCS, &[PO_REF.as_bytes().to_vec()])
        .unwrap()
        .args;
    let before = env.swt().height();
    let (mut judged, mut undecodable) = (0, 0);
    for arg in 1..honest.len() {
        for pos in (0..honest[arg].len()).step_by(7) {
            let mut args = honest.clone();
            args[arg][pos] ^= 0x20;
            let contract = env.submit_upload(args.clone());
            let Some((_, result, proof, digest, nonce)) = split_dependent_args(&args) else {
                assert!(contract.is_err(), "arg {arg} byte {pos}");
                undecodable += 1;
                continue;
            };
            let preflight = check_proof(&config, &policy, &digest, &nonce, result, &proof);
            let rejection = preflight.expect_err("corruption caught by pre-flight");
            let err = contract.expect_err("corruption caught by the contract");
            // The contract first binds the digest to its own po_ref and the
            // nonce, so a changed nonce surfaces as a digest mismatch there.
            let expected = if arg == 4 { "digest-mismatch" } else { rejection.code() };
            assert_eq!(proof_code(&err), Some(expected), "arg {arg} byte {pos}");
            judged += 1;
        }
    }
    assert!(judged > 100 && undecodable > 0, "{judged} {undecodable}");
    assert_eq!(env.swt().height(), before);
    env.submit_upload(honest.clone()).unwrap();
    let replayed = env.submit_upload(honest).unwrap_err();
    assert_eq!(proof_code(&replayed), Some(ProofRejection::NonceReplayed.code()));
}

#[test]
fn response_to_another_request_is_refused() {
    let mut env = ready();
    env.query_bill(false, 1).unwrap().outcome.unwrap();
    let (request, frame) = env.last_response_frame().cloned().unwrap();
    let (_, config) = env.recorded_policy_and_config().unwrap();
    let client = env.seller_client();
    assert!(client.open_response_bytes(&request, &frame, &config).is_ok());
    let other = client.new_request(&Environment::bill_target(), &request.verification_policy);
    assert_ne!(other.request_id, request.request_id);
    assert!(matches!(client.open_response_bytes(&other, &frame, &config), Err(ClientError::MismatchedResponse)));
    // Another client cannot decrypt the seller's response.
    assert!(matches!(env.buyer_client().open_response_bytes(&request, &frame, &config), Err(ClientError::ProofTamper)));
}

#[test]
fn access_denial_is_not_retried() {
    let mut env = ready();
    let step = env.query_bill(true, 3).unwrap();
    assert_eq!(step.attempts, 1);
    let err = step.outcome.unwrap_err();
    assert_eq!(err.verdict(), "denied:access");
    assert!(!err.retryable());
}
