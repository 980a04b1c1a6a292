//! Configuration Management + Data Acceptance contract.

use crate::codec::{decode_list, Canonical, Digest};
use crate::ledger::{Contract, ContractContext, ContractError};

use super::proof::{check_proof, ProofRejection, ProofVerdict};
use super::{ForeignNetworkConfig, ProofEntry, VerificationPolicy, CONFIG_PREFIX, NONCE_PREFIX, POLICY_PREFIX, POLICY_VERSION};

pub const RECORD_CONFIG: &str = "RecordConfig";
pub const GET_CONFIG: &str = "GetConfig";
pub const RECORD_POLICY: &str = "RecordPolicy";
pub const GET_POLICY: &str = "GetPolicy";
pub const VALIDATE_PROOF: &str = "ValidateProof";

pub fn config_key(network_id: &str) -> Vec<u8> {
    [CONFIG_PREFIX, network_id.as_bytes()].concat()
}

pub fn policy_key(policy_id: &str) -> Vec<u8> {
    [POLICY_PREFIX, policy_id.as_bytes()].concat()
}

pub fn nonce_key(nonce: &[u8; 16]) -> Vec<u8> {
    [NONCE_PREFIX, hex::encode(nonce).as_bytes()].concat()
}

pub fn validate_proof_args(
    policy_id: &str,
    request_digest: &Digest,
    nonce: &[u8; 16],
    result: &[u8],
    proof: &[ProofEntry],
) -> Vec<Vec<u8>> {
    vec![
        policy_id.as_bytes().to_vec(),
        request_digest.to_vec(),
        nonce.to_vec(),
        result.to_vec(),
        super::encode_proof(proof),
    ]
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ConfigAcceptance;

fn arity(args: &[Vec<u8>], n: usize) -> Result<(), ContractError> {
    if args.len() == n {
        Ok(())
    } else {
        Err(ContractError::bad_args(format!("expected {n} arguments, got {}", args.len())))
    }
}

fn utf8(arg: &[u8]) -> Result<&str, ContractError> {
    std::str::from_utf8(arg).map_err(|_| ContractError::bad_args("argument is not utf-8"))
}

/// Reads a recorded foreign network config through a context.
pub fn load_config(ctx: &ContractContext<'_>, network_id: &str) -> Option<ForeignNetworkConfig> {
    ctx.get(&config_key(network_id))
        .and_then(|b| ForeignNetworkConfig::from_canonical_bytes(&b).ok())
}

impl ConfigAcceptance {
    fn record_config(ctx: &mut ContractContext<'_>, config: ForeignNetworkConfig) -> Result<Vec<u8>, ContractError> {
        if config.network_id.is_empty() || config.orgs.is_empty() || config.orgs.iter().any(|o| o.org_id.is_empty()) {
            return Err(ContractError::new("bad-config", "config needs a network id and at least one org"));
        }
        ctx.put(config_key(&config.network_id), config.to_canonical_bytes())?;
        Ok(Vec::new())
    }

    fn record_policy(ctx: &mut ContractContext<'_>, policy: VerificationPolicy) -> Result<Vec<u8>, ContractError> {
        if policy.version != POLICY_VERSION {
            return Err(ContractError::new("bad-policy", format!("unsupported policy version {}", policy.version)));
        }
        if policy.policy_id.is_empty() {
            return Err(ContractError::new("bad-policy", "empty policy id"));
        }
        if policy.required_orgs.is_empty() {
            return Err(ContractError::new("empty-policy", "policy names no organizations"));
        }
        let config = load_config(ctx, &policy.network_id)
            .ok_or_else(|| ContractError::new("unknown-network", policy.network_id.clone()))?;
        if let Some(org) = policy.required_orgs.iter().find(|o| !config.has_org(o)) {
            return Err(ContractError::new("unknown-org", org.clone()));
        }
        ctx.put(policy_key(&policy.policy_id), policy.to_canonical_bytes())?;
        Ok(Vec::new())
    }

    fn validate_proof(ctx: &mut ContractContext<'_>, args: &[Vec<u8>]) -> Result<Vec<u8>, ContractError> {
        arity(args, 5)?;
        let policy_id = utf8(&args[0])?;
        let request_digest: Digest = args[1]
            .as_slice()
            .try_into()
            .map_err(|_| ContractError::bad_args("request digest must be 32 bytes"))?;
        let nonce: [u8; 16] = args[2]
            .as_slice()
            .try_into()
            .map_err(|_| ContractError::bad_args("nonce must be 16 bytes"))?;
        let result = &args[3];
        let proof: Vec<ProofEntry> = decode_list(&args[4])?;

        let policy = ctx
            .get(&policy_key(policy_id))
            .map(|b| VerificationPolicy::from_canonical_bytes(&b))
            .transpose()?
            .ok_or_else(|| ContractError::new("unknown-policy", policy_id.to_string()))?;
        let config = load_config(ctx, &policy.network_id)
            .ok_or_else(|| ContractError::new("unknown-network", policy.network_id.clone()))?;

        let mut verdict: ProofVerdict = check_proof(&config, &policy, &request_digest, &nonce, result, &proof).into();
        if verdict.is_valid() && ctx.get(&nonce_key(&nonce)).is_some() {
            verdict = ProofVerdict::Invalid(ProofRejection::NonceReplayed);
        }
        if verdict.is_valid() && !ctx.is_query() {
            ctx.put(nonce_key(&nonce), b"consumed".to_vec())?;
        }
        Ok(verdict.to_canonical_bytes())
    }
}

impl Contract for ConfigAcceptance {
    fn invoke(&self, ctx: &mut ContractContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ContractError> {
        match function {
            RECORD_CONFIG => {
                arity(args, 1)?;
                Self::record_config(ctx, ForeignNetworkConfig::from_canonical_bytes(&args[0])?)
            }
            GET_CONFIG => {
                arity(args, 1)?;
                ctx.get(&config_key(utf8(&args[0])?))
                    .ok_or_else(|| ContractError::new("unknown-network", utf8(&args[0]).unwrap_or_default().to_string()))
            }
            RECORD_POLICY => {
                arity(args, 1)?;
                Self::record_policy(ctx, VerificationPolicy::from_canonical_bytes(&args[0])?)
            }
            GET_POLICY => {
                arity(args, 1)?;
                ctx.get(&policy_key(utf8(&args[0])?))
                    .ok_or_else(|| ContractError::new("unknown-policy", utf8(&args[0]).unwrap_or_default().to_string()))
            }
            VALIDATE_PROOF => Self::validate_proof(ctx, args),
            other => Err(ContractError::new("unknown-function", other)),
        }
    }
}
