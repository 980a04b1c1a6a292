//! Exposure Control contract.

use crate::codec::Canonical;
use crate::crypto::{check_chain, hybrid_encrypt, Certificate};
use crate::ledger::{Contract, ContractContext, ContractError};

use super::{cmdac, AccessDecision, AccessRule};

pub const SET_RULE: &str = "SetRule";
pub const CHECK_ACCESS: &str = "CheckAccess";
pub const ENCRYPT_FOR: &str = "EncryptFor";

pub fn check_access_args(requestor: &Certificate, contract_name: &str, function_name: &str) -> Vec<Vec<u8>> {
    vec![
        requestor.to_canonical_bytes(),
        contract_name.as_bytes().to_vec(),
        function_name.as_bytes().to_vec(),
    ]
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ExposureControl;

/// Validates `cert` against the identity roots the acceptance contract holds
/// for the certificate's network.
fn authenticate(ctx: &mut ContractContext<'_>, cert: &Certificate) -> Result<(), &'static str> {
    let config = match ctx.invoke(super::CMDAC, cmdac::GET_CONFIG, &[cert.network_id.as_bytes().to_vec()]) {
        Ok(bytes) => super::ForeignNetworkConfig::from_canonical_bytes(&bytes).map_err(|_| "unknown-network")?,
        Err(_) => return Err("unknown-network"),
    };
    check_chain(cert, &config.roots()).map_err(|_| "bad-certificate")
}

impl ExposureControl {
    fn check_access(
        ctx: &mut ContractContext<'_>,
        cert: &Certificate,
        contract_name: &str,
        function_name: &str,
    ) -> AccessDecision {
        if let Err(reason) = authenticate(ctx, cert) {
            return AccessDecision::Deny(reason.to_string());
        }
        let probe = AccessRule::new(&cert.network_id, &cert.org_id, contract_name, function_name);
        if ctx.get(&probe.storage_key()).is_some() {
            AccessDecision::Allow
        } else {
            AccessDecision::Deny("no-rule".to_string())
        }
    }
}

fn utf8(arg: &[u8]) -> Result<&str, ContractError> {
    std::str::from_utf8(arg).map_err(|_| ContractError::bad_args("argument is not utf-8"))
}

impl Contract for ExposureControl {
    fn invoke(&self, ctx: &mut ContractContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ContractError> {
        match function {
            SET_RULE => {
                let [rule] = args else { return Err(ContractError::bad_args("SetRule takes one rule")) };
                let rule = AccessRule::from_canonical_bytes(rule)?;
                if !rule.is_well_formed() {
                    return Err(ContractError::new("bad-rule", "all rule fields must be nonempty"));
                }
                ctx.put(rule.storage_key(), rule.to_canonical_bytes())?;
                Ok(Vec::new())
            }
            CHECK_ACCESS => {
                let [cert, contract, func] = args else {
                    return Err(ContractError::bad_args("CheckAccess takes cert, contract, function"));
                };
                let cert = Certificate::from_canonical_bytes(cert)?;
                Ok(Self::check_access(ctx, &cert, utf8(contract)?, utf8(func)?).to_canonical_bytes())
            }
            ENCRYPT_FOR => {
                let [cert, payload] = args else {
                    return Err(ContractError::bad_args("EncryptFor takes cert, payload"));
                };
                let cert = Certificate::from_canonical_bytes(cert)?;
                authenticate(ctx, &cert).map_err(|reason| ContractError::new(reason, "cannot encrypt for requestor"))?;
                let ct = hybrid_encrypt(&cert.enc_public_key, payload)
                    .map_err(|e| ContractError::new("encryption", e.to_string()))?;
                // The peer's attestation plugin signs the plaintext result.
                ctx.set_private_output(payload.clone());
                Ok(ct.to_canonical_bytes())
            }
            other => Err(ContractError::new("unknown-function", other)),
        }
    }
}
