//! Application contracts of the trade use case.
//!
//! `TradeLensCC` runs on the shipping network and owns bills of lading.
//! `WeTradeCC` runs on the trade-finance network and only accepts dispatch
//! documents that arrive with a proof the acceptance contract validates.

use crate::codec::{Canonical, Digest};
use crate::crypto::Certificate;
use crate::ledger::{Contract, ContractContext, ContractError};
use crate::system::{cmdac, ecc, AccessDecision, ProofVerdict, CMDAC, ECC};
use crate::wire::request_digest_parts;

pub const CREATE_EXPORT_ORDER: &str = "CreateExportOrder";
pub const RECORD_BILL_OF_LADING: &str = "RecordBillOfLading";
pub const GET_BILL_OF_LADING: &str = "GetBillOfLading";

pub const SET_PROOF_POLICY: &str = "SetProofPolicy";
pub const ISSUE_LC: &str = "IssueLC";
pub const UPLOAD_DISPATCH_DOCS: &str = "UploadDispatchDocs";
pub const REQUEST_PAYMENT: &str = "RequestPayment";

pub const LC_ISSUED: &[u8] = b"issued";
pub const LC_DOCS_UPLOADED: &[u8] = b"docs-uploaded";
pub const LC_PAID: &[u8] = b"paid";

fn key(prefix: &str, reference: &[u8]) -> Vec<u8> {
    [prefix.as_bytes(), reference].concat()
}

pub fn order_key(po_ref: &[u8]) -> Vec<u8> {
    key("order/", po_ref)
}

pub fn bill_key(po_ref: &[u8]) -> Vec<u8> {
    key("bl/", po_ref)
}

pub fn lc_key(po_ref: &[u8]) -> Vec<u8> {
    key("lc/", po_ref)
}

pub fn docs_key(po_ref: &[u8]) -> Vec<u8> {
    key("docs/", po_ref)
}

pub const PROOF_POLICY_KEY: &[u8] = b"proof-policy";

fn require_org(ctx: &ContractContext<'_>, org: &str) -> Result<(), ContractError> {
    let caller = ctx.caller();
    if caller.network_id == ctx.network_id() && caller.org_id == org {
        Ok(())
    } else {
        Err(ContractError::new("forbidden", format!("{} of {} may not call this", caller.org_id, caller.network_id)))
    }
}

fn nonempty<'a>(arg: &'a [u8], what: &str) -> Result<&'a [u8], ContractError> {
    if arg.is_empty() {
        Err(ContractError::bad_args(format!("empty {what}")))
    } else {
        Ok(arg)
    }
}

/// Shipping-network contract: export orders and bills of lading.
#[derive(Debug, Clone)]
pub struct TradeLens {
    pub shipper_org: String,
    pub carrier_org: String,
}

impl TradeLens {
    fn get_bill_of_lading(&self, ctx: &mut ContractContext<'_>, po_ref: &[u8]) -> Result<Vec<u8>, ContractError> {
        let caller: Certificate = ctx.caller().clone();
        let foreign = caller.network_id != ctx.network_id();
        if foreign {
            let args = ecc::check_access_args(&caller, super::TRADE_LENS_CC, GET_BILL_OF_LADING);
            let decision = AccessDecision::from_canonical_bytes(&ctx.invoke(ECC, ecc::CHECK_ACCESS, &args)?)?;
            if let AccessDecision::Deny(reason) = decision {
                return Err(ContractError::new("access", reason));
            }
        }
        let bill = ctx
            .get(&bill_key(po_ref))
            .ok_or_else(|| ContractError::new("not-found", "no bill of lading for this order"))?;
        if foreign {
            ctx.invoke(ECC, ecc::ENCRYPT_FOR, &[caller.to_canonical_bytes(), bill])
        } else {
            Ok(bill)
        }
    }
}

impl Contract for TradeLens {
    fn invoke(&self, ctx: &mut ContractContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ContractError> {
        match function {
            CREATE_EXPORT_ORDER => {
                let [po_ref] = args else { return Err(ContractError::bad_args("CreateExportOrder takes po_ref")) };
                require_org(ctx, &self.shipper_org)?;
                let po_ref = nonempty(po_ref, "order reference")?;
                if ctx.get(&order_key(po_ref)).is_some() {
                    return Err(ContractError::new("exists", "export order already created"));
                }
                ctx.put(order_key(po_ref), ctx.caller().subject_id.clone().into_bytes())?;
                Ok(Vec::new())
            }
            RECORD_BILL_OF_LADING => {
                let [po_ref, document] = args else {
                    return Err(ContractError::bad_args("RecordBillOfLading takes po_ref, document"));
                };
                require_org(ctx, &self.carrier_org)?;
                let document = nonempty(document, "document")?;
                if ctx.get(&order_key(po_ref)).is_none() {
                    return Err(ContractError::new("not-found", "no export order"));
                }
                if ctx.get(&bill_key(po_ref)).is_some() {
                    return Err(ContractError::new("exists", "bill of lading already recorded"));
                }
                ctx.put(bill_key(po_ref), document.to_vec())?;
                Ok(Vec::new())
            }
            GET_BILL_OF_LADING => {
                let [po_ref] = args else { return Err(ContractError::bad_args("GetBillOfLading takes po_ref")) };
                self.get_bill_of_lading(ctx, po_ref)
            }
            other => Err(ContractError::new("unknown-function", other)),
        }
    }
}

/// The remote call whose result `UploadDispatchDocs` accepts. The contract
/// rebuilds the request digest from these and the submitted order
/// reference, so a proof for another document cannot be substituted.
#[derive(Debug, Clone)]
pub struct RemoteBillSource {
    pub network_id: String,
    pub ledger_id: String,
    pub contract_name: String,
    pub function_name: String,
}

/// Trade-finance contract: letters of credit gated on proven B/L existence.
#[derive(Debug, Clone)]
pub struct WeTrade {
    pub buyer_org: String,
    pub seller_org: String,
    pub source: RemoteBillSource,
}

impl WeTrade {
    fn upload_dispatch_docs(&self, ctx: &mut ContractContext<'_>, args: &[Vec<u8>]) -> Result<Vec<u8>, ContractError> {
        let [po_ref, bill, proof, digest, nonce] = args else {
            return Err(ContractError::bad_args("UploadDispatchDocs takes po_ref, bill, proof, digest, nonce"));
        };
        require_org(ctx, &self.seller_org)?;
        let digest: Digest = digest
            .as_slice()
            .try_into()
            .map_err(|_| ContractError::bad_args("request digest must be 32 bytes"))?;
        let nonce: [u8; 16] = nonce
            .as_slice()
            .try_into()
            .map_err(|_| ContractError::bad_args("nonce must be 16 bytes"))?;
        let expected = request_digest_parts(
            &self.source.network_id,
            &self.source.ledger_id,
            &self.source.contract_name,
            &self.source.function_name,
            std::slice::from_ref(po_ref),
            &nonce,
        );
        if expected != digest {
            return Err(ContractError::new("proof", "digest-mismatch"));
        }
        let policy_id = ctx
            .get(PROOF_POLICY_KEY)
            .ok_or_else(|| ContractError::new("no-policy", "proof policy not set"))?;
        let policy_id = String::from_utf8(policy_id).map_err(|_| ContractError::new("no-policy", "corrupt policy id"))?;
        let verdict_bytes = ctx.invoke(
            CMDAC,
            cmdac::VALIDATE_PROOF,
            &[policy_id.into_bytes(), digest.to_vec(), nonce.to_vec(), bill.clone(), proof.clone()],
        )?;
        if let ProofVerdict::Invalid(reason) = ProofVerdict::from_canonical_bytes(&verdict_bytes)? {
            return Err(ContractError::new("proof", reason.code()));
        }
        match ctx.get(&lc_key(po_ref)) {
            Some(state) if state == LC_ISSUED => {}
            Some(_) => return Err(ContractError::new("state", "documents already uploaded")),
            None => return Err(ContractError::new("not-found", "no letter of credit")),
        }
        ctx.put(docs_key(po_ref), bill.clone())?;
        ctx.put(lc_key(po_ref), LC_DOCS_UPLOADED.to_vec())?;
        Ok(Vec::new())
    }
}

impl Contract for WeTrade {
    fn invoke(&self, ctx: &mut ContractContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ContractError> {
        match function {
            SET_PROOF_POLICY => {
                let [policy_id] = args else { return Err(ContractError::bad_args("SetProofPolicy takes policy_id")) };
                let policy_id = nonempty(policy_id, "policy id")?;
                ctx.put(PROOF_POLICY_KEY.to_vec(), policy_id.to_vec())?;
                Ok(Vec::new())
            }
            ISSUE_LC => {
                let [po_ref, amount] = args else { return Err(ContractError::bad_args("IssueLC takes po_ref, amount")) };
                require_org(ctx, &self.buyer_org)?;
                let po_ref = nonempty(po_ref, "order reference")?;
                nonempty(amount, "amount")?;
                if ctx.get(&lc_key(po_ref)).is_some() {
                    return Err(ContractError::new("exists", "letter of credit already issued"));
                }
                ctx.put(lc_key(po_ref), LC_ISSUED.to_vec())?;
                ctx.put(key("lc-amount/", po_ref), amount.clone())?;
                Ok(Vec::new())
            }
            UPLOAD_DISPATCH_DOCS => self.upload_dispatch_docs(ctx, args),
            REQUEST_PAYMENT => {
                let [po_ref] = args else { return Err(ContractError::bad_args("RequestPayment takes po_ref")) };
                require_org(ctx, &self.seller_org)?;
                match ctx.get(&lc_key(po_ref)) {
                    Some(state) if state == LC_DOCS_UPLOADED => {}
                    Some(_) => return Err(ContractError::new("state", "dispatch documents missing")),
                    None => return Err(ContractError::new("not-found", "no letter of credit")),
                }
                ctx.put(lc_key(po_ref), LC_PAID.to_vec())?;
                Ok(Vec::new())
            }
            other => Err(ContractError::new("unknown-function", other)),
        }
    }
}
