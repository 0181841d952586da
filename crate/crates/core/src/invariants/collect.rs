//! Per-transaction observation collection.
//!
//! An invocation of the target is a frame executing the target's code
//! with the target's selector. Each invocation owns a scope: its subtree
//! up to (excluding) any nested invocation of the same target, so nothing
//! is double-counted when a contract re-enters itself.

use std::collections::BTreeMap;

use crate::dataflow::{FlowFact, OperandRole, TaintSource};
use crate::decoder::{AbiType, DecodedCall};
use crate::ingest::TransactionMeta;
use crate::invariants::{InvariantError, InvariantTemplate, ObsValue, Observation, Target, Tier};
use crate::parser::{CallKind, InvocationNode, StorageAccessKind};
use crate::primitives::Word;

/// Everything extracted from one transaction that templates draw on.
/// `decoded_calls` is keyed by node entry index; `flow_facts` is `None`
/// when the dataflow stage did not run.
pub struct TxArtifacts {
    pub meta: TransactionMeta,
    pub tree: InvocationNode,
    pub decoded_calls: BTreeMap<usize, DecodedCall>,
    pub storage_decoded: bool,
    pub flow_facts: Option<Vec<FlowFact>>,
}

/// Nodes whose code and selector match the target.
pub fn matching_invocations<'t>(
    tree: &'t InvocationNode,
    target: &Target,
) -> Vec<&'t InvocationNode> {
    tree.walk()
        .into_iter()
        .filter(|n| n.code_address == target.address && n.selector == target.selector)
        .collect()
}

/// One invocation and the nodes it owns (itself plus descendants whose
/// nearest matching ancestor it is).
struct Scope<'t> {
    node: &'t InvocationNode,
    members: Vec<&'t InvocationNode>,
    /// Multiplicity of the target on the path from the root to this
    /// invocation, inclusive.
    self_nesting: u64,
    /// Same-contract different-selector frames on the path, exclusive.
    cross_nesting: u64,
}

fn build_scopes<'t>(tree: &'t InvocationNode, target: &Target) -> Vec<Scope<'t>> {
    let mut scopes: Vec<Scope<'t>> = Vec::new();
    fn visit<'t>(
        node: &'t InvocationNode,
        owner: Option<usize>,
        self_count: u64,
        cross_count: u64,
        target: &Target,
        scopes: &mut Vec<Scope<'t>>,
    ) {
        let is_match = node.code_address == target.address && node.selector == target.selector;
        let is_cross = node.code_address == target.address && node.selector != target.selector;
        let self_count = self_count + is_match as u64;
        let cross_count = cross_count + is_cross as u64;
        let owner_here = if is_match {
            scopes.push(Scope {
                node,
                members: Vec::new(),
                self_nesting: self_count,
                cross_nesting: cross_count,
            });
            Some(scopes.len() - 1)
        } else {
            owner
        };
        if let Some(o) = owner_here {
            scopes[o].members.push(node);
        }
        for child in &node.children {
            visit(child, owner_here, self_count, cross_count, target, scopes);
        }
    }
    visit(tree, None, 0, 0, target, &mut scopes);
    scopes
}

fn is_root_calldata(source: &TaintSource) -> bool {
    matches!(source, TaintSource::CalldataRange { frame: 0, .. })
}

/// Decoded uint arguments of a call, in declaration order.
fn uint_args(decoded: &DecodedCall) -> Vec<Word> {
    decoded
        .args
        .iter()
        .filter(|p| matches!(p.ty, AbiType::Uint(_)))
        .filter_map(|p| p.value.as_uint())
        .collect()
}

/// ERC20 transfer destination and amount, when this call is one.
fn transfer_in_amount(decoded: &DecodedCall) -> Option<(crate::primitives::Address, Word)> {
    let f = decoded.function.as_ref()?;
    match f.name.as_str() {
        "transfer" if decoded.args.len() >= 2 => Some((
            decoded.args[0].value.as_address()?,
            decoded.args[1].value.as_uint()?,
        )),
        "transferFrom" if decoded.args.len() >= 3 => Some((
            decoded.args[1].value.as_address()?,
            decoded.args[2].value.as_uint()?,
        )),
        _ => None,
    }
}

fn transfer_out_amount(
    decoded: &DecodedCall,
    target: crate::primitives::Address,
    caller: crate::primitives::Address,
) -> Option<Word> {
    let f = decoded.function.as_ref()?;
    match f.name.as_str() {
        // Token moves from the frame's own balance.
        "transfer" if decoded.args.len() >= 2 && caller == target => {
            decoded.args[1].value.as_uint()
        }
        // Or explicitly from the target's balance.
        "transferFrom" if decoded.args.len() >= 3 => {
            if decoded.args[0].value.as_address()? == target {
                decoded.args[2].value.as_uint()
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Collect one observation per invocation of the target. Templates that
/// aggregate events (swap pairs, slot accesses, taint-sink values) attach
/// one value per event and omit invocations that produced none.
pub fn collect_observations(
    template: &InvariantTemplate,
    target: &Target,
    artifacts: &TxArtifacts,
) -> Result<Vec<Observation>, InvariantError> {
    match template.tier {
        Tier::Storage if !artifacts.storage_decoded => {
            return Err(InvariantError::TierViolation {
                template: template.id.to_string(),
                missing: "decoded storage events",
            })
        }
        Tier::Dataflow if artifacts.flow_facts.is_none() => {
            return Err(InvariantError::TierViolation {
                template: template.id.to_string(),
                missing: "flow facts",
            })
        }
        _ => {}
    }

    let meta = &artifacts.meta;
    let scopes = build_scopes(&artifacts.tree, target);
    let mut out = Vec::new();

    // Innermost-scope owner of a trace index, for fact assignment.
    let owner_of_index = |index: usize| -> Option<usize> {
        scopes
            .iter()
            .enumerate()
            .filter(|(_, s)| s.node.contains_index(index))
            .max_by_key(|(_, s)| s.node.entry_index)
            .map(|(i, _)| i)
    };

    let observation = |values: Vec<ObsValue>| Observation {
        tx_hash: meta.tx_hash,
        target: *target,
        values,
    };

    match template.id {
        "EOASenderOnly" | "OriginEqualsSender" => {
            for scope in &scopes {
                out.push(observation(vec![ObsValue::CallerOrigin {
                    caller: scope.node.caller,
                    origin: meta.origin,
                }]));
            }
        }
        "AllowedSenderSet" => {
            for scope in &scopes {
                out.push(observation(vec![ObsValue::Address(scope.node.caller)]));
            }
        }
        "AllowedOriginSet" => {
            for _ in &scopes {
                out.push(observation(vec![ObsValue::Address(meta.origin)]));
            }
        }
        "SameBlockReentryLock" => {
            for _ in &scopes {
                out.push(observation(vec![ObsValue::BlockOrigin {
                    block: meta.block_number,
                    origin: meta.origin,
                }]));
            }
        }
        "BlockDelayLowerBound" => {
            for _ in &scopes {
                out.push(observation(vec![ObsValue::Block(meta.block_number)]));
            }
        }
        "GasStartUpperBound" => {
            for scope in &scopes {
                out.push(observation(vec![ObsValue::Uint(Word::from(
                    scope.node.gas_at_entry,
                ))]));
            }
        }
        "GasConsumedUpperBound" => {
            for scope in &scopes {
                out.push(observation(vec![ObsValue::Uint(Word::from(
                    scope.node.gas_used,
                ))]));
            }
        }
        "PriceRatioRange" | "SwapSlippageBound" => {
            for scope in &scopes {
                let mut pairs = Vec::new();
                for member in &scope.members {
                    if let Some(decoded) = artifacts.decoded_calls.get(&member.entry_index) {
                        let uints = uint_args(decoded);
                        if uints.len() >= 2 {
                            pairs.push(ObsValue::AmountPair {
                                a0: uints[0],
                                a1: uints[1],
                            });
                        }
                    }
                }
                if !pairs.is_empty() {
                    out.push(observation(pairs));
                }
            }
        }
        "SelfReentrancyLock" => {
            for scope in &scopes {
                out.push(observation(vec![ObsValue::Count(scope.self_nesting)]));
            }
        }
        "CrossContractReentrancyLock" => {
            for scope in &scopes {
                out.push(observation(vec![ObsValue::Count(scope.cross_nesting)]));
            }
        }
        "TransferInUpperBound" => {
            for scope in &scopes {
                let mut sum = Word::zero();
                for member in &scope.members {
                    if let Some(decoded) = artifacts.decoded_calls.get(&member.entry_index) {
                        if let Some((to, amount)) = transfer_in_amount(decoded) {
                            if to == target.address {
                                sum = sum.overflowing_add(amount).0;
                            }
                        }
                    }
                }
                out.push(observation(vec![ObsValue::Uint(sum)]));
            }
        }
        "TransferOutUpperBound" => {
            for scope in &scopes {
                let mut sum = Word::zero();
                for member in &scope.members {
                    if let Some(decoded) = artifacts.decoded_calls.get(&member.entry_index) {
                        if let Some(amount) =
                            transfer_out_amount(decoded, target.address, member.caller)
                        {
                            sum = sum.overflowing_add(amount).0;
                        }
                    }
                }
                out.push(observation(vec![ObsValue::Uint(sum)]));
            }
        }
        "EtherInUpperBound" => {
            for scope in &scopes {
                out.push(observation(vec![ObsValue::Uint(scope.node.value)]));
            }
        }
        "EtherOutUpperBound" => {
            for scope in &scopes {
                let mut sum = Word::zero();
                for member in &scope.members {
                    let spends = matches!(
                        member.call_kind,
                        CallKind::Call | CallKind::Callcode | CallKind::Create | CallKind::Create2
                    );
                    if spends
                        && member.caller == target.address
                        && member.entry_index != scope.node.entry_index
                    {
                        sum = sum.overflowing_add(member.value).0;
                    }
                }
                out.push(observation(vec![ObsValue::Uint(sum)]));
            }
        }
        "MonitoredSlotUpperBound" | "MonitoredSlotLowerBound" | "OwnerSlotUnchanged" => {
            let include_loads = template.id == "OwnerSlotUnchanged";
            for scope in &scopes {
                let mut accesses = Vec::new();
                for member in &scope.members {
                    if member.storage_address != target.address {
                        continue;
                    }
                    for event in &member.storage_events {
                        if event.rolled_back {
                            continue;
                        }
                        let is_store = event.kind == StorageAccessKind::Store;
                        if !is_store && !include_loads {
                            continue;
                        }
                        if let Some(path) = &event.decoded {
                            accesses.push(ObsValue::SlotAccess {
                                base_slot: path.base_slot,
                                value: event.value,
                                is_store,
                            });
                        }
                    }
                }
                if !accesses.is_empty() {
                    out.push(observation(accesses));
                }
            }
        }
        "TaintedSinkUpperBound" | "TaintedSinkLowerBound" | "CalldataToDelegateTargetForbidden"
        | "CalldataToCallValueBound" => {
            let facts = artifacts.flow_facts.as_deref().unwrap_or(&[]);
            let mut per_scope: Vec<Vec<ObsValue>> = vec![Vec::new(); scopes.len()];
            for fact in facts {
                if !is_root_calldata(&fact.source) {
                    continue;
                }
                let keep = match template.id {
                    "CalldataToDelegateTargetForbidden" => {
                        fact.sink_opcode == "DELEGATECALL"
                            && fact.operand_role == OperandRole::TargetAddress
                    }
                    "CalldataToCallValueBound" => {
                        matches!(fact.sink_opcode.as_str(), "CALL" | "CALLCODE")
                            && fact.operand_role == OperandRole::Value
                    }
                    _ => true,
                };
                if !keep {
                    continue;
                }
                if let Some(scope_idx) = owner_of_index(fact.instruction_index) {
                    per_scope[scope_idx].push(ObsValue::Uint(fact.value_at_sink));
                }
            }
            for values in per_scope {
                // The forbidden-flow lock needs invocation evidence even
                // with zero matching facts; bound templates only carry
                // observed values.
                if template.id == "CalldataToDelegateTargetForbidden" {
                    out.push(observation(values));
                } else if !values.is_empty() {
                    out.push(observation(values));
                }
            }
        }
        other => return Err(InvariantError::UnknownTemplate(other.to_string())),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{AbiFunction, AbiType, AbiValue, DecodeStatus, DecodedParam};
    use crate::ingest::TxStatus;
    use crate::invariants::template_by_id;
    use crate::parser::{CallKind, ExitReason, Selector};
    use crate::primitives::{Address, Hash32};

    fn node(
        kind: CallKind,
        caller: Address,
        code: Address,
        selector: Option<Selector>,
        entry: usize,
        exit: usize,
        children: Vec<InvocationNode>,
    ) -> InvocationNode {
        InvocationNode {
            call_kind: kind,
            caller,
            code_address: code,
            storage_address: code,
            value: Word::zero(),
            gas_at_entry: 100_000,
            gas_used: 500,
            calldata: selector.map(|s| s.0.to_vec()).unwrap_or_default(),
            return_data: Vec::new(),
            selector,
            exit_reason: ExitReason::Stop,
            children,
            storage_events: Vec::new(),
            sha3_events: Vec::new(),
            entry_index: entry,
            exit_index: exit,
        }
    }

    fn transfer_decoded(to: Address, amount: u64) -> DecodedCall {
        let f = AbiFunction::new(
            "transfer",
            vec![("to", AbiType::Address), ("amount", AbiType::Uint(256))],
            vec![("ok", AbiType::Bool)],
        );
        DecodedCall {
            args: vec![
                DecodedParam {
                    name: "to".into(),
                    ty: AbiType::Address,
                    value: AbiValue::Address(to),
                },
                DecodedParam {
                    name: "amount".into(),
                    ty: AbiType::Uint(256),
                    value: AbiValue::Uint(Word::from(amount)),
                },
            ],
            returns: Vec::new(),
            function: Some(f),
            decode_status: DecodeStatus::ArgsOnly,
        }
    }

    #[test]
    fn transfer_in_sums_per_invocation() {
        // The target frame makes two token transfers into itself, of 5
        // and 7 units: one observation of 12.
        let target_addr = Address::repeat_byte(0x02);
        let token = Address::repeat_byte(0x03);
        let selector = Selector([1, 2, 3, 4]);
        let transfer_sel = Selector([0xa9, 0x05, 0x9c, 0xbb]);
        let tree = node(
            CallKind::Root,
            Address::repeat_byte(0xee),
            target_addr,
            Some(selector),
            0,
            20,
            vec![
                node(CallKind::Call, target_addr, token, Some(transfer_sel), 3, 6, vec![]),
                node(CallKind::Call, target_addr, token, Some(transfer_sel), 9, 12, vec![]),
            ],
        );
        let mut decoded_calls = BTreeMap::new();
        decoded_calls.insert(3, transfer_decoded(target_addr, 5));
        decoded_calls.insert(9, transfer_decoded(target_addr, 7));
        let artifacts = TxArtifacts {
            meta: TransactionMeta {
                tx_hash: Hash32::repeat_byte(1),
                block_number: 1,
                origin: Address::repeat_byte(0xee),
                to: Some(target_addr),
                value: Word::zero(),
                input: selector.0.to_vec(),
                gas_limit: 100_000,
                gas_used: 500,
                status: TxStatus::Success,
            },
            tree,
            decoded_calls,
            storage_decoded: false,
            flow_facts: None,
        };
        let template = template_by_id("TransferInUpperBound").unwrap();
        let target = Target {
            address: target_addr,
            selector: Some(selector),
        };
        let observations = collect_observations(&template, &target, &artifacts).unwrap();
        assert_eq!(observations.len(), 1);
        assert_eq!(observations[0].values, vec![ObsValue::Uint(Word::from(12u64))]);
    }

    #[test]
    fn tier_violation_names_missing_artifact() {
        let target_addr = Address::repeat_byte(0x02);
        let artifacts = TxArtifacts {
            meta: TransactionMeta {
                tx_hash: Hash32::repeat_byte(1),
                block_number: 1,
                origin: Address::repeat_byte(0xee),
                to: Some(target_addr),
                value: Word::zero(),
                input: vec![],
                gas_limit: 100_000,
                gas_used: 500,
                status: TxStatus::Success,
            },
            tree: node(CallKind::Root, Address::repeat_byte(0xee), target_addr, None, 0, 0, vec![]),
            decoded_calls: BTreeMap::new(),
            storage_decoded: false,
            flow_facts: None,
        };
        let target = Target {
            address: target_addr,
            selector: None,
        };
        for (template_id, missing) in [
            ("MonitoredSlotUpperBound", "decoded storage events"),
            ("TaintedSinkUpperBound", "flow facts"),
        ] {
            let template = template_by_id(template_id).unwrap();
            match collect_observations(&template, &target, &artifacts) {
                Err(InvariantError::TierViolation { missing: m, .. }) => {
                    assert_eq!(m, missing)
                }
                other => panic!("expected tier violation, got {other:?}"),
            }
        }
    }

    #[test]
    fn no_invocations_yields_no_observations() {
        let other = Address::repeat_byte(0x55);
        let artifacts = TxArtifacts {
            meta: TransactionMeta {
                tx_hash: Hash32::repeat_byte(1),
                block_number: 1,
                origin: Address::repeat_byte(0xee),
                to: Some(other),
                value: Word::zero(),
                input: vec![],
                gas_limit: 100_000,
                gas_used: 500,
                status: TxStatus::Success,
            },
            tree: node(CallKind::Root, Address::repeat_byte(0xee), other, None, 0, 0, vec![]),
            decoded_calls: BTreeMap::new(),
            storage_decoded: false,
            flow_facts: None,
        };
        let target = Target {
            address: Address::repeat_byte(0x02),
            selector: None,
        };
        let template = template_by_id("GasStartUpperBound").unwrap();
        let observations = collect_observations(&template, &target, &artifacts).unwrap();
        assert!(observations.is_empty());
    }
}
