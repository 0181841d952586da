//! Parameter concretization and guard checking.
//!
//! Inference is exact-extremum with no statistical slack, which makes
//! bound tightness a testable property: lowering an inferred upper bound
//! by one must make some training transaction violate.

use std::collections::{BTreeMap, BTreeSet};

use crate::invariants::{
    collect_observations, ConcreteInvariant, GuardVerdict, InvariantError, InvariantTemplate,
    ObsValue, Observation, Outcome, Params, Ratio, Target, TxArtifacts, MAX_SET_SIZE,
};
use crate::primitives::{Address, Hash32, Word};

/// Chronological state threaded through a check run: per-transaction
/// checks cannot otherwise see inter-transaction timing.
#[derive(Debug, Clone, Default)]
pub struct CheckContext {
    pub last_invocation_block: Option<u64>,
    pub seen_block_origins: BTreeSet<(u64, Address)>,
}

/// Chronological prefix split: ceil(n × fraction) transactions train,
/// the rest test.
pub fn split_corpus(
    tx_hashes: &[Hash32],
    train_fraction: f64,
) -> Result<(Vec<Hash32>, Vec<Hash32>), InvariantError> {
    if tx_hashes.is_empty() {
        return Err(InvariantError::Usage("empty corpus".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(InvariantError::Usage(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let exact = tx_hashes.len() as f64 * train_fraction;
    // Snap float noise so mathematically integral products stay integral.
    let count = if (exact - exact.round()).abs() < 1e-9 {
        exact.round() as usize
    } else {
        exact.ceil() as usize
    };
    let count = count.clamp(1, tx_hashes.len());
    Ok((tx_hashes[..count].to_vec(), tx_hashes[count..].to_vec()))
}

fn flat_values(observations: &[Observation]) -> impl Iterator<Item = &ObsValue> {
    observations.iter().flat_map(|o| o.values.iter())
}

fn uints(observations: &[Observation]) -> Vec<Word> {
    flat_values(observations)
        .filter_map(|v| match v {
            ObsValue::Uint(w) => Some(*w),
            _ => None,
        })
        .collect()
}

fn single_target(observations: &[Observation]) -> Result<Target, InvariantError> {
    let first = observations[0].target;
    for obs in observations {
        if obs.target != first {
            return Err(InvariantError::MixedTargets(first, obs.target));
        }
    }
    Ok(first)
}

fn address_like(value: Word) -> bool {
    !value.is_zero() && value < (Word::one() << 160)
}

fn swap_ratios(observations: &[Observation]) -> Vec<Ratio> {
    flat_values(observations)
        .filter_map(|v| match v {
            ObsValue::AmountPair { a0, a1 } if !a0.is_zero() => Some(Ratio::new(*a1, *a0)),
            _ => None,
        })
        .collect()
}

fn slippage_factors(observations: &[Observation]) -> Vec<Ratio> {
    flat_values(observations)
        .filter_map(|v| match v {
            ObsValue::AmountPair { a0, a1 } if !a0.is_zero() && !a1.is_zero() => {
                let (lo, hi) = if a0 <= a1 { (*a0, *a1) } else { (*a1, *a0) };
                Some(Ratio::new(hi, lo))
            }
            _ => None,
        })
        .collect()
}

/// Concretize a template over one target's training observations.
/// `None` means the template emits nothing: no observations, a lock
/// violated in training, or a set beyond [`MAX_SET_SIZE`].
pub fn infer(
    template: &InvariantTemplate,
    observations: &[Observation],
) -> Result<Option<ConcreteInvariant>, InvariantError> {
    if observations.is_empty() {
        return Ok(None);
    }
    let target = single_target(observations)?;
    let support = observations.len();
    let emit = |parameters: Params| {
        Ok(Some(ConcreteInvariant {
            template_id: template.id.to_string(),
            target,
            parameters,
            training_support: support,
        }))
    };

    match template.id {
        "GasStartUpperBound" | "GasConsumedUpperBound" | "TransferInUpperBound"
        | "TransferOutUpperBound" | "EtherInUpperBound" | "EtherOutUpperBound"
        | "TaintedSinkUpperBound" | "CalldataToCallValueBound" => {
            match uints(observations).into_iter().max() {
                Some(max) => emit(Params::UpperBound(max)),
                None => Ok(None),
            }
        }
        "TaintedSinkLowerBound" => match uints(observations).into_iter().min() {
            Some(min) => emit(Params::LowerBound(min)),
            None => Ok(None),
        },
        "AllowedSenderSet" | "AllowedOriginSet" => {
            let set: BTreeSet<Address> = flat_values(observations)
                .filter_map(|v| match v {
                    ObsValue::Address(a) => Some(*a),
                    _ => None,
                })
                .collect();
            if set.is_empty() || set.len() > MAX_SET_SIZE {
                Ok(None)
            } else {
                emit(Params::AddressSet(set))
            }
        }
        "EOASenderOnly" | "OriginEqualsSender" => {
            let violated = flat_values(observations).any(|v| {
                matches!(v, ObsValue::CallerOrigin { caller, origin } if caller != origin)
            });
            if violated {
                Ok(None)
            } else {
                emit(Params::None)
            }
        }
        "SameBlockReentryLock" => {
            let mut seen = BTreeSet::new();
            for v in flat_values(observations) {
                if let ObsValue::BlockOrigin { block, origin } = v {
                    if !seen.insert((*block, *origin)) {
                        return Ok(None);
                    }
                }
            }
            emit(Params::None)
        }
        "BlockDelayLowerBound" => {
            let blocks: Vec<u64> = flat_values(observations)
                .filter_map(|v| match v {
                    ObsValue::Block(b) => Some(*b),
                    _ => None,
                })
                .collect();
            if blocks.len() < 2 {
                return Ok(None);
            }
            let min_gap = blocks
                .windows(2)
                .map(|w| w[1].saturating_sub(w[0]))
                .min()
                .expect("at least one gap");
            emit(Params::MinBlockGap(min_gap))
        }
        "PriceRatioRange" => {
            let ratios = swap_ratios(observations);
            let Some(first) = ratios.first().copied() else {
                return Ok(None);
            };
            let mut min = first;
            let mut max = first;
            for r in &ratios[1..] {
                if r.lt(min) {
                    min = *r;
                }
                if max.lt(*r) {
                    max = *r;
                }
            }
            emit(Params::RatioRange { min, max })
        }
        "SwapSlippageBound" => {
            let factors = slippage_factors(observations);
            let Some(first) = factors.first().copied() else {
                return Ok(None);
            };
            let mut max = first;
            for f in &factors[1..] {
                if max.lt(*f) {
                    max = *f;
                }
            }
            emit(Params::FactorBound(max))
        }
        "SelfReentrancyLock" => {
            let violated = flat_values(observations)
                .any(|v| matches!(v, ObsValue::Count(n) if *n >= 2));
            if violated {
                Ok(None)
            } else {
                emit(Params::None)
            }
        }
        "CrossContractReentrancyLock" => {
            let violated = flat_values(observations)
                .any(|v| matches!(v, ObsValue::Count(n) if *n >= 1));
            if violated {
                Ok(None)
            } else {
                emit(Params::None)
            }
        }
        "MonitoredSlotUpperBound" | "MonitoredSlotLowerBound" => {
            let upper = template.id == "MonitoredSlotUpperBound";
            let mut bounds: BTreeMap<Word, Word> = BTreeMap::new();
            for v in flat_values(observations) {
                if let ObsValue::SlotAccess { base_slot, value, is_store: true } = v {
                    bounds
                        .entry(*base_slot)
                        .and_modify(|b| {
                            if (upper && *value > *b) || (!upper && *value < *b) {
                                *b = *value;
                            }
                        })
                        .or_insert(*value);
                }
            }
            if bounds.is_empty() {
                Ok(None)
            } else {
                emit(Params::SlotBounds(bounds))
            }
        }
        "OwnerSlotUnchanged" => {
            // Candidate owner slots hold one constant address-like value
            // across all observed accesses.
            let mut values: BTreeMap<Word, BTreeSet<Word>> = BTreeMap::new();
            for v in flat_values(observations) {
                if let ObsValue::SlotAccess { base_slot, value, .. } = v {
                    values.entry(*base_slot).or_default().insert(*value);
                }
            }
            let frozen: BTreeMap<Word, Word> = values
                .into_iter()
                .filter_map(|(slot, vals)| {
                    if vals.len() == 1 {
                        let value = *vals.iter().next().expect("len 1");
                        address_like(value).then_some((slot, value))
                    } else {
                        None
                    }
                })
                .collect();
            if frozen.is_empty() {
                Ok(None)
            } else {
                emit(Params::SlotFrozenValues(frozen))
            }
        }
        "CalldataToDelegateTargetForbidden" => {
            let violated = flat_values(observations).next().is_some();
            if violated {
                Ok(None)
            } else {
                emit(Params::None)
            }
        }
        other => Err(InvariantError::UnknownTemplate(other.to_string())),
    }
}

/// Check one transaction against a concrete invariant. Transactions that
/// never invoke the target pass vacuously. `ctx` carries chronological
/// state for the time-lock templates and must be threaded through
/// transactions in corpus order.
pub fn check(
    invariant: &ConcreteInvariant,
    artifacts: &TxArtifacts,
    ctx: &mut CheckContext,
) -> Result<GuardVerdict, InvariantError> {
    let template = crate::invariants::template_by_id(&invariant.template_id)
        .ok_or_else(|| InvariantError::UnknownTemplate(invariant.template_id.clone()))?;
    let observations = collect_observations(&template, &invariant.target, artifacts)?;

    let mut witness: Option<String> = None;
    let violated = |w: String, witness: &mut Option<String>| {
        if witness.is_none() {
            *witness = Some(w);
        }
    };

    match (&invariant.parameters, invariant.template_id.as_str()) {
        (Params::UpperBound(bound), _) => {
            for v in uints(&observations) {
                if v > *bound {
                    violated(v.to_string(), &mut witness);
                }
            }
        }
        (Params::LowerBound(bound), _) => {
            for v in uints(&observations) {
                if v < *bound {
                    violated(v.to_string(), &mut witness);
                }
            }
        }
        (Params::AddressSet(set), _) => {
            for v in flat_values(&observations) {
                if let ObsValue::Address(a) = v {
                    if !set.contains(a) {
                        violated(format!("{a:?}"), &mut witness);
                    }
                }
            }
        }
        (Params::MinBlockGap(min_gap), _) => {
            let mut prev = ctx.last_invocation_block;
            for v in flat_values(&observations) {
                if let ObsValue::Block(b) = v {
                    if let Some(p) = prev {
                        let gap = b.saturating_sub(p);
                        if gap < *min_gap {
                            violated(format!("gap {gap} < {min_gap}"), &mut witness);
                        }
                    }
                    prev = Some(*b);
                }
            }
        }
        (Params::RatioRange { min, max }, _) => {
            for r in swap_ratios(&observations) {
                if r.lt(*min) || max.lt(r) {
                    violated(format!("ratio {}", r.render()), &mut witness);
                }
            }
        }
        (Params::FactorBound(bound), _) => {
            for f in slippage_factors(&observations) {
                if bound.lt(f) {
                    violated(format!("factor {}", f.render()), &mut witness);
                }
            }
        }
        (Params::SlotBounds(bounds), id) => {
            let upper = id == "MonitoredSlotUpperBound";
            for v in flat_values(&observations) {
                if let ObsValue::SlotAccess { base_slot, value, is_store: true } = v {
                    if let Some(bound) = bounds.get(base_slot) {
                        let bad = if upper { value > bound } else { value < bound };
                        if bad {
                            violated(
                                format!(
                                    "slot {} value {value}",
                                    crate::primitives::hex_word(*base_slot)
                                ),
                                &mut witness,
                            );
                        }
                    }
                }
            }
        }
        (Params::SlotFrozenValues(frozen), _) => {
            for v in flat_values(&observations) {
                if let ObsValue::SlotAccess { base_slot, value, .. } = v {
                    if let Some(expected) = frozen.get(base_slot) {
                        if value != expected {
                            violated(
                                format!(
                                    "slot {} changed to {}",
                                    crate::primitives::hex_word(*base_slot),
                                    crate::primitives::hex_word(*value)
                                ),
                                &mut witness,
                            );
                        }
                    }
                }
            }
        }
        (Params::None, id) => match id {
            "EOASenderOnly" | "OriginEqualsSender" => {
                for v in flat_values(&observations) {
                    if let ObsValue::CallerOrigin { caller, origin } = v {
                        if caller != origin {
                            violated(format!("{caller:?}"), &mut witness);
                        }
                    }
                }
            }
            "SameBlockReentryLock" => {
                let mut seen = ctx.seen_block_origins.clone();
                for v in flat_values(&observations) {
                    if let ObsValue::BlockOrigin { block, origin } = v {
                        if !seen.insert((*block, *origin)) {
                            violated(
                                format!("origin {origin:?} re-entered in block {block}"),
                                &mut witness,
                            );
                        }
                    }
                }
            }
            "SelfReentrancyLock" => {
                for v in flat_values(&observations) {
                    if let ObsValue::Count(n) = v {
                        if *n >= 2 {
                            violated(format!("nesting depth {n}"), &mut witness);
                        }
                    }
                }
            }
            "CrossContractReentrancyLock" => {
                for v in flat_values(&observations) {
                    if let ObsValue::Count(n) = v {
                        if *n >= 1 {
                            violated(format!("cross-selector nesting {n}"), &mut witness);
                        }
                    }
                }
            }
            "CalldataToDelegateTargetForbidden" => {
                for v in flat_values(&observations) {
                    if let ObsValue::Uint(w) = v {
                        violated(
                            format!("delegate target {}", crate::primitives::hex_word(*w)),
                            &mut witness,
                        );
                    }
                }
            }
            other => {
                return Err(InvariantError::Usage(format!(
                    "template {other} cannot carry empty parameters"
                )))
            }
        },
    }

    // Update chronological context for the time-lock templates.
    for v in flat_values(&observations) {
        match v {
            ObsValue::Block(b) => ctx.last_invocation_block = Some(*b),
            ObsValue::BlockOrigin { block, origin } => {
                ctx.seen_block_origins.insert((*block, *origin));
            }
            _ => {}
        }
    }

    Ok(GuardVerdict {
        template_id: invariant.template_id.clone(),
        target: invariant.target,
        tx_hash: artifacts.meta.tx_hash,
        outcome: if witness.is_some() {
            Outcome::Violate
        } else {
            Outcome::Pass
        },
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariants::template_by_id;

    fn hashes(n: usize) -> Vec<Hash32> {
        (0..n).map(|i| Hash32::repeat_byte(i as u8)).collect()
    }

    #[test]
    fn split_70_30_examples() {
        let (train, test) = split_corpus(&hashes(10), 0.7).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));

        let (train, test) = split_corpus(&hashes(31), 0.7).unwrap();
        assert_eq!((train.len(), test.len()), (22, 9));

        let (train, test) = split_corpus(&hashes(1), 0.7).unwrap();
        assert_eq!((train.len(), test.len()), (1, 0));
    }

    #[test]
    fn split_rejects_bad_inputs() {
        assert!(split_corpus(&[], 0.7).is_err());
        assert!(split_corpus(&hashes(5), 0.0).is_err());
        assert!(split_corpus(&hashes(5), 1.0).is_err());
    }

    #[test]
    fn split_is_chronological_prefix() {
        let hs = hashes(10);
        let (train, test) = split_corpus(&hs, 0.7).unwrap();
        assert_eq!(train, hs[..7].to_vec());
        assert_eq!(test, hs[7..].to_vec());
    }

    fn obs(values: Vec<ObsValue>) -> Observation {
        Observation {
            tx_hash: Hash32::repeat_byte(1),
            target: Target {
                address: Address::repeat_byte(2),
                selector: None,
            },
            values,
        }
    }

    #[test]
    fn gas_bound_is_max_of_observed() {
        let template = template_by_id("GasStartUpperBound").unwrap();
        let observations = vec![
            obs(vec![ObsValue::Uint(Word::from(90_000u64))]),
            obs(vec![ObsValue::Uint(Word::from(100_000u64))]),
            obs(vec![ObsValue::Uint(Word::from(75_000u64))]),
        ];
        let inv = infer(&template, &observations).unwrap().unwrap();
        assert_eq!(inv.parameters, Params::UpperBound(Word::from(100_000u64)));
        assert_eq!(inv.training_support, 3);
    }

    #[test]
    fn singleton_sender_set() {
        let template = template_by_id("AllowedSenderSet").unwrap();
        let a = Address::repeat_byte(0xaa);
        let inv = infer(&template, &[obs(vec![ObsValue::Address(a)])])
            .unwrap()
            .unwrap();
        match inv.parameters {
            Params::AddressSet(s) => assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![a]),
            other => panic!("unexpected params {other:?}"),
        }
    }

    #[test]
    fn violated_lock_is_not_emitted() {
        let template = template_by_id("EOASenderOnly").unwrap();
        let observations = vec![
            obs(vec![ObsValue::CallerOrigin {
                caller: Address::repeat_byte(1),
                origin: Address::repeat_byte(1),
            }]),
            obs(vec![ObsValue::CallerOrigin {
                caller: Address::repeat_byte(2),
                origin: Address::repeat_byte(1),
            }]),
        ];
        assert!(infer(&template, &observations).unwrap().is_none());
    }

    #[test]
    fn oversized_set_is_not_emitted() {
        let template = template_by_id("AllowedSenderSet").unwrap();
        let observations: Vec<Observation> = (0..=MAX_SET_SIZE)
            .map(|i| obs(vec![ObsValue::Address(Address::from_low_u64_be(i as u64 + 1))]))
            .collect();
        assert!(infer(&template, &observations).unwrap().is_none());
    }

    #[test]
    fn empty_observations_yield_nothing() {
        let template = template_by_id("GasStartUpperBound").unwrap();
        assert!(infer(&template, &[]).unwrap().is_none());
    }

    #[test]
    fn mixed_targets_are_a_usage_error() {
        let template = template_by_id("GasStartUpperBound").unwrap();
        let mut o2 = obs(vec![ObsValue::Uint(Word::one())]);
        o2.target.address = Address::repeat_byte(9);
        let observations = vec![obs(vec![ObsValue::Uint(Word::one())]), o2];
        assert!(matches!(
            infer(&template, &observations),
            Err(InvariantError::MixedTargets(_, _))
        ));
    }

    #[test]
    fn block_delay_gap_inference() {
        let template = template_by_id("BlockDelayLowerBound").unwrap();
        let observations = vec![
            obs(vec![ObsValue::Block(100)]),
            obs(vec![ObsValue::Block(107)]),
            obs(vec![ObsValue::Block(110)]),
        ];
        let inv = infer(&template, &observations).unwrap().unwrap();
        assert_eq!(inv.parameters, Params::MinBlockGap(3));
        // A single observation gives no gap.
        assert!(infer(&template, &observations[..1]).unwrap().is_none());
    }

    #[test]
    fn monotonicity_of_bounds_and_sets() {
        let template = template_by_id("GasStartUpperBound").unwrap();
        let mut observations = vec![obs(vec![ObsValue::Uint(Word::from(10u64))])];
        let first = infer(&template, &observations).unwrap().unwrap();
        observations.push(obs(vec![ObsValue::Uint(Word::from(5u64))]));
        let second = infer(&template, &observations).unwrap().unwrap();
        let (Params::UpperBound(b1), Params::UpperBound(b2)) =
            (first.parameters, second.parameters)
        else {
            panic!("expected bounds");
        };
        assert!(b2 >= b1, "adding data never lowers an upper bound");

        let template = template_by_id("AllowedSenderSet").unwrap();
        let mut observations = vec![obs(vec![ObsValue::Address(Address::repeat_byte(1))])];
        let small = infer(&template, &observations).unwrap().unwrap();
        observations.push(obs(vec![ObsValue::Address(Address::repeat_byte(2))]));
        let grown = infer(&template, &observations).unwrap().unwrap();
        let (Params::AddressSet(s1), Params::AddressSet(s2)) = (small.parameters, grown.parameters)
        else {
            panic!("expected sets");
        };
        assert!(s1.is_subset(&s2), "adding data never shrinks a set");
    }
}
