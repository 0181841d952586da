//! The invariant protocol end to end over the synthetic sample corpus:
//! catalog shape, chronological split, training consistency, bound
//! tightness, and exploit detection.

use txlens_core::invariants::{
    check, template_catalog, CheckContext, ConcreteInvariant, Outcome, Params, TxArtifacts,
};
use txlens_core::pipeline::{
    analyze_tx, build_artifacts, infer_for_contract, parse_tx_list, AnalysisNeeds, RunConfig,
    TxRef,
};
use txlens_core::primitives::Word;
use txlens_core::samples;

struct Protocol {
    _dir: tempfile::TempDir,
    training: Vec<TxArtifacts>,
    test: Vec<TxArtifacts>,
    exploit: TxArtifacts,
    invariants: Vec<ConcreteInvariant>,
    per_template: Vec<txlens_core::pipeline::TemplateSummary>,
}

fn run_protocol() -> Protocol {
    let dir = tempfile::tempdir().unwrap();
    let corpus = samples::write_sample_corpus(dir.path()).unwrap();
    let config = RunConfig {
        endpoint: None,
        cache_dir: dir.path().join("cache"),
        config_dir: corpus.config_dir.clone(),
        train_fraction: 0.7,
        memory_capture: false,
        template_filter: None,
    };
    let refs = parse_tx_list(&std::fs::read_to_string(&corpus.txlist).unwrap());
    assert_eq!(refs.len(), 10);
    let needs = AnalysisNeeds {
        decode_calls: true,
        decode_storage: true,
        dataflow: true,
    };
    let (artifacts, failures) = build_artifacts(&refs, &config, needs);
    assert!(failures.is_empty(), "{failures:?}");
    let mut artifacts = artifacts;
    let test = artifacts.split_off(7);
    let training = artifacts;

    let (exploit_artifacts, exploit_failures) = build_artifacts(
        &[TxRef::Fixture(corpus.exploit.clone())],
        &config,
        needs,
    );
    assert!(exploit_failures.is_empty());

    let outcome =
        infer_for_contract(corpus.vault, &training, &template_catalog()).unwrap();
    Protocol {
        _dir: dir,
        training,
        test,
        exploit: exploit_artifacts.into_iter().next().unwrap(),
        invariants: outcome.invariants,
        per_template: outcome.per_template,
    }
}

#[test]
fn catalog_is_23_templates_8_categories() {
    let catalog = template_catalog();
    assert_eq!(catalog.len(), 23);
    let categories: std::collections::BTreeSet<_> =
        catalog.iter().map(|t| t.category).collect();
    assert_eq!(categories.len(), 8);
}

#[test]
fn protocol_end_to_end() {
    let protocol = run_protocol();

    // A healthy spread of invariants must come out of training.
    assert!(
        protocol.invariants.len() >= 15,
        "only {} invariants inferred",
        protocol.invariants.len()
    );
    let ids: std::collections::BTreeSet<&str> = protocol
        .invariants
        .iter()
        .map(|i| i.template_id.as_str())
        .collect();
    for expected in [
        "EOASenderOnly",
        "AllowedSenderSet",
        "GasStartUpperBound",
        "GasConsumedUpperBound",
        "BlockDelayLowerBound",
        "SelfReentrancyLock",
        "TransferInUpperBound",
        "MonitoredSlotUpperBound",
        "OwnerSlotUnchanged",
        "TaintedSinkUpperBound",
        "CalldataToDelegateTargetForbidden",
    ] {
        assert!(ids.contains(expected), "missing {expected}: {ids:?}");
    }

    // Oracle-slippage templates never apply to this corpus.
    for summary in &protocol.per_template {
        if matches!(
            summary.template_id.as_str(),
            "PriceRatioRange" | "SwapSlippageBound"
        ) {
            assert!(summary.not_applicable, "{summary:?}");
            assert_eq!(summary.invariants, 0);
        }
    }

    // Training consistency: every invariant passes 100% of its own
    // training transactions.
    for invariant in &protocol.invariants {
        let mut ctx = CheckContext::default();
        for artifacts in &protocol.training {
            let verdict = check(invariant, artifacts, &mut ctx).unwrap();
            assert_eq!(
                verdict.outcome,
                Outcome::Pass,
                "{} violated training tx {:?}: {:?}",
                invariant.template_id,
                artifacts.meta.tx_hash,
                verdict.witness
            );
        }
    }

    // Held-out (non-exploit) transactions stay within trained behavior
    // for the gas bound.
    let gas_bound = protocol
        .invariants
        .iter()
        .find(|i| i.template_id == "GasStartUpperBound")
        .expect("gas bound inferred");
    let Params::UpperBound(bound) = gas_bound.parameters else {
        panic!("unexpected params");
    };
    assert_eq!(bound, Word::from(56_000u64), "max training gas limit");
    {
        let mut ctx = CheckContext::default();
        for artifacts in &protocol.test {
            // Test txs exceed the training gas ceiling here by design of
            // the gas schedule, so this invariant flags them.
            let verdict = check(gas_bound, artifacts, &mut ctx).unwrap();
            assert_eq!(verdict.outcome, Outcome::Violate);
        }
    }

    // The exploit is flagged with the offending gas value as witness.
    let mut ctx = CheckContext::default();
    let verdict = check(gas_bound, &protocol.exploit, &mut ctx).unwrap();
    assert_eq!(verdict.outcome, Outcome::Violate);
    assert_eq!(verdict.witness.as_deref(), Some("150000"));
}

/// Lowering an upper bound by one (or raising a lower bound by one) must
/// make at least one training transaction violate: inference is exact.
#[test]
fn bound_tightness_over_training() {
    let protocol = run_protocol();
    let mut bounds_checked = 0;

    for invariant in &protocol.invariants {
        let tightened = match &invariant.parameters {
            Params::UpperBound(b) => {
                if b.is_zero() {
                    continue; // cannot tighten below zero
                }
                ConcreteInvariant {
                    parameters: Params::UpperBound(*b - Word::one()),
                    ..invariant.clone()
                }
            }
            Params::LowerBound(b) => ConcreteInvariant {
                parameters: Params::LowerBound(*b + Word::one()),
                ..invariant.clone()
            },
            Params::MinBlockGap(g) => ConcreteInvariant {
                parameters: Params::MinBlockGap(g + 1),
                ..invariant.clone()
            },
            Params::SlotBounds(bounds) => {
                let upper = invariant.template_id == "MonitoredSlotUpperBound";
                let tightened: std::collections::BTreeMap<Word, Word> = bounds
                    .iter()
                    .map(|(slot, b)| {
                        let nb = if upper {
                            b.saturating_sub(Word::one())
                        } else {
                            *b + Word::one()
                        };
                        (*slot, nb)
                    })
                    .collect();
                ConcreteInvariant {
                    parameters: Params::SlotBounds(tightened),
                    ..invariant.clone()
                }
            }
            _ => continue,
        };

        let mut ctx = CheckContext::default();
        let mut violations = 0;
        for artifacts in &protocol.training {
            let verdict = check(&tightened, artifacts, &mut ctx).unwrap();
            if verdict.outcome == Outcome::Violate {
                violations += 1;
            }
        }
        assert!(
            violations > 0,
            "{} bound is not tight: {:?}",
            invariant.template_id,
            invariant.parameters
        );
        bounds_checked += 1;
    }
    assert!(bounds_checked >= 5, "only {bounds_checked} bound templates exercised");
}

#[test]
fn vacuous_pass_for_unrelated_transactions() {
    let protocol = run_protocol();
    // A transaction that never touches the vault passes everything.
    let mut world = txlens_core::oracle::MockWorld::new();
    let other = txlens_core::primitives::Address::repeat_byte(0x77);
    world.set_balance(txlens_core::primitives::Address::repeat_byte(0xee), Word::MAX);
    world.deploy_program(other, "PUSH1 0\nPUSH1 0\nRETURN\n").unwrap();
    let meta = txlens_core::oracle::meta_for(
        0x99,
        txlens_core::primitives::Address::repeat_byte(0xee),
        Some(other),
        vec![],
        10_000,
    );
    let gt = txlens_core::oracle::execute(&mut world, &meta, false).unwrap();
    let config = RunConfig::default();
    let artifacts = analyze_tx(
        gt.meta_with_outcome(&meta),
        &gt.trace,
        &config,
        AnalysisNeeds {
            decode_calls: true,
            decode_storage: true,
            dataflow: true,
        },
    )
    .unwrap();
    for invariant in &protocol.invariants {
        let mut ctx = CheckContext::default();
        let verdict = check(invariant, &artifacts, &mut ctx).unwrap();
        assert_eq!(verdict.outcome, Outcome::Pass, "{}", invariant.template_id);
    }
}

#[test]
fn storage_paths_decode_in_sample_corpus() {
    // The vault writes balances[caller] through a keccak-derived slot;
    // the decoded path must name the mapping and reproduce the raw slot.
    let protocol = run_protocol();
    let artifacts = &protocol.training[0];
    let mut saw_mapping_store = false;
    for node in artifacts.tree.walk() {
        for event in &node.storage_events {
            if let Some(path) = &event.decoded {
                assert_eq!(path.forward_eval(), event.raw_slot);
                if path.base_slot == Word::from(2u64) && !path.steps.is_empty() {
                    saw_mapping_store = true;
                    assert_eq!(path.variable_name.as_deref(), Some("balances"));
                }
            }
        }
    }
    assert!(saw_mapping_store, "mapping store was not decoded");
}
