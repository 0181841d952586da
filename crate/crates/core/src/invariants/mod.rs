//! Invariant templates, observation collection, inference, and checking.
//!
//! Twenty-three templates across eight categories. Six categories derive
//! from the invocation tree alone; special-storage templates additionally
//! need decoded storage events, and data-flow templates need taint facts.
//! Inference is exact-extremum: upper bounds take the maximum observed
//! value, lower bounds the minimum, sets the union, and lock templates
//! are emitted only when training shows zero violations.

mod collect;
mod infer;

pub use collect::{collect_observations, matching_invocations, TxArtifacts};
pub use infer::{check, infer, split_corpus, CheckContext};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::parser::Selector;
use crate::primitives::{Address, Hash32, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    AccessControl,
    TimeLock,
    GasControl,
    OracleSlippage,
    Reentrancy,
    MoneyFlow,
    SpecialStorage,
    DataFlow,
}

/// What inputs a template needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    TreeOnly,
    Storage,
    Dataflow,
}

impl Category {
    pub fn tier(self) -> Tier {
        match self {
            Category::SpecialStorage => Tier::Storage,
            Category::DataFlow => Tier::Dataflow,
            _ => Tier::TreeOnly,
        }
    }
}

/// A parameterized guard shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvariantTemplate {
    pub id: &'static str,
    pub category: Category,
    pub tier: Tier,
    pub parameter_shape: &'static str,
}

const fn template(
    id: &'static str,
    category: Category,
    parameter_shape: &'static str,
) -> InvariantTemplate {
    InvariantTemplate {
        id,
        category,
        tier: match category {
            Category::SpecialStorage => Tier::Storage,
            Category::DataFlow => Tier::Dataflow,
            _ => Tier::TreeOnly,
        },
        parameter_shape,
    }
}

/// The full template roster: 23 templates, 8 categories.
pub fn template_catalog() -> Vec<InvariantTemplate> {
    vec![
        template("EOASenderOnly", Category::AccessControl, "none (lock)"),
        template("AllowedSenderSet", Category::AccessControl, "a set of addresses"),
        template("AllowedOriginSet", Category::AccessControl, "a set of addresses"),
        template("OriginEqualsSender", Category::AccessControl, "none (lock)"),
        template("SameBlockReentryLock", Category::TimeLock, "none (lock)"),
        template("BlockDelayLowerBound", Category::TimeLock, "one block-count lower bound"),
        template("GasStartUpperBound", Category::GasControl, "one unsigned upper bound"),
        template("GasConsumedUpperBound", Category::GasControl, "one unsigned upper bound"),
        template("PriceRatioRange", Category::OracleSlippage, "a ratio interval"),
        template("SwapSlippageBound", Category::OracleSlippage, "one ratio upper bound"),
        template("SelfReentrancyLock", Category::Reentrancy, "none (lock)"),
        template("CrossContractReentrancyLock", Category::Reentrancy, "none (lock)"),
        template("TransferInUpperBound", Category::MoneyFlow, "one unsigned upper bound"),
        template("TransferOutUpperBound", Category::MoneyFlow, "one unsigned upper bound"),
        template("EtherInUpperBound", Category::MoneyFlow, "one unsigned upper bound"),
        template("EtherOutUpperBound", Category::MoneyFlow, "one unsigned upper bound"),
        template("MonitoredSlotUpperBound", Category::SpecialStorage, "per-variable upper bounds"),
        template("MonitoredSlotLowerBound", Category::SpecialStorage, "per-variable lower bounds"),
        template("OwnerSlotUnchanged", Category::SpecialStorage, "per-variable frozen values"),
        template("TaintedSinkUpperBound", Category::DataFlow, "one unsigned upper bound"),
        template("TaintedSinkLowerBound", Category::DataFlow, "one unsigned lower bound"),
        template("CalldataToDelegateTargetForbidden", Category::DataFlow, "none (lock)"),
        template("CalldataToCallValueBound", Category::DataFlow, "one unsigned upper bound"),
    ]
}

pub fn template_by_id(id: &str) -> Option<InvariantTemplate> {
    template_catalog().into_iter().find(|t| t.id == id)
}

/// The (contract, function) a guard protects. Selector is absent for
/// fallback-style invocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Target {
    pub address: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
}

/// One template-specific observed value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsValue {
    Uint(Word),
    Address(Address),
    CallerOrigin { caller: Address, origin: Address },
    BlockOrigin { block: u64, origin: Address },
    Block(u64),
    AmountPair { a0: Word, a1: Word },
    SlotAccess { base_slot: Word, value: Word, is_store: bool },
    Count(u64),
}

impl ObsValue {
    pub fn render(&self) -> String {
        match self {
            ObsValue::Uint(w) => w.to_string(),
            ObsValue::Address(a) => format!("{a:?}"),
            ObsValue::CallerOrigin { caller, origin } => {
                format!("caller={caller:?} origin={origin:?}")
            }
            ObsValue::BlockOrigin { block, origin } => format!("block={block} origin={origin:?}"),
            ObsValue::Block(b) => b.to_string(),
            ObsValue::AmountPair { a0, a1 } => format!("amounts=({a0}, {a1})"),
            ObsValue::SlotAccess { base_slot, value, is_store } => format!(
                "{} slot {} value {}",
                if *is_store { "store" } else { "load" },
                crate::primitives::hex_word(*base_slot),
                value
            ),
            ObsValue::Count(n) => n.to_string(),
        }
    }
}

/// What one invocation of the target contributed. `values` usually holds
/// one entry; aggregating templates (taint sinks, slot accesses, swap
/// pairs) may attach several per invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub tx_hash: Hash32,
    pub target: Target,
    pub values: Vec<ObsValue>,
}

/// An exact ratio compared by 512-bit cross multiplication, so amounts
/// never lose precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: Word,
    pub den: Word,
}

impl Ratio {
    pub fn new(num: Word, den: Word) -> Self {
        Ratio { num, den }
    }

    fn cross(self, other: Ratio) -> (primitive_types::U512, primitive_types::U512) {
        (self.num.full_mul(other.den), other.num.full_mul(self.den))
    }

    pub fn le(self, other: Ratio) -> bool {
        let (a, b) = self.cross(other);
        a <= b
    }

    pub fn lt(self, other: Ratio) -> bool {
        let (a, b) = self.cross(other);
        a < b
    }

    pub fn render(self) -> String {
        format!("{}/{}", self.num, self.den)
    }
}

/// Concretized template parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Params {
    /// Lock templates carry no parameters; holding is the invariant.
    None,
    UpperBound(Word),
    LowerBound(Word),
    MinBlockGap(u64),
    AddressSet(BTreeSet<Address>),
    RatioRange { min: Ratio, max: Ratio },
    FactorBound(Ratio),
    SlotBounds(BTreeMap<Word, Word>),
    SlotFrozenValues(BTreeMap<Word, Word>),
}

/// A template bound to a target with concrete parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteInvariant {
    pub template_id: String,
    pub target: Target,
    pub parameters: Params,
    /// Number of training observations behind the parameters.
    pub training_support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Violate,
}

/// Result of checking one transaction against one invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardVerdict {
    pub template_id: String,
    pub target: Target,
    pub tx_hash: Hash32,
    pub outcome: Outcome,
    /// The offending value, present exactly when the outcome is violate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum InvariantError {
    #[error("template {template} needs {missing}, which was not collected")]
    TierViolation {
        template: String,
        missing: &'static str,
    },
    #[error("observations mix targets: {0:?} vs {1:?}")]
    MixedTargets(Target, Target),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("unknown template id: {0}")]
    UnknownTemplate(String),
}

/// Largest allowlist a set template may emit; beyond this the invariant
/// discriminates nothing worth guarding.
pub const MAX_SET_SIZE: usize = 64;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_23_templates_in_8_categories() {
        let catalog = template_catalog();
        assert_eq!(catalog.len(), 23);
        let categories: BTreeSet<Category> = catalog.iter().map(|t| t.category).collect();
        assert_eq!(categories.len(), 8);
        let ids: BTreeSet<&str> = catalog.iter().map(|t| t.id).collect();
        assert_eq!(ids.len(), 23, "template ids must be unique");
        assert!(ids.contains("GasStartUpperBound"));
    }

    #[test]
    fn tier_structure_follows_categories() {
        for t in template_catalog() {
            let expected = t.category.tier();
            assert_eq!(t.tier, expected, "{}", t.id);
            match t.category {
                Category::SpecialStorage => assert_eq!(t.tier, Tier::Storage),
                Category::DataFlow => assert_eq!(t.tier, Tier::Dataflow),
                _ => assert_eq!(t.tier, Tier::TreeOnly),
            }
        }
    }

    #[test]
    fn ratio_comparison_is_exact_at_word_scale() {
        let big = Word::MAX;
        let r1 = Ratio::new(big, Word::from(3u64));
        let r2 = Ratio::new(big, Word::from(2u64));
        assert!(r1.lt(r2));
        assert!(r1.le(r1));
        assert!(!r2.le(r1));
    }
}
