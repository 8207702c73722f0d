//! Search-based domain repair.
//!
//! A repair is a sequence of model manipulation operators (MMOs), each adding
//! a signed constant to one fluent. Because the operators commute, a repair
//! is identified by its canonical net-delta vector; the best-first search
//! below never expands two repairs with the same vector.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize, Serializer};

use crate::consistency::{expected_trajectory, inconsistency_score, ConsistencyConfig};
use crate::domain_model::{
    is_terminal, DomainModel, FluentName, FluentRecord, Plan, State, Trajectory,
};
use crate::error::{InvalidField, RepairError};

/// Adds `delta` to one fluent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mmo {
    fluent: FluentName,
    delta: f64,
}

impl Mmo {
    pub fn new(fluent: FluentName, delta: f64) -> Result<Self, InvalidField> {
        if !delta.is_finite() || delta == 0.0 {
            return Err(InvalidField::new(
                format!("mmo.{fluent}"),
                format!("delta must be finite and non-zero, got {delta}"),
            ));
        }
        Ok(Mmo { fluent, delta })
    }

    pub fn fluent(&self) -> FluentName {
        self.fluent
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// The operators available to the search, tried in this order.
#[derive(Debug, Clone, PartialEq)]
pub struct MmoSet {
    operators: Vec<Mmo>,
}

impl MmoSet {
    pub fn new(operators: Vec<Mmo>) -> Result<Self, InvalidField> {
        if operators.is_empty() {
            return Err(InvalidField::new("repair.mmos", "operator set is empty"));
        }
        let mut seen = HashSet::new();
        for op in &operators {
            if !seen.insert((op.fluent, op.delta.to_bits())) {
                return Err(InvalidField::new(
                    "repair.mmos",
                    format!("duplicate operator {}:{}", op.fluent, op.delta),
                ));
            }
        }
        Ok(MmoSet { operators })
    }

    /// `+step` and `-step` for each of `fluents`, in the given order.
    pub fn symmetric(
        fluents: &[FluentName],
        steps: &[f64; FluentName::COUNT],
    ) -> Result<Self, InvalidField> {
        let mut operators = Vec::with_capacity(2 * fluents.len());
        for &fluent in fluents {
            let step = steps[fluent.index()];
            if !(step.is_finite() && step > 0.0) {
                return Err(InvalidField::new(
                    format!("repair.steps.{fluent}"),
                    format!("step must be finite and > 0, got {step}"),
                ));
            }
            operators.push(Mmo::new(fluent, step)?);
            operators.push(Mmo::new(fluent, -step)?);
        }
        MmoSet::new(operators)
    }

    pub fn operators(&self) -> &[Mmo] {
        &self.operators
    }
}

/// An ordered sequence of MMOs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainRepair {
    mmos: Vec<Mmo>,
}

impl DomainRepair {
    pub fn empty() -> Self {
        DomainRepair::default()
    }

    pub fn from_mmos(mmos: Vec<Mmo>) -> Self {
        DomainRepair { mmos }
    }

    pub fn mmos(&self) -> &[Mmo] {
        &self.mmos
    }

    pub fn len(&self) -> usize {
        self.mmos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mmos.is_empty()
    }

    /// `self` followed by `mmo`.
    pub fn extended(&self, mmo: Mmo) -> Self {
        let mut mmos = Vec::with_capacity(self.mmos.len() + 1);
        mmos.extend_from_slice(&self.mmos);
        mmos.push(mmo);
        DomainRepair { mmos }
    }

    /// Net delta per fluent.
    ///
    /// Operators are counted per (fluent, |delta|) with opposite signs
    /// cancelling exactly, and each magnitude is multiplied out once. The
    /// result depends only on the multiset of MMOs, never on their order.
    pub fn canonical(&self) -> [f64; FluentName::COUNT] {
        let mut counts: [BTreeMap<u64, i64>; FluentName::COUNT] = Default::default();
        for mmo in &self.mmos {
            let sign = if mmo.delta > 0.0 { 1 } else { -1 };
            *counts[mmo.fluent.index()]
                .entry(mmo.delta.abs().to_bits())
                .or_insert(0) += sign;
        }
        let mut net = [0.0; FluentName::COUNT];
        for (slot, by_magnitude) in net.iter_mut().zip(&counts) {
            for (&bits, &count) in by_magnitude {
                if count != 0 {
                    *slot += count as f64 * f64::from_bits(bits);
                }
            }
        }
        net
    }

    fn key(&self) -> [u64; FluentName::COUNT] {
        // +0.0 and -0.0 are the same repair.
        self.canonical().map(|v| (v + 0.0).to_bits())
    }

    /// Sum of canonical vectors, e.g. to accumulate repairs across episodes.
    pub fn canonical_sum<'a>(
        repairs: impl IntoIterator<Item = &'a DomainRepair>,
    ) -> [f64; FluentName::COUNT] {
        let mut total = [0.0; FluentName::COUNT];
        for r in repairs {
            for (t, v) in total.iter_mut().zip(r.canonical()) {
                *t += v;
            }
        }
        total
    }

    /// Canonical JSON: `{fluent: net_delta}` for all seven fluents in order.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("repair serialization is infallible")
    }
}

impl Serialize for DomainRepair {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        FluentRecord::from_values(self.canonical().map(|v| v + 0.0)).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DomainRepair {
    /// Reads a canonical map back as one MMO per non-zero fluent.
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let record = FluentRecord::deserialize(deserializer)?;
        let mmos = FluentName::ALL
            .into_iter()
            .zip(record.into_values())
            .filter(|(_, v)| *v != 0.0)
            .map(|(f, v)| Mmo::new(f, v).map_err(serde::de::Error::custom))
            .collect::<Result<_, _>>()?;
        Ok(DomainRepair { mmos })
    }
}

/// Returns `model` with the repair's net deltas added. `model` is untouched.
pub fn apply_repair(
    model: &DomainModel,
    repair: &DomainRepair,
) -> Result<DomainModel, RepairError> {
    let mut values = *model.values();
    for (fluent, delta) in FluentName::ALL.into_iter().zip(repair.canonical()) {
        let value = values[fluent.index()] + delta;
        if !(value.is_finite() && value > 0.0) {
            return Err(RepairError::InvalidRepair { fluent, value });
        }
        values[fluent.index()] = value;
    }
    Ok(DomainModel::new(values).expect("all fluents checked positive"))
}

/// Restores the pristine base model. The base is kept rather than the deltas
/// subtracted, so apply followed by undo is bit-exact.
pub fn undo_repair(base: &DomainModel, _repair: &DomainRepair) -> DomainModel {
    *base
}

/// Fluents the search edits unless configured otherwise: the ones that enter
/// the dynamics. The termination limits are left out because shrinking them
/// shortens the predicted trajectory and so lowers the score without
/// explaining anything.
pub const DYNAMIC_FLUENTS: [FluentName; 5] = [
    FluentName::MassCart,
    FluentName::MassPole,
    FluentName::LengthPole,
    FluentName::ForceMag,
    FluentName::Gravity,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairConfig {
    /// Per-MMO penalty added to the inconsistency in the search priority.
    pub length_penalty: f64,
    pub max_expansions: usize,
    /// Fluents that get a `+step`/`-step` operator pair.
    pub fluents: Vec<FluentName>,
    /// MMO step used for fluents not listed in `steps`.
    pub default_step: f64,
    pub steps: BTreeMap<FluentName, f64>,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            length_penalty: 0.01,
            max_expansions: 10_000,
            fluents: DYNAMIC_FLUENTS.to_vec(),
            default_step: 0.1,
            steps: BTreeMap::new(),
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if !(self.length_penalty.is_finite() && self.length_penalty >= 0.0) {
            return Err(InvalidField::new(
                "repair.length_penalty",
                format!("must be finite and >= 0, got {}", self.length_penalty),
            ));
        }
        if self.max_expansions == 0 {
            return Err(InvalidField::new(
                "repair.max_expansions",
                "must be at least 1",
            ));
        }
        if !(self.default_step.is_finite() && self.default_step > 0.0) {
            return Err(InvalidField::new(
                "repair.default_step",
                format!("must be finite and > 0, got {}", self.default_step),
            ));
        }
        self.mmo_set().map(|_| ())
    }

    pub fn step_sizes(&self) -> [f64; FluentName::COUNT] {
        FluentName::ALL.map(|f| self.steps.get(&f).copied().unwrap_or(self.default_step))
    }

    pub fn mmo_set(&self) -> Result<MmoSet, InvalidField> {
        if self.fluents.is_empty() {
            return Err(InvalidField::new("repair.fluents", "no fluents to repair"));
        }
        if let Some(f) = self
            .fluents
            .iter()
            .enumerate()
            .find_map(|(i, f)| self.fluents[..i].contains(f).then_some(f))
        {
            return Err(InvalidField::new(
                "repair.fluents",
                format!("{f} listed twice"),
            ));
        }
        MmoSet::symmetric(&self.fluents, &self.step_sizes())
    }
}

/// Search priority: inconsistency plus a per-MMO length penalty.
pub fn f_priority(repair: &DomainRepair, score: f64, cfg: &RepairConfig) -> f64 {
    score + cfg.length_penalty * repair.len() as f64
}

#[derive(Debug, Clone)]
pub struct RepairOutcome {
    pub repair: DomainRepair,
    pub score: f64,
    pub expansions: usize,
    pub evaluations: usize,
    /// Canonical vectors in expansion order.
    pub expanded: Vec<[f64; FluentName::COUNT]>,
}

struct OpenEntry {
    priority: f64,
    seq: u64,
    repair: DomainRepair,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Whether `model` would have ended the episode at an observed state from
/// which the environment in fact kept going.
fn contradicts_survival(model: &DomainModel, observed: &[State]) -> bool {
    observed[..observed.len() - 1]
        .iter()
        .any(|s| is_terminal(model, s))
}

/// Best-first search for a repair that makes `model` consistent with `tau`.
///
/// The empty repair is scored first and returned if already consistent.
/// Each expansion pops the repair with the lowest [`f_priority`] (FIFO among
/// ties) and scores every one-MMO extension in set order. Extensions whose
/// canonical vector was already generated are skipped, as are extensions
/// that make a fluent non-positive or that would declare an observed
/// non-final state terminal. The search stops as soon as the best score
/// drops below the threshold.
pub fn repair_search(
    mmos: &MmoSet,
    model: &DomainModel,
    executed_plan: &Plan,
    tau: &Trajectory,
    consistency: &ConsistencyConfig,
    cfg: &RepairConfig,
) -> Result<RepairOutcome, RepairError> {
    if tau.is_empty() {
        return Err(RepairError::EmptyTrajectory);
    }
    let observed = tau.states();
    let s0 = tau.initial_state();
    let threshold = consistency.threshold;

    let evaluate = |repair: &DomainRepair| -> Option<f64> {
        let candidate = apply_repair(model, repair).ok()?;
        if contradicts_survival(&candidate, &observed) {
            return None;
        }
        let expected = expected_trajectory(&candidate, s0, executed_plan);
        let score =
            inconsistency_score(&expected, &observed, consistency).expect("sequences non-empty");
        score.is_finite().then_some(score)
    };

    let root = DomainRepair::empty();
    let mut evaluations = 1;
    // The current model is scored even if it contradicts survival, so the
    // search always has a baseline.
    let root_score = {
        let expected = expected_trajectory(model, s0, executed_plan);
        inconsistency_score(&expected, &observed, consistency).expect("sequences non-empty")
    };
    let mut best = (root.clone(), root_score);
    let mut expanded = Vec::new();
    if root_score < threshold {
        return Ok(RepairOutcome {
            repair: root,
            score: root_score,
            expansions: 0,
            evaluations,
            expanded,
        });
    }

    let mut generated = HashSet::new();
    generated.insert(root.key());
    let mut seq = 0u64;
    let mut open = BinaryHeap::new();
    open.push(Reverse(OpenEntry {
        priority: f_priority(&root, root_score, cfg),
        seq,
        repair: root,
    }));

    while let Some(Reverse(entry)) = open.pop() {
        if expanded.len() >= cfg.max_expansions {
            break;
        }
        expanded.push(entry.repair.canonical());
        for &mmo in mmos.operators() {
            let child = entry.repair.extended(mmo);
            if !generated.insert(child.key()) {
                continue;
            }
            evaluations += 1;
            let Some(score) = evaluate(&child) else {
                continue;
            };
            if score < best.1 {
                best = (child.clone(), score);
            }
            seq += 1;
            open.push(Reverse(OpenEntry {
                priority: f_priority(&child, score, cfg),
                seq,
                repair: child,
            }));
        }
        if best.1 < threshold {
            return Ok(RepairOutcome {
                repair: best.0,
                score: best.1,
                expansions: expanded.len(),
                evaluations,
                expanded,
            });
        }
    }

    Err(RepairError::RepairExhausted {
        best: best.0,
        best_score: best.1,
        expansions: expanded.len(),
    })
}
