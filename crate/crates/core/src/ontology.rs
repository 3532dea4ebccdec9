//! Slot ontology, user goals, goal sampling, and the subgoal lattice.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `|C| + |R|` a goal may have. Subgoal enumeration is exponential in it.
pub const MAX_GOAL_SLOTS: usize = 8;

/// Symbol a user gives for a constraint slot its goal does not mention.
pub const DONT_CARE: &str = "dontcare";

const DESK_JSON: &str = include_str!("../data/desk.json");
const FULL_JSON: &str = include_str!("../data/full.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    /// Search constraint supplied by the user (number of people, date, ...).
    Constraint,
    /// Property the system looks up and reports (theater, rating, ...).
    Informable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub kind: SlotKind,
    pub values: Vec<String>,
}

/// The slot inventory plus a lookup table from name to position.
#[derive(Debug, Clone, PartialEq)]
pub struct Ontology {
    slots: Vec<Slot>,
    index: HashMap<String, usize>,
    constraint_slots: Vec<usize>,
    informable_slots: Vec<usize>,
}

impl Ontology {
    pub fn new(slots: Vec<Slot>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Config("ontology has no slots".into()));
        }
        let mut index = HashMap::with_capacity(slots.len());
        for (i, slot) in slots.iter().enumerate() {
            if slot.name.is_empty() || slot.name == DONT_CARE {
                return Err(Error::Config(format!("invalid slot name {:?}", slot.name)));
            }
            if index.insert(slot.name.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate slot {:?}", slot.name)));
            }
            if slot.values.is_empty() {
                return Err(Error::Config(format!("slot {:?} has no values", slot.name)));
            }
            let distinct: BTreeSet<&String> = slot.values.iter().collect();
            if distinct.len() != slot.values.len() {
                return Err(Error::Config(format!("slot {:?} repeats a value", slot.name)));
            }
            if slot.values.iter().any(|v| v == DONT_CARE) {
                return Err(Error::Config(format!(
                    "slot {:?} uses the reserved value {DONT_CARE:?}",
                    slot.name
                )));
            }
        }
        let constraint_slots: Vec<usize> = (0..slots.len())
            .filter(|&i| slots[i].kind == SlotKind::Constraint)
            .collect();
        let informable_slots: Vec<usize> = (0..slots.len())
            .filter(|&i| slots[i].kind == SlotKind::Informable)
            .collect();
        if constraint_slots.is_empty() {
            return Err(Error::Config("ontology has no constraint slots".into()));
        }
        Ok(Self {
            slots,
            index,
            constraint_slots,
            informable_slots,
        })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.index.get(name).map(|&i| &self.slots[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Constraint slots in ontology order.
    pub fn constraint_slots(&self) -> impl Iterator<Item = &Slot> + '_ {
        self.constraint_slots.iter().map(|&i| &self.slots[i])
    }

    /// Informable slots in ontology order.
    pub fn informable_slots(&self) -> impl Iterator<Item = &Slot> + '_ {
        self.informable_slots.iter().map(|&i| &self.slots[i])
    }

    pub fn num_constraint_slots(&self) -> usize {
        self.constraint_slots.len()
    }

    pub fn num_informable_slots(&self) -> usize {
        self.informable_slots.len()
    }

    pub fn is_valid_value(&self, slot: &str, value: &str) -> bool {
        self.slot(slot)
            .is_some_and(|s| s.values.iter().any(|v| v == value))
    }

    /// Database lookup: the value of informable `slot` for the entry selected by
    /// the given (known) constraint assignment.
    ///
    /// The table is virtual: every constraint assignment has exactly one entry,
    /// whose informable values are a fixed hash of the assignment. Two
    /// assignments that differ in any slot generally resolve to different rows.
    pub fn lookup(&self, constraints: &BTreeMap<String, String>, slot: &str) -> Option<&str> {
        let target = self.slot(slot)?;
        if target.kind != SlotKind::Informable {
            return None;
        }
        let mut h = Fnv::new();
        h.write(slot.as_bytes());
        for (k, v) in constraints {
            if v == DONT_CARE {
                continue;
            }
            h.write(&[0xff]);
            h.write(k.as_bytes());
            h.write(&[0xfe]);
            h.write(v.as_bytes());
        }
        let idx = (h.finish() % target.values.len() as u64) as usize;
        Some(&target.values[idx])
    }

    /// Number of table rows consistent with a partially known assignment:
    /// the product of the value-pool sizes of the still-unknown constraint slots.
    pub fn match_count<'a>(&self, unknown: impl IntoIterator<Item = &'a str>) -> u64 {
        unknown
            .into_iter()
            .filter_map(|name| self.slot(name))
            .fold(1u64, |acc, s| acc.saturating_mul(s.values.len() as u64))
    }
}

/// 64-bit FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// A user goal `G = (C, R)`: constraint values to satisfy and slots to be told.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Goal {
    pub constraints: BTreeMap<String, String>,
    pub requests: BTreeSet<String>,
}

impl Goal {
    pub fn new(constraints: BTreeMap<String, String>, requests: BTreeSet<String>) -> Self {
        Self {
            constraints,
            requests,
        }
    }

    pub fn size(&self) -> usize {
        self.constraints.len() + self.requests.len()
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        if self.size() == 0 {
            return Err(Error::Config("goal is empty".into()));
        }
        if self.size() > MAX_GOAL_SLOTS {
            return Err(Error::Config(format!(
                "goal mentions {} slots; the cap is {MAX_GOAL_SLOTS}",
                self.size()
            )));
        }
        for (slot, value) in &self.constraints {
            let s = ontology
                .slot(slot)
                .ok_or_else(|| Error::Config(format!("unknown slot {slot:?}")))?;
            if s.kind != SlotKind::Constraint {
                return Err(Error::Config(format!("{slot:?} is not a constraint slot")));
            }
            if !s.values.contains(value) {
                return Err(Error::Config(format!("{value:?} is not a value of {slot:?}")));
            }
        }
        for slot in &self.requests {
            if self.constraints.contains_key(slot) {
                return Err(Error::Config(format!(
                    "{slot:?} is both constrained and requested"
                )));
            }
            let s = ontology
                .slot(slot)
                .ok_or_else(|| Error::Config(format!("unknown slot {slot:?}")))?;
            if s.kind != SlotKind::Informable {
                return Err(Error::Config(format!("{slot:?} is not an informable slot")));
            }
        }
        Ok(())
    }

    /// The value a consistent answer to request `slot` must have.
    pub fn answer<'o>(&self, ontology: &'o Ontology, slot: &str) -> Option<&'o str> {
        ontology.lookup(&self.constraints, slot)
    }
}

/// `G' = (C', R')` with `C' ⊆ C`, `R' ⊆ R` of its parent, never empty.
///
/// Equality and hashing consider only `(C', R')`: two dialogs with different
/// goals can share a subgoal, which is what stitching relies on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Subgoal {
    pub constraints: BTreeMap<String, String>,
    pub requests: BTreeSet<String>,
    pub parent: Arc<Goal>,
}

impl Subgoal {
    pub fn size(&self) -> usize {
        self.constraints.len() + self.requests.len()
    }

    pub fn key(&self) -> (&BTreeMap<String, String>, &BTreeSet<String>) {
        (&self.constraints, &self.requests)
    }

    /// The subgoal viewed as a goal of its own.
    pub fn as_goal(&self) -> Goal {
        Goal::new(self.constraints.clone(), self.requests.clone())
    }
}

impl PartialEq for Subgoal {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Subgoal {}

impl std::hash::Hash for Subgoal {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Member<'a> {
    Constraint(&'a str, &'a str),
    Request(&'a str),
}

impl Member<'_> {
    fn name(&self) -> &str {
        match self {
            Member::Constraint(n, _) | Member::Request(n) => n,
        }
    }
}

/// All nonempty subgoals of `goal`, `2^(|C|+|R|) − 1` of them.
///
/// The slots of `C ∪ R` are sorted by name and subset masks are visited in
/// increasing numeric order, bit `i` selecting the `i`-th slot.
pub fn enumerate_subgoals(goal: &Goal) -> Vec<Subgoal> {
    let parent = Arc::new(goal.clone());
    let mut members: Vec<Member<'_>> = goal
        .constraints
        .iter()
        .map(|(k, v)| Member::Constraint(k, v))
        .chain(goal.requests.iter().map(|k| Member::Request(k)))
        .collect();
    members.sort_by(|a, b| a.name().cmp(b.name()));
    let n = members.len();
    assert!(n < 32, "goal too large to enumerate");
    let mut out = Vec::with_capacity((1usize << n).saturating_sub(1));
    for mask in 1u32..(1u32 << n) {
        let mut constraints = BTreeMap::new();
        let mut requests = BTreeSet::new();
        for (i, m) in members.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            match *m {
                Member::Constraint(k, v) => {
                    constraints.insert(k.to_owned(), v.to_owned());
                }
                Member::Request(k) => {
                    requests.insert(k.to_owned());
                }
            }
        }
        out.push(Subgoal {
            constraints,
            requests,
            parent: Arc::clone(&parent),
        });
    }
    out
}

/// Whether `candidate` is a nonempty sub-pair of `goal` with matching values.
pub fn is_subgoal(candidate: &Subgoal, goal: &Goal) -> bool {
    if candidate.size() == 0 {
        return false;
    }
    candidate
        .constraints
        .iter()
        .all(|(k, v)| goal.constraints.get(k) == Some(v))
        && candidate.requests.is_subset(&goal.requests)
}

/// Either a single value or a list of values; an empty list means the slot's full pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValuePool {
    One(String),
    Many(Vec<String>),
}

impl ValuePool {
    fn resolve<'a>(&'a self, slot: &'a Slot) -> &'a [String] {
        match self {
            ValuePool::One(v) => std::slice::from_ref(v),
            ValuePool::Many(v) if v.is_empty() => &slot.values,
            ValuePool::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTemplate {
    pub weight: f64,
    pub constraints: BTreeMap<String, ValuePool>,
    #[serde(default)]
    pub requests: BTreeSet<String>,
}

/// Weighted goal templates bound to an ontology.
#[derive(Debug, Clone)]
pub struct GoalTemplateSet {
    ontology: Arc<Ontology>,
    templates: Vec<GoalTemplate>,
}

impl GoalTemplateSet {
    pub fn new(ontology: Arc<Ontology>, templates: Vec<GoalTemplate>) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::Config("goal template set is empty".into()));
        }
        let mut total = 0.0;
        for (i, t) in templates.iter().enumerate() {
            if !t.weight.is_finite() || t.weight < 0.0 {
                return Err(Error::Config(format!("template {i} has weight {}", t.weight)));
            }
            total += t.weight;
            for (slot, pool) in &t.constraints {
                let s = ontology
                    .slot(slot)
                    .ok_or_else(|| Error::Config(format!("template {i}: unknown slot {slot:?}")))?;
                for v in pool.resolve(s) {
                    if !s.values.contains(v) {
                        return Err(Error::Config(format!(
                            "template {i}: {v:?} is not a value of {slot:?}"
                        )));
                    }
                }
            }
            // Validate the template's shape with an arbitrary representative goal.
            let probe = Goal::new(
                t.constraints
                    .iter()
                    .map(|(k, pool)| {
                        let s = ontology.slot(k).expect("checked above");
                        (k.clone(), pool.resolve(s)[0].clone())
                    })
                    .collect(),
                t.requests.clone(),
            );
            probe
                .validate(&ontology)
                .map_err(|e| Error::Config(format!("template {i}: {e}")))?;
        }
        if total <= 0.0 {
            return Err(Error::Config("template weights sum to zero".into()));
        }
        Ok(Self {
            ontology,
            templates,
        })
    }

    pub fn ontology(&self) -> &Arc<Ontology> {
        &self.ontology
    }

    pub fn templates(&self) -> &[GoalTemplate] {
        &self.templates
    }

    pub fn max_goal_size(&self) -> usize {
        self.templates
            .iter()
            .map(|t| t.constraints.len() + t.requests.len())
            .max()
            .unwrap_or(0)
    }
}

/// Draw a template by weight, then each constrained value uniformly from its pool.
pub fn sample_goal<R: Rng + ?Sized>(templates: &GoalTemplateSet, rng: &mut R) -> Result<Goal> {
    if templates.templates.is_empty() {
        return Err(Error::Config("goal template set is empty".into()));
    }
    let weights = WeightedIndex::new(templates.templates.iter().map(|t| t.weight))
        .map_err(|e| Error::Config(format!("template weights: {e}")))?;
    let template = &templates.templates[weights.sample(rng)];
    let mut constraints = BTreeMap::new();
    for (slot, pool) in &template.constraints {
        let s = templates.ontology.slot(slot).expect("validated template");
        let values = pool.resolve(s);
        let v = &values[rng.gen_range(0..values.len())];
        constraints.insert(slot.clone(), v.clone());
    }
    Ok(Goal::new(constraints, template.requests.clone()))
}

/// On-disk layout of an ontology file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OntologyFile {
    pub slots: Vec<Slot>,
    pub templates: Vec<GoalTemplate>,
}

/// An ontology together with the goal templates drawn against it.
#[derive(Debug, Clone)]
pub struct Domain {
    pub ontology: Arc<Ontology>,
    pub templates: GoalTemplateSet,
}

impl Domain {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: OntologyFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("ontology json: {e}")))?;
        Self::from_file(file)
    }

    pub fn from_file(file: OntologyFile) -> Result<Self> {
        let ontology = Arc::new(Ontology::new(file.slots)?);
        let templates = GoalTemplateSet::new(Arc::clone(&ontology), file.templates)?;
        Ok(Self {
            ontology,
            templates,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Eight-slot movie-booking domain used by default and by the tests.
    pub fn desk() -> Self {
        Self::from_json(DESK_JSON).expect("bundled desk ontology is valid")
    }

    /// Twenty-nine-slot movie-booking domain.
    pub fn full() -> Self {
        Self::from_json(FULL_JSON).expect("bundled full ontology is valid")
    }

    /// `"desk"`, `"full"`, or a path to an ontology JSON file.
    pub fn resolve(source: &str) -> Result<Self> {
        match source {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            path => Self::load(Path::new(path)),
        }
    }

    pub fn to_file(&self) -> OntologyFile {
        OntologyFile {
            slots: self.ontology.slots().to_vec(),
            templates: self.templates.templates().to_vec(),
        }
    }
}
