//! Hindsight manager: head and tail segments, KL-gated stitching, relabeling.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufRead, Write};
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Dialog, Outcome, RewardScheme, Source, StateLayout, StateVector, TrackerState, Turn, DECODED_FILL};
use crate::error::{Error, Result};
use crate::ontology::{enumerate_subgoals, Goal, Ontology, Subgoal};

pub const DEFAULT_DELTA: f64 = 0.2;
pub const DEFAULT_SEGMENT_CAPACITY: usize = 2000;
/// Belief mass on the goal value for a constraint to count as accomplished.
pub const ACCOMPLISHED_MASS: f64 = 0.9;
pub const KL_SMOOTHING: f64 = 1e-6;

/// A contiguous run of turns of one source dialog, labeled with a subgoal.
#[derive(Debug, Clone)]
pub struct SegmentEntry {
    /// Store-assigned identifier, increasing in insertion order.
    pub seq: u64,
    pub dialog: Arc<Dialog>,
    pub range: Range<usize>,
    pub subgoal: Subgoal,
    /// Last state of a head, first state of a tail.
    pub boundary_state: StateVector,
}

impl SegmentEntry {
    pub fn segment(&self) -> &[Turn] {
        &self.dialog.turns[self.range.clone()]
    }

    pub fn source_dialog_id(&self) -> u64 {
        self.dialog.id
    }

    pub fn source_goal(&self) -> &Goal {
        &self.dialog.goal
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Head,
    Tail,
}

/// Ω and Γ: bounded FIFO sets keyed by `(source dialog id, subgoal)`.
#[derive(Debug, Clone)]
pub struct SegmentStore {
    capacity: usize,
    heads: VecDeque<SegmentEntry>,
    tails: VecDeque<SegmentEntry>,
    head_keys: HashSet<(u64, Subgoal)>,
    tail_keys: HashSet<(u64, Subgoal)>,
    next_seq: u64,
    /// Entries with `seq >= mark` have not been stitched yet.
    mark: u64,
    reproduced: HashSet<u64>,
}

impl Default for SegmentStore {
    fn default() -> Self {
        Self::new(DEFAULT_SEGMENT_CAPACITY)
    }
}

impl SegmentStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "segment capacity must be positive");
        Self {
            capacity,
            heads: VecDeque::new(),
            tails: VecDeque::new(),
            head_keys: HashSet::new(),
            tail_keys: HashSet::new(),
            next_seq: 0,
            mark: 0,
            reproduced: HashSet::new(),
        }
    }

    pub fn heads(&self) -> impl Iterator<Item = &SegmentEntry> + '_ {
        self.heads.iter()
    }

    pub fn tails(&self) -> impl Iterator<Item = &SegmentEntry> + '_ {
        self.tails.iter()
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn num_tails(&self) -> usize {
        self.tails.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Insert unless the key is already present; returns the stored entry.
    fn insert(
        &mut self,
        side: Side,
        dialog: &Arc<Dialog>,
        range: Range<usize>,
        subgoal: Subgoal,
        boundary_state: StateVector,
    ) -> Option<SegmentEntry> {
        let (set, keys) = match side {
            Side::Head => (&mut self.heads, &mut self.head_keys),
            Side::Tail => (&mut self.tails, &mut self.tail_keys),
        };
        if !keys.insert((dialog.id, subgoal.clone())) {
            return None;
        }
        if set.len() == self.capacity {
            let old = set.pop_front().expect("full store");
            keys.remove(&(old.dialog.id, old.subgoal));
        }
        let entry = SegmentEntry {
            seq: self.next_seq,
            dialog: Arc::clone(dialog),
            range,
            subgoal,
            boundary_state,
        };
        self.next_seq += 1;
        set.push_back(entry.clone());
        Some(entry)
    }

    /// Insert a head directly (tests and audit replay).
    pub fn insert_head(
        &mut self,
        dialog: &Arc<Dialog>,
        range: Range<usize>,
        subgoal: Subgoal,
        boundary_state: StateVector,
    ) -> Option<SegmentEntry> {
        self.insert(Side::Head, dialog, range, subgoal, boundary_state)
    }

    /// Insert a tail directly (tests and audit replay).
    pub fn insert_tail(
        &mut self,
        dialog: &Arc<Dialog>,
        range: Range<usize>,
        subgoal: Subgoal,
        boundary_state: StateVector,
    ) -> Option<SegmentEntry> {
        self.insert(Side::Tail, dialog, range, subgoal, boundary_state)
    }
}

/// Final tracker after `prefix`, or `None` for an empty prefix.
fn final_tracker(prefix: &[Turn]) -> Option<&TrackerState> {
    prefix.last().map(|t| &*t.tracker_next)
}

fn constraint_done(ont: &Ontology, tracker: &TrackerState, slot: &str, value: &str) -> bool {
    tracker.mass_on(ont, slot, value) >= ACCOMPLISHED_MASS
}

fn request_done(ont: &Ontology, tracker: &TrackerState, goal: &Goal, slot: &str) -> bool {
    match tracker.filled_requests.get(slot) {
        Some(v) if v == DECODED_FILL => true,
        Some(v) => goal.answer(ont, slot) == Some(v.as_str()),
        None => false,
    }
}

/// Whether `prefix` accomplishes `g_prime`: every constraint holds with mass at
/// least 0.9 and every request is filled consistently with the parent goal.
pub fn subgoal_completed(ont: &Ontology, prefix: &[Turn], g_prime: &Subgoal) -> bool {
    let Some(tracker) = final_tracker(prefix) else {
        return false;
    };
    g_prime
        .constraints
        .iter()
        .all(|(k, v)| constraint_done(ont, tracker, k, v))
        && g_prime
            .requests
            .iter()
            .all(|k| request_done(ont, tracker, &g_prime.parent, k))
}

/// Add a head for every subgoal of `dialog.goal` first satisfied at turn `upto`,
/// i.e. by the prefix `turns[..=upto]` but not by `turns[..upto]`.
pub fn head_seg_gen(
    ont: &Ontology,
    dialog: &Arc<Dialog>,
    upto: usize,
    store: &mut SegmentStore,
) -> Vec<SegmentEntry> {
    let subgoals = enumerate_subgoals(&dialog.goal);
    head_seg_gen_with(ont, dialog, upto, &subgoals, store)
}

fn head_seg_gen_with(
    ont: &Ontology,
    dialog: &Arc<Dialog>,
    upto: usize,
    subgoals: &[Subgoal],
    store: &mut SegmentStore,
) -> Vec<SegmentEntry> {
    let prefix = &dialog.turns[..=upto];
    let before = &dialog.turns[..upto];
    let mut out = Vec::new();
    for g in subgoals {
        if subgoal_completed(ont, prefix, g) && !subgoal_completed(ont, before, g) {
            let boundary = prefix.last().expect("nonempty prefix").s_next.clone();
            if let Some(e) = store.insert(Side::Head, dialog, 0..upto + 1, g.clone(), boundary) {
                out.push(e);
            }
        }
    }
    out
}

/// Run [`head_seg_gen`] for every turn of `dialog` in order.
pub fn head_seg_gen_all(ont: &Ontology, dialog: &Arc<Dialog>, store: &mut SegmentStore) -> Vec<SegmentEntry> {
    let subgoals = enumerate_subgoals(&dialog.goal);
    (0..dialog.turns.len())
        .flat_map(|t| head_seg_gen_with(ont, dialog, t, &subgoals, store))
        .collect()
}

/// For a successful dialog, add `D ⊖ D_head` to Γ for each of its heads in Ω.
pub fn tail_seg_gen(dialog: &Arc<Dialog>, store: &mut SegmentStore) -> Result<Vec<SegmentEntry>> {
    if !dialog.is_terminal() {
        return Err(Error::Usage(format!(
            "tail segments need a finished dialog, {} is ongoing",
            dialog.id
        )));
    }
    if dialog.outcome != Outcome::Success {
        return Ok(Vec::new());
    }
    let heads: Vec<(usize, Subgoal)> = store
        .heads
        .iter()
        .filter(|h| h.dialog.id == dialog.id)
        .map(|h| (h.range.end, h.subgoal.clone()))
        .collect();
    let mut out = Vec::new();
    for (cut, subgoal) in heads {
        if cut >= dialog.turns.len() {
            continue;
        }
        let boundary = dialog.turns[cut].s.clone();
        if let Some(e) = store.insert(Side::Tail, dialog, cut..dialog.turns.len(), subgoal, boundary) {
            out.push(e);
        }
    }
    Ok(out)
}

/// `KL(p ‖ q)` over the smoothed, renormalised concatenated belief blocks.
pub fn kl_similarity(layout: &StateLayout, s_last: &[f64], s_first: &[f64]) -> Result<f64> {
    if s_last.len() != s_first.len() {
        return Err(Error::Dimension {
            expected: s_last.len(),
            got: s_first.len(),
        });
    }
    if s_last.len() < layout.beliefs.end {
        return Err(Error::Dimension {
            expected: layout.len,
            got: s_last.len(),
        });
    }
    let p = smoothed(&s_last[layout.beliefs.clone()]);
    let q = smoothed(&s_first[layout.beliefs.clone()]);
    Ok(kl_divergence(&p, &q))
}

fn smoothed(v: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = v.iter().map(|x| x.max(0.0) + KL_SMOOTHING).collect();
    let total: f64 = s.iter().sum();
    s.into_iter().map(|x| x / total).collect()
}

/// `Σ p ln(p/q)` of two distributions.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * (p / q).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Rewards of a stitched dialog: −1 per turn, then the success reward.
pub fn relabel_rewards(mut d: Dialog, rewards: RewardScheme) -> Result<Dialog> {
    let n = d.turns.len();
    if n == 0 {
        return Err(Error::Usage("cannot relabel an empty dialog".into()));
    }
    for (i, t) in d.turns.iter_mut().enumerate() {
        let last = i + 1 == n;
        t.r = if last { rewards.success() } else { rewards.turn_cost() };
        t.done = last;
    }
    d.outcome = Outcome::Success;
    Ok(d)
}

/// A dialog synthesised from one head and one tail.
#[derive(Debug, Clone, PartialEq)]
pub struct Stitched {
    pub head_seq: u64,
    pub tail_seq: u64,
    pub dialog: Dialog,
}

/// Stitching conditions shared by the manager and the audit checks.
pub fn stitchable(layout: &StateLayout, delta: f64, head: &SegmentEntry, tail: &SegmentEntry) -> Result<bool> {
    Ok(head.subgoal == tail.subgoal && kl_similarity(layout, &head.boundary_state, &tail.boundary_state)? <= delta)
}

/// A same-dialog pair that simply rebuilds the original dialog.
pub fn is_reproduction(head: &SegmentEntry, tail: &SegmentEntry) -> bool {
    head.dialog.id == tail.dialog.id && head.range.end == tail.range.start
}

pub fn stitch(head: &SegmentEntry, tail: &SegmentEntry, rewards: RewardScheme) -> Result<Stitched> {
    let mut turns = head.segment().to_vec();
    turns.extend_from_slice(tail.segment());
    let dialog = Dialog {
        id: (head.seq << 32) | (tail.seq & 0xffff_ffff),
        goal: tail.source_goal().clone(),
        turns,
        outcome: Outcome::Success,
        source: Source::Hindsight,
    };
    Ok(Stitched {
        head_seq: head.seq,
        tail_seq: tail.seq,
        dialog: relabel_rewards(dialog, rewards)?,
    })
}

/// Pair every head with every tail of the store (pure; nothing is recorded).
///
/// Same-dialog reproductions are kept only for the first such pair per dialog
/// in `(head seq, tail seq)` order.
pub fn hind_man(store: &SegmentStore, layout: &StateLayout, delta: f64, rewards: RewardScheme) -> Result<Vec<Stitched>> {
    let mut reproduced = HashSet::new();
    let heads: Vec<&SegmentEntry> = store.heads.iter().collect();
    let tails: Vec<&SegmentEntry> = store.tails.iter().collect();
    pair_up(&heads, &tails, layout, delta, rewards, &mut reproduced)
}

fn pair_up(
    heads: &[&SegmentEntry],
    tails: &[&SegmentEntry],
    layout: &StateLayout,
    delta: f64,
    rewards: RewardScheme,
    reproduced: &mut HashSet<u64>,
) -> Result<Vec<Stitched>> {
    if delta < 0.0 {
        return Err(Error::Config(format!("delta {delta} must be nonnegative")));
    }
    let mut by_subgoal: HashMap<&Subgoal, Vec<&SegmentEntry>> = HashMap::new();
    for t in tails {
        by_subgoal.entry(&t.subgoal).or_default().push(t);
    }
    let mut pairs: Vec<(&SegmentEntry, &SegmentEntry)> = Vec::new();
    for h in heads {
        for t in by_subgoal.get(&h.subgoal).map(Vec::as_slice).unwrap_or_default() {
            if stitchable(layout, delta, h, t)? {
                pairs.push((h, t));
            }
        }
    }
    pairs.sort_by_key(|(h, t)| (h.seq, t.seq));
    pairs.dedup_by_key(|(h, t)| (h.seq, t.seq));
    let mut out = Vec::new();
    for (h, t) in pairs {
        if is_reproduction(h, t) && !reproduced.insert(h.dialog.id) {
            continue;
        }
        out.push(stitch(h, t, rewards)?);
    }
    Ok(out)
}

impl SegmentStore {
    /// Stitch entries added since the previous call against the whole opposite set.
    pub fn stitch_new(&mut self, layout: &StateLayout, delta: f64, rewards: RewardScheme) -> Result<Vec<Stitched>> {
        let mark = self.mark;
        let new_heads: Vec<&SegmentEntry> = self.heads.iter().filter(|e| e.seq >= mark).collect();
        let old_heads: Vec<&SegmentEntry> = self.heads.iter().filter(|e| e.seq < mark).collect();
        let all_tails: Vec<&SegmentEntry> = self.tails.iter().collect();
        let new_tails: Vec<&SegmentEntry> = self.tails.iter().filter(|e| e.seq >= mark).collect();
        let mut reproduced = std::mem::take(&mut self.reproduced);
        let result = (|| {
            let mut out = pair_up(&new_heads, &all_tails, layout, delta, rewards, &mut reproduced)?;
            out.extend(pair_up(&old_heads, &new_tails, layout, delta, rewards, &mut reproduced)?);
            out.sort_by_key(|s| (s.head_seq, s.tail_seq));
            Ok(out)
        })();
        self.reproduced = reproduced;
        self.mark = self.next_seq;
        result
    }
}

/// One line of the segment audit file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AuditRecord {
    Head(SegmentRecord),
    Tail(SegmentRecord),
    Stitched {
        head_seq: u64,
        tail_seq: u64,
        dialog: Dialog,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub seq: u64,
    pub dialog_id: u64,
    pub source_goal: Goal,
    pub subgoal: Subgoal,
    pub boundary_state: StateVector,
    pub turns: Vec<Turn>,
}

impl SegmentRecord {
    pub fn of(e: &SegmentEntry) -> Self {
        Self {
            seq: e.seq,
            dialog_id: e.dialog.id,
            source_goal: e.dialog.goal.clone(),
            subgoal: e.subgoal.clone(),
            boundary_state: e.boundary_state.clone(),
            turns: e.segment().to_vec(),
        }
    }
}

impl AuditRecord {
    pub fn stitched(s: &Stitched) -> Self {
        AuditRecord::Stitched {
            head_seq: s.head_seq,
            tail_seq: s.tail_seq,
            dialog: s.dialog.clone(),
        }
    }
}

pub fn write_audit<W: Write>(mut w: W, records: &[AuditRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<audit>", e))?;
    }
    Ok(())
}

/// Parse a JSON-lines audit stream, skipping blank lines.
pub fn read_audit<R: BufRead>(r: R) -> Result<Vec<AuditRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<audit>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
