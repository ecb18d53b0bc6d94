//! Event-driven simulation of the critical branching system killed on
//! leaving `(0, ∞)`.
//!
//! Each particle carries an exponential clock. Motion is sampled lazily, one
//! exact piece per lifetime (or up to a snapshot), so no time grid is ever
//! introduced. Particles whose piece ends outside `(0, ∞)` are removed with
//! their whole future subtree.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::fold_replicas;
use crate::estimators::Merge;
use crate::levy_motion::{advance_killed, Fate, LevyModel};
use crate::offspring::BranchingSpec;
use crate::rng::{stream, Purpose, Stream};
use crate::stats::{ks_two_sample, KsResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    InvalidInput(String),
    #[error("event cap of {cap} exceeded at time {time}")]
    CapExceeded { cap: u64, time: f64, partial: Box<SimOutcome> },
    #[error("no snapshot recorded at time {0}")]
    NoSnapshot(f64),
}

/// How particles are treated on leaving `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    /// Removed together with all descendants.
    #[default]
    Killed,
    /// Frozen where they left; they keep branching but stay outside
    /// `(0, ∞)` and are invisible to snapshots.
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub snapshot_times: Vec<f64>,
    pub max_events: u64,
    pub horizon: f64,
    /// Compute the all-time maximum exactly. Off saves work when only
    /// extinction matters.
    pub track_max: bool,
    /// End the run as soon as the maximum reaches this level.
    pub stop_when_max_reaches: Option<f64>,
    pub motion: Motion,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            snapshot_times: Vec::new(),
            max_events: 100_000_000,
            horizon: f64::INFINITY,
            track_max: true,
            stop_when_max_reaches: None,
            motion: Motion::Killed,
        }
    }
}

/// Positions in `(0, ∞)` of the particles alive at `time`, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub positions: Vec<f64>,
}

impl Snapshot {
    /// Largest position, or `None` for an empty population.
    pub fn max(&self) -> Option<f64> {
        self.positions.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    /// Extinction time of the population in `(0, ∞)`; the time the run
    /// stopped when `censored`.
    pub extinction_time: f64,
    pub censored: bool,
    /// All-time maximum; a lower bound when the run stopped early.
    pub max_all_time: f64,
    /// The run ended because the maximum reached the requested level.
    pub max_truncated: bool,
    /// Extinction time of the whole tree, frozen particles included
    /// (stopped motion only).
    pub tree_extinction_time: Option<f64>,
    pub snapshots: Vec<Snapshot>,
    pub events: u64,
}

impl SimOutcome {
    pub fn snapshot(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.time == t)
    }

    /// Whether the population in `(0, ∞)` is nonempty at `t`; `None` when
    /// censoring hides the answer.
    pub fn survives(&self, t: f64) -> Option<bool> {
        if !self.censored {
            Some(self.extinction_time > t)
        } else if self.extinction_time >= t && !self.max_truncated {
            Some(true)
        } else {
            None
        }
    }

    pub fn to_record(&self, seed: u64, replica: u64) -> ReplicaRecord {
        ReplicaRecord {
            seed,
            replica,
            extinction_time: self.extinction_time,
            censored: self.censored,
            max_all_time: self.max_all_time,
            snapshots: self.snapshots.iter().map(|s| (format!("{}", s.time), s.positions.clone())).collect(),
        }
    }
}

/// One JSON-lines record per replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub seed: u64,
    pub replica: u64,
    pub extinction_time: f64,
    pub censored: bool,
    pub max_all_time: f64,
    pub snapshots: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    x: f64,
    t: f64,
    generation: u32,
    frozen: bool,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    slot: u32,
    generation: u32,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.slot.cmp(&other.slot)).then(self.generation.cmp(&other.generation))
    }
}

struct Population {
    slots: Vec<Slot>,
    free: Vec<u32>,
    heap: BinaryHeap<Reverse<Event>>,
}

impl Population {
    fn spawn<R: Rng + ?Sized>(&mut self, x: f64, t: f64, frozen: bool, beta: f64, rng: &mut R) {
        let slot = match self.free.pop() {
            Some(i) => {
                let s = &mut self.slots[i as usize];
                s.x = x;
                s.t = t;
                s.frozen = frozen;
                i
            }
            None => {
                self.slots.push(Slot { x, t, generation: 0, frozen });
                (self.slots.len() - 1) as u32
            }
        };
        let life: f64 = Exp1.sample(rng);
        let generation = self.slots[slot as usize].generation;
        self.heap.push(Reverse(Event { time: t + life / beta, slot, generation }));
    }

    fn release(&mut self, slot: u32) {
        let s = &mut self.slots[slot as usize];
        s.generation = s.generation.wrapping_add(1);
        self.free.push(slot);
    }

    fn is_current(&self, e: &Event) -> bool {
        self.slots[e.slot as usize].generation == e.generation
    }

    fn next_time(&mut self) -> Option<f64> {
        while let Some(Reverse(e)) = self.heap.peek() {
            if self.is_current(e) {
                return Some(e.time);
            }
            self.heap.pop();
        }
        None
    }

    fn current_events(&self) -> Vec<Event> {
        let mut v: Vec<Event> = self.heap.iter().map(|r| r.0).filter(|e| self.is_current(e)).collect();
        v.sort();
        v
    }
}

struct Run<'a, R: Rng + ?Sized> {
    spec: &'a BranchingSpec,
    model: &'a LevyModel,
    opts: &'a SimOptions,
    rng: &'a mut R,
    pop: Population,
    record: f64,
    max_all: f64,
    /// Latest end of a lineage in `(0, ∞)`.
    end_in_domain: f64,
    /// Latest end of any lineage.
    end_tree: f64,
}

impl<R: Rng + ?Sized> Run<'_, R> {
    fn note_max(&mut self, m: Option<f64>) {
        if let Some(m) = m {
            if self.opts.track_max {
                self.max_all = self.max_all.max(m);
                self.record = self.record.max(m);
            }
        }
    }

    /// Moves the particle in `slot` to `time`. Returns its position if it is
    /// still in the domain afterwards.
    fn advance(&mut self, slot: u32, time: f64) -> Option<f64> {
        let s = self.pop.slots[slot as usize];
        if s.frozen {
            return None;
        }
        if time <= s.t {
            return Some(s.x);
        }
        let piece = advance_killed(self.model, s.x, time - s.t, self.record, self.rng);
        self.note_max(piece.new_max);
        match piece.fate {
            Fate::Alive { end } => {
                let s = &mut self.pop.slots[slot as usize];
                s.x = end;
                s.t = time;
                Some(end)
            }
            Fate::Killed { time: dt } => {
                let exit = s.t + dt;
                self.end_in_domain = self.end_in_domain.max(exit);
                match self.opts.motion {
                    Motion::Killed => {
                        self.end_tree = self.end_tree.max(exit);
                        self.pop.release(slot);
                    }
                    Motion::Stopped => {
                        let s = &mut self.pop.slots[slot as usize];
                        s.frozen = true;
                        s.x = 0.0;
                        s.t = exit;
                    }
                }
                None
            }
        }
    }

    fn take_snapshot(&mut self, time: f64) -> Snapshot {
        let mut positions = Vec::new();
        for e in self.pop.current_events() {
            if !self.pop.is_current(&e) {
                continue;
            }
            if let Some(x) = self.advance(e.slot, time) {
                positions.push(x);
            }
        }
        positions.sort_by(f64::total_cmp);
        Snapshot { time, positions }
    }

    fn outcome(&self, extinction_time: f64, censored: bool, snapshots: Vec<Snapshot>, events: u64, truncated: bool) -> SimOutcome {
        let tree_extinction_time = match self.opts.motion {
            Motion::Stopped if !censored && self.pop.heap.is_empty() => Some(self.end_tree),
            _ => None,
        };
        SimOutcome {
            extinction_time,
            censored,
            max_all_time: self.max_all,
            max_truncated: truncated,
            tree_extinction_time,
            snapshots,
            events,
        }
    }
}

/// Simulates one replica started from a single particle at `y0 > 0`.
pub fn simulate<R: Rng + ?Sized>(
    spec: &BranchingSpec,
    model: &LevyModel,
    y0: f64,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<SimOutcome, SimError> {
    if !(y0 > 0.0 && y0.is_finite()) {
        return Err(SimError::InvalidInput(format!("start position must be positive, got {y0}")));
    }
    if !(opts.horizon > 0.0) {
        return Err(SimError::InvalidInput("horizon must be positive".into()));
    }
    let mut times = opts.snapshot_times.clone();
    if times.iter().any(|&t| !(t >= 0.0 && t <= opts.horizon)) {
        return Err(SimError::InvalidInput("snapshot times must lie in [0, horizon]".into()));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();

    let beta = spec.beta();
    let mut run = Run {
        spec,
        model,
        opts,
        rng,
        pop: Population { slots: Vec::new(), free: Vec::new(), heap: BinaryHeap::new() },
        record: if opts.track_max { y0 } else { f64::INFINITY },
        max_all: y0,
        end_in_domain: 0.0,
        end_tree: 0.0,
    };
    run.pop.spawn(y0, 0.0, false, beta, run.rng);
    let mut snapshots = Vec::with_capacity(times.len());
    let mut next_snap = 0;
    let mut events = 0u64;
    let stop_level = opts.stop_when_max_reaches.unwrap_or(f64::INFINITY);

    loop {
        if run.max_all >= stop_level {
            let now = run.pop.next_time().unwrap_or(run.end_tree);
            return Ok(run.outcome(now, true, snapshots, events, true));
        }
        let next = run.pop.next_time();
        let limit = next.unwrap_or(f64::INFINITY).min(opts.horizon);
        while next_snap < times.len() && (times[next_snap] < limit || (next.is_none() && times[next_snap] <= limit)) {
            snapshots.push(run.take_snapshot(times[next_snap]));
            next_snap += 1;
        }
        let Some(time) = next else {
            // Whole tree extinct.
            while next_snap < times.len() {
                snapshots.push(Snapshot { time: times[next_snap], positions: Vec::new() });
                next_snap += 1;
            }
            return Ok(run.outcome(run.end_in_domain, false, snapshots, events, false));
        };
        if time > opts.horizon {
            // Settle everyone at the horizon.
            let survivors = run.take_snapshot(opts.horizon);
            while next_snap < times.len() {
                snapshots.push(Snapshot { time: times[next_snap], positions: survivors.positions.clone() });
                next_snap += 1;
            }
            if survivors.positions.is_empty() {
                let mut out = run.outcome(run.end_in_domain, false, snapshots, events, false);
                out.tree_extinction_time = None;
                return Ok(out);
            }
            return Ok(run.outcome(opts.horizon, true, snapshots, events, false));
        }
        let Reverse(event) = run.pop.heap.pop().expect("peeked event");
        if !run.pop.is_current(&event) {
            // Killed while a snapshot was taken.
            continue;
        }
        events += 1;
        if events > opts.max_events {
            let partial = run.outcome(time, true, snapshots, events, false);
            return Err(SimError::CapExceeded { cap: opts.max_events, time, partial: Box::new(partial) });
        }
        let was_frozen = run.pop.slots[event.slot as usize].frozen;
        let moved = if was_frozen { Some(run.pop.slots[event.slot as usize].x) } else { run.advance(event.slot, time) };
        let (x, frozen) = match moved {
            Some(x) => (x, was_frozen),
            // Stopped on the way to its branching time; it still branches.
            None if run.pop.slots[event.slot as usize].frozen => (run.pop.slots[event.slot as usize].x, true),
            None => continue,
        };
        let k = run.spec.law().sample(run.rng);
        run.pop.release(event.slot);
        if k == 0 {
            run.end_tree = run.end_tree.max(time);
            if !frozen {
                run.end_in_domain = run.end_in_domain.max(time);
            }
            continue;
        }
        for _ in 0..k {
            run.pop.spawn(x, time, frozen, beta, run.rng);
        }
    }
}

/// The RNG stream of a replica; the stopped-motion construction uses a
/// separate family so the two simulators are independent.
pub fn replica_stream(seed: u64, replica: u64, motion: Motion) -> Stream {
    let purpose = match motion {
        Motion::Killed => Purpose::Replica,
        Motion::Stopped => Purpose::StoppedMotion,
    };
    stream(seed, replica, purpose)
}

/// [`simulate`] on the stream of replica `replica`.
pub fn simulate_replica(
    spec: &BranchingSpec,
    model: &LevyModel,
    y0: f64,
    opts: &SimOptions,
    seed: u64,
    replica: u64,
) -> Result<SimOutcome, SimError> {
    simulate(spec, model, y0, opts, &mut replica_stream(seed, replica, opts.motion))
}

/// Point measure with equal atom masses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledMeasure {
    pub atoms: Vec<f64>,
    pub atom_mass: f64,
}

impl ScaledMeasure {
    pub fn total_mass(&self) -> f64 {
        self.atom_mass * self.atoms.len() as f64
    }
}

/// Snapshot at `t` with positions divided by `√t` and masses `t^{−1/(α−1)}`.
pub fn scaled_snapshot(outcome: &SimOutcome, t: f64, alpha: f64) -> Result<ScaledMeasure, SimError> {
    let snap = outcome.snapshot(t).ok_or(SimError::NoSnapshot(t))?;
    let root = t.sqrt();
    Ok(ScaledMeasure { atoms: snap.positions.iter().map(|x| x / root).collect(), atom_mass: t.powf(-1.0 / (alpha - 1.0)) })
}

/// Two-sample comparisons of the killed and the stopped-then-restricted
/// constructions at a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub alive_count: KsResult,
    /// Maximum at `t`, with 0 standing for an empty population.
    pub max_at_t: KsResult,
}

#[derive(Debug, Clone, Default)]
struct Pairs {
    alive: Vec<f64>,
    max: Vec<f64>,
}

impl Merge for Pairs {
    fn merge_from(&mut self, other: Self) {
        self.alive.extend(other.alive);
        self.max.extend(other.max);
    }
}

fn snapshot_stats(spec: &BranchingSpec, model: &LevyModel, y0: f64, t: f64, n: u64, seed: u64, threads: usize, motion: Motion) -> Result<Pairs, SimError> {
    let opts = SimOptions { snapshot_times: vec![t], horizon: t.max(f64::MIN_POSITIVE), track_max: false, motion, ..Default::default() };
    let folded = fold_replicas(
        n,
        threads,
        || (Pairs::default(), None),
        |acc: &mut (Pairs, Option<SimError>), i| {
            if acc.1.is_some() {
                return;
            }
            match simulate_replica(spec, model, y0, &opts, seed, i) {
                Ok(out) => {
                    let snap = out.snapshot(t).expect("requested snapshot");
                    acc.0.alive.push(snap.positions.len() as f64);
                    acc.0.max.push(snap.max().unwrap_or(0.0));
                }
                Err(e) => acc.1 = Some(e),
            }
        },
    );
    match folded.1 {
        Some(e) => Err(e),
        None => Ok(folded.0),
    }
}

impl<T: Merge> Merge for (T, Option<SimError>) {
    fn merge_from(&mut self, other: Self) {
        self.0.merge_from(other.0);
        if self.1.is_none() {
            self.1 = other.1;
        }
    }
}

/// Simulates `n` replicas of each construction and compares the laws of the
/// alive count and of the maximum at time `t`.
pub fn stopped_motion_equivalence_test(
    spec: &BranchingSpec,
    model: &LevyModel,
    y0: f64,
    t: f64,
    n: u64,
    seed: u64,
    threads: usize,
) -> Result<EquivalenceReport, SimError> {
    let killed = snapshot_stats(spec, model, y0, t, n, seed, threads, Motion::Killed)?;
    let stopped = snapshot_stats(spec, model, y0, t, n, seed, threads, Motion::Stopped)?;
    Ok(EquivalenceReport {
        alive_count: ks_two_sample(&killed.alive, &stopped.alive),
        max_at_t: ks_two_sample(&killed.max, &stopped.max),
    })
}
