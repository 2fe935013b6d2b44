//! Tabular Q-learning agent that keeps the adjustment tree in shape.
//!
//! Each step observes a bucketed [`State`], picks one of three maintenance
//! actions, runs a batch of operations, and rewards the action by the
//! normalised throughput it achieved minus the normalised memory it used.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::bmat::{Backend, PerfMeasures};
use crate::index::{Op, UplifIndex};

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("no available actions")]
    EmptyActionSet,
    #[error("non-positive normalizer")]
    NonPositiveNormalizer,
    #[error("invalid agent config: {0}")]
    InvalidConfig(&'static str),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const HEIGHT_BUCKETS: u8 = 8;
pub const GRANULARITY_BUCKETS: u8 = 16;
pub const ERROR_SCALING_BUCKETS: u8 = 5;
pub const MODEL_COUNT_BUCKETS: u8 = 7;
const ALPHA_THRESHOLDS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub height: u8,
    pub granularity: u8,
    pub error_scaling: u8,
    pub model_count: u8,
    /// 0 for the red-black backend, 1 for B+.
    pub backend: u8,
}

impl State {
    pub fn is_valid(&self) -> bool {
        self.height < HEIGHT_BUCKETS
            && self.granularity < GRANULARITY_BUCKETS
            && self.error_scaling < ERROR_SCALING_BUCKETS
            && self.model_count < MODEL_COUNT_BUCKETS
            && self.backend < 2
    }
}

/// Discretises tree measures into a [`State`].
pub fn observe_state(pm: &PerfMeasures, backend: Backend) -> State {
    let height = (pm.height.saturating_sub(1) / 8).min(HEIGHT_BUCKETS as usize - 1) as u8;
    let granularity = match pm.granularity {
        0 => 0,
        g => g.ilog2().min(GRANULARITY_BUCKETS as u32 - 1) as u8,
    };
    let error_scaling = ALPHA_THRESHOLDS
        .iter()
        .filter(|&&t| pm.error_scaling > t)
        .count() as u8;
    let model_count = match pm.model_count {
        0 => 0,
        m => m.ilog10().min(MODEL_COUNT_BUCKETS as u32 - 1) as u8,
    };
    State {
        height,
        granularity,
        error_scaling,
        model_count,
        backend: match backend {
            Backend::RedBlack => 0,
            Backend::BPlus => 1,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// Leave the tree as is.
    Keep,
    /// Merge a run of segments under one fresh model.
    Retrain,
    /// Move to the other tree backend.
    Convert,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Keep, Action::Retrain, Action::Convert];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.index() + 1)
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A1" => Ok(Action::Keep),
            "A2" => Ok(Action::Retrain),
            "A3" => Ok(Action::Convert),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

/// Actions the operator allows the agent to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSet([bool; 3]);

impl ActionSet {
    pub fn all() -> Self {
        Self([true; 3])
    }

    pub fn only(actions: &[Action]) -> Self {
        let mut mask = [false; 3];
        for a in actions {
            mask[a.index()] = true;
        }
        Self(mask)
    }

    pub fn without(mut self, a: Action) -> Self {
        self.0[a.index()] = false;
        self
    }

    pub fn contains(&self, a: Action) -> bool {
        self.0[a.index()]
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        Action::ALL.into_iter().filter(|&a| self.contains(a))
    }
}

impl Default for ActionSet {
    fn default() -> Self {
        Self::all()
    }
}

/// Q-values keyed by (state, action); missing entries read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    values: BTreeMap<(State, Action), f64>,
    visits: BTreeMap<(State, Action), u64>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, s: State, a: Action) -> f64 {
        self.values.get(&(s, a)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, s: State, a: Action, q: f64) {
        self.values.insert((s, a), q);
    }

    pub fn visits(&self, s: State, a: Action) -> u64 {
        self.visits.get(&(s, a)).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (State, Action, f64)> + '_ {
        self.values.iter().map(|(&(s, a), &q)| (s, a, q))
    }

    /// Largest value over every action in `s`.
    pub fn max_q(&self, s: State) -> f64 {
        Action::ALL
            .iter()
            .map(|&a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Best available action; ties go to the lowest action index.
    pub fn greedy(&self, s: State, available: &ActionSet) -> Option<Action> {
        let mut best: Option<(Action, f64)> = None;
        for a in available.iter() {
            let q = self.get(s, a);
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((a, q));
            }
        }
        best.map(|(a, _)| a)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# s1,s2,s3,s4,s5,action,qvalue\n");
        for (s, a, q) in self.entries() {
            out.push_str(&format!(
                "{},{},{},{},{},{a},{q}\n",
                s.height, s.granularity, s.error_scaling, s.model_count, s.backend
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TunerError> {
        let mut table = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| TunerError::Parse { line: i + 1, msg };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", fields.len())));
            }
            let mut b = [0u8; 5];
            for (slot, f) in b.iter_mut().zip(&fields[..5]) {
                *slot = f.parse().map_err(|e| err(format!("bad bucket {f:?}: {e}")))?;
            }
            let s = State {
                height: b[0],
                granularity: b[1],
                error_scaling: b[2],
                model_count: b[3],
                backend: b[4],
            };
            if !s.is_valid() {
                return Err(err("bucket out of range".into()));
            }
            let a: Action = fields[5].parse().map_err(err)?;
            let q: f64 = fields[6]
                .parse()
                .map_err(|e| err(format!("bad q-value {:?}: {e}", fields[6])))?;
            if !q.is_finite() {
                return Err(err("q-value must be finite".into()));
            }
            table.set(s, a, q);
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TunerError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TunerError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    /// Learning rate.
    pub alpha: f64,
    /// Discount factor.
    pub gamma: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    /// Weight of throughput against memory in the reward.
    pub eta: f64,
    pub ops_per_step: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            gamma: 0.2,
            epsilon: 1.0,
            epsilon_decay: 0.99,
            epsilon_min: 0.05,
            eta: 0.7,
            ops_per_step: 1000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), TunerError> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.alpha) {
            return Err(TunerError::InvalidConfig("alpha must be in (0, 1]"));
        }
        if !unit(self.gamma) {
            return Err(TunerError::InvalidConfig("gamma must be in (0, 1]"));
        }
        if !unit(self.epsilon) {
            return Err(TunerError::InvalidConfig("epsilon must be in (0, 1]"));
        }
        if !unit(self.eta) {
            return Err(TunerError::InvalidConfig("eta must be in (0, 1]"));
        }
        if !unit(self.epsilon_decay) || !(0.0..=self.epsilon).contains(&self.epsilon_min) {
            return Err(TunerError::InvalidConfig("bad epsilon schedule"));
        }
        if self.ops_per_step == 0 {
            return Err(TunerError::InvalidConfig("ops_per_step must be positive"));
        }
        Ok(())
    }
}

/// Epsilon-greedy choice among `available`.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    s: State,
    available: &ActionSet,
    epsilon: f64,
    rng: &mut R,
) -> Result<Action, TunerError> {
    let choices: Vec<Action> = available.iter().collect();
    if choices.is_empty() {
        return Err(TunerError::EmptyActionSet);
    }
    if rng.gen::<f64>() < epsilon {
        return Ok(choices[rng.gen_range(0..choices.len())]);
    }
    Ok(q.greedy(s, available).expect("non-empty"))
}

/// `eta * throughput / max_throughput - (1 - eta) * memory / total_memory`.
pub fn reward(
    throughput: f64,
    max_throughput: f64,
    memory: f64,
    total_memory: f64,
    eta: f64,
) -> Result<f64, TunerError> {
    if max_throughput <= 0.0 || total_memory <= 0.0 {
        return Err(TunerError::NonPositiveNormalizer);
    }
    Ok(eta * throughput / max_throughput - (1.0 - eta) * memory / total_memory)
}

/// Bellman update of `Q(s, a)`.
pub fn update_q(q: &mut QTable, s: State, a: Action, r: f64, s_next: State, alpha: f64, gamma: f64) {
    let old = q.get(s, a);
    let new = (1.0 - alpha) * old + alpha * (r + gamma * q.max_q(s_next));
    q.set(s, a, new);
    *q.visits.entry((s, a)).or_insert(0) += 1;
}

/// What the agent tunes.
pub trait TuningEnv {
    fn measures(&self) -> PerfMeasures;
    fn backend(&self) -> Backend;
    /// Carries out `a`; an error means the action could not be applied.
    fn apply(&mut self, a: Action) -> Result<(), String>;
    /// Runs up to `n` operations, returning how many ran.
    fn run_ops(&mut self, n: usize) -> usize;
    fn memory_usage(&self) -> usize;
    /// Monotonic time in seconds.
    fn now(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: State,
    pub requested: Action,
    pub action: Action,
    /// True when `requested` could not be applied and `Keep` ran instead.
    pub substituted: bool,
    pub ops: usize,
    pub elapsed: f64,
    pub throughput: f64,
    pub memory: usize,
    pub reward: f64,
    pub next_state: State,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    q: QTable,
    epsilon: f64,
    available: ActionSet,
    max_throughput: f64,
    max_memory: f64,
    rng: StdRng,
    frozen: bool,
}

impl Agent {
    pub fn new(cfg: AgentConfig, seed: u64) -> Result<Self, TunerError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            q: QTable::new(),
            epsilon: cfg.epsilon,
            available: ActionSet::all(),
            max_throughput: 0.0,
            max_memory: 0.0,
            rng: StdRng::seed_from_u64(seed),
            frozen: false,
        })
    }

    /// An agent that only exploits `q` and never updates it.
    pub fn frozen(cfg: AgentConfig, q: QTable, seed: u64) -> Result<Self, TunerError> {
        let mut a = Self::new(cfg, seed)?;
        a.q = q;
        a.epsilon = 0.0;
        a.frozen = true;
        Ok(a)
    }

    pub fn with_actions(mut self, available: ActionSet) -> Result<Self, TunerError> {
        if available.is_empty() {
            return Err(TunerError::EmptyActionSet);
        }
        self.available = available;
        Ok(self)
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn into_q_table(self) -> QTable {
        self.q
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// One observe, act, run, reward, learn cycle.
    pub fn step(&mut self, env: &mut dyn TuningEnv) -> Result<StepReport, TunerError> {
        self.step_inner(env, None)
    }

    /// Like [`Agent::step`] but with the action fixed by the caller.
    pub fn step_forced(&mut self, env: &mut dyn TuningEnv, action: Action) -> Result<StepReport, TunerError> {
        self.step_inner(env, Some(action))
    }

    fn step_inner(&mut self, env: &mut dyn TuningEnv, forced: Option<Action>) -> Result<StepReport, TunerError> {
        let state = observe_state(&env.measures(), env.backend());
        let requested = match forced {
            Some(a) => a,
            None => select_action(&self.q, state, &self.available, self.epsilon, &mut self.rng)?,
        };
        // Tuning cost is charged to the step.
        let start = env.now();
        let mut action = requested;
        let mut substituted = false;
        if !self.available.contains(requested) || env.apply(requested).is_err() {
            action = Action::Keep;
            substituted = true;
        }
        let ops = env.run_ops(self.cfg.ops_per_step);
        let elapsed = (env.now() - start).max(1e-12);
        let throughput = ops as f64 / elapsed;
        let memory = env.memory_usage();
        self.max_throughput = self.max_throughput.max(throughput);
        self.max_memory = self.max_memory.max(memory as f64);
        let r = reward(
            throughput,
            self.max_throughput.max(f64::MIN_POSITIVE),
            memory as f64,
            self.max_memory.max(f64::MIN_POSITIVE),
            self.cfg.eta,
        )?;
        let next_state = observe_state(&env.measures(), env.backend());
        if !self.frozen {
            update_q(&mut self.q, state, action, r, next_state, self.cfg.alpha, self.cfg.gamma);
            self.epsilon = (self.epsilon * self.cfg.epsilon_decay).max(self.cfg.epsilon_min);
        }
        Ok(StepReport {
            state,
            requested,
            action,
            substituted,
            ops,
            elapsed,
            throughput,
            memory,
            reward: r,
            next_state,
            epsilon: self.epsilon,
        })
    }
}

/// Tunes a live index while draining an operation stream.
pub struct IndexEnv<'a, I: Iterator<Item = Op>> {
    index: &'a mut UplifIndex,
    ops: I,
    clock: Instant,
}

impl<'a, I: Iterator<Item = Op>> IndexEnv<'a, I> {
    pub fn new(index: &'a mut UplifIndex, ops: I) -> Self {
        Self {
            index,
            ops,
            clock: Instant::now(),
        }
    }

    pub fn index(&self) -> &UplifIndex {
        self.index
    }
}

impl<I: Iterator<Item = Op>> TuningEnv for IndexEnv<'_, I> {
    fn measures(&self) -> PerfMeasures {
        self.index.stats()
    }

    fn backend(&self) -> Backend {
        self.index.backend()
    }

    fn apply(&mut self, a: Action) -> Result<(), String> {
        match a {
            Action::Keep => Ok(()),
            Action::Retrain => self.index.prune_retrain().map(|_| ()).map_err(|e| e.to_string()),
            Action::Convert => {
                let target = self.index.backend().other();
                self.index.convert(target).map_err(|e| e.to_string())
            }
        }
    }

    fn run_ops(&mut self, n: usize) -> usize {
        let mut done = 0;
        for op in self.ops.by_ref().take(n) {
            std::hint::black_box(self.index.apply(&op));
            done += 1;
        }
        done
    }

    fn memory_usage(&self) -> usize {
        self.index.memory_usage()
    }

    fn now(&self) -> f64 {
        self.clock.elapsed().as_secs_f64()
    }
}

/// Deterministic synthetic environment with a virtual clock.
///
/// Tree height cycles through [`ScriptedEnv::HEIGHTS`], one entry per step.
/// Each operation costs `1000 + 250 * height` virtual nanoseconds, halved
/// during a step that starts with `Retrain`. `Convert` toggles the backend.
/// Memory is constant.
#[derive(Debug, Clone)]
pub struct ScriptedEnv {
    phase: usize,
    backend: Backend,
    clock_ns: f64,
    retrained: bool,
}

impl ScriptedEnv {
    pub const HEIGHTS: [usize; 4] = [1, 9, 17, 25];
    pub const MEMORY: usize = 1 << 20;

    pub fn new() -> Self {
        Self {
            phase: 0,
            backend: Backend::RedBlack,
            clock_ns: 0.0,
            retrained: false,
        }
    }

    pub fn op_latency_ns(height: usize, retrained: bool) -> f64 {
        let base = 1000.0 + 250.0 * height as f64;
        if retrained {
            base / 2.0
        } else {
            base
        }
    }

    pub fn height(&self) -> usize {
        Self::HEIGHTS[self.phase]
    }
}

impl Default for ScriptedEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl TuningEnv for ScriptedEnv {
    fn measures(&self) -> PerfMeasures {
        PerfMeasures {
            height: self.height(),
            granularity: 1024,
            error_scaling: 1.0,
            model_count: 8,
            node_count: 1 << self.height().min(20),
            backend: self.backend,
        }
    }

    fn backend(&self) -> Backend {
        self.backend
    }

    fn apply(&mut self, a: Action) -> Result<(), String> {
        match a {
            Action::Keep => {}
            Action::Retrain => self.retrained = true,
            Action::Convert => self.backend = self.backend.other(),
        }
        Ok(())
    }

    fn run_ops(&mut self, n: usize) -> usize {
        self.clock_ns += n as f64 * Self::op_latency_ns(self.height(), self.retrained);
        self.retrained = false;
        self.phase = (self.phase + 1) % Self::HEIGHTS.len();
        n
    }

    fn memory_usage(&self) -> usize {
        Self::MEMORY
    }

    fn now(&self) -> f64 {
        self.clock_ns * 1e-9
    }
}
