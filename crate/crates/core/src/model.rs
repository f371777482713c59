//! Voting-game instances: world states, signals, utilities and agent types.
//!
//! States are indexed `0..T` in increasing order of how much `A` is
//! preferred; signals `0..M` likewise. A binary game is the `T = M = 2`
//! case with state `0 = L`, `1 = H` and signal `0 = l`, `1 = h`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for every stochastic and knife-edge comparison.
pub const TOL: f64 = 1e-12;

/// Slack used when turning `fraction * N` into an agent count, so that
/// `0.29 * 100` floors to 29 and not 28.
pub(crate) const ROUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("prior entry {state} is not strictly positive ({value})")]
    NonPositivePrior { state: usize, value: f64 },
    #[error("prior sums to {0}, expected 1")]
    PriorNotNormalized(f64),
    #[error("signal row for state {state} is not a probability vector")]
    RowNotStochastic { state: usize },
    #[error("signals are not positively correlated with the state")]
    NoPositiveCorrelation,
    #[error(
        "signal distribution of state {higher} does not dominate state {lower} at cutoff {cutoff}"
    )]
    NoStochasticDominance {
        higher: usize,
        lower: usize,
        cutoff: usize,
    },
    #[error("utility of agent {agent} is not monotone in the state")]
    UtilityNotMonotone { agent: usize },
    #[error("informed majority is {0:?} in every state")]
    DegenerateMajority(Alternative),
    #[error("share preferring A in state {state} equals the threshold")]
    KnifeEdgeThreshold { state: usize },
    #[error("rounding to {n} agents flips the informed majority in state {state}")]
    RoundingFlipsMajority { n: usize, state: usize },
    #[error("threshold {0} is not in (0, 1)")]
    ThresholdOutOfRange(f64),
    #[error("group fractions sum to {0}, expected 1")]
    FractionsNotNormalized(f64),
    #[error("group {group} has fraction {value} outside (0, 1]")]
    BadFraction { group: usize, value: f64 },
    #[error("expected {expected} agents, got {got}")]
    AgentCountMismatch { expected: usize, got: usize },
    #[error("malformed instance: {0}")]
    Shape(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Alternative {
    #[serde(rename = "A")]
    Accept,
    #[serde(rename = "R")]
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Binary,
    #[serde(alias = "non-binary")]
    Nonbinary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatePrior(Vec<f64>);

impl StatePrior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(ModelError::Shape("empty prior".into()));
        }
        for (state, &value) in probs.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::NonPositivePrior { state, value });
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > TOL {
            return Err(ModelError::PriorNotNormalized(total));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn n_states(&self) -> usize {
        self.0.len()
    }
}

/// Row `ω` holds `Pr[signal = m | state = ω]` for every signal `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalChannel {
    rows: Vec<Vec<f64>>,
}

impl SignalChannel {
    /// Checks shape and row-stochasticity only; correlation is checked by
    /// [`Game::new`] since the required property depends on the setting.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || m == 0 {
            return Err(ModelError::Shape("empty signal matrix".into()));
        }
        for (state, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(ModelError::Shape(format!(
                    "signal row {state} has {} entries, expected {m}",
                    row.len()
                )));
            }
            let in_range = row.iter().all(|&p| (0.0..=1.0).contains(&p));
            let total: f64 = row.iter().sum();
            if !in_range || (total - 1.0).abs() > TOL {
                return Err(ModelError::RowNotStochastic { state });
            }
        }
        Ok(Self { rows })
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn n_signals(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.rows[state]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `Pr[signal = m | state]`.
    pub fn prob(&self, state: usize, signal: usize) -> f64 {
        self.rows[state][signal]
    }

    /// `Pr[signal >= cutoff | state]`.
    pub fn upper_tail(&self, state: usize, cutoff: usize) -> f64 {
        self.rows[state][cutoff..].iter().sum()
    }

    /// Index of the first "high" signal when signals are split into a low
    /// and a high group: `⌊M/2⌋` (for binary signals, `h`).
    pub fn split_signal(&self) -> usize {
        self.n_signals() / 2
    }

    /// Grouped `(Pr[low | state], Pr[high | state])` at [`Self::split_signal`].
    pub fn grouped(&self, state: usize) -> (f64, f64) {
        let split = self.split_signal();
        let row = &self.rows[state];
        (row[..split].iter().sum(), row[split..].iter().sum())
    }
}

/// Integer utilities `u(ω, A)` and `u(ω, R)` for every state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtilityFn {
    values: Vec<[u32; 2]>,
}

impl UtilityFn {
    /// Builds from `[u(ω, A), u(ω, R)]` pairs, ordered by state.
    pub fn new(values: Vec<[u32; 2]>) -> Self {
        Self { values }
    }

    /// Binary shorthand in the column order used by the paper's tables:
    /// `(A,H), (A,L), (R,H), (R,L)`.
    pub fn binary(a_high: u32, a_low: u32, r_high: u32, r_low: u32) -> Self {
        Self::new(vec![[a_low, r_low], [a_high, r_high]])
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn accept(&self, state: usize) -> u32 {
        self.values[state][0]
    }

    pub fn reject(&self, state: usize) -> u32 {
        self.values[state][1]
    }

    pub fn get(&self, state: usize, alt: Alternative) -> u32 {
        match alt {
            Alternative::Accept => self.accept(state),
            Alternative::Reject => self.reject(state),
        }
    }

    pub fn values(&self) -> &[[u32; 2]] {
        &self.values
    }

    pub fn max_value(&self) -> u32 {
        self.values
            .iter()
            .flat_map(|v| v.iter().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn prefers(&self, state: usize) -> Alternative {
        if self.accept(state) > self.reject(state) {
            Alternative::Accept
        } else {
            Alternative::Reject
        }
    }

    /// `L_n`: the number of states in which the agent prefers `R`. Because
    /// preferences cross at most once, those states are exactly `0..L_n`.
    pub fn low_threshold(&self) -> usize {
        (0..self.n_states())
            .filter(|&s| self.prefers(s) == Alternative::Reject)
            .count()
    }

    fn is_monotone(&self) -> bool {
        let strictly = |f: &dyn Fn(&[u32; 2], &[u32; 2]) -> bool| {
            self.values.windows(2).all(|w| f(&w[0], &w[1]))
        };
        strictly(&|lo, hi| hi[0] > lo[0])
            && strictly(&|lo, hi| hi[1] < lo[1])
            && self.values.iter().all(|v| v[0] != v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentTag {
    Friendly,
    Unfriendly,
    Contingent,
}

/// Type of an agent relative to the informed majority. Thresholds are
/// 1-based state labels: `low_threshold = L_n` is the largest state in
/// which the agent prefers `R` (0 if none), `high_threshold = L_n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentType {
    pub tag: AgentTag,
    pub low_threshold: usize,
    pub high_threshold: usize,
}

/// Probability of voting `A` after each signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Strategy(Vec<f64>);

impl Strategy {
    pub fn new(vote_probs: Vec<f64>) -> Result<Self> {
        if vote_probs.is_empty() {
            return Err(ModelError::Shape("empty strategy".into()));
        }
        if let Some(p) = vote_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ModelError::Shape(format!(
                "vote probability {p} outside [0, 1]"
            )));
        }
        Ok(Self(vote_probs))
    }

    /// Binary `(β_l, β_h)`.
    pub fn binary(beta_low: f64, beta_high: f64) -> Result<Self> {
        Self::new(vec![beta_low, beta_high])
    }

    pub fn constant(n_signals: usize, beta: f64) -> Self {
        Self(vec![beta.clamp(0.0, 1.0); n_signals])
    }

    pub fn always_accept(n_signals: usize) -> Self {
        Self::constant(n_signals, 1.0)
    }

    pub fn always_reject(n_signals: usize) -> Self {
        Self::constant(n_signals, 0.0)
    }

    /// Votes `beta_low` on signals below `split` and `beta_high` from `split` on.
    pub fn two_level(n_signals: usize, split: usize, beta_low: f64, beta_high: f64) -> Self {
        Self(
            (0..n_signals)
                .map(|m| if m < split { beta_low } else { beta_high })
                .map(|b| b.clamp(0.0, 1.0))
                .collect(),
        )
    }

    /// Votes `A` exactly on high signals (`(0, 1)` in the binary case).
    pub fn informative(n_signals: usize) -> Self {
        Self::two_level(n_signals, n_signals / 2, 0.0, 1.0)
    }

    pub fn vote_probs(&self) -> &[f64] {
        &self.0
    }

    pub fn n_signals(&self) -> usize {
        self.0.len()
    }

    pub fn is_always(&self, beta: f64) -> bool {
        self.0.iter().all(|&b| b == beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile(Vec<Strategy>);

impl Profile {
    pub fn new(strategies: Vec<Strategy>) -> Self {
        Self(strategies)
    }

    /// Friendly agents always vote `A`, unfriendly always `R`, contingent
    /// agents play `contingent`.
    pub fn regular(inst: &Instance, contingent: &Strategy) -> Self {
        let m = inst.channel().n_signals();
        Self(
            inst.agent_types()
                .iter()
                .map(|t| match t.tag {
                    AgentTag::Friendly => Strategy::always_accept(m),
                    AgentTag::Unfriendly => Strategy::always_reject(m),
                    AgentTag::Contingent => contingent.clone(),
                })
                .collect(),
        )
    }

    /// Regular profile in which contingent agents vote informatively.
    pub fn informative(inst: &Instance) -> Self {
        Self::regular(inst, &Strategy::informative(inst.channel().n_signals()))
    }

    pub fn symmetric(n: usize, strategy: &Strategy) -> Self {
        Self(vec![strategy.clone(); n])
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn with(&self, agent: usize, strategy: Strategy) -> Self {
        let mut next = self.0.clone();
        next[agent] = strategy;
        Self(next)
    }

    /// All friendly agents always vote `A` and all unfriendly always `R`.
    pub fn is_regular(&self, inst: &Instance) -> bool {
        self.0.len() == inst.n_agents()
            && self
                .0
                .iter()
                .zip(inst.agent_types())
                .all(|(s, t)| match t.tag {
                    AgentTag::Friendly => s.is_always(1.0),
                    AgentTag::Unfriendly => s.is_always(0.0),
                    AgentTag::Contingent => true,
                })
    }
}

/// A utility function shared by a fraction of the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub utility: UtilityFn,
    pub fraction: f64,
}

/// Parameters shared by every instance of a sequence: setting, threshold,
/// prior and signal channel, validated together.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    setting: Setting,
    threshold: f64,
    prior: StatePrior,
    channel: SignalChannel,
}

impl Game {
    pub fn new(
        setting: Setting,
        threshold: f64,
        prior: StatePrior,
        channel: SignalChannel,
    ) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ModelError::ThresholdOutOfRange(threshold));
        }
        if channel.n_states() != prior.n_states() {
            return Err(ModelError::Shape(format!(
                "prior has {} states but signal matrix has {} rows",
                prior.n_states(),
                channel.n_states()
            )));
        }
        if prior.n_states() < 2 {
            return Err(ModelError::Shape("need at least two world states".into()));
        }
        match setting {
            Setting::Binary => {
                if prior.n_states() != 2 || channel.n_signals() != 2 {
                    return Err(ModelError::Shape(
                        "binary setting needs 2 states and 2 signals".into(),
                    ));
                }
                let (p_hl, p_hh) = (channel.prob(0, 1), channel.prob(1, 1));
                let (p_ll, p_lh) = (channel.prob(0, 0), channel.prob(1, 0));
                if !(p_hh - p_hl > TOL && p_ll - p_lh > TOL) {
                    return Err(ModelError::NoPositiveCorrelation);
                }
            }
            Setting::Nonbinary => {
                for cutoff in 1..channel.n_signals() {
                    for higher in 1..channel.n_states() {
                        for lower in 0..higher {
                            let gap = channel.upper_tail(higher, cutoff)
                                - channel.upper_tail(lower, cutoff);
                            if !(gap > TOL) {
                                return Err(ModelError::NoStochasticDominance {
                                    higher,
                                    lower,
                                    cutoff,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            setting,
            threshold,
            prior,
            channel,
        })
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn prior(&self) -> &StatePrior {
        &self.prior
    }

    pub fn channel(&self) -> &SignalChannel {
        &self.channel
    }

    pub fn n_states(&self) -> usize {
        self.prior.n_states()
    }

    pub fn n_signals(&self) -> usize {
        self.channel.n_signals()
    }

    /// Bayes posterior over states given the signal, `None` when the signal
    /// has zero probability.
    pub fn posterior(&self, signal: usize) -> Option<Vec<f64>> {
        let joint: Vec<f64> = self
            .prior
            .probs()
            .iter()
            .enumerate()
            .map(|(s, p)| p * self.channel.prob(s, signal))
            .collect();
        let total: f64 = joint.iter().sum();
        (total > 0.0).then(|| joint.into_iter().map(|j| j / total).collect())
    }

    fn check_utility(&self, agent: usize, u: &UtilityFn) -> Result<()> {
        if u.n_states() != self.n_states() {
            return Err(ModelError::Shape(format!(
                "utility of agent {agent} has {} states, expected {}",
                u.n_states(),
                self.n_states()
            )));
        }
        if !u.is_monotone() {
            return Err(ModelError::UtilityNotMonotone { agent });
        }
        Ok(())
    }
}

/// How the population splits into types, plus the share preferring `A` in
/// each state. For a [`Family`] these are the N-independent fractions; for
/// an [`Instance`] they are realized counts divided by `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub friendly: f64,
    pub unfriendly: f64,
    pub contingent: f64,
    pub accept_share: Vec<f64>,
    /// `|𝓛|`: states `0..low_states` have informed majority `R`.
    pub low_states: usize,
}

impl Composition {
    fn from_shares(threshold: f64, accept_share: Vec<f64>) -> Result<Self> {
        for (state, &a) in accept_share.iter().enumerate() {
            if (a - threshold).abs() <= TOL {
                return Err(ModelError::KnifeEdgeThreshold { state });
            }
        }
        let low_states = accept_share.iter().filter(|&&a| a < threshold).count();
        if low_states == 0 {
            return Err(ModelError::DegenerateMajority(Alternative::Accept));
        }
        if low_states == accept_share.len() {
            return Err(ModelError::DegenerateMajority(Alternative::Reject));
        }
        // Each agent's preference crosses once, so the share is monotone and
        // 𝓛 is a prefix; anything else means a broken utility slipped through.
        debug_assert!(accept_share[..low_states].iter().all(|&a| a < threshold));
        let friendly = accept_share[low_states - 1];
        let unfriendly = 1.0 - accept_share[low_states];
        Ok(Self {
            friendly,
            unfriendly,
            contingent: 1.0 - friendly - unfriendly,
            accept_share,
            low_states,
        })
    }

    pub fn informed_majority(&self, state: usize) -> Alternative {
        if state < self.low_states {
            Alternative::Reject
        } else {
            Alternative::Accept
        }
    }

    /// 0-based index of `L`, the largest state with informed majority `R`.
    pub fn state_l(&self) -> usize {
        self.low_states - 1
    }

    /// 0-based index of `H = L + 1`.
    pub fn state_h(&self) -> usize {
        self.low_states
    }

    pub fn classify(&self, u: &UtilityFn) -> AgentType {
        let low = u.low_threshold();
        let tag = match low.cmp(&self.low_states) {
            std::cmp::Ordering::Less => AgentTag::Friendly,
            std::cmp::Ordering::Greater => AgentTag::Unfriendly,
            std::cmp::Ordering::Equal => AgentTag::Contingent,
        };
        AgentType {
            tag,
            low_threshold: low,
            high_threshold: low + 1,
        }
    }
}

/// An instance sequence without `N`: groups of agents given by fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    game: Game,
    groups: Vec<Group>,
    group_types: Vec<AgentType>,
    composition: Composition,
}

fn floor_count(x: f64) -> usize {
    (x + ROUND_SLACK).floor().max(0.0) as usize
}

impl Family {
    pub fn new(game: Game, groups: Vec<Group>) -> Result<Self> {
        if groups.is_empty() {
            return Err(ModelError::Shape("no groups".into()));
        }
        for (group, g) in groups.iter().enumerate() {
            if !(g.fraction > 0.0 && g.fraction <= 1.0 + TOL) {
                return Err(ModelError::BadFraction {
                    group,
                    value: g.fraction,
                });
            }
            game.check_utility(group, &g.utility)?;
        }
        let total: f64 = groups.iter().map(|g| g.fraction).sum();
        if (total - 1.0).abs() > TOL {
            return Err(ModelError::FractionsNotNormalized(total));
        }
        let accept_share = (0..game.n_states())
            .map(|s| {
                groups
                    .iter()
                    .filter(|g| g.utility.prefers(s) == Alternative::Accept)
                    .map(|g| g.fraction)
                    .sum()
            })
            .collect();
        let composition = Composition::from_shares(game.threshold, accept_share)?;
        let group_types = groups
            .iter()
            .map(|g| composition.classify(&g.utility))
            .collect();
        Ok(Self {
            game,
            groups,
            group_types,
            composition,
        })
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group_types(&self) -> &[AgentType] {
        &self.group_types
    }

    pub fn composition(&self) -> &Composition {
        &self.composition
    }

    /// Agent counts per group at population size `n`. Type totals follow
    /// the setting's rounding rule; within a type, groups receive cumulative
    /// floors in input order and the last group of the type the remainder.
    pub fn group_counts(&self, n: usize) -> Vec<usize> {
        let nf = n as f64;
        let c = &self.composition;
        let (n_friendly, n_unfriendly) = match self.game.setting {
            Setting::Binary => (floor_count(c.friendly * nf), floor_count(c.unfriendly * nf)),
            Setting::Nonbinary => (
                n - floor_count((1.0 - c.friendly) * nf).min(n),
                floor_count(c.unfriendly * nf),
            ),
        };
        let n_friendly = n_friendly.min(n);
        let n_unfriendly = n_unfriendly.min(n - n_friendly);
        let n_contingent = n - n_friendly - n_unfriendly;

        let mut counts = vec![0; self.groups.len()];
        for (tag, total) in [
            (AgentTag::Friendly, n_friendly),
            (AgentTag::Unfriendly, n_unfriendly),
            (AgentTag::Contingent, n_contingent),
        ] {
            let members: Vec<usize> = (0..self.groups.len())
                .filter(|&g| self.group_types[g].tag == tag)
                .collect();
            let Some((&last, init)) = members.split_last() else {
                continue;
            };
            let mut cumulative = 0.0;
            let mut allocated = 0;
            for &g in init {
                let before = floor_count(cumulative * nf);
                cumulative += self.groups[g].fraction;
                let take = (floor_count(cumulative * nf) - before).min(total - allocated);
                counts[g] = take;
                allocated += take;
            }
            counts[last] = total - allocated;
        }
        counts
    }

    /// Materializes the instance with `n` agents, group by group.
    pub fn instance(&self, n: usize) -> Result<Instance> {
        if n == 0 {
            return Err(ModelError::Shape("need at least one agent".into()));
        }
        let counts = self.group_counts(n);
        let mut agents = Vec::with_capacity(n);
        let mut group_of_agent = Vec::with_capacity(n);
        for (g, &count) in counts.iter().enumerate() {
            agents.extend(std::iter::repeat_n(self.groups[g].utility.clone(), count));
            group_of_agent.extend(std::iter::repeat_n(g, count));
        }
        let realized = realized_shares(&agents, self.game.n_states());
        for (state, &share) in realized.iter().enumerate() {
            let fraction = self.composition.accept_share[state];
            let flipped = (share > self.game.threshold) != (fraction > self.game.threshold);
            if flipped || (share - self.game.threshold).abs() <= TOL {
                return Err(ModelError::RoundingFlipsMajority { n, state });
            }
        }
        let mut inst = Instance::from_agents(self.game.clone(), agents)?;
        inst.family = Some(Box::new(self.clone()));
        inst.group_of_agent = Some(group_of_agent);
        Ok(inst)
    }
}

fn realized_shares(agents: &[UtilityFn], n_states: usize) -> Vec<f64> {
    let n = agents.len() as f64;
    (0..n_states)
        .map(|s| {
            agents
                .iter()
                .filter(|u| u.prefers(s) == Alternative::Accept)
                .count() as f64
                / n
        })
        .collect()
}

/// A complete, validated voting game with `N` concrete agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    game: Game,
    agents: Vec<UtilityFn>,
    agent_types: Vec<AgentType>,
    composition: Composition,
    family: Option<Box<Family>>,
    group_of_agent: Option<Vec<usize>>,
}

impl Instance {
    pub fn from_agents(game: Game, agents: Vec<UtilityFn>) -> Result<Self> {
        if agents.is_empty() {
            return Err(ModelError::Shape("need at least one agent".into()));
        }
        for (agent, u) in agents.iter().enumerate() {
            game.check_utility(agent, u)?;
        }
        let shares = realized_shares(&agents, game.n_states());
        let composition = Composition::from_shares(game.threshold, shares)?;
        let agent_types = agents.iter().map(|u| composition.classify(u)).collect();
        Ok(Self {
            game,
            agents,
            agent_types,
            composition,
            family: None,
            group_of_agent: None,
        })
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn setting(&self) -> Setting {
        self.game.setting
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn threshold(&self) -> f64 {
        self.game.threshold
    }

    pub fn prior(&self) -> &StatePrior {
        &self.game.prior
    }

    pub fn channel(&self) -> &SignalChannel {
        &self.game.channel
    }

    pub fn n_states(&self) -> usize {
        self.game.n_states()
    }

    pub fn agents(&self) -> &[UtilityFn] {
        &self.agents
    }

    pub fn agent_types(&self) -> &[AgentType] {
        &self.agent_types
    }

    /// Realized composition (`N_F / N`, ...).
    pub fn composition(&self) -> &Composition {
        &self.composition
    }

    /// The generating family when the instance came from groups.
    pub fn family(&self) -> Option<&Family> {
        self.family.as_deref()
    }

    /// Group index of every agent when the instance came from groups.
    pub fn group_of_agent(&self) -> Option<&[usize]> {
        self.group_of_agent.as_deref()
    }

    /// N-independent composition when available, realized otherwise.
    pub fn reference_composition(&self) -> &Composition {
        self.family().map_or(&self.composition, Family::composition)
    }

    /// Largest utility value over all agents (at least 1).
    pub fn utility_bound(&self) -> u32 {
        self.agents
            .iter()
            .map(UtilityFn::max_value)
            .max()
            .unwrap_or(1)
            .max(1)
    }

    /// Votes needed for `A` to win: `⌈μN⌉`.
    pub fn win_threshold(&self) -> usize {
        let target = self.game.threshold * self.n_agents() as f64;
        (target - ROUND_SLACK).ceil().max(0.0) as usize
    }

    pub fn count(&self, tag: AgentTag) -> usize {
        self.agent_types.iter().filter(|t| t.tag == tag).count()
    }

    pub fn indices_of(&self, tag: AgentTag) -> Vec<usize> {
        (0..self.n_agents())
            .filter(|&n| self.agent_types[n].tag == tag)
            .collect()
    }

    pub fn to_raw(&self) -> RawInstance {
        let (groups, agents) = match &self.family {
            Some(f) => (Some(f.groups.clone()), None),
            None => (None, Some(self.agents.clone())),
        };
        RawInstance {
            setting: self.game.setting,
            n: self.n_agents(),
            mu: self.game.threshold,
            prior: self.game.prior.probs().to_vec(),
            signal_matrix: self.game.channel.rows().to_vec(),
            groups,
            agents,
        }
    }
}

/// The JSON document an instance is read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInstance {
    pub setting: Setting,
    pub n: usize,
    pub mu: f64,
    pub prior: Vec<f64>,
    pub signal_matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Group>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<UtilityFn>>,
}

impl RawInstance {
    pub fn game(&self) -> Result<Game> {
        Game::new(
            self.setting,
            self.mu,
            StatePrior::new(self.prior.clone())?,
            SignalChannel::new(self.signal_matrix.clone())?,
        )
    }

    pub fn family(&self) -> Result<Family> {
        let groups = self
            .groups
            .clone()
            .ok_or_else(|| ModelError::Shape("instance has no groups".into()))?;
        Family::new(self.game()?, groups)
    }
}

/// Checks every assumption on a raw instance and materializes its agents.
pub fn validate_instance(raw: &RawInstance) -> Result<Instance> {
    let game = raw.game()?;
    match (&raw.groups, &raw.agents) {
        (Some(_), None) => {
            Family::new(game, raw.groups.clone().unwrap_or_default())?.instance(raw.n)
        }
        (None, Some(agents)) => {
            if agents.len() != raw.n {
                return Err(ModelError::AgentCountMismatch {
                    expected: raw.n,
                    got: agents.len(),
                });
            }
            Instance::from_agents(game, agents.clone())
        }
        _ => Err(ModelError::Shape(
            "exactly one of `groups` and `agents` must be given".into(),
        )),
    }
}

pub fn classify_agent(u: &UtilityFn, inst: &Instance) -> AgentType {
    inst.reference_composition().classify(u)
}

pub fn informed_majority(inst: &Instance, state: usize) -> Alternative {
    inst.reference_composition().informed_majority(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ex4() -> RawInstance {
        RawInstance {
            setting: Setting::Binary,
            n: 20,
            mu: 0.6,
            prior: vec![0.6, 0.4],
            signal_matrix: vec![vec![0.4, 0.6], vec![0.2, 0.8]],
            groups: Some(vec![
                Group {
                    utility: UtilityFn::binary(8, 6, 2, 4),
                    fraction: 0.2,
                },
                Group {
                    utility: UtilityFn::binary(3, 1, 5, 8),
                    fraction: 0.3,
                },
                Group {
                    utility: UtilityFn::binary(3, 2, 1, 8),
                    fraction: 0.5,
                },
            ]),
            agents: None,
        }
    }

    fn ex9() -> RawInstance {
        let u = |a: [u32; 3], r: [u32; 3]| UtilityFn::new((0..3).map(|s| [a[s], r[s]]).collect());
        RawInstance {
            setting: Setting::Nonbinary,
            n: 20,
            mu: 0.6,
            prior: vec![0.3, 0.3, 0.4],
            signal_matrix: vec![
                vec![0.6, 0.2, 0.1, 0.1],
                vec![0.4, 0.2, 0.2, 0.2],
                vec![0.1, 0.2, 0.3, 0.4],
            ],
            groups: Some(vec![
                Group {
                    utility: u([1, 2, 3], [8, 6, 4]),
                    fraction: 0.25,
                },
                Group {
                    utility: u([2, 3, 4], [6, 4, 2]),
                    fraction: 0.25,
                },
                Group {
                    utility: u([2, 5, 8], [4, 3, 2]),
                    fraction: 0.25,
                },
                Group {
                    utility: u([4, 6, 9], [3, 2, 1]),
                    fraction: 0.25,
                },
            ]),
            agents: None,
        }
    }

    #[test]
    fn example_4_is_valid_with_expected_counts() {
        let inst = validate_instance(&ex4()).unwrap();
        assert_eq!(inst.count(AgentTag::Friendly), 4);
        assert_eq!(inst.count(AgentTag::Unfriendly), 6);
        assert_eq!(inst.count(AgentTag::Contingent), 10);
        assert_eq!(inst.win_threshold(), 12);
        assert_eq!(informed_majority(&inst, 1), Alternative::Accept);
        assert_eq!(informed_majority(&inst, 0), Alternative::Reject);
    }

    #[test]
    fn uninformative_channel_is_rejected() {
        let mut raw = ex4();
        raw.signal_matrix = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert_eq!(
            validate_instance(&raw),
            Err(ModelError::NoPositiveCorrelation)
        );
    }

    #[test]
    fn example_9_types_and_majority() {
        let inst = validate_instance(&ex9()).unwrap();
        let majority: Vec<_> = (0..3).map(|s| informed_majority(&inst, s)).collect();
        assert_eq!(
            majority,
            [
                Alternative::Reject,
                Alternative::Reject,
                Alternative::Accept
            ]
        );
        let family = inst.family().unwrap();
        let tags: Vec<_> = family.group_types().iter().map(|t| t.tag).collect();
        assert_eq!(
            tags,
            [
                AgentTag::Unfriendly,
                AgentTag::Contingent,
                AgentTag::Friendly,
                AgentTag::Friendly
            ]
        );
        assert_eq!(family.group_counts(20), [5, 5, 5, 5]);
        let g2 = family.group_types()[1];
        assert_eq!((g2.low_threshold, g2.high_threshold), (2, 3));
    }

    #[test]
    fn example_4_agent_tags() {
        let inst = validate_instance(&ex4()).unwrap();
        let friendly = classify_agent(&UtilityFn::binary(8, 6, 2, 4), &inst);
        assert_eq!(friendly.tag, AgentTag::Friendly);
        assert_eq!(friendly.low_threshold, 0);
        assert_eq!(
            classify_agent(&UtilityFn::binary(3, 1, 5, 8), &inst).tag,
            AgentTag::Unfriendly
        );
        assert_eq!(
            classify_agent(&UtilityFn::binary(3, 2, 1, 8), &inst).tag,
            AgentTag::Contingent
        );
    }

    #[test]
    fn always_prefers_accept_is_friendly() {
        let inst = validate_instance(&ex4()).unwrap();
        let t = classify_agent(&UtilityFn::binary(9, 7, 1, 2), &inst);
        assert_eq!(
            (t.tag, t.low_threshold, t.high_threshold),
            (AgentTag::Friendly, 0, 1)
        );
    }

    #[test]
    fn error_paths() {
        let mut raw = ex4();
        raw.prior = vec![0.0, 1.0];
        assert!(matches!(
            validate_instance(&raw),
            Err(ModelError::NonPositivePrior { state: 0, .. })
        ));

        let mut raw = ex4();
        raw.signal_matrix[0] = vec![0.5, 0.6];
        assert_eq!(
            validate_instance(&raw),
            Err(ModelError::RowNotStochastic { state: 0 })
        );

        let mut raw = ex4();
        raw.groups.as_mut().unwrap()[2].utility = UtilityFn::binary(2, 3, 1, 8);
        assert_eq!(
            validate_instance(&raw),
            Err(ModelError::UtilityNotMonotone { agent: 2 })
        );

        // Friendly share alone clears the threshold.
        let mut raw = ex4();
        raw.mu = 0.1;
        assert_eq!(
            validate_instance(&raw),
            Err(ModelError::DegenerateMajority(Alternative::Accept))
        );

        let mut raw = ex4();
        raw.mu = 0.7;
        assert_eq!(
            validate_instance(&raw),
            Err(ModelError::KnifeEdgeThreshold { state: 1 })
        );

        let mut raw = ex9();
        raw.signal_matrix[1] = vec![0.6, 0.2, 0.1, 0.1];
        assert!(matches!(
            validate_instance(&raw),
            Err(ModelError::NoStochasticDominance { .. })
        ));

        let mut raw = ex4();
        raw.groups.as_mut().unwrap()[0].fraction = 0.25;
        assert!(matches!(
            validate_instance(&raw),
            Err(ModelError::FractionsNotNormalized(_))
        ));
    }

    #[test]
    fn rounding_that_flips_the_majority_is_rejected() {
        // Fractions 0.4 / 0.1 / 0.5 with μ = 0.45: A is preferred by 0.4 in
        // L and 0.9 in H.
        let mut raw = ex4();
        raw.mu = 0.45;
        raw.groups.as_mut().unwrap()[0].fraction = 0.4;
        raw.groups.as_mut().unwrap()[1].fraction = 0.1;
        raw.n = 2;
        // N_F = 0, N_U = 0, N_C = 2: realized share of A in L is 0 < μ (as
        // for fractions, 0.4 < 0.45) and 1 in H; fine.
        assert!(validate_instance(&raw).is_ok());
        raw.n = 5;
        // N_F = 2 (0.4 of 5), N_U = 0, N_C = 3: share in L = 0.4 < 0.45 ok.
        assert!(validate_instance(&raw).is_ok());
        // Non-binary rounding can push the friendly share above μ.
        raw.setting = Setting::Nonbinary;
        raw.n = 3;
        // N_F = 3 - ⌊0.6·3⌋ = 2, share 0.667 > 0.45 while α_F = 0.4 < 0.45.
        assert_eq!(
            validate_instance(&raw),
            Err(ModelError::RoundingFlipsMajority { n: 3, state: 0 })
        );
    }

    #[test]
    fn revalidation_is_idempotent() {
        for raw in [ex4(), ex9()] {
            let once = validate_instance(&raw).unwrap();
            let twice = validate_instance(&once.to_raw()).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn appendix_c_style_explicit_agents() {
        let raw = RawInstance {
            setting: Setting::Binary,
            n: 3,
            mu: 0.5,
            prior: vec![0.5, 0.5],
            signal_matrix: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
            groups: None,
            agents: Some(vec![
                UtilityFn::binary(100, 99, 0, 1),
                UtilityFn::binary(90, 0, 0, 100),
                UtilityFn::binary(90, 0, 0, 100),
            ]),
        };
        let inst = validate_instance(&raw).unwrap();
        assert_eq!(inst.win_threshold(), 2);
        assert_eq!(inst.utility_bound(), 100);
        let mut short = raw.clone();
        short.n = 4;
        assert!(matches!(
            validate_instance(&short),
            Err(ModelError::AgentCountMismatch { .. })
        ));
    }

    #[test]
    fn win_threshold_is_robust_to_float_products() {
        let mut raw = ex4();
        for (n, expected) in [(20, 12), (30, 18), (500, 300), (25, 15), (7, 5)] {
            raw.n = n;
            let inst = validate_instance(&raw).unwrap();
            assert_eq!(inst.win_threshold(), expected, "n = {n}");
        }
    }
}
