//! Strategic side of the game: the high-fidelity strategy construction,
//! ε-strong equilibrium bounds, a sound (but incomplete) refuter for
//! ε-strong equilibrium, and an instance family without any strong
//! equilibrium.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactprob::{
    self, check_profile, expected_utility, poisson_binomial, vote_prob, vote_probs, ExactError,
};
use crate::model::{
    AgentTag, Composition, Family, Game, Instance, ModelError, Profile, Setting, SignalChannel,
    StatePrior, Strategy, UtilityFn, TOL,
};

/// Gains down to this (negative) value still count as "not worse off".
pub const WEAK_GAIN_TOL: f64 = 1e-12;

/// Default fraction of the feasible slack used for the low-signal
/// adjustment.
pub const DEFAULT_KAPPA: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategizeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("construction infeasible: {0}")]
    ConstructionInfeasible(String),
    #[error("invalid adjustment: {0}")]
    InvalidAdjustment(String),
    #[error("invalid deviation candidate: {0}")]
    InvalidCandidate(String),
    #[error("grid resolution {0} must lie in (0, 1]")]
    InvalidResolution(f64),
    #[error("N0 must be at least 1")]
    InvalidSize,
}

pub type Result<T, E = StrategizeError> = std::result::Result<T, E>;

/// Optional overrides for [`construct_sigma_prime`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructionParams {
    pub kappa: f64,
    pub delta_l: Option<f64>,
    pub boost: Option<f64>,
}

impl Default for ConstructionParams {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            delta_l: None,
            boost: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionTrace {
    /// Signal-independent vote probability that puts the expected `A`
    /// share exactly on the threshold.
    pub beta_star: f64,
    /// Signals `0..split_signal` are "low", the rest "high".
    pub split_signal: usize,
    pub delta_l: f64,
    pub delta_h: f64,
    pub delta_h_boost: f64,
    /// Two-level strategy before the boost.
    pub sigma_one: Strategy,
    pub sigma_prime: Strategy,
    /// `P_hω (δ_h + boost) − P_lω δ_l` per state: the change in the
    /// contingent agents' `A`-vote probability relative to `β*`.
    pub vote_shift: Vec<f64>,
    /// Same quantity for the un-boosted strategy.
    pub vote_shift_one: Vec<f64>,
    /// N-independent excess of the regular profile: `A` side, per state.
    pub certificate_accept: Vec<f64>,
    /// N-independent excess of the regular profile: `R` side, per state.
    pub certificate_reject: Vec<f64>,
    pub certificate_accept_one: Vec<f64>,
    pub certificate_reject_one: Vec<f64>,
    /// Half the smallest relevant certificate.
    pub phi: f64,
    /// From this population on, realized excess stays above `phi`.
    pub n0: usize,
}

/// Builds a two-level strategy for contingent agents whose regular profile
/// has strictly positive excess share in every relevant state.
pub fn construct_sigma_prime(
    family: &Family,
    params: &ConstructionParams,
) -> Result<ConstructionTrace> {
    construct_for(family.game(), family.composition(), params)
}

/// Construction against an arbitrary composition (e.g. realized counts of
/// an explicit-agent instance).
pub fn construct_for(
    game: &Game,
    comp: &Composition,
    params: &ConstructionParams,
) -> Result<ConstructionTrace> {
    let mu = game.threshold();
    let (alpha_f, alpha_u, alpha_c) = (comp.friendly, comp.unfriendly, comp.contingent);
    if !(alpha_f < mu && alpha_u < 1.0 - mu) || alpha_c <= TOL {
        return Err(StrategizeError::ConstructionInfeasible(format!(
            "friendly {alpha_f} / unfriendly {alpha_u} shares leave no room at threshold {mu}"
        )));
    }
    let beta_star = (mu - alpha_f) / alpha_c;
    let channel = game.channel();
    let split = channel.split_signal();
    let (p_lh, p_hh) = channel.grouped(comp.state_h());

    let delta_l = match params.delta_l {
        Some(d) => d,
        None => {
            if !(params.kappa > 0.0 && params.kappa < 1.0) {
                return Err(StrategizeError::InvalidAdjustment(format!(
                    "kappa {} must lie in (0, 1)",
                    params.kappa
                )));
            }
            // The last term keeps β* + δ_h below 1 when high signals are rare.
            params.kappa
                * beta_star
                    .min(1.0 - beta_star)
                    .min((1.0 - beta_star) * p_hh / p_lh)
        }
    };
    let delta_h = delta_l * p_lh / p_hh;
    let beta_l = beta_star - delta_l;
    let beta_h = beta_star + delta_h;
    if !(delta_l > 0.0 && beta_l >= -TOL && beta_h <= 1.0 + TOL) {
        return Err(StrategizeError::InvalidAdjustment(format!(
            "delta_l {delta_l} gives vote probabilities ({beta_l}, {beta_h})"
        )));
    }
    let m = channel.n_signals();
    let sigma_one = Strategy::two_level(m, split, beta_l, beta_h);
    let (accept_one, reject_one) = certificates(game, comp, &sigma_one);
    let slack = (0..comp.low_states)
        .map(|s| reject_one[s])
        .fold(f64::INFINITY, f64::min);

    let boost_cap = (1.0 - beta_h).min(slack / (2.0 * alpha_c));
    let boost = match params.boost {
        Some(b) => {
            if !(b > 0.0 && b <= boost_cap + TOL) {
                return Err(StrategizeError::InvalidAdjustment(format!(
                    "boost {b} outside (0, {boost_cap}]"
                )));
            }
            b
        }
        None => boost_cap,
    };
    let sigma_prime = Strategy::two_level(m, split, beta_l, beta_h + boost);
    let (accept, reject) = certificates(game, comp, &sigma_prime);

    let shift = |dh: f64| -> Vec<f64> {
        (0..game.n_states())
            .map(|s| {
                let (pl, ph) = channel.grouped(s);
                ph * dh - pl * delta_l
            })
            .collect()
    };
    let relevant_min = (0..game.n_states())
        .map(|s| {
            if s < comp.low_states {
                reject[s]
            } else {
                accept[s]
            }
        })
        .fold(f64::INFINITY, f64::min);
    if !(relevant_min > 0.0) {
        return Err(StrategizeError::ConstructionInfeasible(format!(
            "smallest certificate {relevant_min} is not positive"
        )));
    }
    let phi = relevant_min / 2.0;
    Ok(ConstructionTrace {
        beta_star,
        split_signal: split,
        delta_l,
        delta_h,
        delta_h_boost: boost,
        sigma_one,
        sigma_prime,
        vote_shift: shift(delta_h + boost),
        vote_shift_one: shift(delta_h),
        certificate_accept: accept,
        certificate_reject: reject,
        certificate_accept_one: accept_one,
        certificate_reject_one: reject_one,
        phi,
        n0: (2.0 / phi).ceil() as usize,
    })
}

/// `α_F + α_C p_ω − μ` and `α_U + α_C (1 − p_ω) − (1 − μ)` per state.
fn certificates(game: &Game, comp: &Composition, s: &Strategy) -> (Vec<f64>, Vec<f64>) {
    let mu = game.threshold();
    (0..game.n_states())
        .map(|w| {
            let p = vote_prob(s, game.channel(), w);
            (
                comp.friendly + comp.contingent * p - mu,
                comp.unfriendly + comp.contingent * (1.0 - p) - (1.0 - mu),
            )
        })
        .unzip()
}

/// Largest gain any coalition can get by deviating from a regular profile
/// with fidelity `fidelity`: `T B ((T − 1) B + 1) (1 − A)`.
pub fn epsilon_bound(fidelity: f64, utility_bound: u32, n_states: usize) -> f64 {
    let b = utility_bound as f64;
    let t = n_states as f64;
    t * b * ((t - 1.0) * b + 1.0) * (1.0 - fidelity)
}

/// Two-state form `2 B (B + 1) (1 − A)`.
pub fn epsilon_bound_binary(fidelity: f64, utility_bound: u32) -> f64 {
    let b = utility_bound as f64;
    2.0 * b * (b + 1.0) * (1.0 - fidelity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationSource {
    Constructed,
    CoalitionGrid,
    SingleAgent,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationFinding {
    pub source: DeviationSource,
    pub coalition: Vec<usize>,
    pub alternative: Profile,
    /// Utility change of each coalition member, in `coalition` order.
    pub gains: Vec<f64>,
    pub max_gain: f64,
    /// Every member is at least as well off (up to [`WEAK_GAIN_TOL`]).
    pub weak_ok: bool,
}

impl DeviationFinding {
    fn refutes(&self, epsilon: f64) -> bool {
        self.weak_ok && self.max_gain > epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationCandidate {
    pub coalition: Vec<usize>,
    /// New strategy of each coalition member, in `coalition` order.
    pub strategies: Vec<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviationSearchSpec {
    /// Grid step per vote-probability coordinate.
    pub resolution: f64,
    pub constructed: bool,
    pub coalition_grid: bool,
    pub single_agent: bool,
    pub construction: ConstructionParams,
    pub candidates: Vec<DeviationCandidate>,
}

impl Default for DeviationSearchSpec {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            constructed: true,
            coalition_grid: true,
            single_agent: true,
            construction: ConstructionParams::default(),
            candidates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Refutation {
    Refuted(DeviationFinding),
    /// No structured deviation cleared `ε`. This is not a proof of
    /// equilibrium: the search family is finite.
    NotRefuted {
        candidates_checked: usize,
        best_gain: f64,
        best: Option<DeviationFinding>,
    },
}

/// Per-state win probabilities for a profile.
fn lambdas(inst: &Instance, profile: &Profile) -> (Vec<f64>, Vec<f64>) {
    let t = inst.win_threshold();
    (0..inst.n_states())
        .map(|s| {
            let pmf = poisson_binomial(&vote_probs(profile, inst, s));
            (
                pmf[t.min(pmf.len())..].iter().sum::<f64>(),
                pmf[..t.min(pmf.len())].iter().sum::<f64>(),
            )
        })
        .unzip()
}

fn evaluate(
    inst: &Instance,
    base_utils: &[f64],
    source: DeviationSource,
    coalition: &[usize],
    alternative: Profile,
) -> DeviationFinding {
    let (la, lr) = lambdas(inst, &alternative);
    let gains: Vec<f64> = coalition
        .iter()
        .map(|&n| expected_utility(inst, &inst.agents()[n], &la, &lr) - base_utils[n])
        .collect();
    let max_gain = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weak_ok = gains.iter().all(|&g| g >= -WEAK_GAIN_TOL);
    DeviationFinding {
        source,
        coalition: coalition.to_vec(),
        alternative,
        gains,
        max_gain,
        weak_ok,
    }
}

fn grid(resolution: f64) -> Result<Vec<f64>> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(StrategizeError::InvalidResolution(resolution));
    }
    let steps = (1.0 / resolution).round().max(1.0) as usize;
    Ok((0..=steps).map(|i| i as f64 / steps as f64).collect())
}

/// Two-level strategies on the grid, ordered by low level then high level.
fn grid_strategies(inst: &Instance, resolution: f64) -> Result<Vec<Strategy>> {
    let levels = grid(resolution)?;
    let m = inst.channel().n_signals();
    let split = inst.channel().split_signal();
    Ok(levels
        .iter()
        .flat_map(|&lo| {
            levels
                .iter()
                .map(move |&hi| Strategy::two_level(m, split, lo, hi))
        })
        .collect())
}

/// Searches a structured family of deviations from `profile` for one in
/// which no coalition member loses and some member gains more than
/// `epsilon`. Phases run in a fixed order — constructed strategy for the
/// contingent coalition, contingent-coalition grid, single-agent grid,
/// explicit candidates — and the first refuting candidate in that order is
/// returned, independently of the thread count.
pub fn refute_equilibrium(
    profile: &Profile,
    inst: &Instance,
    epsilon: f64,
    search: &DeviationSearchSpec,
) -> Result<Refutation> {
    check_profile(profile, inst)?;
    let report = exactprob::analyze(profile, inst)?;
    let base = report.expected_utilities;
    let contingent = inst.indices_of(AgentTag::Contingent);
    let mut checked = 0usize;
    let mut best: Option<DeviationFinding> = None;

    let mut consider = |findings: Vec<DeviationFinding>| -> Option<DeviationFinding> {
        checked += findings.len();
        for f in findings {
            if f.refutes(epsilon) {
                return Some(f);
            }
            if f.weak_ok && best.as_ref().is_none_or(|b| f.max_gain > b.max_gain) {
                best = Some(f);
            }
        }
        None
    };

    let coalition_switch = |s: &Strategy| -> Profile {
        let mut next = profile.strategies().to_vec();
        for &n in &contingent {
            next[n] = s.clone();
        }
        Profile::new(next)
    };

    if search.constructed && !contingent.is_empty() {
        let comp = inst.reference_composition();
        if let Ok(trace) = construct_for(inst.game(), comp, &search.construction) {
            let alt = coalition_switch(&trace.sigma_prime);
            let f = evaluate(inst, &base, DeviationSource::Constructed, &contingent, alt);
            if let Some(hit) = consider(vec![f]) {
                return Ok(Refutation::Refuted(hit));
            }
        }
    }

    if search.coalition_grid && !contingent.is_empty() {
        let findings: Vec<DeviationFinding> = grid_strategies(inst, search.resolution)?
            .par_iter()
            .map(|s| {
                evaluate(
                    inst,
                    &base,
                    DeviationSource::CoalitionGrid,
                    &contingent,
                    coalition_switch(s),
                )
            })
            .collect();
        if let Some(hit) = consider(findings) {
            return Ok(Refutation::Refuted(hit));
        }
    }

    if search.single_agent {
        let findings = single_agent_search(profile, inst, &base, search.resolution)?;
        if let Some(hit) = consider(findings) {
            return Ok(Refutation::Refuted(hit));
        }
    }

    let mut explicit = Vec::with_capacity(search.candidates.len());
    for c in &search.candidates {
        if c.coalition.len() != c.strategies.len() || c.coalition.is_empty() {
            return Err(StrategizeError::InvalidCandidate(
                "coalition and strategies must be non-empty and of equal length".into(),
            ));
        }
        let mut next = profile.strategies().to_vec();
        for (&n, s) in c.coalition.iter().zip(&c.strategies) {
            if n >= inst.n_agents() {
                return Err(StrategizeError::InvalidCandidate(format!("no agent {n}")));
            }
            next[n] = s.clone();
        }
        let alt = Profile::new(next);
        check_profile(&alt, inst)?;
        explicit.push((c.coalition.clone(), alt));
    }
    let findings = explicit
        .into_par_iter()
        .map(|(coalition, alt)| evaluate(inst, &base, DeviationSource::Explicit, &coalition, alt))
        .collect();
    if let Some(hit) = consider(findings) {
        return Ok(Refutation::Refuted(hit));
    }

    Ok(Refutation::NotRefuted {
        candidates_checked: checked,
        best_gain: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.max_gain),
        best,
    })
}

/// Best grid response of each agent alone. Agents with the same utility
/// and strategy face the same distribution of others' votes, so one
/// representative per class is evaluated; the leave-one-out vote
/// distribution makes each candidate O(T).
fn single_agent_search(
    profile: &Profile,
    inst: &Instance,
    base: &[f64],
    resolution: f64,
) -> Result<Vec<DeviationFinding>> {
    let mut seen: HashMap<(Vec<[u32; 2]>, Vec<u64>), ()> = HashMap::new();
    let mut reps = Vec::new();
    for (n, (u, s)) in inst.agents().iter().zip(profile.strategies()).enumerate() {
        let key = (
            u.values().to_vec(),
            s.vote_probs().iter().map(|b| b.to_bits()).collect(),
        );
        if seen.insert(key, ()).is_none() {
            reps.push(n);
        }
    }
    let candidates = grid_strategies(inst, resolution)?;
    let t = inst.win_threshold();
    let per_agent: Vec<Vec<DeviationFinding>> = reps
        .par_iter()
        .map(|&n| {
            // Tails of the others' vote count: at least t, and at least t − 1.
            let tails: Vec<(f64, f64)> = (0..inst.n_states())
                .map(|w| {
                    let mut probs = vote_probs(profile, inst, w);
                    probs.remove(n);
                    let pmf = poisson_binomial(&probs);
                    let at_least = |k: usize| pmf.iter().skip(k).sum::<f64>();
                    (at_least(t), at_least(t.saturating_sub(1)))
                })
                .collect();
            let u = &inst.agents()[n];
            candidates
                .iter()
                .filter_map(|s| {
                    let (la, lr): (Vec<f64>, Vec<f64>) = (0..inst.n_states())
                        .map(|w| {
                            let p = vote_prob(s, inst.channel(), w);
                            let (ge_t, ge_t1) = tails[w];
                            let a = p * ge_t1 + (1.0 - p) * ge_t;
                            (a, 1.0 - a)
                        })
                        .unzip();
                    let gain = expected_utility(inst, u, &la, &lr) - base[n];
                    // Only improvements are worth materializing.
                    (gain > 0.0).then(|| DeviationFinding {
                        source: DeviationSource::SingleAgent,
                        coalition: vec![n],
                        alternative: profile.with(n, s.clone()),
                        gains: vec![gain],
                        max_gain: gain,
                        weak_ok: true,
                    })
                })
                .collect()
        })
        .collect();
    Ok(per_agent.into_iter().flatten().collect())
}

/// The instance without any strong equilibrium, with its three cyclic
/// profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct NoEquilibriumInstance {
    pub instance: Instance,
    /// All but one friendly agent always vote `A`, the last friendly agent
    /// and both contingent agents vote informatively.
    pub sigma1: Profile,
    /// Friendly always `A`, contingent informative.
    pub sigma2: Profile,
    /// Friendly always `A`, one contingent informative, the other always `R`.
    pub sigma3: Profile,
    pub friendly: Vec<usize>,
    pub contingent: Vec<usize>,
    pub unfriendly: Vec<usize>,
}

impl NoEquilibriumInstance {
    /// The friendly agent who votes informatively in `sigma1`.
    pub fn swing_friendly(&self) -> usize {
        *self.friendly.last().expect("at least one friendly agent")
    }
}

pub fn build_no_bne_instance(n0: usize) -> Result<NoEquilibriumInstance> {
    if n0 == 0 {
        return Err(StrategizeError::InvalidSize);
    }
    let game = Game::new(
        Setting::Binary,
        0.5,
        StatePrior::new(vec![0.5, 0.5])?,
        SignalChannel::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]])?,
    )?;
    let friendly_u = UtilityFn::binary(100, 99, 0, 1);
    let contingent_u = UtilityFn::binary(90, 0, 0, 100);
    let unfriendly_u = UtilityFn::binary(1, 0, 99, 100);
    let mut agents = vec![friendly_u; n0 + 1];
    agents.extend([contingent_u.clone(), contingent_u]);
    agents.extend(std::iter::repeat_n(unfriendly_u, n0));
    let instance = Instance::from_agents(game, agents)?;

    let friendly: Vec<usize> = (0..=n0).collect();
    let contingent = vec![n0 + 1, n0 + 2];
    let unfriendly: Vec<usize> = (n0 + 3..2 * n0 + 3).collect();
    let sigma2 = Profile::informative(&instance);
    let sigma1 = sigma2.with(n0, Strategy::informative(2));
    let sigma3 = sigma2.with(n0 + 2, Strategy::always_reject(2));
    Ok(NoEquilibriumInstance {
        instance,
        sigma1,
        sigma2,
        sigma3,
        friendly,
        contingent,
        unfriendly,
    })
}
