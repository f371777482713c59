//! Excess expected vote share and what it says about fidelity: concentration
//! bounds, high-fidelity classification of symmetric profiles and profile
//! sequences, and the behaviour of informative and sincere voting.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::exactprob::{self, vote_prob, vote_probs, ExactError};
use crate::model::{
    Family, Instance, ModelError, Profile, Setting, SignalChannel, StatePrior, Strategy, UtilityFn,
    TOL,
};

/// Berry–Esseen constant.
pub const BERRY_ESSEEN_C0: f64 = 0.5600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("excess share {0} is not positive")]
    NonPositiveExcess(f64),
    #[error("vote count has zero variance")]
    ZeroVariance,
    #[error("signal {0} has zero probability")]
    ZeroProbabilitySignal(usize),
    #[error("tie-break probability {0} is outside [0, 1]")]
    InvalidTieBreak(f64),
    #[error("need at least {min} population sizes, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("population sizes must be strictly ascending")]
    NotAscending,
    #[error("operation needs a binary instance")]
    NotBinary,
    #[error("expected {expected} group strategies, got {got}")]
    GroupCount { expected: usize, got: usize },
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcessShare {
    /// Mean `A`-vote probability minus `μ`, per state.
    pub per_state_accept: Vec<f64>,
    /// Mean `R`-vote probability minus `1 − μ`, per state.
    pub per_state_reject: Vec<f64>,
    /// Minimum over the sides that matter: `A` in states where `A` is the
    /// informed majority, `R` elsewhere.
    pub min_relevant: f64,
    /// State attaining `min_relevant`.
    pub critical_state: usize,
}

impl ExcessShare {
    /// Builds from per-state mean `A`-vote probabilities and mean `R`-vote
    /// probabilities, each computed independently by the caller.
    fn from_means(accept: &[f64], reject: &[f64], threshold: f64, low_states: usize) -> Self {
        let per_state_accept: Vec<f64> = accept.iter().map(|a| a - threshold).collect();
        let per_state_reject: Vec<f64> = reject.iter().map(|r| r - (1.0 - threshold)).collect();
        let (critical_state, min_relevant) = (0..accept.len())
            .map(|s| {
                let f = if s < low_states {
                    per_state_reject[s]
                } else {
                    per_state_accept[s]
                };
                (s, f)
            })
            .fold(
                (0, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            );
        Self {
            per_state_accept,
            per_state_reject,
            min_relevant,
            critical_state,
        }
    }

    /// Relevant excess in one state.
    pub fn relevant(&self, state: usize, low_states: usize) -> f64 {
        if state < low_states {
            self.per_state_reject[state]
        } else {
            self.per_state_accept[state]
        }
    }
}

/// Excess expected vote share of a concrete profile (`f^N`).
pub fn excess_share(profile: &Profile, inst: &Instance) -> Result<ExcessShare> {
    exactprob::check_profile(profile, inst)?;
    let n = inst.n_agents() as f64;
    let (accept, reject): (Vec<f64>, Vec<f64>) = (0..inst.n_states())
        .map(|s| {
            let probs = vote_probs(profile, inst, s);
            let a = probs.iter().sum::<f64>() / n;
            let r = probs.iter().map(|p| 1.0 - p).sum::<f64>() / n;
            (a, r)
        })
        .unzip();
    Ok(ExcessShare::from_means(
        &accept,
        &reject,
        inst.threshold(),
        inst.reference_composition().low_states,
    ))
}

/// N-independent excess share of a family in which every agent of group `g`
/// plays `strategies[g]`.
pub fn group_excess_share(family: &Family, strategies: &[Strategy]) -> Result<ExcessShare> {
    let groups = family.groups();
    if strategies.len() != groups.len() {
        return Err(AnalysisError::GroupCount {
            expected: groups.len(),
            got: strategies.len(),
        });
    }
    let channel = family.game().channel();
    let (accept, reject): (Vec<f64>, Vec<f64>) = (0..family.game().n_states())
        .map(|s| {
            let weighted = |f: &dyn Fn(f64) -> f64| -> f64 {
                groups
                    .iter()
                    .zip(strategies)
                    .map(|(g, st)| g.fraction * f(vote_prob(st, channel, s)))
                    .sum()
            };
            (weighted(&|p| p), weighted(&|p| 1.0 - p))
        })
        .unzip();
    Ok(ExcessShare::from_means(
        &accept,
        &reject,
        family.game().threshold(),
        family.composition().low_states,
    ))
}

/// Group strategies of the regular profile in which contingent agents play
/// `contingent`.
pub fn regular_group_strategies(family: &Family, contingent: &Strategy) -> Vec<Strategy> {
    let m = family.game().n_signals();
    family
        .group_types()
        .iter()
        .map(|t| match t.tag {
            crate::model::AgentTag::Friendly => Strategy::always_accept(m),
            crate::model::AgentTag::Unfriendly => Strategy::always_reject(m),
            crate::model::AgentTag::Contingent => contingent.clone(),
        })
        .collect()
}

/// `1 − 2 exp(−2 f² N)`, clamped to `[0, 1]`.
pub fn hoeffding_lower_bound(excess: f64, n: usize) -> Result<f64> {
    if !(excess > 0.0) {
        return Err(AnalysisError::NonPositiveExcess(excess));
    }
    Ok((1.0 - 2.0 * (-2.0 * excess * excess * n as f64).exp()).clamp(0.0, 1.0))
}

/// Upper bound `exp(−2 s²)` on the informed-majority win probability in a
/// state whose scaled excess `s = √N f` is negative.
pub fn hoeffding_failure_bound(scaled_excess: f64) -> f64 {
    if scaled_excess >= 0.0 {
        1.0
    } else {
        (-2.0 * scaled_excess * scaled_excess).exp()
    }
}

/// Sum of per-agent vote variances in one state.
pub fn vote_variance(profile: &Profile, inst: &Instance, state: usize) -> f64 {
    vote_probs(profile, inst, state)
        .iter()
        .map(|p| p * (1.0 - p))
        .sum()
}

/// Berry–Esseen distance bound between the standardized vote count and a
/// standard normal: `C₀ Σ E|Y_n|³ / s³`, `Y_n = X_n − E X_n`.
pub fn berry_esseen_gap_bound(profile: &Profile, inst: &Instance, state: usize) -> Result<f64> {
    exactprob::check_profile(profile, inst)?;
    let probs = vote_probs(profile, inst, state);
    berry_esseen_from_probs(&probs)
}

pub(crate) fn berry_esseen_from_probs(probs: &[f64]) -> Result<f64> {
    let (var, third): (f64, f64) = probs
        .iter()
        .map(|&p| {
            let q = 1.0 - p;
            (p * q, p * q * (p * p + q * q))
        })
        .fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    if var <= 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok(BERRY_ESSEEN_C0 * third / var.powf(1.5))
}

/// Upper bound on the informed-majority win probability when the scaled
/// excess stays at most `scaled_excess_cap` and the per-agent variance is at
/// least `variance_floor`: `1 − (Φ(−cap/√ψ) − gap)`.
pub fn bounded_variance_failure_bound(
    scaled_excess_cap: f64,
    variance_floor: f64,
    gap: f64,
) -> f64 {
    let phi = Normal::standard().cdf(-scaled_excess_cap / variance_floor.sqrt());
    (1.0 - (phi - gap)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dichotomy {
    HighFidelity,
    NotHighFidelity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetricVerdict {
    pub verdict: Dichotomy,
    pub excess: ExcessShare,
    /// Excess exactly zero (within tolerance): fidelity stays bounded away
    /// from 1, but only through the variance argument.
    pub knife_edge: bool,
    /// Per-agent variance of the vote in each state.
    pub variance_per_agent: Vec<f64>,
}

/// High-fidelity test for the regular family in which every contingent
/// agent plays `strategy`.
pub fn classify_symmetric(strategy: &Strategy, family: &Family) -> Result<SymmetricVerdict> {
    classify_groups(family, &regular_group_strategies(family, strategy))
}

fn classify_groups(family: &Family, strategies: &[Strategy]) -> Result<SymmetricVerdict> {
    let excess = group_excess_share(family, strategies)?;
    let channel = family.game().channel();
    let variance_per_agent = (0..family.game().n_states())
        .map(|s| {
            family
                .groups()
                .iter()
                .zip(strategies)
                .map(|(g, st)| {
                    let p = vote_prob(st, channel, s);
                    g.fraction * p * (1.0 - p)
                })
                .sum()
        })
        .collect();
    let knife_edge = excess.min_relevant.abs() <= TOL;
    let verdict = if excess.min_relevant > TOL {
        Dichotomy::HighFidelity
    } else {
        Dichotomy::NotHighFidelity
    };
    Ok(SymmetricVerdict {
        verdict,
        excess,
        knife_edge,
        variance_per_agent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InformativeVerdict {
    pub verdict: Dichotomy,
    /// `P_hH − μ`.
    pub excess_high: f64,
    /// `μ − P_hL`.
    pub excess_low: f64,
}

/// Whether all-informative voting reaches the informed majority in a
/// binary game: exactly when `P_hH > μ > P_hL`.
pub fn informative_dichotomy(family: &Family) -> Result<InformativeVerdict> {
    let game = family.game();
    if game.setting() != Setting::Binary {
        return Err(AnalysisError::NotBinary);
    }
    let mu = game.threshold();
    let excess_high = game.channel().prob(1, 1) - mu;
    let excess_low = mu - game.channel().prob(0, 1);
    let verdict = if excess_high > TOL && excess_low > TOL {
        Dichotomy::HighFidelity
    } else {
        Dichotomy::NotHighFidelity
    };
    Ok(InformativeVerdict {
        verdict,
        excess_high,
        excess_low,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SequenceCase {
    ConvergesToOne,
    FailsNegative,
    FailsBoundedVariance,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceParams {
    /// `√N f^N` at the largest population must reach this for convergence.
    pub converge_level: f64,
    /// `√N f^N` at or below this (negative) level counts as failing.
    pub failure_level: f64,
    /// Per-agent variance floor for the bounded-variance case.
    pub variance_floor: f64,
}

impl Default for SequenceParams {
    fn default() -> Self {
        Self {
            converge_level: 1.0,
            failure_level: -0.01,
            variance_floor: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceSample {
    pub n: usize,
    pub excess: f64,
    pub scaled_excess: f64,
    pub critical_state: usize,
    /// `Var(Σ X_n | ω) / N` in the critical state.
    pub variance_per_agent: f64,
    /// Hoeffding lower bound on fidelity when the excess is positive.
    pub hoeffding_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceVerdict {
    pub case: SequenceCase,
    pub samples: Vec<SequenceSample>,
    pub params: SequenceParams,
    /// Upper bound on the critical state's win probability at the largest
    /// population, reported for the bounded-variance case.
    pub failure_bound: Option<f64>,
}

/// Minimum number of population sizes [`classify_sequence`] accepts.
pub const MIN_SEQUENCE_SAMPLES: usize = 5;

/// Numeric screen of a profile sequence: evaluates `√N f^N` and the vote
/// variance at each population size and reports which limiting behaviour
/// the evidence supports. A finite sample cannot prove a limit, so
/// anything not clearly in one case is `Undetermined`.
pub fn classify_sequence<F>(
    family: &Family,
    profile_at: F,
    ns: &[usize],
    params: &SequenceParams,
) -> Result<SequenceVerdict>
where
    F: Fn(&Instance) -> Profile + Sync,
{
    if ns.len() < MIN_SEQUENCE_SAMPLES {
        return Err(AnalysisError::TooFewSamples {
            min: MIN_SEQUENCE_SAMPLES,
            got: ns.len(),
        });
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::NotAscending);
    }
    let evaluated: Vec<(SequenceSample, Vec<f64>)> = ns
        .par_iter()
        .map(|&n| -> Result<_> {
            let inst = family.instance(n)?;
            let profile = profile_at(&inst);
            let excess = excess_share(&profile, &inst)?;
            let f = excess.min_relevant;
            let probs = vote_probs(&profile, &inst, excess.critical_state);
            let variance = probs.iter().map(|p| p * (1.0 - p)).sum::<f64>() / n as f64;
            let sample = SequenceSample {
                n,
                excess: f,
                scaled_excess: (n as f64).sqrt() * f,
                critical_state: excess.critical_state,
                variance_per_agent: variance,
                hoeffding_bound: hoeffding_lower_bound(f, n).ok(),
            };
            Ok((sample, probs))
        })
        .collect::<Result<_>>()?;

    let tail = &evaluated[evaluated.len() / 2..];
    let samples: Vec<SequenceSample> = evaluated.iter().map(|(s, _)| s.clone()).collect();
    let last = samples.last().expect("at least five samples");

    let case = if tail
        .iter()
        .all(|(s, _)| s.scaled_excess <= params.failure_level)
    {
        SequenceCase::FailsNegative
    } else if samples.iter().all(|s| s.excess > 0.0)
        && trend_slope(&samples) > 0.0
        && last.scaled_excess >= params.converge_level
    {
        SequenceCase::ConvergesToOne
    } else if tail
        .iter()
        .all(|(s, _)| s.scaled_excess < params.converge_level)
        && samples
            .iter()
            .all(|s| s.variance_per_agent >= params.variance_floor)
    {
        SequenceCase::FailsBoundedVariance
    } else {
        SequenceCase::Undetermined
    };

    let failure_bound = match case {
        SequenceCase::FailsBoundedVariance => {
            let cap = tail
                .iter()
                .map(|(s, _)| s.scaled_excess)
                .fold(0.0f64, f64::max);
            let floor = samples
                .iter()
                .map(|s| s.variance_per_agent)
                .fold(f64::INFINITY, f64::min);
            let gap = berry_esseen_from_probs(&evaluated.last().expect("nonempty").1)?;
            Some(bounded_variance_failure_bound(cap, floor, gap))
        }
        SequenceCase::FailsNegative => Some(hoeffding_failure_bound(last.scaled_excess)),
        _ => None,
    };

    Ok(SequenceVerdict {
        case,
        samples,
        params: *params,
        failure_bound,
    })
}

/// Least-squares slope of `√N f^N` against `ln N`.
fn trend_slope(samples: &[SequenceSample]) -> f64 {
    let xs: Vec<f64> = samples.iter().map(|s| (s.n as f64).ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.scaled_excess).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Bayes posterior over states after observing `signal`.
pub fn posterior(prior: &StatePrior, channel: &SignalChannel, signal: usize) -> Result<Vec<f64>> {
    let joint: Vec<f64> = prior
        .probs()
        .iter()
        .enumerate()
        .map(|(s, p)| p * channel.prob(s, signal))
        .collect();
    let total: f64 = joint.iter().sum();
    if total <= 0.0 {
        return Err(AnalysisError::ZeroProbabilitySignal(signal));
    }
    Ok(joint.into_iter().map(|j| j / total).collect())
}

/// The five shapes a sincere binary strategy can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SincereCase {
    AlwaysAccept,
    /// Indifferent after `l`, `A` after `h`.
    TieLowAcceptHigh,
    Informative,
    /// `R` after `l`, indifferent after `h`.
    RejectLowTieHigh,
    AlwaysReject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalUtility {
    pub accept: f64,
    pub reject: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SincereStrategy {
    pub strategy: Strategy,
    /// Expected utility of each outcome given each signal.
    pub conditional: Vec<ConditionalUtility>,
    /// Set for binary signals.
    pub case: Option<SincereCase>,
}

/// Strategy of an agent who votes as if pivotal for sure: `A` after signal
/// `m` iff `E[u(ω, A) | m] > E[u(ω, R) | m]`, `tie_break` on exact ties.
pub fn sincere_strategy(
    utility: &UtilityFn,
    prior: &StatePrior,
    channel: &SignalChannel,
    tie_break: f64,
) -> Result<SincereStrategy> {
    if !(0.0..=1.0).contains(&tie_break) {
        return Err(AnalysisError::InvalidTieBreak(tie_break));
    }
    let mut conditional = Vec::with_capacity(channel.n_signals());
    let mut betas = Vec::with_capacity(channel.n_signals());
    let mut ties = Vec::with_capacity(channel.n_signals());
    for m in 0..channel.n_signals() {
        let post = posterior(prior, channel, m)?;
        let accept: f64 = post
            .iter()
            .enumerate()
            .map(|(s, p)| p * utility.accept(s) as f64)
            .sum();
        let reject: f64 = post
            .iter()
            .enumerate()
            .map(|(s, p)| p * utility.reject(s) as f64)
            .sum();
        let diff = accept - reject;
        ties.push(diff.abs() <= TOL);
        betas.push(if diff.abs() <= TOL {
            tie_break
        } else if diff > 0.0 {
            1.0
        } else {
            0.0
        });
        conditional.push(ConditionalUtility { accept, reject });
    }
    let case = (channel.n_signals() == 2).then(|| match (betas[0], ties[0], betas[1], ties[1]) {
        (_, true, _, _) => SincereCase::TieLowAcceptHigh,
        (_, _, _, true) => SincereCase::RejectLowTieHigh,
        (l, _, h, _) if l == 1.0 && h == 1.0 => SincereCase::AlwaysAccept,
        (l, _, h, _) if l == 0.0 && h == 0.0 => SincereCase::AlwaysReject,
        _ => SincereCase::Informative,
    });
    Ok(SincereStrategy {
        strategy: Strategy::new(betas)?,
        conditional,
        case,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SincereVerdict {
    /// Sincere strategy of each group.
    pub strategies: Vec<SincereStrategy>,
    pub verdict: Dichotomy,
    pub excess: ExcessShare,
    pub knife_edge: bool,
    /// Sincere voting is an ε-strong equilibrium for every ε > 0 and large
    /// enough N exactly when it reaches the informed majority.
    pub asymptotically_strong_equilibrium: bool,
}

/// Whether a family of sincere voters reaches the informed majority.
pub fn sincere_dichotomy(family: &Family, tie_break: f64) -> Result<SincereVerdict> {
    let game = family.game();
    let strategies: Vec<SincereStrategy> = family
        .groups()
        .iter()
        .map(|g| sincere_strategy(&g.utility, game.prior(), game.channel(), tie_break))
        .collect::<Result<_>>()?;
    let plain: Vec<Strategy> = strategies.iter().map(|s| s.strategy.clone()).collect();
    let symmetric = classify_groups(family, &plain)?;
    Ok(SincereVerdict {
        strategies,
        verdict: symmetric.verdict,
        excess: symmetric.excess,
        knife_edge: symmetric.knife_edge,
        asymptotically_strong_equilibrium: symmetric.verdict == Dichotomy::HighFidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentTag, Game, Group, Strategy};
    use proptest::prelude::{prop_assert, prop_assert_eq, prop_assume, proptest};

    fn binary_game(mu: f64, p_h: f64, p_hl: f64, p_hh: f64) -> Game {
        Game::new(
            Setting::Binary,
            mu,
            StatePrior::new(vec![1.0 - p_h, p_h]).unwrap(),
            SignalChannel::new(vec![vec![1.0 - p_hl, p_hl], vec![1.0 - p_hh, p_hh]]).unwrap(),
        )
        .unwrap()
    }

    /// Friendly / unfriendly / contingent groups in proportion 2 : 3 : 5.
    fn three_type_family(mu: f64, p_hl: f64, p_hh: f64) -> Family {
        let groups = vec![
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
        ];
        Family::new(binary_game(mu, 0.4, p_hl, p_hh), groups).unwrap()
    }

    fn all_contingent(game: Game, utility: UtilityFn) -> Family {
        Family::new(
            game,
            vec![Group {
                utility,
                fraction: 1.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn fractional_excess_for_informative_and_deviating_profiles() {
        let case1 = three_type_family(0.6, 0.2, 0.9);
        let v = classify_symmetric(&Strategy::informative(2), &case1).unwrap();
        assert!((v.excess.per_state_accept[1] - 0.05).abs() <= 1e-12);
        assert!((v.excess.per_state_reject[0] - 0.3).abs() <= 1e-12);
        assert_eq!(v.verdict, Dichotomy::HighFidelity);

        let case2 = three_type_family(0.6, 0.2, 0.75);
        let v = classify_symmetric(&Strategy::informative(2), &case2).unwrap();
        assert!((v.excess.per_state_accept[1] + 0.025).abs() <= 1e-12);
        assert_eq!(v.verdict, Dichotomy::NotHighFidelity);

        let dev = Strategy::binary(0.48, 0.96).unwrap();
        let v = classify_symmetric(&dev, &case2).unwrap();
        assert!((v.excess.per_state_accept[1] - 0.02).abs() <= 1e-12);
        assert!((v.excess.per_state_reject[0] - 0.112).abs() <= 1e-12);
    }

    #[test]
    fn always_accept_is_never_high_fidelity() {
        let fam = three_type_family(0.6, 0.2, 0.9);
        let v = classify_symmetric(&Strategy::always_accept(2), &fam).unwrap();
        assert_eq!(v.verdict, Dichotomy::NotHighFidelity);
        assert!((v.excess.per_state_reject[0] - (0.3 - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn hoeffding_examples() {
        let b = hoeffding_lower_bound(0.05, 500).unwrap();
        assert!((b - (1.0 - 2.0 * (-2.5f64).exp())).abs() < 1e-15);
        let b = hoeffding_lower_bound(0.3, 20).unwrap();
        assert!((b - (1.0 - 2.0 * (-3.6f64).exp())).abs() < 1e-15);
        assert_eq!(
            hoeffding_lower_bound(0.0, 10),
            Err(AnalysisError::NonPositiveExcess(0.0))
        );
        assert_eq!(hoeffding_lower_bound(0.01, 1).unwrap(), 0.0);
    }

    fn iid_instance(n: usize) -> Instance {
        all_contingent(
            binary_game(0.5, 0.5, 0.2, 0.8),
            UtilityFn::binary(1, 0, 0, 1),
        )
        .instance(n)
        .unwrap()
    }

    #[test]
    fn berry_esseen_matches_closed_form() {
        let inst = iid_instance(40);
        let s = Strategy::binary(0.3, 0.3).unwrap();
        let gap = berry_esseen_gap_bound(&Profile::symmetric(40, &s), &inst, 0).unwrap();
        let (p, n) = (0.3f64, 40.0f64);
        let v = p * (1.0 - p);
        let rho = v * (p * p + (1.0 - p) * (1.0 - p));
        let closed = BERRY_ESSEEN_C0 * rho / (v.powf(1.5) * n.sqrt());
        assert!((gap - closed).abs() < 1e-12);

        let det = Profile::symmetric(40, &Strategy::always_accept(2));
        assert_eq!(
            berry_esseen_gap_bound(&det, &inst, 1),
            Err(AnalysisError::ZeroVariance)
        );
    }

    #[test]
    fn berry_esseen_decays_like_inverse_root() {
        let ns = [100usize, 1_000, 10_000, 100_000];
        let points: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| {
                let probs = vec![0.37; n];
                (
                    (n as f64).ln(),
                    berry_esseen_from_probs(&probs).unwrap().ln(),
                )
            })
            .collect();
        let k = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
        let my = points.iter().map(|p| p.1).sum::<f64>() / k;
        let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() <= 0.05, "slope {slope}");
    }

    #[test]
    fn bounded_variance_bound_is_below_one() {
        let b = bounded_variance_failure_bound(0.5, 0.2, 0.05);
        assert!(b < 1.0 && b > 0.0);
    }

    #[test]
    fn informative_dichotomy_examples() {
        let fam = all_contingent(
            binary_game(0.6, 0.5, 0.2, 0.9),
            UtilityFn::binary(1, 0, 0, 1),
        );
        let v = informative_dichotomy(&fam).unwrap();
        assert_eq!(v.verdict, Dichotomy::HighFidelity);
        assert!((v.excess_high - 0.3).abs() < 1e-12 && (v.excess_low - 0.4).abs() < 1e-12);
        let fam = all_contingent(
            binary_game(0.95, 0.5, 0.2, 0.9),
            UtilityFn::binary(1, 0, 0, 1),
        );
        assert_eq!(
            informative_dichotomy(&fam).unwrap().verdict,
            Dichotomy::NotHighFidelity
        );
    }

    #[test]
    fn posterior_examples() {
        let g = binary_game(0.5, 0.5, 0.2, 0.8);
        let post = posterior(g.prior(), g.channel(), 1).unwrap();
        assert!((post[1] - 0.8).abs() < 1e-12);

        let g = binary_game(0.5, 0.4, 0.6, 0.8);
        let post = posterior(g.prior(), g.channel(), 1).unwrap();
        assert!((post[1] - 0.32 / 0.68).abs() < 1e-12);

        let prior = StatePrior::new(vec![0.3, 0.7]).unwrap();
        let flat = SignalChannel::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let post = posterior(&prior, &flat, 0).unwrap();
        assert!((post[0] - 0.3).abs() < 1e-12);

        let dead = SignalChannel::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(
            posterior(&prior, &dead, 1),
            Err(AnalysisError::ZeroProbabilitySignal(1))
        );
    }

    fn sincere_game() -> Game {
        binary_game(0.5, 0.5, 0.2, 0.8)
    }

    #[test]
    fn sincere_cases() {
        let g = sincere_game();
        let s =
            sincere_strategy(&UtilityFn::binary(1, 0, 0, 1), g.prior(), g.channel(), 0.5).unwrap();
        assert_eq!(s.strategy.vote_probs(), [0.0, 1.0]);
        assert_eq!(s.case, Some(SincereCase::Informative));

        let s =
            sincere_strategy(&UtilityFn::binary(5, 1, 0, 2), g.prior(), g.channel(), 0.5).unwrap();
        assert_eq!(s.strategy.vote_probs(), [1.0, 1.0]);
        assert_eq!(s.case, Some(SincereCase::AlwaysAccept));
        let c = &s.conditional;
        for (got, want) in [
            (c[0].accept, 1.8),
            (c[0].reject, 1.6),
            (c[1].accept, 4.2),
            (c[1].reject, 0.4),
        ] {
            assert!((got - want).abs() <= 1e-12);
        }

        let s =
            sincere_strategy(&UtilityFn::binary(4, 1, 0, 2), g.prior(), g.channel(), 0.3).unwrap();
        assert_eq!(s.strategy.vote_probs(), [0.3, 1.0]);
        assert_eq!(s.case, Some(SincereCase::TieLowAcceptHigh));
        assert!((s.conditional[1].accept - 3.4).abs() <= 1e-12);

        assert_eq!(
            sincere_strategy(&UtilityFn::binary(4, 1, 0, 2), g.prior(), g.channel(), 1.5),
            Err(AnalysisError::InvalidTieBreak(1.5))
        );
    }

    #[test]
    fn sincere_family_verdicts() {
        let with_mu = |mu: f64, u: UtilityFn| all_contingent(binary_game(mu, 0.5, 0.2, 0.8), u);
        let v = sincere_dichotomy(&with_mu(0.5, UtilityFn::binary(1, 0, 0, 1)), 0.5).unwrap();
        assert_eq!(v.verdict, Dichotomy::HighFidelity);
        assert!(v.asymptotically_strong_equilibrium);
        let v = sincere_dichotomy(&with_mu(0.5, UtilityFn::binary(5, 1, 0, 2)), 0.5).unwrap();
        assert_eq!(v.verdict, Dichotomy::NotHighFidelity);
        let v = sincere_dichotomy(&with_mu(0.6, UtilityFn::binary(4, 1, 0, 2)), 0.2).unwrap();
        assert_eq!(v.verdict, Dichotomy::HighFidelity);
        // β_l = 0.6 violates β_l < 1.25μ − 0.25 = 0.5.
        let v = sincere_dichotomy(&with_mu(0.6, UtilityFn::binary(4, 1, 0, 2)), 0.6).unwrap();
        assert_eq!(v.verdict, Dichotomy::NotHighFidelity);
    }

    #[test]
    fn knife_edge_is_flagged() {
        // Informative voting with P_hH = μ.
        let fam = all_contingent(
            binary_game(0.8, 0.5, 0.2, 0.8),
            UtilityFn::binary(1, 0, 0, 1),
        );
        let v = classify_symmetric(&Strategy::informative(2), &fam).unwrap();
        assert!(v.knife_edge);
        assert_eq!(v.verdict, Dichotomy::NotHighFidelity);
        assert!(v.variance_per_agent.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn sequence_screens() {
        let ns: Vec<usize> = (20..=500).step_by(20).collect();
        let params = SequenceParams::default();
        let case1 = three_type_family(0.6, 0.2, 0.9);
        let v = classify_sequence(&case1, Profile::informative, &ns, &params).unwrap();
        assert_eq!(v.case, SequenceCase::ConvergesToOne);

        let case2 = three_type_family(0.6, 0.2, 0.75);
        let v = classify_sequence(&case2, Profile::informative, &ns, &params).unwrap();
        assert_eq!(v.case, SequenceCase::FailsNegative);
        assert!(v.failure_bound.unwrap() < 1.0);

        // Contingent agents mix at the level that puts the expected A share
        // exactly on the threshold in H.
        let beta = (0.6 - 0.2) / 0.5;
        let knife = Strategy::binary(beta, beta).unwrap();
        let ns: Vec<usize> = (100..=1000).step_by(100).collect();
        let v = classify_sequence(&case2, |i| Profile::regular(i, &knife), &ns, &params).unwrap();
        assert_eq!(v.case, SequenceCase::FailsBoundedVariance);
        assert!(v.samples.iter().all(|s| s.excess.abs() < 1e-9));
        assert!(v.failure_bound.unwrap() < 1.0);

        assert!(matches!(
            classify_sequence(&case1, Profile::informative, &[10, 20, 30], &params),
            Err(AnalysisError::TooFewSamples { .. })
        ));
        assert_eq!(
            classify_sequence(&case1, Profile::informative, &[10, 20, 30, 25, 40], &params),
            Err(AnalysisError::NotAscending)
        );
    }

    proptest! {
        #[test]
        fn antisymmetry(
            betas in proptest::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..30),
            p_hl in 0.05..0.45f64,
            p_hh in 0.55..0.95f64,
        ) {
            let n = betas.len();
            let inst = all_contingent(binary_game(0.5, 0.5, p_hl, p_hh), UtilityFn::binary(1, 0, 0, 1))
                .instance(n)
                .unwrap();
            let profile = Profile::new(betas.iter().map(|&(l, h)| Strategy::binary(l, h).unwrap()).collect());
            let e = excess_share(&profile, &inst).unwrap();
            for s in 0..2 {
                prop_assert!((e.per_state_accept[s] + e.per_state_reject[s]).abs() < 1e-12);
            }
        }

        #[test]
        fn informative_dichotomy_agrees_with_symmetric_classification(
            p_hl in 0.01..0.99f64,
            gap in 0.01..0.98f64,
            mu in 0.01..0.99f64,
        ) {
            let p_hh = (p_hl + gap).min(0.999);
            prop_assume!(p_hh > p_hl + 1e-6);
            let fam = all_contingent(binary_game(mu, 0.5, p_hl, p_hh), UtilityFn::binary(1, 0, 0, 1));
            let a = informative_dichotomy(&fam).unwrap();
            let b = classify_symmetric(&Strategy::informative(2), &fam).unwrap();
            prop_assert_eq!(a.verdict, b.verdict);
        }

        #[test]
        fn sincere_friendly_and_unfriendly_are_regular(
            a_high in 3u32..20, a_low in 0u32..3, r_low in 0u32..20,
            p_hl in 0.05..0.45f64, p_hh in 0.55..0.95f64,
        ) {
            let g = binary_game(0.6, 0.4, p_hl, p_hh);
            // Prefers A in both states.
            let friendly = UtilityFn::binary(a_high, a_low + r_low + 1, 0, r_low);
            let s = sincere_strategy(&friendly, g.prior(), g.channel(), 0.5).unwrap();
            prop_assert!(s.strategy.is_always(1.0));
            // Prefers R in both states.
            let unfriendly = UtilityFn::binary(a_low, 0, a_low + 1, r_low + 1);
            let s = sincere_strategy(&unfriendly, g.prior(), g.channel(), 0.5).unwrap();
            prop_assert!(s.strategy.is_always(0.0));
        }
    }

    #[test]
    fn sincere_voters_of_each_tag() {
        let fam = three_type_family(0.6, 0.2, 0.9);
        let v = sincere_dichotomy(&fam, 0.5).unwrap();
        for (t, s) in fam.group_types().iter().zip(&v.strategies) {
            match t.tag {
                AgentTag::Friendly => assert!(s.strategy.is_always(1.0)),
                AgentTag::Unfriendly => assert!(s.strategy.is_always(0.0)),
                AgentTag::Contingent => {}
            }
        }
    }
}
