//! Vote-count distributions, win probabilities, fidelity and expected
//! utilities, computed exactly (Poisson-binomial convolution) or by seeded
//! Monte Carlo.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Alternative, Instance, Profile, SignalChannel, Strategy, UtilityFn};

/// Largest population [`brute_force_distribution`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("profile has {got} strategies for {expected} agents")]
    ProfileLength { expected: usize, got: usize },
    #[error("strategy of agent {agent} has {got} entries, expected one per signal ({expected})")]
    SignalCount {
        agent: usize,
        expected: usize,
        got: usize,
    },
    #[error("{0} agents exceed the enumeration limit of {BRUTE_FORCE_LIMIT}")]
    InstanceTooLarge(usize),
    #[error("need at least one sample")]
    NoSamples,
}

pub type Result<T, E = ExactError> = std::result::Result<T, E>;

/// `Pr[#A-votes = k | ω]` for `k = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct OutcomeDistribution {
    pmf: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `Pr[#A-votes >= k]`, summed in ascending index order.
    pub fn upper_tail(&self, k: usize) -> f64 {
        self.pmf.iter().skip(k).sum()
    }

    /// `Pr[#A-votes < k]`, summed directly rather than as a complement.
    pub fn lower_tail(&self, k: usize) -> f64 {
        self.pmf.iter().take(k).sum()
    }

    pub fn into_pmf(self) -> Vec<f64> {
        self.pmf
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub lambda_accept: Vec<f64>,
    pub lambda_reject: Vec<f64>,
    pub fidelity: f64,
    pub error_rate: f64,
    pub expected_utilities: Vec<f64>,
}

/// `Σ_m Pr[m | ω] β_m`: probability that an agent playing `strategy` votes
/// `A` in state `ω`.
pub fn vote_prob(strategy: &Strategy, channel: &SignalChannel, state: usize) -> f64 {
    channel
        .row(state)
        .iter()
        .zip(strategy.vote_probs())
        .map(|(p, b)| p * b)
        .sum()
}

pub(crate) fn check_profile(profile: &Profile, inst: &Instance) -> Result<()> {
    if profile.len() != inst.n_agents() {
        return Err(ExactError::ProfileLength {
            expected: inst.n_agents(),
            got: profile.len(),
        });
    }
    let m = inst.channel().n_signals();
    for (agent, s) in profile.strategies().iter().enumerate() {
        if s.n_signals() != m {
            return Err(ExactError::SignalCount {
                agent,
                expected: m,
                got: s.n_signals(),
            });
        }
    }
    Ok(())
}

/// Per-agent `A`-vote probabilities in one state.
pub fn vote_probs(profile: &Profile, inst: &Instance, state: usize) -> Vec<f64> {
    profile
        .strategies()
        .iter()
        .map(|s| vote_prob(s, inst.channel(), state))
        .collect()
}

/// Poisson-binomial pmf of a sum of independent Bernoulli variables.
/// Certain outcomes (`p` exactly 0 or 1) only shift the support.
pub fn poisson_binomial(probs: &[f64]) -> Vec<f64> {
    let n = probs.len();
    let mut pmf = Vec::with_capacity(n + 1);
    pmf.push(1.0);
    let mut shift = 0;
    for &p in probs {
        if p <= 0.0 {
            continue;
        }
        if p >= 1.0 {
            shift += 1;
            continue;
        }
        let q = 1.0 - p;
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * q + pmf[k - 1] * p;
        }
        pmf[0] *= q;
    }
    let mut out = vec![0.0; n + 1];
    out[shift..shift + pmf.len()].copy_from_slice(&pmf);
    out
}

pub fn outcome_distribution(
    profile: &Profile,
    inst: &Instance,
    state: usize,
) -> Result<OutcomeDistribution> {
    check_profile(profile, inst)?;
    Ok(OutcomeDistribution {
        pmf: poisson_binomial(&vote_probs(profile, inst, state)),
    })
}

/// Enumerates all `2^N` vote vectors; an independent check on
/// [`outcome_distribution`].
pub fn brute_force_distribution(
    profile: &Profile,
    inst: &Instance,
    state: usize,
) -> Result<OutcomeDistribution> {
    check_profile(profile, inst)?;
    let n = inst.n_agents();
    if n > BRUTE_FORCE_LIMIT {
        return Err(ExactError::InstanceTooLarge(n));
    }
    let probs = vote_probs(profile, inst, state);
    let mut pmf = vec![0.0; n + 1];
    for mask in 0u32..(1u32 << n) {
        let weight: f64 = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| if mask >> i & 1 == 1 { p } else { 1.0 - p })
            .product();
        pmf[mask.count_ones() as usize] += weight;
    }
    Ok(OutcomeDistribution { pmf })
}

/// `Σ_ω P_ω (λ_ω^A u(ω, A) + λ_ω^R u(ω, R))`.
pub fn expected_utility(
    inst: &Instance,
    utility: &UtilityFn,
    lambda_accept: &[f64],
    lambda_reject: &[f64],
) -> f64 {
    inst.prior()
        .probs()
        .iter()
        .enumerate()
        .map(|(s, p)| {
            p * (lambda_accept[s] * utility.accept(s) as f64
                + lambda_reject[s] * utility.reject(s) as f64)
        })
        .sum()
}

/// `(λ^A, λ^R)` per state.
pub fn win_probabilities(profile: &Profile, inst: &Instance) -> Result<(Vec<f64>, Vec<f64>)> {
    check_profile(profile, inst)?;
    let t = inst.win_threshold();
    Ok((0..inst.n_states())
        .map(|s| {
            let dist = OutcomeDistribution {
                pmf: poisson_binomial(&vote_probs(profile, inst, s)),
            };
            (dist.upper_tail(t), dist.lower_tail(t))
        })
        .unzip())
}

/// Fidelity and error rate from per-state win probabilities.
pub fn fidelity_from(inst: &Instance, lambda_accept: &[f64], lambda_reject: &[f64]) -> (f64, f64) {
    let comp = inst.reference_composition();
    let mut fidelity = 0.0;
    let mut error = 0.0;
    for (s, &p) in inst.prior().probs().iter().enumerate() {
        let (hit, miss) = match comp.informed_majority(s) {
            Alternative::Accept => (lambda_accept[s], lambda_reject[s]),
            Alternative::Reject => (lambda_reject[s], lambda_accept[s]),
        };
        fidelity += p * hit;
        error += p * miss;
    }
    (fidelity, error)
}

pub fn analyze(profile: &Profile, inst: &Instance) -> Result<AnalysisReport> {
    let (lambda_accept, lambda_reject) = win_probabilities(profile, inst)?;
    let (fidelity, error_rate) = fidelity_from(inst, &lambda_accept, &lambda_reject);
    let expected_utilities = inst
        .agents()
        .iter()
        .map(|u| expected_utility(inst, u, &lambda_accept, &lambda_reject))
        .collect();
    Ok(AnalysisReport {
        lambda_accept,
        lambda_reject,
        fidelity,
        error_rate,
        expected_utilities,
    })
}

/// Exact fidelity alone.
pub fn fidelity(profile: &Profile, inst: &Instance) -> Result<f64> {
    let (a, r) = win_probabilities(profile, inst)?;
    Ok(fidelity_from(inst, &a, &r).0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub fidelity: f64,
    pub stderr: f64,
    pub samples: u64,
    /// Per-state estimate of `λ_ω^A`; `None` when the state was never drawn.
    pub lambda_accept: Vec<Option<f64>>,
}

#[derive(Clone)]
struct Tally {
    hits: u64,
    visits: Vec<u64>,
    accepts: Vec<u64>,
}

impl Tally {
    fn new(states: usize) -> Self {
        Self {
            hits: 0,
            visits: vec![0; states],
            accepts: vec![0; states],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.hits += other.hits;
        for (a, b) in self.visits.iter_mut().zip(&other.visits) {
            *a += b;
        }
        for (a, b) in self.accepts.iter_mut().zip(&other.accepts) {
            *a += b;
        }
        self
    }
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn draw_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // Only reachable through rounding in the last cumulative sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Samples the world state, every agent's signal and vote, and counts how
/// often the informed-majority decision wins.
///
/// Sample `i` reads ChaCha8 stream `i` from word 0: two words for the
/// state, then four words per agent in index order (signal, vote). The
/// estimate is therefore a function of `seed` alone, independent of how
/// samples are split across threads.
pub fn monte_carlo_fidelity(
    profile: &Profile,
    inst: &Instance,
    samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_profile(profile, inst)?;
    if samples == 0 {
        return Err(ExactError::NoSamples);
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    let prior = inst.prior().probs();
    let channel = inst.channel();
    let comp = inst.reference_composition();
    let threshold = inst.win_threshold();
    let states = inst.n_states();

    let tally = (0..samples)
        .into_par_iter()
        .fold(
            || Tally::new(states),
            |mut tally, i| {
                let mut rng = base.clone();
                rng.set_stream(i);
                rng.set_word_pos(0);
                let state = draw_index(prior, unit(&mut rng));
                let row = channel.row(state);
                let mut votes = 0;
                for s in profile.strategies() {
                    let signal = draw_index(row, unit(&mut rng));
                    if unit(&mut rng) < s.vote_probs()[signal] {
                        votes += 1;
                    }
                }
                let winner = if votes >= threshold {
                    Alternative::Accept
                } else {
                    Alternative::Reject
                };
                tally.visits[state] += 1;
                if winner == Alternative::Accept {
                    tally.accepts[state] += 1;
                }
                if winner == comp.informed_majority(state) {
                    tally.hits += 1;
                }
                tally
            },
        )
        .reduce(|| Tally::new(states), Tally::merge);

    let n = samples as f64;
    let mean = tally.hits as f64 / n;
    Ok(MonteCarloEstimate {
        fidelity: mean,
        stderr: (mean * (1.0 - mean) / n).sqrt(),
        samples,
        lambda_accept: tally
            .visits
            .iter()
            .zip(&tally.accepts)
            .map(|(&v, &a)| (v > 0).then(|| a as f64 / v as f64))
            .collect(),
    })
}
