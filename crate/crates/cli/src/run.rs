//! The analysis subcommands: profile selection, exact-or-sampled
//! evaluation, and JSON / CSV report assembly.

use imvote_core::analysis::{
    berry_esseen_gap_bound, classify_sequence, classify_symmetric, excess_share,
    hoeffding_lower_bound, sincere_dichotomy, sincere_strategy, ExcessShare, SequenceVerdict,
    SincereVerdict, SymmetricVerdict,
};
use imvote_core::exactprob::{analyze, expected_utility, monte_carlo_fidelity};
use imvote_core::model::{AgentTag, Composition, Game, Instance, Profile, Strategy, UtilityFn};
use imvote_core::strategize::{
    construct_for, epsilon_bound, refute_equilibrium, ConstructionTrace, Refutation,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Command, Epsilon, ProfileKind, RunConfig};
use crate::error::{CliError, Result};
use crate::format::{cell, sig12};
use crate::input::{load_instance, InstanceSummary};

/// How every agent's strategy is chosen, independent of the population
/// size so that one recipe serves a whole sweep.
#[derive(Debug, Clone)]
pub enum Recipe {
    Regular {
        kind: ProfileKind,
        contingent: Strategy,
        trace: Option<Box<ConstructionTrace>>,
    },
    Sincere {
        tie_break: f64,
        by_utility: Vec<(UtilityFn, Strategy)>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct SincereEntry {
    pub utility: UtilityFn,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileDescription {
    pub kind: ProfileKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contingent: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_break: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sincere: Option<Vec<SincereEntry>>,
}

impl Recipe {
    /// `utilities` lists the distinct utility functions that occur.
    pub fn new(
        cfg: &RunConfig,
        kind: ProfileKind,
        game: &Game,
        comp: &Composition,
        utilities: &[UtilityFn],
    ) -> Result<Self> {
        let m = game.n_signals();
        let regular = |contingent, trace| Recipe::Regular {
            kind,
            contingent,
            trace,
        };
        Ok(match kind {
            ProfileKind::Informative => regular(Strategy::informative(m), None),
            ProfileKind::Constructed => {
                let trace = construct_for(game, comp, &cfg.search.construction)?;
                regular(trace.sigma_prime.clone(), Some(Box::new(trace)))
            }
            ProfileKind::Explicit => {
                let probs = cfg.strategy.clone().ok_or_else(|| {
                    CliError::Usage(
                        "--profile explicit needs --strategy (or `strategy` in the config)".into(),
                    )
                })?;
                if probs.len() != m {
                    return Err(CliError::Usage(format!(
                        "strategy has {} entries, the instance has {m} signals",
                        probs.len()
                    )));
                }
                regular(Strategy::new(probs)?, None)
            }
            ProfileKind::Sincere => {
                let by_utility = utilities
                    .iter()
                    .map(|u| {
                        let s = sincere_strategy(u, game.prior(), game.channel(), cfg.tie_break)?;
                        Ok((u.clone(), s.strategy))
                    })
                    .collect::<Result<_>>()?;
                Recipe::Sincere {
                    tie_break: cfg.tie_break,
                    by_utility,
                }
            }
        })
    }

    /// Recipe for the instance's own family, or its realized agents.
    pub fn for_instance(cfg: &RunConfig, kind: ProfileKind, inst: &Instance) -> Result<Self> {
        let mut utilities: Vec<UtilityFn> = Vec::new();
        match inst.family() {
            Some(f) => utilities.extend(f.groups().iter().map(|g| g.utility.clone())),
            None => {
                for u in inst.agents() {
                    if !utilities.contains(u) {
                        utilities.push(u.clone());
                    }
                }
            }
        }
        Self::new(
            cfg,
            kind,
            inst.game(),
            inst.reference_composition(),
            &utilities,
        )
    }

    pub fn profile(&self, inst: &Instance) -> Profile {
        match self {
            Recipe::Regular { contingent, .. } => Profile::regular(inst, contingent),
            Recipe::Sincere { by_utility, .. } => Profile::new(
                inst.agents()
                    .iter()
                    .map(|u| {
                        by_utility
                            .iter()
                            .find(|(v, _)| v == u)
                            .map(|(_, s)| s.clone())
                            .expect("every utility has a sincere strategy")
                    })
                    .collect(),
            ),
        }
    }

    pub fn contingent(&self) -> Option<&Strategy> {
        match self {
            Recipe::Regular { contingent, .. } => Some(contingent),
            Recipe::Sincere { .. } => None,
        }
    }

    pub fn describe(&self) -> ProfileDescription {
        match self {
            Recipe::Regular {
                kind, contingent, ..
            } => ProfileDescription {
                kind: *kind,
                contingent: Some(contingent.clone()),
                tie_break: None,
                sincere: None,
            },
            Recipe::Sincere {
                tie_break,
                by_utility,
            } => ProfileDescription {
                kind: ProfileKind::Sincere,
                contingent: None,
                tie_break: Some(*tie_break),
                sincere: Some(
                    by_utility
                        .iter()
                        .map(|(u, s)| SincereEntry {
                            utility: u.clone(),
                            strategy: s.clone(),
                        })
                        .collect(),
                ),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl Method {
    fn label(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub method: Method,
    pub fidelity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity_stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    /// `None` for a state the sampler never drew.
    pub lambda_accept: Vec<Option<f64>>,
    /// Absent when some state was never drawn.
    pub expected_utilities: Option<Vec<f64>>,
}

impl Evaluation {
    /// Mean expected utility over the agents carrying `tag`.
    pub fn mean_utility(&self, inst: &Instance, tag: AgentTag) -> Option<f64> {
        let eus = self.expected_utilities.as_ref()?;
        let idx = inst.indices_of(tag);
        (!idx.is_empty()).then(|| idx.iter().map(|&i| eus[i]).sum::<f64>() / idx.len() as f64)
    }
}

/// Exact DP up to `dp_cap` agents, seeded Monte Carlo above it.
pub fn evaluate(profile: &Profile, inst: &Instance, cfg: &RunConfig) -> Result<Evaluation> {
    if inst.n_agents() <= cfg.dp_cap {
        let report = analyze(profile, inst)?;
        return Ok(Evaluation {
            method: Method::Exact,
            fidelity: report.fidelity,
            fidelity_stderr: None,
            samples: None,
            lambda_accept: report.lambda_accept.into_iter().map(Some).collect(),
            expected_utilities: Some(report.expected_utilities),
        });
    }
    let est = monte_carlo_fidelity(profile, inst, cfg.samples, cfg.seed)?;
    let expected_utilities = est
        .lambda_accept
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .map(|la| {
            let lr: Vec<f64> = la.iter().map(|a| 1.0 - a).collect();
            inst.agents()
                .iter()
                .map(|u| expected_utility(inst, u, &la, &lr))
                .collect()
        });
    Ok(Evaluation {
        method: Method::MonteCarlo,
        fidelity: est.fidelity,
        fidelity_stderr: Some(est.stderr),
        samples: Some(est.samples),
        lambda_accept: est.lambda_accept,
        expected_utilities,
    })
}

#[derive(Debug, Serialize)]
struct TypeUtilities {
    friendly: Option<f64>,
    unfriendly: Option<f64>,
    contingent: Option<f64>,
}

impl TypeUtilities {
    fn of(eval: &Evaluation, inst: &Instance) -> Self {
        Self {
            friendly: eval.mean_utility(inst, AgentTag::Friendly),
            unfriendly: eval.mean_utility(inst, AgentTag::Unfriendly),
            contingent: eval.mean_utility(inst, AgentTag::Contingent),
        }
    }
}

fn require_instance(cfg: &RunConfig) -> Result<Instance> {
    let path = cfg
        .instance
        .as_deref()
        .ok_or_else(|| CliError::Usage("this command needs --instance".into()))?;
    load_instance(path)
}

fn to_json(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text
}

/// Runs an analysis subcommand and returns the report text.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    match cfg.command {
        Command::Analyze => run_analyze(cfg),
        Command::Excess => run_excess(cfg),
        Command::Construct => run_construct(cfg),
        Command::Refute => run_refute(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::VerifyPaper => unreachable!("verify-paper has its own runner"),
    }
}

fn run_analyze(cfg: &RunConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Report {
        instance: InstanceSummary,
        profile: ProfileDescription,
        evaluation: Evaluation,
        type_expected_utilities: TypeUtilities,
    }
    let inst = require_instance(cfg)?;
    let recipe = Recipe::for_instance(cfg, cfg.profile, &inst)?;
    let evaluation = evaluate(&recipe.profile(&inst), &inst, cfg)?;
    Ok(to_json(&Report {
        instance: InstanceSummary::of(&inst),
        profile: recipe.describe(),
        type_expected_utilities: TypeUtilities::of(&evaluation, &inst),
        evaluation,
    }))
}

fn run_excess(cfg: &RunConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Report {
        instance: InstanceSummary,
        profile: ProfileDescription,
        excess: ExcessShare,
        /// Present when the excess is positive.
        hoeffding_bound: Option<f64>,
        /// Normal-approximation error in the critical state.
        berry_esseen_gap: Option<f64>,
        symmetric: Option<SymmetricVerdict>,
        sincere: Option<SincereVerdict>,
        sequence: Option<SequenceVerdict>,
    }
    let inst = require_instance(cfg)?;
    let recipe = Recipe::for_instance(cfg, cfg.profile, &inst)?;
    let profile = recipe.profile(&inst);
    let excess = excess_share(&profile, &inst)?;
    let family = inst.family();
    let symmetric = match (family, recipe.contingent()) {
        (Some(f), Some(s)) => Some(classify_symmetric(s, f)?),
        _ => None,
    };
    let sincere = match (family, &recipe) {
        (Some(f), Recipe::Sincere { tie_break, .. }) => Some(sincere_dichotomy(f, *tie_break)?),
        _ => None,
    };
    let sequence = match (&cfg.ns, family) {
        (Some(ns), Some(f)) => Some(classify_sequence(
            f,
            |i| recipe.profile(i),
            ns,
            &cfg.sequence,
        )?),
        (Some(_), None) => {
            return Err(CliError::Usage(
                "a sequence needs an instance given by groups".into(),
            ))
        }
        (None, _) => None,
    };
    Ok(to_json(&Report {
        instance: InstanceSummary::of(&inst),
        profile: recipe.describe(),
        hoeffding_bound: hoeffding_lower_bound(excess.min_relevant, inst.n_agents()).ok(),
        berry_esseen_gap: berry_esseen_gap_bound(&profile, &inst, excess.critical_state).ok(),
        excess,
        symmetric,
        sincere,
        sequence,
    }))
}

fn run_construct(cfg: &RunConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Report {
        instance: InstanceSummary,
        trace: ConstructionTrace,
        evaluation: Evaluation,
        /// Hoeffding guarantee at the construction margin, once N > N₀.
        hoeffding_bound_at_phi: Option<f64>,
    }
    let inst = require_instance(cfg)?;
    let recipe = Recipe::for_instance(cfg, ProfileKind::Constructed, &inst)?;
    let Recipe::Regular {
        trace: Some(trace), ..
    } = &recipe
    else {
        unreachable!("constructed recipes carry their trace")
    };
    let n = inst.n_agents();
    let evaluation = evaluate(&recipe.profile(&inst), &inst, cfg)?;
    Ok(to_json(&Report {
        instance: InstanceSummary::of(&inst),
        hoeffding_bound_at_phi: if n > trace.n0 {
            hoeffding_lower_bound(trace.phi, n).ok()
        } else {
            None
        },
        trace: (**trace).clone(),
        evaluation,
    }))
}

fn run_refute(cfg: &RunConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Report {
        instance: InstanceSummary,
        profile: ProfileDescription,
        fidelity: f64,
        epsilon: f64,
        epsilon_from_fidelity: bool,
        refutation: Refutation,
    }
    let inst = require_instance(cfg)?;
    let recipe = Recipe::for_instance(cfg, cfg.profile, &inst)?;
    let profile = recipe.profile(&inst);
    let report = analyze(&profile, &inst)?;
    let fidelity = report.fidelity;
    let epsilon = match cfg.epsilon {
        Epsilon::Auto => epsilon_bound(fidelity, inst.utility_bound(), inst.n_states()),
        Epsilon::Value(x) => x,
    };
    let refutation = refute_equilibrium(&profile, &inst, epsilon, &cfg.search)?;
    Ok(to_json(&Report {
        instance: InstanceSummary::of(&inst),
        profile: recipe.describe(),
        fidelity,
        epsilon,
        epsilon_from_fidelity: cfg.epsilon == Epsilon::Auto,
        refutation,
    }))
}

pub const SWEEP_HEADER: &str =
    "N,f_min,fidelity,fidelity_stderr,method,hoeffding_bound,contingent_expected_utility";

fn run_sweep(cfg: &RunConfig) -> Result<String> {
    let inst = require_instance(cfg)?;
    let family = inst
        .family()
        .ok_or_else(|| CliError::Usage("sweep needs an instance given by groups".into()))?;
    let ns = cfg
        .ns
        .as_deref()
        .ok_or_else(|| CliError::Usage("sweep needs --ns".into()))?;
    let recipe = Recipe::for_instance(cfg, cfg.profile, &inst)?;
    let rows = ns
        .par_iter()
        .map(|&n| {
            let inst = family.instance(n)?;
            let profile = recipe.profile(&inst);
            let f_min = excess_share(&profile, &inst)?.min_relevant;
            let eval = evaluate(&profile, &inst, cfg)?;
            Ok([
                n.to_string(),
                sig12(f_min),
                sig12(eval.fidelity),
                cell(eval.fidelity_stderr),
                eval.method.label().to_string(),
                cell(hoeffding_lower_bound(f_min, n).ok()),
                cell(eval.mean_utility(&inst, AgentTag::Contingent)),
            ]
            .join(","))
        })
        .collect::<Result<Vec<String>>>()?;
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    Ok(out)
}
