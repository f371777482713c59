//! Golden-value suite: re-derives every published example value and
//! compares it with a goldens document (built in, or `--goldens`).

use std::path::Path;

use imvote_core::analysis::{classify_symmetric, sincere_strategy};
use imvote_core::exactprob::analyze;
use imvote_core::model::{
    AgentTag, Alternative, Family, Game, Group, Instance, Profile, Setting, SignalChannel,
    StatePrior, Strategy, UtilityFn,
};
use imvote_core::strategize::{build_no_bne_instance, construct_sigma_prime, ConstructionParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::input::parse_instance;

pub const BUILTIN_GOLDENS: &str = include_str!("../goldens/paper.json");
const EX4_FIXTURE: &str = include_str!("../examples/ex4_setting.json");
const EX9_FIXTURE: &str = include_str!("../examples/ex9_nonbinary.json");

/// Tags in suite order.
pub const TAGS: [&str; 7] = [
    "appendix-c",
    "example-4",
    "example-5",
    "example-6",
    "example-7",
    "example-8",
    "example-9",
];

/// A scalar expectation applies to every observed component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expected {
    Number(f64),
    Numbers(Vec<f64>),
    Label(String),
    Labels(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Observed {
    Numbers(Vec<f64>),
    Labels(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Golden {
    pub id: String,
    pub tag: String,
    pub description: String,
    pub expected: Expected,
    #[serde(default)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goldens {
    pub checks: Vec<Golden>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub tag: String,
    pub description: String,
    pub expected: Expected,
    pub observed: Observed,
    pub tolerance: f64,
    /// Largest absolute deviation for numeric checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_error: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<CheckResult>,
}

pub fn load_goldens(path: Option<&Path>) -> Result<Goldens> {
    let (label, text) = match path {
        Some(p) => (
            p.to_path_buf(),
            std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.to_path_buf(),
                source,
            })?,
        ),
        None => ("<built-in goldens>".into(), BUILTIN_GOLDENS.to_string()),
    };
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: label,
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Runs the checks of `goldens`, optionally only those tagged `only`.
pub fn verify(goldens: &Goldens, only: Option<&str>) -> Result<VerificationReport> {
    if let Some(tag) = only {
        if !TAGS.contains(&tag) {
            return Err(CliError::Usage(format!(
                "unknown tag `{tag}`; known: {}",
                TAGS.join(", ")
            )));
        }
    }
    let checks = goldens
        .checks
        .iter()
        .filter(|g| only.is_none_or(|t| g.tag == t))
        .map(|g| {
            let observed = observe(&g.id)?;
            let (pass, max_error) = compare(&g.expected, &observed, g.tolerance);
            Ok(CheckResult {
                id: g.id.clone(),
                tag: g.tag.clone(),
                description: g.description.clone(),
                expected: g.expected.clone(),
                observed,
                tolerance: g.tolerance,
                max_error,
                pass,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = checks.iter().filter(|c| c.pass).count();
    Ok(VerificationReport {
        total: checks.len(),
        passed,
        failed: checks.len() - passed,
        checks,
    })
}

fn compare(expected: &Expected, observed: &Observed, tol: f64) -> (bool, Option<f64>) {
    let broadcast = |want: Vec<f64>, got: &[f64]| -> (bool, Option<f64>) {
        let want = if want.len() == 1 {
            vec![want[0]; got.len()]
        } else {
            want
        };
        if want.len() != got.len() {
            return (false, None);
        }
        let err = want
            .iter()
            .zip(got)
            .map(|(w, g)| (w - g).abs())
            .fold(0.0, f64::max);
        (err <= tol, Some(err))
    };
    match (expected, observed) {
        (Expected::Number(w), Observed::Numbers(got)) => broadcast(vec![*w], got),
        (Expected::Numbers(w), Observed::Numbers(got)) => broadcast(w.clone(), got),
        (Expected::Label(w), Observed::Labels(got)) => (got.iter().all(|g| g == w), None),
        (Expected::Labels(w), Observed::Labels(got)) => (w == got, None),
        _ => (false, None),
    }
}

fn binary_game(mu: f64, p_h: f64, p_hl: f64, p_hh: f64) -> Game {
    Game::new(
        Setting::Binary,
        mu,
        StatePrior::new(vec![1.0 - p_h, p_h]).expect("valid prior"),
        SignalChannel::new(vec![vec![1.0 - p_hl, p_hl], vec![1.0 - p_hh, p_hh]])
            .expect("valid channel"),
    )
    .expect("valid game")
}

/// Friendly / unfriendly / contingent population in proportion 2 : 3 : 5
/// with `P_hL = 0.2`.
fn three_type_family(p_hh: f64) -> Family {
    Family::new(
        binary_game(0.6, 0.4, 0.2, p_hh),
        vec![
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
        ],
    )
    .expect("valid family")
}

fn fixture(name: &str, text: &str) -> Result<Instance> {
    parse_instance(Path::new(name), text)
}

fn labels<T: AsRef<str>>(items: impl IntoIterator<Item = T>) -> Observed {
    Observed::Labels(items.into_iter().map(|s| s.as_ref().to_string()).collect())
}

fn alt(a: Alternative) -> &'static str {
    match a {
        Alternative::Accept => "A",
        Alternative::Reject => "R",
    }
}

fn tag_name(t: AgentTag) -> &'static str {
    match t {
        AgentTag::Friendly => "friendly",
        AgentTag::Unfriendly => "unfriendly",
        AgentTag::Contingent => "contingent",
    }
}

/// Expected utility of one representative agent of each type in the
/// three-profile cycle, across the population sizes.
fn cycle_utility(profile: usize, role: &str) -> Result<Observed> {
    let mut out = Vec::new();
    for n0 in [1, 10, 50] {
        let x = build_no_bne_instance(n0)?;
        let p = [&x.sigma1, &x.sigma2, &x.sigma3][profile];
        let agent = match role {
            "friendly" => x.friendly[0],
            "contingent" => x.contingent[0],
            _ => x.unfriendly[0],
        };
        out.push(analyze(p, &x.instance)?.expected_utilities[agent]);
    }
    Ok(Observed::Numbers(out))
}

/// Exact comparison of informative voting and the `(0.48, 0.96)` deviation
/// at N = 500: `(fidelity, contingent utility)` for each.
fn large_population(p_hh: f64, contingent: &Strategy) -> Result<(f64, f64)> {
    let inst = three_type_family(p_hh).instance(500)?;
    let report = analyze(&Profile::regular(&inst, contingent), &inst)?;
    let c = inst.indices_of(AgentTag::Contingent)[0];
    Ok((report.fidelity, report.expected_utilities[c]))
}

fn example6_trace() -> Result<imvote_core::strategize::ConstructionTrace> {
    let params = ConstructionParams {
        delta_l: Some(0.3),
        boost: Some(0.06),
        ..Default::default()
    };
    Ok(construct_sigma_prime(&three_type_family(0.75), &params)?)
}

/// Fractional excess of the regular family with contingent strategy
/// `(beta_l, beta_h)`: `(A side in H, R side in L)`.
fn excess_pair(p_hh: f64, beta_l: f64, beta_h: f64) -> Result<(f64, f64)> {
    let s = Strategy::binary(beta_l, beta_h)?;
    let v = classify_symmetric(&s, &three_type_family(p_hh))?;
    Ok((v.excess.per_state_accept[1], v.excess.per_state_reject[0]))
}

fn sincere_case(a_high: u32, a_low: u32, r_high: u32, r_low: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    let game = binary_game(0.5, 0.5, 0.2, 0.8);
    let s = sincere_strategy(
        &UtilityFn::binary(a_high, a_low, r_high, r_low),
        game.prior(),
        game.channel(),
        0.3,
    )?;
    let c = &s.conditional;
    Ok((
        s.strategy.vote_probs().to_vec(),
        vec![c[0].accept, c[0].reject, c[1].accept, c[1].reject],
    ))
}

fn observe(id: &str) -> Result<Observed> {
    let num = |x: f64| Observed::Numbers(vec![x]);
    let nums = |v: &[f64]| Observed::Numbers(v.to_vec());
    let informative = Strategy::informative(2);
    let deviation = Strategy::binary(0.48, 0.96)?;
    Ok(match id {
        "appendix-c/sigma-1/friendly" => cycle_utility(0, "friendly")?,
        "appendix-c/sigma-1/contingent" => cycle_utility(0, "contingent")?,
        "appendix-c/sigma-1/unfriendly" => cycle_utility(0, "unfriendly")?,
        "appendix-c/sigma-2/friendly" => cycle_utility(1, "friendly")?,
        "appendix-c/sigma-2/contingent" => cycle_utility(1, "contingent")?,
        "appendix-c/sigma-2/unfriendly" => cycle_utility(1, "unfriendly")?,
        "appendix-c/sigma-3/friendly" => cycle_utility(2, "friendly")?,
        "appendix-c/sigma-3/contingent" => cycle_utility(2, "contingent")?,
        "appendix-c/sigma-3/unfriendly" => cycle_utility(2, "unfriendly")?,

        "example-4/type-counts" => {
            let inst = fixture("ex4_setting.json", EX4_FIXTURE)?;
            Observed::Numbers(
                [
                    AgentTag::Friendly,
                    AgentTag::Unfriendly,
                    AgentTag::Contingent,
                ]
                .map(|t| inst.count(t) as f64)
                .to_vec(),
            )
        }
        "example-4/win-threshold" => {
            num(fixture("ex4_setting.json", EX4_FIXTURE)?.win_threshold() as f64)
        }
        "example-4/informed-majority" => {
            let inst = fixture("ex4_setting.json", EX4_FIXTURE)?;
            let comp = inst.reference_composition();
            labels((0..2).map(|s| alt(comp.informed_majority(s))))
        }

        "example-5/case-1/fidelity" => num(large_population(0.9, &informative)?.0),
        "example-5/case-1/contingent-utility" => num(large_population(0.9, &informative)?.1),
        "example-5/case-2/informative-fidelity" => num(large_population(0.75, &informative)?.0),
        "example-5/case-2/deviation-fidelity" => num(large_population(0.75, &deviation)?.0),
        "example-5/case-2/contingent-gain" => {
            num(large_population(0.75, &deviation)?.1 - large_population(0.75, &informative)?.1)
        }

        "example-6/sigma-one" => nums(example6_trace()?.sigma_one.vote_probs()),
        "example-6/sigma-prime" => nums(example6_trace()?.sigma_prime.vote_probs()),
        "example-6/high-signal-adjustment" => {
            let t = example6_trace()?;
            num(t.delta_h + t.delta_h_boost)
        }
        "example-6/sigma-one-high-check" => num(example6_trace()?.vote_shift_one[1]),
        "example-6/high-check" => num(example6_trace()?.vote_shift[1]),
        "example-6/low-check" => num(example6_trace()?.vote_shift[0]),

        "example-7/case-1/informative-high" => num(excess_pair(0.9, 0.0, 1.0)?.0),
        "example-7/case-1/informative-low" => num(excess_pair(0.9, 0.0, 1.0)?.1),
        "example-7/case-2/informative-high" => num(excess_pair(0.75, 0.0, 1.0)?.0),
        "example-7/case-2/informative-low" => num(excess_pair(0.75, 0.0, 1.0)?.1),
        "example-7/case-2/deviation-high" => num(excess_pair(0.75, 0.48, 0.96)?.0),
        "example-7/case-2/deviation-low" => num(excess_pair(0.75, 0.48, 0.96)?.1),

        "example-8/case-1/strategy" => nums(&sincere_case(1, 0, 0, 1)?.0),
        "example-8/case-2/strategy" => nums(&sincere_case(5, 1, 0, 2)?.0),
        "example-8/case-2/conditional-utilities" => nums(&sincere_case(5, 1, 0, 2)?.1),
        "example-8/case-3/strategy" => nums(&sincere_case(4, 1, 0, 2)?.0),
        "example-8/case-3/conditional-utilities" => nums(&sincere_case(4, 1, 0, 2)?.1),

        "example-9/informed-majority" => {
            let inst = fixture("ex9_nonbinary.json", EX9_FIXTURE)?;
            let comp = inst.reference_composition();
            labels((0..3).map(|s| alt(comp.informed_majority(s))))
        }
        "example-9/group-tags" => {
            let inst = fixture("ex9_nonbinary.json", EX9_FIXTURE)?;
            let family = inst.family().expect("fixture has groups");
            labels(family.group_types().iter().map(|t| tag_name(t.tag)))
        }
        "example-9/win-threshold" => {
            num(fixture("ex9_nonbinary.json", EX9_FIXTURE)?.win_threshold() as f64)
        }
        other => {
            return Err(CliError::Parse {
                path: "goldens".into(),
                location: format!("check `{other}`"),
                message: "no computation is registered under this id".into(),
            })
        }
    })
}
