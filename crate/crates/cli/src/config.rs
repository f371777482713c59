//! Command-line flags, the optional TOML config file, and their merge into
//! a validated [`RunConfig`]. Flags override config values.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use imvote_core::analysis::SequenceParams;
use imvote_core::strategize::DeviationSearchSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_DP_CAP: usize = 5000;
pub const DEFAULT_TIE_BREAK: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(
    name = "imvote",
    version,
    about = "Exact analysis of majority votes with state-contingent preferences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Fidelity, win probabilities and expected utilities of one profile.
    Analyze,
    /// Excess expected vote share, concentration bounds and classification.
    Excess,
    /// Build the high-fidelity contingent strategy and its certificates.
    Construct,
    /// Search for a coalition deviation that beats ε.
    Refute,
    /// Fidelity and utility per population size, as CSV.
    Sweep,
    /// Re-derive every published example value and compare with goldens.
    VerifyPaper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// Regular profile; contingent agents vote A exactly on high signals.
    #[default]
    Informative,
    /// Every agent votes for its posterior-preferred alternative.
    Sincere,
    /// Regular profile; contingent agents play the constructed strategy.
    Constructed,
    /// Regular profile; contingent agents play `--strategy`.
    Explicit,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Instance JSON document.
    #[arg(long, global = true)]
    pub instance: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte Carlo seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo sample count above the exact-DP cap.
    #[arg(long, global = true)]
    pub samples: Option<u64>,
    /// Population sizes: `a..b:step` (inclusive) or a comma list.
    #[arg(long, global = true)]
    pub ns: Option<String>,
    /// Deviation threshold: a number or `auto` (the fidelity-based bound).
    #[arg(long, global = true)]
    pub epsilon: Option<String>,
    /// Vote probability used by sincere agents when indifferent.
    #[arg(long, global = true)]
    pub tie_break: Option<f64>,
    /// Restrict verify-paper to one tag.
    #[arg(long, global = true)]
    pub only: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<ProfileKind>,
    /// Contingent strategy for `--profile explicit`, one vote probability
    /// per signal, comma-separated.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub strategy: Option<String>,
    /// Low-signal vote probability reduction of the construction (default: the safe choice)
    #[arg(long, global = true)]
    pub delta_l: Option<f64>,
    /// Extra high-signal vote probability of the construction
    #[arg(long, global = true)]
    pub boost: Option<f64>,
    /// Safety factor applied to the default low-signal reduction
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    /// Grid step of the deviation search.
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
    /// Largest N evaluated by exact DP; Monte Carlo above it.
    #[arg(long, global = true)]
    pub dp_cap: Option<usize>,
    /// Goldens JSON replacing the built-in set.
    #[arg(long, global = true)]
    pub goldens: Option<PathBuf>,
    /// Scaled-excess level that counts as converging.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub converge_level: Option<f64>,
    /// Scaled-excess level at or below which a sequence fails.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub failure_level: Option<f64>,
    /// Per-agent variance floor for the bounded-variance case.
    #[arg(long, global = true)]
    pub variance_floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Auto,
    Value(f64),
}

impl Epsilon {
    fn parse(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        match s.trim().parse::<f64>() {
            Ok(x) if x.is_finite() && x >= 0.0 => Ok(Self::Value(x)),
            _ => Err(CliError::Usage(format!(
                "epsilon must be a non-negative number or `auto`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NsValue {
    Spec(String),
    List(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EpsilonValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SequenceOverrides {
    converge_level: Option<f64>,
    failure_level: Option<f64>,
    variance_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    command: Option<Command>,
    instance: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    samples: Option<u64>,
    ns: Option<NsValue>,
    epsilon: Option<EpsilonValue>,
    tie_break: Option<f64>,
    only: Option<String>,
    profile: Option<ProfileKind>,
    strategy: Option<Vec<f64>>,
    dp_cap: Option<usize>,
    goldens: Option<PathBuf>,
    search: Option<DeviationSearchSpec>,
    sequence: SequenceOverrides,
}

/// Everything a command needs, after defaults and validation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub instance: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub samples: u64,
    pub ns: Option<Vec<usize>>,
    pub epsilon: Epsilon,
    pub tie_break: f64,
    pub only: Option<String>,
    pub profile: ProfileKind,
    pub strategy: Option<Vec<f64>>,
    pub dp_cap: usize,
    pub goldens: Option<PathBuf>,
    pub search: DeviationSearchSpec,
    pub sequence: SequenceParams,
}

impl RunConfig {
    pub fn resolve(cli: Cli) -> Result<Self> {
        let (file, base) = match &cli.flags.config {
            Some(path) => (read_config(path)?, path.parent().map(Path::to_path_buf)),
            None => (ConfigFile::default(), None),
        };
        let rebase = |p: PathBuf| match &base {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        };
        let f = cli.flags;

        let command = cli.command.or(file.command).ok_or_else(|| {
            CliError::Usage("no command given (subcommand or `command` in the config)".into())
        })?;

        let ns = match (f.ns, file.ns) {
            (Some(s), _) | (None, Some(NsValue::Spec(s))) => Some(parse_ns(&s)?),
            (None, Some(NsValue::List(list))) => Some(check_ns(list)?),
            (None, None) => None,
        };

        let epsilon = match (f.epsilon, file.epsilon) {
            (Some(s), _) | (None, Some(EpsilonValue::Text(s))) => Epsilon::parse(&s)?,
            (None, Some(EpsilonValue::Number(x))) => Epsilon::parse(&x.to_string())?,
            (None, None) => Epsilon::Auto,
        };

        let strategy = match (f.strategy, file.strategy) {
            (Some(s), _) => Some(parse_list(&s)?),
            (None, s) => s,
        };

        let mut search = file.search.unwrap_or_default();
        if let Some(r) = f.resolution {
            search.resolution = r;
        }
        let construction = &mut search.construction;
        if let Some(k) = f.kappa {
            construction.kappa = k;
        }
        if f.delta_l.is_some() {
            construction.delta_l = f.delta_l;
        }
        if f.boost.is_some() {
            construction.boost = f.boost;
        }

        let defaults = SequenceParams::default();
        let sequence = SequenceParams {
            converge_level: f
                .converge_level
                .or(file.sequence.converge_level)
                .unwrap_or(defaults.converge_level),
            failure_level: f
                .failure_level
                .or(file.sequence.failure_level)
                .unwrap_or(defaults.failure_level),
            variance_floor: f
                .variance_floor
                .or(file.sequence.variance_floor)
                .unwrap_or(defaults.variance_floor),
        };

        let samples = f.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES);
        if samples == 0 {
            return Err(CliError::Usage("samples must be at least 1".into()));
        }
        let tie_break = f.tie_break.or(file.tie_break).unwrap_or(DEFAULT_TIE_BREAK);
        if !(0.0..=1.0).contains(&tie_break) {
            return Err(CliError::Usage(format!(
                "tie-break {tie_break} is outside [0, 1]"
            )));
        }

        let instance = f.instance.or(file.instance.map(&rebase));
        let goldens = f.goldens.or(file.goldens.map(&rebase));
        for path in instance.iter().chain(&goldens) {
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "{} does not exist",
                    path.display()
                )));
            }
        }

        Ok(Self {
            command,
            instance,
            out: f.out.or(file.out.map(&rebase)),
            seed: f.seed.or(file.seed).unwrap_or(0),
            samples,
            ns,
            epsilon,
            tie_break,
            only: f.only.or(file.only),
            profile: f.profile.or(file.profile).unwrap_or_default(),
            strategy,
            dp_cap: f.dp_cap.or(file.dp_cap).unwrap_or(DEFAULT_DP_CAP),
            goldens,
            search,
            sequence,
        })
    }
}

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        location: match e.span() {
            Some(span) => {
                let line = text[..span.start].matches('\n').count() + 1;
                format!("line {line}")
            }
            None => "document".into(),
        },
        message: e.message().to_string(),
    })
}

/// `a..b:step` (inclusive, step defaults to 1) or `n1,n2,...`.
pub fn parse_ns(spec: &str) -> Result<Vec<usize>> {
    let spec = spec.trim();
    let bad = || CliError::Usage(format!("cannot read population sizes `{spec}`"));
    let ns = if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = rest.split_once(':').unwrap_or((rest, "1"));
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        let step: usize = step.trim().parse().map_err(|_| bad())?;
        if step == 0 {
            return Err(CliError::Usage("ns step must be positive".into()));
        }
        (lo..=hi).step_by(step).collect()
    } else if spec.is_empty() {
        Vec::new()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    check_ns(ns)
}

fn check_ns(ns: Vec<usize>) -> Result<Vec<usize>> {
    if ns.is_empty() {
        return Err(CliError::Usage(
            "ns must list at least one population size".into(),
        ));
    }
    if ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage(
            "ns must be positive and strictly ascending".into(),
        ));
    }
    Ok(ns)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("cannot read strategy `{s}`")))
        })
        .collect()
}
