//! Command-line front end: `pml <command> --config run.json [flags]`.
//!
//! Exit status: 0 on success, 1 when a verification check failed, 2 for
//! configuration or usage errors and 3 when a computation failed.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::envelope::{envelope_bruteforce_lower_bound, envelope_curve, MAX_CELLS};
use crate::error::PmlError;
use crate::leakage::{interval_leakage, set_leakage_oracle, Interval};
use crate::mechanism::{Mechanism, MechanismConfig};
use crate::numerics::QuadratureConfig;
use crate::priors::PriorSpec;
use crate::verify::{run_suite, suite_passed, Suite};

/// Longest grid accepted from `lo:hi:step`.
const MAX_GRID_POINTS: usize = 1_000_000;
const DEFAULT_DELTAS: &str = "0.01:0.49:0.01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Deterministic envelope on a grid of delta values.
    Envelope,
    /// Leakage of intervals and finite unions of intervals.
    Leakage,
    /// Posterior mean and variance on a grid of outputs.
    Posterior,
    /// Numerical verification suite.
    Verify,
    /// Brute-force lower bound with its witness partition.
    Search,
}

impl Command {
    fn as_str(self) -> &'static str {
        match self {
            Command::Envelope => "envelope",
            Command::Leakage => "leakage",
            Command::Posterior => "posterior",
            Command::Verify => "verify",
            Command::Search => "search",
        }
    }

    fn accepted_args(self) -> &'static [&'static str] {
        match self {
            Command::Envelope => &["deltas"],
            Command::Leakage => &["intervals", "unions"],
            Command::Posterior => &["y_grid"],
            Command::Verify => &["suite"],
            Command::Search => &["deltas", "max_cells"],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Command-line flags. Flags override the corresponding config entries.
#[derive(Debug, Parser)]
#[command(
    name = "pml",
    version,
    about = "Pointwise maximal leakage of the additive Gaussian noise mechanism",
    after_help = "Grids (--deltas, --y-grid) are either comma lists such as 0.05,0.1,0.2 \
                  or inclusive ranges lo:hi:step such as -4:4:0.5.\n\
                  Intervals are written lo,hi; use -inf and inf for tails.\n\
                  PML_NUM_THREADS caps the number of worker threads."
)]
pub struct Cli {
    /// Command to run; defaults to `command` from the config file.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Delta grid for `envelope` and `search`.
    #[arg(long, allow_hyphen_values = true)]
    pub deltas: Option<String>,
    /// Interval `lo,hi` for `leakage`; repeatable.
    #[arg(long = "interval", allow_hyphen_values = true)]
    pub intervals: Vec<String>,
    /// Output grid for `posterior`.
    #[arg(long, allow_hyphen_values = true)]
    pub y_grid: Option<String>,
    /// Check group for `verify`: all, concavity, monotonicity, tails, bathtub or brascamp-lieb.
    #[arg(long)]
    pub suite: Option<String>,
    /// Seed for the randomized checks of `verify`; overrides the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; overrides the config, which defaults to csv
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Contents of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prior: PriorSpec,
    pub sigma_n: f64,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub command_args: Option<Value>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn mechanism(&self) -> MechanismConfig {
        MechanismConfig {
            prior: self.prior.clone(),
            sigma_n: self.sigma_n,
            quadrature: self.quadrature.clone(),
        }
    }
}

/// Fully validated parameters of one command.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandArgs {
    Envelope { deltas: Vec<f64> },
    Leakage { sets: Vec<Vec<Interval>> },
    Posterior { ys: Vec<f64> },
    Verify { suite: Suite },
    Search { deltas: Vec<f64>, max_cells: usize },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or flags.
    Config(String),
    /// A computation failed.
    Compute(PmlError),
    /// The output could not be written.
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Output(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CliError::Compute(e) => match e.operation() {
                Some(op) => write!(f, "computation failed in {op}: {e}"),
                None => write!(f, "computation failed: {e}"),
            },
            CliError::Output(msg) => write!(f, "write_output failed: {msg}"),
        }
    }
}

impl From<PmlError> for CliError {
    fn from(e: PmlError) -> Self {
        CliError::Compute(e)
    }
}

/// 1-based line of the JSON text on which `pointer` starts, found by
/// matching its object keys in order.
fn line_of_pointer(text: &str, pointer: &str) -> usize {
    let mut pos = 0;
    for seg in pointer.split('/').skip(1) {
        if seg.is_empty() || seg.parse::<usize>().is_ok() {
            continue;
        }
        let key = format!("\"{}\"", seg.replace("~1", "/").replace("~0", "~"));
        match text[pos..].find(&key) {
            Some(off) => pos += off,
            None => break,
        }
    }
    text[..pos].matches('\n').count() + 1
}

fn located(path: &Path, text: &str, pointer: &str, msg: impl fmt::Display) -> CliError {
    let shown = if pointer.is_empty() { "/" } else { pointer };
    CliError::Config(format!(
        "{}:{}: {shown}: {msg}",
        path.display(),
        line_of_pointer(text, pointer)
    ))
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

/// Reads, parses and validates a run configuration.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, path)
}

/// As [`parse_config`], for text already in memory; `path` only labels messages.
pub fn parse_config_str(text: &str, path: &Path) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        let inner = e.inner();
        let line = if inner.line() > 0 { inner.line() } else { line_of_pointer(text, &pointer) };
        let shown = if pointer.is_empty() { "/".to_string() } else { pointer };
        CliError::Config(format!("{}:{line}: {shown}: {inner}", path.display()))
    })?;
    if let Err(e) = cfg.mechanism().validate() {
        return Err(match e {
            PmlError::Invalid { field, msg } => located(path, text, &field, msg),
            other => CliError::Config(format!("{}: {other}", path.display())),
        });
    }
    if let Some(args) = &cfg.command_args {
        if !args.is_object() {
            return Err(located(path, text, "/command_args", "must be an object"));
        }
    }
    Ok(cfg)
}

/// Parses `lo:hi:step` (inclusive) or a comma list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected lo:hi:step, got {spec:?}"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("{s:?} is not a number"));
        let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        range_points(lo, hi, step)
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| format!("{s:?} is not a number")))
            .collect()
    }
}

fn range_points(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(format!("range needs finite lo <= hi, got {lo}:{hi}"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(format!("step must be positive, got {step}"));
    }
    let count = ((hi - lo) / step * (1.0 + 1e-12) + 1e-9).floor() + 1.0;
    if count > MAX_GRID_POINTS as f64 {
        return Err(format!("range has more than {MAX_GRID_POINTS} points"));
    }
    Ok((0..count as usize).map(|k| lo + k as f64 * step).collect())
}

fn grid_from_value(v: &Value) -> Result<Vec<f64>, String> {
    match v {
        Value::String(s) => parse_grid(s),
        Value::Array(items) => items
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| format!("{x} is not a number")))
            .collect(),
        other => Err(format!("expected a list of numbers or a \"lo:hi:step\" string, got {other}")),
    }
}

/// Parses `lo,hi` with `-inf`/`inf` allowed.
pub fn parse_interval(spec: &str) -> Result<Interval, String> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected lo,hi, got {spec:?}"));
    }
    let num = |s: &str| match s {
        "-inf" => Ok(f64::NEG_INFINITY),
        "inf" | "+inf" => Ok(f64::INFINITY),
        _ => s.parse::<f64>().map_err(|_| format!("{s:?} is not a number")),
    };
    let (lo, hi) = (num(parts[0])?, num(parts[1])?);
    if !(lo < hi) || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
        return Err(format!("interval needs lo < hi, got {spec:?}"));
    }
    Ok(Interval { lo, hi })
}

fn check_deltas(deltas: &[f64]) -> Result<(), String> {
    if deltas.is_empty() {
        return Err("no delta values".into());
    }
    match deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        Some(d) => Err(format!("delta = {d} must lie in (0, 1)")),
        None => Ok(()),
    }
}

fn check_union(set: &[Interval]) -> Result<(), String> {
    if set.is_empty() {
        return Err("empty union".into());
    }
    let mut sorted = set.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for iv in &sorted {
        if !(iv.lo < iv.hi) || iv.lo == f64::INFINITY || iv.hi == f64::NEG_INFINITY {
            return Err(format!("invalid interval {iv}"));
        }
    }
    if sorted.windows(2).any(|w| w[1].lo < w[0].hi) {
        return Err("intervals overlap".into());
    }
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArgs {
    deltas: Option<Value>,
    intervals: Option<Vec<Interval>>,
    unions: Option<Vec<Vec<Interval>>>,
    y_grid: Option<Value>,
    suite: Option<String>,
    max_cells: Option<usize>,
}

/// Merges config `command_args` with command-line flags (flags win) and
/// validates the result for `command`.
pub fn resolve_args(
    command: Command,
    cfg: &RunConfig,
    cli: &Cli,
    path: &Path,
    text: &str,
) -> Result<CommandArgs, CliError> {
    let cfg_err = |ptr: &str, msg: String| located(path, text, &format!("/command_args{ptr}"), msg);
    let raw_value = cfg.command_args.clone().unwrap_or(Value::Object(Default::default()));
    if let Value::Object(map) = &raw_value {
        if let Some(key) = map.keys().find(|k| !command.accepted_args().contains(&k.as_str())) {
            return Err(cfg_err(
                &format!("/{key}"),
                format!(
                    "not accepted by `{}`; expected one of: {}",
                    command.as_str(),
                    command.accepted_args().join(", ")
                ),
            ));
        }
    }
    let given = [
        ("deltas", cli.deltas.is_some()),
        ("intervals", !cli.intervals.is_empty()),
        ("y_grid", cli.y_grid.is_some()),
        ("suite", cli.suite.is_some()),
    ];
    if let Some((key, _)) = given.iter().find(|(k, set)| *set && !command.accepted_args().contains(k)) {
        let flag = if *key == "intervals" { "interval".to_string() } else { key.replace('_', "-") };
        return Err(CliError::Config(format!("--{flag} is not accepted by `{}`", command.as_str())));
    }
    let raw: RawArgs = serde_path_to_error::deserialize(raw_value)
        .map_err(|e| cfg_err(&pointer_of(e.path()), e.inner().to_string()))?;
    let flag_err = |flag: &str, msg: String| CliError::Config(format!("--{flag}: {msg}"));

    let deltas = |default: Option<&str>| -> Result<Vec<f64>, CliError> {
        let d = if let Some(s) = &cli.deltas {
            parse_grid(s).and_then(|d| check_deltas(&d).map(|_| d)).map_err(|m| flag_err("deltas", m))?
        } else if let Some(v) = &raw.deltas {
            grid_from_value(v)
                .and_then(|d| check_deltas(&d).map(|_| d))
                .map_err(|m| cfg_err("/deltas", m))?
        } else if let Some(s) = default {
            parse_grid(s).map_err(|m| flag_err("deltas", m))?
        } else {
            return Err(CliError::Config(format!(
                "`{}` needs --deltas or command_args.deltas",
                command.as_str()
            )));
        };
        Ok(d)
    };

    Ok(match command {
        Command::Envelope => CommandArgs::Envelope {
            deltas: deltas(Some(DEFAULT_DELTAS))?,
        },
        Command::Search => {
            let max_cells = raw.max_cells.unwrap_or(MAX_CELLS);
            if !(1..=MAX_CELLS).contains(&max_cells) {
                return Err(cfg_err("/max_cells", format!("must lie in [1, {MAX_CELLS}], got {max_cells}")));
            }
            CommandArgs::Search {
                deltas: deltas(None)?,
                max_cells,
            }
        }
        Command::Leakage => {
            // --interval flags replace the configured intervals; unions are kept.
            let mut sets: Vec<Vec<Interval>> = Vec::new();
            if cli.intervals.is_empty() {
                for (i, iv) in raw.intervals.iter().flatten().enumerate() {
                    check_union(&[*iv]).map_err(|m| cfg_err(&format!("/intervals/{i}"), m))?;
                    sets.push(vec![*iv]);
                }
            } else {
                for s in &cli.intervals {
                    sets.push(vec![parse_interval(s).map_err(|m| flag_err("interval", m))?]);
                }
            }
            for (i, u) in raw.unions.iter().flatten().enumerate() {
                check_union(u).map_err(|m| cfg_err(&format!("/unions/{i}"), m))?;
                sets.push(u.clone());
            }
            if sets.is_empty() {
                return Err(CliError::Config(
                    "`leakage` needs --interval or command_args.intervals/unions".into(),
                ));
            }
            CommandArgs::Leakage { sets }
        }
        Command::Posterior => {
            let ys = if let Some(s) = &cli.y_grid {
                parse_grid(s).map_err(|m| flag_err("y-grid", m))?
            } else if let Some(v) = &raw.y_grid {
                grid_from_value(v).map_err(|m| cfg_err("/y_grid", m))?
            } else {
                return Err(CliError::Config("`posterior` needs --y-grid or command_args.y_grid".into()));
            };
            if let Some(y) = ys.iter().find(|y| !y.is_finite()) {
                return Err(CliError::Config(format!("y grid value {y} is not finite")));
            }
            if ys.is_empty() {
                return Err(CliError::Config("y grid is empty".into()));
            }
            CommandArgs::Posterior { ys }
        }
        Command::Verify => {
            let suite = match (&cli.suite, &raw.suite) {
                (Some(s), _) => s.parse().map_err(|m| flag_err("suite", m))?,
                (None, Some(s)) => s.parse().map_err(|m| cfg_err("/suite", m))?,
                (None, None) => Suite::All,
            };
            CommandArgs::Verify { suite }
        }
    })
}

/// Formats a number with 10 significant digits, in scientific notation
/// when `|x| >= 1e6` or `|x| < 1e-4`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let ax = x.abs();
    if !(1e-4..1e6).contains(&ax) {
        let s = format!("{x:.9e}");
        let (mant, exp) = s.split_once('e').unwrap();
        return format!("{}e{exp}", trim_zeros(mant));
    }
    let exp = ax.log10().floor() as i32;
    let decimals = (9 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string(v).map_err(|e| CliError::Output(e.to_string()))
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let out = |e: csv::Error| CliError::Output(e.to_string());
    w.write_record(header).map_err(out)?;
    for r in rows {
        w.write_record(&r).map_err(out)?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| CliError::Output(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

/// Output bytes and whether every verification check passed.
pub struct Rendered {
    pub bytes: Vec<u8>,
    pub checks_passed: bool,
}

#[derive(Serialize)]
struct LeakageRecord {
    set: Vec<Interval>,
    mass: f64,
    leakage_nats: f64,
    method: &'static str,
}

#[derive(Serialize)]
struct PosteriorRecord {
    y: f64,
    mean: f64,
    variance: f64,
}

#[derive(Serialize)]
struct SearchRecord {
    delta: f64,
    max_cells: usize,
    #[serde(flatten)]
    result: crate::envelope::BruteForceResult,
}

/// Runs one command on a built mechanism.
pub fn execute(m: &Mechanism, args: &CommandArgs, format: Format, seed: u64) -> Result<Rendered, CliError> {
    let mut checks_passed = true;
    let bytes = match args {
        CommandArgs::Envelope { deltas } => {
            let pts = envelope_curve(m, deltas)?;
            match format {
                Format::Json => json_bytes(&pts)?,
                Format::Csv => {
                    let mut rows = Vec::with_capacity(pts.len());
                    for p in &pts {
                        rows.push(vec![
                            format_number(p.delta),
                            format_number(p.epsilon_d.value()),
                            p.regime.as_str().to_string(),
                            to_json(&p.witness)?,
                        ]);
                    }
                    csv_bytes(&["delta", "epsilon_d_nats", "regime", "witness_json"], rows)?
                }
            }
        }
        CommandArgs::Search { deltas, max_cells } => {
            let mut recs = Vec::with_capacity(deltas.len());
            for &d in deltas {
                recs.push(SearchRecord {
                    delta: d,
                    max_cells: *max_cells,
                    result: envelope_bruteforce_lower_bound(m, d, *max_cells)?,
                });
            }
            match format {
                Format::Json => json_bytes(&recs)?,
                Format::Csv => {
                    let mut rows = Vec::with_capacity(recs.len());
                    for r in &recs {
                        rows.push(vec![
                            format_number(r.delta),
                            r.max_cells.to_string(),
                            format_number(r.result.value.value()),
                            to_json(&r.result.left_masses)?,
                            to_json(&r.result.right_masses)?,
                            to_json(&r.result.witness)?,
                        ]);
                    }
                    csv_bytes(
                        &["delta", "max_cells", "epsilon_nats", "left_masses", "right_masses", "witness_json"],
                        rows,
                    )?
                }
            }
        }
        CommandArgs::Leakage { sets } => {
            let mut recs = Vec::with_capacity(sets.len());
            for set in sets {
                let mass: f64 = set.iter().map(|iv| m.prob_between(iv.lo, iv.hi)).sum();
                let (leak, method) = if set.len() == 1 {
                    (interval_leakage(m, &set[0])?, "closed_form")
                } else {
                    (set_leakage_oracle(m, set)?, "oracle")
                };
                recs.push(LeakageRecord {
                    set: set.clone(),
                    mass,
                    leakage_nats: leak.value(),
                    method,
                });
            }
            match format {
                Format::Json => json_bytes(&recs)?,
                Format::Csv => {
                    let mut rows = Vec::with_capacity(recs.len());
                    for r in &recs {
                        rows.push(vec![
                            to_json(&r.set)?,
                            format_number(r.mass),
                            format_number(r.leakage_nats),
                            r.method.to_string(),
                        ]);
                    }
                    csv_bytes(&["set", "mass", "leakage_nats", "method"], rows)?
                }
            }
        }
        CommandArgs::Posterior { ys } => {
            let mut recs = Vec::with_capacity(ys.len());
            for &y in ys {
                recs.push(PosteriorRecord {
                    y,
                    mean: m.posterior_mean(y)?,
                    variance: m.posterior_variance(y)?,
                });
            }
            match format {
                Format::Json => json_bytes(&recs)?,
                Format::Csv => csv_bytes(
                    &["y", "mean", "variance"],
                    recs.iter()
                        .map(|r| vec![format_number(r.y), format_number(r.mean), format_number(r.variance)])
                        .collect(),
                )?,
            }
        }
        CommandArgs::Verify { suite } => {
            let results = run_suite(m, *suite, seed)?;
            checks_passed = suite_passed(&results);
            match format {
                Format::Json => json_bytes(&results)?,
                Format::Csv => {
                    let mut rows = Vec::with_capacity(results.len());
                    for r in &results {
                        rows.push(vec![
                            r.name.clone(),
                            r.passed.to_string(),
                            r.applicable.to_string(),
                            format_number(r.worst_violation),
                            format_number(r.tolerance),
                            match &r.location {
                                Some(l) => to_json(l)?,
                                None => String::new(),
                            },
                            r.details.clone(),
                        ]);
                    }
                    csv_bytes(
                        &["name", "passed", "applicable", "worst_violation", "tolerance", "location", "details"],
                        rows,
                    )?
                }
            }
        }
    };
    Ok(Rendered { bytes, checks_passed })
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so the target is either complete or untouched.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let err = |e: std::io::Error| CliError::Output(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

/// Runs the program for parsed flags and returns the exit status.
pub fn run(cli: &Cli) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let cfg = parse_config_str(&text, &cli.config)?;
    let command = cli.command.or(cfg.command).ok_or_else(|| {
        CliError::Config("no command given on the command line or in the config".into())
    })?;
    let args = resolve_args(command, &cfg, cli, &cli.config, &text)?;
    let format = cli.format.unwrap_or(cfg.format);
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out = cli.out.clone().or_else(|| cfg.output_path.clone());

    let m = cfg.mechanism().build().map_err(|e| match e {
        PmlError::Invalid { field, msg } => located(&cli.config, &text, &field, msg),
        other => CliError::Compute(other),
    })?;
    let rendered = execute(&m, &args, format, seed)?;
    match out {
        Some(path) => write_atomic(&path, &rendered.bytes)?,
        None => std::io::stdout()
            .write_all(&rendered.bytes)
            .map_err(|e| CliError::Output(e.to_string()))?,
    }
    Ok(if rendered.checks_passed { 0 } else { 1 })
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PML_NUM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("PML_NUM_THREADS must be a positive integer, got {v:?}")))?;
    // Fails only if a pool already exists, in which case it is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Entry point of the `pml` binary.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(&cli)) {
        Ok(code) => {
            if code == 1 {
                eprintln!("verification failed: at least one check did not pass");
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
