//! Argument parsing and dispatch for the `nltraffic` binary.
//!
//! Every option can come from a flag, from a `key = value` file given with
//! `--config`, or from the built-in default, in that order of precedence.

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nltraffic_core::nonlocal::Kernel;
use nltraffic_core::solver::FluxScheme;
use serde::Serialize;

pub use commands::{
    dispatch, exit_code, run, EXIT_FAILURE, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Classify initial data against the threshold curve.
    Classify,
    /// Evolve one datum under one kernel.
    Evolve,
    /// Evolve one datum under the four comparison kernels.
    CompareKernels,
    /// Trace a characteristic in the (u, d) phase plane.
    PhasePortrait,
    /// Export the threshold curve as `u,sigma`.
    ThresholdCurve,
    /// Analytic blow-up bounds for a supercritical seed.
    Bounds,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Evolve => "evolve",
            Command::CompareKernels => "compare-kernels",
            Command::PhasePortrait => "phase-portrait",
            Command::ThresholdCurve => "threshold-curve",
            Command::Bounds => "bounds",
        }
    }

    /// Options the subcommand reads, besides `out` and `config`.
    fn schema(self) -> &'static [Key] {
        use Key::*;
        match self {
            Command::Classify => &[Datum, NCells, XLeft, XRight, Seed],
            Command::Evolve => &[Datum, Kernel, TEnd, Cfl, NCells, XLeft, XRight, Flux, Seed],
            Command::CompareKernels => &[Datum, TEnd, Cfl, NCells, XLeft, XRight, Flux, Seed],
            Command::PhasePortrait => &[D0, U0, M, TEnd],
            Command::ThresholdCurve => &[Samples],
            Command::Bounds => &[D0, U0, M],
        }
    }

    fn required(self) -> &'static [Key] {
        match self {
            Command::PhasePortrait | Command::Bounds => &[Key::D0, Key::U0],
            _ => &[],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Key {
    Datum,
    Kernel,
    TEnd,
    Cfl,
    NCells,
    XLeft,
    XRight,
    Flux,
    Samples,
    D0,
    U0,
    M,
    Out,
    Seed,
}

const ALL_KEYS: [Key; 14] = [
    Key::Datum,
    Key::Kernel,
    Key::TEnd,
    Key::Cfl,
    Key::NCells,
    Key::XLeft,
    Key::XRight,
    Key::Flux,
    Key::Samples,
    Key::D0,
    Key::U0,
    Key::M,
    Key::Out,
    Key::Seed,
];

impl Key {
    fn name(self) -> &'static str {
        match self {
            Key::Datum => "datum",
            Key::Kernel => "kernel",
            Key::TEnd => "t-end",
            Key::Cfl => "cfl",
            Key::NCells => "n-cells",
            Key::XLeft => "x-left",
            Key::XRight => "x-right",
            Key::Flux => "flux",
            Key::Samples => "samples",
            Key::D0 => "d0",
            Key::U0 => "u0",
            Key::M => "m",
            Key::Out => "out",
            Key::Seed => "seed",
        }
    }

    /// Config files may spell keys with `_` or `-`.
    fn lookup(name: &str) -> Option<Key> {
        let name = name.replace('_', "-");
        ALL_KEYS.into_iter().find(|k| k.name() == name)
    }
}

/// Where an option value came from, for error messages.
#[derive(Debug, Clone)]
enum Source<'a> {
    Flag,
    File(&'a Path, usize),
}

impl Source<'_> {
    fn describe(&self, key: Key) -> String {
        match self {
            Source::Flag => format!("--{}", key.name()),
            Source::File(path, line) => {
                format!("`{}` ({}:{line})", key.name(), path.display())
            }
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad command line or config file; exit code 2.
    Usage(String),
    /// Error raised while running; mapped by kind.
    Core(nltraffic_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<nltraffic_core::Error> for CliError {
    fn from(e: nltraffic_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "nltraffic", version, about = "Nonlocal look-ahead traffic flow laboratory")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// `key = value` file with defaults for any option below.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// bump | subinit | random | random:<seed>
    #[arg(long, allow_hyphen_values = true)]
    datum: Option<String>,
    /// zero | sk | infinite | uniform | sk:L=<length> | linear
    #[arg(long, allow_hyphen_values = true)]
    kernel: Option<String>,
    #[arg(long = "t-end", allow_hyphen_values = true)]
    t_end: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    cfl: Option<String>,
    #[arg(long = "n-cells", allow_hyphen_values = true)]
    n_cells: Option<String>,
    #[arg(long = "x-left", allow_hyphen_values = true)]
    x_left: Option<String>,
    #[arg(long = "x-right", allow_hyphen_values = true)]
    x_right: Option<String>,
    /// godunov | llf
    #[arg(long, allow_hyphen_values = true)]
    flux: Option<String>,
    /// Number of samples for `threshold-curve`.
    #[arg(long, allow_hyphen_values = true)]
    samples: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    d0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    u0: Option<String>,
    /// Total mass entering the bounds.
    #[arg(long, allow_hyphen_values = true)]
    m: Option<String>,
    /// Output directory.
    #[arg(long, allow_hyphen_values = true)]
    out: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
}

impl Cli {
    fn flags(&self) -> Vec<(Key, &str)> {
        let slots = [
            (Key::Datum, &self.datum),
            (Key::Kernel, &self.kernel),
            (Key::TEnd, &self.t_end),
            (Key::Cfl, &self.cfl),
            (Key::NCells, &self.n_cells),
            (Key::XLeft, &self.x_left),
            (Key::XRight, &self.x_right),
            (Key::Flux, &self.flux),
            (Key::Samples, &self.samples),
            (Key::D0, &self.d0),
            (Key::U0, &self.u0),
            (Key::M, &self.m),
            (Key::Out, &self.out),
            (Key::Seed, &self.seed),
        ];
        slots
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

fn as_display<T: fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Fully resolved options for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub datum: String,
    #[serde(serialize_with = "as_display")]
    pub kernel: Kernel,
    pub t_end: f64,
    pub cfl: f64,
    pub n_cells: usize,
    pub x_left: Option<f64>,
    pub x_right: Option<f64>,
    pub flux: FluxScheme,
    pub samples: usize,
    pub d0: Option<f64>,
    pub u0: Option<f64>,
    pub m: f64,
    pub out: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            datum: "bump".into(),
            kernel: Kernel::Infinite,
            t_end: 4.0,
            cfl: 0.45,
            n_cells: 4000,
            x_left: None,
            x_right: None,
            flux: FluxScheme::Godunov,
            samples: 1001,
            d0: None,
            u0: None,
            m: 0.0,
            out: PathBuf::from("nltraffic-out"),
            seed: 0,
        }
    }

    /// Datum name with `random` resolved against the seed.
    pub fn datum_name(&self) -> String {
        if self.datum == "random" {
            format!("random:{}", self.seed)
        } else {
            self.datum.clone()
        }
    }

    fn set(&mut self, key: Key, value: &str, source: &Source) -> Result<(), CliError> {
        let bad = |why: String| CliError::Usage(format!("invalid value `{value}` for {}: {why}", source.describe(key)));
        let value = value.trim();
        let real = || value.parse::<f64>().map_err(|e| bad(e.to_string())).and_then(|v| {
            if v.is_finite() { Ok(v) } else { Err(bad("must be finite".into())) }
        });
        let positive = || real().and_then(|v| if v > 0.0 { Ok(v) } else { Err(bad("must be positive".into())) });
        let count = || value.parse::<usize>().map_err(|e| bad(e.to_string()));
        match key {
            Key::Datum => {
                nltraffic_core::scenarios::InitialDatum::by_name(if value == "random" { "random:0" } else { value })
                    .map_err(|e| bad(e.to_string()))?;
                self.datum = value.to_string();
            }
            Key::Kernel => self.kernel = value.parse().map_err(|e: nltraffic_core::Error| bad(e.to_string()))?,
            Key::TEnd => self.t_end = positive()?,
            Key::Cfl => {
                let c = positive()?;
                if c > 1.0 {
                    return Err(bad("must lie in (0, 1]".into()));
                }
                self.cfl = c;
            }
            Key::NCells => {
                let n = count()?;
                if n < 4 {
                    return Err(bad("need at least 4 cells".into()));
                }
                self.n_cells = n;
            }
            Key::XLeft => self.x_left = Some(real()?),
            Key::XRight => self.x_right = Some(real()?),
            Key::Flux => self.flux = value.parse().map_err(bad)?,
            Key::Samples => {
                let n = count()?;
                if n < 2 {
                    return Err(bad("need at least 2 samples".into()));
                }
                self.samples = n;
            }
            Key::D0 => self.d0 = Some(real()?),
            Key::U0 => {
                let u = real()?;
                if !(0.0..=1.0).contains(&u) {
                    return Err(bad("density must lie in [0, 1]".into()));
                }
                self.u0 = Some(u);
            }
            Key::M => {
                let m = real()?;
                if m < 0.0 {
                    return Err(bad("mass must be non-negative".into()));
                }
                self.m = m;
            }
            Key::Out => {
                if value.is_empty() {
                    return Err(bad("empty path".into()));
                }
                self.out = PathBuf::from(value);
            }
            Key::Seed => self.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
        }
        Ok(())
    }
}

/// Parses a flat `key = value` file; `#` starts a comment.
fn read_config_file(path: &Path) -> Result<Vec<(Key, String, usize)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read --config {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected `key = value`", path.display(), i + 1))
        })?;
        let key = Key::lookup(k.trim()).ok_or_else(|| {
            CliError::Usage(format!("{}:{}: unknown key `{}`", path.display(), i + 1, k.trim()))
        })?;
        entries.push((key, v.trim().to_string(), i + 1));
    }
    Ok(entries)
}

/// Parses `argv` (program name first) into a validated [`RunConfig`].
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let command = cli.command;
    let schema = command.schema();
    let allowed = |k: Key| k == Key::Out || schema.contains(&k);

    let flags = cli.flags();
    if let Some((k, _)) = flags.iter().find(|(k, _)| !allowed(*k)) {
        return Err(CliError::Usage(format!(
            "--{} is not an option of `{command}`",
            k.name()
        )));
    }

    let mut config = RunConfig::defaults(command);
    let mut given: Vec<Key> = Vec::new();
    if let Some(path) = &cli.config {
        // Shared config files may carry keys for other subcommands.
        for (key, value, line) in read_config_file(path)? {
            if allowed(key) {
                config.set(key, &value, &Source::File(path, line))?;
                given.push(key);
            }
        }
    }
    for (key, value) in flags {
        config.set(key, value, &Source::Flag)?;
        given.push(key);
    }
    if let Some(k) = command.required().iter().find(|k| !given.contains(k)) {
        return Err(CliError::Usage(format!(
            "`{command}` requires --{}",
            k.name()
        )));
    }
    if let (Some(a), Some(b)) = (config.x_left, config.x_right) {
        if !(a < b) {
            return Err(CliError::Usage(format!("--x-left {a} must be below --x-right {b}")));
        }
    }
    Ok(config)
}

/// Runs the binary: parse, dispatch, report. Returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match Cli::try_parse_from(&argv) {
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return EXIT_OK;
        }
        _ => {}
    }
    match parse_args(argv) {
        Ok(config) => dispatch(&config),
        Err(e) => {
            eprintln!("error: {}", e.to_string().trim_start_matches("error: "));
            EXIT_VALIDATION
        }
    }
}
