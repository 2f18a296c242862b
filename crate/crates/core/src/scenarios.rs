//! Initial-data catalog and the figure-level comparison experiments.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlocal::{GridFunction, GridSpec, Kernel};
use crate::solver::{evolve, BlowupReport, Evolution, FluxScheme, SolverConfig};
use crate::threshold::{
    classify_initial_data, phase_contour, threshold_curve_export, write_threshold_csv,
    ClassificationReport, Verdict,
};

/// Seeds of the random-bump family used by the tests and the acceptance run.
pub const RANDOM_BUMP_SEEDS: [u64; 4] = [11, 23, 47, 101];
pub const OVERLAY_SAMPLES: usize = 1001;
pub const DEFAULT_CELLS: usize = 4000;

/// `exp(-1 / (1 - x^2))` on `(-1, 1)`, zero elsewhere.
pub fn bump_init(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

/// C2 profile with an algebraic left tail `1/x^2`, a quintic bridge on
/// `(-3, 0]` and exponential decay `exp(-x)/9` on the right.
pub fn subcritical_init(x: f64) -> f64 {
    if x <= -3.0 {
        1.0 / (x * x)
    } else if x <= 0.0 {
        let p = ((((3.0 * x + 35.0) * x + 123.0) * x + 81.0) * x - 162.0) * x + 162.0;
        p / 1458.0
    } else {
        (-x).exp() / 9.0
    }
}

/// Mass of [`subcritical_init`] on `(-inf, x)`, for `x <= -3`.
fn subcritical_left_tail(x: f64) -> f64 {
    if x <= -3.0 {
        1.0 / x.abs()
    } else {
        f64::NAN
    }
}

/// A Gaussian-sum profile multiplied by a smooth compactly supported
/// cutoff, so the result is smooth, non-negative and compactly supported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomBumps {
    pub seed: u64,
    /// `(amplitude, centre, width)` of each Gaussian.
    pub modes: Vec<(f64, f64, f64)>,
    pub support: (f64, f64),
    scale: f64,
}

impl RandomBumps {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = rng.gen_range(1.0..3.0);
        let centre = rng.gen_range(-1.0..1.0);
        let k = rng.gen_range(1..=4);
        let modes = (0..k)
            .map(|_| {
                (
                    rng.gen_range(0.2..1.0),
                    centre + rng.gen_range(-0.6..0.6) * half,
                    rng.gen_range(0.2..0.6) * half,
                )
            })
            .collect();
        let peak = rng.gen_range(0.3..0.9);
        let mut bumps = Self {
            seed,
            modes,
            support: (centre - half, centre + half),
            scale: 1.0,
        };
        let (a, b) = bumps.support;
        let raw_max = (0..=2000)
            .map(|i| bumps.eval(a + (b - a) * i as f64 / 2000.0))
            .fold(0.0, f64::max);
        bumps.scale = peak / raw_max;
        bumps
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        let s = (2.0 * x - a - b) / (b - a);
        let cutoff = bump_init(s) * std::f64::consts::E;
        let sum: f64 = self
            .modes
            .iter()
            .map(|&(amp, c, w)| amp * (-((x - c) / w).powi(2)).exp())
            .sum();
        self.scale * cutoff * sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Bump,
    Subcritical,
    Random(RandomBumps),
}

/// A named initial profile with its recommended domain and expected verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialDatum {
    pub name: String,
    pub profile: Profile,
    pub domain: (f64, f64),
    pub expected: Verdict,
}

impl InitialDatum {
    pub fn bump() -> Self {
        Self {
            name: "bump".into(),
            profile: Profile::Bump,
            domain: (-6.0, 10.0),
            expected: Verdict::Supercritical,
        }
    }

    pub fn subinit() -> Self {
        Self {
            name: "subinit".into(),
            profile: Profile::Subcritical,
            domain: (-200.0, 40.0),
            expected: Verdict::Subcritical,
        }
    }

    pub fn random(seed: u64) -> Self {
        let bumps = RandomBumps::generate(seed);
        let (a, b) = bumps.support;
        Self {
            name: format!("random:{seed}"),
            profile: Profile::Random(bumps),
            domain: (a - 4.0, b + 8.0),
            expected: Verdict::Supercritical,
        }
    }

    /// `bump`, `subinit` or `random:<seed>`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "bump" => Ok(Self::bump()),
            "subinit" => Ok(Self::subinit()),
            _ => match name.strip_prefix("random:").map(str::parse::<u64>) {
                Some(Ok(seed)) => Ok(Self::random(seed)),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown datum `{name}`: expected bump | subinit | random:<seed>"
                ))),
            },
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.profile {
            Profile::Bump => bump_init(x),
            Profile::Subcritical => subcritical_init(x),
            Profile::Random(r) => r.eval(x),
        }
    }

    pub fn grid(&self, n_cells: usize) -> Result<GridSpec> {
        GridSpec::new(self.domain.0, self.domain.1, n_cells)
    }

    /// Point values at the cell centres of `grid`.
    pub fn sample(&self, grid: GridSpec) -> Result<GridFunction> {
        GridFunction::from_fn(grid, |x| self.eval(x))
    }

    /// Mass of the datum left of `x_left`, known in closed form for the
    /// catalog profiles.
    pub fn left_tail_mass(&self, x_left: f64) -> Result<f64> {
        match &self.profile {
            Profile::Subcritical if x_left <= -3.0 => Ok(subcritical_left_tail(x_left)),
            Profile::Subcritical => Err(Error::InvalidArgument(format!(
                "subinit needs x_left <= -3, got {x_left}"
            ))),
            Profile::Bump if x_left <= -1.0 => Ok(0.0),
            Profile::Random(r) if x_left <= r.support.0 => Ok(0.0),
            _ => Err(Error::InvalidArgument(format!(
                "domain starting at {x_left} cuts the support of `{}`",
                self.name
            ))),
        }
    }

    /// Solver settings for this datum on `grid`, with the left-tail mass
    /// accounted for.
    pub fn solver_config(&self, grid: GridSpec, kernel: Kernel, t_end: f64) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(grid, kernel, t_end);
        cfg.external_mass = self.left_tail_mass(grid.x_left())?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub datum: InitialDatum,
    /// Empty for the classification-only experiment.
    pub kernels: Vec<Kernel>,
    pub n_cells: usize,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub cfl: f64,
    pub flux_scheme: FluxScheme,
}

impl Experiment {
    pub fn supercritical_compare() -> Self {
        Self {
            name: "supercritical-compare".into(),
            datum: InitialDatum::bump(),
            kernels: Kernel::COMPARISON.to_vec(),
            n_cells: DEFAULT_CELLS,
            t_end: 4.0,
            snapshot_times: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            cfl: 0.45,
            flux_scheme: FluxScheme::Godunov,
        }
    }

    pub fn subcritical_compare() -> Self {
        Self {
            name: "subcritical-compare".into(),
            datum: InitialDatum::subinit(),
            kernels: Kernel::COMPARISON.to_vec(),
            n_cells: DEFAULT_CELLS,
            t_end: 20.0,
            snapshot_times: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            cfl: 0.45,
            flux_scheme: FluxScheme::Godunov,
        }
    }

    pub fn threshold_contour(datum: InitialDatum) -> Self {
        Self {
            name: "threshold-contour".into(),
            datum,
            kernels: Vec::new(),
            n_cells: DEFAULT_CELLS,
            t_end: 0.0,
            snapshot_times: Vec::new(),
            cfl: 0.45,
            flux_scheme: FluxScheme::Godunov,
        }
    }

    pub fn catalog() -> Vec<Self> {
        vec![
            Self::supercritical_compare(),
            Self::subcritical_compare(),
            Self::threshold_contour(InitialDatum::bump()),
        ]
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Self::catalog()
            .into_iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment `{name}`")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidArgument(format!("bad experiment name `{}`", self.name)));
        }
        if !self.kernels.is_empty() {
            self.config_for(self.kernels[0])?.validate()?;
        }
        let mut tags: Vec<String> = self.kernels.iter().map(Kernel::tag).collect();
        tags.sort();
        tags.dedup();
        if tags.len() != self.kernels.len() {
            return Err(Error::InvalidArgument("kernel list has duplicates".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        self.datum.grid(self.n_cells)
    }

    pub fn config_for(&self, kernel: Kernel) -> Result<SolverConfig> {
        let mut cfg = self.datum.solver_config(self.grid()?, kernel, self.t_end)?;
        cfg.snapshot_times = self.snapshot_times.clone();
        cfg.cfl = self.cfl;
        cfg.flux_scheme = self.flux_scheme;
        cfg.stop_on_blowup = false;
        Ok(cfg)
    }

    pub fn evolve_kernel(&self, kernel: Kernel) -> Result<Evolution> {
        let cfg = self.config_for(kernel)?;
        let u0 = self.datum.sample(cfg.grid)?;
        evolve(u0, &cfg).map_err(|e| e.with_context(format!("{} / kernel {kernel}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSummary {
    pub kernel: String,
    pub blowup: BlowupReport,
    pub max_mass_drift: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub steps: usize,
    pub initial_indicator: f64,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub classification: ClassificationReport,
    pub kernels: Vec<KernelSummary>,
    /// All files written, relative to the output root.
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    experiment: &'a str,
    datum: &'a InitialDatum,
    n_cells: usize,
    dx: f64,
    t_end: f64,
    snapshot_times: &'a [f64],
    cfl: f64,
    flux_scheme: FluxScheme,
    kernels: Vec<String>,
    external_mass: f64,
    blowup_gradient_factor: f64,
    blowup_min_growth: f64,
}

/// File name of the snapshot at time `t`.
pub fn snapshot_name(t: f64) -> String {
    format!("snap_t{t}.csv")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs `e` and writes its bundle under `root/<name>/`.
pub fn run_experiment(e: &Experiment, root: &Path) -> Result<ExperimentSummary> {
    e.validate()?;
    let ctx = |err: Error| err.with_context(format!("experiment {}", e.name));
    let dir = root.join(&e.name);
    fs::create_dir_all(&dir).map_err(|err| ctx(err.into()))?;
    let grid = e.grid()?;
    let u0 = e.datum.sample(grid)?;
    let rel = |p: &Path| p.strip_prefix(root).unwrap_or(p).to_path_buf();
    let mut files = Vec::new();

    let classification = classify_initial_data(&u0).map_err(ctx)?.report();
    let path = dir.join("classification.json");
    write_json(&path, &classification)?;
    files.push(rel(&path));

    let path = dir.join("contour.csv");
    {
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["x", "u0", "du0"])?;
        for (x, u, d) in phase_contour(&u0) {
            w.write_record([x.to_string(), u.to_string(), d.to_string()])?;
        }
        w.flush()?;
    }
    files.push(rel(&path));

    let path = dir.join("threshold_overlay.csv");
    write_threshold_csv(&threshold_curve_export(OVERLAY_SAMPLES)?, create(&path)?)?;
    files.push(rel(&path));

    let path = dir.join("metadata.json");
    let probe = e.datum.solver_config(grid, Kernel::Zero, e.t_end.max(1.0))?;
    write_json(
        &path,
        &Metadata {
            experiment: &e.name,
            datum: &e.datum,
            n_cells: e.n_cells,
            dx: grid.dx(),
            t_end: e.t_end,
            snapshot_times: &e.snapshot_times,
            cfl: e.cfl,
            flux_scheme: e.flux_scheme,
            kernels: e.kernels.iter().map(Kernel::tag).collect(),
            external_mass: probe.external_mass,
            blowup_gradient_factor: probe.blowup_gradient_factor,
            blowup_min_growth: probe.blowup_min_growth,
        },
    )?;
    files.push(rel(&path));

    let kernels = e
        .kernels
        .par_iter()
        .map(|&kernel| {
            let ev = e.evolve_kernel(kernel)?;
            let kdir = dir.join(format!("kernel_{}", kernel.tag()));
            fs::create_dir_all(&kdir)?;
            let mut kfiles = Vec::new();
            for snap in &ev.snapshots {
                let path = kdir.join(snapshot_name(snap.t));
                snap.u.write_csv(create(&path)?)?;
                kfiles.push(rel(&path));
            }
            let path = kdir.join("diagnostics.csv");
            ev.diagnostics.write_csv(create(&path)?)?;
            kfiles.push(rel(&path));
            let path = kdir.join("blowup.json");
            write_json(&path, &ev.diagnostics.blowup)?;
            kfiles.push(rel(&path));
            Ok(KernelSummary {
                kernel: kernel.to_string(),
                blowup: ev.diagnostics.blowup,
                max_mass_drift: ev.diagnostics.max_mass_drift,
                min_u: ev.diagnostics.min_u(),
                max_u: ev.diagnostics.max_u(),
                steps: ev.diagnostics.steps,
                initial_indicator: ev.diagnostics.initial_indicator,
                files: kfiles,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(ctx)?;
    for k in &kernels {
        files.extend(k.files.iter().cloned());
    }

    Ok(ExperimentSummary {
        name: e.name.clone(),
        classification,
        kernels,
        files,
    })
}
