use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nltraffic_core::characteristics::{
    analytic_bounds, integrate_characteristic, phase_trajectory, CharState, FactorModel,
    DEFAULT_BLOWUP_CAP,
};
use nltraffic_core::nonlocal::{GridFunction, Kernel};
use nltraffic_core::scenarios::{run_experiment, snapshot_name, Experiment, InitialDatum};
use nltraffic_core::solver::evolve;
use nltraffic_core::threshold::{
    classify_initial_data, phase_contour, sigma_eval, threshold_curve_export,
    write_threshold_csv, Verdict,
};
use serde::Serialize;

use crate::{CliError, Command, RunConfig};

pub const EXIT_OK: i32 = 0;
/// I/O and other failures that are neither bad input nor bad numerics.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Phase paths are traced down to this fraction of `u0`.
const PHASE_PATH_FLOOR: f64 = 1e-3;

#[derive(Serialize)]
struct Manifest<'a> {
    command: Command,
    config: &'a RunConfig,
    files: Vec<String>,
}

/// Collects output files relative to the output directory.
struct Bundle {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Bundle {
    fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, rel: impl AsRef<Path>) -> Result<BufWriter<File>, CliError> {
        let path = self.root.join(rel.as_ref());
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(rel.as_ref().to_path_buf());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<String, CliError> {
        let text = serde_json::to_string_pretty(value).map_err(nltraffic_core::Error::from)? + "\n";
        self.create(rel)?.write_all(text.as_bytes())?;
        Ok(text)
    }

    fn finish(mut self, config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
        self.files.sort();
        self.files.dedup();
        let files = self
            .files
            .iter()
            .map(|p| p.to_string_lossy().replace('\\', "/"))
            .collect();
        let manifest = Manifest {
            command: config.command,
            config,
            files,
        };
        self.json("manifest.json", &manifest)?;
        Ok(self.files)
    }
}

fn datum(config: &RunConfig) -> Result<InitialDatum, CliError> {
    let mut d = InitialDatum::by_name(&config.datum_name())?;
    if let Some(a) = config.x_left {
        d.domain.0 = a;
    }
    if let Some(b) = config.x_right {
        d.domain.1 = b;
    }
    if !(d.domain.0 < d.domain.1) {
        return Err(CliError::Usage(format!(
            "empty domain [{}, {}] for datum `{}`",
            d.domain.0, d.domain.1, d.name
        )));
    }
    Ok(d)
}

/// `0, 1, 2, ...` up to `t_end`, plus `t_end` itself.
fn snapshot_times(t_end: f64) -> Vec<f64> {
    let mut times: Vec<f64> = (0..).map(f64::from).take_while(|&t| t < t_end).collect();
    times.push(t_end);
    times
}

fn csv_rows<W: Write, const N: usize>(
    out: W,
    header: [&str; N],
    rows: impl IntoIterator<Item = [String; N]>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(nltraffic_core::Error::from)?;
    for row in rows {
        w.write_record(&row).map_err(nltraffic_core::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn classify(config: &RunConfig, bundle: &mut Bundle) -> Result<(), CliError> {
    let d = datum(config)?;
    let u0 = d.sample(d.grid(config.n_cells)?)?;
    let report = classify_initial_data(&u0)?.report();
    let text = bundle.json("classification.json", &report)?;
    csv_rows(
        bundle.create("contour.csv")?,
        ["x", "u0", "du0"],
        phase_contour(&u0)
            .into_iter()
            .map(|(x, u, du)| [x.to_string(), u.to_string(), du.to_string()]),
    )?;
    print!("{text}");
    Ok(())
}

fn write_evolution(
    bundle: &mut Bundle,
    dir: &str,
    snapshots: &[(f64, &GridFunction)],
    ev: &nltraffic_core::solver::Evolution,
) -> Result<(), CliError> {
    for (t, u) in snapshots {
        u.write_csv(bundle.create(format!("{dir}/{}", snapshot_name(*t)))?)?;
    }
    ev.diagnostics
        .write_csv(bundle.create(format!("{dir}/diagnostics.csv"))?)?;
    bundle.json(&format!("{dir}/blowup.json"), &ev.diagnostics.blowup)?;
    Ok(())
}

fn evolve_one(config: &RunConfig, bundle: &mut Bundle) -> Result<(), CliError> {
    let d = datum(config)?;
    let grid = d.grid(config.n_cells)?;
    let mut cfg = d.solver_config(grid, config.kernel, config.t_end)?;
    cfg.cfl = config.cfl;
    cfg.flux_scheme = config.flux;
    cfg.stop_on_blowup = false;
    cfg.snapshot_times = snapshot_times(config.t_end);
    let ev = evolve(d.sample(grid)?, &cfg)?;
    let snaps: Vec<_> = ev.snapshots.iter().map(|s| (s.t, &s.u)).collect();
    write_evolution(bundle, &format!("kernel_{}", config.kernel.tag()), &snaps, &ev)?;
    let b = ev.diagnostics.blowup;
    println!(
        "{} / {}: steps {}, break-down {}, max indicator {:.4}",
        d.name,
        config.kernel,
        ev.diagnostics.steps,
        if b.detected { format!("at t = {}", b.t_detect) } else { "not detected".into() },
        b.max_gradient
    );
    Ok(())
}

fn compare_kernels(config: &RunConfig, bundle: &mut Bundle) -> Result<(), CliError> {
    let e = Experiment {
        name: "compare-kernels".into(),
        datum: datum(config)?,
        kernels: Kernel::COMPARISON.to_vec(),
        n_cells: config.n_cells,
        t_end: config.t_end,
        snapshot_times: snapshot_times(config.t_end),
        cfl: config.cfl,
        flux_scheme: config.flux,
    };
    let summary = run_experiment(&e, &bundle.root)?;
    bundle.files.extend(summary.files.iter().cloned());
    for k in &summary.kernels {
        let b = k.blowup;
        println!(
            "{:>8}: break-down {}, max indicator {:.4}",
            k.kernel,
            if b.detected { format!("at t = {:.4}", b.t_detect) } else { "not detected".into() },
            b.max_gradient
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Portrait {
    d0: f64,
    u0: f64,
    m: f64,
    factor: f64,
    verdict: Verdict,
    sigma_u0: f64,
    blowup_time: Option<f64>,
    blowup_at_u: Option<f64>,
}

fn phase_portrait(config: &RunConfig, bundle: &mut Bundle) -> Result<(), CliError> {
    let (d0, u0) = (config.d0.unwrap_or_default(), config.u0.unwrap_or_default());
    let factor = (-config.m).exp();
    let path = integrate_characteristic(
        CharState::new(d0, u0),
        &FactorModel::Constant(factor),
        config.t_end,
        DEFAULT_BLOWUP_CAP,
    )?;
    csv_rows(
        bundle.create("trajectory.csv")?,
        ["t", "d", "u"],
        path.samples
            .iter()
            .map(|s| [s.t.to_string(), s.d.to_string(), s.u.to_string()]),
    )?;
    let mut blowup_at_u = None;
    if u0 > 0.0 && u0 < 1.0 {
        let phase = phase_trajectory(d0, u0, u0 * PHASE_PATH_FLOOR)?;
        blowup_at_u = phase.blowup_at_u;
        csv_rows(
            bundle.create("phase_path.csv")?,
            ["u", "d"],
            phase.samples.iter().map(|(u, d)| [u.to_string(), d.to_string()]),
        )?;
    }
    write_threshold_csv(&threshold_curve_export(1001)?, bundle.create("threshold_overlay.csv")?)?;
    let sigma_u0 = sigma_eval(u0)?;
    let text = bundle.json(
        "portrait.json",
        &Portrait {
            d0,
            u0,
            m: config.m,
            factor,
            verdict: if d0 > sigma_u0 { Verdict::Supercritical } else { Verdict::Subcritical },
            sigma_u0,
            blowup_time: path.blowup_time,
            blowup_at_u,
        },
    )?;
    print!("{text}");
    Ok(())
}

fn threshold_curve(config: &RunConfig, bundle: &mut Bundle) -> Result<(), CliError> {
    let samples = threshold_curve_export(config.samples)?;
    write_threshold_csv(&samples, bundle.create("threshold.csv")?)?;
    println!("{} samples written", samples.len());
    Ok(())
}

fn bounds(config: &RunConfig, bundle: &mut Bundle) -> Result<(), CliError> {
    let b = analytic_bounds(config.d0.unwrap_or_default(), config.u0.unwrap_or_default(), config.m)?;
    print!("{}", bundle.json("bounds.json", &b)?);
    Ok(())
}

/// Runs the subcommand and writes its bundle; returns the files written,
/// relative to `config.out`, manifest included.
pub fn run(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut bundle = Bundle::new(&config.out)?;
    match config.command {
        Command::Classify => classify(config, &mut bundle)?,
        Command::Evolve => evolve_one(config, &mut bundle)?,
        Command::CompareKernels => compare_kernels(config, &mut bundle)?,
        Command::PhasePortrait => phase_portrait(config, &mut bundle)?,
        Command::ThresholdCurve => threshold_curve(config, &mut bundle)?,
        Command::Bounds => bounds(config, &mut bundle)?,
    }
    bundle.finish(config)
}

fn write_dump(out: &Path, values: &[f64]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out)?;
    let path = out.join("failure_dump.csv");
    csv_rows(
        BufWriter::new(File::create(&path)?),
        ["i", "u"],
        values.iter().enumerate().map(|(i, v)| [i.to_string(), v.to_string()]),
    )?;
    Ok(path)
}

/// Exit code for a failed run.
pub fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
        CliError::Usage(_) | CliError::Core(_) => EXIT_VALIDATION,
        CliError::Io(_) => EXIT_FAILURE,
    }
}

/// Runs `config` and maps the outcome to an exit code, reporting on stderr.
pub fn dispatch(config: &RunConfig) -> i32 {
    let e = match run(config) {
        Ok(_) => return EXIT_OK,
        Err(e) => e,
    };
    let code = exit_code(&e);
    match &e {
        CliError::Core(core) if code == EXIT_NUMERICAL => {
            eprintln!("numerical failure: {core}");
            match core.dump().map(|v| write_dump(&config.out, v)) {
                Some(Ok(path)) => eprintln!("last state dumped to {}", path.display()),
                Some(Err(err)) => eprintln!("could not write the state dump: {err}"),
                None => eprintln!("no state dump available"),
            }
        }
        _ => eprintln!("error: {e}"),
    }
    code
}
