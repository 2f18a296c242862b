//! First-order conservative finite-volume evolution of
//! `u_t + (u (1 - u) exp(-ubar))_x = 0` for any [`Kernel`].
//!
//! The nonlocal term is recomputed from the current cell values at every
//! stage and frozen inside the flux evaluation. Interface factors are the
//! mean of the two neighbouring cells, boundaries are zero-gradient.

mod flux;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use flux::{numerical_flux, wave_speed, FluxScheme};

use crate::error::{Error, Result};
use crate::nonlocal::{
    spatial_derivative, total_mass, ubar_into, GridFunction, GridSpec, Kernel, NonlocalField,
    DENSITY_TOL,
};

/// Cells at the right edge whose mass must be negligible for the infinite
/// kernel (it assumes vacuum beyond the grid).
pub const RIGHT_TAIL_CELLS: usize = 5;
pub const RIGHT_TAIL_MASS_TOL: f64 = 1e-8;
/// Slack on the factor bounds `exp(-m) <= factor <= 1`.
pub const FACTOR_BOUND_TOL: f64 = 1e-10;
/// `gradient_indicator` refuses profiles with `max |u|` below this.
pub const VACUUM_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStepping {
    /// Forward Euler; monotone under the CFL limit.
    ForwardEuler,
    /// Two-stage strong-stability-preserving Runge-Kutta (Heun).
    Ssp2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub kernel: Kernel,
    pub cfl: f64,
    pub t_end: f64,
    /// Sorted output times in `[0, t_end]`.
    pub snapshot_times: Vec<f64>,
    pub flux_scheme: FluxScheme,
    pub time_stepping: TimeStepping,
    /// Break-down is flagged once the gradient indicator reaches this
    /// fraction of `1/dx`...
    pub blowup_gradient_factor: f64,
    /// ...and has grown by this factor over its initial value.
    pub blowup_min_growth: f64,
    /// Stop at the first detected break-down instead of running to `t_end`.
    pub stop_on_blowup: bool,
    /// Mass known to lie outside the grid at `t = 0` (an analytic tail).
    pub external_mass: f64,
}

impl SolverConfig {
    pub fn new(grid: GridSpec, kernel: Kernel, t_end: f64) -> Self {
        Self {
            grid,
            kernel,
            cfl: 0.45,
            t_end,
            snapshot_times: Vec::new(),
            flux_scheme: FluxScheme::Godunov,
            time_stepping: TimeStepping::ForwardEuler,
            blowup_gradient_factor: 0.05,
            blowup_min_growth: 2.0,
            stop_on_blowup: true,
            external_mass: 0.0,
        }
    }

    pub fn with_snapshots(mut self, times: impl IntoIterator<Item = f64>) -> Self {
        self.snapshot_times = times.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.snapshot_times.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("snapshot times must be strictly increasing".into());
        }
        if self
            .snapshot_times
            .iter()
            .any(|&t| !(0.0..=self.t_end).contains(&t))
        {
            return bad(format!("snapshot times must lie in [0, {}]", self.t_end));
        }
        if !(self.blowup_gradient_factor > 0.0) || !(self.blowup_min_growth >= 1.0) {
            return bad("blow-up detector needs a positive factor and growth >= 1".into());
        }
        if !(self.external_mass >= 0.0) {
            return bad(format!("external mass must be non-negative, got {}", self.external_mass));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub t: f64,
    pub u: GridFunction,
    /// Nonlocal field of `u` at time `t`.
    pub nonlocal: NonlocalField,
    /// Mass outside the grid: the initial external mass plus whatever has
    /// crossed the boundaries since.
    pub external_mass: f64,
}

impl SolverState {
    pub fn new(u: GridFunction, config: &SolverConfig) -> Result<Self> {
        let nonlocal = nonlocal_field(&u, config.kernel, config.external_mass)?;
        Ok(Self {
            t: 0.0,
            u,
            nonlocal,
            external_mass: config.external_mass,
        })
    }

    /// Mass on the grid plus mass outside it; conserved by [`step`].
    pub fn total_mass(&self) -> f64 {
        total_mass(&self.u) + self.external_mass
    }
}

fn nonlocal_field(u: &GridFunction, kernel: Kernel, external_mass: f64) -> Result<NonlocalField> {
    let mut ubar = vec![0.0; u.values().len()];
    ubar_into(u.values(), u.dx(), kernel, external_mass, &mut ubar)?;
    let factor = ubar.iter().map(|b| (-b).exp()).collect();
    Ok(NonlocalField {
        ubar: GridFunction::new(*u.grid(), ubar)?,
        factor: GridFunction::new(*u.grid(), factor)?,
    })
}

/// Interface fluxes (interface `k` sits between cells `k-1` and `k`, ghosts
/// copy the edge cells) and the largest wave speed seen at any interface.
fn interface_fluxes(u: &[f64], factor: &[f64], scheme: FluxScheme) -> (Vec<f64>, f64) {
    let n = u.len();
    let mut fluxes = Vec::with_capacity(n + 1);
    let mut max_speed = 0.0_f64;
    for k in 0..=n {
        let (l, r) = (k.saturating_sub(1), k.min(n - 1));
        let c = 0.5 * (factor[l] + factor[r]);
        max_speed = max_speed.max(wave_speed(u[l], c)).max(wave_speed(u[r], c));
        fluxes.push(numerical_flux(u[l], u[r], c, scheme));
    }
    (fluxes, max_speed)
}

/// Conservative update. Also returns the net mass that left the grid.
fn apply_fluxes(u: &[f64], fluxes: &[f64], lambda: f64, dt: f64) -> (Vec<f64>, f64) {
    let n = u.len();
    let next = (0..n)
        .map(|i| u[i] - lambda * (fluxes[i + 1] - fluxes[i]))
        .collect();
    (next, dt * (fluxes[n] - fluxes[0]))
}

/// Advances by one CFL-limited step, never past `t_end`.
pub fn step(state: &SolverState, config: &SolverConfig) -> Result<SolverState> {
    step_until(state, config, config.t_end)
}

fn step_until(state: &SolverState, config: &SolverConfig, t_limit: f64) -> Result<SolverState> {
    let dx = config.grid.dx();
    let u = state.u.values();
    let (fluxes, max_speed) =
        interface_fluxes(u, state.nonlocal.factor.values(), config.flux_scheme);
    let mut dt = config.cfl * dx / max_speed.max(1e-12);
    let mut t_new = state.t + dt;
    if t_new >= t_limit {
        dt = t_limit - state.t;
        t_new = t_limit;
    }
    if !(dt > 0.0) || dt * max_speed / dx > 1.0 + 1e-12 {
        return Err(Error::Numerical {
            t: state.t,
            reason: format!("bad time step {dt} (CFL number {})", dt * max_speed / dx),
            dump: Some(u.to_vec()),
        });
    }
    let lambda = dt / dx;

    let (values, net_out) = match config.time_stepping {
        TimeStepping::ForwardEuler => apply_fluxes(u, &fluxes, lambda, dt),
        TimeStepping::Ssp2 => {
            let (stage, out1) = apply_fluxes(u, &fluxes, lambda, dt);
            check_finite(&stage, state.t)?;
            let stage_u = GridFunction::new(config.grid, stage)?;
            let stage_field =
                nonlocal_field(&stage_u, config.kernel, state.external_mass + out1)?;
            let (f2, _) = interface_fluxes(
                stage_u.values(),
                stage_field.factor.values(),
                config.flux_scheme,
            );
            let (second, out2) = apply_fluxes(stage_u.values(), &f2, lambda, dt);
            let next = u.iter().zip(&second).map(|(a, b)| 0.5 * (a + b)).collect();
            (next, 0.5 * (out1 + out2))
        }
    };
    check_finite(&values, state.t)?;
    let external_mass = state.external_mass + net_out;
    let u_new = GridFunction::new(config.grid, values)?;
    let nonlocal = nonlocal_field(&u_new, config.kernel, external_mass)?;
    Ok(SolverState {
        t: t_new,
        u: u_new,
        nonlocal,
        external_mass,
    })
}

fn check_finite(values: &[f64], t: f64) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            t,
            reason: format!("non-finite value in cell {i}"),
            dump: Some(values.to_vec()),
        });
    }
    Ok(())
}

/// `max |u_x| / max |u|`, with `u_x` from [`spatial_derivative`].
pub fn gradient_indicator(u: &GridFunction) -> Result<f64> {
    let scale = u.max_abs();
    if scale <= VACUUM_TOL {
        return Err(Error::InvalidArgument(
            "gradient indicator undefined for a vacuum state".into(),
        ));
    }
    Ok(spatial_derivative(u).max_abs() / scale)
}

/// Largest `x` where the profile crosses `level`, linearly interpolated
/// between cell centres.
pub fn front_position(u: &GridFunction, level: f64) -> Result<f64> {
    let v = u.values();
    let grid = u.grid();
    if !(level > 0.0 && level < u.max()) {
        return Err(Error::InvalidArgument(format!(
            "level {level} not attained (max u = {})",
            u.max()
        )));
    }
    let i = v
        .iter()
        .rposition(|&x| x >= level)
        .expect("level below the maximum");
    if i + 1 == v.len() {
        return Ok(grid.center(i));
    }
    let w = (v[i] - level) / (v[i] - v[i + 1]);
    Ok(grid.center(i) + w * grid.dx())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub mass: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub grad_indicator: f64,
    pub factor_min: f64,
    pub factor_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub detected: bool,
    /// First time the detector fired; `NaN` (`null` in JSON) when it did not.
    pub t_detect: f64,
    /// Largest gradient indicator seen.
    pub max_gradient: f64,
    /// Whether the indicator reached `blowup_gradient_factor / dx` at all.
    pub grid_resolved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub records: Vec<DiagnosticRecord>,
    pub blowup: BlowupReport,
    /// Largest change of the conserved total mass over a single step.
    pub max_mass_drift: f64,
    /// Conserved total mass at `t = 0`.
    pub initial_mass: f64,
    pub initial_indicator: f64,
    pub steps: usize,
}

impl Diagnostics {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "mass",
            "min_u",
            "max_u",
            "grad_indicator",
            "factor_min",
            "factor_max",
        ])?;
        for r in &self.records {
            w.write_record(
                [
                    r.t,
                    r.mass,
                    r.min_u,
                    r.max_u,
                    r.grad_indicator,
                    r.factor_min,
                    r.factor_max,
                ]
                .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn min_u(&self) -> f64 {
        self.records.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min)
    }

    pub fn max_u(&self) -> f64 {
        self.records.iter().map(|r| r.max_u).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indicator value at (the last record at or before) time `t`.
    pub fn indicator_at(&self, t: f64) -> Option<f64> {
        self.records
            .iter()
            .take_while(|r| r.t <= t + 1e-12)
            .last()
            .map(|r| r.grad_indicator)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: GridFunction,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Diagnostics,
    pub final_state: SolverState,
}

fn record(state: &SolverState) -> DiagnosticRecord {
    let f = &state.nonlocal.factor;
    DiagnosticRecord {
        t: state.t,
        mass: state.total_mass(),
        min_u: state.u.min(),
        max_u: state.u.max(),
        grad_indicator: gradient_indicator(&state.u).unwrap_or(0.0),
        factor_min: f.min(),
        factor_max: f.max(),
    }
}

/// Maximum principle and `exp(-m) <= factor <= 1`, with `m` the bound on
/// `ubar`.
fn check_invariants(state: &SolverState, m: f64) -> Result<()> {
    let fail = |reason: String| {
        Err(Error::Numerical {
            t: state.t,
            reason,
            dump: Some(state.u.values().to_vec()),
        })
    };
    let (lo, hi) = (state.u.min(), state.u.max());
    if lo < -DENSITY_TOL || hi > 1.0 + DENSITY_TOL {
        return fail(format!("maximum principle violated: u in [{lo}, {hi}]"));
    }
    let f = &state.nonlocal.factor;
    let floor = (-m).exp() - FACTOR_BOUND_TOL;
    if f.min() < floor || f.max() > 1.0 + FACTOR_BOUND_TOL {
        return fail(format!(
            "factor bounds violated: [{}, {}] not within [exp(-{m}), 1]",
            f.min(),
            f.max()
        ));
    }
    Ok(())
}

/// Evolves `u0` to `config.t_end` (or to the first detected break-down when
/// `stop_on_blowup` is set), recording diagnostics after every step.
pub fn evolve(u0: GridFunction, config: &SolverConfig) -> Result<Evolution> {
    config.validate()?;
    if *u0.grid() != config.grid {
        return Err(Error::InvalidArgument(
            "initial data and solver config use different grids".into(),
        ));
    }
    u0.check_density()?;
    if config.kernel == Kernel::Infinite {
        let n = u0.values().len();
        let tail: f64 = u0.dx() * u0.values()[n - RIGHT_TAIL_CELLS..].iter().sum::<f64>();
        if tail > RIGHT_TAIL_MASS_TOL {
            return Err(Error::InvalidArgument(format!(
                "right-edge mass {tail:e} exceeds {RIGHT_TAIL_MASS_TOL:e}; \
                 extend the domain for the infinite look-ahead kernel"
            )));
        }
    }

    let dx = config.grid.dx();
    let mut state = SolverState::new(u0, config)?;
    let initial_mass = state.total_mass();
    let ubar_bound = config.kernel.max_weight().max(1.0) * initial_mass;
    check_invariants(&state, ubar_bound)?;

    let first = record(&state);
    let initial_indicator = first.grad_indicator;
    let threshold = config.blowup_gradient_factor / dx;
    let fires = |ind: f64| ind >= threshold && ind >= config.blowup_min_growth * initial_indicator;

    let mut blowup = BlowupReport {
        detected: fires(initial_indicator) && initial_indicator > 0.0,
        t_detect: f64::NAN,
        max_gradient: initial_indicator,
        grid_resolved: initial_indicator >= threshold,
    };
    if blowup.detected {
        blowup.t_detect = 0.0;
    }
    let mut records = vec![first];
    let mut snapshots = Vec::new();
    let mut pending = config.snapshot_times.iter().copied().peekable();
    while let Some(&t) = pending.peek() {
        if t > 0.0 {
            break;
        }
        snapshots.push(Snapshot {
            t,
            u: state.u.clone(),
        });
        pending.next();
    }

    let mut max_mass_drift = 0.0_f64;
    let mut steps = 0;
    while state.t < config.t_end && !(config.stop_on_blowup && blowup.detected) {
        let t_limit = pending.peek().copied().unwrap_or(config.t_end);
        let before = state.total_mass();
        state = step_until(&state, config, t_limit)?;
        steps += 1;
        max_mass_drift = max_mass_drift.max((state.total_mass() - before).abs());
        check_invariants(&state, ubar_bound)?;

        let rec = record(&state);
        blowup.max_gradient = blowup.max_gradient.max(rec.grad_indicator);
        blowup.grid_resolved |= rec.grad_indicator >= threshold;
        if !blowup.detected && fires(rec.grad_indicator) {
            blowup.detected = true;
            blowup.t_detect = state.t;
        }
        records.push(rec);

        while let Some(&t) = pending.peek() {
            if t > state.t {
                break;
            }
            snapshots.push(Snapshot {
                t,
                u: state.u.clone(),
            });
            pending.next();
        }
    }

    Ok(Evolution {
        snapshots,
        diagnostics: Diagnostics {
            records,
            blowup,
            max_mass_drift,
            initial_mass,
            initial_indicator,
            steps,
        },
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(x: f64) -> f64 {
        if x.abs() < 1.0 {
            (-1.0 / (1.0 - x * x)).exp()
        } else {
            0.0
        }
    }

    #[test]
    fn vacuum_is_a_fixed_point() {
        let g = GridSpec::new(0.0, 1.0, 40).unwrap();
        let cfg = SolverConfig::new(g, Kernel::Infinite, 1.0);
        let s = SolverState::new(GridFunction::constant(g, 0.0).unwrap(), &cfg).unwrap();
        let next = step(&s, &cfg).unwrap();
        assert!(next.u.values().iter().all(|&v| v == 0.0));
        assert!(next.t > 0.0);
    }

    #[test]
    fn jam_is_a_fixed_point_for_lwr() {
        let g = GridSpec::new(0.0, 1.0, 40).unwrap();
        for scheme in [FluxScheme::Godunov, FluxScheme::LocalLaxFriedrichs] {
            let mut cfg = SolverConfig::new(g, Kernel::Zero, 1.0);
            cfg.flux_scheme = scheme;
            let s = SolverState::new(GridFunction::constant(g, 1.0).unwrap(), &cfg).unwrap();
            let next = step(&s, &cfg).unwrap();
            assert!(next.u.values().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn step_conserves_mass() {
        let g = GridSpec::new(-3.0, 3.0, 300).unwrap();
        for kernel in [Kernel::Zero, Kernel::SkUnit, Kernel::Infinite, Kernel::Uniform, Kernel::Linear] {
            let cfg = SolverConfig::new(g, kernel, 1.0);
            let u = GridFunction::from_fn(g, bump).unwrap();
            let s = SolverState::new(u, &cfg).unwrap();
            let next = step(&s, &cfg).unwrap();
            let drift = (total_mass(&next.u) - total_mass(&s.u)).abs();
            assert!(drift <= 1e-12 * 300.0, "{kernel}: {drift}");
        }
    }

    #[test]
    fn ssp2_keeps_bounds() {
        let g = GridSpec::new(-3.0, 5.0, 400).unwrap();
        let mut cfg = SolverConfig::new(g, Kernel::Infinite, 1.5);
        cfg.time_stepping = TimeStepping::Ssp2;
        cfg.stop_on_blowup = false;
        let ev = evolve(GridFunction::from_fn(g, bump).unwrap(), &cfg).unwrap();
        assert!(ev.diagnostics.min_u() >= -DENSITY_TOL);
        assert!(ev.diagnostics.max_u() <= 1.0 + DENSITY_TOL);
        assert!(ev.diagnostics.max_mass_drift < 1e-12 * 400.0);
    }

    #[test]
    fn indicator_properties() {
        let g = GridSpec::new(-3.0, 3.0, 300).unwrap();
        let u = GridFunction::from_fn(g, bump).unwrap();
        let half = GridFunction::from_fn(g, |x| 0.5 * bump(x)).unwrap();
        let (a, b) = (gradient_indicator(&u).unwrap(), gradient_indicator(&half).unwrap());
        assert!((a - b).abs() < 1e-12 * a);
        assert!(gradient_indicator(&GridFunction::constant(g, 0.3).unwrap()).unwrap() < 1e-12);
        assert!(gradient_indicator(&GridFunction::constant(g, 0.0).unwrap()).is_err());
    }

    #[test]
    fn front_of_a_box() {
        let g = GridSpec::new(-2.0, 3.0, 500).unwrap();
        let boxed = |shift: f64| {
            GridFunction::from_fn(g, move |x| if (shift..1.0 + shift).contains(&x) { 1.0 } else { 0.0 })
                .unwrap()
        };
        let p = front_position(&boxed(0.0), 0.5).unwrap();
        assert!((p - 1.0).abs() <= g.dx());
        let q = front_position(&boxed(0.7), 0.5).unwrap();
        assert!((q - p - 0.7).abs() <= 1e-9 + g.dx() * 1e-6, "{p} {q}");
        assert!(front_position(&boxed(0.0), 1.5).is_err());
        assert!(front_position(&boxed(0.0), 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let g = GridSpec::new(0.0, 1.0, 10).unwrap();
        let mut cfg = SolverConfig::new(g, Kernel::Zero, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.cfl = 1.5;
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig::new(g, Kernel::Zero, 1.0).with_snapshots([0.5, 0.2]);
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig::new(g, Kernel::Zero, 1.0).with_snapshots([0.0, 2.0]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn infinite_kernel_requires_quiet_right_edge() {
        let g = GridSpec::new(0.0, 1.0, 20).unwrap();
        let cfg = SolverConfig::new(g, Kernel::Infinite, 0.1);
        let err = evolve(GridFunction::constant(g, 0.2).unwrap(), &cfg).unwrap_err();
        assert!(err.to_string().contains("right-edge mass"), "{err}");
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let g = GridSpec::new(-3.0, 5.0, 200).unwrap();
        let mut cfg = SolverConfig::new(g, Kernel::SkUnit, 1.0).with_snapshots([0.0, 0.25, 0.5, 1.0]);
        cfg.stop_on_blowup = false;
        let ev = evolve(GridFunction::from_fn(g, bump).unwrap(), &cfg).unwrap();
        let times: Vec<f64> = ev.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 1.0]);
        assert_eq!(ev.final_state.t, 1.0);
        let mut buf = Vec::new();
        ev.diagnostics.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,mass,min_u,max_u,grad_indicator,factor_min,factor_max\n"));
    }
}
