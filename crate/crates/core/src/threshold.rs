//! The critical threshold `d = sigma(u)` separating global smooth solutions
//! from finite-time break-down for the infinite look-ahead kernel, and the
//! classifier of initial data against it.
//!
//! `sigma` solves
//!
//! ```text
//! sigma'(x) = (2 sigma^2 - (3x - 5x^2) sigma - x^3 (1 - x)) / (-x^2 (1 - x)),  sigma(0) = 0,
//! ```
//!
//! which is `0/0` at both ends. The curve is tabulated by RK4 from a series
//! seed `sigma(x0) = x0 - x0^2` near the origin. The closed form
//! `u (1 - u)` is checked against the defining equation through its
//! residual and, once it passes, is used for evaluation.

use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlocal::{spatial_derivative, GridFunction};
use crate::ode::rk4_step;

/// Table intervals on `[0, 1]`.
pub const TABLE_INTERVALS: usize = 10_000;
/// Start of the numerical integration; nodes below it use the series.
pub const SERIES_SEED: f64 = 1e-3;
/// Dead band between `<=` (subcritical) and `>` (supercritical).
pub const CLASSIFIER_MARGIN: f64 = 1e-10;
/// `sigma_residual` refuses points this close to 0 or 1.
pub const RESIDUAL_EDGE: f64 = 1e-6;
/// Step of the central difference used when no derivative is supplied.
pub const RESIDUAL_FD_STEP: f64 = 1e-6;
/// Residual below which a candidate closed form is accepted.
pub const CLOSED_FORM_TOL: f64 = 1e-9;
/// Lower floor for the boost level `u2`.
pub const BOOST_FLOOR: f64 = 0.2;
/// Largest jump between neighbouring cells accepted by the classifier.
pub const MAX_ADJACENT_JUMP: f64 = 0.5;

/// Numerator of the threshold ODE, `2 s^2 - (3u - 5u^2) s - u^3 (1 - u)`.
pub fn threshold_numerator(u: f64, s: f64) -> f64 {
    2.0 * s * s - (3.0 * u - 5.0 * u * u) * s - u * u * u * (1.0 - u)
}

/// Right side of the trajectory ODE `d'(u)`; `0/0` at `u = 0` and `u = 1`.
pub fn trajectory_slope(u: f64, d: f64) -> f64 {
    threshold_numerator(u, d) / (-u * u * (1.0 - u))
}

/// Slope used while tabulating. At the endpoints the quotient is replaced by
/// the slope of the regular solution there: `sigma'(0) = 1`, `sigma'(1) = -1`.
fn tabulation_slope(x: f64, s: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        -1.0
    } else {
        trajectory_slope(x, s)
    }
}

/// Candidate closed form for the threshold.
pub fn sigma_closed_form(u: f64) -> f64 {
    u * (1.0 - u)
}

/// Residual of `candidate` in the threshold ODE at `u`.
///
/// The derivative is taken from `derivative` when given, otherwise by a
/// central difference of step [`RESIDUAL_FD_STEP`].
pub fn sigma_residual(
    candidate: &dyn Fn(f64) -> f64,
    derivative: Option<&dyn Fn(f64) -> f64>,
    u: f64,
) -> Result<f64> {
    if !(RESIDUAL_EDGE..=1.0 - RESIDUAL_EDGE).contains(&u) {
        return Err(Error::InvalidArgument(format!(
            "residual point {u} is within {RESIDUAL_EDGE} of the singular endpoints"
        )));
    }
    let slope = match derivative {
        Some(d) => d(u),
        None => {
            let h = RESIDUAL_FD_STEP;
            (candidate(u + h) - candidate(u - h)) / (2.0 * h)
        }
    };
    Ok(slope - trajectory_slope(u, candidate(u)))
}

/// The tabulated threshold curve.
#[derive(Debug, Clone)]
pub struct ThresholdCurve {
    /// `(u, sigma(u))` on `TABLE_INTERVALS + 1` uniform nodes of `[0, 1]`.
    table: Vec<(f64, f64)>,
    closed_form_verified: bool,
    /// Largest residual of the closed form seen during verification.
    closed_form_residual: f64,
    boost_level: f64,
}

impl ThresholdCurve {
    /// Tabulates the curve and verifies the closed form.
    pub fn build() -> Self {
        let n = TABLE_INTERVALS;
        let h = 1.0 / n as f64;
        let seed_node = (SERIES_SEED / h).round() as usize;
        let mut table = Vec::with_capacity(n + 1);
        for k in 0..=seed_node {
            let x = k as f64 * h;
            table.push((x, x - x * x));
        }
        let mut s = [table[seed_node].1];
        for k in seed_node..n {
            let x = k as f64 * h;
            s = rk4_step(|x, s: &[f64; 1]| [tabulation_slope(x, s[0])], x, &s, h);
            let x_next = if k + 1 == n { 1.0 } else { (k + 1) as f64 * h };
            table.push((x_next, s[0]));
        }

        let mut worst = 0.0_f64;
        let mut u = 0.01;
        while u <= 0.99 + 1e-12 {
            let r = sigma_residual(&sigma_closed_form, Some(&|u| 1.0 - 2.0 * u), u)
                .expect("inside residual range");
            worst = worst.max(r.abs());
            u += 1e-3;
        }
        for u in [RESIDUAL_EDGE, 1e-4, 1e-2, 0.5, 1.0 - 1e-4, 1.0 - RESIDUAL_EDGE] {
            let r = sigma_residual(&sigma_closed_form, None, u).expect("inside residual range");
            worst = worst.max(r.abs());
        }

        let mut curve = Self {
            table,
            closed_form_verified: worst <= CLOSED_FORM_TOL,
            closed_form_residual: worst,
            boost_level: 0.0,
        };
        curve.boost_level = curve.scan_boost_level();
        curve
    }

    /// Process-wide curve, built on first use.
    pub fn global() -> &'static ThresholdCurve {
        static CURVE: OnceLock<ThresholdCurve> = OnceLock::new();
        CURVE.get_or_init(ThresholdCurve::build)
    }

    pub fn table(&self) -> &[(f64, f64)] {
        &self.table
    }

    pub fn closed_form_verified(&self) -> bool {
        self.closed_form_verified
    }

    pub fn closed_form_residual(&self) -> f64 {
        self.closed_form_residual
    }

    /// Largest `u2` with `sigma(u) >= 3u/4` on `[0, u2]`, floored at
    /// [`BOOST_FLOOR`].
    pub fn boost_level(&self) -> f64 {
        self.boost_level
    }

    /// `sigma(u)`; the verified closed form when available, the table otherwise.
    pub fn eval(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        Ok(if self.closed_form_verified {
            sigma_closed_form(u)
        } else {
            self.interpolate(u)
        })
    }

    /// Cubic (four-point Lagrange) interpolation of the table.
    pub fn interpolate(&self, u: f64) -> f64 {
        let n = self.table.len() - 1;
        let h = 1.0 / n as f64;
        let k = ((u / h).floor() as usize).min(n - 1);
        let start = k.saturating_sub(1).min(n - 3);
        let nodes = &self.table[start..start + 4];
        let mut acc = 0.0;
        for (j, &(xj, yj)) in nodes.iter().enumerate() {
            let mut w = 1.0;
            for (m, &(xm, _)) in nodes.iter().enumerate() {
                if m != j {
                    w *= (u - xm) / (xj - xm);
                }
            }
            acc += w * yj;
        }
        acc
    }

    fn scan_boost_level(&self) -> f64 {
        let g = |u: f64| self.eval(u).expect("node in [0, 1]") - 0.75 * u;
        let mut prev = 0.0;
        for &(u, _) in self.table.iter().skip(1) {
            if g(u) < 0.0 {
                // Refine the crossing inside (prev, u].
                let (mut a, mut b) = (prev, u);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if g(m) >= 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return a.max(BOOST_FLOOR);
            }
            prev = u;
        }
        1.0
    }
}

fn check_unit(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "density {u} outside [0, 1]"
        )))
    }
}

/// `sigma(u)` on the shared curve.
pub fn sigma_eval(u: f64) -> Result<f64> {
    ThresholdCurve::global().eval(u)
}

/// `n_samples` uniform samples `(u, sigma(u))` of `[0, 1]`, endpoints included.
pub fn threshold_curve_export(n_samples: usize) -> Result<Vec<(f64, f64)>> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    let curve = ThresholdCurve::global();
    (0..n_samples)
        .map(|k| {
            let u = if k + 1 == n_samples {
                1.0
            } else {
                k as f64 / (n_samples - 1) as f64
            };
            Ok((u, curve.eval(u)?))
        })
        .collect()
}

/// Writes `u,sigma` rows.
pub fn write_threshold_csv<W: Write>(samples: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["u", "sigma"])?;
    for (u, s) in samples {
        w.write_record([u.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Subcritical,
    Supercritical,
}

/// Point where `u0'` exceeds `sigma(u0)` the most.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x0: f64,
    pub u0: f64,
    pub d0: f64,
    /// `d0 - sigma(u0)`, positive.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// `min_x (sigma(u0(x)) - u0'(x))`; non-negative up to the dead band
    /// when subcritical.
    pub min_margin: f64,
    /// Subcritical only because the largest excess fell inside the dead band.
    pub in_dead_band: bool,
    /// The point closest to (or furthest beyond) the threshold.
    pub closest: Witness,
}

/// JSON form of a classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub x0: f64,
    pub u0_at_x0: f64,
    pub d0_at_x0: f64,
    pub margin: f64,
}

impl Classification {
    /// The report always names the point of largest `u0' - sigma(u0)`; its
    /// margin is positive exactly for supercritical data.
    pub fn report(&self) -> ClassificationReport {
        let w = self.witness.unwrap_or(self.closest);
        ClassificationReport {
            verdict: self.verdict,
            x0: w.x0,
            u0_at_x0: w.u0,
            d0_at_x0: w.d0,
            margin: w.margin,
        }
    }
}

/// `(x, u0(x), u0'(x))` for every cell: the phase-plane contour of the data.
pub fn phase_contour(u0: &GridFunction) -> Vec<(f64, f64, f64)> {
    let d = spatial_derivative(u0);
    u0.grid()
        .centers()
        .zip(u0.values())
        .zip(d.values())
        .map(|((x, &u), &d)| (x, u, d))
        .collect()
}

/// Classifies initial data as sub- or supercritical.
pub fn classify_initial_data(u0: &GridFunction) -> Result<Classification> {
    classify_with(ThresholdCurve::global(), u0)
}

pub fn classify_with(curve: &ThresholdCurve, u0: &GridFunction) -> Result<Classification> {
    u0.check_density()?;
    if let Some(i) = u0
        .values()
        .windows(2)
        .position(|w| (w[1] - w[0]).abs() > MAX_ADJACENT_JUMP)
    {
        return Err(Error::InvalidArgument(format!(
            "initial data not resolved: jump of {} between cells {i} and {}",
            (u0.values()[i + 1] - u0.values()[i]).abs(),
            i + 1
        )));
    }
    let mut best: Option<Witness> = None;
    for (x, u, d) in phase_contour(u0) {
        let margin = d - curve.eval(u.clamp(0.0, 1.0))?;
        if best.map_or(true, |b| margin > b.margin) {
            best = Some(Witness {
                x0: x,
                u0: u,
                d0: d,
                margin,
            });
        }
    }
    let closest = best.expect("grid has at least four cells");
    let supercritical = closest.margin > CLASSIFIER_MARGIN;
    Ok(Classification {
        verdict: if supercritical {
            Verdict::Supercritical
        } else {
            Verdict::Subcritical
        },
        witness: supercritical.then_some(closest),
        min_margin: -closest.margin,
        in_dead_band: !supercritical && closest.margin > 0.0,
        closest,
    })
}
