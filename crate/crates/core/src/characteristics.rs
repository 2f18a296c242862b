//! Slope/density dynamics along characteristic paths.
//!
//! Along a characteristic `X'(t) = (1 - 2u) exp(-ubar)`, the density `u` and
//! slope `d = u_x` obey
//!
//! ```text
//! d' = (2d^2 - (3u - 5u^2) d - u^3 (1 - u)) exp(-ubar)
//! u' = -u^2 (1 - u) exp(-ubar)
//! ```
//!
//! The nonlocal factor only reparameterizes time, so phase paths `d(u)` are
//! local. This module integrates both forms and evaluates the closed-form
//! bounds used to prove blow-up of supercritical data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{Control, Dopri5, Step};
use crate::threshold::{trajectory_slope, ThresholdCurve};

/// Default blow-up cap on `d`.
pub const DEFAULT_BLOWUP_CAP: f64 = 1e8;
/// Allowed excursion of `u` outside `[0, 1]` before integration fails.
pub const DENSITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharState {
    pub d: f64,
    pub u: f64,
    pub t: f64,
}

impl CharState {
    pub fn new(d: f64, u: f64) -> Self {
        Self { d, u, t: 0.0 }
    }
}

/// Model for the factor `exp(-ubar)` seen along a path.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorModel {
    Constant(f64),
    /// Piecewise-linear series `(t_k, factor_k)`, strictly increasing in `t`.
    Sampled { times: Vec<f64>, values: Vec<f64> },
}

impl FactorModel {
    pub fn sampled(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidArgument(
                "factor series needs equal, non-zero numbers of times and values".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "factor series times must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(Error::InvalidArgument(
                "factor values must lie in (0, 1]".into(),
            ));
        }
        Ok(FactorModel::Sampled { times, values })
    }

    /// True when every factor value lies in `[exp(-m), 1]`.
    pub fn within_mass_bounds(&self, m: f64) -> bool {
        let lo = (-m).exp();
        let ok = |v: f64| v >= lo - 1e-12 && v <= 1.0 + 1e-12;
        match self {
            FactorModel::Constant(c) => ok(*c),
            FactorModel::Sampled { values, .. } => values.iter().all(|&v| ok(v)),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            FactorModel::Constant(c) if !(*c > 0.0 && *c <= 1.0) => Err(
                Error::InvalidArgument(format!("constant factor {c} outside (0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    fn covers(&self, t_end: f64) -> Result<()> {
        match self {
            FactorModel::Sampled { times, .. } if *times.last().unwrap() < t_end => {
                Err(Error::FactorSeriesTooShort {
                    available: *times.last().unwrap(),
                    requested: t_end,
                })
            }
            _ => Ok(()),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            FactorModel::Constant(c) => *c,
            FactorModel::Sampled { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    values[k - 1] + w * (values[k] - values[k - 1])
                }
            }
        }
    }

    /// `integral_0^t factor`.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            FactorModel::Constant(c) => c * t,
            FactorModel::Sampled { times, .. } => {
                let mut acc = 0.0;
                let mut prev = 0.0;
                for &tk in times.iter().filter(|&&s| s > 0.0 && s < t) {
                    acc += 0.5 * (self.at(prev) + self.at(tk)) * (tk - prev);
                    prev = tk;
                }
                acc + 0.5 * (self.at(prev) + self.at(t)) * (t - prev)
            }
        }
    }

    /// Smallest `t` with `integral(t) = tau`, if reached by `t_max`.
    fn time_for_integral(&self, tau: f64, t_max: f64) -> Option<f64> {
        if self.integral(t_max) < tau {
            return None;
        }
        match self {
            FactorModel::Constant(c) => Some(tau / c),
            FactorModel::Sampled { .. } => {
                let (mut a, mut b) = (0.0, t_max);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if self.integral(m) < tau {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                Some(b)
            }
        }
    }
}

/// Right sides `(d', u')` with the nonlocal factor replaced by `factor`.
pub fn rhs_dynamics(s: &CharState, factor: f64) -> (f64, f64) {
    let (d, u) = (s.d, s.u);
    let d_dot = (2.0 * d * d - (3.0 * u - 5.0 * u * u) * d - u * u * u * (1.0 - u)) * factor;
    let u_dot = -u * u * (1.0 - u) * factor;
    (d_dot, u_dot)
}

/// A path of the `(d, u)` dynamics in time.
#[derive(Debug, Clone)]
pub struct CharTrajectory {
    pub samples: Vec<CharState>,
    /// Time at which `d` crossed the blow-up cap.
    pub blowup_time: Option<f64>,
    steps: Vec<Step<2>>,
}

impl CharTrajectory {
    /// Slope where the path passes density `u`, if it does.
    pub fn d_at_u(&self, u: f64) -> Option<f64> {
        let step = self.steps.iter().find(|s| {
            let (a, b) = (s.y0[1], s.y1[1]);
            (a >= u && b <= u) || (a <= u && b >= u)
        })?;
        if step.y0[1] == step.y1[1] {
            return Some(step.y0[0]);
        }
        let t = step.crossing(1, u);
        Some(step.interpolate(t)[0])
    }

    pub fn last(&self) -> &CharState {
        self.samples.last().expect("trajectory holds its initial state")
    }
}

/// Integrates the `(d, u)` dynamics from `s0` up to `t_end`, declaring
/// blow-up when `d` exceeds `blowup_cap`.
pub fn integrate_characteristic(
    s0: CharState,
    factor: &FactorModel,
    t_end: f64,
    blowup_cap: f64,
) -> Result<CharTrajectory> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    if !(blowup_cap >= 1e6) {
        return Err(Error::InvalidArgument(format!(
            "blow-up cap must be at least 1e6, got {blowup_cap}"
        )));
    }
    if !(0.0..=1.0).contains(&s0.u) || !s0.d.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "invalid characteristic state (d = {}, u = {})",
            s0.d, s0.u
        )));
    }
    factor.check()?;
    factor.covers(s0.t + t_end)?;

    if s0.u == 0.0 || s0.u == 1.0 {
        return Ok(degenerate_riccati(s0, factor, t_end, blowup_cap));
    }

    let mut samples = vec![s0];
    let mut steps = Vec::new();
    let mut blowup_time = None;
    let mut failure = None;
    let solver = Dopri5::with_tolerances(1e-10, 1e-12);
    solver.integrate(
        |t, y: &[f64; 2]| {
            let (dd, du) = rhs_dynamics(&CharState { d: y[0], u: y[1], t }, factor.at(t));
            [dd, du]
        },
        s0.t,
        [s0.d, s0.u],
        s0.t + t_end,
        |step| {
            let u = step.y1[1];
            if !(-DENSITY_SLACK..=1.0 + DENSITY_SLACK).contains(&u) {
                failure = Some(step.t1);
                return Control::Stop;
            }
            steps.push(*step);
            if step.y1[0] >= blowup_cap {
                let t = step.crossing(0, blowup_cap);
                blowup_time = Some(t);
                samples.push(CharState {
                    d: blowup_cap,
                    u: step.interpolate(t)[1].clamp(0.0, 1.0),
                    t,
                });
                return Control::Stop;
            }
            samples.push(CharState {
                d: step.y1[0],
                u: u.clamp(0.0, 1.0),
                t: step.t1,
            });
            Control::Continue
        },
    )?;
    if let Some(t) = failure {
        return Err(Error::Numerical {
            t,
            reason: "density left [0, 1] along a characteristic".into(),
            dump: None,
        });
    }
    Ok(CharTrajectory {
        samples,
        blowup_time,
        steps,
    })
}

/// Closed-form solutions for `u0 = 0` (`d' = 2 c d^2`) and `u0 = 1`
/// (`d' = 2 c d (d + 1)`), written in the factor integral `tau`.
fn degenerate_riccati(
    s0: CharState,
    factor: &FactorModel,
    t_end: f64,
    cap: f64,
) -> CharTrajectory {
    let d0 = s0.d;
    let at_vacuum = s0.u == 0.0;
    let d_of_tau = |tau: f64| -> f64 {
        if at_vacuum {
            d0 / (1.0 - 2.0 * d0 * tau)
        } else if d0 == -1.0 {
            -1.0
        } else {
            let r = d0 / (d0 + 1.0) * (2.0 * tau).exp();
            r / (1.0 - r)
        }
    };
    // Factor integral at which d reaches the cap.
    let tau_cap = if at_vacuum {
        (d0 > 0.0).then(|| (1.0 - d0 / cap) / (2.0 * d0))
    } else {
        (d0 > 0.0).then(|| {
            let r = d0 / (d0 + 1.0);
            0.5 * (cap / ((1.0 + cap) * r)).ln()
        })
    };
    let blowup_time = tau_cap
        .filter(|tau| *tau >= 0.0)
        .and_then(|tau| factor.time_for_integral(tau, t_end))
        .map(|t| s0.t + t);
    let horizon = blowup_time.map_or(t_end, |t| t - s0.t);
    let n = 200;
    let samples = (0..=n)
        .map(|k| {
            let t = horizon * k as f64 / n as f64;
            let d = if blowup_time.is_some() && k == n {
                cap
            } else {
                d_of_tau(factor.integral(t))
            };
            CharState {
                d,
                u: s0.u,
                t: s0.t + t,
            }
        })
        .collect();
    CharTrajectory {
        samples,
        blowup_time,
        steps: Vec::new(),
    }
}

/// A phase-plane path `d(u)`, traced with `u` decreasing.
#[derive(Debug, Clone)]
pub struct PhaseTrajectory {
    pub d0: f64,
    pub u0: f64,
    /// `(u, d)` samples in the order traced.
    pub samples: Vec<(f64, f64)>,
    /// Density at which `d` crossed the blow-up cap.
    pub blowup_at_u: Option<f64>,
    steps: Vec<Step<1>>,
}

impl PhaseTrajectory {
    /// Interpolated slope at density `u`, if the path reached it.
    pub fn d_at(&self, u: f64) -> Option<f64> {
        self.steps
            .iter()
            .find(|s| s.t0 >= u && s.t1 <= u)
            .map(|s| s.interpolate(u)[0])
    }
}

/// Integrates the phase-path equation `d'(u)` from `u0` down to `u_end`.
pub fn phase_trajectory(d0: f64, u0: f64, u_end: f64) -> Result<PhaseTrajectory> {
    if !(u0 > 0.0 && u0 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "phase paths need u0 in (0, 1), got {u0}"
        )));
    }
    if !(u_end > 0.0 && u_end <= u0) {
        return Err(Error::InvalidArgument(format!(
            "u_end must lie in (0, {u0}], got {u_end}"
        )));
    }
    if !d0.is_finite() {
        return Err(Error::InvalidArgument("d0 must be finite".into()));
    }
    let mut samples = vec![(u0, d0)];
    let mut steps = Vec::new();
    let mut blowup_at_u = None;
    let solver = Dopri5::with_tolerances(1e-10, 1e-12);
    solver.integrate(
        |u, d: &[f64; 1]| [trajectory_slope(u, d[0])],
        u0,
        [d0],
        u_end,
        |step| {
            steps.push(*step);
            if step.y1[0] >= DEFAULT_BLOWUP_CAP {
                let u = step.crossing(0, DEFAULT_BLOWUP_CAP);
                blowup_at_u = Some(u);
                samples.push((u, DEFAULT_BLOWUP_CAP));
                return Control::Stop;
            }
            samples.push((step.t1, step.y1[0]));
            Control::Continue
        },
    )?;
    Ok(PhaseTrajectory {
        d0,
        u0,
        samples,
        blowup_at_u,
        steps,
    })
}

/// Roots `d_- <= d_+` of `2d^2 - (3u - 5u^2) d - u^3 (1 - u)`.
pub fn d_roots(u: f64) -> (f64, f64) {
    let b = 3.0 * u - 5.0 * u * u;
    let disc = b * b + 8.0 * u * u * u * (1.0 - u);
    assert!(disc >= 0.0, "negative discriminant {disc} at u = {u}");
    let r = disc.sqrt();
    ((b - r) / 4.0, (b + r) / 4.0)
}

/// `G(eta) = 1/eta + ln((1 - eta)/eta)`, the integral of `dt / (eta^2 (1 - eta))` up to sign.
fn eta_potential(eta: f64) -> f64 {
    1.0 / eta + ((1.0 - eta) / eta).ln()
}

/// Time for the comparison density `eta' = -exp(-m) eta^2 (1 - eta)` to fall
/// from `u0` to `u1`.
pub fn time_to_level(u0: f64, u1: f64, m: f64) -> Result<f64> {
    if !(u0 > 0.0 && u0 < 1.0 && u1 > 0.0 && u1 < u0) || !(m >= 0.0) || !m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "time_to_level needs 0 < u1 < u0 < 1 and m >= 0 (u0 = {u0}, u1 = {u1}, m = {m})"
        )));
    }
    Ok(m.exp() * (eta_potential(u1) - eta_potential(u0)))
}

/// `eta(t)` for `eta' = -exp(-m) eta^2 (1 - eta)`, `eta(0) = u0`, from the
/// implicit solution `G(eta(t)) = G(u0) + exp(-m) t`.
pub fn eta_at(u0: f64, m: f64, t: f64) -> Result<f64> {
    if !(u0 >= 0.0 && u0 <= 1.0) || !(t >= 0.0) || !(m >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eta_at needs u0 in [0, 1], t >= 0, m >= 0 (u0 = {u0}, t = {t}, m = {m})"
        )));
    }
    if u0 == 0.0 || u0 == 1.0 || t == 0.0 {
        return Ok(u0);
    }
    let target = eta_potential(u0) + (-m).exp() * t;
    // G is strictly decreasing on (0, 1).
    let (mut lo, mut hi) = (0.0, u0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if eta_potential(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Blow-up time estimates once the density has dropped to `u1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupBound {
    pub d_minus: f64,
    pub d_plus: f64,
    /// Blow-up time of `d' = 2 exp(-m) (d - d_-)(d - d_+)` started at `t1`.
    pub sharp: f64,
    /// `t1 + 2 exp(m) / C*` with `C* = 4 u1`.
    pub coarse: f64,
}

/// Roots of `2d^2 - 3 u1 d - u1^3`.
pub fn frozen_roots(u1: f64) -> (f64, f64) {
    let r = (9.0 + 8.0 * u1).sqrt();
    ((3.0 - r) / 4.0 * u1, (3.0 + r) / 4.0 * u1)
}

pub fn blowup_time_bound(d_at_t1: f64, u1: f64, m: f64, t1: f64) -> Result<BlowupBound> {
    if !(u1 > 0.0 && u1 < 1.0) || !(m >= 0.0) || !m.is_finite() || !(t1 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blowup_time_bound needs u1 in (0, 1), m >= 0, t1 >= 0 (u1 = {u1}, m = {m}, t1 = {t1})"
        )));
    }
    let (d_minus, d_plus) = frozen_roots(u1);
    if !(d_at_t1 > 2.0 * d_plus) {
        return Err(Error::InvalidArgument(format!(
            "need d(t1) > 2 d_+ = {}, got {d_at_t1}",
            2.0 * d_plus
        )));
    }
    let rate = 2.0 * (-m).exp() * (d_plus - d_minus);
    let sharp = if d_at_t1.is_infinite() {
        t1
    } else {
        t1 + ((d_at_t1 - d_minus) / (d_at_t1 - d_plus)).ln() / rate
    };
    let coarse = t1 + 2.0 * m.exp() / (4.0 * u1);
    if sharp > coarse {
        return Err(Error::Numerical {
            t: t1,
            reason: format!("sharp blow-up bound {sharp} exceeds coarse bound {coarse}"),
            dump: None,
        });
    }
    Ok(BlowupBound {
        d_minus,
        d_plus,
        sharp,
        coarse,
    })
}

/// Uniform lower bound `C*` on `d` along a supercritical path.
///
/// `C* = (d0 - sigma(u0)) (u2 / u0)^3` with `u2` the boost level of the
/// threshold curve. For `u0 <= u2` the margin itself is the floor.
pub fn slope_floor(d0: f64, u0: f64) -> Result<f64> {
    slope_floor_with(ThresholdCurve::global(), d0, u0)
}

pub fn slope_floor_with(curve: &ThresholdCurve, d0: f64, u0: f64) -> Result<f64> {
    if !(u0 > 0.0 && u0 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "slope floor needs u0 in (0, 1), got {u0}"
        )));
    }
    let margin = d0 - curve.eval(u0)?;
    if !(margin > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "(d0, u0) = ({d0}, {u0}) is not supercritical (margin {margin})"
        )));
    }
    let ratio = curve.boost_level().min(u0) / u0;
    Ok(margin * ratio * ratio * ratio)
}

/// Every quantity of the two-phase blow-up argument for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBounds {
    pub t1: f64,
    pub d_minus: f64,
    pub d_plus: f64,
    #[serde(rename = "T_star_sharp")]
    pub t_star_sharp: f64,
    #[serde(rename = "T_star_coarse")]
    pub t_star_coarse: f64,
    #[serde(rename = "C_star")]
    pub c_star: f64,
}

/// Composite bound for a supercritical seed `(d0, u0)` with mass `m`:
/// wait until the density falls to `u1 = min(C*/4, u0)`, then apply the
/// frozen Riccati bound from `d(t1) >= C*`.
pub fn analytic_bounds(d0: f64, u0: f64, m: f64) -> Result<AnalyticBounds> {
    let c_star = slope_floor(d0, u0)?;
    let u1 = (c_star / 4.0).min(u0);
    let t1 = if u1 < u0 {
        time_to_level(u0, u1, m)?
    } else {
        0.0
    };
    let bound = blowup_time_bound(c_star, u1, m, t1)?;
    Ok(AnalyticBounds {
        t1,
        d_minus: bound.d_minus,
        d_plus: bound.d_plus,
        t_star_sharp: bound.sharp,
        t_star_coarse: bound.coarse,
        c_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::sigma_eval;

    #[test]
    fn rhs_examples() {
        for c in [0.2, 1.0] {
            assert_eq!(rhs_dynamics(&CharState::new(0.0, 0.0), c), (0.0, 0.0));
            assert_eq!(rhs_dynamics(&CharState::new(0.0, 1.0), c), (0.0, 0.0));
        }
        assert_eq!(rhs_dynamics(&CharState::new(1.0, 0.0), 1.0), (2.0, 0.0));
        let (dd, du) = rhs_dynamics(&CharState::new(0.0, 0.5), 1.0);
        assert!((dd + 0.0625).abs() < 1e-15);
        assert!((du + 0.125).abs() < 1e-15);
    }

    #[test]
    fn vacuum_riccati_blowup_time() {
        for (d0, c) in [(1.0, 1.0), (0.5, 0.3), (3.0, 0.7)] {
            let tr = integrate_characteristic(
                CharState::new(d0, 0.0),
                &FactorModel::Constant(c),
                100.0,
                DEFAULT_BLOWUP_CAP,
            )
            .unwrap();
            let expect = 1.0 / (2.0 * c * d0);
            let t = tr.blowup_time.unwrap();
            assert!((t - expect).abs() <= 0.01 * expect, "{t} vs {expect}");
        }
    }

    #[test]
    fn jam_riccati_matches_generic_limit() {
        // u0 = 1, d0 = 1: d/(d+1) = e^{2t}/2 reaches 1 at t = ln(2)/2.
        let tr = integrate_characteristic(
            CharState::new(1.0, 1.0),
            &FactorModel::Constant(1.0),
            10.0,
            DEFAULT_BLOWUP_CAP,
        )
        .unwrap();
        let t = tr.blowup_time.unwrap();
        assert!((t - 0.5 * 2.0_f64.ln()).abs() < 1e-6, "{t}");
        // Below the jam the slope relaxes to -1.
        let tr = integrate_characteristic(
            CharState::new(-3.0, 1.0),
            &FactorModel::Constant(1.0),
            20.0,
            DEFAULT_BLOWUP_CAP,
        )
        .unwrap();
        assert!(tr.blowup_time.is_none());
        assert!((tr.last().d + 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_slope_is_not_invariant() {
        let tr = integrate_characteristic(
            CharState::new(0.0, 0.4),
            &FactorModel::Constant(0.5),
            0.1,
            DEFAULT_BLOWUP_CAP,
        )
        .unwrap();
        assert!(tr.samples[1..].iter().all(|s| s.d < 0.0));
    }

    #[test]
    fn lower_bound_from_below_minus_one() {
        let tr = integrate_characteristic(
            CharState::new(-2.0, 0.5),
            &FactorModel::Constant(1.0),
            50.0,
            DEFAULT_BLOWUP_CAP,
        )
        .unwrap();
        assert!(tr.samples.iter().all(|s| s.d >= -2.0 - 1e-9));
    }

    #[test]
    fn sampled_factor_validation() {
        let f = FactorModel::sampled(vec![0.0, 1.0], vec![0.5, 0.6]).unwrap();
        assert!((f.at(0.5) - 0.55).abs() < 1e-15);
        assert!((f.integral(1.0) - 0.55).abs() < 1e-15);
        let err = integrate_characteristic(CharState::new(0.1, 0.3), &f, 2.0, 1e8).unwrap_err();
        assert!(matches!(err, Error::FactorSeriesTooShort { .. }));
        assert!(FactorModel::sampled(vec![0.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(FactorModel::sampled(vec![0.0, 1.0], vec![0.5, 1.5]).is_err());
        assert!(f.within_mass_bounds(1.0));
        assert!(!f.within_mass_bounds(0.1));
    }

    #[test]
    fn integrate_rejects_bad_input() {
        let c = FactorModel::Constant(1.0);
        assert!(integrate_characteristic(CharState::new(0.0, 0.5), &c, 0.0, 1e8).is_err());
        assert!(integrate_characteristic(CharState::new(0.0, 0.5), &c, 1.0, 1e3).is_err());
        assert!(integrate_characteristic(CharState::new(0.0, 1.5), &c, 1.0, 1e8).is_err());
        assert!(
            integrate_characteristic(CharState::new(0.0, 0.5), &FactorModel::Constant(0.0), 1.0, 1e8)
                .is_err()
        );
    }

    #[test]
    fn phase_path_on_threshold_stays_on_it() {
        for u0 in [0.3, 0.5, 0.8] {
            let p = phase_trajectory(sigma_eval(u0).unwrap(), u0, 0.02).unwrap();
            assert!(p.blowup_at_u.is_none());
            for &(u, d) in &p.samples {
                assert!((d - sigma_eval(u).unwrap()).abs() <= 1e-6, "u={u}: {d}");
            }
        }
    }

    #[test]
    fn phase_path_below_threshold_stays_below() {
        let u0 = 0.6;
        let p = phase_trajectory(sigma_eval(u0).unwrap() - 0.05, u0, 0.01).unwrap();
        for &(u, d) in p.samples.iter().skip(1) {
            assert!(d < sigma_eval(u).unwrap(), "u={u}");
        }
    }

    #[test]
    fn phase_path_above_threshold_respects_cubic_bound() {
        let (u0, d0) = (0.6, 0.4);
        let margin = d0 - sigma_eval(u0).unwrap();
        let p = phase_trajectory(d0, u0, 1e-3).unwrap();
        for &(u, d) in &p.samples {
            assert!(d >= margin / u0.powi(3) * u.powi(3) - 1e-12, "u={u}");
        }
    }

    #[test]
    fn phase_rejects_degenerate_seeds() {
        assert!(phase_trajectory(0.0, 0.0, 0.0).is_err());
        assert!(phase_trajectory(0.0, 1.0, 0.5).is_err());
        assert!(phase_trajectory(0.0, 0.5, 0.6).is_err());
        assert!(phase_trajectory(0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn roots_at_endpoints_and_lower_bound() {
        assert_eq!(d_roots(0.0), (0.0, 0.0));
        assert_eq!(d_roots(1.0), (-1.0, 0.0));
        for k in 0..=10_000 {
            let u = k as f64 / 10_000.0;
            let (lo, hi) = d_roots(u);
            assert!(lo >= -1.0 - 1e-15 && lo <= hi, "u={u}");
        }
    }

    #[test]
    fn time_to_level_values() {
        let t = time_to_level(0.5, 0.25, 0.0).unwrap();
        assert!((t - (2.0 + 3.0_f64.ln())).abs() < 1e-12);
        assert!(time_to_level(0.5, 0.5 - 1e-9, 0.0).unwrap() < 1e-6);
        let scaled = time_to_level(0.5, 0.25, 1.0).unwrap();
        assert!((scaled - t * 1.0_f64.exp()).abs() < 1e-12);
        assert!(time_to_level(0.5, 0.6, 0.0).is_err());
        assert!(time_to_level(1.0, 0.5, 0.0).is_err());
        assert!(time_to_level(0.5, 0.25, -1.0).is_err());
        let eta = eta_at(0.5, 0.0, t).unwrap();
        assert!((eta - 0.25).abs() < 1e-12);
    }

    #[test]
    fn blowup_bound_limits() {
        let b = blowup_time_bound(f64::INFINITY, 0.1, 0.0, 3.0).unwrap();
        assert_eq!(b.sharp, 3.0);
        let b = blowup_time_bound(1e12, 0.1, 0.0, 3.0).unwrap();
        assert!(b.sharp - 3.0 < 1e-9);
        assert!(blowup_time_bound(0.1, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn slope_floor_checks() {
        let u0 = 0.5;
        let s = sigma_eval(u0).unwrap();
        assert!(slope_floor(s, u0).is_err());
        let c1 = slope_floor(s + 0.1, u0).unwrap();
        let c2 = slope_floor(s + 0.2, u0).unwrap();
        assert!((c2 - 2.0 * c1).abs() < 1e-15);
        let u2 = ThresholdCurve::global().boost_level();
        assert!((c1 - 0.1 * (u2 / u0).powi(3)).abs() < 1e-15);
    }

    #[test]
    fn bounds_for_cli_example() {
        let b = analytic_bounds(0.4, 0.5, 1.0).unwrap();
        assert!(b.t1 >= 0.0 && b.d_minus <= b.d_plus);
        assert!(b.t_star_sharp > b.t1 && b.t_star_sharp <= b.t_star_coarse);
        let json = serde_json::to_value(b).unwrap();
        for key in ["t1", "d_minus", "d_plus", "T_star_sharp", "T_star_coarse", "C_star"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
