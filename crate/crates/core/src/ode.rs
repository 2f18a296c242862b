//! Explicit Runge-Kutta integrators for small fixed-size systems.

use crate::error::{Error, Result};

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize>(
    mut rhs: impl FnMut(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    h: f64,
) -> [f64; N] {
    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
    let k3 = rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = rhs(t + h, &axpy(y, h, &k3));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn axpy<const N: usize>(y: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += a * k[i];
    }
    out
}

/// An accepted step, with enough data for cubic Hermite interpolation.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub f0: [f64; N],
    pub f1: [f64; N],
}

impl<const N: usize> Step<N> {
    /// Cubic Hermite interpolant on `[t0, t1]`.
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = h00 * self.y0[i]
                + h10 * h * self.f0[i]
                + h01 * self.y1[i]
                + h11 * h * self.f1[i];
        }
        out
    }

    /// Time inside the step where component `k` crosses `level`, by
    /// bisection on the interpolant. Assumes a sign change over the step.
    pub fn crossing(&self, k: usize, level: f64) -> f64 {
        let g = |t: f64| self.interpolate(t)[k] - level;
        let (mut a, mut b) = (self.t0, self.t1);
        let mut ga = g(a);
        if ga == 0.0 {
            return a;
        }
        if g(b) == 0.0 {
            return b;
        }
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            let gm = g(m);
            if (gm <= 0.0) == (ga <= 0.0) {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
            if (b - a).abs() <= 1e-15 * (1.0 + m.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    }
}

/// What the step observer wants the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct Outcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    /// True when the observer stopped the run before `t_end`.
    pub stopped: bool,
    pub accepted: usize,
    pub rejected: usize,
}

/// Dormand-Prince 5(4) with an I step-size controller.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step magnitude, `f64::INFINITY` for none.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl Dopri5 {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    /// Integrates from `t0` to `t_end` (either direction), calling
    /// `on_step` after every accepted step.
    pub fn integrate<const N: usize>(
        &self,
        mut rhs: impl FnMut(f64, &[f64; N]) -> [f64; N],
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        mut on_step: impl FnMut(&Step<N>) -> Control,
    ) -> Result<Outcome<N>> {
        let span = t_end - t0;
        let dir = if span >= 0.0 { 1.0 } else { -1.0 };
        let mut t = t0;
        let mut y = y0;
        let mut f = rhs(t, &y);
        let mut out = Outcome {
            t,
            y,
            stopped: false,
            accepted: 0,
            rejected: 0,
        };
        if span == 0.0 {
            return Ok(out);
        }
        let mut h = dir * self.initial_step(&mut rhs, t, &y, &f, span.abs());
        let h_floor = 1e-14 * (1.0 + t0.abs().max(t_end.abs()));

        for _ in 0..self.max_steps {
            if (t_end - t) * dir <= 0.0 {
                break;
            }
            if (t + h - t_end) * dir > 0.0 {
                h = t_end - t;
            }
            let (y_new, f_new, err) = self.attempt(&mut rhs, t, &y, &f, h);
            if err.is_finite() && err <= 1.0 {
                let t_new = if (t_end - (t + h)) * dir <= 0.0 { t_end } else { t + h };
                let step = Step {
                    t0: t,
                    t1: t_new,
                    y0: y,
                    y1: y_new,
                    f0: f,
                    f1: f_new,
                };
                t = t_new;
                y = y_new;
                f = f_new;
                out.accepted += 1;
                out.t = t;
                out.y = y;
                if on_step(&step) == Control::Stop {
                    out.stopped = true;
                    return Ok(out);
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = dir * (h.abs() * factor).min(self.h_max);
            } else {
                out.rejected += 1;
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.1
                };
                h *= factor;
                if h.abs() < h_floor {
                    return Err(Error::Numerical {
                        t,
                        reason: format!("step size underflow (h = {h:e})"),
                        dump: Some(y.to_vec()),
                    });
                }
            }
        }
        if (t_end - t) * dir > 0.0 {
            return Err(Error::Numerical {
                t,
                reason: format!("exceeded {} steps", self.max_steps),
                dump: Some(y.to_vec()),
            });
        }
        Ok(out)
    }

    fn attempt<const N: usize>(
        &self,
        rhs: &mut impl FnMut(f64, &[f64; N]) -> [f64; N],
        t: f64,
        y: &[f64; N],
        f: &[f64; N],
        h: f64,
    ) -> ([f64; N], [f64; N], f64) {
        let mut k = [[0.0; N]; 7];
        k[0] = *f;
        for s in 1..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k[s] = rhs(t + C[s] * h, &ys);
        }
        // Stage 7 is evaluated at the fifth-order solution (FSAL).
        let mut y_new = *y;
        for i in 0..N {
            for s in 0..6 {
                y_new[i] += h * A[6][s] * k[s][i];
            }
        }
        let mut sum = 0.0;
        for i in 0..N {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * k[s][i];
            }
            let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
            let r = h * e / scale;
            sum += r * r;
        }
        let err = (sum / N as f64).sqrt();
        (y_new, k[6], err)
    }

    fn initial_step<const N: usize>(
        &self,
        rhs: &mut impl FnMut(f64, &[f64; N]) -> [f64; N],
        t: f64,
        y: &[f64; N],
        f: &[f64; N],
        span: f64,
    ) -> f64 {
        let norm = |v: &[f64; N]| {
            let s: f64 = (0..N)
                .map(|i| {
                    let r = v[i] / (self.atol + self.rtol * y[i].abs());
                    r * r
                })
                .sum();
            (s / N as f64).sqrt()
        };
        let (d0, d1) = (norm(y), norm(f));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(span).min(self.h_max);
        let y1 = axpy(y, h0, f);
        let f1 = rhs(t + h0, &y1);
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = f1[i] - f[i];
        }
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(self.h_max)
    }
}
