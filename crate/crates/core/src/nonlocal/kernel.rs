use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::GridFunction;
use crate::error::{Error, Result};

/// Values below this are treated as a corrupted density.
pub const NEGATIVE_DENSITY_LIMIT: f64 = -1e-6;

/// Look-ahead interaction kernels.
///
/// `Zero`, `SkUnit`, `Infinite` and `Uniform` are the four kernels compared
/// in the experiments (look-ahead distance 0, 1, infinity and the globally
/// uniform kernel). `SkScaled(L)` is the unit window stretched to length `L`
/// and `Linear` the linearly decaying window `2(1 - s)` on `s in (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Zero,
    SkUnit,
    Infinite,
    Uniform,
    SkScaled(f64),
    Linear,
}

impl Kernel {
    /// The four kernels of the comparison experiments, in order.
    pub const COMPARISON: [Kernel; 4] = [
        Kernel::Zero,
        Kernel::SkUnit,
        Kernel::Infinite,
        Kernel::Uniform,
    ];

    pub fn sk_scaled(length: f64) -> Result<Self> {
        if length.is_finite() && length > 0.0 {
            Ok(Kernel::SkScaled(length))
        } else {
            Err(Error::InvalidArgument(format!(
                "window length L must be positive and finite, got {length}"
            )))
        }
    }

    /// Supremum of the kernel weight. `ubar <= max_weight * mass`, so the
    /// factor is bounded below by `exp(-max_weight * mass)`.
    pub fn max_weight(&self) -> f64 {
        match self {
            Kernel::Zero => 0.0,
            Kernel::Linear => 2.0,
            _ => 1.0,
        }
    }

    /// Filesystem-friendly tag, used for bundle directory names.
    pub fn tag(&self) -> String {
        match self {
            Kernel::SkScaled(l) => format!("sk_L{l}"),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Zero => f.write_str("zero"),
            Kernel::SkUnit => f.write_str("sk"),
            Kernel::Infinite => f.write_str("infinite"),
            Kernel::Uniform => f.write_str("uniform"),
            Kernel::SkScaled(l) => write!(f, "sk:L={l}"),
            Kernel::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" => Ok(Kernel::Zero),
            "sk" => Ok(Kernel::SkUnit),
            "infinite" => Ok(Kernel::Infinite),
            "uniform" => Ok(Kernel::Uniform),
            "linear" => Ok(Kernel::Linear),
            other => {
                let length = other
                    .strip_prefix("sk:L=")
                    .and_then(|l| l.parse::<f64>().ok())
                    .ok_or_else(|| Error::MalformedKernel(other.to_string()))?;
                Kernel::sk_scaled(length)
            }
        }
    }
}

/// `ubar = K * u` and the slow-down factor `exp(-ubar)` on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalField {
    pub ubar: GridFunction,
    pub factor: GridFunction,
}

/// Evaluates the nonlocal term for `kernel`.
///
/// `u` is reconstructed as piecewise constant on cells and taken to vanish
/// outside the grid; every kernel is integrated exactly against that
/// reconstruction, so window edges falling inside a cell get linear
/// partial-cell weights.
pub fn compute_ubar(u: &GridFunction, kernel: Kernel) -> Result<NonlocalField> {
    let mut ubar = vec![0.0; u.values().len()];
    ubar_into(u.values(), u.dx(), kernel, 0.0, &mut ubar)?;
    let factor = ubar.iter().map(|b| (-b).exp()).collect();
    let grid = *u.grid();
    Ok(NonlocalField {
        ubar: GridFunction::new(grid, ubar)?,
        factor: GridFunction::new(grid, factor)?,
    })
}

/// Slice version of [`compute_ubar`]. `external_mass` is mass known to lie
/// outside the grid; only the uniform kernel sees it.
pub(crate) fn ubar_into(
    u: &[f64],
    dx: f64,
    kernel: Kernel,
    external_mass: f64,
    out: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(u.len(), out.len());
    if let Some((index, &value)) = u
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v >= NEGATIVE_DENSITY_LIMIT))
    {
        return Err(Error::DensityOutOfRange {
            index,
            value,
            lo: NEGATIVE_DENSITY_LIMIT,
            hi: f64::INFINITY,
        });
    }
    let n = u.len();
    match kernel {
        Kernel::Zero => out.fill(0.0),
        Kernel::Uniform => {
            let suffix = SuffixIntegral::new(u, dx);
            out.fill(suffix.total() + external_mass);
        }
        Kernel::Infinite => {
            // Right-to-left running sum: dx * sum_{j>i} u_j + dx/2 * u_i.
            let mut tail = 0.0;
            for i in (0..n).rev() {
                out[i] = tail + 0.5 * dx * u[i];
                tail += dx * u[i];
            }
        }
        Kernel::SkUnit | Kernel::SkScaled(_) => {
            let length = match kernel {
                Kernel::SkScaled(l) => l,
                _ => 1.0,
            };
            let suffix = SuffixIntegral::new(u, dx);
            for (i, o) in out.iter_mut().enumerate() {
                let s = i as f64 + 0.5;
                *o = suffix.at(s) - suffix.at(s + length / dx);
            }
        }
        Kernel::Linear => {
            let window = LinearWindow { u, dx };
            for (i, o) in out.iter_mut().enumerate() {
                *o = window.at(i);
            }
        }
    }
    Ok(())
}

/// `S(y) = integral of the piecewise-constant reconstruction over [y, inf)`,
/// with `y` measured in cell units from the left edge.
struct SuffixIntegral<'a> {
    u: &'a [f64],
    dx: f64,
    /// `tail[k] = dx * sum_{j >= k} u_j`, length `n + 1`.
    tail: Vec<f64>,
}

impl<'a> SuffixIntegral<'a> {
    fn new(u: &'a [f64], dx: f64) -> Self {
        let n = u.len();
        let mut tail = vec![0.0; n + 1];
        for k in (0..n).rev() {
            tail[k] = tail[k + 1] + dx * u[k];
        }
        Self { u, dx, tail }
    }

    fn total(&self) -> f64 {
        self.tail[0]
    }

    fn at(&self, s: f64) -> f64 {
        let n = self.u.len();
        if s >= n as f64 {
            return 0.0;
        }
        let k = s.floor() as usize;
        let right_fraction = (k + 1) as f64 - s;
        self.tail[k + 1] + right_fraction * self.dx * self.u[k]
    }
}

struct LinearWindow<'a> {
    u: &'a [f64],
    dx: f64,
}

impl LinearWindow<'_> {
    /// `integral_0^1 2 (1 - s) u(x_i + s) ds`, exact for piecewise-constant u.
    ///
    /// Each cell overlapping the window contributes `u_k (W(b) - W(a))` with
    /// `W(s) = 2s - s^2` and `[a, b]` the overlap in window coordinates.
    // FIXME: O(n / dx) per evaluation; a moment prefix sum would make this O(1).
    fn at(&self, i: usize) -> f64 {
        let n = self.u.len();
        let start = i as f64 + 0.5;
        let end = (start + 1.0 / self.dx).min(n as f64);
        let w = |s: f64| 2.0 * s - s * s;
        let mut acc = 0.0;
        let mut k = i;
        let mut lo = start;
        while lo < end && k < n {
            let hi = ((k + 1) as f64).min(end);
            let a = (lo - start) * self.dx;
            let b = (hi - start) * self.dx;
            acc += self.u[k] * (w(b) - w(a));
            lo = hi;
            k += 1;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::grid::{total_mass, GridSpec};

    fn box_profile(n: usize) -> GridFunction {
        let g = GridSpec::new(-4.0, 4.0, n).unwrap();
        GridFunction::from_fn(g, |x| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 }).unwrap()
    }

    fn value_at(f: &GridFunction, x: f64) -> f64 {
        let g = f.grid();
        let i = ((x - g.x_left()) / g.dx()).floor() as usize;
        f.values()[i.min(g.n_cells() - 1)]
    }

    #[test]
    fn kernel_strings_parse() {
        assert_eq!("zero".parse::<Kernel>().unwrap(), Kernel::Zero);
        assert_eq!("sk".parse::<Kernel>().unwrap(), Kernel::SkUnit);
        assert_eq!("infinite".parse::<Kernel>().unwrap(), Kernel::Infinite);
        assert_eq!("uniform".parse::<Kernel>().unwrap(), Kernel::Uniform);
        assert_eq!("linear".parse::<Kernel>().unwrap(), Kernel::Linear);
        assert_eq!(
            "sk:L=2.5".parse::<Kernel>().unwrap(),
            Kernel::SkScaled(2.5)
        );
        for bad in ["sk:L=-1", "sk:L=0", "sk:L=abc", "gauss", "sk:L=inf", ""] {
            assert!(bad.parse::<Kernel>().is_err(), "{bad}");
        }
        assert_eq!(Kernel::SkScaled(2.5).tag(), "sk_L2.5");
    }

    #[test]
    fn zero_kernel_gives_unit_factor() {
        let f = compute_ubar(&box_profile(80), Kernel::Zero).unwrap();
        assert!(f.ubar.values().iter().all(|&b| b == 0.0));
        assert!(f.factor.values().iter().all(|&c| c == 1.0));
    }

    #[test]
    fn uniform_kernel_on_box_is_total_mass() {
        let u = box_profile(800);
        let f = compute_ubar(&u, Kernel::Uniform).unwrap();
        for &b in f.ubar.values() {
            assert!((b - 1.0).abs() < 1e-12, "{b}");
        }
        assert!((total_mass(&u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_kernel_on_box() {
        let u = box_profile(800);
        let dx = u.dx();
        let f = compute_ubar(&u, Kernel::Infinite).unwrap();
        assert!((value_at(&f.ubar, -1.0) - 1.0).abs() <= dx);
        assert!((value_at(&f.ubar, 0.5) - 0.5).abs() <= dx);
        assert!(value_at(&f.ubar, 2.0).abs() <= dx);
        assert!(f.ubar.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn sk_unit_kernel_on_box() {
        let u = box_profile(800);
        let dx = u.dx();
        let f = compute_ubar(&u, Kernel::SkUnit).unwrap();
        for (x, b) in u.grid().centers().zip(f.ubar.values()) {
            if (0.0..=1.0).contains(&x) {
                assert!((b - (1.0 - x)).abs() <= dx, "x={x} ubar={b}");
            }
        }
    }

    #[test]
    fn sk_window_edge_moves_continuously() {
        // A window that ends inside a cell picks up a linear share of it.
        let g = GridSpec::new(0.0, 4.0, 4).unwrap();
        let u = GridFunction::new(g, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let ubar = |l: f64| compute_ubar(&u, Kernel::SkScaled(l)).unwrap().ubar.values()[0];
        assert!((ubar(0.5) - 0.0).abs() < 1e-15);
        assert!((ubar(0.75) - 0.25).abs() < 1e-15);
        assert!((ubar(1.25) - 0.75).abs() < 1e-15);
        assert!((ubar(3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_kernel_has_unit_mass_on_constants() {
        let g = GridSpec::new(0.0, 10.0, 1000).unwrap();
        let u = GridFunction::constant(g, 0.4).unwrap();
        let f = compute_ubar(&u, Kernel::Linear).unwrap();
        // Far from the right edge the whole window sees 0.4.
        assert!((f.ubar.values()[10] - 0.4).abs() < 1e-12);
        // Exact for a linear profile: int_0^1 2(1-s)(x+s) ds = x + 1/3.
        let lin = GridFunction::from_fn(g, |x| x / 20.0).unwrap();
        let f = compute_ubar(&lin, Kernel::Linear).unwrap();
        let x = g.center(100);
        let expect = (x + 1.0 / 3.0) / 20.0;
        assert!((f.ubar.values()[100] - expect).abs() < 1e-5);
    }

    #[test]
    fn rejects_negative_density() {
        let g = GridSpec::new(0.0, 1.0, 4).unwrap();
        let u = GridFunction::new(g, vec![0.0, -1e-5, 0.0, 0.0]).unwrap();
        assert!(compute_ubar(&u, Kernel::Infinite).is_err());
        let ok = GridFunction::new(g, vec![0.0, -1e-7, 0.0, 0.0]).unwrap();
        assert!(compute_ubar(&ok, Kernel::Infinite).is_ok());
    }
}
