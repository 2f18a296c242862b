use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the density range `[0, 1]`.
pub const DENSITY_TOL: f64 = 1e-8;

/// Uniform cell-centred grid on `[x_left, x_right]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    x_left: f64,
    x_right: f64,
    n_cells: usize,
}

impl GridSpec {
    pub fn new(x_left: f64, x_right: f64, n_cells: usize) -> Result<Self> {
        if !(x_left.is_finite() && x_right.is_finite()) || x_left >= x_right {
            return Err(Error::InvalidGrid(format!(
                "need finite x_left < x_right, got [{x_left}, {x_right}]"
            )));
        }
        if n_cells < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 cells, got {n_cells}"
            )));
        }
        Ok(Self {
            x_left,
            x_right,
            n_cells,
        })
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        (self.x_right - self.x_left) / self.n_cells as f64
    }

    /// Centre of cell `i`.
    pub fn center(&self, i: usize) -> f64 {
        self.x_left + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_cells).map(move |i| self.center(i))
    }

    /// Same domain with twice as many cells.
    pub fn refined(&self) -> Self {
        Self {
            n_cells: self.n_cells * 2,
            ..*self
        }
    }
}

/// Sampled profile on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.n_cells(),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.centers().map(f).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.n_cells()])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks that every value is a density in `[-DENSITY_TOL, 1 + DENSITY_TOL]`.
    pub fn check_density(&self) -> Result<()> {
        let (lo, hi) = (-DENSITY_TOL, 1.0 + DENSITY_TOL);
        match self
            .values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(lo..=hi).contains(&v))
        {
            Some((index, &value)) => Err(Error::DensityOutOfRange {
                index,
                value,
                lo,
                hi,
            }),
            None => Ok(()),
        }
    }

    /// Writes the profile as CSV with header `x,u`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "u"])?;
        for (x, u) in self.grid.centers().zip(&self.values) {
            w.write_record([x.to_string(), u.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an `x,u` CSV written on a uniform grid.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "u" {
            return Err(Error::InvalidArgument(format!(
                "expected header `x,u`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for record in r.records() {
            let record = record?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad number `{s}`: {e}")))
            };
            xs.push(parse(&record[0])?);
            us.push(parse(&record[1])?);
        }
        if xs.len() < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 rows, got {}",
                xs.len()
            )));
        }
        let n = xs.len();
        let dx = (xs[n - 1] - xs[0]) / (n - 1) as f64;
        let uniform = xs
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dx).abs() <= 1e-9 * dx.abs().max(1.0));
        if !uniform || dx <= 0.0 {
            return Err(Error::InvalidGrid("x column is not uniformly increasing".into()));
        }
        let grid = GridSpec::new(xs[0] - 0.5 * dx, xs[n - 1] + 0.5 * dx, n)?;
        Self::new(grid, us)
    }
}

/// Midpoint quadrature of the profile, `dx * sum(values)`.
pub fn total_mass(u: &GridFunction) -> f64 {
    u.dx() * u.values().iter().sum::<f64>()
}

/// Discrete first derivative: central differences inside, second-order
/// one-sided stencils at the two ends.
pub fn spatial_derivative(u: &GridFunction) -> GridFunction {
    let v = u.values();
    let n = v.len();
    let dx = u.dx();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
    }
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
    GridFunction {
        grid: *u.grid(),
        values: d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_specs() {
        assert!(GridSpec::new(1.0, 0.0, 10).is_err());
        assert!(GridSpec::new(0.0, 1.0, 3).is_err());
        assert!(GridSpec::new(0.0, f64::NAN, 10).is_err());
        let g = GridSpec::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.center(0), 0.125);
    }

    #[test]
    fn mass_of_zero_and_one() {
        let g = GridSpec::new(-3.0, 7.0, 37).unwrap();
        assert_eq!(total_mass(&GridFunction::constant(g, 0.0).unwrap()), 0.0);
        let g = GridSpec::new(0.0, 1.0, 100).unwrap();
        let m = total_mass(&GridFunction::constant(g, 1.0).unwrap());
        assert!((m - 1.0).abs() < 1e-14, "{m}");
    }

    #[test]
    fn derivative_of_constant_and_linear() {
        let g = GridSpec::new(0.0, 1.0, 50).unwrap();
        let c = GridFunction::constant(g, 0.3).unwrap();
        assert!(spatial_derivative(&c).values().iter().all(|d| d.abs() < 1e-12));
        let lin = GridFunction::from_fn(g, |x| x).unwrap();
        for d in spatial_derivative(&lin).values() {
            assert!((d - 1.0).abs() < 1e-11, "{d}");
        }
    }

    #[test]
    fn derivative_is_second_order() {
        let err = |n: usize| {
            let g = GridSpec::new(0.0, 2.0 * std::f64::consts::PI, n).unwrap();
            let u = GridFunction::from_fn(g, f64::sin).unwrap();
            let d = spatial_derivative(&u);
            g.centers()
                .zip(d.values())
                .map(|(x, d)| (d - x.cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1000), err(2000));
        let dx = 2.0 * std::f64::consts::PI / 1000.0;
        assert!(e1 <= 2.0 * dx * dx, "{e1}");
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn density_check_and_nonfinite() {
        let g = GridSpec::new(0.0, 1.0, 4).unwrap();
        assert!(GridFunction::new(g, vec![0.0, 0.5, 1.0, 1.0 + 1e-9])
            .unwrap()
            .check_density()
            .is_ok());
        assert!(matches!(
            GridFunction::new(g, vec![0.0, 0.5, 1.1, 0.0])
                .unwrap()
                .check_density(),
            Err(Error::DensityOutOfRange { index: 2, .. })
        ));
        assert!(GridFunction::new(g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(GridFunction::new(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = GridSpec::new(-1.0, 2.0, 12).unwrap();
        let u = GridFunction::from_fn(g, |x| (x * 1.3).sin().abs() / 3.0).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x,u\n"));
        let back = GridFunction::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), u.values());
        assert!((back.grid().x_left() + 1.0).abs() < 1e-12);
        assert!((back.grid().x_right() - 2.0).abs() < 1e-12);
    }
}
