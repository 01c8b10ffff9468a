//! Periodic uniform grids over `[-L, L]^d` and fields sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[-L, L]^d`, `d` in {1, 2}, `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub l: f64,
}

impl Grid {
    pub fn new(d: usize, n: usize, l: f64) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::Domain(format!("dimension {d} not in {{1, 2}}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Domain(format!(
                "grid size {n} must be a power of two >= 8"
            )));
        }
        if !(l > 0.0) {
            return Err(Error::Domain(format!("box half-width {l} must be > 0")));
        }
        Ok(Grid { d, n, l })
    }

    /// Number of cells `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `h = 2L / N`.
    pub fn h(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Box volume `(2L)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.l).powi(self.d as i32)
    }

    /// Coordinate of axis index `j`: `x_j = -L + j h`.
    pub fn coord(&self, j: usize) -> f64 {
        -self.l + j as f64 * self.h()
    }

    /// Angular frequency of FFT bin `k` (fftfreq layout): `xi_k = pi k / L`.
    pub fn freq(&self, k: usize) -> f64 {
        let n = self.n as i64;
        let k = k as i64;
        let signed = if k <= n / 2 - 1 { k } else { k - n };
        std::f64::consts::PI * signed as f64 / self.l
    }

    /// Largest resolved frequency magnitude, `pi N / (2 L)`.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * self.n as f64 / (2.0 * self.l)
    }

    /// Decomposes a flat row-major index into per-axis indices.
    pub fn axes(&self, idx: usize) -> [usize; 2] {
        match self.d {
            1 => [idx, 0],
            _ => [idx % self.n, idx / self.n],
        }
    }

    /// Frequency vector of a flat spectral index.
    pub fn freq_vec(&self, idx: usize) -> [f64; 2] {
        let ax = self.axes(idx);
        match self.d {
            1 => [self.freq(ax[0]), 0.0],
            _ => [self.freq(ax[0]), self.freq(ax[1])],
        }
    }

    /// |xi|^2 of a flat spectral index.
    pub fn freq_norm2(&self, idx: usize) -> f64 {
        let f = self.freq_vec(idx);
        f[0] * f[0] + f[1] * f[1]
    }

    /// Wraps a point into the fundamental domain `[-L, L)` per coordinate.
    pub fn wrap(&self, x: f64) -> f64 {
        let period = 2.0 * self.l;
        let y = (x + self.l).rem_euclid(period);
        y - self.l
    }
}

/// Scalar or vector field sampled on a [`Grid`].
///
/// Values are stored row-major, component-major: component `c` occupies
/// `values[c * N^d .. (c + 1) * N^d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub components: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        GridFunction {
            grid,
            components,
            values: vec![0.0; components * grid.len()],
        }
    }

    pub fn from_values(grid: Grid, components: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != components * grid.len() {
            return Err(Error::Domain(format!(
                "value buffer length {} does not match {} component(s) on an N^d = {} grid",
                values.len(),
                components,
                grid.len()
            )));
        }
        Ok(GridFunction {
            grid,
            components,
            values,
        })
    }

    /// Samples a scalar function of the node coordinates (`y = 0` in 1-d).
    pub fn sample_scalar(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        for (idx, v) in values.iter_mut().enumerate() {
            let ax = grid.axes(idx);
            let y = if grid.d == 2 { grid.coord(ax[1]) } else { 0.0 };
            *v = f(grid.coord(ax[0]), y);
        }
        GridFunction {
            grid,
            components: 1,
            values,
        }
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn is_scalar(&self) -> bool {
        self.components == 1
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Trapezoid mass `h^d * sum` of a scalar field (exact on a periodic grid).
    pub fn mass(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Mean value per component.
    pub fn component_means(&self) -> Vec<f64> {
        (0..self.components)
            .map(|c| self.component(c).iter().sum::<f64>() / self.grid.len() as f64)
            .collect()
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn add_assign(&mut self, other: &GridFunction) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        debug_assert_eq!(self.values.len(), other.values.len());
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        out
    }

    /// `L1` distance between two scalar fields on the same grid.
    pub fn l1_distance(&self, other: &GridFunction) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise product with a scalar field, applied to every component.
    pub fn mul_scalar_field(&self, scalar: &GridFunction) -> GridFunction {
        debug_assert!(scalar.is_scalar());
        let mut out = self.clone();
        let n = self.grid.len();
        for c in 0..self.components {
            for i in 0..n {
                out.values[c * n + i] *= scalar.values[i];
            }
        }
        out
    }

    /// Multilinear interpolation of component `c` at a (wrapped) point.
    pub fn interp(&self, c: usize, x: &[f64]) -> f64 {
        let g = self.grid;
        let h = g.h();
        let vals = self.component(c);
        match g.d {
            1 => {
                let xw = g.wrap(x[0]);
                let t = (xw + g.l) / h;
                let j0 = t.floor() as usize % g.n;
                let j1 = (j0 + 1) % g.n;
                let frac = t - t.floor();
                vals[j0] * (1.0 - frac) + vals[j1] * frac
            }
            _ => {
                let xw = g.wrap(x[0]);
                let yw = g.wrap(x[1]);
                let tx = (xw + g.l) / h;
                let ty = (yw + g.l) / h;
                let ix0 = tx.floor() as usize % g.n;
                let iy0 = ty.floor() as usize % g.n;
                let ix1 = (ix0 + 1) % g.n;
                let iy1 = (iy0 + 1) % g.n;
                let fx = tx - tx.floor();
                let fy = ty - ty.floor();
                let at = |ix: usize, iy: usize| vals[iy * g.n + ix];
                at(ix0, iy0) * (1.0 - fx) * (1.0 - fy)
                    + at(ix1, iy0) * fx * (1.0 - fy)
                    + at(ix0, iy1) * (1.0 - fx) * fy
                    + at(ix1, iy1) * fx * fy
            }
        }
    }
}
