//! FFT-backed spectral operations on periodic grids.
//!
//! Conventions: un-normalized forward DFT, `1/N^d` on the inverse. Fourier
//! multipliers are functions of the physical angular frequency `xi_k = pi k/L`.
//! Continuum convolution on the torus is `h^d * IDFT(DFT f . DFT g)`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

pub struct Spectral {
    pub grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n);
        let inv = planner.plan_fft_inverse(grid.n);
        Spectral { grid, fwd, inv }
    }

    fn fft_axes(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n;
        match self.grid.d {
            1 => plan.process(buf),
            _ => {
                // rows (x fastest), then columns via transpose
                for row in buf.chunks_exact_mut(n) {
                    plan.process(row);
                }
                let mut t = vec![Complex64::default(); buf.len()];
                for iy in 0..n {
                    for ix in 0..n {
                        t[ix * n + iy] = buf[iy * n + ix];
                    }
                }
                for row in t.chunks_exact_mut(n) {
                    plan.process(row);
                }
                for ix in 0..n {
                    for iy in 0..n {
                        buf[iy * n + ix] = t[ix * n + iy];
                    }
                }
            }
        }
    }

    /// Un-normalized forward DFT of one real component.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_axes(&mut buf, &self.fwd);
        buf
    }

    /// Inverse DFT (with the `1/N^d` factor), real part.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.fft_axes(&mut buf, &self.inv);
        let scale = 1.0 / self.grid.len() as f64;
        buf.iter().map(|z| z.re * scale).collect()
    }

    pub fn inverse_complex(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut buf = spectrum.to_vec();
        self.fft_axes(&mut buf, &self.inv);
        let scale = 1.0 / self.grid.len() as f64;
        for z in &mut buf {
            *z *= scale;
        }
        buf
    }

    /// Applies a Fourier multiplier `m(xi)` to every component of `f`.
    pub fn apply_multiplier(
        &self,
        f: &GridFunction,
        m: impl Fn(&[f64; 2]) -> Complex64 + Sync,
    ) -> GridFunction {
        let mut out = GridFunction::zeros(f.grid, f.components);
        for c in 0..f.components {
            let mut spec = self.forward(f.component(c));
            for (idx, z) in spec.iter_mut().enumerate() {
                *z *= m(&self.grid.freq_vec(idx));
            }
            out.component_mut(c).copy_from_slice(&self.inverse(&spec));
        }
        out
    }

    /// Synthesizes the field with continuum Fourier coefficients `c(xi)`:
    /// `f(x_j) = (1/V) sum_k c(xi_k) exp(i xi_k . x_j)`.
    pub fn synthesize(&self, c: impl Fn(&[f64; 2]) -> Complex64) -> GridFunction {
        let g = self.grid;
        let len = g.len();
        let mut spec = vec![Complex64::default(); len];
        for (idx, z) in spec.iter_mut().enumerate() {
            let ax = g.axes(idx);
            // exp(i xi_k . x_j) = (-1)^(k1+..+kd) omega^(jk) on x_j = -L + j h
            let parity = if g.d == 1 {
                ax[0]
            } else {
                ax[0] + ax[1]
            };
            let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
            *z = c(&g.freq_vec(idx)) * sign;
        }
        // plain inverse including 1/N^d, then rescale to 1/V
        let vals = self.inverse(&spec);
        let scale = len as f64 / g.volume();
        GridFunction::from_values(g, 1, vals.iter().map(|v| v * scale).collect()).unwrap()
    }

    /// Sign of `exp(i xi_k L)` per flat spectral index: corrects circular
    /// convolution for the box origin sitting at node `N/2`.
    pub fn origin_parity(&self, idx: usize) -> f64 {
        let ax = self.grid.axes(idx);
        if (ax[0] + ax[1]) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Combines two forward spectra into the spectrum of the continuum
    /// convolution `f * g` on the torus.
    pub fn conv_spectrum(&self, f_hat: &[Complex64], g_hat: &[Complex64]) -> Vec<Complex64> {
        let h = self.grid.cell_volume();
        f_hat
            .iter()
            .zip(g_hat)
            .enumerate()
            .map(|(idx, (a, b))| a * b * (h * self.origin_parity(idx)))
            .collect()
    }

    /// Periodic continuum convolution `f * g` (componentwise in `f`).
    pub fn convolve(&self, f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
        if f.grid != g.grid {
            return Err(Error::Domain("convolve: grid mismatch".into()));
        }
        if !g.is_scalar() && !f.is_scalar() {
            return Err(Error::Domain(
                "convolve: one argument must be scalar".into(),
            ));
        }
        let (vec_part, scal_part) = if g.is_scalar() { (f, g) } else { (g, f) };
        let ghat = self.forward(scal_part.component(0));
        let mut out = GridFunction::zeros(f.grid, vec_part.components);
        for c in 0..vec_part.components {
            let spec = self.forward(vec_part.component(c));
            let conv = self.conv_spectrum(&spec, &ghat);
            out.component_mut(c).copy_from_slice(&self.inverse(&conv));
        }
        Ok(out)
    }

    /// Spectral gradient of a scalar field (vector output, Nyquist zeroed).
    pub fn gradient(&self, f: &GridFunction) -> GridFunction {
        debug_assert!(f.is_scalar());
        let g = self.grid;
        let nyq = g.nyquist();
        let spec = self.forward(f.component(0));
        let mut out = GridFunction::zeros(g, g.d);
        for c in 0..g.d {
            let mut s = spec.clone();
            for (idx, z) in s.iter_mut().enumerate() {
                let xi = g.freq_vec(idx)[c];
                // odd multiplier: drop the unpaired Nyquist mode
                let m = if xi.abs() >= nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, xi)
                };
                *z *= m;
            }
            out.component_mut(c).copy_from_slice(&self.inverse(&s));
        }
        out
    }

    /// Spectral divergence of a vector field.
    pub fn divergence(&self, f: &GridFunction) -> Result<GridFunction> {
        let g = self.grid;
        if f.components != g.d {
            return Err(Error::Domain(format!(
                "divergence: field has {} components on a {}-d grid",
                f.components, g.d
            )));
        }
        let nyq = g.nyquist();
        let mut acc = vec![Complex64::default(); g.len()];
        for c in 0..g.d {
            let spec = self.forward(f.component(c));
            for (idx, z) in spec.iter().enumerate() {
                let xi = g.freq_vec(idx)[c];
                let m = if xi.abs() >= nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, xi)
                };
                acc[idx] += z * m;
            }
        }
        GridFunction::from_values(g, 1, self.inverse(&acc))
    }
}

/// Spectral resampling onto an `m`-point grid (zero-pad or truncate modes).
///
/// The continuum field is unchanged where band-limited; values are exact for
/// fields resolved on the coarser of the two grids.
pub fn resample(f: &GridFunction, m: usize) -> Result<GridFunction> {
    let g = f.grid;
    let tgt = Grid::new(g.d, m, g.l)?;
    if m == g.n {
        return Ok(f.clone());
    }
    let src_engine = Spectral::new(g);
    let tgt_engine = Spectral::new(tgt);
    let mut out = GridFunction::zeros(tgt, f.components);
    let half = g.n.min(m) / 2;
    let remap = |k_src: usize, n_src: usize, n_tgt: usize| -> Option<usize> {
        let k = k_src as i64;
        let n = n_src as i64;
        let signed = if k <= n / 2 - 1 { k } else { k - n };
        if signed.unsigned_abs() as usize >= half {
            return None; // drop Nyquist and unresolved modes
        }
        let nt = n_tgt as i64;
        Some(((signed + nt) % nt) as usize)
    };
    for c in 0..f.components {
        let spec = src_engine.forward(f.component(c));
        let mut tspec = vec![Complex64::default(); tgt.len()];
        let scale = m.pow(g.d as u32) as f64 / g.len() as f64;
        for (idx, z) in spec.iter().enumerate() {
            let ax = g.axes(idx);
            let kx = match remap(ax[0], g.n, m) {
                Some(k) => k,
                None => continue,
            };
            let tidx = if g.d == 1 {
                kx
            } else {
                match remap(ax[1], g.n, m) {
                    Some(ky) => ky * m + kx,
                    None => continue,
                }
            };
            tspec[tidx] = z * scale;
        }
        out.component_mut(c)
            .copy_from_slice(&tgt_engine.inverse(&tspec));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_field(grid: Grid, sigma: f64) -> GridFunction {
        GridFunction::sample_scalar(grid, |x, y| {
            let r2 = x * x + y * y;
            (-r2 / (2.0 * sigma * sigma)).exp()
                / (2.0 * std::f64::consts::PI * sigma * sigma).powf(grid.d as f64 / 2.0)
        })
    }

    #[test]
    fn convolution_of_gaussians_sums_variances() {
        let g = Grid::new(1, 512, 12.0).unwrap();
        let sp = Spectral::new(g);
        let f1 = gaussian_field(g, 0.6);
        let f2 = gaussian_field(g, 0.8);
        let conv = sp.convolve(&f1, &f2).unwrap();
        let sigma = (0.6f64.powi(2) + 0.8f64.powi(2)).sqrt();
        let expect = gaussian_field(g, sigma);
        let err = conv.sub(&expect).max_abs();
        assert!(err < 1e-8, "gaussian convolution error {err}");
    }

    #[test]
    fn convolution_with_dirac_is_identity() {
        let g = Grid::new(1, 128, 4.0).unwrap();
        let sp = Spectral::new(g);
        let f = GridFunction::sample_scalar(g, |x, _| (0.5 * x).cos());
        let mut delta = GridFunction::zeros(g, 1);
        delta.values[g.n / 2] = 1.0 / g.cell_volume(); // unit mass at the origin
        let conv = sp.convolve(&f, &delta).unwrap();
        let err = conv.sub(&f).max_abs();
        assert!(err < 1e-10, "dirac convolution error {err}");
    }

    #[test]
    fn gradient_matches_analytic() {
        let g = Grid::new(2, 64, std::f64::consts::PI).unwrap();
        let sp = Spectral::new(g);
        let f = GridFunction::sample_scalar(g, |x, y| (2.0 * x).sin() * (3.0 * y).cos());
        let grad = sp.gradient(&f);
        let gx = GridFunction::sample_scalar(g, |x, y| 2.0 * (2.0 * x).cos() * (3.0 * y).cos());
        let gy = GridFunction::sample_scalar(g, |x, y| -3.0 * (2.0 * x).sin() * (3.0 * y).sin());
        let ex = GridFunction::from_values(g, 1, grad.component(0).to_vec())
            .unwrap()
            .sub(&gx)
            .max_abs();
        let ey = GridFunction::from_values(g, 1, grad.component(1).to_vec())
            .unwrap()
            .sub(&gy)
            .max_abs();
        assert!(ex < 1e-10 && ey < 1e-10, "gradient errors {ex} {ey}");
    }

    #[test]
    fn divergence_of_curl_vanishes() {
        let g = Grid::new(2, 64, std::f64::consts::PI).unwrap();
        let sp = Spectral::new(g);
        let psi = GridFunction::sample_scalar(g, |x, y| (x).sin() * (2.0 * y).cos());
        let grad = sp.gradient(&psi);
        // curl-type field (-d2 psi, d1 psi)
        let mut curl = GridFunction::zeros(g, 2);
        for i in 0..g.len() {
            curl.component_mut(0)[i] = -grad.component(1)[i];
        }
        let gx: Vec<f64> = grad.component(0).to_vec();
        curl.component_mut(1).copy_from_slice(&gx);
        let div = sp.divergence(&curl).unwrap();
        assert!(div.max_abs() < 1e-10);
    }

    #[test]
    fn resample_preserves_bandlimited_values() {
        let g = Grid::new(1, 64, 2.0).unwrap();
        let f = GridFunction::sample_scalar(g, |x, _| (std::f64::consts::PI * x).sin());
        let up = resample(&f, 128).unwrap();
        let back = resample(&up, 64).unwrap();
        assert!(back.sub(&f).max_abs() < 1e-11);
        // upsampled field agrees at shared nodes
        for j in 0..64 {
            assert!((up.values[2 * j] - f.values[j]).abs() < 1e-11);
        }
    }
}
