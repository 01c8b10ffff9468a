//! Synthesis of interaction kernels with prescribed negative Besov
//! regularity, their divergence, and the Gaussian mollification ladder.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::besov::{BesovEvaluator, BesovSpec};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::spectral::Spectral;
use crate::stable::fit_log_slope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    RandomFourier,
    FractionalDerivativeGaussian,
    GradientPotential,
}

/// Recipe for one interaction kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub beta: f64,
    #[serde(
        deserialize_with = "crate::params::de_ext_pub",
        serialize_with = "crate::params::ser_ext_pub"
    )]
    pub p: f64,
    #[serde(
        deserialize_with = "crate::params::de_ext_pub",
        serialize_with = "crate::params::ser_ext_pub"
    )]
    pub q: f64,
    pub seed: u64,
    /// Piecewise-constant time slabs (1 = static kernel).
    #[serde(default = "one")]
    pub slabs: usize,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > -2.0 && self.beta <= 0.0) {
            return Err(Error::Domain(format!(
                "kernel regularity beta = {} must lie in (-2, 0]",
                self.beta
            )));
        }
        if self.slabs == 0 || self.slabs > 8 {
            return Err(Error::Domain("slab count must lie in 1..=8".into()));
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::Domain("amplitude must be positive".into()));
        }
        Ok(())
    }
}

/// A (possibly time-dependent) vector kernel: one field per time slab.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub spec: KernelSpec,
    pub slabs: Vec<GridFunction>,
}

impl Kernel {
    pub fn grid(&self) -> Grid {
        self.slabs[0].grid
    }

    /// Slab active at horizon fraction `frac` in [0, 1].
    pub fn field_at(&self, frac: f64) -> &GridFunction {
        let k = ((frac.clamp(0.0, 1.0)) * self.slabs.len() as f64).floor() as usize;
        &self.slabs[k.min(self.slabs.len() - 1)]
    }

    pub fn is_static(&self) -> bool {
        self.slabs.len() == 1
    }

    /// Lebesgue-in-time Besov norm over a horizon of length `t_len`:
    /// `ell^r` sum over slabs, sup for `r = inf`.
    pub fn lr_besov_norm(&self, ev: &BesovEvaluator, spec: &BesovSpec, r: f64, t_len: f64) -> f64 {
        let slab_norms: Vec<f64> = self.slabs.iter().map(|b| ev.norm_total(b, spec)).collect();
        if r.is_infinite() {
            slab_norms.into_iter().fold(0.0f64, f64::max)
        } else {
            let w = t_len / self.slabs.len() as f64;
            (slab_norms.iter().map(|n| w * n.powf(r)).sum::<f64>()).powf(1.0 / r)
        }
    }

    /// Componentwise spectral divergence of every slab.
    pub fn divergence(&self, sp: &Spectral) -> Result<Kernel> {
        let slabs = self
            .slabs
            .iter()
            .map(|b| divergence(sp, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Kernel {
            spec: self.spec.clone(),
            slabs,
        })
    }

    /// Gaussian mollification of every slab.
    pub fn mollify(&self, sp: &Spectral, epsilon: f64) -> Result<Kernel> {
        let slabs = self
            .slabs
            .iter()
            .map(|b| mollify(sp, b, epsilon))
            .collect::<Result<Vec<_>>>()?;
        Ok(Kernel {
            spec: self.spec.clone(),
            slabs,
        })
    }

    /// Spectral resample of every slab onto an `m`-point grid.
    pub fn resample(&self, m: usize) -> Result<Kernel> {
        let slabs = self
            .slabs
            .iter()
            .map(|b| crate::spectral::resample(b, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Kernel {
            spec: self.spec.clone(),
            slabs,
        })
    }
}

fn mode_stream(kx: i64, ky: i64) -> u64 {
    (((kx + (1 << 31)) as u64) << 32) | ((ky + (1 << 31)) as u64)
}

fn slab_seed(seed: u64, slab: usize) -> u64 {
    seed ^ (slab as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Draws the per-mode complex coefficient; fixed by (seed, mode) so that the
/// same continuum field is refined consistently across grid sizes.
fn mode_coeff(seed: u64, kx: i64, ky: i64) -> Complex64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mode_stream(kx, ky));
    let re: f64 = StandardNormal.sample(&mut rng);
    let im: f64 = StandardNormal.sample(&mut rng);
    Complex64::new(re, im) / std::f64::consts::SQRT_2
}

/// Synthesizes the kernel on `grid`; modes fill the resolved band.
pub fn synthesize_kernel(spec: &KernelSpec, grid: &Grid) -> Result<Kernel> {
    spec.validate()?;
    if grid.n < 64 {
        return Err(Error::Refused(format!(
            "grid N = {} too coarse to resolve the regularity probe (need N >= 64)",
            grid.n
        )));
    }
    let sp = Spectral::new(*grid);
    let mut slabs = Vec::with_capacity(spec.slabs);
    for slab in 0..spec.slabs {
        let seed = slab_seed(spec.seed, slab);
        let field = match spec.family {
            KernelFamily::RandomFourier => rough_field(spec, grid, &sp, seed, false),
            KernelFamily::FractionalDerivativeGaussian => rough_field(spec, grid, &sp, seed, true),
            KernelFamily::GradientPotential => gradient_potential(spec, grid, &sp, seed),
        };
        slabs.push(field);
    }
    Ok(Kernel {
        spec: spec.clone(),
        slabs,
    })
}

/// Random-Fourier / Bessel-smoothed-noise construction. The coefficient
/// envelope targets `B^beta`-type scaling; in d = 2 coefficients are
/// projected onto the divergence-free subspace so `div b = 0` identically.
fn rough_field(
    spec: &KernelSpec,
    grid: &Grid,
    sp: &Spectral,
    seed: u64,
    bessel: bool,
) -> GridFunction {
    let n = grid.n as i64;
    let d = grid.d;
    let len = grid.len();
    let mut spectra = vec![vec![Complex64::default(); len]; d];
    let envelope = |xi2: f64| -> f64 {
        let expo = -spec.beta - d as f64 / 2.0;
        if bessel {
            (1.0 + xi2).powf(expo / 2.0)
        } else {
            (1.0 + xi2.sqrt()).powf(expo)
        }
    };
    let signed = |k: usize| -> i64 {
        let k = k as i64;
        if k <= n / 2 - 1 {
            k
        } else {
            k - n
        }
    };
    for idx in 0..len {
        let ax = grid.axes(idx);
        let (kx, ky) = (signed(ax[0]), if d == 2 { signed(ax[1]) } else { 0 });
        // canonical half-space carries the draw, the mirror its conjugate
        let canonical = ky > 0 || (ky == 0 && kx > 0);
        if !canonical {
            continue;
        }
        // skip Nyquist lines: they have no conjugate partner on this grid
        if kx == -n / 2 || ky == -n / 2 {
            continue;
        }
        let xi = grid.freq_vec(idx);
        let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
        let sigma = spec.amplitude * envelope(xi2);
        let mut coeff = [Complex64::default(); 2];
        for (c, item) in coeff.iter_mut().enumerate().take(d) {
            *item = sigma * mode_coeff(seed.wrapping_add(c as u64), kx, ky);
        }
        if d == 2 && xi2 > 0.0 {
            // project onto k-perp: removes the divergence exactly
            let dot = (coeff[0] * xi[0] + coeff[1] * xi[1]) / xi2;
            coeff[0] -= dot * xi[0];
            coeff[1] -= dot * xi[1];
        }
        let mirror = {
            let mx = ((-kx).rem_euclid(n)) as usize;
            let my = ((-ky).rem_euclid(n)) as usize;
            if d == 1 {
                mx
            } else {
                my * grid.n + mx
            }
        };
        for c in 0..d {
            spectra[c][idx] = coeff[c] * len as f64;
            spectra[c][mirror] = coeff[c].conj() * len as f64;
        }
    }
    let mut out = GridFunction::zeros(*grid, d);
    for c in 0..d {
        out.component_mut(c).copy_from_slice(&sp.inverse(&spectra[c]));
    }
    out
}

/// Smooth closed-form field `b = grad psi` with a low-frequency random potential.
fn gradient_potential(spec: &KernelSpec, grid: &Grid, sp: &Spectral, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.l;
    let mut modes = Vec::new();
    for kx in -4i64..=4 {
        for ky in if grid.d == 2 { -4i64..=4 } else { 0..=0 } {
            if kx == 0 && ky == 0 {
                continue;
            }
            let a: f64 = rng.gen_range(-1.0..1.0);
            let ph: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            modes.push((kx, ky, a, ph));
        }
    }
    let pi = std::f64::consts::PI;
    let psi = GridFunction::sample_scalar(*grid, |x, y| {
        spec.amplitude
            * modes
                .iter()
                .map(|(kx, ky, a, ph)| {
                    a * (pi * (*kx as f64 * x + *ky as f64 * y) / l + ph).cos()
                })
                .sum::<f64>()
    });
    sp.gradient(&psi)
}

/// Spectral divergence (free-function form of the module operation).
pub fn divergence(sp: &Spectral, b: &GridFunction) -> Result<GridFunction> {
    if b.grid.d == 1 {
        // 1-d divergence is the derivative of the single component
        let scalar = GridFunction::from_values(b.grid, 1, b.component(0).to_vec())?;
        let grad = sp.gradient(&scalar);
        GridFunction::from_values(b.grid, 1, grad.component(0).to_vec())
    } else {
        sp.divergence(b)
    }
}

/// Gaussian mollification `b * eta_eps` (spectrum times `exp(-eps^2 |xi|^2 / 2)`).
pub fn mollify(sp: &Spectral, b: &GridFunction, epsilon: f64) -> Result<GridFunction> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} must be > 0")));
    }
    Ok(sp.apply_multiplier(b, |xi| {
        let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
        Complex64::new((-0.5 * epsilon * epsilon * xi2).exp(), 0.0)
    }))
}

/// Whether the mollifier width is resolved by the grid spacing.
pub fn mollifier_resolved(grid: &Grid, epsilon: f64) -> bool {
    epsilon >= grid.h()
}

/// Mollification-quality report over an epsilon ladder.
#[derive(Debug, Clone, Serialize)]
pub struct MollifierReport {
    pub epsilons: Vec<f64>,
    /// Estimate of kappa: sup over eps of the same-index norm ratio.
    pub sup_norm_ratio: f64,
    /// Rows indexed by beta_bar: `|b - b^eps|` in `B^(beta_bar)_(p,q)` per eps.
    pub convergence_table: Vec<Vec<f64>>,
    pub beta_bars: Vec<f64>,
    pub under_resolved: Vec<f64>,
}

pub fn mollifier_report(
    b: &GridFunction,
    spec: &KernelSpec,
    epsilons: &[f64],
    beta_bars: &[f64],
    ev: &BesovEvaluator,
) -> Result<MollifierReport> {
    for bb in beta_bars {
        if *bb >= spec.beta {
            return Err(Error::Domain(format!(
                "convergence holds for beta_bar < beta only; got beta_bar = {bb}"
            )));
        }
    }
    let sp = Spectral::new(b.grid);
    let base_spec = BesovSpec::new(spec.beta, spec.p, spec.q)?;
    let base_norm = ev.norm_total(b, &base_spec);
    let mut sup_ratio = 1.0f64;
    let mut table = vec![Vec::with_capacity(epsilons.len()); beta_bars.len()];
    let mut under_resolved = Vec::new();
    for &eps in epsilons {
        if !mollifier_resolved(&b.grid, eps) {
            under_resolved.push(eps);
        }
        let beps = mollify(&sp, b, eps)?;
        sup_ratio = sup_ratio.max(ev.norm_total(&beps, &base_spec) / base_norm);
        let diff = b.sub(&beps);
        for (row, bb) in table.iter_mut().zip(beta_bars) {
            row.push(ev.norm_total(&diff, &BesovSpec::new(*bb, spec.p, spec.q)?));
        }
    }
    Ok(MollifierReport {
        epsilons: epsilons.to_vec(),
        sup_norm_ratio: sup_ratio,
        convergence_table: table,
        beta_bars: beta_bars.to_vec(),
        under_resolved,
    })
}

/// Fitted slope of `ln |b|_(gamma,p,q)` against `ln N` over a grid ladder:
/// positive slope = unresolved norm growth (divergence at that index).
pub fn regularity_probe(
    spec: &KernelSpec,
    l: f64,
    grid_sizes: &[usize],
    gamma: f64,
    alpha_ref: f64,
) -> Result<f64> {
    let mut ns = Vec::new();
    let mut norms = Vec::new();
    for &n in grid_sizes {
        let grid = Grid::new(1, n, l)?;
        let kernel = synthesize_kernel(spec, &grid)?;
        let ev = BesovEvaluator::new(grid, alpha_ref);
        let bspec = BesovSpec::new(gamma, spec.p, spec.q)?;
        ns.push(n as f64);
        norms.push(ev.norm_total(&kernel.slabs[0], &bspec));
    }
    fit_log_slope(&ns, &norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::lp_norm;

    fn rf_spec(beta: f64, seed: u64) -> KernelSpec {
        KernelSpec {
            family: KernelFamily::RandomFourier,
            beta,
            p: f64::INFINITY,
            q: f64::INFINITY,
            seed,
            slabs: 1,
            amplitude: 1.0,
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let grid = Grid::new(1, 128, 10.0).unwrap();
        let a = synthesize_kernel(&rf_spec(-1.9, 7), &grid).unwrap();
        let b = synthesize_kernel(&rf_spec(-1.9, 7), &grid).unwrap();
        assert_eq!(a.slabs[0].values, b.slabs[0].values);
        let c = synthesize_kernel(&rf_spec(-1.9, 8), &grid).unwrap();
        assert_ne!(a.slabs[0].values, c.slabs[0].values);
    }

    #[test]
    fn refuses_coarse_grids() {
        let grid = Grid::new(1, 32, 10.0).unwrap();
        assert!(synthesize_kernel(&rf_spec(-1.5, 1), &grid).is_err());
    }

    #[test]
    fn refinement_shares_modes() {
        // the same continuum object is sampled on both grids
        let coarse = Grid::new(1, 128, 10.0).unwrap();
        let fine = Grid::new(1, 256, 10.0).unwrap();
        let a = synthesize_kernel(&rf_spec(-1.9, 3), &coarse).unwrap();
        let b = synthesize_kernel(&rf_spec(-1.9, 3), &fine).unwrap();
        let b_down = b.resample(128).unwrap();
        // shared modes agree; the fine grid only adds new high modes
        let sp = Spectral::new(coarse);
        let sa = sp.forward(a.slabs[0].component(0));
        let sb = sp.forward(b_down.slabs[0].component(0));
        for k in 0..40 {
            assert!(
                (sa[k] - sb[k]).norm() < 1e-6 * sa[k].norm().max(1.0),
                "mode {k} differs"
            );
        }
    }

    #[test]
    fn divergence_examples() {
        let grid2 = Grid::new(2, 64, 5.0).unwrap();
        let sp2 = Spectral::new(grid2);
        // constant field
        let mut constant = GridFunction::zeros(grid2, 2);
        constant.component_mut(0).fill(1.3);
        constant.component_mut(1).fill(-0.4);
        assert!(divergence(&sp2, &constant).unwrap().max_abs() < 1e-12);

        // curl-type field
        let psi = GridFunction::sample_scalar(grid2, |x, y| {
            (std::f64::consts::PI * x / 5.0).sin() * (std::f64::consts::PI * y / 2.5).cos()
        });
        let grad = sp2.gradient(&psi);
        let mut curl = GridFunction::zeros(grid2, 2);
        for i in 0..grid2.len() {
            curl.component_mut(0)[i] = -grad.component(1)[i];
        }
        let gx = grad.component(0).to_vec();
        curl.component_mut(1).copy_from_slice(&gx);
        assert!(divergence(&sp2, &curl).unwrap().max_abs() < 1e-10);

        // projected random field in d = 2 is divergence-free
        let mut spec = rf_spec(-1.5, 9);
        spec.p = 2.0;
        let k = synthesize_kernel(&spec, &grid2).unwrap();
        let div = divergence(&sp2, &k.slabs[0]).unwrap();
        assert!(
            div.max_abs() < 1e-8 * k.slabs[0].max_abs().max(1.0),
            "projected divergence too large"
        );

        // d = 1: spectral derivative vs centered differences
        let grid1 = Grid::new(1, 512, 10.0).unwrap();
        let sp1 = Spectral::new(grid1);
        let mut smooth_spec = rf_spec(0.0, 4);
        smooth_spec.family = KernelFamily::GradientPotential;
        let k1 = synthesize_kernel(&smooth_spec, &grid1).unwrap();
        let d1 = divergence(&sp1, &k1.slabs[0]).unwrap();
        let h = grid1.h();
        let vals = k1.slabs[0].component(0);
        let mut max_err = 0.0f64;
        let mut max_mag = 0.0f64;
        for j in 0..grid1.n {
            let fd = (vals[(j + 1) % grid1.n] - vals[(j + grid1.n - 1) % grid1.n]) / (2.0 * h);
            max_err = max_err.max((fd - d1.values[j]).abs());
            max_mag = max_mag.max(d1.values[j].abs());
        }
        assert!(max_err < 1e-2 * max_mag, "fd mismatch {max_err} vs {max_mag}");
    }

    #[test]
    fn mollify_preserves_component_means_and_commutes() {
        let grid = Grid::new(1, 256, 10.0).unwrap();
        let sp = Spectral::new(grid);
        let k = synthesize_kernel(&rf_spec(-1.9, 11), &grid).unwrap();
        let b = &k.slabs[0];
        let beps = mollify(&sp, b, 0.1).unwrap();
        for (m0, m1) in b.component_means().iter().zip(beps.component_means()) {
            assert!((m0 - m1).abs() < 1e-12);
        }
        // spectral multipliers commute exactly
        let a = divergence(&sp, &mollify(&sp, b, 0.1).unwrap()).unwrap();
        let c = mollify(&sp, &divergence(&sp, b).unwrap(), 0.1).unwrap();
        assert!(a.sub(&c).max_abs() <= 1e-12 * a.max_abs().max(1.0));
    }

    #[test]
    fn mollify_l2_convergence_on_smooth_field() {
        let grid = Grid::new(1, 512, 10.0).unwrap();
        let sp = Spectral::new(grid);
        let f = GridFunction::sample_scalar(grid, |x, _| (-(x * x) / 2.0).exp());
        let mut errs = Vec::new();
        let eps_list = [0.4, 0.2, 0.1, 0.05];
        for eps in eps_list {
            let feps = mollify(&sp, &f, eps).unwrap();
            errs.push(lp_norm(&f.sub(&feps), 2.0));
        }
        let slope = fit_log_slope(&eps_list.to_vec(), &errs).unwrap();
        assert!(
            (slope - 2.0).abs() < 0.2,
            "O(eps^2) Taylor rate expected, got {slope}"
        );
    }

    #[test]
    fn mollifier_kappa_non_expansive_on_bandlimited() {
        let grid = Grid::new(1, 256, 10.0).unwrap();
        let ev = BesovEvaluator::new(grid, 2.0);
        let f = GridFunction::sample_scalar(grid, |x, _| {
            (std::f64::consts::PI * x / 10.0).sin() + 0.3 * (std::f64::consts::PI * x / 2.0).cos()
        });
        let spec = KernelSpec {
            family: KernelFamily::RandomFourier,
            beta: -1.5,
            p: 2.0,
            q: 1.0,
            seed: 0,
            slabs: 1,
            amplitude: 1.0,
        };
        let rep = mollifier_report(&f, &spec, &[0.2, 0.1, 0.05], &[-1.6], &ev).unwrap();
        assert!(rep.sup_norm_ratio <= 1.0 + 1e-6, "kappa {}", rep.sup_norm_ratio);
    }

    #[test]
    fn mollifier_convergence_table_decreases() {
        let grid = Grid::new(1, 512, 10.0).unwrap();
        let ev = BesovEvaluator::new(grid, 2.0);
        let spec = rf_spec(-1.9, 21);
        let k = synthesize_kernel(&spec, &grid).unwrap();
        let rep = mollifier_report(
            &k.slabs[0],
            &spec,
            &[0.4, 0.2, 0.1, 0.05],
            &[-1.95],
            &ev,
        )
        .unwrap();
        let row = &rep.convergence_table[0];
        for w in row.windows(2) {
            assert!(
                w[1] <= w[0] * 1.05,
                "convergence table not decreasing: {row:?}"
            );
        }
        assert!(rep.sup_norm_ratio >= 1.0);
        // beta_bar >= beta refused
        assert!(mollifier_report(&k.slabs[0], &spec, &[0.1], &[-1.8], &ev).is_err());
    }

    #[test]
    fn gradient_potential_is_smooth_at_all_negative_indices() {
        let grid = Grid::new(1, 256, 10.0).unwrap();
        let ev = BesovEvaluator::new(grid, 2.0);
        let mut spec = rf_spec(-1.0, 5);
        spec.family = KernelFamily::GradientPotential;
        let k = synthesize_kernel(&spec, &grid).unwrap();
        for gamma in [-1.9, -1.0, -0.3] {
            let r = ev.norm(
                &k.slabs[0],
                &BesovSpec::new(gamma, f64::INFINITY, f64::INFINITY).unwrap(),
            );
            assert!(!r.diverged && r.total.is_finite());
        }
    }

    #[test]
    fn refinement_probe_separates_regularity() {
        // fitted N-slope of the norm: positive above the target index,
        // flat at or below it
        let sizes = [128usize, 256, 512];
        for seed in 0..10 {
            let spec = rf_spec(-1.9, seed);
            let above = regularity_probe(&spec, 10.0, &sizes, -1.9 + 0.3, 2.0).unwrap();
            let below = regularity_probe(&spec, 10.0, &sizes, -1.9 - 0.1, 2.0).unwrap();
            assert!(above > 0.0, "seed {seed}: slope above beta {above}");
            assert!(below <= 0.02, "seed {seed}: slope below beta {below}");
        }
    }

    #[test]
    fn time_slabs_are_distinct_and_deterministic() {
        let grid = Grid::new(1, 128, 10.0).unwrap();
        let mut spec = rf_spec(-1.5, 13);
        spec.slabs = 3;
        let k = synthesize_kernel(&spec, &grid).unwrap();
        assert_eq!(k.slabs.len(), 3);
        assert_ne!(k.slabs[0].values, k.slabs[1].values);
        assert_eq!(k.field_at(0.0).values, k.slabs[0].values);
        assert_eq!(k.field_at(0.99).values, k.slabs[2].values);
        let k2 = synthesize_kernel(&spec, &grid).unwrap();
        assert_eq!(k.slabs[2].values, k2.slabs[2].values);
    }
}
