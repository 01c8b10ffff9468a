//! Mollified nonlinear Fokker-Planck equation in Duhamel (mild) form:
//! Picard fixed-point iteration with an exact product-integrator in time,
//! weighted-norm tracking, Gronwall envelopes, epsilon-Cauchy sweeps and
//! drift-integrability reports.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::besov::{weight, BesovEvaluator, BesovSpec, WeightSpec};
use crate::error::{Error, Result};
use crate::exponents::recip;
use crate::grid::{Grid, GridFunction};
use crate::kernels::Kernel;
use crate::params::{
    check_c2star, check_c3lt, gamma_exponents, gronwall_roots, horizon_exponent, time_horizon,
    ParameterSet,
};
use crate::spectral::Spectral;

/// Time weight attached to the tracked norm.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum TimeWeight {
    /// `(s - t0)^gamma`.
    Power(f64),
    /// `(s-t0 and 1)^gamma1 (s-t0 or 1)^gamma2`.
    LongTime { gamma1: f64, gamma2: f64 },
}

impl TimeWeight {
    pub fn eval(&self, elapsed: f64) -> f64 {
        match *self {
            TimeWeight::Power(g) => elapsed.powf(g),
            TimeWeight::LongTime { gamma1, gamma2 } => weight(
                &WeightSpec {
                    lambda1: gamma1,
                    lambda2: gamma2,
                },
                elapsed,
            ),
        }
    }
}

/// Norm tracked by the solver: weighted Besov norm of the density frames.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrackSpec {
    pub alpha: f64,
    pub weight: TimeWeight,
    pub spec: BesovSpec,
}

/// Endpoint handling of the Duhamel time integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    /// Product trapezoid: linear interpolation of the nonlinearity against
    /// the exactly integrated heat-kernel factor (singularity-safe).
    Product,
    /// Plain trapezoid on the integrand; loses an order at the endpoint.
    Naive,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub quad_rule: QuadRule,
    pub mass_tol: f64,
    /// Mollification level the kernel was resolved at (metadata).
    pub epsilon: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1.0 / 128.0,
            picard_tol: 1e-8,
            picard_max: 60,
            quad_rule: QuadRule::Product,
            mass_tol: 1e-3,
            epsilon: 0.05,
        }
    }
}

/// Time-indexed sequence of density frames with weighted-norm metadata.
#[derive(Debug, Clone)]
pub struct DensityPath {
    pub grid: Grid,
    pub t0: f64,
    pub times: Vec<f64>,
    pub frames: Vec<GridFunction>,
    pub gamma_meta: TrackSpec,
}

impl DensityPath {
    pub fn frame(&self, i: usize) -> &GridFunction {
        &self.frames[i]
    }

    /// Frame with negative spectral-truncation values clipped to zero and
    /// renormalized; reporting only, never used inside the iteration.
    pub fn frame_clipped(&self, i: usize) -> GridFunction {
        let mut f = self.frames[i].clone();
        for v in &mut f.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let m = f.mass();
        if m > 0.0 {
            f.scale(1.0 / m);
        }
        f
    }

    pub fn masses(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.mass()).collect()
    }

    /// Besov norm of every frame in the tracked spec.
    pub fn node_norms(&self, ev: &BesovEvaluator) -> Vec<f64> {
        self.frames
            .iter()
            .map(|f| ev.norm_total(f, &self.gamma_meta.spec))
            .collect()
    }

    /// Running supremum `f(s) = sup_(v <= s) w(v - t0) |rho(v)|_B`.
    pub fn weighted_sup_curve(&self, ev: &BesovEvaluator) -> Vec<f64> {
        let norms = self.node_norms(ev);
        let mut acc = 0.0f64;
        self.times
            .iter()
            .zip(&norms)
            .map(|(s, n)| {
                acc = acc.max(self.gamma_meta.weight.eval(s - self.t0) * n);
                acc
            })
            .collect()
    }
}

/// Running max of `(v - t0)^gamma * |rho(v)|_(spec)` (free-standing form).
pub fn weighted_sup_path(
    path: &DensityPath,
    gamma: f64,
    spec: &BesovSpec,
    ev: &BesovEvaluator,
) -> Vec<f64> {
    let mut acc = 0.0f64;
    path.times
        .iter()
        .zip(&path.frames)
        .map(|(s, f)| {
            acc = acc.max((s - path.t0).powf(gamma) * ev.norm_total(f, spec));
            acc
        })
        .collect()
}

/// Result of one Picard solve.
#[derive(Debug)]
pub struct SolveOutput {
    pub path: DensityPath,
    pub iterations: usize,
    /// Weighted sup Duhamel residual of the returned path.
    pub residual: f64,
    pub residual_curve: Vec<f64>,
    /// Iterate-distance history (for the contraction probe).
    pub distances: Vec<f64>,
}

/// Picard initialization strategies (the second one is the uniqueness probe).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicardInit {
    HeatFlow,
    Uniform,
}

/// phi1(x) = (1 - (1+x) e^-x) / x^2, series-safe near zero.
fn phi1(x: f64) -> f64 {
    if x < 1e-4 {
        0.5 - x / 3.0 + x * x / 8.0
    } else {
        (1.0 - (1.0 + x) * (-x).exp()) / (x * x)
    }
}

/// phi2(x) = (x - 1 + e^-x) / x^2, series-safe near zero.
fn phi2(x: f64) -> f64 {
    if x < 1e-4 {
        0.5 - x / 6.0 + x * x / 24.0
    } else {
        (x - 1.0 + (-x).exp()) / (x * x)
    }
}

/// Componentwise spectral convolution drift `B_rho = b * rho`.
pub fn convolution_drift(
    sp: &Spectral,
    b: &GridFunction,
    rho: &GridFunction,
) -> Result<GridFunction> {
    sp.convolve(b, rho)
}

pub struct FpSolver<'k> {
    pub grid: Grid,
    sp: Spectral,
    pub ev: BesovEvaluator,
    kernel: Option<&'k Kernel>,
    pub cfg: SolverConfig,
    pub track: TrackSpec,
    /// |xi|^alpha per flat spectral index.
    symbol: Vec<f64>,
}

impl<'k> FpSolver<'k> {
    /// `kernel = None` means the zero drift (pure heat flow).
    pub fn new(
        grid: Grid,
        kernel: Option<&'k Kernel>,
        cfg: SolverConfig,
        track: TrackSpec,
    ) -> Result<Self> {
        if let Some(k) = kernel {
            if k.grid() != grid {
                return Err(Error::Domain(
                    "kernel grid does not match solver grid".into(),
                ));
            }
        }
        if !(cfg.dt > 0.0 && cfg.picard_tol > 0.0) {
            return Err(Error::Domain("dt and picard_tol must be positive".into()));
        }
        let t_min = crate::stable::min_resolvable_time(&grid, track.alpha);
        if cfg.dt < t_min {
            return Err(Error::Domain(format!(
                "dt = {} below the minimum resolvable time {t_min:.3e} of this grid",
                cfg.dt
            )));
        }
        let symbol: Vec<f64> = (0..grid.len())
            .map(|idx| grid.freq_norm2(idx).sqrt().powf(track.alpha))
            .collect();
        Ok(FpSolver {
            grid,
            sp: Spectral::new(grid),
            ev: BesovEvaluator::new(grid, track.alpha),
            kernel,
            cfg,
            track,
            symbol,
        })
    }

    fn node_count(&self, t0: f64, s_end: f64) -> Result<usize> {
        let span = s_end - t0;
        if !(span > 0.0) {
            return Err(Error::Domain(
                "horizon must exceed the initial time".into(),
            ));
        }
        let m = (span / self.cfg.dt).round();
        if (m * self.cfg.dt - span).abs() > 1e-9 * span.max(1.0) || m < 1.0 {
            return Err(Error::Domain(format!(
                "horizon length {span} must be a positive multiple of dt = {}",
                self.cfg.dt
            )));
        }
        Ok(m as usize)
    }

    /// Free heat flow `p^alpha_(s_i - t0) * mu` for every node (spectra).
    fn free_flow(&self, mu_hat: &[Complex64], m: usize) -> Vec<Vec<Complex64>> {
        let step: Vec<f64> = self
            .symbol
            .iter()
            .map(|a| (-self.cfg.dt * a).exp())
            .collect();
        let mut flows = Vec::with_capacity(m + 1);
        flows.push(mu_hat.to_vec());
        for i in 1..=m {
            let next: Vec<Complex64> = flows[i - 1]
                .iter()
                .zip(&step)
                .map(|(z, e)| z * e)
                .collect();
            flows.push(next);
        }
        flows
    }

    /// Forward spectra of the nonlinearity `g_i = B^eps_(rho_i) . rho_i`
    /// (one spectrum per component).
    fn nonlinearity_hat(&self, frame: &GridFunction, frac: f64) -> Result<Vec<Vec<Complex64>>> {
        let kernel = self.kernel.expect("kernel present");
        let b = kernel.field_at(frac);
        let drift = self.sp.convolve(b, frame)?;
        let g = drift.mul_scalar_field(frame);
        let mut out = Vec::with_capacity(g.components);
        for c in 0..g.components {
            out.push(self.sp.forward(g.component(c)));
        }
        Ok(out)
    }

    /// One application of the Duhamel right-hand side to `frames`.
    fn apply_rhs(
        &self,
        frames: &[GridFunction],
        free: &[Vec<Complex64>],
        span: f64,
    ) -> Result<Vec<GridFunction>> {
        let m = frames.len() - 1;
        let len = self.grid.len();
        let d = self.grid.d;
        let dt = self.cfg.dt;

        let mut new_frames = Vec::with_capacity(m + 1);
        new_frames.push(frames[0].clone()); // initial condition is pinned

        if self.kernel.is_none() {
            for flow in free.iter().take(m + 1).skip(1) {
                new_frames.push(GridFunction::from_values(
                    self.grid,
                    1,
                    self.sp.inverse(flow),
                )?);
            }
            return Ok(new_frames);
        }

        // exact per-interval integration of exp(-u a) du against the linear
        // interpolant of g; the naive rule keeps plain trapezoid weights
        let decay: Vec<f64> = self.symbol.iter().map(|a| (-dt * a).exp()).collect();
        let (w_lo, w_hi): (Vec<f64>, Vec<f64>) = match self.cfg.quad_rule {
            QuadRule::Product => (
                self.symbol.iter().map(|a| dt * phi1(dt * a)).collect(),
                self.symbol.iter().map(|a| dt * phi2(dt * a)).collect(),
            ),
            QuadRule::Naive => (
                self.symbol
                    .iter()
                    .map(|a| 0.5 * dt * (-dt * a).exp())
                    .collect(),
                vec![0.5 * dt; len],
            ),
        };

        let nyq = self.grid.nyquist();

        let mut acc = vec![vec![Complex64::default(); len]; d];
        let mut g_prev = self.nonlinearity_hat(&frames[0], 0.0)?;
        for i in 1..=m {
            let frac = (i as f64 * dt) / span;
            let g_cur = self.nonlinearity_hat(&frames[i], frac)?;
            // acc <- E acc + w_lo g_(i-1) + w_hi g_i  (per component, per mode)
            for c in 0..d {
                let (acc_c, gp, gc) = (&mut acc[c], &g_prev[c], &g_cur[c]);
                for k in 0..len {
                    acc_c[k] = acc_c[k] * decay[k] + gp[k] * w_lo[k] + gc[k] * w_hi[k];
                }
            }
            // correction spectrum: sum_c (i xi_c) acc_c; the heat-kernel
            // factor has a known continuum spectrum so no grid-sampling
            // normalization enters here
            let mut corr = vec![Complex64::default(); len];
            for (c, acc_c) in acc.iter().enumerate() {
                for k in 0..len {
                    let xi = self.grid.freq_vec(k)[c];
                    if xi.abs() >= nyq {
                        continue;
                    }
                    corr[k] += Complex64::new(0.0, xi) * acc_c[k];
                }
            }
            let vals: Vec<f64> = self
                .sp
                .inverse(&free[i])
                .iter()
                .zip(self.sp.inverse(&corr))
                .map(|(f, c)| f - c)
                .collect();
            new_frames.push(GridFunction::from_values(self.grid, 1, vals)?);
            g_prev = g_cur;
        }
        Ok(new_frames)
    }

    pub fn weighted_distance(
        &self,
        a: &[GridFunction],
        b: &[GridFunction],
        times: &[f64],
        t0: f64,
    ) -> f64 {
        let mut dist = 0.0f64;
        for i in 1..a.len() {
            let diff = a[i].sub(&b[i]);
            let n = self.ev.norm_fast(&diff, &self.track.spec);
            dist = dist.max(self.track.weight.eval(times[i] - t0) * n);
        }
        dist
    }

    pub fn solve(
        &self,
        mu: &GridFunction,
        t0: f64,
        s_end: f64,
        init: PicardInit,
    ) -> Result<SolveOutput> {
        if !mu.is_scalar() || mu.grid != self.grid {
            return Err(Error::Domain(
                "mu must be a scalar field on the solver grid".into(),
            ));
        }
        if (mu.mass() - 1.0).abs() > self.cfg.mass_tol {
            return Err(Error::Domain(format!(
                "initial law mass {} not within mass_tol of 1",
                mu.mass()
            )));
        }
        let m = self.node_count(t0, s_end)?;
        let span = s_end - t0;
        let times: Vec<f64> = (0..=m).map(|i| t0 + i as f64 * self.cfg.dt).collect();
        let mu_hat = self.sp.forward(mu.component(0));
        let free = self.free_flow(&mu_hat, m);

        let mut frames: Vec<GridFunction> = match init {
            PicardInit::HeatFlow => free
                .iter()
                .map(|f| GridFunction::from_values(self.grid, 1, self.sp.inverse(f)))
                .collect::<Result<_>>()?,
            PicardInit::Uniform => {
                let uniform = GridFunction::from_values(
                    self.grid,
                    1,
                    vec![1.0 / self.grid.volume(); self.grid.len()],
                )?;
                let mut v = vec![uniform; m + 1];
                v[0] = mu.clone();
                v
            }
        };

        let mut distances = Vec::new();
        let mut grown = 0usize;
        let mut converged = self.kernel.is_none() && init == PicardInit::HeatFlow;
        if converged {
            distances.push(0.0);
        }
        while !converged && distances.len() < self.cfg.picard_max {
            let next = self.apply_rhs(&frames, &free, span)?;
            if next.iter().any(|f| !f.all_finite()) {
                return Err(Error::Numeric(
                    "Picard iterate left the finite range".into(),
                ));
            }
            let dist = self.weighted_distance(&next, &frames, &times, t0);
            frames = next;
            if let Some(&last) = distances.last() {
                grown = if dist > last { grown + 1 } else { 0 };
            }
            distances.push(dist);
            if grown >= 3 {
                return Err(Error::HorizonTooLong(format!(
                    "Picard distances grew over 3 iterations ({:?}); shorten the horizon S \
                     (it scales like (4 C0 Cb)^(1/negative exponent))",
                    &distances[distances.len().saturating_sub(4)..]
                )));
            }
            if dist < self.cfg.picard_tol {
                converged = true;
            }
        }
        if !converged {
            return Err(Error::Numeric(format!(
                "Picard iteration did not reach tol {} within {} iterations (last distance {:?})",
                self.cfg.picard_tol,
                self.cfg.picard_max,
                distances.last()
            )));
        }

        for (i, f) in frames.iter().enumerate() {
            let drift = (f.mass() - 1.0).abs();
            if drift > self.cfg.mass_tol {
                return Err(Error::Numeric(format!(
                    "mass drift {drift:.3e} at node {i} exceeds mass_tol; refine the quadrature"
                )));
            }
        }

        // Duhamel residual of the accepted path
        let (residual, residual_curve) = if self.kernel.is_none() {
            (0.0, vec![0.0; m + 1])
        } else {
            let check = self.apply_rhs(&frames, &free, span)?;
            let mut curve = Vec::with_capacity(m + 1);
            let mut worst = 0.0f64;
            for i in 0..=m {
                let diff = check[i].sub(&frames[i]);
                let w = self.track.weight.eval(times[i] - t0);
                let r = w * self.ev.norm_fast(&diff, &self.track.spec);
                curve.push(r);
                worst = worst.max(r);
            }
            (worst, curve)
        };

        Ok(SolveOutput {
            path: DensityPath {
                grid: self.grid,
                t0,
                times,
                frames,
                gamma_meta: self.track,
            },
            iterations: distances.len(),
            residual,
            residual_curve,
            distances,
        })
    }
}

/// Short-time tracked norm from the parameter set:
/// weight `(s-t)^gamma`, space `B^(-beta-theta)_(p',1)`.
pub fn short_time_track(ps: &ParameterSet) -> Result<TrackSpec> {
    let dq = gamma_exponents(ps)?;
    Ok(TrackSpec {
        alpha: ps.alpha,
        weight: TimeWeight::Power(dq.gamma),
        spec: BesovSpec::new(-ps.beta - ps.theta, ps.p_conj(), 1.0)?,
    })
}

/// Long-time tracked norm: weight `w^(gamma2)_(gamma1)`, same space.
pub fn long_time_track(ps: &ParameterSet) -> Result<TrackSpec> {
    let dq = gamma_exponents(ps)?;
    Ok(TrackSpec {
        alpha: ps.alpha,
        weight: TimeWeight::LongTime {
            gamma1: dq.gamma1,
            gamma2: dq.gamma2,
        },
        spec: BesovSpec::new(-ps.beta - ps.theta, ps.p_conj(), 1.0)?,
    })
}

/// Classical-regime tracked norm: weight `(s-t)^(gamma*)`,
/// space `B^(-beta+Gamma)_(p',1)`.
pub fn classical_track(ps: &ParameterSet) -> Result<TrackSpec> {
    let dq = gamma_exponents(ps)?;
    Ok(TrackSpec {
        alpha: ps.alpha,
        weight: TimeWeight::Power(dq.gamma_star),
        spec: BesovSpec::new(-ps.beta + dq.gamma_cl, ps.p_conj(), 1.0)?,
    })
}

/// Solves the mollified equation with heat-flow initialization.
pub fn solve_mollified_fp(
    kernel: Option<&Kernel>,
    mu: &GridFunction,
    t0: f64,
    s_end: f64,
    cfg: &SolverConfig,
    track: &TrackSpec,
) -> Result<SolveOutput> {
    let solver = FpSolver::new(mu.grid, kernel, *cfg, *track)?;
    solver.solve(mu, t0, s_end, PicardInit::HeatFlow)
}

/// Smallness gate for running beyond the short-time horizon.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LongTimeGate {
    /// Short-time horizon increment.
    pub t_short: f64,
    /// Smallness threshold on the initial-law norm.
    pub c0: f64,
}

/// Long-time solve: same Picard engine in the `w^(gamma2)_(gamma1)` space,
/// gated by the initial-data smallness condition past the short horizon.
#[allow(clippy::too_many_arguments)]
pub fn solve_fp_longtime(
    kernel: Option<&Kernel>,
    mu: &GridFunction,
    t0: f64,
    s_end: f64,
    cfg: &SolverConfig,
    ps: &ParameterSet,
    mu_norm: f64,
    gate: Option<&LongTimeGate>,
) -> Result<(SolveOutput, Vec<f64>)> {
    let lt = check_c3lt(ps);
    if !lt.satisfied {
        return Err(Error::Infeasible(format!(
            "long-time chain condition violated: {:?}",
            lt.violated_clauses
        )));
    }
    if let Some(g) = gate {
        if s_end - t0 > g.t_short && mu_norm >= g.c0 {
            return Err(Error::Refused(format!(
                "initial-law norm {mu_norm:.4e} >= smallness gate {:.4e} while S - t0 = {} \
                 exceeds the short horizon {}",
                g.c0,
                s_end - t0,
                g.t_short
            )));
        }
    }
    let track = long_time_track(ps)?;
    let solver = FpSolver::new(mu.grid, kernel, *cfg, track)?;
    let out = solver.solve(mu, t0, s_end, PicardInit::HeatFlow)?;
    let report = out.path.weighted_sup_curve(&solver.ev);
    Ok((out, report))
}

/// Classical-regime solve (`theta = 0`, norms tracked at `-beta + Gamma`).
pub fn solve_fp_classical(
    kernel: Option<&Kernel>,
    mu: &GridFunction,
    t0: f64,
    s_end: f64,
    cfg: &SolverConfig,
    ps: &ParameterSet,
) -> Result<(SolveOutput, Vec<f64>)> {
    if ps.theta != 0.0 {
        return Err(Error::Infeasible(
            "classical regime requires theta = 0".into(),
        ));
    }
    let c2 = check_c2star(ps);
    if !c2.satisfied {
        return Err(Error::Infeasible(format!(
            "classical condition violated: {:?}",
            c2.violated_clauses
        )));
    }
    let track = classical_track(ps)?;
    let solver = FpSolver::new(mu.grid, kernel, *cfg, track)?;
    let out = solver.solve(mu, t0, s_end, PicardInit::HeatFlow)?;
    let report = out.path.weighted_sup_curve(&solver.ev);
    Ok((out, report))
}

/// Measured kernel norms entering the envelope coefficients.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelNorms {
    pub besov: f64,
    pub divergence: f64,
}

impl KernelNorms {
    pub fn total(&self) -> f64 {
        self.besov + self.divergence
    }
}

/// Calibrated Gronwall envelope: coefficient curves, smaller root, horizon.
#[derive(Debug, Clone, Serialize)]
pub struct GronwallFit {
    pub c_cal: f64,
    pub c_mu_curve: Vec<f64>,
    pub c_b_curve: Vec<f64>,
    /// Smaller root per node (NaN where the discriminant fails).
    pub envelope: Vec<f64>,
    /// Horizon increment induced by the calibrated constants.
    pub horizon: f64,
    /// Long-time smallness gate induced by the same constants.
    pub gate_c0: f64,
    /// Nodes (indices) violating `f <= R-` inside the horizon.
    pub violations: Vec<usize>,
}

/// Builds the envelope: calibrates the constant on this run when
/// `c_cal = None`, otherwise validates the provided constant.
pub fn gronwall_envelope(
    path: &DensityPath,
    ps: &ParameterSet,
    norms_b: &KernelNorms,
    mu_norm: f64,
    ev: &BesovEvaluator,
    c_cal: Option<f64>,
) -> Result<GronwallFit> {
    let c3 = crate::params::check_c3(ps);
    if !c3.satisfied {
        return Err(Error::Infeasible(format!(
            "Gronwall envelope requires C3; violated: {:?}",
            c3.violated_clauses
        )));
    }
    let dq = gamma_exponents(ps)?;
    let gamma = dq.gamma;
    let e_b = 1.0 - recip(ps.r) - gamma + (ps.beta - ps.delta) / ps.alpha;
    if e_b <= 0.0 {
        return Err(Error::Infeasible(format!(
            "kernel coefficient exponent {e_b} must be positive under C3"
        )));
    }
    let f_curve = path.weighted_sup_curve(ev);
    let t0 = path.t0;

    // coefficient shapes without the generic constant
    let m_shape: Vec<f64> = path
        .times
        .iter()
        .map(|s| mu_norm * (s - t0).powf(ps.eta / ps.alpha))
        .collect();
    let b_shape: Vec<f64> = path
        .times
        .iter()
        .map(|s| norms_b.total() * (s - t0).powf(e_b))
        .collect();

    let c = match c_cal {
        Some(c) => c,
        None => {
            // smallest constant with C (B f^2 + M) >= f at every node
            let mut c = 0.0f64;
            for i in 1..f_curve.len() {
                let denom = b_shape[i] * f_curve[i] * f_curve[i] + m_shape[i];
                if denom > 0.0 {
                    c = c.max(f_curve[i] / denom);
                }
            }
            if !c.is_finite() || c == 0.0 {
                return Err(Error::Numeric(
                    "no finite calibration constant: inequality orientation violated".into(),
                ));
            }
            c
        }
    };

    let c_mu_curve: Vec<f64> = m_shape.iter().map(|m| c * m).collect();
    let c_b_curve: Vec<f64> = b_shape.iter().map(|b| c * b).collect();
    let denom = horizon_exponent(ps, gamma);
    let horizon = if norms_b.total() > 0.0 {
        time_horizon(c * mu_norm, c * norms_b.total(), denom)?
    } else {
        f64::INFINITY
    };
    let gate_c0 = if norms_b.total() > 0.0 {
        1.0 / (4.0 * c * c * norms_b.total())
    } else {
        f64::INFINITY
    };

    let mut envelope = Vec::with_capacity(path.times.len());
    let mut violations = Vec::new();
    for i in 0..path.times.len() {
        match gronwall_roots(c_mu_curve[i], c_b_curve[i])? {
            Some((r_minus, _)) => {
                envelope.push(r_minus);
                let inside = path.times[i] - t0 < horizon;
                if inside && f_curve[i] > r_minus * (1.0 + 1e-12) {
                    violations.push(i);
                }
            }
            None => {
                envelope.push(f64::NAN);
                if path.times[i] - t0 < horizon {
                    violations.push(i);
                }
            }
        }
    }

    Ok(GronwallFit {
        c_cal: c,
        c_mu_curve,
        c_b_curve,
        envelope,
        horizon,
        gate_c0,
        violations,
    })
}

/// Consecutive-pair Cauchy table across a mollification ladder.
#[derive(Debug, Clone, Serialize)]
pub struct CauchyTable {
    pub epsilons: Vec<f64>,
    /// Weighted Besov distance per consecutive pair.
    pub weighted: Vec<f64>,
    /// `sup_s L^1` distance per consecutive pair.
    pub l1: Vec<f64>,
    /// False when the tail of either column stopped decreasing.
    pub converging: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn cauchy_sweep(
    kernel: &Kernel,
    mu: &GridFunction,
    epsilons: &[f64],
    ps: &ParameterSet,
    cfg: &SolverConfig,
    t0: f64,
    s_end: f64,
    long_time: bool,
) -> Result<CauchyTable> {
    if epsilons.len() < 2 {
        return Err(Error::Domain(
            "cauchy sweep needs at least two epsilons".into(),
        ));
    }
    let track = if long_time {
        long_time_track(ps)?
    } else {
        short_time_track(ps)?
    };
    let sp = Spectral::new(mu.grid);
    let ev = BesovEvaluator::new(mu.grid, ps.alpha);
    let mut paths = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mollified = kernel.mollify(&sp, eps)?;
        let mut cfg_eps = *cfg;
        cfg_eps.epsilon = eps;
        let out = solve_mollified_fp(Some(&mollified), mu, t0, s_end, &cfg_eps, &track)?;
        paths.push(out.path);
    }

    let r_prime = crate::exponents::conjugate_exponent(ps.r)?;
    let mut weighted = Vec::new();
    let mut l1 = Vec::new();
    for pair in paths.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let mut wdist = 0.0f64;
        let mut l1dist = 0.0f64;
        let mut wnorms = Vec::with_capacity(a.times.len());
        for i in 0..a.times.len() {
            let diff = a.frames[i].sub(&b.frames[i]);
            let n = ev.norm_total(&diff, &track.spec);
            if long_time {
                wnorms.push(n);
            } else {
                wdist = wdist.max(track.weight.eval(a.times[i] - t0) * n);
            }
            l1dist = l1dist.max(crate::besov::lp_norm(&diff, 1.0));
        }
        if long_time {
            // L^(r') norm in time with the long-time weight
            let (g1, g2) = match track.weight {
                TimeWeight::LongTime { gamma1, gamma2 } => (gamma1, gamma2),
                TimeWeight::Power(g) => (g, g),
            };
            wdist = crate::besov::weighted_time_norm(
                t0,
                &a.times,
                &wnorms,
                r_prime,
                &WeightSpec {
                    lambda1: g1,
                    lambda2: g2,
                },
            );
        }
        weighted.push(wdist);
        l1.push(l1dist);
    }

    let tail_ok = |col: &[f64]| col.windows(2).all(|w| w[1] < w[0]);
    let converging = tail_ok(&weighted) && tail_ok(&l1);
    Ok(CauchyTable {
        epsilons: epsilons.to_vec(),
        weighted,
        l1,
        converging,
    })
}

/// Plugs a path into the right-hand side built from the given kernel
/// (typically the un-mollified one) and returns the weighted sup residual.
pub fn limit_duhamel_residual(
    path: &DensityPath,
    kernel: Option<&Kernel>,
    mu: &GridFunction,
    cfg: &SolverConfig,
) -> Result<f64> {
    let solver = FpSolver::new(path.grid, kernel, *cfg, path.gamma_meta)?;
    let mu_hat = solver.sp.forward(mu.component(0));
    let m = path.frames.len() - 1;
    let free = solver.free_flow(&mu_hat, m);
    let span = path.times.last().unwrap() - path.t0;
    let rhs = solver.apply_rhs(&path.frames, &free, span)?;
    let mut res = 0.0f64;
    for i in 0..=m {
        let diff = rhs[i].sub(&path.frames[i]);
        let w = path.gamma_meta.weight.eval(path.times[i] - path.t0);
        res = res.max(w * solver.ev.norm_fast(&diff, &path.gamma_meta.spec));
    }
    Ok(res)
}

/// Uniqueness probe: Picard restarted from a uniform density must land on
/// the same fixed point.
pub fn uniqueness_probe(
    kernel: Option<&Kernel>,
    mu: &GridFunction,
    t0: f64,
    s_end: f64,
    cfg: &SolverConfig,
    track: &TrackSpec,
) -> Result<f64> {
    let solver = FpSolver::new(mu.grid, kernel, *cfg, *track)?;
    let a = solver.solve(mu, t0, s_end, PicardInit::HeatFlow)?;
    let b = solver.solve(mu, t0, s_end, PicardInit::Uniform)?;
    Ok(solver.weighted_distance(&a.path.frames, &b.path.frames, &a.path.times, t0))
}

/// Discrete `L^(r_theta)` in time of the drift norm in `B^(-theta)_(inf,inf)`.
pub fn drift_integrability(
    path: &DensityPath,
    kernel: &Kernel,
    r_theta: f64,
    theta: f64,
    ps: &ParameterSet,
) -> Result<f64> {
    if !(r_theta > ps.alpha && r_theta < ps.r) {
        return Err(Error::Refused(format!(
            "r_theta = {r_theta} outside the admissible interval ({}, {})",
            ps.alpha, ps.r
        )));
    }
    let sp = Spectral::new(path.grid);
    let ev = BesovEvaluator::new(path.grid, ps.alpha);
    let spec = BesovSpec::new(-theta, f64::INFINITY, f64::INFINITY)?;
    let span = path.times.last().unwrap() - path.t0;
    let norms: Vec<f64> = path
        .times
        .iter()
        .zip(&path.frames)
        .map(|(s, rho)| {
            let b = kernel.field_at((s - path.t0) / span);
            let drift = sp.convolve(b, rho)?;
            Ok(ev.norm_total(&drift, &spec))
        })
        .collect::<Result<_>>()?;
    // trapezoid L^(r_theta) in time
    let mut acc = 0.0;
    for i in 1..norms.len() {
        let dt = path.times[i] - path.times[i - 1];
        acc += 0.5 * (norms[i].powf(r_theta) + norms[i - 1].powf(r_theta)) * dt;
    }
    Ok(acc.powf(1.0 / r_theta))
}

/// Normalized periodic Gaussian bump (initial-law helper).
pub fn gaussian_density(grid: Grid, sigma: f64) -> GridFunction {
    let mut f = GridFunction::sample_scalar(grid, |x, y| {
        (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
    });
    let m = f.mass();
    f.scale(1.0 / m);
    f
}
