//! Besov norms via the heat-semigroup (thermic) characterization and the
//! functional inequalities built on top of them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{check_exponent, conjugate_exponent, recip};
use crate::grid::GridFunction;
use crate::spectral::Spectral;

/// Besov index triple `(gamma, ell, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovSpec {
    pub gamma: f64,
    pub ell: f64,
    pub m: f64,
}

impl BesovSpec {
    pub fn new(gamma: f64, ell: f64, m: f64) -> Result<Self> {
        check_exponent("ell", ell)?;
        check_exponent("m", m)?;
        Ok(BesovSpec { gamma, ell, m })
    }
}

/// Time-weight exponent pair: `lambda1` acts on elapsed times <= 1,
/// `lambda2` on elapsed times >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl WeightSpec {
    pub fn negate(&self) -> WeightSpec {
        WeightSpec {
            lambda1: -self.lambda1,
            lambda2: -self.lambda2,
        }
    }
}

/// `w(s) = (s and 1)^lambda1 (s or 1)^lambda2` for elapsed time `s >= 0`.
pub fn weight(w: &WeightSpec, s: f64) -> f64 {
    s.min(1.0).powf(w.lambda1) * s.max(1.0).powf(w.lambda2)
}

/// Weighted time norm of a sampled curve: sup of `w(s - t0) * value` for
/// `r_exp = inf`, trapezoid `L^r` in time otherwise.
pub fn weighted_time_norm(t0: f64, times: &[f64], values: &[f64], r_exp: f64, w: &WeightSpec) -> f64 {
    debug_assert_eq!(times.len(), values.len());
    if r_exp.is_infinite() {
        times
            .iter()
            .zip(values)
            .map(|(s, v)| weight(w, s - t0) * v)
            .fold(0.0f64, f64::max)
    } else {
        let mut acc = 0.0;
        for i in 1..times.len() {
            let dt = times[i] - times[i - 1];
            let a = (weight(w, times[i - 1] - t0) * values[i - 1]).powf(r_exp);
            let b = (weight(w, times[i] - t0) * values[i]).powf(r_exp);
            acc += 0.5 * (a + b) * dt;
        }
        acc.powf(1.0 / r_exp)
    }
}

/// `L^ell` norm by trapezoid quadrature (equals `h^d sum` on a periodic grid);
/// `ell = inf` is the grid max. Vector fields take the max over components.
pub fn lp_norm(f: &GridFunction, ell: f64) -> f64 {
    let h = f.grid.cell_volume();
    (0..f.components)
        .map(|c| {
            let vals = f.component(c);
            if ell.is_infinite() {
                vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            } else {
                (h * vals.iter().map(|v| v.abs().powf(ell)).sum::<f64>()).powf(1.0 / ell)
            }
        })
        .fold(0.0f64, f64::max)
}

/// Output of a thermic norm evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormResult {
    pub low_freq: f64,
    pub thermic: f64,
    pub total: f64,
    pub diverged: bool,
}

/// Quadrature settings for the thermic time integral.
#[derive(Debug, Clone, Copy)]
pub struct VQuadrature {
    pub v_min: f64,
    pub nodes: usize,
    /// Node count doubles until the norm moves by less than this fraction.
    pub refine_tol: f64,
    pub max_doublings: usize,
}

impl Default for VQuadrature {
    fn default() -> Self {
        VQuadrature {
            v_min: 1e-6,
            nodes: 64,
            refine_tol: 5e-3,
            max_doublings: 3,
        }
    }
}

/// Smooth radial cut: 1 on `|xi| <= 1`, 0 on `|xi| >= 3/2`, C^2 blend between.
pub fn low_freq_cut(rho: f64) -> f64 {
    if rho <= 1.0 {
        1.0
    } else if rho >= 1.5 {
        0.0
    } else {
        let t = (rho - 1.0) / 0.5;
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Thermic Besov norm evaluator bound to one grid and one reference index.
pub struct BesovEvaluator {
    pub spectral: Spectral,
    pub alpha_ref: f64,
    pub quad: VQuadrature,
}

impl BesovEvaluator {
    pub fn new(grid: crate::grid::Grid, alpha_ref: f64) -> Self {
        BesovEvaluator {
            spectral: Spectral::new(grid),
            alpha_ref,
            quad: VQuadrature::default(),
        }
    }

    fn deriv_order(&self, gamma: f64) -> i32 {
        ((gamma / self.alpha_ref).floor() as i32 + 1).max(1)
    }

    /// `L^ell` norms of `d_v^n (p~_v * f)` on a log-spaced v grid.
    fn semigroup_norms(&self, spectrum: &[Complex64], n: i32, ell: f64, vs: &[f64]) -> Vec<f64> {
        let grid = self.spectral.grid;
        vs.iter()
            .map(|&v| {
                let mut spec: Vec<Complex64> = spectrum.to_vec();
                for (idx, z) in spec.iter_mut().enumerate() {
                    let a = grid.freq_norm2(idx).sqrt().powf(self.alpha_ref);
                    *z *= (-a).powi(n) * (-v * a).exp();
                }
                let vals = self.spectral.inverse(&spec);
                let gf = GridFunction::from_values(grid, 1, vals).unwrap();
                lp_norm(&gf, ell)
            })
            .collect()
    }

    fn log_nodes(v_min: f64, count: usize) -> Vec<f64> {
        let u0 = v_min.ln();
        (0..count)
            .map(|i| (u0 - u0 * i as f64 / (count - 1) as f64).exp())
            .collect()
    }

    /// Thermic part over `(v_min, 1]` with the given node count.
    fn thermic_part(
        &self,
        spectrum: &[Complex64],
        spec: &BesovSpec,
        n: i32,
        v_min: f64,
        count: usize,
    ) -> f64 {
        let vs = Self::log_nodes(v_min, count);
        let norms = self.semigroup_norms(spectrum, n, spec.ell, &vs);
        let expo = n as f64 - spec.gamma / self.alpha_ref;
        if spec.m.is_infinite() {
            vs.iter()
                .zip(&norms)
                .map(|(v, nn)| v.powf(expo) * nn)
                .fold(0.0f64, f64::max)
        } else {
            // integral over dv/v as a trapezoid in u = ln v
            let us: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
            let integrand: Vec<f64> = vs
                .iter()
                .zip(&norms)
                .map(|(v, nn)| (v.powf(expo) * nn).powf(spec.m))
                .collect();
            let mut acc = 0.0;
            for i in 1..us.len() {
                acc += 0.5 * (integrand[i] + integrand[i - 1]) * (us[i] - us[i - 1]);
            }
            acc.powf(1.0 / spec.m)
        }
    }

    fn norm_component(&self, values: &[f64], spec: &BesovSpec) -> NormResult {
        let grid = self.spectral.grid;
        let spectrum = self.spectral.forward(values);

        // low-frequency block
        let mut low = spectrum.clone();
        for (idx, z) in low.iter_mut().enumerate() {
            *z *= low_freq_cut(grid.freq_norm2(idx).sqrt());
        }
        let low_vals = self.spectral.inverse(&low);
        let low_freq = lp_norm(
            &GridFunction::from_values(grid, 1, low_vals).unwrap(),
            spec.ell,
        );

        let n = self.deriv_order(spec.gamma);
        let mut count = self.quad.nodes;
        let mut thermic = self.thermic_part(&spectrum, spec, n, self.quad.v_min, count);
        for _ in 0..self.quad.max_doublings {
            let refined = self.thermic_part(&spectrum, spec, n, self.quad.v_min, 2 * count);
            let moved = (refined - thermic).abs();
            thermic = refined;
            count *= 2;
            if moved <= self.quad.refine_tol * thermic.abs().max(1e-300) {
                break;
            }
        }

        // divergence probe: extend the window downward and watch for growth
        let t_short = self.thermic_part(&spectrum, spec, n, self.quad.v_min.max(1e-2), count);
        let t_mid = self.thermic_part(&spectrum, spec, n, self.quad.v_min.max(1e-4), count);
        let r1 = t_mid / t_short.max(1e-300);
        let r2 = thermic / t_mid.max(1e-300);
        let diverged = r1.max(r2) > 1.25;

        NormResult {
            low_freq,
            thermic,
            total: low_freq + thermic,
            diverged,
        }
    }

    /// Thermic Besov norm; vector fields take the max over components.
    pub fn norm(&self, f: &GridFunction, spec: &BesovSpec) -> NormResult {
        let mut out = NormResult {
            low_freq: 0.0,
            thermic: 0.0,
            total: 0.0,
            diverged: false,
        };
        for c in 0..f.components {
            let r = self.norm_component(f.component(c), spec);
            if r.total > out.total {
                out.low_freq = r.low_freq;
                out.thermic = r.thermic;
                out.total = r.total;
            }
            out.diverged |= r.diverged;
        }
        out
    }

    pub fn norm_total(&self, f: &GridFunction, spec: &BesovSpec) -> f64 {
        self.norm(f, spec).total
    }

    /// Single-pass norm at half the base node count, no refinement and no
    /// divergence probe; used in iteration-distance hot loops.
    pub fn norm_fast(&self, f: &GridFunction, spec: &BesovSpec) -> f64 {
        let grid = self.spectral.grid;
        let n = self.deriv_order(spec.gamma);
        let count = (self.quad.nodes / 2).max(16);
        (0..f.components)
            .map(|c| {
                let spectrum = self.spectral.forward(f.component(c));
                let mut low = spectrum.clone();
                for (idx, z) in low.iter_mut().enumerate() {
                    *z *= low_freq_cut(grid.freq_norm2(idx).sqrt());
                }
                let low_vals = self.spectral.inverse(&low);
                let low_freq = lp_norm(
                    &GridFunction::from_values(grid, 1, low_vals).unwrap(),
                    spec.ell,
                );
                low_freq + self.thermic_part(&spectrum, spec, n, self.quad.v_min, count)
            })
            .fold(0.0f64, f64::max)
    }

    /// Embedding ratio `|f|_to / |f|_from` after validating the hypotheses.
    pub fn check_embedding(
        &self,
        f: &GridFunction,
        from: &BesovSpec,
        to: &BesovSpec,
    ) -> Result<f64> {
        let d = self.spectral.grid.d as f64;
        let mut violated = Vec::new();
        if !(from.ell <= to.ell) {
            violated.push("ell_order");
        }
        if !(from.m <= to.m) {
            violated.push("m_order");
        }
        if !(to.gamma - d * recip(to.ell) <= from.gamma - d * recip(from.ell) + 1e-12) {
            violated.push("sobolev_index");
        }
        if !violated.is_empty() {
            return Err(Error::Refused(format!(
                "embedding hypotheses violated: {}",
                violated.join(", ")
            )));
        }
        Ok(self.norm_total(f, to) / self.norm_total(f, from))
    }

    /// Young convolution ratio `|f*g|_(gamma,ell,m) / (|f|_(gamma-delta,ell1,m1) |g|_(delta,ell2,m2))`.
    pub fn check_young(
        &self,
        f: &GridFunction,
        g: &GridFunction,
        spec: &BesovSpec,
        delta: f64,
        split: &YoungSplit,
    ) -> Result<f64> {
        let lhs_sum = recip(split.ell1) + recip(split.ell2);
        if (1.0 + recip(spec.ell) - lhs_sum).abs() > 1e-12 {
            return Err(Error::Refused(format!(
                "young exponents mismatch: 1 + 1/ell = {} but 1/ell1 + 1/ell2 = {}",
                1.0 + recip(spec.ell),
                lhs_sum
            )));
        }
        if recip(split.m1) < (recip(spec.m) - recip(split.m2)).max(0.0) - 1e-12 {
            return Err(Error::Refused("young m-clause violated".into()));
        }
        let conv = self.spectral.convolve(f, g)?;
        let num = self.norm_total(&conv, spec);
        let nf = self.norm_total(f, &BesovSpec::new(spec.gamma - delta, split.ell1, split.m1)?);
        let ng = self.norm_total(g, &BesovSpec::new(delta, split.ell2, split.m2)?);
        Ok(num / (nf * ng))
    }

    /// Duality bound `|int f g| <= |f|_(gamma,ell,m) |g|_(-gamma,ell',m') (1 + 1e-2)`.
    pub fn check_duality(&self, f: &GridFunction, g: &GridFunction, spec: &BesovSpec) -> Result<bool> {
        if !f.is_scalar() || !g.is_scalar() {
            return Err(Error::Domain("duality check expects scalar fields".into()));
        }
        let h = f.grid.cell_volume();
        let pairing: f64 = h * f
            .values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| a * b)
            .sum::<f64>();
        let dual = BesovSpec::new(
            -spec.gamma,
            conjugate_exponent(spec.ell)?,
            conjugate_exponent(spec.m)?,
        )?;
        let bound = self.norm_total(f, spec) * self.norm_total(g, &dual);
        Ok(pairing.abs() <= bound * (1.0 + 1e-2))
    }

    /// Lift ratio `|grad f|_(gamma-1,ell,m) / |f|_(gamma,ell,m)`.
    pub fn check_lift(&self, f: &GridFunction, spec: &BesovSpec) -> Result<f64> {
        if !f.is_scalar() {
            return Err(Error::Domain("lift check expects a scalar field".into()));
        }
        let grad = self.spectral.gradient(f);
        let shifted = BesovSpec::new(spec.gamma - 1.0, spec.ell, spec.m)?;
        let denom = self.norm_total(f, spec);
        Ok(self.norm_total(&grad, &shifted) / denom)
    }

    /// Product-rule ratio for one of the three usual rules.
    pub fn check_product_rule(
        &self,
        rule: &ProductRule,
        f: &GridFunction,
        g: &GridFunction,
    ) -> Result<f64> {
        if !f.is_scalar() || !g.is_scalar() {
            return Err(Error::Domain("product rules expect scalar fields".into()));
        }
        let product = GridFunction::from_values(
            f.grid,
            1,
            f.values.iter().zip(&g.values).map(|(a, b)| a * b).collect(),
        )?;
        match *rule {
            ProductRule::Pr1 {
                lambda,
                ell,
                ell1,
                ell2,
            } => {
                if lambda < 0.0 {
                    return Err(Error::Refused("PR1 needs lambda >= 0".into()));
                }
                if (recip(ell) - recip(ell1) - recip(ell2)).abs() > 1e-12 {
                    return Err(Error::Refused("PR1 needs 1/ell = 1/ell1 + 1/ell2".into()));
                }
                let num = self.norm_total(&product, &BesovSpec::new(lambda, ell, f64::INFINITY)?);
                let nf = self.norm_total(f, &BesovSpec::new(lambda, ell1, f64::INFINITY)?);
                let ng = self.norm_total(g, &BesovSpec::new(lambda, ell2, 1.0)?);
                Ok(num / (nf * ng))
            }
            ProductRule::Pr2 {
                lambda,
                rho,
                ell,
                m,
            } => {
                if !(rho > lambda.abs()) {
                    return Err(Error::Refused("PR2 needs rho > |lambda|".into()));
                }
                let num = self.norm_total(&product, &BesovSpec::new(lambda, ell, m)?);
                let nf = self.norm_total(f, &BesovSpec::new(rho, f64::INFINITY, f64::INFINITY)?);
                let ng = self.norm_total(g, &BesovSpec::new(lambda, ell, m)?);
                Ok(num / (nf * ng))
            }
            ProductRule::Pr3 {
                lambda,
                lambda1,
                lambda2,
                ell,
            } => {
                if lambda < 0.0 || lambda1 < 0.0 || lambda2 < 0.0 {
                    return Err(Error::Refused("PR3 indices must be nonnegative".into()));
                }
                if ell.is_infinite() {
                    return Err(Error::Refused("PR3 needs ell < inf".into()));
                }
                if !(lambda1 < lambda2 && lambda1 <= lambda) {
                    return Err(Error::Refused(
                        "PR3 needs lambda1 < lambda2 and lambda1 <= lambda".into(),
                    ));
                }
                let num =
                    self.norm_total(&product, &BesovSpec::new(-lambda, ell, f64::INFINITY)?);
                let nf = self.norm_total(
                    f,
                    &BesovSpec::new(-lambda1, f64::INFINITY, f64::INFINITY)?,
                );
                let ng = self.norm_total(g, &BesovSpec::new(lambda2, ell, 1.0)?);
                Ok(num / (nf * ng))
            }
        }
    }
}

/// Exponent split for the Young inequality check.
#[derive(Debug, Clone, Copy)]
pub struct YoungSplit {
    pub ell1: f64,
    pub ell2: f64,
    pub m1: f64,
    pub m2: f64,
}

/// One of the three product rules with its exponents.
#[derive(Debug, Clone, Copy)]
pub enum ProductRule {
    Pr1 { lambda: f64, ell: f64, ell1: f64, ell2: f64 },
    Pr2 { lambda: f64, rho: f64, ell: f64, m: f64 },
    Pr3 { lambda: f64, lambda1: f64, lambda2: f64, ell: f64 },
}

/// Closed form of `int_t^r (r-s)^(-g1) (s-t)^(-g2) ds = B(1-g1, 1-g2) (r-t)^(1-g1-g2)`.
pub fn beta_integral(gamma1: f64, gamma2: f64, t: f64, r: f64) -> Result<f64> {
    if !(gamma1 < 1.0 && gamma2 < 1.0) {
        return Err(Error::Domain(
            "beta integral needs both exponents < 1".into(),
        ));
    }
    if !(r >= t) {
        return Err(Error::Domain("beta integral needs r >= t".into()));
    }
    let b = statrs::function::beta::beta(1.0 - gamma1, 1.0 - gamma2);
    Ok(b * (r - t).powf(1.0 - gamma1 - gamma2))
}

/// Quadrature value and weight-function bound for the long-time singularity
/// integral `I = int_t^s w(-a)(s-v) w(-b)(v-t) dv <= C w(1-b-a)(s-t)`.
#[derive(Debug, Clone, Copy)]
pub struct LtBetaBound {
    pub quadrature: f64,
    pub bound: f64,
}

pub fn beta_integral_lt(
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
    t: f64,
    s: f64,
) -> Result<LtBetaBound> {
    for (name, e) in [("a1", a1), ("a2", a2), ("b1", b1), ("b2", b2)] {
        if !(0.0..1.0).contains(&e) {
            return Err(Error::Domain(format!(
                "long-time exponent {name} = {e} must lie in [0, 1)"
            )));
        }
    }
    if !(s > t) {
        return Err(Error::Domain("needs s > t".into()));
    }
    let delta = s - t;
    let w_left = |u: f64| weight(&WeightSpec { lambda1: -b1, lambda2: -b2 }, u);
    let w_right = |u: f64| weight(&WeightSpec { lambda1: -a1, lambda2: -a2 }, u);
    let integrand = |tau: f64| w_right(delta - tau) * w_left(tau);

    // segment boundaries at the weight kinks plus both singular endpoints
    let mut cuts = vec![0.0, delta];
    for c in [1.0, delta - 1.0, delta / 2.0] {
        if c > 0.0 && c < delta {
            cuts.push(c);
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);

    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if lo == 0.0 && b1 > 0.0 {
            // tau = z^(1/(1-b1)): tau^(-b1) dtau = (1/(1-b1)) dz exactly,
            // and the segment lies inside tau <= 1 where w_left = tau^(-b1)
            let p = 1.0 / (1.0 - b1);
            let zhi = hi.powf(1.0 - b1);
            total += adaptive_simpson(
                &|z: f64| {
                    let tau = z.powf(p);
                    w_right(delta - tau) * p
                },
                0.0,
                zhi,
                1e-11,
            );
        } else if (hi - delta).abs() < 1e-14 && a1 > 0.0 {
            let p = 1.0 / (1.0 - a1);
            let zhi = (delta - lo).powf(1.0 - a1);
            total += adaptive_simpson(
                &|z: f64| {
                    let tau = delta - z.powf(p);
                    w_left(tau) * p
                },
                0.0,
                zhi,
                1e-11,
            );
        } else {
            total += adaptive_simpson(&integrand, lo, hi, 1e-11);
        }
    }

    let bound = weight(
        &WeightSpec {
            lambda1: 1.0 - b1 - a1,
            lambda2: 1.0 - b2 - a2,
        },
        delta,
    );
    Ok(LtBetaBound {
        quadrature: total,
        bound,
    })
}

/// Adaptive Simpson quadrature on a smooth integrand.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}
