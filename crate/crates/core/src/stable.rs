//! The isotropic alpha-stable transition density on the torus, its gradient,
//! increment sampling and heat-kernel norm-decay verification.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::besov::{BesovEvaluator, BesovSpec};
use crate::error::{Error, Result};
use crate::exponents::{pos, recip};
use crate::grid::{Grid, GridFunction};
use crate::spectral::Spectral;

/// Truncation threshold for the Fourier tail at the smallest resolvable time.
const FOURIER_TAIL_TOL: f64 = 1e-12;
/// Admissible heavy-tail mass outside the box for alpha < 2.
const BOX_TAIL_TOL: f64 = 1e-6;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha = {alpha} must lie in (1, 2]")))
    }
}

/// Smallest time resolvable on `grid`: `exp(-t nyquist^alpha) < 1e-12`.
pub fn min_resolvable_time(grid: &Grid, alpha: f64) -> f64 {
    -FOURIER_TAIL_TOL.ln() / grid.nyquist().powf(alpha)
}

/// Asymptotic bound on the mass of the alpha-stable law outside `[-L, L]^d`
/// at time `t`; zero for the Gaussian endpoint.
pub fn tail_mass_bound(alpha: f64, t: f64, l: f64, d: usize) -> f64 {
    if alpha >= 2.0 {
        return 0.0;
    }
    let c1 = 2.0 / std::f64::consts::PI
        * statrs::function::gamma::gamma(alpha)
        * (std::f64::consts::PI * alpha / 2.0).sin();
    d as f64 * c1 * t * l.powf(-alpha)
}

fn guard_resolution(alpha: f64, t: f64, grid: &Grid) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time {t} must be positive")));
    }
    check_alpha(alpha)?;
    let t_min = min_resolvable_time(grid, alpha);
    if t < t_min {
        let need = (-FOURIER_TAIL_TOL.ln() / t).powf(1.0 / alpha);
        let n_sugg = (2.0 * grid.l / std::f64::consts::PI * need).ceil() as usize;
        return Err(Error::Refinement(format!(
            "t = {t} below the minimum resolvable time {t_min:.3e}; need N >= {} (next power of two of {n_sugg})",
            n_sugg.next_power_of_two()
        )));
    }
    let tail = tail_mass_bound(alpha, t, grid.l, grid.d);
    if tail > BOX_TAIL_TOL {
        let l_sugg = (tail / BOX_TAIL_TOL).powf(1.0 / alpha) * grid.l;
        return Err(Error::Refinement(format!(
            "heavy-tail mass bound {tail:.3e} outside the box exceeds {BOX_TAIL_TOL}; need L >= {l_sugg:.1}"
        )));
    }
    Ok(())
}

/// Periodized isotropic stable density `p^alpha_t` via the inverse transform
/// of `exp(-t |xi|^alpha)` on the dual grid.
pub fn stable_density(alpha: f64, t: f64, grid: &Grid) -> Result<GridFunction> {
    guard_resolution(alpha, t, grid)?;
    let sp = Spectral::new(*grid);
    let f = sp.synthesize(|xi| {
        let a = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt().powf(alpha);
        Complex64::new((-t * a).exp(), 0.0)
    });
    Ok(f)
}

/// Spectral gradient of the stable density (vector field, one component per axis).
pub fn grad_stable_density(alpha: f64, t: f64, grid: &Grid) -> Result<GridFunction> {
    guard_resolution(alpha, t, grid)?;
    let sp = Spectral::new(*grid);
    let nyq = grid.nyquist();
    let mut out = GridFunction::zeros(*grid, grid.d);
    for c in 0..grid.d {
        let comp = sp.synthesize(|xi| {
            let a = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt().powf(alpha);
            if xi[c].abs() >= nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, xi[c]) * (-t * a).exp()
            }
        });
        out.component_mut(c).copy_from_slice(comp.component(0));
    }
    Ok(out)
}

/// One draw of a totally skewed positive stable variable with Laplace
/// transform `exp(-lambda^a)`, `a` in (0, 1) (Chambers-Mallows-Stuck).
fn sample_positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    debug_assert!(a > 0.0 && a < 1.0);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let b = ((half_pi * a).tan()).atan() / a;
    let s = (1.0 + (half_pi * a).tan().powi(2)).powf(1.0 / (2.0 * a));
    let v: f64 = rng.gen_range(-half_pi..half_pi);
    let w: f64 = Exp1.sample(rng);
    let x = s * (a * (v + b)).sin() / v.cos().powf(1.0 / a)
        * ((v - a * (v + b)).cos() / w).powf((1.0 - a) / a);
    // scale to the exp(-lambda^a) convention
    (half_pi * a).cos().powf(1.0 / a) * x
}

/// One draw of a standard symmetric stable variable with characteristic
/// function `exp(-|xi|^alpha)` (1-d Chambers-Mallows-Stuck).
fn sample_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let v: f64 = rng.gen_range(-half_pi..half_pi);
    let w: f64 = Exp1.sample(rng);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Increment of the isotropic alpha-stable driver over a step `dt`:
/// `dt^(1/alpha) S` with `S` a standard isotropic draw. `alpha = 2` reduces
/// to a Gaussian with variance `2 dt` per coordinate.
pub fn sample_stable_increment<R: Rng + ?Sized>(
    alpha: f64,
    dt: f64,
    d: usize,
    rng: &mut R,
) -> Result<[f64; 2]> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt = {dt} must be positive")));
    }
    check_alpha(alpha)?;
    let scale = dt.powf(1.0 / alpha);
    let mut out = [0.0f64; 2];
    if alpha >= 2.0 {
        for v in out.iter_mut().take(d) {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * std::f64::consts::SQRT_2 * z;
        }
        return Ok(out);
    }
    match d {
        1 => {
            out[0] = scale * sample_symmetric_stable(alpha, rng);
        }
        2 => {
            // subordination: X = sqrt(2 S) Z with S positive (alpha/2)-stable
            let s = sample_positive_stable(alpha / 2.0, rng);
            let amp = (2.0 * s).sqrt();
            for v in out.iter_mut().take(2) {
                let z: f64 = StandardNormal.sample(rng);
                *v = scale * amp * z;
            }
        }
        _ => return Err(Error::Domain(format!("dimension {d} not in {{1, 2}}"))),
    }
    Ok(out)
}

/// Least-squares slope of `log norm` against `log time`.
pub fn fit_log_slope(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::Domain(
            "slope fit needs at least 3 time samples".into(),
        ));
    }
    let xs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Predicted short-time decay exponent of `|d^a p^alpha_s|_(gamma,ell,m)`.
pub fn hk_expected_slope_short(alpha: f64, spec: &BesovSpec, deriv: usize, d: usize) -> f64 {
    -(pos(spec.gamma / alpha + d as f64 / alpha * (1.0 - recip(spec.ell))) + deriv as f64 / alpha)
}

/// Predicted long-time decay exponent (regularity index no longer felt).
pub fn hk_expected_slope_long(alpha: f64, spec: &BesovSpec, deriv: usize, d: usize) -> f64 {
    -(d as f64 / alpha * (1.0 - recip(spec.ell)) + deriv as f64 / alpha)
}

/// Fitted log-log slope of the Besov norm of `d^a p^alpha_s` over `times`.
pub fn verify_hk_exponent(
    alpha: f64,
    spec: &BesovSpec,
    deriv_order: usize,
    times: &[f64],
    grid: &Grid,
) -> Result<f64> {
    if deriv_order > 1 {
        return Err(Error::Domain("derivative order must be 0 or 1".into()));
    }
    if times.len() < 3 {
        return Err(Error::Domain(
            "degenerate regression: need at least 3 times".into(),
        ));
    }
    let ev = BesovEvaluator::new(*grid, alpha);
    let norms: Vec<f64> = times
        .iter()
        .map(|&t| {
            let f = if deriv_order == 0 {
                stable_density(alpha, t, grid)?
            } else {
                grad_stable_density(alpha, t, grid)?
            };
            Ok(ev.norm_total(&f, spec))
        })
        .collect::<Result<_>>()?;
    fit_log_slope(times, &norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_heat(grid: Grid, t: f64) -> GridFunction {
        // closed-form density with characteristic function exp(-t xi^2)
        GridFunction::sample_scalar(grid, |x, y| {
            let var = 2.0 * t;
            let norm = (2.0 * std::f64::consts::PI * var).powf(grid.d as f64 / 2.0);
            (-(x * x + y * y) / (2.0 * var)).exp() / norm
        })
    }

    #[test]
    fn gaussian_endpoint_matches_closed_form() {
        let grid = Grid::new(1, 256, 10.0).unwrap();
        for t in [0.05, 0.25, 1.0] {
            let p = stable_density(2.0, t, &grid).unwrap();
            let q = gaussian_heat(grid, t);
            let err = p.sub(&q).max_abs();
            assert!(err < 1e-8, "t = {t}: error {err}");
        }
    }

    #[test]
    fn mass_is_one_and_density_nonnegative() {
        // heavy tails force progressively larger boxes as alpha drops
        let cases = [
            (2.0, 0.3, 256usize, 10.0),
            (1.5, 0.02, 32768, 400.0),
            (1.7, 0.02, 8192, 160.0),
        ];
        for (alpha, t, n, l) in cases {
            let grid = Grid::new(1, n, l).unwrap();
            let p = stable_density(alpha, t, &grid).unwrap();
            assert!((p.mass() - 1.0).abs() < 1e-8, "alpha {alpha}");
            let min = p.values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > -1e-8, "alpha {alpha}: min {min}");
        }
    }

    #[test]
    fn self_similarity_under_time_scaling() {
        // p_{c t}(x) = c^(-d/alpha) p_t(c^(-1/alpha) x): sample the second
        // density on the contracted grid so nodes line up exactly
        let alpha = 1.5;
        let c = 2.0f64;
        let t = 0.1;
        let big = Grid::new(1, 65536, 1900.0).unwrap();
        let small = Grid::new(1, 65536, 1900.0 * c.powf(-1.0 / alpha)).unwrap();
        let lhs = stable_density(alpha, c * t, &big).unwrap();
        let rhs = stable_density(alpha, t, &small).unwrap();
        let scale = c.powf(-1.0 / alpha);
        let mut err = 0.0f64;
        for j in 0..big.n {
            err = err.max((lhs.values[j] - scale * rhs.values[j]).abs());
        }
        assert!(err < 1e-6, "self-similarity error {err}");
    }

    #[test]
    fn refuses_unresolvable_configurations() {
        let grid = Grid::new(1, 64, 10.0).unwrap();
        // far below the minimum resolvable time
        match stable_density(2.0, 1e-6, &grid) {
            Err(Error::Refinement(msg)) => assert!(msg.contains("N >=")),
            other => panic!("expected refinement error, got {other:?}"),
        }
        // heavy tails on a small box (t above the resolvability floor)
        match stable_density(1.2, 2.0, &grid) {
            Err(Error::Refinement(msg)) => assert!(msg.contains("L >="), "{msg}"),
            other => panic!("expected refinement error, got {other:?}"),
        }
        assert!(stable_density(2.0, -1.0, &grid).is_err());
    }

    #[test]
    fn gradient_matches_gaussian_and_symmetry() {
        let grid = Grid::new(1, 256, 10.0).unwrap();
        let t = 0.25;
        let g = grad_stable_density(2.0, t, &grid).unwrap();
        let analytic = GridFunction::sample_scalar(grid, |x, _| {
            let var = 2.0 * t;
            -x / var * (-(x * x) / (2.0 * var)).exp()
                / (2.0 * std::f64::consts::PI * var).sqrt()
        });
        let err = GridFunction::from_values(grid, 1, g.component(0).to_vec())
            .unwrap()
            .sub(&analytic)
            .max_abs();
        assert!(err < 1e-7, "gradient error {err}");
        // odd symmetry: zero at the origin node
        let origin = grid.n / 2;
        assert!(g.component(0)[origin].abs() < 1e-12);
        // periodic integral vanishes
        let total: f64 = g.component(0).iter().sum::<f64>() * grid.cell_volume();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_centered_differences() {
        // the fd-vs-spectral mismatch is the fd truncation error: O(h^2)
        let mismatch = |n: usize| -> f64 {
            let grid = Grid::new(1, n, 160.0).unwrap();
            let t = 0.02;
            let p = stable_density(1.7, t, &grid).unwrap();
            let g = grad_stable_density(1.7, t, &grid).unwrap();
            let h = grid.h();
            let mut max_err = 0.0f64;
            for j in 0..grid.n {
                let fd = (p.values[(j + 1) % grid.n] - p.values[(j + grid.n - 1) % grid.n])
                    / (2.0 * h);
                max_err = max_err.max((fd - g.component(0)[j]).abs());
            }
            max_err
        };
        let coarse = mismatch(8192);
        let fine = mismatch(16384);
        assert!(
            coarse / fine > 3.0 && coarse / fine < 5.0,
            "h-halving ratio {} not O(h^2)",
            coarse / fine
        );
    }

    #[test]
    fn chapman_kolmogorov_on_grid() {
        let grid = Grid::new(1, 256, 10.0).unwrap();
        let sp = Spectral::new(grid);
        for (t, s) in [(0.05, 0.05), (0.1, 0.4), (0.5, 0.5)] {
            let pt = stable_density(2.0, t, &grid).unwrap();
            let ps = stable_density(2.0, s, &grid).unwrap();
            let pts = stable_density(2.0, t + s, &grid).unwrap();
            let conv = sp.convolve(&pt, &ps).unwrap();
            let err = conv.sub(&pts).max_abs();
            assert!(err <= 1e-6, "t={t} s={s}: {err}");
        }
    }

    #[test]
    fn increment_variance_at_gaussian_endpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let x = sample_stable_increment(2.0, 1.0, 1, &mut rng).unwrap()[0];
            sum += x;
            sum2 += x * x;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((var - 2.0).abs() < 0.02, "variance {var}");
        // symmetric law: mean within 4 sigma / sqrt(n)
        assert!(mean.abs() < 4.0 * (2.0f64 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn increment_scaling_via_ks_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let alpha = 1.5;
        let n = 100_000usize;
        let mut a: Vec<f64> = (0..n)
            .map(|_| sample_stable_increment(alpha, 2.0, 1, &mut rng).unwrap()[0])
            .collect();
        let scale = 2.0f64.powf(1.0 / alpha);
        let mut b: Vec<f64> = (0..n)
            .map(|_| scale * sample_stable_increment(alpha, 1.0, 1, &mut rng).unwrap()[0])
            .collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        // two-sample KS statistic
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < n && j < n {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / n as f64 - j as f64 / n as f64).abs());
        }
        let lambda = d * (n as f64 / 2.0).sqrt();
        // asymptotic Kolmogorov tail
        let p: f64 = 2.0
            * (1..=100)
                .map(|k| (-1.0f64).powi(k as i32 + 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp())
                .sum::<f64>();
        assert!(p > 0.01, "KS p-value {p} too small (d = {d})");
    }

    #[test]
    fn increments_match_characteristic_function() {
        // empirical CF vs exp(-|xi|^alpha) for both dimensions
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000usize;
        for (alpha, d) in [(1.5, 1usize), (1.5, 2usize), (1.2, 2usize)] {
            for xi in [0.5f64, 1.0, 1.5] {
                let mut acc = 0.0;
                for _ in 0..n {
                    let x = sample_stable_increment(alpha, 1.0, d, &mut rng).unwrap();
                    acc += (xi * x[0]).cos();
                }
                let emp = acc / n as f64;
                let expect = (-xi.powf(alpha)).exp();
                assert!(
                    (emp - expect).abs() < 0.01,
                    "alpha={alpha} d={d} xi={xi}: {emp} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn hk_slope_gaussian_sup_norm() {
        // early times keep the singular thermic part dominant over the
        // bounded low-frequency block
        let grid = Grid::new(1, 8192, 10.0).unwrap();
        let spec = BesovSpec::new(0.5, f64::INFINITY, f64::INFINITY).unwrap();
        let times: Vec<f64> = (0..7).map(|i| 1e-4 * 1.47f64.powi(i)).collect();
        let slope = verify_hk_exponent(2.0, &spec, 0, &times, &grid).unwrap();
        let expect = hk_expected_slope_short(2.0, &spec, 0, 1);
        assert!((expect + 0.75).abs() < 1e-12);
        assert!(
            (slope - expect).abs() <= 0.1 * expect.abs(),
            "slope {slope} vs {expect}"
        );
    }

    #[test]
    fn hk_slope_clipped_positive_part() {
        // gamma < 0 with ell = 1 clips the positive part to zero
        let grid = Grid::new(1, 2048, 10.0).unwrap();
        let spec = BesovSpec::new(-0.3, 1.0, f64::INFINITY).unwrap();
        let times: Vec<f64> = (0..6).map(|i| 0.01 * 1.4f64.powi(i)).collect();
        let slope = verify_hk_exponent(2.0, &spec, 0, &times, &grid).unwrap();
        assert!(slope.abs() <= 0.05, "slope {slope} should be ~0");
    }

    #[test]
    fn two_dimensional_gaussian_endpoint() {
        let grid = Grid::new(2, 128, 8.0).unwrap();
        let t = 0.2;
        let p = stable_density(2.0, t, &grid).unwrap();
        let q = gaussian_heat(grid, t);
        assert!(p.sub(&q).max_abs() < 1e-8);
        assert!((p.mass() - 1.0).abs() < 1e-8);
        let g = grad_stable_density(2.0, t, &grid).unwrap();
        assert_eq!(g.components, 2);
        // odd symmetry at the origin in both components
        let origin = (grid.n / 2) * grid.n + grid.n / 2;
        assert!(g.component(0)[origin].abs() < 1e-12);
        assert!(g.component(1)[origin].abs() < 1e-12);
    }

    #[test]
    fn hk_slope_needs_enough_times() {
        let grid = Grid::new(1, 128, 10.0).unwrap();
        let spec = BesovSpec::new(0.5, 2.0, 1.0).unwrap();
        assert!(verify_hk_exponent(2.0, &spec, 0, &[0.1, 0.2], &grid).is_err());
    }
}
