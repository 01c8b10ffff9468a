//! Acceptance suite: quantitative desk-scale checks of every module,
//! runnable from the CLI and from the integration tests.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::besov::{
    adaptive_simpson, beta_integral, beta_integral_lt, BesovEvaluator, BesovSpec,
};
use crate::error::{Error, Result};
use crate::fokker_planck::{
    cauchy_sweep, drift_integrability, gaussian_density, gronwall_envelope, limit_duhamel_residual,
    short_time_track, solve_mollified_fp, uniqueness_probe, KernelNorms, QuadRule, SolverConfig,
    TimeWeight, TrackSpec,
};
use crate::grid::{Grid, GridFunction};
use crate::kernels::{synthesize_kernel, Kernel, KernelFamily, KernelSpec};
use crate::params::{
    check_c3, check_c3lt, check_ms, check_ws, feasible_theta_interval, ParameterSet,
    DEFAULT_SMALL,
};
use crate::particles::{
    compare_to_fp, pathwise_probe_d1, simulate, young_reconstruction, SimConfig,
};
use crate::spectral::Spectral;
use crate::stable::{
    hk_expected_slope_long, hk_expected_slope_short, stable_density, verify_hk_exponent,
};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub details: String,
    pub runtime_s: f64,
    pub budget_s: f64,
}

pub const CRITERIA: &[(usize, &str, f64)] = &[
    (1, "condition engine on worked examples", 1.0),
    (2, "heat-kernel closed-form and self-similarity", 5.0),
    (3, "heat-kernel norm-decay exponents", 60.0),
    (4, "beta-function identities vs quadrature", 5.0),
    (5, "linear-regime Fokker-Planck solver", 60.0),
    (6, "Gronwall envelope calibration and validation", 600.0),
    (7, "epsilon-Cauchy mollification ladder", 900.0),
    (8, "limit-equation residual and uniqueness probe", 300.0),
    (9, "drift integrability", 120.0),
    (10, "particle / Fokker-Planck cross-validation", 600.0),
    (11, "Young-integral reconstruction", 120.0),
    (12, "pathwise epsilon-ladder probe (d=1)", 300.0),
    (13, "pipeline determinism across thread counts", 60.0),
];

pub fn suites() -> Vec<(&'static str, Vec<usize>)> {
    vec![
        ("all", (1..=13).collect()),
        ("conditions", vec![1]),
        ("kernel", vec![2, 3]),
        ("besov", vec![4]),
        ("fp", vec![5, 6, 7, 8, 9]),
        ("particles", vec![10, 11, 12]),
        ("pipeline", vec![13]),
        ("linear", vec![2, 5]),
    ]
}

pub fn run_suite(name: &str) -> Result<Vec<CriterionResult>> {
    let ids = suites()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ids)| ids)
        .ok_or_else(|| Error::Domain(format!("unknown suite {name:?}")))?;
    Ok(ids.into_iter().map(run_criterion).collect())
}

pub fn run_criterion(id: usize) -> CriterionResult {
    let (_, name, budget) = CRITERIA
        .iter()
        .find(|(i, _, _)| *i == id)
        .copied()
        .unwrap_or((id, "unknown", 0.0));
    let start = Instant::now();
    let outcome = match id {
        1 => criterion_conditions(),
        2 => criterion_heat_kernel(),
        3 => criterion_hk_exponents(),
        4 => criterion_beta_identities(),
        5 => criterion_fp_linear(),
        6 => criterion_gronwall(),
        7 => criterion_cauchy(),
        8 => criterion_limit_residual(),
        9 => criterion_drift_integrability(),
        10 => criterion_particle_cross_validation(),
        11 => criterion_young(),
        12 => criterion_pathwise(),
        13 => criterion_determinism(),
        _ => Err(Error::Domain(format!("unknown criterion {id}"))),
    };
    let runtime_s = start.elapsed().as_secs_f64();
    let (passed, details) = match outcome {
        Ok(d) => (true, d),
        Err(e) => (false, e.to_string()),
    };
    CriterionResult {
        id,
        name: name.to_string(),
        passed,
        details,
        runtime_s,
        budget_s: budget,
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Numeric(msg.into()))
    }
}

fn example_short_params() -> ParameterSet {
    ParameterSet {
        alpha: 2.0,
        d: 1,
        r: f64::INFINITY,
        p: f64::INFINITY,
        q: f64::INFINITY,
        beta: -1.9,
        beta0: 1.45,
        p0: 1.0,
        q0: f64::INFINITY,
        theta: 0.44,
        theta_bar: 0.48,
        eta: DEFAULT_SMALL,
        delta: DEFAULT_SMALL,
        delta_prime: DEFAULT_SMALL,
    }
}

fn example_long_params() -> ParameterSet {
    ParameterSet {
        alpha: 1.9,
        d: 1,
        r: f64::INFINITY,
        p: 1.0,
        q: f64::INFINITY,
        beta: -1.8,
        beta0: 2.4,
        p0: 1.0,
        q0: f64::INFINITY,
        theta: 0.35,
        theta_bar: 0.40,
        eta: DEFAULT_SMALL,
        delta: DEFAULT_SMALL,
        delta_prime: DEFAULT_SMALL,
    }
}

fn criterion_conditions() -> Result<String> {
    // worked short-time example: feasible theta near 1/2
    let ps = example_short_params();
    ensure(check_c3(&ps).satisfied && check_ms(&ps).satisfied, "short example infeasible")?;
    let interval = feasible_theta_interval(&ps)
        .ok_or_else(|| Error::Numeric("short example: theta interval empty".into()))?;
    ensure(
        interval.contains(0.44) && interval.hi > 0.4,
        format!("theta interval ({}, {}) misses the near-1/2 region", interval.lo, interval.hi),
    )?;

    // dropping beta0 below the threshold minus 0.05 kills feasibility
    let mut weak = ps.clone();
    weak.beta0 = 1.5 * (1.0 - 0.1) - 0.05;
    ensure(
        feasible_theta_interval(&weak).is_none(),
        "sub-threshold beta0 should be infeasible",
    )?;

    // long-time example passes C3 + C3-LT + WS
    let lt = example_long_params();
    ensure(
        check_c3(&lt).satisfied && check_c3lt(&lt).satisfied && check_ws(&lt).satisfied,
        "long-time example infeasible",
    )?;

    // alpha = 2, r = inf fails the chain condition
    ensure(
        !check_c3lt(&example_short_params()).satisfied,
        "alpha=2, r=inf must violate the long-time chain",
    )?;
    Ok(format!(
        "theta intervalized ({:.3}, {:.3}); long-time example feasible; chain rejects alpha=2,r=inf",
        interval.lo, interval.hi
    ))
}

fn criterion_heat_kernel() -> Result<String> {
    // alpha = 2 spectral density vs closed-form Gaussian
    let grid = Grid::new(1, 256, 10.0)?;
    let mut worst = 0.0f64;
    for i in 0..20 {
        let t = 0.05 + i as f64 * 0.05;
        let p = stable_density(2.0, t, &grid)?;
        let gauss = GridFunction::sample_scalar(grid, |x, _| {
            let var = 2.0 * t;
            (-(x * x) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        });
        worst = worst.max(p.sub(&gauss).max_abs());
    }
    ensure(worst <= 1e-6, format!("Gaussian L-inf error {worst}"))?;

    // alpha = 1.5 self-similarity via the contracted-grid identity
    let alpha = 1.5;
    let c = 2.0f64;
    let t = 0.1;
    let big = Grid::new(1, 65536, 1900.0)?;
    let small = Grid::new(1, 65536, 1900.0 * c.powf(-1.0 / alpha))?;
    let lhs = stable_density(alpha, c * t, &big)?;
    let rhs = stable_density(alpha, t, &small)?;
    let scale = c.powf(-1.0 / alpha);
    let mut ss_err = 0.0f64;
    for j in 0..big.n {
        ss_err = ss_err.max((lhs.values[j] - scale * rhs.values[j]).abs());
    }
    ensure(ss_err <= 1e-5, format!("self-similarity error {ss_err}"))?;
    Ok(format!(
        "gaussian L-inf error {worst:.2e}; self-similarity error {ss_err:.2e}"
    ))
}

fn criterion_hk_exponents() -> Result<String> {
    struct Case {
        alpha: f64,
        spec: BesovSpec,
        deriv: usize,
        grid: (usize, f64),
        times: Vec<f64>,
        long: bool,
        tol: f64,
    }
    let geom = |lo: f64, ratio: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo * ratio.powi(i as i32)).collect()
    };
    let cases = vec![
        Case {
            alpha: 2.0,
            spec: BesovSpec::new(0.5, f64::INFINITY, f64::INFINITY)?,
            deriv: 0,
            grid: (8192, 10.0),
            times: geom(1e-4, 1.47, 7),
            long: false,
            tol: 0.10,
        },
        Case {
            alpha: 2.0,
            spec: BesovSpec::new(1.0, f64::INFINITY, 1.0)?,
            deriv: 0,
            grid: (8192, 10.0),
            times: geom(1e-4, 1.47, 7),
            long: false,
            tol: 0.10,
        },
        Case {
            alpha: 2.0,
            spec: BesovSpec::new(0.4, 2.0, f64::INFINITY)?,
            deriv: 1,
            grid: (8192, 10.0),
            times: geom(1e-4, 1.47, 7),
            long: false,
            tol: 0.10,
        },
        Case {
            alpha: 1.8,
            spec: BesovSpec::new(0.3, f64::INFINITY, f64::INFINITY)?,
            deriv: 0,
            grid: (65536, 80.0),
            times: geom(1e-4, 1.47, 7),
            long: false,
            tol: 0.10,
        },
        Case {
            alpha: 2.0,
            spec: BesovSpec::new(0.3, 1.0, 1.0)?,
            deriv: 1,
            grid: (2048, 160.0),
            times: geom(16.0, 2.0f64.sqrt(), 7),
            long: true,
            tol: 0.15,
        },
        Case {
            alpha: 2.0,
            spec: BesovSpec::new(-0.2, 2.0, f64::INFINITY)?,
            deriv: 0,
            grid: (2048, 160.0),
            times: geom(16.0, 2.0f64.sqrt(), 7),
            long: true,
            tol: 0.15,
        },
    ];
    let mut lines = Vec::new();
    for case in cases {
        let grid = Grid::new(1, case.grid.0, case.grid.1)?;
        let slope = verify_hk_exponent(case.alpha, &case.spec, case.deriv, &case.times, &grid)?;
        let expect = if case.long {
            hk_expected_slope_long(case.alpha, &case.spec, case.deriv, 1)
        } else {
            hk_expected_slope_short(case.alpha, &case.spec, case.deriv, 1)
        };
        ensure(
            (slope - expect).abs() <= case.tol * expect.abs(),
            format!(
                "HK slope {slope:.4} vs {expect:.4} (alpha {}, gamma {}, long {})",
                case.alpha, case.spec.gamma, case.long
            ),
        )?;
        lines.push(format!("{slope:.3}/{expect:.3}"));
    }
    Ok(format!("fitted/expected slopes: {}", lines.join(", ")))
}

fn criterion_beta_identities() -> Result<String> {
    // short-time closed form vs the substitution quadrature oracle
    let oracle = |g1: f64, g2: f64| -> f64 {
        let p1 = 1.0 / (1.0 - g2);
        let left = adaptive_simpson(
            &|z: f64| p1 * (1.0 - z.powf(p1)).powf(-g1),
            0.0,
            0.5f64.powf(1.0 - g2),
            1e-12,
        );
        let p2 = 1.0 / (1.0 - g1);
        let right = adaptive_simpson(
            &|z: f64| p2 * (1.0 - z.powf(p2)).powf(-g2),
            0.0,
            0.5f64.powf(1.0 - g1),
            1e-12,
        );
        left + right
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let g1 = rng.gen_range(-0.5..0.95);
        let g2 = rng.gen_range(-0.5..0.95);
        let len = rng.gen_range(0.1..4.0);
        let exact = beta_integral(g1, g2, 0.0, len)?;
        let quad = oracle(g1, g2) * len.powf(1.0 - g1 - g2);
        worst = worst.max((exact - quad).abs() / exact.abs());
    }
    ensure(worst <= 1e-8, format!("short-time relative error {worst}"))?;

    // long-time bound with one calibrated constant
    let mut c_cal = 0.0f64;
    for corner in [
        [0.0, 0.0, 0.0, 0.0],
        [0.7, 0.0, 0.7, 0.0],
        [0.0, 0.7, 0.0, 0.7],
        [0.7, 0.7, 0.7, 0.7],
    ] {
        for len in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let r = beta_integral_lt(corner[0], corner[1], corner[2], corner[3], 0.0, len)?;
            c_cal = c_cal.max(r.quadrature / r.bound);
        }
    }
    let mut cal_rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..60 {
        let e: Vec<f64> = (0..4).map(|_| cal_rng.gen_range(0.0..0.7)).collect();
        let r = beta_integral_lt(e[0], e[1], e[2], e[3], 0.0, cal_rng.gen_range(0.5..8.0))?;
        c_cal = c_cal.max(r.quadrature / r.bound);
    }
    let mut val_rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let e: Vec<f64> = (0..4).map(|_| val_rng.gen_range(0.0..0.7)).collect();
        let r = beta_integral_lt(e[0], e[1], e[2], e[3], 0.0, val_rng.gen_range(0.5..8.0))?;
        ensure(
            r.quadrature <= 1.01 * c_cal * r.bound,
            format!(
                "long-time bound violated: {} > {} * C at {:?}",
                r.quadrature, r.bound, e
            ),
        )?;
    }
    Ok(format!(
        "short-time worst rel err {worst:.2e}; long-time calibrated C = {c_cal:.4}"
    ))
}

fn plain_l1_track() -> TrackSpec {
    TrackSpec {
        alpha: 2.0,
        weight: TimeWeight::Power(0.0),
        spec: BesovSpec::new(0.0, 1.0, 1.0).expect("valid"),
    }
}

fn criterion_fp_linear() -> Result<String> {
    // b = 0 reproduces the heat flow, d = 1, N = 512, 128 nodes
    let grid = Grid::new(1, 512, 10.0)?;
    let mu = gaussian_density(grid, 0.4);
    let cfg = SolverConfig {
        dt: 1.0 / 128.0,
        ..Default::default()
    };
    let out = solve_mollified_fp(None, &mu, 0.0, 1.0, &cfg, &plain_l1_track())?;
    ensure(out.path.times.len() == 129, "expected 128 time nodes")?;
    let sp = Spectral::new(grid);
    let mut worst = 0.0f64;
    for (i, s) in out.path.times.iter().enumerate().skip(1) {
        let heat = sp.convolve(&stable_density(2.0, *s, &grid)?, &mu)?;
        worst = worst.max(out.path.frames[i].sub(&heat).max_abs());
    }
    ensure(worst <= 1e-8, format!("heat-flow error {worst}"))?;

    // semigroup composition: started from p_tau, the path is p_(s + tau)
    let tau = 0.25;
    let mu2 = stable_density(2.0, tau, &grid)?;
    let out2 = solve_mollified_fp(None, &mu2, 0.0, 0.5, &cfg, &plain_l1_track())?;
    let mut worst2 = 0.0f64;
    for (i, s) in out2.path.times.iter().enumerate().skip(1) {
        worst2 = worst2.max(
            out2.path.frames[i]
                .sub(&stable_density(2.0, s + tau, &grid)?)
                .max_abs(),
        );
    }
    ensure(worst2 <= 1e-7, format!("semigroup error {worst2}"))?;

    // nonlinear run: mass within mass_tol at every node
    let kernel = synthesize_kernel(
        &KernelSpec {
            family: KernelFamily::RandomFourier,
            beta: -1.9,
            p: f64::INFINITY,
            q: f64::INFINITY,
            seed: 1,
            slabs: 1,
            amplitude: 0.05,
        },
        &grid,
    )?;
    let mollified = kernel.mollify(&sp, 0.05)?;
    let out3 = solve_mollified_fp(Some(&mollified), &mu, 0.0, 0.5, &cfg, &plain_l1_track())?;
    let mass_worst = out3
        .path
        .masses()
        .iter()
        .map(|m| (m - 1.0).abs())
        .fold(0.0f64, f64::max);
    ensure(mass_worst <= 1e-3, format!("mass drift {mass_worst}"))?;

    // dt-halving order on the terminal frame (first-order scheme or better);
    // the finer grid keeps the reference dt above the resolvability floor
    let grid_fine = Grid::new(1, 1024, 10.0)?;
    let mu_fine = gaussian_density(grid_fine, 0.4);
    let kernel_fine = kernel.resample(1024)?;
    let sp_fine = Spectral::new(grid_fine);
    let mollified_fine = kernel_fine.mollify(&sp_fine, 0.05)?;
    let mut terminal_errs = Vec::new();
    let dts = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let reference = {
        let cfg_ref = SolverConfig {
            dt: 1.0 / 512.0,
            picard_tol: 1e-10,
            ..Default::default()
        };
        solve_mollified_fp(Some(&mollified_fine), &mu_fine, 0.0, 0.5, &cfg_ref, &plain_l1_track())?
            .path
            .frames
            .last()
            .unwrap()
            .clone()
    };
    for dt in dts {
        let cfg_dt = SolverConfig {
            dt,
            picard_tol: 1e-10,
            ..Default::default()
        };
        let o = solve_mollified_fp(
            Some(&mollified_fine),
            &mu_fine,
            0.0,
            0.5,
            &cfg_dt,
            &plain_l1_track(),
        )?;
        terminal_errs.push(o.path.frames.last().unwrap().sub(&reference).max_abs());
    }
    let order = crate::stable::fit_log_slope(&dts.to_vec(), &terminal_errs)?;
    ensure(order >= 0.8, format!("dt-convergence order {order} < 0.8"))?;

    // measured contraction over the last iterations of the nonlinear run
    let dist = &out3.distances;
    if dist.len() >= 3 {
        for w in dist[dist.len().saturating_sub(3)..].windows(2) {
            ensure(
                w[1] < w[0],
                format!("Picard distances not contracting: {dist:?}"),
            )?;
        }
    }
    Ok(format!(
        "heat {worst:.1e}; semigroup {worst2:.1e}; mass {mass_worst:.1e}; dt-order {order:.2}"
    ))
}

/// Parameter set used by the envelope criterion: (C3)-feasible at beta = -1.9
/// with the largest available singularity slack.
fn gronwall_params() -> ParameterSet {
    let mut ps = example_short_params();
    ps.beta0 = 1.37; // zeta0 = 1.37, positive part 0.09, gamma0 = 0.045
    ps.eta = 0.008;
    ps.delta = 0.001;
    ps
}

struct GronwallRun {
    f_ok: bool,
    c_cal: f64,
}

fn gronwall_single(
    ps: &ParameterSet,
    grid: Grid,
    kernel: &Kernel,
    s_end: f64,
    c_cal: Option<f64>,
) -> Result<(crate::fokker_planck::GronwallFit, GronwallRun)> {
    let sp = Spectral::new(grid);
    let ev = BesovEvaluator::new(grid, ps.alpha);
    let mu = gaussian_density(grid, 3.0);
    let cfg = SolverConfig {
        dt: 1.0 / 128.0,
        picard_tol: 1e-9,
        ..Default::default()
    };
    let mollified = kernel.mollify(&sp, 0.05)?;
    let track = short_time_track(ps)?;
    let out = solve_mollified_fp(Some(&mollified), &mu, 0.0, s_end, &cfg, &track)?;
    let dq = crate::params::gamma_exponents(ps)?;
    let mu_norm = ev.norm_total(&mu, &BesovSpec::new(dq.beta0_bar, dq.p0_bar, dq.q0_bar)?);
    let bspec = BesovSpec::new(ps.beta, ps.p, ps.q)?;
    let div = kernel.divergence(&sp)?;
    let norms = KernelNorms {
        besov: kernel.lr_besov_norm(&ev, &bspec, ps.r, s_end),
        divergence: div.lr_besov_norm(&ev, &bspec, ps.r, s_end),
    };
    let fit = gronwall_envelope(&out.path, ps, &norms, mu_norm, &ev, c_cal)?;
    let run = GronwallRun {
        f_ok: fit.violations.is_empty(),
        c_cal: fit.c_cal,
    };
    Ok((fit, run))
}

fn gronwall_kernel(grid: &Grid, seed: u64, target_norm: f64) -> Result<Kernel> {
    // normalize every seed to the same measured norm budget so the envelope
    // coefficient C_b is seed-independent
    let spec = KernelSpec {
        family: KernelFamily::RandomFourier,
        beta: -1.9,
        p: f64::INFINITY,
        q: f64::INFINITY,
        seed,
        slabs: 1,
        amplitude: 1.0,
    };
    let mut kernel = synthesize_kernel(&spec, grid)?;
    let ev = BesovEvaluator::new(*grid, 2.0);
    let sp = Spectral::new(*grid);
    let bspec = BesovSpec::new(spec.beta, spec.p, spec.q)?;
    let div = kernel.divergence(&sp)?;
    let measured = ev.norm_total(&kernel.slabs[0], &bspec) + ev.norm_total(&div.slabs[0], &bspec);
    let scale = target_norm / measured;
    for slab in &mut kernel.slabs {
        slab.scale(scale);
    }
    Ok(kernel)
}

fn criterion_gronwall() -> Result<String> {
    let ps = gronwall_params();
    ensure(check_c3(&ps).satisfied, "envelope parameter set must satisfy C3")?;
    let grid = Grid::new(1, 512, 10.0)?;
    let target_norm = 0.05;

    // calibration on seed 0
    let kernel0 = gronwall_kernel(&grid, 0, target_norm)?;
    let (fit0, run0) = gronwall_single(&ps, grid, &kernel0, 0.5, None)?;
    ensure(
        fit0.c_cal.is_finite() && fit0.c_cal > 0.0,
        "calibrated constant not finite",
    )?;
    ensure(run0.f_ok, "calibration run violates its own envelope")?;

    // stability under grid doubling (same continuum kernel, resampled)
    let kernel_fine = kernel0.resample(1024)?;
    let grid_fine = Grid::new(1, 1024, 10.0)?;
    let (_, run_fine) = gronwall_single(&ps, grid_fine, &kernel_fine, 0.5, None)?;
    let drift = (run_fine.c_cal / run0.c_cal - 1.0).abs();
    ensure(
        drift <= 0.10,
        format!("C_cal moved by {drift:.3} under grid doubling"),
    )?;

    // validation on fresh seeds inside the computed horizon
    for seed in 1..=3u64 {
        let kernel = gronwall_kernel(&grid, seed, target_norm)?;
        let (fit, run) = gronwall_single(&ps, grid, &kernel, 0.25, Some(fit0.c_cal))?;
        ensure(
            run.f_ok,
            format!(
                "envelope violated on validation seed {seed} at nodes {:?}",
                fit.violations
            ),
        )?;
    }
    Ok(format!(
        "C_cal = {:.4e}, grid-doubling drift {:.2}%, 3 validation seeds clean, horizon {:.2e}",
        fit0.c_cal,
        drift * 100.0,
        fit0.horizon
    ))
}

fn criterion_cauchy() -> Result<String> {
    let ps = example_short_params();
    let grid = Grid::new(1, 512, 10.0)?;
    let kernel = synthesize_kernel(
        &KernelSpec {
            family: KernelFamily::RandomFourier,
            beta: -1.9,
            p: f64::INFINITY,
            q: f64::INFINITY,
            seed: 2,
            slabs: 1,
            amplitude: 0.05,
        },
        &grid,
    )?;
    let mu = gaussian_density(grid, 0.5);
    let cfg = SolverConfig {
        dt: 1.0 / 128.0,
        picard_tol: 1e-9,
        ..Default::default()
    };
    let eps = [0.2, 0.1, 0.05, 0.025];
    let table = cauchy_sweep(&kernel, &mu, &eps, &ps, &cfg, 0.0, 0.25, false)?;
    for col in [&table.weighted, &table.l1] {
        for w in col.windows(2) {
            ensure(
                w[1] < w[0],
                format!("column not strictly decreasing: {col:?}"),
            )?;
        }
        ensure(
            *col.last().unwrap() <= col[0] / 4.0,
            format!("final entry {} not <= first/4 of {col:?}", col.last().unwrap()),
        )?;
    }
    Ok(format!(
        "weighted column {:?}, L1 column {:?}",
        table.weighted, table.l1
    ))
}

fn criterion_limit_residual() -> Result<String> {
    let ps = example_short_params();
    let grid = Grid::new(1, 512, 10.0)?;
    let sp = Spectral::new(grid);
    let kernel = synthesize_kernel(
        &KernelSpec {
            family: KernelFamily::RandomFourier,
            beta: -1.9,
            p: f64::INFINITY,
            q: f64::INFINITY,
            seed: 2,
            slabs: 1,
            amplitude: 0.05,
        },
        &grid,
    )?;
    let mu = gaussian_density(grid, 1.0);
    // the fixed point is resolved to the order of the mollification error
    // at the finest epsilon; over-resolving it would only measure the
    // quadrature floor
    let cfg = SolverConfig {
        dt: 1.0 / 128.0,
        picard_tol: 2e-3,
        ..Default::default()
    };
    let track = short_time_track(&ps)?;
    let mollified = kernel.mollify(&sp, 0.025)?;
    let out = solve_mollified_fp(Some(&mollified), &mu, 0.0, 0.25, &cfg, &track)?;
    let unmollified_res = limit_duhamel_residual(&out.path, Some(&kernel), &mu, &cfg)?;
    ensure(
        unmollified_res <= 5.0 * out.residual,
        format!(
            "un-mollified residual {unmollified_res:.3e} > 5 x mollified {:.3e}",
            out.residual
        ),
    )?;
    let gap = uniqueness_probe(Some(&mollified), &mu, 0.0, 0.25, &cfg, &track)?;
    ensure(
        gap <= 2.0 * cfg.picard_tol,
        format!("initialization gap {gap:.3e} > 2 picard_tol"),
    )?;
    Ok(format!(
        "mollified residual {:.3e}, un-mollified {unmollified_res:.3e}, restart gap {gap:.3e}",
        out.residual
    ))
}

fn criterion_drift_integrability() -> Result<String> {
    let ps = example_short_params();
    let grid = Grid::new(1, 512, 10.0)?;
    let sp = Spectral::new(grid);
    let kernel = synthesize_kernel(
        &KernelSpec {
            family: KernelFamily::RandomFourier,
            beta: -1.9,
            p: f64::INFINITY,
            q: f64::INFINITY,
            seed: 3,
            slabs: 1,
            amplitude: 0.05,
        },
        &grid,
    )?;
    let mollified = kernel.mollify(&sp, 0.05)?;
    let mu = gaussian_density(grid, 0.5);
    let track = short_time_track(&ps)?;
    let r_theta = 5.0;
    let mut norms = Vec::new();
    for dt in [1.0 / 64.0, 1.0 / 128.0] {
        let cfg = SolverConfig {
            dt,
            picard_tol: 1e-9,
            ..Default::default()
        };
        let out = solve_mollified_fp(Some(&mollified), &mu, 0.0, 0.5, &cfg, &track)?;
        norms.push(drift_integrability(&out.path, &mollified, r_theta, ps.theta, &ps)?);
    }
    ensure(
        norms.iter().all(|n| n.is_finite() && *n > 0.0),
        "drift norm not finite",
    )?;
    let change = (norms[1] / norms[0] - 1.0).abs();
    ensure(
        change <= 0.05,
        format!("drift norm moved {:.2}% under node doubling", change * 100.0),
    )?;
    // refusal outside the admissible interval
    let cfg = SolverConfig {
        dt: 1.0 / 64.0,
        picard_tol: 1e-9,
        ..Default::default()
    };
    let out = solve_mollified_fp(Some(&mollified), &mu, 0.0, 0.5, &cfg, &track)?;
    ensure(
        drift_integrability(&out.path, &mollified, 1.5, ps.theta, &ps).is_err(),
        "r_theta below alpha must be refused",
    )?;
    Ok(format!(
        "L^(r_theta) drift norm {:.5e}, node-doubling change {:.2}%",
        norms[1],
        change * 100.0
    ))
}

fn criterion_particle_cross_validation() -> Result<String> {
    let grid = Grid::new(1, 512, 10.0)?;
    let sp = Spectral::new(grid);
    let kernel = synthesize_kernel(
        &KernelSpec {
            family: KernelFamily::RandomFourier,
            beta: -1.9,
            p: f64::INFINITY,
            q: f64::INFINITY,
            seed: 2,
            slabs: 1,
            amplitude: 0.05,
        },
        &grid,
    )?;
    let mollified = kernel.mollify(&sp, 0.05)?;
    let mu = gaussian_density(grid, 0.5);
    let cfg = SolverConfig {
        dt: 1.0 / 128.0,
        picard_tol: 1e-9,
        ..Default::default()
    };
    let out = solve_mollified_fp(Some(&mollified), &mu, 0.0, 0.25, &cfg, &plain_l1_track())?;
    let scfg = SimConfig {
        n: 100_000,
        dt: 1.0 / 128.0,
        seed: 11,
        alpha: 2.0,
        bandwidth: None,
        snapshot_stride: 0,
    };
    let traj = simulate(Some(&mollified), &mu, 0.0, 0.25, &scfg)?;
    let curve = compare_to_fp(&traj, &out.path, 2.0 * grid.h(), true)?;
    let (s, terminal) = *curve.last().ok_or_else(|| Error::Numeric("no node".into()))?;
    ensure(
        terminal <= 0.05,
        format!("terminal L1 distance {terminal:.4} at s = {s}"),
    )?;
    Ok(format!("terminal matched-smoothing L1 distance {terminal:.4}"))
}

fn criterion_young() -> Result<String> {
    let grid = Grid::new(1, 512, 10.0)?;
    let kernel = synthesize_kernel(
        &KernelSpec {
            family: KernelFamily::GradientPotential,
            beta: 0.0,
            p: f64::INFINITY,
            q: f64::INFINITY,
            seed: 4,
            slabs: 1,
            amplitude: 0.05,
        },
        &grid,
    )?;
    let mu = gaussian_density(grid, 0.5);
    let cfg = SolverConfig {
        dt: 1.0 / 128.0,
        picard_tol: 1e-9,
        ..Default::default()
    };
    let out = solve_mollified_fp(Some(&kernel), &mu, 0.0, 0.25, &cfg, &plain_l1_track())?;
    let mut scfg = SimConfig {
        n: 2000,
        dt: 1.0 / 128.0,
        seed: 5,
        alpha: 2.0,
        bandwidth: None,
        snapshot_stride: 1,
    };
    let traj = simulate(Some(&kernel), &mu, 0.0, 0.25, &scfg)?;

    let mut gaps = Vec::new();
    let mut widths = Vec::new();
    for intervals in [4usize, 8, 16, 32] {
        let partition: Vec<f64> = (0..=intervals)
            .map(|i| 0.25 * i as f64 / intervals as f64)
            .collect();
        let rec = young_reconstruction(&kernel, &out.path, &traj, &partition)?;
        widths.push(0.25 / intervals as f64);
        gaps.push(rec.gap);
    }
    let rate = crate::stable::fit_log_slope(&widths, &gaps)?;
    ensure(rate >= 0.5, format!("partition-halving rate {rate:.3} < 0.5"))?;
    ensure(
        *gaps.last().unwrap() <= 1e-3,
        format!("terminal gap {} > 1e-3", gaps.last().unwrap()),
    )?;

    // b = 0: both sums exactly zero
    scfg.seed = 6;
    let traj0 = simulate(None, &mu, 0.0, 0.25, &scfg)?;
    let out0 = solve_mollified_fp(None, &mu, 0.0, 0.25, &cfg, &plain_l1_track())?;
    let zero_kernel = {
        let mut k = kernel.clone();
        for s in &mut k.slabs {
            s.values.fill(0.0);
        }
        k
    };
    let partition: Vec<f64> = (0..=8).map(|i| 0.25 * i as f64 / 8.0).collect();
    let rec0 = young_reconstruction(&zero_kernel, &out0.path, &traj0, &partition)?;
    ensure(rec0.gap == 0.0, "zero kernel must give exact zero gap")?;
    Ok(format!(
        "gaps {gaps:?}, fitted rate {rate:.2}, zero-kernel gap exactly 0"
    ))
}

fn criterion_pathwise() -> Result<String> {
    let grid = Grid::new(1, 512, 10.0)?;
    let kernel = synthesize_kernel(
        &KernelSpec {
            family: KernelFamily::RandomFourier,
            beta: -1.9,
            p: f64::INFINITY,
            q: f64::INFINITY,
            seed: 2,
            slabs: 1,
            amplitude: 0.05,
        },
        &grid,
    )?;
    let mu = gaussian_density(grid, 0.5);
    let cfg = SimConfig {
        n: 20_000,
        dt: 1.0 / 128.0,
        seed: 3,
        alpha: 2.0,
        bandwidth: None,
        snapshot_stride: 0,
    };
    let mut terminals = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let gaps = pathwise_probe_d1(&kernel, &mu, 0.0, 0.25, &cfg, eps)?;
        terminals.push(*gaps.last().unwrap());
    }
    for w in terminals.windows(2) {
        ensure(
            w[1] < w[0],
            format!("terminal gaps not strictly decreasing: {terminals:?}"),
        )?;
    }
    Ok(format!("terminal path gaps {terminals:?}"))
}

fn criterion_determinism() -> Result<String> {
    use crate::pipeline::{
        run_pipeline, ExperimentConfig, GridSpec, Horizon, Mode, MuSpec, SimSection,
    };
    let dir = std::env::temp_dir().join(format!("besov-mkv-accept-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir)?;
    let params = serde_json::json!({
        "alpha": 2.0, "d": 1, "r": "inf", "p": "inf", "q": "inf",
        "beta": -1.9, "beta0": 1.45, "p0": 1.0, "q0": "inf",
        "theta": 0.44, "theta_bar": 0.48
    });
    let params_file = dir.join("params.json");
    std::fs::write(&params_file, serde_json::to_string_pretty(&params)?)?;
    let mk_config = |out: &str| ExperimentConfig {
        params_file: params_file.clone(),
        kernel_spec: KernelSpec {
            family: KernelFamily::RandomFourier,
            beta: -1.9,
            p: f64::INFINITY,
            q: f64::INFINITY,
            seed: 0,
            slabs: 1,
            amplitude: 0.02,
        },
        mu_spec: MuSpec::Gaussian { sigma: 0.5 },
        grid: GridSpec {
            d: 1,
            n: 256,
            l: 10.0,
        },
        solver: SolverConfig {
            dt: 1.0 / 32.0,
            picard_tol: 1e-8,
            picard_max: 60,
            quad_rule: QuadRule::Product,
            mass_tol: 1e-3,
            epsilon: 0.1,
        },
        mode: Mode::Short,
        horizon: Horizon { t0: 0.0, s: 0.25 },
        epsilons: vec![0.2, 0.1],
        simulation: Some(SimSection {
            n: 5000,
            dt: 1.0 / 32.0,
            seed: 7,
        }),
        outputs: dir.join(out),
    };
    let mut manifests = Vec::new();
    for (threads, out) in [(1usize, "run_t1"), (4, "run_t4")] {
        let config = mk_config(out);
        let raw = serde_json::to_string_pretty(&config)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Numeric(e.to_string()))?;
        let manifest = pool.install(|| run_pipeline(&config, &raw))?;
        manifests.push(manifest);
    }
    ensure(
        manifests[0].outputs == manifests[1].outputs,
        "outputs differ across thread counts",
    )?;
    let n_files = manifests[0].outputs.len();
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!(
        "{n_files} output files byte-identical across 1 and 4 threads"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_listing_is_complete() {
        let all: Vec<usize> = suites()
            .into_iter()
            .find(|(n, _)| *n == "all")
            .unwrap()
            .1;
        assert_eq!(all.len(), CRITERIA.len());
        assert!(run_suite("nope").is_err());
    }
}
