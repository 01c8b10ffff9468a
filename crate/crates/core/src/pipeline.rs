//! End-to-end experiment orchestration: condition checks, kernel synthesis,
//! the mollification ladder, Fokker-Planck solves, envelope and particle
//! cross-validation, with a reproducibility manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::besov::{BesovEvaluator, BesovSpec};
use crate::error::{Error, Result};
use crate::fokker_planck::{
    cauchy_sweep, gronwall_envelope, short_time_track, solve_fp_classical, solve_fp_longtime,
    solve_mollified_fp, KernelNorms, SolveOutput, SolverConfig,
};
use crate::grid::{Grid, GridFunction};
use crate::io::{save_grid_function, sha256_hex, Sidecar};
use crate::kernels::{synthesize_kernel, KernelSpec};
use crate::params::{
    check_c2star, check_c2star_strong, check_c3, check_c3lt, check_informational, check_ms,
    check_ws, feasible_theta_interval, gamma_exponents, horizon_exponent, ConditionReport,
    ParameterSet,
};
use crate::particles::{compare_to_fp, simulate, SimConfig};
use crate::spectral::Spectral;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub l: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MuSpec {
    Gaussian { sigma: f64 },
    Uniform,
}

impl MuSpec {
    pub fn build(&self, grid: Grid) -> GridFunction {
        match self {
            MuSpec::Gaussian { sigma } => crate::fokker_planck::gaussian_density(grid, *sigma),
            MuSpec::Uniform => GridFunction::from_values(
                grid,
                1,
                vec![1.0 / grid.volume(); grid.len()],
            )
            .expect("uniform density"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Short,
    Long,
    Classical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Horizon {
    pub t0: f64,
    pub s: f64,
}

/// Batch experiment description (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params_file: PathBuf,
    pub kernel_spec: KernelSpec,
    pub mu_spec: MuSpec,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub mode: Mode,
    pub horizon: Horizon,
    /// Mollification ladder; the smallest entry drives the final stages.
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub simulation: Option<SimSection>,
    pub outputs: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSection {
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
}

/// Condition-check bundle produced by `run_check`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckBundle {
    pub reports: Vec<ConditionReport>,
    pub informational: Vec<ConditionReport>,
    pub theta_interval: Option<crate::params::ThetaInterval>,
    pub derived: Option<crate::params::DerivedQuantities>,
    /// Exponent denominator of the Gronwall horizon increment.
    pub horizon_exponent: Option<f64>,
}

pub fn run_check(ps: &ParameterSet) -> CheckBundle {
    let reports = vec![
        check_c3(ps),
        check_ms(ps),
        check_ws(ps),
        check_c3lt(ps),
        check_c2star(ps),
        check_c2star_strong(ps),
    ];
    let derived = gamma_exponents(ps).ok();
    let horizon_exp = derived.as_ref().map(|d| horizon_exponent(ps, d.gamma));
    CheckBundle {
        reports,
        informational: check_informational(ps),
        theta_interval: feasible_theta_interval(ps),
        derived,
        horizon_exponent: horizon_exp,
    }
}

fn write_deterministic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

fn node_csv(
    out: &SolveOutput,
    ev: &BesovEvaluator,
    envelope: Option<&[f64]>,
) -> String {
    let mut s = String::from("s,mass,besov_norm,weighted_norm,envelope,residual\n");
    let norms = out.path.node_norms(ev);
    for (i, t) in out.path.times.iter().enumerate() {
        let w = out.path.gamma_meta.weight.eval(t - out.path.t0);
        let env = envelope.map_or(f64::NAN, |e| e[i]);
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt(*t),
            fmt(out.path.frames[i].mass()),
            fmt(norms[i]),
            fmt(w * norms[i]),
            fmt(env),
            fmt(out.residual_curve[i]),
        ));
    }
    s
}

/// Reproducibility manifest: content hashes of every input and output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// check -> synthesize -> mollify ladder -> solve per epsilon -> cauchy ->
/// envelope -> simulate -> compare; every stage failure halts with its name.
pub fn run_pipeline(config: &ExperimentConfig, config_raw: &str) -> Result<Manifest> {
    let stage = |name: &str, e: Error| Error::Numeric(format!("stage {name}: {e}"));

    // check
    let ps = crate::io::load_params(&config.params_file)?;
    let bundle = run_check(&ps);
    let required: &[&str] = match config.mode {
        Mode::Short => &["C3", "MS"],
        Mode::Long => &["C3", "MS", "C3-LT"],
        Mode::Classical => &["C2*"],
    };
    for name in required {
        let rep = bundle
            .reports
            .iter()
            .find(|r| r.condition_name == *name)
            .expect("known condition");
        if !rep.satisfied {
            return Err(Error::Infeasible(format!(
                "stage check: condition {name} violated ({:?})",
                rep.violated_clauses
            )));
        }
    }
    let out_dir = &config.outputs;
    fs::create_dir_all(out_dir)?;
    write_deterministic(
        &out_dir.join("checks.json"),
        &serde_json::to_string_pretty(&bundle)?,
    )?;

    // synthesize
    let grid = Grid::new(config.grid.d, config.grid.n, config.grid.l)?;
    let kernel = synthesize_kernel(&config.kernel_spec, &grid).map_err(|e| stage("synth", e))?;
    let sp = Spectral::new(grid);
    let mut sidecar = Sidecar::for_field(&kernel.slabs[0]);
    sidecar.role = Some("kernel".into());
    sidecar.beta = Some(config.kernel_spec.beta);
    save_grid_function(&out_dir.join("kernel.bin"), &kernel.slabs[0], &sidecar)?;

    let mu = config.mu_spec.build(grid);
    let mut mu_sidecar = Sidecar::for_field(&mu);
    mu_sidecar.role = Some("initial_law".into());
    save_grid_function(&out_dir.join("mu.bin"), &mu, &mu_sidecar)?;

    // solve per epsilon (mollification ladder)
    if config.epsilons.is_empty() {
        return Err(Error::Domain("epsilon ladder must not be empty".into()));
    }
    let ev = BesovEvaluator::new(grid, ps.alpha);
    let track = short_time_track(&ps)?;
    let mut last_output = None;
    for &eps in &config.epsilons {
        let mollified = kernel.mollify(&sp, eps).map_err(|e| stage("mollify", e))?;
        let mut cfg = config.solver;
        cfg.epsilon = eps;
        let out = match config.mode {
            Mode::Short => solve_mollified_fp(
                Some(&mollified),
                &mu,
                config.horizon.t0,
                config.horizon.s,
                &cfg,
                &track,
            ),
            Mode::Long => {
                let dq = gamma_exponents(&ps)?;
                let mu_norm = ev.norm_total(
                    &mu,
                    &BesovSpec::new(dq.beta0_bar, dq.p0_bar, dq.q0_bar)?,
                );
                solve_fp_longtime(
                    Some(&mollified),
                    &mu,
                    config.horizon.t0,
                    config.horizon.s,
                    &cfg,
                    &ps,
                    mu_norm,
                    None,
                )
                .map(|(o, _)| o)
            }
            Mode::Classical => solve_fp_classical(
                Some(&mollified),
                &mu,
                config.horizon.t0,
                config.horizon.s,
                &cfg,
                &ps,
            )
            .map(|(o, _)| o),
        }
        .map_err(|e| stage("solve-fp", e))?;
        last_output = Some((eps, out));
    }
    let (eps_min, final_out) = last_output.expect("nonempty ladder");

    // cauchy table over the ladder
    if config.epsilons.len() >= 2 {
        let table = cauchy_sweep(
            &kernel,
            &mu,
            &config.epsilons,
            &ps,
            &config.solver,
            config.horizon.t0,
            config.horizon.s,
            config.mode == Mode::Long,
        )
        .map_err(|e| stage("cauchy", e))?;
        let mut csv = String::from("eps_coarse,eps_fine,weighted,l1\n");
        for (i, pair) in table.epsilons.windows(2).enumerate() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                fmt(pair[0]),
                fmt(pair[1]),
                fmt(table.weighted[i]),
                fmt(table.l1[i])
            ));
        }
        write_deterministic(&out_dir.join("cauchy.csv"), &csv)?;
    }

    // envelope (short-time regime only; calibrated on this run)
    let envelope = if config.mode == Mode::Short && check_c3(&ps).satisfied {
        let dq = gamma_exponents(&ps)?;
        let bspec = BesovSpec::new(ps.beta, ps.p, ps.q)?;
        let div = kernel.divergence(&sp)?;
        let norms = KernelNorms {
            besov: kernel.lr_besov_norm(&ev, &bspec, ps.r, config.horizon.s - config.horizon.t0),
            divergence: div.lr_besov_norm(&ev, &bspec, ps.r, config.horizon.s - config.horizon.t0),
        };
        let mu_norm = ev.norm_total(
            &mu,
            &BesovSpec::new(dq.beta0_bar, dq.p0_bar, dq.q0_bar)?,
        );
        let fit = gronwall_envelope(&final_out.path, &ps, &norms, mu_norm, &ev, None)
            .map_err(|e| stage("envelope", e))?;
        write_deterministic(
            &out_dir.join("gronwall.json"),
            &serde_json::to_string_pretty(&fit)?,
        )?;
        Some(fit.envelope)
    } else {
        None
    };

    write_deterministic(
        &out_dir.join("norms.csv"),
        &node_csv(&final_out, &ev, envelope.as_deref()),
    )?;

    // simulate + compare
    if let Some(sim) = &config.simulation {
        let mollified = kernel.mollify(&sp, eps_min)?;
        let scfg = SimConfig {
            n: sim.n,
            dt: sim.dt,
            seed: sim.seed,
            alpha: ps.alpha,
            bandwidth: None,
            snapshot_stride: 0,
        };
        let traj = simulate(
            Some(&mollified),
            &mu,
            config.horizon.t0,
            config.horizon.s,
            &scfg,
        )
        .map_err(|e| stage("simulate", e))?;
        let curve = compare_to_fp(&traj, &final_out.path, 2.0 * grid.h(), true)
            .map_err(|e| stage("compare", e))?;
        let mut csv = String::from("s,mean,var,l1_to_fp\n");
        for (i, st) in traj.stats.iter().enumerate() {
            let l1 = curve
                .iter()
                .find(|(t, _)| (t - traj.times[i]).abs() < 1e-12)
                .map_or(f64::NAN, |(_, v)| *v);
            csv.push_str(&format!(
                "{},{},{},{}\n",
                fmt(st.s),
                fmt(st.mean[0]),
                fmt(st.var[0]),
                fmt(l1)
            ));
        }
        write_deterministic(&out_dir.join("sim.csv"), &csv)?;
    }

    // manifest
    let mut hasher = Sha256::new();
    hasher.update(config_raw.as_bytes());
    let config_sha256 = format!("{:x}", hasher.finalize());
    let mut inputs = BTreeMap::new();
    inputs.insert(
        config.params_file.to_string_lossy().to_string(),
        sha256_hex(&config.params_file)?,
    );
    let mut outputs = BTreeMap::new();
    for entry in fs::read_dir(out_dir)? {
        let path = entry?.path();
        if path.is_file() && path.file_name().map_or(true, |n| n != "manifest.json") {
            outputs.insert(
                path.file_name().unwrap().to_string_lossy().to_string(),
                sha256_hex(&path)?,
            );
        }
    }
    let manifest = Manifest {
        config_sha256,
        inputs,
        outputs,
    };
    write_deterministic(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
