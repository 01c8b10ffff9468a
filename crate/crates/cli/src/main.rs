//! `besov-mkv`: reproducible experiments on stable-driven McKean-Vlasov
//! dynamics with Besov-rough convolution kernels.
//!
//! The binary only orchestrates library calls; all numerics live in the
//! core crate. Exit codes: 0 pass, 1 infeasible or assertion failure,
//! 2 numeric error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use besov_mkv_core::besov::{BesovEvaluator, BesovSpec};
use besov_mkv_core::error::Error;
use besov_mkv_core::fokker_planck::{
    gronwall_envelope, short_time_track, solve_fp_classical, solve_fp_longtime,
    solve_mollified_fp, KernelNorms, SolveOutput, SolverConfig,
};
use besov_mkv_core::grid::{Grid, GridFunction};
use besov_mkv_core::io::{load_grid_function, load_params, save_grid_function, Sidecar};
use besov_mkv_core::kernels::{synthesize_kernel, Kernel, KernelFamily, KernelSpec};
use besov_mkv_core::params::gamma_exponents;
use besov_mkv_core::particles::{compare_to_fp, simulate, young_reconstruction, SimConfig};
use besov_mkv_core::spectral::Spectral;
use besov_mkv_core::stable::{grad_stable_density, stable_density};

#[derive(Parser)]
#[command(name = "besov-mkv", version, about)]
struct Cli {
    /// Seed override for seeded subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GridArg {
    /// Grid as N,L (points per axis, box half-width).
    #[arg(long)]
    grid: String,
    /// Spatial dimension.
    #[arg(long, default_value_t = 1)]
    d: usize,
}

impl GridArg {
    fn build(&self) -> Result<Grid, Error> {
        let parts: Vec<&str> = self.grid.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Format("expected --grid N,L".into()));
        }
        let n: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad grid size {:?}", parts[0])))?;
        let l: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad box width {:?}", parts[1])))?;
        Grid::new(self.d, n, l)
    }
}

fn parse_ext(s: &str) -> Result<f64, String> {
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        Ok(f64::INFINITY)
    } else {
        s.parse::<f64>().map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the parameter conditions of a JSON parameter file.
    Check {
        #[arg(long)]
        params: PathBuf,
        /// Comma-separated subset, e.g. C3,MS,WS,C3LT,C2star.
        #[arg(long)]
        conditions: Option<String>,
    },
    /// Dump the stable transition density (or its gradient) on a grid.
    Kernel {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        grid: GridArg,
        #[arg(long)]
        out: PathBuf,
        /// Dump the spatial gradient instead of the density.
        #[arg(long)]
        grad: bool,
    },
    /// Thermic Besov norm of a grid dump.
    Norm {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
        #[arg(long, value_parser = parse_ext)]
        ell: f64,
        #[arg(long, value_parser = parse_ext)]
        m: f64,
        /// Reference stability index of the thermic semigroup.
        #[arg(long, default_value_t = 2.0)]
        alpha_ref: f64,
    },
    /// Synthesize an interaction kernel from a spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        grid: GridArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the mollified Fokker-Planck equation.
    SolveFp {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        dt: f64,
        #[arg(long = "S", alias = "s")]
        s: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        longtime: bool,
        #[arg(long)]
        classical: bool,
        #[arg(long, default_value_t = 1e-8)]
        picard_tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the interacting-particle system.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long = "N", alias = "n", default_value_t = 100_000)]
        n: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long = "S", alias = "s")]
        s: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// Fokker-Planck output directory for the L1 comparison column.
        #[arg(long)]
        fp: Option<PathBuf>,
        /// Also dump terminal particle positions (raw f64 plus sidecar).
        #[arg(long)]
        snapshots: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Young-integral reconstruction against a Fokker-Planck path.
    Young {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        dt: f64,
        #[arg(long = "S", alias = "s")]
        s: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Comma-separated interval counts, e.g. 4,8,16,32.
        #[arg(long, default_value = "4,8,16,32")]
        partitions: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the acceptance suite.
    Acceptance {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        list: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn kernel_from_dump(path: &PathBuf) -> Result<(Kernel, Sidecar), Error> {
    let (field, sidecar) = load_grid_function(path)?;
    let spec = KernelSpec {
        family: KernelFamily::RandomFourier,
        beta: sidecar.beta.unwrap_or(-1.5),
        p: f64::INFINITY,
        q: f64::INFINITY,
        seed: 0,
        slabs: 1,
        amplitude: 1.0,
    };
    Ok((
        Kernel {
            spec,
            slabs: vec![field],
        },
        sidecar,
    ))
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

fn write_solve_outputs(
    out_dir: &PathBuf,
    out: &SolveOutput,
    ev: &BesovEvaluator,
    envelope: Option<&[f64]>,
) -> Result<(), Error> {
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from("s,mass,besov_norm,weighted_norm,envelope,residual\n");
    let norms = out.path.node_norms(ev);
    for (i, t) in out.path.times.iter().enumerate() {
        let w = out.path.gamma_meta.weight.eval(t - out.path.t0);
        let env = envelope.map_or(f64::NAN, |e| e[i]);
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt(*t),
            fmt(out.path.frames[i].mass()),
            fmt(norms[i]),
            fmt(w * norms[i]),
            fmt(env),
            fmt(out.residual_curve[i])
        ));
    }
    fs::write(out_dir.join("norms.csv"), csv)?;

    // dense frame dump for downstream comparisons
    let grid = out.path.grid;
    let mut bytes = Vec::with_capacity(out.path.frames.len() * grid.len() * 8);
    for f in &out.path.frames {
        for v in &f.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(out_dir.join("frames.bin"), bytes)?;
    let meta = serde_json::json!({
        "d": grid.d,
        "N": grid.n,
        "L": grid.l,
        "t0": out.path.t0,
        "times": out.path.times,
    });
    fs::write(
        out_dir.join("frames.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

fn load_frames(dir: &PathBuf) -> Result<besov_mkv_core::fokker_planck::DensityPath, Error> {
    #[derive(serde::Deserialize)]
    struct Meta {
        d: usize,
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "L")]
        l: f64,
        t0: f64,
        times: Vec<f64>,
    }
    let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("frames.json"))?)?;
    let grid = Grid::new(meta.d, meta.n, meta.l)?;
    let bytes = fs::read(dir.join("frames.bin"))?;
    let expect = meta.times.len() * grid.len() * 8;
    if bytes.len() != expect {
        return Err(Error::Format(format!(
            "frames.bin has {} bytes, expected {expect}",
            bytes.len()
        )));
    }
    let mut frames = Vec::with_capacity(meta.times.len());
    for chunk in bytes.chunks_exact(grid.len() * 8) {
        let values: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        frames.push(GridFunction::from_values(grid, 1, values)?);
    }
    Ok(besov_mkv_core::fokker_planck::DensityPath {
        grid,
        t0: meta.t0,
        times: meta.times,
        frames,
        gamma_meta: besov_mkv_core::fokker_planck::TrackSpec {
            alpha: 2.0,
            weight: besov_mkv_core::fokker_planck::TimeWeight::Power(0.0),
            spec: BesovSpec::new(0.0, 1.0, 1.0)?,
        },
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Check { params, conditions } => {
            let ps = load_params(&params)?;
            let bundle = besov_mkv_core::pipeline::run_check(&ps);
            match conditions {
                Some(filter) => {
                    let wanted: Vec<String> = filter
                        .split(',')
                        .map(|s| normalize_condition(s.trim()))
                        .collect();
                    let reports: Vec<_> = bundle
                        .reports
                        .iter()
                        .filter(|r| wanted.contains(&r.condition_name))
                        .collect();
                    println!("{}", serde_json::to_string_pretty(&reports)?);
                    if reports.iter().any(|r| !r.satisfied) {
                        return Err(Error::Infeasible("one or more conditions violated".into()));
                    }
                }
                None => {
                    println!("{}", serde_json::to_string_pretty(&bundle)?);
                    if bundle.reports.iter().take(2).any(|r| !r.satisfied) {
                        return Err(Error::Infeasible(
                            "short-time conditions C3/MS violated".into(),
                        ));
                    }
                }
            }
            Ok(())
        }
        Command::Kernel {
            alpha,
            t,
            grid,
            out,
            grad,
        } => {
            let g = grid.build()?;
            let field = if grad {
                grad_stable_density(alpha, t, &g)?
            } else {
                stable_density(alpha, t, &g)?
            };
            let mut sidecar = Sidecar::for_field(&field);
            sidecar.time = Some(t);
            sidecar.role = Some(if grad {
                "stable_density_gradient".into()
            } else {
                "stable_density".into()
            });
            save_grid_function(&out, &field, &sidecar)?;
            println!("wrote {} ({} values)", out.display(), field.values.len());
            Ok(())
        }
        Command::Norm {
            input,
            gamma,
            ell,
            m,
            alpha_ref,
        } => {
            let (field, _) = load_grid_function(&input)?;
            let ev = BesovEvaluator::new(field.grid, alpha_ref);
            let spec = BesovSpec::new(gamma, ell, m)?;
            let result = ev.norm(&field, &spec);
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
        Command::Synth { spec, grid, out } => {
            let kspec: KernelSpec = serde_json::from_str(&fs::read_to_string(&spec)?)?;
            let kspec = KernelSpec {
                seed: cli.seed.unwrap_or(kspec.seed),
                ..kspec
            };
            let g = grid.build()?;
            let kernel = synthesize_kernel(&kspec, &g)?;
            let mut sidecar = Sidecar::for_field(&kernel.slabs[0]);
            sidecar.role = Some("kernel".into());
            sidecar.beta = Some(kspec.beta);
            save_grid_function(&out, &kernel.slabs[0], &sidecar)?;
            println!(
                "wrote {} ({} slab(s), beta = {})",
                out.display(),
                kernel.slabs.len(),
                kspec.beta
            );
            Ok(())
        }
        Command::SolveFp {
            params,
            kernel,
            mu,
            dt,
            s,
            eps,
            t0,
            longtime,
            classical,
            picard_tol,
            out,
        } => {
            let ps = load_params(&params)?;
            let (kernel, _) = kernel_from_dump(&kernel)?;
            let (mu, _) = load_grid_function(&mu)?;
            let sp = Spectral::new(mu.grid);
            let mollified = kernel.mollify(&sp, eps)?;
            let cfg = SolverConfig {
                dt,
                picard_tol,
                epsilon: eps,
                ..Default::default()
            };
            let ev = BesovEvaluator::new(mu.grid, ps.alpha);
            let (solve, envelope) = if longtime {
                let dq = gamma_exponents(&ps)?;
                let mu_norm = ev.norm_total(
                    &mu,
                    &BesovSpec::new(dq.beta0_bar, dq.p0_bar, dq.q0_bar)?,
                );
                let (o, _) =
                    solve_fp_longtime(Some(&mollified), &mu, t0, s, &cfg, &ps, mu_norm, None)?;
                (o, None)
            } else if classical {
                let (o, _) = solve_fp_classical(Some(&mollified), &mu, t0, s, &cfg, &ps)?;
                (o, None)
            } else {
                let track = short_time_track(&ps)?;
                let o = solve_mollified_fp(Some(&mollified), &mu, t0, s, &cfg, &track)?;
                // calibrated envelope for the report
                let dq = gamma_exponents(&ps)?;
                let bspec = BesovSpec::new(ps.beta, ps.p, ps.q)?;
                let div = kernel.divergence(&sp)?;
                let norms = KernelNorms {
                    besov: kernel.lr_besov_norm(&ev, &bspec, ps.r, s - t0),
                    divergence: div.lr_besov_norm(&ev, &bspec, ps.r, s - t0),
                };
                let mu_norm = ev.norm_total(
                    &mu,
                    &BesovSpec::new(dq.beta0_bar, dq.p0_bar, dq.q0_bar)?,
                );
                let env = gronwall_envelope(&o.path, &ps, &norms, mu_norm, &ev, None)
                    .map(|f| {
                        if !f.violations.is_empty() {
                            eprintln!(
                                "note: weighted norm exceeds the calibrated lower envelope \
                                 branch at {} node(s)",
                                f.violations.len()
                            );
                        }
                        f.envelope
                    })
                    .ok();
                (o, env)
            };
            write_solve_outputs(&out, &solve, &ev, envelope.as_deref())?;
            println!(
                "solved {} nodes in {} Picard iterations, residual {:.3e}",
                solve.path.times.len(),
                solve.iterations,
                solve.residual
            );
            Ok(())
        }
        Command::Simulate {
            params,
            kernel,
            mu,
            n,
            dt,
            s,
            eps,
            t0,
            fp,
            snapshots,
            out,
        } => {
            let ps = load_params(&params)?;
            let (kernel, _) = kernel_from_dump(&kernel)?;
            let (mu, _) = load_grid_function(&mu)?;
            let sp = Spectral::new(mu.grid);
            let mollified = kernel.mollify(&sp, eps)?;
            let cfg = SimConfig {
                n,
                dt,
                seed: cli.seed.unwrap_or(7),
                alpha: ps.alpha,
                bandwidth: None,
                snapshot_stride: 0,
            };
            let traj = simulate(Some(&mollified), &mu, t0, s, &cfg)?;
            let curve = match fp {
                Some(dir) => {
                    let path = load_frames(&dir)?;
                    compare_to_fp(&traj, &path, 2.0 * mu.grid.h(), true)?
                }
                None => Vec::new(),
            };
            fs::create_dir_all(&out)?;
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
            fs::write(out.join("stats.csv"), csv)?;
            if snapshots {
                if let Some((node, positions)) = traj.snapshots.last() {
                    let mut bytes = Vec::with_capacity(positions.len() * 8);
                    for v in positions {
                        bytes.extend_from_slice(&v.to_le_bytes());
                    }
                    fs::write(out.join("positions.bin"), bytes)?;
                    let meta = serde_json::json!({
                        "n": n,
                        "d": mu.grid.d,
                        "time": traj.times[*node],
                        "layout": "particle-major little-endian f64",
                    });
                    fs::write(
                        out.join("positions.bin.json"),
                        serde_json::to_string_pretty(&meta)?,
                    )?;
                }
            }
            println!(
                "simulated {} particles over {} steps ({} wrap events)",
                n,
                traj.times.len() - 1,
                traj.wrap_events
            );
            Ok(())
        }
        Command::Young {
            params,
            kernel,
            mu,
            dt,
            s,
            eps,
            n,
            partitions,
            out,
        } => {
            let ps = load_params(&params)?;
            let (kernel, _) = kernel_from_dump(&kernel)?;
            let (mu, _) = load_grid_function(&mu)?;
            let sp = Spectral::new(mu.grid);
            let mollified = kernel.mollify(&sp, eps)?;
            let cfg = SolverConfig {
                dt,
                epsilon: eps,
                ..Default::default()
            };
            let track = short_time_track(&ps)?;
            let solve = solve_mollified_fp(Some(&mollified), &mu, 0.0, s, &cfg, &track)?;
            let scfg = SimConfig {
                n,
                dt,
                seed: cli.seed.unwrap_or(7),
                alpha: ps.alpha,
                bandwidth: None,
                snapshot_stride: 1,
            };
            let traj = simulate(Some(&mollified), &mu, 0.0, s, &scfg)?;
            let counts: Vec<usize> = partitions
                .split(',')
                .map(|c| c.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Format(e.to_string()))?;
            let mut csv = String::from("intervals,gap\n");
            for count in counts {
                let partition: Vec<f64> =
                    (0..=count).map(|i| s * i as f64 / count as f64).collect();
                let rec = young_reconstruction(&mollified, &solve.path, &traj, &partition)?;
                csv.push_str(&format!("{},{}\n", count, fmt(rec.gap)));
            }
            fs::create_dir_all(&out)?;
            fs::write(out.join("young.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::Pipeline { config } => {
            let raw = fs::read_to_string(&config)?;
            let cfg: besov_mkv_core::pipeline::ExperimentConfig = serde_json::from_str(&raw)?;
            let manifest = besov_mkv_core::pipeline::run_pipeline(&cfg, &raw)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(())
        }
        Command::Acceptance { suite, list, out } => {
            if list {
                for (name, ids) in besov_mkv_core::acceptance::suites() {
                    println!("{name}: criteria {ids:?}");
                }
                return Ok(());
            }
            let results = besov_mkv_core::acceptance::run_suite(&suite)?;
            for r in &results {
                println!(
                    "[{}] criterion {:02} ({}) in {:.2}s: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.id,
                    r.name,
                    r.runtime_s,
                    r.details
                );
            }
            if let Some(path) = out {
                fs::write(path, serde_json::to_string_pretty(&results)?)?;
            }
            if results.iter().any(|r| !r.passed) {
                return Err(Error::Infeasible("acceptance criteria failed".into()));
            }
            Ok(())
        }
    }
}

fn normalize_condition(name: &str) -> String {
    match name.to_ascii_uppercase().as_str() {
        "C3" => "C3".into(),
        "MS" => "MS".into(),
        "WS" => "WS".into(),
        "C3LT" | "C3-LT" => "C3-LT".into(),
        "C2STAR" | "C2*" => "C2*".into(),
        "C2STAR_STRONG" | "C2S*" | "C2SSTAR" => "C2s*".into(),
        other => other.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // build the global pool once, before any parallel work
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Infeasible(_) | Error::Refused(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
