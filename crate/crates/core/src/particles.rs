//! Mollified McKean-Vlasov interacting-particle system: Euler steps with
//! alpha-stable increments, KDE mean-field drift, Fokker-Planck
//! cross-validation, Young-integral reconstruction and pathwise probes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fokker_planck::DensityPath;
use crate::grid::{Grid, GridFunction};
use crate::kernels::Kernel;
use crate::spectral::Spectral;
use crate::stable::{fit_log_slope, sample_stable_increment};

/// Snapshot of the interacting system at one time.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub n: usize,
    pub d: usize,
    /// Unwrapped positions, particle-major (`[i*d + c]`).
    pub positions: Vec<f64>,
    pub time: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NodeStats {
    pub s: f64,
    pub mean: [f64; 2],
    pub var: [f64; 2],
}

/// Simulation output: per-node statistics plus selected position snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub alpha: f64,
    pub t0: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub stats: Vec<NodeStats>,
    /// (node index, unwrapped positions) pairs.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub wrap_events: u64,
    pub bandwidth: f64,
}

impl Trajectory {
    pub fn snapshot_at(&self, node: usize) -> Option<&[f64]> {
        self.snapshots
            .iter()
            .find(|(i, _)| *i == node)
            .map(|(_, p)| p.as_slice())
    }

    pub fn ensemble_at(&self, node: usize) -> Option<ParticleEnsemble> {
        self.snapshot_at(node).map(|p| ParticleEnsemble {
            n: p.len() / self.grid.d,
            d: self.grid.d,
            positions: p.to_vec(),
            time: self.times[node],
            alpha: self.alpha,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
    pub alpha: f64,
    /// KDE bandwidth; defaults to twice the grid spacing.
    pub bandwidth: Option<f64>,
    /// Store positions every k-th node (0 = terminal node only).
    pub snapshot_stride: usize,
}

fn sorted_deposit(grid: &Grid, deposits: &mut Vec<(u32, f64)>) -> Vec<f64> {
    // accumulate per bin in a canonical order so that the histogram is
    // exactly invariant under particle relabeling
    deposits.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hist = vec![0.0f64; grid.len()];
    for (bin, w) in deposits.iter() {
        hist[*bin as usize] += w;
    }
    hist
}

/// Gaussian KDE on the torus: cloud-in-cell binning plus spectral smoothing;
/// returned density has mass exactly one.
pub fn empirical_density(
    positions: &[f64],
    d: usize,
    grid: &Grid,
    bandwidth: f64,
) -> Result<GridFunction> {
    if d != grid.d {
        return Err(Error::Domain("dimension mismatch in KDE".into()));
    }
    let n = positions.len() / d;
    if n == 0 {
        return Err(Error::Domain("empty ensemble".into()));
    }
    let h = grid.h();
    let weight = 1.0 / (n as f64 * grid.cell_volume());
    let mut deposits: Vec<(u32, f64)> = Vec::with_capacity(n * (1 << d));
    for i in 0..n {
        match d {
            1 => {
                let x = grid.wrap(positions[i]);
                let t = (x + grid.l) / h;
                let j0 = (t.floor() as usize) % grid.n;
                let frac = t - t.floor();
                deposits.push((j0 as u32, weight * (1.0 - frac)));
                deposits.push((((j0 + 1) % grid.n) as u32, weight * frac));
            }
            _ => {
                let x = grid.wrap(positions[2 * i]);
                let y = grid.wrap(positions[2 * i + 1]);
                let tx = (x + grid.l) / h;
                let ty = (y + grid.l) / h;
                let ix0 = (tx.floor() as usize) % grid.n;
                let iy0 = (ty.floor() as usize) % grid.n;
                let fx = tx - tx.floor();
                let fy = ty - ty.floor();
                let ix1 = (ix0 + 1) % grid.n;
                let iy1 = (iy0 + 1) % grid.n;
                deposits.push(((iy0 * grid.n + ix0) as u32, weight * (1.0 - fx) * (1.0 - fy)));
                deposits.push(((iy0 * grid.n + ix1) as u32, weight * fx * (1.0 - fy)));
                deposits.push(((iy1 * grid.n + ix0) as u32, weight * (1.0 - fx) * fy));
                deposits.push(((iy1 * grid.n + ix1) as u32, weight * fx * fy));
            }
        }
    }
    let hist = sorted_deposit(grid, &mut deposits);
    let raw = GridFunction::from_values(*grid, 1, hist)?;
    let sp = Spectral::new(*grid);
    let mut smooth = sp.apply_multiplier(&raw, |xi| {
        let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
        num_complex::Complex64::new((-0.5 * bandwidth * bandwidth * xi2).exp(), 0.0)
    });
    let m = smooth.mass();
    smooth.scale(1.0 / m);
    Ok(smooth)
}

/// Inverse-CDF sample (d = 1) from a grid density.
fn sample_inverse_cdf(mu: &GridFunction, u: f64) -> f64 {
    let grid = mu.grid;
    let h = grid.h();
    let total: f64 = mu.values.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (j, v) in mu.values.iter().enumerate() {
        let next = acc + v;
        if next >= target {
            let frac = if *v > 0.0 { (target - acc) / v } else { 0.5 };
            return grid.coord(j) + frac * h;
        }
        acc = next;
    }
    grid.coord(grid.n - 1)
}

/// Rejection sample (d = 2) using a uniform proposal on the box.
fn sample_rejection(mu: &GridFunction, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let grid = mu.grid;
    let peak = mu.values.iter().fold(0.0f64, |m, v| m.max(*v));
    let side = Uniform::new(-grid.l, grid.l);
    loop {
        let x = side.sample(rng);
        let y = side.sample(rng);
        let u: f64 = Uniform::new(0.0, peak).sample(rng);
        if u <= mu.interp(0, &[x, y]).max(0.0) {
            return [x, y];
        }
    }
}

struct StepState {
    positions: Vec<f64>,
    streams: Vec<ChaCha8Rng>,
    wrap_events: u64,
}

fn init_state(mu: &GridFunction, cfg: &SimConfig, stream_ids: &[u64]) -> StepState {
    let d = mu.grid.d;
    let mut streams: Vec<ChaCha8Rng> = stream_ids
        .iter()
        .map(|&sid| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(sid);
            rng
        })
        .collect();
    let mut positions = vec![0.0f64; cfg.n * d];
    for (i, rng) in streams.iter_mut().enumerate() {
        match d {
            1 => {
                let u: f64 = Uniform::new(0.0f64, 1.0).sample(rng);
                positions[i] = sample_inverse_cdf(mu, u);
            }
            _ => {
                let xy = sample_rejection(mu, rng);
                positions[2 * i] = xy[0];
                positions[2 * i + 1] = xy[1];
            }
        }
    }
    StepState {
        positions,
        streams,
        wrap_events: 0,
    }
}

fn drift_field(
    sp: &Spectral,
    kernel: &Kernel,
    frac: f64,
    positions: &[f64],
    grid: &Grid,
    bandwidth: f64,
) -> Result<GridFunction> {
    let kde = empirical_density(positions, grid.d, grid, bandwidth)?;
    sp.convolve(kernel.field_at(frac), &kde)
}

fn advance(
    state: &mut StepState,
    drift: Option<&GridFunction>,
    grid: &Grid,
    dt: f64,
    alpha: f64,
) -> Result<()> {
    let d = grid.d;
    let escape = 6.0 * grid.l; // three box widths
    let (wraps, unstable) = state
        .positions
        .par_chunks_mut(d)
        .zip(state.streams.par_iter_mut())
        .map(|(pos, rng)| {
            let mut step = [0.0f64; 2];
            if let Some(field) = drift {
                let point = [pos[0], if d == 2 { pos[1] } else { 0.0 }];
                for (c, s) in step.iter_mut().enumerate().take(d) {
                    *s = field.interp(c, &point) * dt;
                }
                if step.iter().any(|s| s.abs() > escape) {
                    return (0u64, true);
                }
            }
            let noise = sample_stable_increment(alpha, dt, d, rng).expect("validated");
            let mut wraps = 0u64;
            for c in 0..d {
                let before = ((pos[c] + grid.l) / (2.0 * grid.l)).floor();
                pos[c] += step[c] + noise[c];
                let after = ((pos[c] + grid.l) / (2.0 * grid.l)).floor();
                if after != before {
                    wraps += 1;
                }
            }
            (wraps, false)
        })
        .reduce(|| (0u64, false), |a, b| (a.0 + b.0, a.1 || b.1));
    if unstable {
        return Err(Error::Numeric(
            "particle drift exceeded three box widths in one step".into(),
        ));
    }
    state.wrap_events += wraps;
    Ok(())
}

fn stats_of(positions: &[f64], d: usize, s: f64) -> NodeStats {
    let n = positions.len() / d;
    let mut mean = [0.0f64; 2];
    let mut var = [0.0f64; 2];
    for c in 0..d {
        let m = positions.iter().skip(c).step_by(d).sum::<f64>() / n as f64;
        let v = positions
            .iter()
            .skip(c)
            .step_by(d)
            .map(|x| (x - m) * (x - m))
            .sum::<f64>()
            / n as f64;
        mean[c] = m;
        var[c] = v;
    }
    NodeStats { s, mean, var }
}

/// Euler simulation of the mollified system with per-particle RNG streams.
pub fn simulate(
    kernel: Option<&Kernel>,
    mu: &GridFunction,
    t0: f64,
    s_end: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let ids: Vec<u64> = (0..cfg.n as u64).collect();
    simulate_with_stream_ids(kernel, mu, t0, s_end, cfg, &ids)
}

/// Simulation with explicit stream assignment (index-relabel probe).
pub fn simulate_with_stream_ids(
    kernel: Option<&Kernel>,
    mu: &GridFunction,
    t0: f64,
    s_end: f64,
    cfg: &SimConfig,
    stream_ids: &[u64],
) -> Result<Trajectory> {
    if cfg.n < 100 {
        return Err(Error::Domain("need at least 100 particles".into()));
    }
    if stream_ids.len() != cfg.n {
        return Err(Error::Domain("one stream id per particle required".into()));
    }
    if !(cfg.dt > 0.0) {
        return Err(Error::Domain("dt must be positive".into()));
    }
    let grid = mu.grid;
    let d = grid.d;
    let span = s_end - t0;
    let steps = (span / cfg.dt).round();
    if steps < 1.0 || (steps * cfg.dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::Domain(format!(
            "horizon length {span} must be a positive multiple of dt = {}",
            cfg.dt
        )));
    }
    let steps = steps as usize;
    let bandwidth = cfg.bandwidth.unwrap_or(2.0 * grid.h());
    let sp = Spectral::new(grid);
    let mut state = init_state(mu, cfg, stream_ids);

    let mut times = Vec::with_capacity(steps + 1);
    let mut stats = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let snap = |k: usize| cfg.snapshot_stride != 0 && k % cfg.snapshot_stride == 0;

    times.push(t0);
    stats.push(stats_of(&state.positions, d, t0));
    if snap(0) {
        snapshots.push((0, state.positions.clone()));
    }

    for k in 0..steps {
        let s = t0 + k as f64 * cfg.dt;
        let drift = match kernel {
            Some(kern) => Some(drift_field(
                &sp,
                kern,
                (s - t0) / (s_end - t0),
                &state.positions,
                &grid,
                bandwidth,
            )?),
            None => None,
        };
        advance(&mut state, drift.as_ref(), &grid, cfg.dt, cfg.alpha)?;
        let s_next = t0 + (k + 1) as f64 * cfg.dt;
        times.push(s_next);
        stats.push(stats_of(&state.positions, d, s_next));
        if snap(k + 1) || k + 1 == steps {
            snapshots.push((k + 1, state.positions.clone()));
        }
    }

    Ok(Trajectory {
        grid,
        alpha: cfg.alpha,
        t0,
        dt: cfg.dt,
        times,
        stats,
        snapshots,
        wrap_events: state.wrap_events,
        bandwidth,
    })
}

/// Per-node `L^1` distance between the particle KDE and the Fokker-Planck
/// frames at matching times; `matched` convolves the frame with the same
/// KDE kernel so the shared smoothing bias cancels.
pub fn compare_to_fp(
    traj: &Trajectory,
    path: &DensityPath,
    bandwidth: f64,
    matched: bool,
) -> Result<Vec<(f64, f64)>> {
    if traj.grid != path.grid {
        return Err(Error::Domain("trajectory and path grids differ".into()));
    }
    let sp = Spectral::new(path.grid);
    let mut out = Vec::new();
    for (node, positions) in &traj.snapshots {
        let s = traj.times[*node];
        let Some(path_idx) = path.times.iter().position(|t| (t - s).abs() < 1e-9) else {
            continue;
        };
        let kde = empirical_density(positions, traj.grid.d, &traj.grid, bandwidth)?;
        let mut frame = path.frame_clipped(path_idx);
        if matched {
            frame = sp.apply_multiplier(&frame, |xi| {
                let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
                num_complex::Complex64::new((-0.5 * bandwidth * bandwidth * xi2).exp(), 0.0)
            });
        }
        out.push((s, kde.l1_distance(&frame)));
    }
    Ok(out)
}

/// Stochastic Young-integral reconstruction along a partition.
#[derive(Debug, Clone)]
pub struct YoungReconstruction {
    pub partition: Vec<f64>,
    /// Mean magnitude of the pseudo-increment per interval.
    pub pseudo_increments: Vec<f64>,
    /// Per-particle accumulated Young sum (particle-major).
    pub riemann_sum: Vec<f64>,
    /// Per-particle direct drift integral (particle-major).
    pub reference: Vec<f64>,
    /// Mean over particles of the Euclidean gap between the two.
    pub gap: f64,
}

/// Builds `A(t_i, t_(i+1)) = int (B_rho(v) * p^alpha_(v - t_i))(X_(t_i)) dv`
/// by trapezoid over the path nodes inside each partition interval and sums
/// against the reference Riemann sum of the direct drift.
pub fn young_reconstruction(
    kernel: &Kernel,
    path: &DensityPath,
    traj: &Trajectory,
    partition: &[f64],
) -> Result<YoungReconstruction> {
    if partition.len() < 2 {
        return Err(Error::Domain("partition needs at least two nodes".into()));
    }
    let grid = path.grid;
    let d = grid.d;
    let sp = Spectral::new(grid);
    let alpha = path.gamma_meta.alpha;
    let span = path.times.last().unwrap() - path.t0;

    // partition nodes must sit on the trajectory/path step grid
    let node_of = |t: f64| -> Result<usize> {
        path.times
            .iter()
            .position(|s| (s - t).abs() < 1e-9)
            .ok_or_else(|| {
                Error::Refused(format!(
                    "partition node {t} does not align with the step grid"
                ))
            })
    };
    let snapshots: Vec<(usize, &[f64])> = partition
        .iter()
        .take(partition.len() - 1)
        .map(|t| {
            let node = node_of(*t)?;
            let snap = traj.snapshot_at(node).ok_or_else(|| {
                Error::Refused(format!("no position snapshot stored at t = {t}"))
            })?;
            Ok((node, snap))
        })
        .collect::<Result<_>>()?;

    let n = snapshots[0].1.len() / d;
    let mut young = vec![0.0f64; n * d];
    let mut reference = vec![0.0f64; n * d];
    let mut pseudo = Vec::with_capacity(partition.len() - 1);

    let drift_at = |idx: usize| -> Result<GridFunction> {
        let frac = (path.times[idx] - path.t0) / span;
        sp.convolve(kernel.field_at(frac), &path.frames[idx])
    };

    for (w, (node_i, positions)) in partition.windows(2).zip(&snapshots) {
        let (ti, ti1) = (w[0], w[1]);
        let node_end = node_of(ti1)?;
        // A-field: trapezoid over path nodes v in [t_i, t_(i+1)] of the
        // drift smoothed by the semigroup over v - t_i
        let mut a_field = GridFunction::zeros(grid, d);
        for idx in *node_i..=node_end {
            let v = path.times[idx];
            let tau = v - ti;
            let drift = drift_at(idx)?;
            let smoothed = sp.apply_multiplier(&drift, |xi| {
                let a = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt().powf(alpha);
                num_complex::Complex64::new((-tau * a).exp(), 0.0)
            });
            let wq = if idx == *node_i || idx == node_end {
                0.5 * traj.dt
            } else {
                traj.dt
            };
            let mut t = smoothed;
            t.scale(wq);
            a_field.add_assign(&t);
        }
        let ref_field = drift_at(*node_i)?;
        let delta = ti1 - ti;

        let mut mean_abs = 0.0f64;
        for i in 0..n {
            let point = [
                positions[i * d],
                if d == 2 { positions[i * d + 1] } else { 0.0 },
            ];
            let mut inc2 = 0.0;
            for c in 0..d {
                let a_val = a_field.interp(c, &point);
                young[i * d + c] += a_val;
                reference[i * d + c] += ref_field.interp(c, &point) * delta;
                inc2 += a_val * a_val;
            }
            mean_abs += inc2.sqrt();
        }
        pseudo.push(mean_abs / n as f64);
    }

    let mut gap = 0.0f64;
    for i in 0..n {
        let mut diff2 = 0.0;
        for c in 0..d {
            let dd = young[i * d + c] - reference[i * d + c];
            diff2 += dd * dd;
        }
        gap += diff2.sqrt();
    }
    gap /= n as f64;

    Ok(YoungReconstruction {
        partition: partition.to_vec(),
        pseudo_increments: pseudo,
        riemann_sum: young,
        reference,
        gap,
    })
}

/// Shared-noise pathwise probe (d = 1): the same particle system driven by
/// the kernel mollified at `eps` and at `eps/2`, identical noise draws;
/// returns the mean absolute path gap per node.
pub fn pathwise_probe_d1(
    kernel: &Kernel,
    mu: &GridFunction,
    t0: f64,
    s_end: f64,
    cfg: &SimConfig,
    eps: f64,
) -> Result<Vec<f64>> {
    let grid = mu.grid;
    if grid.d != 1 {
        return Err(Error::Domain("pathwise probe is d = 1 only".into()));
    }
    let sp = Spectral::new(grid);
    let coarse = kernel.mollify(&sp, eps)?;
    let fine = kernel.mollify(&sp, eps / 2.0)?;
    let steps = ((s_end - t0) / cfg.dt).round() as usize;
    let bandwidth = cfg.bandwidth.unwrap_or(2.0 * grid.h());

    let ids: Vec<u64> = (0..cfg.n as u64).collect();
    let mut state = init_state(mu, cfg, &ids);
    let mut pos_a = state.positions.clone();
    let mut pos_b = state.positions.clone();
    let mut gaps = vec![0.0f64];

    for k in 0..steps {
        let s = t0 + k as f64 * cfg.dt;
        let frac = (s - t0) / (s_end - t0);
        let da = drift_field(&sp, &coarse, frac, &pos_a, &grid, bandwidth)?;
        let db = drift_field(&sp, &fine, frac, &pos_b, &grid, bandwidth)?;
        // lockstep update: one noise draw per particle feeds both copies
        pos_a
            .par_iter_mut()
            .zip(pos_b.par_iter_mut())
            .zip(state.streams.par_iter_mut())
            .for_each(|((xa, xb), rng)| {
                let noise = sample_stable_increment(cfg.alpha, cfg.dt, 1, rng).expect("validated");
                *xa += da.interp(0, &[*xa]) * cfg.dt + noise[0];
                *xb += db.interp(0, &[*xb]) * cfg.dt + noise[0];
            });
        let gap = pos_a
            .iter()
            .zip(&pos_b)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / cfg.n as f64;
        gaps.push(gap);
    }
    state.positions = pos_a;
    Ok(gaps)
}

/// Fits the log-log slope of `E|X_(v+lag) - X_v|^lambda` over a lag set.
pub fn tightness_moments(
    traj: &Trajectory,
    lambda: f64,
    lag_nodes: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let d = traj.grid.d;
    if lag_nodes.len() < 3 {
        return Err(Error::Domain("need at least 3 lags for the fit".into()));
    }
    let mut lags = Vec::new();
    let mut moments = Vec::new();
    for &lag in lag_nodes {
        if lag == 0 {
            continue;
        }
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for (ia, pa) in &traj.snapshots {
            let ib = ia + lag;
            if let Some(pb) = traj.snapshot_at(ib) {
                for i in 0..pa.len() / d {
                    let mut diff2 = 0.0;
                    for c in 0..d {
                        let dd = pb[i * d + c] - pa[i * d + c];
                        diff2 += dd * dd;
                    }
                    acc += diff2.sqrt().powf(lambda);
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::Domain(format!(
                "no snapshot pairs available at lag {lag}"
            )));
        }
        lags.push(lag as f64 * traj.dt);
        moments.push(acc / count as f64);
    }
    let slope = fit_log_slope(&lags, &moments)?;
    Ok((slope, moments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fokker_planck::gaussian_density;
    use crate::kernels::{synthesize_kernel, KernelFamily, KernelSpec};
    use crate::stable::stable_density;

    fn cfg(n: usize, dt: f64, alpha: f64, seed: u64) -> SimConfig {
        SimConfig {
            n,
            dt,
            seed,
            alpha,
            bandwidth: None,
            snapshot_stride: 0,
        }
    }

    #[test]
    fn brownian_variance_matches() {
        let grid = Grid::new(1, 256, 40.0).unwrap();
        let mu = gaussian_density(grid, 0.05);
        let c = cfg(100_000, 1.0 / 16.0, 2.0, 1);
        let traj = simulate(None, &mu, 0.0, 0.5, &c).unwrap();
        for st in traj.stats.iter().skip(4) {
            let expect = 2.0 * st.s + 0.05f64.powi(2);
            assert!(
                (st.var[0] - expect).abs() < 0.03 * expect,
                "var {} vs {expect} at s = {}",
                st.var[0],
                st.s
            );
        }
    }

    #[test]
    fn stable_law_matches_grid_density() {
        // b = 0, alpha = 1.5: empirical law vs the periodized stable density
        let grid = Grid::new(1, 131072, 1900.0).unwrap();
        let mu = gaussian_density(grid, 0.02);
        let c = cfg(100_000, 0.02, 1.5, 3);
        let traj = simulate(None, &mu, 0.0, 0.2, &c).unwrap();
        let terminal = traj.snapshots.last().unwrap();
        // narrow KDE kernel keeps the smoothing bias below the noise floor
        let kde = empirical_density(&terminal.1, 1, &grid, grid.h()).unwrap();
        let law = stable_density(1.5, 0.2, &grid).unwrap();
        let dist = kde.l1_distance(&law);
        assert!(dist <= 0.05, "L1 distance {dist}");
    }

    #[test]
    fn determinism_and_exchangeability() {
        let grid = Grid::new(1, 128, 10.0).unwrap();
        let mu = gaussian_density(grid, 0.5);
        let kernel = synthesize_kernel(
            &KernelSpec {
                family: KernelFamily::GradientPotential,
                beta: 0.0,
                p: f64::INFINITY,
                q: f64::INFINITY,
                seed: 9,
                slabs: 1,
                amplitude: 0.3,
            },
            &grid,
        )
        .unwrap();
        let mut c = cfg(200, 1.0 / 32.0, 2.0, 7);
        c.snapshot_stride = 1;
        let a = simulate(Some(&kernel), &mu, 0.0, 0.25, &c).unwrap();
        let b = simulate(Some(&kernel), &mu, 0.0, 0.25, &c).unwrap();
        assert_eq!(a.snapshots.last().unwrap().1, b.snapshots.last().unwrap().1);

        // index relabel: particle with stream pi(i) follows the same path
        let ids: Vec<u64> = (0..200u64).collect();
        let mut perm = ids.clone();
        perm.reverse();
        let p = simulate_with_stream_ids(Some(&kernel), &mu, 0.0, 0.25, &c, &perm).unwrap();
        let pa = &a.snapshots.last().unwrap().1;
        let pp = &p.snapshots.last().unwrap().1;
        for i in 0..200 {
            assert_eq!(pa[i], pp[199 - i], "relabeled particle {i} diverged");
        }
    }

    #[test]
    fn kde_of_single_particle_is_periodized_bump() {
        let grid = Grid::new(1, 256, 5.0).unwrap();
        // spec requires >= 100 particles for simulate; KDE itself works on any set
        let positions = vec![0.7];
        let bw = 0.3;
        let kde = empirical_density(&positions, 1, &grid, bw).unwrap();
        assert!((kde.mass() - 1.0).abs() < 1e-12);
        let peak_idx = kde
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((grid.coord(peak_idx) - 0.7).abs() <= 2.0 * grid.h());
        // close to the analytic bump up to CIC discretization
        let expect = GridFunction::sample_scalar(grid, |x, _| {
            (-(x - 0.7) * (x - 0.7) / (2.0 * bw * bw)).exp()
                / (2.0 * std::f64::consts::PI * bw * bw).sqrt()
        });
        assert!(kde.sub(&expect).max_abs() < 0.05 * expect.max_abs());
    }

    #[test]
    fn kde_small_bandwidth_matches_histogram() {
        // bandwidth below the cell size: smoothing multiplier ~ 1 and the
        // KDE degenerates to the (normalized) cloud-in-cell histogram
        let grid = Grid::new(1, 128, 4.0).unwrap();
        let positions = vec![-1.3, -0.2, 0.05, 0.9, 2.4];
        let kde = empirical_density(&positions, 1, &grid, 1e-6).unwrap();
        let h = grid.h();
        let weight = 1.0 / (positions.len() as f64 * grid.cell_volume());
        let mut hist = vec![0.0f64; grid.len()];
        for &x in &positions {
            let t = (x + grid.l) / h;
            let j0 = (t.floor() as usize) % grid.n;
            let frac = t - t.floor();
            hist[j0] += weight * (1.0 - frac);
            hist[(j0 + 1) % grid.n] += weight * frac;
        }
        for (a, b) in kde.values.iter().zip(&hist) {
            assert!((a - b).abs() < 1e-6 * weight.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn fp_distance_decreases_in_particle_count() {
        let grid = Grid::new(1, 256, 10.0).unwrap();
        let mu = gaussian_density(grid, 0.5);
        let fp_cfg = crate::fokker_planck::SolverConfig {
            dt: 1.0 / 32.0,
            ..Default::default()
        };
        let track = crate::fokker_planck::TrackSpec {
            alpha: 2.0,
            weight: crate::fokker_planck::TimeWeight::Power(0.0),
            spec: crate::besov::BesovSpec::new(0.0, 1.0, 1.0).unwrap(),
        };
        let out =
            crate::fokker_planck::solve_mollified_fp(None, &mu, 0.0, 0.25, &fp_cfg, &track)
                .unwrap();
        let mut terminals = Vec::new();
        for (n, seed) in [(1000usize, 31u64), (10_000, 32), (100_000, 33)] {
            let c = cfg(n, 1.0 / 32.0, 2.0, seed);
            let traj = simulate(None, &mu, 0.0, 0.25, &c).unwrap();
            let curve = compare_to_fp(&traj, &out.path, 2.0 * grid.h(), true).unwrap();
            terminals.push(curve.last().unwrap().1);

            // matched smoothing cancels the shared bias; visible once the
            // sampling noise drops below the bandwidth bias
            if n == 100_000 {
                let raw = compare_to_fp(&traj, &out.path, 2.0 * grid.h(), false).unwrap();
                assert!(
                    curve.last().unwrap().1 <= raw.last().unwrap().1,
                    "matched smoothing should not increase the distance"
                );
            }
        }
        assert!(
            terminals[0] > terminals[1] && terminals[1] > terminals[2],
            "terminal distances not decreasing in N: {terminals:?}"
        );
    }

    #[test]
    fn kde_bias_is_second_order_in_bandwidth() {
        // KDE of a known Gaussian law: E[KDE] = law * eta_bw, so comparing
        // against the smoothed law leaves only sampling noise; comparing
        // against the raw law exposes the O(bw^2) bias
        let grid = Grid::new(1, 512, 12.0).unwrap();
        let sigma = 1.0f64;
        let law = gaussian_density(grid, sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let positions: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                z * sigma
            })
            .collect();
        let mut biases = Vec::new();
        let bws = [0.8, 0.4, 0.2];
        for bw in bws {
            let kde = empirical_density(&positions, 1, &grid, bw).unwrap();
            biases.push(kde.l1_distance(&law));
        }
        let slope = fit_log_slope(&bws.to_vec(), &biases).unwrap();
        assert!(slope > 1.5, "bias slope {slope} (expect ~2)");
    }

    #[test]
    fn young_reconstruction_zero_kernel_is_exact_zero() {
        let grid = Grid::new(1, 256, 10.0).unwrap();
        let mu = gaussian_density(grid, 0.5);
        let track = crate::fokker_planck::TrackSpec {
            alpha: 2.0,
            weight: crate::fokker_planck::TimeWeight::Power(0.0),
            spec: crate::besov::BesovSpec::new(0.0, 1.0, 1.0).unwrap(),
        };
        let fp_cfg = crate::fokker_planck::SolverConfig {
            dt: 1.0 / 32.0,
            ..Default::default()
        };
        let out = crate::fokker_planck::solve_mollified_fp(None, &mu, 0.0, 0.25, &fp_cfg, &track)
            .unwrap();
        let mut c = cfg(128, 1.0 / 32.0, 2.0, 5);
        c.snapshot_stride = 1;
        let traj = simulate(None, &mu, 0.0, 0.25, &c).unwrap();
        let kernel = {
            let mut k = synthesize_kernel(
                &KernelSpec {
                    family: KernelFamily::GradientPotential,
                    beta: 0.0,
                    p: f64::INFINITY,
                    q: f64::INFINITY,
                    seed: 0,
                    slabs: 1,
                    amplitude: 1.0,
                },
                &grid,
            )
            .unwrap();
            k.slabs[0].values.fill(0.0);
            k
        };
        let partition: Vec<f64> = (0..=4).map(|i| i as f64 * 0.0625).collect();
        let rec = young_reconstruction(&kernel, &out.path, &traj, &partition).unwrap();
        assert_eq!(rec.gap, 0.0);
        assert!(rec.riemann_sum.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tightness_slopes() {
        // pure Brownian, lambda = 4: E|dX|^4 = 3 (2 lag)^2, slope 2
        let grid = Grid::new(1, 128, 60.0).unwrap();
        let mu = gaussian_density(grid, 0.02);
        let mut c = cfg(20_000, 1.0 / 64.0, 2.0, 13);
        c.snapshot_stride = 1;
        let traj = simulate(None, &mu, 0.0, 1.0, &c).unwrap();
        let (slope, _) = tightness_moments(&traj, 4.0, &[1, 2, 4, 8, 16]).unwrap();
        assert!((slope - 2.0).abs() < 0.2, "brownian slope {slope}");

        // pure stable alpha = 1.5, lambda = 1: slope 1/alpha
        let grid = Grid::new(1, 128, 2000.0).unwrap();
        let mu = gaussian_density(grid, 1.0);
        let mut c = cfg(20_000, 1.0 / 64.0, 1.5, 17);
        c.snapshot_stride = 1;
        let traj = simulate(None, &mu, 0.0, 1.0, &c).unwrap();
        let (slope, _) = tightness_moments(&traj, 1.0, &[1, 2, 4, 8, 16]).unwrap();
        assert!(
            (slope - 1.0 / 1.5).abs() < 0.15 / 1.5,
            "stable slope {slope} vs {}",
            1.0 / 1.5
        );

        // zero lag refused implicitly: all-zero lag set has no fit
        assert!(tightness_moments(&traj, 1.0, &[0, 0, 0]).is_err());
    }

    #[test]
    fn two_dimensional_rejection_init_and_variance() {
        let grid = Grid::new(2, 128, 20.0).unwrap();
        let mu = gaussian_density(grid, 1.0);
        let c = cfg(20_000, 1.0 / 16.0, 2.0, 23);
        let traj = simulate(None, &mu, 0.0, 0.25, &c).unwrap();
        let last = traj.stats.last().unwrap();
        for comp in 0..2 {
            let expect = 2.0 * 0.25 + 1.0;
            assert!(
                (last.var[comp] - expect).abs() < 0.03 * expect,
                "component {comp}: var {} vs {expect}",
                last.var[comp]
            );
        }
    }

    #[test]
    fn pathwise_probe_identical_mollification_is_zero() {
        let grid = Grid::new(1, 128, 10.0).unwrap();
        let mu = gaussian_density(grid, 0.5);
        let kernel = synthesize_kernel(
            &KernelSpec {
                family: KernelFamily::GradientPotential,
                beta: 0.0,
                p: f64::INFINITY,
                q: f64::INFINITY,
                seed: 21,
                slabs: 1,
                amplitude: 0.2,
            },
            &grid,
        )
        .unwrap();
        let c = cfg(200, 1.0 / 32.0, 2.0, 19);
        // smooth kernel: eps-ladder gaps small and decreasing
        let g1 = pathwise_probe_d1(&kernel, &mu, 0.0, 0.25, &c, 0.2).unwrap();
        let g2 = pathwise_probe_d1(&kernel, &mu, 0.0, 0.25, &c, 0.1).unwrap();
        let t1 = *g1.last().unwrap();
        let t2 = *g2.last().unwrap();
        assert!(t2 < t1, "terminal gaps {t1} -> {t2} not decreasing");
        assert!(t1 < 1e-3, "smooth-kernel gap {t1} too large");
    }
}
