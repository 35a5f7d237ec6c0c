//! Large-time behaviour of strongly monotone problems: decay of coupled
//! pairs, the supermartingale property, drift bounds and invariant laws.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hspace::{HSpace, Point, TimeGrid};
use crate::monotone_ops::MonotoneOperator;
use crate::rng::{NoiseStream, RngSeed};
use crate::sde_solver::{simulate_states, SdeProblem, SdeScheme};
use crate::stochastic::Estimate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YosidaMonotoneReport {
    pub modulus: f64,
    pub theta: f64,
    pub eps: f64,
    /// Smallest sampled `(A_eps u - A_eps v, u - v) - a theta |u - v|^2`.
    pub min_value: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Samples the strong monotonicity the Yosida approximation inherits from a
/// declared modulus `a`, valid while `eps a theta <= 1 - theta`.
pub fn check_yosida_strong_monotone(
    op: &MonotoneOperator,
    space: &HSpace,
    theta: f64,
    eps: f64,
    samples: usize,
    seed: RngSeed,
) -> Result<YosidaMonotoneReport> {
    let a = op.modulus();
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::invalid("theta", "must lie in [0, 1)"));
    }
    if !(eps > 0.0) || eps * a * theta > 1.0 - theta + 1e-15 {
        return Err(Error::invalid("eps", "needs eps > 0 and eps * a * theta <= 1 - theta"));
    }
    let dim = space.dim();
    let mut noise = NoiseStream::new(seed, dim);
    let (mut u, mut v) = (vec![0.0; dim], vec![0.0; dim]);
    let (mut au, mut av) = (vec![0.0; dim], vec![0.0; dim]);
    let mut min_value = f64::INFINITY;
    for _ in 0..samples {
        noise.fill_step(&mut u);
        noise.fill_step(&mut v);
        op.yosida_into(space, eps, &u, &mut au)?;
        op.yosida_into(space, eps, &v, &mut av)?;
        let mut pairing = 0.0;
        let d_sq = space.dist_h(&u, &v).powi(2);
        for i in 0..dim {
            pairing += space.weights()[i] * (au[i] - av[i]) * (u[i] - v[i]);
        }
        min_value = min_value.min(pairing - a * theta * d_sq);
    }
    Ok(YosidaMonotoneReport {
        modulus: a,
        theta,
        eps,
        min_value,
        samples,
        pass: min_value >= -1e-10,
    })
}

/// Squared distances `|u(t) - v(t)|^2` of coupled pairs driven by the same
/// noise, laid out `[path][slot]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledEnsemble {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub sq_diff: Vec<f64>,
}

impl CoupledEnsemble {
    pub fn value(&self, path: usize, slot: usize) -> f64 {
        self.sq_diff[path * self.times.len() + slot]
    }

    pub fn mean(&self, slot: usize) -> Estimate {
        let column: Vec<f64> = (0..self.n_paths).map(|p| self.value(p, slot)).collect();
        Estimate::from_samples(&column)
    }
}

/// Nodes of `grid` closest to the requested times.
pub fn nodes_at(grid: &TimeGrid, times: &[f64]) -> Vec<usize> {
    times
        .iter()
        .map(|&t| {
            let k = grid.locate(t);
            let nodes = grid.nodes();
            if k + 1 < nodes.len() && (nodes[k + 1] - t).abs() < (t - nodes[k]).abs() {
                k + 1
            } else {
                k
            }
        })
        .collect()
}

pub fn coupled_pairs(
    problem: &SdeProblem,
    u0: &Point,
    v0: &Point,
    grid: &TimeGrid,
    nodes: &[usize],
    n_paths: usize,
    seed: RngSeed,
) -> Result<CoupledEnsemble> {
    let space = &problem.space;
    let first = simulate_states(&problem.with_u0(u0.clone())?, SdeScheme::Prox, grid, seed, n_paths, nodes)?;
    let second = simulate_states(&problem.with_u0(v0.clone())?, SdeScheme::Prox, grid, seed, n_paths, nodes)?;
    let mut sq_diff = Vec::with_capacity(n_paths * nodes.len());
    for p in 0..n_paths {
        for slot in 0..nodes.len() {
            sq_diff.push(space.dist_h(first.state(p, slot), second.state(p, slot)).powi(2));
        }
    }
    Ok(CoupledEnsemble {
        times: nodes.iter().map(|&k| grid.nodes()[k]).collect(),
        n_paths,
        sq_diff,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayOptions {
    pub theta: f64,
    pub slack: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        DecayOptions { theta: 0.9, slack: 1.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub beta0: f64,
    pub theta: f64,
    /// `2 a theta - 2L - L1`.
    pub beta: f64,
    pub slack: f64,
    pub initial_sq_diff: f64,
    pub times: Vec<f64>,
    pub mean_sq_diff: Vec<Estimate>,
    /// `slack e^{-beta0 t} |u0 - v0|^2`.
    pub bound: Vec<f64>,
    pub bound_violations: usize,
    pub theta_violations: usize,
    /// Negative slope of the least-squares fit of `log E|u - v|^2` against `t`.
    pub measured_rate: f64,
    pub pass: bool,
}

/// Mean-square distance of two solutions driven by the same noise, compared
/// with `e^{-beta0 t}` at the nodes nearest to `check_times`.
pub fn decay_experiment(
    problem: &SdeProblem,
    u0: &Point,
    v0: &Point,
    grid: &TimeGrid,
    check_times: &[f64],
    n_paths: usize,
    seed: RngSeed,
    options: DecayOptions,
) -> Result<(StabilityReport, CoupledEnsemble)> {
    let nodes = nodes_at(grid, check_times);
    let ensemble = coupled_pairs(problem, u0, v0, grid, &nodes, n_paths, seed)?;
    let c = &problem.constants;
    let beta0 = problem.beta0();
    let beta = 2.0 * problem.op.modulus() * options.theta - 2.0 * c.l - c.l1;
    let start = problem.op.project_domain(&problem.space, u0)?;
    let other = problem.op.project_domain(&problem.space, v0)?;
    let initial = problem.space.dist_h(start.as_slice(), other.as_slice()).powi(2);
    let mut means = Vec::with_capacity(nodes.len());
    let mut bound = Vec::with_capacity(nodes.len());
    let (mut violations, mut theta_violations) = (0, 0);
    for (slot, &t) in ensemble.times.iter().enumerate() {
        let est = ensemble.mean(slot);
        let b = options.slack * (-beta0 * t).exp() * initial;
        if est.mean > b {
            violations += 1;
        }
        if est.mean > options.slack * (-beta * t).exp() * initial {
            theta_violations += 1;
        }
        means.push(est);
        bound.push(b);
    }
    let fit: Vec<(f64, f64)> = ensemble
        .times
        .iter()
        .zip(&means)
        .filter(|(_, e)| e.mean > 0.0)
        .map(|(t, e)| (*t, e.mean.ln()))
        .collect();
    let measured_rate = if fit.len() >= 2 { -least_squares_slope(&fit) } else { f64::NAN };
    let report = StabilityReport {
        beta0,
        theta: options.theta,
        beta,
        slack: options.slack,
        initial_sq_diff: initial,
        times: ensemble.times.clone(),
        mean_sq_diff: means,
        bound,
        bound_violations: violations,
        theta_violations,
        measured_rate,
        pass: violations == 0 && theta_violations == 0,
    };
    Ok((report, ensemble))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub beta: f64,
    pub lags: Vec<(usize, usize)>,
    pub bins: usize,
    /// Largest `mean / stderr` of `Delta(t) - Delta(s)` over bins and lags.
    pub worst_z: f64,
    pub worst_lag: Option<(usize, usize)>,
    pub pass: bool,
}

pub const SUPERMARTINGALE_BINS: usize = 5;

/// Tests `E[Delta(t) | Delta(s)] <= Delta(s)` for `Delta(t) = e^{beta t} |u(t) - v(t)|^2`,
/// conditioning on quantile bins of `|u(s) - v(s)|`.
pub fn supermartingale_test(ensemble: &CoupledEnsemble, beta: f64, lags: &[(usize, usize)]) -> Result<SupermartingaleReport> {
    let slots = ensemble.times.len();
    let n = ensemble.n_paths;
    if lags.iter().any(|&(s, t)| s >= t || t >= slots) {
        return Err(Error::invalid("lags", "each lag needs s < t within the recorded times"));
    }
    if n < SUPERMARTINGALE_BINS * 2 {
        return Err(Error::invalid("n_paths", "too few paths for the binned test"));
    }
    let mut worst_z = f64::NEG_INFINITY;
    let mut worst_lag = None;
    let mut pass = true;
    for &(s, t) in lags {
        let (ts, tt) = (ensemble.times[s], ensemble.times[t]);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| ensemble.value(i, s).total_cmp(&ensemble.value(j, s)));
        for bin in 0..SUPERMARTINGALE_BINS {
            let chunk = &order[bin * n / SUPERMARTINGALE_BINS..(bin + 1) * n / SUPERMARTINGALE_BINS];
            let mut scale = 0.0f64;
            let diffs: Vec<f64> = chunk
                .iter()
                .map(|&p| {
                    let before = (beta * ts).exp() * ensemble.value(p, s);
                    scale = scale.max(before);
                    (beta * tt).exp() * ensemble.value(p, t) - before
                })
                .collect();
            let est = Estimate::from_samples(&diffs);
            let excess = est.mean - 3.0 * est.stderr - 1e-12 * scale;
            let z = if est.stderr > 0.0 {
                est.mean / est.stderr
            } else if est.mean > 1e-12 * scale {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            if z > worst_z {
                worst_z = z;
                worst_lag = Some((s, t));
            }
            if excess > 0.0 {
                pass = false;
            }
        }
    }
    Ok(SupermartingaleReport {
        beta,
        lags: lags.to_vec(),
        bins: SUPERMARTINGALE_BINS,
        worst_z,
        worst_lag,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftBoundReport {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    /// `|y0|^2 + |f(x0)|^2 + |B(x0)|_Q^2`.
    pub m0: f64,
    pub beta0: f64,
    /// `(beta0 + 2 + L) / beta0^2`.
    pub c0: f64,
    pub beta0_energy: f64,
    pub c0_energy: f64,
    pub times: Vec<f64>,
    /// `E|u(t) - x0|^2`.
    pub lhs: Vec<Estimate>,
    /// Largest `(mean - 3 stderr) / (C0 M0)`; at most 1 when the level bound holds.
    pub level_ratio: f64,
    /// Largest `(E|u(t) - u(s)|^2 - 3 stderr) / (C0 M0 beta0 (t - s))`.
    pub increment_ratio: f64,
    pub level_ratio_energy: f64,
    pub increment_ratio_energy: f64,
    pub pass: bool,
    pub pass_energy: bool,
}

/// Checks the level and increment bounds of solutions started from the graph
/// pair `[x0, y0]`, at up to `max_checks + 1` evenly spaced nodes.
pub fn check_drift_bound(
    problem: &SdeProblem,
    x0: &Point,
    y0: &Point,
    grid: &TimeGrid,
    n_paths: usize,
    seed: RngSeed,
    max_checks: usize,
) -> Result<DriftBoundReport> {
    let space = &problem.space;
    let dim = space.dim();
    check_dim(dim, x0.len())?;
    check_dim(dim, y0.len())?;
    let beta0 = problem.beta0();
    if !(beta0 > 0.0) {
        return Err(Error::invalid("beta0", format!("needs strong monotonicity, got {beta0}")));
    }
    check_graph_pair(problem, x0, y0)?;

    let mut fx = vec![0.0; dim];
    problem.drift.apply(x0.as_slice(), &mut fx);
    let bx = problem.diffusion.matrix_at(x0.as_slice(), problem.noise.modes());
    let m0 = space.norm_sq(y0.as_slice()) + space.norm_sq(&fx) + problem.noise.q_norm_sq(space, &bx);
    let l = problem.constants.l;
    let c0 = (beta0 + 2.0 + l) / (beta0 * beta0);
    let beta0_energy = problem.beta0_energy();
    let c0_energy = if beta0_energy > 0.0 {
        (beta0_energy + 2.0 + l) / (beta0_energy * beta0_energy)
    } else {
        f64::INFINITY
    };

    let stride = (grid.steps() / max_checks.max(1)).max(1);
    let nodes: Vec<usize> = (0..=grid.steps()).step_by(stride).collect();
    let states = simulate_states(&problem.with_u0(x0.clone())?, SdeScheme::Prox, grid, seed, n_paths, &nodes)?;
    let times: Vec<f64> = nodes.iter().map(|&k| grid.nodes()[k]).collect();
    let lhs: Vec<Estimate> = (0..nodes.len())
        .map(|slot| {
            let v: Vec<f64> = (0..n_paths)
                .map(|p| space.dist_h(states.state(p, slot), x0.as_slice()).powi(2))
                .collect();
            Estimate::from_samples(&v)
        })
        .collect();

    let ratio = |value: f64, bound: f64| {
        if value <= 0.0 {
            0.0
        } else if bound > 0.0 {
            value / bound
        } else {
            f64::INFINITY
        }
    };
    let level = |c: f64| lhs.iter().map(|e| ratio(e.mean - 3.0 * e.stderr, c * m0)).fold(0.0, f64::max);
    let mut incr_worst = (0.0f64, 0.0f64);
    let mut buf = vec![0.0; n_paths];
    for s in 0..nodes.len() {
        for t in s + 1..nodes.len() {
            for (p, b) in buf.iter_mut().enumerate() {
                *b = space.dist_h(states.state(p, t), states.state(p, s)).powi(2);
            }
            let e = Estimate::from_samples(&buf);
            let lag = times[t] - times[s];
            incr_worst.0 = incr_worst.0.max(ratio(e.mean - 3.0 * e.stderr, c0 * m0 * beta0 * lag));
            incr_worst.1 = incr_worst.1.max(ratio(e.mean - 3.0 * e.stderr, c0_energy * m0 * beta0_energy * lag));
        }
    }
    let level_ratio = level(c0);
    let level_ratio_energy = level(c0_energy);
    Ok(DriftBoundReport {
        x0: x0.as_slice().to_vec(),
        y0: y0.as_slice().to_vec(),
        m0,
        beta0,
        c0,
        beta0_energy,
        c0_energy,
        times,
        lhs,
        level_ratio,
        increment_ratio: incr_worst.0,
        level_ratio_energy,
        increment_ratio_energy: incr_worst.1,
        pass: level_ratio <= 1.0 && incr_worst.0 <= 1.0,
        pass_energy: level_ratio_energy <= 1.0 && incr_worst.1 <= 1.0,
    })
}

/// `y0 ∈ A x0` holds iff `J_eps(x0 + eps (y0 + alpha x0)) = x0`.
fn check_graph_pair(problem: &SdeProblem, x0: &Point, y0: &Point) -> Result<()> {
    let eps = 1e-3;
    let z = x0 + (y0 + x0 * problem.op.alpha()) * eps;
    let j = problem.op.resolvent(&problem.space, eps, &z)?;
    let miss = problem.space.dist_h(j.as_slice(), x0.as_slice());
    if miss > 1e-8 * (1.0 + problem.space.norm_h(z.as_slice())) {
        return Err(Error::invalid("y0", format!("[x0, y0] is not in the graph (resolvent misses by {miss:.3e})")));
    }
    Ok(())
}

/// Weighted samples in `H`, laid out `[sample][component]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub dim: usize,
    pub samples: Vec<f64>,
    pub weights: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || samples.len() != weights.len() * dim || weights.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim,
                got: samples.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("weights", "must be non-negative and sum to 1"));
        }
        let mut mean = vec![0.0; dim];
        for (x, w) in samples.chunks(dim).zip(&weights) {
            for c in 0..dim {
                mean[c] += w * x[c];
            }
        }
        let mut variance = vec![0.0; dim];
        for (x, w) in samples.chunks(dim).zip(&weights) {
            for c in 0..dim {
                variance[c] += w * (x[c] - mean[c]).powi(2);
            }
        }
        Ok(EmpiricalMeasure {
            dim,
            samples,
            weights,
            mean,
            variance,
        })
    }

    pub fn uniform(dim: usize, samples: Vec<f64>) -> Result<Self> {
        let n = samples.len() / dim.max(1);
        Self::new(dim, samples, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut samples = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            samples.extend_from_slice(self.sample(i));
        }
        Self::uniform(self.dim, samples)
    }
}

/// Energy distance `2 E|X - Y| - E|X - X'| - E|Y - Y'|` in the `H` norm.
pub fn measure_distance(space: &HSpace, m1: &EmpiricalMeasure, m2: &EmpiricalMeasure) -> Result<f64> {
    check_dim(space.dim(), m1.dim)?;
    check_dim(space.dim(), m2.dim)?;
    if m1.dim == 1 {
        // In one dimension the energy distance is 2 ∫ (F - G)^2.
        let mut points: Vec<(f64, f64)> = m1
            .samples
            .iter()
            .zip(&m1.weights)
            .map(|(x, w)| (*x, *w))
            .chain(m2.samples.iter().zip(&m2.weights).map(|(x, w)| (*x, -*w)))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cdf_gap = 0.0;
        let mut acc = 0.0;
        for pair in points.windows(2) {
            cdf_gap += pair[0].1;
            acc += cdf_gap * cdf_gap * (pair[1].0 - pair[0].0);
        }
        return Ok(2.0 * acc * space.weights()[0].sqrt());
    }
    let cross = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| {
        let mut s = 0.0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                s += a.weights[i] * b.weights[j] * space.dist_h(a.sample(i), b.sample(j));
            }
        }
        s
    };
    Ok((2.0 * cross(m1, m2) - cross(m1, m1) - cross(m2, m2)).max(0.0))
}

/// Kolmogorov-Smirnov distance of the first component against `cdf`.
pub fn ks_statistic(measure: &EmpiricalMeasure, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut points: Vec<(f64, f64)> = (0..measure.len())
        .map(|i| (measure.sample(i)[0], measure.weights[i]))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut below = 0.0f64;
    let mut worst = 0.0f64;
    for (x, w) in points {
        let f = cdf(x);
        worst = worst.max((f - below).abs());
        below += w;
        worst = worst.max((below - f).abs());
    }
    worst
}

/// Distribution function of a centred Gaussian with standard deviation
/// `scale` folded onto `[lo, inf)`.
pub fn half_gaussian_cdf(x: f64, lo: f64, scale: f64) -> f64 {
    if x <= lo {
        0.0
    } else {
        libm::erf((x - lo) / (scale * std::f64::consts::SQRT_2))
    }
}

pub fn gaussian_cdf(x: f64, mean: f64, scale: f64) -> f64 {
    0.5 * libm::erfc(-(x - mean) / (scale * std::f64::consts::SQRT_2))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantOptions {
    /// Time at which the law is first recorded.
    pub burn_in: f64,
    /// Time of the reported law; the gap to the law at `burn_in` measures stationarity.
    pub horizon: f64,
    pub step: f64,
    pub n_paths: usize,
    pub seed: RngSeed,
    /// Starting points; the first one provides the reported law.
    pub initials: Vec<Point>,
    pub stationarity_tol: f64,
    pub floor_factor: f64,
}

impl InvariantOptions {
    /// `burn_in = 10 / beta0` and `horizon = 2 burn_in`.
    pub fn for_problem(problem: &SdeProblem, step: f64, n_paths: usize, seed: RngSeed) -> Result<Self> {
        let beta0 = problem.beta0();
        if !(beta0 > 0.0) {
            return Err(Error::invalid("beta0", "needs strong monotonicity"));
        }
        Ok(InvariantOptions {
            burn_in: 10.0 / beta0,
            horizon: 20.0 / beta0,
            step,
            n_paths,
            seed,
            initials: vec![problem.u0.clone()],
            stationarity_tol: 0.02,
            floor_factor: 3.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub beta0: f64,
    pub burn_in: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Energy distance between the laws at `burn_in` and `horizon`.
    pub stationarity_gap: f64,
    /// Energy distance of each further initial condition's law to the first.
    pub cross_distances: Vec<f64>,
    /// Expected energy distance of two independent ensembles of this size,
    /// estimated from random half splits of the reference ensemble.
    pub noise_floor: f64,
    pub pass: bool,
}

const FLOOR_SPLITS: usize = 8;

pub fn estimate_invariant_measure(problem: &SdeProblem, options: &InvariantOptions) -> Result<(EmpiricalMeasure, InvariantReport)> {
    let beta0 = problem.beta0();
    if !(options.burn_in > 0.0 && options.horizon > options.burn_in) {
        return Err(Error::invalid("horizon", "needs 0 < burn_in < horizon"));
    }
    if options.initials.is_empty() || options.n_paths < 4 {
        return Err(Error::invalid("initials", "needs an initial point and at least 4 paths"));
    }
    let steps = (options.horizon / options.step).round() as usize;
    let grid = TimeGrid::uniform(options.horizon, steps.max(1))?;
    let nodes = nodes_at(&grid, &[options.burn_in, options.horizon]);
    let dim = problem.space.dim();
    let mut laws = Vec::with_capacity(options.initials.len());
    let mut early = None;
    for (i, x) in options.initials.iter().enumerate() {
        let seed = options.seed.child(i as u64);
        let states = simulate_states(&problem.with_u0(x.clone())?, SdeScheme::Prox, &grid, seed, options.n_paths, &nodes)?;
        let at = |slot: usize| -> Vec<f64> {
            (0..options.n_paths).flat_map(|p| states.state(p, slot).to_vec()).collect()
        };
        if i == 0 {
            early = Some(EmpiricalMeasure::uniform(dim, at(0))?);
        }
        laws.push(EmpiricalMeasure::uniform(dim, at(1))?);
    }
    let space = &problem.space;
    let reference = &laws[0];
    let stationarity_gap = measure_distance(space, early.as_ref().expect("first initial"), reference)?;
    let cross_distances = laws[1..]
        .iter()
        .map(|m| measure_distance(space, m, reference))
        .collect::<Result<Vec<_>>>()?;
    let noise_floor = split_half_floor(space, reference, options.seed)?;
    let pass = stationarity_gap <= options.stationarity_tol
        && cross_distances.iter().all(|d| *d <= options.floor_factor * noise_floor);
    let report = InvariantReport {
        beta0,
        burn_in: options.burn_in,
        horizon: grid.horizon(),
        n_paths: options.n_paths,
        mean: reference.mean.clone(),
        variance: reference.variance.clone(),
        stationarity_gap,
        cross_distances,
        noise_floor,
        pass,
    };
    Ok((laws.swap_remove(0), report))
}

/// Half-sample energy distances scale with `1/(n/2) + 1/(n/2)`, twice the
/// full-size value, hence the factor one half.
fn split_half_floor(space: &HSpace, measure: &EmpiricalMeasure, seed: RngSeed) -> Result<f64> {
    let n = measure.len();
    let mut stream = NoiseStream::new(seed.child(u64::MAX), 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for _ in 0..FLOOR_SPLITS {
        for i in (1..n).rev() {
            let j = ((stream.next_uniform() * (i + 1) as f64) as usize).min(i);
            order.swap(i, j);
        }
        let a = measure.subset(&order[..n / 2])?;
        let b = measure.subset(&order[n / 2..2 * (n / 2)])?;
        total += 0.5 * measure_distance(space, &a, &b)?;
    }
    Ok(total / FLOOR_SPLITS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotone_ops::{Graph1D, OperatorKind};
    use crate::sde_solver::{Diffusion, Drift};
    use crate::stochastic::QWienerSpec;

    fn linear_problem(a: f64, diffusion: Diffusion) -> SdeProblem {
        let space = HSpace::euclidean(1);
        let op = MonotoneOperator::new(OperatorKind::LinearSpd { matrix: vec![vec![a]] }, &space)
            .unwrap()
            .with_modulus(a)
            .unwrap();
        let noise = QWienerSpec::coordinate(&space, vec![1.0]).unwrap();
        SdeProblem::new(space, op, Point::zeros(1), Drift::Zero, diffusion, noise).unwrap()
    }

    #[test]
    fn yosida_of_scaled_identity_sits_on_the_boundary() {
        let p = linear_problem(1.0, Diffusion::Zero);
        let r = check_yosida_strong_monotone(&p.op, &p.space, 0.5, 1.0, 100, RngSeed::new(1)).unwrap();
        assert!(r.pass && r.min_value.abs() < 1e-12);
        assert!(check_yosida_strong_monotone(&p.op, &p.space, 0.5, 1.5, 10, RngSeed::new(1)).is_err());
    }

    #[test]
    fn identical_starts_do_not_separate() {
        let p = linear_problem(1.0, Diffusion::Multiplicative { sigma: vec![0.5] });
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let x = Point::from_element(1, 1.0);
        let (r, _) = decay_experiment(&p, &x, &x, &grid, &[0.5, 1.0], 50, RngSeed::new(2), DecayOptions::default()).unwrap();
        assert!(r.mean_sq_diff.iter().all(|e| e.mean == 0.0));
        assert!(r.pass);
    }

    #[test]
    fn deterministic_decay_rate() {
        let p = linear_problem(1.0, Diffusion::Zero);
        let grid = TimeGrid::uniform(2.0, 2000).unwrap();
        let (r, _) = decay_experiment(
            &p,
            &Point::from_element(1, 1.0),
            &Point::zeros(1),
            &grid,
            &[0.5, 1.0, 1.5, 2.0],
            2,
            RngSeed::new(3),
            DecayOptions::default(),
        )
        .unwrap();
        assert!((r.measured_rate - 2.0).abs() < 0.04, "{}", r.measured_rate);
        assert!(r.pass);
    }

    #[test]
    fn growing_process_is_not_a_supermartingale() {
        let times = vec![0.0, 1.0, 2.0];
        let n = 20;
        let sq_diff = (0..n).flat_map(|_| times.iter().map(|t: &f64| (0.5 * t).exp())).collect();
        let e = CoupledEnsemble { times, n_paths: n, sq_diff };
        assert!(!supermartingale_test(&e, 0.0, &[(0, 1), (1, 2)]).unwrap().pass);
        assert!(supermartingale_test(&e, -0.5, &[(0, 2)]).unwrap().pass);
    }

    #[test]
    fn equilibrium_has_zero_drift_constant() {
        let p = linear_problem(1.0, Diffusion::Multiplicative { sigma: vec![0.5] });
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let r = check_drift_bound(&p, &Point::zeros(1), &Point::zeros(1), &grid, 10, RngSeed::new(4), 10).unwrap();
        assert_eq!(r.m0, 0.0);
        assert!(r.lhs.iter().all(|e| e.mean == 0.0));
        assert!(r.pass);
        let off_graph = check_drift_bound(&p, &Point::zeros(1), &Point::from_element(1, 1.0), &grid, 10, RngSeed::new(4), 10);
        assert!(off_graph.is_err());
    }

    #[test]
    fn energy_distance_of_point_masses() {
        let s = HSpace::euclidean(1);
        let a = EmpiricalMeasure::uniform(1, vec![0.0]).unwrap();
        let b = EmpiricalMeasure::uniform(1, vec![1.0]).unwrap();
        assert!((measure_distance(&s, &a, &b).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(measure_distance(&s, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn one_dimensional_fast_path_matches_pairwise_sum() {
        let s = HSpace::euclidean(1);
        let a = EmpiricalMeasure::new(1, vec![0.3, -1.0, 2.0], vec![0.2, 0.5, 0.3]).unwrap();
        let b = EmpiricalMeasure::uniform(1, vec![0.0, 1.5]).unwrap();
        let e = |x: &EmpiricalMeasure, y: &EmpiricalMeasure| {
            let mut t = 0.0;
            for i in 0..x.len() {
                for j in 0..y.len() {
                    t += x.weights[i] * y.weights[j] * (x.samples[i] - y.samples[j]).abs();
                }
            }
            t
        };
        let direct = 2.0 * e(&a, &b) - e(&a, &a) - e(&b, &b);
        assert!((measure_distance(&s, &a, &b).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn ks_against_own_quantiles() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let m = EmpiricalMeasure::uniform(1, samples).unwrap();
        let d = ks_statistic(&m, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert!((half_gaussian_cdf(1.0, 0.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-12);
    }

    #[test]
    fn reflected_drift_bound_graph_pair() {
        let space = HSpace::euclidean(1);
        let op = MonotoneOperator::new(
            OperatorKind::Composite {
                a0: crate::monotone_ops::LipschitzMap::Affine { slope: 1.0, offset: 0.0 },
                phi: crate::monotone_ops::ProxTerm::Graph(Graph1D::Interval { lo: 0.0, hi: f64::INFINITY }),
            },
            &space,
        )
        .unwrap()
        .with_modulus(1.0)
        .unwrap();
        let noise = QWienerSpec::coordinate(&space, vec![1.0]).unwrap();
        let p = SdeProblem::new(
            space,
            op,
            Point::zeros(1),
            Drift::Zero,
            Diffusion::Additive { columns: vec![vec![0.5]] },
            noise,
        )
        .unwrap();
        let grid = TimeGrid::uniform(2.0, 200).unwrap();
        let r = check_drift_bound(&p, &Point::zeros(1), &Point::from_element(1, -3.0), &grid, 400, RngSeed::new(5), 20).unwrap();
        assert!((r.m0 - 9.25).abs() < 1e-12);
        assert!(r.pass && r.pass_energy);
    }
}
