//! Gradient ascent on the flux over the free site energies `eps_2..eps_N`
//! (`eps_1` stays pinned at zero), with optimistic gradient ascent or AdaMax,
//! and multi-start runs seeded from a lattice over `[-1, 1]^(N-1)`.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ChainSpec;
use crate::error::{domain, Error, Result};
use crate::gradient::{FluxObjective, GradientMethod};
use crate::liouvillian::EnvironmentModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Oga,
    AdaMax,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaMaxVariant {
    /// `v = max(|g + eps|, beta2 v)`, step `h m / (v (1 - beta1^k))`.
    #[default]
    Shifted,
    /// `v = max(beta2 v, |g| + eps)`, step `h m / ((1 - beta1^k) v)`.
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaMaxParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_div: f64,
    pub variant: AdaMaxVariant,
}

impl Default for AdaMaxParams {
    fn default() -> Self {
        AdaMaxParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon_div: 1e-8,
            variant: AdaMaxVariant::Shifted,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    #[serde(default)]
    pub adamax: AdaMaxParams,
    #[serde(default = "default_stop_grad_tol")]
    pub stop_grad_tol: f64,
    pub max_steps: u64,
    /// Runs whose iterate leaves `[-bounds, bounds]^(N-1)` stop as out of bounds.
    #[serde(default = "default_bounds")]
    pub bounds: f64,
    /// Keep every `k`-th iterate (and the last); `None` keeps no trajectory.
    #[serde(default)]
    pub trajectory_every: Option<u64>,
    #[serde(default)]
    pub gradient: GradientMethod,
}

fn default_stop_grad_tol() -> f64 {
    1e-6
}

fn default_bounds() -> f64 {
    10.0
}

impl OptimizerConfig {
    /// Per-environment settings from the reference study: AdaMax `h = 0.1`
    /// (coherent), OGA `h = 0.5` (dephasing), and for the thermal bath OGA
    /// `h = 0.05` at three sites or AdaMax `h = 0.05` on longer chains.
    pub fn defaults_for(model: &EnvironmentModel, n_sites: usize) -> Self {
        let (algorithm, learning_rate, max_steps) = match model {
            EnvironmentModel::Coherent => (Algorithm::AdaMax, 0.1, 100_000),
            EnvironmentModel::LocalDephasing { .. } => (Algorithm::Oga, 0.5, 100_000),
            EnvironmentModel::Thermal { .. } if n_sites <= 3 => (Algorithm::Oga, 0.05, 500_000),
            EnvironmentModel::Thermal { .. } => (Algorithm::AdaMax, 0.05, 500_000),
        };
        OptimizerConfig {
            algorithm,
            learning_rate,
            adamax: AdaMaxParams::default(),
            stop_grad_tol: default_stop_grad_tol(),
            max_steps,
            bounds: default_bounds(),
            trajectory_every: None,
            gradient: GradientMethod::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("stop_grad_tol", self.stop_grad_tol)?;
        positive("bounds", self.bounds)?;
        positive("adamax.epsilon_div", self.adamax.epsilon_div)?;
        for (name, b) in [("adamax.beta1", self.adamax.beta1), ("adamax.beta2", self.adamax.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if self.trajectory_every == Some(0) {
            return Err(Error::Config("trajectory_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// `eps + 2 h g - h g_prev`.
pub fn oga_step(eps: &[f64], grad: &[f64], grad_prev: &[f64], h: f64) -> Vec<f64> {
    assert_eq!(eps.len(), grad.len());
    assert_eq!(eps.len(), grad_prev.len());
    eps.iter()
        .zip(grad)
        .zip(grad_prev)
        .map(|((e, g), gp)| e + 2.0 * h * g - h * gp)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaMaxState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates taken so far.
    pub k: u64,
}

impl AdaMaxState {
    pub fn new(dim: usize) -> Self {
        AdaMaxState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            k: 0,
        }
    }
}

/// One AdaMax update; returns the new iterate and advances `state`.
pub fn adamax_step(state: &mut AdaMaxState, eps: &[f64], grad: &[f64], h: f64, params: &AdaMaxParams) -> Vec<f64> {
    assert_eq!(eps.len(), grad.len());
    state.k += 1;
    let bias = 1.0 - params.beta1.powf(state.k as f64);
    let mut next = Vec::with_capacity(eps.len());
    for i in 0..eps.len() {
        let g = grad[i];
        state.m[i] = params.beta1 * state.m[i] + (1.0 - params.beta1) * g;
        state.v[i] = match params.variant {
            AdaMaxVariant::Shifted => (g + params.epsilon_div).abs().max(params.beta2 * state.v[i]),
            AdaMaxVariant::Standard => (params.beta2 * state.v[i]).max(g.abs() + params.epsilon_div),
        };
        let denom = state.v[i] * bias;
        let delta = if denom > 0.0 { h * state.m[i] / denom } else { 0.0 };
        next.push(eps[i] + delta);
    }
    next
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxSteps,
    OutOfBounds,
    Failed { reason: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxSteps => "max-steps",
            RunStatus::OutOfBounds => "out-of-bounds",
            RunStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRun {
    /// Free energies `eps_2..eps_N` at the start.
    pub initial: Vec<f64>,
    pub initial_flux: f64,
    pub trajectory: Option<Vec<Vec<f64>>>,
    /// Last iterate at which flux and gradient were evaluated.
    pub final_energies: Vec<f64>,
    pub final_flux: f64,
    pub final_grad_norm: f64,
    /// Updates applied.
    pub steps: u64,
    pub status: RunStatus,
}

impl OptimizationRun {
    /// Full energy profile with the pinned `eps_1 = 0` prepended.
    pub fn profile(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.final_energies.iter().copied()).collect()
    }
}

/// Runs gradient ascent from `spec.energies` (which must have `eps_1 = 0`).
pub fn run_optimization(spec: &ChainSpec, model: &EnvironmentModel, config: &OptimizerConfig) -> Result<OptimizationRun> {
    config.validate()?;
    if spec.energies[0] != 0.0 {
        return Err(domain(format!("first site energy is the reference and must be 0, got {}", spec.energies[0])));
    }
    if spec.n_sites < 2 {
        return Err(domain("nothing to optimize on a single site"));
    }
    let objective = FluxObjective::with_method(spec, *model, config.gradient)?;
    Ok(optimize_from(&objective, &spec.energies[1..], config))
}

/// Ascent loop on a prepared objective; solver failures end the run as
/// [`RunStatus::Failed`] instead of propagating.
pub fn optimize_from(objective: &FluxObjective, initial: &[f64], config: &OptimizerConfig) -> OptimizationRun {
    let dim = initial.len();
    let mut full = Vec::with_capacity(dim + 1);
    full.push(0.0);
    full.extend_from_slice(initial);

    let mut run = OptimizationRun {
        initial: initial.to_vec(),
        initial_flux: f64::NAN,
        trajectory: config.trajectory_every.map(|_| Vec::new()),
        final_energies: initial.to_vec(),
        final_flux: f64::NAN,
        final_grad_norm: f64::NAN,
        steps: 0,
        status: RunStatus::MaxSteps,
    };
    let mut grad_prev = vec![0.0; dim];
    let mut adamax = AdaMaxState::new(dim);

    let mut step = 0u64;
    loop {
        let eval = match objective.flux_and_gradient(&full) {
            Ok(e) => e,
            Err(e) => {
                run.status = RunStatus::Failed { reason: e.to_string() };
                break;
            }
        };
        if step == 0 {
            run.initial_flux = eval.flux;
        }
        run.final_energies.copy_from_slice(&full[1..]);
        run.final_flux = eval.flux;
        run.final_grad_norm = eval.norm();
        run.steps = step;
        if let (Some(every), Some(traj)) = (config.trajectory_every, run.trajectory.as_mut()) {
            if step.is_multiple_of(every) {
                traj.push(full[1..].to_vec());
            }
        }

        if !eval.flux.is_finite() || eval.grad().iter().any(|g| !g.is_finite()) {
            run.status = RunStatus::Failed {
                reason: "non-finite flux or gradient".into(),
            };
            break;
        }
        if run.final_grad_norm < config.stop_grad_tol {
            run.status = RunStatus::Converged;
            break;
        }
        if step >= config.max_steps {
            run.status = RunStatus::MaxSteps;
            break;
        }

        let grad = eval.grad();
        let next = match config.algorithm {
            Algorithm::Oga => oga_step(&full[1..], grad, &grad_prev, config.learning_rate),
            Algorithm::AdaMax => adamax_step(&mut adamax, &full[1..], grad, config.learning_rate, &config.adamax),
        };
        grad_prev.copy_from_slice(grad);
        if next.iter().any(|e| !(e.abs() <= config.bounds)) {
            run.status = RunStatus::OutOfBounds;
            break;
        }
        full[1..].copy_from_slice(&next);
        step += 1;
    }

    if let (Some(every), Some(traj)) = (config.trajectory_every, run.trajectory.as_mut()) {
        if !run.steps.is_multiple_of(every) {
            traj.push(run.final_energies.clone());
        }
    }
    run
}

/// Uniform sampler over the lattice `-1 + 2 i / (P - 1)`, `i = 0..P`, in each
/// free coordinate. Samples within one draw are distinct lattice points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypergridSampler {
    pub lower: f64,
    pub upper: f64,
    pub points_per_dim: usize,
    pub n_trials: usize,
    pub seed: u64,
}

impl HypergridSampler {
    /// 40 points per axis for three-site chains, 4 for longer ones.
    pub fn for_chain(n_sites: usize, n_trials: usize, seed: u64) -> Self {
        HypergridSampler {
            lower: -1.0,
            upper: 1.0,
            points_per_dim: if n_sites <= 3 { 40 } else { 4 },
            n_trials,
            seed,
        }
    }

    pub fn lattice_value(&self, i: usize) -> f64 {
        if self.points_per_dim == 1 {
            return 0.5 * (self.lower + self.upper);
        }
        self.lower + (self.upper - self.lower) * i as f64 / (self.points_per_dim - 1) as f64
    }

    /// `n_trials` distinct lattice points in `dim` dimensions.
    pub fn sample(&self, dim: usize) -> Result<Vec<Vec<f64>>> {
        if self.points_per_dim == 0 {
            return Err(Error::Config("points_per_dim must be at least 1".into()));
        }
        if !(self.lower < self.upper) {
            return Err(Error::Config("hypergrid range is empty".into()));
        }
        let p = self.points_per_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let total = u32::try_from(dim).ok().and_then(|d| p.checked_pow(d));
        let indices: Vec<Vec<usize>> = match total {
            Some(total) => {
                if self.n_trials > total {
                    return Err(Error::Config(format!(
                        "{} trials requested but the hypergrid has only {total} points",
                        self.n_trials
                    )));
                }
                index::sample(&mut rng, total, self.n_trials)
                    .into_iter()
                    .map(|mut flat| {
                        (0..dim)
                            .map(|_| {
                                let i = flat % p;
                                flat /= p;
                                i
                            })
                            .collect()
                    })
                    .collect()
            }
            None => {
                // too many lattice points to index: rejection sampling
                let mut seen = HashSet::new();
                let mut out = Vec::with_capacity(self.n_trials);
                while out.len() < self.n_trials {
                    let point: Vec<usize> = (0..dim).map(|_| rng.gen_range(0..p)).collect();
                    if seen.insert(point.clone()) {
                        out.push(point);
                    }
                }
                out
            }
        };
        Ok(indices
            .into_iter()
            .map(|idx| idx.into_iter().map(|i| self.lattice_value(i)).collect())
            .collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiStartResult {
    /// Runs in trial order.
    pub runs: Vec<OptimizationRun>,
    /// Indices of converged runs, best flux first (ties by trial index).
    pub ranking: Vec<usize>,
}

impl MultiStartResult {
    pub fn best(&self) -> Option<&OptimizationRun> {
        self.ranking.first().map(|&i| &self.runs[i])
    }

    pub fn converged_count(&self) -> usize {
        self.ranking.len()
    }
}

/// Independent runs from every sampled start; trials execute on the current
/// rayon pool and are merged by trial index.
pub fn multi_start(
    spec_template: &ChainSpec,
    model: &EnvironmentModel,
    config: &OptimizerConfig,
    sampler: &HypergridSampler,
) -> Result<MultiStartResult> {
    config.validate()?;
    let n = spec_template.n_sites;
    if n < 2 {
        return Err(domain("nothing to optimize on a single site"));
    }
    let starts = sampler.sample(n - 1)?;
    let mut flat = spec_template.clone();
    flat.energies = vec![0.0; n];
    let objective = FluxObjective::with_method(&flat, *model, config.gradient)?;
    let runs: Vec<OptimizationRun> = starts
        .par_iter()
        .map(|start| optimize_from(&objective, start, config))
        .collect();
    let mut ranking: Vec<usize> = (0..runs.len()).filter(|&i| runs[i].status == RunStatus::Converged).collect();
    ranking.sort_by(|&a, &b| runs[b].final_flux.total_cmp(&runs[a].final_flux).then(a.cmp(&b)));
    Ok(MultiStartResult { runs, ranking })
}
