//! Batch harness: flux maps over `(eps_2, eps_3)`, multi-start optimization
//! campaigns, dephasing-rate sweeps, steady-state reports and closed-form
//! checks. Every run produces a [`ResultBundle`] of fixed-header CSV tables,
//! JSON documents and a manifest echoing the resolved configuration.
//!
//! Work items run on the current rayon pool and are merged by index, so the
//! CSV bytes do not depend on the worker count.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chain::{tunneling_energy, ChainSpec, Tunneling};
use crate::error::{Error, Result};
use crate::gradient::FluxObjective;
use crate::liouvillian::{assemble, EnvironmentModel};
use crate::optimizer::{multi_start, HypergridSampler, MultiStartResult, OptimizerConfig};
use crate::oracle::ThreeSiteParams;
use crate::steady_state::{solve_steady_state, Diagnostics, SteadyState};

pub const DEFAULT_TRIALS: usize = 100;

/// Evenly spaced samples of one coordinate; a single point sits at `min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Axis { min, max, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        (0..self.points).map(|i| self.min + self.step() * i as f64).collect()
    }

    pub fn step(&self) -> f64 {
        if self.points > 1 {
            (self.max - self.min) / (self.points - 1) as f64
        } else {
            0.0
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Config(format!("{name}: at least one point is required")));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::Config(format!("{name}: need finite min <= max, got [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Log,
    Linear,
}

/// Dephasing rates for a sweep, optionally preceded by `gamma = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: Spacing,
    pub include_zero: bool,
}

impl Default for GammaGrid {
    fn default() -> Self {
        GammaGrid {
            min: 1e-3,
            max: 10.0,
            points: 81,
            spacing: Spacing::Log,
            include_zero: true,
        }
    }
}

impl GammaGrid {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points + 1);
        if self.include_zero {
            out.push(0.0);
        }
        let t = |i: usize| if self.points > 1 { i as f64 / (self.points - 1) as f64 } else { 0.0 };
        out.extend((0..self.points).map(|i| match self.spacing {
            Spacing::Linear => self.min + (self.max - self.min) * t(i),
            Spacing::Log => (self.min.ln() + (self.max.ln() - self.min.ln()) * t(i)).exp(),
        }));
        out
    }

    fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Config("gammas: at least one point is required".into()));
        }
        let lower_ok = match self.spacing {
            Spacing::Log => self.min > 0.0,
            Spacing::Linear => self.min >= 0.0,
        };
        if !(lower_ok && self.min <= self.max && self.max.is_finite()) {
            return Err(Error::Config(format!(
                "gammas: invalid range [{}, {}] for {:?} spacing",
                self.min, self.max, self.spacing
            )));
        }
        Ok(())
    }
}

fn default_map_axis() -> Axis {
    Axis::new(-1.0, 1.0, 201)
}

fn default_oracle_axis() -> Axis {
    Axis::new(-1.0, 1.0, 101)
}

fn default_true() -> bool {
    true
}

fn default_gallery() -> usize {
    20
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FluxMap,
    Optimize,
    GammaSweep,
    SteadyStateReport,
    OracleCheck,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::FluxMap => "flux-map",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::GammaSweep => "gamma-sweep",
            ExperimentKind::SteadyStateReport => "steady-state-report",
            ExperimentKind::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    /// Flux over a grid of `(eps_2, eps_3)` for a three-site chain with `eps_1 = 0`.
    FluxMap {
        #[serde(default = "default_map_axis")]
        eps2: Axis,
        #[serde(default = "default_map_axis")]
        eps3: Axis,
        /// Also run a multi-start optimization and compare with the grid argmax.
        #[serde(default = "default_true")]
        overlay: bool,
    },
    Optimize {
        /// Converged profiles kept in the gallery, best first.
        #[serde(default = "default_gallery")]
        gallery_size: usize,
    },
    /// Flux versus local dephasing rate for a fixed profile. Without a profile,
    /// a campaign under the configured dephasing model supplies its best one.
    GammaSweep {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        profile: Option<Vec<f64>>,
        #[serde(default)]
        gammas: GammaGrid,
    },
    SteadyStateReport {
        /// Also write the Liouvillian and, for a thermal bath, its rates.
        #[serde(default)]
        dump_operators: bool,
    },
    /// Closed-form three-site flux against the numeric solver over `eps_2`.
    OracleCheck {
        #[serde(default = "default_oracle_axis")]
        eps2: Axis,
    },
}

impl Experiment {
    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::FluxMap => Experiment::FluxMap {
                eps2: default_map_axis(),
                eps3: default_map_axis(),
                overlay: true,
            },
            ExperimentKind::Optimize => Experiment::Optimize {
                gallery_size: default_gallery(),
            },
            ExperimentKind::GammaSweep => Experiment::GammaSweep {
                profile: None,
                gammas: GammaGrid::default(),
            },
            ExperimentKind::SteadyStateReport => Experiment::SteadyStateReport { dump_operators: false },
            ExperimentKind::OracleCheck => Experiment::OracleCheck {
                eps2: default_oracle_axis(),
            },
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            Experiment::FluxMap { .. } => ExperimentKind::FluxMap,
            Experiment::Optimize { .. } => ExperimentKind::Optimize,
            Experiment::GammaSweep { .. } => ExperimentKind::GammaSweep,
            Experiment::SteadyStateReport { .. } => ExperimentKind::SteadyStateReport,
            Experiment::OracleCheck { .. } => ExperimentKind::OracleCheck,
        }
    }
}

/// Bounds and resolution of the start lattice; trial count and seed live on
/// [`ExperimentConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypergrid {
    pub lower: f64,
    pub upper: f64,
    pub points_per_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub chain: ChainSpec,
    pub model: EnvironmentModel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Defaults to the per-environment settings of [`OptimizerConfig::defaults_for`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
    /// Defaults to [`HypergridSampler::for_chain`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypergrid: Option<Hypergrid>,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

/// Document form accepted by [`ExperimentConfig::from_toml`], where the
/// experiment table may be left for the caller to fill in.
#[derive(Deserialize)]
struct ConfigFile {
    experiment: Option<Experiment>,
    chain: ChainSpec,
    model: EnvironmentModel,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    hypergrid: Option<Hypergrid>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, chain: ChainSpec, model: EnvironmentModel) -> Self {
        ExperimentConfig {
            experiment,
            chain,
            model,
            seed: 0,
            trials: DEFAULT_TRIALS,
            optimizer: None,
            hypergrid: None,
        }
    }

    /// Parses a TOML document. A missing `[experiment]` table takes the
    /// defaults of `fallback`; a present one must agree with it when given.
    pub fn from_toml(text: &str, fallback: Option<ExperimentKind>) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_file(file, fallback)
    }

    /// Parses either a config document (`.toml`) or a previous run's
    /// `manifest.json`, whose `config` entry is the resolved configuration.
    pub fn load(path: &Path, fallback: Option<ExperimentKind>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut doc: Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let inner = doc.get_mut("config").map(Value::take).unwrap_or(doc);
            let file: ConfigFile = serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))?;
            Self::from_file(file, fallback)
        } else {
            Self::from_toml(&text, fallback)
        }
    }

    fn from_file(file: ConfigFile, fallback: Option<ExperimentKind>) -> Result<Self> {
        let experiment = match (file.experiment, fallback) {
            (Some(e), Some(k)) if e.kind() != k => {
                return Err(Error::Config(format!(
                    "config describes a {} experiment, not {}",
                    e.kind().label(),
                    k.label()
                )))
            }
            (Some(e), _) => e,
            (None, Some(k)) => Experiment::default_for(k),
            (None, None) => return Err(Error::Config("missing [experiment] table".into())),
        };
        Ok(ExperimentConfig {
            experiment,
            chain: file.chain,
            model: file.model,
            seed: file.seed,
            trials: file.trials,
            optimizer: file.optimizer,
            hypergrid: file.hypergrid,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        self.optimizer
            .unwrap_or_else(|| OptimizerConfig::defaults_for(&self.model, self.chain.n_sites))
    }

    pub fn sampler(&self) -> HypergridSampler {
        let mut s = HypergridSampler::for_chain(self.chain.n_sites, self.trials, self.seed);
        if let Some(g) = self.hypergrid {
            s.lower = g.lower;
            s.upper = g.upper;
            s.points_per_dim = g.points_per_dim;
        }
        s
    }

    /// Fills every defaulted field so the manifest echo is self-contained.
    pub fn resolved(&self) -> Self {
        let s = self.sampler();
        ExperimentConfig {
            optimizer: Some(self.optimizer_config()),
            hypergrid: Some(Hypergrid {
                lower: s.lower,
                upper: s.upper,
                points_per_dim: s.points_per_dim,
            }),
            ..self.clone()
        }
    }

    fn uses_optimizer(&self) -> bool {
        match &self.experiment {
            Experiment::FluxMap { overlay, .. } => *overlay,
            Experiment::Optimize { .. } => true,
            Experiment::GammaSweep { profile, .. } => profile.is_none(),
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.model.validate()?;
        let n = self.chain.n_sites;
        if self.uses_optimizer() {
            self.optimizer_config().validate()?;
            if self.trials == 0 {
                return Err(Error::Config("trials must be at least 1".into()));
            }
            if n < 2 {
                return Err(Error::Config("optimization needs at least two sites".into()));
            }
            let s = self.sampler();
            if s.points_per_dim == 0 || !(s.lower < s.upper) {
                return Err(Error::Config("hypergrid needs points_per_dim >= 1 and lower < upper".into()));
            }
        }
        match &self.experiment {
            Experiment::FluxMap { eps2, eps3, .. } => {
                if n != 3 {
                    return Err(Error::Config(format!("flux maps need a three-site chain, got {n} sites")));
                }
                if self.chain.energies[0] != 0.0 {
                    return Err(Error::Config("flux maps pin eps_1 = 0".into()));
                }
                eps2.validate("eps2")?;
                eps3.validate("eps3")?;
            }
            Experiment::Optimize { .. } | Experiment::SteadyStateReport { .. } => {}
            Experiment::GammaSweep { profile, gammas } => {
                if !matches!(self.model, EnvironmentModel::LocalDephasing { .. }) {
                    return Err(Error::Config("dephasing sweeps need the local-dephasing model".into()));
                }
                if let Some(p) = profile {
                    if p.len() != n || p.iter().any(|e| !e.is_finite()) {
                        return Err(Error::Config(format!("profile must hold {n} finite energies")));
                    }
                }
                gammas.validate()?;
            }
            Experiment::OracleCheck { eps2 } => {
                self.oracle_params(0.0)?;
                eps2.validate("eps2")?;
            }
        }
        Ok(())
    }

    fn oracle_params(&self, eps2: f64) -> Result<ThreeSiteParams> {
        if self.chain.n_sites != 3 {
            return Err(Error::Config("closed forms cover three-site chains only".into()));
        }
        let gamma_deph = match self.model {
            EnvironmentModel::Coherent => 0.0,
            EnvironmentModel::LocalDephasing { gamma } => gamma,
            EnvironmentModel::Thermal { .. } => {
                return Err(Error::Config("no closed form exists for the thermal bath".into()))
            }
        };
        let p = ThreeSiteParams {
            eps2,
            j1: tunneling_energy(&self.chain, 1)?,
            j2: tunneling_energy(&self.chain, 2)?,
            gamma_leak: self.chain.gamma_leak,
            gamma_deph,
        };
        if p.exact().is_none() {
            return Err(Error::Config(
                "no exact closed form with both next-nearest-neighbor tunneling and dephasing".into(),
            ));
        }
        Ok(p)
    }
}

/// A CSV payload; cells are preformatted so the bytes are reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        w.write_record(&self.header).map_err(ser)?;
        for row in &self.rows {
            w.write_record(row).map_err(ser)?;
        }
        w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Values of one column parsed as floats.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[k].parse().ok()).collect()
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: ExperimentConfig,
    pub summary: Value,
    pub files: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ResultBundle {
    pub manifest: Manifest,
    pub tables: Vec<Table>,
    /// JSON documents written next to the tables.
    pub documents: Vec<(String, Value)>,
}

impl ResultBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.tables {
            std::fs::write(dir.join(&t.name), t.to_csv_bytes()?)?;
        }
        let json = |v: &dyn erased::Json| v.pretty();
        for (name, doc) in &self.documents {
            std::fs::write(dir.join(name), json(doc)?)?;
        }
        std::fs::write(dir.join("manifest.json"), json(&self.manifest)?)?;
        Ok(())
    }
}

mod erased {
    use crate::error::{Error, Result};

    pub trait Json {
        fn pretty(&self) -> Result<String>;
    }

    impl<T: serde::Serialize> Json for T {
        fn pretty(&self) -> Result<String> {
            let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Typed experiment output that can be flattened into a bundle.
pub trait Outcome {
    fn tables(&self) -> Result<Vec<Table>>;
    fn summary(&self) -> Value;
    fn documents(&self) -> Vec<(String, Value)> {
        Vec::new()
    }
}

/// Small dense kernels run sequentially inside the outer worker pool; this
/// also keeps their floating-point reductions independent of the pool size.
pub fn use_sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Validates, runs and packages any experiment.
pub fn run(config: &ExperimentConfig) -> Result<ResultBundle> {
    config.validate()?;
    use_sequential_kernels();
    let started_unix = unix_now();
    let outcome: Box<dyn Outcome> = match &config.experiment {
        Experiment::FluxMap { .. } => Box::new(flux_map(config)?),
        Experiment::Optimize { .. } => Box::new(optimize_campaign(config)?),
        Experiment::GammaSweep { .. } => Box::new(gamma_sweep(config)?),
        Experiment::SteadyStateReport { .. } => Box::new(steady_state_report(config)?),
        Experiment::OracleCheck { .. } => Box::new(oracle_check(config)?),
    };
    let tables = outcome.tables()?;
    let documents = outcome.documents();
    let files = tables
        .iter()
        .map(|t| t.name.clone())
        .chain(documents.iter().map(|(n, _)| n.clone()))
        .collect();
    Ok(ResultBundle {
        manifest: Manifest {
            kind: config.experiment.kind().label().into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            started_unix,
            finished_unix: unix_now(),
            config: config.resolved(),
            summary: outcome.summary(),
            files,
        },
        tables,
        documents,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub eps2: f64,
    pub eps3: f64,
    pub flux: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Overlay {
    pub optimum: GridPoint,
    pub converged: usize,
    pub trials: usize,
    /// Optimizer optimum and grid argmax differ by at most one cell per axis.
    pub within_one_cell: bool,
}

#[derive(Clone, Debug)]
pub struct FluxMap {
    pub eps2: Vec<f64>,
    pub eps3: Vec<f64>,
    /// `flux[i * eps3.len() + j]` is the flux at `(eps2[i], eps3[j])`; NaN where the solve failed.
    pub flux: Vec<f64>,
    pub nan_cells: usize,
    pub argmax: Option<GridPoint>,
    pub overlay: Option<Overlay>,
}

pub fn flux_map(config: &ExperimentConfig) -> Result<FluxMap> {
    config.validate()?;
    let Experiment::FluxMap { eps2, eps3, overlay } = &config.experiment else {
        return Err(Error::Config("not a flux-map experiment".into()));
    };
    let objective = FluxObjective::new(&config.chain, config.model)?;
    let (xs, ys) = (eps2.values(), eps3.values());
    let flux: Vec<f64> = (0..xs.len() * ys.len())
        .into_par_iter()
        .map(|c| {
            objective
                .flux(&[0.0, xs[c / ys.len()], ys[c % ys.len()]])
                .unwrap_or(f64::NAN)
        })
        .collect();
    let nan_cells = flux.iter().filter(|f| f.is_nan()).count();
    let argmax = flux
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.is_nan())
        .fold(None, |best: Option<(usize, f64)>, (c, &f)| match best {
            Some((_, b)) if b >= f => best,
            _ => Some((c, f)),
        })
        .map(|(c, f)| GridPoint {
            eps2: xs[c / ys.len()],
            eps3: ys[c % ys.len()],
            flux: f,
        });
    let overlay = if *overlay {
        let result = campaign(config)?;
        result.best().map(|run| {
            let optimum = GridPoint {
                eps2: run.final_energies[0],
                eps3: run.final_energies[1],
                flux: run.final_flux,
            };
            let within_one_cell = argmax.is_some_and(|a| {
                let slack = 1e-9;
                (a.eps2 - optimum.eps2).abs() <= eps2.step() + slack && (a.eps3 - optimum.eps3).abs() <= eps3.step() + slack
            });
            Overlay {
                optimum,
                converged: result.converged_count(),
                trials: result.runs.len(),
                within_one_cell,
            }
        })
    } else {
        None
    };
    Ok(FluxMap {
        eps2: xs,
        eps3: ys,
        flux,
        nan_cells,
        argmax,
        overlay,
    })
}

impl Outcome for FluxMap {
    fn tables(&self) -> Result<Vec<Table>> {
        let mut t = Table::new("fluxmap.csv", &["eps2", "eps3", "flux"]);
        for (c, f) in self.flux.iter().enumerate() {
            let (i, j) = (c / self.eps3.len(), c % self.eps3.len());
            t.rows.push(vec![num(self.eps2[i]), num(self.eps3[j]), num(*f)]);
        }
        Ok(vec![t])
    }

    fn summary(&self) -> Value {
        json!({
            "cells": self.flux.len(),
            "nan_cells": self.nan_cells,
            "argmax": self.argmax,
            "overlay": self.overlay,
        })
    }
}

fn campaign(config: &ExperimentConfig) -> Result<MultiStartResult> {
    multi_start(&config.chain, &config.model, &config.optimizer_config(), &config.sampler())
}

/// Populations and coherences of one steady state.
#[derive(Clone, Debug, Serialize)]
pub struct StateReport {
    pub energies: Vec<f64>,
    pub flux: f64,
    pub populations: Vec<f64>,
    /// `|rho_nm|`, row-major.
    pub coherences: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl StateReport {
    fn from_state(energies: Vec<f64>, ss: &SteadyState) -> Self {
        let c = ss.coherence_magnitudes();
        let n = c.nrows();
        StateReport {
            energies,
            flux: ss.flux,
            populations: ss.populations.clone(),
            coherences: (0..n).map(|i| (0..n).map(|j| c[(i, j)]).collect()).collect(),
            diagnostics: ss.diagnostics.clone(),
        }
    }

    fn tables(&self) -> Vec<Table> {
        let mut pops = Table::new("populations.csv", &["site", "population"]);
        for (i, p) in self.populations.iter().enumerate() {
            pops.rows.push(vec![(i + 1).to_string(), num(*p)]);
        }
        let mut coh = Table::new("coherences.csv", &["row", "col", "magnitude"]);
        for (i, row) in self.coherences.iter().enumerate() {
            for (j, m) in row.iter().enumerate() {
                coh.rows.push(vec![(i + 1).to_string(), (j + 1).to_string(), num(*m)]);
            }
        }
        vec![pops, coh]
    }
}

#[derive(Clone, Debug)]
pub struct Campaign {
    pub result: MultiStartResult,
    pub best_state: Option<StateReport>,
    pub gallery_size: usize,
}

impl Campaign {
    /// Converged final profiles, best first, at most `gallery_size` of them.
    pub fn gallery(&self) -> Vec<(usize, f64, Vec<f64>)> {
        self.result
            .ranking
            .iter()
            .take(self.gallery_size)
            .map(|&i| {
                let run = &self.result.runs[i];
                (i, run.final_flux, run.profile())
            })
            .collect()
    }

    pub fn status_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts = BTreeMap::new();
        for run in &self.result.runs {
            *counts.entry(run.status.label()).or_insert(0) += 1;
        }
        counts
    }
}

pub fn optimize_campaign(config: &ExperimentConfig) -> Result<Campaign> {
    config.validate()?;
    let gallery_size = match &config.experiment {
        Experiment::Optimize { gallery_size } => *gallery_size,
        _ => default_gallery(),
    };
    let result = campaign(config)?;
    let best_state = match result.best() {
        Some(run) => {
            let spec = config.chain.with_energies(run.profile())?;
            let (l, _) = assemble(&spec, &config.model)?;
            Some(StateReport::from_state(run.profile(), &solve_steady_state(&l)?))
        }
        None => None,
    };
    Ok(Campaign {
        result,
        best_state,
        gallery_size,
    })
}

impl Outcome for Campaign {
    fn tables(&self) -> Result<Vec<Table>> {
        let n = self.result.runs.first().map_or(0, |r| r.final_energies.len() + 1);
        let mut header = vec!["trial", "status", "steps", "initial_flux", "final_flux", "final_grad_norm"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        header.extend((1..=n).map(|k| format!("eps_{k}")));
        let mut trials = Table {
            name: "trials.csv".into(),
            header,
            rows: Vec::new(),
        };
        for (i, run) in self.result.runs.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                run.status.label().into(),
                run.steps.to_string(),
                num(run.initial_flux),
                num(run.final_flux),
                num(run.final_grad_norm),
            ];
            row.extend(run.profile().iter().map(|e| num(*e)));
            trials.rows.push(row);
        }
        let mut out = vec![trials];
        if let Some(best) = &self.best_state {
            out.extend(best.tables());
        }
        Ok(out)
    }

    fn summary(&self) -> Value {
        let best = self.result.ranking.first().map(|&i| {
            let run = &self.result.runs[i];
            json!({ "trial": i, "flux": run.final_flux, "energies": run.profile(), "steps": run.steps })
        });
        json!({
            "trials": self.result.runs.len(),
            "converged": self.result.converged_count(),
            "status_counts": self.status_counts(),
            "best": best,
        })
    }

    fn documents(&self) -> Vec<(String, Value)> {
        let gallery: Vec<Value> = self
            .gallery()
            .into_iter()
            .enumerate()
            .map(|(rank, (trial, flux, energies))| json!({ "rank": rank + 1, "trial": trial, "flux": flux, "energies": energies }))
            .collect();
        let mut docs = vec![("gallery.json".to_string(), Value::Array(gallery))];
        if let Some(best) = &self.best_state {
            docs.push(("best_state.json".into(), json!(best)));
        }
        docs
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Sweep {
    pub profile: Vec<f64>,
    /// Campaign best flux when the profile came from an optimization.
    pub optimized_flux: Option<f64>,
    pub gammas: Vec<f64>,
    pub flux: Vec<f64>,
    pub coherent_flux: f64,
}

impl Sweep {
    /// Highest point strictly inside the grid that beats both endpoints.
    pub fn interior_maximum(&self) -> Option<(f64, f64)> {
        let last = self.flux.len().checked_sub(1)?;
        let (k, &peak) = self
            .flux
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, &f64)>, (i, f)| match best {
                Some((_, b)) if b >= f => best,
                _ => Some((i, f)),
            })?;
        (k > 0 && k < last && peak > self.flux[0] && peak > self.flux[last]).then(|| (self.gammas[k], peak))
    }

    /// No sample exceeds its predecessor.
    pub fn is_nonincreasing(&self) -> bool {
        self.flux.windows(2).all(|w| w[1] <= w[0])
    }
}

pub fn gamma_sweep(config: &ExperimentConfig) -> Result<Sweep> {
    config.validate()?;
    let Experiment::GammaSweep { profile, gammas } = &config.experiment else {
        return Err(Error::Config("not a gamma-sweep experiment".into()));
    };
    let (profile, optimized_flux) = match profile {
        Some(p) => (p.clone(), None),
        None => {
            let result = campaign(config)?;
            let best = result
                .best()
                .ok_or_else(|| Error::Numerical("no optimization run converged; nothing to sweep".into()))?;
            (best.profile(), Some(best.final_flux))
        }
    };
    let spec = config.chain.with_energies(profile.clone())?;
    let gammas = gammas.values();
    let flux = gammas
        .par_iter()
        .map(|&gamma| {
            let (l, _) = assemble(&spec, &EnvironmentModel::LocalDephasing { gamma })?;
            Ok(solve_steady_state(&l)?.flux)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (l, _) = assemble(&spec, &EnvironmentModel::Coherent)?;
    let coherent_flux = solve_steady_state(&l)?.flux;
    Ok(Sweep {
        profile,
        optimized_flux,
        gammas,
        flux,
        coherent_flux,
    })
}

impl Outcome for Sweep {
    fn tables(&self) -> Result<Vec<Table>> {
        let mut t = Table::new("sweep.csv", &["gamma", "flux"]);
        for (g, f) in self.gammas.iter().zip(&self.flux) {
            t.rows.push(vec![num(*g), num(*f)]);
        }
        Ok(vec![t])
    }

    fn summary(&self) -> Value {
        let interior = self.interior_maximum().map(|(gamma, flux)| json!({ "gamma": gamma, "flux": flux }));
        json!({
            "profile": self.profile,
            "optimized_flux": self.optimized_flux,
            "coherent_flux": self.coherent_flux,
            "interior_maximum": interior,
            "nonincreasing": self.is_nonincreasing(),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OperatorDump {
    /// Unmodified generator as `[re, im]` pairs, row-major.
    pub liouvillian: Vec<Vec<[f64; 2]>>,
    pub eigenvalues: Option<Vec<f64>>,
    pub spectral_factors: Option<Vec<Vec<f64>>>,
    pub transition_rates: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub state: StateReport,
    pub operators: Option<OperatorDump>,
}

pub fn steady_state_report(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let dump = matches!(config.experiment, Experiment::SteadyStateReport { dump_operators: true });
    let (l, rates) = assemble(&config.chain, &config.model)?;
    let ss = solve_steady_state(&l)?;
    let rows = |m: &faer::Mat<f64>| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect();
    let operators = dump.then(|| {
        let m = l.matrix();
        OperatorDump {
            liouvillian: (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
            eigenvalues: rates.as_ref().map(|r| r.eigenvalues.clone()),
            spectral_factors: rates.as_ref().map(|r| rows(&r.s)),
            transition_rates: rates.as_ref().map(|r| rows(&r.w)),
        }
    });
    Ok(Report {
        state: StateReport::from_state(config.chain.energies.clone(), &ss),
        operators,
    })
}

impl Outcome for Report {
    fn tables(&self) -> Result<Vec<Table>> {
        Ok(self.state.tables())
    }

    fn summary(&self) -> Value {
        json!({
            "flux": self.state.flux,
            "populations": self.state.populations,
            "diagnostics": self.state.diagnostics,
        })
    }

    fn documents(&self) -> Vec<(String, Value)> {
        self.operators
            .iter()
            .map(|o| ("operators.json".to_string(), json!(o)))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub eps2: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl OracleCheck {
    pub fn max_abs_diff(&self) -> f64 {
        self.closed_form
            .iter()
            .zip(&self.numeric)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn oracle_check(config: &ExperimentConfig) -> Result<OracleCheck> {
    config.validate()?;
    let Experiment::OracleCheck { eps2 } = &config.experiment else {
        return Err(Error::Config("not an oracle-check experiment".into()));
    };
    let xs = eps2.values();
    let pairs = xs
        .par_iter()
        .map(|&e| {
            let closed = config.oracle_params(e)?.exact().expect("validated");
            let spec = config.chain.with_energies(vec![0.0, e, 0.0])?;
            let (l, _) = assemble(&spec, &config.model)?;
            Ok((closed, solve_steady_state(&l)?.flux))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (closed_form, numeric) = pairs.into_iter().unzip();
    Ok(OracleCheck {
        eps2: xs,
        closed_form,
        numeric,
    })
}

impl Outcome for OracleCheck {
    fn tables(&self) -> Result<Vec<Table>> {
        let mut t = Table::new("oracle.csv", &["eps2", "closed_form", "numeric", "abs_diff"]);
        for ((e, a), b) in self.eps2.iter().zip(&self.closed_form).zip(&self.numeric) {
            t.rows.push(vec![num(*e), num(*a), num(*b), num((a - b).abs())]);
        }
        Ok(vec![t])
    }

    fn summary(&self) -> Value {
        json!({ "points": self.eps2.len(), "max_abs_diff": self.max_abs_diff() })
    }
}

/// Named physical systems: `three-site-{coherent,dephasing,thermal}-{nn,nnn}`
/// (J1 = 0.2, J2 = 0 or 0.1) and `{coherent,dephasing,thermal}-n{5,6,9,10}-alpha{1,3}`
/// (power-law tunneling with J = 0.2). All use a leak rate of 0.1, a dephasing
/// rate of 0.1, and a thermal bath with `gamma0 = 0.1`, `T = 0.2`.
pub fn preset_names() -> Vec<String> {
    let models = ["coherent", "dephasing", "thermal"];
    let mut out = Vec::new();
    for m in models {
        for t in ["nn", "nnn"] {
            out.push(format!("three-site-{m}-{t}"));
        }
    }
    for m in models {
        for n in [5, 6, 9, 10] {
            for a in [1, 3] {
                out.push(format!("{m}-n{n}-alpha{a}"));
            }
        }
    }
    out
}

fn preset_model(name: &str) -> Option<EnvironmentModel> {
    match name {
        "coherent" => Some(EnvironmentModel::Coherent),
        "dephasing" => Some(EnvironmentModel::LocalDephasing { gamma: 0.1 }),
        "thermal" => Some(EnvironmentModel::Thermal {
            gamma0: 0.1,
            temperature: 0.2,
        }),
        _ => None,
    }
}

/// The chain and environment of a named preset.
pub fn preset_system(name: &str) -> Result<(ChainSpec, EnvironmentModel)> {
    let unknown = || Error::Config(format!("unknown preset {name:?}; known presets: {}", preset_names().join(", ")));
    let (j, leak) = (0.2, 0.1);
    if let Some(rest) = name.strip_prefix("three-site-") {
        let (model, range) = rest.rsplit_once('-').ok_or_else(unknown)?;
        let couplings = match range {
            "nn" => vec![j],
            "nnn" => vec![j, 0.1],
            _ => return Err(unknown()),
        };
        let model = preset_model(model).ok_or_else(unknown)?;
        return Ok((ChainSpec::new(vec![0.0; 3], Tunneling::Explicit { couplings }, leak)?, model));
    }
    let mut parts = name.split('-');
    let (Some(model), Some(n), Some(alpha), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(unknown());
    };
    let model = preset_model(model).ok_or_else(unknown)?;
    let n: usize = n.strip_prefix('n').and_then(|s| s.parse().ok()).ok_or_else(unknown)?;
    let alpha: f64 = alpha.strip_prefix("alpha").and_then(|s| s.parse().ok()).ok_or_else(unknown)?;
    if !preset_names().iter().any(|p| p == name) {
        return Err(unknown());
    }
    Ok((ChainSpec::power_law(n, j, alpha, leak)?, model))
}

pub fn preset(name: &str, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let (chain, model) = preset_system(name)?;
    Ok(ExperimentConfig::new(Experiment::default_for(kind), chain, model))
}
