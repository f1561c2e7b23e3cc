//! Tight-binding chain: site energies, distance-dependent tunneling and the
//! leak rate that drives the nonequilibrium steady state.
//!
//! Sites are numbered 1..=N in user-facing text; internally they are 0-based.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Tunneling energies as a function of inter-site distance `d = |n - m|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Tunneling {
    /// `J_d = j_max / d^alpha`.
    PowerLaw { j_max: f64, alpha: f64 },
    /// `couplings[d - 1]` is `J_d`; distances past the end of the list are uncoupled.
    Explicit { couplings: Vec<f64> },
}

impl Tunneling {
    pub fn nearest_neighbor(j1: f64) -> Self {
        Tunneling::Explicit { couplings: vec![j1] }
    }

    pub fn next_nearest_neighbor(j1: f64, j2: f64) -> Self {
        Tunneling::Explicit {
            couplings: vec![j1, j2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_sites: usize,
    pub energies: Vec<f64>,
    pub tunneling: Tunneling,
    pub gamma_leak: f64,
}

impl ChainSpec {
    pub fn new(energies: Vec<f64>, tunneling: Tunneling, gamma_leak: f64) -> Result<Self> {
        let spec = ChainSpec {
            n_sites: energies.len(),
            energies,
            tunneling,
            gamma_leak,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A flat chain (all site energies zero) with power-law tunneling.
    pub fn power_law(n_sites: usize, j_max: f64, alpha: f64, gamma_leak: f64) -> Result<Self> {
        Self::new(
            vec![0.0; n_sites],
            Tunneling::PowerLaw { j_max, alpha },
            gamma_leak,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(domain("chain needs at least one site"));
        }
        if self.energies.len() != self.n_sites {
            return Err(domain(format!(
                "{} site energies given for a {}-site chain",
                self.energies.len(),
                self.n_sites
            )));
        }
        if let Some(e) = self.energies.iter().find(|e| !e.is_finite()) {
            return Err(domain(format!("non-finite site energy {e}")));
        }
        if !(self.gamma_leak >= 0.0 && self.gamma_leak.is_finite()) {
            return Err(domain(format!(
                "leak rate must be finite and nonnegative, got {}",
                self.gamma_leak
            )));
        }
        if self.gamma_leak > 0.0 && self.n_sites < 2 {
            return Err(domain("a leak needs distinct entry and exit sites (N >= 2)"));
        }
        match &self.tunneling {
            Tunneling::PowerLaw { j_max, alpha } => {
                if !(*j_max > 0.0 && j_max.is_finite()) {
                    return Err(domain(format!("j_max must be positive, got {j_max}")));
                }
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(domain(format!("alpha must be positive, got {alpha}")));
                }
            }
            Tunneling::Explicit { couplings } => {
                if couplings.len() > self.n_sites.saturating_sub(1) {
                    return Err(domain(format!(
                        "coupling listed at distance {} but the chain only spans distance {}",
                        couplings.len(),
                        self.n_sites.saturating_sub(1)
                    )));
                }
                if let Some(j) = couplings.iter().find(|j| !j.is_finite()) {
                    return Err(domain(format!("non-finite coupling {j}")));
                }
            }
        }
        Ok(())
    }

    /// Same chain with a different energy landscape.
    pub fn with_energies(&self, energies: Vec<f64>) -> Result<Self> {
        let mut spec = self.clone();
        spec.n_sites = energies.len();
        spec.energies = energies;
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_gamma_leak(&self, gamma_leak: f64) -> Result<Self> {
        let mut spec = self.clone();
        spec.gamma_leak = gamma_leak;
        spec.validate()?;
        Ok(spec)
    }
}

/// Real symmetric tight-binding Hamiltonian in the site basis.
#[derive(Clone, Debug)]
pub struct Hamiltonian(Mat<f64>);

impl Hamiltonian {
    pub fn matrix(&self) -> &Mat<f64> {
        &self.0
    }

    pub fn n_sites(&self) -> usize {
        self.0.nrows()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.0
    }
}

pub fn tunneling_energy(spec: &ChainSpec, distance: usize) -> Result<f64> {
    if distance == 0 || distance >= spec.n_sites {
        return Err(domain(format!(
            "tunneling distance {distance} outside 1..={}",
            spec.n_sites.saturating_sub(1)
        )));
    }
    Ok(coupling_at(&spec.tunneling, distance))
}

fn coupling_at(tunneling: &Tunneling, distance: usize) -> f64 {
    match tunneling {
        Tunneling::PowerLaw { j_max, alpha } => j_max / (distance as f64).powf(*alpha),
        Tunneling::Explicit { couplings } => couplings.get(distance - 1).copied().unwrap_or(0.0),
    }
}

pub fn build_hamiltonian(spec: &ChainSpec) -> Result<Hamiltonian> {
    spec.validate()?;
    let n = spec.n_sites;
    let couplings: Vec<f64> = (1..n).map(|d| coupling_at(&spec.tunneling, d)).collect();
    let h = Mat::from_fn(n, n, |i, j| {
        if i == j {
            spec.energies[i]
        } else {
            couplings[i.abs_diff(j) - 1]
        }
    });
    Ok(Hamiltonian(h))
}
