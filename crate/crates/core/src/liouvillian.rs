//! Vectorized Lindblad generators for the coherent, local-dephasing and
//! thermal (secular, eigenbasis) environments, plus the leak/injection channel
//! `|1><N|` that holds the chain in a current-carrying steady state.
//!
//! Everything is assembled in the site basis with column-stacking
//! vectorization; see [`crate::linalg`].

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::chain::{build_hamiltonian, ChainSpec, Hamiltonian};
use crate::error::{domain, Result};
use crate::linalg::{self, kron, to_complex, vec_index, CMat, SymmetricEigen, I};

/// Below this eigenvalue gap (energy units) the bath factor takes its
/// zero-frequency limit `gamma0 * T`.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentModel {
    Coherent,
    /// Same dephasing rate on every site.
    LocalDephasing { gamma: f64 },
    /// Secular eigenbasis dissipation from an ohmic bath at `temperature`.
    Thermal { gamma0: f64, temperature: f64 },
}

impl EnvironmentModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvironmentModel::Coherent => Ok(()),
            EnvironmentModel::LocalDephasing { gamma } => {
                if gamma >= 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(domain(format!("dephasing rate must be nonnegative, got {gamma}")))
                }
            }
            EnvironmentModel::Thermal { gamma0, temperature } => {
                if !(gamma0 >= 0.0 && gamma0.is_finite()) {
                    return Err(domain(format!("gamma0 must be nonnegative, got {gamma0}")));
                }
                if !(temperature > 0.0 && temperature.is_finite()) {
                    return Err(domain(format!("temperature must be positive, got {temperature}")));
                }
                Ok(())
            }
        }
    }

    /// Whether the generator depends on site energies only through `-i[H, .]`.
    pub fn is_energy_linear(&self) -> bool {
        !matches!(self, EnvironmentModel::Thermal { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            EnvironmentModel::Coherent => "coherent",
            EnvironmentModel::LocalDephasing { .. } => "local-dephasing",
            EnvironmentModel::Thermal { .. } => "thermal",
        }
    }
}

/// Generator `M` with `d vec(rho)/dt = M vec(rho)`, and the modified system
/// `M~ vec(rho) = u` whose normalization row pins `trace(rho) = 1`.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    n_sites: usize,
    gamma_leak: f64,
    matrix: CMat,
    modified: CMat,
    rhs: Vec<c64>,
}

impl Liouvillian {
    /// Replaces the row of `rho_11` (vec index 0) with the trace functional.
    pub fn from_generator(matrix: CMat, n_sites: usize, gamma_leak: f64) -> Self {
        let dim = n_sites * n_sites;
        assert_eq!(matrix.nrows(), dim);
        let mut modified = matrix.clone();
        let row = Self::NORMALIZATION_ROW;
        for c in 0..dim {
            modified[(row, c)] = c64::new(0.0, 0.0);
        }
        for k in 0..n_sites {
            modified[(row, vec_index(k, k, n_sites))] = c64::new(1.0, 0.0);
        }
        let mut rhs = vec![c64::new(0.0, 0.0); dim];
        rhs[row] = c64::new(1.0, 0.0);
        Liouvillian {
            n_sites,
            gamma_leak,
            matrix,
            modified,
            rhs,
        }
    }

    pub const NORMALIZATION_ROW: usize = 0;

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn gamma_leak(&self) -> f64 {
        self.gamma_leak
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn modified(&self) -> &CMat {
        &self.modified
    }

    pub fn rhs(&self) -> &[c64] {
        &self.rhs
    }

    /// Largest entry of `vec(I)^H M`; zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let n = self.n_sites;
        (0..n * n)
            .map(|c| {
                (0..n)
                    .map(|k| self.matrix[(vec_index(k, k, n), c)])
                    .fold(c64::new(0.0, 0.0), |acc, z| acc + z)
                    .norm()
            })
            .fold(0.0, f64::max)
    }
}

/// `-i (I kron H - H^T kron I)`.
pub fn coherent_superoperator(h: &Mat<f64>) -> CMat {
    let n = h.nrows();
    let mut m = Mat::<c64>::zeros(n * n, n * n);
    // -i[H, rho]_{ij} = -i (sum_k H_ik rho_kj - rho_ik H_kj)
    for i in 0..n {
        for j in 0..n {
            let row = vec_index(i, j, n);
            for k in 0..n {
                m[(row, vec_index(k, j, n))] += -I * h[(i, k)];
                m[(row, vec_index(i, k, n))] += I * h[(k, j)];
            }
        }
    }
    m
}

/// `rate * [conj(L) kron L - (I kron L^H L + (L^H L)^T kron I) / 2]`.
pub fn dissipator(jump: &CMat, rate: f64) -> CMat {
    let n = jump.nrows();
    let id = linalg::identity(n);
    let ldl = &linalg::adjoint(jump) * jump;
    let ldl_t = Mat::from_fn(n, n, |i, j| ldl[(j, i)]);
    let conj_l = Mat::from_fn(n, n, |i, j| jump[(i, j)].conj());
    let m = kron(&conj_l, jump) - (kron(&id, &ldl) + kron(&ldl_t, &id)) * faer::Scale(c64::new(0.5, 0.0));
    m * faer::Scale(c64::new(rate, 0.0))
}

/// Leak/injection jump `|1><N|`.
pub fn leak_operator(n_sites: usize) -> CMat {
    let mut l = Mat::<c64>::zeros(n_sites, n_sites);
    l[(0, n_sites - 1)] = c64::new(1.0, 0.0);
    l
}

fn add_leak(m: &mut CMat, n: usize, gamma_leak: f64) -> Result<()> {
    if gamma_leak > 0.0 {
        if n < 2 {
            return Err(domain("a leak needs distinct entry and exit sites (N >= 2)"));
        }
        *m += dissipator(&leak_operator(n), gamma_leak);
    }
    Ok(())
}

fn check_leak(gamma_leak: f64) -> Result<()> {
    if gamma_leak >= 0.0 && gamma_leak.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("leak rate must be nonnegative, got {gamma_leak}")))
    }
}

/// Coherent evolution plus equal local dephasing `gamma` on every site and the leak.
pub fn assemble_model_i(h: &Hamiltonian, gamma: f64, gamma_leak: f64) -> Result<Liouvillian> {
    EnvironmentModel::LocalDephasing { gamma }.validate()?;
    check_leak(gamma_leak)?;
    let n = h.n_sites();
    let mut m = coherent_superoperator(h.matrix());
    if gamma > 0.0 {
        for site in 0..n {
            let mut proj = Mat::<c64>::zeros(n, n);
            proj[(site, site)] = c64::new(1.0, 0.0);
            m += dissipator(&proj, gamma);
        }
    }
    add_leak(&mut m, n, gamma_leak)?;
    Ok(Liouvillian::from_generator(m, n, gamma_leak))
}

/// Ohmic bath factor for a transition that releases `energy_release` to the
/// bath (positive = downhill).
///
/// `gamma0 |w| (n_BE(|w|) + theta(w))`, with the zero-frequency limit
/// `gamma0 * T` inside [`DEGENERACY_TOL`].
pub fn thermal_spectral_factor(energy_release: f64, gamma0: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(domain(format!("temperature must be positive, got {temperature}")));
    }
    if !(gamma0 >= 0.0) {
        return Err(domain(format!("gamma0 must be nonnegative, got {gamma0}")));
    }
    Ok(spectral_factor_unchecked(energy_release, gamma0, temperature))
}

fn spectral_factor_unchecked(w: f64, gamma0: f64, temperature: f64) -> f64 {
    let a = w.abs();
    if a <= DEGENERACY_TOL {
        return gamma0 * temperature;
    }
    let n_be = 1.0 / (a / temperature).exp_m1();
    let step = if w > 0.0 { 1.0 } else { 0.0 };
    gamma0 * a * (n_be + step)
}

/// `d/dw` of [`thermal_spectral_factor`]; `gamma0 / 2` inside the degeneracy window.
pub(crate) fn spectral_factor_slope(w: f64, gamma0: f64, temperature: f64) -> f64 {
    if w.abs() <= DEGENERACY_TOL {
        return 0.5 * gamma0;
    }
    let u = w / temperature;
    if u.abs() < 1e-2 {
        // u / (1 - e^-u) = 1 + u/2 + u^2/12 - u^4/720 + ...
        return gamma0 * (0.5 + u / 6.0 - u * u * u / 180.0);
    }
    // with e = e^-u - 1: g = -gamma0 w / e, g' = gamma0 (-1/e - u (e + 1) / e^2)
    let e = (-u).exp_m1();
    let tail = if e.is_finite() { u * (e + 1.0) / (e * e) } else { 0.0 };
    gamma0 * (-1.0 / e - tail)
}

/// Thermal transition rates between eigenstates of `H`.
///
/// Matrices are indexed by transition `a -> b` (population moves from
/// eigenstate `a` to `b` through the jump `|phi_b><phi_a|`):
/// `s[(a, b)]` is the bath factor for released energy `w_a - w_b`, so
/// `s[(a, b)] / s[(b, a)] = exp((w_a - w_b) / T)`, and
/// `w[(a, b)] = s[(a, b)] * sum_n |<n|phi_a>|^2 |<n|phi_b>|^2`.
#[derive(Clone, Debug)]
pub struct ThermalRates {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<f64>,
    pub s: Mat<f64>,
    pub w: Mat<f64>,
    /// `sum_n |<n|phi_a>|^2 |<n|phi_b>|^2`.
    pub overlap: Mat<f64>,
    /// Pairs `a < b` closer than [`DEGENERACY_TOL`].
    pub near_degenerate: Vec<(usize, usize)>,
}

impl ThermalRates {
    /// Total decay rate out of each eigenstate.
    pub fn out_rates(&self) -> Vec<f64> {
        let n = self.eigenvalues.len();
        (0..n).map(|a| (0..n).filter(|&b| b != a).map(|b| self.w[(a, b)]).sum()).collect()
    }
}

pub fn thermal_rates(h: &Hamiltonian, gamma0: f64, temperature: f64) -> Result<ThermalRates> {
    EnvironmentModel::Thermal { gamma0, temperature }.validate()?;
    let eig = linalg::symmetric_eigen(h.matrix())?;
    Ok(rates_from_eigen(eig, gamma0, temperature))
}

pub(crate) fn rates_from_eigen(eig: SymmetricEigen, gamma0: f64, temperature: f64) -> ThermalRates {
    let n = eig.values.len();
    let v = &eig.vectors;
    let mut s = Mat::<f64>::zeros(n, n);
    let mut w = Mat::<f64>::zeros(n, n);
    let mut overlaps = Mat::<f64>::zeros(n, n);
    let mut near_degenerate = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let gap = eig.values[a] - eig.values[b];
            if a < b && gap.abs() <= DEGENERACY_TOL {
                near_degenerate.push((a, b));
            }
            let factor = spectral_factor_unchecked(gap, gamma0, temperature);
            let overlap: f64 = (0..n).map(|k| v[(k, a)] * v[(k, a)] * v[(k, b)] * v[(k, b)]).sum();
            s[(a, b)] = factor;
            overlaps[(a, b)] = overlap;
            w[(a, b)] = (factor * overlap).max(0.0);
        }
    }
    ThermalRates {
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        s,
        w,
        overlap: overlaps,
        near_degenerate,
    }
}

/// Site-basis superoperator of the secular dissipator
/// `sum_{a != b} w_ab D[|phi_b><phi_a|]`.
///
/// In the eigenbasis the dissipator only feeds populations (gain
/// `sum_a w_ax rho_aa`) and damps every element by the mean out-rate, so the
/// site-basis matrix is `-(I kron A + A kron I)/2 + Q w^T Q^T` with
/// `A = V diag(out) V^T` and `Q[(i,j), x] = V_ix V_jx`.
pub fn secular_superoperator(rates: &ThermalRates) -> Mat<f64> {
    let n = rates.eigenvalues.len();
    let v = &rates.eigenvectors;
    let out = rates.out_rates();
    let a = Mat::from_fn(n, n, |i, k| (0..n).map(|x| v[(i, x)] * out[x] * v[(k, x)]).sum::<f64>());
    let q = Mat::from_fn(n * n, n, |p, x| v[(p % n, x)] * v[(p / n, x)]);
    let w_t = Mat::from_fn(n, n, |x, a| rates.w[(a, x)]);
    let mut m = &(&q * &w_t) * q.transpose();
    for i in 0..n {
        for j in 0..n {
            let row = vec_index(i, j, n);
            for k in 0..n {
                // (I kron A): couples (i,j) to (k,j); (A kron I): (i,j) to (i,k)
                m[(row, vec_index(k, j, n))] -= 0.5 * a[(i, k)];
                m[(row, vec_index(i, k, n))] -= 0.5 * a[(j, k)];
            }
        }
    }
    m
}

/// The secular dissipator applied to a density matrix, in `O(N^3)`.
pub fn secular_action(rates: &ThermalRates, rho: &CMat) -> CMat {
    let n = rates.eigenvalues.len();
    let v = to_complex(&rates.eigenvectors);
    let vt = Mat::from_fn(n, n, |i, j| v[(j, i)]);
    let rho_e = &(&vt * rho) * &v;
    let out = rates.out_rates();
    let mut d = Mat::<c64>::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            d[(x, y)] = rho_e[(x, y)] * (-0.5 * (out[x] + out[y]));
        }
        let gain: f64 = (0..n).filter(|&a| a != x).map(|a| rates.w[(a, x)] * rho_e[(a, a)].re).sum();
        d[(x, x)] += c64::new(gain, 0.0);
    }
    &(&v * &d) * &vt
}

pub fn assemble_model_ii(
    h: &Hamiltonian,
    gamma0: f64,
    temperature: f64,
    gamma_leak: f64,
) -> Result<(Liouvillian, ThermalRates)> {
    check_leak(gamma_leak)?;
    let rates = thermal_rates(h, gamma0, temperature)?;
    let n = h.n_sites();
    let mut m = coherent_superoperator(h.matrix());
    let diss = secular_superoperator(&rates);
    for c in 0..n * n {
        for r in 0..n * n {
            m[(r, c)].re += diss[(r, c)];
        }
    }
    add_leak(&mut m, n, gamma_leak)?;
    Ok((Liouvillian::from_generator(m, n, gamma_leak), rates))
}

/// Builds the Hamiltonian and the generator for `model`.
pub fn assemble(spec: &ChainSpec, model: &EnvironmentModel) -> Result<(Liouvillian, Option<ThermalRates>)> {
    model.validate()?;
    let h = build_hamiltonian(spec)?;
    match *model {
        EnvironmentModel::Coherent => Ok((assemble_model_i(&h, 0.0, spec.gamma_leak)?, None)),
        EnvironmentModel::LocalDephasing { gamma } => Ok((assemble_model_i(&h, gamma, spec.gamma_leak)?, None)),
        EnvironmentModel::Thermal { gamma0, temperature } => {
            let (l, rates) = assemble_model_ii(&h, gamma0, temperature, spec.gamma_leak)?;
            Ok((l, Some(rates)))
        }
    }
}
