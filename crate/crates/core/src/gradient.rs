//! Flux and its gradient with respect to the site energies.
//!
//! The steady state solves `R x = e_0` in real Hermitian coordinates and the
//! flux is `eta = gamma_l x_NN`. One transposed solve `R^T mu = gamma_l e_NN`
//! then gives every component: `d eta / d eps_k = -mu^T (dR/d eps_k) x`.
//!
//! Site energies enter the coherent and dephasing generators only through
//! `-i[diag(eps), rho]`, so `dR/d eps_k` is known exactly and the
//! energy-independent part of `R` is assembled once per objective. The thermal
//! dissipator depends on the energies through the eigenbasis of `H`; its
//! derivative uses first-order perturbation of eigenvalues and eigenvectors,
//! with the adjoint contraction carried out once in the eigenbasis.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::chain::{build_hamiltonian, ChainSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, rho_from_coords, vec_index, DenseLu};
use crate::liouvillian::{self, assemble, EnvironmentModel, Liouvillian, ThermalRates, DEGENERACY_TOL};
use crate::steady_state::{check_condition, solve_with_factor, SolverOptions};

/// Default step for finite differences in the site energies.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GradientMethod {
    /// One transposed solve shared by all components.
    #[default]
    Adjoint,
    /// Central differences of the full flux pipeline.
    CentralFd { step: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FluxGradient {
    pub flux: f64,
    /// `d eta / d eps_k` for every site, including the pinned first one.
    pub full: Vec<f64>,
    pub method: GradientMethod,
}

impl FluxGradient {
    /// Components for the free energies `eps_2..eps_N`.
    pub fn grad(&self) -> &[f64] {
        &self.full[1..]
    }

    /// Euclidean norm over the free energies.
    pub fn norm(&self) -> f64 {
        self.grad().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Reusable flux evaluator for one chain geometry and environment; only the
/// site energies vary between calls.
#[derive(Clone, Debug)]
pub struct FluxObjective {
    spec: ChainSpec,
    model: EnvironmentModel,
    method: GradientMethod,
    options: SolverOptions,
    /// Real coordinate matrix at zero site energies; for the thermal bath it
    /// leaves out the energy-dependent dissipator.
    base: Mat<f64>,
}

struct Solved {
    lu: DenseLu,
    x: Vec<f64>,
    rates: Option<ThermalRates>,
}

impl FluxObjective {
    pub fn new(spec: &ChainSpec, model: EnvironmentModel) -> Result<Self> {
        Self::with_method(spec, model, GradientMethod::default())
    }

    pub fn with_method(spec: &ChainSpec, model: EnvironmentModel, method: GradientMethod) -> Result<Self> {
        model.validate()?;
        spec.validate()?;
        if let GradientMethod::CentralFd { step } = method {
            if !(step > 0.0 && step.is_finite()) {
                return Err(crate::error::domain(format!("finite-difference step must be positive, got {step}")));
            }
        }
        let flat = spec.with_energies(vec![0.0; spec.n_sites])?;
        let fixed_part = if model.is_energy_linear() { model } else { EnvironmentModel::Coherent };
        let (l, _) = assemble(&flat, &fixed_part)?;
        let base = linalg::realify(l.modified(), spec.n_sites);
        Ok(FluxObjective {
            spec: spec.clone(),
            model,
            method,
            options: SolverOptions::default(),
            base,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.spec.n_sites
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn model(&self) -> &EnvironmentModel {
        &self.model
    }

    pub fn method(&self) -> GradientMethod {
        self.method
    }

    pub fn flux(&self, energies: &[f64]) -> Result<f64> {
        let solved = self.solve(energies)?;
        Ok(self.flux_of(&solved.x))
    }

    pub fn flux_and_gradient(&self, energies: &[f64]) -> Result<FluxGradient> {
        match self.method {
            GradientMethod::CentralFd { step } => self.central_fd(energies, step),
            GradientMethod::Adjoint => self.adjoint(energies),
        }
    }

    fn flux_of(&self, x: &[f64]) -> f64 {
        let n = self.spec.n_sites;
        self.spec.gamma_leak * x[vec_index(n - 1, n - 1, n)]
    }

    fn real_matrix(&self, energies: &[f64]) -> Result<(Mat<f64>, Option<ThermalRates>)> {
        let n = self.spec.n_sites;
        if energies.len() != n {
            return Err(crate::error::domain(format!("{} energies for a {n}-site chain", energies.len())));
        }
        let mut r = self.base.clone();
        add_energy_terms(&mut r, energies);
        let mut thermal = None;
        if let EnvironmentModel::Thermal { gamma0, temperature } = self.model {
            let spec = self.spec.with_energies(energies.to_vec())?;
            let rates = liouvillian::thermal_rates(&build_hamiltonian(&spec)?, gamma0, temperature)?;
            let diss = linalg::realify_real(&liouvillian::secular_superoperator(&rates), n);
            // the normalization row stays the trace functional
            for c in 0..n * n {
                for row in 1..n * n {
                    r[(row, c)] += diss[(row, c)];
                }
            }
            thermal = Some(rates);
        }
        Ok((r, thermal))
    }

    fn solve(&self, energies: &[f64]) -> Result<Solved> {
        let n = self.spec.n_sites;
        let (r, rates) = self.real_matrix(energies)?;
        let lu = DenseLu::factor(&r)?;
        let (x, condition) = solve_with_factor(&lu, &r, n)?;
        check_condition(condition, n, &self.options)?;
        let residual = (0..n * n)
            .map(|i| {
                let target = if i == Liouvillian::NORMALIZATION_ROW { 1.0 } else { 0.0 };
                ((0..n * n).map(|j| r[(i, j)] * x[j]).sum::<f64>() - target).abs()
            })
            .fold(0.0, f64::max);
        let scale = (0..n * n)
            .map(|i| (0..n * n).map(|j| r[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if residual > self.options.residual_tol * scale {
            return Err(Error::Solver {
                reason: format!("residual {residual:.3e} too large"),
                context: format!("energies {energies:?}"),
            });
        }
        Ok(Solved { lu, x, rates })
    }

    fn adjoint(&self, energies: &[f64]) -> Result<FluxGradient> {
        let n = self.spec.n_sites;
        let solved = self.solve(energies)?;
        let x = &solved.x;
        let mut seed = vec![0.0; n * n];
        seed[vec_index(n - 1, n - 1, n)] = self.spec.gamma_leak;
        let mu = solved.lu.solve_transpose(&seed);

        let mut gradient = coherent_energy_gradient(&mu, x, n);
        if let (EnvironmentModel::Thermal { gamma0, temperature }, Some(rates)) = (self.model, &solved.rates) {
            let thermal = thermal_dissipator_gradient(rates, &mu, x, gamma0, temperature);
            for (g, t) in gradient.iter_mut().zip(thermal) {
                *g += t;
            }
        }
        Ok(FluxGradient {
            flux: self.flux_of(x),
            full: gradient,
            method: self.method,
        })
    }

    fn central_fd(&self, energies: &[f64], step: f64) -> Result<FluxGradient> {
        let flux = self.flux(energies)?;
        let mut gradient = Vec::with_capacity(energies.len());
        for k in 0..energies.len() {
            let mut e = energies.to_vec();
            e[k] = energies[k] + step;
            let up = self.flux(&e)?;
            e[k] = energies[k] - step;
            let down = self.flux(&e)?;
            gradient.push((up - down) / (2.0 * step));
        }
        Ok(FluxGradient {
            flux,
            full: gradient,
            method: self.method,
        })
    }
}

/// Adds `-i[diag(eps), .]` in real coordinates: for `a < b` with
/// `D = eps_a - eps_b`, `d Re/dt += D Im` and `d Im/dt -= D Re`.
fn add_energy_terms(r: &mut Mat<f64>, energies: &[f64]) {
    let n = energies.len();
    for b in 0..n {
        for a in 0..b {
            let delta = energies[a] - energies[b];
            let re = vec_index(a, b, n);
            let im = vec_index(b, a, n);
            r[(re, im)] += delta;
            r[(im, re)] -= delta;
        }
    }
}

/// `-mu^T (dR/d eps_k) x` for the `-i[diag(eps), .]` term.
fn coherent_energy_gradient(mu: &[f64], x: &[f64], n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n];
    for b in 0..n {
        for a in 0..b {
            let re = vec_index(a, b, n);
            let im = vec_index(b, a, n);
            let term = mu[re] * x[im] - mu[im] * x[re];
            g[a] -= term;
            g[b] += term;
        }
    }
    g
}

/// `-mu^T (dD/d eps_k) rho` for the secular dissipator `D`, all `k` at once.
///
/// In the eigenbasis `D(rho) = V G_W(V^T rho V) V^T`. With `dV = V A_k`,
/// `A_k[x, y] = V_kx V_ky / (w_y - w_x)` and `dw_a = V_ka^2`, the derivative is
/// `V ([A, G] + G_W([rho~, A]) + G_dW(rho~)) V^T`. The adjoint vector becomes a
/// Hermitian matrix `M` with `mu^T coords(X) = Re tr(M^H X)`, so every
/// component reduces to contractions against a few matrices built once.
fn thermal_dissipator_gradient(rates: &ThermalRates, mu: &[f64], x: &[f64], gamma0: f64, temperature: f64) -> Vec<f64> {
    let n = rates.eigenvalues.len();
    let v = &rates.eigenvectors;
    let w = &rates.w;
    let omega = &rates.eigenvalues;
    let vc = linalg::to_complex(v);
    let vt = Mat::from_fn(n, n, |i, j| vc[(j, i)]);

    // the normalization row does not depend on the energies
    let mut mu_hat = mu.to_vec();
    mu_hat[Liouvillian::NORMALIZATION_ROW] = 0.0;
    let m_site = Mat::from_fn(n, n, |i, j| {
        if i == j {
            c64::new(mu_hat[vec_index(i, i, n)], 0.0)
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            let z = c64::new(0.5 * mu_hat[vec_index(a, b, n)], 0.5 * mu_hat[vec_index(b, a, n)]);
            if i < j {
                z
            } else {
                z.conj()
            }
        }
    });
    let m = &(&vt * &m_site) * &vc;
    let rho = &(&vt * &rho_from_coords(x, n)) * &vc;

    let out = rates.out_rates();
    let apply_g = |z: &linalg::CMat| {
        Mat::from_fn(n, n, |p, q| {
            let mut value = z[(p, q)] * (-0.5 * (out[p] + out[q]));
            if p == q {
                value += c64::new((0..n).filter(|&a| a != p).map(|a| w[(a, p)] * z[(a, a)].re).sum::<f64>(), 0.0);
            }
            value
        })
    };
    let g = apply_g(&rho);
    // adjoint of G_W applied to M
    let n2 = Mat::from_fn(n, n, |p, q| {
        let mut value = m[(p, q)] * (-0.5 * (out[p] + out[q]));
        if p == q {
            value += c64::new((0..n).filter(|&b| b != p).map(|b| w[(p, b)] * m[(b, b)].re).sum::<f64>(), 0.0);
        }
        value
    });
    // tr(A C) collects the eigenvector-rotation terms
    let c = &(&g * &m) - &(&m * &g) + &(&n2 * &rho) - &(&rho * &n2);

    let r: Vec<f64> = (0..n)
        .map(|a| (0..n).map(|y| (m[(a, y)].conj() * rho[(a, y)]).re).sum())
        .collect();
    let e = Mat::from_fn(n, n, |a, b| m[(b, b)].re * rho[(a, a)].re - r[a]);
    let slope = Mat::from_fn(n, n, |a, b| {
        if a == b {
            0.0
        } else {
            liouvillian::spectral_factor_slope(omega[a] - omega[b], gamma0, temperature)
        }
    });

    let mut grad = vec![0.0; n];
    let mut a_k = Mat::<f64>::zeros(n, n);
    for (k, gk) in grad.iter_mut().enumerate() {
        for px in 0..n {
            for py in 0..n {
                let gap = omega[py] - omega[px];
                a_k[(px, py)] = if px != py && gap.abs() > DEGENERACY_TOL {
                    v[(k, px)] * v[(k, py)] / gap
                } else {
                    0.0
                };
            }
        }
        let mut total = 0.0;
        for px in 0..n {
            for py in 0..n {
                total += a_k[(px, py)] * c[(py, px)].re;
            }
        }
        let dv = v * &a_k;
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let d_overlap: f64 = (0..n)
                    .map(|s| 2.0 * v[(s, a)] * v[(s, b)] * (v[(s, b)] * dv[(s, a)] + v[(s, a)] * dv[(s, b)]))
                    .sum();
                let d_factor = slope[(a, b)] * (v[(k, a)] * v[(k, a)] - v[(k, b)] * v[(k, b)]);
                let d_rate = d_factor * rates.overlap[(a, b)] + rates.s[(a, b)] * d_overlap;
                total += d_rate * e[(a, b)];
            }
        }
        *gk = -total;
    }
    grad
}

/// Flux and adjoint gradient for a single chain.
pub fn grad_flux_adjoint(spec: &ChainSpec, model: &EnvironmentModel) -> Result<FluxGradient> {
    FluxObjective::new(spec, *model)?.flux_and_gradient(&spec.energies)
}

/// Flux and central-difference gradient of the full assemble-and-solve pipeline.
pub fn grad_flux_fd(spec: &ChainSpec, model: &EnvironmentModel, step: f64) -> Result<FluxGradient> {
    FluxObjective::with_method(spec, *model, GradientMethod::CentralFd { step })?.flux_and_gradient(&spec.energies)
}

/// Real coordinate matrix of `-i[P_k, .]`, used to cross-check the energy terms.
#[cfg(test)]
fn projector_commutator_coords(k: usize, n: usize) -> Mat<f64> {
    use faer::c64;
    let mut p = Mat::<c64>::zeros(n, n);
    p[(k, k)] = c64::new(1.0, 0.0);
    linalg::realify_action(n, |rho| (&p * rho - rho * &p) * faer::Scale(-linalg::I))
}
