//! Direct dense solve for the unique trace-one fixed point of a Liouvillian,
//! with residual, conditioning and positivity checks.

use faer::{c64, Mat};
use serde::Serialize;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::linalg::{self, rho_from_coords, CMat, DenseLu};
use crate::liouvillian::{assemble, EnvironmentModel, Liouvillian, ThermalRates};

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Accept when `||M~ vec(rho) - u||_inf <= residual_tol * ||M~||_inf`.
    pub residual_tol: f64,
    /// Reject when the estimated 1-norm condition number exceeds this.
    pub condition_limit: f64,
    /// Eigenvalues of `rho` below `-positivity_tol` raise a warning.
    pub positivity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            residual_tol: 1e-10,
            condition_limit: 1e14,
            positivity_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    /// `||M~ vec(rho) - u||_inf`.
    pub residual: f64,
    pub relative_residual: f64,
    pub condition_estimate: f64,
    /// `|trace(rho) - 1|`.
    pub trace_error: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: CMat,
    /// Extracted current `gamma_leak * rho_NN`.
    pub flux: f64,
    pub populations: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl SteadyState {
    /// `|rho_nm|` for every pair of sites.
    pub fn coherence_magnitudes(&self) -> Mat<f64> {
        let n = self.rho.nrows();
        Mat::from_fn(n, n, |i, j| self.rho[(i, j)].norm())
    }
}

/// `gamma_leak * Re rho_NN`.
pub fn flux(rho: &CMat, gamma_leak: f64) -> f64 {
    let n = rho.nrows();
    gamma_leak * rho[(n - 1, n - 1)].re
}

pub fn solve_steady_state(l: &Liouvillian) -> Result<SteadyState> {
    solve_steady_state_with(l, &SolverOptions::default())
}

pub fn solve_steady_state_with(l: &Liouvillian, opts: &SolverOptions) -> Result<SteadyState> {
    let n = l.n_sites();
    let real = linalg::realify(l.modified(), n);
    let (coords, condition) = solve_real_system(&real, n, opts)?;
    let rho = rho_from_coords(&coords, n);

    let image = linalg::matvec(l.modified(), &linalg::vectorize(&rho));
    let residual = image
        .iter()
        .zip(l.rhs())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let scale = linalg::inf_norm(l.modified());
    let relative_residual = residual / scale.max(f64::MIN_POSITIVE);
    if relative_residual > opts.residual_tol {
        return Err(Error::Solver {
            reason: format!("residual {residual:.3e} exceeds {:.1e} x ||M||", opts.residual_tol),
            context: format!("N = {n}, condition estimate {condition:.3e}"),
        });
    }

    let trace: c64 = (0..n).map(|k| rho[(k, k)]).fold(c64::new(0.0, 0.0), |a, b| a + b);
    let mut diagnostics = Diagnostics {
        residual,
        relative_residual,
        condition_estimate: condition,
        trace_error: (trace - c64::new(1.0, 0.0)).norm(),
        hermiticity_defect: linalg::hermiticity_defect(&rho),
        min_eigenvalue: 0.0,
        warnings: Vec::new(),
    };
    diagnostics.min_eigenvalue = linalg::hermitian_eigenvalues(&rho)?.first().copied().unwrap_or(0.0);
    if diagnostics.min_eigenvalue < -opts.positivity_tol {
        let msg = format!("steady state has negative eigenvalue {:.3e}", diagnostics.min_eigenvalue);
        log::warn!("{msg}");
        diagnostics.warnings.push(msg);
    }

    let populations = (0..n).map(|k| rho[(k, k)].re).collect();
    Ok(SteadyState {
        flux: flux(&rho, l.gamma_leak()),
        rho,
        populations,
        diagnostics,
    })
}

/// Solves the real coordinate system `R x = e_0` and returns `x` together with
/// the estimated 1-norm condition number of `R`.
pub(crate) fn solve_real_system(real: &Mat<f64>, n: usize, opts: &SolverOptions) -> Result<(Vec<f64>, f64)> {
    let lu = DenseLu::factor(real)?;
    let (coords, condition) = solve_with_factor(&lu, real, n)?;
    check_condition(condition, n, opts)?;
    Ok((coords, condition))
}

pub(crate) fn solve_with_factor(lu: &DenseLu, real: &Mat<f64>, n: usize) -> Result<(Vec<f64>, f64)> {
    let dim = n * n;
    let (lo, hi) = lu.pivot_range();
    if !(lo > 0.0) || !lo.is_finite() {
        return Err(Error::Solver {
            reason: "modified Liouvillian is singular".into(),
            context: format!("N = {n}, pivot range [{lo:.3e}, {hi:.3e}]"),
        });
    }
    let mut rhs = vec![0.0; dim];
    rhs[Liouvillian::NORMALIZATION_ROW] = 1.0;
    let coords = lu.solve(&rhs);
    let condition = linalg::norm1(real) * lu.inverse_norm1_estimate();
    if coords.iter().any(|v| !v.is_finite()) || !condition.is_finite() {
        return Err(Error::Solver {
            reason: "non-finite steady state".into(),
            context: format!("N = {n}"),
        });
    }
    Ok((coords, condition))
}

pub(crate) fn check_condition(condition: f64, n: usize, opts: &SolverOptions) -> Result<()> {
    if condition > opts.condition_limit {
        return Err(Error::Solver {
            reason: format!("ill-conditioned system (condition estimate {condition:.3e})"),
            context: format!("N = {n}; the steady state is not unique or the leak is too weak"),
        });
    }
    Ok(())
}

/// Convenience wrapper: assemble and solve. Also returns the thermal rates
/// when the environment is thermal.
pub fn steady_state(spec: &ChainSpec, model: &EnvironmentModel) -> Result<(SteadyState, Option<ThermalRates>)> {
    let (l, rates) = assemble(spec, model)?;
    Ok((solve_steady_state(&l)?, rates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_hamiltonian, Tunneling};
    use crate::liouvillian::assemble_model_i;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn nn(energies: Vec<f64>, j: f64, gamma_leak: f64) -> ChainSpec {
        ChainSpec::new(energies, Tunneling::nearest_neighbor(j), gamma_leak).unwrap()
    }

    #[test]
    fn coherent_nn_three_site() {
        let (ss, _) = steady_state(&nn(vec![0.0; 3], 0.2, 0.1), &EnvironmentModel::Coherent).unwrap();
        assert_relative_eq!(ss.flux, 0.032, epsilon = 1e-8);
        for (p, e) in ss.populations.iter().zip([0.34, 0.34, 0.32]) {
            assert_relative_eq!(*p, e, epsilon = 1e-8);
        }
        assert!(ss.diagnostics.relative_residual < 1e-12);
        assert!(ss.diagnostics.hermiticity_defect == 0.0);
        assert!(ss.diagnostics.trace_error < 1e-13);
        assert!(ss.diagnostics.min_eigenvalue > -1e-12);
    }

    #[test]
    fn coherent_nnn_optimum() {
        let spec = ChainSpec::new(vec![0.0, -0.2, -0.05], Tunneling::next_nearest_neighbor(0.2, 0.1), 0.1).unwrap();
        let (ss, _) = steady_state(&spec, &EnvironmentModel::Coherent).unwrap();
        assert_relative_eq!(ss.flux, 0.1 / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn two_site_dephasing_hand_oracle() {
        // N=2, eps = 0, coupling J, dephasing G, leak g. Coherences decay at
        // k = G + g/2, so rho_12 = -i J (p2 - p1) / k, and
        // d p2/dt = 2 J Im rho_12 - g p2 = 0 gives p2 = 2 J^2 / (g k + 4 J^2).
        let (j, g_deph, g) = (0.2, 0.1, 0.1);
        let spec = nn(vec![0.0, 0.0], j, g);
        let l = assemble_model_i(&build_hamiltonian(&spec).unwrap(), g_deph, g).unwrap();
        let ss = solve_steady_state(&l).unwrap();
        let k = g_deph + g / 2.0;
        let p2 = 2.0 * j * j / (g * k + 4.0 * j * j);
        assert_relative_eq!(ss.populations[1], p2, epsilon = 1e-12);
        assert_relative_eq!(ss.flux, g * p2, epsilon = 1e-12);
        assert!(ss.rho[(0, 1)].re.abs() < 1e-14);
    }

    #[test]
    fn no_leak_flat_chain_is_maximally_mixed() {
        // With dephasing and no leak the fixed point is I/N.
        let spec = nn(vec![0.0; 4], 0.2, 0.0);
        let (ss, _) = steady_state(&spec, &EnvironmentModel::LocalDephasing { gamma: 0.1 }).unwrap();
        for p in &ss.populations {
            assert_relative_eq!(*p, 0.25, epsilon = 1e-10);
        }
        assert_eq!(ss.flux, 0.0);
    }

    #[test]
    fn decoupled_chain_is_rejected() {
        // J = 0 leaves every site dark: the fixed point is not unique.
        let spec = ChainSpec::new(vec![0.0; 3], Tunneling::Explicit { couplings: vec![] }, 0.1).unwrap();
        let err = steady_state(&spec, &EnvironmentModel::Coherent).unwrap_err();
        assert!(matches!(err, Error::Solver { .. }), "{err}");
    }

    #[test]
    fn gibbs_state_is_thermal_fixed_point() {
        let spec = ChainSpec::new(vec![0.0, 0.13, -0.07, 0.05], Tunneling::PowerLaw { j_max: 0.2, alpha: 1.0 }, 0.0).unwrap();
        let temperature = 0.2;
        let (ss, rates) = steady_state(&spec, &EnvironmentModel::Thermal { gamma0: 0.1, temperature }).unwrap();
        let rates = rates.unwrap();
        let z: f64 = rates.eigenvalues.iter().map(|w| (-w / temperature).exp()).sum();
        let v = &rates.eigenvectors;
        for i in 0..4 {
            for j in 0..4 {
                let gibbs: f64 = (0..4)
                    .map(|a| v[(i, a)] * v[(j, a)] * (-rates.eigenvalues[a] / temperature).exp() / z)
                    .sum();
                assert!((ss.rho[(i, j)] - c64::new(gibbs, 0.0)).norm() < 1e-10);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn steady_state_invariants(
            energies in prop::collection::vec(-0.5f64..0.5, 3..6),
            alpha in 0.5f64..3.0,
            model_kind in 0usize..3,
        ) {
            let model = [
                EnvironmentModel::Coherent,
                EnvironmentModel::LocalDephasing { gamma: 0.1 },
                EnvironmentModel::Thermal { gamma0: 0.1, temperature: 0.2 },
            ][model_kind];
            let spec = ChainSpec::new(energies.clone(), Tunneling::PowerLaw { j_max: 0.2, alpha }, 0.1).unwrap();
            let (ss, _) = steady_state(&spec, &model).unwrap();
            let n = energies.len();
            prop_assert!(ss.diagnostics.trace_error < 1e-12);
            prop_assert!(ss.diagnostics.min_eigenvalue > -1e-9);
            prop_assert!(ss.flux >= -1e-12 && ss.flux <= 0.1 + 1e-12);
            let l = assemble(&spec, &model).unwrap().0;
            let d = linalg::matvec(l.matrix(), &linalg::vectorize(&ss.rho));
            for v in d {
                prop_assert!(v.norm() < 1e-10);
            }
            // a uniform energy shift changes nothing
            let shifted = spec.with_energies(energies.iter().map(|e| e + 0.37).collect()).unwrap();
            let (ss2, _) = steady_state(&shifted, &model).unwrap();
            prop_assert!((ss.flux - ss2.flux).abs() < 1e-10);
            prop_assert!((0.1 * ss.populations[n - 1] - ss.flux).abs() < 1e-15);
        }
    }
}
