//! Discrete evaluation of the two dual functionals whose sum vanishes
//! exactly at the MFG solution, the coercivity lower bounds that turn the
//! duality gap into squared distances, and the mollified dual candidates
//! used by the rate argument.
//!
//! The primal functional over density/momentum pairs (m, w):
//!
//! ```text
//! B(m,w) = ∬ m H*(x, -w/m) + F(x,m) dx dt + ∫ ū m(T) dx,
//! ```
//!
//! with the usual convention that a cell with m = 0 contributes +∞ if w ≠ 0
//! there and 0 otherwise. The dual functional over value/multiplier pairs:
//!
//! ```text
//! A(u,α) = ∬ F*(x, α) dx dt - ∫ u(0) m̄ dx.
//! ```

use crate::fixpoint::{MfgProblem, MfgSolution};
use crate::grid::{periodic_convolve, ScalarField, TimeGrid, TorusGrid, VectorField};
use crate::model::{gaussian_kernel, HamiltonianSpec, LocalCouplingSpec};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum VariationalError {
    #[error("mollifier radius {eps:.3e} is unresolvable on a grid with dx = {dx:.3e}")]
    MollifierUnresolvable { eps: f64, dx: f64 },
    #[error("the hypothesis ν ε^{{-β}} <= 1 fails (got {0:.3e})")]
    HypothesisViolated(f64),
    #[error("viscosity must lie in (0, 1], got {0}")]
    BadViscosity(f64),
    #[error("beta must be >= 1, got {0}")]
    BadBeta(f64),
    #[error("the duality gap needs a local coupling")]
    NonlocalCoupling,
    #[error("field shapes do not match")]
    Shape,
}

/// Density/momentum pair; w = -m DpH(x, Du) at the optimum.
#[derive(Debug, Clone)]
pub struct PrimalPoint {
    pub m: ScalarField,
    pub w: VectorField,
}

/// Value/multiplier pair with the α ≥ 0 representative.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub u: ScalarField,
    pub alpha: ScalarField,
}

/// Central-difference gradient of one slice along one axis.
pub(crate) fn central_diff_slice(grid: TorusGrid, values: &[f64], axis: usize, out: &mut [f64]) {
    let inv_2dx = 0.5 / grid.dx();
    for (idx, o) in out.iter_mut().enumerate() {
        let up = values[grid.shift(idx, axis, 1)];
        let dn = values[grid.shift(idx, axis, -1)];
        *o = (up - dn) * inv_2dx;
    }
}

fn trapezoid_weight(k: usize, nt: usize) -> f64 {
    if k == 0 || k == nt {
        0.5
    } else {
        1.0
    }
}

/// B(m, w): +∞ as soon as some cell carries momentum without mass.
pub fn eval_b(
    point: &PrimalPoint,
    coupling: &LocalCouplingSpec,
    ham: &HamiltonianSpec,
    u_bar: &[f64],
    time: &TimeGrid,
) -> f64 {
    let grid = point.m.grid();
    let nt = time.nt();
    assert_eq!(point.m.num_slices(), time.slices());
    assert_eq!(point.w.num_slices(), time.slices());
    let mut acc = 0.0;
    for k in 0..=nt {
        let w_t = trapezoid_weight(k, nt);
        let m_s = point.m.slice(k);
        let mut slice_sum = 0.0;
        for idx in 0..grid.node_count() {
            let m = m_s[idx];
            if m < 0.0 {
                return f64::INFINITY;
            }
            let wv = [
                point.w.component(0).slice(k)[idx],
                if grid.d() == 2 {
                    point.w.component(1).slice(k)[idx]
                } else {
                    0.0
                },
            ];
            if m == 0.0 {
                if wv[0] != 0.0 || wv[1] != 0.0 {
                    return f64::INFINITY;
                }
                // m H*(x, -w/m) := 0 and F(x, 0) = 0
                continue;
            }
            let xi = [-wv[0] / m, -wv[1] / m];
            slice_sum += m * ham.conjugate(idx, &xi) + coupling.antiderivative(idx, m);
        }
        acc += w_t * slice_sum;
        if !acc.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut terminal = 0.0;
    for (ub, mv) in u_bar.iter().zip(point.m.slice(nt)) {
        terminal += ub * mv;
    }
    acc * grid.cell_volume() * time.dt() + terminal * grid.cell_volume()
}

/// A(u, α).
pub fn eval_a(
    point: &DualPoint,
    coupling: &LocalCouplingSpec,
    m_bar: &[f64],
    time: &TimeGrid,
) -> f64 {
    let grid = point.u.grid();
    let nt = time.nt();
    assert_eq!(point.alpha.num_slices(), time.slices());
    let mut acc = 0.0;
    for k in 0..=nt {
        let w_t = trapezoid_weight(k, nt);
        let a_s = point.alpha.slice(k);
        let mut slice_sum = 0.0;
        for (idx, &a) in a_s.iter().enumerate() {
            slice_sum += coupling.conjugate(idx, a);
        }
        acc += w_t * slice_sum;
    }
    let mut pairing = 0.0;
    for (uv, mv) in point.u.slice(0).iter().zip(m_bar) {
        pairing += uv * mv;
    }
    acc * grid.cell_volume() * time.dt() - pairing * grid.cell_volume()
}

/// Builds the optimal-form primal point from a solved pair:
/// w = -m DpH(x, Du) with central-difference gradients.
pub fn primal_from_solution(sol: &MfgSolution, ham: &HamiltonianSpec) -> PrimalPoint {
    let grid = sol.m.grid();
    let slices = sol.m.num_slices();
    let mut comps: Vec<ScalarField> = (0..grid.d())
        .map(|_| ScalarField::zeros(grid, slices))
        .collect();
    let mut grads: Vec<Vec<f64>> = (0..grid.d())
        .map(|_| vec![0.0; grid.node_count()])
        .collect();
    for k in 0..slices {
        for axis in 0..grid.d() {
            central_diff_slice(grid, sol.u.slice(k), axis, &mut grads[axis]);
        }
        let m_s = sol.m.slice(k);
        for idx in 0..grid.node_count() {
            let p = [
                grads[0][idx],
                if grid.d() == 2 { grads[1][idx] } else { 0.0 },
            ];
            let b = ham.grad(idx, &p);
            let m = m_s[idx].max(0.0);
            for (axis, c) in comps.iter_mut().enumerate() {
                c.slice_mut(k)[idx] = -m * b[axis];
            }
        }
    }
    PrimalPoint {
        m: sol.m.clone(),
        w: VectorField::new(comps),
    }
}

/// Builds the optimal-form dual point: α = f(·, m) ≥ 0.
pub fn dual_from_solution(sol: &MfgSolution, coupling: &crate::model::Coupling) -> DualPoint {
    let grid = sol.m.grid();
    let slices = sol.m.num_slices();
    let mut alpha = ScalarField::zeros(grid, slices);
    for k in 0..slices {
        let f = coupling.f_slice(sol.m.slice(k));
        let dst = alpha.slice_mut(k);
        for (d, v) in dst.iter_mut().zip(f) {
            *d = v.max(0.0);
        }
    }
    DualPoint {
        u: sol.u.clone(),
        alpha,
    }
}

/// A(u_ν, f(·,m_ν)) + B(m_ν, -m_ν DpH(·,Du_ν)); zero at the exact solution,
/// and the discrete value shrinks under grid refinement.
pub fn duality_gap(sol: &MfgSolution, problem: &MfgProblem) -> Result<f64, VariationalError> {
    let coupling = problem
        .coupling
        .as_local()
        .ok_or(VariationalError::NonlocalCoupling)?;
    let primal = primal_from_solution(sol, &problem.hamiltonian);
    let dual = dual_from_solution(sol, &problem.coupling);
    let u_bar = problem.terminal.evaluate(sol.m.slice(problem.time.nt()));
    let b = eval_b(&primal, coupling, &problem.hamiltonian, &u_bar, &problem.time);
    let a = eval_a(&dual, coupling, &problem.m_bar, &problem.time);
    Ok(a + b)
}

/// The duality gap next to both coercivity quadratic forms; the gap bounds
/// each form from above (up to quadrature) by the coercivity conditions.
#[derive(Debug, Clone, Copy)]
pub struct CoercivityBounds {
    pub gap: f64,
    /// c0 ∬ m |J1(x,Du) - J1*(x,-w/m)|² dx dt
    pub j1_form: f64,
    /// c0 ∬ |J2(x,m) - J2*(x,α)|² dx dt
    pub j2_form: f64,
}

pub fn coercivity_gap_bounds(
    dual: &DualPoint,
    primal: &PrimalPoint,
    coupling: &LocalCouplingSpec,
    ham: &HamiltonianSpec,
    m_bar: &[f64],
    u_bar: &[f64],
    time: &TimeGrid,
) -> CoercivityBounds {
    let grid = primal.m.grid();
    let nt = time.nt();
    let gap = eval_a(dual, coupling, m_bar, time) + eval_b(primal, coupling, ham, u_bar, time);
    let mut grads: Vec<Vec<f64>> = (0..grid.d())
        .map(|_| vec![0.0; grid.node_count()])
        .collect();
    let mut j1_acc = 0.0;
    let mut j2_acc = 0.0;
    for k in 0..=nt {
        let w_t = trapezoid_weight(k, nt);
        for axis in 0..grid.d() {
            central_diff_slice(grid, dual.u.slice(k), axis, &mut grads[axis]);
        }
        let m_s = primal.m.slice(k);
        let a_s = dual.alpha.slice(k);
        let mut j1_sum = 0.0;
        let mut j2_sum = 0.0;
        for idx in 0..grid.node_count() {
            let m = m_s[idx].max(0.0);
            let du = [
                grads[0][idx],
                if grid.d() == 2 { grads[1][idx] } else { 0.0 },
            ];
            if m > 0.0 {
                let wv = [
                    primal.w.component(0).slice(k)[idx],
                    if grid.d() == 2 {
                        primal.w.component(1).slice(k)[idx]
                    } else {
                        0.0
                    },
                ];
                let xi = [-wv[0] / m, -wv[1] / m];
                let j1 = ham.j1(idx, &du);
                let j1s = ham.j1_star(idx, &xi);
                let diff0 = j1[0] - j1s[0];
                let diff1 = j1[1] - j1s[1];
                j1_sum += m * (diff0 * diff0 + diff1 * diff1);
            }
            let dj2 = coupling.j2(idx, m) - coupling.j2_star(idx, a_s[idx].max(0.0));
            j2_sum += dj2 * dj2;
        }
        j1_acc += w_t * j1_sum;
        j2_acc += w_t * j2_sum;
    }
    let vol_dt = grid.cell_volume() * time.dt();
    CoercivityBounds {
        gap,
        j1_form: ham.c0() * j1_acc * vol_dt,
        j2_form: coupling.c0() * j2_acc * vol_dt,
    }
}

/// Grid-computable C¹ norm surrogate: max |ū| + max |D⁺ū|.
pub fn c1_norm(grid: TorusGrid, u_bar: &[f64]) -> f64 {
    let dx = grid.dx();
    let mut sup: f64 = 0.0;
    let mut lip: f64 = 0.0;
    for idx in 0..grid.node_count() {
        sup = sup.max(u_bar[idx].abs());
        for axis in 0..grid.d() {
            lip = lip.max(((u_bar[grid.shift(idx, axis, 1)] - u_bar[idx]) / dx).abs());
        }
    }
    sup + lip
}

/// Mollified dual candidate for viscosity ν: ε = ν^{1/(1+β)},
///
/// ```text
/// u_ε = φ_ε*u / (1+C1 ε) - (1+C1) ε ‖ū‖_C1 + C2 ε (t - T),
/// α_ε = [φ_ε*α - ν Δ(φ_ε*u)] / (1+C1 ε),  clamped at 0,
/// ```
///
/// with C1 = C2 = 0 when H does not depend on x. The discrete mollifier is a
/// periodized Gaussian truncated to radius ε and renormalized.
pub fn mollify_dual(
    dual: &DualPoint,
    nu: f64,
    beta: f64,
    ham: &HamiltonianSpec,
    u_bar: &[f64],
    time: &TimeGrid,
) -> Result<DualPoint, VariationalError> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(VariationalError::BadViscosity(nu));
    }
    if !(beta >= 1.0) {
        return Err(VariationalError::BadBeta(beta));
    }
    let grid = dual.u.grid();
    let eps = nu.powf(1.0 / (1.0 + beta));
    if eps < grid.dx() {
        return Err(VariationalError::MollifierUnresolvable {
            eps,
            dx: grid.dx(),
        });
    }
    let kernel = gaussian_kernel(grid, eps / 3.0, Some(eps));
    let (c1, c2) = ham.regularity_constants();
    let scale = 1.0 / (1.0 + c1 * eps);
    let offset = (1.0 + c1) * eps * c1_norm(grid, u_bar);
    let slices = dual.u.num_slices();
    let mut u_eps = ScalarField::zeros(grid, slices);
    let mut alpha_eps = ScalarField::zeros(grid, slices);
    for k in 0..slices {
        let t_shift = c2 * eps * (time.time(k) - time.t_max());
        let u_conv = periodic_convolve(grid, dual.u.slice(k), kernel.slice(0));
        let u_conv_field = ScalarField::from_nodes(grid, u_conv.clone()).expect("finite");
        let lap = u_conv_field.laplacian();
        let a_conv = periodic_convolve(grid, dual.alpha.slice(k), kernel.slice(0));
        let u_dst = u_eps.slice_mut(k);
        for (idx, d) in u_dst.iter_mut().enumerate() {
            *d = u_conv[idx] * scale - offset + t_shift;
        }
        let a_dst = alpha_eps.slice_mut(k);
        for (idx, d) in a_dst.iter_mut().enumerate() {
            *d = ((a_conv[idx] - nu * lap.slice(0)[idx]) * scale).max(0.0);
        }
    }
    Ok(DualPoint {
        u: u_eps,
        alpha: alpha_eps,
    })
}

/// One evaluation of the mollified-candidate bound at viscosity ν:
/// A(u_ε, α_ε) ≤ A(u, α) + C (ν ε^{-β} + ε). `fitted_c` is the smallest
/// constant making the inequality hold at this ν (≤ 0 when mollification
/// already decreased A).
#[derive(Debug, Clone, Copy)]
pub struct Lemma44Report {
    pub eps: f64,
    pub lhs: f64,
    pub base: f64,
    pub budget: f64,
    pub fitted_c: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn lemma44_check(
    dual: &DualPoint,
    nu: f64,
    beta: f64,
    coupling: &LocalCouplingSpec,
    ham: &HamiltonianSpec,
    m_bar: &[f64],
    u_bar: &[f64],
    time: &TimeGrid,
) -> Result<Lemma44Report, VariationalError> {
    let eps = nu.powf(1.0 / (1.0 + beta));
    let hypothesis = nu * eps.powf(-beta);
    if hypothesis > 1.0 + 1e-12 {
        return Err(VariationalError::HypothesisViolated(hypothesis));
    }
    let mollified = mollify_dual(dual, nu, beta, ham, u_bar, time)?;
    let lhs = eval_a(&mollified, coupling, m_bar, time);
    let base = eval_a(dual, coupling, m_bar, time);
    let budget = nu * eps.powf(-beta) + eps;
    Ok(Lemma44Report {
        eps,
        lhs,
        base,
        budget,
        fitted_c: (lhs - base) / budget,
    })
}
