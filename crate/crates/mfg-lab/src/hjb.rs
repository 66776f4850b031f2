//! Backward-in-time solver for -∂t u - νΔu + H(x, Du) = g(t,x), u(T,·) = ū,
//! valid for every ν ≥ 0.
//!
//! Diffusion is treated implicitly (periodic tridiagonal factor per axis), so
//! pushing ν → 0 on a fixed grid costs nothing in stability; the Hamiltonian
//! is treated explicitly with the Godunov numerical Hamiltonian for convex H
//! isotropic in p: per axis the upwind gradient magnitude is
//! max{(D⁻u)⁺, (-D⁺u)⁺}. Under the advective CFL condition the ν = 0 update
//! is monotone (nondecreasing in every neighboring nodal value), the standard
//! sufficient condition for convergence to the viscosity solution.

use crate::diffusion::DiffusionStep;
use crate::grid::{ScalarField, TimeGrid, TorusGrid, VectorField};
use crate::model::HamiltonianSpec;
use crate::SolveError;

#[derive(Debug, Clone, Copy)]
pub struct HjbOptions {
    /// Fraction of the monotonicity-limit time step actually allowed.
    pub cfl_safety: f64,
    /// Optional a-priori bound on |Du| used for an upfront CFL feasibility
    /// check before marching.
    pub max_grad_clip: Option<f64>,
}

impl Default for HjbOptions {
    fn default() -> Self {
        Self {
            cfl_safety: 0.4,
            max_grad_clip: None,
        }
    }
}

impl HjbOptions {
    fn validate(&self) -> Result<(), SolveError> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(SolveError::BadInput(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        Ok(())
    }
}

/// Reads a source slice for time index k from a field that is either
/// time-independent (one slice) or full space-time.
#[inline]
pub(crate) fn source_slice<'a>(source: &'a ScalarField, k: usize) -> &'a [f64] {
    if source.num_slices() == 1 {
        source.slice(0)
    } else {
        source.slice(k)
    }
}

pub fn solve_hjb(
    nu: f64,
    ham: &HamiltonianSpec,
    source: &ScalarField,
    terminal: &[f64],
    grid: TorusGrid,
    time: &TimeGrid,
    opts: &HjbOptions,
) -> Result<ScalarField, SolveError> {
    if source.grid() != grid || (source.num_slices() != 1 && source.num_slices() != time.slices()) {
        return Err(SolveError::BadInput(
            "source must live on the solve grid with 1 or nt+1 slices".into(),
        ));
    }
    let mut buf = vec![0.0; grid.node_count()];
    solve_hjb_with(
        nu,
        ham,
        |k, out: &mut [f64]| {
            out.copy_from_slice(source_slice(source, k));
        },
        terminal,
        grid,
        time,
        opts,
        &mut buf,
    )
}

/// Same solver with the source produced slice-by-slice; avoids materializing
/// large derived source fields.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_hjb_with(
    nu: f64,
    ham: &HamiltonianSpec,
    mut fill_source: impl FnMut(usize, &mut [f64]),
    terminal: &[f64],
    grid: TorusGrid,
    time: &TimeGrid,
    opts: &HjbOptions,
    src_buf: &mut [f64],
) -> Result<ScalarField, SolveError> {
    opts.validate()?;
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(SolveError::BadInput(format!("viscosity must be >= 0, got {nu}")));
    }
    if terminal.len() != grid.node_count() {
        return Err(SolveError::BadInput("terminal data has wrong length".into()));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::BadInput("terminal data must be finite".into()));
    }
    let dt = time.dt();
    let dx = grid.dx();
    let dim = grid.d() as f64;
    if let Some(clip) = opts.max_grad_clip {
        let mut worst: f64 = 0.0;
        for idx in 0..grid.node_count() {
            worst = worst.max(ham.grad_mag(idx, clip));
        }
        if dt * worst * dim / dx > opts.cfl_safety {
            return Err(SolveError::CflEstimate {
                dt,
                admissible_dt: opts.cfl_safety * dx / (dim * worst),
            });
        }
    }
    let diffusion = (nu > 0.0).then(|| DiffusionStep::new(grid, nu * dt));
    let mut scratch = Vec::new();

    let nt = time.nt();
    let mut u = ScalarField::zeros(grid, time.slices());
    u.slice_mut(nt).copy_from_slice(terminal);
    let mut rhs = vec![0.0; grid.node_count()];
    for k in (0..nt).rev() {
        fill_source(k + 1, src_buf);
        let (max_grad, max_abs) = {
            let prev = u.slice(k + 1);
            godunov_step(grid, ham, prev, src_buf, dt, &mut rhs)
        };
        if !max_abs.is_finite() {
            return Err(SolveError::Diverged { step: nt - k });
        }
        if dt * max_grad * dim / dx > opts.cfl_safety {
            return Err(SolveError::CflViolation {
                step: nt - k,
                dt,
                admissible_dt: opts.cfl_safety * dx / (dim * max_grad),
            });
        }
        if let Some(d) = &diffusion {
            d.apply(&mut rhs, &mut scratch);
        }
        u.slice_mut(k).copy_from_slice(&rhs);
    }
    Ok(u)
}

/// One explicit Godunov step: out = prev + dt (src - H(x, upwind |Du|)).
///
/// Returns the largest nodal |DpH| (for the CFL check) and the largest |out|.
fn godunov_step(
    grid: TorusGrid,
    ham: &HamiltonianSpec,
    prev: &[f64],
    src: &[f64],
    dt: f64,
    out: &mut [f64],
) -> (f64, f64) {
    let n = grid.n();
    let inv_dx = 1.0 / grid.dx();
    let mut max_grad: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    if grid.d() == 1 {
        for i in 0..n {
            let im = if i == 0 { n - 1 } else { i - 1 };
            let ip = if i + 1 == n { 0 } else { i + 1 };
            let dm = (prev[i] - prev[im]) * inv_dx;
            let dp = (prev[ip] - prev[i]) * inv_dx;
            let s = dm.max(-dp).max(0.0);
            max_grad = max_grad.max(ham.grad_mag(i, s));
            let v = prev[i] + dt * (src[i] - ham.value_mag(i, s));
            max_abs = max_abs.max(v.abs());
            out[i] = v;
        }
    } else {
        for iy in 0..n {
            let row = iy * n;
            let row_up = if iy + 1 == n { 0 } else { (iy + 1) * n };
            let row_dn = if iy == 0 { (n - 1) * n } else { (iy - 1) * n };
            for ix in 0..n {
                let idx = row + ix;
                let ixm = if ix == 0 { row + n - 1 } else { idx - 1 };
                let ixp = if ix + 1 == n { row } else { idx + 1 };
                let dmx = (prev[idx] - prev[ixm]) * inv_dx;
                let dpx = (prev[ixp] - prev[idx]) * inv_dx;
                let sx = dmx.max(-dpx).max(0.0);
                let dmy = (prev[idx] - prev[row_dn + ix]) * inv_dx;
                let dpy = (prev[row_up + ix] - prev[idx]) * inv_dx;
                let sy = dmy.max(-dpy).max(0.0);
                let s = (sx * sx + sy * sy).sqrt();
                max_grad = max_grad.max(ham.grad_mag(idx, s));
                let v = prev[idx] + dt * (src[idx] - ham.value_mag(idx, s));
                max_abs = max_abs.max(v.abs());
                out[idx] = v;
            }
        }
    }
    (max_grad, max_abs)
}

/// Backward solver for the frozen-policy linear equation
/// -∂t u - νΔu + b·Du = g, u(T,·) = ū, with first-order upwinding on b·Du.
pub fn solve_linear_hjb(
    nu: f64,
    drift: &VectorField,
    source: &ScalarField,
    terminal: &[f64],
    grid: TorusGrid,
    time: &TimeGrid,
    opts: &HjbOptions,
) -> Result<ScalarField, SolveError> {
    opts.validate()?;
    if drift.grid() != grid || drift.num_slices() != time.slices() {
        return Err(SolveError::BadInput("drift must cover every time slice".into()));
    }
    if source.grid() != grid || (source.num_slices() != 1 && source.num_slices() != time.slices()) {
        return Err(SolveError::BadInput("source shape mismatch".into()));
    }
    if terminal.len() != grid.node_count() {
        return Err(SolveError::BadInput("terminal data has wrong length".into()));
    }
    let dt = time.dt();
    let dx = grid.dx();
    let diffusion = (nu > 0.0).then(|| DiffusionStep::new(grid, nu * dt));
    let mut scratch = Vec::new();

    let nt = time.nt();
    let mut u = ScalarField::zeros(grid, time.slices());
    u.slice_mut(nt).copy_from_slice(terminal);
    let mut rhs = vec![0.0; grid.node_count()];
    for k in (0..nt).rev() {
        let src = source_slice(source, k + 1);
        let mut max_speed: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        {
            let prev = u.slice(k + 1);
            let inv_dx = 1.0 / dx;
            for idx in 0..grid.node_count() {
                let mut adv = 0.0;
                let mut speed = 0.0;
                for axis in 0..grid.d() {
                    let b = drift.component(axis).slice(k + 1)[idx];
                    let dm = (prev[idx] - prev[grid.shift(idx, axis, -1)]) * inv_dx;
                    let dp = (prev[grid.shift(idx, axis, 1)] - prev[idx]) * inv_dx;
                    adv += b.max(0.0) * dm + b.min(0.0) * dp;
                    speed += b.abs();
                }
                max_speed = max_speed.max(speed);
                let v = prev[idx] + dt * (src[idx] - adv);
                max_abs = max_abs.max(v.abs());
                rhs[idx] = v;
            }
        }
        if !max_abs.is_finite() {
            return Err(SolveError::Diverged { step: nt - k });
        }
        if dt * max_speed / dx > opts.cfl_safety {
            return Err(SolveError::CflViolation {
                step: nt - k,
                dt,
                admissible_dt: opts.cfl_safety * dx / max_speed,
            });
        }
        if let Some(d) = &diffusion {
            d.apply(&mut rhs, &mut scratch);
        }
        u.slice_mut(k).copy_from_slice(&rhs);
    }
    Ok(u)
}
