//! Forward-in-time conservative solver for
//! ∂t m - νΔm - ∇·(m b) = 0, m(0,·) = m̄, with drift b = DpH(x, Du).
//!
//! Written in flux form: the transported velocity is w = -b (the equation
//! carries +∇·(m b) on the left), face fluxes are upwinded
//! F_{i+1/2} = w⁺_{i+1/2} m_i + w⁻_{i+1/2} m_{i+1}, and diffusion is solved
//! implicitly. Flux form makes the discrete mass telescope exactly, which
//! every weighted norm downstream assumes; there is no positivity clamping —
//! a genuinely negative density signals a scheme bug and errors out.

use crate::diffusion::DiffusionStep;
use crate::grid::{integrate_space, ScalarField, TimeGrid, TorusGrid, VectorField};
use crate::SolveError;

#[derive(Debug, Clone, Copy)]
pub struct FpkOptions {
    pub cfl_safety: f64,
    /// Values in [-floor, 0) are clamped to zero when floor > 0. Default 0:
    /// no clamping, tiny negatives up to -1e-12 are tolerated as roundoff.
    pub positivity_floor: f64,
}

impl Default for FpkOptions {
    fn default() -> Self {
        Self {
            cfl_safety: 0.4,
            positivity_floor: 0.0,
        }
    }
}

impl FpkOptions {
    fn validate(&self) -> Result<(), SolveError> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(SolveError::BadInput(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if self.positivity_floor < 0.0 {
            return Err(SolveError::BadInput("positivity_floor must be >= 0".into()));
        }
        Ok(())
    }
}

/// Total discrete mass of one slice (= `integrate_space`).
pub fn mass(grid: TorusGrid, slice: &[f64]) -> f64 {
    integrate_space(grid, slice)
}

pub fn solve_fpk(
    nu: f64,
    drift: &VectorField,
    m0: &[f64],
    grid: TorusGrid,
    time: &TimeGrid,
    opts: &FpkOptions,
) -> Result<ScalarField, SolveError> {
    if drift.grid() != grid || drift.num_slices() != time.slices() {
        return Err(SolveError::BadInput(
            "drift must live on the solve grid with nt+1 slices".into(),
        ));
    }
    let d = grid.d();
    solve_fpk_with(
        nu,
        |k, out: &mut [Vec<f64>]| {
            for (axis, buf) in out.iter_mut().enumerate().take(d) {
                buf.copy_from_slice(drift.component(axis).slice(k));
            }
        },
        m0,
        grid,
        time,
        opts,
    )
}

/// Same solver with the drift produced slice-by-slice (avoids materializing
/// a full space-time vector field when the drift derives from u).
pub(crate) fn solve_fpk_with(
    nu: f64,
    mut fill_drift: impl FnMut(usize, &mut [Vec<f64>]),
    m0: &[f64],
    grid: TorusGrid,
    time: &TimeGrid,
    opts: &FpkOptions,
) -> Result<ScalarField, SolveError> {
    opts.validate()?;
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(SolveError::BadInput(format!("viscosity must be >= 0, got {nu}")));
    }
    if m0.len() != grid.node_count() {
        return Err(SolveError::BadInput("initial density has wrong length".into()));
    }
    if m0.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(SolveError::BadInput(
            "initial density must be finite and nonnegative".into(),
        ));
    }
    let dt = time.dt();
    let dx = grid.dx();
    let dim = grid.d() as f64;
    let nodes = grid.node_count();
    let diffusion = (nu > 0.0).then(|| DiffusionStep::new(grid, nu * dt));
    let mut scratch = Vec::new();

    let nt = time.nt();
    let mut m = ScalarField::zeros(grid, time.slices());
    m.slice_mut(0).copy_from_slice(m0);
    let mut drift_bufs: Vec<Vec<f64>> = (0..grid.d()).map(|_| vec![0.0; nodes]).collect();
    let mut next = vec![0.0; nodes];
    let mut flux = vec![0.0; nodes];
    for k in 0..nt {
        fill_drift(k, &mut drift_bufs);
        let max_speed = {
            let cur = m.slice(k);
            advect_step(grid, &drift_bufs, cur, dt, &mut next, &mut flux)
        };
        if dt * max_speed * dim / dx > opts.cfl_safety {
            return Err(SolveError::CflViolation {
                step: k + 1,
                dt,
                admissible_dt: opts.cfl_safety * dx / (dim * max_speed),
            });
        }
        if let Some(dstep) = &diffusion {
            dstep.apply(&mut next, &mut scratch);
        }
        let mut min_val = f64::INFINITY;
        let mut finite = true;
        for v in next.iter_mut() {
            if opts.positivity_floor > 0.0 && *v < 0.0 && *v >= -opts.positivity_floor {
                *v = 0.0;
            }
            min_val = min_val.min(*v);
            finite &= v.is_finite();
        }
        if !finite {
            return Err(SolveError::Diverged { step: k + 1 });
        }
        if min_val < -1e-12 {
            return Err(SolveError::NegativeDensity {
                step: k + 1,
                min: min_val,
            });
        }
        m.slice_mut(k + 1).copy_from_slice(&next);
    }
    Ok(m)
}

/// One upwind flux-form step with transported velocity w = -b.
/// Returns the largest nodal value of max_axis |b| for the CFL check.
fn advect_step(
    grid: TorusGrid,
    drift: &[Vec<f64>],
    cur: &[f64],
    dt: f64,
    out: &mut [f64],
    flux: &mut [f64],
) -> f64 {
    let n = grid.n();
    let lambda = dt / grid.dx();
    let mut max_speed: f64 = 0.0;
    out.copy_from_slice(cur);
    if grid.d() == 1 {
        let b = &drift[0];
        for i in 0..n {
            let ip = if i + 1 == n { 0 } else { i + 1 };
            let w = -0.5 * (b[i] + b[ip]);
            max_speed = max_speed.max(b[i].abs());
            flux[i] = w.max(0.0) * cur[i] + w.min(0.0) * cur[ip];
        }
        for i in 0..n {
            let im = if i == 0 { n - 1 } else { i - 1 };
            out[i] -= lambda * (flux[i] - flux[im]);
        }
        return max_speed;
    }
    // d = 2: accumulate the flux divergence axis by axis, row-based
    {
        let b = &drift[0];
        for iy in 0..n {
            let row = iy * n;
            for ix in 0..n {
                let idx = row + ix;
                let nb = if ix + 1 == n { row } else { idx + 1 };
                let w = -0.5 * (b[idx] + b[nb]);
                max_speed = max_speed.max(b[idx].abs());
                flux[idx] = w.max(0.0) * cur[idx] + w.min(0.0) * cur[nb];
            }
            for ix in 0..n {
                let idx = row + ix;
                let pb = if ix == 0 { row + n - 1 } else { idx - 1 };
                out[idx] -= lambda * (flux[idx] - flux[pb]);
            }
        }
    }
    {
        let b = &drift[1];
        for iy in 0..n {
            let row = iy * n;
            let row_up = if iy + 1 == n { 0 } else { row + n };
            for ix in 0..n {
                let idx = row + ix;
                let nb = row_up + ix;
                let w = -0.5 * (b[idx] + b[nb]);
                max_speed = max_speed.max(b[idx].abs());
                flux[idx] = w.max(0.0) * cur[idx] + w.min(0.0) * cur[nb];
            }
        }
        for iy in 0..n {
            let row = iy * n;
            let row_dn = if iy == 0 { (n - 1) * n } else { row - n };
            for ix in 0..n {
                let idx = row + ix;
                out[idx] -= lambda * (flux[idx] - flux[row_dn + ix]);
            }
        }
    }
    max_speed
}
