//! Couples the backward HJB and forward Fokker–Planck solvers into the MFG
//! system via damped Picard iteration, with a policy-iteration variant and
//! optional fictitious-play averaging, for local and nonlocal couplings.
//!
//! One outer iteration maps a density guess m to its Picard image
//! Φ(m) = FPK(drift(HJB(f(m)))). The recorded fixed-point residual is
//! ‖Φ(m^k) - m^k‖_{L¹(Ω)}: the cross-residual of plugging the current
//! density into the HJB source and the resulting value into the FPK drift.
//! Damping only shapes the next input, m^{k+1} = (1-θ_k) m^k + θ_k Φ(m^k).

use crate::fpk::{solve_fpk_with, FpkOptions};
use crate::grid::{
    integrate_space, l1_distance_spacetime, ScalarField, TimeGrid, TorusGrid, VectorField,
};
use crate::hjb::{solve_hjb_with, solve_linear_hjb, HjbOptions};
use crate::model::{Coupling, HamiltonianKind, HamiltonianSpec};
use crate::SolveError;

/// Terminal data ū; the nonlocal theory allows it to depend on m(T,·).
#[derive(Debug, Clone)]
pub enum TerminalData {
    Fixed(Vec<f64>),
    /// ū(x, μ) = base(x) + f_spec(x, μ) with a kernel coupling; monotone in μ
    /// because the smoothing kernel is even and positive-definite.
    MeasureCoupled {
        base: Vec<f64>,
        spec: crate::model::NonlocalCouplingSpec,
    },
}

impl TerminalData {
    pub fn evaluate(&self, m_terminal: &[f64]) -> Vec<f64> {
        match self {
            TerminalData::Fixed(v) => v.clone(),
            TerminalData::MeasureCoupled { base, spec } => {
                let add = spec
                    .f_slice(m_terminal)
                    .expect("terminal kernel grid mismatch");
                base.iter().zip(add).map(|(b, a)| b + a).collect()
            }
        }
    }

    pub fn is_measure_dependent(&self) -> bool {
        matches!(self, TerminalData::MeasureCoupled { .. })
    }
}

/// Full problem instance: data, viscosity and grids.
#[derive(Debug, Clone)]
pub struct MfgProblem {
    pub hamiltonian: HamiltonianSpec,
    pub coupling: Coupling,
    pub terminal: TerminalData,
    pub m_bar: Vec<f64>,
    pub nu: f64,
    pub grid: TorusGrid,
    pub time: TimeGrid,
}

impl MfgProblem {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.hamiltonian.grid() != self.grid {
            return Err(SolveError::BadInput(
                "Hamiltonian lives on another grid".into(),
            ));
        }
        if self.coupling.grid() != self.grid {
            return Err(SolveError::BadInput("coupling lives on another grid".into()));
        }
        if self.m_bar.len() != self.grid.node_count() {
            return Err(SolveError::BadInput(
                "initial density has wrong length".into(),
            ));
        }
        if self.m_bar.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SolveError::BadInput(
                "initial density must be finite and nonnegative".into(),
            ));
        }
        let mass = integrate_space(self.grid, &self.m_bar);
        if (mass - 1.0).abs() > 1e-6 {
            return Err(SolveError::BadInput(format!(
                "initial density must have unit mass, got {mass}"
            )));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(SolveError::BadInput(format!(
                "viscosity must be >= 0, got {}",
                self.nu
            )));
        }
        match &self.terminal {
            TerminalData::Fixed(v) if v.len() != self.grid.node_count() => Err(
                SolveError::BadInput("terminal data has wrong length".into()),
            ),
            TerminalData::MeasureCoupled { base, .. }
                if base.len() != self.grid.node_count() =>
            {
                Err(SolveError::BadInput(
                    "terminal data has wrong length".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        let mut p = self.clone();
        p.nu = nu;
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixpointVariant {
    Picard,
    Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Plain,
    /// θ_k = 1/(k+1)
    FictitiousPlay,
}

#[derive(Debug, Clone, Copy)]
pub struct FixpointOptions {
    pub theta: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub variant: FixpointVariant,
    pub averaging: Averaging,
    pub cfl_safety: f64,
}

impl Default for FixpointOptions {
    fn default() -> Self {
        Self {
            theta: 0.5,
            tol: 1e-7,
            max_iters: 400,
            variant: FixpointVariant::Picard,
            averaging: Averaging::Plain,
            cfl_safety: 0.4,
        }
    }
}

impl FixpointOptions {
    fn validate(&self) -> Result<(), SolveError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(SolveError::BadInput(format!(
                "damping must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if !(self.tol > 0.0) {
            return Err(SolveError::BadInput("tolerance must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn hjb(&self) -> HjbOptions {
        HjbOptions {
            cfl_safety: self.cfl_safety,
            max_grad_clip: None,
        }
    }

    pub(crate) fn fpk(&self) -> FpkOptions {
        FpkOptions {
            cfl_safety: self.cfl_safety,
            positivity_floor: 0.0,
        }
    }
}

/// Solved pair with iteration diagnostics.
#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub u: ScalarField,
    pub m: ScalarField,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl MfgSolution {
    /// Diagnostic (reported, never fatal): whether the residual was
    /// non-increasing after the first `skip` iterations. No Picard
    /// contraction is proven at ν = 0, so oscillation here is an observation
    /// about the iteration, not a bug.
    pub fn residual_monotone_after(&self, skip: usize) -> bool {
        self.residual_history
            .iter()
            .skip(skip)
            .zip(self.residual_history.iter().skip(skip + 1))
            .all(|(a, b)| b <= a)
    }
}

/// A-priori gradient bound in the style of the uniform estimates: discrete
/// Lipschitz constant of ū plus T times the source Lipschitz constant
/// (evaluated at the initial density), inflated by 2. Feeding it through
/// |DpH| bounds both solvers' CFL speeds before any iteration runs.
pub fn apriori_gradient_bound(
    ham: &HamiltonianSpec,
    coupling: &Coupling,
    terminal: &TerminalData,
    m_bar: &[f64],
    t_max: f64,
    grid: TorusGrid,
) -> f64 {
    let lip = |values: &[f64]| -> f64 {
        let dx = grid.dx();
        let mut l: f64 = 0.0;
        for idx in 0..grid.node_count() {
            for axis in 0..grid.d() {
                let j = grid.shift(idx, axis, 1);
                l = l.max(((values[j] - values[idx]) / dx).abs());
            }
        }
        l
    };
    let u_bar = terminal.evaluate(m_bar);
    let f0 = coupling.f_slice(m_bar);
    let p_bound = 2.0 * (lip(&u_bar) + t_max * lip(&f0));
    let mut hb: f64 = 0.0;
    for idx in 0..grid.node_count() {
        hb = hb.max(ham.grad_mag(idx, p_bound));
    }
    hb
}

/// Central-difference gradient of one u-slice, pushed through DpH into the
/// drift used by the Fokker–Planck solver.
pub(crate) fn fill_drift_from_u(
    grid: TorusGrid,
    ham: &HamiltonianSpec,
    u_slice: &[f64],
    out: &mut [Vec<f64>],
) {
    let inv_2dx = 0.5 / grid.dx();
    let n = grid.n();
    if grid.d() == 1 {
        let buf = &mut out[0];
        for (i, b) in buf.iter_mut().enumerate() {
            let ip = if i + 1 == n { 0 } else { i + 1 };
            let im = if i == 0 { n - 1 } else { i - 1 };
            *b = ham.grad(i, &[(u_slice[ip] - u_slice[im]) * inv_2dx, 0.0])[0];
        }
        return;
    }
    for iy in 0..n {
        let row = iy * n;
        let row_up = if iy + 1 == n { 0 } else { (iy + 1) * n };
        let row_dn = if iy == 0 { (n - 1) * n } else { (iy - 1) * n };
        for ix in 0..n {
            let idx = row + ix;
            let ixp = if ix + 1 == n { row } else { idx + 1 };
            let ixm = if ix == 0 { row + n - 1 } else { idx - 1 };
            let p = [
                (u_slice[ixp] - u_slice[ixm]) * inv_2dx,
                (u_slice[row_up + ix] - u_slice[row_dn + ix]) * inv_2dx,
            ];
            let g = ham.grad(idx, &p);
            out[0][idx] = g[0];
            out[1][idx] = g[1];
        }
    }
}

/// Materialized drift field b = DpH(x, Du) on every slice.
pub fn drift_field(grid: TorusGrid, ham: &HamiltonianSpec, u: &ScalarField) -> VectorField {
    let slices = u.num_slices();
    let mut comps: Vec<ScalarField> = (0..grid.d())
        .map(|_| ScalarField::zeros(grid, slices))
        .collect();
    let mut bufs: Vec<Vec<f64>> = (0..grid.d())
        .map(|_| vec![0.0; grid.node_count()])
        .collect();
    for k in 0..slices {
        fill_drift_from_u(grid, ham, u.slice(k), &mut bufs);
        for (axis, c) in comps.iter_mut().enumerate() {
            c.slice_mut(k).copy_from_slice(&bufs[axis]);
        }
    }
    VectorField::new(comps)
}

/// One frozen-policy step: b = DpH(x, Du), then the linear equation
/// -∂t u - νΔu + b·Du = f(x,m) + H*(x,b) (the Legendre form of the frozen
/// running cost) solved backward. Returns the drift and the updated value.
pub fn policy_step(
    problem: &MfgProblem,
    m: &ScalarField,
    u: &ScalarField,
    opts: &FixpointOptions,
) -> Result<(VectorField, ScalarField), SolveError> {
    if problem.hamiltonian.kind() == HamiltonianKind::Zero {
        return Err(SolveError::BadInput(
            "policy iteration needs a coercive Hamiltonian".into(),
        ));
    }
    let grid = problem.grid;
    let drift = drift_field(grid, &problem.hamiltonian, u);
    let mut source = ScalarField::zeros(grid, problem.time.slices());
    for k in 0..problem.time.slices() {
        let f = problem.coupling.f_slice(m.slice(k));
        let dst = source.slice_mut(k);
        for (idx, d) in dst.iter_mut().enumerate() {
            let b = [
                drift.component(0).slice(k)[idx],
                if grid.d() == 2 {
                    drift.component(1).slice(k)[idx]
                } else {
                    0.0
                },
            ];
            *d = f[idx] + problem.hamiltonian.conjugate(idx, &b);
        }
    }
    let terminal = problem.terminal.evaluate(m.slice(problem.time.nt()));
    let u_new = solve_linear_hjb(
        problem.nu,
        &drift,
        &source,
        &terminal,
        grid,
        &problem.time,
        &opts.hjb(),
    )?;
    Ok((drift, u_new))
}

pub fn solve_mfg(problem: &MfgProblem, opts: &FixpointOptions) -> Result<MfgSolution, SolveError> {
    let mut m0 = ScalarField::zeros(problem.grid, problem.time.slices());
    for k in 0..problem.time.slices() {
        m0.slice_mut(k).copy_from_slice(&problem.m_bar);
    }
    solve_mfg_from(problem, opts, m0)
}

/// Same solver from an explicit initial density-path guess (the uniqueness
/// diagnostics start two solves from different guesses).
pub fn solve_mfg_from(
    problem: &MfgProblem,
    opts: &FixpointOptions,
    mut m_in: ScalarField,
) -> Result<MfgSolution, SolveError> {
    problem.validate()?;
    opts.validate()?;
    if m_in.grid() != problem.grid || m_in.num_slices() != problem.time.slices() {
        return Err(SolveError::BadInput("initial guess shape mismatch".into()));
    }
    let grid = problem.grid;
    let time = problem.time;
    let dt = time.dt();
    let dx = grid.dx();
    let dim = grid.d() as f64;

    let grad_bound = apriori_gradient_bound(
        &problem.hamiltonian,
        &problem.coupling,
        &problem.terminal,
        &problem.m_bar,
        time.t_max(),
        grid,
    );
    if grad_bound > 0.0 && dt * grad_bound * dim / dx > opts.cfl_safety {
        return Err(SolveError::CflEstimate {
            dt,
            admissible_dt: opts.cfl_safety * dx / (dim * grad_bound),
        });
    }

    let mut history = Vec::new();
    let mut prev_image: Option<ScalarField> = None;
    let mut policy_u: Option<ScalarField> = None;
    let mut src_buf = vec![0.0; grid.node_count()];
    let mut last: Option<(ScalarField, ScalarField)> = None;

    // The Picard map amplifies spatial mode k by roughly (2πkT)²/2 before
    // (numerical) viscosity cuts in, so on fine grids near ν = 0 a band of
    // modes is non-contractive under generic damping. The damping backs off
    // deterministically: halve θ when the residual plateaus over a window,
    // or when a transient steepens the fields into a CFL violation (then
    // restart from the last accepted input).
    const PLATEAU_WINDOW: usize = 30;
    const THETA_MIN: f64 = 1e-4;
    let mut theta_cur = opts.theta;
    let mut checkpoint = m_in.clone();
    let mut prev_window_min = f64::INFINITY;
    let mut window_min = f64::INFINITY;
    let mut window_left = PLATEAU_WINDOW;

    for k in 1..=opts.max_iters {
        let terminal = problem.terminal.evaluate(m_in.slice(time.nt()));
        let pair = (|| -> Result<(ScalarField, ScalarField), SolveError> {
            let u = match opts.variant {
                FixpointVariant::Picard => solve_hjb_with(
                    problem.nu,
                    &problem.hamiltonian,
                    |slice, out: &mut [f64]| problem.coupling.fill_f(m_in.slice(slice), out),
                    &terminal,
                    grid,
                    &time,
                    &opts.hjb(),
                    &mut src_buf,
                )?,
                FixpointVariant::Policy => {
                    let u_prev = policy_u.take().unwrap_or_else(|| {
                        let mut u0 = ScalarField::zeros(grid, time.slices());
                        for s in 0..time.slices() {
                            u0.slice_mut(s).copy_from_slice(&terminal);
                        }
                        u0
                    });
                    let (_, u_new) = policy_step(problem, &m_in, &u_prev, opts)?;
                    u_new
                }
            };
            let ham = &problem.hamiltonian;
            let image = solve_fpk_with(
                problem.nu,
                |slice, bufs: &mut [Vec<f64>]| fill_drift_from_u(grid, ham, u.slice(slice), bufs),
                &problem.m_bar,
                grid,
                &time,
                &opts.fpk(),
            )?;
            Ok((u, image))
        })();
        let (u, image) = match pair {
            Ok(pair) => pair,
            Err(SolveError::CflViolation { .. } | SolveError::Diverged { .. })
                if opts.averaging == Averaging::Plain && theta_cur > THETA_MIN =>
            {
                // rejected attempt: restart from the last accepted input; it
                // counts toward max_iters but records no residual
                theta_cur *= 0.5;
                m_in = checkpoint.clone();
                prev_window_min = f64::INFINITY;
                window_min = f64::INFINITY;
                window_left = PLATEAU_WINDOW;
                continue;
            }
            Err(e) => return Err(e),
        };
        if opts.variant == FixpointVariant::Policy {
            policy_u = Some(u.clone());
        }

        let residual = l1_distance_spacetime(&image, &m_in, &time);
        // Bitwise-stationary image: the composed map ignored a change of
        // input, so the image itself is the fixed point.
        let stationary = prev_image
            .as_ref()
            .map(|p| p.data() == image.data())
            .unwrap_or(false);
        if residual <= opts.tol || stationary {
            history.push(if stationary { 0.0 } else { residual });
            return Ok(MfgSolution {
                u,
                m: image,
                iterations: k,
                residual_history: history,
                converged: true,
            });
        }
        history.push(residual);

        checkpoint = m_in.clone();
        let theta = match opts.averaging {
            Averaging::Plain => theta_cur,
            Averaging::FictitiousPlay => 1.0 / (k as f64 + 1.0),
        };
        {
            let dst = m_in.data_mut();
            for (d, s) in dst.iter_mut().zip(image.data()) {
                *d = (1.0 - theta) * *d + theta * s;
            }
        }
        prev_image = Some(image.clone());
        last = Some((u, image));

        if opts.averaging == Averaging::Plain {
            window_min = window_min.min(residual);
            window_left -= 1;
            if window_left == 0 {
                // healthy decay at damping θ improves roughly by 1-e^{-30cθ}
                // per window with c <= 1 unknown; require only a θ-scaled
                // fraction of that so small-θ tails are not halved into a
                // crawl, but keep a 2% floor so true plateaus still trip it
                let wanted = 1.0 - (0.15f64).min((3.75 * theta_cur).max(0.02));
                if window_min > wanted * prev_window_min && theta_cur > THETA_MIN {
                    theta_cur *= 0.5;
                }
                prev_window_min = window_min;
                window_min = f64::INFINITY;
                window_left = PLATEAU_WINDOW;
            }
        }
    }

    let (u, m) = last.expect("at least one iteration ran");
    Ok(MfgSolution {
        u,
        m,
        iterations: opts.max_iters,
        residual_history: history,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LocalCouplingSpec, NonlocalCouplingSpec};
    use std::f64::consts::PI;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    fn homogeneous_problem(nu: f64) -> MfgProblem {
        let g = grid1(32);
        let time = TimeGrid::new(0.5, 64).unwrap();
        MfgProblem {
            hamiltonian: HamiltonianSpec::isotropic(g, 2.0).unwrap(),
            coupling: Coupling::Local(LocalCouplingSpec::constant(g, 2.0).unwrap()),
            terminal: TerminalData::Fixed(vec![0.25; 32]),
            m_bar: vec![1.0; 32],
            nu,
            grid: g,
            time,
        }
    }

    pub(crate) fn kpz_like_problem(n: usize, nt: usize, nu: f64, t_max: f64) -> MfgProblem {
        let g = grid1(n);
        let time = TimeGrid::new(t_max, nt).unwrap();
        let m_raw = ScalarField::sample(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
        let mass = integrate_space(g, m_raw.slice(0));
        let m_bar: Vec<f64> = m_raw.slice(0).iter().map(|v| v / mass).collect();
        let u_bar = ScalarField::sample(g, |x| 0.25 * (2.0 * PI * x[0]).cos());
        MfgProblem {
            hamiltonian: HamiltonianSpec::isotropic(g, 2.0).unwrap(),
            coupling: Coupling::Local(LocalCouplingSpec::constant(g, 2.0).unwrap()),
            terminal: TerminalData::Fixed(u_bar.slice(0).to_vec()),
            m_bar,
            nu,
            grid: g,
            time,
        }
    }

    #[test]
    fn homogeneous_data_reproduces_closed_form() {
        // m ≡ 1, u(t,x) = c + f(1)(T - t) with f(1) = 1 at q = 2.
        for nu in [0.0, 0.2] {
            let p = homogeneous_problem(nu);
            let sol = solve_mfg(&p, &FixpointOptions::default()).unwrap();
            assert!(sol.converged);
            for k in 0..=p.time.nt() {
                let want = 0.25 + (0.5 - p.time.time(k));
                for i in 0..32 {
                    assert!((sol.m.slice(k)[i] - 1.0).abs() < 1e-8);
                    assert!((sol.u.slice(k)[i] - want).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn decoupled_problem_converges_in_two_iterations() {
        let g = grid1(32);
        let time = TimeGrid::new(0.25, 128).unwrap();
        let m_raw = ScalarField::sample(g, |x| 1.0 + 0.4 * (2.0 * PI * x[0]).cos());
        let mass = integrate_space(g, m_raw.slice(0));
        let m_bar: Vec<f64> = m_raw.slice(0).iter().map(|v| v / mass).collect();
        let p = MfgProblem {
            hamiltonian: HamiltonianSpec::isotropic(g, 2.0).unwrap(),
            coupling: Coupling::Local(LocalCouplingSpec::decoupled(g, 2.0).unwrap()),
            terminal: TerminalData::Fixed(
                ScalarField::sample(g, |x| 0.2 * (2.0 * PI * x[0]).sin())
                    .slice(0)
                    .to_vec(),
            ),
            m_bar,
            nu: 0.05,
            grid: g,
            time,
        };
        let sol = solve_mfg(&p, &FixpointOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 2, "took {} iterations", sol.iterations);
    }

    #[test]
    fn even_data_stays_even() {
        let p = kpz_like_problem(64, 256, 0.1, 0.25);
        let sol = solve_mfg(&p, &FixpointOptions::default()).unwrap();
        assert!(sol.converged);
        for k in 0..=p.time.nt() {
            for i in 0..64 {
                let j = p.grid.mirror(i);
                assert!((sol.u.slice(k)[i] - sol.u.slice(k)[j]).abs() < 1e-10);
                assert!((sol.m.slice(k)[i] - sol.m.slice(k)[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn final_density_is_conservative_and_nonnegative() {
        let p = kpz_like_problem(64, 256, 0.05, 0.25);
        let sol = solve_mfg(&p, &FixpointOptions::default()).unwrap();
        for k in 0..=p.time.nt() {
            let mass = integrate_space(p.grid, sol.m.slice(k));
            assert!((mass - 1.0).abs() < 1e-12);
        }
        assert!(sol.m.min_value() >= -1e-12);
    }

    #[test]
    fn different_initial_guesses_agree_at_the_fixed_point() {
        let p = kpz_like_problem(48, 192, 0.1, 0.25);
        let opts = FixpointOptions {
            tol: 1e-9,
            ..FixpointOptions::default()
        };
        let a = solve_mfg(&p, &opts).unwrap();
        let mut alt = ScalarField::zeros(p.grid, p.time.slices());
        for k in 0..p.time.slices() {
            alt.slice_mut(k).copy_from_slice(&p.m_bar);
            // perturb the guess, keeping mass
            for (i, v) in alt.slice_mut(k).iter_mut().enumerate() {
                *v *= 1.0 + 0.2 * (2.0 * PI * (i as f64) / 48.0).sin();
            }
            let mass = integrate_space(p.grid, alt.slice(k));
            for v in alt.slice_mut(k) {
                *v /= mass;
            }
        }
        let b = solve_mfg_from(&p, &opts, alt).unwrap();
        assert!(a.converged && b.converged);
        let d = l1_distance_spacetime(&a.m, &b.m, &p.time);
        assert!(d <= 10.0 * opts.tol, "L1 gap {d}");
    }

    #[test]
    fn policy_zero_drift_reproduces_homogeneous_solution() {
        let p = homogeneous_problem(0.1);
        let mut m0 = ScalarField::zeros(p.grid, p.time.slices());
        for k in 0..p.time.slices() {
            m0.slice_mut(k).copy_from_slice(&p.m_bar);
        }
        // frozen zero policy: u constant in space has zero gradient
        let u0 = ScalarField::constant(p.grid, p.time.slices(), 0.25);
        let (_, u1) = policy_step(&p, &m0, &u0, &FixpointOptions::default()).unwrap();
        for k in 0..=p.time.nt() {
            let want = 0.25 + (0.5 - p.time.time(k));
            for v in u1.slice(k) {
                assert!((v - want).abs() < 1e-10);
            }
        }
        // a second policy step from the exact solution is a fixed point
        let (_, u2) = policy_step(&p, &m0, &u1, &FixpointOptions::default()).unwrap();
        for k in 0..=p.time.nt() {
            for (a, b) in u1.slice(k).iter().zip(u2.slice(k)) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn policy_variant_converges_on_coupled_problem() {
        let p = kpz_like_problem(48, 192, 0.1, 0.25);
        let opts = FixpointOptions {
            variant: FixpointVariant::Policy,
            ..FixpointOptions::default()
        };
        let sol = solve_mfg(&p, &opts).unwrap();
        assert!(sol.converged, "history: {:?}", sol.residual_history);
        // residual decreases monotonically after the first few iterations
        let h = &sol.residual_history;
        for w in h.windows(2).skip(2) {
            assert!(w[1] <= w[0] * 1.001, "history: {h:?}");
        }
    }

    #[test]
    fn nonlocal_coupling_converges_with_measure_terminal() {
        let g = grid1(48);
        let time = TimeGrid::new(0.25, 256).unwrap();
        let kernel = crate::model::gaussian_kernel(g, 0.08, None);
        let spec = NonlocalCouplingSpec::new(g, &kernel, 1.0, 0.2).unwrap();
        let m_raw = ScalarField::sample(g, |x| 1.0 + 0.4 * (2.0 * PI * x[0]).cos());
        let mass = integrate_space(g, m_raw.slice(0));
        let m_bar: Vec<f64> = m_raw.slice(0).iter().map(|v| v / mass).collect();
        let base = ScalarField::sample(g, |x| 0.2 * (2.0 * PI * x[0]).cos());
        let tspec = NonlocalCouplingSpec::new(g, &kernel, 0.3, 0.0).unwrap();
        let p = MfgProblem {
            hamiltonian: HamiltonianSpec::isotropic(g, 2.0).unwrap(),
            coupling: Coupling::Nonlocal(spec),
            terminal: TerminalData::MeasureCoupled {
                base: base.slice(0).to_vec(),
                spec: tspec,
            },
            m_bar,
            nu: 0.05,
            grid: g,
            time,
        };
        let sol = solve_mfg(&p, &FixpointOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.m.min_value() >= -1e-12);
    }
}
