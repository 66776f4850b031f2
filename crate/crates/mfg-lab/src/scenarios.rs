//! Preset experiments, the ν-sweep driver, reference-solution management and
//! the KPZ weak-noise change of variables.
//!
//! A sweep solves the first-order (ν = 0) system once on a reference grid at
//! least 4× finer than the sweep grid, restricts it by nodal subsampling
//! (grids are nested by construction, so no interpolation), then solves each
//! ν on the sweep grid and evaluates the preset's norm set against the
//! restricted reference. A companion ν = 0 solve on a 2× coarser grid
//! measures the reference's own discretization error; a norm whose smallest
//! ν row is within 4× of that self-gap is marked reference-limited and its
//! fit is suppressed.

use crate::fixpoint::{
    apriori_gradient_bound, solve_mfg, Averaging, FixpointOptions, FixpointVariant, MfgProblem,
    MfgSolution, TerminalData,
};
use crate::grid::{integrate_space, ScalarField, TimeGrid, TorusGrid};
use crate::metrics::{
    self, NormKind, PredictedExponents, ReferenceInfo, SolutionBounds, SweepResult, SweepRow,
};
use crate::model::{
    gaussian_kernel, Coupling, HamiltonianSpec, LocalCouplingSpec, NonlocalCouplingSpec,
};
use crate::SolveError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum ScenarioError {
    #[error("invalid problem description: {0}")]
    BadConfig(String),
    #[error("solver failed: {0}")]
    Solve(#[from] SolveError),
    #[error("reference solve did not converge after {0} iterations")]
    ReferenceNotConverged(usize),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

/// Serializable description of one MFG problem instance. All data fields are
/// low-frequency trigonometric profiles, which keeps configs archivable as a
/// handful of scalars.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub d: usize,
    pub n: usize,
    /// 0 = derive from the a-priori CFL estimate.
    pub nt: usize,
    pub t_max: f64,
    pub nu: f64,
    pub hamiltonian: HamConfig,
    pub coupling: CouplingConfig,
    pub data: DataConfig,
    pub fixpoint: FixpointConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            d: 1,
            n: 128,
            nt: 0,
            t_max: 0.5,
            nu: 0.1,
            hamiltonian: HamConfig::default(),
            coupling: CouplingConfig::default(),
            data: DataConfig::default(),
            fixpoint: FixpointConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamConfig {
    pub r: f64,
    pub tau_base: f64,
    pub tau_amp: f64,
    pub tau_mode: u32,
    pub h_amp: f64,
    pub h_mode: u32,
}

impl Default for HamConfig {
    fn default() -> Self {
        Self {
            r: 2.0,
            tau_base: 1.0,
            tau_amp: 0.0,
            tau_mode: 1,
            h_amp: 0.0,
            h_mode: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingKind {
    Local,
    Nonlocal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub kind: CouplingKind,
    pub q: f64,
    pub tau_base: f64,
    pub tau_amp: f64,
    pub tau_mode: u32,
    /// Nonlocal only: smoothing-kernel bandwidth and g(z) = g_lin z + g_cub z³.
    pub kernel_sigma: f64,
    pub g_lin: f64,
    pub g_cub: f64,
    /// Weight of the measure-coupled part of ū (0 = fixed terminal data).
    pub terminal_weight: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            kind: CouplingKind::Local,
            q: 2.0,
            tau_base: 1.0,
            tau_amp: 0.0,
            tau_mode: 1,
            kernel_sigma: 0.08,
            g_lin: 1.0,
            g_cub: 0.0,
            terminal_weight: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub m_amp: f64,
    pub m_mode: u32,
    pub u_amp: f64,
    pub u_mode: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            m_amp: 0.5,
            m_mode: 1,
            u_amp: 0.25,
            u_mode: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixpointConfig {
    pub theta: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub variant: String,
    pub averaging: String,
    pub cfl_safety: f64,
}

impl Default for FixpointConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            tol: 1e-8,
            max_iters: 500,
            variant: "picard".to_string(),
            averaging: "plain".to_string(),
            cfl_safety: 0.4,
        }
    }
}

impl FixpointConfig {
    pub fn to_options(&self) -> Result<FixpointOptions, ScenarioError> {
        let variant = match self.variant.as_str() {
            "picard" => FixpointVariant::Picard,
            "policy" => FixpointVariant::Policy,
            other => {
                return Err(ScenarioError::BadConfig(format!(
                    "unknown fixpoint variant '{other}'"
                )))
            }
        };
        let averaging = match self.averaging.as_str() {
            "plain" => Averaging::Plain,
            "fictitious-play" => Averaging::FictitiousPlay,
            other => {
                return Err(ScenarioError::BadConfig(format!(
                    "unknown averaging mode '{other}'"
                )))
            }
        };
        Ok(FixpointOptions {
            theta: self.theta,
            tol: self.tol,
            max_iters: self.max_iters,
            variant,
            averaging,
            cfl_safety: self.cfl_safety,
        })
    }
}

/// cos profile used by every data field: mean of per-axis cosines, so the
/// data is even under x ↦ -x on any axis.
fn cos_profile(x: &[f64; 2], d: usize, mode: u32) -> f64 {
    let tp = 2.0 * std::f64::consts::PI * mode as f64;
    if d == 1 {
        (tp * x[0]).cos()
    } else {
        0.5 * ((tp * x[0]).cos() + (tp * x[1]).cos())
    }
}

impl ProblemConfig {
    /// Same problem on a grid scaled by `factor` in space and time.
    pub fn scaled(&self, factor: usize) -> ProblemConfig {
        let mut c = self.clone();
        c.n *= factor;
        if c.nt > 0 {
            c.nt *= factor;
        }
        c
    }

    pub fn with_nu(&self, nu: f64) -> ProblemConfig {
        let mut c = self.clone();
        c.nu = nu;
        c
    }

    /// Number of time steps from the a-priori CFL estimate (already scaled by
    /// the configured safety factor), with 10% headroom.
    pub fn derive_nt(&self) -> Result<usize, ScenarioError> {
        let probe = self.build_with_nt(1)?;
        let bound = apriori_gradient_bound(
            &probe.hamiltonian,
            &probe.coupling,
            &probe.terminal,
            &probe.m_bar,
            self.t_max,
            probe.grid,
        );
        let dx = probe.grid.dx();
        let dim = self.d as f64;
        let min_dt = self.fixpoint.cfl_safety * dx / (dim * bound.max(1e-12));
        // 1.5x headroom over the a-priori estimate: Picard transients can
        // steepen u beyond the data-based bound before settling
        let nt = (1.5 * self.t_max / min_dt).ceil() as usize;
        Ok(nt.max(self.n / 4).max(8))
    }

    pub fn build(&self) -> Result<MfgProblem, ScenarioError> {
        let nt = if self.nt > 0 { self.nt } else { self.derive_nt()? };
        self.build_with_nt(nt)
    }

    fn build_with_nt(&self, nt: usize) -> Result<MfgProblem, ScenarioError> {
        let grid = TorusGrid::new(self.d, self.n)
            .map_err(|e| ScenarioError::BadConfig(e.to_string()))?;
        let time = TimeGrid::new(self.t_max, nt)
            .map_err(|e| ScenarioError::BadConfig(e.to_string()))?;
        let d = self.d;
        let hc = &self.hamiltonian;
        if hc.tau_base - hc.tau_amp.abs() <= 0.0 {
            return Err(ScenarioError::BadConfig(
                "hamiltonian weight must stay positive".into(),
            ));
        }
        let tau1 = ScalarField::sample(grid, |x| {
            hc.tau_base + hc.tau_amp * cos_profile(x, d, hc.tau_mode)
        });
        let h = ScalarField::sample(grid, |x| hc.h_amp * cos_profile(x, d, hc.h_mode));
        let hamiltonian = HamiltonianSpec::power(grid, hc.r, &tau1, &h)
            .map_err(|e| ScenarioError::BadConfig(e.to_string()))?;

        let cc = &self.coupling;
        let coupling = match cc.kind {
            CouplingKind::Local => {
                if cc.tau_base == 0.0 && cc.tau_amp == 0.0 {
                    Coupling::Local(
                        LocalCouplingSpec::decoupled(grid, cc.q)
                            .map_err(|e| ScenarioError::BadConfig(e.to_string()))?,
                    )
                } else {
                    if cc.tau_base - cc.tau_amp.abs() <= 0.0 {
                        return Err(ScenarioError::BadConfig(
                            "coupling weight must stay positive".into(),
                        ));
                    }
                    let tau2 = ScalarField::sample(grid, |x| {
                        cc.tau_base + cc.tau_amp * cos_profile(x, d, cc.tau_mode)
                    });
                    Coupling::Local(
                        LocalCouplingSpec::new(grid, cc.q, &tau2)
                            .map_err(|e| ScenarioError::BadConfig(e.to_string()))?,
                    )
                }
            }
            CouplingKind::Nonlocal => {
                let kernel = gaussian_kernel(grid, cc.kernel_sigma, None);
                Coupling::Nonlocal(
                    NonlocalCouplingSpec::new(grid, &kernel, cc.g_lin, cc.g_cub)
                        .map_err(|e| ScenarioError::BadConfig(e.to_string()))?,
                )
            }
        };

        let dc = &self.data;
        if dc.m_amp.abs() >= 1.0 {
            return Err(ScenarioError::BadConfig(
                "density amplitude must stay below 1".into(),
            ));
        }
        let m_raw = ScalarField::sample(grid, |x| 1.0 + dc.m_amp * cos_profile(x, d, dc.m_mode));
        let mass = integrate_space(grid, m_raw.slice(0));
        let m_bar: Vec<f64> = m_raw.slice(0).iter().map(|v| v / mass).collect();
        let u_base = ScalarField::sample(grid, |x| dc.u_amp * cos_profile(x, d, dc.u_mode));
        let terminal = if cc.terminal_weight > 0.0 {
            let kernel = gaussian_kernel(grid, cc.kernel_sigma, None);
            let tspec = NonlocalCouplingSpec::new(grid, &kernel, cc.terminal_weight, 0.0)
                .map_err(|e| ScenarioError::BadConfig(e.to_string()))?;
            TerminalData::MeasureCoupled {
                base: u_base.slice(0).to_vec(),
                spec: tspec,
            }
        } else {
            TerminalData::Fixed(u_base.slice(0).to_vec())
        };

        Ok(MfgProblem {
            hamiltonian,
            coupling,
            terminal,
            m_bar,
            nu: self.nu,
            grid,
            time,
        })
    }
}

/// Preset experiment: a problem template, the ν list, the nested grids, the
/// norm set and the exponents the theorems predict for it.
#[derive(Debug, Clone, Serialize)]
pub struct Preset {
    pub name: String,
    pub problem: ProblemConfig,
    pub nu_list: Vec<f64>,
    /// n_ref = ref_factor · n and nt_ref = ref_factor · nt (CFL preserved).
    pub ref_factor: usize,
    pub norms: Vec<NormKind>,
    pub exponents: PredictedExponents,
}

impl Preset {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.ref_factor < 4 {
            return Err(ScenarioError::BadConfig(
                "reference grid must be at least 4x finer".into(),
            ));
        }
        if self.nu_list.is_empty()
            || self.nu_list.iter().any(|nu| !(*nu > 0.0 && *nu <= 1.0))
            || self.nu_list.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(ScenarioError::BadConfig(
                "ν list must be strictly decreasing within (0, 1]".into(),
            ));
        }
        // cross-check the stored exponents against the formulas
        let fresh = PredictedExponents::compute(self.exponents.q, self.exponents.r, self.exponents.d)
            .map_err(|e| ScenarioError::BadConfig(e.to_string()))?;
        if (fresh.beta.value - self.exponents.beta.value).abs() > 1e-12 {
            return Err(ScenarioError::BadConfig("stale exponent table".into()));
        }
        Ok(())
    }
}

fn default_nu_list() -> Vec<f64> {
    (3..=8).map(|k| 2f64.powi(-k)).collect()
}

/// The built-in presets; parameters pick the regimes the theorems speak to.
pub fn builtin_presets() -> Vec<Preset> {
    let mut presets = Vec::new();

    // KPZ scenario: d = 1, q = r = 2, β = 1; probes the J2/L2 m-rates and
    // the weighted-sup u-rate (r = 2, d <= 3), plus the KPZ map itself.
    //
    // Picard at ν ≈ 0 amplifies spatial mode k by roughly (2πkT)²/2 per
    // round, cut off only by (numerical) viscosity, so the local-coupling
    // presets run short horizons with small damping; the reference grid is
    // the finest and dictates θ.
    {
        let mut p = ProblemConfig {
            n: 256,
            t_max: 0.05,
            nu: 0.1,
            ..ProblemConfig::default()
        };
        p.fixpoint.theta = 0.1;
        p.fixpoint.tol = 1e-6;
        p.fixpoint.max_iters = 2000;
        p.data = DataConfig {
            m_amp: 0.5,
            m_mode: 1,
            u_amp: 0.25,
            u_mode: 1,
        };
        presets.push(Preset {
            name: "kpz1d".to_string(),
            problem: p,
            nu_list: default_nu_list(),
            ref_factor: 4,
            norms: vec![
                NormKind::MJ2Sq,
                NormKind::J1WeightedSq,
                NormKind::ML2Sq,
                NormKind::UWeightedSq,
                NormKind::UWeightedSup,
            ],
            exponents: PredictedExponents::compute(2.0, 2.0, 1).unwrap(),
        });
    }

    // Supercritical growth: q = r = 3 keeps β = 1 (1/q + 1/r <= 1).
    {
        let mut p = ProblemConfig {
            n: 128,
            t_max: 0.1,
            nu: 0.1,
            ..ProblemConfig::default()
        };
        p.hamiltonian.r = 3.0;
        p.coupling.q = 3.0;
        p.fixpoint.theta = 0.1;
        p.fixpoint.tol = 1e-6;
        p.fixpoint.max_iters = 2000;
        p.data = DataConfig {
            m_amp: 0.4,
            m_mode: 1,
            u_amp: 0.25,
            u_mode: 1,
        };
        presets.push(Preset {
            name: "supercrit1d".to_string(),
            problem: p,
            nu_list: default_nu_list(),
            ref_factor: 4,
            norms: vec![NormKind::MJ2Sq, NormKind::J1WeightedSq, NormKind::ML2Sq],
            exponents: PredictedExponents::compute(3.0, 3.0, 1).unwrap(),
        });
    }

    // Subcritical 2-d probe: q = r = 1.5 gives β = 2.5 and a dimension-bound
    // rate; the L2 m-norm needs q >= 2 and is omitted.
    {
        let mut p = ProblemConfig {
            d: 2,
            n: 64,
            t_max: 0.07,
            nu: 0.1,
            ..ProblemConfig::default()
        };
        p.hamiltonian.r = 1.5;
        p.coupling.q = 1.5;
        p.fixpoint.theta = 0.1;
        p.fixpoint.tol = 1e-6;
        p.fixpoint.max_iters = 1500;
        p.data = DataConfig {
            m_amp: 0.4,
            m_mode: 1,
            u_amp: 0.25,
            u_mode: 1,
        };
        presets.push(Preset {
            name: "subcrit2d".to_string(),
            problem: p,
            nu_list: default_nu_list(),
            ref_factor: 4,
            norms: vec![NormKind::MJ2Sq, NormKind::J1WeightedSq],
            exponents: PredictedExponents::compute(1.5, 1.5, 2).unwrap(),
        });
    }

    // q = 2 with r = 3: the weighted-u rate applies (r exceeds the 2 + d/(d+1)
    // threshold in d = 1).
    {
        let mut p = ProblemConfig {
            n: 128,
            t_max: 0.1,
            nu: 0.1,
            ..ProblemConfig::default()
        };
        p.hamiltonian.r = 3.0;
        p.fixpoint.theta = 0.1;
        p.fixpoint.tol = 1e-6;
        p.fixpoint.max_iters = 2000;
        p.data = DataConfig {
            m_amp: 0.4,
            m_mode: 1,
            u_amp: 0.25,
            u_mode: 1,
        };
        presets.push(Preset {
            name: "bigr1d".to_string(),
            problem: p,
            nu_list: default_nu_list(),
            ref_factor: 4,
            norms: vec![
                NormKind::MJ2Sq,
                NormKind::J1WeightedSq,
                NormKind::ML2Sq,
                NormKind::UWeightedSq,
            ],
            exponents: PredictedExponents::compute(2.0, 3.0, 1).unwrap(),
        });
    }

    // Nonlocal regularizing coupling with a measure-coupled terminal; probes
    // the ν^{1/2} pairing rates and the ν^{1/4} L1 stability of u. The kernel
    // cuts the high-mode Picard gain, so ordinary damping converges here.
    {
        let mut p = ProblemConfig {
            n: 128,
            t_max: 0.4,
            nu: 0.1,
            ..ProblemConfig::default()
        };
        p.fixpoint.theta = 0.3;
        p.fixpoint.tol = 1e-8;
        p.fixpoint.max_iters = 600;
        p.coupling = CouplingConfig {
            kind: CouplingKind::Nonlocal,
            kernel_sigma: 0.1,
            g_lin: 1.0,
            g_cub: 0.0,
            terminal_weight: 0.25,
            ..CouplingConfig::default()
        };
        p.data = DataConfig {
            m_amp: 0.3,
            m_mode: 1,
            u_amp: 0.1,
            u_mode: 1,
        };
        presets.push(Preset {
            name: "nonlocal1d".to_string(),
            problem: p,
            nu_list: default_nu_list(),
            ref_factor: 4,
            norms: vec![
                NormKind::Pairing,
                NormKind::PairingTerminal,
                NormKind::UL1Sup,
            ],
            exponents: PredictedExponents::compute(2.0, 2.0, 1).unwrap(),
        });
    }

    for p in &presets {
        p.validate().expect("builtin preset must be valid");
    }
    presets
}

pub fn find_preset(name: &str) -> Result<Preset, ScenarioError> {
    builtin_presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| ScenarioError::UnknownPreset(name.to_string()))
}

fn solution_bounds(sol: &MfgSolution) -> SolutionBounds {
    let grid = sol.u.grid();
    let dx = grid.dx();
    let mut max_grad: f64 = 0.0;
    for k in 0..sol.u.num_slices() {
        let s = sol.u.slice(k);
        for idx in 0..grid.node_count() {
            for axis in 0..grid.d() {
                let j = grid.shift(idx, axis, 1);
                max_grad = max_grad.max(((s[j] - s[idx]) / dx).abs());
            }
        }
    }
    SolutionBounds {
        max_m: sol.m.data().iter().fold(0.0_f64, |a, &v| a.max(v)),
        max_abs_u: sol.u.max_abs(),
        max_grad_u: max_grad,
    }
}

/// Norm evaluation of a candidate (u, m) pair against the restricted
/// reference. Weights follow the theorems: the limit density m weights the
/// J1 and the space-time u-norms, the candidate's own density weights the
/// sup-in-time norm.
#[allow(clippy::too_many_arguments)]
fn eval_norms(
    norms: &[NormKind],
    problem: &MfgProblem,
    u_c: &ScalarField,
    m_c: &ScalarField,
    u_ref: &ScalarField,
    m_ref: &ScalarField,
    time: &TimeGrid,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for norm in norms {
        let value = match norm {
            NormKind::MJ2Sq => {
                let c = problem
                    .coupling
                    .as_local()
                    .expect("J2 norm needs a local coupling");
                metrics::err_j2_sq(m_c, m_ref, c, time)
            }
            NormKind::J1WeightedSq => {
                metrics::err_j1_weighted_sq(u_c, u_ref, m_ref, &problem.hamiltonian, time)
            }
            NormKind::ML2Sq => metrics::err_l2_sq(m_c, m_ref, time),
            NormKind::UWeightedSq => metrics::err_u_weighted_sq(u_c, u_ref, m_ref, time),
            NormKind::UWeightedSup => metrics::err_u_weighted_sup(u_c, u_ref, m_c),
            NormKind::Pairing => {
                metrics::pairing_spacetime(|m| problem.coupling.f_slice(m), m_c, m_ref, time)
            }
            NormKind::PairingTerminal => {
                let nt = time.nt();
                metrics::pairing_slice(
                    |m| problem.terminal.evaluate(m),
                    problem.grid,
                    m_c.slice(nt),
                    m_ref.slice(nt),
                )
            }
            NormKind::UL1Sup => metrics::err_l1_sup_t(u_c, u_ref),
        };
        out.insert(norm.csv_column().to_string(), value);
    }
    out
}

/// Runs the full sweep for a preset. Rows are solved concurrently (each solve
/// owns its workspace) and merged by descending ν, so the result does not
/// depend on scheduling; every solve cold-starts from m̄.
pub fn run_sweep(preset: &Preset) -> Result<SweepResult, ScenarioError> {
    preset.validate()?;
    let sweep_cfg = {
        let mut c = preset.problem.clone();
        if c.nt == 0 {
            c.nt = c.derive_nt()?;
        }
        c
    };
    let opts = sweep_cfg.fixpoint.to_options()?;
    let sweep_problem = sweep_cfg.build()?;
    let time = sweep_problem.time;

    // ν = 0 reference on the fine grid, plus the 2× coarser adequacy solve
    let ref_cfg = sweep_cfg.scaled(preset.ref_factor).with_nu(0.0);
    let half_cfg = sweep_cfg.scaled(preset.ref_factor / 2).with_nu(0.0);
    let ref_problem = ref_cfg.build()?;
    let half_problem = half_cfg.build()?;
    let ref_sol = solve_mfg(&ref_problem, &opts)?;
    if !ref_sol.converged {
        return Err(ScenarioError::ReferenceNotConverged(ref_sol.iterations));
    }
    let half_sol = solve_mfg(&half_problem, &opts)?;
    if !half_sol.converged {
        return Err(ScenarioError::ReferenceNotConverged(half_sol.iterations));
    }
    let f = preset.ref_factor;
    let u_ref = ref_sol.u.restrict(f, f);
    let m_ref = ref_sol.m.restrict(f, f);
    let u_half = half_sol.u.restrict(f / 2, f / 2);
    let m_half = half_sol.m.restrict(f / 2, f / 2);

    // reference self-convergence gap, per norm, on the sweep grid
    let self_gap = eval_norms(
        &preset.norms,
        &sweep_problem,
        &u_half,
        &m_half,
        &u_ref,
        &m_ref,
        &time,
    );

    let mut rows: Vec<SweepRow> = preset
        .nu_list
        .par_iter()
        .map(|&nu| -> Result<SweepRow, ScenarioError> {
            let started = std::time::Instant::now();
            let problem = sweep_cfg.with_nu(nu).build()?;
            let sol = solve_mfg(&problem, &opts)?;
            let values = eval_norms(
                &preset.norms,
                &problem,
                &sol.u,
                &sol.m,
                &u_ref,
                &m_ref,
                &time,
            );
            Ok(SweepRow {
                nu,
                values,
                iters: sol.iterations,
                runtime_s: started.elapsed().as_secs_f64(),
                converged: sol.converged,
                bounds: solution_bounds(&sol),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| b.nu.partial_cmp(&a.nu).unwrap());

    let mut reference_limited = BTreeMap::new();
    for norm in &preset.norms {
        let col = norm.csv_column();
        let min_row = rows
            .iter()
            .filter(|r| r.converged)
            .filter_map(|r| r.values.get(col))
            .fold(f64::INFINITY, |a, &v| a.min(v.abs()));
        let gap = self_gap.get(col).copied().unwrap_or(0.0).abs();
        reference_limited.insert(col.to_string(), !(gap <= 0.25 * min_row));
    }

    Ok(SweepResult {
        preset: preset.name.clone(),
        rows,
        reference: ReferenceInfo {
            n: ref_cfg.n,
            nt: ref_problem.time.nt(),
            iterations: ref_sol.iterations,
            converged: ref_sol.converged,
            self_gap,
        },
        reference_limited,
    })
}

/// Fitted rates for every norm of a finished sweep; reference-limited norms
/// and norms with fewer than 3 usable rows are reported unfitted.
pub fn fit_sweep(
    preset: &Preset,
    result: &SweepResult,
    margin: f64,
) -> Vec<Result<metrics::RateFit, String>> {
    preset
        .norms
        .iter()
        .map(|norm| {
            if result.is_reference_limited(*norm) {
                return Err(format!(
                    "{}: reference-limited (self gap too large)",
                    norm.csv_column()
                ));
            }
            let series = result.series(*norm);
            metrics::fit_rate(
                &series,
                norm.csv_column(),
                norm.predicted(&preset.exponents),
                margin,
            )
            .map_err(|e| format!("{}: {e}", norm.csv_column()))
        })
        .collect()
}

/// The KPZ weak-noise fields h = -u(T-t,·), ρ = -m(T-t,·).
#[derive(Debug, Clone)]
pub struct KpzFields {
    pub h: ScalarField,
    pub rho: ScalarField,
}

/// Change of variables from a d = 1 quadratic-Hamiltonian solution solved at
/// viscosity ν/2 to the KPZ pair at parameter ν: time reversal + negation.
pub fn kpz_map(sol: &MfgSolution) -> Result<KpzFields, ScenarioError> {
    let grid = sol.u.grid();
    if grid.d() != 1 {
        return Err(ScenarioError::BadConfig(
            "the KPZ correspondence is one-dimensional".into(),
        ));
    }
    let slices = sol.u.num_slices();
    let mut h = ScalarField::zeros(grid, slices);
    let mut rho = ScalarField::zeros(grid, slices);
    for k in 0..slices {
        let src = slices - 1 - k;
        for (d, s) in h.slice_mut(k).iter_mut().zip(sol.u.slice(src)) {
            *d = -s;
        }
        for (d, s) in rho.slice_mut(k).iter_mut().zip(sol.m.slice(src)) {
            *d = -s;
        }
    }
    Ok(KpzFields { h, rho })
}

/// L¹(Ω) residual of the first KPZ equation,
/// ∂t h - (ν/2) ∂xx h - (1/2)(∂x h)² - ρ, with central differences in time
/// (interior slices) and space. `nu` is the KPZ parameter: the fields must
/// come from a solution at viscosity ν/2.
pub fn kpz_residual_l1(fields: &KpzFields, nu: f64, time: &TimeGrid) -> f64 {
    let grid = fields.h.grid();
    let n = grid.node_count();
    let dt = time.dt();
    let mut acc = 0.0;
    let mut dx_buf = vec![0.0; n];
    let mut lap_buf = vec![0.0; n];
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    for k in 1..time.nt() {
        let h = fields.h.slice(k);
        crate::variational::central_diff_slice(grid, h, 0, &mut dx_buf);
        for idx in 0..n {
            let up = h[grid.shift(idx, 0, 1)];
            let dn = h[grid.shift(idx, 0, -1)];
            lap_buf[idx] = (up - 2.0 * h[idx] + dn) * inv_dx2;
        }
        let h_next = fields.h.slice(k + 1);
        let h_prev = fields.h.slice(k - 1);
        for idx in 0..n {
            let dh_dt = (h_next[idx] - h_prev[idx]) / (2.0 * dt);
            let res = dh_dt
                - 0.5 * nu * lap_buf[idx]
                - 0.5 * dx_buf[idx] * dx_buf[idx]
                - fields.rho.slice(k)[idx];
            acc += res.abs();
        }
    }
    acc * grid.cell_volume() * dt
}
