//! Error norms, predicted rate exponents, the circle Wasserstein-1 distance
//! and the log-log rate-fitting harness.
//!
//! The central exponent is
//!
//! ```text
//! β(q,r,d) = max{ q'r'/(q'+r'), 1 } (d+1) - d  >= 1,
//! ```
//!
//! which equals 1 exactly when 1/q + 1/r <= 1 (the dimension-free regime).
//! Proven rates are upper bounds with unspecified constants, so every fit is
//! accepted one-sidedly: measured slope >= predicted - margin.

use crate::grid::{ScalarField, TimeGrid, TorusGrid};
use crate::model::{HamiltonianSpec, LocalCouplingSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum MetricsError {
    #[error("growth exponents must be > 1 (q = {q}, r = {r})")]
    BadExponents { q: f64, r: f64 },
    #[error("need at least 3 usable (positive, finite) rows, got {0}")]
    TooFewPoints(usize),
    #[error("the circle W1 distance is implemented for d = 1 only (got d = {0})")]
    UnsupportedDimension(usize),
    #[error("W1 needs nonnegative unit-mass slices (mass = {0})")]
    NotADensity(f64),
    #[error("fields live on different grids")]
    GridMismatch,
}

/// β with the regime marker: `dimension_free` iff 1/q + 1/r <= 1 (then β = 1).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BetaValue {
    pub value: f64,
    pub dimension_free: bool,
}

pub fn beta_exponent(q: f64, r: f64, d: usize) -> Result<BetaValue, MetricsError> {
    if !(q > 1.0) || !(r > 1.0) {
        return Err(MetricsError::BadExponents { q, r });
    }
    let qc = q / (q - 1.0);
    let rc = r / (r - 1.0);
    let ratio = qc * rc / (qc + rc);
    let dimension_free = ratio <= 1.0;
    let value = ratio.max(1.0) * (d as f64 + 1.0) - d as f64;
    Ok(BetaValue {
        value,
        dimension_free,
    })
}

/// Integrability exponent γ (None = unbounded, including the borderline case
/// where any large value works).
pub fn gamma_exponent(q: f64, r: f64, d: usize) -> Option<f64> {
    let qc = q / (q - 1.0);
    let threshold = 1.0 + d as f64 / r;
    if qc < threshold {
        Some(r * qc * (d as f64 + 1.0) / (d as f64 - r * (qc - 1.0)))
    } else {
        None
    }
}

/// η = 2(d+1)/d.
pub fn eta_exponent(d: usize) -> f64 {
    2.0 * (d as f64 + 1.0) / d as f64
}

/// Integrability exponent δ built from η (None = unbounded).
pub fn delta_exponent(r: f64, d: usize) -> Option<f64> {
    let eta = eta_exponent(d);
    let threshold = 1.0 + d as f64 / r;
    if eta < threshold {
        Some(r * eta * (d as f64 + 1.0) / (d as f64 - r * (eta - 1.0)))
    } else {
        None
    }
}

/// The error-norm family measured by the sweeps, keyed by CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NormKind {
    MJ2Sq,
    J1WeightedSq,
    ML2Sq,
    UWeightedSq,
    UWeightedSup,
    Pairing,
    PairingTerminal,
    UL1Sup,
}

impl NormKind {
    /// Fixed CSV column order.
    pub const ALL: [NormKind; 8] = [
        NormKind::MJ2Sq,
        NormKind::J1WeightedSq,
        NormKind::ML2Sq,
        NormKind::UWeightedSq,
        NormKind::UWeightedSup,
        NormKind::Pairing,
        NormKind::PairingTerminal,
        NormKind::UL1Sup,
    ];

    pub fn csv_column(self) -> &'static str {
        match self {
            NormKind::MJ2Sq => "err_m_J2_sq",
            NormKind::J1WeightedSq => "err_J1_weighted_sq",
            NormKind::ML2Sq => "err_m_L2_sq",
            NormKind::UWeightedSq => "err_u_weighted_sq",
            NormKind::UWeightedSup => "err_u_weighted_sup",
            NormKind::Pairing => "pairing",
            NormKind::PairingTerminal => "pairing_terminal",
            NormKind::UL1Sup => "err_L1_sup_t",
        }
    }

    pub fn from_csv_column(name: &str) -> Option<NormKind> {
        NormKind::ALL.iter().copied().find(|n| n.csv_column() == name)
    }

    pub fn predicted(self, pe: &PredictedExponents) -> f64 {
        let beta = pe.beta.value;
        match self {
            NormKind::MJ2Sq | NormKind::J1WeightedSq => 1.0 / (1.0 + beta),
            NormKind::ML2Sq => 2.0 / (pe.q * (1.0 + beta)),
            NormKind::UWeightedSq | NormKind::UWeightedSup => 1.0 / (2.0 * (1.0 + beta)),
            NormKind::Pairing | NormKind::PairingTerminal => 0.5,
            NormKind::UL1Sup => 0.25,
        }
    }
}

/// Every exponent the theorems attach to a (q, r, d) triple, with the named
/// rate table used by the presets.
#[derive(Debug, Clone, Serialize)]
pub struct PredictedExponents {
    pub q: f64,
    pub r: f64,
    pub d: usize,
    pub q_conj: f64,
    pub r_conj: f64,
    pub beta: BetaValue,
    /// Diagnostics only: integrability exponents from the proofs.
    pub gamma: Option<f64>,
    pub eta: f64,
    pub delta: Option<f64>,
    pub rates: BTreeMap<String, f64>,
}

impl PredictedExponents {
    pub fn compute(q: f64, r: f64, d: usize) -> Result<Self, MetricsError> {
        let beta = beta_exponent(q, r, d)?;
        let mut rates = BTreeMap::new();
        let b = beta.value;
        rates.insert("m_J2_sq".to_string(), 1.0 / (1.0 + b));
        rates.insert("u_J1_weighted_sq".to_string(), 1.0 / (1.0 + b));
        rates.insert("m_L2_sq".to_string(), 2.0 / (q * (1.0 + b)));
        rates.insert("u_weighted_sq".to_string(), 1.0 / (2.0 * (1.0 + b)));
        rates.insert("nonlocal_pairing".to_string(), 0.5);
        rates.insert("u_L1_sup".to_string(), 0.25);
        Ok(Self {
            q,
            r,
            d,
            q_conj: q / (q - 1.0),
            r_conj: r / (r - 1.0),
            beta,
            gamma: gamma_exponent(q, r, d),
            eta: eta_exponent(d),
            delta: delta_exponent(r, d),
            rates,
        })
    }
}

fn check_pair(a: &ScalarField, b: &ScalarField, time: &TimeGrid) {
    assert_eq!(a.grid(), b.grid(), "fields live on different grids");
    assert_eq!(a.num_slices(), b.num_slices());
    assert_eq!(a.num_slices(), time.slices());
}

fn spacetime_sum(
    time: &TimeGrid,
    grid: TorusGrid,
    mut slice_sum: impl FnMut(usize) -> f64,
) -> f64 {
    let nt = time.nt();
    let mut acc = 0.0;
    for k in 0..=nt {
        let w = if k == 0 || k == nt { 0.5 } else { 1.0 };
        acc += w * slice_sum(k);
    }
    acc * grid.cell_volume() * time.dt()
}

/// ∬ (a - b)² dx dt.
pub fn err_l2_sq(a: &ScalarField, b: &ScalarField, time: &TimeGrid) -> f64 {
    check_pair(a, b, time);
    let grid = a.grid();
    spacetime_sum(time, grid, |k| {
        a.slice(k)
            .iter()
            .zip(b.slice(k))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    })
}

/// ∬ |J2(·,m1) - J2(·,m2)|² dx dt.
pub fn err_j2_sq(
    m1: &ScalarField,
    m2: &ScalarField,
    coupling: &LocalCouplingSpec,
    time: &TimeGrid,
) -> f64 {
    check_pair(m1, m2, time);
    let grid = m1.grid();
    spacetime_sum(time, grid, |k| {
        let a = m1.slice(k);
        let b = m2.slice(k);
        (0..grid.node_count())
            .map(|i| {
                let d = coupling.j2(i, a[i].max(0.0)) - coupling.j2(i, b[i].max(0.0));
                d * d
            })
            .sum()
    })
}

/// ∬ |J1(·,Du1) - J1(·,Du2)|² m dx dt with central differences on both
/// fields (any shared consistent stencil cancels at leading order).
pub fn err_j1_weighted_sq(
    u1: &ScalarField,
    u2: &ScalarField,
    weight: &ScalarField,
    ham: &HamiltonianSpec,
    time: &TimeGrid,
) -> f64 {
    check_pair(u1, u2, time);
    check_pair(u1, weight, time);
    let grid = u1.grid();
    let nodes = grid.node_count();
    let mut g1: Vec<Vec<f64>> = (0..grid.d()).map(|_| vec![0.0; nodes]).collect();
    let mut g2 = g1.clone();
    spacetime_sum(time, grid, |k| {
        for axis in 0..grid.d() {
            crate::variational::central_diff_slice(grid, u1.slice(k), axis, &mut g1[axis]);
            crate::variational::central_diff_slice(grid, u2.slice(k), axis, &mut g2[axis]);
        }
        let w = weight.slice(k);
        (0..nodes)
            .map(|i| {
                let p1 = [g1[0][i], if grid.d() == 2 { g1[1][i] } else { 0.0 }];
                let p2 = [g2[0][i], if grid.d() == 2 { g2[1][i] } else { 0.0 }];
                let j1 = ham.j1(i, &p1);
                let j2 = ham.j1(i, &p2);
                let dx0 = j1[0] - j2[0];
                let dx1 = j1[1] - j2[1];
                w[i].max(0.0) * (dx0 * dx0 + dx1 * dx1)
            })
            .sum()
    })
}

/// ∬ |u1 - u2|² w dx dt.
pub fn err_u_weighted_sq(
    u1: &ScalarField,
    u2: &ScalarField,
    weight: &ScalarField,
    time: &TimeGrid,
) -> f64 {
    check_pair(u1, u2, time);
    check_pair(u1, weight, time);
    let grid = u1.grid();
    spacetime_sum(time, grid, |k| {
        let w = weight.slice(k);
        u1.slice(k)
            .iter()
            .zip(u2.slice(k))
            .zip(w)
            .map(|((a, b), ww)| ww.max(0.0) * (a - b) * (a - b))
            .sum()
    })
}

/// sup_t ∫ |u1 - u2|² w(t,·) dx.
pub fn err_u_weighted_sup(u1: &ScalarField, u2: &ScalarField, weight: &ScalarField) -> f64 {
    assert_eq!(u1.grid(), u2.grid());
    assert_eq!(u1.num_slices(), weight.num_slices());
    let grid = u1.grid();
    let mut sup: f64 = 0.0;
    for k in 0..u1.num_slices() {
        let w = weight.slice(k);
        let s: f64 = u1
            .slice(k)
            .iter()
            .zip(u2.slice(k))
            .zip(w)
            .map(|((a, b), ww)| ww.max(0.0) * (a - b) * (a - b))
            .sum();
        sup = sup.max(s * grid.cell_volume());
    }
    sup
}

/// ∬ (f(m1) - f(m2)) (m1 - m2) dx dt for any slice-wise f-evaluator.
pub fn pairing_spacetime(
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
    m1: &ScalarField,
    m2: &ScalarField,
    time: &TimeGrid,
) -> f64 {
    check_pair(m1, m2, time);
    let grid = m1.grid();
    spacetime_sum(time, grid, |k| {
        let f1 = f(m1.slice(k));
        let f2 = f(m2.slice(k));
        f1.iter()
            .zip(&f2)
            .zip(m1.slice(k).iter().zip(m2.slice(k)))
            .map(|((a, b), (x, y))| (a - b) * (x - y))
            .sum()
    })
}

/// Single-slice pairing ∫ (f(m1) - f(m2)) (m1 - m2) dx.
pub fn pairing_slice(
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
    grid: TorusGrid,
    m1: &[f64],
    m2: &[f64],
) -> f64 {
    let f1 = f(m1);
    let f2 = f(m2);
    f1.iter()
        .zip(&f2)
        .zip(m1.iter().zip(m2))
        .map(|((a, b), (x, y))| (a - b) * (x - y))
        .sum::<f64>()
        * grid.cell_volume()
}

/// sup_t ‖u1(t,·) - u2(t,·)‖_{L¹}.
pub fn err_l1_sup_t(u1: &ScalarField, u2: &ScalarField) -> f64 {
    assert_eq!(u1.grid(), u2.grid());
    assert_eq!(u1.num_slices(), u2.num_slices());
    let grid = u1.grid();
    let mut sup: f64 = 0.0;
    for k in 0..u1.num_slices() {
        let s: f64 = u1
            .slice(k)
            .iter()
            .zip(u2.slice(k))
            .map(|(a, b)| (a - b).abs())
            .sum();
        sup = sup.max(s * grid.cell_volume());
    }
    sup
}

/// Circle W1 distance between two unit-mass slices via cumulative
/// distributions: min over the scalar shift c of ∫ |F1 - F2 - c| dx, attained
/// at c = median(F1 - F2). Exact for the discrete measures the grid carries.
pub fn w1_torus_1d(grid: TorusGrid, mu1: &[f64], mu2: &[f64]) -> Result<f64, MetricsError> {
    if grid.d() != 1 {
        return Err(MetricsError::UnsupportedDimension(grid.d()));
    }
    if mu1.len() != grid.node_count() || mu2.len() != grid.node_count() {
        return Err(MetricsError::GridMismatch);
    }
    let dx = grid.dx();
    for &(m1, m2) in mu1.iter().zip(mu2).map(|(a, b)| (*a, *b)).collect::<Vec<_>>().iter() {
        if m1 < -1e-12 || m2 < -1e-12 {
            return Err(MetricsError::NotADensity(m1.min(m2)));
        }
    }
    let mass1: f64 = mu1.iter().sum::<f64>() * dx;
    let mass2: f64 = mu2.iter().sum::<f64>() * dx;
    if (mass1 - 1.0).abs() > 1e-8 || (mass2 - 1.0).abs() > 1e-8 {
        return Err(MetricsError::NotADensity(mass1.min(mass2)));
    }
    let n = grid.n();
    let mut diffs = Vec::with_capacity(n);
    let mut c1 = 0.0;
    let mut c2 = 0.0;
    for i in 0..n {
        c1 += mu1[i] * dx;
        c2 += mu2[i] * dx;
        diffs.push(c1 - c2);
    }
    let mut sorted = diffs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[(n - 1) / 2];
    Ok(diffs.iter().map(|d| (d - median).abs()).sum::<f64>() * dx)
}

/// Uniform-bound diagnostics recorded per solve (the discrete counterpart of
/// the uniform estimates: these must stay bounded as ν shrinks).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolutionBounds {
    pub max_m: f64,
    pub max_abs_u: f64,
    pub max_grad_u: f64,
}

/// One ν row of a sweep: the measured norm values keyed by CSV column.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub nu: f64,
    pub values: BTreeMap<String, f64>,
    pub iters: usize,
    pub runtime_s: f64,
    pub converged: bool,
    pub bounds: SolutionBounds,
}

/// Summary of the ν = 0 reference solve and its adequacy check.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceInfo {
    pub n: usize,
    pub nt: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Per-norm self-convergence gap between the reference grid and a 2×
    /// coarser one, both restricted to the sweep grid.
    pub self_gap: BTreeMap<String, f64>,
}

/// All rows of a ν sweep against one frozen reference solution.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub preset: String,
    pub rows: Vec<SweepRow>,
    pub reference: ReferenceInfo,
    /// Norms whose smallest ν row sits within 4× of the reference
    /// self-convergence gap; fits are suppressed for those.
    pub reference_limited: BTreeMap<String, bool>,
}

impl SweepResult {
    /// (ν, value) pairs for one norm, converged rows only.
    pub fn series(&self, norm: NormKind) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.converged)
            .filter_map(|r| r.values.get(norm.csv_column()).map(|v| (r.nu, *v)))
            .collect()
    }

    pub fn is_reference_limited(&self, norm: NormKind) -> bool {
        self.reference_limited
            .get(norm.csv_column())
            .copied()
            .unwrap_or(false)
    }
}

/// A single fitted log-log rate against its proven exponent.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub norm: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub predicted: f64,
    pub margin: f64,
    /// One-sided: slope >= predicted - margin (proven rates are upper bounds).
    pub pass: bool,
    pub points_used: usize,
    pub degenerate: bool,
}

pub const DEFAULT_FIT_MARGIN: f64 = 0.1;

/// Least-squares slope of log(value) against log(ν). Nonpositive values are
/// excluded (and reported through `points_used`).
pub fn fit_rate(
    points: &[(f64, f64)],
    norm: &str,
    predicted: f64,
    margin: f64,
) -> Result<RateFit, MetricsError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(nu, v)| *nu > 0.0 && *v > 0.0 && v.is_finite())
        .collect();
    if usable.len() < 3 {
        return Err(MetricsError::TooFewPoints(usable.len()));
    }
    let n = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|(nu, _)| nu.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, v)| v.ln()).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let p = intercept + slope * x;
            (y - p) * (y - p)
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(RateFit {
        norm: norm.to_string(),
        slope,
        intercept,
        r_squared,
        predicted,
        margin,
        pass: slope >= predicted - margin,
        points_used: usable.len(),
        degenerate: usable.len() < 3,
    })
}
