//! Parametric Hamiltonians and couplings with their Fenchel conjugates,
//! derivative maps, coercivity maps J1/J2 and assumption validators.
//!
//! Everything is restricted to the separable power families
//!
//! ```text
//! H(x,p) = (1/r)|τ1(x) p|^r + h(x),      F(x,m) = (1/q)(τ2(x) m)^q,
//! ```
//!
//! for which the conjugates, the J-maps and the sharp coercivity constant
//! c0 = 1/max{q, q'} have closed forms, so every identity here is testable
//! against exact formulas. A nonlocal, regularizing coupling built from an
//! even smoothing kernel is provided alongside.

use crate::grid::{periodic_convolve, ScalarField, TorusGrid};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("growth exponent must be > 1, got {0}")]
    BadExponent(f64),
    #[error("spatial weight must be strictly positive everywhere")]
    NonPositiveWeight,
    #[error("kernel must be even under index negation")]
    KernelNotEven,
    #[error("kernel lives on a different grid")]
    KernelGridMismatch,
    #[error("linear kernel-coupling coefficient must be > 0, got {0}")]
    BadKernelCoupling(f64),
    #[error("field has wrong node count")]
    BadField,
}

/// x^e for x ≥ 0 with fast paths for the exponents the presets use.
#[inline]
pub(crate) fn powr(x: f64, e: f64) -> f64 {
    if e == 2.0 {
        x * x
    } else if e == 1.0 {
        x
    } else if e == 3.0 {
        x * x * x
    } else if e == 1.5 {
        x * x.sqrt()
    } else if e == 0.5 {
        x.sqrt()
    } else {
        x.powf(e)
    }
}

#[inline]
fn mag(p: &[f64; 2]) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

#[inline]
fn conjugate_exponent(e: f64) -> f64 {
    e / (e - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HamiltonianKind {
    /// H(x,p) = (1/r)|τ(x)p|^r + h(x)
    Power,
    /// H ≡ 0: test-only escape hatch; violates the (H2) growth bound.
    Zero,
}

/// Separable power-family Hamiltonian on a fixed grid.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    kind: HamiltonianKind,
    grid: TorusGrid,
    r: f64,
    tau: Vec<f64>,
    /// Cached τ(x)^r.
    tau_r: Vec<f64>,
    h: Vec<f64>,
}

impl HamiltonianSpec {
    pub fn power(
        grid: TorusGrid,
        r: f64,
        tau: &ScalarField,
        h: &ScalarField,
    ) -> Result<Self, ModelError> {
        if !(r > 1.0) || !r.is_finite() {
            return Err(ModelError::BadExponent(r));
        }
        if tau.grid() != grid || h.grid() != grid {
            return Err(ModelError::KernelGridMismatch);
        }
        let tau_v = tau.slice(0).to_vec();
        if tau_v.iter().any(|&t| !(t > 0.0)) {
            return Err(ModelError::NonPositiveWeight);
        }
        let tau_r = tau_v.iter().map(|&t| powr(t, r)).collect();
        Ok(Self {
            kind: HamiltonianKind::Power,
            grid,
            r,
            tau: tau_v,
            tau_r,
            h: h.slice(0).to_vec(),
        })
    }

    /// Constant-coefficient convenience constructor (τ ≡ 1, h ≡ 0 defaults).
    pub fn isotropic(grid: TorusGrid, r: f64) -> Result<Self, ModelError> {
        let one = ScalarField::constant(grid, 1, 1.0);
        let zero = ScalarField::zeros(grid, 1);
        Self::power(grid, r, &one, &zero)
    }

    /// The H ≡ 0 escape hatch.
    pub fn zero(grid: TorusGrid) -> Self {
        let nodes = grid.node_count();
        Self {
            kind: HamiltonianKind::Zero,
            grid,
            r: 2.0,
            tau: vec![0.0; nodes],
            tau_r: vec![0.0; nodes],
            h: vec![0.0; nodes],
        }
    }

    #[inline]
    pub fn kind(&self) -> HamiltonianKind {
        self.kind
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn r(&self) -> f64 {
        self.r
    }

    #[inline]
    pub fn r_conj(&self) -> f64 {
        conjugate_exponent(self.r)
    }

    /// H(x, p).
    #[inline]
    pub fn value(&self, idx: usize, p: &[f64; 2]) -> f64 {
        self.value_mag(idx, mag(p))
    }

    /// H(x, p) as a function of |p| (the family is isotropic in p).
    #[inline]
    pub fn value_mag(&self, idx: usize, pmag: f64) -> f64 {
        match self.kind {
            HamiltonianKind::Zero => 0.0,
            HamiltonianKind::Power => self.tau_r[idx] * powr(pmag, self.r) / self.r + self.h[idx],
        }
    }

    /// |DpH(x, p)| as a function of |p|.
    #[inline]
    pub fn grad_mag(&self, idx: usize, pmag: f64) -> f64 {
        match self.kind {
            HamiltonianKind::Zero => 0.0,
            HamiltonianKind::Power => self.tau_r[idx] * powr(pmag, self.r - 1.0),
        }
    }

    /// DpH(x, p) = τ^r |p|^{r-2} p, extended by 0 at p = 0.
    #[inline]
    pub fn grad(&self, idx: usize, p: &[f64; 2]) -> [f64; 2] {
        let m = mag(p);
        if m == 0.0 || self.kind == HamiltonianKind::Zero {
            return [0.0, 0.0];
        }
        let scale = self.grad_mag(idx, m) / m;
        [scale * p[0], scale * p[1]]
    }

    /// Fenchel conjugate H*(x, ξ) = (1/r')|ξ/τ|^{r'} - h(x).
    ///
    /// For the zero variant the conjugate is +∞ away from ξ = 0.
    #[inline]
    pub fn conjugate(&self, idx: usize, xi: &[f64; 2]) -> f64 {
        match self.kind {
            HamiltonianKind::Zero => {
                if mag(xi) == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            HamiltonianKind::Power => {
                let rc = self.r_conj();
                powr(mag(xi) / self.tau[idx], rc) / rc - self.h[idx]
            }
        }
    }

    /// Coercivity map J1(x,p) = τ^{r/2}|p|^{r/2-1} p.
    #[inline]
    pub fn j1(&self, idx: usize, p: &[f64; 2]) -> [f64; 2] {
        let m = mag(p);
        if m == 0.0 {
            return [0.0, 0.0];
        }
        let scale = powr(self.tau[idx], 0.5 * self.r) * powr(m, 0.5 * self.r - 1.0);
        [scale * p[0], scale * p[1]]
    }

    /// J1*(x,ξ) = τ^{-r'/2}|ξ|^{r'/2-1} ξ.
    #[inline]
    pub fn j1_star(&self, idx: usize, xi: &[f64; 2]) -> [f64; 2] {
        let m = mag(xi);
        if m == 0.0 {
            return [0.0, 0.0];
        }
        let rc = self.r_conj();
        let scale = powr(self.tau[idx], -0.5 * rc) * powr(m, 0.5 * rc - 1.0);
        [scale * xi[0], scale * xi[1]]
    }

    /// Sharp (H5-1) constant for the power family: 1/max{r, r'}.
    #[inline]
    pub fn c0(&self) -> f64 {
        1.0 / self.r.max(self.r_conj())
    }

    pub fn is_x_independent(&self) -> bool {
        let t0 = self.tau[0];
        let h0 = self.h[0];
        self.tau.iter().all(|&t| t == t0) && self.h.iter().all(|&v| v == h0)
    }

    /// Constants (C1, C2) for the spatial-regularity condition, from the
    /// product form H = h1(x)|p|^r + h2(x) with h1 = τ^r/r:
    /// C1 = ‖Dh1‖∞/(r-1), C2 = ‖Dh2‖∞ (discrete forward-difference norms).
    pub fn regularity_constants(&self) -> (f64, f64) {
        if self.is_x_independent() {
            return (0.0, 0.0);
        }
        let dx = self.grid.dx();
        let mut dh1: f64 = 0.0;
        let mut dh2: f64 = 0.0;
        for idx in 0..self.grid.node_count() {
            for axis in 0..self.grid.d() {
                let j = self.grid.shift(idx, axis, 1);
                dh1 = dh1.max(((self.tau_r[j] - self.tau_r[idx]) / (self.r * dx)).abs());
                dh2 = dh2.max(((self.h[j] - self.h[idx]) / dx).abs());
            }
        }
        (dh1 / (self.r - 1.0), dh2)
    }

    pub fn max_h(&self) -> f64 {
        self.h.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }
}

/// Local coupling F(x,m) = (1/q)(τ(x)m)^q, f(x,m) = τ(x)^q m^{q-1}.
#[derive(Debug, Clone)]
pub struct LocalCouplingSpec {
    grid: TorusGrid,
    q: f64,
    tau: Vec<f64>,
    /// Cached τ(x)^q.
    tau_q: Vec<f64>,
}

impl LocalCouplingSpec {
    pub fn new(grid: TorusGrid, q: f64, tau: &ScalarField) -> Result<Self, ModelError> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(ModelError::BadExponent(q));
        }
        if tau.grid() != grid {
            return Err(ModelError::KernelGridMismatch);
        }
        let tau_v = tau.slice(0).to_vec();
        if tau_v.iter().any(|&t| !(t > 0.0)) {
            return Err(ModelError::NonPositiveWeight);
        }
        let tau_q = tau_v.iter().map(|&t| powr(t, q)).collect();
        Ok(Self {
            grid,
            q,
            tau: tau_v,
            tau_q,
        })
    }

    pub fn constant(grid: TorusGrid, q: f64) -> Result<Self, ModelError> {
        Self::new(grid, q, &ScalarField::constant(grid, 1, 1.0))
    }

    /// τ ≡ 0 escape hatch (f ≡ 0): decouples the system. Violates the (H1)
    /// strict-monotonicity assumption and is flagged by the validator.
    pub fn decoupled(grid: TorusGrid, q: f64) -> Result<Self, ModelError> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(ModelError::BadExponent(q));
        }
        let nodes = grid.node_count();
        Ok(Self {
            grid,
            q,
            tau: vec![0.0; nodes],
            tau_q: vec![0.0; nodes],
        })
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn q(&self) -> f64 {
        self.q
    }

    #[inline]
    pub fn q_conj(&self) -> f64 {
        conjugate_exponent(self.q)
    }

    pub fn is_decoupled(&self) -> bool {
        self.tau_q.iter().all(|&t| t == 0.0)
    }

    /// F(x,m); equals +∞ for m < 0 by convention.
    #[inline]
    pub fn antiderivative(&self, idx: usize, m: f64) -> f64 {
        if m < 0.0 {
            return f64::INFINITY;
        }
        powr(self.tau[idx] * m, self.q) / self.q
    }

    /// Coupling f(x,m) = τ^q m^{q-1}; f(x,0) = 0 by the normalization.
    #[inline]
    pub fn f(&self, idx: usize, m: f64) -> f64 {
        debug_assert!(m >= 0.0, "f is only defined for m >= 0");
        self.tau_q[idx] * powr(m, self.q - 1.0)
    }

    /// Fenchel conjugate F*(x,α) = (1/q')(α/τ)^{q'} for α ≥ 0, zero below.
    #[inline]
    pub fn conjugate(&self, idx: usize, alpha: f64) -> f64 {
        if alpha <= 0.0 {
            return 0.0;
        }
        if self.tau[idx] == 0.0 {
            // F ≡ 0, so the conjugate is the indicator of α ≤ 0.
            return f64::INFINITY;
        }
        let qc = self.q_conj();
        powr(alpha / self.tau[idx], qc) / qc
    }

    /// J2(x,m) = τ^{q/2} m^{q/2}.
    #[inline]
    pub fn j2(&self, idx: usize, m: f64) -> f64 {
        powr(self.tau[idx] * m, 0.5 * self.q)
    }

    /// J2*(x,α) = τ^{-q'/2} α^{q'/2} for α ≥ 0.
    #[inline]
    pub fn j2_star(&self, idx: usize, alpha: f64) -> f64 {
        debug_assert!(alpha >= 0.0);
        if self.tau[idx] == 0.0 {
            return 0.0;
        }
        powr(alpha / self.tau[idx], 0.5 * self.q_conj())
    }

    /// Sharp (H5-2) constant: 1/max{q, q'}.
    #[inline]
    pub fn c0(&self) -> f64 {
        1.0 / self.q.max(self.q_conj())
    }

    /// Evaluates f nodewise over a density slice.
    pub fn f_slice(&self, m: &[f64]) -> Vec<f64> {
        m.iter()
            .enumerate()
            .map(|(i, &mv)| self.f(i, mv.max(0.0)))
            .collect()
    }
}

/// Nonlocal regularizing coupling f(x,m) = ∫ g(y, (φ*m)(y)) φ(x-y) dy with a
/// smooth even kernel φ and g(y,z) = c1 z + c2 z^3 strictly increasing in z.
#[derive(Debug, Clone)]
pub struct NonlocalCouplingSpec {
    grid: TorusGrid,
    kernel: Vec<f64>,
    c_lin: f64,
    c_cub: f64,
}

impl NonlocalCouplingSpec {
    pub fn new(
        grid: TorusGrid,
        kernel: &ScalarField,
        c_lin: f64,
        c_cub: f64,
    ) -> Result<Self, ModelError> {
        if kernel.grid() != grid {
            return Err(ModelError::KernelGridMismatch);
        }
        if !(c_lin > 0.0) || c_cub < 0.0 {
            return Err(ModelError::BadKernelCoupling(c_lin));
        }
        let k = kernel.slice(0);
        for i in 0..grid.node_count() {
            if (k[i] - k[grid.mirror(i)]).abs() > 1e-12 * (1.0 + k[i].abs()) {
                return Err(ModelError::KernelNotEven);
            }
        }
        Ok(Self {
            grid,
            kernel: k.to_vec(),
            c_lin,
            c_cub,
        })
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    #[inline]
    pub fn g(&self, z: f64) -> f64 {
        self.c_lin * z + self.c_cub * z * z * z
    }

    #[inline]
    pub fn g_prime(&self, z: f64) -> f64 {
        self.c_lin + 3.0 * self.c_cub * z * z
    }

    /// f(·, m) on one density slice: convolve, apply g, convolve again
    /// (kernel evenness makes the second convolution the adjoint one).
    pub fn f_slice(&self, m: &[f64]) -> Result<Vec<f64>, ModelError> {
        if m.len() != self.grid.node_count() {
            return Err(ModelError::BadField);
        }
        let z = periodic_convolve(self.grid, m, &self.kernel);
        let gz: Vec<f64> = z.iter().map(|&zv| self.g(zv)).collect();
        Ok(periodic_convolve(self.grid, &gz, &self.kernel))
    }

    /// Lipschitz constant of μ ↦ f(x, μ) in the W1 distance:
    /// L = sup|g_z| · Lip(φ), with |φ*m| ≤ ‖φ‖∞ bounding the g_z range.
    pub fn w1_lipschitz(&self) -> f64 {
        let dx = self.grid.dx();
        let mut lip_phi: f64 = 0.0;
        for idx in 0..self.grid.node_count() {
            for axis in 0..self.grid.d() {
                let j = self.grid.shift(idx, axis, 1);
                lip_phi = lip_phi.max(((self.kernel[j] - self.kernel[idx]) / dx).abs());
            }
        }
        let z_max = self.kernel.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        // In 2-d the gradient norm can pick up both axes.
        let dim_slack = (self.grid.d() as f64).sqrt();
        self.g_prime(z_max) * lip_phi * dim_slack
    }
}

/// Either coupling family, as consumed by the fixed-point coupler.
#[derive(Debug, Clone)]
pub enum Coupling {
    Local(LocalCouplingSpec),
    Nonlocal(NonlocalCouplingSpec),
}

impl Coupling {
    pub fn grid(&self) -> TorusGrid {
        match self {
            Coupling::Local(c) => c.grid(),
            Coupling::Nonlocal(c) => c.grid(),
        }
    }

    /// f(·, m) over one density slice. Roundoff negatives in m are clamped
    /// to zero before the local power law is applied.
    pub fn f_slice(&self, m: &[f64]) -> Vec<f64> {
        match self {
            Coupling::Local(c) => c.f_slice(m),
            Coupling::Nonlocal(c) => c.f_slice(m).expect("coupling grid mismatch"),
        }
    }

    pub(crate) fn fill_f(&self, m: &[f64], out: &mut [f64]) {
        match self {
            Coupling::Local(c) => {
                for (i, (o, &mv)) in out.iter_mut().zip(m.iter()).enumerate() {
                    *o = c.f(i, mv.max(0.0));
                }
            }
            Coupling::Nonlocal(c) => {
                out.copy_from_slice(&c.f_slice(m).expect("coupling grid mismatch"));
            }
        }
    }

    pub fn as_local(&self) -> Option<&LocalCouplingSpec> {
        match self {
            Coupling::Local(c) => Some(c),
            Coupling::Nonlocal(_) => None,
        }
    }
}

/// Periodized Gaussian sampled on the grid and renormalized to unit discrete
/// mass; exactly even under index negation. `truncate` cuts the support at
/// the given circle radius (used by the mollifier construction).
pub fn gaussian_kernel(grid: TorusGrid, sigma: f64, truncate: Option<f64>) -> ScalarField {
    assert!(sigma > 0.0);
    let n = grid.n();
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    // per-axis periodization over nearest images, expressed through the
    // circle distance so the result is exactly symmetric
    let axis_profile: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 * grid.dx();
            let d = x.min(1.0 - x);
            (-d * d * inv2s2).exp()
                + (-(1.0 - d) * (1.0 - d) * inv2s2).exp()
                + (-(1.0 + d) * (1.0 + d) * inv2s2).exp()
        })
        .collect();
    let mut values = vec![0.0; grid.node_count()];
    for (idx, v) in values.iter_mut().enumerate() {
        let prof = if grid.d() == 1 {
            axis_profile[idx]
        } else {
            axis_profile[idx % n] * axis_profile[idx / n]
        };
        *v = prof;
        if let Some(radius) = truncate {
            let c = grid.coords(idx);
            let mut dist2 = 0.0;
            for a in 0..grid.d() {
                let d = c[a].min(1.0 - c[a]);
                dist2 += d * d;
            }
            if dist2.sqrt() > radius {
                *v = 0.0;
            }
        }
    }
    let mass: f64 = values.iter().sum::<f64>() * grid.cell_volume();
    assert!(mass > 0.0, "kernel support vanished on the grid");
    values.iter_mut().for_each(|v| *v /= mass);
    ScalarField::from_nodes(grid, values).expect("kernel values are finite")
}

/// (H5-2) residual F(x,m) + F*(x,α) - mα - c0 (J2(x,m) - J2*(x,α))², m,α ≥ 0.
///
/// Nonnegative for the power family with c0 = 1/max{q,q'}.
pub fn coercivity_residual(c: &LocalCouplingSpec, idx: usize, m: f64, alpha: f64) -> f64 {
    coercivity_residual_c0(c, idx, m, alpha, c.c0())
}

/// Same residual with an explicit constant (counterexample searches).
///
/// Evaluated in the expanded form
/// (1/q - c0)(τm)^q + (1/q' - c0)(α/τ)^{q'} + 2 c0 J2 J2* - mα:
/// the naive form cancels catastrophically when q is close to 1.
pub fn coercivity_residual_c0(
    c: &LocalCouplingSpec,
    idx: usize,
    m: f64,
    alpha: f64,
    c0: f64,
) -> f64 {
    debug_assert!(m >= 0.0 && alpha >= 0.0);
    let q = c.q();
    let qc = c.q_conj();
    let a = powr(c.tau[idx] * m, q);
    let b = if c.tau[idx] == 0.0 {
        if alpha > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        powr(alpha / c.tau[idx], qc)
    };
    (1.0 / q - c0) * a + (1.0 / qc - c0) * b + 2.0 * c0 * (a * b).sqrt() - m * alpha
}

/// (H5-1) residual H(x,p) + H*(x,ξ) - p·ξ - c0 |J1(x,p) - J1*(x,ξ)|².
pub fn coercivity_residual_h(
    ham: &HamiltonianSpec,
    idx: usize,
    p: &[f64; 2],
    xi: &[f64; 2],
) -> f64 {
    coercivity_residual_h_c0(ham, idx, p, xi, ham.c0())
}

pub fn coercivity_residual_h_c0(
    ham: &HamiltonianSpec,
    idx: usize,
    p: &[f64; 2],
    xi: &[f64; 2],
    c0: f64,
) -> f64 {
    let r = ham.r();
    let rc = ham.r_conj();
    let pm = mag(p);
    let xm = mag(xi);
    let a = powr(ham.tau[idx] * pm, r);
    let b = powr(xm / ham.tau[idx], rc);
    let dot = p[0] * xi[0] + p[1] * xi[1];
    // J1·J1* = sqrt(a b) · cos(angle between p and ξ)
    let jdot = if pm > 0.0 && xm > 0.0 {
        (a * b).sqrt() * dot / (pm * xm)
    } else {
        0.0
    };
    (1.0 / r - c0) * a + (1.0 / rc - c0) * b + 2.0 * c0 * jdot - dot
}

/// Unified view over the two conjugate families, for the invariant suites.
pub enum ConjugatePair<'a> {
    Hamiltonian(&'a HamiltonianSpec),
    Coupling(&'a LocalCouplingSpec),
}

impl ConjugatePair<'_> {
    pub fn c0(&self) -> f64 {
        match self {
            ConjugatePair::Hamiltonian(h) => h.c0(),
            ConjugatePair::Coupling(c) => c.c0(),
        }
    }

    /// Fenchel–Young residual forward(v) + conjugate(w) - v·w at one node.
    pub fn young_residual(&self, idx: usize, v: &[f64; 2], w: &[f64; 2]) -> f64 {
        match self {
            ConjugatePair::Hamiltonian(h) => {
                h.value(idx, v) + h.conjugate(idx, w) - (v[0] * w[0] + v[1] * w[1])
            }
            ConjugatePair::Coupling(c) => {
                c.antiderivative(idx, v[0]) + c.conjugate(idx, w[0]) - v[0] * w[0]
            }
        }
    }

    /// Derivative of the forward function (the Fenchel equality point).
    pub fn derivative(&self, idx: usize, v: &[f64; 2]) -> [f64; 2] {
        match self {
            ConjugatePair::Hamiltonian(h) => h.grad(idx, v),
            ConjugatePair::Coupling(c) => [c.f(idx, v[0]), 0.0],
        }
    }
}

/// Concrete constant witnessing the (H1)/(H2) growth sandwich on a sampled
/// range, with the violation (if any) that was found.
#[derive(Debug, Clone)]
pub struct GrowthWitness {
    pub c0: f64,
    pub holds: bool,
    pub violation: Option<(f64, f64)>,
}

/// C0 with C0^{-1} m^{q-1} - C0 <= f(x,m) <= C0 m^{q-1} + C0 on the samples.
pub fn coupling_growth_witness(c: &LocalCouplingSpec, samples: &[f64]) -> GrowthWitness {
    let mut hi: f64 = 1.0;
    let mut lo: f64 = 1.0;
    for &t in &c.tau_q {
        hi = hi.max(t);
        if t > 0.0 {
            lo = lo.max(1.0 / t);
        } else {
            lo = f64::INFINITY;
        }
    }
    let c0 = if lo.is_finite() { hi.max(lo) } else { hi };
    let degenerate = !lo.is_finite();
    let mut violation = None;
    'outer: for idx in 0..c.grid.node_count() {
        for &m in samples {
            let f = c.f(idx, m.max(0.0));
            let mq = powr(m.max(0.0), c.q() - 1.0);
            let upper = c0 * mq + c0;
            let lower = if degenerate {
                f64::NEG_INFINITY
            } else {
                mq / c0 - c0
            };
            if f > upper + 1e-9 || f < lower - 1e-9 {
                violation = Some((m, f));
                break 'outer;
            }
        }
    }
    GrowthWitness {
        c0,
        holds: violation.is_none() && !degenerate,
        violation,
    }
}

/// Same for the Hamiltonian; the zero variant is reported as violating (H2).
pub fn hamiltonian_growth_witness(ham: &HamiltonianSpec, samples: &[f64]) -> GrowthWitness {
    if ham.kind() == HamiltonianKind::Zero {
        // C0^{-1}|p|^r - C0 <= 0 fails for large p whatever C0 is.
        return GrowthWitness {
            c0: f64::INFINITY,
            holds: false,
            violation: Some((samples.last().copied().unwrap_or(1.0), 0.0)),
        };
    }
    let r = ham.r();
    let mut hi: f64 = 1.0;
    let mut lo: f64 = 1.0;
    let mut habs: f64 = 0.0;
    for i in 0..ham.grid.node_count() {
        hi = hi.max(ham.tau_r[i] / r);
        lo = lo.max(r / ham.tau_r[i]);
        habs = habs.max(ham.h[i].abs());
    }
    let c0 = hi.max(lo).max(habs).max(1.0);
    let mut violation = None;
    'outer: for idx in 0..ham.grid.node_count() {
        for &pm in samples {
            let v = ham.value_mag(idx, pm.abs());
            let pr = powr(pm.abs(), r);
            if v > c0 * pr + c0 + 1e-9 || v < pr / c0 - c0 - 1e-9 {
                violation = Some((pm, v));
                break 'outer;
            }
        }
    }
    GrowthWitness {
        c0,
        holds: violation.is_none(),
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate_space;
    use proptest::prelude::*;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    #[test]
    fn quadratic_hamiltonian_reference_values() {
        let g = grid1(8);
        let ham = HamiltonianSpec::isotropic(g, 2.0).unwrap();
        // H(p) = p²/2: H(1) = 1/2, DH(1) = 1, H*(1) = 1/2
        assert!((ham.value(0, &[1.0, 0.0]) - 0.5).abs() < 1e-14);
        assert!((ham.grad(0, &[1.0, 0.0])[0] - 1.0).abs() < 1e-14);
        assert!((ham.conjugate(0, &[1.0, 0.0]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hamiltonian_at_zero_momentum() {
        let g = grid1(8);
        let h = ScalarField::sample(g, |x| 0.3 + x[0]);
        let tau = ScalarField::constant(g, 1, 1.0);
        for r in [1.3, 2.0, 3.7] {
            let ham = HamiltonianSpec::power(g, r, &tau, &h).unwrap();
            let idx = 3;
            assert!((ham.value(idx, &[0.0, 0.0]) - h.slice(0)[idx]).abs() < 1e-14);
            assert_eq!(ham.grad(idx, &[0.0, 0.0]), [0.0, 0.0]);
        }
    }

    #[test]
    fn fenchel_equality_at_touching_point_r3() {
        // r = 3, p = 2: H = 8/3, ξ = H'(2) = 4, and p·ξ - H = H*(ξ) = 16/3.
        let g = grid1(8);
        let ham = HamiltonianSpec::isotropic(g, 3.0).unwrap();
        let h = ham.value(0, &[2.0, 0.0]);
        assert!((h - 8.0 / 3.0).abs() < 1e-12);
        let xi = ham.grad(0, &[2.0, 0.0]);
        assert!((xi[0] - 4.0).abs() < 1e-12);
        let hs = ham.conjugate(0, &xi);
        assert!((hs - 16.0 / 3.0).abs() < 1e-12);
        assert!((2.0 * 4.0 - h - hs).abs() < 1e-12);
    }

    #[test]
    fn coupling_reference_values() {
        let g = grid1(8);
        let c = LocalCouplingSpec::constant(g, 2.0).unwrap();
        assert!((c.antiderivative(0, 1.0) - 0.5).abs() < 1e-14);
        assert!((c.f(0, 1.0) - 1.0).abs() < 1e-14);
        assert!((c.conjugate(0, 1.0) - 0.5).abs() < 1e-14);
        // F*(α) = 0 for α < 0
        assert_eq!(c.conjugate(0, -3.0), 0.0);
        // q = 3, τ = 2, m = 1: F = 8/3, f = 8
        let tau2 = ScalarField::constant(g, 1, 2.0);
        let c = LocalCouplingSpec::new(g, 3.0, &tau2).unwrap();
        assert!((c.antiderivative(0, 1.0) - 8.0 / 3.0).abs() < 1e-12);
        assert!((c.f(0, 1.0) - 8.0).abs() < 1e-12);
        // F(x, m) = +∞ for m < 0
        assert!(c.antiderivative(0, -0.1).is_infinite());
    }

    #[test]
    fn j_maps_closed_forms() {
        let g = grid1(8);
        let c = LocalCouplingSpec::constant(g, 2.0).unwrap();
        for m in [0.0, 0.4, 2.5] {
            assert!((c.j2(0, m) - m).abs() < 1e-14); // q = 2, τ = 1: J2 = m
        }
        let ham = HamiltonianSpec::isotropic(g, 2.0).unwrap();
        assert!((ham.j1(0, &[0.7, 0.0])[0] - 0.7).abs() < 1e-14);
        assert!((ham.j1_star(0, &[0.7, 0.0])[0] - 0.7).abs() < 1e-14);
        let ham4 = HamiltonianSpec::isotropic(g, 4.0).unwrap();
        assert!((ham4.j1(0, &[2.0, 0.0])[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn coercivity_residual_hand_values() {
        let g = grid1(8);
        let c = LocalCouplingSpec::constant(g, 2.0).unwrap();
        // Fenchel equality point q=2: residual exactly 0
        assert!(coercivity_residual(&c, 0, 1.0, 1.0).abs() < 1e-14);
        // m=1, α=0: F + F* - 0 - c0 (1-0)² = 1/2 - 1/2 = 0
        assert!(coercivity_residual(&c, 0, 1.0, 0.0).abs() < 1e-14);
    }

    #[test]
    fn c0_is_nearly_optimal_at_q2() {
        let g = grid1(8);
        let c = LocalCouplingSpec::constant(g, 2.0).unwrap();
        // bumping c0 to 0.51 breaks the inequality: residual = -0.01 (m-α)²
        let res = coercivity_residual_c0(&c, 0, 3.0, 1.0, 0.51);
        assert!(res < -1e-3, "got {res}");
    }

    #[test]
    fn rejects_invalid_specs() {
        let g = grid1(8);
        assert!(HamiltonianSpec::isotropic(g, 1.0).is_err());
        assert!(LocalCouplingSpec::constant(g, 0.9).is_err());
        let neg = ScalarField::sample(g, |x| x[0] - 0.5);
        assert!(LocalCouplingSpec::new(g, 2.0, &neg).is_err());
    }

    #[test]
    fn nonlocal_constant_and_delta_cases() {
        let g = grid1(32);
        let kernel = gaussian_kernel(g, 0.08, None);
        let spec = NonlocalCouplingSpec::new(g, &kernel, 1.0, 0.0).unwrap();
        // m ≡ 1, g(z) = z, unit-mass kernel: f ≡ 1
        let f = spec.f_slice(&vec![1.0; 32]).unwrap();
        for v in &f {
            assert!((v - 1.0).abs() < 1e-10, "{v}");
        }
        // delta kernel reproduces the local coupling
        let mut delta = vec![0.0; 32];
        delta[0] = 1.0 / g.cell_volume();
        let dk = ScalarField::from_nodes(g, delta).unwrap();
        let spec = NonlocalCouplingSpec::new(g, &dk, 1.0, 0.0).unwrap();
        let m: Vec<f64> = (0..32).map(|i| 1.0 + 0.3 * ((i as f64) * 0.2).sin()).collect();
        let f = spec.f_slice(&m).unwrap();
        for (a, b) in f.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn nonlocal_monotone_pairing_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = grid1(32);
        let kernel = gaussian_kernel(g, 0.1, None);
        let spec = NonlocalCouplingSpec::new(g, &kernel, 1.0, 0.5).unwrap();
        for _ in 0..200 {
            let raw1: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..2.0)).collect();
            let raw2: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..2.0)).collect();
            let norm = |v: Vec<f64>| {
                let mass = integrate_space(g, &v);
                v.into_iter().map(|x| x / mass).collect::<Vec<_>>()
            };
            let m1 = norm(raw1);
            let m2 = norm(raw2);
            let f1 = spec.f_slice(&m1).unwrap();
            let f2 = spec.f_slice(&m2).unwrap();
            let pairing: f64 = f1
                .iter()
                .zip(&f2)
                .zip(m1.iter().zip(&m2))
                .map(|((a, b), (x, y))| (a - b) * (x - y))
                .sum::<f64>()
                * g.cell_volume();
            assert!(pairing >= -1e-12, "pairing = {pairing}");
        }
    }

    #[test]
    fn growth_witness_reports_concrete_constant() {
        let g = grid1(16);
        let tau = ScalarField::sample(g, |x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).cos());
        let c = LocalCouplingSpec::new(g, 2.0, &tau).unwrap();
        let samples: Vec<f64> = (0..200).map(|i| i as f64 * 0.5).collect();
        let w = coupling_growth_witness(&c, &samples);
        assert!(w.holds);
        assert!(w.c0 >= 1.0 && w.c0.is_finite());
        // zero Hamiltonian flagged as violating (H2)
        let hz = HamiltonianSpec::zero(g);
        assert!(!hamiltonian_growth_witness(&hz, &samples).holds);
    }

    proptest! {
        #[test]
        fn fenchel_young_inequality_and_equality(
            r in 1.2f64..4.0, pval in -5.0f64..5.0, xival in -5.0f64..5.0, tau in 0.5f64..2.0
        ) {
            let g = grid1(8);
            let tauf = ScalarField::constant(g, 1, tau);
            let zero = ScalarField::zeros(g, 1);
            let ham = HamiltonianSpec::power(g, r, &tauf, &zero).unwrap();
            let p = [pval, 0.0];
            let xi = [xival, 0.0];
            let resid = ham.value(0, &p) + ham.conjugate(0, &xi) - p[0] * xi[0];
            prop_assert!(resid >= -1e-10);
            // equality at ξ = DpH(x,p)
            let touch = ham.grad(0, &p);
            let eq = ham.value(0, &p) + ham.conjugate(0, &touch) - (p[0] * touch[0]);
            prop_assert!(eq.abs() <= 1e-10 * (1.0 + ham.value(0, &p).abs() + ham.conjugate(0, &touch).abs()));
        }

        #[test]
        fn coercivity_residual_nonnegative_on_box(
            q in 1.01f64..5.0, m in 0.0f64..10.0, alpha in 0.0f64..10.0, tau in 0.5f64..2.0
        ) {
            let g = grid1(8);
            let tauf = ScalarField::constant(g, 1, tau);
            let c = LocalCouplingSpec::new(g, q, &tauf).unwrap();
            prop_assert!(coercivity_residual(&c, 0, m, alpha) >= -1e-12);
        }

        #[test]
        fn h_coercivity_residual_nonnegative_aligned(
            r in 1.05f64..5.0, p0 in -6.0f64..6.0, p1 in -6.0f64..6.0,
            x0 in -6.0f64..6.0, x1 in -6.0f64..6.0
        ) {
            // The sharp-constant bound holds on the sector p·ξ >= 0 (the
            // vector analogue of m, α >= 0); flip ξ into it when needed.
            let g = TorusGrid::new(2, 4).unwrap();
            let tauf = ScalarField::constant(g, 1, 1.0);
            let zero = ScalarField::zeros(g, 1);
            let ham = HamiltonianSpec::power(g, r, &tauf, &zero).unwrap();
            let xi = if p0 * x0 + p1 * x1 >= 0.0 { [x0, x1] } else { [-x0, -x1] };
            prop_assert!(coercivity_residual_h(&ham, 0, &[p0, p1], &xi) >= -1e-10);
        }
    }
}
