//! Implicit periodic diffusion step: solves (I - c Δ_h) u = rhs with the
//! cyclic Thomas algorithm (Sherman–Morrison correction for the wraparound
//! corners). In 2-d the operator is factorized per axis,
//! (I - cΔ) ≈ (I - cΔ_x)(I - cΔ_y), which keeps each solve tridiagonal.
//!
//! Both the exact 1-d solve and each 2-d factor have column sums equal to 1
//! and an M-matrix inverse, so mass is conserved and nonnegativity preserved
//! up to roundoff — the Fokker–Planck solver leans on both.

/// Prefactored solver for (I - c Δ_h) along one periodic line of length n.
///
/// The matrix has diagonal 1 + 2g and off-diagonal/corner entries -g with
/// g = c/dx². Factored once, then each `solve` is two Thomas sweeps plus a
/// rank-one correction.
#[derive(Debug, Clone)]
pub(crate) struct CyclicLine {
    n: usize,
    sub: f64,
    /// Precomputed elimination coefficients c'_i.
    cp: Vec<f64>,
    /// Reciprocals of the pivot at each elimination step.
    inv_piv: Vec<f64>,
    /// Solution of the modified system for the rank-one column.
    z: Vec<f64>,
    /// v-component applied to the last entry (corner/gamma ratio).
    v_last: f64,
    /// 1 + v·z
    denom: f64,
}

impl CyclicLine {
    pub(crate) fn new(n: usize, g: f64) -> Self {
        assert!(n >= 4);
        assert!(g >= 0.0 && g.is_finite());
        let b = 1.0 + 2.0 * g;
        let off = -g;
        let gamma = -b;
        // Modified non-cyclic tridiagonal: first and last diagonal entries
        // absorb the corners.
        let diag = |i: usize| {
            if i == 0 {
                b - gamma
            } else if i == n - 1 {
                b - off * off / gamma
            } else {
                b
            }
        };
        let mut cp = vec![0.0; n];
        let mut inv_piv = vec![0.0; n];
        inv_piv[0] = 1.0 / diag(0);
        cp[0] = off * inv_piv[0];
        for i in 1..n {
            inv_piv[i] = 1.0 / (diag(i) - off * cp[i - 1]);
            cp[i] = off * inv_piv[i];
        }
        let mut line = Self {
            n,
            sub: off,
            cp,
            inv_piv,
            z: Vec::new(),
            v_last: off / gamma,
            denom: 1.0,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = off;
        let mut z = u;
        line.thomas(&mut z);
        line.denom = 1.0 + z[0] + line.v_last * z[n - 1];
        line.z = z;
        line
    }

    /// Thomas solve of the modified (non-cyclic) system, in place.
    fn thomas(&self, x: &mut [f64]) {
        let n = self.n;
        x[0] *= self.inv_piv[0];
        for i in 1..n {
            x[i] = (x[i] - self.sub * x[i - 1]) * self.inv_piv[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cp[i] * x[i + 1];
        }
    }

    /// Solve the full cyclic system in place.
    pub(crate) fn solve(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        self.thomas(x);
        let fact = (x[0] + self.v_last * x[self.n - 1]) / self.denom;
        for (xi, zi) in x.iter_mut().zip(self.z.iter()) {
            *xi -= fact * zi;
        }
    }
}

use crate::grid::TorusGrid;

/// Implicit diffusion step for a full spatial slice on a torus grid.
#[derive(Debug, Clone)]
pub(crate) struct DiffusionStep {
    grid: TorusGrid,
    line: CyclicLine,
}

impl DiffusionStep {
    /// c = ν · dt; a zero c yields the identity.
    pub(crate) fn new(grid: TorusGrid, c: f64) -> Self {
        let g = c / (grid.dx() * grid.dx());
        Self {
            grid,
            line: CyclicLine::new(grid.n(), g),
        }
    }

    /// Applies (I - cΔ_h)^{-1} to `slice` in place (factorized per axis in 2-d).
    pub(crate) fn apply(&self, slice: &mut [f64], scratch: &mut Vec<f64>) {
        let n = self.grid.n();
        debug_assert_eq!(slice.len(), self.grid.node_count());
        if self.grid.d() == 1 {
            self.line.solve(slice);
            return;
        }
        // rows (x-direction): contiguous
        for row in slice.chunks_mut(n) {
            self.line.solve(row);
        }
        // columns (y-direction): gather/scatter through scratch
        scratch.resize(n, 0.0);
        for ix in 0..n {
            for iy in 0..n {
                scratch[iy] = slice[iy * n + ix];
            }
            self.line.solve(scratch);
            for iy in 0..n {
                slice[iy * n + ix] = scratch[iy];
            }
        }
    }
}
