//! Uniform periodic meshes on (0,T) × 𝕋^d and the discrete calculus on them.
//!
//! The torus has side length 1, so dx = 1/n and every spatial frequency is
//! measured against that. Index arithmetic wraps modulo n on every axis.
//! Quadrature is the midpoint rule in space (exact for the trig data used
//! throughout) and the trapezoid rule in time.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum GridError {
    #[error("spatial dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("need at least 4 nodes per axis, got {0}")]
    TooFewNodes(usize),
    #[error("time horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("need at least one time step")]
    NoTimeSteps,
    #[error("node values must be finite")]
    NonFinite,
    #[error("expected {want} nodal values, got {got}")]
    BadLength { want: usize, got: usize },
}

/// Uniform periodic mesh on 𝕋^d with n nodes per axis, d ∈ {1, 2}.
///
/// Nodes sit at x_i = i·dx with dx = 1/n; in 2-d the flat index is
/// `iy * n + ix`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    d: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(d: usize, n: usize) -> Result<Self, GridError> {
        if d != 1 && d != 2 {
            return Err(GridError::BadDimension(d));
        }
        if n < 4 {
            return Err(GridError::TooFewNodes(n));
        }
        Ok(Self { d, n })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Cell volume dx^d.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Neighbor index shifted by `by` cells along `axis`, with wraparound.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, by: isize) -> usize {
        debug_assert!(axis < self.d);
        let n = self.n;
        if self.d == 1 {
            wrap(idx as isize + by, n)
        } else if axis == 0 {
            let iy = idx / n;
            let ix = idx % n;
            iy * n + wrap(ix as isize + by, n)
        } else {
            let iy = idx / n;
            let ix = idx % n;
            wrap(iy as isize + by, n) * n + ix
        }
    }

    /// Flat index of the node at integer coordinates (wrapped).
    #[inline]
    pub fn index(&self, coords: &[isize]) -> usize {
        debug_assert_eq!(coords.len(), self.d);
        if self.d == 1 {
            wrap(coords[0], self.n)
        } else {
            wrap(coords[1], self.n) * self.n + wrap(coords[0], self.n)
        }
    }

    /// Physical coordinates of a node, padded with 0 beyond dimension d.
    #[inline]
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let dx = self.dx();
        if self.d == 1 {
            [idx as f64 * dx, 0.0]
        } else {
            [(idx % self.n) as f64 * dx, (idx / self.n) as f64 * dx]
        }
    }

    /// Node index of x ↦ -x (componentwise negation modulo 1).
    #[inline]
    pub fn mirror(&self, idx: usize) -> usize {
        let n = self.n;
        let neg = |i: usize| if i == 0 { 0 } else { n - i };
        if self.d == 1 {
            neg(idx)
        } else {
            neg(idx / n) * n + neg(idx % n)
        }
    }
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Uniform mesh on [0, T] with nt steps, dt = T/nt; slice k sits at t = k·dt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    nt: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, nt: usize) -> Result<Self, GridError> {
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(GridError::BadHorizon(t_max));
        }
        if nt == 0 {
            return Err(GridError::NoTimeSteps);
        }
        Ok(Self { t_max, nt })
    }

    #[inline]
    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    #[inline]
    pub fn nt(&self) -> usize {
        self.nt
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_max / self.nt as f64
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.dt() * k as f64
    }

    /// Number of time slices a field on this grid carries.
    #[inline]
    pub fn slices(&self) -> usize {
        self.nt + 1
    }
}

/// Node-valued function on the torus, with one or more time slices.
///
/// A single-slice field represents time-independent data; a field with
/// nt+1 slices covers the full space-time cylinder.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    slices: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid, slices: usize) -> Self {
        Self::constant(grid, slices, 0.0)
    }

    pub fn constant(grid: TorusGrid, slices: usize, value: f64) -> Self {
        assert!(slices >= 1, "a field needs at least one slice");
        Self {
            grid,
            slices,
            data: vec![value; slices * grid.node_count()],
        }
    }

    /// Single-slice field from explicit nodal values.
    pub fn from_nodes(grid: TorusGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.node_count() {
            return Err(GridError::BadLength {
                want: grid.node_count(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Self {
            grid,
            slices: 1,
            data: values,
        })
    }

    /// Single-slice field sampled from a function of the node position.
    pub fn sample(grid: TorusGrid, f: impl Fn(&[f64; 2]) -> f64) -> Self {
        let data = (0..grid.node_count()).map(|i| f(&grid.coords(i))).collect();
        Self {
            grid,
            slices: 1,
            data,
        }
    }

    /// Space-time field sampled from (t, x).
    pub fn sample_spacetime(
        grid: TorusGrid,
        time: &TimeGrid,
        f: impl Fn(f64, &[f64; 2]) -> f64,
    ) -> Self {
        let nodes = grid.node_count();
        let slices = time.slices();
        let mut data = Vec::with_capacity(slices * nodes);
        for k in 0..slices {
            let t = time.time(k);
            for i in 0..nodes {
                data.push(f(t, &grid.coords(i)));
            }
        }
        Self { grid, slices, data }
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn num_slices(&self) -> usize {
        self.slices
    }

    #[inline]
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.node_count();
        &self.data[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.node_count();
        &mut self.data[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |a, &v| a.min(v))
    }

    /// Forward difference (D⁺u)_i = (u_{i+1} - u_i)/dx along `axis`, applied
    /// to every slice, with periodic wraparound.
    pub fn diff_forward(&self, axis: usize) -> ScalarField {
        self.stencil_map(|grid, v, i| (v[grid.shift(i, axis, 1)] - v[i]) / grid.dx())
    }

    /// Backward difference (D⁻u)_i = (u_i - u_{i-1})/dx along `axis`.
    pub fn diff_backward(&self, axis: usize) -> ScalarField {
        self.stencil_map(|grid, v, i| (v[i] - v[grid.shift(i, axis, -1)]) / grid.dx())
    }

    /// Standard 2d+1-point periodic Laplacian.
    pub fn laplacian(&self) -> ScalarField {
        let inv_dx2 = 1.0 / (self.grid.dx() * self.grid.dx());
        self.stencil_map(move |grid, v, i| {
            let mut acc = 0.0;
            for axis in 0..grid.d() {
                acc += v[grid.shift(i, axis, 1)] - 2.0 * v[i] + v[grid.shift(i, axis, -1)];
            }
            acc * inv_dx2
        })
    }

    fn stencil_map(&self, op: impl Fn(&TorusGrid, &[f64], usize) -> f64) -> ScalarField {
        let nodes = self.grid.node_count();
        let mut out = ScalarField::zeros(self.grid, self.slices);
        for k in 0..self.slices {
            let src = self.slice(k);
            let dst = &mut out.data[k * nodes..(k + 1) * nodes];
            for (i, d) in dst.iter_mut().enumerate() {
                *d = op(&self.grid, src, i);
            }
        }
        out
    }

    /// Nodal subsampling onto a grid coarser by `space_factor` per axis and
    /// `time_factor` in time. Both factors must divide the current counts;
    /// the coarse nodes are a subset of the fine ones, so no interpolation
    /// happens.
    pub fn restrict(&self, space_factor: usize, time_factor: usize) -> ScalarField {
        assert!(space_factor >= 1 && time_factor >= 1);
        assert_eq!(self.grid.n() % space_factor, 0, "grids must be nested");
        assert_eq!(
            (self.slices - 1) % time_factor,
            0,
            "time grids must be nested"
        );
        let coarse = TorusGrid::new(self.grid.d(), self.grid.n() / space_factor)
            .expect("restricted grid too coarse");
        let coarse_slices = (self.slices - 1) / time_factor + 1;
        let mut out = ScalarField::zeros(coarse, coarse_slices);
        for k in 0..coarse_slices {
            let fine = self.slice(k * time_factor);
            let dst = out.slice_mut(k);
            for (ci, d) in dst.iter_mut().enumerate() {
                let fi = if coarse.d() == 1 {
                    ci * space_factor
                } else {
                    let cx = ci % coarse.n();
                    let cy = ci / coarse.n();
                    cy * space_factor * self.grid.n() + cx * space_factor
                };
                *d = fine[fi];
            }
        }
        out
    }
}

/// One scalar component per spatial axis, all on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Self {
        assert!(!components.is_empty());
        let grid = components[0].grid();
        let slices = components[0].num_slices();
        assert_eq!(components.len(), grid.d(), "one component per axis");
        for c in &components {
            assert_eq!(c.grid(), grid);
            assert_eq!(c.num_slices(), slices);
        }
        Self { components }
    }

    pub fn zeros(grid: TorusGrid, slices: usize) -> Self {
        Self::new(vec![ScalarField::zeros(grid, slices); grid.d()])
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.components[0].grid()
    }

    #[inline]
    pub fn num_slices(&self) -> usize {
        self.components[0].num_slices()
    }

    #[inline]
    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    #[inline]
    pub fn component_mut(&mut self, axis: usize) -> &mut ScalarField {
        &mut self.components[axis]
    }
}

/// Midpoint quadrature of one spatial slice: dx^d · Σ values.
pub fn integrate_space(grid: TorusGrid, values: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), grid.node_count());
    values.iter().sum::<f64>() * grid.cell_volume()
}

/// Space-time quadrature with trapezoid weighting in time.
pub fn integrate_spacetime(field: &ScalarField, time: &TimeGrid) -> f64 {
    assert_eq!(field.num_slices(), time.slices(), "field/time grid mismatch");
    let nt = time.nt();
    let mut acc = 0.0;
    for k in 0..=nt {
        let w = if k == 0 || k == nt { 0.5 } else { 1.0 };
        acc += w * field.slice(k).iter().sum::<f64>();
    }
    acc * field.grid().cell_volume() * time.dt()
}

/// Circular convolution of one slice with a kernel sampled on the same grid:
/// (k ∗ a)_i = dx^d · Σ_j a_j k_{i−j}, exact periodic wraparound.
///
/// A kernel with discrete unit mass (Σ k dx^d = 1) acts as a mollifier and
/// preserves `integrate_space`.
pub fn periodic_convolve(grid: TorusGrid, values: &[f64], kernel: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), grid.node_count());
    assert_eq!(kernel.len(), grid.node_count());
    let vol = grid.cell_volume();
    let n = grid.n();
    let mut out = vec![0.0; values.len()];
    if grid.d() == 1 {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, v) in values.iter().enumerate() {
                let k = if i >= j { i - j } else { i + n - j };
                acc += v * kernel[k];
            }
            *o = acc * vol;
        }
    } else {
        for iy in 0..n {
            for ix in 0..n {
                let mut acc = 0.0;
                for jy in 0..n {
                    let ky = if iy >= jy { iy - jy } else { iy + n - jy };
                    let row = jy * n;
                    let krow = ky * n;
                    for jx in 0..n {
                        let kx = if ix >= jx { ix - jx } else { ix + n - jx };
                        acc += values[row + jx] * kernel[krow + kx];
                    }
                }
                out[iy * n + ix] = acc * vol;
            }
        }
    }
    out
}

/// ∬ |a - b| dx dt with trapezoid weighting in time.
pub fn l1_distance_spacetime(a: &ScalarField, b: &ScalarField, time: &TimeGrid) -> f64 {
    assert_eq!(a.grid(), b.grid());
    assert_eq!(a.num_slices(), b.num_slices());
    assert_eq!(a.num_slices(), time.slices());
    let nt = time.nt();
    let mut acc = 0.0;
    for k in 0..=nt {
        let w = if k == 0 || k == nt { 0.5 } else { 1.0 };
        let s: f64 = a
            .slice(k)
            .iter()
            .zip(b.slice(k).iter())
            .map(|(x, y)| (x - y).abs())
            .sum();
        acc += w * s;
    }
    acc * a.grid().cell_volume() * time.dt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TorusGrid::new(3, 8).is_err());
        assert!(TorusGrid::new(1, 3).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn forward_difference_of_constant_vanishes() {
        let g = grid1(16);
        let f = ScalarField::constant(g, 1, 3.25);
        assert!(f.diff_forward(0).max_abs() == 0.0);
        assert!(f.diff_backward(0).max_abs() == 0.0);
    }

    #[test]
    fn sawtooth_forward_difference_wraps() {
        // u(x) = x on nodes at n = 4: interior slopes 1, wrap slope 1 - n.
        let g = grid1(4);
        let f = ScalarField::sample(g, |x| x[0]);
        let d = f.diff_forward(0);
        let want = [1.0, 1.0, 1.0, 1.0 - 4.0];
        for (got, want) in d.slice(0).iter().zip(want.iter()) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn forward_difference_of_sine_matches_midpoint_cosine() {
        let g = grid1(256);
        let dx = g.dx();
        let f = ScalarField::sample(g, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
        let d = f.diff_forward(0);
        let tp = 2.0 * std::f64::consts::PI;
        let bound = 10.0 * dx * dx * tp.powi(3);
        for i in 0..g.node_count() {
            let x = i as f64 * dx + 0.5 * dx;
            let exact = tp * (tp * x).cos();
            assert!((d.slice(0)[i] - exact).abs() <= bound);
        }
    }

    #[test]
    fn laplacian_of_cosine_matches_taylor_bound() {
        let g = grid1(256);
        let tp = 2.0 * std::f64::consts::PI;
        let f = ScalarField::sample(g, |x| (tp * x[0]).cos());
        let lap = f.laplacian();
        let bound = tp.powi(4) * g.dx() * g.dx();
        for i in 0..g.node_count() {
            let x = g.coords(i)[0];
            let exact = -tp * tp * (tp * x).cos();
            assert!((lap.slice(0)[i] - exact).abs() <= bound);
        }
    }

    #[test]
    fn laplacian_of_index_sawtooth_vanishes_inside() {
        let g = grid1(8);
        let f = ScalarField::sample(g, |x| x[0]);
        let lap = f.laplacian();
        for i in 1..7 {
            assert!(lap.slice(0)[i].abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_exact_cases() {
        let g = grid1(64);
        let tp = 2.0 * std::f64::consts::PI;
        let one = ScalarField::constant(g, 1, 1.0);
        assert!((integrate_space(g, one.slice(0)) - 1.0).abs() < 1e-14);
        let s = ScalarField::sample(g, |x| (tp * x[0]).sin());
        assert!(integrate_space(g, s.slice(0)).abs() < 1e-13);
        // sin^2 integrates to exactly 1/2 by discrete mode orthogonality.
        for n in [5usize, 8, 17, 64] {
            let g = grid1(n);
            let s2 = ScalarField::sample(g, |x| (tp * x[0]).sin().powi(2));
            assert!(
                (integrate_space(g, s2.slice(0)) - 0.5).abs() < 1e-13,
                "n = {n}"
            );
        }
    }

    #[test]
    fn spacetime_quadrature_trapezoid_in_time() {
        let g = grid1(8);
        let t = TimeGrid::new(2.0, 4).unwrap();
        // field value = t, ∫0^2 t dt = 2, trapezoid exact on linear-in-t
        let f = ScalarField::sample_spacetime(g, &t, |tt, _| tt);
        assert!((integrate_spacetime(&f, &t) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn convolution_with_delta_is_identity_and_shifts_compose() {
        let g = grid1(16);
        let nodes = g.node_count();
        let inv_vol = 1.0 / g.cell_volume();
        let mut delta = vec![0.0; nodes];
        delta[0] = inv_vol;
        let f: Vec<f64> = (0..nodes).map(|i| (i as f64).sin()).collect();
        let conv = periodic_convolve(g, &f, &delta);
        for (a, b) in conv.iter().zip(f.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // delta at node 3 convolved with delta at node 5 = delta at node 8
        let mut d3 = vec![0.0; nodes];
        d3[3] = inv_vol;
        let mut d5 = vec![0.0; nodes];
        d5[5] = inv_vol;
        let comp = periodic_convolve(g, &d3, &d5);
        for (i, v) in comp.iter().enumerate() {
            let want = if i == 8 { inv_vol } else { 0.0 };
            assert!((v - want).abs() < 1e-9, "i = {i}");
        }
    }

    #[test]
    fn convolution_2d_preserves_mass() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = ScalarField::sample(g, |x| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).cos());
        // normalized box kernel over a 3x3 patch
        let mut kernel = vec![0.0; g.node_count()];
        for dy in [-1isize, 0, 1] {
            for dx_ in [-1isize, 0, 1] {
                kernel[g.index(&[dx_, dy])] = 1.0;
            }
        }
        let mass: f64 = kernel.iter().sum::<f64>() * g.cell_volume();
        kernel.iter_mut().for_each(|v| *v /= mass);
        let conv = periodic_convolve(g, f.slice(0), &kernel);
        let before = integrate_space(g, f.slice(0));
        let after = integrate_space(g, &conv);
        assert!((before - after).abs() < 1e-13);
    }

    #[test]
    fn restriction_subsamples_nested_nodes() {
        let g = grid1(16);
        let t = TimeGrid::new(1.0, 8).unwrap();
        let f = ScalarField::sample_spacetime(g, &t, |tt, x| tt + x[0]);
        let r = f.restrict(4, 2);
        assert_eq!(r.grid().n(), 4);
        assert_eq!(r.num_slices(), 5);
        assert!((r.slice(2)[1] - (0.5 + 4.0 / 16.0)).abs() < 1e-14);
    }

    #[test]
    fn mirror_is_involution() {
        let g = TorusGrid::new(2, 8).unwrap();
        for i in 0..g.node_count() {
            assert_eq!(g.mirror(g.mirror(i)), i);
        }
    }

    proptest! {
        #[test]
        fn summation_by_parts_is_exact(seed in 0u64..500) {
            // Σ (D⁺u) v = -Σ u (D⁻v) up to roundoff
            let g = grid1(32);
            let u = ScalarField::sample(g, |x| ((seed as f64) + 7.0 * x[0]).sin());
            let v = ScalarField::sample(g, |x| ((seed as f64) * 0.5 + 13.0 * x[0]).cos());
            let du = u.diff_forward(0);
            let dv = v.diff_backward(0);
            let lhs: f64 = du.slice(0).iter().zip(v.slice(0)).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.slice(0).iter().zip(dv.slice(0)).map(|(a, b)| a * b).sum();
            prop_assert!((lhs + rhs).abs() < 1e-9);
        }

        #[test]
        fn laplacian_composes_from_one_sided_differences(seed in 0u64..200) {
            let g = TorusGrid::new(2, 8).unwrap();
            let u = ScalarField::sample(g, |x| ((seed as f64) + 3.0 * x[0] + 5.0 * x[1]).sin());
            let mut composed = vec![0.0; g.node_count()];
            for axis in 0..2 {
                let d2 = u.diff_forward(axis).diff_backward(axis);
                for (c, v) in composed.iter_mut().zip(d2.slice(0)) {
                    *c += v;
                }
            }
            let lap = u.laplacian();
            for (a, b) in composed.iter().zip(lap.slice(0)) {
                prop_assert!((a - b).abs() < 1e-7 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn laplacian_integrates_to_zero(seed in 0u64..200) {
            let g = grid1(32);
            let u = ScalarField::sample(g, |x| ((seed as f64) + 11.0 * x[0]).sin());
            let total = integrate_space(g, u.laplacian().slice(0));
            prop_assert!(total.abs() < 1e-9);
        }

        #[test]
        fn convolution_commutes_with_translation(shift in 1usize..15) {
            let g = grid1(16);
            let f = ScalarField::sample(g, |x| (5.0 * x[0]).sin() + 0.2);
            let kernel = ScalarField::sample(g, |x| {
                let d = x[0].min(1.0 - x[0]);
                (-50.0 * d * d).exp()
            });
            let conv = periodic_convolve(g, f.slice(0), kernel.slice(0));
            // translate input, convolve, compare against translated output
            let n = g.node_count();
            let translated: Vec<f64> = (0..n).map(|i| f.slice(0)[(i + shift) % n]).collect();
            let conv_t = periodic_convolve(g, &translated, kernel.slice(0));
            for i in 0..n {
                prop_assert!((conv_t[i] - conv[(i + shift) % n]).abs() < 1e-12);
            }
        }
    }
}
