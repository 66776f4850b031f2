//! Seeded invariant suites behind `cmd_check`: every module's identities and
//! inequalities, run deterministically off one u64 seed. A failing suite
//! reports witness values in its details record.

use crate::fixpoint::{solve_mfg, FixpointOptions, MfgProblem, TerminalData};
use crate::fpk::{mass, solve_fpk, FpkOptions};
use crate::grid::{
    integrate_space, periodic_convolve, ScalarField, TimeGrid, TorusGrid, VectorField,
};
use crate::hjb::{solve_hjb, HjbOptions};
use crate::metrics::{beta_exponent, w1_torus_1d};
use crate::model::{
    coercivity_residual_c0, coercivity_residual_h, coupling_growth_witness, gaussian_kernel,
    hamiltonian_growth_witness, Coupling, HamiltonianSpec, LocalCouplingSpec,
    NonlocalCouplingSpec,
};
use crate::scenarios::{kpz_map, kpz_residual_l1, ProblemConfig};
use crate::variational::{
    coercivity_gap_bounds, dual_from_solution, duality_gap, lemma44_check, primal_from_solution,
    DualPoint, PrimalPoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::f64::consts::PI;

pub struct SuiteResult {
    pub pass: bool,
    pub details: serde_json::Value,
}

pub struct Suite {
    pub name: &'static str,
    pub run: fn(u64) -> SuiteResult,
}

pub fn all_suites() -> Vec<Suite> {
    vec![
        Suite { name: "grid_calculus", run: grid_calculus },
        Suite { name: "appendix_a_coercivity", run: |seed| appendix_a_with_c0(seed, None) },
        Suite { name: "fenchel_young", run: fenchel_young },
        Suite { name: "growth_bounds", run: growth_bounds },
        Suite { name: "fstar_monotone", run: fstar_monotone },
        Suite { name: "nonlocal_monotonicity", run: nonlocal_monotonicity },
        Suite { name: "hjb_comparison", run: hjb_comparison },
        Suite { name: "fpk_conservation", run: fpk_conservation },
        Suite { name: "fixpoint_symmetry", run: fixpoint_symmetry },
        Suite { name: "duality_identity", run: duality_identity },
        Suite { name: "lemma41_bounds", run: lemma41_bounds },
        Suite { name: "lemma44_constant", run: lemma44_constant },
        Suite { name: "w1_triangle", run: w1_triangle },
        Suite { name: "beta_dichotomy", run: beta_dichotomy },
        Suite { name: "kpz_consistency", run: kpz_consistency },
    ]
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(salt))
}

fn grid1(n: usize) -> TorusGrid {
    TorusGrid::new(1, n).unwrap()
}

/// Small coupled problem with even data used by several suites.
fn small_kpz_problem(n: usize, nu: f64) -> (ProblemConfig, MfgProblem, FixpointOptions) {
    let mut cfg = ProblemConfig {
        n,
        t_max: 0.05,
        nu,
        ..ProblemConfig::default()
    };
    cfg.fixpoint.theta = 0.1;
    cfg.fixpoint.tol = 1e-8;
    cfg.fixpoint.max_iters = 2000;
    cfg.nt = cfg.derive_nt().expect("small problem resolves");
    let problem = cfg.build().expect("small problem builds");
    let opts = cfg.fixpoint.to_options().expect("valid fixpoint options");
    (cfg, problem, opts)
}

fn grid_calculus(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 1);
    let g = grid1(64);
    let mut worst_adjoint: f64 = 0.0;
    let mut worst_lap: f64 = 0.0;
    let mut worst_telescope: f64 = 0.0;
    let mut worst_conv: f64 = 0.0;
    for _ in 0..20 {
        let a: f64 = rng.gen_range(0.2..2.0);
        let b: f64 = rng.gen_range(0.2..2.0);
        let k1 = rng.gen_range(1..5) as f64;
        let k2 = rng.gen_range(1..5) as f64;
        let u = ScalarField::sample(g, |x| a * (2.0 * PI * k1 * x[0]).sin() + b);
        let v = ScalarField::sample(g, |x| b * (2.0 * PI * k2 * x[0]).cos() - a);
        let du = u.diff_forward(0);
        let dv = v.diff_backward(0);
        let lhs: f64 = du.slice(0).iter().zip(v.slice(0)).map(|(x, y)| x * y).sum();
        let rhs: f64 = u.slice(0).iter().zip(dv.slice(0)).map(|(x, y)| x * y).sum();
        worst_adjoint = worst_adjoint.max((lhs + rhs).abs());

        let lap = u.laplacian();
        let composed = u.diff_forward(0).diff_backward(0);
        for (x, y) in lap.slice(0).iter().zip(composed.slice(0)) {
            worst_lap = worst_lap.max((x - y).abs());
        }
        worst_telescope = worst_telescope.max(integrate_space(g, lap.slice(0)).abs());

        let kernel = gaussian_kernel(g, 0.07, None);
        let conv = periodic_convolve(g, u.slice(0), kernel.slice(0));
        let shift = rng.gen_range(1..63usize);
        let translated: Vec<f64> = (0..64).map(|i| u.slice(0)[(i + shift) % 64]).collect();
        let conv_t = periodic_convolve(g, &translated, kernel.slice(0));
        for i in 0..64 {
            worst_conv = worst_conv.max((conv_t[i] - conv[(i + shift) % 64]).abs());
        }
    }
    let pass = worst_adjoint < 1e-10
        && worst_lap < 1e-7
        && worst_telescope < 1e-9
        && worst_conv < 1e-12;
    SuiteResult {
        pass,
        details: json!({
            "adjoint": worst_adjoint,
            "laplacian_composition": worst_lap,
            "telescoping": worst_telescope,
            "convolution_translation": worst_conv,
        }),
    }
}

/// The Appendix-A inequality battery. `c0_override` exists so a broken
/// constant (e.g. 0.6 at q = 2) demonstrably fails with a witness.
pub fn appendix_a_with_c0(seed: u64, c0_override: Option<f64>) -> SuiteResult {
    let mut rng = rng_for(seed, 2);
    let g = grid1(4);
    let mut min_residual = f64::INFINITY;
    let mut witness = None;
    let samples = 1_000_000usize;
    for i in 0..samples {
        let q: f64 = rng.gen_range(1.01..=5.0);
        let m: f64 = rng.gen_range(0.0..=10.0);
        let alpha: f64 = rng.gen_range(0.0..=10.0);
        // σ = 1 plus τ-weighted variants
        let tau: f64 = if i % 2 == 0 { 1.0 } else { rng.gen_range(0.5..2.0) };
        let spec =
            LocalCouplingSpec::new(g, q, &ScalarField::constant(g, 1, tau)).expect("valid spec");
        let c0 = c0_override.unwrap_or_else(|| spec.c0());
        let r = coercivity_residual_c0(&spec, 0, m, alpha, c0);
        if r < min_residual {
            min_residual = r;
            if r < -1e-12 {
                witness.get_or_insert((q, tau, m, alpha, r));
            }
        }
    }
    // the sharp constant is nearly optimal: 0.51 at q = 2 admits a
    // counterexample within 1e5 samples
    let spec = LocalCouplingSpec::constant(g, 2.0).unwrap();
    let mut counterexample = None;
    for i in 0..100_000 {
        let m: f64 = rng.gen_range(0.0..=10.0);
        let alpha: f64 = rng.gen_range(0.0..=10.0);
        let r = coercivity_residual_c0(&spec, 0, m, alpha, 0.51);
        if r < -1e-12 {
            counterexample = Some((i + 1, m, alpha, r));
            break;
        }
    }
    // (H5-1) on the aligned sector p·ξ >= 0 (the vector analogue of m,α >= 0)
    let mut min_h = f64::INFINITY;
    let g2 = TorusGrid::new(2, 4).unwrap();
    for _ in 0..100_000 {
        let r: f64 = rng.gen_range(1.05..=4.0);
        let ham = HamiltonianSpec::isotropic(g2, r).unwrap();
        let p = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let mut xi = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        if p[0] * xi[0] + p[1] * xi[1] < 0.0 {
            xi = [-xi[0], -xi[1]];
        }
        min_h = min_h.min(coercivity_residual_h(&ham, 0, &p, &xi));
    }
    let pass = if c0_override.is_none() {
        min_residual >= -1e-12 && counterexample.is_some() && min_h >= -1e-10
    } else {
        // an injected constant is expected to produce its own witness
        min_residual >= -1e-12
    };
    SuiteResult {
        pass,
        details: json!({
            "samples": samples,
            "min_residual": min_residual,
            "violating_sample": witness.map(|(q, tau, m, a, r)| json!({
                "q": q, "tau": tau, "m": m, "alpha": a, "residual": r
            })),
            "c0_051_counterexample": counterexample.map(|(n, m, a, r)| json!({
                "found_after": n, "m": m, "alpha": a, "residual": r
            })),
            "min_h51_residual_aligned": min_h,
        }),
    }
}

fn fenchel_young(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 3);
    let g = grid1(4);
    let mut worst_ineq = f64::INFINITY;
    let mut worst_eq: f64 = 0.0;
    for _ in 0..50_000 {
        let r: f64 = rng.gen_range(1.2..4.0);
        let tau: f64 = rng.gen_range(0.5..2.0);
        let ham =
            HamiltonianSpec::power(g, r, &ScalarField::constant(g, 1, tau), &ScalarField::zeros(g, 1))
                .unwrap();
        let p = [rng.gen_range(-5.0..5.0), 0.0];
        let xi = [rng.gen_range(-5.0..5.0), 0.0];
        worst_ineq = worst_ineq.min(ham.value(0, &p) + ham.conjugate(0, &xi) - p[0] * xi[0]);
        let touch = ham.grad(0, &p);
        let eq = ham.value(0, &p) + ham.conjugate(0, &touch) - p[0] * touch[0];
        worst_eq = worst_eq
            .max(eq.abs() / (1.0 + ham.value(0, &p).abs() + ham.conjugate(0, &touch).abs()));

        let q: f64 = rng.gen_range(1.2..4.0);
        let c = LocalCouplingSpec::new(g, q, &ScalarField::constant(g, 1, tau)).unwrap();
        let m: f64 = rng.gen_range(0.0..8.0);
        let a: f64 = rng.gen_range(-2.0..8.0);
        worst_ineq = worst_ineq.min(c.antiderivative(0, m) + c.conjugate(0, a) - m * a);
        let fm = c.f(0, m);
        let eq = c.antiderivative(0, m) + c.conjugate(0, fm) - m * fm;
        worst_eq = worst_eq.max(eq.abs() / (1.0 + c.antiderivative(0, m).abs()));
    }
    let pass = worst_ineq >= -1e-10 && worst_eq <= 1e-10;
    SuiteResult {
        pass,
        details: json!({ "min_young_residual": worst_ineq, "worst_equality_gap": worst_eq }),
    }
}

fn growth_bounds(_seed: u64) -> SuiteResult {
    let g = grid1(32);
    let samples: Vec<f64> = (0..=200).map(|i| i as f64 * 0.5).collect();
    let tau = ScalarField::sample(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
    let mut all_ok = true;
    let mut witnesses = Vec::new();
    for q in [1.5, 2.0, 3.0] {
        let c = LocalCouplingSpec::new(g, q, &tau).unwrap();
        let w = coupling_growth_witness(&c, &samples);
        all_ok &= w.holds && w.c0.is_finite() && w.c0 >= 1.0;
        witnesses.push(json!({ "family": "coupling", "q": q, "c0": w.c0, "holds": w.holds }));
    }
    for r in [1.5, 2.0, 3.0] {
        let h = HamiltonianSpec::power(g, r, &tau, &ScalarField::zeros(g, 1)).unwrap();
        let w = hamiltonian_growth_witness(&h, &samples);
        all_ok &= w.holds && w.c0.is_finite();
        witnesses.push(json!({ "family": "hamiltonian", "r": r, "c0": w.c0, "holds": w.holds }));
    }
    // the zero escape hatch must be flagged as violating the growth bound
    let zero_flagged = !hamiltonian_growth_witness(&HamiltonianSpec::zero(g), &samples).holds;
    all_ok &= zero_flagged;
    SuiteResult {
        pass: all_ok,
        details: json!({ "witnesses": witnesses, "zero_variant_flagged": zero_flagged }),
    }
}

fn fstar_monotone(_seed: u64) -> SuiteResult {
    let g = grid1(16);
    let tau = ScalarField::sample(g, |x| 0.8 + 0.4 * (2.0 * PI * x[0]).cos());
    let mut pass = true;
    let mut witness = None;
    for q in [1.3, 2.0, 3.5] {
        let c = LocalCouplingSpec::new(g, q, &tau).unwrap();
        for idx in [0usize, 5, 11] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..400 {
                let alpha = -2.0 + 0.03 * i as f64;
                let v = c.conjugate(idx, alpha);
                if v < prev {
                    pass = false;
                    witness.get_or_insert(json!({ "q": q, "idx": idx, "alpha": alpha }));
                }
                prev = v;
            }
        }
    }
    SuiteResult {
        pass,
        details: json!({ "witness": witness }),
    }
}

fn nonlocal_monotonicity(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 4);
    let g = grid1(64);
    let kernel = gaussian_kernel(g, 0.08, None);
    let spec = NonlocalCouplingSpec::new(g, &kernel, 1.0, 0.4).unwrap();
    let mut min_pairing = f64::INFINITY;
    let normalize = |raw: Vec<f64>| -> Vec<f64> {
        let mass = integrate_space(g, &raw);
        raw.into_iter().map(|v| v / mass).collect()
    };
    for _ in 0..1000 {
        let m1 = normalize((0..64).map(|_| rng.gen_range(0.01..2.0)).collect());
        let m2 = normalize((0..64).map(|_| rng.gen_range(0.01..2.0)).collect());
        let f1 = spec.f_slice(&m1).unwrap();
        let f2 = spec.f_slice(&m2).unwrap();
        let pairing: f64 = f1
            .iter()
            .zip(&f2)
            .zip(m1.iter().zip(&m2))
            .map(|((a, b), (x, y))| (a - b) * (x - y))
            .sum::<f64>()
            * g.cell_volume();
        min_pairing = min_pairing.min(pairing);
    }
    // W1 Lipschitz bound on translated densities: W1(μ, μ(·-s)) = s
    let lip = spec.w1_lipschitz();
    let bump = normalize(
        (0..64)
            .map(|i| {
                let x = i as f64 / 64.0;
                let d = (x - 0.3).abs().min(1.0 - (x - 0.3).abs());
                (-60.0 * d * d).exp()
            })
            .collect(),
    );
    let f_bump = spec.f_slice(&bump).unwrap();
    let mut worst_ratio: f64 = 0.0;
    for shift in [3usize, 9, 17, 31] {
        let shifted: Vec<f64> = (0..64).map(|i| bump[(i + 64 - shift) % 64]).collect();
        let f_shift = spec.f_slice(&shifted).unwrap();
        let sup: f64 = f_bump
            .iter()
            .zip(&f_shift)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let w1 = shift as f64 / 64.0;
        worst_ratio = worst_ratio.max(sup / (lip * w1));
    }
    let pass = min_pairing >= -1e-12 && worst_ratio <= 1.0 + 1e-9;
    SuiteResult {
        pass,
        details: json!({
            "min_pairing": min_pairing,
            "w1_lipschitz_constant": lip,
            "worst_lipschitz_ratio": worst_ratio,
        }),
    }
}

fn hjb_comparison(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 5);
    let g = grid1(48);
    let t = TimeGrid::new(0.4, 256).unwrap();
    let tau = ScalarField::constant(g, 1, 1.0);
    let h = ScalarField::sample(g, |x| 0.2 * (2.0 * PI * x[0]).cos());
    let ham = HamiltonianSpec::power(g, 2.0, &tau, &h).unwrap();
    let mut worst_comparison: f64 = 0.0;
    let mut worst_barrier: f64 = 0.0;
    for _ in 0..4 {
        let a: f64 = rng.gen_range(0.1..0.3);
        let bump: f64 = rng.gen_range(0.05..0.2);
        let u1 = ScalarField::sample(g, |x| a * (2.0 * PI * x[0]).cos());
        let u2 = ScalarField::sample(g, |x| {
            a * (2.0 * PI * x[0]).cos() + bump * (4.0 * PI * x[0]).sin().powi(2)
        });
        let g1 = ScalarField::sample(g, |x| 0.2 * (2.0 * PI * x[0]).sin().powi(2));
        let g2 = ScalarField::sample(g, |x| 0.2 * (2.0 * PI * x[0]).sin().powi(2) + bump);
        for nu in [0.0, 0.05] {
            let s1 = solve_hjb(nu, &ham, &g1, u1.slice(0), g, &t, &HjbOptions::default()).unwrap();
            let s2 = solve_hjb(nu, &ham, &g2, u2.slice(0), g, &t, &HjbOptions::default()).unwrap();
            for k in 0..=t.nt() {
                for (v1, v2) in s1.slice(k).iter().zip(s2.slice(k)) {
                    worst_comparison = worst_comparison.max(v1 - v2);
                }
            }
            // lower barrier: u >= -‖ū‖∞ - max H(·,0) (T - t) since g1 >= 0
            let norm_u = u1.max_abs();
            let h_max = ham.max_h();
            for k in 0..=t.nt() {
                let barrier = -norm_u - h_max * (0.4 - t.time(k));
                for v in s1.slice(k) {
                    worst_barrier = worst_barrier.max(barrier - v);
                }
            }
        }
    }
    let pass = worst_comparison <= 1e-10 && worst_barrier <= 1e-8;
    SuiteResult {
        pass,
        details: json!({
            "worst_comparison_violation": worst_comparison,
            "worst_barrier_violation": worst_barrier,
        }),
    }
}

fn fpk_conservation(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 6);
    let g = grid1(128);
    let t = TimeGrid::new(1.0, 1000).unwrap();
    let a: f64 = rng.gen_range(0.2..0.5);
    let drift = VectorField::new(vec![ScalarField::sample_spacetime(g, &t, |tt, x| {
        a * (2.0 * PI * (x[0] + 0.2 * tt)).sin()
    })]);
    let m0: Vec<f64> = (0..128)
        .map(|i| 1.0 + 0.8 * (2.0 * PI * (i as f64) / 128.0).cos())
        .collect();
    let m = solve_fpk(0.02, &drift, &m0, g, &t, &FpkOptions::default()).unwrap();
    let m0_mass = mass(g, &m0);
    let mut worst_drift: f64 = 0.0;
    for k in 0..=1000 {
        worst_drift = worst_drift.max((mass(g, m.slice(k)) - m0_mass).abs());
    }
    let min_value = m.min_value();
    // transport oracle: constant drift shifts the center of mass exactly
    let t2 = TimeGrid::new(0.25, 256).unwrap();
    let g2 = grid1(256);
    let drift2 = VectorField::new(vec![ScalarField::constant(g2, t2.slices(), 0.5)]);
    let bump: Vec<f64> = (0..256)
        .map(|i| {
            let x = i as f64 / 256.0;
            let d = (x - 0.6).abs();
            if d < 0.1 {
                (1.0 - d / 0.1).powi(2)
            } else {
                0.0
            }
        })
        .collect();
    let total = mass(g2, &bump);
    let sol = solve_fpk(0.0, &drift2, &bump, g2, &t2, &FpkOptions::default()).unwrap();
    let com = |s: &[f64]| -> f64 {
        s.iter()
            .enumerate()
            .map(|(i, v)| (i as f64 / 256.0) * v)
            .sum::<f64>()
            * g2.cell_volume()
            / total
    };
    let shift_err = (com(sol.slice(256)) - com(sol.slice(0)) + 0.125).abs();
    let pass = worst_drift <= 1e-12 && min_value >= -1e-12 && shift_err <= 1e-11;
    SuiteResult {
        pass,
        details: json!({
            "worst_mass_drift": worst_drift,
            "min_density": min_value,
            "com_shift_error": shift_err,
        }),
    }
}

fn fixpoint_symmetry(_seed: u64) -> SuiteResult {
    // even data must stay even under the symmetric scheme
    let (_, problem, opts) = small_kpz_problem(64, 0.1);
    let sol = solve_mfg(&problem, &opts).expect("small solve");
    let mut worst_even: f64 = 0.0;
    for k in 0..=problem.time.nt() {
        for i in 0..64 {
            let j = problem.grid.mirror(i);
            worst_even = worst_even.max((sol.u.slice(k)[i] - sol.u.slice(k)[j]).abs());
            worst_even = worst_even.max((sol.m.slice(k)[i] - sol.m.slice(k)[j]).abs());
        }
    }
    // spatially homogeneous data reproduces the closed-form solution
    let g = grid1(32);
    let time = TimeGrid::new(0.5, 64).unwrap();
    let hom = MfgProblem {
        hamiltonian: HamiltonianSpec::isotropic(g, 2.0).unwrap(),
        coupling: Coupling::Local(LocalCouplingSpec::constant(g, 2.0).unwrap()),
        terminal: TerminalData::Fixed(vec![0.25; 32]),
        m_bar: vec![1.0; 32],
        nu: 0.1,
        grid: g,
        time,
    };
    let hsol = solve_mfg(&hom, &FixpointOptions::default()).expect("homogeneous solve");
    let mut worst_hom: f64 = 0.0;
    for k in 0..=64 {
        let want = 0.25 + (0.5 - time.time(k));
        for i in 0..32 {
            worst_hom = worst_hom.max((hsol.m.slice(k)[i] - 1.0).abs());
            worst_hom = worst_hom.max((hsol.u.slice(k)[i] - want).abs());
        }
    }
    // a decoupled problem converges in at most two iterations
    let dec = MfgProblem {
        hamiltonian: HamiltonianSpec::isotropic(g, 2.0).unwrap(),
        coupling: Coupling::Local(LocalCouplingSpec::decoupled(g, 2.0).unwrap()),
        terminal: TerminalData::Fixed(
            ScalarField::sample(g, |x| 0.2 * (2.0 * PI * x[0]).sin())
                .slice(0)
                .to_vec(),
        ),
        m_bar: {
            let raw = ScalarField::sample(g, |x| 1.0 + 0.4 * (2.0 * PI * x[0]).cos());
            let mass = integrate_space(g, raw.slice(0));
            raw.slice(0).iter().map(|v| v / mass).collect()
        },
        nu: 0.05,
        grid: g,
        time: TimeGrid::new(0.25, 128).unwrap(),
    };
    let dsol = solve_mfg(&dec, &FixpointOptions::default()).expect("decoupled solve");
    let pass = worst_even <= 1e-10 && worst_hom <= 1e-8 && dsol.converged && dsol.iterations <= 2;
    SuiteResult {
        pass,
        details: json!({
            "worst_evenness_gap": worst_even,
            "worst_homogeneous_error": worst_hom,
            "decoupled_iterations": dsol.iterations,
        }),
    }
}

fn duality_identity(_seed: u64) -> SuiteResult {
    // homogeneous preset: gap vanishes to quadrature precision
    let g = grid1(32);
    let time = TimeGrid::new(0.5, 64).unwrap();
    let hom = MfgProblem {
        hamiltonian: HamiltonianSpec::isotropic(g, 2.0).unwrap(),
        coupling: Coupling::Local(LocalCouplingSpec::constant(g, 2.0).unwrap()),
        terminal: TerminalData::Fixed(vec![0.25; 32]),
        m_bar: vec![1.0; 32],
        nu: 0.1,
        grid: g,
        time,
    };
    let hsol = solve_mfg(&hom, &FixpointOptions::default()).expect("homogeneous solve");
    let hom_gap = duality_gap(&hsol, &hom).expect("local coupling");

    let gap_at = |n: usize, nu: f64| -> f64 {
        let (_, problem, opts) = small_kpz_problem(n, nu);
        let sol = solve_mfg(&problem, &opts).expect("small solve");
        duality_gap(&sol, &problem).expect("local coupling")
    };
    // |gap| shrinks under simultaneous refinement with order >= 0.8
    let g64 = gap_at(64, 0.1);
    let g128 = gap_at(128, 0.1);
    let g256 = gap_at(256, 0.1);
    let order = (g64.abs() / g256.abs()).log2() / 2.0;
    // weak duality: the Godunov/central-difference mismatch leaves a signed
    // O(dx+dt) consistency error, so the admissible negativity is calibrated
    // against the measured grid-to-grid gap change at the same ν
    let mut worst_slack = f64::NEG_INFINITY;
    let mut gaps = Vec::new();
    for nu in [0.05, 0.01] {
        let chain = [gap_at(64, nu), gap_at(128, nu), gap_at(256, nu)];
        // total observed variation across the refinement chain bounds the
        // remaining discretization-scale error even near a sign crossover
        let band =
            1e-6 + 2.0 * ((chain[0] - chain[1]).abs() + (chain[1] - chain[2]).abs());
        worst_slack = worst_slack.max(-chain[2] - band);
        gaps.push(json!({ "nu": nu, "gap_chain": chain, "band": band }));
    }
    let pass = hom_gap.abs() <= 1e-6 && order >= 0.8 && worst_slack <= 0.0;
    SuiteResult {
        pass,
        details: json!({
            "homogeneous_gap": hom_gap,
            "gap_refinement": { "g64": g64, "g128": g128, "g256": g256, "order": order },
            "weak_duality": gaps,
            "worst_negativity_beyond_band": worst_slack,
        }),
    }
}

fn lemma41_bounds(_seed: u64) -> SuiteResult {
    let g = grid1(32);
    let time = TimeGrid::new(1.0, 16).unwrap();
    let coupling = LocalCouplingSpec::constant(g, 2.0).unwrap();
    let ham = HamiltonianSpec::isotropic(g, 2.0).unwrap();
    let m_bar = vec![1.0; 32];
    let u_bar = vec![0.25; 32];
    // optimum vs optimum: gap and both forms vanish
    let opt_primal = PrimalPoint {
        m: ScalarField::constant(g, time.slices(), 1.0),
        w: VectorField::zeros(g, time.slices()),
    };
    let opt_dual = DualPoint {
        u: ScalarField::sample_spacetime(g, &time, |t, _| 0.25 + (1.0 - t)),
        alpha: ScalarField::constant(g, time.slices(), 1.0),
    };
    let at_opt = coercivity_gap_bounds(&opt_dual, &opt_primal, &coupling, &ham, &m_bar, &u_bar, &time);
    // perturbed density: strictly positive gap dominating both forms
    let pert_primal = PrimalPoint {
        m: ScalarField::sample_spacetime(g, &time, |_, x| 1.0 + 0.1 * (2.0 * PI * x[0]).cos()),
        w: VectorField::zeros(g, time.slices()),
    };
    let pert = coercivity_gap_bounds(&opt_dual, &pert_primal, &coupling, &ham, &m_bar, &u_bar, &time);
    // solver pair at ν = 0.1: both inequalities up to quadrature slack
    let (_, problem, opts) = small_kpz_problem(64, 0.1);
    let sol = solve_mfg(&problem, &opts).expect("small solve");
    let primal = primal_from_solution(&sol, &problem.hamiltonian);
    let dual = dual_from_solution(&sol, &problem.coupling);
    let local = problem.coupling.as_local().unwrap();
    let u_bar_s = problem.terminal.evaluate(sol.m.slice(problem.time.nt()));
    let sb = coercivity_gap_bounds(
        &dual,
        &primal,
        local,
        &problem.hamiltonian,
        &problem.m_bar,
        &u_bar_s,
        &problem.time,
    );
    let slack = 1e-8 + 0.25 * (sb.j1_form + sb.j2_form) + 0.1 * sb.gap.abs();
    let pass = at_opt.gap.abs() < 1e-12
        && at_opt.j1_form < 1e-12
        && at_opt.j2_form < 1e-12
        && pert.gap > 0.0
        && pert.gap >= pert.j1_form - 1e-10
        && pert.gap >= pert.j2_form - 1e-10
        && sb.gap >= sb.j1_form - slack
        && sb.gap >= sb.j2_form - slack;
    SuiteResult {
        pass,
        details: json!({
            "optimum": { "gap": at_opt.gap, "j1": at_opt.j1_form, "j2": at_opt.j2_form },
            "perturbed": { "gap": pert.gap, "j1": pert.j1_form, "j2": pert.j2_form },
            "solver": { "gap": sb.gap, "j1": sb.j1_form, "j2": sb.j2_form },
        }),
    }
}

fn lemma44_constant(_seed: u64) -> SuiteResult {
    // dual point from a first-order solve; the mollified-candidate constant
    // must stay bounded as ν shrinks
    let (_, problem, opts) = small_kpz_problem(64, 0.0);
    let sol = solve_mfg(&problem, &opts).expect("first-order solve");
    let dual = dual_from_solution(&sol, &problem.coupling);
    let local = problem.coupling.as_local().unwrap();
    let u_bar = problem.terminal.evaluate(sol.m.slice(problem.time.nt()));
    let beta = 1.0;
    let mut cs = Vec::new();
    for k in 4..=9 {
        let nu = 2f64.powi(-k);
        let rep = lemma44_check(
            &dual,
            nu,
            beta,
            local,
            &problem.hamiltonian,
            &problem.m_bar,
            &u_bar,
            &problem.time,
        )
        .expect("hypothesis holds on this ν grid");
        cs.push((nu, rep.fitted_c));
    }
    let c_max = cs.iter().map(|(_, c)| *c).fold(f64::NEG_INFINITY, f64::max);
    let c_at_largest = cs.first().map(|(_, c)| *c).unwrap_or(0.0);
    // no blow-up as ν -> 0: the smallest-ν constants stay within 10x of the
    // largest-ν one (floored to dodge division noise near zero)
    let pass = c_max <= 10.0 * c_at_largest.max(0.1);
    SuiteResult {
        pass,
        details: json!({
            "fitted_c_by_nu": cs.iter().map(|(nu, c)| json!({ "nu": nu, "c": c })).collect::<Vec<_>>(),
            "c_max": c_max,
        }),
    }
}

fn w1_triangle(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 7);
    let g = grid1(48);
    let normalize = |raw: Vec<f64>| -> Vec<f64> {
        let mass = integrate_space(g, &raw);
        raw.into_iter().map(|v| v / mass).collect()
    };
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..200 {
        let a = normalize((0..48).map(|_| rng.gen_range(0.01..1.0)).collect());
        let b = normalize((0..48).map(|_| rng.gen_range(0.01..1.0)).collect());
        let c = normalize((0..48).map(|_| rng.gen_range(0.01..1.0)).collect());
        let ab = w1_torus_1d(g, &a, &b).unwrap();
        let bc = w1_torus_1d(g, &b, &c).unwrap();
        let ac = w1_torus_1d(g, &a, &c).unwrap();
        worst = worst.max(ac - ab - bc);
    }
    let pass = worst <= 1e-10;
    SuiteResult {
        pass,
        details: json!({ "worst_triangle_violation": worst }),
    }
}

fn beta_dichotomy(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 8);
    let mut pass = true;
    let mut witness = None;
    for _ in 0..1000 {
        let q: f64 = rng.gen_range(1.02..6.0);
        let r: f64 = rng.gen_range(1.02..6.0);
        let d: usize = rng.gen_range(1..5);
        let b = beta_exponent(q, r, d).unwrap();
        let free = 1.0 / q + 1.0 / r <= 1.0;
        if b.value < 1.0 || (free && b.value != 1.0) || (!free && b.value <= 1.0) {
            pass = false;
            witness.get_or_insert(json!({ "q": q, "r": r, "d": d, "beta": b.value }));
        }
    }
    SuiteResult {
        pass,
        details: json!({ "witness": witness }),
    }
}

fn kpz_consistency(_seed: u64) -> SuiteResult {
    // residual of the KPZ system under the change of variables shrinks with
    // the mesh; the map itself is an exact involution
    let res = |n: usize| -> f64 {
        let (_, problem, opts) = small_kpz_problem(n, 0.05);
        let sol = solve_mfg(&problem, &opts).expect("kpz solve");
        let fields = kpz_map(&sol).expect("1-d problem");
        kpz_residual_l1(&fields, 0.1, &problem.time)
    };
    let coarse = res(64);
    let fine = res(128);
    let pass = fine <= 0.8 * coarse && coarse.is_finite();
    SuiteResult {
        pass,
        details: json!({ "residual_coarse": coarse, "residual_fine": fine }),
    }
}
