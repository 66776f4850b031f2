//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! The quantitative core is one-sided: proven rates are upper bounds with
//! unspecified constants, so a fitted slope passes when it meets or exceeds
//! the predicted exponent minus its margin.

use mfg_lab::cli::{self, suites, RunConfig};
use mfg_lab::fixpoint::{solve_mfg, FixpointOptions};
use mfg_lab::fpk::{mass, solve_fpk, FpkOptions};
use mfg_lab::grid::{ScalarField, TimeGrid, TorusGrid, VectorField};
use mfg_lab::hjb::{solve_hjb, HjbOptions};
use mfg_lab::metrics::{fit_rate, NormKind, SweepResult};
use mfg_lab::model::HamiltonianSpec;
use mfg_lab::scenarios::{find_preset, fit_sweep, run_sweep, Preset};
use mfg_lab::variational::duality_gap;
use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

fn pass_line(criterion: u32, ok: bool, detail: &str) {
    println!(
        "[{}] criterion {criterion}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn sweep_of(name: &'static str) -> &'static (Preset, SweepResult) {
    static KPZ: OnceLock<(Preset, SweepResult)> = OnceLock::new();
    static NONLOCAL: OnceLock<(Preset, SweepResult)> = OnceLock::new();
    static SUBCRIT: OnceLock<(Preset, SweepResult)> = OnceLock::new();
    let cell = match name {
        "kpz1d" => &KPZ,
        "nonlocal1d" => &NONLOCAL,
        "subcrit2d" => &SUBCRIT,
        other => panic!("no sweep cache for {other}"),
    };
    cell.get_or_init(|| {
        let preset = find_preset(name).expect("builtin preset");
        let result = run_sweep(&preset).expect("sweep completes");
        (preset, result)
    })
}

#[test]
fn criterion_1_appendix_a_inequality_suite() {
    let started = Instant::now();
    let r = suites::appendix_a_with_c0(cli::DEFAULT_SEED, None);
    let elapsed = started.elapsed().as_secs_f64();
    let detail = format!(
        "Appendix A residual >= -1e-12 over 1e6 samples, c0 = 0.51 counterexample found, {elapsed:.1}s: {}",
        r.details
    );
    pass_line(1, r.pass && elapsed < 10.0, &detail);

    // an inflated constant must fail with a witness
    let broken = suites::appendix_a_with_c0(cli::DEFAULT_SEED, Some(0.6));
    assert!(
        !broken.pass && broken.details["violating_sample"].is_object(),
        "c0 = 0.6 must produce a witness"
    );
}

#[test]
fn criterion_2_duality_identity() {
    let started = Instant::now();
    // homogeneous preset: |gap| <= 1e-6
    let g = TorusGrid::new(1, 64).unwrap();
    let time = TimeGrid::new(0.5, 128).unwrap();
    let hom = mfg_lab::fixpoint::MfgProblem {
        hamiltonian: HamiltonianSpec::isotropic(g, 2.0).unwrap(),
        coupling: mfg_lab::model::Coupling::Local(
            mfg_lab::model::LocalCouplingSpec::constant(g, 2.0).unwrap(),
        ),
        terminal: mfg_lab::fixpoint::TerminalData::Fixed(vec![0.25; 64]),
        m_bar: vec![1.0; 64],
        nu: 0.1,
        grid: g,
        time,
    };
    let hsol = solve_mfg(&hom, &FixpointOptions::default()).unwrap();
    let hom_gap = duality_gap(&hsol, &hom).unwrap();

    // kpz1d at ν = 0.1: |gap| decreases by >= 1.7x under grid doubling
    let gap_at = |n: usize| -> f64 {
        let mut cfg = find_preset("kpz1d").unwrap().problem;
        cfg.n = n;
        cfg.nt = 0;
        cfg.nt = cfg.derive_nt().unwrap();
        let cfg = cfg.with_nu(0.1);
        let problem = cfg.build().unwrap();
        let opts = cfg.fixpoint.to_options().unwrap();
        let sol = solve_mfg(&problem, &opts).unwrap();
        assert!(sol.converged);
        duality_gap(&sol, &problem).unwrap()
    };
    let coarse = gap_at(64).abs();
    let fine = gap_at(128).abs();
    let ratio = coarse / fine;
    let elapsed = started.elapsed().as_secs_f64();
    let ok = hom_gap.abs() <= 1e-6 && ratio >= 1.7 && elapsed < 120.0;
    pass_line(
        2,
        ok,
        &format!(
            "homogeneous gap {hom_gap:.2e}, kpz gap {coarse:.3e} -> {fine:.3e} (ratio {ratio:.2}), {elapsed:.0}s"
        ),
    );
}

#[test]
fn criterion_3_solver_oracles() {
    let started = Instant::now();
    // backward heat decay through the HJB solver
    let hjb_err = |n: usize, nt: usize| -> f64 {
        let g = TorusGrid::new(1, n).unwrap();
        let t = TimeGrid::new(1.0, nt).unwrap();
        let nu = 0.05;
        let terminal = ScalarField::sample(g, |x| (2.0 * PI * x[0]).cos());
        let u = solve_hjb(
            nu,
            &HamiltonianSpec::zero(g),
            &ScalarField::zeros(g, 1),
            terminal.slice(0),
            g,
            &t,
            &HjbOptions::default(),
        )
        .unwrap();
        let mut err: f64 = 0.0;
        for k in 0..=nt {
            let decay = (-4.0 * PI * PI * nu * (1.0 - t.time(k))).exp();
            for i in 0..n {
                let exact = decay * (2.0 * PI * (i as f64) / n as f64).cos();
                err = err.max((u.slice(k)[i] - exact).abs());
            }
        }
        err
    };
    let e1 = hjb_err(256, 512);
    let e2 = hjb_err(512, 1024);
    let hjb_ratio = e1 / e2;

    // forward heat decay through the FPK solver + machine-precision mass
    let fpk_err = |n: usize, nt: usize| -> (f64, f64) {
        let g = TorusGrid::new(1, n).unwrap();
        let t = TimeGrid::new(1.0, nt).unwrap();
        let nu = 0.05;
        let drift = VectorField::new(vec![ScalarField::constant(g, t.slices(), 0.0)]);
        let m0: Vec<f64> = (0..n)
            .map(|i| 1.0 + (2.0 * PI * (i as f64) / n as f64).cos())
            .collect();
        let m = solve_fpk(nu, &drift, &m0, g, &t, &FpkOptions::default()).unwrap();
        let mut err: f64 = 0.0;
        let mut drift_mass: f64 = 0.0;
        let m0_mass = mass(g, &m0);
        for k in 0..=nt {
            let decay = (-4.0 * PI * PI * nu * t.time(k)).exp();
            for i in 0..n {
                let exact = 1.0 + decay * (2.0 * PI * (i as f64) / n as f64).cos();
                err = err.max((m.slice(k)[i] - exact).abs());
            }
            drift_mass = drift_mass.max((mass(g, m.slice(k)) - m0_mass).abs());
        }
        (err, drift_mass)
    };
    let (f1, mass_drift_1) = fpk_err(256, 512);
    let (f2, mass_drift_2) = fpk_err(512, 1024);
    let fpk_ratio = f1 / f2;
    let mass_drift = mass_drift_1.max(mass_drift_2);

    let elapsed = started.elapsed().as_secs_f64();
    let ok = e1 <= 1e-2
        && f1 <= 1e-2
        && (1.7..=2.6).contains(&hjb_ratio)
        && (1.7..=2.6).contains(&fpk_ratio)
        && mass_drift <= 1e-12
        && elapsed < 60.0;
    pass_line(
        3,
        ok,
        &format!(
            "heat oracles: hjb ratio {hjb_ratio:.2}, fpk ratio {fpk_ratio:.2}, mass drift {mass_drift:.2e}, {elapsed:.0}s"
        ),
    );
}

#[test]
fn criterion_4_kpz_m_l2_rate() {
    let started = Instant::now();
    let (preset, result) = sweep_of("kpz1d");
    let limited = result.is_reference_limited(NormKind::ML2Sq);
    let series = result.series(NormKind::ML2Sq);
    let fit = fit_rate(&series, "err_m_L2_sq", 0.5, 0.1).expect("enough rows");
    let elapsed = started.elapsed().as_secs_f64();
    let ok = !limited && fit.slope >= 0.4 && fit.r_squared >= 0.95 && elapsed < 900.0;
    pass_line(
        4,
        ok,
        &format!(
            "kpz1d m_L2_sq slope {:.3} (predicted {:.2}), r2 {:.4}, reference-limited={limited}, n={}, {elapsed:.0}s",
            fit.slope,
            preset.exponents.rates["m_L2_sq"],
            fit.r_squared,
            preset.problem.n
        ),
    );
}

#[test]
fn criterion_5_nonlocal_rates() {
    let started = Instant::now();
    let (_, result) = sweep_of("nonlocal1d");
    let pairing = fit_rate(&result.series(NormKind::Pairing), "pairing", 0.5, 0.1).unwrap();
    let l1 = fit_rate(&result.series(NormKind::UL1Sup), "err_L1_sup_t", 0.25, 0.1).unwrap();
    let lim_p = result.is_reference_limited(NormKind::Pairing);
    let lim_l = result.is_reference_limited(NormKind::UL1Sup);
    // uniform-bound diagnostics must not explode as ν shrinks
    let first = &result.rows.first().unwrap().bounds;
    let last = &result.rows.last().unwrap().bounds;
    let bounded = last.max_m <= 3.0 * first.max_m.max(1.0)
        && last.max_abs_u <= 3.0 * first.max_abs_u.max(1.0)
        && last.max_grad_u <= 3.0 * first.max_grad_u.max(1.0);
    let elapsed = started.elapsed().as_secs_f64();
    let ok = pairing.slope >= 0.4
        && l1.slope >= 0.15
        && !lim_p
        && !lim_l
        && bounded
        && elapsed < 900.0;
    pass_line(
        5,
        ok,
        &format!(
            "nonlocal1d pairing slope {:.3} (>= 0.4), L1-sup slope {:.3} (>= 0.15), bounds non-exploding={bounded}, {elapsed:.0}s",
            pairing.slope, l1.slope
        ),
    );
}

#[test]
fn criterion_6_kpz_weighted_sup_rate() {
    let started = Instant::now();
    let (_, result) = sweep_of("kpz1d");
    let fit = fit_rate(
        &result.series(NormKind::UWeightedSup),
        "err_u_weighted_sup",
        0.25,
        0.1,
    )
    .unwrap();
    let limited = result.is_reference_limited(NormKind::UWeightedSup);
    let elapsed = started.elapsed().as_secs_f64();
    let ok = fit.slope >= 0.15 && !limited && elapsed < 900.0;
    pass_line(
        6,
        ok,
        &format!(
            "kpz1d u_weighted_sup slope {:.3} (>= 0.15, predicted 0.25), {elapsed:.0}s",
            fit.slope
        ),
    );
}

#[test]
fn criterion_7_hj_stability_oracle() {
    let started = Instant::now();
    // fixed-coefficient HJ: H = p²/2, Lipschitz source, smooth data; the
    // first-order solution develops kinks well before T, so this probes the
    // genuine viscosity-coupling regime.
    let n = 256;
    let g = TorusGrid::new(1, n).unwrap();
    let t = TimeGrid::new(0.5, 1536).unwrap();
    let ham = HamiltonianSpec::isotropic(g, 2.0).unwrap();
    let source = ScalarField::sample(g, |x| 0.4 * (2.0 * PI * x[0]).sin());
    let terminal = ScalarField::sample(g, |x| 0.25 * (2.0 * PI * x[0]).cos());
    let solve_at = |nu: f64| -> ScalarField {
        solve_hjb(
            nu,
            &ham,
            &source,
            terminal.slice(0),
            g,
            &t,
            &HjbOptions::default(),
        )
        .unwrap()
    };
    let base = solve_at(0.0);
    let mut rows = Vec::new();
    for k in 3..=8 {
        let nu = 2f64.powi(-k);
        let u = solve_at(nu);
        let mut sup: f64 = 0.0;
        for (a, b) in u.data().iter().zip(base.data()) {
            sup = sup.max((a - b).abs());
        }
        rows.push((nu, sup));
    }
    let fit = fit_rate(&rows, "hj_stability_sup", 0.5, 0.1).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let ok = fit.slope >= 0.4 && elapsed < 300.0;
    pass_line(
        7,
        ok,
        &format!(
            "HJ stability sup|u_nu - u_0| slope {:.3} (>= 0.4, predicted 0.5), {elapsed:.0}s",
            fit.slope
        ),
    );
}

#[test]
fn criterion_8_dimension_probe_subcrit2d() {
    let started = Instant::now();
    let (preset, result) = sweep_of("subcrit2d");
    let predicted = 1.0 / 3.5;
    let fit = fit_rate(&result.series(NormKind::MJ2Sq), "err_m_J2_sq", predicted, 0.1).unwrap();
    let limited = result.is_reference_limited(NormKind::MJ2Sq);
    let elapsed = started.elapsed().as_secs_f64();
    let excess = fit.slope - predicted;
    // recorded, not asserted: whether the measured slope materially exceeds
    // the proven exponent (the tightness question is open)
    println!(
        "criterion 8 record: measured slope {:.3} vs proven {:.3}, excess {:.3} ({})",
        fit.slope,
        predicted,
        excess,
        if excess > 0.1 {
            "materially exceeds the proven bound"
        } else {
            "close to the proven bound"
        }
    );
    let ok = fit.slope >= predicted - 0.1 && !limited && elapsed < 1800.0;
    pass_line(
        8,
        ok,
        &format!(
            "subcrit2d (beta = {}) m_J2_sq slope {:.3} >= {:.3}, {elapsed:.0}s",
            preset.exponents.beta.value,
            fit.slope,
            predicted - 0.1
        ),
    );
}

#[test]
fn criterion_9_invariant_suites() {
    let started = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let config = RunConfig {
        outdir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let mut out = Vec::new();
    let result = cli::cmd_check(&config, &mut out);
    let elapsed = started.elapsed().as_secs_f64();
    let listing = String::from_utf8_lossy(&out);
    print!("{listing}");
    let ok = result.is_ok() && elapsed < 180.0;
    pass_line(
        9,
        ok,
        &format!("all invariant suites pass under the default seed, {elapsed:.0}s"),
    );
}

/// Rate fits over full sweeps double as regression output for the remaining
/// presets' norm sets; failures above already catch the acceptance criteria.
#[test]
fn sweep_fit_summaries_print() {
    for name in ["kpz1d", "nonlocal1d", "subcrit2d"] {
        let (preset, result) = sweep_of(name);
        for (norm, fit) in preset.norms.iter().zip(fit_sweep(preset, result, 0.1)) {
            match fit {
                Ok(f) => println!(
                    "{name} {}: slope {:.3} predicted {:.3} r2 {:.4} pass={}",
                    norm.csv_column(),
                    f.slope,
                    f.predicted,
                    f.r_squared,
                    f.pass
                ),
                Err(e) => println!("{name} {}: unfitted ({e})", norm.csv_column()),
            }
        }
    }
}
