//! Configuration, experiment execution, invariant suites and result
//! emission.
//!
//! Configs are flat TOML key-value files with dotted namespaces (a preset is
//! ~25 scalars and must be archivable next to its results). Every emitted
//! JSON record carries the fully resolved configuration. CSV output uses
//! round-trip float formatting with a '.' decimal separator regardless of
//! locale. All randomized suites run off one fixed seed, so outputs are
//! reproducible bit-for-bit — except the measured runtime_s diagnostics.

pub mod suites;
mod svg;

use crate::fixpoint::solve_mfg;
use crate::grid::integrate_space;
use crate::metrics::{NormKind, SweepResult};
use crate::scenarios::{
    builtin_presets, find_preset, fit_sweep, run_sweep, CouplingKind, Preset, ProblemConfig,
    ScenarioError,
};
use crate::variational::duality_gap;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 0x6d66675f6c6162; // "mfg_lab"

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("solver failed: {0}")]
    Solve(#[from] crate::SolveError),
    #[error("evaluation failed: {0}")]
    Variational(#[from] crate::variational::VariationalError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{failed} invariant suite(s) failed")]
    SuitesFailed { failed: usize },
}

impl CliError {
    /// Process exit code; 0 is success.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Scenario(_) | CliError::Solve(_) | CliError::Variational(_) => 3,
            CliError::SuitesFailed { .. } => 4,
            CliError::Io { .. } => 5,
        }
    }

    /// Machine-readable error record (mirrored to stderr and error.json).
    pub fn record(&self) -> serde_json::Value {
        serde_json::json!({
            "error": self.to_string(),
            "exit_code": self.exit_code(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Strictly decreasing viscosities in (0, 1]; empty = the preset's list.
    pub nu_list: Vec<f64>,
    pub ref_factor: usize,
    /// One-sided acceptance margin for fitted slopes.
    pub margin: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            nu_list: Vec::new(),
            ref_factor: 4,
            margin: crate::metrics::DEFAULT_FIT_MARGIN,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    /// Suites to run; empty = all.
    pub suites: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub problem: Option<ProblemConfig>,
    pub outdir: PathBuf,
    pub seed: u64,
    pub emit: EmitFlags,
    pub sweep: SweepSection,
    pub check: CheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            problem: None,
            outdir: PathBuf::from("out"),
            seed: DEFAULT_SEED,
            emit: EmitFlags::default(),
            sweep: SweepSection::default(),
            check: CheckSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// The problem description this config names, with nt resolved.
    pub fn resolve_problem(&self) -> Result<ProblemConfig, CliError> {
        let mut cfg = if let Some(name) = &self.preset {
            find_preset(name)?.problem
        } else if let Some(problem) = &self.problem {
            problem.clone()
        } else {
            return Err(CliError::Config(
                "config must name a preset or describe a problem".into(),
            ));
        };
        if cfg.nt == 0 {
            cfg.nt = cfg.derive_nt()?;
        }
        Ok(cfg)
    }

    /// The preset this config names, or one synthesized from the inline
    /// problem (norm set chosen by coupling kind).
    pub fn resolve_preset(&self) -> Result<Preset, CliError> {
        let mut preset = if let Some(name) = &self.preset {
            find_preset(name)?
        } else {
            let problem = self
                .problem
                .clone()
                .ok_or_else(|| CliError::Config("sweep needs a preset or a problem".into()))?;
            let norms = match problem.coupling.kind {
                CouplingKind::Local => vec![
                    NormKind::MJ2Sq,
                    NormKind::J1WeightedSq,
                    NormKind::ML2Sq,
                    NormKind::UWeightedSq,
                    NormKind::UWeightedSup,
                ],
                CouplingKind::Nonlocal => vec![
                    NormKind::Pairing,
                    NormKind::PairingTerminal,
                    NormKind::UL1Sup,
                ],
            };
            let exponents = crate::metrics::PredictedExponents::compute(
                problem.coupling.q,
                problem.hamiltonian.r,
                problem.d,
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            Preset {
                name: "inline".to_string(),
                problem,
                nu_list: SweepSection::default()
                    .nu_list
                    .clone(),
                ref_factor: self.sweep.ref_factor,
                norms,
                exponents,
            }
        };
        if !self.sweep.nu_list.is_empty() {
            preset.nu_list = self.sweep.nu_list.clone();
        }
        if preset.nu_list.is_empty() {
            preset.nu_list = (3..=8).map(|k| 2f64.powi(-k)).collect();
        }
        preset.validate()?;
        Ok(preset)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json serialization");
    text.push('\n');
    write_text(path, &text)
}

/// Full round-trip float formatting, locale-independent.
fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Solves one problem instance; writes meta.json and optionally a CSV of
/// the solved field slices.
pub fn cmd_run(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let problem_cfg = config.resolve_problem()?;
    let problem = problem_cfg.build()?;
    let opts = problem_cfg.fixpoint.to_options()?;
    let started = std::time::Instant::now();
    let sol = solve_mfg(&problem, &opts)?;
    let runtime_s = started.elapsed().as_secs_f64();
    let gap = match &problem.coupling {
        crate::model::Coupling::Local(_) => Some(duality_gap(&sol, &problem)?),
        crate::model::Coupling::Nonlocal(_) => None,
    };
    let nt = problem.time.nt();
    let mass0 = integrate_space(problem.grid, sol.m.slice(0));
    let mass_t = integrate_space(problem.grid, sol.m.slice(nt));

    let meta = serde_json::json!({
        "config": config,
        "problem": problem_cfg,
        "result": {
            "converged": sol.converged,
            "iterations": sol.iterations,
            "residual_history": sol.residual_history,
            "residual_monotone_after_3": sol.residual_monotone_after(3),
            "duality_gap": gap,
            "mass_drift": (mass_t - mass0).abs(),
            "runtime_s": runtime_s,
        },
    });
    if config.emit.json {
        write_json(&config.outdir.join("meta.json"), &meta)?;
    }
    if config.emit.csv {
        let mut csv = String::from("t,x,y,u,m\n");
        for k in 0..=nt {
            let t = problem.time.time(k);
            for idx in 0..problem.grid.node_count() {
                let c = problem.grid.coords(idx);
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f64(t),
                    fmt_f64(c[0]),
                    fmt_f64(c[1]),
                    fmt_f64(sol.u.slice(k)[idx]),
                    fmt_f64(sol.m.slice(k)[idx])
                ));
            }
        }
        write_text(&config.outdir.join("fields.csv"), &csv)?;
    }
    writeln!(
        out,
        "run: converged={} iterations={} gap={:?} -> {}",
        sol.converged,
        sol.iterations,
        gap,
        config.outdir.display()
    )
    .ok();
    if !sol.converged {
        return Err(CliError::Solve(crate::SolveError::BadInput(format!(
            "fixed point did not converge within {} iterations",
            sol.iterations
        ))));
    }
    Ok(())
}

/// Fixed column order for sweep.csv, independent of the preset's norm set.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut csv = String::from(
        "nu,err_m_J2_sq,err_J1_weighted_sq,err_m_L2_sq,err_u_weighted_sq,err_u_weighted_sup,pairing,pairing_terminal,err_L1_sup_t,iters,runtime_s\n",
    );
    for row in &result.rows {
        csv.push_str(&fmt_f64(row.nu));
        for norm in NormKind::ALL {
            csv.push(',');
            if let Some(v) = row.values.get(norm.csv_column()) {
                csv.push_str(&fmt_f64(*v));
            }
        }
        csv.push_str(&format!(",{},{}\n", row.iters, fmt_f64(row.runtime_s)));
    }
    csv
}

/// Runs a ν sweep; writes sweep.csv, rates.json and optionally plot.svg.
/// Reference-limited norms produce pass=false fit records, not errors.
pub fn cmd_sweep(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let preset = config.resolve_preset()?;
    let result = run_sweep(&preset)?;
    let fits = fit_sweep(&preset, &result, config.sweep.margin);

    let fit_records: Vec<serde_json::Value> = preset
        .norms
        .iter()
        .zip(&fits)
        .map(|(norm, fit)| match fit {
            Ok(f) => serde_json::to_value(f).expect("ratefit json"),
            Err(msg) => serde_json::json!({
                "norm": norm.csv_column(),
                "pass": false,
                "error": msg,
            }),
        })
        .collect();

    if config.emit.csv {
        write_text(&config.outdir.join("sweep.csv"), &sweep_csv(&result))?;
    }
    if config.emit.json {
        let rates = serde_json::json!({
            "config": config,
            "preset": preset,
            "reference": result.reference,
            "reference_limited": result.reference_limited,
            "rows": result.rows,
            "fits": fit_records,
        });
        write_json(&config.outdir.join("rates.json"), &rates)?;
    }
    if config.emit.svg {
        write_text(
            &config.outdir.join("plot.svg"),
            &svg::sweep_plot(&preset, &result),
        )?;
    }
    for (norm, fit) in preset.norms.iter().zip(&fits) {
        match fit {
            Ok(f) => writeln!(
                out,
                "{}: slope {:.3} (predicted {:.3}) r2 {:.4} pass={}",
                norm.csv_column(),
                f.slope,
                f.predicted,
                f.r_squared,
                f.pass
            )
            .ok(),
            Err(msg) => writeln!(out, "{}: unfitted ({msg})", norm.csv_column()).ok(),
        };
    }
    Ok(())
}

/// Runs the invariant suites; exit is nonzero as soon as one fails.
pub fn cmd_check(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let all = suites::all_suites();
    let selected: Vec<&suites::Suite> = if config.check.suites.is_empty() {
        all.iter().collect()
    } else {
        let mut sel = Vec::new();
        for name in &config.check.suites {
            match all.iter().find(|s| s.name == *name) {
                Some(s) => sel.push(s),
                None => return Err(CliError::Config(format!("unknown suite '{name}'"))),
            }
        }
        sel
    };
    let mut results = Vec::new();
    let mut failed = 0usize;
    for suite in selected {
        let started = std::time::Instant::now();
        let r = (suite.run)(config.seed);
        let elapsed = started.elapsed().as_secs_f64();
        writeln!(
            out,
            "[{}] {} ({elapsed:.2}s)",
            if r.pass { "PASS" } else { "FAIL" },
            suite.name
        )
        .ok();
        if !r.pass {
            failed += 1;
            writeln!(out, "  witness: {}", r.details).ok();
        }
        results.push(serde_json::json!({
            "suite": suite.name,
            "pass": r.pass,
            "runtime_s": elapsed,
            "details": r.details,
        }));
    }
    if config.emit.json {
        let record = serde_json::json!({
            "config": config,
            "results": results,
        });
        write_json(&config.outdir.join("check.json"), &record)?;
    }
    if failed > 0 {
        return Err(CliError::SuitesFailed { failed });
    }
    Ok(())
}

/// Lists the built-in presets with their predicted exponents.
pub fn cmd_presets(out: &mut dyn Write) -> Result<(), CliError> {
    for p in builtin_presets() {
        let rates: Vec<String> = p
            .exponents
            .rates
            .iter()
            .map(|(k, v)| format!("{k}={v:.4}"))
            .collect();
        writeln!(
            out,
            "{:12} d={} n={} T={} q={} r={} beta={:.3} norms=[{}]\n{:12} rates: {}",
            p.name,
            p.problem.d,
            p.problem.n,
            p.problem.t_max,
            p.problem.coupling.q,
            p.problem.hamiltonian.r,
            p.exponents.beta.value,
            p.norms
                .iter()
                .map(|n| n.csv_column())
                .collect::<Vec<_>>()
                .join(","),
            "",
            rates.join(" ")
        )
        .ok();
    }
    Ok(())
}

/// Collects per-iteration diagnostics for meta records.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            preset = "kpz1d"
            outdir = "runs/kpz"
            seed = 7
            [emit]
            svg = true
            [sweep]
            nu_list = [0.25, 0.125]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.preset.as_deref(), Some("kpz1d"));
        assert_eq!(cfg.seed, 7);
        assert!(cfg.emit.svg && cfg.emit.csv && cfg.emit.json);
        assert_eq!(cfg.sweep.nu_list, vec![0.25, 0.125]);
        // unknown keys are rejected
        assert!(RunConfig::from_toml("presett = \"x\"").is_err());
        // malformed TOML is a config error
        assert!(RunConfig::from_toml("preset = [").is_err());
    }

    #[test]
    fn inline_problem_resolves_with_derived_nt() {
        let cfg = RunConfig::from_toml(
            r#"
            outdir = "runs/x"
            [problem]
            n = 32
            t_max = 0.1
            nu = 0.05
            "#,
        )
        .unwrap();
        let problem = cfg.resolve_problem().unwrap();
        assert!(problem.nt > 0);
        assert_eq!(problem.n, 32);
        // and a synthetic preset picks the local norm set
        let preset = cfg.resolve_preset().unwrap();
        assert!(preset.norms.contains(&NormKind::MJ2Sq));
        assert_eq!(preset.nu_list.len(), 6);
    }

    #[test]
    fn csv_columns_are_fixed() {
        let result = SweepResult {
            preset: "x".into(),
            rows: vec![],
            reference: crate::metrics::ReferenceInfo {
                n: 8,
                nt: 8,
                iterations: 1,
                converged: true,
                self_gap: Default::default(),
            },
            reference_limited: Default::default(),
        };
        let csv = sweep_csv(&result);
        assert_eq!(
            csv.trim_end(),
            "nu,err_m_J2_sq,err_J1_weighted_sq,err_m_L2_sq,err_u_weighted_sq,err_u_weighted_sup,pairing,pairing_terminal,err_L1_sup_t,iters,runtime_s"
        );
    }
}
