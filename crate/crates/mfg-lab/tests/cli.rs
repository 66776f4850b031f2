//! End-to-end checks of the command layer: config resolution, file
//! emission, determinism of the numeric outputs, failure reporting.

use mfg_lab::cli::{cmd_check, cmd_run, cmd_sweep, CliError, RunConfig};

fn small_run_config(outdir: std::path::PathBuf) -> RunConfig {
    let mut cfg = RunConfig::from_toml(
        r#"
        [problem]
        n = 32
        t_max = 0.1
        nu = 0.05
        [problem.fixpoint]
        tol = 1e-7
        [problem.data]
        m_amp = 0.4
        u_amp = 0.2
        "#,
    )
    .unwrap();
    cfg.outdir = outdir;
    cfg
}

#[test]
fn run_emits_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg1 = small_run_config(dir.path().join("a"));
    let cfg2 = small_run_config(dir.path().join("b"));
    let mut sink = Vec::new();
    cmd_run(&cfg1, &mut sink).unwrap();
    cmd_run(&cfg2, &mut sink).unwrap();
    let a = std::fs::read(dir.path().join("a/fields.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/fields.csv")).unwrap();
    assert_eq!(a, b, "field CSV must be byte-identical across reruns");
    assert!(a.starts_with(b"t,x,y,u,m\n"));
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["result"]["converged"], true);
    // the resolved configuration is embedded, no hidden defaults
    assert_eq!(meta["config"]["seed"].as_u64().unwrap(), mfg_lab::cli::DEFAULT_SEED);
    assert_eq!(meta["problem"]["n"].as_u64().unwrap(), 32);
    assert!(meta["problem"]["nt"].as_u64().unwrap() > 0);
}

#[test]
fn sweep_emits_fixed_columns_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_run_config(dir.path().to_path_buf());
    cfg.sweep.nu_list = vec![0.25, 0.125, 0.0625];
    cfg.emit.svg = true;
    let mut sink = Vec::new();
    cmd_sweep(&cfg, &mut sink).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "nu,err_m_J2_sq,err_J1_weighted_sq,err_m_L2_sq,err_u_weighted_sq,err_u_weighted_sup,pairing,pairing_terminal,err_L1_sup_t,iters,runtime_s"
    );
    assert_eq!(lines.count(), 3);
    // nonlocal-only columns stay empty on a local sweep
    let row = csv.lines().nth(1).unwrap();
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells.len(), 11);
    assert!(cells[6].is_empty() && cells[7].is_empty() && cells[8].is_empty());
    let svg = std::fs::read_to_string(dir.path().join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    let rates: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("rates.json")).unwrap()).unwrap();
    assert!(rates["fits"].is_array());
    assert!(rates["reference"]["converged"].as_bool().unwrap());
}

#[test]
fn unknown_suite_and_malformed_config_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.outdir = dir.path().to_path_buf();
    cfg.check.suites = vec!["no_such_suite".to_string()];
    let mut sink = Vec::new();
    let err = cmd_check(&cfg, &mut sink).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 2);
    let err = RunConfig::from_toml("problem = 3").unwrap_err();
    assert_eq!(err.exit_code(), 2);
    // error records are machine-readable
    let record = err.record();
    assert!(record["error"].is_string());
    assert_eq!(record["exit_code"], 2);
}

#[test]
fn single_suite_selection_runs_and_writes_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.outdir = dir.path().to_path_buf();
    cfg.check.suites = vec!["w1_triangle".to_string(), "beta_dichotomy".to_string()];
    let mut sink = Vec::new();
    cmd_check(&cfg, &mut sink).unwrap();
    let text = String::from_utf8(sink).unwrap();
    assert!(text.contains("[PASS] w1_triangle"));
    assert!(text.contains("[PASS] beta_dichotomy"));
    let record: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("check.json")).unwrap()).unwrap();
    assert_eq!(record["results"].as_array().unwrap().len(), 2);
}
