use stabledecay::engine::derive_seed;
use stabledecay::experiments::ExperimentConfig;
use stabledecay_cli::run::{run_config, RunArgs, RunManifest};
use stabledecay_cli::{seed_table, tabulate};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stabledecay"))
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_halfspace(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(repo_file("configs/halfspace_alpha1.json")).unwrap();
    let mut cfg = ExperimentConfig::from_json(&text).unwrap();
    cfg.n = 4000;
    let p = dir.join("small.json");
    std::fs::write(&p, cfg.to_json()).unwrap();
    p
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn bundled_configs_parse_and_round_trip() {
    for name in ["configs/halfspace_alpha1.json", "configs/counterexample_logpower1.json"] {
        let text = std::fs::read_to_string(repo_file(name)).unwrap();
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}

#[test]
fn verify_reports_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for suite in ["constants", "moduli", "fraclap"] {
        let o = run(&["verify", suite, "--out", out]);
        assert!(o.status.success(), "{suite}: {}", String::from_utf8_lossy(&o.stdout));
        let stdout = String::from_utf8(o.stdout).unwrap();
        assert!(stdout.contains("PASS"));
        let rep: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("verify_{suite}.json"))).unwrap()).unwrap();
        assert_eq!(rep["passed"], true);
        assert!(!rep["checks"].as_array().unwrap().is_empty());
    }
    let csv = std::fs::read_to_string(dir.path().join("fraclap_residuals.csv")).unwrap();
    assert!(csv.starts_with("alpha,p,x,computed,closed_form,residual\n"));
    assert!(dir.path().join("constants.csv").exists());

    let o = run(&["verify", "everything", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown suite"));
}

#[test]
fn verify_failure_gives_nonzero_exit() {
    // too few samples for the KS bound to be met
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "sampler", "--samples", "20000", "--threads", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify_sampler.json")).unwrap()).unwrap();
    assert_eq!(rep["passed"], false);
}

#[test]
fn run_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_halfspace(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ca = std::fs::read(a.join("halfspace_alpha1.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("halfspace_alpha1.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.join("halfspace_alpha1.json")).unwrap(),
        std::fs::read(b.join("halfspace_alpha1.json")).unwrap()
    );
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with("r,estimate,stderr,n_walks,mean_steps,dini_integral_r_to_R\n"));
    assert!(!text.contains('\r'));
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert!(ma.succeeded());
    assert_eq!((ma.threads, mb.threads), (1, 3));
    assert_eq!(ma.master_seed, Some(1));
    assert_eq!(ma.config_sha256, mb.config_sha256);
    assert_eq!(ma.files, mb.files);
    assert_eq!(ma.files.len(), 2);
    let fit = &ma.summary.as_ref().unwrap()["fit"];
    assert!((fit["slope_check"].as_f64().unwrap() - 0.5).abs() < 0.1);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_halfspace(dir.path());
    let out = dir.path().join("o");
    let m = run_config(&RunArgs {
        config: cfg,
        seed: Some(99),
        threads: Some(1),
        out: out.clone(),
    })
    .unwrap();
    assert_eq!(m.master_seed, Some(99));
    assert_eq!(manifest(&out), m);
}

#[test]
fn schema_violation_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(repo_file("configs/halfspace_alpha1.json")).unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, text.replace("\"n\": 1000000", "\"n\": \"many\"")).unwrap();
    let out = dir.path().join("o");
    let o = run(&["run", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`n`"), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m.status, "failed");
    assert!(m.files.is_empty());
    assert!(m.commands[0].error.as_ref().unwrap().contains("n"));
}

#[test]
fn runtime_failure_writes_failure_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(repo_file("configs/halfspace_alpha1.json")).unwrap();
    // theta_xi has no meaning on the half-space, which is only detected once the run starts
    let p = dir.path().join("tx.json");
    std::fs::write(&p, text.replace("decay_curve", "theta_xi")).unwrap();
    let out = dir.path().join("o");
    let o = run(&["run", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert!(!m.succeeded());
    assert_eq!(m.commands[0].exit_code, 1);
    assert_eq!(m.master_seed, Some(1));
}

#[test]
fn tabulate_aligns_columns() {
    let t = tabulate("a,bb\n1.5,2\n10,300\n").unwrap();
    assert_eq!(t, "  a   bb\n---  ---\n1.5    2\n 10  300\n");
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    std::fs::write(&p, "x,\"y, quoted\"\n1,2\n").unwrap();
    let o = run(&["tabulate", p.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("y, quoted"));
    assert!(!run(&["tabulate", dir.path().join("missing.csv").to_str().unwrap()]).status.success());
}

#[test]
fn seeds_match_engine_derivation() {
    let s = seed_table(7, 3);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "index,seed");
    assert_eq!(lines[2], format!("1,{}", derive_seed(7, 1)));
    let o = run(&["seeds", "--config", repo_file("configs/counterexample_logpower1.json").to_str().unwrap()]);
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out, seed_table(2, 9));
    let o = run(&["seeds", "--seed", "7", "--count", "3"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), s);
}
