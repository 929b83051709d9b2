use std::path::Path;
use std::process::{Command, Output};

use ornstein_fpk::pipeline::{export_plots, run_pipeline, PipelineConfig};
use ornstein_fpk::rational::rat;
use ornstein_fpk::Error;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ornstein-fpk")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stagewise_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stages = d.join("stages");
    let out = cli(&["construct", "--delta", "1/2", "--stages", "2", "--out", path(&stages)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(stages.join("report.json")).unwrap()).unwrap();
    assert_eq!(report[0]["l1"], "3/4");
    assert_eq!(report.as_array().unwrap().len(), 2);

    let smooth = d.join("smooth");
    let out = cli(&["smooth", "--stage", path(&stages.join("stage_1.json")), "--h", "1/32", "--out", path(&smooth)]);
    assert_eq!(code(&out), 0);
    let header = std::fs::read_to_string(smooth.join("q.csv")).unwrap();
    assert!(header.lines().count() > 10);

    for h in ["1/32", "1/64"] {
        let target = d.join(format!("asm{}", &h[2..]));
        let out = cli(&[
            "assemble", "--mode", "overlapping", "--tiles", "4", "--stages", path(&stages), "--h", h, "--out", path(&target),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let verify = d.join("verify.json");
    let out = cli(&[
        "verify",
        "--assembly",
        path(&d.join("asm64")),
        "--coarse",
        path(&d.join("asm32")),
        "--out",
        path(&verify),
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&verify).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert!((v["mass"].as_f64().unwrap() - 1.0).abs() < 1e-8);

    let curve = d.join("curve.csv");
    let out = cli(&["probe", "--rho", path(&d.join("asm64/rho.csv")), "--r", "1.2", "--sweep", "--out", path(&curve)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().next().unwrap(), "alpha,norm,alpha_star");
    assert_eq!(text.lines().count(), 22);

    // Impossible tolerance: the check fails rather than the command.
    let out = cli(&["verify", "--assembly", path(&d.join("asm64")), "--tolerance", "1e-30", "--out", path(&verify)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&cli(&["construct", "--delta", "2", "--out", path(d)])), 2);
    assert_eq!(code(&cli(&["construct", "--delta", "one half", "--out", path(d)])), 2);
    assert_eq!(code(&cli(&["no-such-command"])), 2);
    assert_eq!(code(&cli(&["export", "--run", path(d)])), 2);
    let cfg = d.join("bad.cfg");
    std::fs::write(&cfg, format!("delta = 2\noutput = {}\n", d.join("run").display())).unwrap();
    let out = cli(&["run", "--config", path(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));
    // Nothing was computed.
    assert!(!d.join("run").exists());
    assert_eq!(code(&cli(&["probe", "--rho", path(&d.join("missing.csv")), "--r", "1.2"])), 2);
}

#[test]
fn minimal_run_passes_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg = dir.path().join("min.cfg");
    std::fs::write(
        &cfg,
        format!("delta = 1/2\nstages = 1\nh = 1/128\ntiles = 1\noutput = {}\n", out_dir.display()),
    )
    .unwrap();
    let start = std::time::Instant::now();
    let out = cli(&["run", "--config", path(&cfg)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed().as_secs_f64() < 60.0);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], true);
    for stage in ["construct", "smooth", "assemble", "verify", "probe", "export"] {
        assert!(manifest["stage_seconds"][stage].is_number(), "{stage}");
    }
    assert!(manifest["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let out = cli(&["export", "--run", path(&out_dir)]);
    assert_eq!(code(&out), 0);
    let rows = |f: &str| std::fs::read_to_string(out_dir.join("exports").join(f)).unwrap().lines().count() - 1;
    assert_eq!(rows("ratio_vs_n.csv"), 1);
    assert_eq!(rows("gradient_mass_vs_n.csv"), 1);
    assert_eq!(rows("frac_norm_sweep.csv"), 21);
}

#[test]
fn export_row_counts_follow_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = PipelineConfig {
        stages: 3,
        h: 1.0 / 64.0,
        tile_mode: ornstein_fpk::fpk::TileMode::Disjoint,
        tiles: 2,
        output: dir.path().to_path_buf(),
        ..PipelineConfig::default()
    };
    let manifest = run_pipeline(&config).unwrap();
    assert!(manifest.artifacts.contains_key("exports/ratio_vs_n.csv"));
    let files = export_plots(dir.path()).unwrap();
    let counts: Vec<usize> = files.iter().map(|f| std::fs::read_to_string(f).unwrap().lines().count() - 1).collect();
    assert_eq!(counts, vec![3, 2, 21]);
    for (rel, hash) in &manifest.artifacts {
        assert_eq!(&ornstein_fpk::pipeline::sha256_file(&dir.path().join(rel)).unwrap(), hash, "{rel}");
    }
}

#[test]
fn validation_rejects_out_of_domain_parameters() {
    let bad = [
        PipelineConfig { delta: rat(2, 1), ..PipelineConfig::default() },
        PipelineConfig { h: 0.003, ..PipelineConfig::default() },
        PipelineConfig { tiles: 5, ..PipelineConfig::default() },
        PipelineConfig { probe_r: 1.0, ..PipelineConfig::default() },
        PipelineConfig { residual_tolerance: -1.0, ..PipelineConfig::default() },
    ];
    for c in bad {
        assert!(matches!(run_pipeline(&c), Err(Error::Config(_))));
    }
}
