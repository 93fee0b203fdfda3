use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use intra_lab::config::{EncodeSet, MnrcSetting};
use intra_lab::corpus::generate_corpus;
use intra_lab::stages::{self, encode, optimize, report, train};
use intra_lab::RunConfig;

struct Fixture {
    _root: tempfile::TempDir,
    cfg: RunConfig,
}

fn tiny_config(root: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        corpus: vec![root.join("corpus")],
        output: root.join("run"),
        seed: 3,
        mnrc: MnrcSetting::Conservative,
        ..RunConfig::default()
    };
    cfg.train.epochs = 6;
    cfg.train.decay_every = 4;
    cfg.train.max_samples = 400;
    cfg.train.max_val_samples = 80;
    cfg.optimize.n_sub = 4;
    cfg.optimize.neighborhood = 2;
    cfg.optimize.generations = 2;
    cfg.optimize.use_gears = false;
    cfg.optimize.grid_step = 0.05;
    cfg
}

/// One full pipeline run shared by the tests below.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let root = tempfile::tempdir().unwrap();
        generate_corpus(&root.path().join("corpus"), 12, 5).unwrap();
        let cfg = tiny_config(root.path());
        let done = stages::run_all(&cfg).unwrap();
        assert!(done.iter().all(|o| !o.skipped));
        Fixture { _root: root, cfg }
    })
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

/// Copy of the fixture's run directory so a test can modify it.
fn scratch_run() -> (tempfile::TempDir, RunConfig) {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    for stage in [stages::DATAGEN, stages::TRAIN, stages::OPTIMIZE] {
        copy_dir(&f.cfg.stage_dir(stage), &dir.path().join(stage));
    }
    let cfg = RunConfig {
        output: dir.path().to_path_buf(),
        ..f.cfg.clone()
    };
    (dir, cfg)
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn pipeline_writes_every_artifact() {
    let f = fixture();
    for (stage, file) in [
        (stages::DATAGEN, "split.toml"),
        (stages::DATAGEN, "priors.toml"),
        (stages::TRAIN, train::BANK_FILE),
        (stages::OPTIMIZE, optimize::ARCHIVE_FILE),
        (stages::ENCODE, encode::RD_FILE),
        (stages::ENCODE, encode::SUMMARY_FILE),
        (stages::ENCODE, encode::SKIP_FILE),
        (stages::REPORT, report::REPORT_FILE),
    ] {
        assert!(f.cfg.stage_dir(stage).join(file).is_file(), "{stage}/{file}");
        let written = RunConfig::from_toml(&read(f.cfg.stage_dir(stage).join("config.toml"))).unwrap();
        assert_eq!(written, f.cfg);
    }
    let archive = read(f.cfg.stage_dir(stages::OPTIMIZE).join(optimize::ARCHIVE_FILE));
    assert!(archive.starts_with("th1,th2,th3,th4,c,r"));
    assert!(archive.lines().count() >= 2);
    assert!(read(f.cfg.stage_dir(stages::REPORT).join(report::REPORT_FILE)).contains("[fast]"));
}

#[test]
fn rerun_with_unchanged_inputs_is_a_noop() {
    let f = fixture();
    let before = read(f.cfg.stage_dir(stages::ENCODE).join(encode::SUMMARY_FILE));
    let again = stages::run_all(&f.cfg).unwrap();
    assert!(again.iter().all(|o| o.skipped), "{:?}", again.iter().map(|o| (o.stage, o.skipped)).collect::<Vec<_>>());
    assert_eq!(before, read(f.cfg.stage_dir(stages::ENCODE).join(encode::SUMMARY_FILE)));
}

#[test]
fn changed_settings_rerun_only_downstream_stages() {
    let (_dir, mut cfg) = scratch_run();
    cfg.thresholds = Some([0.9, 0.9, 0.9, 0.9]);
    let done = stages::run_all(&cfg).unwrap();
    let skipped: Vec<bool> = done.iter().map(|o| o.skipped).collect();
    assert_eq!(skipped, [true, true, true, false, false]);
}

fn rd_rows(cfg: &RunConfig, label: &str) -> Vec<String> {
    read(cfg.stage_dir(stages::ENCODE).join(encode::RD_FILE))
        .lines()
        .filter_map(|l| l.strip_prefix(&format!("{label},")).map(str::to_string))
        .collect()
}

#[test]
fn disabled_thresholds_reproduce_the_baseline() {
    let (_dir, mut cfg) = scratch_run();
    cfg.thresholds = Some([2.0; 4]);
    cfg.mnrc = MnrcSetting::Off;
    encode::run(&cfg).unwrap();
    assert_eq!(rd_rows(&cfg, "baseline"), rd_rows(&cfg, "fast"));
    let reports = encode::load_summary(&intra_lab::artifact::require(&cfg.stage_dir(stages::ENCODE), "encode").unwrap()).unwrap();
    assert_eq!(reports[0].leaf_evals, reports[1].leaf_evals);
    assert_eq!(reports[1].bd_br_percent, 0.0);
}

#[test]
fn baseline_only_run_has_curves_but_no_skip_stats() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        output: dir.path().to_path_buf(),
        ..f.cfg.clone()
    };
    cfg.encode.baseline_only = true;
    cfg.encode.set = EncodeSet::All;
    cfg.qps = vec![27, 32];
    encode::run(&cfg).unwrap();
    assert_eq!(rd_rows(&cfg, "baseline").len(), 2);
    assert!(rd_rows(&cfg, "fast").is_empty());
    assert!(!cfg.stage_dir(stages::ENCODE).join(encode::SKIP_FILE).exists());
}

#[test]
fn non_anchor_qp_uses_interpolated_models() {
    let (_dir, mut cfg) = scratch_run();
    cfg.qps = vec![25];
    cfg.thresholds = Some([0.8; 4]);
    encode::run(&cfg).unwrap();
    assert_eq!(rd_rows(&cfg, "fast").len(), 1);
    assert!(rd_rows(&cfg, "fast")[0].starts_with("25,"));
}

#[test]
fn tampered_upstream_is_a_dependency_error() {
    let (_dir, mut cfg) = scratch_run();
    cfg.thresholds = Some([0.8; 4]);
    let bank = cfg.stage_dir(stages::TRAIN).join(train::BANK_FILE);
    let mut bytes = std::fs::read(&bank).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&bank, bytes).unwrap();
    let err = encode::run(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("intra-lab train"), "{err}");
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_intra-lab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn exit_codes_separate_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    let corpus = dir.path().join("corpus");
    generate_corpus(&corpus, 2, 0).unwrap();
    let corpus = corpus.to_str().unwrap();

    let (code, msg) = cli(&["encode", "--corpus", corpus, "--output", out]);
    assert_eq!(code, 3, "{msg}");
    assert!(msg.contains("intra-lab datagen"), "{msg}");
    let (code, msg) = cli(&["encode", "--corpus", corpus, "--output", out, "--set", "all"]);
    assert_eq!(code, 3, "{msg}");
    assert!(msg.contains("intra-lab train"), "{msg}");

    let (code, _) = cli(&["encode", "--corpus", corpus, "--output", out, "--qp", "60"]);
    assert_eq!(code, 2);
    let (code, _) = cli(&["encode", "--corpus", corpus, "--output", out, "--thresholds", "0.9,0.9"]);
    assert_eq!(code, 2);

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let (code, _) = cli(&["datagen", "--corpus", empty.to_str().unwrap(), "--output", out]);
    assert_eq!(code, 4);

    let (code, msg) = cli(&["encode", "--corpus", corpus, "--output", out, "--set", "all", "--baseline-only", "--qp", "32"]);
    assert_eq!(code, 0, "{msg}");
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = RunConfig::load(&dir.join("default.toml")).unwrap();
    assert_eq!(default, RunConfig { output: "runs/default".into(), ..RunConfig::default() });
    let quick = RunConfig::load(&dir.join("quick.toml")).unwrap();
    assert_eq!(quick.mnrc, MnrcSetting::Conservative);
    assert!(!quick.optimize.use_gears);
}
