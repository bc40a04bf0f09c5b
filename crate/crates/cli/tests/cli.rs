use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;

use nls_cli::{run, Command as Sub, RunConfig, Verdict};
use nls_core::Kind;

fn nls(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nls"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn small_sweep(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::with_seed(3);
    cfg.n = 127;
    cfg.samples = 12;
    cfg.lambda_max = 40.0;
    cfg.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn sweep_writes_the_curve_header() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(Sub::Sweep, &small_sweep(dir.path()));
    assert_eq!(s.exit_code(), 0, "{s:?}");
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("lambda,J,mass,dJ_central,flag"));
    assert_eq!(csv.lines().count(), 13);
    assert!(s.checks.iter().all(|c| c.verdict == Verdict::Pass));
}

#[test]
fn same_config_gives_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let mut cfg = small_sweep(d.path());
        cfg.kind = Kind::Nodal;
        run(Sub::Sweep, &cfg);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("curve.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn mass_beyond_the_threshold_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = nls(
        &[
            "normalized",
            "--seed",
            "1",
            "--p",
            "8",
            "--n",
            "255",
            "--samples",
            "60",
            "--lambda-max",
            "200",
            "--mu",
            "5",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let s = summary(dir.path());
    let failed: Vec<_> = s["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["verdict"] == "fail")
        .collect();
    assert!(
        failed
            .iter()
            .any(|c| c["detail"].as_str().unwrap().starts_with("MassOutOfRange")),
        "{s}"
    );
}

#[test]
fn missing_seed_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = nls(&["eig"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "n = 31\n").unwrap();
    let out = nls(&["eig", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_configuration_exits_one_with_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = nls(&["ground", "--seed", "1", "--p", "2"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = nls(&["pohozaev", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(summary(dir.path())["error"]["kind"], "InvalidConfig");
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "seed = 9\nn = 63\neig_k = 1\n").unwrap();
    let out = nls(
        &["eig", "--config", cfg.to_str().unwrap(), "--k", "2"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "coarse eigenvalues miss the continuum tolerance"
    );
    let csv = std::fs::read_to_string(dir.path().join("eig.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("index,value,residual"));
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(summary(dir.path())["seed"], 9);
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        (
            1usize..=2,
            -5.0..0.0f64,
            0.5..5.0f64,
            proptest::option::of(0.0..0.4f64),
            3usize..5000,
        ),
        (
            2.01..12.0f64,
            any::<bool>(),
            -100.0..100.0f64,
            proptest::option::of(-50.0..0.0f64),
            1usize..500,
        ),
        (
            prop::collection::vec(1e-3..1e3f64, 0..4),
            proptest::option::of(0.0..1.0f64),
            prop::collection::vec(1.0..100.0f64, 1..4),
            prop::collection::vec(1e-4..0.5f64, 0..5),
        ),
        (
            any::<u64>(),
            1e-14..1e-2f64,
            1usize..10_000,
            any::<bool>(),
            proptest::option::of("[a-z]{1,8}"),
        ),
    )
        .prop_map(
            |(
                (dim, lo, len, c, n),
                (p, nodal, lambda, lmin, samples),
                (mu, frac, boxes, eps),
                (seed, tol, max_iter, dump, input),
            )| {
                let mut cfg = RunConfig::with_seed(seed);
                cfg.dim = dim;
                cfg.lo = [lo, lo * 0.5];
                cfg.hi = [lo + len, lo * 0.5 + len];
                cfg.center = c.map(|t| [lo + t * len, lo * 0.5 + t * len]);
                cfg.n = n;
                cfg.p = p;
                cfg.kind = if nodal { Kind::Nodal } else { Kind::Signed };
                cfg.lambda = lambda;
                cfg.lambda_min = lmin;
                cfg.samples = samples;
                cfg.mu = mu;
                cfg.mu_bar_fraction = frac;
                cfg.boxes = boxes;
                cfg.eps = eps;
                cfg.tol = tol;
                cfg.max_iter = max_iter;
                cfg.dump = dump;
                cfg.input = input.map(Into::into);
                cfg
            },
        )
}

proptest! {
    #[test]
    fn config_round_trips(cfg in arb_config()) {
        let text = cfg.render();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}
