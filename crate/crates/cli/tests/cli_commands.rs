use std::path::PathBuf;
use std::process::{Command, Output};

use dynkin_cli::{
    cmd_perpetual, cmd_price, cmd_price_american, cmd_sweep, sweep_csv, Check, RunConfig,
    VerifyReport,
};
use dynkin_core::lattice::{tree_game_value, LatticeModel};
use dynkin_core::{GameSpec, MarketParams, OptionKind};

fn dynkin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynkin"))
        .args(args)
        .env_remove("DYNKIN_SEED")
        .output()
        .expect("run dynkin")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dynkin-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn config(kind: OptionKind, s0: f64, horizon: f64, steps: usize, paths: usize, runs: usize) -> RunConfig {
    RunConfig::default()
        .with_market(MarketParams::reference(kind, s0))
        .with_grid(horizon, steps)
        .unwrap()
        .with_sampling(paths, runs)
}

#[test]
fn verify_default_config_exits_zero() {
    let out = dynkin(&["verify"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("saddle audit"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn zero_penalty_is_a_configuration_error() {
    let out = dynkin(&["verify", "--penalty", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strict gap"));
    assert_eq!(dynkin(&["price", "--runs", "0"]).status.code(), Some(2));
    assert_eq!(dynkin(&["tree", "--kind", "straddle"]).status.code(), Some(2));
    assert_eq!(dynkin(&["sweep", "--bogus"]).status.code(), Some(2));
}

#[test]
fn failed_checks_are_listed_with_margins() {
    let report = VerifyReport {
        checks: vec![
            Check { name: "ok".into(), margin: 0.0, tolerance: 1e-10 },
            Check { name: "broken".into(), margin: 0.5, tolerance: 1e-10 },
        ],
    };
    assert!(!report.passed());
    let failures: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
    assert_eq!(failures, ["broken"]);
    let text = report.to_string();
    assert!(text.contains("FAIL broken") && text.contains("5.000e-1"));
    assert!(text.ends_with("1 of 2 checks passed"));
}

#[test]
fn config_file_with_flag_override_and_env_seed() {
    let path = scratch("run.toml");
    std::fs::write(&path, "kind = \"put\"\ns0 = 60.0\nsteps = 16\npaths = 500\nruns = 2\n").unwrap();
    let path = path.to_str().unwrap();
    let run = |extra: &[&str], env_seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_dynkin"));
        cmd.args(["price", "--config", path]).args(extra).env_remove("DYNKIN_SEED");
        if let Some(seed) = env_seed {
            cmd.env("DYNKIN_SEED", seed);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let base = run(&[], Some("5"));
    assert!(base.starts_with("cancellable put S0=60 T=0.5 M=16 runs=2 paths=500"), "{base}");
    assert_eq!(base, run(&["--seed", "5"], None));
    assert_ne!(base, run(&[], Some("6")));
    assert!(run(&["--s0", "70"], Some("5")).contains("S0=70"));

    let bad = scratch("bad.toml");
    std::fs::write(&bad, "spot = 3\n").unwrap();
    assert_eq!(dynkin(&["price", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn price_writes_per_run_csv() {
    let path = scratch("runs.csv");
    let out = dynkin(&[
        "price", "--kind", "put", "--s0", "90", "--steps", "16", "--paths", "400", "--runs", "3", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "run,value");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn price_with_large_penalty_matches_american_mode() {
    let c = config(OptionKind::Put, 60.0, 0.5, 64, 4000, 8).with_market(
        MarketParams::reference(OptionKind::Put, 60.0).with_penalty(40.0),
    );
    let game = cmd_price(&c).unwrap();
    let american = cmd_price_american(&c).unwrap();
    let combined = (game.std_error.powi(2) + american.std_error.powi(2)).sqrt();
    assert!((game.mean - american.mean).abs() <= 3.0 * combined + 1e-12);
}

#[test]
fn price_near_lattice_value() {
    let c = config(OptionKind::Put, 60.0, 0.5, 256, 4000, 10);
    let report = cmd_price(&c).unwrap();
    let spec = GameSpec::cancellable_option(&c.market, &c.grid).unwrap();
    let tree = tree_game_value(&LatticeModel::new(&c.market, &c.grid).unwrap(), &spec).unwrap().v0;
    assert!((report.mean - tree).abs() <= (3.0 * report.std_error).max(0.02 * tree));
    assert_eq!(report.per_run.len(), 10);
    assert!(report.std_error >= 0.0);
}

#[test]
fn thread_count_does_not_change_price() {
    let mut c = config(OptionKind::Call, 110.0, 1.0, 32, 1000, 6);
    c.threads = Some(1);
    let one = cmd_price(&c).unwrap();
    c.threads = Some(5);
    assert_eq!(one, cmd_price(&c).unwrap());
}

#[test]
fn sweep_rows_and_perpetual_column() {
    let mut c = config(OptionKind::Call, 60.0, 0.5, 32, 1000, 3);
    c.sweep_q_max = 3;
    let rows = cmd_sweep(&c).unwrap();
    let horizons: Vec<f64> = rows.iter().map(|r| r.horizon).collect();
    assert_eq!(horizons, [0.5, 1.0, 2.0, 4.0]);
    assert!(rows.iter().all(|r| (r.perpetual - 3.0).abs() < 1e-12 && r.std_error >= 0.0));
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with("T,value,std_error,perpetual\n0.5,"));
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(cmd_sweep(&c).unwrap(), rows);
}

#[test]
fn sweep_csv_to_stdout_matches_file() {
    let args = ["sweep", "--q-max", "1", "--steps", "8", "--paths", "200", "--runs", "2", "--seed", "3"];
    let stdout = dynkin(&args).stdout;
    let path = scratch("sweep.csv");
    let mut with_out: Vec<&str> = args.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    assert!(dynkin(&with_out).status.success());
    assert_eq!(std::fs::read(&path).unwrap(), stdout);
}

#[test]
fn perpetual_command_reports_put_constants() {
    let r = cmd_perpetual(&config(OptionKind::Put, 140.0, 0.5, 10, 100, 1)).unwrap();
    let put = r.put.unwrap();
    assert!((r.value - 5.0 * 1.4f64.powf(-0.75)).abs() < 1e-12);
    assert!((put.k_star.unwrap() - 69.9).abs() < 0.05);
    let out = dynkin(&["perpetual", "--kind", "call", "--s0", "60"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "perpetual call 3\n");
}

#[test]
fn tree_command_prints_identity_errors() {
    let out = dynkin(&["tree", "--kind", "put", "--s0", "60", "--steps", "64"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("game      40\n"), "{text}");
    assert!(text.contains("double switch nodes   0"));
}
