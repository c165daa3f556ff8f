use super::*;
use crate::config::OUT_ENV;

fn parse(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("ringlab").chain(args.iter().copied())).unwrap()
}

#[test]
fn flags_override_the_config() {
    let cli = parse(&["--N", "2", "--p", "4", "--k", "7", "--seed", "9", "--out", "x", "profile"]);
    let cfg = resolve_config(&cli.global).unwrap();
    assert_eq!((cfg.n_dim, cfg.p, cfg.k, cfg.seed), (2, 4.0, Some(7), 9));
    assert_eq!(cfg.output, PathBuf::from("x"));
}

#[test]
fn global_flags_may_follow_the_subcommand() {
    let cli = parse(&["verify-all", "--only", "1,3", "--p", "2.5"]);
    assert_eq!(cli.global.p, Some(2.5));
    assert!(matches!(cli.command, Command::VerifyAll { ref only } if only == &[1, 3]));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(main_with_args(["ringlab", "frobnicate"]), 2);
    assert_eq!(main_with_args(["ringlab", "--help"]), 0);
    assert_eq!(main_with_args(["ringlab", "--N", "3", "--p", "5", "profile"]), 2);
}

#[test]
fn run_directory_follows_the_environment() {
    let cfg = RunConfig { output: "abc".into(), ..RunConfig::default() };
    match std::env::var_os(OUT_ENV) {
        Some(root) => assert_eq!(cfg.run_dir(), PathBuf::from(root).join("abc")),
        None => assert_eq!(cfg.run_dir(), PathBuf::from("./abc")),
    }
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ringlab-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn ringlab(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("ringlab").chain(args.iter().copied()))
}

#[test]
fn bad_configs_and_criteria_are_usage_errors() {
    let dir = out_dir("usage");
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "flavour = 1\n").unwrap();
    let out = dir.join("run");
    assert_eq!(ringlab(&["--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap(), "ode"]), 2);
    assert_eq!(ringlab(&["--out", out.to_str().unwrap(), "verify-all", "--only", "13"]), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn profile_reports_the_constants_and_reverifies_from_disk() {
    let dir = out_dir("profile");
    let out = dir.to_str().unwrap();
    assert_eq!(ringlab(&["--N", "3", "--p", "3", "--k", "6", "--out", out, "profile"]), 0);
    let table = std::fs::read_to_string(dir.join("constants.csv")).unwrap();
    let c211: f64 = table.lines().find(|l| l.starts_with("1e0,1e0,")).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((c211 + 2.0).abs() <= 1e-6);
    assert!(dir.join("config.toml").exists());
    assert!(dir.join("residual.svg").exists());
    assert_eq!(ringlab(&["--out", out, "profile", "--verify-only"]), 0);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn ode_outputs_are_deterministic() {
    let dir = out_dir("ode");
    let files = ["trajectory.csv", "exponents.json", "perturbed.csv", "perturbed.json"];
    let mut runs = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.join(sub);
        assert_eq!(ringlab(&["--out", out.to_str().unwrap(), "ode", "--fit", "--perturbed"]), 0);
        runs.push(files.map(|f| std::fs::read(out.join(f)).unwrap()));
    }
    for (i, f) in files.iter().enumerate() {
        assert!(runs[0][i] == runs[1][i], "{f} differs between identical runs");
    }
    let report: serde_json::Value = serde_json::from_slice(&runs[0][1]).unwrap();
    for row in report.as_array().unwrap() {
        assert!(row["delta"].as_f64().unwrap().abs() <= 0.02 * row["theory"].as_f64().unwrap().abs());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_all_runs_a_subset() {
    let dir = out_dir("verify");
    assert_eq!(ringlab(&["--out", dir.to_str().unwrap(), "verify-all", "--only", "1,2,8"]), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("verify.json")).unwrap()).unwrap();
    let v = v.as_array().unwrap();
    assert_eq!(v.len(), 3);
    assert!(v.iter().all(|o| o["passed"] == true));
    std::fs::remove_dir_all(&dir).ok();
}
