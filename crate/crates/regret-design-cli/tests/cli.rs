//! End-to-end checks of the binary: exit codes, output determinism, and
//! the solution round trip.

use std::path::PathBuf;
use std::process::Command;

use regret_design::apps::{build_site_problem, SiteTable};
use regret_design::solver::solve;
use regret_design_cli::report::{parse_solution_csv, solution_csv};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regret-design"))
}

fn problem_doc(omega: &str) -> String {
    format!(
        r#"
schema = "regret-design/v1"
kind = "design_problem"

[problem]
omega = {omega}
theta_obs = [0.0, 0.0]
sigma_obs = [1.0, 0.1, 0.1, 2.0]
budget = 50.0
gamma_policy = "free"

[[problem.arms]]
name = "a"
v2 = 1.0
cost = 1.0

[[problem.arms]]
name = "b"
v2 = 2.0
cost = 1.5

[problem.feasibility]
mode = "at-most-k"
k = 1

[problem.norm]
kind = "linf"
"#
    )
}

fn write_temp(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("regret-design-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn solve_succeeds_and_is_deterministic() {
    let input = write_temp("ok.toml", &problem_doc("[1.0, -2.0]"));
    let out1 = write_temp("sol1.csv", "");
    let out2 = write_temp("sol2.csv", "");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["solve", "--input"])
            .arg(&input)
            .arg("--output")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "csv output not byte-identical across runs");
    // Thread count must not change the bytes either.
    let out3 = write_temp("sol3.csv", "");
    let status = bin()
        .args(["solve", "--threads", "1", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&out3)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(a, std::fs::read(&out3).unwrap());
}

#[test]
fn simulate_is_deterministic_given_seed() {
    let input = write_temp("sim.toml", &problem_doc("[1.0, -2.0]"));
    let mut outputs = Vec::new();
    for name in ["mc1.csv", "mc2.csv"] {
        let out = write_temp(name, "");
        let status = bin()
            .args(["simulate", "--reps", "5000", "--seed", "42", "--bias-bound", "0.5"])
            .arg("--input")
            .arg(&input)
            .arg("--output")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    // A different seed changes the draws.
    let out3 = write_temp("mc3.csv", "");
    let status = bin()
        .args(["simulate", "--reps", "5000", "--seed", "43", "--bias-bound", "0.5"])
        .arg("--input")
        .arg(&input)
        .arg("--output")
        .arg(&out3)
        .status()
        .unwrap();
    assert!(status.success());
    assert_ne!(outputs[0], std::fs::read(&out3).unwrap());
}

#[test]
fn zero_sensitivity_exits_config_error() {
    let input = write_temp("zero.toml", &problem_doc("[1.0, 0.0]"));
    let output = bin()
        .args(["solve", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&output.stderr);
    assert!(msg.contains("nonzero"), "stderr was: {msg}");
}

#[test]
fn unknown_key_exits_config_error() {
    let doc = problem_doc("[1.0, -2.0]").replace("budget = 50.0", "budget = 50.0\nbudgett = 1.0");
    let input = write_temp("typo.toml", &doc);
    let output = bin()
        .args(["solve", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&output.stderr);
    assert!(msg.contains("budgett"), "stderr was: {msg}");
}

#[test]
fn missing_file_exits_config_error() {
    let output = bin()
        .args(["solve", "--input", "/nonexistent/problem.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn validate_passes_on_default_seed() {
    let output = bin().args(["validate", "--seed", "1"]).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stdout));
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("all 6 suites passed"), "{text}");
}

#[test]
fn replicate_ge_reports_expected_design() {
    let out = write_temp("ge.csv", "");
    let output = bin()
        .args(["replicate-ge", "--grid", "200:1200:6", "--output"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8_lossy(&output.stdout);
    // The two-arm design at a budget of 1000 pairs the income arm with
    // the job program.
    assert!(text.contains("uct, job"), "{text}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("max_arms,n_tot,x,gamma_uct"));
    // 6 grid points x 2 arm caps + header.
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn replicate_sites_selects_largest_share_areas() {
    let out = write_temp("sites.csv", "");
    let output = bin()
        .args(["replicate-sites", "--grid", "40:80:3", "--output"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("area-2"), "{text}");
    assert!(text.contains("area-2, area-3"), "{text}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("max_arms,n_tot,x,gamma_area-1"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn oracles_and_sweep_emit_csv() {
    let input = write_temp("os.toml", &problem_doc("[1.0, -2.0]"));
    let out = write_temp("oracles.csv", "");
    let status = bin()
        .args(["oracles", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("quantity,value,design,gamma"));
    assert!(csv.contains("alpha_star"));
    assert!(csv.contains("beta_star"));

    let out = write_temp("sweep.csv", "");
    let status = bin()
        .args(["sweep", "--grid", "10:30:3", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("n_tot,x,gamma_a,gamma_b,n_a,n_b,alpha,beta,regret,ney_x"));
}

#[test]
fn ci_command_reports_candidates_and_intervals() {
    let doc = r#"
schema = "regret-design/v1"
kind = "moment_model"

[moment_model]
moments = 3
params = 2
targets = 1
lambda = [-1.0, 0.0, 0.0, -1.0, 0.0, -1.0]
omega_mat = [1.0, 2.0]
experimental_idx = [2]

[[moment_model.candidates]]
w = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
sigma = [1.0, 0.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0, 0.4]

[[moment_model.candidates]]
w = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
sigma = [1.0, 0.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0, 0.4]

[moment_model.norm]
kind = "linf"

[envelope]
omega_lower = [1.0, 2.0]
omega_upper = [1.0, 2.0]
eta = 0.05
"#;
    let input = write_temp("mm.toml", doc);
    let out = write_temp("ci.csv", "");
    let output = bin()
        .args(["ci", "--bias-bound", "0,1.5", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("record,index,a,c,regret,binding,radius,lower,upper"));
    assert_eq!(csv.matches("\ncandidate,").count(), 2);
    assert_eq!(csv.matches("\ninterval,").count(), 2);
}

#[test]
fn solution_round_trip_exact_at_1e12() {
    let table = SiteTable::bundled();
    let problem = build_site_problem(&table, 52.0, 2).unwrap();
    let sol = solve(&problem).unwrap();
    let csv = solution_csv(&problem, &sol);
    let parsed = parse_solution_csv(&csv).unwrap();
    assert_eq!(parsed.x_star, sol.x_star);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    for (a, b) in parsed.gamma_star.iter().zip(&sol.gamma_star) {
        assert!(close(*a, *b));
    }
    for (a, b) in parsed.n_star.iter().zip(&sol.n_star) {
        assert!(close(*a, *b));
    }
    assert!(close(parsed.t_star, sol.t_star));
    assert!(close(parsed.breakdown.alpha, sol.breakdown.alpha));
    assert!(close(parsed.breakdown.beta, sol.breakdown.beta));
    assert_eq!(parsed.breakdown.binding, sol.breakdown.binding);
}
