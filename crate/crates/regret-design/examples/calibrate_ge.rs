//! Scans the observational-sample-size scaling of the cash-transfer
//! application and prints the design behavior used to pin the bundled
//! default.

use regret_design::apps::{build_ge_problem, GeCalibration};
use regret_design::model::design_bits;
use regret_design::solver::{neyman_design, solve};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_obs_list: Vec<f64> = if args.len() > 1 {
        args[1..].iter().map(|a| a.parse().unwrap()).collect()
    } else {
        vec![500.0, 1000.0, 1500.0, 2000.0, 3000.0, 5000.0, 10000.0, 20000.0]
    };
    for n_obs in n_obs_list {
        let mut cal = GeCalibration::bundled();
        cal.n_obs = n_obs;
        println!("==== n_obs = {n_obs}");

        // Two-arm switch threshold: smallest n_tot whose solution selects the job arm.
        let mut switch_at = None;
        for n_tot in (100..=2000).step_by(25) {
            let problem = build_ge_problem(&cal, n_tot as f64, 2).unwrap();
            let sol = solve(&problem).unwrap();
            if sol.x_star[2] && switch_at.is_none() {
                switch_at = Some(n_tot);
            }
        }
        println!("  two-arm job switch at n_tot ~ {switch_at:?}");

        for (k, label) in [(1usize, "one-arm"), (2, "two-arm")] {
            let problem = build_ge_problem(&cal, 1000.0, k).unwrap();
            let sol = solve(&problem).unwrap();
            let ney = neyman_design(&problem).unwrap();
            let total: f64 = sol.n_star.iter().sum();
            let shares: Vec<String> = sol
                .n_star
                .iter()
                .map(|n| format!("{:.2}", n / total.max(1e-300)))
                .collect();
            println!(
                "  {label} @1000: x={} gamma={:?} shares={:?} | bias_ratio ney/opt = {:.3} | var opt/ney = {:.3} | regret opt {:.3} ney {:.3}",
                design_bits(&sol.x_star),
                sol.gamma_star.iter().map(|g| (g * 100.0).round() / 100.0).collect::<Vec<_>>(),
                shares,
                ney.breakdown.beta / sol.breakdown.beta,
                sol.breakdown.alpha / ney.breakdown.alpha,
                sol.t_star,
                ney.t_star,
            );
        }
        // Small-budget one-arm choices.
        for n_tot in [100.0, 250.0, 400.0] {
            let problem = build_ge_problem(&cal, n_tot, 1).unwrap();
            let sol = solve(&problem).unwrap();
            println!(
                "  one-arm @ {n_tot}: x={} gamma={:?}",
                design_bits(&sol.x_star),
                sol.gamma_star
                    .iter()
                    .map(|g| (g * 100.0).round() / 100.0)
                    .collect::<Vec<_>>()
            );
        }
        // Small-budget two-arm choices.
        for n_tot in [100.0, 250.0, 400.0] {
            let problem = build_ge_problem(&cal, n_tot, 2).unwrap();
            let sol = solve(&problem).unwrap();
            let total: f64 = sol.n_star.iter().sum();
            let shares: Vec<String> = sol
                .n_star
                .iter()
                .map(|n| format!("{:.2}", n / total.max(1e-300)))
                .collect();
            println!(
                "  two-arm @ {n_tot}: x={} shares={:?}",
                design_bits(&sol.x_star),
                shares
            );
        }
    }
}
