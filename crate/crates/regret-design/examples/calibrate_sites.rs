//! Prints the site-selection solutions used to sanity-check the bundled
//! table against the published comparisons.

use regret_design::apps::{build_site_problem, SiteTable};
use regret_design::model::design_bits;
use regret_design::solver::{neyman_design, solve};

fn main() {
    let table = SiteTable::bundled();
    for k in [1usize, 2] {
        for n1 in [10.0, 26.0, 40.0, 52.0, 64.0, 80.0] {
            let problem = build_site_problem(&table, n1, k).unwrap();
            let sol = solve(&problem).unwrap();
            let ney = neyman_design(&problem).unwrap();
            println!(
                "k={k} n1={n1:>4}: x={} gamma={:?} n={:?} | t={:.3} ney_t={:.3} bias_ratio={:.3}",
                design_bits(&sol.x_star),
                sol.gamma_star
                    .iter()
                    .map(|g| (g * 1000.0).round() / 1000.0)
                    .collect::<Vec<_>>(),
                sol.n_star
                    .iter()
                    .map(|n| (n * 10.0).round() / 10.0)
                    .collect::<Vec<_>>(),
                sol.t_star,
                ney.t_star,
                ney.breakdown.beta / sol.breakdown.beta,
            );
        }
    }
}
