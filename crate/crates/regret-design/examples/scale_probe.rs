//! Timing probe at larger arm counts (enumeration and branch-and-bound).

use std::time::Instant;

use nalgebra::DMatrix;
use regret_design::model::{
    DesignProblem, ExperimentArm, FeasibilitySet, GammaPolicy, NormSpec, ObservationalEvidence,
    SensitivityVector,
};
use regret_design::rng::CounterRng;
use regret_design::solver::solve;

fn problem(p: usize, k: usize, seed: u64) -> DesignProblem {
    let mut rng = CounterRng::new(seed);
    let omega: Vec<f64> = (0..p).map(|_| rng.next_uniform() * 2.0 + 0.1).collect();
    let mut sigma = DMatrix::zeros(p, p);
    for j in 0..p {
        sigma[(j, j)] = rng.next_uniform() * 2.0 + 0.2;
    }
    DesignProblem::new(
        SensitivityVector::new(omega).unwrap(),
        ObservationalEvidence::new(vec![0.0; p], sigma).unwrap(),
        (0..p)
            .map(|j| ExperimentArm::new(format!("arm{j}"), rng.next_uniform() + 0.2, 1.0).unwrap())
            .collect(),
        10.0,
        FeasibilitySet::AtMostK(k),
        NormSpec::Linf,
        GammaPolicy::Free,
    )
    .unwrap()
}

fn main() {
    for (p, k) in [(12usize, 4usize), (16, 3), (18, 3), (16, 8), (20, 10)] {
        let prob = problem(p, k, 9 + p as u64);
        let count = prob.feasible_design_count();
        let start = Instant::now();
        let sol = solve(&prob).unwrap();
        println!(
            "p={p:>2} k={k:>2} designs={count:>7}: t*={:.4} arms={} in {:?}",
            sol.t_star,
            sol.x_star.iter().filter(|&&b| b).count(),
            start.elapsed()
        );
    }
}
