//! Built-in oracles behind the `selftest` CLI command. Each oracle is an
//! independent derivation of an expected behavior (canonical coupled maps,
//! conserved energy, exhaustive search, hand-computed statistics) checked
//! against the production code paths.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ccm::{
    ccm_curve, convergence_score, delay_embed, find_neighbors, ConvergenceThresholds,
    EmbeddingSpec, ScalarSeries,
};
use crate::harness::{reward_stats, AgentRecord, Condition, ConditionName, Trajectory};
use crate::pendulum::{pendulum_energy, pendulum_step, PendulumParams, PendulumState};
use crate::seeds::splitmix64;
use crate::vec2::Vec2;

pub struct OracleReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Run every oracle; order is fixed for stable output.
pub fn run_all() -> Vec<OracleReport> {
    vec![
        logistic_direction_oracle(),
        pendulum_energy_oracle(),
        knn_equivalence_oracle(),
        stats_hand_oracle(),
    ]
}

/// Canonical coupled logistic maps: x drives y strongly, y drives x weakly.
///   x' = x (3.8 - 3.8 x - 0.02 y)
///   y' = y (3.5 - 3.5 y - 0.1 x)
pub fn coupled_logistic(
    x0: f64,
    y0: f64,
    n: usize,
    burn_in: usize,
) -> (ScalarSeries, ScalarSeries) {
    let mut x = x0;
    let mut y = y0;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n + burn_in {
        let nx = x * (3.8 - 3.8 * x - 0.02 * y);
        let ny = y * (3.5 - 3.5 * y - 0.1 * x);
        x = nx;
        y = ny;
        if i >= burn_in {
            xs.push(x);
            ys.push(y);
        }
    }
    (
        ScalarSeries::new(xs).expect("coupled logistic stays finite"),
        ScalarSeries::new(ys).expect("coupled logistic stays finite"),
    )
}

/// Seeded initial condition in (0.2, 0.8) for the coupled maps.
pub fn logistic_initial(seed: u64) -> (f64, f64) {
    let a = splitmix64(seed) >> 11;
    let b = splitmix64(seed ^ 0xabcd_ef12) >> 11;
    let unit = |bits: u64| bits as f64 / (1u64 << 53) as f64;
    (0.2 + 0.6 * unit(a), 0.2 + 0.6 * unit(b))
}

fn logistic_direction_oracle() -> OracleReport {
    let spec = EmbeddingSpec {
        dim: 2,
        tau: 1,
        theiler: 5,
    };
    let thresholds = ConvergenceThresholds::default();
    let mut detail = String::new();
    let mut passed = true;
    for seed in 0..2u64 {
        let (x0, y0) = logistic_initial(seed);
        let (xs, ys) = coupled_logistic(x0, y0, 1000, 100);
        let sizes = [50usize, 120, 280, 600, 990];
        // x drives y: the manifold built from y estimates x
        let forward = ccm_curve(&ys, &xs, &spec, &sizes, 8, seed).unwrap();
        let reverse = ccm_curve(&xs, &ys, &spec, &sizes, 8, seed).unwrap();
        let fwd_score = convergence_score(&forward, &thresholds).unwrap();
        let gap = forward.final_rho() - reverse.final_rho();
        if !fwd_score.convergent || gap < 0.1 {
            passed = false;
        }
        detail.push_str(&format!(
            "seed {seed}: forward rho {:.3} (convergent: {}), reverse rho {:.3}; ",
            forward.final_rho(),
            fwd_score.convergent,
            reverse.final_rho()
        ));
    }
    OracleReport {
        name: "coupled logistic cross-map asymmetry",
        passed,
        detail,
    }
}

fn pendulum_energy_oracle() -> OracleReport {
    let p = PendulumParams::default();
    let mut s = PendulumState {
        theta1: std::f64::consts::FRAC_PI_2,
        theta2: std::f64::consts::FRAC_PI_2,
        omega1: 0.0,
        omega2: 0.0,
    };
    let e0 = pendulum_energy(&s, &p);
    let scale = e0.abs().max(p.g * (p.m1 + p.m2) * (p.l1 + p.l2));
    let mut max_drift: f64 = 0.0;
    for _ in 0..2000 {
        s = pendulum_step(&s, &p, 0.01);
        max_drift = max_drift.max((pendulum_energy(&s, &p) - e0).abs() / scale);
    }
    OracleReport {
        name: "pendulum energy conservation",
        passed: max_drift < 1e-6,
        detail: format!("max relative drift {max_drift:.3e} over 2000 RK4 steps at dt = 0.01"),
    }
}

fn knn_equivalence_oracle() -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut checked = 0usize;
    for _ in 0..20 {
        let len = rng.random_range(10..=50);
        let values: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let series = ScalarSeries::new(values).unwrap();
        let spec = EmbeddingSpec {
            dim: 2,
            tau: 1,
            theiler: 0,
        };
        let m = delay_embed(&series, &spec).unwrap();
        for theiler in [0usize, 2] {
            for q in 0..m.len() {
                for k in 1..=4usize {
                    let mut all: Vec<(f64, usize)> = (0..m.len())
                        .filter(|&c| {
                            c != q
                                && (m.origin_index(c) as i64 - m.origin_index(q) as i64)
                                    .unsigned_abs() as usize
                                    > theiler
                        })
                        .map(|c| {
                            let d2: f64 = m
                                .point(c)
                                .iter()
                                .zip(m.point(q))
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum();
                            (d2, c)
                        })
                        .collect();
                    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let expected: Vec<(usize, f64)> =
                        all.iter().take(k).map(|&(d2, c)| (c, d2.sqrt())).collect();
                    match find_neighbors(&m, q, k, theiler) {
                        Ok(got) => {
                            if got != expected {
                                return OracleReport {
                                    name: "knn exhaustive equivalence",
                                    passed: false,
                                    detail: format!(
                                        "mismatch at len {len} query {q} k {k} theiler {theiler}"
                                    ),
                                };
                            }
                            checked += 1;
                        }
                        Err(_) => {
                            if all.len() >= k {
                                return OracleReport {
                                    name: "knn exhaustive equivalence",
                                    passed: false,
                                    detail: format!("spurious error at len {len} query {q} k {k}"),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
    OracleReport {
        name: "knn exhaustive equivalence",
        passed: true,
        detail: format!("{checked} queries matched the exhaustive scan exactly"),
    }
}

fn stats_hand_oracle() -> OracleReport {
    let fixture: Vec<Trajectory> = [1.0, 2.0, 3.0]
        .iter()
        .map(|&r| {
            Trajectory::new(
                Condition {
                    name: ConditionName::Scripted,
                    ..Condition::default()
                },
                0,
                2,
                vec![
                    AgentRecord {
                        pos: Vec2::ZERO,
                        vel: Vec2::ZERO,
                    };
                    2
                ],
                vec![r, -r],
                0,
            )
            .unwrap()
        })
        .collect();
    let stats = reward_stats(&fixture).unwrap();
    let expected_ci = 4.302652729911275 / 3.0_f64.sqrt();
    let passed = (stats.mean_reward - 2.0).abs() < 1e-12
        && (stats.sd - 1.0).abs() < 1e-12
        && (stats.ci95_halfwidth - expected_ci).abs() < 1e-9;
    OracleReport {
        name: "reward statistics hand oracle",
        passed,
        detail: format!(
            "mean {} sd {} ci95 {} (expected 2, 1, {expected_ci:.6})",
            stats.mean_reward, stats.sd, stats.ci95_halfwidth
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_oracles_pass() {
        for report in run_all() {
            assert!(report.passed, "{}: {}", report.name, report.detail);
        }
    }
}
