//! Experiment orchestration: run evaluation episodes for each predator
//! strategy (optionally replacing predator 0 with the pendulum driver),
//! record trajectories, and compute reward statistics and the perturbation
//! CCM analysis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccm::{
    agent_ccm, aggregate_curves, convergence_score, AgentCcm, CcmCurve, CcmError, ConvergenceScore,
    ConvergenceThresholds, EmbeddingSpec, LibraryMode, ScalarSeries,
};
use crate::pendulum::{PendulumDriver, PendulumMapping, PendulumParams};
use crate::physics::{
    compute_rewards, integrate_step, prey_contact_count, resolve_contacts_exempt, spawn_episode,
    AgentState, PhysicsError, WorldConfig,
};
use crate::seeds::{episode_seed, stream_seed, STREAM_PENDULUM, STREAM_SPAWN};
use crate::stats::{mean, sample_sd, student_t_quantile};
use crate::strategies::{chaser_policy, prey_evade_policy, spring_policy, SpringParams};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scripted conditions are ingested from files, not simulated")]
    ScriptedNotRunnable,
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Ccm(#[from] CcmError),
    #[error("need at least 2 episodes for statistics, got {0}")]
    TooFewEpisodes(usize),
    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionName {
    Chaser,
    Spring,
    Scripted,
}

impl std::fmt::Display for ConditionName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConditionName::Chaser => "chaser",
            ConditionName::Spring => "spring",
            ConditionName::Scripted => "scripted",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ConditionName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "chaser" => Ok(ConditionName::Chaser),
            "spring" => Ok(ConditionName::Spring),
            "scripted" => Ok(ConditionName::Scripted),
            other => Err(format!(
                "unknown condition {other:?}; expected chaser, spring, or scripted"
            )),
        }
    }
}

/// One experimental condition: strategy, perturbation flag, episode count,
/// episode length, and the top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: ConditionName,
    /// When set, predator 0 is replaced by the double-pendulum driver.
    pub perturbed: bool,
    pub n_episodes: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for Condition {
    fn default() -> Self {
        Condition {
            name: ConditionName::Chaser,
            perturbed: false,
            n_episodes: 10,
            steps: 2000,
            seed: 0,
        }
    }
}

impl Condition {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_episodes < 1 {
            return Err("n_episodes must be at least 1".into());
        }
        if self.steps < 1 {
            return Err("steps must be at least 1".into());
        }
        Ok(())
    }
}

/// Independent random streams for one episode. Keeping the pendulum stream
/// separate from the spawn stream lets the driven predator's trajectory stay
/// bit-identical while everything else varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSeeds {
    pub spawn: u64,
    pub pendulum: u64,
}

impl EpisodeSeeds {
    /// Documented splitting rule: `base = splitmix64(condition_seed +
    /// episode)`, then one stream per purpose via `splitmix64(base ^ tag)`.
    pub fn derive(condition_seed: u64, episode: u64) -> (u64, Self) {
        let base = episode_seed(condition_seed, episode);
        (
            base,
            EpisodeSeeds {
                spawn: stream_seed(base, STREAM_SPAWN),
                pendulum: stream_seed(base, STREAM_PENDULUM),
            },
        )
    }
}

/// Everything needed to simulate an episode besides the condition itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub world: WorldConfig,
    pub spring: SpringParams,
    pub pendulum: PendulumParams,
    pub mapping: PendulumMapping,
    pub pendulum_substeps: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        let world = WorldConfig::default();
        let pendulum = PendulumParams::default();
        let mapping = PendulumMapping::centered(world.arena_half_width, &pendulum);
        SimParams {
            world,
            spring: SpringParams::default(),
            pendulum,
            mapping,
            pendulum_substeps: 10,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), String> {
        self.world.validate()?;
        self.spring.validate()?;
        self.pendulum.validate()?;
        self.mapping
            .validate(self.world.arena_half_width, &self.pendulum)?;
        if self.pendulum_substeps < 1 {
            return Err("pendulum_substeps must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-step, per-agent kinematic record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentRecord {
    pub pos: Vec2,
    pub vel: Vec2,
}

/// Full record of one episode: the interchange unit between simulation and
/// analysis. Records and rewards are stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub condition: Condition,
    pub episode_seed: u64,
    n_agents: usize,
    steps: usize,
    records: Vec<AgentRecord>,
    rewards: Vec<f64>,
    /// Total predator-prey contact events over the episode (informational;
    /// zero for ingested trajectories).
    pub contact_count: usize,
}

impl Trajectory {
    pub fn new(
        condition: Condition,
        episode_seed: u64,
        n_agents: usize,
        records: Vec<AgentRecord>,
        rewards: Vec<f64>,
        contact_count: usize,
    ) -> Result<Self, HarnessError> {
        if n_agents < 2 {
            return Err(HarnessError::TrajectoryMismatch(
                "a trajectory needs at least one predator and the prey".into(),
            ));
        }
        if records.is_empty() || !records.len().is_multiple_of(n_agents) {
            return Err(HarnessError::TrajectoryMismatch(format!(
                "record count {} is not a positive multiple of n_agents {}",
                records.len(),
                n_agents
            )));
        }
        if rewards.len() != records.len() {
            return Err(HarnessError::TrajectoryMismatch(format!(
                "reward count {} does not match record count {}",
                rewards.len(),
                records.len()
            )));
        }
        let steps = records.len() / n_agents;
        Ok(Trajectory {
            condition,
            episode_seed,
            n_agents,
            steps,
            records,
            rewards,
            contact_count,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_predators(&self) -> usize {
        self.n_agents - 1
    }

    pub fn prey_index(&self) -> usize {
        self.n_agents - 1
    }

    pub fn n_steps(&self) -> usize {
        self.steps
    }

    pub fn record(&self, step: usize, agent: usize) -> &AgentRecord {
        &self.records[step * self.n_agents + agent]
    }

    pub fn reward(&self, step: usize, agent: usize) -> f64 {
        self.rewards[step * self.n_agents + agent]
    }

    /// One position coordinate of one agent over time (coord 0 = x, 1 = y).
    pub fn position_series(&self, agent: usize, coord: usize) -> ScalarSeries {
        let values: Vec<f64> = (0..self.steps)
            .map(|s| {
                let p = self.record(s, agent).pos;
                if coord == 0 {
                    p.x
                } else {
                    p.y
                }
            })
            .collect();
        ScalarSeries::new(values).expect("trajectory positions are finite by construction")
    }

    pub fn total_reward(&self, agent: usize) -> f64 {
        (0..self.steps).map(|s| self.reward(s, agent)).sum()
    }
}

/// Simulate one episode. Fully deterministic in (condition, seeds, params).
///
/// Each step: compute policy accelerations (the driven predator's slot is
/// ignored), integrate, apply the kinematic pendulum override, resolve
/// contacts with the driven predator exempt from impulses, accumulate
/// rewards, and record the post-step state.
pub fn run_episode(
    condition: &Condition,
    seeds: EpisodeSeeds,
    params: &SimParams,
) -> Result<Trajectory, HarnessError> {
    run_episode_tagged(condition, seeds, params, seeds.spawn)
}

fn run_episode_tagged(
    condition: &Condition,
    seeds: EpisodeSeeds,
    params: &SimParams,
    episode_seed: u64,
) -> Result<Trajectory, HarnessError> {
    condition.validate().map_err(HarnessError::InvalidConfig)?;
    params.validate().map_err(HarnessError::InvalidConfig)?;
    if condition.name == ConditionName::Scripted {
        return Err(HarnessError::ScriptedNotRunnable);
    }
    let config = &params.world;
    let n = config.n_agents();
    let prey = config.prey_index();

    let mut world = spawn_episode(config, seeds.spawn);
    let mut driver = if condition.perturbed {
        let d = PendulumDriver::seeded(
            params.pendulum,
            params.mapping,
            params.pendulum_substeps,
            seeds.pendulum,
        );
        // snap the driven predator to the bob so its whole trajectory,
        // velocities included, depends only on the pendulum stream
        world.agents[0] = AgentState {
            pos: d.current_target(),
            vel: Vec2::ZERO,
        };
        Some(d)
    } else {
        None
    };

    let mut records = Vec::with_capacity(condition.steps * n);
    let mut rewards = Vec::with_capacity(condition.steps * n);
    let mut contact_count = 0usize;
    let mut accels = vec![Vec2::ZERO; n];

    for _ in 0..condition.steps {
        for (i, accel) in accels.iter_mut().enumerate().take(config.n_predators) {
            if driver.is_some() && i == 0 {
                *accel = Vec2::ZERO;
                continue;
            }
            *accel = match condition.name {
                ConditionName::Chaser => {
                    chaser_policy(&world.agents[i], &world.agents[prey], &config.predator_body)
                }
                ConditionName::Spring => spring_policy(
                    i,
                    &world,
                    config.n_predators,
                    &params.spring,
                    &config.predator_body,
                ),
                ConditionName::Scripted => unreachable!(),
            };
        }
        accels[prey] = prey_evade_policy(
            &world.agents[prey],
            &world.agents[..config.n_predators],
            &config.prey_body,
            config.arena_half_width,
        );

        world = integrate_step(&world, &accels, config)?;
        if let Some(d) = driver.as_mut() {
            world.agents[0] = d.advance(config.dt);
        }
        let (next, events) = resolve_contacts_exempt(&world, config, driver.is_some().then_some(0));
        world = next;

        let step_rewards = compute_rewards(&events, config);
        contact_count += prey_contact_count(&events, config);
        for (i, agent) in world.agents.iter().enumerate() {
            records.push(AgentRecord {
                pos: agent.pos,
                vel: agent.vel,
            });
            rewards.push(step_rewards[i]);
        }
    }

    Trajectory::new(*condition, episode_seed, n, records, rewards, contact_count)
}

/// Run every episode of a condition. Episodes execute in parallel with
/// independent derived seed streams; results are identical to serial
/// execution.
pub fn run_condition(
    condition: &Condition,
    params: &SimParams,
) -> Result<Vec<Trajectory>, HarnessError> {
    condition.validate().map_err(HarnessError::InvalidConfig)?;
    params.validate().map_err(HarnessError::InvalidConfig)?;
    (0..condition.n_episodes)
        .into_par_iter()
        .map(|i| {
            let (base, seeds) = EpisodeSeeds::derive(condition.seed, i as u64);
            run_episode_tagged(condition, seeds, params, base)
        })
        .collect()
}

/// Per-condition reward statistics over episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionStats {
    pub n: usize,
    /// Mean per-episode predator reward (all predators share rewards, so any
    /// one predator's total represents the team).
    pub mean_reward: f64,
    /// Sample standard deviation (n-1 denominator).
    pub sd: f64,
    /// t-based 95% confidence half-width: t(0.975, n-1) * sd / sqrt(n).
    pub ci95_halfwidth: f64,
}

pub fn reward_stats(trajectories: &[Trajectory]) -> Result<ConditionStats, HarnessError> {
    let n = trajectories.len();
    if n < 2 {
        return Err(HarnessError::TooFewEpisodes(n));
    }
    let mut totals = Vec::with_capacity(n);
    for t in trajectories {
        let first = t.total_reward(0);
        for p in 1..t.n_predators() {
            if t.total_reward(p) != first {
                return Err(HarnessError::TrajectoryMismatch(format!(
                    "predator {p} total reward differs from predator 0 in episode seed {}",
                    t.episode_seed
                )));
            }
        }
        totals.push(first);
    }
    let m = mean(&totals);
    let sd = sample_sd(&totals);
    let ci95_halfwidth = student_t_quantile(0.975, n - 1) * sd / (n as f64).sqrt();
    Ok(ConditionStats {
        n,
        mean_reward: m,
        sd,
        ci95_halfwidth,
    })
}

/// CCM curves for one ordered (source -> reader) pair, per episode and
/// aggregated.
#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub reader: usize,
    pub source: usize,
    pub per_episode: Vec<AgentCcm>,
    /// Mean and SD across episodes of the per-episode channel-mean curves.
    pub aggregate: CcmCurve,
    pub score: ConvergenceScore,
}

/// Full perturbation analysis: influence of the modified predator on each
/// unmodified predator, the reverse direction for inspection, and the
/// combined aggregate across pairs.
#[derive(Debug, Clone)]
pub struct PerturbationAnalysis {
    pub source: usize,
    pub forward: Vec<PairAnalysis>,
    pub reverse: Vec<PairAnalysis>,
    pub combined: CcmCurve,
    pub combined_score: ConvergenceScore,
}

/// Settings shared by every CCM evaluation in an analysis run.
#[derive(Debug, Clone, PartialEq)]
pub struct CcmSettings {
    pub spec: EmbeddingSpec,
    pub library_sizes: Vec<usize>,
    pub n_subsamples: usize,
    pub mode: LibraryMode,
    pub thresholds: ConvergenceThresholds,
}

/// Cross-map every unmodified predator against `source` (the modified
/// predator), per episode, and aggregate across episodes.
pub fn perturbation_analysis(
    trajectories: &[Trajectory],
    source: usize,
    settings: &CcmSettings,
    seed: u64,
) -> Result<PerturbationAnalysis, HarnessError> {
    let first = trajectories
        .first()
        .ok_or_else(|| HarnessError::TrajectoryMismatch("no trajectories given".into()))?;
    let n_predators = first.n_predators();
    if source >= n_predators {
        return Err(HarnessError::TrajectoryMismatch(format!(
            "source agent {source} is not a predator (n_predators = {n_predators})"
        )));
    }
    for t in trajectories {
        if t.n_agents() != first.n_agents() || t.n_steps() != first.n_steps() {
            return Err(HarnessError::TrajectoryMismatch(
                "trajectories differ in agent count or length".into(),
            ));
        }
    }

    let readers: Vec<usize> = (0..n_predators).filter(|&i| i != source).collect();
    let analyze_direction = |dir_tag: u64, flip: bool| -> Result<Vec<PairAnalysis>, HarnessError> {
        readers
            .iter()
            .map(|&reader| {
                let pair_seed = stream_seed(stream_seed(seed, dir_tag), reader as u64);
                let per_episode: Vec<AgentCcm> = trajectories
                    .iter()
                    .enumerate()
                    .map(|(e, t)| {
                        let (r, s) = if flip {
                            (source, reader)
                        } else {
                            (reader, source)
                        };
                        agent_ccm(
                            t,
                            r,
                            s,
                            &settings.spec,
                            &settings.library_sizes,
                            settings.n_subsamples,
                            stream_seed(pair_seed, e as u64 + 1),
                            settings.mode,
                        )
                    })
                    .collect::<Result<_, CcmError>>()?;
                let mean_curves: Vec<&CcmCurve> = per_episode.iter().map(|a| &a.mean).collect();
                let aggregate = aggregate_curves(&mean_curves);
                let score = convergence_score(&aggregate, &settings.thresholds)?;
                Ok(PairAnalysis {
                    reader: if flip { source } else { reader },
                    source: if flip { reader } else { source },
                    per_episode,
                    aggregate,
                    score,
                })
            })
            .collect()
    };

    let forward = analyze_direction(0xF0, false)?;
    let reverse = analyze_direction(0xF1, true)?;

    let all_forward_curves: Vec<&CcmCurve> = forward
        .iter()
        .flat_map(|p| p.per_episode.iter().map(|a| &a.mean))
        .collect();
    let combined = aggregate_curves(&all_forward_curves);
    let combined_score = convergence_score(&combined, &settings.thresholds)?;

    Ok(PerturbationAnalysis {
        source,
        forward,
        reverse,
        combined,
        combined_score,
    })
}
