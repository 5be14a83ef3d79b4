//! Deterministic 2D particle world: spawn, semi-implicit Euler integration,
//! speed limits, sticky arena walls, contact detection with bump impulses,
//! and contact rewards.
//!
//! Agent ordering is fixed for an episode: indices `0..n_predators-1` are
//! predators, the last index is the prey.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec2::Vec2;

/// Static body parameters of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyParams {
    pub mass: f64,
    pub radius: f64,
    pub max_speed: f64,
    pub max_accel: f64,
}

impl BodyParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("mass", self.mass),
            ("radius", self.radius),
            ("max_speed", self.max_speed),
            ("max_accel", self.max_accel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!(
                    "body parameter {name} must be strictly positive, got {v}"
                ));
            }
        }
        Ok(())
    }
}

/// World-level configuration. Defaults give a 2x2 m arena with three
/// predators and one faster, more agile prey (prey has 4/3 the acceleration
/// and 1.25x the top speed of a predator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Simulation step, seconds.
    pub dt: f64,
    /// Per-step velocity decay coefficient in [0, 1).
    pub damping: f64,
    /// Arena spans [-arena_half_width, +arena_half_width] on both axes.
    pub arena_half_width: f64,
    /// Bump impulse stiffness (impulse = stiffness * penetration * dt).
    pub contact_stiffness: f64,
    /// Points granted per predator-prey contact event.
    pub reward_magnitude: f64,
    pub predator_body: BodyParams,
    pub prey_body: BodyParams,
    pub n_predators: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dt: 0.1,
            damping: 0.25,
            arena_half_width: 1.0,
            contact_stiffness: 100.0,
            reward_magnitude: 10.0,
            predator_body: BodyParams {
                mass: 1.0,
                radius: 0.075,
                max_speed: 1.0,
                max_accel: 3.0,
            },
            prey_body: BodyParams {
                mass: 1.0,
                radius: 0.05,
                max_speed: 1.25,
                max_accel: 4.0,
            },
            n_predators: 3,
        }
    }
}

impl WorldConfig {
    pub fn n_agents(&self) -> usize {
        self.n_predators + 1
    }

    /// Index of the prey agent (always last).
    pub fn prey_index(&self) -> usize {
        self.n_predators
    }

    pub fn body(&self, agent: usize) -> &BodyParams {
        if agent < self.n_predators {
            &self.predator_body
        } else {
            &self.prey_body
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(format!("damping must lie in [0, 1), got {}", self.damping));
        }
        self.predator_body.validate()?;
        self.prey_body.validate()?;
        let max_radius = self.predator_body.radius.max(self.prey_body.radius);
        let arena_ok =
            self.arena_half_width.is_finite() && self.arena_half_width > 2.0 * max_radius;
        if !arena_ok {
            return Err(format!(
                "arena_half_width must exceed twice the largest agent radius ({})",
                2.0 * max_radius
            ));
        }
        if !(self.contact_stiffness >= 0.0 && self.contact_stiffness.is_finite()) {
            return Err("contact_stiffness must be finite and non-negative".into());
        }
        if !self.reward_magnitude.is_finite() {
            return Err("reward_magnitude must be finite".into());
        }
        if self.n_predators < 1 {
            return Err("n_predators must be at least 1".into());
        }
        Ok(())
    }
}

/// Kinematic state of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentState {
    pub pos: Vec2,
    pub vel: Vec2,
}

/// Full world state; a plain value that can be cloned and sent across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub step_index: u64,
    pub agents: Vec<AgentState>,
}

/// One overlapping pair recorded this step, indices ordered `i < j`.
pub type ContactEvent = (usize, usize);

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("expected {expected} accelerations, got {got}")]
    AccelCountMismatch { expected: usize, got: usize },
    #[error("non-finite acceleration for agent {agent}")]
    NonFiniteAccel { agent: usize },
}

const SPAWN_RETRY_CAP: usize = 10_000;

/// Spawn an episode: positions uniform over the arena interior (one radius
/// of margin from each wall), velocity directions uniform, speeds uniform in
/// [0, 0.25 * max_speed]. Overlapping placements are resampled. Deterministic
/// in (config, seed).
pub fn spawn_episode(config: &WorldConfig, seed: u64) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents: Vec<AgentState> = Vec::with_capacity(config.n_agents());
    for i in 0..config.n_agents() {
        let body = config.body(i);
        let margin = config.arena_half_width - body.radius;
        let mut attempts = 0;
        let pos = loop {
            let candidate = Vec2::new(
                rng.random_range(-margin..=margin),
                rng.random_range(-margin..=margin),
            );
            let overlaps = agents.iter().enumerate().any(|(j, other)| {
                (other.pos - candidate).norm() < config.body(j).radius + body.radius
            });
            if !overlaps {
                break candidate;
            }
            attempts += 1;
            assert!(
                attempts < SPAWN_RETRY_CAP,
                "spawn_episode: agent {i} could not be placed without overlap; \
                 the configured arena is too crowded"
            );
        };
        let angle = rng.random_range(0.0..core::f64::consts::TAU);
        let speed = rng.random_range(0.0..=0.25 * body.max_speed);
        agents.push(AgentState {
            pos,
            vel: Vec2::new(angle.cos(), angle.sin()) * speed,
        });
    }
    WorldState {
        step_index: 0,
        agents,
    }
}

/// Advance every agent one step of semi-implicit Euler:
/// `vel' = (1 - damping) * vel + accel * dt` (accel clamped to max_accel,
/// vel' clamped to max_speed), `pos' = pos + vel' * dt`, then sticky walls
/// (position clamped to the arena, normal velocity component zeroed).
///
/// Contact impulses are applied separately by [`resolve_contacts`].
pub fn integrate_step(
    world: &WorldState,
    accels: &[Vec2],
    config: &WorldConfig,
) -> Result<WorldState, PhysicsError> {
    if accels.len() != world.agents.len() {
        return Err(PhysicsError::AccelCountMismatch {
            expected: world.agents.len(),
            got: accels.len(),
        });
    }
    for (agent, a) in accels.iter().enumerate() {
        if !a.is_finite() {
            return Err(PhysicsError::NonFiniteAccel { agent });
        }
    }
    let mut next = world.clone();
    next.step_index += 1;
    let hw = config.arena_half_width;
    for (i, agent) in next.agents.iter_mut().enumerate() {
        let body = config.body(i);
        let accel = accels[i].clamp_norm(body.max_accel);
        let mut vel = agent.vel * (1.0 - config.damping) + accel * config.dt;
        vel = vel.clamp_norm(body.max_speed);
        let mut pos = agent.pos + vel * config.dt;
        if pos.x > hw {
            pos.x = hw;
            vel.x = 0.0;
        } else if pos.x < -hw {
            pos.x = -hw;
            vel.x = 0.0;
        }
        if pos.y > hw {
            pos.y = hw;
            vel.y = 0.0;
        } else if pos.y < -hw {
            pos.y = -hw;
            vel.y = 0.0;
        }
        agent.pos = pos;
        agent.vel = vel;
    }
    Ok(next)
}

/// Detect overlapping pairs and apply equal-and-opposite bump impulses along
/// the center line. Overlap uses strict inequality: touching exactly is not a
/// contact. Coincident centers push along +x.
pub fn resolve_contacts(
    world: &WorldState,
    config: &WorldConfig,
) -> (WorldState, Vec<ContactEvent>) {
    resolve_contacts_exempt(world, config, None)
}

/// Like [`resolve_contacts`] but `exempt` (if any) receives no impulses and
/// is never re-clamped; its partners still receive impulses from it. Used for
/// the kinematically driven predator.
pub fn resolve_contacts_exempt(
    world: &WorldState,
    config: &WorldConfig,
    exempt: Option<usize>,
) -> (WorldState, Vec<ContactEvent>) {
    let mut next = world.clone();
    let mut events = Vec::new();
    let n = next.agents.len();
    let mut bumped = vec![false; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r_sum = config.body(i).radius + config.body(j).radius;
            let delta = next.agents[i].pos - next.agents[j].pos;
            let dist = delta.norm();
            if dist >= r_sum {
                continue;
            }
            events.push((i, j));
            let dir = if dist == 0.0 {
                Vec2::new(1.0, 0.0)
            } else {
                delta / dist
            };
            let penetration = r_sum - dist;
            let impulse = config.contact_stiffness * penetration * config.dt;
            if exempt != Some(i) {
                next.agents[i].vel += dir * (impulse / config.body(i).mass);
                bumped[i] = true;
            }
            if exempt != Some(j) {
                next.agents[j].vel -= dir * (impulse / config.body(j).mass);
                bumped[j] = true;
            }
        }
    }
    for (i, agent) in next.agents.iter_mut().enumerate() {
        if bumped[i] {
            agent.vel = agent.vel.clamp_norm(config.body(i).max_speed);
        }
    }
    (next, events)
}

/// Shared contact rewards: with `c` predator-prey contact events this step,
/// every predator receives `c * reward_magnitude` and the prey receives the
/// negated amount. Predator-predator contacts score nothing.
pub fn compute_rewards(events: &[ContactEvent], config: &WorldConfig) -> Vec<f64> {
    let prey = config.prey_index();
    let c = events
        .iter()
        .filter(|&&(i, j)| j == prey && i < prey)
        .count() as f64;
    let mut rewards = vec![c * config.reward_magnitude; config.n_agents()];
    if c > 0.0 {
        rewards[prey] = -c * config.reward_magnitude;
    }
    rewards
}

/// Count of predator-prey contact events in a step's event list.
pub fn prey_contact_count(events: &[ContactEvent], config: &WorldConfig) -> usize {
    let prey = config.prey_index();
    events
        .iter()
        .filter(|&&(i, j)| j == prey && i < prey)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_agent_config() -> WorldConfig {
        WorldConfig {
            n_predators: 1,
            damping: 0.0,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn spawn_is_deterministic() {
        let config = WorldConfig::default();
        let a = spawn_episode(&config, 42);
        let b = spawn_episode(&config, 42);
        assert_eq!(a, b);
        let c = spawn_episode(&config, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn spawn_respects_margins_and_overlap() {
        let config = WorldConfig::default();
        for seed in 0..200 {
            let world = spawn_episode(&config, seed);
            for (i, agent) in world.agents.iter().enumerate() {
                let margin = config.arena_half_width - config.body(i).radius;
                assert!(agent.pos.x.abs() <= margin);
                assert!(agent.pos.y.abs() <= margin);
                assert!(agent.vel.norm() <= 0.25 * config.body(i).max_speed);
                for (j, other) in world.agents.iter().enumerate().take(i) {
                    let r_sum = config.body(i).radius + config.body(j).radius;
                    assert!((agent.pos - other.pos).norm() >= r_sum);
                }
            }
        }
    }

    #[test]
    fn rest_state_is_fixed_point() {
        let config = single_agent_config();
        let world = WorldState {
            step_index: 0,
            agents: vec![
                AgentState::default(),
                AgentState {
                    pos: Vec2::new(0.5, 0.5),
                    vel: Vec2::ZERO,
                },
            ],
        };
        let next = integrate_step(&world, &[Vec2::ZERO, Vec2::ZERO], &config).unwrap();
        assert_eq!(next.agents[0], world.agents[0]);
        assert_eq!(next.agents[1], world.agents[1]);
        assert_eq!(next.step_index, 1);
    }

    // vel' = 0 + (1,0)*0.1 = (0.1, 0); pos' = pos + vel' * 0.1 = (0.01, 0)
    #[test]
    fn integrate_hand_case() {
        let config = single_agent_config();
        let world = WorldState {
            step_index: 0,
            agents: vec![
                AgentState::default(),
                AgentState {
                    pos: Vec2::new(0.5, 0.5),
                    vel: Vec2::ZERO,
                },
            ],
        };
        let next = integrate_step(&world, &[Vec2::new(1.0, 0.0), Vec2::ZERO], &config).unwrap();
        assert_eq!(next.agents[0].vel, Vec2::new(0.1, 0.0));
        // hand evaluation of the update rule: pos' = 0 + 0.1 * 0.1
        assert_eq!(next.agents[0].pos, Vec2::new(0.1 * 0.1, 0.0));
        assert!((next.agents[0].pos.x - 0.01).abs() < 1e-15);
    }

    // Saturating acceleration drives speed to exactly max_speed; brute-force
    // iteration of the stated update rule is the oracle.
    #[test]
    fn overdriven_agent_converges_to_max_speed() {
        let mut config = single_agent_config();
        config.arena_half_width = 1e9; // keep walls out of the way
        let accel = Vec2::new(10.0 * config.predator_body.max_accel, 0.0);
        let mut world = WorldState {
            step_index: 0,
            agents: vec![
                AgentState::default(),
                AgentState {
                    pos: Vec2::new(5.0, 5.0),
                    vel: Vec2::ZERO,
                },
            ],
        };

        // independent oracle: iterate the documented update rule directly
        let mut oracle_vel = Vec2::ZERO;
        for _ in 0..50 {
            let a = accel.clamp_norm(config.predator_body.max_accel);
            oracle_vel = (oracle_vel * (1.0 - config.damping) + a * config.dt)
                .clamp_norm(config.predator_body.max_speed);
        }
        assert_eq!(oracle_vel.norm(), config.predator_body.max_speed);

        for _ in 0..50 {
            world = integrate_step(&world, &[accel, Vec2::ZERO], &config).unwrap();
        }
        assert_eq!(world.agents[0].vel, oracle_vel);
        assert_eq!(world.agents[0].vel.norm(), config.predator_body.max_speed);
    }

    #[test]
    fn non_finite_accel_rejected() {
        let config = single_agent_config();
        let world = spawn_episode(&config, 1);
        let err =
            integrate_step(&world, &[Vec2::new(f64::NAN, 0.0), Vec2::ZERO], &config).unwrap_err();
        assert_eq!(err, PhysicsError::NonFiniteAccel { agent: 0 });
        let err = integrate_step(&world, &[Vec2::ZERO], &config).unwrap_err();
        assert_eq!(
            err,
            PhysicsError::AccelCountMismatch {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn separated_agents_no_contact() {
        let config = WorldConfig::default();
        let world = WorldState {
            step_index: 0,
            agents: vec![
                AgentState {
                    pos: Vec2::new(-0.5, 0.0),
                    vel: Vec2::ZERO,
                },
                AgentState {
                    pos: Vec2::new(0.5, 0.0),
                    vel: Vec2::ZERO,
                },
                AgentState {
                    pos: Vec2::new(0.0, 0.5),
                    vel: Vec2::ZERO,
                },
                AgentState {
                    pos: Vec2::new(0.0, -0.5),
                    vel: Vec2::ZERO,
                },
            ],
        };
        let (next, events) = resolve_contacts(&world, &config);
        assert!(events.is_empty());
        assert_eq!(next, world);
    }

    // Touching exactly at r_i + r_j is not a contact (strict inequality).
    #[test]
    fn exact_touch_is_not_contact() {
        let config = WorldConfig::default();
        let gap = config.predator_body.radius * 2.0;
        let world = WorldState {
            step_index: 0,
            agents: vec![
                AgentState {
                    pos: Vec2::new(0.0, 0.0),
                    vel: Vec2::ZERO,
                },
                AgentState {
                    pos: Vec2::new(gap, 0.0),
                    vel: Vec2::ZERO,
                },
                AgentState {
                    pos: Vec2::new(0.0, 0.9),
                    vel: Vec2::ZERO,
                },
                AgentState {
                    pos: Vec2::new(0.0, -0.9),
                    vel: Vec2::ZERO,
                },
            ],
        };
        let (_, events) = resolve_contacts(&world, &config);
        assert!(events.is_empty());
    }

    // Overlap by 0.01 m along x: impulses are
    // +-(contact_stiffness * 0.01 * dt / mass, 0).
    #[test]
    fn bump_impulse_hand_case() {
        let base = WorldConfig::default();
        // make both bodies identical so the hand formula applies symmetrically
        let config = WorldConfig {
            n_predators: 1,
            prey_body: base.predator_body,
            ..base
        };
        let r_sum = 2.0 * config.predator_body.radius;
        let sep = r_sum - 0.01;
        let world = WorldState {
            step_index: 0,
            agents: vec![
                AgentState {
                    pos: Vec2::new(0.0, 0.0),
                    vel: Vec2::ZERO,
                },
                AgentState {
                    pos: Vec2::new(sep, 0.0),
                    vel: Vec2::ZERO,
                },
            ],
        };
        let (next, events) = resolve_contacts(&world, &config);
        assert_eq!(events, vec![(0, 1)]);
        let expected =
            config.contact_stiffness * (r_sum - sep) * config.dt / config.predator_body.mass;
        assert!((next.agents[0].vel.x + expected).abs() < 1e-12);
        assert!((next.agents[1].vel.x - expected).abs() < 1e-12);
        assert_eq!(next.agents[0].vel.y, 0.0);
        assert_eq!(next.agents[1].vel.y, 0.0);
    }

    #[test]
    fn coincident_centers_use_plus_x_fallback() {
        let config = WorldConfig {
            n_predators: 1,
            ..WorldConfig::default()
        };
        let world = WorldState {
            step_index: 0,
            agents: vec![AgentState::default(), AgentState::default()],
        };
        let (next, events) = resolve_contacts(&world, &config);
        assert_eq!(events.len(), 1);
        assert!(next.agents[0].vel.x > 0.0);
        assert!(next.agents[1].vel.x < 0.0);
        assert_eq!(next.agents[0].vel.y, 0.0);
    }

    #[test]
    fn bump_impulses_conserve_momentum_exactly() {
        let config = WorldConfig::default(); // all masses 1.0
        let world = WorldState {
            step_index: 0,
            agents: vec![
                AgentState {
                    pos: Vec2::new(0.0, 0.0),
                    vel: Vec2::new(0.1, -0.2),
                },
                AgentState {
                    pos: Vec2::new(0.05, 0.08),
                    vel: Vec2::new(-0.3, 0.0),
                },
                AgentState {
                    pos: Vec2::new(0.9, 0.9),
                    vel: Vec2::ZERO,
                },
                AgentState {
                    pos: Vec2::new(-0.9, -0.9),
                    vel: Vec2::ZERO,
                },
            ],
        };
        let (next, events) = resolve_contacts(&world, &config);
        assert_eq!(events, vec![(0, 1)]);
        // impulse on 0 plus impulse on 1 cancels exactly for equal masses
        let dv0 = next.agents[0].vel - world.agents[0].vel;
        let dv1 = next.agents[1].vel - world.agents[1].vel;
        assert_eq!(dv0 + dv1, Vec2::ZERO);
    }

    #[test]
    fn exempt_agent_receives_no_impulse() {
        let config = WorldConfig {
            n_predators: 1,
            ..WorldConfig::default()
        };
        let world = WorldState {
            step_index: 0,
            agents: vec![
                AgentState {
                    pos: Vec2::new(0.0, 0.0),
                    vel: Vec2::ZERO,
                },
                AgentState {
                    pos: Vec2::new(0.05, 0.0),
                    vel: Vec2::ZERO,
                },
            ],
        };
        let (next, events) = resolve_contacts_exempt(&world, &config, Some(0));
        assert_eq!(events.len(), 1);
        assert_eq!(next.agents[0].vel, Vec2::ZERO);
        assert!(next.agents[1].vel.x > 0.0);
    }

    #[test]
    fn reward_counting_convention() {
        let config = WorldConfig::default();
        let r = config.reward_magnitude;
        assert_eq!(compute_rewards(&[], &config), vec![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(compute_rewards(&[(0, 3)], &config), vec![r, r, r, -r]);
        // two predators touch the prey in the same step
        assert_eq!(
            compute_rewards(&[(0, 3), (2, 3)], &config),
            vec![2.0 * r, 2.0 * r, 2.0 * r, -2.0 * r]
        );
        // predator-predator contact scores nothing
        assert_eq!(
            compute_rewards(&[(0, 1)], &config),
            vec![0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn containment_and_sticky_walls() {
        let config = single_agent_config();
        let mut world = WorldState {
            step_index: 0,
            agents: vec![
                AgentState {
                    pos: Vec2::new(0.99, 0.0),
                    vel: Vec2::new(1.0, 0.0),
                },
                AgentState {
                    pos: Vec2::new(-0.5, -0.5),
                    vel: Vec2::ZERO,
                },
            ],
        };
        for _ in 0..5 {
            world = integrate_step(
                &world,
                &[Vec2::new(config.predator_body.max_accel, 0.0), Vec2::ZERO],
                &config,
            )
            .unwrap();
            assert!(world.agents[0].pos.x <= config.arena_half_width);
        }
        assert_eq!(world.agents[0].pos.x, config.arena_half_width);
        assert_eq!(world.agents[0].vel.x, 0.0);
    }
}
