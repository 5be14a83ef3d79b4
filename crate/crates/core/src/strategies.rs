//! Agent policies: the Chaser and Spring predator strategies and the
//! heuristic evader prey. All are pure functions of the visible state and
//! return accelerations clamped to the acting body's `max_accel`.

use serde::{Deserialize, Serialize};

use crate::physics::{AgentState, BodyParams, WorldState};
use crate::vec2::Vec2;

/// Pairwise spring coupling between predators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpringParams {
    /// Force per meter of extension.
    pub stiffness: f64,
    /// Natural length of each predator-predator spring, meters.
    pub rest_length: f64,
    /// Force per m/s of closing rate between the coupled pair.
    pub damping: f64,
}

impl Default for SpringParams {
    fn default() -> Self {
        SpringParams {
            stiffness: 15.0,
            rest_length: 0.6,
            damping: 0.5,
        }
    }
}

impl SpringParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.stiffness > 0.0 && self.stiffness.is_finite()) {
            return Err(format!(
                "spring stiffness must be positive, got {}",
                self.stiffness
            ));
        }
        if !(self.rest_length > 0.0 && self.rest_length.is_finite()) {
            return Err(format!(
                "spring rest_length must be positive, got {}",
                self.rest_length
            ));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(format!(
                "spring damping must be non-negative, got {}",
                self.damping
            ));
        }
        Ok(())
    }
}

/// Accelerate maximally toward the prey's instantaneous position. Returns
/// zero when predator and prey coincide.
pub fn chaser_policy(agent: &AgentState, prey: &AgentState, body: &BodyParams) -> Vec2 {
    ((prey.pos - agent.pos).unit_or_zero() * body.max_accel).clamp_norm(body.max_accel)
}

/// Pursuit acceleration plus pairwise spring forces coupling this predator
/// to every other predator (complete coupling graph), clamped to `max_accel`.
///
/// Per partner: `F = stiffness * (dist - rest_length) * u - damping *
/// closing_rate * u`, where `u` points from this predator to the partner and
/// `closing_rate` is this predator's approach speed along `u`. Coincident
/// partners contribute nothing.
pub fn spring_policy(
    self_idx: usize,
    world: &WorldState,
    n_predators: usize,
    params: &SpringParams,
    body: &BodyParams,
) -> Vec2 {
    debug_assert!(self_idx < n_predators);
    let me = &world.agents[self_idx];
    let prey = &world.agents[n_predators];
    let mut force = Vec2::ZERO;
    for j in 0..n_predators {
        if j == self_idx {
            continue;
        }
        let partner = &world.agents[j];
        let d = partner.pos - me.pos;
        let dist = d.norm();
        if dist == 0.0 {
            continue;
        }
        let u = d / dist;
        let closing_rate = (me.vel - partner.vel).dot(u);
        force += u * (params.stiffness * (dist - params.rest_length))
            - u * (params.damping * closing_rate);
    }
    let pursuit = (prey.pos - me.pos).unit_or_zero() * body.max_accel;
    (pursuit + force / body.mass).clamp_norm(body.max_accel)
}

/// Heuristic evader: inverse-square repulsion from every predator plus
/// inverse-square repulsion from each wall, normalized to full acceleration.
/// Returns zero if the repulsion terms cancel exactly.
pub fn prey_evade_policy(
    agent: &AgentState,
    predators: &[AgentState],
    body: &BodyParams,
    arena_half_width: f64,
) -> Vec2 {
    const EPS: f64 = 1e-6;
    let mut sum = Vec2::ZERO;
    for p in predators {
        let d = agent.pos - p.pos;
        sum += d.unit_or_zero() / d.norm_sq().max(EPS);
    }
    let hw = arena_half_width;
    // inward normals weighted by inverse squared wall distance
    let left = agent.pos.x + hw;
    let right = hw - agent.pos.x;
    let bottom = agent.pos.y + hw;
    let top = hw - agent.pos.y;
    sum += Vec2::new(1.0, 0.0) / (left * left).max(EPS);
    sum += Vec2::new(-1.0, 0.0) / (right * right).max(EPS);
    sum += Vec2::new(0.0, 1.0) / (bottom * bottom).max(EPS);
    sum += Vec2::new(0.0, -1.0) / (top * top).max(EPS);
    (sum.unit_or_zero() * body.max_accel).clamp_norm(body.max_accel)
}
