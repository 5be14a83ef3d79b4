//! Planar frictionless double pendulum (angles measured from the downward
//! vertical), integrated with classical RK4, plus the mapping that turns the
//! second bob's position into an arena trajectory for the driven predator.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::physics::AgentState;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub g: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            l1: 1.0,
            l2: 1.0,
            m1: 1.0,
            m2: 1.0,
            g: 9.81,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("l1", self.l1),
            ("l2", self.l2),
            ("m1", self.m1),
            ("m2", self.m2),
            ("g", self.g),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!(
                    "pendulum parameter {name} must be strictly positive, got {v}"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    pub theta1: f64,
    pub theta2: f64,
    pub omega1: f64,
    pub omega2: f64,
}

/// Time derivatives (dtheta1, dtheta2, domega1, domega2) of the canonical
/// frictionless dynamics. The denominator `2 m1 + m2 - m2 cos(2 delta)` is
/// bounded below by `2 m1` and never vanishes.
pub fn pendulum_derivs(state: &PendulumState, p: &PendulumParams) -> (f64, f64, f64, f64) {
    let delta = state.theta1 - state.theta2;
    let den = 2.0 * p.m1 + p.m2 - p.m2 * (2.0 * delta).cos();
    let (w1, w2) = (state.omega1, state.omega2);

    let domega1 = (-p.g * (2.0 * p.m1 + p.m2) * state.theta1.sin()
        - p.m2 * p.g * (state.theta1 - 2.0 * state.theta2).sin()
        - 2.0 * delta.sin() * p.m2 * (w2 * w2 * p.l2 + w1 * w1 * p.l1 * delta.cos()))
        / (p.l1 * den);

    let domega2 = (2.0
        * delta.sin()
        * (w1 * w1 * p.l1 * (p.m1 + p.m2)
            + p.g * (p.m1 + p.m2) * state.theta1.cos()
            + w2 * w2 * p.l2 * p.m2 * delta.cos()))
        / (p.l2 * den);

    (w1, w2, domega1, domega2)
}

/// Total mechanical energy (kinetic + potential, zero level at the pivot).
pub fn pendulum_energy(state: &PendulumState, p: &PendulumParams) -> f64 {
    let delta = state.theta1 - state.theta2;
    let (w1, w2) = (state.omega1, state.omega2);
    let kinetic = 0.5 * p.m1 * p.l1 * p.l1 * w1 * w1
        + 0.5
            * p.m2
            * (p.l1 * p.l1 * w1 * w1
                + p.l2 * p.l2 * w2 * w2
                + 2.0 * p.l1 * p.l2 * w1 * w2 * delta.cos());
    let potential =
        -(p.m1 + p.m2) * p.g * p.l1 * state.theta1.cos() - p.m2 * p.g * p.l2 * state.theta2.cos();
    kinetic + potential
}

/// Advance by `dt` with classical RK4, internally split into four substeps.
/// Plain RK4 at dt = 0.01 drifts ~2e-5 in relative energy over a 2000-step
/// chaotic run; the substeps hold the drift below 1e-6 with a wide margin.
pub fn pendulum_step(state: &PendulumState, p: &PendulumParams, dt: f64) -> PendulumState {
    debug_assert!(dt > 0.0);
    const SUBSTEPS: u32 = 4;
    let h = dt / SUBSTEPS as f64;
    let mut s = *state;
    for _ in 0..SUBSTEPS {
        s = rk4_step(&s, p, h);
    }
    s
}

fn rk4_step(state: &PendulumState, p: &PendulumParams, dt: f64) -> PendulumState {
    let eval = |s: &PendulumState| pendulum_derivs(s, p);
    let shift = |s: &PendulumState, k: (f64, f64, f64, f64), h: f64| PendulumState {
        theta1: s.theta1 + h * k.0,
        theta2: s.theta2 + h * k.1,
        omega1: s.omega1 + h * k.2,
        omega2: s.omega2 + h * k.3,
    };
    let k1 = eval(state);
    let k2 = eval(&shift(state, k1, 0.5 * dt));
    let k3 = eval(&shift(state, k2, 0.5 * dt));
    let k4 = eval(&shift(state, k3, dt));
    PendulumState {
        theta1: state.theta1 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        theta2: state.theta2 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        omega1: state.omega1 + dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
        omega2: state.omega2 + dt / 6.0 * (k1.3 + 2.0 * k2.3 + 2.0 * k3.3 + k4.3),
    }
}

/// Maps pendulum space into arena coordinates: `anchor + scale * bob2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumMapping {
    pub anchor: Vec2,
    pub scale: f64,
}

impl PendulumMapping {
    /// Default mapping: pivot at the arena center, reach limited to 45% of
    /// the half-width.
    pub fn centered(arena_half_width: f64, p: &PendulumParams) -> Self {
        PendulumMapping {
            anchor: Vec2::ZERO,
            scale: 0.45 * arena_half_width / (p.l1 + p.l2),
        }
    }

    /// The full swing `anchor +- scale * (l1 + l2)` must stay inside the
    /// arena on both axes.
    pub fn validate(&self, arena_half_width: f64, p: &PendulumParams) -> Result<(), String> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(format!(
                "mapping scale must be positive, got {}",
                self.scale
            ));
        }
        if !self.anchor.is_finite() {
            return Err("mapping anchor must be finite".into());
        }
        let reach = self.scale * (p.l1 + p.l2);
        if self.anchor.x.abs() + reach > arena_half_width
            || self.anchor.y.abs() + reach > arena_half_width
        {
            return Err(format!(
                "pendulum mapping leaves the arena: |anchor| + {reach} exceeds {arena_half_width}"
            ));
        }
        Ok(())
    }
}

/// Second-bob position in pendulum coordinates.
pub fn bob_position(state: &PendulumState, p: &PendulumParams) -> Vec2 {
    Vec2::new(
        p.l1 * state.theta1.sin() + p.l2 * state.theta2.sin(),
        -p.l1 * state.theta1.cos() - p.l2 * state.theta2.cos(),
    )
}

/// Second-bob position mapped into the arena.
pub fn pendulum_target(state: &PendulumState, p: &PendulumParams, map: &PendulumMapping) -> Vec2 {
    map.anchor + bob_position(state, p) * map.scale
}

/// Owns the pendulum state that drives the modified predator. The driven
/// trajectory depends only on (seed, params, mapping, dt); it never reads the
/// world.
#[derive(Debug, Clone)]
pub struct PendulumDriver {
    pub params: PendulumParams,
    pub mapping: PendulumMapping,
    pub substeps: u32,
    state: PendulumState,
    last_target: Vec2,
}

impl PendulumDriver {
    /// Initial angles uniform in [pi/2, 3 pi/2] (guaranteeing a chaotic,
    /// non-periodic swing), angular velocities zero.
    pub fn seeded(
        params: PendulumParams,
        mapping: PendulumMapping,
        substeps: u32,
        seed: u64,
    ) -> Self {
        assert!(substeps >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = std::f64::consts::FRAC_PI_2;
        let hi = 3.0 * std::f64::consts::FRAC_PI_2;
        let state = PendulumState {
            theta1: rng.random_range(lo..=hi),
            theta2: rng.random_range(lo..=hi),
            omega1: 0.0,
            omega2: 0.0,
        };
        Self::from_state(params, mapping, substeps, state)
    }

    pub fn from_state(
        params: PendulumParams,
        mapping: PendulumMapping,
        substeps: u32,
        state: PendulumState,
    ) -> Self {
        let last_target = pendulum_target(&state, &params, &mapping);
        PendulumDriver {
            params,
            mapping,
            substeps,
            state,
            last_target,
        }
    }

    pub fn state(&self) -> &PendulumState {
        &self.state
    }

    /// Where the driven predator sits right now (used to snap it at spawn).
    pub fn current_target(&self) -> Vec2 {
        self.last_target
    }

    /// Advance one simulation step of length `dt` (split into `substeps` RK4
    /// substeps) and return the kinematic override for the driven predator:
    /// position at the new bob target, velocity `(new - old) / dt`.
    pub fn advance(&mut self, dt: f64) -> AgentState {
        let inner_dt = dt / self.substeps as f64;
        for _ in 0..self.substeps {
            self.state = pendulum_step(&self.state, &self.params, inner_dt);
        }
        let target = pendulum_target(&self.state, &self.params, &self.mapping);
        let vel = (target - self.last_target) / dt;
        self.last_target = target;
        AgentState { pos: target, vel }
    }
}
