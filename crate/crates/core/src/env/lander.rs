//! MiniLander: a desk-scale 2D lander with six discrete engine combinations.
//!
//! Units are per-step (the integration step is folded into every constant).
//! The landing pad sits at the origin. Velocities are updated first and
//! positions are then advanced with the new velocities (semi-implicit Euler).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::ActionId;

pub const GRAVITY: f64 = 0.010;
pub const MAIN_THRUST: f64 = 0.022;
pub const LATERAL_THRUST: f64 = 0.006;
pub const LATERAL_TORQUE: f64 = 0.02;

pub const START_Y: f64 = 1.0;
pub const START_X_RANGE: f64 = 0.4;
/// Initial descent speed. Free fall from the start height then lands at
/// `vy = -0.18`, outside the safe landing band.
pub const START_VY: f64 = -0.1;

pub const X_LIMIT: f64 = 1.2;
pub const TILT_LIMIT: f64 = std::f64::consts::FRAC_PI_2;
pub const PAD_HALF_WIDTH: f64 = 0.1;
pub const SAFE_VY: f64 = 0.15;
pub const SAFE_TILT: f64 = 0.2;
pub const DEFAULT_STEP_LIMIT: usize = 500;

/// Leg tips in body coordinates, relative to the hull centre.
const LEG_SPAN: f64 = 0.1;
const LEG_DROP: f64 = 0.05;

pub const SHAPING_WEIGHT: f64 = 0.3;
pub const POTENTIAL_SCALE: f64 = 100.0;
pub const MAIN_FUEL_COST: f64 = 0.03;
pub const LATERAL_FUEL_COST: f64 = 0.003;
pub const LANDING_REWARD: f64 = 100.0;
pub const CRASH_REWARD: f64 = -100.0;

pub const ACTION_COUNT: usize = 6;
pub const NOOP: ActionId = 0;
pub const LEFT: ActionId = 1;
pub const RIGHT: ActionId = 2;
pub const MAIN: ActionId = 3;
pub const MAIN_LEFT: ActionId = 4;
pub const MAIN_RIGHT: ActionId = 5;

pub const OBSERVATION_DIM: usize = 8;

/// Observation components in order.
pub const FEATURE_NAMES: [&str; OBSERVATION_DIM] =
    ["x", "y", "vx", "vy", "theta", "omega", "left_contact", "right_contact"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lateral {
    Off,
    /// Left engine: pushes the hull to the right and spins it clockwise.
    Left,
    Right,
}

/// Decodes an action id into `(main engine on, lateral engine)`.
pub fn decode_action(action: ActionId) -> Option<(bool, Lateral)> {
    if action >= ACTION_COUNT {
        return None;
    }
    let lateral = match action % 3 {
        0 => Lateral::Off,
        1 => Lateral::Left,
        _ => Lateral::Right,
    };
    Some((action >= 3, lateral))
}

pub fn action_name(action: ActionId) -> &'static str {
    match action {
        NOOP => "noop",
        LEFT => "left",
        RIGHT => "right",
        MAIN => "main",
        MAIN_LEFT => "main+left",
        MAIN_RIGHT => "main+right",
        _ => "invalid",
    }
}

/// Number of matching engine components over (main, lateral).
pub fn lander_similarity(a: ActionId, b: ActionId) -> f64 {
    match (decode_action(a), decode_action(b)) {
        (Some((ma, la)), Some((mb, lb))) => f64::from(u8::from(ma == mb) + u8::from(la == lb)),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanderState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub theta: f64,
    pub omega: f64,
    pub left_contact: bool,
    pub right_contact: bool,
}

impl LanderState {
    pub fn at_rest(x: f64, y: f64) -> Self {
        let mut s = Self {
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            theta: 0.0,
            omega: 0.0,
            left_contact: false,
            right_contact: false,
        };
        s.update_contacts();
        s
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.vx, self.vy, self.theta, self.omega]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn features(&self) -> Vec<f64> {
        vec![
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.theta,
            self.omega,
            f64::from(u8::from(self.left_contact)),
            f64::from(u8::from(self.right_contact)),
        ]
    }

    fn leg_heights(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let left = self.y - LEG_SPAN * s - LEG_DROP * c;
        let right = self.y + LEG_SPAN * s - LEG_DROP * c;
        (left, right)
    }

    fn update_contacts(&mut self) {
        let (l, r) = self.leg_heights();
        self.left_contact = l <= 0.0;
        self.right_contact = r <= 0.0;
    }

    /// Shaping potential: larger when far from the pad, fast, or tilted.
    pub fn potential(&self) -> f64 {
        POTENTIAL_SCALE * (self.x.hypot(self.y) + self.vx.hypot(self.vy) + self.theta.abs())
    }

    pub fn landed_safely(&self) -> bool {
        self.x.abs() <= PAD_HALF_WIDTH && self.vy.abs() <= SAFE_VY && self.theta.abs() <= SAFE_TILT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanderOutcome {
    pub state: LanderState,
    pub reward: f64,
    pub done: bool,
    /// Ended by the step limit rather than a landing or crash.
    pub truncated: bool,
    pub success: bool,
}

/// Advances the lander by one step. `steps_taken` counts steps before this
/// one and drives the step-limit cutoff.
pub fn lander_step(
    state: &LanderState,
    action: ActionId,
    steps_taken: usize,
    step_limit: usize,
) -> Result<LanderOutcome> {
    if !state.is_finite() {
        return Err(Error::contract("non-finite lander state"));
    }
    let (main, lateral) =
        decode_action(action).ok_or_else(|| Error::contract(format!("invalid lander action {action}")))?;

    let mut next = *state;
    let (sin, cos) = state.theta.sin_cos();
    next.vy -= GRAVITY;
    if main {
        next.vx += -sin * MAIN_THRUST;
        next.vy += cos * MAIN_THRUST;
    }
    match lateral {
        Lateral::Off => {}
        Lateral::Left => {
            next.vx += cos * LATERAL_THRUST;
            next.vy += sin * LATERAL_THRUST;
            next.omega -= LATERAL_TORQUE;
        }
        Lateral::Right => {
            next.vx -= cos * LATERAL_THRUST;
            next.vy -= sin * LATERAL_THRUST;
            next.omega += LATERAL_TORQUE;
        }
    }
    next.x += next.vx;
    next.y += next.vy;
    next.theta += next.omega;
    next.update_contacts();

    let mut reward = -SHAPING_WEIGHT * (next.potential() - state.potential());
    if main {
        reward -= MAIN_FUEL_COST;
    }
    if lateral != Lateral::Off {
        reward -= LATERAL_FUEL_COST;
    }

    let crashed_out = next.x.abs() > X_LIMIT || next.theta.abs() > TILT_LIMIT;
    let (done, success) = if crashed_out {
        (true, false)
    } else if next.y <= 0.0 {
        (true, next.landed_safely())
    } else {
        (steps_taken + 1 >= step_limit, false)
    };
    let truncated = done && !crashed_out && next.y > 0.0;
    if done && !truncated {
        reward += if success { LANDING_REWARD } else { CRASH_REWARD };
    }
    Ok(LanderOutcome {
        state: next,
        reward,
        done,
        truncated,
        success,
    })
}

/// Initial state: at rest horizontally, descending, `x` uniform on the
/// start range.
pub fn lander_reset(rng: &mut ChaCha8Rng) -> LanderState {
    let x = rng.gen_range(-START_X_RANGE..START_X_RANGE);
    let mut s = LanderState::at_rest(x, START_Y);
    s.vy = START_VY;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn noop_from_rest_applies_gravity_exactly() {
        let s = LanderState::at_rest(0.0, 0.5);
        let out = lander_step(&s, NOOP, 0, 500).unwrap();
        assert_eq!(out.state.vy, -GRAVITY);
        assert_eq!(out.state.y, 0.5 - GRAVITY);
        assert_eq!(out.state.vx, 0.0);
        assert!(!out.done);
    }

    #[test]
    fn action_decoding() {
        assert_eq!(decode_action(NOOP), Some((false, Lateral::Off)));
        assert_eq!(decode_action(MAIN_LEFT), Some((true, Lateral::Left)));
        assert_eq!(decode_action(RIGHT), Some((false, Lateral::Right)));
        assert_eq!(decode_action(6), None);
    }

    #[test]
    fn similarity_counts_matching_components() {
        assert_eq!(lander_similarity(MAIN_LEFT, MAIN_RIGHT), 1.0);
        assert_eq!(lander_similarity(MAIN, MAIN), 2.0);
        assert_eq!(lander_similarity(NOOP, MAIN_LEFT), 0.0);
        assert_eq!(lander_similarity(LEFT, MAIN_LEFT), 1.0);
    }

    /// Brakes whenever descending faster than 0.05 and never fires laterals.
    fn scripted_descent(start: LanderState) -> (f64, LanderOutcome) {
        let mut s = start;
        let mut total = 0.0;
        for t in 0..DEFAULT_STEP_LIMIT {
            let action = if s.vy < -0.05 { MAIN } else { NOOP };
            let out = lander_step(&s, action, t, DEFAULT_STEP_LIMIT).unwrap();
            total += out.reward;
            if out.done {
                return (total, out);
            }
            s = out.state;
        }
        unreachable!("scripted descent must terminate");
    }

    #[test]
    fn scripted_soft_landing_on_pad_earns_landing_bonus() {
        let mut start = LanderState::at_rest(0.05, START_Y);
        start.vy = START_VY;
        let (_, last) = scripted_descent(start);
        assert!(last.success);
        assert!(last.reward > 90.0, "terminal reward {}", last.reward);
        assert!(last.state.vy.abs() <= SAFE_VY);
    }

    #[test]
    fn soft_landing_off_pad_is_a_crash() {
        let mut start = LanderState::at_rest(0.3, START_Y);
        start.vy = START_VY;
        let (_, last) = scripted_descent(start);
        assert!(!last.success);
        assert!(last.reward < -90.0);
    }

    #[test]
    fn tipping_past_vertical_crashes() {
        let mut s = LanderState::at_rest(0.0, 0.8);
        s.theta = 1.5;
        s.omega = 0.1;
        let out = lander_step(&s, NOOP, 0, 500).unwrap();
        assert!(out.done && !out.success);
        assert!(out.reward < -90.0);
    }

    #[test]
    fn free_fall_misses_the_speed_band() {
        let mut s = LanderState::at_rest(0.0, START_Y);
        s.vy = START_VY;
        let mut t = 0;
        loop {
            let out = lander_step(&s, NOOP, t, 500).unwrap();
            t += 1;
            if out.done {
                assert!(!out.success);
                assert!((out.state.vy + 0.18).abs() < 1e-9, "vy {}", out.state.vy);
                break;
            }
            s = out.state;
        }
        assert_eq!(t, 8);
    }

    #[test]
    fn step_limit_truncates_without_terminal_bonus() {
        let s = LanderState::at_rest(0.0, 0.5);
        let out = lander_step(&s, MAIN, 9, 10).unwrap();
        assert!(out.done && out.truncated && !out.success);
        assert!(out.reward.abs() < 10.0);
    }

    #[test]
    fn dynamics_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = lander_reset(&mut rng);
        for a in 0..ACTION_COUNT {
            let a1 = lander_step(&s, a, 0, 500).unwrap();
            let a2 = lander_step(&s, a, 0, 500).unwrap();
            assert_eq!(a1.state.features(), a2.state.features());
            assert_eq!(a1.reward.to_bits(), a2.reward.to_bits());
        }
    }

    #[test]
    fn non_finite_state_rejected() {
        let mut s = LanderState::at_rest(0.0, 1.0);
        s.vx = f64::NAN;
        assert!(lander_step(&s, NOOP, 0, 500).is_err());
        assert!(lander_step(&LanderState::at_rest(0.0, 1.0), 9, 0, 500).is_err());
    }

    #[test]
    fn contacts_only_near_ground() {
        let high = LanderState::at_rest(0.0, 0.5);
        assert!(!high.left_contact && !high.right_contact);
        let low = LanderState::at_rest(0.0, 0.04);
        assert!(low.left_contact && low.right_contact);
    }
}
