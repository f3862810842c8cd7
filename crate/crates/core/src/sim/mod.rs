//! Differentiable articulated-body simulation in reduced coordinates.
//!
//! A [`Character`] is compiled from a [`CharacterSpec`] (`character/v1`
//! TOML). States carry generalized coordinates plus the world-frame link
//! quantities derived from them. Every function is generic over
//! [`Real`], so the same step runs untaped on `f64` or recorded on a tape.
//!
//! ```
//! use mimic_core::sim::{Character, StepConfig};
//!
//! let pendulum = Character::builtin("pendulum").unwrap();
//! let s0 = pendulum.rest_state();
//! let s1 = pendulum.control_step(&s0, &[0.3], &StepConfig::default()).unwrap();
//! assert!(s1.coords[0] > 0.0);
//! ```

mod dynamics;
mod kinematics;
mod model;
mod spec;

use std::sync::Arc;

use thiserror::Error;

pub use model::{Actuator, Character, GRAVITY};
pub use spec::{
    CapsuleSpec, CharacterSpec, ContactSpec, FallSpec, JointKind, JointSpec, LinkSpec, LossWeights,
    RootKind, RootSpec, CHARACTER_SCHEMA,
};

use crate::autodiff::Real;
use crate::math::{UnitQuat, Vec3};
use kinematics::PosKin;

/// Physics rate.
pub const PHYSICS_HZ: f64 = 480.0;
/// Policy rate.
pub const CONTROL_HZ: f64 = 30.0;
/// Physics substeps per control step.
pub const SUBSTEPS: usize = 16;

/// Friction regularization velocity, m/s.
pub const FRICTION_VELOCITY: f64 = 0.05;
/// Penetration depth over which contact damping ramps in, m.
pub const DAMPING_RAMP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("character spec: {0}")]
    Spec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("state became non-finite at substep {substep}")]
    NonFinite { substep: usize },
    #[error("mass matrix is not positive definite")]
    Singular,
}

/// World-frame quantities of one link: COM position, orientation, COM
/// velocity and angular velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkState<R = f64> {
    pub p: Vec3<R>,
    pub q: UnitQuat<R>,
    pub v: Vec3<R>,
    pub w: Vec3<R>,
}

impl<R: Real> LinkState<R> {
    pub fn value(&self) -> LinkState<f64> {
        LinkState {
            p: self.p.value(),
            q: self.q.value(),
            v: self.v.value(),
            w: self.w.value(),
        }
    }

    pub fn constant(s: &LinkState<f64>) -> Self {
        LinkState {
            p: Vec3::constant(s.p),
            q: UnitQuat::constant(s.q),
            v: Vec3::constant(s.v),
            w: Vec3::constant(s.w),
        }
    }
}

/// Full dynamic state of a character.
#[derive(Clone, Debug)]
pub struct SimState<R = f64> {
    /// Generalized coordinates. Floating roots store `[x, z, pitch]`
    /// (planar) or `[x, y, z, qw, qx, qy, qz]` (free) first.
    pub coords: Vec<R>,
    /// Generalized velocities. Free roots store world linear then angular
    /// velocity first.
    pub vels: Vec<R>,
    /// Motion phase in `[0, 1)`.
    pub phase: f64,
    pub links: Vec<LinkState<R>>,
    pub(crate) cache: Option<Arc<PosKin<R>>>,
}

impl<R: Real> SimState<R> {
    pub fn value(&self) -> SimState<f64> {
        SimState {
            coords: self.coords.iter().map(|c| c.value()).collect(),
            vels: self.vels.iter().map(|c| c.value()).collect(),
            phase: self.phase,
            links: self.links.iter().map(|l| l.value()).collect(),
            cache: None,
        }
    }

    /// Lifts a plain state to constants of `R`.
    pub fn constant(s: &SimState<f64>) -> Self {
        SimState {
            coords: s.coords.iter().map(|c| R::constant(*c)).collect(),
            vels: s.vels.iter().map(|c| R::constant(*c)).collect(),
            phase: s.phase,
            links: s.links.iter().map(LinkState::constant).collect(),
            cache: None,
        }
    }

    /// Same values, no gradient path back through this state.
    pub fn stop_gradient(&self) -> Self {
        let sg = |v: Vec3<R>| v.stop_gradient();
        SimState {
            coords: self.coords.iter().map(|c| c.stop_gradient()).collect(),
            vels: self.vels.iter().map(|c| c.stop_gradient()).collect(),
            phase: self.phase,
            links: self
                .links
                .iter()
                .map(|l| LinkState {
                    p: sg(l.p),
                    q: UnitQuat::from_parts_unchecked(
                        l.q.w.stop_gradient(),
                        l.q.x.stop_gradient(),
                        l.q.y.stop_gradient(),
                        l.q.z.stop_gradient(),
                    ),
                    v: sg(l.v),
                    w: sg(l.w),
                })
                .collect(),
            cache: None,
        }
    }

    pub fn root(&self) -> &LinkState<R> {
        &self.links[0]
    }
}

impl SimState<f64> {
    pub fn is_finite(&self) -> bool {
        self.coords.iter().chain(&self.vels).all(|c| c.is_finite())
            && self
                .links
                .iter()
                .all(|l| l.p.is_finite() && l.v.is_finite() && l.w.is_finite())
    }

    /// Bitwise equality of every stored number.
    pub fn bitwise_eq(&self, o: &Self) -> bool {
        let bits = |s: &Self| -> Vec<u64> {
            let mut v: Vec<u64> = s
                .coords
                .iter()
                .chain(&s.vels)
                .map(|x| x.to_bits())
                .collect();
            v.push(s.phase.to_bits());
            for l in &s.links {
                for x in [
                    l.p.x, l.p.y, l.p.z, l.q.w, l.q.x, l.q.y, l.q.z, l.v.x, l.v.y, l.v.z, l.w.x,
                    l.w.y, l.w.z,
                ] {
                    v.push(x.to_bits());
                }
            }
            v
        };
        bits(self) == bits(o)
    }
}

/// Integration settings.
#[derive(Clone, Debug, PartialEq)]
pub struct StepConfig {
    /// Physics substep, s.
    pub dt: f64,
    /// Substeps per control step.
    pub substeps: usize,
    /// Motion cycle length used to advance the phase, s.
    pub cycle_period: f64,
    /// m/s², acting along −z.
    pub gravity: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / PHYSICS_HZ,
            substeps: SUBSTEPS,
            cycle_period: 1.0,
            gravity: GRAVITY,
        }
    }
}

impl StepConfig {
    pub fn with_period(period: f64) -> Self {
        Self {
            cycle_period: period,
            ..Self::default()
        }
    }

    /// Duration of one control step, s.
    pub fn control_dt(&self) -> f64 {
        self.dt * self.substeps as f64
    }
}

/// PD torque toward `target` with zero target velocity.
pub fn pd_torque<R: Real>(q: R, qdot: R, target: R, kp: f64, kd: f64) -> R {
    (target - q) * kp - qdot * kd
}

/// Restoring torque outside `[lo, hi]`, zero inside.
pub fn soft_limit_torque<R: Real>(q: R, lo: f64, hi: f64, stiffness: f64) -> R {
    let v = q.value();
    if v > hi {
        (q - hi) * -stiffness
    } else if v < lo {
        (q - lo) * -stiffness
    } else {
        R::zero()
    }
}

/// Penalty ground force on a contact point `height` above the floor moving
/// with `velocity`. Zero unless `height < 0`.
pub fn contact_force<R: Real>(height: R, velocity: Vec3<R>, contact: &ContactSpec) -> Vec3<R> {
    if height.value() >= 0.0 {
        return Vec3::zero();
    }
    let pen = -height;
    let ramp = (pen * (1.0 / DAMPING_RAMP)).min(R::constant(1.0));
    let closing = (-velocity.z).max(R::zero());
    let normal = pen * contact.stiffness + closing * ramp * contact.damping;
    let (vx, vy) = (velocity.x, velocity.y);
    let c = friction_coefficient(normal, vx, vy, contact.friction);
    Vec3::new(-(vx * c), -(vy * c), normal)
}

/// Viscous coefficient `c` such that the friction force is `−c·v_t`.
pub(crate) fn friction_coefficient<R: Real>(normal: R, vx: R, vy: R, mu: f64) -> R {
    let speed = (vx * vx + vy * vy + 1e-12).sqrt();
    normal * mu * (speed * (1.0 / FRICTION_VELOCITY)).tanh() / speed
}
