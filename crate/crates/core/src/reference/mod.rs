//! Reference motions: the `motion/v1` file format, time lookup with cyclic
//! wrap, and generators for the desk characters.
//!
//! A motion is a list of frames sampled at `fps`, each holding the world
//! state of every link. Lookup between frames interpolates positions and
//! velocities linearly and orientations along the shortest arc. Cyclic
//! motions repeat with period `T_cycle = (frames − 1) / fps`, shifting the
//! whole body by `cycle_offset` once per completed cycle.
//!
//! ```
//! use mimic_core::reference::{generate_reference, ReferenceKind, WaveParams};
//! use mimic_core::sim::Character;
//!
//! let pendulum = Character::builtin("pendulum").unwrap();
//! let params = WaveParams::preset(&pendulum, ReferenceKind::SplineTrack);
//! let motion = generate_reference(&pendulum, ReferenceKind::SplineTrack, &params).unwrap();
//! assert!(motion.cyclic);
//! assert_eq!(motion.cycle_period(), 2.0);
//! let s = motion.state_at(&pendulum, 0.5).unwrap();
//! assert_eq!(s.phase, 0.25);
//! ```

mod generate;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_reference, ReferenceKind, WaveParams};

use crate::math::{UnitQuat, Vec3};
use crate::sim::{Character, LinkState, SimError, SimState};

/// Motion file schema tag.
pub const MOTION_SCHEMA: &str = "motion/v1";
/// Default frame rate, equal to the control rate.
pub const DEFAULT_FPS: f64 = 30.0;
/// Cyclic boundary tolerance on link positions, m.
pub const CYCLE_POSITION_TOLERANCE: f64 = 1e-2;
/// Cyclic boundary tolerance on link orientations, rad.
pub const CYCLE_ANGLE_TOLERANCE: f64 = 0.05;
/// Accepted deviation of a stored quaternion's norm from 1 before it is
/// renormalized.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("motion header: {0}")]
    Header(String),
    #[error("frame {index}: {message}")]
    Frame { index: usize, message: String },
    #[error("motion: {0}")]
    Invalid(String),
    #[error("time {t} s is outside the motion (duration {duration} s)")]
    OutOfRange { t: f64, duration: f64 },
    #[error("motion is for {motion:?} but the character is {character:?}")]
    Character { motion: String, character: String },
    #[error("infeasible reference: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A time-indexed sequence of link states.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceMotion {
    /// Character name the motion was authored for.
    pub character: String,
    pub link_names: Vec<String>,
    pub fps: f64,
    pub cyclic: bool,
    /// Whole-body translation accumulated per completed cycle.
    pub cycle_offset: Vec3,
    pub frames: Vec<Vec<LinkState>>,
    /// Actions that produced the motion (one per transition), if recorded.
    pub actions: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    character: String,
    links: Vec<String>,
    fps: f64,
    cyclic: bool,
    cycle_offset: [f64; 3],
    frames: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkRecord {
    p: [f64; 3],
    q: [f64; 4],
    v: [f64; 3],
    w: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: usize,
    links: Vec<LinkRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action: Option<Vec<f64>>,
}

impl ReferenceMotion {
    /// Validates and canonicalizes a motion assembled in memory.
    pub fn new(
        character: &str,
        link_names: Vec<String>,
        fps: f64,
        cyclic: bool,
        cycle_offset: Vec3,
        frames: Vec<Vec<LinkState>>,
        actions: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, MotionError> {
        let mut m = Self {
            character: character.to_string(),
            link_names,
            fps,
            cyclic,
            cycle_offset,
            frames,
            actions,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// `T_cycle`: time from the first to the last frame, s.
    pub fn cycle_period(&self) -> f64 {
        (self.frames.len() - 1) as f64 / self.fps
    }

    /// Longest lookup time, s; unbounded for cyclic motions.
    pub fn duration(&self) -> f64 {
        if self.cyclic {
            f64::INFINITY
        } else {
            self.cycle_period()
        }
    }

    fn validate(&mut self) -> Result<(), MotionError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(MotionError::Header(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        if self.frames.len() < 2 {
            return Err(MotionError::Invalid(format!(
                "needs at least 2 frames, got {}",
                self.frames.len()
            )));
        }
        if !self.cycle_offset.is_finite() {
            return Err(MotionError::Header("cycle offset is not finite".into()));
        }
        let nl = self.link_names.len();
        for (index, frame) in self.frames.iter_mut().enumerate() {
            let bad = |message: String| MotionError::Frame { index, message };
            if frame.len() != nl {
                return Err(bad(format!("{} links, header names {nl}", frame.len())));
            }
            for (l, link) in frame.iter_mut().enumerate() {
                let name = &self.link_names[l];
                let q = link.q;
                let finite = link.p.is_finite()
                    && link.v.is_finite()
                    && link.w.is_finite()
                    && [q.w, q.x, q.y, q.z].iter().all(|c| c.is_finite());
                if !finite {
                    return Err(bad(format!("link {name:?} has a non-finite value")));
                }
                let norm = q.norm();
                if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
                    return Err(bad(format!("link {name:?} quaternion norm {norm}")));
                }
                // renormalizing an already-unit quaternion can move its last
                // bit, which would break byte-stable round trips
                let q = if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
                    q.normalize()
                } else {
                    q
                };
                link.q = q.canonical();
            }
        }
        if let Some(actions) = &self.actions {
            if actions.len() != self.frames.len() - 1 {
                return Err(MotionError::Invalid(format!(
                    "{} actions for {} transitions",
                    actions.len(),
                    self.frames.len() - 1
                )));
            }
            if let Some(i) = actions
                .iter()
                .position(|a| !a.iter().all(|v| v.is_finite()))
            {
                return Err(MotionError::Frame {
                    index: i,
                    message: "action is not finite".into(),
                });
            }
        }
        if self.cyclic {
            let (first, last) = (&self.frames[0], &self.frames[self.frames.len() - 1]);
            for (l, (a, b)) in first.iter().zip(last).enumerate() {
                let dp = (b.p - (a.p + self.cycle_offset)).norm();
                let da = a.q.angle_to(&b.q);
                if dp > CYCLE_POSITION_TOLERANCE || da > CYCLE_ANGLE_TOLERANCE {
                    return Err(MotionError::Invalid(format!(
                        "cyclic boundary mismatch on link {:?}: {dp:.4} m, {da:.4} rad \
                         (declare a cycle offset or make the clip acyclic)",
                        self.link_names[l]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Errors unless the motion was authored for this character's links.
    pub fn check_character(&self, ch: &Character) -> Result<(), MotionError> {
        if self.link_names != ch.link_names() {
            return Err(MotionError::Character {
                motion: format!("{} {:?}", self.character, self.link_names),
                character: format!("{} {:?}", ch.name(), ch.link_names()),
            });
        }
        if let Some(actions) = &self.actions {
            if actions.iter().any(|a| a.len() != ch.action_dim()) {
                return Err(MotionError::Invalid(format!(
                    "recorded actions do not have {} entries",
                    ch.action_dim()
                )));
            }
        }
        Ok(())
    }

    /// Link states and phase at time `t`.
    pub fn links_at(&self, t: f64) -> Result<(Vec<LinkState>, f64), MotionError> {
        if !(t >= 0.0) || t > self.duration() + 1e-9 {
            return Err(MotionError::OutOfRange {
                t,
                duration: self.duration(),
            });
        }
        let period = self.cycle_period();
        let (cycle, local) = if self.cyclic {
            let k = (t / period).floor();
            (k, t - k * period)
        } else {
            (0.0, t.min(period))
        };
        let x = local * self.fps;
        let nearest = x.round();
        let mut links = if (x - nearest).abs() < 1e-9 {
            self.frames[(nearest as usize).min(self.frames.len() - 1)].clone()
        } else {
            let i = x.floor() as usize;
            let u = x - i as f64;
            self.frames[i]
                .iter()
                .zip(&self.frames[i + 1])
                .map(|(a, b)| LinkState {
                    p: a.p.lerp(b.p, u),
                    q: a.q.slerp(&b.q, u).canonical(),
                    v: a.v.lerp(b.v, u),
                    w: a.w.lerp(b.w, u),
                })
                .collect()
        };
        if cycle > 0.0 {
            let shift = self.cycle_offset.scale_by(cycle);
            for l in &mut links {
                l.p += shift;
            }
        }
        let phase = local / period;
        Ok((links, phase - phase.floor()))
    }

    /// Simulator state at time `t`: the interpolated link states plus the
    /// generalized coordinates recovered from them.
    pub fn state_at(&self, ch: &Character, t: f64) -> Result<SimState, MotionError> {
        let (links, phase) = self.links_at(t)?;
        Ok(ch.state_from_links(links, phase)?)
    }

    /// `motion/v1` text: a JSON header line, then one JSON line per frame.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            schema: MOTION_SCHEMA.into(),
            character: self.character.clone(),
            links: self.link_names.clone(),
            fps: self.fps,
            cyclic: self.cyclic,
            cycle_offset: self.cycle_offset.to_array(),
            frames: self.frames.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for (i, frame) in self.frames.iter().enumerate() {
            let rec = FrameRecord {
                frame: i,
                links: frame
                    .iter()
                    .map(|l| LinkRecord {
                        p: l.p.to_array(),
                        q: l.q.to_array(),
                        v: l.v.to_array(),
                        w: l.w.to_array(),
                    })
                    .collect(),
                action: self.actions.as_ref().and_then(|a| a.get(i).cloned()),
            };
            out.push_str(&serde_json::to_string(&rec).expect("frame serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, MotionError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines
            .next()
            .ok_or_else(|| MotionError::Header("empty file".into()))?;
        let header: Header =
            serde_json::from_str(first).map_err(|e| MotionError::Header(e.to_string()))?;
        if header.schema != MOTION_SCHEMA {
            return Err(MotionError::Header(format!(
                "schema {:?}, expected {MOTION_SCHEMA:?}",
                header.schema
            )));
        }
        let mut frames = Vec::new();
        let mut actions = Vec::new();
        for (index, line) in lines.enumerate() {
            let rec: FrameRecord = serde_json::from_str(line).map_err(|e| MotionError::Frame {
                index,
                message: e.to_string(),
            })?;
            if rec.frame != index {
                return Err(MotionError::Frame {
                    index,
                    message: format!("frame numbers must increase by one, found {}", rec.frame),
                });
            }
            frames.push(
                rec.links
                    .iter()
                    .map(|l| LinkState {
                        p: Vec3::from_array(l.p),
                        q: UnitQuat::from_parts_unchecked(l.q[0], l.q[1], l.q[2], l.q[3]),
                        v: Vec3::from_array(l.v),
                        w: Vec3::from_array(l.w),
                    })
                    .collect(),
            );
            actions.push(rec.action);
        }
        if frames.len() != header.frames {
            return Err(MotionError::Header(format!(
                "header declares {} frames, file has {}",
                header.frames,
                frames.len()
            )));
        }
        // Actions are recorded on every transition or not at all.
        let recorded: Vec<Vec<f64>> = actions.iter().flatten().cloned().collect();
        let actions = if recorded.is_empty() {
            None
        } else {
            if actions.len() < 2 || actions[..actions.len() - 1].iter().any(|a| a.is_none()) {
                return Err(MotionError::Invalid(
                    "actions must be recorded on every transition".into(),
                ));
            }
            Some(recorded)
        };
        Self::new(
            &header.character,
            header.links,
            header.fps,
            header.cyclic,
            Vec3::from_array(header.cycle_offset),
            frames,
            actions,
        )
    }

    pub fn load(path: &Path) -> Result<Self, MotionError> {
        let text = std::fs::read_to_string(path).map_err(|source| MotionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), MotionError> {
        std::fs::write(path, self.to_jsonl()).map_err(|source| MotionError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Reference states sampled on the control grid, ready for rollouts.
///
/// Holds every state a rollout of `horizon` control steps can visit from
/// any of its [`Track::starts`] start indices: one per control step of the
/// cycle for cyclic motions, every index that leaves `horizon` steps of
/// motion for acyclic ones.
#[derive(Clone, Debug)]
pub struct Track {
    states: Vec<SimState>,
    starts: usize,
    horizon: usize,
    control_dt: f64,
    cycle_period: f64,
}

impl Track {
    pub fn new(
        motion: &ReferenceMotion,
        ch: &Character,
        control_dt: f64,
        horizon: usize,
    ) -> Result<Self, MotionError> {
        motion.check_character(ch)?;
        if !(control_dt > 0.0) || horizon == 0 {
            return Err(MotionError::Invalid(
                "a track needs a positive control step and horizon".into(),
            ));
        }
        let starts = if motion.cyclic {
            ((motion.cycle_period() / control_dt).round() as usize).max(1)
        } else {
            let available = (motion.cycle_period() / control_dt + 1e-9).floor() as usize;
            if available < horizon {
                return Err(MotionError::Invalid(format!(
                    "motion lasts {} s, a rollout of {horizon} steps needs {} s",
                    motion.cycle_period(),
                    horizon as f64 * control_dt
                )));
            }
            available - horizon + 1
        };
        let states = (0..starts + horizon)
            .map(|i| motion.state_at(ch, i as f64 * control_dt))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            states,
            starts,
            horizon,
            control_dt,
            cycle_period: motion.cycle_period(),
        })
    }

    /// Reference state `index` control steps after the motion start.
    pub fn state(&self, index: usize) -> &SimState {
        &self.states[index]
    }

    /// Number of admissible start indices.
    pub fn starts(&self) -> usize {
        self.starts
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn control_dt(&self) -> f64 {
        self.control_dt
    }

    /// Motion cycle length, which also paces the simulated phase.
    pub fn cycle_period(&self) -> f64 {
        self.cycle_period
    }
}

#[cfg(test)]
mod tests;
