use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;

pub const CHARACTER_SCHEMA: &str = "character/v1";

/// On-disk description of a character (`character/v1`, TOML). All units SI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterSpec {
    pub schema: String,
    pub name: String,
    pub root: RootSpec,
    #[serde(default)]
    pub contact: ContactSpec,
    #[serde(default)]
    pub loss_weights: LossWeights,
    #[serde(default)]
    pub fall: FallSpec,
    pub links: Vec<LinkSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootKind {
    /// Root link hinged to a world anchor through its own (actuated) joint.
    Fixed,
    /// Translation in the x-z plane plus pitch about world y, unactuated.
    Planar,
    /// Six-DOF floating root, unactuated.
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootSpec {
    pub kind: RootKind,
    /// World anchor of the root joint (fixed roots).
    #[serde(default)]
    pub anchor: Option<[f64; 3]>,
    /// Root COM position of the rest pose (floating roots).
    #[serde(default)]
    pub rest_position: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSpec {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    /// Coulomb coefficient, dimensionless.
    pub friction: f64,
}

impl Default for ContactSpec {
    fn default() -> Self {
        Self {
            stiffness: 2.0e4,
            damping: 500.0,
            friction: 1.0,
        }
    }
}

/// Per-term weights of the state distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub position: f64,
    pub rotation: f64,
    pub velocity: f64,
    pub angular_velocity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            rotation: 0.5,
            velocity: 0.01,
            angular_velocity: 0.01,
        }
    }
}

/// Per-character definition of failure used by evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FallSpec {
    /// Fall when root height drops below this fraction of the rest height
    /// (floating roots only).
    pub root_height_ratio: Option<f64>,
    /// How long the low root must persist, seconds.
    pub sustain: f64,
    /// Success bound on pose error for characters without a fall predicate, m.
    pub pose_error_bound: Option<f64>,
}

impl Default for FallSpec {
    fn default() -> Self {
        Self {
            root_height_ratio: None,
            sustain: 0.2,
            pose_error_bound: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub name: String,
    #[serde(default)]
    pub parent: Option<String>,
    /// kg
    pub mass: f64,
    /// Principal moments in the link frame, kg·m².
    pub inertia: [f64; 3],
    /// Joint center relative to the parent COM, parent frame (m).
    #[serde(default)]
    pub joint_offset: [f64; 3],
    /// This link's COM relative to its joint center, link frame (m).
    #[serde(default)]
    pub com_offset: [f64; 3],
    /// Rest rotation relative to the parent frame, `(w, x, y, z)`.
    #[serde(default)]
    pub rest_rotation: Option<[f64; 4]>,
    #[serde(default)]
    pub joint: Option<JointSpec>,
    #[serde(default)]
    pub capsule: Option<CapsuleSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    /// Three orthonormal hinge axes applied in order.
    Spherical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    #[serde(rename = "type")]
    pub kind: JointKind,
    /// Hinge axis in the link's rest frame (revolute).
    #[serde(default)]
    pub axis: Option<[f64; 3]>,
    /// Hinge axes (spherical); defaults to x, y, z.
    #[serde(default)]
    pub axes: Option<Vec<[f64; 3]>>,
    /// `[lo, hi]` in rad, one entry per DOF.
    pub limits: Vec<[f64; 2]>,
    /// N·m/rad
    #[serde(default = "default_limit_stiffness")]
    pub limit_stiffness: f64,
    /// N·m/rad
    pub kp: f64,
    /// N·m·s/rad
    pub kd: f64,
}

fn default_limit_stiffness() -> f64 {
    50.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsuleSpec {
    pub radius: f64,
    pub half_length: f64,
    /// Capsule axis in the link frame; centered on the COM.
    pub axis: [f64; 3],
    /// Capsule center relative to the COM, link frame.
    #[serde(default)]
    pub center: [f64; 3],
}

const BUILTINS: &[(&str, &str)] = &[
    ("pendulum", include_str!("../../characters/pendulum.toml")),
    ("acrobot", include_str!("../../characters/acrobot.toml")),
    ("walker", include_str!("../../characters/walker.toml")),
    ("hopper", include_str!("../../characters/hopper.toml")),
];

impl CharacterSpec {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let spec: CharacterSpec =
            toml::from_str(text).map_err(|e| SimError::Spec(e.to_string()))?;
        if spec.schema != CHARACTER_SCHEMA {
            return Err(SimError::Spec(format!(
                "unsupported schema {:?}, expected {CHARACTER_SCHEMA:?}",
                spec.schema
            )));
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("character spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Spec(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            SimError::Spec(m) => SimError::Spec(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// One of the shipped desk characters: `pendulum`, `acrobot`, `walker`,
    /// `hopper`.
    pub fn builtin(name: &str) -> Option<Self> {
        BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml(text).expect("builtin character parses"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTINS.iter().map(|(n, _)| *n)
    }

    /// A builtin name or a path to a spec file.
    pub fn resolve(name_or_path: &str) -> Result<Self, SimError> {
        match Self::builtin(name_or_path) {
            Some(s) => Ok(s),
            None => Self::load(Path::new(name_or_path)),
        }
    }
}
