use std::collections::HashMap;

use super::spec::{CharacterSpec, ContactSpec, JointKind, RootKind};
use super::SimError;
use crate::autodiff::Real;
use crate::math::{UnitQuat, Vec3};

pub const GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum DofKind {
    Prismatic,
    Revolute,
}

/// One velocity degree of freedom.
#[derive(Clone, Debug)]
pub(crate) struct Dof {
    pub kind: DofKind,
    /// Axis in the frame that carries it. World frame for root translation
    /// and floating-root rotation, otherwise the link's rest frame.
    pub axis: Vec3,
    /// Axis is fixed in the world frame.
    pub world_fixed: bool,
    /// Links moved by this DOF, in link order.
    pub subtree: Vec<usize>,
    pub actuator: Option<usize>,
}

/// PD-actuated DOF.
#[derive(Clone, Debug, PartialEq)]
pub struct Actuator {
    pub dof: usize,
    pub kp: f64,
    pub kd: f64,
    pub lo: f64,
    pub hi: f64,
    pub limit_stiffness: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub mass: f64,
    pub inertia: [f64; 3],
    pub joint_offset: Vec3,
    pub com_offset: Vec3,
    pub rest: UnitQuat,
    pub dofs: std::ops::Range<usize>,
    /// All DOFs on the path from the world to this link, ascending.
    pub ancestry: Vec<usize>,
    /// Contact sphere centers relative to the COM, link frame.
    pub contact_points: Vec<Vec3>,
    pub radius: f64,
}

/// A validated, simulation-ready character.
#[derive(Clone, Debug)]
pub struct Character {
    spec: CharacterSpec,
    pub(crate) links: Vec<Link>,
    pub(crate) dofs: Vec<Dof>,
    actuators: Vec<Actuator>,
    pub(crate) root: RootKind,
    pub(crate) anchor: Vec3,
    rest_position: Vec3,
    /// Links moved by both DOFs of a pair, row-major `nv × nv`.
    pub(crate) shared: Vec<Vec<usize>>,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::from(a)
}

fn unit_axis(a: [f64; 3], what: &str) -> Result<Vec3, SimError> {
    let v = vec3(a);
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(SimError::Spec(format!("{what}: axis must be unit length")));
    }
    Ok(v.scale_by(1.0 / n))
}

impl Character {
    pub fn new(spec: CharacterSpec) -> Result<Self, SimError> {
        let bad = |m: String| Err(SimError::Spec(m));
        if spec.links.is_empty() {
            return bad("character has no links".into());
        }
        let c = &spec.contact;
        if !(c.stiffness > 0.0 && c.damping >= 0.0 && c.friction >= 0.0) {
            return bad("contact requires stiffness > 0, damping ≥ 0, friction ≥ 0".into());
        }
        let w = &spec.loss_weights;
        if [w.position, w.rotation, w.velocity, w.angular_velocity]
            .iter()
            .any(|x| !(*x >= 0.0))
        {
            return bad("loss weights must be ≥ 0".into());
        }

        let mut index = HashMap::new();
        let mut links = Vec::new();
        let mut dofs: Vec<Dof> = Vec::new();
        let mut actuators = Vec::new();
        let anchor = spec.root.anchor.map(vec3).unwrap_or(Vec3::ZERO);
        let rest_position = spec
            .root
            .rest_position
            .map(vec3)
            .unwrap_or(Vec3::new(0.0, 0.0, 1.0));

        for (li, ls) in spec.links.iter().enumerate() {
            let ctx = format!("link {:?}", ls.name);
            if index.insert(ls.name.clone(), li).is_some() {
                return bad(format!("{ctx}: duplicate name"));
            }
            if !(ls.mass > 0.0) || !ls.inertia.iter().all(|i| *i > 0.0) {
                return bad(format!("{ctx}: mass and inertia must be > 0"));
            }
            let parent = match (&ls.parent, li) {
                (None, 0) => None,
                (Some(_), 0) => return bad(format!("{ctx}: the first link is the root")),
                (None, _) => return bad(format!("{ctx}: only the root may omit a parent")),
                (Some(p), _) => match index.get(p) {
                    Some(&pi) if pi < li => Some(pi),
                    _ => {
                        return bad(format!(
                            "{ctx}: parent {p:?} must be declared before its children"
                        ))
                    }
                },
            };
            let rest = match ls.rest_rotation {
                None => UnitQuat::identity(),
                Some([w, x, y, z]) => UnitQuat::new(w, x, y, z)
                    .map_err(|e| SimError::Spec(format!("{ctx}: rest rotation: {e}")))?,
            };
            let first = dofs.len();
            let push = |dofs: &mut Vec<Dof>, kind, axis, world_fixed| {
                dofs.push(Dof {
                    kind,
                    axis,
                    world_fixed,
                    subtree: Vec::new(),
                    actuator: None,
                });
            };
            let is_root = li == 0;
            match (is_root, spec.root.kind) {
                (true, RootKind::Planar) => {
                    push(&mut dofs, DofKind::Prismatic, Vec3::X, true);
                    push(&mut dofs, DofKind::Prismatic, Vec3::Z, true);
                    push(&mut dofs, DofKind::Revolute, Vec3::Y, true);
                }
                (true, RootKind::Free) => {
                    for a in [Vec3::X, Vec3::Y, Vec3::Z] {
                        push(&mut dofs, DofKind::Prismatic, a, true);
                    }
                    for a in [Vec3::X, Vec3::Y, Vec3::Z] {
                        push(&mut dofs, DofKind::Revolute, a, true);
                    }
                }
                _ => {}
            }
            let needs_joint = !is_root || spec.root.kind == RootKind::Fixed;
            match (&ls.joint, needs_joint) {
                (None, true) => return bad(format!("{ctx}: missing joint")),
                (Some(_), false) => {
                    return bad(format!("{ctx}: a floating root link takes no joint"))
                }
                (None, false) => {}
                (Some(j), true) => {
                    let axes = match j.kind {
                        JointKind::Revolute => {
                            let a = j.axis.ok_or_else(|| {
                                SimError::Spec(format!("{ctx}: revolute joint needs an axis"))
                            })?;
                            vec![unit_axis(a, &ctx)?]
                        }
                        JointKind::Spherical => {
                            let raw = j.axes.clone().unwrap_or(vec![
                                [1.0, 0.0, 0.0],
                                [0.0, 1.0, 0.0],
                                [0.0, 0.0, 1.0],
                            ]);
                            if raw.len() != 3 {
                                return bad(format!("{ctx}: spherical joint needs three axes"));
                            }
                            let ax = raw
                                .iter()
                                .map(|a| unit_axis(*a, &ctx))
                                .collect::<Result<Vec<_>, _>>()?;
                            let ortho = ax[0].dot(ax[1]).abs() < 1e-9
                                && ax[1].dot(ax[2]).abs() < 1e-9
                                && ax[0].dot(ax[2]).abs() < 1e-9
                                && (ax[0].cross(ax[1]).dot(ax[2]) - 1.0).abs() < 1e-9;
                            if !ortho {
                                return bad(format!(
                                    "{ctx}: spherical axes must be orthonormal and right-handed"
                                ));
                            }
                            ax
                        }
                    };
                    if j.limits.len() != axes.len() {
                        return bad(format!(
                            "{ctx}: {} limit pairs for {} DOF",
                            j.limits.len(),
                            axes.len()
                        ));
                    }
                    if !(j.kp >= 0.0 && j.kd >= 0.0 && j.limit_stiffness >= 0.0) {
                        return bad(format!("{ctx}: gains must be ≥ 0"));
                    }
                    for (a, [lo, hi]) in axes.into_iter().zip(j.limits.iter().copied()) {
                        if !(lo < hi) {
                            return bad(format!("{ctx}: joint limits need lo < hi"));
                        }
                        actuators.push(Actuator {
                            dof: dofs.len(),
                            kp: j.kp,
                            kd: j.kd,
                            lo,
                            hi,
                            limit_stiffness: j.limit_stiffness,
                        });
                        push(&mut dofs, DofKind::Revolute, a, false);
                        dofs.last_mut().unwrap().actuator = Some(actuators.len() - 1);
                    }
                }
            }
            let mut ancestry = parent
                .map(|p: usize| links_ancestry(&links, p))
                .unwrap_or_default();
            ancestry.extend(first..dofs.len());
            let (contact_points, radius) = match &ls.capsule {
                None => (Vec::new(), 0.0),
                Some(cap) => {
                    if !(cap.radius >= 0.0 && cap.half_length >= 0.0) {
                        return bad(format!("{ctx}: capsule dimensions must be ≥ 0"));
                    }
                    let center = vec3(cap.center);
                    if cap.half_length == 0.0 {
                        (vec![center], cap.radius)
                    } else {
                        let a = unit_axis(cap.axis, &ctx)?.scale_by(cap.half_length);
                        (vec![center - a, center + a], cap.radius)
                    }
                }
            };
            links.push(Link {
                name: ls.name.clone(),
                parent,
                mass: ls.mass,
                inertia: ls.inertia,
                joint_offset: vec3(ls.joint_offset),
                com_offset: vec3(ls.com_offset),
                rest,
                dofs: first..dofs.len(),
                ancestry,
                contact_points,
                radius,
            });
        }
        for (li, link) in links.iter().enumerate() {
            for &k in &link.ancestry {
                dofs[k].subtree.push(li);
            }
        }
        if dofs.is_empty() {
            return bad("character has no degrees of freedom".into());
        }
        let n = dofs.len();
        let mut shared = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                shared.push(
                    dofs[k]
                        .subtree
                        .iter()
                        .copied()
                        .filter(|l| dofs[j].subtree.contains(l))
                        .collect(),
                );
            }
        }
        Ok(Self {
            root: spec.root.kind,
            spec,
            links,
            dofs,
            actuators,
            anchor,
            rest_position,
            shared,
        })
    }

    pub fn builtin(name: &str) -> Option<Self> {
        CharacterSpec::builtin(name).map(|s| Self::new(s).expect("builtin character is valid"))
    }

    /// A builtin name or a spec file path.
    pub fn resolve(name_or_path: &str) -> Result<Self, SimError> {
        Self::new(CharacterSpec::resolve(name_or_path)?)
    }

    pub fn spec(&self) -> &CharacterSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn contact(&self) -> &ContactSpec {
        &self.spec.contact
    }

    /// Replaces the ground friction coefficient.
    pub fn with_friction(&self, mu: f64) -> Result<Self, SimError> {
        let mut spec = self.spec.clone();
        spec.contact.friction = mu;
        Self::new(spec)
    }

    pub fn root_kind(&self) -> RootKind {
        self.root
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_names(&self) -> Vec<String> {
        self.links.iter().map(|l| l.name.clone()).collect()
    }

    pub fn link_mass(&self, link: usize) -> f64 {
        self.links[link].mass
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Number of generalized velocities.
    pub fn nv(&self) -> usize {
        self.dofs.len()
    }

    /// Number of generalized coordinates (one more than `nv` for a free root).
    pub fn nq(&self) -> usize {
        self.dofs.len() + usize::from(self.root == RootKind::Free)
    }

    pub fn action_dim(&self) -> usize {
        self.actuators.len()
    }

    pub fn actuators(&self) -> &[Actuator] {
        &self.actuators
    }

    /// PD targets limited to each actuator's joint range. Gradients through a
    /// clamped entry are zero.
    pub fn clamp_action<R: Real>(&self, action: &[R]) -> Vec<R> {
        action
            .iter()
            .zip(&self.actuators)
            .map(|(a, act)| a.clamp(act.lo, act.hi))
            .collect()
    }

    pub fn has_contact(&self) -> bool {
        self.links.iter().any(|l| !l.contact_points.is_empty())
    }

    /// Coordinate slot of a non-quaternion DOF.
    pub(crate) fn coord_index(&self, dof: usize) -> usize {
        if self.root == RootKind::Free && dof >= 3 {
            debug_assert!(dof >= 6);
            dof + 1
        } else {
            dof
        }
    }

    /// Position used as the "root" of root-relative metrics: the root COM
    /// for floating roots, the world anchor for fixed ones.
    pub fn fixed_anchor(&self) -> Option<Vec3> {
        (self.root == RootKind::Fixed).then_some(self.anchor)
    }

    pub fn rest_root_height(&self) -> f64 {
        match self.root {
            RootKind::Fixed => self.anchor.z,
            _ => self.rest_position.z,
        }
    }

    /// Generalized coordinates of the rest pose.
    pub fn rest_coords(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.nq()];
        match self.root {
            RootKind::Fixed => {}
            RootKind::Planar => {
                q[0] = self.rest_position.x;
                q[1] = self.rest_position.z;
            }
            RootKind::Free => {
                q[..3].copy_from_slice(&<[f64; 3]>::from(self.rest_position));
                q[3..7].copy_from_slice(&self.links[0].rest.to_array());
            }
        }
        q
    }

    /// y coordinate of a planar root.
    pub(crate) fn planar_y(&self) -> f64 {
        self.rest_position.y
    }

    pub(crate) fn shared_links(&self, j: usize, k: usize) -> &[usize] {
        &self.shared[j * self.dofs.len() + k]
    }
}

fn links_ancestry(links: &[Link], li: usize) -> Vec<usize> {
    links[li].ancestry.clone()
}
