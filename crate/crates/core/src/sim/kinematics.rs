use super::model::{Character, DofKind};
use super::spec::{JointKind, RootKind};
use super::{LinkState, SimError};
use crate::autodiff::Real;
use crate::math::{Cholesky, Mat3, UnitQuat, Vec3};

/// Everything that depends on the generalized coordinates alone.
#[derive(Clone, Debug)]
pub(crate) struct PosKin<R> {
    pub quats: Vec<UnitQuat<R>>,
    pub mats: Vec<Mat3<R>>,
    pub coms: Vec<Vec3<R>>,
    /// World axis and pivot of each DOF.
    pub axes: Vec<Vec3<R>>,
    pub origins: Vec<Vec3<R>>,
    /// Point and angular Jacobian columns, `[dof * links + link]`.
    pub jv: Vec<Vec3<R>>,
    pub jw: Vec<Vec3<R>>,
    /// World inertia tensors.
    pub inertia: Vec<Mat3<R>>,
    /// Mass matrix, row-major.
    pub mass: Vec<R>,
    pub chol: Cholesky<R>,
}

/// Link and pivot velocities for a given generalized velocity.
#[derive(Clone, Debug)]
pub(crate) struct VelKin<R> {
    pub v: Vec<Vec3<R>>,
    pub w: Vec<Vec3<R>>,
    /// Angular velocity of the frame carrying each DOF axis.
    pub carrier: Vec<Vec3<R>>,
    /// Velocity of each DOF pivot.
    pub origin_v: Vec<Vec3<R>>,
}

impl Character {
    pub(crate) fn pos_kin<R: Real>(&self, q: &[R]) -> Result<PosKin<R>, SimError> {
        let nl = self.links.len();
        let nv = self.dofs.len();
        let mut quats: Vec<UnitQuat<R>> = Vec::with_capacity(nl);
        let mut mats: Vec<Mat3<R>> = Vec::with_capacity(nl);
        let mut coms: Vec<Vec3<R>> = Vec::with_capacity(nl);
        let mut axes = vec![Vec3::<R>::zero(); nv];
        let mut origins = vec![Vec3::<R>::zero(); nv];

        for link in &self.links {
            let (quat, com) = match (link.parent, self.root) {
                (None, RootKind::Planar) => {
                    let pitch = q[2];
                    let rot = UnitQuat::from_axis_angle(Vec3::Y, pitch);
                    let quat = rot.mul(&UnitQuat::constant(link.rest)).canonical();
                    let com = Vec3::new(q[0], R::constant(self.planar_y()), q[1]);
                    for k in 0..3 {
                        axes[k] = Vec3::constant(self.dofs[k].axis);
                        origins[k] = com;
                    }
                    (quat, com)
                }
                (None, RootKind::Free) => {
                    let quat = UnitQuat::from_parts_unchecked(q[3], q[4], q[5], q[6]).canonical();
                    let com = Vec3::new(q[0], q[1], q[2]);
                    for k in 0..6 {
                        axes[k] = Vec3::constant(self.dofs[k].axis);
                        origins[k] = com;
                    }
                    (quat, com)
                }
                (parent, _) => {
                    let (mut frame, origin) = match parent {
                        None => (UnitQuat::constant(link.rest), Vec3::constant(self.anchor)),
                        Some(p) => (
                            quats[p].mul(&UnitQuat::constant(link.rest)),
                            coms[p] + mats[p].mul_vec(Vec3::constant(link.joint_offset)),
                        ),
                    };
                    for k in link.dofs.clone() {
                        let axis_local = self.dofs[k].axis;
                        let m: Mat3<R> = frame.to_matrix();
                        axes[k] = m.mul_vec(Vec3::constant(axis_local));
                        origins[k] = origin;
                        let theta = q[self.coord_index(k)];
                        frame = frame.mul(&UnitQuat::from_axis_angle(axis_local, theta));
                    }
                    let quat = frame.canonical();
                    let com = origin + quat.to_matrix().mul_vec(Vec3::constant(link.com_offset));
                    (quat, com)
                }
            };
            mats.push(quat.to_matrix());
            quats.push(quat);
            coms.push(com);
        }

        let mut jv = vec![Vec3::<R>::zero(); nv * nl];
        let mut jw = vec![Vec3::<R>::zero(); nv * nl];
        for (k, dof) in self.dofs.iter().enumerate() {
            for &l in &dof.subtree {
                let (v, w) = match dof.kind {
                    DofKind::Prismatic => (axes[k], Vec3::zero()),
                    DofKind::Revolute => (axes[k].cross(coms[l] - origins[k]), axes[k]),
                };
                jv[k * nl + l] = v;
                jw[k * nl + l] = w;
            }
        }
        let inertia: Vec<Mat3<R>> = mats
            .iter()
            .zip(&self.links)
            .map(|(m, l)| m.congruence_diag(l.inertia))
            .collect();

        // m·Jv and I·Jw per (dof, link), so each mass-matrix entry is one dot
        let mut lhs = vec![Vec::new(); nv];
        let mut rhs = vec![Vec::new(); nv];
        for k in 0..nv {
            for &l in &self.dofs[k].subtree {
                let (v, w) = (jv[k * nl + l], jw[k * nl + l]);
                lhs[k].push((l, v, w));
                let iw = inertia[l].mul_vec(w);
                rhs[k].push((l, v.scale_by(self.links[l].mass), iw));
            }
        }
        let mut mass = vec![R::zero(); nv * nv];
        let mut a = Vec::new();
        let mut b = Vec::new();
        for j in 0..nv {
            for k in j..nv {
                a.clear();
                b.clear();
                for &l in self.shared_links(j, k) {
                    let (_, vj, wj) = lhs[j].iter().find(|e| e.0 == l).copied().unwrap();
                    let (_, mvk, iwk) = rhs[k].iter().find(|e| e.0 == l).copied().unwrap();
                    a.extend(vj.to_array());
                    b.extend(mvk.to_array());
                    if self.dofs[j].kind == DofKind::Revolute
                        && self.dofs[k].kind == DofKind::Revolute
                    {
                        a.extend(wj.to_array());
                        b.extend(iwk.to_array());
                    }
                }
                let m = R::dot(&a, &b);
                mass[j * nv + k] = m;
                mass[k * nv + j] = m;
            }
        }
        let chol = Cholesky::factor(&mass, nv).ok_or(SimError::Singular)?;
        Ok(PosKin {
            quats,
            mats,
            coms,
            axes,
            origins,
            jv,
            jw,
            inertia,
            mass,
            chol,
        })
    }

    pub(crate) fn vel_kin<R: Real>(&self, kin: &PosKin<R>, u: &[R]) -> VelKin<R> {
        let nl = self.links.len();
        let nv = self.dofs.len();
        let mut v = Vec::with_capacity(nl);
        let mut w = Vec::with_capacity(nl);
        let mut cols = Vec::new();
        let mut rates = Vec::new();
        for (l, link) in self.links.iter().enumerate() {
            rates.clear();
            rates.extend(link.ancestry.iter().map(|&k| u[k]));
            let mut comp = |j: &[Vec3<R>], c: usize| {
                cols.clear();
                cols.extend(link.ancestry.iter().map(|&k| j[k * nl + l].to_array()[c]));
                R::dot(&cols, &rates)
            };
            let lv = Vec3::new(comp(&kin.jv, 0), comp(&kin.jv, 1), comp(&kin.jv, 2));
            let lw = Vec3::new(comp(&kin.jw, 0), comp(&kin.jw, 1), comp(&kin.jw, 2));
            v.push(lv);
            w.push(lw);
        }
        let mut carrier = vec![Vec3::<R>::zero(); nv];
        let mut origin_v = vec![Vec3::<R>::zero(); nv];
        for link in &self.links {
            let (mut acc, ov) = match link.parent {
                None if self.root == RootKind::Fixed => (Vec3::zero(), Vec3::zero()),
                None => (Vec3::zero(), v[0]),
                Some(p) => (
                    w[p],
                    v[p] + w[p].cross(kin.origins[link.dofs.start] - kin.coms[p]),
                ),
            };
            for k in link.dofs.clone() {
                origin_v[k] = ov;
                if self.dofs[k].world_fixed {
                    continue;
                }
                carrier[k] = acc;
                acc += kin.axes[k].scale(u[k]);
            }
        }
        VelKin {
            v,
            w,
            carrier,
            origin_v,
        }
    }

    pub(crate) fn link_states<R: Real>(
        &self,
        kin: &PosKin<R>,
        vel: &VelKin<R>,
    ) -> Vec<LinkState<R>> {
        (0..self.links.len())
            .map(|l| LinkState {
                p: kin.coms[l],
                q: kin.quats[l],
                v: vel.v[l],
                w: vel.w[l],
            })
            .collect()
    }

    /// Recovers generalized coordinates and velocities from world link states.
    pub(crate) fn inverse_kinematics(
        &self,
        links: &[LinkState<f64>],
    ) -> Result<(Vec<f64>, Vec<f64>), SimError> {
        if links.len() != self.links.len() {
            return Err(SimError::Shape(format!(
                "{} link states for {} links",
                links.len(),
                self.links.len()
            )));
        }
        let mut q = vec![0.0; self.nq()];
        for (l, link) in self.links.iter().enumerate() {
            let r_l = links[l].q.to_matrix();
            match (link.parent, self.root) {
                (None, RootKind::Planar) => {
                    let rel = r_l.mul(&link.rest.to_matrix().transpose());
                    q[0] = links[0].p.x;
                    q[1] = links[0].p.z;
                    q[2] = rel.rows[0][2].atan2(rel.rows[0][0]);
                }
                (None, RootKind::Free) => {
                    q[..3].copy_from_slice(&<[f64; 3]>::from(links[0].p));
                    q[3..7].copy_from_slice(&links[0].q.to_array());
                }
                (parent, _) => {
                    let base = match parent {
                        None => link.rest.to_matrix(),
                        Some(p) => links[p].q.to_matrix().mul(&link.rest.to_matrix()),
                    };
                    let rel = base.transpose().mul(&r_l);
                    let angles = self.joint_angles(l, &rel);
                    for (k, a) in link.dofs.clone().zip(angles) {
                        q[self.coord_index(k)] = a;
                    }
                }
            }
        }

        let kin = self.pos_kin::<f64>(&q)?;
        let mut u = vec![0.0; self.nv()];
        for (l, link) in self.links.iter().enumerate() {
            match (link.parent, self.root) {
                (None, RootKind::Planar) => {
                    u[0] = links[0].v.x;
                    u[1] = links[0].v.z;
                    u[2] = links[0].w.y;
                }
                (None, RootKind::Free) => {
                    u[..3].copy_from_slice(&<[f64; 3]>::from(links[0].v));
                    u[3..6].copy_from_slice(&<[f64; 3]>::from(links[0].w));
                }
                (parent, _) => {
                    let rel = match parent {
                        None => links[l].w,
                        Some(p) => links[l].w - links[p].w,
                    };
                    let ax: Vec<Vec3> = link.dofs.clone().map(|k| kin.axes[k]).collect();
                    let rates = if ax.len() == 1 {
                        vec![ax[0].dot(rel)]
                    } else {
                        let det = ax[0].dot(ax[1].cross(ax[2]));
                        vec![
                            rel.dot(ax[1].cross(ax[2])) / det,
                            ax[0].dot(rel.cross(ax[2])) / det,
                            ax[0].dot(ax[1].cross(rel)) / det,
                        ]
                    };
                    for (k, r) in link.dofs.clone().zip(rates) {
                        u[k] = r;
                    }
                }
            }
        }
        Ok((q, u))
    }

    /// Joint angles of link `l` from its rotation relative to the rest frame.
    fn joint_angles(&self, l: usize, rel: &Mat3) -> Vec<f64> {
        let link = &self.links[l];
        let kind = self.spec().links[l]
            .joint
            .as_ref()
            .map(|j| j.kind)
            .unwrap_or(JointKind::Revolute);
        match kind {
            JointKind::Revolute => {
                let a = self.dofs[link.dofs.start].axis;
                let r = &rel.rows;
                let vee = Vec3::new(r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]);
                let tr = r[0][0] + r[1][1] + r[2][2];
                vec![(a.dot(vee) * 0.5).atan2((tr - 1.0) * 0.5)]
            }
            JointKind::Spherical => {
                let b = Mat3::from_columns(
                    self.dofs[link.dofs.start].axis,
                    self.dofs[link.dofs.start + 1].axis,
                    self.dofs[link.dofs.start + 2].axis,
                );
                // in the axis basis the rotation is Rx(a)·Ry(b)·Rz(c)
                let m = b.transpose().mul(rel).mul(&b).rows;
                let beta = m[0][2].clamp(-1.0, 1.0).asin();
                let alpha = (-m[1][2]).atan2(m[2][2]);
                let gamma = (-m[0][1]).atan2(m[0][0]);
                vec![alpha, beta, gamma]
            }
        }
    }
}
