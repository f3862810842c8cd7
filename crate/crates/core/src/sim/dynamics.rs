use std::sync::Arc;

use super::kinematics::{PosKin, VelKin};
use super::model::{Character, DofKind};
use super::spec::RootKind;
use super::{
    contact_force, friction_coefficient, pd_torque, soft_limit_torque, LinkState, SimError,
    SimState, StepConfig,
};
use crate::autodiff::Real;
use crate::math::{Cholesky, UnitQuat, Vec3};

/// A contact point whose friction force is `−coefficient·v_t`.
struct Slip<R> {
    link: usize,
    arm: Vec3<R>,
    coefficient: R,
}

impl Character {
    /// Builds a state from generalized coordinates and velocities.
    pub fn state_from_coords<R: Real>(
        &self,
        coords: Vec<R>,
        vels: Vec<R>,
        phase: f64,
    ) -> Result<SimState<R>, SimError> {
        self.check_shapes(coords.len(), vels.len())?;
        let kin = self.pos_kin(&coords)?;
        let vel = self.vel_kin(&kin, &vels);
        let links = self.link_states(&kin, &vel);
        Ok(SimState {
            coords,
            vels,
            phase,
            links,
            cache: Some(Arc::new(kin)),
        })
    }

    /// Rest pose, at rest, phase 0.
    pub fn rest_state(&self) -> SimState<f64> {
        self.state_from_coords(self.rest_coords(), vec![0.0; self.nv()], 0.0)
            .expect("rest pose is valid")
    }

    /// State whose generalized coordinates reproduce the given world link
    /// states. The link states are kept as given.
    pub fn state_from_links(
        &self,
        links: Vec<LinkState<f64>>,
        phase: f64,
    ) -> Result<SimState<f64>, SimError> {
        let (coords, vels) = self.inverse_kinematics(&links)?;
        Ok(SimState {
            coords,
            vels,
            phase,
            links,
            cache: None,
        })
    }

    fn check_shapes(&self, nq: usize, nv: usize) -> Result<(), SimError> {
        if nq != self.nq() || nv != self.nv() {
            return Err(SimError::Shape(format!(
                "state has {nq} coordinates and {nv} velocities, character needs {} and {}",
                self.nq(),
                self.nv()
            )));
        }
        Ok(())
    }

    fn check_action<R>(&self, action: &[R]) -> Result<(), SimError> {
        if action.len() != self.action_dim() {
            return Err(SimError::Shape(format!(
                "action has {} entries, character has {} actuators",
                action.len(),
                self.action_dim()
            )));
        }
        Ok(())
    }

    /// One physics substep of `cfg.dt`.
    pub fn step<R: Real>(
        &self,
        s: &SimState<R>,
        action: &[R],
        cfg: &StepConfig,
    ) -> Result<SimState<R>, SimError> {
        self.step_with_force(s, action, cfg, Vec3::ZERO)
    }

    /// One physics substep with an external force applied at the root COM.
    pub fn step_with_force<R: Real>(
        &self,
        s: &SimState<R>,
        action: &[R],
        cfg: &StepConfig,
        push: Vec3,
    ) -> Result<SimState<R>, SimError> {
        self.check_shapes(s.coords.len(), s.vels.len())?;
        self.check_action(action)?;
        let fresh;
        let kin: &PosKin<R> = match &s.cache {
            Some(k) => k,
            None => {
                fresh = self.pos_kin(&s.coords)?;
                &fresh
            }
        };
        let vel = self.vel_kin(kin, &s.vels);
        let (rhs, slips) = self.generalized_forces(s, kin, &vel, action, cfg, push);

        let nv = self.nv();
        let nl = self.links.len();
        let dt = cfg.dt;
        // PD damping and contact friction are integrated implicitly with
        // coefficients frozen at the start of the substep:
        // (M + dt·D) u* = M u + dt·Q
        let impulse: Vec<R> = (0..nv)
            .map(|k| R::dot(&kin.mass[k * nv..(k + 1) * nv], &s.vels) + rhs[k] * dt)
            .collect();
        let mut drag = vec![R::zero(); nv * nv];
        if !slips.is_empty() {
            let jacobians: Vec<Vec<(R, R)>> = slips
                .iter()
                .map(|slip| {
                    (0..nv)
                        .map(|k| {
                            let j = kin.jv[k * nl + slip.link]
                                + kin.jw[k * nl + slip.link].cross(slip.arm);
                            (j.x, j.y)
                        })
                        .collect()
                })
                .collect();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for j in 0..nv {
                for k in 0..=j {
                    a.clear();
                    b.clear();
                    for (slip, jac) in slips.iter().zip(&jacobians) {
                        let w = slip.coefficient * dt;
                        a.push(jac[j].0 * w);
                        b.push(jac[k].0);
                        a.push(jac[j].1 * w);
                        b.push(jac[k].1);
                    }
                    let d = R::dot(&a, &b);
                    drag[j * nv + k] = d;
                    drag[k * nv + j] = d;
                }
            }
        }
        for act in self.actuators() {
            drag[act.dof * nv + act.dof] += R::constant(act.kd * dt);
        }
        let damped: Vec<R> = kin.mass.iter().zip(&drag).map(|(m, d)| *m + *d).collect();
        let u_mid = Cholesky::factor(&damped, nv)
            .ok_or(SimError::Singular)?
            .solve(&impulse);
        let momentum: Vec<R> = (0..nv)
            .map(|k| impulse[k] - R::dot(&drag[k * nv..(k + 1) * nv], &u_mid))
            .collect();

        let mut coords = s.coords.clone();
        for k in 0..nv {
            if self.root == RootKind::Free && (3..6).contains(&k) {
                continue;
            }
            let c = self.coord_index(k);
            coords[c] = coords[c] + u_mid[k] * dt;
        }
        if self.root == RootKind::Free {
            let q = UnitQuat::from_parts_unchecked(coords[3], coords[4], coords[5], coords[6]);
            let q = q.integrate(Vec3::new(u_mid[3], u_mid[4], u_mid[5]), dt);
            coords[3] = q.w;
            coords[4] = q.x;
            coords[5] = q.y;
            coords[6] = q.z;
        }
        let bad = |_| SimError::NonFinite { substep: 0 };
        if !coords.iter().all(|c| c.value().is_finite()) {
            return Err(SimError::NonFinite { substep: 0 });
        }
        let next = self.pos_kin(&coords).map_err(bad)?;
        let vels = next.chol.solve(&momentum);
        if !vels.iter().all(|c| c.value().is_finite()) {
            return Err(SimError::NonFinite { substep: 0 });
        }
        let nvel = self.vel_kin(&next, &vels);
        let links = self.link_states(&next, &nvel);
        let phase = s.phase + dt / cfg.cycle_period;
        Ok(SimState {
            coords,
            vels,
            phase: phase - phase.floor(),
            links,
            cache: Some(Arc::new(next)),
        })
    }

    /// `cfg.substeps` physics substeps with the action held fixed.
    pub fn control_step<R: Real>(
        &self,
        s: &SimState<R>,
        action: &[R],
        cfg: &StepConfig,
    ) -> Result<SimState<R>, SimError> {
        self.control_step_with_force(s, action, cfg, Vec3::ZERO)
    }

    pub fn control_step_with_force<R: Real>(
        &self,
        s: &SimState<R>,
        action: &[R],
        cfg: &StepConfig,
        push: Vec3,
    ) -> Result<SimState<R>, SimError> {
        let mut state = self.step_with_force(s, action, cfg, push)?;
        for i in 1..cfg.substeps {
            state = self
                .step_with_force(&state, action, cfg, push)
                .map_err(|e| match e {
                    SimError::NonFinite { .. } => SimError::NonFinite { substep: i },
                    other => other,
                })?;
        }
        Ok(state)
    }

    /// Stiffness part of the PD torques, soft limits, gravity, contact normal
    /// forces, push and velocity-product terms, projected onto each DOF, plus
    /// the sliding contacts whose friction is left to the implicit solve.
    fn generalized_forces<R: Real>(
        &self,
        s: &SimState<R>,
        kin: &PosKin<R>,
        vel: &VelKin<R>,
        action: &[R],
        cfg: &StepConfig,
        push: Vec3,
    ) -> (Vec<R>, Vec<Slip<R>>) {
        let nl = self.links.len();
        let mut force: Vec<Vec3<R>> = self
            .links
            .iter()
            .map(|l| Vec3::constant(Vec3::new(0.0, 0.0, -l.mass * cfg.gravity)))
            .collect();
        let mut torque = vec![Vec3::<R>::zero(); nl];
        if push != Vec3::ZERO {
            force[0] += Vec3::constant(push);
        }
        let contact = self.contact();
        let mut slips = Vec::new();
        for (l, link) in self.links.iter().enumerate() {
            for p in &link.contact_points {
                let x = kin.coms[l] + kin.mats[l].mul_vec(Vec3::constant(*p));
                let height = x.z - link.radius;
                if height.value() >= 0.0 {
                    continue;
                }
                let arm = x - Vec3::constant(Vec3::new(0.0, 0.0, link.radius)) - kin.coms[l];
                let pv = vel.v[l] + vel.w[l].cross(arm);
                let normal = contact_force(height, pv, contact).z;
                let f = Vec3::new(R::zero(), R::zero(), normal);
                force[l] += f;
                torque[l] += arm.cross(f);
                if contact.friction > 0.0 {
                    slips.push(Slip {
                        link: l,
                        arm,
                        coefficient: friction_coefficient(normal, pv.x, pv.y, contact.friction),
                    });
                }
            }
        }
        let momenta: Vec<(Vec3<R>, Vec3<R>)> = (0..nl)
            .map(|l| {
                (
                    vel.v[l].scale_by(self.links[l].mass),
                    kin.inertia[l].mul_vec(vel.w[l]),
                )
            })
            .collect();

        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut out = Vec::with_capacity(self.nv());
        for (k, dof) in self.dofs.iter().enumerate() {
            a.clear();
            b.clear();
            let revolute = dof.kind == DofKind::Revolute;
            for &l in &dof.subtree {
                a.extend(kin.jv[k * nl + l].to_array());
                b.extend(force[l].to_array());
                if revolute {
                    a.extend(kin.jw[k * nl + l].to_array());
                    b.extend(torque[l].to_array());
                }
            }
            if revolute {
                let axis = kin.axes[k];
                let adot = (!dof.world_fixed).then(|| vel.carrier[k].cross(axis));
                for &l in &dof.subtree {
                    let rel_v = vel.v[l] - vel.origin_v[k];
                    let mut jv_dot = axis.cross(rel_v);
                    if let Some(ad) = adot {
                        jv_dot += ad.cross(kin.coms[l] - kin.origins[k]);
                    }
                    a.extend(jv_dot.to_array());
                    b.extend(momenta[l].0.to_array());
                    if let Some(ad) = adot {
                        a.extend(ad.to_array());
                        b.extend(momenta[l].1.to_array());
                    }
                }
            }
            let mut q_k = R::dot(&a, &b);
            if let Some(i) = dof.actuator {
                let act = &self.actuators()[i];
                let q = s.coords[self.coord_index(k)];
                q_k += pd_torque(q, R::zero(), action[i], act.kp, 0.0);
                q_k += soft_limit_torque(q, act.lo, act.hi, act.limit_stiffness);
            }
            out.push(q_k);
        }
        (out, slips)
    }

    /// Kinetic plus gravitational potential energy, J.
    pub fn energy(&self, s: &SimState<f64>, gravity: f64) -> f64 {
        let nv = self.nv();
        let kin = self.pos_kin::<f64>(&s.coords).expect("valid state");
        let mut ke = 0.0;
        for j in 0..nv {
            for k in 0..nv {
                ke += 0.5 * s.vels[j] * kin.mass[j * nv + k] * s.vels[k];
            }
        }
        let pe: f64 = (0..self.links.len())
            .map(|l| self.links[l].mass * gravity * kin.coms[l].z)
            .sum();
        ke + pe
    }

    /// Total linear momentum, kg·m/s.
    pub fn linear_momentum(&self, s: &SimState<f64>) -> Vec3 {
        let mut p = Vec3::ZERO;
        for (l, link) in s.links.iter().enumerate() {
            p += link.v.scale_by(self.links[l].mass);
        }
        p
    }

    /// World positions of every contact sphere's lowest point.
    pub fn contact_points(&self, s: &SimState<f64>) -> Vec<(usize, Vec3)> {
        let mut out = Vec::new();
        for (l, link) in self.links.iter().enumerate() {
            let m = s.links[l].q.to_matrix();
            for p in &link.contact_points {
                let x = s.links[l].p + m.mul_vec(*p);
                out.push((l, x - Vec3::new(0.0, 0.0, link.radius)));
            }
        }
        out
    }
}
