use crate::autodiff::Real;
use crate::sim::{Character, SimState};

/// Features per link: position relative to the root's ground projection (3),
/// world orientation as 6D rotation (6), linear velocity (3), angular
/// velocity (3).
const PER_LINK: usize = 15;

/// Length of [`state_features`] for a character.
pub fn feature_dim(ch: &Character) -> usize {
    ch.link_count() * PER_LINK + 1
}

/// Policy input for a state. Link positions are taken relative to the root
/// link's horizontal position, so they are invariant to translating the
/// character over the ground while height stays observable. The phase is
/// the final entry.
pub fn state_features<R: Real>(s: &SimState<R>) -> Vec<R> {
    let root = s.links[0].p;
    let mut out = Vec::with_capacity(s.links.len() * PER_LINK + 1);
    for l in &s.links {
        out.push(l.p.x - root.x);
        out.push(l.p.y - root.y);
        out.push(l.p.z);
        out.extend(l.q.to_rot6().0);
        out.extend(l.v.to_array());
        out.extend(l.w.to_array());
    }
    out.push(R::constant(s.phase));
    out
}
