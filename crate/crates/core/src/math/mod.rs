//! Small fixed-size linear algebra and rotation helpers, generic over
//! [`Real`](crate::autodiff::Real).

mod linalg;
mod rotation;
mod vec3;

pub use linalg::{mat_vec, Cholesky};
pub use rotation::{
    quat_geodesic_angle, quat_integrate, quat_to_rot6d, Mat3, Rot6, RotationError, UnitQuat,
};
pub use vec3::Vec3;
