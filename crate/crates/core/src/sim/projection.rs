//! Tilted-plane projection geometry.

use nalgebra::Vector3;

use super::{AtomSite, OrientationAngles};

/// Height of the cutting plane `z = tan(a) (x cos t + y sin t)`.
pub fn tilt_height(x: f64, y: f64, angles: &OrientationAngles) -> f64 {
    let (sin_t, cos_t) = angles.theta().sin_cos();
    angles.alpha().tan() * (x * cos_t + y * sin_t)
}

/// Normal of the cutting plane, `(tan a cos t, tan a sin t, -1)`.
pub fn plane_normal(angles: &OrientationAngles) -> Vector3<f64> {
    let (sin_t, cos_t) = angles.theta().sin_cos();
    let tan_a = angles.alpha().tan();
    Vector3::new(tan_a * cos_t, tan_a * sin_t, -1.0)
}

/// Orthonormal basis of the cutting plane.
///
/// `e1` points up the slope along the tilt azimuth and `e2 = N x e1`
/// (normalised). Any fixed choice works since a random in-plane rotation
/// follows.
pub fn plane_basis(angles: &OrientationAngles) -> (Vector3<f64>, Vector3<f64>) {
    let (sin_t, cos_t) = angles.theta().sin_cos();
    let normal = plane_normal(angles);
    let e1 = Vector3::new(cos_t, sin_t, angles.alpha().tan()).normalize();
    let e2 = normal.cross(&e1).normalize();
    (e1, e2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneProjection {
    /// Component of the point vector along the plane normal.
    pub proj: Vector3<f64>,
    /// `|proj|`: distance of the layer point from the plane.
    pub dist: f64,
    pub proj_x: f64,
    pub proj_y: f64,
}

/// Projects one site onto the cutting plane.
///
/// The point vector is `origin - (x, y, floor(z))`, or `origin - (x, y, z)`
/// without `use_floor`. The basis height `z0` plays no part, so every
/// lattice sees the same construction. Its component along the
/// normal gives the distance; the remainder, expressed in
/// [`plane_basis`], gives the 2D coordinates.
pub fn project_to_plane(site: &AtomSite, angles: &OrientationAngles, use_floor: bool) -> PlaneProjection {
    let layer = if use_floor {
        site.z.floor()
    } else {
        site.z
    };
    let point = Vector3::new(-site.x, -site.y, -layer);
    let normal = plane_normal(angles);
    let proj = normal * (point.dot(&normal) / normal.dot(&normal));
    let in_plane = point - proj;
    let (e1, e2) = plane_basis(angles);
    PlaneProjection {
        proj,
        dist: proj.norm(),
        proj_x: in_plane.dot(&e1),
        proj_y: in_plane.dot(&e2),
    }
}

/// Applies `[[cos(phi pi), sin(phi pi)], [-sin(phi pi), cos(phi pi)]]`.
pub fn rotate2d(proj_x: f64, proj_y: f64, phi_raw: f64) -> (f64, f64) {
    let (s, c) = (phi_raw * std::f64::consts::PI).sin_cos();
    (c * proj_x + s * proj_y, -s * proj_x + c * proj_y)
}
