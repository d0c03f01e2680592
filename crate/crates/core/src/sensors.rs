//! Raycast depth sensors ("virtual LIDAR").
//!
//! Each ray reads `hit_distance / max_distance`, and a miss reads 1.0, so a
//! sensor's output is a box part in `[0, 1]`. Rays originate at the agent
//! position.

use std::f64::consts::{PI, TAU};

use crate::geometry::{raycast_world, Primitive2, Primitive3, Ray2, Ray3, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self { position, heading }
    }
}

/// Position plus yaw (about +y, measured from +x towards +z) and pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    pub position: Vec3,
    pub yaw: f64,
    pub pitch: f64,
}

impl Pose3 {
    pub fn new(position: Vec3, yaw: f64, pitch: f64) -> Self {
        Self { position, yaw, pitch }
    }

    /// Orthonormal (forward, side, up) frame.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let (sy, cy) = libm::sincos(self.yaw);
        let (sp, cp) = libm::sincos(self.pitch);
        let forward = Vec3::new(cp * cy, sp, cp * sy);
        let up = Vec3::new(-sp * cy, cp, -sp * sy);
        let side = forward.cross(&up);
        (forward, side, up)
    }

    /// Express a world-frame vector in the body frame as (forward, side, up).
    pub fn to_body(&self, v: Vec3) -> Vec3 {
        let (f, s, u) = self.basis();
        Vec3::new(v.dot(&f), v.dot(&s), v.dot(&u))
    }
}

fn normalized(hit: Option<f64>, max_distance: f64) -> f64 {
    match hit {
        Some(d) => (d / max_distance).clamp(0.0, 1.0),
        None => 1.0,
    }
}

/// A planar fan of `n_rays` rays spanning `arc` radians, centered on the heading.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySensor2D {
    n_rays: usize,
    arc: f64,
    max_distance: f64,
    /// Unit directions relative to heading 0.
    offsets: Vec<Vec2>,
}

impl RaySensor2D {
    pub fn new(n_rays: usize, arc: f64, max_distance: f64) -> Self {
        assert!(n_rays > 0, "sensor needs at least one ray");
        assert!(arc > 0.0 && arc <= TAU, "arc must lie in (0, 2π]");
        assert!(max_distance > 0.0, "max_distance must be positive");
        let offsets = (0..n_rays)
            .map(|i| {
                let (s, c) = libm::sincos(Self::offset_angle(arc, n_rays, i));
                Vec2::new(c, s)
            })
            .collect();
        Self { n_rays, arc, max_distance, offsets }
    }

    /// Full circle of evenly spaced rays.
    pub fn circle(n_rays: usize, max_distance: f64) -> Self {
        Self::new(n_rays, TAU, max_distance)
    }

    fn offset_angle(arc: f64, n: usize, i: usize) -> f64 {
        arc * (i as f64 / n as f64 - 0.5)
    }

    /// Heading offset of ray `i`, increasing with `i`.
    pub fn heading_offset(&self, i: usize) -> f64 {
        Self::offset_angle(self.arc, self.n_rays, i)
    }

    pub fn width(&self) -> usize {
        self.n_rays
    }

    pub fn max_distance(&self) -> f64 {
        self.max_distance
    }

    pub fn ray(&self, pose: &Pose2, i: usize) -> Ray2 {
        let (s, c) = libm::sincos(pose.heading);
        let o = self.offsets[i];
        let direction = Vec2::new(c * o.x - s * o.y, s * o.x + c * o.y);
        Ray2 { origin: pose.position, direction, max_distance: self.max_distance }
    }

    pub fn sense(&self, pose: &Pose2, world: &[Primitive2]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_rays);
        self.sense_into(pose, world, &mut out);
        out
    }

    /// Append readings to `out`.
    pub fn sense_into(&self, pose: &Pose2, world: &[Primitive2], out: &mut Vec<f64>) {
        for i in 0..self.n_rays {
            let ray = self.ray(pose, i);
            out.push(normalized(raycast_world(&ray, world).map(|h| h.distance), self.max_distance));
        }
    }
}

/// A cone of rays about the forward axis.
///
/// Ring `k` sits at polar angle `cone_half_angle · (k + ½) / n_elevation` from
/// the forward axis, and carries `n_azimuth` rays at angles `2π·j / n_azimuth`
/// around it (measured from the side axis towards up). Readings are ordered
/// ring-major, azimuth-minor. A half-angle of π gives a spherical sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySensor3D {
    n_azimuth: usize,
    n_elevation: usize,
    cone_half_angle: f64,
    max_distance: f64,
    /// (forward, side, up) components of each body-frame direction.
    body_dirs: Vec<Vec3>,
}

impl RaySensor3D {
    pub fn new(n_azimuth: usize, n_elevation: usize, cone_half_angle: f64, max_distance: f64) -> Self {
        assert!(n_azimuth > 0 && n_elevation > 0, "sensor needs at least one ray");
        assert!(cone_half_angle > 0.0 && cone_half_angle <= PI, "half-angle must lie in (0, π]");
        assert!(max_distance > 0.0, "max_distance must be positive");
        let mut body_dirs = Vec::with_capacity(n_azimuth * n_elevation);
        for k in 0..n_elevation {
            let polar = cone_half_angle * (k as f64 + 0.5) / n_elevation as f64;
            let (sp, cp) = libm::sincos(polar);
            for j in 0..n_azimuth {
                let (sa, ca) = libm::sincos(TAU * j as f64 / n_azimuth as f64);
                body_dirs.push(Vec3::new(cp, sp * ca, sp * sa));
            }
        }
        Self { n_azimuth, n_elevation, cone_half_angle, max_distance, body_dirs }
    }

    pub fn width(&self) -> usize {
        self.n_azimuth * self.n_elevation
    }

    pub fn max_distance(&self) -> f64 {
        self.max_distance
    }

    pub fn cone_half_angle(&self) -> f64 {
        self.cone_half_angle
    }

    pub fn ray(&self, pose: &Pose3, i: usize) -> Ray3 {
        let (f, s, u) = pose.basis();
        self.ray_in_basis(pose.position, (f, s, u), i)
    }

    fn ray_in_basis(&self, origin: Vec3, (f, s, u): (Vec3, Vec3, Vec3), i: usize) -> Ray3 {
        let b = self.body_dirs[i];
        let direction = f * b.x + s * b.y + u * b.z;
        Ray3 { origin, direction, max_distance: self.max_distance }
    }

    pub fn sense(&self, pose: &Pose3, world: &[Primitive3]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        self.sense_into(pose, world, &mut out);
        out
    }

    pub fn sense_into(&self, pose: &Pose3, world: &[Primitive3], out: &mut Vec<f64>) {
        let basis = pose.basis();
        for i in 0..self.width() {
            let ray = self.ray_in_basis(pose.position, basis, i);
            out.push(normalized(raycast_world(&ray, world).map(|h| h.distance), self.max_distance));
        }
    }
}
