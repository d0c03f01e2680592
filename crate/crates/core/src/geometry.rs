//! Exact ray/primitive intersection for the 2D and 3D sensor worlds.
//!
//! Solid primitives (circles, spheres, boxes, half-spaces) report distance 0
//! for rays that start inside or on them. Segments have no interior.

use nalgebra::{Vector2, Vector3};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray2 {
    pub origin: Vec2,
    pub direction: Vec2,
    pub max_distance: f64,
}

impl Ray2 {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec2, direction: Vec2, max_distance: f64) -> Self {
        assert!(max_distance > 0.0, "ray max_distance must be positive");
        let norm = direction.norm();
        assert!(norm > 0.0 && norm.is_finite(), "ray direction must be non-zero");
        Self { origin, direction: direction / norm, max_distance }
    }

    pub fn from_heading(origin: Vec2, heading: f64, max_distance: f64) -> Self {
        let (s, c) = libm::sincos(heading);
        Self::new(origin, Vec2::new(c, s), max_distance)
    }

    pub fn at(&self, t: f64) -> Vec2 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3 {
    pub origin: Vec3,
    pub direction: Vec3,
    pub max_distance: f64,
}

impl Ray3 {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3, max_distance: f64) -> Self {
        assert!(max_distance > 0.0, "ray max_distance must be positive");
        let norm = direction.norm();
        assert!(norm > 0.0 && norm.is_finite(), "ray direction must be non-zero");
        Self { origin, direction: direction / norm, max_distance }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive2 {
    Segment { a: Vec2, b: Vec2 },
    Circle { center: Vec2, radius: f64 },
    Aabb { min: Vec2, max: Vec2 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive3 {
    Sphere { center: Vec3, radius: f64 },
    Aabb { min: Vec3, max: Vec3 },
    /// Solid half-space `normal · x <= offset`.
    Plane { normal: Vec3, offset: f64 },
}

impl Primitive2 {
    pub fn segment(a: Vec2, b: Vec2) -> Self {
        Primitive2::Segment { a, b }
    }

    pub fn circle(center: Vec2, radius: f64) -> Self {
        assert!(radius > 0.0, "circle radius must be positive");
        Primitive2::Circle { center, radius }
    }

    pub fn aabb(min: Vec2, max: Vec2) -> Self {
        assert!(min.x < max.x && min.y < max.y, "aabb min must be below max");
        Primitive2::Aabb { min, max }
    }

    /// Axis-aligned box from its center and half extents.
    pub fn block(center: Vec2, half: Vec2) -> Self {
        Self::aabb(center - half, center + half)
    }

    pub fn translated(&self, by: Vec2) -> Self {
        match *self {
            Primitive2::Segment { a, b } => Primitive2::Segment { a: a + by, b: b + by },
            Primitive2::Circle { center, radius } => Primitive2::Circle { center: center + by, radius },
            Primitive2::Aabb { min, max } => Primitive2::Aabb { min: min + by, max: max + by },
        }
    }

    /// Euclidean distance from `p` to the primitive; 0 inside solids.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        match *self {
            Primitive2::Segment { a, b } => {
                let e = b - a;
                let len2 = e.norm_squared();
                let s = if len2 > 0.0 { ((p - a).dot(&e) / len2).clamp(0.0, 1.0) } else { 0.0 };
                (p - (a + e * s)).norm()
            }
            Primitive2::Circle { center, radius } => ((p - center).norm() - radius).max(0.0),
            Primitive2::Aabb { min, max } => {
                let dx = (min.x - p.x).max(0.0).max(p.x - max.x);
                let dy = (min.y - p.y).max(0.0).max(p.y - max.y);
                (dx * dx + dy * dy).sqrt()
            }
        }
    }

    pub fn ray_intersect(&self, ray: &Ray2) -> Option<f64> {
        debug_assert!((ray.direction.norm() - 1.0).abs() <= UNIT_TOLERANCE);
        match *self {
            Primitive2::Segment { a, b } => segment_hit(ray, a, b),
            Primitive2::Circle { center, radius } => {
                let m = ray.origin - center;
                ball_hit(m.norm_squared(), m.dot(&ray.direction), radius, ray.max_distance)
            }
            Primitive2::Aabb { min, max } => slab_hit(
                ray.origin.as_slice(),
                ray.direction.as_slice(),
                min.as_slice(),
                max.as_slice(),
                ray.max_distance,
            ),
        }
    }
}

impl Primitive3 {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        assert!(radius > 0.0, "sphere radius must be positive");
        Primitive3::Sphere { center, radius }
    }

    pub fn aabb(min: Vec3, max: Vec3) -> Self {
        assert!(min.x < max.x && min.y < max.y && min.z < max.z, "aabb min must be below max");
        Primitive3::Aabb { min, max }
    }

    pub fn block(center: Vec3, half: Vec3) -> Self {
        Self::aabb(center - half, center + half)
    }

    pub fn plane(normal: Vec3, offset: f64) -> Self {
        assert!((normal.norm() - 1.0).abs() <= UNIT_TOLERANCE, "plane normal must be unit length");
        Primitive3::Plane { normal, offset }
    }

    pub fn translated(&self, by: Vec3) -> Self {
        match *self {
            Primitive3::Sphere { center, radius } => Primitive3::Sphere { center: center + by, radius },
            Primitive3::Aabb { min, max } => Primitive3::Aabb { min: min + by, max: max + by },
            Primitive3::Plane { normal, offset } => Primitive3::Plane { normal, offset: offset + normal.dot(&by) },
        }
    }

    /// Whether `p` lies inside or on the primitive.
    pub fn contains(&self, p: Vec3) -> bool {
        match *self {
            Primitive3::Sphere { center, radius } => (p - center).norm_squared() <= radius * radius,
            Primitive3::Aabb { min, max } => (0..3).all(|i| p[i] >= min[i] && p[i] <= max[i]),
            Primitive3::Plane { normal, offset } => normal.dot(&p) <= offset,
        }
    }

    pub fn ray_intersect(&self, ray: &Ray3) -> Option<f64> {
        debug_assert!((ray.direction.norm() - 1.0).abs() <= UNIT_TOLERANCE);
        match *self {
            Primitive3::Sphere { center, radius } => {
                let m = ray.origin - center;
                ball_hit(m.norm_squared(), m.dot(&ray.direction), radius, ray.max_distance)
            }
            Primitive3::Aabb { min, max } => slab_hit(
                ray.origin.as_slice(),
                ray.direction.as_slice(),
                min.as_slice(),
                max.as_slice(),
                ray.max_distance,
            ),
            Primitive3::Plane { normal, offset } => {
                let height = normal.dot(&ray.origin) - offset;
                if height <= 0.0 {
                    return Some(0.0);
                }
                let closing = normal.dot(&ray.direction);
                if closing >= 0.0 {
                    return None;
                }
                let t = -height / closing;
                (t <= ray.max_distance).then_some(t)
            }
        }
    }
}

/// Solid disk/ball given `|origin - center|²` and `(origin - center) · direction`.
fn ball_hit(dist2: f64, along: f64, radius: f64, max_distance: f64) -> Option<f64> {
    let c = dist2 - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    if along >= 0.0 {
        return None;
    }
    let disc = along * along - c;
    if disc < 0.0 {
        return None;
    }
    // Product of roots is c; this form avoids cancellation in -b - sqrt(disc).
    let t = c / (-along + disc.sqrt());
    (t <= max_distance).then_some(t)
}

fn slab_hit(origin: &[f64], dir: &[f64], min: &[f64], max: &[f64], max_distance: f64) -> Option<f64> {
    let inside = (0..origin.len()).all(|i| origin[i] >= min[i] && origin[i] <= max[i]);
    if inside {
        return Some(0.0);
    }
    let mut t_near = 0.0_f64;
    let mut t_far = max_distance;
    for i in 0..origin.len() {
        if dir[i] == 0.0 {
            if origin[i] < min[i] || origin[i] > max[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[i];
        let mut t0 = (min[i] - origin[i]) * inv;
        let mut t1 = (max[i] - origin[i]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    Some(t_near)
}

fn cross(u: Vec2, v: Vec2) -> f64 {
    u.x * v.y - u.y * v.x
}

fn segment_hit(ray: &Ray2, a: Vec2, b: Vec2) -> Option<f64> {
    // Fixed endpoint order makes the result bit-identical under swapping a and b.
    let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
    let d = ray.direction;
    let e = b - a;
    let w = a - ray.origin;
    let denom = cross(d, e);
    if denom == 0.0 {
        if cross(w, d) != 0.0 {
            return None;
        }
        // Collinear: the ray runs along the segment's supporting line.
        let ta = w.dot(&d);
        let tb = (b - ray.origin).dot(&d);
        let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
        if hi < 0.0 {
            return None;
        }
        let t = lo.max(0.0);
        return (t <= ray.max_distance).then_some(t);
    }
    let t = cross(w, e) / denom;
    let s = cross(w, d) / denom;
    ((0.0..=1.0).contains(&s) && t >= 0.0 && t <= ray.max_distance).then_some(t)
}

/// Nearest hit of a ray against a world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub index: usize,
}

pub trait RayTarget {
    type Ray;
    fn ray_intersect(&self, ray: &Self::Ray) -> Option<f64>;
}

impl RayTarget for Primitive2 {
    type Ray = Ray2;
    fn ray_intersect(&self, ray: &Ray2) -> Option<f64> {
        Primitive2::ray_intersect(self, ray)
    }
}

impl RayTarget for Primitive3 {
    type Ray = Ray3;
    fn ray_intersect(&self, ray: &Ray3) -> Option<f64> {
        Primitive3::ray_intersect(self, ray)
    }
}

/// Minimum hit over `world`; ties go to the lowest index.
pub fn raycast_world<P: RayTarget>(ray: &P::Ray, world: &[P]) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (index, primitive) in world.iter().enumerate() {
        if let Some(distance) = primitive.ray_intersect(ray) {
            if best.map_or(true, |b| distance < b.distance) {
                best = Some(Hit { distance, index });
            }
        }
    }
    best
}
