use std::f64::consts::{PI, TAU};

use envbridge_core::geometry::{Primitive2, Primitive3, Vec2, Vec3};
use envbridge_core::sensors::{Pose2, Pose3, RaySensor2D, RaySensor3D};
use proptest::prelude::*;

fn rot2(v: Vec2, a: f64) -> Vec2 {
    Vec2::new(v.x * a.cos() - v.y * a.sin(), v.x * a.sin() + v.y * a.cos())
}

/// Rotation about +y, carrying +x towards +z (the yaw direction).
fn rot_y(v: Vec3, a: f64) -> Vec3 {
    Vec3::new(v.x * a.cos() - v.z * a.sin(), v.y, v.x * a.sin() + v.z * a.cos())
}

fn world2() -> impl Strategy<Value = Vec<Primitive2>> {
    let p = (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y)| Vec2::new(x, y));
    prop::collection::vec(
        prop_oneof![
            (p.clone(), p.clone()).prop_map(|(a, b)| Primitive2::segment(a, b)),
            (p, 0.2..3.0f64).prop_map(|(c, r)| Primitive2::circle(c, r)),
        ],
        0..8,
    )
}

fn world3() -> impl Strategy<Value = Vec<Primitive3>> {
    let p = (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z));
    prop::collection::vec(
        prop_oneof![
            (p.clone(), 0.2..3.0f64).prop_map(|(c, r)| Primitive3::sphere(c, r)),
            (p, -8.0..8.0f64).prop_map(|(n, o)| Primitive3::plane(n.try_normalize(1e-3).unwrap_or(Vec3::y()), o)),
        ],
        0..8,
    )
}

fn rotate2(p: &Primitive2, a: f64, t: Vec2) -> Primitive2 {
    match *p {
        Primitive2::Segment { a: p0, b: p1 } => Primitive2::segment(rot2(p0, a) + t, rot2(p1, a) + t),
        Primitive2::Circle { center, radius } => Primitive2::circle(rot2(center, a) + t, radius),
        Primitive2::Aabb { .. } => unreachable!("boxes only rotate by quarter turns"),
    }
}

fn rotate3(p: &Primitive3, a: f64, t: Vec3) -> Primitive3 {
    match *p {
        Primitive3::Sphere { center, radius } => Primitive3::sphere(rot_y(center, a) + t, radius),
        Primitive3::Plane { normal, offset } => {
            let n = rot_y(normal, a);
            Primitive3::plane(n, offset + n.dot(&t))
        }
        Primitive3::Aabb { .. } => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn planar_fan_is_rigid_motion_equivariant(
        world in world2(),
        pos in (-5.0..5.0f64, -5.0..5.0f64),
        heading in -PI..PI,
        angle in -PI..PI,
        shift in (-5.0..5.0f64, -5.0..5.0f64),
        n in 1usize..40,
        arc in 0.1..TAU,
    ) {
        let sensor = RaySensor2D::new(n, arc, 12.0);
        let t = Vec2::new(shift.0, shift.1);
        let pose = Pose2::new(Vec2::new(pos.0, pos.1), heading);
        let moved_pose = Pose2::new(rot2(pose.position, angle) + t, heading + angle);
        let moved: Vec<Primitive2> = world.iter().map(|p| rotate2(p, angle, t)).collect();
        let a = sensor.sense(&pose, &world);
        let b = sensor.sense(&moved_pose, &moved);
        prop_assert_eq!(a.len(), n);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((0.0..=1.0).contains(x));
            // A grazing ray can legitimately flip between hit and miss; everything else agrees.
            prop_assert!((x - y).abs() < 1e-9 || *x == 1.0 || *y == 1.0, "{} vs {}", x, y);
        }
    }

    #[test]
    fn boxes_are_equivariant_under_quarter_turns(
        c in (-6.0..6.0f64, -6.0..6.0f64), half in (0.2..3.0f64, 0.2..3.0f64), k in 0u8..4, heading in -PI..PI,
    ) {
        let sensor = RaySensor2D::circle(16, 20.0);
        let angle = f64::from(k) * PI / 2.0;
        let center = Vec2::new(c.0, c.1);
        let h = Vec2::new(half.0, half.1);
        let world = [Primitive2::block(center, h)];
        let hr = if k % 2 == 1 { Vec2::new(h.y, h.x) } else { h };
        let moved = [Primitive2::block(rot2(center, angle), hr)];
        let a = sensor.sense(&Pose2::new(Vec2::new(0.0, 0.0), heading), &world);
        let b = sensor.sense(&Pose2::new(Vec2::new(0.0, 0.0), heading + angle), &moved);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9 || *x == 1.0 || *y == 1.0);
        }
    }

    #[test]
    fn cone_is_equivariant_under_yaw_and_translation(
        world in world3(),
        yaw in -PI..PI,
        pitch in -1.4..1.4f64,
        angle in -PI..PI,
        shift in (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64),
        az in 1usize..8,
        el in 1usize..5,
        half_angle in 0.1..PI,
    ) {
        let sensor = RaySensor3D::new(az, el, half_angle, 20.0);
        let t = Vec3::new(shift.0, shift.1, shift.2);
        let pose = Pose3::new(Vec3::new(0.5, 1.0, -0.5), yaw, pitch);
        let moved_pose = Pose3::new(rot_y(pose.position, angle) + t, yaw + angle, pitch);
        let moved: Vec<Primitive3> = world.iter().map(|p| rotate3(p, angle, t)).collect();
        let a = sensor.sense(&pose, &world);
        let b = sensor.sense(&moved_pose, &moved);
        prop_assert_eq!(a.len(), az * el);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((0.0..=1.0).contains(x));
            prop_assert!((x - y).abs() < 1e-9 || *x == 1.0 || *y == 1.0);
        }
    }

    #[test]
    fn wall_ahead_reads_its_distance(r in 0.5..9.0f64, yaw in -PI..PI, pitch in -1.4..1.4f64) {
        // Solid half-space starting r ahead along the forward axis.
        let sensor = RaySensor3D::new(1, 1, 1e-3, 10.0);
        let pose = Pose3::new(Vec3::zeros(), yaw, pitch);
        let (f, _, _) = pose.basis();
        let wall = Primitive3::plane(-f, -r);
        let reading = sensor.sense(&pose, &[wall])[0];
        prop_assert!((reading - r / 10.0).abs() < 1e-6);
    }
}
