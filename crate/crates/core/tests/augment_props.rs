use evpose::events::{Polarity, PointEvent};
use evpose::pose::Pose;
use evpose::synthgen::{forward_kinematics, MotionScript, SkeletonSpec};
use evpose::trainer::{augment_global_rotation, augment_limb_rotation, rotate_point, AugClip};
use proptest::prelude::*;

const L_KNEE: usize = 9;
const L_ANKLE: usize = 11;

fn rest_pose() -> Pose {
    let spec = SkeletonSpec::human();
    forward_kinematics(&spec, &MotionScript::still(13, [32.0, 28.0]), 0.0).unwrap()
}

fn point(x: f64, y: f64) -> PointEvent {
    PointEvent {
        x,
        y,
        t: 5,
        polarity: Polarity::Negative,
    }
}

fn lerp(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

fn clip(events: Vec<PointEvent>) -> AugClip {
    AugClip {
        events,
        poses: vec![rest_pose()],
        t0: 0,
        interval: 100,
        width: 64,
        height: 64,
    }
}

fn on_lower_leg(s: f64) -> PointEvent {
    let p = rest_pose();
    let q = lerp(p.joints[L_KNEE], p.joints[L_ANKLE], s);
    point(q[0], q[1])
}

fn on_thigh(s: f64) -> PointEvent {
    let p = rest_pose();
    let q = lerp(p.joints[7], p.joints[L_KNEE], s);
    point(q[0], q[1])
}

#[test]
fn zero_angle_is_identity() {
    let c = clip(vec![on_lower_leg(0.5), on_thigh(0.5), point(3.0, 4.0)]);
    let spec = SkeletonSpec::human();
    assert_eq!(augment_limb_rotation(&c, &spec, L_KNEE, 0.0).unwrap(), c);
    assert_eq!(augment_global_rotation(&c, 0.0), c);
}

#[test]
fn only_the_distal_limb_moves() {
    let spec = SkeletonSpec::human();
    let c = clip(vec![on_lower_leg(0.6), on_thigh(0.4)]);
    let r = augment_limb_rotation(&c, &spec, L_KNEE, 40.0).unwrap();
    let knee = c.poses[0].joints[L_KNEE];
    let moved = rotate_point([c.events[0].x, c.events[0].y], knee, 40.0);
    assert_eq!([r.events[0].x, r.events[0].y], moved);
    assert_eq!(r.events[1], c.events[1]);
    let ankle = rotate_point(c.poses[0].joints[L_ANKLE], knee, 40.0);
    assert_eq!(r.poses[0].joints[L_ANKLE], ankle);
    for j in (0..13).filter(|&j| j != L_ANKLE) {
        assert_eq!(r.poses[0].joints[j], c.poses[0].joints[j], "joint {j}");
    }
}

#[test]
fn invisible_pivot_skips_the_sample() {
    let spec = SkeletonSpec::human();
    let mut c = clip(vec![on_lower_leg(0.5)]);
    c.poses[0].visible[L_KNEE] = false;
    assert_eq!(augment_limb_rotation(&c, &spec, L_KNEE, 30.0).unwrap(), c);
}

#[test]
fn full_turn_keeps_every_pixel() {
    let events: Vec<PointEvent> = (0..40)
        .map(|i| point(f64::from(i % 8) * 7.0 + 0.5, f64::from(i / 8) * 11.0 + 0.5))
        .collect();
    let c = clip(events);
    let r = augment_global_rotation(&c, 360.0);
    let snap = |e: &PointEvent| e.snap(64, 64);
    assert_eq!(r.events.iter().map(snap).collect::<Vec<_>>(), c.events.iter().map(snap).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn limb_rotation_preserves_pivot_distance(s in 0.05f64..0.95, theta in -89.0f64..89.0) {
        let spec = SkeletonSpec::human();
        let c = clip(vec![on_lower_leg(s)]);
        let knee = c.poses[0].joints[L_KNEE];
        let r = augment_limb_rotation(&c, &spec, L_KNEE, theta).unwrap();
        prop_assume!(!r.events.is_empty());
        let d0 = (c.events[0].x - knee[0]).hypot(c.events[0].y - knee[1]);
        let d1 = (r.events[0].x - knee[0]).hypot(r.events[0].y - knee[1]);
        prop_assert!((d0 - d1).abs() < 1e-12);
    }

    #[test]
    fn rotating_back_recovers_events(s in 0.1f64..0.9, theta in -80.0f64..80.0) {
        let spec = SkeletonSpec::human();
        let c = clip(vec![on_lower_leg(s), on_thigh(s)]);
        let there = augment_limb_rotation(&c, &spec, L_KNEE, theta).unwrap();
        let back = augment_limb_rotation(&there, &spec, L_KNEE, -theta).unwrap();
        prop_assert_eq!(back.events.len(), 2);
        for (a, b) in back.events.iter().zip(&c.events) {
            prop_assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        }
        for (a, b) in back.poses[0].joints.iter().zip(&c.poses[0].joints) {
            prop_assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_labels_stay_in_the_rotated_box(theta in -30.0f64..30.0) {
        let c = clip(vec![]);
        let r = augment_global_rotation(&c, theta);
        let bb = c.poses[0].visible_bbox().unwrap();
        let corners = [[bb[0], bb[1]], [bb[2], bb[1]], [bb[0], bb[3]], [bb[2], bb[3]]];
        let centre = [32.0, 32.0];
        let rc: Vec<[f64; 2]> = corners.iter().map(|&p| rotate_point(p, centre, theta)).collect();
        let lo = [rc.iter().map(|p| p[0]).fold(f64::MAX, f64::min), rc.iter().map(|p| p[1]).fold(f64::MAX, f64::min)];
        let hi = [rc.iter().map(|p| p[0]).fold(f64::MIN, f64::max), rc.iter().map(|p| p[1]).fold(f64::MIN, f64::max)];
        let rb = r.poses[0].visible_bbox().unwrap();
        prop_assert!(rb[0] >= lo[0] - 1.0 && rb[1] >= lo[1] - 1.0);
        prop_assert!(rb[2] <= hi[0] + 1.0 && rb[3] <= hi[1] + 1.0);
    }

    #[test]
    fn centre_of_rotation_is_fixed(x in -50.0f64..50.0, y in -50.0f64..50.0, theta in -360.0f64..360.0) {
        prop_assert_eq!(rotate_point([x, y], [x, y], theta), [x, y]);
    }
}
