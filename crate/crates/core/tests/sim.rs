use std::collections::BTreeMap;

use cotransport::command::{point_in_polygon, signed_area2};
use cotransport::harness::ScenarioConfig;
use cotransport::sim::{angle_diff, integrate_unicycle, step_world, Pose, RobotId, Twist, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Winding number of `poly` around `p`, summed from signed angles.
fn winding(p: Vec2, poly: &[Vec2]) -> i32 {
    let mut total = 0.0;
    for i in 0..poly.len() {
        let a = poly[i] - p;
        let b = poly[(i + 1) % poly.len()] - p;
        total += a.cross(b).atan2(a.dot(b));
    }
    (total / std::f64::consts::TAU).round() as i32
}

fn on_boundary(p: Vec2, poly: &[Vec2]) -> bool {
    (0..poly.len()).any(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let ab = b - a;
        let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
        (a + ab * t).distance(p) < 1e-9
    })
}

fn l_shape() -> Vec<Vec2> {
    [
        (0.0, 0.0),
        (2.0, 0.0),
        (2.0, 1.0),
        (1.0, 1.0),
        (1.0, 2.0),
        (0.0, 2.0),
    ]
    .iter()
    .map(|&(x, y)| Vec2::new(x, y))
    .collect()
}

#[test]
fn l_shape_matches_winding_oracle_on_a_grid() {
    let poly = l_shape();
    assert!(
        !point_in_polygon(Vec2::new(1.5, 1.5), &poly),
        "concavity is outside"
    );
    let mut probes = 0;
    for i in 0..=60 {
        for j in 0..=60 {
            let p = Vec2::new(
                -0.5 + 0.05 * i as f64 + 0.0013,
                -0.5 + 0.05 * j as f64 + 0.0007,
            );
            if on_boundary(p, &poly) {
                continue;
            }
            assert_eq!(point_in_polygon(p, &poly), winding(p, &poly) != 0, "{p:?}");
            probes += 1;
        }
    }
    assert!(probes > 3000);
    // Clockwise order selects the same points.
    let rev: Vec<Vec2> = poly.iter().rev().copied().collect();
    assert!(point_in_polygon(Vec2::new(0.5, 1.5), &rev));
    assert!(!point_in_polygon(Vec2::new(1.5, 1.5), &rev));
}

#[test]
fn boundary_points_count_as_inside() {
    let poly = l_shape();
    for p in [
        (0.0, 0.0),
        (1.0, 0.0),
        (2.0, 0.5),
        (1.5, 1.0),
        (1.0, 1.5),
        (0.0, 1.0),
        (1.0, 1.0),
    ] {
        assert!(point_in_polygon(Vec2::new(p.0, p.1), &poly), "{p:?}");
    }
}

#[test]
fn zero_area_polygon_selects_nothing() {
    let line = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(2.0, 2.0),
    ];
    assert_eq!(signed_area2(&line), 0.0);
    assert!(!point_in_polygon(Vec2::new(1.0, 1.0), &line));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn star_polygons_match_winding_oracle(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(3..12);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let poly: Vec<Vec2> = angles
            .iter()
            .map(|a| Vec2::from_angle(*a) * rng.gen_range(0.2..1.5))
            .collect();
        prop_assume!(signed_area2(&poly).abs() > 1e-6);
        for _ in 0..200 {
            let p = Vec2::new(rng.gen_range(-1.6..1.6), rng.gen_range(-1.6..1.6));
            if on_boundary(p, &poly) {
                continue;
            }
            prop_assert_eq!(point_in_polygon(p, &poly), winding(p, &poly) != 0, "{:?} in {:?}", p, poly);
        }
    }

    #[test]
    fn two_half_steps_equal_one_step(
        x in -2.0..2.0f64, y in -2.0..2.0f64, th in -3.1..3.1f64,
        v in -0.2..0.2f64, w in -1.5..1.5f64, dt in 0.01..0.5f64,
    ) {
        let p = Pose::new(x, y, th);
        let t = Twist::new(v, w);
        let once = integrate_unicycle(p, t, dt);
        let twice = integrate_unicycle(integrate_unicycle(p, t, dt / 2.0), t, dt / 2.0);
        prop_assert!((once.x - twice.x).abs() <= 1e-12);
        prop_assert!((once.y - twice.y).abs() <= 1e-12);
        prop_assert!(angle_diff(once.theta, twice.theta).abs() <= 1e-12);
    }
}

#[test]
fn containment_fault_freeze_and_determinism() {
    let cfg = ScenarioConfig::default_scenario();
    let sim = cfg.sim;
    let mut world = cfg.world();
    world.robot_mut(RobotId(5)).unwrap().fault = true;
    let frozen = world.robot(RobotId(5)).unwrap().pose;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let motions = BTreeMap::new();
    for _ in 0..3000 {
        let cmds: BTreeMap<RobotId, Twist> = world
            .robots
            .iter()
            .map(|r| {
                (
                    r.id,
                    Twist::new(rng.gen_range(-0.2..0.2), rng.gen_range(-1.5..1.5)),
                )
            })
            .collect();
        let next = step_world(&world, &cmds, &motions, sim.dt, &sim).unwrap();
        let again = step_world(&world, &cmds, &motions, sim.dt, &sim).unwrap();
        assert_eq!(next, again);
        world = next;
        let a = world.arena;
        for r in &world.robots {
            let p = r.position();
            assert!(
                p.x >= a.min_x + r.radius - 1e-12
                    && p.x <= a.max_x - r.radius + 1e-12
                    && p.y >= a.min_y + r.radius - 1e-12
                    && p.y <= a.max_y - r.radius + 1e-12,
                "{} at {p:?}",
                r.id
            );
        }
        assert_eq!(world.robot(RobotId(5)).unwrap().pose, frozen);
    }
}

#[test]
fn zero_input_is_a_fixpoint() {
    let cfg = ScenarioConfig::default_scenario();
    let sim = cfg.sim;
    let world = cfg.world();
    let cmds: BTreeMap<RobotId, Twist> = world.robots.iter().map(|r| (r.id, Twist::ZERO)).collect();
    let next = step_world(&world, &cmds, &BTreeMap::new(), sim.dt, &sim).unwrap();
    for (a, b) in world.robots.iter().zip(&next.robots) {
        assert_eq!(a.pose, b.pose);
    }
    for (a, b) in world.objects.iter().zip(&next.objects) {
        assert_eq!(a.pose, b.pose);
    }
}
