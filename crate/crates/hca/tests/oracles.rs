//! Worked examples checked against independent oracles.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hca::config::{PlannerConfig, SensorModel};
use hca::distance_field::compute_distance_field;
use hca::geometry::{Aabb, PlanarPose};
use hca::hca_planner::in_collision;
use hca::motion_primitives::{max_speed, Command, JoystickInput, MotionPrimitive, VehicleState};
use hca::occupancy_map::{build_map, voxel_traversal, Keyframe, KeyframeBuffer, LocalMap, VoxelCounts};
use hca::pipeline::{ResolutionMode, Session};
use hca::sim_world::{ground_truth_clearance, render_depth, CameraModel, Scenario, World};

fn rest(p: Vector3<f64>) -> VehicleState {
    VehicleState::at_rest(p, 0.0)
}

fn dense_line_cells(map: &LocalMap, a: &Vector3<f64>, b: &Vector3<f64>) -> BTreeSet<[usize; 3]> {
    let steps = (((b - a).norm() / (map.voxel_size / 100.0)).ceil() as usize).max(1);
    (0..=steps)
        .filter_map(|i| map.world_to_voxel(&(a + (b - a) * (i as f64 / steps as f64))))
        .collect()
}

#[test]
fn traversal_matches_dense_line_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let counts = VoxelCounts { nx: 5, ny: 5, nz: 5 };
    let map = LocalMap::new(1.0, counts, rest(Vector3::zeros()), 0.01);
    let mut checked = 0;
    for _ in 0..200 {
        let mut pt = || Vector3::new(rng.random_range(-2.4..2.4), rng.random_range(-2.4..2.4), rng.random_range(-2.4..2.4));
        let (a, b) = (pt(), pt());
        let dda: Vec<[usize; 3]> = voxel_traversal(&map, &a, &b);
        let dda_set: BTreeSet<[usize; 3]> = dda.iter().copied().collect();
        assert_eq!(dda_set.len(), dda.len(), "no voxel visited twice");
        let dense = dense_line_cells(&map, &a, &b);
        // A dense sampler can step over a corner the segment only grazes; DDA must never miss one it finds.
        assert!(dense.is_subset(&dda_set), "{a:?} -> {b:?}");
        assert!(dda_set.len() - dense.len() <= 1, "{a:?} -> {b:?}");
        if dense == dda_set {
            checked += 1;
        }
        assert_eq!(dda.first(), map.world_to_voxel(&a).as_ref());
        assert_eq!(dda.last(), map.world_to_voxel(&b).as_ref());
    }
    assert!(checked >= 190, "{checked} exact matches");
}

#[test]
fn traversal_clips_to_the_box() {
    let map = LocalMap::new(1.0, VoxelCounts { nx: 5, ny: 5, nz: 5 }, rest(Vector3::zeros()), 0.01);
    let a = Vector3::new(-9.0, 0.3, 0.2);
    let b = Vector3::new(9.0, 0.3, 0.2);
    let cells = voxel_traversal(&map, &a, &b);
    assert_eq!(cells.len(), 5);
    assert!(voxel_traversal(&map, &Vector3::new(-9.0, 9.0, 0.0), &Vector3::new(9.0, 9.0, 0.0)).is_empty());
}

#[test]
fn centered_return_frees_the_ray_and_marks_the_endpoint() {
    let cam = CameraModel { width: 1, height: 1, ..Default::default() };
    let k = cam.intrinsics();
    let img = hca::occupancy_map::DepthImage::filled(1, 1, k, 10.0, 2.0);
    let buf = KeyframeBuffer::new(0.5).update(Keyframe { state: rest(Vector3::zeros()), depth: Arc::new(img), timestamp: 0.0 });
    let sensor = SensorModel { clear_radius: 0.0, ..Default::default() };
    let counts = VoxelCounts { nx: 40, ny: 20, nz: 20 };
    let m = build_map(&buf, 0.5, counts, &sensor, (0.1, 0.5)).unwrap();
    let end = m.world_to_voxel(&Vector3::new(2.0, 0.0, 0.0)).unwrap();
    assert_eq!(m.logodds[counts.flat(end)], 0.85);
    let before: Vec<usize> = (20..end[0]).map(|ix| counts.flat([ix, end[1], end[2]])).collect();
    assert!(before.iter().all(|&f| m.logodds[f] == -0.4));
    let touched = m.logodds.iter().filter(|&&l| l != 0.0).count();
    assert_eq!(touched, before.len() + 1);
}

#[test]
fn single_unsafe_voxel_face_neighbors() {
    let counts = VoxelCounts { nx: 5, ny: 5, nz: 5 };
    let mut m = LocalMap::new(1.0, counts, rest(Vector3::zeros()), 0.01);
    m.logodds.fill(-1.0);
    m.logodds[counts.flat([2, 2, 2])] = 2.0;
    let f = compute_distance_field(&m);
    for nb in [[1, 2, 2], [3, 2, 2], [2, 1, 2], [2, 3, 2], [2, 2, 1], [2, 2, 3]] {
        assert!((f.dist[counts.flat(nb)] - 1.0).abs() < 1e-6);
    }
    assert!((f.query(&Vector3::new(1.2, 0.1, -0.3)) - 1.0).abs() < 1e-6);
    assert_eq!(f.query(&Vector3::new(0.1, 0.1, 0.1)), 0.0);
    assert_eq!(f.query(&Vector3::new(2.6, 0.0, 0.0)), 0.0);
}

#[test]
fn all_free_and_all_unsafe_fields() {
    let counts = VoxelCounts { nx: 4, ny: 3, nz: 2 };
    let mut m = LocalMap::new(0.5, counts, rest(Vector3::zeros()), 0.01);
    assert!(compute_distance_field(&m).dist.iter().all(|&d| d == 0.0));
    m.logodds.fill(-2.0);
    let f = compute_distance_field(&m);
    assert!(f.dist.iter().all(|&d| d == 0.5 * 9.0));
}

/// March along the ray in small steps, then bisect the first entry.
fn ray_march(world: &World, origin: &Vector3<f64>, dir: &Vector3<f64>, max_t: f64) -> Option<f64> {
    let step = 1e-3;
    let inside = |t: f64| world.obstacles.iter().any(|b| b.contains(&(origin + dir * t)));
    let mut t = 0.0;
    while t < max_t {
        let next = t + step;
        if inside(next) {
            let (mut lo, mut hi) = (t, next);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        t = next;
    }
    None
}

#[test]
fn oblique_wall_depths_match_ray_marching() {
    let wall = Aabb::new(Vector3::new(3.0, -4.0, -3.0), Vector3::new(3.3, 4.0, 3.0));
    let world = World { name: "wall".into(), obstacles: vec![wall] };
    let pose = PlanarPose::new(Vector3::new(0.2, -0.4, 0.1), 0.5);
    let cam = CameraModel { width: 40, height: 24, ..Default::default() };
    let img = render_depth(&world, &pose, &cam, None);
    let mut compared = 0;
    for v in (0..cam.height).step_by(3) {
        for u in (0..cam.width).step_by(3) {
            let dir = pose.dir_to_world(&img.ray_dir(u, v));
            let max_t = cam.max_range / dir.norm();
            match ray_march(&world, &pose.position, &dir, max_t) {
                Some(t) => {
                    assert!((img.depth(u, v) - t).abs() < 1e-4, "pixel ({u},{v})");
                    compared += 1;
                }
                None => assert!(img.depth(u, v).is_infinite()),
            }
        }
    }
    assert!(compared > 20);
}

/// Minimum distance to points sampled on every face at `h` spacing.
fn surface_sampling_distance(b: &Aabb, p: &Vector3<f64>, h: f64) -> f64 {
    let mut best = f64::INFINITY;
    for axis in 0..3 {
        let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
        let nu = (b.size()[u] / h).ceil() as usize;
        let nw = (b.size()[w] / h).ceil() as usize;
        for side in [b.min[axis], b.max[axis]] {
            for i in 0..=nu {
                for j in 0..=nw {
                    let mut q = Vector3::zeros();
                    q[axis] = side;
                    q[u] = (b.min[u] + i as f64 * h).min(b.max[u]);
                    q[w] = (b.min[w] + j as f64 * h).min(b.max[w]);
                    best = best.min((q - p).norm());
                }
            }
        }
    }
    best
}

#[test]
fn clearance_matches_surface_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let boxes: Vec<Aabb> = (0..3)
        .map(|i| {
            let c = Vector3::new(i as f64, rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            Aabb::from_center_size(c, Vector3::new(0.2, 0.25, 0.15))
        })
        .collect();
    let world = World { name: "boxes".into(), obstacles: boxes.clone() };
    for _ in 0..20 {
        let p = Vector3::new(rng.random_range(-1.0..3.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let oracle = boxes.iter().map(|b| if b.contains(&p) { 0.0 } else { surface_sampling_distance(b, &p, 1e-3) }).fold(f64::INFINITY, f64::min);
        assert!((ground_truth_clearance(&world, &p) - oracle).abs() < 1e-3, "{p:?}");
    }
}

#[test]
fn wall_ahead_verdict_agrees_with_ground_truth() {
    let cfg = PlannerConfig::default();
    let world = World {
        name: "wall".into(),
        obstacles: vec![Aabb::new(Vector3::new(1.0, -5.0, -5.0), Vector3::new(1.2, 5.0, 5.0))],
    };
    let start = rest(Vector3::zeros());
    let depth = Arc::new(render_depth(&world, &start.pose(), &CameraModel::default(), None));
    let buf = KeyframeBuffer::new(cfg.beta).update(Keyframe { state: start, depth, timestamp: 0.0 });
    let map = build_map(&buf, 0.2, cfg.counts, &cfg.sensor, (cfg.alpha_min, cfg.alpha_max)).unwrap();
    let field = compute_distance_field(&map);
    let hover = MotionPrimitive::hover(start, cfg.sample_dt);
    for (speed, expect) in [(2.0, true), (0.5, false)] {
        let prim = MotionPrimitive::constant(start, Command { v_x: speed, v_z: 0.0, omega: 0.0 }, 1.0, cfg.sample_dt);
        let verdict = in_collision(&prim, &hover, &field, cfg.safety_radius());
        let oracle = prim.samples.iter().any(|(_, s)| ground_truth_clearance(&world, &s.position) < cfg.safety_radius());
        assert_eq!(verdict, expect);
        assert_eq!(verdict, oracle);
    }
}

fn empty_scenario() -> Scenario {
    Scenario {
        world: World { name: "empty".into(), obstacles: vec![] },
        start: rest(Vector3::zeros()),
        camera: CameraModel::default(),
        seed: 0,
        goal_x: f64::INFINITY,
    }
}

#[test]
fn hover_stays_put() {
    let mut s = Session::new(empty_scenario(), &PlannerConfig::default(), ResolutionMode::Adaptive { alpha_min: 0.1, alpha_max: 0.5 }).unwrap();
    for _ in 0..100 {
        let out = s.run_round(&JoystickInput::default()).unwrap();
        assert!(!out.collided);
    }
    assert!(s.position().norm() < 1e-3);
}

#[test]
fn full_forward_reaches_the_speed_bound() {
    let cfg = PlannerConfig::default();
    let mut s = Session::new(empty_scenario(), &cfg, ResolutionMode::Fixed { alpha: 0.5 }).unwrap();
    let mut speed = 0.0;
    for _ in 0..100 {
        let out = s.run_round(&JoystickInput::forward()).unwrap();
        speed = out.segment.last().unwrap().1.speed();
    }
    let mut bound_cfg = cfg.clone();
    bound_cfg.alpha_max = 0.5;
    let bound = max_speed(0.5, &bound_cfg);
    assert!((speed - bound).abs() <= 0.05 * bound, "{speed} vs {bound}");
}

#[test]
fn full_forward_into_a_wall_stops_short() {
    let mut scenario = empty_scenario();
    scenario.world.obstacles.push(Aabb::new(Vector3::new(8.0, -6.0, -6.0), Vector3::new(8.5, 6.0, 6.0)));
    let cfg = PlannerConfig::default();
    let mut s = Session::new(scenario.clone(), &cfg, ResolutionMode::Adaptive { alpha_min: 0.1, alpha_max: 0.5 }).unwrap();
    let mut min_clear = f64::INFINITY;
    for _ in 0..300 {
        let out = s.run_round(&JoystickInput::forward()).unwrap();
        assert!(!out.collided);
        min_clear = min_clear.min(out.min_clearance);
    }
    assert!(min_clear >= cfg.r_robot);
    assert!(s.sim.vehicle.speed() < 1e-9);
    assert!(s.position().x > 5.0);
}
