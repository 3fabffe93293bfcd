use proptest::prelude::*;

use super::*;

fn attr(a: &str, v: &str) -> SectorAttribute {
    SectorAttribute {
        value: AttributeValue::new(a, v, format!("{v} {a}")),
        visible_sectors: (0..SECTORS as u8).collect(),
    }
}

fn instance(id: &str, cat: &str, cells: &[(i32, i32)], target: bool) -> InstanceSpec {
    InstanceSpec {
        id: id.into(),
        category: cat.into(),
        footprint: cells.iter().map(|&(x, y)| Cell::new(x, y)).collect(),
        attributes: vec![attr("color", "blue")],
        is_target: target,
    }
}

fn doc(
    w: usize,
    h: usize,
    cs: f64,
    obstacles: &[(i32, i32)],
    instances: Vec<InstanceSpec>,
    start: (f64, f64, f64),
) -> ScenarioDoc {
    ScenarioDoc {
        id: "t".into(),
        grid: GridDoc {
            width: w,
            height: h,
            cell_size: cs,
            obstacles: obstacles.iter().map(|&(x, y)| Cell::new(x, y)).collect(),
        },
        instances,
        start: StartDoc {
            x: start.0,
            y: start.1,
            heading_deg: start.2,
        },
        horizon: 500,
        success_radius_m: 1.0,
    }
}

#[test]
fn minimal_single_instance_scenario() {
    let d = doc(10, 10, 1.0, &[], vec![instance("c0", "cabinet", &[(5, 5)], true)], (1.5, 1.5, 0.0));
    let s = Scenario::from_doc(d).unwrap();
    assert_eq!(s.same_category().count(), 1);
    assert_eq!(s.same_category().filter(|(_, i)| !i.is_target).count(), 0);
    assert_eq!(s.category(), "cabinet");
}

#[test]
fn rejects_multiple_targets() {
    let d = doc(
        10,
        10,
        1.0,
        &[],
        vec![
            instance("a", "cabinet", &[(5, 5)], true),
            instance("b", "cabinet", &[(7, 7)], true),
        ],
        (1.5, 1.5, 0.0),
    );
    let err = Scenario::from_doc(d).unwrap_err();
    assert_eq!(err.to_string(), "multiple targets");
}

#[test]
fn rejects_bad_documents() {
    let oob = doc(10, 10, 1.0, &[], vec![instance("a", "cabinet", &[(10, 5)], true)], (1.5, 1.5, 0.0));
    assert!(matches!(Scenario::from_doc(oob), Err(WorldError::OutOfBounds(_))));

    let blocked = doc(10, 10, 1.0, &[(1, 1)], vec![instance("a", "cabinet", &[(5, 5)], true)], (1.5, 1.5, 0.0));
    assert!(matches!(Scenario::from_doc(blocked), Err(WorldError::StartBlocked)));

    let none = doc(10, 10, 1.0, &[], vec![instance("a", "cabinet", &[(5, 5)], false)], (1.5, 1.5, 0.0));
    assert!(matches!(Scenario::from_doc(none), Err(WorldError::NoTarget)));

    let heading = doc(10, 10, 1.0, &[], vec![instance("a", "cabinet", &[(5, 5)], true)], (1.5, 1.5, 45.0));
    assert!(matches!(Scenario::from_doc(heading), Err(WorldError::Schema(_))));

    assert!(matches!(Scenario::from_json("{\"grid\": 3}"), Err(WorldError::Schema(_))));
}

#[test]
fn json_round_trip() {
    let d = doc(10, 10, 0.5, &[(0, 0)], vec![instance("a", "cabinet", &[(5, 5), (5, 6)], true)], (1.25, 1.25, 90.0));
    let s = Scenario::from_doc(d).unwrap();
    let back = Scenario::from_json(&s.to_json()).unwrap();
    assert_eq!(s, back);
    assert_eq!(back.start().heading_index, 3);
}

fn open_world() -> Scenario {
    Scenario::from_doc(doc(
        12,
        12,
        1.0,
        &[(3, 1)],
        vec![instance("t", "cabinet", &[(9, 1)], true)],
        (1.5, 1.5, 0.0),
    ))
    .unwrap()
}

#[test]
fn turns_are_exact_inverses() {
    let s = open_world();
    let mut env = Environment::new(&s, 500, DEFAULT_SENSING_RANGE_M);
    let before = env.pose();
    env.step(Action::TurnLeft).unwrap();
    env.step(Action::TurnRight).unwrap();
    assert_eq!(env.pose(), before);
    assert_eq!(env.pose().heading().to_bits(), before.heading().to_bits());
}

#[test]
fn blocked_move_leaves_pose_unchanged() {
    // cell_size 0.25 so one stride crosses exactly one cell.
    let s = Scenario::from_doc(doc(
        8,
        8,
        0.25,
        &[(2, 1)],
        vec![instance("t", "cabinet", &[(6, 6)], true)],
        (0.375, 0.375, 0.0),
    ))
    .unwrap();
    let mut env = Environment::new(&s, 500, DEFAULT_SENSING_RANGE_M);
    let out = env.step(Action::MoveForward).unwrap();
    assert_eq!(out.pose, s.start());
    assert_eq!(env.path_length(), 0.0);
    assert!(out.observation.obstacles.contains(&Cell::new(2, 1)));
    assert_eq!(out.status, EpisodeStatus::Running);
}

#[test]
fn horizon_terminates_episode() {
    let s = open_world();
    let mut env = Environment::new(&s, 500, DEFAULT_SENSING_RANGE_M);
    for i in 0..500 {
        let out = env.step(if i % 2 == 0 { Action::TurnLeft } else { Action::TurnRight }).unwrap();
        if i < 499 {
            assert_eq!(out.status, EpisodeStatus::Running);
        } else {
            assert_eq!(out.status, EpisodeStatus::Horizon);
        }
    }
    assert!(matches!(env.step(Action::TurnLeft), Err(WorldError::Terminated)));
    assert!(!env.succeeded());
}

#[test]
fn sensing_cone() {
    let s = open_world();
    // Instance at (9,1), agent at (6.5, 1.5) facing east: directly ahead.
    let ahead = AgentPose { x: 6.5, y: 1.5, heading_index: 0 };
    let obs = sense(&s, &ahead, 5.0);
    assert_eq!(obs.detections.len(), 1);
    assert_eq!(obs.detections[0].instance, 0);
    assert_eq!(obs.detections[0].sector, 4); // agent is west of the instance

    let north = AgentPose { heading_index: 3, ..ahead };
    assert!(sense(&s, &north, 5.0).detections.is_empty());

    let far = AgentPose { x: 2.5, y: 1.5, heading_index: 0 };
    // (3,1) is a wall cell between agent and instance.
    let obs = sense(&s, &far, 20.0);
    assert!(obs.detections.is_empty());
}

#[test]
fn occluded_instance_behind_wall() {
    // 12x12, wall column x=6 for y in 3..=8; instance at (9,5),(9,6);
    // agent at (2.5, 5.5) facing east. Every ray in the cone between
    // -15 and +15 degrees crosses x=6 within y in [4.56, 6.44].
    let wall: Vec<(i32, i32)> = (3..=8).map(|y| (6, y)).collect();
    let s = Scenario::from_doc(doc(
        12,
        12,
        1.0,
        &wall,
        vec![instance("t", "cabinet", &[(9, 5), (9, 6)], true)],
        (2.5, 5.5, 0.0),
    ))
    .unwrap();
    let obs = sense(&s, &s.start(), 10.0);
    assert!(obs.detections.is_empty());
    for c in [Cell::new(6, 4), Cell::new(6, 5), Cell::new(6, 6)] {
        assert!(obs.obstacles.contains(&c), "{c:?} should be revealed");
    }
    assert!(obs.free.iter().all(|c| c.x < 6));
}

#[test]
fn adjudication_boundaries() {
    let s = open_world(); // target footprint center (9.5, 1.5), r = 1.0
    assert!(adjudicate(&AgentPose { x: 9.0, y: 1.5, heading_index: 0 }, EpisodeStatus::Stopped, &s));
    assert!(adjudicate(&AgentPose { x: 8.5, y: 1.5, heading_index: 0 }, EpisodeStatus::Stopped, &s));
    assert!(!adjudicate(&AgentPose { x: 8.49, y: 1.5, heading_index: 0 }, EpisodeStatus::Stopped, &s));
    assert!(!adjudicate(&AgentPose { x: 9.0, y: 1.5, heading_index: 0 }, EpisodeStatus::Horizon, &s));
}

#[test]
fn shortest_paths() {
    // Corridor y = 0 of width 1 cell; target at x = 6, radius small enough
    // that only the adjacent cell (center 0.25 m away) counts.
    let mut d = doc(8, 3, 0.25, &[], vec![instance("t", "cabinet", &[(6, 0)], true)], (0.125, 0.125, 0.0));
    d.grid.obstacles = (0..8).map(|x| Cell::new(x, 1)).collect();
    d.success_radius_m = 0.25;
    let s = Scenario::from_doc(d).unwrap();
    let l = shortest_path_length(&s, &s.start(), s.target()).unwrap();
    assert!((l - 1.25).abs() < 1e-12, "{l}");

    let s = open_world();
    let near = AgentPose { x: 8.6, y: 1.5, heading_index: 0 };
    assert_eq!(shortest_path_length(&s, &near, s.target()).unwrap(), 0.0);

    let ring = [(8, 0), (8, 1), (8, 2), (9, 2), (10, 2), (10, 1), (10, 0)];
    let walled = Scenario::from_doc(doc(12, 12, 1.0, &ring, vec![instance("t", "cabinet", &[(9, 0)], true)], (1.5, 1.5, 0.0))).unwrap();
    let mut d = walled.doc().clone();
    d.success_radius_m = 0.5;
    let walled = Scenario::from_doc(d).unwrap();
    assert!(matches!(
        shortest_path_length(&walled, &walled.start(), walled.target()),
        Err(WorldError::Unreachable(_))
    ));
}

#[test]
fn sector_quantization() {
    assert_eq!(bearing_sector((0.0, 0.0), (1.0, 0.0)), 0);
    assert_eq!(bearing_sector((0.0, 0.0), (1.0, 1.0)), 1);
    assert_eq!(bearing_sector((0.0, 0.0), (0.0, 1.0)), 2);
    assert_eq!(bearing_sector((0.0, 0.0), (-1.0, 0.0)), 4);
    assert_eq!(bearing_sector((0.0, 0.0), (1.0, -0.1)), 0);
    assert_eq!(bearing_sector((0.0, 0.0), (0.0, -1.0)), 6);
}

fn random_world(seed: u64) -> Scenario {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w = 16;
    let h = 16;
    let mut obstacles = Vec::new();
    for _ in 0..30 {
        let c = (rng.gen_range(0..w), rng.gen_range(0..h));
        if c != (1, 1) && !obstacles.contains(&c) {
            obstacles.push(c);
        }
    }
    let mut instances = Vec::new();
    for k in 0..4 {
        loop {
            let c = (rng.gen_range(0..w), rng.gen_range(0..h));
            let taken = obstacles.contains(&c)
                || c == (1, 1)
                || instances.iter().any(|i: &InstanceSpec| i.footprint.contains(&Cell::new(c.0, c.1)));
            if !taken {
                instances.push(instance(&format!("i{k}"), "cabinet", &[c], k == 0));
                break;
            }
        }
    }
    Scenario::from_doc(doc(w as usize, h as usize, 0.5, &obstacles, instances, (0.75, 0.75, 0.0))).unwrap()
}

fn random_actions(seed: u64, n: usize) -> Vec<Action> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match rng.gen_range(0..4) {
            0 | 1 => Action::MoveForward,
            2 => Action::TurnLeft,
            _ => Action::TurnRight,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identical_actions_give_identical_observations(seed in 0u64..10_000) {
        let s = random_world(seed);
        let acts = random_actions(seed ^ 0xabc, 80);
        let run = || {
            let mut env = Environment::new(&s, 500, 5.0);
            acts.iter().map(|a| env.step(*a).unwrap()).map(|o| (o.pose, o.observation)).collect::<Vec<_>>()
        };
        let a = run();
        let b = run();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.0.x.to_bits(), y.0.x.to_bits());
            prop_assert_eq!(x.0.y.to_bits(), y.0.y.to_bits());
            prop_assert_eq!(&x.1, &y.1);
        }
    }

    #[test]
    fn fov_soundness_and_monotone_map(seed in 0u64..10_000) {
        let s = random_world(seed);
        let mut env = Environment::new(&s, 500, 5.0);
        let mut prev = env.known().clone();
        for a in random_actions(seed, 60) {
            let out = env.step(a).unwrap();
            let p = out.pose;
            for d in &out.observation.detections {
                for c in &d.cells {
                    // Inside the cone: some ray within +-15 degrees reaches c first.
                    let (cx, cy) = s.truth().center(*c);
                    let dist = p.distance_to(cx, cy);
                    prop_assert!(dist <= 5.0 + s.cell_size());
                    let mut reached = false;
                    for off in -15..=15 {
                        let ang = p.heading() + (off as f64).to_radians();
                        let mut first_block = None;
                        s.truth().traverse(p.x, p.y, ang.cos(), ang.sin(), 5.0, |q, _| {
                            if s.occupant(q).is_some() || s.truth().get(q) == CellState::Obstacle {
                                first_block = Some(q);
                                false
                            } else {
                                true
                            }
                        });
                        if first_block == Some(*c) {
                            reached = true;
                        }
                    }
                    prop_assert!(reached, "detected cell {:?} not first-hit by any ray", c);
                    prop_assert_eq!(s.occupant(*c), Some(d.instance));
                }
            }
            for (c, st) in prev.cells() {
                let now = env.known().get(c);
                if st != CellState::Unknown {
                    prop_assert_eq!(st, now);
                }
                // Known map refines ground truth.
                match now {
                    CellState::Free => prop_assert!(s.traversable(c)),
                    CellState::Obstacle => prop_assert!(!s.traversable(c)),
                    CellState::Unknown => {}
                }
            }
            prev = env.known().clone();
        }
    }

    #[test]
    fn adjudicate_matches_brute_force(x in 0.0f64..8.0, y in 0.0f64..8.0, r in 0.0f64..3.0) {
        let s = random_world(7);
        let mut d = s.doc().clone();
        d.success_radius_m = r;
        let s = Scenario::from_doc(d).unwrap();
        let pose = AgentPose { x, y, heading_index: 0 };
        let brute = s.target().footprint.iter().map(|c| {
            let (cx, cy) = s.truth().center(*c);
            ((cx - x).powi(2) + (cy - y).powi(2)).sqrt()
        }).fold(f64::INFINITY, f64::min) <= r;
        prop_assert_eq!(adjudicate(&pose, EpisodeStatus::Stopped, &s), brute);
    }
}
