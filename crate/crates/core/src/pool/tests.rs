use proptest::prelude::*;

use super::*;

fn av(a: &str, v: &str) -> AttributeValue {
    AttributeValue::new(a, v, format!("{v} {a}"))
}

fn cells(pts: &[(i32, i32)]) -> BTreeSet<Cell> {
    pts.iter().map(|&(x, y)| Cell::new(x, y)).collect()
}

fn pose() -> AgentPose {
    AgentPose {
        x: 0.0,
        y: 0.0,
        heading_index: 0,
    }
}

fn det(pts: &[(i32, i32)], sector: u8, revealed: &[AttributeValue]) -> Detection {
    Detection {
        instance: 0,
        category: "cabinet".into(),
        cells: cells(pts).into_iter().collect(),
        sector,
        revealed: revealed.to_vec(),
    }
}

fn view(sector: u8, revealed: &[AttributeValue]) -> View {
    View {
        sector,
        revealed: revealed.to_vec(),
        pose: pose(),
    }
}

#[test]
fn overlap_examples() {
    let a = cells(&[(0, 0), (1, 0), (0, 1), (1, 1)]);
    assert_eq!(overlap_ratio(&a, &a, 0).unwrap(), 1.0);
    let far = cells(&[(10, 10), (11, 10)]);
    assert_eq!(overlap_ratio(&a, &far, 1).unwrap(), 0.0);
    // A 4-cell block inside an 8-cell block: every cell of the smaller one hits.
    let big = cells(&[(0, 0), (1, 0), (2, 0), (3, 0), (0, 1), (1, 1), (2, 1), (3, 1)]);
    assert_eq!(overlap_ratio(&a, &big, 0).unwrap(), 1.0);
    assert_eq!(overlap_ratio(&big, &a, 0).unwrap(), 1.0);
    // Neighboring cells count within the radius.
    let shifted = cells(&[(2, 0), (2, 1)]);
    assert_eq!(overlap_ratio(&a, &shifted, 0).unwrap(), 0.0);
    assert_eq!(overlap_ratio(&a, &shifted, 1).unwrap(), 1.0);
    assert_eq!(overlap_ratio(&a, &BTreeSet::new(), 1), Err(PoolError::EmptyRegion));
}

#[test]
fn epsilon_radius() {
    assert_eq!(epsilon_cells(0.03, 0.5), 1);
    assert_eq!(epsilon_cells(0.03, 0.01), 3);
    assert_eq!(epsilon_cells(0.0, 0.25), 1);
}

#[test]
fn merge_at_threshold() {
    // Ten cells in a row; a detection covering exactly three of them and
    // seven far cells overlaps at 3/10 = 0.30 in both directions.
    let row: Vec<(i32, i32)> = (0..10).map(|x| (x, 0)).collect();
    let mut other: Vec<(i32, i32)> = (0..3).map(|x| (x, 0)).collect();
    other.extend((0..7).map(|x| (x, 50)));
    let mut pool = CandidatePool::new("cabinet", PoolConfig::default(), 100, 0.5);
    assert_eq!(pool.assign_detection(&det(&row, 0, &[]), &pose(), true), Some(0));
    let lone: BTreeSet<Cell> = other.iter().map(|&(x, y)| Cell::new(x, y)).collect();
    let r = overlap_ratio(&pool.candidates[0].region, &lone, 0).unwrap();
    assert!((r - 0.3).abs() < 1e-12, "{r}");

    // Spread cells three apart so the one-cell radius adds nothing.
    let mut pool = CandidatePool::new("cabinet", PoolConfig::default(), 100, 0.5);
    let row: Vec<(i32, i32)> = (0..10).map(|x| (3 * x, 0)).collect();
    let mut other: Vec<(i32, i32)> = (0..3).map(|x| (3 * x, 0)).collect();
    other.extend((0..7).map(|x| (3 * x, 50)));
    pool.assign_detection(&det(&row, 0, &[]), &pose(), true);
    assert_eq!(pool.assign_detection(&det(&other, 1, &[]), &pose(), true), Some(0));
    assert_eq!(pool.len(), 1);

    // Two of ten is below the threshold and seeds a second candidate.
    let mut pool = CandidatePool::new("cabinet", PoolConfig::default(), 100, 0.5);
    let mut other: Vec<(i32, i32)> = (0..2).map(|x| (3 * x, 0)).collect();
    other.extend((0..8).map(|x| (3 * x, 50)));
    pool.assign_detection(&det(&row, 0, &[]), &pose(), true);
    assert_eq!(pool.assign_detection(&det(&other, 1, &[]), &pose(), true), Some(1));
    assert_eq!(pool.assign_detection(&det(&[(90, 90)], 1, &[]), &pose(), false), None);
    assert_eq!(pool.len(), 2);
}

#[test]
fn merge_prefers_highest_overlap() {
    let mut pool = CandidatePool::new("cabinet", PoolConfig::default(), 100, 0.5);
    pool.assign_detection(&det(&[(0, 0), (0, 3), (0, 6)], 0, &[]), &pose(), true);
    pool.assign_detection(&det(&[(9, 0), (9, 3), (9, 6)], 0, &[]), &pose(), true);
    // Two of three cells near candidate 1, one near candidate 0.
    let id = pool.assign_detection(&det(&[(1, 0), (8, 3), (8, 6)], 0, &[]), &pose(), true);
    assert_eq!(id, Some(1));
}

#[test]
fn cluster_examples() {
    let red = av("color", "red");
    let wood = av("material", "wood");
    // Three distinct views with K = 6: all kept.
    let v = vec![view(0, &[red.clone()]), view(2, &[wood.clone()]), view(4, &[])];
    assert_eq!(cluster_views(&v, 6, 50), vec![0, 1, 2]);

    // Eight distinct sectors, K = 6: six representatives.
    let v: Vec<View> = (0..8).map(|s| view(s, &[])).collect();
    let reps = cluster_views(&v, 6, 50);
    assert_eq!(reps.len(), 6);
    assert!(reps.windows(2).all(|w| w[0] < w[1]));

    // Identical views collapse to the first one.
    let v: Vec<View> = (0..9).map(|_| view(3, &[red.clone()])).collect();
    assert_eq!(cluster_views(&v, 6, 50), vec![0]);
    assert!(cluster_views(&[], 6, 50).is_empty());
}

#[test]
fn description_union_and_first_view() {
    let red = av("color", "red");
    let wood = av("material", "wood");
    let tv = av("nearby", "tv");
    let mut pool = CandidatePool::new("cabinet", PoolConfig::default(), 100, 0.5);
    pool.assign_detection(&det(&[(0, 0)], 0, &[red.clone()]), &pose(), true);
    pool.assign_detection(&det(&[(0, 0)], 3, &[wood.clone(), tv.clone()]), &pose(), true);
    let c = pool.get(0).unwrap();
    assert_eq!(
        c.description,
        vec![category_pair("cabinet"), red.clone(), wood.clone(), tv.clone()]
    );
    assert_eq!(c.attributes().count(), 3);
    assert_eq!(c.text, "cabinet; red color; wood material; tv nearby");

    let cfg = PoolConfig {
        use_first_view_only: true,
        ..PoolConfig::default()
    };
    let mut first = CandidatePool::new("cabinet", cfg, 100, 0.5);
    first.assign_detection(&det(&[(0, 0)], 0, &[red.clone()]), &pose(), true);
    first.assign_detection(&det(&[(0, 0)], 3, &[wood, tv]), &pose(), true);
    let f = first.get(0).unwrap();
    assert_eq!(f.description, vec![category_pair("cabinet"), red]);
    assert!(f.description.iter().all(|a| c.description.contains(a)));
}

#[test]
fn ready_examples() {
    let mut pool = CandidatePool::new("cabinet", PoolConfig::default(), 300, 0.5);
    for i in 0..4 {
        pool.assign_detection(&det(&[(10 * i, 0)], 0, &[]), &pose(), true);
    }
    assert!(!pool_ready(&pool, 100));
    assert!(pool_ready(&pool, 300));
    pool.assign_detection(&det(&[(40, 0)], 0, &[]), &pose(), true);
    assert!(pool_ready(&pool, 0));
    let empty = CandidatePool::new("cabinet", PoolConfig::default(), 300, 0.5);
    assert!(!pool_ready(&empty, 299));
}

fn arb_det() -> impl Strategy<Value = Detection> {
    (
        proptest::collection::vec((0i32..12, 0i32..12), 1..6),
        0u8..8,
        proptest::collection::vec((0usize..3, 0usize..2), 0..3),
    )
        .prop_map(|(pts, sector, attrs)| {
            let names = ["color", "material", "nearby"];
            let vals = ["a", "b"];
            let mut seen = BTreeSet::new();
            let revealed: Vec<AttributeValue> = attrs
                .into_iter()
                .filter(|(a, _)| seen.insert(*a))
                .map(|(a, v)| av(names[a], vals[v]))
                .collect();
            det(&pts, sector, &revealed)
        })
}

proptest! {
    #[test]
    fn reassigning_is_idempotent(dets in proptest::collection::vec(arb_det(), 1..12)) {
        let mut pool = CandidatePool::new("cabinet", PoolConfig::default(), 100, 0.5);
        for d in &dets {
            pool.assign_detection(d, &pose(), true);
        }
        let n = pool.len();
        // Repeating a detection never seeds a candidate.
        for d in &dets {
            prop_assert!(pool.assign_detection(d, &pose(), false).is_some());
        }
        prop_assert_eq!(pool.len(), n);
    }

    #[test]
    fn repeated_view_keeps_description(d in arb_det(), times in 1usize..5) {
        let mut pool = CandidatePool::new("cabinet", PoolConfig::default(), 100, 0.5);
        pool.assign_detection(&d, &pose(), true);
        let before = pool.get(0).unwrap().clone();
        for _ in 0..times {
            pool.assign_detection(&d, &pose(), true);
        }
        let after = pool.get(0).unwrap();
        prop_assert_eq!(pool.len(), 1);
        prop_assert_eq!(&before.region, &after.region);
        prop_assert_eq!(&before.description, &after.description);
    }

    #[test]
    fn every_detection_is_covered(dets in proptest::collection::vec(arb_det(), 1..12)) {
        let mut pool = CandidatePool::new("cabinet", PoolConfig::default(), 100, 0.5);
        for d in &dets {
            let id = pool.assign_detection(d, &pose(), true).unwrap();
            let c = pool.get(id).unwrap();
            prop_assert!(d.cells.iter().all(|p| c.region.contains(p)));
        }
        // Descriptions only carry attributes some view revealed.
        for c in &pool.candidates {
            for a in c.attributes() {
                prop_assert!(c.views.iter().any(|v| v.revealed.contains(a)));
            }
            prop_assert!(c.description.contains(&category_pair("cabinet")));
        }
    }
}
