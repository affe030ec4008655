use std::f64::consts::PI;

use helmprop::fast_solver::{padded_grid, setup, SolverConfig};
use helmprop::medium_grid::{GridSpec, Medium, PmlProfile, VelocityModel};
use helmprop::quadtree::{build_tree, Tree};
use helmprop::source_transfer::{apply_g, restrict_field, BlockKit};
use helmprop::trace_engine::*;
use helmprop::C64;

const OMEGA: f64 = 2.0 * PI * 1500.0 / 10.0;

fn tree_and_medium() -> (Tree, Medium) {
    let grid = GridSpec::new(32, 32, 1.0, 1.0, [0.0, 0.0]).unwrap();
    let model = VelocityModel::lens(grid, 2000.0, 1600.0, 0.25).unwrap();
    let p = PmlProfile::new(4, 0, 40.0, OMEGA / model.c_max(), [1.0, 1.0]).unwrap();
    let tree = build_tree(&model.grid, 1, 12, p).unwrap();
    let medium = Medium::new(&model, OMEGA, tree.root_rect, 0).unwrap();
    (tree, medium)
}

fn small_map() -> TraceMap {
    let cols = (0..3)
        .map(|j| (0..2).map(|i| C64::new(i as f64, j as f64)).collect())
        .collect();
    TraceMap::from_columns(7, 2, cols)
}

#[test]
fn leaf_map_columns_are_unit_responses() {
    let (tree, medium) = tree_and_medium();
    let leaf = tree.id(0, 1, 0).unwrap();
    let kit = BlockKit::new(&tree, &medium, leaf).unwrap();
    let map = build_map_level0(&tree, &kit).unwrap();
    let b = tree.block(leaf);
    assert_eq!((map.rows, map.cols), (b.skeleton.len(), b.n_incident));
    for j in [0, b.n_incident / 2, b.n_incident - 1] {
        let mut e = vec![C64::new(0.0, 0.0); b.n_incident];
        e[j] = C64::new(1.0, 0.0);
        let col = restrict_field(&tree, leaf, &apply_g(&tree, &kit, &e).unwrap()).unwrap();
        assert_eq!(map.column(j), &col.values[..]);
    }
}

#[test]
fn apply_map_is_a_matrix_product() {
    let map = small_map();
    let x = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(2.0, -1.0)];
    let y = apply_map(&map, &x).unwrap();
    for (i, yi) in y.iter().enumerate() {
        let want: C64 = (0..3).map(|j| map.column(j)[i] * x[j]).sum();
        assert!((yi - want).norm() < 1e-15);
    }
    assert!(apply_map(&map, &x[..2]).is_err());
}

#[test]
fn parent_map_from_children_matches_direct_map() {
    let config = SolverConfig {
        n_levels: 2,
        block_cells: 8,
        w_pml: 4,
        tol_trace: 1e-10,
        ..Default::default()
    };
    let model = VelocityModel::lens(padded_grid(&config, 1.0).unwrap(), 2000.0, 1600.0, 0.25).unwrap();
    let solver = setup(&model, OMEGA, &config).unwrap();
    for &b in solver.tree.level_blocks(1) {
        let built = solver.map(b).unwrap();
        let direct = solver.direct_map(b).unwrap();
        let diff = built.max_abs_diff(&direct).unwrap();
        assert!(diff <= 1e-7 * direct.max_abs(), "{}: {diff:e}", solver.tree.block(b).label());
    }
    // the root has no incident channels, so its map is empty
    let root = solver.tree.root();
    assert_eq!(solver.map(root).map_or(0, |m| m.cols), 0);
}

#[test]
fn zero_initial_traces_need_no_sweeps() {
    let (tree, medium) = tree_and_medium();
    let root = tree.root();
    let plan = SiblingPlan::new(&tree, root, true).unwrap();
    let maps: Vec<TraceMap> = plan
        .children
        .iter()
        .map(|&c| build_map_level0(&tree, &BlockKit::new(&tree, &medium, c).unwrap()).unwrap())
        .collect();
    let refs: Vec<&TraceMap> = maps.iter().collect();
    let init: Vec<Vec<C64>> = plan
        .children
        .iter()
        .map(|&c| vec![C64::new(0.0, 0.0); tree.block(c).skeleton.len()])
        .collect();
    let st = sibling_iteration(&tree, &plan, &refs, init, 1e-8, 200).unwrap();
    assert_eq!(st.sweeps, 0);
    assert!(st.parent_trace.iter().all(|v| v.norm() == 0.0));
    assert!(sibling_iteration(&tree, &plan, &refs[..2], vec![], 1e-8, 200).is_err());
}

#[test]
fn tmap_round_trip_and_corruption() {
    let map = small_map();
    let bytes = encode_tmap(&map);
    assert_eq!(&bytes[..4], b"TMAP");
    assert_eq!(bytes.len(), 28 + 16 * 6);
    assert_eq!(decode_tmap(&bytes).unwrap(), map);
    assert!(decode_tmap(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_tmap(&bad).is_err());
}

#[test]
fn cache_stores_and_validates_shapes() {
    let (tree, medium) = tree_and_medium();
    let leaf = tree.id(0, 0, 0).unwrap();
    let map = build_map_level0(&tree, &BlockKit::new(&tree, &medium, leaf).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = MapCache::new(dir.path().join("maps"), "abc");
    assert!(cache.load(&tree, leaf).is_none());
    cache.store(&tree, &map).unwrap();
    assert_eq!(cache.load(&tree, leaf).unwrap(), map);
    assert!(dir.path().join("maps/abc_l0_0_0.tmap").exists());
    // a map whose shape no longer fits the block is ignored
    let other = tree.id(0, 1, 1).unwrap();
    let wrong = TraceMap { block: other, ..small_map() };
    cache.store(&tree, &wrong).unwrap();
    assert!(cache.load(&tree, other).is_none());
    assert!(MapCache::new(dir.path().join("maps"), "other").load(&tree, leaf).is_none());
}

#[test]
fn stats_merge() {
    let mut a = IterationStats::default();
    assert_eq!(a.mean_sweeps(), 0.0);
    assert!(a.mean_contraction().is_none());
    let st = IterationState {
        fields: vec![],
        incident_sums: vec![],
        parent_trace: vec![],
        sweeps: 3,
        norms: vec![1.0, 0.1, 0.01, 0.001],
    };
    a.record(&st);
    let mut b = a.clone();
    b.merge(&a);
    assert_eq!((b.runs, b.total_sweeps, b.max_sweeps), (2, 6, 3));
    assert!((b.mean_contraction().unwrap() - 0.1).abs() < 1e-12);
}
