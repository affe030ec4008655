use helmprop::medium_grid::{GridSpec, PmlProfile};
use helmprop::quadtree::*;

fn tree(n_levels: usize, block: usize, w: usize) -> Tree {
    let n = (block << n_levels) + 2 * w;
    let grid = GridSpec::new(n, n, 1.0, 1.0, [0.0, 0.0]).unwrap();
    let p = PmlProfile::new(w, 0, 40.0, 0.5, [1.0, 1.0]).unwrap();
    build_tree(&grid, n_levels, block, p).unwrap()
}

#[test]
fn block_counts_and_parents() {
    let t = tree(2, 12, 4);
    assert_eq!(t.level_blocks(0).len(), 16);
    assert_eq!(t.level_blocks(1).len(), 4);
    assert_eq!(t.level_blocks(2).len(), 1);
    assert_eq!(t.blocks.len(), 21);
    assert_eq!(t.root(), t.level_blocks(2)[0]);
    for &id in t.level_blocks(0) {
        let b = t.block(id);
        let p = t.block(b.parent.unwrap());
        assert_eq!((p.i, p.j, p.level), (b.i / 2, b.j / 2, 1));
        assert!(p.children.contains(&id));
        assert!(p.extent.interior.contains(b.extent.interior.x0, b.extent.interior.y0));
        assert_eq!(t.ancestors(id).len(), 2);
    }
    assert_eq!(t.n_total(), 4 * 12 + 8);
}

#[test]
fn leaves_partition_the_interior() {
    let t = tree(2, 10, 3);
    let mut cells = 0;
    for &id in t.level_blocks(0) {
        let r = t.block(id).extent.interior;
        cells += (r.x1 - r.x0) * (r.y1 - r.y0);
    }
    let i = t.interior;
    assert_eq!(cells, (i.x1 - i.x0) * (i.y1 - i.y0));
}

#[test]
fn skeleton_has_no_duplicates_and_stays_off_open_interior() {
    let t = tree(2, 12, 4);
    for b in &t.blocks {
        assert_eq!(b.skeleton.len(), b.skeleton_index.len());
        let int = b.extent.interior;
        for &(x, y) in &b.skeleton {
            assert!(!(x > int.x0 && x < int.x1 && y > int.y0 && y < int.y1));
            assert!(t.lines_x.contains(&x) || t.lines_y.contains(&y));
            assert!(b.extent.extended.is_unknown(x, y));
        }
    }
    // root skeleton is only the line segments crossing its PML band
    let root = t.block(t.root());
    let int = root.extent.interior;
    assert!(root.skeleton.iter().all(|&(x, y)| x < int.x0 || x > int.x1 || y < int.y0 || y > int.y1 || x == int.x0 || x == int.x1 || y == int.y0 || y == int.y1));
}

#[test]
fn channels_point_at_sender_skeletons() {
    let t = tree(2, 12, 4);
    for b in &t.blocks {
        let mut offset = 0;
        for c in &b.channels {
            assert_eq!(c.offset, offset);
            offset += c.len();
            let s = t.block(c.sender);
            assert!(c.nodes.iter().all(|n| s.skeleton_index.contains_key(n)));
            assert_eq!(t.block(c.anchor).parent, Some(c.parent));
            assert_eq!(s.parent, Some(c.parent));
        }
        assert_eq!(b.n_incident, offset);
    }
    assert!(t.block(t.root()).channels.is_empty());
    // a corner leaf hears only its siblings; level-1 transfer regions stop short of it
    let corner = t.block(t.id(0, 0, 0).unwrap());
    let kinds: Vec<_> = corner.channels.iter().map(|c| c.kind).collect();
    assert_eq!(kinds.iter().filter(|k| **k == ChannelKind::Diagonal).count(), 1);
    assert_eq!(corner.channels.len(), 3);
    // the leaf at the root's cross centre also hears the three other level-1 blocks
    let inner = t.block(t.id(0, 1, 1).unwrap());
    assert_eq!(inner.channels.len(), 6);
    assert_eq!(inner.channels.iter().filter(|c| c.anchor != inner.id).count(), 3);
}

#[test]
fn routing_is_symmetric_and_respects_diagonal_flag() {
    let t = tree(1, 16, 4);
    let root = t.root();
    let with = sibling_routing(&t, root, true);
    let without = sibling_routing(&t, root, false);
    assert_eq!(with.routes.len(), 12);
    assert_eq!(without.routes.len(), 8);
    assert!(without.routes.iter().all(|r| r.kind != ChannelKind::Diagonal));
    for r in &with.routes {
        let back = with
            .routes
            .iter()
            .find(|q| q.sender == r.receiver && q.receiver == r.sender)
            .unwrap();
        assert_eq!(back.kind, r.kind);
        assert_eq!(back.pairs.len(), r.pairs.len());
        let s = t.block(r.sender);
        let ch = t.block(r.receiver).channel_from(r.sender).unwrap();
        for &(si, ri) in &r.pairs {
            assert_eq!(s.skeleton[si], ch.nodes[ri - ch.offset]);
        }
    }
    assert_eq!(sibling_routing(&t, root, true), with);
}

#[test]
fn owner_child_ties_and_bounds() {
    let t = tree(1, 16, 4);
    let root = t.root();
    let c = t.block(root).cross;
    let (cx, cy) = (c[0].unwrap(), c[1].unwrap());
    // on the cross centre both ties go to the lower quadrant
    assert_eq!(owner_child(&t, root, (cx, cy)).unwrap(), t.id(0, 0, 0).unwrap());
    assert_eq!(owner_child(&t, root, (cx + 1, cy)).unwrap(), t.id(0, 1, 0).unwrap());
    assert_eq!(owner_child(&t, root, (cx, cy + 1)).unwrap(), t.id(0, 0, 1).unwrap());
    // PML band goes to the nearest child
    assert_eq!(owner_child(&t, root, (1, 1)).unwrap(), t.id(0, 0, 0).unwrap());
    assert!(owner_child(&t, root, (t.n_total() + 1, 0)).is_err());
    let leaf = t.id(0, 0, 0).unwrap();
    assert!(owner_child(&t, leaf, (5, 5)).is_err());
    assert_eq!(leaf_owner(&t, (cx + 3, cy + 3)).unwrap(), t.id(0, 1, 1).unwrap());
}

#[test]
fn bad_layouts_are_rejected() {
    let p = PmlProfile::new(4, 0, 40.0, 0.5, [1.0, 1.0]).unwrap();
    let g = |nx, ny| GridSpec::new(nx, ny, 1.0, 1.0, [0.0, 0.0]).unwrap();
    assert!(build_tree(&g(40, 32), 1, 16, p).is_err());
    assert!(build_tree(&g(41, 41), 1, 16, p).is_err());
    assert!(build_tree(&g(8, 8), 1, 4, p).is_err());
    assert!(build_tree(&g(40, 40), 1, 0, p).is_err());
    // interior-only grid is padded with the PML band
    let t = build_tree(&g(32, 32), 1, 16, p).unwrap();
    assert_eq!(t.model_offset, 4);
    let t = build_tree(&g(40, 40), 1, 16, p).unwrap();
    assert_eq!(t.model_offset, 0);
    assert!(build_two_subdomain(&g(41, 41), p).is_err());
}

#[test]
fn two_subdomain_layout() {
    let p = PmlProfile::new(4, 0, 40.0, 0.5, [1.0, 1.0]).unwrap();
    let g = GridSpec::new(40, 40, 1.0, 1.0, [0.0, 0.0]).unwrap();
    let t = build_two_subdomain(&g, p).unwrap();
    assert_eq!(t.blocks.len(), 3);
    assert_eq!(t.lines_y, vec![20]);
    let lower = t.block(0);
    let upper = t.block(1);
    assert_eq!(lower.channels.len(), 1);
    assert_eq!(upper.channels[0].sender, 0);
    assert_eq!(upper.channels[0].kind, ChannelKind::Vertical);
}
