//! Block hierarchy, skeleton node sets and the channel layout of incident traces.
//!
//! A block's incident trace is split into channels, one per sender: every sibling
//! of the block and every sibling of each of its ancestors whose transfer region
//! reaches the block. A channel holds the sender's field on the grid-line nodes of
//! a small data rectangle next to the shared line. The field skeleton of a block
//! is every grid-line node of its extended extent outside its open interior.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::medium_grid::{BlockExtent, GridSpec, Node, PmlProfile, Rect, Stretch};

pub type BlockId = usize;

const NEG_INF: i64 = i64::MIN / 4;
const POS_INF: i64 = i64::MAX / 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    /// sender beside the receiver's ancestor (shared vertical line)
    Horizontal,
    /// sender above or below (shared horizontal line)
    Vertical,
    /// sender across the parent's cross centre
    Diagonal,
}

/// Which transfer-source stencil terms of a sender belong to one receiver.
///
/// Coordinates are doubled so edge midpoints are integers.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignRule {
    pub cross: [Option<usize>; 2],
    pub sender_q: [usize; 2],
    pub anchor_q: [usize; 2],
    pub box_lo: [i64; 2],
    pub box_hi: [i64; 2],
}

impl AssignRule {
    fn side(m2: i64, cross: Option<usize>, s: usize, a: usize) -> usize {
        match cross {
            None => a,
            Some(c) => {
                let c2 = 2 * c as i64;
                if m2 < c2 {
                    0
                } else if m2 > c2 {
                    1
                } else {
                    1 - s
                }
            }
        }
    }

    /// Whether the node or edge midpoint at doubled coordinates belongs to the receiver.
    #[inline]
    pub fn owns(&self, mx2: i64, my2: i64) -> bool {
        Self::side(mx2, self.cross[0], self.sender_q[0], self.anchor_q[0]) == self.anchor_q[0]
            && Self::side(my2, self.cross[1], self.sender_q[1], self.anchor_q[1]) == self.anchor_q[1]
            && self.box_lo[0] <= mx2
            && mx2 < self.box_hi[0]
            && self.box_lo[1] <= my2
            && my2 < self.box_hi[1]
    }
}

#[derive(Clone, Debug)]
pub struct Channel {
    pub sender: BlockId,
    /// the receiver itself or its ancestor that is the sender's sibling
    pub anchor: BlockId,
    /// common parent of sender and anchor
    pub parent: BlockId,
    pub kind: ChannelKind,
    /// data rectangle inside the sender's extent
    pub rect: Rect,
    /// split coordinates (ends included) cutting `rect` into Dirichlet cells
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    pub nodes: Vec<Node>,
    /// start of this channel inside the receiver's incident vector
    pub offset: usize,
    pub rule: AssignRule,
}

impl Channel {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.nodes.len()
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub id: BlockId,
    pub level: usize,
    pub i: usize,
    pub j: usize,
    pub extent: BlockExtent,
    pub stretch: Stretch,
    pub skeleton: Vec<Node>,
    pub skeleton_index: HashMap<Node, usize>,
    /// own subdivision lines (x, y); `None` along an axis that is not split
    pub cross: [Option<usize>; 2],
    pub parent: Option<BlockId>,
    pub children: Vec<BlockId>,
    pub quadrant: [usize; 2],
    pub channels: Vec<Channel>,
    pub channel_of: HashMap<BlockId, usize>,
    pub n_incident: usize,
}

impl Block {
    pub fn label(&self) -> String {
        format!("({}, {}, {})", self.i, self.j, self.level)
    }

    pub fn channel_from(&self, sender: BlockId) -> Option<&Channel> {
        self.channel_of.get(&sender).map(|&c| &self.channels[c])
    }
}

#[derive(Clone, Debug)]
pub struct Tree {
    pub n_levels: usize,
    pub block_cells: usize,
    pub margin: usize,
    pub profile: PmlProfile,
    pub hx: f64,
    pub hy: f64,
    /// solver node `g` maps to model node `g - model_offset`
    pub model_offset: usize,
    pub root_rect: Rect,
    pub interior: Rect,
    pub lines_x: Vec<usize>,
    pub lines_y: Vec<usize>,
    pub blocks: Vec<Block>,
    /// block ids per level, ordered (i ascending, then j)
    pub levels: Vec<Vec<BlockId>>,
}

/// One directed exchange between siblings.
#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub sender: BlockId,
    pub receiver: BlockId,
    pub kind: ChannelKind,
    /// (sender skeleton index, receiver incident index)
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingTable {
    pub parent: BlockId,
    pub routes: Vec<Route>,
}

impl Tree {
    pub fn root(&self) -> BlockId {
        self.blocks.len() - 1
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id]
    }

    /// Block `(i, j)` on `level`, zero-based.
    pub fn id(&self, level: usize, i: usize, j: usize) -> Option<BlockId> {
        self.levels
            .get(level)?
            .iter()
            .copied()
            .find(|&b| self.blocks[b].i == i && self.blocks[b].j == j)
    }

    pub fn level_blocks(&self, level: usize) -> &[BlockId] {
        self.levels.get(level).map_or(&[], |v| v.as_slice())
    }

    pub fn n_total(&self) -> usize {
        self.root_rect.x1
    }

    fn is_line_x(&self, x: usize) -> bool {
        self.lines_x.binary_search(&x).is_ok()
    }

    pub fn ancestors(&self, id: BlockId) -> Vec<BlockId> {
        let mut out = Vec::new();
        let mut cur = self.blocks[id].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.blocks[p].parent;
        }
        out
    }
}

fn check_layout(
    grid: &GridSpec,
    n_interior: usize,
    margin: usize,
    block_cells: usize,
) -> Result<usize> {
    if grid.nx != grid.ny {
        return Err(Error::Grid(format!(
            "grid must be square, got {}x{} cells",
            grid.nx, grid.ny
        )));
    }
    if block_cells <= margin {
        return Err(Error::Grid(format!(
            "block_cells {block_cells} must exceed the overlap margin {margin}"
        )));
    }
    if grid.nx == n_interior + 2 * margin {
        Ok(0)
    } else if grid.nx == n_interior {
        Ok(margin)
    } else {
        Err(Error::Grid(format!(
            "grid has {} cells per side; layout needs {} (interior) or {} (interior plus PML)",
            grid.nx,
            n_interior,
            n_interior + 2 * margin
        )))
    }
}

/// Quadtree with `n_levels` subdivisions (level 0 = leaves) over a square grid.
pub fn build_tree(
    grid: &GridSpec,
    n_levels: usize,
    block_cells: usize,
    profile: PmlProfile,
) -> Result<Tree> {
    if block_cells == 0 {
        return Err(Error::Grid("block_cells must be positive".into()));
    }
    if n_levels > 12 {
        return Err(Error::Grid(format!("n_levels {n_levels} is unreasonably deep")));
    }
    let margin = profile.margin();
    let n = block_cells << n_levels;
    let model_offset = check_layout(grid, n, margin, block_cells)?;
    let nt = n + 2 * margin;
    let root_rect = Rect::new(0, nt, 0, nt);
    let lines: Vec<usize> = (1..(1usize << n_levels))
        .map(|k| margin + k * block_cells)
        .collect();
    let mut level_start = Vec::new();
    let mut level_width = Vec::new();
    let mut blocks = Vec::new();
    for level in 0..=n_levels {
        let w = 1usize << (n_levels - level);
        let size = block_cells << level;
        level_start.push(blocks.len());
        level_width.push(w);
        for j in 0..w {
            for i in 0..w {
                let interior = Rect::new(
                    margin + i * size,
                    margin + (i + 1) * size,
                    margin + j * size,
                    margin + (j + 1) * size,
                );
                let cross = if level > 0 {
                    [Some(interior.x0 + size / 2), Some(interior.y0 + size / 2)]
                } else {
                    [None, None]
                };
                blocks.push(new_block(blocks.len(), level, i, j, interior, margin, root_rect, &profile, cross, [i % 2, j % 2]));
            }
        }
    }
    for level in 0..n_levels {
        let w = level_width[level];
        for j in 0..w {
            for i in 0..w {
                let id = level_start[level] + i + w * j;
                let pw = level_width[level + 1];
                let pid = level_start[level + 1] + i / 2 + pw * (j / 2);
                blocks[id].parent = Some(pid);
            }
        }
    }
    for level in 1..=n_levels {
        let w = level_width[level];
        let cw = level_width[level - 1];
        for j in 0..w {
            for i in 0..w {
                let id = level_start[level] + i + w * j;
                let mut kids = Vec::with_capacity(4);
                for ci in [2 * i, 2 * i + 1] {
                    for cj in [2 * j, 2 * j + 1] {
                        kids.push(level_start[level - 1] + ci + cw * cj);
                    }
                }
                blocks[id].children = kids;
            }
        }
    }
    let mut tree = Tree {
        n_levels,
        block_cells,
        margin,
        profile,
        hx: grid.hx,
        hy: grid.hy,
        model_offset,
        root_rect,
        interior: Rect::new(margin, margin + n, margin, margin + n),
        lines_x: lines.clone(),
        lines_y: lines,
        blocks,
        levels: (0..=n_levels)
            .map(|l| {
                let (w, start) = (level_width[l], level_start[l]);
                (0..w)
                    .flat_map(|i| (0..w).map(move |j| start + i + w * j))
                    .collect()
            })
            .collect(),
    };
    finish(&mut tree)?;
    Ok(tree)
}

/// Root split into a lower and an upper half (the two-subdomain layout).
pub fn build_two_subdomain(grid: &GridSpec, profile: PmlProfile) -> Result<Tree> {
    let margin = profile.margin();
    if grid.nx != grid.ny || grid.nx <= 2 * margin || !(grid.nx - 2 * margin).is_multiple_of(2) {
        return Err(Error::Grid(format!(
            "two-subdomain layout needs a square grid with an even interior, got {}x{}",
            grid.nx, grid.ny
        )));
    }
    let n = grid.nx - 2 * margin;
    if n / 2 <= margin {
        return Err(Error::Grid("halves must be wider than the overlap margin".into()));
    }
    let nt = grid.nx;
    let root_rect = Rect::new(0, nt, 0, nt);
    let cy = margin + n / 2;
    let interior = Rect::new(margin, margin + n, margin, margin + n);
    let lower = Rect::new(margin, margin + n, margin, cy);
    let upper = Rect::new(margin, margin + n, cy, margin + n);
    let mut blocks = vec![
        new_block(0, 0, 0, 0, lower, margin, root_rect, &profile, [None, None], [0, 0]),
        new_block(1, 0, 0, 1, upper, margin, root_rect, &profile, [None, None], [0, 1]),
        new_block(2, 1, 0, 0, interior, margin, root_rect, &profile, [None, Some(cy)], [0, 0]),
    ];
    blocks[0].parent = Some(2);
    blocks[1].parent = Some(2);
    blocks[2].children = vec![0, 1];
    let mut tree = Tree {
        n_levels: 1,
        block_cells: n,
        margin,
        profile,
        hx: grid.hx,
        hy: grid.hy,
        model_offset: 0,
        root_rect,
        interior,
        lines_x: Vec::new(),
        lines_y: vec![cy],
        blocks,
        levels: vec![vec![0, 1], vec![2]],
    };
    finish(&mut tree)?;
    Ok(tree)
}

#[allow(clippy::too_many_arguments)]
fn new_block(
    id: BlockId,
    level: usize,
    i: usize,
    j: usize,
    interior: Rect,
    margin: usize,
    root: Rect,
    profile: &PmlProfile,
    cross: [Option<usize>; 2],
    quadrant: [usize; 2],
) -> Block {
    let extent = BlockExtent::new(interior, margin, root);
    Block {
        id,
        level,
        i,
        j,
        stretch: Stretch::new(&extent, profile),
        extent,
        skeleton: Vec::new(),
        skeleton_index: HashMap::new(),
        cross,
        parent: None,
        children: Vec::new(),
        quadrant,
        channels: Vec::new(),
        channel_of: HashMap::new(),
        n_incident: 0,
    }
}

fn finish(tree: &mut Tree) -> Result<()> {
    for id in 0..tree.blocks.len() {
        let sk = skeleton_nodes(tree, id);
        let b = &mut tree.blocks[id];
        b.skeleton_index = sk.iter().enumerate().map(|(k, p)| (*p, k)).collect();
        b.skeleton = sk;
    }
    for id in 0..tree.blocks.len() {
        let chans = build_channels(tree, id)?;
        let b = &mut tree.blocks[id];
        b.channel_of = chans.iter().enumerate().map(|(k, c)| (c.sender, k)).collect();
        b.n_incident = chans.iter().map(|c| c.len()).sum();
        b.channels = chans;
    }
    Ok(())
}

/// Grid-line nodes of the block's unknowns outside its open interior.
///
/// Ordered by vertical lines (ascending x, bottom to top), then horizontal lines
/// (ascending y, left to right); a node on two lines appears once, on its vertical line.
pub fn skeleton_nodes(tree: &Tree, id: BlockId) -> Vec<Node> {
    let b = &tree.blocks[id];
    let ext = b.extent.extended;
    let int = b.extent.interior;
    let open = |x: usize, y: usize| x > int.x0 && x < int.x1 && y > int.y0 && y < int.y1;
    let mut out = Vec::new();
    for &x in tree.lines_x.iter().filter(|&&x| x > ext.x0 && x < ext.x1) {
        for y in ext.y0 + 1..ext.y1 {
            if !open(x, y) {
                out.push((x, y));
            }
        }
    }
    for &y in tree.lines_y.iter().filter(|&&y| y > ext.y0 && y < ext.y1) {
        for x in ext.x0 + 1..ext.x1 {
            if !tree.is_line_x(x) && !open(x, y) {
                out.push((x, y));
            }
        }
    }
    out
}

fn axis_range(anchor_q: usize, cross: Option<usize>, lo: usize, hi: usize) -> (usize, usize) {
    match cross {
        None => (lo, hi),
        Some(c) if anchor_q == 1 => (c, hi),
        Some(c) => (lo, c),
    }
}

fn build_channels(tree: &Tree, id: BlockId) -> Result<Vec<Channel>> {
    let b = &tree.blocks[id];
    let mut out: Vec<Channel> = Vec::new();
    let mut anchor = id;
    while let Some(pid) = tree.blocks[anchor].parent {
        let p = &tree.blocks[pid];
        for &sid in &p.children {
            if sid == anchor {
                continue;
            }
            if let Some(mut ch) = make_channel(tree, b, anchor, sid, pid)? {
                ch.offset = out.iter().map(|c| c.len()).sum();
                out.push(ch);
            }
        }
        anchor = pid;
    }
    Ok(out)
}

fn make_channel(
    tree: &Tree,
    b: &Block,
    anchor: BlockId,
    sender: BlockId,
    parent: BlockId,
) -> Result<Option<Channel>> {
    let a = &tree.blocks[anchor];
    let x = &tree.blocks[sender];
    let p = &tree.blocks[parent];
    let xe = x.extent.extended;
    let ai = a.extent.interior;
    let bi = b.extent.interior;
    let xr = axis_range(a.quadrant[0], p.cross[0], xe.x0, xe.x1);
    let yr = axis_range(a.quadrant[1], p.cross[1], xe.y0, xe.y1);
    // the receiver's share of the anchor: open towards the anchor's outer sides
    let lo_x = if bi.x0 == ai.x0 { None } else { Some(bi.x0) };
    let hi_x = if bi.x1 == ai.x1 { None } else { Some(bi.x1) };
    let lo_y = if bi.y0 == ai.y0 { None } else { Some(bi.y0) };
    let hi_y = if bi.y1 == ai.y1 { None } else { Some(bi.y1) };
    let rx = (xr.0.max(lo_x.unwrap_or(0)), xr.1.min(hi_x.unwrap_or(usize::MAX)));
    let ry = (yr.0.max(lo_y.unwrap_or(0)), yr.1.min(hi_y.unwrap_or(usize::MAX)));
    if rx.0 >= rx.1 || ry.0 >= ry.1 {
        return Ok(None);
    }
    let rect = Rect::new(rx.0, rx.1, ry.0, ry.1);
    let mut xs = vec![rx.0];
    xs.extend(tree.lines_x.iter().copied().filter(|&l| l > rx.0 && l < rx.1));
    xs.push(rx.1);
    let mut ys = vec![ry.0];
    ys.extend(tree.lines_y.iter().copied().filter(|&l| l > ry.0 && l < ry.1));
    ys.push(ry.1);
    let mut nodes = Vec::new();
    for yy in ry.0..=ry.1 {
        let on_y = ys.binary_search(&yy).is_ok();
        for xx in rx.0..=rx.1 {
            if (on_y || xs.binary_search(&xx).is_ok()) && xe.is_unknown(xx, yy) {
                nodes.push((xx, yy));
            }
        }
    }
    for n in &nodes {
        if !x.skeleton_index.contains_key(n) {
            return Err(Error::Grid(format!(
                "channel node {n:?} of {} from {} is off the sender skeleton",
                b.label(),
                x.label()
            )));
        }
    }
    let kind = if a.quadrant[1] == x.quadrant[1] {
        ChannelKind::Horizontal
    } else if a.quadrant[0] == x.quadrant[0] {
        ChannelKind::Vertical
    } else {
        ChannelKind::Diagonal
    };
    let rule = AssignRule {
        cross: p.cross,
        sender_q: x.quadrant,
        anchor_q: a.quadrant,
        box_lo: [
            lo_x.map_or(NEG_INF, |v| 2 * v as i64),
            lo_y.map_or(NEG_INF, |v| 2 * v as i64),
        ],
        box_hi: [
            hi_x.map_or(POS_INF, |v| 2 * v as i64),
            hi_y.map_or(POS_INF, |v| 2 * v as i64),
        ],
    };
    Ok(Some(Channel {
        sender,
        anchor,
        parent,
        kind,
        rect,
        xs,
        ys,
        nodes,
        offset: 0,
        rule,
    }))
}

/// Directed sibling exchanges under `parent`, in child order (sender, then receiver).
pub fn sibling_routing(tree: &Tree, parent: BlockId, diagonal_exchange: bool) -> RoutingTable {
    let kids = &tree.blocks[parent].children;
    let mut routes = Vec::new();
    for &s in kids {
        let sb = &tree.blocks[s];
        for &r in kids {
            if r == s {
                continue;
            }
            let Some(ch) = tree.blocks[r].channel_from(s) else {
                continue;
            };
            if ch.kind == ChannelKind::Diagonal && !diagonal_exchange {
                continue;
            }
            let pairs = ch
                .nodes
                .iter()
                .enumerate()
                .map(|(k, n)| (sb.skeleton_index[n], ch.offset + k))
                .collect();
            routes.push(Route {
                sender: s,
                receiver: r,
                kind: ch.kind,
                pairs,
            });
        }
    }
    RoutingTable { parent, routes }
}

/// Child whose closed interior quadrant contains `node`; ties go to the lower index,
/// nodes in the PML band go to the nearest child.
pub fn owner_child(tree: &Tree, parent: BlockId, node: Node) -> Result<BlockId> {
    let p = &tree.blocks[parent];
    if p.children.is_empty() {
        return Err(Error::InvalidArgument(format!("block {} is a leaf", p.label())));
    }
    if !p.extent.extended.contains(node.0, node.1) {
        return Err(Error::InvalidArgument(format!(
            "node {node:?} outside block {}",
            p.label()
        )));
    }
    let side = |v: usize, c: Option<usize>| match c {
        Some(c) if v > c => 1,
        _ => 0,
    };
    let q = [side(node.0, p.cross[0]), side(node.1, p.cross[1])];
    Ok(*p
        .children
        .iter()
        .find(|&&c| tree.blocks[c].quadrant == q)
        .expect("every quadrant has a child"))
}

/// Level-0 block responsible for a source at `node`.
pub fn leaf_owner(tree: &Tree, node: Node) -> Result<BlockId> {
    let mut cur = tree.root();
    while !tree.blocks[cur].children.is_empty() {
        cur = owner_child(tree, cur, node)?;
    }
    Ok(cur)
}
