//! Trace extension, transfer sources, the incident-to-field solve and the
//! two-subdomain driver.
//!
//! For a sender block `X` with local field `u` and common parent `P`, the exact
//! discrete transfer source is `L_X u - L_P u` on the sender's ring. It is split
//! among receivers stencil term by stencil term (nodes and edges), so the pieces
//! add up to the whole without double counting. A receiver rebuilds `u` on its
//! data rectangle by Dirichlet solves with the sender's operator, using the
//! sender's field on the grid lines bounding each cell.

use num_complex::Complex64 as C64;

use crate::direct_solver::{factorize, Factorization};
use crate::error::{Error, Result};
use crate::medium_grid::{
    edge_x, edge_y, l2, mass, DiscreteOperator, GridSpec, Medium, NodeField, PmlProfile, Rect,
    VelocityModel,
};
use crate::quadtree::{build_two_subdomain, BlockId, Channel, Tree};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Field trace of one block, ordered like its skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceVector {
    pub block: BlockId,
    pub values: Vec<C64>,
}

/// Sender field rebuilt on a channel's data rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct StripField {
    pub field: NodeField,
}

/// Transfer source on a channel's data rectangle, for one receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferSource {
    pub block: BlockId,
    pub field: NodeField,
}

#[derive(Clone, Debug)]
struct CellSolver {
    rect: Rect,
    op: DiscreteOperator,
    fact: Option<Factorization>,
}

/// One nonzero stencil term of a transfer source, in rectangle node indices.
#[derive(Clone, Copy, Debug)]
enum Term {
    /// `out[p] += c * v[p]`
    Node { p: usize, c: C64 },
    /// `out[p] += c * (v[q] - v[p])`
    Edge { p: usize, q: usize, c: C64 },
}

/// Precomputed extension cells and transfer stencil of one channel.
#[derive(Clone, Debug)]
pub struct ChannelKit {
    cells: Vec<CellSolver>,
    terms: Vec<Term>,
    /// rectangle node -> receiver unknown index
    target: Vec<Option<usize>>,
}

impl ChannelKit {
    pub fn new(tree: &Tree, medium: &Medium, receiver: BlockId, ch: &Channel) -> Result<Self> {
        let sender = tree.block(ch.sender);
        let parent = tree.block(ch.parent);
        let recv = tree.block(receiver);
        let mut cells = Vec::new();
        for wx in ch.xs.windows(2) {
            for wy in ch.ys.windows(2) {
                let rect = Rect::new(wx[0], wx[1], wy[0], wy[1]);
                let op = DiscreteOperator::from_stretch(rect, &sender.stretch, medium)?;
                let fact = if rect.n_unknowns() > 0 {
                    Some(factorize(&op)?)
                } else {
                    None
                };
                cells.push(CellSolver { rect, op, fact });
            }
        }
        let r = ch.rect;
        let xe = sender.extent.extended;
        let pe = parent.extent.extended;
        let (sx, ps) = (&sender.stretch, &parent.stretch);
        let mut terms = Vec::new();
        let mut push = |p: usize, q: Option<usize>, c: C64| {
            if c != ZERO {
                terms.push(match q {
                    None => Term::Node { p, c },
                    Some(q) => Term::Edge { p, q, c },
                });
            }
        };
        let keep = |x: usize, y: usize| pe.is_unknown(x, y);
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                let p = r.node_index(x, y);
                let (x2, y2) = (2 * x as i64, 2 * y as i64);
                if ch.rule.owns(x2, y2) && keep(x, y) {
                    let own = if xe.is_unknown(x, y) { mass(sx, medium, x, y) } else { ZERO };
                    push(p, None, own - mass(ps, medium, x, y));
                }
                if x < r.x1 && ch.rule.owns(x2 + 1, y2) {
                    let cp = edge_x(ps, medium, x, y);
                    let cs = edge_x(sx, medium, x, y);
                    let q = r.node_index(x + 1, y);
                    if keep(x, y) {
                        push(p, Some(q), if xe.is_unknown(x, y) { cs } else { ZERO } - cp);
                    }
                    if keep(x + 1, y) {
                        push(q, Some(p), if xe.is_unknown(x + 1, y) { cs } else { ZERO } - cp);
                    }
                }
                if y < r.y1 && ch.rule.owns(x2, y2 + 1) {
                    let cp = edge_y(ps, medium, x, y);
                    let cs = edge_y(sx, medium, x, y);
                    let q = r.node_index(x, y + 1);
                    if keep(x, y) {
                        push(p, Some(q), if xe.is_unknown(x, y) { cs } else { ZERO } - cp);
                    }
                    if keep(x, y + 1) {
                        push(q, Some(p), if xe.is_unknown(x, y + 1) { cs } else { ZERO } - cp);
                    }
                }
            }
        }
        let re = recv.extent.extended;
        let mut target = vec![None; r.n_nodes()];
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                target[r.node_index(x, y)] = re.unknown_index(x, y);
            }
        }
        for t in &terms {
            let p = match *t {
                Term::Node { p, .. } | Term::Edge { p, .. } => p,
            };
            if target[p].is_none() {
                return Err(Error::Grid(format!(
                    "transfer source from {} lands outside {}",
                    sender.label(),
                    recv.label()
                )));
            }
        }
        Ok(ChannelKit {
            cells,
            terms,
            target,
        })
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }
}

/// Rebuild the sender field on the channel rectangle from its grid-line values.
pub fn extend_trace(kit: &ChannelKit, ch: &Channel, values: &[C64]) -> Result<StripField> {
    if values.len() != ch.len() {
        return Err(Error::Dimension {
            expected: ch.len(),
            got: values.len(),
        });
    }
    let mut field = NodeField::zeros(ch.rect);
    for (n, v) in ch.nodes.iter().zip(values) {
        field.set(n.0, n.1, *v);
    }
    for cell in &kit.cells {
        let Some(fact) = &cell.fact else { continue };
        let r = cell.rect;
        let mut bnd = NodeField::zeros(r);
        let mut any = false;
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                if x == r.x0 || x == r.x1 || y == r.y0 || y == r.y1 {
                    let v = field.get(x, y);
                    any |= v != ZERO;
                    bnd.set(x, y, v);
                }
            }
        }
        if !any {
            continue;
        }
        let rhs = cell.op.dirichlet_rhs(&bnd.values);
        let u = fact.solve(&rhs)?;
        let mut k = 0;
        for y in r.y0 + 1..r.y1 {
            for x in r.x0 + 1..r.x1 {
                field.set(x, y, u[k]);
                k += 1;
            }
        }
    }
    Ok(StripField { field })
}

/// Receiver's share of the sender's transfer source, evaluated on the rebuilt field.
pub fn transfer_source(kit: &ChannelKit, receiver: BlockId, strip: &StripField) -> TransferSource {
    let v = &strip.field.values;
    let mut out = NodeField::zeros(strip.field.rect);
    for t in &kit.terms {
        match *t {
            Term::Node { p, c } => out.values[p] += c * v[p],
            Term::Edge { p, q, c } => out.values[p] += c * (v[q] - v[p]),
        }
    }
    TransferSource {
        block: receiver,
        field: out,
    }
}

/// Operator, factorization and channel kits of one block.
#[derive(Clone, Debug)]
pub struct BlockKit {
    pub block: BlockId,
    pub op: DiscreteOperator,
    pub fact: Factorization,
    pub channels: Vec<ChannelKit>,
}

impl BlockKit {
    pub fn new(tree: &Tree, medium: &Medium, block: BlockId) -> Result<Self> {
        let b = tree.block(block);
        let op = DiscreteOperator::from_stretch(b.extent.extended, &b.stretch, medium)?;
        let fact = factorize(&op)?;
        let channels = b
            .channels
            .iter()
            .map(|ch| ChannelKit::new(tree, medium, block, ch))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockKit {
            block,
            op,
            fact,
            channels,
        })
    }

    /// Sum of transfer sources for an incident vector, on the block's unknowns.
    pub fn incident_rhs(&self, tree: &Tree, incident: &[C64]) -> Result<Vec<C64>> {
        let b = tree.block(self.block);
        if incident.len() != b.n_incident {
            return Err(Error::Dimension {
                expected: b.n_incident,
                got: incident.len(),
            });
        }
        let mut rhs = vec![ZERO; self.op.n_unknowns()];
        for (ch, kit) in b.channels.iter().zip(&self.channels) {
            let data = &incident[ch.range()];
            if data.iter().all(|v| *v == ZERO) {
                continue;
            }
            let strip = extend_trace(kit, ch, data)?;
            let src = transfer_source(kit, self.block, &strip);
            for (k, v) in src.field.values.iter().enumerate() {
                if let Some(t) = kit.target[k] {
                    rhs[t] += *v;
                }
            }
        }
        Ok(rhs)
    }
}

/// Field of a block driven by an incident vector.
pub fn apply_g(tree: &Tree, kit: &BlockKit, incident: &[C64]) -> Result<Vec<C64>> {
    let rhs = kit.incident_rhs(tree, incident)?;
    if rhs.iter().all(|v| *v == ZERO) {
        return Ok(rhs);
    }
    kit.fact.solve(&rhs)
}

/// Sample a block field (unknowns, x fastest) on the block skeleton.
pub fn restrict_field(tree: &Tree, block: BlockId, field: &[C64]) -> Result<TraceVector> {
    let b = tree.block(block);
    let ext = b.extent.extended;
    if field.len() != ext.n_unknowns() {
        return Err(Error::Dimension {
            expected: ext.n_unknowns(),
            got: field.len(),
        });
    }
    let values = b
        .skeleton
        .iter()
        .map(|&(x, y)| field[ext.unknown_index(x, y).expect("skeleton node is an unknown")])
        .collect();
    Ok(TraceVector { block, values })
}

/// Sender field values on a receiver channel, read from the sender's full field.
pub fn channel_data(tree: &Tree, sender: BlockId, field: &[C64], ch: &Channel) -> Vec<C64> {
    let ext = tree.block(sender).extent.extended;
    ch.nodes
        .iter()
        .map(|&(x, y)| field[ext.unknown_index(x, y).expect("channel node is a sender unknown")])
        .collect()
}

/// Restrict a global right-hand side to the unknowns of one block, keeping only
/// nodes the block owns.
pub fn local_source(
    tree: &Tree,
    block: BlockId,
    f: &NodeField,
    owner: impl Fn((usize, usize)) -> BlockId,
) -> Vec<C64> {
    let ext = tree.block(block).extent.extended;
    let mut out = vec![ZERO; ext.n_unknowns()];
    for y in ext.y0 + 1..ext.y1 {
        for x in ext.x0 + 1..ext.x1 {
            if !f.rect.contains(x, y) {
                continue;
            }
            let v = f.get(x, y);
            if v != ZERO && owner((x, y)) == block {
                out[ext.unknown_index(x, y).unwrap()] = v;
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct TwoSubdomainResult {
    pub u: NodeField,
    /// field-trace norms (lower, upper) per sweep, sweep 0 = local solves
    pub history: Vec<[f64; 2]>,
    pub sweeps: usize,
    pub tree: Tree,
}

impl TwoSubdomainResult {
    /// Geometric-mean reduction of the total trace norm per sweep.
    pub fn contraction(&self) -> Option<f64> {
        contraction_factor(&self.history.iter().map(|h| h[0] + h[1]).collect::<Vec<_>>())
    }
}

/// Least-squares slope of `log(norm)` against sweep, as a per-sweep factor.
pub fn contraction_factor(norms: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, n)| **n > 0.0)
        .map(|(s, n)| (s as f64, n.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| {
        (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2))
    });
    Some((num / den).exp())
}

/// Stagnation test shared by all trace iterations: average reduction over the last
/// ten sweeps above 0.95, or too many sweeps.
pub fn check_progress(norms: &[f64], max_sweeps: usize) -> std::result::Result<(), String> {
    let s = norms.len() - 1;
    if s > max_sweeps {
        return Err(format!("exceeded {max_sweeps} sweeps"));
    }
    if s >= 10 {
        let (a, b) = (norms[s - 10], norms[s]);
        if a > 0.0 && (b / a).powf(0.1) > 0.95 {
            return Err(format!(
                "stagnating: mean reduction {:.4} over the last 10 sweeps",
                (b / a).powf(0.1)
            ));
        }
    }
    Ok(())
}

/// Two overlapping halves (lower, upper) iterated with actual solves; the
/// accumulated sum of all local fields is returned.
// the two halves index several per-half arrays in step
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
pub fn two_subdomain_solve(
    model: &VelocityModel,
    omega: f64,
    w_pml: usize,
    t_nonabs: usize,
    sigma0: f64,
    f: &NodeField,
    tol: f64,
    max_sweeps: usize,
) -> Result<TwoSubdomainResult> {
    let grid: &GridSpec = &model.grid;
    let profile = PmlProfile::new(
        w_pml,
        t_nonabs,
        sigma0,
        omega / model.c_max(),
        [grid.hx, grid.hy],
    )?;
    let tree = build_two_subdomain(grid, profile)?;
    let medium = Medium::new(model, omega, tree.root_rect, 0)?;
    if f.rect != tree.root_rect {
        return Err(Error::Dimension {
            expected: tree.root_rect.n_nodes(),
            got: f.values.len(),
        });
    }
    let kits = [BlockKit::new(&tree, &medium, 0)?, BlockKit::new(&tree, &medium, 1)?];
    let cy = tree.lines_y[0];
    let owner = |n: (usize, usize)| if n.1 <= cy { 0 } else { 1 };
    let mut u = NodeField::zeros(tree.root_rect);
    let mut fields = Vec::with_capacity(2);
    for b in 0..2 {
        let rhs = local_source(&tree, b, f, owner);
        let sol = if rhs.iter().all(|v| *v == ZERO) {
            rhs
        } else {
            kits[b].fact.solve(&rhs)?
        };
        u.accumulate_unknowns(&tree.block(b).extent.extended, &sol);
        fields.push(sol);
    }
    let trace_norms = |fields: &[Vec<C64>]| -> Result<[f64; 2]> {
        Ok([
            l2(&restrict_field(&tree, 0, &fields[0])?.values),
            l2(&restrict_field(&tree, 1, &fields[1])?.values),
        ])
    };
    let mut history = vec![trace_norms(&fields)?];
    let initial = history[0][0] + history[0][1];
    if initial == 0.0 {
        return Ok(TwoSubdomainResult {
            u,
            history,
            sweeps: 0,
            tree,
        });
    }
    let mut totals = vec![initial];
    loop {
        let mut next = Vec::with_capacity(2);
        for r in 0..2 {
            let s = 1 - r;
            let rb = tree.block(r);
            let mut inc = vec![ZERO; rb.n_incident];
            let ch = rb.channel_from(s).expect("halves exchange");
            inc[ch.range()].copy_from_slice(&channel_data(&tree, s, &fields[s], ch));
            next.push(apply_g(&tree, &kits[r], &inc)?);
        }
        for b in 0..2 {
            u.accumulate_unknowns(&tree.block(b).extent.extended, &next[b]);
        }
        fields = next;
        let h = trace_norms(&fields)?;
        history.push(h);
        totals.push(h[0] + h[1]);
        if h[0] + h[1] <= tol * initial {
            break;
        }
        if let Err(reason) = check_progress(&totals, max_sweeps) {
            return Err(Error::Stagnation {
                level: 1,
                block: "two-subdomain root".into(),
                sweeps: totals.len() - 1,
                reason,
            });
        }
    }
    let sweeps = history.len() - 1;
    Ok(TwoSubdomainResult {
        u,
        history,
        sweeps,
        tree,
    })
}
