//! Nonoverlapping decomposition of the unit square into an `s × s` grid of
//! subdomains, classification of training points, and the interface index
//! that ties local trace and flux rows to global interface unknowns.
//!
//! All point bookkeeping is done on integer grid nodes so that shared points
//! are identified exactly. A subdomain with `n_grid` points per side owns the
//! global nodes `col*(n_grid-1) ..= (col+1)*(n_grid-1)` in each direction.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{DdelmError, Result};

/// Global integer grid coordinates of a training point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct GridNode {
    pub i: usize,
    pub j: usize,
}

/// Side of an axis-aligned subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Outward unit normal of the side.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Side::Left | Side::Right)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Subdomain {
    pub index: usize,
    pub col: usize,
    pub row: usize,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    /// Lowest global node (inclusive).
    pub node_lo: GridNode,
    /// Highest global node (inclusive).
    pub node_hi: GridNode,
}

impl Subdomain {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn diam(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    fn side_of(&self, node: GridNode) -> Option<Side> {
        if node.i == self.node_lo.i {
            Some(Side::Left)
        } else if node.i == self.node_hi.i {
            Some(Side::Right)
        } else if node.j == self.node_lo.j {
            Some(Side::Bottom)
        } else if node.j == self.node_hi.j {
            Some(Side::Top)
        } else {
            None
        }
    }

    /// Nodes along `side`, ordered by increasing arclength (bottom to top,
    /// left to right).
    pub fn side_nodes(&self, side: Side) -> Vec<GridNode> {
        match side {
            Side::Left | Side::Right => {
                let i = if side == Side::Left { self.node_lo.i } else { self.node_hi.i };
                (self.node_lo.j..=self.node_hi.j).map(|j| GridNode { i, j }).collect()
            }
            Side::Bottom | Side::Top => {
                let j = if side == Side::Bottom { self.node_lo.j } else { self.node_hi.j };
                (self.node_lo.i..=self.node_hi.i).map(|i| GridNode { i, j }).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdgeOrientation {
    Vertical,
    Horizontal,
}

/// An edge shared by two subdomains.
#[derive(Debug, Clone, Serialize)]
pub struct InteriorEdge {
    pub id: usize,
    pub orientation: EdgeOrientation,
    /// Left (vertical edge) or bottom (horizontal edge) subdomain.
    pub first: usize,
    /// Right or top subdomain.
    pub second: usize,
    /// Nodes along the edge including both endpoints, by arclength.
    pub nodes: Vec<GridNode>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Neighbor {
    pub side: Side,
    pub subdomain: usize,
    pub edge: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainPartition {
    pub s: usize,
    pub n_grid: usize,
    pub subdomains: Vec<Subdomain>,
    pub neighbors: Vec<Vec<Neighbor>>,
    pub edges: Vec<InteriorEdge>,
}

/// Tile `[0,1]²` with `s × s` square subdomains, each carrying an
/// `n_grid × n_grid` uniform training grid.
pub fn partition_domain(s: usize, n_grid: usize) -> Result<DomainPartition> {
    if s == 0 {
        return Err(DdelmError::InvalidPartition("s must be at least 1".into()));
    }
    if n_grid < 3 {
        return Err(DdelmError::InvalidPartition(format!(
            "n_grid must be at least 3 (got {n_grid}); smaller grids have no interior points"
        )));
    }
    let step = n_grid - 1;
    let hs = 1.0 / s as f64;
    let mut subdomains = Vec::with_capacity(s * s);
    for row in 0..s {
        for col in 0..s {
            subdomains.push(Subdomain {
                index: row * s + col,
                col,
                row,
                x0: col as f64 * hs,
                x1: if col + 1 == s { 1.0 } else { (col + 1) as f64 * hs },
                y0: row as f64 * hs,
                y1: if row + 1 == s { 1.0 } else { (row + 1) as f64 * hs },
                node_lo: GridNode { i: col * step, j: row * step },
                node_hi: GridNode { i: (col + 1) * step, j: (row + 1) * step },
            });
        }
    }

    let mut edges = Vec::with_capacity(2 * s * s.saturating_sub(1));
    let mut neighbors = vec![Vec::new(); s * s];
    for row in 0..s {
        for col in 0..s.saturating_sub(1) {
            let first = row * s + col;
            let second = first + 1;
            let id = edges.len();
            edges.push(InteriorEdge {
                id,
                orientation: EdgeOrientation::Vertical,
                first,
                second,
                nodes: subdomains[first].side_nodes(Side::Right),
            });
            neighbors[first].push(Neighbor { side: Side::Right, subdomain: second, edge: id });
            neighbors[second].push(Neighbor { side: Side::Left, subdomain: first, edge: id });
        }
    }
    for row in 0..s.saturating_sub(1) {
        for col in 0..s {
            let first = row * s + col;
            let second = first + s;
            let id = edges.len();
            edges.push(InteriorEdge {
                id,
                orientation: EdgeOrientation::Horizontal,
                first,
                second,
                nodes: subdomains[first].side_nodes(Side::Top),
            });
            neighbors[first].push(Neighbor { side: Side::Top, subdomain: second, edge: id });
            neighbors[second].push(Neighbor { side: Side::Bottom, subdomain: first, edge: id });
        }
    }

    Ok(DomainPartition { s, n_grid, subdomains, neighbors, edges })
}

impl DomainPartition {
    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    /// Largest global node index per direction.
    pub fn max_node(&self) -> usize {
        self.s * (self.n_grid - 1)
    }

    pub fn coord(&self, node: GridNode) -> [f64; 2] {
        let g = self.max_node() as f64;
        [node.i as f64 / g, node.j as f64 / g]
    }

    pub fn on_outer_boundary(&self, node: GridNode) -> bool {
        let g = self.max_node();
        node.i == 0 || node.j == 0 || node.i == g || node.j == g
    }

    /// Interior cross-points of the subdomain grid, lexicographic (y-major).
    pub fn cross_points(&self) -> Vec<GridNode> {
        let step = self.n_grid - 1;
        let mut out = Vec::new();
        for r in 1..self.s {
            for c in 1..self.s {
                out.push(GridNode { i: c * step, j: r * step });
            }
        }
        out
    }

    /// Subdomain used to evaluate the global field at `x`.
    pub fn locate(&self, x: [f64; 2]) -> usize {
        let s = self.s;
        let col = ((x[0] * s as f64).floor() as isize).clamp(0, s as isize - 1) as usize;
        let row = ((x[1] * s as f64).floor() as isize).clamp(0, s as isize - 1) as usize;
        row * s + col
    }
}

/// Training points of one subdomain, each class in lexicographic order.
#[derive(Debug, Clone, Default)]
pub struct LocalPoints {
    pub interior: Vec<[f64; 2]>,
    pub boundary: Vec<[f64; 2]>,
    pub interface: Vec<[f64; 2]>,
    pub interface_nodes: Vec<GridNode>,
}

impl LocalPoints {
    pub fn len(&self) -> usize {
        self.interior.len() + self.boundary.len() + self.interface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct PointSets {
    pub local: Vec<LocalPoints>,
}

/// Split each subdomain grid into interior, outer-boundary and interface
/// points. Interface endpoints lying on `∂Ω` are boundary points.
pub fn classify_points(p: &DomainPartition) -> PointSets {
    let local = p
        .subdomains
        .iter()
        .map(|sd| {
            let mut pts = LocalPoints::default();
            for j in sd.node_lo.j..=sd.node_hi.j {
                for i in sd.node_lo.i..=sd.node_hi.i {
                    let node = GridNode { i, j };
                    let x = p.coord(node);
                    if p.on_outer_boundary(node) {
                        pts.boundary.push(x);
                    } else if sd.side_of(node).is_some() {
                        pts.interface.push(x);
                        pts.interface_nodes.push(node);
                    } else {
                        pts.interior.push(x);
                    }
                }
            }
            pts
        })
        .collect();
    PointSets { local }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InterfaceKind {
    /// Point in the relative interior of an interior edge.
    Edge(usize),
    /// Interior cross-point of the subdomain grid.
    Cross,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterfacePoint {
    pub node: GridNode,
    pub coord: [f64; 2],
    pub kind: InterfaceKind,
    pub subdomains: Vec<usize>,
}

/// A flux condition row evaluated by one subdomain.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LocalFluxRow {
    /// Index into the subdomain's local interface points.
    pub point: usize,
    pub side: Side,
    pub component: usize,
    pub global_row: usize,
}

/// One interior side of a subdomain with its nodes by arclength. Entries are
/// local interface point indices, `None` where the node lies on `∂Ω`.
#[derive(Debug, Clone, Serialize)]
pub struct LocalEdge {
    pub side: Side,
    pub edge: usize,
    pub nodes: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalInterface {
    /// Local trace slot (component-major: `comp * n_points + k`) to global
    /// interface unknown.
    pub trace_map: Vec<usize>,
    pub flux_rows: Vec<LocalFluxRow>,
    pub edges: Vec<LocalEdge>,
    /// Whether local interface point `k` is a cross-point.
    pub is_cross: Vec<bool>,
}

impl LocalInterface {
    pub fn n_points(&self) -> usize {
        self.is_cross.len()
    }

    pub fn n_trace(&self) -> usize {
        self.trace_map.len()
    }
}

/// Global interface unknowns with their coarse (Π, cross-point) and
/// remaining (Δ) split.
///
/// Unknown ordering: Δ points sorted by (edge id, arclength), then Π points;
/// each point carries `components` consecutive unknowns. Flux rows share the
/// Δ ordering; each cross-point contributes one x-direction and one
/// y-direction row per component after all Δ rows.
#[derive(Debug, Clone, Serialize)]
pub struct InterfaceIndex {
    pub components: usize,
    pub points: Vec<InterfacePoint>,
    pub n_delta_points: usize,
    pub n_cross_points: usize,
    pub local: Vec<LocalInterface>,
}

impl InterfaceIndex {
    pub fn n_mu(&self) -> usize {
        self.points.len() * self.components
    }

    pub fn n_delta(&self) -> usize {
        self.n_delta_points * self.components
    }

    pub fn n_pi(&self) -> usize {
        self.n_cross_points * self.components
    }

    pub fn n_flux_rows(&self) -> usize {
        self.n_delta() + self.n_pi_flux()
    }

    pub fn n_pi_flux(&self) -> usize {
        2 * self.n_cross_points * self.components
    }

    pub fn mu_index(&self, point: usize, component: usize) -> usize {
        point * self.components + component
    }

    pub fn is_pi(&self, mu: usize) -> bool {
        mu >= self.n_delta()
    }

    /// Number of subdomains sharing each global unknown.
    pub fn multiplicity(&self) -> Vec<usize> {
        let mut m = vec![0; self.n_mu()];
        for loc in &self.local {
            for &g in &loc.trace_map {
                m[g] += 1;
            }
        }
        m
    }

    /// `Σ_i (R^i)ᵀ x^i` with local vectors in trace-slot layout.
    pub fn scatter_add(&self, sub: usize, local: &[f64], global: &mut [f64]) {
        for (&g, &v) in self.local[sub].trace_map.iter().zip(local) {
            global[g] += v;
        }
    }

    /// `R^i v`.
    pub fn restrict(&self, sub: usize, global: &[f64]) -> Vec<f64> {
        self.local[sub].trace_map.iter().map(|&g| global[g]).collect()
    }
}

/// Build the global interface index for `components_per_point` continuity
/// components per geometric interface point.
pub fn build_interface_index(
    p: &DomainPartition,
    ps: &PointSets,
    components_per_point: usize,
) -> Result<InterfaceIndex> {
    if !(1..=2).contains(&components_per_point) {
        return Err(DdelmError::InvalidParameter {
            name: "components_per_point",
            reason: format!("must be 1 or 2, got {components_per_point}"),
        });
    }
    let nc = components_per_point;

    let mut points: Vec<InterfacePoint> = Vec::new();
    let mut lookup: HashMap<GridNode, usize> = HashMap::new();
    for edge in &p.edges {
        for &node in &edge.nodes[1..edge.nodes.len() - 1] {
            lookup.insert(node, points.len());
            points.push(InterfacePoint {
                node,
                coord: p.coord(node),
                kind: InterfaceKind::Edge(edge.id),
                subdomains: vec![edge.first, edge.second],
            });
        }
    }
    let n_delta_points = points.len();
    let step = p.n_grid - 1;
    for node in p.cross_points() {
        let (c, r) = (node.i / step, node.j / step);
        lookup.insert(node, points.len());
        points.push(InterfacePoint {
            node,
            coord: p.coord(node),
            kind: InterfaceKind::Cross,
            subdomains: vec![(r - 1) * p.s + c - 1, (r - 1) * p.s + c, r * p.s + c - 1, r * p.s + c],
        });
    }
    let n_cross_points = points.len() - n_delta_points;
    let n_delta = n_delta_points * nc;

    let mut local = Vec::with_capacity(p.n_subdomains());
    for (sd, pts) in p.subdomains.iter().zip(&ps.local) {
        let n_local = pts.interface_nodes.len();
        let mut global_point = Vec::with_capacity(n_local);
        let mut local_of: HashMap<GridNode, usize> = HashMap::new();
        for (k, node) in pts.interface_nodes.iter().enumerate() {
            let g = *lookup.get(node).ok_or_else(|| {
                DdelmError::InvalidPartition(format!("interface node {node:?} missing from global index"))
            })?;
            global_point.push(g);
            local_of.insert(*node, k);
        }
        let is_cross: Vec<bool> = global_point.iter().map(|&g| g >= n_delta_points).collect();

        let mut trace_map = Vec::with_capacity(n_local * nc);
        for comp in 0..nc {
            for &g in &global_point {
                trace_map.push(g * nc + comp);
            }
        }

        let mut flux_rows = Vec::new();
        for comp in 0..nc {
            for (k, node) in pts.interface_nodes.iter().enumerate() {
                let g = global_point[k];
                if is_cross[k] {
                    let vertical = if node.i == sd.node_lo.i { Side::Left } else { Side::Right };
                    let horizontal = if node.j == sd.node_lo.j { Side::Bottom } else { Side::Top };
                    let base = n_delta + (g - n_delta_points) * 2 * nc;
                    flux_rows.push(LocalFluxRow { point: k, side: vertical, component: comp, global_row: base + comp });
                    flux_rows.push(LocalFluxRow {
                        point: k,
                        side: horizontal,
                        component: comp,
                        global_row: base + nc + comp,
                    });
                } else {
                    let side = sd.side_of(*node).expect("interface node lies on the subdomain boundary");
                    flux_rows.push(LocalFluxRow { point: k, side, component: comp, global_row: g * nc + comp });
                }
            }
        }

        let edges = p.neighbors[sd.index]
            .iter()
            .map(|nb| LocalEdge {
                side: nb.side,
                edge: nb.edge,
                nodes: sd.side_nodes(nb.side).iter().map(|n| local_of.get(n).copied()).collect(),
            })
            .collect();

        local.push(LocalInterface { trace_map, flux_rows, edges, is_cross });
    }

    Ok(InterfaceIndex { components: nc, points, n_delta_points, n_cross_points, local })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn single_subdomain_has_no_interface() {
        let p = partition_domain(1, 3).unwrap();
        assert_eq!(p.n_subdomains(), 1);
        assert!(p.neighbors[0].is_empty());
        let ps = classify_points(&p);
        assert_eq!(ps.local[0].interior.len(), 1);
        assert_eq!(ps.local[0].boundary.len(), 8);
        assert!(ps.local[0].interface.is_empty());
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(partition_domain(0, 10).is_err());
        assert!(partition_domain(2, 2).is_err());
    }

    #[test]
    fn two_by_two_tiling() {
        let p = partition_domain(2, 4).unwrap();
        assert_eq!(p.n_subdomains(), 4);
        assert_eq!(p.edges.len(), 4);
        for sd in &p.subdomains {
            assert!((sd.width() - 0.5).abs() < 1e-15);
        }
        let cross = p.cross_points();
        assert_eq!(cross.len(), 1);
        assert_eq!(p.coord(cross[0]), [0.5, 0.5]);
    }

    #[test]
    fn edge_and_cross_counts_follow_enumeration() {
        for s in 1..=6 {
            let p = partition_domain(s, 5).unwrap();
            assert_eq!(p.edges.len(), 2 * s * (s - 1));
            assert_eq!(p.cross_points().len(), (s - 1) * (s - 1));
        }
        let p = partition_domain(4, 80).unwrap();
        assert_eq!(p.n_subdomains(), 16);
        assert_eq!(p.edges.len(), 24);
        assert_eq!(p.cross_points().len(), 9);
    }

    #[test]
    fn classify_two_by_two_small() {
        let p = partition_domain(2, 4).unwrap();
        let ps = classify_points(&p);
        for loc in &ps.local {
            assert_eq!(loc.interior.len(), 4);
            assert_eq!(loc.boundary.len(), 7);
            assert_eq!(loc.interface.len(), 5);
        }
        let p = partition_domain(2, 160).unwrap();
        let ps = classify_points(&p);
        for loc in &ps.local {
            assert_eq!(loc.interface.len(), 2 * 160 - 1 - 2);
        }
    }

    #[test]
    fn interface_sizes() {
        let p = partition_domain(2, 6).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 1).unwrap();
        let global_pts: HashSet<GridNode> =
            ps.local.iter().flat_map(|l| l.interface_nodes.iter().copied()).collect();
        assert_eq!(idx.points.len(), global_pts.len());
        assert_eq!(idx.n_pi(), 1);
        assert_eq!(idx.n_delta(), global_pts.len() - 1);

        let idx2 = build_interface_index(&p, &ps, 2).unwrap();
        assert_eq!(idx2.n_pi(), 2);

        let p4 = partition_domain(4, 6).unwrap();
        let ps4 = classify_points(&p4);
        let idx4 = build_interface_index(&p4, &ps4, 1).unwrap();
        assert_eq!(idx4.n_pi(), 9);
        for pt in &idx4.points {
            match pt.kind {
                InterfaceKind::Cross => assert_eq!(pt.subdomains.len(), 4),
                InterfaceKind::Edge(_) => assert_eq!(pt.subdomains.len(), 2),
            }
        }
    }

    #[test]
    fn flux_rows_cover_every_global_row() {
        let p = partition_domain(3, 5).unwrap();
        let ps = classify_points(&p);
        for nc in 1..=2 {
            let idx = build_interface_index(&p, &ps, nc).unwrap();
            let mut count = vec![0usize; idx.n_flux_rows()];
            for loc in &idx.local {
                for r in &loc.flux_rows {
                    count[r.global_row] += 1;
                }
            }
            for (row, &c) in count.iter().enumerate() {
                if row < idx.n_delta() {
                    assert_eq!(c, 2, "Δ flux row {row}");
                } else {
                    assert_eq!(c, 4, "Π flux row {row}");
                }
            }
        }
    }

    #[test]
    fn delta_rows_couple_opposite_normals() {
        let p = partition_domain(3, 5).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 1).unwrap();
        let mut normals: HashMap<usize, Vec<[f64; 2]>> = HashMap::new();
        for loc in &idx.local {
            for r in &loc.flux_rows {
                normals.entry(r.global_row).or_default().push(r.side.normal());
            }
        }
        for row in 0..idx.n_delta() {
            let n = &normals[&row];
            assert_eq!(n[0][0] + n[1][0], 0.0);
            assert_eq!(n[0][1] + n[1][1], 0.0);
        }
        for row in idx.n_delta()..idx.n_flux_rows() {
            let sum: [f64; 2] = normals[&row].iter().fold([0.0, 0.0], |a, n| [a[0] + n[0], a[1] + n[1]]);
            assert_eq!(sum, [0.0, 0.0]);
        }
    }

    #[test]
    fn local_edges_have_full_length() {
        let p = partition_domain(3, 7).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 1).unwrap();
        for (i, loc) in idx.local.iter().enumerate() {
            assert_eq!(loc.edges.len(), p.neighbors[i].len());
            for e in &loc.edges {
                assert_eq!(e.nodes.len(), 7);
                assert!(e.nodes[1..6].iter().all(Option::is_some));
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn tiling_is_complete(s in 1usize..6, n in 3usize..9) {
                let p = partition_domain(s, n).unwrap();
                let ps = classify_points(&p);
                let mut all = HashSet::new();
                for (sd, loc) in p.subdomains.iter().zip(&ps.local) {
                    prop_assert_eq!(loc.len(), n * n);
                    for j in sd.node_lo.j..=sd.node_hi.j {
                        for i in sd.node_lo.i..=sd.node_hi.i {
                            all.insert(GridNode { i, j });
                        }
                    }
                }
                let g = s * (n - 1) + 1;
                prop_assert_eq!(all.len(), g * g);
            }

            #[test]
            fn restriction_round_trip_gives_multiplicity(
                s in 1usize..5,
                n in 3usize..7,
                nc in 1usize..3,
                seed in any::<u64>(),
            ) {
                let p = partition_domain(s, n).unwrap();
                let ps = classify_points(&p);
                let idx = build_interface_index(&p, &ps, nc).unwrap();
                let v: Vec<f64> = (0..idx.n_mu())
                    .map(|k| ((k as u64).wrapping_mul(2654435761).wrapping_add(seed) % 1000) as f64 / 7.0)
                    .collect();
                let mut out = vec![0.0; idx.n_mu()];
                for i in 0..p.n_subdomains() {
                    let r = idx.restrict(i, &v);
                    idx.scatter_add(i, &r, &mut out);
                }
                let m = idx.multiplicity();
                for k in 0..idx.n_mu() {
                    prop_assert!((out[k] - m[k] as f64 * v[k]).abs() < 1e-12);
                    prop_assert!(m[k] == 2 || m[k] == 4);
                    prop_assert_eq!(m[k] == 4, idx.is_pi(k));
                }
            }
        }
    }
}
