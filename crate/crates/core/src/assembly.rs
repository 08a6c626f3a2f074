//! Local block assembly: design matrices `K^i`, right-hand sides `f^i`,
//! local flux rows, and the edge change of variables producing `K_c^i`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{DdelmError, Result};
use crate::features::FeatureLayer;
use crate::geometry::{LocalInterface, LocalPoints};
use crate::problems::ProblemSpec;

/// Flux rows at cross-points: pointwise values or edge means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxVariant {
    Pointwise,
    MeanEdge,
}

/// Basis of the interface unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceBasis {
    Nodal,
    ChangeOfVariables,
}

/// Blocks contributed by one subdomain.
///
/// Rows of `k` and `f` are grouped interior, boundary, trace; boundary and
/// trace groups are component-major. Rows of `flux` follow
/// `LocalInterface::flux_rows`.
#[derive(Debug, Clone)]
pub struct LocalBlocks {
    pub k: Mat<f64>,
    pub f: Vec<f64>,
    pub n_interior: usize,
    pub n_boundary_rows: usize,
    pub n_trace: usize,
    pub flux: Mat<f64>,
    pub basis: TraceBasis,
}

impl LocalBlocks {
    pub fn trace_offset(&self) -> usize {
        self.n_interior + self.n_boundary_rows
    }

    pub fn n_rows(&self) -> usize {
        self.k.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.k.ncols()
    }
}

fn stack_rows(blocks: &[Mat<f64>], ncols: usize) -> Mat<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(n, ncols);
    let mut r0 = 0;
    for b in blocks {
        out.as_mut().submatrix_mut(r0, 0, b.nrows(), ncols).copy_from(b);
        r0 += b.nrows();
    }
    out
}

/// Rows `L φ(x_I)`, `B φ(x_B)` and `C φ(x_Γ)` of one subdomain.
pub fn interior_rows(problem: &ProblemSpec, layer: &FeatureLayer, points: &[[f64; 2]]) -> Result<Mat<f64>> {
    let mut out = Mat::<f64>::zeros(points.len(), layer.len());
    for term in problem.interior_terms(points) {
        let m = layer.eval_operator(points, &term.op)?;
        for j in 0..layer.len() {
            for i in 0..points.len() {
                out[(i, j)] += term.scale[i] * m[(i, j)];
            }
        }
    }
    Ok(out)
}

fn component_rows(layer: &FeatureLayer, points: &[[f64; 2]], ops: &[crate::features::DiffOp]) -> Result<Mat<f64>> {
    let blocks = ops.iter().map(|op| layer.eval_operator(points, op)).collect::<Result<Vec<_>>>()?;
    Ok(stack_rows(&blocks, layer.len()))
}

/// Local flux rows `F φ^i` for every entry of `iface.flux_rows`.
pub fn local_flux(
    problem: &ProblemSpec,
    layer: &FeatureLayer,
    points: &LocalPoints,
    iface: &LocalInterface,
    variant: FluxVariant,
) -> Result<Mat<f64>> {
    let mut out = Mat::<f64>::zeros(iface.flux_rows.len(), layer.len());
    for (r, row) in iface.flux_rows.iter().enumerate() {
        let op = &problem.flux_ops(row.side.normal())[row.component];
        let sample: Vec<[f64; 2]> = if variant == FluxVariant::MeanEdge && iface.is_cross[row.point] {
            let edge = iface
                .edges
                .iter()
                .find(|e| e.side == row.side)
                .ok_or_else(|| DdelmError::InvalidPartition("cross-point side without an interior edge".into()))?;
            let m = edge.nodes.len();
            let skip = if edge.nodes[0] == Some(row.point) {
                m - 1
            } else if edge.nodes[m - 1] == Some(row.point) {
                0
            } else {
                return Err(DdelmError::InvalidPartition("cross-point is not an edge endpoint".into()));
            };
            edge.nodes
                .iter()
                .enumerate()
                .filter(|(q, _)| *q != skip)
                .map(|(_, k)| {
                    k.map(|k| points.interface[k])
                        .ok_or_else(|| DdelmError::InvalidPartition("edge node missing from interface".into()))
                })
                .collect::<Result<_>>()?
        } else {
            vec![points.interface[row.point]]
        };
        let vals = layer.eval_operator(&sample, op)?;
        let w = 1.0 / sample.len() as f64;
        for (q, p) in sample.iter().enumerate() {
            let scale = w * problem.flux_weight(*p);
            for j in 0..layer.len() {
                out[(r, j)] += scale * vals[(q, j)];
            }
        }
    }
    Ok(out)
}

/// Assemble `K^i`, `f^i` and the local flux rows in the nodal basis.
pub fn assemble_local(
    problem: &ProblemSpec,
    layer: &FeatureLayer,
    points: &LocalPoints,
    iface: &LocalInterface,
    variant: FluxVariant,
) -> Result<LocalBlocks> {
    let interior = interior_rows(problem, layer, &points.interior)?;
    let boundary = component_rows(layer, &points.boundary, &problem.boundary_ops())?;
    let trace = component_rows(layer, &points.interface, &problem.continuity_ops())?;
    let k = stack_rows(&[interior, boundary, trace], layer.len());

    let nc = problem.components();
    let mut f = Vec::with_capacity(k.nrows());
    f.extend(points.interior.iter().map(|&p| problem.forcing_at(p)));
    for comp in 0..nc {
        f.extend(points.boundary.iter().map(|&p| problem.boundary_value(comp, p)));
    }
    f.resize(k.nrows(), 0.0);

    Ok(LocalBlocks {
        flux: local_flux(problem, layer, points, iface, variant)?,
        k,
        f,
        n_interior: points.interior.len(),
        n_boundary_rows: points.boundary.len() * nc,
        n_trace: points.interface.len() * nc,
        basis: TraceBasis::Nodal,
    })
}

/// Transition from the edge basis `W′` (linear endpoint profiles) to the
/// nodal basis `W` on an edge with `m` points.
#[derive(Debug, Clone)]
pub struct Transition {
    pub m: usize,
    pub forward: Mat<f64>,
    pub inverse: Mat<f64>,
}

pub fn build_transition(m: usize) -> Result<Transition> {
    if m < 2 {
        return Err(DdelmError::Transition(format!("edge needs at least 2 points, got {m}")));
    }
    let h = (m - 1) as f64;
    let ramp = Mat::from_fn(m, m, |i, j| {
        if i == 0 || i == m - 1 {
            0.0
        } else if j == 0 {
            (m - 1 - i) as f64 / h
        } else if j == m - 1 {
            i as f64 / h
        } else {
            0.0
        }
    });
    // endpoint rows of the ramp vanish, so ramp² = 0 and (I + ramp)⁻¹ = I − ramp
    let forward = Mat::from_fn(m, m, |i, j| if i == j { 1.0 } else { ramp[(i, j)] });
    let inverse = Mat::from_fn(m, m, |i, j| if i == j { 1.0 } else { -ramp[(i, j)] });
    Ok(Transition { m, forward, inverse })
}

/// Left-multiply the trace rows of each interior edge by `T⁻¹`, per
/// continuity component. Edge endpoints on `∂Ω` carry no unknown; their
/// row and column are dropped from `T`.
pub fn apply_change_of_variables(blocks: &LocalBlocks, iface: &LocalInterface, t: &Transition) -> Result<LocalBlocks> {
    let n_pts = iface.n_points();
    if n_pts == 0 {
        let mut out = blocks.clone();
        out.basis = TraceBasis::ChangeOfVariables;
        return Ok(out);
    }
    if blocks.n_trace % n_pts != 0 {
        return Err(DdelmError::Transition("trace rows are not a multiple of interface points".into()));
    }
    let nc = blocks.n_trace / n_pts;
    let off = blocks.trace_offset();
    let mut out = blocks.clone();
    for edge in &iface.edges {
        if edge.nodes.len() != t.m {
            return Err(DdelmError::Transition(format!(
                "edge {} has {} points but the transition expects {}",
                edge.edge,
                edge.nodes.len(),
                t.m
            )));
        }
        let m = t.m;
        for q in 1..m - 1 {
            let k = edge.nodes[q].ok_or_else(|| DdelmError::Transition("edge interior node off the interface".into()))?;
            for end in [0, m - 1] {
                let Some(kp) = edge.nodes[end] else { continue };
                if !iface.is_cross[kp] {
                    continue;
                }
                let coef = t.inverse[(q, end)];
                for comp in 0..nc {
                    let dst = off + comp * n_pts + k;
                    let src = off + comp * n_pts + kp;
                    for j in 0..out.k.ncols() {
                        out.k[(dst, j)] += coef * blocks.k[(src, j)];
                    }
                    out.f[dst] += coef * blocks.f[src];
                }
            }
        }
    }
    out.basis = TraceBasis::ChangeOfVariables;
    Ok(out)
}

/// Local flux matrices of all subdomains with their global row placement.
#[derive(Debug, Clone)]
pub struct FluxBlocks {
    pub variant: FluxVariant,
    pub local: Vec<Mat<f64>>,
}

pub fn build_flux(
    problem: &ProblemSpec,
    layers: &[FeatureLayer],
    points: &crate::geometry::PointSets,
    idx: &crate::geometry::InterfaceIndex,
    variant: FluxVariant,
) -> Result<FluxBlocks> {
    let local = layers
        .iter()
        .zip(&points.local)
        .zip(&idx.local)
        .map(|((layer, pts), iface)| local_flux(problem, layer, pts, iface, variant))
        .collect::<Result<Vec<_>>>()?;
    Ok(FluxBlocks { variant, local })
}

impl FluxBlocks {
    /// `A c = Σ_i (R_f^i)ᵀ F^i c^i`.
    pub fn apply(&self, idx: &crate::geometry::InterfaceIndex, coeffs: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; idx.n_flux_rows()];
        for ((f, c), iface) in self.local.iter().zip(coeffs).zip(&idx.local) {
            for (r, row) in iface.flux_rows.iter().enumerate() {
                let mut v = 0.0;
                for j in 0..f.ncols() {
                    v += f[(r, j)] * c[j];
                }
                out[row.global_row] += v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{init_layer, DiffOp};
    use crate::geometry::{build_interface_index, classify_points, partition_domain};
    use crate::problems::{make_problem, ProblemParams};

    #[test]
    fn six_point_transition_matches_closed_form() {
        let t = build_transition(6).unwrap();
        let expect = [
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [4.0 / 5.0, 1.0, 0.0, 0.0, 0.0, 1.0 / 5.0],
            [3.0 / 5.0, 0.0, 1.0, 0.0, 0.0, 2.0 / 5.0],
            [2.0 / 5.0, 0.0, 0.0, 1.0, 0.0, 3.0 / 5.0],
            [1.0 / 5.0, 0.0, 0.0, 0.0, 1.0, 4.0 / 5.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ];
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(t.forward[(i, j)], expect[i][j], "({i},{j})");
            }
        }
    }

    #[test]
    fn two_point_transition_is_identity() {
        let t = build_transition(2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(t.forward[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(build_transition(1).is_err());
    }

    #[test]
    fn single_domain_has_no_trace_rows() {
        let p = partition_domain(1, 6).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 1).unwrap();
        let pb = make_problem("poisson_sinpi", ProblemParams::default()).unwrap();
        let layer = init_layer(10, &p.subdomains[0], 4.0, 0.7, 1).unwrap();
        let b = assemble_local(&pb, &layer, &ps.local[0], &idx.local[0], FluxVariant::Pointwise).unwrap();
        assert_eq!(b.n_trace, 0);
        assert_eq!(b.n_rows(), 36);
        assert_eq!(b.flux.nrows(), 0);
    }

    #[test]
    fn interior_rows_are_negative_laplacian() {
        let p = partition_domain(2, 10).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 1).unwrap();
        let pb = make_problem("poisson_sinpi", ProblemParams::default()).unwrap();
        let layer = init_layer(64, &p.subdomains[0], 32.0, p.subdomains[0].diam() / 2.0, 3).unwrap();
        let b = assemble_local(&pb, &layer, &ps.local[0], &idx.local[0], FluxVariant::Pointwise).unwrap();
        let xx = layer.eval_derivative_matrix(&ps.local[0].interior, (2, 0)).unwrap();
        let yy = layer.eval_derivative_matrix(&ps.local[0].interior, (0, 2)).unwrap();
        for i in 0..b.n_interior {
            for j in 0..64 {
                let want = -(xx[(i, j)] + yy[(i, j)]);
                assert!((b.k[(i, j)] - want).abs() <= 1e-14 * want.abs().max(1.0));
            }
        }
        let nb = ps.local[0].boundary.len();
        let ni = ps.local[0].interior.len();
        let ng = ps.local[0].interface.len();
        assert_eq!(b.n_rows(), ni + nb + ng);
        assert!(b.f[b.trace_offset()..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_feature_gives_zero_column() {
        let p = partition_domain(2, 6).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 1).unwrap();
        let pb = make_problem("poisson_sinpi", ProblemParams::default()).unwrap();
        let mut layer = init_layer(4, &p.subdomains[0], 3.0, 0.3, 3).unwrap();
        layer.weights[2] = [0.0, 0.0];
        layer.biases[2] = 0.0;
        let b = assemble_local(&pb, &layer, &ps.local[0], &idx.local[0], FluxVariant::Pointwise).unwrap();
        for i in 0..b.n_rows() {
            assert_eq!(b.k[(i, 2)], 0.0);
        }
    }

    #[test]
    fn biharmonic_row_counts() {
        let p = partition_domain(2, 8).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 2).unwrap();
        let pb = make_problem("biharmonic_sinpi", ProblemParams::default()).unwrap();
        let layer = init_layer(16, &p.subdomains[1], 8.0, 0.3, 3).unwrap();
        let b = assemble_local(&pb, &layer, &ps.local[1], &idx.local[1], FluxVariant::MeanEdge).unwrap();
        let l = &ps.local[1];
        assert_eq!(b.n_rows(), l.interior.len() + 2 * l.boundary.len() + 2 * l.interface.len());
        assert_eq!(b.flux.nrows(), idx.local[1].flux_rows.len());
        assert_eq!(b.flux.nrows(), 2 * (l.interface.len() + 1));
    }

    #[test]
    fn constant_field_has_zero_flux() {
        // φ_0 ≈ 1 everywhere: huge bias, tiny weights
        let p = partition_domain(2, 6).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 1).unwrap();
        let pb = make_problem("poisson_sinpi", ProblemParams::default()).unwrap();
        let mut layers = Vec::new();
        for sd in &p.subdomains {
            let mut l = init_layer(1, sd, 1.0, 0.2, 0).unwrap();
            l.weights[0] = [0.0, 0.0];
            l.biases[0] = 30.0;
            layers.push(l);
        }
        for variant in [FluxVariant::Pointwise, FluxVariant::MeanEdge] {
            let flux = build_flux(&pb, &layers, &ps, &idx, variant).unwrap();
            let r = flux.apply(&idx, &vec![vec![1.0]; 4]);
            assert!(r.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn mean_edge_rows_for_six_point_edge() {
        // 3×3 partition: the centre subdomain's edges have both endpoints at cross-points
        let p = partition_domain(3, 6).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 1).unwrap();
        let pb = make_problem("poisson_sinpi", ProblemParams::default()).unwrap();
        let c = 4;
        let layer = init_layer(7, &p.subdomains[c], 5.0, 0.2, 8).unwrap();
        let iface = &idx.local[c];
        let mean = local_flux(&pb, &layer, &ps.local[c], iface, FluxVariant::MeanEdge).unwrap();
        let point = local_flux(&pb, &layer, &ps.local[c], iface, FluxVariant::Pointwise).unwrap();
        let edge = iface.edges.iter().find(|e| e.side == crate::geometry::Side::Bottom).unwrap();
        let nodes: Vec<usize> = edge.nodes.iter().map(|n| n.unwrap()).collect();
        let op = &pb.flux_ops(crate::geometry::Side::Bottom.normal())[0];
        let direct = layer.eval_operator(&nodes.iter().map(|&k| ps.local[c].interface[k]).collect::<Vec<_>>(), op).unwrap();
        for (r, row) in iface.flux_rows.iter().enumerate() {
            if row.side != crate::geometry::Side::Bottom {
                continue;
            }
            let pos = nodes.iter().position(|&k| k == row.point).unwrap();
            for j in 0..7 {
                let expect = match pos {
                    0 => (0..5).map(|q| direct[(q, j)]).sum::<f64>() / 5.0,
                    5 => (1..6).map(|q| direct[(q, j)]).sum::<f64>() / 5.0,
                    q => direct[(q, j)],
                };
                assert!((mean[(r, j)] - expect).abs() < 1e-12 * expect.abs().max(1.0));
                if (1..5).contains(&pos) {
                    assert_eq!(mean[(r, j)], point[(r, j)]);
                }
            }
        }
        // averaging weights sum to one: a constant-flux feature keeps its value
        let lin = DiffOp::derivative(0, 1);
        assert_eq!(lin.max_order(), 1);
    }

    #[test]
    fn change_of_variables_round_trip() {
        let p = partition_domain(3, 6).unwrap();
        let ps = classify_points(&p);
        let idx = build_interface_index(&p, &ps, 2).unwrap();
        let pb = make_problem("biharmonic_sinpi", ProblemParams::default()).unwrap();
        let layer = init_layer(9, &p.subdomains[4], 5.0, 0.2, 8).unwrap();
        let b = assemble_local(&pb, &layer, &ps.local[4], &idx.local[4], FluxVariant::Pointwise).unwrap();
        let t = build_transition(6).unwrap();
        let kc = apply_change_of_variables(&b, &idx.local[4], &t).unwrap();
        for i in 0..b.trace_offset() {
            for j in 0..9 {
                assert_eq!(kc.k[(i, j)].to_bits(), b.k[(i, j)].to_bits());
            }
        }
        // undo with T: trace_nodal = T · trace_new, edge by edge
        let inv = Transition { m: 6, forward: t.inverse.clone(), inverse: t.forward.clone() };
        let back = apply_change_of_variables(&kc, &idx.local[4], &inv).unwrap();
        for i in 0..b.n_rows() {
            for j in 0..9 {
                assert!((back.k[(i, j)] - b.k[(i, j)]).abs() < 1e-12 * b.k[(i, j)].abs().max(1.0));
            }
        }
        let identity = Transition { m: 6, forward: Mat::identity(6, 6), inverse: Mat::identity(6, 6) };
        let same = apply_change_of_variables(&b, &idx.local[4], &identity).unwrap();
        for i in 0..b.n_rows() {
            for j in 0..9 {
                assert_eq!(same.k[(i, j)], b.k[(i, j)]);
            }
        }
        assert!(apply_change_of_variables(&b, &idx.local[4], &build_transition(5).unwrap()).is_err());
    }
}
