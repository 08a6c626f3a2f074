use ddelm::metrics::{fd_reference, relative_errors, FdField, ReferenceKind};
use ddelm::problems::{make_problem, ExactSolution, ProblemParams};

fn nodal_max_error(u: &FdField, exact: &ExactSolution) -> f64 {
    let h = 1.0 / (u.n - 1) as f64;
    let mut e: f64 = 0.0;
    for j in 0..u.n {
        for i in 0..u.n {
            e = e.max((u.node(i, j) - exact.value([i as f64 * h, j as f64 * h])).abs());
        }
    }
    e
}

/// Max difference between two grids over the nodes of the coarser one.
fn coarse_node_diff(coarse: &FdField, fine: &FdField) -> f64 {
    let r = (fine.n - 1) / (coarse.n - 1);
    let mut e: f64 = 0.0;
    for j in 0..coarse.n {
        for i in 0..coarse.n {
            e = e.max((coarse.node(i, j) - fine.node(r * i, r * j)).abs());
        }
    }
    e
}

#[test]
fn poisson_reference_is_accurate_at_the_default_grid() {
    let p = make_problem("poisson_sinpi", ProblemParams::default()).unwrap();
    let u = fd_reference(&p, 257).unwrap();
    let e = relative_errors(&u, &ExactSolution::SIN_PI, ReferenceKind::Exact, 257).unwrap();
    assert!(e.l2 < 1e-4, "{e:?}");
    assert!(e.h1 < 1e-3, "{e:?}");
}

#[test]
fn poisson_reference_converges_at_second_order() {
    let p = make_problem("poisson_sinpi", ProblemParams::default()).unwrap();
    let errs: Vec<f64> = [33, 65, 129].iter().map(|&n| nodal_max_error(&fd_reference(&p, n).unwrap(), &ExactSolution::SIN_PI)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.8..4.2).contains(&ratio), "{errs:?}");
    }
}

/// Relative RMS of `a − b` over the nodes of `coarse`, all three sampled there.
fn rel_rms_against(coarse: &FdField, other: &FdField, reference: &[f64]) -> f64 {
    let r = (other.n - 1) / (coarse.n - 1);
    let (mut e, mut s) = (0.0, 0.0);
    for j in 0..coarse.n {
        for i in 0..coarse.n {
            let v = reference[j * coarse.n + i];
            e += (other.node(r * i, r * j) - v).powi(2);
            s += v * v;
        }
    }
    (e / s).sqrt()
}

fn richardson_ratio(alpha: f64) -> (f64, f64) {
    let p = make_problem("varcoef_poisson", ProblemParams { alpha, ..Default::default() }).unwrap();
    let u: Vec<FdField> = [129, 257, 513].iter().map(|&n| fd_reference(&p, n).unwrap()).collect();
    let extrap: Vec<f64> = (0..129 * 129)
        .map(|k| {
            let (i, j) = (k % 129, k / 129);
            (4.0 * u[2].node(4 * i, 4 * j) - u[1].node(2 * i, 2 * j)) / 3.0
        })
        .collect();
    let e0 = rel_rms_against(&u[0], &u[0], &extrap);
    let e1 = rel_rms_against(&u[0], &u[1], &extrap);
    println!("alpha={alpha}: rel L2 of 129 {e0:e}, of 257 {e1:e} against the extrapolant");
    (e0 / e1, coarse_node_diff(&u[0], &u[1]) / coarse_node_diff(&u[1], &u[2]))
}

#[test]
fn variable_coefficient_reference_converges_at_second_order_for_smooth_rho() {
    let (ratio, _) = richardson_ratio(2.0);
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}

/// At the default roughness `ρ` saturates into a two-valued field with sharp
/// interfaces, so the difference scheme degrades below second order but
/// still converges.
#[test]
fn rough_coefficient_reference_still_converges() {
    let (ratio, max_ratio) = richardson_ratio(32.0);
    assert!(ratio > 1.2 && max_ratio > 1.2, "{ratio} {max_ratio}");
}
