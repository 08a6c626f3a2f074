use ddelm::assembly::TraceBasis;
use ddelm::field::ElmField;
use ddelm::metrics::{relative_errors, ReferenceKind};
use ddelm::solvers::check::{oracle_compare, reduced_operator_dense};
use ddelm::solvers::coarse::{apply_ktilde_pinv, apply_ktilde_pinv_transpose, assemble_coarse, ReducedCs};
use ddelm::solvers::oracle::{dense_oracle_solve, dense_p, svd_pinv};
use ddelm::solvers::vanilla::{apply_d, apply_dt, ddelm_reduced_apply};
use ddelm::solvers::{solve_with, CgOptions, Discretization, Method, SolverConfig};
use faer::{ColRef, Mat};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config(s: usize) -> SolverConfig {
    SolverConfig {
        s,
        m: 64,
        n_grid: 10,
        // keeps every local matrix at full column rank
        l: Some(2.0 * s as f64),
        cg: CgOptions { rel_tol: 1e-12, ..Default::default() },
        ..Default::default()
    }
}

fn tiny(s: usize) -> Discretization {
    Discretization::build(&tiny_config(s)).unwrap()
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn matvec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (m * ColRef::from_slice(x)).iter().copied().collect()
}

fn field_diff(d: &Discretization, a: &[Vec<f64>], e: &Discretization, b: &[Vec<f64>]) -> f64 {
    let u = ElmField::new(&d.partition, &d.layers, a).unwrap();
    let v = ElmField::new(&e.partition, &e.layers, b).unwrap();
    relative_errors(&u, &v, ReferenceKind::Exact, 65).unwrap().l2
}

fn exact_error(d: &Discretization, c: &[Vec<f64>]) -> f64 {
    let u = ElmField::new(&d.partition, &d.layers, c).unwrap();
    relative_errors(&u, d.problem.exact.as_ref().unwrap(), ReferenceKind::Exact, 65).unwrap().l2
}

fn check_symmetric_psd(op: &dyn Fn(&[f64]) -> Vec<f64>, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let u = rand_vec(&mut rng, n);
        let v = rand_vec(&mut rng, n);
        let (au, av) = (op(&u), op(&v));
        let lhs = dot(&au, &v);
        let rhs = dot(&u, &av);
        let scale = norm(&au) * norm(&v) + norm(&u) * norm(&av);
        assert!((lhs - rhs).abs() <= 1e-10 * scale, "adjoint residual {}", (lhs - rhs).abs() / scale);
    }
    for _ in 0..50 {
        let v = rand_vec(&mut rng, n);
        assert!(dot(&op(&v), &v) >= -1e-10 * dot(&v, &v));
    }
}

#[test]
fn reduced_operators_are_symmetric_and_semidefinite() {
    let d = tiny(2);
    check_symmetric_psd(&|v| ddelm_reduced_apply(&d, v), d.index.n_mu(), 1);
    for theta in [None, Some(0.5), Some(0.999), Some(1.0)] {
        let red = ReducedCs::new(&d, theta).unwrap();
        check_symmetric_psd(&|v| red.apply(v), d.index.n_delta(), 2);
    }
}

#[test]
fn local_range_projectors_are_orthogonal() {
    let d = tiny(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for f in &d.factors {
        for _ in 0..10 {
            let x = rand_vec(&mut rng, f.nrows());
            let y = rand_vec(&mut rng, f.nrows());
            let px = f.project(&x).unwrap();
            let ppx = f.project(&px).unwrap();
            let py = f.project(&y).unwrap();
            assert!(norm(&px.iter().zip(&ppx).map(|(a, b)| a - b).collect::<Vec<_>>()) <= 1e-10 * norm(&x));
            assert!((dot(&px, &y) - dot(&x, &py)).abs() <= 1e-10 * norm(&x) * norm(&y));
        }
    }
}

/// `K̃ [c; μ_Π]` with `K̃ = [K B_Π; 0 D_ΠΠ]` and `B_Π = −E_t R_Π`.
fn apply_ktilde(d: &Discretization, d_pipi: &Mat<f64>, c: &[Vec<f64>], mu_pi: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let nd = d.index.n_delta();
    let rows = (0..d.n_subdomains())
        .map(|i| {
            let b = &d.blocks[i];
            let mut r = matvec(&b.k, &c[i]);
            let off = b.trace_offset();
            for (k, &g) in d.index.local[i].trace_map.iter().enumerate() {
                if g >= nd {
                    r[off + k] -= mu_pi[g - nd];
                }
            }
            r
        })
        .collect();
    (rows, matvec(d_pipi, mu_pi))
}

fn flatten(rows: &[Vec<f64>], tail: &[f64]) -> Vec<f64> {
    rows.iter().flatten().chain(tail).copied().collect()
}

#[test]
fn coarse_projector_is_orthogonal_and_pinv_transpose_is_adjoint() {
    for s in [2, 3] {
        let d = tiny(s);
        let cs = assemble_coarse(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let npf = d.index.n_pi_flux();
        let sample = |rng: &mut ChaCha8Rng| -> (Vec<Vec<f64>>, Vec<f64>) {
            (d.blocks.iter().map(|b| rand_vec(rng, b.n_rows())).collect(), rand_vec(rng, npf))
        };
        let project = |phi: &[Vec<f64>], psi: &[f64]| {
            let (c, mp) = apply_ktilde_pinv(&d, &cs, phi, psi).unwrap();
            apply_ktilde(&d, &cs.d_pipi, &c, &mp)
        };
        for _ in 0..10 {
            let (xr, xp) = sample(&mut rng);
            let (yr, yp) = sample(&mut rng);
            let (pr, pp) = project(&xr, &xp);
            let (ppr, ppp) = project(&pr, &pp);
            let px = flatten(&pr, &pp);
            let ppx = flatten(&ppr, &ppp);
            let x = flatten(&xr, &xp);
            let y = flatten(&yr, &yp);
            let (qr, qp) = project(&yr, &yp);
            let py = flatten(&qr, &qp);
            let idem = norm(&px.iter().zip(&ppx).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm(&x);
            assert!(idem <= 1e-8, "s={s} idempotence {idem:e}");
            let sym = (dot(&px, &y) - dot(&x, &py)).abs() / (norm(&x) * norm(&y));
            assert!(sym <= 1e-8, "s={s} symmetry {sym:e}");

            // ⟨K̃⁺x, [z; 0]⟩ = ⟨x, (K̃⁺)ᵀ[z; 0]⟩
            let z: Vec<Vec<f64>> = d.blocks.iter().map(|b| rand_vec(&mut rng, b.n_cols())).collect();
            let (c, _) = apply_ktilde_pinv(&d, &cs, &xr, &xp).unwrap();
            let (tr, tp) = apply_ktilde_pinv_transpose(&d, &cs, &z).unwrap();
            let lhs = dot(&flatten(&c, &[]), &flatten(&z, &[]));
            let rhs = dot(&x, &flatten(&tr, &tp));
            assert!((lhs - rhs).abs() <= 1e-10 * (lhs.abs() + norm(&x) * norm(&flatten(&tr, &tp))));
        }
    }
}

#[test]
fn flux_operators_are_adjoint() {
    let d = tiny(3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let red = ReducedCs::new(&d, Some(1.0)).unwrap();
    let ns = d.neumann().unwrap();
    for _ in 0..10 {
        let mu = rand_vec(&mut rng, d.index.n_mu());
        let y = rand_vec(&mut rng, d.index.n_flux_rows());
        assert!((dot(&apply_d(&d, &mu), &y) - dot(&mu, &apply_dt(&d, &y))).abs() < 1e-9 * norm(&mu) * norm(&y) * 1e3);
        let md = rand_vec(&mut rng, d.index.n_delta());
        let z = rand_vec(&mut rng, d.index.n_delta());
        let (a, b) = (dot(&red.apply_dtilde(&md), &z), dot(&md, &red.apply_dtilde_t(&z)));
        assert!((a - b).abs() <= 1e-10 * (norm(&red.apply_dtilde(&md)) * norm(&z) + norm(&md) * norm(&red.apply_dtilde_t(&z))));
        let (a, b) = (dot(&ns.apply_p(&d, &md), &z), dot(&md, &ns.apply_pt(&d, &z)));
        assert!((a - b).abs() <= 1e-12 * (a.abs() + b.abs() + norm(&md) * norm(&z)));
    }
}

#[test]
fn cached_neumann_map_matches_direct_and_dense_forms() {
    for s in [2, 3] {
        let d = tiny(s);
        let ns = d.neumann().unwrap();
        let pd = dense_p(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let v = rand_vec(&mut rng, d.index.n_delta());
            let p = ns.apply_p(&d, &v);
            let q = ns.apply_p_direct(&d, &v).unwrap();
            let r: Vec<f64> = (&pd * DVector::from_column_slice(&v)).iter().copied().collect();
            let diff = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>()) / norm(b);
            assert!(diff(&p, &q) < 1e-8, "cached vs direct {}", diff(&p, &q));
            assert!(diff(&p, &r) < 1e-8, "cached vs dense {}", diff(&p, &r));
        }
        assert!(d.has_neumann());
    }
}

#[test]
fn drivers_match_the_dense_oracle() {
    for s in [2, 3] {
        let d = tiny(s);
        for (m, t) in [(Method::Ddelm, 0.0), (Method::DdelmCs, 0.0), (Method::DdelmNn, 0.0), (Method::DdelmNn, 0.999), (Method::DdelmNn, 1.0)] {
            let o = oracle_compare(&d, &d, m, t).unwrap();
            assert!(o.passed, "s={s} {m:?} θ={t}: {o:?}");
        }
    }
}

#[test]
fn corrupted_flux_is_caught_by_the_oracle() {
    let reference = tiny(2);
    let mut bad = tiny(2);
    bad.corrupt_flux_sign(0).unwrap();
    let o = oracle_compare(&bad, &reference, Method::Ddelm, 0.0).unwrap();
    assert!(!o.passed);
    assert!(o.worst.unwrap().subdomains.contains(&0));
}

#[test]
fn dense_operator_matches_driver_operator_entrywise() {
    let d = tiny(2);
    let o = dense_oracle_solve(&d, Method::DdelmNn, 0.999).unwrap();
    let a = reduced_operator_dense(&d, Method::DdelmNn, 0.999).unwrap();
    assert!((&a - &o.operator).amax() <= 1e-8 * o.operator.amax());
    assert!((&a - a.transpose()).amax() <= 1e-10 * a.amax());
}

#[test]
fn theta_zero_reproduces_cs_bitwise() {
    let d = tiny(2);
    let cs = solve_with(&d, Method::DdelmCs, 0.0).unwrap();
    let nn = solve_with(&d, Method::DdelmNn, 0.0).unwrap();
    assert_eq!(cs.mu, nn.mu);
    assert_eq!(cs.residuals, nn.residuals);
    assert_eq!(cs.coeffs, nn.coeffs);
}

#[test]
fn single_domain_is_plain_least_squares() {
    let d = Discretization::build(&SolverConfig { s: 1, m: 64, n_grid: 12, l: Some(2.0), ..Default::default() }).unwrap();
    let b = &d.blocks[0];
    let k = DMatrix::from_fn(b.n_rows(), b.n_cols(), |i, j| b.k[(i, j)]);
    let direct = svd_pinv(&k, 1e-10) * DVector::from_column_slice(&b.f);
    for m in [Method::Ddelm, Method::DdelmCs, Method::DdelmNn] {
        let r = solve_with(&d, m, 0.999).unwrap();
        assert!(r.mu.is_empty() && r.iterations == 0);
        let c = DVector::from_column_slice(&r.coeffs[0]);
        assert!((&c - &direct).norm() <= 1e-8 * direct.norm(), "{m:?}");
    }
}

/// Different eliminations and the row reweightings of P and T solve slightly
/// different least-squares problems; with a non-zero residual they agree only
/// to the size of the discretization error.
#[test]
fn methods_and_bases_agree_to_the_residual_level() {
    let d = tiny(2);
    let mut cfg = tiny_config(2);
    cfg.trace_basis = TraceBasis::Nodal;
    let dn = Discretization::build(&cfg).unwrap();
    let base = solve_with(&d, Method::Ddelm, 0.0).unwrap();
    let err = exact_error(&d, &base.coeffs);
    assert!(err < 1e-3);
    for (m, t) in [(Method::DdelmCs, 0.0), (Method::DdelmNn, 1.0)] {
        let r = solve_with(&d, m, t).unwrap();
        let diff = field_diff(&d, &r.coeffs, &d, &base.coeffs);
        assert!(diff < 3.0 * err, "{m:?} θ={t}: {diff:e} vs error {err:e}");
    }
    for (m, t) in [(Method::Ddelm, 0.0), (Method::DdelmCs, 0.0), (Method::DdelmNn, 0.999)] {
        let a = solve_with(&d, m, t).unwrap();
        let b = solve_with(&dn, m, t).unwrap();
        let diff = field_diff(&d, &a.coeffs, &dn, &b.coeffs);
        assert!(diff < err, "basis {m:?}: {diff:e} vs error {err:e}");
    }
}

#[test]
fn oracle_size_guard_trips() {
    let d = Discretization::build(&SolverConfig { s: 2, m: 800, n_grid: 30, ..Default::default() }).unwrap();
    assert!(matches!(dense_oracle_solve(&d, Method::Ddelm, 0.0), Err(ddelm::DdelmError::SizeGuard { .. })));
}

#[test]
fn worker_count_does_not_change_results() {
    let a = solve_with(&tiny(3), Method::DdelmNn, 0.999).unwrap();
    let d = Discretization::build(&SolverConfig { workers: 3, ..tiny_config(3) }).unwrap();
    let b = solve_with(&d, Method::DdelmNn, 0.999).unwrap();
    assert_eq!(a.residuals, b.residuals);
    assert_eq!(a.mu, b.mu);
}
