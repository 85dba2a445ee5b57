use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use divcurl_lab::field::{ScalarField, VectorField};
use divcurl_lab::grid::Grid;
use divcurl_lab::lab::{gen_divfree, EpsSchedule, Profile};
use divcurl_lab::poisson::{
    neg_norm_h_minus_1, solve_dirichlet, weak_w1p_limit_check, Backend, SolverConfig,
};
use divcurl_lab::testfn::TestFunction;

/// Dense `(2·dim+1)`-point system on interior nodes, assembled directly.
fn dense_solve(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let (n, dim) = (g.n(), g.dim());
    let m = n - 2;
    let size = m.pow(dim as u32);
    let h2 = g.h() * g.h();
    let to_multi = |r: usize| {
        let mut out = [0usize; 3];
        let mut rest = r;
        for o in out.iter_mut().take(dim) {
            *o = rest % m;
            rest /= m;
        }
        out
    };
    let to_flat = |mi: &[usize; 3]| (0..dim).rev().fold(0, |acc, a| acc * m + mi[a]);
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for r in 0..size {
        let mi = to_multi(r);
        a[(r, r)] = 2.0 * dim as f64 / h2;
        for ax in 0..dim {
            for step in [-1i64, 1] {
                let k = mi[ax] as i64 + step;
                if (0..m as i64).contains(&k) {
                    let mut nb = mi;
                    nb[ax] = k as usize;
                    a[(r, to_flat(&nb))] = -1.0 / h2;
                }
            }
        }
        let node: Vec<usize> = (0..dim).map(|ax| mi[ax] + 1).collect();
        rhs[r] = f.get(g.flat_index(&node));
    }
    let x = a.lu().solve(&rhs).expect("nonsingular");
    let mut out = ScalarField::zeros(g);
    for r in 0..size {
        let mi = to_multi(r);
        let node: Vec<usize> = (0..dim).map(|ax| mi[ax] + 1).collect();
        out.values_mut()[g.flat_index(&node)] = x[r];
    }
    out
}

fn rel_l2(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a - b;
    let num: f64 = d.values().iter().map(|x| x * x).sum();
    let den: f64 = b.values().iter().map(|x| x * x).sum();
    (num / den).sqrt()
}

fn rough_rhs(p: &[f64; 3]) -> f64 {
    (3.0 * p[0]).exp() * (PI * p[1]).cos() + p[0] * p[1] - p[2] * p[2]
}

#[test]
fn both_backends_match_dense_solve_in_2d() {
    let g = Grid::new(2, 17).unwrap();
    let f = ScalarField::sample(g, rough_rhs);
    let dense = dense_solve(&f);
    for backend in [Backend::SineTransform, Backend::ConjugateGradient] {
        let u = solve_dirichlet(&f, &SolverConfig::with_backend(backend)).unwrap().solution;
        assert!(rel_l2(&u, &dense) <= 1e-8, "{backend:?}");
    }
}

#[test]
fn both_backends_match_dense_solve_in_3d() {
    let g = Grid::new(3, 9).unwrap();
    let f = ScalarField::sample(g, rough_rhs);
    let dense = dense_solve(&f);
    for backend in [Backend::SineTransform, Backend::ConjugateGradient] {
        let u = solve_dirichlet(&f, &SolverConfig::with_backend(backend)).unwrap().solution;
        assert!(rel_l2(&u, &dense) <= 1e-8, "{backend:?}");
    }
}

#[test]
fn cg_matches_sine_transform_at_65() {
    let g = Grid::new(2, 65).unwrap();
    let f = ScalarField::sample(g, rough_rhs);
    let st = solve_dirichlet(&f, &SolverConfig::default()).unwrap();
    let cg = solve_dirichlet(&f, &SolverConfig::with_backend(Backend::ConjugateGradient)).unwrap();
    assert!(rel_l2(&cg.solution, &st.solution) <= 1e-8);
    assert!(cg.stats.iterations > 0 && cg.stats.iterations <= 650);
    assert_eq!(st.stats.iterations, 0);
}

#[test]
fn eigenfunction_family_negative_norms() {
    let g = Grid::new(2, 129).unwrap();
    for m in 1..=3 {
        for n in 1..=3 {
            let (mf, nf) = (m as f64, n as f64);
            let f = ScalarField::sample(g, |p| (mf * PI * p[0]).sin() * (nf * PI * p[1]).sin());
            let v = neg_norm_h_minus_1(&f, &SolverConfig::default()).unwrap().value;
            let target = 0.5 / (PI * (mf * mf + nf * nf).sqrt());
            assert!((v - target).abs() <= 0.01 * target, "({m},{n}): {v} vs {target}");
        }
    }
}

#[test]
fn weak_limits_of_lifted_divfree_oscillation() {
    let g = Grid::new(2, 257).unwrap();
    let schedule = EpsSchedule::new(vec![2, 4, 8, 16]).unwrap();
    let fam = gen_divfree(Profile::SIN, schedule).unwrap();
    let cfg = SolverConfig::default();
    let family = (0..fam.schedule.len())
        .map(|m| solve_dirichlet(&fam.realize(g, m).unwrap(), &cfg).unwrap())
        .collect::<Vec<_>>();
    let limit = solve_dirichlet(&fam.limit_field(g), &cfg).unwrap();
    // off-centre, so symmetry does not cancel the oscillation
    let dict = [TestFunction::bump(&[0.46, 0.53], 0.27).unwrap(), TestFunction::bump(&[0.41, 0.6], 0.2).unwrap()];
    let reports = weak_w1p_limit_check(&fam.eps(), &family, &limit, &dict, 1e-3).unwrap();
    assert_eq!(reports.len(), 2 * 2 * 2);
    for r in &reports {
        if r.label.ends_with("u2") {
            // second component is identically zero
            assert!(r.gaps.iter().all(|&x| x == 0.0), "{}", r.label);
            continue;
        }
        assert!(r.rate.unwrap() >= 1.0, "{}: {:?} {:?}", r.label, r.rate, r.gaps);
        assert!(r.pass, "{}: {:?}", r.label, r.gaps);
    }
}

#[test]
fn constant_family_weak_limits_are_exact() {
    let g = Grid::new(2, 65).unwrap();
    let cfg = SolverConfig::default();
    let c = VectorField::constant(g, &[1.5, -0.5]);
    let s = solve_dirichlet(&c, &cfg).unwrap();
    let family = vec![s.clone(), s.clone(), s.clone()];
    let dict = [TestFunction::bump(&[0.5, 0.5], 0.3).unwrap()];
    let reports = weak_w1p_limit_check(&[0.1, 0.05, 0.02], &family, &s, &dict, 0.0).unwrap();
    assert!(reports.iter().all(|r| r.gaps.iter().all(|&x| x == 0.0) && r.pass));
    assert!(weak_w1p_limit_check(&[0.1], std::slice::from_ref(&s), &s, &[], 0.0).unwrap().is_empty());
}
