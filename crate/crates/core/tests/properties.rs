use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use proptest::prelude::*;

use symcap::billiards::psi_a;
use symcap::bodies::ConvexBody;
use symcap::closedform::{capacity_ball, capacity_ellipsoid};
use symcap::dualsolver::DualProblem;
use symcap::oracle2d::arc_capacity_2d;
use symcap::spectrum::{eigenbasis, t_psi, zeros_in_period, ZeroOptions};
use symcap::symplin::{exp_sj, kernel_split, sigma_min, standard_j, SymplecticMap};

fn unitary_psi(n: usize, phases: &[f64], mix: &[f64]) -> SymplecticMap {
    // Q from a complex QR of a seeded matrix, U = Q diag(e^{i phi}) Q^H
    let a = DMatrix::from_fn(n, n, |i, j| Complex::new(mix[(2 * (i * n + j)) % mix.len()], mix[(2 * (i * n + j) + 1) % mix.len()]));
    let q = (a + DMatrix::<Complex<f64>>::identity(n, n) * Complex::new(0.5, 0.0)).qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(n, phases.iter().map(|&p| Complex::new(p.cos(), p.sin()))));
    let u = &q * d * q.adjoint();
    SymplecticMap::from_unitary(&u.map(|z| z.re), &u.map(|z| z.im)).unwrap()
}

fn separated(phases: &[f64]) -> bool {
    phases.iter().enumerate().all(|(i, a)| phases[..i].iter().all(|b| (a - b).abs() > 0.02))
}

fn random_symplectic(n: usize, entries: &[f64]) -> SymplecticMap {
    let s = DMatrix::from_fn(2 * n, 2 * n, |i, j| 0.3 * (entries[(i * 2 * n + j) % entries.len()] + entries[(j * 2 * n + i) % entries.len()]));
    SymplecticMap::from_hamiltonian(&s).unwrap()
}

fn polygon(radii: &[f64], jitter: &[f64]) -> ConvexBody {
    let k = radii.len();
    let v = (0..k)
        .map(|i| {
            let a = TAU * (i as f64 + 0.7 * jitter[i]) / k as f64;
            DVector::from_vec(vec![radii[i] * a.cos(), radii[i] * a.sin()])
        })
        .collect();
    ConvexBody::polytope(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symplectic_inverse_formula(n in 1usize..4, e in prop::collection::vec(-1.0f64..1.0, 36)) {
        let psi = random_symplectic(n, &e);
        let j = standard_j(n);
        let m = psi.matrix();
        prop_assert!((m.transpose() * &j * m - &j).amax() < 1e-8 * m.amax().powi(2).max(1.0));
        let inv = -(&j * m.transpose() * &j);
        prop_assert!((psi.inverse().matrix() - inv).amax() < 1e-8 * m.amax().max(1.0));
    }

    #[test]
    fn fixed_and_range_split_orthogonally(n in 1usize..4, k in 0usize..3, phases in prop::collection::vec(0.1f64..6.0, 3), mix in prop::collection::vec(-1.0f64..1.0, 18)) {
        // some planes fixed, the rest rotated
        let mut ph = phases[..n].to_vec();
        for p in ph.iter_mut().take(k.min(n)) { *p = 0.0; }
        let psi = unitary_psi(n, &ph, &mix);
        let dim = 2 * n;
        let m = psi.matrix() - DMatrix::identity(dim, dim);
        let (ker, perp) = kernel_split(&m, 1e-8);
        // Fix(Psi) is omega-orthogonal to range(Psi - I)
        prop_assert_eq!(ker.ncols(), k.min(n) * 2);
        prop_assert_eq!(ker.ncols() + perp.ncols(), dim);
        prop_assert!((ker.transpose() * &standard_j(n) * &m).amax() < 1e-8);
        prop_assert!((ker.transpose() * &perp).amax() < 1e-8);
    }

    #[test]
    fn exp_sj_is_a_group(s in -10.0f64..10.0, t in -10.0f64..10.0, n in 1usize..4) {
        prop_assert!((exp_sj(s, n) * exp_sj(t, n) - exp_sj(s + t, n)).amax() < 1e-12);
    }

    #[test]
    fn zeros_are_zeros_and_gaps_are_not(n in 1usize..4, phases in prop::collection::vec(0.05f64..6.2, 3), mix in prop::collection::vec(-1.0f64..1.0, 18)) {
        prop_assume!(separated(&phases[..n]));
        let psi = unitary_psi(n, &phases[..n], &mix);
        let zs = zeros_in_period(&psi, &ZeroOptions::default()).unwrap();
        let f = |s: f64| sigma_min(&(psi.matrix() - exp_sj(s, n)));
        for &z in &zs.zeros {
            prop_assert!(f(z) <= 1e-9);
        }
        for w in zs.zeros.windows(2) {
            prop_assert!(f(0.5 * (w[0] + w[1])) > 1e-8);
        }
    }

    #[test]
    fn zeros_match_unitary_phases(n in 1usize..5, phases in prop::collection::vec(0.05f64..6.2, 4), mix in prop::collection::vec(-1.0f64..1.0, 32)) {
        prop_assume!(separated(&phases[..n]));
        let psi = unitary_psi(n, &phases[..n], &mix);
        let mut expect: Vec<f64> = phases[..n].to_vec();
        expect.sort_by(|a, b| a.total_cmp(b));
                let zs = zeros_in_period(&psi, &ZeroOptions::default()).unwrap();
        prop_assert_eq!(zs.zeros.len(), expect.len());
        for (z, e) in zs.zeros.iter().zip(&expect) {
            prop_assert!((z - e).abs() < 1e-8, "{} vs {}", z, e);
        }
    }

    #[test]
    fn t_psi_conjugation_invariant(theta in 0.1f64..6.2, phases in prop::collection::vec(0.0f64..6.2, 2), mix in prop::collection::vec(-1.0f64..1.0, 8)) {
        let psi = SymplecticMap::rotation(2, theta);
        let p = unitary_psi(2, &phases, &mix);
        let a = t_psi(&psi).unwrap();
        let b = t_psi(&psi.conjugate_by(&p)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn support_homogeneous_subadditive(radii in prop::collection::vec(0.5f64..1.5, 6), jitter in prop::collection::vec(0.0f64..1.0, 6),
                                       w1 in prop::collection::vec(-1.0f64..1.0, 2), w2 in prop::collection::vec(-1.0f64..1.0, 2), a in 0.1f64..5.0, eps in 0.0f64..0.3) {
        let k = polygon(&radii, &jitter).rounded(eps).unwrap();
        let (u, v) = (DVector::from_vec(w1), DVector::from_vec(w2));
        let h = |w: &DVector<f64>| k.support(w).unwrap();
        prop_assert!((h(&(&u * a)) - a * h(&u)).abs() < 1e-11 * (1.0 + a));
        prop_assert!(h(&(&u + &v)) <= h(&u) + h(&v) + 1e-11);
        let x = k.support_argmax(&u).unwrap();
        prop_assert!((x.dot(&u) - h(&u)).abs() < 1e-11);
    }

    #[test]
    fn rounding_sandwich(radii in prop::collection::vec(0.5f64..1.5, 7), jitter in prop::collection::vec(0.0f64..1.0, 7), eps in 0.0f64..0.3, ang in 0.0f64..TAU) {
        let k = polygon(&radii, &jitter);
        let r = k.inradius_about(&DVector::zeros(2));
        let kr = k.clone().rounded(eps).unwrap();
        let w = DVector::from_vec(vec![ang.cos(), ang.sin()]);
        let (h, hr) = (k.support(&w).unwrap(), kr.support(&w).unwrap());
        prop_assert!((hr - h - eps).abs() < 1e-12);
        prop_assert!(h <= hr && hr <= (1.0 + eps / r) * h + 1e-12);
    }

    #[test]
    fn ellipsoid_matches_ball_for_2i(n in 1usize..4, phases in prop::collection::vec(0.05f64..6.2, 3), mix in prop::collection::vec(-1.0f64..1.0, 18)) {
        let psi = unitary_psi(n, &phases[..n], &mix);
        let e = capacity_ellipsoid(&psi, &(DMatrix::identity(2 * n, 2 * n) * 2.0)).unwrap().value;
        let b = capacity_ball(&psi, 1.0).unwrap().value;
        prop_assert!((e - b).abs() < 1e-8);
    }

    #[test]
    fn ellipsoid_scaling(axes in prop::collection::vec(0.5f64..2.0, 2), alpha in 0.3f64..3.0, theta in 0.2f64..6.2) {
        let psi = SymplecticMap::rotation(1, theta);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 / axes[0].powi(2), 2.0 / axes[1].powi(2)]));
        let c = capacity_ellipsoid(&psi, &s).unwrap().value;
        let ca = capacity_ellipsoid(&psi, &(&s / (alpha * alpha))).unwrap().value;
        prop_assert!((ca - alpha * alpha * c).abs() < 1e-8 * ca.max(1.0));
    }

    #[test]
    fn ellipsoid_conjugation_invariant(e in prop::collection::vec(-1.0f64..1.0, 16), axes in prop::collection::vec(0.6f64..1.6, 4), theta in 0.3f64..6.0) {
        let p = random_symplectic(2, &e);
        let psi = SymplecticMap::rotation(2, theta);
        let s = DMatrix::from_diagonal(&DVector::from_iterator(4, axes.iter().map(|a| 2.0 / (a * a))));
        let c = capacity_ellipsoid(&psi, &s).unwrap().value;
        // P^{-1}(E) = { <P^T S P z, z>/2 < 1 } with map P^{-1} Psi P
        let s2 = p.matrix().transpose() * &s * p.matrix();
        let psi2 = p.inverse().compose(&psi).compose(&p);
        let c2 = capacity_ellipsoid(&psi2, &s2).unwrap().value;
        prop_assert!((c - c2).abs() < 1e-7 * c.max(1.0), "{} {}", c, c2);
    }

    #[test]
    fn psi_a_is_symplectic(e in prop::collection::vec(-1.0f64..1.0, 9)) {
        let a = DMatrix::from_fn(3, 3, |i, j| e[i * 3 + j] + if i == j { 2.5 } else { 0.0 });
        let psi = psi_a(&a).unwrap();
        let j = standard_j(3);
        prop_assert!((psi.matrix().transpose() * &j * psi.matrix() - j).amax() < 1e-12);
    }

    #[test]
    fn oracle_rotation_invariant_and_monotone(radii in prop::collection::vec(0.6f64..1.2, 6), jitter in prop::collection::vec(0.0f64..1.0, 6), phi in 0.0f64..TAU, t1 in 0.2f64..3.0, t2 in 0.2f64..3.0) {
        let k = polygon(&radii, &jitter).rounded(0.1).unwrap();
        let rot = DMatrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()]);
        let kr = k.clone().linear_image(rot).unwrap();
        let (lo, hi) = (t1.min(t2), t1.max(t2) + 3.0);
        let a = arc_capacity_2d(&k, lo).unwrap().value;
        let b = arc_capacity_2d(&k, hi).unwrap().value;
        let ar = arc_capacity_2d(&kr, lo).unwrap().value;
        prop_assert!(a <= b + 1e-12);
        // a vertex with a normal cone narrower than 2pi/4096 may be cut off
        prop_assert!((a - ar).abs() < 1e-3 * a, "{} {}", a, ar);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quotient_scale_invariant(theta in 0.3f64..6.0, coeffs in prop::collection::vec(-1.0f64..1.0, 8), alpha in 0.01f64..100.0) {
        let psi = SymplecticMap::rotation(1, theta);
        let body = ConvexBody::ellipsoid_axes(&[1.0, 0.7]).unwrap();
        let basis = Arc::new(eigenbasis(&psi, 2.0 * PI * 5.0).unwrap());
        let prob = DualProblem::new(&psi, body, 2.0, basis.clone(), 64).unwrap();
        let mut y = DVector::from_fn(basis.len(), |i, _| coeffs[i % coeffs.len()] / (1.0 + i as f64));
        let first = basis.first_positive();
        y[first] += 3.0;
        let q = prob.value(&y);
        prop_assume!(q.is_finite());
        let qa = prob.value(&(&y * alpha));
        prop_assert!((q - qa).abs() <= 1e-12 * q.abs(), "{} {}", q, qa);
    }

    #[test]
    fn quotient_gradient_matches_differences(theta in 0.3f64..6.0, coeffs in prop::collection::vec(-1.0f64..1.0, 8), k in 0usize..64) {
        let psi = SymplecticMap::rotation(1, theta);
        let body = ConvexBody::ellipsoid_axes(&[1.0, 0.7]).unwrap();
        let basis = Arc::new(eigenbasis(&psi, 2.0 * PI * 5.0).unwrap());
        let prob = DualProblem::new(&psi, body, 2.0, basis.clone(), 64).unwrap();
        let mut y = DVector::from_fn(basis.len(), |i, _| coeffs[i % coeffs.len()] / (1.0 + i as f64));
        y[basis.first_positive()] += 3.0;
        let (q, g) = prob.value_grad(&y);
        prop_assume!(q.is_finite());
        let i = k % basis.len();
        let h = 1e-6;
        let mut yp = y.clone();
        yp[i] += h;
        let mut ym = y.clone();
        ym[i] -= h;
        let fd = (prob.value(&yp) - prob.value(&ym)) / (2.0 * h);
        prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g.amax()), "{} {}", fd, g[i]);
    }
}
