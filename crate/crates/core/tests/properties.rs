use cosparse_admm::linalg::{dist_sq, norm_sq};
use cosparse_admm::rng::{normal_vec, seeded};
use cosparse_admm::solver::soft_threshold;
use cosparse_admm::vi::{f_apply, kkt_residuals, skew_defect};
use cosparse_admm::*;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    -1e3..1e3f64
}

fn small_instance(seed: u64) -> Instance {
    let spec = InstanceSpec { d: 8, m: 6, k: 2, ell: 5, alpha: Some(100.0), noise_sigma: 0.0 };
    generate_instance(&spec, seed).unwrap()
}

fn random_point(seed: u64, n: usize, d: usize, s: f64) -> Point {
    let mut rng = seeded(seed);
    let mut v = || -> Vec<f64> { normal_vec::<f64>(&mut rng, n).into_iter().map(|x| s * x).collect() };
    let z = v();
    let l = v();
    let x: Vec<f64> = normal_vec::<f64>(&mut seeded(seed ^ 0xabcd), d).into_iter().map(|x| s * x).collect();
    Point::new(z, x, l)
}

proptest! {
    #[test]
    fn soft_threshold_shrinks_toward_zero(v in prop::collection::vec(finite(), 1..20), tau in 0.0..50.0f64) {
        let s = soft_threshold(&v, tau);
        for (&a, &b) in v.iter().zip(&s) {
            prop_assert!(b.abs() <= a.abs());
            prop_assert!(b == 0.0 || b.signum() == a.signum());
            prop_assert!((a - b).abs() <= tau + 1e-12);
            if a.abs() > tau {
                prop_assert!(((a - b).abs() - tau).abs() <= 1e-9 * (1.0 + a.abs()));
            } else {
                prop_assert_eq!(b, 0.0);
            }
        }
    }

    #[test]
    fn soft_threshold_is_nonexpansive(a in prop::collection::vec(finite(), 8), b in prop::collection::vec(finite(), 8), tau in 0.0..10.0f64) {
        let (sa, sb) = (soft_threshold(&a, tau), soft_threshold(&b, tau));
        prop_assert!(dist_sq(&sa, &sb) <= dist_sq(&a, &b) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn soft_threshold_is_positively_homogeneous(v in prop::collection::vec(finite(), 1..10), tau in 0.0..10.0f64, c in 0.01..100.0f64) {
        let lhs = soft_threshold(&v.iter().map(|x| c * x).collect::<Vec<_>>(), c * tau);
        let rhs: Vec<f64> = soft_threshold(&v, tau).iter().map(|x| c * x).collect();
        for (a, b) in lhs.iter().zip(&rhs) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn concatenated_frames_preserve_energy(d in 1usize..=16, k in 1usize..=4, seed in any::<u64>(), xs in any::<u64>()) {
        let f = build_concatenated_bases_frame::<f64>(d, k, seed).unwrap();
        let x: Vec<f64> = normal_vec(&mut seeded(xs), d);
        let e = norm_sq(&x);
        prop_assert!((norm_sq(&f.apply(&x)) - e).abs() <= 1e-8 * e);
        let r = validate_frame(f.matrix(), 1e-9).unwrap();
        prop_assert!(r.is_tight && r.is_uniform_row_norm);
    }

    #[test]
    fn frame_report_is_row_permutation_invariant(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let f = build_concatenated_bases_frame::<f64>(6, 3, seed).unwrap();
        let mut idx: Vec<usize> = (0..f.n()).collect();
        let mut rng = seeded(perm_seed);
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        let p = validate_frame(&f.matrix().select_rows(&idx), 1e-9).unwrap();
        let r = f.report();
        prop_assert!((p.lower_bound - r.lower_bound).abs() <= 1e-12);
        prop_assert!((p.upper_bound - r.upper_bound).abs() <= 1e-12);
        prop_assert!((p.max_gram_deviation - r.max_gram_deviation).abs() <= 1e-12);
        prop_assert!((p.row_norm_spread - r.row_norm_spread).abs() <= 1e-12);
        prop_assert_eq!(p.is_tight, r.is_tight);
        prop_assert_eq!(p.is_uniform_row_norm, r.is_uniform_row_norm);
    }

    #[test]
    fn f_is_skew(inst_seed in 0u64..8, a in any::<u64>(), b in any::<u64>(), s in 0.01..100.0f64) {
        let inst = small_instance(inst_seed);
        let p = random_point(a, inst.n(), inst.d(), s);
        let q = random_point(b, inst.n(), inst.d(), s);
        let gap = p.sub(&q);
        prop_assert!(skew_defect(&inst, &p, &q) <= 1e-10 * (1.0 + gap.dot(&gap)));
        prop_assert_eq!(skew_defect(&inst, &p, &p), 0.0);
    }

    #[test]
    fn f_is_affine(inst_seed in 0u64..8, a in any::<u64>(), b in any::<u64>()) {
        let inst = small_instance(inst_seed);
        let p = random_point(a, inst.n(), inst.d(), 1.0);
        let q = random_point(b, inst.n(), inst.d(), 1.0);
        for t in [0.0, 0.25, 1.0] {
            let mix = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(x, y)| t * x + (1.0 - t) * y).collect() };
            let m = Point::new(mix(&p.z, &q.z), mix(&p.x, &q.x), mix(&p.lambda, &q.lambda));
            let (fp, fq, fm) = (f_apply(&inst, &p), f_apply(&inst, &q), f_apply(&inst, &m));
            let want = mix(&fp.stacked(), &fq.stacked());
            for (x, y) in fm.stacked().iter().zip(&want) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn kkt_residuals_are_nonnegative(inst_seed in 0u64..4, a in any::<u64>()) {
        let inst = small_instance(inst_seed);
        let p = random_point(a, inst.n(), inst.d(), 1.0);
        let k = kkt_residuals(&inst, &p, 1e-9).unwrap();
        prop_assert!(k.subgradient >= 0.0 && k.stationarity >= 0.0 && k.feasibility >= 0.0);
    }
}

#[test]
fn f_vanishes_at_origin_and_matches_scalar_example() {
    let inst = small_instance(0);
    let f = f_apply(&inst, &Point::zeros(inst.n(), inst.d()));
    assert!(f.stacked().iter().all(|&v| v == 0.0));

    let s = ProblemInstance::new(Matrix::identity(1), vec![1.0], TightFrame::identity(1).unwrap(), 1.0).unwrap();
    let f = f_apply(&s, &Point::new(vec![1.0], vec![2.0], vec![3.0]));
    assert_eq!(f, Point::new(vec![3.0], vec![-3.0], vec![1.0]));
}
