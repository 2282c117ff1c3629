use rug::{Complex, Float};
use znkz::curve::CurveSpec;
use znkz::differentials::{DifferentialRef, Kernel};
use znkz::homology;
use znkz::mp;
use znkz::periods::{self, Periods};

fn spec(n: usize, m: usize, pts: &[(f64, f64)], prec: u32) -> CurveSpec {
    CurveSpec::new(n, m, pts.iter().map(|&(a, b)| mp::c(prec, a, b)).collect(), prec).unwrap()
}

fn agm(a: Float, b: Float) -> Float {
    let prec = a.prec();
    let (mut a, mut b) = (a, b);
    for _ in 0..200 {
        let an = Float::with_val(prec, &a + &b) / 2u32;
        let bn = Float::with_val(prec, &a * &b).sqrt();
        a = an;
        b = bn;
    }
    a
}

#[test]
fn elliptic_period_matches_agm() {
    let prec = 128;
    let s = spec(2, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], prec);
    let cycles = homology::elementary_cycles(&s).unwrap();
    let form = DifferentialRef::Holo { alpha: 1, beta: 1 };
    let e = [0u32, 1, 2, 3];
    let sq = |x: u32| Float::with_val(prec, x).sqrt();
    // figure-eight around [e1, e2] covers the interval twice
    let a = sq((e[3] - e[1]) * (e[2] - e[0]));
    let b = sq((e[3] - e[0]) * (e[2] - e[1]));
    let want = Float::with_val(prec, mp::pi(prec) * 2u32) / agm(a, b);
    let got = periods::integrate_cycle(&s, &form, &cycles[0]).unwrap();
    let rel = (mp::abs(&got.value) - &want).abs() / &want;
    assert!(rel.to_f64() < 1e-30, "rel {rel}");
    // middle interval
    let a = sq((e[3] - e[1]) * (e[2] - e[0]));
    let b = sq((e[1] - e[0]) * (e[3] - e[2]));
    let want = Float::with_val(prec, mp::pi(prec) * 2u32) / agm(a, b);
    let got = periods::integrate_cycle(&s, &form, &cycles[1]).unwrap();
    let rel = (mp::abs(&got.value) - &want).abs() / &want;
    assert!(rel.to_f64() < 1e-30, "rel {rel}");
}

#[test]
fn genus_one_period_data() {
    let s = spec(2, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 128);
    let p = Periods::compute(&s).unwrap();
    let d = &p.data;
    assert!(d.tau[0][0].real().to_f64() < 0.0);
    assert!(d.normalization_defect < mp::eps(128 - 24));
    assert!(periods::v_at_branch_check(&s, d, 1).unwrap() < 1e-20);
    // sigma = 2 pi i A^{-1} for g = 1
    let prod = Complex::with_val(128, &d.sigma[0][0] * &d.a_matrix[0][0]);
    assert!(mp::rel_diff(&prod, &mp::two_pi_i(128)) < 1e-30);
}

#[test]
fn exact_part_and_null_cycles_vanish() {
    let s = spec(3, 1, &[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)], 128);
    let p = Periods::compute(&s).unwrap();
    let k = Kernel::prepare(&s, &DifferentialRef::ExactPart { p: 2 }).unwrap();
    for i in p.family.integrate(&k) {
        assert!(mp::abs_f64(&i.value) < 1e-28 * (1.0 + i.abs_sum));
    }
    let w = Kernel::Holo { alpha: 2, beta: 1 };
    let ints = p.family.integrate(&w);
    for null in p.homology.null_cycles() {
        let (v, e) = periods::combine(128, null, &ints);
        assert!(mp::abs_f64(&v) < 1e-28 + 10.0 * e);
    }
}

#[test]
fn higher_genus_symmetry_and_bilinear() {
    let s = spec(3, 2, &[(0.0, 0.0), (1.0, 0.2), (2.0, -0.1), (3.0, 0.0), (4.0, 0.4), (5.0, 0.1)], 128);
    let p = Periods::compute(&s).unwrap();
    assert_eq!(p.genus(), 4);
    assert!(periods::symmetry_defect(&p.data.tau) < 1e-20);
    assert!(p.data.normalization_defect < mp::eps(128 - 24));
    let w1 = Kernel::Holo { alpha: 1, beta: 1 };
    let w2 = Kernel::Holo { alpha: 2, beta: 3 };
    assert!(periods::bilinear_residual(&p, &w1, &w2) < 1e-20);
    for q in 1..=6 {
        assert!(periods::v_at_branch_check(&s, &p.data, q).unwrap() < 1e-20);
    }
}

#[test]
fn v_at_branch_for_all_points_genus_one_cubic() {
    let s = spec(3, 1, &[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)], 128);
    let p = Periods::compute(&s).unwrap();
    for q in 1..=3 {
        assert!(periods::v_at_branch_check(&s, &p.data, q).unwrap() < 1e-20);
    }
    assert!(symmetric_ok(&p));
}

fn symmetric_ok(p: &Periods) -> bool {
    periods::symmetry_defect(&p.data.tau) < 1e-20
}

#[test]
fn deck_shift_of_top_sheet_cycle() {
    // sum of all sheet lifts of a figure-eight is null
    let s = spec(3, 1, &[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)], 128);
    let cycles = homology::elementary_cycles(&s).unwrap();
    let form = DifferentialRef::Holo { alpha: 2, beta: 1 };
    let c0 = periods::integrate_cycle(&s, &form, &cycles[0]).unwrap().value;
    let c1 = periods::integrate_cycle(&s, &form, &cycles[1]).unwrap().value;
    // phi acts on dz/s^2 by omega^{-2}
    let w = mp::root_of_unity(128, -2, 3);
    assert!(mp::rel_diff(&Complex::with_val(128, &c0 * &w), &c1) < 1e-30);
}
