use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::{Complex, Float, Rational};
use znkz::kz::{CycleRef, Solver};
use znkz::linalg::CMat;
use znkz::mp;
use znkz::periods::Periods;
use znkz::quadrature::Piece;
use znkz::theta::*;
use znkz::{enumerate_partitions, CurveSpec, Error, OrderedPartition};

const P: u32 = 128;

fn spec(n: usize, m: usize, l: &[(f64, f64)]) -> CurveSpec {
    CurveSpec::new(n, m, l.iter().map(|&(a, b)| mp::c(P, a, b)).collect(), P).unwrap()
}

fn quartic() -> CurveSpec {
    spec(2, 2, &[(0., 0.), (1., 0.), (2., 0.), (3., 0.)])
}

fn cubic() -> CurveSpec {
    spec(3, 1, &[(0., 0.), (1., 0.), (2., 1.)])
}

fn tau2() -> CMat {
    let off = mp::c(P, 0.7, -0.2);
    vec![vec![mp::c(P, -3.0, 0.5), off.clone()], vec![off, mp::c(P, -2.5, 0.1)]]
}

fn rand_vec(rng: &mut ChaCha8Rng, g: usize) -> Vec<Complex> {
    (0..g).map(|_| mp::c(P, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn rand_char(rng: &mut ChaCha8Rng, g: usize) -> Characteristics {
    let mut r = || Rational::from((rng.gen_range(0..12i64), 12));
    Characteristics { delta: (0..g).map(|_| r()).collect(), epsilon: (0..g).map(|_| r()).collect() }
}

fn rel(a: &Complex, b: &Complex) -> f64 {
    mp::abs_f64(&Complex::with_val(P, a - b)) / mp::abs_f64(b)
}

#[test]
fn jacobi_product_oracle() {
    // sum q^{m^2} = prod (1 - q^{2k}) (1 + q^{2k-1})^2 with q = e^{tau/2}
    let q = Float::with_val(P, -2.5).exp();
    let mut prod = Float::with_val(P, 1);
    for k in 1..40u32 {
        let a = Float::with_val(P, 1) - Float::with_val(P, q.clone().pow(2 * k));
        let b = Float::with_val(P, 1) + Float::with_val(P, q.clone().pow(2 * k - 1));
        prod *= a * Float::with_val(P, b.square_ref());
    }
    let th = riemann_theta(&[mp::zero(P)], &vec![vec![mp::real(P, -5.0)]], &Characteristics::zero(1), 0, P).unwrap();
    assert!(rel(&th.value, &Complex::with_val(P, &prod)) < 1e-36);
    assert!(th.tail_bound < mp::eps(P - 8));
}

#[test]
fn parity_shift_law_and_quasi_periodicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let taus = [vec![vec![mp::c(P, -2.0, 0.7)]], tau2()];
    let tol = mp::eps(P - 16);
    for tau in &taus {
        let g = tau.len();
        for _ in 0..20 {
            let z = rand_vec(&mut rng, g);
            let mz: Vec<Complex> = z.iter().map(|x| Complex::with_val(P, -x)).collect();
            let zero = Characteristics::zero(g);
            let a = riemann_theta(&z, tau, &zero, 0, P).unwrap().value;
            let b = riemann_theta(&mz, tau, &zero, 0, P).unwrap().value;
            assert!(rel(&a, &b) < tol);

            // theta[delta + m, eps + n] = exp(2 pi i n.delta) theta[delta, eps]
            let ch = rand_char(&mut rng, g);
            let m: Vec<i64> = (0..g).map(|_| rng.gen_range(-2..3)).collect();
            let n: Vec<i64> = (0..g).map(|_| rng.gen_range(-2..3)).collect();
            let t0 = riemann_theta(&z, tau, &ch, 2, P).unwrap();
            let t1 = riemann_theta(&z, tau, &ch.shifted(&m, &n), 2, P).unwrap();
            let nd = (0..g).fold(Rational::new(), |acc, i| acc + Rational::from(&ch.delta[i] * n[i]));
            let phase = (mp::two_pi_i(P) * mp::from_rational(P, &nd)).exp();
            assert!(rel(&t1.value, &Complex::with_val(P, &t0.value * &phase)) < tol);
            // log-derivatives do not see the representative
            let (h0, h1) = (t0.log_hess().unwrap(), t1.log_hess().unwrap());
            for i in 0..g {
                for j in 0..g {
                    assert!(mp::rel_diff(&h0[i][j], &h1[i][j]) < tol);
                }
            }

            // theta(z + 2 pi i n + tau m) = exp(2 pi i (n.delta - eps.m) - m tau m / 2 - m.z) theta(z)
            let mut w = z.clone();
            for i in 0..g {
                w[i] += Complex::with_val(P, mp::two_pi_i(P) * n[i]);
                for k in 0..g {
                    w[i] += Complex::with_val(P, &tau[i][k] * m[k]);
                }
            }
            let mut ex = Complex::with_val(P, mp::two_pi_i(P) * mp::from_rational(P, &nd));
            for i in 0..g {
                ex -= Complex::with_val(P, mp::two_pi_i(P) * mp::from_rational(P, &Rational::from(&ch.epsilon[i] * m[i])));
                ex -= Complex::with_val(P, &z[i] * m[i]);
                for k in 0..g {
                    ex -= Complex::with_val(P, &tau[i][k] * (m[i] * m[k])) / 2u32;
                }
            }
            let tw = riemann_theta(&w, tau, &ch, 0, P).unwrap().value;
            assert!(rel(&tw, &Complex::with_val(P, ex.exp() * &t0.value)) < 1e-30);
        }
    }
}

#[test]
fn odd_characteristic_vanishes_and_is_rejected() {
    let h = Rational::from((1, 2));
    let odd = Characteristics { delta: vec![h.clone()], epsilon: vec![h] };
    let th = riemann_theta(&[mp::zero(P)], &vec![vec![mp::c(P, -2.0, 0.3)]], &odd, 2, P).unwrap();
    assert!(matches!(th.log_hess(), Err(Error::Underflow)));
    let bad = vec![vec![mp::real(P, 1.0)]];
    assert!(matches!(
        riemann_theta(&[mp::zero(P)], &bad, &Characteristics::zero(1), 0, P),
        Err(Error::NotNegativeDefinite)
    ));
}

#[test]
fn abel_map_lattice_properties() {
    let s = quartic();
    let p = Periods::compute(&s).unwrap();
    let (zero, _) = abel_map(&p, &AbelTarget::Base).unwrap();
    assert!(mp::max_abs(&zero) == 0.0);

    // going around a sheet-0 cycle from the base point adds a lattice vector
    let c = p.homology.cycles.iter().find(|c| c.code.sheet == 0).unwrap();
    let mut path = vec![Piece::Segment { a: s.base().clone(), b: c.start.z.clone() }];
    path.extend(c.pieces.iter().cloned());
    path.push(Piece::Segment { a: c.start.z.clone(), b: s.base().clone() });
    let (loop_img, _) = abel_map(&p, &AbelTarget::Path(path)).unwrap();
    let (ch, d) = Characteristics::from_point(&loop_img, &p.data.tau, 1).unwrap();
    assert!(d < 1e-20);
    assert!(ch.is_integral());
    assert!(!ch.delta.iter().chain(&ch.epsilon).all(|x| *x == 0));

    // N (A(Q_i) - A(Q_j)) is a lattice vector
    let (qi, _) = abel_map(&p, &AbelTarget::Branch(2)).unwrap();
    let (qj, _) = abel_map(&p, &AbelTarget::Branch(4)).unwrap();
    let diff: Vec<Complex> = qi.iter().zip(&qj).map(|(a, b)| Complex::with_val(P, a - b) * 2u32).collect();
    let (_, d) = Characteristics::from_point(&diff, &p.data.tau, 1).unwrap();
    assert!(d < 1e-20);
}

#[test]
fn quartic_characteristics_are_even_half_periods() {
    let s = quartic();
    let p = Periods::compute(&s).unwrap();
    let map = find_characteristics(&p, &OrderedPartition::standard(2, 2)).unwrap();
    for pt in enumerate_partitions(2, 2).unwrap() {
        let e = map.for_partition(&pt);
        assert_eq!(e.is_even_half_period(), Some(true));
        let th = theta_constant(&p, &e, 0).unwrap();
        assert!(mp::abs_f64(&th.value) > 1e-3);
        assert!(a_period_defect(&p, &pt, &e).unwrap() < 1e-30);
    }
}

#[test]
fn cubic_search_space_and_cyclic_shift() {
    let s = cubic();
    let p = Periods::compute(&s).unwrap();
    let map = find_characteristics(&p, &OrderedPartition::standard(3, 1)).unwrap();
    assert_eq!(map.candidates_tested, 36);
    for pt in enumerate_partitions(3, 1).unwrap() {
        let a = theta_constant(&p, &map.for_partition(&pt), 2).unwrap().log_hess().unwrap();
        let b = theta_constant(&p, &map.for_partition(&pt.cyclic_shift()), 2).unwrap().log_hess().unwrap();
        assert!(mp::rel_diff(&a[0][0], &b[0][0]) < 1e-35);
        assert!(a_period_defect(&p, &pt, &map.for_partition(&pt)).unwrap() < 1e-30);
    }
}

fn index_set(opts: &znkz::kz::SolveOptions) -> Vec<usize> {
    opts.cycles.iter().map(|c| if let CycleRef::A(i) = c { *i } else { panic!("A-cycles expected") }).collect()
}

/// theta_solution / f = (-1)^{L(L-1)/2} (2 pi i N^2)^{-L}, from the determinant
/// of the A-period identity over the chosen cycles.
fn expected_ratio(n: usize, l: usize) -> Complex {
    let base = Complex::with_val(P, mp::two_pi_i(P) * (n * n) as u32);
    let mut r = Complex::with_val(P, base.pow(l as i32)).recip();
    if (l * (l.saturating_sub(1)) / 2) % 2 == 1 {
        r = -r;
    }
    r
}

#[test]
fn theta_solution_is_proportional_to_integral_solution() {
    let hexic = spec(2, 3, &[(0., 0.), (1., 0.1), (2., -0.2), (3., 0.), (4., 0.3), (5., 0.)]);
    for s in [quartic(), cubic(), hexic] {
        let solver = Solver::new(&s).unwrap();
        let opts = solver.default_options().unwrap();
        let sol = solver.solve(&opts).unwrap();
        let p = solver.periods.as_ref().unwrap();
        let map = find_characteristics(p, &OrderedPartition::standard(s.n(), s.m())).unwrap();
        let idx = index_set(&opts);
        let ts = theta_solutions(p, &map, &idx).unwrap();
        assert!(ratio_spread(&ts, &sol.f) < 1e-25);
        let r = Complex::with_val(P, &ts[0] / &sol.f[0]);
        assert!(rel(&r, &expected_ratio(s.n(), s.ell())) < 1e-25);

        let pt = OrderedPartition::standard(s.n(), s.m());
        assert!(matches!(theta_solution(p, &map, &pt, &[]), Err(Error::BadIndices(_))));
    }
}

#[test]
fn thomae_and_composite_constancy() {
    let samples = [
        quartic(),
        spec(2, 2, &[(0., 0.), (1.1, 0.1), (2.05, -0.1), (3.2, 0.)]),
        spec(2, 2, &[(-0.1, 0.), (0.9, 0.1), (2.2, 0.), (3.1, 0.2)]),
    ];
    let ps = periods_along(&samples).unwrap();
    for pt in enumerate_partitions(2, 2).unwrap() {
        let rep = thomae_check_with(&ps, &pt).unwrap();
        assert!(rep.spread < 1e-15, "{}", rep.spread);
        assert!(rep.composite_spread < 1e-15);
    }
    assert_eq!(thomae_mu(2), Rational::from((1, 4)));
    assert_eq!(znkz::differentials::q_pair(0, 0, 2), Rational::from((1, 8)));
    assert_eq!(znkz::differentials::q_pair(1, 1, 3), Rational::from((8, 36)));
}

#[test]
fn smirnov_formula_matches_in_modulus() {
    let hexic = spec(2, 3, &[(0., 0.), (1., 0.1), (2., -0.2), (3., 0.), (4., 0.3), (5., 0.)]);
    for s in [quartic(), hexic] {
        let solver = Solver::new(&s).unwrap();
        let sol = solver.solve(&solver.default_options().unwrap()).unwrap();
        let p = solver.periods.as_ref().unwrap();
        let map = find_characteristics(p, &OrderedPartition::standard(2, s.m())).unwrap();
        let sm: Vec<Complex> = smirnov_sl2(p, &map).unwrap().into_iter().map(|x| x.1).collect();
        assert!(ratio_modulus_spread(&sm, &sol.f) < 1e-15);
    }
    let p = Periods::compute(&cubic()).unwrap();
    let map = find_characteristics(&p, &OrderedPartition::standard(3, 1)).unwrap();
    assert!(matches!(smirnov_sl2(&p, &map), Err(Error::WrongN(3))));
}
