//! Acceptance suite. Prints one line per criterion; exits non-zero if any fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rug::Complex;
use znkz::json::{fixture_curve, standard_fixtures};
use znkz::kz::{self, SolveOptions, Solver, Theorem};
use znkz::periods::Periods;
use znkz::theta::{self, Characteristics};
use znkz::verify::{admissible_indices, build_identity, mutation_verdict, run_all_indices, IdentityCase, IdentityId, Rel4Reading};
use znkz::{enumerate_partitions, mp, CurveSpec, OrderedPartition};

const P: u32 = 128;

type Check = Result<String, String>;

fn spec(n: usize, m: usize, pts: &[(f64, f64)], prec: u32) -> CurveSpec {
    CurveSpec::new(n, m, pts.iter().map(|&(a, b)| mp::c(prec, a, b)).collect(), prec).unwrap()
}

fn quartic() -> CurveSpec {
    spec(2, 2, &[(0., 0.), (1., 0.), (2., 0.), (3., 0.)], P)
}

fn cubic() -> CurveSpec {
    spec(3, 1, &[(0., 0.), (1., 0.), (2., 1.)], P)
}

fn below(what: &str, x: f64, tol: f64) -> Check {
    if x.is_finite() && x < tol {
        Ok(format!("{what} {x:.2e} < {tol:.0e}"))
    } else {
        Err(format!("{what} {x:.2e} >= {tol:.0e}"))
    }
}

fn within(t: Instant, limit: Duration) -> Check {
    if t.elapsed() < limit {
        Ok(String::new())
    } else {
        Err(format!("took {:.0?}, limit {limit:?}", t.elapsed()))
    }
}

fn all(parts: Vec<Check>) -> Check {
    let mut ok = Vec::new();
    for p in parts {
        match p {
            Ok(s) if !s.is_empty() => ok.push(s),
            Ok(_) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(ok.join("; "))
}

fn kz_residual() -> Check {
    let mut out = Vec::new();
    for s in [quartic(), cubic()] {
        let t = Instant::now();
        let solver = Solver::new(&s).map_err(|e| e.to_string())?;
        let opts = solver.default_options().map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        for p in 1..=s.count() {
            worst = worst.max(kz::kz_residual(&solver, &opts, p, None).map_err(|e| e.to_string())?);
        }
        out.push(below(&format!("N={} m={} residual", s.n(), s.m()), worst, 1e-6));
        out.push(within(t, Duration::from_secs(120)));
    }
    all(out)
}

fn pset_independence() -> Check {
    let t = Instant::now();
    let s = spec(3, 2, &[(0., 0.), (1., 0.2), (2., -0.1), (3., 0.), (4., 0.4), (5., 0.1)], P);
    let solver = Solver::new(&s).map_err(|e| e.to_string())?;
    let base = solver.default_options().map_err(|e| e.to_string())?;
    let psets = [vec![1, 2, 3], vec![2, 4, 6], vec![6, 5, 1]];
    let sols = psets
        .iter()
        .map(|p| solver.solve(&SolveOptions { pset: p.clone(), ..base.clone() }).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut worst: f64 = 0.0;
    for w in sols.windows(2) {
        worst = worst.max(kz::relative_spread(&w[0].f, &w[1].f));
    }
    all(vec![below("3 p-sets spread", worst, 1e-20), within(t, Duration::from_secs(600))])
}

fn theorems_agree() -> Check {
    let mut out = Vec::new();
    for s in [quartic(), cubic()] {
        let solver = Solver::new(&s).map_err(|e| e.to_string())?;
        let mut opts = solver.default_options().map_err(|e| e.to_string())?;
        opts.theorem = Theorem::Mu;
        opts.cross_check = true;
        let sol = solver.solve(&opts).map_err(|e| e.to_string())?;
        out.push(below(&format!("N={} disagreement", s.n()), sol.theorem_disagreement.unwrap_or(f64::NAN), 1e-25));
    }
    all(out)
}

fn singlet() -> Check {
    let mut out = Vec::new();
    for s in [quartic(), cubic()] {
        let solver = Solver::new(&s).map_err(|e| e.to_string())?;
        let sol = solver.solve(&solver.default_options().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        out.push(below(&format!("N={} singlet", s.n()), kz::singlet_residual(&s, &sol), 1e-20));
    }
    all(out)
}

fn characteristics(s: &CurveSpec) -> Result<(Periods, theta::CharacteristicMap), String> {
    let p = Periods::compute(s).map_err(|e| e.to_string())?;
    let map = theta::find_characteristics(&p, &OrderedPartition::standard(s.n(), s.m())).map_err(|e| e.to_string())?;
    Ok((p, map))
}

fn a_period_identity() -> Check {
    let mut out = Vec::new();
    for s in [quartic(), cubic()] {
        let (p, map) = characteristics(&s)?;
        let mut worst: f64 = 0.0;
        for pt in enumerate_partitions(s.n(), s.m()).map_err(|e| e.to_string())? {
            let ch: Characteristics = map.for_partition(&pt);
            worst = worst.max(theta::a_period_defect(&p, &pt, &ch).map_err(|e| e.to_string())?);
        }
        out.push(below(&format!("N={} defect", s.n()), worst, 1e-15));
    }
    all(out)
}

fn proportionality() -> Check {
    let mut out = Vec::new();
    for s in [quartic(), cubic()] {
        let solver = Solver::new(&s).map_err(|e| e.to_string())?;
        let opts = solver.default_options().map_err(|e| e.to_string())?;
        let sol = solver.solve(&opts).map_err(|e| e.to_string())?;
        let (p, map) = characteristics(&s)?;
        let idx: Vec<usize> = (1..=s.ell()).collect();
        let ts = theta::theta_solutions(&p, &map, &idx).map_err(|e| e.to_string())?;
        out.push(below(&format!("N={} ratio spread", s.n()), theta::ratio_spread(&ts, &sol.f), 1e-12));
    }
    all(out)
}

fn thomae() -> Check {
    let quartics = [
        quartic(),
        spec(2, 2, &[(0., 0.), (1.1, 0.1), (2.05, -0.1), (3.2, 0.)], P),
        spec(2, 2, &[(-0.1, 0.), (0.9, 0.1), (2.2, 0.), (3.1, 0.2)], P),
    ];
    let cubics = [
        cubic(),
        spec(3, 1, &[(0.1, 0.), (1., 0.1), (2.1, 0.9)], P),
        spec(3, 1, &[(0., -0.1), (0.9, 0.), (1.9, 1.1)], P),
    ];
    let mut out = Vec::new();
    for samples in [&quartics[..], &cubics[..]] {
        let (n, m) = (samples[0].n(), samples[0].m());
        let mut worst: f64 = 0.0;
        for pt in enumerate_partitions(n, m).map_err(|e| e.to_string())? {
            let rep = theta::thomae_check(samples, &pt).map_err(|e| e.to_string())?;
            worst = worst.max(rep.spread);
        }
        out.push(below(&format!("N={n} spread over 3 curves"), worst, 1e-12));
    }
    all(out)
}

fn smirnov() -> Check {
    let s = quartic();
    let solver = Solver::new(&s).map_err(|e| e.to_string())?;
    let sol = solver.solve(&solver.default_options().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (p, map) = characteristics(&s)?;
    let sm = theta::smirnov_sl2(&p, &map).map_err(|e| e.to_string())?;
    if sm.len() != 6 {
        return Err(format!("{} partitions, expected 6", sm.len()));
    }
    let by_pt: HashMap<&OrderedPartition, &Complex> = sm.iter().map(|(pt, v)| (pt, v)).collect();
    let aligned: Vec<Complex> = sol.partitions.iter().map(|pt| by_pt[pt].clone()).collect();
    below("modulus-ratio spread", theta::ratio_modulus_spread(&aligned, &sol.f), 1e-12)
}

fn identities() -> Check {
    let t = Instant::now();
    let mut cases = 0usize;
    for (n, m) in [(2, 1), (2, 2), (3, 1), (3, 2), (4, 1)] {
        let trials = if n == 4 { 20 } else { 100 };
        let pt = OrderedPartition::standard(n, m);
        for id in IdentityId::ALL {
            for r in run_all_indices(id, &pt, trials, 1).map_err(|e| e.to_string())? {
                if r.reading == Some(Rel4Reading::Shifted) {
                    continue;
                }
                cases += 1;
                if !r.pass {
                    return Err(format!("{id} N={n} m={m} {:?} witness {:?}", r.indices, r.witness));
                }
            }
        }
    }
    let mut mutants = 0usize;
    for (n, m) in [(2, 2), (3, 1), (3, 2)] {
        let pt = OrderedPartition::standard(n, m);
        for id in IdentityId::ALL {
            for (k, ix) in admissible_indices(id, n, m).into_iter().enumerate() {
                let case = IdentityCase::new(id, n, m, ix.clone()).with_partition(pt.clone());
                let expr = build_identity(&case).map_err(|e| e.to_string())?;
                match mutation_verdict(&expr, 5, k as u64).map_err(|e| e.to_string())? {
                    Some(v) if v.passed() => return Err(format!("mutant of {id} {ix:?} survived 5 trials")),
                    Some(_) => mutants += 1,
                    None => {}
                }
            }
        }
    }
    all(vec![Ok(format!("{cases} cases pass, {mutants} mutants caught")), within(t, Duration::from_secs(300))])
}

/// Standard Young tableaux of an N x m rectangle by counting lattice words.
fn rectangular_tableaux(n: usize, m: usize) -> u128 {
    let mut ways: HashMap<Vec<usize>, u128> = HashMap::from([(vec![0; n], 1)]);
    for _ in 0..n * m {
        let mut next = HashMap::new();
        for (rows, w) in ways {
            for r in 0..n {
                if rows[r] < m && (r == 0 || rows[r - 1] > rows[r]) {
                    let mut x = rows.clone();
                    x[r] += 1;
                    *next.entry(x).or_insert(0) += w;
                }
            }
        }
        ways = next;
    }
    ways.values().sum()
}

fn combinatorics() -> Check {
    for n in 2..=5 {
        let d = kz::dim_counts(n, 1).map_err(|e| e.to_string())?;
        if d.mult != 1 || d.i != 1 {
            return Err(format!("N={n}: mult {} I {}", d.mult, d.i));
        }
    }
    let d = kz::dim_counts(2, 2).map_err(|e| e.to_string())?;
    if d.mult != 2 {
        return Err(format!("mult(0, V^4) = {} for N=2", d.mult));
    }
    for n in 2..=4 {
        for m in 1..=3 {
            let d = kz::dim_counts(n, m).map_err(|e| e.to_string())?;
            if d.mult != rectangular_tableaux(n, m) {
                return Err(format!("N={n} m={m}: mult {} vs tableaux {}", d.mult, rectangular_tableaux(n, m)));
            }
            if n >= 3 && m >= 2 && d.ratio <= 1 {
                return Err(format!("N={n} m={m}: ratio {}", d.ratio));
            }
        }
    }
    Ok("mult matches tableau counts, ratio > 1 for N in 3..4, m in 2..3".into())
}

fn max_change(a: &[Complex], b: &[Complex]) -> f64 {
    a.iter().zip(b).map(|(x, y)| mp::abs_f64(&Complex::with_val(256, x - y))).fold(0.0, f64::max)
}

fn precision_hygiene() -> Check {
    let mut out = Vec::new();
    for (name, n, m, pts) in standard_fixtures() {
        let lo = fixture_curve(n, m, &pts, 128).map_err(|e| e.to_string())?;
        let hi = fixture_curve(n, m, &pts, 256).map_err(|e| e.to_string())?;
        let (pl, ph) = (Periods::compute(&lo).map_err(|e| e.to_string())?, Periods::compute(&hi).map_err(|e| e.to_string())?);
        let (dl, dh) = (&pl.data, &ph.data);
        let err = dl.err;
        // err bounds tau and sigma absolutely and the raw periods relatively
        let scale = |x: &znkz::linalg::CMat| mp::max_abs(&x.concat());
        let checks = [
            ("tau", max_change(&dl.tau.concat(), &dh.tau.concat()), err),
            ("sigma", max_change(&dl.sigma.concat(), &dh.sigma.concat()), err),
            ("A", max_change(&dl.a_matrix.concat(), &dh.a_matrix.concat()), err * scale(&dl.a_matrix)),
            ("B", max_change(&dl.b_matrix.concat(), &dh.b_matrix.concat()), err * scale(&dl.b_matrix)),
            ("D", max_change(&dl.d_coeffs.concat(), &dh.d_coeffs.concat()), err * scale(&dl.d_coeffs)),
        ];
        for (what, change, bound) in checks {
            if !(change < bound) {
                return Err(format!("{name} {what}: change {change:.2e} vs err {bound:.2e}"));
            }
        }
        let sl = Solver::with_periods(&lo, Some(pl.clone())).map_err(|e| e.to_string())?;
        let sh = Solver::with_periods(&hi, Some(ph.clone())).map_err(|e| e.to_string())?;
        let fl = sl.solve(&sl.default_options().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let fh = sh.solve(&sh.default_options().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        for k in 0..fl.fbar.len() {
            let dfbar = mp::abs_f64(&Complex::with_val(256, &fl.fbar[k] - &fh.fbar[k]));
            let rel_err = fl.err[k] / mp::abs_f64(&fl.fbar[k]).max(1e-300);
            let df = mp::abs_f64(&Complex::with_val(256, &fl.f[k] - &fh.f[k])) / mp::abs_f64(&fl.f[k]).max(1e-300);
            if !(dfbar < fl.err[k]) || !(df < rel_err) {
                return Err(format!("{name} partition {k}: fbar change {dfbar:.2e}, f change {df:.2e}, err {:.2e}", fl.err[k]));
            }
        }
        out.push(format!("{name} ok (err {err:.1e})"));
    }
    Ok(out.join(", "))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Check); 11] = [
        ("kz_residual", kz_residual),
        ("pset_independence", pset_independence),
        ("mu_and_zeta_determinants_agree", theorems_agree),
        ("singlet", singlet),
        ("a_period_theta_identity", a_period_identity),
        ("theta_proportionality", proportionality),
        ("thomae_constancy", thomae),
        ("smirnov_sl2", smirnov),
        ("exact_identities", identities),
        ("combinatorics", combinatorics),
        ("precision_doubling", precision_hygiene),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let t = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("[{:>2}] PASS {name} ({secs:.1}s) {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("[{:>2}] FAIL {name} ({secs:.1}s) {msg}", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
