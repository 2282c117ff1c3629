//! Integral solutions of the level-0 KZ equation and their checks.
//!
//! Components are computed in the normalized form
//! fbar_Lambda = det(int_{gamma_i} mu_{p_j}) / (Delta(p) prod_{i<j} (Lambda_i Lambda_j)),
//! which is single valued once the cycles are fixed; f_Lambda multiplies it
//! by Delta^{(N-1)/N^2} on the principal branch of log Delta.

use std::collections::HashMap;
use std::sync::RwLock;

use rug::{Complex, Integer, Rational};
use serde::Serialize;

use crate::curve::CurveSpec;
use crate::differentials::{mu_parts, zeta_poly, Kernel};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::mp::{self, Prec};
use crate::partition::{enumerate_partitions, OrderedPartition};
use crate::periods::{combine, Periods};
use crate::quadrature::Integral;

/// A basis cycle, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CycleRef {
    A(usize),
    B(usize),
}

impl CycleRef {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, idx) = s.split_at(1.min(s.len()));
        let i: usize = idx.parse().map_err(|_| Error::Input(format!("bad cycle {s:?}")))?;
        match kind {
            "A" | "a" => Ok(CycleRef::A(i)),
            "B" | "b" => Ok(CycleRef::B(i)),
            _ => Err(Error::Input(format!("bad cycle {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Theorem {
    /// mu determinant with a p-set
    Mu,
    /// zeta determinant
    Zeta,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub cycles: Vec<CycleRef>,
    /// 1-based branch indices
    pub pset: Vec<usize>,
    pub theorem: Theorem,
    /// also evaluate the other determinant and record the disagreement
    pub cross_check: bool,
}

impl SolveOptions {
    /// gamma_j = A_j and p-set {1..L}.
    pub fn default_for(spec: &CurveSpec) -> Self {
        let l = spec.ell();
        SolveOptions {
            cycles: (1..=l).map(CycleRef::A).collect(),
            pset: (1..=l).collect(),
            theorem: Theorem::Mu,
            cross_check: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolutionVector {
    pub partitions: Vec<OrderedPartition>,
    pub fbar: Vec<Complex>,
    pub f: Vec<Complex>,
    /// absolute error estimate of each fbar
    pub err: Vec<f64>,
    pub cycles: Vec<CycleRef>,
    pub pset: Vec<usize>,
    pub theorem: Theorem,
    pub prec: Prec,
    /// principal log Delta used for Delta^{(N-1)/N^2}
    pub log_delta: Complex,
    /// max_Lambda |fbar_mu - fbar_zeta| / max_Lambda |fbar_mu|
    pub theorem_disagreement: Option<f64>,
}

impl SolutionVector {
    pub fn index(&self) -> HashMap<&OrderedPartition, usize> {
        self.partitions.iter().enumerate().map(|(i, p)| (p, i)).collect()
    }

    pub fn max_abs_fbar(&self) -> f64 {
        mp::max_abs(&self.fbar)
    }

    pub fn max_err(&self) -> f64 {
        self.err.iter().cloned().fold(0.0, f64::max)
    }
}

/// Max over Lambda of |a - b| relative to max |a|.
pub fn relative_spread(a: &[Complex], b: &[Complex]) -> f64 {
    let prec = a.first().map(|x| x.prec().0).unwrap_or(64);
    let mut d: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        d = d.max(mp::abs_f64(&Complex::with_val(prec, x - y)));
    }
    d / mp::max_abs(a).max(1e-300)
}

type MuKey = (u64, usize);

/// Curve, periods and cached cycle integrals of the mu forms.
pub struct Solver {
    pub spec: CurveSpec,
    pub periods: Option<Periods>,
    partitions: Vec<OrderedPartition>,
    mu_cache: RwLock<HashMap<MuKey, Vec<Integral>>>,
}

impl Solver {
    pub fn new(spec: &CurveSpec) -> Result<Self> {
        let periods = if spec.genus() == 0 { None } else { Some(Periods::compute(spec)?) };
        Self::with_periods(spec, periods)
    }

    pub fn with_periods(spec: &CurveSpec, periods: Option<Periods>) -> Result<Self> {
        Ok(Solver {
            spec: spec.clone(),
            periods,
            partitions: enumerate_partitions(spec.n(), spec.m())?,
            mu_cache: RwLock::new(HashMap::new()),
        })
    }

    /// Solver on a nearby curve with cycles regenerated from this one's codes.
    pub fn like(&self, spec: &CurveSpec) -> Result<Self> {
        let periods = match &self.periods {
            Some(p) => Some(Periods::compute_like(spec, &p.homology)?),
            None => None,
        };
        Solver::with_periods(spec, periods)
    }

    /// Default cycles: the lexicographically first L-subset of A-cycles on
    /// which the zeta periods of the standard partition are well
    /// conditioned (A_1..A_L can be degenerate when several A-cycles are
    /// deck translates of each other); p-set {1..L}.
    pub fn default_options(&self) -> Result<SolveOptions> {
        let mut opts = SolveOptions::default_for(&self.spec);
        let l = self.spec.ell();
        let Some(per) = &self.periods else { return Ok(opts) };
        let g = per.genus();
        if l > g {
            return Err(Error::GenusTooSmall { ell: l, available: g });
        }
        let prec = self.spec.prec();
        let std = OrderedPartition::standard(self.spec.n(), self.spec.m());
        let cols: Vec<Vec<Integral>> = (1..=l)
            .map(|j| per.family.integrate(&Kernel::Zeta { poly: zeta_poly(self.spec.lambdas(), &std, j, l) }))
            .collect();
        let rows: Vec<Vec<Complex>> = (0..g)
            .map(|i| cols.iter().map(|c| combine(prec, per.homology.a_cycle(i), c).0).collect())
            .collect();
        let mut subset: Vec<usize> = (0..l).collect();
        loop {
            let m: CMat = subset.iter().map(|&i| rows[i].clone()).collect();
            let d = mp::abs_f64(&linalg::det(&m, prec));
            let hadamard: f64 = m.iter().map(|r| r.iter().map(|x| mp::abs_f64(x).powi(2)).sum::<f64>().sqrt()).product();
            if d > 1e-8 * hadamard {
                opts.cycles = subset.iter().map(|&i| CycleRef::A(i + 1)).collect();
                return Ok(opts);
            }
            // next subset in lexicographic order
            let mut k = l;
            loop {
                if k == 0 {
                    return Err(Error::RankDeficient { rank: 0, expected: l });
                }
                k -= 1;
                if subset[k] < g - l + k {
                    subset[k] += 1;
                    for t in k + 1..l {
                        subset[t] = subset[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    pub fn partitions(&self) -> &[OrderedPartition] {
        &self.partitions
    }

    fn cycle_row(&self, c: CycleRef) -> Result<&[i64]> {
        let l = self.spec.ell();
        let p = self.periods.as_ref().ok_or(Error::GenusTooSmall { ell: l, available: 0 })?;
        let g = p.genus();
        match c {
            CycleRef::A(i) | CycleRef::B(i) if i == 0 || i > g => Err(Error::GenusTooSmall { ell: i, available: g }),
            CycleRef::A(i) => Ok(p.homology.a_cycle(i - 1)),
            CycleRef::B(i) => Ok(p.homology.b_cycle(i - 1)),
        }
    }

    /// Integrals of mu_p^Lambda over every elementary cycle; p is 0-based.
    fn mu_integrals(&self, partition: &OrderedPartition, p: usize) -> Vec<Integral> {
        let key = (partition.mask(partition.block_of(p)), p);
        if let Some(v) = self.mu_cache.read().unwrap().get(&key) {
            return v.clone();
        }
        let (coef, roots) = mu_parts(self.spec.lambdas(), partition, p);
        let kernel = Kernel::Mu { p, coef, roots };
        let v = self.periods.as_ref().expect("genus checked").family.integrate(&kernel);
        self.mu_cache.write().unwrap().insert(key, v.clone());
        v
    }

    /// Matrix (int_{gamma_i} form_j) with entrywise errors.
    fn matrix(&self, rows: &[&[i64]], cols: &[Vec<Integral>]) -> (CMat, Vec<Vec<f64>>) {
        let prec = self.spec.prec();
        let mut m = Vec::with_capacity(rows.len());
        let mut e = Vec::with_capacity(rows.len());
        for r in rows {
            let mut mr = Vec::new();
            let mut er = Vec::new();
            for c in cols {
                let (v, err) = combine(prec, r, c);
                mr.push(v);
                er.push(err);
            }
            m.push(mr);
            e.push(er);
        }
        (m, e)
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<SolutionVector> {
        let spec = &self.spec;
        let prec = spec.prec();
        let l = spec.ell();
        if opts.cycles.len() != l {
            return Err(Error::BadParameters(format!("{} cycles given, L = {l}", opts.cycles.len())));
        }
        for (i, c) in opts.cycles.iter().enumerate() {
            if opts.cycles[..i].contains(c) {
                return Err(Error::BadParameters("repeated cycle".into()));
            }
        }
        let need_mu = opts.theorem == Theorem::Mu || opts.cross_check;
        let need_zeta = opts.theorem == Theorem::Zeta || opts.cross_check;
        let mut vandermonde = mp::one(prec);
        if need_mu {
            if opts.pset.len() != l {
                return Err(Error::BadParameters(format!("{} p-values given, L = {l}", opts.pset.len())));
            }
            for (i, &p) in opts.pset.iter().enumerate() {
                if p == 0 || p > spec.count() {
                    return Err(Error::InvalidIndex(format!("branch index {p}")));
                }
                if opts.pset[..i].contains(&p) {
                    return Err(Error::DegenerateVandermonde);
                }
            }
            vandermonde = pset_vandermonde(spec, &opts.pset);
        }
        let rows: Vec<&[i64]> = opts.cycles.iter().map(|&c| self.cycle_row(c)).collect::<Result<_>>()?;

        let solve_one = |pt: &OrderedPartition| -> (Option<(Complex, f64)>, Option<(Complex, f64)>) {
            let denom = block_products(spec, pt);
            let mu = need_mu.then(|| {
                let cols: Vec<Vec<Integral>> = opts.pset.iter().map(|&p| self.mu_integrals(pt, p - 1)).collect();
                let (m, e) = self.matrix(&rows, &cols);
                let (d, de) = det_with_err(&m, &e, prec);
                let scale = Complex::with_val(prec, &denom * &vandermonde);
                let fb = Complex::with_val(prec, &d / &scale);
                let fe = de / mp::abs_f64(&scale);
                (fb, fe)
            });
            let zeta = need_zeta.then(|| {
                let fam = &self.periods.as_ref().expect("genus checked").family;
                let cols: Vec<Vec<Integral>> = (1..=l)
                    .map(|j| fam.integrate(&Kernel::Zeta { poly: zeta_poly(spec.lambdas(), pt, j, l) }))
                    .collect();
                let (m, e) = self.matrix(&rows, &cols);
                let (d, de) = det_with_err(&m, &e, prec);
                let fb = Complex::with_val(prec, &d / &denom);
                (fb, de / mp::abs_f64(&denom))
            });
            (mu, zeta)
        };
        let results = crate::par::map(&self.partitions, solve_one);

        let log_delta = spec.delta().ln();
        let n = spec.n() as i64;
        let pw = mp::from_rational(prec, &Rational::from((n - 1, n * n)));
        let delta_pow = Complex::with_val(prec, &log_delta * &pw).exp();
        let pick = |r: &(Option<(Complex, f64)>, Option<(Complex, f64)>)| match opts.theorem {
            Theorem::Mu => r.0.clone().unwrap(),
            Theorem::Zeta => r.1.clone().unwrap(),
        };
        let (fbar, err): (Vec<Complex>, Vec<f64>) = results.iter().map(pick).unzip();
        let theorem_disagreement = opts.cross_check.then(|| {
            let a: Vec<Complex> = results.iter().map(|r| r.0.clone().unwrap().0).collect();
            let b: Vec<Complex> = results.iter().map(|r| r.1.clone().unwrap().0).collect();
            relative_spread(&a, &b)
        });
        let f = fbar.iter().map(|x| Complex::with_val(prec, x * &delta_pow)).collect();
        Ok(SolutionVector {
            partitions: self.partitions.clone(),
            fbar,
            f,
            err,
            cycles: opts.cycles.clone(),
            pset: opts.pset.clone(),
            theorem: opts.theorem,
            prec,
            log_delta,
            theorem_disagreement,
        })
    }
}

/// Delta(p_1..p_L) = det(lambda_{p_j}^{L-i}).
pub fn pset_vandermonde(spec: &CurveSpec, pset: &[usize]) -> Complex {
    let prec = spec.prec();
    let l = pset.len();
    let m: CMat = (0..l)
        .map(|i| pset.iter().map(|&p| mp::powi(spec.lambda(p - 1), (l - 1 - i) as i32)).collect())
        .collect();
    if l == 0 {
        mp::one(prec)
    } else {
        linalg::det(&m, prec)
    }
}

/// prod_{i<j} (Lambda_i Lambda_j).
pub fn block_products(spec: &CurveSpec, pt: &OrderedPartition) -> Complex {
    let prec = spec.prec();
    let mut acc = mp::one(prec);
    for i in 1..=pt.n() {
        for j in i + 1..=pt.n() {
            for &r in pt.block(i) {
                for &s in pt.block(j) {
                    acc *= Complex::with_val(prec, spec.lambda(r) - spec.lambda(s));
                }
            }
        }
    }
    acc
}

fn minor(m: &CMat, i: usize, j: usize) -> CMat {
    m.iter()
        .enumerate()
        .filter(|&(r, _)| r != i)
        .map(|(_, row)| row.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, x)| x.clone()).collect())
        .collect()
}

/// Determinant and a first-order error bound sum |cofactor_ij| e_ij.
fn det_with_err(m: &CMat, e: &[Vec<f64>], prec: Prec) -> (Complex, f64) {
    let n = m.len();
    if n == 0 {
        return (mp::one(prec), 0.0);
    }
    let d = linalg::det(m, prec);
    let mut err = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = if n == 1 { 1.0 } else { mp::abs_f64(&linalg::det(&minor(m, i, j), prec)) };
            err += c * e[i][j];
        }
    }
    (d, err)
}

/// Largest fbar error relative to the largest |fbar|.
pub fn relative_error(sol: &SolutionVector) -> f64 {
    sol.max_err() / sol.max_abs_fbar().max(1e-300)
}

/// Right-hand side of the component KZ equation for fbar at Lambda, as
/// (value, sum of term moduli). p is 0-based.
fn kz_rhs(spec: &CurveSpec, sol: &SolutionVector, idx: &HashMap<&OrderedPartition, usize>, k: usize, p: usize) -> (Complex, f64) {
    let prec = spec.prec();
    let pt = &sol.partitions[k];
    let n = spec.n() as u32;
    let mut acc = Complex::new(prec);
    let mut size = 0.0;
    for j in 0..spec.count() {
        if pt.block_of(j) == pt.block_of(p) {
            continue;
        }
        let d = Complex::with_val(prec, spec.lambda(p) - spec.lambda(j));
        let other = &sol.fbar[idx[&pt.swapped(p, j)]];
        let t1 = -(Complex::with_val(prec, &sol.fbar[k] / &d) / n);
        let t2 = Complex::with_val(prec, other / &d) / n;
        size += mp::abs_f64(&t1) + mp::abs_f64(&t2);
        acc += t1;
        acc += t2;
    }
    (acc, size)
}

/// Richardson-extrapolated finite-difference residual of the component
/// KZ equation in lambda_p (1-based p), max over Lambda of
/// |D - RHS| / (|D| + sum |RHS terms|).
pub fn kz_residual(solver: &Solver, opts: &SolveOptions, p: usize, h: Option<f64>) -> Result<f64> {
    let spec = &solver.spec;
    if p == 0 || p > spec.count() {
        return Err(Error::InvalidIndex(format!("branch index {p}")));
    }
    let prec = spec.prec();
    let h = h.unwrap_or(1e-4 * spec.min_dist());
    if !(h > 0.0) || h >= spec.min_dist() / 3.0 {
        return Err(Error::StepTooLarge);
    }
    let base = solver.solve(opts)?;
    let idx = base.index();
    let at = |step: f64| -> Result<SolutionVector> {
        let s2 = spec.perturbed(p - 1, &mp::c(prec, step, 0.0))?;
        solver.like(&s2)?.solve(opts)
    };
    let steps = [h, -h, h / 2.0, -h / 2.0];
    let sols = crate::par::try_map(&steps, |&s| at(s))?;
    let mut worst: f64 = 0.0;
    for k in 0..base.partitions.len() {
        let d1 = Complex::with_val(prec, &sols[0].fbar[k] - &sols[1].fbar[k]) / (2.0 * h);
        let d2 = Complex::with_val(prec, &sols[2].fbar[k] - &sols[3].fbar[k]) / h;
        let d = (Complex::with_val(prec, &d2 * 4u32) - d1) / 3u32;
        let (rhs, size) = kz_rhs(spec, &base, &idx, k, p - 1);
        let denom = mp::abs_f64(&d) + size;
        if denom == 0.0 {
            continue;
        }
        worst = worst.max(mp::abs_f64(&Complex::with_val(prec, &d - &rhs)) / denom);
    }
    Ok(worst)
}

/// max over Lambda, ordered block pairs (r, t) and q in Lambda_t of
/// |fbar_Lambda + sum_{x in Lambda_r} fbar_{Lambda^{(x q)}}|, relative to max |fbar|.
pub fn singlet_residual(spec: &CurveSpec, sol: &SolutionVector) -> f64 {
    let idx = sol.index();
    let n = spec.n();
    let mut worst: f64 = 0.0;
    for (k, pt) in sol.partitions.iter().enumerate() {
        for r in 1..=n {
            for t in 1..=n {
                if r == t {
                    continue;
                }
                for &q in pt.block(t) {
                    let mut acc = sol.fbar[k].clone();
                    for &x in pt.block(r) {
                        acc += &sol.fbar[idx[&pt.swapped(x, q)]];
                    }
                    worst = worst.max(mp::abs_f64(&acc));
                }
            }
        }
    }
    worst / sol.max_abs_fbar().max(1e-300)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimCounts {
    pub mult: Integer,
    pub i: Integer,
    pub ratio: Rational,
}

/// mult(0, V^{Nm}) and I(N, m) with their ratio.
pub fn dim_counts(n: usize, m: usize) -> Result<DimCounts> {
    if n < 2 || m < 1 {
        return Err(Error::BadParameters(format!("N = {n}, m = {m}")));
    }
    let nm = (n * m) as u32;
    let mut mult = Integer::from(Integer::factorial(nm));
    for k in 0..n {
        for j in 0..m {
            mult /= (m + k - j) as u32;
        }
    }
    let i = Integer::from(Integer::binomial_u(nm - 2, ((n - 1) * m - 1) as u32));
    let ratio = Rational::from((mult.clone(), i.clone()));
    Ok(DimCounts { mult, i, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dim_counts_small() {
        let d = dim_counts(2, 2).unwrap();
        assert_eq!((d.mult.to_u64(), d.i.to_u64()), (Some(2), Some(2)));
        let d = dim_counts(3, 2).unwrap();
        assert_eq!(d.ratio, Rational::from((5, 4)));
        for n in 2..=5 {
            let d = dim_counts(n, 1).unwrap();
            assert_eq!((d.mult.to_u64(), d.i.to_u64()), (Some(1), Some(1)));
        }
    }

    #[test]
    fn mult_is_hook_length_count() {
        // number of standard Young tableaux of the N x m rectangle, brute force
        fn syt(rows: &mut Vec<usize>, m: usize) -> u64 {
            if rows.iter().all(|&r| r == m) {
                return 1;
            }
            let mut total = 0;
            for i in 0..rows.len() {
                if rows[i] < m && (i == 0 || rows[i - 1] > rows[i]) {
                    rows[i] += 1;
                    total += syt(rows, m);
                    rows[i] -= 1;
                }
            }
            total
        }
        for (n, m) in [(2, 2), (2, 3), (3, 2), (3, 3), (4, 2)] {
            let want = syt(&mut vec![0; n], m);
            assert_eq!(dim_counts(n, m).unwrap().mult.to_u64(), Some(want));
        }
    }

    #[test]
    fn genus_zero_solution() {
        let spec = CurveSpec::new(2, 1, vec![mp::c(128, 0.0, 0.0), mp::c(128, 2.0, 1.0)], 128).unwrap();
        let s = Solver::new(&spec).unwrap();
        let sol = s.solve(&SolveOptions::default_for(&spec)).unwrap();
        assert_eq!(sol.f.len(), 2);
        // f = Delta^{1/4} / (Lambda_1 Lambda_2)
        let delta = spec.delta();
        let want = Complex::with_val(128, delta.clone().ln() / 4u32).exp() / Complex::with_val(128, spec.lambda(0) - spec.lambda(1));
        assert!(mp::rel_diff(&sol.f[0], &want) < 1e-35);
        assert!(singlet_residual(&spec, &sol) < 1e-35);
    }
}
