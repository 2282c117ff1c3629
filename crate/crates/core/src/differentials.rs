//! The differentials on the curve: holomorphic w^(a)_b = z^(b-1) dz / s^a,
//! the meromorphic mu_p^Lambda and zeta_j^Lambda, the exact form
//! N d(s^(N-1)/(z - lambda_p)), and the spin half-differentials f_l.

use rug::{Complex, Rational};
use serde::{Deserialize, Serialize};

use crate::curve::{BranchFrame, CurveSpec, SheetPoint};
use crate::error::{Error, Result};
use crate::mp::{self, Prec};
use crate::partition::OrderedPartition;
use crate::poly::{self, Poly, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

/// A differential addressed by kind and parameters. Branch point indices
/// are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum DifferentialRef {
    Holo { alpha: usize, beta: usize },
    Mu { partition: OrderedPartition, p: usize },
    Zeta { partition: OrderedPartition, j: usize },
    ExactPart { p: usize },
    SpinF { l: Rational, partition: OrderedPartition, sign: Sign },
}

impl DifferentialRef {
    pub fn is_half(&self) -> bool {
        matches!(self, DifferentialRef::SpinF { .. })
    }

    /// Parses "holo:a=1,b=2", "mu:p=4", "zeta:j=2", "exact:p=1"; partition
    /// dependent kinds take the supplied partition.
    pub fn parse(s: &str, partition: &OrderedPartition) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut a = None;
        let mut b = None;
        for kv in rest.split(',').filter(|x| !x.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Input(format!("bad form spec {s:?}")))?;
            let v: usize = v.trim().parse().map_err(|_| Error::Input(format!("bad form spec {s:?}")))?;
            match k.trim() {
                "a" | "p" | "j" => a = Some(v),
                "b" => b = Some(v),
                _ => return Err(Error::Input(format!("bad form spec {s:?}"))),
            }
        }
        let need = |x: Option<usize>| x.ok_or_else(|| Error::Input(format!("bad form spec {s:?}")));
        Ok(match kind {
            "holo" => DifferentialRef::Holo { alpha: need(a)?, beta: need(b)? },
            "mu" => DifferentialRef::Mu { partition: partition.clone(), p: need(a)? },
            "zeta" => DifferentialRef::Zeta { partition: partition.clone(), j: need(a)? },
            "exact" => DifferentialRef::ExactPart { p: need(a)? },
            _ => return Err(Error::Input(format!("unknown form kind {kind:?}"))),
        })
    }
}

/// The (alpha, beta) labels of the holomorphic basis in flattened order.
pub fn holo_labels(n: usize, m: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for alpha in 1..n {
        for beta in 1..alpha * m {
            v.push((alpha, beta));
        }
    }
    v
}

/// Flattened index of w^(alpha)_beta.
pub fn holo_index(n: usize, m: usize, alpha: usize, beta: usize) -> usize {
    holo_labels(n, m).iter().position(|&x| x == (alpha, beta)).expect("valid holo label")
}

// ---------------------------------------------------------------- exponents

fn frac(a: &Rational) -> Rational {
    let fl = a.clone().floor();
    Rational::from(a - fl)
}

/// q_l(i) = (1-N)/(2N) + frac((l + i + (N-1)/2)/N).
pub fn spin_exponent(l: &Rational, i: i64, n: usize) -> Rational {
    let n_i = n as i64;
    let half = Rational::from((n_i - 1, 2));
    let arg = Rational::from(l + i) + half;
    let arg = arg / n_i;
    Rational::from((1 - n_i, 2 * n_i)) + frac(&arg)
}

/// The label set {-(N-1)/2, .., (N-1)/2}.
pub fn spin_labels(n: usize) -> Vec<Rational> {
    let n_i = n as i64;
    (0..n_i).map(|j| Rational::from((2 * j - (n_i - 1), 2))).collect()
}

/// q(i, j) = sum over labels of q_l(i) q_l(j).
pub fn q_pair(i: i64, j: i64, n: usize) -> Rational {
    spin_labels(n)
        .iter()
        .map(|l| spin_exponent(l, i, n) * spin_exponent(l, j, n))
        .fold(Rational::new(), |a, b| a + b)
}

/// Exponents e_i with f_{sign l}(x, Lambda^sign) = prod (z - lambda_i)^{e_i}.
pub fn spin_exponents(l: &Rational, partition: &OrderedPartition, sign: Sign) -> Vec<Rational> {
    let n = partition.n();
    partition
        .ks()
        .iter()
        .map(|&k| match sign {
            Sign::Plus => spin_exponent(l, (k % n) as i64, n),
            Sign::Minus => {
                let km = (n - k % n) % n;
                spin_exponent(&Rational::from(-l), km as i64, n)
            }
        })
        .collect()
}

// --------------------------------------------------------- generic pieces

/// zeta_j^Lambda = P(z) dz / s with P returned here.
pub fn zeta_poly<T: Scalar>(lams: &[T], partition: &OrderedPartition, j: usize, ell: usize) -> Poly<T> {
    let one = lams[0].one_like();
    let n = partition.n();
    let mut acc: Poly<T> = Vec::new();
    for r in 1..=n {
        let inside: Vec<&T> = partition.block(r).iter().map(|&i| &lams[i]).collect();
        let outside: Vec<&T> = (0..lams.len()).filter(|&i| partition.block_of(i) != r).map(|i| &lams[i]).collect();
        let g_in = poly::from_roots(inside, &one);
        let g_out = poly::from_roots(outside, &one);
        let q = poly::derivative(&poly::shift_down(&g_out, ell - j + 1));
        acc = poly::add(&acc, &poly::mul(&g_in, &q));
    }
    acc
}

/// Constant g^{(Lambda_r)}(lambda_p) = prod_{j not in Lambda_r} (lambda_p - lambda_j)
/// and the roots of g^{(p)}_{Lambda_r}(z); p is 0-based.
pub fn mu_parts<T: Scalar>(lams: &[T], partition: &OrderedPartition, p: usize) -> (T, Vec<usize>) {
    let r = partition.block_of(p);
    let mut c = lams[0].one_like();
    let mut roots = Vec::new();
    for j in 0..lams.len() {
        if partition.block_of(j) != r {
            c = c.mul(&lams[p].sub(&lams[j]));
        } else if j != p {
            roots.push(j);
        }
    }
    (c, roots)
}

// ------------------------------------------------------------ evaluation

/// Per-point data shared by all forms evaluated at the same point.
#[derive(Clone, Debug)]
pub struct NodeCache {
    pub z: Complex,
    pub diffs: Vec<Complex>,
    /// (1/s)^a for a = 0..N-1
    pub inv_s: Vec<Complex>,
    pub logs: Vec<Complex>,
}

impl NodeCache {
    pub fn new(spec: &CurveSpec, x: &SheetPoint) -> Self {
        let prec = spec.prec();
        let diffs: Vec<Complex> = spec.lambdas().iter().map(|l| Complex::with_val(prec, &x.z - l)).collect();
        let s = x.s(spec.n());
        let is = Complex::with_val(prec, s.recip_ref());
        let mut inv_s = vec![mp::one(prec)];
        for a in 1..spec.n() {
            let v = Complex::with_val(prec, &inv_s[a - 1] * &is);
            inv_s.push(v);
        }
        NodeCache { z: x.z.clone(), diffs, inv_s, logs: x.logs.clone() }
    }
}

/// A form with its z-independent data precomputed.
#[derive(Clone, Debug)]
pub enum Kernel {
    Holo { alpha: usize, beta: usize },
    Mu { p: usize, coef: Complex, roots: Vec<usize> },
    Zeta { poly: Vec<Complex> },
    Exact { p: usize, n: usize },
    Spin { exps: Vec<Complex> },
}

impl Kernel {
    pub fn prepare(spec: &CurveSpec, form: &DifferentialRef) -> Result<Self> {
        let n = spec.n();
        let m = spec.m();
        let check_part = |pt: &OrderedPartition| -> Result<()> {
            if pt.n() != n || pt.m() != m {
                Err(Error::InvalidIndex("partition shape does not match the curve".into()))
            } else {
                Ok(())
            }
        };
        let check_p = |p: usize| -> Result<usize> {
            if p == 0 || p > spec.count() {
                Err(Error::InvalidIndex(format!("branch index {p} outside 1..{}", spec.count())))
            } else {
                Ok(p - 1)
            }
        };
        Ok(match form {
            DifferentialRef::Holo { alpha, beta } => {
                if *alpha == 0 || *alpha >= n || *beta == 0 || *beta >= alpha * m {
                    return Err(Error::InvalidIndex(format!("holo ({alpha},{beta})")));
                }
                Kernel::Holo { alpha: *alpha, beta: *beta }
            }
            DifferentialRef::Mu { partition, p } => {
                check_part(partition)?;
                let p = check_p(*p)?;
                let (coef, roots) = mu_parts(spec.lambdas(), partition, p);
                Kernel::Mu { p, coef, roots }
            }
            DifferentialRef::Zeta { partition, j } => {
                check_part(partition)?;
                if *j == 0 || *j > spec.ell() {
                    return Err(Error::InvalidIndex(format!("zeta index {j} outside 1..{}", spec.ell())));
                }
                Kernel::Zeta { poly: zeta_poly(spec.lambdas(), partition, *j, spec.ell()) }
            }
            DifferentialRef::ExactPart { p } => Kernel::Exact { p: check_p(*p)?, n },
            DifferentialRef::SpinF { l, partition, sign } => {
                check_part(partition)?;
                let exps = spin_exponents(l, partition, *sign)
                    .iter()
                    .map(|q| mp::from_rational(spec.prec(), q))
                    .collect();
                Kernel::Spin { exps }
            }
        })
    }

    pub fn is_half(&self) -> bool {
        matches!(self, Kernel::Spin { .. })
    }

    /// Coefficient relative to dz (or sqrt(dz) for spin forms).
    pub fn eval(&self, x: &NodeCache) -> Complex {
        let prec = x.z.prec().0;
        match self {
            Kernel::Holo { alpha, beta } => {
                let zp = mp::powi(&x.z, (*beta - 1) as i32);
                Complex::with_val(prec, &zp * &x.inv_s[*alpha])
            }
            Kernel::Mu { p, coef, roots } => {
                let mut v = coef.clone();
                for &j in roots {
                    v *= &x.diffs[j];
                }
                v /= &x.diffs[*p];
                v *= &x.inv_s[1];
                v
            }
            Kernel::Zeta { poly } => {
                let v = poly::eval(poly, &x.z);
                Complex::with_val(prec, &v * &x.inv_s[1])
            }
            Kernel::Exact { p, n } => {
                // N d(s^{N-1}/(z-a)) = f/(z-a)^2 [ (N-1)(z-a) sum_j 1/(z-l_j) - N ] dz/s
                let mut f = mp::one(prec);
                let mut sum = Complex::new(prec);
                for d in &x.diffs {
                    f *= d;
                    sum += Complex::with_val(prec, d.recip_ref());
                }
                let za = &x.diffs[*p];
                let mut br = Complex::with_val(prec, za * &sum);
                br *= (*n - 1) as u32;
                br -= *n as u32;
                let mut v = f * br;
                v /= Complex::with_val(prec, za * za);
                v *= &x.inv_s[1];
                v
            }
            Kernel::Spin { exps } => {
                let mut t = Complex::new(prec);
                for (e, l) in exps.iter().zip(&x.logs) {
                    if !e.is_zero() {
                        t += Complex::with_val(prec, e * l);
                    }
                }
                t.exp()
            }
        }
    }
}

fn pole_guard(spec: &CurveSpec, x: &SheetPoint) -> Result<()> {
    let z = crate::curve::to64(&x.z);
    for j in 0..spec.count() {
        if (z - spec.lambda64(j)).norm() < spec.clearance() {
            return Err(Error::PoleHit);
        }
    }
    Ok(())
}

/// Value of `form` at x relative to dz (sqrt(dz) for spin forms).
pub fn eval_form(spec: &CurveSpec, form: &DifferentialRef, x: &SheetPoint) -> Result<Complex> {
    let k = Kernel::prepare(spec, form)?;
    pole_guard(spec, x)?;
    Ok(k.eval(&NodeCache::new(spec, x)))
}

/// sum_j zeta_j lambda_p^{L-j} - mu_p - N d(s^{N-1}/(z-lambda_p)) at (z, sheet).
pub fn exact_relation_defect(
    spec: &CurveSpec,
    partition: &OrderedPartition,
    p: usize,
    z: &Complex,
    sheet: usize,
) -> Result<Complex> {
    let x = spec.point_on_sheet(z, sheet)?;
    pole_guard(spec, &x)?;
    let node = NodeCache::new(spec, &x);
    let prec = spec.prec();
    let ell = spec.ell();
    let lp = Kernel::prepare(spec, &DifferentialRef::ExactPart { p })?;
    let mut acc = Complex::new(prec);
    for j in 1..=ell {
        let zk = Kernel::prepare(spec, &DifferentialRef::Zeta { partition: partition.clone(), j })?;
        let w = mp::powi(spec.lambda(p - 1), (ell - j) as i32);
        acc += zk.eval(&node) * w;
    }
    let mu = Kernel::prepare(spec, &DifferentialRef::Mu { partition: partition.clone(), p })?;
    acc -= mu.eval(&node);
    acc -= lp.eval(&node);
    Ok(acc)
}

// ---------------------------------------------------- values at Q_p

/// Number of sample points on the t-circle.
fn circle_points(prec: Prec) -> usize {
    (2 * prec as usize + 64).div_ceil(8) * 8
}

/// Fourier modes c_0 and c_{-1..-3} of the local coefficient on |t| = rho.
fn local_modes(spec: &CurveSpec, frame: &BranchFrame, kernel: &Kernel, rho_z: f64) -> (Complex, Vec<f64>, f64) {
    let prec = spec.prec();
    let n = spec.n();
    let k = circle_points(prec);
    let log_rho = Complex::with_val(prec, rug::Float::with_val(prec, rho_z).ln() / n as u32);
    let theta0 = frame.anchor_log_t(n).imag().clone();
    let pts: Vec<usize> = (0..k).collect();
    let vals: Vec<(Complex, Complex)> = crate::par::map(&pts, |&i| {
        let mut th = mp::pi(prec) * 2u32;
        th *= i as u32;
        th /= k as u32;
        th += &theta0;
        let log_t = Complex::with_val(prec, &log_rho + Complex::with_val(prec, (rug::Float::new(prec), th)));
        let pt = frame.point_at(spec, &log_t);
        let node = NodeCache::new(spec, &pt);
        let v = kernel.eval(&node);
        let jac = if kernel.is_half() {
            let mut e = log_t.clone() * (n - 1) as u32;
            e /= 2u32;
            e.exp() * rug::Float::with_val(prec, n).sqrt()
        } else {
            (log_t.clone() * (n - 1) as u32).exp() * n as u32
        };
        (v * jac, log_t)
    });
    let mut c0 = Complex::new(prec);
    let mut neg = vec![Complex::new(prec); 3];
    let mut maxabs: f64 = 0.0;
    for (g, log_t) in &vals {
        c0 += g;
        maxabs = maxabs.max(mp::abs_f64(g));
        for (j, slot) in neg.iter_mut().enumerate() {
            let tj = (log_t.clone() * (j + 1) as u32).exp();
            *slot += Complex::with_val(prec, g * &tj);
        }
    }
    c0 /= k as u32;
    let rho_t = rho_z.powf(1.0 / n as f64);
    let negs = neg
        .iter()
        .enumerate()
        .map(|(j, c)| mp::abs_f64(c) / k as f64 * rho_t.powi(-(j as i32 + 1)))
        .collect();
    (c0, negs, maxabs)
}

/// Coefficient of dt (sqrt(dt) for spin forms) at Q_p, t = (z - lambda_p)^{1/N}.
pub fn local_value_with(spec: &CurveSpec, frame: &BranchFrame, kernel: &Kernel) -> Result<Complex> {
    let prec = spec.prec();
    let nd = spec.neighbour_dist(frame.p);
    let (a, nega, maxa) = local_modes(spec, frame, kernel, nd / 3.0);
    let pole_tol = mp::eps(prec / 2) * maxa.max(1e-300);
    if nega.iter().any(|&c| c > pole_tol) {
        return Err(Error::PoleAtBranchPoint(frame.p + 1));
    }
    let (b, _, maxb) = local_modes(spec, frame, kernel, nd / 6.0);
    let tol = mp::eps(prec.saturating_sub(24)) * maxa.max(maxb);
    let d = mp::abs_f64(&Complex::with_val(prec, &a - &b));
    if d > tol {
        return Err(Error::NonConvergent(format!("radius halving changed the value by {d:e}")));
    }
    Ok(b)
}

/// Coefficient of dt (sqrt(dt) for spin forms) at Q_p; p is 1-based.
pub fn local_value_at_branch(spec: &CurveSpec, p: usize, form: &DifferentialRef) -> Result<Complex> {
    if p == 0 || p > spec.count() {
        return Err(Error::InvalidIndex(format!("branch index {p}")));
    }
    let kernel = Kernel::prepare(spec, form)?;
    let frame = BranchFrame::new(spec, p - 1)?;
    local_value_with(spec, &frame, &kernel)
}

fn label(n: usize, shift: i64) -> Rational {
    Rational::from((2 * shift - (n as i64 - 1), 2))
}

/// Defects of the two product identities for the spin functions at Q_p and
/// at a generic point x; p is 1-based.
pub fn eval_spin_product_identities(
    spec: &CurveSpec,
    partition: &OrderedPartition,
    p: usize,
    x: &SheetPoint,
) -> Result<(Complex, Complex)> {
    if p == 0 || p > spec.count() {
        return Err(Error::InvalidIndex(format!("branch index {p}")));
    }
    pole_guard(spec, x)?;
    let n = spec.n();
    let prec = spec.prec();
    let r = partition.block_of(p - 1) % n;
    let rm = (n - 1 - r) as i64;
    let r = r as i64;
    let minus = partition.reversed();
    let frame = BranchFrame::new(spec, p - 1)?;
    let spin = |l: Rational, pt: &OrderedPartition| DifferentialRef::SpinF { l, partition: pt.clone(), sign: Sign::Plus };

    let k1 = Kernel::prepare(spec, &spin(label(n, r), &minus))?;
    let k2 = Kernel::prepare(spec, &spin(label(n, n as i64 - r), partition))?;
    let v1 = local_value_with(spec, &frame, &k1)?;
    let v2 = local_value_with(spec, &frame, &k2)?;
    let mut gcoef = mp::one(prec);
    for &j in partition.block(partition.block_of(p - 1)) {
        if j != p - 1 {
            gcoef *= Complex::with_val(prec, spec.lambda(p - 1) - spec.lambda(j));
        }
    }
    let rhs1 = frame.fprime_pow(&Rational::from((1, n as i64))) * n as u32 / gcoef;
    let d1 = Complex::with_val(prec, v1 * &v2 - rhs1);

    let node = NodeCache::new(spec, x);
    let k3 = Kernel::prepare(spec, &spin(label(n, rm), partition))?;
    let k4 = Kernel::prepare(spec, &spin(label(n, r - 1), &minus))?;
    let lhs2 = k3.eval(&node) * k4.eval(&node);
    let mut g = mp::one(prec);
    for &j in partition.block(partition.block_of(p - 1)) {
        g *= &node.diffs[j];
    }
    let rhs2 = g * &node.inv_s[1];
    let d2 = Complex::with_val(prec, lhs2 - rhs2);
    Ok((d1, d2))
}

/// (1/N) sum_l f_l(x, Lambda) f_{-l}(y, Lambda^-) / (z(y) - z(x)).
pub fn szego_algebraic(spec: &CurveSpec, partition: &OrderedPartition, x: &SheetPoint, y: &SheetPoint) -> Result<Complex> {
    let prec = spec.prec();
    let dz = Complex::with_val(prec, &y.z - &x.z);
    if mp::abs_f64(&dz) <= spec.clearance() {
        return Err(Error::CoincidentProjection);
    }
    pole_guard(spec, x)?;
    pole_guard(spec, y)?;
    let minus = partition.reversed();
    let nx = NodeCache::new(spec, x);
    let ny = NodeCache::new(spec, y);
    let mut acc = Complex::new(prec);
    for l in spin_labels(spec.n()) {
        let fx = Kernel::prepare(spec, &DifferentialRef::SpinF { l: l.clone(), partition: partition.clone(), sign: Sign::Plus })?;
        let fy = Kernel::prepare(spec, &DifferentialRef::SpinF { l: Rational::from(-&l), partition: minus.clone(), sign: Sign::Plus })?;
        acc += fx.eval(&nx) * fy.eval(&ny);
    }
    acc /= dz;
    acc /= spec.n() as u32;
    Ok(acc)
}

/// R(x, Q_p | e_Lambda) with the Q_p values taken as local coefficients.
pub fn szego_at_branch(spec: &CurveSpec, partition: &OrderedPartition, x: &SheetPoint, frame: &BranchFrame) -> Result<Complex> {
    let prec = spec.prec();
    let minus = partition.reversed();
    let nx = NodeCache::new(spec, x);
    let mut acc = Complex::new(prec);
    for l in spin_labels(spec.n()) {
        let fx = Kernel::prepare(spec, &DifferentialRef::SpinF { l: l.clone(), partition: partition.clone(), sign: Sign::Plus })?;
        let fy = Kernel::prepare(spec, &DifferentialRef::SpinF { l: Rational::from(-&l), partition: minus.clone(), sign: Sign::Plus })?;
        let vy = local_value_with(spec, frame, &fy)?;
        acc += fx.eval(&nx) * vy;
    }
    let d = Complex::with_val(prec, spec.lambda(frame.p) - &x.z);
    acc /= d;
    acc /= spec.n() as u32;
    Ok(acc)
}

/// |mu_p(x) - N f'(lambda_p)^{(N-1)/N} R(x,Q_p|e) R(x,Q_p|-e)|, relative to |mu_p(x)|.
pub fn szego_factorization_defect(spec: &CurveSpec, partition: &OrderedPartition, p: usize, x: &SheetPoint) -> Result<f64> {
    let frame = BranchFrame::new(spec, p - 1)?;
    let r1 = szego_at_branch(spec, partition, x, &frame)?;
    let r2 = szego_at_branch(spec, &partition.reversed(), x, &frame)?;
    let n = spec.n() as i64;
    let mu = eval_form(spec, &DifferentialRef::Mu { partition: partition.clone(), p }, x)?;
    let rhs = frame.fprime_pow(&Rational::from((n - 1, n))) * (n as u32) * r1 * r2;
    Ok(mp::rel_diff(&mu, &rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, m: usize, pts: &[(f64, f64)], prec: Prec) -> CurveSpec {
        CurveSpec::new(n, m, pts.iter().map(|&(a, b)| mp::c(prec, a, b)).collect(), prec).unwrap()
    }

    #[test]
    fn q_table_symmetries() {
        for n in 2..=6usize {
            let sum: Rational = (0..n as i64)
                .flat_map(|i| (i + 1..n as i64).map(move |j| (i, j)))
                .map(|(i, j)| q_pair(i, j, n))
                .fold(Rational::new(), |a, b| a + b);
            let n2 = (n * n) as i64;
            assert_eq!(sum, Rational::from((-(n2 - 1), 24)));
            assert_eq!(q_pair(0, 0, n), Rational::from((n2 - 1, 12 * n as i64)));
            for l in spin_labels(n) {
                for i in -3..8i64 {
                    let a = Rational::from(-spin_exponent(&l, i, n));
                    assert_eq!(a, spin_exponent(&Rational::from(-&l), n as i64 - i, n));
                }
            }
            for i in 0..n as i64 {
                for j in 0..n as i64 {
                    let d = (i - j).abs();
                    assert_eq!(q_pair(i, j, n), q_pair(0, d, n));
                }
            }
        }
    }

    #[test]
    fn exponent_sum_identity() {
        for n in 2..=5usize {
            let ni = n as i64;
            for r in 0..ni {
                for i in -ni..2 * ni {
                    let a = spin_exponent(&label(n, r), ni - i, n) + spin_exponent(&label(n, ni - r), i, n);
                    let ind = if (i - r).rem_euclid(ni) == 0 { 1 } else { 0 };
                    assert_eq!(a, Rational::from((1, ni)) - ind);
                }
            }
        }
    }

    #[test]
    fn holo_count_is_genus() {
        for n in 2..=5 {
            for m in 1..=4 {
                assert_eq!(holo_labels(n, m).len(), crate::curve::genus_of(n, m));
            }
        }
    }

    #[test]
    fn mu_matches_direct_formula() {
        let s = spec(2, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 128);
        let lam = OrderedPartition::from_one_based(&[vec![1, 2], vec![3, 4]]).unwrap();
        let x = s.point_on_sheet(&mp::real(128, 5.0), 0).unwrap();
        let v = eval_form(&s, &DifferentialRef::Mu { partition: lam, p: 1 }, &x).unwrap();
        // (0-2)(0-3) (5-1) / ((5-0) s), s^2 = 5*4*3*2
        let sv = x.s(2);
        assert!(mp::abs_f64(&(sv.clone() * &sv - 120u32)) < 1e-30);
        let expect = mp::from_rational(128, &Rational::from((24, 5))) / sv;
        assert!(mp::abs_f64(&(v - expect)) < 1e-35);
    }

    #[test]
    fn zeta_index_is_validated() {
        let s = spec(2, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 128);
        let lam = OrderedPartition::standard(2, 2);
        let x = s.point_on_sheet(&mp::real(128, 5.0), 0).unwrap();
        let e = eval_form(&s, &DifferentialRef::Zeta { partition: lam, j: 2 }, &x).unwrap_err();
        assert!(matches!(e, Error::InvalidIndex(_)));
    }

    #[test]
    fn prop5_defect_vanishes() {
        let s = spec(2, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 128);
        let lam = OrderedPartition::from_one_based(&[vec![1, 2], vec![3, 4]]).unwrap();
        let d = exact_relation_defect(&s, &lam, 4, &mp::c(128, 10.0, 1.0), 0).unwrap();
        assert!(mp::abs_f64(&d) < 1e-30);
        let s = spec(3, 2, &[(0.0, 0.0), (1.0, 0.2), (2.0, -0.1), (3.0, 0.0), (0.5, 1.0), (2.5, -1.0)], 128);
        for lam in crate::partition::enumerate_partitions(3, 2).unwrap().iter().step_by(7) {
            for p in 1..=6 {
                let d = exact_relation_defect(&s, lam, p, &mp::c(128, 1.3, 2.1), 1).unwrap();
                assert!(mp::abs_f64(&d) < 1e-30, "{d}");
            }
        }
    }

    #[test]
    fn holo_value_at_branch_point() {
        let s = spec(2, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 128);
        let v = local_value_at_branch(&s, 1, &DifferentialRef::Holo { alpha: 1, beta: 1 }).unwrap();
        let frame = BranchFrame::new(&s, 0).unwrap();
        let expect = frame.fprime_pow(&Rational::from((-1, 2))) * 2u32;
        assert!(mp::abs_f64(&(v - expect)) < 1e-30);
        let mu = DifferentialRef::Mu { partition: OrderedPartition::standard(2, 2), p: 1 };
        assert!(matches!(local_value_at_branch(&s, 1, &mu), Err(Error::PoleAtBranchPoint(1))));
    }

    #[test]
    fn spin_products_and_szego_factorization() {
        let s = spec(3, 1, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], 128);
        let x = s.point_on_sheet(&mp::c(128, 0.7, 1.4), 2).unwrap();
        for lam in crate::partition::enumerate_partitions(3, 1).unwrap() {
            for p in 1..=3 {
                let (d1, d2) = eval_spin_product_identities(&s, &lam, p, &x).unwrap();
                assert!(mp::abs_f64(&d1) < 1e-30 && mp::abs_f64(&d2) < 1e-30, "{d1} {d2}");
            }
        }
        let s = spec(2, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 128);
        let x = s.point_on_sheet(&mp::c(128, 1.7, -0.9), 1).unwrap();
        for lam in crate::partition::enumerate_partitions(2, 2).unwrap() {
            for p in 1..=4 {
                assert!(szego_factorization_defect(&s, &lam, p, &x).unwrap() < 1e-25);
            }
        }
    }
}
