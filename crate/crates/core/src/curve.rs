//! The Z_N curve s^N = prod (z - lambda_j), its sheets and analytic
//! continuation of s.
//!
//! Continuation tracks log(z - lambda_j) for every factor separately, so a
//! point on the cover carries the full vector of logarithms. The value of s
//! and every fractional power used by the spin functions are read off from
//! those logs.

use num_complex::Complex64;
use rug::{Complex, Float};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mp::{self, Prec};

/// Relative collision tolerance for branch points.
pub const COLLISION_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CurveSpec {
    n: usize,
    m: usize,
    lambdas: Vec<Complex>,
    prec: Prec,
    base: Complex,
    base_logs: Vec<Complex>,
    genus: usize,
    ell: usize,
    min_dist: f64,
}

/// A point of the cover: the projection z together with log(z - lambda_j)
/// for every j, continued from the base point.
#[derive(Clone, Debug)]
pub struct SheetPoint {
    pub z: Complex,
    pub logs: Vec<Complex>,
}

/// A branch point Q_p, 1-based index as in the curve JSON.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub p: usize,
}

pub fn genus_of(n: usize, m: usize) -> usize {
    (n - 1) * (n * m - 2) / 2
}

pub fn ell_of(n: usize, m: usize) -> usize {
    ((n - 1) * m).saturating_sub(1)
}

/// Builds and validates a curve; see [`CurveSpec::new`].
pub fn validate_curve(n: usize, m: usize, lambdas: Vec<Complex>, prec: Prec) -> Result<CurveSpec> {
    CurveSpec::new(n, m, lambdas, prec)
}

impl CurveSpec {
    pub fn new(n: usize, m: usize, lambdas: Vec<Complex>, prec: Prec) -> Result<Self> {
        if n < 2 || m < 1 {
            return Err(Error::BadParameters(format!("need N >= 2 and m >= 1, got N={n}, m={m}")));
        }
        if prec < 53 {
            return Err(Error::BadParameters(format!("precision {prec} below 53 bits")));
        }
        if lambdas.len() != n * m {
            return Err(Error::BadCount { expected: n * m, got: lambdas.len() });
        }
        let lambdas: Vec<Complex> = lambdas.into_iter().map(|l| Complex::with_val(prec, l)).collect();
        let pts: Vec<Complex64> = lambdas.iter().map(to64).collect();
        let mut diam: f64 = 0.0;
        let mut min_dist = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d = (pts[i] - pts[j]).norm();
                diam = diam.max(d);
                min_dist = min_dist.min(d);
            }
        }
        let scale = if diam > 0.0 { diam } else { 1.0 };
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if (pts[i] - pts[j]).norm() <= COLLISION_TOL * scale {
                    return Err(Error::DuplicateBranchPoint(i + 1, j + 1));
                }
            }
        }
        let mean_re = pts.iter().map(|p| p.re).sum::<f64>() / pts.len() as f64;
        let top = pts.iter().map(|p| p.im).fold(f64::NEG_INFINITY, f64::max);
        let base = mp::c(prec, mean_re, top + diam.max(1.0));
        Ok(Self::assemble(n, m, lambdas, prec, base, min_dist))
    }

    fn assemble(n: usize, m: usize, lambdas: Vec<Complex>, prec: Prec, base: Complex, min_dist: f64) -> Self {
        let base_logs = lambdas.iter().map(|l| Complex::with_val(prec, &base - l).ln()).collect();
        CurveSpec {
            n,
            m,
            lambdas,
            prec,
            base,
            base_logs,
            genus: genus_of(n, m),
            ell: ell_of(n, m),
            min_dist,
        }
    }

    /// Same curve with lambda_idx (0-based) moved by `delta`; the base point
    /// is kept so sheet labels stay continuous.
    pub fn perturbed(&self, idx: usize, delta: &Complex) -> Result<Self> {
        let mut l = self.lambdas.clone();
        l[idx] += delta;
        let fresh = CurveSpec::new(self.n, self.m, l, self.prec)?;
        let top = fresh.lambdas.iter().map(|x| x.imag().to_f64()).fold(f64::NEG_INFINITY, f64::max);
        if self.base.imag().to_f64() <= top {
            return Err(Error::StepTooLarge);
        }
        let md = fresh.min_dist;
        Ok(Self::assemble(self.n, self.m, fresh.lambdas, self.prec, self.base.clone(), md))
    }

    /// Same geometry at a different working precision.
    pub fn with_precision(&self, prec: Prec) -> Self {
        let lambdas = self.lambdas.iter().map(|l| Complex::with_val(prec, l)).collect();
        Self::assemble(self.n, self.m, lambdas, prec, Complex::with_val(prec, &self.base), self.min_dist)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn count(&self) -> usize {
        self.n * self.m
    }
    pub fn genus(&self) -> usize {
        self.genus
    }
    pub fn ell(&self) -> usize {
        self.ell
    }
    pub fn prec(&self) -> Prec {
        self.prec
    }
    pub fn lambdas(&self) -> &[Complex] {
        &self.lambdas
    }
    pub fn lambda(&self, j: usize) -> &Complex {
        &self.lambdas[j]
    }
    pub fn lambda64(&self, j: usize) -> Complex64 {
        to64(&self.lambdas[j])
    }
    pub fn base(&self) -> &Complex {
        &self.base
    }
    pub fn min_dist(&self) -> f64 {
        self.min_dist
    }

    /// Distance from lambda_j to its nearest neighbour.
    pub fn neighbour_dist(&self, j: usize) -> f64 {
        let p = self.lambda64(j);
        (0..self.count())
            .filter(|&k| k != j)
            .map(|k| (self.lambda64(k) - p).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum distance a path must keep from every branch point.
    pub fn clearance(&self) -> f64 {
        self.min_dist * 1e-6
    }

    /// Branch point indices (0-based) sorted by (Re, Im).
    pub fn sorted_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.count()).collect();
        idx.sort_by(|&a, &b| {
            let (pa, pb) = (self.lambda64(a), self.lambda64(b));
            pa.re.total_cmp(&pb.re).then(pa.im.total_cmp(&pb.im))
        });
        idx
    }

    pub fn f(&self, z: &Complex) -> Complex {
        let mut v = mp::one(self.prec);
        for l in &self.lambdas {
            v *= Complex::with_val(self.prec, z - l);
        }
        v
    }

    /// f'(lambda_p) = prod_{j != p} (lambda_p - lambda_j), p 0-based.
    pub fn fprime_at(&self, p: usize) -> Complex {
        let mut v = mp::one(self.prec);
        for (j, l) in self.lambdas.iter().enumerate() {
            if j != p {
                v *= Complex::with_val(self.prec, &self.lambdas[p] - l);
            }
        }
        v
    }

    /// Vandermonde-type product Delta = prod_{i<j} (lambda_i - lambda_j).
    pub fn delta(&self) -> Complex {
        let mut v = mp::one(self.prec);
        for i in 0..self.count() {
            for j in i + 1..self.count() {
                v *= Complex::with_val(self.prec, &self.lambdas[i] - &self.lambdas[j]);
            }
        }
        v
    }

    pub fn base_point(&self) -> SheetPoint {
        SheetPoint { z: self.base.clone(), logs: self.base_logs.clone() }
    }

    /// Straight-line continuation from the base point to z, then moved to
    /// the requested sheet.
    pub fn point_on_sheet(&self, z: &Complex, sheet: usize) -> Result<SheetPoint> {
        let mut pt = continue_s(self, &[self.base.clone(), z.clone()], &self.base_point())?;
        if sheet % self.n != 0 {
            let mut shift = mp::two_pi_i(self.prec);
            shift *= (sheet % self.n) as u32;
            pt.logs[0] += shift;
        }
        Ok(pt)
    }
}

impl SheetPoint {
    pub fn s(&self, n: usize) -> Complex {
        let prec = self.z.prec().0;
        let mut t = Complex::new(prec);
        for l in &self.logs {
            t += l;
        }
        t /= n as u32;
        t.exp()
    }

    /// Sheet label relative to straight continuation from the base point.
    pub fn sheet(&self, spec: &CurveSpec) -> Result<usize> {
        let reference = continue_s(spec, &[spec.base.clone(), self.z.clone()], &spec.base_point())?;
        Ok(winding_diff(&self.logs, &reference.logs, spec.n))
    }

    /// exp(sum_j e_j log(z - lambda_j)) for rational exponents e_j.
    pub fn power_product(&self, exps: &[rug::Rational]) -> Complex {
        let prec = self.z.prec().0;
        let mut t = Complex::new(prec);
        for (l, e) in self.logs.iter().zip(exps) {
            if *e.numer() != 0 {
                t += l.clone() * mp::from_rational(prec, e);
            }
        }
        t.exp()
    }
}

/// (sum a - sum b) / 2 pi i, rounded, reduced mod n.
pub fn winding_diff(a: &[Complex], b: &[Complex], n: usize) -> usize {
    let k = total_winding(a, b);
    k.rem_euclid(n as i64) as usize
}

pub fn total_winding(a: &[Complex], b: &[Complex]) -> i64 {
    let mut d = 0.0;
    for (x, y) in a.iter().zip(b) {
        d += x.imag().to_f64() - y.imag().to_f64();
    }
    (d / (2.0 * std::f64::consts::PI)).round() as i64
}

pub fn to64(z: &Complex) -> Complex64 {
    Complex64::new(z.real().to_f64(), z.imag().to_f64())
}

pub fn from64(prec: Prec, z: Complex64) -> Complex {
    mp::c(prec, z.re, z.im)
}

/// Distance from point p to the segment [a, b].
pub fn seg_dist(a: Complex64, b: Complex64, p: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

/// Continue the logs of `start` along a straight segment to `b`.
pub fn continue_segment(spec: &CurveSpec, start: &SheetPoint, b: &Complex) -> Result<SheetPoint> {
    let prec = spec.prec;
    let a64 = to64(&start.z);
    let b64 = to64(b);
    let clear = spec.clearance();
    let mut logs = Vec::with_capacity(start.logs.len());
    for (j, l) in spec.lambdas.iter().enumerate() {
        if seg_dist(a64, b64, spec.lambda64(j)) < clear {
            return Err(Error::PathTooClose(j + 1));
        }
        let ratio = Complex::with_val(prec, b - l) / Complex::with_val(prec, &start.z - l);
        let step = ratio.ln();
        if step.imag().to_f64().abs() > std::f64::consts::PI * (1.0 - 1e-12) {
            return Err(Error::PrecisionLoss);
        }
        logs.push(Complex::with_val(prec, &start.logs[j] + &step));
    }
    Ok(SheetPoint { z: Complex::with_val(prec, b), logs })
}

/// Continue along a polyline; `path[0]` must coincide with `start.z`.
pub fn continue_s(spec: &CurveSpec, path: &[Complex], start: &SheetPoint) -> Result<SheetPoint> {
    let mut cur = start.clone();
    if let Some(first) = path.first() {
        let gap = mp::abs_f64(&Complex::with_val(spec.prec, first - &start.z));
        if gap > 1e-9 * (1.0 + mp::abs_f64(first)) {
            return Err(Error::BadParameters("path does not start at the start point".into()));
        }
    }
    for z in path.iter().skip(1) {
        cur = continue_segment(spec, &cur, z)?;
    }
    Ok(cur)
}

/// Continue along the circular arc around branch point `center` (0-based)
/// of radius r, from angle theta0 to theta1 (either direction, any length).
pub fn continue_arc(
    spec: &CurveSpec,
    start: &SheetPoint,
    center: usize,
    radius: &Float,
    theta0: &Float,
    theta1: &Float,
) -> Result<SheetPoint> {
    let prec = spec.prec;
    let c = &spec.lambdas[center];
    let r64 = radius.to_f64();
    for j in 0..spec.count() {
        if j != center && (spec.lambda64(j) - spec.lambda64(center)).norm() <= r64 * (1.0 + 1e-9) {
            return Err(Error::PathTooClose(j + 1));
        }
    }
    let e = Complex::with_val(prec, (Float::new(prec), theta1)).exp();
    let end = Complex::with_val(prec, c + e * radius);
    let mut logs = Vec::with_capacity(start.logs.len());
    for (j, l) in spec.lambdas.iter().enumerate() {
        if j == center {
            let dtheta = Float::with_val(prec, theta1 - theta0);
            logs.push(Complex::with_val(prec, &start.logs[j] + Complex::with_val(prec, (Float::new(prec), dtheta))));
        } else {
            let ratio = Complex::with_val(prec, &end - l) / Complex::with_val(prec, &start.z - l);
            logs.push(Complex::with_val(prec, &start.logs[j] + ratio.ln()));
        }
    }
    Ok(SheetPoint { z: end, logs })
}

/// Local frame at Q_p used for values at the branch point: logs of
/// (lambda_p - lambda_j) for j != p, and log(z_a - lambda_p) at an anchor
/// point z_a reached by straight continuation from the base point.
#[derive(Clone, Debug)]
pub struct BranchFrame {
    pub p: usize,
    pub anchor: SheetPoint,
    /// log(lambda_p - lambda_j) for j != p; entry p holds log(z_a - lambda_p).
    pub logs_at: Vec<Complex>,
}

impl BranchFrame {
    /// `p` is 0-based.
    pub fn new(spec: &CurveSpec, p: usize) -> Result<Self> {
        let prec = spec.prec;
        let lp = spec.lambda64(p);
        let b = to64(&spec.base);
        let dir = (b - lp) / (b - lp).norm();
        let rho = spec.neighbour_dist(p) / 6.0;
        let za = from64(prec, lp + dir * rho);
        let anchor = continue_s(spec, &[spec.base.clone(), za.clone()], &spec.base_point())?;
        let mut logs_at = Vec::with_capacity(spec.count());
        for j in 0..spec.count() {
            if j == p {
                logs_at.push(anchor.logs[p].clone());
            } else {
                let l = &spec.lambdas[j];
                let ratio = Complex::with_val(prec, &spec.lambdas[p] - l) / Complex::with_val(prec, &za - l);
                logs_at.push(Complex::with_val(prec, &anchor.logs[j] + ratio.ln()));
            }
        }
        Ok(BranchFrame { p, anchor, logs_at })
    }

    /// f'(lambda_p)^q with the frame's branch.
    pub fn fprime_pow(&self, q: &rug::Rational) -> Complex {
        let prec = self.anchor.z.prec().0;
        let mut t = Complex::new(prec);
        for (j, l) in self.logs_at.iter().enumerate() {
            if j != self.p {
                t += l;
            }
        }
        (t * mp::from_rational(prec, q)).exp()
    }

    /// Point of the cover with local coordinate t = exp(log_t).
    pub fn point_at(&self, spec: &CurveSpec, log_t: &Complex) -> SheetPoint {
        let prec = spec.prec;
        let n = spec.n;
        let lp = &spec.lambdas[self.p];
        let logz = Complex::with_val(prec, log_t * (n as u32));
        let w = logz.clone().exp();
        let z = Complex::with_val(prec, lp + &w);
        let mut logs = Vec::with_capacity(spec.count());
        for j in 0..spec.count() {
            if j == self.p {
                logs.push(logz.clone());
            } else {
                let d = Complex::with_val(prec, lp - &spec.lambdas[j]);
                let ratio = Complex::with_val(prec, &z - &spec.lambdas[j]) / d;
                logs.push(Complex::with_val(prec, &self.logs_at[j] + ratio.ln()));
            }
        }
        SheetPoint { z, logs }
    }

    /// log t at the anchor.
    pub fn anchor_log_t(&self, n: usize) -> Complex {
        Complex::with_val(self.anchor.z.prec().0, &self.logs_at[self.p] / (n as u32))
    }
}
