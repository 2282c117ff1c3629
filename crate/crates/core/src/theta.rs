//! Riemann theta functions with rational characteristics, the Abel map, the
//! characteristics e_Lambda and the theta-side checks (theta solution,
//! Thomae constancy, the sl_2 formula).
//!
//! Convention: theta[delta, eps](z) = sum_m exp(1/2 n tau n^t + (z + 2 pi i eps) n^t)
//! with n = m + delta, which converges for Re tau negative definite.

use rug::{Complex, Float, Integer, Rational};

use crate::curve::{BranchFrame, CurveSpec};
use crate::differentials::{holo_labels, q_pair, DifferentialRef, Kernel};
use crate::error::{Error, Result};
use crate::kz::block_products;
use crate::linalg::{self, CMat};
use crate::mp::{self, Prec};
use crate::partition::{enumerate_partitions, OrderedPartition};
use crate::periods::{combine, Periods};
use crate::quadrature::{PathRule, Piece};

/// Largest candidate set searched for the characteristic shift.
pub const CANDIDATE_CAP: usize = 1 << 16;

/// A point 2 pi i eps + delta tau of C^g with rational coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Characteristics {
    pub delta: Vec<Rational>,
    pub epsilon: Vec<Rational>,
}

fn frac(q: &Rational) -> Rational {
    let f = q.clone().floor();
    Rational::from(q - f)
}

fn rat_str(q: &Rational) -> String {
    if *q.denom() == 1 {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl Characteristics {
    pub fn zero(g: usize) -> Self {
        Characteristics { delta: vec![Rational::new(); g], epsilon: vec![Rational::new(); g] }
    }

    pub fn genus(&self) -> usize {
        self.delta.len()
    }

    /// e = 2 pi i eps + delta tau.
    pub fn point(&self, tau: &CMat, prec: Prec) -> Vec<Complex> {
        let g = self.genus();
        let tpi = mp::two_pi_i(prec);
        (0..g)
            .map(|j| {
                let mut v = Complex::with_val(prec, &tpi * mp::from_rational(prec, &self.epsilon[j]));
                for k in 0..g {
                    v += Complex::with_val(prec, &tau[k][j] * mp::from_rational(prec, &self.delta[k]));
                }
                v
            })
            .collect()
    }

    /// Nearest characteristic with coordinates in (1/denom) Z for the point
    /// e; also returns the rounding distance in units of 1/denom.
    pub fn from_point(e: &[Complex], tau: &CMat, denom: u32) -> Result<(Self, f64)> {
        let g = e.len();
        let re: Vec<Vec<f64>> = tau.iter().map(|r| r.iter().map(|x| x.real().to_f64()).collect()).collect();
        let inv = linalg::inverse_f64(&re).ok_or(Error::NotNegativeDefinite)?;
        let ere: Vec<f64> = e.iter().map(|x| x.real().to_f64()).collect();
        let delta: Vec<f64> = (0..g).map(|j| (0..g).map(|k| inv[j][k] * ere[k]).sum()).collect();
        let two_pi = 2.0 * std::f64::consts::PI;
        let eps: Vec<f64> = (0..g)
            .map(|j| {
                let t: f64 = (0..g).map(|k| tau[k][j].imag().to_f64() * delta[k]).sum();
                (e[j].imag().to_f64() - t) / two_pi
            })
            .collect();
        let d = denom as f64;
        let mut dist: f64 = 0.0;
        let mut round = |x: f64| {
            let r = (x * d).round();
            dist = dist.max((x * d - r).abs());
            Rational::from((Integer::from(r as i64), Integer::from(denom)))
        };
        let delta = delta.iter().map(|&x| round(x)).collect();
        let epsilon = eps.iter().map(|&x| round(x)).collect();
        Ok((Characteristics { delta, epsilon }, dist))
    }

    pub fn add(&self, o: &Self) -> Self {
        Characteristics {
            delta: self.delta.iter().zip(&o.delta).map(|(a, b)| Rational::from(a + b)).collect(),
            epsilon: self.epsilon.iter().zip(&o.epsilon).map(|(a, b)| Rational::from(a + b)).collect(),
        }
    }

    pub fn scaled(&self, k: i64) -> Self {
        Characteristics {
            delta: self.delta.iter().map(|a| Rational::from(a * k)).collect(),
            epsilon: self.epsilon.iter().map(|a| Rational::from(a * k)).collect(),
        }
    }

    /// Integer shift (delta + m, eps + n).
    pub fn shifted(&self, m: &[i64], n: &[i64]) -> Self {
        Characteristics {
            delta: self.delta.iter().zip(m).map(|(a, &b)| Rational::from(a + b)).collect(),
            epsilon: self.epsilon.iter().zip(n).map(|(a, &b)| Rational::from(a + b)).collect(),
        }
    }

    /// Representative with all coordinates in [0, 1).
    pub fn reduced(&self) -> Self {
        Characteristics {
            delta: self.delta.iter().map(frac).collect(),
            epsilon: self.epsilon.iter().map(frac).collect(),
        }
    }

    /// True when delta and eps are integral.
    pub fn is_integral(&self) -> bool {
        self.delta.iter().chain(&self.epsilon).all(|q| *q.denom() == 1)
    }

    /// Least common denominator of all entries.
    pub fn denominator(&self) -> Integer {
        self.delta.iter().chain(&self.epsilon).fold(Integer::from(1), |acc, q| acc.lcm(q.denom()))
    }

    /// Parity 4 delta.eps mod 2 of a half period (None otherwise).
    pub fn is_even_half_period(&self) -> Option<bool> {
        let two = self.scaled(2);
        if !two.is_integral() {
            return None;
        }
        let s = self.delta.iter().zip(&self.epsilon).fold(Rational::new(), |acc, (a, b)| acc + Rational::from(a * b) * 4u32);
        Some(s.numer().is_even())
    }

    pub fn delta_strings(&self) -> Vec<String> {
        self.delta.iter().map(rat_str).collect()
    }

    pub fn epsilon_strings(&self) -> Vec<String> {
        self.epsilon.iter().map(rat_str).collect()
    }
}

/// Theta value, gradient and Hessian at one point.
#[derive(Clone, Debug)]
pub struct ThetaEval {
    pub value: Complex,
    /// empty unless order >= 1
    pub grad: Vec<Complex>,
    /// empty unless order >= 2
    pub hess: CMat,
    pub order: usize,
    /// truncation radius in the -Re tau norm
    pub radius: f64,
    pub terms: usize,
    /// bound on the omitted terms, relative to |value|
    pub tail_bound: f64,
    /// sum of |terms|, for cancellation checks
    pub abs_sum: f64,
}

impl ThetaEval {
    fn nonzero(&self) -> Result<()> {
        let prec = self.value.prec().0;
        let v = mp::abs_f64(&self.value);
        if !(v > mp::eps(prec / 2) * self.abs_sum) {
            return Err(Error::Underflow);
        }
        Ok(())
    }

    /// d log theta / dz_i.
    pub fn log_grad(&self) -> Result<Vec<Complex>> {
        self.nonzero()?;
        let prec = self.value.prec().0;
        Ok(self.grad.iter().map(|d| Complex::with_val(prec, d / &self.value)).collect())
    }

    /// d^2 log theta / dz_i dz_j.
    pub fn log_hess(&self) -> Result<CMat> {
        let lg = self.log_grad()?;
        let prec = self.value.prec().0;
        Ok(self
            .hess
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, h)| Complex::with_val(prec, h / &self.value) - Complex::with_val(prec, &lg[i] * &lg[j]))
                    .collect()
            })
            .collect())
    }
}

/// Lattice points m with |m + delta - c|_Q <= r, Q = U^t U, U upper triangular.
fn ellipsoid_points(u: &[Vec<f64>], shift: &[f64], r: f64) -> Vec<Vec<i64>> {
    let g = u.len();
    let mut out = Vec::new();
    let mut m = vec![0i64; g];
    // partial[i] = sum over rows i.. of the squared row terms
    fn rec(i: usize, u: &[Vec<f64>], shift: &[f64], r2: f64, used: f64, m: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        // row i: U_ii x_i + sum_{k>i} U_ik x_k with x = m + shift
        let g = u.len();
        let tail: f64 = (i + 1..g).map(|k| u[i][k] * (m[k] as f64 + shift[k])).sum();
        let room = r2 - used;
        if room < 0.0 {
            return;
        }
        let w = room.sqrt() / u[i][i];
        let centre = -tail / u[i][i] - shift[i];
        let lo = (centre - w).ceil() as i64;
        let hi = (centre + w).floor() as i64;
        for mi in lo..=hi {
            m[i] = mi;
            let t = u[i][i] * (mi as f64 + shift[i]) + tail;
            let used2 = used + t * t;
            if i == 0 {
                if used2 <= r2 {
                    out.push(m.clone());
                }
            } else {
                rec(i - 1, u, shift, r2, used2, m, out);
            }
        }
    }
    if g > 0 {
        rec(g - 1, u, shift, r * r, 0.0, &mut m, &mut out);
    }
    out
}

/// Bound for the lattice sum outside radius r, relative to exp(c Q c / 2).
fn tail_estimate(widths: &[f64], centre: f64, r: f64, order: usize) -> f64 {
    let mut t = 0.0;
    for k in 0..200 {
        let rk = r + k as f64;
        let count: f64 = widths.iter().map(|w| 2.0 * (rk + 1.0) * w + 1.0).product();
        let weight = (1.0 + centre + (rk + 1.0) * widths.iter().cloned().fold(0.0, f64::max)).powi(order as i32);
        let term = count * weight * (-0.5 * rk * rk).exp();
        t += term;
        if term < t * 1e-20 {
            break;
        }
    }
    t
}

/// theta[ch](z) with derivatives up to `order` (at most 2).
pub fn riemann_theta(z: &[Complex], tau: &CMat, ch: &Characteristics, order: usize, prec: Prec) -> Result<ThetaEval> {
    let g = tau.len();
    if z.len() != g || ch.genus() != g {
        return Err(Error::BadParameters("dimension mismatch in theta evaluation".into()));
    }
    if order > 2 {
        return Err(Error::BadParameters("theta derivatives above order 2".into()));
    }
    let q: Vec<Vec<f64>> = tau.iter().map(|r| r.iter().map(|x| -x.real().to_f64()).collect()).collect();
    for i in 0..g {
        for j in 0..i {
            if mp::rel_diff(&tau[i][j], &tau[j][i]) > 1e-8 {
                return Err(Error::BadParameters("tau is not symmetric".into()));
            }
        }
    }
    let l = linalg::cholesky(&q).ok_or(Error::NotNegativeDefinite)?;
    let qinv = linalg::inverse_f64(&q).ok_or(Error::NotNegativeDefinite)?;
    let u: Vec<Vec<f64>> = (0..g).map(|i| (0..g).map(|j| l[j][i]).collect()).collect();
    // centre of the Gaussian: c = Q^{-1} Re z
    let rez: Vec<f64> = z.iter().map(|x| x.real().to_f64()).collect();
    let c: Vec<f64> = (0..g).map(|i| (0..g).map(|k| qinv[i][k] * rez[k]).sum()).collect();
    let delta64: Vec<f64> = ch.delta.iter().map(|d| d.to_f64()).collect();
    let shift: Vec<f64> = (0..g).map(|i| delta64[i] - c[i]).collect();
    let widths: Vec<f64> = (0..g).map(|i| qinv[i][i].sqrt()).collect();
    let centre = c.iter().map(|x| x.abs()).fold(0.0, f64::max) + 1.0;
    // a lattice point lies within this Q-distance of any point
    let cover2: f64 = 0.25 * (0..g).map(|i| q[i][i].sqrt()).sum::<f64>().powi(2);
    let target = mp::eps(prec + 16) * (-0.5 * cover2).exp();
    let mut r = 1.0;
    while tail_estimate(&widths, centre, r, order) > target {
        r += 0.25;
        if r > 1e4 {
            return Err(Error::Underflow);
        }
    }
    let tail = tail_estimate(&widths, centre, r, order);
    let pts = ellipsoid_points(&u, &shift, r);

    let delta: Vec<Float> = ch.delta.iter().map(|d| Float::with_val(prec, d)).collect();
    let tpi = mp::two_pi_i(prec);
    let zs: Vec<Complex> = (0..g)
        .map(|j| Complex::with_val(prec, &z[j] + Complex::with_val(prec, &tpi * mp::from_rational(prec, &ch.epsilon[j]))))
        .collect();
    let half_tau: CMat = tau.iter().map(|r| r.iter().map(|x| Complex::with_val(prec, x / 2u32)).collect()).collect();
    // log of the factored scale exp(c Q c / 2), removed before exponentiation
    let cqc: f64 = (0..g).map(|i| (0..g).map(|k| c[i] * q[i][k] * c[k]).sum::<f64>()).sum();
    let scale = Float::with_val(prec, 0.5 * cqc);

    type Acc = (Complex, Vec<Complex>, CMat, f64);
    let partial = crate::par::map_chunks(&pts, 256, |chunk| {
        let mut v = Complex::new(prec);
        let mut gr = vec![Complex::new(prec); if order >= 1 { g } else { 0 }];
        let mut h = if order >= 2 { linalg::zeros(g, g, prec) } else { Vec::new() };
        let mut abs = 0.0;
        for m in chunk {
            let nv: Vec<Float> = (0..g).map(|i| Float::with_val(prec, &delta[i] + m[i])).collect();
            let mut ex = Complex::new(prec);
            for i in 0..g {
                let mut row = Complex::new(prec);
                for k in 0..g {
                    row += Complex::with_val(prec, &half_tau[i][k] * &nv[k]);
                }
                row += &zs[i];
                ex += row * &nv[i];
            }
            ex -= &scale;
            let t = ex.exp();
            abs += mp::abs_f64(&t);
            if order >= 1 {
                for i in 0..g {
                    let ti = Complex::with_val(prec, &t * &nv[i]);
                    if order >= 2 {
                        for k in i..g {
                            h[i][k] += Complex::with_val(prec, &ti * &nv[k]);
                        }
                    }
                    gr[i] += ti;
                }
            }
            v += t;
        }
        (v, gr, h, abs) as Acc
    });
    let mut value = Complex::new(prec);
    let mut grad = vec![Complex::new(prec); if order >= 1 { g } else { 0 }];
    let mut hess = if order >= 2 { linalg::zeros(g, g, prec) } else { Vec::new() };
    let mut abs_sum = 0.0;
    for (v, gr, h, a) in partial {
        value += v;
        for (x, y) in grad.iter_mut().zip(gr) {
            *x += y;
        }
        for (rx, ry) in hess.iter_mut().zip(h) {
            for (x, y) in rx.iter_mut().zip(ry) {
                *x += y;
            }
        }
        abs_sum += a;
    }
    for i in 0..hess.len() {
        for k in 0..i {
            hess[i][k] = hess[k][i].clone();
        }
    }
    // restore the scale
    let s = Complex::with_val(prec, &scale).exp();
    let rel_tail = tail / mp::abs_f64(&value).max(1e-300);
    value *= &s;
    for x in grad.iter_mut() {
        *x *= &s;
    }
    for row in hess.iter_mut() {
        for x in row.iter_mut() {
            *x *= &s;
        }
    }
    Ok(ThetaEval { value, grad, hess, order, radius: r, terms: pts.len(), tail_bound: rel_tail, abs_sum: abs_sum * s.real().to_f64() })
}

/// theta[ch](0) of the curve's period matrix.
pub fn theta_constant(periods: &Periods, ch: &Characteristics, order: usize) -> Result<ThetaEval> {
    let prec = periods.spec.prec();
    let z = vec![mp::zero(prec); periods.genus()];
    riemann_theta(&z, &periods.data.tau, ch, order, prec)
}

/// Endpoint of an Abel map path.
#[derive(Clone, Debug)]
pub enum AbelTarget {
    Base,
    /// Q_p, 1-based, reached through the anchor of its local frame
    Branch(usize),
    /// point reached from the base point along a straight segment
    Point(Complex),
    /// arbitrary path starting at the base point
    Path(Vec<Piece>),
}

/// Integral of v = (v_1..v_g) from the base point to the target, with an
/// error estimate.
pub fn abel_map(periods: &Periods, target: &AbelTarget) -> Result<(Vec<Complex>, f64)> {
    let spec = &periods.spec;
    let prec = spec.prec();
    let g = periods.genus();
    let pieces = match target {
        AbelTarget::Base => return Ok((vec![mp::zero(prec); g], 0.0)),
        AbelTarget::Branch(p) => {
            if *p == 0 || *p > spec.count() {
                return Err(Error::InvalidIndex(format!("branch index {p}")));
            }
            let frame = BranchFrame::new(spec, p - 1)?;
            vec![
                Piece::Segment { a: spec.base().clone(), b: frame.anchor.z.clone() },
                Piece::RootSegment { p: p - 1, a: frame.anchor.z.clone() },
            ]
        }
        AbelTarget::Point(z) => vec![Piece::Segment { a: spec.base().clone(), b: z.clone() }],
        AbelTarget::Path(p) => p.clone(),
    };
    let (rule, _) = PathRule::build(spec, &pieces, &spec.base_point())?;
    let labels = holo_labels(spec.n(), spec.m());
    let ints: Vec<_> = labels.iter().map(|&(alpha, beta)| rule.integrate(&Kernel::Holo { alpha, beta })).collect();
    let sigma = &periods.data.sigma;
    let mut out = Vec::with_capacity(g);
    let mut err: f64 = 0.0;
    for row in sigma.iter().take(g) {
        let mut v = Complex::new(prec);
        let mut e = 0.0;
        for (s, i) in row.iter().zip(&ints) {
            v += Complex::with_val(prec, s * &i.value);
            e += mp::abs_f64(s) * i.err(prec);
        }
        err = err.max(e);
        out.push(v);
    }
    Ok((out, err))
}

/// The characteristics of A(Q_p) - A(Q_1) for every branch point; each is a
/// 1/N period. Returns them with the worst rounding distance.
pub fn branch_characteristics(periods: &Periods) -> Result<(Vec<Characteristics>, f64)> {
    let spec = &periods.spec;
    let prec = spec.prec();
    let n = spec.n() as u32;
    let images = crate::par::try_map(&(1..=spec.count()).collect::<Vec<_>>(), |&p| abel_map(periods, &AbelTarget::Branch(p)))?;
    let mut out = Vec::with_capacity(images.len());
    let mut worst: f64 = 0.0;
    for (img, _) in &images {
        let diff: Vec<Complex> = img.iter().zip(&images[0].0).map(|(a, b)| Complex::with_val(prec, a - b)).collect();
        let (ch, d) = Characteristics::from_point(&diff, &periods.data.tau, n)?;
        worst = worst.max(d);
        out.push(ch.reduced());
    }
    if worst > 1e-6 {
        return Err(Error::PrecisionLoss);
    }
    Ok((out, worst))
}

/// Abel image data and the resolved constant shift; e_Lambda is the image
/// of Lambda_1 + 2 Lambda_2 + ... + (N-1) Lambda_{N-1} plus the shift.
#[derive(Clone, Debug)]
pub struct CharacteristicMap {
    pub branch: Vec<Characteristics>,
    pub shift: Characteristics,
    pub anchor: OrderedPartition,
    pub candidates_tested: usize,
    /// A-period defect of the winning candidate at the anchor
    pub anchor_defect: f64,
    pub rounding: f64,
}

impl CharacteristicMap {
    pub fn divisor_part(&self, pt: &OrderedPartition) -> Characteristics {
        let g = self.shift.genus();
        let mut acc = Characteristics::zero(g);
        for k in 1..pt.n() {
            for &j in pt.block(k) {
                acc = acc.add(&self.branch[j].scaled(k as i64));
            }
        }
        acc
    }

    /// Reduced representative of e_Lambda.
    pub fn for_partition(&self, pt: &OrderedPartition) -> Characteristics {
        self.divisor_part(pt).add(&self.shift).reduced()
    }
}

/// Cycle integrals of mu_p^Lambda over A_1..A_g for p = 1..Nm, rows by p.
pub fn mu_a_periods(periods: &Periods, pt: &OrderedPartition) -> Result<(CMat, f64)> {
    let spec = &periods.spec;
    let prec = spec.prec();
    let rows = crate::par::try_map(&(1..=spec.count()).collect::<Vec<_>>(), |&p| -> Result<(Vec<Complex>, f64)> {
        let k = Kernel::prepare(spec, &DifferentialRef::Mu { partition: pt.clone(), p })?;
        let ints = periods.family.integrate(&k);
        let mut row = Vec::new();
        let mut e: f64 = 0.0;
        for i in 0..periods.genus() {
            let (v, err) = combine(prec, periods.homology.a_cycle(i), &ints);
            row.push(v);
            e = e.max(err);
        }
        Ok((row, e))
    })?;
    let err = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok((rows.into_iter().map(|r| r.0).collect(), err))
}

/// M[k][i] = D_{k+1} d_i log theta = sum_l sigma_{l(N-1,k+1)} H[l][i].
pub fn d_log_hessian(periods: &Periods, log_hess: &CMat) -> CMat {
    let prec = periods.spec.prec();
    let d = &periods.data.d_coeffs;
    let g = periods.genus();
    d.iter()
        .map(|row| {
            (0..g)
                .map(|i| {
                    let mut v = Complex::new(prec);
                    for l in 0..g {
                        v += Complex::with_val(prec, &row[l] * &log_hess[l][i]);
                    }
                    v
                })
                .collect()
        })
        .collect()
}

/// Right side 2 pi i N^2 sum_beta lambda_p^{beta-1} D_beta d_i log theta, rows
/// by p. The 2 pi i is the A-period of v_i under int_{A_k} v_i = 2 pi i delta_ik.
fn a_period_rhs(periods: &Periods, log_hess: &CMat) -> CMat {
    let spec = &periods.spec;
    let prec = spec.prec();
    let dm = d_log_hessian(periods, log_hess);
    let n2 = Complex::with_val(prec, mp::two_pi_i(prec) * (spec.n() * spec.n()) as u32);
    (0..spec.count())
        .map(|p| {
            (0..periods.genus())
                .map(|i| {
                    let mut v = Complex::new(prec);
                    for (b, row) in dm.iter().enumerate() {
                        v += Complex::with_val(prec, &row[i] * mp::powi(spec.lambda(p), b as i32));
                    }
                    v * &n2
                })
                .collect()
        })
        .collect()
}

fn matrix_defect(lhs: &CMat, rhs: &CMat) -> f64 {
    let prec = lhs[0][0].prec().0;
    let mut d: f64 = 0.0;
    for (a, b) in lhs.iter().zip(rhs) {
        for (x, y) in a.iter().zip(b) {
            d = d.max(mp::abs_f64(&Complex::with_val(prec, x - y)));
        }
    }
    d / mp::max_abs(&lhs.concat()).max(1e-300)
}

/// Relative defect of the A-period identity for Lambda with characteristic ch.
pub fn a_period_defect(periods: &Periods, pt: &OrderedPartition, ch: &Characteristics) -> Result<f64> {
    let (lhs, _) = mu_a_periods(periods, pt)?;
    a_period_defect_with(periods, &lhs, ch)
}

fn a_period_defect_with(periods: &Periods, lhs: &CMat, ch: &Characteristics) -> Result<f64> {
    let th = theta_constant(periods, ch, 2)?;
    let h = th.log_hess()?;
    Ok(matrix_defect(lhs, &a_period_rhs(periods, &h)))
}

/// Denominator of the candidate grid: e_Lambda is a 1/N period for even N
/// and a 1/2N period for odd N.
pub fn candidate_denominator(n: usize) -> u32 {
    if n % 2 == 0 {
        n as u32
    } else {
        2 * n as u32
    }
}

fn candidate(index: usize, g: usize, den: u32) -> Characteristics {
    let mut x = index;
    let mut take = || {
        let v = (x % den as usize) as i64;
        x /= den as usize;
        Rational::from((v, den as i64))
    };
    let delta = (0..g).map(|_| take()).collect();
    let epsilon = (0..g).map(|_| take()).collect();
    Characteristics { delta, epsilon }
}

/// Search tolerance for the A-period identity.
pub fn search_tolerance(prec: Prec) -> f64 {
    mp::eps(prec / 3).max(1e-30)
}

/// Candidate shifts with their A-period defects at the anchor, sorted by
/// defect (candidates with a vanishing theta constant are skipped).
pub fn candidate_defects(periods: &Periods, anchor: &OrderedPartition) -> Result<Vec<(Characteristics, f64)>> {
    let g = periods.genus();
    let den = candidate_denominator(periods.spec.n());
    let total = (den as usize).checked_pow(2 * g as u32).filter(|&t| t <= CANDIDATE_CAP);
    let total = total.ok_or_else(|| Error::Overflow(format!("{den}^{}", 2 * g)))?;
    let (branch, _) = branch_characteristics(periods)?;
    let map = CharacteristicMap {
        branch,
        shift: Characteristics::zero(g),
        anchor: anchor.clone(),
        candidates_tested: 0,
        anchor_defect: 0.0,
        rounding: 0.0,
    };
    let base = map.divisor_part(anchor);
    let (lhs, _) = mu_a_periods(periods, anchor)?;
    let idx: Vec<usize> = (0..total).collect();
    let res = crate::par::map(&idx, |&i| {
        let c = candidate(i, g, den);
        let e = base.add(&c).reduced();
        a_period_defect_with(periods, &lhs, &e).ok().map(|d| (c, d))
    });
    let mut out: Vec<(Characteristics, f64)> = res.into_iter().flatten().collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

/// Resolve e_Lambda: exact divisor arithmetic from the branch point images
/// plus one shift found by search at the anchor partition.
pub fn find_characteristics(periods: &Periods, anchor: &OrderedPartition) -> Result<CharacteristicMap> {
    let spec = &periods.spec;
    if periods.genus() == 0 {
        return Err(Error::GenusZero);
    }
    if anchor.n() != spec.n() || anchor.m() != spec.m() {
        return Err(Error::InvalidIndex("partition shape does not match the curve".into()));
    }
    let (branch, rounding) = branch_characteristics(periods)?;
    let defects = candidate_defects(periods, anchor)?;
    let tol = search_tolerance(spec.prec());
    let passing: Vec<&(Characteristics, f64)> = defects.iter().filter(|c| c.1 < tol).collect();
    let tested = (candidate_denominator(spec.n()) as usize).pow(2 * periods.genus() as u32);
    let mut map = CharacteristicMap {
        branch,
        shift: Characteristics::zero(periods.genus()),
        anchor: anchor.clone(),
        candidates_tested: tested,
        anchor_defect: 0.0,
        rounding,
    };
    // e and -e give the same even-order data; keep one per class
    let base = map.divisor_part(anchor);
    let mut classes: Vec<(Characteristics, &(Characteristics, f64))> = Vec::new();
    for c in passing {
        let e = base.add(&c.0).reduced();
        let neg = e.scaled(-1).reduced();
        match classes.iter_mut().find(|(k, _)| *k == e || *k == neg) {
            Some(slot) => {
                if e.delta_strings() < slot.0.delta_strings()
                    || (e.delta == slot.0.delta && e.epsilon_strings() < slot.0.epsilon_strings())
                {
                    *slot = (e, c);
                }
            }
            None => classes.push((e, c)),
        }
    }
    match classes.len() {
        0 => Err(Error::NoCandidate),
        1 => {
            map.shift = classes[0].1 .0.clone();
            map.anchor_defect = classes[0].1 .1;
            Ok(map)
        }
        k => Err(Error::Ambiguous(k)),
    }
}

/// Delta^{(N-1)/N^2} / prod (Lambda_i Lambda_j) * det(d_{i_j} D_k log theta[e_Lambda](0));
/// `index_set` is 1-based.
pub fn theta_solution(periods: &Periods, map: &CharacteristicMap, pt: &OrderedPartition, index_set: &[usize]) -> Result<Complex> {
    let spec = &periods.spec;
    let prec = spec.prec();
    let l = spec.ell();
    let g = periods.genus();
    if index_set.len() != l {
        return Err(Error::BadIndices(format!("{} indices given, L = {l}", index_set.len())));
    }
    if l > g {
        return Err(Error::GenusTooSmall { ell: l, available: g });
    }
    for (k, &i) in index_set.iter().enumerate() {
        if i == 0 || i > g || index_set[..k].contains(&i) {
            return Err(Error::BadIndices(format!("index {i} repeated or outside 1..{g}")));
        }
    }
    let ch = map.for_partition(pt);
    let th = theta_constant(periods, &ch, 2)?;
    let h = th.log_hess().map_err(|_| Error::SingularCharacteristic)?;
    let dm = d_log_hessian(periods, &h);
    let m: CMat = index_set.iter().map(|&i| (0..l).map(|k| dm[k][i - 1].clone()).collect()).collect();
    let det = if l == 0 { mp::one(prec) } else { linalg::det(&m, prec) };
    let n = spec.n() as i64;
    let pow = (spec.delta().ln() * mp::from_rational(prec, &Rational::from((n - 1, n * n)))).exp();
    Ok(pow * det / block_products(spec, pt))
}

/// Theta solution for every partition in enumeration order.
pub fn theta_solutions(periods: &Periods, map: &CharacteristicMap, index_set: &[usize]) -> Result<Vec<Complex>> {
    let parts = enumerate_partitions(periods.spec.n(), periods.spec.m())?;
    crate::par::try_map(&parts, |pt| theta_solution(periods, map, pt, index_set))
}

fn ln_abs(z: &Complex) -> Float {
    let prec = z.prec().0;
    Float::with_val(prec, z.abs_ref()).ln()
}

/// Block Lambda_i with Lambda_0 = Lambda_N.
fn block0(pt: &OrderedPartition, i: usize) -> &[usize] {
    pt.block(if i == 0 { pt.n() } else { i })
}

/// ln |(Lambda_i Lambda_j)|; the intra-block product when i = j.
fn ln_pair(spec: &CurveSpec, pt: &OrderedPartition, i: usize, j: usize) -> Float {
    let prec = spec.prec();
    let mut acc = Float::new(prec);
    let (a, b) = (block0(pt, i), block0(pt, j));
    for (x, &r) in a.iter().enumerate() {
        for (y, &s) in b.iter().enumerate() {
            if i == j && y <= x {
                continue;
            }
            acc += ln_abs(&Complex::with_val(prec, spec.lambda(r) - spec.lambda(s)));
        }
    }
    acc
}

/// mu = (N-1)(2N-1)/(6N).
pub fn thomae_mu(n: usize) -> Rational {
    let n = n as i64;
    Rational::from(((n - 1) * (2 * n - 1), 6 * n))
}

/// ln of |theta[e](0)^{2N} / ((det A)^N prod_{i<=j} (Lambda_i Lambda_j)^{2N q(i,j) + N mu})|.
pub fn thomae_log_modulus(periods: &Periods, map: &CharacteristicMap, pt: &OrderedPartition) -> Result<Float> {
    let spec = &periods.spec;
    let prec = spec.prec();
    let n = spec.n();
    let th = theta_constant(periods, &map.for_partition(pt), 0)?;
    th.nonzero().map_err(|_| Error::SingularCharacteristic)?;
    let det_a = linalg::det(&periods.data.a_matrix, prec);
    let mut v = Float::with_val(prec, ln_abs(&th.value) * (2 * n) as u32);
    v -= Float::with_val(prec, ln_abs(&det_a) * n as u32);
    let nmu = Rational::from(thomae_mu(n) * n as u32);
    for i in 0..n {
        for j in i..n {
            let e = Rational::from(q_pair(i as i64, j as i64, n) * (2 * n) as u32) + &nmu;
            v -= Float::with_val(prec, ln_pair(spec, pt, i, j) * Float::with_val(prec, &e));
        }
    }
    Ok(v)
}

/// max_k |a_k/b_k - a_0/b_0| / |a_0/b_0|.
pub fn ratio_spread(a: &[Complex], b: &[Complex]) -> f64 {
    let prec = a.first().map(|x| x.prec().0).unwrap_or(64);
    let r: Vec<Complex> = a.iter().zip(b).map(|(x, y)| Complex::with_val(prec, x / y)).collect();
    let mut d: f64 = 0.0;
    for x in &r {
        d = d.max(mp::abs_f64(&Complex::with_val(prec, x - &r[0])));
    }
    d / mp::abs_f64(&r[0]).max(1e-300)
}

/// Spread of |a_k / b_k| across k, as in `log_spread`.
pub fn ratio_modulus_spread(a: &[Complex], b: &[Complex]) -> f64 {
    let logs: Vec<Float> = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let prec = x.prec().0;
            Float::with_val(prec, x.abs_ref()).ln() - Float::with_val(prec, y.abs_ref()).ln()
        })
        .collect();
    log_spread(&logs)
}

/// Spread of exp(x_k) for log-moduli x_k, computed relative to the first.
pub fn log_spread(vals: &[Float]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    let prec = vals[0].prec();
    let rel: Vec<Float> = vals.iter().map(|x| Float::with_val(prec, x - &vals[0]).exp()).collect();
    let max = rel.iter().fold(Float::with_val(prec, 0), |a, b| if *b > a { b.clone() } else { a });
    let min = rel.iter().fold(rel[0].clone(), |a, b| if *b < a { b.clone() } else { a });
    (Float::with_val(prec, &max - &min) / max).to_f64()
}

/// Periods on a sequence of curves sharing the first curve's cycle codes.
pub fn periods_along(samples: &[CurveSpec]) -> Result<Vec<Periods>> {
    let first = samples.first().ok_or_else(|| Error::BadParameters("no samples".into()))?;
    let p0 = Periods::compute(first)?;
    let mut out = vec![p0];
    for s in &samples[1..] {
        let p = Periods::compute_like(s, &out[0].homology)?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ThomaeReport {
    pub partition: OrderedPartition,
    /// per sample, ln of the Thomae modulus ratio
    pub log_moduli: Vec<Float>,
    /// per sample, ln of the composite modulus ratio (product formula)
    pub composite_log_moduli: Vec<Float>,
    pub characteristics: Vec<Characteristics>,
    pub spread: f64,
    pub composite_spread: f64,
}

/// ln of |prod_{i<j} (Lambda_i Lambda_j)| / |(det A)^{6/(N+1)} Delta^{3(N-1)/(N+1)}
/// prod_sigma theta[e_{Lambda^sigma}](0)^{-12N/(N+1)!}|, sigma over S_{N-1}.
pub fn composite_log_modulus(periods: &Periods, map: &CharacteristicMap, pt: &OrderedPartition) -> Result<Float> {
    let spec = &periods.spec;
    let prec = spec.prec();
    let n = spec.n();
    let fact: u64 = (1..=(n as u64 + 1)).product();
    let mut v = ln_abs(&block_products(spec, pt));
    let det_a = linalg::det(&periods.data.a_matrix, prec);
    v -= Float::with_val(prec, ln_abs(&det_a) * Float::with_val(prec, &Rational::from((6, n as i64 + 1))));
    let e_delta = Rational::from((3 * (n as i64 - 1), n as i64 + 1));
    v -= Float::with_val(prec, ln_abs(&spec.delta()) * Float::with_val(prec, &e_delta));
    let e_theta = Rational::from((12 * n as i64, fact as i64));
    for perm in permutations(n - 1) {
        let q = pt.permuted(&perm);
        let th = theta_constant(periods, &map.for_partition(&q), 0)?;
        th.nonzero().map_err(|_| Error::SingularCharacteristic)?;
        v += Float::with_val(prec, ln_abs(&th.value) * Float::with_val(prec, &e_theta));
    }
    Ok(v)
}

/// All permutations of 1..=k in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(cur.clone());
            return;
        }
        for i in 0..left.len() {
            let x = left.remove(i);
            cur.push(x);
            rec(cur, left, out);
            cur.pop();
            left.insert(i, x);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (1..=k).collect(), &mut out);
    out
}

/// Thomae and composite moduli at each sample curve for a fixed partition.
/// Samples after the first reuse its cycle codes.
pub fn thomae_check(samples: &[CurveSpec], pt: &OrderedPartition) -> Result<ThomaeReport> {
    let ps = periods_along(samples)?;
    thomae_check_with(&ps, pt)
}

pub fn thomae_check_with(ps: &[Periods], pt: &OrderedPartition) -> Result<ThomaeReport> {
    let mut logs = Vec::new();
    let mut comp = Vec::new();
    let mut chars = Vec::new();
    for p in ps {
        let anchor = OrderedPartition::standard(p.spec.n(), p.spec.m());
        let map = find_characteristics(p, &anchor)?;
        logs.push(thomae_log_modulus(p, &map, pt)?);
        comp.push(composite_log_modulus(p, &map, pt)?);
        chars.push(map.for_partition(pt));
    }
    Ok(ThomaeReport {
        partition: pt.clone(),
        spread: log_spread(&logs),
        composite_spread: log_spread(&comp),
        log_moduli: logs,
        composite_log_moduli: comp,
        characteristics: chars,
    })
}

/// (det A)^{-3} Delta^{-3/4} theta[e](0)^4 det(d_i d_j log theta[e](0)) per partition
/// in enumeration order; N = 2 only.
pub fn smirnov_sl2(periods: &Periods, map: &CharacteristicMap) -> Result<Vec<(OrderedPartition, Complex)>> {
    let spec = &periods.spec;
    if spec.n() != 2 {
        return Err(Error::WrongN(spec.n()));
    }
    let prec = spec.prec();
    let det_a = linalg::det(&periods.data.a_matrix, prec);
    let pre = (Complex::with_val(prec, det_a.ln() * -3i32) - Complex::with_val(prec, spec.delta().ln() * 3u32) / 4u32).exp();
    let parts = enumerate_partitions(2, spec.m())?;
    crate::par::try_map(&parts, |pt| {
        let th = theta_constant(periods, &map.for_partition(pt), 2)?;
        let h = th.log_hess().map_err(|_| Error::SingularCharacteristic)?;
        let v4 = Complex::with_val(prec, th.value.square_ref()).square();
        Ok((pt.clone(), Complex::with_val(prec, &pre * v4) * linalg::det(&h, prec)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau1(x: f64, y: f64) -> CMat {
        vec![vec![mp::c(128, x, y)]]
    }

    #[test]
    fn one_dimensional_series() {
        let prec = 128;
        let th = riemann_theta(&[mp::zero(prec)], &tau1(-5.0, 0.0), &Characteristics::zero(1), 0, prec).unwrap();
        // 1 + 2 sum_{m>0} exp(-5 m^2 / 2)
        let mut want = Float::with_val(prec, 1);
        for m in 1..20i32 {
            want += Float::with_val(prec, Float::with_val(prec, -2.5 * (m * m) as f64).exp() * 2u32);
        }
        let d = Float::with_val(prec, th.value.real() - &want).abs().to_f64();
        assert!(d < 1e-35, "{d}");
        assert!((th.value.real().to_f64() - 1.16426079).abs() < 1e-8);
    }

    #[test]
    fn characteristic_strings_and_parity() {
        let c = Characteristics { delta: vec![Rational::from((1, 2))], epsilon: vec![Rational::from((1, 2))] };
        assert_eq!(c.delta_strings(), vec!["1/2"]);
        assert_eq!(c.is_even_half_period(), Some(false));
        assert_eq!(c.shifted(&[1], &[-1]).reduced(), c);
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(thomae_mu(2), Rational::from((1, 4)));
        assert_eq!(q_pair(0, 0, 2), Rational::from((1, 8)));
    }

    #[test]
    fn ellipsoid_contains_the_box_center() {
        let u = vec![vec![1.0, 0.2], vec![0.0, 2.0]];
        let pts = ellipsoid_points(&u, &[0.0, 0.0], 3.0);
        assert!(pts.contains(&vec![0, 0]));
        for p in &pts {
            let a = u[0][0] * p[0] as f64 + u[0][1] * p[1] as f64;
            let b = u[1][1] * p[1] as f64;
            assert!(a * a + b * b <= 9.0 + 1e-12);
        }
    }
}
