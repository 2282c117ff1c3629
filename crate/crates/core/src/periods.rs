//! Cycle integrals and the period data: A-periods of the holomorphic basis,
//! the normalization sigma, the period matrix tau and the D_beta
//! coefficients.

use rug::{Complex, Rational};

use crate::curve::{BranchFrame, CurveSpec};
use crate::differentials::{holo_index, holo_labels, local_value_with, DifferentialRef, Kernel};
use crate::error::{Error, Result};
use crate::homology::{self, Cycle, CycleCode, IntersectionData};
use crate::linalg::{self, CMat};
use crate::mp::{self, Prec};
use crate::quadrature::{Integral, PathRule};

/// Quadrature rules for every elementary cycle of a homology basis.
#[derive(Clone, Debug)]
pub struct CycleFamily {
    pub codes: Vec<CycleCode>,
    pub rules: Vec<PathRule>,
}

impl CycleFamily {
    pub fn build(spec: &CurveSpec, cycles: &[Cycle]) -> Result<Self> {
        let rules = crate::par::try_map(cycles, |c| integrate_rule(spec, c))?;
        Ok(CycleFamily { codes: cycles.iter().map(|c| c.code).collect(), rules })
    }

    /// Integrals of one kernel over every elementary cycle.
    pub fn integrate(&self, kernel: &Kernel) -> Vec<Integral> {
        self.rules.iter().map(|r| r.integrate(kernel)).collect()
    }
}

fn integrate_rule(spec: &CurveSpec, c: &Cycle) -> Result<PathRule> {
    let (rule, end) = PathRule::build(spec, &c.pieces, &c.start)?;
    if crate::curve::winding_diff(&end.logs, &c.start.logs, spec.n()) != 0 {
        return Err(Error::NonClosedCycle);
    }
    Ok(rule)
}

/// Integral of a form over one cycle.
pub fn integrate_cycle(spec: &CurveSpec, form: &DifferentialRef, cycle: &Cycle) -> Result<Integral> {
    let kernel = Kernel::prepare(spec, form)?;
    if kernel.is_half() {
        return Err(Error::InvalidIndex("half-differentials are not integrated".into()));
    }
    let rule = integrate_rule(spec, cycle)?;
    let out = rule.integrate(&kernel);
    let err = out.err(spec.prec());
    let tol = mp::eps(spec.prec().saturating_sub(16)) * (out.abs_sum + mp::abs_f64(&out.value));
    if !err.is_finite() || err > tol.max(1e-300) * 1e6 {
        return Err(Error::NoConvergence);
    }
    Ok(out)
}

/// Value and error of an integer combination of elementary integrals.
pub fn combine(prec: Prec, coeffs: &[i64], ints: &[Integral]) -> (Complex, f64) {
    let mut v = Complex::new(prec);
    let mut e = 0.0;
    for (&c, i) in coeffs.iter().zip(ints) {
        if c != 0 {
            v += Complex::with_val(prec, &i.value * c);
            e += c.unsigned_abs() as f64 * i.err(prec);
        }
    }
    (v, e)
}

#[derive(Clone, Debug)]
pub struct PeriodData {
    /// A[i][c] = integral over A_i of the c-th holomorphic form
    pub a_matrix: CMat,
    /// same over B_i
    pub b_matrix: CMat,
    pub tau: CMat,
    pub sigma: CMat,
    /// D[beta-1][j] = sigma_{j (N-1, beta)}
    pub d_coeffs: CMat,
    /// A-period normalization defect max |int_{A_j} v_k - 2 pi i delta_jk|
    pub normalization_defect: f64,
    pub cond: f64,
    pub err: f64,
    /// true when B-cycles were reversed to make Re tau negative definite
    pub flipped: bool,
}

/// Everything derived from one curve: homology, quadrature rules and periods.
#[derive(Clone, Debug)]
pub struct Periods {
    pub spec: CurveSpec,
    pub homology: IntersectionData,
    pub family: CycleFamily,
    pub data: PeriodData,
}

impl Periods {
    /// Build homology, rules and period data for a curve.
    pub fn compute(spec: &CurveSpec) -> Result<Self> {
        let homology = homology::build_homology(spec)?;
        Self::with_homology(spec, homology)
    }

    /// Same, with cycles regenerated from the codes of another basis.
    pub fn compute_like(spec: &CurveSpec, like: &IntersectionData) -> Result<Self> {
        let cycles = homology::cycles_from_codes(spec, &like.codes())?;
        let pairing = homology::intersection_matrix(spec, &cycles)?;
        if pairing != like.pairing {
            return Err(Error::StepTooLarge);
        }
        let h = IntersectionData { cycles, pairing, transform: like.transform.clone(), genus: like.genus };
        let family = CycleFamily::build(spec, &h.cycles)?;
        let data = build_periods_with(spec, &h, &family, Some(like))?;
        Ok(Periods { spec: spec.clone(), homology: h, family, data })
    }

    pub fn with_homology(spec: &CurveSpec, mut homology: IntersectionData) -> Result<Self> {
        let family = CycleFamily::build(spec, &homology.cycles)?;
        let data = build_periods_with(spec, &homology, &family, None)?;
        if data.flipped {
            homology.flip_b();
        }
        Ok(Periods { spec: spec.clone(), homology, family, data })
    }

    pub fn genus(&self) -> usize {
        self.homology.genus
    }

    /// Integrals of a form over A_1..A_g and B_1..B_g with errors.
    pub fn basis_integrals(&self, kernel: &Kernel) -> (Vec<Complex>, Vec<Complex>, f64) {
        let prec = self.spec.prec();
        let ints = self.family.integrate(kernel);
        let g = self.genus();
        let mut a = Vec::with_capacity(g);
        let mut b = Vec::with_capacity(g);
        let mut err: f64 = 0.0;
        for i in 0..g {
            let (v, e) = combine(prec, self.homology.a_cycle(i), &ints);
            a.push(v);
            err = err.max(e);
            let (v, e) = combine(prec, self.homology.b_cycle(i), &ints);
            b.push(v);
            err = err.max(e);
        }
        (a, b, err)
    }
}

/// Period data from a homology basis; B-cycles are reported reversed when
/// that is needed for Re tau to be negative definite.
pub fn build_periods(spec: &CurveSpec, basis: &IntersectionData) -> Result<PeriodData> {
    let family = CycleFamily::build(spec, &basis.cycles)?;
    build_periods_with(spec, basis, &family, None)
}

fn build_periods_with(
    spec: &CurveSpec,
    basis: &IntersectionData,
    family: &CycleFamily,
    like: Option<&IntersectionData>,
) -> Result<PeriodData> {
    let g = basis.genus;
    if g == 0 {
        return Err(Error::GenusZero);
    }
    let prec = spec.prec();
    let labels = holo_labels(spec.n(), spec.m());
    let kernels: Vec<Kernel> = labels.iter().map(|&(alpha, beta)| Kernel::Holo { alpha, beta }).collect();
    // integrals of every holomorphic form over every elementary cycle
    let ints: Vec<Vec<Integral>> = crate::par::map(&kernels, |k| family.integrate(k));
    let mut a = linalg::zeros(g, g, prec);
    let mut b = linalg::zeros(g, g, prec);
    let mut int_err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..g {
        for c in 0..g {
            let (v, e) = combine(prec, basis.a_cycle(i), &ints[c]);
            scale = scale.max(mp::abs_f64(&v));
            a[i][c] = v;
            int_err = int_err.max(e);
            let (v, e) = combine(prec, basis.b_cycle(i), &ints[c]);
            scale = scale.max(mp::abs_f64(&v));
            b[i][c] = v;
            int_err = int_err.max(e);
        }
    }
    let (ainv, cond) = linalg::inverse(&a, prec)?;
    if !cond.is_finite() || cond * mp::eps(prec) > 1e-8 {
        return Err(Error::SingularAMatrix(cond));
    }
    let two_pi_i = mp::two_pi_i(prec);
    let sigma = linalg::scale(&linalg::transpose(&ainv), &two_pi_i);
    let mut tau = linalg::matmul(&b, &linalg::transpose(&sigma), prec);
    let mut b = b;
    // a reference basis already carries its orientation
    let flipped = match like {
        Some(_) => false,
        None => {
            let re: Vec<Vec<f64>> = tau.iter().map(|r| r.iter().map(|x| x.real().to_f64()).collect()).collect();
            let neg: Vec<Vec<f64>> = re.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
            if linalg::cholesky(&neg).is_some() {
                false
            } else if linalg::cholesky(&re).is_some() {
                true
            } else {
                return Err(Error::NotNegativeDefinite);
            }
        }
    };
    if flipped {
        for row in tau.iter_mut().chain(b.iter_mut()) {
            for x in row.iter_mut() {
                *x = Complex::with_val(prec, -&*x);
            }
        }
    }
    let l = spec.ell();
    let mut d = linalg::zeros(l, g, prec);
    for beta in 1..=l {
        let c = holo_index(spec.n(), spec.m(), spec.n() - 1, beta);
        for j in 0..g {
            d[beta - 1][j] = sigma[j][c].clone();
        }
    }
    let check = linalg::matmul(&a, &linalg::transpose(&sigma), prec);
    let mut norm_def: f64 = 0.0;
    for (j, row) in check.iter().enumerate() {
        for (k, x) in row.iter().enumerate() {
            let want = if j == k { two_pi_i.clone() } else { mp::zero(prec) };
            norm_def = norm_def.max(mp::abs_f64(&Complex::with_val(prec, x - &want)));
        }
    }
    let rel = int_err / scale.max(1e-300);
    let err = 4.0 * (1.0 + cond) * rel * (1.0 + mp::max_abs(&tau.concat()).max(mp::max_abs(&sigma.concat())));
    Ok(PeriodData { a_matrix: a, b_matrix: b, tau, sigma, d_coeffs: d, normalization_defect: norm_def, cond, err, flipped })
}

/// max_j |v_j(Q_p) - N f'(lambda_p)^{1/N-1} sum_beta sigma_{j(N-1,beta)} lambda_p^{beta-1}|,
/// relative to the largest |v_j(Q_p)|. p is 1-based.
pub fn v_at_branch_check(spec: &CurveSpec, periods: &PeriodData, p: usize) -> Result<f64> {
    if p == 0 || p > spec.count() {
        return Err(Error::InvalidIndex(format!("branch index {p}")));
    }
    let prec = spec.prec();
    let n = spec.n();
    let frame = BranchFrame::new(spec, p - 1)?;
    let labels = holo_labels(n, spec.m());
    let locals: Vec<Complex> = labels
        .iter()
        .map(|&(alpha, beta)| local_value_with(spec, &frame, &Kernel::Holo { alpha, beta }))
        .collect::<Result<_>>()?;
    let pref = frame.fprime_pow(&Rational::from((1 - n as i64, n as i64))) * n as u32;
    let lp = spec.lambda(p - 1);
    let g = periods.sigma.len();
    let mut worst: f64 = 0.0;
    let mut size: f64 = 0.0;
    for j in 0..g {
        let mut v = Complex::new(prec);
        for (c, loc) in locals.iter().enumerate() {
            v += Complex::with_val(prec, &periods.sigma[j][c] * loc);
        }
        let mut rhs = Complex::new(prec);
        for beta in 1..=spec.ell() {
            rhs += Complex::with_val(prec, &periods.d_coeffs[beta - 1][j] * mp::powi(lp, beta as i32 - 1));
        }
        rhs *= &pref;
        size = size.max(mp::abs_f64(&v));
        worst = worst.max(mp::abs_f64(&Complex::with_val(prec, &v - &rhs)));
    }
    Ok(worst / size.max(1e-300))
}

/// max over entries of |tau - tau^T| / max |tau|.
pub fn symmetry_defect(tau: &CMat) -> f64 {
    let prec = tau[0][0].prec().0;
    let mut d: f64 = 0.0;
    for i in 0..tau.len() {
        for j in 0..tau.len() {
            d = d.max(mp::abs_f64(&Complex::with_val(prec, &tau[i][j] - &tau[j][i])));
        }
    }
    d / mp::max_abs(&tau.concat()).max(1e-300)
}

/// Riemann bilinear residual for two holomorphic forms:
/// sum_i A_i(w) B_i(w') - B_i(w) A_i(w'), relative to the size of the terms.
pub fn bilinear_residual(p: &Periods, w1: &Kernel, w2: &Kernel) -> f64 {
    let prec = p.spec.prec();
    let (a1, b1, _) = p.basis_integrals(w1);
    let (a2, b2, _) = p.basis_integrals(w2);
    let mut acc = Complex::new(prec);
    let mut size: f64 = 0.0;
    for i in 0..p.genus() {
        let t1 = Complex::with_val(prec, &a1[i] * &b2[i]);
        let t2 = Complex::with_val(prec, &b1[i] * &a2[i]);
        size = size.max(mp::abs_f64(&t1)).max(mp::abs_f64(&t2));
        acc += t1;
        acc -= t2;
    }
    mp::abs_f64(&acc) / size.max(1e-300)
}
