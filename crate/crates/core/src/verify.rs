//! Exact checks of the algebraic identities behind the integral formula.
//!
//! An identity is a [`FormExpr`]: a sum of terms R(z, lambda) times a power
//! product prod (z - lambda_i)^{f_i} prod (lambda_p - lambda_j)^{g_j} with
//! fractional exponents f, g in (-1, 0]. Terms with the same exponent class are
//! added; the identity holds iff every class sums to zero. The rational parts
//! are evaluated exactly at random rational points (Schwartz-Zippel).
//! Values carry a tangent so that d/d lambda_q is exact as well.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;
use serde::Serialize;

use crate::differentials::{q_pair, spin_exponent, zeta_poly};
use crate::error::{Error, Result};
use crate::par;
use crate::partition::OrderedPartition;
use crate::poly::{self, Scalar};

/// Sampled numerators and denominators lie in [1, SAMPLE_BOUND].
pub const SAMPLE_BOUND: u32 = 1 << 16;
/// Resampling attempts per trial before giving up.
const RESAMPLE: usize = 100;

// ------------------------------------------------------------------ duals

/// v + t eps with eps^2 = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    pub v: Rational,
    pub t: Rational,
}

impl Dual {
    pub fn cst(v: Rational) -> Self {
        Dual { v, t: Rational::new() }
    }
    pub fn int(i: i64) -> Self {
        Self::cst(Rational::from(i))
    }
    pub fn q(num: i64, den: i64) -> Self {
        Self::cst(Rational::from((num, den)))
    }
    pub fn var(v: Rational) -> Self {
        Dual { v, t: Rational::from(1) }
    }
    pub fn neg(&self) -> Self {
        Dual { v: Rational::from(-&self.v), t: Rational::from(-&self.t) }
    }
    pub fn inv(&self) -> Option<Self> {
        if self.v.cmp0().is_eq() {
            return None;
        }
        let r = Rational::from(self.v.recip_ref());
        let t = Rational::from(-&self.t) * &r * &r;
        Some(Dual { v: r, t })
    }
    pub fn div(&self, o: &Self) -> Option<Self> {
        Some(self.mul(&o.inv()?))
    }
    pub fn powi(&self, k: i64) -> Option<Self> {
        let base = if k < 0 { self.inv()? } else { self.clone() };
        let mut acc = Dual::int(1);
        for _ in 0..k.unsigned_abs() {
            acc = acc.mul(&base);
        }
        Some(acc)
    }
    pub fn scale(&self, c: &Rational) -> Self {
        Dual { v: Rational::from(&self.v * c), t: Rational::from(&self.t * c) }
    }
}

impl Scalar for Dual {
    fn zero_like(&self) -> Self {
        Dual::int(0)
    }
    fn from_i64_like(&self, v: i64) -> Self {
        Dual::int(v)
    }
    fn add(&self, o: &Self) -> Self {
        Dual { v: Rational::from(&self.v + &o.v), t: Rational::from(&self.t + &o.t) }
    }
    fn sub(&self, o: &Self) -> Self {
        Dual { v: Rational::from(&self.v - &o.v), t: Rational::from(&self.t - &o.t) }
    }
    fn mul(&self, o: &Self) -> Self {
        let t = Rational::from(&self.v * &o.t) + Rational::from(&self.t * &o.v);
        Dual { v: Rational::from(&self.v * &o.v), t }
    }
    fn is_zero(&self) -> bool {
        self.v.cmp0().is_eq() && self.t.cmp0().is_eq()
    }
}

fn prod(it: impl IntoIterator<Item = Dual>) -> Dual {
    it.into_iter().fold(Dual::int(1), |a, b| a.mul(&b))
}

fn try_sum(it: impl IntoIterator<Item = Option<Dual>>) -> Option<Dual> {
    let mut acc = Dual::int(0);
    for x in it {
        acc = acc.add(&x?);
    }
    Some(acc)
}

// ------------------------------------------------------------------ points

/// Evaluation point; `lam` is 0-based.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub n: usize,
    pub z: Dual,
    pub lam: Vec<Dual>,
}

impl Ctx {
    pub fn new(n: usize, z: Rational, lam: Vec<Rational>) -> Self {
        Ctx { n, z: Dual::cst(z), lam: lam.into_iter().map(Dual::cst).collect() }
    }
    /// z - lambda_i
    pub fn zl(&self, i: usize) -> Dual {
        self.z.sub(&self.lam[i])
    }
    /// lambda_i - lambda_j
    pub fn ll(&self, i: usize, j: usize) -> Dual {
        self.lam[i].sub(&self.lam[j])
    }
    /// f(z) as a polynomial in z.
    fn f_poly(&self) -> poly::Poly<Dual> {
        poly::from_roots(self.lam.iter(), &Dual::int(1))
    }
    fn seeded(&self, q: usize) -> Self {
        let mut c = self.clone();
        c.lam[q] = Dual::var(self.lam[q].v.clone());
        c
    }
}

pub type Coef = Arc<dyn Fn(&Ctx) -> Option<Dual> + Send + Sync>;

fn coef<F>(f: F) -> Coef
where
    F: Fn(&Ctx) -> Option<Dual> + Send + Sync + 'static,
{
    Arc::new(f)
}

fn one() -> Coef {
    coef(|_| Some(Dual::int(1)))
}

fn konst(c: Rational) -> Coef {
    coef(move |_| Some(Dual::cst(c.clone())))
}

// ------------------------------------------------------------------ forms

/// Differential or function multiplying a term's coefficient.
#[derive(Clone, Debug)]
pub enum Basis {
    /// A plain rational function.
    One,
    /// dz / s
    DzOverS,
    /// mu_p^Lambda (p 0-based)
    Mu { partition: OrderedPartition, p: usize },
    /// zeta_j^Lambda (j 1-based)
    Zeta { partition: OrderedPartition, j: usize },
    /// d(s^{N-1} / (z - lambda_p)) expanded as a multiple of dz / s
    Exact { p: usize },
    /// prod_i (z - lambda_i)^{z_exps[i]} times optionally
    /// prod_{j != p} (lambda_p - lambda_j)^{g[j]}; dz is implicit.
    Power { z_exps: Vec<Rational>, at: Option<(usize, Vec<Rational>)> },
}

#[derive(Clone)]
pub struct Term {
    pub coef: Coef,
    pub basis: Basis,
    /// Apply d/d lambda_q (0-based) to the whole term.
    pub d_lambda: Option<usize>,
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Term").field("basis", &self.basis).field("d_lambda", &self.d_lambda).finish()
    }
}

/// Fractional exponent class of a term.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Key {
    pub z: Vec<Rational>,
    pub at: Option<(usize, Vec<Rational>)>,
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let zs: Vec<String> = self.z.iter().map(|r| r.to_string()).collect();
        write!(f, "z[{}]", zs.join(","))?;
        if let Some((p, g)) = &self.at {
            let gs: Vec<String> = g.iter().map(|r| r.to_string()).collect();
            write!(f, " at{}[{}]", p + 1, gs.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FormExpr {
    pub n: usize,
    pub m: usize,
    pub terms: Vec<Term>,
    /// Evaluate every mu as sum_j zeta_j lambda_p^{L-j}, i.e. drop the
    /// exact part N d(s^{N-1}/(z - lambda_p)).
    pub modulo_exact: bool,
}

/// Integer part n and fractional part f in (-1, 0] with e = n + f.
fn split_exp(e: &Rational) -> (i64, Rational) {
    let n = e.clone().ceil();
    let ni = n.numer().to_i64().expect("small exponent");
    (ni, Rational::from(e - n))
}

impl FormExpr {
    pub fn new(n: usize, m: usize) -> Self {
        FormExpr { n, m, terms: Vec::new(), modulo_exact: false }
    }
    pub fn ell(&self) -> usize {
        (self.n - 1) * self.m - 1
    }
    pub fn push(&mut self, c: Coef, basis: Basis) {
        self.terms.push(Term { coef: c, basis, d_lambda: None });
    }
    pub fn push_neg(&mut self, c: Coef, basis: Basis) {
        self.push(coef(move |x| Some(c(x)?.neg())), basis);
    }
    pub fn push_term(&mut self, t: Term) {
        self.terms.push(t);
    }

    fn dz_key(&self) -> Vec<Rational> {
        vec![Rational::from((-1, self.n as i64)); self.n * self.m]
    }

    fn basis_value(&self, c: &Ctx, b: &Basis) -> Option<(Key, Dual)> {
        let total = self.n * self.m;
        let plain = || Key { z: vec![Rational::new(); total], at: None };
        let dz = || Key { z: self.dz_key(), at: None };
        Some(match b {
            Basis::One => (plain(), Dual::int(1)),
            Basis::DzOverS => (dz(), Dual::int(1)),
            Basis::Mu { partition, p } => {
                let v = if self.modulo_exact {
                    let ell = self.ell();
                    try_sum((1..=ell).map(|j| {
                        let zp = zeta_poly(&c.lam, partition, j, ell);
                        Some(poly::eval(&zp, &c.z).mul(&c.lam[*p].powi((ell - j) as i64)?))
                    }))?
                } else {
                    mu_coef(c, partition, *p)?
                };
                (dz(), v)
            }
            Basis::Zeta { partition, j } => {
                let zp = zeta_poly(&c.lam, partition, *j, self.ell());
                (dz(), poly::eval(&zp, &c.z))
            }
            Basis::Exact { p } => (dz(), exact_coef(c, *p)?),
            Basis::Power { z_exps, at } => {
                let mut val = Dual::int(1);
                let mut zf = Vec::with_capacity(total);
                for (i, e) in z_exps.iter().enumerate() {
                    let (k, f) = split_exp(e);
                    val = val.mul(&c.zl(i).powi(k)?);
                    zf.push(f);
                }
                let at_key = match at {
                    None => None,
                    Some((p, g)) => {
                        let mut gf = Vec::with_capacity(total);
                        for (j, e) in g.iter().enumerate() {
                            if j == *p {
                                gf.push(Rational::new());
                                continue;
                            }
                            let (k, f) = split_exp(e);
                            val = val.mul(&c.ll(*p, j).powi(k)?);
                            gf.push(f);
                        }
                        if gf.iter().all(|f| f.cmp0().is_eq()) {
                            None
                        } else {
                            Some((*p, gf))
                        }
                    }
                };
                (Key { z: zf, at: at_key }, val)
            }
        })
    }

    fn term_value(&self, base: &Ctx, t: &Term) -> Option<(Key, Rational)> {
        let c = match t.d_lambda {
            Some(q) => base.seeded(q),
            None => base.clone(),
        };
        let (key, b) = self.basis_value(&c, &t.basis)?;
        let r = (t.coef)(&c)?.mul(&b);
        let Some(q) = t.d_lambda else {
            return Some((key, r.v));
        };
        // d/d lambda_q of the fractional power product
        let mut corr = (-key.z[q].clone()).div(&c.zl(q).v)?;
        if let Some((p, g)) = &key.at {
            if q != *p {
                corr -= g[q].clone().div(&c.ll(*p, q).v)?;
            } else {
                for (j, gj) in g.iter().enumerate() {
                    if j != *p {
                        corr += gj.clone().div(&c.ll(*p, j).v)?;
                    }
                }
            }
        }
        Some((key, r.t + r.v * corr))
    }

    /// Class sums at one point; `None` when a denominator vanishes.
    pub fn eval(&self, c: &Ctx) -> Option<BTreeMap<Key, Rational>> {
        let mut out: BTreeMap<Key, Rational> = BTreeMap::new();
        for t in &self.terms {
            let (k, v) = self.term_value(c, t)?;
            *out.entry(k).or_default() += v;
        }
        out.retain(|_, v| !v.cmp0().is_eq());
        Some(out)
    }

    /// Adds `delta` to the coefficient of term `idx`.
    pub fn perturbed(&self, idx: usize, delta: i64) -> Self {
        let mut e = self.clone();
        let old = e.terms[idx].coef.clone();
        e.terms[idx].coef = coef(move |x| Some(old(x)?.add(&Dual::int(delta))));
        e
    }
}

trait RatExt {
    fn div(self, d: &Rational) -> Option<Rational>;
}

impl RatExt for Rational {
    fn div(self, d: &Rational) -> Option<Rational> {
        if d.cmp0().is_eq() {
            None
        } else {
            Some(self / d)
        }
    }
}

/// Coefficient of dz/s in mu_p^Lambda.
fn mu_coef(c: &Ctx, pt: &OrderedPartition, p: usize) -> Option<Dual> {
    let r = pt.block_of(p);
    let mut num = Dual::int(1);
    for j in 0..c.lam.len() {
        if pt.block_of(j) != r {
            num = num.mul(&c.ll(p, j));
        } else if j != p {
            num = num.mul(&c.zl(j));
        }
    }
    num.div(&c.zl(p))
}

/// Coefficient of dz/s in d(s^{N-1}/(z - lambda_p)).
fn exact_coef(c: &Ctx, p: usize) -> Option<Dual> {
    let f = c.f_poly();
    let fz = poly::eval(&f, &c.z);
    let fpz = poly::eval(&poly::derivative(&f), &c.z);
    let n = c.n as i64;
    let zp = c.zl(p);
    let num = fpz.mul(&zp).scale(&Rational::from((n - 1, n))).sub(&fz);
    num.div(&zp.mul(&zp))
}

// ------------------------------------------------------------------ testing

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub z: String,
    pub lambdas: Vec<String>,
    pub class: String,
    pub value: String,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail(Witness),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

fn random_rational(rng: &mut ChaCha8Rng) -> Rational {
    let a: u32 = rng.gen_range(1..=SAMPLE_BOUND);
    let b: u32 = rng.gen_range(1..=SAMPLE_BOUND);
    Rational::from((a, b))
}

fn trial(expr: &FormExpr, seed: u64, t: usize) -> Option<std::result::Result<(), Witness>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    let total = expr.n * expr.m;
    for _ in 0..RESAMPLE {
        let z = random_rational(&mut rng);
        let lam: Vec<Rational> = (0..total).map(|_| random_rational(&mut rng)).collect();
        let c = Ctx::new(expr.n, z, lam);
        let Some(res) = expr.eval(&c) else { continue };
        return Some(match res.into_iter().next() {
            None => Ok(()),
            Some((k, v)) => Err(Witness {
                z: c.z.v.to_string(),
                lambdas: c.lam.iter().map(|l| l.v.to_string()).collect(),
                class: k.to_string(),
                value: v.to_string(),
            }),
        });
    }
    None
}

/// Exact evaluation at `trials` random rational points.
pub fn test_identity(expr: &FormExpr, trials: usize, seed: u64) -> Result<Verdict> {
    let runs = par::map_range(trials, |t| trial(expr, seed, t));
    for r in runs {
        match r {
            None => return Err(Error::DegenerateSampling),
            Some(Err(w)) => return Ok(Verdict::Fail(w)),
            Some(Ok(())) => {}
        }
    }
    Ok(Verdict::Pass)
}

/// Perturbs one randomly chosen term by +-1 and tests the result.
pub fn mutation_verdict(expr: &FormExpr, trials: usize, seed: u64) -> Result<Option<Verdict>> {
    if expr.terms.is_empty() {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let idx = rng.gen_range(0..expr.terms.len());
    let delta = if rng.gen_bool(0.5) { 1 } else { -1 };
    test_identity(&expr.perturbed(idx, delta), trials, seed.wrapping_add(1)).map(Some)
}

// ------------------------------------------------------------------ registry

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityId {
    Rel1,
    Rel2,
    Rel3,
    Rel4,
    Rel5,
    Prop5,
    Lemma1Prod1,
    Lemma1Prod2,
    Prop2Szego,
    Resth,
    Resth1,
    Resth2,
    Resth2b,
    F11,
    F12,
    F13,
    F21,
    F22,
    F23,
    F24,
    F30,
    F32,
    F41,
    F42,
    F43,
    QsumNeg,
    QsumPos,
    DsRule,
}

impl IdentityId {
    pub const ALL: [IdentityId; 28] = [
        IdentityId::Rel1,
        IdentityId::Rel2,
        IdentityId::Rel3,
        IdentityId::Rel4,
        IdentityId::Rel5,
        IdentityId::Prop5,
        IdentityId::Lemma1Prod1,
        IdentityId::Lemma1Prod2,
        IdentityId::Prop2Szego,
        IdentityId::Resth,
        IdentityId::Resth1,
        IdentityId::Resth2,
        IdentityId::Resth2b,
        IdentityId::F11,
        IdentityId::F12,
        IdentityId::F13,
        IdentityId::F21,
        IdentityId::F22,
        IdentityId::F23,
        IdentityId::F24,
        IdentityId::F30,
        IdentityId::F32,
        IdentityId::F41,
        IdentityId::F42,
        IdentityId::F43,
        IdentityId::QsumNeg,
        IdentityId::QsumPos,
        IdentityId::DsRule,
    ];

    /// Derivation steps run by [`verify_appendix_suite`].
    pub const APPENDIX: [IdentityId; 13] = [
        IdentityId::F11,
        IdentityId::F12,
        IdentityId::F13,
        IdentityId::F21,
        IdentityId::F22,
        IdentityId::F23,
        IdentityId::F24,
        IdentityId::F30,
        IdentityId::F32,
        IdentityId::F41,
        IdentityId::F42,
        IdentityId::F43,
        IdentityId::Rel3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IdentityId::Rel1 => "rel1",
            IdentityId::Rel2 => "rel2",
            IdentityId::Rel3 => "rel3",
            IdentityId::Rel4 => "rel4",
            IdentityId::Rel5 => "rel5",
            IdentityId::Prop5 => "prop5",
            IdentityId::Lemma1Prod1 => "lemma1_prod1",
            IdentityId::Lemma1Prod2 => "lemma1_prod2",
            IdentityId::Prop2Szego => "prop2_szego",
            IdentityId::Resth => "resth",
            IdentityId::Resth1 => "resth1",
            IdentityId::Resth2 => "resth2",
            IdentityId::Resth2b => "resth2b",
            IdentityId::F11 => "f11",
            IdentityId::F12 => "f12",
            IdentityId::F13 => "f13",
            IdentityId::F21 => "f21",
            IdentityId::F22 => "f22",
            IdentityId::F23 => "f23",
            IdentityId::F24 => "f24",
            IdentityId::F30 => "f30",
            IdentityId::F32 => "f32",
            IdentityId::F41 => "f41",
            IdentityId::F42 => "f42",
            IdentityId::F43 => "f43",
            IdentityId::QsumNeg => "qsum_neg",
            IdentityId::QsumPos => "qsum_pos",
            IdentityId::DsRule => "ds_rule",
        }
    }

    /// Names of the index parameters (1-based block and position labels;
    /// `*_mask` are bit masks over positions 1..m).
    pub fn schema(self) -> &'static [&'static str] {
        match self {
            IdentityId::Rel1 | IdentityId::Rel4 | IdentityId::Rel5 | IdentityId::F11 => &["r", "l"],
            IdentityId::F12 | IdentityId::F13 | IdentityId::F41 | IdentityId::F43 => &["r", "l"],
            IdentityId::Rel2 | IdentityId::F21 | IdentityId::F24 => &["r", "l", "l2"],
            IdentityId::Rel3 => &["l", "l2"],
            IdentityId::F22 => &["l"],
            IdentityId::F42 => &["r", "l", "k"],
            IdentityId::Prop5 | IdentityId::Lemma1Prod1 | IdentityId::Prop2Szego | IdentityId::DsRule => &["p"],
            IdentityId::Lemma1Prod2 | IdentityId::Resth => &["r"],
            IdentityId::F32 => &["j"],
            IdentityId::Resth2 => &["r", "t", "ibar_mask"],
            IdentityId::Resth2b => &["r", "l", "ibar_mask", "j_mask"],
            IdentityId::Resth1 | IdentityId::F23 | IdentityId::F30 | IdentityId::QsumNeg | IdentityId::QsumPos => &[],
        }
    }

    /// Identities that hold only up to exact forms.
    pub fn modulo_exact(self) -> bool {
        matches!(self, IdentityId::Rel4 | IdentityId::Rel5 | IdentityId::F30)
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IdentityId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        IdentityId::ALL
            .iter()
            .copied()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown identity id {s}")))
    }
}

/// How B(r, l, k) in rel4 is read when r = N - 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rel4Reading {
    /// As printed for every r.
    #[default]
    Literal,
    /// For r = N - 1 the label i^r_m inside B is replaced by i^r_{m-1}.
    Shifted,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCase {
    pub id: IdentityId,
    pub n: usize,
    pub m: usize,
    pub partition: OrderedPartition,
    pub indices: Vec<usize>,
    pub reading: Rel4Reading,
    /// Added to B(r, l, k); non-zero only for mutation controls.
    pub b_offset: i64,
    pub trials: usize,
    pub seed: u64,
}

impl IdentityCase {
    pub fn new(id: IdentityId, n: usize, m: usize, indices: Vec<usize>) -> Self {
        IdentityCase {
            id,
            n,
            m,
            partition: OrderedPartition::standard(n, m),
            indices,
            reading: Rel4Reading::Literal,
            b_offset: 0,
            trials: 100,
            seed: 0,
        }
    }
    pub fn with_partition(mut self, pt: OrderedPartition) -> Self {
        self.partition = pt;
        self
    }
    pub fn with_trials(mut self, trials: usize, seed: u64) -> Self {
        self.trials = trials;
        self.seed = seed;
        self
    }
}

/// Labels i^r_l of the main text for a fixed partition.
#[derive(Clone)]
struct Labels {
    n: usize,
    m: usize,
    pt: OrderedPartition,
}

impl Labels {
    /// i^r_l as a 0-based element; r in 1..N, l in 1..m.
    fn i(&self, r: usize, l: usize) -> usize {
        self.pt.block(r)[l - 1]
    }
    fn top(&self) -> usize {
        self.i(self.n, self.m)
    }
    /// K = {i^r_l | r < N, (r, l) != (N - 1, m)}
    fn kset(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for r in 1..self.n {
            for l in 1..=self.m {
                if (r, l) != (self.n - 1, self.m) {
                    out.push(self.i(r, l));
                }
            }
        }
        out
    }
    fn total(&self) -> usize {
        self.n * self.m
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadIndices(msg.into())
}

fn need(ix: &[usize], k: usize, id: IdentityId) -> Result<()> {
    if ix.len() != k {
        return Err(bad(format!("{id} expects {k} indices {:?}, got {}", id.schema(), ix.len())));
    }
    Ok(())
}

fn in_range(v: usize, lo: usize, hi: usize, what: &str) -> Result<()> {
    if v < lo || v > hi {
        return Err(bad(format!("{what}={v} outside {lo}..={hi}")));
    }
    Ok(())
}

fn mask_set(mask: usize, m: usize, what: &str) -> Result<Vec<usize>> {
    if mask == 0 || mask >> m != 0 {
        return Err(bad(format!("{what} must be a non-empty subset of 1..={m}")));
    }
    Ok((1..=m).filter(|s| mask >> (s - 1) & 1 == 1).collect())
}

/// Lagrange weight prod_{j in nodes, j != k} (x - j)/(k - j).
fn lagrange(c: &Ctx, nodes: &[usize], k: usize, x: &Dual) -> Option<Dual> {
    let mut acc = Dual::int(1);
    for &j in nodes {
        if j != k {
            acc = acc.mul(&x.sub(&c.lam[j]).div(&c.ll(k, j))?);
        }
    }
    Some(acc)
}

/// Builds LHS - RHS for a registered identity.
pub fn build_identity(case: &IdentityCase) -> Result<FormExpr> {
    let (n, m) = (case.n, case.m);
    if n < 2 || m < 1 {
        return Err(Error::BadParameters(format!("need N >= 2 and m >= 1, got N={n}, m={m}")));
    }
    if case.partition.n() != n || case.partition.m() != m {
        return Err(Error::BadParameters("partition does not match (N, m)".into()));
    }
    let lb = Labels { n, m, pt: case.partition.clone() };
    let ix = case.indices.as_slice();
    let id = case.id;
    let mut e = FormExpr::new(n, m);
    e.modulo_exact = id.modulo_exact();
    match id {
        IdentityId::Prop5 => {
            need(ix, 1, id)?;
            in_range(ix[0], 1, lb.total(), "p")?;
            prop5(&mut e, &lb, ix[0] - 1);
        }
        IdentityId::Rel1 | IdentityId::F11 | IdentityId::F12 | IdentityId::F13 => {
            need(ix, 2, id)?;
            in_range(ix[0], 1, n - 1, "r")?;
            in_range(ix[1], 1, m, "l")?;
            rel1_chain(&mut e, &lb, id, lb.i(ix[0], ix[1]));
        }
        IdentityId::Rel2 | IdentityId::F21 | IdentityId::F24 => {
            need(ix, 3, id)?;
            in_range(ix[0], 1, n - 1, "r")?;
            in_range(ix[1], 1, m, "l")?;
            in_range(ix[2], 1, m, "l2")?;
            if ix[1] == ix[2] {
                return Err(bad("l and l2 must differ"));
            }
            match id {
                IdentityId::Rel2 => rel2(&mut e, &lb, ix[0], ix[1], ix[2]),
                IdentityId::F21 => f21(&mut e, &lb, ix[0], ix[1], ix[2]),
                _ => f24(&mut e, &lb, ix[0], ix[1], ix[2]),
            }
        }
        IdentityId::Rel3 => {
            need(ix, 2, id)?;
            in_range(ix[0], 1, m, "l")?;
            in_range(ix[1], 1, m, "l2")?;
            if ix[0] == ix[1] {
                return Err(bad("l and l2 must differ"));
            }
            rel3(&mut e, &lb, ix[0], ix[1]);
        }
        IdentityId::F22 => {
            need(ix, 1, id)?;
            in_range(ix[0], 1, m - 1, "l")?;
            f21(&mut e, &lb, n - 1, ix[0], m);
        }
        IdentityId::F23 => {
            need(ix, 0, id)?;
            if m < 2 {
                return Err(bad("f23 needs m >= 2"));
            }
            f23(&mut e, &lb);
        }
        IdentityId::Rel4 | IdentityId::F43 | IdentityId::F41 => {
            need(ix, 2, id)?;
            in_range(ix[0], 1, n - 1, "r")?;
            in_range(ix[1], 1, m, "l")?;
            match id {
                IdentityId::Rel4 => rel4(&mut e, &lb, ix[0], ix[1], case.reading, case.b_offset),
                IdentityId::F43 => f43(&mut e, &lb, ix[0], ix[1]),
                _ => f41(&mut e, &lb, ix[0], ix[1]),
            }
        }
        IdentityId::F42 => {
            need(ix, 3, id)?;
            in_range(ix[0], 1, n - 1, "r")?;
            in_range(ix[1], 1, m, "l")?;
            in_range(ix[2], 1, m - 1, "k")?;
            f42(&mut e, &lb, ix[0], ix[1], ix[2]);
        }
        IdentityId::Rel5 => {
            need(ix, 2, id)?;
            in_range(ix[0], 1, n, "r")?;
            in_range(ix[1], 1, m, "l")?;
            if (ix[0], ix[1]) == (n, m) {
                return Err(bad("rel5 excludes (r, l) = (N, m)"));
            }
            rel5(&mut e, &lb, ix[0], ix[1]);
        }
        IdentityId::F30 => {
            need(ix, 0, id)?;
            f30(&mut e, &lb);
        }
        IdentityId::F32 => {
            need(ix, 1, id)?;
            let ell = lb.kset().len();
            in_range(ix[0], 1, ell, "j")?;
            f32_vandermonde(&mut e, &lb, ix[0]);
        }
        IdentityId::Lemma1Prod1 | IdentityId::Prop2Szego => {
            need(ix, 1, id)?;
            in_range(ix[0], 1, lb.total(), "p")?;
            if id == IdentityId::Lemma1Prod1 {
                lemma1_prod1(&mut e, &lb, ix[0] - 1);
            } else {
                prop2(&mut e, &lb, ix[0] - 1);
            }
        }
        IdentityId::Lemma1Prod2 => {
            need(ix, 1, id)?;
            in_range(ix[0], 1, n, "r")?;
            lemma1_prod2(&mut e, &lb, ix[0]);
        }
        IdentityId::Resth => {
            need(ix, 1, id)?;
            in_range(ix[0], 1, n - 1, "r")?;
            resth(&mut e, &lb, ix[0]);
        }
        IdentityId::Resth1 => {
            need(ix, 0, id)?;
            if m < 3 {
                return Err(bad("resth1 needs m >= 3 (the exponent m - 3 must be non-negative)"));
            }
            resth1(&mut e, &lb);
        }
        IdentityId::Resth2 => {
            need(ix, 3, id)?;
            in_range(ix[0], 1, n - 1, "r")?;
            let ibar = mask_set(ix[2], m, "ibar")?;
            if ix[0] == n - 1 && ibar.contains(&m) {
                return Err(bad("ibar may not contain m when r = N - 1"));
            }
            in_range(ix[1], 2, ibar.len() + 1, "t")?;
            resth2(&mut e, &lb, ix[0], ix[1], &ibar);
        }
        IdentityId::Resth2b => {
            need(ix, 4, id)?;
            in_range(ix[0], 1, n - 1, "r")?;
            let ibar = mask_set(ix[2], m, "ibar")?;
            if m < 2 {
                return Err(bad("resth2b needs m >= 2"));
            }
            let jset = mask_set(ix[3], m - 1, "j")?;
            if !ibar.contains(&ix[1]) {
                return Err(bad("l must lie in ibar"));
            }
            if ibar.len() > jset.len() {
                return Err(bad("resth2b needs |ibar| <= |J|"));
            }
            if ix[0] == n - 1 && ibar.iter().any(|s| *s == m || jset.contains(s)) {
                return Err(bad("ibar and J overlap for r = N - 1"));
            }
            resth2b(&mut e, &lb, ix[0], ix[1], &ibar, &jset);
        }
        IdentityId::QsumNeg => {
            need(ix, 0, id)?;
            let nn = n as i64;
            let mut s = Rational::from((nn * nn - 1, 24));
            for i in 0..nn {
                for j in i + 1..nn {
                    s += q_pair(i, j, n);
                }
            }
            e.push(konst(s), Basis::One);
        }
        IdentityId::QsumPos => {
            need(ix, 0, id)?;
            let nn = n as i64;
            let s = q_pair(0, 0, n) - Rational::from((nn * nn - 1, 12 * nn));
            e.push(konst(s), Basis::One);
        }
        IdentityId::DsRule => {
            need(ix, 1, id)?;
            in_range(ix[0], 1, lb.total(), "p")?;
            ds_rule(&mut e, &lb, ix[0] - 1);
        }
    }
    Ok(e)
}

fn mu(pt: &OrderedPartition, p: usize) -> Basis {
    Basis::Mu { partition: pt.clone(), p }
}

fn prop5(e: &mut FormExpr, lb: &Labels, p: usize) {
    let ell = e.ell();
    for j in 1..=ell {
        e.push(coef(move |c| c.lam[p].powi((ell - j) as i64)), Basis::Zeta { partition: lb.pt.clone(), j });
    }
    e.push(konst(Rational::from(-1)), mu(&lb.pt, p));
    e.push(konst(Rational::from(-(lb.n as i64))), Basis::Exact { p });
}

/// g^{(Lambda_r)}(lambda_p) = prod_{j not in Lambda_r} (lambda_p - lambda_j)
fn g_out(c: &Ctx, pt: &OrderedPartition, r: usize, p: usize) -> Dual {
    prod((0..c.lam.len()).filter(|&j| pt.block_of(j) != r).map(|j| c.ll(p, j)))
}

/// prod_{j in Lambda_r, j not in skip} (x - lambda_j)
fn g_in_at(c: &Ctx, pt: &OrderedPartition, r: usize, skip: &[usize], x: &Dual) -> Dual {
    prod(pt.block(r).iter().filter(|j| !skip.contains(j)).map(|&j| x.sub(&c.lam[j])))
}

fn rel1_chain(e: &mut FormExpr, lb: &Labels, id: IdentityId, p: usize) {
    let q = lb.top();
    let nn = lb.n as i64;
    let pt = lb.pt.clone();
    let r = pt.block_of(p);
    let swapped = pt.swapped(q, p);
    let inv_n = Rational::from((1, nn));
    let keep = Rational::from((nn - 1, nn));

    // terms of the three displayed right-hand sides
    let f11 = |e: &mut FormExpr, sign: i64| {
        let s = Rational::from(sign);
        let s2 = s.clone();
        e.push(coef(move |c| Some(Dual::int(-1).div(&c.ll(p, q))?.scale(&s))), mu(&pt, p));
        let pt2 = pt.clone();
        let inv = inv_n.clone();
        e.push(
            coef(move |c| {
                let g = g_out(c, &pt2, r, p).mul(&g_in_at(c, &pt2, r, &[p], &c.z));
                Some(g.div(&c.zl(p).mul(&c.zl(q)))?.scale(&inv).scale(&s2))
            }),
            Basis::DzOverS,
        );
    };
    let f12 = |e: &mut FormExpr, sign: i64| {
        let s = Rational::from(sign);
        let (s2, k2, inv) = (s.clone(), keep.clone(), inv_n.clone());
        e.push(coef(move |c| Some(Dual::int(1).div(&c.ll(q, p))?.scale(&k2).scale(&s))), mu(&pt, p));
        let pt2 = pt.clone();
        e.push(
            coef(move |c| {
                let g = g_out(c, &pt2, r, p).mul(&g_in_at(c, &pt2, r, &[p], &c.z));
                Some(g.div(&c.zl(q).mul(&c.ll(q, p)))?.scale(&inv).scale(&s2))
            }),
            Basis::DzOverS,
        );
    };
    let f13 = |e: &mut FormExpr, sign: i64| {
        let s = Rational::from(sign);
        let (s2, k2, inv) = (s.clone(), keep.clone(), inv_n.clone());
        e.push(coef(move |c| Some(Dual::int(1).div(&c.ll(q, p))?.scale(&k2).scale(&s))), mu(&pt, p));
        let pt2 = pt.clone();
        e.push(
            coef(move |c| {
                let mut ratio = Dual::int(1);
                for j in 0..c.lam.len() {
                    if pt2.block_of(j) != r && j != q {
                        ratio = ratio.mul(&c.ll(p, j).div(&c.ll(q, j))?);
                    }
                }
                Some(ratio.div(&c.ll(q, p))?.scale(&inv).scale(&s2).neg())
            }),
            mu(&swapped, q),
        );
    };
    match id {
        IdentityId::Rel1 | IdentityId::F11 => {
            e.push_term(Term { coef: one(), basis: mu(&lb.pt, p), d_lambda: Some(q) });
            if id == IdentityId::Rel1 {
                f13(e, -1);
            } else {
                f11(e, -1);
            }
        }
        IdentityId::F12 => {
            f11(e, 1);
            f12(e, -1);
        }
        _ => {
            f12(e, 1);
            f13(e, -1);
        }
    }
}

/// Coefficient of [-<Lambda|k> + <i^{N-1}_m|k>] in rel2.
fn rel2_weight(c: &Ctx, lb: &Labels, r: usize, l: usize, l2: usize, k: usize) -> Option<Dual> {
    let (t, cm, xk) = (lb.top(), lb.i(lb.n - 1, lb.m), lb.i(lb.n - 1, k));
    let a = lb.i(r, l);
    let lead = c.ll(t, lb.i(r, l2)).div(&c.ll(t, cm))?;
    let outside = prod(
        (0..lb.total())
            .filter(|&j| lb.pt.block_of(j) != r && j != t)
            .map(|j| c.ll(a, j)),
    );
    let inner = prod((1..=lb.m).filter(|&s| s != l && s != l2).map(|s| c.ll(xk, lb.i(r, s))));
    let den = prod((0..lb.total()).filter(|&j| j != t && j != cm && j != xk).map(|j| c.ll(xk, j)));
    lead.mul(&outside).mul(&inner).div(&den)
}

fn rel2(e: &mut FormExpr, lb: &Labels, r: usize, l: usize, l2: usize) {
    let (t, cm) = (lb.top(), lb.i(lb.n - 1, lb.m));
    let a = lb.i(r, l);
    let sw = lb.pt.swapped(t, lb.i(r, l2));
    let swm = lb.pt.swapped(t, cm);
    e.push(one(), mu(&sw, a));
    e.push(konst(Rational::from(-1)), mu(&lb.pt, a));
    for k in 1..lb.m {
        let xk = lb.i(lb.n - 1, k);
        let lbc = lb.clone();
        let w: Coef = coef(move |c| rel2_weight(c, &lbc, r, l, l2, k));
        e.push(w.clone(), mu(&lb.pt, xk));
        e.push_neg(w, mu(&swm, xk));
    }
}

fn rel3(e: &mut FormExpr, lb: &Labels, l: usize, l2: usize) {
    let n = lb.n;
    let (t, cm) = (lb.top(), lb.i(n - 1, lb.m));
    let (a, b) = (lb.i(n - 1, l), lb.i(n - 1, l2));
    let swb = lb.pt.swapped(t, b);
    let swm = lb.pt.swapped(t, cm);
    e.push(one(), mu(&swb, a));
    e.push_neg(
        coef(move |c| c.ll(cm, b).mul(&c.ll(t, a)).div(&c.ll(a, b).mul(&c.ll(t, cm)))),
        mu(&lb.pt, a),
    );
    e.push_neg(
        coef(move |c| c.ll(a, cm).mul(&c.ll(t, b)).div(&c.ll(a, b).mul(&c.ll(t, cm)))),
        mu(&swm, a),
    );
    let pt = lb.pt.clone();
    let w: Coef = coef(move |c| {
        let lead = c.ll(b, cm).mul(&c.ll(t, b)).div(&c.ll(b, a).mul(&c.ll(t, cm)))?;
        let mut ratio = Dual::int(1);
        for j in 0..c.lam.len() {
            if pt.block_of(j) != n - 1 && j != t {
                ratio = ratio.mul(&c.ll(a, j).div(&c.ll(b, j))?);
            }
        }
        Some(lead.mul(&ratio))
    });
    // RHS carries w [-<Lambda|b> + <cm|b>]
    e.push(w.clone(), mu(&lb.pt, b));
    e.push_neg(w, mu(&swm, b));
}

/// A_r = prod_s (i^N_m - i^r_s) / prod_{s<m} (i^N_m - i^N_s)
fn a_r(c: &Ctx, lb: &Labels, r: usize, sub: &dyn Fn(usize) -> usize) -> Option<Dual> {
    let t = lb.top();
    let num = prod((1..=lb.m).map(|s| c.ll(t, sub(lb.i(r, s)))));
    let den = prod((1..lb.m).map(|s| c.ll(t, lb.i(lb.n, s))));
    num.div(&den)
}

fn b_rlk(c: &Ctx, lb: &Labels, r: usize, l: usize, k: usize, reading: Rel4Reading, offset: i64) -> Option<Dual> {
    let (n, m, t) = (lb.n, lb.m, lb.top());
    let last = lb.i(r, m);
    let sub = |x: usize| -> usize {
        if reading == Rel4Reading::Shifted && r == n - 1 && x == last && m >= 2 {
            lb.i(r, m - 1)
        } else {
            x
        }
    };
    let xk = lb.i(n - 1, k);
    let ar = a_r(c, lb, r, &sub)?;
    let num = prod((1..=m).filter(|&s| s != l).map(|s| c.ll(xk, sub(lb.i(r, s)))));
    let den = prod((1..m).map(|s| c.ll(xk, lb.i(n, s))));
    let frac = c.ll(t, sub(lb.i(r, l))).div(&ar)?.mul(&num).div(&den)?;
    Some(Dual::int(1 + offset).sub(&frac))
}

/// The same quantity written as in the derivation of rel4.
fn b_f43(c: &Ctx, lb: &Labels, r: usize, l: usize, k: usize) -> Option<Dual> {
    let (n, m, t) = (lb.n, lb.m, lb.top());
    let xk = lb.i(n - 1, k);
    let mut p = Dual::int(1);
    for s in 1..m {
        p = p.mul(&c.ll(t, lb.i(n, s)).div(&c.ll(xk, lb.i(n, s)))?);
    }
    for s in (1..=m).filter(|&s| s != l) {
        p = p.mul(&c.ll(xk, lb.i(r, s)).div(&c.ll(t, lb.i(r, s)))?);
    }
    Some(Dual::int(1).sub(&p))
}

fn interp_sum(e: &mut FormExpr, lb: &Labels, sign: i64) {
    let t = lb.top();
    let nodes = lb.kset();
    for &k in &nodes {
        let nd = nodes.clone();
        e.push(
            coef(move |c| Some(lagrange(c, &nd, k, &c.lam[t])?.scale(&Rational::from(sign)))),
            mu(&lb.pt, k),
        );
    }
}

fn rel4(e: &mut FormExpr, lb: &Labels, r: usize, l: usize, reading: Rel4Reading, offset: i64) {
    let (n, t, cm) = (lb.n, lb.top(), lb.i(lb.n - 1, lb.m));
    let sw = lb.pt.swapped(t, lb.i(r, l));
    let swm = lb.pt.swapped(t, cm);
    e.push(one(), mu(&sw, t));
    interp_sum(e, lb, -1);
    let nodes = lb.kset();
    for k in 1..lb.m {
        let xk = lb.i(n - 1, k);
        let (nd, lbc) = (nodes.clone(), lb.clone());
        let w: Coef = coef(move |c| {
            Some(lagrange(c, &nd, xk, &c.lam[t])?.mul(&b_rlk(c, &lbc, r, l, k, reading, offset)?))
        });
        e.push(w.clone(), mu(&lb.pt, xk));
        e.push_neg(w, mu(&swm, xk));
    }
}

fn f43(e: &mut FormExpr, lb: &Labels, r: usize, l: usize) {
    let (n, t, cm) = (lb.n, lb.top(), lb.i(lb.n - 1, lb.m));
    let sw = lb.pt.swapped(t, lb.i(r, l));
    let swm = lb.pt.swapped(t, cm);
    e.push(one(), mu(&lb.pt, t));
    e.push(konst(Rational::from(-1)), mu(&sw, t));
    let nodes = lb.kset();
    for k in 1..lb.m {
        let xk = lb.i(n - 1, k);
        let (nd, lbc) = (nodes.clone(), lb.clone());
        let w: Coef = coef(move |c| Some(lagrange(c, &nd, xk, &c.lam[t])?.mul(&b_f43(c, &lbc, r, l, k)?)));
        e.push_neg(w.clone(), mu(&lb.pt, xk));
        e.push(w, mu(&swm, xk));
    }
}

fn f41(e: &mut FormExpr, lb: &Labels, r: usize, l: usize) {
    let (n, t) = (lb.n, lb.top());
    let a = lb.i(r, l);
    let sw = lb.pt.swapped(t, a);
    e.push(one(), mu(&lb.pt, t));
    e.push(konst(Rational::from(-1)), mu(&sw, t));
    let pt = lb.pt.clone();
    e.push_neg(
        coef(move |c| {
            let tv = c.lam[t].clone();
            let gn = g_out(c, &pt, n, t);
            let ratio = g_in_at(c, &pt, n, &[t], &tv).div(&g_in_at(c, &pt, r, &[a], &tv))?;
            let bracket = g_in_at(c, &pt, n, &[t], &c.z).sub(&ratio.mul(&g_in_at(c, &pt, r, &[a], &c.z)));
            gn.mul(&bracket).div(&c.zl(t))
        }),
        Basis::DzOverS,
    );
}

fn f42(e: &mut FormExpr, lb: &Labels, r: usize, l: usize, k: usize) {
    let (n, m, t) = (lb.n, lb.m, lb.top());
    let a = lb.i(r, l);
    let xk = lb.i(n - 1, k);
    let (pt, lbc) = (lb.pt.clone(), lb.clone());
    e.push(
        coef(move |c| {
            let tv = c.lam[t].clone();
            let x = c.lam[xk].clone();
            let ratio = g_in_at(c, &pt, n, &[t], &tv).div(&g_in_at(c, &pt, r, &[a], &tv))?;
            let bracket = g_in_at(c, &pt, n, &[t], &x).sub(&ratio.mul(&g_in_at(c, &pt, r, &[a], &x)));
            bracket.div(&c.ll(xk, t))
        }),
        Basis::One,
    );
    e.push_neg(
        coef(move |c| {
            let lead = prod((1..m).map(|s| c.ll(xk, lbc.i(n, s)))).div(&c.ll(xk, t))?;
            Some(lead.mul(&b_f43(c, &lbc, r, l, k)?))
        }),
        Basis::One,
    );
}

fn f21(e: &mut FormExpr, lb: &Labels, r: usize, l: usize, l2: usize) {
    let t = lb.top();
    let (a, b) = (lb.i(r, l), lb.i(r, l2));
    let sw = lb.pt.swapped(t, b);
    let pt = lb.pt.clone();
    e.push(coef(move |c| Some(g_in_at(c, &pt, r, &[a, b], &c.z))), Basis::DzOverS);
    let pt = lb.pt.clone();
    let w: Coef = coef(move |c| c.ll(t, a).div(&c.ll(t, b).mul(&g_out(c, &pt, r, a))));
    e.push_neg(w.clone(), mu(&lb.pt, a));
    e.push(w, mu(&sw, a));
}

/// sum_k F(x_k) / prod_{s != k} (x_k - x_s) g^{(x_k x_m)}_{Lambda_{N-1}}(z)
fn interp_in_block(c: &Ctx, lb: &Labels, fval: &dyn Fn(&Dual) -> Dual) -> Option<Dual> {
    let n = lb.n;
    let cm = lb.i(n - 1, lb.m);
    try_sum((1..lb.m).map(|k| {
        let xk = lb.i(n - 1, k);
        let den = prod((1..lb.m).filter(|&s| s != k).map(|s| c.ll(xk, lb.i(n - 1, s))));
        let g = g_in_at(c, &lb.pt, n - 1, &[xk, cm], &c.z);
        Some(fval(&c.lam[xk]).div(&den)?.mul(&g))
    }))
}

fn f23(e: &mut FormExpr, lb: &Labels) {
    let (n, m) = (lb.n, lb.m);
    // a generic polynomial of degree m - 2 with coefficients in the lambdas
    let lbc = lb.clone();
    let f = move |c: &Ctx, x: &Dual| -> Dual {
        let roots = prod((1..m - 1).map(|s| x.sub(&c.lam[lbc.i(1, s)])));
        roots.add(&c.lam[lbc.i(n, 1)])
    };
    let lbc = lb.clone();
    e.push(
        coef(move |c| {
            let lhs = f(c, &c.z);
            Some(lhs.sub(&interp_in_block(c, &lbc, &|x| f(c, x))?))
        }),
        Basis::One,
    );
}

fn f24(e: &mut FormExpr, lb: &Labels, r: usize, l: usize, l2: usize) {
    let (a, b) = (lb.i(r, l), lb.i(r, l2));
    let lbc = lb.clone();
    e.push(
        coef(move |c| {
            let lhs = g_in_at(c, &lbc.pt, r, &[a, b], &c.z);
            let rhs = interp_in_block(c, &lbc, &|x| g_in_at(c, &lbc.pt, r, &[a, b], x))?;
            Some(lhs.sub(&rhs))
        }),
        Basis::DzOverS,
    );
}

fn rel5(e: &mut FormExpr, lb: &Labels, r: usize, l: usize) {
    let t = lb.top();
    let a = lb.i(r, l);
    let sw = lb.pt.swapped(t, a);
    let nodes = lb.kset();
    e.push(one(), mu(&sw, a));
    for &k in nodes.iter().filter(|&&k| k != a) {
        let nd = nodes.clone();
        e.push_neg(
            coef(move |c| {
                let mut w = c.ll(t, a).div(&c.ll(t, k))?;
                for &j in nd.iter().filter(|&&j| j != k && j != a) {
                    w = w.mul(&c.ll(a, j).div(&c.ll(k, j))?);
                }
                Some(w)
            }),
            mu(&sw, k),
        );
    }
    let nd = nodes.clone();
    e.push_neg(
        coef(move |c| {
            let mut w = Dual::int(1);
            for &j in nd.iter().filter(|&&j| j != a) {
                w = w.mul(&c.ll(a, j).div(&c.ll(t, j))?);
            }
            Some(w)
        }),
        mu(&sw, t),
    );
}

fn f30(e: &mut FormExpr, lb: &Labels) {
    e.push(one(), mu(&lb.pt, lb.top()));
    interp_sum(e, lb, -1);
}

/// Solves a y = v exactly; None when singular.
fn solve_exact(mut a: Vec<Vec<Dual>>, mut v: Vec<Dual>) -> Option<Vec<Dual>> {
    let n = v.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].v.cmp0().is_eq())?;
        a.swap(col, piv);
        v.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col].div(&a[col][col])?;
            for k in col..n {
                let d = f.mul(&a[col][k]);
                a[r][k] = a[r][k].sub(&d);
            }
            let d = f.mul(&v[col]);
            v[r] = v[r].sub(&d);
        }
    }
    let mut y = vec![Dual::int(0); n];
    for r in (0..n).rev() {
        let mut acc = v[r].clone();
        for k in r + 1..n {
            acc = acc.sub(&a[r][k].mul(&y[k]));
        }
        y[r] = acc.div(&a[r][r])?;
    }
    Some(y)
}

fn f32_vandermonde(e: &mut FormExpr, lb: &Labels, j: usize) {
    let t = lb.top();
    let nodes = lb.kset();
    e.push(
        coef(move |c| {
            let ell = nodes.len();
            let a: Vec<Vec<Dual>> = (0..ell)
                .map(|k| nodes.iter().map(|&i| c.lam[i].powi(k as i64)).collect::<Option<Vec<_>>>())
                .collect::<Option<Vec<_>>>()?;
            let v: Vec<Dual> = (0..ell).map(|k| c.lam[t].powi(k as i64)).collect::<Option<Vec<_>>>()?;
            let y = solve_exact(a, v)?;
            Some(y[j - 1].sub(&lagrange(c, &nodes, nodes[j - 1], &c.lam[t])?))
        }),
        Basis::One,
    );
}

fn half_shift(n: usize) -> Rational {
    Rational::from((-(n as i64 - 1), 2))
}

/// q_{-(N-1)/2 + a}(i)
fn q_at(n: usize, a: i64, i: i64) -> Rational {
    spin_exponent(&(half_shift(n) + a), i, n)
}

/// Exponents of f_{-(N-1)/2+r}(., Lambda^-) f_{-(N-1)/2+N-r}(., Lambda) in the
/// variable lambda_j (block k_j), summed from the spin exponents.
fn prod1_exps(lb: &Labels, p: usize) -> Vec<Rational> {
    let n = lb.n as i64;
    let r = lb.pt.block_of(p) as i64 % n;
    lb.pt
        .ks()
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            if j == p {
                return Rational::new();
            }
            let k = k as i64;
            q_at(lb.n, r, n - k) + q_at(lb.n, n - r, k)
        })
        .collect()
}

/// Exponents of f_{-(N-1)/2+r^-}(x, Lambda) f_{-(N-1)/2+r-1}(x, Lambda^-).
fn prod2_exps(lb: &Labels, r: i64) -> Vec<Rational> {
    let n = lb.n as i64;
    let rm = n - 1 - r;
    lb.pt
        .ks()
        .iter()
        .map(|&k| {
            let k = k as i64;
            q_at(lb.n, rm, k) + q_at(lb.n, r - 1, n - k)
        })
        .collect()
}

fn lemma1_prod1(e: &mut FormExpr, lb: &Labels, p: usize) {
    let n = lb.n as i64;
    let r = lb.pt.block_of(p);
    // N f'(lambda_p)^{1/N} / g^{(p)}_{Lambda_r}(lambda_p)
    let rhs: Vec<Rational> = (0..lb.total())
        .map(|j| {
            if j == p {
                Rational::new()
            } else if lb.pt.block_of(j) == r {
                Rational::from((1 - n, n))
            } else {
                Rational::from((1, n))
            }
        })
        .collect();
    let zeros = vec![Rational::new(); lb.total()];
    // sqrt(N) sqrt(N) from the two local expansions
    e.push(konst(Rational::from(n)), Basis::Power { z_exps: zeros.clone(), at: Some((p, prod1_exps(lb, p))) });
    e.push(konst(Rational::from(-n)), Basis::Power { z_exps: zeros, at: Some((p, rhs)) });
}

fn lemma1_prod2(e: &mut FormExpr, lb: &Labels, r: usize) {
    let n = lb.n as i64;
    let rr = r as i64 % n;
    let lhs = prod2_exps(lb, rr);
    // g_{Lambda_r}(z) / s
    let rhs: Vec<Rational> = lb
        .pt
        .ks()
        .iter()
        .map(|&k| if k as i64 % n == rr { Rational::from((n - 1, n)) } else { Rational::from((-1, n)) })
        .collect();
    e.push(one(), Basis::Power { z_exps: lhs, at: None });
    e.push(konst(Rational::from(-1)), Basis::Power { z_exps: rhs, at: None });
}

fn prop2(e: &mut FormExpr, lb: &Labels, p: usize) {
    let n = lb.n as i64;
    let r = lb.pt.block_of(p) as i64 % n;
    let z_exps = prod2_exps(lb, r);
    // N f'(lambda_p)^{(N-1)/N} times the local factor of prod1
    let at: Vec<Rational> = prod1_exps(lb, p)
        .into_iter()
        .enumerate()
        .map(|(j, g)| if j == p { g } else { g + Rational::from((n - 1, n)) })
        .collect();
    // N * N / (N^2 (z - lambda_p)^2)
    e.push(coef(move |c| Dual::int(1).div(&c.zl(p).mul(&c.zl(p)))), Basis::Power { z_exps, at: Some((p, at)) });
    e.push(konst(Rational::from(-1)), mu(&lb.pt, p));
}

fn resth(e: &mut FormExpr, lb: &Labels, r: usize) {
    let lbc = lb.clone();
    e.push(
        coef(move |c| {
            let (n, m, t) = (lbc.n, lbc.m, lbc.top());
            let top = prod((1..m).map(|s| c.ll(t, lbc.i(n, s))));
            let lhs = try_sum((1..=m).map(|l| {
                let x = lbc.i(r, l);
                let den = c.ll(t, x).mul(&prod((1..=m).filter(|&s| s != l).map(|s| c.ll(x, lbc.i(r, s)))));
                top.div(&den)
            }))?;
            Some(lhs.sub(&a_r(c, &lbc, r, &|x| x)?.inv()?))
        }),
        Basis::One,
    );
}

fn resth1(e: &mut FormExpr, lb: &Labels) {
    let lbc = lb.clone();
    e.push(
        coef(move |c| {
            let (n, m, t) = (lbc.n, lbc.m, lbc.top());
            let x = |s: usize| lbc.i(n - 1, s);
            let pw = (m - 3) as i64;
            let lhs = try_sum((1..m).map(|l| {
                let den = c.ll(t, x(l)).mul(&prod((1..m).filter(|&s| s != l).map(|s| c.ll(x(l), x(s)))));
                c.ll(x(l), x(m)).powi(pw)?.div(&den)
            }))?;
            let rhs = c.ll(t, x(m)).powi(pw)?.div(&prod((1..m).map(|s| c.ll(t, x(s)))))?;
            Some(lhs.sub(&rhs))
        }),
        Basis::One,
    );
}

fn resth2(e: &mut FormExpr, lb: &Labels, r: usize, tpow: usize, ibar: &[usize]) {
    let (lbc, ib) = (lb.clone(), ibar.to_vec());
    e.push(
        coef(move |c| {
            let (n, m, t) = (lbc.n, lbc.m, lbc.top());
            let cm = lbc.i(n - 1, m);
            let pw = tpow as i64 - 2;
            let x = |s: usize| lbc.i(r, s);
            let lhs = try_sum(ib.iter().map(|&l| {
                let den = c.ll(x(l), cm).mul(&prod(ib.iter().filter(|&&s| s != l).map(|&s| c.ll(x(l), x(s)))));
                c.ll(t, x(l)).powi(pw)?.div(&den)
            }))?;
            let rhs = c.ll(t, cm).powi(pw)?.div(&prod(ib.iter().map(|&s| c.ll(cm, x(s)))))?.neg();
            Some(lhs.sub(&rhs))
        }),
        Basis::One,
    );
}

fn resth2b(e: &mut FormExpr, lb: &Labels, r: usize, l: usize, ibar: &[usize], jset: &[usize]) {
    let (lbc, ib, js) = (lb.clone(), ibar.to_vec(), jset.to_vec());
    e.push(
        coef(move |c| {
            let (n, t) = (lbc.n, lbc.top());
            let x = |s: usize| lbc.i(r, s);
            let y = |s: usize| lbc.i(n - 1, s);
            let rest: Vec<usize> = ib.iter().copied().filter(|&s| s != l).collect();
            let lhs = try_sum(js.iter().map(|&k| {
                let num = prod(rest.iter().map(|&s| c.ll(x(s), y(k))));
                let den = c.ll(t, y(k)).mul(&prod(js.iter().filter(|&&s| s != k).map(|&s| c.ll(y(k), y(s)))));
                num.div(&den)
            }))?;
            let rhs = prod(rest.iter().map(|&s| c.ll(x(s), t))).div(&prod(js.iter().map(|&s| c.ll(t, y(s)))))?;
            Some(lhs.sub(&rhs))
        }),
        Basis::One,
    );
}

/// d(s^N)/d lambda_p = -s^N/(z - lambda_p) and d s/d lambda_p = -s/(N(z - lambda_p)).
fn ds_rule(e: &mut FormExpr, lb: &Labels, p: usize) {
    let n = lb.n as i64;
    let total = lb.total();
    let sn = vec![Rational::from(1); total];
    let s1 = vec![Rational::from((1, n)); total];
    for (exps, scale) in [(sn, Rational::from(1)), (s1, Rational::from((1, n)))] {
        e.push_term(Term { coef: one(), basis: Basis::Power { z_exps: exps.clone(), at: None }, d_lambda: Some(p) });
        e.push(coef(move |c| Some(Dual::int(1).div(&c.zl(p))?.scale(&scale))), Basis::Power { z_exps: exps, at: None });
    }
}

// ------------------------------------------------------------------ drivers

/// Every admissible index tuple for (N, m).
pub fn admissible_indices(id: IdentityId, n: usize, m: usize) -> Vec<Vec<usize>> {
    let total = n * m;
    let mut out = Vec::new();
    let pairs = |rmax: usize| -> Vec<Vec<usize>> {
        (1..=rmax).flat_map(|r| (1..=m).map(move |l| vec![r, l])).collect()
    };
    match id {
        IdentityId::Rel1 | IdentityId::Rel4 | IdentityId::F11 | IdentityId::F12 | IdentityId::F13 => {
            out = pairs(n - 1)
        }
        IdentityId::F41 | IdentityId::F43 => out = pairs(n - 1),
        IdentityId::Rel5 => out = pairs(n).into_iter().filter(|v| (v[0], v[1]) != (n, m)).collect(),
        IdentityId::Rel2 | IdentityId::F21 | IdentityId::F24 => {
            for r in 1..n {
                for l in 1..=m {
                    for l2 in (1..=m).filter(|&x| x != l) {
                        out.push(vec![r, l, l2]);
                    }
                }
            }
        }
        IdentityId::Rel3 => {
            for l in 1..=m {
                for l2 in (1..=m).filter(|&x| x != l) {
                    out.push(vec![l, l2]);
                }
            }
        }
        IdentityId::F22 => out = (1..m).map(|l| vec![l]).collect(),
        IdentityId::F42 => {
            for v in pairs(n - 1) {
                for k in 1..m {
                    out.push(vec![v[0], v[1], k]);
                }
            }
        }
        IdentityId::Prop5 | IdentityId::Lemma1Prod1 | IdentityId::Prop2Szego | IdentityId::DsRule => {
            out = (1..=total).map(|p| vec![p]).collect()
        }
        IdentityId::Lemma1Prod2 => out = (1..=n).map(|r| vec![r]).collect(),
        IdentityId::Resth => out = (1..n).map(|r| vec![r]).collect(),
        IdentityId::F32 => out = (1..=(n - 1) * m - 1).map(|j| vec![j]).collect(),
        IdentityId::Resth1 => {
            if m >= 3 {
                out.push(vec![])
            }
        }
        IdentityId::F23 => {
            if m >= 2 {
                out.push(vec![])
            }
        }
        IdentityId::F30 | IdentityId::QsumNeg | IdentityId::QsumPos => out.push(vec![]),
        IdentityId::Resth2 => {
            for r in 1..n {
                for mask in 1..(1usize << m) {
                    if r == n - 1 && mask >> (m - 1) & 1 == 1 {
                        continue;
                    }
                    let size = mask.count_ones() as usize;
                    for t in 2..=size + 1 {
                        out.push(vec![r, t, mask]);
                    }
                }
            }
        }
        IdentityId::Resth2b => {
            if m >= 2 {
                for r in 1..n {
                    for im in 1..(1usize << m) {
                        for jm in 1..(1usize << (m - 1)) {
                            if im.count_ones() > jm.count_ones() {
                                continue;
                            }
                            if r == n - 1 && (im >> (m - 1) & 1 == 1 || im & jm != 0) {
                                continue;
                            }
                            for l in (1..=m).filter(|l| im >> (l - 1) & 1 == 1) {
                                out.push(vec![r, l, im, jm]);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseResult {
    pub id: IdentityId,
    pub n: usize,
    pub m: usize,
    pub partition: Vec<Vec<usize>>,
    pub indices: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reading: Option<Rel4Reading>,
    pub pass: bool,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

pub fn run_case(case: &IdentityCase) -> Result<CaseResult> {
    let expr = build_identity(case)?;
    let verdict = test_identity(&expr, case.trials, case.seed)?;
    let witness = match verdict {
        Verdict::Pass => None,
        Verdict::Fail(w) => Some(w),
    };
    Ok(CaseResult {
        id: case.id,
        n: case.n,
        m: case.m,
        partition: case.partition.one_based(),
        indices: case.indices.clone(),
        reading: (case.id == IdentityId::Rel4).then_some(case.reading),
        pass: witness.is_none(),
        trials: case.trials,
        witness,
    })
}

/// Runs `id` over all admissible indices on the given partition.
pub fn run_all_indices(
    id: IdentityId,
    pt: &OrderedPartition,
    trials: usize,
    seed: u64,
) -> Result<Vec<CaseResult>> {
    let (n, m) = (pt.n(), pt.m());
    let readings: &[Rel4Reading] = if id == IdentityId::Rel4 {
        &[Rel4Reading::Literal, Rel4Reading::Shifted]
    } else {
        &[Rel4Reading::Literal]
    };
    let mut out = Vec::new();
    for ix in admissible_indices(id, n, m) {
        for &reading in readings {
            let mut case = IdentityCase::new(id, n, m, ix.clone()).with_partition(pt.clone()).with_trials(trials, seed);
            case.reading = reading;
            out.push(run_case(&case)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub results: Vec<CaseResult>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    /// One line per identity id: id, cases, passes.
    pub fn table(&self) -> String {
        let mut rows: BTreeMap<IdentityId, (usize, usize)> = BTreeMap::new();
        for r in &self.results {
            let e = rows.entry(r.id).or_default();
            e.0 += 1;
            e.1 += r.pass as usize;
        }
        let mut s = String::new();
        for (id, (cases, ok)) in rows {
            let mark = if cases == ok { "pass" } else { "FAIL" };
            s.push_str(&format!("{:<14} {:>4} cases {:>4} pass  {mark}\n", id.as_str(), cases, ok));
        }
        s
    }
}

/// Derivation steps behind rel1-rel5 on the standard partition.
pub fn verify_appendix_suite(n: usize, m: usize, trials: usize, seed: u64) -> Result<SuiteReport> {
    if !(2..=4).contains(&n) || !(1..=3).contains(&m) {
        return Err(Error::BadParameters(format!("appendix suite needs N in 2..=4 and m in 1..=3, got ({n}, {m})")));
    }
    let pt = OrderedPartition::standard(n, m);
    let mut results = Vec::new();
    for id in IdentityId::APPENDIX {
        results.extend(run_all_indices(id, &pt, trials, seed)?);
    }
    Ok(SuiteReport { n, m, trials, seed, results })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_arithmetic() {
        let x = Dual::var(Rational::from(3));
        let y = x.mul(&x).div(&x.sub(&Dual::int(1))).unwrap();
        // d/dx x^2/(x-1) = (x^2 - 2x)/(x-1)^2 = 3/4 at 3
        assert_eq!(y.v, Rational::from((9, 2)));
        assert_eq!(y.t, Rational::from((3, 4)));
        assert!(Dual::int(0).inv().is_none());
        assert_eq!(x.powi(-2).unwrap().t, Rational::from((-2, 27)));
    }

    #[test]
    fn split_exponents() {
        assert_eq!(split_exp(&Rational::from((1, 3))), (1, Rational::from((-2, 3))));
        assert_eq!(split_exp(&Rational::from((-1, 3))), (0, Rational::from((-1, 3))));
        assert_eq!(split_exp(&Rational::from(2)), (2, Rational::new()));
    }

    #[test]
    fn ids_round_trip() {
        for id in IdentityId::ALL {
            assert_eq!(id.as_str().parse::<IdentityId>().unwrap(), id);
        }
        assert!("nope".parse::<IdentityId>().is_err());
    }
}
