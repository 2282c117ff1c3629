//! Gauss-Legendre panel quadrature along segments and circular arcs with
//! the cover's logarithms carried to every node.
//!
//! Panels are accepted when every singularity of the integrand, mapped into
//! the panel's parameter plane, lies outside the Bernstein ellipse that the
//! rule order needs at the working precision; otherwise the panel is halved.
//! Each path keeps two node sets: the accepted panels and the same panels
//! halved once. Their difference is the error estimate.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rug::{Complex, Float};

use crate::curve::{self, CurveSpec, SheetPoint};
use crate::differentials::{Kernel, NodeCache};
use crate::error::{Error, Result};
use crate::mp::{self, Prec};

#[derive(Debug)]
pub struct GlRule {
    pub nodes: Vec<Float>,
    pub weights: Vec<Float>,
}

/// Rule order used at a given precision.
pub fn gl_order(prec: Prec) -> usize {
    if prec <= 160 {
        32
    } else {
        ((prec as usize / 4) + 7) / 8 * 8
    }
}

fn legendre(n: usize, x: &Float) -> (Float, Float) {
    let prec = x.prec();
    let mut p0 = Float::with_val(prec, 1);
    let mut p1 = x.clone();
    for k in 2..=n {
        let kf = k as u32;
        let mut t = Float::with_val(prec, x * &p1);
        t *= 2 * kf - 1;
        let mut u = p0.clone();
        u *= kf - 1;
        t -= u;
        t /= kf;
        p0 = p1;
        p1 = t;
    }
    // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
    let mut d = Float::with_val(prec, x * &p1);
    d -= &p0;
    d *= n as u32;
    let den = Float::with_val(prec, x * x) - 1u32;
    d /= den;
    (p1, d)
}

fn compute_rule(n: usize, prec: Prec) -> GlRule {
    let work = prec + 32;
    let mut nodes = vec![Float::new(prec); n];
    let mut weights = vec![Float::new(prec); n];
    let tol = Float::with_val(work, Float::i_exp(1, -(work as i32) + 8));
    for i in 0..n.div_ceil(2) {
        let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut x = Float::with_val(work, guess);
        for _ in 0..200 {
            let (p, d) = legendre(n, &x);
            let step = Float::with_val(work, &p / &d);
            x -= &step;
            if step.abs() < tol {
                break;
            }
        }
        let (_, d) = legendre(n, &x);
        let one_minus = Float::with_val(work, 1u32) - Float::with_val(work, &x * &x);
        let w = Float::with_val(work, 2u32) / (one_minus * Float::with_val(work, &d * &d));
        nodes[i] = Float::with_val(prec, -&x);
        weights[i] = Float::with_val(prec, &w);
        nodes[n - 1 - i] = Float::with_val(prec, &x);
        weights[n - 1 - i] = Float::with_val(prec, &w);
    }
    GlRule { nodes, weights }
}

/// Cached Gauss-Legendre rule on [-1, 1].
pub fn gl_rule(n: usize, prec: Prec) -> Arc<GlRule> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, Prec), Arc<GlRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&(n, prec)) {
        return r.clone();
    }
    let r = Arc::new(compute_rule(n, prec));
    cache.lock().unwrap().insert((n, prec), r.clone());
    r
}

/// Bernstein ellipse parameter of `s` relative to the interval [a, b].
pub fn ellipse_rho(a: f64, b: f64, s: Complex64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let u = (s - c) / h;
    let r = (u * u - 1.0).sqrt();
    (u + r).norm().max((u - r).norm())
}

/// Split [a, b] into panels whose ellipse parameter clears `rho_req` for
/// every singularity.
pub fn split_interval(a: f64, b: f64, sings: &[Complex64], rho_req: f64) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut stack = vec![(a, b, 0u32)];
    while let Some((x, y, depth)) = stack.pop() {
        let ok = sings.iter().all(|&s| ellipse_rho(x, y, s) >= rho_req);
        if ok {
            out.push((x, y));
        } else {
            if depth > 60 {
                return Err(Error::PoleOnPath);
            }
            let mid = 0.5 * (x + y);
            stack.push((mid, y, depth + 1));
            stack.push((x, mid, depth + 1));
        }
    }
    Ok(out)
}

/// A parametrized path piece t in [t0, t1].
#[derive(Clone, Debug)]
pub enum Piece {
    /// z = a + (b - a) t, t in [0, 1]
    Segment { a: Complex, b: Complex },
    /// z = lambda_c + r e^{i theta}, theta in [theta0, theta1]
    Arc { center: usize, radius: Float, theta0: Float, theta1: Float },
    /// z = lambda_p + (a - lambda_p) u^N, u from 1 down to 0 (ends at Q_p)
    RootSegment { p: usize, a: Complex },
}

impl Piece {
    pub fn start(&self, spec: &CurveSpec) -> Complex {
        let prec = spec.prec();
        match self {
            Piece::Segment { a, .. } | Piece::RootSegment { a, .. } => a.clone(),
            Piece::Arc { center, radius, theta0, .. } => {
                let e = Complex::with_val(prec, (Float::new(prec), theta0)).exp();
                Complex::with_val(prec, spec.lambda(*center) + e * radius)
            }
        }
    }

    pub fn end(&self, spec: &CurveSpec) -> Complex {
        let prec = spec.prec();
        match self {
            Piece::Segment { b, .. } => b.clone(),
            Piece::RootSegment { p, .. } => spec.lambda(*p).clone(),
            Piece::Arc { center, radius, theta1, .. } => {
                let e = Complex::with_val(prec, (Float::new(prec), theta1)).exp();
                Complex::with_val(prec, spec.lambda(*center) + e * radius)
            }
        }
    }

    /// Continue logs across the piece.
    pub fn continue_logs(&self, spec: &CurveSpec, start: &SheetPoint) -> Result<SheetPoint> {
        match self {
            Piece::Segment { b, .. } => curve::continue_segment(spec, start, b),
            Piece::Arc { center, radius, theta0, theta1 } => {
                curve::continue_arc(spec, start, *center, radius, theta0, theta1)
            }
            Piece::RootSegment { .. } => Err(Error::BadParameters("root segment ends at a branch point".into())),
        }
    }

    fn param_range(&self) -> (f64, f64) {
        match self {
            Piece::Segment { .. } => (0.0, 1.0),
            Piece::Arc { theta0, theta1, .. } => (theta0.to_f64(), theta1.to_f64()),
            Piece::RootSegment { .. } => (0.0, 1.0),
        }
    }

    /// Singularities of cover functions in the parameter plane.
    fn singularities(&self, spec: &CurveSpec) -> Vec<Complex64> {
        let lam: Vec<Complex64> = (0..spec.count()).map(|j| spec.lambda64(j)).collect();
        match self {
            Piece::Segment { a, b } => {
                let (a, b) = (curve::to64(a), curve::to64(b));
                lam.iter().map(|&l| (l - a) / (b - a)).collect()
            }
            Piece::Arc { center, radius, .. } => {
                let c = lam[*center];
                let r = radius.to_f64();
                let mut v = Vec::new();
                for (j, &l) in lam.iter().enumerate() {
                    if j == *center {
                        continue;
                    }
                    let w = (l - c) / r;
                    let th = Complex64::new(w.arg(), -w.norm().ln());
                    for k in -2..=3 {
                        v.push(th + 2.0 * std::f64::consts::PI * k as f64);
                    }
                }
                v
            }
            Piece::RootSegment { p, a } => {
                let n = spec.n();
                let lp = lam[*p];
                let a = curve::to64(a);
                let mut v = Vec::new();
                for (j, &l) in lam.iter().enumerate() {
                    if j == *p {
                        continue;
                    }
                    let w = (l - lp) / (a - lp);
                    let rt = w.powf(1.0 / n as f64);
                    for k in 0..n {
                        v.push(rt * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64));
                    }
                }
                v
            }
        }
    }

    /// Node data and weight (including dz/dt) at parameter t.
    fn node(&self, spec: &CurveSpec, start: &SheetPoint, t: &Float, keep_logs: bool) -> (NodeCache, Complex) {
        let prec = spec.prec();
        let n = spec.n();
        let (z, dzdt, logs) = match self {
            Piece::Segment { a, b } => {
                let d = Complex::with_val(prec, b - a);
                let z = Complex::with_val(prec, a + Complex::with_val(prec, &d * t));
                let logs: Vec<Complex> = spec
                    .lambdas()
                    .iter()
                    .enumerate()
                    .map(|(j, l)| {
                        let ratio = Complex::with_val(prec, &z - l) / Complex::with_val(prec, a - l);
                        Complex::with_val(prec, &start.logs[j] + ratio.ln())
                    })
                    .collect();
                (z, d, logs)
            }
            Piece::Arc { center, radius, theta0, .. } => {
                let e = Complex::with_val(prec, (Float::new(prec), t)).exp();
                let re = Complex::with_val(prec, &e * radius);
                let z = Complex::with_val(prec, spec.lambda(*center) + &re);
                let dz = Complex::with_val(prec, (Float::new(prec), Float::with_val(prec, 1))) * &re;
                let a = &start.z;
                let logs = spec
                    .lambdas()
                    .iter()
                    .enumerate()
                    .map(|(j, l)| {
                        if j == *center {
                            let dth = Float::with_val(prec, t - theta0);
                            Complex::with_val(prec, &start.logs[j] + Complex::with_val(prec, (Float::new(prec), dth)))
                        } else {
                            let ratio = Complex::with_val(prec, &z - l) / Complex::with_val(prec, a - l);
                            Complex::with_val(prec, &start.logs[j] + ratio.ln())
                        }
                    })
                    .collect();
                (z, dz, logs)
            }
            Piece::RootSegment { p, a } => {
                let lp = spec.lambda(*p);
                let d = Complex::with_val(prec, a - lp);
                let un = Float::with_val(prec, rug::ops::Pow::pow(t, n as u32));
                let un1 = Float::with_val(prec, rug::ops::Pow::pow(t, n as u32 - 1));
                let z = Complex::with_val(prec, lp + Complex::with_val(prec, &d * &un));
                let mut dz = Complex::with_val(prec, &d * &un1);
                dz *= n as u32;
                // integrate from u = 1 to 0: flip sign of the weight
                dz = -dz;
                let lt = Float::with_val(prec, t.ln_ref());
                let logs = spec
                    .lambdas()
                    .iter()
                    .enumerate()
                    .map(|(j, l)| {
                        if j == *p {
                            Complex::with_val(prec, &start.logs[j] + Complex::with_val(prec, &lt * n as u32))
                        } else {
                            let ratio = Complex::with_val(prec, &z - l) / Complex::with_val(prec, a - l);
                            Complex::with_val(prec, &start.logs[j] + ratio.ln())
                        }
                    })
                    .collect();
                (z, dz, logs)
            }
        };
        let pt = SheetPoint { z, logs };
        let mut node = NodeCache::new(spec, &pt);
        if !keep_logs {
            node.logs = Vec::new();
        }
        (node, dzdt)
    }
}

/// Quadrature nodes for a whole path: coarse and refined sets.
#[derive(Clone, Debug, Default)]
pub struct PathRule {
    pub coarse: Vec<(NodeCache, Complex)>,
    pub fine: Vec<(NodeCache, Complex)>,
}

/// Value of a path integral with its error estimate.
#[derive(Clone, Debug)]
pub struct Integral {
    pub value: Complex,
    pub coarse: Complex,
    pub abs_sum: f64,
}

impl Integral {
    pub fn err(&self, prec: Prec) -> f64 {
        let d = mp::abs_f64(&Complex::with_val(prec, &self.value - &self.coarse));
        d + mp::eps(prec.saturating_sub(16)) * self.abs_sum
    }
}

fn panel_nodes(
    spec: &CurveSpec,
    piece: &Piece,
    start: &SheetPoint,
    panels: &[(f64, f64)],
    rule: &GlRule,
) -> Vec<(NodeCache, Complex)> {
    let prec = spec.prec();
    let mut ts = Vec::new();
    for &(a, b) in panels {
        // exact in the working precision so adjacent panels share endpoints
        let (fa, fb) = (Float::with_val(prec, a), Float::with_val(prec, b));
        let c = Float::with_val(prec, &fa + &fb) / 2u32;
        let h = Float::with_val(prec, &fb - &fa) / 2u32;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let t = Float::with_val(prec, &c + Float::with_val(prec, &h * x));
            let wt = Float::with_val(prec, &h * w);
            ts.push((t, wt));
        }
    }
    crate::par::map(&ts, |(t, wt)| {
        let (node, dz) = piece.node(spec, start, t, false);
        (node, dz * wt)
    })
}

impl PathRule {
    /// Build nodes for consecutive pieces starting at `start`; returns the
    /// rule and the end point of the path.
    pub fn build(spec: &CurveSpec, pieces: &[Piece], start: &SheetPoint) -> Result<(PathRule, SheetPoint)> {
        let prec = spec.prec();
        let n = gl_order(prec);
        let rule = gl_rule(n, prec);
        let rho_req = 2f64.powf((prec as f64 + 20.0) / (2.0 * n as f64));
        let mut cur = start.clone();
        let mut out = PathRule::default();
        for (i, piece) in pieces.iter().enumerate() {
            let (a, b) = piece.param_range();
            let sings = piece.singularities(spec);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let mut panels = split_interval(lo, hi, &sings, rho_req)?;
            panels.sort_by(|x, y| x.0.total_cmp(&y.0));
            if a > b {
                panels = panels.into_iter().rev().map(|(x, y)| (y, x)).collect();
            }
            let fine: Vec<(f64, f64)> =
                panels.iter().flat_map(|&(x, y)| [(x, 0.5 * (x + y)), (0.5 * (x + y), y)]).collect();
            out.coarse.extend(panel_nodes(spec, piece, &cur, &panels, &rule));
            out.fine.extend(panel_nodes(spec, piece, &cur, &fine, &rule));
            if i + 1 < pieces.len() || !matches!(piece, Piece::RootSegment { .. }) {
                cur = piece.continue_logs(spec, &cur)?;
            }
        }
        Ok((out, cur))
    }

    pub fn integrate(&self, kernel: &Kernel) -> Integral {
        let sum = |nodes: &[(NodeCache, Complex)]| {
            let prec = nodes.first().map(|n| n.1.prec().0).unwrap_or(64);
            let mut acc = Complex::new(prec);
            let mut abs = 0.0;
            for (node, w) in nodes {
                let v = kernel.eval(node) * w;
                abs += mp::abs_f64(&v);
                acc += v;
            }
            (acc, abs)
        };
        let (value, abs_sum) = sum(&self.fine);
        let (coarse, _) = sum(&self.coarse);
        Integral { value, coarse, abs_sum }
    }

    pub fn len(&self) -> usize {
        self.fine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine.is_empty()
    }
}
