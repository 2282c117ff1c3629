//! Small dense linear algebra over multiprecision complex numbers.

use rug::Complex;

use crate::error::{Error, Result};
use crate::mp::{abs_f64, Prec};

pub type CMat = Vec<Vec<Complex>>;

pub fn zeros(rows: usize, cols: usize, prec: Prec) -> CMat {
    vec![vec![Complex::new(prec); cols]; rows]
}

pub fn identity(n: usize, prec: Prec) -> CMat {
    let mut m = zeros(n, n, prec);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Complex::with_val(prec, 1);
    }
    m
}

pub fn transpose(a: &CMat) -> CMat {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j].clone()).collect()).collect()
}

pub fn matmul(a: &CMat, b: &CMat, prec: Prec) -> CMat {
    let n = a.len();
    let k = b.len();
    let m = if k == 0 { 0 } else { b[0].len() };
    let mut out = zeros(n, m, prec);
    for i in 0..n {
        for j in 0..m {
            let mut s = Complex::new(prec);
            for t in 0..k {
                s += &a[i][t] * &b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn scale(a: &CMat, s: &Complex) -> CMat {
    a.iter().map(|r| r.iter().map(|x| x.clone() * s).collect()).collect()
}

fn norm_inf(a: &CMat) -> f64 {
    a.iter().map(|r| r.iter().map(abs_f64).sum::<f64>()).fold(0.0, f64::max)
}

struct Lu {
    lu: CMat,
    perm: Vec<usize>,
    sign: i32,
    singular: bool,
}

fn lu(a: &CMat, prec: Prec) -> Lu {
    let n = a.len();
    let mut lu: CMat = a.iter().map(|r| r.iter().map(|x| Complex::with_val(prec, x)).collect()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1;
    let mut singular = false;
    for k in 0..n {
        let (piv, best) = (k..n)
            .map(|i| (i, abs_f64(&lu[i][k])))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == 0.0 {
            singular = true;
            continue;
        }
        if piv != k {
            lu.swap(piv, k);
            perm.swap(piv, k);
            sign = -sign;
        }
        let pivot = lu[k][k].clone();
        for i in k + 1..n {
            let f = Complex::with_val(prec, &lu[i][k] / &pivot);
            for j in k + 1..n {
                let t = Complex::with_val(prec, &f * &lu[k][j]);
                lu[i][j] -= t;
            }
            lu[i][k] = f;
        }
    }
    Lu { lu, perm, sign, singular }
}

pub fn det(a: &CMat, prec: Prec) -> Complex {
    let n = a.len();
    if n == 0 {
        return Complex::with_val(prec, 1);
    }
    let work = prec + 32;
    let f = lu(a, work);
    if f.singular {
        return Complex::new(prec);
    }
    let mut d = Complex::with_val(work, f.sign);
    for i in 0..n {
        d *= &f.lu[i][i];
    }
    Complex::with_val(prec, d)
}

fn lu_solve(f: &Lu, b: &[Complex], prec: Prec) -> Vec<Complex> {
    let n = b.len();
    let mut x: Vec<Complex> = f.perm.iter().map(|&p| Complex::with_val(prec, &b[p])).collect();
    for i in 0..n {
        for j in 0..i {
            let t = Complex::with_val(prec, &f.lu[i][j] * &x[j]);
            x[i] -= t;
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            let t = Complex::with_val(prec, &f.lu[i][j] * &x[j]);
            x[i] -= t;
        }
        x[i] /= &f.lu[i][i];
    }
    x
}

/// Inverse with one step of iterative refinement in extended precision.
/// Returns the inverse and an infinity-norm condition estimate.
pub fn inverse(a: &CMat, prec: Prec) -> Result<(CMat, f64)> {
    let n = a.len();
    let work = prec + 64;
    let f = lu(a, work);
    if f.singular {
        return Err(Error::SingularAMatrix(f64::INFINITY));
    }
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![Complex::new(work); n];
        e[j] = Complex::with_val(work, 1);
        let mut x = lu_solve(&f, &e, work);
        // residual r = e - A x, correction A d = r
        let mut r = e.clone();
        for i in 0..n {
            for k in 0..n {
                let t = Complex::with_val(work, &a[i][k] * &x[k]);
                r[i] -= t;
            }
        }
        let d = lu_solve(&f, &r, work);
        for i in 0..n {
            x[i] += &d[i];
        }
        cols.push(x);
    }
    let inv: CMat = (0..n)
        .map(|i| (0..n).map(|j| Complex::with_val(prec, &cols[j][i])).collect())
        .collect();
    let cond = norm_inf(a) * norm_inf(&inv);
    Ok((inv, cond))
}

/// Cholesky factor (lower) of a symmetric positive definite f64 matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse of a small real matrix by Gauss-Jordan (f64), used for geometry.
pub fn inverse_f64(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for k in 0..n {
        let piv = (k..n).max_by(|&x, &y| m[x][k].abs().total_cmp(&m[y][k].abs()))?;
        if m[piv][k].abs() < 1e-300 {
            return None;
        }
        m.swap(k, piv);
        let p = m[k][k];
        for v in m[k].iter_mut() {
            *v /= p;
        }
        for i in 0..n {
            if i != k {
                let f = m[i][k];
                if f != 0.0 {
                    for j in 0..2 * n {
                        m[i][j] -= f * m[k][j];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}
