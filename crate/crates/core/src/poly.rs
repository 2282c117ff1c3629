//! Dense univariate polynomials over a small scalar abstraction, so the same
//! routines run over multiprecision complex numbers and exact rationals.

use rug::{Complex, Rational};

pub trait Scalar: Clone + Send + Sync {
    fn zero_like(&self) -> Self;
    fn from_i64_like(&self, v: i64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn one_like(&self) -> Self {
        self.from_i64_like(1)
    }
}

impl Scalar for Complex {
    fn zero_like(&self) -> Self {
        Complex::new(self.prec())
    }
    fn from_i64_like(&self, v: i64) -> Self {
        Complex::with_val(self.prec(), v)
    }
    fn add(&self, o: &Self) -> Self {
        Complex::with_val(self.prec(), self + o)
    }
    fn sub(&self, o: &Self) -> Self {
        Complex::with_val(self.prec(), self - o)
    }
    fn mul(&self, o: &Self) -> Self {
        Complex::with_val(self.prec(), self * o)
    }
    fn is_zero(&self) -> bool {
        self.real().is_zero() && self.imag().is_zero()
    }
}

impl Scalar for Rational {
    fn zero_like(&self) -> Self {
        Rational::new()
    }
    fn from_i64_like(&self, v: i64) -> Self {
        Rational::from(v)
    }
    fn add(&self, o: &Self) -> Self {
        Rational::from(self + o)
    }
    fn sub(&self, o: &Self) -> Self {
        Rational::from(self - o)
    }
    fn mul(&self, o: &Self) -> Self {
        Rational::from(self * o)
    }
    fn is_zero(&self) -> bool {
        self.cmp0() == std::cmp::Ordering::Equal
    }
}

/// Coefficients from low to high degree.
pub type Poly<T> = Vec<T>;

pub fn trim<T: Scalar>(mut p: Poly<T>) -> Poly<T> {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    p
}

pub fn constant<T: Scalar>(c: T) -> Poly<T> {
    trim(vec![c])
}

/// prod (z - r) over the given roots; `one` fixes the scalar context.
pub fn from_roots<'a, T: Scalar + 'a>(roots: impl IntoIterator<Item = &'a T>, one: &T) -> Poly<T> {
    let mut p = vec![one.one_like()];
    for r in roots {
        let mut q = vec![one.zero_like(); p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            q[i + 1] = q[i + 1].add(c);
            q[i] = q[i].sub(&c.mul(r));
        }
        p = q;
    }
    p
}

pub fn add<T: Scalar>(a: &Poly<T>, b: &Poly<T>) -> Poly<T> {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(match (a.get(i), b.get(i)) {
            (Some(x), Some(y)) => x.add(y),
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => unreachable!(),
        });
    }
    trim(out)
}

pub fn sub<T: Scalar>(a: &Poly<T>, b: &Poly<T>) -> Poly<T> {
    add(a, &b.iter().map(|c| c.zero_like().sub(c)).collect())
}

pub fn scale<T: Scalar>(a: &Poly<T>, s: &T) -> Poly<T> {
    trim(a.iter().map(|c| c.mul(s)).collect())
}

pub fn mul<T: Scalar>(a: &Poly<T>, b: &Poly<T>) -> Poly<T> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![a[0].zero_like(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].add(&x.mul(y));
        }
    }
    trim(out)
}

pub fn derivative<T: Scalar>(a: &Poly<T>) -> Poly<T> {
    trim(a.iter().enumerate().skip(1).map(|(i, c)| c.mul(&c.from_i64_like(i as i64))).collect())
}

/// Polynomial part of a(z) / z^k.
pub fn shift_down<T: Scalar>(a: &Poly<T>, k: usize) -> Poly<T> {
    if a.len() <= k {
        Vec::new()
    } else {
        a[k..].to_vec()
    }
}

/// z^k a(z)
pub fn shift_up<T: Scalar>(a: &Poly<T>, k: usize) -> Poly<T> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut out = vec![a[0].zero_like(); k];
    out.extend(a.iter().cloned());
    out
}

pub fn eval<T: Scalar>(a: &Poly<T>, z: &T) -> T {
    let mut acc = z.zero_like();
    for c in a.iter().rev() {
        acc = acc.mul(z).add(c);
    }
    acc
}

pub fn degree<T: Scalar>(a: &Poly<T>) -> Option<usize> {
    let t = trim(a.clone());
    if t.is_empty() {
        None
    } else {
        Some(t.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: i64) -> Rational {
        Rational::from(v)
    }

    #[test]
    fn roots_and_eval() {
        let roots = [q(1), q(2), q(-3)];
        let p = from_roots(roots.iter(), &q(1));
        assert_eq!(p.len(), 4);
        for r in &roots {
            assert!(eval(&p, r).is_zero());
        }
        assert_eq!(eval(&p, &q(0)), q(6));
    }

    #[test]
    fn derivative_product_rule() {
        let a = from_roots([q(1), q(4)].iter(), &q(1));
        let b = from_roots([q(-2)].iter(), &q(1));
        let lhs = derivative(&mul(&a, &b));
        let rhs = add(&mul(&derivative(&a), &b), &mul(&a, &derivative(&b)));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn shift_drops_low_terms() {
        let a = vec![q(1), q(2), q(3)];
        assert_eq!(shift_down(&a, 1), vec![q(2), q(3)]);
        assert!(shift_down(&a, 5).is_empty());
        assert_eq!(shift_up(&a, 1)[0], q(0));
    }
}
