//! Cycles on the cover, their intersection numbers, and a canonical
//! symplectic basis.
//!
//! The elementary cycle gamma_{j,k} is a figure-eight around two branch
//! points a, b adjacent in (Re, Im) order: it starts on sheet k on a's
//! circle, runs to b, circles b counterclockwise (sheet k -> k+1), runs back
//! and circles a clockwise (sheet back to k).

use num_complex::Complex64;
use rug::{Complex, Float, Rational};
use serde::Serialize;

use crate::curve::{self, CurveSpec, SheetPoint};
use crate::error::{Error, Result};
use crate::mp;
use crate::quadrature::Piece;

/// Combinatorial description from which a cycle is regenerated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CycleCode {
    /// branch point left of the figure-eight (0-based)
    pub a: usize,
    /// branch point right of the figure-eight (0-based)
    pub b: usize,
    /// start sheet
    pub sheet: usize,
}

#[derive(Clone, Debug)]
pub struct Cycle {
    pub code: CycleCode,
    pub start: SheetPoint,
    pub pieces: Vec<Piece>,
}

#[derive(Clone, Debug)]
pub struct IntersectionData {
    pub cycles: Vec<Cycle>,
    pub pairing: Vec<Vec<i64>>,
    /// Rows: A_1..A_g, B_1..B_g, then null combinations, as integer
    /// combinations of `cycles`.
    pub transform: Vec<Vec<i64>>,
    pub genus: usize,
}

impl IntersectionData {
    pub fn a_cycle(&self, i: usize) -> &[i64] {
        &self.transform[i]
    }
    pub fn b_cycle(&self, i: usize) -> &[i64] {
        &self.transform[self.genus + i]
    }
    pub fn null_cycles(&self) -> &[Vec<i64>] {
        &self.transform[2 * self.genus..]
    }
    pub fn codes(&self) -> Vec<CycleCode> {
        self.cycles.iter().map(|c| c.code).collect()
    }
    /// Reverse the orientation of every B-cycle.
    pub fn flip_b(&mut self) {
        for i in 0..self.genus {
            for x in self.transform[self.genus + i].iter_mut() {
                *x = -*x;
            }
        }
    }
}

fn radius_factor(sheet: usize, is_b: bool) -> f64 {
    0.20 + 0.05 * sheet as f64 + if is_b { 0.0 } else { 0.025 }
}

fn angle_offset(sheet: usize) -> f64 {
    0.3 + 0.1 * sheet as f64
}

/// Build the figure-eight for a code on the given curve.
pub fn cycle_from_code(spec: &CurveSpec, code: CycleCode) -> Result<Cycle> {
    let prec = spec.prec();
    let (a, b, k) = (code.a, code.b, code.sheet);
    if a >= spec.count() || b >= spec.count() || a == b || k + 1 >= spec.n() {
        return Err(Error::InvalidIndex(format!("cycle code {code:?}")));
    }
    let la = spec.lambda64(a);
    let lb = spec.lambda64(b);
    let phi = (lb - la).arg();
    let ra = radius_factor(k, false) * spec.neighbour_dist(a);
    let rb = radius_factor(k, true) * spec.neighbour_dist(b);
    let dl = angle_offset(k);
    let fl = |x: f64| Float::with_val(prec, x);
    let on = |c: usize, r: f64, th: f64| curve::from64(prec, spec.lambda64(c) + Complex64::from_polar(r, th));
    let th_a0 = phi + dl;
    let th_b0 = phi + std::f64::consts::PI + dl;
    let th_b1 = th_b0 + 2.0 * std::f64::consts::PI - 2.0 * dl;
    let th_a1 = phi - dl;
    let th_a2 = th_a1 - (2.0 * std::f64::consts::PI - 2.0 * dl);
    let p1 = on(b, rb, th_b0);
    let p2 = on(b, rb, th_b1);
    let p3 = on(a, ra, th_a1);
    let pieces = vec![
        Piece::Segment { a: on(a, ra, th_a0), b: p1 },
        Piece::Arc { center: b, radius: fl(rb), theta0: fl(th_b0), theta1: fl(th_b1) },
        Piece::Segment { a: p2, b: p3 },
        Piece::Arc { center: a, radius: fl(ra), theta0: fl(th_a1), theta1: fl(th_a2) },
    ];
    // make segment endpoints coincide exactly with the arc endpoints
    let mut pieces = pieces;
    let b_start = pieces[1].start(spec);
    let b_end = pieces[1].end(spec);
    let a_start = pieces[3].start(spec);
    let a_end = pieces[3].end(spec);
    pieces[0] = Piece::Segment { a: a_end.clone(), b: b_start };
    pieces[2] = Piece::Segment { a: b_end, b: a_start };
    let start = spec.point_on_sheet(&a_end, k)?;
    Ok(Cycle { code, start, pieces })
}

/// The (N-1)(Nm-1) figure-eights gamma_{j,k}.
pub fn elementary_cycles(spec: &CurveSpec) -> Result<Vec<Cycle>> {
    if spec.genus() == 0 {
        return Err(Error::GenusZero);
    }
    let order = spec.sorted_order();
    let mut codes = Vec::new();
    for w in order.windows(2) {
        for k in 0..spec.n() - 1 {
            codes.push(CycleCode { a: w[0], b: w[1], sheet: k });
        }
    }
    cycles_from_codes(spec, &codes)
}

pub fn cycles_from_codes(spec: &CurveSpec, codes: &[CycleCode]) -> Result<Vec<Cycle>> {
    let cycles: Vec<Cycle> = codes.iter().map(|&c| cycle_from_code(spec, c)).collect::<Result<_>>()?;
    for c in &cycles {
        check_closed(spec, c)?;
    }
    Ok(cycles)
}

/// Continue around the cycle and compare with the start.
pub fn check_closed(spec: &CurveSpec, c: &Cycle) -> Result<()> {
    let mut cur = c.start.clone();
    for p in &c.pieces {
        cur = p.continue_logs(spec, &cur)?;
    }
    let gap = mp::abs_f64(&Complex::with_val(spec.prec(), &cur.z - &c.start.z));
    if gap > 1e-20 * (1.0 + mp::abs_f64(&c.start.z)) || curve::winding_diff(&cur.logs, &c.start.logs, spec.n()) != 0 {
        return Err(Error::NonClosedCycle);
    }
    Ok(())
}

/// Polyline samples of a cycle with f64 logs at every vertex.
#[derive(Clone, Debug, Serialize)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    #[serde(skip)]
    pub logs: Vec<Vec<Complex64>>,
}

pub fn polyline(spec: &CurveSpec, c: &Cycle) -> Polyline {
    let lam: Vec<Complex64> = (0..spec.count()).map(|j| spec.lambda64(j)).collect();
    let mut pts = vec![curve::to64(&c.start.z)];
    let mut logs = vec![c.start.logs.iter().map(curve::to64).collect::<Vec<_>>()];
    let push = |z: Complex64, pts: &mut Vec<Complex64>, logs: &mut Vec<Vec<Complex64>>| {
        let prev_z = *pts.last().unwrap();
        let prev = logs.last().unwrap().clone();
        let next: Vec<Complex64> =
            prev.iter().zip(&lam).map(|(l, &lj)| l + ((z - lj) / (prev_z - lj)).ln()).collect();
        pts.push(z);
        logs.push(next);
    };
    for p in &c.pieces {
        match p {
            Piece::Segment { b, .. } => push(curve::to64(b), &mut pts, &mut logs),
            Piece::Arc { center, radius, theta0, theta1 } => {
                let (t0, t1) = (theta0.to_f64(), theta1.to_f64());
                let steps = ((t1 - t0).abs() / 0.05).ceil().max(2.0) as usize;
                let cz = lam[*center];
                for i in 1..=steps {
                    let t = t0 + (t1 - t0) * i as f64 / steps as f64;
                    push(cz + Complex64::from_polar(radius.to_f64(), t), &mut pts, &mut logs);
                }
            }
            Piece::RootSegment { .. } => {}
        }
    }
    Polyline { points: pts.iter().map(|z| (z.re, z.im)).collect(), logs }
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    (a.conj() * b).im
}

/// Signed count of crossings of x and y on the same sheet.
pub fn intersection_number(spec: &CurveSpec, x: &Polyline, y: &Polyline) -> i64 {
    let n = spec.n() as i64;
    let lam: Vec<Complex64> = (0..spec.count()).map(|j| spec.lambda64(j)).collect();
    let xp: Vec<Complex64> = x.points.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
    let yp: Vec<Complex64> = y.points.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
    let mut total = 0;
    for i in 0..xp.len() - 1 {
        let (p, dp) = (xp[i], xp[i + 1] - xp[i]);
        for j in 0..yp.len() - 1 {
            let (q, dq) = (yp[j], yp[j + 1] - yp[j]);
            let den = cross(dp, dq);
            if den.abs() < 1e-300 {
                continue;
            }
            let t = cross(q - p, dq) / den;
            let u = cross(q - p, dp) / den;
            if !(0.0..1.0).contains(&t) || !(0.0..1.0).contains(&u) {
                continue;
            }
            let z = p + dp * t;
            let mut d = 0.0;
            for (k, &lk) in lam.iter().enumerate() {
                let lx = x.logs[i][k] + ((z - lk) / (p - lk)).ln();
                let ly = y.logs[j][k] + ((z - lk) / (q - lk)).ln();
                d += lx.im - ly.im;
            }
            let w = (d / (2.0 * std::f64::consts::PI)).round() as i64;
            if w.rem_euclid(n) == 0 {
                total += if den > 0.0 { 1 } else { -1 };
            }
        }
    }
    total
}

pub fn intersection_matrix(spec: &CurveSpec, cycles: &[Cycle]) -> Result<Vec<Vec<i64>>> {
    for c in cycles {
        check_closed(spec, c)?;
    }
    let polys: Vec<Polyline> = crate::par::map(cycles, |c| polyline(spec, c));
    let n = cycles.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals = crate::par::map(&pairs, |&(i, j)| intersection_number(spec, &polys[i], &polys[j]));
    let mut m = vec![vec![0i64; n]; n];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        m[i][j] = v;
        m[j][i] = -v;
    }
    Ok(m)
}

/// Rank over Q of an integer matrix.
pub fn rank(m: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<Rational>> = m.iter().map(|r| r.iter().map(|&x| Rational::from(x)).collect()).collect();
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| a[i][c] != 0) else { continue };
        a.swap(r, p);
        for i in 0..rows {
            if i != r && a[i][c] != 0 {
                let f = Rational::from(&a[i][c] / &a[r][c]);
                for k in c..cols {
                    let t = Rational::from(&f * &a[r][k]);
                    a[i][k] -= t;
                }
            }
        }
        r += 1;
    }
    r
}

/// Determinant of an integer matrix (exact).
pub fn det_int(m: &[Vec<i64>]) -> rug::Integer {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = m.iter().map(|r| r.iter().map(|&x| Rational::from(x)).collect()).collect();
    let mut det = Rational::from(1);
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| a[i][c] != 0) else { return rug::Integer::new() };
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= &a[c][c];
        for i in c + 1..n {
            if a[i][c] != 0 {
                let f = Rational::from(&a[i][c] / &a[c][c]);
                for k in c..n {
                    let t = Rational::from(&f * &a[c][k]);
                    a[i][k] -= t;
                }
            }
        }
    }
    det.numer().clone()
}

fn pair(p: &[Vec<i64>], x: &[i64], y: &[i64]) -> i64 {
    let mut s = 0;
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0 {
            continue;
        }
        for (j, &yj) in y.iter().enumerate() {
            s += xi * p[i][j] * yj;
        }
    }
    s
}

fn axpy(y: &mut [i64], a: i64, x: &[i64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Integer symplectic reduction: rows A_1..A_g, B_1..B_g, then a basis of
/// the radical. Pivots are chosen by smallest index.
pub fn symplectic_reduce(p: &[Vec<i64>], genus: usize) -> Result<Vec<Vec<i64>>> {
    let n = p.len();
    let mut vecs: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut a_rows = Vec::new();
    let mut b_rows = Vec::new();
    loop {
        // unit pivot, smallest indices first
        let mut found = None;
        'outer: for (ii, &i) in remaining.iter().enumerate() {
            for &j in &remaining[ii + 1..] {
                let v = pair(p, &vecs[i], &vecs[j]);
                if v.abs() == 1 {
                    found = Some((i, j, v));
                    break 'outer;
                }
            }
        }
        let (i, j, v) = match found {
            Some(f) => f,
            None => {
                // Euclid-style reduction on the smallest nonzero entry
                let mut best: Option<(usize, usize, i64)> = None;
                for (ii, &i) in remaining.iter().enumerate() {
                    for &j in &remaining[ii + 1..] {
                        let v = pair(p, &vecs[i], &vecs[j]);
                        if v != 0 && best.is_none_or(|b| v.abs() < b.2.abs()) {
                            best = Some((i, j, v));
                        }
                    }
                }
                let Some((i, j, v)) = best else { break };
                let mut progressed = false;
                for &k in &remaining {
                    if k == i || k == j {
                        continue;
                    }
                    let kj = pair(p, &vecs[k], &vecs[j]);
                    if kj % v != 0 {
                        let q = kj.div_euclid(v);
                        let vi = vecs[i].clone();
                        axpy(&mut vecs[k], -q, &vi);
                        progressed = true;
                        break;
                    }
                    let ik = pair(p, &vecs[i], &vecs[k]);
                    if ik % v != 0 {
                        let q = ik.div_euclid(v);
                        let vj = vecs[j].clone();
                        axpy(&mut vecs[k], -q, &vj);
                        progressed = true;
                        break;
                    }
                }
                if !progressed {
                    return Err(Error::RankDeficient { rank: 2 * a_rows.len(), expected: 2 * genus });
                }
                continue;
            }
        };
        let e = vecs[i].clone();
        let f: Vec<i64> = vecs[j].iter().map(|x| x * v).collect();
        for &k in &remaining {
            if k == i || k == j {
                continue;
            }
            let xf = pair(p, &vecs[k], &f);
            let xe = pair(p, &vecs[k], &e);
            axpy(&mut vecs[k], -xf, &e);
            axpy(&mut vecs[k], xe, &f);
        }
        remaining.retain(|&k| k != i && k != j);
        a_rows.push(e);
        b_rows.push(f);
    }
    if a_rows.len() != genus {
        return Err(Error::RankDeficient { rank: 2 * a_rows.len(), expected: 2 * genus });
    }
    let mut out = a_rows;
    out.extend(b_rows);
    out.extend(remaining.iter().map(|&k| vecs[k].clone()));
    Ok(out)
}

pub fn canonical_basis(spec: &CurveSpec, cycles: Vec<Cycle>, pairing: Vec<Vec<i64>>) -> Result<IntersectionData> {
    let g = spec.genus();
    let r = rank(&pairing);
    if r != 2 * g {
        return Err(Error::RankDeficient { rank: r, expected: 2 * g });
    }
    let transform = symplectic_reduce(&pairing, g)?;
    Ok(IntersectionData { cycles, pairing, transform, genus: g })
}

/// Elementary cycles, their pairing and a canonical basis in one call.
pub fn build_homology(spec: &CurveSpec) -> Result<IntersectionData> {
    let cycles = elementary_cycles(spec)?;
    let pairing = intersection_matrix(spec, &cycles)?;
    canonical_basis(spec, cycles, pairing)
}

/// JSON export of a cycle for plotting.
#[derive(Serialize)]
pub struct CycleExport {
    pub code: CycleCode,
    pub branch_points: (usize, usize),
    pub polyline: Vec<(f64, f64)>,
}

pub fn export_cycles(spec: &CurveSpec, cycles: &[Cycle]) -> Vec<CycleExport> {
    cycles
        .iter()
        .map(|c| CycleExport {
            code: c.code,
            branch_points: (c.code.a + 1, c.code.b + 1),
            polyline: polyline(spec, c).points,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, m: usize, pts: &[(f64, f64)]) -> CurveSpec {
        CurveSpec::new(n, m, pts.iter().map(|&(a, b)| mp::c(128, a, b)).collect(), 128).unwrap()
    }

    fn standard_j(g: usize) -> Vec<Vec<i64>> {
        let mut j = vec![vec![0; 2 * g]; 2 * g];
        for i in 0..g {
            j[i][g + i] = 1;
            j[g + i][i] = -1;
        }
        j
    }

    fn check_symplectic(p: &[Vec<i64>], t: &[Vec<i64>], g: usize) {
        let j = standard_j(g);
        for a in 0..2 * g {
            for b in 0..2 * g {
                assert_eq!(pair(p, &t[a], &t[b]), j[a][b]);
            }
        }
        for null in &t[2 * g..] {
            for row in t {
                assert_eq!(pair(p, null, row), 0);
            }
        }
        assert_eq!(det_int(t).abs(), 1);
    }

    #[test]
    fn elementary_counts_and_ranks() {
        let s = spec(2, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let c = elementary_cycles(&s).unwrap();
        assert_eq!(c.len(), 3);
        let p = intersection_matrix(&s, &c).unwrap();
        assert_eq!(rank(&p), 2);
        assert_eq!(p[0][1].abs(), 1);
        assert_eq!(p[0][2], 0);
        for i in 0..3 {
            assert_eq!(p[i][i], 0);
        }
        let s = spec(3, 1, &[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)]);
        let c = elementary_cycles(&s).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(rank(&intersection_matrix(&s, &c).unwrap()), 2);
        let s = spec(2, 1, &[(0.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(elementary_cycles(&s), Err(Error::GenusZero)));
    }

    #[test]
    fn canonical_bases() {
        for (n, m, pts) in [
            (2, 2, vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]),
            (2, 3, vec![(0.0, 0.0), (1.0, 0.3), (2.0, -0.2), (3.0, 0.0), (4.0, 0.5), (5.0, 0.0)]),
            (3, 2, vec![(0.0, 0.0), (1.0, 0.2), (2.0, -0.1), (3.0, 0.0), (4.0, 0.4), (5.0, 0.1)]),
            (4, 1, vec![(0.0, 0.0), (1.0, 0.5), (2.0, -0.5), (3.0, 0.0)]),
        ] {
            let s = spec(n, m, &pts);
            let h = build_homology(&s).unwrap();
            check_symplectic(&h.pairing, &h.transform, s.genus());
            assert_eq!(h.null_cycles().len(), h.cycles.len() - 2 * s.genus());
        }
    }

    #[test]
    fn already_symplectic_gives_identity() {
        let j = standard_j(2);
        let t = symplectic_reduce(&j, 2).unwrap();
        assert_eq!(t, (0..4).map(|i| (0..4).map(|k| i64::from(i == k)).collect::<Vec<_>>()).collect::<Vec<_>>());
        let mut p = j.clone();
        p[0][2] = 2;
        p[2][0] = -2;
        p[1][3] = 2;
        p[3][1] = -2;
        assert!(symplectic_reduce(&p, 2).is_err());
    }

    #[test]
    fn codes_regenerate_after_perturbation() {
        let s = spec(2, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let h = build_homology(&s).unwrap();
        let s2 = s.perturbed(1, &mp::c(128, 0.05, 0.02)).unwrap();
        let c2 = cycles_from_codes(&s2, &h.codes()).unwrap();
        assert_eq!(intersection_matrix(&s2, &c2).unwrap(), h.pairing);
    }
}
