//! Ordered partitions Lambda = (Lambda_1, ..., Lambda_N) of {1..Nm} into
//! blocks of size m. Internally elements are 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of enumerated partitions.
pub const ENUM_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderedPartition {
    blocks: Vec<Vec<usize>>,
    k: Vec<usize>,
}

impl OrderedPartition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n = blocks.len();
        if n < 2 {
            return Err(Error::InvalidIndex("partition needs at least two blocks".into()));
        }
        let m = blocks[0].len();
        let total = n * m;
        let mut k = vec![usize::MAX; total];
        let mut sorted = Vec::with_capacity(n);
        for (r, b) in blocks.into_iter().enumerate() {
            if b.len() != m {
                return Err(Error::InvalidIndex("blocks must have equal size".into()));
            }
            for &i in &b {
                if i >= total || k[i] != usize::MAX {
                    return Err(Error::InvalidIndex(format!("element {} repeated or out of range", i + 1)));
                }
                k[i] = r + 1;
            }
            let mut b = b;
            b.sort_unstable();
            sorted.push(b);
        }
        Ok(OrderedPartition { blocks: sorted, k })
    }

    /// Blocks given with 1-based elements.
    pub fn from_one_based(blocks: &[Vec<usize>]) -> Result<Self> {
        let b = blocks
            .iter()
            .map(|bl| {
                bl.iter()
                    .map(|&x| x.checked_sub(1).ok_or_else(|| Error::InvalidIndex("element 0".into())))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(b)
    }

    /// Lambda_r = {(r-1)m+1, ..., rm}.
    pub fn standard(n: usize, m: usize) -> Self {
        Self::new((0..n).map(|r| (r * m..(r + 1) * m).collect()).collect()).expect("standard partition")
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }
    pub fn m(&self) -> usize {
        self.blocks[0].len()
    }
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
    /// Lambda_r for r = 1..N.
    pub fn block(&self, r: usize) -> &[usize] {
        &self.blocks[r - 1]
    }
    /// k_i in 1..N with i in Lambda_{k_i}; i is 0-based.
    pub fn block_of(&self, i: usize) -> usize {
        self.k[i]
    }
    pub fn ks(&self) -> &[usize] {
        &self.k
    }

    pub fn one_based(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.iter().map(|x| x + 1).collect()).collect()
    }

    /// Bit mask of a block (Nm <= 64 is assumed for caching keys).
    pub fn mask(&self, r: usize) -> u64 {
        self.block(r).iter().fold(0u64, |acc, &i| acc | (1u64 << i))
    }

    /// Lambda^{(ab)}: exchange elements a and b between their blocks.
    pub fn swapped(&self, a: usize, b: usize) -> Self {
        let (ra, rb) = (self.k[a], self.k[b]);
        if ra == rb {
            return self.clone();
        }
        let mut blocks = self.blocks.clone();
        for x in blocks[ra - 1].iter_mut() {
            if *x == a {
                *x = b;
            }
        }
        for x in blocks[rb - 1].iter_mut() {
            if *x == b {
                *x = a;
            }
        }
        Self::new(blocks).expect("swap keeps a partition")
    }

    /// Lambda^-: position j holds Lambda_{-j mod N}; Lambda_N stays.
    pub fn reversed(&self) -> Self {
        let n = self.n();
        let blocks = (1..=n).map(|j| self.block(if j == n { n } else { n - j }).to_vec()).collect();
        Self::new(blocks).expect("reversal keeps a partition")
    }

    /// (Lambda_1..Lambda_N) -> (Lambda_N, Lambda_1, .., Lambda_{N-1}).
    pub fn cyclic_shift(&self) -> Self {
        let n = self.n();
        let mut blocks = vec![self.block(n).to_vec()];
        blocks.extend((1..n).map(|r| self.block(r).to_vec()));
        Self::new(blocks).expect("shift keeps a partition")
    }

    /// (Lambda_N, Lambda_{s(1)}, ..) style permutation of positions 1..N-1.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let mut blocks: Vec<Vec<usize>> = perm.iter().map(|&r| self.block(r).to_vec()).collect();
        blocks.push(self.block(n).to_vec());
        Self::new(blocks).expect("permutation keeps a partition")
    }
}

pub fn partition_count(n: usize, m: usize) -> u128 {
    let mut c: u128 = 1;
    let mut used = 0u128;
    for _ in 0..n {
        // multiply by C(used + m, m)
        for j in 1..=m as u128 {
            c = c * (used + j) / j;
        }
        used += m as u128;
    }
    c
}

/// All ordered partitions in lexicographic order of (k_1, .., k_Nm).
pub fn enumerate_partitions(n: usize, m: usize) -> Result<Vec<OrderedPartition>> {
    enumerate_partitions_capped(n, m, ENUM_CAP)
}

pub fn enumerate_partitions_capped(n: usize, m: usize, cap: u128) -> Result<Vec<OrderedPartition>> {
    if n < 2 || m < 1 {
        return Err(Error::BadParameters(format!("N={n}, m={m}")));
    }
    let count = partition_count(n, m);
    if count > cap {
        return Err(Error::Overflow(count.to_string()));
    }
    let total = n * m;
    let mut out = Vec::with_capacity(count as usize);
    let mut k = vec![0usize; total];
    let mut left = vec![m; n];
    fn rec(pos: usize, n: usize, m: usize, k: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<OrderedPartition>) {
        if pos == k.len() {
            let mut blocks = vec![Vec::with_capacity(m); n];
            for (i, &r) in k.iter().enumerate() {
                blocks[r].push(i);
            }
            out.push(OrderedPartition::new(blocks).expect("valid"));
            return;
        }
        for r in 0..n {
            if left[r] > 0 {
                left[r] -= 1;
                k[pos] = r;
                rec(pos + 1, n, m, k, left, out);
                left[r] += 1;
            }
        }
    }
    rec(0, n, m, &mut k, &mut left, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_count(n: usize, m: usize) -> usize {
        // count maps {0..nm} -> {0..n} with each fibre of size m
        let total = n * m;
        let mut c = 0;
        let lim = n.pow(total as u32);
        for code in 0..lim {
            let mut x = code;
            let mut cnt = vec![0; n];
            for _ in 0..total {
                cnt[x % n] += 1;
                x /= n;
            }
            if cnt.iter().all(|&v| v == m) {
                c += 1;
            }
        }
        c
    }

    #[test]
    fn counts_match_brute_force() {
        for (n, m) in [(2, 1), (2, 2), (3, 1), (2, 3), (3, 2), (4, 1)] {
            let v = enumerate_partitions(n, m).unwrap();
            assert_eq!(v.len(), brute_count(n, m));
            assert_eq!(v.len() as u128, partition_count(n, m));
        }
        assert_eq!(enumerate_partitions(2, 2).unwrap().len(), 6);
        assert_eq!(enumerate_partitions(3, 1).unwrap().len(), 6);
        assert_eq!(enumerate_partitions(2, 1).unwrap().len(), 2);
    }

    #[test]
    fn order_is_lexicographic_in_k() {
        let v = enumerate_partitions(3, 2).unwrap();
        for w in v.windows(2) {
            assert!(w[0].ks() < w[1].ks());
        }
        assert_eq!(v[0], OrderedPartition::standard(3, 2));
    }

    #[test]
    fn overflow_guard() {
        assert!(matches!(enumerate_partitions_capped(4, 4, 1000), Err(Error::Overflow(_))));
    }

    #[test]
    fn reversal_is_involution_and_swap_moves_elements() {
        let l = OrderedPartition::from_one_based(&[vec![1, 4], vec![2, 6], vec![3, 5]]).unwrap();
        assert_eq!(l.reversed().reversed(), l);
        assert_eq!(l.reversed().block(1), l.block(2));
        let s = l.swapped(0, 1);
        assert_eq!(s.block_of(1), 1);
        assert_eq!(s.block_of(0), 2);
        assert_eq!(l.cyclic_shift().block(1), l.block(3));
    }
}
