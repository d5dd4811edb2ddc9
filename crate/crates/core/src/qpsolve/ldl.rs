// Sparse LDLᵀ for symmetric quasi-definite matrices: minimum-degree
// ordering, elimination tree, up-looking numeric factorization.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

const NONE: usize = usize::MAX;

/// Minimum-degree ordering of the symmetric pattern whose upper triangle is
/// given in CSC form. Returns `perm` with `perm[new] = old`. Ties go to the
/// lower index, so the ordering is deterministic.
pub(crate) fn min_degree(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for j in 0..n {
        for &i in &row_idx[col_ptr[j]..col_ptr[j + 1]] {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut perm = Vec::with_capacity(n);
    while let Some((deg, v)) = queue.iter().next().copied() {
        queue.remove(&(deg, v));
        perm.push(v);
        let nbrs: Vec<usize> = core::mem::take(&mut adj[v]).into_iter().collect();
        for &a in &nbrs {
            let before = adj[a].len();
            adj[a].remove(&v);
            for &b in &nbrs {
                if b != a {
                    adj[a].insert(b);
                }
            }
            let after = adj[a].len();
            if after != before {
                queue.remove(&(before, a));
                queue.insert((after, a));
            }
        }
    }
    perm
}

/// Pattern-only part of the factorization, reusable while values change.
#[derive(Clone, Debug)]
pub(crate) struct Symbolic {
    n: usize,
    perm: Vec<usize>,
    /// Upper-triangular pattern of the permuted matrix.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Position in the permuted pattern of each input nonzero.
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

impl Symbolic {
    /// `col_ptr`/`row_idx` describe the upper triangle (diagonal included)
    /// of an `n x n` symmetric matrix.
    pub(crate) fn analyse(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Symbolic {
        Self::with_ordering(n, col_ptr, row_idx, min_degree(n, col_ptr, row_idx))
    }

    /// As [`Symbolic::analyse`] with a caller-supplied `perm[new] = old`.
    pub(crate) fn with_ordering(n: usize, col_ptr: &[usize], row_idx: &[usize], perm: Vec<usize>) -> Symbolic {
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let nnz = row_idx.len();
        let mut count = vec![0usize; n + 1];
        let mut target = Vec::with_capacity(nnz);
        for j in 0..n {
            for &i in &row_idx[col_ptr[j]..col_ptr[j + 1]] {
                let (a, b) = (iperm[i], iperm[j]);
                let (r, c) = if a <= b { (a, b) } else { (b, a) };
                target.push((r, c));
                count[c + 1] += 1;
            }
        }
        for j in 0..n {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let mut prow = vec![0usize; nnz];
        let mut map = vec![0usize; nnz];
        for (k, &(r, c)) in target.iter().enumerate() {
            prow[next[c]] = r;
            map[k] = next[c];
            next[c] += 1;
        }

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &start in &prow[count[j]..count[j + 1]] {
                let mut i = start;
                if i >= j {
                    continue;
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        Symbolic { n, perm, col_ptr: count, row_idx: prow, map, etree, lp }
    }

    pub(crate) fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Numeric factorization for values given in the input nonzero order.
    /// Fails with the offending (permuted) column on a zero pivot.
    pub(crate) fn factor(&self, values: &[f64]) -> Result<Factor, usize> {
        let n = self.n;
        let mut ax = vec![0.0; self.row_idx.len()];
        for (k, &v) in values.iter().enumerate() {
            ax[self.map[k]] += v;
        }
        let lnz = self.lp[n];
        let mut li = vec![0usize; lnz];
        let mut lx = vec![0.0; lnz];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut y_mark = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];

        for k in 0..n {
            let mut nnz_y = 0;
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                let b = self.row_idx[p];
                if b == k {
                    d[k] += ax[p];
                    continue;
                }
                y_vals[b] += ax[p];
                if !y_mark[b] {
                    y_mark[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if y_mark[nx] {
                            break;
                        }
                        y_mark[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = self.etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for t in (0..nnz_y).rev() {
                let c = y_idx[t];
                let yc = y_vals[c];
                let end = next_space[c];
                for j in self.lp[c]..end {
                    y_vals[li[j]] -= lx[j] * yc;
                }
                li[end] = k;
                lx[end] = yc * dinv[c];
                d[k] -= yc * lx[end];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_mark[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(k);
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(Factor { li, lx, d, dinv })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Factor {
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl Factor {
    pub(crate) fn positive_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v > 0.0).count()
    }

    /// Solves `K x = b` in place. `work` must have length `n`.
    pub(crate) fn solve(&self, sym: &Symbolic, b: &mut [f64], work: &mut [f64]) {
        let n = sym.n;
        for i in 0..n {
            work[i] = b[sym.perm[i]];
        }
        for i in 0..n {
            let wi = work[i];
            for j in sym.lp[i]..sym.lp[i + 1] {
                work[self.li[j]] -= self.lx[j] * wi;
            }
        }
        for i in 0..n {
            work[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut s = work[i];
            for j in sym.lp[i]..sym.lp[i + 1] {
                s -= self.lx[j] * work[self.li[j]];
            }
            work[i] = s;
        }
        for i in 0..n {
            b[sym.perm[i]] = work[i];
        }
    }
}
