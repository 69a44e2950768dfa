use std::sync::Arc;

use rayon::prelude::*;

/// Row-compressed sparsity structure with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
}

impl Pattern {
    /// Symmetric pattern with a diagonal from undirected edges (any order, duplicates allowed).
    pub fn from_edges(n: usize, edges: &mut Vec<(u32, u32)>) -> Self {
        edges.retain(|&(a, b)| a != b);
        for e in edges.iter_mut() {
            *e = (e.0.min(e.1), e.0.max(e.1));
        }
        edges.sort_unstable();
        edges.dedup();
        let mut deg = vec![1usize; n];
        for &(a, b) in edges.iter() {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for d in &deg {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let mut fill = row_ptr[..n].to_vec();
        let mut cols = vec![0u32; row_ptr[n]];
        for i in 0..n {
            cols[fill[i]] = i as u32;
            fill[i] += 1;
        }
        for &(a, b) in edges.iter() {
            cols[fill[a as usize]] = b;
            fill[a as usize] += 1;
            cols[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        for i in 0..n {
            cols[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }
        Self { row_ptr, cols }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Storage index of entry `(i, j)`, if structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e].binary_search(&(j as u32)).ok().map(|k| s + k)
    }
}

/// Sparse matrix in compressed row layout over a shared [`Pattern`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pattern: Arc<Pattern>,
    vals: Vec<f64>,
}

pub type SparseOperator = CsrMatrix;

impl CsrMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let vals = vec![0.0; pattern.nnz()];
        Self { pattern, vals }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| self.vals[k])
    }

    /// Entries `(j, a_ij)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
        self.pattern.cols[s..e].iter().zip(&self.vals[s..e]).map(|(&j, &v)| (j as usize, v))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &*self.pattern;
        y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, yi)| {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.vals[k] * x[p.cols[k] as usize];
            }
            *yi = acc;
        });
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n()];
        self.matvec(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// `self += s * other`; both matrices must share the pattern.
    pub fn add_scaled(&mut self, other: &CsrMatrix, s: f64) {
        assert!(Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern);
        for (a, b) in self.vals.iter_mut().zip(&other.vals) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.vals {
            *v *= s;
        }
    }

    /// Largest `|a_ij − a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let max = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n() {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_from_edges() {
        let mut e = vec![(0, 1), (1, 2), (1, 0), (0, 1)];
        let p = Pattern::from_edges(3, &mut e);
        assert_eq!(p.row_ptr, vec![0, 2, 5, 7]);
        assert_eq!(p.cols, vec![0, 1, 0, 1, 2, 1, 2]);
        assert_eq!(p.position(2, 0), None);
        assert_eq!(p.position(1, 2), Some(4));
    }

    #[test]
    fn matvec_and_quadratic_form() {
        let mut e = vec![(0, 1), (1, 2)];
        let p = Arc::new(Pattern::from_edges(3, &mut e));
        let mut a = CsrMatrix::zeros(p.clone());
        // Tridiagonal [2 -1 0; -1 2 -1; 0 -1 2]
        for i in 0..3 {
            let k = p.position(i, i).unwrap();
            a.values_mut()[k] = 2.0;
        }
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            let k = p.position(i, j).unwrap();
            a.values_mut()[k] = -1.0;
        }
        let x = [1.0, 2.0, 3.0];
        let mut y = [0.0; 3];
        a.matvec(&x, &mut y);
        assert_eq!(y, [0.0, 0.0, 4.0]);
        assert_eq!(a.quadratic_form(&x), 12.0);
        assert_eq!(a.asymmetry(), 0.0);
    }
}
