use rayon::prelude::*;

use crate::scalar::Real;

const PAR_ROWS: usize = 16_384;

/// Square matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        CsrMatrix { n, row_ptr: vec![0; n + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).fold(T::zero(), |a, b| a + b)
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`. Rows are processed in parallel for large matrices; each row sums in a
    /// fixed order so the result does not depend on the thread count.
    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        let row = |i: usize| {
            let mut s = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            s
        };
        if self.n >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * (T::one() + v.abs())))
    }

    /// `self + scale * other` on the union of both patterns.
    pub fn add_scaled(&self, other: &CsrMatrix<T>, scale: T) -> CsrMatrix<T> {
        assert_eq!(self.n, other.n);
        let mut b = TripletBuilder::with_capacity(self.n, self.nnz() + other.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                b.add(i, j, v);
            }
            for (j, v) in other.row(i) {
                b.add(i, j, scale * v);
            }
        }
        b.build()
    }

    /// `self + diag(d)`.
    pub fn add_diagonal(&self, d: &[T]) -> CsrMatrix<T> {
        let mut b = TripletBuilder::with_capacity(self.n, self.nnz() + self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                b.add(i, j, v);
            }
            b.add(i, i, d[i]);
        }
        b.build()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut m = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        m
    }
}

/// Coordinate-format accumulator; duplicate entries are summed on `build`.
#[derive(Debug, Clone)]
pub struct TripletBuilder<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> TripletBuilder<T> {
    pub fn new(n: usize) -> Self {
        TripletBuilder { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletBuilder { n, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i, j, v));
    }

    /// Adds the symmetric two-cell coupling `k (u_i - u_j)` to rows `i` and `j`.
    #[inline]
    pub fn couple(&mut self, i: usize, j: usize, k: T) {
        self.add(i, i, k);
        self.add(i, j, -k);
        self.add(j, j, k);
        self.add(j, i, -k);
    }

    pub fn build(self) -> CsrMatrix<T> {
        // bucket by row (stable), then a stable sort inside each short row keeps the
        // summation order of duplicates deterministic
        let n = self.n;
        let mut start = vec![0usize; n + 1];
        for &(i, _, _) in &self.entries {
            start[i + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut bucket = vec![(0usize, T::zero()); self.entries.len()];
        for (i, j, v) in self.entries {
            bucket[fill[i]] = (j, v);
            fill[i] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(bucket.len());
        let mut values: Vec<T> = Vec::with_capacity(bucket.len());
        for i in 0..n {
            let row = &mut bucket[start[i]..start[i + 1]];
            row.sort_by_key(|&(j, _)| j);
            let mut last = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }
}

/// Heat exchanged with the outside of the domain through the outer boundary:
/// inflow `= sum(rhs) - sum(diag * θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTerms<T> {
    pub diag: Vec<T>,
    pub rhs: Vec<T>,
}

impl<T: Real> BoundaryTerms<T> {
    pub fn zeros(n: usize) -> Self {
        BoundaryTerms { diag: vec![T::zero(); n], rhs: vec![T::zero(); n] }
    }

    pub fn inflow(&self, theta: &[T]) -> T {
        let mut s = T::zero();
        for i in 0..self.rhs.len() {
            s += self.rhs[i] - self.diag[i] * theta[i];
        }
        s
    }

    pub fn add(&mut self, other: &BoundaryTerms<T>) {
        for i in 0..self.rhs.len() {
            self.rhs[i] += other.rhs[i];
            self.diag[i] += other.diag[i];
        }
    }
}

/// Assembled operator `A θ = b` in cell-integrated (finite-volume balance) form.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    /// The constant vector spans the nullspace (pure Neumann problem).
    pub singular: bool,
    pub symmetric: bool,
    pub boundary: BoundaryTerms<T>,
}

impl<T: Real> SparseSystem<T> {
    pub fn n(&self) -> usize {
        self.matrix.n
    }

    pub fn zeros(n: usize) -> Self {
        SparseSystem {
            matrix: CsrMatrix::zeros(n),
            rhs: vec![T::zero(); n],
            singular: true,
            symmetric: true,
            boundary: BoundaryTerms::zeros(n),
        }
    }

    /// Sum of two systems on the same unknowns.
    pub fn combine(&self, other: &SparseSystem<T>) -> SparseSystem<T> {
        let mut boundary = self.boundary.clone();
        boundary.add(&other.boundary);
        SparseSystem {
            matrix: self.matrix.add_scaled(&other.matrix, T::one()),
            rhs: self.rhs.iter().zip(&other.rhs).map(|(a, b)| *a + *b).collect(),
            singular: self.singular && other.singular,
            symmetric: self.symmetric && other.symmetric,
            boundary,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::<f64>::new(2);
        b.couple(0, 1, 2.0);
        b.add(0, 0, 1.0);
        let m = b.build();
        assert_eq!(m.to_dense(), vec![vec![3.0, -2.0], vec![-2.0, 2.0]]);
        assert_eq!(m.nnz(), 4);
    }

    #[test]
    fn matvec_matches_dense() {
        let mut b = TripletBuilder::<f64>::new(3);
        b.add(0, 2, 1.5);
        b.add(1, 0, -2.0);
        b.add(2, 2, 4.0);
        let m = b.build();
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]), vec![4.5, -2.0, 12.0]);
    }
}
