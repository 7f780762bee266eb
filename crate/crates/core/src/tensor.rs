//! Dense rank-3 tensors with page-wise products.
//!
//! Dimensions are (rows, columns, pages). Each page is stored column-major
//! so it can be viewed as an ordinary matrix.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::error::{Error, Result};
use crate::spatial::{cross_motion, MotionVector};

/// Which pair of dimensions a transpose swaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transpose {
    /// rows ↔ columns (page-wise matrix transpose)
    T12,
    /// rows ↔ pages
    T13,
    /// columns ↔ pages
    T23,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    rows: usize,
    cols: usize,
    pages: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(rows: usize, cols: usize, pages: usize) -> Self {
        Self { rows, cols, pages, data: vec![0.0; rows * cols * pages] }
    }

    pub fn from_fn(rows: usize, cols: usize, pages: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(rows, cols, pages);
        for k in 0..pages {
            for j in 0..cols {
                for i in 0..rows {
                    t.data[i + rows * (j + cols * k)] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Builds a tensor whose page `k` is `pages[k]`.
    pub fn from_pages(pages: &[DMatrix<f64>]) -> Result<Self> {
        let (rows, cols) = pages.first().map(|p| p.shape()).unwrap_or((0, 0));
        let mut t = Self::zeros(rows, cols, pages.len());
        for (k, p) in pages.iter().enumerate() {
            if p.shape() != (rows, cols) {
                return Err(Error::Shape(format!("page {k} is {:?}, expected {:?}", p.shape(), (rows, cols))));
            }
            t.page_mut(k).copy_from(p);
        }
        Ok(t)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.pages)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols && k < self.pages);
        i + self.rows * (j + self.cols * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let n = self.idx(i, j, k);
        self.data[n] = value;
    }

    pub fn page(&self, k: usize) -> DMatrixView<'_, f64> {
        let n = self.rows * self.cols;
        DMatrixView::from_slice(&self.data[n * k..n * (k + 1)], self.rows, self.cols)
    }

    pub fn page_mut(&mut self, k: usize) -> DMatrixViewMut<'_, f64> {
        let n = self.rows * self.cols;
        DMatrixViewMut::from_slice(&mut self.data[n * k..n * (k + 1)], self.rows, self.cols)
    }

    pub fn transpose(&self, which: Transpose) -> Tensor3 {
        let (r, c, p) = self.dims();
        match which {
            Transpose::T12 => Tensor3::from_fn(c, r, p, |i, j, k| self.get(j, i, k)),
            Transpose::T13 => Tensor3::from_fn(p, c, r, |i, j, k| self.get(k, j, i)),
            Transpose::T23 => Tensor3::from_fn(r, p, c, |i, j, k| self.get(i, k, j)),
        }
    }

    /// `(A 𝓣)_{ijk} = Σ_ℓ A_{iℓ} 𝓣_{ℓjk}`.
    pub fn left_mul(a: &DMatrix<f64>, t: &Tensor3) -> Result<Tensor3> {
        if a.ncols() != t.rows {
            return Err(Error::Shape(format!("{}×{} matrix times tensor with {} rows", a.nrows(), a.ncols(), t.rows)));
        }
        let mut out = Tensor3::zeros(a.nrows(), t.cols, t.pages);
        for k in 0..t.pages {
            out.page_mut(k).gemm(1.0, a, &t.page(k), 0.0);
        }
        Ok(out)
    }

    /// `(𝓣 B)_{ijk} = Σ_ℓ 𝓣_{iℓk} B_{ℓj}`.
    pub fn right_mul(t: &Tensor3, b: &DMatrix<f64>) -> Result<Tensor3> {
        if b.nrows() != t.cols {
            return Err(Error::Shape(format!("tensor with {} columns times {}×{} matrix", t.cols, b.nrows(), b.ncols())));
        }
        let mut out = Tensor3::zeros(t.rows, b.ncols(), t.pages);
        for k in 0..t.pages {
            out.page_mut(k).gemm(1.0, &t.page(k), b, 0.0);
        }
        Ok(out)
    }

    /// `Aᵀ 𝓣` without forming the transpose.
    pub fn left_mul_transpose(a: &DMatrix<f64>, t: &Tensor3) -> Result<Tensor3> {
        if a.nrows() != t.rows {
            return Err(Error::Shape(format!("({}×{})ᵀ times tensor with {} rows", a.nrows(), a.ncols(), t.rows)));
        }
        let mut out = Tensor3::zeros(a.ncols(), t.cols, t.pages);
        for k in 0..t.pages {
            out.page_mut(k).gemm_tr(1.0, a, &t.page(k), 0.0);
        }
        Ok(out)
    }

    /// `(Φ×)`: the motion cross-product matrix of column `k` of `phi`
    /// placed on page `k`. For stacked (6n-row) inputs each column is
    /// treated as n stacked motion vectors and the page is block-diagonal.
    pub fn cross_pages(phi: &DMatrix<f64>) -> Tensor3 {
        let n = phi.nrows();
        let mut t = Tensor3::zeros(n, n, phi.ncols());
        for k in 0..phi.ncols() {
            let mut page = t.page_mut(k);
            for b in 0..n / 6 {
                let v = MotionVector::from_iterator(phi.view((6 * b, k), (6, 1)).iter().copied());
                page.view_mut((6 * b, 6 * b), (6, 6)).copy_from(&cross_motion(&v));
            }
        }
        t
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn add_assign(&mut self, other: &Tensor3) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!("{:?} + {:?}", self.dims(), other.dims())));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims(), other.dims(), "tensor shapes differ");
        self.data.iter().zip(&other.data).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Writes `block` with its (0,0,0) entry at `(i0, j0, k0)`.
    pub fn set_block(&mut self, i0: usize, j0: usize, k0: usize, block: &Tensor3) {
        let (r, c, p) = block.dims();
        for k in 0..p {
            for j in 0..c {
                for i in 0..r {
                    let n = self.idx(i0 + i, j0 + j, k0 + k);
                    self.data[n] = block.get(i, j, k);
                }
            }
        }
    }

    /// Copies out the sub-tensor of size `dims` starting at `(i0, j0, k0)`.
    pub fn block(&self, i0: usize, j0: usize, k0: usize, dims: (usize, usize, usize)) -> Tensor3 {
        Tensor3::from_fn(dims.0, dims.1, dims.2, |i, j, k| self.get(i0 + i, j0 + j, k0 + k))
    }

    /// `Σ_j 𝓣_{ijk} x_j`, i.e. contraction over columns: returns rows×pages.
    pub fn contract_columns(&self, x: &[f64]) -> DMatrix<f64> {
        assert_eq!(x.len(), self.cols);
        DMatrix::from_fn(self.rows, self.pages, |i, k| (0..self.cols).map(|j| self.get(i, j, k) * x[j]).sum())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl std::ops::Add for &Tensor3 {
    type Output = Tensor3;
    fn add(self, rhs: &Tensor3) -> Tensor3 {
        let mut out = self.clone();
        out.add_assign(rhs).expect("tensor shapes differ");
        out
    }
}

impl std::ops::Neg for Tensor3 {
    type Output = Tensor3;
    fn neg(mut self) -> Tensor3 {
        self.scale(-1.0);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rand_tensor(seed: u64, r: usize, c: usize, p: usize) -> Tensor3 {
        let mut s = seed;
        Tensor3::from_fn(r, c, p, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    proptest! {
        #[test]
        fn transposes_are_involutions(seed in any::<u64>(), r in 1usize..5, c in 1usize..5, p in 1usize..5) {
            let t = rand_tensor(seed, r, c, p);
            for w in [Transpose::T12, Transpose::T13, Transpose::T23] {
                prop_assert_eq!(t.transpose(w).transpose(w), t.clone());
            }
        }
    }

    #[test]
    fn identity_and_single_page_products() {
        let t = rand_tensor(3, 4, 3, 2);
        assert_eq!(Tensor3::left_mul(&DMatrix::identity(4, 4), &t).unwrap(), t);
        assert_eq!(Tensor3::right_mul(&t, &DMatrix::identity(3, 3)).unwrap(), t);

        let a = DMatrix::from_fn(2, 4, |i, j| (i + 2 * j) as f64);
        let one = rand_tensor(5, 4, 3, 1);
        let prod = Tensor3::left_mul(&a, &one).unwrap();
        assert!((prod.page(0) - &a * one.page(0)).amax() < 1e-15);
    }

    #[test]
    fn page_slicing_oracle() {
        let t = rand_tensor(11, 3, 4, 5);
        let a = DMatrix::from_fn(2, 3, |i, j| (i as f64 - j as f64) * 0.7);
        let b = DMatrix::from_fn(4, 3, |i, j| (i * j) as f64 * 0.3 - 1.0);
        let abt = Tensor3::right_mul(&Tensor3::left_mul(&a, &t).unwrap(), &b).unwrap();
        for p in 0..5 {
            let direct = &a * t.page(p) * &b;
            assert!((abt.page(p) - direct).amax() < 1e-14);
        }
        let at = Tensor3::left_mul_transpose(&a.transpose(), &t).unwrap();
        assert!(at.max_abs_diff(&Tensor3::left_mul(&a, &t).unwrap()) < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let t = rand_tensor(1, 3, 3, 2);
        assert!(Tensor3::left_mul(&DMatrix::zeros(2, 2), &t).is_err());
        assert!(Tensor3::right_mul(&t, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn cross_pages_stacks_columns() {
        let phi = DMatrix::from_fn(12, 2, |i, j| (i as f64 + 1.0) * (j as f64 - 0.5));
        let t = Tensor3::cross_pages(&phi);
        assert_eq!(t.dims(), (12, 12, 2));
        let w = nalgebra::DVector::from_fn(12, |i, _| (i as f64).sin());
        for k in 0..2 {
            let col = phi.column(k).into_owned();
            let direct = crate::spatial::stacked_cross_motion(&col) * &w;
            assert!((t.page(k) * &w - direct).amax() < 1e-14);
        }
    }
}
