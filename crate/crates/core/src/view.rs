//! The individual-centered partial observation of a network.
//!
//! An individual (the center) sees every edge that touches itself or one of
//! its direct neighbors. With `𝒮` the center plus its neighbors, the visible
//! adjacency is `B = SA + AS - SAS` where `S` is the diagonal indicator of
//! `𝒮`: edges inside `𝒮ᶜ × 𝒮ᶜ` are hidden.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::model::AdjacencyMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PartialView {
    b: DMatrix<f64>,
    center: usize,
    /// Sorted members of `𝒮`.
    members: Vec<usize>,
    /// Sorted members of `𝒮ᶜ`.
    outsiders: Vec<usize>,
    in_s: Vec<bool>,
}

impl PartialView {
    /// The view of `center`: `𝒮` is the center and its direct neighbors.
    pub fn build(a: &AdjacencyMatrix, center: usize) -> Result<Self> {
        let n = a.n();
        if center >= n {
            return Err(Error::NodeIndex { index: center, n });
        }
        let mut in_s: Vec<bool> = (0..n).map(|j| a.has_edge(center, j)).collect();
        in_s[center] = true;
        Ok(Self::from_indicator(a, center, in_s))
    }

    /// A view with an arbitrary neighbor set. The center is always added.
    pub fn with_members(a: &AdjacencyMatrix, center: usize, members: &[usize]) -> Result<Self> {
        let n = a.n();
        let mut in_s = vec![false; n];
        for &m in members.iter().chain(std::iter::once(&center)) {
            if m >= n {
                return Err(Error::NodeIndex { index: m, n });
            }
            in_s[m] = true;
        }
        Ok(Self::from_indicator(a, center, in_s))
    }

    /// The full-information view `𝒮 = [n]`.
    pub fn full(a: &AdjacencyMatrix) -> Self {
        let n = a.n();
        Self::from_indicator(a, 0, vec![true; n])
    }

    fn from_indicator(a: &AdjacencyMatrix, center: usize, in_s: Vec<bool>) -> Self {
        let n = a.n();
        let members: Vec<usize> = (0..n).filter(|&i| in_s[i]).collect();
        let outsiders: Vec<usize> = (0..n).filter(|&i| !in_s[i]).collect();
        let src = a.matrix();
        let b = DMatrix::from_fn(n, n, |i, j| {
            if in_s[i] || in_s[j] {
                src[(i, j)]
            } else {
                0.0
            }
        });
        PartialView {
            b,
            center,
            members,
            outsiders,
            in_s,
        }
    }

    pub fn n(&self) -> usize {
        self.in_s.len()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn outsiders(&self) -> &[usize] {
        &self.outsiders
    }

    pub fn contains(&self, i: usize) -> bool {
        self.in_s[i]
    }

    pub fn n_s(&self) -> usize {
        self.members.len()
    }

    /// `n - n_S`.
    pub fn n_outside(&self) -> usize {
        self.outsiders.len()
    }

    pub fn r_s(&self) -> f64 {
        self.n_s() as f64 / self.n() as f64
    }

    pub fn is_full(&self) -> bool {
        self.outsiders.is_empty()
    }

    /// Diagonal of `S` as a 0/1 vector.
    pub fn indicator(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.in_s.iter().map(|&s| if s { 1.0 } else { 0.0 }))
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.in_s[i] || self.in_s[j]
    }

    /// Number of observed unordered off-diagonal pairs.
    pub fn observed_pair_count(&self) -> usize {
        let ns = self.n_s();
        ns * (ns - 1) / 2 + ns * self.n_outside()
    }

    /// Visits each observed unordered pair `(i, j)`, `i != j`, exactly once.
    /// Pairs inside `𝒮ᶜ × 𝒮ᶜ` are never touched.
    pub fn for_each_observed_pair(&self, mut f: impl FnMut(usize, usize)) {
        for (a, &i) in self.members.iter().enumerate() {
            for &j in &self.members[a + 1..] {
                f(i, j);
            }
            for &j in &self.outsiders {
                f(i, j);
            }
        }
    }

    /// `S(M) = SM + MS - SMS`: keeps rows and columns indexed by `𝒮`,
    /// zeroes the `𝒮ᶜ × 𝒮ᶜ` block.
    pub fn mask(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::dim(
                "M",
                format!("{n}x{n}"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let mut out = m.clone();
        for &j in &self.outsiders {
            for &i in &self.outsiders {
                out[(i, j)] = 0.0;
            }
        }
        Ok(out)
    }

    /// `JZ`: subtracts the mean of the neighbor rows from the neighbor rows,
    /// and the mean of the non-neighbor rows from the non-neighbor rows.
    pub fn center_rows(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.nrows() != self.n() {
            return Err(Error::dim(
                "Z",
                format!("{} rows", self.n()),
                format!("{} rows", z.nrows()),
            ));
        }
        let mut out = z.clone();
        for group in [&self.members, &self.outsiders] {
            if group.is_empty() {
                continue;
            }
            let inv = 1.0 / group.len() as f64;
            for c in 0..z.ncols() {
                let mean = group.iter().map(|&i| z[(i, c)]).sum::<f64>() * inv;
                for &i in group.iter() {
                    out[(i, c)] -= mean;
                }
            }
        }
        Ok(out)
    }

    /// Row/column block selections of a square matrix by `𝒮` / `𝒮ᶜ`.
    pub fn blocks(&self, m: &DMatrix<f64>) -> Blocks {
        let s = &self.members;
        let o = &self.outsiders;
        Blocks {
            ss: m.select_rows(s.iter()).select_columns(s.iter()),
            so: m.select_rows(s.iter()).select_columns(o.iter()),
            os: m.select_rows(o.iter()).select_columns(s.iter()),
            oo: m.select_rows(o.iter()).select_columns(o.iter()),
        }
    }

    /// Rows of `m` indexed by `𝒮`.
    pub fn rows_in(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.select_rows(self.members.iter())
    }

    /// Rows of `m` indexed by `𝒮ᶜ`.
    pub fn rows_out(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.select_rows(self.outsiders.iter())
    }

    /// Zero-copy access to rows of `𝒮` when they are contiguous, as they are
    /// for the full view.
    pub fn rows_in_view<'a>(&self, m: &'a DMatrix<f64>) -> Option<DMatrixView<'a, f64>> {
        let first = *self.members.first()?;
        let last = *self.members.last()?;
        (last - first + 1 == self.members.len()).then(|| m.rows(first, self.members.len()))
    }
}

/// `M_{S,S}`, `M_{S,I-S}`, `M_{I-S,S}` and `M_{I-S,I-S}`.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub ss: DMatrix<f64>,
    pub so: DMatrix<f64>,
    pub os: DMatrix<f64>,
    pub oo: DMatrix<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path4() -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn path_graph_view() {
        let v = PartialView::build(&path4(), 0).unwrap();
        assert_eq!(v.members(), &[0, 1]);
        assert_eq!(v.b()[(0, 1)], 1.0);
        assert_eq!(v.b()[(1, 2)], 1.0);
        assert_eq!(v.b()[(2, 1)], 1.0);
        assert_eq!(v.b()[(2, 3)], 0.0);
        assert_eq!(v.observed_pair_count(), 1 + 2 * 2);
    }

    #[test]
    fn hub_center_sees_everything() {
        let a = AdjacencyMatrix::from_edges(4, [(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        let v = PartialView::build(&a, 0).unwrap();
        assert!(v.is_full());
        assert_eq!(v.b(), a.matrix());
        assert_eq!(v.r_s(), 1.0);
    }

    #[test]
    fn isolated_center() {
        let a = AdjacencyMatrix::from_edges(4, [(1, 2), (2, 3)]).unwrap();
        let v = PartialView::build(&a, 0).unwrap();
        assert_eq!(v.members(), &[0]);
        assert!(v.b().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn center_out_of_range() {
        assert!(matches!(
            PartialView::build(&path4(), 4),
            Err(Error::NodeIndex { index: 4, n: 4 })
        ));
    }

    #[test]
    fn mask_of_ones() {
        let a = AdjacencyMatrix::from_edges(3, [(0, 1)]).unwrap();
        let v = PartialView::build(&a, 0).unwrap();
        let m = v.mask(&DMatrix::from_element(3, 3, 1.0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if (i, j) == (2, 2) { 0.0 } else { 1.0 };
                assert_eq!(m[(i, j)], want);
            }
        }
        assert!(v.mask(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn centering_by_group() {
        let v = PartialView::build(&path4(), 0).unwrap();
        let z = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let c = v.center_rows(&z).unwrap();
        assert_eq!(c.as_slice(), &[-0.5, 0.5, -0.5, 0.5]);
        assert_eq!(v.center_rows(&c).unwrap(), c);
    }

    #[test]
    fn full_view_centering_is_global() {
        let v = PartialView::full(&path4());
        let z = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 7.0]);
        let c = v.center_rows(&z).unwrap();
        assert_eq!(c.as_slice(), &[-2.25, -1.25, -0.25, 3.75]);
    }

    #[test]
    fn singleton_group_is_zeroed() {
        let a = AdjacencyMatrix::from_edges(3, [(1, 2)]).unwrap();
        let v = PartialView::build(&a, 0).unwrap();
        let z = DMatrix::from_column_slice(3, 1, &[5.0, 1.0, 2.0]);
        let c = v.center_rows(&z).unwrap();
        assert_eq!(c[(0, 0)], 0.0);
    }

    #[test]
    fn block_selections() {
        let a = AdjacencyMatrix::from_edges(3, [(1, 2)]).unwrap();
        let v = PartialView::build(&a, 0).unwrap();
        let m = DMatrix::from_row_slice(3, 3, &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let bl = v.blocks(&m);
        assert_eq!(bl.so, DMatrix::from_row_slice(1, 2, &[2., 3.]));
        assert_eq!(bl.os, DMatrix::from_row_slice(2, 1, &[4., 7.]));
        assert_eq!(bl.oo.shape(), (2, 2));

        let full = PartialView::full(&a);
        let bl = full.blocks(&m);
        assert_eq!(bl.oo.shape(), (0, 0));
        assert_eq!(bl.so.shape(), (3, 0));
        assert_eq!(full.rows_out(&m).nrows(), 0);
        assert_eq!(full.rows_in_view(&m).unwrap().nrows(), 3);
    }

    #[test]
    fn identity_partition_reassembles() {
        let a = AdjacencyMatrix::from_edges(5, [(0, 2), (0, 4), (1, 3)]).unwrap();
        let v = PartialView::build(&a, 0).unwrap();
        let id = DMatrix::<f64>::identity(5, 5);
        let bl = v.blocks(&id);
        let mut back = DMatrix::zeros(5, 5);
        for (a_, &i) in v.members().iter().enumerate() {
            for (b_, &j) in v.members().iter().enumerate() {
                back[(i, j)] = bl.ss[(a_, b_)];
            }
            for (b_, &j) in v.outsiders().iter().enumerate() {
                back[(i, j)] = bl.so[(a_, b_)];
                back[(j, i)] = bl.os[(b_, a_)];
            }
        }
        for (a_, &i) in v.outsiders().iter().enumerate() {
            for (b_, &j) in v.outsiders().iter().enumerate() {
                back[(i, j)] = bl.oo[(a_, b_)];
            }
        }
        assert_eq!(back, id);
    }
}
