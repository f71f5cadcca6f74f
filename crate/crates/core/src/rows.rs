//! Row access shared by the sparse behavior matrix and dense feature lists, so
//! the logistic trainers do not care which one they are fed.

use alloc::vec::Vec;

use crate::graph::BehaviorMatrix;

pub(crate) trait Rows {
    fn n_cols(&self) -> usize;
    fn row_dot(&self, i: usize, w: &[f64]) -> f64;
    /// `out += alpha * row_i`
    fn row_axpy(&self, i: usize, alpha: f64, out: &mut [f64]);
    fn row_sq_norm(&self, i: usize) -> f64;
}

impl Rows for BehaviorMatrix {
    fn n_cols(&self) -> usize {
        self.object_count()
    }

    fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        self.row(i).map(|(j, v)| v * w[j]).sum()
    }

    fn row_axpy(&self, i: usize, alpha: f64, out: &mut [f64]) {
        for (j, v) in self.row(i) {
            out[j] += alpha * v;
        }
    }

    fn row_sq_norm(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v * v).sum()
    }
}

pub(crate) struct Dense<'a> {
    pub rows: &'a [Vec<f64>],
    pub cols: usize,
}

impl Rows for Dense<'_> {
    fn n_cols(&self) -> usize {
        self.cols
    }

    fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        crate::math::dot(&self.rows[i], w)
    }

    fn row_axpy(&self, i: usize, alpha: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(&self.rows[i]) {
            *o += alpha * v;
        }
    }

    fn row_sq_norm(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|v| v * v).sum()
    }
}
