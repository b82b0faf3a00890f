use nalgebra::DMatrix;

use crate::{Error, Result};

/// B-spline basis on a clamped (open-uniform) knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    knots: Vec<f64>,
    degree: usize,
}

impl BSplineBasis {
    /// Knots repeated `degree + 1` times at both ends of `[lo, hi]` with
    /// `n_interior` equally spaced interior knots.
    pub fn open_uniform(lo: f64, hi: f64, n_interior: usize, degree: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidArgument(format!("degenerate spline domain [{lo}, {hi}]")));
        }
        let mut knots = vec![lo; degree + 1];
        let width = hi - lo;
        knots.extend((1..=n_interior).map(|i| lo + width * i as f64 / (n_interior + 1) as f64));
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self { knots, degree })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.n_basis()])
    }

    /// Index `k` of the knot span `[t_k, t_{k+1})` containing `x`; the right
    /// end of the domain belongs to the last non-empty span.
    fn span(&self, x: f64) -> usize {
        let n = self.n_basis();
        if x >= self.knots[n] {
            return n - 1;
        }
        // Largest k in [degree, n-1] with t_k <= x.
        let upper = &self.knots[self.degree + 1..n];
        self.degree + upper.partition_point(|t| *t <= x)
    }

    /// Values of the `degree + 1` basis functions that can be non-zero at
    /// `x`, together with the index of the first one. Uses the triangular
    /// Cox-de Boor recurrence.
    pub fn nonzero(&self, x: f64) -> (usize, Vec<f64>) {
        let p = self.degree;
        let k = self.span(x);
        let t = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[k + 1 - j];
            right[j] = t[k + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (k - p, n)
    }

    /// All basis functions at `x`; zero outside the domain.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.n_basis()];
        let (lo, hi) = self.domain();
        if x < lo || x > hi {
            return row;
        }
        let (first, values) = self.nonzero(x);
        row[first..first + values.len()].copy_from_slice(&values);
        row
    }

    pub fn design_matrix(&self, xs: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(xs.len(), self.n_basis());
        for (i, &x) in xs.iter().enumerate() {
            let (lo, hi) = self.domain();
            if x < lo || x > hi {
                continue;
            }
            let (first, values) = self.nonzero(x);
            for (j, v) in values.into_iter().enumerate() {
                m[(i, first + j)] = v;
            }
        }
        m
    }
}

/// Basis over `[first day, last day]` of a sorted day grid, and its design
/// matrix at the grid points.
pub fn build_bspline_basis(
    day_grid: &[f64],
    n_interior_knots: usize,
    degree: usize,
) -> Result<(BSplineBasis, DMatrix<f64>)> {
    let (Some(&lo), Some(&hi)) = (day_grid.first(), day_grid.last()) else {
        return Err(Error::InvalidArgument("empty day grid".into()));
    };
    if n_interior_knots == 0 {
        return Err(Error::InvalidArgument("at least one interior knot is required".into()));
    }
    if day_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("day grid must be sorted".into()));
    }
    let basis = BSplineBasis::open_uniform(lo, hi, n_interior_knots, degree)?;
    let design = basis.design_matrix(day_grid);
    Ok((basis, design))
}
