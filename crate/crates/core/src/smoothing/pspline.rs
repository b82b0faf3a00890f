//! Non-negative P-spline smoothing.
//!
//! Minimises `‖y − B c‖² + λ ‖D_k c‖²` subject to `c ≥ 0`. B-splines are
//! non-negative, so non-negative coefficients give a non-negative curve
//! everywhere on the domain, not only at the data points.

use nalgebra::{DMatrix, DVector};

use super::bspline::{build_bspline_basis, BSplineBasis};
use super::nnls::{nnls_gram, NnlsOptions};
use crate::{Error, Result};

pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_PENALTY_ORDER: usize = 2;
pub const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub basis: BSplineBasis,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// Fitted values at the data points.
    pub fitted: Vec<f64>,
    /// Generalized cross-validation score of `lambda`, from the
    /// unconstrained hat matrix.
    pub gcv: f64,
    pub rss: f64,
}

impl SplineFit {
    pub fn knots(&self) -> &[f64] {
        self.basis.knots()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.basis
            .evaluate(x)
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| b * c)
            .sum()
    }
}

/// `order`-th difference operator on `n` coefficients, `(n - order) × n`.
pub fn difference_matrix(n: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(n, n);
    for _ in 0..order {
        let rows = d.nrows();
        if rows < 2 {
            return DMatrix::zeros(0, n);
        }
        d = DMatrix::from_fn(rows - 1, n, |i, j| d[(i + 1, j)] - d[(i, j)]);
    }
    d
}

/// Order-`order` penalty operator for `basis`: divided differences of the
/// coefficients over their Greville abscissae, scaled by the interior knot
/// spacing. Away from the clamped ends this is the plain difference matrix;
/// near the ends it keeps polynomials of degree `< order` penalty-free.
pub fn penalty_matrix(basis: &BSplineBasis, order: usize) -> DMatrix<f64> {
    let n = basis.n_basis();
    let p = basis.degree();
    if p == 0 {
        return difference_matrix(n, order);
    }
    let t = basis.knots();
    let greville: Vec<f64> = (0..n)
        .map(|i| t[i + 1..=i + p].iter().sum::<f64>() / p as f64)
        .collect();
    let (lo, hi) = basis.domain();
    let h = (hi - lo) / (t.len() - 2 * p - 1) as f64;
    let mut d = DMatrix::<f64>::identity(n, n);
    for j in 1..=order {
        let rows = d.nrows();
        if rows < 2 {
            return DMatrix::zeros(0, n);
        }
        d = DMatrix::from_fn(rows - 1, n, |i, c| {
            (d[(i + 1, c)] - d[(i, c)]) * j as f64 * h / (greville[i + j] - greville[i])
        });
    }
    d
}

/// Number of interior knots for a segment of `n_days` days: one per four
/// days, at least 8, at most half the days.
pub fn interior_knots_for(n_days: usize) -> usize {
    (n_days / 4).max(8).min(n_days / 2).max(1)
}

/// Log-spaced λ grid from 1e-3 to 1e6, 19 points.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..19).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

/// Cross products shared by every λ for one data vector.
struct Normal {
    btb: DMatrix<f64>,
    dtd: DMatrix<f64>,
    bty: DVector<f64>,
    y: DVector<f64>,
}

impl Normal {
    fn new(values: &[f64], basis: &BSplineBasis, design: &DMatrix<f64>, penalty_order: usize) -> Result<Self> {
        if values.len() < MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "P-spline fit needs at least {MIN_POINTS} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("values must be finite and non-negative".into()));
        }
        if design.nrows() != values.len() {
            return Err(Error::InvalidArgument(
                "design matrix rows differ from data length".into(),
            ));
        }
        let y = DVector::from_column_slice(values);
        let bt = design.transpose();
        if design.ncols() != basis.n_basis() {
            return Err(Error::InvalidArgument(
                "design matrix columns differ from basis size".into(),
            ));
        }
        let d = penalty_matrix(basis, penalty_order);
        Ok(Self {
            btb: &bt * design,
            dtd: d.transpose() * d,
            bty: bt * &y,
            y,
        })
    }

    fn gram(&self, lambda: f64) -> DMatrix<f64> {
        &self.btb + &self.dtd * lambda
    }

    fn rss(&self, design: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
        (&self.y - design * c).norm_squared()
    }

    /// Unconstrained solution, its RSS and the trace of the hat matrix.
    fn unconstrained(&self, design: &DMatrix<f64>, lambda: f64) -> Result<(DVector<f64>, f64, f64)> {
        let chol = self
            .gram(lambda)
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("penalized system not positive definite at λ={lambda}")))?;
        let c = chol.solve(&self.bty);
        let trace = chol.solve(&self.btb).trace();
        Ok((c.clone(), self.rss(design, &c), trace))
    }

    fn gcv(&self, rss: f64, trace: f64) -> f64 {
        let n = self.y.len() as f64;
        n * rss / (n - trace).powi(2)
    }
}

fn constrained(
    normal: &Normal,
    basis: &BSplineBasis,
    design: &DMatrix<f64>,
    lambda: f64,
    warm: &DVector<f64>,
    gcv: f64,
) -> Result<SplineFit> {
    let start: Vec<usize> = warm
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(j, _)| j)
        .collect();
    let sol = nnls_gram(&normal.gram(lambda), &normal.bty, Some(&start), NnlsOptions::default())?;
    let fitted = design * &sol.x;
    Ok(SplineFit {
        basis: basis.clone(),
        coefficients: sol.x.iter().copied().collect(),
        lambda,
        fitted: fitted.iter().copied().collect(),
        gcv,
        rss: normal.rss(design, &sol.x),
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("λ must be positive, got {lambda}")));
    }
    Ok(())
}

/// Non-negative P-spline fit for a fixed λ. `design` is the basis evaluated
/// at the data points.
pub fn fit_nonneg_pspline(
    values: &[f64],
    lambda: f64,
    basis: &BSplineBasis,
    design: &DMatrix<f64>,
    penalty_order: usize,
) -> Result<SplineFit> {
    check_lambda(lambda)?;
    let normal = Normal::new(values, basis, design, penalty_order)?;
    let (c, rss, trace) = normal.unconstrained(design, lambda)?;
    constrained(&normal, basis, design, lambda, &c, normal.gcv(rss, trace))
}

/// Unconstrained penalized fit: coefficients, RSS and effective degrees of
/// freedom.
pub fn fit_unconstrained(
    values: &[f64],
    lambda: f64,
    basis: &BSplineBasis,
    design: &DMatrix<f64>,
    penalty_order: usize,
) -> Result<(Vec<f64>, f64, f64)> {
    check_lambda(lambda)?;
    let normal = Normal::new(values, basis, design, penalty_order)?;
    let (c, rss, trace) = normal.unconstrained(design, lambda)?;
    Ok((c.iter().copied().collect(), rss, trace))
}

/// Picks λ on `lambda_grid` by minimum GCV of the unconstrained fit and
/// returns the non-negative fit at that λ. Scores within a relative 1e-12
/// of the data's mean square count as ties, resolved towards the larger
/// (smoother) λ.
pub fn select_lambda_gcv(
    values: &[f64],
    basis: &BSplineBasis,
    design: &DMatrix<f64>,
    lambda_grid: &[f64],
    penalty_order: usize,
) -> Result<SplineFit> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty λ grid".into()));
    }
    for &l in lambda_grid {
        check_lambda(l)?;
    }
    let normal = Normal::new(values, basis, design, penalty_order)?;
    let mut scored = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let (c, rss, trace) = normal.unconstrained(design, lambda)?;
        let gcv = normal.gcv(rss, trace);
        if gcv.is_finite() {
            scored.push((lambda, gcv, c));
        }
    }
    let best = scored
        .iter()
        .map(|s| s.1)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Numerical("GCV is not finite for any λ".into()))?;
    let tie = 1e-12 * normal.y.norm_squared() / normal.y.len() as f64;
    let (lambda, gcv, c) = scored
        .iter()
        .filter(|s| s.1 <= best + tie)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("best is among the scored");
    constrained(&normal, basis, design, *lambda, c, *gcv)
}

/// Smooths one daily tonnage series on the day grid `0..n` with the default
/// knot rule, cubic basis and second-order penalty.
pub fn smooth_tonnage(values: &[f64], lambda_grid: &[f64]) -> Result<SplineFit> {
    let days: Vec<f64> = (0..values.len()).map(|d| d as f64).collect();
    if days.len() < MIN_POINTS {
        return Err(Error::InvalidArgument(format!(
            "P-spline fit needs at least {MIN_POINTS} values, got {}",
            days.len()
        )));
    }
    let (basis, design) = build_bspline_basis(&days, interior_knots_for(days.len()), DEFAULT_DEGREE)?;
    select_lambda_gcv(values, &basis, &design, lambda_grid, DEFAULT_PENALTY_ORDER)
}
