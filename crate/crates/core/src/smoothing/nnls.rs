//! Active-set (Lawson-Hanson) solver for non-negative quadratic programs
//! given in normal-equation form:
//!
//! ```text
//! minimize ½ xᵀ G x − hᵀ x   subject to x ≥ 0
//! ```
//!
//! with `G = AᵀA` symmetric positive definite and `h = Aᵀb`, which is the
//! non-negative least-squares problem `min ‖A x − b‖²` for any factor `A`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnlsOptions {
    /// Relative KKT tolerance.
    pub tol: f64,
    /// Outer iterations allowed per unknown.
    pub iterations_per_unknown: usize,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            iterations_per_unknown: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Largest KKT violation, relative to the problem scale.
    pub kkt_residual: f64,
}

/// Solves `G[P,P] z = h[P]` for the passive set `P`.
fn solve_passive(g: &DMatrix<f64>, h: &DVector<f64>, passive: &[usize]) -> Result<DVector<f64>> {
    let sub = g.select_rows(passive).select_columns(passive);
    let rhs = h.select_rows(passive);
    if let Some(chol) = sub.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    sub.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular passive-set system".into()))
}

fn scale_of(g: &DMatrix<f64>, h: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let h_inf = h.amax();
    let gx = g.amax() * x.amax();
    h_inf.max(gx).max(f64::MIN_POSITIVE)
}

/// Largest violation of the KKT conditions at `x`, relative to the problem
/// scale: stationarity on the positive coordinates, dual feasibility
/// (gradient pointing outwards) on the zero coordinates.
pub fn kkt_residual(g: &DMatrix<f64>, h: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let w = h - g * x;
    let worst = x
        .iter()
        .zip(w.iter())
        .map(|(xi, wi)| if *xi > 0.0 { wi.abs() } else { wi.max(0.0) })
        .fold(0.0, f64::max);
    worst / scale_of(g, h, x)
}

pub fn nnls_gram(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    warm_start: Option<&[usize]>,
    options: NnlsOptions,
) -> Result<NnlsSolution> {
    let n = h.len();
    if g.shape() != (n, n) {
        return Err(Error::InvalidArgument("gram matrix and rhs dimensions differ".into()));
    }
    let max_iter = options.iterations_per_unknown * n.max(1);
    let mut x = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::new();

    // A warm start is accepted only once it is feasible with x > 0 on it,
    // which is what the main loop requires.
    if let Some(start) = warm_start {
        let mut candidate: Vec<usize> = start.iter().copied().filter(|&j| j < n).collect();
        candidate.sort_unstable();
        candidate.dedup();
        for _ in 0..n {
            if candidate.is_empty() {
                break;
            }
            let z = solve_passive(g, h, &candidate)?;
            if z.iter().all(|v| *v > 0.0) {
                for (k, &j) in candidate.iter().enumerate() {
                    x[j] = z[k];
                }
                passive = candidate;
                break;
            }
            candidate = candidate
                .iter()
                .zip(z.iter())
                .filter(|(_, v)| **v > 0.0)
                .map(|(j, _)| *j)
                .collect();
        }
    }

    let mut excluded = vec![false; n];
    let mut iterations = 0;
    loop {
        let w = h - g * &x;
        let tol = options.tol * scale_of(g, h, &x);
        let entering = (0..n)
            .filter(|j| !excluded[*j] && !passive.contains(j))
            .filter(|j| w[*j] > tol)
            .max_by(|a, b| w[*a].total_cmp(&w[*b]).then(b.cmp(a)));
        let Some(j) = entering else {
            break;
        };
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::NoConvergence {
                iterations: max_iter,
                residual: kkt_residual(g, h, &x),
            });
        }
        passive.push(j);
        passive.sort_unstable();

        let mut first_step = true;
        loop {
            let z = solve_passive(g, h, &passive)?;
            if z.iter().all(|v| *v > 0.0) {
                x.fill(0.0);
                for (k, &p) in passive.iter().enumerate() {
                    x[p] = z[k];
                }
                excluded.fill(false);
                break;
            }
            let k_entering = passive.binary_search(&j).expect("entering index is passive");
            if first_step && z[k_entering] <= 0.0 {
                // Rounding made the entering direction useless; skip it
                // until the iterate changes.
                passive.remove(k_entering);
                excluded[j] = true;
                break;
            }
            first_step = false;

            // Move from x towards z until the first coordinate hits zero.
            let (mut alpha, mut blocking) = (f64::INFINITY, passive[0]);
            for (k, &p) in passive.iter().enumerate() {
                if z[k] <= 0.0 {
                    let step = x[p] / (x[p] - z[k]);
                    if step < alpha {
                        alpha = step;
                        blocking = p;
                    }
                }
            }
            for (k, &p) in passive.iter().enumerate() {
                x[p] += alpha * (z[k] - x[p]);
            }
            x[blocking] = 0.0;
            passive.retain(|&p| x[p] > 0.0);
            for p in 0..n {
                if passive.binary_search(&p).is_err() {
                    x[p] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }

    Ok(NnlsSolution {
        kkt_residual: kkt_residual(g, h, &x),
        x,
        iterations,
    })
}

/// Convenience wrapper for `min ‖A x − b‖²`, `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    let g = a.transpose() * a;
    let h = a.transpose() * b;
    nnls_gram(&g, &h, None, NnlsOptions::default())
}
