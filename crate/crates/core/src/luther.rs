//! Luther-condition filter baseline.
//!
//! Finds a filter `f` and a 3×3 correction `M` minimizing
//! `||diag(f) Q M - X||_F` by alternating least squares. Unlike the
//! Vora-Value, this objective depends on which basis of the observer
//! subspace is used as the target.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::optimizer::{default_initial_coefficients, BoxBounds, FeasibleProjector, FEASIBILITY_TOL};
use crate::spectral::{least_squares, least_squares_multi, FilterTransmittance, SensorSet};
use crate::vora::FILTER_EPSILON;

#[derive(Debug, Clone)]
pub struct LutherOptions {
    /// Smooth basis plus transmittance box; `None` leaves every wavelength free.
    pub constraints: Option<(DMatrix<f64>, BoxBounds)>,
    /// Stop when the relative residual change falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub f_floor: f64,
}

impl Default for LutherOptions {
    fn default() -> Self {
        Self {
            constraints: None,
            tol: 1e-8,
            max_iters: 5_000,
            f_floor: FILTER_EPSILON,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LutherSolution {
    /// Physical filter, scaled to a maximum of 1 when the raw solution exceeds 1.
    pub filter: FilterTransmittance,
    pub raw: DVector<f64>,
    pub coefficients: Option<DVector<f64>>,
    /// Linear correction for the raw filter.
    pub correction: DMatrix<f64>,
    pub residual: f64,
    /// Residual after every alternating iteration, starting with the all-ones filter.
    pub residuals: Vec<f64>,
}

fn residual(q: &DMatrix<f64>, x: &DMatrix<f64>, f: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    let mut r = q * m;
    for (mut row, &fi) in r.row_iter_mut().zip(f.iter()) {
        row *= fi;
    }
    (r - x).norm()
}

fn filtered(q: &DMatrix<f64>, f: &DVector<f64>) -> DMatrix<f64> {
    let mut m = q.clone();
    for (mut row, &fi) in m.row_iter_mut().zip(f.iter()) {
        row *= fi;
    }
    m
}

fn solve_correction(q: &DMatrix<f64>, x: &DMatrix<f64>, f: &DVector<f64>, label: &str) -> Result<DMatrix<f64>> {
    least_squares_multi(&filtered(q, f), x).map_err(|_| Error::Singular {
        label: format!("{label} behind Luther filter"),
    })
}

/// Solves for the filter whose effective sensitivities best fit a linear transform of `X`.
pub fn luther_filter(q: &SensorSet, x: &SensorSet, options: &LutherOptions) -> Result<LutherSolution> {
    if q.grid() != x.grid() {
        return Err(Error::GridMismatch(format!(
            "`{}` and `{}` are sampled on different grids",
            q.label(),
            x.label()
        )));
    }
    for s in [q, x] {
        if !s.is_full_rank() {
            return Err(Error::Singular {
                label: s.label().to_string(),
            });
        }
    }
    if !(options.tol > 0.0) || options.max_iters == 0 || !(options.f_floor > 0.0) {
        return Err(Error::InvalidArgument("invalid Luther options".into()));
    }

    let qm = q.matrix();
    let xm = x.matrix();
    let n = q.grid().len();

    let constrained = match &options.constraints {
        Some((basis, bounds)) => {
            if basis.nrows() != n {
                return Err(Error::InvalidArgument(format!(
                    "basis has {} rows, grid has {n}",
                    basis.nrows()
                )));
            }
            let lo = bounds.f_min().max(options.f_floor + FEASIBILITY_TOL);
            let inner = BoxBounds::new(lo.min(bounds.f_max()), bounds.f_max())?;
            let projector = FeasibleProjector::new(basis, inner)?;
            let c0 = default_initial_coefficients(basis, &inner)?;
            Some((projector, c0))
        }
        None => None,
    };

    let (mut f, mut coefficients) = match &constrained {
        Some((projector, c0)) => (projector.basis() * c0, Some(c0.clone())),
        None => (DVector::from_element(n, 1.0), None),
    };
    let mut m = solve_correction(qm, xm, &f, q.label())?;
    let mut current = residual(qm, xm, &f, &m);
    let mut residuals = vec![current];

    for _ in 0..options.max_iters {
        let qmm = qm * &m;
        // Per-wavelength weights: ||row_i(QM)||² and row_i(QM)·row_i(X).
        let w = DVector::from_fn(n, |i, _| qmm.row(i).norm_squared());
        let u = DVector::from_fn(n, |i, _| qmm.row(i).dot(&xm.row(i)));

        match (&constrained, coefficients.as_mut()) {
            (Some((projector, _)), Some(c)) => {
                let basis = projector.basis();
                let sqrt_w = w.map(f64::sqrt);
                let mut weighted = basis.clone();
                for (mut row, &s) in weighted.row_iter_mut().zip(sqrt_w.iter()) {
                    row *= s;
                }
                let rhs = DVector::from_fn(n, |i, _| if sqrt_w[i] > 0.0 { u[i] / sqrt_w[i] } else { 0.0 });
                let target = least_squares(&weighted, &rhs)?;
                let proposal = projector.project(&target)?;
                // The projection is not exact in the weighted metric; keep the
                // residual non-increasing by moving only part way if needed.
                let mut s = 1.0;
                let mut next = proposal.clone();
                loop {
                    let f_next = basis * &next;
                    if residual(qm, xm, &f_next, &m) <= current {
                        *c = next;
                        f = f_next;
                        break;
                    }
                    s *= 0.5;
                    if s < 1e-12 {
                        break;
                    }
                    next = &*c + (&proposal - &*c) * s;
                }
            }
            _ => {
                for i in 0..n {
                    if w[i] > 0.0 {
                        f[i] = (u[i] / w[i]).max(options.f_floor);
                    }
                }
            }
        }

        m = solve_correction(qm, xm, &f, q.label())?;
        let next = residual(qm, xm, &f, &m);
        let change = (current - next).abs() / current.max(f64::MIN_POSITIVE);
        current = next;
        residuals.push(current);
        if change < options.tol {
            break;
        }
    }

    let grid = *q.grid();
    let filter = if f.max() > 1.0 {
        FilterTransmittance::normalized(grid, f.clone())?
    } else {
        FilterTransmittance::new(grid, f.clone())?
    };
    Ok(LutherSolution {
        filter,
        raw: f,
        coefficients,
        correction: m,
        residual: current,
        residuals,
    })
}
