//! Orthogonal projectors, the Vora-Value subspace similarity and its
//! gradient with respect to a filter placed in front of the camera.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{full_rank_check, SensorSet};

/// Smallest transmittance at which the gradient (which divides by `f`) is evaluated.
pub const FILTER_EPSILON: f64 = 1e-4;

/// Default central-difference step on unit-scale transmittances.
pub const FD_STEP: f64 = 1e-6;

/// Ratio between the exact derivative of the normalized Vora-Value and the
/// ascent direction returned by [`vora_gradient_f`] for a trichromatic observer.
///
/// The direction omits both the factor 2 from the symmetric projector
/// derivative and the 1/3 normalization.
pub const GRADIENT_SCALE: f64 = 2.0 / 3.0;

/// Orthogonal projector onto the column space of a full-column-rank matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: DMatrix<f64>,
    basis: DMatrix<f64>,
}

impl Projector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Orthonormal basis `U` of the range, so that `P = U Uᵀ`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    /// `trace(P_self · P_other)`, computed as `||U_selfᵀ U_other||_F²`.
    pub fn trace_product(&self, other: &Projector) -> f64 {
        (self.basis.transpose() * &other.basis).norm_squared()
    }

    /// Projector onto the orthogonal complement of an orthonormal basis, `I - P`.
    pub fn complement(&self) -> DMatrix<f64> {
        DMatrix::identity(self.matrix.nrows(), self.matrix.nrows()) - &self.matrix
    }
}

/// Builds `A (AᵀA)⁻¹ Aᵀ` from a thin QR factorization of `a`.
pub fn projector(a: &DMatrix<f64>, label: &str) -> Result<Projector> {
    if a.nrows() < a.ncols() || !full_rank_check(a) {
        return Err(Error::Singular {
            label: label.to_string(),
        });
    }
    let basis = a.clone().qr().q();
    let matrix = &basis * basis.transpose();
    Ok(Projector { matrix, basis })
}

pub fn sensor_projector(s: &SensorSet) -> Result<Projector> {
    projector(s.matrix(), s.label())
}

/// Subspace similarity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoraScore(f64);

impl VoraScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<VoraScore> for f64 {
    fn from(s: VoraScore) -> f64 {
        s.0
    }
}

impl std::fmt::Display for VoraScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

fn check_grids(q: &SensorSet, x: &SensorSet) -> Result<()> {
    if q.grid() != x.grid() {
        return Err(Error::GridMismatch(format!(
            "`{}` and `{}` are sampled on different grids",
            q.label(),
            x.label()
        )));
    }
    Ok(())
}

/// `trace(P{Q} P{X}) / trace(P{X})`.
pub fn vora_value(q: &SensorSet, x: &SensorSet) -> Result<VoraScore> {
    check_grids(q, x)?;
    let pq = sensor_projector(q)?;
    let px = sensor_projector(x)?;
    Ok(VoraScore(pq.trace_product(&px) / px.rank() as f64))
}

/// Vora-Value of the effective sensitivities `diag(f) · Q` against `X`.
pub fn filtered_vora_value(filter: &[f64], q: &SensorSet, x: &SensorSet) -> Result<VoraScore> {
    VoraObjective::new(q, x)?.value(filter)
}

/// Ascent direction `vecd((I - P{FQ}) P{X} P{FQ} F⁻¹)` with `F = diag(f)`.
///
/// Parallel to the true gradient of the filtered Vora-Value; the exact
/// derivative is [`GRADIENT_SCALE`] times this vector.
pub fn vora_gradient_f(filter: &[f64], q: &SensorSet, x: &SensorSet) -> Result<DVector<f64>> {
    VoraObjective::new(q, x)?.gradient(filter)
}

/// Chain rule through `f = B c`: `Bᵀ · vora_gradient_f(B c)`.
pub fn vora_gradient_c(
    basis: &DMatrix<f64>,
    coefficients: &DVector<f64>,
    q: &SensorSet,
    x: &SensorSet,
) -> Result<DVector<f64>> {
    VoraObjective::new(q, x)?.gradient_coefficients(basis, coefficients)
}

/// Central differences `(obj(x + h e_i) - obj(x - h e_i)) / 2h` per component.
pub fn fd_gradient_oracle<F>(objective: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = point.to_vec();
    (0..point.len())
        .map(|i| {
            probe[i] = point[i] + h;
            let up = objective(&probe);
            probe[i] = point[i] - h;
            let down = objective(&probe);
            probe[i] = point[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// A camera/observer pair with the observer projector precomputed, for
/// repeated evaluation of the filtered Vora-Value and its gradient.
#[derive(Debug, Clone)]
pub struct VoraObjective<'a> {
    camera: &'a SensorSet,
    observer: Projector,
}

impl<'a> VoraObjective<'a> {
    pub fn new(camera: &'a SensorSet, observer: &SensorSet) -> Result<Self> {
        check_grids(camera, observer)?;
        Ok(Self {
            camera,
            observer: sensor_projector(observer)?,
        })
    }

    pub fn camera(&self) -> &SensorSet {
        self.camera
    }

    pub fn observer(&self) -> &Projector {
        &self.observer
    }

    pub fn n(&self) -> usize {
        self.camera.grid().len()
    }

    fn validate(&self, filter: &[f64]) -> Result<()> {
        if filter.len() != self.n() {
            return Err(Error::GridMismatch(format!(
                "filter has {} samples, camera `{}` has {}",
                filter.len(),
                self.camera.label(),
                self.n()
            )));
        }
        if let Some(index) = filter.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidFilter {
                index,
                value: filter[index],
            });
        }
        Ok(())
    }

    fn filtered_projector(&self, filter: &[f64]) -> Result<Projector> {
        let fq = self.camera.filtered(filter)?;
        sensor_projector(&fq)
    }

    pub fn value(&self, filter: &[f64]) -> Result<VoraScore> {
        self.validate(filter)?;
        let p = self.filtered_projector(filter)?;
        Ok(VoraScore(
            p.trace_product(&self.observer) / self.observer.rank() as f64,
        ))
    }

    pub fn gradient(&self, filter: &[f64]) -> Result<DVector<f64>> {
        self.validate(filter)?;
        if let Some(index) = filter.iter().position(|&v| v < FILTER_EPSILON) {
            return Err(Error::NearSingularFilter {
                index,
                value: filter[index],
                floor: FILTER_EPSILON,
            });
        }
        let p = self.filtered_projector(filter)?;
        // (I - P) Px P, diagonal only: row i of (I - P) Px dotted with column i of P.
        let left = p.complement() * self.observer.matrix();
        let n = self.n();
        Ok(DVector::from_fn(n, |i, _| {
            let d = left.row(i).transpose().dot(&p.matrix().column(i));
            d / filter[i]
        }))
    }

    pub fn gradient_coefficients(
        &self,
        basis: &DMatrix<f64>,
        coefficients: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if basis.ncols() != coefficients.len() || basis.nrows() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "basis is {}x{}, coefficients have {} entries, grid has {}",
                basis.nrows(),
                basis.ncols(),
                coefficients.len(),
                self.n()
            )));
        }
        let f = basis * coefficients;
        let g = self.gradient(f.as_slice())?;
        Ok(basis.transpose() * g)
    }
}
