//! Spectral data model: wavelength grids, sampled spectra, sensor sets and
//! filter parameterizations.
//!
//! Every spectral quantity in the crate lives on a uniform [`SpectralGrid`],
//! by default 400–700 nm at 10 nm (31 samples). Sensor sets are stored as
//! `n × 3` matrices with one row per wavelength, wavelengths ascending.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that grid parameters are integral.
const GRID_EPS: f64 = 1e-9;

/// Smallest singular value, relative to the largest, for a matrix to count as full rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    start: f64,
    step: f64,
    n: usize,
}

impl SpectralGrid {
    pub const DEFAULT_START: f64 = 400.0;
    pub const DEFAULT_END: f64 = 700.0;
    pub const DEFAULT_STEP: f64 = 10.0;

    /// Builds a grid from its endpoints. `(end - start) / step` must be a whole number.
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && step.is_finite()) {
            return Err(Error::InvalidArgument("grid parameters must be finite".into()));
        }
        if !(start < end) || !(step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid needs start < end and step > 0 (got {start}..{end} step {step})"
            )));
        }
        let intervals = (end - start) / step;
        let rounded = intervals.round();
        if (intervals - rounded).abs() > GRID_EPS * rounded.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "grid {start}..{end} is not an integral number of {step} nm steps"
            )));
        }
        Ok(Self {
            start,
            step,
            n: rounded as usize + 1,
        })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.wavelength(self.n - 1)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn wavelength(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.wavelength(i))
    }

    /// True when `other` lies within this grid's wavelength range.
    pub fn covers(&self, other: &SpectralGrid) -> bool {
        let slack = GRID_EPS * self.step;
        other.start() >= self.start() - slack && other.end() <= self.end() + slack
    }

    fn describe(&self) -> String {
        format!("{}..{} nm step {}", self.start(), self.end(), self.step)
    }
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self {
            start: Self::DEFAULT_START,
            step: Self::DEFAULT_STEP,
            n: 31,
        }
    }
}

/// A sampled spectral quantity (sensitivity, transmittance or relative power).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: SpectralGrid,
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: SpectralGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite spectral value at {} nm",
                grid.wavelength(i)
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: SpectralGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Resamples `spectrum` onto `target` by piecewise-linear interpolation.
///
/// Target wavelengths that coincide with source samples copy the source value
/// exactly. No extrapolation: the target range must lie inside the source range.
pub fn resample(spectrum: &Spectrum, target: &SpectralGrid) -> Result<Spectrum> {
    let source = spectrum.grid();
    if source == target {
        return Ok(spectrum.clone());
    }
    if !source.covers(target) {
        return Err(Error::OutOfRange {
            requested: target.describe(),
            available: source.describe(),
        });
    }
    let src = spectrum.values();
    let last = source.len() - 1;
    let values = target
        .wavelengths()
        .map(|wl| {
            let pos = ((wl - source.start()) / source.step()).clamp(0.0, last as f64);
            let nearest = pos.round();
            if (pos - nearest).abs() <= GRID_EPS {
                return src[nearest as usize];
            }
            let i = pos.floor() as usize;
            let t = pos - i as f64;
            src[i] * (1.0 - t) + src[i + 1] * t
        })
        .collect();
    Spectrum::new(*target, values)
}

/// Sensitivities of a trichromatic sensor (camera `Q` or observer `X`), one row per wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    grid: SpectralGrid,
    matrix: DMatrix<f64>,
    label: String,
}

impl SensorSet {
    pub const CHANNELS: usize = 3;

    /// Wraps an `n × 3` matrix. Rank is not checked here; see [`full_rank_check`].
    pub fn new(grid: SpectralGrid, matrix: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if matrix.nrows() != grid.len() || matrix.ncols() != Self::CHANNELS {
            return Err(Error::GridMismatch(format!(
                "sensor set `{label}` is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                grid.len(),
                Self::CHANNELS
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sensor set `{label}` has non-finite entries"
            )));
        }
        Ok(Self { grid, matrix, label })
    }

    /// Builds a sensor set from three channel spectra sharing a grid.
    pub fn from_channels(channels: &[Spectrum; 3], label: impl Into<String>) -> Result<Self> {
        let grid = *channels[0].grid();
        if channels.iter().any(|c| *c.grid() != grid) {
            return Err(Error::GridMismatch("channels are on different grids".into()));
        }
        let matrix = DMatrix::from_fn(grid.len(), 3, |i, j| channels[j].values()[i]);
        Self::new(grid, matrix, label)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_full_rank(&self) -> bool {
        full_rank_check(&self.matrix)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.matrix.iter().all(|&v| v >= 0.0)
    }

    /// Right-multiplies by a 3×3 matrix, keeping the grid.
    pub fn recombined(&self, m: &DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        Self::new(self.grid, &self.matrix * m, label)
    }

    /// Effective sensitivities `diag(f) · Q` of this sensor behind a filter.
    pub fn filtered(&self, filter: &[f64]) -> Result<Self> {
        if filter.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "filter has {} samples, sensor `{}` has {}",
                filter.len(),
                self.label,
                self.grid.len()
            )));
        }
        let mut m = self.matrix.clone();
        for (mut row, &f) in m.row_iter_mut().zip(filter) {
            row *= f;
        }
        Ok(Self {
            grid: self.grid,
            matrix: m,
            label: format!("{}+filter", self.label),
        })
    }
}

/// True iff the smallest singular value exceeds [`RANK_TOLERANCE`] times the largest.
pub fn full_rank_check(matrix: &DMatrix<f64>) -> bool {
    if matrix.is_empty() || matrix.nrows() < matrix.ncols() || matrix.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let sv = matrix.singular_values();
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && min > RANK_TOLERANCE * max
}

/// Physical filter transmittance, `0 < f_i <= 1` at every wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTransmittance {
    grid: SpectralGrid,
    values: DVector<f64>,
}

impl FilterTransmittance {
    pub fn new(grid: SpectralGrid, values: DVector<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "filter has {} samples for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidFilter { index, value });
            }
            if value > 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "transmittance {value} at index {index} exceeds 1"
                )));
            }
        }
        Ok(Self { grid, values })
    }

    /// Neutral filter transmitting everything.
    pub fn ones(grid: SpectralGrid) -> Self {
        Self {
            grid,
            values: DVector::from_element(grid.len(), 1.0),
        }
    }

    /// Scales a positive vector so that its maximum is 1.
    pub fn normalized(grid: SpectralGrid, values: DVector<f64>) -> Result<Self> {
        let max = values.max();
        if let Some(index) = values.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::InvalidFilter {
                index,
                value: values[index],
            });
        }
        Self::new(grid, values / max)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn to_spectrum(&self) -> Spectrum {
        Spectrum {
            grid: self.grid,
            values: self.values.iter().copied().collect(),
        }
    }
}

/// A filter parameterized by basis coefficients, `f = B c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisExpansion {
    basis: DMatrix<f64>,
    coefficients: DVector<f64>,
}

impl BasisExpansion {
    pub fn new(basis: DMatrix<f64>, coefficients: DVector<f64>) -> Result<Self> {
        if basis.ncols() != coefficients.len() {
            return Err(Error::InvalidArgument(format!(
                "basis has {} columns but {} coefficients were given",
                basis.ncols(),
                coefficients.len()
            )));
        }
        if basis.ncols() > basis.nrows() || !full_rank_check(&basis) {
            return Err(Error::Singular {
                label: "filter basis".into(),
            });
        }
        Ok(Self { basis, coefficients })
    }

    /// Least-squares coefficients for `filter` in `basis`.
    pub fn fit(basis: DMatrix<f64>, filter: &DVector<f64>) -> Result<Self> {
        let coefficients = least_squares(&basis, filter)?;
        Self::new(basis, coefficients)
    }

    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn filter(&self) -> DVector<f64> {
        &self.basis * &self.coefficients
    }
}

/// First `k` columns of the DCT-II cosine family on `n` samples, unnormalized.
///
/// Column `j` (0-based) holds `cos(pi * j * (i + 1/2) / n)`; column 0 is all ones.
pub fn cosine_basis(n: usize, k: usize) -> Result<DMatrix<f64>> {
    if k < 1 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cosine basis needs 1 <= k <= n (got n={n}, k={k})"
        )));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| {
        (PI * j as f64 * (i as f64 + 0.5) / n as f64).cos()
    }))
}

/// Solves `min ||A x - b||` through a column-pivot-free QR of `A`.
pub(crate) fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = least_squares_multi(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(x.column(0).into_owned())
}

pub(crate) fn least_squares_multi(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() || a.nrows() < a.ncols() || !full_rank_check(a) {
        return Err(Error::Singular {
            label: "least-squares design matrix".into(),
        });
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Singular {
            label: "least-squares design matrix".into(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fine_grid() -> SpectralGrid {
        SpectralGrid::new(400.0, 700.0, 1.0).unwrap()
    }

    #[test]
    fn default_grid_has_31_samples() {
        let g = SpectralGrid::default();
        assert_eq!(g.len(), 31);
        assert_eq!(g.end(), 700.0);
        assert_eq!(g, SpectralGrid::new(400.0, 700.0, 10.0).unwrap());
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(SpectralGrid::new(700.0, 400.0, 10.0).is_err());
        assert!(SpectralGrid::new(400.0, 700.0, 0.0).is_err());
        assert!(SpectralGrid::new(400.0, 705.0, 10.0).is_err());
    }

    #[test]
    fn resample_identity() {
        let g = SpectralGrid::default();
        let s = Spectrum::new(g, (0..31).map(|i| (i as f64).sin().abs()).collect()).unwrap();
        assert_eq!(resample(&s, &g).unwrap(), s);
    }

    #[test]
    fn resample_constant() {
        let s = Spectrum::constant(fine_grid(), 0.5).unwrap();
        let r = resample(&s, &SpectralGrid::default()).unwrap();
        assert_eq!(r.values().len(), 31);
        assert!(r.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn resample_ramp_midpoint() {
        let g = fine_grid();
        let s = Spectrum::new(g, g.wavelengths().map(|w| (w - 400.0) / 300.0).collect()).unwrap();
        let r = resample(&s, &SpectralGrid::default()).unwrap();
        assert_abs_diff_eq!(r.values()[15], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn resample_interpolates_between_samples() {
        let src = SpectralGrid::new(400.0, 700.0, 20.0).unwrap();
        let s = Spectrum::new(src, (0..16).map(|i| i as f64).collect()).unwrap();
        let r = resample(&s, &SpectralGrid::default()).unwrap();
        assert_eq!(r.values()[0], 0.0);
        assert_abs_diff_eq!(r.values()[1], 0.5, epsilon = 1e-15);
        assert_eq!(r.values()[30], 15.0);
    }

    #[test]
    fn resample_refuses_extrapolation() {
        let src = SpectralGrid::new(400.0, 680.0, 10.0).unwrap();
        let s = Spectrum::constant(src, 1.0).unwrap();
        assert!(matches!(
            resample(&s, &SpectralGrid::default()),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn cosine_basis_k1_is_ones() {
        let b = cosine_basis(31, 1).unwrap();
        assert_eq!(b.ncols(), 1);
        assert!(b.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cosine_basis_n4_second_column() {
        let b = cosine_basis(4, 2).unwrap();
        let expected = [PI / 8.0, 3.0 * PI / 8.0, 5.0 * PI / 8.0, 7.0 * PI / 8.0].map(f64::cos);
        for i in 0..4 {
            assert_abs_diff_eq!(b[(i, 1)], expected[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn cosine_basis_k8_orthogonal() {
        let b = cosine_basis(31, 8).unwrap();
        let gram = b.transpose() * &b;
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert!(gram[(i, j)].abs() < 1e-12, "({i},{j}) = {}", gram[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn cosine_basis_rejects_bad_k() {
        assert!(cosine_basis(31, 0).is_err());
        assert!(cosine_basis(31, 32).is_err());
    }

    #[test]
    fn rank_check_cases() {
        let mut m = DMatrix::from_fn(31, 3, |i, j| ((i + 1) as f64).powi(j as i32));
        assert!(full_rank_check(&m));
        let c0 = m.column(0).into_owned();
        m.set_column(1, &c0);
        assert!(!full_rank_check(&m));
        assert!(!full_rank_check(&DMatrix::zeros(31, 3)));
    }

    #[test]
    fn filter_validation() {
        let g = SpectralGrid::default();
        assert!(FilterTransmittance::new(g, DVector::from_element(31, 0.5)).is_ok());
        assert!(matches!(
            FilterTransmittance::new(g, DVector::from_element(31, 0.0)),
            Err(Error::InvalidFilter { .. })
        ));
        assert!(FilterTransmittance::new(g, DVector::from_element(31, 1.5)).is_err());
        let f = FilterTransmittance::normalized(g, DVector::from_element(31, 2.0)).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn basis_expansion_reconstructs() {
        let b = cosine_basis(31, 4).unwrap();
        let c = DVector::from_vec(vec![0.6, 0.1, -0.05, 0.02]);
        let e = BasisExpansion::new(b.clone(), c.clone()).unwrap();
        let f = e.filter();
        let refit = BasisExpansion::fit(b, &f).unwrap();
        for (a, b) in refit.coefficients().iter().zip(c.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn resample_is_idempotent(values in prop::collection::vec(0.0f64..2.0, 61)) {
            let src = SpectralGrid::new(400.0, 700.0, 5.0).unwrap();
            let s = Spectrum::new(src, values).unwrap();
            let g = SpectralGrid::default();
            let once = resample(&s, &g).unwrap();
            let twice = resample(&once, &g).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn cosine_columns_pairwise_orthogonal(n in 1usize..=64, kfrac in 0.0f64..1.0) {
            let k = 1 + ((n - 1) as f64 * kfrac) as usize;
            let b = cosine_basis(n, k).unwrap();
            let gram = b.transpose() * &b;
            for i in 0..k {
                for j in 0..i {
                    prop_assert!(gram[(i, j)].abs() < 1e-12);
                }
            }
        }

        #[test]
        fn full_cosine_basis_spans_space(n in 1usize..=40, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let b = cosine_basis(n, n).unwrap();
            let c = least_squares(&b, &v).unwrap();
            let residual = (&b * c - &v).norm();
            prop_assert!(residual < 1e-10);
        }
    }
}
