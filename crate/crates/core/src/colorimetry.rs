//! Color measurement experiment: render camera RGBs and observer XYZs for a
//! set of illuminants and reflectances, correct RGB to XYZ with a linear map,
//! and summarize CIELAB ΔE*ab errors.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{least_squares_multi, SensorSet, SpectralGrid, Spectrum};
use crate::vora::{filtered_vora_value, VoraScore};

#[derive(Debug, Clone)]
pub struct Scene {
    grid: SpectralGrid,
    illuminants: Vec<Spectrum>,
    reflectances: Vec<Spectrum>,
}

impl Scene {
    pub fn new(illuminants: Vec<Spectrum>, reflectances: Vec<Spectrum>) -> Result<Self> {
        let Some(first) = illuminants.first() else {
            return Err(Error::InvalidArgument("scene needs at least one illuminant".into()));
        };
        if reflectances.is_empty() {
            return Err(Error::InvalidArgument("scene needs at least one reflectance".into()));
        }
        let grid = *first.grid();
        if illuminants.iter().chain(&reflectances).any(|s| *s.grid() != grid) {
            return Err(Error::GridMismatch("scene spectra are on different grids".into()));
        }
        Ok(Self {
            grid,
            illuminants,
            reflectances,
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn illuminants(&self) -> &[Spectrum] {
        &self.illuminants
    }

    pub fn reflectances(&self) -> &[Spectrum] {
        &self.reflectances
    }

    pub fn len(&self) -> usize {
        self.illuminants.len() * self.reflectances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn reflectance_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        DMatrix::from_fn(self.reflectances.len(), n, |j, i| self.reflectances[j].values()[i])
    }
}

/// Sensor responses, one row per (illuminant, reflectance) pair, illuminant-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TriResponse {
    rows: DMatrix<f64>,
    group_size: usize,
}

impl TriResponse {
    pub fn new(rows: DMatrix<f64>, group_size: usize) -> Result<Self> {
        if rows.ncols() != 3 || group_size == 0 || !rows.nrows().is_multiple_of(group_size) {
            return Err(Error::InvalidArgument(format!(
                "response matrix {}x{} cannot be split into groups of {group_size}",
                rows.nrows(),
                rows.ncols()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite response".into()));
        }
        Ok(Self { rows, group_size })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    /// Rows per illuminant.
    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn groups(&self) -> usize {
        self.rows.nrows() / self.group_size
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: &self.rows * factor,
            group_size: self.group_size,
        }
    }
}

/// How camera RGBs are mapped to XYZ before computing errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMode {
    /// One least-squares matrix over every sample.
    #[default]
    Global,
    /// A separate least-squares matrix for each illuminant's samples.
    PerIlluminant,
}

impl std::str::FromStr for CorrectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(CorrectionMode::Global),
            "per-illuminant" => Ok(CorrectionMode::PerIlluminant),
            other => Err(Error::InvalidArgument(format!("unknown correction mode `{other}`"))),
        }
    }
}

/// Responses `Sᵀ diag(L) r` for every illuminant `L` and reflectance `r` (plain sums, no Δλ).
pub fn render_responses(sensor: &SensorSet, scene: &Scene) -> Result<TriResponse> {
    if sensor.grid() != scene.grid() {
        return Err(Error::GridMismatch(format!(
            "sensor `{}` and scene are on different grids",
            sensor.label()
        )));
    }
    let refl = scene.reflectance_matrix();
    let blocks: Vec<DMatrix<f64>> = scene
        .illuminants()
        .par_iter()
        .map(|l| {
            let mut weighted = sensor.matrix().clone();
            for (mut row, &p) in weighted.row_iter_mut().zip(l.values()) {
                row *= p;
            }
            &refl * weighted
        })
        .collect();
    let per = scene.reflectances().len();
    let mut rows = DMatrix::zeros(per * blocks.len(), 3);
    for (k, block) in blocks.iter().enumerate() {
        rows.view_mut((k * per, 0), (per, 3)).copy_from(block);
    }
    TriResponse::new(rows, per)
}

/// Response to a perfect reflecting diffuser under each illuminant, one row per illuminant.
pub fn illuminant_whites(sensor: &SensorSet, scene: &Scene) -> Result<DMatrix<f64>> {
    if sensor.grid() != scene.grid() {
        return Err(Error::GridMismatch("sensor and scene are on different grids".into()));
    }
    let lum = DMatrix::from_fn(scene.illuminants().len(), scene.grid().len(), |k, i| {
        scene.illuminants()[k].values()[i]
    });
    Ok(lum * sensor.matrix())
}

/// `M = argmin ||RGB M - XYZ||_F` over all rows.
pub fn fit_correction(rgb: &TriResponse, xyz: &TriResponse) -> Result<DMatrix<f64>> {
    if rgb.len() != xyz.len() || rgb.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correction needs matching row counts >= 3 (got {} and {})",
            rgb.len(),
            xyz.len()
        )));
    }
    least_squares_multi(rgb.rows(), xyz.rows()).map_err(|_| Error::Singular {
        label: "camera responses".into(),
    })
}

/// Corrected XYZ estimates for every row of `rgb`.
pub fn corrected_estimates(rgb: &TriResponse, xyz: &TriResponse, mode: CorrectionMode) -> Result<DMatrix<f64>> {
    match mode {
        CorrectionMode::Global => Ok(rgb.rows() * fit_correction(rgb, xyz)?),
        CorrectionMode::PerIlluminant => {
            if rgb.len() != xyz.len() || rgb.group_size() != xyz.group_size() {
                return Err(Error::InvalidArgument("responses are grouped differently".into()));
            }
            let per = rgb.group_size();
            let mut out = DMatrix::zeros(rgb.len(), 3);
            for g in 0..rgb.groups() {
                let a = rgb.rows().rows(g * per, per).into_owned();
                let b = xyz.rows().rows(g * per, per).into_owned();
                let m = fit_correction(&TriResponse::new(a.clone(), per)?, &TriResponse::new(b, per)?)?;
                out.view_mut((g * per, 0), (per, 3)).copy_from(&(a * m));
            }
            Ok(out)
        }
    }
}

const LAB_DELTA: f64 = 6.0 / 29.0;

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA.powi(3) {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

/// CIE 1976 L*a*b* of `xyz` relative to `white`.
pub fn xyz_to_lab(xyz: [f64; 3], white: [f64; 3]) -> Result<[f64; 3]> {
    if white.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument(format!("white point {white:?} must be positive")));
    }
    let fx = lab_f(xyz[0] / white[0]);
    let fy = lab_f(xyz[1] / white[1]);
    let fz = lab_f(xyz[2] / white[2]);
    Ok([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)])
}

/// Lab rows for `xyz`, each normalized by the white of its illuminant group.
pub fn lab_rows(xyz: &DMatrix<f64>, whites: &DMatrix<f64>, group_size: usize) -> Result<DMatrix<f64>> {
    if xyz.nrows() != whites.nrows() * group_size {
        return Err(Error::InvalidArgument(format!(
            "{} rows do not match {} whites of {group_size} samples",
            xyz.nrows(),
            whites.nrows()
        )));
    }
    let mut out = DMatrix::zeros(xyz.nrows(), 3);
    for r in 0..xyz.nrows() {
        let w = whites.row(r / group_size);
        let lab = xyz_to_lab([xyz[(r, 0)], xyz[(r, 1)], xyz[(r, 2)]], [w[0], w[1], w[2]])?;
        for c in 0..3 {
            out[(r, c)] = lab[c];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Linear interpolation between order statistics at rank `p (m - 1)` (0-based).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

impl DeltaEStats {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InvalidArgument("no color differences to summarize".into()));
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean: errors.iter().sum::<f64>() / errors.len() as f64,
            median: percentile(&sorted, 0.5),
            p95: percentile(&sorted, 0.95),
            p99: percentile(&sorted, 0.99),
            max: sorted[sorted.len() - 1],
        })
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.mean, self.median, self.p95, self.p99, self.max]
    }
}

/// Per-row Euclidean distances between two Lab matrices.
pub fn delta_e(lab_est: &DMatrix<f64>, lab_ref: &DMatrix<f64>) -> Result<Vec<f64>> {
    if lab_est.shape() != lab_ref.shape() || lab_est.ncols() != 3 {
        return Err(Error::InvalidArgument(format!(
            "Lab shapes differ: {:?} vs {:?}",
            lab_est.shape(),
            lab_ref.shape()
        )));
    }
    Ok((lab_est - lab_ref).row_iter().map(|r| r.norm()).collect())
}

pub fn delta_e_stats(lab_est: &DMatrix<f64>, lab_ref: &DMatrix<f64>) -> Result<DeltaEStats> {
    DeltaEStats::from_errors(&delta_e(lab_est, lab_ref)?)
}

/// Vora-Value and ΔE statistics of one filter+camera configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub vora_value: VoraScore,
    pub delta_e: DeltaEStats,
}

/// Observer-side quantities of a scene, computed once and reused across filters.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    camera: &'a SensorSet,
    observer: &'a SensorSet,
    scene: &'a Scene,
    xyz: TriResponse,
    lab_ref: DMatrix<f64>,
    whites: DMatrix<f64>,
    mode: CorrectionMode,
}

impl<'a> Evaluator<'a> {
    pub fn new(camera: &'a SensorSet, observer: &'a SensorSet, scene: &'a Scene, mode: CorrectionMode) -> Result<Self> {
        if camera.grid() != observer.grid() {
            return Err(Error::GridMismatch(format!(
                "`{}` and `{}` are sampled on different grids",
                camera.label(),
                observer.label()
            )));
        }
        let xyz = render_responses(observer, scene)?;
        let whites = illuminant_whites(observer, scene)?;
        let lab_ref = lab_rows(xyz.rows(), &whites, xyz.group_size())?;
        Ok(Self {
            camera,
            observer,
            scene,
            xyz,
            lab_ref,
            whites,
            mode,
        })
    }

    pub fn reference_xyz(&self) -> &TriResponse {
        &self.xyz
    }

    /// ΔE statistics for arbitrary camera responses to this scene.
    pub fn stats_for_responses(&self, rgb: &TriResponse) -> Result<DeltaEStats> {
        let est = corrected_estimates(rgb, &self.xyz, self.mode)?;
        let lab_est = lab_rows(&est, &self.whites, self.xyz.group_size())?;
        delta_e_stats(&lab_est, &self.lab_ref)
    }

    pub fn delta_e(&self, filter: &[f64]) -> Result<DeltaEStats> {
        let filtered = self.camera.filtered(filter)?;
        let rgb = render_responses(&filtered, self.scene)?;
        self.stats_for_responses(&rgb)
    }

    pub fn evaluate(&self, filter: &[f64]) -> Result<Evaluation> {
        Ok(Evaluation {
            vora_value: filtered_vora_value(filter, self.camera, self.observer)?,
            delta_e: self.delta_e(filter)?,
        })
    }
}

/// Renders the filtered camera and the observer over `scene`, corrects, and scores the filter.
pub fn evaluate_filter(
    filter: &[f64],
    camera: &SensorSet,
    observer: &SensorSet,
    scene: &Scene,
    mode: CorrectionMode,
) -> Result<Evaluation> {
    Evaluator::new(camera, observer, scene, mode)?.evaluate(filter)
}

/// Column sums of a sensor set, used as a quick equal-energy white.
pub fn column_sums(sensor: &SensorSet) -> DVector<f64> {
    sensor.matrix().row_sum().transpose()
}
