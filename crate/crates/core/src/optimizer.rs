//! Gradient ascent on the filtered Vora-Value.
//!
//! Two drivers share one Armijo backtracking line search:
//!
//! * [`gradient_ascent_unconstrained`] moves every transmittance freely,
//!   keeping iterates above a small floor so `F⁻¹` stays bounded.
//! * [`projected_gradient_ascent`] works on cosine-basis coefficients and maps
//!   every trial point back into `f_min <= B c <= f_max`.
//!
//! The ascent direction is the analytic expression from [`crate::vora`],
//! which is parallel to (not equal to) the true gradient. Line search absorbs
//! the constant factor.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{full_rank_check, FilterTransmittance, SensorSet, SpectralGrid};
use crate::vora::{VoraObjective, FILTER_EPSILON};

/// Trial steps below this are treated as a failed line search.
pub const MIN_STEP: f64 = 1e-14;

/// Tolerance for "inside the box" checks on `B c`.
pub const FEASIBILITY_TOL: f64 = 1e-8;

const PROJECTION_ITERS: usize = 100;
const PROJECTION_HARD_TOL: f64 = 1e-6;
const STAGNATION_IMPROVEMENT: f64 = 1e-12;
const STAGNATION_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    /// Stop once `max |gradient| <= eta`.
    pub eta: f64,
    pub max_iters: usize,
    /// Sufficient-increase fraction of the Armijo test.
    pub armijo_c: f64,
    /// Step shrink factor per backtracking trial.
    pub backtrack_beta: f64,
    /// First trial step of every line search.
    pub t0: f64,
    /// Minimum transmittance kept during iteration.
    pub f_floor: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            eta: 1e-6,
            max_iters: 10_000,
            armijo_c: 1e-4,
            backtrack_beta: 0.5,
            t0: 1.0,
            f_floor: FILTER_EPSILON,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && self.max_iters >= 1
            && self.armijo_c > 0.0
            && self.armijo_c < 0.5
            && self.backtrack_beta > 0.0
            && self.backtrack_beta < 1.0
            && self.t0 > 0.0
            && self.f_floor >= FILTER_EPSILON
            && self.f_floor < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid ascent config {self:?}")))
        }
    }
}

/// Scalar transmittance bounds applied at every wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    f_min: f64,
    f_max: f64,
}

impl BoxBounds {
    /// `0 <= f_min <= f_max <= 1`. Equal bounds describe a single uniform filter.
    pub fn new(f_min: f64, f_max: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&f_min) || !(0.0..=1.0).contains(&f_max) || f_min > f_max {
            return Err(Error::InvalidArgument(format!(
                "bounds need 0 <= f_min <= f_max <= 1 (got [{f_min}, {f_max}])"
            )));
        }
        Ok(Self { f_min, f_max })
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.f_min, self.f_max)
    }

    /// Largest amount by which any entry leaves the box.
    pub fn violation(&self, f: &DVector<f64>) -> f64 {
        f.iter()
            .map(|&v| (self.f_min - v).max(v - self.f_max).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, f: &DVector<f64>, tol: f64) -> bool {
        self.violation(f) <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AscentStatus {
    Converged,
    IterationCap,
    Stalled,
}

impl std::fmt::Display for AscentStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AscentStatus::Converged => "converged",
            AscentStatus::IterationCap => "iteration-cap",
            AscentStatus::Stalled => "stalled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub vora_value: f64,
    /// Accepted step size; 0 for the initial record.
    pub step: f64,
    /// `max |gradient|` at the point the step was taken from.
    pub grad_max: f64,
}

/// Per-iteration history of one ascent run. Record 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentTrace {
    pub records: Vec<IterationRecord>,
    pub status: AscentStatus,
}

impl AscentTrace {
    pub fn initial_value(&self) -> f64 {
        self.records[0].vora_value
    }

    pub fn final_value(&self) -> f64 {
        self.records.last().map(|r| r.vora_value).unwrap_or(f64::NAN)
    }

    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    /// Value after `iter` steps, or the final value if the run stopped earlier.
    pub fn value_at(&self, iter: usize) -> f64 {
        self.records
            .get(iter)
            .map(|r| r.vora_value)
            .unwrap_or_else(|| self.final_value())
    }

    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].vora_value >= w[0].vora_value)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,vora_value,step,grad_max")?;
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.iter, r.vora_value, r.step, r.grad_max)?;
        }
        Ok(())
    }
}

/// Outcome of an ascent run.
#[derive(Debug, Clone)]
pub struct AscentResult {
    /// Physical filter: the raw solution scaled to a maximum of 1 when it exceeds 1.
    pub filter: FilterTransmittance,
    /// Iterate as produced by the optimizer.
    pub raw: DVector<f64>,
    /// Basis coefficients for constrained runs.
    pub coefficients: Option<DVector<f64>>,
    pub trace: AscentTrace,
}

impl AscentResult {
    pub fn final_value(&self) -> f64 {
        self.trace.final_value()
    }
}

/// Shrinks `t` from `t0` by `beta` until `accept(t)` holds; 0 if it never does above [`MIN_STEP`].
fn backtrack(t0: f64, beta: f64, mut accept: impl FnMut(f64) -> bool) -> f64 {
    let mut t = t0;
    while t >= MIN_STEP {
        if accept(t) {
            return t;
        }
        t *= beta;
    }
    0.0
}

/// Armijo backtracking along `x + t d`.
///
/// Returns the largest `t = t0 βᵐ` with `obj(x + t d) >= obj(x) + c t ||d||²`,
/// or 0 when none exists above [`MIN_STEP`]. `objective` may return `None`
/// for points outside its domain.
pub fn backtracking_step<F>(x: &[f64], direction: &[f64], objective: F, config: &AscentConfig) -> f64
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let d2: f64 = direction.iter().map(|d| d * d).sum();
    if !(d2 > 0.0) {
        return 0.0;
    }
    let Some(base) = objective(x) else {
        return 0.0;
    };
    let mut trial = vec![0.0; x.len()];
    backtrack(config.t0, config.backtrack_beta, |t| {
        for ((p, xi), di) in trial.iter_mut().zip(x).zip(direction) {
            *p = xi + t * di;
        }
        objective(&trial).is_some_and(|v| v >= base + config.armijo_c * t * d2)
    })
}

/// Neutral all-ones starting filter.
pub fn default_initial_filter(grid: SpectralGrid) -> FilterTransmittance {
    FilterTransmittance::ones(grid)
}

fn physical_filter(grid: SpectralGrid, raw: &DVector<f64>) -> Result<FilterTransmittance> {
    if raw.max() > 1.0 {
        FilterTransmittance::normalized(grid, raw.clone())
    } else {
        FilterTransmittance::new(grid, raw.clone())
    }
}

/// Unconstrained gradient ascent from `f0`.
pub fn gradient_ascent_unconstrained(
    q: &SensorSet,
    x: &SensorSet,
    f0: &DVector<f64>,
    config: &AscentConfig,
) -> Result<AscentResult> {
    gradient_ascent_unconstrained_observed(q, x, f0, config, |_, _| {})
}

/// As [`gradient_ascent_unconstrained`], calling `observe(iter, f)` after every accepted step.
pub fn gradient_ascent_unconstrained_observed(
    q: &SensorSet,
    x: &SensorSet,
    f0: &DVector<f64>,
    config: &AscentConfig,
    mut observe: impl FnMut(usize, &DVector<f64>),
) -> Result<AscentResult> {
    config.validate()?;
    let objective = VoraObjective::new(q, x)?;
    if f0.len() != objective.n() {
        return Err(Error::GridMismatch(format!(
            "initial filter has {} samples, grid has {}",
            f0.len(),
            objective.n()
        )));
    }
    if let Some(i) = f0.iter().position(|&v| !(v > config.f_floor)) {
        return Err(Error::InvalidArgument(format!(
            "initial filter value {} at index {i} is not above the floor {}",
            f0[i], config.f_floor
        )));
    }

    let floor = config.f_floor;
    let score = |f: &DVector<f64>| objective.value(f.as_slice()).map(|s| s.value());
    let mut f = f0.clone();
    let mut value = score(&f)?;
    let mut records = vec![IterationRecord {
        iter: 0,
        vora_value: value,
        step: 0.0,
        grad_max: f64::NAN,
    }];
    let mut status = AscentStatus::IterationCap;
    let mut trial = f.clone();

    for iter in 1..=config.max_iters {
        let g = objective.gradient(f.as_slice())?;
        let grad_max = g.amax();
        if records.len() == 1 {
            records[0].grad_max = grad_max;
        }
        if grad_max <= config.eta {
            status = AscentStatus::Converged;
            break;
        }
        let mut accepted = value;
        let t = backtrack(config.t0, config.backtrack_beta, |t| {
            trial.zip_zip_apply(&f, &g, |p, fi, gi| *p = (fi + t * gi).max(floor));
            let gain = g.dot(&(&trial - &f));
            match score(&trial) {
                Ok(v) if gain > 0.0 && v >= value + config.armijo_c * gain => {
                    accepted = v;
                    true
                }
                _ => false,
            }
        });
        if t == 0.0 {
            status = AscentStatus::Stalled;
            break;
        }
        f.copy_from(&trial);
        value = accepted;
        records.push(IterationRecord {
            iter,
            vora_value: value,
            step: t,
            grad_max,
        });
        observe(iter, &f);
    }

    Ok(AscentResult {
        filter: physical_filter(*q.grid(), &f)?,
        raw: f,
        coefficients: None,
        trace: AscentTrace { records, status },
    })
}

/// Runs an unconstrained ascent from each seed and keeps the best final value.
/// Ties keep the earliest seed.
pub fn multi_start_ascent(
    q: &SensorSet,
    x: &SensorSet,
    seeds: &[DVector<f64>],
    config: &AscentConfig,
) -> Result<AscentResult> {
    let mut best: Option<AscentResult> = None;
    for seed in seeds {
        let run = gradient_ascent_unconstrained(q, x, seed, config)?;
        if best.as_ref().is_none_or(|b| run.final_value() > b.final_value()) {
            best = Some(run);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("multi-start needs at least one seed".into()))
}

/// Maps coefficient vectors onto `{c : f_min <= B c <= f_max}`.
///
/// Alternates an elementwise clip of `B c` with a least-squares refit. When the
/// basis spans constant filters, any remaining violation is removed by pulling
/// the result toward the mid-box constant just far enough to be inside.
#[derive(Debug, Clone)]
pub struct FeasibleProjector {
    basis: DMatrix<f64>,
    pinv: DMatrix<f64>,
    bounds: BoxBounds,
    center: Option<DVector<f64>>,
}

impl FeasibleProjector {
    pub fn new(basis: &DMatrix<f64>, bounds: BoxBounds) -> Result<Self> {
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() || !full_rank_check(basis) {
            return Err(Error::Singular {
                label: "filter basis".into(),
            });
        }
        let qr = basis.clone().qr();
        let r_inv = qr
            .r()
            .try_inverse()
            .ok_or_else(|| Error::Singular {
                label: "filter basis".into(),
            })?;
        let pinv = r_inv * qr.q().transpose();
        let mid = 0.5 * (bounds.f_min() + bounds.f_max());
        let target = DVector::from_element(basis.nrows(), mid);
        let c_mid = &pinv * &target;
        let center = ((basis * &c_mid - &target).amax() <= 1e-10 * mid.max(1.0)).then_some(c_mid);
        Ok(Self {
            basis: basis.clone(),
            pinv,
            bounds,
            center,
        })
    }

    pub fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    fn clip_refit(&self, c: &DVector<f64>) -> DVector<f64> {
        let clipped = (&self.basis * c).map(|v| self.bounds.clamp(v));
        &self.pinv * clipped
    }

    pub fn project(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        if c.len() != self.basis.ncols() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a basis of {} columns",
                c.len(),
                self.basis.ncols()
            )));
        }
        if self.bounds.f_min() == self.bounds.f_max() {
            if let Some(center) = &self.center {
                return Ok(center.clone());
            }
        }
        let mut cur = c.clone();
        if !self.bounds.contains(&(&self.basis * c), FEASIBILITY_TOL) {
            for _ in 0..PROJECTION_ITERS {
                cur = self.clip_refit(&cur);
                if self.bounds.contains(&(&self.basis * &cur), FEASIBILITY_TOL) {
                    break;
                }
            }
            cur = self.clip_refit(&cur);
        }
        let f = &self.basis * &cur;
        let violation = self.bounds.violation(&f);
        if violation == 0.0 {
            return Ok(cur);
        }
        if let Some(center) = &self.center {
            return Ok(self.shrink_toward(center, &cur, &f));
        }
        if violation <= PROJECTION_HARD_TOL {
            Ok(cur)
        } else {
            Err(Error::ProjectionFailure { violation })
        }
    }

    /// Largest step from the mid-box constant toward `cur` that stays in the box.
    fn shrink_toward(&self, center: &DVector<f64>, cur: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
        let mid = 0.5 * (self.bounds.f_min() + self.bounds.f_max());
        let mut s: f64 = 1.0;
        for &v in f.iter() {
            let d = v - mid;
            if d > 0.0 {
                s = s.min((self.bounds.f_max() - mid) / d);
            } else if d < 0.0 {
                s = s.min((self.bounds.f_min() - mid) / d);
            }
        }
        center + (cur - center) * s.max(0.0)
    }
}

/// Projects `c` so that `B c` lies within `bounds`.
pub fn project_feasible(c: &DVector<f64>, basis: &DMatrix<f64>, bounds: &BoxBounds) -> Result<DVector<f64>> {
    FeasibleProjector::new(basis, *bounds)?.project(c)
}

/// Coefficients of the feasible point nearest the neutral all-ones filter.
pub fn default_initial_coefficients(basis: &DMatrix<f64>, bounds: &BoxBounds) -> Result<DVector<f64>> {
    let proj = FeasibleProjector::new(basis, *bounds)?;
    let ones = DVector::from_element(basis.nrows(), 1.0);
    proj.project(&(&proj.pinv * ones))
}

fn effective_bounds(bounds: &BoxBounds, config: &AscentConfig) -> Result<BoxBounds> {
    // Keep iterates strictly above the gradient's floor even after 1e-8 slack.
    let lo = bounds.f_min().max(config.f_floor + FEASIBILITY_TOL);
    if lo > bounds.f_max() {
        return Err(Error::InvalidArgument(format!(
            "upper bound {} is below the transmittance floor {}",
            bounds.f_max(),
            config.f_floor
        )));
    }
    BoxBounds::new(lo, bounds.f_max())
}

/// Projected gradient ascent over basis coefficients with box-bounded transmittance.
pub fn projected_gradient_ascent(
    q: &SensorSet,
    x: &SensorSet,
    basis: &DMatrix<f64>,
    c0: &DVector<f64>,
    bounds: &BoxBounds,
    config: &AscentConfig,
) -> Result<AscentResult> {
    projected_gradient_ascent_observed(q, x, basis, c0, bounds, config, |_, _| {})
}

/// As [`projected_gradient_ascent`], calling `observe(iter, f)` after every accepted step.
pub fn projected_gradient_ascent_observed(
    q: &SensorSet,
    x: &SensorSet,
    basis: &DMatrix<f64>,
    c0: &DVector<f64>,
    bounds: &BoxBounds,
    config: &AscentConfig,
    mut observe: impl FnMut(usize, &DVector<f64>),
) -> Result<AscentResult> {
    config.validate()?;
    let objective = VoraObjective::new(q, x)?;
    if basis.nrows() != objective.n() || basis.ncols() != c0.len() {
        return Err(Error::InvalidArgument(format!(
            "basis is {}x{} but grid has {} samples and c0 has {} entries",
            basis.nrows(),
            basis.ncols(),
            objective.n(),
            c0.len()
        )));
    }
    let inner = effective_bounds(bounds, config)?;
    let projector = FeasibleProjector::new(basis, inner)?;
    let f_start = basis * c0;
    if !bounds.contains(&f_start, FEASIBILITY_TOL) {
        return Err(Error::InvalidArgument(format!(
            "initial coefficients violate the bounds by {:.3e}",
            bounds.violation(&f_start)
        )));
    }
    // The floor may tighten the caller's box; start from the nearest point inside it.
    let mut c = projector.project(c0)?;
    let mut f = basis * &c;

    let score = |f: &DVector<f64>| objective.value(f.as_slice()).map(|s| s.value());
    let mut value = score(&f)?;
    let mut records = vec![IterationRecord {
        iter: 0,
        vora_value: value,
        step: 0.0,
        grad_max: f64::NAN,
    }];
    let mut status = AscentStatus::IterationCap;
    let mut stagnant = 0;

    for iter in 1..=config.max_iters {
        let g = basis.transpose() * objective.gradient(f.as_slice())?;
        let grad_max = g.amax();
        if records.len() == 1 {
            records[0].grad_max = grad_max;
        }
        if grad_max <= config.eta {
            status = AscentStatus::Converged;
            break;
        }
        let mut accepted: Option<(DVector<f64>, DVector<f64>, f64)> = None;
        let t = backtrack(config.t0, config.backtrack_beta, |t| {
            let Ok(cand) = projector.project(&(&c + &g * t)) else {
                return false;
            };
            let delta = &cand - &c;
            if delta.amax() == 0.0 {
                return false;
            }
            let f_cand = basis * &cand;
            let gain = g.dot(&delta).max(0.0);
            match score(&f_cand) {
                Ok(v) if v >= value && v - value >= config.armijo_c * gain => {
                    accepted = Some((cand, f_cand, v));
                    true
                }
                _ => false,
            }
        });
        let Some((c_new, f_new, v_new)) = accepted.filter(|_| t > 0.0) else {
            status = AscentStatus::Stalled;
            break;
        };
        let improvement = v_new - value;
        c = c_new;
        f = f_new;
        value = v_new;
        records.push(IterationRecord {
            iter,
            vora_value: value,
            step: t,
            grad_max,
        });
        observe(iter, &f);
        if improvement < STAGNATION_IMPROVEMENT {
            stagnant += 1;
            if stagnant >= STAGNATION_ITERS {
                status = AscentStatus::Converged;
                break;
            }
        } else {
            stagnant = 0;
        }
    }

    let reported = f.map(|v| v.min(1.0));
    Ok(AscentResult {
        filter: FilterTransmittance::new(*q.grid(), reported)?,
        raw: f,
        coefficients: Some(c),
        trace: AscentTrace { records, status },
    })
}
