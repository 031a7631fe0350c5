//! Spectral dataset I/O.
//!
//! Canonical format: UTF-8 CSV with a header row. The first column is
//! `wavelength_nm` (strictly increasing, uniform spacing); every other column
//! is one named spectrum. Tables on any grid that covers 400–700 nm are
//! resampled to the default 10 nm grid on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::spectral::{resample, SensorSet, SpectralGrid, Spectrum};

pub const WAVELENGTH_COLUMN: &str = "wavelength_nm";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralKind {
    Sensitivities,
    Illuminants,
    Reflectances,
    Cmf,
}

impl SpectralKind {
    fn requires_nonnegative(self) -> bool {
        matches!(self, SpectralKind::Sensitivities | SpectralKind::Cmf)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTable {
    pub grid: SpectralGrid,
    pub columns: Vec<(String, Vec<f64>)>,
    pub source: PathBuf,
    pub kind: SpectralKind,
}

impl SpectralTable {
    pub fn new(
        grid: SpectralGrid,
        columns: Vec<(String, Vec<f64>)>,
        source: impl Into<PathBuf>,
        kind: SpectralKind,
    ) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (name, values) in &columns {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate column `{name}`")));
            }
            if values.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "column `{name}` has {} samples, grid has {}",
                    values.len(),
                    grid.len()
                )));
            }
        }
        Ok(Self {
            grid,
            columns,
            source: source.into(),
            kind,
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn spectra(&self) -> Result<Vec<Spectrum>> {
        self.columns
            .iter()
            .map(|(_, v)| Spectrum::new(self.grid, v.clone()))
            .collect()
    }

    pub fn resampled(&self, target: &SpectralGrid) -> Result<Self> {
        if self.grid == *target {
            return Ok(self.clone());
        }
        let columns = self
            .columns
            .iter()
            .map(|(name, values)| {
                let s = Spectrum::new(self.grid, values.clone())?;
                Ok((name.clone(), resample(&s, target)?.into_values()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(*target, columns, self.source.clone(), self.kind)
    }

    /// Interprets a three-column table as a sensor set.
    pub fn to_sensor_set(&self, label: impl Into<String>) -> Result<SensorSet> {
        let label = label.into();
        if self.columns.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "{}: sensor `{label}` needs exactly 3 columns, found {}",
                self.source.display(),
                self.columns.len()
            )));
        }
        let m = nalgebra::DMatrix::from_fn(self.grid.len(), 3, |i, j| self.columns[j].1[i]);
        SensorSet::new(self.grid, m, label)
    }

    /// Writes the table in canonical form. Values use the shortest decimal
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "{WAVELENGTH_COLUMN}")?;
        for (name, _) in &self.columns {
            write!(out, ",{name}")?;
        }
        writeln!(out)?;
        for (i, wl) in self.grid.wavelengths().enumerate() {
            write!(out, "{wl}")?;
            for (_, values) in &self.columns {
                write!(out, ",{}", values[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Parses canonical CSV text without resampling.
pub fn parse_spectral_csv(text: &str, source: &Path, kind: SpectralKind) -> Result<SpectralTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?
        .clone();
    if headers.get(0) != Some(WAVELENGTH_COLUMN) {
        return Err(Error::parse(
            source,
            1,
            format!("first column must be `{WAVELENGTH_COLUMN}`"),
        ));
    }
    if headers.len() < 2 {
        return Err(Error::parse(source, 1, "no spectral columns"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut wavelengths = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != headers.len() {
            return Err(Error::parse(
                source,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let mut fields = record.iter().enumerate().map(|(j, field)| {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(source, line, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(source, line, format!("non-finite value in column {}", j + 1)));
            }
            Ok(v)
        });
        let wl = fields.next().expect("record has at least two fields")?;
        if let Some(&prev) = wavelengths.last() {
            if !(wl > prev) {
                return Err(Error::parse(source, line, format!("wavelength {wl} does not increase")));
            }
        }
        wavelengths.push(wl);
        for (j, v) in fields.enumerate() {
            let v = v?;
            if kind.requires_nonnegative() && v < 0.0 {
                return Err(Error::parse(
                    source,
                    line,
                    format!("negative value {v} in column `{}`", names[j]),
                ));
            }
            columns[j].push(v);
        }
    }

    if wavelengths.len() < 2 {
        return Err(Error::parse(source, 2, "need at least two wavelength rows"));
    }
    let step = wavelengths[1] - wavelengths[0];
    for (i, w) in wavelengths.windows(2).enumerate() {
        if ((w[1] - w[0]) - step).abs() > 1e-6 * step {
            return Err(Error::parse(source, i + 3, "wavelengths are not uniformly spaced"));
        }
    }
    let grid = SpectralGrid::new(wavelengths[0], *wavelengths.last().unwrap(), step)
        .map_err(|e| Error::parse(source, 2, e.to_string()))?;
    SpectralTable::new(grid, names.into_iter().zip(columns).collect(), source, kind)
}

/// Loads a CSV table and resamples it to `target`.
pub fn load_spectral_csv_on(path: &Path, kind: SpectralKind, target: &SpectralGrid) -> Result<SpectralTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spectral_csv(&text, path, kind)?.resampled(target)
}

/// Loads a CSV table onto the default 400–700 nm, 10 nm grid.
pub fn load_spectral_csv(path: &Path, kind: SpectralKind) -> Result<SpectralTable> {
    load_spectral_csv_on(path, kind, &SpectralGrid::default())
}

pub fn load_sensor_set(path: &Path, kind: SpectralKind, label: impl Into<String>) -> Result<SensorSet> {
    load_spectral_csv(path, kind)?.to_sensor_set(label)
}

/// Builds labeled, full-rank camera sensor sets, rejecting duplicate labels.
pub fn cameras_from_tables(tables: Vec<(String, SpectralTable)>) -> Result<Vec<SensorSet>> {
    if tables.is_empty() {
        return Err(Error::InvalidArgument("camera database is empty".into()));
    }
    let mut by_label = BTreeMap::new();
    for (label, table) in tables {
        if by_label.contains_key(&label) {
            return Err(Error::InvalidArgument(format!("duplicate camera label `{label}`")));
        }
        let sensor = table.to_sensor_set(label.clone())?;
        if !sensor.is_full_rank() {
            return Err(Error::Singular { label });
        }
        by_label.insert(label, sensor);
    }
    Ok(by_label.into_values().collect())
}

/// Loads every `*.csv` file of `dir` as one camera, labeled by file stem, sorted by label.
pub fn load_camera_database(dir: &Path) -> Result<Vec<SensorSet>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_csv = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if path.is_file() && is_csv {
            paths.push(path);
        }
    }
    paths.sort();
    let tables = paths
        .iter()
        .map(|p| {
            let label = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::parse(p, 0, "file name is not UTF-8"))?
                .to_string();
            Ok((label, load_spectral_csv(p, SpectralKind::Sensitivities)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if tables.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no camera files in {}",
            dir.display()
        )));
    }
    cameras_from_tables(tables)
}

/// Datasets compiled into the crate.
pub mod bundled {
    use super::*;
    use crate::colorimetry::Scene;

    const CIE1931: &str = include_str!("../data/cie1931_2deg.csv");
    const ILLUMINANTS: &str = include_str!("../data/illuminants.csv");
    const REFLECTANCES: &str = include_str!("../data/reflectances.csv");
    const CAMERAS: &[(&str, &str)] = &[
        ("canon_5d_mark_ii", include_str!("../data/cameras/canon_5d_mark_ii.csv")),
        ("nikon_d5100", include_str!("../data/cameras/nikon_d5100.csv")),
    ];

    /// Directory holding the bundled CSV files in the source tree.
    pub fn data_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
    }

    fn parse(text: &str, name: &str, kind: SpectralKind) -> SpectralTable {
        let source = Path::new("<bundled>").join(name);
        parse_spectral_csv(text, &source, kind)
            .and_then(|t| t.resampled(&SpectralGrid::default()))
            .expect("bundled data is valid")
    }

    /// CIE 1931 2° color matching functions on the default grid.
    pub fn cie1931() -> SensorSet {
        parse(CIE1931, "cie1931_2deg.csv", SpectralKind::Cmf)
            .to_sensor_set("cie1931_2deg")
            .expect("bundled CMFs are 3 columns")
    }

    pub fn camera_labels() -> impl Iterator<Item = &'static str> {
        CAMERAS.iter().map(|(label, _)| *label)
    }

    pub fn camera(label: &str) -> Option<SensorSet> {
        CAMERAS.iter().find(|(l, _)| *l == label).map(|(l, text)| {
            parse(text, l, SpectralKind::Sensitivities)
                .to_sensor_set(*l)
                .expect("bundled cameras are 3 columns")
        })
    }

    pub fn cameras() -> Vec<SensorSet> {
        camera_labels().filter_map(camera).collect()
    }

    pub fn illuminants() -> SpectralTable {
        parse(ILLUMINANTS, "illuminants.csv", SpectralKind::Illuminants)
    }

    pub fn reflectances() -> SpectralTable {
        parse(REFLECTANCES, "reflectances.csv", SpectralKind::Reflectances)
    }

    pub fn scene() -> Scene {
        Scene::new(
            illuminants().spectra().expect("valid"),
            reflectances().spectra().expect("valid"),
        )
        .expect("bundled scene is consistent")
    }
}
