//! Monthly macro panel handling: loading FRED-MD style CSVs, variable
//! transforms, model-size presets, and recursive forecast windows.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Calendar month, the time index of every dataset.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MonthDate {
    year: i32,
    month: u32,
}

impl MonthDate {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::data(format!("month out of range: {year}-{month}")));
        }
        Ok(MonthDate { year, month })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    /// Months since 0000-01; month arithmetic via plain integers.
    fn index(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_index(idx: i64) -> Self {
        MonthDate {
            year: idx.div_euclid(12) as i32,
            month: (idx.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn plus_months(&self, n: i64) -> Self {
        Self::from_index(self.index() + n)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(&self, other: &MonthDate) -> i64 {
        other.index() - self.index()
    }
}

impl fmt::Display for MonthDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthDate {
    type Err = Error;

    /// Accepts `YYYY-MM`; a trailing `-DD` (daily stamp) is tolerated and
    /// ignored. Also accepts `M` as separator (`2001M06`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let norm = s.replace('M', "-");
        let mut parts = norm.splitn(3, '-');
        let year = parts
            .next()
            .and_then(|v| v.parse::<i32>().ok())
            .ok_or_else(|| Error::data(format!("cannot parse date '{s}'")))?;
        let month = parts
            .next()
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| Error::data(format!("cannot parse date '{s}'")))?;
        MonthDate::new(year, month)
    }
}

impl Serialize for MonthDate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MonthDate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-variable transform applied at load time.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Use the series as-is.
    Level,
    /// Natural log.
    Log,
    /// Annualized month-on-month log difference, 100 * 12 * Δlog(x).
    DlogAnn,
    /// sign(x) * log(1 + |x|); keeps sign for series that cross zero.
    SignedLog,
}

impl Transform {
    /// Transform a series. Cells where the transform is undefined by
    /// construction (the first observation of a log difference) come back
    /// as NaN and are trimmed panel-wide by the loader; NaNs elsewhere
    /// (e.g. log of a non-positive value) are data errors upstream.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Transform::Level => x.to_vec(),
            Transform::Log => x.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NAN }).collect(),
            Transform::DlogAnn => {
                let mut out = vec![f64::NAN; x.len()];
                for t in 1..x.len() {
                    if x[t] > 0.0 && x[t - 1] > 0.0 {
                        out[t] = 1200.0 * (x[t].ln() - x[t - 1].ln());
                    }
                }
                out
            }
            Transform::SignedLog => x.iter().map(|&v| v.signum() * (1.0 + v.abs()).ln()).collect(),
        }
    }

    /// Leading observations lost to the transform.
    pub fn leading_loss(&self) -> usize {
        match self {
            Transform::DlogAnn => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Transform::Level => "level",
            Transform::Log => "log",
            Transform::DlogAnn => "dlog_ann",
            Transform::SignedLog => "signed_log",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "level" => Ok(Transform::Level),
            "log" => Ok(Transform::Log),
            "dlog_ann" | "dlogann" | "dlog" => Ok(Transform::DlogAnn),
            "signed_log" | "signedlog" => Ok(Transform::SignedLog),
            other => Err(Error::config(format!("unknown transform '{other}'"))),
        }
    }
}

/// Default transform for the FRED-MD mnemonics used by the size presets.
/// Rates, spreads, and hours stay in levels; the price index enters as
/// annualized log differences; reserves (which turn negative) get the
/// signed log; everything else is logged. Unknown names default to levels.
pub fn default_transform(name: &str) -> Transform {
    match name {
        "UNRATE" | "FEDFUNDS" | "CUMFNS" | "T10YFFM" | "AWHMAN" => Transform::Level,
        "CPIAUCSL" => Transform::DlogAnn,
        "NONBORRES" => Transform::SignedLog,
        "M2REAL" | "TOTRESNS" | "INDPRO" | "RPI" | "S.P.500" | "M1SL" | "EXUSUKx" | "HOUST" => {
            Transform::Log
        }
        _ => Transform::Level,
    }
}

/// Named variable set defining a model size. Order is meaningful: it fixes
/// the recursive shock ordering downstream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSizeSpec {
    pub name: String,
    pub variables: Vec<String>,
}

impl ModelSizeSpec {
    pub fn small() -> Self {
        ModelSizeSpec {
            name: "small".into(),
            variables: vec!["UNRATE".into(), "CPIAUCSL".into(), "FEDFUNDS".into()],
        }
    }

    pub fn medium() -> Self {
        let mut v = Self::small().variables;
        v.extend(["NONBORRES".into(), "M2REAL".into(), "TOTRESNS".into()]);
        ModelSizeSpec { name: "medium".into(), variables: v }
    }

    pub fn large() -> Self {
        let mut v = Self::medium().variables;
        v.extend([
            "INDPRO".into(),
            "RPI".into(),
            "S.P.500".into(),
            "CUMFNS".into(),
            "T10YFFM".into(),
            "AWHMAN".into(),
            "M1SL".into(),
            "EXUSUKx".into(),
            "HOUST".into(),
        ]);
        ModelSizeSpec { name: "large".into(), variables: v }
    }

    /// Custom list from a text file: one variable name per line, `#`
    /// comments and blank lines ignored.
    pub fn custom_from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let variables: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        if variables.is_empty() {
            return Err(Error::config(format!(
                "custom variable list {} is empty",
                path.display()
            )));
        }
        Ok(ModelSizeSpec { name: format!("custom:{}", path.display()), variables })
    }

    pub fn parse(s: &str, base: Option<&Path>) -> Result<Self> {
        match s {
            "small" => Ok(Self::small()),
            "medium" => Ok(Self::medium()),
            "large" => Ok(Self::large()),
            other => {
                if let Some(rest) = other.strip_prefix("custom:") {
                    let p = Path::new(rest);
                    let p = match (p.is_relative(), base) {
                        (true, Some(b)) => b.join(p),
                        _ => p.to_path_buf(),
                    };
                    Self::custom_from_file(&p)
                } else {
                    Err(Error::config(format!(
                        "unknown size '{other}' (expected small|medium|large|custom:FILE)"
                    )))
                }
            }
        }
    }
}

/// Where a dataset came from, for run manifests.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub sha256: String,
}

/// A transformed monthly panel: contiguous dates, no missing values.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dates: Vec<MonthDate>,
    /// T x M matrix, rows in date order.
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
    pub transforms: Vec<Transform>,
    pub provenance: Option<Provenance>,
    /// Free-form loader notes (e.g. which series was signed-logged).
    pub notes: Vec<String>,
}

impl Dataset {
    /// Wrap a plain matrix (e.g. simulator output) with synthetic monthly
    /// dates starting at `start`. Values are taken as levels.
    pub fn from_values(names: Vec<String>, values: DMatrix<f64>, start: MonthDate) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::config(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        let dates = (0..values.nrows() as i64).map(|t| start.plus_months(t)).collect();
        let transforms = vec![Transform::Level; names.len()];
        let ds = Dataset { dates, values, names, transforms, provenance: None, notes: vec![] };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    /// Check the structural invariants: contiguous monthly dates, finite
    /// values, consistent shapes.
    pub fn validate(&self) -> Result<()> {
        if self.dates.len() != self.values.nrows() {
            return Err(Error::data(format!(
                "{} dates for {} rows",
                self.dates.len(),
                self.values.nrows()
            )));
        }
        if self.names.len() != self.values.ncols() || self.transforms.len() != self.names.len() {
            return Err(Error::data("names/transforms/columns length mismatch".to_string()));
        }
        for w in self.dates.windows(2) {
            if w[0].months_until(&w[1]) != 1 {
                return Err(Error::data(format!(
                    "dates not monthly-contiguous: {} followed by {}",
                    w[0], w[1]
                )));
            }
        }
        for j in 0..self.n_vars() {
            for t in 0..self.n_rows() {
                if !self.values[(t, j)].is_finite() {
                    return Err(Error::data(format!(
                        "non-finite value for {} at {}",
                        self.names[j], self.dates[t]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn date_index(&self, d: &MonthDate) -> Option<usize> {
        let first = self.dates.first()?;
        let off = first.months_until(d);
        if off < 0 || off as usize >= self.dates.len() {
            None
        } else {
            Some(off as usize)
        }
    }

    /// Restrict to rows with start <= date <= end.
    pub fn window(&self, start: &MonthDate, end: &MonthDate) -> Result<Dataset> {
        let i0 = self.date_index(start).ok_or_else(|| {
            Error::data(format!(
                "window start {start} outside data range {}..{}",
                self.dates.first().map(|d| d.to_string()).unwrap_or_default(),
                self.dates.last().map(|d| d.to_string()).unwrap_or_default()
            ))
        })?;
        let i1 = self.date_index(end).ok_or_else(|| {
            Error::data(format!(
                "window end {end} outside data range {}..{}",
                self.dates.first().map(|d| d.to_string()).unwrap_or_default(),
                self.dates.last().map(|d| d.to_string()).unwrap_or_default()
            ))
        })?;
        if i1 < i0 {
            return Err(Error::data(format!("window end {end} precedes start {start}")));
        }
        Ok(Dataset {
            dates: self.dates[i0..=i1].to_vec(),
            values: self.values.rows(i0, i1 - i0 + 1).into_owned(),
            names: self.names.clone(),
            transforms: self.transforms.clone(),
            provenance: self.provenance.clone(),
            notes: self.notes.clone(),
        })
    }

    /// First `n` rows (dates included).
    pub fn head(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.n_rows() {
            return Err(Error::data(format!(
                "head of {n} rows requested from {} rows",
                self.n_rows()
            )));
        }
        Ok(Dataset {
            dates: self.dates[..n].to_vec(),
            values: self.values.rows(0, n).into_owned(),
            names: self.names.clone(),
            transforms: self.transforms.clone(),
            provenance: self.provenance.clone(),
            notes: self.notes.clone(),
        })
    }

    /// Write the panel as `date,VAR1,...` using shortest round-trip float
    /// formatting, so a reload reproduces the values bit for bit.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("date");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for t in 0..self.n_rows() {
            out.push_str(&self.dates[t].to_string());
            for j in 0..self.n_vars() {
                out.push(',');
                out.push_str(&format!("{}", self.values[(t, j)]));
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read a normalized panel back (values taken as levels; no
    /// transforms applied).
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let raw = RawCsv::read(path)?;
        let names = raw.names.clone();
        let t = raw.dates.len();
        let m = names.len();
        let mut values = DMatrix::zeros(t, m);
        for (j, name) in names.iter().enumerate() {
            let col = raw.column(name)?;
            for (i, v) in col.iter().enumerate() {
                values[(i, j)] = *v;
            }
        }
        let ds = Dataset {
            dates: raw.dates,
            values,
            names,
            transforms: vec![Transform::Level; m],
            provenance: Some(Provenance {
                source: path.display().to_string(),
                sha256: raw.sha256,
            }),
            notes: vec![],
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Options for [`load_csv`].
#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Keep only rows inside this window (inclusive), after transforms.
    pub window: Option<(MonthDate, MonthDate)>,
    /// Per-variable transform overrides; defaults come from
    /// [`default_transform`].
    pub overrides: HashMap<String, Transform>,
    /// Extra column to prepend as variable 0, in levels (e.g. an
    /// uncertainty index ordered first for recursive identification).
    pub prepend: Option<String>,
}

/// Parse a TOML file of `NAME = "transform"` pairs into overrides.
pub fn read_transform_overrides(path: &Path) -> Result<HashMap<String, Transform>> {
    let text = std::fs::read_to_string(path)?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::config(format!("bad transform config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (name, value) in table {
        let s = value
            .as_str()
            .ok_or_else(|| Error::config(format!("transform for {name} must be a string")))?;
        map.insert(name, s.parse::<Transform>()?);
    }
    Ok(map)
}

/// Load and transform a monthly CSV (FRED-MD layout: a date column first,
/// one column per series). Selects `size.variables` in order, applies
/// transforms, trims rows lost to differencing panel-wide, then windows.
pub fn load_csv(path: &Path, size: &ModelSizeSpec, opts: &LoadOptions) -> Result<Dataset> {
    let raw = RawCsv::read(path)?;

    let mut names: Vec<String> = Vec::new();
    if let Some(pre) = &opts.prepend {
        names.push(pre.clone());
    }
    names.extend(size.variables.iter().cloned());

    let mut transforms: Vec<Transform> = Vec::with_capacity(names.len());
    let mut notes = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let is_prepend = opts.prepend.is_some() && j == 0;
        let tr = if is_prepend {
            // prepended indicator columns enter in levels
            opts.overrides.get(name).copied().unwrap_or(Transform::Level)
        } else {
            opts.overrides.get(name).copied().unwrap_or_else(|| default_transform(name))
        };
        if tr == Transform::SignedLog {
            notes.push(format!("{name}: signed log applied (series crosses zero)"));
        }
        transforms.push(tr);
    }

    let t_raw = raw.dates.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(names.len());
    let mut drop_leading = 0usize;
    for (name, tr) in names.iter().zip(&transforms) {
        let col = raw.column(name)?;
        cols.push(tr.apply(col));
        drop_leading = drop_leading.max(tr.leading_loss());
    }

    if t_raw <= drop_leading {
        return Err(Error::data(format!(
            "{}: too few rows ({t_raw}) after transform trimming",
            path.display()
        )));
    }

    let t = t_raw - drop_leading;
    let mut values = DMatrix::zeros(t, names.len());
    for (j, col) in cols.iter().enumerate() {
        for i in 0..t {
            values[(i, j)] = col[i + drop_leading];
        }
    }
    let dates: Vec<MonthDate> = raw.dates[drop_leading..].to_vec();

    let mut ds = Dataset {
        dates,
        values,
        names,
        transforms,
        provenance: Some(Provenance { source: path.display().to_string(), sha256: raw.sha256 }),
        notes,
    };

    if let Some((start, end)) = &opts.window {
        ds = ds.window(start, end)?;
    }

    // invariant check doubles as the missing-value error: any NaN left in
    // the selected window gets reported with variable and date
    ds.validate()?;
    Ok(ds)
}

/// One train/evaluate split of a recursive (expanding-window) backtest.
#[derive(Clone, Debug)]
pub struct RecursiveSplit {
    /// Forecast origin: the last date included in the training sample.
    pub origin: MonthDate,
    /// Number of leading rows that form the training sample.
    pub train_rows: usize,
    /// (horizon, realized row index) pairs available inside the data.
    pub realized: Vec<(usize, usize)>,
}

/// Expanding-window splits with one-month steps: origins run from
/// `first_origin` to `last_origin` inclusive; each split trains on all
/// data up to its origin and evaluates horizons `1..=max_h` where the
/// realization exists.
pub fn recursive_windows(
    data: &Dataset,
    first_origin: &MonthDate,
    last_origin: &MonthDate,
    max_h: usize,
) -> Result<Vec<RecursiveSplit>> {
    if max_h == 0 {
        return Err(Error::config("max_h must be at least 1".to_string()));
    }
    let i0 = data
        .date_index(first_origin)
        .ok_or_else(|| Error::data(format!("first origin {first_origin} outside data range")))?;
    let i1 = data
        .date_index(last_origin)
        .ok_or_else(|| Error::data(format!("last origin {last_origin} outside data range")))?;
    if i1 < i0 {
        return Err(Error::data(format!(
            "last origin {last_origin} precedes first origin {first_origin}"
        )));
    }
    let mut splits = Vec::with_capacity(i1 - i0 + 1);
    for i in i0..=i1 {
        let realized = (1..=max_h)
            .filter_map(|h| {
                let idx = i + h;
                (idx < data.n_rows()).then_some((h, idx))
            })
            .collect();
        splits.push(RecursiveSplit { origin: data.dates[i], train_rows: i + 1, realized });
    }
    Ok(splits)
}

/// Raw parsed CSV: dates plus named numeric columns (NaN for blanks).
struct RawCsv {
    dates: Vec<MonthDate>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    sha256: String,
}

impl RawCsv {
    fn read(path: &Path) -> Result<RawCsv> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        let sha256 = {
            use sha2::{Digest, Sha256};
            let mut h = Sha256::new();
            h.update(&bytes);
            hex::encode(h.finalize())
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(bytes.as_slice());

        let headers = rdr
            .headers()
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
            .clone();
        if headers.len() < 2 {
            return Err(Error::data(format!(
                "{}: need a date column plus at least one series",
                path.display()
            )));
        }
        let names: Vec<String> = headers.iter().skip(1).map(String::from).collect();

        let mut dates = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
            let date_str = record.get(0).unwrap_or("");
            if date_str.is_empty() && record.iter().skip(1).all(|c| c.is_empty()) {
                continue; // ignore fully blank trailer rows
            }
            let date: MonthDate = date_str.parse().map_err(|_| {
                Error::data(format!(
                    "{} row {}: cannot parse date '{date_str}'",
                    path.display(),
                    row_idx + 2
                ))
            })?;
            dates.push(date);
            for (j, cell) in record.iter().skip(1).enumerate() {
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::data(format!(
                            "{} row {}: bad number '{cell}' in column {}",
                            path.display(),
                            row_idx + 2,
                            names[j]
                        ))
                    })?
                };
                columns[j].push(v);
            }
        }
        if dates.is_empty() {
            return Err(Error::data(format!("{}: no data rows", path.display())));
        }
        for w in dates.windows(2) {
            if w[0].months_until(&w[1]) != 1 {
                return Err(Error::data(format!(
                    "{}: dates not monthly-contiguous ({} then {})",
                    path.display(),
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(RawCsv { dates, names, columns, sha256 })
    }

    fn column(&self, name: &str) -> Result<&Vec<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| &self.columns[j])
            .ok_or_else(|| Error::data(format!("variable {name} not found in CSV")))
    }
}
