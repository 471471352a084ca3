//! Mixed-frequency, ragged-edge, vintage-stamped panels.
//!
//! Every series lives on a common monthly axis. Quarterly values sit at the
//! last month of their quarter and annual values at December; all other
//! months are missing. Missing values are an explicit `None`, never a
//! sentinel number.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Month;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Quarterly,
    Annual,
}

impl FromStr for Frequency {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "monthly" | "m" => Ok(Frequency::Monthly),
            "quarterly" | "q" => Ok(Frequency::Quarterly),
            "annual" | "a" => Ok(Frequency::Annual),
            other => Err(Error::Parse(format!("unknown frequency `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Endogenous,
    Exogenous,
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "endogenous" | "endo" => Ok(Role::Endogenous),
            "exogenous" | "exo" => Ok(Role::Exogenous),
            other => Err(Error::Parse(format!("unknown role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scope {
    National,
    State(String),
}

impl FromStr for Scope {
    type Err = Error;
    /// `national` or `state:<id>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("national") {
            return Ok(Scope::National);
        }
        match s.split_once(':') {
            Some((k, id)) if k.eq_ignore_ascii_case("state") && !id.is_empty() => {
                Ok(Scope::State(id.to_string()))
            }
            _ => Err(Error::Parse(format!(
                "unknown scope `{s}`, expected `national` or `state:<id>`"
            ))),
        }
    }
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::National => write!(f, "national"),
            Scope::State(id) => write!(f, "state:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub id: String,
    pub frequency: Frequency,
    pub role: Role,
    pub scope: Scope,
    pub tcode: u8,
    pub release_lag_months: u32,
    /// For annual series: first month from which the series is observed
    /// quarterly instead of annually.
    pub frequency_break: Option<Month>,
}

impl SeriesMeta {
    pub fn new(id: &str, frequency: Frequency, role: Role, scope: Scope) -> Self {
        Self {
            id: id.to_string(),
            frequency,
            role,
            scope,
            tcode: 1,
            release_lag_months: 0,
            frequency_break: None,
        }
    }

    pub fn with_tcode(mut self, tcode: u8) -> Self {
        self.tcode = tcode;
        self
    }

    pub fn with_release_lag(mut self, lag: u32) -> Self {
        self.release_lag_months = lag;
        self
    }

    pub fn with_break(mut self, month: Month) -> Self {
        self.frequency_break = Some(month);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidInput("empty series id".into()));
        }
        if !(1..=8).contains(&self.tcode) {
            return Err(Error::InvalidInput(format!(
                "series `{}`: tcode {} outside 1..=8",
                self.id, self.tcode
            )));
        }
        if self.frequency == Frequency::Annual
            && !(self.role == Role::Endogenous && matches!(self.scope, Scope::State(_)))
        {
            return Err(Error::InvalidInput(format!(
                "series `{}`: annual frequency is only allowed for endogenous state series",
                self.id
            )));
        }
        if self.frequency_break.is_some() && self.frequency != Frequency::Annual {
            return Err(Error::InvalidInput(format!(
                "series `{}`: a frequency break needs an annual series",
                self.id
            )));
        }
        Ok(())
    }

    /// Frequency in force at `month`.
    pub fn frequency_at(&self, month: Month) -> Frequency {
        match (self.frequency, self.frequency_break) {
            (Frequency::Annual, Some(b)) if month >= b => Frequency::Quarterly,
            (f, _) => f,
        }
    }

    /// Whether an observation may sit at `month`.
    pub fn observable_at(&self, month: Month) -> bool {
        match self.frequency_at(month) {
            Frequency::Monthly => true,
            Frequency::Quarterly => month.is_quarter_end(),
            Frequency::Annual => month.is_year_end(),
        }
    }

    fn placement_error(&self, month: Month) -> Error {
        let reason = match self.frequency_at(month) {
            Frequency::Annual => "annual value outside December",
            Frequency::Quarterly => "quarterly value outside a quarter-end month",
            Frequency::Monthly => "invalid placement",
        };
        Error::FrequencyViolation {
            series: self.id.clone(),
            date: month.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct SchemaRecord {
    series_id: String,
    frequency: String,
    role: String,
    scope: String,
    tcode: u8,
    release_lag_months: u32,
    #[serde(default)]
    frequency_break: Option<String>,
}

/// Reads a schema CSV with header
/// `series_id,frequency,role,scope,tcode,release_lag_months[,frequency_break]`.
pub fn read_schema<R: Read>(reader: R) -> Result<Vec<SeriesMeta>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.deserialize::<SchemaRecord>() {
        let rec = rec?;
        let meta = SeriesMeta {
            id: rec.series_id.clone(),
            frequency: rec.frequency.parse()?,
            role: rec.role.parse()?,
            scope: rec.scope.parse()?,
            tcode: rec.tcode,
            release_lag_months: rec.release_lag_months,
            frequency_break: match rec.frequency_break.as_deref().map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(s.parse()?),
            },
        };
        meta.validate()?;
        if !seen.insert(meta.id.clone()) {
            return Err(Error::InvalidInput(format!(
                "series `{}` listed twice in schema",
                meta.id
            )));
        }
        out.push(meta);
    }
    Ok(out)
}

pub fn load_schema(path: &Path) -> Result<Vec<SeriesMeta>> {
    read_schema(File::open(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_schema<W: Write>(schema: &[SeriesMeta], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "series_id",
        "frequency",
        "role",
        "scope",
        "tcode",
        "release_lag_months",
        "frequency_break",
    ])?;
    for m in schema {
        let freq = match m.frequency {
            Frequency::Monthly => "monthly",
            Frequency::Quarterly => "quarterly",
            Frequency::Annual => "annual",
        };
        let role = match m.role {
            Role::Endogenous => "endogenous",
            Role::Exogenous => "exogenous",
        };
        wtr.write_record([
            m.id.clone(),
            freq.to_string(),
            role.to_string(),
            m.scope.to_string(),
            m.tcode.to_string(),
            m.release_lag_months.to_string(),
            m.frequency_break.map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<schema csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub meta: SeriesMeta,
    pub values: Vec<Option<f64>>,
}

impl Series {
    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn n_observed(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Index of the last observed value.
    pub fn last_observed(&self) -> Option<usize> {
        self.values.iter().rposition(|v| v.is_some())
    }
}

/// Observed series on a common monthly axis, stamped with a vintage label.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedFrequencyPanel {
    start: Month,
    len: usize,
    series: Vec<Series>,
    vintage: String,
}

impl MixedFrequencyPanel {
    /// Builds a panel, checking each value against its series' frequency rule.
    pub fn new(start: Month, len: usize, series: Vec<Series>, vintage: &str) -> Result<Self> {
        let mut ids = HashSet::new();
        for s in &series {
            s.meta.validate()?;
            if !ids.insert(s.meta.id.clone()) {
                return Err(Error::InvalidInput(format!("duplicate series `{}`", s.meta.id)));
            }
            if s.values.len() != len {
                return Err(Error::Dimension(format!(
                    "series `{}` has {} values on a {len}-month axis",
                    s.meta.id,
                    s.values.len()
                )));
            }
            for (t, v) in s.values.iter().enumerate() {
                let m = start.offset(t as i32);
                match v {
                    Some(x) if !x.is_finite() => {
                        return Err(Error::NonFinite(format!("series `{}` at {m}", s.meta.id)))
                    }
                    Some(_) if !s.meta.observable_at(m) => return Err(s.meta.placement_error(m)),
                    _ => {}
                }
            }
        }
        Ok(Self {
            start,
            len,
            series,
            vintage: vintage.to_string(),
        })
    }

    pub fn start(&self) -> Month {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.len as i32 - 1)
    }

    pub fn vintage(&self) -> &str {
        &self.vintage
    }

    pub fn with_vintage(mut self, vintage: &str) -> Self {
        self.vintage = vintage.to_string();
        self
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    pub fn get(&self, id: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.meta.id == id)
    }

    pub fn require(&self, id: &str) -> Result<&Series> {
        self.get(id).ok_or_else(|| Error::UnknownSeries(id.to_string()))
    }

    pub fn month_at(&self, t: usize) -> Month {
        self.start.offset(t as i32)
    }

    pub fn index_of(&self, month: Month) -> Option<usize> {
        let d = month.since(self.start);
        (d >= 0 && (d as usize) < self.len).then_some(d as usize)
    }

    pub fn value(&self, id: &str, month: Month) -> Option<f64> {
        let t = self.index_of(month)?;
        self.get(id)?.values[t]
    }

    /// Copy of the panel restricted to the months `..=end`.
    pub fn cut_at(&self, end: Month) -> Result<Self> {
        let t = self.index_of(end).ok_or_else(|| {
            Error::InvalidInput(format!(
                "month {end} outside panel axis {}..{}",
                self.start,
                self.end()
            ))
        })?;
        let series = self
            .series
            .iter()
            .map(|s| Series {
                meta: s.meta.clone(),
                values: s.values[..=t].to_vec(),
            })
            .collect();
        Ok(Self {
            start: self.start,
            len: t + 1,
            series,
            vintage: self.vintage.clone(),
        })
    }

    /// Replaces one series' values (same axis); placement rules are re-checked.
    pub fn with_values(&self, id: &str, values: Vec<Option<f64>>) -> Result<Self> {
        let mut series = self.series.clone();
        let s = series
            .iter_mut()
            .find(|s| s.meta.id == id)
            .ok_or_else(|| Error::UnknownSeries(id.to_string()))?;
        s.values = values;
        Self::new(self.start, self.len, series, &self.vintage)
    }

    /// True when every observed value of `self` is present with the same
    /// value in `other`.
    pub fn is_subpanel_of(&self, other: &MixedFrequencyPanel) -> bool {
        self.series.iter().all(|s| {
            s.values.iter().enumerate().all(|(t, v)| match v {
                None => true,
                Some(x) => other.value(s.id(), self.month_at(t)) == Some(*x),
            })
        })
    }
}

#[derive(Debug, Deserialize)]
struct ObservationRecord {
    date: String,
    series_id: String,
    value: Option<String>,
}

/// Reads a `date,series_id,value` CSV. Empty value cells are missing. The
/// time axis runs from January of the earliest year to the latest date.
pub fn read_panel<R: Read>(reader: R, schema: &[SeriesMeta], vintage: &str) -> Result<MixedFrequencyPanel> {
    let by_id: HashMap<&str, &SeriesMeta> = schema.iter().map(|m| (m.id.as_str(), m)).collect();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut cells: BTreeMap<(String, Month), Option<f64>> = BTreeMap::new();
    for rec in rdr.deserialize::<ObservationRecord>() {
        let rec = rec?;
        let month: Month = rec.date.parse()?;
        let meta = by_id
            .get(rec.series_id.as_str())
            .ok_or_else(|| Error::UnknownSeries(rec.series_id.clone()))?;
        let value = match rec.value.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<f64>().map_err(|_| {
                Error::Parse(format!("series `{}` at {month}: bad value `{s}`", rec.series_id))
            })?),
        };
        if value.is_some() && !meta.observable_at(month) {
            return Err(meta.placement_error(month));
        }
        if cells.insert((rec.series_id.clone(), month), value).is_some() {
            return Err(Error::DuplicateObservation {
                series: rec.series_id,
                date: month.to_string(),
            });
        }
    }
    let (first, last) = match (
        cells.keys().map(|(_, m)| *m).min(),
        cells.keys().map(|(_, m)| *m).max(),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidInput("panel file has no observations".into())),
    };
    let start = Month::new(first.year(), 1);
    let len = (last.since(start) + 1) as usize;
    let series = schema
        .iter()
        .map(|meta| {
            let mut values = vec![None; len];
            for (t, v) in values.iter_mut().enumerate() {
                if let Some(Some(x)) = cells.get(&(meta.id.clone(), start.offset(t as i32))) {
                    *v = Some(*x);
                }
            }
            Series {
                meta: meta.clone(),
                values,
            }
        })
        .collect();
    MixedFrequencyPanel::new(start, len, series, vintage)
}

pub fn load_panel(path: &Path, schema: &[SeriesMeta]) -> Result<MixedFrequencyPanel> {
    let vintage = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_panel(File::open(path).map_err(|e| Error::io(path, e))?, schema, &vintage)
}

/// Writes observed values as `date,series_id,value`, series-major.
pub fn write_panel<W: Write>(panel: &MixedFrequencyPanel, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["date", "series_id", "value"])?;
    for s in panel.series() {
        for (t, v) in s.values.iter().enumerate() {
            if let Some(x) = v {
                wtr.write_record([
                    panel.month_at(t).to_string(),
                    s.meta.id.clone(),
                    format!("{x}"),
                ])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<panel csv>", e))?;
    Ok(())
}

/// Per-series publication lags, with optional per-month overrides of the
/// last observable period.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReleaseCalendar {
    lags: HashMap<String, u32>,
    overrides: HashMap<(String, Month), Month>,
}

#[derive(Debug, Deserialize)]
struct LagRecord {
    series_id: String,
    release_lag_months: u32,
}

#[derive(Debug, Deserialize)]
struct OverrideRecord {
    series_id: String,
    month: String,
    last_period: String,
}

impl ReleaseCalendar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_schema(schema: &[SeriesMeta]) -> Self {
        Self {
            lags: schema
                .iter()
                .map(|m| (m.id.clone(), m.release_lag_months))
                .collect(),
            overrides: HashMap::new(),
        }
    }

    pub fn with_lag(mut self, id: &str, lag: u32) -> Self {
        self.lags.insert(id.to_string(), lag);
        self
    }

    pub fn with_override(mut self, id: &str, as_of: Month, last_period: Month) -> Result<Self> {
        self.overrides
            .insert((id.to_string(), as_of), last_period);
        self.check_monotone(id)?;
        Ok(self)
    }

    /// Reads `series_id,release_lag_months`.
    pub fn read_lags<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut cal = Self::new();
        for rec in rdr.deserialize::<LagRecord>() {
            let rec = rec?;
            cal.lags.insert(rec.series_id, rec.release_lag_months);
        }
        Ok(cal)
    }

    /// Adds overrides from `series_id,month,last_period`.
    pub fn read_overrides<R: Read>(mut self, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut touched = HashSet::new();
        for rec in rdr.deserialize::<OverrideRecord>() {
            let rec = rec?;
            if !self.lags.contains_key(&rec.series_id) {
                return Err(Error::MissingCalendarEntry(rec.series_id));
            }
            self.overrides
                .insert((rec.series_id.clone(), rec.month.parse()?), rec.last_period.parse()?);
            touched.insert(rec.series_id);
        }
        for id in touched {
            self.check_monotone(&id)?;
        }
        Ok(self)
    }

    pub fn load(lags: &Path, overrides: Option<&Path>) -> Result<Self> {
        let cal = Self::read_lags(File::open(lags).map_err(|e| Error::io(lags, e))?)?;
        match overrides {
            None => Ok(cal),
            Some(p) => cal.read_overrides(File::open(p).map_err(|e| Error::io(p, e))?),
        }
    }

    pub fn lag(&self, id: &str) -> Option<u32> {
        self.lags.get(id).copied()
    }

    /// Last month whose data for `id` is published by the end of `as_of`.
    pub fn last_observable(&self, id: &str, as_of: Month) -> Result<Month> {
        if let Some(m) = self.overrides.get(&(id.to_string(), as_of)) {
            return Ok(*m);
        }
        let lag = self
            .lag(id)
            .ok_or_else(|| Error::MissingCalendarEntry(id.to_string()))?;
        Ok(as_of.offset(-(lag as i32)))
    }

    fn check_monotone(&self, id: &str) -> Result<()> {
        let mut months: Vec<Month> = self
            .overrides
            .keys()
            .filter(|(s, _)| s == id)
            .flat_map(|(_, m)| [m.offset(-1), *m, m.offset(1)])
            .collect();
        months.sort();
        months.dedup();
        for w in months.windows(2) {
            if w[1].since(w[0]) != 1 {
                continue;
            }
            let (a, b) = (self.last_observable(id, w[0])?, self.last_observable(id, w[1])?);
            if b < a {
                return Err(Error::InvalidInput(format!(
                    "calendar for `{id}` is not monotone: {} sees {a} but {} sees {b}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

/// The panel as observable at the end of month `as_of`: the axis ends at
/// `as_of` and every series is cut at its last published period.
pub fn truncate_to_vintage(
    panel: &MixedFrequencyPanel,
    calendar: &ReleaseCalendar,
    as_of: Month,
) -> Result<MixedFrequencyPanel> {
    let cut = panel.cut_at(as_of)?;
    let series = cut
        .series
        .iter()
        .map(|s| {
            let last = calendar.last_observable(s.id(), as_of)?;
            let values = s
                .values
                .iter()
                .enumerate()
                .map(|(t, v)| if cut.month_at(t) <= last { *v } else { None })
                .collect();
            Ok(Series {
                meta: s.meta.clone(),
                values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixedFrequencyPanel {
        start: cut.start,
        len: cut.len,
        series,
        vintage: as_of.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Vec<SeriesMeta> {
        vec![
            SeriesMeta::new("emp", Frequency::Monthly, Role::Endogenous, Scope::National)
                .with_release_lag(1),
            SeriesMeta::new("gdp", Frequency::Quarterly, Role::Endogenous, Scope::National)
                .with_release_lag(1),
            SeriesMeta::new("ca", Frequency::Annual, Role::Endogenous, Scope::State("CA".into()))
                .with_release_lag(3),
        ]
    }

    #[test]
    fn quarterly_value_is_placed_at_quarter_end() {
        let csv = "date,series_id,value\n1964-03,gdp,1.5\n";
        let p = read_panel(csv.as_bytes(), &schema(), "v").unwrap();
        assert_eq!(p.start(), Month::new(1964, 1));
        assert_eq!(p.len(), 3);
        assert_eq!(p.get("gdp").unwrap().values, vec![None, None, Some(1.5)]);
    }

    #[test]
    fn annual_value_outside_december_rejected() {
        let csv = "date,series_id,value\n1964-06,ca,2.0\n";
        let err = read_panel(csv.as_bytes(), &schema(), "v").unwrap_err();
        assert!(err.to_string().contains("annual value outside December"));
    }

    #[test]
    fn ingestion_errors() {
        let dup = "date,series_id,value\n1964-01,emp,1\n1964-01,emp,2\n";
        assert!(matches!(
            read_panel(dup.as_bytes(), &schema(), "v"),
            Err(Error::DuplicateObservation { .. })
        ));
        let unknown = "date,series_id,value\n1964-01,xx,1\n";
        assert!(matches!(
            read_panel(unknown.as_bytes(), &schema(), "v"),
            Err(Error::UnknownSeries(_))
        ));
        let q = "date,series_id,value\n1964-02,gdp,1\n";
        assert!(matches!(
            read_panel(q.as_bytes(), &schema(), "v"),
            Err(Error::FrequencyViolation { .. })
        ));
    }

    #[test]
    fn empty_cell_is_missing() {
        let csv = "date,series_id,value\n1964-01,emp,\n1964-02,emp,0.3\n";
        let p = read_panel(csv.as_bytes(), &schema(), "v").unwrap();
        assert_eq!(p.get("emp").unwrap().values, vec![None, Some(0.3)]);
    }

    #[test]
    fn frequency_break_switches_to_quarterly() {
        let meta = schema()[2].clone().with_break(Month::new(2005, 1));
        assert!(meta.observable_at(Month::new(2004, 12)));
        assert!(!meta.observable_at(Month::new(2004, 9)));
        assert!(meta.observable_at(Month::new(2005, 3)));
        assert!(meta.observable_at(Month::new(2005, 12)));
    }

    #[test]
    fn schema_rules() {
        let bad = SeriesMeta::new("x", Frequency::Annual, Role::Exogenous, Scope::National);
        assert!(bad.validate().is_err());
        let bad_t = SeriesMeta::new("x", Frequency::Monthly, Role::Exogenous, Scope::National).with_tcode(9);
        assert!(bad_t.validate().is_err());
        let text = "series_id,frequency,role,scope,tcode,release_lag_months\nemp,monthly,endogenous,national,5,1\nca,annual,endogenous,state:CA,8,3\n";
        let s = read_schema(text.as_bytes()).unwrap();
        assert_eq!(s[1].scope, Scope::State("CA".into()));
        let mut buf = Vec::new();
        write_schema(&s, &mut buf).unwrap();
        assert_eq!(read_schema(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn monthly_lag_one_in_april_sees_march() {
        let csv: String = std::iter::once("date,series_id,value".to_string())
            .chain((1..=12).map(|m| format!("2007-{m:02},emp,{m}")))
            .collect::<Vec<_>>()
            .join("\n");
        let p = read_panel(csv.as_bytes(), &schema(), "v").unwrap();
        let cal = ReleaseCalendar::from_schema(&schema());
        let v = truncate_to_vintage(&p, &cal, Month::new(2007, 4)).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.get("emp").unwrap().last_observed(), Some(2));
        assert_eq!(v.vintage(), "2007-04");
    }

    #[test]
    fn quarterly_gdp_in_january_sees_previous_q4() {
        let csv = "date,series_id,value\n2006-09,gdp,1\n2006-12,gdp,2\n2007-03,gdp,3\n";
        let p = read_panel(csv.as_bytes(), &schema(), "v").unwrap();
        let cal = ReleaseCalendar::from_schema(&schema());
        let v = truncate_to_vintage(&p, &cal, Month::new(2007, 1)).unwrap();
        let g = v.get("gdp").unwrap();
        assert_eq!(v.month_at(g.last_observed().unwrap()), Month::new(2006, 12));
    }

    #[test]
    fn zero_lag_is_identity_up_to_as_of() {
        let csv = "date,series_id,value\n2007-01,emp,1\n2007-02,emp,2\n2007-03,emp,3\n";
        let p = read_panel(csv.as_bytes(), &schema(), "v").unwrap();
        let cal = ReleaseCalendar::new().with_lag("emp", 0).with_lag("gdp", 0).with_lag("ca", 0);
        let v = truncate_to_vintage(&p, &cal, Month::new(2007, 3)).unwrap();
        assert_eq!(v.get("emp").unwrap().values, p.get("emp").unwrap().values);
    }

    #[test]
    fn missing_calendar_entry() {
        let csv = "date,series_id,value\n2007-01,emp,1\n";
        let p = read_panel(csv.as_bytes(), &schema(), "v").unwrap();
        let cal = ReleaseCalendar::new().with_lag("emp", 0);
        assert!(matches!(
            truncate_to_vintage(&p, &cal, Month::new(2007, 1)),
            Err(Error::MissingCalendarEntry(_))
        ));
    }

    #[test]
    fn override_must_stay_monotone() {
        let cal = ReleaseCalendar::new().with_lag("gdp", 2);
        assert!(cal
            .clone()
            .with_override("gdp", Month::new(2019, 1), Month::new(2018, 12))
            .is_ok());
        assert!(cal
            .clone()
            .with_override("gdp", Month::new(2019, 1), Month::new(2018, 9))
            .is_err());
        assert!(cal
            .with_override("gdp", Month::new(2019, 1), Month::new(2019, 3))
            .is_err());
        let text = "series_id,month,last_period\ngdp,2019-01,2018-12\n";
        let cal = ReleaseCalendar::new().with_lag("gdp", 2).read_overrides(text.as_bytes()).unwrap();
        assert_eq!(cal.last_observable("gdp", Month::new(2019, 1)).unwrap(), Month::new(2018, 12));
    }
}
