//! Intertemporal and cross-sectional restrictions expressed as linear
//! measurement rows on latent high-frequency growth rates.
//!
//! Quarterly growth is tied to monthly growth by the triangle
//! `(1, 2, 3, 2, 1) / 3` on monthly lags 0..4, annual growth to monthly
//! growth by `(1, 2, .., 12, .., 2, 1) / 12` on lags 0..22, and annual
//! growth to quarterly growth by `(1, 2, 3, 4, 3, 2, 1) / 4` on quarterly
//! lags 0..6. All three follow from averaging log levels within the low
//! frequency period; the annual/monthly triangle is the composition of the
//! other two.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::time::Month;

/// Weights on monthly lags 0..=4 for quarterly growth.
pub fn quarterly_monthly_weights() -> Vec<f64> {
    vec![1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0]
}

/// Weights on monthly lags 0..=22 for annual growth.
pub fn annual_monthly_weights() -> Vec<f64> {
    triangle(12)
}

/// Weights on quarterly lags 0..=6 for annual growth.
pub fn annual_quarterly_weights() -> Vec<f64> {
    triangle(4)
}

/// `(1, 2, .., m, .., 2, 1) / m`, the growth-rate weights for a low-frequency
/// period made of `m` high-frequency periods.
fn triangle(m: usize) -> Vec<f64> {
    (1..2 * m)
        .map(|k| k.min(2 * m - k) as f64 / m as f64)
        .collect()
}

/// Weights of a two-stage aggregation: `outer` applied every `stride`
/// high-frequency periods to an inner aggregate with weights `inner`.
pub fn compose_weights(outer: &[f64], stride: usize, inner: &[f64]) -> Vec<f64> {
    let len = (outer.len() - 1) * stride + inner.len();
    let mut out = vec![0.0; len];
    for (j, a) in outer.iter().enumerate() {
        for (k, m) in inner.iter().enumerate() {
            out[j * stride + k] += a * m;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    QuarterlyMonthly,
    AnnualMonthly,
    AnnualQuarterly,
    CrossSectionalMonthly,
    CrossSectionalQuarterly,
}

impl RowKind {
    pub fn is_cross_sectional(self) -> bool {
        matches!(
            self,
            RowKind::CrossSectionalMonthly | RowKind::CrossSectionalQuarterly
        )
    }
}

/// Left-hand side of a restriction.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// An observed low-frequency series; its value is the measurement.
    Observed(String),
    /// A latent variable at lag 0; the row then measures `0 = terms - target + noise`.
    Latent(String),
}

impl Target {
    pub fn id(&self) -> &str {
        match self {
            Target::Observed(s) | Target::Latent(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub latent: String,
    pub lag: usize,
    pub weight: f64,
}

/// Which periods a row applies to. Periods are identified by the calendar
/// month they end in (quarterly axes use quarter-end months).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Every,
    QuarterEnd,
    YearEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub activation: Activation,
    /// Active only for periods ending strictly before this month.
    pub before: Option<Month>,
    /// Active only for periods ending at or after this month.
    pub from: Option<Month>,
}

impl Schedule {
    pub fn new(activation: Activation) -> Self {
        Self {
            activation,
            before: None,
            from: None,
        }
    }

    pub fn is_active(&self, period_end: Month) -> bool {
        let on = match self.activation {
            Activation::Every => true,
            Activation::QuarterEnd => period_end.is_quarter_end(),
            Activation::YearEnd => period_end.is_year_end(),
        };
        on && self.before.is_none_or(|b| period_end < b)
            && self.from.is_none_or(|f| period_end >= f)
    }
}

/// A linear restriction `target = sum_k weight_k * latent_k[t - lag_k] + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub kind: RowKind,
    pub target: Target,
    pub terms: Vec<Term>,
    /// Measurement noise variance; zero for exact restrictions.
    pub variance: f64,
    pub schedule: Schedule,
}

fn lag_terms(latent: &str, weights: &[f64]) -> Vec<Term> {
    weights
        .iter()
        .enumerate()
        .map(|(lag, &weight)| Term {
            latent: latent.to_string(),
            lag,
            weight,
        })
        .collect()
}

fn check_id(id: &str) -> Result<()> {
    if id.trim().is_empty() {
        return Err(Error::InvalidInput("empty series id in restriction".into()));
    }
    Ok(())
}

/// Quarterly growth of `target` tied to monthly latent growth of `latent`,
/// active at quarter-end months.
pub fn quarterly_monthly_row(target: &str, latent: &str) -> Result<ConstraintRow> {
    check_id(target)?;
    check_id(latent)?;
    Ok(ConstraintRow {
        kind: RowKind::QuarterlyMonthly,
        target: Target::Observed(target.to_string()),
        terms: lag_terms(latent, &quarterly_monthly_weights()),
        variance: 0.0,
        schedule: Schedule::new(Activation::QuarterEnd),
    })
}

/// Annual growth tied to monthly latent growth, active in December of every
/// year ending before `break_month` (all years when `None`).
pub fn annual_monthly_row(
    target: &str,
    latent: &str,
    break_month: Option<Month>,
) -> Result<ConstraintRow> {
    check_id(target)?;
    check_id(latent)?;
    Ok(ConstraintRow {
        kind: RowKind::AnnualMonthly,
        target: Target::Observed(target.to_string()),
        terms: lag_terms(latent, &annual_monthly_weights()),
        variance: 0.0,
        schedule: Schedule {
            before: break_month,
            ..Schedule::new(Activation::YearEnd)
        },
    })
}

/// Annual growth tied to quarterly latent growth, active at the fourth
/// quarter of every year ending before `break_month`.
pub fn annual_quarterly_row(
    target: &str,
    latent: &str,
    break_month: Option<Month>,
) -> Result<ConstraintRow> {
    check_id(target)?;
    check_id(latent)?;
    Ok(ConstraintRow {
        kind: RowKind::AnnualQuarterly,
        target: Target::Observed(target.to_string()),
        terms: lag_terms(latent, &annual_quarterly_weights()),
        variance: 0.0,
        schedule: Schedule {
            before: break_month,
            ..Schedule::new(Activation::YearEnd)
        },
    })
}

fn check_states(states: &[(String, f64)], variance: f64) -> Result<()> {
    if states.is_empty() {
        return Err(Error::InvalidInput(
            "cross-sectional restriction needs at least one state".into(),
        ));
    }
    if let Some((id, w)) = states.iter().find(|(_, w)| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "state `{id}` has non-positive weight {w}"
        )));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "cross-sectional variance must be positive, got {variance}"
        )));
    }
    for (id, _) in states {
        check_id(id)?;
    }
    Ok(())
}

/// Monthly adding-up restriction: latent national growth equals the
/// share-weighted latent state growths up to Gaussian slack. Active every month.
pub fn cross_sectional_row(
    target: &str,
    states: &[(String, f64)],
    variance: f64,
) -> Result<ConstraintRow> {
    check_id(target)?;
    check_states(states, variance)?;
    Ok(ConstraintRow {
        kind: RowKind::CrossSectionalMonthly,
        target: Target::Latent(target.to_string()),
        terms: states
            .iter()
            .map(|(id, w)| Term {
                latent: id.clone(),
                lag: 0,
                weight: *w,
            })
            .collect(),
        variance,
        schedule: Schedule::new(Activation::Every),
    })
}

/// Quarterly adding-up restriction on an observed national quarterly series:
/// the state terms carry the share times the quarterly/monthly weights.
pub fn cross_sectional_quarterly_row(
    target: &str,
    states: &[(String, f64)],
    variance: f64,
) -> Result<ConstraintRow> {
    check_id(target)?;
    check_states(states, variance)?;
    let qw = quarterly_monthly_weights();
    let terms = states
        .iter()
        .flat_map(|(id, w)| {
            qw.iter().enumerate().map(move |(lag, m)| Term {
                latent: id.clone(),
                lag,
                weight: w * m,
            })
        })
        .collect();
    Ok(ConstraintRow {
        kind: RowKind::CrossSectionalQuarterly,
        target: Target::Observed(target.to_string()),
        terms,
        variance,
        schedule: Schedule::new(Activation::QuarterEnd),
    })
}

impl ConstraintRow {
    pub fn max_lag(&self) -> usize {
        self.terms.iter().map(|t| t.lag).max().unwrap_or(0)
    }

    pub fn weight_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    pub fn is_exact(&self) -> bool {
        self.variance == 0.0
    }

    /// Evaluates the weighted sum of terms; `value(latent, lag)` returns the
    /// latent value `lag` periods before the evaluation period.
    pub fn evaluate<F>(&self, mut value: F) -> f64
    where
        F: FnMut(&str, usize) -> f64,
    {
        self.terms
            .iter()
            .map(|t| t.weight * value(&t.latent, t.lag))
            .sum()
    }

    /// Restriction slack: target value minus the weighted terms. For a latent
    /// target, `target_value` is the latent variable at lag 0.
    pub fn residual<F>(&self, target_value: f64, value: F) -> f64
    where
        F: FnMut(&str, usize) -> f64,
    {
        target_value - self.evaluate(value)
    }

    /// Writes the row as `target,latent,lag,weight,variance` records.
    pub fn write_csv<W: Write>(&self, wtr: &mut csv::Writer<W>) -> Result<()> {
        for t in &self.terms {
            wtr.write_record([
                self.target.id().to_string(),
                t.latent.clone(),
                t.lag.to_string(),
                format!("{}", t.weight),
                format!("{}", self.variance),
            ])?;
        }
        Ok(())
    }
}

/// Writes an audit CSV with header `target,latent,lag,weight,variance`.
pub fn export_constraints<W: Write>(rows: &[ConstraintRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["target", "latent", "lag", "weight", "variance"])?;
    for r in rows {
        r.write_csv(&mut wtr)?;
    }
    wtr.flush().map_err(|e| Error::io("<constraint csv>", e))?;
    Ok(())
}
