//! Connectedness from generalized variance decompositions, turning-point
//! dating and co-movement statistics on posterior output.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::aggregation::quarterly_monthly_weights;
use crate::error::{Error, Result};
use crate::linalg;
use crate::prior::VarParameters;
use crate::time::Month;

/// Row-normalized generalized forecast-error variance shares at one horizon.
/// `shares[(n, j)]` is the part of variable `n`'s error variance due to
/// shocks in variable `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectednessTable {
    pub horizon: usize,
    pub ids: Vec<String>,
    pub shares: DMatrix<f64>,
}

/// Moving-average coefficients `Psi_0 .. Psi_{h-1}` of a reduced-form VAR.
pub fn ma_coefficients(lags: &[DMatrix<f64>], n: usize, h: usize) -> Vec<DMatrix<f64>> {
    let mut psi: Vec<DMatrix<f64>> = Vec::with_capacity(h);
    for l in 0..h {
        if l == 0 {
            psi.push(DMatrix::identity(n, n));
            continue;
        }
        let mut m = DMatrix::zeros(n, n);
        for (k, phi) in lags.iter().enumerate().take(l) {
            m += phi * &psi[l - k - 1];
        }
        psi.push(m);
    }
    psi
}

/// Generalized decomposition of a reduced-form VAR with lag matrices
/// `lags` and error covariance `cov`.
pub fn generalized_fevd_reduced(
    ids: &[String],
    lags: &[DMatrix<f64>],
    cov: &DMatrix<f64>,
    horizon: usize,
) -> Result<ConnectednessTable> {
    let n = cov.nrows();
    if cov.ncols() != n || ids.len() != n || lags.iter().any(|m| m.shape() != (n, n)) {
        return Err(Error::Dimension("lag matrices, covariance and ids disagree".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if !lags.is_empty() {
        let p = lags.len();
        let mut comp = DMatrix::zeros(n * p, n * p);
        for (l, phi) in lags.iter().enumerate() {
            comp.view_mut((0, l * n), (n, n)).copy_from(phi);
        }
        for r in n..n * p {
            comp[(r, r - n)] = 1.0;
        }
        let rho = linalg::spectral_radius(&comp);
        if !(rho < 1.0) {
            return Err(Error::UnstableVar(rho));
        }
    }
    if (0..n).any(|j| !(cov[(j, j)] > 0.0)) {
        return Err(Error::Singular("error covariance has a non-positive variance".into()));
    }
    let psi = ma_coefficients(lags, n, horizon);
    let mut num = DMatrix::<f64>::zeros(n, n);
    let mut den = vec![0.0f64; n];
    for m in &psi {
        let ms = m * cov;
        let msm = &ms * m.transpose();
        for r in 0..n {
            den[r] += msm[(r, r)];
            for j in 0..n {
                num[(r, j)] += ms[(r, j)] * ms[(r, j)] / cov[(j, j)];
            }
        }
    }
    let mut shares = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        if !(den[r] > 0.0) {
            return Err(Error::Singular(format!("zero forecast-error variance for {}", ids[r])));
        }
        let row_total: f64 = (0..n).map(|j| num[(r, j)] / den[r]).sum();
        for j in 0..n {
            shares[(r, j)] = num[(r, j)] / den[r] / row_total;
        }
    }
    Ok(ConnectednessTable {
        horizon,
        ids: ids.to_vec(),
        shares,
    })
}

/// Generalized decomposition of a structural draw via its reduced form.
pub fn generalized_fevd(ids: &[String], params: &VarParameters, horizon: usize) -> Result<ConnectednessTable> {
    generalized_fevd_reduced(ids, &params.reduced_lags(), &params.reduced_covariance(), horizon)
}

/// Average of the per-draw tables. Unstable draws are skipped; the second
/// value counts them.
pub fn mean_connectedness(
    ids: &[String],
    draws: &[VarParameters],
    horizon: usize,
) -> Result<(ConnectednessTable, usize)> {
    let tables: Vec<Result<ConnectednessTable>> = draws
        .par_iter()
        .map(|p| generalized_fevd(ids, p, horizon))
        .collect();
    let n = ids.len();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut used = 0usize;
    let mut skipped = 0usize;
    for t in tables {
        match t {
            Ok(t) => {
                acc += t.shares;
                used += 1;
            }
            Err(Error::UnstableVar(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::NoRetainedDraws);
    }
    Ok((
        ConnectednessTable {
            horizon,
            ids: ids.to_vec(),
            shares: acc / used as f64,
        },
        skipped,
    ))
}

/// Split of a variable's inbound spillovers by the origin's block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FromSplit {
    pub own: f64,
    pub block: f64,
    pub other: f64,
}

impl ConnectednessTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::InvalidInput(format!(
                "variable index {i} out of range for {} variables",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.ids
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| Error::UnknownSeries(id.to_string()))
    }

    /// Spillovers received by `n` from all other variables.
    pub fn from(&self, n: usize) -> Result<f64> {
        self.check(n)?;
        Ok((0..self.len()).filter(|&j| j != n).map(|j| self.shares[(n, j)]).sum())
    }

    /// Spillovers transmitted by `j` to all other variables.
    pub fn to(&self, j: usize) -> Result<f64> {
        self.check(j)?;
        Ok((0..self.len()).filter(|&n| n != j).map(|n| self.shares[(n, j)]).sum())
    }

    pub fn own(&self, n: usize) -> Result<f64> {
        self.check(n)?;
        Ok(self.shares[(n, n)])
    }

    /// Inbound spillovers of `n` split into those from `block` members and
    /// those from the remaining variables.
    pub fn from_split(&self, n: usize, block: &[usize]) -> Result<FromSplit> {
        self.check(n)?;
        for &b in block {
            self.check(b)?;
        }
        let mut split = FromSplit {
            own: self.shares[(n, n)],
            block: 0.0,
            other: 0.0,
        };
        for j in (0..self.len()).filter(|&j| j != n) {
            if block.contains(&j) {
                split.block += self.shares[(n, j)];
            } else {
                split.other += self.shares[(n, j)];
            }
        }
        Ok(split)
    }

    /// `horizon,from_id,to_id,share`, where the shock originates in `from_id`.
    pub fn write_csv<W: Write>(&self, wtr: &mut csv::Writer<W>) -> Result<()> {
        for n in 0..self.len() {
            for j in 0..self.len() {
                wtr.write_record([
                    self.horizon.to_string(),
                    self.ids[j].clone(),
                    self.ids[n].clone(),
                    format!("{:e}", self.shares[(n, j)]),
                ])?;
            }
        }
        Ok(())
    }
}

pub fn write_connectedness<W: Write>(tables: &[ConnectednessTable], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["horizon", "from_id", "to_id", "share"])?;
    for t in tables {
        t.write_csv(&mut wtr)?;
    }
    wtr.flush().map_err(|e| Error::io("<connectedness csv>", e))
}

/// `id,horizon,from,to,own` per variable and table.
pub fn write_aggregates<W: Write>(tables: &[ConnectednessTable], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["id", "horizon", "from", "to", "own"])?;
    for t in tables {
        for (n, id) in t.ids.iter().enumerate() {
            wtr.write_record([
                id.clone(),
                t.horizon.to_string(),
                format!("{:e}", t.from(n)?),
                format!("{:e}", t.to(n)?),
                format!("{:e}", t.own(n)?),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<aggregates csv>", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnKind {
    Peak,
    Trough,
}

impl TurnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TurnKind::Peak => "peak",
            TurnKind::Trough => "trough",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurningPoint {
    pub index: usize,
    pub kind: TurnKind,
}

/// Alternating peaks and troughs in time order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TurningPointSet {
    pub points: Vec<TurningPoint>,
}

impl TurningPointSet {
    pub fn peaks(&self) -> Vec<usize> {
        self.of_kind(TurnKind::Peak)
    }

    pub fn troughs(&self) -> Vec<usize> {
        self.of_kind(TurnKind::Trough)
    }

    fn of_kind(&self, kind: TurnKind) -> Vec<usize> {
        self.points.iter().filter(|p| p.kind == kind).map(|p| p.index).collect()
    }

    /// Number of completed peak-to-trough phases.
    pub fn recessions(&self) -> usize {
        self.points
            .windows(2)
            .filter(|w| w[0].kind == TurnKind::Peak && w[1].kind == TurnKind::Trough)
            .count()
    }
}

/// Dating rules for monthly data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatingRules {
    pub window: usize,
    pub min_phase: usize,
    pub min_cycle: usize,
}

impl Default for DatingRules {
    fn default() -> Self {
        Self {
            window: 5,
            min_phase: 6,
            min_cycle: 15,
        }
    }
}

pub const MIN_DATING_LENGTH: usize = 24;

pub fn date_cycles(levels: &[f64]) -> Result<TurningPointSet> {
    date_cycles_with(levels, DatingRules::default())
}

/// Turning points of a (log-)level series: local extrema within the window,
/// then alternation, end-point and duration censoring.
pub fn date_cycles_with(levels: &[f64], rules: DatingRules) -> Result<TurningPointSet> {
    let t_len = levels.len();
    if t_len < MIN_DATING_LENGTH {
        return Err(Error::TooShort {
            needed: MIN_DATING_LENGTH,
            got: t_len,
        });
    }
    if levels.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("level series".into()));
    }
    let w = rules.window;
    let y = levels;
    let mut pts = Vec::new();
    for t in w..t_len.saturating_sub(w) {
        let left = &y[t - w..t];
        let right = &y[t + 1..=t + w];
        if left.iter().all(|v| y[t] > *v) && right.iter().all(|v| y[t] >= *v) {
            pts.push(TurningPoint { index: t, kind: TurnKind::Peak });
        } else if left.iter().all(|v| y[t] < *v) && right.iter().all(|v| y[t] <= *v) {
            pts.push(TurningPoint { index: t, kind: TurnKind::Trough });
        }
    }
    let more_extreme = |a: &TurningPoint, b: &TurningPoint| match a.kind {
        TurnKind::Peak => y[a.index] >= y[b.index],
        TurnKind::Trough => y[a.index] <= y[b.index],
    };
    let alternate = |pts: Vec<TurningPoint>| {
        let mut out: Vec<TurningPoint> = Vec::with_capacity(pts.len());
        for p in pts {
            match out.last() {
                Some(last) if last.kind == p.kind => {
                    if !more_extreme(last, &p) {
                        *out.last_mut().unwrap() = p;
                    }
                }
                _ => out.push(p),
            }
        }
        out
    };
    pts = alternate(pts);

    loop {
        let mut changed = false;
        // End points less extreme than the series ends are dropped.
        if let Some(first) = pts.first() {
            let beaten = match first.kind {
                TurnKind::Peak => y[..first.index].iter().any(|v| *v > y[first.index]),
                TurnKind::Trough => y[..first.index].iter().any(|v| *v < y[first.index]),
            };
            if beaten {
                pts.remove(0);
                changed = true;
            }
        }
        if let Some(last) = pts.last() {
            let beaten = match last.kind {
                TurnKind::Peak => y[last.index + 1..].iter().any(|v| *v > y[last.index]),
                TurnKind::Trough => y[last.index + 1..].iter().any(|v| *v < y[last.index]),
            };
            if beaten {
                pts.pop();
                changed = true;
            }
        }
        if changed {
            continue;
        }
        // A phase that runs the wrong way or is shorter than the minimum loses
        // an adjacent pair around it, keeping the more extreme turn of each kind.
        let inverted = pts.windows(2).position(|w| !more_extreme(&w[0], &w[1]));
        let short_phase = pts
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].index - w[0].index < rules.min_phase)
            .min_by_key(|(_, w)| w[1].index - w[0].index)
            .map(|(i, _)| i);
        if let Some(i) = inverted.or(short_phase) {
            let end_dominates = i > 0 && !more_extreme(&pts[i - 1], &pts[i + 1]);
            let start_dominates = i + 2 < pts.len() && !more_extreme(&pts[i + 2], &pts[i]);
            let from = if end_dominates {
                i - 1
            } else if start_dominates {
                i + 1
            } else {
                i
            };
            pts.drain(from..from + 2);
            continue;
        }
        // Shortest cycle below the minimum: drop the weaker of its same-kind
        // ends and the turn between them.
        let short_cycle = pts
            .windows(3)
            .enumerate()
            .filter(|(_, w)| w[2].index - w[0].index < rules.min_cycle)
            .min_by_key(|(_, w)| w[2].index - w[0].index)
            .map(|(i, _)| i);
        if let Some(i) = short_cycle {
            if more_extreme(&pts[i], &pts[i + 2]) {
                pts.drain(i + 1..i + 3);
            } else {
                pts.drain(i..i + 2);
            }
            continue;
        }
        break;
    }
    Ok(TurningPointSet { points: pts })
}

/// `series,kind,month` rows; point indices are offsets from `start`.
pub fn write_turning_points<W: Write>(sets: &[(String, TurningPointSet)], start: Month, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["series", "kind", "month"])?;
    for (id, set) in sets {
        for p in &set.points {
            wtr.write_record([id.as_str(), p.kind.as_str(), &start.offset(p.index as i32).to_string()])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<turning point csv>", e))
}

/// Log levels (up to a constant) from monthly growth in percent.
pub fn log_levels(growth: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    growth
        .iter()
        .map(|g| {
            acc += g / 100.0;
            acc
        })
        .collect()
}

/// Monthly quarter-on-quarter growth from monthly month-on-month growth;
/// the first four months are undefined and omitted.
pub fn quarter_on_quarter(monthly: &[f64]) -> Vec<f64> {
    let w = quarterly_monthly_weights();
    (w.len() - 1..monthly.len())
        .map(|t| w.iter().enumerate().map(|(k, wk)| wk * monthly[t - k]).sum())
        .collect()
}

/// Element-wise median across equally long paths.
pub fn median_path(paths: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = paths.first().ok_or(Error::NoRetainedDraws)?;
    if paths.iter().any(|p| p.len() != first.len()) {
        return Err(Error::Dimension("paths differ in length".into()));
    }
    Ok((0..first.len())
        .map(|t| {
            let mut col: Vec<f64> = paths.iter().map(|p| p[t]).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            let m = col.len();
            if m % 2 == 1 {
                col[m / 2]
            } else {
                0.5 * (col[m / 2 - 1] + col[m / 2])
            }
        })
        .collect())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("lengths {} and {} differ", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: a.len() });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if !(saa > 0.0) || !(sbb > 0.0) {
        return Err(Error::InvalidInput("zero-variance series".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation of each state path with the national path.
pub fn correlate_with_national(states: &[Vec<f64>], national: &[f64]) -> Result<Vec<f64>> {
    states.iter().map(|s| pearson(s, national)).collect()
}
