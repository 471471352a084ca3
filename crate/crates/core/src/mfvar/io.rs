use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{NowcastDistribution, PosteriorDrawSet};
use crate::error::{Error, Result};
use crate::prior::{HorseshoeState, VarParameters};
use crate::time::Month;

pub const PARAMETER_FORMAT_VERSION: u32 = 1;

/// Writes the latent monthly paths as `draw,series,month,value` rows.
pub fn write_draws<W: Write>(draws: &PosteriorDrawSet, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["draw", "series", "month", "value"])?;
    for (d, path) in draws.paths.iter().enumerate() {
        for (v, id) in draws.ids.iter().enumerate() {
            if !draws.latent[v] {
                continue;
            }
            for t in 0..draws.months {
                wtr.write_record([
                    d.to_string(),
                    id.clone(),
                    draws.start.offset(t as i32).to_string(),
                    format!("{:e}", path[(t, v)]),
                ])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<draw csv>", e))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ParameterDump {
    format_version: u32,
    variables: Vec<String>,
    seed: u64,
    draws: Vec<ParameterDraw>,
}

#[derive(Serialize, Deserialize)]
struct ParameterDraw {
    parameters: VarParameters,
    scales: Vec<HorseshoeState>,
}

/// Writes the parameter draws as versioned JSON.
pub fn write_parameters<W: Write>(draws: &PosteriorDrawSet, out: W) -> Result<()> {
    let dump = ParameterDump {
        format_version: PARAMETER_FORMAT_VERSION,
        variables: draws.ids.clone(),
        seed: draws.seed,
        draws: draws
            .params
            .iter()
            .zip(&draws.scales)
            .map(|(p, s)| ParameterDraw {
                parameters: p.clone(),
                scales: s.clone(),
            })
            .collect(),
    };
    serde_json::to_writer(out, &dump).map_err(|e| Error::Parse(e.to_string()))
}

/// Reads a parameter dump; returns the variable ids and the parameter draws.
pub fn read_parameters<R: Read>(input: R) -> Result<(Vec<String>, Vec<VarParameters>)> {
    let dump: ParameterDump = serde_json::from_reader(input).map_err(|e| Error::Parse(e.to_string()))?;
    if dump.format_version != PARAMETER_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "parameter dump version {} is not supported (expected {PARAMETER_FORMAT_VERSION})",
            dump.format_version
        )));
    }
    Ok((dump.variables, dump.draws.into_iter().map(|d| d.parameters).collect()))
}

/// Monthly paths read back from a draw dump, keyed by series; one path per
/// draw, in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawPaths {
    pub start: Month,
    pub months: usize,
    pub series: BTreeMap<String, Vec<Vec<f64>>>,
}

/// Reads `draw,series,month,value` rows as written by [`write_draws`].
pub fn read_draws<R: Read>(input: R) -> Result<DrawPaths> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut cells: BTreeMap<String, BTreeMap<usize, BTreeMap<Month, f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("draw row has {} fields, expected 4", rec.len())));
        }
        let draw: usize = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad draw index `{}`", &rec[0])))?;
        let month: Month = rec[2].parse()?;
        let value: f64 = rec[3]
            .parse()
            .map_err(|_| Error::Parse(format!("bad value `{}`", &rec[3])))?;
        cells
            .entry(rec[1].to_string())
            .or_default()
            .entry(draw)
            .or_default()
            .insert(month, value);
    }
    let months: Vec<Month> = cells
        .values()
        .flat_map(|d| d.values().flat_map(|m| m.keys().copied()))
        .collect();
    let (start, end) = match (months.iter().min(), months.iter().max()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::NoRetainedDraws),
    };
    let len = (end.since(start) + 1) as usize;
    let mut series = BTreeMap::new();
    for (id, draws) in cells {
        let mut paths = Vec::with_capacity(draws.len());
        for (d, by_month) in draws {
            if by_month.len() != len {
                return Err(Error::Parse(format!(
                    "draw {d} of `{id}` covers {} of {len} months",
                    by_month.len()
                )));
            }
            paths.push(by_month.into_values().collect());
        }
        series.insert(id, paths);
    }
    Ok(DrawPaths {
        start,
        months: len,
        series,
    })
}

/// Posterior mean and 5/50/95% quantiles of every latent monthly path as
/// `series,month,mean,p05,p50,p95` rows.
pub fn write_path_summary<W: Write>(draws: &PosteriorDrawSet, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["series", "month", "mean", "p05", "p50", "p95"])?;
    for (v, id) in draws.ids.iter().enumerate() {
        if !draws.latent[v] {
            continue;
        }
        for t in 0..draws.months {
            let mut col: Vec<f64> = draws.paths.iter().map(|p| p[(t, v)]).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            let mean = col.iter().sum::<f64>() / col.len().max(1) as f64;
            wtr.write_record([
                id.clone(),
                draws.start.offset(t as i32).to_string(),
                format!("{mean:e}"),
                format!("{:e}", quantile(&col, 0.05)),
                format!("{:e}", quantile(&col, 0.5)),
                format!("{:e}", quantile(&col, 0.95)),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<summary csv>", e))
}

fn quantile(sorted: &[f64], prob: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = prob * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Predictive samples as `series,quarter,draw,value` rows.
pub fn write_nowcasts<W: Write>(dist: &NowcastDistribution, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["series", "quarter", "draw", "value"])?;
    for s in &dist.samples {
        for (d, v) in s.values.iter().enumerate() {
            wtr.write_record([s.series.clone(), s.quarter.to_string(), d.to_string(), format!("{v:e}")])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<nowcast csv>", e))
}
