//! Stationarity transformations, their inverses, and the gap-filling
//! regressions used to complete state-level indicator series.

use std::io::Write;

use crate::error::{Error, Result};

/// Transformation code:
/// 1 level, 2 `Δx`, 3 `Δ²x`, 4 `log x`, 5 `Δlog x`, 6 `Δ²log x`,
/// 7 `Δ²(x_t/x_{t-1} - 1)`, 8 `x_t/x_{t-1} - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformSpec {
    tcode: u8,
}

impl TransformSpec {
    pub fn new(tcode: u8) -> Result<Self> {
        if !(1..=8).contains(&tcode) {
            return Err(Error::InvalidInput(format!("tcode {tcode} outside 1..=8")));
        }
        Ok(Self { tcode })
    }

    pub fn tcode(self) -> u8 {
        self.tcode
    }

    /// Number of leading observations consumed.
    pub fn order(self) -> usize {
        match self.tcode {
            1 | 4 => 0,
            2 | 5 | 8 => 1,
            3 | 6 => 2,
            7 => 3,
            _ => unreachable!(),
        }
    }

    fn uses_log(self) -> bool {
        matches!(self.tcode, 4..=6)
    }

    fn needs_positive(self) -> bool {
        matches!(self.tcode, 4..=8)
    }
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

fn growth(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Applies the transformation; the first `order` entries are missing.
pub fn apply_tcode(series: &[f64], spec: TransformSpec) -> Result<Vec<Option<f64>>> {
    let order = spec.order();
    if series.len() < order + 1 {
        return Err(Error::TooShort {
            needed: order + 1,
            got: series.len(),
        });
    }
    if spec.needs_positive() {
        if let Some((i, &v)) = series.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositive { index: i, value: v });
        }
    }
    let base: Vec<f64> = if spec.uses_log() {
        series.iter().map(|v| v.ln()).collect()
    } else {
        series.to_vec()
    };
    let body = match spec.tcode {
        1 | 4 => base,
        2 | 5 => diff(&base),
        3 | 6 => diff(&diff(&base)),
        7 => diff(&diff(&growth(&base))),
        8 => growth(&base),
        _ => unreachable!(),
    };
    Ok(std::iter::repeat_n(None, order)
        .chain(body.into_iter().map(Some))
        .collect())
}

fn undiff(start: f64, d: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(d.len() + 1);
    out.push(start);
    let mut acc = start;
    for v in d {
        acc += v;
        out.push(acc);
    }
    out
}

fn ungrowth(start: f64, g: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len() + 1);
    out.push(start);
    let mut acc = start;
    for v in g {
        acc *= 1.0 + v;
        out.push(acc);
    }
    out
}

/// Inverts [`apply_tcode`]. `transformed` holds the non-missing part and
/// `initial` the `order` leading levels consumed by the transformation.
/// The output has length `initial.len() + transformed.len()`.
pub fn invert_tcode(transformed: &[f64], spec: TransformSpec, initial: &[f64]) -> Result<Vec<f64>> {
    let order = spec.order();
    if initial.len() != order {
        return Err(Error::InvalidInput(format!(
            "tcode {} needs {order} initial values, got {}",
            spec.tcode,
            initial.len()
        )));
    }
    if spec.needs_positive() && initial.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("initial values must be positive".into()));
    }
    let z = transformed;
    Ok(match spec.tcode {
        1 => z.to_vec(),
        2 => undiff(initial[0], z),
        3 => {
            let d = undiff(initial[1] - initial[0], z);
            undiff(initial[0], &d)
        }
        4 => z.iter().map(|v| v.exp()).collect(),
        5 => undiff(initial[0].ln(), z).into_iter().map(f64::exp).collect(),
        6 => {
            let (l0, l1) = (initial[0].ln(), initial[1].ln());
            let d = undiff(l1 - l0, z);
            undiff(l0, &d).into_iter().map(f64::exp).collect()
        }
        7 => {
            let g1 = initial[1] / initial[0] - 1.0;
            let g2 = initial[2] / initial[1] - 1.0;
            let dg = undiff(g2 - g1, z);
            let g = undiff(g1, &dg);
            ungrowth(initial[0], &g)
        }
        8 => ungrowth(initial[0], z),
        _ => unreachable!(),
    })
}

/// Fills the leading gap of `state` by running the national series'
/// year-over-year growth backwards: `x[t] = x[t + 12] * nat[t] / nat[t + 12]`.
pub fn backcast_by_national_growth(state: &[Option<f64>], national: &[Option<f64>]) -> Result<Vec<f64>> {
    if state.len() != national.len() {
        return Err(Error::Dimension("state and national series lengths differ".into()));
    }
    let t0 = state
        .iter()
        .position(|v| v.is_some())
        .ok_or_else(|| Error::InvalidInput("state series has no observations".into()))?;
    let mut out: Vec<Option<f64>> = state.to_vec();
    for t in (0..t0).rev() {
        let ahead = t + 12;
        let next = out
            .get(ahead)
            .copied()
            .flatten()
            .ok_or(Error::TooShort {
                needed: ahead + 1,
                got: state.len(),
            })?;
        let (nat_t, nat_ahead) = match (national[t], national.get(ahead).copied().flatten()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "national series missing at month {t} or {ahead} inside the backcast gap"
                )))
            }
        };
        if nat_ahead == 0.0 {
            return Err(Error::InvalidInput(format!(
                "national series is zero at month {ahead}; growth rate undefined"
            )));
        }
        out[t] = Some(next * nat_t / nat_ahead);
    }
    out.into_iter()
        .enumerate()
        .map(|(t, v)| v.ok_or_else(|| Error::InvalidInput(format!("state series missing at month {t}"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsBackcast {
    pub values: Vec<Option<f64>>,
    pub intercept: f64,
    pub slope: f64,
}

/// Fits `state = a + b national` on the overlap and fills the leading gap
/// of `state` with the fitted values.
pub fn backcast_by_ols(state: &[Option<f64>], national: &[Option<f64>]) -> Result<OlsBackcast> {
    if state.len() != national.len() {
        return Err(Error::Dimension("state and national series lengths differ".into()));
    }
    let pairs: Vec<(f64, f64)> = state
        .iter()
        .zip(national)
        .filter_map(|(s, n)| Some(((*n)?, (*s)?)))
        .collect();
    if pairs.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: pairs.len(),
        });
    }
    let (intercept, slope) = simple_ols(&pairs)?;
    let t0 = state.iter().position(|v| v.is_some()).unwrap_or(state.len());
    let mut values = state.to_vec();
    for t in 0..t0 {
        let x = national[t].ok_or_else(|| {
            Error::InvalidInput(format!("national series missing at month {t} inside the backcast gap"))
        })?;
        values[t] = Some(intercept + slope * x);
    }
    Ok(OlsBackcast {
        values,
        intercept,
        slope,
    })
}

/// Intercept and slope of `y` on `x` for `(x, y)` pairs.
fn simple_ols(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-12 * (1.0 + mx * mx) * n) {
        return Err(Error::Singular("regressor has zero variance".into()));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// AR(1)-with-intercept coefficients `(c, phi)` fitted by OLS on consecutive
/// observed pairs.
pub fn fit_ar1(series: &[Option<f64>]) -> Result<(f64, f64)> {
    let n_obs = series.iter().filter(|v| v.is_some()).count();
    if n_obs < 10 {
        return Err(Error::TooShort {
            needed: 10,
            got: n_obs,
        });
    }
    let pairs: Vec<(f64, f64)> = series
        .windows(2)
        .filter_map(|w| Some((w[0]?, w[1]?)))
        .collect();
    simple_ols(&pairs)
}

/// Replaces trailing missing values, and `horizon` further months, by
/// iterated AR(1) forecasts estimated on the observed data.
pub fn fill_exogenous_ragged_edge(series: &[Option<f64>], horizon: usize) -> Result<Vec<Option<f64>>> {
    let last = series.iter().rposition(|v| v.is_some());
    let total = series.len() + horizon;
    let mut out = series.to_vec();
    out.resize(total, None);
    let last = match last {
        Some(l) if l + 1 == total => return Ok(out),
        Some(l) => l,
        None => {
            return Err(Error::TooShort {
                needed: 10,
                got: 0,
            })
        }
    };
    let (c, phi) = fit_ar1(series)?;
    let mut x = series[last].expect("last observed");
    for v in out.iter_mut().skip(last + 1) {
        x = c + phi * x;
        *v = Some(x);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Average share over the sample, constant across years.
    FullSample,
    /// Each year's own share.
    Annual,
}

/// Output shares per state (outer) and year (inner).
pub fn compute_state_weights(
    state_levels: &[Vec<f64>],
    national_levels: &[f64],
    mode: WeightMode,
) -> Result<Vec<Vec<f64>>> {
    let years = national_levels.len();
    if years == 0 || state_levels.is_empty() {
        return Err(Error::InvalidInput("no levels supplied".into()));
    }
    if let Some((i, &v)) = national_levels.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { index: i, value: v });
    }
    state_levels
        .iter()
        .map(|s| {
            if s.len() != years {
                return Err(Error::Dimension("every state needs a level for every year".into()));
            }
            if let Some((i, &v)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NonPositive { index: i, value: v });
            }
            let shares: Vec<f64> = s.iter().zip(national_levels).map(|(a, b)| a / b).collect();
            Ok(match mode {
                WeightMode::Annual => shares,
                WeightMode::FullSample => {
                    let mean = shares.iter().sum::<f64>() / years as f64;
                    vec![mean; years]
                }
            })
        })
        .collect()
}

/// Writes `state_id,weight` rows.
pub fn write_weights<W: Write>(ids: &[String], weights: &[f64], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["state_id", "weight"])?;
    for (id, w) in ids.iter().zip(weights) {
        wtr.write_record([id.clone(), format!("{w}")])?;
    }
    wtr.flush().map_err(|e| Error::io("<weights csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(code: u8) -> TransformSpec {
        TransformSpec::new(code).unwrap()
    }

    #[test]
    fn growth_examples() {
        let z = apply_tcode(&[5.0; 6], t(8)).unwrap();
        assert_eq!(z[0], None);
        assert!(z[1..].iter().all(|v| *v == Some(0.0)));
        let g: Vec<f64> = (0..6).map(|i| 2f64.powi(i)).collect();
        let z = apply_tcode(&g, t(5)).unwrap();
        assert!(z[1..].iter().all(|v| (v.unwrap() - 2f64.ln()).abs() < 1e-14));
        let z = apply_tcode(&[100.0, 103.0, 103.5], t(8)).unwrap();
        assert_eq!(z[0], None);
        assert!((z[1].unwrap() - 0.03).abs() < 1e-15);
        assert!((z[2].unwrap() - (103.5 / 103.0 - 1.0)).abs() < 1e-15);
        assert!((z[2].unwrap() - 0.004854).abs() < 1e-6);
    }

    #[test]
    fn transform_errors() {
        assert!(matches!(apply_tcode(&[1.0, -1.0, 2.0], t(5)), Err(Error::NonPositive { .. })));
        assert!(matches!(apply_tcode(&[1.0, 2.0], t(3)), Err(Error::TooShort { .. })));
        assert!(TransformSpec::new(0).is_err());
        assert!(invert_tcode(&[1.0], t(3), &[1.0]).is_err());
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(invert_tcode(&[0.0, 0.0, 0.0], t(8), &[100.0]).unwrap(), vec![100.0; 4]);
        assert_eq!(invert_tcode(&[1.0, 1.0], t(2), &[5.0]).unwrap(), vec![5.0, 6.0, 7.0]);
    }

    #[test]
    fn tcode7_round_trip() {
        let x = [10.0, 10.5, 10.4, 11.0, 11.8, 11.7, 12.5];
        let z: Vec<f64> = apply_tcode(&x, t(7)).unwrap().into_iter().flatten().collect();
        let back = invert_tcode(&z, t(7), &x[..3]).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10 * b.abs());
        }
    }

    #[test]
    fn national_growth_backcast() {
        let mut state = vec![None; 12];
        state.extend(vec![Some(7.0); 24]);
        let nat = vec![Some(5.0); 36];
        let out = backcast_by_national_growth(&state, &nat).unwrap();
        assert!(out.iter().all(|v| *v == 7.0));

        let mut state = vec![None; 12];
        state.extend(vec![Some(8.0); 12]);
        let nat: Vec<Option<f64>> = (0..24).map(|m| Some(if m < 12 { 1.0 } else { 2.0 })).collect();
        let out = backcast_by_national_growth(&state, &nat).unwrap();
        assert_eq!(out[0], 4.0);
        assert_eq!(out[12..], vec![8.0; 12][..]);
    }

    #[test]
    fn national_growth_backcast_errors() {
        let mut state = vec![None; 12];
        state.extend(vec![Some(7.0); 12]);
        let mut nat = vec![Some(5.0); 24];
        nat[3] = None;
        assert!(backcast_by_national_growth(&state, &nat).is_err());
        let mut nat = vec![Some(5.0); 24];
        nat[20] = Some(0.0);
        assert!(backcast_by_national_growth(&state, &nat).is_err());
    }

    #[test]
    fn ols_backcast_examples() {
        let nat: Vec<Option<f64>> = (0..10).map(|i| Some(1.0 + i as f64)).collect();
        let state: Vec<Option<f64>> = nat
            .iter()
            .enumerate()
            .map(|(i, n)| (i >= 4).then(|| 2.0 * n.unwrap()))
            .collect();
        let b = backcast_by_ols(&state, &nat).unwrap();
        assert!((b.slope - 2.0).abs() < 1e-12 && b.intercept.abs() < 1e-12);
        assert!((b.values[0].unwrap() - 2.0).abs() < 1e-12);

        let state: Vec<Option<f64>> = nat
            .iter()
            .enumerate()
            .map(|(i, n)| (i >= 4).then(|| n.unwrap() + 5.0))
            .collect();
        let b = backcast_by_ols(&state, &nat).unwrap();
        assert!((b.slope - 1.0).abs() < 1e-12 && (b.intercept - 5.0).abs() < 1e-12);

        let flat = vec![Some(3.0); 10];
        assert!(matches!(backcast_by_ols(&state, &flat), Err(Error::Singular(_))));
    }

    #[test]
    fn ar1_fill_examples() {
        let mut x: Vec<Option<f64>> = (0..12).map(|i| Some(64.0 * 0.5f64.powi(i))).collect();
        let last = x[11].unwrap();
        x.push(None);
        let out = fill_exogenous_ragged_edge(&x, 0).unwrap();
        assert!((out[12].unwrap() - 0.5 * last).abs() < 1e-12);

        let full: Vec<Option<f64>> = (0..12).map(|i| Some(i as f64)).collect();
        assert_eq!(fill_exogenous_ragged_edge(&full, 0).unwrap(), full);
        let short: Vec<Option<f64>> = vec![Some(1.0), Some(2.0), None];
        assert!(fill_exogenous_ragged_edge(&short, 1).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = compute_state_weights(&[vec![1.0, 2.0], vec![1.0, 2.0]], &[2.0, 4.0], WeightMode::FullSample)
            .unwrap();
        assert_eq!(w, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let w = compute_state_weights(&[vec![3.0, 4.0]], &[3.0, 4.0], WeightMode::FullSample).unwrap();
        assert_eq!(w, vec![vec![1.0, 1.0]]);
        let w = compute_state_weights(&[vec![1.0, 3.0]], &[4.0, 4.0], WeightMode::Annual).unwrap();
        assert_eq!(w, vec![vec![0.25, 0.75]]);
        assert!(compute_state_weights(&[vec![0.0]], &[1.0], WeightMode::Annual).is_err());
    }
}
