//! Synthetic mixed-frequency panels with known monthly truth.
//!
//! Monthly state growth follows a common AR(1) factor plus persistent
//! idiosyncratic terms; national growth is the share-weighted sum of state
//! growth. The panel reports national growth quarterly, state growth
//! annually before an optional break and quarterly after it, a noisy
//! monthly national indicator and one noisy monthly indicator per state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregation::{annual_monthly_weights, quarterly_monthly_weights};
use crate::error::{Error, Result};
use crate::mfvar::{CrossSectionSpec, ModelSpec, StateWeight};
use crate::panel::{Frequency, MixedFrequencyPanel, Role, Scope, Series, SeriesMeta};
use crate::time::Month;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub seed: u64,
    pub start: Month,
    pub months: usize,
    pub states: usize,
    /// Output shares; equal shares when empty.
    pub weights: Vec<f64>,
    /// First month with quarterly state data; annual before. `None` means
    /// quarterly throughout.
    pub frequency_break: Option<Month>,
    pub mean_growth: f64,
    pub factor_persistence: f64,
    pub factor_sd: f64,
    pub state_persistence: f64,
    pub idiosyncratic_sd: f64,
    /// Loading of each state on the common factor.
    pub factor_loading: f64,
    pub national_indicator_noise: f64,
    pub state_indicator_noise: f64,
    /// Per-state indicator noise; `state_indicator_noise` for every state
    /// when empty.
    pub state_indicator_noises: Vec<f64>,
    /// Months between the end of a period and the release of state output.
    pub state_release_lag: u32,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            start: Month::new(1990, 1),
            months: 240,
            states: 3,
            weights: Vec::new(),
            frequency_break: None,
            mean_growth: 0.2,
            factor_persistence: 0.6,
            factor_sd: 0.5,
            state_persistence: 0.3,
            idiosyncratic_sd: 0.4,
            factor_loading: 1.0,
            national_indicator_noise: 0.15,
            state_indicator_noise: 0.15,
            state_indicator_noises: Vec::new(),
            state_release_lag: 3,
        }
    }
}

pub const NATIONAL_INDICATOR: &str = "us_emp";
pub const NATIONAL_OUTPUT: &str = "us_gdp";

pub fn state_output_id(i: usize) -> String {
    format!("gdp_s{}", i + 1)
}

pub fn state_indicator_id(i: usize) -> String {
    format!("emp_s{}", i + 1)
}

fn state_code(i: usize) -> String {
    format!("S{}", i + 1)
}

/// Simulated panel with the monthly truth behind it.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub panel: MixedFrequencyPanel,
    pub weights: Vec<f64>,
    /// Monthly truth per output series: national first, then states.
    pub truth: Vec<(String, Vec<f64>)>,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 {
            return Err(Error::Config("at least one state is required".into()));
        }
        if self.months < 36 {
            return Err(Error::Config("at least 36 months are required".into()));
        }
        if !self.weights.is_empty() && self.weights.len() != self.states {
            return Err(Error::Config("one weight per state is required".into()));
        }
        if !self.state_indicator_noises.is_empty() && self.state_indicator_noises.len() != self.states {
            return Err(Error::Config("one indicator noise per state is required".into()));
        }
        if self.state_indicator_noises.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("state_indicator_noises must be non-negative".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("weights must be positive".into()));
        }
        for (name, v) in [
            ("factor_persistence", self.factor_persistence),
            ("state_persistence", self.state_persistence),
        ] {
            if !(v.abs() < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (-1, 1)")));
            }
        }
        for (name, v) in [
            ("factor_sd", self.factor_sd),
            ("idiosyncratic_sd", self.idiosyncratic_sd),
            ("national_indicator_noise", self.national_indicator_noise),
            ("state_indicator_noise", self.state_indicator_noise),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn resolved_weights(&self) -> Vec<f64> {
        if self.weights.is_empty() {
            vec![1.0 / self.states as f64; self.states]
        } else {
            self.weights.clone()
        }
    }

    pub fn resolved_indicator_noises(&self) -> Vec<f64> {
        if self.state_indicator_noises.is_empty() {
            vec![self.state_indicator_noise; self.states]
        } else {
            self.state_indicator_noises.clone()
        }
    }

    pub fn schema(&self) -> Vec<SeriesMeta> {
        let mut out = vec![
            SeriesMeta::new(NATIONAL_INDICATOR, Frequency::Monthly, Role::Endogenous, Scope::National)
                .with_release_lag(1),
            SeriesMeta::new(NATIONAL_OUTPUT, Frequency::Quarterly, Role::Endogenous, Scope::National)
                .with_release_lag(1),
        ];
        for i in 0..self.states {
            let scope = Scope::State(state_code(i));
            let meta = match self.frequency_break {
                Some(b) => SeriesMeta::new(&state_output_id(i), Frequency::Annual, Role::Endogenous, scope)
                    .with_break(b),
                None => SeriesMeta::new(&state_output_id(i), Frequency::Quarterly, Role::Endogenous, scope),
            };
            out.push(meta.with_release_lag(self.state_release_lag));
        }
        for i in 0..self.states {
            out.push(
                SeriesMeta::new(
                    &state_indicator_id(i),
                    Frequency::Monthly,
                    Role::Exogenous,
                    Scope::State(state_code(i)),
                )
                .with_release_lag(1),
            );
        }
        out
    }
}

/// Low-frequency growth at `t` from monthly growth and aggregation weights.
fn aggregate(monthly: &[f64], t: usize, weights: &[f64]) -> Option<f64> {
    if t + 1 < weights.len() {
        return None;
    }
    Some(weights.iter().enumerate().map(|(k, w)| w * monthly[t - k]).sum())
}

pub fn simulate(config: &DgpConfig) -> Result<SimulatedData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z = || std_normal.sample(&mut rng);
    let n_s = config.states;
    let t_len = config.months;
    let weights = config.resolved_weights();
    let noises = config.resolved_indicator_noises();
    let burn = 60;

    let mut factor = 0.0;
    let mut idio = vec![0.0; n_s];
    let mut states = vec![Vec::with_capacity(t_len); n_s];
    let mut nat_ind = Vec::with_capacity(t_len);
    let mut state_ind = vec![Vec::with_capacity(t_len); n_s];
    for t in 0..burn + t_len {
        factor = config.factor_persistence * factor + config.factor_sd * z();
        for i in 0..n_s {
            idio[i] = config.state_persistence * idio[i] + config.idiosyncratic_sd * z();
        }
        let growth: Vec<f64> = (0..n_s)
            .map(|i| config.mean_growth + config.factor_loading * factor + idio[i])
            .collect();
        let national: f64 = growth.iter().zip(&weights).map(|(g, w)| g * w).sum();
        let e_nat = config.national_indicator_noise * z();
        let e_state: Vec<f64> = (0..n_s).map(|i| noises[i] * z()).collect();
        if t >= burn {
            nat_ind.push(national + e_nat);
            for i in 0..n_s {
                states[i].push(growth[i]);
                state_ind[i].push(growth[i] + e_state[i]);
            }
        }
    }
    let national: Vec<f64> = (0..t_len)
        .map(|t| (0..n_s).map(|i| weights[i] * states[i][t]).sum())
        .collect();

    let qw = quarterly_monthly_weights();
    let aw = annual_monthly_weights();
    let month = |t: usize| config.start.offset(t as i32);
    let schema = config.schema();
    let mut series = Vec::new();
    series.push(Series {
        meta: schema[0].clone(),
        values: nat_ind.iter().map(|v| Some(*v)).collect(),
    });
    series.push(Series {
        meta: schema[1].clone(),
        values: (0..t_len)
            .map(|t| if month(t).is_quarter_end() { aggregate(&national, t, &qw) } else { None })
            .collect(),
    });
    for i in 0..n_s {
        let meta = schema[2 + i].clone();
        let values = (0..t_len)
            .map(|t| {
                let m = month(t);
                match meta.frequency_at(m) {
                    Frequency::Quarterly if m.is_quarter_end() => aggregate(&states[i], t, &qw),
                    Frequency::Annual if m.is_year_end() => aggregate(&states[i], t, &aw),
                    _ => None,
                }
            })
            .collect();
        series.push(Series { meta, values });
    }
    for i in 0..n_s {
        series.push(Series {
            meta: schema[2 + n_s + i].clone(),
            values: state_ind[i].iter().map(|v| Some(*v)).collect(),
        });
    }
    let panel = MixedFrequencyPanel::new(config.start, t_len, series, "simulated")?;
    let mut truth = vec![(NATIONAL_OUTPUT.to_string(), national)];
    for (i, s) in states.into_iter().enumerate() {
        truth.push((state_output_id(i), s));
    }
    Ok(SimulatedData {
        panel,
        weights,
        truth,
    })
}

impl SimulatedData {
    pub fn n_states(&self) -> usize {
        self.weights.len()
    }

    pub fn truth_of(&self, id: &str) -> Option<&[f64]> {
        self.truth.iter().find(|(s, _)| s == id).map(|(_, v)| v.as_slice())
    }

    /// Joint model of all states with a monthly adding-up restriction.
    pub fn full_spec(&self) -> ModelSpec {
        let n_s = self.n_states();
        let mut vars = vec![NATIONAL_INDICATOR.to_string(), NATIONAL_OUTPUT.to_string()];
        vars.extend((0..n_s).map(state_output_id));
        let mut spec = ModelSpec::new(vars);
        for i in 0..n_s {
            spec.exogenous.insert(state_output_id(i), vec![state_indicator_id(i)]);
        }
        spec.cross_sectional.push(CrossSectionSpec {
            national: NATIONAL_OUTPUT.to_string(),
            states: (0..n_s)
                .map(|i| StateWeight {
                    state: state_output_id(i),
                    weight: self.weights[i],
                })
                .collect(),
            frequency: Frequency::Monthly,
        });
        spec
    }

    /// One model per state with the national series and that state only.
    pub fn benchmark_specs(&self) -> Vec<ModelSpec> {
        (0..self.n_states())
            .map(|i| {
                let mut spec = ModelSpec::new(vec![
                    NATIONAL_INDICATOR.to_string(),
                    NATIONAL_OUTPUT.to_string(),
                    state_output_id(i),
                ]);
                spec.exogenous.insert(state_output_id(i), vec![state_indicator_id(i)]);
                spec
            })
            .collect()
    }
}
