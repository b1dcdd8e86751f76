use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::functionals::StabilityReport;

/// One acceptance rule applied to one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub rule: String,
    pub metric: String,
    /// Value compared against `threshold` (the comparison is stated in `rule`).
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn new(rule: impl Into<String>, metric: impl Into<String>, value: f64, threshold: f64, pass: bool) -> Self {
        Self {
            rule: rule.into(),
            metric: metric.into(),
            value,
            threshold,
            pass,
        }
    }

    /// `value ≤ threshold`.
    pub fn at_most(rule: impl Into<String>, metric: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(rule, metric, value, threshold, value <= threshold)
    }

    /// `value ≥ threshold`.
    pub fn at_least(rule: impl Into<String>, metric: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(rule, metric, value, threshold, value >= threshold)
    }
}

/// Diagnostics of one sequence member for one replicate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub parameter: f64,
    pub replicate: usize,
    pub seed: u64,
    pub mass: f64,
    pub initial_energy: f64,
    /// `max_t |E(t) − E(0)| / |E(0)|`.
    pub energy_drift: f64,
    /// `max_t (E(t) − E(0)) / |E(0)|`.
    pub energy_excess: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_l1: Option<f64>,
    /// Deviation measure against the reference flow at the last sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_holds: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_difference_l1: Option<f64>,
    /// Sup over samples of the field translation modulus, per configured shift.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation_moduli: Option<Vec<f64>>,
    /// `|∬φ f_n⁰ − ∬φ f⁰|` for φ ∈ {1, x₁, |v|²}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_moments: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_functional: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superlevel: Option<Vec<f64>>,
}

/// Result of an experiment suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub suite: String,
    pub parameters: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    /// Per-parameter medians over replicates, by metric name.
    pub medians: BTreeMap<String, Vec<f64>>,
    /// Scalar summaries (fitted constants, reference values).
    #[serde(default)]
    pub summary: BTreeMap<String, f64>,
    pub members: Vec<MemberReport>,
    pub config: ExperimentConfig,
    /// Per-pair stability time series, written as separate files.
    #[serde(skip)]
    pub stability: Vec<(String, StabilityReport)>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.pass)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Per-member table, one row per (parameter, replicate).
    pub fn write_metrics_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "# parameter [width or wavenumber], replicate [1], seed [1], mass [mass], initial_energy [energy], \
             energy_drift [relative], energy_excess [relative], data_l1 [mass], deviation [phase volume], \
             phi_delta [phase volume], field_difference_l1 [field x phase volume x time], beta_functional [phase volume]"
        )?;
        writeln!(
            w,
            "parameter,replicate,seed,mass,initial_energy,energy_drift,energy_excess,data_l1,deviation,phi_delta,field_difference_l1,beta_functional"
        )?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for m in &self.members {
            writeln!(
                w,
                "{:e},{},{},{:e},{:e},{:e},{:e},{},{},{},{},{}",
                m.parameter,
                m.replicate,
                m.seed,
                m.mass,
                m.initial_energy,
                m.energy_drift,
                m.energy_excess,
                opt(m.data_l1),
                opt(m.deviation),
                opt(m.phi_delta),
                opt(m.field_difference_l1),
                opt(m.beta_functional)
            )?;
        }
        Ok(())
    }

    /// Writes `report.toml`, `metrics.csv` and the per-pair stability series.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.toml"), self.to_toml()?)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("metrics.csv"))?);
        self.write_metrics_csv(&mut f)?;
        f.flush()?;
        for (stem, rep) in &self.stability {
            rep.save(dir.join("stability"), stem)?;
        }
        Ok(())
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Medians over replicates of `metric`, per parameter index.
pub(crate) fn medians_of(
    members: &[MemberReport],
    parameters: &[f64],
    metric: impl Fn(&MemberReport) -> Option<f64>,
) -> Vec<f64> {
    parameters
        .iter()
        .map(|p| {
            let mut v: Vec<f64> = members
                .iter()
                .filter(|m| m.parameter == *p)
                .filter_map(&metric)
                .collect();
            median(&mut v)
        })
        .collect()
}

/// Number of places where `values` increases (0 for a nonincreasing sequence).
pub(crate) fn increases(values: &[f64]) -> usize {
    values.windows(2).filter(|w| !(w[1] <= w[0])).count()
}
