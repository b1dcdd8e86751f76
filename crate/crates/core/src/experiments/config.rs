use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{BackgroundSpec, KernelConfig, KernelMethod};
use crate::flow::{lattice_in_ball, lattice_in_box, LatticeSeeds};
use crate::functionals::FunctionalParams;
use crate::phase_state::{GridSpec, InitialDatumSpec};

/// Field model: sign of the interaction, softening and summation method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// +1 repulsive, −1 attractive.
    pub omega: f64,
    pub softening: f64,
    #[serde(default = "direct_sum")]
    pub method: KernelMethod,
}

fn direct_sum() -> KernelMethod {
    KernelMethod::DirectSum
}

/// Time stepping and sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    pub horizon: f64,
    pub particles: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub store_every: usize,
    #[serde(default = "one")]
    pub diagnostics_every: usize,
    /// Independent replicates (seeds `seed, seed+1, ...`) for median verdicts.
    #[serde(default = "three")]
    pub replicates: usize,
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

/// Lattice tracers measuring Lebesgue-measure claims.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeedingConfig {
    Ball {
        radius: f64,
        points_per_unit_cell: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        points_per_unit_cell: f64,
    },
}

impl SeedingConfig {
    pub fn build(&self, dim: usize) -> Result<LatticeSeeds> {
        let s = match self {
            SeedingConfig::Ball {
                radius,
                points_per_unit_cell,
            } => lattice_in_ball(dim, *radius, *points_per_unit_cell)?,
            SeedingConfig::Box {
                lower,
                upper,
                points_per_unit_cell,
            } => lattice_in_box(lower, upper, *points_per_unit_cell)?,
        };
        if s.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: 2 * dim,
                found: 2 * s.dim,
            });
        }
        Ok(s)
    }
}

/// What varies along an experiment sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    /// Phase-space mollification widths, strictly decreasing.
    Mollification,
    /// Wavenumbers of the `1 + sin(n x₁)` modulation, strictly increasing.
    Oscillation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub kind: SequenceKind,
    pub values: Vec<f64>,
    /// Half-width of the phase box used for histogram L¹ distances.
    #[serde(default = "default_histogram_half_width")]
    pub histogram_half_width: f64,
    #[serde(default = "default_histogram_cells")]
    pub histogram_cells: usize,
    /// Node shifts of the field translation moduli.
    #[serde(default = "default_shifts")]
    pub translation_shifts: Vec<usize>,
    #[serde(default = "default_translation_p")]
    pub translation_p: f64,
    /// Grid (N-dimensional) for field diagnostics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_grid: Option<GridSpec>,
    /// Additional deviation thresholds reported beside `functional.gamma`.
    #[serde(default)]
    pub gammas: Vec<f64>,
    /// Nodes per axis of the x-grid on `[-λ, λ]^N` for `‖b − b̄‖_{L¹}`.
    #[serde(default = "default_difference_cells")]
    pub field_difference_cells: usize,
}

fn default_difference_cells() -> usize {
    16
}

fn default_histogram_half_width() -> f64 {
    4.0
}

fn default_histogram_cells() -> usize {
    8
}

fn default_shifts() -> Vec<usize> {
    vec![1, 2, 4]
}

fn default_translation_p() -> f64 {
    1.5
}

/// Superlevel study: thresholds of `g(r, λ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperlevelConfig {
    pub lambdas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Fixed reduction order; always honoured, recorded for provenance.
    #[serde(default = "yes")]
    pub deterministic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Grid on which E is written at every stored sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_grid: Option<GridSpec>,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            deterministic: true,
            threads: None,
            field_grid: None,
        }
    }
}

/// Full description of a run or an experiment suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datum: InitialDatumSpec,
    #[serde(default = "zero_background")]
    pub background: BackgroundSpec,
    pub field: FieldConfig,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeding: Option<SeedingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superlevel: Option<SuperlevelConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn zero_background() -> BackgroundSpec {
    BackgroundSpec::Zero
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` after applying `key.path=value` overrides. Values are
    /// read as TOML (`run.dt=5e-4`, `datum.shape.kind="gaussian"`), falling
    /// back to a bare string. Unknown keys are rejected with the list of
    /// valid ones.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut root: toml::Table = text.parse().map_err(config_error)?;
        for ov in overrides {
            apply_override(&mut root, ov)?;
        }
        let cfg: Self = toml::Value::Table(root).try_into().map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.datum.dim
    }

    pub fn kernel(&self) -> KernelConfig {
        KernelConfig {
            dim: self.dim(),
            softening: self.field.softening,
            method: self.field.method.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        self.datum.validate()?;
        self.background.validate(d)?;
        self.kernel().validate()?;
        if self.field.omega != 1.0 && self.field.omega != -1.0 {
            return invalid(format!("omega must be +1 or -1, got {}", self.field.omega));
        }
        let r = &self.run;
        if !(r.dt > 0.0 && r.dt.is_finite()) || !(r.horizon >= r.dt && r.horizon.is_finite()) {
            return invalid("run.dt must be positive and run.horizon at least dt");
        }
        if r.particles == 0 || r.store_every == 0 || r.diagnostics_every == 0 || r.replicates == 0 {
            return invalid("run.particles, store_every, diagnostics_every and replicates must be positive");
        }
        crate::flow::AdvanceOptions::new(r.dt, r.horizon).steps()?;
        if let Some(s) = &self.seeding {
            s.build(d)?;
        }
        if let Some(p) = &self.functional {
            p.validate()?;
        }
        if let Some(seq) = &self.sequence {
            seq.validate(d)?;
        }
        if let Some(s) = &self.superlevel {
            if s.lambdas.is_empty() || s.lambdas.iter().any(|l| !(*l > 0.0)) {
                return invalid("superlevel.lambdas must be positive");
            }
        }
        if let Some(g) = &self.output.field_grid {
            if g.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: g.dim(),
                });
            }
        }
        if self.output.threads == Some(0) {
            return invalid("output.threads must be positive");
        }
        Ok(())
    }

    /// Repulsive-only guard of the existence theory and of the β superlevel
    /// functional: ω = +1, and for N ≤ 2 a background neutralising the datum.
    pub fn require_repulsive(&self, what: &str) -> Result<()> {
        if self.field.omega != 1.0 {
            return Err(Error::Config(format!(
                "{what} covers the repulsive case only (omega = +1); omega = {} was requested",
                self.field.omega
            )));
        }
        if self.dim() <= 2 {
            let neutral = match &self.background {
                BackgroundSpec::Neutral => true,
                bg => bg
                    .mass()
                    .is_some_and(|m| (m - self.datum.mass).abs() <= 1e-12 * self.datum.mass),
            };
            if !neutral {
                return Err(Error::Config(format!(
                    "{what} in dimension {} needs a background of the same mass as the datum",
                    self.dim()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn sequence(&self) -> Result<&SequenceConfig> {
        self.sequence
            .as_ref()
            .ok_or_else(|| Error::Config("missing [sequence] section".into()))
    }

    pub(crate) fn functional(&self) -> Result<&FunctionalParams> {
        self.functional
            .as_ref()
            .ok_or_else(|| Error::Config("missing [functional] section".into()))
    }

    pub(crate) fn seeding(&self) -> Result<&SeedingConfig> {
        self.seeding
            .as_ref()
            .ok_or_else(|| Error::Config("missing [seeding] section".into()))
    }
}

impl SequenceConfig {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.values.is_empty() || self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("sequence.values must be nonempty, finite and nonnegative");
        }
        let monotone = match self.kind {
            SequenceKind::Mollification => self.values.windows(2).all(|w| w[1] < w[0]),
            SequenceKind::Oscillation => self.values.windows(2).all(|w| w[1] > w[0]),
        };
        if !monotone {
            return Err(Error::Config(format!(
                "sequence.values must be strictly {} for a {:?} sequence",
                if self.kind == SequenceKind::Mollification {
                    "decreasing"
                } else {
                    "increasing"
                },
                self.kind
            )));
        }
        if !(self.histogram_half_width > 0.0) || self.histogram_cells == 0 {
            return invalid("histogram box must have positive size");
        }
        if self
            .histogram_cells
            .checked_pow(2 * dim as u32)
            .is_none_or(|n| n > 50_000_000)
        {
            return invalid("histogram grid too large");
        }
        if self.translation_shifts.is_empty() || self.translation_shifts.contains(&0) || !(self.translation_p >= 1.0) {
            return invalid("translation shifts must be positive and p at least 1");
        }
        if self.field_difference_cells == 0 {
            return invalid("sequence.field_difference_cells must be positive");
        }
        if self.gammas.iter().any(|g| !(*g > 0.0)) {
            return invalid("sequence.gammas must be positive");
        }
        if let Some(g) = &self.field_grid {
            if g.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: g.dim(),
                });
            }
        }
        Ok(())
    }
}

fn apply_override(root: &mut toml::Table, ov: &str) -> Result<()> {
    let Some((key, raw)) = ov.split_once('=') else {
        return Err(Error::Config(format!("override `{ov}` is not of the form key=value")));
    };
    let key = key.trim();
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
