//! Scenario files: schema, validation and the derived run inputs.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, LabError, Result};
use crate::grid::{make_grid, make_params, sample_initial_data, DataKind, ProblemParams, RadialField, RadialGrid};
use crate::solver::SolverConfig;
use crate::spectral::{apply_lambda, estimate_decay_character_in, hankel_transform, DecayCharacterEstimate};
use crate::theory::FitWindow;

pub const SCHEMA: &str = "hslab.scenario/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub d: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub r_max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<FitWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitting_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kato_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_character_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Lambda,
    Gamma,
    D,
    QStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitySpec {
    #[serde(default = "default_corpus_size")]
    pub corpus_size: usize,
    #[serde(default = "yes")]
    pub rellich: bool,
}

fn default_corpus_size() -> usize {
    100
}

fn yes() -> bool {
    true
}

impl Default for InequalitySpec {
    fn default() -> Self {
        InequalitySpec {
            corpus_size: default_corpus_size(),
            rellich: true,
        }
    }
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub params: ParamsSpec,
    pub grid: GridSpec,
    pub data: DataKind,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_star: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inequalities: Option<InequalitySpec>,
}

/// Parse a scenario; serde failures are reported with the offending path.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        invalid(if path == "." { "scenario" } else { &path }, e.inner().to_string())
    })?;
    Ok(sc)
}

impl Scenario {
    /// Checks every descriptor without computing anything.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(invalid("schema", format!("expected \"{SCHEMA}\", found \"{}\"", self.schema)));
        }
        let params = make_params(self.params.d, self.params.gamma)?;
        if self.grid.n < 16 {
            return Err(invalid("grid.n", format!("n = {} but at least 16 cells are required", self.grid.n)));
        }
        if !(self.grid.r_max.is_finite() && self.grid.r_max > 0.0) {
            return Err(invalid("grid.r_max", "must be positive"));
        }
        self.data.validate(&params)?;
        self.solver.validate()?;
        if let Some(q) = self.q_star {
            if !(q > -(params.d as f64) / 2.0) {
                return Err(invalid("q_star", format!("q_star = {q} must exceed -d/2 = {}", -(params.d as f64) / 2.0)));
            }
        }
        for (i, a) in self.analyses.iter().enumerate() {
            let at = |f: &str| format!("analyses[{i}].{f}");
            if let Some(w) = a.fit_window {
                if !(w.t_lo >= 0.0 && w.t_lo < w.t_hi && w.t_hi <= self.solver.t_end) {
                    return Err(invalid(&at("fit_window"), "need 0 <= t_lo < t_hi <= solver.t_end"));
                }
                if !(w.offset >= 0.0 && w.offset + w.t_lo > 0.0) {
                    return Err(invalid(&at("fit_window.offset"), "offset + t_lo must be positive"));
                }
            }
            if let Some(m) = a.splitting_m {
                if !(m.is_finite() && m > 0.0) {
                    return Err(invalid(&at("splitting_m"), "must be positive"));
                }
            }
            if let Some(q) = a.kato_q {
                if !(q.is_finite() && q > 1.0) {
                    return Err(invalid(&at("kato_q"), format!("q = {q} must exceed 1")));
                }
            }
            if let Some((lo, hi)) = a.decay_character_window {
                if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                    return Err(invalid(&at("decay_character_window"), "need 0 < lo < hi"));
                }
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(invalid("sweep.values", "the axis list is empty"));
            }
            if sw.values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("sweep.values", "values must be finite"));
            }
        }
        if let Some(iq) = &self.inequalities {
            if iq.corpus_size == 0 {
                return Err(invalid("inequalities.corpus_size", "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemParams> {
        make_params(self.params.d, self.params.gamma)
    }

    pub fn radial_grid(&self, params: &ProblemParams) -> Result<Arc<RadialGrid>> {
        make_grid(params, self.grid.n, self.grid.r_max)
    }

    pub fn initial_data(&self) -> Result<(ProblemParams, RadialField)> {
        let params = self.problem()?;
        let grid = self.radial_grid(&params)?;
        let u0 = sample_initial_data(&self.data, &params, &grid)?;
        Ok((params, u0))
    }

    pub fn fit_window(&self) -> Option<FitWindow> {
        self.analyses.iter().find_map(|a| a.fit_window)
    }

    pub fn decay_character_window(&self) -> Option<(f64, f64)> {
        self.analyses.iter().find_map(|a| a.decay_character_window)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Copy with one axis value substituted.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Scenario> {
        let mut sc = self.clone();
        sc.sweep = None;
        match axis {
            Axis::Lambda => match &mut sc.data {
                DataKind::ScaledGroundState { lambda } => *lambda = value,
                DataKind::Gaussian { amplitude, .. } | DataKind::FrequencyProfile { amplitude, .. } => {
                    *amplitude = value
                }
            },
            Axis::Gamma => sc.params.gamma = value,
            Axis::D => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(invalid("sweep.values", format!("d = {value} is not a whole number")));
                }
                sc.params.d = value as usize;
            }
            Axis::QStar => sc.q_star = Some(value),
        }
        Ok(sc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataCharacters {
    pub u0: DecayCharacterEstimate,
    pub lambda_u0: DecayCharacterEstimate,
}

pub fn data_characters(u0: &RadialField, window: Option<(f64, f64)>) -> Result<DataCharacters> {
    let su = hankel_transform(u0)?;
    let sl = hankel_transform(&apply_lambda(u0, 1.0)?)?;
    Ok(DataCharacters {
        u0: estimate_decay_character_in(&su, window)?,
        lambda_u0: estimate_decay_character_in(&sl, window)?,
    })
}

/// q_star as supplied, otherwise the decay character of Lambda u0 when the fit is reliable.
pub fn resolve_q_star(sc: &Scenario, u0: &RadialField) -> Result<f64> {
    if let Some(q) = sc.q_star {
        return Ok(q);
    }
    let ch = data_characters(u0, sc.decay_character_window())?;
    if !ch.lambda_u0.reliable {
        return Err(LabError::Insufficient(format!(
            "q_star not supplied and the decay character of Lambda u0 is unreliable (residual {:.3})",
            ch.lambda_u0.fit_residual
        )));
    }
    Ok(ch.lambda_u0.r_star)
}
