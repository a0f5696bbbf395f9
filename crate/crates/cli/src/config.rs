//! Experiment configuration: JSON schema, validation and conversion into
//! core model objects.
//!
//! Matrices are nested row arrays in the column-stochastic convention
//! (`before[i][j]` is the probability of moving to state `i` from state
//! `j`), and every config must carry `"convention": "col-stochastic"` so a
//! transposed file fails loudly instead of validating by accident.

use serde::{Deserialize, Serialize};

use qcd_core::{
    two_state_symmetric, ChangePointModel, ChangeSpec, GeometricPrior, TransitionMatrix,
};

use crate::CliError;

pub const CONVENTION: &str = "col-stochastic";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub convention: String,
    pub model: ModelBlock,
    pub detection: DetectionBlock,
    pub run: RunBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub n: usize,
    pub before: Vec<Vec<f64>>,
    pub after: Vec<Vec<f64>>,
    pub rho: f64,
    pub initial: InitialBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialBlock {
    Keyword(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionBlock {
    pub threshold_h: f64,
    pub cost_c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub horizon: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub change_time: ChangeTimeBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChangeTimeBlock {
    Fixed(usize),
    Keyword(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    pub family: String,
    pub grid: GridBlock,
    pub h_report: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridBlock {
    Explicit(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

/// Command-line overrides folded into the config before hashing, so the
/// recorded hash always describes the effective run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub horizon: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, overrides: Overrides) {
        if let Some(seed) = overrides.seed {
            self.run.master_seed = seed;
        }
        if let Some(trials) = overrides.trials {
            self.run.trials = trials;
        }
        if let Some(horizon) = overrides.horizon {
            self.run.horizon = horizon;
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let invalid = |msg: String| Err(CliError::Invalid(msg));
        if self.convention != CONVENTION {
            return invalid(format!(
                "convention: expected \"{CONVENTION}\", got \"{}\"",
                self.convention
            ));
        }
        if self.model.n < 2 {
            return invalid(format!("model.n: must be at least 2, got {}", self.model.n));
        }
        for (name, rows) in [
            ("model.before", &self.model.before),
            ("model.after", &self.model.after),
        ] {
            if rows.len() != self.model.n {
                return invalid(format!(
                    "{name}: has {} rows but model.n = {}",
                    rows.len(),
                    self.model.n
                ));
            }
        }
        if let InitialBlock::Keyword(word) = &self.model.initial {
            if word != "stationary_b" {
                return invalid(format!(
                    "model.initial: unknown keyword \"{word}\" (expected \"stationary_b\" or an explicit vector)"
                ));
            }
        }
        if !self.detection.threshold_h.is_finite()
            || !(0.0..=1.0).contains(&self.detection.threshold_h)
        {
            return invalid(format!(
                "detection.threshold_h: must lie in [0, 1], got {}",
                self.detection.threshold_h
            ));
        }
        if !self.detection.cost_c.is_finite() || self.detection.cost_c <= 0.0 {
            return invalid(format!(
                "detection.cost_c: must be positive, got {}",
                self.detection.cost_c
            ));
        }
        if self.run.horizon < 1 {
            return invalid("run.horizon: must be at least 1".into());
        }
        if self.run.trials < 1 {
            return invalid("run.trials: must be at least 1".into());
        }
        match &self.run.change_time {
            ChangeTimeBlock::Fixed(nu) if *nu < 1 => {
                return invalid("run.change_time: must be at least 1".into());
            }
            ChangeTimeBlock::Keyword(word) if word != "sample" && word != "never" => {
                return invalid(format!(
                    "run.change_time: unknown keyword \"{word}\" (expected \"sample\" or \"never\")"
                ));
            }
            _ => {}
        }
        if let Some(study) = &self.study {
            if study.family != "two_state_symmetric" {
                return invalid(format!("study.family: unknown family \"{}\"", study.family));
            }
            if self.model.n != 2 {
                return invalid(format!(
                    "study.family: \"two_state_symmetric\" requires model.n = 2, got {}",
                    self.model.n
                ));
            }
            if !study.h_report.is_finite() || !(0.0..=1.0).contains(&study.h_report) {
                return invalid(format!(
                    "study.h_report: must lie in [0, 1], got {}",
                    study.h_report
                ));
            }
            match &study.grid {
                GridBlock::Explicit(points) if points.is_empty() => {
                    return invalid("study.grid: must be nonempty".into());
                }
                GridBlock::Range { start, stop, step } => {
                    if !(step.is_finite() && *step > 0.0) {
                        return invalid(format!("study.grid.step: must be positive, got {step}"));
                    }
                    if stop < start {
                        return invalid(format!("study.grid: stop {stop} precedes start {start}"));
                    }
                }
                GridBlock::Explicit(_) => {}
            }
        }
        Ok(())
    }

    /// Build the validated before-chain matrix.
    pub fn before_matrix(&self) -> Result<TransitionMatrix, CliError> {
        TransitionMatrix::new(self.model.before.clone())
            .map_err(|e| CliError::Invalid(format!("model.before: {e}")))
    }

    /// Build the validated after-chain matrix.
    pub fn after_matrix(&self) -> Result<TransitionMatrix, CliError> {
        TransitionMatrix::new(self.model.after.clone())
            .map_err(|e| CliError::Invalid(format!("model.after: {e}")))
    }

    /// Build the full change-point model.
    pub fn build_model(&self, allow_nonergodic: bool) -> Result<ChangePointModel, CliError> {
        let before = self.before_matrix()?;
        let after = self.after_matrix()?;
        let prior = GeometricPrior::new(self.model.rho)
            .map_err(|e| CliError::Invalid(format!("model.rho: {e}")))?;
        let initial = match &self.model.initial {
            InitialBlock::Keyword(_) => None,
            InitialBlock::Explicit(vector) => Some(vector.clone()),
        };
        ChangePointModel::with_options(before, after, prior, initial, allow_nonergodic)
            .map_err(|e| CliError::Invalid(format!("model: {e}")))
    }

    pub fn change_spec(&self) -> ChangeSpec {
        match &self.run.change_time {
            ChangeTimeBlock::Fixed(nu) => ChangeSpec::Fixed(*nu),
            ChangeTimeBlock::Keyword(word) if word == "never" => ChangeSpec::Never,
            ChangeTimeBlock::Keyword(_) => ChangeSpec::Sample,
        }
    }

    /// Expand the study grid into explicit parameter values.
    pub fn study_grid(study: &StudyBlock) -> Vec<f64> {
        match &study.grid {
            GridBlock::Explicit(points) => points.clone(),
            GridBlock::Range { start, stop, step } => {
                let mut grid = Vec::new();
                let mut k = 0usize;
                loop {
                    let value = start + step * k as f64;
                    if value > stop + 0.5 * step {
                        break;
                    }
                    grid.push(value);
                    k += 1;
                }
                grid
            }
        }
    }

    /// After-chain family named in the study block.
    pub fn study_family(
        study: &StudyBlock,
    ) -> impl Fn(f64) -> qcd_core::Result<TransitionMatrix> + Sync {
        debug_assert_eq!(study.family, "two_state_symmetric");
        two_state_symmetric
    }

    /// Canonical JSON of the effective config (stable field order).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}
