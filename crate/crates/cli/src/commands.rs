//! Implementations of the five subcommands.

use std::path::Path;

use qcd_core::{
    hmm_filter_step, relative_entropy_rate, scalar_filter_step, seed, separation_report,
    sweep_thresholds, trap_study, AugmentedPosterior, ChainState, FilterMode, PosteriorState,
    QcdError, StudyConfig,
};

use crate::config::{ExperimentConfig, InitialBlock};
use crate::output::{config_hash, format_float, metadata_line, CsvFile};
use crate::CliError;

/// Validate the config and print model, structure and separation reports.
pub fn validate(config_path: &Path, allow_nonergodic: bool) -> Result<(), CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let hash = config_hash(&config.canonical_json());
    println!("config: {} (hash {hash})", config_path.display());

    let before = config.before_matrix()?;
    let after = config.after_matrix()?;
    println!(
        "model: {} states, rho = {}, initial = {}",
        config.model.n,
        config.model.rho,
        match &config.model.initial {
            InitialBlock::Keyword(word) => word.clone(),
            InitialBlock::Explicit(_) => "explicit".into(),
        }
    );
    for (name, matrix) in [("before", &before), ("after", &after)] {
        let report = matrix.structure();
        println!(
            "{name} chain: irreducible = {}, aperiodic = {} (period {})",
            report.irreducible, report.aperiodic, report.period
        );
    }

    let model = config.build_model(allow_nonergodic)?;
    match model.before().stationary() {
        Ok(pi) => {
            let rendered: Vec<String> = pi.probs().iter().map(|p| format!("{p:.8}")).collect();
            println!("stationary(before): [{}]", rendered.join(", "));
        }
        Err(e) => println!("stationary(before): unavailable ({e})"),
    }

    match separation_report(&model) {
        Ok(report) => {
            println!("rate(before | after) = {:.8}", report.rate_before_after);
            println!("rate(after | before) = {:.8}", report.rate_after_before);
            println!("prior bound ln(1/(1-rho)) = {:.8}", report.prior_bound);
            if report.sufficiently_separated {
                println!(
                    "verdict: sufficiently separated (margin {:.8})",
                    report.margin
                );
            } else {
                println!(
                    "WARNING: insufficiently separated (margin {:.8}); below this bound the \
                     no-change posterior can drift toward zero even when no change occurs",
                    report.margin
                );
            }
        }
        Err(e @ QcdError::NotErgodic { .. }) if allow_nonergodic => {
            println!("separation report: unavailable ({e})");
        }
        Err(e) => return Err(CliError::Invalid(format!("model: {e}"))),
    }
    println!("ok");
    Ok(())
}

/// Simulate one trajectory and write `k,state_index,regime` rows.
pub fn simulate(
    config_path: &Path,
    out: &Path,
    allow_nonergodic: bool,
    overrides: crate::config::Overrides,
) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    config.apply(overrides);
    let hash = config_hash(&config.canonical_json());
    let model = config.build_model(allow_nonergodic)?;
    let seed_value = config.run.master_seed;

    let mut rng = seed::derive(seed_value, "simulate", &[]);
    let trajectory = model
        .simulate(config.run.horizon, config.change_spec(), &mut rng)
        .map_err(|e| CliError::Runtime(format!("simulate: {e}")))?;

    let mut csv = CsvFile::create(out)?;
    csv.line(&metadata_line(&hash, seed_value))?;
    csv.line(&format!(
        "# nu={} horizon={}",
        trajectory.change_time(),
        trajectory.horizon()
    ))?;
    csv.line("k,state_index,regime")?;
    for (k, state) in trajectory.states().iter().enumerate() {
        let regime = if trajectory.change_time().changed_by(k) {
            "after"
        } else {
            "before"
        };
        csv.line(&format!("{k},{},{regime}", state.index()))?;
    }
    csv.finish()
}

/// Parse a trajectory CSV produced by `simulate`.
fn read_trajectory(path: &Path, n: usize) -> Result<Vec<ChainState>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut states = Vec::new();
    let mut saw_header = false;
    for (line_no, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != "k,state_index,regime" {
                return Err(CliError::Invalid(format!(
                    "{}: line {}: expected header \"k,state_index,regime\", got \"{line}\"",
                    path.display(),
                    line_no + 1
                )));
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split(',');
        let (k, state) = match (fields.next(), fields.next()) {
            (Some(k), Some(state)) => (k, state),
            _ => {
                return Err(CliError::Invalid(format!(
                    "{}: line {}: malformed row \"{line}\"",
                    path.display(),
                    line_no + 1
                )))
            }
        };
        let k: usize = k.parse().map_err(|_| {
            CliError::Invalid(format!(
                "{}: line {}: bad index \"{k}\"",
                path.display(),
                line_no + 1
            ))
        })?;
        let state: usize = state.parse().map_err(|_| {
            CliError::Invalid(format!(
                "{}: line {}: bad state \"{state}\"",
                path.display(),
                line_no + 1
            ))
        })?;
        if k != states.len() {
            return Err(CliError::Invalid(format!(
                "{}: line {}: row index {k} out of order (expected {})",
                path.display(),
                line_no + 1,
                states.len()
            )));
        }
        if state >= n {
            return Err(CliError::Invalid(format!(
                "{}: row {k}: state {state} out of range for {n}-state model",
                path.display()
            )));
        }
        states.push(ChainState::new(state));
    }
    if states.is_empty() {
        return Err(CliError::Invalid(format!(
            "{}: no trajectory rows found",
            path.display()
        )));
    }
    Ok(states)
}

/// Run the posterior filter over a stored trajectory and write
/// `k,m_b,log_m_b,alarm[,discrepancy]` rows.
pub fn filter(
    config_path: &Path,
    trajectory_path: &Path,
    mode: FilterMode,
    out: &Path,
    allow_nonergodic: bool,
    overrides: crate::config::Overrides,
) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    config.apply(overrides);
    let hash = config_hash(&config.canonical_json());
    let model = config.build_model(allow_nonergodic)?;
    let states = read_trajectory(trajectory_path, model.dim())?;
    let threshold = config.detection.threshold_h;

    let mut csv = CsvFile::create(out)?;
    csv.line(&metadata_line(&hash, config.run.master_seed))?;
    match mode {
        FilterMode::Both => csv.line("k,m_b,log_m_b,alarm,discrepancy")?,
        _ => csv.line("k,m_b,log_m_b,alarm")?,
    }

    let augmented = model.augmented();
    let mut scalar = PosteriorState::initial(states[0]);
    let mut dense = AugmentedPosterior::initial(model.dim(), states[0]);
    let mut full_log = 0.0f64;
    let mut full_prev_mass = 1.0f64;

    for (k, &obs) in states.iter().enumerate() {
        let step_error = |e: qcd_core::QcdError| CliError::Runtime(format!("row {k}: {e}"));
        let (mass, log_mass, discrepancy) = if k == 0 {
            (1.0, 0.0, 0.0)
        } else {
            match mode {
                FilterMode::Scalar => {
                    scalar = scalar_filter_step(&model, &scalar, obs).map_err(step_error)?;
                    (scalar.no_change, scalar.log_no_change, 0.0)
                }
                FilterMode::Full => {
                    dense = hmm_filter_step(&augmented, &dense, obs).map_err(step_error)?;
                    let mass = dense.before_mass();
                    let multiplier = if full_prev_mass > 0.0 {
                        mass / full_prev_mass
                    } else {
                        0.0
                    };
                    full_log += multiplier.ln();
                    full_prev_mass = mass;
                    (mass, full_log, 0.0)
                }
                FilterMode::Both => {
                    scalar = scalar_filter_step(&model, &scalar, obs).map_err(step_error)?;
                    dense = hmm_filter_step(&augmented, &dense, obs).map_err(step_error)?;
                    let gap = (scalar.no_change - dense.before_mass()).abs();
                    (scalar.no_change, scalar.log_no_change, gap)
                }
            }
        };
        let alarm = u8::from(k >= 1 && mass <= threshold);
        match mode {
            FilterMode::Both => csv.line(&format!(
                "{k},{},{},{alarm},{}",
                format_float(mass),
                format_float(log_mass),
                format_float(discrepancy)
            ))?,
            _ => csv.line(&format!(
                "{k},{},{},{alarm}",
                format_float(mass),
                format_float(log_mass)
            ))?,
        }
    }
    csv.finish()
}

/// Monte Carlo Bayes risk, one CSV row per threshold.
pub fn risk(
    config_path: &Path,
    out: &Path,
    thresholds: Option<&str>,
    overrides: crate::config::Overrides,
) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    config.apply(overrides);
    let hash = config_hash(&config.canonical_json());
    let model = config.build_model(false)?;

    let thresholds: Vec<f64> = match thresholds {
        None => vec![config.detection.threshold_h],
        Some(text) if text.trim().is_empty() => Vec::new(),
        Some(text) => {
            let mut parsed = Vec::new();
            for token in text.split(',') {
                let value: f64 = token.trim().parse().map_err(|_| {
                    CliError::Invalid(format!("--thresholds: cannot parse \"{token}\""))
                })?;
                if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                    return Err(CliError::Invalid(format!(
                        "--thresholds: {value} lies outside [0, 1]"
                    )));
                }
                parsed.push(value);
            }
            parsed
        }
    };

    let estimates = sweep_thresholds(
        &model,
        config.detection.cost_c,
        &thresholds,
        config.run.trials,
        config.run.horizon,
        config.run.master_seed,
    )
    .map_err(|e| CliError::Runtime(format!("risk: {e}")))?;

    let mut csv = CsvFile::create(out)?;
    csv.line(&metadata_line(&hash, config.run.master_seed))?;
    csv.line("h,mean_delay,delay_se,pfa,pfa_se,bayes_risk,censored_count")?;
    for estimate in &estimates {
        if estimate.censored > 0 {
            eprintln!(
                "warning: threshold {}: {} of {} trials censored at horizon {} (scored at tau = horizon + 1)",
                estimate.threshold, estimate.censored, estimate.trials, config.run.horizon
            );
        }
        csv.line(&format!(
            "{},{},{},{},{},{},{}",
            format_float(estimate.threshold),
            format_float(estimate.mean_delay),
            format_float(estimate.delay_std_error),
            format_float(estimate.false_alarm_prob),
            format_float(estimate.false_alarm_std_error),
            format_float(estimate.bayes_risk),
            estimate.censored
        ))?;
    }
    csv.finish()
}

/// No-change trap-frequency study over the configured family grid.
pub fn study(
    config_path: &Path,
    out: &Path,
    overrides: crate::config::Overrides,
) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    config.apply(overrides);
    let hash = config_hash(&config.canonical_json());
    let study_block = config
        .study
        .clone()
        .ok_or_else(|| CliError::Invalid("study: config has no study block".into()))?;

    let before = config.before_matrix()?;
    let prior = qcd_core::GeometricPrior::new(config.model.rho)
        .map_err(|e| CliError::Invalid(format!("model.rho: {e}")))?;
    let grid = ExperimentConfig::study_grid(&study_block);
    let family = ExperimentConfig::study_family(&study_block);
    let bound = qcd_core::prior_drift_bound(prior);

    let result = trap_study(
        &before,
        &family,
        &grid,
        prior,
        &StudyConfig {
            trials: config.run.trials,
            horizon: config.run.horizon,
            h_report: study_block.h_report,
        },
        config.run.master_seed,
    )
    .map_err(|e| CliError::Runtime(format!("study: {e}")))?;

    let mut csv = CsvFile::create(out)?;
    csv.line(&metadata_line(&hash, config.run.master_seed))?;
    csv.line("a,rer,verdict,trap_frequency")?;
    for (&a, &frequency) in result
        .parameter_grid
        .iter()
        .zip(result.trap_frequency.iter())
    {
        let after = family(a).map_err(|e| CliError::Invalid(format!("study.grid: {a}: {e}")))?;
        let rate = relative_entropy_rate(&before, &after)
            .map_err(|e| CliError::Runtime(format!("study: {e}")))?;
        let verdict = if rate >= bound {
            "sufficient"
        } else {
            "insufficient"
        };
        csv.line(&format!(
            "{},{},{verdict},{}",
            format_float(a),
            format_float(rate),
            format_float(frequency)
        ))?;
    }
    csv.finish()
}
