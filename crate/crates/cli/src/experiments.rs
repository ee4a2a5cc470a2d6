//! Experiment runners: each produces schema-checked curve tables plus any
//! extra manifest fields.

use anyhow::{ensure, Context, Result};
use serde_json::json;

use qsteer_core::feedback::{sweep_vs_readout_time, NoiseModel, SweepConfig, SweepPoint};
use qsteer_core::fringe::{fit_fringe, generate_fringe_data, FringeModel};
use qsteer_core::measurement::{
    backaction_unconditional, measure_partial_forced, modified_weak_value, post_selection_state,
    weak_value, PartialMeasurement,
};
use qsteer_core::qubit::{bloch_from_density, Outcome, PureState};
use qsteer_core::readout::{
    nuclear_coherence_curve, qnd_fidelity, readout_outcome_fidelity, ReadoutMode, ReadoutModel,
};

use crate::config::{
    BackactionParams, CoherenceParams, Experiment, FeedbackParams, FringeParams, ReadoutParams,
    WeakValueParams,
};
use crate::output::{parallel_map, subseed, Cell, CsvTable};

/// Curves plus manifest extras from one experiment run.
pub struct ExperimentOutput {
    /// (file name, table) pairs.
    pub tables: Vec<(&'static str, CsvTable)>,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

pub fn run(experiment: &Experiment, seed: u64, threads: usize) -> Result<ExperimentOutput> {
    match experiment {
        Experiment::Fringe(p) => fringe(p, seed),
        Experiment::Backaction(p) => backaction(p),
        Experiment::WeakValue(p) => weakvalue(p),
        Experiment::Readout(p) => readout(p, seed),
        Experiment::Coherence(p) => coherence(p, seed, threads),
        Experiment::Feedback(p) => feedback(p, seed, threads),
    }
}

fn fringe(p: &FringeParams, seed: u64) -> Result<ExperimentOutput> {
    ensure!(p.points >= 5, "fringe needs at least 5 grid points");
    let model = FringeModel {
        baseline: p.baseline,
        amplitude: p.amplitude,
        frequency: std::f64::consts::TAU * p.coupling_mhz * 1e6,
        phase: p.phase,
        t2_star: p.t2_star_us * 1e-6,
    };
    let taus: Vec<f64> = (0..p.points)
        .map(|i| p.tau_max_us * 1e-6 * i as f64 / (p.points - 1) as f64)
        .collect();
    let data = generate_fringe_data(&model, &taus, p.shots, subseed(seed, 1, 0))?;
    let fit = fit_fringe(&data, None)?;

    let mut table = CsvTable::new(&["tau_s", "p0", "n_shots", "fit_p0"])?;
    for point in data.points() {
        table.push(vec![
            point.tau.into(),
            point.p0.into(),
            point.shots.into(),
            fit.params.value(point.tau).into(),
        ])?;
    }
    let mut extra = serde_json::Map::new();
    extra.insert(
        "fit".into(),
        json!({
            "baseline": fit.params.baseline,
            "amplitude": fit.params.amplitude,
            "frequency_rad_s": fit.params.frequency,
            "coupling_mhz": fit.params.frequency / (std::f64::consts::TAU * 1e6),
            "phase_rad": fit.params.phase,
            "t2_star_s": fit.params.t2_star,
            "std_errors": {
                "baseline": fit.std_errors.baseline,
                "amplitude": fit.std_errors.amplitude,
                "frequency_rad_s": fit.std_errors.frequency,
                "phase_rad": fit.std_errors.phase,
                "t2_star_s": fit.std_errors.t2_star,
            },
            "residual_norm": fit.residual_norm,
            "iterations": fit.iterations,
            "converged": fit.converged,
        }),
    );
    Ok(ExperimentOutput { tables: vec![("fringe.csv", table)], extra })
}

fn backaction(p: &BackactionParams) -> Result<ExperimentOutput> {
    ensure!(!p.thetas_deg.is_empty(), "backaction needs a theta grid");
    let rho = PureState::plus_x().density();
    let mut table = CsvTable::new(&[
        "theta_deg",
        "branch",
        "probability",
        "bloch_x",
        "bloch_y",
        "bloch_z",
    ])?;
    for &deg in &p.thetas_deg {
        let theta = deg.to_radians();
        let b = bloch_from_density(&backaction_unconditional(&rho, theta)?)?;
        table.push(vec![
            deg.into(),
            "unconditional".into(),
            1.0.into(),
            b.x.into(),
            b.y.into(),
            b.z.into(),
        ])?;
        for outcome in [Outcome::Zero, Outcome::One] {
            let m = measure_partial_forced(&rho, theta, outcome)
                .with_context(|| format!("branch {outcome} at {deg} deg"))?;
            let b = bloch_from_density(&m.post)?;
            table.push(vec![
                deg.into(),
                Cell::Text(format!("outcome_{}", outcome.index())),
                m.probability.into(),
                b.x.into(),
                b.y.into(),
                b.z.into(),
            ])?;
        }
    }
    Ok(ExperimentOutput { tables: vec![("backaction.csv", table)], extra: Default::default() })
}

fn weakvalue(p: &WeakValueParams) -> Result<ExperimentOutput> {
    ensure!(p.phi_step_deg > 0.0, "phi step must be positive");
    ensure!(
        (0.0..90.0).contains(&p.phi_max_deg),
        "analyzer angles must stay below 90 deg (orthogonal post-selection)"
    );
    let theta = p.theta_deg.to_radians();
    // Probabilities must be well defined for the digitized estimator.
    PartialMeasurement::new(theta)?;
    let initial = PureState::plus_x();
    let mut table = CsvTable::new(&["phi_deg", "weak_value", "modified_weak_value"])?;
    let mut phi_deg = 0.0;
    while phi_deg <= p.phi_max_deg + 1e-9 {
        let analyzer = post_selection_state(phi_deg.to_radians(), Outcome::Zero)?;
        let w = weak_value(&initial, &analyzer)?.re;
        let wm = modified_weak_value(&initial, &analyzer, theta)?;
        table.push(vec![phi_deg.into(), w.into(), wm.into()])?;
        phi_deg += p.phi_step_deg;
    }
    Ok(ExperimentOutput { tables: vec![("weakvalue.csv", table)], extra: Default::default() })
}

fn readout(p: &ReadoutParams, seed: u64) -> Result<ExperimentOutput> {
    ensure!(p.trials > 0, "trials must be positive");
    let model = ReadoutModel::calibrated();
    let mut table = CsvTable::new(&["mode", "quantity", "value", "std_error"])?;
    for (mi, mode) in [ReadoutMode::Conventional, ReadoutMode::DynamicalStop]
        .into_iter()
        .enumerate()
    {
        let label = match mode {
            ReadoutMode::Conventional => "conventional",
            ReadoutMode::DynamicalStop => "dynamical_stop",
        };
        let q = qnd_fidelity(&model, mode, p.trials, subseed(seed, 2, mi as u64))?;
        let mut rows = vec![
            ("post_state_fidelity_0", q.fidelity_0),
            ("post_state_fidelity_1", q.fidelity_1),
            ("average_post_state_fidelity", q.average_fidelity),
        ];
        if let Some(photon) = q.fidelity_0_given_photon {
            rows.push(("photon_conditioned_fidelity_0", photon));
        }
        for (name, est) in rows {
            table.push(vec![
                label.into(),
                name.into(),
                est.value.into(),
                est.std_error.into(),
            ])?;
        }
    }
    // Classification statistics do not depend on the stop rule.
    let (bright, dark) = readout_outcome_fidelity(&model, p.trials, subseed(seed, 3, 0))?;
    for (name, est) in [
        ("outcome_fidelity_bright", bright),
        ("outcome_fidelity_dark", dark),
    ] {
        table.push(vec![
            "either".into(),
            name.into(),
            est.value.into(),
            est.std_error.into(),
        ])?;
    }
    Ok(ExperimentOutput { tables: vec![("readout.csv", table)], extra: Default::default() })
}

fn coherence(p: &CoherenceParams, seed: u64, threads: usize) -> Result<ExperimentOutput> {
    ensure!(p.trials > 0, "trials must be positive");
    ensure!(!p.times_us.is_empty(), "coherence needs a time grid");
    let model = ReadoutModel::calibrated();
    let modes = [ReadoutMode::Conventional, ReadoutMode::DynamicalStop];
    let jobs = modes.len() * p.times_us.len();
    let points = parallel_map(jobs, threads, |j| {
        let mode = modes[j / p.times_us.len()];
        let time = p.times_us[j % p.times_us.len()] * 1e-6;
        let curve =
            nuclear_coherence_curve(&model, mode, &[time], p.trials, subseed(seed, 4, j as u64))?;
        Ok(curve[0])
    })?;

    let mut table = CsvTable::new(&[
        "mode",
        "time_s",
        "fidelity_x",
        "fidelity_x_std_error",
        "fidelity_z",
    ])?;
    for (j, point) in points.iter().enumerate() {
        let label = if j / p.times_us.len() == 0 { "conventional" } else { "dynamical_stop" };
        table.push(vec![
            label.into(),
            point.time.into(),
            point.fidelity_x.value.into(),
            point.fidelity_x.std_error.into(),
            point.fidelity_z.into(),
        ])?;
    }
    Ok(ExperimentOutput { tables: vec![("coherence.csv", table)], extra: Default::default() })
}

fn feedback(p: &FeedbackParams, seed: u64, threads: usize) -> Result<ExperimentOutput> {
    ensure!(p.trials > 0, "trials must be positive");
    ensure!(!p.budgets_us.is_empty(), "feedback needs a budget grid");
    let points: Vec<SweepPoint> = parallel_map(p.budgets_us.len(), threads, |i| {
        let config = SweepConfig {
            theta1: p.theta1_deg.to_radians(),
            budgets: vec![p.budgets_us[i] * 1e-6],
            noise: NoiseModel::calibrated(),
            trials: p.trials,
            seed: subseed(seed, 5, i as u64),
        };
        Ok(sweep_vs_readout_time(&config)?[0])
    })?;

    let mut table = CsvTable::new(&[
        "readout_budget_s",
        "herald_probability",
        "herald_std_error",
        "heralded_fidelity",
        "heralded_fidelity_std_error",
        "postselection_bound",
        "postselection_bound_std_error",
        "single_success_probability",
        "single_success_probability_std_error",
        "single_success_fidelity",
        "single_success_fidelity_std_error",
        "single_failure_fidelity",
        "single_failure_fidelity_std_error",
    ])?;
    for point in &points {
        table.push(vec![
            point.readout_budget.into(),
            point.herald_probability.value.into(),
            point.herald_probability.std_error.into(),
            point.heralded_fidelity.value.into(),
            point.heralded_fidelity.std_error.into(),
            point.postselection_bound.value.into(),
            point.postselection_bound.std_error.into(),
            point.single_success_probability.value.into(),
            point.single_success_probability.std_error.into(),
            point.single_success_fidelity.value.into(),
            point.single_success_fidelity.std_error.into(),
            point.single_failure_fidelity.value.into(),
            point.single_failure_fidelity.std_error.into(),
        ])?;
    }
    let mut extra = serde_json::Map::new();
    extra.insert("theta1_deg".into(), json!(p.theta1_deg));
    extra.insert("noise".into(), json!("calibrated"));
    Ok(ExperimentOutput { tables: vec![("feedback.csv", table)], extra })
}
