//! The two-step adaptive measurement-only steering protocol.
//!
//! A first partial measurement of strength theta1 on |x> either lands the
//! system in the target state (outcome 0) or in its mirror image (outcome 1).
//! In the second case a follow-up measurement of strength
//! theta2 = arcsin[2 sin theta1 / (1 + sin^2 theta1)] converts the wrong
//! branch exactly into the target on its own outcome 0. A trial is heralded
//! when either measurement reports outcome 0; no post-selection is performed.
//!
//! With noise enabled, each measurement is read out through the stochastic
//! fluorescence model (dynamical stop, configurable time budget), ancilla and
//! system initialization errors apply, and the readout that gates the
//! strength decision dephases the system. The readout after the final
//! measurement only heralds — tomography of the delivered state precedes it,
//! so its dephasing does not enter the reported state.

use rand::Rng;

use crate::constants::{INIT_FIDELITY_ANCILLA, INIT_FIDELITY_SYSTEM, NUCLEAR_T2_STAR};
use crate::error::{Error, Result};
use crate::measurement::{measure_partial, measure_partial_forced};
use crate::qubit::{
    bloch_from_density, density_from_bloch, fidelity, BlochVector, DensityMatrix, Outcome,
    PureState,
};
use crate::readout::{simulate_readout_budget, ReadoutModel, ReadoutMode};
use crate::stats::Estimate;
use crate::stream::derive_rng;

/// Target of the steering protocol:
/// cos(pi/4 - theta1/2)|down> + cos(pi/4 + theta1/2)|up>.
pub fn target_state(theta1: f64) -> Result<PureState> {
    check_theta(theta1)?;
    let minus = (std::f64::consts::FRAC_PI_4 - theta1 / 2.0).cos();
    let plus = (std::f64::consts::FRAC_PI_4 + theta1 / 2.0).cos();
    PureState::new(minus.into(), plus.into())
}

/// Mirror image of the target (coefficients swapped); the outcome-1 branch
/// of the first measurement.
pub fn wrong_state(theta1: f64) -> Result<PureState> {
    check_theta(theta1)?;
    let minus = (std::f64::consts::FRAC_PI_4 - theta1 / 2.0).cos();
    let plus = (std::f64::consts::FRAC_PI_4 + theta1 / 2.0).cos();
    PureState::new(plus.into(), minus.into())
}

fn check_theta(theta1: f64) -> Result<()> {
    if !theta1.is_finite() || !(0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&theta1) {
        return Err(Error::StrengthOutOfRange(theta1));
    }
    Ok(())
}

/// Strength of the corrective measurement:
/// theta2 = arcsin[2 sin theta1 / (1 + sin^2 theta1)], equivalently
/// tan(theta2/2) = sin theta1.
pub fn theta2_of_theta1(theta1: f64) -> Result<f64> {
    check_theta(theta1)?;
    let s = theta1.sin();
    Ok((2.0 * s / (1.0 + s * s)).asin())
}

/// Closed-form estimate (1 + cos theta1)/2 of the herald probability,
/// equal to (1 + |<wrong|target>|)/2. Kept for comparison with
/// [`success_probability_exact`]; the two agree only at theta1 = pi/2.
pub fn success_probability_estimate(theta1: f64) -> Result<f64> {
    check_theta(theta1)?;
    Ok(0.5 * (1.0 + theta1.cos()))
}

/// One outcome branch of the ideal protocol.
#[derive(Debug, Clone, Copy)]
pub struct BranchOutcome {
    pub outcome1: Outcome,
    pub outcome2: Option<Outcome>,
    /// Joint probability of the branch.
    pub probability: f64,
    /// Fidelity of the branch state to the target.
    pub fidelity: f64,
    pub heralded: bool,
}

/// Exact enumeration of the ideal two-step protocol.
#[derive(Debug, Clone)]
pub struct ExactProtocol {
    pub herald_probability: f64,
    pub fidelity_given_herald: f64,
    /// All branches with nonzero probability.
    pub branches: Vec<BranchOutcome>,
}

/// Enumerate every branch of the noise-free protocol on |x>.
///
/// The herald probability equals 1/2 + (1 - sin theta1 sin theta2)/4
/// analytically; this enumeration is the ground truth the closed forms are
/// checked against.
pub fn success_probability_exact(theta1: f64) -> Result<ExactProtocol> {
    check_theta(theta1)?;
    let target = target_state(theta1)?;
    let rho = PureState::plus_x().density();
    let mut branches = Vec::new();

    let first_hit = measure_partial_forced(&rho, theta1, Outcome::Zero)?;
    branches.push(BranchOutcome {
        outcome1: Outcome::Zero,
        outcome2: None,
        probability: first_hit.probability,
        fidelity: fidelity(&first_hit.post, &target)?,
        heralded: true,
    });

    let first_miss = measure_partial_forced(&rho, theta1, Outcome::One)?;
    let theta2 = theta2_of_theta1(theta1)?;
    for second in [Outcome::Zero, Outcome::One] {
        match measure_partial_forced(&first_miss.post, theta2, second) {
            Ok(m) => branches.push(BranchOutcome {
                outcome1: Outcome::One,
                outcome2: Some(second),
                probability: first_miss.probability * m.probability,
                fidelity: fidelity(&m.post, &target)?,
                heralded: second == Outcome::Zero,
            }),
            // A dead branch (theta1 = pi/2 makes the corrective outcome 0
            // impossible) simply drops out of the table.
            Err(Error::DegenerateBranch(_)) => {}
            Err(e) => return Err(e),
        }
    }

    let herald_probability: f64 =
        branches.iter().filter(|b| b.heralded).map(|b| b.probability).sum();
    let fidelity_given_herald = branches
        .iter()
        .filter(|b| b.heralded)
        .map(|b| b.probability * b.fidelity)
        .sum::<f64>()
        / herald_probability;
    Ok(ExactProtocol { herald_probability, fidelity_given_herald, branches })
}

/// Noise sources of the realistic protocol.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub readout: ReadoutModel,
    /// Probability the ancilla record matches the measurement branch.
    pub init_fidelity_ancilla: f64,
    /// Weight of |x> in the prepared system state (the rest is |-x>).
    pub init_fidelity_system: f64,
}

impl NoiseModel {
    /// Calibrated readout plus the device's initialization fidelities.
    pub fn calibrated() -> Self {
        Self {
            readout: ReadoutModel::calibrated(),
            init_fidelity_ancilla: INIT_FIDELITY_ANCILLA,
            init_fidelity_system: INIT_FIDELITY_SYSTEM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.readout.validate()?;
        for (name, v) in [
            ("init_fidelity_ancilla", self.init_fidelity_ancilla),
            ("init_fidelity_system", self.init_fidelity_system),
        ] {
            if !(0.5..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} outside [0.5, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Protocol parameters.
#[derive(Debug, Clone, Copy)]
pub struct ProtocolConfig {
    pub theta1: f64,
    /// Readout time budget per measurement, seconds (noisy runs).
    pub readout_budget: f64,
    pub noise: Option<NoiseModel>,
    /// Total attempts; above 1 the protocol resets via a projective
    /// x measurement and retries (noise-free runs only).
    pub max_rounds: u32,
    pub trials: u64,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn ideal(theta1: f64) -> Self {
        Self {
            theta1,
            readout_budget: 100e-6,
            noise: None,
            max_rounds: 1,
            trials: 100_000,
            seed: 0,
        }
    }

    pub fn noisy(theta1: f64, noise: NoiseModel) -> Self {
        Self { noise: Some(noise), ..Self::ideal(theta1) }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta1.is_finite()
            || !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.theta1)
            || self.theta1 == 0.0
        {
            return Err(Error::StrengthOutOfRange(self.theta1));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidParameter("max_rounds must be at least 1".into()));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
            if !(self.readout_budget > 0.0) {
                return Err(Error::InvalidParameter(
                    "readout budget must be positive".into(),
                ));
            }
            if self.max_rounds > 1 {
                return Err(Error::InvalidParameter(
                    "repeat-until-success resets are modeled noise-free only".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One realized protocol trial.
#[derive(Debug, Clone, Copy)]
pub struct ProtocolResult {
    /// Reported outcome of the first measurement (last round).
    pub outcome1: Outcome,
    /// Reported outcome of the corrective measurement; absent iff the first
    /// measurement already yielded the target branch.
    pub outcome2: Option<Outcome>,
    pub heralded: bool,
    pub final_state: DensityMatrix,
    pub fidelity_to_target: f64,
    /// Total laser-on time spent reading the ancilla, seconds.
    pub elapsed_readout: f64,
    /// Rounds consumed (1 unless resets are enabled).
    pub rounds: u32,
}

struct Stage {
    reported: Outcome,
    state: DensityMatrix,
    elapsed: f64,
}

/// One measurement stage: partial measurement, then (noisy runs) ancilla
/// record assignment, dynamical-stop readout within the budget, and, when
/// the stage gates a decision, the readout-induced dephasing of the system.
fn measure_and_read(
    rho: &DensityMatrix,
    theta: f64,
    noise: Option<&NoiseModel>,
    budget: f64,
    dephases_system: bool,
    rng: &mut impl Rng,
) -> Result<Stage> {
    let measured = measure_partial(rho, theta, rng)?;
    let Some(noise) = noise else {
        return Ok(Stage { reported: measured.outcome, state: measured.post, elapsed: 0.0 });
    };
    let level = if rng.gen_bool(noise.init_fidelity_ancilla) {
        measured.outcome
    } else {
        measured.outcome.flipped()
    };
    let bins = (budget / noise.readout.bin_duration).round().min(u32::MAX as f64) as u32;
    let rec = simulate_readout_budget(
        level,
        &noise.readout,
        ReadoutMode::DynamicalStop,
        bins,
        rng,
    )?;
    let elapsed = rec.stop_bin as f64 * noise.readout.bin_duration;
    let state = if dephases_system {
        let envelope = (-(elapsed / NUCLEAR_T2_STAR).powi(2)).exp();
        measured.post.dephased((rec.nuclear_coherence_factor * envelope).min(1.0))?
    } else {
        measured.post
    };
    Ok(Stage { reported: rec.outcome, state, elapsed })
}

/// Run one trial of the adaptive protocol.
pub fn run_protocol(config: &ProtocolConfig, rng: &mut impl Rng) -> Result<ProtocolResult> {
    config.validate()?;
    let noise = config.noise.as_ref();
    let target = target_state(config.theta1)?;
    let theta2 = theta2_of_theta1(config.theta1)?;
    let prepared = match noise {
        None => PureState::plus_x().density(),
        Some(n) => density_from_bloch(&BlochVector::new(
            2.0 * n.init_fidelity_system - 1.0,
            0.0,
            0.0,
        ))?,
    };

    let mut elapsed = 0.0;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let s1 = measure_and_read(&prepared, config.theta1, noise, config.readout_budget, true, rng)?;
        elapsed += s1.elapsed;
        let (outcome2, heralded, state) = if s1.reported == Outcome::Zero {
            (None, true, s1.state)
        } else {
            let s2 =
                measure_and_read(&s1.state, theta2, noise, config.readout_budget, false, rng)?;
            elapsed += s2.elapsed;
            (Some(s2.reported), s2.reported == Outcome::Zero, s2.state)
        };
        if heralded || rounds >= config.max_rounds {
            return Ok(ProtocolResult {
                outcome1: s1.reported,
                outcome2,
                heralded,
                final_state: state,
                fidelity_to_target: fidelity(&state, &target)?,
                elapsed_readout: elapsed,
                rounds,
            });
        }
        // Reset (noise-free by validation): measure projectively along x and
        // flip the phase on the -x result, restoring |x> exactly.
        let p_plus = 0.5 * (1.0 + bloch_from_density(&state)?.x);
        let _ = rng.gen_bool(p_plus.clamp(0.0, 1.0));
    }
}

/// Aggregate statistics of a batch of protocol trials.
#[derive(Debug, Clone, Copy)]
pub struct BatchSummary {
    pub trials: u64,
    pub herald_probability: Estimate,
    /// Mean fidelity of heralded trials (NaN if none heralded).
    pub heralded_fidelity: Estimate,
    /// Mean fidelity over all trials.
    pub overall_fidelity: Estimate,
    pub mean_elapsed_readout: f64,
}

/// Run `config.trials` independent trials; trial t draws its stream from
/// tags [4, t] of `config.seed`.
pub fn run_batch(config: &ProtocolConfig) -> Result<BatchSummary> {
    config.validate()?;
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut heralded = 0u64;
    let mut fid_heralded = Vec::new();
    let mut fid_all = Vec::with_capacity(config.trials as usize);
    let mut elapsed_sum = 0.0;
    for t in 0..config.trials {
        let mut rng = derive_rng(config.seed, &[4, t]);
        let r = run_protocol(config, &mut rng)?;
        if r.heralded {
            heralded += 1;
            fid_heralded.push(r.fidelity_to_target);
        }
        fid_all.push(r.fidelity_to_target);
        elapsed_sum += r.elapsed_readout;
    }
    Ok(BatchSummary {
        trials: config.trials,
        herald_probability: Estimate::binomial(heralded, config.trials),
        heralded_fidelity: Estimate::mean(&fid_heralded),
        overall_fidelity: Estimate::mean(&fid_all),
        mean_elapsed_readout: elapsed_sum / config.trials as f64,
    })
}

/// Inputs to the post-selection comparison bound.
#[derive(Debug, Clone, Copy)]
pub struct BranchFidelities {
    /// Success probability of the single-measurement reference.
    pub p_single: f64,
    /// Its fidelity on success.
    pub fid_success: f64,
    /// Its fidelity on failure.
    pub fid_failure: f64,
}

impl BranchFidelities {
    /// Noise-free values: p = 1/2, success hits the target exactly, failure
    /// overlaps by |<wrong|target>|^2 = cos^2 theta1.
    pub fn ideal(theta1: f64) -> Result<Self> {
        check_theta(theta1)?;
        Ok(Self {
            p_single: 0.5,
            fid_success: 1.0,
            fid_failure: theta1.cos().powi(2),
        })
    }
}

/// Best fidelity a single-measurement experiment can report at success
/// probability `p_adapt`, by diluting its successes with failures:
/// [p F_success + (p_adapt - p) F_failure] / p_adapt.
pub fn postselection_bound(p_adapt: f64, fids: &BranchFidelities) -> Result<f64> {
    if !(0.0..=1.0).contains(&fids.p_single)
        || !(0.0..=1.0).contains(&fids.fid_success)
        || !(0.0..=1.0).contains(&fids.fid_failure)
    {
        return Err(Error::InvalidParameter(
            "branch probabilities and fidelities must lie in [0, 1]".into(),
        ));
    }
    if !(p_adapt > 0.0 && p_adapt <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p_adapt = {p_adapt} outside (0, 1]"
        )));
    }
    if p_adapt < fids.p_single {
        return Err(Error::BoundNeedsDilution { p_adapt, p_single: fids.p_single });
    }
    Ok((fids.p_single * fids.fid_success + (p_adapt - fids.p_single) * fids.fid_failure)
        / p_adapt)
}

/// Sweep configuration over readout time budgets.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub theta1: f64,
    /// Budgets in seconds.
    pub budgets: Vec<f64>,
    pub noise: NoiseModel,
    pub trials: u64,
    pub seed: u64,
}

/// One budget point of the feedback-vs-bound comparison.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub readout_budget: f64,
    pub herald_probability: Estimate,
    pub heralded_fidelity: Estimate,
    /// Post-selection bound at the adaptive herald probability, from the
    /// single-measurement reference run (standard error by the delta method).
    pub postselection_bound: Estimate,
    pub single_success_probability: Estimate,
    pub single_success_fidelity: Estimate,
    pub single_failure_fidelity: Estimate,
}

/// Compare the adaptive protocol against the post-selected single
/// measurement across readout budgets. Streams: adaptive trial t of budget i
/// uses tags [5, i, t]; the single-measurement reference uses [6, i, t].
pub fn sweep_vs_readout_time(config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    if config.budgets.is_empty() {
        return Err(Error::InvalidParameter("no readout budgets given".into()));
    }
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut protocol = ProtocolConfig::noisy(config.theta1, config.noise);
    protocol.trials = config.trials;
    protocol.seed = config.seed;
    protocol.validate()?;
    let target = target_state(config.theta1)?;

    let mut points = Vec::with_capacity(config.budgets.len());
    for (bi, &budget) in config.budgets.iter().enumerate() {
        // Adaptive protocol.
        let mut heralded = 0u64;
        let mut fid_heralded = Vec::new();
        for t in 0..config.trials {
            let mut rng = derive_rng(config.seed, &[5, bi as u64, t]);
            let cfg = ProtocolConfig { readout_budget: budget, ..protocol };
            let r = run_protocol(&cfg, &mut rng)?;
            if r.heralded {
                heralded += 1;
                fid_heralded.push(r.fidelity_to_target);
            }
        }
        let herald_probability = Estimate::binomial(heralded, config.trials);
        let heralded_fidelity = Estimate::mean(&fid_heralded);

        // Single-measurement reference: stage 1 alone, same physics.
        let mut fid_success = Vec::new();
        let mut fid_failure = Vec::new();
        let prepared = density_from_bloch(&BlochVector::new(
            2.0 * config.noise.init_fidelity_system - 1.0,
            0.0,
            0.0,
        ))?;
        for t in 0..config.trials {
            let mut rng = derive_rng(config.seed, &[6, bi as u64, t]);
            let s = measure_and_read(
                &prepared,
                config.theta1,
                Some(&config.noise),
                budget,
                true,
                &mut rng,
            )?;
            let f = fidelity(&s.state, &target)?;
            if s.reported == Outcome::Zero {
                fid_success.push(f);
            } else {
                fid_failure.push(f);
            }
        }
        let p_single = Estimate::binomial(fid_success.len() as u64, config.trials);
        let f_success = Estimate::mean(&fid_success);
        let f_failure = Estimate::mean(&fid_failure);

        let fids = BranchFidelities {
            p_single: p_single.value,
            fid_success: f_success.value,
            fid_failure: f_failure.value,
        };
        let pa = herald_probability.value;
        let (bound, bound_se) = if pa <= fids.p_single {
            // No dilution needed; the reference's own success fidelity binds.
            (fids.fid_success, f_success.std_error)
        } else {
            let b = postselection_bound(pa, &fids)?;
            // Delta method over (p_single, F_s, F_f, p_adapt).
            let d_fs = fids.p_single / pa;
            let d_ff = (pa - fids.p_single) / pa;
            let d_p1 = (fids.fid_success - fids.fid_failure) / pa;
            let d_pa = (fids.fid_failure - b) / pa;
            let se = ((d_fs * f_success.std_error).powi(2)
                + (d_ff * f_failure.std_error).powi(2)
                + (d_p1 * p_single.std_error).powi(2)
                + (d_pa * herald_probability.std_error).powi(2))
            .sqrt();
            (b, se)
        };

        points.push(SweepPoint {
            readout_budget: budget,
            herald_probability,
            heralded_fidelity,
            postselection_bound: Estimate { value: bound, std_error: bound_se },
            single_success_probability: p_single,
            single_success_fidelity: f_success,
            single_failure_fidelity: f_failure,
        });
    }
    Ok(points)
}
