//! Stochastic model of the ancilla optical readout: binned photon detection,
//! bright-to-dark spin flips, dark counts, the dynamical-stop rule and the
//! induced dephasing of the system qubit.
//!
//! Time is discretized into excitation bins (1 us by default, 100 bins per
//! full window). While the electron is bright, each bin may yield a detected
//! photon (p_det) and may end with a spin flip to the dark state (p_flip);
//! emission is resolved before the flip within a bin. The dark state is
//! stable under the excitation laser and only produces false detections via
//! dark counts (p_dark); after a mid-readout flip the electron leaves the
//! cycling transition, so post-flip bins are detection-silent. The system
//! qubit loses coherence by a factor kappa per elapsed bright bin, down to a
//! saturation floor c_floor that engages in dynamical-stop mode.

use rand::Rng;

use crate::error::{Error, Result};
use crate::qubit::Outcome;
use crate::stats::Estimate;
use crate::stream::derive_rng;

/// Residual coherence at which the conventional readout is declared to have
/// completely dephased the system qubit (fidelity 0.52 to |x>); used to pin
/// kappa to the half-coherence-time calibration target.
pub const COMPLETE_DEPHASING_COHERENCE: f64 = 0.04;

/// How the excitation laser is gated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutMode {
    /// Laser on for the full window regardless of detections.
    Conventional,
    /// Laser stopped at the first detected photon.
    DynamicalStop,
}

/// Per-bin parameters of the fluorescence readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutModel {
    /// Duration of one excitation bin, seconds.
    pub bin_duration: f64,
    /// Bins in a full readout window.
    pub max_bins: u32,
    /// Photon-detection probability per bright bin.
    pub p_det: f64,
    /// Bright-to-dark spin-flip probability per bin.
    pub p_flip: f64,
    /// Dark-count detection probability per dark bin.
    pub p_dark: f64,
    /// System-coherence multiplier per elapsed bright bin.
    pub kappa: f64,
    /// Coherence saturation floor (dynamical-stop mode).
    pub c_floor: f64,
}

impl ReadoutModel {
    /// Noiseless device: every bright bin yields a photon, nothing flips.
    pub fn ideal() -> Self {
        Self {
            bin_duration: 1e-6,
            max_bins: 100,
            p_det: 1.0,
            p_flip: 0.0,
            p_dark: 0.0,
            kappa: 1.0,
            c_floor: 0.0,
        }
    }

    /// Model calibrated against the device's readout observables.
    pub fn calibrated() -> Self {
        use std::sync::OnceLock;
        static CACHE: OnceLock<ReadoutModel> = OnceLock::new();
        *CACHE.get_or_init(|| {
            calibrate_readout(&CalibrationTargets::standard())
                .expect("built-in targets are feasible")
                .model
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_det", self.p_det),
            ("p_flip", self.p_flip),
            ("p_dark", self.p_dark),
            ("c_floor", self.c_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa = {} outside (0, 1]",
                self.kappa
            )));
        }
        if !(self.bin_duration > 0.0) || self.max_bins == 0 {
            return Err(Error::InvalidParameter(
                "readout window must have positive duration".into(),
            ));
        }
        Ok(())
    }

    /// Duration of the full conventional window, seconds.
    pub fn window(&self) -> f64 {
        self.bin_duration * self.max_bins as f64
    }
}

/// One simulated readout trajectory.
#[derive(Debug, Clone, Copy)]
pub struct ReadoutRecord {
    pub mode: ReadoutMode,
    /// Classification: bright (`Zero`) iff at least one photon was detected.
    pub outcome: Outcome,
    /// Electron level when the laser switches off.
    pub post_electron: Outcome,
    /// Bin after which the laser stopped (= window length in conventional mode).
    pub stop_bin: u32,
    /// Bin of the first detected photon, if any.
    pub photon_bin: Option<u32>,
    /// Whether a bright-to-dark flip occurred.
    pub flipped: bool,
    /// Bright-excitation bins elapsed (frozen by a flip or the stop rule).
    pub bright_bins: u32,
    /// Residual system coherence factor in [0, 1].
    pub nuclear_coherence_factor: f64,
}

/// Simulate one full-window readout.
pub fn simulate_readout(
    electron_in: Outcome,
    model: &ReadoutModel,
    mode: ReadoutMode,
    rng: &mut impl Rng,
) -> Result<ReadoutRecord> {
    simulate_readout_budget(electron_in, model, mode, model.max_bins, rng)
}

/// Simulate a readout truncated to at most `budget_bins` excitation bins.
pub fn simulate_readout_budget(
    electron_in: Outcome,
    model: &ReadoutModel,
    mode: ReadoutMode,
    budget_bins: u32,
    rng: &mut impl Rng,
) -> Result<ReadoutRecord> {
    model.validate()?;
    let bins = budget_bins.min(model.max_bins);
    let mut electron = electron_in;
    let mut photon_bin: Option<u32> = None;
    let mut bright_bins = 0u32;
    let mut flipped = false;
    let mut stop_bin = bins;

    for bin in 1..=bins {
        match electron {
            Outcome::Zero => {
                bright_bins += 1;
                if rng.gen_bool(model.p_det) {
                    photon_bin = Some(bin);
                    if mode == ReadoutMode::DynamicalStop {
                        // Laser off before the flip channel can act this bin.
                        stop_bin = bin;
                        break;
                    }
                }
                if rng.gen_bool(model.p_flip) {
                    // A flipped electron leaves the cycling transition:
                    // post-flip bins are detection-silent, so nothing
                    // observable remains in the window.
                    electron = Outcome::One;
                    flipped = true;
                    break;
                }
            }
            Outcome::One => {
                if !flipped && rng.gen_bool(model.p_dark) {
                    photon_bin = Some(bin);
                    if mode == ReadoutMode::DynamicalStop {
                        stop_bin = bin;
                        break;
                    }
                }
            }
        }
    }

    let floor = match mode {
        ReadoutMode::DynamicalStop => model.c_floor,
        ReadoutMode::Conventional => 0.0,
    };
    let coherence = floor.max(model.kappa.powi(bright_bins as i32)).min(1.0);
    Ok(ReadoutRecord {
        mode,
        outcome: if photon_bin.is_some() { Outcome::Zero } else { Outcome::One },
        post_electron: electron,
        stop_bin,
        photon_bin,
        flipped,
        bright_bins,
        nuclear_coherence_factor: coherence,
    })
}

/// QND quality of the readout: does the ancilla survive in the level it
/// started in?
#[derive(Debug, Clone, Copy)]
pub struct QndReport {
    /// P(post-state 0 | input 0).
    pub fidelity_0: Estimate,
    /// P(post-state 1 | input 1).
    pub fidelity_1: Estimate,
    /// P(post-state 0 | input 0, at least one photon); `None` if no photon
    /// was ever detected.
    pub fidelity_0_given_photon: Option<Estimate>,
    /// Mean of fidelity_0 and fidelity_1.
    pub average_fidelity: Estimate,
}

/// Monte Carlo estimate of post-measurement state survival.
///
/// Trajectory t of input level l draws its stream from tags [1, l, t].
pub fn qnd_fidelity(
    model: &ReadoutModel,
    mode: ReadoutMode,
    trials: u64,
    seed: u64,
) -> Result<QndReport> {
    model.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut survived = [0u64; 2];
    let mut with_photon = 0u64;
    let mut survived_given_photon = 0u64;
    for (li, level) in [Outcome::Zero, Outcome::One].into_iter().enumerate() {
        for t in 0..trials {
            let mut rng = derive_rng(seed, &[1, li as u64, t]);
            let rec = simulate_readout(level, model, mode, &mut rng)?;
            if rec.post_electron == level {
                survived[li] += 1;
            }
            if level == Outcome::Zero && rec.photon_bin.is_some() {
                with_photon += 1;
                if rec.post_electron == Outcome::Zero {
                    survived_given_photon += 1;
                }
            }
        }
    }
    let fidelity_0 = Estimate::binomial(survived[0], trials);
    let fidelity_1 = Estimate::binomial(survived[1], trials);
    let average_fidelity = Estimate {
        value: 0.5 * (fidelity_0.value + fidelity_1.value),
        std_error: 0.5 * (fidelity_0.std_error.powi(2) + fidelity_1.std_error.powi(2)).sqrt(),
    };
    Ok(QndReport {
        fidelity_0,
        fidelity_1,
        fidelity_0_given_photon: (with_photon > 0)
            .then(|| Estimate::binomial(survived_given_photon, with_photon)),
        average_fidelity,
    })
}

/// Classification fidelities of the reported outcome under a full
/// conventional window: (P(bright | input 0), P(dark | input 1)).
///
/// The outcome distribution is identical in dynamical-stop mode, which only
/// changes when the laser switches off.
pub fn readout_outcome_fidelity(
    model: &ReadoutModel,
    trials: u64,
    seed: u64,
) -> Result<(Estimate, Estimate)> {
    model.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut correct = [0u64; 2];
    for (li, level) in [Outcome::Zero, Outcome::One].into_iter().enumerate() {
        for t in 0..trials {
            let mut rng = derive_rng(seed, &[2, li as u64, t]);
            let rec = simulate_readout(level, model, ReadoutMode::Conventional, &mut rng)?;
            if rec.outcome == level {
                correct[li] += 1;
            }
        }
    }
    Ok((
        Estimate::binomial(correct[0], trials),
        Estimate::binomial(correct[1], trials),
    ))
}

/// One point of the system-coherence decay curve.
#[derive(Debug, Clone, Copy)]
pub struct CoherencePoint {
    /// Readout duration budget, seconds.
    pub time: f64,
    /// Fidelity to |x> of a system prepared along +x: (1 + mean coherence)/2.
    pub fidelity_x: Estimate,
    /// Fidelity of the z component (unaffected by the readout).
    pub fidelity_z: f64,
}

/// Decay of the system qubit's coherence versus readout duration, for a
/// bright ancilla.
pub fn nuclear_coherence_curve(
    model: &ReadoutModel,
    mode: ReadoutMode,
    times: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<CoherencePoint>> {
    model.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut curve = Vec::with_capacity(times.len());
    for (ti, &time) in times.iter().enumerate() {
        if !(0.0..=model.window() + 1e-12).contains(&time) {
            return Err(Error::InvalidParameter(format!(
                "duration {time} s outside the readout window"
            )));
        }
        let bins = (time / model.bin_duration).round() as u32;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for t in 0..trials {
            let mut rng = derive_rng(seed, &[3, ti as u64, t]);
            let rec =
                simulate_readout_budget(Outcome::Zero, model, mode, bins, &mut rng)?;
            sum += rec.nuclear_coherence_factor;
            sum_sq += rec.nuclear_coherence_factor * rec.nuclear_coherence_factor;
        }
        let n = trials as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
        curve.push(CoherencePoint {
            time,
            fidelity_x: Estimate {
                value: 0.5 * (1.0 + mean),
                std_error: 0.5 * (var / n).sqrt(),
            },
            fidelity_z: 1.0,
        });
    }
    Ok(curve)
}

/// Observables the readout model is calibrated against.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationTargets {
    /// P(classified bright | input 0) over a full window.
    pub outcome_fidelity_bright: f64,
    /// P(classified dark | input 1) over a full window.
    pub outcome_fidelity_dark: f64,
    /// P(post-state 0 | input 0) after a full conventional window.
    pub qnd_bright_conventional: f64,
    /// P(post-state 0 | input 0) under dynamical stop.
    pub qnd_bright_dynamical: f64,
    /// Long-time |x>-fidelity plateau under dynamical stop.
    pub saturation_fidelity: f64,
    /// Time at which the conventional readout has completely dephased the
    /// system (coherence down to [`COMPLETE_DEPHASING_COHERENCE`]).
    pub half_coherence_time: Option<f64>,
    pub bin_duration: f64,
    pub max_bins: u32,
}

impl CalibrationTargets {
    /// The device's measured readout observables.
    pub fn standard() -> Self {
        Self {
            outcome_fidelity_bright: crate::constants::READOUT_FIDELITY_BRIGHT,
            outcome_fidelity_dark: crate::constants::READOUT_FIDELITY_DARK,
            qnd_bright_conventional: 0.18,
            qnd_bright_dynamical: 0.86,
            saturation_fidelity: 0.615,
            half_coherence_time: Some(25e-6),
            bin_duration: 1e-6,
            max_bins: 100,
        }
    }

    /// A perfect device: every observable equals 1.
    pub fn perfect() -> Self {
        Self {
            outcome_fidelity_bright: 1.0,
            outcome_fidelity_dark: 1.0,
            qnd_bright_conventional: 1.0,
            qnd_bright_dynamical: 1.0,
            saturation_fidelity: 1.0,
            half_coherence_time: None,
            bin_duration: 1e-6,
            max_bins: 100,
        }
    }
}

/// Achieved-vs-target report for one calibration observable.
#[derive(Debug, Clone, Copy)]
pub struct TargetResidual {
    pub name: &'static str,
    pub target: f64,
    pub achieved: f64,
}

/// A calibrated model together with its residuals.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub model: ReadoutModel,
    pub residuals: Vec<TargetResidual>,
}

// Closed-form observables of the trajectory model (independent sums over the
// flip/stop bin; these back both the calibration and the Monte Carlo tests).

/// P(post-state 0 | input 0) after a full conventional window: no flip in
/// any bin.
fn conv_post_zero(p_flip: f64, bins: u32) -> f64 {
    (1.0 - p_flip).powi(bins as i32)
}

/// P(post-state 0 | input 0) under dynamical stop: a photon stops the laser
/// before any flip, or the whole window passes without either.
fn dyn_post_zero(p_det: f64, p_flip: f64, bins: u32) -> f64 {
    let q = (1.0 - p_det) * (1.0 - p_flip);
    if q >= 1.0 {
        return 1.0;
    }
    let qb = q.powi(bins as i32);
    p_det * (1.0 - qb) / (1.0 - q) + qb
}

/// P(classified bright | input 0) over a full window (mode-independent).
fn outcome_bright_prob(p_det: f64, p_flip: f64, bins: u32) -> f64 {
    let q = (1.0 - p_det) * (1.0 - p_flip);
    if q >= 1.0 {
        return if p_det > 0.0 { 1.0 } else { 0.0 };
    }
    let qb = q.powi(bins as i32);
    let p_silent = p_flip * (1.0 - p_det) * (1.0 - qb) / (1.0 - q) + qb;
    1.0 - p_silent
}

/// P(classified dark | input 1): no dark count in any bin.
fn outcome_dark_prob(p_dark: f64, bins: u32) -> f64 {
    (1.0 - p_dark).powi(bins as i32)
}

/// E[kappa^(bright bins)] after a conventional window of `bins` bins.
fn conv_coherence(kappa: f64, p_flip: f64, bins: u32) -> f64 {
    let mut acc = 0.0;
    let mut survive = 1.0; // (1 - p_flip)^(k-1)
    for k in 1..=bins {
        acc += survive * p_flip * kappa.powi(k as i32);
        survive *= 1.0 - p_flip;
    }
    acc + survive * kappa.powi(bins as i32)
}

/// E[max(c_floor, kappa^(bright bins))] after a dynamical-stop window.
fn dyn_coherence(p_det: f64, p_flip: f64, kappa: f64, c_floor: f64, bins: u32) -> f64 {
    let q = (1.0 - p_det) * (1.0 - p_flip);
    let mut acc = 0.0;
    let mut qk = 1.0; // q^(k-1)
    for k in 1..=bins {
        acc += qk * (1.0 - q) * c_floor.max(kappa.powi(k as i32));
        qk *= q;
    }
    acc + qk * c_floor.max(kappa.powi(bins as i32))
}

/// Find x in [lo, hi] with f(x) = target for non-decreasing f, assuming
/// f(lo) <= target <= f(hi).
fn bisect(lo: f64, hi: f64, target: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solve for the per-bin model parameters reproducing the target observables.
///
/// p_flip and p_dark have closed-form inverses. p_det balances the two
/// bright-outcome targets (classification fidelity and dynamical-stop
/// survival) by equalizing their tolerance-weighted residuals, since a single
/// detection probability serves both. kappa comes from the complete-dephasing
/// time, then c_floor from the saturation plateau.
pub fn calibrate_readout(targets: &CalibrationTargets) -> Result<Calibration> {
    let t = targets;
    for (name, v) in [
        ("outcome_fidelity_bright", t.outcome_fidelity_bright),
        ("outcome_fidelity_dark", t.outcome_fidelity_dark),
        ("qnd_bright_conventional", t.qnd_bright_conventional),
        ("qnd_bright_dynamical", t.qnd_bright_dynamical),
        ("saturation_fidelity", t.saturation_fidelity),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InfeasibleCalibration(format!(
                "target {name} = {v} outside (0, 1]"
            )));
        }
    }
    let bins = t.max_bins;
    if bins == 0 || !(t.bin_duration > 0.0) {
        return Err(Error::InfeasibleCalibration("empty readout window".into()));
    }

    let p_flip = 1.0 - t.qnd_bright_conventional.powf(1.0 / bins as f64);
    let p_dark = 1.0 - t.outcome_fidelity_dark.powf(1.0 / bins as f64);

    // Tolerance-weighted residual balance between the two targets p_det
    // controls; increasing in p_det, so a sign change brackets the root.
    let tol_outcome = 0.01;
    let tol_dyn = 0.02;
    let h = |p: f64| {
        (outcome_bright_prob(p, p_flip, bins) - t.outcome_fidelity_bright) / tol_outcome
            - (t.qnd_bright_dynamical - dyn_post_zero(p, p_flip, bins)) / tol_dyn
    };
    if h(0.0) > 0.0 {
        return Err(Error::InfeasibleCalibration(
            "bright-outcome targets unreachable: already overshot at p_det = 0".into(),
        ));
    }
    let p_det = if h(1.0) <= 0.0 { 1.0 } else { bisect(0.0, 1.0, 0.0, h) };

    let kappa = match t.half_coherence_time {
        Some(t_half) => {
            let half_bins = (t_half / t.bin_duration).round() as u32;
            if half_bins == 0 || half_bins > bins {
                return Err(Error::InfeasibleCalibration(format!(
                    "complete-dephasing time {t_half} s outside the window"
                )));
            }
            bisect(0.0, 1.0, COMPLETE_DEPHASING_COHERENCE, |k| {
                conv_coherence(k, p_flip, half_bins)
            })
        }
        None => {
            let c_sat = 2.0 * t.saturation_fidelity - 1.0;
            bisect(0.0, 1.0, c_sat, |k| dyn_coherence(p_det, p_flip, k, 0.0, bins))
        }
    };

    let c_sat = 2.0 * t.saturation_fidelity - 1.0;
    if c_sat < 0.0 {
        return Err(Error::InfeasibleCalibration(format!(
            "saturation fidelity {} below 1/2: coherence factor cannot be negative",
            t.saturation_fidelity
        )));
    }
    let plateau_base = dyn_coherence(p_det, p_flip, kappa, 0.0, bins);
    let c_floor = if plateau_base >= c_sat {
        if plateau_base > c_sat + 1e-9 {
            return Err(Error::InfeasibleCalibration(format!(
                "saturation target {c_sat} below the floor-free plateau {plateau_base}"
            )));
        }
        0.0
    } else {
        bisect(0.0, 1.0, c_sat, |cf| {
            dyn_coherence(p_det, p_flip, kappa, cf, bins)
        })
    };

    let model = ReadoutModel {
        bin_duration: t.bin_duration,
        max_bins: bins,
        p_det,
        p_flip,
        p_dark,
        kappa,
        c_floor,
    };
    model.validate()?;

    let mut residuals = vec![
        TargetResidual {
            name: "outcome_fidelity_bright",
            target: t.outcome_fidelity_bright,
            achieved: outcome_bright_prob(p_det, p_flip, bins),
        },
        TargetResidual {
            name: "outcome_fidelity_dark",
            target: t.outcome_fidelity_dark,
            achieved: outcome_dark_prob(p_dark, bins),
        },
        TargetResidual {
            name: "qnd_bright_conventional",
            target: t.qnd_bright_conventional,
            achieved: conv_post_zero(p_flip, bins),
        },
        TargetResidual {
            name: "qnd_bright_dynamical",
            target: t.qnd_bright_dynamical,
            achieved: dyn_post_zero(p_det, p_flip, bins),
        },
        TargetResidual {
            name: "saturation_fidelity",
            target: t.saturation_fidelity,
            achieved: 0.5 * (1.0 + dyn_coherence(p_det, p_flip, kappa, c_floor, bins)),
        },
    ];
    if let Some(t_half) = t.half_coherence_time {
        let half_bins = (t_half / t.bin_duration).round() as u32;
        residuals.push(TargetResidual {
            name: "dephasing_fidelity_at_half_time",
            target: 0.5 * (1.0 + COMPLETE_DEPHASING_COHERENCE),
            achieved: 0.5 * (1.0 + conv_coherence(kappa, p_flip, half_bins)),
        });
    }
    Ok(Calibration { model, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Frozen closed-form oracles for the standard targets:
    //   p_flip = 1 - 0.18^(1/100), p_dark = 1 - 0.986^(1/100).
    const P_FLIP_ORACLE: f64 = 0.017_001_794_411_729_84;
    const P_DARK_ORACLE: f64 = 1.409_793_052_786_635e-4;

    #[test]
    fn dark_input_without_dark_counts_is_inert() {
        let model = ReadoutModel { p_dark: 0.0, ..ReadoutModel::calibrated() };
        let mut rng = derive_rng(5, &[0]);
        for mode in [ReadoutMode::Conventional, ReadoutMode::DynamicalStop] {
            let rec = simulate_readout(Outcome::One, &model, mode, &mut rng).unwrap();
            assert_eq!(rec.outcome, Outcome::One);
            assert_eq!(rec.post_electron, Outcome::One);
            assert_eq!(rec.bright_bins, 0);
            assert_eq!(rec.nuclear_coherence_factor, 1.0);
            assert!(!rec.flipped);
        }
    }

    #[test]
    fn record_invariants_hold_on_random_models() {
        let mut rng = derive_rng(5, &[1]);
        let model = ReadoutModel {
            p_det: 0.05,
            p_flip: 0.03,
            p_dark: 0.002,
            kappa: 0.9,
            c_floor: 0.1,
            ..ReadoutModel::ideal()
        };
        for t in 0..2000 {
            let mode = if t % 2 == 0 { ReadoutMode::Conventional } else { ReadoutMode::DynamicalStop };
            let level = if t % 4 < 2 { Outcome::Zero } else { Outcome::One };
            let rec = simulate_readout(level, &model, mode, &mut rng).unwrap();
            // Outcome bright iff a photon was detected.
            assert_eq!(rec.outcome == Outcome::Zero, rec.photon_bin.is_some());
            if let Some(pb) = rec.photon_bin {
                assert!(pb <= rec.stop_bin);
            }
            match mode {
                ReadoutMode::Conventional => assert_eq!(rec.stop_bin, model.max_bins),
                ReadoutMode::DynamicalStop => {
                    if let Some(pb) = rec.photon_bin {
                        assert_eq!(rec.stop_bin, pb.min(model.max_bins));
                    } else {
                        assert_eq!(rec.stop_bin, model.max_bins);
                    }
                }
            }
            assert!(rec.bright_bins <= rec.stop_bin);
            assert!((0.0..=1.0).contains(&rec.nuclear_coherence_factor));
        }
    }

    #[test]
    fn photon_conditioned_survival_is_structural() {
        // Emission precedes the flip and post-flip bins are silent, so a
        // detected photon in dynamical-stop mode proves the electron is
        // still bright at laser-off. Holds for every trajectory.
        let model = ReadoutModel::calibrated();
        let mut rng = derive_rng(5, &[2]);
        let mut photons = 0;
        for _ in 0..20_000 {
            let rec =
                simulate_readout(Outcome::Zero, &model, ReadoutMode::DynamicalStop, &mut rng)
                    .unwrap();
            if rec.photon_bin.is_some() {
                photons += 1;
                assert_eq!(rec.post_electron, Outcome::Zero);
            }
        }
        assert!(photons > 15_000, "calibrated model should detect most of the time");
    }

    #[test]
    fn qnd_closed_forms_match_simulation() {
        // Dual route: trajectory Monte Carlo vs the independent absorbing-sum
        // expressions, within 5 binomial sigma at 3e4 trials.
        let model = ReadoutModel {
            p_det: 0.08,
            p_flip: 0.02,
            p_dark: 2e-4,
            kappa: 0.8,
            c_floor: 0.1,
            ..ReadoutModel::ideal()
        };
        let trials = 30_000;
        for (mode, oracle) in [
            (ReadoutMode::Conventional, conv_post_zero(model.p_flip, model.max_bins)),
            (
                ReadoutMode::DynamicalStop,
                dyn_post_zero(model.p_det, model.p_flip, model.max_bins),
            ),
        ] {
            let rep = qnd_fidelity(&model, mode, trials, 99).unwrap();
            let sigma = rep.fidelity_0.std_error.max(1e-4);
            assert!(
                (rep.fidelity_0.value - oracle).abs() < 5.0 * sigma,
                "{mode:?}: {} vs {oracle}",
                rep.fidelity_0.value
            );
        }
        let (f_bright, f_dark) = readout_outcome_fidelity(&model, trials, 99).unwrap();
        let ob = outcome_bright_prob(model.p_det, model.p_flip, model.max_bins);
        let od = outcome_dark_prob(model.p_dark, model.max_bins);
        assert!((f_bright.value - ob).abs() < 5.0 * f_bright.std_error.max(1e-4));
        assert!((f_dark.value - od).abs() < 5.0 * f_dark.std_error.max(1e-4));
    }

    #[test]
    fn noiseless_model_is_perfectly_qnd() {
        let model = ReadoutModel::ideal();
        for mode in [ReadoutMode::Conventional, ReadoutMode::DynamicalStop] {
            let rep = qnd_fidelity(&model, mode, 500, 1).unwrap();
            assert_eq!(rep.fidelity_0.value, 1.0);
            assert_eq!(rep.fidelity_1.value, 1.0);
            assert_eq!(rep.average_fidelity.value, 1.0);
            assert_eq!(rep.fidelity_0_given_photon.unwrap().value, 1.0);
        }
        let (f0, f1) = readout_outcome_fidelity(&model, 500, 1).unwrap();
        assert_eq!(f0.value, 1.0);
        assert_eq!(f1.value, 1.0);
    }

    #[test]
    fn blind_detector_never_classifies_bright() {
        let model = ReadoutModel { p_det: 0.0, ..ReadoutModel::ideal() };
        let (f0, f1) = readout_outcome_fidelity(&model, 500, 2).unwrap();
        assert_eq!(f0.value, 0.0);
        assert_eq!(f1.value, 1.0);
        let rep = qnd_fidelity(&model, ReadoutMode::DynamicalStop, 500, 2).unwrap();
        assert!(rep.fidelity_0_given_photon.is_none());
    }

    #[test]
    fn dynamical_stop_is_never_slower() {
        let model = ReadoutModel::calibrated();
        let mut rng = derive_rng(5, &[3]);
        let mut dyn_sum = 0u64;
        let n = 5000;
        for _ in 0..n {
            let rec =
                simulate_readout(Outcome::Zero, &model, ReadoutMode::DynamicalStop, &mut rng)
                    .unwrap();
            assert!(rec.stop_bin <= model.max_bins);
            dyn_sum += rec.stop_bin as u64;
        }
        // Strictly faster on average when p_det > 0.
        assert!((dyn_sum as f64 / n as f64) < 0.5 * model.max_bins as f64);
    }

    #[test]
    fn monotonicity_of_dynamical_stop_survival() {
        // Exact on the closed form over a 5x5 grid.
        let grid = [0.02, 0.05, 0.1, 0.2, 0.4];
        for (i, &pd) in grid.iter().enumerate() {
            for (j, &pf) in grid.iter().enumerate() {
                let f = dyn_post_zero(pd, pf, 100);
                if i + 1 < grid.len() {
                    assert!(dyn_post_zero(grid[i + 1], pf, 100) >= f);
                }
                if j + 1 < grid.len() {
                    assert!(dyn_post_zero(pd, grid[j + 1], 100) <= f);
                }
            }
        }
        // And the simulation agrees with the closed form at a spot check.
        let model = ReadoutModel {
            p_det: 0.1,
            p_flip: 0.05,
            ..ReadoutModel::ideal()
        };
        let rep = qnd_fidelity(&model, ReadoutMode::DynamicalStop, 30_000, 7).unwrap();
        let oracle = dyn_post_zero(0.1, 0.05, 100);
        assert!((rep.fidelity_0.value - oracle).abs() < 5.0 * rep.fidelity_0.std_error);
    }

    #[test]
    fn coherence_curve_starts_at_one_and_decays() {
        let model = ReadoutModel::calibrated();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 10e-6).collect();
        for mode in [ReadoutMode::Conventional, ReadoutMode::DynamicalStop] {
            let curve = nuclear_coherence_curve(&model, mode, &times, 4000, 11).unwrap();
            assert_eq!(curve[0].fidelity_x.value, 1.0);
            assert_eq!(curve[0].fidelity_z, 1.0);
            for w in curve.windows(2) {
                let slack = 3.0
                    * (w[0].fidelity_x.std_error.powi(2) + w[1].fidelity_x.std_error.powi(2))
                        .sqrt();
                assert!(
                    w[1].fidelity_x.value <= w[0].fidelity_x.value + slack,
                    "{mode:?} not non-increasing at {} s",
                    w[1].time
                );
            }
        }
    }

    #[test]
    fn calibration_closed_form_oracles() {
        let cal = calibrate_readout(&CalibrationTargets::standard()).unwrap();
        let m = &cal.model;
        assert_abs_diff_eq!(m.p_flip, P_FLIP_ORACLE, epsilon = 1e-12);
        assert_abs_diff_eq!(m.p_dark, P_DARK_ORACLE, epsilon = 1e-12);
        // Defining properties, independently of the frozen digits.
        assert_abs_diff_eq!((1.0 - m.p_flip).powi(100), 0.18, epsilon = 1e-12);
        assert_abs_diff_eq!((1.0 - m.p_dark).powi(100), 0.986, epsilon = 1e-12);
        assert!(m.p_det > 0.0 && m.p_det < 1.0);
        assert!(m.kappa > 0.0 && m.kappa < 1.0);
        assert!(m.c_floor > 0.0 && m.c_floor < 2.0 * 0.615 - 1.0);
    }

    #[test]
    fn calibration_residuals_within_experimental_bars() {
        let cal = calibrate_readout(&CalibrationTargets::standard()).unwrap();
        let bars = [
            ("outcome_fidelity_bright", 0.005),
            ("outcome_fidelity_dark", 0.002),
            ("qnd_bright_conventional", 0.02),
            ("qnd_bright_dynamical", 0.02),
            ("saturation_fidelity", 0.002),
            ("dephasing_fidelity_at_half_time", 0.02),
        ];
        for r in &cal.residuals {
            let bar = bars
                .iter()
                .find(|(n, _)| *n == r.name)
                .map(|(_, b)| *b)
                .unwrap_or_else(|| panic!("unexpected residual {}", r.name));
            assert!(
                (r.achieved - r.target).abs() <= bar,
                "{}: achieved {} vs target {} (bar {bar})",
                r.name,
                r.achieved,
                r.target
            );
        }
    }

    #[test]
    fn perfect_targets_give_noiseless_model() {
        let cal = calibrate_readout(&CalibrationTargets::perfect()).unwrap();
        let m = &cal.model;
        assert_abs_diff_eq!(m.p_flip, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.p_dark, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.kappa, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.p_det, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.c_floor, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_targets_are_reported() {
        let mut t = CalibrationTargets::standard();
        t.saturation_fidelity = 0.4;
        assert!(matches!(
            calibrate_readout(&t),
            Err(Error::InfeasibleCalibration(_))
        ));
        let mut t = CalibrationTargets::standard();
        t.outcome_fidelity_dark = 0.0;
        assert!(calibrate_readout(&t).is_err());
    }

    #[test]
    fn invalid_model_is_rejected_up_front() {
        let model = ReadoutModel { p_det: 1.5, ..ReadoutModel::ideal() };
        let mut rng = derive_rng(0, &[0]);
        assert!(simulate_readout(Outcome::Zero, &model, ReadoutMode::Conventional, &mut rng)
            .is_err());
        assert!(qnd_fidelity(&model, ReadoutMode::Conventional, 10, 0).is_err());
    }
}

