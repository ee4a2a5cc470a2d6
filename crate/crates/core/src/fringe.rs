//! Ramsey-fringe signal model and weighted nonlinear least-squares recovery
//! of the hyperfine coupling, dephasing envelope, phase, and offset.
//!
//! The interaction-time fringe p0(tau) = y0 + a exp(-(tau/T2*)^2) cos(A tau + phi)
//! is what calibrates the strength map: its frequency is the hyperfine
//! coupling A, its Gaussian envelope the electron dephasing time.

use std::io;

use rand::Rng;

use crate::constants::{ELECTRON_T2_STAR, HYPERFINE_COUPLING};
use crate::error::{Error, Result};
use crate::stream::derive_rng;

const MAX_ITERATIONS: u32 = 200;
const PARAMS: usize = 5;

/// Fringe signal y0 + a exp(-(tau/T2*)^2) cos(A tau + phi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeModel {
    /// Offset y0 (probability units).
    pub baseline: f64,
    /// Contrast a.
    pub amplitude: f64,
    /// Oscillation frequency A, rad/s.
    pub frequency: f64,
    /// Phase phi, rad.
    pub phase: f64,
    /// Gaussian envelope time T2*, seconds.
    pub t2_star: f64,
}

impl FringeModel {
    /// Ideal fringe of the device: full contrast around 1/2, oscillating at
    /// the hyperfine coupling under the electron dephasing envelope.
    pub fn standard() -> Self {
        Self {
            baseline: 0.5,
            amplitude: 0.5,
            frequency: HYPERFINE_COUPLING,
            phase: 0.0,
            t2_star: ELECTRON_T2_STAR,
        }
    }

    /// Signal value at interaction time `tau` (seconds).
    pub fn value(&self, tau: f64) -> f64 {
        let envelope = (-(tau / self.t2_star).powi(2)).exp();
        self.baseline + self.amplitude * envelope * (self.frequency * tau + self.phase).cos()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.baseline,
            self.amplitude,
            self.frequency,
            self.phase,
            self.t2_star,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("fringe model has non-finite parameters".into()));
        }
        if self.t2_star <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "t2_star = {} must be positive",
                self.t2_star
            )));
        }
        Ok(())
    }
}

/// One fringe sample: interaction time, measured |0> frequency, shot count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringePoint {
    /// Interaction time, seconds.
    pub tau: f64,
    /// Observed probability of the ancilla |0> outcome.
    pub p0: f64,
    /// Shots averaged into `p0`.
    pub shots: u64,
}

/// A fringe scan with strictly increasing interaction times.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeDataset {
    points: Vec<FringePoint>,
}

impl FringeDataset {
    pub fn new(points: Vec<FringePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::BadDataset("empty fringe dataset".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if !p.tau.is_finite() || p.tau < 0.0 {
                return Err(Error::BadDataset(format!("point {i}: bad tau {}", p.tau)));
            }
            if p.tau <= prev {
                return Err(Error::BadDataset(format!(
                    "point {i}: taus must increase strictly ({} after {prev})",
                    p.tau
                )));
            }
            prev = p.tau;
            if !(0.0..=1.0).contains(&p.p0) {
                return Err(Error::BadDataset(format!("point {i}: p0 = {} outside [0, 1]", p.p0)));
            }
            if p.shots == 0 {
                return Err(Error::BadDataset(format!("point {i}: zero shots")));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[FringePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Read a dataset from CSV with header `tau_s,p0,n_shots`.
    pub fn from_csv(reader: impl io::Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        {
            let headers = rdr.headers()?;
            let expect = ["tau_s", "p0", "n_shots"];
            let got: Vec<_> = headers.iter().collect();
            if got != expect {
                return Err(Error::BadDataset(format!(
                    "expected CSV header {expect:?}, found {got:?}"
                )));
            }
        }
        let mut points = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let field = |j: usize| -> Result<&str> {
                record
                    .get(j)
                    .ok_or_else(|| Error::BadDataset(format!("row {i}: missing column {j}")))
            };
            let parse = |j: usize| -> Result<f64> {
                field(j)?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::BadDataset(format!("row {i}: {e}")))
            };
            points.push(FringePoint {
                tau: parse(0)?,
                p0: parse(1)?,
                shots: field(2)?
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| Error::BadDataset(format!("row {i}: {e}")))?,
            });
        }
        Self::new(points)
    }

    /// Write the dataset as CSV with header `tau_s,p0,n_shots`.
    pub fn to_csv(&self, writer: impl io::Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["tau_s", "p0", "n_shots"])?;
        for p in &self.points {
            wtr.write_record(&[p.tau.to_string(), p.p0.to_string(), p.shots.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Sample a synthetic fringe scan: `shots` Bernoulli draws per grid point.
/// Grid point i draws its stream from tags [7, i] of `seed`.
pub fn generate_fringe_data(
    model: &FringeModel,
    taus: &[f64],
    shots: u64,
    seed: u64,
) -> Result<FringeDataset> {
    model.validate()?;
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be positive".into()));
    }
    let mut points = Vec::with_capacity(taus.len());
    for (i, &tau) in taus.iter().enumerate() {
        let p = model.value(tau);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "model value {p} at tau = {tau} falls outside [0, 1]"
            )));
        }
        let mut rng = derive_rng(seed, &[7, i as u64]);
        let count = (0..shots).filter(|_| rng.gen_bool(p)).count() as u64;
        points.push(FringePoint { tau, p0: count as f64 / shots as f64, shots });
    }
    FringeDataset::new(points)
}

/// Per-parameter standard errors of a fit.
#[derive(Debug, Clone, Copy)]
pub struct ParameterErrors {
    pub baseline: f64,
    pub amplitude: f64,
    /// rad/s.
    pub frequency: f64,
    pub phase: f64,
    /// Seconds.
    pub t2_star: f64,
}

/// Outcome of a fringe fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: FringeModel,
    /// From the inverse weighted normal matrix at the optimum; the weights
    /// are the exact binomial variances, so no residual rescaling is applied.
    pub std_errors: ParameterErrors,
    /// Square root of the weighted sum of squared residuals.
    pub residual_norm: f64,
    pub iterations: u32,
    pub converged: bool,
}

/// Weighted residual norm of `model` against `data` (the quantity the fit
/// minimizes).
pub fn residual_norm(data: &FringeDataset, model: &FringeModel) -> Result<f64> {
    model.validate()?;
    let scaled = ScaledData::new(data);
    Ok(scaled.ssr(&scaled.pack(model)).sqrt())
}

/// Internal representation: times in microseconds and frequency in rad/us so
/// the normal matrix stays well conditioned.
struct ScaledData {
    taus: Vec<f64>,
    p0: Vec<f64>,
    /// Inverse-variance weights n / (p~ (1 - p~)) with Laplace-smoothed p~.
    weights: Vec<f64>,
}

const TIME_SCALE: f64 = 1e-6;

impl ScaledData {
    fn new(data: &FringeDataset) -> Self {
        let taus: Vec<f64> = data.points().iter().map(|p| p.tau / TIME_SCALE).collect();
        let p0: Vec<f64> = data.points().iter().map(|p| p.p0).collect();
        let weights = data
            .points()
            .iter()
            .map(|p| {
                let n = p.shots as f64;
                let smoothed = (p.p0 * n + 1.0) / (n + 2.0);
                n / (smoothed * (1.0 - smoothed))
            })
            .collect();
        Self { taus, p0, weights }
    }

    /// Parameter vector [y0, a, w (rad/us), phi, t2 (us)].
    fn pack(&self, m: &FringeModel) -> [f64; PARAMS] {
        [
            m.baseline,
            m.amplitude,
            m.frequency * TIME_SCALE,
            m.phase,
            m.t2_star / TIME_SCALE,
        ]
    }

    fn unpack(x: &[f64; PARAMS]) -> FringeModel {
        FringeModel {
            baseline: x[0],
            amplitude: x[1],
            frequency: x[2] / TIME_SCALE,
            phase: x[3],
            t2_star: x[4] * TIME_SCALE,
        }
    }

    fn model_value(x: &[f64; PARAMS], tau: f64) -> f64 {
        x[0] + x[1] * (-(tau / x[4]).powi(2)).exp() * (x[2] * tau + x[3]).cos()
    }

    fn ssr(&self, x: &[f64; PARAMS]) -> f64 {
        self.taus
            .iter()
            .zip(&self.p0)
            .zip(&self.weights)
            .map(|((&t, &y), &w)| {
                let r = y - Self::model_value(x, t);
                w * r * r
            })
            .sum()
    }

    /// Weighted normal matrix J^T W J and gradient-side vector J^T W r.
    fn normal_system(&self, x: &[f64; PARAMS]) -> ([[f64; PARAMS]; PARAMS], [f64; PARAMS]) {
        let mut ata = [[0.0; PARAMS]; PARAMS];
        let mut atr = [0.0; PARAMS];
        for ((&t, &y), &w) in self.taus.iter().zip(&self.p0).zip(&self.weights) {
            let env = (-(t / x[4]).powi(2)).exp();
            let arg = x[2] * t + x[3];
            let (sin, cos) = arg.sin_cos();
            let j = [
                1.0,
                env * cos,
                -x[1] * env * sin * t,
                -x[1] * env * sin,
                x[1] * env * cos * 2.0 * t * t / x[4].powi(3),
            ];
            let r = y - Self::model_value(x, t);
            for m in 0..PARAMS {
                atr[m] += w * j[m] * r;
                for n in m..PARAMS {
                    ata[m][n] += w * j[m] * j[n];
                }
            }
        }
        for m in 0..PARAMS {
            for n in 0..m {
                ata[m][n] = ata[n][m];
            }
        }
        (ata, atr)
    }
}

/// Solve a small linear system by Gaussian elimination with partial pivoting.
fn solve(mut a: [[f64; PARAMS]; PARAMS], mut b: [f64; PARAMS]) -> Result<[f64; PARAMS]> {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..PARAMS {
        let pivot = (col..PARAMS)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-13 * scale {
            return Err(Error::FitFailed("singular normal matrix".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..PARAMS {
            let f = a[row][col] / a[col][col];
            for k in col..PARAMS {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; PARAMS];
    for col in (0..PARAMS).rev() {
        let mut acc = b[col];
        for k in col + 1..PARAMS {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

/// Invert the normal matrix column by column for the parameter covariance.
fn invert(a: &[[f64; PARAMS]; PARAMS]) -> Result<[[f64; PARAMS]; PARAMS]> {
    let mut inv = [[0.0; PARAMS]; PARAMS];
    for col in 0..PARAMS {
        let mut e = [0.0; PARAMS];
        e[col] = 1.0;
        let x = solve(*a, e)?;
        for row in 0..PARAMS {
            inv[row][col] = x[row];
        }
    }
    Ok(inv)
}

/// Spectral initializer: offset from the weighted mean, frequency from the
/// dominant peak of the detrended spectrum (parabolic refinement), phase from
/// the quadrature components at that peak.
fn initial_guess(scaled: &ScaledData) -> [f64; PARAMS] {
    let n = scaled.taus.len();
    let wsum: f64 = scaled.weights.iter().sum();
    let y0 = scaled
        .p0
        .iter()
        .zip(&scaled.weights)
        .map(|(&y, &w)| w * y)
        .sum::<f64>()
        / wsum;
    let detrended: Vec<f64> = scaled.p0.iter().map(|&y| y - y0).collect();

    let span = scaled.taus[n - 1] - scaled.taus[0];
    let min_step = scaled
        .taus
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let omega_min = std::f64::consts::TAU / span.max(min_step);
    let omega_max = std::f64::consts::PI / min_step;
    let steps = 1024;
    let quadrature = |omega: f64| -> (f64, f64) {
        let mut c = 0.0;
        let mut s = 0.0;
        for (&t, &d) in scaled.taus.iter().zip(&detrended) {
            let (sin, cos) = (omega * t).sin_cos();
            c += d * cos;
            s += d * sin;
        }
        (c, s)
    };
    let mut best = (omega_min, 0.0f64, 0usize);
    let mut powers = vec![0.0; steps + 1];
    for k in 0..=steps {
        let omega = omega_min + (omega_max - omega_min) * k as f64 / steps as f64;
        let (c, s) = quadrature(omega);
        let p = c * c + s * s;
        powers[k] = p;
        if p > best.1 {
            best = (omega, p, k);
        }
    }
    let mut omega = best.0;
    let k = best.2;
    if k > 0 && k < steps {
        let (pl, pc, pr) = (powers[k - 1], powers[k], powers[k + 1]);
        let denom = pl - 2.0 * pc + pr;
        if denom < 0.0 {
            let shift = 0.5 * (pl - pr) / denom;
            omega += shift.clamp(-1.0, 1.0) * (omega_max - omega_min) / steps as f64;
        }
    }
    let (c, s) = quadrature(omega);
    let phi = (-s).atan2(c);
    let (lo, hi) = scaled
        .p0
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let amplitude = ((hi - lo) / 2.0).max(1e-3);
    [y0, amplitude, omega, phi, span.max(min_step)]
}

/// Canonical form: non-negative amplitude and frequency, phase in (-pi, pi].
fn canonicalize(x: &mut [f64; PARAMS]) {
    if x[1] < 0.0 {
        x[1] = -x[1];
        x[3] += std::f64::consts::PI;
    }
    if x[2] < 0.0 {
        x[2] = -x[2];
        x[3] = -x[3];
    }
    x[4] = x[4].abs();
    x[3] = x[3].rem_euclid(std::f64::consts::TAU);
    if x[3] > std::f64::consts::PI {
        x[3] -= std::f64::consts::TAU;
    }
}

/// Fit the fringe model to a dataset by damped Gauss-Newton on weighted
/// least squares. With `init` absent the starting point is spectral.
///
/// Non-convergence within the iteration cap returns the best point found
/// with `converged = false`; a singular normal system is an error.
pub fn fit_fringe(data: &FringeDataset, init: Option<FringeModel>) -> Result<FitResult> {
    if data.len() < PARAMS {
        return Err(Error::BadDataset(format!(
            "need at least {PARAMS} points, got {}",
            data.len()
        )));
    }
    let scaled = ScaledData::new(data);
    let mut x = match &init {
        Some(m) => {
            m.validate()?;
            scaled.pack(m)
        }
        None => initial_guess(&scaled),
    };
    let mut ssr = scaled.ssr(&x);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (mut ata, atr) = scaled.normal_system(&x);
        for m in 0..PARAMS {
            ata[m][m] *= 1.0 + lambda;
        }
        let step = solve(ata, atr)?;
        let mut candidate = x;
        for m in 0..PARAMS {
            candidate[m] += step[m];
        }
        let acceptable = candidate[4] > 0.0;
        let candidate_ssr = if acceptable { scaled.ssr(&candidate) } else { f64::INFINITY };
        if candidate_ssr <= ssr {
            let rel_step = step
                .iter()
                .zip(&x)
                .map(|(&d, &v)| d.abs() / v.abs().max(1e-9))
                .fold(0.0f64, f64::max);
            let rel_drop = (ssr - candidate_ssr) / ssr.max(1e-300);
            x = candidate;
            ssr = candidate_ssr;
            lambda = (lambda / 2.0).max(1e-12);
            if rel_step < 1e-10 || rel_drop < 1e-14 {
                converged = true;
                break;
            }
        } else {
            lambda *= 2.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    canonicalize(&mut x);

    let (ata, _) = scaled.normal_system(&x);
    let cov = invert(&ata)?;
    let sigma = |m: usize| cov[m][m].max(0.0).sqrt();
    Ok(FitResult {
        params: ScaledData::unpack(&x),
        std_errors: ParameterErrors {
            baseline: sigma(0),
            amplitude: sigma(1),
            frequency: sigma(2) / TIME_SCALE,
            phase: sigma(3),
            t2_star: sigma(4) * TIME_SCALE,
        },
        residual_norm: ssr.sqrt(),
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Frozen oracles for the standard model:
    //   value(229 ns)  = 1/2 + 1/2 exp(-(0.229/1.35)^2) cos(2 pi 2.184 MHz 229 ns);
    //   value(pi/A)    = 1/2 - 1/2 exp(-(pi/(A T2*))^2).
    const VALUE_AT_229NS: f64 = 0.014_182_265_299_836_158;
    const VALUE_AT_HALF_PERIOD: f64 = 0.014_174_486_380_738_544;

    fn uniform_grid(n: usize, max: f64) -> Vec<f64> {
        (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn value_oracles() {
        let m = FringeModel::standard();
        assert_abs_diff_eq!(m.value(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.value(229e-9), VALUE_AT_229NS, epsilon = 1e-12);
        let half = std::f64::consts::PI / m.frequency;
        assert_abs_diff_eq!(m.value(half), VALUE_AT_HALF_PERIOD, epsilon = 1e-12);
    }

    #[test]
    fn generation_rejects_unnormalized_models() {
        let mut m = FringeModel::standard();
        m.baseline = 0.9;
        let err = generate_fringe_data(&m, &uniform_grid(10, 4e-6), 100, 1);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
        m.baseline = 0.5;
        m.t2_star = -1.0;
        assert!(generate_fringe_data(&m, &uniform_grid(10, 4e-6), 100, 1).is_err());
    }

    #[test]
    fn generation_single_shot_is_binary() {
        let data =
            generate_fringe_data(&FringeModel::standard(), &uniform_grid(40, 4e-6), 1, 7).unwrap();
        assert!(data.points().iter().all(|p| p.p0 == 0.0 || p.p0 == 1.0));
    }

    #[test]
    fn generation_matches_model_at_large_shots() {
        let m = FringeModel::standard();
        let taus = [50e-9, 229e-9, 600e-9, 1.1e-6];
        let data = generate_fringe_data(&m, &taus, 200_000, 11).unwrap();
        for p in data.points() {
            let truth = m.value(p.tau);
            let sigma = (truth * (1.0 - truth) / p.shots as f64).sqrt().max(1e-6);
            assert!(
                (p.p0 - truth).abs() < 5.0 * sigma,
                "tau {}: {} vs {truth}",
                p.tau,
                p.p0
            );
        }
    }

    #[test]
    fn dataset_validation() {
        let good = FringePoint { tau: 1e-6, p0: 0.5, shots: 100 };
        assert!(FringeDataset::new(vec![]).is_err());
        assert!(FringeDataset::new(vec![good, good]).is_err(), "non-increasing taus");
        assert!(FringeDataset::new(vec![FringePoint { p0: 1.2, ..good }]).is_err());
        assert!(FringeDataset::new(vec![FringePoint { shots: 0, ..good }]).is_err());
        assert!(FringeDataset::new(vec![FringePoint { tau: -1e-9, ..good }]).is_err());
        assert!(FringeDataset::new(vec![
            good,
            FringePoint { tau: 2e-6, ..good }
        ])
        .is_ok());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let data =
            generate_fringe_data(&FringeModel::standard(), &uniform_grid(25, 4e-6), 500, 3)
                .unwrap();
        let mut buf = Vec::new();
        data.to_csv(&mut buf).unwrap();
        let back = FringeDataset::from_csv(buf.as_slice()).unwrap();
        assert_eq!(data, back);
        assert!(FringeDataset::from_csv("a,b,c\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn noiseless_fit_recovers_exactly() {
        let truth = FringeModel {
            baseline: 0.48,
            amplitude: 0.45,
            frequency: HYPERFINE_COUPLING,
            phase: 0.3,
            t2_star: 1.35e-6,
        };
        let points: Vec<FringePoint> = uniform_grid(100, 4e-6)
            .into_iter()
            .map(|tau| FringePoint { tau, p0: truth.value(tau), shots: 10_000 })
            .collect();
        let fit = fit_fringe(&FringeDataset::new(points).unwrap(), None).unwrap();
        assert!(fit.converged);
        assert!(fit.residual_norm < 1e-8);
        assert_abs_diff_eq!(fit.params.baseline, truth.baseline, epsilon = 1e-6 * 0.48);
        assert_abs_diff_eq!(fit.params.amplitude, truth.amplitude, epsilon = 1e-6 * 0.45);
        assert_abs_diff_eq!(
            fit.params.frequency,
            truth.frequency,
            epsilon = 1e-6 * truth.frequency
        );
        assert_abs_diff_eq!(fit.params.phase, truth.phase, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.params.t2_star, truth.t2_star, epsilon = 1e-6 * 1.35e-6);
    }

    #[test]
    fn noisy_fit_recovers_within_reported_errors() {
        let truth = FringeModel::standard();
        let data = generate_fringe_data(&truth, &uniform_grid(100, 4e-6), 500, 42).unwrap();
        let fit = fit_fringe(&data, None).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.params.frequency - truth.frequency).abs() < 3.0 * fit.std_errors.frequency,
            "frequency off by {} vs sigma {}",
            (fit.params.frequency - truth.frequency).abs(),
            fit.std_errors.frequency
        );
        assert!(
            (fit.params.t2_star - truth.t2_star).abs() < 3.0 * fit.std_errors.t2_star,
            "t2 off by {} vs sigma {}",
            (fit.params.t2_star - truth.t2_star).abs(),
            fit.std_errors.t2_star
        );
        // Uncertainty scales comparable to the device calibration quotes.
        assert!(fit.std_errors.frequency < std::f64::consts::TAU * 10e3);
        assert!(fit.std_errors.t2_star < 0.05e-6);
    }

    #[test]
    fn fit_descends_from_the_initializer() {
        let truth = FringeModel::standard();
        let data = generate_fringe_data(&truth, &uniform_grid(80, 4e-6), 300, 5).unwrap();
        let crude = FringeModel {
            baseline: 0.45,
            amplitude: 0.3,
            frequency: truth.frequency * 1.02,
            phase: 0.5,
            t2_star: 2.0e-6,
        };
        let before = residual_norm(&data, &crude).unwrap();
        let fit = fit_fringe(&data, Some(crude)).unwrap();
        assert!(fit.residual_norm <= before);
        assert!((fit.params.frequency - truth.frequency).abs() / truth.frequency < 1e-3);
    }

    #[test]
    fn fit_output_is_canonical() {
        // Negative-amplitude truth must come back as positive amplitude with
        // the phase shifted by pi.
        let truth = FringeModel {
            baseline: 0.5,
            amplitude: -0.4,
            frequency: HYPERFINE_COUPLING,
            phase: 0.25,
            t2_star: 1.35e-6,
        };
        let points: Vec<FringePoint> = uniform_grid(60, 3e-6)
            .into_iter()
            .map(|tau| FringePoint { tau, p0: truth.value(tau), shots: 1000 })
            .collect();
        let fit = fit_fringe(&FringeDataset::new(points).unwrap(), None).unwrap();
        assert!(fit.params.amplitude > 0.0);
        assert!(fit.params.phase > -std::f64::consts::PI);
        assert!(fit.params.phase <= std::f64::consts::PI);
        assert_abs_diff_eq!(fit.params.amplitude, 0.4, epsilon = 1e-6);
    }

    #[test]
    fn fit_rejects_tiny_datasets() {
        let points: Vec<FringePoint> = uniform_grid(4, 1e-6)
            .into_iter()
            .map(|tau| FringePoint { tau, p0: 0.5, shots: 10 })
            .collect();
        assert!(fit_fringe(&FringeDataset::new(points).unwrap(), None).is_err());
    }

    #[test]
    fn fitted_frequency_reproduces_the_strength_map() {
        let data =
            generate_fringe_data(&FringeModel::standard(), &uniform_grid(100, 4e-6), 500, 13)
                .unwrap();
        let fit = fit_fringe(&data, None).unwrap();
        // theta = A tau / 2 for the fitted coupling (raw, outside the
        // range-guarded strength map, which caps just above 90 degrees).
        let theta = (fit.params.frequency * 229e-9 / 2.0).to_degrees();
        assert!((theta - 90.0).abs() < 0.5, "theta = {theta}");
    }
}
