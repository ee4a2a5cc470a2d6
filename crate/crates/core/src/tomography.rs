//! State and process reconstruction by linear inversion.
//!
//! State tomography measures the three Pauli components, optionally corrects
//! the outcome frequencies for readout confusion, and clips unphysical Bloch
//! vectors back onto the ball (recording that it did so). Process tomography
//! probes a channel with four input states, assembles the chi matrix in the
//! Pauli basis {I, X, Y, Z}, and rejects reconstructions that are not
//! completely positive.

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::qubit::{
    bloch_from_density, density_from_bloch, BlochVector, DensityMatrix, Operator, PureState,
    IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z,
};

/// Hermiticity defect allowed in a reconstructed chi matrix.
pub const CHI_HERMITICITY_TOL: f64 = 1e-10;
/// Chi eigenvalues may undershoot zero by this much.
pub const CHI_POSITIVITY_TOL: f64 = 1e-9;

const C_ZERO: C64 = C64::new(0.0, 0.0);

/// Measurement axis for a tomography probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliBasis {
    X,
    Y,
    Z,
}

impl PauliBasis {
    pub fn operator(self) -> &'static Operator {
        match self {
            PauliBasis::X => &SIGMA_X,
            PauliBasis::Y => &SIGMA_Y,
            PauliBasis::Z => &SIGMA_Z,
        }
    }
}

/// Probability of the +1 outcome when measuring `rho` along `basis`.
pub fn probability_zero(rho: &DensityMatrix, basis: PauliBasis) -> Result<f64> {
    let b = bloch_from_density(rho)?;
    let component = match basis {
        PauliBasis::X => b.x,
        PauliBasis::Y => b.y,
        PauliBasis::Z => b.z,
    };
    Ok((0.5 * (1.0 + component)).clamp(0.0, 1.0))
}

/// Readout confusion: `eps0` is the probability of reporting 1 for a true 0,
/// `eps1` the probability of reporting 0 for a true 1.
#[derive(Debug, Clone, Copy)]
pub struct ReadoutErrors {
    eps0: f64,
    eps1: f64,
}

impl ReadoutErrors {
    pub fn new(eps0: f64, eps1: f64) -> Result<Self> {
        for e in [eps0, eps1] {
            if !(0.0..1.0).contains(&e) {
                return Err(Error::InvalidParameter(format!(
                    "confusion rate {e} outside [0, 1)"
                )));
            }
        }
        if eps0 + eps1 >= 1.0 {
            return Err(Error::NonInvertibleCorrection(eps0 + eps1));
        }
        Ok(Self { eps0, eps1 })
    }

    /// Confusion rates implied by single-shot classification fidelities.
    pub fn from_fidelities(f0: f64, f1: f64) -> Result<Self> {
        Self::new(1.0 - f0, 1.0 - f1)
    }

    /// The device's standard single-shot confusion.
    pub fn standard() -> Self {
        Self::from_fidelities(
            crate::constants::READOUT_FIDELITY_BRIGHT,
            crate::constants::READOUT_FIDELITY_DARK,
        )
        .expect("built-in fidelities are invertible")
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn eps1(&self) -> f64 {
        self.eps1
    }

    /// Forward map: probability of *reporting* 0 given P(true 0) = `p`.
    pub fn apply(&self, p: f64) -> f64 {
        (1.0 - self.eps0) * p + self.eps1 * (1.0 - p)
    }

    /// Invert the confusion on an observed frequency. The corrected value is
    /// clamped into [0, 1]; the flag reports whether clamping occurred.
    pub fn correct(&self, raw: f64) -> (f64, bool) {
        let p = (raw - self.eps1) / (1.0 - self.eps0 - self.eps1);
        if (0.0..=1.0).contains(&p) {
            (p, false)
        } else {
            (p.clamp(0.0, 1.0), true)
        }
    }
}

/// Invert readout confusion on an observed 0-outcome frequency.
pub fn readout_correction(raw_p0: f64, eps0: f64, eps1: f64) -> Result<(f64, bool)> {
    Ok(ReadoutErrors::new(eps0, eps1)?.correct(raw_p0))
}

/// Source of measured 0-outcome frequencies for the three Pauli axes.
pub trait ProbeSampler {
    fn frequency_zero(&mut self, basis: PauliBasis, shots: u64) -> Result<f64>;
}

/// Returns exact Born probabilities; `shots` is ignored.
#[derive(Debug, Clone, Copy)]
pub struct ExactSampler {
    pub state: DensityMatrix,
}

impl ProbeSampler for ExactSampler {
    fn frequency_zero(&mut self, basis: PauliBasis, _shots: u64) -> Result<f64> {
        probability_zero(&self.state, basis)
    }
}

/// Draws finite-shot frequencies from the Born probabilities.
#[derive(Debug)]
pub struct ShotSampler<R: Rng> {
    pub state: DensityMatrix,
    pub rng: R,
}

impl<R: Rng> ProbeSampler for ShotSampler<R> {
    fn frequency_zero(&mut self, basis: PauliBasis, shots: u64) -> Result<f64> {
        if shots == 0 {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        let p = probability_zero(&self.state, basis)?;
        let mut hits = 0u64;
        for _ in 0..shots {
            if self.rng.gen_bool(p) {
                hits += 1;
            }
        }
        Ok(hits as f64 / shots as f64)
    }
}

/// Draws finite-shot frequencies through a readout-confusion channel.
///
/// Each shot reports 0 with probability (1 - eps0) p + eps1 (1 - p); the
/// true-then-confused two-stage draw collapses to this single Bernoulli.
#[derive(Debug)]
pub struct NoisyShotSampler<R: Rng> {
    pub state: DensityMatrix,
    pub errors: ReadoutErrors,
    pub rng: R,
}

impl<R: Rng> ProbeSampler for NoisyShotSampler<R> {
    fn frequency_zero(&mut self, basis: PauliBasis, shots: u64) -> Result<f64> {
        if shots == 0 {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        let p = self.errors.apply(probability_zero(&self.state, basis)?);
        let mut hits = 0u64;
        for _ in 0..shots {
            if self.rng.gen_bool(p.clamp(0.0, 1.0)) {
                hits += 1;
            }
        }
        Ok(hits as f64 / shots as f64)
    }
}

/// Reconstructed state plus diagnostics of the inversion.
#[derive(Debug, Clone, Copy)]
pub struct StateEstimate {
    /// Physical (clipped, corrected) state.
    pub state: DensityMatrix,
    /// Raw 0-outcome frequencies for the x, y, z axes.
    pub frequencies: [f64; 3],
    /// Linear-inversion Bloch vector before clipping; may leave the ball.
    pub bloch_linear: BlochVector,
    /// Bloch vector actually used, on or inside the ball.
    pub bloch: BlochVector,
    /// Whether any corrected frequency had to be clamped into [0, 1].
    pub clamped: bool,
    /// Whether the Bloch vector had to be clipped onto the unit ball.
    pub clipped: bool,
}

/// Reconstruct a state from Pauli-axis frequencies.
pub fn state_tomography<S: ProbeSampler>(
    sampler: &mut S,
    shots_per_basis: u64,
    correction: Option<&ReadoutErrors>,
) -> Result<StateEstimate> {
    let mut comps = [0.0; 3];
    let mut frequencies = [0.0; 3];
    let mut clamped = false;
    for (i, basis) in [PauliBasis::X, PauliBasis::Y, PauliBasis::Z].into_iter().enumerate() {
        let raw = sampler.frequency_zero(basis, shots_per_basis)?;
        if !(0.0..=1.0).contains(&raw) {
            return Err(Error::BadDataset(format!(
                "frequency {raw} outside [0, 1]"
            )));
        }
        frequencies[i] = raw;
        let p = match correction {
            Some(c) => {
                let (p, cl) = c.correct(raw);
                clamped |= cl;
                p
            }
            None => raw,
        };
        comps[i] = 2.0 * p - 1.0;
    }
    let bloch_linear = BlochVector::new(comps[0], comps[1], comps[2]);
    let norm = bloch_linear.norm();
    let clipped = norm > 1.0;
    let bloch = if clipped {
        BlochVector::new(comps[0] / norm, comps[1] / norm, comps[2] / norm)
    } else {
        bloch_linear
    };
    let state = density_from_bloch(&bloch)?;
    Ok(StateEstimate { state, frequencies, bloch_linear, bloch, clamped, clipped })
}

/// Chi (process) matrix of a qubit channel in the Pauli basis {I, X, Y, Z}:
/// E(rho) = sum_mn chi[m][n] P_m rho P_n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessMatrix {
    chi: [[C64; 4]; 4],
}

impl ProcessMatrix {
    /// Validate Hermiticity, complete positivity and trace, then store the
    /// Hermitian part.
    pub fn new(chi: [[C64; 4]; 4]) -> Result<Self> {
        let mut defect = 0.0f64;
        let mut h = [[C_ZERO; 4]; 4];
        for m in 0..4 {
            for n in 0..4 {
                defect = defect.max((chi[m][n] - chi[n][m].conj()).norm());
                h[m][n] = (chi[m][n] + chi[n][m].conj()) * 0.5;
            }
        }
        if defect > CHI_HERMITICITY_TOL {
            return Err(Error::NonPhysicalProcess {
                reason: "chi matrix is not Hermitian",
                residual: defect,
            });
        }
        let out = Self { chi: h };
        let min = out.min_eigenvalue();
        if min < -CHI_POSITIVITY_TOL {
            return Err(Error::NonPhysicalProcess {
                reason: "chi matrix has a negative eigenvalue (map is not completely positive)",
                residual: min,
            });
        }
        let tr = out.trace();
        if !(tr > 0.0) || tr > 1.0 + CHI_POSITIVITY_TOL {
            return Err(Error::NonPhysicalProcess {
                reason: "chi trace outside (0, 1]",
                residual: tr,
            });
        }
        Ok(out)
    }

    pub fn entry(&self, m: usize, n: usize) -> C64 {
        self.chi[m][n]
    }

    /// Trace; 1 for trace-preserving maps, the branch weight for conditional
    /// maps probed with unbiased inputs.
    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.chi[i][i].re).sum()
    }

    /// Rescale to unit trace, as used for fidelity comparisons of
    /// trace-decreasing conditional maps.
    pub fn normalized(&self) -> Self {
        let tr = self.trace();
        let mut chi = self.chi;
        for row in &mut chi {
            for v in row.iter_mut() {
                *v /= tr;
            }
        }
        Self { chi }
    }

    /// Process fidelity: normalized overlap Re tr(chi_a chi_b) with each
    /// matrix scaled to unit Hilbert-Schmidt norm. Scale-invariant, so
    /// trace-decreasing conditional branches compare directly against their
    /// unit-trace ideals; for rank-one (unitary or single-Kraus) channels it
    /// coincides with the usual trace-normalized overlap.
    pub fn fidelity_with(&self, other: &Self) -> f64 {
        let mut acc = C_ZERO;
        for m in 0..4 {
            for n in 0..4 {
                acc += self.chi[m][n] * other.chi[n][m];
            }
        }
        acc.re / (self.hs_norm() * other.hs_norm())
    }

    fn hs_norm(&self) -> f64 {
        self.chi
            .iter()
            .flatten()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest eigenvalue of the chi matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        // Embed the 4x4 Hermitian matrix H = A + iB into the 8x8 real
        // symmetric [[A, -B], [B, A]]; its spectrum is H's, doubled.
        let mut m = [[0.0f64; 8]; 8];
        for r in 0..4 {
            for c in 0..4 {
                m[r][c] = self.chi[r][c].re;
                m[r + 4][c + 4] = self.chi[r][c].re;
                m[r][c + 4] = -self.chi[r][c].im;
                m[r + 4][c] = self.chi[r][c].im;
            }
        }
        let eigs = jacobi_eigenvalues(m);
        eigs.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// The identity channel: chi_II = 1.
    pub fn identity() -> Self {
        let mut chi = [[C_ZERO; 4]; 4];
        chi[0][0] = C64::new(1.0, 0.0);
        Self { chi }
    }

    /// Outcome-averaged partial measurement of strength theta: pure
    /// dephasing with chi = diag((1 + cos theta)/2, 0, 0, (1 - cos theta)/2).
    pub fn unconditional(theta: f64) -> Result<Self> {
        let m = crate::measurement::PartialMeasurement::new(theta)?;
        let mut chi = [[C_ZERO; 4]; 4];
        chi[0][0] = C64::new(0.5 * (1.0 + m.theta().cos()), 0.0);
        chi[3][3] = C64::new(0.5 * (1.0 - m.theta().cos()), 0.0);
        Ok(Self { chi })
    }

    /// Single conditional branch of a partial measurement. Writing the Kraus
    /// operator as alpha I +/- beta sigma_z gives a rank-one chi supported on
    /// the {I, Z} block with trace 1/2.
    pub fn conditional(theta: f64, outcome: crate::qubit::Outcome) -> Result<Self> {
        let m = crate::measurement::PartialMeasurement::new(theta)?;
        let theta = m.theta();
        let alpha = (theta / 2.0).cos() * std::f64::consts::FRAC_1_SQRT_2;
        let beta = (theta / 2.0).sin() * std::f64::consts::FRAC_1_SQRT_2;
        let beta = match outcome {
            crate::qubit::Outcome::Zero => beta,
            crate::qubit::Outcome::One => -beta,
        };
        let mut chi = [[C_ZERO; 4]; 4];
        chi[0][0] = C64::new(alpha * alpha, 0.0);
        chi[0][3] = C64::new(alpha * beta, 0.0);
        chi[3][0] = C64::new(alpha * beta, 0.0);
        chi[3][3] = C64::new(beta * beta, 0.0);
        Ok(Self { chi })
    }
}

/// Column-major vec of a 2x2 matrix: [m00, m10, m01, m11].
fn vec_cm(m: &[[C64; 2]; 2]) -> [C64; 4] {
    [m[0][0], m[1][0], m[0][1], m[1][1]]
}

/// Superoperator of the channel from its action on the four probe states,
/// using vec(A X B) = (B^T kron A) vec(X).
fn build_superoperator<F>(channel: &F) -> Result<[[C64; 4]; 4]>
where
    F: Fn(&DensityMatrix) -> Result<DensityMatrix>,
{
    let e00 = channel(&PureState::down().density())?.entries();
    let e11 = channel(&PureState::up().density())?.entries();
    let exx = channel(&PureState::plus_x().density())?.entries();
    let eyy = channel(&PureState::plus_y().density())?.entries();

    // E(|0><1|) (= e01) and E(|1><0|) (= e10) follow by linearity:
    //   A = E_xx - (E_00 + E_11)/2,  B = E_yy - (E_00 + E_11)/2,
    //   E(e01) = A + iB,  E(e10) = A - iB.
    let mut e01 = [[C_ZERO; 2]; 2];
    let mut e10 = [[C_ZERO; 2]; 2];
    let i = C64::new(0.0, 1.0);
    for r in 0..2 {
        for c in 0..2 {
            let avg = (e00[r][c] + e11[r][c]) * 0.5;
            let a = exx[r][c] - avg;
            let b = eyy[r][c] - avg;
            e01[r][c] = a + i * b;
            e10[r][c] = a - i * b;
        }
    }

    // Columns ordered by the vec index of the input basis element:
    // |0><0|, |1><0|, |0><1|, |1><1|.
    let cols = [vec_cm(&e00), vec_cm(&e10), vec_cm(&e01), vec_cm(&e11)];
    let mut s = [[C_ZERO; 4]; 4];
    for (j, col) in cols.iter().enumerate() {
        for v in 0..4 {
            s[v][j] = col[v];
        }
    }
    Ok(s)
}

fn kron(a: &Operator, b: &Operator) -> [[C64; 4]; 4] {
    let mut k = [[C_ZERO; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for l in 0..2 {
                for m in 0..2 {
                    k[2 * i + l][2 * j + m] = a.entry(i, j) * b.entry(l, m);
                }
            }
        }
    }
    k
}

fn transpose_op(p: &Operator) -> Operator {
    Operator::new([
        [p.entry(0, 0), p.entry(1, 0)],
        [p.entry(0, 1), p.entry(1, 1)],
    ])
}

/// Reconstruct the chi matrix of a channel from its action on the probe
/// states |0>, |1>, |x>, |y>. The channel may be trace-decreasing (a
/// conditional branch); it must be linear and completely positive, otherwise
/// reconstruction fails with [`Error::NonPhysicalProcess`].
pub fn process_tomography<F>(channel: F) -> Result<ProcessMatrix>
where
    F: Fn(&DensityMatrix) -> Result<DensityMatrix>,
{
    let s = build_superoperator(&channel)?;
    let paulis = [IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z];
    let mut chi = [[C_ZERO; 4]; 4];
    for m in 0..4 {
        for n in 0..4 {
            // chi_mn = tr[(P_n^T kron P_m)^dag S] / 4.
            let k = kron(&transpose_op(&paulis[n]), &paulis[m]);
            let mut acc = C_ZERO;
            for r in 0..4 {
                for c in 0..4 {
                    acc += k[r][c].conj() * s[r][c];
                }
            }
            chi[m][n] = acc / 4.0;
        }
    }
    ProcessMatrix::new(chi)
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues<const N: usize>(mut a: [[f64; N]; N]) -> [f64; N] {
    for _sweep in 0..100 {
        let mut off = 0.0;
        for r in 0..N {
            for c in (r + 1)..N {
                off += a[r][c] * a[r][c];
            }
        }
        if off.sqrt() < 1e-15 {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..N {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs = [0.0; N];
    for (i, e) in eigs.iter_mut().enumerate() {
        *e = a[i][i];
    }
    eigs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::backaction_unconditional;
    use crate::qubit::Outcome;
    use approx::assert_abs_diff_eq;

    // Frozen oracle: (0.73 - 0.014) / (1 - 0.147 - 0.014) = 0.716 / 0.839.
    const CORRECTED_073: f64 = 0.853_396_901_072_706;

    #[test]
    fn readout_correction_oracle() {
        let (p, clamped) = readout_correction(0.73, 0.147, 0.014).unwrap();
        assert_abs_diff_eq!(p, CORRECTED_073, epsilon = 1e-12);
        assert!(!clamped);
    }

    #[test]
    fn readout_correction_clamps_and_flags() {
        let errors = ReadoutErrors::new(0.147, 0.014).unwrap();
        let (p, clamped) = errors.correct(0.99);
        assert_eq!(p, 1.0);
        assert!(clamped);
        let (p, clamped) = errors.correct(0.005);
        assert_eq!(p, 0.0);
        assert!(clamped);
        // Forward then inverse is the identity away from the clamp region.
        let (p, clamped) = errors.correct(errors.apply(0.37));
        assert_abs_diff_eq!(p, 0.37, epsilon = 1e-12);
        assert!(!clamped);
    }

    #[test]
    fn readout_correction_rejects_non_invertible() {
        assert!(matches!(
            readout_correction(0.5, 0.6, 0.5),
            Err(Error::NonInvertibleCorrection(_))
        ));
        assert!(readout_correction(0.5, -0.1, 0.0).is_err());
    }

    #[test]
    fn exact_tomography_round_trip() {
        for b in [
            BlochVector::new(0.3, -0.2, 0.8),
            BlochVector::new(0.0, 0.0, 0.0),
            BlochVector::new(1.0, 0.0, 0.0),
        ] {
            let rho = density_from_bloch(&b).unwrap();
            let mut sampler = ExactSampler { state: rho };
            let est = state_tomography(&mut sampler, 1, None).unwrap();
            assert_abs_diff_eq!(est.bloch.x, b.x, epsilon = 1e-12);
            assert_abs_diff_eq!(est.bloch.y, b.y, epsilon = 1e-12);
            assert_abs_diff_eq!(est.bloch.z, b.z, epsilon = 1e-12);
            assert!(!est.clipped);
            assert!(!est.clamped);
        }
    }

    #[test]
    fn shot_tomography_converges() {
        let rho = PureState::plus_x().density();
        let mut sampler = ShotSampler {
            state: rho,
            rng: crate::stream::derive_rng(3, &[1]),
        };
        let est = state_tomography(&mut sampler, 100_000, None).unwrap();
        // 4 sigma at 1e5 shots is ~0.0063 per component.
        assert!((est.bloch_linear.x - 1.0).abs() < 0.013);
        assert!(est.bloch_linear.y.abs() < 0.013);
        assert!(est.bloch_linear.z.abs() < 0.013);
    }

    #[test]
    fn noisy_tomography_with_correction_recovers_state() {
        let rho = PureState::plus_x().density();
        let errors = ReadoutErrors::standard();
        let mut sampler = NoisyShotSampler {
            state: rho,
            errors,
            rng: crate::stream::derive_rng(3, &[2]),
        };
        let est = state_tomography(&mut sampler, 200_000, Some(&errors)).unwrap();
        assert!((est.bloch_linear.x - 1.0).abs() < 0.02, "{:?}", est.bloch_linear);
        assert!(est.bloch_linear.y.abs() < 0.02);
        assert!(est.bloch_linear.z.abs() < 0.02);
        // Without correction the x component lands at 2(1 - eps0) - 1 = 0.706.
        let mut sampler = NoisyShotSampler {
            state: rho,
            errors,
            rng: crate::stream::derive_rng(3, &[3]),
        };
        let biased = state_tomography(&mut sampler, 200_000, None).unwrap();
        assert!((biased.bloch_linear.x - 0.706).abs() < 0.02);
    }

    struct FixedFrequencies([f64; 3]);

    impl ProbeSampler for FixedFrequencies {
        fn frequency_zero(&mut self, basis: PauliBasis, _shots: u64) -> Result<f64> {
            Ok(match basis {
                PauliBasis::X => self.0[0],
                PauliBasis::Y => self.0[1],
                PauliBasis::Z => self.0[2],
            })
        }
    }

    #[test]
    fn clipping_is_flagged_and_direction_preserving() {
        // Frequencies implying bloch (0.8, 0.8, 0): norm ~ 1.13.
        let mut sampler = FixedFrequencies([0.9, 0.9, 0.5]);
        let est = state_tomography(&mut sampler, 1, None).unwrap();
        assert!(est.clipped);
        assert_abs_diff_eq!(est.bloch.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.bloch_linear.x, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(est.bloch.x, est.bloch.y, epsilon = 1e-12);
        assert_abs_diff_eq!(est.bloch.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn superoperator_matches_channel_action() {
        let theta = 37f64.to_radians();
        let m = crate::measurement::PartialMeasurement::new(theta).unwrap();
        let k = *m.kraus(Outcome::Zero);
        let channel = move |rho: &DensityMatrix| k.conjugate(rho);
        let s = build_superoperator(&channel).unwrap();

        let rho = density_from_bloch(&BlochVector::new(0.2, 0.5, -0.6)).unwrap();
        let direct = vec_cm(&channel(&rho).unwrap().entries());
        let vin = vec_cm(&rho.entries());
        for v in 0..4 {
            let mut acc = C_ZERO;
            for j in 0..4 {
                acc += s[v][j] * vin[j];
            }
            assert!((acc - direct[v]).norm() < 1e-12, "component {v}");
        }
    }

    #[test]
    fn identity_channel_chi() {
        let chi = process_tomography(|rho| Ok(*rho)).unwrap();
        assert!(chi.fidelity_with(&ProcessMatrix::identity()) > 1.0 - 1e-12);
        assert_abs_diff_eq!(chi.entry(0, 0).re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(chi.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sigma_x_channel_chi() {
        let chi = process_tomography(|rho| SIGMA_X.conjugate(rho)).unwrap();
        assert_abs_diff_eq!(chi.entry(1, 1).re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(chi.entry(0, 0).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unconditional_channel_matches_analytic_chi() {
        for deg in [0.0f64, 30.0, 90.0] {
            let theta = deg.to_radians();
            let chi = process_tomography(|rho| backaction_unconditional(rho, theta)).unwrap();
            let ideal = ProcessMatrix::unconditional(theta).unwrap();
            assert!(
                chi.fidelity_with(&ideal) > 1.0 - 1e-12,
                "theta = {deg} deg: fidelity {}",
                chi.fidelity_with(&ideal)
            );
            assert_abs_diff_eq!(
                chi.entry(0, 0).re,
                0.5 * (1.0 + theta.cos()),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(chi.trace(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn conditional_branch_matches_analytic_chi() {
        let theta = 30f64.to_radians();
        let m = crate::measurement::PartialMeasurement::new(theta).unwrap();
        for outcome in [Outcome::Zero, Outcome::One] {
            let k = *m.kraus(outcome);
            let chi = process_tomography(move |rho| k.conjugate(rho)).unwrap();
            let ideal = ProcessMatrix::conditional(theta, outcome).unwrap();
            assert!(chi.fidelity_with(&ideal) > 1.0 - 1e-12);
            // Probed with these inputs the branch weight is 1/2.
            assert_abs_diff_eq!(chi.trace(), 0.5, epsilon = 1e-12);
            // Rank one: the only nonzero eigenvalue is the trace.
            assert!(chi.min_eigenvalue().abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_map_is_rejected_as_non_physical() {
        let transpose = |rho: &DensityMatrix| {
            let e = rho.entries();
            DensityMatrix::new([[e[0][0], e[1][0]], [e[0][1], e[1][1]]])
        };
        let err = process_tomography(transpose).unwrap_err();
        match err {
            Error::NonPhysicalProcess { residual, .. } => {
                assert_abs_diff_eq!(residual, -0.5, epsilon = 1e-9);
            }
            other => panic!("expected NonPhysicalProcess, got {other:?}"),
        }
    }

    #[test]
    fn jacobi_solves_known_spectrum() {
        // [[2, 1], [1, 2]] has eigenvalues 3 and 1.
        let eigs = jacobi_eigenvalues([[2.0, 1.0], [1.0, 2.0]]);
        let mut sorted = eigs;
        sorted.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(sorted[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sorted[1], 3.0, epsilon = 1e-12);
    }
}
