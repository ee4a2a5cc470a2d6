//! Variable-strength partial measurement of the system qubit through the
//! ancilla, plus weak-value estimators.
//!
//! A hyperfine coupling A acting for an entangling interval tau implements a
//! two-outcome measurement of strength theta = A tau / 2. The Kraus pair is
//!
//! ```text
//! M0 = diag(cos(pi/4 - theta/2), cos(pi/4 + theta/2))
//! M1 = diag(cos(pi/4 + theta/2), cos(pi/4 - theta/2))
//! ```
//!
//! so outcome 0 kicks the state toward |down> and theta = pi/2 recovers a
//! projective z measurement. Averaged over outcomes the map is pure
//! dephasing: (x, y, z) -> (x cos theta, y cos theta, z).

use rand::Rng;

use crate::constants::HYPERFINE_COUPLING;
use crate::error::{Error, Result};
use crate::qubit::{apply_operator, DensityMatrix, Operator, Outcome, PureState, SIGMA_Z};

/// Measurement strengths may overshoot pi/2 by this much (rounding of a
/// hardware-quantized entangling interval) and are clamped back.
pub const STRENGTH_SLACK: f64 = 5e-4;

/// Converts entangling intervals to measurement strengths and back.
#[derive(Debug, Clone, Copy)]
pub struct StrengthMap {
    /// Hyperfine coupling, rad/s.
    pub coupling: f64,
}

impl StrengthMap {
    /// Map with the device's hyperfine coupling.
    pub fn standard() -> Self {
        Self { coupling: HYPERFINE_COUPLING }
    }

    /// Strength theta = A tau / 2 for an entangling interval tau (seconds).
    pub fn theta(&self, tau: f64) -> Result<f64> {
        let theta = self.coupling * tau / 2.0;
        if !tau.is_finite() || tau < 0.0 || theta > std::f64::consts::FRAC_PI_2 + STRENGTH_SLACK {
            return Err(Error::DurationOutOfRange(tau));
        }
        Ok(theta)
    }

    /// Entangling interval realizing strength theta.
    pub fn tau(&self, theta: f64) -> Result<f64> {
        check_strength(theta)?;
        Ok(2.0 * theta / self.coupling)
    }
}

fn check_strength(theta: f64) -> Result<f64> {
    if !theta.is_finite() || theta < 0.0 || theta > std::f64::consts::FRAC_PI_2 + STRENGTH_SLACK {
        return Err(Error::StrengthOutOfRange(theta));
    }
    Ok(theta.min(std::f64::consts::FRAC_PI_2))
}

/// A two-outcome partial measurement of fixed strength.
#[derive(Debug, Clone, Copy)]
pub struct PartialMeasurement {
    theta: f64,
    kraus: [Operator; 2],
}

impl PartialMeasurement {
    /// Build the Kraus pair for strength theta in [0, pi/2].
    pub fn new(theta: f64) -> Result<Self> {
        let theta = check_strength(theta)?;
        let plus = (std::f64::consts::FRAC_PI_4 + theta / 2.0).cos();
        let minus = (std::f64::consts::FRAC_PI_4 - theta / 2.0).cos();
        Ok(Self {
            theta,
            kraus: [
                Operator::diagonal(minus, plus),
                Operator::diagonal(plus, minus),
            ],
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn kraus(&self, outcome: Outcome) -> &Operator {
        &self.kraus[outcome.index()]
    }

    /// Branch probabilities [P(0), P(1)] on a unit-trace state.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Result<[f64; 2]> {
        let z = crate::qubit::bloch_from_density(rho)?.z;
        let p0 = 0.5 * (1.0 + self.theta.sin() * z);
        Ok([p0, 1.0 - p0])
    }

    /// Likelihood of outcome `o` given the ancilla ends in level `level`;
    /// (1 + sin theta)/2 when the labels agree.
    pub fn level_likelihood(&self, o: Outcome, level: Outcome) -> f64 {
        if o == level {
            0.5 * (1.0 + self.theta.sin())
        } else {
            0.5 * (1.0 - self.theta.sin())
        }
    }
}

/// Result of a single partial measurement.
#[derive(Debug, Clone, Copy)]
pub struct Measured {
    pub outcome: Outcome,
    /// Renormalized conditional state.
    pub post: DensityMatrix,
    /// Probability of the realized branch.
    pub probability: f64,
}

/// Measure `rho` with strength `theta`, drawing the branch from `rng`.
pub fn measure_partial(
    rho: &DensityMatrix,
    theta: f64,
    rng: &mut impl Rng,
) -> Result<Measured> {
    let m = PartialMeasurement::new(theta)?;
    let [p0, _] = m.probabilities(rho)?;
    let outcome = if rng.gen_bool(p0.clamp(0.0, 1.0)) {
        Outcome::Zero
    } else {
        Outcome::One
    };
    let (post, probability) = apply_operator(rho, m.kraus(outcome))?;
    Ok(Measured { outcome, post, probability })
}

/// Measure `rho` with strength `theta`, forcing the branch (replay mode).
/// Fails with [`Error::DegenerateBranch`] when the branch has no weight.
pub fn measure_partial_forced(
    rho: &DensityMatrix,
    theta: f64,
    outcome: Outcome,
) -> Result<Measured> {
    let m = PartialMeasurement::new(theta)?;
    let (post, probability) = apply_operator(rho, m.kraus(outcome))?;
    Ok(Measured { outcome, post, probability })
}

/// Outcome-averaged (unconditional) post-measurement state
/// M0 rho M0^dag + M1 rho M1^dag.
pub fn backaction_unconditional(rho: &DensityMatrix, theta: f64) -> Result<DensityMatrix> {
    let m = PartialMeasurement::new(theta)?;
    let a = m.kraus(Outcome::Zero).conjugate(rho)?;
    let b = m.kraus(Outcome::One).conjugate(rho)?;
    let mut e = a.entries();
    let be = b.entries();
    for r in 0..2 {
        for c in 0..2 {
            e[r][c] += be[r][c];
        }
    }
    DensityMatrix::new(e)
}

/// Post-selection analyzer state at angle phi in the x-z plane.
///
/// Label `Zero` selects cos(phi/2)|down> - sin(phi/2)|up>; label `One` its
/// orthogonal complement.
pub fn post_selection_state(phi: f64, label: Outcome) -> Result<PureState> {
    if !phi.is_finite() {
        return Err(Error::InvalidParameter(format!("post-selection angle {phi}")));
    }
    let (c, s) = ((phi / 2.0).cos(), (phi / 2.0).sin());
    match label {
        Outcome::Zero => PureState::new(c.into(), (-s).into()),
        Outcome::One => PureState::new(s.into(), c.into()),
    }
}

/// Weak value <f|sigma_z|i> / <f|i>; complex in general.
pub fn weak_value(initial: &PureState, final_state: &PureState) -> Result<num_complex::Complex64> {
    let overlap = final_state.inner(initial);
    if overlap.norm() < 1e-12 {
        return Err(Error::SingularPostSelection(overlap.norm()));
    }
    let numerator = final_state.amplitude(Outcome::Zero).conj()
        * SIGMA_Z.entry(0, 0)
        * initial.amplitude(Outcome::Zero)
        + final_state.amplitude(Outcome::One).conj()
            * SIGMA_Z.entry(1, 1)
            * initial.amplitude(Outcome::One);
    Ok(numerator / overlap)
}

/// Modified weak value extracted from a finite-strength measurement record:
///
/// W_m = [P(0, f) - P(1, f)] / (sin(theta) [P(0, f) + P(1, f)])
///
/// where P(k, f) = |<f| M_k |i>|^2 is the joint probability of branch k and
/// successful post-selection on `final_state`. Converges to Re W as
/// theta -> 0 and stays finite for any overlap.
pub fn modified_weak_value(
    initial: &PureState,
    final_state: &PureState,
    theta: f64,
) -> Result<f64> {
    let theta = check_strength(theta)?;
    if theta.sin() < 1e-15 {
        return Err(Error::ZeroStrength);
    }
    let m = PartialMeasurement::new(theta)?;
    let mut joint = [0.0; 2];
    for o in [Outcome::Zero, Outcome::One] {
        let k = m.kraus(o);
        let amp = final_state.amplitude(Outcome::Zero).conj()
            * k.entry(0, 0)
            * initial.amplitude(Outcome::Zero)
            + final_state.amplitude(Outcome::One).conj()
                * k.entry(1, 1)
                * initial.amplitude(Outcome::One);
        joint[o.index()] = amp.norm_sqr();
    }
    let mass = joint[0] + joint[1];
    if mass < 1e-15 {
        return Err(Error::VanishingMass(mass));
    }
    Ok((joint[0] - joint[1]) / (theta.sin() * mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::{bloch_from_density, density_from_bloch, BlochVector, IDENTITY};
    use approx::assert_abs_diff_eq;

    // Frozen oracle values, computed independently of the implementation:
    //   cos(42.5 deg), cos(47.5 deg) for the theta = 5 deg Kraus entries;
    //   (1 + sin 5 deg)/2 for P(0 | down);
    //   1/sin(5 deg) for the modified weak value at phi = 90 deg - theta.
    const COS_42_5: f64 = 0.737_277_336_810_124;
    const COS_47_5: f64 = 0.675_590_207_615_660;
    const P0_GIVEN_DOWN_5DEG: f64 = 0.543_577_871_373_829;
    const INV_SIN_5DEG: f64 = 11.473_713_246_568_108;

    #[test]
    fn kraus_entries_at_five_degrees() {
        let m = PartialMeasurement::new(5f64.to_radians()).unwrap();
        let m0 = m.kraus(Outcome::Zero);
        let m1 = m.kraus(Outcome::One);
        assert_abs_diff_eq!(m0.entry(0, 0).re, COS_42_5, epsilon = 1e-12);
        assert_abs_diff_eq!(m0.entry(1, 1).re, COS_47_5, epsilon = 1e-12);
        assert_abs_diff_eq!(m1.entry(0, 0).re, COS_47_5, epsilon = 1e-12);
        assert_abs_diff_eq!(m1.entry(1, 1).re, COS_42_5, epsilon = 1e-12);
        assert_eq!(m0.entry(0, 1).norm(), 0.0);
    }

    #[test]
    fn kraus_completeness_across_strengths() {
        for i in 0..=180 {
            let theta = (i as f64) * 0.5f64.to_radians();
            let m = PartialMeasurement::new(theta).unwrap();
            let sum = m
                .kraus(Outcome::Zero)
                .adjoint()
                .matmul(m.kraus(Outcome::Zero))
                .add(&m.kraus(Outcome::One).adjoint().matmul(m.kraus(Outcome::One)));
            for r in 0..2 {
                for c in 0..2 {
                    assert!(
                        (sum.entry(r, c) - IDENTITY.entry(r, c)).norm() <= 1e-12,
                        "completeness defect at theta index {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn projective_limit() {
        let m = PartialMeasurement::new(std::f64::consts::FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(m.kraus(Outcome::Zero).entry(0, 0).re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.kraus(Outcome::Zero).entry(1, 1).re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn outcome_probability_oracle() {
        let m = PartialMeasurement::new(5f64.to_radians()).unwrap();
        let [p0, p1] = m.probabilities(&PureState::down().density()).unwrap();
        assert_abs_diff_eq!(p0, P0_GIVEN_DOWN_5DEG, epsilon = 1e-12);
        assert_abs_diff_eq!(p0 + p1, 1.0, epsilon = 1e-15);
        // Direct matrix route must agree.
        let forced =
            measure_partial_forced(&PureState::down().density(), 5f64.to_radians(), Outcome::Zero)
                .unwrap();
        assert_abs_diff_eq!(forced.probability, p0, epsilon = 1e-14);
    }

    #[test]
    fn strength_map_round_trip() {
        let map = StrengthMap::standard();
        // 229 ns lands a hair above pi/2; the map reports the raw value.
        let theta = map.theta(229e-9).unwrap();
        assert!((theta.to_degrees() - 90.0).abs() < 0.1);
        assert!(theta > std::f64::consts::FRAC_PI_2);
        // 5 degrees requires roughly 12.7 ns.
        let tau = map.tau(5f64.to_radians()).unwrap();
        assert!((tau - 12.7e-9).abs() < 0.05e-9, "tau = {tau}");
        let back = map.theta(tau).unwrap();
        assert_abs_diff_eq!(back, 5f64.to_radians(), epsilon = 1e-15);
        // Far out of range is rejected.
        assert!(map.theta(1e-3).is_err());
        assert!(map.theta(-1.0).is_err());
        assert!(map.tau(2.0).is_err());
        assert!(PartialMeasurement::new(theta).is_ok(), "slack absorbs rounding");
    }

    #[test]
    fn unconditional_backaction_is_pure_dephasing() {
        let start = BlochVector::new(0.6, -0.3, 0.5);
        let rho = density_from_bloch(&start).unwrap();
        for deg in [0.0, 5.0, 30.0, 60.0, 90.0] {
            let theta = (deg as f64).to_radians();
            let out = backaction_unconditional(&rho, theta).unwrap();
            let b = bloch_from_density(&out).unwrap();
            assert_abs_diff_eq!(b.x, start.x * theta.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(b.y, start.y * theta.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(b.z, start.z, epsilon = 1e-12);
        }
    }

    #[test]
    fn conditional_post_state_from_direct_amplitudes() {
        // Independent route: apply M0 to |x> amplitudes by hand.
        let theta = 30f64.to_radians();
        let minus = (std::f64::consts::FRAC_PI_4 - theta / 2.0).cos();
        let plus = (std::f64::consts::FRAC_PI_4 + theta / 2.0).cos();
        let psi = PureState::new(minus.into(), plus.into()).unwrap();

        let got = measure_partial_forced(&PureState::plus_x().density(), theta, Outcome::Zero)
            .unwrap();
        assert_abs_diff_eq!(
            crate::qubit::fidelity(&got.post, &psi).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(got.probability, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn sampled_outcomes_match_forced_branches() {
        let mut rng = crate::stream::derive_rng(11, &[0]);
        let rho = density_from_bloch(&BlochVector::new(0.0, 0.0, 0.4)).unwrap();
        let theta = 40f64.to_radians();
        let mut seen = [false; 2];
        for _ in 0..64 {
            let m = measure_partial(&rho, theta, &mut rng).unwrap();
            let f = measure_partial_forced(&rho, theta, m.outcome).unwrap();
            assert_abs_diff_eq!(m.probability, f.probability, epsilon = 1e-15);
            seen[m.outcome.index()] = true;
        }
        assert!(seen[0] && seen[1], "both branches should appear in 64 draws");
    }

    #[test]
    fn forced_dead_branch_is_an_error() {
        let err = measure_partial_forced(
            &PureState::up().density(),
            std::f64::consts::FRAC_PI_2,
            Outcome::Zero,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateBranch(_)));
    }

    #[test]
    fn weak_value_oracle() {
        // |i> = |x>, |f> at phi: W = (1 + sin phi)/cos phi, purely real.
        for deg in [0.0, 20.0, 45.0, 70.0, 85.0] {
            let phi = (deg as f64).to_radians();
            let f = post_selection_state(phi, Outcome::Zero).unwrap();
            let w = weak_value(&PureState::plus_x(), &f).unwrap();
            assert_abs_diff_eq!(w.re, (1.0 + phi.sin()) / phi.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(w.im, 0.0, epsilon = 1e-12);
        }
        // Orthogonal post-selection diverges.
        let f = post_selection_state(std::f64::consts::FRAC_PI_2, Outcome::Zero).unwrap();
        assert!(matches!(
            weak_value(&PureState::plus_x(), &f),
            Err(Error::SingularPostSelection(_))
        ));
    }

    #[test]
    fn weak_value_exceeds_eigenrange_beyond_45_degrees() {
        let f = post_selection_state(50f64.to_radians(), Outcome::Zero).unwrap();
        let w = weak_value(&PureState::plus_x(), &f).unwrap();
        assert!(w.re > 1.0, "amplified weak value, got {}", w.re);
    }

    #[test]
    fn modified_weak_value_closed_form() {
        // Independent closed form for |i> = |x>:
        //   W_m = cos phi / (1 - sin phi cos theta).
        for theta_deg in [5.0, 15.0, 40.0] {
            let theta = (theta_deg as f64).to_radians();
            for phi_deg in [0.0, 30.0, 60.0, 85.0] {
                let phi = (phi_deg as f64).to_radians();
                let f = post_selection_state(phi, Outcome::Zero).unwrap();
                let got = modified_weak_value(&PureState::plus_x(), &f, theta).unwrap();
                let oracle = phi.cos() / (1.0 - phi.sin() * theta.cos());
                assert_abs_diff_eq!(got, oracle, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn modified_weak_value_peak() {
        // At phi = pi/2 - theta the 1-branch joint probability vanishes and
        // W_m = 1/sin(theta).
        let theta = 5f64.to_radians();
        let phi = std::f64::consts::FRAC_PI_2 - theta;
        let f = post_selection_state(phi, Outcome::Zero).unwrap();
        let w = modified_weak_value(&PureState::plus_x(), &f, theta).unwrap();
        assert_abs_diff_eq!(w, INV_SIN_5DEG, epsilon = 1e-9);

        // The peak comes from the 1-branch emptying out entirely.
        let forced = measure_partial_forced(&PureState::plus_x().density(), theta, Outcome::One)
            .unwrap();
        let p_f_given_1 = crate::qubit::fidelity(&forced.post, &f).unwrap();
        assert_abs_diff_eq!(p_f_given_1, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn modified_weak_value_converges_to_weak_value() {
        for &theta in &[1e-3, 1e-4] {
            for phi_deg in 0..=8 {
                let phi = (phi_deg as f64) * 10f64.to_radians();
                let f = post_selection_state(phi, Outcome::Zero).unwrap();
                let w = weak_value(&PureState::plus_x(), &f).unwrap();
                let wm = modified_weak_value(&PureState::plus_x(), &f, theta).unwrap();
                assert!(
                    (wm - w.re).abs() <= 2.0 * theta,
                    "theta={theta}, phi={phi_deg}0deg: |{wm} - {}| > 2 theta",
                    w.re
                );
            }
        }
    }

    #[test]
    fn modified_weak_value_guards() {
        let f = post_selection_state(0.3, Outcome::Zero).unwrap();
        assert!(matches!(
            modified_weak_value(&PureState::plus_x(), &f, 0.0),
            Err(Error::ZeroStrength)
        ));
        // At theta = pi/2 both branches of |down> stay on |down>, so an
        // analyzer along |up> catches zero joint mass.
        let up_analyzer = post_selection_state(std::f64::consts::PI, Outcome::Zero).unwrap();
        let err = modified_weak_value(
            &PureState::down(),
            &up_analyzer,
            std::f64::consts::FRAC_PI_2,
        );
        assert!(matches!(err, Err(Error::VanishingMass(_))), "{err:?}");
    }
}
