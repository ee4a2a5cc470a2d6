//! Two-level state algebra: pure states, density matrices, Bloch vectors and
//! 2x2 operators.
//!
//! Basis index 0 is |down>, index 1 is |up>, with the convention
//! sigma_z |down> = +|down>: the |down> pole sits at +z on the Bloch sphere
//! and a Bloch vector (x, y, z) corresponds to rho = (I + x sx + y sy + z sz)/2.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest tolerated Hermiticity defect in a density matrix.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Density-matrix eigenvalues may undershoot zero by this much.
pub const POSITIVITY_TOL: f64 = 1e-12;
/// The trace may overshoot one by this much.
pub const TRACE_TOL: f64 = 1e-12;
/// A matrix counts as unit-trace when |trace - 1| stays below this.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Measurement operators must satisfy K^dag K <= I within this slack.
pub const CONTRACTION_TOL: f64 = 1e-10;

const C_ZERO: C64 = C64::new(0.0, 0.0);
const C_ONE: C64 = C64::new(1.0, 0.0);
const C_I: C64 = C64::new(0.0, 1.0);

/// Binary label shared by measurement branches, ancilla levels and readout
/// classifications. `Zero` is the |down>-kick branch of a partial measurement
/// and the optically bright ancilla level; `One` is its complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn index(self) -> usize {
        match self {
            Outcome::Zero => 0,
            Outcome::One => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Outcome::Zero => Outcome::One,
            Outcome::One => Outcome::Zero,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// A 2x2 complex operator in the {|down>, |up>} basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operator {
    e: [[C64; 2]; 2],
}

/// Identity operator.
pub const IDENTITY: Operator = Operator::new([[C_ONE, C_ZERO], [C_ZERO, C_ONE]]);
/// Pauli x.
pub const SIGMA_X: Operator = Operator::new([[C_ZERO, C_ONE], [C_ONE, C_ZERO]]);
/// Pauli y.
pub const SIGMA_Y: Operator =
    Operator::new([[C_ZERO, C64::new(0.0, -1.0)], [C_I, C_ZERO]]);
/// Pauli z (+1 on |down>).
pub const SIGMA_Z: Operator = Operator::new([[C_ONE, C_ZERO], [C_ZERO, C64::new(-1.0, 0.0)]]);

impl Operator {
    pub const fn new(e: [[C64; 2]; 2]) -> Self {
        Self { e }
    }

    /// Diagonal operator diag(a, d).
    pub fn diagonal(a: f64, d: f64) -> Self {
        Self::new([[C64::new(a, 0.0), C_ZERO], [C_ZERO, C64::new(d, 0.0)]])
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.e[row][col]
    }

    pub fn adjoint(&self) -> Self {
        Self::new([
            [self.e[0][0].conj(), self.e[1][0].conj()],
            [self.e[0][1].conj(), self.e[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> C64 {
        self.e[0][0] + self.e[1][1]
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut e = self.e;
        for row in &mut e {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        Self::new(e)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut e = self.e;
        for r in 0..2 {
            for c in 0..2 {
                e[r][c] += other.e[r][c];
            }
        }
        Self::new(e)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut e = [[C_ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                e[r][c] = self.e[r][0] * other.e[0][c] + self.e[r][1] * other.e[1][c];
            }
        }
        Self::new(e)
    }

    /// K rho K^dag without renormalization; the result is generally
    /// sub-normalized. Fails if the input is invalid or the operator is not a
    /// contraction.
    pub fn conjugate(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        self.check_contraction()?;
        let m = self.matmul(&Operator::new(rho.e)).matmul(&self.adjoint());
        DensityMatrix::new(m.e)
    }

    /// Largest eigenvalue of K^dag K (real symmetric by construction).
    pub fn gram_spectral_norm(&self) -> f64 {
        let g = self.adjoint().matmul(self);
        let a = g.e[0][0].re;
        let d = g.e[1][1].re;
        let b = g.e[0][1];
        let mid = 0.5 * (a + d);
        let disc = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
        mid + disc
    }

    fn check_contraction(&self) -> Result<()> {
        let top = self.gram_spectral_norm();
        if top > 1.0 + CONTRACTION_TOL {
            return Err(Error::NotContractive(top));
        }
        Ok(())
    }
}

/// A normalized two-level pure state c0 |down> + c1 |up>.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState {
    c: [C64; 2],
}

impl PureState {
    /// Normalize the amplitudes; fails on a (near-)zero vector.
    pub fn new(c0: C64, c1: C64) -> Result<Self> {
        let norm = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if norm < 1e-12 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self { c: [c0 / norm, c1 / norm] })
    }

    pub fn down() -> Self {
        Self { c: [C_ONE, C_ZERO] }
    }

    pub fn up() -> Self {
        Self { c: [C_ZERO, C_ONE] }
    }

    /// (|down> + |up>)/sqrt(2), the +x axis.
    pub fn plus_x() -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { c: [h, h] }
    }

    /// (|down> - |up>)/sqrt(2), the -x axis.
    pub fn minus_x() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { c: [C64::new(h, 0.0), C64::new(-h, 0.0)] }
    }

    /// (|down> + i|up>)/sqrt(2), the +y axis.
    pub fn plus_y() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { c: [C64::new(h, 0.0), C64::new(0.0, h)] }
    }

    pub fn amplitude(&self, level: Outcome) -> C64 {
        self.c[level.index()]
    }

    /// Inner product <self|other>.
    pub fn inner(&self, other: &Self) -> C64 {
        self.c[0].conj() * other.c[0] + self.c[1].conj() * other.c[1]
    }

    pub fn density(&self) -> DensityMatrix {
        let e = [
            [
                C64::new(self.c[0].norm_sqr(), 0.0),
                self.c[0] * self.c[1].conj(),
            ],
            [
                self.c[1] * self.c[0].conj(),
                C64::new(self.c[1].norm_sqr(), 0.0),
            ],
        ];
        DensityMatrix { e }
    }

    pub fn bloch(&self) -> BlochVector {
        bloch_from_density(&self.density()).expect("pure state density is normalized")
    }
}

/// A Bloch vector. Norm at most 1 for physical states; intermediate tomography
/// output may carry a longer vector before clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Whether a density matrix carries unit trace or is a sub-normalized
/// conditional branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Normalized,
    SubNormalized,
}

/// A 2x2 density matrix: Hermitian, positive semidefinite, trace in [0, 1].
///
/// Conditional measurement branches produce sub-normalized matrices (down to
/// zero weight for a dead branch); every accessor that assumes unit trace
/// rejects them, and [`DensityMatrix::renormalized`] restores unit trace
/// explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    e: [[C64; 2]; 2],
}

impl DensityMatrix {
    /// Validate Hermiticity, positivity and trace before accepting the entries.
    pub fn new(e: [[C64; 2]; 2]) -> Result<Self> {
        let herm_defect = (e[0][1] - e[1][0].conj()).norm().max(e[0][0].im.abs()).max(e[1][1].im.abs());
        if herm_defect > HERMITICITY_TOL {
            return Err(Error::NotHermitian(herm_defect));
        }
        // Work with the Hermitian part so later arithmetic sees an exactly
        // Hermitian matrix.
        let off = (e[0][1] + e[1][0].conj()) * 0.5;
        let e = [
            [C64::new(e[0][0].re, 0.0), off],
            [off.conj(), C64::new(e[1][1].re, 0.0)],
        ];
        let tr = e[0][0].re + e[1][1].re;
        if !(tr >= -TRACE_TOL) || tr > 1.0 + TRACE_TOL {
            return Err(Error::BadTrace(tr));
        }
        let out = Self { e };
        let (_, lo) = out.eigenvalues();
        if lo < -POSITIVITY_TOL {
            return Err(Error::NotPositive(lo));
        }
        Ok(out)
    }

    pub fn maximally_mixed() -> Self {
        Self {
            e: [
                [C64::new(0.5, 0.0), C_ZERO],
                [C_ZERO, C64::new(0.5, 0.0)],
            ],
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.e[row][col]
    }

    pub fn entries(&self) -> [[C64; 2]; 2] {
        self.e
    }

    pub fn trace(&self) -> f64 {
        self.e[0][0].re + self.e[1][1].re
    }

    pub fn normalization(&self) -> Normalization {
        if (self.trace() - 1.0).abs() <= NORMALIZATION_TOL {
            Normalization::Normalized
        } else {
            Normalization::SubNormalized
        }
    }

    fn require_normalized(&self) -> Result<()> {
        match self.normalization() {
            Normalization::Normalized => Ok(()),
            Normalization::SubNormalized => Err(Error::SubNormalized(self.trace())),
        }
    }

    /// Scale back to unit trace.
    pub fn renormalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr < 1e-15 {
            return Err(Error::BadTrace(tr));
        }
        let s = C64::new(1.0 / tr, 0.0);
        let mut e = self.e;
        for row in &mut e {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        Ok(Self { e })
    }

    /// tr(rho^2); 1 for pure states, 1/2 for the maximally mixed state.
    pub fn purity(&self) -> Result<f64> {
        self.require_normalized()?;
        let p = self.e[0][0].re.powi(2)
            + self.e[1][1].re.powi(2)
            + 2.0 * self.e[0][1].norm_sqr();
        Ok(p)
    }

    /// Eigenvalues in descending order (closed form for 2x2 Hermitian).
    pub fn eigenvalues(&self) -> (f64, f64) {
        let a = self.e[0][0].re;
        let d = self.e[1][1].re;
        let mid = 0.5 * (a + d);
        let disc = (0.25 * (a - d).powi(2) + self.e[0][1].norm_sqr()).sqrt();
        (mid + disc, mid - disc)
    }

    /// Scale the off-diagonal elements by `factor` in [0, 1] (pure dephasing
    /// in the energy basis).
    pub fn dephased(&self, factor: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&factor) {
            return Err(Error::InvalidParameter(format!(
                "dephasing factor {factor} outside [0, 1]"
            )));
        }
        let f = C64::new(factor, 0.0);
        let e = [
            [self.e[0][0], self.e[0][1] * f],
            [self.e[1][0] * f, self.e[1][1]],
        ];
        Ok(Self { e })
    }

    /// Expectation value tr(rho P) of a Hermitian operator.
    pub fn expectation(&self, op: &Operator) -> f64 {
        let mut acc = C_ZERO;
        for r in 0..2 {
            for c in 0..2 {
                acc += self.e[r][c] * op.entry(c, r);
            }
        }
        acc.re
    }
}

/// Bloch components of a unit-trace density matrix.
pub fn bloch_from_density(rho: &DensityMatrix) -> Result<BlochVector> {
    rho.require_normalized()?;
    let e01 = rho.entry(0, 1);
    Ok(BlochVector {
        x: 2.0 * e01.re,
        y: -2.0 * e01.im,
        z: rho.entry(0, 0).re - rho.entry(1, 1).re,
    })
}

/// Density matrix of a Bloch vector with norm at most 1 (+ rounding slack).
pub fn density_from_bloch(b: &BlochVector) -> Result<DensityMatrix> {
    let n = b.norm();
    if n > 1.0 + 1e-12 {
        return Err(Error::BlochNormExceeded(n));
    }
    // Shrink marginal overshoot so positivity holds exactly.
    let s = if n > 1.0 { 1.0 / n } else { 1.0 };
    let (x, y, z) = (b.x * s, b.y * s, b.z * s);
    DensityMatrix::new([
        [C64::new((1.0 + z) / 2.0, 0.0), C64::new(x / 2.0, -y / 2.0)],
        [C64::new(x / 2.0, y / 2.0), C64::new((1.0 - z) / 2.0, 0.0)],
    ])
}

/// Fidelity <target|rho|target> of a unit-trace state against a pure target.
pub fn fidelity(rho: &DensityMatrix, target: &PureState) -> Result<f64> {
    rho.require_normalized()?;
    let t = target.density();
    let mut acc = C_ZERO;
    for r in 0..2 {
        for c in 0..2 {
            acc += t.entry(c, r) * rho.entry(r, c);
        }
    }
    Ok(acc.re.clamp(0.0, 1.0))
}

/// Apply a measurement (Kraus) operator to a unit-trace state.
///
/// Returns the renormalized conditional state together with the branch
/// probability tr(K rho K^dag). Fails when K is not a contraction or the
/// branch probability vanishes.
pub fn apply_operator(rho: &DensityMatrix, k: &Operator) -> Result<(DensityMatrix, f64)> {
    rho.require_normalized()?;
    let raw = k.conjugate(rho)?;
    let p = raw.trace();
    if p < 1e-15 {
        return Err(Error::DegenerateBranch(p));
    }
    Ok((raw.renormalized()?, p))
}
