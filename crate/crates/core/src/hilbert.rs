//! Finite-dimensional azimuthal Hilbert space: the OAM, angular (ANG),
//! wedge and modified-wedge (MW) bases, rotations, and the MW -> ANG
//! expansion coefficients.
//!
//! Vectors and matrices are stored in the OAM basis with index `i`
//! corresponding to `l = i - N`. Angular labels (theta, wedge Theta,
//! rotation offsets) are integers taken modulo `d` and kept in `[-N, N]`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue a physical state may carry.
pub const EIGEN_FLOOR: f64 = -1e-9;

/// Hilbert-space size `d = 2N + 1`, stored through `N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dimension {
    max_mode: usize,
}

impl Dimension {
    pub fn new(max_mode: usize) -> Self {
        Dimension { max_mode }
    }

    pub fn from_size(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::DimensionTooSmall("d must be positive".into()));
        }
        if d.is_multiple_of(2) {
            return Err(Error::EvenDimension(d));
        }
        Ok(Dimension {
            max_mode: (d - 1) / 2,
        })
    }

    /// `d`.
    pub fn size(self) -> usize {
        2 * self.max_mode + 1
    }

    /// `N`.
    pub fn max_mode(self) -> usize {
        self.max_mode
    }

    /// Tomography needs at least one non-trivial mode pair.
    pub fn require_tomography(self) -> Result<()> {
        if self.max_mode == 0 {
            return Err(Error::DimensionTooSmall("tomography needs d >= 3".into()));
        }
        Ok(())
    }

    /// Labels `-N..=N` in storage order.
    pub fn labels(self) -> impl Iterator<Item = i64> + Clone {
        let n = self.max_mode as i64;
        -n..=n
    }

    /// Canonical representative of `raw` modulo `d` in `[-N, N]`.
    pub fn reduce(self, raw: i64) -> i64 {
        let d = self.size() as i64;
        let n = self.max_mode as i64;
        (raw + n).rem_euclid(d) - n
    }

    /// Storage index of an angular label (reduced first).
    pub fn angle_slot(self, raw: i64) -> usize {
        (self.reduce(raw) + self.max_mode as i64) as usize
    }

    pub fn angle(self, raw: i64) -> AngleIndex {
        AngleIndex(self.reduce(raw))
    }

    pub fn mode(self, l: i64) -> Result<ModeIndex> {
        ModeIndex::new(l, self)
    }

    /// Storage index of an OAM label; the label must be in range.
    pub fn mode_slot(self, l: i64) -> Result<usize> {
        Ok(ModeIndex::new(l, self)?.slot(self))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d={}", self.size())
    }
}

/// OAM quantum number `l` with `|l| <= N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex(i64);

impl ModeIndex {
    pub fn new(l: i64, dim: Dimension) -> Result<Self> {
        if l.unsigned_abs() as usize > dim.max_mode() {
            return Err(Error::ModeOutOfRange {
                l,
                max: dim.max_mode(),
            });
        }
        Ok(ModeIndex(l))
    }

    pub fn value(self) -> i64 {
        self.0
    }

    pub fn slot(self, dim: Dimension) -> usize {
        (self.0 + dim.max_mode() as i64) as usize
    }
}

/// Discrete angle (also used for wedge labels and rotation offsets),
/// always held as the representative in `[-N, N]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AngleIndex(i64);

impl AngleIndex {
    pub fn new(raw: i64, dim: Dimension) -> Self {
        dim.angle(raw)
    }

    pub fn value(self) -> i64 {
        self.0
    }

    pub fn shifted(self, by: i64, dim: Dimension) -> Self {
        dim.angle(self.0 + by)
    }

    pub fn slot(self, dim: Dimension) -> usize {
        dim.angle_slot(self.0)
    }

    /// Physical angle `2 pi theta / d` in radians.
    pub fn radians(self, dim: Dimension) -> f64 {
        2.0 * PI * self.0 as f64 / dim.size() as f64
    }
}

/// `exp(2 pi i k / d)` with `k` reduced first so periodic labels give
/// bit-identical phases.
pub fn root_of_unity(k: i64, d: usize) -> Complex64 {
    let k = k.rem_euclid(d as i64);
    Complex64::from_polar(1.0, 2.0 * PI * k as f64 / d as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Basis {
    Oam,
    Ang,
    Wedge,
}

impl Basis {
    pub fn name(self) -> &'static str {
        match self {
            Basis::Oam => "OAM",
            Basis::Ang => "ANG",
            Basis::Wedge => "WEDGE",
        }
    }

    /// Header label used in CSV output.
    pub fn label(self) -> &'static str {
        match self {
            Basis::Oam => "l",
            Basis::Ang => "theta",
            Basis::Wedge => "Theta",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dim: Dimension,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(dim: Dimension, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != dim.size() {
            return Err(Error::DimensionMismatch {
                expected: dim.size(),
                found: amps.len(),
            });
        }
        Ok(StateVector { dim, amps })
    }

    /// Unnormalized vector from `(l, amplitude)` pairs; repeated labels add.
    pub fn from_components(dim: Dimension, comps: &[(i64, Complex64)]) -> Result<Self> {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim.size()];
        for &(l, c) in comps {
            amps[dim.mode_slot(l)?] += c;
        }
        Ok(StateVector { dim, amps })
    }

    pub fn oam_eigenstate(l: ModeIndex, dim: Dimension) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim.size()];
        amps[l.slot(dim)] = Complex64::new(1.0, 0.0);
        StateVector { dim, amps }
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, l: i64) -> Result<Complex64> {
        Ok(self.amps[self.dim.mode_slot(l)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::Norm("zero vector cannot be normalized".into()));
        }
        Ok(StateVector {
            dim: self.dim,
            amps: self.amps.iter().map(|a| a / n).collect(),
        })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn to_dvector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.amps)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        StateVector {
            dim: self.dim,
            amps: self.amps.iter().map(|a| a * c).collect(),
        }
    }

    pub fn add(&self, other: &StateVector) -> Self {
        StateVector {
            dim: self.dim,
            amps: self
                .amps
                .iter()
                .zip(&other.amps)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `|psi><psi|` in the OAM basis.
    pub fn projector(&self) -> DensityMatrix {
        let v = self.to_dvector();
        DensityMatrix {
            dim: self.dim,
            basis: Basis::Oam,
            entries: &v * v.adjoint(),
        }
    }
}

/// d x d complex matrix tagged with the basis it is expressed in.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim: Dimension,
    basis: Basis,
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(dim: Dimension, basis: Basis, entries: CMatrix) -> Result<Self> {
        if entries.nrows() != dim.size() || entries.ncols() != dim.size() {
            return Err(Error::DimensionMismatch {
                expected: dim.size(),
                found: entries.nrows().max(entries.ncols()),
            });
        }
        Ok(DensityMatrix {
            dim,
            basis,
            entries,
        })
    }

    pub fn from_pure(state: &StateVector) -> Self {
        state.projector()
    }

    pub fn maximally_mixed(dim: Dimension, basis: Basis) -> Self {
        let d = dim.size();
        DensityMatrix {
            dim,
            basis,
            entries: CMatrix::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0),
        }
    }

    /// Convex (or any real-linear) combination of matrices sharing a basis.
    pub fn mixture(members: &[(f64, DensityMatrix)]) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let (dim, basis) = (first.1.dim, first.1.basis);
        let d = dim.size();
        let mut acc = CMatrix::zeros(d, d);
        for (w, m) in members {
            if m.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.dim.size(),
                });
            }
            if m.basis != basis {
                return Err(Error::BasisMismatch {
                    expected: basis.name(),
                    found: m.basis.name(),
                });
            }
            acc += &m.entries * Complex64::new(*w, 0.0);
        }
        Ok(DensityMatrix {
            dim,
            basis,
            entries: acc,
        })
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    /// Entry addressed by basis labels. Angular labels wrap modulo `d`.
    pub fn entry(&self, a: i64, b: i64) -> Complex64 {
        self.entries[(self.dim.angle_slot(a), self.dim.angle_slot(b))]
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn scaled(&self, s: f64) -> Self {
        DensityMatrix {
            dim: self.dim,
            basis: self.basis,
            entries: &self.entries * Complex64::new(s, 0.0),
        }
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let d = self.dim.size();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn require_hermitian(&self, tol: f64) -> Result<()> {
        let dev = self.hermitian_deviation();
        if dev > tol {
            return Err(Error::NonHermitianInput(dev));
        }
        Ok(())
    }

    /// Hermitian part `(A + A^dagger) / 2`.
    pub fn hermitian_part(&self) -> CMatrix {
        (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .hermitian_part()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn purity(&self) -> f64 {
        (&self.entries * &self.entries).trace().re
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Hermitian, unit trace and positive within the physical tolerances.
    pub fn validate_physical(&self) -> Result<()> {
        if self.basis == Basis::Wedge {
            return Err(Error::BasisMismatch {
                expected: "OAM or ANG",
                found: "WEDGE",
            });
        }
        let dev = self.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotPhysical(format!(
                "not Hermitian (deviation {dev:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::NotPhysical(format!("trace {tr} != 1")));
        }
        let min = self.eigenvalues()[0];
        if min < EIGEN_FLOOR {
            return Err(Error::NotPhysical(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Change between the OAM and ANG bases (the wedge table is not a basis
    /// representation and cannot be converted this way).
    pub fn to_basis(&self, target: Basis) -> Result<DensityMatrix> {
        if self.basis == target {
            return Ok(self.clone());
        }
        let f = ang_basis_matrix(self.dim);
        let entries = match (self.basis, target) {
            (Basis::Oam, Basis::Ang) => f.adjoint() * &self.entries * &f,
            (Basis::Ang, Basis::Oam) => &f * &self.entries * f.adjoint(),
            _ => {
                return Err(Error::BasisMismatch {
                    expected: "OAM or ANG",
                    found: "WEDGE",
                });
            }
        };
        Ok(DensityMatrix {
            dim: self.dim,
            basis: target,
            entries,
        })
    }

    /// `R(tau) rho R(tau)^dagger`, rotating the state by `tau`.
    pub fn rotated(&self, tau: AngleIndex) -> Result<DensityMatrix> {
        let basis = self.basis;
        let oam = self.to_basis(Basis::Oam)?;
        let r = CMatrix::from_diagonal(&DVector::from_iterator(
            self.dim.size(),
            self.dim.labels().map(|l| rotation_phase(l, tau, self.dim)),
        ));
        let rotated = DensityMatrix {
            dim: self.dim,
            basis: Basis::Oam,
            entries: &r * oam.entries * r.adjoint(),
        };
        rotated.to_basis(basis)
    }
}

/// Columns are the ANG states expressed in the OAM basis:
/// `F[(l, theta)] = <l|theta>`.
pub fn ang_basis_matrix(dim: Dimension) -> CMatrix {
    let d = dim.size();
    let scale = 1.0 / (d as f64).sqrt();
    CMatrix::from_fn(d, d, |i, j| {
        let l = i as i64 - dim.max_mode() as i64;
        let theta = j as i64 - dim.max_mode() as i64;
        root_of_unity(-theta * l, d) * scale
    })
}

/// ANG eigenstate: `<l|theta> = exp(-2 pi i theta l / d) / sqrt(d)`.
pub fn ang_state(theta: AngleIndex, dim: Dimension) -> StateVector {
    let d = dim.size();
    let scale = 1.0 / (d as f64).sqrt();
    let amps = dim
        .labels()
        .map(|l| root_of_unity(-theta.value() * l, d) * scale)
        .collect();
    StateVector { dim, amps }
}

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Modified-wedge state: the wedge state truncated to `|l| <= N`.
/// Deliberately not unit norm.
pub fn mw_state(wedge: AngleIndex, dim: Dimension) -> StateVector {
    let d = dim.size();
    let prefactor = (2.0 * PI).sqrt() / d as f64;
    let amps = dim
        .labels()
        .map(|l| {
            root_of_unity(-wedge.value() * l, d) * (prefactor * sinc(l as f64 * PI / d as f64))
        })
        .collect();
    StateVector { dim, amps }
}

/// `(l pi / d) / sin(l pi / d)`, exactly 1 at `l = 0`.
pub fn inverse_sinc(l: ModeIndex, dim: Dimension) -> f64 {
    if l.value() == 0 {
        return 1.0;
    }
    let x = l.value() as f64 * PI / dim.size() as f64;
    x / x.sin()
}

/// Coefficient of `|MW Theta>` in the expansion of `|theta>`.
pub fn conversion_coefficient(theta: AngleIndex, wedge: AngleIndex, dim: Dimension) -> Complex64 {
    let d = dim.size();
    let sum: Complex64 = dim
        .labels()
        .map(|l| {
            let w = inverse_sinc(ModeIndex(l), dim);
            root_of_unity(l * (wedge.value() - theta.value()), d) * w
        })
        .sum();
    sum / (2.0 * PI * d as f64).sqrt()
}

/// Circulant table of [`conversion_coefficient`], rows indexed by ANG label
/// and columns by wedge label.
#[derive(Clone, Debug, PartialEq)]
pub struct ConversionMatrix {
    dim: Dimension,
    entries: CMatrix,
}

impl ConversionMatrix {
    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn entry(&self, theta: i64, wedge: i64) -> Complex64 {
        self.entries[(self.dim.angle_slot(theta), self.dim.angle_slot(wedge))]
    }
}

pub fn build_conversion_matrix(dim: Dimension) -> ConversionMatrix {
    let d = dim.size();
    // Circulant: one row determines the rest.
    let row: Vec<Complex64> = dim
        .labels()
        .map(|k| conversion_coefficient(dim.angle(0), dim.angle(k), dim))
        .collect();
    let entries = CMatrix::from_fn(d, d, |i, j| {
        let diff = dim.reduce(j as i64 - i as i64);
        row[dim.angle_slot(diff)]
    });
    ConversionMatrix { dim, entries }
}

/// Phase picked up by OAM component `l` under `exp(-2 pi i tau L / d)`.
pub fn rotation_phase(l: i64, tau: AngleIndex, dim: Dimension) -> Complex64 {
    root_of_unity(-tau.value() * l, dim.size())
}

/// Rotates a state by `tau` angular steps.
pub fn apply_rotation(state: &StateVector, tau: AngleIndex) -> StateVector {
    let dim = state.dim;
    let amps = dim
        .labels()
        .zip(&state.amps)
        .map(|(l, a)| a * rotation_phase(l, tau, dim))
        .collect();
    StateVector { dim, amps }
}

/// `<MW Theta| rho |MW Theta'>`, equal to the true wedge projection for
/// states confined to `|l| <= N`.
pub fn wedge_projection(
    rho: &DensityMatrix,
    wedge: AngleIndex,
    wedge_prime: AngleIndex,
) -> Result<Complex64> {
    if rho.basis != Basis::Oam {
        return Err(Error::BasisMismatch {
            expected: "OAM",
            found: rho.basis.name(),
        });
    }
    let bra = mw_state(wedge, rho.dim).to_dvector();
    let ket = mw_state(wedge_prime, rho.dim).to_dvector();
    Ok((bra.adjoint() * &rho.entries * ket)[(0, 0)])
}

/// All wedge projections as a WEDGE-tagged table.
pub fn wedge_projection_table(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let rho = rho.to_basis(Basis::Oam)?;
    let dim = rho.dim;
    let d = dim.size();
    let mw = CMatrix::from_columns(
        &dim.labels()
            .map(|k| mw_state(dim.angle(k), dim).to_dvector())
            .collect::<Vec<_>>(),
    );
    let entries = mw.adjoint() * rho.entries * &mw;
    debug_assert_eq!(entries.nrows(), d);
    Ok(DensityMatrix {
        dim,
        basis: Basis::Wedge,
        entries,
    })
}

/// Haar-random pure state.
pub fn random_pure_state<R: Rng + ?Sized>(dim: Dimension, rng: &mut R) -> StateVector {
    let amps: Vec<Complex64> = (0..dim.size())
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    StateVector { dim, amps }
        .normalized()
        .expect("gaussian vector is nonzero")
}

/// Full-rank random density matrix `G G^dagger / Tr` from a complex
/// Ginibre matrix, in the OAM basis.
pub fn random_density_matrix<R: Rng + ?Sized>(dim: Dimension, rng: &mut R) -> DensityMatrix {
    let d = dim.size();
    let g = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix {
        dim,
        basis: Basis::Oam,
        entries: m / Complex64::new(tr, 0.0),
    }
}
