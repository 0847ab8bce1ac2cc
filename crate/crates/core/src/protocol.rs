//! Forward model of the ancilla-pointer measurement.
//!
//! The polarization pointer starts in `|+> = (|H> + |V>)/sqrt 2`, the joint
//! state evolves under the polarization-sensitive rotation
//! `U(tau) = exp(-(2 pi i / d) tau L (x) sigma_z)`, and the beam is
//! post-selected on each angular wedge. The two output ports of the
//! polarization analyzer give the pointer's `sigma_x` or `sigma_y`
//! expectation per wedge, from which
//! `<Theta+tau| rho |Theta-tau> = (norm / 2) (sx + i sy)`.
//!
//! The evolved state is taken as `Lambda = U Omega U^dagger`: under this
//! orientation the H component is rotated by `+tau`, and the recovered
//! element carries the sign used by the reconstruction.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    mw_state, rotation_phase, AngleIndex, Basis, CMatrix, DensityMatrix, Dimension, StateVector,
};
use crate::ingest::PolarFrame;
use crate::par::{self, ExecMode};

/// Post-selected weights at or below this are treated as empty wedges.
pub const ZERO_WEIGHT: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Port {
    Plus,
    Minus,
}

impl Port {
    fn sign(self) -> f64 {
        match self {
            Port::Plus => 1.0,
            Port::Minus => -1.0,
        }
    }
}

/// Analyzer eigenvector selected by `port` for the given Pauli axis, in the
/// `{H, V}` basis.
pub fn analyzer_vector(axis: Axis, port: Port) -> [Complex64; 2] {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let v = match axis {
        Axis::X => Complex64::new(port.sign(), 0.0),
        Axis::Y => Complex64::new(0.0, port.sign()),
    };
    [h, v * std::f64::consts::FRAC_1_SQRT_2]
}

pub fn pauli_x() -> Matrix2<Complex64> {
    let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    Matrix2::new(z, o, o, z)
}

pub fn pauli_y() -> Matrix2<Complex64> {
    let (i, z) = (Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0));
    Matrix2::new(z, -i, i, z)
}

pub fn pauli_z() -> Matrix2<Complex64> {
    let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    Matrix2::new(o, z, z, -o)
}

/// Pointer density matrix over `{H, V}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AncillaState {
    matrix: Matrix2<Complex64>,
}

impl AncillaState {
    pub fn plus() -> Self {
        let h = Complex64::new(0.5, 0.0);
        AncillaState {
            matrix: Matrix2::new(h, h, h, h),
        }
    }

    pub fn horizontal() -> Self {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        AncillaState {
            matrix: Matrix2::new(o, z, z, z),
        }
    }

    pub fn vertical() -> Self {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        AncillaState {
            matrix: Matrix2::new(z, z, z, o),
        }
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.matrix
    }

    pub fn expectation(&self, op: &Matrix2<Complex64>) -> f64 {
        (op * self.matrix).trace().re
    }
}

/// Joint angular (x) pointer state, angular-major: row `2 i + a` holds OAM
/// slot `i` and pointer component `a` (0 = H, 1 = V).
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    dim: Dimension,
    entries: CMatrix,
}

impl JointState {
    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Partial trace over the angular factor.
    pub fn ancilla_reduced(&self) -> Matrix2<Complex64> {
        let d = self.dim.size();
        Matrix2::from_fn(|a, b| (0..d).map(|i| self.entries[(2 * i + a, 2 * i + b)]).sum())
    }

    /// Partial trace over the pointer, in the OAM basis.
    pub fn angular_reduced(&self) -> DensityMatrix {
        let d = self.dim.size();
        let m = CMatrix::from_fn(d, d, |i, j| {
            self.entries[(2 * i, 2 * j)] + self.entries[(2 * i + 1, 2 * j + 1)]
        });
        DensityMatrix::new(self.dim, Basis::Oam, m).expect("square block")
    }

    /// Angular block conditioned on pointer components `(a, b)`.
    pub fn angular_block(&self, a: usize, b: usize) -> CMatrix {
        let d = self.dim.size();
        CMatrix::from_fn(d, d, |i, j| self.entries[(2 * i + a, 2 * j + b)])
    }

    /// Unnormalized pointer matrix `(<s| (x) 1) Lambda (|s> (x) 1)`.
    pub fn postselect(&self, s: &StateVector) -> Matrix2<Complex64> {
        let amps = s.amplitudes();
        let d = self.dim.size();
        Matrix2::from_fn(|a, b| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..d {
                let si = amps[i].conj();
                if si == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (j, aj) in amps.iter().enumerate() {
                    acc += si * self.entries[(2 * i + a, 2 * j + b)] * aj;
                }
            }
            acc
        })
    }
}

fn require_oam(rho: &DensityMatrix) -> Result<DensityMatrix> {
    rho.to_basis(Basis::Oam)
}

/// `Omega = rho (x) |+><+|`.
pub fn prepare_joint(rho: &DensityMatrix) -> Result<JointState> {
    let rho = require_oam(rho)?;
    rho.validate_physical()?;
    let dim = rho.dim();
    let d = dim.size();
    let plus = AncillaState::plus();
    let entries = CMatrix::from_fn(2 * d, 2 * d, |r, c| {
        rho.entries()[(r / 2, c / 2)] * plus.matrix()[(r % 2, c % 2)]
    });
    Ok(JointState { dim, entries })
}

/// `U(tau) Omega U(tau)^dagger`; `U` is diagonal in the OAM (x) {H, V}
/// basis with phase `exp(-2 pi i tau l / d)` on H and the conjugate on V.
pub fn evolve(omega: &JointState, tau: AngleIndex) -> JointState {
    let dim = omega.dim;
    let d = dim.size();
    let phases: Vec<Complex64> = (0..2 * d)
        .map(|r| {
            let l = (r / 2) as i64 - dim.max_mode() as i64;
            let p = rotation_phase(l, tau, dim);
            if r % 2 == 0 {
                p
            } else {
                p.conj()
            }
        })
        .collect();
    let entries = CMatrix::from_fn(2 * d, 2 * d, |r, c| {
        phases[r] * omega.entries[(r, c)] * phases[c].conj()
    });
    JointState { dim, entries }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliExpectation {
    pub sx: f64,
    pub sy: f64,
    /// Normalization with `<Theta+|rho|Theta-> = (norm/2)(sx + i sy)`:
    /// twice the post-selected trace.
    pub norm: f64,
}

impl PauliExpectation {
    pub fn element(&self) -> Complex64 {
        Complex64::new(self.sx, self.sy) * (self.norm / 2.0)
    }
}

/// Pointer expectations after post-selecting wedge `wedge`, computed on the
/// full joint state.
pub fn pauli_expectations(
    rho: &DensityMatrix,
    wedge: AngleIndex,
    tau: AngleIndex,
) -> Result<PauliExpectation> {
    let omega = prepare_joint(rho)?;
    let lambda = evolve(&omega, tau);
    pointer_expectation(&lambda, wedge, tau)
}

fn pointer_expectation(
    lambda: &JointState,
    wedge: AngleIndex,
    tau: AngleIndex,
) -> Result<PauliExpectation> {
    let m = lambda.postselect(&mw_state(wedge, lambda.dim));
    let weight = m.trace().re;
    if weight <= ZERO_WEIGHT {
        return Err(Error::ZeroWeightWedge {
            wedge: wedge.value(),
            tau: tau.value(),
        });
    }
    let sx = (pauli_x() * m).trace().re / weight;
    let sy = (pauli_y() * m).trace().re / weight;
    Ok(PauliExpectation {
        sx,
        sy,
        norm: 2.0 * weight,
    })
}

/// One `(tau, axis)` configuration of rotation offset and analyzer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeasurementSetting {
    pub tau: AngleIndex,
    pub axis: Axis,
}

impl MeasurementSetting {
    /// `tau` must lie in `[0, N]`.
    pub fn new(tau: i64, axis: Axis, dim: Dimension) -> Result<Self> {
        if tau < 0 || tau > dim.max_mode() as i64 {
            return Err(Error::Range(format!(
                "rotation offset tau = {tau} outside [0, {}]",
                dim.max_mode()
            )));
        }
        Ok(MeasurementSetting {
            tau: dim.angle(tau),
            axis,
        })
    }
}

/// Minimal covering plan: `(0, X)` plus `(tau, X)`, `(tau, Y)` for
/// `tau = 1..=N`. Exactly `d` settings.
pub fn measurement_plan(dim: Dimension) -> Vec<MeasurementSetting> {
    let mut plan = Vec::with_capacity(dim.size());
    for tau in 0..=dim.max_mode() as i64 {
        plan.push(MeasurementSetting {
            tau: dim.angle(tau),
            axis: Axis::X,
        });
        if tau > 0 {
            plan.push(MeasurementSetting {
                tau: dim.angle(tau),
                axis: Axis::Y,
            });
        }
    }
    plan
}

/// [`measurement_plan`] with the `(0, Y)` null test added.
pub fn measurement_plan_with_null(dim: Dimension) -> Vec<MeasurementSetting> {
    let mut plan = measurement_plan(dim);
    plan.insert(
        1,
        MeasurementSetting {
            tau: dim.angle(0),
            axis: Axis::Y,
        },
    );
    plan
}

/// Relative intensities in the two analyzer ports, per wedge `-N..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct PortProbabilities {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl PortProbabilities {
    /// `(p+ - p-)/(p+ + p-)` per wedge; `None` for empty wedges.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.plus
            .iter()
            .zip(&self.minus)
            .map(|(p, m)| {
                let t = p + m;
                (t > ZERO_WEIGHT).then(|| (p - m) / t)
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.plus.iter().sum::<f64>() + self.minus.iter().sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> Self {
        PortProbabilities {
            plus: self.plus.iter().map(|p| p * s).collect(),
            minus: self.minus.iter().map(|p| p * s).collect(),
        }
    }
}

/// Port intensities per wedge, normalized so the whole setting sums to 1.
pub fn port_probabilities(
    rho: &DensityMatrix,
    setting: MeasurementSetting,
) -> Result<PortProbabilities> {
    let omega = prepare_joint(rho)?;
    let lambda = evolve(&omega, setting.tau);
    let dim = rho.dim();
    let plus_v = analyzer_vector(setting.axis, Port::Plus);
    let minus_v = analyzer_vector(setting.axis, Port::Minus);
    let project = |m: &Matrix2<Complex64>, v: &[Complex64; 2]| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..2 {
            for b in 0..2 {
                acc += v[a].conj() * m[(a, b)] * v[b];
            }
        }
        acc.re.max(0.0)
    };
    let mut plus = Vec::with_capacity(dim.size());
    let mut minus = Vec::with_capacity(dim.size());
    for w in dim.labels() {
        let m = lambda.postselect(&mw_state(dim.angle(w), dim));
        plus.push(project(&m, &plus_v));
        minus.push(project(&m, &minus_v));
    }
    let probs = PortProbabilities { plus, minus };
    let total = probs.total();
    if total <= 0.0 {
        return Ok(probs);
    }
    Ok(probs.scaled(1.0 / total))
}

/// Vector `|e>` with unnormalized port weight `<e| rho |e>` for one
/// `(setting, wedge, port)` outcome: `(v_H |MW Theta-tau> + v_V |MW Theta+tau>)/sqrt 2`.
pub fn outcome_vector(
    dim: Dimension,
    setting: MeasurementSetting,
    wedge: AngleIndex,
    port: Port,
) -> StateVector {
    let v = analyzer_vector(setting.axis, port);
    let tau = setting.tau.value();
    let h = mw_state(wedge.shifted(-tau, dim), dim).scaled(v[0]);
    let vv = mw_state(wedge.shifted(tau, dim), dim).scaled(v[1]);
    h.add(&vv)
        .scaled(Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0))
}

/// Counts for one setting: `plus`/`minus` per wedge `-N..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub setting: MeasurementSetting,
    pub plus_counts: Vec<f64>,
    pub minus_counts: Vec<f64>,
    pub photon_budget: f64,
    /// `None` for a noiseless record (counts equal their means).
    pub seed: Option<u64>,
}

/// Poisson shot noise on each `(wedge, port)` bin with mean
/// `photon_budget * p`.
pub fn sample_counts(
    probs: &PortProbabilities,
    setting: MeasurementSetting,
    photon_budget: f64,
    seed: Option<u64>,
) -> MeasurementRecord {
    let means = probs.scaled(photon_budget);
    let (plus_counts, minus_counts) = match seed {
        None => (means.plus, means.minus),
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut draw = |mean: f64| -> f64 {
                if mean > 0.0 {
                    Poisson::new(mean)
                        .map(|p| p.sample(&mut rng))
                        .unwrap_or(mean)
                } else {
                    0.0
                }
            };
            let plus: Vec<f64> = means.plus.iter().map(|&m| draw(m)).collect();
            let minus: Vec<f64> = means.minus.iter().map(|&m| draw(m)).collect();
            (plus, minus)
        }
    };
    MeasurementRecord {
        setting,
        plus_counts,
        minus_counts,
        photon_budget,
        seed,
    }
}

/// SplitMix64 finalizer over `(base, index)`; gives each setting of a
/// campaign its own stream regardless of evaluation order.
pub fn derive_setting_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A full set of records for one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Campaign {
    pub dim: Dimension,
    pub seed: Option<u64>,
    pub photons: f64,
    pub records: Vec<MeasurementRecord>,
}

impl Campaign {
    pub fn plan(&self) -> Vec<MeasurementSetting> {
        self.records.iter().map(|r| r.setting).collect()
    }
}

pub fn simulate_campaign(
    rho: &DensityMatrix,
    plan: &[MeasurementSetting],
    photons: f64,
    seed: Option<u64>,
    mode: ExecMode,
) -> Result<Campaign> {
    if photons < 0.0 || !photons.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "photon budget {photons} must be >= 0"
        )));
    }
    let rho = require_oam(rho)?;
    rho.validate_physical()?;
    let indexed: Vec<(usize, MeasurementSetting)> = plan.iter().copied().enumerate().collect();
    let records = par::map_slice(&indexed, mode, |&(i, setting)| {
        let probs = port_probabilities(&rho, setting)?;
        let s = seed.map(|b| derive_setting_seed(b, i as u64));
        Ok(sample_counts(&probs, setting, photons, s))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Campaign {
        dim: rho.dim(),
        seed,
        photons,
        records,
    })
}

/// Continuous-angle camera profile of one analyzer port.
///
/// Each ensemble member contributes `w |f(phi - beta) + g f(phi + beta)|^2 / 2`
/// with `f(phi) = sum_l c_l e^{i l phi} / sqrt(2 pi)`, `beta = 2 pi tau / d`
/// and `g` the analyzer's V/H weight (conjugated). Members add in intensity.
pub fn synth_polar_frame(
    ensemble: &[(f64, StateVector)],
    setting: MeasurementSetting,
    port: Port,
    samples: usize,
) -> Result<PolarFrame> {
    synth_polar_frame_with(ensemble, setting, port, samples, ExecMode::default())
}

pub fn synth_polar_frame_with(
    ensemble: &[(f64, StateVector)],
    setting: MeasurementSetting,
    port: Port,
    samples: usize,
    mode: ExecMode,
) -> Result<PolarFrame> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let dim = first.1.dim();
    let wsum: f64 = ensemble.iter().map(|(w, _)| w).sum();
    if (wsum - 1.0).abs() > 1e-9 || ensemble.iter().any(|(w, _)| *w < 0.0) {
        return Err(Error::UnnormalizedEnsemble(wsum));
    }
    if samples < 8 * dim.size() {
        return Err(Error::InvalidArgument(format!(
            "need at least 8d = {} angular samples, got {samples}",
            8 * dim.size()
        )));
    }
    let v = analyzer_vector(setting.axis, port);
    let g = v[1].conj() / v[0].conj();
    let beta = setting.tau.radians(dim);
    let norm = 1.0 / (2.0 * PI).sqrt();
    let field = |state: &StateVector, phi: f64| -> Complex64 {
        dim.labels()
            .zip(state.amplitudes())
            .map(|(l, c)| c * Complex64::from_polar(norm, l as f64 * phi))
            .sum()
    };
    let points = par::map_range(samples, mode, |k| {
        let phi = 2.0 * PI * k as f64 / samples as f64;
        let intensity: f64 = ensemble
            .iter()
            .map(|(w, s)| w * (field(s, phi - beta) + g * field(s, phi + beta)).norm_sqr() / 2.0)
            .sum();
        (phi, intensity)
    });
    PolarFrame::new(points)
}
