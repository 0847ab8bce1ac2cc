//! Reconstruction: measurement records -> wedge projections -> ANG density
//! matrix -> physical state -> Wigner grid -> OAM density matrix.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    build_conversion_matrix, root_of_unity, Basis, CMatrix, ConversionMatrix, DensityMatrix,
    Dimension, StateVector,
};
use crate::par::{self, ExecMode};
use crate::protocol::{
    outcome_vector, simulate_campaign, Axis, MeasurementRecord, MeasurementSetting, Port,
};

/// Which bra/ket order the phase-space kernel uses.
///
/// `MarginalCorrected` evaluates `<theta+phi| rho |theta-phi>` and gives
/// `sum_theta W(theta, l) = <l|rho|l>`. `AsPrinted` evaluates
/// `<theta-phi| rho |theta+phi>`, whose OAM marginal comes out reflected
/// (`l -> -l`). Only the former is used by the pipeline; the latter exists
/// for diagnostics and the self-test mutation check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelOrientation {
    #[default]
    MarginalCorrected,
    AsPrinted,
}

/// `W(theta, l)` on the `d x d` grid; rows are angles, columns OAM values.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    dim: Dimension,
    values: Vec<f64>,
}

impl WignerGrid {
    /// `values` row-major, rows `theta = -N..=N`, columns `l = -N..=N`.
    pub fn new(dim: Dimension, values: Vec<f64>) -> Result<Self> {
        let d = dim.size();
        if values.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "Wigner grid has non-finite values".into(),
            ));
        }
        Ok(WignerGrid { dim, values })
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, theta: i64, l: i64) -> f64 {
        let d = self.dim.size();
        self.values[self.dim.angle_slot(theta) * d + self.dim.angle_slot(l)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum of the magnitudes of all negative cells.
    pub fn negativity_volume(&self) -> f64 {
        self.values.iter().map(|v| (-v).max(0.0)).sum()
    }

    pub fn max_abs_diff(&self, other: &WignerGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Wedge-basis table assembled from records.
#[derive(Clone, Debug)]
pub struct WedgeEstimate {
    pub matrix: DensityMatrix,
    /// `(Theta, Theta')` pairs whose wedge was empty; imputed as 0.
    pub unmeasured: Vec<(i64, i64)>,
}

/// Per-record port fractions, `counts / total counts of the record`.
struct Fractions {
    plus: Vec<f64>,
    minus: Vec<f64>,
}

fn fractions(plus: &[f64], minus: &[f64]) -> Fractions {
    let total: f64 = plus.iter().sum::<f64>() + minus.iter().sum::<f64>();
    let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
    Fractions {
        plus: plus.iter().map(|c| c * scale).collect(),
        minus: minus.iter().map(|c| c * scale).collect(),
    }
}

/// Summed `(plus, minus)` counts keyed by `(tau, axis)`.
type GroupedCounts = BTreeMap<(i64, Axis), (Vec<f64>, Vec<f64>)>;

/// Sums repeated records of the same setting and checks plan coverage.
fn group_records(records: &[MeasurementRecord], dim: Dimension) -> Result<GroupedCounts> {
    let d = dim.size();
    let mut grouped = GroupedCounts::new();
    for r in records {
        if r.plus_counts.len() != d || r.minus_counts.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.plus_counts.len().max(r.minus_counts.len()),
            });
        }
        if r.plus_counts
            .iter()
            .chain(&r.minus_counts)
            .any(|c| *c < 0.0 || !c.is_finite())
        {
            return Err(Error::InvalidArgument(
                "counts must be finite and non-negative".into(),
            ));
        }
        let tau = r.setting.tau.value();
        if tau < 0 {
            return Err(Error::Range(format!(
                "rotation offset {tau} outside [0, N]"
            )));
        }
        let entry = grouped
            .entry((tau, r.setting.axis))
            .or_insert_with(|| (vec![0.0; d], vec![0.0; d]));
        for (a, c) in entry.0.iter_mut().zip(&r.plus_counts) {
            *a += c;
        }
        for (a, c) in entry.1.iter_mut().zip(&r.minus_counts) {
            *a += c;
        }
    }
    for tau in 0..=dim.max_mode() as i64 {
        let axes: &[Axis] = if tau == 0 {
            &[Axis::X]
        } else {
            &[Axis::X, Axis::Y]
        };
        for &axis in axes {
            if !grouped.contains_key(&(tau, axis)) {
                return Err(Error::MissingSetting { tau, axis });
            }
        }
    }
    Ok(grouped)
}

/// Inverts the pointer expectations into wedge projections
/// `<Theta+tau| rho |Theta-tau> = (norm/2)(sx + i sy)`, completes the
/// Hermitian partner, and rescales so the ANG image has unit trace.
pub fn wedge_matrix_from_records(
    records: &[MeasurementRecord],
    dim: Dimension,
) -> Result<WedgeEstimate> {
    dim.require_tomography()?;
    let grouped = group_records(records, dim)?;
    let d = dim.size();
    let mut m = CMatrix::zeros(d, d);
    let mut unmeasured = Vec::new();

    for tau in 0..=dim.max_mode() as i64 {
        let x = grouped
            .get(&(tau, Axis::X))
            .map(|(p, q)| fractions(p, q))
            .expect("checked");
        let y = grouped.get(&(tau, Axis::Y)).map(|(p, q)| fractions(p, q));
        for (k, w) in dim.labels().enumerate() {
            let a = dim.reduce(w + tau);
            let b = dim.reduce(w - tau);
            let nx = x.plus[k] + x.minus[k];
            let ny = y.as_ref().map(|y| y.plus[k] + y.minus[k]);
            let value = match (tau, ny) {
                (0, ny) => {
                    if nx <= 0.0 {
                        None
                    } else {
                        let sx = (x.plus[k] - x.minus[k]) / nx;
                        let norm = match ny {
                            Some(ny) if ny > 0.0 => 0.5 * (nx + ny),
                            _ => nx,
                        };
                        Some(Complex64::new(norm / 2.0 * sx, 0.0))
                    }
                }
                (_, Some(ny)) if nx > 0.0 && ny > 0.0 => {
                    let y = y.as_ref().expect("present");
                    let sx = (x.plus[k] - x.minus[k]) / nx;
                    let sy = (y.plus[k] - y.minus[k]) / ny;
                    let norm = 0.5 * (nx + ny);
                    Some(Complex64::new(sx, sy) * (norm / 2.0))
                }
                _ => None,
            };
            let (ia, ib) = (dim.angle_slot(a), dim.angle_slot(b));
            match value {
                Some(v) => {
                    m[(ia, ib)] = v;
                    m[(ib, ia)] = v.conj();
                }
                None => {
                    unmeasured.push((a, b));
                    m[(ia, ib)] = Complex64::new(0.0, 0.0);
                    m[(ib, ia)] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    let raw = DensityMatrix::new(dim, Basis::Wedge, m)?;
    let c = build_conversion_matrix(dim);
    let tr = ang_from_wedge(&raw, &c)?.trace().re;
    if tr.is_nan() || tr <= 0.0 {
        return Err(Error::NotPhysical("records carry no intensity".into()));
    }
    Ok(WedgeEstimate {
        matrix: raw.scaled(1.0 / tr),
        unmeasured,
    })
}

/// ANG-basis matrix from wedge projections:
/// `<theta+| rho |theta-> = sum conj(C(theta+, Theta)) C(theta-, Theta') <Theta| rho |Theta'>`.
pub fn ang_from_wedge(wedge: &DensityMatrix, c: &ConversionMatrix) -> Result<DensityMatrix> {
    if wedge.basis() != Basis::Wedge {
        return Err(Error::BasisMismatch {
            expected: "WEDGE",
            found: wedge.basis().name(),
        });
    }
    if wedge.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim().size(),
            found: wedge.dim().size(),
        });
    }
    let cm = c.entries();
    let entries = cm.map(|z| z.conj()) * wedge.entries() * cm.transpose();
    DensityMatrix::new(wedge.dim(), Basis::Ang, entries)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalityMethod {
    #[default]
    NearestPsd,
    IterativeMle,
}

/// Projects a Hermitian estimate onto the physical states.
pub fn restore_physicality(
    raw: &DensityMatrix,
    method: PhysicalityMethod,
    records: Option<&[MeasurementRecord]>,
) -> Result<DensityMatrix> {
    match method {
        PhysicalityMethod::NearestPsd => nearest_psd(raw),
        PhysicalityMethod::IterativeMle => {
            let records = records.ok_or(Error::MleRequiresRecords)?;
            Ok(iterative_mle(raw, records, &MleOptions::default())?.state)
        }
    }
}

/// Redistributes eigenvalue mass onto the probability simplex: shift to unit
/// trace, then repeatedly zero the negatives and remove their accumulated
/// deficit evenly from the remaining positive eigenvalues.
pub fn project_spectrum(eigenvalues: &[f64]) -> Vec<f64> {
    let n = eigenvalues.len();
    if n == 0 {
        return Vec::new();
    }
    let shift = (1.0 - eigenvalues.iter().sum::<f64>()) / n as f64;
    let mut ev: Vec<f64> = eigenvalues.iter().map(|v| v + shift).collect();
    loop {
        let deficit: f64 = ev.iter().filter(|v| **v < 0.0).sum();
        if deficit == 0.0 {
            break;
        }
        let positive = ev.iter().filter(|v| **v > 0.0).count();
        if positive == 0 {
            ev.iter_mut().for_each(|v| *v = 1.0 / n as f64);
            break;
        }
        let share = deficit / positive as f64;
        for v in ev.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            } else if *v > 0.0 {
                *v += share;
            }
        }
    }
    ev
}

pub fn nearest_psd(raw: &DensityMatrix) -> Result<DensityMatrix> {
    if raw.basis() == Basis::Wedge {
        return Err(Error::BasisMismatch {
            expected: "OAM or ANG",
            found: "WEDGE",
        });
    }
    raw.require_hermitian(1e-8)?;
    let herm = raw.hermitian_part();
    let eig = herm.clone().symmetric_eigen();
    let tr = raw.trace().re;
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) && (tr - 1.0).abs() <= 1e-12 {
        return DensityMatrix::new(raw.dim(), raw.basis(), herm);
    }
    let projected = project_spectrum(eig.eigenvalues.as_slice());
    let v = &eig.eigenvectors;
    let diag = CMatrix::from_diagonal(&DVector::from_iterator(
        projected.len(),
        projected.iter().map(|x| Complex64::new(*x, 0.0)),
    ));
    let m = v * diag * v.adjoint();
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    DensityMatrix::new(raw.dim(), raw.basis(), m)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step raises the per-photon log-likelihood by
    /// less than this.
    pub tolerance: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iterations: 5000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MleOutcome {
    /// Physical state in the basis of the raw input.
    pub state: DensityMatrix,
    /// Per-photon log-likelihood after each accepted iteration, starting with
    /// the initial point.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn hermitian_power(m: &CMatrix, power: f64) -> CMatrix {
    let eig = m.clone().symmetric_eigen();
    let diag = CMatrix::from_diagonal(&DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|v| Complex64::new(v.max(0.0).powf(power), 0.0)),
    ));
    &eig.eigenvectors * diag * eig.eigenvectors.adjoint()
}

/// Diluted `R rho R` ascent on the Poisson likelihood of the records.
///
/// All settings share the same total outcome operator `G`, so with the
/// common photon flux profiled out the likelihood is that of the
/// normalized state `G^{1/2} rho G^{1/2} / Tr` under per-setting POVMs.
/// Steps are accepted only when the log-likelihood does not decrease.
pub fn iterative_mle(
    raw: &DensityMatrix,
    records: &[MeasurementRecord],
    opts: &MleOptions,
) -> Result<MleOutcome> {
    let dim = raw.dim();
    let d = dim.size();
    if records.is_empty() {
        return Err(Error::MleRequiresRecords);
    }

    let mut outcomes: Vec<(DVector<Complex64>, f64)> = Vec::new();
    for r in records {
        if r.plus_counts.len() != d || r.minus_counts.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.plus_counts.len(),
            });
        }
        for (port, counts) in [(Port::Plus, &r.plus_counts), (Port::Minus, &r.minus_counts)] {
            for (k, w) in dim.labels().enumerate() {
                let e = outcome_vector(dim, r.setting, dim.angle(w), port).to_dvector();
                if e.norm_squared() > 1e-14 {
                    outcomes.push((e, counts[k]));
                }
            }
        }
    }
    let total: f64 = outcomes.iter().map(|(_, n)| n).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidArgument("records contain no counts".into()));
    }

    let reference = MeasurementSetting {
        tau: dim.angle(0),
        axis: Axis::X,
    };
    let mut g = CMatrix::zeros(d, d);
    for port in [Port::Plus, Port::Minus] {
        for w in dim.labels() {
            let e = outcome_vector(dim, reference, dim.angle(w), port).to_dvector();
            g += &e * e.adjoint();
        }
    }
    let g_half = hermitian_power(&g, 0.5);
    let g_inv_half = hermitian_power(&g, -0.5);
    let weighted: Vec<(DVector<Complex64>, f64)> = outcomes
        .into_iter()
        .map(|(e, n)| (&g_inv_half * e, n / total))
        .collect();

    let probabilities = |sigma: &CMatrix| -> Vec<f64> {
        weighted
            .iter()
            .map(|(e, _)| (e.adjoint() * sigma * e)[(0, 0)].re)
            .collect()
    };
    let log_likelihood = |p: &[f64]| -> f64 {
        weighted
            .iter()
            .zip(p)
            .filter(|((_, f), _)| *f > 0.0)
            .map(|((_, f), p)| {
                if *p > 0.0 {
                    f * p.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum()
    };

    let start = nearest_psd(&raw.to_basis(Basis::Oam)?)?;
    let mixed = DensityMatrix::maximally_mixed(dim, Basis::Oam);
    let start = DensityMatrix::mixture(&[(0.9, start), (0.1, mixed)])?;
    let mut sigma = &g_half * start.entries() * &g_half;
    sigma /= sigma.trace();

    let mut p = probabilities(&sigma);
    let mut ll = log_likelihood(&p);
    let mut history = vec![ll];
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let identity = CMatrix::identity(d, d);

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut r = CMatrix::zeros(d, d);
        for ((e, f), pk) in weighted.iter().zip(&p) {
            if *f > 0.0 && *pk > 0.0 {
                r += e * e.adjoint() * Complex64::new(f / pk, 0.0);
            }
        }
        let mut accepted = None;
        while step > 1e-12 {
            let a = &identity + &r * Complex64::new(step, 0.0);
            let mut candidate = &a * &sigma * a.adjoint();
            candidate = (&candidate + candidate.adjoint()) * Complex64::new(0.5, 0.0);
            candidate /= candidate.trace();
            let cp = probabilities(&candidate);
            let cll = log_likelihood(&cp);
            if cll >= ll {
                accepted = Some((candidate, cp, cll));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, cp, cll)) = accepted else {
            converged = true;
            break;
        };
        let gain = cll - ll;
        sigma = candidate;
        p = cp;
        ll = cll;
        history.push(ll);
        step = (step * 2.0).min(1e6);
        if gain < opts.tolerance {
            converged = true;
            break;
        }
    }

    let mut rho = &g_inv_half * &sigma * &g_inv_half;
    rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    rho /= rho.trace();
    let state = DensityMatrix::new(dim, Basis::Oam, rho)?.to_basis(raw.basis())?;
    Ok(MleOutcome {
        state,
        log_likelihood: history,
        iterations,
        converged,
    })
}

/// Discrete Wigner grid with the marginal-correct kernel orientation.
pub fn wigner_from_ang(rho: &DensityMatrix) -> Result<WignerGrid> {
    wigner_with_orientation(rho, KernelOrientation::MarginalCorrected)
}

/// `W(theta, l) = (1/d) sum_phi exp(-4 pi i l phi / d) K(theta, phi)` with
/// `K = <theta+phi|rho|theta-phi>` or its transpose per `orientation`.
pub fn wigner_with_orientation(
    rho: &DensityMatrix,
    orientation: KernelOrientation,
) -> Result<WignerGrid> {
    rho.require_hermitian(1e-8)?;
    let ang = rho.to_basis(Basis::Ang)?;
    let dim = ang.dim();
    let d = dim.size();
    let mut values = Vec::with_capacity(d * d);
    for theta in dim.labels() {
        for l in dim.labels() {
            let sum: Complex64 = dim
                .labels()
                .map(|phi| {
                    let k = match orientation {
                        KernelOrientation::MarginalCorrected => ang.entry(theta + phi, theta - phi),
                        KernelOrientation::AsPrinted => ang.entry(theta - phi, theta + phi),
                    };
                    root_of_unity(-2 * l * phi, d) * k
                })
                .sum();
            values.push(sum.re / d as f64);
        }
    }
    WignerGrid::new(dim, values)
}

/// `(p_ang, p_oam)`: row sums and column sums of the grid.
pub fn marginals(w: &WignerGrid) -> (Vec<f64>, Vec<f64>) {
    let d = w.dim.size();
    let p_ang = (0..d)
        .map(|i| w.values[i * d..(i + 1) * d].iter().sum())
        .collect();
    let p_oam = (0..d)
        .map(|j| (0..d).map(|i| w.values[i * d + j]).sum())
        .collect();
    (p_ang, p_oam)
}

/// Inverse of [`wigner_from_ang`], returned in the OAM basis.
pub fn oam_from_wigner(w: &WignerGrid) -> DensityMatrix {
    oam_from_wigner_with(w, KernelOrientation::MarginalCorrected)
}

pub fn oam_from_wigner_with(w: &WignerGrid, orientation: KernelOrientation) -> DensityMatrix {
    let dim = w.dim;
    let d = dim.size();
    // 2 is invertible modulo odd d: 2 (N + 1) = d + 1.
    let half = dim.max_mode() as i64 + 1;
    let ang = CMatrix::from_fn(d, d, |i, j| {
        let a = i as i64 - dim.max_mode() as i64;
        let b = j as i64 - dim.max_mode() as i64;
        let theta = dim.reduce((a + b) * half);
        let phi = match orientation {
            KernelOrientation::MarginalCorrected => dim.reduce((a - b) * half),
            KernelOrientation::AsPrinted => dim.reduce((b - a) * half),
        };
        dim.labels()
            .map(|l| root_of_unity(2 * l * phi, d) * w.get(theta, l))
            .sum()
    });
    DensityMatrix::new(dim, Basis::Ang, ang)
        .and_then(|m| m.to_basis(Basis::Oam))
        .expect("square ANG matrix converts")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub fidelity: Option<f64>,
    pub degree_of_coherence: f64,
    pub coherence_pair: (i64, i64),
    pub purity: f64,
    pub negativity_volume: f64,
    pub kernel_orientation: KernelOrientation,
}

pub fn quality_report(
    rho: &DensityMatrix,
    w: &WignerGrid,
    target: Option<&StateVector>,
    coherence_pair: (i64, i64),
) -> Result<QualityReport> {
    let rho = rho.to_basis(Basis::Oam)?;
    let dim = rho.dim();
    let (la, lb) = coherence_pair;
    let (ia, ib) = (dim.mode_slot(la)?, dim.mode_slot(lb)?);
    let m = rho.entries();
    let (daa, dbb) = (m[(ia, ia)].re, m[(ib, ib)].re);
    let degree_of_coherence = if daa < 1e-12 || dbb < 1e-12 {
        0.0
    } else {
        m[(ia, ib)].norm() / (daa * dbb).sqrt()
    };
    let fidelity = match target {
        Some(t) => {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim.size(),
                    found: t.dim().size(),
                });
            }
            let v = t.to_dvector();
            Some((v.adjoint() * m * &v)[(0, 0)].re)
        }
        None => None,
    };
    Ok(QualityReport {
        fidelity,
        degree_of_coherence,
        coherence_pair,
        purity: rho.purity(),
        negativity_volume: w.negativity_volume(),
        kernel_orientation: KernelOrientation::MarginalCorrected,
    })
}

/// Every intermediate of one reconstruction run.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub wedge: DensityMatrix,
    pub ang_raw: DensityMatrix,
    pub ang: DensityMatrix,
    pub wigner: WignerGrid,
    pub oam: DensityMatrix,
    pub warnings: Vec<String>,
}

pub fn reconstruct(
    records: &[MeasurementRecord],
    dim: Dimension,
    method: PhysicalityMethod,
) -> Result<Reconstruction> {
    let estimate = wedge_matrix_from_records(records, dim)?;
    let mut warnings: Vec<String> = estimate
        .unmeasured
        .iter()
        .map(|(a, b)| format!("wedge element ({a}, {b}) unmeasured (zero counts); imputed as 0"))
        .collect();
    let c = build_conversion_matrix(dim);
    let ang_raw = ang_from_wedge(&estimate.matrix, &c)?;
    let ang = restore_physicality(&ang_raw, method, Some(records))?;
    let min_raw = ang_raw.eigenvalues()[0];
    if min_raw < -1e-9 {
        warnings.push(format!(
            "raw estimate had negative eigenvalue {min_raw:.3e}; projected"
        ));
    }
    let wigner = wigner_from_ang(&ang)?;
    let oam = oam_from_wigner(&wigner);
    Ok(Reconstruction {
        wedge: estimate.matrix,
        ang_raw,
        ang,
        wigner,
        oam,
        warnings,
    })
}

/// Independent noisy campaigns for each seed, reconstructed in parallel
/// across seeds (each campaign itself runs sequentially).
pub fn reconstruct_seeds(
    rho: &DensityMatrix,
    plan: &[MeasurementSetting],
    photons: f64,
    seeds: &[u64],
    method: PhysicalityMethod,
    mode: ExecMode,
) -> Result<Vec<Reconstruction>> {
    par::map_slice(seeds, mode, |&seed| {
        let camp = simulate_campaign(rho, plan, photons, Some(seed), ExecMode::Sequential)?;
        reconstruct(&camp.records, camp.dim, method)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{
        ang_state, random_density_matrix, random_pure_state, wedge_projection_table, ModeIndex,
    };
    use crate::par::ExecMode;
    use crate::protocol::{measurement_plan, simulate_campaign};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn d7() -> Dimension {
        Dimension::from_size(7).unwrap()
    }

    fn eigen(l: i64, dim: Dimension) -> StateVector {
        StateVector::oam_eigenstate(ModeIndex::new(l, dim).unwrap(), dim)
    }

    fn superposition(dim: Dimension) -> StateVector {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        StateVector::from_components(dim, &[(1, h), (-1, h)]).unwrap()
    }

    /// Brute-force Wigner evaluation straight from ANG state vectors.
    fn brute_wigner(rho: &DensityMatrix, theta: i64, l: i64) -> f64 {
        let dim = rho.dim();
        let d = dim.size() as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for phi in dim.labels() {
            let bra = ang_state(dim.angle(theta + phi), dim).to_dvector();
            let ket = ang_state(dim.angle(theta - phi), dim).to_dvector();
            let el = (bra.adjoint() * rho.entries() * ket)[(0, 0)];
            acc += Complex64::from_polar(1.0, -4.0 * PI * (l * phi) as f64 / d) * el;
        }
        acc.re / d
    }

    #[test]
    fn wedge_matrix_matches_projection_table() {
        let dim = d7();
        let rho = eigen(1, dim).projector();
        let campaign = simulate_campaign(
            &rho,
            &measurement_plan(dim),
            1.0,
            None,
            ExecMode::Sequential,
        )
        .unwrap();
        let est = wedge_matrix_from_records(&campaign.records, dim).unwrap();
        assert!(est.unmeasured.is_empty());
        let want = wedge_projection_table(&rho).unwrap();
        assert!(est.matrix.max_abs_diff(&want) < 1e-10);
        assert!(est.matrix.hermitian_deviation() == 0.0);
    }

    #[test]
    fn missing_setting_is_reported() {
        let dim = d7();
        let rho = eigen(1, dim).projector();
        let mut campaign = simulate_campaign(
            &rho,
            &measurement_plan(dim),
            1.0,
            None,
            ExecMode::Sequential,
        )
        .unwrap();
        campaign
            .records
            .retain(|r| !(r.setting.tau.value() == 3 && r.setting.axis == Axis::Y));
        assert!(matches!(
            wedge_matrix_from_records(&campaign.records, dim),
            Err(Error::MissingSetting {
                tau: 3,
                axis: Axis::Y
            })
        ));
    }

    #[test]
    fn zero_wedges_imputed() {
        let dim = d7();
        let rho = eigen(0, dim).projector();
        let mut campaign = simulate_campaign(
            &rho,
            &measurement_plan(dim),
            1e3,
            None,
            ExecMode::Sequential,
        )
        .unwrap();
        let r = &mut campaign.records[1];
        r.plus_counts[0] = 0.0;
        r.minus_counts[0] = 0.0;
        let est = wedge_matrix_from_records(&campaign.records, dim).unwrap();
        assert_eq!(est.unmeasured.len(), 1);
        let (a, b) = est.unmeasured[0];
        assert_eq!(est.matrix.entry(a, b), Complex64::new(0.0, 0.0));
        assert_eq!(est.matrix.entry(b, a), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn ang_from_wedge_is_exact() {
        let dim = d7();
        let c = build_conversion_matrix(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let rho = random_density_matrix(dim, &mut rng);
            let ang = ang_from_wedge(&wedge_projection_table(&rho).unwrap(), &c).unwrap();
            let mut worst = 0.0f64;
            for a in dim.labels() {
                for b in dim.labels() {
                    let bra = ang_state(dim.angle(a), dim).to_dvector();
                    let ket = ang_state(dim.angle(b), dim).to_dvector();
                    let direct = (bra.adjoint() * rho.entries() * ket)[(0, 0)];
                    worst = worst.max((ang.entry(a, b) - direct).norm());
                }
            }
            assert!(worst < 1e-10, "{worst}");
            assert!(ang.hermitian_deviation() < 1e-10);
        }
        let mixed = DensityMatrix::maximally_mixed(dim, Basis::Oam);
        let ang = ang_from_wedge(&wedge_projection_table(&mixed).unwrap(), &c).unwrap();
        assert!(ang.max_abs_diff(&DensityMatrix::maximally_mixed(dim, Basis::Ang)) < 1e-12);
    }

    #[test]
    fn spectrum_projection_by_hand() {
        assert_eq!(project_spectrum(&[1.1, -0.1]), vec![1.0, 0.0]);
        // shift 0, zero -0.3, spread -0.3 over {0.5, 0.8}: 0.35, 0.65
        let got = project_spectrum(&[-0.3, 0.5, 0.8]);
        assert!(
            (got[0]).abs() < 1e-15
                && (got[1] - 0.35).abs() < 1e-12
                && (got[2] - 0.65).abs() < 1e-12
        );
        // a second round: {-0.2, 0.05, 1.15} -> {0, -0.05, 1.05} -> {0, 0, 1}
        let got = project_spectrum(&[-0.2, 0.05, 1.15]);
        assert!(got[0] == 0.0 && got[1] == 0.0 && (got[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_psd_cases() {
        let dim = Dimension::from_size(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density_matrix(dim, &mut rng)
            .to_basis(Basis::Ang)
            .unwrap();
        assert!(nearest_psd(&rho).unwrap().max_abs_diff(&rho) < 1e-12);
        let mut m = CMatrix::zeros(3, 3);
        m[(0, 0)] = Complex64::new(1.1, 0.0);
        m[(1, 1)] = Complex64::new(-0.1, 0.0);
        let raw = DensityMatrix::new(dim, Basis::Ang, m).unwrap();
        let out = nearest_psd(&raw).unwrap();
        assert!((out.entries()[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(out.entries()[(1, 1)].norm() < 1e-12);
        out.validate_physical().unwrap();
        assert!(matches!(
            restore_physicality(&raw, PhysicalityMethod::IterativeMle, None),
            Err(Error::MleRequiresRecords)
        ));
    }

    #[test]
    fn mle_is_monotone_and_physical() {
        let dim = Dimension::from_size(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let psi = random_pure_state(dim, &mut rng);
        let rho = psi.projector();
        let campaign = simulate_campaign(
            &rho,
            &measurement_plan(dim),
            1e4,
            Some(8),
            ExecMode::Sequential,
        )
        .unwrap();
        let rec = reconstruct(&campaign.records, dim, PhysicalityMethod::NearestPsd).unwrap();
        let out = iterative_mle(&rec.ang_raw, &campaign.records, &MleOptions::default()).unwrap();
        for w in out.log_likelihood.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(out.log_likelihood.len() > 1);
        let ev = out.state.eigenvalues();
        assert!(ev[0] >= -1e-12);
        assert!((out.state.trace().re - 1.0).abs() < 1e-10);
        let fid = (psi.to_dvector().adjoint()
            * out.state.to_basis(Basis::Oam).unwrap().entries()
            * psi.to_dvector())[(0, 0)]
            .re;
        assert!(fid > 0.95, "{fid}");
    }

    #[test]
    fn wigner_closed_forms() {
        let dim = d7();
        let mixed = DensityMatrix::maximally_mixed(dim, Basis::Ang);
        let w = wigner_from_ang(&mixed).unwrap();
        assert!(w.values().iter().all(|v| (v - 1.0 / 49.0).abs() < 1e-12));
        for l0 in dim.labels() {
            let rho = eigen(l0, dim).projector();
            let w = wigner_from_ang(&rho).unwrap();
            for theta in dim.labels() {
                for l in dim.labels() {
                    let want = if l == l0 { 1.0 / 7.0 } else { 0.0 };
                    assert!((w.get(theta, l) - want).abs() < 1e-10);
                    assert!((brute_wigner(&rho, theta, l) - want).abs() < 1e-10);
                }
            }
        }
        let sup = superposition(dim).projector();
        let w = wigner_from_ang(&sup).unwrap();
        for theta in dim.labels() {
            let want = (4.0 * PI * theta as f64 / 7.0).cos() / 7.0;
            assert!((w.get(theta, 0) - want).abs() < 1e-10);
            assert!((brute_wigner(&sup, theta, 0) - want).abs() < 1e-10);
        }
        assert!((w.get(2, 0) + 0.128_709_838_271_774_15).abs() < 1e-12);
    }

    #[test]
    fn wigner_rejects_non_hermitian() {
        let dim = Dimension::from_size(3).unwrap();
        let mut m = CMatrix::zeros(3, 3);
        m[(0, 1)] = Complex64::new(0.5, 0.0);
        let raw = DensityMatrix::new(dim, Basis::Ang, m).unwrap();
        assert!(matches!(
            wigner_from_ang(&raw),
            Err(Error::NonHermitianInput(_))
        ));
    }

    #[test]
    fn marginal_orientation() {
        let dim = d7();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let rho = random_density_matrix(dim, &mut rng);
        let ang = rho.to_basis(Basis::Ang).unwrap();
        let w = wigner_from_ang(&rho).unwrap();
        let (p_ang, p_oam) = marginals(&w);
        for (k, x) in dim.labels().enumerate() {
            assert!((p_ang[k] - ang.entry(x, x).re).abs() < 1e-10);
            assert!((p_oam[k] - rho.entries()[(k, k)].re).abs() < 1e-10);
        }
        // the printed orientation reflects the OAM marginal
        let wp = wigner_with_orientation(&rho, KernelOrientation::AsPrinted).unwrap();
        let (_, p_ref) = marginals(&wp);
        let d = dim.size();
        for (k, p) in p_ref.iter().enumerate() {
            assert!((p - rho.entries()[(d - 1 - k, d - 1 - k)].re).abs() < 1e-10);
        }
        let e1 = wigner_from_ang(&eigen(1, dim).projector()).unwrap();
        let (pa, po) = marginals(&e1);
        assert!(pa.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-12));
        assert!((po[4] - 1.0).abs() < 1e-12);
        let (pa, po) = marginals(&wigner_from_ang(&superposition(dim).projector()).unwrap());
        assert!((po[2] - 0.5).abs() < 1e-12 && (po[4] - 0.5).abs() < 1e-12);
        assert!(pa.iter().any(|v| (v - 1.0 / 7.0).abs() > 1e-3));
        assert!((pa.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wigner_inverse_round_trip() {
        let dim = d7();
        let d = dim.size();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..50 {
            // arbitrary Hermitian, not necessarily physical
            let g = random_density_matrix(dim, &mut rng).into_entries();
            let h = random_density_matrix(dim, &mut rng).into_entries();
            let m = &g * Complex64::new(3.0, 0.0) - &h * Complex64::new(5.0, 0.0);
            let rho = DensityMatrix::new(dim, Basis::Oam, m).unwrap();
            let back = oam_from_wigner(&wigner_from_ang(&rho).unwrap());
            assert!(back.max_abs_diff(&rho) < 1e-12);
        }
        let uniform = WignerGrid::new(dim, vec![1.0 / 49.0; d * d]).unwrap();
        assert!(
            oam_from_wigner(&uniform)
                .max_abs_diff(&DensityMatrix::maximally_mixed(dim, Basis::Oam))
                < 1e-12
        );
        let mix = DensityMatrix::mixture(&[
            (0.5, eigen(1, dim).projector()),
            (0.5, eigen(-1, dim).projector()),
        ])
        .unwrap();
        let back = oam_from_wigner(&wigner_from_ang(&mix).unwrap());
        assert!(back.entries()[(2, 4)].norm() < 1e-12);
    }

    #[test]
    fn wigner_covariance_and_linearity() {
        let dim = d7();
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let a = random_density_matrix(dim, &mut rng);
        let b = random_density_matrix(dim, &mut rng);
        let (wa, wb) = (wigner_from_ang(&a).unwrap(), wigner_from_ang(&b).unwrap());
        let alpha = 0.3;
        let mix = DensityMatrix::mixture(&[(alpha, a.clone()), (1.0 - alpha, b)]).unwrap();
        let wm = wigner_from_ang(&mix).unwrap();
        for (k, v) in wm.values().iter().enumerate() {
            assert!((v - (alpha * wa.values()[k] + (1.0 - alpha) * wb.values()[k])).abs() < 1e-12);
        }
        for tau in dim.labels() {
            let wr = wigner_from_ang(&a.rotated(dim.angle(tau)).unwrap()).unwrap();
            for theta in dim.labels() {
                for l in dim.labels() {
                    assert!((wr.get(theta, l) - wa.get(theta - tau, l)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn quality_metrics() {
        let dim = d7();
        let sup = superposition(dim).projector();
        let w = wigner_from_ang(&sup).unwrap();
        let q = quality_report(&sup, &w, Some(&superposition(dim)), (-1, 1)).unwrap();
        assert!((q.degree_of_coherence - 1.0).abs() < 1e-12);
        assert!((q.fidelity.unwrap() - 1.0).abs() < 1e-12);
        assert!((q.purity - 1.0).abs() < 1e-12);
        assert!(q.negativity_volume > 0.0);
        let mix = DensityMatrix::mixture(&[
            (0.5, eigen(1, dim).projector()),
            (0.5, eigen(-1, dim).projector()),
        ])
        .unwrap();
        let wm = wigner_from_ang(&mix).unwrap();
        let q = quality_report(&mix, &wm, None, (-1, 1)).unwrap();
        assert!(q.degree_of_coherence.abs() < 1e-12);
        assert!(q.fidelity.is_none());
        assert!((q.purity - 0.5).abs() < 1e-12);
        for theta in dim.labels() {
            assert!(wm.get(theta, 0) >= -1e-12);
        }
        let e0 = eigen(0, dim).projector();
        let q = quality_report(&e0, &wigner_from_ang(&e0).unwrap(), None, (-1, 1)).unwrap();
        assert_eq!(q.degree_of_coherence, 0.0);
        assert!(quality_report(&e0, &wm, None, (-4, 1)).is_err());
    }

    #[test]
    fn seed_sweep_is_mode_independent() {
        let dim = Dimension::from_size(5).unwrap();
        let rho = superposition(dim).projector();
        let plan = measurement_plan(dim);
        let seeds = [1, 2, 3, 4];
        let run = |mode| {
            reconstruct_seeds(
                &rho,
                &plan,
                1e4,
                &seeds,
                PhysicalityMethod::NearestPsd,
                mode,
            )
            .unwrap()
            .into_iter()
            .map(|r| r.oam)
            .collect::<Vec<_>>()
        };
        let seq = run(ExecMode::Sequential);
        assert_eq!(seq, run(ExecMode::Parallel));
        assert_ne!(seq[0], seq[1]);
    }
}
