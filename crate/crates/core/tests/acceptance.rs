//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if
//! any criterion fails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use azimuthal_wigner::hilbert::{
    build_conversion_matrix, random_density_matrix, random_pure_state, wedge_projection_table,
    DensityMatrix, Dimension, ModeIndex, StateVector,
};
use azimuthal_wigner::ingest::bin_to_wedges;
use azimuthal_wigner::protocol::{
    measurement_plan, port_probabilities, simulate_campaign, synth_polar_frame, Port,
};
use azimuthal_wigner::recon::{
    ang_from_wedge, iterative_mle, marginals, nearest_psd, quality_report, reconstruct,
    wigner_from_ang, MleOptions, PhysicalityMethod,
};
use azimuthal_wigner::{Basis, ExecMode};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn d7() -> Dimension {
    Dimension::from_size(7).unwrap()
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn eigen(l: i64, dim: Dimension) -> StateVector {
    StateVector::oam_eigenstate(ModeIndex::new(l, dim).unwrap(), dim)
}

fn superposition(dim: Dimension) -> StateVector {
    StateVector::from_components(dim, &[(1, c(FRAC_1_SQRT_2)), (-1, c(FRAC_1_SQRT_2))]).unwrap()
}

fn mixture(dim: Dimension) -> DensityMatrix {
    DensityMatrix::mixture(&[
        (0.5, eigen(1, dim).projector()),
        (0.5, eigen(-1, dim).projector()),
    ])
    .unwrap()
}

/// Simulate the minimal plan and reconstruct; returns the OAM estimate.
fn pipeline(rho: &DensityMatrix, photons: f64, seed: Option<u64>) -> DensityMatrix {
    let dim = rho.dim();
    let camp = simulate_campaign(
        rho,
        &measurement_plan(dim),
        photons,
        seed,
        ExecMode::Parallel,
    )
    .unwrap();
    reconstruct(&camp.records, dim, PhysicalityMethod::NearestPsd)
        .unwrap()
        .oam
}

fn coherence(rho: &DensityMatrix) -> f64 {
    let w = wigner_from_ang(rho).unwrap();
    quality_report(rho, &w, None, (-1, 1))
        .unwrap()
        .degree_of_coherence
}

fn fidelity(rho: &DensityMatrix, target: &StateVector) -> f64 {
    let w = wigner_from_ang(rho).unwrap();
    quality_report(rho, &w, Some(target), (-1, 1))
        .unwrap()
        .fidelity
        .unwrap()
}

fn noiseless_round_trip() -> Outcome {
    let dim = d7();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let rho = random_density_matrix(dim, &mut rng);
        worst = worst.max(pipeline(&rho, 1e6, None).max_abs_diff(&rho));
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst < 1e-8 && secs < 10.0,
        format!("max entry error {worst:.2e}, {secs:.2} s for 50 states"),
    )
}

fn wigner_marginals() -> Outcome {
    let dim = d7();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let rho = random_density_matrix(dim, &mut rng);
        let ang = rho.to_basis(Basis::Ang).unwrap();
        let (p_ang, p_oam) = marginals(&wigner_from_ang(&rho).unwrap());
        for (i, l) in dim.labels().enumerate() {
            worst = worst.max((p_ang[i] - ang.entry(l, l).re).abs());
            worst = worst.max((p_oam[i] - rho.entry(l, l).re).abs());
        }
    }
    (worst < 1e-10, format!("max marginal error {worst:.2e}"))
}

fn closed_form_grids() -> Outcome {
    let dim = d7();
    let mixed = wigner_from_ang(&DensityMatrix::maximally_mixed(dim, Basis::Oam)).unwrap();
    let e_mixed = mixed
        .values()
        .iter()
        .map(|v| (v - 1.0 / 49.0).abs())
        .fold(0.0, f64::max);

    let mut e_eigen: f64 = 0.0;
    for l0 in dim.labels() {
        let w = wigner_from_ang(&eigen(l0, dim).projector()).unwrap();
        for theta in dim.labels() {
            for l in dim.labels() {
                let want = if l == l0 { 1.0 / 7.0 } else { 0.0 };
                e_eigen = e_eigen.max((w.get(theta, l) - want).abs());
            }
        }
    }

    let sup = wigner_from_ang(&superposition(dim).projector()).unwrap();
    let e_sup = dim
        .labels()
        .map(|t| (sup.get(t, 0) - (4.0 * PI * t as f64 / 7.0).cos() / 7.0).abs())
        .fold(0.0, f64::max);
    let neg = sup.get(2, 0);
    let mix_min = wigner_from_ang(&mixture(dim)).unwrap().min();

    let ok = e_mixed <= 1e-12
        && e_eigen <= 1e-10
        && e_sup <= 1e-10
        && (neg - (-0.1287)).abs() < 1e-4
        && mix_min >= -1e-12;
    (
        ok,
        format!(
            "mixed {e_mixed:.1e}, eigenstates {e_eigen:.1e}, superposition row {e_sup:.1e}, \
             W(2,0) = {neg:.4}, mixture min {mix_min:.1e}"
        ),
    )
}

fn conversion_exactness() -> Outcome {
    let dim = d7();
    let cm = build_conversion_matrix(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rho = random_density_matrix(dim, &mut rng);
        let via = ang_from_wedge(&wedge_projection_table(&rho).unwrap(), &cm).unwrap();
        worst = worst.max(via.max_abs_diff(&rho.to_basis(Basis::Ang).unwrap()));
    }
    (
        worst < 1e-10,
        format!("max deviation {worst:.2e} over 100 states"),
    )
}

fn coherence_metric() -> Outcome {
    let dim = d7();
    let pure = superposition(dim).projector();
    let mix = mixture(dim);
    let g_pure0 = coherence(&pipeline(&pure, 1e6, None));
    let g_mix0 = coherence(&pipeline(&mix, 1e6, None));
    let seeds = 20;
    let (mut g_pure, mut g_mix) = (0.0, 0.0);
    for s in 0..seeds {
        g_pure += coherence(&pipeline(&pure, 1e6, Some(1000 + s))) / seeds as f64;
        g_mix += coherence(&pipeline(&mix, 1e6, Some(2000 + s))) / seeds as f64;
    }
    let ok =
        (g_pure0 - 1.0).abs() <= 1e-8 && g_mix0.abs() <= 1e-8 && g_pure >= 0.95 && g_mix <= 0.05;
    (
        ok,
        format!(
            "noiseless pure {g_pure0:.10}, mixed {g_mix0:.1e}; 1e6 photons x 20 seeds: \
             pure {g_pure:.4}, mixed {g_mix:.4}"
        ),
    )
}

fn noise_robustness() -> Outcome {
    let dim = d7();
    let target = eigen(1, dim);
    let rho = target.projector();
    let seeds = 20;
    let mean = |photons: f64, base: u64| {
        (0..seeds)
            .map(|s| fidelity(&pipeline(&rho, photons, Some(base + s)), &target))
            .sum::<f64>()
            / seeds as f64
    };
    let (f_hi, f_lo) = (mean(1e6, 3000), mean(1e4, 4000));
    (
        f_hi >= 0.99 && f_lo >= 0.95,
        format!("mean fidelity {f_hi:.4} at 1e6, {f_lo:.4} at 1e4"),
    )
}

fn linear_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [3, 5, 7, 9, 15] {
        let dim = Dimension::from_size(d).unwrap();
        let plan = measurement_plan(dim);
        let rho = random_density_matrix(dim, &mut rng);
        let err = pipeline(&rho, 1e6, None).max_abs_diff(&rho);
        ok &= plan.len() == d && err < 1e-8;
        parts.push(format!("d={d}: {} settings, error {err:.1e}", plan.len()));
    }
    (ok, parts.join("; "))
}

fn physicality_restoration() -> Outcome {
    // 2x2 example through the spectrum projection, then embedded in d = 3
    let proj = azimuthal_wigner::recon::project_spectrum(&[1.1, -0.1]);
    let e_proj = (proj[0] - 1.0).abs().max(proj[1].abs());
    let raw = DensityMatrix::new(
        Dimension::from_size(3).unwrap(),
        Basis::Ang,
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.1), c(-0.1), c(0.0)])),
    )
    .unwrap();
    let fixed = nearest_psd(&raw).unwrap();
    let e_psd = (fixed.entries()[(0, 0)].re - 1.0)
        .abs()
        .max(fixed.entries()[(1, 1)].norm())
        .max(fixed.entries()[(2, 2)].norm());

    let dim = d7();
    let rho = superposition(dim).projector();
    let camp = simulate_campaign(
        &rho,
        &measurement_plan(dim),
        1e3,
        Some(8),
        ExecMode::Parallel,
    )
    .unwrap();
    let rec = reconstruct(&camp.records, dim, PhysicalityMethod::NearestPsd).unwrap();
    let mle = iterative_mle(&rec.ang_raw, &camp.records, &MleOptions::default()).unwrap();
    let monotone = mle.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let min_eig = mle.state.eigenvalues()[0];
    let trace_err = (mle.state.trace().re - 1.0).abs();
    let ok = e_proj < 1e-15 && e_psd < 1e-12 && monotone && min_eig >= -1e-12 && trace_err <= 1e-10;
    (
        ok,
        format!(
            "diag(1.1,-0.1) -> ({:.3}, {:.3}); MLE {} iterations, monotone {monotone}, \
             min eigenvalue {min_eig:.1e}, trace error {trace_err:.1e}",
            proj[0], proj[1], mle.iterations
        ),
    )
}

fn cross_model_consistency() -> Outcome {
    let dim = d7();
    let samples = 64 * dim.size();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let state = random_pure_state(dim, &mut rng);
        let rho = state.projector();
        let ens = vec![(1.0, state)];
        for setting in measurement_plan(dim) {
            let ratios = port_probabilities(&rho, setting).unwrap().ratios();
            let plus = synth_polar_frame(&ens, setting, Port::Plus, samples).unwrap();
            let minus = synth_polar_frame(&ens, setting, Port::Minus, samples).unwrap();
            let bp = bin_to_wedges(&plus, dim).unwrap();
            let bm = bin_to_wedges(&minus, dim).unwrap();
            for (k, r) in ratios.iter().enumerate() {
                if let Some(r) = r {
                    let binned = (bp[k] - bm[k]) / (bp[k] + bm[k]);
                    worst = worst.max((binned - r).abs());
                }
            }
        }
    }
    (
        worst <= 0.02,
        format!("max port-ratio deviation {worst:.4} over 20 states (limit 0.02)"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("noiseless round trip", noiseless_round_trip),
        ("Wigner marginals", wigner_marginals),
        ("closed-form grids", closed_form_grids),
        ("conversion exactness", conversion_exactness),
        ("coherence metric", coherence_metric),
        ("noise robustness", noise_robustness),
        ("linear scaling", linear_scaling),
        ("physicality restoration", physicality_restoration),
        ("cross-model consistency", cross_model_consistency),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (ok, detail) = run();
        println!(
            "criterion {}: {} [{name}] {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!ok);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
