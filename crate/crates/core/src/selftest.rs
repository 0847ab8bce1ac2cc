//! Built-in invariant suite, run by `azwig selftest`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hilbert::{
    ang_state, apply_rotation, build_conversion_matrix, mw_state, random_density_matrix, sinc,
    wedge_projection_table, Basis, CMatrix, DensityMatrix, Dimension, StateVector,
};
use crate::par::ExecMode;
use crate::protocol::{measurement_plan, simulate_campaign};
use crate::recon::{
    ang_from_wedge, marginals, reconstruct, wigner_with_orientation, KernelOrientation,
    PhysicalityMethod,
};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub d: usize,
    /// Largest observed violation.
    pub error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SelftestOptions {
    /// Kernel used by the marginal check; `AsPrinted` is a deliberate
    /// mutation that the suite must catch.
    pub kernel: KernelOrientation,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            kernel: KernelOrientation::MarginalCorrected,
            samples: 10,
            seed: 7,
        }
    }
}

pub fn run_checks(dims: &[usize], opts: SelftestOptions) -> crate::Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for &size in dims {
        let dim = Dimension::from_size(size)?;
        dim.require_tomography()?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ size as u64);
        let states: Vec<DensityMatrix> = (0..opts.samples)
            .map(|_| random_density_matrix(dim, &mut rng))
            .collect();
        let check = |name, error, tolerance| CheckResult {
            name,
            d: size,
            error,
            tolerance,
        };

        let ang: Vec<StateVector> = dim.labels().map(|t| ang_state(dim.angle(t), dim)).collect();
        let mut ortho: f64 = 0.0;
        for (i, a) in ang.iter().enumerate() {
            for (j, b) in ang.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((a.inner(b) - want).norm());
            }
        }
        out.push(check("orthonormality", ortho, 1e-12));

        let mut shift: f64 = 0.0;
        for t in dim.labels() {
            for tau in dim.labels() {
                let moved = apply_rotation(&ang_state(dim.angle(t), dim), dim.angle(tau));
                shift = shift.max(moved.max_abs_diff(&ang_state(dim.angle(t + tau), dim)));
            }
        }
        out.push(check("shift", shift, 1e-12));

        // sum_Theta |MW Theta><MW Theta| is diagonal with entries 2 pi sinc^2 / d
        let mut resolution = CMatrix::zeros(size, size);
        for w in dim.labels() {
            let v = mw_state(dim.angle(w), dim).to_dvector();
            resolution += &v * v.adjoint();
        }
        let mut mw_err: f64 = 0.0;
        for (i, l) in dim.labels().enumerate() {
            for j in 0..size {
                let s = sinc(l as f64 * PI / size as f64);
                let want = if i == j {
                    2.0 * PI * s * s / size as f64
                } else {
                    0.0
                };
                mw_err = mw_err.max((resolution[(i, j)] - Complex64::new(want, 0.0)).norm());
            }
        }
        out.push(check("mw identity", mw_err, 1e-12));

        let c = build_conversion_matrix(dim);
        let mut conv: f64 = 0.0;
        for rho in &states {
            let via_wedges = ang_from_wedge(&wedge_projection_table(rho)?, &c)?;
            conv = conv.max(via_wedges.max_abs_diff(&rho.to_basis(Basis::Ang)?));
        }
        out.push(check("conversion exactness", conv, 1e-10));

        let plan = measurement_plan(dim);
        let mut round: f64 = 0.0;
        for rho in &states {
            let camp = simulate_campaign(rho, &plan, 1.0, None, ExecMode::Sequential)?;
            let rec = reconstruct(&camp.records, dim, PhysicalityMethod::NearestPsd)?;
            round = round.max(rec.oam.max_abs_diff(rho));
        }
        out.push(check("round trip", round, 1e-8));

        let mut marg: f64 = 0.0;
        for rho in &states {
            let w = wigner_with_orientation(rho, opts.kernel)?;
            let (p_ang, p_oam) = marginals(&w);
            let a = rho.to_basis(Basis::Ang)?;
            for (i, l) in dim.labels().enumerate() {
                marg = marg.max((p_oam[i] - rho.entry(l, l).re).abs());
                marg = marg.max((p_ang[i] - a.entry(l, l).re).abs());
            }
        }
        out.push(check("marginals", marg, 1e-10));

        // equal mixture of |+1>, |-1> has a non-negative grid; the
        // coherent superposition does not
        let one = Complex64::new(1.0, 0.0);
        let plus = StateVector::from_components(dim, &[(1, one)])?.projector();
        let minus = StateVector::from_components(dim, &[(-1, one)])?.projector();
        let mix = DensityMatrix::mixture(&[(0.5, plus), (0.5, minus)])?;
        let w_mix = wigner_with_orientation(&mix, opts.kernel)?;
        out.push(check("mixture positivity", (-w_mix.min()).max(0.0), 1e-12));
        let sup = StateVector::from_components(dim, &[(1, one), (-1, one)])?.normalized()?;
        let w_sup = wigner_with_orientation(&sup.projector(), opts.kernel)?;
        out.push(check("superposition negativity", w_sup.min() + 1e-3, 0.0));
    }
    Ok(out)
}

pub fn format_table(results: &[CheckResult], elapsed_s: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<26} {:>3} {:>12} {:>10}  result",
        "check", "d", "error", "tol"
    );
    for r in results {
        let _ = writeln!(
            s,
            "{:<26} {:>3} {:>12.3e} {:>10.1e}  {}",
            r.name,
            r.d,
            r.error,
            r.tolerance,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    let _ = writeln!(
        s,
        "{} checks, {} failed, {:.2} s",
        results.len(),
        failed,
        elapsed_s
    );
    s
}

/// Runs the suite and returns `(all_passed, table)`.
pub fn run(dims: &[usize], opts: SelftestOptions) -> crate::Result<(bool, String)> {
    let start = Instant::now();
    let results = run_checks(dims, opts)?;
    let ok = results.iter().all(CheckResult::passed);
    Ok((ok, format_table(&results, start.elapsed().as_secs_f64())))
}
