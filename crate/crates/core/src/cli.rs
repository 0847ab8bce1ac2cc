//! `azwig`: simulate campaigns, reconstruct states, and inspect results.
//!
//! Exit codes: 0 success, 1 self-test failure, 2 configuration error,
//! 3 I/O error, 4 input/spec error, 5 measurement plan not covered.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::hilbert::{DensityMatrix, Dimension, StateVector};
use crate::ingest::{
    self, bin_to_wedges, campaign_to_json, load_pgm_frame, matrix_from_csv, parse_campaign,
    parse_frame_csv, parse_sidecar, parse_state_spec, write_outputs, OutputBundle, PlanEntry,
    Provenance, RunReport, StateSpec,
};
use crate::par::ExecMode;
use crate::protocol::{measurement_plan, measurement_plan_with_null, simulate_campaign};
use crate::recon::{
    quality_report, reconstruct, wigner_from_ang, KernelOrientation, PhysicalityMethod,
};
use crate::selftest::{self, SelftestOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SPEC: i32 = 4;
pub const EXIT_COVERAGE: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "azwig",
    version,
    about = "Azimuthal Wigner tomography of OAM states"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MleArg {
    Nearest,
    Iterative,
}

impl From<MleArg> for PhysicalityMethod {
    fn from(m: MleArg) -> Self {
        match m {
            MleArg::Nearest => PhysicalityMethod::NearestPsd,
            MleArg::Iterative => PhysicalityMethod::IterativeMle,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the measurement campaign for a state spec.
    Simulate {
        /// State spec JSON.
        #[arg(long)]
        state: PathBuf,
        /// Expected dimension; must match the spec.
        #[arg(long)]
        d: Option<usize>,
        /// Photons per measurement setting.
        #[arg(long, default_value_t = 1e6)]
        photons: f64,
        /// Base seed for shot noise.
        #[arg(long, default_value_t = 0, conflicts_with = "no_noise")]
        seed: u64,
        /// Record expected counts instead of Poisson draws.
        #[arg(long)]
        no_noise: bool,
        /// Add the (0, Y) null-test setting to the plan.
        #[arg(long)]
        null_test: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct ANG/OAM matrices and the Wigner grid from records.
    Reconstruct {
        /// Measurement-record JSON.
        input: PathBuf,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, value_enum, default_value = "nearest")]
        mle: MleArg,
        /// State spec of the expected state, for fidelity.
        #[arg(long)]
        target: Option<PathBuf>,
        /// OAM pair for the degree of coherence.
        #[arg(long, allow_hyphen_values = true, default_value = "-1,1")]
        pair: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wigner grid and heatmap from a density matrix (`PREFIX_re.csv`, `PREFIX_im.csv`).
    Wigner {
        input: PathBuf,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quality report for a density matrix (`PREFIX_re.csv`, `PREFIX_im.csv`).
    Report {
        input: PathBuf,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value = "-1,1")]
        pair: String,
        /// Write `report.json` here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a frame (CSV, or PGM with a JSON sidecar) over the d wedges.
    Bin {
        input: PathBuf,
        #[arg(long)]
        d: usize,
        /// Geometry sidecar for PGM input; defaults to `<input>.json`.
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Angular samples taken from a PGM image.
        #[arg(long, default_value_t = 720)]
        samples: usize,
        /// Write `wedges.csv` here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant suite.
    Selftest {
        #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5, 7])]
        dims: Vec<usize>,
        /// Use the reflected phase-space kernel (mutation check).
        #[arg(long, hide = true)]
        corrupt_kernel: bool,
    },
}

/// Validated settings shared by the subcommands.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dim: Option<Dimension>,
    pub photons: f64,
    pub seed: Option<u64>,
    pub method: PhysicalityMethod,
    pub pair: (i64, i64),
}

impl RunConfig {
    fn check_dim(&self, found: Dimension) -> Result<(), Failure> {
        match self.dim {
            Some(want) if want != found => Err(Failure::config(format!(
                "input has d = {}, but --d {} was given",
                found.size(),
                want.size()
            ))),
            _ => Ok(()),
        }
    }

    fn check_pair(&self, dim: Dimension) -> Result<(), Failure> {
        let n = dim.max_mode() as i64;
        let (a, b) = self.pair;
        if a.abs() > n || b.abs() > n {
            return Err(Failure::config(format!(
                "--pair {a},{b} outside [-{n}, {n}]"
            )));
        }
        Ok(())
    }
}

/// An error together with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: String) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::EvenDimension(_) | Error::DimensionTooSmall(_) | Error::InvalidArgument(_) => {
                EXIT_CONFIG
            }
            Error::Io(_) => EXIT_IO,
            Error::MissingSetting { .. } => EXIT_COVERAGE,
            _ => EXIT_SPEC,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn parse_dim(d: Option<usize>) -> Result<Option<Dimension>, Failure> {
    d.map(|d| {
        let dim = Dimension::from_size(d)?;
        dim.require_tomography()?;
        Ok(dim)
    })
    .transpose()
}

fn parse_pair(text: &str) -> Result<(i64, i64), Failure> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(Failure::config(format!(
                "--pair expects la,lb; got {text:?}"
            ))),
        },
        _ => Err(Failure::config(format!(
            "--pair expects la,lb; got {text:?}"
        ))),
    }
}

fn load_spec(path: &Path) -> Result<StateSpec, Failure> {
    Ok(parse_state_spec(&read_text(path)?)?)
}

fn load_target(path: Option<&Path>, dim: Dimension) -> Result<Option<StateVector>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let spec = load_spec(path)?;
    if spec.dim != dim {
        return Err(Failure::config(format!(
            "target has d = {}, input has d = {}",
            spec.dim.size(),
            dim.size()
        )));
    }
    match spec.as_pure() {
        Some(s) => Ok(Some(s.clone())),
        None => Err(Failure::config("target must be a PURE state spec".into())),
    }
}

/// Accepts `PREFIX`, `PREFIX_re.csv` or `PREFIX_im.csv`.
fn load_matrix(input: &Path) -> Result<DensityMatrix, Failure> {
    let s = input.to_string_lossy();
    let prefix = s
        .strip_suffix("_re.csv")
        .or_else(|| s.strip_suffix("_im.csv"))
        .unwrap_or(&s);
    let (re, im) = ingest::matrix_paths(Path::new(prefix));
    Ok(matrix_from_csv(&read_text(&re)?, &read_text(&im)?)?)
}

fn method_name(m: PhysicalityMethod) -> &'static str {
    match m {
        PhysicalityMethod::NearestPsd => "nearest",
        PhysicalityMethod::IterativeMle => "iterative",
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match cli.command {
        Command::Simulate {
            state,
            d,
            photons,
            seed,
            no_noise,
            null_test,
            out: dir,
        } => {
            let dim = parse_dim(d)?;
            if photons < 0.0 || !photons.is_finite() {
                return Err(Failure::config(format!("--photons {photons} must be >= 0")));
            }
            let cfg = RunConfig {
                dim,
                photons,
                seed: (!no_noise).then_some(seed),
                method: PhysicalityMethod::NearestPsd,
                pair: (-1, 1),
            };
            let spec = load_spec(&state)?;
            cfg.check_dim(spec.dim)?;
            spec.dim.require_tomography()?;
            let plan = if null_test {
                measurement_plan_with_null(spec.dim)
            } else {
                measurement_plan(spec.dim)
            };
            let campaign = simulate_campaign(
                &spec.density_matrix(),
                &plan,
                cfg.photons,
                cfg.seed,
                ExecMode::default(),
            )?;
            let mut bundle = OutputBundle::default();
            bundle.add("records.json", campaign_to_json(&campaign).into_bytes());
            bundle.write(&dir)?;
            for w in &spec.warnings {
                eprintln!("warning: {w}");
            }
            writeln!(
                out,
                "wrote {} records to {}",
                campaign.records.len(),
                dir.display()
            )
            .map_err(Error::from)?;
            Ok(EXIT_OK)
        }
        Command::Reconstruct {
            input,
            d,
            mle,
            target,
            pair,
            out: dir,
        } => {
            let cfg = RunConfig {
                dim: parse_dim(d)?,
                photons: 0.0,
                seed: None,
                method: mle.into(),
                pair: parse_pair(&pair)?,
            };
            let campaign = parse_campaign(&read_text(&input)?)?;
            cfg.check_dim(campaign.dim)?;
            cfg.check_pair(campaign.dim)?;
            let target = load_target(target.as_deref(), campaign.dim)?;
            let rec = reconstruct(&campaign.records, campaign.dim, cfg.method)?;
            let quality = quality_report(&rec.oam, &rec.wigner, target.as_ref(), cfg.pair)?;
            let provenance = Provenance {
                d: campaign.dim.size(),
                seed: campaign.seed,
                photons: campaign.photons,
                plan: campaign
                    .plan()
                    .iter()
                    .map(|s| PlanEntry {
                        tau: s.tau.value(),
                        axis: s.axis,
                    })
                    .collect(),
                method: method_name(cfg.method).into(),
                noise: campaign.seed.is_some(),
            };
            for w in &rec.warnings {
                eprintln!("warning: {w}");
            }
            let report = RunReport::new(quality, rec.warnings.clone(), Some(provenance));
            let manifest = write_outputs(&rec.ang, &rec.oam, &rec.wigner, &report, &dir)?;
            writeln!(
                out,
                "wrote {} files to {}",
                manifest.files.len(),
                dir.display()
            )
            .map_err(Error::from)?;
            Ok(EXIT_OK)
        }
        Command::Wigner { input, d, out: dir } => {
            let dim = parse_dim(d)?;
            let rho = load_matrix(&input)?;
            if let Some(want) = dim {
                if want != rho.dim() {
                    return Err(Failure::config(format!(
                        "matrix has d = {}, but --d {} was given",
                        rho.dim().size(),
                        want.size()
                    )));
                }
            }
            let w = wigner_from_ang(&rho)?;
            let mut bundle = OutputBundle::default();
            bundle.add_wigner(&w);
            bundle.write(&dir)?;
            writeln!(out, "wrote Wigner grid to {}", dir.display()).map_err(Error::from)?;
            Ok(EXIT_OK)
        }
        Command::Report {
            input,
            d,
            target,
            pair,
            out: dir,
        } => {
            let cfg = RunConfig {
                dim: parse_dim(d)?,
                photons: 0.0,
                seed: None,
                method: PhysicalityMethod::NearestPsd,
                pair: parse_pair(&pair)?,
            };
            let rho = load_matrix(&input)?;
            cfg.check_dim(rho.dim())?;
            cfg.check_pair(rho.dim())?;
            let target = load_target(target.as_deref(), rho.dim())?;
            let w = wigner_from_ang(&rho)?;
            let quality = quality_report(&rho, &w, target.as_ref(), cfg.pair)?;
            let report = RunReport::new(quality, Vec::new(), None);
            let text = serde_json::to_string_pretty(&report).expect("plain data serializes");
            match dir {
                Some(dir) => {
                    let mut bundle = OutputBundle::default();
                    bundle.add("report.json", text.into_bytes());
                    bundle.write(&dir)?;
                }
                None => writeln!(out, "{text}").map_err(Error::from)?,
            }
            Ok(EXIT_OK)
        }
        Command::Bin {
            input,
            d,
            geometry,
            samples,
            out: dir,
        } => {
            let dim = Dimension::from_size(d)?;
            let is_pgm = input
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
            let frame = if is_pgm {
                let bytes = fs::read(&input).map_err(|e| Failure {
                    code: EXIT_IO,
                    message: format!("{}: {e}", input.display()),
                })?;
                let side = geometry.unwrap_or_else(|| {
                    let mut p = input.clone().into_os_string();
                    p.push(".json");
                    PathBuf::from(p)
                });
                let g = parse_sidecar(&read_text(&side)?)?;
                load_pgm_frame(&bytes, (g.cx, g.cy), g.r_min, g.r_max, samples)?
            } else {
                parse_frame_csv(&read_text(&input)?)?
            };
            let bins = bin_to_wedges(&frame, dim)?;
            let mut text = String::from("Theta,value\n");
            for (k, v) in dim.labels().zip(&bins) {
                text.push_str(&format!("{k},{}\n", ingest::fmt_f64(*v)));
            }
            match dir {
                Some(dir) => {
                    let mut bundle = OutputBundle::default();
                    bundle.add("wedges.csv", text.into_bytes());
                    bundle.write(&dir)?;
                }
                None => write!(out, "{text}").map_err(Error::from)?,
            }
            Ok(EXIT_OK)
        }
        Command::Selftest {
            dims,
            corrupt_kernel,
        } => {
            let kernel = if corrupt_kernel {
                KernelOrientation::AsPrinted
            } else {
                KernelOrientation::MarginalCorrected
            };
            let opts = SelftestOptions {
                kernel,
                ..Default::default()
            };
            let (ok, table) = selftest::run(&dims, opts)?;
            write!(out, "{table}").map_err(Error::from)?;
            Ok(if ok { EXIT_OK } else { EXIT_SELFTEST })
        }
    }
}

/// Runs the tool with explicit arguments (the first is the program name)
/// and returns the exit code. Diagnostics go to `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn run() -> i32 {
    run_with(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["azwig"];
        full.extend_from_slice(args);
        let code = run_with(full, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn even_dimension_is_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("o");
        let (code, _, err) = call(&[
            "simulate",
            "--state",
            "missing.json",
            "--d",
            "6",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("dimension must be odd"), "{err}");
        assert!(!out.exists());
    }

    #[test]
    fn missing_state_is_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        let (code, _, _) = call(&[
            "simulate",
            "--state",
            tmp.path().join("nope.json").to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_IO);
    }

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("-1,1").unwrap(), (-1, 1));
        assert_eq!(parse_pair(" 2 , -3").unwrap(), (2, -3));
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("a,b").is_err());
    }

    #[test]
    fn unknown_flag_is_config_error() {
        assert_eq!(call(&["selftest", "--bogus"]).0, EXIT_CONFIG);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }
}
