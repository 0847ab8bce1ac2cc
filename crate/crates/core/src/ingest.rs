//! File formats: state specs, measurement campaigns, polar frames and PGM
//! camera images, CSV grids, and the run output bundle.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hilbert::{Basis, CMatrix, DensityMatrix, Dimension, StateVector};
use crate::protocol::{derive_setting_seed, Axis, Campaign, MeasurementRecord, MeasurementSetting};
use crate::recon::{QualityReport, WignerGrid};

/// Amplitude vectors closer than this to unit norm are accepted as is.
const NORM_EXACT: f64 = 1e-9;
/// Amplitude vectors off by more than this are rejected.
const NORM_REPAIRABLE: f64 = 1e-3;

// ---------------------------------------------------------------------------
// State specifications

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StateKind {
    Pure,
    Ensemble,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmpFile {
    l: i64,
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberFile {
    weight: f64,
    amps: Vec<AmpFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSpecFile {
    d: usize,
    kind: StateKind,
    members: Vec<MemberFile>,
}

/// A pure state or an incoherent ensemble of pure states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpec {
    pub dim: Dimension,
    pub kind: StateKind,
    pub members: Vec<(f64, StateVector)>,
    /// Non-fatal repairs made while parsing.
    pub warnings: Vec<String>,
}

impl StateSpec {
    pub fn pure(state: StateVector) -> Self {
        StateSpec {
            dim: state.dim(),
            kind: StateKind::Pure,
            members: vec![(1.0, state)],
            warnings: Vec::new(),
        }
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        let parts: Vec<(f64, DensityMatrix)> = self
            .members
            .iter()
            .map(|(w, s)| (*w, s.projector()))
            .collect();
        DensityMatrix::mixture(&parts).expect("members share a dimension")
    }

    /// The single member of a pure spec.
    pub fn as_pure(&self) -> Option<&StateVector> {
        match (self.kind, self.members.as_slice()) {
            (StateKind::Pure, [(_, s)]) => Some(s),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        let file = StateSpecFile {
            d: self.dim.size(),
            kind: self.kind,
            members: self
                .members
                .iter()
                .map(|(w, s)| MemberFile {
                    weight: *w,
                    amps: self
                        .dim
                        .labels()
                        .zip(s.amplitudes())
                        .filter(|(_, a)| a.norm_sqr() > 0.0)
                        .map(|(l, a)| AmpFile {
                            l,
                            re: a.re,
                            im: a.im,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes")
    }
}

pub fn parse_state_spec(text: &str) -> Result<StateSpec> {
    let file: StateSpecFile =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let dim = Dimension::from_size(file.d)?;
    if file.members.is_empty() {
        return Err(Error::Schema("members must not be empty".into()));
    }
    if file.kind == StateKind::Pure && file.members.len() != 1 {
        return Err(Error::Schema(format!(
            "PURE spec must have exactly one member, found {}",
            file.members.len()
        )));
    }
    let mut warnings = Vec::new();
    let mut members = Vec::with_capacity(file.members.len());
    let mut weight_sum = 0.0;
    for (idx, m) in file.members.iter().enumerate() {
        if m.weight < 0.0 || !m.weight.is_finite() {
            return Err(Error::Schema(format!("member {idx}: weight must be >= 0")));
        }
        weight_sum += m.weight;
        let mut comps = Vec::with_capacity(m.amps.len());
        for a in &m.amps {
            if a.l.unsigned_abs() as usize > dim.max_mode() {
                return Err(Error::Range(format!(
                    "member {idx}: l = {} outside [-{n}, {n}]",
                    a.l,
                    n = dim.max_mode()
                )));
            }
            if !a.re.is_finite() || !a.im.is_finite() {
                return Err(Error::Schema(format!("member {idx}: non-finite amplitude")));
            }
            comps.push((a.l, Complex64::new(a.re, a.im)));
        }
        let state = StateVector::from_components(dim, &comps)?;
        let norm = state.norm_sqr();
        let off = (norm - 1.0).abs();
        let state = if off <= NORM_EXACT {
            state
        } else if off <= NORM_REPAIRABLE {
            warnings.push(format!("member {idx}: norm^2 = {norm}, renormalized"));
            state.normalized()?
        } else {
            return Err(Error::Norm(format!(
                "member {idx}: norm^2 = {norm}, expected 1"
            )));
        };
        members.push((m.weight, state));
    }
    if (weight_sum - 1.0).abs() > NORM_EXACT {
        return Err(Error::Norm(format!(
            "weights sum to {weight_sum}, expected 1"
        )));
    }
    Ok(StateSpec {
        dim,
        kind: file.kind,
        members,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Measurement campaigns

#[derive(Debug, Serialize, Deserialize)]
struct RecordFile {
    tau: i64,
    axis: Axis,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CampaignFile {
    d: usize,
    seed: Option<u64>,
    photons: f64,
    records: Vec<RecordFile>,
}

pub fn campaign_to_json(c: &Campaign) -> String {
    let file = CampaignFile {
        d: c.dim.size(),
        seed: c.seed,
        photons: c.photons,
        records: c
            .records
            .iter()
            .map(|r| RecordFile {
                tau: r.setting.tau.value(),
                axis: r.setting.axis,
                plus: r.plus_counts.clone(),
                minus: r.minus_counts.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("plain data serializes")
}

pub fn parse_campaign(text: &str) -> Result<Campaign> {
    let file: CampaignFile =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let dim = Dimension::from_size(file.d)?;
    if file.photons < 0.0 || !file.photons.is_finite() {
        return Err(Error::Schema("photons must be >= 0".into()));
    }
    let d = dim.size();
    let mut records = Vec::with_capacity(file.records.len());
    for (i, r) in file.records.into_iter().enumerate() {
        if r.plus.len() != d || r.minus.len() != d {
            return Err(Error::Schema(format!(
                "record {i}: expected {d} counts per port"
            )));
        }
        if r.plus
            .iter()
            .chain(&r.minus)
            .any(|c| *c < 0.0 || !c.is_finite())
        {
            return Err(Error::Schema(format!(
                "record {i}: counts must be finite and >= 0"
            )));
        }
        let setting = MeasurementSetting::new(r.tau, r.axis, dim)?;
        records.push(MeasurementRecord {
            setting,
            plus_counts: r.plus,
            minus_counts: r.minus,
            photon_budget: file.photons,
            seed: file.seed.map(|s| derive_setting_seed(s, i as u64)),
        });
    }
    Ok(Campaign {
        dim,
        seed: file.seed,
        photons: file.photons,
        records,
    })
}

// ---------------------------------------------------------------------------
// Polar frames and angular binning

/// Azimuthal intensity profile: strictly increasing angles in `[0, 2 pi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarFrame {
    samples: Vec<(f64, f64)>,
}

impl PolarFrame {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyFrame);
        }
        for (i, &(phi, intensity)) in samples.iter().enumerate() {
            if !(0.0..2.0 * PI).contains(&phi) {
                return Err(Error::InvalidFrame(format!("angle {phi} outside [0, 2pi)")));
            }
            if intensity < 0.0 || !intensity.is_finite() {
                return Err(Error::InvalidFrame(format!(
                    "intensity {intensity} at sample {i}"
                )));
            }
            if i > 0 && phi <= samples[i - 1].0 {
                return Err(Error::InvalidFrame(
                    "angles must be strictly increasing".into(),
                ));
            }
        }
        Ok(PolarFrame { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Periodic trapezoidal integral of the whole profile.
    pub fn integral(&self) -> f64 {
        segments(&self.samples)
            .map(|(x0, y0, x1, y1)| 0.5 * (y0 + y1) * (x1 - x0))
            .sum()
    }
}

/// Linear pieces of the periodic interpolant, covering one full turn.
fn segments(s: &[(f64, f64)]) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
    let n = s.len();
    (0..n).map(move |i| {
        let (x0, y0) = s[i];
        let (x1, y1) = if i + 1 < n {
            s[i + 1]
        } else {
            (s[0].0 + 2.0 * PI, s[0].1)
        };
        (x0, y0, x1, y1)
    })
}

/// Integrates the frame over wedges `k = -N..=N`, wedge `k` spanning
/// `[2 pi (k - 1/2)/d, 2 pi (k + 1/2)/d)` modulo `2 pi`.
pub fn bin_to_wedges(frame: &PolarFrame, dim: Dimension) -> Result<Vec<f64>> {
    if frame.samples.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let d = dim.size();
    let width = 2.0 * PI / d as f64;
    let mut bins = vec![0.0; d];
    let wedge_of = |x: f64| -> usize { dim.angle_slot((x / width + 0.5).floor() as i64) };
    for (x0, y0, x1, y1) in segments(&frame.samples) {
        let slope = (y1 - y0) / (x1 - x0);
        let at = |x: f64| y0 + slope * (x - x0);
        // boundaries strictly inside the segment
        let mut cuts = vec![x0];
        let mut j = (x0 / width - 0.5).floor() as i64 + 1;
        loop {
            let b = (j as f64 + 0.5) * width;
            if b >= x1 {
                break;
            }
            if b > x0 {
                cuts.push(b);
            }
            j += 1;
        }
        cuts.push(x1);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b > a {
                bins[wedge_of(0.5 * (a + b))] += 0.5 * (at(a) + at(b)) * (b - a);
            }
        }
    }
    Ok(bins)
}

pub fn parse_frame_csv(text: &str) -> Result<PolarFrame> {
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (a, b) = (parts.next(), parts.next());
        let (Some(a), Some(b), None) = (a, b, parts.next()) else {
            return Err(Error::Schema(format!(
                "line {}: expected angle,intensity",
                i + 1
            )));
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(a), Ok(b)) => samples.push((a, b)),
            // header line
            _ if samples.is_empty() && i == 0 => continue,
            _ => return Err(Error::Schema(format!("line {}: not numeric", i + 1))),
        }
    }
    PolarFrame::new(samples)
}

pub fn frame_to_csv(frame: &PolarFrame) -> String {
    let mut out = String::from("angle,intensity\n");
    for (a, i) in &frame.samples {
        out.push_str(&format!("{},{}\n", fmt_f64(*a), fmt_f64(*i)));
    }
    out
}

// ---------------------------------------------------------------------------
// PGM images

#[derive(Clone, Debug, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major, top row first.
    pub pixels: Vec<u16>,
}

impl PgmImage {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x] as f64
    }

    /// Bilinear sample at fractional pixel coordinates.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = (x.floor().max(0.0) as usize).min(self.width - 1);
        let y0 = (y.floor().max(0.0) as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64).clamp(0.0, 1.0);
        let fy = (y - y0 as f64).clamp(0.0, 1.0);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Binary (P5) encoding; 16-bit big-endian samples when `maxval > 255`.
    pub fn to_p5(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        for &p in &self.pixels {
            if self.maxval > 255 {
                out.extend_from_slice(&p.to_be_bytes());
            } else {
                out.push(p as u8);
            }
        }
        out
    }

    pub fn to_p2(&self) -> Vec<u8> {
        let mut out = format!("P2\n{} {}\n{}\n", self.width, self.height, self.maxval);
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.into_bytes()
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn token(&mut self) -> Result<&str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::PgmFormat("unexpected end of data".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::PgmFormat("non-ASCII header".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| Error::PgmFormat(format!("bad {what}: {t:?}")))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let mut r = HeaderReader { bytes, pos: 0 };
    let magic = r.token()?.to_owned();
    if magic != "P2" && magic != "P5" {
        return Err(Error::PgmFormat(format!("unsupported magic {magic:?}")));
    }
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::PgmFormat("empty image".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::PgmFormat(format!(
            "maxval {maxval} outside 1..=65535"
        )));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::PgmFormat("image too large".into()))?;
    let mut pixels = Vec::with_capacity(count);
    if magic == "P2" {
        for _ in 0..count {
            let v = r.number("pixel")?;
            if v > maxval {
                return Err(Error::PgmFormat(format!("pixel {v} exceeds maxval")));
            }
            pixels.push(v as u16);
        }
    } else {
        // exactly one whitespace byte separates the header from the raster
        let start = r.pos + 1;
        let bpp = if maxval > 255 { 2 } else { 1 };
        let need = count * bpp;
        if bytes.len() < start + need {
            return Err(Error::PgmFormat(format!(
                "raster truncated: need {need} bytes, have {}",
                bytes.len().saturating_sub(start)
            )));
        }
        let raster = &bytes[start..start + need];
        for chunk in raster.chunks(bpp) {
            let v = if bpp == 2 {
                u16::from_be_bytes([chunk[0], chunk[1]])
            } else {
                chunk[0] as u16
            };
            if v as usize > maxval {
                return Err(Error::PgmFormat(format!("pixel {v} exceeds maxval")));
            }
            pixels.push(v);
        }
    }
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

/// Annulus geometry for camera frames, stored next to the image as JSON.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgmSidecar {
    pub cx: f64,
    pub cy: f64,
    pub r_min: f64,
    pub r_max: f64,
}

pub fn parse_sidecar(text: &str) -> Result<PgmSidecar> {
    serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
}

/// Azimuthal profile of an image: for each of `samples` angles, the mean
/// bilinear pixel value along the ray from `r_min` to `r_max`. Angles are
/// counter-clockwise from the +x axis with image rows running downward.
pub fn load_pgm_frame(
    bytes: &[u8],
    center: (f64, f64),
    r_min: f64,
    r_max: f64,
    samples: usize,
) -> Result<PolarFrame> {
    let img = parse_pgm(bytes)?;
    let (cx, cy) = center;
    if !(r_min > 0.0 && r_min < r_max) {
        return Err(Error::Geometry(format!(
            "need 0 < r_min < r_max, got {r_min}, {r_max}"
        )));
    }
    if cx - r_max < 0.0
        || cy - r_max < 0.0
        || cx + r_max > (img.width - 1) as f64
        || cy + r_max > (img.height - 1) as f64
    {
        return Err(Error::Geometry(format!(
            "annulus (center {cx}, {cy}; r_max {r_max}) exceeds {}x{} image",
            img.width, img.height
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let radial = ((r_max - r_min).ceil() as usize + 1).max(2);
    let points = (0..samples)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / samples as f64;
            let (s, c) = phi.sin_cos();
            let mean = (0..radial)
                .map(|j| {
                    let r = r_min + (r_max - r_min) * j as f64 / (radial - 1) as f64;
                    img.bilinear(cx + r * c, cy - r * s)
                })
                .sum::<f64>()
                / radial as f64;
            (phi, mean)
        })
        .collect();
    PolarFrame::new(points)
}

// ---------------------------------------------------------------------------
// CSV grids

/// 17 significant digits: lossless for f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

fn labels_header(corner: &str, dim: Dimension) -> String {
    let mut s = corner.to_owned();
    for l in dim.labels() {
        s.push(',');
        s.push_str(&l.to_string());
    }
    s.push('\n');
    s
}

pub fn matrix_to_csv(m: &DensityMatrix, part: Part) -> String {
    let dim = m.dim();
    let mut out = labels_header(m.basis().label(), dim);
    for (i, a) in dim.labels().enumerate() {
        out.push_str(&a.to_string());
        for j in 0..dim.size() {
            let z = m.entries()[(i, j)];
            out.push(',');
            out.push_str(&fmt_f64(if part == Part::Re { z.re } else { z.im }));
        }
        out.push('\n');
    }
    out
}

/// Parses a labelled square table; returns the corner label and values.
fn parse_table(text: &str) -> Result<(String, Dimension, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema("empty CSV".into()))?;
    let mut head = header.split(',').map(str::trim);
    let corner = head.next().unwrap_or_default().to_owned();
    let cols: Vec<i64> = head
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Schema(format!("bad column label {t:?}")))
        })
        .collect::<Result<_>>()?;
    let dim = Dimension::from_size(cols.len())?;
    if !cols.iter().copied().eq(dim.labels()) {
        return Err(Error::Schema("column labels must run -N..N".into()));
    }
    let mut values = Vec::with_capacity(cols.len() * cols.len());
    let mut rows = 0;
    for (line, expect) in lines.zip(dim.labels()) {
        let mut cells = line.split(',').map(str::trim);
        let label: i64 = cells
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Schema(format!("bad row label in {line:?}")))?;
        if label != expect {
            return Err(Error::Schema(format!(
                "row label {label}, expected {expect}"
            )));
        }
        let row: Vec<f64> = cells
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Schema(format!("bad number {t:?}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != cols.len() {
            return Err(Error::Schema(format!(
                "row {label} has {} values",
                row.len()
            )));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != cols.len() {
        return Err(Error::Schema(format!(
            "expected {} rows, found {rows}",
            cols.len()
        )));
    }
    Ok((corner, dim, values))
}

pub fn matrix_from_csv(re_text: &str, im_text: &str) -> Result<DensityMatrix> {
    let (corner, dim, re) = parse_table(re_text)?;
    let (corner_im, dim_im, im) = parse_table(im_text)?;
    if dim != dim_im || corner != corner_im {
        return Err(Error::Schema("real and imaginary tables disagree".into()));
    }
    let basis = match corner.as_str() {
        "l" => Basis::Oam,
        "theta" => Basis::Ang,
        "Theta" => Basis::Wedge,
        other => return Err(Error::Schema(format!("unknown basis label {other:?}"))),
    };
    let d = dim.size();
    let m = CMatrix::from_fn(d, d, |i, j| Complex64::new(re[i * d + j], im[i * d + j]));
    DensityMatrix::new(dim, basis, m)
}

const WIGNER_CORNER: &str = "theta\\l";

pub fn wigner_to_csv(w: &WignerGrid) -> String {
    let dim = w.dim();
    let d = dim.size();
    let mut out = labels_header(WIGNER_CORNER, dim);
    for (i, theta) in dim.labels().enumerate() {
        out.push_str(&theta.to_string());
        for v in &w.values()[i * d..(i + 1) * d] {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn wigner_from_csv(text: &str) -> Result<WignerGrid> {
    let (corner, dim, values) = parse_table(text)?;
    if corner != WIGNER_CORNER {
        return Err(Error::Schema(format!(
            "expected corner label {WIGNER_CORNER:?}"
        )));
    }
    WignerGrid::new(dim, values)
}

/// Cell size of the heatmap, in pixels.
pub const HEATMAP_CELL: usize = 16;

/// 8-bit heatmap, rows `theta = -N..N` top to bottom, columns `l = -N..N`,
/// with `[min W, max W]` mapped affinely onto `[0, 255]`.
pub fn wigner_heatmap(w: &WignerGrid) -> PgmImage {
    let d = w.dim().size();
    let (lo, hi) = (w.min(), w.max());
    let span = hi - lo;
    let size = d * HEATMAP_CELL;
    let pixels = (0..size * size)
        .map(|p| {
            let (y, x) = (p / size, p % size);
            let v = w.values()[(y / HEATMAP_CELL) * d + x / HEATMAP_CELL];
            if span > 0.0 {
                (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u16
            } else {
                0
            }
        })
        .collect();
    PgmImage {
        width: size,
        height: size,
        maxval: 255,
        pixels,
    }
}

// ---------------------------------------------------------------------------
// Run outputs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub tau: i64,
    pub axis: Axis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub d: usize,
    pub seed: Option<u64>,
    pub photons: f64,
    pub plan: Vec<PlanEntry>,
    pub method: String,
    pub noise: bool,
}

/// Experimental values for the same states, carried for comparison only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabReference {
    pub coherence_pure: f64,
    pub coherence_mixed: f64,
    pub eigenstate_fidelity: f64,
}

impl Default for LabReference {
    fn default() -> Self {
        LabReference {
            coherence_pure: 0.80,
            coherence_mixed: 0.06,
            eigenstate_fidelity: 0.90,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub quality: QualityReport,
    /// Sign convention of the pointer evolution.
    pub pointer_evolution: String,
    pub warnings: Vec<String>,
    pub provenance: Option<Provenance>,
    pub lab_reference: LabReference,
}

impl RunReport {
    pub fn new(
        quality: QualityReport,
        warnings: Vec<String>,
        provenance: Option<Provenance>,
    ) -> Self {
        RunReport {
            quality,
            pointer_evolution: "U Omega U^dagger".into(),
            warnings,
            provenance,
            lab_reference: LabReference::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapInfo {
    pub path: String,
    pub w_min: f64,
    pub w_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    pub heatmap: Option<HeatmapInfo>,
}

/// Accumulates files in memory and writes them, plus `manifest.json`, in
/// one pass at the end.
#[derive(Default)]
pub struct OutputBundle {
    files: Vec<(String, Vec<u8>)>,
    heatmap: Option<HeatmapInfo>,
}

impl OutputBundle {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_owned(), bytes));
    }

    pub fn add_matrix(&mut self, stem: &str, m: &DensityMatrix) {
        self.add(
            &format!("{stem}_re.csv"),
            matrix_to_csv(m, Part::Re).into_bytes(),
        );
        self.add(
            &format!("{stem}_im.csv"),
            matrix_to_csv(m, Part::Im).into_bytes(),
        );
    }

    pub fn add_wigner(&mut self, w: &WignerGrid) {
        self.add("wigner.csv", wigner_to_csv(w).into_bytes());
        self.add("wigner.pgm", wigner_heatmap(w).to_p5());
        self.heatmap = Some(HeatmapInfo {
            path: "wigner.pgm".into(),
            w_min: w.min(),
            w_max: w.max(),
        });
    }

    pub fn write(self, dir: &Path) -> Result<Manifest> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
            entries.push(ManifestEntry {
                path: name.clone(),
                sha256: hex::encode(Sha256::digest(bytes)),
                bytes: bytes.len(),
            });
        }
        let manifest = Manifest {
            files: entries,
            heatmap: self.heatmap,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("plain data serializes");
        fs::write(dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

/// Writes the standard run bundle: ANG and OAM matrices (real and imaginary
/// CSVs), the Wigner grid, the report, and the heatmap.
pub fn write_outputs(
    ang: &DensityMatrix,
    oam: &DensityMatrix,
    w: &WignerGrid,
    report: &RunReport,
    dir: &Path,
) -> Result<Manifest> {
    let mut bundle = OutputBundle::default();
    bundle.add_matrix("rho_ang", ang);
    bundle.add_matrix("rho_oam", oam);
    bundle.add_wigner(w);
    bundle.add(
        "report.json",
        serde_json::to_string_pretty(report)
            .expect("plain data serializes")
            .into_bytes(),
    );
    bundle.write(dir)
}

/// `<prefix>_re.csv`, `<prefix>_im.csv`.
pub fn matrix_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let s = prefix.as_os_str().to_string_lossy();
    (
        PathBuf::from(format!("{s}_re.csv")),
        PathBuf::from(format!("{s}_im.csv")),
    )
}
