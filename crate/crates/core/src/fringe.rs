//! Analytic detection-probability models for a pixelated detector array
//! illuminated by two interfering modes.
//!
//! Every pixel `i` is summarised by two core integrals over its active width:
//! the envelope weight `E_i = ⟨env⟩` and the fringe phasor
//! `Z_i = ⟨env(x)·exp(i f x)⟩` (both taken as means over the core). The
//! single-photon law, the classical product law and the N00N law are all
//! built from these two numbers, so finite pixel cores enter every model the
//! same way.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Largest joint tensor (`D^N` entries) that is ever enumerated.
pub const ENUMERATION_BOUND: usize = 2_000_000;

/// Transverse intensity profile of the two overlapping beams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    Uniform,
    Gaussian { center: f64, sigma: f64 },
}

impl Envelope {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Envelope::Uniform => 1.0,
            Envelope::Gaussian { center, sigma } => {
                let u = (x - center) / sigma;
                (-0.5 * u * u).exp()
            }
        }
    }
}

/// Continuous physics of the interference pattern.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FringeConfig {
    /// Wavelength in meters.
    pub wavelength: f64,
    /// Full angle between the two modes, radians.
    pub angle: f64,
    /// Global fringe phase, radians.
    pub phase0: f64,
    /// Visibility of the single-photon fringe (mode-overlap quality).
    pub singles_visibility: f64,
    pub envelope: Envelope,
}

impl FringeConfig {
    pub fn new(wavelength: f64, angle: f64) -> Result<Self> {
        let cfg = FringeConfig {
            wavelength,
            angle,
            phase0: 0.0,
            singles_visibility: 1.0,
            envelope: Envelope::Uniform,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Chooses the interference angle that produces a single-photon fringe
    /// period of `period` meters at the given wavelength.
    pub fn with_period(wavelength: f64, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid("period", "must be positive"));
        }
        let s = wavelength / (2.0 * period);
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid(
                "period",
                "shorter than half a wavelength, not reachable classically",
            ));
        }
        FringeConfig::new(wavelength, 2.0 * s.asin())
    }

    pub fn phase(mut self, phase0: f64) -> Self {
        self.phase0 = phase0;
        self
    }

    pub fn visibility(mut self, v: f64) -> Self {
        self.singles_visibility = v;
        self
    }

    pub fn envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = envelope;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::invalid("wavelength", "must be positive"));
        }
        if !(self.angle > 0.0 && self.angle < PI) {
            return Err(Error::invalid("angle", "must lie in (0, pi)"));
        }
        if !self.phase0.is_finite() {
            return Err(Error::invalid("phase0", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.singles_visibility) {
            return Err(Error::invalid("singles_visibility", "must lie in [0, 1]"));
        }
        if let Envelope::Gaussian { center, sigma } = self.envelope {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::invalid("envelope.sigma", "must be positive"));
            }
            if !center.is_finite() {
                return Err(Error::invalid("envelope.center", "must be finite"));
            }
        }
        Ok(())
    }

    /// Spatial frequency `f = 4π sin(θ/2) / λ` of the single-photon fringe.
    pub fn spatial_frequency(&self) -> f64 {
        4.0 * PI * (0.5 * self.angle).sin() / self.wavelength
    }

    /// Single-photon fringe period `λ / (2 sin(θ/2))`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.spatial_frequency()
    }

    /// Period of the N-photon fringe, `λ / (2N sin(θ/2))`.
    pub fn noon_period(&self, photon_number: usize) -> f64 {
        self.period() / photon_number as f64
    }
}

/// Discretisation of the detection plane into a linear pixel array.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrayGeometry {
    pub pixel_count: usize,
    /// Center-to-center spacing, meters.
    pub pitch: f64,
    /// Active width of each pixel, meters.
    pub core_width: f64,
    /// Position of the center of pixel 0, meters.
    pub origin: f64,
}

impl ArrayGeometry {
    pub fn new(pixel_count: usize, pitch: f64, core_width: f64) -> Result<Self> {
        let g = ArrayGeometry {
            pixel_count,
            pitch,
            core_width,
            origin: 0.0,
        };
        g.validate()?;
        Ok(g)
    }

    /// The 11-fiber ribbon: 250 µm pitch, 62.5 µm cores.
    pub fn fiber_ribbon() -> Self {
        ArrayGeometry {
            pixel_count: 11,
            pitch: 250e-6,
            core_width: 62.5e-6,
            origin: 0.0,
        }
    }

    pub fn with_origin(mut self, origin: f64) -> Self {
        self.origin = origin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixel_count < 2 {
            return Err(Error::invalid("pixel_count", "need at least two pixels"));
        }
        if self.pixel_count > u16::MAX as usize {
            return Err(Error::invalid("pixel_count", "too many pixels"));
        }
        if !(self.pitch.is_finite() && self.pitch > 0.0) {
            return Err(Error::invalid("pitch", "must be positive"));
        }
        if !(self.core_width > 0.0 && self.core_width <= self.pitch) {
            return Err(Error::invalid("core_width", "must lie in (0, pitch]"));
        }
        if !self.origin.is_finite() {
            return Err(Error::invalid("origin", "must be finite"));
        }
        Ok(())
    }

    pub fn fill_factor(&self) -> f64 {
        self.core_width / self.pitch
    }

    pub fn pixel_center(&self, i: usize) -> f64 {
        self.origin + self.pitch * i as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    Classical,
    IdealNoon,
    Mixed,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Classical => "classical",
            SourceKind::IdealNoon => "noon",
            SourceKind::Mixed => "mixed",
        }
    }
}

/// Light source feeding the array.
///
/// `Mixed` is a convex mixture: each N-fold event is an uncorrelated
/// accidental (classical statistics) with probability `background_fraction`
/// and a N00N event otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceModel {
    pub kind: SourceKind,
    pub photon_number: usize,
    pub background_fraction: f64,
}

impl SourceModel {
    pub fn classical(photon_number: usize) -> Result<Self> {
        Self::build(SourceKind::Classical, photon_number, 0.0)
    }

    pub fn ideal_noon(photon_number: usize) -> Result<Self> {
        Self::build(SourceKind::IdealNoon, photon_number, 0.0)
    }

    pub fn mixed(photon_number: usize, background_fraction: f64) -> Result<Self> {
        Self::build(SourceKind::Mixed, photon_number, background_fraction)
    }

    fn build(kind: SourceKind, photon_number: usize, background_fraction: f64) -> Result<Self> {
        let s = SourceModel {
            kind,
            photon_number,
            background_fraction,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.photon_number == 0 {
            return Err(Error::invalid("photon_number", "must be at least 1"));
        }
        match self.kind {
            SourceKind::Classical => {}
            SourceKind::IdealNoon | SourceKind::Mixed => {
                if self.photon_number < 2 {
                    return Err(Error::invalid(
                        "photon_number",
                        "an entangled source needs at least 2 photons",
                    ));
                }
            }
        }
        match self.kind {
            SourceKind::Classical | SourceKind::IdealNoon => {
                if self.background_fraction != 0.0 {
                    return Err(Error::invalid(
                        "background_fraction",
                        "only a mixed source carries a background",
                    ));
                }
            }
            SourceKind::Mixed => {
                if !(0.0..=1.0).contains(&self.background_fraction) {
                    return Err(Error::invalid("background_fraction", "must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// Per-pixel core integrals, normalised to the core width.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelResponse {
    /// Mean envelope over each core.
    pub weight: Vec<f64>,
    /// Mean of `env(x)·exp(i f x)` over each core.
    pub phasor: Vec<Complex64>,
}

fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

pub fn pixel_response(cfg: &FringeConfig, geom: &ArrayGeometry) -> Result<PixelResponse> {
    cfg.validate()?;
    geom.validate()?;
    let f = cfg.spatial_frequency();
    let w = geom.core_width;
    let d = geom.pixel_count;
    let mut weight = Vec::with_capacity(d);
    let mut phasor = Vec::with_capacity(d);
    match cfg.envelope {
        Envelope::Uniform => {
            let atten = sinc(0.5 * f * w);
            for i in 0..d {
                let x = geom.pixel_center(i);
                weight.push(1.0);
                phasor.push(Complex64::from_polar(atten, f * x));
            }
        }
        Envelope::Gaussian { sigma, .. } => {
            let scale = sigma.min(2.0 * PI / f);
            let pieces = ((4.0 * w / scale).ceil() as usize).max(1);
            for i in 0..d {
                let x0 = geom.pixel_center(i) - 0.5 * w;
                let (e, z) = core_mean(&cfg.envelope, f, x0, w, pieces);
                weight.push(e);
                phasor.push(z);
            }
        }
    }
    Ok(PixelResponse { weight, phasor })
}

// 16-point Gauss-Legendre nodes and weights on [-1, 1] (positive half).
const GL_NODES: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_8,
    0.062_253_523_938_647_9,
    0.027_152_459_411_754_1,
];

fn core_mean(env: &Envelope, f: f64, start: f64, width: f64, pieces: usize) -> (f64, Complex64) {
    let h = width / pieces as f64;
    let mut e = 0.0;
    let mut z = Complex64::new(0.0, 0.0);
    for p in 0..pieces {
        let mid = start + (p as f64 + 0.5) * h;
        for (node, wt) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            for x in [mid - 0.5 * h * node, mid + 0.5 * h * node] {
                let g = env.value(x) * wt * 0.5;
                e += g;
                z += Complex64::from_polar(g, f * x);
            }
        }
    }
    (e / pieces as f64, z / pieces as f64)
}

/// Normalised single-photon detection probability per pixel,
/// `p1[i] ∝ ∫_core env(x)(1 + V1 cos(f x + φ0)) dx`.
pub fn singles_distribution(cfg: &FringeConfig, geom: &ArrayGeometry) -> Result<Vec<f64>> {
    let resp = pixel_response(cfg, geom)?;
    singles_from_response(&resp, cfg)
}

pub(crate) fn singles_from_response(resp: &PixelResponse, cfg: &FringeConfig) -> Result<Vec<f64>> {
    let rot = Complex64::from_polar(cfg.singles_visibility, cfg.phase0);
    let raw: Vec<f64> = resp
        .weight
        .iter()
        .zip(&resp.phasor)
        .map(|(&e, &z)| (e + (rot * z).re).max(0.0))
        .collect();
    normalize(raw)
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = v.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::EnvelopeOffArray);
    }
    v.iter_mut().for_each(|p| *p /= total);
    Ok(v)
}

/// Probability tensor over ordered pixel tuples `(i_1, …, i_N)`, stored
/// row-major with `i_1` most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    photon_number: usize,
    pixel_count: usize,
    probs: Vec<f64>,
}

pub(crate) fn tensor_len(pixel_count: usize, photon_number: usize) -> Result<usize> {
    let entries = (pixel_count as u128).pow(photon_number as u32);
    if entries > ENUMERATION_BOUND as u128 {
        return Err(Error::EnumerationBound {
            entries,
            bound: ENUMERATION_BOUND,
        });
    }
    Ok(entries as usize)
}

impl JointDistribution {
    pub fn from_probs(photon_number: usize, pixel_count: usize, probs: Vec<f64>) -> Result<Self> {
        let len = tensor_len(pixel_count, photon_number)?;
        if probs.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for D = {pixel_count}, N = {photon_number} (expected {len})",
                probs.len()
            )));
        }
        Ok(JointDistribution {
            photon_number,
            pixel_count,
            probs,
        })
    }

    pub fn photon_number(&self) -> usize {
        self.photon_number
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn index_of(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.photon_number);
        tuple.iter().fold(0, |acc, &i| acc * self.pixel_count + i)
    }

    pub fn get(&self, tuple: &[usize]) -> f64 {
        self.probs[self.index_of(tuple)]
    }

    /// Writes the pixel tuple for a flat index into `out`.
    pub fn tuple_of(&self, mut index: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = index % self.pixel_count;
            index /= self.pixel_count;
        }
    }
}

/// Builds the joint detection tensor for `src`.
pub fn joint_distribution(
    src: &SourceModel,
    cfg: &FringeConfig,
    geom: &ArrayGeometry,
) -> Result<JointDistribution> {
    joint_distribution_with(src, cfg, geom, Execution::default())
}

pub fn joint_distribution_with(
    src: &SourceModel,
    cfg: &FringeConfig,
    geom: &ArrayGeometry,
    exec: Execution,
) -> Result<JointDistribution> {
    src.validate()?;
    let len = tensor_len(geom.pixel_count, src.photon_number)?;
    let resp = pixel_response(cfg, geom)?;
    let n = src.photon_number;
    let d = geom.pixel_count;
    let probs = match src.kind {
        SourceKind::Classical => {
            classical_tensor(&singles_from_response(&resp, cfg)?, n, len, exec)
        }
        SourceKind::IdealNoon => noon_tensor(&resp, cfg, n, len, exec)?,
        SourceKind::Mixed => {
            let eps = src.background_fraction;
            let mut noon = noon_tensor(&resp, cfg, n, len, exec)?;
            let classical = classical_tensor(&singles_from_response(&resp, cfg)?, n, len, exec);
            noon.iter_mut()
                .zip(&classical)
                .for_each(|(q, c)| *q = (1.0 - eps) * *q + eps * c);
            noon
        }
    };
    JointDistribution::from_probs(n, d, probs)
}

const TENSOR_CHUNK: usize = 1 << 14;

fn classical_tensor(p1: &[f64], n: usize, len: usize, exec: Execution) -> Vec<f64> {
    let d = p1.len();
    let mut out = vec![0.0; len];
    exec.for_each_chunk(&mut out, TENSOR_CHUNK, |offset, chunk| {
        for (k, slot) in chunk.iter_mut().enumerate() {
            let mut idx = offset + k;
            let mut prod = 1.0;
            for _ in 0..n {
                prod *= p1[idx % d];
                idx /= d;
            }
            *slot = prod;
        }
    });
    out
}

fn noon_tensor(
    resp: &PixelResponse,
    cfg: &FringeConfig,
    n: usize,
    len: usize,
    exec: Execution,
) -> Result<Vec<f64>> {
    let d = resp.weight.len();
    let rot = Complex64::from_polar(cfg.singles_visibility.powi(n as i32), n as f64 * cfg.phase0);
    let mut out = vec![0.0; len];
    exec.for_each_chunk(&mut out, TENSOR_CHUNK, |offset, chunk| {
        for (k, slot) in chunk.iter_mut().enumerate() {
            let mut idx = offset + k;
            let mut e = 1.0;
            let mut z = rot;
            for _ in 0..n {
                let i = idx % d;
                e *= resp.weight[i];
                z *= resp.phasor[i];
                idx /= d;
            }
            *slot = (e + z.re).max(0.0);
        }
    });
    let total: f64 = out.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::EnvelopeOffArray);
    }
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}
