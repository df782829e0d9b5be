//! Monte Carlo generation of detection events.
//!
//! The pulse train is modelled as a Bernoulli process: each laser pulse
//! carries one generated N-photon event with probability
//! `event_probability`, so event pulses are separated by geometric gaps.
//! Each photon of an event is then detected with probability `η`, and a
//! non-number-resolving array drops events with two photons on one pixel.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`). Work is split
//! into fixed-size shards; shard `k` uses `seed_from_u64(rng_seed)` with
//! stream number `k`, so output is identical for sequential and parallel
//! execution and across platforms.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fringe::{
    joint_distribution_with, singles_distribution, ArrayGeometry, FringeConfig, SourceKind,
    SourceModel,
};
use crate::ocm::DetectionEvent;

/// Default per-pulse probability of generating an N-photon event.
pub const DEFAULT_EVENT_PROBABILITY: f64 = 1e-4;

const EVENTS_PER_SHARD: u64 = 1 << 15;
const PULSES_PER_SHARD: u64 = 1 << 24;
const CALIBRATION_STREAM_BASE: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorModel {
    /// Per-photon detection efficiency η.
    pub efficiency: f64,
    /// When false, two photons on one pixel cannot both be registered.
    pub number_resolving: bool,
    /// Expected dark counts per pixel per pulse.
    pub dark_rate: f64,
}

impl DetectorModel {
    pub fn ideal() -> Self {
        DetectorModel {
            efficiency: 1.0,
            number_resolving: true,
            dark_rate: 0.0,
        }
    }

    /// Threshold (click / no-click) detectors with efficiency `efficiency`.
    pub fn threshold(efficiency: f64) -> Self {
        DetectorModel {
            efficiency,
            number_resolving: false,
            dark_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("detector.efficiency", "must lie in [0, 1]"));
        }
        if !(self.dark_rate.is_finite() && (0.0..1.0).contains(&self.dark_rate)) {
            return Err(Error::invalid("detector.dark_rate", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exposure {
    /// Simulate this many laser pulses.
    Pulses(u64),
    /// Simulate until this many N-photon events have been generated.
    Events(u64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimRun {
    pub source: SourceModel,
    pub fringe: FringeConfig,
    pub geometry: ArrayGeometry,
    pub detector: DetectorModel,
    pub exposure: Exposure,
    pub event_probability: f64,
    /// Also emit partially detected events (fewer than N photons).
    pub emit_partial: bool,
    pub rng_seed: u64,
}

impl SimRun {
    pub fn new(
        source: SourceModel,
        fringe: FringeConfig,
        geometry: ArrayGeometry,
        exposure: Exposure,
        rng_seed: u64,
    ) -> Self {
        SimRun {
            source,
            fringe,
            geometry,
            detector: DetectorModel::ideal(),
            exposure,
            event_probability: DEFAULT_EVENT_PROBABILITY,
            emit_partial: false,
            rng_seed,
        }
    }

    pub fn detector(mut self, detector: DetectorModel) -> Self {
        self.detector = detector;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.fringe.validate()?;
        self.geometry.validate()?;
        self.detector.validate()?;
        match self.exposure {
            Exposure::Pulses(0) => return Err(Error::invalid("n_pulses", "must be positive")),
            Exposure::Events(0) => return Err(Error::invalid("n_events", "must be positive")),
            _ => {}
        }
        if !(self.event_probability > 0.0 && self.event_probability <= 1.0) {
            return Err(Error::invalid("event_probability", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Loss accounting for one simulation.
///
/// `generated = detected + dropped_same_pixel + dropped_inefficiency +
/// dropped_dark_contaminated`. Dark-only coincidences are counted apart.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimReport {
    pub pulses: u64,
    pub generated: u64,
    pub detected: u64,
    pub dropped_same_pixel: u64,
    pub dropped_inefficiency: u64,
    pub dropped_dark_contaminated: u64,
    pub background_generated: u64,
    pub background_detected: u64,
    pub partial_emitted: u64,
    pub dark_events: u64,
    pub dark_only_pulses: u64,
}

impl SimReport {
    fn absorb(&mut self, o: &SimReport) {
        self.pulses += o.pulses;
        self.generated += o.generated;
        self.detected += o.detected;
        self.dropped_same_pixel += o.dropped_same_pixel;
        self.dropped_inefficiency += o.dropped_inefficiency;
        self.dropped_dark_contaminated += o.dropped_dark_contaminated;
        self.background_generated += o.background_generated;
        self.background_detected += o.background_detected;
        self.partial_emitted += o.partial_emitted;
        self.dark_events += o.dark_events;
        self.dark_only_pulses += o.dark_only_pulses;
    }

    pub fn is_consistent(&self) -> bool {
        self.generated
            == self.detected
                + self.dropped_same_pixel
                + self.dropped_inefficiency
                + self.dropped_dark_contaminated
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in [
            ("pulses", self.pulses),
            ("generated", self.generated),
            ("detected", self.detected),
            ("dropped_same_pixel", self.dropped_same_pixel),
            ("dropped_inefficiency", self.dropped_inefficiency),
            ("dropped_dark_contaminated", self.dropped_dark_contaminated),
            ("background_generated", self.background_generated),
            ("background_detected", self.background_detected),
            ("partial_emitted", self.partial_emitted),
            ("dark_events", self.dark_events),
            ("dark_only_pulses", self.dark_only_pulses),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimOutput {
    /// N-fold events, ordered by pulse.
    pub events: Vec<DetectionEvent>,
    /// Lower-order events (only when `emit_partial` is set).
    pub partial_events: Vec<DetectionEvent>,
    pub report: SimReport,
}

enum Draw {
    /// N independent draws from one per-pixel table.
    Independent(Vec<f64>),
    /// One draw from the full `D^N` table.
    Table(Vec<f64>),
}

struct Sampler {
    n: usize,
    d: usize,
    signal: Draw,
    background: Option<(f64, Vec<f64>)>,
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cdf.last().unwrap();
    let u = rng.gen::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

impl Sampler {
    fn new(run: &SimRun, exec: Execution) -> Result<Self> {
        let n = run.source.photon_number;
        let d = run.geometry.pixel_count;
        let p1 = singles_distribution(&run.fringe, &run.geometry)?;
        let noon_table = || -> Result<Vec<f64>> {
            let src = SourceModel::ideal_noon(n)?;
            let joint = joint_distribution_with(&src, &run.fringe, &run.geometry, exec)?;
            Ok(cumulative(joint.probs()))
        };
        let (signal, background) = match run.source.kind {
            SourceKind::Classical => (Draw::Independent(cumulative(&p1)), None),
            SourceKind::IdealNoon => (Draw::Table(noon_table()?), None),
            SourceKind::Mixed => (
                Draw::Table(noon_table()?),
                Some((run.source.background_fraction, cumulative(&p1))),
            ),
        };
        Ok(Sampler {
            n,
            d,
            signal,
            background,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut SmallVec<[u16; 8]>) -> bool {
        out.clear();
        if let Some((eps, cdf)) = &self.background {
            if rng.gen::<f64>() < *eps {
                for _ in 0..self.n {
                    out.push(pick(cdf, rng) as u16);
                }
                return true;
            }
        }
        match &self.signal {
            Draw::Independent(cdf) => {
                for _ in 0..self.n {
                    out.push(pick(cdf, rng) as u16);
                }
            }
            Draw::Table(cdf) => {
                let mut idx = pick(cdf, rng);
                for _ in 0..self.n {
                    out.push((idx % self.d) as u16);
                    idx /= self.d;
                }
            }
        }
        false
    }
}

#[derive(Default)]
struct Shard {
    events: Vec<DetectionEvent>,
    partial: Vec<DetectionEvent>,
    report: SimReport,
}

struct ShardSim<'a> {
    run: &'a SimRun,
    sampler: &'a Sampler,
    rng: ChaCha8Rng,
    gap: Geometric,
    dark_gap: Option<Geometric>,
    out: Shard,
}

impl<'a> ShardSim<'a> {
    fn new(run: &'a SimRun, sampler: &'a Sampler, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(run.rng_seed);
        rng.set_stream(stream);
        let d = run.geometry.pixel_count as i32;
        let dark = run.detector.dark_rate;
        let dark_gap = (dark > 0.0).then(|| {
            let q = 1.0 - (1.0 - dark).powi(d);
            Geometric::new(q).expect("dark pulse probability in (0, 1]")
        });
        ShardSim {
            run,
            sampler,
            rng,
            gap: Geometric::new(run.event_probability).expect("validated event probability"),
            dark_gap,
            out: Shard::default(),
        }
    }

    /// Pulse index of the next generated event at or after `cursor`.
    fn next_event_pulse(&mut self, cursor: u64) -> u64 {
        cursor.saturating_add(self.gap.sample(&mut self.rng))
    }

    /// Dark-only pulses in `[from, to)`.
    fn dark_span(&mut self, from: u64, to: u64) {
        let Some(gap) = self.dark_gap else { return };
        let mut pos = from.saturating_add(gap.sample(&mut self.rng));
        while pos < to {
            self.dark_pulse(pos);
            pos = pos
                .saturating_add(1)
                .saturating_add(gap.sample(&mut self.rng));
        }
    }

    fn dark_pulse(&mut self, pulse: u64) {
        let d = self.run.geometry.pixel_count;
        let dark = self.run.detector.dark_rate;
        let q = 1.0 - (1.0 - dark).powi(d as i32);
        // first firing pixel conditional on at least one firing
        let u: f64 = self.rng.gen();
        let first = (((1.0 - u * q).ln() / (1.0 - dark).ln()).floor() as usize).min(d - 1);
        let mut fired: SmallVec<[u16; 8]> = SmallVec::new();
        fired.push(first as u16);
        for p in first + 1..d {
            if self.rng.gen::<f64>() < dark {
                fired.push(p as u16);
            }
        }
        self.out.report.dark_only_pulses += 1;
        let n = self.sampler.n;
        if fired.len() == n {
            self.out.report.dark_events += 1;
            self.out.events.push(DetectionEvent::new(pulse, fired));
        } else if fired.len() < n && self.run.emit_partial {
            self.out.report.partial_emitted += 1;
            self.out.partial.push(DetectionEvent::new(pulse, fired));
        }
    }

    fn event_pulse(&mut self, pulse: u64, photons: &mut SmallVec<[u16; 8]>) {
        let det = self.run.detector;
        let n = self.sampler.n;
        let is_background = self.sampler.draw(&mut self.rng, photons);
        let report = &mut self.out.report;
        report.generated += 1;
        report.background_generated += is_background as u64;
        if det.efficiency < 1.0 {
            let rng = &mut self.rng;
            photons.retain(|_| rng.gen::<f64>() < det.efficiency);
        }
        photons.sort_unstable();
        let repeated = photons.windows(2).any(|w| w[0] == w[1]);
        let mut fired = photons.clone();
        if det.dark_rate > 0.0 {
            for p in 0..self.run.geometry.pixel_count as u16 {
                if self.rng.gen::<f64>() < det.dark_rate
                    && (det.number_resolving || !photons.contains(&p))
                {
                    fired.push(p);
                }
            }
        }
        let report = &mut self.out.report;
        let lost_to_resolution = repeated && !det.number_resolving;
        if photons.len() < n {
            report.dropped_inefficiency += 1;
            if self.run.emit_partial && !fired.is_empty() && !lost_to_resolution {
                report.partial_emitted += 1;
                self.out.partial.push(DetectionEvent::new(pulse, fired));
            }
        } else if lost_to_resolution {
            report.dropped_same_pixel += 1;
        } else if fired.len() > n {
            report.dropped_dark_contaminated += 1;
        } else {
            report.detected += 1;
            report.background_detected += is_background as u64;
            self.out.events.push(DetectionEvent::new(pulse, fired));
        }
    }

    /// Generates `count` events; returns the number of pulses consumed.
    fn run_events(&mut self, count: u64) -> u64 {
        let mut cursor = 0u64;
        let mut photons = SmallVec::new();
        for _ in 0..count {
            let pulse = self.next_event_pulse(cursor);
            self.dark_span(cursor, pulse);
            self.event_pulse(pulse, &mut photons);
            cursor = pulse + 1;
        }
        cursor
    }

    fn run_pulses(&mut self, start: u64, end: u64) {
        let mut cursor = start;
        let mut photons = SmallVec::new();
        loop {
            let pulse = self.next_event_pulse(cursor);
            if pulse >= end {
                self.dark_span(cursor, end);
                break;
            }
            self.dark_span(cursor, pulse);
            self.event_pulse(pulse, &mut photons);
            cursor = pulse + 1;
        }
    }
}

pub fn sample_events(run: &SimRun) -> Result<SimOutput> {
    sample_events_with(run, Execution::default())
}

pub fn sample_events_with(run: &SimRun, exec: Execution) -> Result<SimOutput> {
    run.validate()?;
    let sampler = Sampler::new(run, exec)?;
    let shards: Vec<Shard> = match run.exposure {
        Exposure::Events(total) => {
            let count = total.div_ceil(EVENTS_PER_SHARD);
            let mut shards = exec.map_range(count as usize, |k| {
                let k = k as u64;
                let n = EVENTS_PER_SHARD.min(total - k * EVENTS_PER_SHARD);
                let mut sim = ShardSim::new(run, &sampler, k);
                let span = sim.run_events(n);
                sim.out.report.pulses = span;
                sim.out
            });
            // shards were simulated on local pulse clocks; lay them end to end
            let mut offset = 0u64;
            for shard in shards.iter_mut() {
                for e in shard.events.iter_mut().chain(shard.partial.iter_mut()) {
                    e.pulse_id += offset;
                }
                offset += shard.report.pulses;
            }
            shards
        }
        Exposure::Pulses(total) => {
            let count = total.div_ceil(PULSES_PER_SHARD);
            exec.map_range(count as usize, |k| {
                let k = k as u64;
                let start = k * PULSES_PER_SHARD;
                let end = (start + PULSES_PER_SHARD).min(total);
                let mut sim = ShardSim::new(run, &sampler, k);
                sim.run_pulses(start, end);
                sim.out.report.pulses = end - start;
                sim.out
            })
        }
    };
    let mut out = SimOutput::default();
    out.events
        .reserve(shards.iter().map(|s| s.events.len()).sum());
    for shard in shards {
        out.report.absorb(&shard.report);
        out.events.extend(shard.events);
        out.partial_events.extend(shard.partial);
    }
    out.events.sort_by_key(|e| e.pulse_id);
    out.partial_events.sort_by_key(|e| e.pulse_id);
    Ok(out)
}

/// Light constituent isolated for a singles calibration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constituent {
    /// The whole classical beam (classical sources only).
    Classical,
    /// The uncorrelated background of a mixed source.
    Background,
    /// Detector dark counts, both beams blocked.
    Dark,
}

impl Constituent {
    fn name(self) -> &'static str {
        match self {
            Constituent::Classical => "classical",
            Constituent::Background => "background",
            Constituent::Dark => "dark",
        }
    }

    fn stream(self) -> u64 {
        CALIBRATION_STREAM_BASE
            + match self {
                Constituent::Classical => 0,
                Constituent::Background => 1,
                Constituent::Dark => 2,
            }
    }
}

/// Expected detected singles per pulse on each pixel from one constituent.
///
/// Uncorrelated light reaching N-fold coincidences at a per-pulse rate
/// `ρ` needs a total single-photon rate `R = ρ^(1/N)`; for a mixed source
/// the accidental rate is `ρ = ε·event_probability`, for a classical source
/// it is the full `event_probability`.
pub fn constituent_rates(run: &SimRun, constituent: Constituent) -> Result<Vec<f64>> {
    run.validate()?;
    let n = run.source.photon_number as f64;
    let d = run.geometry.pixel_count;
    let accidental_rate = match (constituent, run.source.kind) {
        (Constituent::Dark, _) => return Ok(vec![run.detector.dark_rate; d]),
        (Constituent::Classical, SourceKind::Classical) => run.event_probability,
        (Constituent::Background, SourceKind::Mixed) => {
            run.source.background_fraction * run.event_probability
        }
        (c, _) => return Err(Error::MissingConstituent(c.name())),
    };
    let total = run.detector.efficiency * accidental_rate.powf(1.0 / n);
    let p1 = singles_distribution(&run.fringe, &run.geometry)?;
    Ok(p1.into_iter().map(|p| total * p).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CalibrationExposure {
    Pulses(u64),
    /// Expose until this many photons are expected in total.
    Photons(f64),
}

/// Singles counts from one calibration exposure.
#[derive(Clone, Debug, PartialEq)]
pub struct SinglesCalibration {
    pub counts: Vec<u64>,
    pub pulses: f64,
}

impl SinglesCalibration {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-pulse singles rate on each pixel.
    pub fn rates(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| {
                if self.pulses > 0.0 {
                    c as f64 / self.pulses
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Poisson variance of each rate.
    pub fn rate_variances(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| {
                if self.pulses > 0.0 {
                    c as f64 / (self.pulses * self.pulses)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Measures per-pixel singles with all but one constituent blocked.
pub fn sample_singles_calibration(
    run: &SimRun,
    constituent: Constituent,
    exposure: CalibrationExposure,
) -> Result<SinglesCalibration> {
    let rates = constituent_rates(run, constituent)?;
    let per_pulse: f64 = rates.iter().sum();
    let pulses = match exposure {
        CalibrationExposure::Pulses(p) => p as f64,
        CalibrationExposure::Photons(k) => {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::invalid(
                    "exposure",
                    "photon count must be non-negative",
                ));
            }
            if k == 0.0 {
                0.0
            } else if per_pulse > 0.0 {
                k / per_pulse
            } else {
                return Err(Error::invalid(
                    "exposure",
                    "constituent produces no photons",
                ));
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(run.rng_seed);
    rng.set_stream(constituent.stream());
    let counts = rates
        .iter()
        .map(|&r| {
            let mean = r * pulses;
            if mean > 0.0 {
                Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64
            } else {
                0
            }
        })
        .collect();
    Ok(SinglesCalibration { counts, pulses })
}

/// One event per line: `pulse_id` then the sorted pixel indices.
pub fn events_to_delimited(events: &[DetectionEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 16);
    for e in events {
        let _ = write!(out, "{}", e.pulse_id);
        for p in e.pixels() {
            let _ = write!(out, "\t{p}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_events(text: &str) -> Result<Vec<DetectionEvent>> {
    let mut events = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(['\t', ',', ' ']).filter(|f| !f.is_empty());
        let pulse_id: u64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::parse(k + 1, "bad pulse id"))?;
        let pixels = fields
            .map(|f| f.parse::<u16>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(k + 1, "bad pixel index"))?;
        events.push(DetectionEvent::new(pulse_id, pixels));
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn uniform_run(n: usize, d: usize, events: u64) -> SimRun {
        let cfg = FringeConfig::with_period(1e-3, 5.0)
            .unwrap()
            .visibility(0.0);
        let geom = ArrayGeometry::new(d, 1.0, 1e-9).unwrap();
        SimRun::new(
            SourceModel::classical(n).unwrap(),
            cfg,
            geom,
            Exposure::Events(events),
            7,
        )
    }

    #[test]
    fn same_pixel_fraction_two_pixels() {
        let out = sample_events(&uniform_run(2, 2, 1_000_000)).unwrap();
        assert_eq!(out.events.len(), 1_000_000);
        let same = out.events.iter().filter(|e| e.has_repeat()).count() as f64 / 1e6;
        assert!((same - 0.5).abs() < 0.0015, "same-pixel fraction {same}");
        assert!(out.report.is_consistent());
    }

    #[test]
    fn zero_efficiency_detects_nothing() {
        let run = uniform_run(3, 11, 10_000).detector(DetectorModel::threshold(0.0));
        let out = sample_events(&run).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.report.dropped_inefficiency, 10_000);
        assert_eq!(out.report.generated, 10_000);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut run = uniform_run(3, 11, 100_000);
        run.detector = DetectorModel {
            efficiency: 0.6,
            number_resolving: false,
            dark_rate: 1e-3,
        };
        run.emit_partial = true;
        let a = sample_events(&run).unwrap();
        let b = sample_events(&run).unwrap();
        assert_eq!(a, b);
        let c = sample_events_with(&run, Execution::Sequential).unwrap();
        assert_eq!(a, c);
        run.rng_seed += 1;
        assert_ne!(sample_events(&run).unwrap().events, a.events);
    }

    #[test]
    fn threshold_detectors_never_emit_repeats() {
        let run = uniform_run(3, 11, 200_000).detector(DetectorModel::threshold(1.0));
        let out = sample_events(&run).unwrap();
        assert!(out.events.iter().all(|e| !e.has_repeat()));
        // P(all three distinct) = 10·9/121
        let kept = out.report.detected as f64 / 200_000.0;
        assert!((kept - 90.0 / 121.0).abs() < 4.0 * (kept * (1.0 - kept) / 2e5).sqrt());
        assert!(out.report.is_consistent());
    }

    #[test]
    fn pulses_mode_event_rate() {
        let mut run = uniform_run(2, 11, 1);
        run.exposure = Exposure::Pulses(50_000_000);
        run.event_probability = 2e-3;
        let out = sample_events(&run).unwrap();
        assert_eq!(out.report.pulses, 50_000_000);
        let expect = 1e5;
        assert!((out.report.generated as f64 - expect).abs() < 5.0 * expect.sqrt());
        assert!(out.events.windows(2).all(|w| w[0].pulse_id < w[1].pulse_id));
        assert!(out.events.iter().all(|e| e.pulse_id < 50_000_000));
    }

    #[test]
    fn calibration_uniform_split() {
        let run = uniform_run(2, 11, 1);
        let cal = sample_singles_calibration(
            &run,
            Constituent::Classical,
            CalibrationExposure::Photons(1.1e6),
        )
        .unwrap();
        for &c in &cal.counts {
            assert!((c as f64 - 1e5).abs() < 3.0 * 1e5f64.sqrt(), "{c}");
        }
        let zero = sample_singles_calibration(
            &run,
            Constituent::Classical,
            CalibrationExposure::Pulses(0),
        )
        .unwrap();
        assert!(zero.counts.iter().all(|&c| c == 0));
        assert!(zero.rates().iter().all(|&r| r == 0.0));
        assert!(matches!(
            sample_singles_calibration(
                &run,
                Constituent::Background,
                CalibrationExposure::Pulses(10)
            ),
            Err(Error::MissingConstituent("background"))
        ));
    }

    #[test]
    fn calibration_tracks_fringe() {
        let k = 3.0;
        let cfg = FringeConfig::with_period(1e-3, 11.0 / k).unwrap();
        let geom = ArrayGeometry::new(11, 1.0, 0.2).unwrap();
        let run = SimRun::new(
            SourceModel::classical(2).unwrap(),
            cfg,
            geom,
            Exposure::Events(1),
            3,
        );
        let exposure = 1e7;
        let cal = sample_singles_calibration(
            &run,
            Constituent::Classical,
            CalibrationExposure::Photons(exposure),
        )
        .unwrap();
        let p1 = singles_distribution(&cfg, &geom).unwrap();
        let a = 2.0 * PI * k / 11.0;
        for (i, (&c, &p)) in cal.counts.iter().zip(&p1).enumerate() {
            let expect = p * exposure;
            assert!((c as f64 - expect).abs() < 4.0 * expect.sqrt() + 1.0);
            // pattern follows 1 + sinc·cos at pixel centers
            let sinc = (0.5 * a * 0.2).sin() / (0.5 * a * 0.2);
            let shape = (1.0 + sinc * (a * i as f64).cos()) / 11.0;
            assert!((p - shape).abs() < 1e-12);
        }
    }

    #[test]
    fn event_file_round_trip() {
        let out = sample_events(&uniform_run(3, 11, 100)).unwrap();
        let text = events_to_delimited(&out.events);
        assert_eq!(parse_events(&text).unwrap(), out.events);
        assert!(parse_events("x\t1\t2\n").is_err());
    }

    #[test]
    fn invalid_run_rejected() {
        let mut run = uniform_run(2, 11, 0);
        assert!(sample_events(&run).is_err());
        run.exposure = Exposure::Events(10);
        run.event_probability = 0.0;
        assert!(sample_events(&run).is_err());
    }
}
