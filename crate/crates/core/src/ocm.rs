//! Optical centroid measurement (OCM) and the N-photon absorber rival.
//!
//! Histograms are indexed by the integer pixel sum `s = i_1 + … + i_N`,
//! which runs over `0..=N(D-1)`. The centroid coordinate
//! `origin + pitch·s/N` is derived only for presentation.

use std::fmt::Write as _;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fringe::JointDistribution;

/// One N-photon detection: the pixels that fired in a pulse, sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectionEvent {
    pub pulse_id: u64,
    pixels: SmallVec<[u16; 8]>,
}

impl DetectionEvent {
    pub fn new(pulse_id: u64, pixels: impl IntoIterator<Item = u16>) -> Self {
        let mut pixels: SmallVec<[u16; 8]> = pixels.into_iter().collect();
        pixels.sort_unstable();
        DetectionEvent { pulse_id, pixels }
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn photon_number(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixel_sum(&self) -> usize {
        self.pixels.iter().map(|&p| p as usize).sum()
    }

    pub fn has_repeat(&self) -> bool {
        self.pixels.windows(2).any(|w| w[0] == w[1])
    }

    pub fn is_single_pixel(&self) -> bool {
        self.pixels.windows(2).all(|w| w[0] == w[1])
    }
}

/// Counts (or expected weights) per centroid bin, with variances.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidHistogram {
    photon_number: usize,
    pixel_count: usize,
    origin: f64,
    pitch: f64,
    counts: Vec<f64>,
    variances: Vec<f64>,
}

pub fn bin_count(photon_number: usize, pixel_count: usize) -> usize {
    photon_number * (pixel_count - 1) + 1
}

impl CentroidHistogram {
    /// Empty histogram in pixel units (origin 0, pitch 1).
    pub fn zeros(photon_number: usize, pixel_count: usize) -> Self {
        assert!(photon_number >= 1 && pixel_count >= 2);
        let bins = bin_count(photon_number, pixel_count);
        CentroidHistogram {
            photon_number,
            pixel_count,
            origin: 0.0,
            pitch: 1.0,
            counts: vec![0.0; bins],
            variances: vec![0.0; bins],
        }
    }

    pub fn from_parts(
        photon_number: usize,
        pixel_count: usize,
        counts: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        if photon_number == 0 || pixel_count < 2 {
            return Err(Error::ShapeMismatch(format!(
                "N = {photon_number}, D = {pixel_count}"
            )));
        }
        let bins = bin_count(photon_number, pixel_count);
        if counts.len() != bins || variances.len() != bins {
            return Err(Error::ShapeMismatch(format!(
                "{} counts / {} variances for {bins} bins",
                counts.len(),
                variances.len()
            )));
        }
        Ok(CentroidHistogram {
            photon_number,
            pixel_count,
            origin: 0.0,
            pitch: 1.0,
            counts,
            variances,
        })
    }

    /// Raw counts with Poisson variances.
    pub fn from_counts(photon_number: usize, pixel_count: usize, counts: Vec<f64>) -> Result<Self> {
        let variances = counts.clone();
        Self::from_parts(photon_number, pixel_count, counts, variances)
    }

    pub fn with_coordinates(mut self, origin: f64, pitch: f64) -> Self {
        self.origin = origin;
        self.pitch = pitch;
        self
    }

    pub fn photon_number(&self) -> usize {
        self.photon_number
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn sigma(&self, s: usize) -> f64 {
        self.variances[s].max(0.0).sqrt()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.len()).map(|s| self.sigma(s)).collect()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Centroid coordinate of bin `s`.
    pub fn coordinate(&self, s: usize) -> f64 {
        self.origin + self.pitch * s as f64 / self.photon_number as f64
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.len()).map(|s| self.coordinate(s)).collect()
    }

    /// Histogram of `exposure` Poisson-distributed events drawn from these
    /// weights: counts and variances both scale linearly.
    pub fn scaled(&self, exposure: f64) -> Self {
        let mut out = self.clone();
        out.counts.iter_mut().for_each(|c| *c *= exposure);
        out.variances.iter_mut().for_each(|v| *v *= exposure);
        out
    }

    pub(crate) fn add_event_sum(&mut self, s: usize) {
        self.counts[s] += 1.0;
        self.variances[s] += 1.0;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.photon_number == other.photon_number && self.pixel_count == other.pixel_count
    }

    /// Bin-wise sum of two shards.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "cannot merge N = {}, D = {} with N = {}, D = {}",
                self.photon_number, self.pixel_count, other.photon_number, other.pixel_count
            )));
        }
        let mut out = self.clone();
        out.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        out.variances
            .iter_mut()
            .zip(&other.variances)
            .for_each(|(a, b)| *a += b);
        Ok(out)
    }

    /// Tab-separated export: `bin_sum centroid counts sigma`.
    pub fn to_delimited(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# photon_number\t{}", self.photon_number);
        let _ = writeln!(out, "# pixel_count\t{}", self.pixel_count);
        let _ = writeln!(out, "# origin\t{}", self.origin);
        let _ = writeln!(out, "# pitch\t{}", self.pitch);
        let _ = writeln!(out, "bin_sum\tcentroid\tcounts\tsigma");
        for s in 0..self.len() {
            let _ = writeln!(
                out,
                "{s}\t{}\t{}\t{}",
                self.coordinate(s),
                self.counts[s],
                self.sigma(s)
            );
        }
        out
    }

    pub fn parse_delimited(text: &str) -> Result<Self> {
        let mut n = None;
        let mut d = None;
        let mut origin = 0.0;
        let mut pitch = 1.0;
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let lineno = k + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .trim_start_matches('#')
                .split(['\t', ',', ' '])
                .filter(|f| !f.is_empty())
                .collect();
            if line.starts_with('#') {
                let value = |i: usize| -> Result<&str> {
                    fields
                        .get(i)
                        .copied()
                        .ok_or_else(|| Error::parse(lineno, "missing header value"))
                };
                match fields.first().copied() {
                    Some("photon_number") => n = Some(parse_num(value(1)?, lineno)?),
                    Some("pixel_count") => d = Some(parse_num(value(1)?, lineno)?),
                    Some("origin") => origin = parse_num(value(1)?, lineno)?,
                    Some("pitch") => pitch = parse_num(value(1)?, lineno)?,
                    _ => {}
                }
                continue;
            }
            if fields.first() == Some(&"bin_sum") {
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::parse(lineno, "expected 4 columns"));
            }
            rows.push((
                parse_num(fields[0], lineno)?,
                parse_num(fields[2], lineno)?,
                parse_num(fields[3], lineno)?,
            ));
        }
        let n: usize = n.ok_or_else(|| Error::parse(0, "missing `# photon_number` header"))?;
        let d: usize = d.ok_or_else(|| Error::parse(0, "missing `# pixel_count` header"))?;
        if n == 0 || d < 2 {
            return Err(Error::parse(0, "invalid photon_number / pixel_count"));
        }
        let bins = bin_count(n, d);
        let mut counts = vec![0.0; bins];
        let mut variances = vec![0.0; bins];
        let mut seen = vec![false; bins];
        for (s, c, sigma) in rows {
            if s >= bins || seen[s] {
                return Err(Error::parse(
                    0,
                    format!("bin {s} duplicated or out of range"),
                ));
            }
            seen[s] = true;
            counts[s] = c;
            variances[s] = sigma * sigma;
        }
        if seen.iter().any(|b| !b) {
            return Err(Error::parse(0, "histogram is missing bins"));
        }
        Ok(Self::from_parts(n, d, counts, variances)?.with_coordinates(origin, pitch))
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("cannot parse `{s}`")))
}

/// Expected centroid weights of a joint tensor: `w[s] = Σ_{Σi_j = s} P(i)`.
pub fn project_distribution(joint: &JointDistribution) -> CentroidHistogram {
    let n = joint.photon_number();
    let d = joint.pixel_count();
    let mut hist = CentroidHistogram::zeros(n, d);
    // walk the tensor with an incrementing odometer so the pixel sum updates in O(1)
    let mut digits = vec![0usize; n];
    let mut sum = 0usize;
    for &p in joint.probs() {
        hist.counts[sum] += p;
        for k in (0..n).rev() {
            digits[k] += 1;
            sum += 1;
            if digits[k] < d {
                break;
            }
            digits[k] = 0;
            sum -= d;
        }
    }
    hist.variances = hist.counts.clone();
    hist
}

const EVENT_SHARD: usize = 1 << 16;

/// Bins every event by its pixel sum; nothing is discarded.
pub fn project_events(
    events: &[DetectionEvent],
    photon_number: usize,
    pixel_count: usize,
) -> Result<CentroidHistogram> {
    project_events_with(events, photon_number, pixel_count, Execution::default())
}

pub fn project_events_with(
    events: &[DetectionEvent],
    photon_number: usize,
    pixel_count: usize,
    exec: Execution,
) -> Result<CentroidHistogram> {
    if photon_number == 0 || pixel_count < 2 {
        return Err(Error::ShapeMismatch(format!(
            "N = {photon_number}, D = {pixel_count}"
        )));
    }
    let shards = exec.map_chunks(events, EVENT_SHARD, |chunk| {
        let mut hist = CentroidHistogram::zeros(photon_number, pixel_count);
        for e in chunk {
            check_event(e, photon_number, pixel_count, 0)?;
            hist.add_event_sum(e.pixel_sum());
        }
        Ok(hist)
    });
    let mut total = CentroidHistogram::zeros(photon_number, pixel_count);
    for (k, shard) in shards.into_iter().enumerate() {
        let shard = shard.map_err(|e| match e {
            // locate the offending event globally
            Error::WrongPhotonNumber { .. } | Error::PixelOutOfRange { .. } => {
                locate_bad_event(events, photon_number, pixel_count, k * EVENT_SHARD).unwrap_or(e)
            }
            other => other,
        })?;
        total = total.merge(&shard)?;
    }
    Ok(total)
}

fn check_event(e: &DetectionEvent, n: usize, d: usize, index: usize) -> Result<()> {
    if e.photon_number() != n {
        return Err(Error::WrongPhotonNumber {
            index,
            expected: n,
            found: e.photon_number(),
        });
    }
    if let Some(&p) = e.pixels().last() {
        if p as usize >= d {
            return Err(Error::PixelOutOfRange {
                pixel: p as usize,
                pixel_count: d,
            });
        }
    }
    Ok(())
}

fn locate_bad_event(events: &[DetectionEvent], n: usize, d: usize, start: usize) -> Option<Error> {
    events[start..]
        .iter()
        .enumerate()
        .find_map(|(k, e)| check_event(e, n, d, start + k).err())
}

/// Outcome of the N-photon absorber post-selection.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsorberSelection {
    pub kept: Vec<DetectionEvent>,
    pub total: usize,
    /// `kept / total`; zero for an empty input.
    pub efficiency: f64,
}

impl AbsorberSelection {
    /// Binomial standard error of the efficiency.
    pub fn efficiency_sigma(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        (self.efficiency * (1.0 - self.efficiency) / self.total as f64).sqrt()
    }
}

/// Keeps only events in which all N photons landed on one pixel.
pub fn absorber_select(
    events: &[DetectionEvent],
    photon_number: usize,
) -> Result<AbsorberSelection> {
    let mut kept = Vec::new();
    for (index, e) in events.iter().enumerate() {
        if e.photon_number() != photon_number {
            return Err(Error::WrongPhotonNumber {
                index,
                expected: photon_number,
                found: e.photon_number(),
            });
        }
        if e.is_single_pixel() {
            kept.push(e.clone());
        }
    }
    let total = events.len();
    let efficiency = if total == 0 {
        0.0
    } else {
        kept.len() as f64 / total as f64
    };
    Ok(AbsorberSelection {
        kept,
        total,
        efficiency,
    })
}

/// Two-photon joint map, `D × D`, row index = first pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct JointMap {
    pub pixel_count: usize,
    pub cells: Vec<f64>,
}

impl JointMap {
    pub fn zeros(pixel_count: usize) -> Self {
        JointMap {
            pixel_count,
            cells: vec![0.0; pixel_count * pixel_count],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.pixel_count + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.cells[row * self.pixel_count + col] = v;
    }

    /// Theory map straight from a two-photon tensor.
    pub fn from_joint(joint: &JointDistribution) -> Result<Self> {
        if joint.photon_number() != 2 {
            return Err(Error::ShapeMismatch("joint map needs N = 2".into()));
        }
        Ok(JointMap {
            pixel_count: joint.pixel_count(),
            cells: joint.probs().to_vec(),
        })
    }

    pub fn to_delimited(&self) -> String {
        let mut out = String::new();
        for r in 0..self.pixel_count {
            let row: Vec<String> = (0..self.pixel_count)
                .map(|c| self.get(r, c).to_string())
                .collect();
            let _ = writeln!(out, "{}", row.join("\t"));
        }
        out
    }
}

/// Builds the mirrored two-photon map: each `{a, b}` event lands at
/// `(min, max)` and is mirrored to `(max, min)`; diagonal events once.
pub fn joint_map_2d(events: &[DetectionEvent], pixel_count: usize) -> Result<JointMap> {
    let mut map = JointMap::zeros(pixel_count);
    for (index, e) in events.iter().enumerate() {
        check_event(e, 2, pixel_count, index)?;
        let (a, b) = (e.pixels()[0] as usize, e.pixels()[1] as usize);
        map.cells[a * pixel_count + b] += 1.0;
        if a != b {
            map.cells[b * pixel_count + a] += 1.0;
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(pixels: &[u16]) -> DetectionEvent {
        DetectionEvent::new(0, pixels.iter().copied())
    }

    #[test]
    fn uniform_pair_projects_binomially() {
        let joint = JointDistribution::from_probs(2, 2, vec![0.25; 4]).unwrap();
        let h = project_distribution(&joint);
        assert_eq!(h.counts(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn pair_three_four_lands_at_three_and_a_half() {
        let h = project_events(&[ev(&[3, 4])], 2, 11).unwrap();
        assert_eq!(h.counts()[7], 1.0);
        assert_eq!(h.coordinate(7), 3.5);
    }

    #[test]
    fn direct_binning() {
        let h = project_events(&[ev(&[0, 0]), ev(&[0, 1]), ev(&[1, 1])], 2, 2).unwrap();
        assert_eq!(h.counts(), &[1.0, 1.0, 1.0]);
        assert_eq!(h.sigmas(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn empty_events_give_zero_histogram() {
        let h = project_events(&[], 4, 11).unwrap();
        assert_eq!(h.len(), 41);
        assert!(h.counts().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn wrong_photon_number_is_rejected_with_index() {
        let mut events = vec![ev(&[1, 2]); 70_000];
        events[66_000] = ev(&[1, 2, 3]);
        match project_events(&events, 2, 11) {
            Err(Error::WrongPhotonNumber {
                index,
                expected,
                found,
            }) => assert_eq!((index, expected, found), (66_000, 2, 3)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            project_events(&[ev(&[1, 11])], 2, 11),
            Err(Error::PixelOutOfRange { .. })
        ));
    }

    #[test]
    fn absorber_keeps_single_pixel_events() {
        let sel = absorber_select(&[ev(&[2, 2]), ev(&[2, 3]), ev(&[5, 5])], 2).unwrap();
        assert_eq!(sel.kept.len(), 2);
        assert!((sel.efficiency - 2.0 / 3.0).abs() < 1e-15);
        let none = absorber_select(&[ev(&[1, 2, 2]), ev(&[0, 0, 4])], 3).unwrap();
        assert_eq!(none.efficiency, 0.0);
        assert_eq!(absorber_select(&[], 3).unwrap().efficiency, 0.0);
    }

    #[test]
    fn joint_map_mirrors_off_diagonal() {
        let m = joint_map_2d(&[ev(&[5, 2])], 11).unwrap();
        assert_eq!(m.get(2, 5), 1.0);
        assert_eq!(m.get(5, 2), 1.0);
        assert_eq!(m.cells.iter().sum::<f64>(), 2.0);
        let m = joint_map_2d(&[ev(&[3, 3])], 11).unwrap();
        assert_eq!(m.get(3, 3), 1.0);
        assert_eq!(m.cells.iter().sum::<f64>(), 1.0);
        let m = joint_map_2d(&[], 11).unwrap();
        assert!(m.cells.iter().all(|&c| c == 0.0));
        assert!(joint_map_2d(&[ev(&[1, 2, 3])], 11).is_err());
    }

    #[test]
    fn histogram_text_round_trip() {
        let h = project_events(&[ev(&[0, 3]), ev(&[4, 4]), ev(&[0, 3])], 2, 5)
            .unwrap()
            .with_coordinates(1e-3, 2.5e-4);
        let back = CentroidHistogram::parse_delimited(&h.to_delimited()).unwrap();
        assert_eq!(back.counts(), h.counts());
        assert_eq!((back.origin(), back.pitch()), (h.origin(), h.pitch()));
        for (a, b) in back.variances().iter().zip(h.variances()) {
            assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }
        assert!(CentroidHistogram::parse_delimited("0\t0\t1\t1\n").is_err());
    }

    #[test]
    fn merge_requires_same_shape() {
        let a = CentroidHistogram::zeros(2, 11);
        let b = CentroidHistogram::zeros(3, 11);
        assert!(a.merge(&b).is_err());
    }
}
