//! Pulse-binned coincidence extraction.
//!
//! A pulse record lists the channels that fired during one laser pulse.
//! Pulses with exactly N firings become N-fold events and bump the counter
//! of their channel subset; every other multiplicity is tallied per `k`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ocm::DetectionEvent;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PulseRecord {
    pub pulse_id: u64,
    fired: Vec<u16>,
}

impl PulseRecord {
    pub fn new(pulse_id: u64, channels: impl IntoIterator<Item = u16>) -> Self {
        let mut fired: Vec<u16> = channels.into_iter().collect();
        fired.sort_unstable();
        PulseRecord { pulse_id, fired }
    }

    pub fn fired(&self) -> &[u16] {
        &self.fired
    }

    pub fn validate(&self, channel_count: usize) -> Result<()> {
        if self.fired.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::MalformedPulse {
                pulse_id: self.pulse_id,
                reason: "duplicate channel".into(),
            });
        }
        if let Some(&c) = self.fired.last() {
            if c as usize >= channel_count {
                return Err(Error::MalformedPulse {
                    pulse_id: self.pulse_id,
                    reason: format!("channel {c} out of range for {channel_count} channels"),
                });
            }
        }
        Ok(())
    }
}

/// Binomial coefficient table, `table[n][k] = C(n, k)`.
fn binomials(max: usize) -> Vec<Vec<u64>> {
    let mut t = vec![vec![0u64; max + 1]; max + 1];
    for n in 0..=max {
        t[n][0] = 1;
        for k in 1..=n {
            t[n][k] = t[n - 1][k - 1] + if k < n { t[n - 1][k] } else { 0 };
        }
    }
    t
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    binomials(n)[n][k]
}

/// One counter per N-subset of channels, addressed by colexicographic rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountTable {
    channel_count: usize,
    order: usize,
    counts: Vec<u64>,
    choose: Vec<Vec<u64>>,
}

impl CountTable {
    pub fn new(channel_count: usize, order: usize) -> Self {
        let choose = binomials(channel_count);
        let size = if order <= channel_count {
            choose[channel_count][order] as usize
        } else {
            0
        };
        CountTable {
            channel_count,
            order,
            counts: vec![0; size],
            choose,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Colex rank of a sorted, duplicate-free subset.
    pub fn rank(&self, subset: &[u16]) -> usize {
        subset
            .iter()
            .enumerate()
            .map(|(j, &c)| self.choose[c as usize][j + 1] as usize)
            .sum()
    }

    /// Inverse of [`rank`](Self::rank).
    pub fn subset(&self, mut rank: usize) -> Vec<u16> {
        let mut out = vec![0u16; self.order];
        let mut c = self.channel_count;
        for j in (0..self.order).rev() {
            c -= 1;
            while self.choose[c][j + 1] as usize > rank {
                c -= 1;
            }
            out[j] = c as u16;
            rank -= self.choose[c][j + 1] as usize;
        }
        out
    }

    pub fn get(&self, subset: &[u16]) -> u64 {
        self.counts[self.rank(subset)]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bump(&mut self, subset: &[u16]) {
        let r = self.rank(subset);
        self.counts[r] += 1;
    }

    fn absorb(&mut self, other: &CountTable) {
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
    }

    /// Text export, one `channels<TAB>count` line per subset (channels
    /// joined by `-`).
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("subset\tcount\n");
        for r in 0..self.len() {
            let subset: Vec<String> = self.subset(r).iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{}\t{}", subset.join("-"), self.counts[r]);
        }
        out
    }
}

/// Per-multiplicity totals and per-channel firing counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldStatistics {
    pub pulses: u64,
    /// `fold_totals[k]` = pulses with exactly `k` channels firing.
    pub fold_totals: Vec<u64>,
    pub channel_fires: Vec<u64>,
}

impl FoldStatistics {
    pub fn new(channel_count: usize) -> Self {
        FoldStatistics {
            pulses: 0,
            fold_totals: vec![0; channel_count + 1],
            channel_fires: vec![0; channel_count],
        }
    }

    /// Fires per channel divided by pulses seen.
    pub fn singles_rates(&self) -> Vec<f64> {
        self.channel_fires
            .iter()
            .map(|&c| {
                if self.pulses == 0 {
                    0.0
                } else {
                    c as f64 / self.pulses as f64
                }
            })
            .collect()
    }

    pub fn fold_total(&self, k: usize) -> u64 {
        self.fold_totals.get(k).copied().unwrap_or(0)
    }

    fn record(&mut self, rec: &PulseRecord) {
        self.pulses += 1;
        self.fold_totals[rec.fired.len()] += 1;
        for &c in &rec.fired {
            self.channel_fires[c as usize] += 1;
        }
    }

    fn absorb(&mut self, o: &FoldStatistics) {
        self.pulses += o.pulses;
        self.fold_totals
            .iter_mut()
            .zip(&o.fold_totals)
            .for_each(|(a, b)| *a += b);
        self.channel_fires
            .iter_mut()
            .zip(&o.channel_fires)
            .for_each(|(a, b)| *a += b);
    }

    pub fn to_key_value(&self) -> String {
        let mut out = format!("pulses = {}\n", self.pulses);
        for (k, t) in self.fold_totals.iter().enumerate() {
            let _ = writeln!(out, "fold_{k} = {t}");
        }
        for (c, f) in self.channel_fires.iter().enumerate() {
            let _ = writeln!(out, "channel_{c}_fires = {f}");
        }
        out
    }
}

/// Streaming N-fold coincidence counter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoincidenceCounter {
    channel_count: usize,
    order: usize,
    first_pulse: Option<u64>,
    last_pulse: Option<u64>,
    pub table: CountTable,
    pub stats: FoldStatistics,
    pub events: Vec<DetectionEvent>,
}

impl CoincidenceCounter {
    pub fn new(channel_count: usize, order: usize) -> Self {
        CoincidenceCounter {
            channel_count,
            order,
            first_pulse: None,
            last_pulse: None,
            table: CountTable::new(channel_count, order),
            stats: FoldStatistics::new(channel_count),
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, rec: &PulseRecord) -> Result<()> {
        rec.validate(self.channel_count)?;
        if let Some(last) = self.last_pulse {
            if rec.pulse_id < last {
                return Err(Error::MalformedPulse {
                    pulse_id: rec.pulse_id,
                    reason: format!("pulse ids must be non-decreasing (previous {last})"),
                });
            }
        }
        self.first_pulse.get_or_insert(rec.pulse_id);
        self.last_pulse = Some(rec.pulse_id);
        self.stats.record(rec);
        if rec.fired.len() == self.order {
            self.table.bump(&rec.fired);
            self.events
                .push(DetectionEvent::new(rec.pulse_id, rec.fired.iter().copied()));
        }
        Ok(())
    }

    /// Appends a later shard's tallies.
    pub fn merge(&mut self, later: CoincidenceCounter) -> Result<()> {
        if later.channel_count != self.channel_count || later.order != self.order {
            return Err(Error::ShapeMismatch("counters of different shape".into()));
        }
        if let (Some(prev), Some(first)) = (self.last_pulse, later.first_pulse) {
            if first < prev {
                return Err(Error::MalformedPulse {
                    pulse_id: first,
                    reason: format!("pulse ids must be non-decreasing (previous {prev})"),
                });
            }
        }
        self.table.absorb(&later.table);
        self.stats.absorb(&later.stats);
        self.events.extend(later.events);
        self.first_pulse = self.first_pulse.or(later.first_pulse);
        self.last_pulse = later.last_pulse.or(self.last_pulse);
        Ok(())
    }

    pub fn finish(self) -> Coincidences {
        Coincidences {
            events: self.events,
            table: self.table,
            stats: self.stats,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coincidences {
    pub events: Vec<DetectionEvent>,
    pub table: CountTable,
    pub stats: FoldStatistics,
}

const PULSE_SHARD: usize = 1 << 15;

pub fn extract_coincidences(
    records: &[PulseRecord],
    channel_count: usize,
    order: usize,
) -> Result<Coincidences> {
    extract_coincidences_with(records, channel_count, order, Execution::default())
}

pub fn extract_coincidences_with(
    records: &[PulseRecord],
    channel_count: usize,
    order: usize,
    exec: Execution,
) -> Result<Coincidences> {
    if order == 0 || order > channel_count {
        return Err(Error::invalid("order", "must lie in 1..=channel_count"));
    }
    let shards = exec.map_chunks(records, PULSE_SHARD, |chunk| {
        let mut c = CoincidenceCounter::new(channel_count, order);
        for rec in chunk {
            c.push(rec)?;
        }
        Ok::<_, Error>(c)
    });
    let mut total = CoincidenceCounter::new(channel_count, order);
    for shard in shards {
        total.merge(shard?)?;
    }
    Ok(total.finish())
}

/// Per-multiplicity totals and per-channel singles over a stream.
pub fn fold_statistics(records: &[PulseRecord], channel_count: usize) -> Result<FoldStatistics> {
    let mut stats = FoldStatistics::new(channel_count);
    for rec in records {
        rec.validate(channel_count)?;
        stats.record(rec);
    }
    Ok(stats)
}

/// Regroups events into pulse records. Events sharing a pulse are merged;
/// a pixel appearing twice in one pulse cannot be a threshold-detector record.
pub fn pulse_records_from_events<'a>(
    events: impl IntoIterator<Item = &'a DetectionEvent>,
) -> Result<Vec<PulseRecord>> {
    let mut all: Vec<&DetectionEvent> = events.into_iter().collect();
    all.sort_by_key(|e| e.pulse_id);
    let mut out: Vec<PulseRecord> = Vec::new();
    for e in all {
        match out.last_mut() {
            Some(last) if last.pulse_id == e.pulse_id => {
                last.fired.extend_from_slice(e.pixels());
                last.fired.sort_unstable();
            }
            _ => out.push(PulseRecord::new(e.pulse_id, e.pixels().iter().copied())),
        }
        let last = out.last().unwrap();
        if last.fired.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::MalformedPulse {
                pulse_id: last.pulse_id,
                reason: "repeated pixel; only threshold-detector events form pulse records".into(),
            });
        }
    }
    Ok(out)
}

/// One pulse per line: `pulse_id` followed by the fired channels.
pub fn parse_pulse_records(text: &str) -> Result<Vec<PulseRecord>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(['\t', ',', ' ']).filter(|f| !f.is_empty());
        let pulse_id = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::parse(k + 1, "bad pulse id"))?;
        let fired = fields
            .map(|f| f.parse::<u16>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(k + 1, "bad channel index"))?;
        out.push(PulseRecord::new(pulse_id, fired));
    }
    Ok(out)
}

pub fn pulse_records_to_delimited(records: &[PulseRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(out, "{}", r.pulse_id);
        for c in &r.fired {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_size_is_binomial() {
        assert_eq!(CountTable::new(11, 2).len(), 55);
        assert_eq!(CountTable::new(11, 4).len(), 330);
        assert_eq!(binomial(11, 5), 462);
    }

    #[test]
    fn rank_round_trips() {
        let t = CountTable::new(11, 3);
        for r in 0..t.len() {
            let s = t.subset(r);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(t.rank(&s), r);
        }
    }

    #[test]
    fn three_fold_pulse() {
        let recs = [PulseRecord::new(0, [9, 2, 7])];
        let c = extract_coincidences(&recs, 11, 3).unwrap();
        assert_eq!(c.events, vec![DetectionEvent::new(0, [2, 7, 9])]);
        assert_eq!(c.table.get(&[2, 7, 9]), 1);
        assert_eq!(c.table.total(), 1);
    }

    #[test]
    fn single_fire_is_a_single() {
        let c = extract_coincidences(&[PulseRecord::new(5, [4])], 11, 2).unwrap();
        assert!(c.events.is_empty());
        assert_eq!(c.stats.channel_fires[4], 1);
        assert_eq!(c.stats.fold_total(1), 1);
    }

    #[test]
    fn fold_statistics_small_stream() {
        let recs = [
            PulseRecord::new(0, [0]),
            PulseRecord::new(1, [0, 1]),
            PulseRecord::new(2, []),
        ];
        let s = fold_statistics(&recs, 11).unwrap();
        assert_eq!(s.channel_fires[0], 2);
        assert_eq!(s.channel_fires[1], 1);
        assert_eq!(s.fold_total(2), 1);
        assert!((s.singles_rates()[0] - 2.0 / 3.0).abs() < 1e-15);
        let empty = fold_statistics(&[], 11).unwrap();
        assert_eq!(empty.pulses, 0);
        assert!(empty.fold_totals.iter().all(|&t| t == 0));
        assert!(empty.singles_rates().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn malformed_records_rejected() {
        assert!(extract_coincidences(&[PulseRecord::new(0, [1, 1])], 11, 2).is_err());
        assert!(extract_coincidences(&[PulseRecord::new(0, [11])], 11, 1).is_err());
        let out_of_order = [PulseRecord::new(3, [1]), PulseRecord::new(2, [1])];
        assert!(extract_coincidences(&out_of_order, 11, 1).is_err());
    }

    #[test]
    fn pulse_file_round_trip() {
        let recs = vec![PulseRecord::new(0, []), PulseRecord::new(4, [3, 1])];
        let text = pulse_records_to_delimited(&recs);
        assert_eq!(parse_pulse_records(&text).unwrap(), recs);
    }
}
