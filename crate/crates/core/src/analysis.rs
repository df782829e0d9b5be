//! Accidental estimation, subtraction and visibility-scaling tables.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::ocm::{bin_count, CentroidHistogram};
use crate::sim::SinglesCalibration;

/// Centroid visibility of classical light: `V1^N / 2^(N−1)`.
pub fn classical_visibility_theory(photon_number: usize, singles_visibility: f64) -> f64 {
    let n = photon_number.max(1) as i32;
    singles_visibility.powi(n) / 2f64.powi(n - 1)
}

/// Per-pixel per-pulse rates with their variances.
#[derive(Clone, Debug, PartialEq)]
pub struct SinglesRates {
    pub rates: Vec<f64>,
    pub variances: Vec<f64>,
}

impl SinglesRates {
    /// Rates known without error.
    pub fn exact(rates: Vec<f64>) -> Self {
        let variances = vec![0.0; rates.len()];
        SinglesRates { rates, variances }
    }

    pub fn zeros(pixel_count: usize) -> Self {
        Self::exact(vec![0.0; pixel_count])
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

impl From<&SinglesCalibration> for SinglesRates {
    fn from(c: &SinglesCalibration) -> Self {
        SinglesRates {
            rates: c.rates(),
            variances: c.rate_variances(),
        }
    }
}

/// Expected accidental N-fold counts per pixel-sum bin from two singles
/// calibrations. The combined rate `r = a + b` is raised to the N-fold
/// product; with `exclude_same_pixel` only tuples of distinct pixels count.
pub fn estimate_accidentals(
    singles_a: &SinglesRates,
    singles_b: &SinglesRates,
    photon_number: usize,
    pulses: f64,
    exclude_same_pixel: bool,
) -> Result<CentroidHistogram> {
    let d = singles_a.len();
    if singles_b.len() != d || singles_a.variances.len() != d || singles_b.variances.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "calibrations cover {} and {} pixels",
            singles_a.len(),
            singles_b.len()
        )));
    }
    if d < 2 {
        return Err(Error::invalid("pixel_count", "need at least 2 pixels"));
    }
    if photon_number == 0 {
        return Err(Error::invalid("photon_number", "must be at least 1"));
    }
    if !(pulses.is_finite() && pulses >= 0.0) {
        return Err(Error::invalid("pulses", "must be non-negative"));
    }
    let mut r = Vec::with_capacity(d);
    let mut var = Vec::with_capacity(d);
    for i in 0..d {
        let ri = singles_a.rates[i] + singles_b.rates[i];
        if !(ri.is_finite() && (0.0..=1.0).contains(&ri)) {
            return Err(Error::RateOutOfRange { pixel: i, rate: ri });
        }
        r.push(ri);
        var.push(singles_a.variances[i] + singles_b.variances[i]);
    }

    let n = photon_number;
    let bins = bin_count(n, d);
    let mut counts = vec![0.0; bins];
    let mut variances = vec![0.0; bins];
    if exclude_same_pixel {
        // Π_i (1 + t·r_i·z^i): coefficient of t^N z^s times N! counts ordered
        // tuples of distinct pixels.
        let factorial: f64 = (1..=n).map(|k| k as f64).product();
        let full = distinct_poly(&r, None, n, bins);
        for s in 0..bins {
            counts[s] = pulses * factorial * full[n][s];
        }
        for i in 0..d {
            if var[i] == 0.0 {
                continue;
            }
            let without = distinct_poly(&r, Some(i), n - 1, bins);
            for s in i..bins {
                let deriv = pulses * factorial * without[n - 1][s - i];
                variances[s] += deriv * deriv * var[i];
            }
        }
    } else {
        // (Σ r_i z^i)^N and its derivative N·z^i·(Σ r_j z^j)^(N−1)
        let mut lower = vec![1.0];
        for _ in 1..n {
            lower = poly_mul(&lower, &r);
        }
        let full = poly_mul(&lower, &r);
        for s in 0..bins {
            counts[s] = pulses * full[s];
        }
        for i in 0..d {
            if var[i] == 0.0 {
                continue;
            }
            for (t, &c) in lower.iter().enumerate() {
                let deriv = pulses * n as f64 * c;
                variances[t + i] += deriv * deriv * var[i];
            }
        }
    }
    CentroidHistogram::from_parts(n, d, counts, variances)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

// poly[k][s] = Σ over k-subsets of distinct pixels with index sum s of Π r
fn distinct_poly(r: &[f64], skip: Option<usize>, max_k: usize, bins: usize) -> Vec<Vec<f64>> {
    let mut poly = vec![vec![0.0; bins]; max_k + 1];
    poly[0][0] = 1.0;
    for (i, &ri) in r.iter().enumerate() {
        if Some(i) == skip || ri == 0.0 {
            continue;
        }
        for k in (1..=max_k).rev() {
            let (lo, hi) = poly.split_at_mut(k);
            for s in (i..bins).rev() {
                hi[0][s] += ri * lo[k - 1][s - i];
            }
        }
    }
    poly
}

/// `raw − acc` bin by bin; negative results are kept. Variances add, with
/// an empty raw bin counted as variance 1.
pub fn subtract_accidentals(
    raw: &CentroidHistogram,
    acc: &CentroidHistogram,
) -> Result<CentroidHistogram> {
    if raw.photon_number() != acc.photon_number() || raw.pixel_count() != acc.pixel_count() {
        return Err(Error::ShapeMismatch(format!(
            "raw histogram is N={} D={}, accidentals are N={} D={}",
            raw.photon_number(),
            raw.pixel_count(),
            acc.photon_number(),
            acc.pixel_count()
        )));
    }
    let counts = raw
        .counts()
        .iter()
        .zip(acc.counts())
        .map(|(a, b)| a - b)
        .collect();
    // an empty raw bin keeps the unit Poisson floor once accidentals add variance
    let variances = raw
        .variances()
        .iter()
        .zip(acc.variances())
        .map(|(&a, &b)| if a == 0.0 && b > 0.0 { 1.0 + b } else { a + b })
        .collect();
    Ok(
        CentroidHistogram::from_parts(raw.photon_number(), raw.pixel_count(), counts, variances)?
            .with_coordinates(raw.origin(), raw.pitch()),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VisibilityKind {
    ClassicalTheory,
    ClassicalMeasured,
    QuantumRaw,
    QuantumCorrected,
}

impl VisibilityKind {
    pub fn name(self) -> &'static str {
        match self {
            VisibilityKind::ClassicalTheory => "classical-theory",
            VisibilityKind::ClassicalMeasured => "classical-measured",
            VisibilityKind::QuantumRaw => "quantum-raw",
            VisibilityKind::QuantumCorrected => "quantum-corrected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            VisibilityKind::ClassicalTheory,
            VisibilityKind::ClassicalMeasured,
            VisibilityKind::QuantumRaw,
            VisibilityKind::QuantumCorrected,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

impl fmt::Display for VisibilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisibilityPoint {
    pub photon_number: usize,
    pub visibility: f64,
    pub sigma: f64,
    pub kind: VisibilityKind,
}

impl VisibilityPoint {
    pub fn new(photon_number: usize, visibility: f64, sigma: f64, kind: VisibilityKind) -> Self {
        VisibilityPoint {
            photon_number,
            visibility,
            sigma: sigma.abs(),
            kind,
        }
    }
}

/// Published laboratory visibilities for N = 2..4, kept for side-by-side
/// comparison: `(N, visibility, sigma, kind)`.
pub const EXPERIMENT_REFERENCE_POINTS: [(usize, f64, f64, VisibilityKind); 9] = [
    (2, 0.44, 0.09, VisibilityKind::ClassicalMeasured),
    (3, 0.18, 0.04, VisibilityKind::ClassicalMeasured),
    (4, 0.14, 0.04, VisibilityKind::ClassicalMeasured),
    (2, 0.49, 0.04, VisibilityKind::QuantumRaw),
    (3, 0.44, 0.05, VisibilityKind::QuantumRaw),
    (4, 0.41, 0.06, VisibilityKind::QuantumRaw),
    (2, 0.65, 0.04, VisibilityKind::QuantumCorrected),
    (3, 0.61, 0.06, VisibilityKind::QuantumCorrected),
    (4, 0.59, 0.08, VisibilityKind::QuantumCorrected),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub point: VisibilityPoint,
    pub source: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    pub fn theory(&self) -> impl Iterator<Item = &VisibilityPoint> {
        self.rows
            .iter()
            .map(|r| &r.point)
            .filter(|p| p.kind == VisibilityKind::ClassicalTheory)
    }

    pub fn with_reference(mut self) -> Self {
        self.rows.extend(
            EXPERIMENT_REFERENCE_POINTS
                .iter()
                .map(|&(n, v, s, kind)| ScalingRow {
                    point: VisibilityPoint::new(n, v, s, kind),
                    source: "reference",
                }),
        );
        self
    }

    /// Tab-separated: `photon_number kind visibility sigma source`.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("photon_number\tkind\tvisibility\tsigma\tsource\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.point.photon_number, r.point.kind, r.point.visibility, r.point.sigma, r.source
            );
        }
        out
    }
}

/// Theory curve at `N = 1..=max_photon_number` followed by the given points.
pub fn scaling_table(
    points: &[VisibilityPoint],
    max_photon_number: usize,
    singles_visibility: f64,
) -> ScalingTable {
    let mut rows: Vec<ScalingRow> = (1..=max_photon_number)
        .map(|n| ScalingRow {
            point: VisibilityPoint::new(
                n,
                classical_visibility_theory(n, singles_visibility),
                0.0,
                VisibilityKind::ClassicalTheory,
            ),
            source: "theory",
        })
        .collect();
    rows.extend(points.iter().map(|&point| ScalingRow {
        point,
        source: if point.kind == VisibilityKind::ClassicalTheory {
            "theory"
        } else {
            "simulation"
        },
    }));
    ScalingTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theory_values() {
        let v: Vec<f64> = (1..=4)
            .map(|n| classical_visibility_theory(n, 1.0))
            .collect();
        assert_eq!(v, vec![1.0, 0.5, 0.25, 0.125]);
        assert_eq!(classical_visibility_theory(1, 0.37), 0.37);
        for n in 1..10 {
            assert_eq!(
                classical_visibility_theory(n + 1, 1.0),
                classical_visibility_theory(n, 1.0) / 2.0
            );
        }
    }

    #[test]
    fn uniform_pairs_without_diagonal() {
        let r = SinglesRates::exact(vec![1e-3; 11]);
        let acc = estimate_accidentals(&r, &SinglesRates::zeros(11), 2, 1e8, true).unwrap();
        assert!((acc.total() - 1.1e4).abs() < 1e-6);
        let with_diag = estimate_accidentals(&r, &SinglesRates::zeros(11), 2, 1e8, false).unwrap();
        assert!((with_diag.total() - 1.21e4).abs() < 1e-6);
    }

    #[test]
    fn zero_calibrations_give_zero() {
        let z = SinglesRates::zeros(11);
        let acc = estimate_accidentals(&z, &z, 3, 1e9, true).unwrap();
        assert!(acc.counts().iter().all(|&c| c == 0.0));
        assert!(acc.variances().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_photon_is_linear() {
        let a = SinglesRates {
            rates: (0..11).map(|i| 1e-4 * (i + 1) as f64).collect(),
            variances: vec![1e-12; 11],
        };
        let acc = estimate_accidentals(&a, &SinglesRates::zeros(11), 1, 1e6, true).unwrap();
        for i in 0..11 {
            assert!((acc.counts()[i] - 1e6 * a.rates[i]).abs() < 1e-9);
            assert!((acc.variances()[i] - 1e12 * 1e-12).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_inputs() {
        let a = SinglesRates::zeros(11);
        let b = SinglesRates::zeros(10);
        assert!(matches!(
            estimate_accidentals(&a, &b, 2, 1.0, true),
            Err(Error::ShapeMismatch(_))
        ));
        let mut big = SinglesRates::zeros(11);
        big.rates[4] = 0.7;
        let mut big2 = SinglesRates::zeros(11);
        big2.rates[4] = 0.6;
        assert!(matches!(
            estimate_accidentals(&big, &big2, 2, 1.0, true),
            Err(Error::RateOutOfRange { pixel: 4, .. })
        ));
    }

    #[test]
    fn subtraction_keeps_negatives() {
        let raw = CentroidHistogram::from_counts(2, 3, vec![5.0, 1.0, 0.0, 2.0, 3.0]).unwrap();
        let acc = CentroidHistogram::from_parts(
            2,
            3,
            vec![7.0, 0.0, 0.0, 0.0, 0.0],
            vec![4.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let c = subtract_accidentals(&raw, &acc).unwrap();
        assert_eq!(c.counts()[0], -2.0);
        assert_eq!(c.sigma(0), 3.0);
        let zero = CentroidHistogram::zeros(2, 3);
        assert_eq!(subtract_accidentals(&raw, &zero).unwrap(), raw);
        let tiny = CentroidHistogram::from_parts(
            2,
            3,
            vec![0.0, 0.0, 0.01, 0.0, 0.0],
            vec![0.0, 0.0, 1e-6, 0.0, 0.0],
        )
        .unwrap();
        let c = subtract_accidentals(&raw, &tiny).unwrap();
        assert_eq!(c.variances()[2], 1.0 + 1e-6);
        assert!(subtract_accidentals(&raw, &CentroidHistogram::zeros(3, 3)).is_err());
    }

    #[test]
    fn table_layout() {
        let t = scaling_table(&[], 4, 1.0);
        assert_eq!(t.rows.len(), 4);
        let theory: Vec<f64> = t.theory().map(|p| p.visibility).collect();
        assert_eq!(theory, vec![1.0, 0.5, 0.25, 0.125]);
        let t = t.with_reference();
        assert_eq!(t.rows.len(), 13);
        let text = t.to_delimited();
        assert!(text.starts_with("photon_number\tkind"));
        assert!(text.contains("3\tquantum-corrected\t0.61\t0.06\treference"));
        assert_eq!(
            VisibilityKind::parse("quantum-raw"),
            Some(VisibilityKind::QuantumRaw)
        );
    }
}
