//! Self-contained SVG plots. Every plotted value is also written to a text
//! artifact, and each marker carries its values as `data-*` attributes in
//! the same formatting so the two can be compared verbatim.

use std::fmt::Write as _;

use noon_ocm::analysis::{ScalingTable, VisibilityKind};
use noon_ocm::fit::FitResult;
use noon_ocm::ocm::{CentroidHistogram, JointMap};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

/// Samples of the fitted model drawn as the overlay curve.
pub const CURVE_SAMPLES: usize = 400;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    step * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 6);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xscale: f64) {
    let (l, r, t, b) = (f.px(f.x0), f.px(f.x1), f.py(f.y1), f.py(f.y0));
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for x in ticks(f.x0, f.x1) {
        let px = f.px(x);
        let _ = writeln!(
            out,
            r#"<line x1="{px}" y1="{b}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
            b + 5.0,
            b + 18.0,
            fmt_tick(x * xscale)
        );
    }
    for y in ticks(f.y0, f.y1) {
        let py = f.py(y);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py}" x2="{l}" y2="{py}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            l - 5.0,
            l - 8.0,
            py + 4.0,
            fmt_tick(y)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Points the overlay curve is drawn through, as `(centroid, model)`.
pub fn fit_curve(hist: &CentroidHistogram, fit: &FitResult) -> Vec<(f64, f64)> {
    let x0 = hist.coordinate(0);
    let x1 = hist.coordinate(hist.len() - 1);
    (0..CURVE_SAMPLES)
        .map(|i| {
            let x = x0 + (x1 - x0) * i as f64 / (CURVE_SAMPLES - 1) as f64;
            (x, fit.evaluate(x))
        })
        .collect()
}

/// Positions of the dashed classical-period markers inside the histogram
/// range, anchored on a fringe maximum of the fit when one is given.
pub fn period_markers(hist: &CentroidHistogram, fit: Option<&FitResult>, period: f64) -> Vec<f64> {
    let x0 = hist.coordinate(0);
    let x1 = hist.coordinate(hist.len() - 1);
    let anchor = fit.map_or(x0, |f| -f.params.phase / f.params.frequency);
    let first = anchor + ((x0 - anchor) / period).ceil() * period;
    let mut out = Vec::new();
    let mut x = first;
    while x <= x1 + 1e-12 * period.abs() {
        out.push(x);
        x += period;
    }
    out
}

/// Histogram with Poisson error bars, optional fit overlay and dashed lines
/// spaced by the classical (singles) period.
pub fn histogram_svg(
    title: &str,
    hist: &CentroidHistogram,
    fit: Option<&FitResult>,
    classical_period: Option<f64>,
) -> String {
    let curve = fit.map(|f| fit_curve(hist, f)).unwrap_or_default();
    let x0 = hist.coordinate(0);
    let x1 = hist.coordinate(hist.len() - 1);
    let pad = (x1 - x0) * 0.03;
    let ymax = (0..hist.len())
        .map(|s| hist.counts()[s] + hist.sigma(s))
        .chain(curve.iter().map(|p| p.1))
        .fold(0.0, f64::max);
    let ymin = (0..hist.len())
        .map(|s| hist.counts()[s] - hist.sigma(s))
        .fold(0.0, f64::min);
    let f = Frame {
        x0: x0 - pad,
        x1: x1 + pad,
        y0: ymin,
        y1: if ymax > ymin { ymax * 1.08 } else { ymin + 1.0 },
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "centroid (µm)", "counts", 1e6);
    if let Some(period) = classical_period {
        let _ = writeln!(
            out,
            r#"<g class="classical-period" stroke="gray" stroke-dasharray="6 4">"#
        );
        for x in period_markers(hist, fit, period) {
            let px = f.px(x);
            let _ = writeln!(
                out,
                r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" data-centroid="{x}"/>"#,
                f.py(f.y1),
                f.py(f.y0)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    if !curve.is_empty() {
        let pts: Vec<String> = curve
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="fit" fill="none" stroke="crimson" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    }
    let _ = writeln!(out, r#"<g class="data" stroke="black" fill="black">"#);
    for s in 0..hist.len() {
        let (x, y, e) = (hist.coordinate(s), hist.counts()[s], hist.sigma(s));
        let (px, py) = (f.px(x), f.py(y));
        let _ = writeln!(
            out,
            r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}"/><circle cx="{px}" cy="{py}" r="2.5" data-bin="{s}" data-centroid="{x}" data-counts="{y}" data-sigma="{e}"/>"#,
            f.py(y - e),
            f.py(y + e)
        );
    }
    let _ = writeln!(out, "</g>");
    if let Some(fit) = fit {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">V = {:.3} ± {:.3}</text>"#,
            WIDTH - RIGHT - 8.0,
            TOP + 16.0,
            fit.visibility(),
            fit.visibility_sigma()
        );
    }
    out.push_str("</svg>\n");
    out
}

fn kind_style(kind: VisibilityKind, reference: bool) -> (&'static str, &'static str, &'static str) {
    // (shape, stroke, fill)
    let (shape, color) = match kind {
        VisibilityKind::ClassicalTheory => ("none", "steelblue"),
        VisibilityKind::ClassicalMeasured => ("square", "steelblue"),
        VisibilityKind::QuantumRaw => ("circle", "crimson"),
        VisibilityKind::QuantumCorrected => ("diamond", "crimson"),
    };
    (shape, color, if reference { "white" } else { color })
}

/// Visibility against photon number: theory curve plus point markers.
pub fn scaling_svg(title: &str, table: &ScalingTable) -> String {
    let nmax = table
        .rows
        .iter()
        .map(|r| r.point.photon_number)
        .max()
        .unwrap_or(1);
    let f = Frame {
        x0: 0.5,
        x1: nmax as f64 + 0.5,
        y0: 0.0,
        y1: 1.1,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "photon number N", "visibility", 1.0);
    let theory: Vec<_> = table.theory().collect();
    if !theory.is_empty() {
        let pts: Vec<String> = theory
            .iter()
            .map(|p| {
                format!(
                    "{:.2},{:.2}",
                    f.px(p.photon_number as f64),
                    f.py(p.visibility)
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="theory" fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    }
    let _ = writeln!(out, r#"<g class="points">"#);
    let kinds = [
        VisibilityKind::ClassicalMeasured,
        VisibilityKind::QuantumRaw,
        VisibilityKind::QuantumCorrected,
    ];
    for row in &table.rows {
        let p = row.point;
        let reference = row.source == "reference";
        // spread overlapping series sideways
        let slot = kinds
            .iter()
            .position(|&k| k == p.kind)
            .map_or(0.0, |i| i as f64 - 1.0);
        let x = p.photon_number as f64 + 0.08 * slot + if reference { 0.04 } else { 0.0 };
        let (px, py) = (f.px(x), f.py(p.visibility));
        let (shape, stroke, fill) = kind_style(p.kind, reference);
        let attrs = format!(
            r#"data-n="{}" data-kind="{}" data-visibility="{}" data-sigma="{}" data-source="{}""#,
            p.photon_number, p.kind, p.visibility, p.sigma, row.source
        );
        if p.sigma > 0.0 {
            let _ = writeln!(
                out,
                r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="{stroke}"/>"#,
                f.py(p.visibility - p.sigma),
                f.py(p.visibility + p.sigma)
            );
        }
        let _ = match shape {
            "square" => writeln!(
                out,
                r#"<rect x="{}" y="{}" width="7" height="7" stroke="{stroke}" fill="{fill}" {attrs}/>"#,
                px - 3.5,
                py - 3.5
            ),
            "diamond" => writeln!(
                out,
                r#"<polygon points="{px},{} {},{py} {px},{} {},{py}" stroke="{stroke}" fill="{fill}" {attrs}/>"#,
                py - 5.0,
                px + 5.0,
                py + 5.0,
                px - 5.0
            ),
            "circle" => writeln!(
                out,
                r#"<circle cx="{px}" cy="{py}" r="4" stroke="{stroke}" fill="{fill}" {attrs}/>"#
            ),
            _ => writeln!(
                out,
                r#"<circle cx="{px}" cy="{py}" r="2" stroke="{stroke}" fill="{fill}" {attrs}/>"#
            ),
        };
    }
    let _ = writeln!(out, "</g>");
    let legend = [
        ("classical theory", "steelblue"),
        ("classical measured", "steelblue"),
        ("quantum raw", "crimson"),
        ("quantum corrected", "crimson"),
    ];
    for (i, (label, color)) in legend.iter().enumerate() {
        let y = TOP + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" text-anchor="end" fill="{color}">{label}</text>"#,
            WIDTH - RIGHT - 8.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Grey-scale D×D map, darker for larger values.
pub fn heatmap_svg(title: &str, map: &JointMap) -> String {
    let d = map.pixel_count;
    let max = map.cells.iter().cloned().fold(0.0, f64::max);
    let size = (HEIGHT - TOP - BOTTOM).min(WIDTH - LEFT - RIGHT);
    let cell = size / d as f64;
    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(out, r#"<g class="cells">"#);
    for r in 0..d {
        for c in 0..d {
            let v = map.get(r, c);
            let shade = if max > 0.0 { 255.0 * v / max } else { 0.0 };
            let g = shade.round() as u8;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({g},{g},{g})" data-row="{r}" data-col="{c}" data-value="{v}"/>"#,
                LEFT + c as f64 * cell,
                TOP + (d - 1 - r) as f64 * cell
            );
        }
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">pixel of photon 2</text>"#,
        LEFT + size / 2.0,
        TOP + size + 20.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">pixel of photon 1</text>"#,
        LEFT - 20.0,
        TOP + size / 2.0,
        LEFT - 20.0,
        TOP + size / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// Pulls `name="value"` pairs back out of plot markers, in document order.
pub fn data_attribute(svg: &str, name: &str) -> Vec<String> {
    let key = format!("{name}=\"");
    let mut out = Vec::new();
    let mut rest = svg;
    while let Some(i) = rest.find(&key) {
        rest = &rest[i + key.len()..];
        let end = rest.find('"').unwrap_or(rest.len());
        out.push(rest[..end].to_string());
        rest = &rest[end..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use noon_ocm::analysis::{scaling_table, VisibilityPoint};

    #[test]
    fn tick_spacing() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(fmt_tick(0.25), "0.25");
        assert_eq!(fmt_tick(3.0), "3");
    }

    #[test]
    fn histogram_markers_carry_text_values() {
        let h = CentroidHistogram::from_counts(2, 4, vec![1.0, 4.0, 9.0, 4.0, 3.0, 1.0, 0.0])
            .unwrap()
            .with_coordinates(1e-4, 2.5e-4);
        let svg = histogram_svg("t", &h, None, Some(5e-4));
        let counts = data_attribute(&svg, "data-counts");
        let expected: Vec<String> = h.counts().iter().map(|c| c.to_string()).collect();
        assert_eq!(counts, expected);
        assert_eq!(data_attribute(&svg, "data-centroid").len(), h.len() + 2);
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn period_markers_step_by_period() {
        let h = CentroidHistogram::zeros(2, 11);
        let m = period_markers(&h, None, 3.0);
        assert_eq!(m, vec![0.0, 3.0, 6.0, 9.0]);
    }

    #[test]
    fn scaling_plot_has_every_row() {
        let t = scaling_table(
            &[VisibilityPoint::new(
                2,
                0.5,
                0.01,
                VisibilityKind::ClassicalMeasured,
            )],
            4,
            1.0,
        )
        .with_reference();
        let svg = scaling_svg("s", &t);
        assert_eq!(data_attribute(&svg, "data-visibility").len(), t.rows.len());
    }
}
