//! simulate → project → fit → subtract → tabulate, collected in memory and
//! written to disk only once every stage has succeeded.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use noon_ocm::analysis::{
    estimate_accidentals, scaling_table, subtract_accidentals, ScalingTable, SinglesRates,
    VisibilityKind, VisibilityPoint,
};
use noon_ocm::fit::{fit_fringe, FitResult};
use noon_ocm::fringe::{joint_distribution, SourceKind, SourceModel};
use noon_ocm::ocm::{joint_map_2d, project_events, CentroidHistogram, JointMap};
use noon_ocm::sim::{
    events_to_delimited, sample_events, sample_singles_calibration, CalibrationExposure,
    Constituent, Exposure, SimOutput, SimRun, SinglesCalibration,
};

use crate::config::{ExperimentConfig, KConstraint, Resolved};
use crate::plot;

/// One output file, path relative to the bundle root.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub path: PathBuf,
    pub contents: String,
}

#[derive(Clone, Debug)]
pub struct HistogramEntry {
    /// Relative path stem, e.g. `N3/histogram`.
    pub name: String,
    pub title: String,
    pub hist: CentroidHistogram,
    pub fit: Option<FitResult>,
    pub classical_period: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Bundle {
    pub artifacts: Vec<Artifact>,
    pub histograms: Vec<HistogramEntry>,
    pub maps: Vec<(String, String, JointMap)>,
    pub scaling: Option<ScalingTable>,
    pub points: Vec<VisibilityPoint>,
    pub warnings: Vec<String>,
}

impl Bundle {
    fn add(&mut self, path: impl Into<PathBuf>, contents: String) {
        self.artifacts.push(Artifact {
            path: path.into(),
            contents,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.artifacts.is_empty()
            && self.histograms.is_empty()
            && self.maps.is_empty()
            && self.scaling.is_none()
    }

    /// Re-roots everything under `dir`.
    pub fn nest(mut self, dir: &str) -> Self {
        for a in &mut self.artifacts {
            a.path = Path::new(dir).join(&a.path);
        }
        for h in &mut self.histograms {
            h.name = format!("{dir}/{}", h.name);
        }
        for m in &mut self.maps {
            m.0 = format!("{dir}/{}", m.0);
        }
        self
    }

    pub fn absorb(&mut self, other: Bundle) {
        self.artifacts.extend(other.artifacts);
        self.histograms.extend(other.histograms);
        self.maps.extend(other.maps);
        self.points.extend(other.points);
        self.warnings.extend(other.warnings);
        if self.scaling.is_none() {
            self.scaling = other.scaling;
        }
    }
}

fn seed_for(base: u64, photon_number: usize) -> u64 {
    base.wrapping_add(photon_number as u64)
}

fn simulate(r: &Resolved, source: SourceModel, exposure: Exposure) -> Result<(SimRun, SimOutput)> {
    let mut run = SimRun::new(
        source,
        r.fringe,
        r.geometry,
        exposure,
        seed_for(r.seed, source.photon_number),
    )
    .detector(r.detector);
    run.event_probability = r.event_probability;
    run.emit_partial = r.emit_partial;
    let out = sample_events(&run)?;
    Ok((run, out))
}

fn histogram(r: &Resolved, out: &SimOutput, n: usize) -> Result<CentroidHistogram> {
    Ok(project_events(&out.events, n, r.geometry.pixel_count)?
        .with_coordinates(r.geometry.origin, r.geometry.pitch))
}

fn calibration_table(background: &SinglesCalibration, dark: &SinglesCalibration) -> String {
    let mut out = format!(
        "# background_pulses\t{}\n# dark_pulses\t{}\npixel\tbackground_counts\tdark_counts\n",
        background.pulses, dark.pulses
    );
    for (i, (b, d)) in background.counts.iter().zip(&dark.counts).enumerate() {
        let _ = writeln!(out, "{i}\t{b}\t{d}");
    }
    out
}

fn point_kind(kind: SourceKind) -> VisibilityKind {
    match kind {
        SourceKind::Classical => VisibilityKind::ClassicalMeasured,
        SourceKind::IdealNoon | SourceKind::Mixed => VisibilityKind::QuantumRaw,
    }
}

/// Runs every stage of one configuration. Nothing touches the disk.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<Bundle> {
    let r = config.resolve()?;
    let mut bundle = Bundle::default();
    bundle.add("config.toml", config.to_toml());
    let classical_period = Some(r.fringe.period());

    let k1 = match r.analysis.k_constraint {
        KConstraint::Explicit => r.k1,
        KConstraint::Free => None,
        KConstraint::SinglesFit => {
            let stage = "singles fit";
            let (_, out) = simulate(
                &r,
                SourceModel::classical(1)?,
                Exposure::Events(r.analysis.singles_events),
            )
            .with_context(|| format!("stage `{stage}`: simulation"))?;
            let hist =
                histogram(&r, &out, 1).with_context(|| format!("stage `{stage}`: projection"))?;
            let fit = fit_fringe(&hist, None).with_context(|| format!("stage `{stage}`: fit"))?;
            bundle.add("singles/histogram.tsv", hist.to_delimited());
            bundle.add("singles/fit.txt", fit.to_key_value());
            bundle.add("singles/report.txt", out.report.to_key_value());
            let k = fit.params.frequency;
            bundle.histograms.push(HistogramEntry {
                name: "singles/histogram".into(),
                title: "singles".into(),
                hist,
                fit: Some(fit),
                classical_period,
            });
            Some(k)
        }
    };

    for &source in &r.sources {
        let n = source.photon_number;
        let dir = format!("N{n}");
        let stage = |what: &str| format!("stage `{what}` (N={n})");
        let (run, out) = simulate(&r, source, r.exposure).with_context(|| stage("simulate"))?;
        if r.write_events {
            bundle.add(
                format!("{dir}/events.txt"),
                events_to_delimited(&out.events),
            );
            if r.emit_partial {
                bundle.add(
                    format!("{dir}/partial_events.txt"),
                    events_to_delimited(&out.partial_events),
                );
            }
        }
        bundle.add(format!("{dir}/report.txt"), out.report.to_key_value());
        let hist = histogram(&r, &out, n).with_context(|| stage("project"))?;
        let k = k1.map(|k| n as f64 * k);
        let fit = fit_fringe(&hist, k).with_context(|| stage("fit"))?;
        bundle.add(format!("{dir}/histogram.tsv"), hist.to_delimited());
        bundle.add(format!("{dir}/fit.txt"), fit.to_key_value());
        bundle.points.push(VisibilityPoint::new(
            n,
            fit.visibility(),
            fit.visibility_sigma(),
            point_kind(source.kind),
        ));

        if r.analysis.accidental_subtraction {
            let background = sample_singles_calibration(
                &run,
                Constituent::Background,
                CalibrationExposure::Photons(r.analysis.calibration_photons),
            )
            .with_context(|| stage("calibrate background"))?;
            let dark = sample_singles_calibration(
                &run,
                Constituent::Dark,
                CalibrationExposure::Pulses(out.report.pulses),
            )
            .with_context(|| stage("calibrate dark"))?;
            let acc = estimate_accidentals(
                &SinglesRates::from(&background),
                &SinglesRates::from(&dark),
                n,
                out.report.pulses as f64,
                !r.detector.number_resolving,
            )
            .with_context(|| stage("estimate accidentals"))?
            .with_coordinates(r.geometry.origin, r.geometry.pitch);
            let corrected =
                subtract_accidentals(&hist, &acc).with_context(|| stage("subtract accidentals"))?;
            let cfit = fit_fringe(&corrected, k).with_context(|| stage("fit corrected"))?;
            bundle.add(
                format!("{dir}/calibration.tsv"),
                calibration_table(&background, &dark),
            );
            bundle.add(format!("{dir}/accidentals.tsv"), acc.to_delimited());
            bundle.add(format!("{dir}/corrected.tsv"), corrected.to_delimited());
            bundle.add(format!("{dir}/fit_corrected.txt"), cfit.to_key_value());
            bundle.points.push(VisibilityPoint::new(
                n,
                cfit.visibility(),
                cfit.visibility_sigma(),
                VisibilityKind::QuantumCorrected,
            ));
            bundle.histograms.push(HistogramEntry {
                name: format!("{dir}/corrected"),
                title: format!("N = {n}, accidentals subtracted"),
                hist: corrected,
                fit: Some(cfit),
                classical_period,
            });
        }

        if r.analysis.joint_maps && n == 2 {
            let theory =
                JointMap::from_joint(&joint_distribution(&source, &r.fringe, &r.geometry)?)
                    .with_context(|| stage("joint map theory"))?;
            let simulated = joint_map_2d(&out.events, r.geometry.pixel_count)
                .with_context(|| stage("joint map"))?;
            bundle.add(format!("{dir}/joint_theory.tsv"), theory.to_delimited());
            bundle.add(
                format!("{dir}/joint_simulated.tsv"),
                simulated.to_delimited(),
            );
            bundle.maps.push((
                format!("{dir}/joint_theory"),
                format!("{} theory", source.kind.name()),
                theory,
            ));
            bundle.maps.push((
                format!("{dir}/joint_simulated"),
                format!("{} simulated", source.kind.name()),
                simulated,
            ));
        }

        bundle.histograms.push(HistogramEntry {
            name: format!("{dir}/histogram"),
            title: format!("N = {n}, {}", source.kind.name()),
            hist,
            fit: Some(fit),
            classical_period,
        });
    }

    let nmax = r.sources.iter().map(|s| s.photon_number).max().unwrap_or(1);
    let table = scaling_table(&bundle.points, nmax, r.fringe.singles_visibility);
    bundle.add("scaling.tsv", table.to_delimited());
    bundle.scaling = Some(table);
    Ok(bundle)
}

/// Plot files for a bundle. An empty bundle yields a warning and no files.
pub fn render_plots(bundle: &Bundle) -> (Vec<Artifact>, Vec<String>) {
    let mut out = Vec::new();
    if bundle.histograms.is_empty() && bundle.maps.is_empty() && bundle.scaling.is_none() {
        return (
            out,
            vec!["nothing to plot: bundle holds no histograms, maps or tables".into()],
        );
    }
    for h in &bundle.histograms {
        out.push(Artifact {
            path: PathBuf::from(format!("{}.svg", h.name)),
            contents: plot::histogram_svg(&h.title, &h.hist, h.fit.as_ref(), h.classical_period),
        });
        let mut overlay = String::new();
        if let Some(period) = h.classical_period {
            for x in plot::period_markers(&h.hist, h.fit.as_ref(), period) {
                let _ = writeln!(overlay, "# classical_period_marker\t{x}");
            }
        }
        if let Some(fit) = &h.fit {
            overlay.push_str("centroid\tmodel\n");
            for (x, y) in plot::fit_curve(&h.hist, fit) {
                let _ = writeln!(overlay, "{x}\t{y}");
            }
        }
        out.push(Artifact {
            path: PathBuf::from(format!("{}_overlay.tsv", h.name)),
            contents: overlay,
        });
    }
    for (name, title, map) in &bundle.maps {
        out.push(Artifact {
            path: PathBuf::from(format!("{name}.svg")),
            contents: plot::heatmap_svg(title, map),
        });
    }
    if let Some(table) = &bundle.scaling {
        out.push(Artifact {
            path: PathBuf::from("scaling.svg"),
            contents: plot::scaling_svg("visibility against photon number", table),
        });
    }
    (out, Vec::new())
}

/// Writes all artifacts below `dir`. If any write fails, the files written
/// so far are removed again.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let result = (|| -> Result<()> {
        for a in artifacts {
            let path = dir.join(&a.path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            fs::write(&path, &a.contents).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(())
    })();
    if let Err(e) = result {
        for p in written.iter().rev() {
            let _ = fs::remove_file(p);
            let mut parent = p.parent();
            while let Some(d) = parent {
                if d == dir || fs::remove_dir(d).is_err() {
                    break;
                }
                parent = d.parent();
            }
        }
        return Err(e.context("output removed after a failed write"));
    }
    Ok(written)
}

/// Full run: pipeline, plots (when enabled) and disk output.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let bundle = run_pipeline(config)?;
    finish(bundle, config.analysis.plots, dir)
}

pub fn finish(mut bundle: Bundle, plots: bool, dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    if plots {
        let (files, warnings) = render_plots(&bundle);
        bundle.artifacts.extend(files);
        bundle.warnings.extend(warnings);
    }
    let written = write_artifacts(dir, &bundle.artifacts)?;
    Ok((written, bundle.warnings))
}
