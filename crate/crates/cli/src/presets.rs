//! Bundled configurations reproducing the joint-map, centroid-histogram and
//! visibility-scaling figures.

use std::str::FromStr;

use anyhow::Result;
use noon_ocm::analysis::scaling_table;

use crate::config::{
    AnalysisSection, ArraySection, DetectorSection, EnvelopeSection, ExperimentConfig,
    FringeSection, KConstraint, RunSection, SourceKindName, SourceSection,
};
use crate::pipeline::{run_pipeline, Bundle};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Figure1b,
    Figure3,
    Figure4,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "figure1b" => Ok(Preset::Figure1b),
            "figure3" => Ok(Preset::Figure3),
            "figure4" => Ok(Preset::Figure4),
            other => Err(format!(
                "unknown preset `{other}` (figure1b, figure3, figure4)"
            )),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Figure1b => "figure1b",
            Preset::Figure3 => "figure3",
            Preset::Figure4 => "figure4",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub events: Option<u64>,
}

/// 808 nm light, 3-pixel fringe period on an 11-fibre ribbon, Gaussian beam
/// on the middle fibre, point-like cores.
pub fn base_config(
    kind: SourceKindName,
    photon_numbers: Vec<usize>,
    seed: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        output_dir: None,
        fringe: FringeSection {
            wavelength_nm: 808.0,
            angle_mrad: None,
            period_um: Some(750.0),
            phase_rad: 0.0,
            singles_visibility: 1.0,
            envelope: Some(EnvelopeSection {
                center_um: 1250.0,
                sigma_um: 450.0,
            }),
        },
        array: ArraySection {
            pixel_count: 11,
            pitch_um: 250.0,
            core_width_um: 0.00025,
            origin_um: 0.0,
        },
        source: SourceSection {
            kind,
            photon_numbers,
            background_fraction: if kind == SourceKindName::Mixed {
                0.4
            } else {
                0.0
            },
        },
        detector: DetectorSection::default(),
        run: RunSection {
            events: Some(1_000_000),
            pulses: None,
            seed,
            event_probability: noon_ocm::sim::DEFAULT_EVENT_PROBABILITY,
            emit_partial: false,
            write_events: false,
        },
        analysis: AnalysisSection {
            accidental_subtraction: kind == SourceKindName::Mixed,
            k_constraint: KConstraint::SinglesFit,
            ..AnalysisSection::default()
        },
    }
}

/// Sub-runs of a preset, each with the subdirectory it writes to.
pub fn preset_configs(preset: Preset, o: Overrides) -> Vec<(&'static str, ExperimentConfig)> {
    let seed = o.seed.unwrap_or(1);
    let mut runs = match preset {
        Preset::Figure1b => {
            let mut c = base_config(SourceKindName::Classical, vec![2], seed);
            let mut q = base_config(SourceKindName::Noon, vec![2], seed);
            for cfg in [&mut c, &mut q] {
                cfg.array.core_width_um = 62.5;
                cfg.detector.number_resolving = false;
                cfg.run.events = Some(100_000);
                cfg.run.write_events = true;
                cfg.analysis.joint_maps = true;
                cfg.analysis.accidental_subtraction = false;
                cfg.analysis.singles_events = 100_000;
            }
            vec![("classical", c), ("noon", q)]
        }
        Preset::Figure3 => vec![(
            "quantum",
            base_config(SourceKindName::Mixed, vec![2, 3, 4], seed),
        )],
        Preset::Figure4 => vec![
            (
                "classical",
                base_config(SourceKindName::Classical, vec![1, 2, 3, 4], seed),
            ),
            (
                "quantum",
                base_config(SourceKindName::Mixed, vec![2, 3, 4], seed.wrapping_add(100)),
            ),
        ],
    };
    if let Some(e) = o.events {
        for (_, c) in &mut runs {
            c.run.events = Some(e);
            c.analysis.singles_events = e;
        }
    }
    runs
}

/// Runs every sub-configuration and merges the results. The visibility
/// preset also gets a combined scaling table with the laboratory values.
pub fn run_preset(preset: Preset, o: Overrides) -> Result<Bundle> {
    let mut bundle = Bundle::default();
    for (dir, cfg) in preset_configs(preset, o) {
        let sub = run_pipeline(&cfg)
            .map_err(|e| e.context(format!("preset {} sub-run `{dir}`", preset.name())))?;
        let mut sub = sub.nest(dir);
        sub.scaling = None;
        bundle.absorb(sub);
    }
    let nmax = bundle
        .points
        .iter()
        .map(|p| p.photon_number)
        .max()
        .unwrap_or(1)
        .max(4);
    let mut table = scaling_table(&bundle.points, nmax, 1.0);
    if preset == Preset::Figure4 {
        table = table.with_reference();
    }
    bundle.artifacts.push(crate::pipeline::Artifact {
        path: "scaling.tsv".into(),
        contents: table.to_delimited(),
    });
    bundle.scaling = Some(table);
    Ok(bundle)
}
