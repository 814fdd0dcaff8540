//! Running the noise-space detector over scenario datasets.
//!
//! The detector never learns the generation settings: it inverts every
//! sample with one fixed backbone and solver (condition-free by default),
//! extracts the ten noise statistics, trains the FLD committee on the train
//! split, and reports test error rates.  Ablations rerun the same datasets
//! while varying exactly one detector knob.

use crate::backbones;
use crate::scenario::{build_dataset, distribution_preserving, Dataset, ScenarioConfig};
use noiselab_core::codecs::Scheme;
use noiselab_core::ensemble::{evaluate, train, Detector, EvalReport, FldHyper};
use noiselab_core::features::extract_features;
use noiselab_core::par;
use noiselab_core::prior::GuidanceConfig;
use noiselab_core::solvers::{SolverConfig, SolverKind};
use noiselab_core::stego::{invert_to_unit_noise, Backbone};
use noiselab_core::{Error, Result};

/// Conditioning used during detector-side inversion.  `TrueLabel` replays
/// each sample's recorded generation condition (an oracle upper bound on
/// what captioning could supply); natural covers have none and invert
/// unconditionally either way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GuidanceMode {
    Off,
    TrueLabel { omega: f64 },
}

impl GuidanceMode {
    pub fn name(self) -> String {
        match self {
            GuidanceMode::Off => "off".to_string(),
            GuidanceMode::TrueLabel { omega } => format!("true-label({omega})"),
        }
    }
}

/// Fixed inversion + training settings; deliberately independent of how any
/// particular dataset was generated.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSettings {
    pub backbone: String,
    pub solver: SolverConfig,
    pub guidance: GuidanceMode,
    pub hyper: FldHyper,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        DetectorSettings {
            backbone: "vp-b".to_string(),
            solver: SolverConfig { kind: SolverKind::Heun2, steps: 20 },
            guidance: GuidanceMode::Off,
            hyper: FldHyper::default(),
        }
    }
}

impl DetectorSettings {
    /// Short descriptor used as the result table's row key.  Comma-free so
    /// it can sit in a CSV cell unquoted.
    pub fn describe(&self) -> String {
        format!(
            "ns-dser({};{}/{};guidance={})",
            self.backbone,
            self.solver.kind.name(),
            self.solver.steps,
            self.guidance.name()
        )
    }
}

/// One scored stego population.
#[derive(Debug, Clone, PartialEq)]
pub struct RowResult {
    pub detector: String,
    pub scenario_id: u8,
    pub row: String,
    pub scheme: Scheme,
    pub dp: bool,
    pub report: EvalReport,
}

impl RowResult {
    pub fn accuracy_pct(&self) -> f64 {
        100.0 * self.report.balanced_accuracy()
    }
}

/// Invert samples against the detector's backbone and extract features.
pub fn feature_rows(
    samples: &[crate::scenario::Sample],
    inversion: &Backbone,
    settings: &DetectorSettings,
) -> Result<Vec<Vec<f64>>> {
    par::map_indexed(samples.len(), |i| {
        let s = &samples[i];
        let guidance = match settings.guidance {
            GuidanceMode::Off => GuidanceConfig::OFF,
            GuidanceMode::TrueLabel { omega } => GuidanceConfig { condition: s.prov.condition, omega },
        };
        let z = invert_to_unit_noise(inversion, &settings.solver, &guidance, &s.x0)?;
        let f = extract_features(&z, inversion.channels);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite feature on sample {i}")));
        }
        Ok(f)
    })
    .into_iter()
    .collect()
}

/// Train on the row's train split and score its test split, one result per
/// scheme present in the stego population (mixed rows yield several).
pub fn run_detector(ds: &Dataset, settings: &DetectorSettings, seed: u64) -> Result<Vec<RowResult>> {
    let inversion = backbones::backbone(&settings.backbone, ds.dim, ds.channels)?;
    let f_train_cover = feature_rows(&ds.train_cover, &inversion, settings)?;
    let f_train_stego = feature_rows(&ds.train_stego, &inversion, settings)?;
    let f_test_cover = feature_rows(&ds.test_cover, &inversion, settings)?;
    let f_test_stego = feature_rows(&ds.test_stego, &inversion, settings)?;
    let detector = train(&f_train_cover, &f_train_stego, &settings.hyper, seed)?;
    score(ds, settings, &detector, &f_test_cover, &f_test_stego)
}

fn score(
    ds: &Dataset,
    settings: &DetectorSettings,
    detector: &Detector,
    f_test_cover: &[Vec<f64>],
    f_test_stego: &[Vec<f64>],
) -> Result<Vec<RowResult>> {
    ds.row
        .schemes
        .iter()
        .map(|&scheme| {
            let subset: Vec<Vec<f64>> = ds
                .test_stego
                .iter()
                .zip(f_test_stego)
                .filter(|(s, _)| s.prov.scheme == Some(scheme))
                .map(|(_, f)| f.clone())
                .collect();
            if subset.is_empty() {
                return Err(Error::InvalidParam(format!("no test stegos carry scheme {}", scheme.name())));
            }
            let report = evaluate(detector, f_test_cover, &subset);
            Ok(RowResult {
                detector: settings.describe(),
                scenario_id: ds.scenario_id,
                row: ds.row.name.clone(),
                scheme,
                dp: distribution_preserving(scheme),
                report,
            })
        })
        .collect()
}

/// Run every row of a scenario with its configured detector.
pub fn run_scenario_rows(cfg: &ScenarioConfig) -> Result<(Vec<RowResult>, Vec<Dataset>)> {
    let mut results = Vec::new();
    let mut datasets = Vec::new();
    for row in cfg.rows() {
        let ds = build_dataset(cfg, &row)?;
        results.extend(run_detector(&ds, &cfg.detector, cfg.train_seed(&row))?);
        datasets.push(ds);
    }
    Ok((results, datasets))
}

/// Detector knob swept by an ablation.
#[derive(Debug, Clone, PartialEq)]
pub enum AblationAxis {
    /// Inversion step counts to try.
    InversionSteps(Vec<usize>),
    /// Condition-free vs true-label inversion at the given scale.
    Guidance { omega: f64 },
}

impl AblationAxis {
    pub fn name(&self) -> &'static str {
        match self {
            AblationAxis::InversionSteps(_) => "inversion-steps",
            AblationAxis::Guidance { .. } => "guidance",
        }
    }

    fn settings(&self, base: &DetectorSettings) -> Vec<(String, DetectorSettings)> {
        match self {
            AblationAxis::InversionSteps(steps) => steps
                .iter()
                .map(|&n| {
                    let mut s = base.clone();
                    s.solver.steps = n;
                    (n.to_string(), s)
                })
                .collect(),
            AblationAxis::Guidance { omega } => {
                let mut on = base.clone();
                on.guidance = GuidanceMode::TrueLabel { omega: *omega };
                let mut off = base.clone();
                off.guidance = GuidanceMode::Off;
                vec![("off".to_string(), off), ("true-label".to_string(), on)]
            }
        }
    }
}

/// One ablation cell: axis value and the per-row results under it.
#[derive(Debug, Clone)]
pub struct AblationTable {
    pub axis: String,
    /// (axis value, results) per setting, in sweep order.
    pub cells: Vec<(String, Vec<RowResult>)>,
}

impl AblationTable {
    /// Max − min accuracy (percentage points) across cells for one scheme.
    pub fn spread(&self, scheme: Scheme) -> Option<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, results) in &self.cells {
            for r in results.iter().filter(|r| r.scheme == scheme) {
                lo = lo.min(r.accuracy_pct());
                hi = hi.max(r.accuracy_pct());
            }
        }
        (hi >= lo).then_some(hi - lo)
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        let mut out = Vec::new();
        for (_, results) in &self.cells {
            for r in results {
                if !out.contains(&r.scheme) {
                    out.push(r.scheme);
                }
            }
        }
        out
    }
}

/// Rerun the scenario's detector varying exactly one axis; datasets are
/// built once and shared across cells so only the knob moves.
pub fn ablate(cfg: &ScenarioConfig, axis: &AblationAxis) -> Result<AblationTable> {
    let rows = cfg.rows();
    let mut datasets = Vec::with_capacity(rows.len());
    for row in &rows {
        datasets.push(build_dataset(cfg, row)?);
    }
    let mut cells = Vec::new();
    for (value, settings) in axis.settings(&cfg.detector) {
        let mut results = Vec::new();
        for (row, ds) in rows.iter().zip(&datasets) {
            results.extend(run_detector(ds, &settings, cfg.train_seed(row))?);
        }
        cells.push((value, results));
    }
    Ok(AblationTable { axis: axis.name().to_string(), cells })
}
