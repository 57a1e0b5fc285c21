//! Report assembly and emission: one schema-versioned JSON document per
//! run plus CSV tables for plotting. Output is byte-stable for a fixed
//! seed: no wall-clock timestamps, fixed field and row order, and float
//! formatting through the shortest round-trip representation.

use std::path::Path;

use equisep::separation::{LawFit, SeparationProfile};
use equisep::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub schema_version: u32,
    pub metadata: Metadata,
    pub snapshots: Vec<SnapshotReport>,
    #[serde(default)]
    pub sweep: Option<SweepReport>,
    #[serde(default)]
    pub pca: Vec<PcaRow>,
    pub epoch_log: Vec<EpochRow>,
    pub final_train_loss: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

/// Run provenance. Every protocol decision left implicit by the setup
/// is echoed here so no default is silent.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Metadata {
    pub code_version: String,
    pub seed: u64,
    pub config: Option<ExperimentConfig>,
    pub loss: String,
    pub init: String,
    pub probe_mode: String,
    pub weight_decay_mode: String,
    pub rel_tol: f64,
}

impl Metadata {
    pub fn new(seed: u64, config: Option<ExperimentConfig>, rel_tol: f64) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            loss: "softmax_cross_entropy".into(),
            init: "he_normal".into(),
            probe_mode: "eval_running_stats".into(),
            weight_decay_mode: "coupled_l2".into(),
            rel_tol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotReport {
    pub epoch: Option<usize>,
    pub split: String,
    /// "layers" or "blocks".
    pub grouping: String,
    pub points: Vec<ProfilePoint>,
    pub fit: Option<FitReport>,
    pub fit_error: Option<String>,
    pub relative_improvements: Vec<f64>,
    pub reduction_ratio: Option<f64>,
    pub perturbation_coefficient: Option<f64>,
    #[serde(default)]
    pub classwise: Vec<ClasswiseRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProfilePoint {
    pub index: usize,
    pub label: String,
    pub d: f64,
    pub log_d: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
    pub rho: f64,
    pub half_life: Option<f64>,
}

impl From<&LawFit> for FitReport {
    fn from(fit: &LawFit) -> Self {
        Self {
            slope: fit.slope,
            intercept: fit.intercept,
            pearson_r: fit.pearson_r,
            rho: fit.rho,
            half_life: fit.half_life,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClasswiseRow {
    pub layer: usize,
    pub class: usize,
    pub d: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepReport {
    pub best_lr: f64,
    pub entries: Vec<SweepRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub lr: f64,
    pub pearson_r: Option<f64>,
    pub rho: Option<f64>,
    pub final_d: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PcaRow {
    pub layer: usize,
    pub point: usize,
    pub x: f64,
    pub y: f64,
    pub label: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

/// Build the per-snapshot section from a profile and its derived
/// statistics; fit failures are recorded, not fatal.
pub fn snapshot_report(profile: &SeparationProfile, grouping: &str) -> SnapshotReport {
    let points = profile
        .values
        .iter()
        .zip(&profile.point_labels)
        .enumerate()
        .map(|(index, (&d, label))| ProfilePoint {
            index,
            label: label.clone(),
            d,
            log_d: d.ln(),
        })
        .collect();
    let (fit, fit_error) = match equisep::separation::fit_law(profile) {
        Ok(fit) => (Some(FitReport::from(&fit)), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let relative_improvements =
        equisep::separation::relative_improvements(profile).unwrap_or_default();
    let (reduction_ratio, perturbation_coefficient) =
        match equisep::separation::perturbation_coefficient(profile) {
            Ok((r, c)) => (Some(r), Some(c)),
            Err(_) => (None, None),
        };
    SnapshotReport {
        epoch: profile.epoch,
        split: profile.split.to_string(),
        grouping: grouping.to_string(),
        points,
        fit,
        fit_error,
        relative_improvements,
        reduction_ratio,
        perturbation_coefficient,
        classwise: Vec::new(),
    }
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report parse: {e}")))
    }

    /// Write report.json plus profiles.csv, fits.csv, classwise.csv and
    /// pca.csv into the output directory.
    pub fn emit(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(out_dir.join("report.json"), self.to_json()?)?;

        let mut profiles = String::from("epoch,split,grouping,layer,d,log_d\n");
        for snap in &self.snapshots {
            for point in &snap.points {
                profiles.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    epoch_str(snap.epoch),
                    snap.split,
                    snap.grouping,
                    point.index,
                    point.d,
                    point.log_d
                ));
            }
        }
        std::fs::write(out_dir.join("profiles.csv"), profiles)?;

        let mut fits =
            String::from("epoch,split,grouping,slope,intercept,pearson_r,rho,half_life\n");
        for snap in &self.snapshots {
            if let Some(fit) = &snap.fit {
                fits.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    epoch_str(snap.epoch),
                    snap.split,
                    snap.grouping,
                    fit.slope,
                    fit.intercept,
                    fit.pearson_r,
                    fit.rho,
                    fit.half_life.map_or(String::new(), |h| h.to_string())
                ));
            }
        }
        std::fs::write(out_dir.join("fits.csv"), fits)?;

        let mut classwise = String::from("epoch,split,layer,class,d\n");
        for snap in &self.snapshots {
            for row in &snap.classwise {
                classwise.push_str(&format!(
                    "{},{},{},{},{}\n",
                    epoch_str(snap.epoch),
                    snap.split,
                    row.layer,
                    row.class,
                    row.d
                ));
            }
        }
        std::fs::write(out_dir.join("classwise.csv"), classwise)?;

        let mut pca = String::from("layer,point,x,y,label\n");
        for row in &self.pca {
            pca.push_str(&format!(
                "{},{},{},{},{}\n",
                row.layer, row.point, row.x, row.y, row.label
            ));
        }
        std::fs::write(out_dir.join("pca.csv"), pca)?;

        let mut epochs = String::from("epoch,lr,loss,train_accuracy\n");
        for row in &self.epoch_log {
            epochs.push_str(&format!(
                "{},{},{},{}\n",
                row.epoch, row.lr, row.loss, row.accuracy
            ));
        }
        std::fs::write(out_dir.join("epochs.csv"), epochs)?;
        Ok(())
    }
}

fn epoch_str(epoch: Option<usize>) -> String {
    epoch.map_or(String::new(), |e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use equisep::separation::{SeparationProfile, Split};

    fn geometric_report() -> Report {
        let profile = SeparationProfile::from_values(
            vec![100.0, 50.0, 25.0, 12.5],
            Split::Train,
            Some(600),
        );
        Report {
            schema_version: SCHEMA_VERSION,
            metadata: Metadata::new(1, None, 1e-10),
            snapshots: vec![snapshot_report(&profile, "layers")],
            sweep: None,
            pca: vec![PcaRow {
                layer: 0,
                point: 0,
                x: 1.5,
                y: -2.5,
                label: 3,
            }],
            epoch_log: vec![EpochRow {
                epoch: 0,
                lr: 0.001,
                loss: 2.3,
                accuracy: 0.1,
            }],
            final_train_loss: Some(0.01),
            final_train_accuracy: Some(1.0),
            test_accuracy: None,
        }
    }

    #[test]
    fn geometric_fixture_rows_are_exact() {
        // [TRIVIAL] the (100, 50, 25, 12.5) profile fits rho 0.5, r = −1.
        let report = geometric_report();
        let fit = report.snapshots[0].fit.as_ref().unwrap();
        assert!((fit.rho - 0.5).abs() < 1e-12);
        assert!((fit.pearson_r + 1.0).abs() < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        report.emit(dir.path()).unwrap();
        let fits = std::fs::read_to_string(dir.path().join("fits.csv")).unwrap();
        let row = fits.lines().nth(1).unwrap();
        assert!(row.starts_with("600,train,layers,"), "{row}");
        let rho: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert!((rho - 0.5).abs() < 1e-12, "{row}");
        let profiles = std::fs::read_to_string(dir.path().join("profiles.csv")).unwrap();
        assert_eq!(profiles.lines().count(), 5);
        assert!(profiles.lines().nth(1).unwrap().contains(",100,"));
    }

    #[test]
    fn json_round_trips_to_an_equal_report() {
        let report = geometric_report();
        let text = report.to_json().unwrap();
        let back = Report::from_json(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn emission_is_byte_stable() {
        let report = geometric_report();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        report.emit(a.path()).unwrap();
        report.emit(b.path()).unwrap();
        for name in ["report.json", "profiles.csv", "fits.csv", "classwise.csv", "pca.csv", "epochs.csv"] {
            let left = std::fs::read(a.path().join(name)).unwrap();
            let right = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(left, right, "{name} differs");
        }
    }

    #[test]
    fn pca_export_has_two_coordinate_columns() {
        let report = geometric_report();
        let dir = tempfile::tempdir().unwrap();
        report.emit(dir.path()).unwrap();
        let pca = std::fs::read_to_string(dir.path().join("pca.csv")).unwrap();
        assert_eq!(pca.lines().next().unwrap(), "layer,point,x,y,label");
        assert_eq!(pca.lines().nth(1).unwrap(), "0,0,1.5,-2.5,3");
    }

    #[test]
    fn fit_failures_are_recorded_not_fatal() {
        let profile =
            SeparationProfile::from_values(vec![1.0, 0.5], Split::Test, None);
        let snap = snapshot_report(&profile, "layers");
        assert!(snap.fit.is_none());
        assert!(snap.fit_error.is_some());
        assert_eq!(snap.split, "test");
    }
}
