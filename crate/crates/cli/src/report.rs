//! Per-run summaries and the aggregated comparison table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use unlearn_core::{Error, Result};

/// What one `break` run leaves behind in `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub mode: String,
    pub dataset_seed: u64,
    /// Test accuracy of a plain model trained on the protected set.
    pub no_defense_accuracy: f64,
    /// Test accuracy after the defense.
    pub defense_accuracy: f64,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: String,
    pub no_defense: f64,
    pub opa: Option<f64>,
    pub nonlinear: Option<f64>,
    /// `100 (nonlinear - opa) / opa`, recomputed from the stored accuracies.
    pub improvement_pct: Option<f64>,
    pub adv_train: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset_seed: u64,
    pub rows: Vec<ReportRow>,
}

/// Relative gain of the nonlinear break over the projection attack, in percent.
pub fn improvement(ours: f64, opa: f64) -> Option<f64> {
    (opa > 0.0).then(|| 100.0 * (ours - opa) / opa)
}

impl ExperimentReport {
    /// Groups runs by name in order of first appearance. All runs must share
    /// one dataset seed, and each (name, mode) pair may appear once.
    pub fn aggregate(runs: &[RunSummary]) -> Result<Self> {
        let first = runs.first().ok_or_else(|| Error::Contract("no runs to aggregate".into()))?;
        if let Some(r) = runs.iter().find(|r| r.dataset_seed != first.dataset_seed) {
            return Err(Error::Contract(format!(
                "runs use different dataset seeds ({} and {}); results are not comparable",
                first.dataset_seed, r.dataset_seed
            )));
        }
        let mut rows: Vec<ReportRow> = Vec::new();
        let mut seen: Vec<(&str, &str)> = Vec::new();
        for run in runs {
            if seen.contains(&(run.name.as_str(), run.mode.as_str())) {
                return Err(Error::Contract(format!("duplicate {} run for `{}`", run.mode, run.name)));
            }
            seen.push((&run.name, &run.mode));
            let idx = match rows.iter().position(|r| r.approach == run.name) {
                Some(i) => i,
                None => {
                    rows.push(ReportRow {
                        approach: run.name.clone(),
                        no_defense: run.no_defense_accuracy,
                        opa: None,
                        nonlinear: None,
                        improvement_pct: None,
                        adv_train: None,
                    });
                    rows.len() - 1
                }
            };
            let row = &mut rows[idx];
            let slot = match run.mode.as_str() {
                "opa" => &mut row.opa,
                "nonlinear" => &mut row.nonlinear,
                "advtrain" => &mut row.adv_train,
                other => return Err(Error::Contract(format!("unknown run mode `{other}`"))),
            };
            *slot = Some(run.defense_accuracy);
        }
        for row in &mut rows {
            row.improvement_pct = match (row.nonlinear, row.opa) {
                (Some(ours), Some(opa)) => improvement(ours, opa),
                _ => None,
            };
        }
        Ok(ExperimentReport { dataset_seed: first.dataset_seed, rows })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("approach,no_defense,opa,nonlinear,improvement_pct,adv_train\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.approach,
                r.no_defense,
                cell(r.opa),
                cell(r.nonlinear),
                cell(r.improvement_pct),
                cell(r.adv_train)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(name: &str, mode: &str, seed: u64, acc: f64) -> RunSummary {
        RunSummary {
            name: name.into(),
            mode: mode.into(),
            dataset_seed: seed,
            no_defense_accuracy: 0.2,
            defense_accuracy: acc,
            metrics: BTreeMap::new(),
        }
    }

    #[test]
    fn improvement_arithmetic() {
        let pct = improvement(0.887, 0.615).unwrap();
        assert!((pct - 44.2276).abs() < 1e-3, "{pct}");
        assert_eq!(format!("{pct:.1}"), "44.2");
        assert_eq!(improvement(0.5, 0.0), None);
    }

    #[test]
    fn rows_merge_by_name() {
        let runs = vec![run("ntga", "opa", 7, 0.615), run("ntga", "nonlinear", 7, 0.887), run("ops", "advtrain", 7, 0.5)];
        let report = ExperimentReport::aggregate(&runs).unwrap();
        assert_eq!(report.rows.len(), 2);
        let ntga = &report.rows[0];
        assert_eq!((ntga.opa, ntga.nonlinear), (Some(0.615), Some(0.887)));
        assert!((ntga.improvement_pct.unwrap() - 44.2276).abs() < 1e-3);
        assert_eq!(report.rows[1].improvement_pct, None);
        assert!(report.to_csv().starts_with("approach,no_defense,opa,nonlinear,improvement_pct,adv_train\nntga,0.2,0.615,0.887,"));
        assert!(report.to_csv().ends_with("ops,0.2,,,,0.5\n"));
    }

    #[test]
    fn single_run_single_row() {
        let report = ExperimentReport::aggregate(&[run("ar", "nonlinear", 7, 0.8)]).unwrap();
        assert_eq!(report.rows.len(), 1);
        let back: ExperimentReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn guards() {
        let mixed = ExperimentReport::aggregate(&[run("a", "opa", 7, 0.5), run("a", "nonlinear", 8, 0.6)]).unwrap_err();
        assert_eq!(mixed.exit_code(), 3);
        assert!(ExperimentReport::aggregate(&[]).is_err());
        assert!(ExperimentReport::aggregate(&[run("a", "opa", 7, 0.5), run("a", "opa", 7, 0.6)]).is_err());
    }
}
