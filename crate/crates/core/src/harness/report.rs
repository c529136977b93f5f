//! Run records, CSV tables and the metadata sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::observables::ObservableTrace;
use crate::problem::Model;

/// Exact CSV header of each experiment.
pub fn csv_header(experiment: Experiment) -> &'static [&'static str] {
    match experiment {
        Experiment::AccuracySweep => &["model", "eps", "H", "h", "scheme", "stencil", "error"],
        Experiment::SplittingTable => &["model", "eps", "h", "error"],
        Experiment::Efficiency => &["model", "eps", "method", "N_step", "error"],
        Experiment::InvariantsLongTime => &["model", "eps", "macro", "t", "mass_err", "energy_err"],
        Experiment::ModeEvolution => {
            &["model", "eps", "method", "t", "mode_index_x", "mode_index_y", "magnitude"]
        }
    }
}

/// One solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: Model,
    pub eps: f64,
    /// `sam`, `sam_envelope`, `fam`, or a splitting label such as `tsfp4`.
    pub method: String,
    /// Macro scheme of SAM runs.
    #[serde(default)]
    pub scheme: Option<String>,
    #[serde(default)]
    pub stencil: Option<u32>,
    /// Macro step `H` in the original time variable.
    #[serde(rename = "H", default)]
    pub big_h: Option<f64>,
    /// Micro or splitting step.
    #[serde(default)]
    pub h: Option<f64>,
    /// Distance to the reference; NaN when the run failed.
    #[serde(default)]
    pub error: Option<f64>,
    #[serde(rename = "N_step")]
    pub n_step: u64,
    pub wall_time_s: f64,
    /// Mode indices of a mode-magnitude trace.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<(i64, i64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<ObservableTrace>,
}

impl RunRecord {
    pub fn new(model: Model, eps: f64, method: impl Into<String>) -> Self {
        Self {
            model,
            eps,
            method: method.into(),
            scheme: None,
            stencil: None,
            big_h: None,
            h: None,
            error: None,
            n_step: 0,
            wall_time_s: 0.0,
            modes: Vec::new(),
            traces: Vec::new(),
        }
    }

    pub fn error_value(&self) -> f64 {
        self.error.unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub eps: f64,
    pub run: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
    pub failures: Vec<Failure>,
    pub wall_time_s: f64,
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

impl RunReport {
    pub fn experiment(&self) -> Experiment {
        self.config.experiment
    }

    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    /// Records whose method equals `method`.
    pub fn by_method<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.iter().filter(move |r| r.method == method)
    }

    /// CSV rows (without header) in record order.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let f = fmt_float;
        let opt = |x: Option<f64>| x.map_or_else(|| f(f64::NAN), f);
        let mut rows = Vec::new();
        for r in &self.records {
            let model = r.model.name().to_string();
            match self.experiment() {
                Experiment::AccuracySweep => rows.push(vec![
                    model,
                    f(r.eps),
                    opt(r.big_h),
                    opt(r.h),
                    r.scheme.clone().unwrap_or_default(),
                    r.stencil.map(|s| s.to_string()).unwrap_or_default(),
                    f(r.error_value()),
                ]),
                Experiment::SplittingTable => {
                    rows.push(vec![model, f(r.eps), opt(r.h), f(r.error_value())])
                }
                Experiment::Efficiency => rows.push(vec![
                    model,
                    f(r.eps),
                    r.method.clone(),
                    r.n_step.to_string(),
                    f(r.error_value()),
                ]),
                Experiment::InvariantsLongTime => {
                    let [mass, energy] = r.traces.as_slice() else { continue };
                    for (i, &t) in mass.times.iter().enumerate() {
                        rows.push(vec![
                            model.clone(),
                            f(r.eps),
                            r.scheme.clone().unwrap_or_default(),
                            f(t),
                            f(mass.values[i][0]),
                            f(energy.values[i][0]),
                        ]);
                    }
                }
                Experiment::ModeEvolution => {
                    let Some(trace) = r.traces.first() else { continue };
                    for (i, &t) in trace.times.iter().enumerate() {
                        for (j, &(kx, ky)) in r.modes.iter().enumerate() {
                            rows.push(vec![
                                model.clone(),
                                f(r.eps),
                                r.method.clone(),
                                f(t),
                                kx.to_string(),
                                ky.to_string(),
                                f(trace.values[i][j]),
                            ]);
                        }
                    }
                }
            }
        }
        rows
    }

    /// Writes the CSV table to `w`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(csv_header(self.experiment())).map_err(csv_err)?;
        for row in self.csv_rows() {
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Metadata document: config, per-run timings and counters, failures.
    /// Traces are left out; they are in the CSV.
    pub fn metadata_json(&self) -> Result<String> {
        let mut meta = self.clone();
        meta.records.iter_mut().for_each(|r| r.traces.clear());
        Ok(serde_json::to_string_pretty(&meta)?)
    }

    /// Writes `<stem>.csv` and `<stem>.meta.json` into `dir`; returns the
    /// CSV path.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let stem = self.experiment().file_stem();
        let csv_path = dir.join(format!("{stem}.csv"));
        self.write_csv(fs::File::create(&csv_path)?)?;
        fs::write(dir.join(format!("{stem}.meta.json")), self.metadata_json()?)?;
        Ok(csv_path)
    }
}
