//! Figure data files.
//!
//! A run directory may hold any of three artifacts:
//!
//! * `evolution.json`: a list of [`EvolutionSeries`];
//! * `summary.json`: the [`ResultTable`] of a campaign;
//! * `prediction.json`: the [`PredictionReport`] of the same ensemble.
//!
//! [`emit_plot_data`] turns them into one CSV per figure:
//!
//! | file | columns | needs |
//! |---|---|---|
//! | `fig2.csv` | `ensemble,epsilon,tau,r1` | evolution |
//! | `fig3.csv` | `ensemble,epsilon,tau,delta1` | evolution |
//! | `fig4.csv` | `epsilon,wer,wer_lo,wer_hi,wer_upper,predicted` | summary, prediction |
//! | `fig5.csv` | `epsilon,ber,ber_lo,ber_hi` | summary |
//! | `fig6.csv` | `epsilon,mean_iterations,words` | summary |
//!
//! `wer_upper` is the rule-of-three bound and is empty when errors were seen.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_atomic, ResultTable, EVOLUTION_FILE, PREDICTION_FILE, WATERFALL_FILE};
use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};
use crate::evolution::{solve_ce, SolverOptions};
use crate::predict::PredictionReport;

/// `r1` and `delta1` against `tau` for one ensemble and `eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSeries {
    pub params: EnsembleParams,
    pub epsilon: f64,
    pub tau: Vec<f64>,
    pub r1: Vec<f64>,
    pub delta1: Vec<f64>,
    pub tau_star: Option<f64>,
}

impl EvolutionSeries {
    fn label(&self) -> String {
        let p = &self.params;
        format!("({};{};{};{})", p.dv, p.dc, p.l, p.alpha)
    }
}

/// Integrates the covariance system, keeping every `stride`-th point.
pub fn evolution_series(params: &EnsembleParams, eps: f64, opts: &SolverOptions, stride: usize) -> Result<EvolutionSeries> {
    let ce = solve_ce(params, eps, opts)?;
    let stride = stride.max(1);
    let keep = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
    Ok(EvolutionSeries {
        params: params.clone(),
        epsilon: eps,
        tau: keep(&ce.tau),
        r1: keep(&ce.r1),
        delta1: keep(&ce.delta1),
        tau_star: ce.tau_star,
    })
}

/// Files written by [`emit_plot_data`] and figures skipped for want of
/// inputs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotFiles {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<(String, Vec<String>)>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
}

fn evolution_csv(series: &[EvolutionSeries], value: impl Fn(&EvolutionSeries) -> &[f64], name: &str) -> String {
    let mut s = format!("ensemble,epsilon,tau,{name}\n");
    for e in series {
        let label = e.label();
        for (t, v) in e.tau.iter().zip(value(e)) {
            let _ = writeln!(s, "{label},{},{t},{v:e}", e.epsilon);
        }
    }
    s
}

/// Writes every figure file whose inputs exist in `dir`.
///
/// Fails with [`Error::MissingArtifacts`] naming the expected inputs when
/// none of them is present. Output depends only on the artifact contents.
pub fn emit_plot_data(dir: &Path) -> Result<PlotFiles> {
    let evolution: Option<Vec<EvolutionSeries>> = read_json(&dir.join(EVOLUTION_FILE))?;
    let waterfall: Option<ResultTable> = read_json(&dir.join(WATERFALL_FILE))?;
    let prediction: Option<PredictionReport> = read_json(&dir.join(PREDICTION_FILE))?;
    if evolution.is_none() && waterfall.is_none() {
        return Err(Error::MissingArtifacts(
            [EVOLUTION_FILE, WATERFALL_FILE, PREDICTION_FILE]
                .iter()
                .map(|f| dir.join(f).display().to_string())
                .collect(),
        ));
    }

    let mut out = PlotFiles::default();
    let mut emit = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        out.written.push(path);
        Ok(())
    };

    match &evolution {
        Some(series) => {
            emit("fig2.csv", evolution_csv(series, |e| &e.r1, "r1"))?;
            emit("fig3.csv", evolution_csv(series, |e| &e.delta1, "delta1"))?;
        }
        None => {
            for f in ["fig2.csv", "fig3.csv"] {
                out.skipped.push((f.into(), vec![EVOLUTION_FILE.into()]));
            }
        }
    }

    let Some(table) = &waterfall else {
        for f in ["fig4.csv", "fig5.csv", "fig6.csv"] {
            out.skipped.push((f.into(), vec![WATERFALL_FILE.into()]));
        }
        return Ok(out);
    };
    match &prediction {
        Some(pred) => {
            let eps: Vec<f64> = table.rows.iter().map(|r| r.epsilon).collect();
            let curve = pred.curve_for(table.config.params.m, &eps)?;
            let mut s = String::from("epsilon,wer,wer_lo,wer_hi,wer_upper,predicted\n");
            for (r, (_, p)) in table.rows.iter().zip(curve) {
                let upper = r.wer_upper_bound.map_or(String::new(), |u| format!("{u:e}"));
                let _ = writeln!(
                    s,
                    "{},{:e},{:e},{:e},{upper},{p:e}",
                    r.epsilon, r.word_error_rate, r.wer_interval.0, r.wer_interval.1
                );
            }
            emit("fig4.csv", s)?;
        }
        None => out.skipped.push(("fig4.csv".into(), vec![PREDICTION_FILE.into()])),
    }
    let mut s = String::from("epsilon,ber,ber_lo,ber_hi\n");
    for r in &table.rows {
        let _ = writeln!(s, "{},{:e},{:e},{:e}", r.epsilon, r.bit_error_rate, r.ber_interval.0, r.ber_interval.1);
    }
    emit("fig5.csv", s)?;
    let mut s = String::from("epsilon,mean_iterations,words\n");
    for r in &table.rows {
        let _ = writeln!(s, "{},{},{}", r.epsilon, r.mean_iterations, r.counts.words);
    }
    emit("fig6.csv", s)?;
    Ok(out)
}
