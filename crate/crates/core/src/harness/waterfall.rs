//! Monte-Carlo block and bit error campaigns with checkpointing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rank::gf2_rank;
use super::write_atomic;
use crate::decoder::{bp_decode, peel, sample_erasures, Outcome};
use crate::ensemble::{position_profile, EnsembleParams};
use crate::error::{Error, Result};
use crate::sampler::{condition_girth, sample_graph, TannerGraph};
use crate::stats::{derive_seed, rule_of_three, wilson_interval};

const STREAM_GRAPH: u64 = 1;
const STREAM_GIRTH: u64 = 2;
const STREAM_CHANNEL: u64 = 3;
const STREAM_PEEL: u64 = 4;

/// Codes are decoded in blocks of this size between checkpoints.
const BLOCK: usize = 8;

fn default_count() -> usize {
    100
}

fn default_cross_check() -> u64 {
    10
}

/// Sampling plan of one waterfall campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub params: EnsembleParams,
    pub epsilons: Vec<f64>,
    /// Graphs sampled from the ensemble; every graph is used at every `eps`.
    #[serde(default = "default_count")]
    pub codes: usize,
    /// Erasure patterns per graph and `eps`.
    #[serde(default = "default_count")]
    pub codewords: usize,
    #[serde(default)]
    pub seed: u64,
    /// Remove cycles of length 4 and 6 before decoding.
    #[serde(default)]
    pub girth_conditioning: bool,
    /// Also decode every `n`-th pattern by peeling and compare outcomes
    /// (0 disables).
    #[serde(default = "default_cross_check")]
    pub cross_check_every: u64,
    /// Compute the GF(2) rank of every sampled code.
    #[serde(default)]
    pub rank_rate: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(params: EnsembleParams, epsilons: Vec<f64>, codes: usize, codewords: usize, seed: u64) -> Self {
        ExperimentConfig {
            params,
            epsilons,
            codes,
            codewords,
            seed,
            girth_conditioning: false,
            cross_check_every: default_cross_check(),
            rank_rate: false,
            output_dir: None,
            workers: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.codes == 0 || self.codewords == 0 {
            return Err(Error::Config("codes and codewords must be at least 1".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("no erasure probabilities given".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("erasure probability {e} not in (0, 1)")));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Everything that determines the results; output location and worker
    /// count do not.
    fn fingerprint(&self) -> ExperimentConfig {
        ExperimentConfig {
            output_dir: None,
            workers: None,
            ..self.clone()
        }
    }
}

/// Raw counts for one `eps`, summed over codes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub words: u64,
    pub word_errors: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub iterations: u64,
    pub peel_checks: u64,
    pub peel_mismatches: u64,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.words += o.words;
        self.word_errors += o.word_errors;
        self.bits += o.bits;
        self.bit_errors += o.bit_errors;
        self.iterations += o.iterations;
        self.peel_checks += o.peel_checks;
        self.peel_mismatches += o.peel_mismatches;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CodeResult {
    counts: Vec<Counts>,
    rank: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Checkpoint {
    config: ExperimentConfig,
    done: BTreeMap<usize, CodeResult>,
}

/// One `eps` of a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub epsilon: f64,
    pub counts: Counts,
    pub word_error_rate: f64,
    /// 95% Wilson interval.
    pub wer_interval: (f64, f64),
    /// Rule-of-three bound when no word error was seen.
    pub wer_upper_bound: Option<f64>,
    pub bit_error_rate: f64,
    /// Wilson interval over bits; bits within a word are dependent, so this
    /// is optimistic.
    pub ber_interval: (f64, f64),
    pub mean_iterations: f64,
}

impl ResultRow {
    fn from_counts(epsilon: f64, c: Counts) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        ResultRow {
            epsilon,
            counts: c,
            word_error_rate: ratio(c.word_errors, c.words),
            wer_interval: wilson_interval(c.word_errors, c.words, 0.05),
            wer_upper_bound: (c.word_errors == 0).then(|| rule_of_three(c.words)),
            bit_error_rate: ratio(c.bit_errors, c.bits),
            ber_interval: wilson_interval(c.bit_errors, c.bits, 0.05),
            mean_iterations: ratio(c.iterations, c.words),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub config: ExperimentConfig,
    pub code_length: u64,
    /// `1 - checks / variables` from the node counts.
    pub design_rate: f64,
    /// `1 - rank(H) / N` averaged over the sampled codes, when computed.
    pub rank_rate: Option<f64>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "epsilon,words,word_errors,wer,wer_lo,wer_hi,wer_upper,bits,bit_errors,ber,ber_lo,ber_hi,mean_iterations,peel_checks,peel_mismatches\n",
        );
        for r in &self.rows {
            let c = &r.counts;
            s.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{},{},{},{:e},{:e},{:e},{},{},{}\n",
                r.epsilon,
                c.words,
                c.word_errors,
                r.word_error_rate,
                r.wer_interval.0,
                r.wer_interval.1,
                r.wer_upper_bound.map_or(String::new(), |u| format!("{u:e}")),
                c.bits,
                c.bit_errors,
                r.bit_error_rate,
                r.ber_interval.0,
                r.ber_interval.1,
                r.mean_iterations,
                c.peel_checks,
                c.peel_mismatches,
            ));
        }
        s
    }
}

/// Graph number `code` of a campaign.
pub fn campaign_graph(cfg: &ExperimentConfig, code: usize) -> Result<TannerGraph> {
    let g = sample_graph(&cfg.params, derive_seed(cfg.seed, STREAM_GRAPH, code as u64))?;
    if cfg.girth_conditioning {
        condition_girth(&g, 6, derive_seed(cfg.seed, STREAM_GIRTH, code as u64))
    } else {
        Ok(g)
    }
}

fn run_code(cfg: &ExperimentConfig, code: usize) -> Result<CodeResult> {
    let g = campaign_graph(cfg, code)?;
    let n = g.num_variables() as u64;
    let channel = derive_seed(cfg.seed, STREAM_CHANNEL, code as u64);
    let peel_base = derive_seed(cfg.seed, STREAM_PEEL, code as u64);
    let mut counts = Vec::with_capacity(cfg.epsilons.len());
    for (i, &eps) in cfg.epsilons.iter().enumerate() {
        let mut c = Counts::default();
        for k in 0..cfg.codewords as u64 {
            let pat = sample_erasures(&g, eps, derive_seed(channel, i as u64, k))?;
            let bp = bp_decode(&g, &pat, None)?;
            c.words += 1;
            c.bits += n;
            c.iterations += bp.iterations as u64;
            if bp.outcome == Outcome::Stall {
                c.word_errors += 1;
                c.bit_errors += bp.residual as u64;
            }
            if cfg.cross_check_every > 0 && k % cfg.cross_check_every == 0 {
                let tr = peel(&g, &pat, derive_seed(peel_base, i as u64, k))?;
                c.peel_checks += 1;
                if tr.outcome != bp.outcome || tr.residual.len() != bp.residual {
                    c.peel_mismatches += 1;
                }
            }
        }
        counts.push(c);
    }
    let rank = cfg.rank_rate.then(|| gf2_rank(&g));
    Ok(CodeResult { counts, rank })
}

/// Resumption and persistence settings of [`run_waterfall`].
#[derive(Clone, Debug, Default)]
pub struct RunControl {
    /// Continue from `checkpoint.json` in the output directory if present.
    pub resume: bool,
}

fn checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("checkpoint.json")
}

fn load_checkpoint(cfg: &ExperimentConfig, dir: &Path) -> Result<BTreeMap<usize, CodeResult>> {
    let path = checkpoint_path(dir);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let ck: Checkpoint = serde_json::from_slice(&fs::read(&path)?)?;
    if ck.config != cfg.fingerprint() {
        return Err(Error::Config(format!(
            "checkpoint {} belongs to a different configuration",
            path.display()
        )));
    }
    Ok(ck.done)
}

/// Decodes `codes x codewords` erasure patterns at every `eps`.
///
/// The result depends only on the configuration (not on the worker count or
/// on interruptions). With an output directory, a checkpoint is written
/// after every block of codes and `results.csv` plus `summary.json` at
/// the end.
pub fn run_waterfall(cfg: &ExperimentConfig, ctl: &RunControl) -> Result<ResultTable> {
    cfg.validate()?;
    let profile = position_profile(&cfg.params)?;
    let dir = cfg.output_dir.as_deref();
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let mut done = match (dir, ctl.resume) {
        (Some(d), true) => load_checkpoint(cfg, d)?,
        _ => BTreeMap::new(),
    };
    if !done.is_empty() {
        log::info!("resuming with {} of {} codes done", done.len(), cfg.codes);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let todo: Vec<usize> = (0..cfg.codes).filter(|c| !done.contains_key(c)).collect();
    for block in todo.chunks(BLOCK) {
        let results: Vec<Result<CodeResult>> =
            pool.install(|| block.par_iter().map(|&c| run_code(cfg, c)).collect());
        for (&c, r) in block.iter().zip(results) {
            done.insert(c, r?);
        }
        if let Some(d) = dir {
            let ck = Checkpoint {
                config: cfg.fingerprint(),
                done: done.clone(),
            };
            write_atomic(&checkpoint_path(d), &serde_json::to_vec(&ck)?)?;
        }
        log::debug!("{} / {} codes decoded", done.len(), cfg.codes);
    }

    let mut totals = vec![Counts::default(); cfg.epsilons.len()];
    for r in done.values() {
        for (t, c) in totals.iter_mut().zip(&r.counts) {
            t.add(c);
        }
    }
    let n = profile.code_length();
    let ranks: Vec<usize> = done.values().filter_map(|r| r.rank).collect();
    let rank_rate = (!ranks.is_empty())
        .then(|| ranks.iter().map(|&r| 1.0 - r as f64 / n as f64).sum::<f64>() / ranks.len() as f64);
    let table = ResultTable {
        config: cfg.clone(),
        code_length: n,
        design_rate: profile.design_rate(),
        rank_rate,
        rows: cfg
            .epsilons
            .iter()
            .zip(totals)
            .map(|(&e, c)| ResultRow::from_counts(e, c))
            .collect(),
    };
    if let Some(d) = dir {
        write_atomic(&d.join("results.csv"), table.to_csv().as_bytes())?;
        write_atomic(&d.join(super::WATERFALL_FILE), &serde_json::to_vec_pretty(&table)?)?;
    }
    Ok(table)
}
