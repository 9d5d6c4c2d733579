//! Monte-Carlo moments of the peeling process, used as the oracle for the
//! mean and covariance evolution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Layout, R1Range};
use crate::decoder::{peel_with, sample_erasures, Outcome, TraceMode, TraceSample};
use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};
use crate::sampler::sample_graph;
use crate::stats::{derive_seed, mean_variance, RunningCovariance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConfig {
    /// Base section size of the simulated graphs.
    pub m_sim: u64,
    pub trials: usize,
    pub seed: u64,
    /// Normalized times `tau = t / M` at which the residual graph is recorded.
    pub probes: Vec<f64>,
    /// Also accumulate the full covariance matrix at each probe.
    pub full_covariance: bool,
    pub r1_range: R1Range,
    pub delta1_range: R1Range,
}

impl EmpiricalConfig {
    pub fn new(m_sim: u64, trials: usize, seed: u64, probes: Vec<f64>) -> Self {
        EmpiricalConfig {
            m_sim,
            trials,
            seed,
            probes,
            full_covariance: true,
            r1_range: R1Range::All,
            delta1_range: R1Range::Chain,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub layout: Layout,
    pub m_sim: u64,
    pub trials: usize,
    pub probes: Vec<f64>,
    /// Sample mean of the normalized state at each probe.
    pub mean: Vec<Vec<f64>>,
    /// `M` times the sample covariance of the normalized state at each
    /// probe (empty unless requested).
    pub delta: Vec<Vec<f64>>,
    /// `r1 = R1 / M` over `r1_range` of every trial at each probe.
    pub r1_samples: Vec<Vec<f64>>,
    /// The same over `delta1_range`.
    pub r1_delta_samples: Vec<Vec<f64>>,
    pub successes: usize,
}

impl EmpiricalMoments {
    pub fn r1_mean(&self, k: usize) -> f64 {
        mean_variance(&self.r1_samples[k]).0
    }

    /// Standard error of the mean of `r1` at probe `k`.
    pub fn r1_standard_error(&self, k: usize) -> f64 {
        let (_, v) = mean_variance(&self.r1_samples[k]);
        (v / self.trials as f64).sqrt()
    }

    /// `delta_1 = M * Var[r1]` at probe `k`.
    pub fn delta1(&self, k: usize) -> f64 {
        mean_variance(&self.r1_delta_samples[k]).1 * self.m_sim as f64
    }
}

struct Acc {
    moments: Vec<RunningCovariance>,
    r1: Vec<Vec<f64>>,
    r1_delta: Vec<Vec<f64>>,
    successes: usize,
}

fn normalize(lay: &Layout, s: &TraceSample, m: f64) -> Vec<f64> {
    let dc = lay.dc;
    let mut x = vec![0.0; lay.dim()];
    for slot in 0..lay.positions() {
        for j in 1..=dc {
            x[lay.r_index(j, slot)] = s.r[slot * dc + j - 1] as f64 / m;
        }
        x[lay.v_index(slot)] = s.v[slot] as f64 / m;
    }
    x
}

/// Runs `trials` independent (graph, channel, peeling) realizations and
/// aggregates the residual graph statistics at the probe times.
///
/// Trials are processed in fixed blocks merged in order, so the result is
/// independent of the number of worker threads.
pub fn empirical_moments(
    params: &EnsembleParams,
    eps: f64,
    cfg: &EmpiricalConfig,
) -> Result<EmpiricalMoments> {
    if cfg.trials < 2 {
        return Err(Error::InvalidArgument("empirical moments need at least two trials".into()));
    }
    if cfg.probes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("probe times must be ascending".into()));
    }
    let sim = params.with_m(cfg.m_sim);
    let lay = Layout::new(&sim);
    let m = cfg.m_sim as f64;
    let steps: Vec<u64> = cfg.probes.iter().map(|t| (t * m).round().max(0.0) as u64).collect();
    let mode = TraceMode::Steps(steps);
    let np = cfg.probes.len();
    let dim = if cfg.full_covariance { lay.dim() } else { 0 };
    let r1_slots = lay.r1_slots(cfg.r1_range);
    let delta_slots = lay.r1_slots(cfg.delta1_range);

    const BLOCK: usize = 8;
    let blocks: Vec<usize> = (0..cfg.trials.div_ceil(BLOCK)).collect();
    let partial: Vec<Result<Acc>> = blocks
        .par_iter()
        .map(|&b| {
            let mut acc = Acc {
                moments: (0..np).map(|_| RunningCovariance::new(dim)).collect(),
                r1: vec![Vec::new(); np],
                r1_delta: vec![Vec::new(); np],
                successes: 0,
            };
            for trial in b * BLOCK..((b + 1) * BLOCK).min(cfg.trials) {
                let t = trial as u64;
                let g = sample_graph(&sim, derive_seed(cfg.seed, 0, t))?;
                let pat = sample_erasures(&g, eps, derive_seed(cfg.seed, 1, t))?;
                let tr = peel_with(&g, &pat, derive_seed(cfg.seed, 2, t), &mode)?;
                if tr.outcome == Outcome::Success {
                    acc.successes += 1;
                }
                for (k, s) in tr.samples.iter().enumerate() {
                    let r1: u64 = r1_slots.clone().map(|slot| s.r[slot * lay.dc]).sum();
                    acc.r1[k].push(r1 as f64 / m);
                    let r1d: u64 = delta_slots.clone().map(|slot| s.r[slot * lay.dc]).sum();
                    acc.r1_delta[k].push(r1d as f64 / m);
                    if cfg.full_covariance {
                        acc.moments[k].push(&normalize(&lay, s, m));
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total = Acc {
        moments: (0..np).map(|_| RunningCovariance::new(dim)).collect(),
        r1: vec![Vec::with_capacity(cfg.trials); np],
        r1_delta: vec![Vec::with_capacity(cfg.trials); np],
        successes: 0,
    };
    for acc in partial {
        let acc = acc?;
        for k in 0..np {
            total.moments[k].merge(&acc.moments[k]);
            total.r1[k].extend_from_slice(&acc.r1[k]);
            total.r1_delta[k].extend_from_slice(&acc.r1_delta[k]);
        }
        total.successes += acc.successes;
    }
    let (mean, delta) = if cfg.full_covariance {
        (
            total.moments.iter().map(|rc| rc.mean.clone()).collect(),
            total
                .moments
                .iter()
                .map(|rc| rc.covariance().into_iter().map(|c| c * m).collect())
                .collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(EmpiricalMoments {
        layout: lay,
        m_sim: cfg.m_sim,
        trials: cfg.trials,
        probes: cfg.probes.clone(),
        mean,
        delta,
        r1_samples: total.r1,
        r1_delta_samples: total.r1_delta,
        successes: total.successes,
    })
}
