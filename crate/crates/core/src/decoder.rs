//! Erasure channel, peeling decoder and erasure belief propagation.
//!
//! The all-zero codeword is assumed throughout, so a channel realization is
//! just the set of erased variables. Both decoders work on the residual
//! graph of erased variables and resolve exactly the complement of the
//! maximal stopping set, so their outcomes agree on every instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::TannerGraph;

/// Variables erased by one use of BEC(epsilon).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErasurePattern {
    /// Erased variable ids in increasing order.
    pub erased: Vec<u32>,
    pub epsilon: f64,
    pub seed: u64,
}

impl ErasurePattern {
    pub fn from_ids(mut erased: Vec<u32>, epsilon: f64, seed: u64) -> Self {
        erased.sort_unstable();
        erased.dedup();
        ErasurePattern {
            erased,
            epsilon,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.erased.len()
    }

    pub fn is_empty(&self) -> bool {
        self.erased.is_empty()
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in &self.erased {
            m[v as usize] = true;
        }
        m
    }
}

/// Erases each variable independently with probability `eps`.
pub fn sample_erasures(graph: &TannerGraph, eps: f64, seed: u64) -> Result<ErasurePattern> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("erasure probability {eps} not in [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let erased = (0..graph.num_variables() as u32)
        .filter(|_| rng.random::<f64>() < eps)
        .collect();
    Ok(ErasurePattern {
        erased,
        epsilon: eps,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Stall,
}

/// Residual graph statistics after `t` peeling steps.
///
/// Positions are indexed from `-L` over the check range `[-L, L+dv-1]`.
/// `r[pos * dc + (j - 1)]` is `R_{j,u}`, the number of edges on residual
/// checks of degree `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: u64,
    pub v: Vec<u32>,
    pub r: Vec<u64>,
}

impl TraceSample {
    pub fn r_at(&self, dc: usize, j: usize, pos: usize) -> u64 {
        self.r[pos * dc + j - 1]
    }

    pub fn total_v(&self) -> u64 {
        self.v.iter().map(|&x| x as u64).sum()
    }

    pub fn total_r(&self) -> u64 {
        self.r.iter().sum()
    }

    pub fn r1(&self, dc: usize) -> u64 {
        self.r.iter().step_by(dc).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub samples: Vec<TraceSample>,
    pub outcome: Outcome,
    /// Peeling step at which no degree-one check remained, for stalls.
    pub stall_time: Option<u64>,
    pub steps: u64,
    /// Erased variables left when decoding stopped.
    pub residual: Vec<u32>,
    pub iterations: Option<u32>,
}

impl DecodeTrace {
    /// Verifies that consecutive samples lose exactly one variable and `dv`
    /// edges per peeling step.
    pub fn check_conservation(&self, dv: u64) -> Result<()> {
        for w in self.samples.windows(2) {
            let dt = w[1].t - w[0].t;
            let dvar = w[0].total_v() - w[1].total_v();
            let dedge = w[0].total_r() - w[1].total_r();
            if dvar != dt || dedge != dv * dt {
                return Err(Error::InvalidArgument(format!(
                    "conservation violated between t={} and t={}: removed {dvar} variables and {dedge} edges",
                    w[0].t, w[1].t
                )));
            }
        }
        Ok(())
    }
}

/// Which peeling states a trace keeps.
#[derive(Clone, Debug, PartialEq)]
pub enum TraceMode {
    /// Only the outcome.
    Off,
    /// Every `k`-th step plus the final state.
    Stride(u64),
    /// Exactly the listed steps (ascending); steps after termination
    /// repeat the terminal state.
    Steps(Vec<u64>),
}

impl TraceMode {
    /// Stride of `ceil(M / 100)` steps.
    pub fn default_for(graph: &TannerGraph) -> Self {
        TraceMode::Stride(graph.params().m.div_ceil(100).max(1))
    }
}

/// Mutable residual graph shared by both decoders.
struct Residual<'g> {
    graph: &'g TannerGraph,
    dc: usize,
    check_slot: Vec<u32>,
    deg: Vec<u32>,
    /// XOR of the residual neighbour ids; equals the last neighbour at degree one.
    acc: Vec<u32>,
    alive: Vec<bool>,
    v_count: Vec<u32>,
    /// `n_deg[slot * (dc + 1) + j]`: checks at the slot with residual degree `j`.
    n_deg: Vec<u64>,
    remaining: u64,
}

impl<'g> Residual<'g> {
    fn new(graph: &'g TannerGraph, pattern: &ErasurePattern) -> Result<Self> {
        let p = graph.params();
        let l = p.l_i32();
        let dc = p.dc as usize;
        let slots = p.num_check_positions();
        let n = graph.num_variables();
        if pattern.erased.last().is_some_and(|&v| v as usize >= n) {
            return Err(Error::InvalidArgument("erasure pattern refers to unknown variables".into()));
        }
        let check_slot: Vec<u32> = graph.check_positions().iter().map(|&i| (i + l) as u32).collect();
        let mut deg = vec![0u32; graph.num_checks()];
        let mut acc = vec![0u32; graph.num_checks()];
        let mut alive = vec![false; n];
        let mut v_count = vec![0u32; slots];
        for &v in &pattern.erased {
            alive[v as usize] = true;
            v_count[(graph.variable_position(v) + l) as usize] += 1;
            for &c in graph.variable_neighbors(v) {
                deg[c as usize] += 1;
                acc[c as usize] ^= v;
            }
        }
        let mut n_deg = vec![0u64; slots * (dc + 1)];
        for (c, &d) in deg.iter().enumerate() {
            n_deg[check_slot[c] as usize * (dc + 1) + d as usize] += 1;
        }
        Ok(Residual {
            graph,
            dc,
            check_slot,
            deg,
            acc,
            alive,
            v_count,
            n_deg,
            remaining: pattern.len() as u64,
        })
    }

    /// Removes variable `v` and its edges, calling `on_degree_one` for every
    /// check that drops to residual degree one.
    fn remove(&mut self, v: u32, mut on_change: impl FnMut(u32, u32)) {
        debug_assert!(self.alive[v as usize]);
        self.alive[v as usize] = false;
        self.remaining -= 1;
        let l = self.graph.params().l_i32();
        self.v_count[(self.graph.variable_position(v) + l) as usize] -= 1;
        for &c in self.graph.variable_neighbors(v) {
            let ci = c as usize;
            let base = self.check_slot[ci] as usize * (self.dc + 1);
            let d = self.deg[ci];
            self.n_deg[base + d as usize] -= 1;
            self.n_deg[base + d as usize - 1] += 1;
            self.deg[ci] = d - 1;
            self.acc[ci] ^= v;
            on_change(c, d - 1);
        }
    }

    fn sample(&self, t: u64) -> TraceSample {
        let dc = self.dc;
        let slots = self.v_count.len();
        let mut r = vec![0u64; slots * dc];
        for s in 0..slots {
            for j in 1..=dc {
                r[s * dc + j - 1] = j as u64 * self.n_deg[s * (dc + 1) + j];
            }
        }
        TraceSample {
            t,
            v: self.v_count.clone(),
            r,
        }
    }

    fn residual_ids(&self) -> Vec<u32> {
        (0..self.alive.len() as u32).filter(|&v| self.alive[v as usize]).collect()
    }
}

/// Set of checks with residual degree one, with O(1) insert, remove and
/// uniform sampling.
struct DegreeOneSet {
    items: Vec<u32>,
    index: Vec<u32>,
}

impl DegreeOneSet {
    const ABSENT: u32 = u32::MAX;

    fn new(n: usize) -> Self {
        DegreeOneSet {
            items: Vec::new(),
            index: vec![Self::ABSENT; n],
        }
    }

    fn insert(&mut self, c: u32) {
        if self.index[c as usize] == Self::ABSENT {
            self.index[c as usize] = self.items.len() as u32;
            self.items.push(c);
        }
    }

    fn remove(&mut self, c: u32) {
        let k = self.index[c as usize];
        if k == Self::ABSENT {
            return;
        }
        let last = *self.items.last().expect("non-empty");
        self.items.swap_remove(k as usize);
        if last != c {
            self.index[last as usize] = k;
        }
        self.index[c as usize] = Self::ABSENT;
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> Option<u32> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items[rng.random_range(0..self.items.len())])
        }
    }
}

/// Peeling decoder with the default trace stride.
pub fn peel(graph: &TannerGraph, pattern: &ErasurePattern, seed: u64) -> Result<DecodeTrace> {
    peel_with(graph, pattern, seed, &TraceMode::default_for(graph))
}

/// Peeling decoder: repeatedly resolves the variable of a degree-one check
/// chosen uniformly at random, until no erased variable or no degree-one
/// check remains.
pub fn peel_with(
    graph: &TannerGraph,
    pattern: &ErasurePattern,
    seed: u64,
    mode: &TraceMode,
) -> Result<DecodeTrace> {
    let mut res = Residual::new(graph, pattern)?;
    let mut ones = DegreeOneSet::new(graph.num_checks());
    for (c, &d) in res.deg.iter().enumerate() {
        if d == 1 {
            ones.insert(c as u32);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut next_probe = 0usize;
    let record = |res: &Residual, t: u64, samples: &mut Vec<TraceSample>, next_probe: &mut usize| match mode {
        TraceMode::Off => {}
        TraceMode::Stride(k) => {
            if t % k.max(&1) == 0 {
                samples.push(res.sample(t));
            }
        }
        TraceMode::Steps(steps) => {
            while *next_probe < steps.len() && steps[*next_probe] == t {
                samples.push(res.sample(t));
                *next_probe += 1;
            }
        }
    };

    let mut t = 0u64;
    record(&res, t, &mut samples, &mut next_probe);
    while res.remaining > 0 {
        let Some(c) = ones.pick(&mut rng) else { break };
        let v = res.acc[c as usize];
        res.remove(v, |c2, d| match d {
            1 => ones.insert(c2),
            0 => ones.remove(c2),
            _ => {}
        });
        t += 1;
        record(&res, t, &mut samples, &mut next_probe);
    }

    match mode {
        TraceMode::Stride(_) if samples.last().is_none_or(|s| s.t != t) => samples.push(res.sample(t)),
        TraceMode::Steps(steps) => {
            let last = res.sample(t);
            for &s in &steps[next_probe..] {
                samples.push(TraceSample { t: s, ..last.clone() });
            }
        }
        _ => {}
    }

    let outcome = if res.remaining == 0 {
        Outcome::Success
    } else {
        Outcome::Stall
    };
    Ok(DecodeTrace {
        samples,
        outcome,
        stall_time: (outcome == Outcome::Stall).then_some(t),
        steps: t,
        residual: res.residual_ids(),
        iterations: None,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BpResult {
    pub outcome: Outcome,
    /// Message-passing rounds that resolved at least one variable.
    pub iterations: u32,
    /// Erased variables left unresolved.
    pub residual: usize,
}

/// Erasure belief propagation with a flooding schedule. Each round resolves
/// every variable attached to a check that had exactly one erased neighbour
/// at the start of the round. `max_iter = None` runs to the fixed point.
pub fn bp_decode(
    graph: &TannerGraph,
    pattern: &ErasurePattern,
    max_iter: Option<u32>,
) -> Result<BpResult> {
    let mut res = Residual::new(graph, pattern)?;
    let mut frontier: Vec<u32> = (0..graph.num_checks() as u32)
        .filter(|&c| res.deg[c as usize] == 1)
        .collect();
    let mut next = Vec::new();
    let mut iterations = 0u32;
    while !frontier.is_empty() && res.remaining > 0 {
        if max_iter.is_some_and(|m| iterations >= m) {
            break;
        }
        for &c in &frontier {
            if res.deg[c as usize] != 1 {
                continue;
            }
            let v = res.acc[c as usize];
            res.remove(v, |c2, d| {
                if d == 1 {
                    next.push(c2);
                }
            });
        }
        iterations += 1;
        std::mem::swap(&mut frontier, &mut next);
        next.clear();
    }
    Ok(BpResult {
        outcome: if res.remaining == 0 {
            Outcome::Success
        } else {
            Outcome::Stall
        },
        iterations,
        residual: res.remaining as usize,
    })
}

/// True if every check touching `set` touches it at least twice.
pub fn is_stopping_set(graph: &TannerGraph, set: &[u32]) -> bool {
    let mut hits = vec![0u32; graph.num_checks()];
    for &v in set {
        for &c in graph.variable_neighbors(v) {
            hits[c as usize] += 1;
        }
    }
    hits.iter().all(|&h| h != 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::EnsembleParams;
    use crate::sampler::sample_graph;

    fn graph(seed: u64) -> TannerGraph {
        let p = EnsembleParams::parse(3, 6, 3, "6/5", 40).unwrap();
        sample_graph(&p, seed).unwrap()
    }

    #[test]
    fn erasure_extremes() {
        let g = graph(0);
        assert!(sample_erasures(&g, 0.0, 1).unwrap().is_empty());
        assert_eq!(sample_erasures(&g, 1.0, 1).unwrap().len(), g.num_variables());
        assert!(sample_erasures(&g, 1.5, 1).is_err());
    }

    #[test]
    fn no_erasures_decode_immediately() {
        let g = graph(1);
        let pat = sample_erasures(&g, 0.0, 2).unwrap();
        let tr = peel(&g, &pat, 3).unwrap();
        assert_eq!(tr.outcome, Outcome::Success);
        assert_eq!(tr.steps, 0);
        let bp = bp_decode(&g, &pat, None).unwrap();
        assert_eq!((bp.outcome, bp.iterations), (Outcome::Success, 0));
    }

    #[test]
    fn full_resolution_trace_conserves() {
        let g = graph(4);
        for (k, eps) in [0.3, 0.45, 0.6].into_iter().enumerate() {
            let pat = sample_erasures(&g, eps, k as u64).unwrap();
            let tr = peel_with(&g, &pat, 9, &TraceMode::Stride(1)).unwrap();
            tr.check_conservation(3).unwrap();
            assert_eq!(tr.samples[0].total_v(), pat.len() as u64);
            assert_eq!(tr.samples[0].total_r(), 3 * pat.len() as u64);
            let last = tr.samples.last().unwrap();
            match tr.outcome {
                Outcome::Success => assert_eq!(last.total_v(), 0),
                Outcome::Stall => {
                    assert!(last.total_v() > 0);
                    assert_eq!(last.r1(6), 0);
                    assert!(is_stopping_set(&g, &tr.residual));
                }
            }
        }
    }

    #[test]
    fn probe_steps_past_termination_repeat_final_state() {
        let g = graph(5);
        let pat = sample_erasures(&g, 0.2, 1).unwrap();
        let tr = peel_with(&g, &pat, 1, &TraceMode::Steps(vec![0, 1, 1_000_000])).unwrap();
        assert_eq!(tr.samples.len(), 3);
        assert_eq!(tr.samples[2].t, 1_000_000);
        assert_eq!(tr.samples[2].total_v(), 0);
    }
}
