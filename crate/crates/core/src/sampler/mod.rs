//! Random Tanner graphs drawn from an SFC ensemble.
//!
//! Variables are numbered by position (all of `-L` first, then `-L+1`, ...),
//! and so are checks, with the remainder-degree check last within its
//! position. Edge socket `j` of a variable at position `i` always lands on a
//! check at position `i + j`; the adjacency is stored socket-indexed so that
//! this holds by construction.

mod girth;
mod io;

pub use girth::{condition_girth, condition_girth_counted, find_short_cycle, short_cycle_roots};
pub use io::{parse_graph, read_graph, serialize_graph, write_graph};

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{position_profile, EnsembleParams};
use crate::error::{Error, Result};

const DUMMY: u32 = u32::MAX;

/// One edge of a Tanner graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub var: u32,
    pub check: u32,
    pub socket: u32,
}

/// A sampled graph after dummy shortening.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TannerGraph {
    params: EnsembleParams,
    dv: usize,
    var_pos: Vec<i32>,
    check_pos: Vec<i32>,
    check_cap: Vec<u32>,
    /// `var_adj[v * dv + j]` is the check at position `var_pos[v] + j`.
    var_adj: Vec<u32>,
    check_offsets: Vec<u32>,
    check_vars: Vec<u32>,
    girth_conditioned: bool,
}

impl TannerGraph {
    /// Assembles a graph from its parts, validating every structural invariant.
    pub fn from_parts(
        params: EnsembleParams,
        var_pos: Vec<i32>,
        check_pos: Vec<i32>,
        check_cap: Vec<u32>,
        var_adj: Vec<u32>,
        girth_conditioned: bool,
    ) -> Result<Self> {
        params.validate()?;
        let dv = params.dv as usize;
        let l = params.l_i32();
        if var_adj.len() != var_pos.len() * dv {
            return Err(Error::InvalidArgument(format!(
                "adjacency has {} entries, expected {}",
                var_adj.len(),
                var_pos.len() * dv
            )));
        }
        if check_pos.len() != check_cap.len() {
            return Err(Error::InvalidArgument("check capacity list length mismatch".into()));
        }
        if var_pos.len() >= u32::MAX as usize || check_pos.len() >= u32::MAX as usize {
            return Err(Error::Capacity("node ids must fit in u32".into()));
        }
        for (v, &p) in var_pos.iter().enumerate() {
            if p.abs() > l {
                return Err(Error::InvalidArgument(format!(
                    "variable {v} at position {p} outside [-{l}, {l}]"
                )));
            }
            for j in 0..dv {
                let c = var_adj[v * dv + j];
                let cp = *check_pos.get(c as usize).ok_or_else(|| {
                    Error::InvalidArgument(format!("variable {v} socket {j} points to unknown check {c}"))
                })?;
                if cp != p + j as i32 {
                    return Err(Error::InvalidArgument(format!(
                        "variable {v} at {p} socket {j} lands on check position {cp}"
                    )));
                }
            }
        }
        let mut degree = vec![0u32; check_pos.len()];
        for &c in &var_adj {
            degree[c as usize] += 1;
        }
        for (c, (&d, &cap)) in degree.iter().zip(&check_cap).enumerate() {
            if d > cap {
                return Err(Error::InvalidArgument(format!(
                    "check {c} has degree {d} above its capacity {cap}"
                )));
            }
        }
        let mut check_offsets = Vec::with_capacity(check_pos.len() + 1);
        let mut acc = 0u32;
        check_offsets.push(0);
        for &d in &degree {
            acc += d;
            check_offsets.push(acc);
        }
        let mut fill: Vec<u32> = check_offsets[..check_pos.len()].to_vec();
        let mut check_vars = vec![0u32; var_adj.len()];
        for (v, row) in var_adj.chunks(dv).enumerate() {
            for &c in row {
                check_vars[fill[c as usize] as usize] = v as u32;
                fill[c as usize] += 1;
            }
        }
        Ok(TannerGraph {
            params,
            dv,
            var_pos,
            check_pos,
            check_cap,
            var_adj,
            check_offsets,
            check_vars,
            girth_conditioned,
        })
    }

    pub fn params(&self) -> &EnsembleParams {
        &self.params
    }

    pub fn dv(&self) -> usize {
        self.dv
    }

    pub fn num_variables(&self) -> usize {
        self.var_pos.len()
    }

    pub fn num_checks(&self) -> usize {
        self.check_pos.len()
    }

    pub fn num_edges(&self) -> usize {
        self.var_adj.len()
    }

    pub fn variable_position(&self, v: u32) -> i32 {
        self.var_pos[v as usize]
    }

    pub fn variable_positions(&self) -> &[i32] {
        &self.var_pos
    }

    pub fn check_position(&self, c: u32) -> i32 {
        self.check_pos[c as usize]
    }

    pub fn check_positions(&self) -> &[i32] {
        &self.check_pos
    }

    pub fn check_capacity(&self, c: u32) -> u32 {
        self.check_cap[c as usize]
    }

    pub fn check_capacities(&self) -> &[u32] {
        &self.check_cap
    }

    /// Checks of variable `v`, indexed by socket.
    pub fn variable_neighbors(&self, v: u32) -> &[u32] {
        let s = v as usize * self.dv;
        &self.var_adj[s..s + self.dv]
    }

    /// Variables of check `c` in increasing id order.
    pub fn check_neighbors(&self, c: u32) -> &[u32] {
        let s = self.check_offsets[c as usize] as usize;
        let e = self.check_offsets[c as usize + 1] as usize;
        &self.check_vars[s..e]
    }

    pub fn check_degree(&self, c: u32) -> u32 {
        self.check_offsets[c as usize + 1] - self.check_offsets[c as usize]
    }

    pub fn girth_conditioned(&self) -> bool {
        self.girth_conditioned
    }

    pub(crate) fn adjacency(&self) -> &[u32] {
        &self.var_adj
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.var_adj.iter().enumerate().map(move |(k, &c)| Edge {
            var: (k / self.dv) as u32,
            check: c,
            socket: (k % self.dv) as u32,
        })
    }

    /// Ids of the variables at position `i` (contiguous by construction).
    pub fn variables_at(&self, i: i32) -> Range<u32> {
        let lo = self.var_pos.partition_point(|&p| p < i);
        let hi = self.var_pos.partition_point(|&p| p <= i);
        lo as u32..hi as u32
    }

    /// Ids of the checks at position `i`.
    pub fn checks_at(&self, i: i32) -> Range<u32> {
        let lo = self.check_pos.partition_point(|&p| p < i);
        let hi = self.check_pos.partition_point(|&p| p <= i);
        lo as u32..hi as u32
    }

    /// `(variable degrees, check degrees)`.
    pub fn degree_sequence(&self) -> (Vec<u32>, Vec<u32>) {
        let vd = vec![self.dv as u32; self.num_variables()];
        let cd = (0..self.num_checks() as u32).map(|c| self.check_degree(c)).collect();
        (vd, cd)
    }
}

/// Samples one graph: deterministic edge extension, one uniform permutation
/// per check position, then dummy shortening.
///
/// Each check position draws from its own ChaCha stream keyed by `seed`, so
/// the result depends only on `(params, seed)`.
pub fn sample_graph(params: &EnsembleParams, seed: u64) -> Result<TannerGraph> {
    let profile = position_profile(params)?;
    let l = params.l_i32();
    let dv = params.dv as usize;
    let dc = params.dc as u64;
    let n = profile.code_length();
    if n * dv as u64 >= u32::MAX as u64 || profile.total_checks() >= u32::MAX as u64 {
        return Err(Error::Capacity(format!(
            "graph with {n} variables exceeds u32 node ids"
        )));
    }

    let mut var_pos = Vec::with_capacity(n as usize);
    for i in -l..=l {
        var_pos.extend(std::iter::repeat_n(i, profile.variable_count(i) as usize));
    }
    let first_var = |i: i32| profile.first_variable_id(i) as u32;

    let mut check_pos = Vec::with_capacity(profile.total_checks() as usize);
    let mut check_cap = Vec::with_capacity(profile.total_checks() as usize);
    let mut var_adj = vec![DUMMY; n as usize * dv];
    let mut sockets: Vec<u32> = Vec::new();

    for (stream, i) in profile.check_positions().enumerate() {
        let first_check = check_pos.len() as u32;
        let count = profile.check_count(i);
        for k in 0..count {
            check_pos.push(i);
            check_cap.push(if k + 1 == count {
                profile.remainder_degree(i)
            } else {
                dc as u32
            });
        }

        sockets.clear();
        for j in 0..dv as i32 {
            let src = i - j;
            let cnt = profile.node_count(src) as u32;
            if src.abs() <= l {
                let base = first_var(src);
                sockets.extend(base..base + cnt);
            } else {
                sockets.extend(std::iter::repeat_n(DUMMY, cnt as usize));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        sockets.shuffle(&mut rng);

        for (k, &v) in sockets.iter().enumerate() {
            if v == DUMMY {
                continue;
            }
            let check = first_check + (k as u64 / dc) as u32;
            let socket = (i - var_pos[v as usize]) as usize;
            var_adj[v as usize * dv + socket] = check;
        }
    }
    debug_assert!(var_adj.iter().all(|&c| c != DUMMY));
    TannerGraph::from_parts(params.clone(), var_pos, check_pos, check_cap, var_adj, false)
}
