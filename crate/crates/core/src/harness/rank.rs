//! GF(2) rank of a parity-check matrix.
//!
//! Checks and variables are numbered by position, and a check at position
//! `p` only touches variables in `[p-dv+1, p]`, so the matrix is banded.
//! Eliminating columns in order and always pivoting on the lowest-position
//! row keeps all fill-in inside each row's own window.

use crate::sampler::TannerGraph;

struct Row {
    /// Index of the first stored 64-bit word.
    base: usize,
    words: Vec<u64>,
}

impl Row {
    fn bit(&self, col: usize) -> bool {
        let w = col / 64;
        w >= self.base && w - self.base < self.words.len() && self.words[w - self.base] >> (col % 64) & 1 == 1
    }
}

/// Rank over GF(2) of the check-by-variable incidence matrix.
pub fn gf2_rank(graph: &TannerGraph) -> usize {
    let n = graph.num_variables();
    let m = graph.num_checks();
    if n == 0 || m == 0 {
        return 0;
    }
    let params = graph.params();
    let l = params.l_i32();
    let dv = params.dv as i32;

    let mut rows: Vec<Row> = (0..m as u32)
        .map(|c| {
            let p = graph.check_position(c);
            let lo = graph.variables_at((p - dv + 1).max(-l)).start as usize;
            let hi = graph.variables_at(p.min(l)).end as usize;
            let base = lo / 64;
            let mut words = vec![0u64; hi.div_ceil(64).max(base + 1) - base];
            for &v in graph.check_neighbors(c) {
                let v = v as usize;
                words[v / 64 - base] ^= 1 << (v % 64);
            }
            Row { base, words }
        })
        .collect();
    let mut used = vec![false; m];
    let mut rank = 0;

    for col in 0..n {
        let q = graph.variable_position(col as u32);
        let first = graph.checks_at(q).start as usize;
        let last = graph.checks_at((q + dv - 1).min(l + dv - 1)).end as usize;
        let Some(piv) = (first..last).find(|&r| !used[r] && rows[r].bit(col)) else {
            continue;
        };
        used[piv] = true;
        rank += 1;
        let pivot = std::mem::replace(&mut rows[piv], Row { base: 0, words: Vec::new() });
        for r in piv + 1..last {
            if used[r] || !rows[r].bit(col) {
                continue;
            }
            let row = &mut rows[r];
            // bits of the pivot below `col` are already eliminated
            let from = col / 64;
            for w in from..pivot.base + pivot.words.len() {
                row.words[w - row.base] ^= pivot.words[w - pivot.base];
            }
        }
        rows[piv] = pivot;
    }
    rank
}
