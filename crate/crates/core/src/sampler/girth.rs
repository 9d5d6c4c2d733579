//! Short-cycle removal by same-position edge swaps.
//!
//! A breadth-first search of depth `g/2` from every variable finds any
//! cycle of length at most `g`. One edge of the cycle is swapped with a
//! random edge landing on the same check position, which keeps every node's
//! position, degree and socket layout intact. Passes repeat until a full
//! sweep finds nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TannerGraph;
use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

struct Work {
    dv: usize,
    l: i32,
    var_pos: Vec<i32>,
    check_pos: Vec<i32>,
    var_adj: Vec<u32>,
    check_lists: Vec<Vec<u32>>,
    /// First variable id per position `-L..=L+1` (sentinel at the end).
    pos_start: Vec<u32>,
}

impl Work {
    fn new(g: &TannerGraph) -> Self {
        let l = g.params().l_i32();
        let mut pos_start = Vec::with_capacity((2 * l + 2) as usize);
        for i in -l..=l + 1 {
            pos_start.push(g.variable_positions().partition_point(|&p| p < i) as u32);
        }
        Work {
            dv: g.dv(),
            l,
            var_pos: g.variable_positions().to_vec(),
            check_pos: g.check_positions().to_vec(),
            var_adj: g.adjacency().to_vec(),
            check_lists: (0..g.num_checks() as u32)
                .map(|c| g.check_neighbors(c).to_vec())
                .collect(),
            pos_start,
        }
    }

    fn var_checks(&self, v: u32) -> &[u32] {
        let s = v as usize * self.dv;
        &self.var_adj[s..s + self.dv]
    }

    /// Variables with an edge into check position `p`.
    fn sources_of(&self, p: i32) -> (u32, u32) {
        let lo = (p - self.dv as i32 + 1).max(-self.l);
        let hi = p.min(self.l);
        if lo > hi {
            return (0, 0);
        }
        (
            self.pos_start[(lo + self.l) as usize],
            self.pos_start[(hi + self.l + 1) as usize],
        )
    }

    /// Swaps edge `(a, c)` with `(b, d)` where `c` and `d` share a position.
    fn swap(&mut self, a: u32, c: u32, b: u32, d: u32) {
        let p = self.check_pos[c as usize];
        let ja = (p - self.var_pos[a as usize]) as usize;
        let jb = (p - self.var_pos[b as usize]) as usize;
        debug_assert_eq!(self.var_adj[a as usize * self.dv + ja], c);
        debug_assert_eq!(self.var_adj[b as usize * self.dv + jb], d);
        self.var_adj[a as usize * self.dv + ja] = d;
        self.var_adj[b as usize * self.dv + jb] = c;
        for x in self.check_lists[c as usize].iter_mut() {
            if *x == a {
                *x = b;
            }
        }
        for x in self.check_lists[d as usize].iter_mut() {
            if *x == b {
                *x = a;
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Node {
    Var(u32),
    Check(u32),
}

struct Bfs {
    stamp: u32,
    var_stamp: Vec<u32>,
    check_stamp: Vec<u32>,
    var_parent: Vec<u32>,
    check_parent: Vec<u32>,
    var_depth: Vec<u8>,
    check_depth: Vec<u8>,
    queue: Vec<Node>,
}

impl Bfs {
    fn new(n_vars: usize, n_checks: usize) -> Self {
        Bfs {
            stamp: 0,
            var_stamp: vec![0; n_vars],
            check_stamp: vec![0; n_checks],
            var_parent: vec![NONE; n_vars],
            check_parent: vec![NONE; n_checks],
            var_depth: vec![0; n_vars],
            check_depth: vec![0; n_checks],
            queue: Vec::new(),
        }
    }

    /// Edges `(var, check)` of a cycle of length `<= max_len` inside the
    /// ball around `root`, if any.
    fn cycle_from(&mut self, w: &Work, root: u32, max_len: usize) -> Option<Vec<(u32, u32)>> {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.var_stamp.fill(0);
            self.check_stamp.fill(0);
            self.stamp = 1;
        }
        let half = (max_len / 2) as u8;
        self.queue.clear();
        self.var_stamp[root as usize] = self.stamp;
        self.var_parent[root as usize] = NONE;
        self.var_depth[root as usize] = 0;
        self.queue.push(Node::Var(root));
        let mut head = 0;
        while head < self.queue.len() {
            let x = self.queue[head];
            head += 1;
            match x {
                Node::Var(v) => {
                    let d = self.var_depth[v as usize];
                    if d >= half {
                        continue;
                    }
                    let parent = self.var_parent[v as usize];
                    for &c in w.var_checks(v) {
                        if c == parent {
                            continue;
                        }
                        if self.check_stamp[c as usize] == self.stamp {
                            return Some(self.close(Node::Var(v), Node::Check(c)));
                        }
                        self.check_stamp[c as usize] = self.stamp;
                        self.check_parent[c as usize] = v;
                        self.check_depth[c as usize] = d + 1;
                        self.queue.push(Node::Check(c));
                    }
                }
                Node::Check(c) => {
                    let d = self.check_depth[c as usize];
                    if d >= half {
                        continue;
                    }
                    let parent = self.check_parent[c as usize];
                    for &v in &w.check_lists[c as usize] {
                        if v == parent {
                            continue;
                        }
                        if self.var_stamp[v as usize] == self.stamp {
                            return Some(self.close(Node::Check(c), Node::Var(v)));
                        }
                        self.var_stamp[v as usize] = self.stamp;
                        self.var_parent[v as usize] = c;
                        self.var_depth[v as usize] = d + 1;
                        self.queue.push(Node::Var(v));
                    }
                }
            }
        }
        None
    }

    fn parent(&self, n: Node) -> Option<Node> {
        match n {
            Node::Var(v) => {
                let p = self.var_parent[v as usize];
                (p != NONE).then_some(Node::Check(p))
            }
            Node::Check(c) => Some(Node::Var(self.check_parent[c as usize])),
        }
    }

    fn depth(&self, n: Node) -> u8 {
        match n {
            Node::Var(v) => self.var_depth[v as usize],
            Node::Check(c) => self.check_depth[c as usize],
        }
    }

    fn close(&self, x: Node, y: Node) -> Vec<(u32, u32)> {
        fn edge(a: Node, b: Node) -> (u32, u32) {
            match (a, b) {
                (Node::Var(v), Node::Check(c)) | (Node::Check(c), Node::Var(v)) => (v, c),
                _ => unreachable!("bipartite graph"),
            }
        }
        let mut edges = vec![edge(x, y)];
        let (mut a, mut b) = (x, y);
        while self.depth(a) > self.depth(b) {
            let p = self.parent(a).expect("non-root has a parent");
            edges.push(edge(a, p));
            a = p;
        }
        while self.depth(b) > self.depth(a) {
            let p = self.parent(b).expect("non-root has a parent");
            edges.push(edge(b, p));
            b = p;
        }
        while a != b {
            let pa = self.parent(a).expect("non-root has a parent");
            let pb = self.parent(b).expect("non-root has a parent");
            edges.push(edge(a, pa));
            edges.push(edge(b, pb));
            a = pa;
            b = pb;
        }
        edges
    }
}

fn count_roots(w: &Work, bfs: &mut Bfs, max_len: usize) -> usize {
    (0..w.var_pos.len() as u32)
        .filter(|&v| bfs.cycle_from(w, v, max_len).is_some())
        .count()
}

fn check_len(max_len: usize) -> Result<()> {
    if max_len < 4 || max_len % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "max removed cycle length must be even and >= 4, got {max_len}"
        )));
    }
    Ok(())
}

/// Number of variables whose depth-`max_len/2` neighbourhood contains a
/// cycle of length at most `max_len`. Zero iff the girth exceeds `max_len`.
pub fn short_cycle_roots(graph: &TannerGraph, max_len: usize) -> Result<usize> {
    check_len(max_len)?;
    let w = Work::new(graph);
    let mut bfs = Bfs::new(graph.num_variables(), graph.num_checks());
    Ok(count_roots(&w, &mut bfs, max_len))
}

/// Some cycle of length at most `max_len`, as `(variable, check)` edges.
pub fn find_short_cycle(graph: &TannerGraph, max_len: usize) -> Result<Option<Vec<(u32, u32)>>> {
    check_len(max_len)?;
    let w = Work::new(graph);
    let mut bfs = Bfs::new(graph.num_variables(), graph.num_checks());
    Ok((0..graph.num_variables() as u32).find_map(|v| bfs.cycle_from(&w, v, max_len)))
}

/// Removes every cycle of length `<= max_removed_cycle`.
pub fn condition_girth(graph: &TannerGraph, max_removed_cycle: usize, seed: u64) -> Result<TannerGraph> {
    condition_girth_counted(graph, max_removed_cycle, seed).map(|(g, _)| g)
}

/// As [`condition_girth`], also returning the number of swaps performed.
pub fn condition_girth_counted(
    graph: &TannerGraph,
    max_removed_cycle: usize,
    seed: u64,
) -> Result<(TannerGraph, usize)> {
    check_len(max_removed_cycle)?;
    let mut w = Work::new(graph);
    let mut bfs = Bfs::new(graph.num_variables(), graph.num_checks());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = graph.num_variables() as u32;
    let budget = 1_000 + 20 * graph.num_variables();
    let mut attempts = 0usize;
    let mut swaps = 0usize;

    loop {
        let mut found = false;
        for root in 0..n {
            let mut local = 0;
            while let Some(cycle) = bfs.cycle_from(&w, root, max_removed_cycle) {
                found = true;
                attempts += 1;
                if attempts > budget {
                    let remaining = count_roots(&w, &mut bfs, max_removed_cycle);
                    return Err(Error::GirthConditioning { remaining, attempts });
                }
                let (a, c) = cycle[rng.random_range(0..cycle.len())];
                let p = w.check_pos[c as usize];
                let (lo, hi) = w.sources_of(p);
                // prefer a partner whose swap leaves both endpoints clean
                let mut fallback = None;
                let mut swapped = false;
                for _ in 0..64 {
                    let b = rng.random_range(lo..hi);
                    let jb = (p - w.var_pos[b as usize]) as usize;
                    let d = w.var_adj[b as usize * w.dv + jb];
                    if b == a || d == c || cycle.iter().any(|&(v, k)| v == b && k == d) {
                        continue;
                    }
                    w.swap(a, c, b, d);
                    if bfs.cycle_from(&w, a, max_removed_cycle).is_none()
                        && bfs.cycle_from(&w, b, max_removed_cycle).is_none()
                    {
                        swapped = true;
                        break;
                    }
                    w.swap(a, d, b, c);
                    fallback.get_or_insert((b, d));
                }
                if !swapped {
                    if let Some((b, d)) = fallback {
                        w.swap(a, c, b, d);
                        swapped = true;
                    }
                }
                if swapped {
                    swaps += 1;
                }
                local += 1;
                if local > 32 {
                    break;
                }
            }
        }
        if !found {
            break;
        }
    }

    let out = TannerGraph::from_parts(
        graph.params().clone(),
        w.var_pos,
        w.check_pos,
        graph.check_capacities().to_vec(),
        w.var_adj,
        true,
    )?;
    Ok((out, swaps))
}
