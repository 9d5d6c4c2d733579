//! Text serialization of Tanner graphs.
//!
//! ```text
//! sfc-tanner-graph 1
//! params dv=3 dc=6 L=2 alpha=2/1 M=4
//! girth_conditioned false
//! variables 40
//! positions -2:4 -1:8 0:16 1:8 2:4
//! checks 26
//! edges 120
//! c 0 -2 6 : 0 5 7
//! ...
//! end
//! ```
//!
//! Each `c` line is `id position capacity : neighbour ids`. Variable
//! positions are given as run lengths since ids are grouped by position.

use std::io::{BufRead, Write};
use std::path::Path;

use super::TannerGraph;
use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};

const MAGIC: &str = "sfc-tanner-graph 1";

pub fn serialize_graph(graph: &TannerGraph) -> Vec<u8> {
    let mut out = Vec::with_capacity(graph.num_edges() * 7);
    write_to(graph, &mut out).expect("writing to a Vec cannot fail");
    out
}

fn write_to<W: Write>(graph: &TannerGraph, out: &mut W) -> std::io::Result<()> {
    let p = graph.params();
    writeln!(out, "{MAGIC}")?;
    writeln!(
        out,
        "params dv={} dc={} L={} alpha={} M={}",
        p.dv, p.dc, p.l, p.alpha, p.m
    )?;
    writeln!(out, "girth_conditioned {}", graph.girth_conditioned())?;
    writeln!(out, "variables {}", graph.num_variables())?;
    write!(out, "positions")?;
    for i in p.variable_positions() {
        write!(out, " {}:{}", i, graph.variables_at(i).len())?;
    }
    writeln!(out)?;
    writeln!(out, "checks {}", graph.num_checks())?;
    writeln!(out, "edges {}", graph.num_edges())?;
    for c in 0..graph.num_checks() as u32 {
        write!(
            out,
            "c {} {} {} :",
            c,
            graph.check_position(c),
            graph.check_capacity(c)
        )?;
        for v in graph.check_neighbors(c) {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "end")?;
    Ok(())
}

pub fn write_graph(graph: &TannerGraph, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_to(graph, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<TannerGraph> {
    let bytes = std::fs::read(path)?;
    parse_graph(&bytes)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::io::Lines<&'a [u8]>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self, section: &str) -> Result<(usize, String)> {
        match self.inner.next() {
            Some((i, Ok(s))) => {
                self.last = i + 1;
                Ok((i + 1, s))
            }
            Some((i, Err(e))) => Err(Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            }),
            None => Err(Error::Parse {
                line: self.last + 1,
                msg: format!("unexpected end of input: missing section '{section}'"),
            }),
        }
    }

    /// Reads `key value` and returns `value`.
    fn keyed(&mut self, key: &str) -> Result<(usize, String)> {
        let (n, s) = self.next_line(key)?;
        match s.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v.trim().to_string())),
            _ => Err(perr(n, format!("expected section '{key}', found {s:?}"))),
        }
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| perr(line, format!("invalid {what}: {s:?}")))
}

pub fn parse_graph(bytes: &[u8]) -> Result<TannerGraph> {
    let mut lines = Lines {
        inner: bytes.lines().enumerate(),
        last: 0,
    };

    let (n, magic) = lines.next_line("header")?;
    if magic.trim() != MAGIC {
        return Err(perr(n, format!("bad header {magic:?}")));
    }

    let (n, ptext) = lines.keyed("params")?;
    let mut kv = std::collections::HashMap::new();
    for tok in ptext.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| perr(n, format!("bad parameter token {tok:?}")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| perr(n, format!("missing parameter {k}")));
    let params = EnsembleParams::new(
        num(n, get("dv")?, "dv")?,
        num(n, get("dc")?, "dc")?,
        num(n, get("L")?, "L")?,
        get("alpha")?.parse().map_err(|e: Error| perr(n, e.to_string()))?,
        num(n, get("M")?, "M")?,
    )
    .map_err(|e| perr(n, e.to_string()))?;

    let (n, gc) = lines.keyed("girth_conditioned")?;
    let girth_conditioned: bool = num(n, &gc, "flag")?;

    let (n, nv) = lines.keyed("variables")?;
    let n_vars: usize = num(n, &nv, "variable count")?;

    let (n, ptext) = lines.keyed("positions")?;
    let mut var_pos = Vec::with_capacity(n_vars);
    for tok in ptext.split_whitespace() {
        let (p, c) = tok
            .split_once(':')
            .ok_or_else(|| perr(n, format!("bad position run {tok:?}")))?;
        let p: i32 = num(n, p, "position")?;
        let c: usize = num(n, c, "run length")?;
        var_pos.extend(std::iter::repeat_n(p, c));
    }
    if var_pos.len() != n_vars {
        return Err(perr(
            n,
            format!("position runs cover {} variables, header says {n_vars}", var_pos.len()),
        ));
    }

    let (n, nc) = lines.keyed("checks")?;
    let n_checks: usize = num(n, &nc, "check count")?;
    let (n, ne) = lines.keyed("edges")?;
    let n_edges: usize = num(n, &ne, "edge count")?;
    let dv = params.dv as usize;
    if n_edges != n_vars * dv {
        return Err(perr(n, format!("edge count {n_edges} != variables x dv")));
    }

    let mut check_pos = Vec::with_capacity(n_checks);
    let mut check_cap = Vec::with_capacity(n_checks);
    let mut var_adj = vec![u32::MAX; n_edges];
    for k in 0..n_checks {
        let (n, s) = lines
            .next_line("checks")
            .map_err(|_| perr(lines.last + 1, format!("missing section 'checks': expected {n_checks} check lines, found {k}")))?;
        let (head, tail) = s
            .split_once(':')
            .ok_or_else(|| perr(n, format!("check line without ':' {s:?}")))?;
        let mut it = head.split_whitespace();
        if it.next() != Some("c") {
            return Err(perr(n, format!("expected check line, found {s:?}")));
        }
        let id: usize = num(n, it.next().unwrap_or(""), "check id")?;
        if id != k {
            return Err(perr(n, format!("check id {id} out of order, expected {k}")));
        }
        let pos: i32 = num(n, it.next().unwrap_or(""), "check position")?;
        let cap: u32 = num(n, it.next().unwrap_or(""), "capacity")?;
        check_pos.push(pos);
        check_cap.push(cap);
        for tok in tail.split_whitespace() {
            let v: usize = num(n, tok, "variable id")?;
            let vp = *var_pos
                .get(v)
                .ok_or_else(|| perr(n, format!("variable {v} out of range")))?;
            let j = pos - vp;
            if j < 0 || j as usize >= dv {
                return Err(perr(n, format!("variable {v} at {vp} cannot reach check position {pos}")));
            }
            let slot = &mut var_adj[v * dv + j as usize];
            if *slot != u32::MAX {
                return Err(perr(n, format!("variable {v} socket {j} listed twice")));
            }
            *slot = k as u32;
        }
    }
    let (n, end) = lines
        .next_line("end")
        .map_err(|_| perr(lines.last + 1, "missing section 'end'"))?;
    if end.trim() != "end" {
        return Err(perr(n, format!("expected 'end', found {end:?}")));
    }
    if let Some(v) = var_adj.iter().position(|&c| c == u32::MAX) {
        return Err(perr(n, format!("variable {} socket {} has no check", v / dv, v % dv)));
    }
    TannerGraph::from_parts(params, var_pos, check_pos, check_cap, var_adj, girth_conditioned)
        .map_err(|e| perr(n, e.to_string()))
}
