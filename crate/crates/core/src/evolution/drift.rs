//! Mean drift, its Jacobian and the one-step jump covariance.
//!
//! One peeling step: a degree-one check is drawn at position `u` with
//! probability `r_{1,u} / R_1`, its variable sits at position
//! `p in [u-dv+1, u] ∩ [-L, L]` with probability `v_p / S_u` where `S_u` is
//! the residual variable mass of that window, and the variable's other
//! `dv - 1` edges land on positions `w in [p, p+dv-1] \ {u}`. Each of them
//! hits a degree-`j` check with probability `q_{j,w} = r_{j,w} / e_w`, which
//! moves `j` edge units out of `r_{j,w}` and `j - 1` units into `r_{j-1,w}`.

use super::scalar::{Dual, Scalar};
use super::Layout;

/// Sums of a drift vector, which must equal `-1` and `-dv` whenever the
/// chain can move.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DriftCheck {
    pub sum_v: f64,
    pub sum_r: f64,
    /// False when no degree-one check is left (the chain is absorbed).
    pub active: bool,
}

impl DriftCheck {
    pub fn violation(&self, dv: usize) -> f64 {
        if !self.active {
            return 0.0;
        }
        (self.sum_v + 1.0).abs().max((self.sum_r + dv as f64).abs())
    }
}

fn clamp<S: Scalar>(x: S) -> S {
    if x.val() < 0.0 {
        S::cst(0.0)
    } else {
        x
    }
}

/// Drift at a state, generic over the scalar so that the same code yields
/// the Jacobian through dual numbers. Negative entries are read as zero.
/// Returns whether the chain is active.
pub fn drift_generic<S: Scalar>(lay: &Layout, x: &[S], out: &mut [S], hits: &mut [S]) -> bool {
    let npos = lay.positions();
    let (l, dv, dc) = (lay.l, lay.dv as i32, lay.dc);
    let zero = S::cst(0.0);
    out.iter_mut().for_each(|o| *o = zero);
    hits.iter_mut().for_each(|h| *h = zero);

    let window = |u: i32| ((u - dv + 1).max(-l), u.min(l));
    let vmass = |u: i32| -> S {
        let (lo, hi) = window(u);
        let mut s = zero;
        for p in lo..=hi {
            s += clamp(x[lay.v_index(lay.slot(p))]);
        }
        s
    };

    let mut r1 = zero;
    for s in 0..npos {
        let u = lay.position(s);
        if vmass(u).val() > 0.0 {
            r1 += clamp(x[lay.r_index(1, s)]);
        }
    }
    if r1.val() <= 0.0 {
        return false;
    }

    for s in 0..npos {
        let u = lay.position(s);
        let sm = vmass(u);
        if sm.val() <= 0.0 {
            continue;
        }
        let pu = clamp(x[lay.r_index(1, s)]) / r1;
        out[lay.r_index(1, s)] -= pu;
        let (lo, hi) = window(u);
        for p in lo..=hi {
            let sp = lay.slot(p);
            let pi = pu * clamp(x[lay.v_index(sp)]) / sm;
            out[lay.v_index(sp)] -= pi;
            for w in p..p + dv {
                if w != u {
                    hits[lay.slot(w)] += pi;
                }
            }
        }
    }

    for s in 0..npos {
        let h = hits[s];
        if h.is_zero() {
            continue;
        }
        let mut e = zero;
        for j in 1..=dc {
            e += clamp(x[lay.r_index(j, s)]);
        }
        if e.val() <= 0.0 {
            continue;
        }
        let mut q_next = zero;
        for j in (1..=dc).rev() {
            let q = clamp(x[lay.r_index(j, s)]) / e;
            out[lay.r_index(j, s)] += h * S::cst(j as f64) * (q_next - q);
            q_next = q;
        }
    }
    true
}

/// Drift at a plain state.
pub fn drift(lay: &Layout, x: &[f64]) -> (Vec<f64>, DriftCheck) {
    let mut out = vec![0.0; lay.dim()];
    let mut hits = vec![0.0; lay.positions()];
    let active = drift_generic(lay, x, &mut out, &mut hits);
    let mut check = DriftCheck {
        active,
        ..Default::default()
    };
    for (k, &f) in out.iter().enumerate() {
        if lay.is_variable(k) {
            check.sum_v += f;
        } else {
            check.sum_r += f;
        }
    }
    (out, check)
}

/// Column-compressed Jacobian of the drift.
#[derive(Clone, Debug, Default)]
pub struct SparseJacobian {
    pub dim: usize,
    /// `cols[k]` lists `(row, d f_row / d x_k)` for non-zero entries.
    pub cols: Vec<Vec<(u32, f64)>>,
}

impl SparseJacobian {
    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cols[col]
            .iter()
            .find(|&&(r, _)| r as usize == row)
            .map_or(0.0, |&(_, v)| v)
    }

    /// `out = J * a` for a dense row-major `dim x dim` matrix `a`.
    pub fn mul_dense(&self, a: &[f64], out: &mut [f64]) {
        let n = self.dim;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, col) in self.cols.iter().enumerate() {
            let src = &a[k * n..(k + 1) * n];
            for &(i, jv) in col {
                let dst = &mut out[i as usize * n..(i as usize + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += jv * s;
                }
            }
        }
    }
}

/// Jacobian of [`drift`] by forward-mode differentiation, one column per
/// pass. Coordinates whose perturbation cannot change anything (all-zero
/// positions beyond the decoded region) still get a pass; the cost is
/// linear in the state size.
pub fn jacobian(lay: &Layout, x: &[f64]) -> SparseJacobian {
    let n = lay.dim();
    let mut xd: Vec<Dual> = x.iter().map(|&v| Dual::cst(v)).collect();
    let mut out = vec![Dual::default(); n];
    let mut hits = vec![Dual::default(); lay.positions()];
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        xd[k].d = 1.0;
        drift_generic(lay, &xd, &mut out, &mut hits);
        xd[k].d = 0.0;
        cols.push(
            out.iter()
                .enumerate()
                .filter(|(_, o)| o.d != 0.0)
                .map(|(i, o)| (i as u32, o.d))
                .collect(),
        );
    }
    SparseJacobian { dim: n, cols }
}

/// Covariance `E[D D^T] - f f^T` of the one-step jump `D` of the
/// unnormalized counts, as a dense row-major matrix.
pub fn jump_covariance(lay: &Layout, x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = lay.dim();
    let npos = lay.positions();
    let (l, dv, dc) = (lay.l, lay.dv as i32, lay.dc);
    let mut g = vec![0.0; n * n];
    let c = |v: f64| v.max(0.0);

    // mean and second moment of a single hit at each position
    let mut hit_mean: Vec<Vec<(usize, f64)>> = vec![Vec::new(); npos];
    let mut hit_cov: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); npos];
    for s in 0..npos {
        let e: f64 = (1..=dc).map(|j| c(x[lay.r_index(j, s)])).sum();
        if e <= 0.0 {
            continue;
        }
        let mut mean = vec![0.0; dc + 1];
        let mut second = vec![vec![0.0; dc + 1]; dc + 1];
        for j in 1..=dc {
            let q = c(x[lay.r_index(j, s)]) / e;
            if q == 0.0 {
                continue;
            }
            // jump vector: -j at degree j, +(j-1) at degree j-1
            let mut a = vec![(j, -(j as f64))];
            if j > 1 {
                a.push((j - 1, (j - 1) as f64));
            }
            for &(i1, v1) in &a {
                mean[i1] += q * v1;
                for &(i2, v2) in &a {
                    second[i1][i2] += q * v1 * v2;
                }
            }
        }
        for j in 1..=dc {
            if mean[j] != 0.0 {
                hit_mean[s].push((lay.r_index(j, s), mean[j]));
            }
            for z in 1..=dc {
                let v = second[j][z] - mean[j] * mean[z];
                if v != 0.0 {
                    hit_cov[s].push((lay.r_index(j, s), lay.r_index(z, s), v));
                }
            }
        }
    }

    let window = |u: i32| ((u - dv + 1).max(-l), u.min(l));
    let vmass = |u: i32| -> f64 {
        let (lo, hi) = window(u);
        (lo..=hi).map(|p| c(x[lay.v_index(lay.slot(p))])).sum()
    };
    let r1: f64 = (0..npos)
        .filter(|&s| vmass(lay.position(s)) > 0.0)
        .map(|s| c(x[lay.r_index(1, s)]))
        .sum();
    if r1 <= 0.0 {
        return g;
    }
    let mut hits = vec![0.0; npos];
    let mut mu: Vec<(usize, f64)> = Vec::new();
    for s in 0..npos {
        let u = lay.position(s);
        let sm = vmass(u);
        let r1u = c(x[lay.r_index(1, s)]);
        if sm <= 0.0 || r1u == 0.0 {
            continue;
        }
        let (lo, hi) = window(u);
        for p in lo..=hi {
            let sp = lay.slot(p);
            let pi = r1u / r1 * c(x[lay.v_index(sp)]) / sm;
            if pi == 0.0 {
                continue;
            }
            mu.clear();
            mu.push((lay.v_index(sp), -1.0));
            mu.push((lay.r_index(1, s), -1.0));
            for w in p..p + dv {
                if w != u {
                    let sw = lay.slot(w);
                    hits[sw] += pi;
                    mu.extend_from_slice(&hit_mean[sw]);
                }
            }
            for &(a, va) in &mu {
                for &(b, vb) in &mu {
                    g[a * n + b] += pi * va * vb;
                }
            }
        }
    }
    for s in 0..npos {
        if hits[s] == 0.0 {
            continue;
        }
        for &(a, b, v) in &hit_cov[s] {
            g[a * n + b] += hits[s] * v;
        }
    }
    for a in 0..n {
        if f[a] == 0.0 {
            continue;
        }
        for b in 0..n {
            g[a * n + b] -= f[a] * f[b];
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::super::ege_initial;
    use super::*;
    use crate::ensemble::EnsembleParams;

    fn state() -> (Layout, Vec<f64>) {
        let p = EnsembleParams::parse(3, 6, 4, "6/5", 10).unwrap();
        let st = ege_initial(&p, 0.45).unwrap();
        (st.layout, st.x)
    }

    #[test]
    fn conservation_at_initial_state() {
        let (lay, x) = state();
        let (_, chk) = drift(&lay, &x);
        assert!(chk.active);
        assert!(chk.violation(3) < 1e-12, "{chk:?}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (lay, x) = state();
        let jac = jacobian(&lay, &x);
        let n = lay.dim();
        for k in (0..n).step_by(5) {
            let h = 1e-6 * x[k].abs().max(1e-3);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            if xm[k] < 0.0 {
                continue;
            }
            let (fp, _) = drift(&lay, &xp);
            let (fm, _) = drift(&lay, &xm);
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let ad = jac.get(i, k);
                assert!((fd - ad).abs() < 1e-5 * (1.0 + fd.abs()), "J[{i}][{k}] {ad} vs {fd}");
            }
        }
    }

    #[test]
    fn jump_covariance_is_symmetric_and_annihilates_totals() {
        let (lay, x) = state();
        let (f, _) = drift(&lay, &x);
        let g = jump_covariance(&lay, &x, &f);
        let n = lay.dim();
        for a in 0..n {
            for b in 0..n {
                assert!((g[a * n + b] - g[b * n + a]).abs() < 1e-12);
            }
            assert!(g[a * n + a] >= -1e-12);
        }
        // every jump removes exactly one variable: the variable total has no variance
        let vsum: f64 = (0..n)
            .filter(|&a| lay.is_variable(a))
            .flat_map(|a| (0..n).filter(|&b| lay.is_variable(b)).map(move |b| (a, b)))
            .map(|(a, b)| g[a * n + b])
            .sum();
        assert!(vsum.abs() < 1e-10, "{vsum}");
        let rsum: f64 = (0..n)
            .filter(|&a| !lay.is_variable(a))
            .flat_map(|a| (0..n).filter(|&b| !lay.is_variable(b)).map(move |b| (a, b)))
            .map(|(a, b)| g[a * n + b])
            .sum();
        assert!(rsum.abs() < 1e-10, "{rsum}");
    }
}
