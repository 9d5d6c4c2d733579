//! Acceptance suite. Each test covers one criterion and prints a single
//! `criterion N ... PASS|FAIL` line on stderr, visible even when output is
//! captured.
//!
//! Run alone with `cargo test --release -p sfc-ldpc --test acceptance`.

use std::io::Write as _;
use std::time::Instant;

use sfc_ldpc::decoder::{bp_decode, peel, sample_erasures};
use sfc_ldpc::ensemble::binomial;
use sfc_ldpc::evolution::{
    bp_threshold, ce_initial, drift, ege_initial, empirical_moments, solve_ce, solve_ege,
    ConservationStats, EmpiricalConfig, Layout, SolverOptions,
};
use sfc_ldpc::harness::{reproduce_tables, run_waterfall, ExperimentConfig, RunControl, Table, TableOptions};
use sfc_ldpc::predict::{characterize_ensemble, waterfall_estimate, CharacterizeOptions};
use sfc_ldpc::sampler::sample_graph;
use sfc_ldpc::stats::derive_seed;
use sfc_ldpc::{
    connection_law, position_profile, position_profile_with, solve_construction, Alpha, EnsembleParams,
    Rounding,
};
use statrs::distribution::{ContinuousCDF, Normal};

fn report(n: u32, name: &str, pass: bool, started: Instant, detail: &str) {
    let line = format!(
        "criterion {n:>2} {name:<28} {} ({:.1}s) {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    // bypasses the test harness capture so the line always shows
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn ens(dv: u32, dc: u32, l: u32, alpha: &str, m: u64) -> EnsembleParams {
    EnsembleParams::parse(dv, dc, l, alpha, m).unwrap()
}

#[test]
fn criterion_01_construction_lengths() {
    let t0 = Instant::now();
    let mut bad = Vec::new();
    for (l, m, want) in [(7, 500, 10469u64), (10, 500, 17243), (15, 500, 33875), (20, 500, 60656)] {
        let got = position_profile_with(&ens(3, 6, l, "1.1", m), Rounding::Float).unwrap().code_length();
        if got != want {
            bad.push(format!("L={l}: {got} != {want}"));
        }
    }
    let target = position_profile(&ens(3, 6, 25, "1", 250)).unwrap().code_length();
    if target != 12750 {
        bad.push(format!("target {target} != 12750"));
    }
    let fit = solve_construction(12750, 0.482, &"1.11".parse::<Alpha>().unwrap(), 3, 6).unwrap();
    let sfc = position_profile(&fit.params).unwrap().code_length();
    if (fit.params.l, fit.params.m, sfc) != (12, 260, 12734) {
        bad.push(format!("SFC fit L={} M={} length {sfc}", fit.params.l, fit.params.m));
    }
    let detail = if bad.is_empty() { "all lengths exact".to_string() } else { bad.join("; ") };
    report(1, "construction lengths", bad.is_empty(), t0, &detail);
}

/// Closed forms of the coupled (dv, dc, L) ensemble without growth.
struct ScOracle {
    l: i32,
    dv: i32,
    dc: usize,
    eps: f64,
}

impl ScOracle {
    /// Fraction of real sockets of a check at `i`.
    fn s(&self, i: i32) -> f64 {
        let real = (i - self.dv + 1..=i).filter(|k| k.abs() <= self.l).count();
        real as f64 / self.dv as f64
    }

    fn bin(n: usize, k: usize, p: f64) -> f64 {
        if k > n {
            return 0.0;
        }
        binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    /// Erased degree law of a check.
    fn q(&self, j: usize, i: i32) -> f64 {
        Self::bin(self.dc, j, self.s(i) * self.eps)
    }

    /// Erased degree of a check seen through an erased real edge.
    fn e(&self, z: usize, i: i32) -> f64 {
        if z == 0 {
            return 0.0;
        }
        Self::bin(self.dc - 1, z - 1, self.s(i) * self.eps)
    }

    /// The same through a known real edge.
    fn k(&self, z: usize, i: i32) -> f64 {
        Self::bin(self.dc - 1, z, self.s(i) * self.eps)
    }

    fn r_mean(&self, j: usize, i: i32) -> f64 {
        j as f64 * self.dv as f64 / self.dc as f64 * self.q(j, i)
    }

    fn v_mean(&self, i: i32) -> f64 {
        if i.abs() <= self.l {
            self.eps
        } else {
            0.0
        }
    }

    /// `Cov(j 1[J = j], m)` with `m` the real degree and `J` the erased one.
    fn c(&self, j: usize, i: i32) -> f64 {
        let s = self.s(i);
        let e = self.eps;
        let dc = self.dc as f64;
        let jf = j as f64;
        let cond_m = jf + (dc - jf) * s * (1.0 - e) / (1.0 - s * e);
        jf * self.q(j, i) * (cond_m - dc * s)
    }

    /// Scaled covariance with `j = dc + 1` meaning the variable count.
    fn cov(&self, j: usize, u: i32, z: usize, x: i32) -> f64 {
        let vi = self.dc + 1;
        let (eps, dv, dc) = (self.eps, self.dv, self.dc);
        if j == vi && z == vi {
            return if u == x && u.abs() <= self.l { eps * (1.0 - eps) } else { 0.0 };
        }
        if j == vi || z == vi {
            let (u, z, x) = if j == vi { (u, z, x) } else { (x, j, u) };
            if u.abs() > self.l || x < u || x > u + dv - 1 {
                return 0.0;
            }
            return z as f64 * eps * (1.0 - eps) * (self.e(z, x) - self.k(z, x));
        }
        let (jf, zf) = (j as f64, z as f64);
        let a = dv as f64 / dc as f64;
        if u == x {
            let s = self.s(u);
            let delta = if j == z { self.q(j, u) } else { 0.0 };
            let mut v = jf * zf * a * (delta - self.q(j, u) * self.q(z, u));
            let var_m = dc as f64 * s * (1.0 - s);
            if var_m > 0.0 {
                v -= a * self.c(j, u) * self.c(z, u) / var_m;
            }
            return v;
        }
        let (u, j, x, z) = if u < x { (u, j, x, z) } else { (x, z, u, j) };
        if x - u >= dv {
            return 0.0;
        }
        let shared = (x - dv + 1..=u).filter(|k| k.abs() <= self.l).count() as f64;
        let p = |w: usize, i: i32| eps * self.e(w, i) + (1.0 - eps) * self.k(w, i);
        let both = eps * self.e(j, u) * self.e(z, x) + (1.0 - eps) * self.k(j, u) * self.k(z, x);
        jf * zf * shared * (both - p(j, u) * p(z, x))
    }
}

#[test]
fn criterion_02_sc_reduction() {
    let t0 = Instant::now();
    let params = ens(3, 6, 5, "1", 100);
    let lay = Layout::new(&params);
    let (dv, dc, l) = (3i32, 6usize, 5i32);
    let positions: Vec<i32> = (-l..=l + dv - 1).collect();
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for eps in [0.1, 0.45, 0.9] {
        let o = ScOracle { l, dv, dc, eps };
        let mean = ege_initial(&params, eps).unwrap();
        let cov = ce_initial(&params, eps).unwrap();
        assert_eq!(cov.dim(), lay.dim());
        for &u in &positions {
            worst = worst.max((mean.v_hat(u) - o.v_mean(u)).abs());
            for j in 1..=dc {
                worst = worst.max((mean.r_hat(j, u) - o.r_mean(j, u)).abs());
            }
            for j in 1..=dc + 1 {
                for &x in &positions {
                    for z in 1..=dc + 1 {
                        worst = worst.max((cov.get(j, u, z, x) - o.cov(j, u, z, x)).abs());
                        compared += 1;
                    }
                }
            }
        }
    }
    report(
        2,
        "SC reduction",
        worst <= 1e-12,
        t0,
        &format!("max |diff| {worst:.2e} over {compared} covariance entries"),
    );
}

#[test]
fn criterion_03_connection_statistics() {
    let t0 = Instant::now();
    let (dv, dc, l, alpha) = (3i32, 6usize, 5i32, 1.2f64);
    let params = ens(3, 6, 5, "1.2", 2000);
    const GRAPHS: u64 = 200;
    const PER_POSITION: u32 = 5;
    let positions: Vec<i32> = (-l..=l + dv - 1).collect();
    let np = positions.len();
    // counts[pos][j]: sockets filled from position i - j; then dummy sockets
    let mut from = vec![vec![0u64; dv as usize]; np];
    let mut sockets = vec![0u64; np];
    let mut real = vec![0u64; np];
    let mut nonempty = vec![0u64; np];
    let mut checks = vec![0u64; np];
    for g in 0..GRAPHS {
        let graph = sample_graph(&params, derive_seed(31, 0, g)).unwrap();
        for (pi, &i) in positions.iter().enumerate() {
            for c in graph.checks_at(i).take(PER_POSITION as usize) {
                let cap = graph.check_capacity(c);
                assert_eq!(cap as usize, dc, "leading checks have full capacity");
                sockets[pi] += cap as u64;
                checks[pi] += 1;
                let nb = graph.check_neighbors(c);
                real[pi] += nb.len() as u64;
                if !nb.is_empty() {
                    nonempty[pi] += 1;
                }
                for &v in nb {
                    let j = i - graph.variable_position(v);
                    from[pi][j as usize] += 1;
                }
            }
        }
    }
    let w = |k: i32| alpha.powi(l - k.abs());
    let mut worst = 0.0f64;
    let mut tests = 0;
    let mut check = |count: u64, n: u64, p: f64| {
        let f = count as f64 / n as f64;
        let z = if p <= 0.0 || p >= 1.0 {
            if (f - p).abs() < 1e-12 { 0.0 } else { f64::INFINITY }
        } else {
            (f - p).abs() / (p * (1.0 - p) / n as f64).sqrt()
        };
        worst = worst.max(z);
        tests += 1;
    };
    for (pi, &i) in positions.iter().enumerate() {
        let window: f64 = (0..dv).map(|j| w(i - j)).sum();
        // item 2: source position of a socket
        for j in 0..dv {
            if (i - j).abs() <= l {
                check(from[pi][j as usize], sockets[pi], w(i - j) / window);
            }
        }
        // item 3: real socket fraction
        let s: f64 = (0..dv).filter(|j| (i - j).abs() <= l).map(|j| w(i - j)).sum::<f64>() / window;
        check(real[pi], sockets[pi], s);
        // item 4: a check keeps at least one edge
        check(nonempty[pi], checks[pi], 1.0 - (1.0 - s).powi(dc as i32));
    }
    report(
        3,
        "connection statistics",
        worst <= 3.0,
        t0,
        &format!("{tests} frequencies, largest deviation {worst:.2} standard errors"),
    );
}

#[test]
fn criterion_04_thresholds() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for (l, alpha, want) in [(20, "1.1", 0.4703), (25, "1.05", 0.4785), (20, "1.05", 0.4785), (7, "1.1", 0.4710)] {
        let p = ens(3, 6, l, alpha, 1000);
        let got = bp_threshold(&p, 1e-4, &SolverOptions::for_params(&p)).unwrap();
        let ok = (got - want).abs() <= 5e-4;
        pass &= ok;
        lines.push(format!("(3,6,{l},{alpha}) {got:.5} vs {want}"));
    }
    report(4, "BP thresholds", pass, t0, &lines.join(", "));
}

#[test]
fn criterion_05_table_i() {
    let t0 = Instant::now();
    let rep = reproduce_tables(Table::I, &TableOptions::default()).unwrap();
    let _ = std::io::stderr().write_all(rep.to_text().as_bytes());
    let failed: Vec<String> = rep
        .cells
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} {} {:.4} vs {}", c.row, c.column, c.ours, c.published))
        .chain(rep.orderings.iter().filter(|o| !o.pass).map(|o| o.name.clone()))
        .collect();
    let detail = if failed.is_empty() {
        format!("{} cells and both orderings within tolerance", rep.cells.len())
    } else {
        failed.join("; ")
    };
    report(5, "Table I sweep", rep.passed(), t0, &detail);
}

/// 20 times spread evenly over the middle 80% of `[0, end]`.
fn middle_probes(end: f64) -> Vec<f64> {
    (0..20).map(|k| end * (0.1 + 0.8 * k as f64 / 19.0)).collect()
}

#[test]
fn criterion_06_mean_oracle() {
    let t0 = Instant::now();
    let p = ens(3, 6, 10, "1.1", 2000);
    let eps = 0.45;
    let mean = solve_ege(&p, eps, &SolverOptions::for_params(&p)).unwrap();
    assert!(mean.completed);
    let probes = middle_probes(mean.end_tau());
    let mut cfg = EmpiricalConfig::new(2000, 500, 6, probes.clone());
    cfg.full_covariance = false;
    let emp = empirical_moments(&p, eps, &cfg).unwrap();
    let mut worst = (0.0f64, 0.0f64);
    for (k, &t) in probes.iter().enumerate() {
        let z = (mean.r1_at(t) - emp.r1_mean(k)).abs() / emp.r1_standard_error(k);
        if z > worst.0 {
            worst = (z, t);
        }
    }
    report(
        6,
        "mean evolution vs Monte-Carlo",
        worst.0 <= 3.0,
        t0,
        &format!("largest deviation {:.2} standard errors at tau={:.3}", worst.0, worst.1),
    );
}

#[test]
fn criterion_07_covariance_oracle() {
    let t0 = Instant::now();
    let p = ens(3, 6, 20, "1.1", 2000);
    let eps = 0.45;
    let opts = SolverOptions::for_params(&p);
    let mean = solve_ege(&p, eps, &opts).unwrap();
    assert!(mean.completed);
    let probes = middle_probes(mean.end_tau());
    let ce = solve_ce(&p, eps, &opts.with_probes(probes.clone())).unwrap();
    let mut cfg = EmpiricalConfig::new(2000, 2000, 7, probes.clone());
    cfg.full_covariance = false;
    let emp = empirical_moments(&p, eps, &cfg).unwrap();
    let mut worst = (0.0f64, 0.0f64);
    for (k, &t) in probes.iter().enumerate() {
        let dev = (ce.delta1_at(t) / emp.delta1(k) - 1.0).abs();
        if dev > worst.0 {
            worst = (dev, t);
        }
    }
    report(
        7,
        "covariance vs Monte-Carlo",
        worst.0 <= 0.15,
        t0,
        &format!("largest relative deviation {:.1}% at tau={:.3}", 100.0 * worst.0, worst.1),
    );
}

#[test]
fn criterion_08_decoder_equivalence() {
    let t0 = Instant::now();
    const INSTANCES: u64 = 10_000;
    let degrees = [(3, 6), (3, 9), (4, 8), (2, 4)];
    let alphas = ["1", "1.1", "6/5", "3/2"];
    let mut agree = 0u64;
    for n in 0..INSTANCES {
        let r = derive_seed(8, 0, n);
        let (dv, dc) = degrees[(r % 4) as usize];
        let alpha = alphas[((r >> 2) % 4) as usize];
        let l = 1 + ((r >> 4) % 4) as u32;
        let m = 4 + ((r >> 6) % 37);
        let eps = 0.25 + 0.4 * ((r >> 12) % 1000) as f64 / 1000.0;
        let g = sample_graph(&ens(dv, dc, l, alpha, m), derive_seed(8, 1, n)).unwrap();
        let pat = sample_erasures(&g, eps, derive_seed(8, 2, n)).unwrap();
        let tr = peel(&g, &pat, derive_seed(8, 3, n)).unwrap();
        let bp = bp_decode(&g, &pat, None).unwrap();
        if tr.outcome == bp.outcome && tr.residual.len() == bp.residual {
            agree += 1;
        }
    }
    report(
        8,
        "peeling and BP agree",
        agree == INSTANCES,
        t0,
        &format!("{agree}/{INSTANCES} instances agree"),
    );
}

#[test]
fn criterion_09_waterfall() {
    let t0 = Instant::now();
    let eps_grid = vec![0.445, 0.450, 0.455];
    let p = ens(3, 6, 10, "1.1", 500);
    let pred = characterize_ensemble(&p, &CharacterizeOptions::for_params(&p)).unwrap();
    let normal = Normal::standard();
    let mut pass = true;
    let mut lines = Vec::new();
    let mut shifts = Vec::new();
    for (name, m) in [("A2", 500u64), ("B1", 1000)] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(p.with_m(m), eps_grid.clone(), 100, 100, 9);
        cfg.girth_conditioning = true;
        cfg.output_dir = Some(dir.path().to_path_buf());
        let table = run_waterfall(&cfg, &RunControl::default()).unwrap();
        let predicted: Vec<f64> = eps_grid
            .iter()
            .map(|&e| waterfall_estimate(m, e, pred.eps_bp, pred.gamma, pred.delta1_star).unwrap())
            .collect();
        let scale = (pred.delta1_star / m as f64).sqrt() / pred.gamma;
        let mut shift = Vec::new();
        for (row, &q) in table.rows.iter().zip(&predicted) {
            let c = row.counts;
            // with no errors the rule-of-three bound stands in for the estimate
            let within = match row.wer_upper_bound {
                None => row.word_error_rate >= q / 10.0 && row.word_error_rate <= q * 10.0,
                Some(upper) => upper >= q / 10.0,
            };
            pass &= within;
            if c.word_errors > 0 && c.word_errors < c.words {
                // erasure rate at which the prediction reaches the simulated rate
                let at = pred.eps_bp - normal.inverse_cdf(1.0 - row.word_error_rate) * scale;
                shift.push(at - row.epsilon);
            }
            lines.push(format!(
                "{name} eps={} wer={:.2e} ({}/{}) predicted {q:.2e}{}",
                row.epsilon,
                row.word_error_rate,
                c.word_errors,
                c.words,
                if within { "" } else { " OUT" }
            ));
        }
        // monotone within the 95% intervals
        let sim_monotone = table.rows.windows(2).all(|w| w[1].wer_interval.1 >= w[0].wer_interval.0);
        let pred_monotone = predicted.windows(2).all(|w| w[1] > w[0]);
        pass &= sim_monotone && pred_monotone;
        let mean_shift = if shift.is_empty() { f64::NAN } else { shift.iter().sum::<f64>() / shift.len() as f64 };
        lines.push(format!(
            "{name} shift {mean_shift:.5} over {} points{}",
            shift.len(),
            if sim_monotone { "" } else { " (simulated curve not monotone)" }
        ));
        shifts.push(mean_shift);
    }
    let shrinks = shifts[1].abs() < shifts[0].abs();
    pass &= shrinks;
    for l in &lines {
        let _ = writeln!(std::io::stderr(), "    {l}");
    }
    report(
        9,
        "waterfall prediction",
        pass,
        t0,
        &format!("horizontal shift A2 {:.5}, B1 {:.5}", shifts[0], shifts[1]),
    );
}

fn fold(acc: &mut ConservationStats, s: &ConservationStats) {
    acc.evaluations += s.evaluations;
    acc.max_drift_violation = acc.max_drift_violation.max(s.max_drift_violation);
    acc.max_asymmetry = acc.max_asymmetry.max(s.max_asymmetry);
    acc.projections += s.projections;
}

#[test]
fn criterion_10_conservation() {
    let t0 = Instant::now();
    let mut acc = ConservationStats::default();
    let mut norm_err = 0.0f64;
    // (ensemble, erasure rates) of the runs behind criteria 4 to 7
    let runs: [(u32, &str, &[f64]); 6] = [
        (20, "1.1", &[0.45, 0.4603, 0.4703, 0.4803]),
        (25, "1.05", &[0.4685, 0.4785, 0.4885]),
        (20, "1.05", &[0.4685, 0.4785, 0.4885]),
        (7, "1.1", &[0.461, 0.471, 0.481]),
        (20, "1.15", &[0.4531, 0.4631]),
        (10, "1.1", &[0.45]),
    ];
    let covariance_at = |l: u32, alpha: &str, eps: f64| {
        (l, alpha, eps) == (20, "1.1", 0.45)
            || (l, alpha, eps) == (10, "1.1", 0.45)
            || (l == 20 && [0.4603, 0.4685, 0.4531].contains(&eps))
    };
    for &(l, alpha, epss) in &runs {
        let p = ens(3, 6, l, alpha, 1000);
        let opts = SolverOptions::for_params(&p);
        let law = connection_law(&p).unwrap();
        for i in p.check_positions() {
            norm_err = norm_err.max((law.rho_vector(i).iter().sum::<f64>() - 1.0).abs());
            norm_err = norm_err.max((law.rho_prime_vector(i).iter().sum::<f64>() - 1.0).abs());
            let src: f64 = (0..p.dv as i32).map(|j| law.source_probability(i, j)).sum();
            norm_err = norm_err.max((src - 1.0).abs());
            for &eps in epss {
                norm_err = norm_err.max((law.p_init_vector(i, eps).iter().sum::<f64>() - 1.0).abs());
            }
        }
        for &eps in epss {
            let mean = solve_ege(&p, eps, &opts).unwrap();
            fold(&mut acc, &mean.conservation);
            if covariance_at(l, alpha, eps) {
                let until = mean.tau_star.map(|t| t + 1.0);
                let ce = solve_ce(&p, eps, &opts.clone().with_until(until)).unwrap();
                fold(&mut acc, &ce.conservation);
            }
            // the drift itself at the initial state
            let init = ege_initial(&p, eps).unwrap();
            let (_, chk) = drift(&init.layout, &init.x);
            acc.max_drift_violation = acc.max_drift_violation.max(chk.violation(3));
        }
    }
    let alpha12 = ens(3, 6, 20, "1.2", 1000);
    let mean = solve_ege(&alpha12, 0.4471, &SolverOptions::for_params(&alpha12)).unwrap();
    fold(&mut acc, &mean.conservation);
    let ce = solve_ce(
        &alpha12,
        0.4471,
        &SolverOptions::for_params(&alpha12).with_until(mean.tau_star.map(|t| t + 1.0)),
    )
    .unwrap();
    fold(&mut acc, &ce.conservation);

    let pass = acc.max_drift_violation <= 1e-9 && acc.max_asymmetry <= 1e-9 && norm_err <= 1e-12;
    report(
        10,
        "conservation",
        pass,
        t0,
        &format!(
            "{} drift evaluations, violation {:.1e}, asymmetry {:.1e}, normalization {:.1e}, {} projections",
            acc.evaluations, acc.max_drift_violation, acc.max_asymmetry, norm_err, acc.projections
        ),
    );
}
