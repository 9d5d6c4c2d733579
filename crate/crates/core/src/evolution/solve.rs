//! Numerical integration of the mean (RK4) and covariance (Euler)
//! evolution, bottleneck detection, thresholds and `gamma`.

use serde::{Deserialize, Serialize};

use super::drift::{drift, jacobian, jump_covariance, DriftCheck};
use super::initial::{ce_initial, ege_initial};
use super::{CovarianceState, Layout, MeanState};
use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};

/// Which check positions contribute to a sum over `r1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum R1Range {
    /// Every check position `[-L, L+dv-1]`.
    #[default]
    All,
    /// Only the chain positions `[-L, L]`.
    Chain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Nominal RK4 step.
    pub h: f64,
    /// Steps never exceed `kappa * R1`.
    pub kappa: f64,
    /// Integration stops once the residual variable mass falls to this
    /// fraction of its initial value.
    pub stop_mass: f64,
    /// Euler steps per nominal step for the covariance.
    pub ce_substeps: usize,
    /// Range of `r1` whose minimum defines `tau*` and `gamma`.
    pub r1_range: R1Range,
    /// Range of the double sum defining `delta_1`.
    pub delta1_range: R1Range,
    /// Stop at this time even if decoding is still in progress.
    pub until: Option<f64>,
    /// States are stored at these times (ascending).
    pub probes: Vec<f64>,
    pub max_steps: usize,
    /// Second differences of `r1` below this at the minimum count as flat.
    pub flat_curvature: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            h: 0.05,
            kappa: 0.2,
            stop_mass: 1e-6,
            ce_substeps: 10,
            r1_range: R1Range::All,
            delta1_range: R1Range::Chain,
            until: None,
            probes: Vec::new(),
            max_steps: 50_000_000,
            flat_curvature: 1e-6,
        }
    }
}

impl SolverOptions {
    /// Default step `1e-3 * alpha^L`, clipped to `[1e-3, 0.05]`.
    pub fn for_params(params: &EnsembleParams) -> Self {
        let scale = params.alpha.to_f64().powi(params.l_i32());
        SolverOptions {
            h: (1e-3 * scale).clamp(1e-3, 0.05),
            ..Default::default()
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_probes(mut self, probes: Vec<f64>) -> Self {
        self.probes = probes;
        self
    }

    pub fn with_until(mut self, until: Option<f64>) -> Self {
        self.until = until;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) || !(self.kappa > 0.0) || self.ce_substeps == 0 {
            return Err(Error::InvalidArgument(format!(
                "step parameters must be positive (h={}, kappa={}, substeps={})",
                self.h, self.kappa, self.ce_substeps
            )));
        }
        if self.probes.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("probe times must be ascending".into()));
        }
        Ok(())
    }
}

/// Worst conservation and symmetry errors seen along an integration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationStats {
    pub evaluations: u64,
    /// `max |sum dv + 1|, |sum dr + dv|` over active drift evaluations.
    pub max_drift_violation: f64,
    /// Largest `|delta_ab - delta_ba|` (covariance runs only).
    pub max_asymmetry: f64,
    /// Negative diagonal covariance entries projected to zero.
    pub projections: u64,
}

impl ConservationStats {
    fn record(&mut self, chk: &DriftCheck, dv: usize) {
        self.evaluations += 1;
        self.max_drift_violation = self.max_drift_violation.max(chk.violation(dv));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinimumKind {
    /// Strict interior local minimum of `r1`.
    Strict,
    /// A critical phase: `r1` levels off without a proper minimum.
    Flat,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub kind: MinimumKind,
    pub tau: f64,
    pub r1: f64,
    /// Second derivative of `r1` at the minimum.
    pub curvature: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanTrajectory {
    pub eps: f64,
    pub options: SolverOptions,
    pub tau: Vec<f64>,
    /// `r1` over the configured range.
    pub r1: Vec<f64>,
    pub total_v: Vec<f64>,
    pub minimum: Minimum,
    /// `Some` only for a strict interior minimum.
    pub tau_star: Option<f64>,
    pub r1_star: Option<f64>,
    /// True iff `r1` stayed positive until the residual mass vanished.
    pub completed: bool,
    pub probe_states: Vec<MeanState>,
    pub final_state: MeanState,
    pub conservation: ConservationStats,
}

impl MeanTrajectory {
    /// Linear interpolation of `r1` at `t`.
    pub fn r1_at(&self, t: f64) -> f64 {
        interpolate(&self.tau, &self.r1, t)
    }

    pub fn end_tau(&self) -> f64 {
        *self.tau.last().unwrap_or(&0.0)
    }
}

pub(crate) fn interpolate(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    if t <= xs[0] {
        return ys[0];
    }
    let k = xs.partition_point(|&x| x < t);
    if k >= xs.len() {
        return *ys.last().unwrap();
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x1 == x0 {
        return ys[k];
    }
    ys[k - 1] + (ys[k] - ys[k - 1]) * (t - x0) / (x1 - x0)
}

/// Lowest interior local minimum of `r`, refined by the parabola through
/// the neighbouring samples.
pub fn find_minimum(tau: &[f64], r: &[f64], flat_curvature: f64) -> Minimum {
    let mut best: Option<Minimum> = None;
    for i in 1..r.len().saturating_sub(1) {
        if !(r[i] < r[i - 1] && r[i] <= r[i + 1]) {
            continue;
        }
        let (t0, t1, t2) = (tau[i - 1], tau[i], tau[i + 1]);
        let (y0, y1, y2) = (r[i - 1], r[i], r[i + 1]);
        let d01 = (y1 - y0) / (t1 - t0);
        let d12 = (y2 - y1) / (t2 - t1);
        let a = (d12 - d01) / (t2 - t0);
        let (tv, yv) = if a > 0.0 {
            // vertex of y = y1 + b (t - t1) + a (t - t1)^2
            let b = d01 + a * (t1 - t0);
            let dt = (-b / (2.0 * a)).clamp(t0 - t1, t2 - t1);
            (t1 + dt, y1 + b * dt + a * dt * dt)
        } else {
            (t1, y1)
        };
        let m = Minimum {
            kind: if 2.0 * a >= flat_curvature {
                MinimumKind::Strict
            } else {
                MinimumKind::Flat
            },
            tau: tv,
            r1: yv,
            curvature: 2.0 * a,
        };
        let better = match &best {
            None => true,
            Some(b) => (m.kind == MinimumKind::Strict && b.kind != MinimumKind::Strict)
                || (m.kind == b.kind && m.r1 < b.r1),
        };
        if better {
            best = Some(m);
        }
    }
    best.unwrap_or(Minimum {
        kind: MinimumKind::None,
        tau: f64::NAN,
        r1: f64::NAN,
        curvature: 0.0,
    })
}

fn r1_all(lay: &Layout, x: &[f64]) -> f64 {
    (0..lay.positions()).map(|s| x[lay.r_index(1, s)]).sum()
}

fn r1_range(lay: &Layout, x: &[f64], range: R1Range) -> f64 {
    lay.r1_slots(range).map(|s| x[lay.r_index(1, s)]).sum()
}

fn total_v(lay: &Layout, x: &[f64]) -> f64 {
    (0..lay.positions()).map(|s| x[lay.v_index(s)]).sum()
}

/// Shared RK4 stepping of the mean; the caller supplies the step.
struct MeanStepper {
    lay: Layout,
    x: Vec<f64>,
    tau: f64,
    v0: f64,
    stats: ConservationStats,
}

enum StepOutcome {
    Continue,
    Completed,
    Failed,
}

impl MeanStepper {
    fn new(init: &MeanState) -> Self {
        let v0 = total_v(&init.layout, &init.x);
        MeanStepper {
            lay: init.layout,
            x: init.x.clone(),
            tau: 0.0,
            v0,
            stats: ConservationStats::default(),
        }
    }

    fn eval(&mut self, x: &[f64]) -> (Vec<f64>, bool) {
        let (f, chk) = drift(&self.lay, x);
        self.stats.record(&chk, self.lay.dv);
        (f, chk.active)
    }

    fn status(&self, stop_mass: f64) -> StepOutcome {
        if total_v(&self.lay, &self.x) <= stop_mass * self.v0 {
            StepOutcome::Completed
        } else if r1_all(&self.lay, &self.x) <= 1e-12 * self.v0.max(1.0) {
            StepOutcome::Failed
        } else {
            StepOutcome::Continue
        }
    }

    /// Largest admissible step from the current state. Each `r1` relaxes on
    /// a time scale proportional to `R1`, so the system turns stiff as `R1`
    /// shrinks and explicit steps must follow it.
    fn step_cap(&self, h: f64, kappa: f64) -> f64 {
        let v = total_v(&self.lay, &self.x);
        let r1 = r1_all(&self.lay, &self.x);
        h.min(0.1 * v).min(kappa * r1)
    }

    /// One RK4 step of size `h`; `k1` may be supplied by the caller.
    fn rk4(&mut self, h: f64, k1: Option<Vec<f64>>) -> Result<StepOutcome> {
        let n = self.x.len();
        let (k1, active) = match k1 {
            Some(k) => (k, true),
            None => self.eval(&self.x.clone()),
        };
        if !active {
            return Ok(StepOutcome::Failed);
        }
        let mut tmp = vec![0.0; n];
        let stage = |x: &[f64], k: &[f64], c: f64, out: &mut Vec<f64>| {
            for i in 0..n {
                out[i] = x[i] + c * k[i];
            }
        };
        stage(&self.x, &k1, h / 2.0, &mut tmp);
        let (k2, _) = self.eval(&tmp);
        stage(&self.x, &k2, h / 2.0, &mut tmp);
        let (k3, _) = self.eval(&tmp);
        stage(&self.x, &k3, h, &mut tmp);
        let (k4, _) = self.eval(&tmp);
        for i in 0..n {
            self.x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepSize {
                eps: f64::NAN,
                msg: format!("non-finite state at tau={:.4}", self.tau),
            });
        }
        self.tau += h;
        let r1 = r1_all(&self.lay, &self.x);
        for v in self.x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        if r1 <= 0.0 {
            return Ok(StepOutcome::Failed);
        }
        Ok(StepOutcome::Continue)
    }
}

/// Integrates the mean evolution from the channel output at `eps`.
pub fn solve_ege(params: &EnsembleParams, eps: f64, opts: &SolverOptions) -> Result<MeanTrajectory> {
    opts.validate()?;
    let init = ege_initial(params, eps)?;
    let lay = init.layout;
    let mut st = MeanStepper::new(&init);
    let mut tau = vec![0.0];
    let mut r1 = vec![r1_range(&lay, &st.x, opts.r1_range)];
    let mut tv = vec![st.v0];
    let mut probe_states = Vec::new();
    let mut next_probe = 0;
    let mut steps = 0usize;

    let completed = loop {
        while next_probe < opts.probes.len() && opts.probes[next_probe] <= st.tau + 1e-12 {
            probe_states.push(MeanState {
                layout: lay,
                tau: opts.probes[next_probe],
                x: st.x.clone(),
            });
            next_probe += 1;
        }
        match st.status(opts.stop_mass) {
            StepOutcome::Completed => break true,
            StepOutcome::Failed => break false,
            StepOutcome::Continue => {}
        }
        if opts.until.is_some_and(|u| st.tau >= u - 1e-12) {
            break false;
        }
        let x = st.x.clone();
        let (k1, active) = st.eval(&x);
        if !active {
            break false;
        }
        let mut h = st.step_cap(opts.h, opts.kappa);
        if let Some(&p) = opts.probes.get(next_probe) {
            h = h.min(p - st.tau);
        }
        if let Some(u) = opts.until {
            h = h.min(u - st.tau);
        }
        let out = st.rk4(h.max(1e-15), Some(k1)).map_err(|e| match e {
            Error::StepSize { msg, .. } => Error::StepSize { eps, msg },
            e => e,
        })?;
        tau.push(st.tau);
        r1.push(r1_range(&lay, &st.x, opts.r1_range));
        tv.push(total_v(&lay, &st.x));
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepSize {
                eps,
                msg: format!("exceeded {} steps", opts.max_steps),
            });
        }
        if let StepOutcome::Failed = out {
            break false;
        }
    };
    let final_state = MeanState {
        layout: lay,
        tau: st.tau,
        x: st.x.clone(),
    };
    while probe_states.len() < opts.probes.len() {
        let t = opts.probes[probe_states.len()];
        probe_states.push(MeanState { tau: t, ..final_state.clone() });
    }
    let minimum = find_minimum(&tau, &r1, opts.flat_curvature);
    let strict = minimum.kind == MinimumKind::Strict;
    Ok(MeanTrajectory {
        eps,
        options: opts.clone(),
        tau,
        r1,
        total_v: tv,
        minimum,
        tau_star: strict.then_some(minimum.tau),
        r1_star: strict.then_some(minimum.r1),
        completed,
        probe_states,
        final_state,
        conservation: st.stats,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovTrajectory {
    pub eps: f64,
    pub tau: Vec<f64>,
    pub r1: Vec<f64>,
    pub delta1: Vec<f64>,
    pub minimum: Minimum,
    pub tau_star: Option<f64>,
    pub delta1_star: Option<f64>,
    pub completed: bool,
    pub probe_states: Vec<CovarianceState>,
    pub final_state: CovarianceState,
    pub conservation: ConservationStats,
}

impl CovTrajectory {
    pub fn delta1_at(&self, t: f64) -> f64 {
        interpolate(&self.tau, &self.delta1, t)
    }
}

/// Integrates the covariance evolution by forward Euler along an RK4 mean
/// solution advanced with the same (finer) step.
pub fn solve_ce(params: &EnsembleParams, eps: f64, opts: &SolverOptions) -> Result<CovTrajectory> {
    opts.validate()?;
    let init = ege_initial(params, eps)?;
    let lay = init.layout;
    let n = lay.dim();
    let mut cov = ce_initial(params, eps)?;
    let mut st = MeanStepper::new(&init);
    let h_ce = opts.h / opts.ce_substeps as f64;
    let kappa_ce = opts.kappa / opts.ce_substeps as f64;

    let mut tau = vec![0.0];
    let mut r1 = vec![r1_range(&lay, &st.x, opts.r1_range)];
    let mut d1 = vec![cov.delta1(opts.delta1_range)];
    let mut probe_states = Vec::new();
    let mut next_probe = 0;
    let mut p = vec![0.0; n * n];
    let mut steps = 0usize;
    let mut warned = false;

    let completed = loop {
        while next_probe < opts.probes.len() && opts.probes[next_probe] <= st.tau + 1e-12 {
            probe_states.push(CovarianceState {
                tau: opts.probes[next_probe],
                ..cov.clone()
            });
            next_probe += 1;
        }
        match st.status(opts.stop_mass) {
            StepOutcome::Completed => break true,
            StepOutcome::Failed => break false,
            StepOutcome::Continue => {}
        }
        if opts.until.is_some_and(|u| st.tau >= u - 1e-12) {
            break false;
        }
        let x = st.x.clone();
        let (f, active) = st.eval(&x);
        if !active {
            break false;
        }
        let mut h = st.step_cap(h_ce, kappa_ce);
        if let Some(&pt) = opts.probes.get(next_probe) {
            h = h.min(pt - st.tau);
        }
        if let Some(u) = opts.until {
            h = h.min(u - st.tau);
        }
        let h = h.max(1e-15);
        let jac = jacobian(&lay, &x);
        let gamma = jump_covariance(&lay, &x, &f);
        jac.mul_dense(&cov.delta, &mut p);
        for a in 0..n {
            for b in a..n {
                let d = cov.delta[a * n + b] + h * (p[a * n + b] + p[b * n + a] + gamma[a * n + b]);
                cov.delta[a * n + b] = d;
                cov.delta[b * n + a] = d;
            }
        }
        for a in 0..n {
            let d = &mut cov.delta[a * n + a];
            if *d < 0.0 {
                if *d < -1e-9 {
                    st.stats.projections += 1;
                    if !warned {
                        log::warn!("covariance diagonal {a} fell to {d:.3e} at tau={:.4}; projecting to 0", st.tau);
                        warned = true;
                    }
                }
                *d = 0.0;
            }
        }
        let out = st.rk4(h, Some(f)).map_err(|e| match e {
            Error::StepSize { msg, .. } => Error::StepSize { eps, msg },
            e => e,
        })?;
        cov.tau = st.tau;
        tau.push(st.tau);
        r1.push(r1_range(&lay, &st.x, opts.r1_range));
        d1.push(cov.delta1(opts.delta1_range));
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepSize {
                eps,
                msg: format!("exceeded {} steps", opts.max_steps),
            });
        }
        if let StepOutcome::Failed = out {
            break false;
        }
    };
    st.stats.max_asymmetry = cov.max_asymmetry();
    while probe_states.len() < opts.probes.len() {
        let t = opts.probes[probe_states.len()];
        probe_states.push(CovarianceState { tau: t, ..cov.clone() });
    }
    let minimum = find_minimum(&tau, &r1, opts.flat_curvature);
    let tau_star = (minimum.kind == MinimumKind::Strict).then_some(minimum.tau);
    let delta1_star = tau_star.map(|t| interpolate(&tau, &d1, t));
    Ok(CovTrajectory {
        eps,
        tau,
        r1,
        delta1: d1,
        minimum,
        tau_star,
        delta1_star,
        completed,
        probe_states,
        final_state: cov,
        conservation: st.stats,
    })
}

/// BP threshold by bisection on whether the mean evolution completes.
pub fn bp_threshold(params: &EnsembleParams, tol: f64, opts: &SolverOptions) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let quick = SolverOptions {
        probes: Vec::new(),
        until: None,
        ..opts.clone()
    };
    let completes = |eps: f64| solve_ege(params, eps, &quick).map(|t| t.completed);
    let (mut lo, mut hi) = (0.3, 0.5 - 1e-9);
    if !completes(lo)? {
        return Err(Error::Bracket(format!("decoding fails already at eps={lo}")));
    }
    if completes(hi)? {
        return Err(Error::Bracket(format!("decoding still completes at eps={hi}")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if completes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `gamma = r1(tau*) / 0.01` at `eps = eps_bp - 0.01`.
pub fn gamma_coefficient(
    params: &EnsembleParams,
    eps_bp: f64,
    opts: &SolverOptions,
) -> Result<(f64, MeanTrajectory)> {
    let eps = eps_bp - 0.01;
    let traj = solve_ege(params, eps, opts)?;
    match traj.r1_star {
        Some(r) => Ok((r / 0.01, traj)),
        None => Err(Error::NoLocalMinimum { eps }),
    }
}
