//! Finite-length waterfall prediction from the evolution outputs.
//!
//! The block error probability at erasure rate `eps` is approximated by
//! `Q(gamma (eps_bp - eps) / sqrt(delta1* / M))`, with `Q` the standard
//! normal tail. Given `(eps_bp, gamma, delta1*)` the prediction depends on
//! the ensemble only through `M`, not through `L`.

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};
use crate::evolution::{bp_threshold, gamma_coefficient, solve_ce, SolverOptions};

/// Standard normal upper tail `P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Predicted block error probability at `eps`.
pub fn waterfall_estimate(m: u64, eps: f64, eps_bp: f64, gamma: f64, delta1_star: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    if !(delta1_star > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta1(tau*) must be positive, got {delta1_star}"
        )));
    }
    let z = gamma * (eps_bp - eps) / (delta1_star / m as f64).sqrt();
    Ok(q_function(z).clamp(0.0, 1.0))
}

/// Inclusive `start:stop:step` grid of erasure rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl EpsGrid {
    /// `0.40` to `eps_bp + 0.01` in steps of `0.0025`.
    pub fn default_for(eps_bp: f64) -> Self {
        EpsGrid {
            start: 0.40,
            stop: eps_bp + 0.01,
            step: 0.0025,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidArgument(format!("expected start:stop:step, got '{s}'"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let g = EpsGrid {
            start: v[0],
            stop: v[1],
            step: v[2],
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.start <= self.stop) || self.start < 0.0 || self.stop > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid grid {}:{}:{}",
                self.start, self.stop, self.step
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| {
                // round away binary noise so grid points print cleanly
                let e = self.start + k as f64 * self.step;
                (e * 1e10).round() / 1e10
            })
            .collect()
    }
}

/// Settings that produced a report, kept with it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub solver: SolverOptions,
    pub threshold_tol: f64,
    /// Erasure rate at which `gamma` and `delta1*` were evaluated.
    pub eps_gamma: f64,
    pub tau_star: f64,
    /// `delta1*` from the covariance run's own minimum; differs slightly
    /// from `delta1_star` when the two integrations place `tau*` apart.
    pub ce_tau_star: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionReport {
    pub params: EnsembleParams,
    pub eps_bp: f64,
    pub gamma: f64,
    pub delta1_star: f64,
    /// `gamma / sqrt(delta1*)`.
    pub steepness: f64,
    /// `(eps, predicted block error probability)`.
    pub curve: Vec<(f64, f64)>,
    pub provenance: Provenance,
}

impl PredictionReport {
    /// Curve at a different section size; everything else is unchanged.
    pub fn curve_for(&self, m: u64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        grid.iter()
            .map(|&e| Ok((e, waterfall_estimate(m, e, self.eps_bp, self.gamma, self.delta1_star)?)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,block_error\n");
        for (e, p) in &self.curve {
            s.push_str(&format!("{e},{p:e}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterizeOptions {
    pub solver: SolverOptions,
    pub threshold_tol: f64,
    /// Defaults to [`EpsGrid::default_for`].
    pub grid: Option<EpsGrid>,
}

impl CharacterizeOptions {
    pub fn for_params(params: &EnsembleParams) -> Self {
        CharacterizeOptions {
            solver: SolverOptions::for_params(params),
            threshold_tol: 1e-4,
            grid: None,
        }
    }
}

/// Threshold, `gamma`, `delta1*` and the predicted curve for `params`.
pub fn characterize_ensemble(params: &EnsembleParams, opts: &CharacterizeOptions) -> Result<PredictionReport> {
    let eps_bp = bp_threshold(params, opts.threshold_tol, &opts.solver)?;
    let (gamma, mean) = gamma_coefficient(params, eps_bp, &opts.solver)?;
    let tau_star = mean.tau_star.ok_or(Error::NoLocalMinimum { eps: mean.eps })?;
    // delta1 is only needed at tau*, so stop the covariance run shortly after
    let ce_opts = opts.solver.clone().with_until(Some(tau_star + 1.0));
    let ce = solve_ce(params, mean.eps, &ce_opts)?;
    // evaluate delta1 at the mean trajectory's tau*, which the RK4 run
    // locates more accurately than the finer-stepped covariance run
    let delta1_star = ce.delta1_at(tau_star);
    let grid = opts.grid.unwrap_or_else(|| EpsGrid::default_for(eps_bp));
    grid.validate()?;
    let curve = grid
        .points()
        .into_iter()
        .map(|e| Ok((e, waterfall_estimate(params.m, e, eps_bp, gamma, delta1_star)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionReport {
        params: params.clone(),
        eps_bp,
        gamma,
        delta1_star,
        steepness: gamma / delta1_star.sqrt(),
        curve,
        provenance: Provenance {
            solver: opts.solver.clone(),
            threshold_tol: opts.threshold_tol,
            eps_gamma: mean.eps,
            tau_star,
            ce_tau_star: ce.tau_star,
        },
    })
}
