//! Expected graph evolution (EGE) and covariance evolution (CE) of the
//! peeling decoder on an SFC ensemble.
//!
//! The state lives on check positions `u in [-L, L+dv-1]`. For every
//! position there are `dc + 1` coordinates: the normalized edge counts
//! `r_{j,u}` on residual checks of degree `j = 1..=dc`, followed by the
//! normalized residual variable count `v_u` (zero for `u > L`). Time is
//! `tau = t / M` for the base section size `M`.
//!
//! The mean dynamics are the one-step expected change of the peeling
//! Markov chain under the configuration-model approximation; the covariance
//! obeys the matching diffusion approximation
//! `d delta / d tau = J delta + delta J^T + Gamma`.

mod drift;
mod empirical;
mod initial;
mod scalar;
mod solve;

pub use drift::{drift, drift_generic, jacobian, jump_covariance, DriftCheck, SparseJacobian};
pub use empirical::{empirical_moments, EmpiricalConfig, EmpiricalMoments};
pub use initial::{ce_initial, ege_initial};
pub use scalar::{Dual, Scalar};
pub use solve::{
    bp_threshold, find_minimum, gamma_coefficient, solve_ce, solve_ege, ConservationStats,
    CovTrajectory, MeanTrajectory, Minimum, MinimumKind, R1Range, SolverOptions,
};

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleParams;

/// Index arithmetic for the flattened state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub l: i32,
    pub dv: usize,
    pub dc: usize,
}

impl Layout {
    pub fn new(params: &EnsembleParams) -> Self {
        Layout {
            l: params.l_i32(),
            dv: params.dv as usize,
            dc: params.dc as usize,
        }
    }

    /// Number of check positions `2L + dv`.
    pub fn positions(&self) -> usize {
        2 * self.l as usize + self.dv
    }

    pub fn dim(&self) -> usize {
        self.positions() * (self.dc + 1)
    }

    pub fn slot(&self, u: i32) -> usize {
        debug_assert!(u >= -self.l && u < self.l + self.dv as i32);
        (u + self.l) as usize
    }

    pub fn position(&self, slot: usize) -> i32 {
        slot as i32 - self.l
    }

    /// Coordinate of `r_{j,u}` for `j in 1..=dc`, or of `v_u` for `j = dc + 1`.
    pub fn index(&self, j: usize, u: i32) -> usize {
        debug_assert!((1..=self.dc + 1).contains(&j));
        self.slot(u) * (self.dc + 1) + j - 1
    }

    pub fn r_index(&self, j: usize, slot: usize) -> usize {
        slot * (self.dc + 1) + j - 1
    }

    pub fn v_index(&self, slot: usize) -> usize {
        slot * (self.dc + 1) + self.dc
    }

    pub fn is_variable(&self, k: usize) -> bool {
        k % (self.dc + 1) == self.dc
    }

    /// Slots whose `r_1` enters `r1` for the given range.
    pub fn r1_slots(&self, range: R1Range) -> std::ops::Range<usize> {
        match range {
            R1Range::All => 0..self.positions(),
            R1Range::Chain => 0..(2 * self.l + 1) as usize,
        }
    }
}

/// Normalized expected residual graph `(v_u, r_{j,u})` at time `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanState {
    pub layout: Layout,
    pub tau: f64,
    pub x: Vec<f64>,
}

impl MeanState {
    pub fn zeros(layout: Layout) -> Self {
        MeanState {
            layout,
            tau: 0.0,
            x: vec![0.0; layout.dim()],
        }
    }

    pub fn v_hat(&self, u: i32) -> f64 {
        self.x[self.layout.v_index(self.layout.slot(u))]
    }

    pub fn r_hat(&self, j: usize, u: i32) -> f64 {
        self.x[self.layout.r_index(j, self.layout.slot(u))]
    }

    pub fn r1(&self, range: R1Range) -> f64 {
        self.layout
            .r1_slots(range)
            .map(|s| self.x[self.layout.r_index(1, s)])
            .sum()
    }

    pub fn total_v(&self) -> f64 {
        (0..self.layout.positions())
            .map(|s| self.x[self.layout.v_index(s)])
            .sum()
    }

    pub fn total_r(&self) -> f64 {
        (0..self.layout.dim())
            .filter(|&k| !self.layout.is_variable(k))
            .map(|k| self.x[k])
            .sum()
    }
}

/// Scaled covariance `delta = M * Cov[x]` over the state coordinates,
/// stored densely and row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceState {
    pub layout: Layout,
    pub tau: f64,
    pub delta: Vec<f64>,
}

impl CovarianceState {
    pub fn zeros(layout: Layout) -> Self {
        let n = layout.dim();
        CovarianceState {
            layout,
            tau: 0.0,
            delta: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.delta[a * self.dim() + b]
    }

    /// `delta^{j,u}_{z,x}` with `j, z in 1..=dc+1`.
    pub fn get(&self, j: usize, u: i32, z: usize, x: i32) -> f64 {
        self.at(self.layout.index(j, u), self.layout.index(z, x))
    }

    /// `delta_1 = sum_{u,x} delta^{1,u}_{1,x}`.
    pub fn delta1(&self, range: R1Range) -> f64 {
        let lay = self.layout;
        let mut acc = 0.0;
        for s in lay.r1_slots(range) {
            let a = lay.r_index(1, s);
            for t in lay.r1_slots(range) {
                acc += self.at(a, lay.r_index(1, t));
            }
        }
        acc
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                worst = worst.max((self.at(a, b) - self.at(b, a)).abs());
            }
        }
        worst
    }
}
