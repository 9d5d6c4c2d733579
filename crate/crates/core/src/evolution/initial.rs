//! Initial conditions of the mean and covariance evolution.

use super::{CovarianceState, Layout, MeanState};
use crate::ensemble::{binomial, connection_law, ConnectionLaw, EnsembleParams};
use crate::error::{Error, Result};

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("erasure probability {eps} not in [0, 1]")));
    }
    Ok(())
}

/// `r_{j,u}(0) = j / dc * A_u * p_{j,u}` and `v_u(0) = eps * alpha^(L-|u|)`.
pub fn ege_initial(params: &EnsembleParams, eps: f64) -> Result<MeanState> {
    check_eps(eps)?;
    let law = connection_law(params)?;
    let lay = Layout::new(params);
    let mut st = MeanState::zeros(lay);
    let dc = lay.dc;
    for u in params.check_positions() {
        let s = lay.slot(u);
        let a = law.window_sum(u);
        for j in 1..=dc {
            st.x[lay.r_index(j, s)] = j as f64 / dc as f64 * a * law.p_init(j, u, eps);
        }
        if u.abs() <= lay.l {
            st.x[lay.v_index(s)] = eps * law.weight(u);
        }
    }
    Ok(st)
}

/// Degree laws of a check reached through one of its real edges, given
/// that edge's variable is erased (`erased`) or not (`kept`).
struct EdgeView {
    /// `sum_m rho'_m C(m-1, j-1) eps^(j-1) (1-eps)^(m-j)`
    erased: Vec<f64>,
    /// `sum_m rho'_m C(m-1, j) eps^j (1-eps)^(m-1-j)`
    kept: Vec<f64>,
}

fn edge_view(law: &ConnectionLaw, u: i32, eps: f64) -> EdgeView {
    let dc = law.dc();
    let rp = law.rho_prime_vector(u);
    let mut erased = vec![0.0; dc + 1];
    let mut kept = vec![0.0; dc + 1];
    for j in 1..=dc {
        erased[j] = (j..=dc)
            .map(|m| rp[m] * binomial(m - 1, j - 1) * eps.powi(j as i32 - 1) * (1.0 - eps).powi((m - j) as i32))
            .sum();
        kept[j] = (j + 1..=dc)
            .map(|m| rp[m] * binomial(m - 1, j) * eps.powi(j as i32) * (1.0 - eps).powi((m - 1 - j) as i32))
            .sum();
    }
    EdgeView { erased, kept }
}

impl EdgeView {
    /// Erased-degree law of a check reached through a real edge.
    fn marginal(&self, j: usize, eps: f64) -> f64 {
        eps * self.erased[j] + (1.0 - eps) * self.kept[j]
    }
}

/// `Cov(j 1[j erased edges], m)` for one check at `u` with real degree
/// `m ~ rho`; zero for unshortened checks.
fn degree_socket_cov(law: &ConnectionLaw, u: i32, eps: f64) -> Vec<f64> {
    let dc = law.dc();
    let rho = law.rho_vector(u);
    let mean_m = dc as f64 * law.s(u);
    let mut out = vec![0.0; dc + 1];
    for (j, o) in out.iter_mut().enumerate().skip(1) {
        let (mut em, mut e) = (0.0, 0.0);
        for (m, &r) in rho.iter().enumerate().skip(j) {
            let pj = r * binomial(m, j) * eps.powi(j as i32) * (1.0 - eps).powi((m - j) as i32);
            em += m as f64 * pj;
            e += pj;
        }
        *o = j as f64 * (em - e * mean_m);
    }
    out
}

/// Scaled covariance of the residual graph right after the channel.
///
/// Checks at one position have degree law `p_{j,u}`; they are independent
/// apart from sharing a fixed number of real sockets, which removes the
/// component along the real degree from the multinomial diagonal blocks. Checks at positions `u < x` with
/// `x - u < dv` are correlated through a shared variable, which happens with
/// probability proportional to the real mass of positions
/// `[x-dv+1, u] ∩ [-L, L]`; both checks are then seen from an edge, so
/// their degrees follow `rho'` rather than `rho`. A variable at `u` is correlated with the degree
/// of the check at `x in [u, u+dv-1]` that it touches.
pub fn ce_initial(params: &EnsembleParams, eps: f64) -> Result<CovarianceState> {
    check_eps(eps)?;
    let law = connection_law(params)?;
    let lay = Layout::new(params);
    let dc = lay.dc;
    let dv = lay.dv as i32;
    let l = lay.l;
    let mut cov = CovarianceState::zeros(lay);
    let n = lay.dim();
    let positions: Vec<i32> = params.check_positions().collect();
    let p: Vec<Vec<f64>> = positions.iter().map(|&u| law.p_init_vector(u, eps)).collect();
    let views: Vec<EdgeView> = positions.iter().map(|&u| edge_view(&law, u, eps)).collect();
    let socket_cov: Vec<Vec<f64>> = positions.iter().map(|&u| degree_socket_cov(&law, u, eps)).collect();
    let mut set = |a: usize, b: usize, val: f64| {
        cov.delta[a * n + b] = val;
        cov.delta[b * n + a] = val;
    };

    for &u in &positions {
        let su = lay.slot(u);
        // variables at u
        if u.abs() <= l {
            let w = law.weight(u);
            set(lay.v_index(su), lay.v_index(su), w * eps * (1.0 - eps));
            for x in u..u + dv {
                let sx = lay.slot(x);
                let vx = &views[sx];
                for z in 1..=dc {
                    let val = z as f64 * w * eps * (1.0 - eps) * (vx.erased[z] - vx.kept[z]);
                    set(lay.v_index(su), lay.r_index(z, sx), val);
                }
            }
        }
        // checks at the same position: independent degrees, conditioned on
        // the fixed number of real sockets at u
        let a = law.window_sum(u) / dc as f64;
        let pu = &p[su];
        let sock = &socket_cov[su];
        let var_m = dc as f64 * law.s(u) * (1.0 - law.s(u));
        for j in 1..=dc {
            for z in j..=dc {
                let jz = (j * z) as f64;
                let mut val = if j == z {
                    jz * a * pu[j] * (1.0 - pu[j])
                } else {
                    -jz * a * pu[j] * pu[z]
                };
                if var_m > 0.0 {
                    val -= a * sock[j] * sock[z] / var_m;
                }
                set(lay.r_index(j, su), lay.r_index(z, su), val);
            }
        }
        // checks at x in (u, u+dv) sharing a variable
        for x in u + 1..u + dv {
            if x > l + dv - 1 {
                break;
            }
            let sx = lay.slot(x);
            let shared = law.real_mass(x - dv + 1, u);
            let (vu, vx) = (&views[su], &views[sx]);
            for j in 1..=dc {
                for z in 1..=dc {
                    let share = eps * vu.erased[j] * vx.erased[z] + (1.0 - eps) * vu.kept[j] * vx.kept[z];
                    let apart = vu.marginal(j, eps) * vx.marginal(z, eps);
                    set(
                        lay.r_index(j, su),
                        lay.r_index(z, sx),
                        (j * z) as f64 * shared * (share - apart),
                    );
                }
            }
        }
    }
    Ok(cov)
}
