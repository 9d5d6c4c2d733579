//! Closed-form description of a `(dv, dc, L, alpha)` spatially "Mt. Fuji"
//! coupled ensemble.
//!
//! Section `i in [-L, L]` holds `ceil(alpha^(L-|i|) M)` variable nodes of
//! degree `dv`. Positions `[-L-dv+1, -L-1]` and `[L+1, L+dv-1]` hold dummy
//! nodes which only exist during construction. Every variable or dummy at
//! position `i` sends its `j`-th edge to check position `i + j`, and check
//! position `i in [-L, L+dv-1]` receives the resulting edges on
//! `ceil(E_i / dc)` check nodes, one of which carries the remainder degree.
//!
//! All node counts are computed with exact rational arithmetic. The analytic
//! quantities ([`ConnectionLaw`]) use the ceiling-free weights
//! `alpha^(L-|k|)`, which is the large-`M` limit of the same construction.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Growth factor of the section sizes, stored as an exact rational.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alpha(BigRational);

impl Alpha {
    pub fn new(numer: u64, denom: u64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::InvalidParams("alpha denominator is zero".into()));
        }
        Self::from_ratio(BigRational::new(numer.into(), denom.into()))
    }

    pub fn one() -> Self {
        Alpha(BigRational::one())
    }

    fn from_ratio(r: BigRational) -> Result<Self> {
        if r < BigRational::one() {
            return Err(Error::InvalidParams(format!("alpha must be >= 1, got {r}")));
        }
        Ok(Alpha(r))
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::INFINITY)
    }

    /// `alpha^k` for any integer `k`, exactly.
    pub fn pow(&self, k: i32) -> BigRational {
        let base = if k >= 0 {
            self.0.clone()
        } else {
            self.0.recip()
        };
        num_traits::pow(base, k.unsigned_abs() as usize)
    }

    /// `ceil(alpha^k * m)` as an exact integer.
    pub fn ceil_scaled(&self, k: i32, m: u64) -> BigInt {
        let v = self.pow(k) * BigRational::from_integer(m.into());
        v.ceil().to_integer()
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl FromStr for Alpha {
    type Err = Error;

    /// Accepts `p/q`, an integer, or a plain decimal such as `1.05`.
    /// Decimals are converted exactly (`1.1` is `11/10`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParams(format!("cannot parse alpha from {s:?}"));
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() || p.is_negative() || q.is_negative() {
                return Err(bad());
            }
            return Self::from_ratio(BigRational::new(p, q));
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((a, b)) => (a, b),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let numer: BigInt = if digits.is_empty() {
            BigInt::zero()
        } else {
            digits.parse().map_err(|_| bad())?
        };
        let denom = num_traits::pow(BigInt::from(10u32), frac_part.len());
        Self::from_ratio(BigRational::new(numer, denom))
    }
}

impl Serialize for Alpha {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(u64),
            Float(f64),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::Int(i) => i.to_string(),
            // shortest round-trip representation, so 1.1 parses as 11/10
            Raw::Float(x) => format!("{x}"),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Generative parameters of one ensemble.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub dv: u32,
    pub dc: u32,
    #[serde(rename = "L")]
    pub l: u32,
    pub alpha: Alpha,
    #[serde(rename = "M")]
    pub m: u64,
}

impl EnsembleParams {
    pub fn new(dv: u32, dc: u32, l: u32, alpha: Alpha, m: u64) -> Result<Self> {
        let p = EnsembleParams { dv, dc, l, alpha, m };
        p.validate()?;
        Ok(p)
    }

    /// Convenience constructor taking alpha as text (`"1.1"`, `"21/20"`).
    pub fn parse(dv: u32, dc: u32, l: u32, alpha: &str, m: u64) -> Result<Self> {
        Self::new(dv, dc, l, alpha.parse()?, m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dv < 2 {
            return Err(Error::InvalidParams(format!("dv must be >= 2, got {}", self.dv)));
        }
        if self.dc < self.dv {
            return Err(Error::InvalidParams(format!(
                "dc must be >= dv, got dc={} dv={}",
                self.dc, self.dv
            )));
        }
        if self.l < 1 {
            return Err(Error::InvalidParams("L must be >= 1".into()));
        }
        if self.m < 1 {
            return Err(Error::InvalidParams("M must be >= 1".into()));
        }
        if self.alpha.as_ratio() < &BigRational::one() {
            return Err(Error::InvalidParams("alpha must be >= 1".into()));
        }
        if self.l > 100_000 || self.dc > 1024 {
            return Err(Error::Capacity(format!(
                "L={} dc={} exceeds the supported range",
                self.l, self.dc
            )));
        }
        Ok(())
    }

    /// Reads `dv`, `dc`, `L`, `alpha`, `M` from TOML text, or from JSON when
    /// the text starts with `{`. Other keys are ignored.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let p: EnsembleParams = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        p.validate()?;
        Ok(p)
    }

    /// Same ensemble with a different base section size.
    pub fn with_m(&self, m: u64) -> Self {
        EnsembleParams { m, ..self.clone() }
    }

    pub fn l_i32(&self) -> i32 {
        self.l as i32
    }

    /// Check positions `[-L, L+dv-1]`.
    pub fn check_positions(&self) -> std::ops::RangeInclusive<i32> {
        -self.l_i32()..=self.l_i32() + self.dv as i32 - 1
    }

    /// Variable positions `[-L, L]`.
    pub fn variable_positions(&self) -> std::ops::RangeInclusive<i32> {
        -self.l_i32()..=self.l_i32()
    }

    pub fn num_check_positions(&self) -> usize {
        2 * self.l as usize + self.dv as usize
    }

    /// Interior check positions `[-L+dv-1, L]` see no dummy nodes.
    pub fn is_interior(&self, i: i32) -> bool {
        let l = self.l_i32();
        i >= -l + self.dv as i32 - 1 && i <= l
    }
}

impl fmt::Display for EnsembleParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}) M={}",
            self.dv, self.dc, self.l, self.alpha, self.m
        )
    }
}

/// Exact node counts per position.
#[derive(Clone, Debug)]
pub struct PositionProfile {
    l: i32,
    dv: i32,
    dc: u32,
    /// Variable or dummy counts for `i in [-L-dv+1, L+dv-1]`.
    node_counts: Vec<u64>,
    /// Check counts for `i in [-L, L+dv-1]`.
    check_counts: Vec<u64>,
    remainder: Vec<u32>,
    code_length: u64,
    total_checks: u64,
}

/// How `alpha^k M` is rounded up to a node count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    /// Exact rational ceiling.
    #[default]
    Exact,
    /// `ceil(pow(alpha, k) * M)` in `f64`. Rounding error pushes exact
    /// integers such as `1.1 * 500` one node up; this reproduces lengths
    /// computed that way.
    Float,
}

/// Computes exact counts, remainder degrees and the design rate.
pub fn position_profile(params: &EnsembleParams) -> Result<PositionProfile> {
    position_profile_with(params, Rounding::Exact)
}

/// [`position_profile`] with an explicit rounding convention.
pub fn position_profile_with(params: &EnsembleParams, rounding: Rounding) -> Result<PositionProfile> {
    params.validate()?;
    let l = params.l_i32();
    let dv = params.dv as i32;
    let dc = params.dc;

    // log2 of the largest count; reject before building huge big integers
    let bits = params.l as f64 * params.alpha.to_f64().log2() + (params.m as f64).log2();
    if !bits.is_finite() || bits > 56.0 {
        return Err(Error::Capacity(format!(
            "alpha^L * M ~ 2^{bits:.1} does not fit the supported node count range"
        )));
    }

    let mut node_counts = Vec::with_capacity((2 * (l + dv) - 1) as usize);
    for i in (-l - dv + 1)..=(l + dv - 1) {
        let k = l - i.abs();
        let c = match rounding {
            Rounding::Exact => params
                .alpha
                .ceil_scaled(k, params.m)
                .to_u64()
                .ok_or_else(|| Error::Capacity(format!("count at position {i} overflows u64")))?,
            Rounding::Float => (params.alpha.to_f64().powf(k as f64) * params.m as f64).ceil() as u64,
        };
        node_counts.push(c);
    }
    let node = |i: i32| node_counts[(i + l + dv - 1) as usize];

    let mut check_counts = Vec::new();
    let mut remainder = Vec::new();
    for i in -l..=(l + dv - 1) {
        let edges: u64 = (0..dv).map(|j| node(i - j)).sum();
        let checks = edges.div_ceil(dc as u64);
        let r = edges - dc as u64 * (checks - 1);
        check_counts.push(checks);
        remainder.push(r as u32);
    }
    let code_length: u64 = (-l..=l).map(node).sum();
    let total_checks = check_counts.iter().sum();
    Ok(PositionProfile {
        l,
        dv,
        dc,
        node_counts,
        check_counts,
        remainder,
        code_length,
        total_checks,
    })
}

impl PositionProfile {
    fn node(&self, i: i32) -> u64 {
        let idx = i + self.l + self.dv - 1;
        if idx < 0 || idx as usize >= self.node_counts.len() {
            0
        } else {
            self.node_counts[idx as usize]
        }
    }

    fn check_index(&self, i: i32) -> Option<usize> {
        let idx = i + self.l;
        (idx >= 0 && (idx as usize) < self.check_counts.len()).then_some(idx as usize)
    }

    pub fn half_length(&self) -> i32 {
        self.l
    }

    pub fn dv(&self) -> u32 {
        self.dv as u32
    }

    pub fn dc(&self) -> u32 {
        self.dc
    }

    pub fn variable_count(&self, i: i32) -> u64 {
        if i.abs() <= self.l {
            self.node(i)
        } else {
            0
        }
    }

    pub fn dummy_count(&self, i: i32) -> u64 {
        if i.abs() > self.l {
            self.node(i)
        } else {
            0
        }
    }

    /// Variable or dummy count, whichever lives at `i`.
    pub fn node_count(&self, i: i32) -> u64 {
        self.node(i)
    }

    pub fn check_count(&self, i: i32) -> u64 {
        self.check_index(i).map_or(0, |k| self.check_counts[k])
    }

    pub fn remainder_degree(&self, i: i32) -> u32 {
        self.check_index(i).map_or(0, |k| self.remainder[k])
    }

    /// Edges arriving at check position `i` before shortening.
    pub fn incoming_edges(&self, i: i32) -> u64 {
        (0..self.dv).map(|j| self.node(i - j)).sum()
    }

    pub fn code_length(&self) -> u64 {
        self.code_length
    }

    pub fn total_checks(&self) -> u64 {
        self.total_checks
    }

    pub fn design_rate_exact(&self) -> BigRational {
        BigRational::one()
            - BigRational::new(self.total_checks.into(), self.code_length.into())
    }

    /// `1 - (#check nodes) / (#variable nodes)`.
    pub fn design_rate(&self) -> f64 {
        self.design_rate_exact().to_f64().unwrap_or(f64::NAN)
    }

    pub fn check_positions(&self) -> std::ops::RangeInclusive<i32> {
        -self.l..=self.l + self.dv - 1
    }

    /// One line per check position: node counts, dummies, remainder degree
    /// and incoming edges.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("position,variable_count,dummy_count,check_count,remainder_degree,incoming_edges\n");
        for i in -self.l - self.dv + 1..=self.l + self.dv - 1 {
            s.push_str(&format!(
                "{i},{},{},{},{},{}\n",
                self.variable_count(i),
                self.dummy_count(i),
                self.check_count(i),
                self.remainder_degree(i),
                if self.check_index(i).is_some() { self.incoming_edges(i) } else { 0 },
            ));
        }
        s
    }

    /// First variable id at position `i` when variables are numbered by position.
    pub fn first_variable_id(&self, i: i32) -> u64 {
        (-self.l..i).map(|k| self.variable_count(k)).sum()
    }
}

/// Binomial coefficient as a float; exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for t in 0..k {
        acc = acc * (n - t) as f64 / (t + 1) as f64;
    }
    acc.round()
}

/// Connection and degree probabilities in the large-`M` limit.
#[derive(Clone, Debug)]
pub struct ConnectionLaw {
    l: i32,
    dv: i32,
    dc: usize,
    /// `alpha^(L-|k|)` for `k in [-L-dv+1, L+dv-1]`.
    weights: Vec<f64>,
    /// `sum_{j<dv} alpha^(L-|i-j|)` per check position.
    window_sums: Vec<f64>,
    s: Vec<f64>,
    rho: Vec<Vec<f64>>,
    rho_prime: Vec<Vec<f64>>,
}

pub fn connection_law(params: &EnsembleParams) -> Result<ConnectionLaw> {
    params.validate()?;
    let l = params.l_i32();
    let dv = params.dv as i32;
    let dc = params.dc as usize;
    let weights: Vec<f64> = ((-l - dv + 1)..=(l + dv - 1))
        .map(|k| params.alpha.pow(l - k.abs()).to_f64().unwrap_or(f64::INFINITY))
        .collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Capacity("alpha^L overflows f64".into()));
    }
    let mut law = ConnectionLaw {
        l,
        dv,
        dc,
        weights,
        window_sums: Vec::new(),
        s: Vec::new(),
        rho: Vec::new(),
        rho_prime: Vec::new(),
    };
    for i in -l..=(l + dv - 1) {
        let a: f64 = (0..dv).map(|j| law.weight(i - j)).sum();
        let s = law.real_mass(i - dv + 1, i) / a;
        let (rho, rho_prime) = if params.is_interior(i) {
            let mut r = vec![0.0; dc + 1];
            r[dc] = 1.0;
            (r.clone(), r)
        } else {
            let rho = (0..=dc)
                .map(|m| binomial(dc, m) * s.powi(m as i32) * (1.0 - s).powi((dc - m) as i32))
                .collect();
            let mut rho_prime = vec![0.0; dc + 1];
            for (m, rp) in rho_prime.iter_mut().enumerate().skip(1) {
                *rp = binomial(dc - 1, m - 1)
                    * s.powi(m as i32 - 1)
                    * (1.0 - s).powi((dc - m) as i32);
            }
            (rho, rho_prime)
        };
        law.window_sums.push(a);
        law.s.push(s);
        law.rho.push(rho);
        law.rho_prime.push(rho_prime);
    }
    Ok(law)
}

impl ConnectionLaw {
    fn ci(&self, i: i32) -> usize {
        let idx = i + self.l;
        assert!(
            idx >= 0 && (idx as usize) < self.s.len(),
            "check position {i} out of range"
        );
        idx as usize
    }

    pub fn half_length(&self) -> i32 {
        self.l
    }

    pub fn dv(&self) -> usize {
        self.dv as usize
    }

    pub fn dc(&self) -> usize {
        self.dc
    }

    /// `alpha^(L-|k|)`; zero outside the construction range.
    pub fn weight(&self, k: i32) -> f64 {
        let idx = k + self.l + self.dv - 1;
        if idx < 0 || idx as usize >= self.weights.len() {
            0.0
        } else {
            self.weights[idx as usize]
        }
    }

    /// `sum_{k=max(-L,lo)}^{min(L,hi)} alpha^(L-|k|)`; empty ranges give 0.
    pub fn real_mass(&self, lo: i32, hi: i32) -> f64 {
        let lo = lo.max(-self.l);
        let hi = hi.min(self.l);
        if lo > hi {
            return 0.0;
        }
        (lo..=hi).map(|k| self.weight(k)).sum()
    }

    /// `sum_{j<dv} alpha^(L-|i-j|)`, real and dummy sources of check position `i`.
    pub fn window_sum(&self, i: i32) -> f64 {
        self.window_sums[self.ci(i)]
    }

    /// Probability an edge of a check at `i` comes from position `i - j`.
    pub fn source_probability(&self, i: i32, j: i32) -> f64 {
        if j < 0 || j >= self.dv {
            return 0.0;
        }
        self.weight(i - j) / self.window_sum(i)
    }

    /// Probability an edge of a check at `i` comes from a real variable.
    pub fn s(&self, i: i32) -> f64 {
        self.s[self.ci(i)]
    }

    /// Probability a check at `i` keeps at least one edge after shortening.
    pub fn survival(&self, i: i32) -> f64 {
        1.0 - (1.0 - self.s(i)).powi(self.dc as i32)
    }

    /// Node-perspective degree distribution after shortening.
    pub fn rho(&self, m: usize, i: i32) -> f64 {
        self.rho[self.ci(i)].get(m).copied().unwrap_or(0.0)
    }

    pub fn rho_vector(&self, i: i32) -> &[f64] {
        &self.rho[self.ci(i)]
    }

    /// Degree distribution of a check seen from one of its real edges.
    pub fn rho_prime(&self, m: usize, i: i32) -> f64 {
        self.rho_prime[self.ci(i)].get(m).copied().unwrap_or(0.0)
    }

    pub fn rho_prime_vector(&self, i: i32) -> &[f64] {
        &self.rho_prime[self.ci(i)]
    }

    /// Probability a check at `i` has `j` erased neighbours after the channel.
    pub fn p_init(&self, j: usize, i: i32, eps: f64) -> f64 {
        let rho = &self.rho[self.ci(i)];
        (j..=self.dc)
            .map(|m| rho[m] * binomial(m, j) * eps.powi(j as i32) * (1.0 - eps).powi((m - j) as i32))
            .sum()
    }

    /// `p_init(j, i, eps)` for `j = 0..=dc`.
    pub fn p_init_vector(&self, i: i32, eps: f64) -> Vec<f64> {
        (0..=self.dc).map(|j| self.p_init(j, i, eps)).collect()
    }
}

/// Sizing chosen by [`solve_construction`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConstructionFit {
    pub params: EnsembleParams,
    pub code_length: u64,
    pub rate: f64,
}

/// Expected fraction of checks at `i` that keep at least one real edge.
fn expected_nonempty_checks(profile: &PositionProfile, law: &ConnectionLaw) -> f64 {
    profile
        .check_positions()
        .map(|i| profile.check_count(i) as f64 * law.survival(i))
        .sum()
}

/// Rate of a sampled code once checks left without edges are discarded,
/// in expectation over the ensemble.
pub fn effective_rate(params: &EnsembleParams) -> Result<f64> {
    let profile = position_profile(params)?;
    let law = connection_law(params)?;
    Ok(1.0 - expected_nonempty_checks(&profile, &law) / profile.code_length() as f64)
}

/// Picks `(L, M)` for the given degrees and growth factor so that the code
/// length and rate land closest to the targets.
///
/// The rate compared is [`effective_rate`], which is what sampled codes
/// achieve on average. Candidates are ordered by rate error rounded to three
/// decimals, then by length error.
pub fn solve_construction(
    target_length: u64,
    target_rate: f64,
    alpha: &Alpha,
    dv: u32,
    dc: u32,
) -> Result<ConstructionFit> {
    let limit = 1.0 - dv as f64 / dc as f64;
    if !(target_rate < limit) || target_rate <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target rate {target_rate} must lie in (0, {limit})"
        )));
    }
    if target_length == 0 {
        return Err(Error::InvalidArgument("target length must be positive".into()));
    }
    let a = alpha.to_f64();
    let mut best: Option<(f64, u64, ConstructionFit)> = None;
    for l in 1u32.. {
        let mass: f64 = (-(l as i32)..=l as i32)
            .map(|k| a.powi(l as i32 - k.abs()))
            .sum();
        let m_guess = target_length as f64 / mass;
        if m_guess < 1.0 {
            break;
        }
        let lo = (m_guess.floor() as u64).saturating_sub(2).max(1);
        for m in lo..=lo + 5 {
            let params = EnsembleParams::new(dv, dc, l, alpha.clone(), m)?;
            let profile = position_profile(&params)?;
            let rate = effective_rate(&params)?;
            let rate_err = ((rate - target_rate).abs() * 1000.0).round();
            let len_err = profile.code_length().abs_diff(target_length);
            let fit = ConstructionFit {
                params,
                code_length: profile.code_length(),
                rate,
            };
            let better = match &best {
                None => true,
                Some((re, le, _)) => (rate_err, len_err) < (*re, *le),
            };
            if better {
                best = Some((rate_err, len_err, fit));
            }
        }
        // the rate grows with L; once every candidate overshoots, stop
        if best.as_ref().is_some_and(|(_, _, f)| f.params.l < l)
            && effective_rate(&EnsembleParams::new(dv, dc, l, alpha.clone(), lo)?)? > target_rate + 0.01
        {
            break;
        }
    }
    let (rate_err, len_err, fit) = best.ok_or_else(|| Error::Infeasible {
        reason: "target length smaller than one section".into(),
        l: 1,
        m: 1,
        length: 0,
        rate: 0.0,
    })?;
    // more than 1% off in length or 0.005 in rate means the targets were not reachable
    if len_err as f64 > 0.01 * target_length as f64 || rate_err > 5.0 {
        return Err(Error::Infeasible {
            reason: format!("no (L, M) within tolerance of length {target_length}, rate {target_rate}"),
            l: fit.params.l,
            m: fit.params.m,
            length: fit.code_length,
            rate: fit.rate,
        });
    }
    Ok(fit)
}
