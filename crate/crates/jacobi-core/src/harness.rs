//! End-to-end experiment engine: instantiate a scaling regime, build
//! admissible starting vectors whose rescaled empirical law matches a target
//! measure, run the frozen or stochastic dynamics, and score empirical
//! moments against the predicted limit law.
//!
//! Predictions are evaluated with the per-N plug-in constants of the regime
//! (`C_N = p_N/q_N`, `p_hat_N = p_N/N`, ...); gaps are normalized order by
//! order with the limit law's support-scale proxy, so "percent" gaps are
//! comparable across moment orders.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detflow::{
    integrate_interior, integrate_noncompact, solve_from_boundary, BoundaryOpts, IntegrateOpts,
};
use crate::error::{Error, Result};
use crate::freeprob::{
    mp_moments, predict_limit, scale_measure, semicircle_moments, MeasureExpr, MomentVector,
};
use crate::jacobi_poly::{jacobi_zeros, JacobiParams};
use crate::model::{
    regime_at, scalings_for, Domain, DriftSign, ParticleState, RegimeKind, Scalings,
};
use crate::moments::{empirical_moments, growth_bound_check};
use crate::sde::{simulate_moments, Scheme, SdeConfig};

fn default_gamma() -> f64 {
    10.0
}

fn default_schema() -> u32 {
    1
}

fn default_declared_tol() -> f64 {
    0.5
}

/// Per-N rule for a scalar quantity.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Constant(f64),
    /// `coef * N^exp`
    Power {
        coef: f64,
        exp: f64,
    },
    Table(Vec<(usize, f64)>),
}

impl Rule {
    pub fn eval(&self, n: usize) -> Result<f64> {
        match self {
            Rule::Constant(v) => Ok(*v),
            Rule::Power { coef, exp } => Ok(coef * (n as f64).powf(*exp)),
            Rule::Table(rows) => rows
                .iter()
                .find(|(m, _)| *m == n)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Hypothesis(format!("rule table has no entry for N = {n}"))),
        }
    }
}

/// Per-N rule for the parameter pair `(p_N, q_N)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ParamRule {
    Power {
        p_coef: f64,
        p_exp: f64,
        q_coef: f64,
        q_exp: f64,
    },
    Table(Vec<(usize, f64, f64)>),
}

impl ParamRule {
    pub fn eval(&self, n: usize) -> Result<(f64, f64)> {
        match self {
            ParamRule::Power {
                p_coef,
                p_exp,
                q_coef,
                q_exp,
            } => {
                let nf = n as f64;
                Ok((p_coef * nf.powf(*p_exp), q_coef * nf.powf(*q_exp)))
            }
            ParamRule::Table(rows) => rows
                .iter()
                .find(|(m, _, _)| *m == n)
                .map(|(_, p, q)| (*p, *q))
                .ok_or_else(|| {
                    Error::Hypothesis(format!("parameter table has no entry for N = {n}"))
                }),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Frozen,
    Stochastic {
        kappa: f64,
        replicas: u32,
        /// Steps to the last requested raw time (fixed grid).
        steps: u64,
        scheme: Scheme,
    },
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Deterministic multiplicity placement on the moment-matched atoms.
    #[default]
    Quantile,
    /// I.i.d. draws from the moment-matched discrete law.
    Iid,
}

/// Optional declared limit constants, validated against the per-N data.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DeclaredConstants {
    pub c: Option<f64>,
    pub c_is_infinite: bool,
    pub p_hat: Option<f64>,
    pub q_hat: Option<f64>,
    pub b: Option<f64>,
    pub drift_c: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub regime: RegimeKind,
    pub dynamics: Dynamics,
    pub n_list: Vec<usize>,
    pub param_rule: ParamRule,
    #[serde(default)]
    pub b_rule: Option<Rule>,
    #[serde(default)]
    pub s_rule: Option<Rule>,
    pub mu0: MeasureExpr,
    /// Rescaled times of the regime clock.
    pub t_list: Vec<f64>,
    pub moment_order: usize,
    #[serde(default)]
    pub seed: u64,
    /// Growth-bound constant for the starting measure hypothesis.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub start: StartMode,
    #[serde(default)]
    pub declared: DeclaredConstants,
    /// Tolerance for declared-constant validation.
    #[serde(default = "default_declared_tol")]
    pub declared_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub t: f64,
    pub l: usize,
    pub empirical: f64,
    pub predicted: f64,
    pub gap: f64,
    /// `gap / max(1, scale)^l` with the predicted law's support-scale proxy.
    pub gap_norm: f64,
    pub mc_se: Option<f64>,
    /// Normalized gap of the first replica alone (largest N only).
    pub per_path_gap_norm: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    pub l: usize,
    /// Fitted slope of `log gap` against `log N` (negative = shrinking).
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub regime: RegimeKind,
    pub swapped: bool,
    pub rows: Vec<ReportRow>,
    pub decay: Vec<DecayRow>,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    pub fn row(&self, n: usize, t: f64, l: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.l == l && (r.t - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }

    /// Whether the normalized gap at (t, l) shrinks from the smallest to the
    /// largest N (with an absolute floor below which gaps count as noise).
    pub fn gap_shrinks(&self, t: f64, l: usize, floor: f64) -> bool {
        let mut gaps: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| r.l == l && (r.t - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .map(|r| (r.n, r.gap_norm))
            .collect();
        gaps.sort_by_key(|(n, _)| *n);
        if gaps.len() < 2 {
            return true;
        }
        let first = gaps[0].1;
        let last = gaps[gaps.len() - 1].1;
        last <= floor.max(first)
    }
}

/// Moment-matched discrete law: nodes and weights of the Gauss-type rule
/// built from `mu`'s moments (Chebyshev-algorithm recurrence coefficients,
/// then the eigen decomposition of the resulting tridiagonal matrix).
pub fn moment_matched_atoms(mu: &MomentVector, max_atoms: usize) -> Result<Vec<(f64, f64)>> {
    let m = mu.values();
    let order = mu.order();
    let mean = if order >= 1 { m[1] } else { 0.0 };
    let var = if order >= 2 { m[2] - mean * mean } else { 0.0 };
    if order < 2 || var <= 1e-13 * (1.0 + mean * mean) {
        return Ok(vec![(mean, 1.0)]);
    }
    let k0 = max_atoms.min(order / 2).max(1);
    let (alpha, beta, k) = chebyshev_coeffs(m, k0);
    if k == 1 {
        return Ok(vec![(mean, 1.0)]);
    }
    let mut t = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        t[(j, j)] = alpha[j];
        if j + 1 < k {
            let off = beta[j + 1].max(0.0).sqrt();
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(t);
    let mut atoms: Vec<(f64, f64)> = (0..k)
        .map(|j| {
            let node = eig.eigenvalues[j];
            let v0 = eig.eigenvectors[(0, j)];
            (node, v0 * v0)
        })
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = atoms.iter().map(|(_, w)| w).sum();
    for a in atoms.iter_mut() {
        a.1 /= total;
    }
    Ok(atoms)
}

/// Recurrence coefficients from moments (Chebyshev algorithm); returns how
/// many stages are usable before the Hankel data degenerates.
fn chebyshev_coeffs(m: &[f64], k_request: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let order = m.len() - 1;
    let k = if 2 * k_request - 1 > order {
        order.div_ceil(2)
    } else {
        k_request
    }
    .max(1);
    let cols = 2 * k;
    let mut sigma_prev = vec![0.0f64; cols]; // sigma_{j-2, l}
    let mut sigma: Vec<f64> = m[..cols.min(m.len())].to_vec(); // sigma_{j-1, l}
    sigma.resize(cols, 0.0);
    let mut alpha = vec![0.0f64; k];
    let mut beta = vec![0.0f64; k];
    alpha[0] = m[1];
    beta[0] = 1.0;
    for j in 1..k {
        let mut next = vec![0.0f64; cols];
        for l in j..=(2 * k - 1 - j) {
            next[l] = sigma[l + 1]
                - alpha[j - 1] * sigma[l]
                - if j >= 2 {
                    beta[j - 1] * sigma_prev[l]
                } else {
                    0.0
                };
        }
        let denom = next[j];
        let prev_denom = if j >= 2 { sigma[j - 1] } else { 1.0 };
        if !(denom > 1e-12 * (1.0 + m[2].abs()).powi(j as i32)) || prev_denom == 0.0 {
            return (alpha, beta, j);
        }
        alpha[j] = next[j + 1] / denom - sigma[j] / prev_denom;
        beta[j] = denom / prev_denom;
        sigma_prev = sigma;
        sigma = next;
    }
    (alpha, beta, k)
}

/// Report of a start construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartReport {
    pub atoms: usize,
    pub clipped: usize,
}

/// Deterministic quantile-style starting vector: place multiplicities of the
/// moment-matched atoms at `x = b + y/a`, clipped into the closed domain.
pub fn make_start(
    n: usize,
    domain: Domain,
    scal: &Scalings,
    mu0: &MomentVector,
    mode: StartMode,
    seed: u64,
) -> Result<(ParticleState, StartReport)> {
    let atoms = moment_matched_atoms(mu0, 5)?;
    let ys: Vec<f64> = match mode {
        StartMode::Quantile => {
            // largest-remainder apportionment of N over the atom weights
            let mut counts: Vec<usize> =
                atoms.iter().map(|(_, w)| (w * n as f64) as usize).collect();
            let mut assigned: usize = counts.iter().sum();
            let mut remainders: Vec<(usize, f64)> = atoms
                .iter()
                .enumerate()
                .map(|(j, (_, w))| (j, w * n as f64 - counts[j] as f64))
                .collect();
            remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut ri = 0;
            while assigned < n {
                counts[remainders[ri % remainders.len()].0] += 1;
                assigned += 1;
                ri += 1;
            }
            let mut ys = Vec::with_capacity(n);
            for (j, (u, _)) in atoms.iter().enumerate() {
                for _ in 0..counts[j] {
                    ys.push(*u);
                }
            }
            ys
        }
        StartMode::Iid => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(n as u64);
            let cdf: Vec<f64> = atoms
                .iter()
                .scan(0.0, |acc, (_, w)| {
                    *acc += w;
                    Some(*acc)
                })
                .collect();
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    let j = cdf.iter().position(|&c| u <= c).unwrap_or(atoms.len() - 1);
                    atoms[j].0
                })
                .collect()
        }
    };

    let (lo, hi) = domain.bounds();
    let mut clipped = 0usize;
    let mut coords: Vec<f64> = ys
        .iter()
        .map(|y| {
            let x = scal.b + y / scal.a;
            let mut v = x;
            if v < lo {
                v = lo;
                clipped += 1;
            }
            if let Some(h) = hi {
                if v > h {
                    v = h;
                    clipped += 1;
                }
            }
            v
        })
        .collect();
    if clipped * 5 > n {
        return Err(Error::InfeasibleStart(format!(
            "{clipped} of {n} particles fell outside the domain window (|y|/a too large)"
        )));
    }
    coords.sort_by(f64::total_cmp);
    let state = ParticleState::new(domain, coords)?;
    Ok((
        state,
        StartReport {
            atoms: atoms.len(),
            clipped,
        },
    ))
}

#[derive(Debug, Clone)]
struct ResolvedStep {
    n: usize,
    p: f64,
    q: f64,
    scal: Scalings,
    b_n: Option<f64>,
    s_n: Option<f64>,
}

/// Validated per-N schedule plus the swap decision.
#[derive(Debug)]
pub struct ResolvedExperiment {
    steps: Vec<ResolvedStep>,
    swapped: bool,
    mu0: MomentVector,
    warnings: Vec<String>,
}

impl ResolvedExperiment {
    pub fn swapped(&self) -> bool {
        self.swapped
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `(N, p_N, q_N, scalings)` rows after validation and swapping.
    pub fn schedule(&self) -> Vec<(usize, f64, f64, Scalings)> {
        self.steps.iter().map(|s| (s.n, s.p, s.q, s.scal)).collect()
    }
}

fn trend_nonincreasing(values: &[f64]) -> bool {
    values
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()))
}

fn trend_nondecreasing(values: &[f64]) -> bool {
    values
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()))
}

fn check(cond: bool, message: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Hypothesis(message.into()))
    }
}

/// Validates the experiment hypotheses across `n_list` and resolves the
/// per-N parameters and scalings. No dynamics run here; this is also the
/// dry-run entry point.
pub fn resolve_experiment(e: &Experiment) -> Result<ResolvedExperiment> {
    if e.schema != 1 {
        return Err(Error::Domain(format!(
            "unsupported schema version {}",
            e.schema
        )));
    }
    if !e.regime.implemented() {
        return Err(Error::NotImplemented(format!(
            "regime {:?} is recognized but out of scope (Kesten-McKay / Wachter family)",
            e.regime
        )));
    }
    if e.n_list.is_empty() || e.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Hypothesis(
            "n_list must be strictly increasing".into(),
        ));
    }
    if e.t_list.is_empty() || e.t_list.windows(2).any(|w| w[1] <= w[0]) || e.t_list[0] <= 0.0 {
        return Err(Error::Hypothesis(
            "t_list must be strictly increasing and positive".into(),
        ));
    }
    if e.moment_order < 2 {
        return Err(Error::Hypothesis("moment_order must be >= 2".into()));
    }
    let mut warnings = Vec::new();

    // 2 * order so MP-type predictions can square down without losing orders
    let mu0 = e.mu0.eval(2 * e.moment_order)?;
    if !growth_bound_check(&mu0, e.gamma)? {
        return Err(Error::Hypothesis(format!(
            "starting measure violates the growth bound |m_l| <= ({} l)^l",
            e.gamma
        )));
    }

    let mut raw: Vec<(usize, f64, f64)> = Vec::new();
    for &n in &e.n_list {
        let (p, q) = e.param_rule.eval(n)?;
        check(
            p > n as f64 - 1.0 && q > n as f64 - 1.0,
            &format!("p, q must exceed N - 1 at N = {n} (got p = {p}, q = {q})"),
        )?;
        raw.push((n, p, q));
    }

    // p <-> q swap: a diverging C ratio is equivalent to the reflected
    // system with C' = 1/C -> 0 (all particles negated and renumbered).
    let c_ratio: Vec<f64> = raw.iter().map(|&(_, p, q)| p / q).collect();
    let swap = match e.regime {
        RegimeKind::WignerStationary | RegimeKind::WignerDegenerate => {
            e.declared.c_is_infinite
                || (trend_nondecreasing(&c_ratio) && *c_ratio.last().unwrap() > 1.0)
        }
        _ => {
            if e.declared.c_is_infinite {
                return Err(Error::Hypothesis(
                    "c_is_infinite only applies to the Wigner-ratio regimes".into(),
                ));
            }
            false
        }
    };
    if swap {
        warnings.push("parameters swapped (p <-> q) and the window reflected: C diverges".into());
        for row in raw.iter_mut() {
            std::mem::swap(&mut row.1, &mut row.2);
        }
    }

    // Per-regime hypothesis trends on the (possibly swapped) parameters.
    let p_over_n: Vec<f64> = raw.iter().map(|&(n, p, _)| p / n as f64).collect();
    let q_over_n: Vec<f64> = raw.iter().map(|&(n, _, q)| q / n as f64).collect();
    let c_ratio: Vec<f64> = raw.iter().map(|&(_, p, q)| p / q).collect();
    let mut steps = Vec::new();
    for &(n, p, q) in raw.iter() {
        let b_n = match &e.b_rule {
            Some(rule) => Some(rule.eval(n)?),
            None => None,
        };
        let s_n = match &e.s_rule {
            Some(rule) => Some(rule.eval(n)?),
            None => None,
        };
        if e.regime.needs_b_rule() && b_n.is_none() {
            return Err(Error::Hypothesis(format!(
                "regime {:?} requires b_rule",
                e.regime
            )));
        }
        if e.regime.needs_s_rule() && s_n.is_none() {
            return Err(Error::Hypothesis(format!(
                "regime {:?} requires s_rule",
                e.regime
            )));
        }
        let scal = scalings_for(e.regime, n, p, q, b_n, s_n)?;
        steps.push(ResolvedStep {
            n,
            p,
            q,
            scal,
            b_n,
            s_n,
        });
    }

    match e.regime {
        RegimeKind::WignerStationary => {
            check(
                trend_nondecreasing(&p_over_n) && trend_nondecreasing(&q_over_n),
                "WignerStationary needs p_N/N and q_N/N growing",
            )?;
            check(
                trend_nonincreasing(&c_ratio) || trend_nondecreasing(&c_ratio),
                "WignerStationary needs a convergent ratio p_N/q_N",
            )?;
            if let Some(c_decl) = e.declared.c {
                let c_eff = if swap {
                    1.0 / c_decl.max(1e-300)
                } else {
                    c_decl
                };
                let c_last = *c_ratio.last().unwrap();
                check(
                    (c_last - c_eff).abs() <= e.declared_tol,
                    &format!("declared C = {c_decl} does not match the data (got {c_last:.4})"),
                )?;
            }
        }
        RegimeKind::WignerDegenerate => {
            check(
                trend_nondecreasing(&p_over_n) && trend_nondecreasing(&q_over_n),
                "WignerDegenerate needs p_N/N and q_N/N growing",
            )?;
            check(
                trend_nonincreasing(&c_ratio),
                "WignerDegenerate needs p_N/q_N decreasing toward 0",
            )?;
        }
        RegimeKind::WignerLocal | RegimeKind::NcWignerLocal => {
            let ratio: Vec<f64> = steps
                .iter()
                .map(|s| (s.p + s.q) / (s.n as f64 * s.scal.s).sqrt())
                .collect();
            check(
                trend_nonincreasing(&ratio),
                "local Wigner scaling needs (p_N + q_N)/sqrt(N s_N) decreasing toward 0",
            )?;
            let b_vals: Vec<f64> = steps.iter().map(|s| s.scal.b).collect();
            if e.regime == RegimeKind::NcWignerLocal {
                check(
                    b_vals.iter().all(|&b| b > 1.0),
                    "NcWignerLocal needs window centers b_N > 1",
                )?;
            } else {
                check(
                    b_vals.iter().all(|&b| b.abs() < 1.0),
                    "WignerLocal needs window centers inside (-1, 1)",
                )?;
            }
            if let Some(b_decl) = e.declared.b {
                check(
                    (b_vals.last().unwrap() - b_decl).abs() <= e.declared_tol,
                    "declared B does not match b_N",
                )?;
            }
        }
        RegimeKind::WignerLocalDrift => {
            let growth: Vec<f64> = steps.iter().map(|s| (s.p + s.q) / s.n as f64).collect();
            check(
                trend_nondecreasing(&growth),
                "WignerLocalDrift needs (p_N + q_N)/N growing",
            )?;
            if let Some(c_decl) = e.declared.drift_c {
                let c_vals: Vec<f64> = steps
                    .iter()
                    .map(|s| s.scal.a * (s.p - s.q - s.scal.b * (s.p + s.q)) / s.scal.s)
                    .collect();
                check(
                    (c_vals.last().unwrap() - c_decl).abs() <= e.declared_tol,
                    "declared drift constant does not match the data",
                )?;
            }
        }
        RegimeKind::MpStationary | RegimeKind::MpLocal => {
            let last = *p_over_n.last().unwrap();
            check(
                (1..p_over_n.len()).all(|i| {
                    (p_over_n[i] - last).abs()
                        <= (p_over_n[i - 1] - last).abs() + 1e-9 * (1.0 + p_over_n[i - 1].abs())
                }),
                "MP regimes need p_N/N convergent",
            )?;
            check(
                p_over_n.iter().all(|&v| v >= 1.0 - 1e-9),
                "MP regimes need p_hat >= 1",
            )?;
            if e.regime == RegimeKind::MpStationary {
                check(
                    trend_nondecreasing(&q_over_n),
                    "MpStationary needs q_N/N growing",
                )?;
            } else {
                let ratio: Vec<f64> = steps.iter().map(|s| (s.p + s.q) / s.scal.s).collect();
                check(
                    trend_nonincreasing(&ratio),
                    "MpLocal needs (p_N + q_N)/s_N decreasing toward 0",
                )?;
            }
            if let Some(p_decl) = e.declared.p_hat {
                check(
                    (p_over_n.last().unwrap() - p_decl).abs() <= e.declared_tol,
                    "declared p_hat does not match p_N/N",
                )?;
            }
        }
        RegimeKind::NcMpTimeInverted | RegimeKind::NcMpLocal => {
            let last = *q_over_n.last().unwrap();
            check(
                (1..q_over_n.len()).all(|i| {
                    (q_over_n[i] - last).abs()
                        <= (q_over_n[i - 1] - last).abs() + 1e-9 * (1.0 + q_over_n[i - 1].abs())
                }),
                "noncompact MP regimes need q_N/N convergent",
            )?;
            check(
                q_over_n.iter().all(|&v| v >= 1.0 - 1e-9),
                "noncompact MP regimes need q_hat >= 1",
            )?;
            if e.regime == RegimeKind::NcMpTimeInverted {
                check(
                    trend_nondecreasing(&p_over_n),
                    "NcMpTimeInverted needs p_N/N growing",
                )?;
            } else {
                let ratio: Vec<f64> = steps.iter().map(|s| (s.p + s.q) / s.scal.s).collect();
                check(
                    trend_nonincreasing(&ratio),
                    "NcMpLocal needs (p_N + q_N)/s_N decreasing toward 0",
                )?;
            }
            if let Some(q_decl) = e.declared.q_hat {
                check(
                    (q_over_n.last().unwrap() - q_decl).abs() <= e.declared_tol,
                    "declared q_hat does not match q_N/N",
                )?;
            }
        }
        RegimeKind::KestenMcKay | RegimeKind::Wachter => unreachable!(),
    }

    let mu0_eff = if swap {
        scale_measure(-1.0, &mu0)?
    } else {
        mu0
    };
    Ok(ResolvedExperiment {
        steps,
        swapped: swap,
        mu0: mu0_eff,
        warnings,
    })
}

/// Runs the experiment end to end and scores every `(N, t, l)` cell.
pub fn run_experiment(e: &Experiment) -> Result<ConvergenceReport> {
    let resolved = resolve_experiment(e)?;
    let order = e.moment_order;
    let sign = match e.regime.domain() {
        Domain::CompactAlcove => DriftSign::Compact,
        Domain::NoncompactChamber => DriftSign::Noncompact,
    };
    let mut warnings = resolved.warnings.clone();
    let n_max = *e.n_list.last().unwrap();

    let per_n: Vec<Result<(Vec<ReportRow>, Vec<String>)>> = resolved
        .steps
        .par_iter()
        .map(|step| run_one_n(e, &resolved, step, sign, order, n_max))
        .collect();

    let mut rows = Vec::new();
    for outcome in per_n {
        let (mut r, mut w) = outcome?;
        rows.append(&mut r);
        warnings.append(&mut w);
    }

    // fitted decay order of the normalized gap in N per (t, l)
    let mut decay = Vec::new();
    for &t in &e.t_list {
        for l in 0..=order {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.l == l && (r.t - t).abs() <= 1e-12 * (1.0 + t) && r.gap_norm > 1e-13)
                .map(|r| ((r.n as f64).ln(), r.gap_norm.ln()))
                .collect();
            let order_fit = if pts.len() >= 2 {
                let n = pts.len() as f64;
                let sx: f64 = pts.iter().map(|p| p.0).sum();
                let sy: f64 = pts.iter().map(|p| p.1).sum();
                let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
                let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
                let denom = n * sxx - sx * sx;
                if denom.abs() > 1e-12 {
                    Some((n * sxy - sx * sy) / denom)
                } else {
                    None
                }
            } else {
                None
            };
            decay.push(DecayRow {
                t,
                l,
                order: order_fit,
            });
        }
    }

    Ok(ConvergenceReport {
        regime: e.regime,
        swapped: resolved.swapped,
        rows,
        decay,
        warnings,
    })
}

fn run_one_n(
    e: &Experiment,
    resolved: &ResolvedExperiment,
    step: &ResolvedStep,
    sign: DriftSign,
    order: usize,
    n_max: usize,
) -> Result<(Vec<ReportRow>, Vec<String>)> {
    let mut warnings = Vec::new();
    let domain = sign.domain();
    let (x0, start_report) = make_start(
        step.n,
        domain,
        &step.scal,
        &resolved.mu0.truncated(order),
        e.start,
        e.seed,
    )?;
    if start_report.clipped > 0 {
        warnings.push(format!(
            "N = {}: {} particles clipped at the domain wall",
            step.n, start_report.clipped
        ));
    }

    let raw_times: Vec<f64> = e.t_list.iter().map(|&t| t / step.scal.s).collect();
    let regime = regime_at(e.regime, step.n, step.p, step.q, step.b_n, step.s_n)?;

    let mut empirical: Vec<MomentVector> = Vec::with_capacity(e.t_list.len());
    let mut mc_se: Vec<Option<Vec<f64>>> = vec![None; e.t_list.len()];
    let mut per_path: Vec<Option<MomentVector>> = vec![None; e.t_list.len()];

    match e.dynamics {
        Dynamics::Frozen => {
            let traj = if x0.is_interior(1e-12) {
                let opts = IntegrateOpts::default();
                match sign {
                    DriftSign::Compact => {
                        integrate_interior(&x0, step.p, step.q, &raw_times, &opts)?
                    }
                    DriftSign::Noncompact => {
                        integrate_noncompact(&x0, step.p, step.q, &raw_times, &opts)?
                    }
                }
            } else {
                solve_from_boundary(
                    sign,
                    &x0,
                    step.p,
                    step.q,
                    &raw_times,
                    &BoundaryOpts::default(),
                )?
            };
            for &rt in &raw_times {
                let idx = traj
                    .times
                    .iter()
                    .position(|&t| (t - rt).abs() <= 1e-12 * (1.0 + rt))
                    .ok_or_else(|| {
                        Error::Domain("requested time missing from trajectory".into())
                    })?;
                empirical.push(empirical_moments(
                    &traj.state(idx),
                    step.scal.a,
                    step.scal.b,
                    order,
                )?);
            }
        }
        Dynamics::Stochastic {
            kappa,
            replicas,
            steps,
            scheme,
        } => {
            let t_end_raw = *raw_times.last().unwrap();
            let dt = t_end_raw / steps as f64;
            let mut cfg = SdeConfig::new(kappa, dt, e.seed, replicas)?;
            cfg.scheme = scheme;
            let per_replica = simulate_moments(
                sign,
                &x0,
                step.p,
                step.q,
                &cfg,
                &raw_times,
                step.scal.a,
                step.scal.b,
                order,
            )?;
            let r = per_replica.len() as f64;
            for ti in 0..raw_times.len() {
                let mut mean = vec![0.0f64; order + 1];
                for rep in &per_replica {
                    for l in 0..=order {
                        mean[l] += rep[ti].get(l);
                    }
                }
                for v in mean.iter_mut() {
                    *v /= r;
                }
                let mut se = vec![0.0f64; order + 1];
                if per_replica.len() > 1 {
                    for rep in &per_replica {
                        for l in 0..=order {
                            let d = rep[ti].get(l) - mean[l];
                            se[l] += d * d;
                        }
                    }
                    for v in se.iter_mut() {
                        *v = (*v / (r - 1.0) / r).sqrt();
                    }
                }
                mc_se[ti] = Some(se);
                if step.n == n_max {
                    per_path[ti] = Some(per_replica[0][ti].clone());
                }
                empirical.push(MomentVector::new(mean)?);
            }
        }
    }

    let mut rows = Vec::new();
    for (ti, &t) in e.t_list.iter().enumerate() {
        let predicted = predict_limit(&regime, t, &resolved.mu0, order)?;
        let scale = predicted.scale_proxy().max(1.0);
        for l in 0..=order {
            let gap = (empirical[ti].get(l) - predicted.get(l)).abs();
            let norm = scale.powi(l as i32);
            rows.push(ReportRow {
                n: step.n,
                t,
                l,
                empirical: empirical[ti].get(l),
                predicted: predicted.get(l),
                gap,
                gap_norm: gap / norm,
                mc_se: mc_se[ti].as_ref().map(|se| se[l]),
                per_path_gap_norm: per_path[ti]
                    .as_ref()
                    .map(|m| (m.get(l) - predicted.get(l)).abs() / norm),
            });
        }
    }
    Ok((rows, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZerosKind {
    /// Rescaled Jacobi zeros against the semicircle target.
    Wigner,
    /// Rescaled Jacobi zeros against the Marchenko-Pastur target.
    Mp,
}

/// Rescaled empirical moments of the ordered Jacobi-polynomial zeros against
/// the corresponding stationary limit law, per N.
pub fn zeros_limit_experiment(
    kind: ZerosKind,
    n_list: &[usize],
    param_rule: &ParamRule,
    order: usize,
    declared: &DeclaredConstants,
) -> Result<ConvergenceReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Hypothesis(
            "n_list must be strictly increasing".into(),
        ));
    }
    let mut raw: Vec<(usize, f64, f64)> = Vec::new();
    for &n in n_list {
        let (p, q) = param_rule.eval(n)?;
        check(
            p > n as f64 - 1.0 && q > n as f64 - 1.0,
            &format!("p, q must exceed N - 1 at N = {n}"),
        )?;
        raw.push((n, p, q));
    }
    let c_ratio: Vec<f64> = raw.iter().map(|&(_, p, q)| p / q).collect();
    let swap = kind == ZerosKind::Wigner
        && (declared.c_is_infinite
            || (trend_nondecreasing(&c_ratio) && *c_ratio.last().unwrap() > 1.0));
    if swap {
        for row in raw.iter_mut() {
            std::mem::swap(&mut row.1, &mut row.2);
        }
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    if swap {
        warnings.push("parameters swapped (p <-> q): C diverges".into());
    }
    for &(n, p, q) in &raw {
        let zeros = jacobi_zeros(&JacobiParams::new(n, q - n as f64, p - n as f64)?)?;
        let state = ParticleState::new(Domain::CompactAlcove, zeros)?;
        let (scal, predicted) = match kind {
            ZerosKind::Wigner => {
                let scal = scalings_for(RegimeKind::WignerStationary, n, p, q, None, None)?;
                let c_n = p / q;
                (
                    scal,
                    semicircle_moments(4.0 * (1.0 + c_n).powf(-1.5), order)?,
                )
            }
            ZerosKind::Mp => {
                let scal = scalings_for(RegimeKind::MpStationary, n, p, q, None, None)?;
                let p_hat = p / n as f64;
                (scal, mp_moments(p_hat, 2.0, order)?)
            }
        };
        let emp = empirical_moments(&state, scal.a, scal.b, order)?;
        let scale = predicted.scale_proxy().max(1.0);
        for l in 0..=order {
            let gap = (emp.get(l) - predicted.get(l)).abs();
            rows.push(ReportRow {
                n,
                t: 0.0,
                l,
                empirical: emp.get(l),
                predicted: predicted.get(l),
                gap,
                gap_norm: gap / scale.powi(l as i32),
                mc_se: None,
                per_path_gap_norm: None,
            });
        }
    }
    Ok(ConvergenceReport {
        regime: match kind {
            ZerosKind::Wigner => RegimeKind::WignerStationary,
            ZerosKind::Mp => RegimeKind::MpStationary,
        },
        swapped: swap,
        rows,
        decay: Vec::new(),
        warnings,
    })
}
