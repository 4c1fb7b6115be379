//! Euler-Maruyama simulation of the rescaled Jacobi diffusions on both
//! domains, with per-replica counter-based RNG streams and trajectory-level
//! martingale diagnostics.
//!
//! One step: `X <- X + drift(X) dt + sqrt(2/kappa) sqrt(max(0, w(X))) dW`,
//! then clamp-or-reflect at the walls and sort. Sorting does not change
//! empirical moments; wall handling is the standard discretization surrogate
//! for the reflecting boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drift_into, Domain, DriftSign, ParticleState, Scalings};

/// Pair-denominator floor for drift evaluation on (near-)tied
/// configurations; boundary starts are split by a noise-only first step, so
/// this only guards exact ties produced by clamping.
const PAIR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Clamp to the closed domain after each step.
    EulerProjected,
    /// Mirror-reflect at the walls after each step.
    EulerReflected,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SdeConfig {
    pub kappa: f64,
    pub scheme: Scheme,
    pub dt: f64,
    pub seed: u64,
    pub replicas: u32,
    /// Record every k-th step (1 keeps the full grid).
    pub record_every: u32,
    /// Keep the Gaussian increments so martingale integrals can be
    /// reconstructed (requires `record_every == 1`).
    pub record_increments: bool,
}

impl SdeConfig {
    pub fn new(kappa: f64, dt: f64, seed: u64, replicas: u32) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::constraint("kappa_positive", "kappa must be > 0"));
        }
        if !(dt > 0.0) {
            return Err(Error::constraint("dt_positive", "dt must be > 0"));
        }
        if replicas == 0 {
            return Err(Error::constraint(
                "replicas_positive",
                "replicas must be >= 1",
            ));
        }
        Ok(SdeConfig {
            kappa,
            scheme: Scheme::EulerProjected,
            dt,
            seed,
            replicas,
            record_every: 1,
            record_increments: false,
        })
    }

    /// Default step `0.1 * min(1/(p+q), eta * gap^2/4)` evaluated at the
    /// start; falls back to `0.1/(p+q)` when the start carries ties.
    pub fn default_dt(p: f64, q: f64, x0: &ParticleState) -> f64 {
        let relax = 0.1 / (p + q);
        let gap = x0.min_gap();
        if gap > 0.0 {
            relax.min(0.025 * gap * gap)
        } else {
            relax
        }
    }
}

/// One simulated path on the recorded grid.
#[derive(Debug, Clone)]
pub struct SdePath {
    pub domain: Domain,
    pub replica_id: u32,
    pub dt: f64,
    pub kappa: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Gaussian increments (`xi`, unit variance) per step, when recorded.
    pub increments: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

impl SdePath {
    pub fn state(&self, idx: usize) -> ParticleState {
        ParticleState::new(self.domain, self.states[idx].clone()).expect("recorded states sorted")
    }
}

fn wall_weight(x: f64, sign: DriftSign) -> f64 {
    match sign {
        DriftSign::Compact => 1.0 - x * x,
        DriftSign::Noncompact => x * x - 1.0,
    }
}

/// Drift with the pairwise denominator tamed at the one-step collision scale
/// `sqrt(4 |u| dt)`: a pair at distance `g` can only separate to
/// `sqrt(g^2 + 8 u dt)` within one step, so denominators below that scale
/// would overshoot and pump spurious variance into the cloud. Outside the
/// collision zone this is exactly the Euler-Maruyama drift.
fn drift_tamed(coords: &[f64], p: f64, q: f64, sign: DriftSign, dt: f64, out: &mut [f64]) {
    let n = coords.len();
    let min_gap = coords
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    // roughest bound on the collision scale: |u| <= 1 + x_max^2
    let x_max = coords[n - 1].abs().max(coords[0].abs());
    let zone = (4.0 * (1.0 + x_max * x_max) * dt).sqrt().max(PAIR_FLOOR);
    if min_gap > zone {
        drift_into(coords, p, q, sign, out);
        return;
    }
    for i in 0..n {
        let xi = coords[i];
        let mut pair = 0.0;
        for (j, &xj) in coords.iter().enumerate() {
            if j != i {
                let u = 1.0 - xi * xj;
                let d = xi - xj;
                let floor = (4.0 * u.abs() * dt).sqrt().max(PAIR_FLOOR);
                let d_eff = if d.abs() >= floor {
                    d
                } else if d != 0.0 {
                    d.signum() * floor
                } else if j < i {
                    floor
                } else {
                    -floor
                };
                pair += u / d_eff;
            }
        }
        let value = (p - q) - (p + q) * xi + 2.0 * pair;
        out[i] = match sign {
            DriftSign::Compact => value,
            DriftSign::Noncompact => -value,
        };
    }
}

fn project(coords: &mut [f64], domain: Domain, scheme: Scheme) {
    let (lo, hi) = domain.bounds();
    for x in coords.iter_mut() {
        match scheme {
            Scheme::EulerProjected => {
                if *x < lo {
                    *x = lo;
                }
                if let Some(h) = hi {
                    if *x > h {
                        *x = h;
                    }
                }
            }
            Scheme::EulerReflected => {
                if *x < lo {
                    *x = lo + (lo - *x);
                }
                if let Some(h) = hi {
                    if *x > h {
                        *x = h - (*x - h);
                    }
                }
                // a reflection may overshoot the opposite wall for huge steps
                if *x < lo {
                    *x = lo;
                }
                if let Some(h) = hi {
                    if *x > h {
                        *x = h;
                    }
                }
            }
        }
    }
    coords.sort_by(f64::total_cmp);
}

/// Single Euler-Maruyama update shared by the simulator and its tests:
/// drift plus `sqrt(2 dt / kappa) sqrt(max(0, w(X))) xi`, then projection and
/// sorting. With `xi = 0` this is exactly the Euler step of the frozen ODE.
pub fn euler_step(
    coords: &mut [f64],
    noise: &[f64],
    p: f64,
    q: f64,
    kappa: f64,
    dt: f64,
    sign: DriftSign,
    scheme: Scheme,
    scratch: &mut Vec<f64>,
) {
    let n = coords.len();
    scratch.resize(n, 0.0);
    drift_tamed(coords, p, q, sign, dt, scratch);
    let amp = (2.0 * dt / kappa).sqrt();
    for i in 0..n {
        let w = wall_weight(coords[i], sign).max(0.0);
        coords[i] += scratch[i] * dt + amp * w.sqrt() * noise[i];
    }
    project(coords, sign.domain(), scheme);
}

fn simulate_one<F: FnMut(&mut [f64])>(
    sign: DriftSign,
    x0: &ParticleState,
    p: f64,
    q: f64,
    cfg: &SdeConfig,
    t_end: f64,
    replica_id: u32,
    mut fill_noise: F,
) -> Result<SdePath> {
    let domain = sign.domain();
    let n = x0.len();
    let steps = (t_end / cfg.dt).ceil().max(1.0) as u64;
    let mut warnings = Vec::new();

    let mut coords = x0.coords().to_vec();
    let mut scratch = Vec::with_capacity(n);
    let mut noise = vec![0.0f64; n];

    // Boundary starts are experimental: ties carry singular drift, so split
    // them with one noise-only half step before the regular scheme.
    if x0.min_gap() <= PAIR_FLOOR {
        warnings.push("tied start split by a noise-only initial step (experimental)".into());
        fill_noise(&mut noise);
        let amp = (2.0 * cfg.dt / cfg.kappa).sqrt();
        for i in 0..n {
            let w = wall_weight(coords[i], sign).max(0.0);
            coords[i] += amp * w.sqrt() * noise[i];
        }
        project(&mut coords, domain, cfg.scheme);
    }

    // stability advisory, not fatal
    drift_tamed(&coords, p, q, sign, cfg.dt, {
        scratch.resize(n, 0.0);
        &mut scratch
    });
    let max_drift = scratch.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_drift * cfg.dt > 0.5 {
        warnings.push(format!(
            "dt = {:.3e} is large against the initial drift scale {:.3e}",
            cfg.dt, max_drift
        ));
    }
    // sufficient non-collision condition of the continuous process; a
    // warning threshold only, the dynamics itself needs just p, q > N - 1
    let floor = n as f64 - 1.0 + 2.0 / cfg.kappa;
    if !(cfg.kappa >= 1.0 && p >= floor && q >= floor) {
        warnings.push(format!(
            "parameters outside the sufficient non-collision range (kappa >= 1, p, q >= N - 1 + 2/kappa = {floor:.3})"
        ));
    }

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut increments = if cfg.record_increments {
        Some(Vec::with_capacity(steps as usize))
    } else {
        None
    };
    times.push(0.0);
    states.push(coords.clone());

    for step in 1..=steps {
        fill_noise(&mut noise);
        if let Some(inc) = increments.as_mut() {
            inc.push(noise.clone());
        }
        euler_step(
            &mut coords,
            &noise,
            p,
            q,
            cfg.kappa,
            cfg.dt,
            sign,
            cfg.scheme,
            &mut scratch,
        );
        if step % cfg.record_every as u64 == 0 || step == steps {
            times.push(step as f64 * cfg.dt);
            states.push(coords.clone());
        }
        if domain == Domain::NoncompactChamber && coords[n - 1].abs() > 1e12 {
            return Err(Error::GrowthGuard {
                time: step as f64 * cfg.dt,
                bound: 1e12,
            });
        }
    }

    Ok(SdePath {
        domain,
        replica_id,
        dt: cfg.dt,
        kappa: cfg.kappa,
        times,
        states,
        increments,
        warnings,
    })
}

fn replica_rng(seed: u64, replica_id: u32) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replica_id as u64);
    rng
}

fn simulate(
    sign: DriftSign,
    x0: &ParticleState,
    p: f64,
    q: f64,
    cfg: &SdeConfig,
    t_end: f64,
) -> Result<Vec<SdePath>> {
    if x0.domain() != sign.domain() {
        return Err(Error::Domain(format!(
            "state domain {:?} does not match flow {:?}",
            x0.domain(),
            sign.domain()
        )));
    }
    if cfg.record_increments && cfg.record_every != 1 {
        return Err(Error::Domain(
            "recording increments requires record_every = 1".into(),
        ));
    }
    if !(t_end > 0.0) {
        return Err(Error::Domain("t_end must be > 0".into()));
    }
    (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.seed, r);
            simulate_one(sign, x0, p, q, cfg, t_end, r, move |noise| {
                for v in noise.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            })
        })
        .collect()
}

/// Runs every replica and reports empirical moments of `a (X - b)` at the
/// step indices closest to the requested raw times, without storing paths.
/// Returns `replicas x times` moment vectors.
pub fn simulate_moments(
    sign: DriftSign,
    x0: &ParticleState,
    p: f64,
    q: f64,
    cfg: &SdeConfig,
    t_raw: &[f64],
    a: f64,
    b: f64,
    order: usize,
) -> Result<Vec<Vec<crate::freeprob::MomentVector>>> {
    if x0.domain() != sign.domain() {
        return Err(Error::Domain("state domain does not match the flow".into()));
    }
    if t_raw.is_empty() || t_raw.windows(2).any(|w| w[1] <= w[0]) || t_raw[0] <= 0.0 {
        return Err(Error::Domain(
            "raw times must be strictly increasing and positive".into(),
        ));
    }
    let t_end = *t_raw.last().unwrap();
    let steps = (t_end / cfg.dt).ceil().max(1.0) as u64;
    let targets: Vec<u64> = t_raw
        .iter()
        .map(|&t| ((t / cfg.dt).round() as u64).clamp(1, steps))
        .collect();
    let n = x0.len();
    (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.seed, r);
            let mut coords = x0.coords().to_vec();
            let mut scratch = Vec::with_capacity(n);
            let mut noise = vec![0.0f64; n];
            let mut fill = |buf: &mut [f64]| {
                for v in buf.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            };
            if x0.min_gap() <= PAIR_FLOOR {
                fill(&mut noise);
                let amp = (2.0 * cfg.dt / cfg.kappa).sqrt();
                for i in 0..n {
                    let w = wall_weight(coords[i], sign).max(0.0);
                    coords[i] += amp * w.sqrt() * noise[i];
                }
                project(&mut coords, sign.domain(), cfg.scheme);
            }
            let mut out = Vec::with_capacity(targets.len());
            let mut next_target = 0usize;
            for step in 1..=steps {
                fill(&mut noise);
                euler_step(
                    &mut coords,
                    &noise,
                    p,
                    q,
                    cfg.kappa,
                    cfg.dt,
                    sign,
                    cfg.scheme,
                    &mut scratch,
                );
                while next_target < targets.len() && targets[next_target] == step {
                    out.push(crate::moments::empirical_moments_raw(&coords, a, b, order));
                    next_target += 1;
                }
            }
            while next_target < targets.len() {
                out.push(crate::moments::empirical_moments_raw(&coords, a, b, order));
                next_target += 1;
            }
            Ok(out)
        })
        .collect()
}

/// Simulates the rescaled compact diffusion; each replica draws from its own
/// counter-based stream, so the path set is independent of the replica count.
pub fn simulate_compact(
    x0: &ParticleState,
    p: f64,
    q: f64,
    cfg: &SdeConfig,
    t_end: f64,
) -> Result<Vec<SdePath>> {
    simulate(DriftSign::Compact, x0, p, q, cfg, t_end)
}

/// Simulates the rescaled noncompact diffusion.
pub fn simulate_noncompact(
    x0: &ParticleState,
    p: f64,
    q: f64,
    cfg: &SdeConfig,
    t_end: f64,
) -> Result<Vec<SdePath>> {
    simulate(DriftSign::Noncompact, x0, p, q, cfg, t_end)
}

/// Discrete martingale reconstruction
/// `M_{l,t} = (l/N) sqrt(2/(kappa (p+q))) sum_steps sum_i Y_i^{l-1}
///            sqrt(max(0, a^2 - (Y_i + a b)^2)) sqrt(dt) xi_i`
/// on the recorded grid, where `Y = a (X - b)`. The path must carry its
/// Gaussian increments.
pub fn martingale_diagnostic(
    path: &SdePath,
    scalings: &Scalings,
    p: f64,
    q: f64,
    l: usize,
) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::Range("martingale order l must be >= 1".into()));
    }
    let increments = path
        .increments
        .as_ref()
        .ok_or_else(|| Error::Domain("path was recorded without Gaussian increments".into()))?;
    let (a, b) = (scalings.a, scalings.b);
    // overflow guard on Y^{l-1}
    let max_y = path
        .states
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, &x| m.max((a * (x - b)).abs()));
    if (l as f64 - 1.0) * max_y.max(1.0).ln() > 700.0 {
        return Err(Error::Range(format!(
            "Y^{} overflows for |Y| up to {max_y:.3e}",
            l - 1
        )));
    }
    let n = path.states[0].len() as f64;
    let pref = (l as f64 / n) * (2.0 / (path.kappa * (p + q))).sqrt() * path.dt.sqrt();
    let mut series = Vec::with_capacity(path.times.len());
    let mut m = 0.0f64;
    series.push(0.0);
    for (step, xi) in increments.iter().enumerate() {
        let row = &path.states[step]; // state at the step start
        let mut acc = 0.0;
        for (i, &x) in row.iter().enumerate() {
            let y = a * (x - b);
            let band = (a * a - (y + a * b) * (y + a * b)).max(0.0);
            acc += y.powi(l as i32 - 1) * band.sqrt() * xi[i];
        }
        m += pref * acc;
        series.push(m);
    }
    Ok(series)
}

/// Largest absolute value of a diagnostic series.
pub fn sup_abs(series: &[f64]) -> f64 {
    series.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
