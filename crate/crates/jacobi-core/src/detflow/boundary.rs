//! Trajectories started on the singular boundary (tied particles or wall
//! contact): bootstrap through the linear elementary-symmetric flow in a
//! centered, scaled frame, invert back to coordinates on a short grid, then
//! hand over to the interior integrator.

use super::esp::{esp_forward, esp_invert, EspLinearSystem};
use super::integrate::{integrate, IntegrateOpts, Trajectory};
use crate::error::{Error, Result};
use crate::model::{DriftSign, ParticleState};

#[derive(Debug, Clone, Copy)]
pub struct BoundaryOpts {
    /// Bootstrap horizon; default `1e-3 / (p + q)`.
    pub t_bootstrap: Option<f64>,
    /// Number of adaptive halvings of the bootstrap horizon.
    pub max_halvings: u32,
    /// Imaginary-part tolerance for the scaled-frame root extraction.
    pub tol_imag: f64,
    pub integrate: IntegrateOpts,
}

impl Default for BoundaryOpts {
    fn default() -> Self {
        BoundaryOpts {
            t_bootstrap: None,
            max_halvings: 20,
            tol_imag: 1e-8,
            integrate: IntegrateOpts::default(),
        }
    }
}

/// Integrates from a boundary point `x0` (ties and/or wall contact allowed)
/// with dense output at `outputs`; the returned trajectory starts with the
/// row `(0, x0)` and is strictly interior for all positive times.
pub fn solve_from_boundary(
    sign: DriftSign,
    x0: &ParticleState,
    p: f64,
    q: f64,
    outputs: &[f64],
    opts: &BoundaryOpts,
) -> Result<Trajectory> {
    let domain = sign.domain();
    if x0.domain() != domain {
        return Err(Error::Domain(format!(
            "state domain {:?} does not match flow {:?}",
            x0.domain(),
            domain
        )));
    }
    if outputs.is_empty() || outputs[0] <= 0.0 || outputs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "output times must be strictly increasing and positive".into(),
        ));
    }
    // Already interior: plain integration.
    if x0.is_interior(opts.integrate.gap_tol) {
        return integrate(sign, x0, p, q, 0.0, outputs, &opts.integrate);
    }

    let n = x0.len();
    let t_end = *outputs.last().unwrap();
    let mut t_b = opts.t_bootstrap.unwrap_or(1e-3 / (p + q)).min(0.5 * t_end);
    let center = x0.coords().iter().sum::<f64>() / n as f64;
    let spread = x0.coords()[n - 1] - x0.coords()[0];

    // The coefficient route below inverts monomial coefficients; past a few
    // dozen particles the monomial basis cannot hold the root information in
    // f64 (root condition grows exponentially with the degree), so larger
    // systems go straight to the micro-splitting construction.
    let mut last_err: Option<Error> = None;
    if n <= ESP_BOOTSTRAP_MAX_N {
        for _ in 0..=opts.max_halvings {
            match try_bootstrap(sign, x0, p, q, center, spread, t_b, outputs, opts) {
                Ok(traj) => return Ok(traj),
                Err(e) => {
                    last_err = Some(e);
                    t_b *= 0.5;
                }
            }
        }
    }
    match splitting_bootstrap(sign, x0, p, q, outputs, opts) {
        Ok(traj) => Ok(traj),
        Err(split_err) => Err(Error::InfeasibleStart(format!(
            "bootstrap never reached a strictly interior state: {} / {}",
            last_err.map(|e| e.to_string()).unwrap_or_default(),
            split_err
        ))),
    }
}

/// Largest particle count for the coefficient-space bootstrap.
const ESP_BOOTSTRAP_MAX_N: usize = 32;

/// Replaces every tied cluster (and wall contact) with a mean-preserving
/// micro-pattern of total width `delta`, strictly inside the open domain.
fn split_boundary_state(x0: &ParticleState, delta: f64, gap_tol: f64) -> Result<ParticleState> {
    let coords = x0.coords();
    let n = coords.len();
    let domain = x0.domain();
    let (lo, hi) = domain.bounds();
    let mut out = coords.to_vec();

    // split runs of (near-)equal values symmetrically about their mean
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && coords[j + 1] - coords[i] <= gap_tol.max(delta * 1e-3) {
            j += 1;
        }
        let m = j - i + 1;
        if m > 1 {
            let mean: f64 = coords[i..=j].iter().sum::<f64>() / m as f64;
            for (k, slot) in out[i..=j].iter_mut().enumerate() {
                let offset = (k as f64 - (m as f64 - 1.0) / 2.0) / (m as f64 - 1.0);
                *slot = mean + delta * offset;
            }
        }
        i = j + 1;
    }

    // stagger anything resting on (or pushed past) a wall into the interior
    let eps_w = delta / (n as f64 + 1.0);
    for (i, v) in out.iter_mut().enumerate() {
        let floor = lo + eps_w * (i as f64 + 1.0);
        if *v < floor {
            *v = floor;
        }
    }
    if let Some(h) = hi {
        for (i, v) in out.iter_mut().rev().enumerate() {
            let cap = h - eps_w * (i as f64 + 1.0);
            if *v > cap {
                *v = cap;
            }
        }
    }
    out.sort_by(f64::total_cmp);
    // strict-ordering repair
    let eps_gap = delta / (4.0 * n as f64);
    for i in 1..n {
        if out[i] - out[i - 1] < eps_gap {
            out[i] = out[i - 1] + eps_gap;
        }
    }
    if let Some(h) = hi {
        if out[n - 1] >= h {
            return Err(Error::InfeasibleStart(
                "splitting width does not fit inside the domain".into(),
            ));
        }
    }
    ParticleState::new(domain, out)
}

/// Boundary start via perturbation: the true solution is the limit of
/// interior solutions from split starts, and the pairwise square-root
/// repulsion forgets the artificial micro-pattern quadratically. Two split
/// widths are integrated and compared at the first output for verification.
fn splitting_bootstrap(
    sign: DriftSign,
    x0: &ParticleState,
    p: f64,
    q: f64,
    outputs: &[f64],
    opts: &BoundaryOpts,
) -> Result<Trajectory> {
    let n = x0.len() as f64;
    let scale = 1.0 + x0.coords().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut delta = 1e-5 * scale;
    let mut int_opts = opts.integrate;
    int_opts.monitor_discriminant = true;

    // The split state carries an O(delta) offset in e_1 (wall staggering is
    // one-sided); interpret it as the exact solution at the matching time of
    // the explicit e_1 exponential, which removes the first-order memory.
    let e1_0: f64 = x0.coords().iter().sum();
    let e_inf = n * (p - q) / (p + q);
    let lambda = match sign {
        DriftSign::Compact => -(p + q),
        DriftSign::Noncompact => p + q,
    };
    let matching_time = |xd: &ParticleState| -> f64 {
        let e1_d: f64 = xd.coords().iter().sum();
        let denom = e1_0 - e_inf;
        if denom.abs() <= 1e-13 * (1.0 + e1_0.abs() + e_inf.abs()) {
            return 0.0;
        }
        let ratio = (e1_d - e_inf) / denom;
        if ratio > 0.0 {
            (ratio.ln() / lambda).clamp(0.0, 0.25 * outputs[0])
        } else {
            0.0
        }
    };

    let mut previous: Option<Trajectory> = None;
    for _ in 0..5 {
        let xd = split_boundary_state(x0, delta, opts.integrate.gap_tol)?;
        let t_delta = matching_time(&xd);
        let traj = integrate(sign, &xd, p, q, t_delta, outputs, &int_opts)?;
        if let Some(prev) = previous {
            let a = &prev.states[1];
            let b = &traj.states[1];
            let spread = b[b.len() - 1] - b[0];
            let tol = 1e-4 * (spread.abs() + delta) + 1e-11 * scale;
            let diff = a
                .iter()
                .zip(b)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            if diff <= tol {
                let mut accepted = traj;
                accepted.times[0] = 0.0;
                accepted.states[0] = x0.coords().to_vec();
                return Ok(accepted);
            }
        }
        previous = Some(traj);
        delta *= 0.5;
    }
    Err(Error::InfeasibleStart(
        "split-start verification did not converge while shrinking the width".into(),
    ))
}

#[allow(clippy::too_many_arguments)]
fn try_bootstrap(
    sign: DriftSign,
    x0: &ParticleState,
    p: f64,
    q: f64,
    center: f64,
    spread: f64,
    t_b: f64,
    outputs: &[f64],
    opts: &BoundaryOpts,
) -> Result<Trajectory> {
    let n = x0.len();
    let domain = sign.domain();

    // Scale estimate from the centered flow: the second power sum
    // p_2 = e_1^2 - 2 e_2 gives the spread at the bootstrap time, and the
    // triangular structure means the first two components evolve on their
    // own (with the full-N coefficients).
    let centered: Vec<f64> = x0.coords().iter().map(|&x| x - center).collect();
    let d_hat = if n >= 2 {
        let e0_centered = esp_forward(&centered);
        let sys_est = EspLinearSystem::new(n, p, q, sign, center, 1.0);
        let at_tb = &sys_est.taylor_eval(&e0_centered, &[t_b], n + 60)[0];
        let p2 = at_tb[0] * at_tb[0] - 2.0 * at_tb[1];
        let m2 = (p2 / n as f64).max(0.0);
        m2.sqrt()
            .max(spread / 4.0)
            .max(1e-10 * (1.0 + center.abs()))
    } else {
        1.0
    };

    // Full linear system in the centered, scaled frame.
    let y0: Vec<f64> = x0.coords().iter().map(|&x| (x - center) / d_hat).collect();
    let sys = EspLinearSystem::new(n, p, q, sign, center, d_hat);
    let e0 = esp_forward(&y0);

    let mut grid: Vec<f64> = outputs.iter().copied().filter(|&t| t < t_b).collect();
    grid.push(t_b);
    let esp_rows = sys.taylor_eval(&e0, &grid, n + 60);

    let mut times = Vec::with_capacity(outputs.len() + 2);
    let mut states = Vec::with_capacity(outputs.len() + 2);
    times.push(0.0);
    states.push(x0.coords().to_vec());

    let mut interior_start: Option<Vec<f64>> = None;
    for (gi, &t) in grid.iter().enumerate() {
        let roots = esp_invert(&esp_rows[gi], opts.tol_imag)?;
        let coords: Vec<f64> = roots.iter().map(|&y| center + d_hat * y).collect();
        let state = ParticleState::new(domain, coords.clone())
            .map_err(|e| Error::InfeasibleStart(format!("bootstrap left the domain: {e}")))?;
        if !state.is_interior(opts.integrate.gap_tol) {
            let (i, j) = state.worst_pair(opts.integrate.gap_tol).unwrap_or((0, 0));
            return Err(Error::Singular {
                time: t,
                i,
                j,
                message: "bootstrap state not strictly interior".into(),
            });
        }
        if t < t_b {
            times.push(t);
            states.push(coords);
        } else {
            times.push(t_b);
            states.push(coords.clone());
            interior_start = Some(coords);
        }
    }

    let start = interior_start.expect("grid always contains t_b");
    let remaining: Vec<f64> = outputs.iter().copied().filter(|&t| t > t_b).collect();
    let mut stats = Default::default();
    if !remaining.is_empty() {
        let state = ParticleState::new(domain, start)?;
        let mut int_opts = opts.integrate;
        int_opts.monitor_discriminant = true;
        let tail = integrate(sign, &state, p, q, t_b, &remaining, &int_opts)?;
        for (row, &t) in tail.times.iter().enumerate().skip(1) {
            times.push(t);
            states.push(tail.states[row].clone());
        }
        stats = tail.stats;
    }

    Ok(Trajectory {
        domain,
        times,
        states,
        stats,
    })
}
