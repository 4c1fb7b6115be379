//! Adaptive Dormand-Prince 5(4) integration of the interior particle flow.
//!
//! Every accepted step must keep the configuration strictly ordered and
//! strictly inside the open domain; steps are additionally capped by the
//! pairwise repulsion stability bound `eta * gap^2 / (4 |1 - x_i x_j|)` so a
//! discrete step cannot jump across a collision.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{drift_into, Domain, DriftSign, ParticleState};

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Safety factor of the repulsion step cap.
    pub eta: f64,
    pub max_steps: u64,
    /// Noncompact runs abort when a coordinate magnitude exceeds this.
    pub growth_guard: f64,
    /// Track the sign-normalized discriminant at accepted steps.
    pub monitor_discriminant: bool,
    /// Interiority tolerance applied to the initial state.
    pub gap_tol: f64,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        IntegrateOpts {
            rtol: 1e-9,
            atol: 1e-12,
            eta: 0.25,
            max_steps: 20_000_000,
            growth_guard: 1e12,
            monitor_discriminant: false,
            gap_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct IntegStats {
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub min_gap_seen: f64,
    /// Smallest sign-normalized log-discriminant seen, if monitoring.
    pub min_log_discriminant: Option<f64>,
}

/// Time-stamped interior trajectory with dense output rows at the requested
/// times (the initial state is row zero).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub domain: Domain,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: IntegStats,
}

impl Trajectory {
    pub fn state(&self, idx: usize) -> ParticleState {
        ParticleState::new(self.domain, self.states[idx].clone())
            .expect("accepted states are valid by construction")
    }

    pub fn last_state(&self) -> ParticleState {
        self.state(self.states.len() - 1)
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 4th-order embedded weights (the 7th stage is the FSAL derivative at y_new)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates the flow from `(t0, x0)` with dense output at `outputs`
/// (strictly increasing times, all > `t0`). `x0` must be strictly interior.
pub fn integrate(
    sign: DriftSign,
    x0: &ParticleState,
    p: f64,
    q: f64,
    t0: f64,
    outputs: &[f64],
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    let domain = sign.domain();
    if x0.domain() != domain {
        return Err(Error::Domain(format!(
            "state domain {:?} does not match flow {:?}",
            x0.domain(),
            domain
        )));
    }
    if !x0.is_interior(opts.gap_tol) {
        let (i, j) = x0.worst_pair(opts.gap_tol).unwrap_or((0, 0));
        return Err(Error::Singular {
            time: t0,
            i,
            j,
            message: "initial state is not strictly interior".into(),
        });
    }
    if outputs.is_empty() {
        return Err(Error::Domain("at least one output time is required".into()));
    }
    if outputs[0] <= t0 || outputs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "output times must be strictly increasing and exceed t0".into(),
        ));
    }

    let n = x0.len();
    let mut y = x0.coords().to_vec();
    let mut t = t0;
    let mut stats = IntegStats {
        min_gap_seen: min_gap(&y),
        ..Default::default()
    };
    if opts.monitor_discriminant {
        stats.min_log_discriminant = Some(signed_log_discriminant(&y, domain).1);
    }

    let mut times = Vec::with_capacity(outputs.len() + 1);
    let mut states = Vec::with_capacity(outputs.len() + 1);
    times.push(t0);
    states.push(y.clone());

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    drift_into(&y, p, q, sign, &mut k1);
    let mut h = initial_step(&y, &k1, p, q, sign, opts);
    let t_span = outputs[outputs.len() - 1] - t0;

    for &target in outputs {
        while t < target {
            if stats.steps_accepted + stats.steps_rejected > opts.max_steps {
                return Err(Error::Domain(format!(
                    "step budget {} exhausted at t = {t:.6e} (min gap {:.3e})",
                    opts.max_steps, stats.min_gap_seen
                )));
            }
            let cap = step_cap(&y, p, q, sign, opts);
            h = h.min(cap);
            if t + h >= target {
                h = target - t;
            }
            let h_floor = (f64::EPSILON * 4.0 * t.abs())
                .max(f64::EPSILON * 128.0 * t_span)
                .max(1e-300);
            if h < h_floor {
                let (i, j) = worst_gap_pair(&y);
                return Err(Error::Singular {
                    time: t,
                    i,
                    j,
                    message: format!(
                        "step size underflow near a collision (gap {:.3e})",
                        y[j] - y[i]
                    ),
                });
            }

            // Dormand-Prince stages
            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            drift_into(&ytmp, p, q, sign, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            drift_into(&ytmp, p, q, sign, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            drift_into(&ytmp, p, q, sign, &mut k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            drift_into(&ytmp, p, q, sign, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            drift_into(&ytmp, p, q, sign, &mut k6);
            for i in 0..n {
                ynew[i] =
                    y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }

            let valid = state_valid(&ynew, domain);
            let mut err_norm = f64::INFINITY;
            if valid {
                drift_into(&ynew, p, q, sign, &mut k7);
                let mut acc = 0.0;
                for i in 0..n {
                    let err = h
                        * (E1 * k1[i]
                            + E3 * k3[i]
                            + E4 * k4[i]
                            + E5 * k5[i]
                            + E6 * k6[i]
                            + E7 * k7[i]);
                    let scale = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                    acc += (err / scale) * (err / scale);
                }
                err_norm = (acc / n as f64).sqrt();
            }

            if valid && err_norm <= 1.0 {
                t += h;
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7); // FSAL
                stats.steps_accepted += 1;
                stats.min_gap_seen = stats.min_gap_seen.min(min_gap(&y));
                if opts.monitor_discriminant {
                    let (s, logd) = signed_log_discriminant(&y, domain);
                    if s <= 0.0 {
                        let (i, j) = worst_gap_pair(&y);
                        return Err(Error::Singular {
                            time: t,
                            i,
                            j,
                            message: "discriminant lost its interior sign".into(),
                        });
                    }
                    stats.min_log_discriminant = Some(
                        stats
                            .min_log_discriminant
                            .unwrap_or(f64::INFINITY)
                            .min(logd),
                    );
                }
                if domain == Domain::NoncompactChamber {
                    let max_abs = y[n - 1].abs().max(y[0].abs());
                    if max_abs > opts.growth_guard {
                        return Err(Error::GrowthGuard {
                            time: t,
                            bound: opts.growth_guard,
                        });
                    }
                }
                let grow = if err_norm > 0.0 {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                h *= grow;
            } else {
                stats.steps_rejected += 1;
                h *= if valid {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.3
                };
            }
        }
        times.push(t);
        states.push(y.clone());
    }

    Ok(Trajectory {
        domain,
        times,
        states,
        stats,
    })
}

fn min_gap(y: &[f64]) -> f64 {
    y.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

fn worst_gap_pair(y: &[f64]) -> (usize, usize) {
    let mut best = (0usize, 1usize.min(y.len() - 1));
    let mut gap = f64::INFINITY;
    for i in 0..y.len().saturating_sub(1) {
        let g = y[i + 1] - y[i];
        if g < gap {
            gap = g;
            best = (i, i + 1);
        }
    }
    best
}

fn state_valid(y: &[f64], domain: Domain) -> bool {
    if y.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if y.windows(2).any(|w| w[1] <= w[0]) {
        return false;
    }
    let (lo, hi) = domain.bounds();
    if y[0] <= lo {
        return false;
    }
    if let Some(h) = hi {
        if y[y.len() - 1] >= h {
            return false;
        }
    }
    true
}

/// Repulsion stability cap plus the linear-rate cap `2.5 / (p + q)`.
fn step_cap(y: &[f64], p: f64, q: f64, sign: DriftSign, opts: &IntegrateOpts) -> f64 {
    let mut cap = 2.5 / (p + q);
    for i in 0..y.len().saturating_sub(1) {
        let g = y[i + 1] - y[i];
        let u = match sign {
            DriftSign::Compact => 1.0 - y[i] * y[i + 1],
            DriftSign::Noncompact => y[i] * y[i + 1] - 1.0,
        };
        let pair_cap = opts.eta * g * g / (4.0 * u.abs() + 1e-300);
        cap = cap.min(pair_cap);
    }
    cap
}

fn initial_step(
    y: &[f64],
    f0: &[f64],
    p: f64,
    q: f64,
    sign: DriftSign,
    opts: &IntegrateOpts,
) -> f64 {
    let max_f = f0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cap = step_cap(y, p, q, sign, opts);
    cap.min(1e-2 / (1.0 + max_f))
}

/// Discriminant sign-normalized to be positive on the open interior:
/// returns `(sign, log |D|)` where `sign = +1` exactly on strictly ordered
/// strictly interior configurations.
pub fn signed_log_discriminant(coords: &[f64], domain: Domain) -> (f64, f64) {
    let n = coords.len();
    let mut log_abs = 0.0f64;
    let mut sign = 1.0f64;
    for &x in coords {
        let w = match domain {
            Domain::CompactAlcove => 1.0 - x * x,
            Domain::NoncompactChamber => x * x - 1.0,
        };
        if w == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if w < 0.0 {
            sign = -sign;
        }
        log_abs += w.abs().ln();
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = coords[j] - coords[i];
            if d == 0.0 {
                return (0.0, f64::NEG_INFINITY);
            }
            if d < 0.0 {
                sign = -sign;
            }
            // ordered-pair product contributes the square of each difference
            log_abs += 2.0 * d.abs().ln();
        }
    }
    (sign, log_abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Domain;

    fn interior(domain: Domain, coords: Vec<f64>) -> ParticleState {
        ParticleState::new(domain, coords).unwrap()
    }

    #[test]
    fn single_particle_matches_exact_linear_solution() {
        // N=1, p=3, q=2: x(t) = 1/5 + (x0 - 1/5) e^{-5 t}
        let x0 = interior(Domain::CompactAlcove, vec![0.5]);
        let outputs = [0.1, 0.25, 0.5, 1.0];
        let traj = integrate(
            DriftSign::Compact,
            &x0,
            3.0,
            2.0,
            0.0,
            &outputs,
            &IntegrateOpts::default(),
        )
        .unwrap();
        for (row, &t) in outputs.iter().enumerate() {
            let expect = 0.2 + (0.5 - 0.2) * (-5.0 * t).exp();
            let got = traj.states[row + 1][0];
            assert!((got - expect).abs() < 1e-9, "t = {t}: {got} vs {expect}");
        }
    }

    #[test]
    fn single_particle_noncompact_exact_solution() {
        // N=1: dx/dt = (q - p) + (q + p) x; with q = 3, p = 2 and x0 = 2 the
        // solution is x(t) = -1/5 + (2 + 1/5) e^{5 t}
        let x0 = interior(Domain::NoncompactChamber, vec![2.0]);
        let outputs = [0.05, 0.2, 0.4];
        let traj = integrate(
            DriftSign::Noncompact,
            &x0,
            2.0,
            3.0,
            0.0,
            &outputs,
            &IntegrateOpts::default(),
        )
        .unwrap();
        for (row, &t) in outputs.iter().enumerate() {
            let expect = -0.2 + 2.2 * (5.0 * t).exp();
            let got = traj.states[row + 1][0];
            assert!(
                (got - expect).abs() < 1e-8 * expect,
                "t = {t}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn ordering_is_preserved_on_every_output() {
        let x0 = interior(Domain::CompactAlcove, vec![-0.9, -0.85, 0.0, 0.8]);
        let outputs: Vec<f64> = (1..=40).map(|k| k as f64 * 0.05).collect();
        let traj = integrate(
            DriftSign::Compact,
            &x0,
            7.0,
            5.0,
            0.0,
            &outputs,
            &IntegrateOpts::default(),
        )
        .unwrap();
        for row in &traj.states {
            assert!(row.windows(2).all(|w| w[0] < w[1]));
            assert!(row[0] > -1.0 && row[3] < 1.0);
        }
        assert!(traj.stats.min_gap_seen > 0.0);
    }

    #[test]
    fn tiny_initial_gap_raises_singular_diagnostic() {
        let coords = vec![0.1, 0.1 + 2e-12, 0.5];
        let x0 = interior(Domain::CompactAlcove, coords);
        let err = integrate(
            DriftSign::Compact,
            &x0,
            5.0,
            5.0,
            0.0,
            &[1.0],
            &IntegrateOpts {
                gap_tol: 1e-13,
                ..IntegrateOpts::default()
            },
        )
        .unwrap_err();
        match err {
            Error::Singular { i, j, .. } => {
                assert_eq!((i, j), (0, 1));
            }
            other => panic!("expected singular diagnostic, got {other:?}"),
        }
    }

    #[test]
    fn growth_guard_trips_on_noncompact_runs() {
        let x0 = interior(Domain::NoncompactChamber, vec![1.5, 3.0]);
        let err = integrate(
            DriftSign::Noncompact,
            &x0,
            3.0,
            2.5,
            0.0,
            &[20.0],
            &IntegrateOpts {
                growth_guard: 1e6,
                ..IntegrateOpts::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::GrowthGuard { .. }));
    }

    #[test]
    fn discriminant_monitoring_tracks_interior_sign() {
        let x0 = interior(Domain::NoncompactChamber, vec![1.05, 1.4, 2.0]);
        let traj = integrate(
            DriftSign::Noncompact,
            &x0,
            4.0,
            3.0,
            0.0,
            &[0.05, 0.1],
            &IntegrateOpts {
                monitor_discriminant: true,
                ..IntegrateOpts::default()
            },
        )
        .unwrap();
        assert!(traj.stats.min_log_discriminant.unwrap().is_finite());
    }
}
