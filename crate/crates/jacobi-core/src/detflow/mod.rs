//! Deterministic dynamics: interior integration of the frozen flows,
//! boundary starts through the elementary-symmetric linearization,
//! discriminant tracking, and the electrostatic log-potential monotonicity
//! check.

pub mod boundary;
pub mod esp;
pub mod exppoly;
pub mod integrate;

pub use boundary::{solve_from_boundary, BoundaryOpts};
pub use esp::{esp_closed_form, EspLinearSystem, EspTrajectory, ROOT_IMAG_TOL};
pub use exppoly::{ExpPolySum, ExpPolyTerm};
pub use integrate::{signed_log_discriminant, IntegStats, IntegrateOpts, Trajectory};

use crate::error::{Error, Result};
use crate::model::{Domain, DriftSign, ParticleState};

/// Interior integration of the compact flow with dense output at `outputs`.
pub fn integrate_interior(
    x0: &ParticleState,
    p: f64,
    q: f64,
    outputs: &[f64],
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    integrate::integrate(DriftSign::Compact, x0, p, q, 0.0, outputs, opts)
}

/// Interior integration of the noncompact flow.
pub fn integrate_noncompact(
    x0: &ParticleState,
    p: f64,
    q: f64,
    outputs: &[f64],
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    integrate::integrate(DriftSign::Noncompact, x0, p, q, 0.0, outputs, opts)
}

/// Elementary symmetric polynomials `(e_1(x), ..., e_N(x))` of a state.
pub fn esp_forward(x: &ParticleState) -> Vec<f64> {
    esp::esp_forward(x.coords())
}

/// Ordered preimage of an ESP vector on the given domain.
pub fn esp_invert(e: &[f64], domain: Domain, tol_imag: f64) -> Result<ParticleState> {
    let roots = esp::esp_invert(e, tol_imag)?;
    ParticleState::new(domain, roots)
        .map_err(|err| Error::Domain(format!("ESP preimage left the closed domain: {err}")))
}

/// Discriminant `D(x) = prod_i w(x_i) * prod_{i != j} (x_j - x_i)` with
/// `w = 1 - x^2` on the alcove and `w = x^2 - 1` on the chamber.
///
/// The product over ordered pairs makes the interior sign `(-1)^{N(N-1)/2}`;
/// downstream checks use the sign-normalized variant
/// [`signed_log_discriminant`], which is positive exactly on the open
/// interior.
pub fn discriminant(x: &ParticleState) -> f64 {
    let coords = x.coords();
    let mut d = 1.0;
    for &xi in coords {
        d *= match x.domain() {
            Domain::CompactAlcove => 1.0 - xi * xi,
            Domain::NoncompactChamber => xi * xi - 1.0,
        };
    }
    for i in 0..coords.len() {
        for j in 0..coords.len() {
            if i != j {
                d *= coords[j] - coords[i];
            }
        }
    }
    d
}

/// Monotonicity report of the electrostatic log-potential along a compact
/// trajectory.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub min_increment: f64,
    pub nondecreasing: bool,
}

/// Log of the Stieltjes-type potential
/// `prod_i (1 - x_i)^{q+1-N} (1 + x_i)^{p+1-N} * prod_{i<j} (x_i - x_j)^2`
/// evaluated along the trajectory rows; the frozen compact flow ascends it.
pub fn lyapunov_check(traj: &Trajectory, p: f64, q: f64, tol: f64) -> Result<MonotonicityReport> {
    if traj.domain != Domain::CompactAlcove {
        return Err(Error::Domain(
            "the log-potential check applies to the compact domain".into(),
        ));
    }
    let n = traj.states[0].len() as f64;
    let values: Vec<f64> = traj
        .states
        .iter()
        .map(|row| log_potential(row, p, q, n))
        .collect();
    let mut min_increment = f64::INFINITY;
    let mut nondecreasing = true;
    for w in values.windows(2) {
        if w[0] == f64::NEG_INFINITY {
            continue;
        }
        let inc = w[1] - w[0];
        min_increment = min_increment.min(inc);
        if inc < -tol {
            nondecreasing = false;
        }
    }
    if min_increment == f64::INFINITY {
        min_increment = 0.0;
    }
    Ok(MonotonicityReport {
        times: traj.times.clone(),
        values,
        min_increment,
        nondecreasing,
    })
}

pub(crate) fn log_potential(coords: &[f64], p: f64, q: f64, n: f64) -> f64 {
    let mut acc = 0.0f64;
    for &x in coords {
        let (lo, hi) = (1.0 + x, 1.0 - x);
        if lo <= 0.0 || hi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += (q + 1.0 - n) * hi.ln() + (p + 1.0 - n) * lo.ln();
    }
    for i in 0..coords.len() {
        for j in (i + 1)..coords.len() {
            let d = coords[j] - coords[i];
            if d <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += 2.0 * d.ln();
        }
    }
    acc
}

/// `count` uniformly spaced output times ending at `t_end`.
pub fn uniform_grid(t_end: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| t_end * k as f64 / count as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobi_poly::{jacobi_zeros, JacobiParams};
    use crate::moments::{empirical_moments_raw, moment_ode_oracle};

    #[test]
    fn discriminant_examples() {
        let tie = ParticleState::new(Domain::CompactAlcove, vec![0.3, 0.3, 0.6]).unwrap();
        assert_eq!(discriminant(&tie), 0.0);
        let wall = ParticleState::new(Domain::CompactAlcove, vec![0.0, 1.0]).unwrap();
        assert_eq!(discriminant(&wall), 0.0);
        // hand value: (1 - 0.25)(1 - 0.25) * (x2 - x1)(x1 - x2) = -0.5625
        let x = ParticleState::new(Domain::CompactAlcove, vec![-0.5, 0.5]).unwrap();
        assert!((discriminant(&x) + 0.5625).abs() < 1e-15);
        // sign-normalized variant is positive there
        let (s, _) = signed_log_discriminant(x.coords(), Domain::CompactAlcove);
        assert!(s > 0.0);
    }

    #[test]
    fn long_time_limit_is_jacobi_zero_vector() {
        // N = 5, p = q = 10: terminal state matches the ordered zeros
        let x0 =
            ParticleState::new(Domain::CompactAlcove, vec![-0.8, -0.35, 0.02, 0.41, 0.77]).unwrap();
        let t_end = 20.0 / (10.0 + 10.0 - 5.0 + 1.0);
        let traj = integrate_interior(
            &x0,
            10.0,
            10.0,
            &[0.5 * t_end, t_end],
            &IntegrateOpts::default(),
        )
        .unwrap();
        let zeros = jacobi_zeros(&JacobiParams::new(5, 5.0, 5.0).unwrap()).unwrap();
        let last = traj.states.last().unwrap();
        for i in 0..5 {
            assert!(
                (last[i] - zeros[i]).abs() < 1e-8,
                "i = {i}: {} vs {}",
                last[i],
                zeros[i]
            );
        }
    }

    #[test]
    fn trajectory_moments_match_moment_ode_oracle() {
        // independent routes: particle integration vs the closed moment system
        let (p, q) = (7.0, 5.5);
        let coords = vec![-0.7, -0.2, 0.5];
        let x0 = ParticleState::new(Domain::CompactAlcove, coords.clone()).unwrap();
        let grid: Vec<f64> = (1..=20).map(|k| 0.02 * k as f64).collect();
        let traj = integrate_interior(
            &x0,
            p,
            q,
            &grid,
            &IntegrateOpts {
                rtol: 1e-11,
                atol: 1e-13,
                ..IntegrateOpts::default()
            },
        )
        .unwrap();
        let s0 = empirical_moments_raw(&coords, 1.0, 0.0, 8);
        let oracle = moment_ode_oracle(&s0, p, q, 1.0, 0.0, 3, DriftSign::Compact, &grid).unwrap();
        for (gi, _) in grid.iter().enumerate() {
            let emp = empirical_moments_raw(&traj.states[gi + 1], 1.0, 0.0, 8);
            for l in 0..=8 {
                assert!(
                    (emp.get(l) - oracle[gi].get(l)).abs() < 1e-6,
                    "t = {}, l = {l}: {} vs {}",
                    grid[gi],
                    emp.get(l),
                    oracle[gi].get(l)
                );
            }
        }
    }

    #[test]
    fn esp_consistency_along_interior_flow() {
        // esp_forward(integrate(...)) == esp_closed_form evaluation on [0, 2]
        let (p, q) = (4.0, 3.0);
        let coords = vec![-0.55, 0.0, 0.62];
        let x0 = ParticleState::new(Domain::CompactAlcove, coords.clone()).unwrap();
        let grid: Vec<f64> = (1..=10).map(|k| 0.2 * k as f64).collect();
        let traj = integrate_interior(
            &x0,
            p,
            q,
            &grid,
            &IntegrateOpts {
                rtol: 1e-11,
                atol: 1e-13,
                ..IntegrateOpts::default()
            },
        )
        .unwrap();
        let closed = esp_closed_form(&esp::esp_forward(&coords), p, q, DriftSign::Compact).unwrap();
        for (gi, &t) in grid.iter().enumerate() {
            let from_traj = esp::esp_forward(&traj.states[gi + 1]);
            let from_closed = closed.eval(t);
            for k in 0..3 {
                assert!(
                    (from_traj[k] - from_closed[k]).abs() < 1e-8,
                    "t = {t}, k = {k}: {} vs {}",
                    from_traj[k],
                    from_closed[k]
                );
            }
        }
    }

    #[test]
    fn noncompact_esp_invariant_and_discriminant() {
        let (p, q) = (4.2, 3.1);
        let coords = vec![1.15, 1.9];
        let x0 = ParticleState::new(Domain::NoncompactChamber, coords.clone()).unwrap();
        let grid: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
        let traj = integrate_noncompact(
            &x0,
            p,
            q,
            &grid,
            &IntegrateOpts {
                rtol: 1e-11,
                atol: 1e-13,
                monitor_discriminant: true,
                ..IntegrateOpts::default()
            },
        )
        .unwrap();
        // e_1 follows the explicit exponential solution
        let stat = 2.0 * (p - q) / (p + q);
        let e1_0: f64 = coords.iter().sum();
        for (gi, &t) in grid.iter().enumerate() {
            let e1: f64 = traj.states[gi + 1].iter().sum();
            let expect = ((p + q) * t).exp() * (e1_0 - stat) + stat;
            assert!(
                (e1 - expect).abs() < 1e-8 * (1.0 + expect.abs()),
                "t = {t}: {e1} vs {expect}"
            );
        }
        // discriminant never vanished along the run
        assert!(traj.stats.min_log_discriminant.unwrap().is_finite());
    }

    #[test]
    fn log_potential_constant_at_stationary_point_and_increasing_elsewhere() {
        let (p, q) = (9.0, 7.0);
        let zeros = jacobi_zeros(&JacobiParams::new(5, q - 5.0, p - 5.0).unwrap()).unwrap();
        let stationary = ParticleState::new(Domain::CompactAlcove, zeros.clone()).unwrap();
        let grid = [0.1, 0.2, 0.4];
        let traj = integrate_interior(&stationary, p, q, &grid, &IntegrateOpts::default()).unwrap();
        let report = lyapunov_check(&traj, p, q, 1e-10).unwrap();
        let v0 = report.values[0];
        for v in &report.values {
            assert!((v - v0).abs() < 1e-8);
        }

        let x0 =
            ParticleState::new(Domain::CompactAlcove, vec![-0.9, -0.5, 0.1, 0.3, 0.82]).unwrap();
        let grid: Vec<f64> = (1..=30).map(|k| 0.05 * k as f64).collect();
        let traj = integrate_interior(&x0, p, q, &grid, &IntegrateOpts::default()).unwrap();
        let report = lyapunov_check(&traj, p, q, 1e-10).unwrap();
        assert!(
            report.nondecreasing,
            "min increment {}",
            report.min_increment
        );
        assert!(report.min_increment >= -1e-10);
        // long-time value agrees with the value at the zeros
        let at_zeros = log_potential(&zeros, p, q, 5.0);
        let last = report.values.last().unwrap();
        assert!((last - at_zeros).abs() < 1e-6, "{last} vs {at_zeros}");
    }
}
