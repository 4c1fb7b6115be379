//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Deterministic throughout (fixed seeds); tolerances are pinned in the
//! assertions. CSV byte-determinism is exercised in the CLI crate's suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use jacobi_core::detflow::{
    esp_forward, integrate_interior, lyapunov_check, signed_log_discriminant, solve_from_boundary,
    BoundaryOpts, IntegrateOpts,
};
use jacobi_core::freeprob::{
    free_add, moments_to_cumulants, mp_moments, predict_limit, semicircle_moments, square_measure,
    MeasureExpr, MomentVector,
};
use jacobi_core::harness::{
    run_experiment, zeros_limit_experiment, DeclaredConstants, Dynamics, Experiment, ParamRule,
    Rule, StartMode, ZerosKind,
};
use jacobi_core::jacobi_poly::{jacobi_zeros, JacobiParams};
use jacobi_core::model::{
    drift_compact, scalings_for, Domain, DriftSign, ParticleState, Regime, RegimeKind,
};
use jacobi_core::moments::{empirical_moments, limit_recursion, moment_ode_oracle};
use jacobi_core::sde::{martingale_diagnostic, simulate_compact, sup_abs, Scheme, SdeConfig};

fn criterion<F: FnOnce() -> Result<(), String>>(id: u32, name: &str, f: F) {
    match f() {
        Ok(()) => println!("[acceptance] criterion {id} ({name}): PASS"),
        Err(m) => {
            println!("[acceptance] criterion {id} ({name}): FAIL - {m}");
            panic!("criterion {id} ({name}) failed: {m}");
        }
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const PARAM_SETS: [(usize, f64, f64); 3] = [(3, 5.0, 5.0), (5, 10.0, 8.0), (10, 20.0, 15.0)];

fn random_interior(n: usize, seed: u64) -> ParticleState {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    loop {
        let mut coords: Vec<f64> = (0..n).map(|_| rng.random_range(-0.95..0.95)).collect();
        coords.sort_by(f64::total_cmp);
        if coords.windows(2).all(|w| w[1] - w[0] > 0.02) {
            return ParticleState::new(Domain::CompactAlcove, coords).unwrap();
        }
    }
}

/// Criterion 1: the ordered Jacobi zeros are the stationary point of the
/// frozen compact flow, and interior trajectories reach them.
#[test]
fn criterion_1_stationarity() {
    criterion(1, "stationarity at Jacobi zeros", || {
        for &(n, p, q) in &PARAM_SETS {
            let zeros = jacobi_zeros(&JacobiParams::new(n, q - n as f64, p - n as f64).unwrap())
                .map_err(|e| e.to_string())?;
            let state = ParticleState::new(Domain::CompactAlcove, zeros.clone()).unwrap();
            let drift = drift_compact(&state, p, q).map_err(|e| e.to_string())?;
            let sup = drift.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            ensure(
                sup < 1e-9,
                format!("drift at zeros: sup = {sup:.3e} for N = {n}"),
            )?;

            let t_end = 20.0 / (p + q - n as f64 + 1.0);
            for seed in 0..3u64 {
                let x0 = random_interior(n, 1000 + seed);
                let traj = integrate_interior(
                    &x0,
                    p,
                    q,
                    &[t_end],
                    &IntegrateOpts {
                        rtol: 1e-11,
                        atol: 1e-13,
                        ..IntegrateOpts::default()
                    },
                )
                .map_err(|e| e.to_string())?;
                let last = traj.states.last().unwrap();
                let err = last
                    .iter()
                    .zip(&zeros)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                ensure(
                    err < 1e-8,
                    format!("long-time limit: sup error {err:.3e} for N = {n}, seed {seed}"),
                )?;
            }
        }
        Ok(())
    });
}

/// Criterion 2: boundary starts (full ties and wall contact) become strictly
/// interior immediately, keep a positive sign-normalized discriminant, and
/// reach the same stationary limit.
#[test]
fn criterion_2_boundary_starts() {
    criterion(2, "boundary starts", || {
        for &(n, p, q) in &PARAM_SETS {
            let zeros = jacobi_zeros(&JacobiParams::new(n, q - n as f64, p - n as f64).unwrap())
                .map_err(|e| e.to_string())?;
            let t_end = 20.0 / (p + q - n as f64 + 1.0);
            // log-spaced outputs covering [1e-6, t_end]
            let mut outputs: Vec<f64> = (0..12)
                .map(|k| 1e-6 * (t_end / 1e-6).powf(k as f64 / 11.0))
                .collect();
            outputs.dedup_by(|a, b| *a <= *b * (1.0 + 1e-12));

            let tied = vec![0.2; n];
            let mut touching = vec![0.0; n];
            for (i, v) in touching.iter_mut().enumerate() {
                *v = match i {
                    0 | 1 => -1.0,
                    i if i == n - 1 => 1.0,
                    _ => -0.3 + 0.5 * (i as f64) / (n as f64),
                };
            }
            touching.sort_by(f64::total_cmp);

            for (label, coords) in [("tied", tied), ("touching", touching)] {
                let x0 = ParticleState::new(Domain::CompactAlcove, coords).unwrap();
                let traj = solve_from_boundary(
                    DriftSign::Compact,
                    &x0,
                    p,
                    q,
                    &outputs,
                    &BoundaryOpts::default(),
                )
                .map_err(|e| format!("{label} N = {n}: {e}"))?;
                for (row, &t) in traj.times.iter().enumerate() {
                    if t < 1e-6 {
                        continue;
                    }
                    let state = traj.state(row);
                    ensure(
                        state.is_interior(0.0),
                        format!("{label} N = {n}: not interior at t = {t:.3e}"),
                    )?;
                    let (sign, logd) =
                        signed_log_discriminant(&traj.states[row], Domain::CompactAlcove);
                    ensure(
                        sign > 0.0 && logd.is_finite(),
                        format!("{label} N = {n}: discriminant sign {sign} at t = {t:.3e}"),
                    )?;
                }
                let last = traj.states.last().unwrap();
                let err = last
                    .iter()
                    .zip(&zeros)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                ensure(
                    err < 1e-7,
                    format!("{label} N = {n}: limit error {err:.3e}"),
                )?;
                // gradient structure: log-potential nondecreasing
                let rep = lyapunov_check(&traj, p, q, 1e-10).map_err(|e| e.to_string())?;
                ensure(
                    rep.nondecreasing,
                    format!(
                        "{label} N = {n}: log-potential decreased ({})",
                        rep.min_increment
                    ),
                )?;
            }
        }
        Ok(())
    });
}

/// Criterion 3: particle-trajectory empirical moments match the closed
/// finite-N moment system to 1e-6 over a 50-point grid.
#[test]
fn criterion_3_oracle_equivalence() {
    criterion(3, "moment-ODE oracle equivalence", || {
        let cases: [(usize, f64, f64, f64, f64); 3] = [
            (3, 7.0, 5.5, 1.0, 0.0),
            (6, 9.0, 8.0, 2.0, 0.1),
            (8, 12.0, 10.0, 1.5, -0.2),
        ];
        for &(n, p, q, a, b) in &cases {
            let x0 = random_interior(n, 77 + n as u64);
            let grid: Vec<f64> = (1..=50).map(|k| 0.4 * k as f64 / 50.0).collect();
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
            .map_err(|e| e.to_string())?;
            let s0 = empirical_moments(&x0, a, b, 8).map_err(|e| e.to_string())?;
            let oracle = moment_ode_oracle(&s0, p, q, a, b, n, DriftSign::Compact, &grid)
                .map_err(|e| e.to_string())?;
            let mut sup = 0.0f64;
            for (gi, _) in grid.iter().enumerate() {
                let emp =
                    empirical_moments(&traj.state(gi + 1), a, b, 8).map_err(|e| e.to_string())?;
                for l in 0..=8 {
                    sup = sup.max((emp.get(l) - oracle[gi].get(l)).abs());
                }
            }
            ensure(
                sup < 1e-6,
                format!("N = {n}: sup moment gap {sup:.3e} exceeds 1e-6"),
            )?;
        }
        Ok(())
    });
}

/// Criterion 4: the measure-algebra limit laws and the moment recursions are
/// two constructions of the same object, for every implemented regime.
#[test]
fn criterion_4_double_construction() {
    criterion(4, "predict_limit == limit_recursion", || {
        let wigner_mu = free_add(
            &semicircle_moments(1.2, 8).unwrap(),
            &MomentVector::dirac(0.3, 8),
        )
        .unwrap();
        let mp_mu = mp_moments(1.3, 0.8, 8).unwrap();
        let times = [0.1, 0.4, 1.0, 2.0, 3.0];
        let nc_times = [0.1, 0.4, 0.9, 1.5, 2.0];
        let cases: Vec<(Regime, &MomentVector, &[f64])> = vec![
            (Regime::WignerStationary { c: 0.5 }, &wigner_mu, &times),
            (Regime::WignerDegenerate, &wigner_mu, &times),
            (Regime::WignerLocal { b: 0.6 }, &wigner_mu, &times),
            (
                Regime::WignerLocalDrift { b: -0.4, c: 0.7 },
                &wigner_mu,
                &times,
            ),
            (Regime::MpStationary { p_hat: 2.0 }, &mp_mu, &times),
            (Regime::MpLocal { p_hat: 1.6 }, &mp_mu, &times),
            (Regime::NcWignerLocal { b: 1.5 }, &wigner_mu, &times),
            (Regime::NcMpTimeInverted { q_hat: 1.8 }, &mp_mu, &nc_times),
            (Regime::NcMpLocal { q_hat: 1.4 }, &mp_mu, &times),
        ];
        for (regime, mu0, ts) in &cases {
            let rec = limit_recursion(regime, mu0, ts, 1e-4).map_err(|e| e.to_string())?;
            for (ti, &t) in ts.iter().enumerate() {
                let pred = predict_limit(regime, t, mu0, 8).map_err(|e| e.to_string())?;
                for l in 0..=8 {
                    let a = pred.get(l);
                    let b = rec[ti].get(l);
                    let tol = 1e-8 * (1.0 + a.abs().max(b.abs()));
                    ensure(
                        (a - b).abs() <= tol,
                        format!("{regime:?} t = {t} l = {l}: {a} vs {b}"),
                    )?;
                }
            }
        }
        // the out-of-scope regimes answer with a named not-implemented error
        for regime in [Regime::KestenMcKay, Regime::Wachter] {
            let err = predict_limit(&regime, 1.0, &wigner_mu, 8).unwrap_err();
            ensure(
                matches!(err, jacobi_core::Error::NotImplemented(_)),
                "missing not-implemented error",
            )?;
            let err = limit_recursion(&regime, &wigner_mu, &[1.0], 1e-3).unwrap_err();
            ensure(
                err.to_string().contains("Kesten-McKay") && err.to_string().contains("Wachter"),
                "not-implemented error must name the out-of-scope regimes",
            )?;
        }
        Ok(())
    });
}

/// Criterion 5: free-probability identities at their stated tolerances.
#[test]
fn criterion_5_free_probability_identities() {
    criterion(5, "free-probability identities", || {
        // MP semigroup, exact at cumulant level
        let a = mp_moments(0.9, 1.7, 8).unwrap();
        let b = mp_moments(1.4, 1.7, 8).unwrap();
        let sum = free_add(&a, &b).unwrap();
        let expect = mp_moments(2.3, 1.7, 8).unwrap();
        let ka = moments_to_cumulants(&sum);
        let kb = moments_to_cumulants(&expect);
        // exact up to the two f64 moment <-> cumulant conversions, whose
        // roundoff scales with the largest moment handled
        let m_scale = (0..=8).fold(0.0f64, |m, l| m.max(expect.get(l).abs()));
        for n in 1..=8 {
            ensure(
                (ka[n] - kb[n]).abs() <= 1e-12 * (1.0 + kb[n].abs() + m_scale),
                format!("MP semigroup cumulant {n}: {} vs {}", ka[n], kb[n]),
            )?;
        }

        // square(sc(lambda)) = MP(1, lambda^2/4)
        for &lambda in &[1.0, 2.0, 2.0 * std::f64::consts::SQRT_2] {
            let sq = square_measure(&semicircle_moments(lambda, 10).unwrap()).unwrap();
            let mp = mp_moments(1.0, lambda * lambda / 4.0, 5).unwrap();
            for l in 0..=5 {
                ensure(
                    (sq.get(l) - mp.get(l)).abs() <= 1e-12 * (1.0 + mp.get(l).abs()),
                    format!("square(sc({lambda})) l = {l}"),
                )?;
            }
        }

        // MPLocal partial-fraction identity with mu = MP(r, s), p_hat = 1
        let (r, s) = (0.6, 0.5);
        let mu = mp_moments(r, s, 8).unwrap();
        for &t in &[0.3, 1.1] {
            let got = predict_limit(&Regime::MpLocal { p_hat: 1.0 }, t, &mu, 8)
                .map_err(|e| e.to_string())?;
            let expect = free_add(
                &mp_moments(r, 2.0 * t + s, 8).unwrap(),
                &mp_moments(1.0 - r, 2.0 * t, 8).unwrap(),
            )
            .unwrap();
            for l in 0..=8 {
                ensure(
                    (got.get(l) - expect.get(l)).abs() <= 1e-10 * (1.0 + expect.get(l).abs()),
                    format!("partial fraction t = {t} l = {l}"),
                )?;
            }
        }
        Ok(())
    });
}

fn wigner_stationary_experiment() -> Experiment {
    Experiment {
        schema: 1,
        regime: RegimeKind::WignerStationary,
        dynamics: Dynamics::Frozen,
        n_list: vec![50, 100, 200],
        param_rule: ParamRule::Power {
            p_coef: 1.0,
            p_exp: 2.0,
            q_coef: 1.0,
            q_exp: 1.8,
        },
        b_rule: None,
        s_rule: None,
        mu0: MeasureExpr::Dirac { at: 0.0 },
        t_list: vec![0.5, 1.0, 3.0],
        moment_order: 6,
        seed: 42,
        gamma: 10.0,
        start: StartMode::Quantile,
        declared: DeclaredConstants {
            c_is_infinite: true,
            ..Default::default()
        },
        declared_tol: 0.5,
    }
}

/// Criterion 6: frozen Wigner limit from the degenerate start; gaps shrink
/// along N and are below 2% at N = 200.
#[test]
fn criterion_6_frozen_wigner_limit() {
    criterion(6, "frozen Wigner limit", || {
        let e = wigner_stationary_experiment();
        let report = run_experiment(&e).map_err(|e| e.to_string())?;
        ensure(report.swapped, "C = infinity must trigger the p <-> q swap")?;
        for &t in &e.t_list {
            for l in 1..=6 {
                let big = report
                    .row(200, t, l)
                    .ok_or_else(|| "missing report row".to_string())?;
                ensure(
                    big.gap_norm < 0.02,
                    format!("t = {t}, l = {l}: gap {:.4} >= 2% at N = 200", big.gap_norm),
                )?;
                ensure(
                    report.gap_shrinks(t, l, 5e-4),
                    format!("t = {t}, l = {l}: gap does not shrink along N"),
                )?;
            }
        }
        Ok(())
    });
}

/// Criterion 7: rescaled Jacobi-zero moments against the semicircle and
/// Marchenko-Pastur targets at N = 200.
#[test]
fn criterion_7_zero_limits() {
    criterion(7, "Jacobi-zero limits", || {
        let wigner = zeros_limit_experiment(
            ZerosKind::Wigner,
            &[50, 100, 200],
            &ParamRule::Power {
                p_coef: 1.0,
                p_exp: 3.0,
                q_coef: 1.0,
                q_exp: 2.0,
            },
            6,
            &DeclaredConstants {
                c_is_infinite: true,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        ensure(wigner.swapped, "Wigner zeros: expected the p <-> q swap")?;
        for l in 1..=6 {
            let row = wigner.rows.iter().find(|r| r.n == 200 && r.l == l).unwrap();
            ensure(
                row.gap_norm < 0.03,
                format!("Wigner zeros l = {l}: gap {:.4} >= 3%", row.gap_norm),
            )?;
        }

        let mp = zeros_limit_experiment(
            ZerosKind::Mp,
            &[50, 100, 200],
            &ParamRule::Power {
                p_coef: 2.0,
                p_exp: 1.0,
                q_coef: 1.0,
                q_exp: 2.0,
            },
            6,
            &DeclaredConstants::default(),
        )
        .map_err(|e| e.to_string())?;
        for l in 1..=6 {
            let row = mp.rows.iter().find(|r| r.n == 200 && r.l == l).unwrap();
            ensure(
                row.gap_norm < 0.03,
                format!("MP zeros l = {l}: gap {:.4} >= 3%", row.gap_norm),
            )?;
        }
        // first-moment anchor: m_1 of MP(p_hat, 2) is 2 p_hat = 4
        let m1 = mp.rows.iter().find(|r| r.n == 200 && r.l == 1).unwrap();
        ensure(
            (m1.empirical - 4.0).abs() / 4.0 < 0.02,
            format!("MP zeros m_1 = {} not within 2% of 4", m1.empirical),
        )?;
        Ok(())
    });
}

/// Criterion 8: the stochastic system reproduces the frozen gaps within
/// Monte Carlo error, and the martingale term shrinks with N.
#[test]
fn criterion_8_stochastic_version() {
    criterion(8, "stochastic version and martingale decay", || {
        let mut e = wigner_stationary_experiment();
        e.n_list = vec![100];
        e.t_list = vec![1.0];
        e.moment_order = 4;
        let frozen = run_experiment(&e).map_err(|e| e.to_string())?;
        let replicas = 50u32;
        e.dynamics = Dynamics::Stochastic {
            kappa: 1.0,
            replicas,
            steps: 60_000,
            scheme: Scheme::EulerProjected,
        };
        let stochastic = run_experiment(&e).map_err(|e| e.to_string())?;
        // finite-N mean prediction of the stochastic system itself (kappa
        // corrections included) for the tight mean-level comparison
        let resolved = jacobi_core::harness::resolve_experiment(&e).map_err(|e| e.to_string())?;
        let (_, p_n, q_n, scal) = resolved.schedule()[0];
        let s0 = MomentVector::dirac(0.0, 4);
        let kappa_oracle = jacobi_core::moments::stochastic_mean_oracle(
            &s0,
            p_n,
            q_n,
            scal.a,
            scal.b,
            100,
            1.0,
            DriftSign::Compact,
            &[1.0],
        )
        .map_err(|e| e.to_string())?;
        for l in 1..=4 {
            let f = frozen.row(100, 1.0, l).unwrap();
            let s = stochastic.row(100, 1.0, l).unwrap();
            let se = s.mc_se.unwrap();
            let path_std = se * (replicas as f64).sqrt();
            // replica-averaged gaps track the frozen gaps at the Monte Carlo
            // scale of single paths (the almost-sure statement is per path;
            // the mean-level kappa correction is checked separately below)
            ensure(
                (s.gap - f.gap).abs() <= 3.0 * path_std,
                format!(
                    "l = {l}: |sde gap - frozen gap| = {:.3e} exceeds 3 path std = {:.3e}",
                    (s.gap - f.gap).abs(),
                    3.0 * path_std
                ),
            )?;
            // single-path gap at the largest N, tolerance 3x the path scale
            let scale_l = if f.gap_norm > 0.0 {
                f.gap / f.gap_norm
            } else {
                1.0
            };
            let pp = s.per_path_gap_norm.unwrap() * scale_l;
            ensure(
                (pp - f.gap).abs() <= 9.0 * path_std,
                format!("l = {l}: per-path gap {pp:.3e} vs frozen {:.3e}", f.gap),
            )?;
            // tight check: the replica mean matches the finite-N stochastic
            // mean-moment system (Ito terms included) to 3 SE plus a 1%
            // allowance for the Euler weak error at this step budget
            let oracle_l = kappa_oracle[0].get(l);
            ensure(
                (s.empirical - oracle_l).abs() <= 3.0 * se + 0.01 * (1.0 + oracle_l.abs()),
                format!(
                    "l = {l}: replica mean {:.5e} vs kappa-oracle {:.5e} (3 SE = {:.3e})",
                    s.empirical,
                    oracle_l,
                    3.0 * se
                ),
            )?;
        }

        // sup |M_{2,t}| decreases along N = 50, 100, 200 (median of replicas)
        let mut sups = Vec::new();
        for &n in &[50usize, 100, 200] {
            let p = (n as f64).powf(1.8); // swapped frame of the regime
            let q = (n as f64).powf(2.0);
            let scal = scalings_for(RegimeKind::WignerStationary, n, p, q, None, None)
                .map_err(|e| e.to_string())?;
            let b = scal.b;
            let x0 = ParticleState::new(Domain::CompactAlcove, vec![b; n]).unwrap();
            let t_end = 1.0 / scal.s;
            // step count scaled with N^2 so the pair-resolution quality is
            // comparable across sizes
            let steps = 2.0 * (n * n) as f64;
            let mut cfg = SdeConfig::new(1.0, t_end / steps, 2024, 9).map_err(|e| e.to_string())?;
            cfg.record_increments = true;
            let paths = simulate_compact(&x0, p, q, &cfg, t_end).map_err(|e| e.to_string())?;
            let mut vals: Vec<f64> = paths
                .iter()
                .map(|path| {
                    martingale_diagnostic(path, &scal, p, q, 2).map(|series| sup_abs(&series))
                })
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            vals.sort_by(f64::total_cmp);
            sups.push(vals[vals.len() / 2]);
        }
        ensure(
            sups[0] > sups[1] && sups[1] > sups[2],
            format!("sup |M_2| medians not decreasing: {sups:?}"),
        )?;
        Ok(())
    });
}

/// Criterion 9: noncompact analogues (local Wigner and time-inverted MP).
#[test]
fn criterion_9_noncompact_analogues() {
    criterion(9, "noncompact analogues", || {
        let nc_wigner = Experiment {
            schema: 1,
            regime: RegimeKind::NcWignerLocal,
            dynamics: Dynamics::Frozen,
            n_list: vec![50, 100, 200],
            param_rule: ParamRule::Power {
                p_coef: 1.0,
                p_exp: 1.0,
                q_coef: 1.0,
                q_exp: 1.0,
            },
            b_rule: Some(Rule::Constant(2.0)),
            s_rule: Some(Rule::Power {
                coef: 1.0,
                exp: 3.0,
            }),
            mu0: MeasureExpr::Dirac { at: 0.0 },
            t_list: vec![0.25, 0.5, 1.0],
            moment_order: 6,
            seed: 5,
            gamma: 10.0,
            start: StartMode::Quantile,
            declared: DeclaredConstants {
                b: Some(2.0),
                ..Default::default()
            },
            declared_tol: 0.5,
        };
        let report = run_experiment(&nc_wigner).map_err(|e| e.to_string())?;
        for &t in &nc_wigner.t_list {
            for l in 1..=6 {
                let row = report.row(200, t, l).unwrap();
                ensure(
                    row.gap_norm < 0.03,
                    format!("NcWignerLocal t = {t}, l = {l}: gap {:.4}", row.gap_norm),
                )?;
            }
        }

        let nc_mp = Experiment {
            schema: 1,
            regime: RegimeKind::NcMpTimeInverted,
            dynamics: Dynamics::Frozen,
            n_list: vec![50, 100, 200],
            param_rule: ParamRule::Power {
                p_coef: 1.0,
                p_exp: 2.0,
                q_coef: 2.0,
                q_exp: 1.0,
            },
            b_rule: None,
            s_rule: None,
            mu0: MeasureExpr::Dirac { at: 0.0 },
            t_list: vec![0.3, 0.7],
            moment_order: 6,
            seed: 5,
            gamma: 10.0,
            start: StartMode::Quantile,
            declared: DeclaredConstants {
                q_hat: Some(2.0),
                ..Default::default()
            },
            declared_tol: 0.5,
        };
        let report = run_experiment(&nc_mp).map_err(|e| e.to_string())?;
        for &t in &nc_mp.t_list {
            for l in 1..=6 {
                let row = report.row(200, t, l).unwrap();
                ensure(
                    row.gap_norm < 0.03,
                    format!("NcMpTimeInverted t = {t}, l = {l}: gap {:.4}", row.gap_norm),
                )?;
            }
            // derived specialization: delta_0 start gives MP(q_hat, 2(e^t - 1))
            let q_hat = 2.0;
            let mu0 = MomentVector::dirac(0.0, 6);
            let pred = predict_limit(&Regime::NcMpTimeInverted { q_hat }, t, &mu0, 6)
                .map_err(|e| e.to_string())?;
            let mp = mp_moments(q_hat, 2.0 * (t.exp() - 1.0), 6).unwrap();
            for l in 0..=6 {
                ensure(
                    (pred.get(l) - mp.get(l)).abs() <= 1e-10 * (1.0 + mp.get(l).abs()),
                    format!("MP specialization t = {t}, l = {l}"),
                )?;
            }
        }
        Ok(())
    });
}

/// Sanity anchor used by several criteria: the ESP map is consistent with
/// the closed-form linear flow along a boundary-start trajectory.
#[test]
fn boundary_trajectory_esp_consistency() {
    let (p, q) = (6.0, 5.0);
    let x0 = ParticleState::new(Domain::CompactAlcove, vec![0.1, 0.1, 0.1]).unwrap();
    let outputs = [0.05, 0.1, 0.2];
    let traj = solve_from_boundary(
        DriftSign::Compact,
        &x0,
        p,
        q,
        &outputs,
        &BoundaryOpts::default(),
    )
    .unwrap();
    let closed =
        jacobi_core::detflow::esp_closed_form(&esp_forward(&x0), p, q, DriftSign::Compact).unwrap();
    for (row, &t) in traj.times.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let from_state = esp_forward(&traj.state(row));
        let from_closed = closed.eval(t);
        for k in 0..3 {
            assert!(
                (from_state[k] - from_closed[k]).abs() < 1e-6 * (1.0 + from_closed[k].abs()),
                "t = {t}, k = {k}: {} vs {}",
                from_state[k],
                from_closed[k]
            );
        }
    }
}
