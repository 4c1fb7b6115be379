//! Subcommand runners. Each takes the parsed config plus the common flags,
//! validates, optionally stops at the dry run, runs the pipeline, and writes
//! `trajectory.csv` / `report.csv` / `report.json` / `meta.json` artifacts.

use serde::Serialize;
use serde_json::json;
use std::path::Path;

use jacobi_core::detflow::{
    self, integrate_interior, integrate_noncompact, lyapunov_check, solve_from_boundary,
    BoundaryOpts, IntegrateOpts, Trajectory,
};
use jacobi_core::harness::{resolve_experiment, run_experiment, zeros_limit_experiment};
use jacobi_core::jacobi_poly::{jacobi_zeros, relative_residual, JacobiParams};
use jacobi_core::model::{Domain, DriftSign, ParticleState, Scalings};
use jacobi_core::moments::moment_ode_oracle;
use jacobi_core::sde::{
    martingale_diagnostic, simulate_compact, simulate_noncompact, sup_abs, SdeConfig,
};

use crate::config::{
    self, FreeprobEvalConfig, LimitCheckConfig, MomentOracleConfig, OdeRunConfig, SdeRunConfig,
};
use crate::io::{self, OutDir};
use crate::{fmt_f64, CliError, CliResult};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub out: Option<std::path::PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub dry_run: bool,
    pub force: bool,
}

fn domain_err(e: jacobi_core::Error) -> CliError {
    CliError::Domain(e.to_string())
}

fn config_err(e: jacobi_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn out_dir(common: &Common) -> CliResult<OutDir> {
    let dir = common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("--out DIR is required for this subcommand".into()))?;
    OutDir::create(dir, common.force)
}

fn output_times(t_end: f64, n_out: Option<usize>, t_out: &Option<Vec<f64>>) -> CliResult<Vec<f64>> {
    if let Some(ts) = t_out {
        if ts.is_empty() || ts.windows(2).any(|w| w[1] <= w[0]) || ts[0] <= 0.0 {
            return Err(CliError::Config(
                "t_out must be strictly increasing and positive".into(),
            ));
        }
        return Ok(ts.clone());
    }
    if !(t_end > 0.0) {
        return Err(CliError::Config("t_end must be > 0".into()));
    }
    Ok(detflow::uniform_grid(t_end, n_out.unwrap_or(50)))
}

fn build_state(domain: Domain, coords: &[f64]) -> CliResult<ParticleState> {
    ParticleState::new(domain, coords.to_vec()).map_err(config_err)
}

pub fn ode_run(path: &Path, common: &Common) -> CliResult<()> {
    let cfg: OdeRunConfig = config::load(path)?;
    config::require_schema(cfg.schema)?;
    let (_, p, q) = cfg.params.resolve(cfg.x0.len())?;
    let x0 = build_state(cfg.domain, &cfg.x0)?;
    let outputs = output_times(cfg.t_end, cfg.n_out, &cfg.t_out)?;
    if common.dry_run {
        println!("dry-run ok: ode-run N = {}, p = {p}, q = {q}", cfg.x0.len());
        return Ok(());
    }
    let dir = out_dir(common)?;

    let mut opts = IntegrateOpts {
        monitor_discriminant: cfg.track_discriminant,
        ..IntegrateOpts::default()
    };
    if let Some(rtol) = cfg.rtol {
        opts.rtol = rtol;
    }
    if let Some(atol) = cfg.atol {
        opts.atol = atol;
    }
    let sign = match cfg.domain {
        Domain::CompactAlcove => DriftSign::Compact,
        Domain::NoncompactChamber => DriftSign::Noncompact,
    };
    let traj: Trajectory = if x0.is_interior(1e-12) {
        match sign {
            DriftSign::Compact => integrate_interior(&x0, p, q, &outputs, &opts),
            DriftSign::Noncompact => integrate_noncompact(&x0, p, q, &outputs, &opts),
        }
        .map_err(domain_err)?
    } else {
        solve_from_boundary(
            sign,
            &x0,
            p,
            q,
            &outputs,
            &BoundaryOpts {
                integrate: opts,
                ..BoundaryOpts::default()
            },
        )
        .map_err(domain_err)?
    };

    dir.write_text(
        "trajectory.csv",
        &io::trajectory_csv(&traj.times, &traj.states),
    )?;

    let mut report = json!({
        "schema": 1,
        "final_time": traj.times.last(),
        "final_state": traj.states.last(),
        "stats": traj.stats,
        "trajectory": { "times": traj.times, "states": traj.states },
    });
    if cfg.track_discriminant {
        let discs: Vec<f64> = traj
            .states
            .iter()
            .map(|row| {
                let (s, logd) = detflow::signed_log_discriminant(row, cfg.domain);
                s * logd.exp()
            })
            .collect();
        report["discriminants"] = json!(discs);
    }
    if cfg.track_lyapunov {
        let rep = lyapunov_check(&traj, p, q, 1e-10).map_err(domain_err)?;
        report["lyapunov"] = json!({
            "values": rep.values,
            "min_increment": rep.min_increment,
            "nondecreasing": rep.nondecreasing,
        });
    }
    dir.write_json("report.json", &report)?;
    dir.write_json(
        "meta.json",
        &io::meta("ode-run", &cfg, common.seed, common.jobs),
    )?;
    println!("ode-run: wrote {} output rows", traj.times.len());
    Ok(())
}

pub fn sde_run(path: &Path, common: &Common) -> CliResult<()> {
    let cfg: SdeRunConfig = config::load(path)?;
    config::require_schema(cfg.schema)?;
    let (_, p, q) = cfg.params.resolve(cfg.x0.len())?;
    let x0 = build_state(cfg.domain, &cfg.x0)?;
    if cfg.steps == 0 {
        return Err(CliError::Config("steps must be >= 1".into()));
    }
    if !(cfg.t_end > 0.0) {
        return Err(CliError::Config("t_end must be > 0".into()));
    }
    if common.dry_run {
        println!(
            "dry-run ok: sde-run N = {}, replicas = {}, steps = {}",
            cfg.x0.len(),
            cfg.replicas,
            cfg.steps
        );
        return Ok(());
    }
    let dir = out_dir(common)?;

    let seed = common.seed.unwrap_or(cfg.seed);
    let dt = cfg.t_end / cfg.steps as f64;
    let mut sde_cfg = SdeConfig::new(cfg.kappa, dt, seed, cfg.replicas).map_err(config_err)?;
    sde_cfg.scheme = cfg.scheme;
    sde_cfg.record_every = cfg.record_every;
    sde_cfg.record_increments = !cfg.martingale_orders.is_empty();
    if sde_cfg.record_increments {
        sde_cfg.record_every = 1;
    }

    let paths = match cfg.domain {
        Domain::CompactAlcove => simulate_compact(&x0, p, q, &sde_cfg, cfg.t_end),
        Domain::NoncompactChamber => simulate_noncompact(&x0, p, q, &sde_cfg, cfg.t_end),
    }
    .map_err(domain_err)?;

    dir.write_text(
        "trajectory.csv",
        &io::trajectory_csv(&paths[0].times, &paths[0].states),
    )?;

    // replica summary: per-time empirical moments (window defaults to raw)
    let window = cfg
        .window
        .unwrap_or(crate::config::Window { a: 1.0, b: 0.0 });
    let times = &paths[0].times;
    let mut mean_moments: Vec<Vec<f64>> = vec![vec![0.0; cfg.moment_order + 1]; times.len()];
    for path in &paths {
        for (ti, row) in path.states.iter().enumerate() {
            let m = jacobi_core::moments::empirical_moments(
                &path.state(ti),
                window.a,
                window.b,
                cfg.moment_order,
            )
            .map_err(domain_err)?;
            let _ = row;
            for l in 0..=cfg.moment_order {
                mean_moments[ti][l] += m.get(l) / paths.len() as f64;
            }
        }
    }
    let mut summary = json!({
        "schema": 1,
        "replicas": cfg.replicas,
        "times": times,
        "moment_order": cfg.moment_order,
        "window": { "a": window.a, "b": window.b },
        "mean_moments": mean_moments,
        "path": { "replica": 0, "times": times, "states": paths[0].states },
        "warnings": paths[0].warnings,
    });
    if !cfg.martingale_orders.is_empty() {
        let scal = Scalings {
            a: window.a,
            b: window.b,
            s: p + q,
        };
        let mut mart = Vec::new();
        for &l in &cfg.martingale_orders {
            let series = martingale_diagnostic(&paths[0], &scal, p, q, l).map_err(domain_err)?;
            mart.push(json!({ "l": l, "sup_abs": sup_abs(&series), "series": series }));
        }
        summary["martingales"] = json!(mart);
    }
    dir.write_json("replica_summary.json", &summary)?;
    dir.write_json(
        "meta.json",
        &io::meta("sde-run", &cfg, common.seed, common.jobs),
    )?;
    println!(
        "sde-run: {} replicas, {} recorded rows",
        paths.len(),
        times.len()
    );
    Ok(())
}

pub fn zeros(n: usize, alpha: f64, beta: f64, common: &Common) -> CliResult<()> {
    let jp = JacobiParams::new(n, alpha, beta).map_err(config_err)?;
    if common.dry_run {
        println!("dry-run ok: zeros n = {n}, alpha = {alpha}, beta = {beta}");
        return Ok(());
    }
    let zs = jacobi_zeros(&jp).map_err(domain_err)?;
    for z in &zs {
        println!("{}", fmt_f64(*z));
    }
    if common.out.is_some() {
        let dir = out_dir(common)?;
        let resid: Vec<f64> = zs.iter().map(|&z| relative_residual(&jp, z)).collect();
        dir.write_json(
            "report.json",
            &json!({
                "schema": 1,
                "n": n,
                "alpha": alpha,
                "beta": beta,
                "zeros": zs,
                "relative_residuals": resid,
            }),
        )?;
        #[derive(Serialize)]
        struct ZerosCfg {
            n: usize,
            alpha: f64,
            beta: f64,
        }
        dir.write_json(
            "meta.json",
            &io::meta(
                "zeros",
                &ZerosCfg { n, alpha, beta },
                common.seed,
                common.jobs,
            ),
        )?;
    }
    Ok(())
}

pub fn limit_check(path: &Path, common: &Common) -> CliResult<()> {
    let cfg: LimitCheckConfig = config::load(path)?;
    match &cfg {
        LimitCheckConfig::Experiment(experiment) => {
            let mut experiment = experiment.clone();
            if let Some(seed) = common.seed {
                experiment.seed = seed;
            }
            let resolved = resolve_experiment(&experiment).map_err(config_err)?;
            if common.dry_run {
                println!(
                    "dry-run ok: limit-check regime {:?}, swapped = {}, schedule:",
                    experiment.regime,
                    resolved.swapped()
                );
                for (n, p, q, scal) in resolved.schedule() {
                    println!(
                        "  N = {n}: p = {}, q = {}, a = {}, b = {}, s = {}",
                        fmt_f64(p),
                        fmt_f64(q),
                        fmt_f64(scal.a),
                        fmt_f64(scal.b),
                        fmt_f64(scal.s)
                    );
                }
                return Ok(());
            }
            let dir = out_dir(common)?;
            let report = run_experiment(&experiment).map_err(domain_err)?;
            dir.write_text("report.csv", &io::report_csv(&report.rows))?;
            dir.write_json("report.json", &report)?;
            dir.write_json(
                "meta.json",
                &io::meta("limit-check", &experiment, common.seed, common.jobs),
            )?;
            println!(
                "limit-check: {} rows ({} warnings)",
                report.rows.len(),
                report.warnings.len()
            );
        }
        LimitCheckConfig::ZerosExperiment {
            kind,
            n_list,
            param_rule,
            moment_order,
            declared,
        } => {
            if common.dry_run {
                println!("dry-run ok: zeros limit experiment {kind:?} over {n_list:?}");
                return Ok(());
            }
            let dir = out_dir(common)?;
            let report = zeros_limit_experiment(*kind, n_list, param_rule, *moment_order, declared)
                .map_err(domain_err)?;
            dir.write_text("report.csv", &io::report_csv(&report.rows))?;
            dir.write_json("report.json", &report)?;
            dir.write_json(
                "meta.json",
                &io::meta("limit-check", &cfg, common.seed, common.jobs),
            )?;
            println!("limit-check (zeros): {} rows", report.rows.len());
        }
    }
    Ok(())
}

pub fn moment_oracle(path: &Path, common: &Common) -> CliResult<()> {
    let cfg: MomentOracleConfig = config::load(path)?;
    config::require_schema(cfg.schema)?;
    let s0 = jacobi_core::freeprob::MomentVector::new(cfg.s0.clone()).map_err(config_err)?;
    if common.dry_run {
        println!(
            "dry-run ok: moment-oracle order {} over {} grid times",
            s0.order(),
            cfg.t_grid.len()
        );
        return Ok(());
    }
    let dir = out_dir(common)?;
    let sign = match cfg.domain {
        Domain::CompactAlcove => DriftSign::Compact,
        Domain::NoncompactChamber => DriftSign::Noncompact,
    };
    let out = moment_ode_oracle(&s0, cfg.p, cfg.q, cfg.a, cfg.b, cfg.n, sign, &cfg.t_grid)
        .map_err(domain_err)?;
    let rows: Vec<Vec<f64>> = out.iter().map(|m| m.values().to_vec()).collect();
    dir.write_text("report.csv", &io::moments_csv(&cfg.t_grid, &rows))?;
    dir.write_json(
        "report.json",
        &json!({ "schema": 1, "t_grid": cfg.t_grid, "moments": rows }),
    )?;
    dir.write_json(
        "meta.json",
        &io::meta("moment-oracle", &cfg, common.seed, common.jobs),
    )?;
    println!("moment-oracle: {} grid times", cfg.t_grid.len());
    Ok(())
}

pub fn freeprob_eval(path: &Path, common: &Common) -> CliResult<()> {
    let cfg: FreeprobEvalConfig = config::load(path)?;
    config::require_schema(cfg.schema)?;
    if common.dry_run {
        println!("dry-run ok: freeprob-eval order {}", cfg.order);
        return Ok(());
    }
    let m = cfg.expr.eval(cfg.order).map_err(domain_err)?;
    for (l, v) in m.values().iter().enumerate() {
        println!("m_{l} = {}", fmt_f64(*v));
    }
    if common.out.is_some() {
        let dir = out_dir(common)?;
        dir.write_json(
            "report.json",
            &json!({
                "schema": 1,
                "order": m.order(),
                "moments": m.values(),
                "support": m.support(),
                "provenance": "freeprob-eval measure expression",
            }),
        )?;
        dir.write_json(
            "meta.json",
            &io::meta("freeprob-eval", &cfg, common.seed, common.jobs),
        )?;
    }
    Ok(())
}
