//! Command implementations behind the `weakfield` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use weakfield::config::{load_config, RunConfig};
use weakfield::elimination::compare_elimination;
use weakfield::exec::with_workers;
use weakfield::linalg::DensityMatrix;
use weakfield::model::AuxCoupling;
use weakfield::oracle::{
    convolve_curve, ContinuumOracle, GreensTable, Provenance, Quadrature, DEFAULT_MEMORY_BUDGET,
};
use weakfield::protocol::ProtocolEngine;
use weakfield::sampling::{plan_budget, reconstruct_sampled, sampled_protocol_run, sigma_table, RNG_ALGORITHM};
use weakfield::table_io::{curve_csv, series_csv, write_atomic, write_table};
use weakfield::ExecPolicy;

pub mod axis;

#[derive(Debug, Parser)]
#[command(name = "weakfield", version, about = "Single-photon response simulation via a pulsed single mode")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed for shot-noise sampling (overrides `sampling.seed`).
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_name = "INT")]
    pub workers: Option<usize>,
    /// Skip shot noise: use exact populations wherever samples would be drawn.
    #[arg(long, global = true)]
    pub exact_sampling: bool,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Run configuration, as an alternative to `--config`.
    #[arg(value_name = "CONFIG")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact Green's-function table on the configured grid.
    Oracle(ConfigArg),
    /// Two-pulse protocol on the configured grid and the reconstructed table.
    Protocol(ConfigArg),
    /// Protocol with binomial shot noise on every measured population.
    Sample {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Trials per measured point (overrides `sampling.trials`).
        #[arg(long, value_name = "INT")]
        trials: Option<u64>,
    },
    /// Population response to the configured wavepacket.
    Convolve {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Table to convolve; default `<out>/oracle.csv`, else a fresh exact table.
        #[arg(long, value_name = "PATH")]
        table: Option<PathBuf>,
    },
    /// Auxiliary-dissipation check: coupled versus eliminated dynamics.
    Auxcheck(ConfigArg),
    /// Experiment-count plan for a target population error.
    Budget {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_name = "SIGMA")]
        target_sigma: Option<f64>,
    },
    /// Repeat the protocol and convolution over a parameter axis.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Axis name and values: `a..b` (unit step), `a..b:step` or `x,y,z`.
        #[arg(long, num_args = 2, value_names = ["NAME", "LIST"], required = true)]
        axis: Vec<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Oracle(_) => "oracle",
            Command::Protocol(_) => "protocol",
            Command::Sample { .. } => "sample",
            Command::Convolve { .. } => "convolve",
            Command::Auxcheck(_) => "auxcheck",
            Command::Budget { .. } => "budget",
            Command::Sweep { .. } => "sweep",
        }
    }

    fn config_file(&self) -> Option<&Path> {
        let c = match self {
            Command::Oracle(c) | Command::Protocol(c) | Command::Auxcheck(c) => c,
            Command::Sample { cfg, .. }
            | Command::Convolve { cfg, .. }
            | Command::Budget { cfg, .. }
            | Command::Sweep { cfg, .. } => cfg,
        };
        c.file.as_deref()
    }
}

#[derive(Debug, Serialize)]
struct Artifact {
    path: String,
    provenance: Provenance,
}

/// Metadata written next to the data of every command.
#[derive(Debug, Serialize)]
struct Bundle<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    config: &'a RunConfig,
    seed: Option<u64>,
    rng: Option<&'a str>,
    workers: Option<usize>,
    wall_time_s: f64,
    artifacts: Vec<Artifact>,
    summary: serde_json::Value,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
    workers: Option<usize>,
    exact_sampling: bool,
    policy: ExecPolicy,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Default configuration for commands that can run without one.
const BUDGET_DEFAULTS: &str = r#"
[model]
preset = "example2"
[grid]
dt = 10.0
t_max_m = 1000.0
t_max_int = 1000.0
[pulse]
n_gamma = 1.0
"#;

pub fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let file = cli.config.as_deref().or(cli.command.config_file());
    let cfg = match (file, &cli.command) {
        (Some(p), _) => load_config(p)?,
        (None, Command::Budget { .. }) => weakfield::config::parse_config(BUDGET_DEFAULTS)?,
        (None, _) => bail!("a configuration is required (`--config PATH` or a positional CONFIG)"),
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(cfg.sampling.seed),
        cfg,
        out,
        workers: cli.workers,
        exact_sampling: cli.exact_sampling,
        policy: ExecPolicy::Parallel,
    };
    let command = cli.command;
    let name = command.name();
    let (artifacts, summary, seeded) = with_workers(ctx.workers, || dispatch(&ctx, &command))?;
    let bundle = Bundle {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: ctx.cfg.hash(),
        config: &ctx.cfg,
        seed: seeded.then_some(ctx.seed),
        rng: seeded.then_some(RNG_ALGORITHM),
        workers: ctx.workers,
        wall_time_s: started.elapsed().as_secs_f64(),
        artifacts,
        summary,
    };
    write_atomic(&ctx.path(&format!("{name}.bundle.json")), serde_json::to_string_pretty(&bundle)?.as_bytes())?;
    log::info!("{name} finished in {:.2} s; outputs in {}", started.elapsed().as_secs_f64(), ctx.out.display());
    Ok(())
}

type Outcome = (Vec<Artifact>, serde_json::Value, bool);

fn dispatch(ctx: &Ctx, command: &Command) -> Result<Outcome> {
    match command {
        Command::Oracle(_) => cmd_oracle(ctx),
        Command::Protocol(_) => cmd_protocol(ctx),
        Command::Sample { trials, .. } => cmd_sample(ctx, *trials),
        Command::Convolve { table, .. } => cmd_convolve(ctx, table.as_deref()),
        Command::Auxcheck(_) => cmd_auxcheck(ctx),
        Command::Budget { target_sigma, .. } => cmd_budget(ctx, *target_sigma),
        Command::Sweep { axis, .. } => cmd_sweep(ctx, &axis[0], &axis[1]),
    }
}

fn exact_table(cfg: &RunConfig, dt: f64, policy: ExecPolicy) -> Result<GreensTable> {
    let oracle = ContinuumOracle::new(&cfg.matter()?)?;
    let mut t = oracle.table(dt, cfg.grid.t_max_m, cfg.grid.t_max_int, policy, DEFAULT_MEMORY_BUDGET)?;
    t.meta.config_hash = Some(cfg.hash());
    Ok(t)
}

fn save_table(ctx: &Ctx, name: &str, table: &GreensTable) -> Result<Artifact> {
    let p = ctx.path(name);
    write_table(&p, table)?;
    Ok(Artifact {
        path: name.into(),
        provenance: table.meta.provenance.clone(),
    })
}

fn save_series(ctx: &Ctx, name: &str, header: &[&str], rows: &[Vec<f64>], provenance: Provenance) -> Result<Artifact> {
    write_atomic(&ctx.path(name), series_csv(header, rows).as_bytes())?;
    Ok(Artifact {
        path: name.into(),
        provenance,
    })
}

fn populations_artifacts(ctx: &Ctx, prefix: &str, p_two: &ndarray::Array2<f64>, p_one: &[f64], dt: f64, prov: Provenance) -> Result<Vec<Artifact>> {
    let (mc, kc) = p_two.dim();
    let rows: Vec<Vec<f64>> = (0..mc * kc)
        .map(|i| vec![(i / kc) as f64 * dt, (i % kc) as f64 * dt, p_two[[i / kc, i % kc]]])
        .collect();
    let single: Vec<Vec<f64>> = p_one.iter().enumerate().map(|(j, &p)| vec![j as f64 * dt, p]).collect();
    Ok(vec![
        save_series(ctx, &format!("{prefix}_two_pulse.csv"), &["t_m", "t_int", "P_two"], &rows, prov.clone())?,
        save_series(ctx, &format!("{prefix}_single_pulse.csv"), &["t", "P_one"], &single, prov)?,
    ])
}

fn cmd_oracle(ctx: &Ctx) -> Result<Outcome> {
    let t = exact_table(&ctx.cfg, ctx.cfg.grid.dt, ctx.policy)?;
    let summary = json!({ "m_count": t.m_count(), "k_count": t.k_count(), "dt": t.dt });
    Ok((vec![save_table(ctx, "oracle.csv", &t)?], summary, false))
}

fn cmd_protocol(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let engine = ProtocolEngine::new(&cfg.composite()?)?;
    let pulse = cfg.pulse_params();
    let validity = engine.validity(pulse.n_gamma);
    if validity > 0.1 {
        log::warn!("weak-pulse parameter ||L||^2 n^2 = {validity:.3} is not small");
    }
    let mut r = engine.run_grid(cfg.grid_spec(), pulse, ctx.policy)?;
    r.reconstruction.meta.config_hash = Some(cfg.hash());
    let mut arts = vec![save_table(ctx, "protocol.csv", &r.reconstruction)?];
    arts.extend(populations_artifacts(ctx, "protocol", &r.p_two, &r.p_one, cfg.grid.dt, Provenance::Exact)?);
    let summary = json!({ "validity": validity, "cached_propagators": engine.cached_propagators() });
    Ok((arts, summary, false))
}

fn cmd_sample(ctx: &Ctx, trials: Option<u64>) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let trials = trials.unwrap_or(cfg.sampling.trials);
    let engine = ProtocolEngine::new(&cfg.composite()?)?;
    let (grid, pulse) = (cfg.grid_spec(), cfg.pulse_params());
    let run = if ctx.exact_sampling {
        let mut r = engine.run_grid(grid, pulse, ctx.policy)?;
        r.reconstruction.sigma = sigma_table(&r.p_two, &r.p_one, pulse.n_gamma, trials, pulse.subtraction)?;
        r
    } else {
        sampled_protocol_run(&engine, grid, pulse, trials, ctx.seed, ctx.policy)?.result
    };
    let mut table = run.reconstruction;
    table.meta.config_hash = Some(cfg.hash());
    let prov = table.meta.provenance.clone();
    let mut arts = vec![save_table(ctx, "sampled.csv", &table)?];
    arts.extend(populations_artifacts(ctx, "sampled", &run.p_two, &run.p_one, grid.dt, prov)?);
    let max_sigma = table.sigma.iter().cloned().fold(0.0, f64::max);
    Ok((arts, json!({ "trials": trials, "max_sigma_G": max_sigma }), !ctx.exact_sampling))
}

fn cmd_convolve(ctx: &Ctx, table: Option<&Path>) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let default = ctx.path("oracle.csv");
    let table = match table {
        Some(p) => weakfield::table_io::read_table(p)?,
        None if default.exists() => weakfield::table_io::read_table(&default)?,
        None => exact_table(cfg, cfg.grid.dt, ctx.policy)?,
    };
    let dt = cfg.wavepacket.dt.unwrap_or(table.dt);
    let wp = cfg.wavepacket_on(dt)?;
    let quad = cfg.quadrature().unwrap_or_else(|| Quadrature::for_table(&table));
    let curve = convolve_curve(&table, &wp, &cfg.eval_times(), quad)?;
    write_atomic(&ctx.path("population.csv"), curve_csv(&curve).as_bytes())?;
    let peak = curve.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let summary = json!({ "quadrature": quad, "table_dt": table.dt, "wavepacket_dt": dt, "peak": peak });
    let art = Artifact {
        path: "population.csv".into(),
        provenance: table.meta.provenance.clone(),
    };
    Ok((vec![art], summary, false))
}

fn cmd_auxcheck(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let model = cfg.matter()?;
    let chis: Vec<f64> = cfg.elimination.chi_squared.iter().map(|c| c.sqrt()).collect();
    let times = cfg.elimination.times();
    // measured state excited, spectator as configured
    let d = model.dim();
    let sd = model.spectator_dim;
    let spec = model.spectator_state();
    let mut rho = ndarray::Array2::zeros((d, d));
    for f in 0..sd {
        for g in 0..sd {
            rho[[model.measured_state * sd + f, model.measured_state * sd + g]] = spec.entries()[[f, g]];
        }
    }
    let initial = DensityMatrix::from_matrix(rho)?;
    let report = compare_elimination(&model, &AuxCoupling::Matched, &chis, &times, &initial, ctx.policy)?;
    write_atomic(&ctx.path("auxcheck.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    let rows: Vec<Vec<f64>> = (0..chis.len())
        .map(|i| vec![cfg.elimination.chi_squared[i], chis[i], report.probe_error[i], report.max_error[i]])
        .collect();
    let mut arts = vec![Artifact {
        path: "auxcheck.json".into(),
        provenance: Provenance::Exact,
    }];
    arts.push(save_series(ctx, "auxcheck.csv", &["chi_squared", "chi", "probe_error", "max_error"], &rows, Provenance::Exact)?);
    Ok((arts, json!({ "exponent": report.exponent }), false))
}

fn cmd_budget(ctx: &Ctx, target: Option<f64>) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let b = plan_budget(
        target.unwrap_or(cfg.budget.target_sigma),
        cfg.grid.dt,
        cfg.budget.domain.unwrap_or(cfg.grid.t_max_m),
        cfg.budget.p_typical,
        cfg.pulse.area(),
    )?;
    write_atomic(&ctx.path("budget.json"), serde_json::to_string_pretty(&b)?.as_bytes())?;
    log::info!(
        "N = {} per point; per-interval total {:.3e}; per-grid-point total {:.3e}",
        b.trials_per_point,
        b.per_interval_total,
        b.per_grid_point_total
    );
    let art = Artifact {
        path: "budget.json".into(),
        provenance: Provenance::Exact,
    };
    Ok((vec![art], serde_json::to_value(&b)?, false))
}

#[derive(Debug, Serialize)]
struct SweepPoint {
    axis: String,
    value: f64,
    g_t_m: f64,
    g_t_int: f64,
    g: f64,
    g_exact: f64,
    p: f64,
    p_exact: f64,
    sigma_p: f64,
    config_hash: String,
}

/// Grid point nearest to `(t_m, t_int)` inside the table.
fn nearest_point(table: &GreensTable, t_m: f64, t_int: f64) -> (usize, usize) {
    let snap = |t: f64, n: usize| ((t / table.dt).round().max(0.0) as usize).min(n - 1);
    (snap(t_m, table.m_count()), snap(t_int, table.k_count()))
}

fn sweep_point(ctx: &Ctx, name: &str, value: f64, index: usize) -> Result<SweepPoint> {
    let mut cfg = ctx.cfg.clone();
    cfg.set_axis(name, value)?;
    let engine = ProtocolEngine::new(&cfg.composite()?)?;
    let (grid, pulse) = (cfg.grid_spec(), cfg.pulse_params());
    // points run concurrently, so the inner loops stay sequential
    let inner = ExecPolicy::Sequential;
    let table = if cfg.sampling.enabled && !ctx.exact_sampling {
        let seed = ctx.seed.wrapping_add(index as u64);
        sampled_protocol_run(&engine, grid, pulse, cfg.sampling.trials, seed, inner)?.result.reconstruction
    } else if cfg.sampling.enabled {
        let (p2, p1) = engine.populations(grid, pulse, inner)?;
        reconstruct_sampled(&engine, &p2, &p1, grid, pulse, weakfield::sampling::EXACT_TRIALS, 0, inner)?
            .result
            .reconstruction
    } else {
        engine.run_grid(grid, pulse, inner)?.reconstruction
    };
    let [gm, gk] = cfg.sweep.g_probe;
    let matter = cfg.matter()?;
    let (m, k) = nearest_point(&table, gm, gk);
    let (gm, gk) = (table.t_m(m), table.t_int(k));
    let g_exact = weakfield::oracle::greens_exact(&matter, gm, gk)?;
    let t = cfg.sweep.p_probe;
    let wp = cfg.wavepacket_anchored(cfg.wavepacket.dt.unwrap_or(grid.dt), t)?;
    let quad = cfg.quadrature().unwrap_or_else(|| Quadrature::for_table(&table));
    let (p, sigma_p) = weakfield::oracle::convolve_with_error(&table, &wp, t, quad)?;
    let rdt = cfg.sweep.reference_dt;
    let reference = exact_table(&cfg, rdt, inner)?;
    let p_exact = weakfield::oracle::convolve(&reference, &cfg.wavepacket_anchored(rdt, t)?, t, Quadrature::Trapezoid)?;
    let point = SweepPoint {
        axis: name.into(),
        value,
        g_t_m: gm,
        g_t_int: gk,
        g: table.values[[m, k]],
        g_exact,
        p,
        p_exact,
        sigma_p,
        config_hash: cfg.hash(),
    };
    let dir = ctx.path("sweep");
    write_atomic(&dir.join(format!("point_{index:04}.json")), serde_json::to_string_pretty(&point)?.as_bytes())?;
    Ok(point)
}

fn cmd_sweep(ctx: &Ctx, name: &str, list: &str) -> Result<Outcome> {
    let values = axis::parse_list(list).with_context(|| format!("parsing axis list `{list}`"))?;
    // validate every point before spending time on any of them
    for &v in &values {
        ctx.cfg.clone().set_axis(name, v)?;
    }
    std::fs::create_dir_all(ctx.path("sweep"))?;
    let jobs: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    let points = ctx
        .policy
        .map(jobs, |(i, v)| sweep_point(ctx, name, v, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| vec![p.value, p.g_t_m, p.g_t_int, p.g, p.g_exact, p.g / p.g_exact - 1.0, p.p, p.p_exact, p.p - p.p_exact, p.sigma_p])
        .collect();
    let header = ["value", "G_t_m", "G_t_int", "G", "G_exact", "G_rel_error", "P", "P_exact", "P_error", "sigma_P"];
    let prov = if ctx.cfg.sampling.enabled && !ctx.exact_sampling {
        Provenance::Sampled {
            trials: ctx.cfg.sampling.trials,
            seed: ctx.seed,
            rng: RNG_ALGORITHM.into(),
        }
    } else {
        Provenance::Reconstructed
    };
    let art = save_series(ctx, "sweep.csv", &header, &rows, prov)?;
    let summary = json!({ "axis": name, "points": values.len() });
    Ok((vec![art], summary, ctx.cfg.sampling.enabled && !ctx.exact_sampling))
}
