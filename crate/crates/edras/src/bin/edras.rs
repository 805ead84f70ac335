//! Config-driven CLI: train PINN models, run finite-difference oracles, and
//! compare the two.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edras::config::{Preset, RunConfig};
use edras::diagnostics::{
    energy_curve, error_metrics, local_std_map, strategy_group_probabilities, write_energy_csv,
    write_metrics_csv, GroupThresholds,
};
use edras::fdm::{default_store_times, solve_1d_periodic, solve_2d_disk, GridSolution};
use edras::model::QuadratureSpec;
use edras::network::{load_model, save_model};
use edras::sampling::CandidatePool;
use edras::training::{run_time_marching, RunSinks};
use edras::{seed, Error};

#[derive(Parser)]
#[command(name = "edras", about = "Adaptive-sampling PINN solver for Allen-Cahn systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model per the config's plan and strategy.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the finite-difference reference solver.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare a trained model against an oracle file.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (config_path, run): (&Path, fn(&RunConfig) -> edras::Result<()>) = match &cli.command {
        Command::Train { config } => (config, cmd_train),
        Command::Oracle { config } => (config, cmd_oracle),
        Command::Compare { config } => (config, cmd_compare),
    };
    let cfg = match RunConfig::load(config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) | Err(e @ Error::InvalidArgument(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn prepare_dirs(outdir: &Path) -> edras::Result<(PathBuf, PathBuf)> {
    let checkpoints = outdir.join("checkpoints");
    let csv = outdir.join("csv");
    std::fs::create_dir_all(&checkpoints)?;
    std::fs::create_dir_all(&csv)?;
    Ok((checkpoints, csv))
}

fn cmd_train(cfg: &RunConfig) -> edras::Result<()> {
    let sys = cfg.build_system();
    let domain = cfg.build_domain();
    let plan = cfg.build_plan();
    let (checkpoints, csv) = prepare_dirs(&cfg.run.output_dir)?;
    let sinks = RunSinks {
        loss_csv: Some(csv.join("loss_history.csv")),
        sampling_csv: Some(csv.join("sampling_log.csv")),
    };
    log::info!(
        "training preset {:?}, strategy {}, seed {}",
        cfg.run.preset,
        cfg.run.strategy,
        cfg.run.seed
    );
    let (model, report) =
        run_time_marching(&sys, &domain, &plan, cfg.run.strategy, cfg.run.seed, &sinks)?;
    save_model(&model, &checkpoints, cfg.run.seed)?;
    let report_path = cfg.run.output_dir.join("report.json");
    let file = std::fs::File::create(&report_path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)?;
    log::info!("artifacts in {}", cfg.run.output_dir.display());
    Ok(())
}

fn cmd_oracle(cfg: &RunConfig) -> edras::Result<()> {
    let sys = cfg.build_system();
    let plan = cfg.build_plan();
    std::fs::create_dir_all(&cfg.run.output_dir)?;
    let store = cfg
        .oracle
        .store_times
        .clone()
        .unwrap_or_else(|| default_store_times(&plan.endpoints));
    let solution: GridSolution = match cfg.run.preset {
        Preset::Ac1dPeriodic => {
            solve_1d_periodic(&sys, cfg.oracle.nx, cfg.oracle.dt, &store)?
        }
        Preset::Ac2dNeumann | Preset::Ac2dDynamic => solve_2d_disk(
            &sys,
            cfg.oracle.nr,
            cfg.oracle.ntheta,
            cfg.oracle.dt_2d,
            cfg.regime(),
            &store,
        )?,
    };
    let oracle_path = cfg.run.output_dir.join("oracle.json");
    solution.save(&oracle_path)?;
    let meta = serde_json::json!({
        "kind": solution.kind,
        "regime": solution.regime,
        "times": solution.times,
        "m_b": sys.m_b,
        "m_s": sys.m_s,
        "eps2": sys.eps2,
        "eps_s2": sys.eps_s2,
    });
    let meta_file = std::fs::File::create(cfg.run.output_dir.join("oracle_meta.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(meta_file), &meta)?;
    log::info!("oracle written to {}", oracle_path.display());
    Ok(())
}

fn cmd_compare(cfg: &RunConfig) -> edras::Result<()> {
    let checkpoint_dir = cfg
        .compare
        .checkpoint_dir
        .clone()
        .unwrap_or_else(|| cfg.run.output_dir.join("checkpoints"));
    let oracle_file = cfg
        .compare
        .oracle_file
        .clone()
        .unwrap_or_else(|| cfg.run.output_dir.join("oracle.json"));
    for p in [&checkpoint_dir, &oracle_file] {
        if !p.exists() {
            return Err(Error::Config(format!("missing input: {}", p.display())));
        }
    }
    let model = load_model(&checkpoint_dir)?;
    let oracle = GridSolution::load(&oracle_file)?;
    let (_, csv) = prepare_dirs(&cfg.run.output_dir)?;
    let sys = cfg.build_system();
    let domain = cfg.build_domain();

    let terminal = model.segments.last().map(|s| s.t_end).unwrap_or(0.0);
    let points: Vec<_> = oracle
        .native_eval_points()
        .into_iter()
        .filter(|p| p.t <= terminal + 1e-12)
        .collect();
    let metrics = error_metrics(&model, &oracle, &points)?;
    write_metrics_csv(
        &[(cfg.run.strategy.to_string(), metrics)],
        &csv.join("metrics.csv"),
    )?;
    log::info!(
        "relative MSE {:.3e}, relative Linf {:.3e}",
        metrics.relative_mse,
        metrics.relative_linf
    );

    if let Some([t0, t1]) = cfg.compare.group_slab {
        let pool = CandidatePool::generate(
            &domain,
            (t0, t1),
            cfg.compare.group_pool.unwrap_or(2000),
            0,
            seed::derive(cfg.run.seed, "group-pool"),
        )?;
        let thresholds = GroupThresholds { e0: cfg.compare.e0.unwrap_or(1e-3), r0: None };
        let mut rng = seed::rng(seed::derive(cfg.run.seed, "group-rad"));
        use std::io::Write;
        let mut w =
            std::io::BufWriter::new(std::fs::File::create(csv.join("group_probabilities.csv"))?);
        writeln!(w, "strategy,p_a,p_b,p_c,p_d")?;
        for strategy in [
            edras::sampling::Strategy::Rar,
            edras::sampling::Strategy::Rad,
            edras::sampling::Strategy::EdrasTopm,
        ] {
            let p = strategy_group_probabilities(
                strategy,
                &model,
                &sys,
                &oracle,
                &pool,
                cfg.compare.group_m.unwrap_or(100),
                &thresholds,
                100,
                &mut rng,
            )?;
            writeln!(w, "{strategy},{:.6},{:.6},{:.6},{:.6}", p[0], p[1], p[2], p[3])?;
        }
    }

    let energy_times = cfg
        .compare
        .energy_times
        .clone()
        .unwrap_or_else(|| oracle.times.iter().copied().filter(|t| *t <= terminal).collect());
    let quad = if domain.dim() == 1 {
        QuadratureSpec::Grid1d { nx: 512 }
    } else {
        QuadratureSpec::Polar { nr: 48, ntheta: 48 }
    };
    let rows = energy_curve(&sys, &domain, &model, &energy_times, &quad)?;
    write_energy_csv(&rows, &csv.join("energy_curve.csv"))?;

    if cfg.compare.local_std {
        let (sigma, mask) = local_std_map(&oracle, 2, 2, cfg.compare.sigma0.unwrap_or(1e-2))?;
        use std::io::Write;
        let mut w =
            std::io::BufWriter::new(std::fs::File::create(csv.join("local_std.csv"))?);
        writeln!(w, "time_index,node,sigma,masked")?;
        for (k, row) in sigma.iter().enumerate() {
            for (i, s) in row.iter().enumerate() {
                writeln!(w, "{k},{i},{s:.6e},{}", u8::from(mask[k][i]))?;
            }
        }
    }
    Ok(())
}
