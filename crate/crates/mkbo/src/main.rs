use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mkbo::config::{logspace, ExperimentConfig};
use mkbo::data::load_dataset_csv;
use mkbo::service::{serve, ServiceConfig};
use mkbo::suite::{read_summary_csv, run_suite, write_outputs, SuiteResult};
use mkbo_core::bo::{pretrain_kernel, PretrainConfig};
use mkbo_core::dataset::normalize_unit_box;
use mkbo_core::KernelSpec;

#[derive(Parser)]
#[command(
    name = "mkbo",
    version,
    about = "Bayesian optimisation with pre-trained free kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ring benchmark suite (all strategies, EI and UCB).
    Simulate {
        #[arg(long, default_value = "out/simulate")]
        out: PathBuf,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write summary.svg.
        #[arg(long)]
        plot: bool,
    },
    /// Pre-train a re-weighted SE kernel from an `x1,..,xn,y` CSV and print
    /// the kernel with its provenance as JSON.
    Pretrain {
        aux: PathBuf,
        /// Comma-separated SVM budgets.
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0, 10.0, 100.0, 1000.0])]
        c_grid: Vec<f64>,
        /// Comma-separated SE scales; defaults to 8 log-spaced values in [0.05, 2].
        #[arg(long, value_delimiter = ',')]
        sigma_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long)]
        no_normalize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the suite described by a JSON experiment config.
    BoRun {
        config: PathBuf,
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
        #[arg(long)]
        plot: bool,
    },
    /// Render summary.csv as an SVG line chart.
    Plot {
        summary: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "best so far")]
        title: String,
    },
    /// Start the HTTP session service.
    Serve {
        #[arg(long, env = "DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, env = "BIND_ADDR", default_value = "127.0.0.1:8080")]
        bind: std::net::SocketAddr,
        /// Static console build served under /console.
        #[arg(long, env = "CONSOLE_DIR")]
        console: Option<PathBuf>,
    },
}

fn finish_suite(result: &SuiteResult, out: &Path, plot: bool) -> anyhow::Result<bool> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_outputs(result, out)?;
    if plot {
        mkbo::plot::write_svg(&result.summary, "best so far", &out.join("summary.svg"))?;
    }
    for run in &result.runs {
        let mut finals = run.final_bests();
        finals.sort_by(f64::total_cmp);
        if finals.is_empty() {
            println!("{:<28} no completed repetitions", run.label());
        } else {
            println!(
                "{:<28} final median {:.4}  ({} reps)",
                run.label(),
                mkbo::suite::quantile(&finals, 0.5),
                finals.len()
            );
        }
    }
    for m in result.manifest.methods.iter().filter(|m| !m.failures.is_empty()) {
        for f in &m.failures {
            eprintln!("{}: repetition {:?}: {}", m.method, f.repetition, f.error);
        }
    }
    println!("wrote {}", out.display());
    Ok(result.manifest.ok)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate {
            out,
            repetitions,
            iterations,
            seed,
            plot,
        } => {
            let mut cfg = ExperimentConfig::simulated();
            if let Some(r) = repetitions {
                cfg.repetitions = r;
            }
            if let Some(t) = iterations {
                cfg.iterations = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            finish_suite(&run_suite(&cfg)?, &out, plot)
        }
        Command::BoRun { config, out, plot } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            finish_suite(&run_suite(&cfg)?, &out, plot)
        }
        Command::Pretrain {
            aux,
            c_grid,
            sigma_grid,
            epsilon,
            no_normalize,
            out,
        } => {
            let raw = load_dataset_csv(&aux)?;
            let (unit, map) = normalize_unit_box(&raw)?;
            let sigma_grid = sigma_grid.unwrap_or_else(|| logspace(0.05, 2.0, 8));
            let base = KernelSpec::se(sigma_grid[0])?;
            let cfg = PretrainConfig {
                c_grid,
                scale_grid: sigma_grid,
                epsilon,
                normalize: !no_normalize,
                gp_scale: None,
            };
            let (kernel, provenance) = pretrain_kernel(&unit, &base, &cfg)?;
            let doc = serde_json::json!({
                "provenance": provenance,
                "map": map,
                "kernel": kernel,
            });
            let text = serde_json::to_string_pretty(&doc)? + "\n";
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Plot { summary, out, title } => {
            let rows = read_summary_csv(&summary)?;
            let out = out.unwrap_or_else(|| summary.with_extension("svg"));
            mkbo::plot::write_svg(&rows, &title, &out)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Serve {
            data_dir,
            bind,
            console,
        } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(ServiceConfig {
                data_dir,
                bind,
                console,
            }))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
