//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 no feasible model under the selection budgets.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use log::info;

use crate::config::{defaults_toml, parse_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::experiment::{
    calibrate, encode_range, load_split, mark_selection, quantize, sweep_grid, train_fp32, SweepContext, Workload, TEST_STREAM, TRAIN_STREAM,
};
use crate::io::{load_model, read_report, save_model, write_report};
use crate::metrics::{energy_estimate, memory_footprint, model_inventory, EnergyInput, OperandBits};
use crate::quant::Scheme;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tinysnn",
    version,
    about = "Train, quantize, evaluate and select spiking network models",
    after_long_help = config_help()
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn config_help() -> String {
    format!(
        "Experiment config files are flat TOML; unknown keys are errors. \
         Verbosity is set by TINYSNN_LOG (error, info, debug).\n\nDefaults:\n\n{}",
        defaults_toml()
    )
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an fp32 model with STDP and save it.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label neurons and measure test accuracy of a saved model.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Post-training quantization of a saved model with the config's formats.
    Ptq {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train with in-training quantization at the config's formats.
    Itq {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explore the quantization grid and write the candidate report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Reuse a trained fp32 model instead of training one.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Parallel candidates; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Score a report at `mu` and mark the selected row.
    Select {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        mem_budget: Option<u64>,
        /// Inference energy budget in Joules.
        #[arg(long)]
        energy_budget: Option<f64>,
        /// Output path; defaults to rewriting the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the spike raster of one image as `step,input` events.
    EncodeDemo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Read from the test split instead of the training split.
        #[arg(long)]
        test: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoFeasibleModel(_) => EXIT_INFEASIBLE,
        Error::Config(_) | Error::InvalidFormat(_) | Error::InvalidParameter(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn config(path: &PathBuf, jobs: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(j) = jobs {
        cfg.jobs = j.max(1);
    }
    Ok(cfg)
}

/// Parses `argv` and runs the subcommand; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config: c, out } => {
            let cfg = config(&c, None)?;
            let work = Workload::prepare(&cfg)?;
            let (model, ops) = train_fp32(&cfg, &work)?;
            info!("training ops: {ops:?}");
            save_model(&model, &out)?;
            println!("saved {}", out.display());
        }
        Command::Eval { config: c, model } => {
            let cfg = config(&c, None)?;
            let mut m = load_model(&model)?;
            let work = Workload::prepare(&cfg)?;
            let outcome = work.evaluator(cfg.jobs).evaluate(&mut m)?;
            let e = energy_estimate(
                EnergyInput::Ops(&outcome.test_ops, OperandBits::of(&m.formats)),
                &cfg.energy_model(),
            )?;
            println!(
                "accuracy {:.4} ({} test samples), memory {} bits, inference energy {e:e} J",
                outcome.accuracy,
                work.test.len(),
                memory_footprint(&model_inventory(&m))
            );
        }
        Command::Ptq { config: c, model, out } => {
            let cfg = config(&c, None)?;
            let mut q = cfg.quant_config();
            q.scheme = Scheme::Ptq;
            let fp32 = load_model(&model)?;
            let m = crate::quant::apply_ptq(&fp32, &q, cfg.seed)?;
            save_model(&m, &out)?;
            println!("saved {}", out.display());
        }
        Command::Itq { config: c, out } => {
            let cfg = config(&c, None)?;
            let mut q = cfg.quant_config();
            q.scheme = Scheme::Itq;
            let work = Workload::prepare(&cfg)?;
            let fp32 = crate::experiment::initial_model(&cfg, work.num_inputs)?;
            let (m, ops) = quantize(&cfg, &work, &fp32, &Default::default(), &q)?;
            info!("training ops: {ops:?}");
            save_model(&m, &out)?;
            println!("saved {}", out.display());
        }
        Command::Sweep {
            config: c,
            report,
            model,
            jobs,
        } => {
            let cfg = config(&c, jobs)?;
            let existing = if report.exists() { read_report(&report)? } else { Vec::new() };
            let work = Workload::prepare(&cfg)?;
            let (fp32, ops) = match model {
                Some(p) => {
                    let m = load_model(p)?;
                    // training work of a loaded model is replayed for pricing only
                    let (_, ops) = train_fp32(&cfg, &work)?;
                    (m, ops)
                }
                None => train_fp32(&cfg, &work)?,
            };
            let ranges = calibrate(&cfg, &work, &fp32)?;
            info!("ranges: {ranges:?}");
            let grid = sweep_grid(&cfg, &ranges)?;
            let ctx = SweepContext {
                cfg: &cfg,
                work: &work,
                fp32: &fp32,
                fp32_train_ops: ops,
            };
            let mut rows = ctx.run(&grid, existing, cfg.jobs)?;
            let mu = cfg.mu.first().copied().unwrap_or(0.0);
            for &m in &cfg.mu {
                let mut probe = rows.clone();
                match mark_selection(&mut probe, m, cfg.mem_budget_bits, cfg.energy_budget_j) {
                    Ok(i) => info!("mu={m}: selected row {i}"),
                    Err(e) => info!("mu={m}: {e}"),
                }
            }
            let sel = mark_selection(&mut rows, mu, cfg.mem_budget_bits, cfg.energy_budget_j);
            write_report(&rows, &report)?;
            println!("wrote {} rows to {}", rows.len(), report.display());
            sel?;
        }
        Command::Select {
            report,
            mu,
            mem_budget,
            energy_budget,
            out,
        } => {
            let mut rows = read_report(&report)?;
            let i = mark_selection(&mut rows, mu, mem_budget, energy_budget)?;
            write_report(&rows, out.as_ref().unwrap_or(&report))?;
            let r = &rows[i];
            let t = r.config.tags();
            println!(
                "selected row {}: {} {} w={} vmem={} vth={} acc={} mem_bits={} reward={}",
                i + 1,
                r.config.scheme,
                r.config.rounding.as_str(),
                t.weights,
                t.v_mem,
                t.v_thresh,
                r.acc_q,
                r.mem_bits,
                r.reward
            );
        }
        Command::EncodeDemo {
            config: c,
            index,
            test,
            out,
        } => {
            let mut cfg = config(&c, None)?;
            cfg.jobs = 1;
            let ds = load_split(&cfg, !test)?;
            let base = if test { TEST_STREAM } else { TRAIN_STREAM };
            let (train, label) = encode_range(&cfg, &ds, index..index + 1, base)?.remove(0);
            let mut text = String::from("step,input\n");
            for t in 0..train.num_steps() {
                for &i in train.active(t) {
                    text.push_str(&format!("{t},{i}\n"));
                }
            }
            match out {
                Some(p) => fs::write(p, text)?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
            eprintln!(
                "sample {index} (label {label}): {} spikes over {} steps",
                train.total_spikes(),
                train.num_steps()
            );
        }
    }
    Ok(())
}
