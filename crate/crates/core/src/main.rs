use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualphase::cqi::train_alternating;
use dualphase::harness::config::ConfigFile;
use dualphase::harness::metrics::{fmt_sig, mean_stderr};
use dualphase::harness::scenario::{scenario_group, CASES_PER_GROUP};
use dualphase::harness::sweep::{rows_to_csv, run_sweep, sweep_rows, with_workers};
use dualphase::harness::{build_fig6_scenarios, records_to_csv, run_scenario};
use dualphase::{Error, Result};

#[derive(Parser)]
#[command(version, about = "OFDM block-fading link simulator with coarse-to-fine adaptation and learned CQI feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and dump every trial record as CSV.
    Simulate(Common),
    /// Run the configured grid and write one CSV row per cell.
    Sweep(Common),
    /// Train a CQI policy; writes the policy file and a training log CSV next to it.
    TrainCqi(Common),
    /// Write the 24 fixed-SNR channel scenarios as config files into a directory.
    Scenarios(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed (the training seed for train-cqi).
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; simulate and sweep print to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ConfigFile> {
        let mut cfg = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        if let Some(seed) = self.seed {
            cfg.scenario.seed = seed;
        }
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate(c: &Common) -> Result<()> {
    let s = c.config()?.scenario()?;
    let records = with_workers(c.workers, || run_scenario(&s))?;
    let mse: Vec<f64> = records.iter().map(|r| r.mse).collect();
    let psnr: Vec<f64> = records.iter().map(|r| r.psnr_db).collect();
    let ((m, se), (p, pse)) = (mean_stderr(&mse), mean_stderr(&psnr));
    eprintln!(
        "{} trials: mean mse {} (se {}), mean psnr {} dB (se {})",
        records.len(),
        fmt_sig(m, 6),
        fmt_sig(se, 6),
        fmt_sig(p, 6),
        fmt_sig(pse, 6)
    );
    emit(c.out.as_deref(), &records_to_csv(&records))
}

fn sweep(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let (base, grid) = (cfg.scenario()?, cfg.sweep_grid()?);
    match &c.out {
        Some(p) => run_sweep(&base, &grid, p, c.workers).map(|_| ()),
        None => emit(None, &with_workers(c.workers, || sweep_rows(&base, &grid).map(|r| rows_to_csv(&r)))?),
    }
}

fn train(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let s = cfg.scenario()?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("cqi_policy.bin"));
    let log_path = out.with_extension("csv");
    match with_workers(c.workers, || train_alternating(&s.cqi, &s, s.seed)) {
        Ok(t) => {
            t.policy.save(&out)?;
            write(&log_path, &t.log.to_csv())?;
            eprintln!(
                "{} updates, {} target syncs; policy {} log {}",
                t.updates,
                t.syncs,
                out.display(),
                log_path.display()
            );
            Ok(())
        }
        Err(e) => {
            if let Error::Diverged { log_csv, .. } = &e {
                write(&log_path, log_csv)?;
            }
            Err(e)
        }
    }
}

fn scenarios(c: &Common) -> Result<()> {
    let base = c.config()?.scenario()?;
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("scenarios"));
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    for (i, s) in build_fig6_scenarios(&base).iter().enumerate() {
        let name = format!("group{}_case{}.toml", scenario_group(i) + 1, i % CASES_PER_GROUP + 1);
        write(&dir.join(&name), &ConfigFile::from_scenario(s).to_toml()?)?;
        println!("{}", dir.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Sweep(c) => sweep(c),
        Command::TrainCqi(c) => train(c),
        Command::Scenarios(c) => scenarios(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
