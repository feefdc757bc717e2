use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use f0lab::corpus::format_snr;
use f0lab::experiment::{Cell, Experiment, ExperimentConfig, TrainingMode};
use f0lab::lstm::{InitKind, Optimizer};
use f0lab::metrics::{EvalReport, System};
use f0lab::Exec;

#[derive(Parser)]
#[command(name = "f0lab", version, about = "LSTM f0 detection in noisy speech")]
struct Cli {
    /// TOML file with experiment settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    /// Comma separated, e.g. `-5,0,5`.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    snr_levels: Option<Vec<f64>>,
    /// Comma separated subset of None, LSTM, LSTM-AA.
    #[arg(long, global = true, value_delimiter = ',')]
    systems: Option<Vec<System>>,
    /// Hidden sizes per layer, e.g. `64,64`.
    #[arg(long, global = true, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, global = true)]
    training_mode: Option<Mode>,
    #[arg(long, global = true)]
    n_train: Option<usize>,
    #[arg(long, global = true)]
    n_val: Option<usize>,
    #[arg(long, global = true)]
    n_test: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    #[arg(long, global = true)]
    optimizer: Option<Opt>,
    #[arg(long, global = true)]
    pretrain_learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pretrain_patience: Option<usize>,
    #[arg(long, global = true)]
    pretrain_max_epochs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Matched,
    Pooled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Opt {
    Sgd,
    Adam,
}

impl From<Opt> for Optimizer {
    fn from(o: Opt) -> Self {
        match o {
            Opt::Sgd => Optimizer::Sgd,
            Opt::Adam => Optimizer::adam(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Random,
    Aa,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the corpus and its features.
    GenCorpus,
    /// Train the auto-associative network on clean features.
    Pretrain,
    /// Train detector networks. Without filters, every configured cell.
    Train {
        #[arg(long, allow_negative_numbers = true)]
        snr: Option<f64>,
        #[arg(long)]
        init: Option<Init>,
    },
    /// Evaluate all systems on the test split.
    Eval,
    /// Rebuild tables and comparison curves from results on disk.
    Report,
    /// Per-frame f0 of one test utterance.
    Contour {
        #[arg(long)]
        utterance: String,
        #[arg(long, allow_negative_numbers = true)]
        snr: f64,
        #[arg(long, value_delimiter = ',')]
        contour_systems: Option<Vec<System>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The whole pipeline.
    RunAll,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::desk(),
    };
    let o = &cli.overrides;
    let mut changed = false;
    macro_rules! set {
        ($src:expr, $dst:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v.into();
                changed = true;
            }
        };
    }
    set!(o.output_dir, cfg.output_dir);
    if let Some(d) = &o.dataset_dir {
        cfg.dataset_dir = Some(d.clone());
        changed = true;
    }
    set!(o.master_seed, cfg.master_seed);
    set!(o.snr_levels, cfg.snr_levels);
    set!(o.systems, cfg.systems);
    set!(o.hidden, cfg.hidden);
    if let Some(m) = o.training_mode {
        cfg.training_mode = match m {
            Mode::Matched => TrainingMode::Matched,
            Mode::Pooled => TrainingMode::Pooled,
        };
        changed = true;
    }
    set!(o.n_train, cfg.corpus.n_train);
    set!(o.n_val, cfg.corpus.n_val);
    set!(o.n_test, cfg.corpus.n_test);
    set!(o.learning_rate, cfg.train.learning_rate);
    set!(o.patience, cfg.train.patience);
    set!(o.max_epochs, cfg.train.max_epochs);
    if let Some(opt) = o.optimizer {
        cfg.train.optimizer = opt.into();
        cfg.pretrain.optimizer = opt.into();
        changed = true;
    }
    set!(o.pretrain_learning_rate, cfg.pretrain.learning_rate);
    set!(o.pretrain_patience, cfg.pretrain.patience);
    set!(o.pretrain_max_epochs, cfg.pretrain.max_epochs);
    if changed {
        cfg.mark_modified();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_reports(reports: &[EvalReport]) {
    println!(
        "{:>7}  {:<8} {:>8} {:>8} {:>12}",
        "snr_db", "system", "VDE%", "DR%", "test_sse"
    );
    for r in reports {
        let sse = r.test_sse.map(|s| format!("{s:.3}")).unwrap_or_default();
        println!(
            "{:>7}  {:<8} {:>8.2} {:>8.2} {:>12}",
            format_snr(r.snr_db),
            r.system,
            r.vde_percent,
            r.dr_percent,
            sse
        );
    }
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli)?;
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let exp = Experiment::new(cfg.clone(), exec)?;
    match cli.command {
        Command::ShowConfig => {
            print!("{}", toml_string(&cfg)?);
        }
        Command::GenCorpus => {
            let ds = exp.prepare_corpus()?;
            println!(
                "corpus at {}: {} train, {} validation, {} test",
                cfg.dataset_dir().display(),
                ds.train.len(),
                ds.validation.len(),
                ds.test.len()
            );
        }
        Command::Pretrain => {
            let data = exp.prepare()?;
            let rec = exp.pretrain(&data)?;
            println!(
                "pretraining stopped after {} epochs ({:?}), best validation sse {:.4} at epoch {}",
                rec.epochs.len(),
                rec.stop_reason,
                rec.best_validation_sse,
                rec.best_epoch
            );
        }
        Command::Train { snr, init } => {
            let data = exp.prepare()?;
            let cells: Vec<Cell> = exp
                .cells()
                .into_iter()
                .filter(|c| snr.is_none_or(|s| c.snr_db == Some(s)))
                .filter(|c| match init {
                    None => true,
                    Some(Init::Random) => c.init == InitKind::Random,
                    Some(Init::Aa) => c.init == InitKind::AutoAssociative,
                })
                .collect();
            if cells.is_empty() {
                bail!("no configured training run matches the filters");
            }
            let mut ok = true;
            for c in &cells {
                match exp.train_cell(&data, c) {
                    Ok(r) => println!(
                        "{}: {} epochs, best validation sse {:.4} at epoch {}",
                        c.name(),
                        r.record.epochs.len(),
                        r.record.best_validation_sse,
                        r.record.best_epoch
                    ),
                    Err(e) => {
                        eprintln!("{}: {e}", c.name());
                        ok = false;
                    }
                }
            }
            return Ok(ok);
        }
        Command::Eval => {
            let data = exp.prepare()?;
            let (reports, failures) = exp.evaluate(&data);
            EvalReport::write_csv(&reports, &exp.path("reports/eval.csv"))
                .context("writing evaluation")?;
            print_reports(&reports);
            for f in &failures {
                eprintln!("{}: {}", f.cell, f.error);
            }
            return Ok(failures.is_empty());
        }
        Command::Report => {
            for p in exp.report_from_disk()? {
                println!("{}", exp.path(p).display());
            }
        }
        Command::Contour {
            utterance,
            snr,
            contour_systems,
            out,
        } => {
            let data = exp.prepare()?;
            let systems = contour_systems.unwrap_or_else(|| cfg.systems.clone());
            let out = out.unwrap_or_else(|| {
                exp.path(format!(
                    "reports/contour_{utterance}_snr_{}.csv",
                    format_snr(snr)
                ))
            });
            exp.export_contour(&data, &utterance, snr, &systems, &out)?;
            println!("{}", out.display());
        }
        Command::RunAll => {
            let m = exp.run_all()?;
            print_reports(&m.reports);
            for t in &m.timings {
                println!("{:<24} {:>9.1} s", t.stage, t.seconds);
            }
            for f in &m.incomplete {
                eprintln!("incomplete: {}: {}", f.cell, f.error);
            }
            return Ok(m.is_complete());
        }
    }
    Ok(true)
}

fn toml_string(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.mark_modified();
    Ok(c.snapshot())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
