use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gradleak::attack::Method;
use gradleak::harness::{
    pretrain_architecture, run_experiment, save_weights, write_loss_curve, ArchitectureSelection, ExperimentConfig,
    ExperimentOutcome, PretrainConfig, CATALOG,
};
use gradleak::metrics::c_metric_from_deficiencies;

#[derive(Parser)]
#[command(
    name = "gradleak",
    version,
    about = "Gradient inversion attacks and rank-based security audits for small CNNs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank-deficiency audit and c(M) of each architecture.
    Audit(Common),
    /// Reconstruct target images from their gradients.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of rgap, hybrid, dlg, cosinetv.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
    },
    /// Train the configured architectures and save weights and loss curves.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        /// Train for the full 300 epochs.
        #[arg(long, conflicts_with = "epochs")]
        full_epochs: bool,
    },
    /// List the reference architectures.
    Catalog {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Architecture name(s), overriding the config; `all` for the whole catalog.
    #[arg(short, long, value_delimiter = ',')]
    arch: Vec<String>,
    /// Target image indices, overriding the config.
    #[arg(short, long, value_delimiter = ',')]
    images: Vec<usize>,
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding the config.
    #[arg(short, long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None if self.arch.is_empty() => bail!("give --config or --arch"),
            None => ExperimentConfig::for_architecture(&self.arch[0]),
        };
        if !self.arch.is_empty() {
            cfg.architecture = ArchitectureSelection::List(self.arch.clone());
        }
        if !self.images.is_empty() {
            cfg.images = self.images.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summarize(outcome: &ExperimentOutcome) {
    for a in &outcome.audits {
        let rd: Vec<String> = a.audit.deficiencies().iter().map(i64::to_string).collect();
        println!(
            "{:<10} rd=({}) c(M)={:.1} (rounded {})",
            a.architecture,
            rd.join(", "),
            a.audit.c_metric.exact,
            a.audit.c_metric.rounded
        );
    }
    for r in &outcome.runs {
        match &r.result {
            Ok(rep) => {
                let s = rep.score.expect("scored");
                println!(
                    "{:<10} img {:<3} {:<8} mse {:.6} psnr {:.2} ({:.1}s)",
                    r.architecture,
                    r.image_index,
                    r.method.name(),
                    s.mse,
                    s.psnr,
                    rep.wall_time_secs
                );
            }
            Err(e) => println!(
                "{:<10} img {:<3} {:<8} error: {e}",
                r.architecture,
                r.image_index,
                r.method.name()
            ),
        }
    }
    for (arch, e) in &outcome.errors {
        println!("{arch:<10} error: {e}");
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Catalog { json } => {
            let rows: Vec<serde_json::Value> = CATALOG
                .iter()
                .map(|e| {
                    serde_json::json!({
                        "name": e.name,
                        "conv": e.conv,
                        "fc_inputs": e.fc_inputs,
                        "rd": e.reference_rd,
                        "c_metric": c_metric_from_deficiencies(e.reference_rd).exact,
                    })
                })
                .collect();
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                for e in &CATALOG {
                    let conv: Vec<String> = e.conv.iter().map(|(k, c, s, p)| format!("{k},{c},{s},{p}")).collect();
                    println!(
                        "{:<8} conv [{}] fc {} rd {:?} c(M) {}",
                        e.name,
                        conv.join("; "),
                        e.fc_inputs,
                        e.reference_rd,
                        e.reference_c
                    );
                }
            }
            Ok(true)
        }
        Command::Audit(common) => {
            let mut cfg = common.load()?;
            cfg.methods.clear();
            cfg.output.audit = true;
            let outcome = run_experiment(&cfg, Some(&common.out))?;
            summarize(&outcome);
            Ok(outcome.failures() == 0)
        }
        Command::Attack { common, methods } => {
            let mut cfg = common.load()?;
            if !methods.is_empty() {
                cfg.methods = methods;
            }
            if cfg.methods.is_empty() {
                bail!("no methods to run; pass --methods or list them in the config");
            }
            let outcome = run_experiment(&cfg, Some(&common.out))?;
            summarize(&outcome);
            Ok(outcome.failures() == 0)
        }
        Command::Pretrain {
            common,
            epochs,
            full_epochs,
        } => {
            let mut cfg = common.load()?;
            let p = cfg.pretrain.get_or_insert_with(PretrainConfig::default);
            if let Some(e) = epochs {
                p.epochs = e;
            }
            if full_epochs {
                p.epochs = 300;
            }
            std::fs::create_dir_all(&common.out)?;
            let dataset = cfg.dataset.load()?;
            let targets = cfg
                .images
                .iter()
                .map(|&i| dataset.get(i))
                .collect::<gradleak::Result<Vec<_>>>()?;
            let exclude: Vec<&[f64]> = targets.iter().map(|r| r.pixels.as_slice()).collect();
            for (a, (name, spec)) in cfg.architecture.resolve()?.iter().enumerate() {
                let out = pretrain_architecture(&cfg, spec, a, &exclude)?;
                save_weights(&out.weights, common.out.join(format!("{name}_weights.json")))?;
                write_loss_curve(&out, common.out.join(format!("{name}_loss.csv")))?;
                for e in &out.curve {
                    let test = e.test_loss.map(|t| format!("{t:.4}")).unwrap_or_else(|| "-".into());
                    println!("{name:<10} epoch {:>3} train {:.4} test {test}", e.epoch, e.train_loss);
                }
            }
            Ok(true)
        }
    }
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
