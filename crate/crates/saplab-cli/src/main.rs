//! Command-line front end: every subcommand reads one JSON config and writes
//! its artifacts under an output directory, so whole experiments replay from
//! a config file and a seed.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use saplab::attacks::save_dump;
use saplab::harness::{
    emit_report, load_report, make_dataset, nearest_anchor_accuracy, reproduce_erratum,
    run_experiment, save_dataset, CellReport, EvalReport, ExperimentConfig,
};
use saplab::mlp::{accuracy, init_network, train, Checkpoint, CheckpointMeta};
use saplab::rng::{self, domain};

#[derive(Parser)]
#[command(name = "saplab", version, about = "Stochastic activation pruning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config JSON (an existing report JSON for `report`).
    config: PathBuf,
    /// Replaces the config's global seed and re-derives the dataset seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's output_dir, then "out").
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and save it.
    GenData(CommonArgs),
    /// Train the model and save a checkpoint.
    Train(CommonArgs),
    /// Run every cell in the config and write the report.
    Eval(CommonArgs),
    /// Run the attacked cells and dump their adversarial examples.
    Attack(CommonArgs),
    /// Rebuild the fixed erratum grid from the global seed and write the
    /// report with its findings.
    ReproduceErratum(CommonArgs),
    /// Re-emit an existing report JSON as canonical JSON plus CSV.
    Report(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.global_seed = seed;
        cfg.dataset_seed = rng::derive_seed(&[seed, domain::DATASET]);
    }
    Ok(cfg)
}

fn out_dir(args: &CommonArgs, cfg: Option<&ExperimentConfig>) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn print_cell(cell: &CellReport) {
    let mut line = format!(
        "cell {}: single-pass {:.3} averaged {:.3}",
        cell.id, cell.accuracy_single_pass.rate, cell.accuracy_averaged.rate
    );
    if let Some(u) = &cell.untargeted {
        line += &format!(
            " | untargeted success {:.3} adv accuracy {:.3}",
            u.success.rate, u.adv_accuracy.rate
        );
    }
    if let Some(t) = &cell.targeted {
        line += &format!(" | targeted success {:.3}", t.success.rate);
    }
    if let Some(err) = &cell.error {
        line += &format!(" | FAILED: {err}");
    }
    println!("{line}");
}

fn print_report(report: &EvalReport) {
    println!(
        "model: train accuracy {:.3}, test accuracy {:.3}",
        report.model.train_accuracy, report.model.test_accuracy
    );
    for cell in &report.cells {
        print_cell(cell);
    }
    for f in &report.findings {
        println!(
            "finding {}: {} ({})",
            f.name,
            if f.pass { "pass" } else { "fail" },
            f.detail
        );
    }
}

fn gen_data(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let dir = out_dir(args, Some(&cfg));
    std::fs::create_dir_all(&dir)?;
    let data = make_dataset(cfg.dataset_seed, &cfg.dataset)?;
    let path = dir.join("dataset.sapd");
    save_dataset(&data, &path)?;
    println!(
        "wrote {} ({} train / {} test, nearest-anchor accuracy {:.4})",
        path.display(),
        data.train.xs.len(),
        data.test.xs.len(),
        nearest_anchor_accuracy(&data.anchors, &data.test)
    );
    Ok(())
}

fn train_cmd(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let dir = out_dir(args, Some(&cfg));
    std::fs::create_dir_all(&dir)?;
    let data = make_dataset(cfg.dataset_seed, &cfg.dataset)?;
    let mut net = init_network(&cfg.model)?;
    let log = train(&mut net, &data.train.xs, &data.train.ys, &cfg.train)?;
    let meta = CheckpointMeta {
        shuffle_seed: cfg.train.shuffle_seed,
        learning_rate: cfg.train.learning_rate,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        final_epoch_loss: *log.epoch_loss.last().expect("at least one epoch"),
        train_accuracy: accuracy(&net, &data.train.xs, &data.train.ys)?,
        test_accuracy: accuracy(&net, &data.test.xs, &data.test.ys)?,
    };
    let path = dir.join("checkpoint.json");
    let checkpoint = Checkpoint::from_network(&net, cfg.model.clone(), meta);
    checkpoint.save(&path)?;
    println!(
        "wrote {} (train accuracy {:.4}, test accuracy {:.4}, final loss {:.6})",
        path.display(),
        checkpoint.metadata.train_accuracy,
        checkpoint.metadata.test_accuracy,
        checkpoint.metadata.final_epoch_loss
    );
    Ok(())
}

fn eval_cmd(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let dir = out_dir(args, Some(&cfg));
    let (report, _) = run_experiment(&cfg)?;
    let (json_path, csv_path) = emit_report(&report, &dir, "report")?;
    print_report(&report);
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn attack_cmd(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let dir = out_dir(args, Some(&cfg));
    std::fs::create_dir_all(&dir)?;
    let (report, artifacts) = run_experiment(&cfg)?;
    if artifacts.adv_sets.is_empty() {
        anyhow::bail!("no cell in the config carries an attack");
    }
    for cell in &report.cells {
        if cell.untargeted.is_some() || cell.targeted.is_some() {
            print_cell(cell);
        }
    }
    for (key, set) in &artifacts.adv_sets {
        let path = dir.join(format!("{}.sapx", key.replace('/', "_")));
        save_dump(&path, &set.x_adv, &set.true_labels, &set.targets)?;
        println!("wrote {} ({} examples)", path.display(), set.x_adv.len());
    }
    Ok(())
}

fn reproduce_cmd(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let dir = out_dir(args, Some(&cfg));
    let (report, _) = reproduce_erratum(&cfg)?;
    let (json_path, csv_path) = emit_report(&report, &dir, "erratum_report")?;
    print_report(&report);
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn report_cmd(args: &CommonArgs) -> Result<()> {
    let report = load_report(&args.config)?;
    let dir = out_dir(args, None);
    let stem = args
        .config
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    let (json_path, csv_path) = emit_report(&report, &dir, stem)?;
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => train_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Attack(args) => attack_cmd(args),
        Command::ReproduceErratum(args) => reproduce_cmd(args),
        Command::Report(args) => report_cmd(args),
    }
}
