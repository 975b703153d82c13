use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use betaweighter::data::{synth_domains, write_idx_images, write_idx_labels, ImageSet};
use betaweighter::harness::{run_experiment, ExperimentConfig, MetricsReport};
use betaweighter::ndmath::RandomStream;

#[derive(Parser)]
#[command(name = "betaweighter", version, about = "Meta-learned instance weighting for self-supervised pre-training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method on the mixed-domain split and write metrics.
    Run(RunArgs),
    /// Write synthetic domains as IDX files usable with `--data-dir`.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// Training images per domain.
        #[arg(long, default_value_t = 8000)]
        train: usize,
        #[arg(long, default_value_t = 2000)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// INI-style `key = value` file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bdw, dw, l2rw, nn, none or oracle.
    #[arg(long)]
    method: Option<String>,
    /// vae or rotation.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// Inner SGD step.
    #[arg(long)]
    alpha: Option<String>,
    /// Outer step for the weights.
    #[arg(long)]
    eta: Option<String>,
    /// Pruning threshold on the weight.
    #[arg(long)]
    lambda: Option<String>,
    /// Pruning mass threshold.
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Directory with mnist/, fashion/ and kmnist/ IDX files; synthetic domains otherwise.
    #[arg(long)]
    data_dir: Option<String>,
    /// Directory for metrics.jsonl, summary.csv and weights.csv.
    #[arg(long)]
    out: Option<String>,
    /// Domain name used as the target.
    #[arg(long)]
    target: Option<String>,
    /// Any other configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build_config(args: &RunArgs) -> betaweighter::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_ini(&std::fs::read_to_string(path)?)?;
    }
    let flags = [
        ("method", &args.method),
        ("task", &args.task),
        ("epochs", &args.epochs),
        ("alpha", &args.alpha),
        ("eta", &args.eta),
        ("lambda", &args.lambda),
        ("rho", &args.rho),
        ("seed", &args.seed),
        ("data_dir", &args.data_dir),
        ("out", &args.out),
        ("target", &args.target),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| betaweighter::Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(report: &MetricsReport) {
    for (rec, secs) in report.epochs.iter().zip(&report.epoch_seconds) {
        let meta = rec.meta_loss.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into());
        let weights: Vec<String> = rec
            .domains
            .iter()
            .map(|d| match d.mean_weight {
                Some(w) => format!("{}={w:.3}/{}", d.name, d.active),
                None => format!("{}=-/{}", d.name, d.active),
            })
            .collect();
        println!(
            "epoch {:>3}  test {:.4}  meta {}  active {}  pruned {}  {}  {:.1}s",
            rec.epoch,
            rec.test_loss,
            meta,
            rec.active,
            rec.pruned,
            weights.join(" "),
            secs
        );
    }
}

fn to_bytes(set: &ImageSet) -> Vec<u8> {
    set.images().iter().map(|&v| (v * 255.0).round() as u8).collect()
}

fn gen_synthetic(out: &std::path::Path, train: usize, test: usize, seed: u64) -> betaweighter::Result<()> {
    let mut rng = RandomStream::new(seed, 7);
    let names = ["mnist", "fashion", "kmnist"];
    for (set, dir) in synth_domains(&mut rng, train + test).iter().zip(names) {
        let dir = out.join(dir);
        std::fs::create_dir_all(&dir)?;
        let labels = set.labels().expect("synthetic sets are labelled");
        for (range, images, label_file) in [
            (0..train, "train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            (train..train + test, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        ] {
            let part = set.select(&range.clone().collect::<Vec<_>>());
            write_idx_images(dir.join(images), part.len(), part.height(), part.width(), &to_bytes(&part))?;
            write_idx_labels(dir.join(label_file), &labels[range])?;
        }
        println!("wrote {} ({}) to {}", set.domain_name(0).unwrap_or("?"), train + test, dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => build_config(&args).and_then(|cfg| {
            let report = run_experiment(&cfg)?;
            print_summary(&report);
            if let Some(out) = &cfg.out {
                println!("report written to {}", out.display());
            }
            Ok(())
        }),
        Command::GenSynthetic { out, train, test, seed } => gen_synthetic(&out, train, test, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
