use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use pottsadm::experiments::{
    run_compare, run_landscape, run_sweep, run_synth, run_train, CompareConfig, LandscapeConfig, SuiteConfig,
    TrainRunConfig,
};
use pottsadm::io::read_labeling;
use pottsadm::metrics::evaluate;

#[derive(Parser)]
#[command(name = "pottsadm", version, about = "Potts-regularized weak supervision: solvers, trainers and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; omitted keys take defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.lambda=2` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded blob suite (images, ground truth, scribbles, chains).
    Synth(RunArgs),
    /// Grid and dense cost curves of step segmentations on 1D staircases.
    Landscape(RunArgs),
    /// Train one model on one image and scribble file.
    Train(RunArgs),
    /// GD vs ADM from a shared phase-1 model on the blob suite.
    Compare(RunArgs),
    /// Repeat the comparison with scribbles shortened to each keep ratio.
    ShortenSweep(RunArgs),
    /// Score a predicted labeling against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 2)]
        num_labels: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn parse_scalar(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let Some((key, raw)) = assignment.split_once('=') else {
        bail!("override `{assignment}` is not KEY=VALUE");
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("`{part}` in `{key}` is not a table"),
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw.trim()));
    Ok(())
}

fn load<T: DeserializeOwned>(args: &RunArgs) -> Result<T> {
    let mut root = match &args.config {
        Some(p) => fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))?
            .parse::<toml::Table>()
            .with_context(|| format!("parsing {}", p.display()))?,
        None => toml::Table::new(),
    };
    for o in &args.overrides {
        apply_override(&mut root, o)?;
    }
    let source = args.config.clone().unwrap_or_else(|| PathBuf::from("<flags>"));
    Ok(pottsadm::experiments::parse_config(&toml::to_string(&root)?, &source)?)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn out_dir(args: &RunArgs) -> &Path {
    &args.out
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth(args) => {
            let cfg: SuiteConfig = load(&args)?;
            let n = run_synth(out_dir(&args), &cfg)?;
            println!("wrote {n} scenes to {}", args.out.join("scenes").display());
        }
        Command::Landscape(args) => {
            let cfg: LandscapeConfig = load(&args)?;
            let outcomes = run_landscape(out_dir(&args), &cfg)?;
            let at_dominant = outcomes.iter().filter(|o| o.argmin_at_dominant()).count();
            let smoother = outcomes.iter().filter(|o| o.dense_smoother()).count();
            println!(
                "{} scenes: grid argmin at dominant step on {at_dominant}, dense curve no bumpier on {smoother}",
                outcomes.len()
            );
        }
        Command::Train(args) => {
            let cfg: TrainRunConfig = load(&args)?;
            match run_train(out_dir(&args), &cfg)? {
                Some(report) => print_json(&report)?,
                None => println!("trained; outputs in {}", args.out.display()),
            }
        }
        Command::Compare(args) => {
            let cfg: CompareConfig = load(&args)?;
            print_json(&run_compare(out_dir(&args), &cfg)?)?;
        }
        Command::ShortenSweep(args) => {
            let cfg: CompareConfig = load(&args)?;
            let rows = run_sweep(out_dir(&args), &cfg)?;
            let mut buf = Vec::new();
            pottsadm::experiments::write_sweep(&mut buf, &rows)?;
            print!("{}", String::from_utf8(buf)?);
        }
        Command::Eval { pred, gt, num_labels, out } => {
            let p = read_labeling(&pred, num_labels)?;
            let g = read_labeling(&gt, num_labels)?;
            let json = serde_json::to_string_pretty(&evaluate(&p, &g)?)?;
            match out {
                Some(path) => fs::write(path, json)?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_build_nested_tables() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "train.sgd.learning_rate=0.01").unwrap();
        apply_override(&mut t, "train.mode=gd").unwrap();
        apply_override(&mut t, "suite.labels=[2,3]").unwrap();
        let cfg: CompareConfig = pottsadm::experiments::parse_config(&toml::to_string(&t).unwrap(), Path::new("t")).unwrap();
        assert_eq!(cfg.train.sgd.learning_rate, 0.01);
        assert_eq!(cfg.suite.labels, vec![2, 3]);
        assert!(apply_override(&mut t, "novalue").is_err());
    }
}
