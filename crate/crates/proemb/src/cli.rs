//! The `proemb` command line.
//!
//! Every config key can be given as a `--key value` (or `--key=value`) flag
//! on `generate`, `estimate`, `run` and `sweep`; dashes and underscores in
//! key names are interchangeable. The master seed resolves as config file,
//! then `PROEMB_SEED`, then `--seed`.

use crate::config::{self, SEED_ENV};
use crate::error::{Error, Result};
use crate::formats::{self, ProxyFormat, TableFormat, LOCK_FILE};
use clap::{Args, Parser, Subcommand};
use proemb_core::experiment::{
    estimate_detailed, generate_panel, run_experiment, sweep_embedding_dim, ExperimentConfig, Method,
};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "proemb", version, about = "Contagion-effect estimation under latent homophily")]
#[command(after_help = config_keys_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file; omitted keys keep their defaults.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate panels and write edge lists, node records and proxies.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory; run `k` goes to `<out>/run-k`.
        #[arg(long)]
        out: PathBuf,
        /// Only this run instead of every configured run.
        #[arg(long)]
        run: Option<usize>,
        /// Proxy layout: `dense` or `sparse`.
        #[arg(long, default_value = "dense")]
        proxies: String,
    },
    /// Run one method on one panel.
    Estimate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Method tag such as `tsls`, `t-gb` or `pe-gb`.
        #[arg(long)]
        method: String,
        /// Simulated run to estimate on, when no `--panel` is given.
        #[arg(long, default_value_t = 0)]
        run: usize,
        /// Read the panel from a directory written by `generate`.
        #[arg(long)]
        panel: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the trained ProEmb model and its training trace.
        #[arg(long)]
        save_model: bool,
    },
    /// Run every configured method over every run and tabulate RMSE.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain ProEmb across embedding dimensions on the same panels.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated dimensions; defaults to the config's `sweep_dims`.
        #[arg(long)]
        dims: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render a saved `table.json`.
    Report {
        /// Path of a `table.json`.
        table: PathBuf,
        /// `json`, `csv` or `markdown`.
        #[arg(long, default_value = "markdown")]
        format: String,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config_keys_help() -> String {
    let keys: Vec<String> = ExperimentConfig::KEYS
        .iter()
        .map(|k| format!("--{}", k.replace('_', "-")))
        .collect();
    format!(
        "Config overrides (generate, estimate, run, sweep):\n  {}\n\nThe seed resolves as config file < {SEED_ENV} < --seed.",
        keys.join(" ")
    )
}

/// Splits config-key flags out of `args` (program name first). Returns the
/// remaining arguments for clap and the `(key, value)` overrides in order.
pub fn split_overrides<I, T>(args: I) -> Result<(Vec<OsString>, Vec<(String, String)>)>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter().map(Into::into);
    while let Some(arg) = it.next() {
        let Some(flag) = arg.to_str().and_then(|s| s.strip_prefix("--")) else {
            rest.push(arg);
            continue;
        };
        if flag.is_empty() {
            rest.push(arg);
            rest.extend(it.by_ref());
            break;
        }
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (flag, None),
        };
        let key = name.replace('-', "_");
        if !ExperimentConfig::KEYS.contains(&key.as_str()) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .and_then(|v| v.into_string().ok())
                .ok_or_else(|| Error::Usage(format!("--{name} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn resolve(args: &ConfigArgs, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let env = std::env::var(SEED_ENV).ok();
    config::resolve(args.config.as_deref(), env.as_deref(), overrides)
}

fn write_lock(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    formats::write_text(&dir.join(LOCK_FILE), &config::render(config))
}

/// Parses `args` (program name first) and executes the command.
pub fn main_with_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let (rest, overrides) = split_overrides(args)?;
    let cli = Cli::try_parse_from(rest).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            e.exit()
        }
        _ => Error::Usage(e.to_string()),
    })?;
    execute(cli.command, &overrides)
}

pub fn execute(command: Command, overrides: &[(String, String)]) -> Result<()> {
    match command {
        Command::Generate {
            config,
            out,
            run,
            proxies,
        } => {
            let config = resolve(&config, overrides)?;
            let format: ProxyFormat = proxies.parse()?;
            let runs: Vec<usize> = match run {
                Some(r) => vec![r],
                None => (0..config.runs).collect(),
            };
            write_lock(&out, &config)?;
            for r in runs {
                let panel = generate_panel(&config, r)?;
                let dir = out.join(format!("run-{r}"));
                formats::write_panel_dir(&dir, &panel, format)?;
                println!("{}\t{}", dir.display(), panel.digest());
            }
        }
        Command::Estimate {
            config,
            method,
            run,
            panel,
            out,
            save_model,
        } => {
            let config = resolve(&config, overrides)?;
            let method: Method = method.parse()?;
            let panel = match &panel {
                Some(dir) => formats::read_panel_dir(dir, &config)?,
                None => generate_panel(&config, run)?,
            };
            let detailed = estimate_detailed(&config, &panel, run, method)?;
            write_lock(&out, &config)?;
            formats::write_estimate(&out, &detailed.report)?;
            if let (true, Some(emb)) = (save_model, &detailed.embedding) {
                let ckpt = formats::Checkpoint {
                    model: emb.model.clone(),
                    standardizer: emb.standardizer.clone(),
                };
                let sidecar = formats::Sidecar {
                    d: emb.model.latent_dim(),
                    vocab: panel.proxies.vocab(),
                    lambda_rb: config.lambda_rb,
                    epochs: config.epochs,
                    seed: config.seed,
                    loss_trace: emb.report.trace.clone(),
                };
                formats::save_checkpoint(&out, &ckpt, &sidecar)?;
            }
            println!("{method}\t{}", detailed.report.ace_hat);
        }
        Command::Run { config, out } => {
            let config = resolve(&config, overrides)?;
            write_lock(&out, &config)?;
            let table = run_experiment(&config)?;
            formats::write_table_set(&out, &table)?;
            print!("{}", formats::table_markdown(&table));
        }
        Command::Sweep { config, dims, out } => {
            let mut config = resolve(&config, overrides)?;
            if let Some(d) = dims {
                config.set("sweep_dims", &d)?;
                config.validate()?;
            }
            write_lock(&out, &config)?;
            let table = sweep_embedding_dim(&config, &config.sweep_dims)?;
            formats::write_table_set(&out, &table)?;
            print!("{}", formats::table_markdown(&table));
        }
        Command::Report { table, format, out } => {
            if !overrides.is_empty() {
                return Err(Error::Usage("report takes no config overrides".into()));
            }
            let format: TableFormat = format.parse()?;
            let rendered = formats::render_table(&formats::read_table(&table)?, format);
            match out {
                Some(path) => formats::write_text(&path, &rendered)?,
                None => print!("{rendered}"),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[OsString]) -> Vec<&str> {
        v.iter().map(|s| s.to_str().unwrap()).collect()
    }

    #[test]
    fn config_flags_are_split_out() {
        let (rest, ov) = split_overrides([
            "proemb", "run", "--out", "x", "--runs", "3", "--beta-u-mean=5", "--lambda_rb", "0",
        ])
        .unwrap();
        assert_eq!(strings(&rest), ["proemb", "run", "--out", "x"]);
        assert_eq!(
            ov,
            [
                ("runs".to_string(), "3".to_string()),
                ("beta_u_mean".into(), "5".into()),
                ("lambda_rb".into(), "0".into())
            ]
        );
    }

    #[test]
    fn negative_values_and_terminator() {
        let (rest, ov) = split_overrides(["p", "run", "--tau", "-1", "--", "--n", "3"]).unwrap();
        assert_eq!(ov, [("tau".to_string(), "-1".to_string())]);
        assert_eq!(strings(&rest), ["p", "run", "--", "--n", "3"]);
        assert!(split_overrides(["p", "run", "--n"]).is_err());
    }

    #[test]
    fn parses_every_subcommand() {
        for args in [
            vec!["p", "generate", "--out", "o", "--proxies", "sparse"],
            vec!["p", "estimate", "--method", "tsls", "--out", "o"],
            vec!["p", "run", "-c", "f.cfg", "--out", "o"],
            vec!["p", "sweep", "--dims", "20,100", "--out", "o"],
            vec!["p", "report", "t.json", "--format", "csv"],
        ] {
            Cli::try_parse_from(&args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert!(matches!(
            main_with_args(["p", "run", "--out", "o", "--bogus", "1"]),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            main_with_args(["p", "report", "t.json", "--runs", "2"]),
            Err(Error::Usage(_))
        ));
    }
}
