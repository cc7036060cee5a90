//! Thin CLI over the longsim library: execute experiment configs, sweep a
//! parameter, compare stored conditions, regenerate charts, and audit
//! traces.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use longsim::config::{ExperimentConfig, TraceVerbosity};
use longsim::harness::{execute, plan, prepare_output_dir, read_records, replay};
use longsim::output::{aggregate_records, compare_csv, emit_outputs, write_charts};

#[derive(Parser)]
#[command(
    name = "longsim",
    version,
    about = "Closed-loop longitudinal driving simulator and perception-fault experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceArg {
    Full,
    MetricsOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment config (the built-in default matrix if none).
    Run {
        /// TOML config path; defaults to the built-in configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores). Outputs are identical either way.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Trace verbosity override.
        #[arg(long, value_enum)]
        trace: Option<TraceArg>,
        /// Print the resolved config as TOML and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Re-run a config while varying one numeric parameter over a range.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dotted config path, e.g. `sim.tracker.drop_after_missed`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Number of evenly spaced values, at least 2.
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate stored condition labels against each other.
    Compare {
        /// runs.jsonl produced by `run`.
        #[arg(long)]
        records: PathBuf,
        /// Condition labels to compare (two or more); default: all.
        labels: Vec<String>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate charts from stored records.
    Plot {
        #[arg(long)]
        records: PathBuf,
        /// Directory for the SVG files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics from one stored trace and audit them.
    Replay {
        trace: PathBuf,
        /// Compare against the stored record in this runs.jsonl.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Render a time-series chart of the trace to this SVG path.
        #[arg(long)]
        chart: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run_batch(cfg: &ExperimentConfig) -> Result<bool> {
    cfg.validate()?;
    prepare_output_dir(cfg).context("output directory is not writable")?;
    let started = Instant::now();
    let descriptors = plan(cfg)?;
    eprintln!(
        "planned {} runs ({} conditions x {} families x {})",
        descriptors.len(),
        cfg.conditions.len(),
        cfg.families.len(),
        cfg.runs_per_family
    );
    let records = execute(cfg, &descriptors);
    let elapsed = started.elapsed();
    let results = emit_outputs(cfg, &records)?;

    // wall-clock timestamps stay out of the deterministic outputs
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut log = std::fs::File::create(cfg.output_dir.join("log.txt"))?;
    writeln!(
        log,
        "finished_unix={stamp} elapsed_s={:.2} runs={}",
        elapsed.as_secs_f64(),
        records.len()
    )?;

    let summary = aggregate_records(&records);
    println!("condition                        n   collision    eb    false_eb  oscillatory");
    for c in &cfg.conditions {
        if let Some(s) = summary.get(&c.label, "all") {
            println!(
                "{:<30} {:>4}   {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}",
                c.label,
                s.n,
                s.collisions.rate,
                s.eb_runs.rate,
                s.false_eb_runs.rate,
                s.oscillatory_runs.rate
            );
        }
    }
    let mut all_passed = true;
    for r in &results {
        println!("{r}");
        all_passed &= r.passed;
    }
    eprintln!(
        "wrote {} in {:.1}s",
        cfg.output_dir.display(),
        elapsed.as_secs_f64()
    );
    Ok(all_passed)
}

/// Sets a dotted-path numeric field on a TOML document, preserving the
/// field's integer/float kind.
fn set_param(doc: &mut toml::Value, path: &str, value: f64) -> Result<()> {
    let mut node = doc;
    let segments: Vec<&str> = path.split('.').collect();
    let (last, walk) = segments.split_last().context("empty parameter path")?;
    for seg in walk {
        node = node
            .get_mut(*seg)
            .with_context(|| format!("config has no table `{seg}` on path `{path}`"))?;
    }
    let slot = node
        .get_mut(*last)
        .with_context(|| format!("config has no parameter `{last}` on path `{path}`"))?;
    *slot = match slot {
        toml::Value::Integer(_) => toml::Value::Integer(value.round() as i64),
        toml::Value::Float(_) => toml::Value::Float(value),
        toml::Value::Boolean(_) => toml::Value::Boolean(value != 0.0),
        _ => bail!("parameter `{path}` is not numeric"),
    };
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            parallelism,
            trace,
            dump_config,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.root_seed = seed;
            }
            if let Some(par) = parallelism {
                cfg.parallelism = par;
            }
            if let Some(trace) = trace {
                cfg.trace = match trace {
                    TraceArg::Full => TraceVerbosity::Full,
                    TraceArg::MetricsOnly => TraceVerbosity::MetricsOnly,
                };
            }
            if dump_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            if !run_batch(&cfg)? {
                std::process::exit(2);
            }
        }
        Command::Sweep {
            config,
            param,
            from,
            to,
            steps,
            out,
        } => {
            if steps < 2 {
                bail!("--steps must be at least 2");
            }
            let base = load_config(&config)?;
            let sweep_root = out.unwrap_or_else(|| base.output_dir.join("sweep"));
            let base_toml = base.to_toml();
            let mut table = String::from(
                "param,value,condition,n,collision_rate,eb_rate,false_eb_rate,oscillatory_rate\n",
            );
            for k in 0..steps {
                let value = from + (to - from) * k as f64 / (steps - 1) as f64;
                let mut doc: toml::Value = toml::from_str(&base_toml)?;
                set_param(&mut doc, &param, value)?;
                let mut cfg: ExperimentConfig = doc.try_into().context("sweep value rejected")?;
                cfg.output_dir = sweep_root.join(format!("{param}={value}"));
                cfg.validate()?;
                prepare_output_dir(&cfg)?;
                let records = execute(&cfg, &plan(&cfg)?);
                emit_outputs(&cfg, &records)?;
                let summary = aggregate_records(&records);
                for c in &cfg.conditions {
                    if let Some(s) = summary.get(&c.label, "all") {
                        table.push_str(&format!(
                            "{param},{value},{},{},{},{},{},{}\n",
                            c.label,
                            s.n,
                            s.collisions.rate,
                            s.eb_runs.rate,
                            s.false_eb_runs.rate,
                            s.oscillatory_runs.rate
                        ));
                    }
                }
                eprintln!("swept {param}={value}");
            }
            std::fs::create_dir_all(&sweep_root)?;
            std::fs::write(sweep_root.join("sweep.csv"), table)?;
            eprintln!("wrote {}", sweep_root.join("sweep.csv").display());
        }
        Command::Compare {
            records,
            labels,
            out,
        } => {
            let records = read_records(&records)?;
            let mut labels = labels;
            if labels.is_empty() {
                for r in &records {
                    if !labels.contains(&r.condition) {
                        labels.push(r.condition.clone());
                    }
                }
            }
            if labels.len() < 2 {
                bail!("compare needs at least two condition labels");
            }
            let summary = aggregate_records(&records);
            let table = compare_csv(&summary, &labels);
            print!("{table}");
            if let Some(path) = out {
                std::fs::write(path, table)?;
            }
        }
        Command::Plot { records, out } => {
            let records = read_records(&records)?;
            let mut labels: Vec<String> = Vec::new();
            for r in &records {
                if !labels.contains(&r.condition) {
                    labels.push(r.condition.clone());
                }
            }
            std::fs::create_dir_all(&out)?;
            let summary = aggregate_records(&records);
            write_charts(&out, &summary, &records, &labels)?;
            eprintln!("wrote charts to {}", out.display());
        }
        Command::Replay {
            trace,
            records,
            chart,
        } => {
            let stored = match &records {
                Some(p) => Some(read_records(p)?),
                None => None,
            };
            let report = replay(&trace, stored.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report.metrics)?);
            if let Some(chart_path) = chart {
                let title = format!(
                    "{} / {} seed {}",
                    report.trace.meta.condition, report.trace.meta.family, report.trace.meta.seed
                );
                let svg = longsim::chart::run_timeseries(&title, &report.trace.rows);
                std::fs::write(&chart_path, svg)?;
                eprintln!("wrote {}", chart_path.display());
            }
            match report.matches_record {
                Some(true) => eprintln!("stored record matches the recomputed metrics"),
                Some(false) => {
                    eprintln!("MISMATCH: stored record differs from recomputed metrics");
                    std::process::exit(3);
                }
                None => {}
            }
        }
    }
    Ok(())
}
