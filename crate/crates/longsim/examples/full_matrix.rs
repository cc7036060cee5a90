//! The complete evaluation matrix with file outputs: metrics records,
//! aggregate tables, a cross-condition comparison, and SVG charts.
//!
//! Equivalent to `longsim run --out out/full_matrix`.

use longsim::config::ExperimentConfig;
use longsim::harness::{execute, plan, prepare_output_dir};
use longsim::output::{aggregate_records, emit_outputs};

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig {
        output_dir: "out/full_matrix".into(),
        ..ExperimentConfig::default()
    };
    prepare_output_dir(&cfg)?;

    let descriptors = plan(&cfg)?;
    println!(
        "executing {} runs ({} conditions x {} families x {})...",
        descriptors.len(),
        cfg.conditions.len(),
        cfg.families.len(),
        cfg.runs_per_family
    );
    let started = std::time::Instant::now();
    let records = execute(&cfg, &descriptors);
    println!("done in {:.1} s", started.elapsed().as_secs_f64());

    let results = emit_outputs(&cfg, &records)?;
    let summary = aggregate_records(&records);

    println!(
        "\n{:<16} {:>10} {:>10} {:>12} {:>12}",
        "condition", "collision", "EB rate", "false EB", "oscillatory"
    );
    for c in &cfg.conditions {
        let s = summary.get(&c.label, "all").unwrap();
        println!(
            "{:<16} {:>10.4} {:>10.4} {:>12.4} {:>12.4}",
            c.label,
            s.collisions.rate,
            s.eb_runs.rate,
            s.false_eb_runs.rate,
            s.oscillatory_runs.rate
        );
    }
    for r in &results {
        println!("{r}");
    }
    println!("\noutputs in {}:", cfg.output_dir.display());
    println!("  runs.jsonl     one metrics record per run");
    println!("  summary.csv    aggregate table (also summary.json)");
    println!("  compare.csv    per-family cross-condition comparison");
    println!("  charts/        collision/false-EB bars and decel/jerk distributions");
    Ok(())
}
