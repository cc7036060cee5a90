//! Baseline behavior across all six scenario families: no perception
//! faults, no safeguards. Expect zero collisions, emergency braking only
//! for genuine hazards, and no oscillatory runs.

use longsim::config::{ConditionSpec, ExperimentConfig};
use longsim::control::SafeguardConfig;
use longsim::harness::{execute, plan};
use longsim::output::aggregate_records;
use longsim::perception::AttackSpec;

fn main() {
    let cfg = ExperimentConfig {
        runs_per_family: 60,
        conditions: vec![ConditionSpec {
            label: "baseline".into(),
            attack: AttackSpec::None,
            safeguards: SafeguardConfig::off(),
        }],
        assertions: vec![],
        ..ExperimentConfig::default()
    };

    let records = execute(&cfg, &plan(&cfg).unwrap());
    let summary = aggregate_records(&records);

    println!(
        "{:<20} {:>5} {:>10} {:>8} {:>9} {:>12}",
        "family", "runs", "collisions", "EB rate", "false EB", "oscillatory"
    );
    for row in &summary.rows {
        if row.family == "all" {
            continue;
        }
        let s = &row.summary;
        println!(
            "{:<20} {:>5} {:>10} {:>8.3} {:>9} {:>12}",
            row.family,
            s.n,
            s.collisions.count,
            s.eb_runs.rate,
            s.false_eb_episode_total,
            s.oscillatory_runs.count
        );
    }
    let all = summary.get("baseline", "all").unwrap();
    println!(
        "\npooled: collision rate {:.4} (95% CI {:.4}..{:.4}), EB rate {:.4}",
        all.collisions.rate, all.collisions.ci_lo, all.collisions.ci_hi, all.eb_runs.rate
    );
    if let Some(jerk) = all.stats.get("peak_jerk") {
        println!(
            "peak jerk: mean {:.2}, p95 {:.2} m/s^3",
            jerk.mean, jerk.p95
        );
    }
}
