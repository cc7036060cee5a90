//! Systematic range bias in both directions: overestimation delays braking
//! (amplified on curved roads), underestimation brakes early and often and
//! drags the average speed down in congested traffic.

use longsim::config::{ConditionSpec, ExperimentConfig};
use longsim::control::SafeguardConfig;
use longsim::harness::{execute, plan};
use longsim::output::aggregate_records;
use longsim::perception::AttackSpec;
use longsim::scenario::ScenarioFamily;

fn main() {
    // overestimation on highway and curved road, every seed with a hazard
    let mut cfg = ExperimentConfig {
        runs_per_family: 80,
        families: vec![ScenarioFamily::HighwayFollowing, ScenarioFamily::CurvedRoad],
        conditions: vec![
            ConditionSpec {
                label: "baseline".into(),
                attack: AttackSpec::None,
                safeguards: SafeguardConfig::off(),
            },
            ConditionSpec {
                label: "bias_over".into(),
                attack: AttackSpec::DistanceBias { factor: 1.2 },
                safeguards: SafeguardConfig::off(),
            },
        ],
        assertions: vec![],
        ..ExperimentConfig::default()
    };
    cfg.sim.calibration.highway.hazard_probability = 1.0;
    let records = execute(&cfg, &plan(&cfg).unwrap());
    let summary = aggregate_records(&records);

    println!("overestimation (factor 1.2), brake onset delay:");
    for family in ["highway_following", "curved_road"] {
        let base = summary.get("baseline", family).unwrap();
        let over = summary.get("bias_over", family).unwrap();
        let d = |s: &longsim::metrics::GroupSummary| {
            s.stats
                .get("brake_onset_delay")
                .map_or(f64::NAN, |x| x.mean)
        };
        println!("  {family:<20} {:.2} s -> {:.2} s", d(base), d(over));
    }

    // underestimation in stop-and-go traffic
    let cfg = ExperimentConfig {
        runs_per_family: 80,
        families: vec![ScenarioFamily::StopAndGo],
        conditions: vec![
            ConditionSpec {
                label: "baseline".into(),
                attack: AttackSpec::None,
                safeguards: SafeguardConfig::off(),
            },
            ConditionSpec {
                label: "bias_under".into(),
                attack: AttackSpec::DistanceBias { factor: 0.8 },
                safeguards: SafeguardConfig::off(),
            },
        ],
        assertions: vec![],
        ..ExperimentConfig::default()
    };
    let records = execute(&cfg, &plan(&cfg).unwrap());
    let summary = aggregate_records(&records);
    let base = summary.get("baseline", "all").unwrap();
    let under = summary.get("bias_under", "all").unwrap();
    let speed =
        |s: &longsim::metrics::GroupSummary| s.stats.get("mean_speed").map_or(f64::NAN, |x| x.mean);
    println!("\nunderestimation (factor 0.8) in stop-and-go:");
    println!(
        "  EB runs:    {} -> {}",
        base.eb_runs.count, under.eb_runs.count
    );
    println!(
        "  mean speed: {:.2} m/s -> {:.2} m/s ({:+.1}%)",
        speed(base),
        speed(under),
        100.0 * (speed(under) / speed(base) - 1.0)
    );
    println!(
        "  min gap p50: {:.2} m -> {:.2} m (conservative following)",
        base.stats.get("min_gap").map_or(f64::NAN, |x| x.p50),
        under.stats.get("min_gap").map_or(f64::NAN, |x| x.p50)
    );
}
