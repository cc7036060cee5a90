//! A phantom obstacle that lives for two frames: emergency braking fires
//! on an object that does not exist, decelerates hard, and squeezes the
//! headway of the vehicle behind.

use longsim::config::{default_attack, ConditionSpec, ExperimentConfig};
use longsim::control::SafeguardConfig;
use longsim::harness::{execute, plan};
use longsim::output::aggregate_records;
use longsim::perception::AttackSpec;
use longsim::scenario::ScenarioFamily;

fn main() {
    let cfg = ExperimentConfig {
        runs_per_family: 80,
        families: vec![
            ScenarioFamily::HighwayFollowing,
            ScenarioFamily::MultiVehicle,
        ],
        conditions: vec![
            ConditionSpec {
                label: "baseline".into(),
                attack: AttackSpec::None,
                safeguards: SafeguardConfig::off(),
            },
            ConditionSpec {
                label: "phantom".into(),
                attack: default_attack("false_positive"),
                safeguards: SafeguardConfig::off(),
            },
        ],
        assertions: vec![],
        ..ExperimentConfig::default()
    };

    let records = execute(&cfg, &plan(&cfg).unwrap());
    let summary = aggregate_records(&records);

    for label in ["baseline", "phantom"] {
        let s = summary.get(label, "all").unwrap();
        println!("{label}:");
        println!("  collisions            {}", s.collisions.count);
        println!("  false-EB episodes     {}", s.false_eb_episode_total);
        println!("  ... exceeding 6 m/s^2 {}", s.false_eb_episode_hard);
        if let Some(d) = s.stats.get("peak_decel") {
            println!("  peak decel p95        {:.2} m/s^2", d.p95);
        }
    }

    let base = summary.get("baseline", "multi_vehicle").unwrap();
    let fp = summary.get("phantom", "multi_vehicle").unwrap();
    println!(
        "\nfollower min headway p50 (multi_vehicle): baseline {:.2} s -> phantom {:.2} s",
        base.stats
            .get("min_follower_headway")
            .map_or(f64::NAN, |h| h.p50),
        fp.stats
            .get("min_follower_headway")
            .map_or(f64::NAN, |h| h.p50),
    );
}
