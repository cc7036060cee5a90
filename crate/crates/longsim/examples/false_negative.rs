//! Temporary disappearance of the lead vehicle just before a genuine
//! hazard: the track resets, the reappearing obstacle counts as newly
//! detected, braking comes late, and collisions follow.

use longsim::config::{default_attack, ConditionSpec, ExperimentConfig};
use longsim::control::SafeguardConfig;
use longsim::harness::{execute, plan};
use longsim::output::aggregate_records;
use longsim::perception::AttackSpec;
use longsim::scenario::ScenarioFamily;

fn main() {
    let mut cfg = ExperimentConfig {
        runs_per_family: 80,
        families: vec![ScenarioFamily::HighwayFollowing],
        conditions: vec![
            ConditionSpec {
                label: "baseline".into(),
                attack: AttackSpec::None,
                safeguards: SafeguardConfig::off(),
            },
            ConditionSpec {
                label: "false_negative".into(),
                attack: default_attack("false_negative"),
                safeguards: SafeguardConfig::off(),
            },
        ],
        assertions: vec![],
        ..ExperimentConfig::default()
    };
    // give every seed a genuine hazard so the blind window has something to hide
    cfg.sim.calibration.highway.hazard_probability = 1.0;

    let records = execute(&cfg, &plan(&cfg).unwrap());
    let summary = aggregate_records(&records);

    for label in ["baseline", "false_negative"] {
        let s = summary.get(label, "all").unwrap();
        let delay = s.stats.get("brake_onset_delay");
        let ttc = s.stats.get("min_ttc_truth");
        println!("{label}:");
        println!("  collision rate   {:.3}", s.collisions.rate);
        println!(
            "  brake onset delay mean {:.2} s (n={})",
            delay.map_or(f64::NAN, |d| d.mean),
            delay.map_or(0, |d| d.n)
        );
        println!(
            "  min ground-truth TTC p50 {:.2} s",
            ttc.map_or(f64::NAN, |t| t.p50)
        );
    }
}
