//! Each control-level safeguard against the error class it targets, then
//! all three together across every error class.

use longsim::config::{default_attack, ConditionSpec, ExperimentConfig};
use longsim::control::SafeguardConfig;
use longsim::harness::{execute, plan};
use longsim::output::aggregate_records;
use longsim::scenario::ScenarioFamily;

fn run(
    families: Vec<ScenarioFamily>,
    attack_kind: &str,
    safeguards: Vec<(&str, SafeguardConfig)>,
    hazard_everywhere: bool,
) -> Vec<(String, longsim::metrics::GroupSummary)> {
    let mut cfg = ExperimentConfig {
        runs_per_family: 60,
        families,
        conditions: safeguards
            .into_iter()
            .map(|(label, sg)| ConditionSpec {
                label: label.into(),
                attack: default_attack(attack_kind),
                safeguards: sg,
            })
            .collect(),
        assertions: vec![],
        ..ExperimentConfig::default()
    };
    if hazard_everywhere {
        cfg.sim.calibration.highway.hazard_probability = 1.0;
    }
    let records = execute(&cfg, &plan(&cfg).unwrap());
    let summary = aggregate_records(&records);
    cfg.conditions
        .iter()
        .map(|c| {
            (
                c.label.clone(),
                summary.get(&c.label, "all").unwrap().clone(),
            )
        })
        .collect()
}

fn main() {
    println!("persistence gating vs phantom braking (highway):");
    for (label, s) in run(
        vec![ScenarioFamily::HighwayFollowing],
        "false_positive",
        vec![
            ("off", SafeguardConfig::off()),
            ("persistence", SafeguardConfig::persistence_only()),
        ],
        false,
    ) {
        println!(
            "  {label:<12} false-EB episodes: {}",
            s.false_eb_episode_total
        );
    }

    println!("\nrate limiting vs flicker (cut-in):");
    for (label, s) in run(
        vec![ScenarioFamily::CutIn],
        "flicker",
        vec![
            ("off", SafeguardConfig::off()),
            ("rate_limit", SafeguardConfig::rate_limit_only()),
        ],
        false,
    ) {
        println!(
            "  {label:<12} oscillatory rate: {:.3}, mean |jerk|: {:.2} m/s^3",
            s.oscillatory_runs.rate,
            s.stats.get("mean_abs_jerk").map_or(f64::NAN, |x| x.mean)
        );
    }

    println!("\nfallback policy vs lead disappearance (highway, hazards forced):");
    for (label, s) in run(
        vec![ScenarioFamily::HighwayFollowing],
        "false_negative",
        vec![
            ("off", SafeguardConfig::off()),
            ("fallback", SafeguardConfig::fallback_only()),
        ],
        true,
    ) {
        println!("  {label:<12} collision rate: {:.3}", s.collisions.rate);
    }

    println!("\nall three safeguards, full matrix (see also the acceptance suite):");
    let cfg = ExperimentConfig {
        runs_per_family: 40,
        assertions: vec![],
        ..Default::default()
    };
    let records = execute(&cfg, &plan(&cfg).unwrap());
    let summary = aggregate_records(&records);
    println!(
        "  {:<14} {:>22} {:>22}",
        "condition", "collisions (off/on)", "false EB (off/on)"
    );
    for kind in ["fn", "fp", "bias_over", "bias_under", "flicker"] {
        let off = summary.get(kind, "all").unwrap();
        let on = summary.get(&format!("{kind}+sg"), "all").unwrap();
        println!(
            "  {:<14} {:>10} / {:<9} {:>10} / {:<9}",
            kind,
            off.collisions.count,
            on.collisions.count,
            off.false_eb_episode_total,
            on.false_eb_episode_total
        );
    }
}
