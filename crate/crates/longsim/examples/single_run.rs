//! One closed-loop run, frame by frame: a highway-following scenario with a
//! lead hard-brake hazard, no perception faults.

use longsim::control::SafeguardConfig;
use longsim::metrics::compute_run_metrics;
use longsim::perception::AttackSpec;
use longsim::scenario::{sample, ScenarioFamily};
use longsim::sim::{run_once, SimConfig};

fn main() {
    let mut cfg = SimConfig::default();
    cfg.calibration.highway.hazard_probability = 1.0;

    let family = ScenarioFamily::HighwayFollowing;
    let seed = 7;
    let spec = sample(family, seed, cfg.horizon, &cfg.calibration);
    println!("scenario: {family}, seed {seed}");
    println!("sampled params: {:?}\n", spec.params);

    let out = run_once(
        &cfg,
        family,
        seed,
        "demo",
        &AttackSpec::None,
        &SafeguardConfig::off(),
    );

    println!(
        "{:>6} {:>7} {:>7} {:>7} {:>9} {:>9} {:>6}",
        "t", "v", "accel", "cmd", "truth_gap", "est_gap", "eb"
    );
    for row in out.trace.rows.iter().step_by(10) {
        println!(
            "{:>6.1} {:>7.2} {:>7.2} {:>7.2} {:>9.1} {:>9.1} {:>6}",
            row.t,
            row.v,
            row.a_realized,
            row.a_cmd,
            row.truth_gap.unwrap_or(f64::NAN),
            row.perceived_gap.unwrap_or(f64::NAN),
            row.eb_active,
        );
    }

    let metrics = compute_run_metrics(&out.trace).unwrap();
    println!("\ncollision: {}", metrics.collision);
    println!("EB episodes: {}", metrics.eb_event_count);
    println!(
        "min ground-truth TTC: {:.2} s",
        metrics.min_ttc_truth.unwrap_or(f64::INFINITY)
    );
    println!("min gap: {:.2} m", metrics.min_gap.unwrap_or(f64::INFINITY));
    println!("peak deceleration: {:.2} m/s^2", metrics.peak_decel);
}
