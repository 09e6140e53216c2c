//! Brute force and stochastic optimization on the default 14-sensor
//! advection-diffusion problem.
//!
//! ```text
//! cargo run --release -p stochoed-core --example advection_benchmark [seeds]
//! ```

use std::sync::Arc;
use std::time::Instant;

use stochoed::models::{assemble_ad_problem, AdConfig};
use stochoed::oracle::DEFAULT_GUARD;
use stochoed::{brute_force, optimize, rng, Criterion, DesignObjective, ExactOracle, ObjectiveSpec, OptimizerConfig};

fn main() -> stochoed::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let t = Instant::now();
    let problem = Arc::new(assemble_ad_problem(&AdConfig::default())?);
    println!("assembled {} sensors, {} states in {:.2?}", problem.nsens(), problem.nstate(), t.elapsed());

    let specs = [
        ("no penalty", ObjectiveSpec::new(Criterion::AOptimal)),
        ("budget 8", ObjectiveSpec::new(Criterion::AOptimal).with_budget(1.0, 8)),
    ];
    for (label, spec) in specs {
        let t = Instant::now();
        let table = brute_force(&DesignObjective::new(problem.clone(), spec)?, DEFAULT_GUARD)?;
        let best = &table.argmin_designs()[0];
        println!(
            "[{label}] brute force in {:.2?}: min {:.6} at {} ({} active), max {:.6}",
            t.elapsed(),
            table.min_value(),
            best,
            best.active_count(),
            table.max_value()
        );
        let oracle = ExactOracle::new(table.clone());
        for seed in 0..seeds {
            let objective = DesignObjective::new(problem.clone(), spec)?;
            let config = OptimizerConfig { seed, ..Default::default() };
            let run = optimize(&objective, &config, &mut rng::seeded(seed), Some(&oracle))?;
            let gap = (run.best_value - table.min_value()) / table.min_value().abs();
            let news: Vec<u64> = run.iterations.iter().map(|r| r.new_evaluations).collect();
            println!(
                "  seed {seed}: {} ({} active) J {:.6} gap {:.3}% new evals {:?}",
                run.best_design,
                run.best().active_count(),
                run.best_value,
                100.0 * gap,
                news
            );
        }
    }
    Ok(())
}
