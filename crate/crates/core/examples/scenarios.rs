//! Runs the three bundled scenarios and prints each clause.
//!
//! `cargo run --example scenarios -- 42` reruns them with another seed.

use agritwin::sim::{bundled_spec, run_scenario};

fn main() -> agritwin::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok());
    for name in ["adiop1", "adiop2", "closedloop"] {
        let mut spec = bundled_spec(name)?;
        if let Some(seed) = seed {
            spec.seed = seed;
        }
        let report = run_scenario(&spec)?;
        println!("{} (seed {}): {}", report.scenario, report.seed, if report.pass { "PASS" } else { "FAIL" });
        for c in &report.clauses {
            println!("  [{}] {}", if c.pass { "ok" } else { "!!" }, c.clause);
            if !c.pass {
                println!("       expected {}\n       observed {}", c.expected, c.observed);
            }
        }
    }
    Ok(())
}
