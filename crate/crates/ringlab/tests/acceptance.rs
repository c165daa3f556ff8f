//! The twelve acceptance criteria at their stated tolerances, one line each.
//! Runs with its own harness so that the lines are printed as each check finishes.

use ringlab::config::RunConfig;
use ringlab::verify::{Verifier, CRITERIA};

fn main() {
    if std::env::args().any(|a| a == "--list") {
        for (id, name) in CRITERIA {
            println!("criterion_{id:02}_{}: test", name.replace([' ', '-'], "_"));
        }
        return;
    }
    let mut v = Verifier::new(RunConfig::default());
    let ids: Vec<u8> = CRITERIA.iter().map(|c| c.0).collect();
    let outcomes = v.run_all(&ids, |o| println!("{}", o.line()));
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!("\nacceptance: {} passed, {} failed", outcomes.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
