//! Runs the nine acceptance criteria and prints one line each. Any failure
//! makes the target exit nonzero.

use mwcb_core::acceptance::{run_criterion, AcceptanceConfig};

fn main() {
    let cfg = AcceptanceConfig::default();
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for id in 1..=9 {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let out = run_criterion(id, &cfg).expect("criterion ids are 1..=9");
        println!("{out}");
        if !out.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
