//! Runs every acceptance criterion and prints one line per criterion.
//! Exits non-zero if any criterion fails.

use spinsc::selftest;

fn main() {
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(id, ..) in selftest::CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let report = selftest::run_criterion(id).expect("listed criterion");
        println!("{}", report.line());
        if !report.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
