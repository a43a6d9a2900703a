//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails. Set `MASTERFL_LIBSVM` to a LIBSVM file to enable the
//! dataset replay criterion.

use std::process::ExitCode;

use masterfl::acceptance::{self, AcceptOptions};

fn main() -> ExitCode {
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let opts = AcceptOptions::default();
    let mut failed = 0;
    let mut run = 0;
    let mut skipped = 0;
    for c in acceptance::CRITERIA.iter() {
        if !filter.is_empty() && !filter.contains(&c.id) {
            continue;
        }
        let report = c.run(&opts);
        println!("{report}");
        run += 1;
        if report.skipped {
            skipped += 1;
        }
        if !report.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed, {skipped} skipped", run - failed - skipped);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
