//! Acceptance suite: one PASS/FAIL line per criterion, followed by the
//! individual checks. Exits nonzero when any criterion fails.

use siplab::acceptance::all_criteria;

fn main() {
    let mut failed = Vec::new();
    for criterion in all_criteria() {
        let r = criterion();
        println!("{r}");
        for c in &r.checks {
            println!("    [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
        }
        if !r.passed() {
            failed.push(r.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
