//! Full-size acceptance run: one PASS/FAIL line per claim.

use infodisc::claims::{self, VerifyConfig};

const SEED: u64 = 20_240_611;

#[test]
fn acceptance() {
    let config = VerifyConfig::new(SEED);
    // INFODISC_CLAIMS=id1,id2 restricts the run.
    let only = std::env::var("INFODISC_CLAIMS").ok();
    let verbose = std::env::var_os("INFODISC_VERBOSE").is_some();
    let mut failed = Vec::new();
    for (id, criterion, title, _) in claims::CLAIMS {
        if only.as_deref().is_some_and(|o| !o.split(',').any(|x| x == *id)) {
            continue;
        }
        let r = claims::run_claim(id, &config).expect("listed claim");
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} [{criterion:>2}] {id}: {title} ({:.1}s)",
            r.runtime_s.unwrap_or(0.0)
        );
        if !r.pass || verbose {
            println!("       measured: {}", r.measured);
        }
        if !r.pass {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed claims: {failed:?}");
}
