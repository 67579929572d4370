use gaugelab::symbols::{factorize, jets_agree, recover_jet, recover_jet_opts, BoundaryJet};
use std::time::Instant;

fn main() {
    let t_all = Instant::now();
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let jet = BoundaryJet::random_normalized(3, 1, 4, 3, seed, true);
        let table = factorize(&jet, 3).unwrap();
        let trace = recover_jet_opts(&table, 3, 3, false).unwrap();
        if !jets_agree(&trace.jet, &jet, 3, 2, 1, 0) {
            failures.push(seed);
        }
    }
    println!("failures (fast mode): {failures:?}; elapsed {:?}", t_all.elapsed());
    for &seed in &failures {
        let jet = BoundaryJet::random_normalized(3, 1, 4, 3, seed, true);
        let table = factorize(&jet, 3).unwrap();
        match recover_jet(&table, 3, 3) {
            Ok(trace) => println!(
                "seed {seed} with confirms: sweeps {:?} agree {}",
                trace.sweeps,
                jets_agree(&trace.jet, &jet, 3, 2, 1, 0)
            ),
            Err(e) => println!("seed {seed} with confirms: ERR {e}"),
        }
    }
}
