use gaugelab::symbols::elem::{div_q2, SymbolElem};
use gaugelab::symbols::{factorize, recover_jet_opts, BoundaryJet};

fn describe(e: &SymbolElem, name: &str, ctx: &gaugelab::symbols::elem::SymbolCtx) {
    println!("--- {name}: tv={} nv={}", e.tv, e.nv);
    for (g, grp) in &e.groups {
        for (k, v) in &grp.p {
            println!("  g={g} P key={k:?} series terms={}", v.terms.len());
        }
        for (k, v) in &grp.q {
            println!("  g={g} Q key={k:?} series terms={}", v.terms.len());
        }
    }
    let (p, q, n) = e.single_fraction(ctx);
    println!("  single fraction: |P|={} |Q|={} N={n}", p.len(), q.len());
}

fn main() {
    let seed = 3u64;
    let jet = BoundaryJet::random_normalized(3, 1, 4, 3, seed, true);
    let table = factorize(&jet, 3).unwrap();
    // Run one fast recovery to get the candidate after stage-2 reads.
    let trace = recover_jet_opts(&table, 3, 3, false).unwrap();
    // Recompute the stage-2 delta against the recovered jet.
    let mut cand = trace.jet.clone();
    cand.k_depth = 3;
    let fwd = factorize(&cand, 2).unwrap();
    let ctx_b = &table.ctx_boundary;
    let mut delta = table.boundary[2].sub(&fwd.boundary[2], ctx_b);
    delta.tv = delta.tv.min(3 - 2);
    println!("stage-2 delta zero within validity: {}", delta.is_zero_within_validity_ctx(ctx_b));
    let delta_t = delta; // t=2: x (2s)^1
    let delta_t = delta_t.mul_s(ctx_b).scale(&gaugelab::symbols::QC::from_int(2));
    let (even, odd) = delta_t.parity_split();
    describe(&even, "even residual", ctx_b);
    describe(&odd, "odd residual", ctx_b);
    // Divide even part fully and look at shapes.
    let (p, _q, n) = even.single_fraction(ctx_b);
    let mut poly = p;
    for step in 0..n {
        let (quo, rem) = div_q2(&poly, ctx_b);
        let rem_nonzero = rem.values().any(|s| !s.is_zero_within(1, 0));
        println!("  div step {step}: rem nonzero within window = {rem_nonzero}");
        poly = quo;
    }
    for (k, v) in &poly {
        println!("  final even quotient key={k:?} terms={}", v.terms.len());
    }
}
