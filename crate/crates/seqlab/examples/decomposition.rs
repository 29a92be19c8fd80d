//! Exact loss decomposition on the two-coin environment.
//!
//! A coin with heads probability 0.9 or 0.1 (uniform prior) is predicted by
//! exact Bayes. The per-step log loss splits exactly into the entropy rate
//! of the known coin plus the information the sequence carries about which
//! coin it is — the estimation term — and the split is verified path by
//! path: the residual below is the worst defect over every outcome.

use seqlab::env::enumerate::DEFAULT_CELL_CAP;
use seqlab::env::tabular::TabularSpec;
use seqlab::info::exact_decomposition;

fn main() -> seqlab::Result<()> {
    let spec = TabularSpec::coin_pair(0.9)?;
    println!("{:>4} {:>12} {:>12} {:>12} {:>10}", "T", "loss/step", "irreducible", "estimation", "residual");
    for t_len in [1usize, 2, 4, 8, 12] {
        let rep = exact_decomposition(&spec, &[t_len], DEFAULT_CELL_CAP)?;
        println!(
            "{:>4} {:>12.8} {:>12.8} {:>12.8} {:>10.1e}",
            t_len, rep.total_loss, rep.irreducible, rep.meta_estimation, rep.residual
        );
    }
    println!();
    println!("The estimation column decays like I(H_T; θ)/T → 0: a fixed number");
    println!("of nats (≤ ln 2 here) amortized over an ever longer sequence.");
    Ok(())
}
