//! The exact price of a wrong prior.
//!
//! Running the Bayes machinery with an alternative prior q instead of the
//! true prior p costs extra per-step loss equal to the per-step expected KL
//! between the two posterior predictives — an identity, not a bound, checked
//! here to machine precision. The horizon-free bound KL(p‖q)/(MT) caps the
//! extra loss whenever q covers p's support, and becomes vacuous (+∞) the
//! moment it doesn't.

use seqlab::env::tabular::TabularSpec;
use seqlab::info::exact_misspecified;
use seqlab::prob::Pmf;

fn main() -> seqlab::Result<()> {
    let spec = TabularSpec::coin_pair(0.9)?;
    let alt = Pmf::new(vec![0.9, 0.1])?;

    println!("true prior (0.5, 0.5), alternative (0.9, 0.1):");
    println!(
        "{:>3} {:>3} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "M", "T", "loss true", "loss alt", "extra", "KL/(MT)", "residual"
    );
    for (m, t) in [(1, 1), (1, 2), (2, 2), (1, 8)] {
        let rep = exact_misspecified(&spec, &alt, m, t, 1 << 24)?;
        println!(
            "{:>3} {:>3} {:>12.8} {:>12.8} {:>12.8} {:>12.8} {:>10.1e}",
            m,
            t,
            rep.loss_true,
            rep.loss_alt,
            rep.extra,
            rep.prior_kl / (m * t) as f64,
            rep.residual
        );
    }

    let hostile = Pmf::new(vec![1.0, 0.0])?;
    let rep = exact_misspecified(&spec, &hostile, 1, 2, 1 << 24)?;
    println!("\nalternative (1, 0) puts zero mass on a live hypothesis:");
    println!(
        "  extra = {:.6} per step, KL(p‖q) = {} → the bound is vacuous, the loss is not",
        rep.extra, rep.prior_kl
    );
    Ok(())
}
