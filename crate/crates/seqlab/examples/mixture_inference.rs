//! Exact hierarchical filtering vs sequential Monte Carlo on a mixture.
//!
//! The environment draws a mixing vector ψ (one of two atom hypotheses),
//! then a per-document component from ψ. The exact filter enumerates
//! component-count sufficient statistics; the particle filter samples them.
//! Both emit one predictive pmf per step; they must agree to Monte Carlo
//! accuracy, and the exact filter's predictions sharpen document by
//! document as evidence about ψ accumulates.
//!
//! A Dirichlet mixing prior has infinitely many hypotheses, so only the
//! particle filter covers it; the Pólya closed form for the expected number
//! of distinct components sanity-checks that regime.

use seqlab::env::mixture::MixtureSpec;
use seqlab::env::tabular::TabularSpec;
use seqlab::env::EnvSpec;
use seqlab::predict::{polya_expected_unique, HierExact, HierSmc};
use seqlab::prob::Pmf;
use seqlab::rng::RngStream;

fn main() -> seqlab::Result<()> {
    let spec = MixtureSpec::discrete(
        vec![Pmf::new(vec![0.9, 0.1])?, Pmf::new(vec![0.1, 0.9])?],
        Pmf::uniform(2),
        TabularSpec::coin_pair(0.9)?.kernels,
    )?;
    let env = EnvSpec::Mixture(spec.clone());

    let stream = RngStream::new(12);
    let mut rng = stream.substream(0).rng();
    let draw = env.sample_params(4, &mut rng);
    let corpus = env.sample_corpus(&draw, &[3, 3, 3, 3], &mut rng);

    let mut exact = HierExact::new(&spec, 1 << 20)?;
    let mut smc = HierSmc::new(&spec, 4096, 0.5, stream.substream(1))?;

    println!("{:>4} {:>6} {:>22} {:>22} {:>9}", "doc", "token", "exact P(next=1)", "smc P(next=1)", "|Δ|");
    for (m, doc) in corpus.iter().enumerate() {
        exact.begin_doc()?;
        smc.begin_doc()?;
        for t in 0..doc.len() {
            let pe = exact.predictive(doc, t)?;
            let ps = smc.predictive(doc, t)?;
            println!(
                "{:>4} {:>6} {:>22.6} {:>22.6} {:>9.1e}",
                m,
                doc.tokens[t],
                pe.probs()[0],
                ps.probs()[0],
                (pe.probs()[0] - ps.probs()[0]).abs()
            );
            exact.step(doc, t, doc.tokens[t])?;
            smc.step(doc, t, doc.tokens[t])?;
        }
        exact.end_doc()?;
        smc.end_doc()?;
    }
    println!(
        "\nexact filter tracks {} count-hypotheses; particle ESS ended at {:.0}/4096",
        exact.n_hypotheses(),
        smc.ess()
    );

    let expected = polya_expected_unique(2.0, 100, 10)?;
    println!(
        "\nDirichlet regime: Pólya urn with R=2 over N=100 components expects {expected:.4} \
         distinct components in 10 documents"
    );
    Ok(())
}
