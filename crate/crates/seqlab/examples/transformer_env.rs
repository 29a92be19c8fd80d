//! The softmax-transformer generative environment and its regularity checks.
//!
//! Documents are generated autoregressively: the last K tokens are embedded
//! as unit columns, pushed through L layers of clipped single-head linear
//! attention, and the final column's logits feed a softmax over the
//! vocabulary. Two facts make this family analyzable:
//!
//!  * each layer expands mean-squared perturbations by at most 2(K + K²)
//!    in expectation over N(0,1)-cored attention and N(0,1/d) value maps;
//!  * jittering the weights at scale matched to a budget ε moves per-step
//!    predictions by a KL bounded in terms of ε, K, and the depth.
//!
//! Both are verified below by Monte Carlo alongside a sampled document.

use seqlab::env::transformer::TransformerSpec;
use seqlab::env::EnvSpec;
use seqlab::rng::RngStream;
use seqlab::verify::{check_layer_lipschitz, check_perturbation_distortion};

fn main() -> seqlab::Result<()> {
    let spec = TransformerSpec::new(4, 2, 2, 2)?;
    let env = EnvSpec::Transformer(spec.clone());

    let stream = RngStream::new(31);
    let mut rng = stream.substream(0).rng();
    let draw = env.sample_params(1, &mut rng);
    let doc = env.sample_document(&draw, 0, 16, &mut rng);
    println!("sampled 16 tokens (vocab {}): {:?}", spec.vocab, doc.tokens);
    let pmf = env.next_token_pmf(&draw, 0, &doc, doc.len());
    println!("next-token law after that prefix: {:?}", pmf.probs());

    println!("\nlayer contraction, E‖Δf‖²/‖ΔX‖² vs 2(K+K²):");
    let rep = check_layer_lipschitz(4, 2, 2, 20_000, stream.substream(1))?;
    println!("{rep}");

    println!("\nweight perturbation at budget ε, distortion and per-step KL:");
    for epsilon in [0.01, 0.1] {
        let rep = check_perturbation_distortion(4, 2, 2, 2, epsilon, 10_000, stream.substream(2))?;
        println!("{rep}");
        for note in &rep.notes {
            println!("    {note}");
        }
    }
    Ok(())
}
