//! The closed-form estimation-error bounds, tabulated.
//!
//! Every bound is per-step nats. The logistic and transformer forms cover a
//! single latent parameter amortized over T steps; the linear-representation
//! and sparse-mixture forms split meta from intra-document cost; the generic
//! entropy form works for any finite latent; the in-context form prices a
//! τ-step query after an M-document prompt.

use seqlab::bounds::{
    entropy_bound, icl_bound, linrep_bound, logistic_bound, misspecified_bound,
    mixture_transformer_bound, sparse_meta_bound, transformer_bound,
};

fn main() -> seqlab::Result<()> {
    println!("logistic  d/(2T)(1+ln(1+T/4d)):");
    for (d, t) in [(2, 10), (2, 100), (8, 100), (32, 1000)] {
        println!("  d={d:<3} T={t:<5} → {:.6}", logistic_bound(d, t)?);
    }

    println!("\ntransformer  (d²+r²)L²ln(4K²)/T + (d²+r²)L·ln(2KT²/L)/(2T):");
    for (d, r, k, l, t) in [(2, 2, 1, 1, 100), (4, 2, 2, 1, 100), (4, 2, 2, 2, 1000)] {
        println!("  d={d} r={r} K={k} L={l} T={t:<5} → {:.6}", transformer_bound(d, r, k, l, t)?);
    }
    match transformer_bound(2, 2, 1, 3, 1) {
        Err(e) => println!("  d=2 r=2 K=1 L=3 T=1     → rejected: {e}"),
        Ok(v) => println!("  d=2 r=2 K=1 L=3 T=1     → {v:.6}"),
    }

    println!("\nlinear representation  dr(1+ln(1+M/r))/(2MT) + r(1+ln(1+2T/r))/(2T):");
    for (d, r, m, t) in [(4, 2, 10, 10), (16, 2, 100, 10), (16, 2, 100, 100)] {
        println!("  d={d:<3} r={r} M={m:<4} T={t:<4} → {:.6}", linrep_bound(d, r, m, t)?);
    }

    println!("\nsparse meta  R·ln(1+M/R)·ln(MN)  (total nats):");
    for (r, m, n) in [(2, 10, 100), (2, 100, 100)] {
        println!("  R={r} M={m:<4} N={n} → {:.6}", sparse_meta_bound(r, m, n)?);
    }

    println!("\nsparse transformer mixture (per step):");
    println!(
        "  d=2 r=2 K=1 L=1 N=10 R=2 M=10 T=10 → {:.6}",
        mixture_transformer_bound(2, 2, 1, 1, 10, 10, 10, 2)?
    );

    println!("\ngeneric entropy  H(ψ)/(MT) + H(θ|ψ)/T:");
    let ln2 = std::f64::consts::LN_2;
    for (m, t) in [(1, 2), (4, 2), (4, 8)] {
        println!("  M={m} T={t} H=ln2 both → {:.6}", entropy_bound(ln2, ln2, m, t)?);
    }

    println!("\nmisspecified extra loss  KL(prior‖alt)/(MT):");
    println!("  KL=0.510826 M=1 T=1 → {:.6}", misspecified_bound(0.5108256237659907, 1, 1)?);

    println!("\nin-context  H(D|θ)/τ + I(H;ψ)/(Mτ) + I(D;θ|ψ)/τ:");
    for (m, tau) in [(1, 1), (8, 1), (8, 16)] {
        let b = icl_bound(0.65, 0.5, 0.3, m, tau)?;
        println!("  M={m} τ={tau:<3} → full {:.6}, large-M {:.6}", b.full, b.large_m);
    }
    Ok(())
}
