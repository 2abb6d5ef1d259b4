//! Desk-scale training run on the synthetic environment.
//!
//! `cargo run --release -p crl-core --example desk_run -- [crl_fraction] [threads]`
//!
//! Set `CRL_CONFIG` to a TOML training config to override the desk preset.

use crl_core::policy::make_synthetic_corpus;
use crl_core::trainer::{train_with, TrainConfig};
use std::time::Instant;

fn main() {
    let mut args = std::env::args().skip(1);
    let crl_fraction: f64 = args
        .next()
        .map_or(0.2, |a| a.parse().expect("crl_fraction"));
    let threads: usize = args.next().map_or(1, |a| a.parse().expect("threads"));
    let mut cfg = TrainConfig {
        crl_fraction,
        threads,
        ..TrainConfig::desk()
    };
    if let Ok(path) = std::env::var("CRL_CONFIG") {
        cfg = TrainConfig::load(path).expect("config");
        cfg.crl_fraction = crl_fraction;
        cfg.threads = threads;
    }
    let (problems, critiques) = make_synthetic_corpus(500, 16, 42);
    let t0 = Instant::now();
    let out = train_with(&cfg, &problems, &critiques, |m| {
        if let Some(v) = m.val_score {
            println!(
                "step {:>3} phase {} r_rl {:.3} crl_acc {:.3} len {:.1} kl {:.4} | val {:.3} val_crl {:.3}",
                m.step,
                m.phase,
                m.mean_r_rl.unwrap_or(f64::NAN),
                m.crl_accuracy.unwrap_or(f64::NAN),
                m.mean_output_len,
                m.kl,
                v,
                m.val_crl_accuracy.unwrap_or(f64::NAN)
            );
        }
        Ok(())
    })
    .expect("training failed");
    println!(
        "best step {} score {:.4} crl accuracy {:?}; {:.1}s",
        out.best.step,
        out.best.score,
        out.best.crl_accuracy,
        t0.elapsed().as_secs_f64()
    );
}
