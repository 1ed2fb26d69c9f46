//! Embedding training with optional lock-free worker threads.

use std::sync::atomic::AtomicU64;

use polarlens_core::embedding::{from_atomic, to_atomic, AtomicRows, Embedding, TrainConfig, Trainer};
use polarlens_core::textnorm::TokenizedCorpus;

/// Strict single-threaded training when `config.threads <= 1`; otherwise
/// Hogwild-style updates from `threads` workers, each owning every
/// `threads`-th document. The parallel result depends on thread timing.
pub fn train(corpus: &TokenizedCorpus, config: TrainConfig) -> polarlens_core::Result<Embedding> {
    let trainer = Trainer::new(corpus, config)?;
    let threads = trainer.config().threads;
    if threads <= 1 {
        return Ok(trainer.train_strict());
    }
    let dim = trainer.config().dim;
    let (input, output) = trainer.initial_params();
    let (input, output) = (to_atomic(&input), to_atomic(&output));
    let progress = AtomicU64::new(0);
    std::thread::scope(|s| {
        for shard in 0..threads {
            let (trainer, input, output, progress) = (&trainer, &input, &output, &progress);
            s.spawn(move || {
                let mut i = AtomicRows::new(input, dim);
                let mut o = AtomicRows::new(output, dim);
                trainer.train_shard(&mut i, &mut o, shard, threads, progress);
            });
        }
    });
    Ok(trainer.finish(&from_atomic(&input)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use polarlens_core::textnorm::{Document, Provenance, TextSource};

    fn corpus() -> TokenizedCorpus {
        let docs = (0..400)
            .map(|i| Document {
                id: i.to_string(),
                tokens: format!("w{} w{} w{} w{}", i % 7, i % 5, i % 3, i % 11).split(' ').map(String::from).collect(),
            })
            .collect();
        TokenizedCorpus::new(docs, Provenance { channel: "c".into(), window: "w".into(), source: TextSource::Comments })
    }

    #[test]
    fn parallel_training_has_the_strict_shape() {
        let cfg = TrainConfig { dim: 16, token_floor: 0, threads: 4, ..Default::default() };
        let strict = train(&corpus(), TrainConfig { threads: 1, ..cfg.clone() }).unwrap();
        let fast = train(&corpus(), cfg).unwrap();
        assert_eq!(strict.vocab(), fast.vocab());
        assert_eq!(strict.vectors().len(), fast.vectors().len());
        assert!(fast.vectors().iter().all(|x| x.is_finite()));
        let again = train(&corpus(), TrainConfig { threads: 1, ..strict.config().clone() }).unwrap();
        assert_eq!(strict, again);
    }
}
