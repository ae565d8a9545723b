use super::*;
use crate::corpus::TaskKind;
use crate::nn::Activation;
use crate::pipeline::embed_corpus;
use crate::synthetic::{generate, SyntheticSettings};

fn small_model() -> ModelConfig {
    ModelConfig {
        task: TaskKind::MultiLabel,
        num_labels: 4,
        embedding_dim: 16,
        chunk_size: 16,
        chunk_hidden: 6,
        doc_hidden: 6,
        attention_dim: 6,
        dropout: 0.0,
        activation: Activation::Relu,
        ..ModelConfig::default()
    }
}

fn corpus(docs: usize) -> Vec<EmbeddedDocument> {
    let c = generate(&SyntheticSettings {
        documents: docs,
        ..SyntheticSettings::overfit()
    })
    .unwrap();
    embed_corpus(&c.source(), &c.documents, 16, 4, None).unwrap()
}

fn fast(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: Some(8),
        l2: 0.0,
        learning_rates: [
            ("chunk-recurrent", 1e-2),
            ("document-recurrent", 1e-2),
            ("attention", 1e-2),
            ("head", 1e-2),
            ("sentinel-embedding", 1e-2),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let m = small_model();
    let init = init_params(&m, 1).unwrap();
    let out = train(&m, &corpus(8), None, &fast(0), init.clone()).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.best.params, init);
    assert_eq!(out.last.params, init);
    assert_eq!(out.best.epoch, 0);
    assert!(out.diverged.is_none());
}

#[test]
fn identical_seeds_give_identical_runs() {
    let m = ModelConfig {
        dropout: 0.5,
        ..small_model()
    };
    let docs = corpus(16);
    let run = || train(&m, &docs, None, &fast(2), init_params(&m, 3).unwrap()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.log[0].train_loss.to_bits(), b.log[0].train_loss.to_bits());
    assert_eq!(a.last.params, b.last.params);
    let other = TrainConfig {
        seed: 43,
        ..fast(2)
    };
    let c = train(&m, &docs, None, &other, init_params(&m, 3).unwrap()).unwrap();
    assert_ne!(a.log[0].train_loss, c.log[0].train_loss);
}

#[test]
fn small_steps_on_a_fixed_batch_descend() {
    let m = small_model();
    let docs = corpus(8);
    let batch: Vec<&EmbeddedDocument> = docs.iter().collect();
    let cfg = TrainConfig {
        l2: 0.0,
        learning_rates: [
            ("chunk-recurrent", 1e-4),
            ("document-recurrent", 1e-4),
            ("attention", 1e-4),
            ("head", 1e-4),
            ("sentinel-embedding", 1e-4),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(&m, &cfg, init_params(&m, 5).unwrap()).unwrap();
    let mut prev = f64::INFINITY;
    for _ in 0..20 {
        let l = t.step(&batch).unwrap();
        assert!(l <= prev + 1e-9, "loss rose from {prev} to {l}");
        prev = l;
    }
    let (last, _) = t.batch_gradient(&batch).unwrap();
    assert!(last < prev);
}

#[test]
fn shuffling_permutes_without_loss() {
    let mut s = EpochShuffler::new(42, true);
    let a = s.next_order(50);
    let b = s.next_order(50);
    assert_ne!(a, b);
    for order in [a, b] {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
    assert_eq!(
        EpochShuffler::new(42, false).next_order(5),
        vec![0, 1, 2, 3, 4]
    );
}

#[test]
fn disabled_stage_parameters_never_move() {
    let m = ModelConfig {
        concise_extraction: false,
        ..small_model()
    };
    let init = init_params(&m, 6).unwrap();
    let cfg = TrainConfig {
        l2: 1e-3,
        ..fast(2)
    };
    let out = train(&m, &corpus(8), None, &cfg, init.clone()).unwrap();
    assert_eq!(out.last.params.attention, init.attention);
    assert_ne!(out.last.params.head_w, init.head_w);
}

#[test]
fn nan_inputs_stop_training_with_last_good_parameters() {
    let m = small_model();
    let mut docs = corpus(8);
    docs[3].chunks[0].rows[1][0] = f64::NAN;
    let init = init_params(&m, 7).unwrap();
    let cfg = TrainConfig {
        shuffle: false,
        ..fast(3)
    };
    let out = train(&m, &docs, None, &cfg, init.clone()).unwrap();
    let d = out.diverged.expect("diverged");
    assert_eq!(d.epoch, 1);
    assert_eq!(d.step, 1);
    assert_eq!(out.last.params, init);
    assert!(out.log.is_empty());
}

#[test]
fn learns_the_marker_corpus() {
    let m = small_model();
    let docs = corpus(32);
    let cfg = TrainConfig {
        batch_size: Some(4),
        ..fast(30)
    };
    let out = train(&m, &docs, None, &cfg, init_params(&m, 42).unwrap()).unwrap();
    let first = out.log.first().unwrap().train_loss;
    let last = out.log.last().unwrap().train_loss;
    assert!(last < 0.5 * first, "loss {first} → {last}");
    assert!(out.best.score >= 0.9, "best macro-F1 {}", out.best.score);
    assert!(out.log.iter().filter(|r| r.selected).count() >= 1);
}
