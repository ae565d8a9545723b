//! The hierarchical network: chunk encoder, document encoder, concise
//! extraction attention and the prediction head.
//!
//! Forward order for a document of `k` chunks:
//!
//! 1. each chunk's rows (sentinel first) go through the chunk recurrent
//!    layer; the states are max-pooled over time and activated → `fh_i`;
//! 2. `fh_1 … fh_k` go through the document recurrent layer; the states are
//!    max-pooled and activated → `Th`;
//! 3. concise extraction attends over `[fh_1, …, fh_k, Th]` (document vector
//!    last) → `Th^a`;
//! 4. the head applies dropout, an affine map and sigmoid (or softmax).
//!
//! Disabled stages fall back as follows: without chunk semantics `fh_i` is
//! the mean of the chunk's token rows; without document semantics the
//! attention runs over `fh_1 … fh_k` only; without concise extraction the
//! head reads `Th` (or the max-pool of the chunk vectors if the document
//! stage is also off).

mod config;
mod params;

pub use config::{HeadKind, LayerGroup, ModelConfig};
pub use params::ModelParams;

use rand::Rng;

use crate::corpus::EmbeddingSequence;
use crate::error::{Error, Result};
use crate::nn::{
    dropout, max_pool_backward, max_pool_with_argmax, AttentionTrace, BiTrace, Mode, Parameterized,
};
use crate::tensor::{sigmoid, softmax};

struct ChunkCache {
    inputs: Vec<Vec<f64>>,
    learned_sentinel: bool,
    trace: BiTrace,
    states_len: usize,
    argmax: Vec<usize>,
}

struct DocCache {
    trace: BiTrace,
    states: Vec<Vec<f64>>,
    argmax: Vec<usize>,
}

enum HeadSource {
    Attention(AttentionTrace),
    Document,
    ChunkPool(Vec<usize>),
}

/// Everything the forward pass produced, plus what backward needs.
pub struct ForwardTrace {
    /// `fh_1 … fh_k`
    pub chunk_vectors: Vec<Vec<f64>>,
    /// `Th`
    pub document_vector: Option<Vec<f64>>,
    /// `Th^c`, the sequence attention ran over.
    pub concise: Option<Vec<Vec<f64>>>,
    /// `Th^a`
    pub attended: Option<Vec<f64>>,
    pub attention_weights: Option<Vec<f64>>,
    pub logits: Vec<f64>,
    /// Head activations, one per output unit.
    pub outputs: Vec<f64>,
    chunk_caches: Vec<Option<ChunkCache>>,
    doc_cache: Option<DocCache>,
    head_source: HeadSource,
    head_input: Vec<f64>,
    dropout_mask: Vec<f64>,
    h_last: Option<Vec<f64>>,
}

impl ForwardTrace {
    /// Per-label probabilities `Y^p` (length `|L|`). For a two-unit softmax
    /// binary head this is the probability of the positive class.
    pub fn probabilities(&self, config: &ModelConfig) -> Vec<f64> {
        if config.output_units() != config.num_labels {
            vec![self.outputs[1]]
        } else {
            self.outputs.clone()
        }
    }
}

fn check_embeddings(config: &ModelConfig, doc: &[EmbeddingSequence]) -> Result<()> {
    if doc.is_empty() {
        return Err(Error::InvalidInput("document has zero chunks".into()));
    }
    for seq in doc {
        if seq.rows.is_empty() {
            return Err(Error::InvalidInput("chunk embedding has no rows".into()));
        }
        if let Some(r) = seq.rows.iter().find(|r| r.len() != config.embedding_dim) {
            return Err(Error::dim("embedding row", config.embedding_dim, r.len()));
        }
    }
    Ok(())
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    let n = rows.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

pub fn forward<R: Rng + ?Sized>(
    config: &ModelConfig,
    params: &ModelParams,
    doc: &[EmbeddingSequence],
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardTrace> {
    check_embeddings(config, doc)?;
    let act = config.activation;

    let mut chunk_vectors = Vec::with_capacity(doc.len());
    let mut chunk_caches = Vec::with_capacity(doc.len());
    for seq in doc {
        if config.chunk_semantics {
            let mut inputs = seq.rows.clone();
            if seq.learned_sentinel {
                let s = params.sentinel.as_ref().ok_or_else(|| {
                    Error::Config("chunk needs a learned sentinel but the model has none".into())
                })?;
                inputs[0].copy_from_slice(s.values());
            }
            let (states, trace) = params.chunk_rnn.forward(&inputs)?;
            let (pooled, argmax) = max_pool_with_argmax(&states)?;
            chunk_vectors.push(act.apply(&pooled));
            chunk_caches.push(Some(ChunkCache {
                inputs,
                learned_sentinel: seq.learned_sentinel,
                trace,
                states_len: states.len(),
                argmax,
            }));
        } else {
            chunk_vectors.push(mean_rows(seq.token_rows()));
            chunk_caches.push(None);
        }
    }

    let (document_vector, doc_cache) = if config.document_semantics {
        let (states, trace) = params.doc_rnn.forward(&chunk_vectors)?;
        let (pooled, argmax) = max_pool_with_argmax(&states)?;
        (
            Some(act.apply(&pooled)),
            Some(DocCache {
                trace,
                states,
                argmax,
            }),
        )
    } else {
        (None, None)
    };

    let (head_input, head_source, concise, attended, attention_weights) =
        if config.concise_extraction {
            let mut seq = chunk_vectors.clone();
            seq.extend(document_vector.clone());
            let (out, trace) = params.attention.forward(&seq)?;
            let weights = trace.weights.clone();
            (
                out.clone(),
                HeadSource::Attention(trace),
                Some(seq),
                Some(out),
                Some(weights),
            )
        } else if let Some(th) = &document_vector {
            (th.clone(), HeadSource::Document, None, None, None)
        } else {
            let (pooled, argmax) = max_pool_with_argmax(&chunk_vectors)?;
            (pooled, HeadSource::ChunkPool(argmax), None, None, None)
        };

    let (dropped, dropout_mask) = dropout(&head_input, config.dropout, mode, rng);
    let mut logits = crate::nn::dense_forward(&params.head_w, &params.head_b, &dropped)?;
    let h_last = match (&params.head_u, &doc_cache) {
        (Some(u), Some(dc)) if config.recurrent_bias => {
            let h = params.doc_rnn.final_state(&dc.states);
            u.matvec_acc(&h, &mut logits);
            Some(h)
        }
        _ => None,
    };
    let outputs = match config.head {
        HeadKind::Sigmoid => logits.iter().map(|&z| sigmoid(z)).collect(),
        HeadKind::Softmax => softmax(&logits),
    };

    Ok(ForwardTrace {
        chunk_vectors,
        document_vector,
        concise,
        attended,
        attention_weights,
        logits,
        outputs,
        chunk_caches,
        doc_cache,
        head_source,
        head_input: dropped,
        dropout_mask,
        h_last,
    })
}

/// Eval-mode forward pass (dropout off).
pub fn forward_eval(
    config: &ModelConfig,
    params: &ModelParams,
    doc: &[EmbeddingSequence],
) -> Result<ForwardTrace> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    forward(config, params, doc, Mode::Eval, &mut rng)
}

/// Reverse pass from `d_logits` (gradient of the loss w.r.t. the head
/// pre-activations). Returns gradients laid out like `params`.
pub fn backward(
    config: &ModelConfig,
    params: &ModelParams,
    trace: &ForwardTrace,
    d_logits: &[f64],
) -> Result<ModelParams> {
    if d_logits.len() != trace.logits.len() {
        return Err(Error::dim(
            "logit gradient",
            trace.logits.len(),
            d_logits.len(),
        ));
    }
    let mut grads = params.zeros_like();
    let act = config.activation;

    // head
    grads.head_w.outer_acc(d_logits, &trace.head_input);
    grads.head_b.add_assign_slice(d_logits);
    let mut d_dropped = vec![0.0; trace.head_input.len()];
    params.head_w.t_matvec_acc(d_logits, &mut d_dropped);
    let d_head_in: Vec<f64> = d_dropped
        .iter()
        .zip(&trace.dropout_mask)
        .map(|(g, m)| g * m)
        .collect();
    let mut d_h_last = None;
    if let (Some(u), Some(gu), Some(h)) = (&params.head_u, grads.head_u.as_mut(), &trace.h_last) {
        gu.outer_acc(d_logits, h);
        let mut dh = vec![0.0; h.len()];
        u.t_matvec_acc(d_logits, &mut dh);
        d_h_last = Some(dh);
    }

    let k = trace.chunk_vectors.len();
    let mut d_chunk = vec![vec![0.0; config.chunk_width()]; k];
    let mut d_doc_vec = trace.document_vector.as_ref().map(|v| vec![0.0; v.len()]);

    match &trace.head_source {
        HeadSource::Attention(att) => {
            let seq = trace
                .concise
                .as_ref()
                .expect("attention trace implies concise sequence");
            let mut d_seq = vec![vec![0.0; config.chunk_width()]; seq.len()];
            params
                .attention
                .backward(seq, att, &d_head_in, &mut grads.attention, &mut d_seq);
            if let Some(dd) = d_doc_vec.as_mut() {
                let last = d_seq.pop().expect("document vector is the last element");
                *dd = last;
            }
            for (a, b) in d_chunk.iter_mut().zip(d_seq) {
                *a = b;
            }
        }
        HeadSource::Document => {
            d_doc_vec = Some(d_head_in.clone());
        }
        HeadSource::ChunkPool(argmax) => {
            max_pool_backward(argmax, &d_head_in, &mut d_chunk);
        }
    }

    if let Some(dc) = &trace.doc_cache {
        let th = trace
            .document_vector
            .as_ref()
            .expect("document cache implies vector");
        let d_th = d_doc_vec.unwrap_or_else(|| vec![0.0; th.len()]);
        let d_pooled = act.backward(th, &d_th);
        let mut d_states = vec![vec![0.0; config.doc_width()]; dc.states.len()];
        max_pool_backward(&dc.argmax, &d_pooled, &mut d_states);
        if let Some(dh) = &d_h_last {
            params.doc_rnn.final_state_backward(dh, &mut d_states);
        }
        params.doc_rnn.backward(
            &trace.chunk_vectors,
            &dc.trace,
            &d_states,
            &mut grads.doc_rnn,
            Some(&mut d_chunk),
        );
    }

    for ((cache, fh), d_fh) in trace
        .chunk_caches
        .iter()
        .zip(&trace.chunk_vectors)
        .zip(&d_chunk)
    {
        let Some(cache) = cache else { continue };
        let d_pooled = act.backward(fh, d_fh);
        let mut d_states = vec![vec![0.0; params.chunk_rnn.output_dim()]; cache.states_len];
        max_pool_backward(&cache.argmax, &d_pooled, &mut d_states);
        match grads.sentinel.as_mut() {
            Some(gs) if cache.learned_sentinel => {
                let mut d_in = vec![vec![0.0; config.embedding_dim]; cache.inputs.len()];
                params.chunk_rnn.backward(
                    &cache.inputs,
                    &cache.trace,
                    &d_states,
                    &mut grads.chunk_rnn,
                    Some(&mut d_in),
                );
                gs.add_assign_slice(&d_in[0]);
            }
            _ => params.chunk_rnn.backward(
                &cache.inputs,
                &cache.trace,
                &d_states,
                &mut grads.chunk_rnn,
                None,
            ),
        }
    }

    for ((name, _), t) in grads.layout().into_iter().zip(grads.tensors()) {
        if !t.is_finite() {
            return Err(Error::NanGradient { name });
        }
    }
    Ok(grads)
}

/// Thresholded prediction: label `j` is on iff `Y^p[j] >= thresholds[j]`.
pub fn predict(
    config: &ModelConfig,
    params: &ModelParams,
    doc: &[EmbeddingSequence],
    thresholds: &[f64],
) -> Result<Vec<bool>> {
    if thresholds.len() != config.num_labels {
        return Err(Error::dim(
            "threshold count",
            config.num_labels,
            thresholds.len(),
        ));
    }
    let probs = forward_eval(config, params, doc)?.probabilities(config);
    Ok(binarize(&probs, thresholds))
}

pub fn binarize(probs: &[f64], thresholds: &[f64]) -> Vec<bool> {
    probs.iter().zip(thresholds).map(|(p, t)| p >= t).collect()
}
