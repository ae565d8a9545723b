use rand::Rng;

use super::config::{LayerGroup, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{AttentionParams, BiRecurrent, Parameterized, RecurrentCell};
use crate::tensor::Tensor2;
use crate::tensor_file::TensorFile;

/// Every trainable tensor of the network. Tensors of disabled stages are
/// still allocated so checkpoints keep a fixed layout; the optimiser leaves
/// them untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub chunk_rnn: BiRecurrent,
    pub doc_rnn: BiRecurrent,
    pub attention: AttentionParams,
    /// `units × head_input_width`
    pub head_w: Tensor2,
    pub head_b: Tensor2,
    /// `units × doc_width`, present when the recurrent bias term is enabled.
    pub head_u: Option<Tensor2>,
    /// `embedding_dim × 1`, present for learned-sentinel configurations.
    pub sentinel: Option<Tensor2>,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let chunk_rnn = BiRecurrent::init(
            config.gate,
            config.bidirectional,
            config.embedding_dim,
            config.chunk_hidden,
            rng,
        );
        let doc_rnn = BiRecurrent::init(
            config.gate,
            config.bidirectional,
            config.chunk_width(),
            config.doc_hidden,
            rng,
        );
        let attention = AttentionParams::init(config.chunk_width(), config.attention_dim, rng);
        let units = config.output_units();
        let head_w = Tensor2::glorot(units, config.head_input_width(), rng);
        let head_b = Tensor2::zeros(units, 1);
        let head_u = config
            .recurrent_bias
            .then(|| Tensor2::glorot(units, config.doc_width(), rng));
        let sentinel = config
            .learned_sentinel
            .then(|| Tensor2::glorot(config.embedding_dim, 1, rng));
        Ok(Self {
            chunk_rnn,
            doc_rnn,
            attention,
            head_w,
            head_b,
            head_u,
            sentinel,
        })
    }

    /// Same layout as [`ModelParams::init`] with every entry zero.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        Ok(Self::init(config, &mut rng)?.zeros_like())
    }

    /// `(name, group)` for each tensor, in [`Parameterized::tensors`] order.
    pub fn layout(&self) -> Vec<(String, LayerGroup)> {
        let mut out = Vec::new();
        let mut rnn = |prefix: &str, bi: &BiRecurrent, group: LayerGroup| {
            let kind = bi.fwd.kind().as_str();
            let dirs: Vec<(&str, &RecurrentCell)> = std::iter::once(("fwd", &bi.fwd))
                .chain(bi.bwd.as_ref().map(|b| ("bwd", b)))
                .collect();
            for (dir, cell) in dirs {
                for n in cell.tensor_names() {
                    out.push((format!("{prefix}_{kind}.{dir}.{n}"), group));
                }
            }
        };
        rnn("chunk", &self.chunk_rnn, LayerGroup::ChunkRecurrent);
        rnn("doc", &self.doc_rnn, LayerGroup::DocumentRecurrent);
        for n in ["W", "b", "u"] {
            out.push((format!("attention.{n}"), LayerGroup::Attention));
        }
        out.push(("head.W".into(), LayerGroup::Head));
        out.push(("head.b".into(), LayerGroup::Head));
        if self.head_u.is_some() {
            out.push(("head.U".into(), LayerGroup::Head));
        }
        if self.sentinel.is_some() {
            out.push(("sentinel".into(), LayerGroup::SentinelEmbedding));
        }
        out
    }

    /// Serialises into the tensor container: one entry per tensor, dimension
    /// 1, the flattened row-major values as rows.
    pub fn to_tensor_file(&self) -> TensorFile {
        let mut file = TensorFile::new(1);
        for ((name, _), t) in self.layout().into_iter().zip(self.tensors()) {
            let flat = Tensor2::from_vec(t.len(), 1, t.values().to_vec()).expect("flat shape");
            file.push(name, 0, flat).expect("width 1");
        }
        file
    }

    /// Fills a parameter set laid out for `config` from a tensor container,
    /// checking names and element counts.
    pub fn from_tensor_file(config: &ModelConfig, file: &TensorFile) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let layout = params.layout();
        if file.entries.len() != layout.len() {
            return Err(Error::Checkpoint(format!(
                "parameter file has {} tensors, configuration expects {}",
                file.entries.len(),
                layout.len()
            )));
        }
        if file.dimension != 1 {
            return Err(Error::Checkpoint(format!(
                "parameter file dimension {} (expected 1)",
                file.dimension
            )));
        }
        for (((name, _), t), entry) in layout.iter().zip(params.tensors_mut()).zip(&file.entries) {
            if &entry.id != name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor `{name}`, found `{}`",
                    entry.id
                )));
            }
            if entry.data.len() != t.len() {
                return Err(Error::dim(
                    format!("tensor `{name}`"),
                    t.len(),
                    entry.data.len(),
                ));
            }
            t.values_mut().copy_from_slice(entry.data.values());
        }
        Ok(params)
    }
}

impl Parameterized for ModelParams {
    fn tensors(&self) -> Vec<&Tensor2> {
        let mut t = self.chunk_rnn.tensors();
        t.extend(self.doc_rnn.tensors());
        t.extend(self.attention.tensors());
        t.push(&self.head_w);
        t.push(&self.head_b);
        t.extend(self.head_u.as_ref());
        t.extend(self.sentinel.as_ref());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut t = self.chunk_rnn.tensors_mut();
        t.extend(self.doc_rnn.tensors_mut());
        t.extend(self.attention.tensors_mut());
        t.push(&mut self.head_w);
        t.push(&mut self.head_b);
        t.extend(self.head_u.as_mut());
        t.extend(self.sentinel.as_mut());
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::CellKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ModelConfig {
        ModelConfig {
            num_labels: 3,
            embedding_dim: 4,
            chunk_hidden: 2,
            doc_hidden: 2,
            attention_dim: 3,
            recurrent_bias: true,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn layout_names_and_shapes() {
        let p = ModelParams::init(&cfg(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let layout = p.layout();
        assert_eq!(layout.len(), p.tensors().len());
        assert_eq!(layout[0].0, "chunk_gru.fwd.Wz");
        assert!(layout.iter().any(|(n, _)| n == "doc_gru.bwd.Un"));
        assert_eq!(layout.last().unwrap().0, "sentinel");
        assert_eq!(p.head_w.rows(), 3);
        assert_eq!(p.head_w.cols(), 4);
        assert_eq!(p.head_u.as_ref().unwrap().cols(), 4);
        // biases start at zero
        assert!(p.head_b.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_layout_uses_four_gates() {
        let c = ModelConfig {
            gate: CellKind::Lstm,
            bidirectional: false,
            doc_hidden: 2,
            chunk_hidden: 2,
            ..cfg()
        };
        let p = ModelParams::init(&c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let chunk: Vec<_> = p
            .layout()
            .into_iter()
            .filter(|(_, g)| *g == LayerGroup::ChunkRecurrent)
            .collect();
        assert_eq!(chunk.len(), 12);
        assert_eq!(chunk[3].0, "chunk_lstm.fwd.Wf");
    }

    #[test]
    fn tensor_file_round_trip() {
        let c = cfg();
        let p = ModelParams::init(&c, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let file = TensorFile::from_bytes(&p.to_tensor_file().to_bytes()).unwrap();
        let back = ModelParams::from_tensor_file(&c, &file).unwrap();
        for (a, b) in p.tensors().iter().zip(back.tensors()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        let other = ModelConfig {
            recurrent_bias: false,
            ..c
        };
        assert!(ModelParams::from_tensor_file(&other, &file).is_err());
    }
}
