//! Additive attention pooling:
//! `s_t = u · tanh(W v_t + b)`, `α = softmax(s)`, `out = Σ α_t v_t`.

use rand::Rng;

use super::Parameterized;
use crate::error::{Error, Result};
use crate::tensor::{dot, softmax, Tensor2};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    /// `d_att × d_in`
    pub w: Tensor2,
    /// `d_att × 1`
    pub b: Tensor2,
    /// context vector, `d_att × 1`
    pub u: Tensor2,
}

#[derive(Clone, Debug)]
pub struct AttentionTrace {
    projected: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl AttentionParams {
    pub fn zeros(d_in: usize, d_att: usize) -> Self {
        Self {
            w: Tensor2::zeros(d_att, d_in),
            b: Tensor2::zeros(d_att, 1),
            u: Tensor2::zeros(d_att, 1),
        }
    }

    pub fn init<R: Rng + ?Sized>(d_in: usize, d_att: usize, rng: &mut R) -> Self {
        Self {
            w: Tensor2::glorot(d_att, d_in, rng),
            b: Tensor2::zeros(d_att, 1),
            u: Tensor2::glorot(d_att, 1, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, values: &[Vec<f64>]) -> Result<(Vec<f64>, AttentionTrace)> {
        if values.is_empty() {
            return Err(Error::InvalidInput(
                "attention over an empty sequence".into(),
            ));
        }
        let d = self.input_dim();
        if let Some(v) = values.iter().find(|v| v.len() != d) {
            return Err(Error::dim("attention input", d, v.len()));
        }
        let projected: Vec<Vec<f64>> = values
            .iter()
            .map(|v| {
                let mut a = self.b.values().to_vec();
                self.w.matvec_acc(v, &mut a);
                a.into_iter().map(f64::tanh).collect()
            })
            .collect();
        let scores: Vec<f64> = projected.iter().map(|a| dot(self.u.values(), a)).collect();
        let weights = softmax(&scores);
        let mut out = vec![0.0; d];
        for (alpha, v) in weights.iter().zip(values) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += alpha * x;
            }
        }
        Ok((out, AttentionTrace { projected, weights }))
    }

    pub fn backward(
        &self,
        values: &[Vec<f64>],
        trace: &AttentionTrace,
        d_out: &[f64],
        grads: &mut AttentionParams,
        d_values: &mut [Vec<f64>],
    ) {
        let alphas = &trace.weights;
        let d_alpha: Vec<f64> = values.iter().map(|v| dot(d_out, v)).collect();
        let mean: f64 = alphas.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
        for (t, v) in values.iter().enumerate() {
            for (dv, g) in d_values[t].iter_mut().zip(d_out) {
                *dv += alphas[t] * g;
            }
            let ds = alphas[t] * (d_alpha[t] - mean);
            if ds == 0.0 {
                continue;
            }
            let a = &trace.projected[t];
            grads
                .u
                .add_assign_slice(&a.iter().map(|x| ds * x).collect::<Vec<_>>());
            let da: Vec<f64> = a
                .iter()
                .zip(self.u.values())
                .map(|(x, u)| ds * u * (1.0 - x * x))
                .collect();
            grads.w.outer_acc(&da, v);
            grads.b.add_assign_slice(&da);
            self.w.t_matvec_acc(&da, &mut d_values[t]);
        }
    }
}

impl Parameterized for AttentionParams {
    fn tensors(&self) -> Vec<&Tensor2> {
        vec![&self.w, &self.b, &self.u]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.w, &mut self.b, &mut self.u]
    }
}

pub fn attention_pool(params: &AttentionParams, values: &[Vec<f64>]) -> Result<Vec<f64>> {
    params.forward(values).map(|(o, _)| o)
}
