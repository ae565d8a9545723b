//! GRU and LSTM cells, unrolled over a sequence, plus the bidirectional
//! wrapper.
//!
//! GRU (gates `z`, `r`, `n`):
//!
//! ```text
//! z  = σ(Wz x + Uz h + bz)
//! r  = σ(Wr x + Ur h + br)
//! n  = tanh(Wn x + Un (r ⊙ h) + bn)
//! h' = (1 - z) ⊙ h + z ⊙ n
//! ```
//!
//! LSTM (gates `i`, `f`, `o`, `g`):
//!
//! ```text
//! i, f, o = σ(W· x + U· h + b·)
//! g       = tanh(Wg x + Ug h + bg)
//! c'      = f ⊙ c + i ⊙ g
//! h'      = o ⊙ tanh(c')
//! ```
//!
//! The initial hidden (and cell) state is zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Parameterized;
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Tensor2};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    #[default]
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["z", "r", "n"],
            CellKind::Lstm => &["i", "f", "o", "g"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq)]
struct Gate {
    w: Tensor2,
    u: Tensor2,
    b: Tensor2,
}

impl Gate {
    /// `W x + U h + b`
    fn preact(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut a = self.b.values().to_vec();
        self.w.matvec_acc(x, &mut a);
        self.u.matvec_acc(h, &mut a);
        a
    }

    fn accumulate(&mut self, da: &[f64], x: &[f64], h: &[f64]) {
        self.w.outer_acc(da, x);
        self.u.outer_acc(da, h);
        self.b.add_assign_slice(da);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentCell {
    kind: CellKind,
    input_dim: usize,
    hidden: usize,
    gates: Vec<Gate>,
}

#[derive(Clone, Debug)]
enum StepCache {
    Gru {
        h_prev: Vec<f64>,
        z: Vec<f64>,
        r: Vec<f64>,
        n: Vec<f64>,
        rh: Vec<f64>,
    },
    Lstm {
        h_prev: Vec<f64>,
        c_prev: Vec<f64>,
        i: Vec<f64>,
        f: Vec<f64>,
        o: Vec<f64>,
        g: Vec<f64>,
        tanh_c: Vec<f64>,
    },
}

/// Intermediate values of one unrolled pass, in processing order.
#[derive(Clone, Debug)]
pub struct CellTrace {
    steps: Vec<StepCache>,
    reverse: bool,
}

impl RecurrentCell {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden: usize) -> Self {
        let gates = kind
            .gate_names()
            .iter()
            .map(|_| Gate {
                w: Tensor2::zeros(hidden, input_dim),
                u: Tensor2::zeros(hidden, hidden),
                b: Tensor2::zeros(hidden, 1),
            })
            .collect();
        Self {
            kind,
            input_dim,
            hidden,
            gates,
        }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn init<R: Rng + ?Sized>(
        kind: CellKind,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut cell = Self::zeros(kind, input_dim, hidden);
        for g in &mut cell.gates {
            g.w = Tensor2::glorot(hidden, input_dim, rng);
            g.u = Tensor2::glorot(hidden, hidden, rng);
        }
        cell
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// `(W, U, b)` of the named gate.
    pub fn gate(&self, name: &str) -> Option<(&Tensor2, &Tensor2, &Tensor2)> {
        let idx = self.kind.gate_names().iter().position(|g| *g == name)?;
        let g = &self.gates[idx];
        Some((&g.w, &g.u, &g.b))
    }

    pub fn gate_mut(&mut self, name: &str) -> Option<(&mut Tensor2, &mut Tensor2, &mut Tensor2)> {
        let idx = self.kind.gate_names().iter().position(|g| *g == name)?;
        let g = &mut self.gates[idx];
        Some((&mut g.w, &mut g.u, &mut g.b))
    }

    /// Tensor names in [`Parameterized::tensors`] order, e.g. `Wz`, `Uz`, `bz`.
    pub fn tensor_names(&self) -> Vec<String> {
        self.kind
            .gate_names()
            .iter()
            .flat_map(|g| [format!("W{g}"), format!("U{g}"), format!("b{g}")])
            .collect()
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput(
                "recurrent layer over an empty sequence".into(),
            ));
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != self.input_dim) {
            return Err(Error::dim("recurrent input", self.input_dim, x.len()));
        }
        Ok(())
    }

    /// Unrolls the cell. With `reverse` the sequence is consumed from the
    /// end; outputs are always returned aligned with `inputs`.
    pub fn run(&self, inputs: &[Vec<f64>], reverse: bool) -> Result<(Vec<Vec<f64>>, CellTrace)> {
        self.check_inputs(inputs)?;
        let len = inputs.len();
        let hsz = self.hidden;
        let mut outputs = vec![Vec::new(); len];
        let mut steps = Vec::with_capacity(len);
        let mut h = vec![0.0; hsz];
        let mut c = vec![0.0; hsz];
        for s in 0..len {
            let pos = if reverse { len - 1 - s } else { s };
            let x = &inputs[pos];
            match self.kind {
                CellKind::Gru => {
                    let z: Vec<f64> = self.gates[0]
                        .preact(x, &h)
                        .into_iter()
                        .map(sigmoid)
                        .collect();
                    let r: Vec<f64> = self.gates[1]
                        .preact(x, &h)
                        .into_iter()
                        .map(sigmoid)
                        .collect();
                    let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
                    let n: Vec<f64> = self.gates[2]
                        .preact(x, &rh)
                        .into_iter()
                        .map(f64::tanh)
                        .collect();
                    let h_new: Vec<f64> = (0..hsz)
                        .map(|j| (1.0 - z[j]) * h[j] + z[j] * n[j])
                        .collect();
                    let h_prev = std::mem::replace(&mut h, h_new);
                    steps.push(StepCache::Gru {
                        h_prev,
                        z,
                        r,
                        n,
                        rh,
                    });
                }
                CellKind::Lstm => {
                    let i: Vec<f64> = self.gates[0]
                        .preact(x, &h)
                        .into_iter()
                        .map(sigmoid)
                        .collect();
                    let f: Vec<f64> = self.gates[1]
                        .preact(x, &h)
                        .into_iter()
                        .map(sigmoid)
                        .collect();
                    let o: Vec<f64> = self.gates[2]
                        .preact(x, &h)
                        .into_iter()
                        .map(sigmoid)
                        .collect();
                    let g: Vec<f64> = self.gates[3]
                        .preact(x, &h)
                        .into_iter()
                        .map(f64::tanh)
                        .collect();
                    let c_new: Vec<f64> = (0..hsz).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
                    let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
                    let h_new: Vec<f64> = (0..hsz).map(|j| o[j] * tanh_c[j]).collect();
                    let h_prev = std::mem::replace(&mut h, h_new);
                    let c_prev = std::mem::replace(&mut c, c_new);
                    steps.push(StepCache::Lstm {
                        h_prev,
                        c_prev,
                        i,
                        f,
                        o,
                        g,
                        tanh_c,
                    });
                }
            }
            outputs[pos] = h.clone();
        }
        Ok((outputs, CellTrace { steps, reverse }))
    }

    /// Backpropagation through time. `d_outputs` is aligned with `inputs`;
    /// parameter gradients are added into `grads`, input gradients into
    /// `d_inputs` when given.
    pub fn backprop(
        &self,
        inputs: &[Vec<f64>],
        trace: &CellTrace,
        d_outputs: &[Vec<f64>],
        grads: &mut RecurrentCell,
        mut d_inputs: Option<&mut [Vec<f64>]>,
    ) {
        let len = inputs.len();
        let hsz = self.hidden;
        let mut dh_carry = vec![0.0; hsz];
        let mut dc_carry = vec![0.0; hsz];
        for s in (0..len).rev() {
            let pos = if trace.reverse { len - 1 - s } else { s };
            let x = &inputs[pos];
            let dh: Vec<f64> = d_outputs[pos]
                .iter()
                .zip(&dh_carry)
                .map(|(a, b)| a + b)
                .collect();
            let mut dh_prev = vec![0.0; hsz];
            let mut dx = d_inputs.as_ref().map(|_| vec![0.0; self.input_dim]);
            match &trace.steps[s] {
                StepCache::Gru {
                    h_prev,
                    z,
                    r,
                    n,
                    rh,
                } => {
                    let mut da_n = vec![0.0; hsz];
                    let mut da_z = vec![0.0; hsz];
                    for j in 0..hsz {
                        dh_prev[j] = dh[j] * (1.0 - z[j]);
                        da_n[j] = dh[j] * z[j] * (1.0 - n[j] * n[j]);
                        da_z[j] = dh[j] * (n[j] - h_prev[j]) * z[j] * (1.0 - z[j]);
                    }
                    grads.gates[2].accumulate(&da_n, x, rh);
                    let mut d_rh = vec![0.0; hsz];
                    self.gates[2].u.t_matvec_acc(&da_n, &mut d_rh);
                    let mut da_r = vec![0.0; hsz];
                    for j in 0..hsz {
                        da_r[j] = d_rh[j] * h_prev[j] * r[j] * (1.0 - r[j]);
                        dh_prev[j] += d_rh[j] * r[j];
                    }
                    grads.gates[0].accumulate(&da_z, x, h_prev);
                    grads.gates[1].accumulate(&da_r, x, h_prev);
                    self.gates[0].u.t_matvec_acc(&da_z, &mut dh_prev);
                    self.gates[1].u.t_matvec_acc(&da_r, &mut dh_prev);
                    if let Some(dx) = dx.as_mut() {
                        self.gates[0].w.t_matvec_acc(&da_z, dx);
                        self.gates[1].w.t_matvec_acc(&da_r, dx);
                        self.gates[2].w.t_matvec_acc(&da_n, dx);
                    }
                }
                StepCache::Lstm {
                    h_prev,
                    c_prev,
                    i,
                    f,
                    o,
                    g,
                    tanh_c,
                } => {
                    let mut das = vec![vec![0.0; hsz]; 4];
                    for j in 0..hsz {
                        let dc = dc_carry[j] + dh[j] * o[j] * (1.0 - tanh_c[j] * tanh_c[j]);
                        das[0][j] = dc * g[j] * i[j] * (1.0 - i[j]);
                        das[1][j] = dc * c_prev[j] * f[j] * (1.0 - f[j]);
                        das[2][j] = dh[j] * tanh_c[j] * o[j] * (1.0 - o[j]);
                        das[3][j] = dc * i[j] * (1.0 - g[j] * g[j]);
                        dc_carry[j] = dc * f[j];
                    }
                    for (k, da) in das.iter().enumerate() {
                        grads.gates[k].accumulate(da, x, h_prev);
                        self.gates[k].u.t_matvec_acc(da, &mut dh_prev);
                        if let Some(dx) = dx.as_mut() {
                            self.gates[k].w.t_matvec_acc(da, dx);
                        }
                    }
                }
            }
            if let (Some(d_in), Some(dx)) = (d_inputs.as_deref_mut(), dx) {
                for (a, b) in d_in[pos].iter_mut().zip(dx) {
                    *a += b;
                }
            }
            dh_carry = dh_prev;
        }
    }
}

impl Parameterized for RecurrentCell {
    fn tensors(&self) -> Vec<&Tensor2> {
        self.gates.iter().flat_map(|g| [&g.w, &g.u, &g.b]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        self.gates
            .iter_mut()
            .flat_map(|g| [&mut g.w, &mut g.u, &mut g.b])
            .collect()
    }
}

/// One hidden state per timestep, starting from the zero state. The backward
/// direction consumes the reversed sequence; its outputs are realigned to the
/// input positions.
pub fn recurrent_forward(
    params: &RecurrentCell,
    inputs: &[Vec<f64>],
    direction: Direction,
) -> Result<Vec<Vec<f64>>> {
    params
        .run(inputs, direction == Direction::Backward)
        .map(|(out, _)| out)
}

/// Forward cell plus an optional backward cell. Output width is `H` for a
/// single direction and `2H` when bidirectional.
#[derive(Clone, Debug, PartialEq)]
pub struct BiRecurrent {
    pub fwd: RecurrentCell,
    pub bwd: Option<RecurrentCell>,
}

#[derive(Clone, Debug)]
pub struct BiTrace {
    fwd: CellTrace,
    bwd: Option<CellTrace>,
}

impl BiRecurrent {
    pub fn init<R: Rng + ?Sized>(
        kind: CellKind,
        bidirectional: bool,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let fwd = RecurrentCell::init(kind, input_dim, hidden, rng);
        let bwd = bidirectional.then(|| RecurrentCell::init(kind, input_dim, hidden, rng));
        Self { fwd, bwd }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden() * if self.bwd.is_some() { 2 } else { 1 }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, BiTrace)> {
        let (f_out, f_trace) = self.fwd.run(inputs, false)?;
        match &self.bwd {
            None => Ok((
                f_out,
                BiTrace {
                    fwd: f_trace,
                    bwd: None,
                },
            )),
            Some(bwd) => {
                let (b_out, b_trace) = bwd.run(inputs, true)?;
                let out = f_out
                    .into_iter()
                    .zip(b_out)
                    .map(|(mut f, b)| {
                        f.extend(b);
                        f
                    })
                    .collect();
                Ok((
                    out,
                    BiTrace {
                        fwd: f_trace,
                        bwd: Some(b_trace),
                    },
                ))
            }
        }
    }

    /// The state each direction ends in: forward state at the last position
    /// and (if present) backward state at position 0.
    pub fn final_state(&self, outputs: &[Vec<f64>]) -> Vec<f64> {
        let h = self.fwd.hidden();
        let mut out = outputs[outputs.len() - 1][..h].to_vec();
        if self.bwd.is_some() {
            out.extend_from_slice(&outputs[0][h..]);
        }
        out
    }

    /// Adds the gradient of a loss w.r.t. [`Self::final_state`] into the
    /// per-position output gradients.
    pub fn final_state_backward(&self, d_final: &[f64], d_outputs: &mut [Vec<f64>]) {
        let h = self.fwd.hidden();
        let last = d_outputs.len() - 1;
        for j in 0..h {
            d_outputs[last][j] += d_final[j];
        }
        if self.bwd.is_some() {
            for j in 0..h {
                d_outputs[0][h + j] += d_final[h + j];
            }
        }
    }

    pub fn backward(
        &self,
        inputs: &[Vec<f64>],
        trace: &BiTrace,
        d_outputs: &[Vec<f64>],
        grads: &mut BiRecurrent,
        mut d_inputs: Option<&mut [Vec<f64>]>,
    ) {
        let h = self.fwd.hidden();
        let d_fwd: Vec<Vec<f64>> = d_outputs.iter().map(|d| d[..h].to_vec()).collect();
        self.fwd.backprop(
            inputs,
            &trace.fwd,
            &d_fwd,
            &mut grads.fwd,
            d_inputs.as_deref_mut(),
        );
        if let (Some(bwd), Some(b_trace), Some(g_bwd)) = (&self.bwd, &trace.bwd, grads.bwd.as_mut())
        {
            let d_bwd: Vec<Vec<f64>> = d_outputs.iter().map(|d| d[h..].to_vec()).collect();
            bwd.backprop(inputs, b_trace, &d_bwd, g_bwd, d_inputs);
        }
    }
}

impl Parameterized for BiRecurrent {
    fn tensors(&self) -> Vec<&Tensor2> {
        let mut t = self.fwd.tensors();
        if let Some(b) = &self.bwd {
            t.extend(b.tensors());
        }
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut t = self.fwd.tensors_mut();
        if let Some(b) = &mut self.bwd {
            t.extend(b.tensors_mut());
        }
        t
    }
}

/// Concatenated forward/backward states per timestep.
pub fn bidirectional(
    params_fwd: &RecurrentCell,
    params_bwd: &RecurrentCell,
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if params_fwd.input_dim() != params_bwd.input_dim() {
        return Err(Error::dim(
            "bidirectional input dims",
            params_fwd.input_dim(),
            params_bwd.input_dim(),
        ));
    }
    if params_fwd.hidden() != params_bwd.hidden() {
        return Err(Error::dim(
            "bidirectional hidden dims",
            params_fwd.hidden(),
            params_bwd.hidden(),
        ));
    }
    let bi = BiRecurrent {
        fwd: params_fwd.clone(),
        bwd: Some(params_bwd.clone()),
    };
    bi.forward(inputs).map(|(o, _)| o)
}
