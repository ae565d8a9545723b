//! Central finite differences for verifying analytic gradients.
//!
//! Only the forward loss is evaluated here, so the numeric gradient is
//! independent of any backward implementation it is compared against.

use super::Parameterized;
use crate::tensor::Tensor2;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Absolute floor on the relative-error denominator, so entries whose true
/// gradient is (numerically) zero are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// `(L(θ + h e_i) - L(θ - h e_i)) / 2h` for every entry of every tensor.
pub fn numeric_gradient<P, F>(params: &P, loss: F, step: f64) -> Vec<Tensor2>
where
    P: Parameterized + Clone,
    F: Fn(&P) -> f64,
{
    let mut work = params.clone();
    let shapes: Vec<(usize, usize)> = params
        .tensors()
        .iter()
        .map(|t| (t.rows(), t.cols()))
        .collect();
    let mut out: Vec<Tensor2> = shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect();
    for (ti, grad) in out.iter_mut().enumerate() {
        for k in 0..grad.len() {
            let orig = work.tensors()[ti].values()[k];
            work.tensors_mut()[ti].values_mut()[k] = orig + step;
            let plus = loss(&work);
            work.tensors_mut()[ti].values_mut()[k] = orig - step;
            let minus = loss(&work);
            work.tensors_mut()[ti].values_mut()[k] = orig;
            grad.values_mut()[k] = (plus - minus) / (2.0 * step);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, entry index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub entries: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

pub fn compare(analytic: &[&Tensor2], numeric: &[Tensor2]) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "tensor count mismatch");
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries: 0,
    };
    for (ti, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert_eq!(a.len(), n.len(), "tensor {ti} shape mismatch");
        for (k, (&av, &nv)) in a.values().iter().zip(n.values()).enumerate() {
            report.entries += 1;
            let e = relative_error(av, nv);
            if e > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(e);
                report.worst = Some((ti, k, av, nv));
            }
        }
    }
    report
}

/// Numeric gradient of `loss` compared against the analytic gradient set
/// `grads` (same structure as `params`).
pub fn check<P, F>(params: &P, grads: &P, loss: F, step: f64) -> GradCheckReport
where
    P: Parameterized + Clone,
    F: Fn(&P) -> f64,
{
    let numeric = numeric_gradient(params, loss, step);
    compare(&grads.tensors(), &numeric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{
        max_pool_backward, max_pool_with_argmax, Activation, AttentionParams, BiRecurrent, CellKind,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-4;

    fn seq(rng: &mut ChaCha8Rng, len: usize, d: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    /// Non-linear scalar readout of a sequence: Σ c·o + ½ Σ o².
    fn readout(outs: &[Vec<f64>], coef: &[Vec<f64>]) -> f64 {
        outs.iter()
            .flatten()
            .zip(coef.iter().flatten())
            .map(|(o, c)| c * o + 0.5 * o * o)
            .sum()
    }

    fn readout_grad(outs: &[Vec<f64>], coef: &[Vec<f64>]) -> Vec<Vec<f64>> {
        outs.iter()
            .zip(coef)
            .map(|(o, c)| o.iter().zip(c).map(|(o, c)| c + o).collect())
            .collect()
    }

    #[test]
    fn recurrent_layers_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [CellKind::Gru, CellKind::Lstm] {
            for bidir in [false, true] {
                let mut layer = BiRecurrent::init(kind, bidir, 3, 2, &mut rng);
                for t in layer.tensors_mut() {
                    for v in t.values_mut() {
                        *v += rng.gen_range(-0.3..0.3);
                    }
                }
                let xs = seq(&mut rng, 4, 3);
                let coef = seq(&mut rng, 4, layer.output_dim());
                let (outs, trace) = layer.forward(&xs).unwrap();
                let mut grads = layer.zeros_like();
                let mut d_in = vec![vec![0.0; 3]; 4];
                layer.backward(
                    &xs,
                    &trace,
                    &readout_grad(&outs, &coef),
                    &mut grads,
                    Some(&mut d_in),
                );
                let report = check(
                    &layer,
                    &grads,
                    |p: &BiRecurrent| readout(&p.forward(&xs).unwrap().0, &coef),
                    DEFAULT_STEP,
                );
                assert!(report.passes(TOL), "{kind:?} bidir={bidir}: {report:?}");

                // input gradient through a wrapper holding the inputs as a tensor
                let x_t = InputHolder(Tensor2::from_vec(4, 3, xs.concat()).unwrap());
                let numeric = numeric_gradient(
                    &x_t,
                    |h: &InputHolder| readout(&layer.forward(&h.rows()).unwrap().0, &coef),
                    DEFAULT_STEP,
                );
                let analytic = Tensor2::from_vec(4, 3, d_in.concat()).unwrap();
                let r = compare(&[&analytic], &numeric);
                assert!(r.passes(TOL), "input grad {kind:?} bidir={bidir}: {r:?}");
            }
        }
    }

    #[derive(Clone)]
    struct InputHolder(Tensor2);

    impl InputHolder {
        fn rows(&self) -> Vec<Vec<f64>> {
            (0..self.0.rows()).map(|r| self.0.row(r).to_vec()).collect()
        }
    }

    impl Parameterized for InputHolder {
        fn tensors(&self) -> Vec<&Tensor2> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn attention_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut att = AttentionParams::init(4, 3, &mut rng);
        for v in att.b.values_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let vals = seq(&mut rng, 5, 4);
        let coef: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &AttentionParams, v: &[Vec<f64>]| {
            let o = p.forward(v).unwrap().0;
            o.iter()
                .zip(&coef)
                .map(|(o, c)| c * o + 0.5 * o * o)
                .sum::<f64>()
        };
        let (out, trace) = att.forward(&vals).unwrap();
        let d_out: Vec<f64> = out.iter().zip(&coef).map(|(o, c)| c + o).collect();
        let mut grads = att.zeros_like();
        let mut d_vals = vec![vec![0.0; 4]; 5];
        att.backward(&vals, &trace, &d_out, &mut grads, &mut d_vals);
        let report = check(&att, &grads, |p| loss(p, &vals), DEFAULT_STEP);
        assert!(report.passes(TOL), "{report:?}");

        let holder = InputHolder(Tensor2::from_vec(5, 4, vals.concat()).unwrap());
        let numeric = numeric_gradient(&holder, |h| loss(&att, &h.rows()), DEFAULT_STEP);
        let analytic = Tensor2::from_vec(5, 4, d_vals.concat()).unwrap();
        let r = compare(&[&analytic], &numeric);
        assert!(r.passes(TOL), "{r:?}");
    }

    #[test]
    fn pooling_and_activation_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for act in [Activation::Relu, Activation::Tanh] {
            let holder =
                InputHolder(Tensor2::from_vec(4, 3, seq(&mut rng, 4, 3).concat()).unwrap());
            let coef: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |h: &InputHolder| {
                let pooled = max_pool_with_argmax(&h.rows()).unwrap().0;
                act.apply(&pooled)
                    .iter()
                    .zip(&coef)
                    .map(|(o, c)| c * o)
                    .sum::<f64>()
            };
            let (pooled, arg) = max_pool_with_argmax(&holder.rows()).unwrap();
            let y = act.apply(&pooled);
            let d_pooled = act.backward(&y, &coef);
            let mut d = vec![vec![0.0; 3]; 4];
            max_pool_backward(&arg, &d_pooled, &mut d);
            let analytic = Tensor2::from_vec(4, 3, d.concat()).unwrap();
            let r = compare(&[&analytic], &numeric_gradient(&holder, loss, DEFAULT_STEP));
            assert!(r.passes(TOL), "{act:?}: {r:?}");
        }
    }

    #[test]
    fn sum_of_parameters_has_unit_gradient() {
        let holder = InputHolder(Tensor2::from_vec(2, 2, vec![0.3, -1.0, 2.0, 0.0]).unwrap());
        let g = numeric_gradient(&holder, |h| h.0.values().iter().sum(), DEFAULT_STEP);
        assert!(g[0].values().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-12, 0.0) < 1e-5);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
