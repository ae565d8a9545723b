use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Tensor2};

/// `W x + b`
pub fn dense_forward(w: &Tensor2, b: &Tensor2, x: &[f64]) -> Result<Vec<f64>> {
    if w.cols() != x.len() {
        return Err(Error::dim("dense input", w.cols(), x.len()));
    }
    if b.len() != w.rows() {
        return Err(Error::dim("dense bias", w.rows(), b.len()));
    }
    let mut out = b.values().to_vec();
    w.matvec_acc(x, &mut out);
    Ok(out)
}

/// `sigmoid(W x + b)`, elementwise.
pub fn dense_sigmoid(w: &Tensor2, b: &Tensor2, x: &[f64]) -> Result<Vec<f64>> {
    Ok(dense_forward(w, b, x)?.into_iter().map(sigmoid).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_one_half() {
        let out =
            dense_sigmoid(&Tensor2::zeros(3, 2), &Tensor2::zeros(3, 1), &[4.0, -2.0]).unwrap();
        assert_eq!(out, vec![0.5; 3]);
    }

    #[test]
    fn large_bias_saturates() {
        let mut b = Tensor2::zeros(2, 1);
        b.set(1, 0, 30.0);
        let out = dense_sigmoid(&Tensor2::zeros(2, 1), &b, &[1.0]).unwrap();
        assert!((1.0 - out[1]).abs() < 1e-9);
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn matches_scalar_loop() {
        let w = Tensor2::from_vec(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap();
        let b = Tensor2::from_vec(2, 1, vec![0.05, -0.1]).unwrap();
        let x = [1.0, 2.0, -1.0];
        let out = dense_sigmoid(&w, &b, &x).unwrap();
        for i in 0..2 {
            let mut a = b.get(i, 0);
            for j in 0..3 {
                a += w.get(i, j) * x[j];
            }
            assert!((out[i] - 1.0 / (1.0 + (-a).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        assert!(dense_sigmoid(&Tensor2::zeros(2, 3), &Tensor2::zeros(2, 1), &[1.0]).is_err());
        assert!(dense_sigmoid(&Tensor2::zeros(2, 1), &Tensor2::zeros(3, 1), &[1.0]).is_err());
    }
}
