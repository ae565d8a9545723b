use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Returns the output and the per-entry multiplier
/// (0 or `1 / (1 - rate)`), which is also the local derivative.
pub fn dropout<R: Rng + ?Sized>(
    x: &[f64],
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if mode == Mode::Eval || rate == 0.0 {
        return (x.to_vec(), vec![1.0; x.len()]);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    (out, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![1.0, -2.0, 3.0];
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).0, x);
        assert_eq!(dropout(&x, 0.0, Mode::Eval, &mut rng).0, x);
        assert_eq!(dropout(&x, 0.5, Mode::Eval, &mut rng).0, x);
    }

    #[test]
    fn train_mode_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let (out, mask) = dropout(&vec![1.0; n], 0.5, Mode::Train, &mut rng);
        let mean = out.iter().sum::<f64>() / n as f64;
        // each entry is 0 or 2 with p = 1/2: std = 1, std error = 1/sqrt(n)
        let se = 1.0 / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
        assert!(mask.iter().all(|&m| m == 0.0 || m == 2.0));
    }

    #[test]
    fn seeded_masks_repeat() {
        let x = vec![1.0; 64];
        let a = dropout(&x, 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(7));
        let b = dropout(&x, 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }
}
