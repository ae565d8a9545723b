use crate::error::{Error, Result};

/// Elementwise maximum over timesteps, with the winning timestep per
/// component (earliest on ties).
pub fn max_pool_with_argmax(states: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<usize>)> {
    let first = states
        .first()
        .ok_or_else(|| Error::InvalidInput("max-pool over an empty sequence".into()))?;
    let mut out = first.clone();
    let mut arg = vec![0; first.len()];
    for (t, s) in states.iter().enumerate().skip(1) {
        if s.len() != out.len() {
            return Err(Error::dim("max-pool timestep", out.len(), s.len()));
        }
        for ((o, a), &v) in out.iter_mut().zip(arg.iter_mut()).zip(s) {
            if v > *o {
                *o = v;
                *a = t;
            }
        }
    }
    Ok((out, arg))
}

/// Temporal max-pool over the states of one chunk.
pub fn max_pool_time(states: &[Vec<f64>]) -> Result<Vec<f64>> {
    max_pool_with_argmax(states).map(|(v, _)| v)
}

/// Max-pool over the document-level sequence. Same contract as
/// [`max_pool_time`].
pub fn global_max_pool(states: &[Vec<f64>]) -> Result<Vec<f64>> {
    max_pool_time(states)
}

/// Routes each output gradient to the timestep that won the max.
pub fn max_pool_backward(argmax: &[usize], d_out: &[f64], d_states: &mut [Vec<f64>]) {
    for (j, (&t, &g)) in argmax.iter().zip(d_out).enumerate() {
        d_states[t][j] += g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(
            max_pool_time(&[vec![1.0, 5.0], vec![3.0, 2.0]]).unwrap(),
            vec![3.0, 5.0]
        );
        assert_eq!(
            global_max_pool(&[vec![-1.0, 0.0], vec![0.0, -2.0]]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(max_pool_time(&[vec![4.0, -4.0]]).unwrap(), vec![4.0, -4.0]);
        assert!(max_pool_time(&[]).is_err());
        assert!(max_pool_time(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn gradient_goes_to_argmax() {
        let s = vec![vec![1.0, 5.0], vec![3.0, 2.0]];
        let (_, arg) = max_pool_with_argmax(&s).unwrap();
        let mut d = vec![vec![0.0; 2]; 2];
        max_pool_backward(&arg, &[1.0, 2.0], &mut d);
        assert_eq!(d, vec![vec![0.0, 2.0], vec![1.0, 0.0]]);
    }

    proptest! {
        #[test]
        fn permutation_invariant_idempotent_and_dominant(
            seq in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..12),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let base = max_pool_time(&seq).unwrap();
            let mut shuffled = seq.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&max_pool_time(&shuffled).unwrap(), &base);
            let doubled: Vec<_> = seq.iter().chain(seq.iter()).cloned().collect();
            prop_assert_eq!(&global_max_pool(&doubled).unwrap(), &base);
            for v in &seq {
                prop_assert!(v.iter().zip(&base).all(|(x, m)| x <= m));
            }
        }
    }
}
