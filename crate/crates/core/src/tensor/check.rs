use super::{ParamId, Tape, Tensor, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Compares tape gradients of `f` at `params` against central differences.
///
/// `f` records a scalar on a fresh tape given one `Var` per parameter
/// (registered as `ParamId(0..n)`). Returns the largest
/// `|autodiff - fd| / (|fd| + 1e-8)` over all parameter entries.
pub fn finite_diff_check<T, F>(f: F, params: &[Tensor<T>], step: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<T>]| -> Result<(Tape<T>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> =
            ps.iter().enumerate().map(|(i, p)| tape.param(ParamId(i), p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape, out))
    };

    let (tape, out) = eval(params)?;
    let grads = tape.backward(out)?;

    let two = T::of(2.0);
    let floor = T::of(1e-8);
    let mut worst = T::zero();
    let mut probe: Vec<Tensor<T>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.get(ParamId(pi)).expect("every registered param has a gradient");
        for e in 0..p.len() {
            let orig = p.data()[e];
            probe[pi].data_mut()[e] = orig + step;
            let (t_plus, v_plus) = eval(&probe)?;
            probe[pi].data_mut()[e] = orig - step;
            let (t_minus, v_minus) = eval(&probe)?;
            probe[pi].data_mut()[e] = orig;
            let fd = (t_plus.value(v_plus).item() - t_minus.value(v_minus).item()) / (two * step);
            let err = (analytic.data()[e] - fd).abs() / (fd.abs() + floor);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_function_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, &[3, 4]);
        let x = random(&mut rng, &[4]);
        let err = finite_diff_check(
            |t, v| {
                let y = t.matvec(v[0], v[1])?;
                let s = t.scale(y, 0.5);
                Ok(t.sum(s))
            },
            &[a, x],
            1e-5,
        )
        .unwrap();
        // matvec is bilinear; each perturbation moves one argument only.
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn quadratic_function_is_exact_up_to_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, &[6]);
        let err = finite_diff_check(
            |t, v| {
                let s = t.square(v[0]);
                Ok(t.mean(s))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn two_layer_tanh_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs = random(&mut rng, &[3, 4]);
        let w1 = random(&mut rng, &[4, 5]);
        let b1 = random(&mut rng, &[5]);
        let w2 = random(&mut rng, &[5, 2]);
        let err = finite_diff_check(
            |t, v| {
                let x = t.constant(xs.clone());
                let h = t.matmul(x, v[0])?;
                let h = t.add_row(h, v[1])?;
                let h = t.tanh(h);
                let y = t.matmul(h, v[2])?;
                let sq = t.square(y);
                Ok(t.mean(sq))
            },
            &[w1, b1, w2],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
