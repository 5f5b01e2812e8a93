use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IcodeModel;
use crate::ode::{DependencyGraph, Trajectory};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Median of a nonempty slice; even lengths average the two central values.
pub fn median<T: Scalar>(values: &mut [T]) -> T {
    assert!(!values.is_empty(), "median of an empty slice");
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / T::of(2.0)
    }
}

/// `C[i][j] = median_t |Φθ(X(t))[i][j]|` over every row of `traj`.
pub fn causality_matrix<T: Scalar>(model: &IcodeModel<T>, traj: &Trajectory<T>) -> Result<Tensor<T>> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("causality needs at least one sample".into()));
    }
    let p = model.p();
    let xs = Tensor::matrix(traj.len(), traj.p(), traj.states().to_vec())?;
    let phi = model.phi_batch(&xs)?;
    if !phi.is_finite() {
        return Err(Error::NonFinite("Φ outputs".into()));
    }
    let n = traj.len();
    let mut column = vec![T::zero(); n];
    let mut out = Vec::with_capacity(p * p);
    for e in 0..p * p {
        for (t, c) in column.iter_mut().enumerate() {
            *c = phi.data()[t * p * p + e].abs();
        }
        out.push(median(&mut column));
    }
    Tensor::matrix(p, p, out)
}

/// `|C - C'|` entrywise.
pub fn diff_matrix<T: Scalar>(c: &Tensor<T>, c_prime: &Tensor<T>) -> Result<Tensor<T>> {
    if c.shape() != c_prime.shape() || c.rank() != 2 || c.rows() != c.cols() {
        return Err(Error::shape("diff", format!("{:?} vs {:?}", c.shape(), c_prime.shape())));
    }
    let data = c.data().iter().zip(c_prime.data()).map(|(&a, &b)| (a - b).abs()).collect();
    Tensor::matrix(c.rows(), c.cols(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binarized {
    pub graph: DependencyGraph,
    /// Low and high cluster centroids.
    pub centroids: [f64; 2],
    /// All entries were equal; every edge is reported present.
    pub degenerate: bool,
}

const KMEANS_SEED: u64 = 0x6b6d_6561_6e73;
const KMEANS_MAX_ITER: usize = 100;

/// Splits the entries of a square matrix into "edge" / "no edge" by 1-D
/// two-means clustering (k-means++ seeding from a fixed seed).
pub fn binarize_causality<T: Scalar>(c: &Tensor<T>) -> Result<Binarized> {
    if c.rank() != 2 || c.rows() != c.cols() {
        return Err(Error::shape("binarize", format!("{:?} is not square", c.shape())));
    }
    let p = c.rows();
    if p < 2 {
        return Err(Error::InvalidArgument("binarization needs p >= 2".into()));
    }
    let v: Vec<f64> = c.data().iter().map(|x| x.as_f64()).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("causality matrix".into()));
    }
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    if lo == hi {
        return Ok(Binarized { graph: DependencyGraph::complete(p), centroids: [lo, hi], degenerate: true });
    }
    let (assign, centroids) = two_means(&v);
    Ok(Binarized { graph: DependencyGraph::from_fn(p, |i, j| assign[i * p + j]), centroids, degenerate: false })
}

/// Returns `true` for members of the higher cluster and the two centroids.
fn two_means(v: &[f64]) -> (Vec<bool>, [f64; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(KMEANS_SEED);
    let first = v[rng.random_range(0..v.len())];
    let d2: Vec<f64> = v.iter().map(|x| (x - first) * (x - first)).collect();
    let total: f64 = d2.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut second = *v.last().expect("nonempty");
    for (x, d) in v.iter().zip(&d2) {
        if pick < *d {
            second = *x;
            break;
        }
        pick -= d;
    }
    let mut c = if first < second { [first, second] } else { [second, first] };
    let mut assign = vec![false; v.len()];
    for iter in 0..KMEANS_MAX_ITER {
        let mut changed = iter == 0;
        for (a, &x) in assign.iter_mut().zip(v) {
            let high = (x - c[1]).abs() < (x - c[0]).abs();
            changed |= *a != high;
            *a = high;
        }
        if !changed {
            break;
        }
        let (mut s, mut n) = ([0.0; 2], [0usize; 2]);
        for (&a, &x) in assign.iter().zip(v) {
            s[a as usize] += x;
            n[a as usize] += 1;
        }
        for k in 0..2 {
            if n[k] > 0 {
                c[k] = s[k] / n[k] as f64;
            }
        }
    }
    if c[0] > c[1] {
        c.swap(0, 1);
        assign.iter_mut().for_each(|a| *a = !*a);
    }
    (assign, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_phi_model(a: &[f64], p: usize) -> IcodeModel<f64> {
        let mut m = IcodeModel::zeros(p, 2);
        m.phi.c2 = Tensor::vector(a.to_vec());
        m
    }

    #[test]
    fn constant_phi_gives_its_absolute_value() {
        let a = [0.5, -1.0, 0.0, 2.5];
        let m = constant_phi_model(&a, 2);
        let traj = Trajectory::from_states(&[vec![0.0, 1.0], vec![3.0, 4.0], vec![-1.0, 2.0]]).unwrap();
        let c = causality_matrix(&m, &traj).unwrap();
        assert_eq!(c.data(), &[0.5, 1.0, 0.0, 2.5]);
    }

    #[test]
    fn single_sample_is_abs_phi() {
        let mut m = IcodeModel::<f64>::new(3, 5, 2);
        m.phi.c2 = Tensor::vector((0..9).map(|i| i as f64 * 0.1 - 0.4).collect());
        let x = [0.3, -0.7, 1.1];
        let c = causality_matrix(&m, &Trajectory::from_states(&[x.to_vec()]).unwrap()).unwrap();
        let phi = m.phi_forward(&x).unwrap();
        assert_eq!(c.data(), phi.map(f64::abs).data());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [7.0]), 7.0);
    }

    #[test]
    fn planted_pattern_recovered() {
        let pattern = DependencyGraph::from_fn(5, |i, j| (i + 2 * j) % 3 == 0);
        let c = Tensor::matrix(5, 5, pattern.as_slice().iter().map(|&b| if b { 0.99 } else { 0.01 }).collect())
            .unwrap();
        let b = binarize_causality(&c).unwrap();
        assert!(!b.degenerate);
        assert_eq!(b.graph, pattern);
    }

    #[test]
    fn constant_matrix_is_degenerate() {
        let b = binarize_causality(&Tensor::full(&[4, 4], 0.3)).unwrap();
        assert!(b.degenerate);
        assert_eq!(b.graph, DependencyGraph::complete(4));
        assert!(binarize_causality(&Tensor::full(&[1, 1], 0.3)).is_err());
    }

    #[test]
    fn diff_is_symmetric_and_nonnegative() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 2, vec![2.0, 2.0, 1.0, 5.0]).unwrap();
        assert_eq!(diff_matrix(&a, &b).unwrap().data(), &[1.0, 0.0, 2.0, 1.0]);
        assert_eq!(diff_matrix(&a, &b).unwrap(), diff_matrix(&b, &a).unwrap());
        assert!(diff_matrix(&a, &Tensor::zeros(&[3, 3])).is_err());
    }
}
