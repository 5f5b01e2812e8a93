use std::collections::BTreeMap;

use super::kernels;
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identifier of a trainable parameter registered on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    MatMul(usize, usize),
    MatVec(usize, usize),
    /// Matrix plus a row vector broadcast over every row.
    AddRow(usize, usize),
    /// Row `b` of the result is `reshape(m[b], p×p) · x[b]`.
    BatchMatVec(usize, usize),
    Tanh(usize),
    Abs(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    Reshape(usize),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients of a scalar loss keyed by parameter id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientSet<T> {
    grads: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Euclidean norm over every gradient entry.
    pub fn norm(&self) -> T {
        self.grads
            .values()
            .flat_map(|t| t.data().iter())
            .fold(T::zero(), |acc, &g| acc + g * g)
            .sqrt()
    }
}

/// Define-by-run recording of tensor operations.
///
/// Nodes are appended in evaluation order, so every parent index is smaller
/// than its child's and a single reverse sweep visits the graph topologically.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(ParamId, usize)>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input that receives no gradient entry.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a trainable parameter; `backward` reports a gradient for it.
    pub fn param(&mut self, id: ParamId, value: Tensor<T>) -> Var {
        let v = self.push(value, Op::Leaf);
        self.params.push((id, v.0));
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor { shape: ta.shape().to_vec(), data }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a.0, b.0)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a.0, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shape("matmul", format!("{:?} · {:?}", ta.shape(), tb.shape())));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let data = kernels::matmul(ta.data(), tb.data(), m, k, n);
        Ok(self.push(Tensor { shape: vec![m, n], data }, Op::MatMul(a.0, b.0)))
    }

    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let (ta, tx) = (self.value(a), self.value(x));
        if ta.rank() != 2 || tx.rank() != 1 || ta.shape()[1] != tx.len() {
            return Err(Error::shape("matvec", format!("{:?} · {:?}", ta.shape(), tx.shape())));
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let data = kernels::matmul(ta.data(), tx.data(), m, n, 1);
        Ok(self.push(Tensor { shape: vec![m], data }, Op::MatVec(a.0, x.0)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if ta.rank() != 2 || tr.rank() != 1 || ta.shape()[1] != tr.len() {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", ta.shape(), tr.shape())));
        }
        let c = tr.len();
        let data = ta.data().iter().enumerate().map(|(i, &v)| v + tr.data()[i % c]).collect();
        Ok(self.push(Tensor { shape: ta.shape().to_vec(), data }, Op::AddRow(a.0, row.0)))
    }

    /// For each row `b`, multiplies the `p×p` matrix stored flat in `mats[b]`
    /// with the vector `xs[b]`.
    pub fn batch_matvec(&mut self, mats: Var, xs: Var) -> Result<Var> {
        let (tm, tx) = (self.value(mats), self.value(xs));
        let ok = tm.rank() == 2
            && tx.rank() == 2
            && tm.shape()[0] == tx.shape()[0]
            && tm.shape()[1] == tx.shape()[1] * tx.shape()[1];
        if !ok {
            return Err(Error::shape("batch_matvec", format!("{:?} · {:?}", tm.shape(), tx.shape())));
        }
        let (b, p) = (tx.shape()[0], tx.shape()[1]);
        let mut data = vec![T::zero(); b * p];
        for r in 0..b {
            let x = tx.row(r);
            let m = tm.row(r);
            for i in 0..p {
                data[r * p + i] = kernels::dot(&m[i * p..(i + 1) * p], x);
            }
        }
        Ok(self.push(Tensor { shape: vec![b, p], data }, Op::BatchMatVec(mats.0, xs.0)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::tanh);
        self.push(v, Op::Tanh(a.0))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::abs);
        self.push(v, Op::Abs(a.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s: T = t.data().iter().copied().sum();
        let n = T::of(t.len() as f64);
        self.push(Tensor::scalar(s / n), Op::Mean(a.0))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a.0)))
    }

    /// Reverse sweep from a scalar `loss`. Parameters the loss does not depend
    /// on receive a zero gradient.
    pub fn backward(&self, loss: Var) -> Result<GradientSet<T>> {
        let root = &self.nodes[loss.0].value;
        if !root.is_scalar() {
            return Err(Error::NonScalarLoss(root.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, &g);
                    accumulate(&mut grads, b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, a, &g);
                    let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                    accumulate(&mut grads, b, &neg);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                    let ga: Vec<T> = g.iter().zip(vb).map(|(&g, &y)| g * y).collect();
                    let gb: Vec<T> = g.iter().zip(va).map(|(&g, &x)| g * x).collect();
                    accumulate(&mut grads, a, &ga);
                    accumulate(&mut grads, b, &gb);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<T> = g.iter().map(|&v| v * c).collect();
                    accumulate(&mut grads, a, &ga);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    let ga = kernels::matmul_nt(&g, tb.data(), m, n, k);
                    let gb = kernels::matmul_tn(ta.data(), &g, m, k, n);
                    accumulate(&mut grads, a, &ga);
                    accumulate(&mut grads, b, &gb);
                }
                Op::MatVec(a, x) => {
                    let (ta, tx) = (&self.nodes[a].value, &self.nodes[x].value);
                    let (m, n) = (ta.shape()[0], ta.shape()[1]);
                    let mut ga = vec![T::zero(); m * n];
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] = g[i] * tx.data()[j];
                        }
                    }
                    let gx = kernels::matmul_tn(ta.data(), &g, m, n, 1);
                    accumulate(&mut grads, a, &ga);
                    accumulate(&mut grads, x, &gx);
                }
                Op::AddRow(a, r) => {
                    let c = self.nodes[r].value.len();
                    let mut gr = vec![T::zero(); c];
                    for (i, &v) in g.iter().enumerate() {
                        gr[i % c] = gr[i % c] + v;
                    }
                    accumulate(&mut grads, a, &g);
                    accumulate(&mut grads, r, &gr);
                }
                Op::BatchMatVec(mi, xi) => {
                    let (tm, tx) = (&self.nodes[mi].value, &self.nodes[xi].value);
                    let (b, p) = (tx.shape()[0], tx.shape()[1]);
                    let mut gm = vec![T::zero(); b * p * p];
                    let mut gx = vec![T::zero(); b * p];
                    for r in 0..b {
                        let x = tx.row(r);
                        let m = tm.row(r);
                        let gy = &g[r * p..(r + 1) * p];
                        let gmr = &mut gm[r * p * p..(r + 1) * p * p];
                        let gxr = &mut gx[r * p..(r + 1) * p];
                        for i in 0..p {
                            let gi = gy[i];
                            let mrow = &m[i * p..(i + 1) * p];
                            let gmrow = &mut gmr[i * p..(i + 1) * p];
                            for j in 0..p {
                                gmrow[j] = gi * x[j];
                                gxr[j] = gxr[j] + gi * mrow[j];
                            }
                        }
                    }
                    accumulate(&mut grads, mi, &gm);
                    accumulate(&mut grads, xi, &gx);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let ga: Vec<T> =
                        g.iter().zip(y).map(|(&g, &y)| g * (T::one() - y * y)).collect();
                    accumulate(&mut grads, a, &ga);
                }
                Op::Abs(a) => {
                    // Subgradient at exactly zero is zero.
                    let x = self.nodes[a].value.data();
                    let ga: Vec<T> = g
                        .iter()
                        .zip(x)
                        .map(|(&g, &x)| {
                            if x > T::zero() {
                                g
                            } else if x < T::zero() {
                                -g
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    accumulate(&mut grads, a, &ga);
                }
                Op::Square(a) => {
                    let x = self.nodes[a].value.data();
                    let two = T::of(2.0);
                    let ga: Vec<T> = g.iter().zip(x).map(|(&g, &x)| two * g * x).collect();
                    accumulate(&mut grads, a, &ga);
                }
                Op::Sum(a) => {
                    let n = self.nodes[a].value.len();
                    accumulate(&mut grads, a, &vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.nodes[a].value.len();
                    let v = g[0] / T::of(n as f64);
                    accumulate(&mut grads, a, &vec![v; n]);
                }
                Op::Reshape(a) => {
                    accumulate(&mut grads, a, &g);
                }
            }
        }

        let mut out = BTreeMap::new();
        for &(id, idx) in &self.params {
            let shape = self.nodes[idx].value.shape().to_vec();
            let data = grads
                .get_mut(idx)
                .and_then(Option::take)
                .unwrap_or_else(|| vec![T::zero(); shape.iter().product()]);
            let entry = out.entry(id).or_insert_with(|| Tensor::zeros(&shape));
            for (e, v) in entry.data_mut().iter_mut().zip(data) {
                *e = *e + v;
            }
        }
        Ok(GradientSet { grads: out })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], idx: usize, g: &[T]) {
    match &mut grads[idx] {
        Some(acc) => {
            for (a, &v) in acc.iter_mut().zip(g) {
                *a = *a + v;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
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
    fn matmul_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::identity(3));
        let a = random(&mut rng, &[3, 3]);
        let av = tape.constant(a.clone());
        let out = tape.matmul(i, av).unwrap();
        assert_eq!(tape.value(out), &a);
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::zeros(&[4]));
        let t = tape.tanh(z);
        assert!(tape.value(t).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matvec_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, &[4, 4]);
        let x = random(&mut rng, &[4]);
        let mut reference = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                reference[i] += a.at(i, j) * x.data()[j];
            }
        }
        let mut tape = Tape::new();
        let (av, xv) = (tape.constant(a), tape.constant(x));
        let y = tape.matvec(av, xv).unwrap();
        for (got, want) in tape.value(y).data().iter().zip(reference) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
        let c = tape.constant(Tensor::zeros(&[3]));
        assert!(tape.add(a, c).is_err());
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let x = Tensor::vector(vec![1.5, -2.0, 0.25]);
        let mut tape = Tape::new();
        let xv = tape.param(ParamId(0), x.clone());
        let sq = tape.square(xv);
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        let want: Vec<f64> = x.data().iter().map(|v| 2.0 * v).collect();
        assert_eq!(g.get(ParamId(0)).unwrap().data(), &want[..]);
    }

    #[test]
    fn grad_of_abs_is_sign_with_zero_at_origin() {
        let mut tape = Tape::new();
        let xv = tape.param(ParamId(0), Tensor::vector(vec![0.3, -4.0, 0.0]));
        let a = tape.abs(xv);
        let loss = tape.sum(a);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap().data(), &[1.0, -1.0, 0.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut tape = Tape::new();
        let xv = tape.param(ParamId(0), Tensor::vector(vec![1.0, 2.0]));
        let sq = tape.square(xv);
        assert!(matches!(tape.backward(sq), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unreachable_param_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(ParamId(0), Tensor::vector(vec![1.0, 2.0]));
        let _unused = tape.param(ParamId(1), Tensor::zeros(&[2, 2]));
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.get(ParamId(1)).unwrap(), &Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn independent_subgraphs_concatenate() {
        let a = Tensor::vector(vec![0.2, -0.7]);
        let b = Tensor::vector(vec![1.1, 0.4, -0.9]);
        let single = |t: &Tensor<f64>| {
            let mut tape = Tape::new();
            let v = tape.param(ParamId(0), t.clone());
            let th = tape.tanh(v);
            let s = tape.square(th);
            let l = tape.sum(s);
            tape.backward(l).unwrap().get(ParamId(0)).unwrap().clone()
        };
        let mut tape = Tape::new();
        let va = tape.param(ParamId(0), a.clone());
        let vb = tape.param(ParamId(1), b.clone());
        let ta = tape.tanh(va);
        let sa = tape.square(ta);
        let la = tape.sum(sa);
        let tb = tape.tanh(vb);
        let sb = tape.square(tb);
        let lb = tape.sum(sb);
        let loss = tape.add(la, lb).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap(), &single(&a));
        assert_eq!(g.get(ParamId(1)).unwrap(), &single(&b));
    }
}
