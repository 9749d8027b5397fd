//! Recording tape and reverse sweep.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param { store: u64, id: ParamId },
    /// `a * w^T`
    MatMulT(NodeId, NodeId),
    /// Adds a `1 x n` row to every row.
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `scale * a + shift`; only the scale matters for gradients.
    Affine(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Clamp(NodeId, f64, f64),
    LogOneMinusTanhSq(NodeId),
    Min(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize, usize),
    SumCols(NodeId),
    Mean(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// A forward computation recorded for differentiation.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - tanh(x)^2)` without cancellation for large `|x|`.
pub(crate) fn log_one_minus_tanh_sq(x: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - x - softplus(-2.0 * x))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// First entry of a node's value, for `1 x 1` results.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    pub fn input(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn input_row(&mut self, row: &[f64]) -> NodeId {
        self.input(Array2::from_shape_vec((1, row.len()), row.to_vec()).expect("row shape"))
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Op::Param { store: store.id(), id })
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.dim()
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::shape(format!("{what}: {:?} vs {:?}", self.dims(a), self.dims(b))));
        }
        Ok(())
    }

    pub fn matmul_t(&mut self, a: NodeId, w: NodeId) -> Result<NodeId> {
        let ((_, ka), (_, kw)) = (self.dims(a), self.dims(w));
        if ka != kw {
            return Err(Error::shape(format!("matmul: input width {ka} vs weight width {kw}")));
        }
        let v = self.value(a).dot(&self.value(w).t());
        Ok(self.push(v, Op::MatMulT(a, w)))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let ((_, n), (r, m)) = (self.dims(a), self.dims(row));
        if r != 1 || n != m {
            return Err(Error::shape(format!("bias row 1x{n} expected, got {r}x{m}")));
        }
        let v = self.value(a) + self.value(row);
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a) + self.value(b);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a) - self.value(b);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a) * self.value(b);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        let v = self.value(a).mapv(|x| scale * x + shift);
        self.push(v, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: NodeId, scale: f64) -> NodeId {
        self.affine(a, scale, 0.0)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Element-wise clamp; gradient passes inside the closed interval.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn log_one_minus_tanh_sq(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(log_one_minus_tanh_sq);
        self.push(v, Op::LogOneMinusTanhSq(a))
    }

    /// Element-wise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "min")?;
        let mut v = self.value(a).clone();
        v.zip_mut_with(self.value(b), |x, y| *x = x.min(*y));
        Ok(self.push(v, Op::Min(a, b)))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(1), &views).map_err(|e| Error::shape(format!("concat: {e}")))?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (_, n) = self.dims(a);
        if start >= end || end > n {
            return Err(Error::shape(format!("column slice {start}..{end} of width {n}")));
        }
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        Ok(self.push(v, Op::Slice(a, start, end)))
    }

    /// Row sums as a column.
    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::SumCols(a))
    }

    /// Mean of all entries as a `1 x 1` node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let m = self.value(a).mean().unwrap_or(0.0);
        self.push(Array2::from_elem((1, 1), m), Op::Mean(a))
    }

    /// Reverse sweep from `output` seeded with `seed`.
    pub fn backward(&self, output: NodeId, seed: Array2<f64>) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(Error::State("backward called before the forward pass recorded its output".into()));
        }
        if seed.dim() != self.dims(output) {
            return Err(Error::shape(format!(
                "seed {:?} does not match output {:?}",
                seed.dim(),
                self.dims(output)
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);

        fn acc(grads: &mut [Option<Array2<f64>>], id: NodeId, g: Array2<f64>) {
            match &mut grads[id.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Input | Op::Param { .. }) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Input | Op::Param { .. } => {}
                Op::MatMulT(a, w) => {
                    acc(&mut grads, *a, g.dot(self.value(*w)));
                    acc(&mut grads, *w, g.t().dot(self.value(*a)));
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, &g * self.value(*b));
                    acc(&mut grads, *b, &g * self.value(*a));
                }
                Op::Affine(a, scale) => acc(&mut grads, *a, g * *scale),
                Op::Sigmoid(a) => {
                    let mut d = g;
                    d.zip_mut_with(&node.value, |d, y| *d *= y * (1.0 - y));
                    acc(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    d.zip_mut_with(&node.value, |d, y| *d *= 1.0 - y * y);
                    acc(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |d, x| {
                        if *x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut grads, *a, d);
                }
                Op::Exp(a) => acc(&mut grads, *a, g * &node.value),
                Op::Square(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |d, x| *d *= 2.0 * x);
                    acc(&mut grads, *a, d);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |d, x| {
                        if *x < *lo || *x > *hi {
                            *d = 0.0
                        }
                    });
                    acc(&mut grads, *a, d);
                }
                Op::LogOneMinusTanhSq(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |d, x| *d *= -2.0 * x.tanh());
                    acc(&mut grads, *a, d);
                }
                Op::Min(a, b) => {
                    let mut da = g.clone();
                    let mut db = g;
                    Zip::from(&mut da)
                        .and(&mut db)
                        .and(self.value(*a))
                        .and(self.value(*b))
                        .for_each(|da, db, x, y| {
                            if x <= y {
                                *db = 0.0
                            } else {
                                *da = 0.0
                            }
                        });
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.dims(*p).1;
                        acc(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::Slice(a, start, end) => {
                    let mut d = Array2::zeros(self.dims(*a));
                    d.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut grads, *a, d);
                }
                Op::SumCols(a) => {
                    let (_, n) = self.dims(*a);
                    let d = g.broadcast(self.dims(*a)).map(|b| b.to_owned());
                    let d = d.unwrap_or_else(|| Array2::zeros((g.nrows(), n)));
                    acc(&mut grads, *a, d);
                }
                Op::Mean(a) => {
                    let dims = self.dims(*a);
                    let count = (dims.0 * dims.1).max(1) as f64;
                    acc(&mut grads, *a, Array2::from_elem(dims, g[[0, 0]] / count));
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Adds the parameter gradients of `grads` into `store`. Parameters that
    /// belong to other stores are skipped.
    pub fn accumulate_into(&self, grads: &Gradients, store: &mut ParamStore) {
        for (i, node) in self.nodes.iter().enumerate().take(grads.grads.len()) {
            if let Op::Param { store: sid, id } = node.op {
                if sid == store.id() {
                    if let Some(g) = &grads.grads[i] {
                        *store.grad_mut(id) += g;
                    }
                }
            }
        }
    }

    /// Backward from a `1 x 1` output with seed 1, accumulating into `store`.
    pub fn backprop_scalar(&self, output: NodeId, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward(output, Array2::ones((1, 1)))?;
        self.accumulate_into(&grads, store);
        Ok(())
    }
}

/// Leaf gradients of one backward pass. Only input and parameter nodes keep
/// their gradient once the sweep finishes.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a leaf node, if the output depends on it.
    pub fn wrt(&self, node: NodeId) -> Option<&Array2<f64>> {
        self.grads.get(node.0).and_then(|g| g.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn square_derivative() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[3.0]]);
        let mut g = Graph::new();
        let p = g.param(&store, w);
        let y = g.square(p);
        g.backprop_scalar(y, &mut store).unwrap();
        assert_eq!(store.grad(w)[[0, 0]], 6.0);
        // Accumulation without zeroing doubles the gradient.
        g.backprop_scalar(y, &mut store).unwrap();
        assert_eq!(store.grad(w)[[0, 0]], 12.0);
        store.zero_grad();
        assert_eq!(store.grad(w)[[0, 0]], 0.0);
    }

    #[test]
    fn backward_requires_recorded_output() {
        let g = Graph::new();
        assert!(matches!(g.backward(NodeId(0), Array2::ones((1, 1))), Err(Error::State(_))));
    }

    #[test]
    fn seed_is_linear() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[0.3, -0.2], [0.1, 0.5]]);
        let mut g = Graph::new();
        let x = g.input(array![[1.0, 2.0]]);
        let p = g.param(&store, w);
        let h = g.matmul_t(x, p).unwrap();
        let y = g.tanh(h);
        let g1 = g.backward(y, array![[1.0, -0.5]]).unwrap();
        let g2 = g.backward(y, array![[2.0, -1.0]]).unwrap();
        let (a, b) = (g1.wrt(p).unwrap(), g2.wrt(p).unwrap());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(2.0 * x, *y);
        }
        assert!(g1.wrt(x).is_some());
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.input(Array2::zeros((2, 3)));
        let b = g.input(Array2::zeros((2, 2)));
        assert!(matches!(g.add(a, b), Err(Error::Shape(_))));
        assert!(g.matmul_t(a, b).is_err());
        assert!(g.slice_cols(a, 2, 5).is_err());
        let seed = Array2::ones((1, 1));
        assert!(matches!(g.backward(a, seed), Err(Error::Shape(_))));
    }

    #[test]
    fn stable_squash_correction() {
        for x in [-30.0, -2.0, 0.0, 0.7, 25.0] {
            let t: f64 = f64::tanh(x);
            let naive = (1.0 - t * t).ln();
            let stable = log_one_minus_tanh_sq(x);
            if naive.is_finite() && x.abs() < 10.0 {
                assert_abs_diff_eq!(stable, naive, epsilon = 1e-10);
            }
            assert!(stable.is_finite());
        }
        assert_eq!(log_one_minus_tanh_sq(0.0), 0.0);
    }
}
