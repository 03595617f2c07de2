use super::{Gradients, ParamId, ParameterStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Lookup(ParamId, usize),
    MatVec(ParamId, NodeId),
    Affine(ParamId, NodeId, ParamId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Concat(Vec<NodeId>),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Abs(NodeId),
    Dot(NodeId, NodeId),
    Sum(NodeId),
    ProdSum(Vec<NodeId>),
    WeightedSum(Vec<(NodeId, f64)>),
    Slice(NodeId, usize),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

/// A per-instance computation graph over vectors. Parameters are read from
/// the borrowed store; gradients are returned by [`Graph::backward`].
pub struct Graph<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
    #[cfg(test)]
    pub(crate) corrupt_tanh: bool,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            #[cfg(test)]
            corrupt_tanh: false,
        }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &[f64] {
        &self.nodes[node.0].value
    }

    /// The value of a single-element node.
    pub fn scalar(&self, node: NodeId) -> f64 {
        self.nodes[node.0].value[0]
    }

    /// Values of the requested outputs.
    pub fn forward(&self, outputs: &[NodeId]) -> Vec<Vec<f64>> {
        outputs.iter().map(|&o| self.nodes[o.0].value.clone()).collect()
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn next_id(&self) -> usize {
        self.nodes.len()
    }

    fn shape_err(&self, op: &'static str, detail: String) -> Error {
        Error::Shape {
            node: self.next_id(),
            op,
            detail,
        }
    }

    fn same_len(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<usize> {
        let (la, lb) = (self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
        if la != lb {
            return Err(self.shape_err(op, format!("operands have lengths {la} and {lb}")));
        }
        Ok(la)
    }

    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.push(Op::Input, vec![value])
    }

    /// The whole parameter, flattened.
    pub fn param(&mut self, p: ParamId) -> NodeId {
        let value = self.store.value(p).data().to_vec();
        self.push(Op::Param(p), value)
    }

    /// One row of an embedding table.
    pub fn lookup(&mut self, table: ParamId, row: usize) -> Result<NodeId> {
        let a = self.store.value(table);
        let (rows, _) = a.rows_cols();
        if row >= rows {
            return Err(self.shape_err(
                "lookup",
                format!("row {row} outside table `{}` with {rows} rows", self.store.name(table)),
            ));
        }
        let value = a.row(row).to_vec();
        Ok(self.push(Op::Lookup(table, row), value))
    }

    fn matvec_value(&self, op: &'static str, w: ParamId, x: NodeId) -> Result<Vec<f64>> {
        let a = self.store.value(w);
        let (rows, cols) = a.rows_cols();
        let xv = &self.nodes[x.0].value;
        if xv.len() != cols {
            return Err(self.shape_err(
                op,
                format!(
                    "`{}` is {rows}x{cols} but input has length {}",
                    self.store.name(w),
                    xv.len()
                ),
            ));
        }
        let data = a.data();
        Ok((0..rows)
            .map(|r| data[r * cols..(r + 1) * cols].iter().zip(xv).map(|(p, q)| p * q).sum())
            .collect())
    }

    pub fn matvec(&mut self, w: ParamId, x: NodeId) -> Result<NodeId> {
        let value = self.matvec_value("matvec", w, x)?;
        Ok(self.push(Op::MatVec(w, x), value))
    }

    /// `W x + b`.
    pub fn affine(&mut self, w: ParamId, x: NodeId, b: ParamId) -> Result<NodeId> {
        let mut value = self.matvec_value("affine", w, x)?;
        let bias = self.store.value(b).data();
        if bias.len() != value.len() {
            return Err(self.shape_err(
                "affine",
                format!("bias `{}` has length {}, expected {}", self.store.name(b), bias.len(), value.len()),
            ));
        }
        value.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
        Ok(self.push(Op::Affine(w, x, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("add", a, b)?;
        let value = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("sub", a, b)?;
        let value = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x - y).collect();
        Ok(self.push(Op::Sub(a, b), value))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("mul", a, b)?;
        let value = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a.0].value.iter().map(|x| x * c).collect();
        self.push(Op::Scale(a, c), value)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(self.shape_err("concat", "no operands".into()));
        }
        let value = parts.iter().flat_map(|p| self.nodes[p.0].value.iter().copied()).collect();
        Ok(self.push(Op::Concat(parts.to_vec()), value))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh(a), value)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.iter().map(|&x| sigmoid(x)).collect();
        self.push(Op::Sigmoid(a), value)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.iter().map(|x| x.abs()).collect();
        self.push(Op::Abs(a), value)
    }

    /// Inner product, a scalar.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("dot", a, b)?;
        let v = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x * y).sum();
        Ok(self.push(Op::Dot(a, b), vec![v]))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.iter().sum();
        self.push(Op::Sum(a), vec![v])
    }

    /// `Σ_k Π_j v_j[k]`: the contraction of a rank-decomposed multilinear form
    /// with projected inputs.
    pub fn prod_sum(&mut self, factors: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = factors.first() else {
            return Err(self.shape_err("prod_sum", "no operands".into()));
        };
        let len = self.nodes[first.0].value.len();
        for &f in &factors[1..] {
            self.same_len("prod_sum", first, f)?;
        }
        let v = (0..len)
            .map(|k| factors.iter().map(|f| self.nodes[f.0].value[k]).product::<f64>())
            .sum();
        debug_assert!(len > 0);
        Ok(self.push(Op::ProdSum(factors.to_vec()), vec![v]))
    }

    /// `Σ c_i · a_i` over equally sized nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let Some(&(first, _)) = terms.first() else {
            return Err(self.shape_err("weighted_sum", "no operands".into()));
        };
        let len = self.nodes[first.0].value.len();
        let mut value = vec![0.0; len];
        for &(n, c) in terms {
            self.same_len("weighted_sum", first, n)?;
            value.iter_mut().zip(&self.nodes[n.0].value).for_each(|(v, x)| *v += c * x);
        }
        Ok(self.push(Op::WeightedSum(terms.to_vec()), value))
    }

    pub fn sum_all(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let terms: Vec<_> = terms.iter().map(|&t| (t, 1.0)).collect();
        self.weighted_sum(&terms)
    }

    /// One LSTM step with fused gate weights `w: [4H, in + H]` and bias `[4H]`
    /// ordered input, forget, output, candidate. Returns `(h, c)`.
    pub fn lstm_step(
        &mut self,
        w: ParamId,
        b: ParamId,
        x: NodeId,
        h_prev: NodeId,
        c_prev: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let hidden = self.nodes[h_prev.0].value.len();
        let xh = self.concat(&[x, h_prev])?;
        let gates = self.affine(w, xh, b)?;
        if self.nodes[gates.0].value.len() != 4 * hidden {
            return Err(self.shape_err(
                "lstm_step",
                format!("gate width {} for hidden size {hidden}", self.nodes[gates.0].value.len()),
            ));
        }
        let slice = |g: &mut Self, k: usize| -> Result<NodeId> { g.slice(gates, k * hidden, hidden) };
        let i = slice(self, 0)?;
        let f = slice(self, 1)?;
        let o = slice(self, 2)?;
        let cand = slice(self, 3)?;
        let i = self.sigmoid(i);
        let f = self.sigmoid(f);
        let o = self.sigmoid(o);
        let cand = self.tanh(cand);
        let keep = self.mul(f, c_prev)?;
        let write = self.mul(i, cand)?;
        let c = self.add(keep, write)?;
        let tc = self.tanh(c);
        let h = self.mul(o, tc)?;
        Ok((h, c))
    }

    /// A contiguous slice `a[start..start + len]`.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let total = self.nodes[a.0].value.len();
        if start + len > total || len == 0 {
            return Err(self.shape_err(
                "slice",
                format!("[{start}, {}) outside length {total}", start + len),
            ));
        }
        let value = self.nodes[a.0].value[start..start + len].to_vec();
        Ok(self.push(Op::Slice(a, start), value))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let len = self.nodes[loss.0].value.len();
        if len != 1 {
            return Err(Error::NonScalarLoss(len));
        }
        let mut grads = Gradients::with_capacity(self.store.len());
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        fn acc(adj: &mut [Option<Vec<f64>>], node: NodeId, len: usize) -> &mut Vec<f64> {
            adj[node.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let lens = |n: NodeId| self.nodes[n.0].value.len();
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    let slot = grads.slot(*p, g.len());
                    slot.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                }
                Op::Lookup(p, row) => {
                    let total = self.store.value(*p).len();
                    let w = g.len();
                    let slot = grads.slot(*p, total);
                    slot[row * w..(row + 1) * w].iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                }
                Op::MatVec(w, x) | Op::Affine(w, x, _) => {
                    let a = self.store.value(*w);
                    let (rows, cols) = a.rows_cols();
                    let xv = &self.nodes[x.0].value;
                    {
                        let slot = grads.slot(*w, rows * cols);
                        for r in 0..rows {
                            if g[r] != 0.0 {
                                let row = &mut slot[r * cols..(r + 1) * cols];
                                row.iter_mut().zip(xv).for_each(|(s, xv)| *s += g[r] * xv);
                            }
                        }
                    }
                    let data = a.data();
                    let dx = acc(&mut adj, *x, cols);
                    for r in 0..rows {
                        if g[r] != 0.0 {
                            let row = &data[r * cols..(r + 1) * cols];
                            dx.iter_mut().zip(row).for_each(|(d, w)| *d += g[r] * w);
                        }
                    }
                    if let Op::Affine(_, _, b) = &node.op {
                        let slot = grads.slot(*b, rows);
                        slot.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    acc(&mut adj, *b, g.len()).iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    acc(&mut adj, *b, g.len()).iter_mut().zip(&g).for_each(|(d, v)| *d -= v);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da: Vec<f64> = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                    let db: Vec<f64> = g.iter().zip(av).map(|(g, a)| g * a).collect();
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&da).for_each(|(d, v)| *d += v);
                    acc(&mut adj, *b, g.len()).iter_mut().zip(&db).for_each(|(d, v)| *d += v);
                }
                Op::Scale(a, c) => {
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&g).for_each(|(d, v)| *d += c * v);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let l = lens(p);
                        acc(&mut adj, p, l)
                            .iter_mut()
                            .zip(&g[offset..offset + l])
                            .for_each(|(d, v)| *d += v);
                        offset += l;
                    }
                }
                Op::Slice(a, start) => {
                    let l = lens(*a);
                    acc(&mut adj, *a, l)[*start..*start + g.len()]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(d, v)| *d += v);
                }
                Op::Tanh(a) => {
                    #[cfg(test)]
                    let corrupt = self.corrupt_tanh;
                    #[cfg(not(test))]
                    let corrupt = false;
                    let y = &node.value;
                    let d: Vec<f64> = if corrupt {
                        g.iter().zip(y).map(|(g, y)| g * (1.0 - y)).collect()
                    } else {
                        g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect()
                    };
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&d).for_each(|(s, v)| *s += v);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut adj, *a, g.len())
                        .iter_mut()
                        .zip(g.iter().zip(y))
                        .for_each(|(s, (g, y))| *s += g * y * (1.0 - y));
                }
                Op::Abs(a) => {
                    let x = &self.nodes[a.0].value;
                    let d: Vec<f64> = g
                        .iter()
                        .zip(x)
                        .map(|(g, &x)| if x > 0.0 { *g } else if x < 0.0 { -g } else { 0.0 })
                        .collect();
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&d).for_each(|(s, v)| *s += v);
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.nodes[a.0].value.clone(), self.nodes[b.0].value.clone());
                    acc(&mut adj, *a, av.len()).iter_mut().zip(&bv).for_each(|(d, v)| *d += g[0] * v);
                    acc(&mut adj, *b, bv.len()).iter_mut().zip(&av).for_each(|(d, v)| *d += g[0] * v);
                }
                Op::Sum(a) => {
                    let l = lens(*a);
                    acc(&mut adj, *a, l).iter_mut().for_each(|d| *d += g[0]);
                }
                Op::ProdSum(factors) => {
                    let m = factors.len();
                    let width = lens(factors[0]);
                    // prefix/suffix products per coordinate avoid dividing by zeros
                    let mut partial = vec![vec![0.0; width]; m];
                    for k in 0..width {
                        let mut prefix = 1.0;
                        for j in 0..m {
                            partial[j][k] = prefix;
                            prefix *= self.nodes[factors[j].0].value[k];
                        }
                        let mut suffix = 1.0;
                        for j in (0..m).rev() {
                            partial[j][k] *= suffix;
                            suffix *= self.nodes[factors[j].0].value[k];
                        }
                    }
                    for (j, &f) in factors.iter().enumerate() {
                        acc(&mut adj, f, width)
                            .iter_mut()
                            .zip(&partial[j])
                            .for_each(|(d, p)| *d += g[0] * p);
                    }
                }
                Op::WeightedSum(terms) => {
                    for &(n, c) in terms {
                        acc(&mut adj, n, g.len()).iter_mut().zip(&g).for_each(|(d, v)| *d += c * v);
                    }
                }
            }
        }
        Ok(grads)
    }
}
