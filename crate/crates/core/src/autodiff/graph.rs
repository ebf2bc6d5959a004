//! Define-by-run computation graph with a reverse-mode backward pass.
//!
//! Nodes are appended in construction order, so an input always precedes its
//! consumers and the node list is already a topological order. Values are
//! computed by [`Graph::forward`]; [`Graph::backward`] then walks the nodes in
//! reverse, visiting each one once.

use std::collections::BTreeMap;

use super::array::Array;
use super::linalg;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Parameter(Array),
    Constant(Array),
    /// `x · w + b` with `x: n×k`, `w: k×j`, `b: j`.
    Affine { x: Var, w: Var, b: Var },
    LeakyRelu { x: Var, slope: f64 },
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `factor · x + offset`, elementwise.
    ScaleShift { x: Var, factor: f64, offset: f64 },
    Mean(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Parameter(_) => "parameter",
            Op::Constant(_) => "constant",
            Op::Affine { .. } => "affine",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Log(_) => "log",
            Op::Clamp { .. } => "clamp",
            Op::Square(_) => "square",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::ScaleShift { .. } => "scale_shift",
            Op::Mean(_) => "mean",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Parameter(_) | Op::Constant(_) => vec![],
            Op::Affine { x, w, b } => vec![x, w, b],
            Op::LeakyRelu { x, .. }
            | Op::Tanh(x)
            | Op::Sigmoid(x)
            | Op::Log(x)
            | Op::Clamp { x, .. }
            | Op::Square(x)
            | Op::ScaleShift { x, .. }
            | Op::Mean(x) => vec![x],
            Op::Add(a, b) | Op::Sub(a, b) => vec![a, b],
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A single-use record of differentiable operations.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    ops: Vec<Op>,
    values: Vec<Array>,
    output: Option<Var>,
}

/// Gradients of a scalar output with respect to a set of parameter leaves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientMap {
    entries: BTreeMap<Var, Array>,
}

impl GradientMap {
    pub fn get(&self, var: Var) -> Option<&Array> {
        self.entries.get(&var)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries ordered by leaf creation order.
    pub fn iter(&self) -> impl Iterator<Item = (Var, &Array)> {
        self.entries.iter().map(|(v, a)| (*v, a))
    }

    /// Gradients for `vars`, in that order.
    pub fn take(mut self, vars: &[Var]) -> Result<Vec<Array>> {
        vars.iter()
            .map(|v| {
                self.entries.remove(v).ok_or_else(|| {
                    Error::Usage(format!("no gradient recorded for node {}", v.0))
                })
            })
            .collect()
    }
}

/// Euclidean norm of all gradient entries taken together.
pub fn gradient_norm(grads: &GradientMap) -> Result<f64> {
    if grads.is_empty() {
        return Err(Error::Usage("gradient norm of an empty map".into()));
    }
    Ok(grads
        .entries
        .values()
        .map(Array::sum_squares)
        .sum::<f64>()
        .sqrt())
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, op: Op) -> Var {
        self.ops.push(op);
        self.values.clear();
        self.output = None;
        Var(self.ops.len() - 1)
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn parameter(&mut self, value: Array) -> Var {
        self.push(Op::Parameter(value))
    }

    /// A leaf that is never differentiated.
    pub fn constant(&mut self, value: Array) -> Var {
        self.push(Op::Constant(value))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        self.push(Op::Affine { x, w, b })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.push(Op::LeakyRelu { x, slope })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.push(Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.push(Op::Sigmoid(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.push(Op::Log(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.push(Op::Clamp { x, lo, hi })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.push(Op::Square(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a, b))
    }

    pub fn scale_shift(&mut self, x: Var, factor: f64, offset: f64) -> Var {
        self.push(Op::ScaleShift { x, factor, offset })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.scale_shift(x, factor, 0.0)
    }

    /// Mean over every element, producing a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        self.push(Op::Mean(x))
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Value of `var` from the last forward pass.
    pub fn value(&self, var: Var) -> Option<&Array> {
        self.values.get(var.0)
    }

    fn check_var(&self, node: usize, v: Var) -> Result<()> {
        if v.0 >= node {
            return Err(Error::Structural(format!(
                "node {node} ({}) refers to node {} which does not precede it",
                self.ops[node].name(),
                v.0
            )));
        }
        Ok(())
    }

    /// Evaluates every node and returns the value of `output`.
    pub fn forward(&mut self, output: Var) -> Result<&Array> {
        if output.0 >= self.ops.len() {
            return Err(Error::Usage(format!("output node {} does not exist", output.0)));
        }
        self.values.clear();
        self.output = None;
        let mut values = Vec::with_capacity(self.ops.len());
        for (i, op) in self.ops.iter().enumerate() {
            for v in op.inputs() {
                self.check_var(i, v)?;
            }
            let value = eval(i, op, &values)?;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite value produced at node {i} ({})",
                    op.name()
                )));
            }
            values.push(value);
        }
        self.values = values;
        self.output = Some(output);
        Ok(&self.values[output.0])
    }

    /// Gradients of the scalar forward output with respect to each leaf in `wrt`.
    pub fn backward(&self, wrt: &[Var]) -> Result<GradientMap> {
        let output = self
            .output
            .ok_or_else(|| Error::Usage("backward called before forward".into()))?;
        if !self.values[output.0].is_scalar() {
            return Err(Error::Structural(format!(
                "backward needs a scalar output, node {} has shape {:?}",
                output.0,
                self.values[output.0].shape()
            )));
        }
        for v in wrt {
            if !matches!(self.ops.get(v.0), Some(Op::Parameter(_))) {
                return Err(Error::Usage(format!(
                    "node {} is not a parameter leaf",
                    v.0
                )));
            }
        }

        let n = self.ops.len();
        let mut needs = vec![false; n];
        for v in wrt {
            needs[v.0] = true;
        }
        for i in 0..n {
            if !needs[i] && self.ops[i].inputs().iter().any(|v| needs[v.0]) {
                needs[i] = true;
            }
        }

        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n];
        if needs[output.0] {
            adj[output.0] = Some(vec![1.0]);
        }
        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if matches!(self.ops[i], Op::Parameter(_)) {
                adj[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &needs, &mut adj);
        }

        let mut entries = BTreeMap::new();
        for &v in wrt {
            let shape = self.values[v.0].shape();
            let grad = match adj[v.0].take() {
                Some(data) => Array::new(shape.to_vec(), data)?,
                None => Array::zeros(shape),
            };
            entries.insert(v, grad);
        }
        Ok(GradientMap { entries })
    }

    fn propagate(&self, i: usize, g: &[f64], needs: &[bool], adj: &mut [Option<Vec<f64>>]) {
        let vals = &self.values;
        macro_rules! acc {
            ($v:expr, |$k:ident| $e:expr) => {
                if needs[$v.0] {
                    let dst = slot(adj, vals, $v);
                    for ($k, d) in dst.iter_mut().enumerate() {
                        *d += $e;
                    }
                }
            };
        }
        match self.ops[i] {
            Op::Parameter(_) | Op::Constant(_) => {}
            Op::Affine { x, w, b } => {
                let xv = &vals[x.0];
                let wv = &vals[w.0];
                let (rows, inner, cols) = (xv.rows(), xv.cols(), wv.cols());
                if needs[x.0] {
                    let dst = slot(adj, vals, x);
                    linalg::gemm_nt(rows, cols, inner, g, wv.data(), dst);
                }
                if needs[w.0] {
                    let dst = slot(adj, vals, w);
                    linalg::gemm_tn(inner, rows, cols, xv.data(), g, dst);
                }
                if needs[b.0] {
                    let dst = slot(adj, vals, b);
                    for r in 0..rows {
                        for (d, gv) in dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = vals[x.0].data();
                acc!(x, |k| if xv[k] > 0.0 { g[k] } else { slope * g[k] });
            }
            Op::Tanh(x) => {
                let y = vals[i].data();
                acc!(x, |k| g[k] * (1.0 - y[k] * y[k]));
            }
            Op::Sigmoid(x) => {
                let y = vals[i].data();
                acc!(x, |k| g[k] * y[k] * (1.0 - y[k]));
            }
            Op::Log(x) => {
                let xv = vals[x.0].data();
                acc!(x, |k| g[k] / xv[k]);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = vals[x.0].data();
                acc!(x, |k| if xv[k] >= lo && xv[k] <= hi { g[k] } else { 0.0 });
            }
            Op::Square(x) => {
                let xv = vals[x.0].data();
                acc!(x, |k| 2.0 * xv[k] * g[k]);
            }
            Op::Add(a, b) => {
                acc!(a, |k| g[k]);
                acc!(b, |k| g[k]);
            }
            Op::Sub(a, b) => {
                acc!(a, |k| g[k]);
                acc!(b, |k| -g[k]);
            }
            Op::ScaleShift { x, factor, .. } => {
                acc!(x, |k| factor * g[k]);
            }
            Op::Mean(x) => {
                let share = g[0] / vals[x.0].len() as f64;
                acc!(x, |_k| share);
            }
        }
    }
}

/// Adjoint buffer of `v`, zero-initialised on first touch.
fn slot<'a>(adj: &'a mut [Option<Vec<f64>>], vals: &[Array], v: Var) -> &'a mut Vec<f64> {
    adj[v.0].get_or_insert_with(|| vec![0.0; vals[v.0].len()])
}

fn shape_err(node: usize, op: &Op, detail: String) -> Error {
    Error::Structural(format!("shape mismatch at node {node} ({}): {detail}", op.name()))
}

fn eval(node: usize, op: &Op, vals: &[Array]) -> Result<Array> {
    let unary = |x: Var, f: &dyn Fn(f64) -> f64| vals[x.0].map(f);
    let out = match *op {
        Op::Parameter(ref a) | Op::Constant(ref a) => a.clone(),
        Op::Affine { x, w, b } => {
            let (xv, wv, bv) = (&vals[x.0], &vals[w.0], &vals[b.0]);
            if wv.shape().len() != 2 || xv.cols() != wv.rows() {
                return Err(shape_err(
                    node,
                    op,
                    format!("input {:?} against weight {:?}", xv.shape(), wv.shape()),
                ));
            }
            if bv.len() != wv.cols() {
                return Err(shape_err(
                    node,
                    op,
                    format!("bias {:?} against weight {:?}", bv.shape(), wv.shape()),
                ));
            }
            let (rows, cols) = (xv.rows(), wv.cols());
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                data.extend_from_slice(bv.data());
            }
            linalg::gemm_nn(rows, xv.cols(), cols, xv.data(), wv.data(), &mut data);
            Array::matrix(rows, cols, data)?
        }
        Op::LeakyRelu { x, slope } => unary(x, &|v| if v > 0.0 { v } else { slope * v }),
        Op::Tanh(x) => unary(x, &f64::tanh),
        Op::Sigmoid(x) => unary(x, &sigmoid),
        Op::Log(x) => {
            if let Some(bad) = vals[x.0].data().iter().find(|&&v| v <= 0.0) {
                return Err(Error::Numeric(format!(
                    "log of non-positive value {bad} at node {node}"
                )));
            }
            unary(x, &f64::ln)
        }
        Op::Clamp { x, lo, hi } => unary(x, &|v| v.clamp(lo, hi)),
        Op::Square(x) => unary(x, &|v| v * v),
        Op::Add(a, b) | Op::Sub(a, b) => {
            let (av, bv) = (&vals[a.0], &vals[b.0]);
            if av.shape() != bv.shape() {
                return Err(shape_err(
                    node,
                    op,
                    format!("{:?} against {:?}", av.shape(), bv.shape()),
                ));
            }
            let sign = if matches!(op, Op::Add(..)) { 1.0 } else { -1.0 };
            let data = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(p, q)| p + sign * q)
                .collect();
            Array::new(av.shape().to_vec(), data)?
        }
        Op::ScaleShift { x, factor, offset } => unary(x, &|v| factor * v + offset),
        Op::Mean(x) => {
            let xv = &vals[x.0];
            Array::scalar(xv.data().iter().sum::<f64>() / xv.len() as f64)
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_graph(x0: f64, build: impl Fn(&mut Graph, Var) -> Var) -> (f64, f64) {
        let mut g = Graph::new();
        let x = g.parameter(Array::scalar(x0));
        let y = build(&mut g, x);
        let out = g.forward(y).unwrap().item().unwrap();
        let grad = g.backward(&[x]).unwrap().get(x).unwrap().item().unwrap();
        (out, grad)
    }

    #[test]
    fn primitive_values() {
        assert_eq!(scalar_graph(0.0, |g, x| g.sigmoid(x)).0, 0.5);
        assert_eq!(scalar_graph(-1.0, |g, x| g.leaky_relu(x, 0.2)).0, -0.2);
        let mut g = Graph::new();
        let x = g.constant(Array::vector(vec![1.0, 2.0]).unwrap());
        let w = g.parameter(Array::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
        let b = g.parameter(Array::vector(vec![0.0, 0.0]).unwrap());
        let y = g.affine(x, w, b);
        assert_eq!(g.forward(y).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn primitive_derivatives() {
        assert_eq!(scalar_graph(3.0, |g, x| g.square(x)).1, 6.0);
        assert_eq!(scalar_graph(2.0, |g, x| g.log(x)).1, 0.5);
        let (v, d) = scalar_graph(0.3, |g, x| g.tanh(x));
        assert!((d - (1.0 - v * v)).abs() < 1e-15);
        assert_eq!(scalar_graph(-2.0, |g, x| g.leaky_relu(x, 0.2)).1, 0.2);
        assert_eq!(scalar_graph(5.0, |g, x| g.clamp(x, 0.0, 1.0)).1, 0.0);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(-30.0) - (-30f64).exp() / (1.0 + (-30f64).exp())).abs() < 1e-25);
    }

    #[test]
    fn backward_before_forward_is_usage_error() {
        let mut g = Graph::new();
        let x = g.parameter(Array::scalar(1.0));
        let _ = g.square(x);
        assert!(matches!(g.backward(&[x]), Err(Error::Usage(_))));
    }

    #[test]
    fn non_scalar_output_is_structural_error() {
        let mut g = Graph::new();
        let x = g.parameter(Array::vector(vec![1.0, 2.0]).unwrap());
        let y = g.square(x);
        g.forward(y).unwrap();
        assert!(matches!(g.backward(&[x]), Err(Error::Structural(_))));
    }

    #[test]
    fn shape_mismatch_names_node() {
        let mut g = Graph::new();
        let x = g.constant(Array::matrix(1, 3, vec![1.0; 3]).unwrap());
        let w = g.parameter(Array::matrix(2, 2, vec![1.0; 4]).unwrap());
        let b = g.parameter(Array::vector(vec![0.0; 2]).unwrap());
        let y = g.affine(x, w, b);
        let err = g.forward(y).unwrap_err();
        assert!(matches!(&err, Error::Structural(m) if m.contains("node 3") && m.contains("affine")));
    }

    #[test]
    fn log_of_zero_is_numeric_error() {
        let mut g = Graph::new();
        let x = g.parameter(Array::scalar(0.0));
        let y = g.log(x);
        assert!(matches!(g.forward(y), Err(Error::Numeric(_))));
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.parameter(Array::scalar(2.0));
        let unused = g.parameter(Array::vector(vec![1.0, 1.0]).unwrap());
        let y = g.square(x);
        g.forward(y).unwrap();
        let grads = g.backward(&[x, unused]).unwrap();
        assert_eq!(grads.len(), 2);
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn reused_node_accumulates() {
        // y = x*x expressed as square plus a second use of x: d/dx (x^2 + x) = 2x + 1
        let (_, d) = scalar_graph(1.5, |g, x| {
            let s = g.square(x);
            g.add(s, x)
        });
        assert_eq!(d, 4.0);
    }

    #[test]
    fn gradient_norm_cases() {
        let mut g = Graph::new();
        let a = g.parameter(Array::vector(vec![1.0, 0.0]).unwrap());
        let b = g.parameter(Array::vector(vec![0.0, 3f64.sqrt()]).unwrap());
        let mut entries = BTreeMap::new();
        entries.insert(a, Array::vector(vec![3.0, 4.0]).unwrap());
        assert_eq!(gradient_norm(&GradientMap { entries }).unwrap(), 5.0);
        let mut entries = BTreeMap::new();
        entries.insert(a, Array::vector(vec![1.0, 0.0]).unwrap());
        entries.insert(b, Array::vector(vec![0.0, 3f64.sqrt()]).unwrap());
        assert!((gradient_norm(&GradientMap { entries }).unwrap() - 2.0).abs() < 1e-15);
        let mut entries = BTreeMap::new();
        entries.insert(a, Array::zeros(&[2]));
        assert_eq!(gradient_norm(&GradientMap { entries }).unwrap(), 0.0);
        assert!(matches!(
            gradient_norm(&GradientMap::default()),
            Err(Error::Usage(_))
        ));
    }
}
