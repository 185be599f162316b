//! A small reverse-mode tape over `f64` vectors.
//!
//! Nodes hold their forward value; parameters are referenced by id and never
//! copied onto the tape except for bias-like vectors pulled in with
//! [`Graph::param`]. The op set is exactly what the generator, the fusion
//! objectives and the neural classifier need.

use crate::nn::{GruCell, GruStep, OutputLayer};
use crate::tensor::{axpy, euclidean, Grads, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    Embed {
        table: ParamId,
        row: usize,
    },
    Affine {
        w: ParamId,
        b: Option<ParamId>,
        x: Var,
    },
    /// `sum_i c_i * v_i` over equal-length nodes.
    Combine(Vec<(Var, f64)>),
    Gru {
        cell: GruCell,
        x: Var,
        h: Var,
        step: Box<GruStep>,
    },
    /// `-log softmax(W h + b)[target]`
    SoftmaxNll {
        layer: OutputLayer,
        h: Var,
        target: usize,
        probs: Vec<f64>,
    },
    /// Euclidean distance between two vectors.
    Dist {
        a: Var,
        b: Var,
    },
    /// Smallest of several scalars; the gradient flows to the selected one.
    Min {
        args: Vec<Var>,
        chosen: usize,
    },
    /// Binary cross-entropy of `sigmoid(x)` against `label`.
    BceLogit {
        x: Var,
        label: f64,
    },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

/// Result of a backward pass.
pub struct Backward {
    nodes: Vec<Option<Vec<f64>>>,
    pub params: Grads,
}

impl Backward {
    /// Gradient of the root with respect to node `v`, if any flowed there.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].as_deref()
    }
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn constant(&mut self, c: f64) -> Var {
        self.input(vec![c])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.get(id).data.clone();
        self.push(value, Op::Param(id))
    }

    pub fn embed(&mut self, table: ParamId, row: usize) -> Var {
        let value = self.store.get(table).row(row).to_vec();
        self.push(value, Op::Embed { table, row })
    }

    pub fn affine(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Var {
        let mut value = self.store.get(w).matvec(self.value(x));
        if let Some(b) = b {
            for (v, bi) in value.iter_mut().zip(&self.store.get(b).data) {
                *v += bi;
            }
        }
        self.push(value, Op::Affine { w, b, x })
    }

    pub fn combine(&mut self, terms: Vec<(Var, f64)>) -> Var {
        assert!(!terms.is_empty(), "combine needs at least one term");
        let len = self.value(terms[0].0).len();
        let mut value = vec![0.0; len];
        for &(v, c) in &terms {
            let x = self.value(v);
            assert_eq!(x.len(), len, "combine over mismatched lengths");
            axpy(c, x, &mut value);
        }
        self.push(value, Op::Combine(terms))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.combine(vec![(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.combine(vec![(a, 1.0), (b, -1.0)])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.combine(vec![(a, c)])
    }

    /// Sum of scalars scaled by `c`; zero-valued constant when `xs` is empty.
    pub fn sum_scaled(&mut self, xs: &[Var], c: f64) -> Var {
        if xs.is_empty() {
            return self.constant(0.0);
        }
        self.combine(xs.iter().map(|&v| (v, c)).collect())
    }

    pub fn gru(&mut self, cell: GruCell, x: Var, h: Var) -> Var {
        let step = cell.step(self.store, self.value(x), self.value(h));
        let value = step.h.clone();
        self.push(
            value,
            Op::Gru {
                cell,
                x,
                h,
                step: Box::new(step),
            },
        )
    }

    pub fn softmax_nll(&mut self, layer: OutputLayer, h: Var, target: usize) -> Var {
        let logits = layer.logits(self.store, self.value(h));
        let probs = crate::nn::softmax(&logits);
        let lse = crate::nn::log_sum_exp(&logits);
        let nll = lse - logits[target];
        self.push(
            vec![nll],
            Op::SoftmaxNll {
                layer,
                h,
                target,
                probs,
            },
        )
    }

    pub fn dist(&mut self, a: Var, b: Var) -> Var {
        let d = euclidean(self.value(a), self.value(b));
        self.push(vec![d], Op::Dist { a, b })
    }

    /// Minimum of scalars; ties resolve to the lowest position.
    pub fn min(&mut self, args: Vec<Var>) -> Var {
        assert!(!args.is_empty());
        let mut chosen = 0;
        for (i, &a) in args.iter().enumerate() {
            if self.scalar(a) < self.scalar(args[chosen]) {
                chosen = i;
            }
        }
        let value = vec![self.scalar(args[chosen])];
        self.push(value, Op::Min { args, chosen })
    }

    pub fn bce_logit(&mut self, x: Var, label: f64) -> Var {
        let s = self.scalar(x);
        // log(1 + e^s) - label * s, evaluated stably
        let softplus = if s > 0.0 {
            s + (-s).exp().ln_1p()
        } else {
            s.exp().ln_1p()
        };
        self.push(vec![softplus - label * s], Op::BceLogit { x, label })
    }

    /// Reverse pass from the scalar `root`.
    pub fn backward(&self, root: Var) -> Backward {
        let mut params = self.store.zero_grads();
        let nodes = self.backward_into(root, &mut params);
        Backward { nodes, params }
    }

    /// Reverse pass accumulating parameter gradients into `params`.
    pub fn backward_into(&self, root: Var, params: &mut Grads) -> Vec<Option<Vec<f64>>> {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0; self.nodes[root.0].value.len()]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64], c: f64) {
            match &mut grads[v.0] {
                Some(existing) => axpy(c, g, existing),
                slot @ None => *slot = Some(g.iter().map(|x| c * x).collect()),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    axpy(1.0, &g, &mut params.get_mut(*id).data);
                }
                Op::Embed { table, row } => {
                    let t = params.get_mut(*table);
                    let cols = t.cols;
                    axpy(1.0, &g, &mut t.data[row * cols..(row + 1) * cols]);
                }
                Op::Affine { w, b, x } => {
                    params.get_mut(*w).outer_acc(&g, self.value(*x));
                    if let Some(b) = b {
                        axpy(1.0, &g, &mut params.get_mut(*b).data);
                    }
                    let mut dx = vec![0.0; self.value(*x).len()];
                    self.store.get(*w).matvec_t_acc(&g, &mut dx);
                    acc(&mut grads, *x, &dx, 1.0);
                }
                Op::Combine(terms) => {
                    for &(v, c) in terms {
                        acc(&mut grads, v, &g, c);
                    }
                }
                Op::Gru { cell, x, h, step } => {
                    let (dx, dh) = cell.backward(self.store, params, self.value(*x), self.value(*h), step, &g);
                    acc(&mut grads, *x, &dx, 1.0);
                    acc(&mut grads, *h, &dh, 1.0);
                }
                Op::SoftmaxNll {
                    layer,
                    h,
                    target,
                    probs,
                } => {
                    let mut dlogits: Vec<f64> = probs.iter().map(|p| p * g[0]).collect();
                    dlogits[*target] -= g[0];
                    params.get_mut(layer.w).outer_acc(&dlogits, self.value(*h));
                    axpy(1.0, &dlogits, &mut params.get_mut(layer.b).data);
                    let mut dh = vec![0.0; self.value(*h).len()];
                    self.store.get(layer.w).matvec_t_acc(&dlogits, &mut dh);
                    acc(&mut grads, *h, &dh, 1.0);
                }
                Op::Dist { a, b } => {
                    let d = node.value[0];
                    if d > 0.0 {
                        let diff: Vec<f64> = self
                            .value(*a)
                            .iter()
                            .zip(self.value(*b))
                            .map(|(x, y)| (x - y) / d)
                            .collect();
                        acc(&mut grads, *a, &diff, g[0]);
                        acc(&mut grads, *b, &diff, -g[0]);
                    }
                }
                Op::Min { args, chosen } => {
                    acc(&mut grads, args[*chosen], &g, 1.0);
                }
                Op::BceLogit { x, label } => {
                    let p = crate::nn::sigmoid(self.scalar(*x));
                    acc(&mut grads, *x, &[(p - label) * g[0]], 1.0);
                }
            }
            grads[idx] = Some(g);
        }
        grads
    }
}
