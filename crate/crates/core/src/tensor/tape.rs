//! Reverse-mode differentiation tape.
//!
//! Nodes are appended in forward order, so the backward pass is a single
//! reverse sweep. Each op records a closure that maps the node's output
//! gradient to contributions for its parents; closures capture cloned
//! copies of whatever forward values they need. Ops whose parents all
//! have `needs_grad == false` skip closure creation, so inference-only
//! forwards pay no backward bookkeeping.

use super::{log_softmax, softmax, Tensor, TensorError};

pub type NodeId = usize;

type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<(NodeId, Vec<f64>)>>;

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, needs_grad: bool, backward: Option<BackwardFn>) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            backward,
        });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id].grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input tensor; it participates in gradients iff
    /// `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push(t.clone(), t.requires_grad, None)
    }

    /// Register a value that never receives gradient (teacher outputs,
    /// masks, cached activations).
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, false, None)
    }

    fn shape2(&self, id: NodeId) -> (usize, usize) {
        let s = self.nodes[id].value.shape();
        assert_eq!(s.len(), 2, "expected 2-d node, got shape {:?}", s);
        (s[0], s[1])
    }

    /// C = A · B for A `[m,k]`, B `[k,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, ka) = self.shape2(a);
        let (kb, n) = self.shape2(b);
        if ka != kb {
            return Err(TensorError::ShapeMismatch {
                left: self.nodes[a].value.shape().to_vec(),
                right: self.nodes[b].value.shape().to_vec(),
            });
        }
        let k = ka;
        let av = self.nodes[a].value.data().to_vec();
        let bv = self.nodes[b].value.data().to_vec();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                // dA = G · Bᵀ, dB = Aᵀ · G
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * bv[p * n + j];
                        }
                        da[i * k + p] = s;
                    }
                }
                let mut db = vec![0.0; k * n];
                for p in 0..k {
                    for i in 0..m {
                        let aip = av[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                vec![(a, da), (b, db)]
            }))
        } else {
            None
        };
        Ok(self.push(
            Tensor::from_vec(vec![m, n], out)?,
            needs,
            backward,
        ))
    }

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let sa = self.nodes[a].value.shape().to_vec();
        let sb = self.nodes[b].value.shape().to_vec();
        if sa != sb {
            return Err(TensorError::ShapeMismatch { left: sa, right: sb });
        }
        let out: Vec<f64> = self.nodes[a]
            .value
            .data()
            .iter()
            .zip(self.nodes[b].value.data())
            .map(|(x, y)| x + y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                vec![(a, g.to_vec()), (b, g.to_vec())]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(sa, out)?, needs, backward))
    }

    /// Elementwise difference a − b.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let sa = self.nodes[a].value.shape().to_vec();
        let sb = self.nodes[b].value.shape().to_vec();
        if sa != sb {
            return Err(TensorError::ShapeMismatch { left: sa, right: sb });
        }
        let out: Vec<f64> = self.nodes[a]
            .value
            .data()
            .iter()
            .zip(self.nodes[b].value.data())
            .map(|(x, y)| x - y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                vec![
                    (a, g.to_vec()),
                    (b, g.iter().map(|x| -x).collect()),
                ]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(sa, out)?, needs, backward))
    }

    /// Matrix `[m,n]` plus a row vector `[n]` broadcast over rows.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, TensorError> {
        let (m, n) = self.shape2(a);
        if self.nodes[row].value.shape() != [n] {
            return Err(TensorError::ShapeMismatch {
                left: vec![m, n],
                right: self.nodes[row].value.shape().to_vec(),
            });
        }
        let rv = self.nodes[row].value.data().to_vec();
        let out: Vec<f64> = self.nodes[a]
            .value
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + rv[i % n])
            .collect();
        let needs = self.needs(a) || self.needs(row);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let mut drow = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        drow[j] += g[i * n + j];
                    }
                }
                vec![(a, g.to_vec()), (row, drow)]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(vec![m, n], out)?, needs, backward))
    }

    /// Multiply every element by a scalar constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let shape = self.nodes[a].value.shape().to_vec();
        let out: Vec<f64> = self.nodes[a].value.data().iter().map(|x| c * x).collect();
        let needs = self.needs(a);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                vec![(a, g.iter().map(|x| c * x).collect())]
            }))
        } else {
            None
        };
        self.push(Tensor::from_vec(shape, out).unwrap(), needs, backward)
    }

    /// Add a scalar constant to every element (gradient passes through).
    pub fn shift(&mut self, a: NodeId, c: f64) -> NodeId {
        let shape = self.nodes[a].value.shape().to_vec();
        let out: Vec<f64> = self.nodes[a].value.data().iter().map(|x| x + c).collect();
        let needs = self.needs(a);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| vec![(a, g.to_vec())]))
        } else {
            None
        };
        self.push(Tensor::from_vec(shape, out).unwrap(), needs, backward)
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: NodeId, c: &Tensor) -> Result<NodeId, TensorError> {
        let sa = self.nodes[a].value.shape().to_vec();
        if sa != c.shape() {
            return Err(TensorError::ShapeMismatch {
                left: sa,
                right: c.shape().to_vec(),
            });
        }
        let cv = c.data().to_vec();
        let out: Vec<f64> = self.nodes[a]
            .value
            .data()
            .iter()
            .zip(&cv)
            .map(|(x, y)| x * y)
            .collect();
        let needs = self.needs(a);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                vec![(a, g.iter().zip(&cv).map(|(x, y)| x * y).collect())]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(sa, out)?, needs, backward))
    }

    /// Elementwise square.
    pub fn square(&mut self, a: NodeId) -> NodeId {
        let shape = self.nodes[a].value.shape().to_vec();
        let av = self.nodes[a].value.data().to_vec();
        let out: Vec<f64> = av.iter().map(|x| x * x).collect();
        let needs = self.needs(a);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                vec![(a, g.iter().zip(&av).map(|(gy, x)| 2.0 * x * gy).collect())]
            }))
        } else {
            None
        };
        self.push(Tensor::from_vec(shape, out).unwrap(), needs, backward)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.shape2(a);
        let av = self.nodes[a].value.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        let needs = self.needs(a);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let mut da = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        da[i * n + j] = g[j * m + i];
                    }
                }
                vec![(a, da)]
            }))
        } else {
            None
        };
        self.push(Tensor::from_vec(vec![n, m], out).unwrap(), needs, backward)
    }

    /// GELU, tanh approximation. Smooth everywhere, which keeps
    /// finite-difference gradient checks clean.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        const C: f64 = 0.7978845608028654; // sqrt(2/pi)
        const A3: f64 = 0.044715;
        let shape = self.nodes[a].value.shape().to_vec();
        let av = self.nodes[a].value.data().to_vec();
        let out: Vec<f64> = av
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (C * (x + A3 * x * x * x)).tanh()))
            .collect();
        let needs = self.needs(a);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let da = av
                    .iter()
                    .zip(g)
                    .map(|(&x, gy)| {
                        let t = (C * (x + A3 * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * C * (1.0 + 3.0 * A3 * x * x);
                        gy * (0.5 * (1.0 + t) + 0.5 * x * dt)
                    })
                    .collect();
                vec![(a, da)]
            }))
        } else {
            None
        };
        self.push(Tensor::from_vec(shape, out).unwrap(), needs, backward)
    }

    /// Row-wise softmax over the positions where `allowed` is true.
    /// A fully masked row yields an all-zero probability row, so downstream
    /// attention reads nothing from it.
    pub fn masked_softmax_rows(
        &mut self,
        a: NodeId,
        allowed: &[bool],
    ) -> Result<NodeId, TensorError> {
        let (m, n) = self.shape2(a);
        if allowed.len() != m * n {
            return Err(TensorError::ShapeMismatch {
                left: vec![m, n],
                right: vec![allowed.len()],
            });
        }
        let av = self.nodes[a].value.data();
        let mask = allowed.to_vec();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let mrow = &mask[i * n..(i + 1) * n];
            let mut max = f64::NEG_INFINITY;
            for j in 0..n {
                if mrow[j] && row[j] > max {
                    max = row[j];
                }
            }
            if !max.is_finite() {
                continue; // fully masked row stays zero
            }
            let mut sum = 0.0;
            for j in 0..n {
                if mrow[j] {
                    let e = (row[j] - max).exp();
                    out[i * n + j] = e;
                    sum += e;
                }
            }
            for j in 0..n {
                out[i * n + j] /= sum;
            }
        }
        let needs = self.needs(a);
        let pv = out.clone();
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    let p = &pv[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let dot: f64 = p.iter().zip(gr).map(|(x, y)| x * y).sum();
                    for j in 0..n {
                        da[i * n + j] = p[j] * (gr[j] - dot);
                    }
                }
                vec![(a, da)]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(vec![m, n], out)?, needs, backward))
    }

    /// Row-wise layer norm with shared gain/bias vectors of length `n`.
    pub fn layer_norm_rows(
        &mut self,
        a: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId, TensorError> {
        let (m, n) = self.shape2(a);
        if self.nodes[gain].value.shape() != [n] || self.nodes[bias].value.shape() != [n] {
            return Err(TensorError::ShapeMismatch {
                left: vec![m, n],
                right: self.nodes[gain].value.shape().to_vec(),
            });
        }
        if eps <= 0.0 {
            return Err(TensorError::InvalidArgument("layer norm eps must be > 0".into()));
        }
        let av = self.nodes[a].value.data().to_vec();
        let gv = self.nodes[gain].value.data().to_vec();
        let bv = self.nodes[bias].value.data();
        let mut out = vec![0.0; m * n];
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..n {
                let xh = (row[j] - mean) * inv;
                xhat[i * n + j] = xh;
                out[i * n + j] = gv[j] * xh + bv[j];
            }
        }
        let needs = self.needs(a) || self.needs(gain) || self.needs(bias);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let mut da = vec![0.0; m * n];
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                for i in 0..m {
                    let xh = &xhat[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    // ghat = gain ⊙ g; dx = inv_std (ghat − mean(ghat) − xhat·mean(ghat⊙xhat))
                    let mut mean_gh = 0.0;
                    let mut mean_ghx = 0.0;
                    for j in 0..n {
                        let gh = gv[j] * gr[j];
                        mean_gh += gh;
                        mean_ghx += gh * xh[j];
                        dgain[j] += gr[j] * xh[j];
                        dbias[j] += gr[j];
                    }
                    mean_gh /= n as f64;
                    mean_ghx /= n as f64;
                    for j in 0..n {
                        let gh = gv[j] * gr[j];
                        da[i * n + j] = inv_std[i] * (gh - mean_gh - xh[j] * mean_ghx);
                    }
                }
                vec![(a, da), (gain, dgain), (bias, dbias)]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(vec![m, n], out)?, needs, backward))
    }

    /// Gather rows of `table` `[v,d]` at `ids`, producing `[len(ids),d]`.
    /// Backward scatter-adds into the table.
    pub fn embedding_rows(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, TensorError> {
        let (v, d) = self.shape2(table);
        for &id in ids {
            if id >= v {
                return Err(TensorError::InvalidArgument(format!(
                    "embedding index {id} out of range for table with {v} rows"
                )));
            }
        }
        let tv = self.nodes[table].value.data();
        let t = ids.len();
        let mut out = vec![0.0; t * d];
        for (r, &id) in ids.iter().enumerate() {
            out[r * d..(r + 1) * d].copy_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let needs = self.needs(table);
        let ids_own = ids.to_vec();
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let mut dt = vec![0.0; v * d];
                for (r, &id) in ids_own.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += g[r * d + j];
                    }
                }
                vec![(table, dt)]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(vec![t, d], out)?, needs, backward))
    }

    /// Column slice `[m, width]` starting at `start`.
    pub fn slice_cols(
        &mut self,
        a: NodeId,
        start: usize,
        width: usize,
    ) -> Result<NodeId, TensorError> {
        let (m, n) = self.shape2(a);
        if start + width > n {
            return Err(TensorError::InvalidArgument(format!(
                "column slice {start}..{} out of range for width {n}",
                start + width
            )));
        }
        let av = self.nodes[a].value.data();
        let mut out = vec![0.0; m * width];
        for i in 0..m {
            out[i * width..(i + 1) * width]
                .copy_from_slice(&av[i * n + start..i * n + start + width]);
        }
        let needs = self.needs(a);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    da[i * n + start..i * n + start + width]
                        .copy_from_slice(&g[i * width..(i + 1) * width]);
                }
                vec![(a, da)]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(vec![m, width], out)?, needs, backward))
    }

    /// Concatenate same-height matrices along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput);
        }
        let (m, _) = self.shape2(parts[0]);
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (mp, np) = self.shape2(p);
                assert_eq!(mp, m, "concat_cols requires equal heights");
                np
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        let mut col = 0;
        for (idx, &p) in parts.iter().enumerate() {
            let w = widths[idx];
            let pv = self.nodes[p].value.data();
            for i in 0..m {
                out[i * total + col..i * total + col + w]
                    .copy_from_slice(&pv[i * w..(i + 1) * w]);
            }
            col += w;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        let parts_own = parts.to_vec();
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let mut outs = Vec::with_capacity(parts_own.len());
                let mut col = 0;
                for (idx, &p) in parts_own.iter().enumerate() {
                    let w = widths[idx];
                    let mut dp = vec![0.0; m * w];
                    for i in 0..m {
                        dp[i * w..(i + 1) * w]
                            .copy_from_slice(&g[i * total + col..i * total + col + w]);
                    }
                    outs.push((p, dp));
                    col += w;
                }
                outs
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(vec![m, total], out)?, needs, backward))
    }

    /// Sum of all elements, a `[1]` node.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let numel = self.nodes[a].value.numel();
        let s: f64 = self.nodes[a].value.data().iter().sum();
        let needs = self.needs(a);
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| vec![(a, vec![g[0]; numel])]))
        } else {
            None
        };
        self.push(Tensor::scalar(s), needs, backward)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let (m, n) = self.shape2(a);
        let av = self.nodes[a].value.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let lp = log_softmax(&av[i * n..(i + 1) * n])?;
            out[i * n..(i + 1) * n].copy_from_slice(&lp);
        }
        let needs = self.needs(a);
        let lp_saved = out.clone();
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    let gr = &g[i * n..(i + 1) * n];
                    let gsum: f64 = gr.iter().sum();
                    for j in 0..n {
                        let p = lp_saved[i * n + j].exp();
                        da[i * n + j] = gr[j] - p * gsum;
                    }
                }
                vec![(a, da)]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::from_vec(vec![m, n], out)?, needs, backward))
    }

    /// Fused log-softmax + negative log-likelihood, summed over the rows
    /// where `mask` is true. `targets[t]` is the label column of row `t`.
    pub fn cross_entropy_sum(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<NodeId, TensorError> {
        let (m, n) = self.shape2(logits);
        if targets.len() != m || mask.len() != m {
            return Err(TensorError::ShapeMismatch {
                left: vec![m],
                right: vec![targets.len()],
            });
        }
        for (&y, &keep) in targets.iter().zip(mask) {
            if keep && y >= n {
                return Err(TensorError::InvalidArgument(format!(
                    "target id {y} out of range for vocab {n}"
                )));
            }
        }
        let av = self.nodes[logits].value.data().to_vec();
        let mut loss = 0.0;
        for t in 0..m {
            if !mask[t] {
                continue;
            }
            let lp = log_softmax(&av[t * n..(t + 1) * n])?;
            loss -= lp[targets[t]];
        }
        let needs = self.needs(logits);
        let targets_own = targets.to_vec();
        let mask_own = mask.to_vec();
        let backward: Option<BackwardFn> = if needs {
            Some(Box::new(move |g: &[f64]| {
                let mut da = vec![0.0; m * n];
                for t in 0..m {
                    if !mask_own[t] {
                        continue;
                    }
                    let p = softmax(&av[t * n..(t + 1) * n]).expect("finite logits");
                    for j in 0..n {
                        let indicator = if j == targets_own[t] { 1.0 } else { 0.0 };
                        da[t * n + j] = g[0] * (p[j] - indicator);
                    }
                }
                vec![(logits, da)]
            }))
        } else {
            None
        };
        Ok(self.push(Tensor::scalar(loss), needs, backward))
    }

    /// Reverse sweep from a scalar root. Fills `grad` on every node that
    /// needs it; read parameter gradients with `grad()`.
    pub fn backward(&mut self, root: NodeId) -> Result<(), TensorError> {
        let root_shape = self.nodes[root].value.shape().to_vec();
        if root_shape != [1] {
            return Err(TensorError::NonScalarOutput(root_shape));
        }
        self.nodes[root].grad = Some(vec![1.0]);
        for id in (0..=root).rev() {
            if self.nodes[id].grad.is_none() {
                continue;
            }
            let Some(backward) = self.nodes[id].backward.take() else {
                continue;
            };
            let g = self.nodes[id].grad.clone().unwrap();
            let contributions = backward(&g);
            for (parent, contrib) in contributions {
                if !self.nodes[parent].needs_grad {
                    continue;
                }
                debug_assert_eq!(contrib.len(), self.nodes[parent].value.numel());
                match &mut self.nodes[parent].grad {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contrib) {
                            *a += c;
                        }
                    }
                    None => self.nodes[parent].grad = Some(contrib),
                }
            }
            self.nodes[id].backward = Some(backward);
        }
        Ok(())
    }
}
