//! Layer kinds and their forward/backward rules.
//!
//! Subgradient convention at ReLU/max kinks: the left branch wins, i.e. the
//! derivative of `max(u, v)` is `du` whenever `u >= v`. For argmax scans this
//! means the earliest maximal index is selected.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
}

#[derive(Debug, Clone)]
pub enum LayerKind {
    /// Fully connected: `y = W x + b`, weight shape `[out, in]`, input flattened.
    Dense { weight: Tensor, bias: Tensor },
    /// 2-d convolution, NCHW single sample, valid padding, stride 1.
    /// Weight shape `[oc, ic, kh, kw]`, bias `[oc]`.
    Conv2d { weight: Tensor, bias: Tensor },
    /// Non-overlapping max pooling with a square window.
    MaxPool2d { size: usize },
    Tanh,
    Relu,
    LeakyRelu { alpha: f64 },
    /// Numerically stable softmax over the flattened input.
    Softmax,
    /// Analytic monomial map: `y_k = c_k * prod_i x_i^{e[k][i]}`.
    /// Covers the closed-form corpus functions (products, powers).
    Monomial { exponents: Vec<Vec<u32>>, coeffs: Vec<f64> },
    /// Global max over the flattened input, scalar output.
    MaxReduce,
    /// Forces selected positions to zero (post-activation pruning).
    Mask { zeroed: Vec<bool> },
}

/// Parameter gradients accumulated during training.
#[derive(Debug, Clone)]
pub struct ParamGrad {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Layer {
            name: name.into(),
            kind,
        }
    }

    pub fn dense(name: impl Into<String>, weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 || weight.shape()[0] != bias.len() {
            return Err(Error::invalid("dense weight/bias shapes inconsistent"));
        }
        Ok(Layer::new(name, LayerKind::Dense { weight, bias }))
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let flat: usize = input.iter().product();
        match &self.kind {
            LayerKind::Dense { weight, .. } => {
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                if inp != flat {
                    return Err(Error::shape(
                        format!("layer `{}` input", self.name),
                        &[inp],
                        input,
                    ));
                }
                Ok(vec![out])
            }
            LayerKind::Conv2d { weight, .. } => {
                let ws = weight.shape();
                if ws.len() != 4 {
                    return Err(Error::invalid("conv2d weight must be [oc, ic, kh, kw]"));
                }
                let (oc, ic, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
                if kh == 0 || kw == 0 {
                    return Err(Error::invalid("conv kernel dims must be positive"));
                }
                if input.len() != 3 || input[0] != ic {
                    return Err(Error::shape(
                        format!("layer `{}` input", self.name),
                        &[ic],
                        input,
                    ));
                }
                let (h, w) = (input[1], input[2]);
                if h < kh || w < kw {
                    return Err(Error::invalid("conv input smaller than kernel"));
                }
                Ok(vec![oc, h - kh + 1, w - kw + 1])
            }
            LayerKind::MaxPool2d { size } => {
                if *size == 0 {
                    return Err(Error::invalid("pool size must be positive"));
                }
                if input.len() != 3 || input[1] % size != 0 || input[2] % size != 0 {
                    return Err(Error::invalid(format!(
                        "layer `{}`: pool size {} does not divide input {:?}",
                        self.name, size, input
                    )));
                }
                Ok(vec![input[0], input[1] / size, input[2] / size])
            }
            LayerKind::Tanh | LayerKind::Relu | LayerKind::LeakyRelu { .. } => {
                Ok(input.to_vec())
            }
            LayerKind::Softmax => Ok(vec![flat]),
            LayerKind::Monomial { exponents, coeffs } => {
                if exponents.len() != coeffs.len() {
                    return Err(Error::invalid("monomial exponents/coeffs length mismatch"));
                }
                if exponents.iter().any(|row| row.len() != flat) {
                    return Err(Error::shape(
                        format!("layer `{}` input", self.name),
                        &[exponents.first().map_or(0, |r| r.len())],
                        input,
                    ));
                }
                Ok(vec![coeffs.len()])
            }
            LayerKind::MaxReduce => Ok(vec![1]),
            LayerKind::Mask { zeroed } => {
                if zeroed.len() != flat {
                    return Err(Error::shape(
                        format!("layer `{}` mask", self.name),
                        &[zeroed.len()],
                        input,
                    ));
                }
                Ok(input.to_vec())
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let xd = x.data();
        match &self.kind {
            LayerKind::Dense { weight, bias } => {
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                let wd = weight.data();
                let mut y = bias.data().to_vec();
                for o in 0..out {
                    let row = &wd[o * inp..(o + 1) * inp];
                    let mut acc = 0.0;
                    for i in 0..inp {
                        acc += row[i] * xd[i];
                    }
                    y[o] += acc;
                }
                Tensor::new(vec![out], y)
            }
            LayerKind::Conv2d { weight, bias } => {
                let ws = weight.shape();
                let (oc, ic, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
                let (h, w) = (x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h - kh + 1, w - kw + 1);
                let wd = weight.data();
                let bd = bias.data();
                let mut y = vec![0.0; oc * oh * ow];
                for o in 0..oc {
                    for r in 0..oh {
                        for c in 0..ow {
                            let mut acc = bd[o];
                            for i in 0..ic {
                                for p in 0..kh {
                                    for q in 0..kw {
                                        acc += wd[((o * ic + i) * kh + p) * kw + q]
                                            * xd[(i * h + r + p) * w + c + q];
                                    }
                                }
                            }
                            y[(o * oh + r) * ow + c] = acc;
                        }
                    }
                }
                Tensor::new(vec![oc, oh, ow], y)
            }
            LayerKind::MaxPool2d { size } => {
                let s = *size;
                let (ch, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h / s, w / s);
                let mut y = vec![0.0; ch * oh * ow];
                for c in 0..ch {
                    for r in 0..oh {
                        for col in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            for p in 0..s {
                                for q in 0..s {
                                    let v = xd[(c * h + r * s + p) * w + col * s + q];
                                    if v > best {
                                        best = v;
                                    }
                                }
                            }
                            y[(c * oh + r) * ow + col] = best;
                        }
                    }
                }
                Tensor::new(vec![ch, oh, ow], y)
            }
            LayerKind::Tanh => Ok(x.map(f64::tanh)),
            LayerKind::Relu => Ok(x.map(|v| if v >= 0.0 { v } else { 0.0 })),
            LayerKind::LeakyRelu { alpha } => {
                let a = *alpha;
                Ok(x.map(move |v| if v >= 0.0 { v } else { a * v }))
            }
            LayerKind::Softmax => {
                let m = xd.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let exps: Vec<f64> = xd.iter().map(|&v| (v - m).exp()).collect();
                let z: f64 = exps.iter().sum();
                Tensor::new(vec![xd.len()], exps.iter().map(|&e| e / z).collect())
            }
            LayerKind::Monomial { exponents, coeffs } => {
                let mut y = Vec::with_capacity(coeffs.len());
                for (row, &c) in exponents.iter().zip(coeffs) {
                    let mut v = c;
                    for (&xi, &e) in xd.iter().zip(row) {
                        if e > 0 {
                            v *= xi.powi(e as i32);
                        }
                    }
                    y.push(v);
                }
                Tensor::new(vec![coeffs.len()], y)
            }
            LayerKind::MaxReduce => {
                let mut best = xd[0];
                for &v in &xd[1..] {
                    if v > best {
                        best = v;
                    }
                }
                Tensor::new(vec![1], vec![best])
            }
            LayerKind::Mask { zeroed } => {
                let y = xd
                    .iter()
                    .zip(zeroed)
                    .map(|(&v, &z)| if z { 0.0 } else { v })
                    .collect();
                Tensor::new(x.shape().to_vec(), y)
            }
        }
    }

    /// Propagates `dy` back through the layer. `x` is the cached input and
    /// `y` the cached output of the forward pass. When `grads` is given,
    /// parameter gradients are accumulated into it.
    pub fn backward(
        &self,
        x: &Tensor,
        y: &Tensor,
        dy: &Tensor,
        mut grads: Option<&mut ParamGrad>,
    ) -> Result<Tensor> {
        let xd = x.data();
        let dyd = dy.data();
        match &self.kind {
            LayerKind::Dense { weight, .. } => {
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                let wd = weight.data();
                let mut dx = vec![0.0; inp];
                for o in 0..out {
                    let g = dyd[o];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &wd[o * inp..(o + 1) * inp];
                    for i in 0..inp {
                        dx[i] += g * row[i];
                    }
                }
                if let Some(pg) = grads.as_deref_mut() {
                    let dw = pg.weight.data_mut();
                    for o in 0..out {
                        let g = dyd[o];
                        for i in 0..inp {
                            dw[o * inp + i] += g * xd[i];
                        }
                    }
                    let db = pg.bias.data_mut();
                    for o in 0..out {
                        db[o] += dyd[o];
                    }
                }
                Tensor::new(x.shape().to_vec(), dx)
            }
            LayerKind::Conv2d { weight, .. } => {
                let ws = weight.shape();
                let (oc, ic, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
                let (h, w) = (x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h - kh + 1, w - kw + 1);
                let wd = weight.data();
                let mut dx = vec![0.0; ic * h * w];
                for o in 0..oc {
                    for r in 0..oh {
                        for c in 0..ow {
                            let g = dyd[(o * oh + r) * ow + c];
                            if g == 0.0 {
                                continue;
                            }
                            for i in 0..ic {
                                for p in 0..kh {
                                    for q in 0..kw {
                                        dx[(i * h + r + p) * w + c + q] +=
                                            g * wd[((o * ic + i) * kh + p) * kw + q];
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(pg) = grads.as_deref_mut() {
                    let dwd = pg.weight.data_mut();
                    for o in 0..oc {
                        for r in 0..oh {
                            for c in 0..ow {
                                let g = dyd[(o * oh + r) * ow + c];
                                if g == 0.0 {
                                    continue;
                                }
                                for i in 0..ic {
                                    for p in 0..kh {
                                        for q in 0..kw {
                                            dwd[((o * ic + i) * kh + p) * kw + q] +=
                                                g * xd[(i * h + r + p) * w + c + q];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    let dbd = pg.bias.data_mut();
                    for o in 0..oc {
                        let mut acc = 0.0;
                        for r in 0..oh {
                            for c in 0..ow {
                                acc += dyd[(o * oh + r) * ow + c];
                            }
                        }
                        dbd[o] += acc;
                    }
                }
                Tensor::new(x.shape().to_vec(), dx)
            }
            LayerKind::MaxPool2d { size } => {
                let s = *size;
                let (ch, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h / s, w / s);
                let mut dx = vec![0.0; ch * h * w];
                for c in 0..ch {
                    for r in 0..oh {
                        for col in 0..ow {
                            // earliest maximum in scan order takes the gradient
                            let mut best = f64::NEG_INFINITY;
                            let mut bi = 0;
                            for p in 0..s {
                                for q in 0..s {
                                    let idx = (c * h + r * s + p) * w + col * s + q;
                                    if xd[idx] > best {
                                        best = xd[idx];
                                        bi = idx;
                                    }
                                }
                            }
                            dx[bi] += dyd[(c * oh + r) * ow + col];
                        }
                    }
                }
                Tensor::new(x.shape().to_vec(), dx)
            }
            LayerKind::Tanh => {
                let yd = y.data();
                let dx = dyd
                    .iter()
                    .zip(yd)
                    .map(|(&g, &t)| g * (1.0 - t * t))
                    .collect();
                Tensor::new(x.shape().to_vec(), dx)
            }
            LayerKind::Relu => {
                let dx = dyd
                    .iter()
                    .zip(xd)
                    .map(|(&g, &v)| if v >= 0.0 { g } else { 0.0 })
                    .collect();
                Tensor::new(x.shape().to_vec(), dx)
            }
            LayerKind::LeakyRelu { alpha } => {
                let a = *alpha;
                let dx = dyd
                    .iter()
                    .zip(xd)
                    .map(|(&g, &v)| if v >= 0.0 { g } else { a * g })
                    .collect();
                Tensor::new(x.shape().to_vec(), dx)
            }
            LayerKind::Softmax => {
                let sd = y.data();
                let dot: f64 = dyd.iter().zip(sd).map(|(&g, &s)| g * s).sum();
                let dx = dyd
                    .iter()
                    .zip(sd)
                    .map(|(&g, &s)| s * (g - dot))
                    .collect();
                Tensor::new(x.shape().to_vec(), dx)
            }
            LayerKind::Monomial { exponents, coeffs } => {
                let mut dx = vec![0.0; xd.len()];
                for (k, (row, &c)) in exponents.iter().zip(coeffs).enumerate() {
                    let g = dyd[k];
                    if g == 0.0 {
                        continue;
                    }
                    for i in 0..xd.len() {
                        let e = row[i];
                        if e == 0 {
                            continue;
                        }
                        // d/dx_i = c * e * x_i^{e-1} * prod_{j != i} x_j^{e_j}
                        let mut v = c * e as f64 * xd[i].powi(e as i32 - 1);
                        for (j, (&xj, &ej)) in xd.iter().zip(row).enumerate() {
                            if j != i && ej > 0 {
                                v *= xj.powi(ej as i32);
                            }
                        }
                        dx[i] += g * v;
                    }
                }
                Tensor::new(x.shape().to_vec(), dx)
            }
            LayerKind::MaxReduce => {
                let mut best = xd[0];
                let mut bi = 0;
                for (i, &v) in xd.iter().enumerate().skip(1) {
                    if v > best {
                        best = v;
                        bi = i;
                    }
                }
                let mut dx = vec![0.0; xd.len()];
                dx[bi] = dyd[0];
                Tensor::new(x.shape().to_vec(), dx)
            }
            LayerKind::Mask { zeroed } => {
                let dx = dyd
                    .iter()
                    .zip(zeroed)
                    .map(|(&g, &z)| if z { 0.0 } else { g })
                    .collect();
                Tensor::new(x.shape().to_vec(), dx)
            }
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. }
        )
    }

    pub fn zero_grad(&self) -> Option<ParamGrad> {
        match &self.kind {
            LayerKind::Dense { weight, bias } | LayerKind::Conv2d { weight, bias } => {
                Some(ParamGrad {
                    weight: Tensor::zeros(weight.shape()),
                    bias: Tensor::zeros(bias.shape()),
                })
            }
            _ => None,
        }
    }

    pub fn apply_step(&mut self, grad: &ParamGrad, lr: f64) {
        if let LayerKind::Dense { weight, bias } | LayerKind::Conv2d { weight, bias } =
            &mut self.kind
        {
            for (w, g) in weight.data_mut().iter_mut().zip(grad.weight.data()) {
                *w -= lr * g;
            }
            for (b, g) in bias.data_mut().iter_mut().zip(grad.bias.data()) {
                *b -= lr * g;
            }
        }
    }
}
