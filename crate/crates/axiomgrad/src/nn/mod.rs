//! Feed-forward network core: exact forward evaluation, reverse-mode
//! gradients, layer splitting, and a minimal SGD trainer.

mod layer;
mod train;

pub use layer::{Layer, LayerKind, ParamGrad};
pub use train::{accuracy, train, LabeledDataset, Loss, SplitTag, TrainConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Axis-aligned hyperrectangle of valid inputs.
#[derive(Debug, Clone)]
pub struct DomainBox {
    pub a: Tensor,
    pub b: Tensor,
}

impl DomainBox {
    pub fn new(a: Tensor, b: Tensor) -> Result<Self> {
        if !a.same_shape(&b) {
            return Err(Error::shape("DomainBox::new", a.shape(), b.shape()));
        }
        if a.data().iter().zip(b.data()).any(|(&lo, &hi)| lo > hi) {
            return Err(Error::invalid("domain box must satisfy a <= b"));
        }
        Ok(DomainBox { a, b })
    }

    pub fn unit(shape: &[usize]) -> Self {
        DomainBox {
            a: Tensor::zeros(shape),
            b: Tensor::filled(shape, 1.0),
        }
    }

    pub fn symmetric(shape: &[usize], half_width: f64) -> Self {
        DomainBox {
            a: Tensor::filled(shape, -half_width),
            b: Tensor::filled(shape, half_width),
        }
    }

    pub fn contains(&self, x: &Tensor) -> bool {
        x.same_shape(&self.a) && x.within(&self.a, &self.b)
    }
}

/// Anything with a value and an input gradient. Implemented by [`Network`]
/// and by the weighted-sum wrapper used for the linearity fixtures.
pub trait Model: Sync {
    fn input_shape(&self) -> &[usize];
    fn output_len(&self) -> usize;
    fn value(&self, x: &Tensor) -> Result<Tensor>;
    fn grad(&self, x: &Tensor, output_index: usize) -> Result<Tensor>;
}

/// Layered feed-forward model `F`.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    domain_box: Option<DomainBox>,
}

impl Network {
    pub fn new(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        domain_box: Option<DomainBox>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        if let Some(db) = &domain_box {
            let n: usize = input_shape.iter().product();
            if db.a.len() != n {
                return Err(Error::shape("Network::new domain box", &input_shape, db.a.shape()));
            }
        }
        Ok(Network {
            layers,
            input_shape,
            output_shape: shape,
            domain_box,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn output_len(&self) -> usize {
        self.output_shape.iter().product()
    }

    pub fn domain_box(&self) -> Option<&DomainBox> {
        self.domain_box.as_ref()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice()
            && x.len() != self.input_shape.iter().product::<usize>()
        {
            return Err(Error::shape("Network input", &self.input_shape, x.shape()));
        }
        x.check_finite("Network input")
    }

    /// Evaluates `F(x)`. Pure; layer order fixed, so results are
    /// run-to-run identical.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x
            .clone()
            .reshaped(self.input_shape.clone())
            .unwrap_or_else(|_| x.clone());
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        cur.check_finite("Network output")?;
        Ok(cur)
    }

    /// Forward pass keeping every intermediate activation.
    /// `acts[0]` is the input, `acts[k]` the output of layer `k-1`.
    fn forward_cached(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(
            x.clone()
                .reshaped(self.input_shape.clone())
                .unwrap_or_else(|_| x.clone()),
        );
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap())?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Reverse-mode gradient of output component `output_index` w.r.t. the input.
    pub fn gradient(&self, x: &Tensor, output_index: usize) -> Result<Tensor> {
        if output_index >= self.output_len() {
            return Err(Error::invalid(format!(
                "output index {} out of range ({} outputs)",
                output_index,
                self.output_len()
            )));
        }
        let acts = self.forward_cached(x)?;
        let mut seed = Tensor::zeros(self.output_shape());
        seed.data_mut()[output_index] = 1.0;
        self.backward_from(&acts, seed)
    }

    fn backward_from(&self, acts: &[Tensor], seed: Tensor) -> Result<Tensor> {
        let mut dy = seed;
        for (k, layer) in self.layers.iter().enumerate().rev() {
            dy = layer.backward(&acts[k], &acts[k + 1], &dy, None)?;
        }
        Ok(dy)
    }

    /// Full input Jacobian `[out, in]` via one backward pass per output
    /// component. Reference-oracle cost, only used at desk scale.
    pub fn input_jacobian(&self, x: &Tensor) -> Result<Tensor> {
        let acts = self.forward_cached(x)?;
        let out = self.output_len();
        let inp: usize = self.input_shape.iter().product();
        let mut jac = vec![0.0; out * inp];
        for o in 0..out {
            let mut seed = Tensor::zeros(self.output_shape());
            seed.data_mut()[o] = 1.0;
            let g = self.backward_from(&acts, seed)?;
            jac[o * inp..(o + 1) * inp].copy_from_slice(g.data());
        }
        Tensor::new(vec![out, inp], jac)
    }

    /// Splits `F = G ∘ H` after the named layer. The layer must be neither
    /// the first nor the last of the chain.
    pub fn split(&self, layer_name: &str) -> Result<SplitNetwork> {
        let idx = self
            .layer_index(layer_name)
            .ok_or_else(|| Error::UnknownLayer(layer_name.to_string()))?;
        if idx == 0 || idx + 1 >= self.layers.len() {
            return Err(Error::invalid(format!(
                "cannot split at `{}`: first or last layer",
                layer_name
            )));
        }
        let mut shape = self.input_shape.clone();
        for layer in &self.layers[..=idx] {
            shape = layer.output_shape(&shape)?;
        }
        let front = Network::new(
            self.input_shape.clone(),
            self.layers[..=idx].to_vec(),
            self.domain_box.clone(),
        )?;
        let back = Network::new(shape, self.layers[idx + 1..].to_vec(), None)?;
        SplitNetwork::new(front, back, layer_name)
    }

    /// Copy of the network without a trailing softmax layer, for attributing
    /// pre-softmax logits.
    pub fn logits_view(&self) -> Network {
        if self.layers.len() > 1
            && matches!(self.layers.last().unwrap().kind, LayerKind::Softmax)
        {
            Network::new(
                self.input_shape.clone(),
                self.layers[..self.layers.len() - 1].to_vec(),
                self.domain_box.clone(),
            )
            .expect("prefix of a valid network is valid")
        } else {
            self.clone()
        }
    }

    /// Returns a copy whose named layer has its outputs at `zeroed` positions
    /// forced to 0 on every forward pass.
    pub fn with_mask(&self, layer_name: &str, zeroed: &[bool]) -> Result<Network> {
        let idx = self
            .layer_index(layer_name)
            .ok_or_else(|| Error::UnknownLayer(layer_name.to_string()))?;
        let mut shape = self.input_shape.clone();
        for layer in &self.layers[..=idx] {
            shape = layer.output_shape(&shape)?;
        }
        let width: usize = shape.iter().product();
        if zeroed.len() != width {
            return Err(Error::shape("with_mask", &[width], &[zeroed.len()]));
        }
        let mask_name = format!("{}__mask", layer_name);
        let mut layers = Vec::with_capacity(self.layers.len() + 1);
        for (k, layer) in self.layers.iter().enumerate() {
            // re-masking replaces any existing mask attached to this layer
            if layer.name == mask_name {
                continue;
            }
            layers.push(layer.clone());
            if k == idx {
                layers.push(Layer::new(
                    mask_name.clone(),
                    LayerKind::Mask {
                        zeroed: zeroed.to_vec(),
                    },
                ));
            }
        }
        Network::new(self.input_shape.clone(), layers, self.domain_box.clone())
    }
}

impl Model for Network {
    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn output_len(&self) -> usize {
        Network::output_len(self)
    }

    fn value(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }

    fn grad(&self, x: &Tensor, output_index: usize) -> Result<Tensor> {
        self.gradient(x, output_index)
    }
}

/// Weighted sum of networks sharing input/output shapes. Used to realize
/// `alpha*F + beta*G` fixtures without graph surgery.
pub struct WeightedSum {
    pub terms: Vec<(f64, Network)>,
}

impl WeightedSum {
    pub fn new(terms: Vec<(f64, Network)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("weighted sum needs at least one term"));
        }
        let shape = terms[0].1.input_shape().to_vec();
        let out = terms[0].1.output_len();
        for (_, net) in &terms[1..] {
            if net.input_shape() != shape.as_slice() || net.output_len() != out {
                return Err(Error::invalid("weighted sum terms must share shapes"));
            }
        }
        Ok(WeightedSum { terms })
    }
}

impl Model for WeightedSum {
    fn input_shape(&self) -> &[usize] {
        self.terms[0].1.input_shape()
    }

    fn output_len(&self) -> usize {
        self.terms[0].1.output_len()
    }

    fn value(&self, x: &Tensor) -> Result<Tensor> {
        let mut acc = Tensor::zeros(&[self.output_len()]);
        for (w, net) in &self.terms {
            let v = net.forward(x)?.reshaped(vec![self.output_len()])?;
            acc = acc.add(&v.scale(*w))?;
        }
        Ok(acc)
    }

    fn grad(&self, x: &Tensor, output_index: usize) -> Result<Tensor> {
        let mut acc = Tensor::zeros(self.input_shape());
        for (w, net) in &self.terms {
            acc = acc.add(&net.gradient(x, output_index)?.scale(*w))?;
        }
        Ok(acc)
    }
}

/// `F = G ∘ H` split at a named internal layer.
#[derive(Debug, Clone)]
pub struct SplitNetwork {
    pub front: Network,
    pub back: Network,
    pub split_layer_name: String,
}

impl SplitNetwork {
    pub fn new(front: Network, back: Network, split_layer_name: &str) -> Result<Self> {
        let mid: usize = front.output_shape().iter().product();
        let back_in: usize = back.input_shape().iter().product();
        if mid != back_in {
            return Err(Error::shape(
                "SplitNetwork::new",
                front.output_shape(),
                back.input_shape(),
            ));
        }
        Ok(SplitNetwork {
            front,
            back,
            split_layer_name: split_layer_name.to_string(),
        })
    }

    pub fn internal_width(&self) -> usize {
        self.front.output_shape().iter().product()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.front.forward(x)?;
        self.back.forward(&h)
    }

    /// Gradient of the back half `G` at internal activations `h`.
    pub fn backprop_from_internal(&self, h: &Tensor, output_index: usize) -> Result<Tensor> {
        if h.len() != self.internal_width() {
            return Err(Error::shape(
                "backprop_from_internal",
                self.front.output_shape(),
                h.shape(),
            ));
        }
        self.back.gradient(h, output_index)
    }
}

/// Uniform weight init in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
pub fn init_dense(name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Layer {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w: Vec<f64> = (0..fan_out * fan_in)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    let b: Vec<f64> = (0..fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
    Layer::new(
        name,
        LayerKind::Dense {
            weight: Tensor::new(vec![fan_out, fan_in], w).unwrap(),
            bias: Tensor::new(vec![fan_out], b).unwrap(),
        },
    )
}

pub fn init_conv2d(
    name: &str,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    rng: &mut impl Rng,
) -> Layer {
    let fan_in = in_channels * kernel * kernel;
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w: Vec<f64> = (0..out_channels * fan_in)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    let b: Vec<f64> = (0..out_channels)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Layer::new(
        name,
        LayerKind::Conv2d {
            weight: Tensor::new(vec![out_channels, in_channels, kernel, kernel], w).unwrap(),
            bias: Tensor::new(vec![out_channels], b).unwrap(),
        },
    )
}

/// The desk-scale Fashion-MNIST architecture: two conv+tanh/maxpool blocks,
/// two tanh dense layers (160 and 64 wide), then a dense projection to 10
/// classes and softmax.
pub fn fashion_mnist_net(seed: u64) -> Network {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        init_conv2d("conv1", 1, 5, 5, &mut rng),
        Layer::new("conv1_tanh", LayerKind::Tanh),
        Layer::new("pool1", LayerKind::MaxPool2d { size: 2 }),
        init_conv2d("conv2", 5, 10, 5, &mut rng),
        Layer::new("conv2_tanh", LayerKind::Tanh),
        Layer::new("pool2", LayerKind::MaxPool2d { size: 2 }),
        init_dense("fc1", 160, 160, &mut rng),
        Layer::new("fc1_tanh", LayerKind::Tanh),
        init_dense("fc2", 160, 64, &mut rng),
        Layer::new("fc2_tanh", LayerKind::Tanh),
        init_dense("fc3", 64, 10, &mut rng),
        Layer::new("softmax", LayerKind::Softmax),
    ];
    Network::new(
        vec![1, 28, 28],
        layers,
        Some(DomainBox::unit(&[1, 28, 28])),
    )
    .expect("fashion-mnist architecture is shape-consistent")
}
