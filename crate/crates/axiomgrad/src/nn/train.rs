//! Minimal SGD trainer with cross-entropy loss, reproducible given a seed.

use super::{Layer, LayerKind, Network, ParamGrad};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub split_tag: SplitTag,
}

impl LabeledDataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>, split_tag: SplitTag) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::invalid(format!(
                "images ({}) and labels ({}) differ in length",
                images.len(),
                labels.len()
            )));
        }
        Ok(LabeledDataset {
            images,
            labels,
            split_tag,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Samples whose label equals `class`.
    pub fn filter_class(&self, class: usize) -> LabeledDataset {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (img, &lab) in self.images.iter().zip(&self.labels) {
            if lab == class {
                images.push(img.clone());
                labels.push(lab);
            }
        }
        LabeledDataset {
            images,
            labels,
            split_tag: self.split_tag,
        }
    }

    /// First `n` samples.
    pub fn take(&self, n: usize) -> LabeledDataset {
        LabeledDataset {
            images: self.images.iter().take(n).cloned().collect(),
            labels: self.labels.iter().take(n).copied().collect(),
            split_tag: self.split_tag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    CrossEntropy,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) && self.learning_rate != 0.0 {
            return Err(Error::invalid("learning_rate must be >= 0 and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        Ok(())
    }
}

/// Trains a copy of `net` with plain SGD. Iteration order and weight updates
/// are fully determined by `cfg.seed`.
pub fn train(net: &Network, dataset: &LabeledDataset, cfg: &TrainConfig) -> Result<Network> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    let n_layers = net.layers().len();
    if !matches!(net.layers()[n_layers - 1].kind, LayerKind::Softmax) {
        return Err(Error::invalid(
            "cross-entropy training expects a trailing softmax layer",
        ));
    }
    let num_classes = net.output_len();
    if dataset.labels.iter().any(|&l| l >= num_classes) {
        return Err(Error::invalid("label out of range for network output"));
    }

    let mut trained = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Option<ParamGrad>> =
                trained.layers().iter().map(Layer::zero_grad).collect();
            for &idx in batch {
                accumulate_sample(&trained, &dataset.images[idx], dataset.labels[idx], &mut grads)?;
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            let layer_grads: Vec<Option<ParamGrad>> = grads;
            // mutate weights in place
            let layers: Vec<Layer> = trained
                .layers()
                .iter()
                .zip(&layer_grads)
                .map(|(layer, g)| {
                    let mut l = layer.clone();
                    if let Some(g) = g {
                        l.apply_step(g, scale);
                    }
                    l
                })
                .collect();
            trained = Network::new(
                trained.input_shape().to_vec(),
                layers,
                trained.domain_box().cloned(),
            )?;
        }
    }
    Ok(trained)
}

fn accumulate_sample(
    net: &Network,
    x: &Tensor,
    label: usize,
    grads: &mut [Option<ParamGrad>],
) -> Result<()> {
    let acts = net.forward_cached(x)?;
    let n = net.layers().len();
    // softmax + cross-entropy collapse: dL/dz = p - onehot(label)
    let probs = acts[n].data();
    let mut dy = Tensor::zeros(acts[n - 1].shape());
    for (k, d) in dy.data_mut().iter_mut().enumerate() {
        *d = probs[k] - if k == label { 1.0 } else { 0.0 };
    }
    for k in (0..n - 1).rev() {
        let layer = &net.layers()[k];
        dy = layer.backward(&acts[k], &acts[k + 1], &dy, grads[k].as_mut())?;
    }
    Ok(())
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(net: &Network, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (img, &label) in dataset.images.iter().zip(&dataset.labels) {
        let out = net.forward(img)?;
        let pred = out
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if pred == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
