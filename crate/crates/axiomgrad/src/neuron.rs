//! Internal-neuron attributions over a split network `F = G ∘ H`: per-input
//! flow, conductance, and patch attributions, each with an exact
//! Jacobian-based oracle, plus the fast directional-derivative approximation
//! that never materializes a Jacobian of `H`.

use crate::error::{Error, Result};
use crate::nn::SplitNetwork;
use crate::tensor::{pairwise_sum_tensors, Tensor};
use rayon::prelude::*;

/// A patch of input features: a sorted, duplicate-free index set `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSpec {
    indices: Vec<usize>,
}

impl PatchSpec {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        let before = indices.len();
        indices.dedup();
        if indices.len() != before {
            return Err(Error::invalid("patch indices contain duplicates"));
        }
        Ok(PatchSpec { indices })
    }

    /// All indices of a 2-d raster (shape `[rows, cols]`) inside the
    /// inclusive rectangle `(r0, c0)..=(r1, c1)`.
    pub fn rect(rows: usize, cols: usize, r0: usize, c0: usize, r1: usize, c1: usize) -> Result<Self> {
        if r1 >= rows || c1 >= cols || r0 > r1 || c0 > c1 {
            return Err(Error::invalid("rectangle outside raster or inverted"));
        }
        let mut indices = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                indices.push(r * cols + c);
            }
        }
        PatchSpec::new(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `S^c` relative to an input of `input_size` features.
    pub fn complement(&self, input_size: usize) -> Result<PatchSpec> {
        if self.indices.iter().any(|&i| i >= input_size) {
            return Err(Error::invalid("patch index out of input range"));
        }
        let member: Vec<bool> = {
            let mut m = vec![false; input_size];
            for &i in &self.indices {
                m[i] = true;
            }
            m
        };
        PatchSpec::new((0..input_size).filter(|&i| !member[i]).collect())
    }

    /// Displacement `x - x'` restricted to the patch, zero elsewhere.
    fn displacement(&self, x: &Tensor, x_prime: &Tensor) -> Result<Tensor> {
        if !x.same_shape(x_prime) {
            return Err(Error::shape("PatchSpec displacement", x.shape(), x_prime.shape()));
        }
        if self.indices.iter().any(|&i| i >= x.len()) {
            return Err(Error::invalid("patch index out of input range"));
        }
        let mut d = Tensor::zeros(x.shape());
        for &i in &self.indices {
            d.data_mut()[i] = x.data()[i] - x_prime.data()[i];
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NeuronKind {
    PerInput(usize),
    Conductance,
    Patch(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronMethod {
    Exact,
    Fast,
}

/// Per-neuron attribution vector for one internal layer.
#[derive(Debug, Clone)]
pub struct NeuronAttribution {
    pub layer_name: String,
    pub values: Tensor,
    pub kind: NeuronKind,
    pub steps: usize,
    pub method: NeuronMethod,
}

fn check_common(split: &SplitNetwork, x: &Tensor, x_prime: &Tensor, target: usize, steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    if !x.same_shape(x_prime) {
        return Err(Error::shape("neuron attribution endpoints", x.shape(), x_prime.shape()));
    }
    if x.len() != split.front.input_shape().iter().product::<usize>() {
        return Err(Error::shape(
            "neuron attribution input",
            split.front.input_shape(),
            x.shape(),
        ));
    }
    if target >= split.back.output_len() {
        return Err(Error::invalid(format!(
            "target {} out of range ({} outputs)",
            target,
            split.back.output_len()
        )));
    }
    Ok(())
}

fn lerp(x_prime: &Tensor, x: &Tensor, t: f64) -> Tensor {
    x_prime
        .zip_map(x, |xp, xi| xp + t * (xi - xp))
        .expect("shapes checked")
}

/// Exact midpoint-node integral of `dG/dH_j * (J_H d)_j` along the straight
/// line, for an arbitrary effective displacement `d`. All exact neuron
/// attributions are this integral with different `d`.
fn exact_directional(
    split: &SplitNetwork,
    x: &Tensor,
    x_prime: &Tensor,
    target: usize,
    d: &Tensor,
    steps: usize,
) -> Result<Tensor> {
    let width = split.internal_width();
    let contributions: Vec<Tensor> = (0..steps)
        .into_par_iter()
        .map(|k| {
            let t = (k as f64 + 0.5) / steps as f64;
            let point = lerp(x_prime, x, t);
            let h = split.front.forward(&point)?;
            let g = split.back.gradient(&h, target)?;
            let jac = split.front.input_jacobian(&point)?;
            let n_in = x.len();
            let mut node = Tensor::zeros(&[width]);
            for j in 0..width {
                let row = &jac.data()[j * n_in..(j + 1) * n_in];
                let jd: f64 = row.iter().zip(d.data()).map(|(a, b)| a * b).sum();
                node.data_mut()[j] = g.data()[j] * jd;
            }
            Ok(node)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum_tensors(&contributions)
        .expect("steps >= 1")
        .scale(1.0 / steps as f64))
}

/// Flow of the attribution of input feature `i` through each internal neuron:
/// `IG_{i,j} = (x_i - x'_i) * mean_k dG/dH_j * dH_j/dx_i` at midpoint nodes.
/// Rows sum over `j` to the plain IG of feature `i` at the same nodes.
pub fn flow_ij(
    split: &SplitNetwork,
    x: &Tensor,
    x_prime: &Tensor,
    target: usize,
    i: usize,
    steps: usize,
) -> Result<NeuronAttribution> {
    check_common(split, x, x_prime, target, steps)?;
    if i >= x.len() {
        return Err(Error::invalid(format!("input index {} out of range", i)));
    }
    let mut d = Tensor::zeros(x.shape());
    d.data_mut()[i] = x.data()[i] - x_prime.data()[i];
    let values = exact_directional(split, x, x_prime, target, &d, steps)?;
    Ok(NeuronAttribution {
        layer_name: split.split_layer_name.clone(),
        values,
        kind: NeuronKind::PerInput(i),
        steps,
        method: NeuronMethod::Exact,
    })
}

/// Conductance `IG_{*,j}`: total gradient flow through neuron `j` along the
/// straight line. The path derivative of `H_j ∘ γ` is realized by forward
/// finite differences of `H` (two forward passes per node, no Jacobian).
pub fn conductance(
    split: &SplitNetwork,
    x: &Tensor,
    x_prime: &Tensor,
    target: usize,
    steps: usize,
) -> Result<NeuronAttribution> {
    check_common(split, x, x_prime, target, steps)?;
    let contributions: Vec<Tensor> = (0..steps)
        .into_par_iter()
        .map(|k| {
            let t0 = k as f64 / steps as f64;
            let t1 = (k + 1) as f64 / steps as f64;
            let h0 = split.front.forward(&lerp(x_prime, x, t0))?;
            let h1 = split.front.forward(&lerp(x_prime, x, t1))?;
            let g = split.back.gradient(&h0, target)?;
            let flat0 = h0.reshaped(vec![split.internal_width()])?;
            let flat1 = h1.reshaped(vec![split.internal_width()])?;
            let dh = flat1.sub(&flat0)?;
            g.reshaped(vec![split.internal_width()])?
                .zip_map(&dh, |gj, dj| gj * dj)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = pairwise_sum_tensors(&contributions).expect("steps >= 1");
    Ok(NeuronAttribution {
        layer_name: split.split_layer_name.clone(),
        values,
        kind: NeuronKind::Conductance,
        steps,
        method: NeuronMethod::Fast,
    })
}

/// Conductance via the exact Jacobian at midpoint nodes. Shares quadrature
/// nodes with [`flow_ij`] and [`patch_attr_exact`], so the sum identities
/// hold to floating-point precision rather than quadrature tolerance.
pub fn conductance_exact(
    split: &SplitNetwork,
    x: &Tensor,
    x_prime: &Tensor,
    target: usize,
    steps: usize,
) -> Result<NeuronAttribution> {
    check_common(split, x, x_prime, target, steps)?;
    let d = x.sub(x_prime)?;
    let values = exact_directional(split, x, x_prime, target, &d, steps)?;
    Ok(NeuronAttribution {
        layer_name: split.split_layer_name.clone(),
        values,
        kind: NeuronKind::Conductance,
        steps,
        method: NeuronMethod::Exact,
    })
}

/// Patch attribution `IG_{S,j}`: gradient flow through neuron `j` restricted
/// to input features in `S`. Reference oracle using full per-node Jacobians
/// of `H`.
pub fn patch_attr_exact(
    split: &SplitNetwork,
    x: &Tensor,
    x_prime: &Tensor,
    target: usize,
    patch: &PatchSpec,
    steps: usize,
) -> Result<NeuronAttribution> {
    check_common(split, x, x_prime, target, steps)?;
    if patch.is_empty() {
        return Err(Error::invalid("patch must be non-empty"));
    }
    let d = patch.displacement(x, x_prime)?;
    let values = exact_directional(split, x, x_prime, target, &d, steps)?;
    Ok(NeuronAttribution {
        layer_name: split.split_layer_name.clone(),
        values,
        kind: NeuronKind::Patch(patch.indices().to_vec()),
        steps,
        method: NeuronMethod::Exact,
    })
}

/// Fast patch attribution: a directional finite difference of `H` replaces
/// the Jacobian-vector product,
/// `||d|| * sum_{k=1..N} dG/dH_j(H(γ(k/N))) * [H_j(γ(k/N) + d̂/N) - H_j(γ(k/N))]`.
/// The finite-difference denominator `1/N` doubles as the Riemann weight.
/// Two forward passes through `H` and one backward pass through `G` per node.
pub fn patch_attr_fast(
    split: &SplitNetwork,
    x: &Tensor,
    x_prime: &Tensor,
    target: usize,
    patch: &PatchSpec,
    steps: usize,
) -> Result<NeuronAttribution> {
    check_common(split, x, x_prime, target, steps)?;
    if patch.is_empty() {
        return Err(Error::invalid("patch must be non-empty"));
    }
    let d = patch.displacement(x, x_prime)?;
    let d_norm = d.norm();
    let width = split.internal_width();
    if d_norm == 0.0 {
        return Ok(NeuronAttribution {
            layer_name: split.split_layer_name.clone(),
            values: Tensor::zeros(&[width]),
            kind: NeuronKind::Patch(patch.indices().to_vec()),
            steps,
            method: NeuronMethod::Fast,
        });
    }
    let n = steps;
    let d_hat_over_n = d.scale(1.0 / (d_norm * n as f64));
    let contributions: Vec<Tensor> = (1..=n)
        .into_par_iter()
        .map(|k| {
            let point = lerp(x_prime, x, k as f64 / n as f64);
            let shifted = point.add(&d_hat_over_n)?;
            let h0 = split.front.forward(&point)?.reshaped(vec![width])?;
            let h1 = split.front.forward(&shifted)?.reshaped(vec![width])?;
            let g = split
                .back
                .gradient(&h0, target)?
                .reshaped(vec![width])?;
            g.zip_map(&h1.sub(&h0)?, |gj, dj| gj * dj)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = pairwise_sum_tensors(&contributions)
        .expect("steps >= 1")
        .scale(d_norm);
    Ok(NeuronAttribution {
        layer_name: split.split_layer_name.clone(),
        values,
        kind: NeuronKind::Patch(patch.indices().to_vec()),
        steps,
        method: NeuronMethod::Fast,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankOrder {
    Descending,
    Ascending,
}

/// Stable rank of neurons by attribution value; ties break toward the lower
/// index.
pub fn rank_neurons(attr: &NeuronAttribution, order: RankOrder) -> Vec<usize> {
    let vals = attr.values.data();
    let mut perm: Vec<usize> = (0..vals.len()).collect();
    perm.sort_by(|&a, &b| {
        let cmp = match order {
            RankOrder::Descending => vals[b].partial_cmp(&vals[a]),
            RankOrder::Ascending => vals[a].partial_cmp(&vals[b]),
        }
        .expect("attribution values are finite");
        cmp.then(a.cmp(&b))
    });
    perm
}
