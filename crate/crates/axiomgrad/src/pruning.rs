//! Rank-ordered zero-out pruning experiments: per-neuron metrics over a
//! dataset, accuracy sweeps against a random-ranking arm, and bounding-box
//! attribution-sum tracking under progressive pruning.

use crate::attribution::integrated_gradients;
use crate::error::{Error, Result};
use crate::neuron::{
    conductance, patch_attr_fast, rank_neurons, NeuronAttribution, NeuronKind, NeuronMethod,
    PatchSpec, RankOrder,
};
use crate::nn::{accuracy, LabeledDataset, Network};
use crate::tensor::{pairwise_sum, pairwise_sum_tensors, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

/// Zero-out mask over one internal layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    pub layer_name: String,
    pub zeroed: Vec<bool>,
}

/// Metrics recorded at one pruned fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionMetrics {
    pub fraction: f64,
    pub test_accuracy: Option<f64>,
    pub ig_sum_inside: Option<f64>,
    pub ig_sum_outside: Option<f64>,
    pub ig_sum_all: Option<f64>,
}

/// One pruning sweep under a fixed neuron ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub fractions: Vec<f64>,
    pub metrics: Vec<FractionMetrics>,
    pub ranking_descriptor: String,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,test_accuracy,ig_sum_inside,ig_sum_outside,ig_sum_all\n");
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{}", x));
        for m in &self.metrics {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                m.fraction,
                cell(m.test_accuracy),
                cell(m.ig_sum_inside),
                cell(m.ig_sum_outside),
                cell(m.ig_sum_all),
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "ranking": self.ranking_descriptor,
            "fractions": self.fractions,
            "metrics": self.metrics.iter().map(|m| json!({
                "fraction": m.fraction,
                "test_accuracy": m.test_accuracy,
                "ig_sum_inside": m.ig_sum_inside,
                "ig_sum_outside": m.ig_sum_outside,
                "ig_sum_all": m.ig_sum_all,
            })).collect::<Vec<_>>(),
        })
    }
}

/// The default fraction grid used by the experiments.
pub fn default_fractions() -> Vec<f64> {
    let mut f = vec![0.0, 0.05];
    for k in 1..=10 {
        f.push(k as f64 / 10.0);
    }
    f
}

fn validate_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.is_empty() {
        return Err(Error::invalid("fractions must be non-empty"));
    }
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::invalid("fractions must lie in [0, 1]"));
    }
    if fractions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("fractions must be strictly increasing"));
    }
    Ok(())
}

/// Per-neuron mean conductance over a dataset with the black baseline and the
/// true-label confidence as target.
pub fn average_conductance(
    net: &Network,
    layer_name: &str,
    dataset: &LabeledDataset,
    steps: usize,
) -> Result<NeuronAttribution> {
    if dataset.is_empty() {
        return Err(Error::invalid("average_conductance needs a non-empty dataset"));
    }
    let split = net.split(layer_name)?;
    // Baseline in the dataset's native image shape (IDX images are [rows,
    // cols] even when the model declares a leading channel axis).
    let black = Tensor::zeros(dataset.images[0].shape());
    let per_sample: Vec<Tensor> = dataset
        .images
        .par_iter()
        .zip(&dataset.labels)
        .map(|(img, &label)| {
            conductance(&split, img, &black, label, steps).map(|c| c.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = pairwise_sum_tensors(&per_sample)
        .expect("dataset non-empty")
        .scale(1.0 / dataset.len() as f64);
    Ok(NeuronAttribution {
        layer_name: layer_name.to_string(),
        values,
        kind: NeuronKind::Conductance,
        steps,
        method: NeuronMethod::Fast,
    })
}

/// Returns a copy of the network with the mask applied after its layer.
pub fn apply_mask(net: &Network, mask: &PruneMask) -> Result<Network> {
    net.with_mask(&mask.layer_name, &mask.zeroed)
}

/// Seeded shuffled permutation for the random-ranking arm.
pub fn random_ranking(width: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..width).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// The first `ceil(fraction * width)` entries of the ranking become zeroed.
fn mask_for_fraction(layer_name: &str, ranking: &[usize], fraction: f64) -> PruneMask {
    let width = ranking.len();
    let k = ((fraction * width as f64).ceil() as usize).min(width);
    let mut zeroed = vec![false; width];
    for &j in &ranking[..k] {
        zeroed[j] = true;
    }
    PruneMask {
        layer_name: layer_name.to_string(),
        zeroed,
    }
}

/// Masks progressively larger head segments of `ranking` and records test
/// accuracy at each fraction.
pub fn prune_sweep(
    net: &Network,
    layer_name: &str,
    dataset: &LabeledDataset,
    ranking: &[usize],
    fractions: &[f64],
    ranking_descriptor: &str,
) -> Result<SweepResult> {
    validate_fractions(fractions)?;
    let split = net.split(layer_name)?;
    let width = split.internal_width();
    {
        let mut seen = vec![false; width];
        if ranking.len() != width || ranking.iter().any(|&j| j >= width || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::invalid("ranking is not a permutation of the layer"));
        }
    }
    let metrics: Vec<FractionMetrics> = fractions
        .par_iter()
        .map(|&fraction| {
            let masked = apply_mask(net, &mask_for_fraction(layer_name, ranking, fraction))?;
            Ok(FractionMetrics {
                fraction,
                test_accuracy: Some(accuracy(&masked, dataset)?),
                ig_sum_inside: None,
                ig_sum_outside: None,
                ig_sum_all: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        fractions: fractions.to_vec(),
        metrics,
        ranking_descriptor: ranking_descriptor.to_string(),
    })
}

/// Straight-line IG summed inside the box, outside it, and overall;
/// `all` is `inside + outside` by construction.
pub fn region_ig_sums(
    net: &Network,
    x: &Tensor,
    x_prime: &Tensor,
    target: usize,
    patch: &PatchSpec,
    steps: usize,
) -> Result<(f64, f64, f64)> {
    let ig = integrated_gradients(net, x, x_prime, target, steps)?;
    let vals = ig.values.data();
    if patch.indices().iter().any(|&i| i >= vals.len()) {
        return Err(Error::invalid("patch index out of input range"));
    }
    let inside_vals: Vec<f64> = patch.indices().iter().map(|&i| vals[i]).collect();
    let complement = patch.complement(vals.len())?;
    let outside_vals: Vec<f64> = complement.indices().iter().map(|&i| vals[i]).collect();
    let inside = pairwise_sum(&inside_vals);
    let outside = pairwise_sum(&outside_vals);
    Ok((inside, outside, inside + outside))
}

/// Outcome of the region-tracking experiment: one sweep per ranking arm.
#[derive(Debug, Clone)]
pub struct PatchPruneOutcome {
    pub patch_arm: SweepResult,
    pub conductance_arm: SweepResult,
    pub patch_ranking: Vec<usize>,
    pub conductance_ranking: Vec<usize>,
}

/// Ranks neurons by fast patch attribution over the box, prunes
/// top-ranked-first, and tracks the inside/outside IG sums at each fraction.
/// A conductance-ranked arm runs alongside for comparison.
pub fn patch_rank_prune_experiment(
    net: &Network,
    layer_name: &str,
    image: &Tensor,
    target: usize,
    patch: &PatchSpec,
    fractions: &[f64],
    steps: usize,
    fast_n: usize,
) -> Result<PatchPruneOutcome> {
    validate_fractions(fractions)?;
    let split = net.split(layer_name)?;
    let black = Tensor::zeros(net.input_shape());
    let patch_scores = patch_attr_fast(&split, image, &black, target, patch, fast_n)?;
    let cond_scores = conductance(&split, image, &black, target, steps)?;
    let patch_ranking = rank_neurons(&patch_scores, RankOrder::Descending);
    let conductance_ranking = rank_neurons(&cond_scores, RankOrder::Descending);

    let run_arm = |ranking: &[usize], descriptor: &str| -> Result<SweepResult> {
        let metrics: Vec<FractionMetrics> = fractions
            .par_iter()
            .map(|&fraction| {
                let masked = apply_mask(net, &mask_for_fraction(layer_name, ranking, fraction))?;
                let (inside, outside, all) =
                    region_ig_sums(&masked, image, &black, target, patch, steps)?;
                Ok(FractionMetrics {
                    fraction,
                    test_accuracy: None,
                    ig_sum_inside: Some(inside),
                    ig_sum_outside: Some(outside),
                    ig_sum_all: Some(all),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult {
            fractions: fractions.to_vec(),
            metrics,
            ranking_descriptor: descriptor.to_string(),
        })
    };
    Ok(PatchPruneOutcome {
        patch_arm: run_arm(&patch_ranking, "patch-descending")?,
        conductance_arm: run_arm(&conductance_ranking, "conductance-descending")?,
        patch_ranking,
        conductance_ranking,
    })
}
