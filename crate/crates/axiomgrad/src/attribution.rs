//! Quadrature engine turning a model plus path(s) or baseline distribution
//! into attribution vectors.
//!
//! All integrals use the composite midpoint rule per linear segment, with
//! nodes allocated proportional to segment arc length. Midpoints never land
//! on knots, so velocity discontinuities are never sampled. Per-node
//! contributions are reduced with a fixed pairwise tree sum, so parallel and
//! serial runs produce identical results.

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::paths::{EnsembleSpec, PathSpec};
use crate::tensor::{pairwise_sum, pairwise_sum_tensors, Tensor};
use rayon::prelude::*;

/// Where the attribution is measured from.
#[derive(Debug, Clone)]
pub enum Baseline {
    Point(Tensor),
    Distribution(Vec<Tensor>),
}

/// Per-input-feature attribution vector with provenance metadata.
#[derive(Debug, Clone)]
pub struct AttributionMap {
    pub values: Tensor,
    pub target: usize,
    pub baseline: Baseline,
    pub steps: usize,
    pub method_tag: String,
    pub completeness_gap: f64,
}

/// Uniform empirical distribution over baseline samples.
#[derive(Debug, Clone)]
pub struct BaselineDistribution {
    samples: Vec<Tensor>,
}

impl BaselineDistribution {
    pub fn new(samples: Vec<Tensor>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("baseline distribution needs >= 1 sample"));
        }
        let shape = samples[0].shape().to_vec();
        if samples.iter().any(|s| s.shape() != shape.as_slice()) {
            return Err(Error::shape("BaselineDistribution::new", &shape, &[]));
        }
        Ok(BaselineDistribution { samples })
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }
}

/// One quadrature node: the path parameter and the per-component weight
/// `velocity_i * dt` it carries.
struct Node {
    t: f64,
    coeff: Tensor,
}

/// Midpoint nodes per segment, `steps` total, allocated proportional to
/// segment arc length by largest remainder. Every positive-length segment
/// receives at least one node.
fn quadrature_nodes(path: &PathSpec, steps: usize) -> Vec<Node> {
    let total = path.total_length();
    if total == 0.0 {
        return Vec::new();
    }
    let spans: Vec<(usize, f64, f64)> = path.segment_spans().collect();
    let lengths: Vec<f64> = spans.iter().map(|&(_, t0, t1)| (t1 - t0) * total).collect();

    let ideal: Vec<f64> = lengths.iter().map(|l| steps as f64 * l / total).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|&v| v.floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    // largest remainder, ties to the lower index
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &s in &order {
        if assigned >= steps {
            break;
        }
        if lengths[s] > 0.0 {
            counts[s] += 1;
            assigned += 1;
        }
    }
    for (s, c) in counts.iter_mut().enumerate() {
        if lengths[s] > 0.0 && *c == 0 {
            *c = 1;
        }
        if lengths[s] == 0.0 {
            *c = 0;
        }
    }

    let waypoints = path.waypoints();
    let mut nodes = Vec::new();
    for &(s, t0, t1) in &spans {
        let n = counts[s];
        if n == 0 || t1 <= t0 {
            continue;
        }
        let dt = (t1 - t0) / n as f64;
        let velocity = waypoints[s + 1]
            .sub(&waypoints[s])
            .expect("waypoints share shape")
            .scale(1.0 / (t1 - t0));
        let coeff = velocity.scale(dt);
        for k in 0..n {
            nodes.push(Node {
                t: t0 + (k as f64 + 0.5) * dt,
                coeff: coeff.clone(),
            });
        }
    }
    nodes
}

fn check_target(model: &dyn Model, target: usize) -> Result<()> {
    if target >= model.output_len() {
        return Err(Error::invalid(format!(
            "target {} out of range ({} outputs)",
            target,
            model.output_len()
        )));
    }
    Ok(())
}

fn scalar_output(model: &dyn Model, x: &Tensor, target: usize) -> Result<f64> {
    Ok(model.value(x)?.data()[target])
}

/// General path method: integrates `dF/dx_i(gamma(t)) * dgamma_i/dt` over the
/// path.
pub fn path_attribute(
    model: &dyn Model,
    path: &PathSpec,
    target: usize,
    steps: usize,
) -> Result<AttributionMap> {
    check_target(model, target)?;
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    if path.dim() != model.input_shape().iter().product::<usize>() {
        return Err(Error::shape(
            "path_attribute",
            model.input_shape(),
            path.shape(),
        ));
    }

    let nodes = quadrature_nodes(path, steps);
    let contributions: Vec<Tensor> = nodes
        .par_iter()
        .map(|node| {
            let point = path.eval(node.t)?;
            let g = model.grad(&point, target)?;
            g.zip_map(&node.coeff, |gi, ci| gi * ci)
        })
        .collect::<Result<Vec<_>>>()?;

    let values = match pairwise_sum_tensors(&contributions) {
        Some(v) => v,
        None => Tensor::zeros(path.shape()),
    };

    let fx = scalar_output(model, path.input(), target)?;
    let fxp = scalar_output(model, path.baseline(), target)?;
    let gap = (values.sum() - (fx - fxp)).abs();

    Ok(AttributionMap {
        values,
        target,
        baseline: Baseline::Point(path.baseline().clone()),
        steps,
        method_tag: "path".to_string(),
        completeness_gap: gap,
    })
}

/// Straight-line integrated gradients. Components with `x_i == x'_i` receive
/// exactly zero via the displacement factor.
pub fn integrated_gradients(
    model: &dyn Model,
    x: &Tensor,
    x_prime: &Tensor,
    target: usize,
    steps: usize,
) -> Result<AttributionMap> {
    check_target(model, target)?;
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    if !x.same_shape(x_prime) {
        return Err(Error::shape("integrated_gradients", x.shape(), x_prime.shape()));
    }

    let grads: Vec<Tensor> = (0..steps)
        .into_par_iter()
        .map(|k| {
            let t = (k as f64 + 0.5) / steps as f64;
            let point = x_prime.zip_map(x, |xp, xi| xp + t * (xi - xp))?;
            model.grad(&point, target)
        })
        .collect::<Result<Vec<_>>>()?;

    let mean = pairwise_sum_tensors(&grads)
        .expect("steps >= 1")
        .scale(1.0 / steps as f64);
    let values = x.zip_map(x_prime, |xi, xp| xi - xp)?.zip_map(&mean, |d, m| d * m)?;

    let fx = scalar_output(model, x, target)?;
    let fxp = scalar_output(model, x_prime, target)?;
    let gap = (values.sum() - (fx - fxp)).abs();

    Ok(AttributionMap {
        values,
        target,
        baseline: Baseline::Point(x_prime.clone()),
        steps,
        method_tag: "ig".to_string(),
        completeness_gap: gap,
    })
}

/// Weighted average of path methods over a finite ensemble. All members must
/// share the same baseline and input.
pub fn ensemble_attribute(
    model: &dyn Model,
    ensemble: &EnsembleSpec,
    target: usize,
    steps: usize,
) -> Result<AttributionMap> {
    let members = ensemble.members();
    let (first, _) = &members[0];
    for (p, _) in members {
        if p.baseline() != first.baseline() || p.input() != first.input() {
            return Err(Error::invalid(
                "ensemble members must share baseline and input",
            ));
        }
    }
    let mut values = Tensor::zeros(first.shape());
    for (path, weight) in members {
        let m = path_attribute(model, path, target, steps)?;
        values = values.add(&m.values.scale(*weight))?;
    }
    let fx = scalar_output(model, first.input(), target)?;
    let fxp = scalar_output(model, first.baseline(), target)?;
    let gap = (values.sum() - (fx - fxp)).abs();
    Ok(AttributionMap {
        values,
        target,
        baseline: Baseline::Point(first.baseline().clone()),
        steps,
        method_tag: "ensemble".to_string(),
        completeness_gap: gap,
    })
}

/// Distributional IG: exact uniform average of IG over the provided baseline
/// samples.
pub fn distributional_ig(
    model: &dyn Model,
    x: &Tensor,
    dist: &BaselineDistribution,
    target: usize,
    steps: usize,
) -> Result<AttributionMap> {
    let maps: Vec<Tensor> = dist
        .samples()
        .par_iter()
        .map(|xp| integrated_gradients(model, x, xp, target, steps).map(|m| m.values))
        .collect::<Result<Vec<_>>>()?;
    let n = dist.samples().len();
    let values = pairwise_sum_tensors(&maps)
        .expect("distribution non-empty")
        .scale(1.0 / n as f64);

    let fx = scalar_output(model, x, target)?;
    let base_vals: Vec<f64> = dist
        .samples()
        .iter()
        .map(|xp| scalar_output(model, xp, target))
        .collect::<Result<Vec<_>>>()?;
    let mean_base = pairwise_sum(&base_vals) / n as f64;
    let gap = (values.sum() - (fx - mean_base)).abs();

    Ok(AttributionMap {
        values,
        target,
        baseline: Baseline::Distribution(dist.samples().to_vec()),
        steps,
        method_tag: "distributional-ig".to_string(),
        completeness_gap: gap,
    })
}

/// Recomputes `|sum_i A_i - (F(x) - F(x'))|`; for distribution baselines the
/// mean baseline value is used.
pub fn completeness_gap(map: &AttributionMap, model: &dyn Model, x: &Tensor) -> Result<f64> {
    check_target(model, map.target)?;
    if map.values.len() != model.input_shape().iter().product::<usize>() {
        return Err(Error::invalid(
            "attribution map does not match model input size",
        ));
    }
    let fx = scalar_output(model, x, map.target)?;
    let base = match &map.baseline {
        Baseline::Point(xp) => scalar_output(model, xp, map.target)?,
        Baseline::Distribution(samples) => {
            let vals: Vec<f64> = samples
                .iter()
                .map(|xp| scalar_output(model, xp, map.target))
                .collect::<Result<Vec<_>>>()?;
            pairwise_sum(&vals) / samples.len() as f64
        }
    };
    Ok((map.values.sum() - (fx - base)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DomainBox, Layer, LayerKind, Network};

    pub(crate) fn monomial_net(exponents: Vec<u32>) -> Network {
        let dim = exponents.len();
        Network::new(
            vec![dim],
            vec![Layer::new(
                "mono",
                LayerKind::Monomial {
                    exponents: vec![exponents],
                    coeffs: vec![1.0],
                },
            )],
            Some(DomainBox::unit(&[dim])),
        )
        .unwrap()
    }

    #[test]
    fn ig_product_closed_form() {
        let net = monomial_net(vec![1, 1]);
        let m = integrated_gradients(
            &net,
            &Tensor::vector(&[1.0, 1.0]),
            &Tensor::vector(&[0.0, 0.0]),
            0,
            1000,
        )
        .unwrap();
        assert!((m.values.data()[0] - 0.5).abs() < 1e-6);
        assert!((m.values.data()[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn ig_zero_displacement_is_exact_zero() {
        let net = monomial_net(vec![1, 1]);
        let x = Tensor::vector(&[0.7, 0.3]);
        let m = integrated_gradients(&net, &x, &x, 0, 50).unwrap();
        assert_eq!(m.values.data(), &[0.0, 0.0]);
        let xp = Tensor::vector(&[0.2, 0.3]);
        let m = integrated_gradients(&net, &x, &xp, 0, 50).unwrap();
        assert_eq!(m.values.data()[1], 0.0);
    }

    #[test]
    fn ig_x1sq_x2_symbolic() {
        // F = x1^2 x2 from 0 to (1,1): (2/3, 1/3)
        let net = monomial_net(vec![2, 1]);
        let m = integrated_gradients(
            &net,
            &Tensor::vector(&[1.0, 1.0]),
            &Tensor::vector(&[0.0, 0.0]),
            0,
            1000,
        )
        .unwrap();
        assert!((m.values.data()[0] - 2.0 / 3.0).abs() < 1e-3);
        assert!((m.values.data()[1] - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn loop_path_gives_negative_component() {
        let net = monomial_net(vec![1, 1]);
        let path = crate::paths::counterexample_loop_c1();
        let m = path_attribute(&net, &path, 0, 600).unwrap();
        assert!((m.values.data()[0] - 1.0).abs() < 1e-3);
        assert!((m.values.data()[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn five_segment_loop_x1_x2sq() {
        let net = monomial_net(vec![1, 2]);
        let path = crate::paths::reference_loop_five_segment();
        let m = path_attribute(&net, &path, 0, 1200).unwrap();
        assert!((m.values.data()[0] + 2.0 / 3.0).abs() < 1e-3);
        assert!((m.values.data()[1] - 5.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn ensemble_of_corner_paths() {
        let net = monomial_net(vec![1, 1]);
        let lower = PathSpec::piecewise(vec![
            Tensor::vector(&[0.0, 0.0]),
            Tensor::vector(&[1.0, 0.0]),
            Tensor::vector(&[1.0, 1.0]),
        ])
        .unwrap();
        let upper = PathSpec::piecewise(vec![
            Tensor::vector(&[0.0, 0.0]),
            Tensor::vector(&[0.0, 1.0]),
            Tensor::vector(&[1.0, 1.0]),
        ])
        .unwrap();
        let single = EnsembleSpec::new(vec![(lower.clone(), 1.0)]).unwrap();
        let em = ensemble_attribute(&net, &single, 0, 400).unwrap();
        let pm = path_attribute(&net, &lower, 0, 400).unwrap();
        assert_eq!(em.values.data(), pm.values.data());

        let mix = EnsembleSpec::new(vec![(lower, 0.5), (upper, 0.5)]).unwrap();
        let m = ensemble_attribute(&net, &mix, 0, 400).unwrap();
        assert!((m.values.data()[0] - 0.5).abs() < 1e-9);
        assert!((m.values.data()[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn distributional_ig_two_samples() {
        let net = monomial_net(vec![1, 1]);
        let dist = BaselineDistribution::new(vec![
            Tensor::vector(&[0.0, 0.0]),
            Tensor::vector(&[1.0, 1.0]),
        ])
        .unwrap();
        let x = Tensor::vector(&[1.0, 1.0]);
        let m = distributional_ig(&net, &x, &dist, 0, 1000).unwrap();
        assert!((m.values.data()[0] - 0.25).abs() < 1e-6);
        assert!((m.values.data()[1] - 0.25).abs() < 1e-6);
        // completeness against the mean baseline value
        assert!(m.completeness_gap < 1e-3);
        // single sample reduces to plain IG
        let one = BaselineDistribution::new(vec![Tensor::vector(&[0.0, 0.0])]).unwrap();
        let d = distributional_ig(&net, &x, &one, 0, 500).unwrap();
        let ig = integrated_gradients(&net, &x, &Tensor::vector(&[0.0, 0.0]), 0, 500).unwrap();
        assert_eq!(d.values.data(), ig.values.data());
    }

    #[test]
    fn completeness_gap_shrinks_and_constant_f_is_zero() {
        let net = monomial_net(vec![1, 1]);
        let x = Tensor::vector(&[1.0, 1.0]);
        let xp = Tensor::vector(&[0.0, 0.0]);
        let m = integrated_gradients(&net, &x, &xp, 0, 1000).unwrap();
        assert!(m.completeness_gap <= 1e-6);
        assert!((completeness_gap(&m, &net, &x).unwrap() - m.completeness_gap).abs() < 1e-15);

        // constant F: monomial with all-zero exponents
        let cnet = Network::new(
            vec![2],
            vec![Layer::new(
                "const",
                LayerKind::Monomial {
                    exponents: vec![vec![0, 0]],
                    coeffs: vec![3.5],
                },
            )],
            Some(DomainBox::unit(&[2])),
        )
        .unwrap();
        let m = integrated_gradients(&cnet, &x, &xp, 0, 100).unwrap();
        assert_eq!(m.completeness_gap, 0.0);
    }
}
