//! Built-in closed-form networks the axiom suite runs against.

use crate::error::Result;
use crate::nn::{init_dense, DomainBox, Layer, LayerKind, Network};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn monomial(name: &str, exponents: Vec<Vec<u32>>, coeffs: Vec<f64>, dbox: DomainBox) -> Network {
    let dim = exponents[0].len();
    Network::new(
        vec![dim],
        vec![Layer::new(name, LayerKind::Monomial { exponents, coeffs })],
        Some(dbox),
    )
    .expect("monomial nets are shape-consistent")
}

/// Scalar polynomial `sum_k coeffs[k] * prod_i x_i^exponents[k][i]`: one
/// monomial node per term plus a summing layer.
pub fn polynomial(exponents: Vec<Vec<u32>>, coeffs: Vec<f64>) -> Network {
    let dim = exponents[0].len();
    let terms = coeffs.len();
    Network::new(
        vec![dim],
        vec![
            Layer::new("terms", LayerKind::Monomial { exponents, coeffs }),
            Layer::dense(
                "sum",
                Tensor::new(vec![1, terms], vec![1.0; terms]).unwrap(),
                Tensor::zeros(&[1]),
            )
            .unwrap(),
        ],
        Some(DomainBox::unit(&[dim])),
    )
    .expect("polynomial nets are shape-consistent")
}

/// `F(x) = x1 * x2` on the unit square.
pub fn prod2() -> Network {
    monomial("prod", vec![vec![1, 1]], vec![1.0], DomainBox::unit(&[2]))
}

/// `F(x) = x1 * x2^2` on the unit square.
pub fn x1_x2sq() -> Network {
    monomial("m12", vec![vec![1, 2]], vec![1.0], DomainBox::unit(&[2]))
}

/// `F(x) = x1^2 * x2` on the unit square.
pub fn x1sq_x2() -> Network {
    monomial("m21", vec![vec![2, 1]], vec![1.0], DomainBox::unit(&[2]))
}

/// `F(x) = x1`; the second input is disconnected (a dummy feature).
pub fn dummy_x1() -> Network {
    monomial("pick1", vec![vec![1, 0]], vec![1.0], DomainBox::unit(&[2]))
}

/// Constant function of two inputs.
pub fn constant(c: f64) -> Network {
    monomial("const", vec![vec![0, 0]], vec![c], DomainBox::unit(&[2]))
}

/// `F(x) = y . x` on the unit box of dimension `y.len()`.
pub fn linear(weights: &[f64]) -> Result<Network> {
    let n = weights.len();
    Network::new(
        vec![n],
        vec![Layer::dense(
            "lin",
            Tensor::new(vec![1, n], weights.to_vec())?,
            Tensor::zeros(&[1]),
        )?],
        Some(DomainBox::unit(&[n])),
    )
}

/// `F(y) = max(y2 - y1, y1 - y2) = |y2 - y1|` on `[-2, 2]^2`.
pub fn abs_diff() -> Network {
    Network::new(
        vec![2],
        vec![
            Layer::dense(
                "pair",
                Tensor::new(vec![2, 2], vec![-1.0, 1.0, 1.0, -1.0]).unwrap(),
                Tensor::zeros(&[2]),
            )
            .unwrap(),
            Layer::new("max", LayerKind::MaxReduce),
        ],
        Some(DomainBox::symmetric(&[2], 2.0)),
    )
    .unwrap()
}

/// Small smooth net on `[-1, 1]^n_in`.
pub fn tanh_mlp(seed: u64, n_in: usize, hidden: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Network::new(
        vec![n_in],
        vec![
            init_dense("d1", n_in, hidden, &mut rng),
            Layer::new("t1", LayerKind::Tanh),
            init_dense("d2", hidden, 1, &mut rng),
        ],
        Some(DomainBox::symmetric(&[n_in], 1.0)),
    )
    .unwrap()
}

/// Small piecewise-linear net on `[-1, 1]^n_in`.
pub fn relu_mlp(seed: u64, n_in: usize, hidden: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Network::new(
        vec![n_in],
        vec![
            init_dense("d1", n_in, hidden, &mut rng),
            Layer::new("r1", LayerKind::Relu),
            init_dense("d2", hidden, 1, &mut rng),
        ],
        Some(DomainBox::symmetric(&[n_in], 1.0)),
    )
    .unwrap()
}

/// Two structurally different networks computing the same linear map:
/// one dense layer vs. two stacked dense layers whose product equals it.
pub fn stacked_pair() -> (Network, Network) {
    // target map: [3, -2] . x
    let single = linear(&[3.0, -2.0]).unwrap();
    let w1 = Tensor::new(vec![2, 2], vec![1.0, 1.0, 1.0, -1.0]).unwrap();
    // w2 * w1 = [3, -2]  =>  w2 = [0.5, 2.5]
    let w2 = Tensor::new(vec![1, 2], vec![0.5, 2.5]).unwrap();
    let stacked = Network::new(
        vec![2],
        vec![
            Layer::dense("s1", w1, Tensor::zeros(&[2])).unwrap(),
            Layer::dense("s2", w2, Tensor::zeros(&[1])).unwrap(),
        ],
        Some(DomainBox::unit(&[2])),
    )
    .unwrap();
    (single, stacked)
}

/// `F` composed with the inverse of the per-coordinate affine map
/// `T(x)_i = c_i * x_i + d_i`, realized by prepending an explicit dense layer
/// encoding `T^{-1}(z)_i = (z_i - d_i) / c_i`.
pub fn compose_with_affine_inverse(net: &Network, c: &[f64], d: &[f64]) -> Result<Network> {
    let n: usize = net.input_shape().iter().product();
    if c.len() != n || d.len() != n || c.iter().any(|&ci| ci == 0.0) {
        return Err(crate::error::Error::invalid(
            "affine transform needs nonzero scales matching the input size",
        ));
    }
    let mut w = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        w[i * n + i] = 1.0 / c[i];
        b[i] = -d[i] / c[i];
    }
    let mut layers = vec![Layer::dense(
        "t_inv",
        Tensor::new(vec![n, n], w)?,
        Tensor::new(vec![n], b)?,
    )?];
    layers.extend(net.layers().iter().cloned());
    // the transformed function lives on the image box T([a,b])
    let dbox = net.domain_box().map(|db| {
        let map = |t: &Tensor| {
            Tensor::new(
                t.shape().to_vec(),
                t.data()
                    .iter()
                    .zip(c)
                    .zip(d)
                    .map(|((&v, &ci), &di)| ci * v + di)
                    .collect(),
            )
            .expect("affine image of finite box")
        };
        let lo = map(&db.a);
        let hi = map(&db.b);
        let a = lo.zip_map(&hi, f64::min).unwrap();
        let b = lo.zip_map(&hi, f64::max).unwrap();
        DomainBox::new(a, b).unwrap()
    });
    Network::new(net.input_shape().to_vec(), layers, dbox)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_pair_agrees_pointwise() {
        let (a, b) = stacked_pair();
        for x in [[0.0, 0.0], [1.0, 0.5], [0.3, 0.9]] {
            let xa = Tensor::vector(&x);
            let va = a.forward(&xa).unwrap().data()[0];
            let vb = b.forward(&xa).unwrap().data()[0];
            assert!((va - vb).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_inverse_composition() {
        // F = x1 x2, T(x) = (2 x1, x2): (F o T^{-1})(z) = (z1/2) z2
        let f = prod2();
        let g = compose_with_affine_inverse(&f, &[2.0, 1.0], &[0.0, 0.0]).unwrap();
        let z = Tensor::vector(&[1.6, 0.7]);
        assert!((g.forward(&z).unwrap().data()[0] - 0.8 * 0.7).abs() < 1e-12);
        let dbox = g.domain_box().unwrap();
        assert_eq!(dbox.b.data(), &[2.0, 1.0]);
    }
}
