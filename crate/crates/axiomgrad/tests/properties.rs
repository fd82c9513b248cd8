//! Randomized invariants over paths and attributions.

use axiomgrad::attribution::integrated_gradients;
use axiomgrad::axioms::corpus;
use axiomgrad::paths::PathSpec;
use axiomgrad::tensor::Tensor;
use proptest::prelude::*;

fn waypoint_strategy(dim: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-2.0f64..2.0, dim),
        2..=n,
    )
    .prop_filter("consecutive waypoints must differ somewhere", |pts| {
        pts.windows(2).any(|w| w[0] != w[1])
    })
}

proptest! {
    /// A piecewise path hits its first and last waypoints exactly at the
    /// parameter endpoints.
    #[test]
    fn path_endpoints_are_exact(pts in waypoint_strategy(3, 6)) {
        let waypoints: Vec<Tensor> = pts.iter().map(|p| Tensor::vector(p)).collect();
        let path = PathSpec::piecewise(waypoints.clone()).unwrap();
        let start = path.eval(0.0).unwrap();
        let end = path.eval(1.0).unwrap();
        prop_assert_eq!(start.data(), waypoints[0].data());
        prop_assert_eq!(end.data(), waypoints.last().unwrap().data());
    }

    /// Every evaluated point of a polyline stays inside the bounding box of
    /// its waypoints.
    #[test]
    fn path_stays_in_waypoint_hull_box(pts in waypoint_strategy(2, 5), t in 0.0f64..=1.0) {
        let waypoints: Vec<Tensor> = pts.iter().map(|p| Tensor::vector(p)).collect();
        let path = PathSpec::piecewise(waypoints).unwrap();
        let p = path.eval(t).unwrap();
        for i in 0..2 {
            let (lo, hi) = pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), w| {
                (lo.min(w[i]), hi.max(w[i]))
            });
            prop_assert!(p.data()[i] >= lo - 1e-12 && p.data()[i] <= hi + 1e-12);
        }
    }

    /// A straight line between its endpoints is monotone per coordinate.
    #[test]
    fn straight_line_is_monotone(
        x in prop::collection::vec(-2.0f64..2.0, 3),
        xp in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let path = PathSpec::straight_line(&Tensor::vector(&x), &Tensor::vector(&xp)).unwrap();
        prop_assert!(path.is_monotone());
    }

    /// On a linear model, IG equals w_i * (x_i - x'_i) exactly at any step
    /// count: the integrand is constant, so quadrature is exact.
    #[test]
    fn linear_model_ig_is_closed_form(
        w in prop::collection::vec(-3.0f64..3.0, 4),
        x in prop::collection::vec(0.0f64..1.0, 4),
        xp in prop::collection::vec(0.0f64..1.0, 4),
        steps in 1usize..50,
    ) {
        let net = corpus::linear(&w).unwrap();
        let ig = integrated_gradients(
            &net,
            &Tensor::vector(&x),
            &Tensor::vector(&xp),
            0,
            steps,
        )
        .unwrap();
        for i in 0..4 {
            let expect = w[i] * (x[i] - xp[i]);
            prop_assert!((ig.values.data()[i] - expect).abs() <= 1e-12);
        }
    }

    /// Coordinates with zero displacement get exactly zero attribution.
    #[test]
    fn unmoved_coordinates_attribute_zero(
        x in prop::collection::vec(-1.0f64..1.0, 4),
        frozen in 0usize..4,
        steps in 1usize..40,
    ) {
        let mut xp: Vec<f64> = x.iter().map(|v| v * 0.5 - 0.1).collect();
        xp[frozen] = x[frozen];
        let net = corpus::tanh_mlp(13, 4, 5);
        let ig = integrated_gradients(
            &net,
            &Tensor::vector(&x),
            &Tensor::vector(&xp),
            0,
            steps,
        )
        .unwrap();
        prop_assert_eq!(ig.values.data()[frozen], 0.0);
    }

    /// Swapping x and x' negates the attribution: the midpoint nodes of the
    /// reversed straight line coincide with the originals, so the two values
    /// agree up to summation-order rounding.
    #[test]
    fn reversing_endpoints_negates_ig(
        x in prop::collection::vec(-1.0f64..1.0, 3),
        xp in prop::collection::vec(-1.0f64..1.0, 3),
        steps in 1usize..40,
    ) {
        let net = corpus::tanh_mlp(29, 3, 6);
        let fwd = integrated_gradients(
            &net,
            &Tensor::vector(&x),
            &Tensor::vector(&xp),
            0,
            steps,
        )
        .unwrap();
        let rev = integrated_gradients(
            &net,
            &Tensor::vector(&xp),
            &Tensor::vector(&x),
            0,
            steps,
        )
        .unwrap();
        for (a, b) in fwd.values.data().iter().zip(rev.values.data()) {
            let scale = a.abs().max(b.abs()).max(1.0);
            prop_assert!((a + b).abs() <= 1e-13 * scale, "a = {}, b = {}", a, b);
        }
    }
}
