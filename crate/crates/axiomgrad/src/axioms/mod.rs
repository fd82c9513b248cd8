//! Executable verdicts for the attribution axioms, the counterexamples that
//! motivate them, partial-dependence checks, and the Lipschitz probe.
//!
//! Equality axioms use tolerance 1e-9 when the identity is quadrature-free
//! and 1e-3 when it depends on quadrature at 1000 steps; sign conditions use
//! an explicit margin.

pub mod corpus;

use crate::attribution::{distributional_ig, integrated_gradients, path_attribute, BaselineDistribution};
use crate::error::{Error, Result};
use crate::nn::{Network, WeightedSum};
use crate::paths::{counterexample_loop_c1, reference_loop_five_segment, PathSpec};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
}

/// Outcome of one axiom case. `expect_violation` marks counterexample cases,
/// whose whole point is that the tested method breaks the property.
#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub case_id: String,
    pub verdict: Verdict,
    pub expect_violation: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub witness: Option<String>,
}

impl AxiomReport {
    fn holds(case_id: &str, residual: f64, tolerance: f64) -> Self {
        AxiomReport {
            case_id: case_id.to_string(),
            verdict: Verdict::Holds,
            expect_violation: false,
            residual,
            tolerance,
            witness: None,
        }
    }

    fn violated(case_id: &str, residual: f64, tolerance: f64, witness: String) -> Self {
        AxiomReport {
            case_id: case_id.to_string(),
            verdict: Verdict::Violated,
            expect_violation: false,
            residual,
            tolerance,
            witness: Some(witness),
        }
    }

    fn expecting_violation(mut self) -> Self {
        self.expect_violation = true;
        self
    }

    /// True when the verdict matches what the case is supposed to show.
    pub fn as_expected(&self) -> bool {
        (self.verdict == Verdict::Violated) == self.expect_violation
    }
}

fn equality_report(case_id: &str, residual: f64, tolerance: f64, witness: String) -> AxiomReport {
    if residual <= tolerance {
        AxiomReport::holds(case_id, residual, tolerance)
    } else {
        AxiomReport::violated(case_id, residual, tolerance, witness)
    }
}

const QUAD_TOL: f64 = 1e-3;
const EXACT_TOL: f64 = 1e-9;
const STEPS: usize = 1000;

/// Sensitivity(a), restated testably: when x and x' differ in exactly one
/// coordinate and F(x) != F(x'), that coordinate's IG equals F(x) - F(x')
/// (by completeness + dummy) and is therefore nonzero with margin.
pub fn check_sensitivity_a() -> Result<AxiomReport> {
    let net = corpus::prod2();
    let x = Tensor::vector(&[1.0, 1.0]);
    let xp = Tensor::vector(&[1.0, 0.0]);
    let ig = integrated_gradients(&net, &x, &xp, 0, STEPS)?;
    let diff = net.forward(&x)?.data()[0] - net.forward(&xp)?.data()[0];
    let a2 = ig.values.data()[1];
    let residual = (a2 - diff).abs();
    if residual <= QUAD_TOL && a2.abs() > 10.0 * QUAD_TOL {
        Ok(AxiomReport::holds("sensitivity-a", residual, QUAD_TOL))
    } else {
        Ok(AxiomReport::violated(
            "sensitivity-a",
            residual,
            QUAD_TOL,
            format!("attribution {} for F-difference {}", a2, diff),
        ))
    }
}

/// Implementation invariance, restated testably: structurally different
/// networks computing the same mathematical function get identical
/// attributions.
pub fn check_implementation_invariance() -> Result<AxiomReport> {
    let (single, stacked) = corpus::stacked_pair();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    let mut witness = String::new();
    for _ in 0..10 {
        let x = Tensor::vector(&[rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
        let xp = Tensor::vector(&[rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
        let a = integrated_gradients(&single, &x, &xp, 0, 200)?;
        let b = integrated_gradients(&stacked, &x, &xp, 0, 200)?;
        let d = a
            .values
            .sub(&b.values)?
            .max_abs();
        if d > worst {
            worst = d;
            witness = format!("x {:?}, x' {:?}", x.data(), xp.data());
        }
    }
    Ok(equality_report("implementation-invariance", worst, EXACT_TOL, witness))
}

/// Completeness: attributions sum to F(x) - F(x').
pub fn check_completeness() -> Result<AxiomReport> {
    let net = corpus::x1_x2sq();
    let ig = integrated_gradients(
        &net,
        &Tensor::vector(&[1.0, 1.0]),
        &Tensor::vector(&[0.0, 0.0]),
        0,
        STEPS,
    )?;
    Ok(equality_report(
        "completeness",
        ig.completeness_gap,
        QUAD_TOL,
        format!("gap {}", ig.completeness_gap),
    ))
}

/// Linearity: A(aF + bG) == a A(F) + b A(G).
pub fn check_linearity() -> Result<AxiomReport> {
    let f = corpus::prod2();
    let g = corpus::x1_x2sq();
    let (alpha, beta) = (2.0, -3.0);
    let combo = WeightedSum::new(vec![(alpha, f.clone()), (beta, g.clone())])?;
    let x = Tensor::vector(&[0.9, 0.7]);
    let xp = Tensor::vector(&[0.1, 0.2]);
    let lhs = integrated_gradients(&combo, &x, &xp, 0, 500)?;
    let af = integrated_gradients(&f, &x, &xp, 0, 500)?;
    let bg = integrated_gradients(&g, &x, &xp, 0, 500)?;
    let rhs = af.values.scale(alpha).add(&bg.values.scale(beta))?;
    let residual = lhs.values.sub(&rhs)?.max_abs();
    Ok(equality_report(
        "linearity",
        residual,
        EXACT_TOL,
        format!("lhs {:?} rhs {:?}", lhs.values.data(), rhs.data()),
    ))
}

/// Dummy / sensitivity(b): a disconnected feature gets exactly zero.
pub fn check_dummy() -> Result<AxiomReport> {
    let net = corpus::dummy_x1();
    let ig = integrated_gradients(
        &net,
        &Tensor::vector(&[0.8, 0.9]),
        &Tensor::vector(&[0.1, 0.3]),
        0,
        200,
    )?;
    let residual = ig.values.data()[1].abs();
    Ok(equality_report(
        "dummy",
        residual,
        0.0,
        format!("dummy attribution {}", residual),
    ))
}

/// Symmetry: symmetric variables with equal values at x and x' get equal
/// attributions.
pub fn check_symmetry() -> Result<AxiomReport> {
    let net = corpus::prod2();
    let ig = integrated_gradients(
        &net,
        &Tensor::vector(&[1.0, 1.0]),
        &Tensor::vector(&[0.0, 0.0]),
        0,
        STEPS,
    )?;
    let residual = (ig.values.data()[0] - ig.values.data()[1]).abs();
    Ok(equality_report(
        "symmetry",
        residual,
        1e-12,
        format!("values {:?}", ig.values.data()),
    ))
}

/// Affine scale invariance in the corrected form
/// `A(x, x', F) == A(T(x), T(x'), F o T^{-1})` for per-coordinate
/// `T(x)_i = c_i x_i + d_i`. `attribute` supplies the method under test.
pub fn check_asi(
    case_id: &str,
    net: &Network,
    c: &[f64],
    d: &[f64],
    x: &Tensor,
    x_prime: &Tensor,
    attribute: &dyn Fn(&Network, &Tensor, &Tensor) -> Result<Tensor>,
    tolerance: f64,
) -> Result<AxiomReport> {
    let transformed = corpus::compose_with_affine_inverse(net, c, d)?;
    let apply = |p: &Tensor| {
        Tensor::new(
            p.shape().to_vec(),
            p.data()
                .iter()
                .zip(c)
                .zip(d)
                .map(|((&v, &ci), &di)| ci * v + di)
                .collect(),
        )
        .expect("affine image is finite")
    };
    let tx = apply(x);
    let txp = apply(x_prime);
    if let Some(db) = transformed.domain_box() {
        if !db.contains(&tx) || !db.contains(&txp) {
            return Err(Error::OutOfDomain(format!(
                "transformed endpoints leave the box in case {}",
                case_id
            )));
        }
    }
    let lhs = attribute(net, x, x_prime)?;
    let rhs = attribute(&transformed, &tx, &txp)?;
    let residual = lhs.sub(&rhs)?.max_abs();
    Ok(equality_report(
        case_id,
        residual,
        tolerance,
        format!("lhs {:?} rhs {:?}", lhs.data(), rhs.data()),
    ))
}

fn ig_method(steps: usize) -> impl Fn(&Network, &Tensor, &Tensor) -> Result<Tensor> {
    move |net, x, xp| Ok(integrated_gradients(net, x, xp, 0, steps)?.values)
}

/// The three ASI fixtures: identity transform, a pure scale on straight-line
/// IG, and the affine-transported loop method.
pub fn check_asi_cases() -> Result<Vec<AxiomReport>> {
    let prod = corpus::prod2();
    let x = Tensor::vector(&[0.9, 0.8]);
    let xp = Tensor::vector(&[0.1, 0.2]);
    let mut out = Vec::new();
    out.push(check_asi(
        "asi-identity",
        &prod,
        &[1.0, 1.0],
        &[0.0, 0.0],
        &x,
        &xp,
        &ig_method(STEPS),
        1e-12,
    )?);
    out.push(check_asi(
        "asi-scale",
        &prod,
        &[2.0, 1.0],
        &[0.0, 0.0],
        &x,
        &xp,
        &ig_method(STEPS),
        1e-6,
    )?);
    // general path method: the five-segment loop transported onto (x, x')
    let reference = reference_loop_five_segment();
    let loop_method = move |net: &Network, x: &Tensor, xp: &Tensor| -> Result<Tensor> {
        let path = PathSpec::affine_transport(&reference, x, xp)?;
        Ok(path_attribute(net, &path, 0, 2000)?.values)
    };
    out.push(check_asi(
        "asi-loop-method",
        &corpus::x1_x2sq(),
        &[2.0, 1.0],
        &[0.0, 0.0],
        &Tensor::vector(&[1.0, 1.0]),
        &Tensor::vector(&[0.0, 0.0]),
        &loop_method,
        1e-6,
    )?);
    // the difference method F(x') - F(x) satisfies ASI exactly
    let diff_method = |net: &Network, x: &Tensor, xp: &Tensor| -> Result<Tensor> {
        let fx = net.forward(x)?.data()[0];
        let fxp = net.forward(xp)?.data()[0];
        Ok(Tensor::vector(&[fxp - fx]))
    };
    let id1 = corpus::linear(&[1.0])?;
    out.push(check_asi(
        "asi-difference-method",
        &id1,
        &[2.0],
        &[-0.5],
        &Tensor::vector(&[1.0]),
        &Tensor::vector(&[0.0]),
        &diff_method,
        1e-12,
    )?);
    Ok(out)
}

/// A random monotone staircase from `x_prime` to `x` (componentwise
/// non-decreasing by construction when `x >= x_prime`).
pub fn monotone_staircase(x: &Tensor, x_prime: &Tensor, seed: u64) -> Result<PathSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = x_prime.clone();
    let mut waypoints = vec![cur.clone()];
    for _ in 0..12 {
        let i = rng.gen_range(0..x.len());
        let remaining = x.data()[i] - cur.data()[i];
        if remaining.abs() > 0.0 {
            let frac = rng.gen_range(0.3..1.0);
            cur.data_mut()[i] += frac * remaining;
            waypoints.push(cur.clone());
        }
    }
    waypoints.push(x.clone());
    PathSpec::piecewise(waypoints)
}

/// NDP over the fixed monotone-path battery on a function that is
/// non-decreasing over the relevant box: every attribution component must be
/// nonnegative.
pub fn check_ndp() -> Result<AxiomReport> {
    let net = corpus::prod2();
    let x = Tensor::vector(&[0.9, 0.8]);
    let xp = Tensor::vector(&[0.1, 0.2]);
    let corner_lower = PathSpec::piecewise(vec![
        xp.clone(),
        Tensor::vector(&[x.data()[0], xp.data()[1]]),
        x.clone(),
    ])?;
    let corner_upper = PathSpec::piecewise(vec![
        xp.clone(),
        Tensor::vector(&[xp.data()[0], x.data()[1]]),
        x.clone(),
    ])?;
    let battery = vec![
        PathSpec::straight_line(&x, &xp)?,
        corner_lower,
        corner_upper,
        monotone_staircase(&x, &xp, 123)?,
    ];
    let mut min_component = f64::INFINITY;
    let mut witness = String::new();
    for (idx, path) in battery.iter().enumerate() {
        if !path.is_monotone() {
            return Err(Error::invalid("NDP battery produced a non-monotone path"));
        }
        let attr = path_attribute(&net, path, 0, STEPS)?;
        let m = attr.values.data().iter().cloned().fold(f64::INFINITY, f64::min);
        if m < min_component {
            min_component = m;
            witness = format!("path {} values {:?}", idx, attr.values.data());
        }
    }
    if min_component >= -1e-12 {
        Ok(AxiomReport::holds("ndp", (-min_component).max(0.0), 1e-12))
    } else {
        Ok(AxiomReport::violated("ndp", -min_component, 1e-12, witness))
    }
}

/// The four distributional axioms plus the single-point degeneracy check.
pub fn check_distributional() -> Result<Vec<AxiomReport>> {
    let net = corpus::prod2();
    let x = Tensor::vector(&[1.0, 1.0]);
    let mut out = Vec::new();

    // completeness: sum EG == F(x) - mean F(X')
    let dist = BaselineDistribution::new(vec![
        Tensor::vector(&[0.0, 0.0]),
        Tensor::vector(&[1.0, 1.0]),
    ])?;
    let eg = distributional_ig(&net, &x, &dist, 0, STEPS)?;
    out.push(equality_report(
        "dist-completeness",
        eg.completeness_gap,
        QUAD_TOL,
        format!("gap {}", eg.completeness_gap),
    ));

    // symmetry: swap-closed (exchangeable) baseline samples, symmetric F,
    // x_i == x_j
    let swap_closed = BaselineDistribution::new(vec![
        Tensor::vector(&[0.0, 1.0]),
        Tensor::vector(&[1.0, 0.0]),
    ])?;
    let eg = distributional_ig(&net, &x, &swap_closed, 0, STEPS)?;
    let residual = (eg.values.data()[0] - eg.values.data()[1]).abs();
    out.push(equality_report(
        "dist-symmetry",
        residual,
        EXACT_TOL,
        format!("values {:?}", eg.values.data()),
    ));

    // NDP: every baseline sample below x componentwise, F non-decreasing
    let below = BaselineDistribution::new(vec![
        Tensor::vector(&[0.0, 0.0]),
        Tensor::vector(&[0.5, 0.1]),
        Tensor::vector(&[0.2, 0.7]),
    ])?;
    let eg = distributional_ig(&net, &x, &below, 0, STEPS)?;
    let min_c = eg.values.data().iter().cloned().fold(f64::INFINITY, f64::min);
    out.push(if min_c >= -1e-12 {
        AxiomReport::holds("dist-ndp", (-min_c).max(0.0), 1e-12)
    } else {
        AxiomReport::violated("dist-ndp", -min_c, 1e-12, format!("values {:?}", eg.values.data()))
    });

    // sensitivity(a): x differs from every sample only in coordinate 2 and
    // the function values differ => EG_2 nonzero
    let coord2 = BaselineDistribution::new(vec![
        Tensor::vector(&[1.0, 0.0]),
        Tensor::vector(&[1.0, 0.5]),
    ])?;
    let eg = distributional_ig(&net, &x, &coord2, 0, STEPS)?;
    let a2 = eg.values.data()[1];
    out.push(if a2.abs() > 10.0 * QUAD_TOL {
        AxiomReport::holds("dist-sensitivity-a", 0.0, QUAD_TOL)
    } else {
        AxiomReport::violated(
            "dist-sensitivity-a",
            a2.abs(),
            QUAD_TOL,
            format!("EG_2 {}", a2),
        )
    });

    // degenerate single-point distribution reduces to single-baseline IG
    let single = BaselineDistribution::new(vec![Tensor::vector(&[0.0, 0.0])])?;
    let eg = distributional_ig(&net, &x, &single, 0, 500)?;
    let ig = integrated_gradients(&net, &x, &Tensor::vector(&[0.0, 0.0]), 0, 500)?;
    let residual = eg.values.sub(&ig.values)?.max_abs();
    out.push(equality_report(
        "dist-single-point",
        residual,
        0.0,
        format!("EG {:?} IG {:?}", eg.values.data(), ig.values.data()),
    ));
    Ok(out)
}

/// Partial-dependence check: a path attribution of feature `i` is a function
/// of x, x' and dF/dx_i alone, so two nets with identical i-th partials get
/// identical i-th attributions on every path.
pub fn check_partial_dependence() -> Result<Vec<AxiomReport>> {
    let a = corpus::prod2();
    // B = x1 x2 + x2^2: same partial w.r.t. x1
    let b_shift = corpus::polynomial(vec![vec![1, 1], vec![0, 2]], vec![1.0, 1.0]);
    // B = x1 x2 + 4
    let b_const = corpus::polynomial(vec![vec![1, 1], vec![0, 0]], vec![1.0, 4.0]);
    // B = x1 x2 + x1: i-th partials differ by 1 -> must be caught
    let b_bad = corpus::polynomial(vec![vec![1, 1], vec![1, 0]], vec![1.0, 1.0]);
    let x = Tensor::vector(&[1.0, 1.0]);
    let xp = Tensor::vector(&[0.0, 0.0]);
    let paths = vec![
        PathSpec::straight_line(&x, &xp)?,
        counterexample_loop_c1(),
        monotone_staircase(&x, &xp, 77)?,
    ];
    let attr_i = |net: &Network, path: &PathSpec| -> Result<f64> {
        Ok(path_attribute(net, path, 0, STEPS)?.values.data()[0])
    };
    let max_gap = |other: &Network| -> Result<(f64, String)> {
        let mut worst = 0.0f64;
        let mut w = String::new();
        for (k, p) in paths.iter().enumerate() {
            let va = attr_i(&a, p)?;
            let vb = attr_i(other, p)?;
            if (va - vb).abs() > worst {
                worst = (va - vb).abs();
                w = format!("path {}: {} vs {}", k, va, vb);
            }
        }
        Ok((worst, w))
    };
    let mut out = Vec::new();
    let (r, w) = max_gap(&b_shift)?;
    out.push(equality_report("dependence-shift", r, EXACT_TOL, w));
    let (r, w) = max_gap(&b_const)?;
    out.push(equality_report("dependence-constant", r, EXACT_TOL, w));
    let (r, w) = max_gap(&b_bad)?;
    out.push(equality_report("dependence-inversion", r, EXACT_TOL, w).expecting_violation());
    Ok(out)
}

/// The three concrete refutations. Each case expects `Violated`: the method
/// under test reproduces the pinned values and thereby breaks the property
/// the counterexample targets.
pub fn run_counterexamples() -> Result<Vec<AxiomReport>> {
    let mut out = Vec::new();

    // C1: non-monotone loop on F = x1 x2 gives (1, -1); a negative component
    // is impossible for any ensemble of monotone path methods here.
    let prod = corpus::prod2();
    let c1 = path_attribute(&prod, &counterexample_loop_c1(), 0, 600)?;
    let v = c1.values.data();
    let residual = (v[0] - 1.0).abs().max((v[1] + 1.0).abs());
    out.push(
        if residual <= QUAD_TOL && v[1] < 0.0 {
            AxiomReport::violated(
                "counterexample-c1",
                residual,
                QUAD_TOL,
                format!("A = ({:.6}, {:.6}), negative component", v[0], v[1]),
            )
        } else {
            AxiomReport::holds("counterexample-c1", residual, QUAD_TOL)
        }
        .expecting_violation(),
    );

    // C2: five-segment loop on F = x1 x2^2 gives (-2/3, 5/3); its final
    // diagonal segment alone gives (1/3, 2/3).
    let m12 = corpus::x1_x2sq();
    let c2 = path_attribute(&m12, &reference_loop_five_segment(), 0, 1200)?;
    let v = c2.values.data();
    let diag = integrated_gradients(
        &m12,
        &Tensor::vector(&[1.0, 1.0]),
        &Tensor::vector(&[0.0, 0.0]),
        0,
        1200,
    )?;
    let dv = diag.values.data();
    let residual = (v[0] + 2.0 / 3.0)
        .abs()
        .max((v[1] - 5.0 / 3.0).abs())
        .max((dv[0] - 1.0 / 3.0).abs())
        .max((dv[1] - 2.0 / 3.0).abs());
    out.push(
        if residual <= QUAD_TOL && v[0] < 0.0 {
            AxiomReport::violated(
                "counterexample-c2",
                residual,
                QUAD_TOL,
                format!(
                    "loop ({:.6}, {:.6}); diagonal alone ({:.6}, {:.6})",
                    v[0], v[1], dv[0], dv[1]
                ),
            )
        } else {
            AxiomReport::holds("counterexample-c2", residual, QUAD_TOL)
        }
        .expecting_violation(),
    );

    // C3: the difference method A := F(x') - F(x) passes linearity and ASI
    // yet assigns A(1, 0, y |-> y) = -1, so no nonnegative cost-share
    // decomposition exists.
    let id1 = corpus::linear(&[1.0])?;
    let diff = |net: &Network, x: &Tensor, xp: &Tensor| -> Result<f64> {
        Ok(net.forward(xp)?.data()[0] - net.forward(x)?.data()[0])
    };
    let x = Tensor::vector(&[1.0]);
    let xp = Tensor::vector(&[0.0]);
    let value = diff(&id1, &x, &xp)?;
    // linearity of the difference method, exact
    let g = corpus::linear(&[2.5])?;
    let combo_lhs = {
        let fx = 2.0 * id1.forward(&x)?.data()[0] - 3.0 * g.forward(&x)?.data()[0];
        let fxp = 2.0 * id1.forward(&xp)?.data()[0] - 3.0 * g.forward(&xp)?.data()[0];
        fxp - fx
    };
    let combo_rhs = 2.0 * diff(&id1, &x, &xp)? - 3.0 * diff(&g, &x, &xp)?;
    let lin_residual = (combo_lhs - combo_rhs).abs();
    let asi = check_asi(
        "asi-difference-method",
        &id1,
        &[3.0],
        &[0.25],
        &x,
        &xp,
        &|net, x, xp| {
            let fx = net.forward(x)?.data()[0];
            let fxp = net.forward(xp)?.data()[0];
            Ok(Tensor::vector(&[fxp - fx]))
        },
        1e-12,
    )?;
    out.push(
        if value == -1.0 && lin_residual == 0.0 && asi.verdict == Verdict::Holds {
            AxiomReport::violated(
                "counterexample-c3",
                0.0,
                0.0,
                format!(
                    "A(1,0,id) = {} while linearity residual {} and ASI residual {}",
                    value, lin_residual, asi.residual
                ),
            )
        } else {
            AxiomReport::holds("counterexample-c3", value + 1.0, 0.0)
        }
        .expecting_violation(),
    );
    Ok(out)
}

/// Clockwise (`n > 0`) or counterclockwise (`n < 0`) boundary loops of the
/// unit square followed by the diagonal; the members of the divergent
/// ensemble construction.
pub fn boundary_loop_path(n: i64) -> PathSpec {
    let o = Tensor::vector(&[0.0, 0.0]);
    let cw = [
        Tensor::vector(&[0.0, 1.0]),
        Tensor::vector(&[1.0, 1.0]),
        Tensor::vector(&[1.0, 0.0]),
    ];
    let mut waypoints = vec![o.clone()];
    for _ in 0..n.unsigned_abs() {
        if n > 0 {
            waypoints.extend(cw.iter().cloned());
        } else {
            waypoints.extend(cw.iter().rev().cloned());
        }
        waypoints.push(o.clone());
    }
    waypoints.push(Tensor::vector(&[1.0, 1.0]));
    PathSpec::piecewise(waypoints).expect("loop waypoints share shape")
}

/// Partial sums of the divergent-ensemble component series: member k is the
/// boundary loop with (-2)^k turns, weighted 1/2^k. Each term is evaluated
/// numerically; the sequence of partial sums fails to be Cauchy, which is the
/// demonstrable core of the divergence argument.
pub fn divergent_ensemble_partial_sums(k_max: u32, steps: usize) -> Result<Vec<(f64, f64)>> {
    let net = corpus::prod2();
    let mut sums = Vec::new();
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in 1..=k_max {
        let turns = (-2i64).pow(k);
        let member = path_attribute(&net, &boundary_loop_path(turns), 0, steps)?;
        let w = 1.0 / 2f64.powi(k as i32);
        s1 += w * member.values.data()[0];
        s2 += w * member.values.data()[1];
        sums.push((s1, s2));
    }
    Ok(sums)
}

/// Sensitivity probe for IG in the attributed input.
#[derive(Debug, Clone)]
pub struct LipschitzReport {
    /// max over trials of ||IG(x) - IG(xbar)||_inf / ||x - xbar||_inf
    pub max_ratio_inf: f64,
    /// max over trials and coordinates of |IG_i(x) - IG_i(xbar)| / ||x - xbar||_2,
    /// the quantity the smooth-case bound controls
    pub max_ratio_component: f64,
    /// per-coordinate bound M_i + |b_i - a_i| L / 2
    pub bounds: Vec<f64>,
    pub m_estimate: Vec<f64>,
    pub l_estimate: f64,
    pub witness: (Tensor, Tensor),
    pub trials: usize,
}

impl LipschitzReport {
    /// True when no sampled pair's component ratio exceeded its bound.
    pub fn within_bound(&self) -> bool {
        self.max_ratio_component <= self.bounds.iter().cloned().fold(f64::MIN, f64::max)
    }
}

/// Samples pairs (x, xbar) with xbar a perturbation of x of size up to
/// `radius`, reports the worst IG difference ratios, and estimates the
/// smooth-case constants (M, L) on a dense grid of random box points.
pub fn lipschitz_probe(
    net: &Network,
    x_prime: &Tensor,
    trials: usize,
    radius: f64,
    steps: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let db = net
        .domain_box()
        .ok_or_else(|| Error::invalid("lipschitz probe needs a domain box"))?
        .clone();
    let n = x_prime.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_box = |rng: &mut ChaCha8Rng| {
        Tensor::new(
            x_prime.shape().to_vec(),
            (0..n)
                .map(|i| rng.gen_range(db.a.data()[i]..=db.b.data()[i]))
                .collect(),
        )
        .expect("box samples are finite")
    };

    // grid-estimated M (per-coordinate gradient sup) and L (gradient
    // Lipschitz constant), from random box points and close pairs
    let grid: Vec<Tensor> = (0..2048).map(|_| sample_box(&mut rng)).collect();
    let mut m_estimate = vec![0.0f64; n];
    let mut grads = Vec::with_capacity(grid.len());
    for p in &grid {
        let g = net.gradient(p, 0)?;
        for i in 0..n {
            m_estimate[i] = m_estimate[i].max(g.data()[i].abs());
        }
        grads.push(g);
    }
    let mut l_estimate = 0.0f64;
    for k in 0..grid.len() - 1 {
        let dx = grid[k + 1].sub(&grid[k])?.norm();
        if dx > 1e-12 {
            let dg = grads[k + 1].sub(&grads[k])?.norm();
            l_estimate = l_estimate.max(dg / dx);
        }
    }

    let mut max_ratio_inf = 0.0f64;
    let mut max_ratio_component = 0.0f64;
    let mut witness = (x_prime.clone(), x_prime.clone());
    for _ in 0..trials {
        let x = sample_box(&mut rng);
        let xbar = Tensor::new(
            x.shape().to_vec(),
            (0..n)
                .map(|i| {
                    (x.data()[i] + rng.gen_range(-radius..=radius))
                        .clamp(db.a.data()[i], db.b.data()[i])
                })
                .collect(),
        )?;
        let dx = x.sub(&xbar)?;
        let dx_inf = dx.max_abs();
        let dx_two = dx.norm();
        if dx_two < 1e-12 {
            continue;
        }
        let ia = integrated_gradients(net, &x, x_prime, 0, steps)?;
        let ib = integrated_gradients(net, &xbar, x_prime, 0, steps)?;
        let dig = ia.values.sub(&ib.values)?;
        if dx_inf > 1e-12 {
            let r = dig.max_abs() / dx_inf;
            if r > max_ratio_inf {
                max_ratio_inf = r;
                witness = (x.clone(), xbar.clone());
            }
        }
        let rc = dig.max_abs() / dx_two;
        max_ratio_component = max_ratio_component.max(rc);
    }

    let bounds: Vec<f64> = (0..n)
        .map(|i| m_estimate[i] + (db.b.data()[i] - db.a.data()[i]).abs() * l_estimate / 2.0)
        .collect();
    Ok(LipschitzReport {
        max_ratio_inf,
        max_ratio_component,
        bounds,
        m_estimate,
        l_estimate,
        witness,
        trials,
    })
}

/// `|IG_1(x) - IG_1(xbar)|` for the kinked abs-diff net with
/// `x = (1, 1 + eps/2)`, `xbar = (1, 1 - eps/2)`, `x' = (0, 0)` — equals 2
/// for every positive epsilon, so IG is not Lipschitz there.
pub fn abs_diff_ig1_gap(eps: f64, steps: usize) -> Result<f64> {
    let net = corpus::abs_diff();
    let xp = Tensor::vector(&[0.0, 0.0]);
    let x = Tensor::vector(&[1.0, 1.0 + eps / 2.0]);
    let xbar = Tensor::vector(&[1.0, 1.0 - eps / 2.0]);
    let a = integrated_gradients(&net, &x, &xp, 0, steps)?;
    let b = integrated_gradients(&net, &xbar, &xp, 0, steps)?;
    Ok((a.values.data()[0] - b.values.data()[0]).abs())
}

/// Runs every axiom case, counterexample, and dependence check in a fixed
/// order.
pub fn run_all() -> Result<Vec<AxiomReport>> {
    let mut reports = vec![
        check_sensitivity_a()?,
        check_implementation_invariance()?,
        check_completeness()?,
        check_linearity()?,
        check_dummy()?,
        check_symmetry()?,
        check_ndp()?,
    ];
    reports.extend(check_asi_cases()?);
    reports.extend(check_distributional()?);
    reports.extend(check_partial_dependence()?);
    reports.extend(run_counterexamples()?);
    reports.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_reports_match_expectations() {
        let reports = run_all().unwrap();
        assert!(reports.len() >= 19);
        for r in &reports {
            assert!(r.as_expected(), "case {} residual {}", r.case_id, r.residual);
            if r.verdict == Verdict::Violated {
                assert!(r.witness.is_some(), "violation without witness: {}", r.case_id);
            }
        }
        // counterexamples really are flagged as violations
        for id in ["counterexample-c1", "counterexample-c2", "counterexample-c3", "dependence-inversion"] {
            let r = reports.iter().find(|r| r.case_id == id).unwrap();
            assert_eq!(r.verdict, Verdict::Violated);
        }
    }

    #[test]
    fn boundary_loops_match_closed_form() {
        let net = corpus::prod2();
        for turns in [1i64, -1, 2, -3] {
            let a = path_attribute(&net, &boundary_loop_path(turns), 0, 4000).unwrap();
            let t = turns as f64;
            assert!(
                (a.values.data()[0] - (0.5 + t)).abs() < 5e-3,
                "turns {}: {:?}",
                turns,
                a.values.data()
            );
            assert!((a.values.data()[1] - (0.5 - t)).abs() < 5e-3);
        }
    }

    #[test]
    fn divergent_partial_sums_are_not_cauchy() {
        let sums = divergent_ensemble_partial_sums(5, 6000).unwrap();
        // consecutive partial sums keep differing by about 1 in each
        // component: the series cannot converge
        for w in sums.windows(2).skip(1) {
            assert!((w[1].0 - w[0].0).abs() > 0.8);
            assert!((w[1].1 - w[0].1).abs() > 0.8);
        }
    }

    #[test]
    fn abs_diff_kink_gap_is_two() {
        for eps in [1e-2, 1e-3, 1e-4] {
            let gap = abs_diff_ig1_gap(eps, 400).unwrap();
            assert!((gap - 2.0).abs() < 1e-6, "eps {}: gap {}", eps, gap);
        }
    }

    #[test]
    fn linear_net_lipschitz_ratio_bounded_by_gradient() {
        let net = corpus::linear(&[0.75, -0.5]).unwrap();
        let report =
            lipschitz_probe(&net, &Tensor::vector(&[0.0, 0.0]), 200, 0.3, 100, 5).unwrap();
        // constant gradient: component ratio can never exceed max |g_i|
        assert!(report.max_ratio_component <= 0.75 + 1e-9);
        assert!(report.l_estimate < 1e-9);
        assert!(report.within_bound());
    }

    #[test]
    fn tanh_net_ratio_within_smooth_bound() {
        let net = corpus::tanh_mlp(8, 2, 16);
        let report =
            lipschitz_probe(&net, &Tensor::vector(&[0.0, 0.0]), 300, 0.4, 120, 9).unwrap();
        assert!(
            report.within_bound(),
            "ratio {} vs bounds {:?}",
            report.max_ratio_component,
            report.bounds
        );
    }
}
