//! End-to-end acceptance suite. Each test prints a single machine-greppable
//! `ACCEPTANCE <n> ... pass|fail` line (run with `--nocapture` to see the
//! lines for passing tests as well).

use axiomgrad::attribution::{integrated_gradients, path_attribute};
use axiomgrad::axioms::{abs_diff_ig1_gap, corpus, lipschitz_probe, run_all, Verdict};
use axiomgrad::neuron::{
    conductance_exact, flow_ij, patch_attr_exact, patch_attr_fast, rank_neurons, PatchSpec,
    RankOrder,
};
use axiomgrad::nn::{
    accuracy, fashion_mnist_net, train, DomainBox, Layer, Loss, Network,
    SplitTag, TrainConfig,
};
use axiomgrad::io::load_idx;
use axiomgrad::paths::{counterexample_loop_c1, reference_loop_five_segment};
use axiomgrad::pruning::{
    average_conductance, patch_rank_prune_experiment, prune_sweep, random_ranking,
};
use axiomgrad::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

/// Prints the one-line verdict for a criterion and panics on failure so the
/// harness counts it.
fn report(number: usize, title: &str, budget: Option<Duration>, body: impl FnOnce() -> Outcome) {
    let started = Instant::now();
    let outcome = body();
    let elapsed = started.elapsed();
    let outcome = outcome.and_then(|detail| match budget {
        Some(limit) if elapsed > limit => Err(format!(
            "ran {:.1?}, over the {:.0?} budget ({})",
            elapsed, limit, detail
        )),
        _ => Ok(detail),
    });
    match outcome {
        Ok(detail) => println!(
            "ACCEPTANCE {:2} {:<28} pass  [{:.2?}] {}",
            number, title, elapsed, detail
        ),
        Err(msg) => {
            println!(
                "ACCEPTANCE {:2} {:<28} FAIL  [{:.2?}] {}",
                number, title, elapsed, msg
            );
            panic!("acceptance criterion {} failed: {}", number, msg);
        }
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

#[test]
fn criterion_01_closed_form_ig() {
    report(1, "closed-form IG", Some(Duration::from_secs(1)), || {
        let net = corpus::prod2();
        let ig = integrated_gradients(
            &net,
            &Tensor::vector(&[1.0, 1.0]),
            &Tensor::vector(&[0.0, 0.0]),
            0,
            1000,
        )
        .map_err(|e| e.to_string())?;
        let v = ig.values.data();
        ensure(
            (v[0] - 0.5).abs() <= 1e-6 && (v[1] - 0.5).abs() <= 1e-6,
            format!("expected (0.5, 0.5), got ({}, {})", v[0], v[1]),
        )?;
        Ok(format!("straight line, 1000 steps -> ({:.9}, {:.9})", v[0], v[1]))
    });
}

#[test]
fn criterion_02_loop_counterexample() {
    report(2, "loop counterexample", Some(Duration::from_secs(1)), || {
        let net = corpus::prod2();
        let a = path_attribute(&net, &counterexample_loop_c1(), 0, 1000)
            .map_err(|e| e.to_string())?;
        let v = a.values.data();
        ensure(
            (v[0] - 1.0).abs() <= 1e-3 && (v[1] + 1.0).abs() <= 1e-3,
            format!("expected (1, -1), got ({}, {})", v[0], v[1]),
        )?;
        ensure(
            v[1] < 0.0,
            format!("second component {} is not negative", v[1]),
        )?;
        Ok(format!(
            "loop on x1*x2 -> ({:.6}, {:.6}); negative component present",
            v[0], v[1]
        ))
    });
}

#[test]
fn criterion_03_five_segment_counterexample() {
    report(3, "five-segment counterexample", Some(Duration::from_secs(1)), || {
        let net = corpus::x1_x2sq();
        let loop_attr = path_attribute(&net, &reference_loop_five_segment(), 0, 1500)
            .map_err(|e| e.to_string())?;
        let v = loop_attr.values.data();
        ensure(
            (v[0] + 2.0 / 3.0).abs() <= 1e-3 && (v[1] - 5.0 / 3.0).abs() <= 1e-3,
            format!("loop expected (-2/3, 5/3), got ({}, {})", v[0], v[1]),
        )?;
        let diag = integrated_gradients(
            &net,
            &Tensor::vector(&[1.0, 1.0]),
            &Tensor::vector(&[0.0, 0.0]),
            0,
            1500,
        )
        .map_err(|e| e.to_string())?;
        let d = diag.values.data();
        ensure(
            (d[0] - 1.0 / 3.0).abs() <= 1e-3 && (d[1] - 2.0 / 3.0).abs() <= 1e-3,
            format!("diagonal expected (1/3, 2/3), got ({}, {})", d[0], d[1]),
        )?;
        Ok(format!(
            "loop ({:.6}, {:.6}); final diagonal alone ({:.6}, {:.6})",
            v[0], v[1], d[0], d[1]
        ))
    });
}

#[test]
fn criterion_04_difference_method() {
    report(4, "difference method", Some(Duration::from_secs(1)), || {
        // A(x, x', F) := F(x') - F(x) on the identity function.
        let id = corpus::linear(&[1.0]).map_err(|e| e.to_string())?;
        let diff = |x: f64, xp: f64, net: &Network| -> Result<f64, String> {
            let fx = net.forward(&Tensor::vector(&[x])).map_err(|e| e.to_string())?;
            let fxp = net.forward(&Tensor::vector(&[xp])).map_err(|e| e.to_string())?;
            Ok(fxp.data()[0] - fx.data()[0])
        };
        let a = diff(1.0, 0.0, &id)?;
        ensure(a == -1.0, format!("A(1, 0, id) = {}, expected exactly -1", a))?;

        // The suite must confirm the same method passes linearity and ASI
        // while violating completeness/sensitivity expectations.
        let reports = run_all().map_err(|e| e.to_string())?;
        let c3 = reports
            .iter()
            .find(|r| r.case_id == "counterexample-c3")
            .ok_or("missing counterexample-c3 report")?;
        let asi = reports
            .iter()
            .find(|r| r.case_id == "asi-difference-method")
            .ok_or("missing asi-difference-method report")?;
        ensure(
            c3.verdict == Verdict::Violated && c3.expect_violation && c3.as_expected(),
            "difference-method counterexample did not register as a violation",
        )?;
        ensure(
            asi.verdict == Verdict::Holds && asi.residual == 0.0,
            format!("ASI check on the difference method: residual {}", asi.residual),
        )?;
        Ok("A(1, 0, id) = -1 exactly; linearity and ASI hold for the same method".into())
    });
}

#[test]
fn criterion_05_lipschitz_probe() {
    report(5, "IG input sensitivity", Some(Duration::from_secs(30)), || {
        // Non-smooth case: the |y2 - y1| net keeps an O(1) IG gap across
        // vanishing input perturbations.
        for eps in [1e-2, 1e-3, 1e-4] {
            let gap = abs_diff_ig1_gap(eps, 1000).map_err(|e| e.to_string())?;
            ensure(
                (gap - 2.0).abs() <= 1e-6,
                format!("|IG1(x) - IG1(xbar)| = {} at eps = {}, expected 2", gap, eps),
            )?;
        }
        // Smooth case: the per-component bound M_i + |b_i - a_i| L / 2 holds
        // over 1000 sampled pairs on a 2-16-1 tanh net.
        let net = corpus::tanh_mlp(42, 2, 16);
        let probe = lipschitz_probe(&net, &Tensor::zeros(&[2]), 1000, 0.25, 100, 7)
            .map_err(|e| e.to_string())?;
        ensure(
            probe.within_bound(),
            format!(
                "component ratio {} exceeds bound {:?}",
                probe.max_ratio_component, probe.bounds
            ),
        )?;
        Ok(format!(
            "gap = 2 within 1e-6 at eps 1e-2..1e-4; smooth ratio {:.4} <= bound {:.4} over 1000 pairs",
            probe.max_ratio_component,
            probe.bounds.iter().cloned().fold(f64::MIN, f64::max)
        ))
    });
}

#[test]
fn criterion_06_axiom_suite() {
    report(6, "axiom suite", Some(Duration::from_secs(60)), || {
        let reports = run_all().map_err(|e| e.to_string())?;
        let required = [
            "completeness",
            "linearity",
            "dummy",
            "symmetry",
            "asi-identity",
            "asi-scale",
            "asi-loop-method",
            "sensitivity-a",
            "implementation-invariance",
            "ndp",
            "dist-completeness",
            "dist-symmetry",
            "dist-ndp",
            "dist-sensitivity-a",
        ];
        for id in required {
            let r = reports
                .iter()
                .find(|r| r.case_id == id)
                .ok_or(format!("missing case {}", id))?;
            ensure(
                r.verdict == Verdict::Holds && r.as_expected(),
                format!("case {} residual {} (tol {})", id, r.residual, r.tolerance),
            )?;
        }
        let mut violations = 0;
        for r in &reports {
            ensure(
                r.as_expected(),
                format!("case {} did not match expectation", r.case_id),
            )?;
            if r.verdict == Verdict::Violated {
                violations += 1;
                ensure(
                    r.witness.is_some(),
                    format!("violation {} lacks a witness", r.case_id),
                )?;
            }
        }
        ensure(violations >= 4, "expected at least four violation cases with witnesses")?;
        Ok(format!(
            "{} cases as expected ({} violations, all with witnesses)",
            reports.len(),
            violations
        ))
    });
}

/// Identity dense layer, used to give single-layer corpus nets an interior
/// split point without changing the function.
fn identity_layer(name: &str, n: usize) -> Layer {
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        w[i * n + i] = 1.0;
    }
    Layer::dense(
        name,
        Tensor::new(vec![n, n], w).unwrap(),
        Tensor::zeros(&[n]),
    )
    .unwrap()
}

/// Wraps a net with identity layers so the first original layer becomes an
/// interior boundary, and returns (wrapped net, split-layer name).
fn splittable(net: &Network) -> (Network, String) {
    let n_in: usize = net.input_shape().iter().product();
    let first = net.layers()[0].name.clone();
    let out_len = net.output_len();
    let mut layers = vec![identity_layer("wrap_in", n_in)];
    layers.extend(net.layers().iter().cloned());
    layers.push(identity_layer("wrap_out", out_len));
    let wrapped = Network::new(
        net.input_shape().to_vec(),
        layers,
        net.domain_box().cloned(),
    )
    .unwrap();
    (wrapped, first)
}

fn sample_in_box(rng: &mut ChaCha8Rng, dbox: &DomainBox) -> Tensor {
    Tensor::new(
        dbox.a.shape().to_vec(),
        dbox.a
            .data()
            .iter()
            .zip(dbox.b.data())
            .map(|(&lo, &hi)| rng.gen_range(lo..hi))
            .collect(),
    )
    .unwrap()
}

#[test]
fn criterion_07_row_sum_identity() {
    report(7, "row-sum identity", None, || {
        let corpus_nets: Vec<(&str, Network)> = vec![
            ("prod2", corpus::prod2()),
            ("x1_x2sq", corpus::x1_x2sq()),
            ("x1sq_x2", corpus::x1sq_x2()),
            ("dummy_x1", corpus::dummy_x1()),
            ("constant", corpus::constant(2.5)),
            ("linear", corpus::linear(&[1.5, -0.5, 2.0]).unwrap()),
            ("abs_diff", corpus::abs_diff()),
            ("tanh_mlp", corpus::tanh_mlp(9, 4, 6)),
            ("relu_mlp", corpus::relu_mlp(11, 4, 6)),
            ("stacked", corpus::stacked_pair().1),
        ];
        let mut worst = 0.0f64;
        let mut checked = 0usize;
        for (name, net) in &corpus_nets {
            let (wrapped, split_at) = splittable(net);
            let split = wrapped.split(&split_at).map_err(|e| e.to_string())?;
            let dbox = wrapped
                .domain_box()
                .cloned()
                .unwrap_or_else(|| DomainBox::unit(wrapped.input_shape()));
            let mut rng = ChaCha8Rng::seed_from_u64(101);
            let n_in: usize = wrapped.input_shape().iter().product();
            for _ in 0..20 {
                let x = sample_in_box(&mut rng, &dbox);
                let xp = sample_in_box(&mut rng, &dbox);
                let i = rng.gen_range(0..n_in);
                let ig = integrated_gradients(&wrapped, &x, &xp, 0, 80)
                    .map_err(|e| e.to_string())?;
                let flow = flow_ij(&split, &x, &xp, 0, i, 80).map_err(|e| e.to_string())?;
                let gap = (flow.values.sum() - ig.values.data()[i]).abs();
                ensure(
                    gap <= 1e-9,
                    format!("{}: sum_j IG_ij vs IG_i gap {} at input {}", name, gap, i),
                )?;
                worst = worst.max(gap);
                checked += 1;
            }
        }
        Ok(format!(
            "{} (net, x, i) triples over {} nets; worst gap {:.3e}",
            checked,
            corpus_nets.len(),
            worst
        ))
    });
}

#[test]
fn criterion_08_patch_consistency() {
    report(8, "patch consistency", Some(Duration::from_secs(60)), || {
        // Exact additivity: IG_{S,j} + IG_{S^c,j} == IG_{*,j} at matched
        // nodes, and the fast method's residual is reported diagnostically.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let net = corpus::tanh_mlp(5, 16, 16);
        let split = net.split("t1").map_err(|e| e.to_string())?;
        let x = Tensor::new(vec![16], (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let xp = Tensor::zeros(&[16]);
        let patch = PatchSpec::new((0..7).collect()).unwrap();
        let co_patch = patch.complement(16).unwrap();
        let steps = 400;
        let s = patch_attr_exact(&split, &x, &xp, 0, &patch, steps).map_err(|e| e.to_string())?;
        let sc =
            patch_attr_exact(&split, &x, &xp, 0, &co_patch, steps).map_err(|e| e.to_string())?;
        let full = conductance_exact(&split, &x, &xp, 0, steps).map_err(|e| e.to_string())?;
        let mut additivity_gap = 0.0f64;
        for j in 0..16 {
            let lhs = s.values.data()[j] + sc.values.data()[j];
            additivity_gap = additivity_gap.max((lhs - full.values.data()[j]).abs());
        }
        ensure(
            additivity_gap <= 1e-9,
            format!("additivity gap {} exceeds 1e-9", additivity_gap),
        )?;

        // Fast vs exact discrepancy halves when the node count doubles.
        let mut errors = Vec::new();
        for n in [250usize, 500, 1000, 2000] {
            let fast =
                patch_attr_fast(&split, &x, &xp, 0, &patch, n).map_err(|e| e.to_string())?;
            let exact =
                patch_attr_exact(&split, &x, &xp, 0, &patch, n).map_err(|e| e.to_string())?;
            let err = fast
                .values
                .data()
                .iter()
                .zip(exact.values.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            errors.push((n, err));
        }
        let mut ratios = Vec::new();
        for w in errors.windows(2) {
            let ratio = w[0].1 / w[1].1;
            ensure(
                ratio >= 1.6,
                format!(
                    "fast-method error fell only {:.2}x from N={} to N={} ({:.3e} -> {:.3e})",
                    ratio, w[0].0, w[1].0, w[0].1, w[1].1
                ),
            )?;
            ratios.push(ratio);
        }
        Ok(format!(
            "additivity gap {:.2e}; fast-vs-exact errors {:?} halve with N (ratios {:.2?})",
            additivity_gap,
            errors
                .iter()
                .map(|(n, e)| format!("N={}:{:.2e}", n, e))
                .collect::<Vec<_>>(),
            ratios
        ))
    });
}

fn fashion_mnist_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("FASHION_MNIST_DIR")?);
    let files = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ];
    files.iter().all(|f| dir.join(f).is_file()).then_some(dir)
}

#[test]
fn criterion_09_desk_scale_experiment() {
    let Some(dir) = fashion_mnist_dir() else {
        println!(
            "ACCEPTANCE  9 {:<28} SKIP  Fashion-MNIST IDX files not found; set \
             FASHION_MNIST_DIR to a directory holding the four uncompressed \
             train-*/t10k-* files to run the desk-scale experiment",
            "desk-scale experiment"
        );
        return;
    };
    report(9, "desk-scale experiment", Some(Duration::from_secs(1800)), || {
        let train_set = load_idx(
            &dir.join("train-images-idx3-ubyte"),
            &dir.join("train-labels-idx1-ubyte"),
            SplitTag::Train,
        )
        .map_err(|e| e.to_string())?;
        let test_set = load_idx(
            &dir.join("t10k-images-idx3-ubyte"),
            &dir.join("t10k-labels-idx1-ubyte"),
            SplitTag::Test,
        )
        .map_err(|e| e.to_string())?;
        let net = fashion_mnist_net(3);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 2,
            seed: 3,
            loss: Loss::CrossEntropy,
        };
        let trained = train(&net, &train_set.take(20_000), &cfg).map_err(|e| e.to_string())?;
        let eval_set = test_set.take(2_000);
        let acc = accuracy(&trained, &eval_set).map_err(|e| e.to_string())?;
        ensure(acc >= 0.85, format!("test accuracy {:.4} below the 0.85 floor", acc))?;

        // Descending-conductance pruning of the 64-unit dense layer must be
        // at least as damaging as seeded random pruning at every fraction.
        let fractions: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let rank_set = test_set.take(256);
        let avg = average_conductance(&trained, "fc2_tanh", &rank_set, 20)
            .map_err(|e| e.to_string())?;
        let cond_ranking = rank_neurons(&avg, RankOrder::Descending);
        let sweep_set = test_set.take(1_000);
        let cond_sweep = prune_sweep(
            &trained,
            "fc2_tanh",
            &sweep_set,
            &cond_ranking,
            &fractions,
            "conductance-descending",
        )
        .map_err(|e| e.to_string())?;
        let rand_sweep = prune_sweep(
            &trained,
            "fc2_tanh",
            &sweep_set,
            &random_ranking(64, 17),
            &fractions,
            "random",
        )
        .map_err(|e| e.to_string())?;
        for (c, r) in cond_sweep.metrics.iter().zip(&rand_sweep.metrics) {
            let (ca, ra) = (c.test_accuracy.unwrap(), r.test_accuracy.unwrap());
            ensure(
                ca <= ra,
                format!(
                    "conductance-pruned accuracy {:.4} > random {:.4} at fraction {}",
                    ca, ra, c.fraction
                ),
            )?;
        }

        // Heel-box region experiment on a sandal image: pruning the
        // box-ranked neurons drains the inside-box IG sum faster than the
        // outside-box sum.
        let sandals = test_set.filter_class(5);
        ensure(!sandals.is_empty(), "no sandal images in the test split")?;
        let image = sandals.images[0]
            .clone()
            .reshaped(vec![1, 28, 28])
            .map_err(|e| e.to_string())?;
        let heel = PatchSpec::rect(28, 28, 16, 4, 27, 14).map_err(|e| e.to_string())?;
        let outcome = patch_rank_prune_experiment(
            &trained,
            "fc2_tanh",
            &image,
            5,
            &heel,
            &[0.0, 0.25, 0.5],
            50,
            200,
        )
        .map_err(|e| e.to_string())?;
        let arm = &outcome.patch_arm.metrics;
        let inside0 = arm[0].ig_sum_inside.unwrap();
        let outside0 = arm[0].ig_sum_outside.unwrap();
        let inside_drop = inside0 - arm[2].ig_sum_inside.unwrap();
        let outside_drop = outside0 - arm[2].ig_sum_outside.unwrap();
        ensure(
            inside_drop > 0.0,
            format!("inside-box IG sum did not drop (delta {})", inside_drop),
        )?;
        ensure(
            inside_drop > outside_drop,
            format!(
                "inside drop {} not larger than outside drop {}",
                inside_drop, outside_drop
            ),
        )?;
        Ok(format!(
            "accuracy {:.4}; conductance <= random at all 9 fractions; heel-box inside drop {:.4} vs outside {:.4}",
            acc, inside_drop, outside_drop
        ))
    });
}

#[test]
fn criterion_10_quadrature_convergence() {
    report(10, "quadrature convergence", None, || {
        let net = corpus::tanh_mlp(2, 6, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let x = Tensor::new(vec![6], (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let xp = Tensor::new(vec![6], (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let mut gaps = Vec::new();
        for steps in [50usize, 100, 200, 400, 800] {
            let ig = integrated_gradients(&net, &x, &xp, 0, steps).map_err(|e| e.to_string())?;
            gaps.push((steps, ig.completeness_gap));
        }
        for w in gaps.windows(2) {
            ensure(
                w[1].1 <= 1.5 * w[0].1,
                format!(
                    "gap rose beyond noise: {:.3e} at {} steps -> {:.3e} at {} steps",
                    w[0].1, w[0].0, w[1].1, w[1].0
                ),
            )?;
        }
        ensure(
            gaps.last().unwrap().1 < gaps[0].1,
            "gap at 800 steps not below gap at 50 steps",
        )?;
        Ok(format!(
            "completeness gap falls {:.3e} -> {:.3e} over steps 50..800",
            gaps[0].1,
            gaps.last().unwrap().1
        ))
    });
}
