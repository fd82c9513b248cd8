//! Command-line entry point. Exit codes: 0 success, 1 axiom-suite failure,
//! 2 usage error, 3 I/O error.

use axiomgrad::attribution::{distributional_ig, integrated_gradients, path_attribute, Baseline, BaselineDistribution};
use axiomgrad::axioms::{self, Verdict};
use axiomgrad::error::Error;
use axiomgrad::io::{load_idx, load_idx_images, load_model, render_overlay, save_model};
use axiomgrad::neuron::{
    conductance, patch_attr_exact, patch_attr_fast, rank_neurons, NeuronAttribution, NeuronKind,
    NeuronMethod, PatchSpec, RankOrder,
};
use axiomgrad::nn::{fashion_mnist_net, train, Loss, Network, SplitTag, TrainConfig};
use axiomgrad::paths::PathSpec;
use axiomgrad::pruning::{
    average_conductance, default_fractions, patch_rank_prune_experiment, prune_sweep,
    random_ranking,
};
use axiomgrad::tensor::Tensor;
use axiomgrad::AttributionMap;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "axiomgrad", version, about = "Path-method attribution engine")]
struct Cli {
    /// Worker threads; output is identical at any count.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// RNG seed; falls back to AXIOMGRAD_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Trained model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Input sample: `file.idx@k` or a JSON array file.
    #[arg(long)]
    input: String,
    /// Output index to attribute; defaults to the predicted class.
    #[arg(long)]
    target: Option<usize>,
    /// Quadrature steps.
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Output path prefix; writes <out>.csv and <out>.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatchMethod {
    Fast,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum RankKind {
    Conductance,
    Patch,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Train the built-in conv net on an IDX dataset and save it.
    Train {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        /// Use only the first N samples.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Input-feature attribution (straight line, custom path, or
    /// distributional baseline).
    Attribute {
        #[command(flatten)]
        common: InputArgs,
        /// `black`, `file:<json array>`, or `dist-dir:<dir of json arrays>`.
        #[arg(long, default_value = "black")]
        baseline: String,
        /// Piecewise-linear path file; overrides the straight line.
        #[arg(long)]
        path_file: Option<PathBuf>,
        /// Attribute the pre-softmax logit instead of the softmax confidence.
        #[arg(long)]
        logits: bool,
    },
    /// Per-neuron conductance at an internal layer.
    Conductance {
        #[command(flatten)]
        common: InputArgs,
        #[arg(long)]
        layer: String,
    },
    /// Per-neuron patch attribution over a pixel box.
    PatchAttr {
        #[command(flatten)]
        common: InputArgs,
        #[arg(long)]
        layer: String,
        /// Inclusive pixel rectangle `r0,c0,r1,c1`.
        #[arg(long, value_name = "R0,C0,R1,C1")]
        r#box: String,
        #[arg(long, value_enum, default_value_t = PatchMethod::Fast)]
        method: PatchMethod,
    },
    /// Run the axiom suite.
    Axioms {
        #[command(subcommand)]
        action: AxiomsAction,
    },
    /// Probe IG input sensitivity and the smooth-case bound.
    Lipschitz {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0.25)]
        radius: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prune a layer by rank and sweep the pruned fraction.
    PruneSweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        layer: String,
        #[arg(long, value_enum)]
        rank: RankKind,
        /// IDX dataset for accuracy sweeps (conductance/random ranks).
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Single input (`file.idx@k` or JSON) for the patch rank.
        #[arg(long)]
        input: Option<String>,
        #[arg(long, value_name = "R0,C0,R1,C1")]
        r#box: Option<String>,
        #[arg(long)]
        target: Option<usize>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an attribution overlay as a PPM image.
    Render {
        #[command(flatten)]
        common: InputArgs,
        #[arg(long, value_name = "R0,C0,R1,C1")]
        r#box: Option<String>,
    },
}

#[derive(Subcommand)]
enum AxiomsAction {
    /// Execute every case (or one) and print a report per case.
    Run {
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers == 0 {
        eprintln!("error: --workers must be >= 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
    {
        eprintln!("error: {}", e);
        return ExitCode::from(2);
    }
    let seed = cli.seed.or_else(|| {
        std::env::var("AXIOMGRAD_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    match run(cli.command, seed.unwrap_or(0)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            let code = match e {
                Error::Io(_) | Error::Idx(_) | Error::Json(_) | Error::FormatVersion(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

/// Parses `file.idx@k` or a JSON array file into an input tensor.
fn load_input(spec: &str) -> Result<Tensor, Error> {
    if let Some((path, index)) = spec.rsplit_once('@') {
        let k: usize = index
            .parse()
            .map_err(|_| Error::invalid(format!("bad sample index `{}`", index)))?;
        let images = load_idx_images(Path::new(path))?;
        return images
            .into_iter()
            .nth(k)
            .ok_or_else(|| Error::invalid(format!("sample {} out of range", k)));
    }
    let text = std::fs::read_to_string(spec)?;
    let data: Vec<f64> = serde_json::from_str(&text)?;
    Tensor::new(vec![data.len()], data)
}

fn parse_box(spec: &str) -> Result<(usize, usize, usize, usize), Error> {
    let parts: Vec<usize> = spec
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::invalid(format!("bad box `{}`; expected r0,c0,r1,c1", spec)))?;
    match parts[..] {
        [r0, c0, r1, c1] => Ok((r0, c0, r1, c1)),
        _ => Err(Error::invalid("box needs exactly four integers")),
    }
}

/// Reshapes a loaded sample to the model's input shape when the element
/// counts agree (IDX images load as `[rows, cols]`).
fn fit_input(net: &Network, x: Tensor) -> Result<Tensor, Error> {
    let want = net.input_shape().to_vec();
    if x.shape() == want.as_slice() {
        Ok(x)
    } else if x.len() == want.iter().product::<usize>() {
        x.reshaped(want)
    } else {
        Err(Error::shape("cli input", net.input_shape(), x.shape()))
    }
}

fn pick_target(net: &Network, x: &Tensor, requested: Option<usize>) -> Result<usize, Error> {
    match requested {
        Some(t) => Ok(t),
        None => {
            let out = net.forward(x)?;
            Ok(out
                .data()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap())
        }
    }
}

fn write_attribution(out: &Path, map: &AttributionMap) -> Result<(), Error> {
    let mut csv = String::from("index,value\n");
    for (i, v) in map.values.data().iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i, v));
    }
    std::fs::write(out.with_extension("csv"), csv)?;
    let baseline = match &map.baseline {
        Baseline::Point(p) => json!({ "kind": "point", "values": p.data() }),
        Baseline::Distribution(s) => json!({ "kind": "distribution", "samples": s.len() }),
    };
    let sidecar = json!({
        "method": map.method_tag,
        "steps": map.steps,
        "target": map.target,
        "completeness_gap": map.completeness_gap,
        "baseline": baseline,
        "values": map.values.data(),
    });
    std::fs::write(
        out.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

fn write_neuron_attribution(out: &Path, attr: &NeuronAttribution) -> Result<(), Error> {
    let mut csv = String::from("neuron_index,value\n");
    for (j, v) in attr.values.data().iter().enumerate() {
        csv.push_str(&format!("{},{}\n", j, v));
    }
    std::fs::write(out.with_extension("csv"), csv)?;
    let (kind, patch_indices) = match &attr.kind {
        NeuronKind::PerInput(i) => (format!("per_input({})", i), None),
        NeuronKind::Conductance => ("conductance".to_string(), None),
        NeuronKind::Patch(s) => ("patch".to_string(), Some(s.clone())),
    };
    let sidecar = json!({
        "layer": attr.layer_name,
        "kind": kind,
        "patch_indices": patch_indices,
        "N": attr.steps,
        "method": match attr.method {
            NeuronMethod::Exact => "exact",
            NeuronMethod::Fast => "fast",
        },
        "values": attr.values.data(),
    });
    std::fs::write(
        out.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

fn black_baseline(net: &Network) -> Tensor {
    Tensor::zeros(net.input_shape())
}

fn run(command: Command, seed: u64) -> Result<ExitCode, Error> {
    match command {
        Command::Train {
            images,
            labels,
            out,
            epochs,
            batch_size,
            learning_rate,
            limit,
        } => {
            let mut dataset = load_idx(&images, &labels, SplitTag::Train)?;
            if let Some(n) = limit {
                dataset = dataset.take(n);
            }
            let net = fashion_mnist_net(seed);
            let cfg = TrainConfig {
                learning_rate,
                batch_size,
                epochs,
                seed,
                loss: Loss::CrossEntropy,
            };
            let trained = train(&net, &dataset, &cfg)?;
            save_model(&trained, &out)?;
            println!("trained on {} samples; model written to {}", dataset.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Attribute {
            common,
            baseline,
            path_file,
            logits,
        } => {
            let net = load_model(&common.model)?;
            let x = fit_input(&net, load_input(&common.input)?)?;
            let target = pick_target(&net, &x, common.target)?;
            let net = if logits { net.logits_view() } else { net };
            let map = if let Some(pf) = path_file {
                let path = PathSpec::from_json_str(&std::fs::read_to_string(pf)?)?;
                path_attribute(&net, &path, target, common.steps)?
            } else if let Some(dir) = baseline.strip_prefix("dist-dir:") {
                let mut samples = Vec::new();
                let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                entries.sort();
                for p in entries {
                    let data: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                    samples.push(Tensor::new(x.shape().to_vec(), data)?);
                }
                let dist = BaselineDistribution::new(samples)?;
                distributional_ig(&net, &x, &dist, target, common.steps)?
            } else {
                let xp = match baseline.as_str() {
                    "black" => black_baseline(&net),
                    other => {
                        let path = other
                            .strip_prefix("file:")
                            .ok_or_else(|| Error::invalid(format!("unknown baseline `{}`", other)))?;
                        let data: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                        Tensor::new(x.shape().to_vec(), data)?
                    }
                };
                integrated_gradients(&net, &x, &xp, target, common.steps)?
            };
            write_attribution(&common.out, &map)?;
            println!(
                "attribution written to {}.csv (completeness gap {:.3e})",
                common.out.display(),
                map.completeness_gap
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Conductance { common, layer } => {
            let net = load_model(&common.model)?;
            let x = fit_input(&net, load_input(&common.input)?)?;
            let target = pick_target(&net, &x, common.target)?;
            let split = net.split(&layer)?;
            let attr = conductance(&split, &x, &black_baseline(&net), target, common.steps)?;
            write_neuron_attribution(&common.out, &attr)?;
            println!("conductance written to {}.csv", common.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::PatchAttr {
            common,
            layer,
            r#box,
            method,
        } => {
            let net = load_model(&common.model)?;
            let x = fit_input(&net, load_input(&common.input)?)?;
            let target = pick_target(&net, &x, common.target)?;
            let (r0, c0, r1, c1) = parse_box(&r#box)?;
            let (rows, cols) = match net.input_shape() {
                [r, c] => (*r, *c),
                [1, r, c] => (*r, *c),
                other => {
                    return Err(Error::invalid(format!(
                        "patch attribution needs a 2-d image input, model takes {:?}",
                        other
                    )))
                }
            };
            let patch = PatchSpec::rect(rows, cols, r0, c0, r1, c1)?;
            let split = net.split(&layer)?;
            let black = black_baseline(&net);
            let attr = match method {
                PatchMethod::Fast => {
                    patch_attr_fast(&split, &x, &black, target, &patch, common.steps)?
                }
                PatchMethod::Exact => {
                    patch_attr_exact(&split, &x, &black, target, &patch, common.steps)?
                }
            };
            write_neuron_attribution(&common.out, &attr)?;
            println!("patch attribution written to {}.csv", common.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Axioms { action } => {
            let AxiomsAction::Run { case, json } = action;
            let mut reports = axioms::run_all()?;
            if let Some(id) = &case {
                reports.retain(|r| &r.case_id == id);
                if reports.is_empty() {
                    return Err(Error::invalid(format!("no axiom case named `{}`", id)));
                }
            }
            let mut failed = false;
            for r in &reports {
                if json {
                    println!(
                        "{}",
                        json!({
                            "case": r.case_id,
                            "verdict": match r.verdict { Verdict::Holds => "holds", Verdict::Violated => "violated" },
                            "expected_violation": r.expect_violation,
                            "residual": r.residual,
                            "tolerance": r.tolerance,
                            "witness": r.witness,
                        })
                    );
                } else {
                    let status = if r.as_expected() { "ok" } else { "UNEXPECTED" };
                    println!(
                        "{:32} {:9} {} (residual {:.3e})",
                        r.case_id,
                        match r.verdict {
                            Verdict::Holds => "holds",
                            Verdict::Violated => "violated",
                        },
                        status,
                        r.residual
                    );
                }
                failed |= !r.as_expected();
            }
            Ok(if failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Lipschitz {
            model,
            trials,
            radius,
            steps,
            out,
        } => {
            let net = load_model(&model)?;
            let report = axioms::lipschitz_probe(
                &net,
                &black_baseline(&net),
                trials,
                radius,
                steps,
                seed,
            )?;
            let doc = json!({
                "trials": report.trials,
                "max_ratio_inf": report.max_ratio_inf,
                "max_ratio_component": report.max_ratio_component,
                "bounds": report.bounds,
                "m_estimate": report.m_estimate,
                "l_estimate": report.l_estimate,
                "within_bound": report.within_bound(),
                "witness": {
                    "x": report.witness.0.data(),
                    "xbar": report.witness.1.data(),
                },
            });
            let text = serde_json::to_string_pretty(&doc)?;
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => println!("{}", text),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::PruneSweep {
            model,
            layer,
            rank,
            images,
            labels,
            input,
            r#box,
            target,
            steps,
            out,
        } => {
            let net = load_model(&model)?;
            let width: usize = {
                let split = net.split(&layer)?;
                split.internal_width()
            };
            let fractions = default_fractions();
            match rank {
                RankKind::Patch => {
                    let input = input
                        .ok_or_else(|| Error::invalid("--rank patch needs --input"))?;
                    let box_spec =
                        r#box.ok_or_else(|| Error::invalid("--rank patch needs --box"))?;
                    let x = fit_input(&net, load_input(&input)?)?;
                    let t = pick_target(&net, &x, target)?;
                    let (r0, c0, r1, c1) = parse_box(&box_spec)?;
                    let (rows, cols) = match net.input_shape() {
                        [r, c] => (*r, *c),
                        [1, r, c] => (*r, *c),
                        other => {
                            return Err(Error::invalid(format!(
                                "patch rank needs a 2-d image input, model takes {:?}",
                                other
                            )))
                        }
                    };
                    let patch = PatchSpec::rect(rows, cols, r0, c0, r1, c1)?;
                    let outcome = patch_rank_prune_experiment(
                        &net, &layer, &x, t, &patch, &fractions, steps, steps,
                    )?;
                    std::fs::write(out.with_extension("csv"), outcome.patch_arm.to_csv())?;
                    let doc = json!({
                        "patch_arm": outcome.patch_arm.to_json(),
                        "conductance_arm": outcome.conductance_arm.to_json(),
                        "patch_ranking": outcome.patch_ranking,
                        "conductance_ranking": outcome.conductance_ranking,
                    });
                    std::fs::write(out.with_extension("json"), serde_json::to_string_pretty(&doc)?)?;
                }
                RankKind::Conductance | RankKind::Random => {
                    let (images, labels) = match (images, labels) {
                        (Some(i), Some(l)) => (i, l),
                        _ => {
                            return Err(Error::invalid(
                                "accuracy sweeps need --images and --labels",
                            ))
                        }
                    };
                    let dataset = load_idx(&images, &labels, SplitTag::Test)?;
                    let (ranking, descriptor) = match rank {
                        RankKind::Conductance => {
                            let avg = average_conductance(&net, &layer, &dataset, steps)?;
                            (
                                rank_neurons(&avg, RankOrder::Descending),
                                "conductance-descending",
                            )
                        }
                        _ => (random_ranking(width, seed), "random"),
                    };
                    let sweep =
                        prune_sweep(&net, &layer, &dataset, &ranking, &fractions, descriptor)?;
                    std::fs::write(out.with_extension("csv"), sweep.to_csv())?;
                    std::fs::write(
                        out.with_extension("json"),
                        serde_json::to_string_pretty(&sweep.to_json())?,
                    )?;
                }
            }
            println!("sweep written to {}.csv", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Render { common, r#box } => {
            let net = load_model(&common.model)?;
            let x = fit_input(&net, load_input(&common.input)?)?;
            let target = pick_target(&net, &x, common.target)?;
            let map =
                integrated_gradients(&net, &x, &black_baseline(&net), target, common.steps)?;
            let bbox = r#box.as_deref().map(parse_box).transpose()?;
            let overlay = render_overlay(&x, &map, bbox)?;
            let out = common.out.with_extension("ppm");
            overlay.write_ppm(&out)?;
            println!("overlay written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
