//! Model persistence: a single JSON document, format `axiomgrad-model/1`,
//! weights serialized with full round-trip precision.

use crate::error::{Error, Result};
use crate::nn::{DomainBox, Layer, LayerKind, Network};
use crate::tensor::Tensor;
use serde_json::{json, Value};
use std::fs;
use std::path::Path;

const FORMAT: &str = "axiomgrad-model/1";

fn tensor_json(t: &Tensor) -> Value {
    json!({ "shape": t.shape(), "data": t.data() })
}

fn tensor_from_json(v: &Value, context: &str) -> Result<Tensor> {
    let shape: Vec<usize> = serde_json::from_value(
        v.get("shape")
            .ok_or_else(|| Error::invalid(format!("{}: missing shape", context)))?
            .clone(),
    )?;
    let data: Vec<f64> = serde_json::from_value(
        v.get("data")
            .ok_or_else(|| Error::invalid(format!("{}: missing data", context)))?
            .clone(),
    )?;
    Tensor::new(shape, data).map_err(|e| match e {
        Error::ShapeMismatch { expected, got, .. } => Error::ShapeMismatch {
            context: context.to_string(),
            expected,
            got,
        },
        other => other,
    })
}

fn layer_json(layer: &Layer) -> Value {
    let (kind, hyper, weights, bias) = match &layer.kind {
        LayerKind::Dense { weight, bias } => (
            "dense",
            json!({}),
            Some(tensor_json(weight)),
            Some(tensor_json(bias)),
        ),
        LayerKind::Conv2d { weight, bias } => (
            "conv2d",
            json!({}),
            Some(tensor_json(weight)),
            Some(tensor_json(bias)),
        ),
        LayerKind::MaxPool2d { size } => ("maxpool2d", json!({ "size": size }), None, None),
        LayerKind::Tanh => ("tanh", json!({}), None, None),
        LayerKind::Relu => ("relu", json!({}), None, None),
        LayerKind::LeakyRelu { alpha } => ("leaky_relu", json!({ "alpha": alpha }), None, None),
        LayerKind::Softmax => ("softmax", json!({}), None, None),
        LayerKind::Monomial { exponents, coeffs } => (
            "monomial",
            json!({ "exponents": exponents, "coeffs": coeffs }),
            None,
            None,
        ),
        LayerKind::MaxReduce => ("max_reduce", json!({}), None, None),
        LayerKind::Mask { zeroed } => ("mask", json!({ "zeroed": zeroed }), None, None),
    };
    let mut obj = json!({ "name": layer.name, "kind": kind, "hyper": hyper });
    if let Some(w) = weights {
        obj["weights"] = w;
    }
    if let Some(b) = bias {
        obj["bias"] = b;
    }
    obj
}

fn layer_from_json(v: &Value) -> Result<Layer> {
    let name = v
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::invalid("layer entry missing name"))?
        .to_string();
    let kind_tag = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::invalid(format!("layer `{}` missing kind", name)))?;
    let hyper = v.get("hyper").cloned().unwrap_or_else(|| json!({}));
    let get_tensor = |field: &str| -> Result<Tensor> {
        tensor_from_json(
            v.get(field)
                .ok_or_else(|| Error::invalid(format!("layer `{}` missing {}", name, field)))?,
            &format!("layer `{}` {}", name, field),
        )
    };
    let kind = match kind_tag {
        "dense" => {
            let weight = get_tensor("weights")?;
            let bias = get_tensor("bias")?;
            if weight.shape().len() != 2 || weight.shape()[0] != bias.len() {
                return Err(Error::shape(
                    format!("layer `{}` dense weights", name),
                    &[bias.len()],
                    weight.shape(),
                ));
            }
            LayerKind::Dense { weight, bias }
        }
        "conv2d" => {
            let weight = get_tensor("weights")?;
            let bias = get_tensor("bias")?;
            if weight.shape().len() != 4 || weight.shape()[0] != bias.len() {
                return Err(Error::shape(
                    format!("layer `{}` conv2d weights", name),
                    &[bias.len()],
                    weight.shape(),
                ));
            }
            LayerKind::Conv2d { weight, bias }
        }
        "maxpool2d" => LayerKind::MaxPool2d {
            size: serde_json::from_value(
                hyper
                    .get("size")
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("layer `{}` missing size", name)))?,
            )?,
        },
        "tanh" => LayerKind::Tanh,
        "relu" => LayerKind::Relu,
        "leaky_relu" => LayerKind::LeakyRelu {
            alpha: serde_json::from_value(
                hyper
                    .get("alpha")
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("layer `{}` missing alpha", name)))?,
            )?,
        },
        "softmax" => LayerKind::Softmax,
        "monomial" => LayerKind::Monomial {
            exponents: serde_json::from_value(
                hyper
                    .get("exponents")
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("layer `{}` missing exponents", name)))?,
            )?,
            coeffs: serde_json::from_value(
                hyper
                    .get("coeffs")
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("layer `{}` missing coeffs", name)))?,
            )?,
        },
        "max_reduce" => LayerKind::MaxReduce,
        "mask" => LayerKind::Mask {
            zeroed: serde_json::from_value(
                hyper
                    .get("zeroed")
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("layer `{}` missing zeroed", name)))?,
            )?,
        },
        other => return Err(Error::UnknownLayer(format!("{} (kind `{}`)", name, other))),
    };
    Ok(Layer::new(name, kind))
}

pub fn model_to_json(net: &Network) -> Value {
    let mut doc = json!({
        "format": FORMAT,
        "input_shape": net.input_shape(),
        "layers": net.layers().iter().map(layer_json).collect::<Vec<_>>(),
    });
    if let Some(db) = net.domain_box() {
        doc["domain_box"] = json!({ "a": db.a.data(), "b": db.b.data() });
    }
    doc
}

pub fn model_from_json(doc: &Value) -> Result<Network> {
    let format = doc.get("format").and_then(Value::as_str).unwrap_or("");
    if format != FORMAT {
        return Err(Error::FormatVersion(format.to_string()));
    }
    let input_shape: Vec<usize> = serde_json::from_value(
        doc.get("input_shape")
            .ok_or_else(|| Error::invalid("model missing input_shape"))?
            .clone(),
    )?;
    let layers = doc
        .get("layers")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::invalid("model missing layers array"))?
        .iter()
        .map(layer_from_json)
        .collect::<Result<Vec<_>>>()?;
    let domain_box = match doc.get("domain_box") {
        Some(db) => {
            let a: Vec<f64> = serde_json::from_value(
                db.get("a")
                    .ok_or_else(|| Error::invalid("domain_box missing a"))?
                    .clone(),
            )?;
            let b: Vec<f64> = serde_json::from_value(
                db.get("b")
                    .ok_or_else(|| Error::invalid("domain_box missing b"))?
                    .clone(),
            )?;
            Some(DomainBox::new(
                Tensor::new(input_shape.clone(), a)?,
                Tensor::new(input_shape.clone(), b)?,
            )?)
        }
        None => None,
    };
    Network::new(input_shape, layers, domain_box)
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&model_to_json(net))?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Network> {
    let doc: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    model_from_json(&doc)
}
