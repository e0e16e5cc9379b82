//! JSON checkpoints for [`ToyModel`].
//!
//! Every number is stored as a decimal string (shortest representation that
//! parses back to the same `f64`), so parameters round-trip bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::nn::{Dense, LayerNormParams, ToyModel};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub input: usize,
    pub hidden: usize,
    /// Input width of dense2; differs from `hidden` when the predictor is expanded.
    pub predictor: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DenseJson {
    #[serde(rename = "W")]
    w: Vec<Vec<String>>,
    b: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LnJson {
    gamma: Vec<String>,
    beta: Vec<String>,
    eps: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointJson {
    schema_version: u32,
    widths: Widths,
    dense1: DenseJson,
    ln: LnJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expand: Option<DenseJson>,
    dense2: DenseJson,
}

fn enc<T: Scalar>(v: T) -> String {
    format!("{:?}", v.as_f64())
}

fn dec<T: Scalar>(s: &str) -> Result<T> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Parse(format!("checkpoint: `{s}` is not a number")))?;
    Ok(T::from_f64_lossy(v))
}

fn enc_vec<T: Scalar>(v: &[T]) -> Vec<String> {
    v.iter().map(|&x| enc(x)).collect()
}

fn dec_vec<T: Scalar>(v: &[String]) -> Result<Vec<T>> {
    v.iter().map(|s| dec(s)).collect()
}

impl DenseJson {
    fn from_dense<T: Scalar>(d: &Dense<T>) -> Self {
        Self {
            w: d.weight.iter_rows().map(enc_vec).collect(),
            b: enc_vec(&d.bias),
        }
    }

    fn to_dense<T: Scalar>(&self, name: &str) -> Result<Dense<T>> {
        let rows = self
            .w
            .iter()
            .map(|r| dec_vec(r))
            .collect::<Result<Vec<Vec<T>>>>()?;
        ensure!(!rows.is_empty(), "checkpoint: {name}.W is empty");
        let weight = Matrix::from_rows(&rows)
            .map_err(|e| Error::Parse(format!("checkpoint: {name}.W: {e}")))?;
        let bias = dec_vec(&self.b)?;
        ensure!(
            bias.len() == weight.rows(),
            "checkpoint: {name}.b has {} entries, W has {} rows",
            bias.len(),
            weight.rows()
        );
        Ok(Dense { weight, bias })
    }
}

pub fn to_json<T: Scalar>(model: &ToyModel<T>) -> Result<String> {
    model.validate()?;
    let doc = CheckpointJson {
        schema_version: SCHEMA_VERSION,
        widths: Widths {
            input: model.input_width(),
            hidden: model.hidden_width(),
            predictor: model.dense2.input_width(),
            classes: model.num_classes(),
        },
        dense1: DenseJson::from_dense(&model.dense1),
        ln: LnJson {
            gamma: enc_vec(&model.ln.gamma),
            beta: enc_vec(&model.ln.beta),
            eps: enc(model.ln.eps),
        },
        expand: model.expand.as_ref().map(DenseJson::from_dense),
        dense2: DenseJson::from_dense(&model.dense2),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: Scalar>(text: &str) -> Result<ToyModel<T>> {
    let doc: CheckpointJson = serde_json::from_str(text)?;
    ensure!(
        doc.schema_version == SCHEMA_VERSION,
        "checkpoint: unsupported schema version {}",
        doc.schema_version
    );
    let ln = LayerNormParams::from_parts(dec_vec(&doc.ln.gamma)?, dec_vec(&doc.ln.beta)?, dec(&doc.ln.eps)?)?;
    let expand = doc.expand.as_ref().map(|e| e.to_dense("expand")).transpose()?;
    let model = ToyModel::from_parts(doc.dense1.to_dense("dense1")?, ln, expand, doc.dense2.to_dense("dense2")?)?;
    let w = &doc.widths;
    ensure!(
        model.input_width() == w.input
            && model.hidden_width() == w.hidden
            && model.dense2.input_width() == w.predictor
            && model.num_classes() == w.classes,
        "checkpoint: declared widths do not match the stored parameters"
    );
    Ok(model)
}

pub fn save<T: Scalar>(model: &ToyModel<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<ToyModel<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_exact() {
        let mut m = ToyModel::<f64>::init(2, 8, 3, 5).unwrap();
        m.ln.gamma[0] = 0.1 + 0.2;
        m.ln.beta[3] = -1e-300;
        let back: ToyModel<f64> = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        m.expand_predictor(9).unwrap();
        let back: ToyModel<f64> = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn round_trip_f32() {
        let m = ToyModel::<f32>::init(2, 4, 2, 1).unwrap();
        let back: ToyModel<f32> = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn schema_fields() {
        let m = ToyModel::<f64>::init(2, 4, 2, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&to_json(&m).unwrap()).unwrap();
        for key in ["schema_version", "widths", "dense1", "ln", "dense2"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["dense1"]["W"][0][0].is_string());
        assert!(v["ln"]["eps"].is_string());
        assert!(v.get("expand").is_none());
    }

    #[test]
    fn rejects_bad_documents() {
        let m = ToyModel::<f64>::init(2, 4, 2, 1).unwrap();
        let text = to_json(&m).unwrap();
        assert!(from_json::<f64>(&text.replace("\"schema_version\": 1", "\"schema_version\": 2")).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["widths"]["hidden"] = 5.into();
        assert!(from_json::<f64>(&v.to_string()).is_err());
        v["widths"]["hidden"] = 4.into();
        v["ln"]["gamma"][0] = "abc".into();
        assert!(from_json::<f64>(&v.to_string()).is_err());
    }
}
