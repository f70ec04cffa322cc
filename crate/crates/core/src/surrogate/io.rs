//! Versioned JSON weight files with explicit shapes and row-major data.

use super::nn::*;
use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixDoc {
    fn from(a: &Array2<f64>) -> MatrixDoc {
        MatrixDoc {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }

    fn to_array(&self) -> Result<Array2<f64>, NnError> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| NnError::Io(e.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ConvDoc {
    kernel: usize,
    in_channels: usize,
    out_channels: usize,
    data: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DenseDoc {
    w: MatrixDoc,
    b: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsDoc {
    version: u32,
    num_buses: usize,
    horizon: usize,
    x_dim: usize,
    feature_dim: usize,
    j_min: f64,
    j_max: f64,
    zeta_min: Vec<f64>,
    zeta_max: Vec<f64>,
    gcn: Vec<MatrixDoc>,
    layer_norm_gain: Vec<f64>,
    layer_norm_bias: Vec<f64>,
    positional: MatrixDoc,
    temporal: Vec<ConvDoc>,
    decoder: Vec<DenseDoc>,
    main: Vec<DenseDoc>,
}

fn dense_docs(stack: &MlpStack) -> Vec<DenseDoc> {
    stack
        .layers
        .iter()
        .map(|l| DenseDoc {
            w: MatrixDoc::from(&l.w),
            b: l.b.to_vec(),
        })
        .collect()
}

fn dense_stack(docs: &[DenseDoc]) -> Result<MlpStack, NnError> {
    let mut layers = Vec::with_capacity(docs.len());
    for d in docs {
        layers.push(DenseLayer {
            w: d.w.to_array()?,
            b: Array1::from_vec(d.b.clone()),
        });
    }
    if layers.is_empty() {
        return Err(NnError::Io("empty dense stack".into()));
    }
    Ok(MlpStack { layers })
}

pub fn weights_to_json(w: &SurrogateWeights) -> String {
    let doc = WeightsDoc {
        version: 1,
        num_buses: w.num_buses,
        horizon: w.horizon,
        x_dim: w.x_dim,
        feature_dim: w.feature_dim,
        j_min: w.j_min,
        j_max: w.j_max,
        zeta_min: w.zeta_min.clone(),
        zeta_max: w.zeta_max.clone(),
        gcn: w.gcn.iter().map(|l| MatrixDoc::from(&l.w)).collect(),
        layer_norm_gain: w.layer_norm.gain.to_vec(),
        layer_norm_bias: w.layer_norm.bias.to_vec(),
        positional: MatrixDoc::from(&w.positional),
        temporal: w
            .temporal
            .iter()
            .map(|l| ConvDoc {
                kernel: l.kernel.shape()[0],
                in_channels: l.kernel.shape()[1],
                out_channels: l.kernel.shape()[2],
                data: l.kernel.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect(),
        decoder: dense_docs(&w.decoder),
        main: dense_docs(&w.main),
    };
    serde_json::to_string_pretty(&doc).expect("weights serialize")
}

pub fn weights_from_json(text: &str) -> Result<SurrogateWeights, NnError> {
    let doc: WeightsDoc = serde_json::from_str(text).map_err(|e| NnError::Io(e.to_string()))?;
    if doc.version != 1 {
        return Err(NnError::Io(format!("unsupported weights version {}", doc.version)));
    }
    let mut gcn = Vec::with_capacity(doc.gcn.len());
    for m in &doc.gcn {
        gcn.push(GcnLayer { w: m.to_array()? });
    }
    let mut temporal = Vec::with_capacity(doc.temporal.len());
    for c in &doc.temporal {
        let kernel =
            Array3::from_shape_vec((c.kernel, c.in_channels, c.out_channels), c.data.clone())
                .map_err(|e| NnError::Io(e.to_string()))?;
        temporal.push(TemporalConvLayer {
            kernel,
            bias: Array1::from_vec(c.bias.clone()),
        });
    }
    let w = SurrogateWeights {
        gcn,
        layer_norm: LayerNorm {
            gain: Array1::from_vec(doc.layer_norm_gain),
            bias: Array1::from_vec(doc.layer_norm_bias),
        },
        positional: doc.positional.to_array()?,
        temporal,
        decoder: dense_stack(&doc.decoder)?,
        main: dense_stack(&doc.main)?,
        j_min: doc.j_min,
        j_max: doc.j_max,
        zeta_min: doc.zeta_min,
        zeta_max: doc.zeta_max,
        num_buses: doc.num_buses,
        horizon: doc.horizon,
        x_dim: doc.x_dim,
        feature_dim: doc.feature_dim,
    };
    if w.j_max <= w.j_min {
        return Err(NnError::Io("j_max must exceed j_min".into()));
    }
    if w.zeta_min.len() != w.embedding_dim() || w.zeta_max.len() != w.embedding_dim() {
        return Err(NnError::Io(
            "embedding range length does not match decoder output".into(),
        ));
    }
    if w.main.input_dim() != w.embedding_dim() + w.x_dim {
        return Err(NnError::Io(
            "main input dimension does not match embedding + x layout".into(),
        ));
    }
    Ok(w)
}

pub fn save_weights(w: &SurrogateWeights, path: impl AsRef<Path>) -> Result<(), NnError> {
    std::fs::write(path, weights_to_json(w) + "\n").map_err(|e| NnError::Io(e.to_string()))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<SurrogateWeights, NnError> {
    let text = std::fs::read_to_string(path).map_err(|e| NnError::Io(e.to_string()))?;
    weights_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_roundtrip_bitwise() {
        let mut w = SurrogateWeights::init(&ArchConfig::desk(), 5, 5, 8, 9, 11).unwrap();
        w.j_min = 1.25;
        w.j_max = 9.5;
        w.zeta_min = vec![-0.5; w.embedding_dim()];
        w.zeta_max = vec![1.5; w.embedding_dim()];
        let text = weights_to_json(&w);
        let back = weights_from_json(&text).unwrap();
        assert_eq!(w, back);
        // Serialization is deterministic byte-for-byte.
        assert_eq!(text, weights_to_json(&back));
    }

    #[test]
    fn malformed_weights_rejected() {
        assert!(weights_from_json("{").is_err());
        let w = SurrogateWeights::init(&ArchConfig::desk(), 5, 5, 8, 9, 11).unwrap();
        let text = weights_to_json(&w).replace("\"version\": 1", "\"version\": 99");
        assert!(weights_from_json(&text).is_err());
    }
}
