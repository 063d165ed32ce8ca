//! Workload descriptions and their lowering to GEMM operations.
//!
//! A workload file is TOML with a `name` and an ordered `layers` array. Each
//! layer names its `kind`, a kind-specific `dims` table, an optional list of
//! trailing non-GEMM operations and a `batch` count. Padding is never implied:
//! `in_h`/`in_w` of a convolution already include it.
//!
//! Lowering rules:
//!
//! | kind                | rows_w     | cols_w               | n_vec                 |
//! |---------------------|------------|----------------------|-----------------------|
//! | `conv2d`            | out_ch     | in_ch·k_h·k_w        | batch·out_h·out_w     |
//! | `dense`             | out        | in                   | batch                 |
//! | `lstm_cell` (×seq)  | 4·hidden   | input+hidden         | batch                 |
//! | `attention_proj`    | d_proj     | d_model              | batch·seq_len         |
//! | `elementwise_block` | -          | -                    | -                     |
//!
//! Non-GEMM element counts in the file are per inference; lowering multiplies
//! them by the layer batch. An `elementwise_block` produces no GEMM and hands its
//! operations to the preceding GEMM.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, WorkloadError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonGemmTag {
    Relu,
    Gelu,
    Softmax,
    Sigmoid,
    Tanh,
    Layernorm,
    Maxpool,
    Avgpool,
    Add,
    Mul,
    Exp,
    Div,
    Sqrt,
    MaxReduce,
}

impl NonGemmTag {
    pub const ALL: [NonGemmTag; 14] = [
        NonGemmTag::Relu,
        NonGemmTag::Gelu,
        NonGemmTag::Softmax,
        NonGemmTag::Sigmoid,
        NonGemmTag::Tanh,
        NonGemmTag::Layernorm,
        NonGemmTag::Maxpool,
        NonGemmTag::Avgpool,
        NonGemmTag::Add,
        NonGemmTag::Mul,
        NonGemmTag::Exp,
        NonGemmTag::Div,
        NonGemmTag::Sqrt,
        NonGemmTag::MaxReduce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NonGemmTag::Relu => "relu",
            NonGemmTag::Gelu => "gelu",
            NonGemmTag::Softmax => "softmax",
            NonGemmTag::Sigmoid => "sigmoid",
            NonGemmTag::Tanh => "tanh",
            NonGemmTag::Layernorm => "layernorm",
            NonGemmTag::Maxpool => "maxpool",
            NonGemmTag::Avgpool => "avgpool",
            NonGemmTag::Add => "add",
            NonGemmTag::Mul => "mul",
            NonGemmTag::Exp => "exp",
            NonGemmTag::Div => "div",
            NonGemmTag::Sqrt => "sqrt",
            NonGemmTag::MaxReduce => "max_reduce",
        }
    }
}

impl fmt::Display for NonGemmTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One non-GEMM operation applied to `elems` elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonGemmOp {
    pub tag: NonGemmTag,
    pub elems: u64,
}

impl NonGemmOp {
    pub fn new(tag: NonGemmTag, elems: u64) -> Self {
        Self { tag, elems }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvDims {
    pub in_ch: u64,
    pub out_ch: u64,
    pub kernel_h: u64,
    pub kernel_w: u64,
    pub stride: u64,
    pub in_h: u64,
    pub in_w: u64,
}

impl ConvDims {
    pub fn out_h(&self) -> u64 {
        (self.in_h - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> u64 {
        (self.in_w - self.kernel_w) / self.stride + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseDims {
    pub in_features: u64,
    pub out_features: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmDims {
    pub hidden: u64,
    pub input: u64,
    pub seq_len: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionDims {
    pub d_model: u64,
    pub d_proj: u64,
    pub seq_len: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindTag {
    Conv2d,
    Dense,
    LstmCell,
    AttentionProj,
    ElementwiseBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d(ConvDims),
    Dense(DenseDims),
    LstmCell(LstmDims),
    AttentionProj(AttentionDims),
    ElementwiseBlock,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv2d(_) => "conv2d",
            LayerKind::Dense(_) => "dense",
            LayerKind::LstmCell(_) => "lstm_cell",
            LayerKind::AttentionProj(_) => "attention_proj",
            LayerKind::ElementwiseBlock => "elementwise_block",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Per-inference non-GEMM operations, in execution order.
    pub nongemm: Vec<NonGemmOp>,
    pub batch: u64,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, batch: u64) -> Self {
        Self {
            kind,
            nongemm: Vec::new(),
            batch,
        }
    }

    pub fn with_nongemm(mut self, ops: Vec<NonGemmOp>) -> Self {
        self.nongemm = ops;
        self
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.batch == 0 {
            return Err("batch must be >= 1".into());
        }
        if let Some(op) = self.nongemm.iter().find(|op| op.elems == 0) {
            return Err(format!("non-GEMM op {} has elems = 0 (must be >= 1)", op.tag));
        }
        let positive = |fields: &[(&str, u64)]| -> std::result::Result<(), String> {
            match fields.iter().find(|(_, v)| *v == 0) {
                Some((name, _)) => Err(format!("dimension {name} must be >= 1")),
                None => Ok(()),
            }
        };
        match &self.kind {
            LayerKind::Conv2d(d) => {
                positive(&[
                    ("in_ch", d.in_ch),
                    ("out_ch", d.out_ch),
                    ("kernel_h", d.kernel_h),
                    ("kernel_w", d.kernel_w),
                    ("stride", d.stride),
                    ("in_h", d.in_h),
                    ("in_w", d.in_w),
                ])?;
                for (axis, input, kernel) in [("h", d.in_h, d.kernel_h), ("w", d.in_w, d.kernel_w)] {
                    if input < kernel {
                        return Err(format!("in_{axis} = {input} is smaller than kernel_{axis} = {kernel}"));
                    }
                    if (input - kernel) % d.stride != 0 {
                        return Err(format!(
                            "stride {} does not divide in_{axis} - kernel_{axis} = {}; output size is not an integer",
                            d.stride,
                            input - kernel
                        ));
                    }
                }
                Ok(())
            }
            LayerKind::Dense(d) => positive(&[("in_features", d.in_features), ("out_features", d.out_features)]),
            LayerKind::LstmCell(d) => positive(&[("hidden", d.hidden), ("input", d.input), ("seq_len", d.seq_len)]),
            LayerKind::AttentionProj(d) => {
                positive(&[("d_model", d.d_model), ("d_proj", d.d_proj), ("seq_len", d.seq_len)])
            }
            LayerKind::ElementwiseBlock => Ok(()),
        }
    }

    /// Activation elements read by the layer for the whole batch.
    pub fn input_elems(&self) -> u64 {
        let per_sample = match &self.kind {
            LayerKind::Conv2d(d) => d.in_ch * d.in_h * d.in_w,
            LayerKind::Dense(d) => d.in_features,
            LayerKind::LstmCell(d) => d.seq_len * d.input,
            LayerKind::AttentionProj(d) => d.seq_len * d.d_model,
            LayerKind::ElementwiseBlock => 0,
        };
        per_sample * self.batch
    }

    /// Activation elements produced by the layer for the whole batch.
    pub fn output_elems(&self) -> u64 {
        let per_sample = match &self.kind {
            LayerKind::Conv2d(d) => d.out_ch * d.out_h() * d.out_w(),
            LayerKind::Dense(d) => d.out_features,
            LayerKind::LstmCell(d) => d.seq_len * d.hidden,
            LayerKind::AttentionProj(d) => d.seq_len * d.d_proj,
            LayerKind::ElementwiseBlock => 0,
        };
        per_sample * self.batch
    }

    pub fn has_gemm(&self) -> bool {
        !matches!(self.kind, LayerKind::ElementwiseBlock)
    }
}

/// One lowered matrix multiply: a `rows_w × cols_w` weight matrix applied to
/// `n_vec` input vectors, followed by `nongemm` on the output panel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmOp {
    pub rows_w: u64,
    pub cols_w: u64,
    pub n_vec: u64,
    pub source_layer: usize,
    pub nongemm: Vec<NonGemmOp>,
}

impl GemmOp {
    pub fn new(rows_w: u64, cols_w: u64, n_vec: u64, source_layer: usize) -> Self {
        Self {
            rows_w,
            cols_w,
            n_vec,
            source_layer,
            nongemm: Vec::new(),
        }
    }

    pub fn mac_count(&self) -> u64 {
        self.rows_w * self.cols_w * self.n_vec
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub rows_w: u64,
    pub cols_w: u64,
    pub n_vec: u64,
    pub m: u64,
    pub row_tiles: u64,
    pub col_tiles: u64,
    pub total_tiles: u64,
    pub vectors_per_tile: u64,
}

impl TilePlan {
    /// Rows of weight tile row-index `r` actually occupied by weights.
    pub fn tile_rows(&self, r: u64) -> u64 {
        debug_assert!(r < self.row_tiles);
        (self.rows_w - r * self.m).min(self.m)
    }

    pub fn tile_cols(&self, c: u64) -> u64 {
        debug_assert!(c < self.col_tiles);
        (self.cols_w - c * self.m).min(self.m)
    }

    /// Fraction of the `m × m` array holding real weights, averaged over tiles.
    pub fn occupancy(&self) -> f64 {
        (self.rows_w * self.cols_w) as f64 / (self.total_tiles * self.m * self.m) as f64
    }
}

/// Ceiling-division tiling of a GEMM onto an `m × m` array.
pub fn plan_tiles(gemm: &GemmOp, m: u64) -> TilePlan {
    assert!(m >= 1, "array size must be >= 1");
    let row_tiles = gemm.rows_w.div_ceil(m);
    let col_tiles = gemm.cols_w.div_ceil(m);
    TilePlan {
        rows_w: gemm.rows_w,
        cols_w: gemm.cols_w,
        n_vec: gemm.n_vec,
        m,
        row_tiles,
        col_tiles,
        total_tiles: row_tiles * col_tiles,
        vectors_per_tile: gemm.n_vec,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workload {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    name: String,
    layers: Vec<RawLayer>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    kind: KindTag,
    #[serde(default)]
    dims: Option<toml::Table>,
    #[serde(default)]
    nongemm: Vec<NonGemmOp>,
    #[serde(default = "default_batch")]
    batch: u64,
}

fn default_batch() -> u64 {
    1
}

impl Workload {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates a workload document; `origin` labels error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let parse_err = |message: String| WorkloadError::Parse {
            path: origin.to_string(),
            message,
        };
        let raw: RawWorkload = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let mut layers = Vec::with_capacity(raw.layers.len());
        for (index, layer) in raw.layers.into_iter().enumerate() {
            let dims = layer.dims.map(toml::Value::Table);
            let kind = match layer.kind {
                KindTag::ElementwiseBlock => LayerKind::ElementwiseBlock,
                tag => {
                    let dims = dims.ok_or_else(|| parse_err(format!("layer {index}: missing `dims` table")))?;
                    let ctx = |e: toml::de::Error| parse_err(format!("layer {index} ({tag:?}) dims: {e}"));
                    match tag {
                        KindTag::Conv2d => LayerKind::Conv2d(dims.try_into().map_err(ctx)?),
                        KindTag::Dense => LayerKind::Dense(dims.try_into().map_err(ctx)?),
                        KindTag::LstmCell => LayerKind::LstmCell(dims.try_into().map_err(ctx)?),
                        KindTag::AttentionProj => LayerKind::AttentionProj(dims.try_into().map_err(ctx)?),
                        KindTag::ElementwiseBlock => unreachable!(),
                    }
                }
            };
            layers.push(LayerSpec {
                kind,
                nongemm: layer.nongemm,
                batch: layer.batch,
            });
        }
        let workload = Workload { name: raw.name, layers };
        workload.validate()?;
        Ok(workload)
    }

    pub fn validate(&self) -> Result<()> {
        for (index, layer) in self.layers.iter().enumerate() {
            layer.validate().map_err(|reason| WorkloadError::Validation {
                layer: index,
                kind: layer.kind.name().into(),
                reason,
            })?;
        }
        match self.layers.iter().position(LayerSpec::has_gemm) {
            None => Err(WorkloadError::Validation {
                layer: 0,
                kind: "workload".into(),
                reason: "workload contains no GEMM layer".into(),
            }
            .into()),
            Some(first) if first > 0 => Err(WorkloadError::Validation {
                layer: 0,
                kind: "elementwise_block".into(),
                reason: "elementwise_block has no preceding GEMM layer to attach to".into(),
            }
            .into()),
            Some(_) => Ok(()),
        }
    }

    /// Same workload with every layer's batch set to `batch`.
    pub fn with_batch(&self, batch: u64) -> Workload {
        let mut out = self.clone();
        for layer in &mut out.layers {
            layer.batch = batch;
        }
        out
    }

    /// Batch of the first GEMM layer; bundled workloads use a uniform batch.
    pub fn batch(&self) -> u64 {
        self.layers.iter().find(|l| l.has_gemm()).map_or(1, |l| l.batch)
    }

    pub fn lower(&self) -> Vec<GemmOp> {
        lower_to_gemms(&self.layers)
    }

    /// Elements of the network input for the whole batch.
    pub fn input_elems(&self) -> u64 {
        self.layers.iter().find(|l| l.has_gemm()).map_or(0, LayerSpec::input_elems)
    }
}

/// LSTM gate nonlinearities and the cell-state update for one time step.
fn lstm_step_ops(hidden: u64, batch: u64) -> Vec<NonGemmOp> {
    let n = hidden * batch;
    use NonGemmTag::*;
    vec![
        NonGemmOp::new(Sigmoid, n), // input gate
        NonGemmOp::new(Sigmoid, n), // forget gate
        NonGemmOp::new(Sigmoid, n), // output gate
        NonGemmOp::new(Tanh, n),    // candidate
        NonGemmOp::new(Mul, n),     // f * c
        NonGemmOp::new(Mul, n),     // i * g
        NonGemmOp::new(Add, n),     // c'
        NonGemmOp::new(Tanh, n),
        NonGemmOp::new(Mul, n), // h' = o * tanh(c')
    ]
}

fn scaled(ops: &[NonGemmOp], batch: u64) -> impl Iterator<Item = NonGemmOp> + '_ {
    ops.iter().map(move |op| NonGemmOp::new(op.tag, op.elems * batch))
}

/// Lowers validated layers to GEMMs in execution order.
pub fn lower_to_gemms(layers: &[LayerSpec]) -> Vec<GemmOp> {
    let mut gemms: Vec<GemmOp> = Vec::new();
    for (index, layer) in layers.iter().enumerate() {
        let b = layer.batch;
        match &layer.kind {
            LayerKind::Conv2d(d) => {
                let mut g = GemmOp::new(d.out_ch, d.in_ch * d.kernel_h * d.kernel_w, b * d.out_h() * d.out_w(), index);
                g.nongemm.extend(scaled(&layer.nongemm, b));
                gemms.push(g);
            }
            LayerKind::Dense(d) => {
                let mut g = GemmOp::new(d.out_features, d.in_features, b, index);
                g.nongemm.extend(scaled(&layer.nongemm, b));
                gemms.push(g);
            }
            LayerKind::AttentionProj(d) => {
                let mut g = GemmOp::new(d.d_proj, d.d_model, b * d.seq_len, index);
                g.nongemm.extend(scaled(&layer.nongemm, b));
                gemms.push(g);
            }
            LayerKind::LstmCell(d) => {
                for step in 0..d.seq_len {
                    let mut g = GemmOp::new(4 * d.hidden, d.input + d.hidden, b, index);
                    g.nongemm = lstm_step_ops(d.hidden, b);
                    if step + 1 == d.seq_len {
                        g.nongemm.extend(scaled(&layer.nongemm, b));
                    }
                    gemms.push(g);
                }
            }
            LayerKind::ElementwiseBlock => {
                if let Some(prev) = gemms.last_mut() {
                    prev.nongemm.extend(scaled(&layer.nongemm, b));
                }
            }
        }
    }
    gemms
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(in_ch: u64, out_ch: u64, k: u64, stride: u64, in_hw: u64) -> LayerKind {
        LayerKind::Conv2d(ConvDims {
            in_ch,
            out_ch,
            kernel_h: k,
            kernel_w: k,
            stride,
            in_h: in_hw,
            in_w: in_hw,
        })
    }

    #[test]
    fn minimal_dense_file() {
        let text = r#"
            name = "tiny"
            [[layers]]
            kind = "dense"
            dims = { in_features = 4, out_features = 4 }
            batch = 1
        "#;
        let w = Workload::parse(text, "tiny").unwrap();
        assert_eq!(w.layers.len(), 1);
        assert!(matches!(w.layers[0].kind, LayerKind::Dense(_)));
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let text = r#"
            name = "bad"
            [[layers]]
            kind = "pooling3d"
            dims = { in_features = 4, out_features = 4 }
        "#;
        let err = Workload::parse(text, "bad").unwrap_err().to_string();
        assert!(err.contains("pooling3d"), "{err}");
    }

    #[test]
    fn parse_error_reports_field() {
        let text = r#"
            name = "bad"
            [[layers]]
            kind = "conv2d"
            dims = { in_ch = 3, out_ch = 2, kernel_h = 3, kernel_w = 3, in_h = 5, in_w = 5 }
        "#;
        let err = Workload::parse(text, "bad").unwrap_err().to_string();
        assert!(err.contains("stride"), "{err}");
        assert!(err.contains("layer 0"), "{err}");
    }

    #[test]
    fn stride_must_divide() {
        let layer = LayerSpec::new(conv(3, 8, 3, 3, 8), 1);
        let err = layer.validate().unwrap_err();
        assert!(err.contains("stride 3"), "{err}");
        let w = Workload {
            name: "x".into(),
            layers: vec![layer],
        };
        assert!(matches!(
            w.validate(),
            Err(Error::Workload(WorkloadError::Validation { layer: 0, .. }))
        ));
    }

    #[test]
    fn zero_dimension_rejected() {
        let layer = LayerSpec::new(
            LayerKind::Dense(DenseDims {
                in_features: 0,
                out_features: 3,
            }),
            1,
        );
        assert!(layer.validate().unwrap_err().contains("in_features"));
        let zero_batch = LayerSpec::new(
            LayerKind::Dense(DenseDims {
                in_features: 2,
                out_features: 3,
            }),
            0,
        );
        assert!(zero_batch.validate().is_err());
    }

    #[test]
    fn leading_elementwise_block_rejected() {
        let w = Workload {
            name: "x".into(),
            layers: vec![
                LayerSpec::new(LayerKind::ElementwiseBlock, 1).with_nongemm(vec![NonGemmOp::new(NonGemmTag::Relu, 4)]),
                LayerSpec::new(conv(1, 1, 1, 1, 2), 1),
            ],
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn conv_lowering_matches_hand_im2col() {
        let layer = LayerSpec::new(conv(3, 2, 3, 1, 5), 1);
        let g = lower_to_gemms(&[layer]);
        assert_eq!(g.len(), 1);
        assert_eq!((g[0].rows_w, g[0].cols_w, g[0].n_vec), (2, 27, 9));
    }

    #[test]
    fn dense_lowering() {
        let layer = LayerSpec::new(
            LayerKind::Dense(DenseDims {
                in_features: 128,
                out_features: 128,
            }),
            256,
        );
        let g = lower_to_gemms(&[layer]);
        assert_eq!((g[0].rows_w, g[0].cols_w, g[0].n_vec), (128, 128, 256));
    }

    #[test]
    fn lstm_lowering_fuses_gates() {
        let layer = LayerSpec::new(
            LayerKind::LstmCell(LstmDims {
                hidden: 8,
                input: 8,
                seq_len: 2,
            }),
            1,
        );
        let g = lower_to_gemms(&[layer]);
        assert_eq!(g.len(), 2);
        for step in &g {
            assert_eq!((step.rows_w, step.cols_w, step.n_vec), (32, 16, 1));
            let gates: Vec<_> = step.nongemm[..4].iter().map(|op| op.tag).collect();
            assert_eq!(
                gates,
                [NonGemmTag::Sigmoid, NonGemmTag::Sigmoid, NonGemmTag::Sigmoid, NonGemmTag::Tanh]
            );
            assert!(step.nongemm.iter().any(|op| op.tag == NonGemmTag::Add));
            assert!(step.nongemm.iter().any(|op| op.tag == NonGemmTag::Mul));
        }
    }

    #[test]
    fn elementwise_attaches_to_predecessor() {
        let layers = vec![
            LayerSpec::new(conv(1, 4, 1, 1, 2), 2),
            LayerSpec::new(LayerKind::ElementwiseBlock, 2).with_nongemm(vec![NonGemmOp::new(NonGemmTag::Maxpool, 16)]),
        ];
        let g = lower_to_gemms(&layers);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].nongemm, vec![NonGemmOp::new(NonGemmTag::Maxpool, 32)]);
    }

    #[test]
    fn tile_plan_examples() {
        let p = plan_tiles(&GemmOp::new(128, 128, 1, 0), 128);
        assert_eq!(p.total_tiles, 1);
        let p = plan_tiles(&GemmOp::new(300, 200, 1, 0), 128);
        assert_eq!((p.row_tiles, p.col_tiles, p.total_tiles), (3, 2, 6));
        let p = plan_tiles(&GemmOp::new(1, 1, 1, 0), 128);
        assert_eq!(p.total_tiles, 1);
        assert_eq!(p.tile_rows(0), 1);
    }
}
