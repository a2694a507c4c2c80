//! The Siamese network: one shared extractor `f` and a prediction head `g`.
//!
//! Source and target branches are not two networks kept in sync. There is
//! one parameter list; [`SiameseModel::bind`] puts it on a graph once and
//! every call to [`BoundModel::embed`] reads the same leaves, whichever
//! domain the batch came from.
//!
//! Layout (default widths in brackets):
//!
//! ```text
//! f: [conv -> relu ->] (affine -> relu)* [256, 64]  extractor
//!    affine -> relu -> affine                   [32, 16]  branch FCs
//! g: affine -> relu -> affine -> relu -> affine -> sigmoid  [8, 4, 1]
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::seed;
use crate::tensor::Tensor;

/// Optional convolutional front end (needs the `conv` feature).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct ConvConfig {
    pub channels: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    /// Flattened pixel count of one input image.
    pub input_dim: usize,
    /// `(height, width)`; required in conv mode, where `height * width == input_dim`.
    pub image_shape: Option<(usize, usize)>,
    pub conv: Option<ConvConfig>,
    pub extractor_hidden: Vec<usize>,
    pub branch_hidden: usize,
    pub embed_dim: usize,
    pub head_hidden: [usize; 2],
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 256,
            image_shape: None,
            conv: None,
            extractor_hidden: vec![256, 64],
            branch_hidden: 32,
            embed_dim: 16,
            head_hidden: [8, 4],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Conv,
    Extractor,
    Branch,
    Head,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerSpec {
    section: Section,
    name: String,
    weight_shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = self
            .extractor_hidden
            .iter()
            .chain([&self.input_dim, &self.branch_hidden, &self.embed_dim])
            .chain(&self.head_hidden);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::config("layer widths must be at least 1"));
        }
        if let Some(conv) = self.conv {
            if !cfg!(feature = "conv") {
                return Err(Error::config("conv extractor requires the `conv` feature"));
            }
            let (h, w) = self
                .image_shape
                .ok_or_else(|| Error::config("conv extractor needs image_shape"))?;
            if h * w != self.input_dim {
                return Err(Error::config(format!(
                    "image_shape {h}x{w} does not match input_dim {}",
                    self.input_dim
                )));
            }
            if conv.channels == 0 || conv.kernel == 0 || conv.kernel > h || conv.kernel > w {
                return Err(Error::config("conv channels/kernel out of range"));
            }
        }
        Ok(())
    }

    fn layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut width = self.input_dim;
        if let (Some(conv), Some((h, w))) = (self.conv, self.image_shape) {
            let k = conv.kernel;
            layers.push(LayerSpec {
                section: Section::Conv,
                name: "conv".into(),
                weight_shape: vec![conv.channels, 1, k, k],
                fan_in: k * k,
                fan_out: conv.channels * k * k,
            });
            width = conv.channels * (h - k + 1) * (w - k + 1);
        }
        let mut dense = |section: Section, prefix: &str, outs: &[usize], width: &mut usize| {
            for (i, &o) in outs.iter().enumerate() {
                layers.push(LayerSpec {
                    section,
                    name: format!("{prefix}.{i}"),
                    weight_shape: vec![*width, o],
                    fan_in: *width,
                    fan_out: o,
                });
                *width = o;
            }
        };
        dense(Section::Extractor, "extractor", &self.extractor_hidden, &mut width);
        dense(Section::Branch, "branch", &[self.branch_hidden, self.embed_dim], &mut width);
        dense(
            Section::Head,
            "head",
            &[self.head_hidden[0], self.head_hidden[1], 1],
            &mut width,
        );
        layers
    }

    /// Total number of scalar parameters implied by the layer shapes.
    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weight_shape.iter().product::<usize>() + bias_len(l))
            .sum()
    }
}

fn bias_len(l: &LayerSpec) -> usize {
    match l.section {
        Section::Conv => l.weight_shape[0],
        _ => l.weight_shape[1],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseModel {
    config: ModelConfig,
    layers: Vec<LayerSpec>,
    params: Vec<Param>,
}

impl SiameseModel {
    /// Glorot-uniform weights, zero biases, fully determined by `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layers = config.layers();
        let mut rng = seed::rng(config.seed);
        let mut params = Vec::with_capacity(layers.len() * 2);
        for l in &layers {
            let a = libm::sqrt(6.0 / (l.fan_in + l.fan_out) as f64);
            let n: usize = l.weight_shape.iter().product();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-a..a)).collect();
            params.push(Param {
                name: format!("{}.weight", l.name),
                value: Tensor::new(l.weight_shape.clone(), w)?,
            });
            params.push(Param {
                name: format!("{}.bias", l.name),
                value: Tensor::zeros(vec![bias_len(l)]),
            });
        }
        Ok(Self {
            config,
            layers,
            params,
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: Vec<Param>) -> Result<Self> {
        let mut model = Self::init(config)?;
        if params.len() != model.params.len() {
            return Err(Error::data(format!(
                "expected {} parameter blocks, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for (slot, p) in model.params.iter_mut().zip(params) {
            if slot.name != p.name || slot.value.shape() != p.value.shape() {
                return Err(Error::data(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    p.name,
                    p.value.shape(),
                    slot.name,
                    slot.value.shape()
                )));
            }
            *slot = p;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| &mut p.value)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Places every parameter on `g` as a gradient-tracked leaf.
    pub fn bind(&self, g: &mut Graph) -> BoundModel<'_> {
        let vars = self.params.iter().map(|p| g.param(p.value.clone())).collect();
        BoundModel { model: self, vars }
    }

    /// Uses existing leaves of `g` as the parameters, e.g. ones created by
    /// [`grad_check`](crate::gradcheck::grad_check). Their values may differ
    /// from the model's, their shapes may not.
    pub fn bind_vars(&self, g: &Graph, vars: &[Var]) -> Result<BoundModel<'_>> {
        if vars.len() != self.params.len() {
            return Err(Error::contract(format!(
                "model has {} parameters, got {} vars",
                self.params.len(),
                vars.len()
            )));
        }
        for (p, &v) in self.params.iter().zip(vars) {
            if g.value(v).shape() != p.value.shape() {
                return Err(Error::Dimension {
                    op: "bind_vars",
                    lhs: g.value(v).shape().to_vec(),
                    rhs: p.value.shape().to_vec(),
                });
            }
        }
        Ok(BoundModel {
            model: self,
            vars: vars.to_vec(),
        })
    }

    /// Embeddings `f(x)` for a `[B, input_dim]` batch.
    pub fn embed_values(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.input(x.clone());
        let f = bound.embed(&mut g, xv)?;
        Ok(g.value(f).clone())
    }

    /// Positive-class probabilities `g(f(x))`, one per row.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.input(x.clone());
        let f = bound.embed(&mut g, xv)?;
        let p = bound.predict(&mut g, f)?;
        Ok(g.value(p).data().to_vec())
    }
}

/// A model whose parameters live on a particular graph.
#[derive(Debug, Clone)]
pub struct BoundModel<'m> {
    model: &'m SiameseModel,
    vars: Vec<Var>,
}

impl BoundModel<'_> {
    /// Leaves in the same order as [`SiameseModel::params`].
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn layer_vars(&self, section: Section) -> impl Iterator<Item = (Var, Var)> + '_ {
        self.model
            .layers
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.section == section)
            .map(|(i, _)| (self.vars[2 * i], self.vars[2 * i + 1]))
    }

    /// Shared feature extractor plus branch FCs. The same leaves serve the
    /// source and target branches.
    pub fn embed(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let cfg = &self.model.config;
        let xt = g.value(x);
        let rows = match xt.dims2() {
            Some((r, c)) if c == cfg.input_dim => r,
            _ => {
                return Err(Error::Dimension {
                    op: "embed",
                    lhs: xt.shape().to_vec(),
                    rhs: vec![cfg.input_dim],
                })
            }
        };
        let mut h = x;
        #[cfg(feature = "conv")]
        if let (Some(_), Some((ih, iw))) = (cfg.conv, cfg.image_shape) {
            let (k, b) = self.layer_vars(Section::Conv).next().expect("conv layer");
            let img = g.reshape(h, &[rows, 1, ih, iw])?;
            let c = g.conv2d(img, k, b)?;
            let c = g.relu(c);
            let flat = g.value(c).numel() / rows;
            h = g.reshape(c, &[rows, flat])?;
        }
        let _ = rows;
        for (w, b) in self.layer_vars(Section::Extractor) {
            let a = g.affine(h, w, b)?;
            h = g.relu(a);
        }
        let mut branch = self.layer_vars(Section::Branch);
        let (w0, b0) = branch.next().expect("branch layer 0");
        let (w1, b1) = branch.next().expect("branch layer 1");
        let a = g.affine(h, w0, b0)?;
        let a = g.relu(a);
        g.affine(a, w1, b1)
    }

    /// Prediction head: three affine layers ending in a sigmoid unit.
    pub fn predict(&self, g: &mut Graph, features: Var) -> Result<Var> {
        let embed_dim = self.model.config.embed_dim;
        let ft = g.value(features);
        if !matches!(ft.dims2(), Some((_, c)) if c == embed_dim) {
            return Err(Error::Dimension {
                op: "predict",
                lhs: ft.shape().to_vec(),
                rhs: vec![embed_dim],
            });
        }
        let head: Vec<(Var, Var)> = self.layer_vars(Section::Head).collect();
        let mut h = features;
        for (i, &(w, b)) in head.iter().enumerate() {
            h = g.affine(h, w, b)?;
            if i + 1 < head.len() {
                h = g.relu(h);
            }
        }
        Ok(g.sigmoid(h))
    }
}
