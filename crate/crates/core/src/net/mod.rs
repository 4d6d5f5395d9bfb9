//! The stereo network family: shared-weight feature towers, cost volumes, a
//! 3D encoder-decoder matching bottleneck, a 3D upsampler and a soft or
//! learned argmax aggregator.

mod config;

use indexmap::IndexMap;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::ops::{self, Direction};
use crate::autodiff::{Tape, Var};
use crate::disparity::DisparityMap;
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

pub use config::{ModelConfig, Variant};

/// One convolution or transposed convolution in the layer plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    /// 2 for image convolutions, 3 for volume convolutions.
    pub rank: usize,
    pub kernel: usize,
    pub stride: usize,
    pub cin: usize,
    pub cout: usize,
    pub transpose: bool,
}

impl ConvSpec {
    /// `[k.., cin, cout]` for convolutions; transposed kernels are stored as
    /// `[k.., cout, cin]`, the layout of the convolution they are adjoint to.
    pub fn kernel_shape(&self) -> Vec<usize> {
        let mut s = vec![self.kernel; self.rank];
        if self.transpose {
            s.extend([self.cout, self.cin]);
        } else {
            s.extend([self.cin, self.cout]);
        }
        s
    }

    pub fn weight_count(&self) -> usize {
        self.kernel.pow(self.rank as u32) * self.cin * self.cout + self.cout
    }

    fn fans(&self) -> (usize, usize) {
        let taps = self.kernel.pow(self.rank as u32);
        (taps * self.cin, taps * self.cout)
    }
}

/// Channel widths of the matching bottleneck.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Bottleneck {
    /// Per encoder stage: (width of the two stride-1 convs, width after the
    /// stride-2 conv).
    stages: Vec<(usize, usize)>,
    middle: usize,
}

impl Bottleneck {
    fn for_config(c: &ModelConfig) -> Self {
        let f = c.features;
        match c.variant {
            Variant::NoBottleneck => Self {
                stages: vec![],
                middle: f,
            },
            Variant::Small => Self {
                stages: vec![(f, 2 * f), (2 * f, 4 * f)],
                middle: 4 * f,
            },
            Variant::Tiny => Self {
                stages: vec![(f / 2, f), (f, 2 * f)],
                middle: 2 * f,
            },
            _ => Self {
                stages: vec![(f, 2 * f), (2 * f, 2 * f), (2 * f, 2 * f), (2 * f, 4 * f)],
                middle: 4 * f,
            },
        }
    }

    /// Channels reaching the upsampler.
    fn top(&self) -> usize {
        self.stages.first().map_or(self.middle, |s| s.0)
    }
}

fn conv_spec(name: String, rank: usize, kernel: usize, stride: usize, cin: usize, cout: usize) -> ConvSpec {
    ConvSpec {
        name,
        rank,
        kernel,
        stride,
        cin,
        cout,
        transpose: false,
    }
}

fn deconv_spec(name: String, cin: usize, cout: usize) -> ConvSpec {
    ConvSpec {
        transpose: true,
        ..conv_spec(name, 3, 3, 2, cin, cout)
    }
}

/// The ordered layer plan of a variant, one tower's worth of weights.
pub fn layer_plan(c: &ModelConfig) -> Vec<ConvSpec> {
    let f = c.features;
    let mut plan = vec![conv_spec("feat.1".into(), 2, 5, 2, c.channels, f)];
    if c.variant.residual_features() {
        for i in 2..=9 {
            plan.push(conv_spec(format!("feat.{i}a"), 2, 3, 1, f, f));
            plan.push(conv_spec(format!("feat.{i}b"), 2, 3, 1, f, f));
        }
        plan.push(conv_spec("feat.10".into(), 2, 3, 1, f, f));
    } else {
        for i in 2..=5 {
            plan.push(conv_spec(format!("feat.{i}"), 2, 3, 1, f, f));
        }
    }

    let volume_channels = if c.variant.uses_correlation() { 1 } else { 2 * f };
    let bn = Bottleneck::for_config(c);
    let mut cin = volume_channels;
    for (i, &(wa, wc)) in bn.stages.iter().enumerate() {
        let label = 12 + i;
        plan.push(conv_spec(format!("match.{label}a"), 3, 3, 1, cin, wa));
        plan.push(conv_spec(format!("match.{label}b"), 3, 3, 1, wa, wa));
        plan.push(conv_spec(format!("match.{label}c"), 3, 3, 2, wa, wc));
        cin = wc;
    }
    for label in [16, 17] {
        plan.push(conv_spec(format!("match.{label}"), 3, 3, 1, cin, bn.middle));
        cin = bn.middle;
    }
    for (k, &(wa, _)) in bn.stages.iter().rev().enumerate() {
        plan.push(deconv_spec(format!("match.{}", 18 + k), cin, wa));
        cin = wa;
    }
    plan.push(deconv_spec("upsample.22".into(), bn.top(), 1));
    if c.variant.uses_ml_argmax() {
        let d = c.max_disparity;
        for label in 24..=27 {
            plan.push(conv_spec(format!("argmax.{label}"), 2, 3, 1, d, d));
        }
        plan.push(conv_spec("argmax.28".into(), 2, 3, 1, d, 1));
    }
    plan
}

/// Weight count of a variant without allocating it.
pub fn parameter_count(c: &ModelConfig) -> usize {
    layer_plan(c).iter().map(ConvSpec::weight_count).sum()
}

/// Shape `[levels, H/2, W/2, channels]` of one cost volume.
pub fn cost_volume_shape(c: &ModelConfig) -> [usize; 4] {
    let ch = if c.variant.uses_correlation() { 1 } else { 2 * c.features };
    [c.max_disparity / 2, c.height / 2, c.width / 2, ch]
}

/// Layer label and output shape of every intermediate tensor, in order.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    enabled: bool,
    rows: Vec<(String, Vec<usize>)>,
}

impl ShapeTrace {
    pub fn enabled() -> Self {
        Self {
            enabled: true,
            rows: Vec::new(),
        }
    }

    pub fn disabled() -> Self {
        Self::default()
    }

    fn record(&mut self, label: impl Into<String>, shape: &[usize]) {
        if self.enabled {
            self.rows.push((label.into(), shape.to_vec()));
        }
    }

    pub fn rows(&self) -> &[(String, Vec<usize>)] {
        &self.rows
    }

    pub fn get(&self, label: &str) -> Option<&[usize]> {
        self.rows
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, s)| s.as_slice())
    }
}

/// Parameter variables bound to a tape, keyed by parameter name.
pub type Params<'t, T> = IndexMap<String, Var<'t, T>>;

/// Disparities in pixel units, `H×W`.
pub struct Prediction<'t, T: Scalar> {
    pub left: Var<'t, T>,
    pub right: Option<Var<'t, T>>,
}

#[derive(Debug, Clone)]
pub struct Model<T: Scalar = f32> {
    config: ModelConfig,
    plan: IndexMap<String, ConvSpec>,
    params: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Model<T> {
    /// Glorot-uniform kernels drawn from `seed`, zero biases.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = layer_plan(&config);
        let mut params = IndexMap::new();
        for spec in &plan {
            let (fan_in, fan_out) = spec.fans();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let shape = spec.kernel_shape();
            let kernel = Tensor::from_fn(&shape, |_| T::lit(dist.sample(&mut rng)));
            params.insert(format!("{}.w", spec.name), kernel);
            params.insert(format!("{}.b", spec.name), Tensor::zeros(&[spec.cout]));
        }
        Ok(Self {
            config,
            plan: plan.into_iter().map(|s| (s.name.clone(), s)).collect(),
            params,
        })
    }

    /// Rebuilds a model from named tensors, which must match the plan exactly.
    pub fn from_params(config: ModelConfig, params: IndexMap<String, Tensor<T>>) -> Result<Self> {
        let mut model = Self::build(config, 0)?;
        model.set_params(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plan(&self) -> impl Iterator<Item = &ConvSpec> {
        self.plan.values()
    }

    pub fn params(&self) -> &IndexMap<String, Tensor<T>> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut IndexMap<String, Tensor<T>> {
        &mut self.params
    }

    /// Replaces all parameters; names and shapes must match the plan.
    pub fn set_params(&mut self, mut params: IndexMap<String, Tensor<T>>) -> Result<()> {
        let missing: Vec<String> = self
            .params
            .keys()
            .filter(|k| !params.contains_key(*k))
            .cloned()
            .collect();
        let extra: Vec<String> = params
            .keys()
            .filter(|k| !self.params.contains_key(*k))
            .cloned()
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(Error::ParamMismatch { missing, extra });
        }
        for (name, current) in &mut self.params {
            let new = params.swap_remove(name).expect("checked above");
            if new.shape() != current.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    new.shape(),
                    current.shape()
                )));
            }
            *current = new;
        }
        Ok(())
    }

    pub fn count_parameters(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config,
            plan: self.plan.clone(),
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Registers every parameter on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Params<'t, T> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), tape.param(k, v.clone())))
            .collect()
    }

    fn check_image(&self, image: &[usize]) -> Result<()> {
        let c = &self.config;
        if image != [c.height, c.width, c.channels] {
            return Err(shape_err(
                "forward",
                format!(
                    "image is {image:?}, model expects {:?}",
                    [c.height, c.width, c.channels]
                ),
            ));
        }
        Ok(())
    }

    fn layer<'t>(&self, p: &Params<'t, T>, name: &str, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let spec = self
            .plan
            .get(name)
            .ok_or_else(|| Error::Config(format!("no layer named {name}")))?;
        let param = |suffix: &str| {
            let key = format!("{name}.{suffix}");
            p.get(&key)
                .ok_or_else(|| Error::Config(format!("parameter {key} not bound")))
        };
        let (w, b) = (param("w")?, param("b")?);
        if spec.transpose {
            ops::conv_transpose(x, w, b, spec.stride)
        } else {
            ops::conv(x, w, b, spec.stride)
        }
    }

    /// One feature tower: `H×W×C → H/2×W/2×F`.
    pub fn extract_features<'t>(
        &self,
        p: &Params<'t, T>,
        image: &Var<'t, T>,
        trace: &mut ShapeTrace,
    ) -> Result<Var<'t, T>> {
        self.check_image(image.shape())?;
        let image = standardize(image)?;
        let mut x = ops::elu(&self.layer(p, "feat.1", &image)?);
        trace.record("1", x.shape());
        if self.config.variant.residual_features() {
            for i in 2..=9 {
                let a = ops::elu(&self.layer(p, &format!("feat.{i}a"), &x)?);
                trace.record(format!("{i}a"), a.shape());
                let b = self.layer(p, &format!("feat.{i}b"), &a)?;
                trace.record(format!("{i}b"), b.shape());
                x = ops::elu(&ops::add(&x, &b)?);
                trace.record(format!("{i}+"), x.shape());
            }
            x = self.layer(p, "feat.10", &x)?;
            trace.record("10", x.shape());
        } else {
            for i in 2..=5 {
                x = ops::elu(&self.layer(p, &format!("feat.{i}"), &x)?);
                trace.record(i.to_string(), x.shape());
            }
        }
        Ok(x)
    }

    /// Cost volume, bottleneck, upsampler and aggregator for one reference
    /// view. Returns disparities in pixels, `H×W`.
    fn match_pipeline<'t>(
        &self,
        p: &Params<'t, T>,
        reference: &Var<'t, T>,
        target: &Var<'t, T>,
        dir: Direction,
        trace: &mut ShapeTrace,
    ) -> Result<Var<'t, T>> {
        let c = &self.config;
        let levels = c.max_disparity / 2;
        let mut x = if c.variant.uses_correlation() {
            ops::cost_volume_corr(reference, target, levels, dir)?
        } else {
            ops::cost_volume_concat(reference, target, levels, dir)?
        };
        trace.record("11", x.shape());

        let bn = Bottleneck::for_config(c);
        let mut skips = Vec::with_capacity(bn.stages.len());
        for i in 0..bn.stages.len() {
            let label = 12 + i;
            let a = ops::elu(&self.layer(p, &format!("match.{label}a"), &x)?);
            trace.record(format!("{label}a"), a.shape());
            let b = ops::elu(&self.layer(p, &format!("match.{label}b"), &a)?);
            trace.record(format!("{label}b"), b.shape());
            x = ops::elu(&self.layer(p, &format!("match.{label}c"), &b)?);
            trace.record(format!("{label}c"), x.shape());
            skips.push(b);
        }
        for label in [16, 17] {
            x = ops::elu(&self.layer(p, &format!("match.{label}"), &x)?);
            trace.record(label.to_string(), x.shape());
        }
        for (k, skip) in skips.iter().rev().enumerate() {
            let label = 18 + k;
            x = ops::elu(&self.layer(p, &format!("match.{label}"), &x)?);
            trace.record(label.to_string(), x.shape());
            x = ops::elu(&ops::add(skip, &x)?);
            trace.record(format!("{label}+"), x.shape());
        }

        let up = self.layer(p, "upsample.22", &x)?;
        trace.record("22", up.shape());
        let pdf = ops::volume_to_hwd(&up)?;
        trace.record("23", pdf.shape());
        if c.variant.uses_ml_argmax() {
            self.ml_argmax(p, &pdf, trace)
        } else {
            let d = soft_argmax(&pdf)?;
            trace.record("24", &[c.height, c.width, 1]);
            Ok(d)
        }
    }

    /// Learned aggregator over an `H×W×D` volume, scaled to pixels.
    pub fn ml_argmax<'t>(
        &self,
        p: &Params<'t, T>,
        pdf: &Var<'t, T>,
        trace: &mut ShapeTrace,
    ) -> Result<Var<'t, T>> {
        let c = &self.config;
        let mut x = pdf.clone();
        for label in 24..=27 {
            x = ops::elu(&self.layer(p, &format!("argmax.{label}"), &x)?);
            trace.record(label.to_string(), x.shape());
        }
        let y = ops::sigmoid(&self.layer(p, "argmax.28", &x)?);
        trace.record("28", y.shape());
        let y = ops::scale(&y, T::from_usize(c.max_disparity).unwrap());
        ops::reshape(&y, &[c.height, c.width])
    }

    /// Both towers; `right` is `None` for the single-tower variant.
    pub fn forward<'t>(
        &self,
        p: &Params<'t, T>,
        left: &Var<'t, T>,
        right: &Var<'t, T>,
        trace: &mut ShapeTrace,
    ) -> Result<Prediction<'t, T>> {
        let fl = self.extract_features(p, left, trace)?;
        let fr = self.extract_features(p, right, &mut ShapeTrace::disabled())?;
        let dl = self.match_pipeline(p, &fl, &fr, Direction::LeftRef, trace)?;
        let dr = if self.config.variant.has_right_output() {
            Some(self.match_pipeline(p, &fr, &fl, Direction::RightRef, &mut ShapeTrace::disabled())?)
        } else {
            None
        };
        Ok(Prediction {
            left: dl,
            right: dr,
        })
    }

    /// Forward pass without gradient recording.
    pub fn infer(&self, left: &Tensor<T>, right: &Tensor<T>) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
        let tape = Tape::inference();
        let p = self.bind(&tape);
        let out = self.forward(
            &p,
            &tape.constant(left.clone()),
            &tape.constant(right.clone()),
            &mut ShapeTrace::disabled(),
        )?;
        Ok((out.left.value().clone(), out.right.map(|r| r.value().clone())))
    }

    /// Forward pass recording every intermediate shape of the left pipeline.
    pub fn shape_trace(&self, left: &Tensor<T>, right: &Tensor<T>) -> Result<ShapeTrace> {
        let tape = Tape::inference();
        let p = self.bind(&tape);
        let mut trace = ShapeTrace::enabled();
        let out = self.forward(
            &p,
            &tape.constant(left.clone()),
            &tape.constant(right.clone()),
            &mut trace,
        )?;
        trace.record("output", out.left.shape());
        Ok(trace)
    }
}

impl Model<f32> {
    /// Inference returning disparity maps in pixel units.
    pub fn predict(&self, left: &Tensor<f32>, right: &Tensor<f32>) -> Result<(DisparityMap, Option<DisparityMap>)> {
        let (l, r) = self.infer(left, right)?;
        Ok((DisparityMap::dense(l)?, r.map(DisparityMap::dense).transpose()?))
    }
}

/// Per-channel zero mean and unit variance, with the statistics held
/// constant for differentiation. Flat channels are only centred.
pub fn standardize<'t, T: Scalar>(image: &Var<'t, T>) -> Result<Var<'t, T>> {
    let v = image.value();
    let c = *v.shape().last().unwrap_or(&1);
    let n = (v.data().len() / c.max(1)) as f64;
    let mut mean = vec![0.0f64; c];
    let mut sq = vec![0.0f64; c];
    for (i, x) in v.data().iter().enumerate() {
        let x = x.to_f64().unwrap();
        mean[i % c] += x;
        sq[i % c] += x * x;
    }
    let inv: Vec<f64> = (0..c)
        .map(|k| {
            mean[k] /= n;
            let sd = (sq[k] / n - mean[k] * mean[k]).max(0.0).sqrt();
            if sd > 1e-6 { 1.0 / sd } else { 1.0 }
        })
        .collect();
    let tape = image.tape();
    let offset = tape.constant(Tensor::from_fn(v.shape(), |i| T::from_f64(mean[i % c]).unwrap()));
    let gain = tape.constant(Tensor::from_fn(v.shape(), |i| T::from_f64(inv[i % c]).unwrap()));
    ops::mul(&ops::sub(image, &offset)?, &gain)
}

/// Expected disparity index under `softmax(−cost)` along the last axis of an
/// `H×W×D` cost tensor. Returns `H×W`.
pub fn soft_argmax<'t, T: Scalar>(costs: &Var<'t, T>) -> Result<Var<'t, T>> {
    let &[_, _, d] = costs.shape() else {
        return Err(shape_err("soft_argmax", format!("expected H×W×D, got {:?}", costs.shape())));
    };
    let p = ops::softmax(&ops::neg(costs), 2)?;
    ops::contract_last(&p, (0..d).map(|k| T::from_usize(k).unwrap()).collect())
}
