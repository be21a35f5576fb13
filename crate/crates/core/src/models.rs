//! Desk-scale networks: a dense multi-scale pyramid feature extractor, a
//! linear classifier head and a conditional domain discriminator.
//!
//! Parameters are plain [`Tensor`]s owned by the model structs. For a
//! forward pass a model is *bound* to a [`Graph`], which records each
//! parameter as a leaf and returns a `*Vars` view holding the handles. After
//! `backward`, [`NetworkVars::grads`] returns gradients in the same order as
//! [`Networks::named_params`].

use rand::Rng;

use crate::autodiff::{Graph, Tensor, Var, LOG_EPS};
use crate::error::{Error, Result};
use crate::losses::{ConditioningKind, ConditioningMap};

/// Affine layer `x W + b` with `W: in×out`, `b: 1×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Uniform in `±sqrt(1/fan_in)` for weights and bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = (1.0 / input as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let weight = Tensor::from_parts(vec![input, output], draw(input * output));
        let bias = Tensor::from_parts(vec![1, output], draw(output));
        Dense { weight, bias }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[1, output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn bind(&self, g: &mut Graph) -> Result<DenseVars> {
        Ok(DenseVars {
            weight: g.param(self.weight.clone())?,
            bias: g.param(self.bias.clone())?,
        })
    }

    fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

impl DenseVars {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let xw = g.matmul(x, self.weight)?;
        g.add(xw, self.bias)
    }

    fn vars(&self, out: &mut Vec<Var>) {
        out.push(self.weight);
        out.push(self.bias);
    }
}

/// Sequential dense stages whose activations are each projected to the
/// feature width and summed.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidExtractor {
    pub stages: Vec<Dense>,
    pub laterals: Vec<Dense>,
}

impl PyramidExtractor {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        stage_widths: &[usize],
        feature_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if stage_widths.is_empty() || stage_widths.contains(&0) || feature_dim == 0 || input_dim == 0 {
            return Err(Error::Config(format!(
                "extractor needs non-empty positive stage widths and feature width (got {stage_widths:?}, {feature_dim})"
            )));
        }
        let mut stages = Vec::with_capacity(stage_widths.len());
        let mut fan_in = input_dim;
        for &w in stage_widths {
            stages.push(Dense::init(fan_in, w, rng));
            fan_in = w;
        }
        let laterals = stage_widths.iter().map(|&w| Dense::init(w, feature_dim, rng)).collect();
        Ok(PyramidExtractor { stages, laterals })
    }

    pub fn input_dim(&self) -> usize {
        self.stages[0].input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.laterals[0].output_dim()
    }

    pub fn bind(&self, g: &mut Graph) -> Result<ExtractorVars> {
        Ok(ExtractorVars {
            input_dim: self.input_dim(),
            stages: self.stages.iter().map(|d| d.bind(g)).collect::<Result<_>>()?,
            laterals: self.laterals.iter().map(|d| d.bind(g)).collect::<Result<_>>()?,
        })
    }

    /// Forward pass without gradient tracking.
    pub fn extract(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g)?;
        let xv = g.constant(x.clone())?;
        let f = vars.forward(&mut g, xv)?;
        Ok(g.value(f).clone())
    }

    fn named<'a>(&'a self, out: &mut Vec<(String, &'a Tensor)>) {
        for (i, d) in self.stages.iter().enumerate() {
            d.named(&format!("extractor.stage{i}"), out);
        }
        for (i, d) in self.laterals.iter().enumerate() {
            d.named(&format!("extractor.lateral{i}"), out);
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for d in self.stages.iter_mut().chain(self.laterals.iter_mut()) {
            d.params_mut(out);
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExtractorVars {
    input_dim: usize,
    stages: Vec<DenseVars>,
    laterals: Vec<DenseVars>,
}

impl ExtractorVars {
    /// `s_1 = relu(W_1 x + b_1)`, `s_i = relu(W_i s_{i-1} + b_i)`,
    /// output `Σ_i lateral_i(s_i)`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::shape("extract_features", shape, &[self.input_dim]));
        }
        let mut h = x;
        let mut merged: Option<Var> = None;
        for (stage, lateral) in self.stages.iter().zip(&self.laterals) {
            let z = stage.forward(g, h)?;
            h = g.relu(z)?;
            let p = lateral.forward(g, h)?;
            merged = Some(match merged {
                None => p,
                Some(m) => g.add(m, p)?,
            });
        }
        Ok(merged.expect("at least one stage"))
    }

    fn vars(&self, out: &mut Vec<Var>) {
        for d in self.stages.iter().chain(&self.laterals) {
            d.vars(out);
        }
    }
}

/// Linear classifier on top of the merged features.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead(pub Dense);

impl ClassifierHead {
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!(
                "classifier needs at least 2 classes, got {classes}"
            )));
        }
        Ok(ClassifierHead(Dense::init(feature_dim, classes, rng)))
    }

    pub fn classes(&self) -> usize {
        self.0.output_dim()
    }

    pub fn bind(&self, g: &mut Graph) -> Result<DenseVars> {
        self.0.bind(g)
    }

    /// Logits for a feature batch; softmax is applied by the consumer.
    pub fn classify(vars: &DenseVars, g: &mut Graph, f: Var) -> Result<Var> {
        let expected = g.shape(vars.weight)[0];
        let shape = g.shape(f);
        if shape.len() != 2 || shape[1] != expected {
            return Err(Error::shape("classify", shape, &[expected]));
        }
        vars.forward(g, f)
    }
}

/// Hidden width of the domain discriminator.
pub const DISCRIMINATOR_HIDDEN: usize = 256;

/// `sigmoid(dense_2(relu(dense_1(h))))`, clamped away from 0 and 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDiscriminator {
    pub hidden: Dense,
    pub output: Dense,
}

impl DomainDiscriminator {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        DomainDiscriminator {
            hidden: Dense::init(input_dim, hidden, rng),
            output: Dense::init(hidden, 1, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn bind(&self, g: &mut Graph) -> Result<DiscriminatorVars> {
        Ok(DiscriminatorVars {
            hidden: self.hidden.bind(g)?,
            output: self.output.bind(g)?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorVars {
    pub hidden: DenseVars,
    pub output: DenseVars,
}

impl DiscriminatorVars {
    /// Probability that each row comes from the source domain, `b×1`.
    pub fn discriminate(&self, g: &mut Graph, conditioned: Var) -> Result<Var> {
        let expected = g.shape(self.hidden.weight)[0];
        let shape = g.shape(conditioned);
        if shape.len() != 2 || shape[1] != expected {
            return Err(Error::shape("discriminate", shape, &[expected]));
        }
        let z = self.hidden.forward(g, conditioned)?;
        let a = g.relu(z)?;
        let o = self.output.forward(g, a)?;
        let p = g.sigmoid(o)?;
        g.clamp(p, LOG_EPS, 1.0 - LOG_EPS)
    }
}

/// Identity forward, `-coefficient ×` gradient backward.
pub fn grad_reverse(g: &mut Graph, x: Var, coefficient: f64) -> Result<Var> {
    g.grad_reverse(x, coefficient)
}

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    pub classes: usize,
    pub stage_widths: Vec<usize>,
    pub feature_dim: usize,
    pub discriminator_hidden: usize,
    pub conditioning: ConditioningKind,
}

/// Extractor, classifier, discriminator and the frozen conditioning map.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub extractor: PyramidExtractor,
    pub head: ClassifierHead,
    pub conditioning: ConditioningMap,
    pub discriminator: DomainDiscriminator,
}

impl Networks {
    /// Initialises all parameters from `rng`, in the order extractor, head,
    /// conditioning map, discriminator.
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        let extractor = PyramidExtractor::new(arch.input_dim, &arch.stage_widths, arch.feature_dim, rng)?;
        let head = ClassifierHead::new(arch.feature_dim, arch.classes, rng)?;
        let conditioning = ConditioningMap::new(arch.conditioning, arch.feature_dim, arch.classes, rng)?;
        let discriminator = DomainDiscriminator::new(conditioning.output_dim(), arch.discriminator_hidden, rng);
        Ok(Networks {
            extractor,
            head,
            conditioning,
            discriminator,
        })
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    /// Trainable parameters with stable names.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.extractor.named(&mut out);
        self.head.0.named("head", &mut out);
        self.discriminator.hidden.named("discriminator.hidden", &mut out);
        self.discriminator.output.named("discriminator.output", &mut out);
        out
    }

    /// Mutable parameters in [`named_params`](Self::named_params) order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.extractor.params_mut(&mut out);
        self.head.0.params_mut(&mut out);
        self.discriminator.hidden.params_mut(&mut out);
        self.discriminator.output.params_mut(&mut out);
        out
    }

    pub fn bind(&self, g: &mut Graph) -> Result<NetworkVars> {
        Ok(NetworkVars {
            extractor: self.extractor.bind(g)?,
            head: self.head.bind(g)?,
            discriminator: self.discriminator.bind(g)?,
        })
    }

    /// Features and logits for a batch without gradient tracking.
    pub fn predict(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let extractor = self.extractor.bind(&mut g)?;
        let head = self.head.bind(&mut g)?;
        let xv = g.constant(x.clone())?;
        let f = extractor.forward(&mut g, xv)?;
        let logits = ClassifierHead::classify(&head, &mut g, f)?;
        Ok((g.value(f).clone(), g.value(logits).clone()))
    }

    /// Discriminator probabilities for a batch, `b×1`.
    pub fn domain_probability(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g)?;
        let xv = g.constant(x.clone())?;
        let f = vars.extractor.forward(&mut g, xv)?;
        let logits = ClassifierHead::classify(&vars.head, &mut g, f)?;
        let p = g.softmax_rows(logits)?;
        let h = self.conditioning.condition(&mut g, f, p)?;
        let d = vars.discriminator.discriminate(&mut g, h)?;
        Ok(g.value(d).clone())
    }
}

#[derive(Clone, Debug)]
pub struct NetworkVars {
    pub extractor: ExtractorVars,
    pub head: DenseVars,
    pub discriminator: DiscriminatorVars,
}

impl NetworkVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.extractor.vars(&mut out);
        self.head.vars(&mut out);
        self.discriminator.hidden.vars(&mut out);
        self.discriminator.output.vars(&mut out);
        out
    }

    /// Gradients after `backward`, zero-filled for parameters the loss does
    /// not reach.
    pub fn grads(&self, g: &Graph) -> Vec<Tensor> {
        self.vars()
            .into_iter()
            .map(|v| g.grad(v).unwrap_or_else(|| Tensor::zeros(g.shape(v))))
            .collect()
    }
}
