use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Largest multilinear output before the default switches to the randomized map.
pub const MULTILINEAR_LIMIT: usize = 4096;
/// Output width of the default randomized map.
pub const RANDOMIZED_DIM: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningKind {
    Concat,
    Multilinear,
    Randomized,
}

impl ConditioningKind {
    /// Multilinear unless `d_f · d_g` exceeds [`MULTILINEAR_LIMIT`].
    pub fn default_for(d_f: usize, d_g: usize) -> Self {
        if d_f * d_g <= MULTILINEAR_LIMIT {
            ConditioningKind::Multilinear
        } else {
            ConditioningKind::Randomized
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConditioningKind::Concat => "concat",
            ConditioningKind::Multilinear => "multilinear",
            ConditioningKind::Randomized => "randomized",
        }
    }
}

impl std::str::FromStr for ConditioningKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(ConditioningKind::Concat),
            "multilinear" => Ok(ConditioningKind::Multilinear),
            "randomized" => Ok(ConditioningKind::Randomized),
            other => Err(Error::Config(format!("unknown conditioning `{other}`"))),
        }
    }
}

/// Joint map `T(f, g)` feeding the domain discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningMap {
    kind: ConditioningKind,
    feature_dim: usize,
    prediction_dim: usize,
    output_dim: usize,
    /// `(R_f: d_f×out, R_g: d_g×out)`, randomized kind only; frozen.
    random: Option<(Tensor, Tensor)>,
}

impl ConditioningMap {
    pub fn concat(feature_dim: usize, prediction_dim: usize) -> Self {
        ConditioningMap {
            kind: ConditioningKind::Concat,
            feature_dim,
            prediction_dim,
            output_dim: feature_dim + prediction_dim,
            random: None,
        }
    }

    pub fn multilinear(feature_dim: usize, prediction_dim: usize) -> Self {
        ConditioningMap {
            kind: ConditioningKind::Multilinear,
            feature_dim,
            prediction_dim,
            output_dim: feature_dim * prediction_dim,
            random: None,
        }
    }

    /// Samples standard-normal projections once; they never change afterwards.
    pub fn randomized<R: Rng + ?Sized>(
        feature_dim: usize,
        prediction_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sample = |rows: usize| -> Result<Tensor> {
            let data = (0..rows * output_dim).map(|_| rng.sample(StandardNormal)).collect();
            Tensor::matrix(rows, output_dim, data)
        };
        let rf = sample(feature_dim)?;
        let rg = sample(prediction_dim)?;
        Self::randomized_from(rf, rg)
    }

    /// Randomized map with given projection matrices (e.g. from a checkpoint).
    pub fn randomized_from(rf: Tensor, rg: Tensor) -> Result<Self> {
        let (df, out) = rf
            .dims2()
            .ok_or_else(|| Error::shape("conditioning", rf.shape(), &[]))?;
        let (dg, out2) = rg
            .dims2()
            .ok_or_else(|| Error::shape("conditioning", rg.shape(), &[]))?;
        if out != out2 {
            return Err(Error::shape("conditioning", rf.shape(), rg.shape()));
        }
        Ok(ConditioningMap {
            kind: ConditioningKind::Randomized,
            feature_dim: df,
            prediction_dim: dg,
            output_dim: out,
            random: Some((rf, rg)),
        })
    }

    pub fn new<R: Rng + ?Sized>(
        kind: ConditioningKind,
        feature_dim: usize,
        prediction_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match kind {
            ConditioningKind::Concat => Self::concat(feature_dim, prediction_dim),
            ConditioningKind::Multilinear => Self::multilinear(feature_dim, prediction_dim),
            ConditioningKind::Randomized => Self::randomized(feature_dim, prediction_dim, RANDOMIZED_DIM, rng)?,
        })
    }

    pub fn kind(&self) -> ConditioningKind {
        self.kind
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn random_matrices(&self) -> Option<(&Tensor, &Tensor)> {
        self.random.as_ref().map(|(a, b)| (a, b))
    }

    /// Applies the map row-wise to features `f` (`b×d_f`) and predictions `g` (`b×d_g`).
    pub fn condition(&self, graph: &mut Graph, f: Var, g: Var) -> Result<Var> {
        let (fs, gs) = (graph.shape(f).to_vec(), graph.shape(g).to_vec());
        if fs.len() != 2 || gs.len() != 2 || fs[1] != self.feature_dim || gs[1] != self.prediction_dim || fs[0] != gs[0]
        {
            return Err(Error::shape("condition", &fs, &gs));
        }
        match (&self.kind, &self.random) {
            (ConditioningKind::Concat, _) => graph.concat_cols(f, g),
            (ConditioningKind::Multilinear, _) => graph.row_outer(f, g),
            (ConditioningKind::Randomized, Some((rf, rg))) => {
                let rf = graph.constant(rf.clone())?;
                let rg = graph.constant(rg.clone())?;
                let pf = graph.matmul(f, rf)?;
                let pg = graph.matmul(g, rg)?;
                let prod = graph.mul(pf, pg)?;
                graph.scale(prod, 1.0 / (self.output_dim as f64).sqrt())
            }
            (ConditioningKind::Randomized, None) => unreachable!("randomized map without matrices"),
        }
    }
}
