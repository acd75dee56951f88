//! Toy critics Q(s, a) whose exponentials have computable normalizers.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::policies::{log_sum_exp, HALF_LN_2PI};
use crate::quadrature::{try_integrate, Grid};

/// Q(s, a) = -scale * |a - (M s + c)|^2 / 2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticQ {
    action_dim: usize,
    state_dim: usize,
    peak_weights: Vec<f64>,
    peak_bias: Vec<f64>,
    scale: f64,
}

impl QuadraticQ {
    pub fn new(
        state_dim: usize,
        peak_weights: Vec<f64>,
        peak_bias: Vec<f64>,
        scale: f64,
    ) -> Result<Self> {
        let action_dim = peak_bias.len();
        if action_dim == 0 {
            return Err(Error::Invalid(
                "quadratic target needs action_dim >= 1".into(),
            ));
        }
        check_len("M", action_dim * state_dim, peak_weights.len())?;
        check_finite("M", &peak_weights)?;
        check_finite("c", &peak_bias)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Invalid(format!(
                "quadratic scale must be positive (got {scale})"
            )));
        }
        Ok(Self {
            action_dim,
            state_dim,
            peak_weights,
            peak_bias,
            scale,
        })
    }

    /// Peak fixed at `peak` regardless of state.
    pub fn constant(peak: &[f64], scale: f64, state_dim: usize) -> Result<Self> {
        Self::new(
            state_dim,
            vec![0.0; peak.len() * state_dim],
            peak.to_vec(),
            scale,
        )
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn peak_weights(&self) -> &[f64] {
        &self.peak_weights
    }

    pub fn peak_bias(&self) -> &[f64] {
        &self.peak_bias
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// m(s). A target with `state_dim == 0` ignores the state entirely.
    pub fn peak(&self, s: &[f64]) -> Result<Vec<f64>> {
        if self.state_dim == 0 {
            return Ok(self.peak_bias.clone());
        }
        check_len("state", self.state_dim, s.len())?;
        Ok(self
            .peak_bias
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let row = &self.peak_weights[i * self.state_dim..(i + 1) * self.state_dim];
                c + row.iter().zip(s).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect())
    }
}

/// Q(a) = ln sum_k w_k N(a; c_k, sigma_k^2 I), ignoring the state.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureLogQ {
    centers: Vec<Vec<f64>>,
    stds: Vec<f64>,
    weights: Vec<f64>,
}

impl MixtureLogQ {
    pub fn new(centers: Vec<Vec<f64>>, stds: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let dim = centers
            .first()
            .ok_or_else(|| Error::Invalid("log-mixture target needs at least one center".into()))?
            .len();
        if dim == 0 {
            return Err(Error::Invalid(
                "log-mixture centers must be non-empty vectors".into(),
            ));
        }
        check_len("stds", centers.len(), stds.len())?;
        check_len("weights", centers.len(), weights.len())?;
        for c in &centers {
            check_len("center", dim, c.len())?;
            check_finite("center", c)?;
        }
        if stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Invalid("log-mixture stds must be positive".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite()))
            || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::Invalid(
                "log-mixture weights must lie on the simplex".into(),
            ));
        }
        Ok(Self {
            centers,
            stds,
            weights,
        })
    }

    /// h = N(-2, 1)/2 + N(2, 1)/2 on a 1-D action space.
    pub fn canonical() -> Self {
        Self {
            centers: vec![vec![-2.0], vec![2.0]],
            stds: vec![1.0, 1.0],
            weights: vec![0.5, 0.5],
        }
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn action_dim(&self) -> usize {
        self.centers[0].len()
    }

    fn component_log_densities(&self, a: &[f64]) -> Vec<f64> {
        let dim = a.len() as f64;
        self.centers
            .iter()
            .zip(&self.stds)
            .zip(&self.weights)
            .map(|((c, sigma), w)| {
                let sq: f64 = a.iter().zip(c).map(|(x, m)| (x - m) * (x - m)).sum();
                w.ln() - dim * (HALF_LN_2PI + sigma.ln()) - 0.5 * sq / (sigma * sigma)
            })
            .collect()
    }

    pub fn log_density(&self, a: &[f64]) -> Result<f64> {
        check_len("action", self.action_dim(), a.len())?;
        Ok(log_sum_exp(&self.component_log_densities(a)))
    }

    /// Default quadrature range: [min c - 10 max sigma, max c + 10 max sigma].
    pub fn support(&self) -> (f64, f64) {
        let max_std = self.stds.iter().copied().fold(0.0, f64::max);
        let lo = self
            .centers
            .iter()
            .map(|c| c[0])
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .centers
            .iter()
            .map(|c| c[0])
            .fold(f64::NEG_INFINITY, f64::max);
        (lo - 10.0 * max_std, hi + 10.0 * max_std)
    }
}

/// Critic used by the actor loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TargetDoc", into = "TargetDoc")]
pub enum TargetQ {
    Quadratic(QuadraticQ),
    LogMixture(MixtureLogQ),
}

impl From<QuadraticQ> for TargetQ {
    fn from(q: QuadraticQ) -> Self {
        TargetQ::Quadratic(q)
    }
}

impl From<MixtureLogQ> for TargetQ {
    fn from(q: MixtureLogQ) -> Self {
        TargetQ::LogMixture(q)
    }
}

impl TargetQ {
    pub fn action_dim(&self) -> usize {
        match self {
            TargetQ::Quadratic(q) => q.action_dim,
            TargetQ::LogMixture(q) => q.action_dim(),
        }
    }

    /// `None` when the target ignores the state.
    pub fn state_dim(&self) -> Option<usize> {
        match self {
            TargetQ::Quadratic(q) if q.state_dim > 0 => Some(q.state_dim),
            _ => None,
        }
    }

    pub fn q_eval(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        check_len("action", self.action_dim(), a.len())?;
        match self {
            TargetQ::Quadratic(q) => {
                let m = q.peak(s)?;
                let sq: f64 = a.iter().zip(&m).map(|(x, c)| (x - c) * (x - c)).sum();
                Ok(-0.5 * q.scale * sq)
            }
            TargetQ::LogMixture(q) => q.log_density(a),
        }
    }

    pub fn grad_q_action(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        check_len("action", self.action_dim(), a.len())?;
        match self {
            TargetQ::Quadratic(q) => {
                let m = q.peak(s)?;
                Ok(a.iter().zip(&m).map(|(x, c)| -q.scale * (x - c)).collect())
            }
            TargetQ::LogMixture(q) => {
                let joint = q.component_log_densities(a);
                let total = log_sum_exp(&joint);
                let mut g = vec![0.0; a.len()];
                for ((j, c), sigma) in joint.iter().zip(&q.centers).zip(&q.stds) {
                    let r = (j - total).exp();
                    for ((gi, x), m) in g.iter_mut().zip(a).zip(c) {
                        *gi -= r * (x - m) / (sigma * sigma);
                    }
                }
                Ok(g)
            }
        }
    }

    /// ln Z(s) in closed form: (d/2) ln(2 pi / scale) for the quadratic, 0 for the log-mixture.
    pub fn log_partition_closed_form(&self, s: &[f64]) -> Result<f64> {
        match self {
            TargetQ::Quadratic(q) => {
                q.peak(s)?;
                Ok(0.5 * q.action_dim as f64 * (2.0 * std::f64::consts::PI / q.scale).ln())
            }
            TargetQ::LogMixture(_) => Ok(0.0),
        }
    }

    /// ln Z(s) = ln int exp Q(s, a) da by composite Simpson (1-D actions).
    pub fn log_partition(&self, s: &[f64], grid: &Grid) -> Result<f64> {
        if self.action_dim() != 1 {
            return Err(Error::Invalid(
                "quadrature log-partition needs a 1-D action space".into(),
            ));
        }
        let mut peak = f64::NEG_INFINITY;
        for x in grid.refined().nodes() {
            peak = peak.max(self.q_eval(s, &[x])?);
        }
        let integral = try_integrate(grid, |x| Ok((self.q_eval(s, &[x])? - peak).exp()))?;
        Ok(peak + integral.converged()?.ln())
    }

    /// A grid adapted to the mass of exp Q at `s`.
    pub fn default_grid(&self, s: &[f64]) -> Result<Grid> {
        Ok(match self {
            TargetQ::Quadratic(q) => {
                let m = q.peak(s)?;
                Grid::around(m[0], 12.0 / q.scale.sqrt(), 4000)
            }
            TargetQ::LogMixture(q) => {
                let (lo, hi) = q.support();
                Grid {
                    lo,
                    hi,
                    intervals: 4000,
                }
            }
        })
    }
}

/// Target section of the run config.
///
/// `{"kind":"quadratic","M":[[...]],"c":[...],"scale":1.0}` or
/// `{"kind":"log_mixture","centers":[[-2.0],[2.0]],"stds":[1.0,1.0],"weights":[0.5,0.5]}`.
/// Scalar centers (`[-2.0, 2.0]`) are accepted for 1-D targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetDoc {
    Quadratic {
        #[serde(rename = "M", default)]
        peak_weights: Vec<Vec<f64>>,
        c: Vec<f64>,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
    LogMixture {
        centers: Vec<CenterDoc>,
        stds: Vec<f64>,
        weights: Vec<f64>,
    },
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CenterDoc {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl TryFrom<TargetDoc> for TargetQ {
    type Error = Error;

    fn try_from(doc: TargetDoc) -> Result<Self> {
        match doc {
            TargetDoc::Quadratic {
                peak_weights,
                c,
                scale,
            } => {
                let state_dim = peak_weights.first().map_or(0, Vec::len);
                if !peak_weights.is_empty() {
                    check_len("M rows", c.len(), peak_weights.len())?;
                }
                let mut flat = Vec::new();
                for r in &peak_weights {
                    check_len("M columns", state_dim, r.len())?;
                    flat.extend_from_slice(r);
                }
                Ok(TargetQ::Quadratic(QuadraticQ::new(
                    state_dim, flat, c, scale,
                )?))
            }
            TargetDoc::LogMixture {
                centers,
                stds,
                weights,
            } => {
                let centers = centers
                    .into_iter()
                    .map(|c| match c {
                        CenterDoc::Scalar(x) => vec![x],
                        CenterDoc::Vector(v) => v,
                    })
                    .collect();
                Ok(TargetQ::LogMixture(MixtureLogQ::new(
                    centers, stds, weights,
                )?))
            }
        }
    }
}

impl From<TargetQ> for TargetDoc {
    fn from(q: TargetQ) -> Self {
        match q {
            TargetQ::Quadratic(q) => TargetDoc::Quadratic {
                peak_weights: if q.state_dim == 0 {
                    Vec::new()
                } else {
                    q.peak_weights
                        .chunks(q.state_dim)
                        .map(<[f64]>::to_vec)
                        .collect()
                },
                c: q.peak_bias,
                scale: q.scale,
            },
            TargetQ::LogMixture(q) => TargetDoc::LogMixture {
                centers: q.centers.into_iter().map(CenterDoc::Vector).collect(),
                stds: q.stds,
                weights: q.weights,
            },
        }
    }
}
