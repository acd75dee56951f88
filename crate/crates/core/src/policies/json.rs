//! The policy-file format.
//!
//! ```json
//! {"kind": "gaussian", "A": [[0.0]], "b": [0.0], "C": [[0.0]], "d": [0.0]}
//! {"kind": "mixture", "components": [{"A": ..., "b": ..., "C": ..., "d": ...}], "logits": [0.0]}
//! ```
//!
//! Matrices are nested row-major arrays with `action_dim` rows.

use serde::{Deserialize, Serialize};

use super::{GaussianPolicy, MixturePolicy, Policy};
use crate::error::{check_len, Error};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDoc {
    #[serde(rename = "A")]
    pub mean_weights: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub log_std_weights: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyDoc {
    Gaussian(GaussianDoc),
    Mixture {
        components: Vec<GaussianDoc>,
        logits: Vec<f64>,
    },
}

fn flatten(
    what: &'static str,
    rows: &[Vec<f64>],
    action_dim: usize,
) -> Result<(usize, Vec<f64>), Error> {
    check_len(what, action_dim, rows.len())?;
    let state_dim = rows.first().map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(action_dim * state_dim);
    for r in rows {
        check_len(what, state_dim, r.len())?;
        flat.extend_from_slice(r);
    }
    Ok((state_dim, flat))
}

fn unflatten(flat: &[f64], state_dim: usize) -> Vec<Vec<f64>> {
    if state_dim == 0 {
        return Vec::new();
    }
    flat.chunks(state_dim).map(<[f64]>::to_vec).collect()
}

impl TryFrom<GaussianDoc> for GaussianPolicy {
    type Error = Error;

    fn try_from(doc: GaussianDoc) -> Result<Self, Error> {
        let action_dim = doc.b.len();
        let (sd_a, a) = flatten("A rows", &doc.mean_weights, action_dim)?;
        let (sd_c, c) = flatten("C rows", &doc.log_std_weights, action_dim)?;
        check_len("C columns", sd_a, sd_c)?;
        GaussianPolicy::new(action_dim, sd_a, a, doc.b, c, doc.d)
    }
}

impl From<&GaussianPolicy> for GaussianDoc {
    fn from(p: &GaussianPolicy) -> Self {
        let mut mean_weights = unflatten(p.mean_weights(), p.state_dim());
        let mut log_std_weights = unflatten(p.log_std_weights(), p.state_dim());
        if p.state_dim() == 0 {
            mean_weights = vec![Vec::new(); p.action_dim()];
            log_std_weights = vec![Vec::new(); p.action_dim()];
        }
        Self {
            mean_weights,
            b: p.mean_bias().to_vec(),
            log_std_weights,
            d: p.log_std_bias().to_vec(),
        }
    }
}

impl TryFrom<PolicyDoc> for Policy {
    type Error = Error;

    fn try_from(doc: PolicyDoc) -> Result<Self, Error> {
        match doc {
            PolicyDoc::Gaussian(g) => Ok(Policy::Gaussian(g.try_into()?)),
            PolicyDoc::Mixture { components, logits } => {
                let comps = components
                    .into_iter()
                    .map(GaussianPolicy::try_from)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Policy::Mixture(MixturePolicy::new(comps, logits)?))
            }
        }
    }
}

impl From<Policy> for PolicyDoc {
    fn from(p: Policy) -> Self {
        match &p {
            Policy::Gaussian(g) => PolicyDoc::Gaussian(g.into()),
            Policy::Mixture(m) => PolicyDoc::Mixture {
                components: m.components().iter().map(GaussianDoc::from).collect(),
                logits: m.logits().to_vec(),
            },
        }
    }
}
