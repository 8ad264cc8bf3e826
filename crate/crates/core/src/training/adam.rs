use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{ParamGrads, ParameterSet};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Moments {
    m: Vec<Vec<Real>>,
    v: Vec<Vec<Real>>,
    steps: u64,
}

/// Adam with bias correction and one moment/step state per partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    cfg: AdamConfig,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            state: BTreeMap::new(),
        }
    }

    /// Number of updates applied to `partition` so far.
    pub fn steps(&self, partition: &str) -> u64 {
        self.state.get(partition).map_or(0, |m| m.steps)
    }

    /// Applies one update to every unfrozen partition.
    ///
    /// `grads` must cover exactly the unfrozen partitions with matching
    /// shapes and finite values; otherwise nothing is modified.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParamGrads, lr: f64) -> Result<()> {
        for p in params.partitions() {
            match (p.frozen, grads.get(&p.name)) {
                (false, None) => {
                    return Err(Error::Config(format!("no gradient for trainable partition `{}`", p.name)))
                }
                (true, Some(_)) => {
                    return Err(Error::Config(format!("gradient supplied for frozen partition `{}`", p.name)))
                }
                (false, Some(g)) => {
                    if g.len() != p.tensors.len()
                        || g.iter().zip(&p.tensors).any(|(a, b)| a.shape() != b.shape())
                    {
                        return Err(Error::dim(format!("gradient layout mismatch in `{}`", p.name)));
                    }
                    for (ti, t) in g.iter().enumerate() {
                        if let Some(i) = t.data().iter().position(|v| !v.is_finite()) {
                            return Err(Error::Numerical(format!(
                                "non-finite gradient {} at `{}` tensor {ti} element {i}",
                                t.data()[i],
                                p.name
                            )));
                        }
                    }
                }
                (true, None) => {}
            }
        }
        if let Some(name) = grads.keys().find(|n| !params.contains(n)) {
            return Err(Error::Lookup(format!("gradient for unknown partition `{name}`")));
        }

        let AdamConfig { beta1, beta2, eps } = self.cfg;
        for (name, g) in grads {
            let part = params.get_mut(name)?;
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: part.tensors.iter().map(|t| vec![0.0; t.numel()]).collect(),
                v: part.tensors.iter().map(|t| vec![0.0; t.numel()]).collect(),
                steps: 0,
            });
            st.steps += 1;
            let c1 = 1.0 - beta1.powi(st.steps as i32);
            let c2 = 1.0 - beta2.powi(st.steps as i32);
            for ((t, gt), (m, v)) in part.tensors.iter_mut().zip(g).zip(st.m.iter_mut().zip(st.v.iter_mut())) {
                t.data_mut()
                    .par_iter_mut()
                    .zip(gt.data().par_iter())
                    .zip(m.par_iter_mut().zip(v.par_iter_mut()))
                    .for_each(|((p, &g), (m, v))| {
                        let g = g as f64;
                        let mn = beta1 * *m as f64 + (1.0 - beta1) * g;
                        let vn = beta2 * *v as f64 + (1.0 - beta2) * g * g;
                        *m = mn as Real;
                        *v = vn as Real;
                        let upd = lr * (mn / c1) / ((vn / c2).sqrt() + eps);
                        *p = (*p as f64 - upd) as Real;
                    });
            }
        }
        Ok(())
    }
}
