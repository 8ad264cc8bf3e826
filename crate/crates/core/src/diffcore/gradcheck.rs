use rand::seq::index;

use super::{Tape, Tensor, Var};
use crate::{rng, Error, Real, Result};

/// Settings for [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Number of parameter coordinates probed.
    pub samples: usize,
    /// Central-difference half step.
    pub step: Real,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            samples: 32,
            step: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max |analytic − numeric| / max(1, |numeric|) over the probed coordinates.
    pub max_rel_error: f64,
    pub checked: usize,
    /// (tensor index, element index, analytic, numeric) of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compares reverse-mode gradients of a scalar graph against central differences.
///
/// `build` records the graph for the given parameter leaves and returns the
/// scalar output. Probed coordinates are drawn from those with a nonzero
/// analytic gradient when there are enough of them, else from all coordinates.
pub fn grad_check<F>(params: &[Tensor], build: F, cfg: &GradCheck) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = build(&mut tape, &vars)?;
        let v = tape.value(out).item() as f64;
        if !v.is_finite() {
            return Err(Error::Numerical(format!("function value {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = build(&mut tape, &vars)?;
    if !(tape.value(out).item() as f64).is_finite() {
        return Err(Error::Numerical("function value is not finite".into()));
    }
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| grads.get_or_zeros(*v, p))
        .collect();

    let mut all = Vec::new();
    let mut nonzero = Vec::new();
    for (ti, g) in analytic.iter().enumerate() {
        for (ei, &v) in g.data().iter().enumerate() {
            all.push((ti, ei));
            if v != 0.0 {
                nonzero.push((ti, ei));
            }
        }
    }
    let pool = if nonzero.len() >= cfg.samples { nonzero } else { all };
    let mut rng = rng::stream(cfg.seed, "grad_check");
    let picks: Vec<(usize, usize)> = if pool.len() <= cfg.samples {
        pool
    } else {
        index::sample(&mut rng, pool.len(), cfg.samples)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    let mut probe = params.to_vec();
    for (ti, ei) in picks {
        let orig = probe[ti].data()[ei];
        let plus = orig + cfg.step;
        let minus = orig - cfg.step;
        probe[ti].data_mut()[ei] = plus;
        let fp = eval(&probe)?;
        probe[ti].data_mut()[ei] = minus;
        let fm = eval(&probe)?;
        probe[ti].data_mut()[ei] = orig;

        let numeric = (fp - fm) / (plus as f64 - minus as f64);
        let a = analytic[ti].data()[ei] as f64;
        let err = (a - numeric).abs() / numeric.abs().max(1.0);
        report.checked += 1;
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((ti, ei, a, numeric));
        }
    }
    Ok(report)
}
