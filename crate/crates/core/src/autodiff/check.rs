use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, ParameterStore};
use crate::Result;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Largest accepted relative error.
    pub tolerance: f64,
    /// Check at most this many coordinates per parameter (sampled).
    pub max_coords: Option<usize>,
    /// Denominator floor for the relative error, so coordinates with near-zero
    /// gradients are compared absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-4,
            tolerance: 1e-4,
            max_coords: None,
            floor: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `(parameter name, max relative error)` for every parameter touched.
    pub per_param: Vec<(String, f64)>,
    pub max_error: f64,
    pub passed: bool,
}

/// Compares analytic gradients of the scalar built by `build` against central
/// finite differences. Relative error is `|a − n| / max(|a|, |n|, floor)`.
pub fn grad_check<F>(
    store: &mut ParameterStore,
    build: F,
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = build(&mut g)?;
        g.backward(out)?
    };
    let eval = |store: &ParameterStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let out = build(&mut g)?;
        Ok(g.scalar(out))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut per_param = Vec::new();
    let mut max_error: f64 = 0.0;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let len = store.value(id).len();
        let grad: Vec<f64> = analytic.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len]);
        let coords: Vec<usize> = match config.max_coords {
            Some(m) if m < len => sample(&mut rng, len, m).into_vec(),
            _ => (0..len).collect(),
        };
        let mut worst: f64 = 0.0;
        for k in coords {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + config.eps;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig - config.eps;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * config.eps);
            let a = grad[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(config.floor);
            worst = worst.max(err);
        }
        max_error = max_error.max(worst);
        per_param.push((store.name(id).to_string(), worst));
    }
    Ok(GradCheckReport {
        per_param,
        max_error,
        passed: max_error < config.tolerance,
    })
}
