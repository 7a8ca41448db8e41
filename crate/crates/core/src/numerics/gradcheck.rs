use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-5;

fn eval<F>(loss_fn: &F, store: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let loss = loss_fn(&mut g)?;
    let v = g.value(loss);
    if v.len() != 1 {
        return Err(Error::Contract("grad_check loss must be scalar".into()));
    }
    Ok(v.item())
}

/// Compares `backward` against central differences on every entry of every
/// parameter, returning the largest `|ga − gn| / max(|ga|, |gn|, 1e-8)`.
pub fn grad_check<F>(loss_fn: F, params: &ParamStore, epsilon: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var> + Sync,
{
    let all: Vec<ParamId> = params.ids().collect();
    grad_check_subset(loss_fn, params, &all, epsilon, tolerance, Execution::default())
}

/// [`grad_check`] restricted to the listed parameters.
pub fn grad_check_subset<F>(
    loss_fn: F,
    params: &ParamStore,
    ids: &[ParamId],
    epsilon: f64,
    tolerance: f64,
    exec: Execution,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var> + Sync,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let analytic = {
        let mut g = Graph::new(params);
        let loss = loss_fn(&mut g)?;
        g.backward(loss)?
    };

    let per_param = exec.map(ids, |&id| -> Result<(f64, usize, usize)> {
        let mut store = params.clone();
        let ga = analytic.get(id).data();
        let mut worst = (0.0_f64, 0_usize);
        for i in 0..ga.len() {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + epsilon;
            let plus = eval(&loss_fn, &store)?;
            store.get_mut(id).data_mut()[i] = orig - epsilon;
            let minus = eval(&loss_fn, &store)?;
            store.get_mut(id).data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss perturbing {}[{i}]",
                    params.name(id)
                )));
            }
            let gn = (plus - minus) / (2.0 * epsilon);
            let denom = ga[i].abs().max(gn.abs()).max(1e-8);
            let rel = (ga[i] - gn).abs() / denom;
            if rel > worst.0 {
                worst = (rel, i);
            }
        }
        Ok((worst.0, worst.1, ga.len()))
    });

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tolerance,
    };
    for (&id, r) in ids.iter().zip(per_param) {
        let (rel, index, count) = r?;
        report.checked += count;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((params.name(id).to_string(), index));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn quadratic_passes_tightly() {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::vector(vec![0.3, -1.2, 2.5]).unwrap()).unwrap();
        let report = grad_check(
            |g| {
                let p = g.param(id);
                let sq = g.mul(p, p)?;
                Ok(g.sum(sq))
            },
            &store,
            DEFAULT_EPSILON,
            1e-7,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn zero_epsilon_rejected() {
        let store = ParamStore::new();
        let err = grad_check(|g| Ok(g.input(Tensor::scalar(1.0))), &store, 0.0, 1e-4).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
