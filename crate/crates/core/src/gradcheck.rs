//! Central finite-difference checks for recorded gradients.
//!
//! The checker only evaluates forward values; it never reads the backward
//! rules it is checking.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Result, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Denominator floor so entries whose gradient is essentially zero are
/// judged on absolute error.
pub const REL_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `(parameter name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        self.checked += 1;
        let err = relative_error(analytic, numeric);
        if err >= self.max_relative_error {
            self.max_relative_error = err;
            self.worst = Some((name.to_string(), index, analytic, numeric));
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.max_relative_error >= self.max_relative_error {
            self.max_relative_error = other.max_relative_error;
            self.worst = other.worst;
        }
    }
}

fn eval<F>(store: &ParamStore, loss: &F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let l = loss(&mut g)?;
    Ok(g.scalar(l))
}

/// Compares backward gradients of `loss` with central differences on up to
/// `per_param` random entries of every parameter, plus one random direction
/// through all parameters at once.
pub fn check_params<F>(
    store: &mut ParamStore,
    loss: F,
    per_param: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        g.backward(l)?;
        g.param_grads()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    let ids: Vec<ParamId> = store.ids().collect();
    for &id in &ids {
        let n = store.get(id).len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(per_param);
        for i in idx {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval(store, &loss)?;
            store.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval(store, &loss)?;
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(id).map(|g| g[i]).unwrap_or(0.0);
            let name = store.name(id).to_string();
            report.record(&name, i, analytic, numeric);
        }
    }

    let dirs: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            (0..store.get(id).len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let analytic: f64 = ids
        .iter()
        .zip(&dirs)
        .filter_map(|(&id, d)| {
            grads
                .get(id)
                .map(|g| g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
        })
        .sum();
    let shift = |store: &mut ParamStore, s: f64| {
        for (&id, d) in ids.iter().zip(&dirs) {
            store
                .get_mut(id)
                .data_mut()
                .iter_mut()
                .zip(d)
                .for_each(|(v, di)| *v += s * di);
        }
    };
    let originals: Vec<Tensor> = ids.iter().map(|&id| store.get(id).clone()).collect();
    shift(store, eps);
    let up = eval(store, &loss)?;
    for (&id, t) in ids.iter().zip(&originals) {
        *store.get_mut(id) = t.clone();
    }
    shift(store, -eps);
    let down = eval(store, &loss)?;
    for (&id, t) in ids.iter().zip(originals) {
        *store.get_mut(id) = t;
    }
    report.record("<direction>", 0, analytic, (up - down) / (2.0 * eps));
    Ok(report)
}

/// Finite-difference check with respect to input tensors of a function
/// built from graph operations only.
pub fn check_inputs<F>(inputs: &[Tensor], f: F, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let run = |inputs: &[Tensor], backward: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::detached();
        let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let l = f(&mut g, &vars)?;
        let value = g.scalar(l);
        if !backward {
            return Ok((value, Vec::new()));
        }
        g.backward(l)?;
        let grads = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| {
                g.grad(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; t.len()])
            })
            .collect();
        Ok((value, grads))
    };
    let (_, grads) = run(inputs, true)?;
    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for k in 0..inputs.len() {
        for i in 0..inputs[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + eps;
            let (up, _) = run(&work, false)?;
            work[k].data_mut()[i] = orig - eps;
            let (down, _) = run(&work, false)?;
            work[k].data_mut()[i] = orig;
            report.record(
                &format!("input{k}"),
                i,
                grads[k][i],
                (up - down) / (2.0 * eps),
            );
        }
    }
    Ok(report)
}
