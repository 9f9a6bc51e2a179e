//! Central finite-difference checks of reverse-mode gradients.

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Denominator floor for relative errors, so that gradients that are zero up
/// to rounding compare by absolute error instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    /// Input position (or parameter name for store checks).
    pub input: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheck {
    fn record(
        &mut self,
        input: impl FnOnce() -> String,
        index: usize,
        analytic: f64,
        numeric: f64,
    ) {
        self.checked += 1;
        let rel = relative_error(analytic, numeric);
        if rel > self.max_relative_error || self.worst.is_none() {
            self.max_relative_error = self.max_relative_error.max(rel);
            self.worst = Some(Mismatch {
                input: input(),
                index,
                analytic,
                numeric,
                relative_error: rel,
            });
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

fn scalar_of(g: &Graph, root: Var) -> Result<f64> {
    let v = g.forward_eval(root)?;
    if v.len() != 1 {
        return Err(Error::NonScalarRoot(v.shape().to_vec()));
    }
    Ok(v.data()[0])
}

/// Compares the tape gradient of `f` with respect to each of `inputs` against
/// `(f(x + h) - f(x - h)) / 2h`, element by element.
pub fn check_inputs<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone(), true)).collect();
        let root = f(&mut g, &vars)?;
        scalar_of(&g, root)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone(), true)).collect();
    let root = f(&mut g, &vars)?;
    g.backward(root)?;

    let mut report = GradCheck::default();
    let mut work = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = g
            .grad(*var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for (j, &a) in analytic.iter().enumerate() {
            let x = inputs[k].data()[j];
            work[k].data_mut()[j] = x + h;
            let up = eval(&work)?;
            work[k].data_mut()[j] = x - h;
            let down = eval(&work)?;
            work[k].data_mut()[j] = x;
            report.record(|| format!("input {k}"), j, a, (up - down) / (2.0 * h));
        }
    }
    Ok(report)
}

/// Same as [`check_inputs`] for the parameters of a store. `only` restricts
/// the check to a subset; `stride` samples every n-th scalar of each tensor.
pub fn check_params<F>(
    store: &ParamStore,
    only: Option<&[ParamId]>,
    stride: usize,
    h: f64,
    f: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut base = store.clone();
    base.zero_grads();
    let mut g = Graph::new();
    let root = f(&mut g, &base)?;
    g.backward(root)?;
    let mut with_grads = base.clone();
    g.accumulate_param_grads(&mut with_grads);

    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => base.ids().collect(),
    };
    let mut report = GradCheck::default();
    let mut work = base.clone();
    for id in ids {
        let n = work.value(id).len();
        for j in (0..n).step_by(stride.max(1)) {
            let x = base.value(id).data()[j];
            work.value_mut(id).data_mut()[j] = x + h;
            let mut gu = Graph::new();
            let ru = f(&mut gu, &work)?;
            let up = scalar_of(&gu, ru)?;
            work.value_mut(id).data_mut()[j] = x - h;
            let mut gd = Graph::new();
            let rd = f(&mut gd, &work)?;
            let down = scalar_of(&gd, rd)?;
            work.value_mut(id).data_mut()[j] = x;
            let analytic = with_grads.grad(id)[j];
            report.record(
                || base.name(id).to_string(),
                j,
                analytic,
                (up - down) / (2.0 * h),
            );
        }
    }
    Ok(report)
}
