//! ARIX local models: the rule consequents.
//!
//! Each rule forecasts the main series with
//!
//! ```text
//! A(q⁻¹) (1 − q⁻¹)^d ŷ(t) = B(q⁻¹) u(t)
//! A(q⁻¹) = 1 + a₁q⁻¹ + … + a_p q⁻ᵖ      (note the + sign on a_m)
//! B(q⁻¹) = b₁q⁻¹ + … + b_q q⁻ᑫ
//! ```
//!
//! unrolled recursively over the horizon: past values come from the observed
//! history while they exist and from earlier forecasts afterwards.
//!
//! Exogenous indexing: `u[0]` is `u(k)`, `u[j]` is `u(k + j)`. Step `j`
//! (1-based) reads `u(k + j − n) = u[j − n]`; positions before `u[0]` are 0.
//! The first forecast therefore depends on observed history and `u[0]` only.

use serde::{Deserialize, Serialize};

use crate::compute::{Function, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::fuzzy::MembershipVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArixCoefficients {
    /// `a₁ … a_p`
    pub ar: Vec<f64>,
    /// `b₁ … b_q`
    pub exo: Vec<f64>,
    /// Integration order `d` (0 or 1).
    pub integration: usize,
}

impl ArixCoefficients {
    pub fn new(ar: Vec<f64>, exo: Vec<f64>, integration: usize) -> Result<Self> {
        if ar.is_empty() {
            return Err(Error::Config("ARIX needs p >= 1".into()));
        }
        if integration > 1 {
            return Err(Error::Config(format!(
                "integration order {integration} unsupported (0 or 1)"
            )));
        }
        Ok(Self {
            ar,
            exo,
            integration,
        })
    }

    /// Number of trailing observations needed to seed the recursion.
    pub fn history_len(&self) -> usize {
        self.ar.len() + self.integration
    }
}

/// One rule's forecast over the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleForecast(pub Vec<f64>);

impl RuleForecast {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Runs the recursion. Returns the forecast levels and the extended
/// (possibly differenced) sequence: `p` seed values followed by `horizon`
/// recursive outputs.
fn recurse(
    history: &[f64],
    u: &[f64],
    ar: &[f64],
    exo: &[f64],
    d: usize,
    horizon: usize,
) -> (Vec<f64>, Vec<f64>) {
    let p = ar.len();
    let tail = &history[history.len() - (p + d)..];
    let mut ext: Vec<f64> = Vec::with_capacity(p + horizon);
    if d == 1 {
        ext.extend(tail.windows(2).map(|w| w[1] - w[0]));
    } else {
        ext.extend_from_slice(tail);
    }
    for j in 1..=horizon {
        let mut v = 0.0;
        for (m, a) in ar.iter().enumerate() {
            v -= a * ext[p + j - 2 - m];
        }
        for (n, b) in exo.iter().enumerate() {
            if let Some(t) = j.checked_sub(n + 1) {
                v += b * u[t];
            }
        }
        ext.push(v);
    }
    let levels = if d == 1 {
        let mut level = *tail.last().expect("p >= 1");
        ext[p..]
            .iter()
            .map(|s| {
                level += s;
                level
            })
            .collect()
    } else {
        ext[p..].to_vec()
    };
    (levels, ext)
}

/// Gradients of `Σ_j gy_j ŷ_j` with respect to `ar`, `exo` and `u`, added into
/// the output slices (reverse sweep of [`recurse`]).
#[allow(clippy::too_many_arguments)]
fn recurse_backward(
    ext: &[f64],
    u: &[f64],
    ar: &[f64],
    exo: &[f64],
    d: usize,
    gy: &[f64],
    g_ar: &mut [f64],
    g_exo: &mut [f64],
    g_u: &mut [f64],
) {
    let p = ar.len();
    let h = gy.len();
    // Adjoint of the differenced outputs.
    let mut gs = gy.to_vec();
    if d == 1 {
        for j in (0..h.saturating_sub(1)).rev() {
            gs[j] += gs[j + 1];
        }
    }
    // lambda[j-1] is the total adjoint of s_j including downstream recursion.
    let mut lambda = vec![0.0; h];
    for j in (1..=h).rev() {
        let mut l = gs[j - 1];
        for (m, a) in ar.iter().enumerate() {
            let later = j + m + 1;
            if later <= h {
                l -= a * lambda[later - 1];
            }
        }
        lambda[j - 1] = l;
    }
    for j in 1..=h {
        let l = lambda[j - 1];
        if l == 0.0 {
            continue;
        }
        for (m, ga) in g_ar.iter_mut().enumerate() {
            *ga -= l * ext[p + j - 2 - m];
        }
        for (n, gb) in g_exo.iter_mut().enumerate() {
            if let Some(t) = j.checked_sub(n + 1) {
                *gb += l * u[t];
                g_u[t] += l * exo[n];
            }
        }
    }
}

fn check_inputs(
    history: &[f64],
    u: &[f64],
    coeffs: &ArixCoefficients,
    horizon: usize,
) -> Result<()> {
    if history.len() < coeffs.history_len() {
        return Err(Error::HistoryTooShort {
            needed: coeffs.history_len(),
            got: history.len(),
        });
    }
    if !coeffs.exo.is_empty() && u.len() < horizon {
        return Err(Error::shape(
            "arix",
            format!(
                "exogenous sequence of length {} for horizon {horizon}",
                u.len()
            ),
        ));
    }
    Ok(())
}

/// Recursive `horizon`-step forecast of one local model.
pub fn arix_forecast(
    history: &[f64],
    u: &[f64],
    coeffs: &ArixCoefficients,
    horizon: usize,
) -> Result<RuleForecast> {
    check_inputs(history, u, coeffs, horizon)?;
    let (levels, _) = recurse(
        history,
        u,
        &coeffs.ar,
        &coeffs.exo,
        coeffs.integration,
        horizon,
    );
    if levels.iter().any(|v| !v.is_finite()) {
        return Err(Error::UnstableRule { rule: 0 });
    }
    Ok(RuleForecast(levels))
}

/// `Ŷ = Σ_i Ψ_i Ŷ_i`, elementwise over the horizon.
pub fn aggregate(psi: &MembershipVector, forecasts: &[RuleForecast]) -> Result<Vec<f64>> {
    if psi.len() != forecasts.len() || forecasts.is_empty() {
        return Err(Error::shape(
            "aggregate",
            format!("{} memberships for {} rules", psi.len(), forecasts.len()),
        ));
    }
    let h = forecasts[0].0.len();
    let mut out = vec![0.0; h];
    for (w, f) in psi.as_slice().iter().zip(forecasts) {
        if f.0.len() != h {
            return Err(Error::shape("aggregate", "rule forecasts differ in length"));
        }
        for (o, v) in out.iter_mut().zip(&f.0) {
            *o += w * v;
        }
    }
    Ok(out)
}

// ---- differentiable version ------------------------------------------------

struct ArixFn {
    histories: Tensor,
    integration: usize,
    selection: Option<Vec<usize>>,
}

impl ArixFn {
    /// Iterates over `(sample, rule, output offset)` triples in output order.
    fn cells(&self, batch: usize, rules: usize) -> Vec<(usize, usize)> {
        match &self.selection {
            Some(sel) => sel.iter().copied().enumerate().collect(),
            None => (0..batch)
                .flat_map(|b| (0..rules).map(move |i| (b, i)))
                .collect(),
        }
    }
}

impl Function for ArixFn {
    fn name(&self) -> &'static str {
        "arix"
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &[f64],
    ) -> Vec<Option<Vec<f64>>> {
        let (ar, exo, u) = (inputs[0], inputs[1], inputs[2]);
        let (c, p) = (ar.shape()[0], ar.shape()[1]);
        let q = exo.shape()[1];
        let (b, h) = (u.shape()[0], u.shape()[1]);
        let mut g_ar = vec![0.0; ar.len()];
        let mut g_exo = vec![0.0; exo.len()];
        let mut g_u = vec![0.0; u.len()];
        for (cell, (s, i)) in self.cells(b, c).into_iter().enumerate() {
            let gy = &grad[cell * h..(cell + 1) * h];
            if gy.iter().all(|&x| x == 0.0) {
                continue;
            }
            let a = &ar.data()[i * p..(i + 1) * p];
            let bq = &exo.data()[i * q..(i + 1) * q];
            let us = u.row(s);
            let (_, ext) = recurse(self.histories.row(s), us, a, bq, self.integration, h);
            recurse_backward(
                &ext,
                us,
                a,
                bq,
                self.integration,
                gy,
                &mut g_ar[i * p..(i + 1) * p],
                &mut g_exo[i * q..(i + 1) * q],
                &mut g_u[s * h..(s + 1) * h],
            );
        }
        vec![Some(g_ar), Some(g_exo), Some(g_u)]
    }
}

/// Batched rule forecasts.
///
/// `ar: [C, p]`, `exo: [C, q]`, `u: [B, H]`, `histories: [B, ≥ p + d]` (most
/// recent value last). Without `selection` the result is `[B, C, H]`; with a
/// per-sample rule index it is `[B, H]`, holding only the selected rule's
/// forecast (winner-takes-all training).
pub fn arix_op(
    g: &mut Graph,
    ar: Var,
    exo: Var,
    u: Var,
    histories: &Tensor,
    integration: usize,
    selection: Option<&[usize]>,
) -> Result<Var> {
    let (sa, se, su) = (
        g.shape(ar).to_vec(),
        g.shape(exo).to_vec(),
        g.shape(u).to_vec(),
    );
    if sa.len() != 2 || se.len() != 2 || su.len() != 2 || se[0] != sa[0] {
        return Err(Error::shape(
            "arix",
            format!("ar {sa:?}, exo {se:?}, u {su:?}"),
        ));
    }
    let (c, p) = (sa[0], sa[1]);
    let (b, h) = (su[0], su[1]);
    if p == 0 || integration > 1 {
        return Err(Error::Config(format!("ARIX order p={p}, d={integration}")));
    }
    let hs = histories.shape();
    if hs.len() != 2 || hs[0] != b {
        return Err(Error::shape(
            "arix",
            format!("histories {hs:?} for batch {b}"),
        ));
    }
    if hs[1] < p + integration {
        return Err(Error::HistoryTooShort {
            needed: p + integration,
            got: hs[1],
        });
    }
    if let Some(sel) = selection {
        if sel.len() != b || sel.iter().any(|&i| i >= c) {
            return Err(Error::shape(
                "arix",
                "rule selection does not match batch/rules",
            ));
        }
    }
    let f = ArixFn {
        histories: histories.clone(),
        integration,
        selection: selection.map(<[usize]>::to_vec),
    };
    let (arv, exv, uv) = (g.value(ar), g.value(exo), g.value(u));
    let q = se[1];
    let cells = f.cells(b, c);
    let mut out = Vec::with_capacity(cells.len() * h);
    for (s, i) in cells {
        let (levels, _) = recurse(
            histories.row(s),
            uv.row(s),
            &arv.data()[i * p..(i + 1) * p],
            &exv.data()[i * q..(i + 1) * q],
            integration,
            h,
        );
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::UnstableRule { rule: i });
        }
        out.extend(levels);
    }
    let shape = if selection.is_some() {
        vec![b, h]
    } else {
        vec![b, c, h]
    };
    let t = Tensor::new(shape, out)?;
    Ok(g.custom(&[ar, exo, u], t, Box::new(f)))
}

/// Membership-weighted aggregate `[B, H]` of rule forecasts `[B, C, H]`.
pub fn aggregate_op(g: &mut Graph, psi: Var, forecasts: Var) -> Result<Var> {
    let (sp, sf) = (g.shape(psi).to_vec(), g.shape(forecasts).to_vec());
    if sp.len() != 2 || sf.len() != 3 || sf[0] != sp[0] || sf[1] != sp[1] {
        return Err(Error::shape(
            "aggregate",
            format!("psi {sp:?}, forecasts {sf:?}"),
        ));
    }
    let row = g.reshape(psi, vec![sp[0], 1, sp[1]])?;
    let out = g.matmul(row, forecasts)?;
    g.reshape(out, vec![sf[0], sf[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::gradcheck::check_inputs as gradcheck;
    use proptest::prelude::*;

    fn coeffs(ar: &[f64], exo: &[f64], d: usize) -> ArixCoefficients {
        ArixCoefficients::new(ar.to_vec(), exo.to_vec(), d).unwrap()
    }

    #[test]
    fn zero_dynamics_persist_last_value() {
        let f = arix_forecast(
            &[0.1, 0.4, 0.35],
            &[0.9; 5],
            &coeffs(&[0.0, 0.0], &[0.0], 1),
            5,
        )
        .unwrap();
        assert_eq!(f.as_slice(), &[0.35; 5]);
    }

    #[test]
    fn constant_input_adds_linear_drift() {
        let c = 0.2;
        let f = arix_forecast(&[1.0, 1.5], &[c; 6], &coeffs(&[0.0], &[1.0], 1), 6).unwrap();
        for (j, v) in f.as_slice().iter().enumerate() {
            assert!((v - (1.5 + (j + 1) as f64 * c)).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_root_without_integration_is_constant() {
        let f = arix_forecast(&[0.7], &[], &coeffs(&[-1.0], &[], 0), 4).unwrap();
        assert_eq!(f.as_slice(), &[0.7; 4]);
    }

    #[test]
    fn history_too_short_is_rejected() {
        let err = arix_forecast(&[1.0, 2.0], &[0.0; 3], &coeffs(&[0.1, 0.2], &[0.0], 1), 3);
        assert!(matches!(
            err,
            Err(Error::HistoryTooShort { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn explosive_polynomial_is_flagged() {
        let err = arix_forecast(&[1.0, 2.0], &[0.0; 2000], &coeffs(&[-3.0], &[0.0], 0), 2000);
        assert!(matches!(err, Err(Error::UnstableRule { .. })));
    }

    #[test]
    fn first_step_ignores_later_inputs() {
        let c = coeffs(&[0.3, -0.2], &[0.5, 0.25], 1);
        let hist = [0.2, 0.5, 0.1];
        let a = arix_forecast(&hist, &[1.0, 2.0, 3.0], &c, 3).unwrap();
        let b = arix_forecast(&hist, &[1.0, -7.0, 9.0], &c, 3).unwrap();
        assert_eq!(a.as_slice()[0], b.as_slice()[0]);
        assert_ne!(a.as_slice()[1], b.as_slice()[1]);
    }

    #[test]
    fn aggregation_examples() {
        let rules = vec![
            RuleForecast(vec![1.0, 2.0]),
            RuleForecast(vec![5.0, -1.0]),
            RuleForecast(vec![0.0, 0.0]),
        ];
        let one_hot = crate::fuzzy::memberships_from_distances(&[1e6, 0.0, 1e6]);
        assert_eq!(aggregate(&one_hot, &rules).unwrap(), vec![5.0, -1.0]);

        let same = vec![RuleForecast(vec![0.3, 0.4]); 3];
        let psi = crate::fuzzy::memberships_from_distances(&[0.2, 1.1, 0.7]);
        for (a, b) in aggregate(&psi, &same).unwrap().iter().zip([0.3, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }

        let psi = crate::fuzzy::memberships_from_distances(&[3f64.ln(), 0.0]);
        let two = vec![RuleForecast(vec![0.0; 3]), RuleForecast(vec![4.0; 3])];
        for v in aggregate(&psi, &two).unwrap() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_op_matches_plain_forecast_and_selection() {
        let ar = Tensor::matrix(2, 2, vec![0.3, -0.1, -0.5, 0.2]).unwrap();
        let exo = Tensor::matrix(2, 1, vec![0.7, -0.4]).unwrap();
        let u = Tensor::matrix(2, 4, vec![0.1, 0.2, 0.3, 0.4, -0.3, 0.0, 0.5, 0.2]).unwrap();
        let hist = Tensor::matrix(2, 4, vec![0.0, 0.2, 0.1, 0.3, 1.0, 0.9, 0.7, 0.8]).unwrap();
        let mut g = Graph::new();
        let (a, e, uv) = (
            g.constant(ar.clone()),
            g.constant(exo.clone()),
            g.constant(u.clone()),
        );
        let all = arix_op(&mut g, a, e, uv, &hist, 1, None).unwrap();
        let sel = arix_op(&mut g, a, e, uv, &hist, 1, Some(&[1, 0])).unwrap();
        for s in 0..2 {
            for i in 0..2 {
                let c = coeffs(ar.row(i), exo.row(i), 1);
                let want = arix_forecast(hist.row(s), u.row(s), &c, 4).unwrap();
                assert_eq!(
                    &g.value(all).data()[(s * 2 + i) * 4..(s * 2 + i + 1) * 4],
                    want.as_slice()
                );
            }
        }
        assert_eq!(&g.value(sel).data()[..4], &g.value(all).data()[4..8]);
        assert_eq!(&g.value(sel).data()[4..], &g.value(all).data()[8..12]);
    }

    #[test]
    fn gradcheck_recursion() {
        let ar =
            Tensor::matrix(3, 3, vec![0.3, -0.1, 0.05, -0.5, 0.2, 0.1, 0.1, 0.1, -0.2]).unwrap();
        let exo = Tensor::matrix(3, 2, vec![0.7, 0.1, -0.4, 0.3, 0.2, 0.2]).unwrap();
        let u = Tensor::matrix(2, 6, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let hist =
            Tensor::matrix(2, 5, (0..10).map(|i| (i as f64 * 0.21).cos()).collect()).unwrap();
        for d in [0, 1] {
            for sel in [None, Some(vec![2usize, 0])] {
                let r = gradcheck(&[ar.clone(), exo.clone(), u.clone()], 1e-5, |g, v| {
                    let f = arix_op(g, v[0], v[1], v[2], &hist, d, sel.as_deref())?;
                    let sq = g.mul(f, f)?;
                    let t = g.tanh(f);
                    let s = g.add(sq, t)?;
                    Ok(g.sum(s))
                })
                .unwrap();
                assert!(r.passes(1e-4), "d={d} sel={sel:?}: {:?}", r.worst);
            }
        }
    }

    proptest! {
        #[test]
        fn aggregate_stays_within_rule_envelope(
            rules in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..6),
            d2 in prop::collection::vec(0.0f64..5.0, 6),
        ) {
            let psi = crate::fuzzy::memberships_from_distances(&d2[..rules.len()]);
            let forecasts: Vec<_> = rules.iter().cloned().map(RuleForecast).collect();
            let out = aggregate(&psi, &forecasts).unwrap();
            for (j, v) in out.iter().enumerate() {
                let lo = rules.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = rules.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }
    }
}
