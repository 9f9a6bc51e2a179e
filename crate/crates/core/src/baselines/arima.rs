use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest long-autoregression order used for residual proxies.
const LONG_AR_MIN: usize = 20;
/// Singular values below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if p == 0 && q == 0 {
            return Err(Error::Config("ARIMA needs p >= 1 or q >= 1".into()));
        }
        if d > 1 {
            return Err(Error::Config(format!(
                "ARIMA integration order {d} is not supported"
            )));
        }
        Ok(Self { p, d, q })
    }
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ARIMA({},{},{})", self.p, self.d, self.q)
    }
}

impl std::str::FromStr for ArimaOrder {
    type Err = Error;

    /// Parses `p,d,q`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("ARIMA order `{s}` is not `p,d,q`")))?;
        match parts[..] {
            [p, d, q] => Self::new(p, d, q),
            _ => Err(Error::Config(format!("ARIMA order `{s}` is not `p,d,q`"))),
        }
    }
}

/// `y_t = Σ φ_i y_{t-i} + Σ θ_j e_{t-j} + e_t` on the differenced series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub order: ArimaOrder,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
}

fn difference(window: &[f64], d: usize) -> Vec<f64> {
    if d == 0 {
        window.to_vec()
    } else {
        window.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Least squares via SVD; fails when the design is numerically rank deficient.
fn least_squares(x: DMatrix<f64>, y: DVector<f64>) -> Result<Vec<f64>> {
    let svd = x.svd(true, true);
    let top = svd.singular_values.max();
    if !(top > 0.0) || svd.singular_values.min() <= RANK_TOLERANCE * top {
        return Err(Error::Fit("rank-deficient regression".into()));
    }
    let beta = svd
        .solve(&y, RANK_TOLERANCE * top)
        .map_err(|e| Error::Fit(e.to_string()))?;
    Ok(beta.iter().copied().collect())
}

/// Regresses `y[t]` on `cols(t)` for every `t` in `rows`.
fn regress(
    y: &[f64],
    rows: std::ops::Range<usize>,
    width: usize,
    cols: impl Fn(usize, usize) -> f64,
) -> Result<Vec<f64>> {
    let n = rows.len();
    if n <= width {
        return Err(Error::Fit(format!("{n} equations for {width} unknowns")));
    }
    let x = DMatrix::from_fn(n, width, |r, c| cols(rows.start + r, c));
    let target = DVector::from_iterator(n, rows.map(|t| y[t]));
    least_squares(x, target)
}

/// Long-autoregression order: `max(20, 2(p+q))`, reduced when the window is
/// too short for both regression stages.
fn long_ar_order(n: usize, order: ArimaOrder) -> Option<usize> {
    let (p, q) = (order.p, order.q);
    let feasible = |m: usize| n > 2 * m && n > p.max(m + q) + p + q;
    let wanted = LONG_AR_MIN.max(2 * (p + q));
    (q.max(1)..=wanted).rev().find(|&m| feasible(m))
}

/// Reflects the roots of `z^q + θ₁z^(q−1) + … + θ_q` that lie outside the
/// unit circle to `1 / conj(r)`, so the residual filter is stable. The
/// autocovariance shape is unchanged.
fn make_invertible(ma: &[f64]) -> Vec<f64> {
    let q = ma.len();
    if q == 0 {
        return vec![];
    }
    let companion = DMatrix::from_fn(q, q, |r, c| {
        if r == 0 {
            -ma[c]
        } else if r == c + 1 {
            1.0
        } else {
            0.0
        }
    });
    let roots = companion.complex_eigenvalues();
    if roots.iter().all(|r| r.norm() <= 1.0) {
        return ma.to_vec();
    }
    let mut poly = vec![Complex::new(1.0, 0.0)];
    for r in roots.iter() {
        let r = if r.norm() > 1.0 {
            Complex::new(1.0, 0.0) / r.conj()
        } else {
            *r
        };
        let mut next = vec![Complex::new(0.0, 0.0); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        poly = next;
    }
    poly[1..].iter().map(|c| c.re).collect()
}

/// Two-stage Hannan-Rissanen estimate on the `d`-times differenced window.
pub fn fit_arima(window: &[f64], order: ArimaOrder) -> Result<ArimaFit> {
    let y = difference(window, order.d);
    let (p, q) = (order.p, order.q);
    let zero = ArimaFit {
        order,
        ar: vec![0.0; p],
        ma: vec![0.0; q],
    };
    if y.iter().all(|v| v.abs() <= f64::EPSILON) {
        return Ok(zero);
    }
    let n = y.len();
    if q == 0 {
        let ar = regress(&y, p..n, p, |t, c| y[t - 1 - c])?;
        return Ok(ArimaFit {
            order,
            ar,
            ma: vec![],
        });
    }
    let m = long_ar_order(n, order).ok_or_else(|| {
        Error::Fit(format!(
            "a window of {} values is too short for {order}",
            window.len()
        ))
    })?;
    let phi = regress(&y, m..n, m, |t, c| y[t - 1 - c])?;
    let mut e = vec![0.0; n];
    for t in m..n {
        e[t] = y[t] - (0..m).map(|i| phi[i] * y[t - 1 - i]).sum::<f64>();
    }
    let start = p.max(m + q);
    let beta = regress(&y, start..n, p + q, |t, c| {
        if c < p {
            y[t - 1 - c]
        } else {
            e[t - 1 - (c - p)]
        }
    })?;
    Ok(ArimaFit {
        order,
        ar: beta[..p].to_vec(),
        ma: make_invertible(&beta[p..]),
    })
}

/// Recursive `horizon`-step forecast. In-window residuals are filtered
/// recursively (zero before the first full lag set); future residuals are
/// zero. With `d = 1` the increments are integrated from the last value.
pub fn arima_forecast(fit: &ArimaFit, window: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let Some(&last) = window.last() else {
        return Err(Error::Data("ARIMA forecast of an empty window".into()));
    };
    let y = difference(window, fit.order.d);
    let (p, q) = (fit.ar.len(), fit.ma.len());
    let n = y.len();
    let mut e = vec![0.0; n + horizon];
    let mut ext = y.clone();
    ext.resize(n + horizon, 0.0);
    let predict = |ext: &[f64], e: &[f64], t: usize| {
        let ar: f64 = (0..p)
            .filter(|&i| t > i)
            .map(|i| fit.ar[i] * ext[t - 1 - i])
            .sum();
        let ma: f64 = (0..q)
            .filter(|&j| t > j)
            .map(|j| fit.ma[j] * e[t - 1 - j])
            .sum();
        ar + ma
    };
    for t in p..n {
        e[t] = y[t] - predict(&ext, &e, t);
    }
    for t in n..n + horizon {
        ext[t] = predict(&ext, &e, t);
    }
    let steps = &ext[n..];
    let out: Vec<f64> = if fit.order.d == 1 {
        steps
            .iter()
            .scan(last, |level, s| {
                *level += s;
                Some(*level)
            })
            .collect()
    } else {
        steps.to_vec()
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite ARIMA forecast".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn arma(phi: &[f64], theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let burn = 500;
        let mut y = vec![0.0; n + burn];
        let mut e = vec![0.0; n + burn];
        for t in 0..n + burn {
            e[t] = StandardNormal.sample(&mut rng);
            let mut v = e[t];
            for (i, a) in phi.iter().enumerate() {
                if t > i {
                    v += a * y[t - 1 - i];
                }
            }
            for (j, b) in theta.iter().enumerate() {
                if t > j {
                    v += b * e[t - 1 - j];
                }
            }
            y[t] = v;
        }
        y.split_off(burn)
    }

    #[test]
    fn recovers_ar2() {
        let y = arma(&[0.5, -0.3], &[], 10_000, 1);
        let fit = fit_arima(&y, ArimaOrder::new(2, 0, 0).unwrap()).unwrap();
        assert!(
            (fit.ar[0] - 0.5).abs() < 0.05 && (fit.ar[1] + 0.3).abs() < 0.05,
            "{fit:?}"
        );
    }

    #[test]
    fn white_noise_has_no_memory() {
        let y = arma(&[], &[], 10_000, 2);
        let fit = fit_arima(&y, ArimaOrder::new(1, 0, 0).unwrap()).unwrap();
        assert!(fit.ar[0].abs() < 0.05);
    }

    #[test]
    fn constant_window_is_flat() {
        let order = ArimaOrder::new(4, 1, 1).unwrap();
        let fit = fit_arima(&[3.5; 60], order).unwrap();
        assert!(fit.ar.iter().chain(&fit.ma).all(|&c| c == 0.0));
        assert_eq!(arima_forecast(&fit, &[3.5; 60], 5).unwrap(), vec![3.5; 5]);
    }

    #[test]
    fn zero_coefficients_persist() {
        let fit = ArimaFit {
            order: ArimaOrder::new(2, 1, 1).unwrap(),
            ar: vec![0.0; 2],
            ma: vec![0.0],
        };
        assert_eq!(
            arima_forecast(&fit, &[1.0, 4.0, 2.5], 3).unwrap(),
            vec![2.5; 3]
        );
    }

    #[test]
    fn ar1_decays_geometrically() {
        let fit = ArimaFit {
            order: ArimaOrder::new(1, 0, 0).unwrap(),
            ar: vec![0.8],
            ma: vec![],
        };
        let window: Vec<f64> = (0..10).map(|t| 0.8f64.powi(t) * 2.0).collect();
        let f = arima_forecast(&fit, &window, 6).unwrap();
        let last = window[9];
        for (h, v) in f.iter().enumerate() {
            assert!((v - last * 0.8f64.powi(h as i32 + 1)).abs() < 1e-9);
        }
    }

    #[test]
    fn forecasts_are_prefix_consistent() {
        let y = arma(&[0.6], &[0.3], 300, 3);
        let level: Vec<f64> = y
            .iter()
            .scan(0.0, |s, v| {
                *s += v;
                Some(*s)
            })
            .collect();
        let order = ArimaOrder::new(1, 1, 1).unwrap();
        let fit = fit_arima(&level, order).unwrap();
        let one = arima_forecast(&fit, &level, 1).unwrap();
        let two = arima_forecast(&fit, &level, 2).unwrap();
        assert_eq!(one[0], two[0]);
    }

    #[test]
    fn short_windows_fail_cleanly() {
        let order = ArimaOrder::new(30, 1, 1).unwrap();
        let y = arma(&[0.2], &[], 60, 4);
        assert!(matches!(fit_arima(&y, order), Err(Error::Fit(_))));
    }

    #[test]
    fn ma_roots_are_reflected() {
        assert_eq!(make_invertible(&[0.4]), vec![0.4]);
        assert!((make_invertible(&[-1.25])[0] + 0.8).abs() < 1e-12);
        // (1 + 2L)(1 + 0.5L) = 1 + 2.5L + L² → (1 + 0.5L)²
        let m = make_invertible(&[2.5, 1.0]);
        assert!(
            (m[0] - 1.0).abs() < 1e-9 && (m[1] - 0.25).abs() < 1e-9,
            "{m:?}"
        );
    }

    #[test]
    fn orders_parse() {
        assert_eq!(
            "4,1,1".parse::<ArimaOrder>().unwrap(),
            ArimaOrder { p: 4, d: 1, q: 1 }
        );
        assert!("4,2,1".parse::<ArimaOrder>().is_err());
        assert!("0,1,0".parse::<ArimaOrder>().is_err());
        assert!("4,1".parse::<ArimaOrder>().is_err());
    }
}
