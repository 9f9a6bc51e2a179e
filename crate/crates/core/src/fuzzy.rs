//! Rule antecedents: multivariate Gaussian clusters over the latent vector,
//! softmax-normalized memberships and the Bhattacharyya distance between
//! clusters.
//!
//! Covariances are parameterized by an unconstrained lower-triangular factor
//! `L` as `Σ = L Lᵀ + εI` with `ε = COVARIANCE_FLOOR`, which keeps every `Σ`
//! positive definite under arbitrary gradient updates. Entries above the
//! diagonal of the stored factor are ignored and receive zero gradient.

use serde::{Deserialize, Serialize};

use crate::compute::{Function, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::linalg;

pub const COVARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianCluster {
    mean: Vec<f64>,
    factor: Vec<f64>,
}

impl GaussianCluster {
    /// Cluster from a center and a (row-major, `D × D`) factor; only its
    /// lower triangle is used.
    pub fn new(mean: Vec<f64>, factor: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || factor.len() != d * d {
            return Err(Error::shape(
                "gaussian_cluster",
                format!("mean of length {d} with factor of length {}", factor.len()),
            ));
        }
        Ok(Self {
            mean,
            factor: lower_triangle(&factor, d),
        })
    }

    /// Cluster whose covariance equals `covariance` exactly (up to rounding).
    /// Fails unless `covariance - εI` is positive definite.
    pub fn from_covariance(mean: Vec<f64>, covariance: &[f64]) -> Result<Self> {
        let d = mean.len();
        let mut shifted = covariance.to_vec();
        for i in 0..d {
            shifted[i * d + i] -= COVARIANCE_FLOOR;
        }
        let factor = linalg::cholesky(&shifted, d)?;
        Self::new(mean, factor)
    }

    /// `Σ = std² I + εI`.
    pub fn isotropic(mean: Vec<f64>, std: f64) -> Self {
        let d = mean.len();
        let mut factor = vec![0.0; d * d];
        for i in 0..d {
            factor[i * d + i] = std;
        }
        Self { mean, factor }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn factor(&self) -> &[f64] {
        &self.factor
    }

    pub fn covariance(&self) -> Vec<f64> {
        covariance_from_factor(&self.factor, self.dim())
    }

    fn covariance_cholesky(&self) -> Result<Vec<f64>> {
        linalg::cholesky(&self.covariance(), self.dim())
    }
}

fn lower_triangle(factor: &[f64], d: usize) -> Vec<f64> {
    let mut l = factor.to_vec();
    for i in 0..d {
        for j in i + 1..d {
            l[i * d + j] = 0.0;
        }
    }
    l
}

/// `L Lᵀ + εI` using only the lower triangle of `factor`.
pub fn covariance_from_factor(factor: &[f64], d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let v: f64 = (0..=j).map(|k| factor[i * d + k] * factor[j * d + k]).sum();
            s[i * d + j] = v;
            s[j * d + i] = v;
        }
        s[i * d + i] += COVARIANCE_FLOOR;
    }
    s
}

/// Rule activations: non-negative and summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipVector(Vec<f64>);

impl MembershipVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest activation, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// `(z − μ)ᵀ Σ⁻¹ (z − μ)`, via a triangular solve and a squared norm.
pub fn mahalanobis_sq(z: &[f64], cluster: &GaussianCluster) -> Result<f64> {
    if z.len() != cluster.dim() {
        return Err(Error::shape(
            "mahalanobis",
            format!(
                "point of length {} vs cluster dim {}",
                z.len(),
                cluster.dim()
            ),
        ));
    }
    let chol = cluster.covariance_cholesky()?;
    let delta: Vec<f64> = z.iter().zip(&cluster.mean).map(|(a, b)| a - b).collect();
    let y = linalg::solve_lower(&chol, cluster.dim(), &delta);
    Ok(y.iter().map(|v| v * v).sum())
}

/// `Ψ_i = exp(−d_i²) / Σ_j exp(−d_j²)`, shifted by the maximum exponent.
pub fn memberships_from_distances(d2: &[f64]) -> MembershipVector {
    let mut psi: Vec<f64> = d2.iter().map(|d| -d).collect();
    crate::compute::softmax_in_place(&mut psi);
    MembershipVector(psi)
}

pub fn memberships(z: &[f64], clusters: &[GaussianCluster]) -> Result<MembershipVector> {
    if clusters.is_empty() {
        return Err(Error::Config("at least one cluster is required".into()));
    }
    let d2 = clusters
        .iter()
        .map(|c| mahalanobis_sq(z, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(memberships_from_distances(&d2))
}

/// Index of the smallest squared distance; the lowest index wins ties.
pub fn hardmax_from_distances(d2: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in d2.iter().enumerate() {
        if v < d2[best] {
            best = i;
        }
    }
    best
}

pub fn hardmax_rule(z: &[f64], clusters: &[GaussianCluster]) -> Result<usize> {
    if clusters.is_empty() {
        return Err(Error::Config("at least one cluster is required".into()));
    }
    let d2 = clusters
        .iter()
        .map(|c| mahalanobis_sq(z, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(hardmax_from_distances(&d2))
}

/// Pieces of the Bhattacharyya distance reused by its gradient.
struct Pooled {
    chol: Vec<f64>,
    w: Vec<f64>,
    value: f64,
}

fn pooled(
    mean_a: &[f64],
    cov_a: &[f64],
    mean_b: &[f64],
    cov_b: &[f64],
    d: usize,
) -> Result<Pooled> {
    let pooled: Vec<f64> = cov_a
        .iter()
        .zip(cov_b)
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    let chol = linalg::cholesky(&pooled, d)?;
    let ca = linalg::cholesky(cov_a, d)?;
    let cb = linalg::cholesky(cov_b, d)?;
    let delta: Vec<f64> = mean_a.iter().zip(mean_b).map(|(x, y)| x - y).collect();
    let w = linalg::cholesky_solve(&chol, d, &delta);
    let quad: f64 = delta.iter().zip(&w).map(|(x, y)| x * y).sum();
    let value = quad / 8.0 + 0.5 * linalg::cholesky_log_det(&chol, d)
        - 0.25 * linalg::cholesky_log_det(&ca, d)
        - 0.25 * linalg::cholesky_log_det(&cb, d);
    Ok(Pooled { chol, w, value })
}

/// Bhattacharyya distance between two Gaussian clusters:
/// `⅛ Δᵀ P⁻¹ Δ + ½ ln(det P / sqrt(det Σa det Σb))` with `P = (Σa + Σb)/2`.
pub fn bhattacharyya(a: &GaussianCluster, b: &GaussianCluster) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            "bhattacharyya",
            format!("dims {} and {}", a.dim(), b.dim()),
        ));
    }
    Ok(pooled(&a.mean, &a.covariance(), &b.mean, &b.covariance(), a.dim())?.value)
}

/// Clusters from stacked parameter tensors `means: [C, D]`, `factors: [C, D, D]`.
pub fn clusters_from_tensors(means: &Tensor, factors: &Tensor) -> Result<Vec<GaussianCluster>> {
    let (c, d) = check_cluster_shapes("clusters", means.shape(), factors.shape())?;
    (0..c)
        .map(|i| {
            GaussianCluster::new(
                means.data()[i * d..(i + 1) * d].to_vec(),
                factors.data()[i * d * d..(i + 1) * d * d].to_vec(),
            )
        })
        .collect()
}

fn check_cluster_shapes(
    op: &'static str,
    means: &[usize],
    factors: &[usize],
) -> Result<(usize, usize)> {
    if means.len() != 2 || factors != [means[0], means[1], means[1]] {
        return Err(Error::shape(
            op,
            format!("means {means:?}, factors {factors:?}"),
        ));
    }
    Ok((means[0], means[1]))
}

// ---- differentiable versions ---------------------------------------------

/// `∂f/∂L = (G + Gᵀ) L` restricted to the lower triangle, for symmetric `G`.
fn factor_grad(g_sigma: &[f64], factor: &[f64], d: usize, out: &mut [f64]) {
    for i in 0..d {
        for j in 0..=i {
            let v: f64 = (0..d)
                .map(|k| 2.0 * g_sigma[i * d + k] * factor[k * d + j])
                .sum();
            out[i * d + j] += v;
        }
    }
}

struct MahalanobisFn;

impl Function for MahalanobisFn {
    fn name(&self) -> &'static str {
        "mahalanobis"
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &[f64],
    ) -> Vec<Option<Vec<f64>>> {
        let (z, means, factors) = (inputs[0], inputs[1], inputs[2]);
        let (c, d) = (means.shape()[0], means.shape()[1]);
        let b = z.shape()[0];
        let mut gz = vec![0.0; z.len()];
        let mut gmu = vec![0.0; means.len()];
        let mut gl = vec![0.0; factors.len()];
        for i in 0..c {
            let factor = lower_triangle(&factors.data()[i * d * d..(i + 1) * d * d], d);
            let chol = linalg::cholesky(&covariance_from_factor(&factor, d), d)
                .expect("factor was valid in forward");
            let mu = &means.data()[i * d..(i + 1) * d];
            let mut g_sigma = vec![0.0; d * d];
            for s in 0..b {
                let gs = grad[s * c + i];
                if gs == 0.0 {
                    continue;
                }
                let delta: Vec<f64> = z.row(s).iter().zip(mu).map(|(x, m)| x - m).collect();
                let w = linalg::cholesky_solve(&chol, d, &delta);
                for k in 0..d {
                    gz[s * d + k] += 2.0 * gs * w[k];
                    gmu[i * d + k] -= 2.0 * gs * w[k];
                    for l in 0..d {
                        g_sigma[k * d + l] -= gs * w[k] * w[l];
                    }
                }
            }
            factor_grad(&g_sigma, &factor, d, &mut gl[i * d * d..(i + 1) * d * d]);
        }
        vec![Some(gz), Some(gmu), Some(gl)]
    }
}

/// Squared Mahalanobis distances `[B, C]` of latent rows `z: [B, D]` to the
/// clusters `means: [C, D]`, `factors: [C, D, D]`.
pub fn mahalanobis_op(g: &mut Graph, z: Var, means: Var, factors: Var) -> Result<Var> {
    let (c, d) = check_cluster_shapes("mahalanobis", g.shape(means), g.shape(factors))?;
    let zs = g.shape(z);
    if zs.len() != 2 || zs[1] != d {
        return Err(Error::shape(
            "mahalanobis",
            format!("latent {zs:?} vs dim {d}"),
        ));
    }
    let b = zs[0];
    let clusters = clusters_from_tensors(g.value(means), g.value(factors))?;
    let zv = g.value(z);
    let mut out = vec![0.0; b * c];
    for (i, cl) in clusters.iter().enumerate() {
        let chol = cl.covariance_cholesky()?;
        for s in 0..b {
            let delta: Vec<f64> = zv
                .row(s)
                .iter()
                .zip(cl.mean())
                .map(|(x, m)| x - m)
                .collect();
            let y = linalg::solve_lower(&chol, d, &delta);
            out[s * c + i] = y.iter().map(|v| v * v).sum();
        }
    }
    let t = Tensor::matrix(b, c, out)?;
    Ok(g.custom(&[z, means, factors], t, Box::new(MahalanobisFn)))
}

/// Softmax memberships `[B, C]` from squared distances `[B, C]`.
pub fn membership_op(g: &mut Graph, d2: Var) -> Var {
    let neg = g.neg(d2);
    g.softmax(neg)
}

struct BhattacharyyaFn;

impl Function for BhattacharyyaFn {
    fn name(&self) -> &'static str {
        "bhattacharyya"
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &[f64],
    ) -> Vec<Option<Vec<f64>>> {
        let (means, factors) = (inputs[0], inputs[1]);
        let (c, d) = (means.shape()[0], means.shape()[1]);
        let mut gmu = vec![0.0; means.len()];
        let mut gl = vec![0.0; factors.len()];
        let lowers: Vec<Vec<f64>> = (0..c)
            .map(|i| lower_triangle(&factors.data()[i * d * d..(i + 1) * d * d], d))
            .collect();
        let covs: Vec<Vec<f64>> = lowers
            .iter()
            .map(|l| covariance_from_factor(l, d))
            .collect();
        let cov_invs: Vec<Vec<f64>> = covs
            .iter()
            .map(|s| linalg::cholesky_inverse(&linalg::cholesky(s, d).expect("valid"), d))
            .collect();
        let mut g_sigma = vec![vec![0.0; d * d]; c];
        for m in 0..c {
            for n in 0..c {
                let gs = grad[m * c + n];
                if m == n || gs == 0.0 {
                    continue;
                }
                let p = pooled(
                    &means.data()[m * d..(m + 1) * d],
                    &covs[m],
                    &means.data()[n * d..(n + 1) * d],
                    &covs[n],
                    d,
                )
                .expect("valid in forward");
                let p_inv = linalg::cholesky_inverse(&p.chol, d);
                for k in 0..d {
                    gmu[m * d + k] += gs * 0.25 * p.w[k];
                    gmu[n * d + k] -= gs * 0.25 * p.w[k];
                }
                for k in 0..d * d {
                    let (r, col) = (k / d, k % d);
                    // ∂d/∂P = −⅛ w wᵀ + ½ P⁻¹, and P = (Σm + Σn)/2.
                    let dp = -0.125 * p.w[r] * p.w[col] + 0.5 * p_inv[k];
                    g_sigma[m][k] += gs * (0.5 * dp - 0.25 * cov_invs[m][k]);
                    g_sigma[n][k] += gs * (0.5 * dp - 0.25 * cov_invs[n][k]);
                }
            }
        }
        for i in 0..c {
            factor_grad(
                &g_sigma[i],
                &lowers[i],
                d,
                &mut gl[i * d * d..(i + 1) * d * d],
            );
        }
        vec![Some(gmu), Some(gl)]
    }
}

/// Pairwise Bhattacharyya distances `[C, C]` (zero diagonal).
pub fn bhattacharyya_op(g: &mut Graph, means: Var, factors: Var) -> Result<Var> {
    let (c, _) = check_cluster_shapes("bhattacharyya", g.shape(means), g.shape(factors))?;
    let clusters = clusters_from_tensors(g.value(means), g.value(factors))?;
    let mut out = vec![0.0; c * c];
    for m in 0..c {
        for n in m + 1..c {
            let v = bhattacharyya(&clusters[m], &clusters[n])?;
            out[m * c + n] = v;
            out[n * c + m] = v;
        }
    }
    let t = Tensor::matrix(c, c, out)?;
    Ok(g.custom(&[means, factors], t, Box::new(BhattacharyyaFn)))
}

/// Pairwise Bhattacharyya matrix of plain clusters.
pub fn bhattacharyya_matrix(clusters: &[GaussianCluster]) -> Result<Vec<Vec<f64>>> {
    let c = clusters.len();
    let mut out = vec![vec![0.0; c]; c];
    for m in 0..c {
        for n in m + 1..c {
            let v = bhattacharyya(&clusters[m], &clusters[n])?;
            out[m][n] = v;
            out[n][m] = v;
        }
    }
    Ok(out)
}
