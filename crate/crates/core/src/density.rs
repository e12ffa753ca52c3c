//! Kernel density estimates and the Jensen-Shannon gradient estimator used to
//! pretrain the feasibility policy.
//!
//! For one partial state the pretraining step works on a [`SampleBatch`]:
//!
//! 1. support actions `a_i = π(s, z_i)` from uniform latents,
//! 2. one noisy proposal sample per support point, `a*_j = a_j + ε_j` with
//!    `ε_j ~ N(0, σ'² I)`, which is a draw from the σ'-KDE,
//! 3. log-densities `log q̂_σ(a*_j)` and `log q̂_σ'(a*_j)`,
//! 4. feasibility bits `r_j = g(s, a*_j)`, the importance-sampled partition
//!    estimate `Ẑ = (1/N) Σ r_j / q̂_σ'(a*_j)` and target values `p̂_j = r_j / Ẑ`.
//!
//! [`js_gradient`] then differentiates the surrogate
//! `(1/2N) Σ_j w_j log q̂_σ(a*_j)` with the constant weights
//! `w_j = (q̂_σ/q̂_σ')(a*_j) · log(2 q̂_σ(a*_j) / (p̂_j + q̂_σ(a*_j)))`,
//! whose parameter gradient is the JS-divergence gradient estimate. The
//! samples `a*_j` are held fixed; the gradient reaches the parameters only
//! through the support actions inside the KDE.
//!
//! All KDE sums run in the log domain.

use std::f64::consts::{LN_2, PI};

use crate::autodiff::{Matrix, NetworkParams, ParamVars, Tape, Var};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// `log k_σ(u)` for the isotropic Gaussian kernel in `d` dimensions.
#[inline]
pub fn log_kernel(sq_dist: f64, sigma: f64, d: usize) -> f64 {
    -sq_dist / (2.0 * sigma * sigma) - 0.5 * d as f64 * (2.0 * PI * sigma * sigma).ln()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_bandwidth(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::usage(format!("KDE bandwidth must be positive, got {sigma}")))
    }
}

/// `log q̂_σ(query)` over the support rows.
pub fn kde_log_eval(support: &Matrix, query: &[f64], sigma: f64) -> Result<f64> {
    check_bandwidth(sigma)?;
    if support.rows() == 0 {
        return Err(Error::usage("KDE needs at least one support point"));
    }
    if support.cols() != query.len() {
        return Err(Error::config("KDE query dimension mismatch"));
    }
    let d = support.cols();
    let logs: Vec<f64> = (0..support.rows()).map(|i| log_kernel(sq_dist(support.row(i), query), sigma, d)).collect();
    Ok(log_sum_exp(&logs) - (support.rows() as f64).ln())
}

/// `q̂_σ(query) = (1/N) Σ_i k_σ(query − a_i)`.
pub fn kde_eval(support: &Matrix, query: &[f64], sigma: f64) -> Result<f64> {
    kde_log_eval(support, query, sigma).map(f64::exp)
}

/// `log q̂_σ` at every query row.
pub fn kde_log_batch(support: &Matrix, queries: &Matrix, sigma: f64) -> Result<Vec<f64>> {
    check_bandwidth(sigma)?;
    if support.rows() == 0 {
        return Err(Error::usage("KDE needs at least one support point"));
    }
    if support.cols() != queries.cols() {
        return Err(Error::config("KDE query dimension mismatch"));
    }
    Ok(log_kde_with_responsibilities(support, queries, sigma).0)
}

/// Log-densities plus the kernel responsibilities
/// `r_ji = k_σ(q_j − a_i) / Σ_l k_σ(q_j − a_l)`.
pub(crate) fn log_kde_with_responsibilities(support: &Matrix, queries: &Matrix, sigma: f64) -> (Vec<f64>, Matrix) {
    let n = support.rows();
    let d = support.cols();
    let ln_n = (n as f64).ln();
    let mut resp = Matrix::zeros(queries.rows(), n);
    let mut out = Vec::with_capacity(queries.rows());
    let mut logs = vec![0.0; n];
    for j in 0..queries.rows() {
        let q = queries.row(j);
        for (i, l) in logs.iter_mut().enumerate() {
            *l = log_kernel(sq_dist(support.row(i), q), sigma, d);
        }
        let lse = log_sum_exp(&logs);
        for (r, l) in resp.row_mut(j).iter_mut().zip(&logs) {
            *r = (l - lse).exp();
        }
        out.push(lse - ln_n);
    }
    (out, resp)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Gaussian noise draws `ε_j ~ N(0, σ'² I)`, one row per support point.
pub fn proposal_noise(n: usize, d: usize, sigma_prime: f64, rng: &mut Rng) -> Result<Matrix> {
    check_bandwidth(sigma_prime)?;
    let mut m = Matrix::zeros(n, d);
    for v in m.data_mut() {
        *v = sigma_prime * rng::normal(rng);
    }
    Ok(m)
}

/// One noisy sample per support point: `a*_j = a_j + ε_j`.
pub fn sample_proposal(actions: &Matrix, sigma_prime: f64, rng: &mut Rng) -> Result<Matrix> {
    let noise = proposal_noise(actions.rows(), actions.cols(), sigma_prime, rng)?;
    Ok(add(actions, &noise))
}

fn add(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    out
}

/// Importance-sampled partition estimate and the resulting target values.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// `Ẑ`; zero when no proposal sample was feasible.
    pub z_hat: f64,
    /// `ln p̂_j`, `-inf` where `r_j = 0`.
    pub log_target: Vec<f64>,
}

impl Partition {
    /// True when `Ẑ = 0` and the state must be skipped.
    pub fn is_degenerate(&self) -> bool {
        !(self.z_hat > 0.0)
    }
}

/// `Ẑ = (1/N) Σ_j r_j / q̂'_j`, `p̂_j = r_j / Ẑ`.
pub fn estimate_partition(log_q_prime: &[f64], feasible: &[bool]) -> Result<Partition> {
    if log_q_prime.len() != feasible.len() || feasible.is_empty() {
        return Err(Error::usage("partition estimate needs matching non-empty inputs"));
    }
    let n = feasible.len() as f64;
    let mut terms = Vec::new();
    for (&lq, &r) in log_q_prime.iter().zip(feasible) {
        if r {
            if !lq.is_finite() {
                return Err(Error::usage("proposal density must be positive at feasible samples"));
            }
            terms.push(-lq);
        }
    }
    if terms.is_empty() {
        return Ok(Partition { z_hat: 0.0, log_target: vec![f64::NEG_INFINITY; feasible.len()] });
    }
    let log_z = log_sum_exp(&terms) - n.ln();
    let log_target = feasible.iter().map(|&r| if r { -log_z } else { f64::NEG_INFINITY }).collect();
    Ok(Partition { z_hat: log_z.exp(), log_target })
}

/// Everything the gradient estimator needs for one state.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub state_id: u64,
    /// Uniform latents `z_i` (N × d).
    pub latents: Matrix,
    /// Support actions `a_i` (N × d).
    pub actions: Matrix,
    /// Noise `ε_j` (N × d).
    pub noise: Matrix,
    /// Proposal samples `a*_j = a_j + ε_j`.
    pub samples: Matrix,
    /// `ln q̂_σ(a*_j)`.
    pub log_q: Vec<f64>,
    /// `ln q̂_σ'(a*_j)`.
    pub log_q_prime: Vec<f64>,
    /// `r_j = g(s, a*_j)`.
    pub feasible: Vec<bool>,
    pub partition: Partition,
}

impl SampleBatch {
    /// Assemble a batch from latents, their mapped actions and noise draws.
    pub fn build(
        state_id: u64,
        latents: Matrix,
        actions: Matrix,
        noise: Matrix,
        sigma: f64,
        sigma_prime: f64,
        mut feasible: impl FnMut(&[f64]) -> bool,
    ) -> Result<Self> {
        if sigma_prime < sigma {
            return Err(Error::usage(format!("proposal bandwidth {sigma_prime} below KDE bandwidth {sigma}")));
        }
        let n = actions.rows();
        if latents.rows() != n || noise.shape() != actions.shape() {
            return Err(Error::config("sample batch fields disagree in size"));
        }
        let samples = add(&actions, &noise);
        let log_q = kde_log_batch(&actions, &samples, sigma)?;
        let log_q_prime = kde_log_batch(&actions, &samples, sigma_prime)?;
        let flags: Vec<bool> = (0..n).map(|j| feasible(samples.row(j))).collect();
        let partition = estimate_partition(&log_q_prime, &flags)?;
        Ok(SampleBatch { state_id, latents, actions, noise, samples, log_q, log_q_prime, feasible: flags, partition })
    }

    pub fn len(&self) -> usize {
        self.actions.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy with rows sorted by latent (lexicographic, total order) so that
    /// downstream reductions do not depend on the draw order.
    pub fn canonical(&self) -> SampleBatch {
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (self.latents.row(a), self.latents.row(b));
            for (x, y) in ra.iter().zip(rb) {
                let o = x.total_cmp(y);
                if o != std::cmp::Ordering::Equal {
                    return o;
                }
            }
            a.cmp(&b)
        });
        let pick = |m: &Matrix| Matrix::from_rows(&idx.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>());
        SampleBatch {
            state_id: self.state_id,
            latents: pick(&self.latents),
            actions: pick(&self.actions),
            noise: pick(&self.noise),
            samples: pick(&self.samples),
            log_q: idx.iter().map(|&i| self.log_q[i]).collect(),
            log_q_prime: idx.iter().map(|&i| self.log_q_prime[i]).collect(),
            feasible: idx.iter().map(|&i| self.feasible[i]).collect(),
            partition: Partition {
                z_hat: self.partition.z_hat,
                log_target: idx.iter().map(|&i| self.partition.log_target[i]).collect(),
            },
        }
    }

    /// Fraction of proposal samples that were feasible.
    pub fn feasible_fraction(&self) -> f64 {
        self.feasible.iter().filter(|&&r| r).count() as f64 / self.len().max(1) as f64
    }
}

/// Per-sample weights `w_j` of the surrogate and how many were dropped for
/// being non-finite.
pub fn js_weights(log_q: &[f64], log_q_prime: &[f64], log_target: &[f64]) -> (Vec<f64>, usize) {
    let mut dropped = 0;
    let w = log_q
        .iter()
        .zip(log_q_prime)
        .zip(log_target)
        .map(|((&lq, &lqp), &lp)| {
            let ratio = (lq - lqp).exp();
            let log_term = LN_2 + lq - log_add_exp(lp, lq);
            let w = ratio * log_term;
            if w.is_finite() {
                w
            } else {
                dropped += 1;
                0.0
            }
        })
        .collect();
    (w, dropped)
}

/// Monte-Carlo JS divergence estimate for the batch,
/// `(1/N) Σ_j [½ p̂ ln(2p̂/(p̂+q̂)) + ½ q̂ ln(2q̂/(p̂+q̂))] / q̂'`.
pub fn js_divergence_estimate(batch: &SampleBatch) -> f64 {
    let n = batch.len() as f64;
    let mut acc = 0.0;
    for j in 0..batch.len() {
        let (lq, lqp, lp) = (batch.log_q[j], batch.log_q_prime[j], batch.partition.log_target[j]);
        let lm = log_add_exp(lp, lq);
        let p_term = if lp == f64::NEG_INFINITY { 0.0 } else { 0.5 * (lp - lqp).exp() * (LN_2 + lp - lm) };
        let q_term = 0.5 * (lq - lqp).exp() * (LN_2 + lq - lm);
        acc += p_term + q_term;
    }
    acc / n
}

/// Surrogate whose gradient w.r.t. whatever produced `support` is the JS
/// gradient estimate. `support` must hold the batch's support actions.
pub fn js_surrogate<'t>(support: Var<'t>, batch: &SampleBatch, sigma: f64) -> (Var<'t>, usize) {
    let tape = support.tape();
    let log_q = support.log_kde(&batch.samples, sigma);
    let (w, dropped) = js_weights(&batch.log_q, &batch.log_q_prime, &batch.partition.log_target);
    let n = batch.len() as f64;
    let weights = tape.constant(Matrix::column(&w));
    (log_q.mul(weights).sum().scale(1.0 / (2.0 * n)), dropped)
}

#[derive(Debug, Clone)]
pub struct JsGradient {
    pub grad: Vec<f64>,
    pub dropped: usize,
    pub surrogate: f64,
}

/// JS-divergence gradient for one state's batch.
///
/// `map` must recompute the support actions from the latents it is given;
/// it is called on the canonically ordered batch. Returns `Ok(None)` for a
/// degenerate partition estimate (no feasible samples).
pub fn js_gradient<F>(params: &NetworkParams, batch: &SampleBatch, sigma: f64, map: F) -> Result<Option<JsGradient>>
where
    F: for<'t> Fn(&'t Tape, &ParamVars<'t>, &Matrix) -> Var<'t>,
{
    check_bandwidth(sigma)?;
    if batch.partition.is_degenerate() {
        return Ok(None);
    }
    let batch = batch.canonical();
    let tape = Tape::new();
    let pv = tape.params(params);
    let support = map(&tape, &pv, &batch.latents);
    if support.shape() != batch.actions.shape() {
        return Err(Error::config("mapped support shape differs from batch actions"));
    }
    let (loss, dropped) = js_surrogate(support, &batch, sigma);
    let grads = tape.gradient(loss)?;
    Ok(Some(JsGradient { grad: grads.wrt(&pv), dropped, surrogate: loss.scalar() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_kde(support: &Matrix, q: &[f64], sigma: f64) -> f64 {
        // double loop in the linear domain
        let d = support.cols() as f64;
        let norm = (2.0 * PI * sigma * sigma).powf(-d / 2.0);
        let mut s = 0.0;
        for i in 0..support.rows() {
            let mut sq = 0.0;
            for k in 0..support.cols() {
                let u = q[k] - support.get(i, k);
                sq += u * u;
            }
            s += norm * (-sq / (2.0 * sigma * sigma)).exp();
        }
        s / support.rows() as f64
    }

    #[test]
    fn single_kernel_peak() {
        let s = Matrix::from_rows(&[[0.3, -0.2]]);
        let v = kde_eval(&s, &[0.3, -0.2], 0.1).unwrap();
        assert!((v - 1.0 / (2.0 * PI * 0.01)).abs() < 1e-12);
        assert!((v - 15.915494309189533).abs() < 1e-9);
    }

    #[test]
    fn symmetric_pair_equals_single_kernel() {
        let r = 0.17;
        let s = Matrix::from_rows(&[[r, 0.0], [-r, 0.0]]);
        let v = kde_eval(&s, &[0.0, 0.0], 0.2).unwrap();
        let k = log_kernel(r * r, 0.2, 2).exp();
        assert!((v - k).abs() < 1e-13);
    }

    #[test]
    fn bad_bandwidth_rejected() {
        let s = Matrix::from_rows(&[[0.0]]);
        assert!(matches!(kde_eval(&s, &[0.0], 0.0), Err(Error::Usage(_))));
        assert!(matches!(kde_eval(&s, &[0.0], -1.0), Err(Error::Usage(_))));
        let mut rng = rng::seeded(0);
        assert!(matches!(sample_proposal(&s, 0.0, &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = rng::seeded(11);
        let mut s = Matrix::zeros(64, 3);
        for v in s.data_mut() {
            *v = rng::uniform(&mut rng, -1.0, 1.0);
        }
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| rng::uniform(&mut rng, -1.2, 1.2)).collect();
            let a = kde_eval(&s, &q, 0.15).unwrap();
            let b = direct_kde(&s, &q, 0.15);
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn log_domain_survives_far_queries() {
        let s = Matrix::from_rows(&[[0.0; 7]]);
        let l = kde_log_eval(&s, &[5.0; 7], 0.01).unwrap();
        assert!(l.is_finite() && l < -1e5);
    }

    #[test]
    fn partition_single_sample() {
        let p = estimate_partition(&[0.5f64.ln()], &[true]).unwrap();
        assert!((p.z_hat - 2.0).abs() < 1e-15);
        assert!((p.log_target[0] - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn partition_without_feasible_samples_is_flagged() {
        let p = estimate_partition(&[0.0, -1.0, 2.0], &[false; 3]).unwrap();
        assert_eq!(p.z_hat, 0.0);
        assert!(p.is_degenerate());
    }

    #[test]
    fn matched_distributions_give_zero_weights() {
        let lq = [0.3, -1.2, 2.0];
        let (w, dropped) = js_weights(&lq, &[0.1, 0.1, 0.1], &lq);
        assert_eq!(dropped, 0);
        assert!(w.iter().all(|&x| x == 0.0), "{w:?}");
    }

    #[test]
    fn non_finite_weights_dropped_and_counted() {
        let (w, dropped) = js_weights(&[f64::NAN, 0.0], &[0.0, 0.0], &[0.0, f64::NEG_INFINITY]);
        assert_eq!(dropped, 1);
        assert_eq!(w[0], 0.0);
        assert!((w[1] - LN_2).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..20)
        }

        proptest! {
            #[test]
            fn kde_ignores_support_order(rs in rows(), q in prop::collection::vec(-1.5f64..1.5, 2), sigma in 0.05f64..1.0) {
                let mut rev = rs.clone();
                rev.reverse();
                let a = kde_log_eval(&Matrix::from_rows(&rs), &q, sigma).unwrap();
                let b = kde_log_eval(&Matrix::from_rows(&rev), &q, sigma).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }

            #[test]
            fn partition_targets_are_uniform_on_feasible_samples(
                lq in prop::collection::vec(-5.0f64..5.0, 1..40),
                mask in prop::collection::vec(any::<bool>(), 40),
            ) {
                let flags = &mask[..lq.len()];
                let p = estimate_partition(&lq, flags).unwrap();
                prop_assert!(p.z_hat >= 0.0);
                prop_assert_eq!(p.is_degenerate(), !flags.iter().any(|&f| f));
                for (t, &f) in p.log_target.iter().zip(flags) {
                    if f {
                        prop_assert!((t + p.z_hat.ln()).abs() < 1e-9);
                    } else {
                        prop_assert_eq!(*t, f64::NEG_INFINITY);
                    }
                }
            }
        }
    }
}
