//! Conditional velocity fields: the field contract, an exact analytic
//! field for condition-shifted Gaussian-mixture targets, and a
//! kernel-weighted Monte-Carlo estimator for validating it.
//!
//! The generative process is x_t = (1−t)·x₀ + t·ε with ε standard normal,
//! and the marginal velocity is v(x, t, c) = E[ε − x₀ | x_t = x]. For a
//! diagonal Gaussian mixture this expectation is available in closed form:
//! conditioned on component j, (x₀, ε, x_t) are jointly Gaussian, so
//!
//!   x_t | j ~ N((1−t)·m_j,  (1−t)²σ_j² + t²)        (per coordinate)
//!   E[ε − x₀ | x, j] = (t − (1−t)σ_j²)/s_j² · (x − (1−t)m_j) − m_j
//!
//! with m_j = μ_j + M·c and s_j² the x_t variance above; the posterior
//! over components weighs these by w_j · N(x | (1−t)m_j, s_j²).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::core::vec;
use crate::core::{Condition, State};
use crate::error::{Error, Result};

/// Default lower clamp on evaluation times: the σ = 0 posterior divides
/// by t, so fields are never queried at t = 0.
pub const DEFAULT_T_MIN: f64 = 1e-3;

const LOG_2PI: f64 = 1.8378770664093453;

/// A conditional velocity field v(x, t, c).
///
/// Implementations must be pure: identical inputs give bitwise-identical
/// outputs, and outputs are finite whenever inputs are finite and
/// t ∈ [t_min, 1].
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    fn evaluate(&self, x: &State, t: f64, c: &Condition) -> Result<Vec<f64>>;
}

/// A diagonal Gaussian-mixture data distribution whose component means are
/// translated by a linear map of the condition: target(c) has means
/// μ_j + M·c. Variance entries may be exactly 0 for point components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmData", into = "GmmData")]
pub struct GaussianMixtureTarget {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    /// d×m matrix, row-major.
    condition_map: Vec<Vec<f64>>,
}

/// Serialization mirror of [`GaussianMixtureTarget`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmData {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    condition_map: Vec<Vec<f64>>,
}

impl TryFrom<GmmData> for GaussianMixtureTarget {
    type Error = Error;
    fn try_from(d: GmmData) -> Result<Self> {
        Self::new(d.weights, d.means, d.variances, d.condition_map)
    }
}

impl From<GaussianMixtureTarget> for GmmData {
    fn from(t: GaussianMixtureTarget) -> Self {
        GmmData {
            weights: t.weights,
            means: t.means,
            variances: t.variances,
            condition_map: t.condition_map,
        }
    }
}

impl GaussianMixtureTarget {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
        condition_map: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let j = weights.len();
        if j == 0 || means.len() != j || variances.len() != j {
            return Err(Error::Config(format!(
                "mixture needs matching weights/means/variances lengths, got {}/{}/{}",
                j,
                means.len(),
                variances.len()
            )));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::Config("mixture dimension must be >= 1".into()));
        }
        for (m, v) in means.iter().zip(&variances) {
            if m.len() != d || v.len() != d {
                return Err(Error::Config(
                    "mixture components have mismatched dimensions".into(),
                ));
            }
            if !vec::all_finite(m) {
                return Err(Error::NonFinite {
                    context: "mixture means".into(),
                    step: None,
                });
            }
            if v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return Err(Error::Domain("mixture variances must be >= 0".into()));
            }
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || total <= 0.0 {
            return Err(Error::Domain("mixture weights must be >= 0 with positive total".into()));
        }
        if condition_map.len() != d {
            return Err(Error::Config(format!(
                "condition map needs {d} rows, got {}",
                condition_map.len()
            )));
        }
        let m_cols = condition_map.first().map_or(0, |r| r.len());
        for row in &condition_map {
            if row.len() != m_cols || !vec::all_finite(row) {
                return Err(Error::Config("condition map rows must be equal-length and finite".into()));
            }
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            means,
            variances,
            condition_map,
        })
    }

    /// Unconditional single-component convenience constructor.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        Self::new(vec![1.0], vec![mean], vec![variance], std::vec![std::vec![]; d])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn cond_dim(&self) -> usize {
        self.condition_map.first().map_or(0, |r| r.len())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// Component means under condition c: μ_j + M·c.
    pub fn shifted_means(&self, c: &Condition) -> Result<Vec<Vec<f64>>> {
        if c.dim() != self.cond_dim() {
            return Err(Error::Config(format!(
                "condition has dim {}, target expects {}",
                c.dim(),
                self.cond_dim()
            )));
        }
        let shift: Vec<f64> = self
            .condition_map
            .iter()
            .map(|row| vec::dot(row, c.values()))
            .collect();
        Ok(self.means.iter().map(|m| vec::add(m, &shift)).collect())
    }

    /// Draw x₀ from target(c).
    pub fn sample_x0<R: Rng + ?Sized>(&self, c: &Condition, rng: &mut R) -> Result<Vec<f64>> {
        let means = self.shifted_means(c)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut j = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                j = i;
                break;
            }
        }
        Ok(means[j]
            .iter()
            .zip(&self.variances[j])
            .map(|(m, v)| {
                let z: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * z
            })
            .collect())
    }

    /// Log density of x under target(c).
    ///
    /// Point components (σ² = 0) make the density degenerate; they give
    /// −∞ off their mean and +∞ on it.
    pub fn log_density(&self, x: &[f64], c: &Condition) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Config(format!(
                "point has dim {}, target expects {}",
                x.len(),
                self.dim()
            )));
        }
        let means = self.shifted_means(c)?;
        let mut log_terms = Vec::with_capacity(self.weights.len());
        for ((w, m), var) in self.weights.iter().zip(&means).zip(&self.variances) {
            let mut log_n = 0.0f64;
            for ((xi, mi), vi) in x.iter().zip(m).zip(var) {
                if *vi == 0.0 {
                    log_n = if xi == mi { f64::INFINITY } else { f64::NEG_INFINITY };
                    if log_n == f64::NEG_INFINITY {
                        break;
                    }
                    continue;
                }
                let diff = xi - mi;
                log_n += -0.5 * (diff * diff / vi + vi.ln() + LOG_2PI);
            }
            log_terms.push(w.ln() + log_n);
        }
        Ok(log_sum_exp(&log_terms))
    }

    /// Exact posterior-expectation velocity E[ε − x₀ | x_t = x] under
    /// target(c). `t_min` guards the t → 0 division for point components.
    pub fn velocity(&self, x: &State, t: f64, c: &Condition, t_min: f64) -> Result<Vec<f64>> {
        if t < t_min || t > 1.0 {
            return Err(Error::Domain(format!(
                "evaluation time {t} outside [{t_min}, 1]"
            )));
        }
        if x.dim() != self.dim() {
            return Err(Error::Config(format!(
                "state has dim {}, target expects {}",
                x.dim(),
                self.dim()
            )));
        }
        let means = self.shifted_means(c)?;
        let d = self.dim();
        let omt = 1.0 - t;

        // Posterior log-responsibilities of the components at x.
        let mut log_resp = Vec::with_capacity(self.weights.len());
        for ((w, m), var) in self.weights.iter().zip(&means).zip(&self.variances) {
            let mut log_n = 0.0f64;
            for ((xi, mi), vi) in x.values().iter().zip(m).zip(var) {
                let s2 = omt * omt * vi + t * t;
                let diff = xi - omt * mi;
                log_n += -0.5 * (diff * diff / s2 + s2.ln() + LOG_2PI);
            }
            log_resp.push(w.ln() + log_n);
        }
        let lse = log_sum_exp(&log_resp);
        if !lse.is_finite() {
            return Err(Error::NonFinite {
                context: "mixture responsibilities".into(),
                step: None,
            });
        }

        let mut v = std::vec![0.0; d];
        for ((lr, m), var) in log_resp.iter().zip(&means).zip(&self.variances) {
            let resp = (lr - lse).exp();
            if resp == 0.0 {
                continue;
            }
            for k in 0..d {
                let s2 = omt * omt * var[k] + t * t;
                let component = (t - omt * var[k]) / s2 * (x.values()[k] - omt * m[k]) - m[k];
                v[k] += resp * component;
            }
        }
        if !vec::all_finite(&v) {
            return Err(Error::NonFinite {
                context: "posterior velocity".into(),
                step: None,
            });
        }
        Ok(v)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// [`VelocityField`] view of an analytic mixture target.
#[derive(Debug, Clone)]
pub struct GmmField {
    target: GaussianMixtureTarget,
    t_min: f64,
}

impl GmmField {
    pub fn new(target: GaussianMixtureTarget) -> Self {
        Self {
            target,
            t_min: DEFAULT_T_MIN,
        }
    }

    pub fn with_t_min(target: GaussianMixtureTarget, t_min: f64) -> Self {
        Self { target, t_min }
    }

    pub fn target(&self) -> &GaussianMixtureTarget {
        &self.target
    }
}

impl VelocityField for GmmField {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn cond_dim(&self) -> usize {
        self.target.cond_dim()
    }

    fn evaluate(&self, x: &State, t: f64, c: &Condition) -> Result<Vec<f64>> {
        self.target.velocity(x, t, c, self.t_min)
    }
}

/// A field backed by a closure; handy for constant/synthetic fields.
pub struct FnField<F> {
    dim: usize,
    cond_dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, &[f64]) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, cond_dim: usize, f: F) -> Self {
        Self { dim, cond_dim, f }
    }
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, &[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn evaluate(&self, x: &State, t: f64, c: &Condition) -> Result<Vec<f64>> {
        let v = (self.f)(x.values(), t, c.values());
        if v.len() != self.dim || !vec::all_finite(&v) {
            return Err(Error::NonFinite {
                context: "closure field output".into(),
                step: None,
            });
        }
        Ok(v)
    }
}

/// Kernel-weighted Monte-Carlo estimate of E[ε − x₀ | x_t ≈ x].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate {
    pub velocity: Vec<f64>,
    pub stderr: Vec<f64>,
    pub effective_samples: f64,
}

/// Estimates the marginal velocity at (x, t, c) by simulating the
/// generative process and conditioning with a Gaussian kernel of
/// bandwidth `h` around x in x_t-space.
///
/// The estimate is self-normalized, so its bias is O(h²); `stderr` is the
/// per-coordinate standard error of the weighted mean. Errors out when
/// the effective sample size drops below 100.
pub fn mc_velocity_oracle(
    target: &GaussianMixtureTarget,
    x: &State,
    t: f64,
    c: &Condition,
    n: usize,
    h: f64,
    seed: u64,
) -> Result<OracleEstimate> {
    if n < 10_000 {
        return Err(Error::Config(format!(
            "oracle needs n >= 10000 samples, got {n}"
        )));
    }
    if h <= 0.0 {
        return Err(Error::Domain(format!("kernel bandwidth {h} must be > 0")));
    }
    if x.dim() != target.dim() {
        return Err(Error::Config(format!(
            "state has dim {}, target expects {}",
            x.dim(),
            target.dim()
        )));
    }
    let d = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut values = std::vec![0.0f64; n * d];
    let mut log_w = std::vec![0.0f64; n];
    for i in 0..n {
        let x0 = target.sample_x0(c, &mut rng)?;
        let mut dist2 = 0.0;
        for k in 0..d {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let xt = (1.0 - t) * x0[k] + t * eps;
            let diff = xt - x.values()[k];
            dist2 += diff * diff;
            values[i * d + k] = eps - x0[k];
        }
        log_w[i] = -dist2 / (2.0 * h * h);
    }

    let max_log = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w_sum = 0.0;
    let mut w2_sum = 0.0;
    let mut mean = std::vec![0.0f64; d];
    for i in 0..n {
        let w = (log_w[i] - max_log).exp();
        w_sum += w;
        w2_sum += w * w;
        for k in 0..d {
            mean[k] += w * values[i * d + k];
        }
    }
    for m in &mut mean {
        *m /= w_sum;
    }
    let ess = w_sum * w_sum / w2_sum;
    if ess < 100.0 {
        return Err(Error::UnreliableEstimate(format!(
            "effective sample size {ess:.1} < 100 at (t = {t}, h = {h})"
        )));
    }

    let mut var = std::vec![0.0f64; d];
    for i in 0..n {
        let w = (log_w[i] - max_log).exp();
        for k in 0..d {
            let diff = values[i * d + k] - mean[k];
            var[k] += w * diff * diff;
        }
    }
    let stderr: Vec<f64> = var.iter().map(|v| (v / w_sum / ess).sqrt()).collect();
    Ok(OracleEstimate {
        velocity: mean,
        stderr,
        effective_samples: ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_target(mu: Vec<f64>) -> GaussianMixtureTarget {
        let d = mu.len();
        GaussianMixtureTarget::single(mu, std::vec![0.0; d]).unwrap()
    }

    fn symmetric_mixture() -> GaussianMixtureTarget {
        GaussianMixtureTarget::new(
            vec![0.5, 0.5],
            vec![vec![1.5, 0.0], vec![-1.5, 0.0]],
            vec![vec![0.25, 0.25], vec![0.25, 0.25]],
            vec![vec![], vec![]],
        )
        .unwrap()
    }

    #[test]
    fn point_target_velocity_inverts_interpolation() {
        let mu = vec![0.7, -0.3];
        let target = point_target(mu.clone());
        let c = Condition::zeros(0);
        for t in [0.1, 0.5, 1.0] {
            // On the target itself the velocity is (x−μ)/t = 0.
            let v = target
                .velocity(&State::new(mu.clone()).unwrap(), t, &c, DEFAULT_T_MIN)
                .unwrap();
            assert!(v.iter().all(|x| x.abs() < 1e-12));
            // One unit of noise along e recovers e exactly.
            let e = vec![0.4, -1.1];
            let x = State::new(vec![mu[0] + t * e[0], mu[1] + t * e[1]]).unwrap();
            let v = target.velocity(&x, t, &c, DEFAULT_T_MIN).unwrap();
            for (vi, ei) in v.iter().zip(&e) {
                assert!((vi - ei).abs() < 1e-10, "t={t}: {vi} vs {ei}");
            }
        }
    }

    #[test]
    fn point_target_velocity_is_affine_in_condition() {
        // Single σ=0 component with a condition map: v = (x − μ − M·c)/t.
        let target = GaussianMixtureTarget::new(
            vec![1.0],
            vec![vec![0.5, -0.5]],
            vec![vec![0.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, -2.0]],
        )
        .unwrap();
        let x = State::new(vec![0.9, 0.1]).unwrap();
        let t = 0.4;
        let c = Condition::new(vec![0.3, 0.2]).unwrap();
        let v = target.velocity(&x, t, &c, DEFAULT_T_MIN).unwrap();
        let mc = [0.3, -0.4];
        for k in 0..2 {
            let expect = (x.values()[k] - (target.means[0][k] + mc[k])) / t;
            assert!((v[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_mixture_velocity_vanishes_at_origin() {
        let target = symmetric_mixture();
        let v = target
            .velocity(&State::zeros(2), 0.5, &Condition::zeros(0), DEFAULT_T_MIN)
            .unwrap();
        assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12, "{v:?}");
    }

    #[test]
    fn velocity_rejects_t_below_clamp() {
        let target = point_target(vec![0.0]);
        let x = State::zeros(1);
        let c = Condition::zeros(0);
        assert!(target.velocity(&x, 1e-4, &c, DEFAULT_T_MIN).is_err());
        assert!(target.velocity(&x, 1.1, &c, DEFAULT_T_MIN).is_err());
        // A looser clamp admits smaller times.
        assert!(target.velocity(&x, 1e-4, &c, 1e-5).is_ok());
    }

    #[test]
    fn field_evaluation_is_pure() {
        let field = GmmField::new(symmetric_mixture());
        let x = State::new(vec![0.3, -0.7]).unwrap();
        let c = Condition::zeros(0);
        let v1 = field.evaluate(&x, 0.5, &c).unwrap();
        let v2 = field.evaluate(&x, 0.5, &c).unwrap();
        assert_eq!(
            v1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            v2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn oracle_recovers_point_target_velocity() {
        let mu = vec![0.5];
        let target = point_target(mu.clone());
        let c = Condition::zeros(0);
        let t = 0.6;
        // x on the interpolation manifold one noise-unit out.
        let x = State::new(vec![mu[0] + t * 0.8]).unwrap();
        let est = mc_velocity_oracle(&target, &x, t, &c, 20_000, 0.05, 42).unwrap();
        let expect = (x.values()[0] - mu[0]) / t;
        assert!(
            (est.velocity[0] - expect).abs() < 3.0 * est.stderr[0] + 0.01,
            "estimate {} vs {expect} (stderr {})",
            est.velocity[0],
            est.stderr[0]
        );
    }

    #[test]
    fn oracle_sees_symmetry_at_origin() {
        let target = symmetric_mixture();
        let est = mc_velocity_oracle(
            &target,
            &State::zeros(2),
            0.5,
            &Condition::zeros(0),
            20_000,
            0.1,
            7,
        )
        .unwrap();
        for k in 0..2 {
            assert!(
                est.velocity[k].abs() < 3.0 * est.stderr[k],
                "coordinate {k}: {} (stderr {})",
                est.velocity[k],
                est.stderr[k]
            );
        }
    }

    #[test]
    fn oracle_agrees_with_analytic_field_seed_17() {
        let target = GaussianMixtureTarget::new(
            vec![0.4, 0.6],
            vec![vec![1.0, -0.5], vec![-1.0, 0.8]],
            vec![vec![0.3, 0.2], vec![0.4, 0.5]],
            vec![vec![], vec![]],
        )
        .unwrap();
        let x = State::new(vec![0.3, -0.7]).unwrap();
        let c = Condition::zeros(0);
        let t = 0.5;
        let exact = target.velocity(&x, t, &c, DEFAULT_T_MIN).unwrap();
        let est = mc_velocity_oracle(&target, &x, t, &c, 100_000, 0.05, 17).unwrap();
        for k in 0..2 {
            let tol = (3.0 * est.stderr[k]).max(0.02 * exact[k].abs());
            assert!(
                (est.velocity[k] - exact[k]).abs() <= tol,
                "coordinate {k}: {} vs {} (tol {tol})",
                est.velocity[k],
                exact[k]
            );
        }
    }

    #[test]
    fn oracle_flags_unreliable_estimates() {
        let target = point_target(vec![0.0, 0.0]);
        // Far off-manifold: essentially no kernel mass.
        let x = State::new(vec![50.0, 50.0]).unwrap();
        let r = mc_velocity_oracle(&target, &x, 0.5, &Condition::zeros(0), 10_000, 0.01, 1);
        assert!(matches!(r, Err(Error::UnreliableEstimate(_))));
    }

    #[test]
    fn oracle_rejects_bad_arguments() {
        let target = point_target(vec![0.0]);
        let x = State::zeros(1);
        let c = Condition::zeros(0);
        assert!(mc_velocity_oracle(&target, &x, 0.5, &c, 100, 0.05, 1).is_err());
        assert!(mc_velocity_oracle(&target, &x, 0.5, &c, 10_000, 0.0, 1).is_err());
    }

    #[test]
    fn sampling_respects_condition_shift() {
        let target = GaussianMixtureTarget::new(
            vec![1.0],
            vec![vec![1.0]],
            vec![vec![0.04]],
            vec![vec![2.0]],
        )
        .unwrap();
        let c = Condition::new(vec![0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|_| target.sample_x0(&c, &mut rng).unwrap()[0])
            .sum::<f64>()
            / n as f64;
        // Mean should be 1 + 2·0.5 = 2.
        assert!((mean - 2.0).abs() < 0.01, "{mean}");
    }
}
