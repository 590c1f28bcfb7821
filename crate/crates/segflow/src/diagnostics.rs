//! Independent verification of the analytical claims: segment-norm
//! dynamics, the KL leading-order identity, and plausibility scoring of
//! transported points.

use crate::core::vec;
use crate::core::{AlphaDensity, AlphaPoint, Condition, State, TrajectoryLog};
use crate::error::{Error, Result};
use crate::fields::GaussianMixtureTarget;

/// A weighted point set on a common α grid: (α, p, state) triples.
pub type WeightedStates = [(AlphaPoint, State)];

/// Residuals of the segment-norm derivative identity.
///
/// For each logged step the finite difference (‖seg‖(t₂) − ‖seg‖(t₁))/dt
/// is compared against ⟨v̂ᵇ − v̂ᵃ, xᵇ − xᵃ⟩ / ‖xᵇ − xᵃ‖ evaluated with the
/// applied (smoothed) velocities at t₁.
#[derive(Debug, Clone, PartialEq)]
pub struct NormDerivativeReport {
    /// (step, residual) for every non-degenerate step.
    pub residuals: Vec<(usize, f64)>,
    /// Max |residual|; 0 for an empty report.
    pub max_abs: f64,
    /// Steps skipped because the segment norm was below 1e-8.
    pub skipped: usize,
}

impl NormDerivativeReport {
    /// True when every step was degenerate and nothing could be checked.
    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }
}

pub fn norm_derivative_residual(log: &TrajectoryLog) -> Result<NormDerivativeReport> {
    if log.records().len() < 2 {
        return Err(Error::Config(format!(
            "norm-derivative check needs >= 2 logged steps, got {}",
            log.records().len()
        )));
    }
    let norms = log.norms();
    let mut residuals = Vec::new();
    let mut skipped = 0usize;
    for (i, rec) in log.records().iter().enumerate() {
        if rec.norm < 1e-8 {
            skipped += 1;
            continue;
        }
        let dt = rec.t2 - rec.t1;
        let finite_diff = (norms[i + 1] - norms[i]) / dt;
        let dv = vec::sub(&rec.v_b, &rec.v_a);
        let dx = vec::sub(rec.b.values(), rec.a.values());
        let analytic = vec::dot(&dv, &dx) / rec.norm;
        residuals.push((rec.step, finite_diff - analytic));
    }
    let max_abs = residuals
        .iter()
        .map(|(_, r)| r.abs())
        .fold(0.0f64, f64::max);
    Ok(NormDerivativeReport {
        residuals,
        max_abs,
        skipped,
    })
}

fn check_matched_grids(true_points: &WeightedStates, approx_points: &WeightedStates) -> Result<()> {
    if true_points.len() != approx_points.len() {
        return Err(Error::Contract(format!(
            "point sets have {} and {} entries",
            true_points.len(),
            approx_points.len()
        )));
    }
    for ((pt, st), (pa, sa)) in true_points.iter().zip(approx_points) {
        if pt.alpha != pa.alpha || pt.weight != pa.weight {
            return Err(Error::Contract(format!(
                "α grids differ: (α={}, p={}) vs (α={}, p={})",
                pt.alpha, pt.weight, pa.alpha, pa.weight
            )));
        }
        if st.dim() != sa.dim() {
            return Err(Error::Contract("point dimensions differ".into()));
        }
    }
    Ok(())
}

/// Leading-order KL proxy: (1/2σ²)·Σᵢ pᵢ‖x_true,i − x_approx,i‖².
///
/// Symmetric in its two point sets and scales exactly as 1/σ².
pub fn kl_proxy(
    true_points: &WeightedStates,
    approx_points: &WeightedStates,
    sigma: f64,
) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::Domain(format!("σ = {sigma} must be > 0")));
    }
    check_matched_grids(true_points, approx_points)?;
    let mut acc = 0.0;
    for ((p, st), (_, sa)) in true_points.iter().zip(approx_points) {
        let diff = vec::sub(st.values(), sa.values());
        acc += p.weight * vec::dot(&diff, &diff);
    }
    Ok(acc / (2.0 * sigma * sigma))
}

/// KL divergence between the two σ-smoothed α-mixtures by dense trapezoid
/// quadrature over x. Restricted to 1D states, where the quadrature is
/// effectively exact.
pub fn numerical_kl(
    true_points: &WeightedStates,
    approx_points: &WeightedStates,
    sigma: f64,
    resolution: usize,
) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::Domain(format!("σ = {sigma} must be > 0")));
    }
    check_matched_grids(true_points, approx_points)?;
    if true_points.is_empty() {
        return Err(Error::Contract("empty point sets".into()));
    }
    if true_points[0].1.dim() != 1 {
        return Err(Error::Config(
            "numerical KL quadrature is restricted to 1D states".into(),
        ));
    }
    if resolution < 1000 {
        return Err(Error::Config(format!(
            "quadrature needs >= 1000 nodes, got {resolution}"
        )));
    }
    let centers: Vec<f64> = true_points
        .iter()
        .chain(approx_points.iter())
        .map(|(_, s)| s.values()[0])
        .collect();
    let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min) - 8.0 * sigma;
    let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 8.0 * sigma;
    let h = (hi - lo) / (resolution - 1) as f64;
    if h > sigma / 3.0 {
        return Err(Error::Precision(format!(
            "resolution too coarse: node spacing {h:.3e} exceeds σ/3 = {:.3e}",
            sigma / 3.0
        )));
    }
    // Mills-ratio bound on the mixture mass outside [lo, hi].
    let tail = |z: f64| -> f64 {
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        phi / z.max(1.0)
    };
    let tail_mass: f64 = true_points
        .iter()
        .map(|(p, s)| {
            let x = s.values()[0];
            p.weight * (tail((x - lo) / sigma) + tail((hi - x) / sigma))
        })
        .sum();
    if tail_mass > 1e-10 {
        return Err(Error::Precision(format!(
            "tail mass {tail_mass:.3e} outside quadrature range exceeds 1e-10"
        )));
    }

    let log_norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let log_mix = |points: &WeightedStates, x: f64| -> f64 {
        let mut max = f64::NEG_INFINITY;
        let terms: Vec<f64> = points
            .iter()
            .map(|(p, s)| {
                let z = (x - s.values()[0]) / sigma;
                let t = p.weight.ln() + log_norm - 0.5 * z * z;
                if t > max {
                    max = t;
                }
                t
            })
            .collect();
        if !max.is_finite() {
            return f64::NEG_INFINITY;
        }
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    };

    let mut acc = 0.0;
    for i in 0..resolution {
        let x = lo + h * i as f64;
        let lp = log_mix(true_points, x);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let lq = log_mix(approx_points, x);
        let f = lp.exp() * (lp - lq);
        acc += if i == 0 || i == resolution - 1 { 0.5 * f } else { f };
    }
    Ok(acc * h)
}

/// Negative log-likelihood of x under target(c).
pub fn plausibility(
    target: &GaussianMixtureTarget,
    c: &Condition,
    x: &State,
) -> Result<f64> {
    Ok(-target.log_density(x.values(), c)?)
}

/// Configuration of the synthetic KL probe: a 1D two-atom α-density case
/// comparing the proxy against the quadrature oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct KlProbeConfig {
    /// Smoothing standard deviation (> 0).
    pub sigma: f64,
    /// Quadrature nodes (>= 1000).
    pub resolution: usize,
    /// α density; its atoms carry the probe points.
    pub density: AlphaDensity,
    /// Size of the segment perturbation applied to the approximate points.
    pub perturbation: f64,
}

impl Default for KlProbeConfig {
    fn default() -> Self {
        Self {
            sigma: 1e-2,
            resolution: 20_000,
            density: AlphaDensity::endpoint_atoms(),
            perturbation: 0.1,
        }
    }
}

/// Outcome of one KL probe.
#[derive(Debug, Clone, PartialEq)]
pub struct KlProbeResult {
    pub proxy: f64,
    pub numerical: f64,
    pub ratio: f64,
}

/// Build matched 1D point sets on the probe density's α grid (states on
/// the unit segment, approximations shifted by ±perturbation in
/// alternation) and compare the proxy with the quadrature oracle.
pub fn run_kl_probe(cfg: &KlProbeConfig) -> Result<KlProbeResult> {
    if cfg.sigma <= 0.0 {
        return Err(Error::Domain("probe σ must be > 0".into()));
    }
    if cfg.resolution < 1000 {
        return Err(Error::Config("probe resolution must be >= 1000".into()));
    }
    let atoms = cfg.density.atoms();
    if atoms.len() < 2 {
        return Err(Error::Config(
            "KL probe density needs >= 2 atoms to carry the point sets".into(),
        ));
    }
    let grid: Vec<AlphaPoint> = atoms
        .iter()
        .map(|a| AlphaPoint {
            alpha: a.location,
            weight: a.mass,
        })
        .collect();
    let total: f64 = grid.iter().map(|p| p.weight).sum();
    let grid: Vec<AlphaPoint> = grid
        .into_iter()
        .map(|p| AlphaPoint {
            alpha: p.alpha,
            weight: p.weight / total,
        })
        .collect();

    let mut true_points = Vec::with_capacity(grid.len());
    let mut approx_points = Vec::with_capacity(grid.len());
    for (i, p) in grid.iter().enumerate() {
        let x = p.alpha; // points on the unit segment
        let shift = if i % 2 == 0 { cfg.perturbation } else { -cfg.perturbation };
        true_points.push((*p, State::new(vec![x])?));
        approx_points.push((*p, State::new(vec![x + shift])?));
    }
    let proxy = kl_proxy(&true_points, &approx_points, cfg.sigma)?;
    let numerical = numerical_kl(&true_points, &approx_points, cfg.sigma, cfg.resolution)?;
    Ok(KlProbeResult {
        proxy,
        numerical,
        ratio: proxy / numerical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{StepRecord, TimeGrid};

    fn linear_log(n_steps: usize) -> TrajectoryLog {
        // x^a(t) = 0, x^b(t) = t while t runs down the grid.
        let grid = TimeGrid::uniform(n_steps).unwrap();
        let mut records = Vec::new();
        for (step, (t1, t2)) in grid.step_pairs().enumerate() {
            records.push(StepRecord {
                step,
                t1,
                t2,
                a: State::new(vec![0.0]).unwrap(),
                b: State::new(vec![t1]).unwrap(),
                v_a: vec![0.0],
                v_b: vec![1.0],
                v_anchor: None,
                w: 0.0,
                alpha_points: Vec::new(),
                norm: t1,
            });
        }
        TrajectoryLog::new(
            records,
            State::new(vec![0.0]).unwrap(),
            State::new(vec![0.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn linear_motion_has_zero_residual() {
        let report = norm_derivative_residual(&linear_log(10)).unwrap();
        assert_eq!(report.skipped, 0);
        assert!(report.max_abs < 1e-12, "{report:?}");
    }

    #[test]
    fn equal_velocities_give_zero_residual() {
        // Both endpoints move identically: norm constant, analytic term 0.
        let mut records = Vec::new();
        let grid = TimeGrid::uniform(5).unwrap();
        let mut a = vec![0.0, 0.0];
        let norm = 5.0f64;
        for (step, (t1, t2)) in grid.step_pairs().enumerate() {
            let b = vec![a[0] + 3.0, a[1] + 4.0];
            records.push(StepRecord {
                step,
                t1,
                t2,
                a: State::new(a.clone()).unwrap(),
                b: State::new(b).unwrap(),
                v_a: vec![0.7, -0.2],
                v_b: vec![0.7, -0.2],
                v_anchor: None,
                w: 0.0,
                alpha_points: Vec::new(),
                norm,
            });
            let dt = t2 - t1;
            a[0] += dt * 0.7;
            a[1] += dt * -0.2;
        }
        let final_a = State::new(a.clone()).unwrap();
        let final_b = State::new(vec![a[0] + 3.0, a[1] + 4.0]).unwrap();
        let log = TrajectoryLog::new(records, final_a, final_b).unwrap();
        let report = norm_derivative_residual(&log).unwrap();
        assert!(report.max_abs < 1e-12, "{report:?}");
    }

    #[test]
    fn degenerate_log_is_flagged_not_fatal() {
        // All norms zero: everything is skipped.
        let grid = TimeGrid::uniform(3).unwrap();
        let records: Vec<StepRecord> = grid
            .step_pairs()
            .enumerate()
            .map(|(step, (t1, t2))| StepRecord {
                step,
                t1,
                t2,
                a: State::new(vec![0.0]).unwrap(),
                b: State::new(vec![0.0]).unwrap(),
                v_a: vec![0.0],
                v_b: vec![0.0],
                v_anchor: None,
                w: 0.0,
                alpha_points: Vec::new(),
                norm: 0.0,
            })
            .collect();
        let zero = State::new(vec![0.0]).unwrap();
        let log = TrajectoryLog::new(records, zero.clone(), zero).unwrap();
        let report = norm_derivative_residual(&log).unwrap();
        assert!(report.is_empty());
        assert_eq!(report.skipped, 3);
        assert_eq!(report.max_abs, 0.0);
    }

    #[test]
    fn requires_two_steps() {
        let log = linear_log(1);
        assert!(norm_derivative_residual(&log).is_err());
    }

    fn atom_points(xs: &[f64]) -> Vec<(AlphaPoint, State)> {
        let w = 1.0 / xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                (
                    AlphaPoint {
                        alpha: i as f64 / (xs.len() - 1).max(1) as f64,
                        weight: w,
                    },
                    State::new(vec![x]).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn proxy_identities() {
        let pts = atom_points(&[0.0, 1.0]);
        assert_eq!(kl_proxy(&pts, &pts, 0.05).unwrap(), 0.0);

        // Single-atom arithmetic: offset 0.1 at σ = 0.05 → 2.0.
        let one = vec![(
            AlphaPoint { alpha: 0.5, weight: 1.0 },
            State::new(vec![0.0]).unwrap(),
        )];
        let one_shift = vec![(
            AlphaPoint { alpha: 0.5, weight: 1.0 },
            State::new(vec![0.1]).unwrap(),
        )];
        let v = kl_proxy(&one, &one_shift, 0.05).unwrap();
        assert!((v - 2.0).abs() < 1e-12, "{v}");

        // Symmetric in the two roles.
        let a = atom_points(&[0.0, 1.0]);
        let b = atom_points(&[0.2, 0.7]);
        assert_eq!(
            kl_proxy(&a, &b, 0.03).unwrap(),
            kl_proxy(&b, &a, 0.03).unwrap()
        );

        // Exact 1/σ² scaling.
        for sigma in [1e-3, 1e-2, 1e-1, 1.0] {
            let scaled = kl_proxy(&a, &b, sigma).unwrap() * sigma * sigma;
            let reference = kl_proxy(&a, &b, 1.0).unwrap();
            assert!((scaled - reference).abs() < 1e-12 * reference.abs().max(1.0));
        }
    }

    #[test]
    fn proxy_rejects_mismatched_grids() {
        let a = atom_points(&[0.0, 1.0]);
        let mut b = atom_points(&[0.0, 1.0]);
        b[0].0.alpha = 0.25;
        assert!(matches!(kl_proxy(&a, &b, 0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn numerical_kl_identities() {
        let pts = atom_points(&[0.0, 1.0]);
        let v = numerical_kl(&pts, &pts, 0.05, 2000).unwrap();
        assert!(v.abs() < 1e-10, "{v}");

        // Two unit Gaussians offset by δ: KL = δ²/2.
        let delta = 0.7;
        let one = vec![(
            AlphaPoint { alpha: 0.0, weight: 1.0 },
            State::new(vec![0.0]).unwrap(),
        )];
        let other = vec![(
            AlphaPoint { alpha: 0.0, weight: 1.0 },
            State::new(vec![delta]).unwrap(),
        )];
        let v = numerical_kl(&one, &other, 1.0, 5000).unwrap();
        assert!((v - delta * delta / 2.0).abs() < 1e-9, "{v}");
        assert!(v >= 0.0);
    }

    #[test]
    fn numerical_kl_guards() {
        let pts = atom_points(&[0.0, 1.0]);
        assert!(numerical_kl(&pts, &pts, 0.05, 500).is_err());
        // Coarse spacing relative to σ errors out rather than lying.
        assert!(matches!(
            numerical_kl(&pts, &pts, 1e-4, 1000),
            Err(Error::Precision(_))
        ));
        // 2D points are out of oracle scope.
        let p2 = vec![(
            AlphaPoint { alpha: 0.0, weight: 1.0 },
            State::new(vec![0.0, 0.0]).unwrap(),
        )];
        assert!(numerical_kl(&p2, &p2, 0.1, 2000).is_err());
    }

    #[test]
    fn probe_ratio_near_one_at_small_sigma() {
        let result = run_kl_probe(&KlProbeConfig::default()).unwrap();
        assert!(
            result.ratio > 0.95 && result.ratio < 1.05,
            "ratio {} (proxy {}, numerical {})",
            result.ratio,
            result.proxy,
            result.numerical
        );
        // The identity degrades gracefully as σ grows toward the point
        // separation scale but stays the right order of magnitude.
        let coarse = run_kl_probe(&KlProbeConfig {
            sigma: 1e-1,
            resolution: 20_000,
            ..KlProbeConfig::default()
        })
        .unwrap();
        assert!(
            coarse.ratio > 0.5 && coarse.ratio < 2.0,
            "ratio {}",
            coarse.ratio
        );
        assert!((coarse.ratio - 1.0).abs() >= (result.ratio - 1.0).abs() * 0.5);
    }

    #[test]
    fn plausibility_identities() {
        // One-component target: NLL at the mode is the normalization
        // constant alone.
        let target =
            GaussianMixtureTarget::single(vec![0.5, -1.0], vec![0.25, 0.25]).unwrap();
        let c = Condition::zeros(0);
        let at_mode = plausibility(&target, &c, &State::new(vec![0.5, -1.0]).unwrap()).unwrap();
        let expect = 0.5 * (2.0 * (2.0 * std::f64::consts::PI * 0.25).ln());
        assert!((at_mode - expect).abs() < 1e-12, "{at_mode} vs {expect}");
        let off_mode = plausibility(&target, &c, &State::new(vec![0.9, -1.0]).unwrap()).unwrap();
        assert!(off_mode > at_mode);

        // Symmetric mixture scores both means identically.
        let sym = GaussianMixtureTarget::new(
            vec![0.5, 0.5],
            vec![vec![1.0], vec![-1.0]],
            vec![vec![0.3], vec![0.3]],
            vec![vec![]],
        )
        .unwrap();
        let n1 = plausibility(&sym, &c, &State::new(vec![1.0]).unwrap()).unwrap();
        let n2 = plausibility(&sym, &c, &State::new(vec![-1.0]).unwrap()).unwrap();
        assert!((n1 - n2).abs() < 1e-12);
    }
}
