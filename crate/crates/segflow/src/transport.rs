//! Inference algorithms: base Euler sampling, joint segment transport with
//! the closed-form regression update, anchor-velocity smoothing, the
//! integral-form velocity conversion, and the A–D setup ladder.
//!
//! One joint step transports the weighted α-points of the current segment
//! individually, then restores linearity by minimizing
//!
//!   Σᵢ pᵢ ‖(1−αᵢ)·xᵃ + αᵢ·xᵇ − x̂ᵢ‖²
//!
//! whose minimizer is  xᵃ = (c₁₁d₀ − c₀₁d₁)/Δ,  xᵇ = (c₀₀d₁ − c₀₁d₀)/Δ
//! with the moments c.. of the weights and d₀ = Σᵢ pᵢ(1−αᵢ)x̂ᵢ,
//! d₁ = Σᵢ pᵢαᵢx̂ᵢ. Equivalently the endpoint velocities depend only on
//! the velocity-weighted integrals μ₀ = ∫p(α)(1−α)v dα, μ₁ = ∫p(α)αv dα:
//!
//!   vᵃ = (c₁₁μ₀ − c₀₁μ₁)/Δ,  vᵇ = (c₀₀μ₁ − c₀₁μ₀)/Δ.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::vec;
use crate::core::{
    AlphaDensity, AlphaPoint, Condition, Moments, Segment, State, StepRecord, TimeGrid,
    TrajectoryLog, WeightSchedule,
};
use crate::error::{Error, Result};
use crate::fields::VelocityField;

/// Below this Δ the α-distribution cannot identify two endpoints.
pub const DELTA_MIN: f64 = 1e-10;

/// One Euler update x + (t₂ − t₁)·v(x, t₁, c). Requires t₂ ≤ t₁; equal
/// times leave the state unchanged.
pub fn euler_step(
    field: &dyn VelocityField,
    x: &State,
    t1: f64,
    t2: f64,
    c: &Condition,
) -> Result<State> {
    if t2 > t1 {
        return Err(Error::Domain(format!(
            "euler step must move down in time (t1 = {t1}, t2 = {t2})"
        )));
    }
    let v = field.evaluate(x, t1, c)?;
    let mut out = x.values().to_vec();
    vec::axpy(&mut out, t2 - t1, &v);
    State::new(out).map_err(|_| Error::NonFinite {
        context: format!("euler update at t1 = {t1}"),
        step: None,
    })
}

/// Integrate one sample down the whole grid; returns every intermediate
/// state, starting with `x_init`.
pub fn sample_base(
    field: &dyn VelocityField,
    c: &Condition,
    grid: &TimeGrid,
    x_init: &State,
) -> Result<Vec<State>> {
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(x_init.clone());
    for (step, (t1, t2)) in grid.step_pairs().enumerate() {
        let next = euler_step(field, states.last().unwrap(), t1, t2, c)
            .map_err(|e| at_step(e, step))?;
        states.push(next);
    }
    Ok(states)
}

/// Weighted least-squares endpoints through the points (αᵢ, pᵢ, x̂ᵢ).
///
/// Errors with the offending α-distribution when Δ ≤ `delta_min`.
pub fn regression_endpoints(
    points: &[(AlphaPoint, State)],
    delta_min: f64,
) -> Result<(State, State)> {
    if points.is_empty() {
        return Err(Error::Config("regression needs at least one point".into()));
    }
    let d = points[0].1.dim();
    let alpha_points: Vec<AlphaPoint> = points.iter().map(|(p, _)| *p).collect();
    let m = Moments::from_points(&alpha_points);
    let delta = m.delta();
    if delta <= delta_min {
        let dist: Vec<String> = alpha_points
            .iter()
            .map(|p| format!("(α={}, p={})", p.alpha, p.weight))
            .collect();
        return Err(Error::DegenerateDensity(format!(
            "Δ = {delta:.3e} <= {delta_min:.1e} for α-distribution [{}]",
            dist.join(", ")
        )));
    }
    let mut d0 = std::vec![0.0; d];
    let mut d1 = std::vec![0.0; d];
    for (p, value) in points {
        if value.dim() != d {
            return Err(Error::Config("regression points have mismatched dims".into()));
        }
        vec::axpy(&mut d0, p.weight * (1.0 - p.alpha), value.values());
        vec::axpy(&mut d1, p.weight * p.alpha, value.values());
    }
    let mut a = std::vec![0.0; d];
    let mut b = std::vec![0.0; d];
    for k in 0..d {
        a[k] = (m.c11 * d0[k] - m.c01 * d1[k]) / delta;
        b[k] = (m.c00 * d1[k] - m.c01 * d0[k]) / delta;
    }
    Ok((State::new(a)?, State::new(b)?))
}

/// Result of one joint transport step.
#[derive(Debug, Clone)]
pub struct JointStep {
    pub segment: Segment,
    /// Endpoint velocities (xᵃ_t₂ − xᵃ_t₁)/(t₂ − t₁), before smoothing.
    pub v_a: Vec<f64>,
    pub v_b: Vec<f64>,
    /// The α-points that were transported.
    pub alpha_points: Vec<AlphaPoint>,
}

/// Transport the segment from t₁ to t₂: move each α-point with its own
/// Euler update under the interpolated condition, then restore linearity
/// by regression.
#[allow(clippy::too_many_arguments)]
pub fn joint_step(
    field: &dyn VelocityField,
    seg: &Segment,
    c_a: &Condition,
    c_b: &Condition,
    t1: f64,
    t2: f64,
    density: &AlphaDensity,
    k: usize,
) -> Result<JointStep> {
    if t2 >= t1 {
        return Err(Error::Domain(format!(
            "joint step needs t2 < t1 (t1 = {t1}, t2 = {t2})"
        )));
    }
    let alpha_points = density.grid(k)?;
    let mut moved = Vec::with_capacity(alpha_points.len());
    for p in &alpha_points {
        let x = seg.point(p.alpha)?;
        let c = Condition::lerp(c_a, c_b, p.alpha);
        let x_hat = euler_step(field, &x, t1, t2, &c)?;
        moved.push((*p, x_hat));
    }
    let (a, b) = regression_endpoints(&moved, DELTA_MIN)?;
    let dt = t2 - t1;
    let v_a: Vec<f64> = a
        .values()
        .iter()
        .zip(seg.a().values())
        .map(|(n, o)| (n - o) / dt)
        .collect();
    let v_b: Vec<f64> = b
        .values()
        .iter()
        .zip(seg.b().values())
        .map(|(n, o)| (n - o) / dt)
        .collect();
    Ok(JointStep {
        segment: Segment::new(a, b)?,
        v_a,
        v_b,
        alpha_points,
    })
}

/// How the shared anchor velocity is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Evaluate the field once at the segment midpoint with the averaged
    /// condition.
    Midpoint,
    /// Average the two endpoint velocities.
    AverageEndpoints,
}

/// The anchor velocity both endpoint velocities are pulled toward.
/// `v_a` / `v_b` are only read in [`AnchorMode::AverageEndpoints`].
#[allow(clippy::too_many_arguments)]
pub fn anchor_velocity(
    field: &dyn VelocityField,
    seg: &Segment,
    t: f64,
    c_a: &Condition,
    c_b: &Condition,
    mode: AnchorMode,
    v_a: &[f64],
    v_b: &[f64],
) -> Result<Vec<f64>> {
    match mode {
        AnchorMode::Midpoint => {
            field.evaluate(&seg.midpoint(), t, &Condition::lerp(c_a, c_b, 0.5))
        }
        AnchorMode::AverageEndpoints => {
            if v_a.len() != v_b.len() {
                return Err(Error::Config("endpoint velocities have mismatched dims".into()));
            }
            Ok(v_a.iter().zip(v_b).map(|(a, b)| (a + b) / 2.0).collect())
        }
    }
}

/// Convex blend of the endpoint velocities toward the anchor:
/// v̂ = w·v_anchor + (1−w)·v.
pub fn smooth_velocities(
    v_a: &[f64],
    v_b: &[f64],
    v_anchor: &[f64],
    w: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("smoothing weight {w} outside [0, 1]")));
    }
    if v_a.len() != v_anchor.len() || v_b.len() != v_anchor.len() {
        return Err(Error::Config("velocity dims mismatch in smoothing".into()));
    }
    let blend = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(v_anchor)
            .map(|(vi, an)| w * an + (1.0 - w) * vi)
            .collect()
    };
    Ok((blend(v_a), blend(v_b)))
}

/// Estimator for the velocity-weighted integrals μ₀, μ₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuEstimator {
    /// Deterministic α-grid with k points.
    Grid { k: usize },
    /// α ~ p(α) Monte Carlo with plain averaging.
    MonteCarlo { samples: usize, seed: u64 },
}

/// μ₀ = ∫p(α)(1−α)·v(x(α), t, c(α)) dα and μ₁ likewise with weight α,
/// for the segment at time t.
pub fn integral_mu(
    field: &dyn VelocityField,
    seg: &Segment,
    c_a: &Condition,
    c_b: &Condition,
    t: f64,
    density: &AlphaDensity,
    estimator: MuEstimator,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = seg.dim();
    let mut mu0 = std::vec![0.0; d];
    let mut mu1 = std::vec![0.0; d];
    let mut accumulate = |alpha: f64, weight: f64| -> Result<()> {
        let x = seg.point(alpha)?;
        let c = Condition::lerp(c_a, c_b, alpha);
        let v = field.evaluate(&x, t, &c)?;
        vec::axpy(&mut mu0, weight * (1.0 - alpha), &v);
        vec::axpy(&mut mu1, weight * alpha, &v);
        Ok(())
    };
    match estimator {
        MuEstimator::Grid { k } => {
            for p in density.grid(k)? {
                accumulate(p.alpha, p.weight)?;
            }
        }
        MuEstimator::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::Config("Monte-Carlo estimator needs samples >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = 1.0 / samples as f64;
            for _ in 0..samples {
                accumulate(density.sample(&mut rng), w)?;
            }
        }
    }
    Ok((mu0, mu1))
}

/// Endpoint velocities from the integral form:
/// vᵃ = (c₁₁μ₀ − c₀₁μ₁)/Δ, vᵇ = (c₀₀μ₁ − c₀₁μ₀)/Δ.
pub fn segment_velocities_from_mu(
    mu0: &[f64],
    mu1: &[f64],
    moments: &Moments,
    delta_min: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if mu0.len() != mu1.len() {
        return Err(Error::Config("μ vectors have mismatched dims".into()));
    }
    let delta = moments.delta();
    if delta <= delta_min {
        return Err(Error::DegenerateDensity(format!(
            "Δ = {delta:.3e} <= {delta_min:.1e}; the α-density cannot identify both endpoints"
        )));
    }
    let v_a = mu0
        .iter()
        .zip(mu1)
        .map(|(m0, m1)| (moments.c11 * m0 - moments.c01 * m1) / delta)
        .collect();
    let v_b = mu0
        .iter()
        .zip(mu1)
        .map(|(m0, m1)| (moments.c00 * m1 - moments.c01 * m0) / delta)
        .collect();
    Ok((v_a, v_b))
}

/// The setup ladder: A is the full method, D the hard-cutoff baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Scheduled α-density, midpoint anchor, weight schedule.
    A,
    /// As A with the anchor replaced by the endpoint-velocity average.
    B,
    /// As B with only the two endpoint α-atoms (no intermediate points).
    C,
    /// Shared state with averaged velocity until the cutoff step, fully
    /// independent Euler sampling after it.
    D,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Variant::A),
            "B" | "b" => Ok(Variant::B),
            "C" | "c" => Ok(Variant::C),
            "D" | "d" => Ok(Variant::D),
            other => Err(Error::Config(format!(
                "unknown setup variant '{other}' (expected A, B, C or D)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::A => write!(f, "A"),
            Variant::B => write!(f, "B"),
            Variant::C => write!(f, "C"),
            Variant::D => write!(f, "D"),
        }
    }
}

/// Per-step α-density.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySchedule {
    Fixed(AlphaDensity),
    /// Blend λ·δ(0.5) + (1−λ)·target with λ following the weight
    /// schedule: midpoint-heavy early, the target density late.
    MidpointBlend {
        target: AlphaDensity,
        weights: WeightSchedule,
    },
}

impl DensitySchedule {
    pub fn at(&self, step: usize) -> Result<AlphaDensity> {
        match self {
            DensitySchedule::Fixed(d) => Ok(d.clone()),
            DensitySchedule::MidpointBlend { target, weights } => {
                let lambda = weights.at(step);
                let midpoint = AlphaDensity::single_atom(0.5)?;
                AlphaDensity::blend(lambda, &midpoint, target)
            }
        }
    }
}

/// Which velocity estimator the step loop uses for setups A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Deterministic α-grid of the configured k points (exactly the
    /// regression update).
    Grid,
    /// α ~ p(α) Monte Carlo; moments are taken from the same draw, so a
    /// constant field is still transported exactly.
    MonteCarlo { samples: usize },
}

/// Full configuration of one joint run.
#[derive(Debug, Clone)]
pub struct TransportConfig {
    pub variant: Variant,
    pub k: usize,
    pub density: DensitySchedule,
    pub weights: WeightSchedule,
    pub grid: TimeGrid,
    pub estimator: Estimator,
    /// Setup D: number of leading shared steps. Defaults to half the grid.
    pub cutoff_step: Option<usize>,
    pub seed: u64,
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        match self.variant {
            Variant::A | Variant::B => {
                if self.k < 2 {
                    return Err(Error::Config(format!(
                        "setup {} needs k >= 2 α-points, got {}",
                        self.variant, self.k
                    )));
                }
            }
            Variant::C | Variant::D => {}
        }
        if let Some(cut) = self.cutoff_step {
            if cut > self.grid.n_steps() {
                return Err(Error::Config(format!(
                    "cutoff step {cut} beyond the {}-step grid",
                    self.grid.n_steps()
                )));
            }
        }
        if let Estimator::MonteCarlo { samples } = self.estimator {
            if samples == 0 {
                return Err(Error::Config("Monte-Carlo estimator needs samples >= 1".into()));
            }
        }
        Ok(())
    }
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::NonFinite { context, .. } => Error::NonFinite {
            context,
            step: Some(step),
        },
        Error::Domain(m) => Error::Domain(format!("step {step}: {m}")),
        Error::DegenerateDensity(m) => Error::DegenerateDensity(format!("step {step}: {m}")),
        Error::Config(m) => Error::Config(format!("step {step}: {m}")),
        other => other,
    }
}

/// Raw (pre-smoothing) endpoint velocities for one step of setups A–C.
#[allow(clippy::too_many_arguments)]
fn step_velocities(
    field: &dyn VelocityField,
    seg: &Segment,
    c_a: &Condition,
    c_b: &Condition,
    t1: f64,
    t2: f64,
    density: &AlphaDensity,
    k: usize,
    estimator: Estimator,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>, Vec<AlphaPoint>)> {
    match estimator {
        Estimator::Grid => {
            let js = joint_step(field, seg, c_a, c_b, t1, t2, density, k)?;
            Ok((js.v_a, js.v_b, js.alpha_points))
        }
        Estimator::MonteCarlo { samples } => {
            // Sample once, then reuse the draw for both the μ integrals and
            // the moments; this is the least-squares fit on the sampled
            // points and keeps constant fields exact.
            let d = seg.dim();
            let w = 1.0 / samples as f64;
            let mut mu0 = std::vec![0.0; d];
            let mut mu1 = std::vec![0.0; d];
            let mut points = Vec::with_capacity(samples);
            for _ in 0..samples {
                let alpha = density.sample(rng);
                let x = seg.point(alpha)?;
                let c = Condition::lerp(c_a, c_b, alpha);
                let v = field.evaluate(&x, t1, &c)?;
                vec::axpy(&mut mu0, w * (1.0 - alpha), &v);
                vec::axpy(&mut mu1, w * alpha, &v);
                points.push(AlphaPoint { alpha, weight: w });
            }
            let moments = Moments::from_points(&points);
            let (v_a, v_b) = segment_velocities_from_mu(&mu0, &mu1, &moments, DELTA_MIN)?;
            Ok((v_a, v_b, Vec::new()))
        }
    }
}

/// Run the full joint transport from a shared initial state.
///
/// Per step, setups A–C transport the α-points (for C just the two
/// endpoint atoms), blend the endpoint velocities toward the anchor with
/// the scheduled weight, and apply x ← x + (t₂−t₁)·v̂. Setup D moves one
/// shared state with the average of the two conditional velocities until
/// the cutoff step and decouples the endpoints afterwards.
pub fn run_joint(
    field: &dyn VelocityField,
    c_a: &Condition,
    c_b: &Condition,
    cfg: &TransportConfig,
    x_init: &State,
) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.grid.n_steps());
    let mut seg = Segment::collapsed(x_init.clone());

    let cutoff = cfg.cutoff_step.unwrap_or(cfg.grid.n_steps() / 2);

    for (step, (t1, t2)) in cfg.grid.step_pairs().enumerate() {
        let dt = t2 - t1;
        let norm = seg.norm();
        let (v_a_hat, v_b_hat, v_anchor, w, alpha_points) = match cfg.variant {
            Variant::A | Variant::B | Variant::C => {
                let (density, k, mode) = match cfg.variant {
                    Variant::A => (
                        cfg.density.at(step).map_err(|e| at_step(e, step))?,
                        cfg.k,
                        AnchorMode::Midpoint,
                    ),
                    Variant::B => (
                        cfg.density.at(step).map_err(|e| at_step(e, step))?,
                        cfg.k,
                        AnchorMode::AverageEndpoints,
                    ),
                    // No intermediate points: the regression reduces to the
                    // two per-endpoint updates.
                    Variant::C => (AlphaDensity::endpoint_atoms(), 2, AnchorMode::AverageEndpoints),
                    Variant::D => unreachable!(),
                };
                let estimator = if cfg.variant == Variant::C {
                    Estimator::Grid
                } else {
                    cfg.estimator
                };
                let (v_a, v_b, alpha_points) = step_velocities(
                    field, &seg, c_a, c_b, t1, t2, &density, k, estimator, &mut rng,
                )
                .map_err(|e| at_step(e, step))?;
                let anchor = anchor_velocity(field, &seg, t1, c_a, c_b, mode, &v_a, &v_b)
                    .map_err(|e| at_step(e, step))?;
                let w = cfg.weights.at(step);
                let (v_a_hat, v_b_hat) = smooth_velocities(&v_a, &v_b, &anchor, w)
                    .map_err(|e| at_step(e, step))?;
                (v_a_hat, v_b_hat, Some(anchor), w, alpha_points)
            }
            Variant::D => {
                if step < cutoff {
                    let v_a = field.evaluate(seg.a(), t1, c_a).map_err(|e| at_step(e, step))?;
                    let v_b = field.evaluate(seg.a(), t1, c_b).map_err(|e| at_step(e, step))?;
                    let avg: Vec<f64> =
                        v_a.iter().zip(&v_b).map(|(a, b)| (a + b) / 2.0).collect();
                    (avg.clone(), avg.clone(), Some(avg), 1.0, Vec::new())
                } else {
                    let v_a = field.evaluate(seg.a(), t1, c_a).map_err(|e| at_step(e, step))?;
                    let v_b = field.evaluate(seg.b(), t1, c_b).map_err(|e| at_step(e, step))?;
                    (v_a, v_b, None, 0.0, Vec::new())
                }
            }
        };

        records.push(StepRecord {
            step,
            t1,
            t2,
            a: seg.a().clone(),
            b: seg.b().clone(),
            v_a: v_a_hat.clone(),
            v_b: v_b_hat.clone(),
            v_anchor,
            w,
            alpha_points,
            norm,
        });

        let mut a = seg.a().values().to_vec();
        let mut b = seg.b().values().to_vec();
        vec::axpy(&mut a, dt, &v_a_hat);
        vec::axpy(&mut b, dt, &v_b_hat);
        seg = Segment::new(
            State::new(a).map_err(|e| at_step(e, step))?,
            State::new(b).map_err(|e| at_step(e, step))?,
        )?;
    }

    TrajectoryLog::new(records, seg.a().clone(), seg.b().clone())
}
