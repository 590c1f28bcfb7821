//! Per-step smoothing weights and inference time grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant smoothing weight w over step indices.
///
/// `breakpoints` holds (first step index, weight) pairs; the weight at a
/// step is taken from the last breakpoint at or below it. Weights must be
/// non-increasing unless the schedule was built with
/// [`WeightSchedule::new_allow_non_monotone`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    breakpoints: Vec<(usize, f64)>,
    non_monotone: bool,
}

impl WeightSchedule {
    pub fn new(breakpoints: Vec<(usize, f64)>) -> Result<Self> {
        let s = Self::validated(breakpoints)?;
        if s.non_monotone {
            return Err(Error::Config(
                "weight schedule must be non-increasing (use new_allow_non_monotone to override)"
                    .into(),
            ));
        }
        Ok(s)
    }

    /// Permits non-monotone schedules; the flag is retained so runs can
    /// record that they used one.
    pub fn new_allow_non_monotone(breakpoints: Vec<(usize, f64)>) -> Result<Self> {
        Self::validated(breakpoints)
    }

    fn validated(breakpoints: Vec<(usize, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::Config("weight schedule needs >= 1 breakpoint".into()));
        }
        if breakpoints[0].0 != 0 {
            return Err(Error::Config(
                "first weight breakpoint must start at step 0".into(),
            ));
        }
        for w in breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Config(format!(
                    "weight breakpoints must have strictly increasing step indices ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(_, w) in &breakpoints {
            if !(0.0..=1.0).contains(&w) || !w.is_finite() {
                return Err(Error::Domain(format!("weight {w} outside [0, 1]")));
            }
        }
        let non_monotone = breakpoints.windows(2).any(|w| w[1].1 > w[0].1);
        Ok(Self {
            breakpoints,
            non_monotone,
        })
    }

    pub fn constant(w: f64) -> Result<Self> {
        Self::new(vec![(0, w)])
    }

    /// Weight applied at a step index.
    pub fn at(&self, step: usize) -> f64 {
        let mut w = self.breakpoints[0].1;
        for &(s, v) in &self.breakpoints {
            if s <= step {
                w = v;
            } else {
                break;
            }
        }
        w
    }

    pub fn breakpoints(&self) -> &[(usize, f64)] {
        &self.breakpoints
    }

    pub fn is_non_monotone(&self) -> bool {
        self.non_monotone
    }

    /// Reference schedule for image-scale runs on a 28-step grid:
    /// 0.7 until step 7, then 0.5, 0.4, and 0.1 from step 9 on.
    /// Step indices are rescaled for other grid lengths.
    pub fn preset_image(n_steps: usize) -> Result<Self> {
        Self::rescaled(&[(0, 0.7), (7, 0.5), (8, 0.4), (9, 0.1)], 28, n_steps)
    }

    /// Reference schedule for video-scale runs (28-step reference).
    pub fn preset_video(n_steps: usize) -> Result<Self> {
        Self::rescaled(&[(0, 0.5), (7, 0.4), (8, 0.3), (9, 0.1)], 28, n_steps)
    }

    /// Reference schedule for 3D-scale runs (25-step reference): a single
    /// drop from 0.7 to 0.05 at step 12.
    pub fn preset_3d(n_steps: usize) -> Result<Self> {
        Self::rescaled(&[(0, 0.7), (12, 0.05)], 25, n_steps)
    }

    pub fn preset(name: &str, n_steps: usize) -> Option<Self> {
        match name {
            "paper-image" => Self::preset_image(n_steps).ok(),
            "paper-video" => Self::preset_video(n_steps).ok(),
            "paper-3d" => Self::preset_3d(n_steps).ok(),
            _ => None,
        }
    }

    fn rescaled(reference: &[(usize, f64)], ref_len: usize, n_steps: usize) -> Result<Self> {
        let mut bps: Vec<(usize, f64)> = Vec::with_capacity(reference.len());
        for &(s, w) in reference {
            let scaled = ((s * n_steps) as f64 / ref_len as f64).round() as usize;
            // Collisions keep the later (smaller) weight.
            match bps.last_mut() {
                Some(prev) if prev.0 == scaled => prev.1 = w,
                _ => bps.push((scaled, w)),
            }
        }
        Self::new(bps)
    }
}

/// Strictly decreasing inference times from t ≤ 1 down to t ≥ 0.
///
/// Consecutive entries form the (t1, t2) step pairs of the sampler, so
/// every step has dt = t2 − t1 < 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid of `n_steps` steps from t = 1 to t = 0.
    pub fn uniform(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("time grid needs >= 1 step".into()));
        }
        Ok(Self {
            times: (0..=n_steps)
                .map(|i| (n_steps - i) as f64 / n_steps as f64)
                .collect(),
        })
    }

    /// A grid from explicit times. A single time point is allowed and
    /// yields a zero-step grid.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Config("time grid needs >= 1 time point".into()));
        }
        for &t in &times {
            if !(0.0..=1.0).contains(&t) || !t.is_finite() {
                return Err(Error::Domain(format!("grid time {t} outside [0, 1]")));
            }
        }
        for w in times.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Config(format!(
                    "grid times must be strictly decreasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// The (t1, t2) pairs of consecutive grid times.
    pub fn step_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1]))
    }
}
