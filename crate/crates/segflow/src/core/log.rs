//! Per-step trajectory records and their CSV / JSON serialization.

use serde_json::json;

use super::density::AlphaPoint;
use super::state::State;
use super::vec;
use crate::error::{Error, Result};

/// Fixed-notation float with 17 significant digits, the format used for
/// all CSV output so reruns are byte-identical.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (16 - exp).clamp(0, 340) as usize;
    format!("{x:.decimals$}")
}

/// Everything recorded about one consumed grid step.
///
/// States are the endpoints at t1 (before the update); `v_a` / `v_b` are
/// the velocities actually applied to them, i.e. after any smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t1: f64,
    pub t2: f64,
    pub a: State,
    pub b: State,
    pub v_a: Vec<f64>,
    pub v_b: Vec<f64>,
    pub v_anchor: Option<Vec<f64>>,
    pub w: f64,
    pub alpha_points: Vec<AlphaPoint>,
    pub norm: f64,
}

/// Immutable record of a full joint-transport run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    records: Vec<StepRecord>,
    final_a: State,
    final_b: State,
}

impl TrajectoryLog {
    pub fn new(records: Vec<StepRecord>, final_a: State, final_b: State) -> Result<Self> {
        let d = final_a.dim();
        if final_b.dim() != d {
            return Err(Error::Config("final endpoints have mismatched dims".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if r.step != i {
                return Err(Error::Config(format!(
                    "record {i} carries step index {}",
                    r.step
                )));
            }
            if r.a.dim() != d || r.b.dim() != d || r.v_a.len() != d || r.v_b.len() != d {
                return Err(Error::Config(format!("record {i} has mismatched dims")));
            }
            let norm = vec::l2_norm(&vec::sub(r.b.values(), r.a.values()));
            if (norm - r.norm).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "record {i} norm {} does not match its states ({norm})",
                    r.norm
                )));
            }
        }
        Ok(Self {
            records,
            final_a,
            final_b,
        })
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn final_a(&self) -> &State {
        &self.final_a
    }

    pub fn final_b(&self) -> &State {
        &self.final_b
    }

    pub fn final_norm(&self) -> f64 {
        vec::l2_norm(&vec::sub(self.final_b.values(), self.final_a.values()))
    }

    pub fn dim(&self) -> usize {
        self.final_a.dim()
    }

    /// Norms at every grid time: per-record norms followed by the final
    /// segment norm.
    pub fn norms(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.records.iter().map(|r| r.norm).collect();
        out.push(self.final_norm());
        out
    }

    /// One row per step. Header:
    /// `step,t1,t2,norm,w,xa_*,xb_*,va_*,vb_*,vanchor_*`
    /// with anchor cells left empty when no anchor was used. The α grid is
    /// not serialized.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("step,t1,t2,norm,w");
        for prefix in ["xa", "xb", "va", "vb", "vanchor"] {
            for i in 0..d {
                out.push(',');
                out.push_str(&format!("{prefix}_{i}"));
            }
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.step.to_string());
            for v in [r.t1, r.t2, r.norm, r.w] {
                out.push(',');
                out.push_str(&fmt_float(v));
            }
            for slice in [r.a.values(), r.b.values(), &r.v_a[..], &r.v_b[..]] {
                for v in slice {
                    out.push(',');
                    out.push_str(&fmt_float(*v));
                }
            }
            match &r.v_anchor {
                Some(anchor) => {
                    for v in anchor {
                        out.push(',');
                        out.push_str(&fmt_float(*v));
                    }
                }
                None => out.push_str(&",".repeat(d)),
            }
            out.push('\n');
        }
        out
    }

    /// Rebuild a log from its CSV form. Final endpoints are reconstructed
    /// from the last record via x + (t2−t1)·v, which is exactly the update
    /// the sampler applied. α grids are not recoverable and come back
    /// empty.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty trajectory CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let d = cols.iter().filter(|c| c.starts_with("xa_")).count();
        if d == 0 || cols.len() != 5 + 5 * d {
            return Err(Error::Config(format!(
                "unrecognized trajectory CSV header: {header}"
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad {what} value '{s}' in trajectory CSV")))
        };
        let mut records = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Config(format!(
                    "trajectory CSV row has {} fields, expected {}",
                    f.len(),
                    cols.len()
                )));
            }
            let step: usize = f[0]
                .parse()
                .map_err(|_| Error::Config(format!("bad step index '{}'", f[0])))?;
            let mut at = 5usize;
            let mut block = |n: usize| -> &[&str] {
                let s = &f[at..at + n];
                at += n;
                s
            };
            let vals = |ss: &[&str], what: &str| -> Result<Vec<f64>> {
                ss.iter().map(|s| parse(s, what)).collect()
            };
            let a = State::new(vals(block(d), "xa")?)?;
            let b = State::new(vals(block(d), "xb")?)?;
            let v_a = vals(block(d), "va")?;
            let v_b = vals(block(d), "vb")?;
            let anchor_fields = block(d);
            let v_anchor = if anchor_fields.iter().all(|s| s.is_empty()) {
                None
            } else {
                Some(vals(anchor_fields, "vanchor")?)
            };
            records.push(StepRecord {
                step,
                t1: parse(f[1], "t1")?,
                t2: parse(f[2], "t2")?,
                a,
                b,
                v_a,
                v_b,
                v_anchor,
                w: parse(f[4], "w")?,
                alpha_points: Vec::new(),
                norm: parse(f[3], "norm")?,
            });
        }
        let last = records
            .last()
            .ok_or_else(|| Error::Config("trajectory CSV has no rows".into()))?;
        let dt = last.t2 - last.t1;
        let mut fa = last.a.values().to_vec();
        let mut fb = last.b.values().to_vec();
        vec::axpy(&mut fa, dt, &last.v_a);
        vec::axpy(&mut fb, dt, &last.v_b);
        let final_a = State::new(fa)?;
        let final_b = State::new(fb)?;
        Self::new(records, final_a, final_b)
    }

    /// Summary with final endpoints, final norm, and the per-step norms.
    pub fn summary(&self) -> serde_json::Value {
        json!({
            "final_a": self.final_a.values(),
            "final_b": self.final_b.values(),
            "final_norm": self.final_norm(),
            "per_step_norms": self.norms(),
            "steps": self.records.len(),
        })
    }
}
