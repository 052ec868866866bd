//! Projected forward-Euler integration of controller vector fields.
//!
//! A [`Controller`] exposes its state as one flat vector, the admissible set of
//! that vector, and the raw (pre-projection) velocity. One step is
//! `s⁺ = proj_S(s + h·raw(s))`, which keeps every iterate inside `S`.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, GneError, Result};
use crate::geometry::{norm, ConvexSet};

/// Schema tag written as the first line of every trajectory CSV.
pub const CSV_SCHEMA: &str = "# gne-trajectory v1";

/// States with any entry of magnitude above this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Per-record diagnostics. Optional fields are present only for controllers
/// that carry the corresponding state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub t: f64,
    pub kkt_residual: f64,
    pub consensus_error: f64,
    pub dual_consensus_error: f64,
    /// `‖max(0, g(x))‖₂`
    pub constraint_violation: f64,
    /// `‖max(0, g(x))‖∞`
    pub constraint_violation_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<f64>,
    /// `‖v‖`, the norm of all higher chain derivatives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_derivative_norm: Option<f64>,
    /// `‖mean(σ) − ψ(x)‖`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking_error: Option<f64>,
}

impl MetricRecord {
    pub fn new(kkt_residual: f64) -> Self {
        MetricRecord {
            t: 0.0,
            kkt_residual,
            consensus_error: 0.0,
            dual_consensus_error: 0.0,
            constraint_violation: 0.0,
            constraint_violation_max: 0.0,
            gains: None,
            lyapunov: None,
            chain_derivative_norm: None,
            tracking_error: None,
        }
    }

    pub fn with_violation(mut self, g: &[f64]) -> Self {
        let pos: Vec<f64> = g.iter().map(|v| v.max(0.0)).collect();
        self.constraint_violation = norm(&pos);
        self.constraint_violation_max = pos.iter().copied().fold(0.0, f64::max);
        self
    }

    /// Quantity tested against the convergence tolerance.
    pub fn convergence_measure(&self) -> f64 {
        self.kkt_residual
            + self.consensus_error
            + self.dual_consensus_error
            + self.chain_derivative_norm.unwrap_or(0.0)
    }

    fn is_finite(&self) -> bool {
        [
            self.kkt_residual,
            self.consensus_error,
            self.dual_consensus_error,
            self.constraint_violation,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// A vector field over a flat state with a convex admissible set.
pub trait Controller: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Product set whose factors follow the flat state layout.
    fn admissible_set(&self) -> &ConvexSet;

    /// Pre-projection velocity; `out` has length `dim()` and is overwritten.
    fn raw_field_into(&self, state: &[f64], out: &mut [f64]);

    fn metrics(&self, state: &[f64]) -> MetricRecord;

    /// The physical action `x ∈ R^n` encoded in `state`.
    fn primal(&self, state: &[f64]) -> Vec<f64>;

    fn raw_field(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_len("controller state", self.dim(), state.len())?;
        let mut out = vec![0.0; self.dim()];
        self.raw_field_into(state, &mut out);
        Ok(out)
    }

    /// Projected field `Π_S(s, raw(s))`.
    fn field(&self, state: &[f64]) -> Result<Vec<f64>> {
        let raw = self.raw_field(state)?;
        self.admissible_set().project_tangent(state, &raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub step: f64,
    pub horizon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Stop once convergence has been sustained.
    #[serde(default = "yes")]
    pub stop_on_convergence: bool,
    #[serde(default = "yes")]
    pub keep_snapshots: bool,
    /// Consecutive records below `tol` required to declare convergence.
    #[serde(default = "default_sustain")]
    pub sustain: usize,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_stride() -> usize {
    100
}

fn default_sustain() -> usize {
    10
}

fn yes() -> bool {
    true
}

impl IntegratorConfig {
    pub fn new(step: f64, horizon: f64) -> Self {
        IntegratorConfig {
            step,
            horizon,
            tol: default_tol(),
            stride: default_stride(),
            max_steps: None,
            stop_on_convergence: true,
            keep_snapshots: true,
            sustain: default_sustain(),
        }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn run_to_horizon(mut self) -> Self {
        self.stop_on_convergence = false;
        self
    }

    pub fn without_snapshots(mut self) -> Self {
        self.keep_snapshots = false;
        self
    }

    pub fn max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(GneError::InvalidParameter(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > self.step) {
            return Err(GneError::InvalidParameter(format!(
                "horizon {} must exceed the step {}",
                self.horizon, self.step
            )));
        }
        if self.stride == 0 || self.sustain == 0 {
            return Err(GneError::InvalidParameter(
                "stride and sustain must be at least 1".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(GneError::InvalidParameter(
                "tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of Euler steps covering the horizon.
    pub fn total_steps(&self) -> usize {
        let steps = (self.horizon / self.step).round() as usize;
        self.max_steps.map_or(steps, |m| steps.min(m))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub controller: String,
    pub step: f64,
    pub times: Vec<f64>,
    /// One flat state per record; empty when snapshots are disabled.
    pub snapshots: Vec<Vec<f64>>,
    pub metrics: Vec<MetricRecord>,
    pub final_state: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
    pub converged_at: Option<f64>,
    pub wall_time_s: f64,
}

impl Trajectory {
    pub fn final_metrics(&self) -> &MetricRecord {
        self.metrics
            .last()
            .expect("trajectory has at least one record")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least one record")
    }

    /// Compact summary for JSON export.
    pub fn summary(&self) -> TrajectorySummary {
        TrajectorySummary {
            controller: self.controller.clone(),
            converged: self.converged,
            converged_at: self.converged_at,
            steps: self.steps,
            final_time: self.final_time(),
            wall_time_s: self.wall_time_s,
            final_metrics: self.final_metrics().clone(),
        }
    }

    /// Writes the schema line, a header and one row per record:
    /// `t`, the metric fields, then the columns produced by `select`.
    pub fn write_csv<W: Write>(
        &self,
        mut out: W,
        state_columns: &[String],
        select: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<()> {
        writeln!(out, "{CSV_SCHEMA}")?;
        let gains = self
            .metrics
            .first()
            .and_then(|m| m.gains.as_ref())
            .map_or(0, Vec::len);
        let mut writer = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "t",
            "kkt_residual",
            "consensus_error",
            "dual_consensus_error",
            "constraint_violation",
            "constraint_violation_max",
            "lyapunov",
            "chain_derivative_norm",
            "tracking_error",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..gains).map(|i| format!("k_{i}")));
        header.extend(state_columns.iter().cloned());
        writer.write_record(&header)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for (k, m) in self.metrics.iter().enumerate() {
            let mut row = vec![
                m.t.to_string(),
                m.kkt_residual.to_string(),
                m.consensus_error.to_string(),
                m.dual_consensus_error.to_string(),
                m.constraint_violation.to_string(),
                m.constraint_violation_max.to_string(),
                opt(m.lyapunov),
                opt(m.chain_derivative_norm),
                opt(m.tracking_error),
            ];
            if let Some(g) = &m.gains {
                row.extend(g.iter().map(f64::to_string));
            }
            if !state_columns.is_empty() {
                if let Some(s) = self.snapshots.get(k) {
                    row.extend(select(s).iter().map(f64::to_string));
                }
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub controller: String,
    pub converged: bool,
    pub converged_at: Option<f64>,
    pub steps: usize,
    pub final_time: f64,
    pub wall_time_s: f64,
    pub final_metrics: MetricRecord,
}

/// One projected-Euler step `proj_S(s + h·raw(s))`.
pub fn step(controller: &dyn Controller, state: &[f64], h: f64) -> Result<Vec<f64>> {
    let set = controller.admissible_set();
    check_len("controller state", controller.dim(), state.len())?;
    if !set.contains(state) {
        return Err(GneError::NotInSet {
            set: set.label(),
            distance: set.distance(state)?,
        });
    }
    let mut raw = vec![0.0; state.len()];
    controller.raw_field_into(state, &mut raw);
    let mut next: Vec<f64> = state.iter().zip(&raw).map(|(s, v)| s + h * v).collect();
    set.project_in_place(&mut next);
    Ok(next)
}

/// Integrates from `state0` until the horizon or sustained convergence.
pub fn integrate(
    controller: &dyn Controller,
    state0: &[f64],
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let set = controller.admissible_set();
    check_len("initial state", controller.dim(), state0.len())?;
    if !set.contains(state0) {
        return Err(GneError::NotInSet {
            set: set.label(),
            distance: set.distance(state0)?,
        });
    }
    let started = Instant::now();
    let total = config.total_steps();
    let h = config.step;
    let mut state = state0.to_vec();
    let mut raw = vec![0.0; state.len()];
    let mut traj = Trajectory {
        controller: controller.name().to_string(),
        step: h,
        times: Vec::new(),
        snapshots: Vec::new(),
        metrics: Vec::new(),
        final_state: Vec::new(),
        steps: 0,
        converged: false,
        converged_at: None,
        wall_time_s: 0.0,
    };
    let mut streak = 0;
    let record =
        |traj: &mut Trajectory, state: &[f64], k: usize, streak: &mut usize| -> Result<bool> {
            let t = k as f64 * h;
            let mut m = controller.metrics(state);
            m.t = t;
            if !m.is_finite() {
                return Err(GneError::Divergence {
                    time: t,
                    last_finite: traj.metrics.last().cloned().map(Box::new),
                });
            }
            if m.convergence_measure() <= config.tol {
                *streak += 1;
            } else {
                *streak = 0;
            }
            if *streak >= config.sustain && !traj.converged {
                traj.converged = true;
                traj.converged_at = Some(t);
            }
            traj.times.push(t);
            traj.metrics.push(m);
            if config.keep_snapshots {
                traj.snapshots.push(state.to_vec());
            }
            Ok(traj.converged && config.stop_on_convergence)
        };
    let mut stopped = record(&mut traj, &state, 0, &mut streak)?;
    let mut k = 0;
    while !stopped && k < total {
        controller.raw_field_into(&state, &mut raw);
        for (s, v) in state.iter_mut().zip(&raw) {
            *s += h * v;
        }
        set.project_in_place(&mut state);
        k += 1;
        if state.iter().any(|v| !(v.abs() <= DIVERGENCE_NORM)) {
            return Err(GneError::Divergence {
                time: k as f64 * h,
                last_finite: traj.metrics.last().cloned().map(Box::new),
            });
        }
        if k % config.stride == 0 || k == total {
            stopped = record(&mut traj, &state, k, &mut streak)?;
        }
    }
    traj.steps = k;
    traj.final_state = state;
    traj.wall_time_s = started.elapsed().as_secs_f64();
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `ẋ = Π_S(x, a·x + b)` on a scalar set.
    struct Scalar {
        set: ConvexSet,
        a: f64,
        b: f64,
    }

    impl Controller for Scalar {
        fn name(&self) -> &str {
            "scalar"
        }
        fn dim(&self) -> usize {
            1
        }
        fn admissible_set(&self) -> &ConvexSet {
            &self.set
        }
        fn raw_field_into(&self, s: &[f64], out: &mut [f64]) {
            out[0] = self.a * s[0] + self.b;
        }
        fn metrics(&self, s: &[f64]) -> MetricRecord {
            MetricRecord::new((self.a * s[0] + self.b).abs())
        }
        fn primal(&self, s: &[f64]) -> Vec<f64> {
            s.to_vec()
        }
    }

    #[test]
    fn clipped_step_examples() {
        let c = Scalar {
            set: ConvexSet::boxed(vec![0.0], vec![1.0]).unwrap(),
            a: 0.0,
            b: -1.0,
        };
        assert!((step(&c, &[0.3], 0.1).unwrap()[0] - 0.2).abs() < 1e-15);
        assert_eq!(step(&c, &[0.05], 0.1).unwrap()[0], 0.0);
        assert!(step(&c, &[1.5], 0.1).is_err());
        let orthant = Scalar {
            set: ConvexSet::orthant(1),
            a: 0.0,
            b: -3.0,
        };
        assert_eq!(step(&orthant, &[0.0], 0.01).unwrap()[0], 0.0);
    }

    #[test]
    fn interior_step_matches_field() {
        let c = Scalar {
            set: ConvexSet::full(1),
            a: -2.0,
            b: 0.5,
        };
        let s = step(&c, &[1.0], 1e-4).unwrap();
        let f = c.field(&[1.0]).unwrap();
        assert!((s[0] - (1.0 + 1e-4 * f[0])).abs() < 1e-14);
    }

    #[test]
    fn exponential_decay() {
        let c = Scalar {
            set: ConvexSet::full(1),
            a: -2.0,
            b: 0.0,
        };
        let cfg = IntegratorConfig::new(0.01, 10.0).tol(1e-300).stride(10);
        let traj = integrate(&c, &[1.0], &cfg).unwrap();
        assert!(traj.final_state[0].abs() <= 1e-8);
        assert_eq!(traj.steps, 1000);
        assert_eq!(traj.metrics.len(), 1000 / 10 + 1);
        for w in traj.times.windows(2) {
            assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn record_count_with_ragged_stride() {
        let c = Scalar {
            set: ConvexSet::full(1),
            a: -1.0,
            b: 0.0,
        };
        let cfg = IntegratorConfig::new(0.1, 1.0).tol(1e-300).stride(3);
        let traj = integrate(&c, &[1.0], &cfg).unwrap();
        assert_eq!(traj.steps, 10);
        assert_eq!(traj.metrics.len(), 10usize.div_ceil(3) + 1);
    }

    #[test]
    fn equilibrium_stays_put_and_converges() {
        let c = Scalar {
            set: ConvexSet::full(1),
            a: -1.0,
            b: 2.0,
        };
        let traj = integrate(&c, &[2.0], &IntegratorConfig::new(0.01, 5.0).stride(1)).unwrap();
        assert!(traj.converged);
        assert!(traj.snapshots.iter().all(|s| (s[0] - 2.0).abs() < 1e-10));
    }

    #[test]
    fn divergence_guard() {
        let c = Scalar {
            set: ConvexSet::full(1),
            a: -1.0,
            b: 0.0,
        };
        let err = integrate(&c, &[1.0], &IntegratorConfig::new(10.0, 1e4)).unwrap_err();
        assert!(matches!(err, GneError::Divergence { .. }));
    }

    #[test]
    fn csv_layout() {
        let c = Scalar {
            set: ConvexSet::full(1),
            a: -1.0,
            b: 0.0,
        };
        let traj = integrate(
            &c,
            &[1.0],
            &IntegratorConfig::new(0.1, 1.0).tol(1e-300).stride(2),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, &["x".to_string()], |s| s.to_vec())
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_SCHEMA);
        assert!(lines[1].starts_with("t,kkt_residual"));
        assert!(lines[1].ends_with(",x"));
        assert_eq!(lines.len(), 2 + 6);
    }
}
