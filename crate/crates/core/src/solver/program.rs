use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::formulation::Formulation;
use super::newton::Solver;
use super::SolverError;

/// Prescribed displacement history, sampled at steps `1..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LoadProgram {
    /// Linear ramp from 0 to `u_max`.
    MonotoneRamp { n_steps: usize, u_max: f64 },
    /// `u(t) = (t^0.6 sin t + t^0.6) / (2 T^0.6) * u_max` with `T = 8.5 pi`,
    /// sampled uniformly on `(0, T]`.
    Cyclic { n_steps: usize, u_max: f64 },
}

pub const CYCLIC_DURATION: f64 = 8.5 * PI;

impl LoadProgram {
    pub fn n_steps(&self) -> usize {
        match *self {
            LoadProgram::MonotoneRamp { n_steps, .. } | LoadProgram::Cyclic { n_steps, .. } => {
                n_steps
            }
        }
    }

    /// Pseudo-time of step `step` (0 at the start).
    pub fn time(&self, step: usize) -> f64 {
        let n = self.n_steps() as f64;
        match self {
            LoadProgram::MonotoneRamp { .. } => step as f64 / n,
            LoadProgram::Cyclic { .. } => CYCLIC_DURATION * step as f64 / n,
        }
    }

    /// Prescribed displacement at step `step`.
    pub fn value(&self, step: usize) -> f64 {
        let t = self.time(step);
        match *self {
            LoadProgram::MonotoneRamp { u_max, .. } => u_max * t,
            LoadProgram::Cyclic { u_max, .. } => {
                let tp = t.powf(0.6);
                (tp * t.sin() + tp) / (2.0 * CYCLIC_DURATION.powf(0.6)) * u_max
            }
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let (n, u) = match *self {
            LoadProgram::MonotoneRamp { n_steps, u_max }
            | LoadProgram::Cyclic { n_steps, u_max } => (n_steps, u_max),
        };
        if n == 0 || !u.is_finite() {
            return Err(SolverError::InvalidSetup(format!(
                "load program needs n_steps > 0 and finite u_max, got {n}, {u}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub u_prescribed: f64,
    /// Reaction force on the observation surface (N).
    pub reaction: f64,
    pub newton_iterations: usize,
    pub increment_norms: Vec<f64>,
    pub d_max: f64,
    pub assembly_ms: f64,
    pub solve_ms: f64,
    pub bisections: usize,
    pub irreversibility_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub step: usize,
    pub u_target: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub formulation: String,
    pub n_dofs: usize,
    pub n_free: usize,
    pub steps: Vec<StepRecord>,
    pub aborted: Option<AbortRecord>,
    pub total_assembly_ms: f64,
    pub total_solve_ms: f64,
    pub wall_ms: f64,
    /// How the reaction force is obtained.
    pub reaction_method: String,
    pub dirichlet: Vec<String>,
}

impl SolveReport {
    pub fn completed(&self) -> bool {
        self.aborted.is_none()
    }

    pub fn d_max(&self) -> f64 {
        self.steps.iter().map(|s| s.d_max).fold(0.0, f64::max)
    }
}

/// Runs all steps of `program`, calling `observer` after every committed
/// step. A step that fails after all bisections ends the run; the partial
/// report records the failure.
pub fn run_program<F, O>(
    solver: &mut Solver<'_, F>,
    program: &LoadProgram,
    mut observer: O,
) -> Result<SolveReport, SolverError>
where
    F: Formulation,
    O: FnMut(&Solver<'_, F>, &StepRecord),
{
    program.validate()?;
    let start = Instant::now();
    let bcs = solver.boundary_conditions();
    let mut report = SolveReport {
        formulation: solver.formulation().name().to_string(),
        n_dofs: solver.dofmap().n_dofs(),
        n_free: solver.n_free(),
        steps: Vec::with_capacity(program.n_steps()),
        aborted: None,
        total_assembly_ms: 0.0,
        total_solve_ms: 0.0,
        wall_ms: 0.0,
        reaction_method: format!(
            "sum of internal residual, component {}, over nodes on '{}'",
            bcs.observation_component, bcs.observation_tag
        ),
        dirichlet: bcs
            .dirichlet
            .iter()
            .map(|d| format!("{}: u{} = {} * load", d.tag, d.component, d.factor))
            .collect(),
    };
    for step in 1..=program.n_steps() {
        let target = program.value(step);
        match solver.step_to(target) {
            Ok(stats) => {
                let record = StepRecord {
                    step,
                    time: program.time(step),
                    u_prescribed: target,
                    reaction: solver.reaction(),
                    newton_iterations: stats.iterations,
                    increment_norms: stats.increment_norms,
                    d_max: solver.d_max(),
                    assembly_ms: stats.assembly.as_secs_f64() * 1e3,
                    solve_ms: stats.solve.as_secs_f64() * 1e3,
                    bisections: stats.bisections,
                    irreversibility_violations: stats.irreversibility_violations,
                };
                report.total_assembly_ms += record.assembly_ms;
                report.total_solve_ms += record.solve_ms;
                observer(solver, &record);
                report.steps.push(record);
            }
            Err(e) if e.is_recoverable() => {
                report.aborted = Some(AbortRecord {
                    step,
                    u_target: target,
                    reason: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_values() {
        let p = LoadProgram::MonotoneRamp {
            n_steps: 200,
            u_max: 25.0,
        };
        assert_eq!(p.value(0), 0.0);
        assert!((p.value(200) - 25.0).abs() < 1e-12);
        assert!((p.value(100) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn cyclic_ends_at_peak_and_unloads() {
        let p = LoadProgram::Cyclic {
            n_steps: 100,
            u_max: 25.0,
        };
        assert_eq!(p.value(0), 0.0);
        assert!((p.value(100) - 25.0).abs() < 1e-12);
        let values: Vec<f64> = (0..=100).map(|s| p.value(s)).collect();
        assert!(values.iter().all(|v| *v >= 0.0 && *v <= 25.0 + 1e-12));
        assert!(values.windows(2).any(|w| w[1] < w[0]));
    }

    #[test]
    fn invalid_program() {
        assert!(LoadProgram::MonotoneRamp {
            n_steps: 0,
            u_max: 1.0
        }
        .validate()
        .is_err());
    }
}
