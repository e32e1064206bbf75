use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::element::gd::{
    commit_step, element_residual_tangent, update_history, ElementDofs, ElementHistory, BUBBLE,
    MULTIPLIER, N_EXT, N_FULL,
};
use crate::interpolation::{ElementGeometry, ShapeTable};
use crate::material::MaterialParams;
use crate::mesh::Mesh;
use crate::solver::{BoundaryConditions, LagrangeMixed, NewtonOptions, Solver, SolverState};

/// Largest dense system the uncondensed solver accepts.
const DENSE_LIMIT: usize = 4000;

/// Newton solver on the full system with bubble and multiplier dofs kept as
/// global unknowns. Dense and slow; it shares nothing with the condensed
/// solver except the element routine and the history update rule.
pub struct UncondensedSolver {
    shapes: ShapeTable,
    geometry: Vec<ElementGeometry>,
    element_dofs: Vec<[usize; N_EXT]>,
    n_ext: usize,
    prescribed: Vec<(usize, f64)>,
    load_vector: Vec<f64>,
    params: MaterialParams,
    pub x: Vec<f64>,
    pub alpha_b: Vec<f64>,
    pub lambda: Vec<f64>,
    pub history: Vec<ElementHistory>,
    pub load: f64,
}

/// One Newton iteration's outcome, mirroring the condensed solver's.
#[derive(Debug, Clone, Copy)]
pub struct DenseIteration {
    pub increment_norm: f64,
    pub flips: usize,
    pub pending_releases: usize,
}

impl UncondensedSolver {
    /// Copies the discretization (not the state) of a condensed solver.
    pub fn from_condensed(solver: &Solver<'_, LagrangeMixed>) -> Result<Self, VerifyError> {
        let n_tets = solver.mesh().n_tets();
        let n_ext = solver.dofmap().n_dofs();
        if n_ext + 2 * n_tets > DENSE_LIMIT {
            return Err(VerifyError::TooLarge {
                size: n_ext + 2 * n_tets,
                limit: DENSE_LIMIT,
            });
        }
        Ok(Self {
            shapes: solver.shapes().clone(),
            geometry: solver.geometry().to_vec(),
            element_dofs: (0..n_tets)
                .map(|e| solver.element_dof_ids(e).try_into().expect("34 dofs"))
                .collect(),
            n_ext,
            prescribed: solver.prescribed().to_vec(),
            load_vector: solver.load_vector().to_vec(),
            params: solver.formulation().params,
            x: vec![0.0; n_ext],
            alpha_b: vec![0.0; n_tets],
            lambda: vec![0.0; n_tets],
            history: vec![ElementHistory::default(); n_tets],
            load: 0.0,
        })
    }

    fn dofs(&self, e: usize) -> ElementDofs {
        let ext: Vec<f64> = self.element_dofs[e].iter().map(|&g| self.x[g]).collect();
        ElementDofs::from_parts(&ext, self.alpha_b[e], self.lambda[e])
    }

    fn full_ids(&self, e: usize) -> [usize; N_FULL] {
        let mut ids = [0; N_FULL];
        ids[..N_EXT].copy_from_slice(&self.element_dofs[e]);
        ids[BUBBLE] = self.n_ext + 2 * e;
        ids[MULTIPLIER] = self.n_ext + 2 * e + 1;
        ids
    }

    /// Prescribed increment towards `target`, on the external dofs.
    pub fn lift_to(&self, target: f64) -> Vec<f64> {
        let mut lift = vec![0.0; self.n_ext];
        for &(d, factor) in &self.prescribed {
            lift[d] = factor * (target - self.load);
        }
        lift
    }

    /// Assembles and solves the full system, then updates the histories.
    /// Multipliers of released elements are held fixed.
    pub fn iteration(
        &mut self,
        iteration: usize,
        lift: Option<&[f64]>,
    ) -> Result<Option<DenseIteration>, VerifyError> {
        let n_tets = self.history.len();
        let n = self.n_ext + 2 * n_tets;
        let mut k = DMatrix::<f64>::zeros(n, n);
        let mut r = DVector::<f64>::zeros(n);
        for e in 0..n_tets {
            let (re, ke) = element_residual_tangent(
                &self.shapes,
                &self.geometry[e],
                &self.dofs(e),
                &self.history[e],
                &self.params,
            )
            .map_err(|source| VerifyError::Element { element: e, source })?;
            let ids = self.full_ids(e);
            for i in 0..N_FULL {
                let mut ri = re[i];
                if let Some(lift) = lift {
                    for j in 0..N_EXT {
                        ri += ke[(i, j)] * lift[ids[j]];
                    }
                }
                r[ids[i]] += ri;
                for j in 0..N_FULL {
                    k[(ids[i], ids[j])] += ke[(i, j)];
                }
            }
        }
        for (ri, f) in r.iter_mut().zip(&self.load_vector) {
            *ri -= self.load * f;
        }

        let mut fixed = vec![false; n];
        for &(d, _) in &self.prescribed {
            fixed[d] = true;
        }
        for e in 0..n_tets {
            if !self.history[e].constraint_active {
                fixed[self.n_ext + 2 * e + 1] = true;
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let kf = DMatrix::from_fn(free.len(), free.len(), |i, j| k[(free[i], free[j])]);
        let rf = DVector::from_fn(free.len(), |i, _| -r[free[i]]);
        let Some(df) = kf.lu().solve(&rf) else {
            return Ok(None);
        };

        let mut d = vec![0.0; n];
        for (i, &g) in free.iter().enumerate() {
            d[g] = df[i];
        }
        if let Some(lift) = lift {
            for &(g, _) in &self.prescribed {
                d[g] = lift[g];
            }
        }
        for (x, dx) in self.x.iter_mut().zip(&d) {
            *x += dx;
        }
        for e in 0..n_tets {
            self.alpha_b[e] += d[self.n_ext + 2 * e];
            self.lambda[e] += d[self.n_ext + 2 * e + 1];
        }
        let increment_norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();

        let (mut flips, mut pending_releases) = (0, 0);
        for e in 0..n_tets {
            let dofs = self.dofs(e);
            let up = update_history(&self.shapes, &dofs, &mut self.history[e], iteration);
            flips += up.flipped as usize;
            pending_releases += up.pending_release as usize;
        }
        Ok(Some(DenseIteration {
            increment_norm,
            flips,
            pending_releases,
        }))
    }

    pub fn commit(&mut self) {
        for e in 0..self.history.len() {
            let dofs = self.dofs(e);
            // a pointwise decrease is reported by the condensed run already
            let _ = commit_step(&self.shapes, &dofs, &mut self.history[e]);
        }
    }

    /// Largest difference to the condensed state, over the external dofs,
    /// bubbles and multipliers. Infinite when the active sets differ.
    pub fn distance(&self, state: &SolverState<LagrangeMixed>) -> f64 {
        let same_sets = self
            .history
            .iter()
            .zip(&state.history)
            .all(|(a, b)| a.constraint_active == b.constraint_active);
        if !same_sets {
            return f64::INFINITY;
        }
        let ext = self.x.iter().zip(&state.x).map(|(a, b)| (a - b).abs());
        let int = state.internal.iter().enumerate().flat_map(|(e, m)| {
            [
                (self.alpha_b[e] - m.alpha_b).abs(),
                (self.lambda[e] - m.lambda).abs(),
            ]
        });
        ext.chain(int).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationComparison {
    pub step: usize,
    pub iteration: usize,
    pub max_abs_difference: f64,
    pub increment_norm: f64,
    pub released_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub iterations: Vec<IterationComparison>,
    /// Steps in which the condensed loop did not reach its exit rule.
    pub unconverged_steps: Vec<usize>,
}

impl EquivalenceReport {
    pub fn max_difference(&self) -> f64 {
        self.iterations
            .iter()
            .map(|c| c.max_abs_difference)
            .fold(0.0, f64::max)
    }

    /// Whether any iteration had a released element, i.e. the inactive
    /// branch of the condensation was exercised.
    pub fn saw_release(&self) -> bool {
        self.iterations.iter().any(|c| c.released_elements > 0)
    }
}

/// Runs the condensed and the uncondensed Newton solvers side by side through
/// the load values `loads` and compares their iterates after every solve.
/// The condensed solver's exit rule drives both.
pub fn condensation_equivalence(
    mesh: &Mesh,
    params: MaterialParams,
    bcs: BoundaryConditions,
    loads: &[f64],
    options: NewtonOptions,
) -> Result<EquivalenceReport, VerifyError> {
    let mut condensed = Solver::new(mesh, LagrangeMixed { params }, bcs, options)?;
    let mut full = UncondensedSolver::from_condensed(&condensed)?;
    let mut report = EquivalenceReport {
        iterations: Vec::new(),
        unconverged_steps: Vec::new(),
    };
    for (step, &target) in loads.iter().enumerate() {
        let lift = condensed.lift_to(target);
        let full_lift = full.lift_to(target);
        let mut state = condensed.state().clone();
        state.load = target;
        condensed.set_state(state);
        full.load = target;
        let mut converged = false;
        for i in 0..options.max_iterations {
            let info = condensed.iteration(i, (i == 0).then_some(lift.as_slice()))?;
            let dense = full
                .iteration(i, (i == 0).then_some(full_lift.as_slice()))?
                .ok_or(VerifyError::Singular { step, iteration: i })?;
            report.iterations.push(IterationComparison {
                step,
                iteration: i,
                max_abs_difference: full.distance(condensed.state()),
                increment_norm: dense.increment_norm,
                released_elements: condensed
                    .state()
                    .history
                    .iter()
                    .filter(|h| !h.constraint_active)
                    .count(),
            });
            if info.increment_norm < options.tolerance
                && info.flips == 0
                && info.pending_releases == 0
            {
                converged = true;
                break;
            }
        }
        if !converged {
            report.unconverged_steps.push(step);
        }
        condensed.commit()?;
        full.commit();
    }
    Ok(report)
}

/// Two tets sharing a face, clamped in `y` and `z` on the base `z = 0`,
/// sheared in `x` there by `0.001 * load` and pulled by the traction
/// `(0, 0, load)` on every other boundary facet.
pub fn two_tet_fixture() -> (Mesh, BoundaryConditions) {
    use crate::mesh::{FacetPredicate, TagKind};
    use crate::solver::{DirichletCondition, ExternalLoads};

    let vertices = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
    ];
    let mesh = Mesh::new(vertices, vec![[0, 1, 2, 3], [1, 2, 3, 4]])
        .and_then(|m| {
            m.classify_boundary(&[
                FacetPredicate::plane("base", TagKind::DirichletComponent, 2, 0.0, 1e-12),
                FacetPredicate::new("free", TagKind::Neumann, |c| c[2] > 1e-12),
            ])
        })
        .expect("fixed geometry");
    let bcs = BoundaryConditions {
        dirichlet: vec![
            DirichletCondition::driven("base", 0, 1e-3),
            DirichletCondition::fixed("base", 1),
            DirichletCondition::fixed("base", 2),
        ],
        loads: ExternalLoads {
            body_force: [0.0; 3],
            tractions: vec![("free".into(), [0.0, 0.0, 1.0])],
        },
        observation_tag: "base".into(),
        observation_component: 2,
    };
    (mesh, bcs)
}
