use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::dofs::{BoundaryConditions, DofMap};
use super::formulation::Formulation;
use super::linear::{norm, SparseLu, SparsePattern};
use super::{NewtonOptions, SolverError};
use crate::element::{ElementError, ElementSystem};
use crate::interpolation::{physical_gradients, ElementGeometry, ShapeTable};
use crate::material::damage_unchecked;
use crate::mesh::Mesh;

const NOT_FREE: usize = usize::MAX;
/// Elements evaluated in parallel before their contributions are scattered
/// in a fixed order.
const CHUNK: usize = 512;

/// Everything that changes during a simulation.
#[derive(Debug)]
pub struct SolverState<F: Formulation> {
    pub x: Vec<f64>,
    pub internal: Vec<F::Internal>,
    pub history: Vec<F::History>,
    /// Current value of the load program.
    pub load: f64,
}

impl<F: Formulation> Clone for SolverState<F> {
    fn clone(&self) -> Self {
        Self {
            x: self.x.clone(),
            internal: self.internal.clone(),
            history: self.history.clone(),
            load: self.load,
        }
    }
}

/// Assembled condensed system on the free dofs, plus the full residual.
pub struct Assembly<R> {
    pub values: Vec<f64>,
    pub residual: Vec<f64>,
    pub recoveries: Vec<R>,
    pub time: Duration,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IterationInfo {
    pub increment_norm: f64,
    pub residual_norm: f64,
    pub flips: usize,
    pub pending_releases: usize,
    pub assembly: Duration,
    pub solve: Duration,
}

/// Statistics of one converged load step (possibly made of bisected sub-steps).
#[derive(Debug, Clone, Default)]
pub struct StepStats {
    pub iterations: usize,
    pub increment_norms: Vec<f64>,
    pub assembly: Duration,
    pub solve: Duration,
    pub bisections: usize,
    pub sub_steps: usize,
    pub irreversibility_violations: usize,
}

impl StepStats {
    fn merge(&mut self, other: StepStats) {
        self.iterations += other.iterations;
        self.increment_norms.extend(other.increment_norms);
        self.assembly += other.assembly;
        self.solve += other.solve;
        self.bisections += other.bisections;
        self.sub_steps += other.sub_steps;
        self.irreversibility_violations += other.irreversibility_violations;
    }
}

pub struct Solver<'m, F: Formulation> {
    mesh: &'m Mesh,
    formulation: F,
    shapes: ShapeTable,
    geometry: Vec<ElementGeometry>,
    dofmap: DofMap,
    bcs: BoundaryConditions,
    element_dofs: Vec<usize>,
    n_el: usize,
    free: Vec<usize>,
    prescribed: Vec<(usize, f64)>,
    load_vector: Vec<f64>,
    observation: Vec<usize>,
    linear: SparseLu,
    options: NewtonOptions,
    state: SolverState<F>,
    residual: Vec<f64>,
}

impl<'m, F: Formulation> Solver<'m, F> {
    pub fn new(
        mesh: &'m Mesh,
        formulation: F,
        bcs: BoundaryConditions,
        options: NewtonOptions,
    ) -> Result<Self, SolverError> {
        let shapes = ShapeTable::four_point();
        let geometry = (0..mesh.n_tets())
            .into_par_iter()
            .map(|t| {
                physical_gradients(&shapes, &mesh.tet_coords(t)).map_err(|e| SolverError::Element {
                    element: t,
                    source: ElementError::from(e),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let dofmap = DofMap::new(mesh, formulation.has_damage());
        let n_el = dofmap.n_element_dofs();
        let element_dofs: Vec<usize> = (0..mesh.n_tets())
            .flat_map(|t| dofmap.element_dofs(mesh, t))
            .collect();
        let prescribed = bcs.resolve(mesh, &dofmap)?;
        let load_vector = bcs.load_vector(mesh, &dofmap)?;

        let mut free = vec![0; dofmap.n_dofs()];
        for &(d, _) in &prescribed {
            free[d] = NOT_FREE;
        }
        let mut n_free = 0;
        for f in free.iter_mut() {
            if *f != NOT_FREE {
                *f = n_free;
                n_free += 1;
            }
        }
        let blocks: Vec<Vec<usize>> = element_dofs
            .chunks(n_el)
            .map(|d| {
                d.iter()
                    .map(|&g| free[g])
                    .filter(|&f| f != NOT_FREE)
                    .collect()
            })
            .collect();
        let pattern = SparsePattern::from_blocks(n_free, blocks.iter().map(|b| b.as_slice()));

        let obs_tag = mesh
            .tag_id(&bcs.observation_tag)
            .expect("checked by resolve");
        let observation = mesh
            .nodes_on_tag(obs_tag)
            .into_iter()
            .map(|n| dofmap.u(n, bcs.observation_component))
            .collect();

        let n_tets = mesh.n_tets();
        let state = SolverState {
            x: vec![0.0; dofmap.n_dofs()],
            internal: vec![F::Internal::default(); n_tets],
            history: vec![formulation.initial_history(); n_tets],
            load: 0.0,
        };
        Ok(Self {
            mesh,
            formulation,
            shapes,
            geometry,
            residual: vec![0.0; dofmap.n_dofs()],
            dofmap,
            bcs,
            element_dofs,
            n_el,
            free,
            prescribed,
            load_vector,
            observation,
            linear: SparseLu::new(pattern),
            options,
            state,
        })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn formulation(&self) -> &F {
        &self.formulation
    }

    pub fn shapes(&self) -> &ShapeTable {
        &self.shapes
    }

    pub fn geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bcs
    }

    pub fn options(&self) -> &NewtonOptions {
        &self.options
    }

    pub fn state(&self) -> &SolverState<F> {
        &self.state
    }

    pub fn set_state(&mut self, state: SolverState<F>) {
        self.state = state;
    }

    /// Prescribed dofs and their load factors.
    pub fn prescribed(&self) -> &[(usize, f64)] {
        &self.prescribed
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.free[dof] != NOT_FREE
    }

    pub fn n_free(&self) -> usize {
        self.linear.pattern().dim()
    }

    pub fn pattern(&self) -> &SparsePattern {
        self.linear.pattern()
    }

    /// Global ids of the external dofs of element `e`.
    pub fn element_dof_ids(&self, e: usize) -> &[usize] {
        &self.element_dofs[e * self.n_el..(e + 1) * self.n_el]
    }

    /// External dof values of element `e`.
    pub fn element_ext(&self, e: usize) -> Vec<f64> {
        self.element_dof_ids(e)
            .iter()
            .map(|&g| self.state.x[g])
            .collect()
    }

    /// Full residual from the last assembly (before the last increment).
    pub fn last_residual(&self) -> &[f64] {
        &self.residual
    }

    /// Consistent nodal forces for a unit load value.
    pub fn load_vector(&self) -> &[f64] {
        &self.load_vector
    }

    pub fn element_system(&self, e: usize) -> Result<ElementSystem<F::Recovery>, SolverError> {
        let ext = self.element_ext(e);
        self.formulation
            .element(
                &self.shapes,
                &self.geometry[e],
                &ext,
                &self.state.internal[e],
                &self.state.history[e],
            )
            .map_err(|source| SolverError::Element { element: e, source })
    }

    /// Assembles the condensed tangent on the free dofs and the full residual
    /// at the current state. `lift` holds a prescribed increment whose linear
    /// effect `K lift` is added to the residual.
    pub fn assemble(&self, lift: Option<&[f64]>) -> Result<Assembly<F::Recovery>, SolverError> {
        let start = Instant::now();
        let pattern = self.linear.pattern();
        let mut values = vec![0.0; pattern.nnz()];
        let mut residual = vec![0.0; self.dofmap.n_dofs()];
        let n_tets = self.mesh.n_tets();
        let mut recoveries = Vec::with_capacity(n_tets);
        let n = self.n_el;
        let mut free_local = vec![0usize; n];
        for chunk in (0..n_tets).step_by(CHUNK) {
            let range = chunk..(chunk + CHUNK).min(n_tets);
            let systems: Vec<_> = range
                .clone()
                .into_par_iter()
                .map(|e| self.element_system(e))
                .collect();
            for (e, sys) in range.zip(systems) {
                let mut sys = sys?;
                let dofs = self.element_dof_ids(e);
                if let Some(lift) = lift {
                    for (j, &g) in dofs.iter().enumerate() {
                        let dj = lift[g];
                        if dj != 0.0 {
                            for i in 0..n {
                                sys.r[i] += sys.k[(i, j)] * dj;
                            }
                        }
                    }
                }
                for (i, &g) in dofs.iter().enumerate() {
                    residual[g] += sys.r[i];
                    free_local[i] = self.free[g];
                }
                for j in 0..n {
                    let fj = free_local[j];
                    if fj == NOT_FREE {
                        continue;
                    }
                    let col = sys.k.column(j);
                    for i in 0..n {
                        let fi = free_local[i];
                        if fi != NOT_FREE {
                            let p = pattern
                                .position(fi, fj)
                                .expect("pattern covers element blocks");
                            values[p] += col[i];
                        }
                    }
                }
                recoveries.push(sys.recovery);
            }
        }
        let load = self.state.load;
        if load != 0.0 {
            for (r, f) in residual.iter_mut().zip(&self.load_vector) {
                *r -= load * f;
            }
        }
        Ok(Assembly {
            values,
            residual,
            recoveries,
            time: start.elapsed(),
        })
    }

    /// One Newton iteration: assemble, solve, update the external and
    /// internal unknowns, then update the element histories with solve index
    /// `iteration`.
    pub fn iteration(
        &mut self,
        iteration: usize,
        lift: Option<&[f64]>,
    ) -> Result<IterationInfo, SolverError> {
        let asm = self.assemble(lift)?;
        let rhs: Vec<f64> = (0..self.dofmap.n_dofs())
            .filter(|&g| self.free[g] != NOT_FREE)
            .map(|g| -asm.residual[g])
            .collect();
        let residual_norm = norm(&rhs);
        let t = Instant::now();
        let d_free = self.linear.solve(&asm.values, &rhs)?;
        let solve = t.elapsed();

        let mut d = vec![0.0; self.dofmap.n_dofs()];
        for (g, dg) in d.iter_mut().enumerate() {
            let f = self.free[g];
            if f != NOT_FREE {
                *dg = d_free[f];
            } else if let Some(lift) = lift {
                *dg = lift[g];
            }
        }
        for (x, dx) in self.state.x.iter_mut().zip(&d) {
            *x += dx;
        }
        let n = self.n_el;
        let formulation = &self.formulation;
        let element_dofs = &self.element_dofs;
        let internal_sq: f64 = self
            .state
            .internal
            .par_iter_mut()
            .zip(asm.recoveries.par_iter())
            .enumerate()
            .map(|(e, (internal, rec))| {
                let de: Vec<f64> = element_dofs[e * n..(e + 1) * n]
                    .iter()
                    .map(|&g| d[g])
                    .collect();
                formulation.recover(rec, &de, internal)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        let increment_norm = (d.iter().map(|v| v * v).sum::<f64>() + internal_sq).sqrt();

        let (flips, pending_releases) = self.update_histories(iteration);
        self.residual = asm.residual;
        Ok(IterationInfo {
            increment_norm,
            residual_norm,
            flips,
            pending_releases,
            assembly: asm.time,
            solve,
        })
    }

    fn update_histories(&mut self, iteration: usize) -> (usize, usize) {
        let n = self.n_el;
        let (formulation, shapes, element_dofs, x) = (
            &self.formulation,
            &self.shapes,
            &self.element_dofs,
            &self.state.x,
        );
        let updates: Vec<_> = self
            .state
            .history
            .par_iter_mut()
            .zip(self.state.internal.par_iter())
            .enumerate()
            .map(|(e, (history, internal))| {
                let ext: Vec<f64> = element_dofs[e * n..(e + 1) * n]
                    .iter()
                    .map(|&g| x[g])
                    .collect();
                formulation.update_history(shapes, &ext, internal, history, iteration)
            })
            .collect();
        let flips = updates.iter().filter(|u| u.flipped).count();
        let pending = updates.iter().filter(|u| u.pending_release).count();
        (flips, pending)
    }

    /// Prescribed increment vector for moving the load to `target`.
    pub fn lift_to(&self, target: f64) -> Vec<f64> {
        let mut lift = vec![0.0; self.dofmap.n_dofs()];
        let dl = target - self.state.load;
        for &(d, factor) in &self.prescribed {
            lift[d] = factor * dl;
        }
        lift
    }

    /// Newton loop for a single time step to load `target`, without bisection
    /// and without committing. The state is left at the last iterate.
    pub fn newton(&mut self, target: f64) -> Result<StepStats, SolverError> {
        let lift = self.lift_to(target);
        let has_lift = lift.iter().any(|v| *v != 0.0);
        self.state.load = target;
        let mut stats = StepStats {
            sub_steps: 1,
            ..Default::default()
        };
        for i in 0..self.options.max_iterations {
            let info = self.iteration(i, (i == 0 && has_lift).then_some(lift.as_slice()))?;
            stats.iterations += 1;
            stats.increment_norms.push(info.increment_norm);
            stats.assembly += info.assembly;
            stats.solve += info.solve;
            if !info.increment_norm.is_finite() {
                return Err(SolverError::NonConvergence {
                    iterations: i + 1,
                    increment: info.increment_norm,
                });
            }
            if info.increment_norm < self.options.tolerance
                && info.flips == 0
                && info.pending_releases == 0
            {
                return Ok(stats);
            }
        }
        Err(SolverError::NonConvergence {
            iterations: self.options.max_iterations,
            increment: stats.increment_norms.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Commits the converged state into the element histories. Returns the
    /// number of elements whose damage dropped below the committed value.
    pub fn commit(&mut self) -> Result<usize, SolverError> {
        let n = self.n_el;
        let (formulation, shapes, element_dofs, x) = (
            &self.formulation,
            &self.shapes,
            &self.element_dofs,
            &self.state.x,
        );
        let results: Vec<_> = self
            .state
            .history
            .par_iter_mut()
            .zip(self.state.internal.par_iter())
            .enumerate()
            .map(|(e, (history, internal))| {
                let ext: Vec<f64> = element_dofs[e * n..(e + 1) * n]
                    .iter()
                    .map(|&g| x[g])
                    .collect();
                formulation
                    .commit(shapes, &ext, internal, history)
                    .map_err(|source| (e, source))
            })
            .collect();
        let mut violations = 0;
        for r in results {
            match r {
                Ok(()) => {}
                Err((_, ElementError::Irreversibility { .. })) => violations += 1,
                Err((element, source)) => return Err(SolverError::Element { element, source }),
            }
        }
        Ok(violations)
    }

    /// Advances to load `target`, halving the step on failure up to the
    /// configured number of times. Every converged sub-step is committed.
    pub fn step_to(&mut self, target: f64) -> Result<StepStats, SolverError> {
        let from = self.state.load;
        self.advance(from, target, 0)
    }

    fn advance(&mut self, from: f64, to: f64, depth: usize) -> Result<StepStats, SolverError> {
        let snapshot = self.state.clone();
        let attempt = self.newton(to).and_then(|mut stats| {
            stats.irreversibility_violations += self.commit()?;
            Ok(stats)
        });
        match attempt {
            Ok(stats) => Ok(stats),
            Err(e) if e.is_recoverable() && depth < self.options.max_bisections => {
                self.state = snapshot;
                let mid = 0.5 * (from + to);
                let mut first = self.advance(from, mid, depth + 1)?;
                let second = self.advance(mid, to, depth + 1)?;
                first.merge(second);
                first.bisections += 1;
                Ok(first)
            }
            Err(e) => {
                self.state = snapshot;
                Err(e)
            }
        }
    }

    /// Sum of the last residual over the observed dofs.
    pub fn reaction(&self) -> f64 {
        self.observation.iter().map(|&d| self.residual[d]).sum()
    }

    /// Sum of the last residual over component `component` of the nodes on `tag`.
    pub fn reaction_on(&self, tag: &str, component: usize) -> Option<f64> {
        let t = self.mesh.tag_id(tag)?;
        Some(
            self.mesh
                .nodes_on_tag(t)
                .into_iter()
                .map(|n| self.residual[self.dofmap.u(n, component)])
                .sum(),
        )
    }

    /// Damage at every Gauss point of every element.
    pub fn gauss_alpha(&self) -> Vec<[f64; 4]> {
        (0..self.mesh.n_tets())
            .into_par_iter()
            .map(|e| {
                self.formulation.gauss_alpha(
                    &self.shapes,
                    &self.element_ext(e),
                    &self.state.internal[e],
                )
            })
            .collect()
    }

    /// Largest value of `D(alpha)` over all Gauss points.
    pub fn d_max(&self) -> f64 {
        self.gauss_alpha()
            .iter()
            .flatten()
            .map(|&a| damage_unchecked(a)[0])
            .fold(0.0, f64::max)
    }

    /// `(int |u|^2 dX)^(1/2)` of the current displacement field.
    pub fn displacement_l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for e in 0..self.mesh.n_tets() {
            let dofs = self.element_dof_ids(e);
            for (gp, point) in self.geometry[e].points.iter().enumerate() {
                let n = &self.shapes.points[gp].p2;
                let mut u = [0.0; 3];
                for a in 0..10 {
                    for c in 0..3 {
                        u[c] += n[a] * self.state.x[dofs[3 * a + c]];
                    }
                }
                sum += point.weight * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
            }
        }
        sum.sqrt()
    }

    /// Displacement part of the global vector.
    pub fn displacements(&self) -> &[f64] {
        &self.state.x[..self.dofmap.n_displacement_dofs()]
    }
}

/// L2 distance between two Gauss-point fields on the same mesh.
pub fn gauss_l2_distance(geometry: &[ElementGeometry], a: &[[f64; 4]], b: &[[f64; 4]]) -> f64 {
    let mut sum = 0.0;
    for (e, geo) in geometry.iter().enumerate() {
        for (gp, p) in geo.points.iter().enumerate() {
            sum += p.weight * (a[e][gp] - b[e][gp]).powi(2);
        }
    }
    sum.sqrt()
}
