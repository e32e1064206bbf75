use nalgebra::DMatrix;

use crate::element::elastic::elastic_residual_tangent;
use crate::element::gd::{
    self, alpha_at_points, condense, element_residual_tangent, ElementDofs, ElementHistory,
    HistoryUpdate, Recovery, N_GAUSS,
};
use crate::element::{ElementError, ElementSystem, N_U};
use crate::interpolation::{ElementGeometry, ShapeTable};
use crate::material::MaterialParams;
use crate::penalty::{
    add_history_tangent, commit_penalty_history, nodal_alpha_at_points, penalty_element,
    update_penalty_history, PenaltyHistory, PenaltyParams,
};

/// Element-level behaviour plugged into the global Newton solver.
///
/// `ext` always holds the element's external dofs in local order: the 30
/// displacement values, followed by the 4 vertex damage values when
/// [`Formulation::has_damage`] is true.
pub trait Formulation: Sync {
    /// Condensed unknowns stored per element.
    type Internal: Clone + Default + Send + Sync + std::fmt::Debug;
    type History: Clone + Send + Sync + std::fmt::Debug;
    type Recovery: Send + Sync;

    fn name(&self) -> &'static str;
    fn material(&self) -> &MaterialParams;
    fn has_damage(&self) -> bool;
    fn initial_history(&self) -> Self::History;

    fn element(
        &self,
        shapes: &ShapeTable,
        geo: &ElementGeometry,
        ext: &[f64],
        internal: &Self::Internal,
        history: &Self::History,
    ) -> Result<ElementSystem<Self::Recovery>, ElementError>;

    /// Applies the internal increment implied by `d_ext` and returns its
    /// squared Euclidean norm.
    fn recover(
        &self,
        recovery: &Self::Recovery,
        d_ext: &[f64],
        internal: &mut Self::Internal,
    ) -> f64;

    fn update_history(
        &self,
        shapes: &ShapeTable,
        ext: &[f64],
        internal: &Self::Internal,
        history: &mut Self::History,
        iteration: usize,
    ) -> HistoryUpdate;

    fn commit(
        &self,
        shapes: &ShapeTable,
        ext: &[f64],
        internal: &Self::Internal,
        history: &mut Self::History,
    ) -> Result<(), ElementError>;

    /// Damage at the Gauss points (zeros without damage).
    fn gauss_alpha(
        &self,
        shapes: &ShapeTable,
        ext: &[f64],
        internal: &Self::Internal,
    ) -> [f64; N_GAUSS];

    /// Element multiplier, if the formulation has one.
    fn multiplier(&self, _internal: &Self::Internal) -> f64 {
        0.0
    }

    /// Committed Gauss-point damage history.
    fn committed_alpha(&self, _history: &Self::History) -> [f64; N_GAUSS] {
        [0.0; N_GAUSS]
    }
}

/// The condensed Lagrange-multiplier formulation. With `c = 0` it is the
/// local damage model.
#[derive(Debug, Clone)]
pub struct LagrangeMixed {
    pub params: MaterialParams,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MixedInternal {
    pub alpha_b: f64,
    pub lambda: f64,
}

impl Formulation for LagrangeMixed {
    type Internal = MixedInternal;
    type History = ElementHistory;
    type Recovery = Recovery;

    fn name(&self) -> &'static str {
        if self.params.c == 0.0 {
            "local"
        } else {
            "lagrange-mixed"
        }
    }

    fn material(&self) -> &MaterialParams {
        &self.params
    }

    fn has_damage(&self) -> bool {
        true
    }

    fn initial_history(&self) -> ElementHistory {
        ElementHistory::default()
    }

    fn element(
        &self,
        shapes: &ShapeTable,
        geo: &ElementGeometry,
        ext: &[f64],
        internal: &MixedInternal,
        history: &ElementHistory,
    ) -> Result<ElementSystem<Recovery>, ElementError> {
        let dofs = ElementDofs::from_parts(ext, internal.alpha_b, internal.lambda);
        let (r, k) = element_residual_tangent(shapes, geo, &dofs, history, &self.params)?;
        let ce = condense(&r, &k, history.constraint_active)?;
        Ok(ElementSystem {
            k: DMatrix::from_column_slice(gd::N_EXT, gd::N_EXT, ce.k_ext.as_slice()),
            r: ce.r_ext.as_slice().to_vec(),
            recovery: ce.recovery,
        })
    }

    fn recover(&self, recovery: &Recovery, d_ext: &[f64], internal: &mut MixedInternal) -> f64 {
        let (db, dl) = recovery.internal_increment(d_ext);
        internal.alpha_b += db;
        internal.lambda += dl;
        db * db + dl * dl
    }

    fn update_history(
        &self,
        shapes: &ShapeTable,
        ext: &[f64],
        internal: &MixedInternal,
        history: &mut ElementHistory,
        iteration: usize,
    ) -> HistoryUpdate {
        let dofs = ElementDofs::from_parts(ext, internal.alpha_b, internal.lambda);
        gd::update_history(shapes, &dofs, history, iteration)
    }

    fn commit(
        &self,
        shapes: &ShapeTable,
        ext: &[f64],
        internal: &MixedInternal,
        history: &mut ElementHistory,
    ) -> Result<(), ElementError> {
        let dofs = ElementDofs::from_parts(ext, internal.alpha_b, internal.lambda);
        gd::commit_step(shapes, &dofs, history)
    }

    fn gauss_alpha(
        &self,
        shapes: &ShapeTable,
        ext: &[f64],
        internal: &MixedInternal,
    ) -> [f64; N_GAUSS] {
        alpha_at_points(
            shapes,
            &ElementDofs::from_parts(ext, internal.alpha_b, internal.lambda),
        )
    }

    fn multiplier(&self, internal: &MixedInternal) -> f64 {
        internal.lambda
    }

    fn committed_alpha(&self, history: &ElementHistory) -> [f64; N_GAUSS] {
        history.alpha_n
    }
}

#[derive(Debug, Clone)]
pub struct Penalty {
    pub params: PenaltyParams,
}

impl Formulation for Penalty {
    type Internal = ();
    type History = PenaltyHistory;
    type Recovery = ();

    fn name(&self) -> &'static str {
        "penalty"
    }

    fn material(&self) -> &MaterialParams {
        &self.params.base
    }

    fn has_damage(&self) -> bool {
        true
    }

    fn initial_history(&self) -> PenaltyHistory {
        PenaltyHistory::default()
    }

    fn element(
        &self,
        shapes: &ShapeTable,
        geo: &ElementGeometry,
        ext: &[f64],
        _: &(),
        history: &PenaltyHistory,
    ) -> Result<ElementSystem<()>, ElementError> {
        let (r, mut k) = penalty_element(shapes, geo, ext, history, &self.params)?;
        add_history_tangent(shapes, geo, history, &self.params, &mut k);
        Ok(ElementSystem {
            k: DMatrix::from_column_slice(34, 34, k.as_slice()),
            r: r.as_slice().to_vec(),
            recovery: (),
        })
    }

    fn recover(&self, _: &(), _: &[f64], _: &mut ()) -> f64 {
        0.0
    }

    /// The history follows the nodal field continuously, so it never holds
    /// the Newton loop open.
    fn update_history(
        &self,
        shapes: &ShapeTable,
        ext: &[f64],
        _: &(),
        history: &mut PenaltyHistory,
        _iteration: usize,
    ) -> HistoryUpdate {
        update_penalty_history(shapes, &ext[N_U..], history, &self.params);
        HistoryUpdate::default()
    }

    fn commit(
        &self,
        _: &ShapeTable,
        _: &[f64],
        _: &(),
        history: &mut PenaltyHistory,
    ) -> Result<(), ElementError> {
        commit_penalty_history(history);
        Ok(())
    }

    fn gauss_alpha(&self, shapes: &ShapeTable, ext: &[f64], _: &()) -> [f64; N_GAUSS] {
        nodal_alpha_at_points(shapes, &ext[N_U..])
    }

    fn committed_alpha(&self, history: &PenaltyHistory) -> [f64; N_GAUSS] {
        history.alpha_bar_n
    }
}

/// Plain Neo-Hooke P2 formulation without damage unknowns.
#[derive(Debug, Clone)]
pub struct Elastic {
    pub params: MaterialParams,
}

impl Formulation for Elastic {
    type Internal = ();
    type History = ();
    type Recovery = ();

    fn name(&self) -> &'static str {
        "elastic"
    }

    fn material(&self) -> &MaterialParams {
        &self.params
    }

    fn has_damage(&self) -> bool {
        false
    }

    fn initial_history(&self) {}

    fn element(
        &self,
        _: &ShapeTable,
        geo: &ElementGeometry,
        ext: &[f64],
        _: &(),
        _: &(),
    ) -> Result<ElementSystem<()>, ElementError> {
        let u: &[f64; N_U] = ext.try_into().expect("elastic element has 30 dofs");
        let (r, k) = elastic_residual_tangent(geo, u, &self.params)?;
        Ok(ElementSystem {
            k: DMatrix::from_column_slice(N_U, N_U, k.as_slice()),
            r: r.as_slice().to_vec(),
            recovery: (),
        })
    }

    fn recover(&self, _: &(), _: &[f64], _: &mut ()) -> f64 {
        0.0
    }

    fn update_history(
        &self,
        _: &ShapeTable,
        _: &[f64],
        _: &(),
        _: &mut (),
        _: usize,
    ) -> HistoryUpdate {
        HistoryUpdate::default()
    }

    fn commit(&self, _: &ShapeTable, _: &[f64], _: &(), _: &mut ()) -> Result<(), ElementError> {
        Ok(())
    }

    fn gauss_alpha(&self, _: &ShapeTable, _: &[f64], _: &()) -> [f64; N_GAUSS] {
        [0.0; N_GAUSS]
    }
}
