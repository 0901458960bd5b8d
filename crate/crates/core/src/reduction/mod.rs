//! Model order reduction as fixed-structure synthesis.
//!
//! The reduced model `G_red` is the "controller" of the generalized plant
//! `[[G, -I], [I, 0]]`, so minimizing the closed-loop norm over its free
//! entries minimizes `||G - G_red||` on the evaluation grid.

mod balanced;
mod mask;
mod modal;
mod objective;
mod optimizer;

pub use balanced::{
    balanced_truncate, balancing, frozen_balanced_truncate, generalized_gramians, lpv_balanced_truncate,
    Balancing,
};
pub use mask::{modal_blocks, Parameterization, Slot, StructureMask, Which};
pub use modal::modal_form;
pub use objective::{Evaluation, PointValue, Subgradient, SynthesisObjective, BIG};
pub use optimizer::{descend, min_norm_hull, multistart, MultistartResult, SearchOptions, StartResult, StartSummary};

use crate::analysis::grid_worst_hinf;
use crate::certify::{certify_bound_from, MAX_VERTEX_PARAMS};
use crate::error::{Error, Result};
use crate::io::ModelJson;
use crate::model::{difference, generalized_plant, AffineMatrix, GeneralizedPlant, LpvModel};
use crate::scalar::Scalar;
use nalgebra::DVector;
use serde_json::{json, Value};

/// Label attached to certified bounds.
pub const CERTIFICATION_METHOD: &str = "common Lyapunov matrix, bounded real lemma at box vertices";

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionConfig<T: Scalar> {
    pub order: usize,
    pub grid: Vec<Vec<T>>,
    /// Relative accuracy of every frozen H-infinity evaluation.
    pub rel_tol: T,
    pub max_iterations: usize,
    pub step_tolerance: T,
    pub eps_stab: T,
    pub multistart: usize,
    pub seed: u64,
    pub certify: bool,
    pub cert_rel_tol: T,
}

impl<T: Scalar> ReductionConfig<T> {
    pub fn new(order: usize, grid: Vec<Vec<T>>) -> Self {
        Self {
            order,
            grid,
            rel_tol: T::lit(1e-6),
            max_iterations: 200,
            step_tolerance: T::lit(1e-9),
            eps_stab: T::lit(1e-6),
            multistart: 5,
            seed: 42,
            certify: false,
            cert_rel_tol: T::lit(1e-3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidArgument("order must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("evaluation grid is empty".into()));
        }
        if !(self.eps_stab > T::zero()) {
            return Err(Error::InvalidArgument("eps_stab must be positive".into()));
        }
        if !(self.rel_tol > T::zero() && self.rel_tol <= T::lit(0.1)) {
            return Err(Error::InvalidArgument("rel_tol must lie in (0, 0.1]".into()));
        }
        if !(self.cert_rel_tol > T::zero() && self.cert_rel_tol < T::one()) {
            return Err(Error::InvalidArgument("cert_rel_tol must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            max_iterations: self.max_iterations,
            step_tolerance: self.step_tolerance.as_f64(),
            multistart: self.multistart,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "order": self.order,
            "grid": self.grid.iter().map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "rel_tol": self.rel_tol.as_f64(),
            "max_iterations": self.max_iterations,
            "step_tolerance": self.step_tolerance.as_f64(),
            "eps_stab": self.eps_stab.as_f64(),
            "multistart": self.multistart,
            "seed": self.seed,
            "certify": self.certify,
            "cert_rel_tol": self.cert_rel_tol.as_f64(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationSummary<T: Scalar> {
    pub certified_bound: T,
    pub grid_lower_bound: T,
    pub margin: T,
    pub bisection_steps: usize,
    pub method: String,
}

/// Result of a synthesis run: the optimized "controller" and its search trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport<T: Scalar> {
    pub k: LpvModel<T>,
    /// Grid worst-case closed-loop norm (a lower bound on the induced gain).
    pub grid_error: T,
    pub iterations: usize,
    /// Winning start's objective after every accepted step.
    pub history: Vec<T>,
    pub active_rho: Vec<T>,
    /// `inf` when the peak sits at infinite frequency.
    pub active_freq: T,
    pub start_index: usize,
    pub starts: Vec<StartSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport<T: Scalar> {
    pub g_red: LpvModel<T>,
    pub grid_error: T,
    pub certification: Option<CertificationSummary<T>>,
    /// Why certification was requested but not obtained.
    pub certification_error: Option<String>,
    pub iterations: usize,
    pub history: Vec<T>,
    pub active_rho: Vec<T>,
    pub active_freq: T,
    pub start_index: usize,
    pub starts: Vec<StartSummary>,
    /// Grid error of the balanced-truncation model the search starts from.
    pub baseline_grid_error: Option<T>,
    pub initializer: String,
}

impl<T: Scalar> ReductionReport<T> {
    pub fn certified_bound(&self) -> Option<T> {
        self.certification.as_ref().map(|c| c.certified_bound)
    }

    pub fn to_json(&self) -> Value {
        let finite = |x: T| {
            let v = x.as_f64();
            if v.is_finite() {
                json!(v)
            } else {
                Value::Null
            }
        };
        let cert = self.certification.as_ref().map(|c| {
            json!({
                "certified_bound": c.certified_bound.as_f64(),
                "grid_lower_bound": c.grid_lower_bound.as_f64(),
                "margin": c.margin.as_f64(),
                "bisection_steps": c.bisection_steps,
                "method": c.method,
            })
        });
        json!({
            "model": ModelJson::from_model(&self.g_red),
            "grid_error": self.grid_error.as_f64(),
            "certified_bound": self.certified_bound().map(|b| b.as_f64()),
            "certification": cert,
            "certification_error": self.certification_error,
            "iterations": self.iterations,
            "history": self.history.iter().map(|h| h.as_f64()).collect::<Vec<_>>(),
            "active_rho": self.active_rho.iter().map(|r| r.as_f64()).collect::<Vec<_>>(),
            "active_freq": finite(self.active_freq),
            "start_index": self.start_index,
            "starts": self.starts.iter().map(|s| json!({
                "index": s.index,
                "initial_value": s.initial_value,
                "final_value": s.final_value,
                "iterations": s.iterations,
                "stable": s.stable,
            })).collect::<Vec<_>>(),
            "baseline_grid_error": self.baseline_grid_error.map(|b| b.as_f64()),
            "initializer": self.initializer,
            "gramian_objective": "trace(Wc) + trace(Wo)",
        })
    }
}

/// Minimizes the grid worst-case norm of `F_l(plant, K)` over the free
/// entries of `K` allowed by `mask`, starting from `initial` (projected onto
/// the mask) and from seeded perturbations of it.
///
/// Pinned entries keep the values they have in `initial`'s projection
/// template: zero, except `D` which is pinned to `initial`'s `D`.
pub fn synthesize<T: Scalar>(
    plant: &GeneralizedPlant<T>,
    mask: &StructureMask,
    config: &ReductionConfig<T>,
    initial: &LpvModel<T>,
) -> Result<SynthesisReport<T>> {
    config.validate()?;
    if mask.order() != config.order {
        return Err(Error::Dimension(format!(
            "structure mask has order {}, config asks for {}",
            mask.order(),
            config.order
        )));
    }
    let param = Parameterization::zero_template(mask.clone(), &initial.d, initial.params.clone())?;
    let start = param.project(initial)?;
    let obj = SynthesisObjective::new(plant.clone(), param, config.grid.clone(), config.rel_tol, config.eps_stab)?;
    let mut theta0 = obj.param().pack(&start)?;
    if !obj.evaluate(&theta0).is_stable() {
        theta0 = stabilize_start(&obj, &theta0);
    }
    let ms = multistart(&obj, &theta0, &config.search_options())?;
    let best = &ms.best;
    let active = best.eval.active;
    Ok(SynthesisReport {
        k: obj.param().unpack(&best.theta),
        grid_error: best.eval.value,
        iterations: best.iterations,
        history: best.history.clone(),
        active_rho: config.grid[active].clone(),
        active_freq: best.eval.points[active].omega,
        start_index: ms.start_index,
        starts: ms.starts,
    })
}

/// Shrinks the parameter-dependent `A` entries of a start that projection
/// onto the mask destabilized, down to zero if needed.
fn stabilize_start<T: Scalar>(obj: &SynthesisObjective<T>, theta: &DVector<T>) -> DVector<T> {
    let slots = obj.param().slots();
    let mut t = theta.clone();
    for k in 0..=8 {
        let factor = if k == 8 { T::zero() } else { T::lit(0.5f64.powi(k + 1)) };
        for (i, s) in slots.iter().enumerate() {
            if s.which == Which::A && s.term > 0 {
                t[i] = theta[i] * factor;
            }
        }
        if obj.evaluate(&t).is_stable() {
            log::info!("start stabilized by scaling parameter-dependent A terms by {}", factor.as_f64());
            return t;
        }
    }
    theta.clone()
}

/// Pads `m` with decoupled stable states (zero input and output coupling)
/// up to `n` states.
pub(crate) fn pad_states<T: Scalar>(m: &LpvModel<T>, n: usize) -> LpvModel<T> {
    let k = m.n_x();
    if k >= n {
        return m.clone();
    }
    let nr = m.n_rho();
    let extra = n - k;
    let mut a0 = nalgebra::DMatrix::zeros(n, n);
    a0.view_mut((0, 0), (k, k)).copy_from(m.a.constant());
    let scale = if k > 0 {
        m.a.constant().amax()
    } else {
        T::one()
    };
    for i in k..n {
        a0[(i, i)] = -scale.max(T::lit(1e-3));
    }
    let mut terms = vec![a0];
    terms.extend(m.a.coeffs().iter().map(|c| {
        let mut t = nalgebra::DMatrix::zeros(n, n);
        t.view_mut((0, 0), (k, k)).copy_from(c);
        t
    }));
    LpvModel::new(
        AffineMatrix::from_terms(terms).expect("consistent terms"),
        AffineMatrix::vstack(&[&m.b, &AffineMatrix::zeros(extra, m.n_u(), nr)]).expect("B padding"),
        AffineMatrix::hstack(&[&m.c, &AffineMatrix::zeros(m.n_y(), extra, nr)]).expect("C padding"),
        m.d.clone(),
        m.params.clone(),
    )
    .expect("padded model")
}

/// Start 0 of [`reduce`]: `g` itself at full order, otherwise the LPV
/// balanced truncation (frozen-center balancing if the generalized Gramians
/// are infeasible), moved to modal coordinates when `mask` is modal.
///
/// Returns the start, a label for it, and the unprojected truncation.
pub fn reduction_start<T: Scalar>(g: &LpvModel<T>, mask: &StructureMask) -> Result<(LpvModel<T>, String)> {
    let n = mask.order();
    let (mut start, mut label) = if n == g.n_x() {
        (g.clone(), "original model".to_string())
    } else if n > g.n_x() {
        (pad_states(g, n), "original model, padded".to_string())
    } else {
        let lpv = if g.n_rho() <= MAX_VERTEX_PARAMS {
            g.params
                .vertices()
                .and_then(|v| lpv_balanced_truncate(g, n, &v))
        } else {
            Err(Error::InvalidArgument("too many parameters for vertex Gramians".into()))
        };
        match lpv {
            Ok(m) => (m, "LPV balanced truncation".to_string()),
            Err(e) => {
                log::warn!("generalized Gramians unavailable ({e}); balancing at the box center");
                (
                    frozen_balanced_truncate(g, n, &g.params.center())?,
                    "balanced truncation at the box center".to_string(),
                )
            }
        }
    };
    start = pad_states(&start, n);
    if *mask == StructureMask::modal(n, mask.n_u(), mask.n_y(), mask.n_rho()) || is_block_diagonal_mask(mask) {
        start = modal_form(&start)?;
        label.push_str(", modal coordinates");
    }
    Ok((start, label))
}

fn is_block_diagonal_mask(mask: &StructureMask) -> bool {
    let n = mask.order();
    let modal = StructureMask::modal(n, mask.n_u(), mask.n_y(), mask.n_rho());
    mask.a
        .iter()
        .zip(&modal.a)
        .all(|(m, b)| m.iter().zip(b.iter()).all(|(&x, &y)| !x || y))
        && mask.a.iter().any(|m| m.iter().any(|&x| !x))
}

/// Reduces `g` to `config.order` states within the structure `mask`.
pub fn reduce<T: Scalar>(g: &LpvModel<T>, config: &ReductionConfig<T>, mask: &StructureMask) -> Result<ReductionReport<T>> {
    config.validate()?;
    mask.validate()?;
    if (mask.n_u(), mask.n_y(), mask.n_rho()) != (g.n_u(), g.n_y(), g.n_rho()) {
        return Err(Error::Dimension(format!(
            "structure mask is {}x{} with {} parameters, model is {}x{} with {}",
            mask.n_y(),
            mask.n_u(),
            mask.n_rho(),
            g.n_y(),
            g.n_u(),
            g.n_rho()
        )));
    }
    for rho in &config.grid {
        g.params.check(rho)?;
    }
    let (start, initializer) = reduction_start(g, mask)?;
    let baseline_grid_error = if config.order < g.n_x() {
        let err = difference(g, &start)?;
        grid_worst_hinf(&err, &config.grid, config.rel_tol).ok().map(|w| w.gamma)
    } else {
        None
    };
    let plant = generalized_plant(g);
    let syn = synthesize(&plant, mask, config, &start)?;
    let mut report = ReductionReport {
        g_red: syn.k,
        grid_error: syn.grid_error,
        certification: None,
        certification_error: None,
        iterations: syn.iterations,
        history: syn.history,
        active_rho: syn.active_rho,
        active_freq: syn.active_freq,
        start_index: syn.start_index,
        starts: syn.starts,
        baseline_grid_error,
        initializer,
    };
    if config.certify {
        match certify_reduction(g, &report.g_red, config.cert_rel_tol, report.grid_error) {
            Ok(c) => report.certification = Some(c),
            Err(e) => {
                log::warn!("certification failed: {e}");
                report.certification_error = Some(e.to_string());
            }
        }
    }
    Ok(report)
}

/// Certified induced-L2 bound on `g - g_red` over the box vertices, bisecting
/// up from `grid_error`.
pub fn certify_reduction<T: Scalar>(
    g: &LpvModel<T>,
    g_red: &LpvModel<T>,
    rel_tol: T,
    grid_error: T,
) -> Result<CertificationSummary<T>> {
    let err = difference(g, g_red)?;
    let vertices = err.params.vertices()?;
    let cert = certify_bound_from(&err, rel_tol, &vertices, grid_error)?;
    Ok(CertificationSummary {
        certified_bound: cert.certified_bound,
        grid_lower_bound: cert.grid_lower_bound,
        margin: cert.margin,
        bisection_steps: cert.bisection_steps,
        method: CERTIFICATION_METHOD.to_string(),
    })
}
