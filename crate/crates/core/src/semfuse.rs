//! Dirichlet label fusion for voxels: occupancy-weighted evidence routing
//! into class, free and unknown states, viewpoint discounting and
//! uncertainty-thresholded hard labels.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::evidmodel::{DirichletEvidence, LabelSpace, VoxelState};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct FusionConfig<T> {
    /// Voxels whose vacuity is not below `tau` are labeled unknown.
    pub tau: T,
    /// Floor on the depth weight and threshold below which a voxel's prior
    /// weight counts as unobserved.
    pub epsilon: T,
    pub lambda_view_min: T,
    pub evidence_scale: T,
}

impl<T: Real> Default for FusionConfig<T> {
    fn default() -> Self {
        Self {
            tau: T::HALF,
            epsilon: T::lit(0.01),
            lambda_view_min: T::lit(0.2),
            evidence_scale: T::ONE,
        }
    }
}

impl<T: Real> FusionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > T::ZERO && self.tau <= T::ONE) {
            return Err(Error::invalid("tau", self.tau.as_f64(), "must lie in (0, 1]"));
        }
        if !(self.epsilon > T::ZERO) || !self.epsilon.finite() {
            return Err(Error::invalid("epsilon", self.epsilon.as_f64(), "must be > 0"));
        }
        if !(self.lambda_view_min > T::ZERO && self.lambda_view_min <= T::ONE) {
            return Err(Error::invalid("lambda_view_min", self.lambda_view_min.as_f64(), "must lie in (0, 1]"));
        }
        if !(self.evidence_scale >= T::ZERO) || !self.evidence_scale.finite() {
            return Err(Error::invalid("evidence_scale", self.evidence_scale.as_f64(), "must be >= 0"));
        }
        Ok(())
    }
}

/// Weight-scaled belief that the voxel holds what the measurement says:
/// free for `sdf > 0`, occupied otherwise (a zero distance counts as occupied).
pub fn occupancy_belief<T: Real>(w_m: T, sdf: T) -> T {
    let decay = (-sdf.abs()).exp();
    if sdf > T::ZERO {
        w_m * (T::ONE - decay)
    } else {
        w_m * decay
    }
}

pub fn depth_weight<T: Real>(o: T, cfg: &FusionConfig<T>) -> T {
    o.max(cfg.epsilon)
}

/// `clamp((1 - cos θ) / 2, lambda_view_min, 1)` between the stored mean view
/// and the new one; 1 for a voxel never seen before. A mean view that has
/// cancelled to zero length is treated as perpendicular.
pub fn viewpoint_discount<T: Real>(mean_view: &Vector3<T>, obs_count: u64, new_view: &Vector3<T>, cfg: &FusionConfig<T>) -> T {
    if obs_count == 0 {
        return T::ONE;
    }
    let norm = mean_view.norm() * new_view.norm();
    let cos = if norm > T::ZERO { mean_view.dot(new_view) / norm } else { T::ZERO };
    let raw = (T::ONE - cos) * T::HALF;
    raw.max(cfg.lambda_view_min).min(T::ONE)
}

/// Maps pixel evidence `e_m` (length `K`) to voxel-state evidence
/// (length `K + 2`). An unobserved voxel takes `λ_d` on unknown; otherwise
/// free space takes `λ_d` on free and an occupied voxel takes `λ_d · e_m`.
pub fn route_evidence<T: Real>(e_m: &[T], sdf: T, w_prior: T, lambda_d: T, cfg: &FusionConfig<T>) -> Vec<T> {
    let space = LabelSpace::new(e_m.len().max(1)).expect("non-zero class count");
    let mut out = vec![T::ZERO; space.states()];
    if w_prior < cfg.epsilon {
        out[space.unknown()] = lambda_d;
    } else if sdf > T::ZERO {
        out[space.free()] = lambda_d;
    } else {
        for (o, &e) in out.iter_mut().zip(e_m) {
            *o = lambda_d * e;
        }
    }
    out
}

/// Conjugate update `c + evidence_scale · λ_v · routed`.
pub fn fuse_semantic<T: Real>(
    sem: &DirichletEvidence<T>,
    routed: &[T],
    lambda_v: T,
    cfg: &FusionConfig<T>,
) -> Result<DirichletEvidence<T>> {
    let mut out = sem.clone();
    fuse_in_place(&mut out, routed, lambda_v, cfg)?;
    Ok(out)
}

pub(crate) fn fuse_in_place<T: Real>(
    sem: &mut DirichletEvidence<T>,
    routed: &[T],
    lambda_v: T,
    cfg: &FusionConfig<T>,
) -> Result<()> {
    if routed.len() != sem.len() {
        return Err(Error::DimensionMismatch { expected: sem.len(), actual: routed.len() });
    }
    if routed.iter().any(|&e| !(e >= T::ZERO) || !e.finite()) {
        return Err(Error::invalid("routed evidence", f64::NAN, "entries must be finite and >= 0"));
    }
    let lambda = cfg.evidence_scale * lambda_v;
    for (c, &e) in sem.concentrations_mut().iter_mut().zip(routed) {
        *c += lambda * e;
    }
    Ok(())
}

/// Hard label of a voxel Dirichlet over `K + 2` states: the arg-max state
/// (lowest index on ties) when vacuity is below `tau`, else unknown.
pub fn voxel_label<T: Real>(sem: &DirichletEvidence<T>, tau: T) -> VoxelState {
    let space = LabelSpace::new(sem.len().saturating_sub(2).max(1)).expect("non-zero class count");
    if sem.u_ep() < tau {
        space.state(sem.argmax())
    } else {
        VoxelState::Unknown
    }
}
