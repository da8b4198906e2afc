//! Evidential distributions: the Normal-Inverse-Gamma depth head and the
//! Dirichlet semantic head, with their closed-form moments.

use crate::error::{Error, Result};
use crate::scalar::{softplus, Real};

/// Per-pixel evidential depth parameters.
///
/// Stored unconstrained; every operation that needs a proper distribution
/// calls [`NigParams::validate`] first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigParams<T> {
    /// Expected depth (m).
    pub mu: T,
    /// Evidence strength, a virtual observation count.
    pub nu: T,
    /// Inverse-Gamma shape.
    pub alpha: T,
    /// Inverse-Gamma scale (m²).
    pub beta: T,
}

/// Moments of a [`NigParams`] distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigMoments<T> {
    pub expected_depth: T,
    /// `E[σ²] = β / (α - 1)`.
    pub aleatoric: T,
    /// `Var[d] = β / (ν (α - 1))`.
    pub epistemic: T,
    /// `σ²_t`, the sum of the two variances.
    pub total_variance: T,
}

impl<T: Real> NigParams<T> {
    pub fn new(mu: T, nu: T, alpha: T, beta: T) -> Self {
        Self { mu, nu, alpha, beta }
    }

    /// Builds parameters from raw network-head outputs: `ν = softplus(a)`,
    /// `α = softplus(b) + 1`, `β = softplus(c)`.
    pub fn from_head(mu: T, raw_nu: T, raw_alpha: T, raw_beta: T) -> Self {
        Self {
            mu,
            nu: softplus(raw_nu),
            alpha: softplus(raw_alpha) + T::ONE,
            beta: softplus(raw_beta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.finite() {
            return Err(Error::NonFinite("NIG mean"));
        }
        if !(self.nu > T::ZERO) || !self.nu.finite() {
            return Err(Error::invalid("nu", self.nu.as_f64(), "must be > 0"));
        }
        if !(self.alpha > T::ONE) || !self.alpha.finite() {
            return Err(Error::invalid("alpha", self.alpha.as_f64(), "must be > 1"));
        }
        if !(self.beta > T::ZERO) || !self.beta.finite() {
            return Err(Error::invalid("beta", self.beta.as_f64(), "must be > 0"));
        }
        Ok(())
    }

    pub fn moments(&self) -> Result<NigMoments<T>> {
        nig_moments(self)
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.mu, self.nu, self.alpha, self.beta]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Expected depth, aleatoric, epistemic and total variance.
pub fn nig_moments<T: Real>(p: &NigParams<T>) -> Result<NigMoments<T>> {
    p.validate()?;
    let aleatoric = p.beta / (p.alpha - T::ONE);
    let epistemic = aleatoric / p.nu;
    Ok(NigMoments {
        expected_depth: p.mu,
        aleatoric,
        epistemic,
        total_variance: aleatoric + epistemic,
    })
}

/// Dirichlet concentration vector `c` with every `c_i >= 1`.
///
/// The same type carries pixel evidence (length `K`) and voxel state
/// evidence (length `L = K + 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletEvidence<T> {
    c: Vec<T>,
}

/// Derived quantities of a [`DirichletEvidence`].
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSummary<T> {
    pub p: Vec<T>,
    /// Vacuity `len(c) / S`.
    pub u_ep: T,
    /// Total strength `S = Σ c_i`.
    pub strength: T,
}

impl<T: Real> DirichletEvidence<T> {
    pub fn new(c: Vec<T>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::invalid("c", 0.0, "concentration vector is empty"));
        }
        for &ci in &c {
            if !ci.finite() {
                return Err(Error::NonFinite("Dirichlet concentration"));
            }
            if ci < T::ONE {
                return Err(Error::invalid("c_i", ci.as_f64(), "concentration must be >= 1"));
            }
        }
        Ok(Self { c })
    }

    /// The no-evidence Dirichlet, all concentrations 1.
    pub fn uniform(len: usize) -> Self {
        Self { c: vec![T::ONE; len] }
    }

    /// `c = 1 + e` for a non-negative evidence vector.
    pub fn from_evidence(e: &[T]) -> Result<Self> {
        Self::new(e.iter().map(|&x| x + T::ONE).collect())
    }

    pub fn from_logits(z: &[T]) -> Result<Self> {
        evidence_from_logits(z)
    }

    pub fn concentrations(&self) -> &[T] {
        &self.c
    }

    pub(crate) fn concentrations_mut(&mut self) -> &mut [T] {
        &mut self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn strength(&self) -> T {
        self.c.iter().fold(T::ZERO, |s, &x| s + x)
    }

    /// Vacuity `len / S`; equals 1 exactly when no evidence has been seen.
    pub fn u_ep(&self) -> T {
        T::of_usize(self.c.len()) / self.strength()
    }

    pub fn evidence(&self) -> Vec<T> {
        self.c.iter().map(|&x| x - T::ONE).collect()
    }

    /// Index of the largest concentration; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.c.iter().enumerate().skip(1) {
            if x > self.c[best] {
                best = i;
            }
        }
        best
    }

    pub fn summary(&self) -> DirichletSummary<T> {
        dirichlet_summary(self)
    }
}

/// `c_i = softplus(z_i) + 1`.
pub fn evidence_from_logits<T: Real>(z: &[T]) -> Result<DirichletEvidence<T>> {
    if z.iter().any(|x| !x.finite()) {
        return Err(Error::NonFinite("logit"));
    }
    DirichletEvidence::new(z.iter().map(|&x| softplus(x) + T::ONE).collect())
}

pub fn dirichlet_summary<T: Real>(d: &DirichletEvidence<T>) -> DirichletSummary<T> {
    let strength = d.strength();
    DirichletSummary {
        p: d.c.iter().map(|&x| x / strength).collect(),
        u_ep: T::of_usize(d.c.len()) / strength,
        strength,
    }
}

/// Index of a voxel-level state in the `L = K + 2` state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VoxelState {
    Class(usize),
    Free,
    Unknown,
}

/// Semantic classes `0..K` plus the voxel-only free (`K`) and unknown
/// (`K + 1`) states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSpace {
    classes: usize,
}

impl LabelSpace {
    pub fn new(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::invalid("classes", 0.0, "need at least one class"));
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn states(&self) -> usize {
        self.classes + 2
    }

    pub fn free(&self) -> usize {
        self.classes
    }

    pub fn unknown(&self) -> usize {
        self.classes + 1
    }

    pub fn index(&self, state: VoxelState) -> usize {
        match state {
            VoxelState::Class(k) => k,
            VoxelState::Free => self.free(),
            VoxelState::Unknown => self.unknown(),
        }
    }

    pub fn state(&self, index: usize) -> VoxelState {
        if index < self.classes {
            VoxelState::Class(index)
        } else if index == self.free() {
            VoxelState::Free
        } else {
            VoxelState::Unknown
        }
    }
}
