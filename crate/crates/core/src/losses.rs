//! Evidential depth and segmentation losses.
//!
//! Everything here is plain numerics over flat pixel arrays with a validity
//! mask; no autodiff. Analytic gradients are provided for the verification
//! harness in [`gradcheck`].

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::evidmodel::{DirichletEvidence, NigParams};
use crate::rng::stream_rng;
use crate::scalar::{digamma, ln_gamma, pairwise_mean, trigamma, Real};

/// Squared-difference floor for the uncertainty loss (m²).
pub const UNC_RESIDUAL_FLOOR: f64 = 1e-6;

/// Evidence regulariser applied to the depth head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PriorKind {
    /// `|d_gt - μ| (2ν + α)`.
    Reg,
    /// KL to a prior anchored on the prediction itself, weak hyper-parameters.
    Kl,
    /// KL to a prior anchored on the ground truth, strong hyper-parameters.
    KlMu,
    /// KL to a prior anchored on noisy ground truth, weak hyper-parameters.
    KlMuNoisy,
}

impl PriorKind {
    pub fn name(self) -> &'static str {
        match self {
            PriorKind::Reg => "reg",
            PriorKind::Kl => "kl",
            PriorKind::KlMu => "kl_mu",
            PriorKind::KlMuNoisy => "kl_mun",
        }
    }
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "reg" => Ok(PriorKind::Reg),
            "kl" => Ok(PriorKind::Kl),
            "kl_mu" | "klmu" => Ok(PriorKind::KlMu),
            "kl_mun" | "klmun" | "kl_mu_n" => Ok(PriorKind::KlMuNoisy),
            _ => Err(Error::UnknownPriorKind(s.to_string())),
        }
    }
}

/// NIG prior hyper-parameters for the KL regularisers.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct PriorParams<T> {
    pub weak_nu: T,
    pub weak_alpha: T,
    pub strong_nu: T,
    pub strong_alpha: T,
    pub strong_beta: T,
}

impl<T: Real> Default for PriorParams<T> {
    fn default() -> Self {
        Self {
            weak_nu: T::lit(0.001),
            weak_alpha: T::lit(1.01),
            strong_nu: T::ONE,
            strong_alpha: T::TWO,
            strong_beta: T::lit(0.1),
        }
    }
}

/// Depth loss configuration. The coefficient defaults are engineering
/// choices, not published values.
#[derive(Debug, Clone, PartialEq)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct DepthLossConfig<T> {
    pub lambda_silog: T,
    pub lambda1: T,
    pub lambda2: T,
    pub k_anneal: T,
    pub epoch_current: usize,
    pub epoch_total: usize,
    pub prior_kind: PriorKind,
    pub prior_params: PriorParams<T>,
    /// Ground-truth perturbation scale for [`PriorKind::KlMuNoisy`] (m).
    pub noise_sigma: T,
    pub seed: u64,
}

impl<T: Real> Default for DepthLossConfig<T> {
    fn default() -> Self {
        Self {
            lambda_silog: T::lit(0.85),
            lambda1: T::ONE,
            lambda2: T::lit(0.1),
            k_anneal: T::HALF,
            epoch_current: 0,
            epoch_total: 1,
            prior_kind: PriorKind::KlMuNoisy,
            prior_params: PriorParams::default(),
            noise_sigma: T::lit(0.1),
            seed: 0,
        }
    }
}

impl<T: Real> DepthLossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_silog", self.lambda_silog),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v >= T::ZERO) {
                return Err(Error::invalid(name, v.as_f64(), "must be >= 0"));
            }
        }
        validate_schedule(self.k_anneal, self.epoch_current, self.epoch_total)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct SegLossConfig<T> {
    pub lambda3: T,
    pub k_anneal: T,
    pub epoch_current: usize,
    pub epoch_total: usize,
    /// Drop the true-class evidence before the KL term. Off by default.
    pub remove_true_class: bool,
}

impl<T: Real> Default for SegLossConfig<T> {
    fn default() -> Self {
        Self {
            lambda3: T::lit(0.1),
            k_anneal: T::HALF,
            epoch_current: 0,
            epoch_total: 1,
            remove_true_class: false,
        }
    }
}

impl<T: Real> SegLossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda3 >= T::ZERO) {
            return Err(Error::invalid("lambda3", self.lambda3.as_f64(), "must be >= 0"));
        }
        validate_schedule(self.k_anneal, self.epoch_current, self.epoch_total)
    }
}

fn validate_schedule<T: Real>(k: T, current: usize, total: usize) -> Result<()> {
    if !(k > T::ZERO && k <= T::ONE) {
        return Err(Error::invalid("k_anneal", k.as_f64(), "must lie in (0, 1]"));
    }
    if total == 0 {
        return Err(Error::invalid("epoch_total", 0.0, "must be >= 1"));
    }
    if current > total {
        return Err(Error::invalid("epoch_current", current as f64, "exceeds epoch_total"));
    }
    Ok(())
}

/// Linear schedule `min(1, n_cur / (k n_tot))`.
pub fn anneal_linear<T: Real>(current: usize, total: usize, k: T) -> T {
    let r = T::of_usize(current) / (k * T::of_usize(total));
    if r < T::ONE {
        r
    } else {
        T::ONE
    }
}

/// Square-law schedule `min(1, (n_cur / (k n_tot))²)`.
pub fn anneal_square<T: Real>(current: usize, total: usize, k: T) -> T {
    let r = anneal_linear(current, total, k);
    r * r
}

fn check_lengths(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

fn masked_indices(mask: &[bool]) -> Result<Vec<usize>> {
    let idx: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(idx)
}

fn log_ratios<T: Real>(pred_mu: &[T], gt: &[T], idx: &[usize]) -> Result<Vec<T>> {
    idx.iter()
        .map(|&i| {
            if !(gt[i] > T::ZERO) {
                return Err(Error::NonPositiveDepth { index: i, value: gt[i].as_f64() });
            }
            if !(pred_mu[i] > T::ZERO) {
                return Err(Error::NonPositiveDepth { index: i, value: pred_mu[i].as_f64() });
            }
            Ok(gt[i].ln() - pred_mu[i].ln())
        })
        .collect()
}

/// Scale-invariant log loss `sqrt(E[g²] - λ E[g]²)`, `g = ln d_gt - ln μ`.
pub fn silog_loss<T: Real>(pred_mu: &[T], gt: &[T], mask: &[bool], lambda: T) -> Result<T> {
    check_lengths(pred_mu.len(), gt.len())?;
    check_lengths(pred_mu.len(), mask.len())?;
    let idx = masked_indices(mask)?;
    let g = log_ratios(pred_mu, gt, &idx)?;
    Ok(silog_from_log_ratios(&g, lambda))
}

fn silog_from_log_ratios<T: Real>(g: &[T], lambda: T) -> T {
    let sq: Vec<T> = g.iter().map(|&x| x * x).collect();
    let m2 = pairwise_mean(&sq).unwrap_or(T::ZERO);
    let m1 = pairwise_mean(g).unwrap_or(T::ZERO);
    let v = m2 - lambda * m1 * m1;
    if v > T::ZERO {
        v.sqrt()
    } else {
        T::ZERO
    }
}

/// `∂L_silog / ∂μ_i`; zero outside the mask and at the `L = 0` cusp.
pub fn silog_grad<T: Real>(pred_mu: &[T], gt: &[T], mask: &[bool], lambda: T) -> Result<Vec<T>> {
    check_lengths(pred_mu.len(), gt.len())?;
    check_lengths(pred_mu.len(), mask.len())?;
    let idx = masked_indices(mask)?;
    let g = log_ratios(pred_mu, gt, &idx)?;
    let loss = silog_from_log_ratios(&g, lambda);
    let mut grad = vec![T::ZERO; pred_mu.len()];
    if loss <= T::ZERO {
        return Ok(grad);
    }
    let n = T::of_usize(idx.len());
    let m1 = pairwise_mean(&g).unwrap_or(T::ZERO);
    for (&i, &gi) in idx.iter().zip(&g) {
        grad[i] = -(gi - lambda * m1) / (n * loss * pred_mu[i]);
    }
    Ok(grad)
}

fn unc_term<T: Real>(p: &NigParams<T>, gt: T) -> Result<T> {
    let m = p.moments()?;
    let r = gt - p.mu;
    let r2 = (r * r).max(T::lit(UNC_RESIDUAL_FLOOR));
    Ok(m.total_variance.ln() - r2.ln())
}

/// `E[ln σ²_t - ln (d_gt - μ)²]` over the mask.
pub fn unc_loss<T: Real>(pred: &[NigParams<T>], gt: &[T], mask: &[bool]) -> Result<T> {
    check_lengths(pred.len(), gt.len())?;
    check_lengths(pred.len(), mask.len())?;
    let idx = masked_indices(mask)?;
    let terms = idx.iter().map(|&i| unc_term(&pred[i], gt[i])).collect::<Result<Vec<T>>>()?;
    Ok(pairwise_mean(&terms).unwrap_or(T::ZERO))
}

/// Per-pixel gradient of [`unc_loss`] with respect to `(μ, ν, α, β)`.
pub fn unc_grad<T: Real>(pred: &[NigParams<T>], gt: &[T], mask: &[bool]) -> Result<Vec<[T; 4]>> {
    check_lengths(pred.len(), gt.len())?;
    check_lengths(pred.len(), mask.len())?;
    let idx = masked_indices(mask)?;
    let n = T::of_usize(idx.len());
    let mut out = vec![[T::ZERO; 4]; pred.len()];
    for &i in &idx {
        let p = &pred[i];
        p.validate()?;
        let r = gt[i] - p.mu;
        let d_mu = if r * r > T::lit(UNC_RESIDUAL_FLOOR) { T::TWO / r } else { T::ZERO };
        let d_nu = T::ONE / (p.nu + T::ONE) - T::ONE / p.nu;
        let d_alpha = -T::ONE / (p.alpha - T::ONE);
        let d_beta = T::ONE / p.beta;
        out[i] = [d_mu / n, d_nu / n, d_alpha / n, d_beta / n];
    }
    Ok(out)
}

/// `KL(NIG_pred ‖ NIG_prior)`.
///
/// Split as the KL between the inverse-gamma variance components plus the
/// expected KL between the conditional normals, where `E[1/σ²] = α/β` under
/// the predicted distribution.
pub fn kl_nig<T: Real>(pred: &NigParams<T>, prior: &NigParams<T>) -> Result<T> {
    pred.validate()?;
    prior.validate()?;
    let (m1, n1, a1, b1) = (pred.mu, pred.nu, pred.alpha, pred.beta);
    let (m2, n2, a2, b2) = (prior.mu, prior.nu, prior.alpha, prior.beta);
    let kl_ig = (a1 - a2) * digamma(a1) - ln_gamma(a1) + ln_gamma(a2) + a2 * (b1.ln() - b2.ln()) + a1 * (b2 - b1) / b1;
    let d = m1 - m2;
    let kl_normal = T::HALF * ((n1 / n2).ln() + n2 / n1 - T::ONE) + T::HALF * n2 * d * d * a1 / b1;
    Ok(kl_ig + kl_normal)
}

/// Gradient of [`kl_nig`] with respect to the predicted `(μ, ν, α, β)`.
pub fn kl_nig_grad<T: Real>(pred: &NigParams<T>, prior: &NigParams<T>) -> Result<[T; 4]> {
    pred.validate()?;
    prior.validate()?;
    let (m1, n1, a1, b1) = (pred.mu, pred.nu, pred.alpha, pred.beta);
    let (m2, n2, a2, b2) = (prior.mu, prior.nu, prior.alpha, prior.beta);
    let d = m1 - m2;
    let d_mu = n2 * d * a1 / b1;
    let d_nu = T::HALF / n1 - T::HALF * n2 / (n1 * n1);
    let d_alpha = (a1 - a2) * trigamma(a1) + (b2 - b1) / b1 + T::HALF * n2 * d * d / b1;
    let d_beta = a2 / b1 - a1 * b2 / (b1 * b1) - T::HALF * n2 * d * d * a1 / (b1 * b1);
    Ok([d_mu, d_nu, d_alpha, d_beta])
}

/// The unconstrained evidence regulariser `|d_gt - μ| (2ν + α)`.
pub fn evidence_reg<T: Real>(pred: &NigParams<T>, gt: T) -> T {
    (gt - pred.mu).abs() * (T::TWO * pred.nu + pred.alpha)
}

/// NIG prior for the KL-type regularisers.
///
/// * `Kl`: predicted mean and β, weak `(α, ν)`.
/// * `KlMu`: mean `gt`, strong `(α, ν)`, fixed β.
/// * `KlMuNoisy`: mean `gt + N(0, σ_n²)`, weak `(α, ν)`, β chosen so that
///   `E[σ²] = σ_n²`. With `σ_n = 0` this yields β = 0, which is rejected
///   wherever the prior is consumed.
pub fn build_nig_prior<T: Real, R: Rng + ?Sized>(
    kind: PriorKind,
    pred: &NigParams<T>,
    gt_depth: T,
    noise_sigma: T,
    params: &PriorParams<T>,
    rng: &mut R,
) -> Result<NigParams<T>> {
    if !(gt_depth > T::ZERO) {
        return Err(Error::NonPositiveDepth { index: 0, value: gt_depth.as_f64() });
    }
    match kind {
        PriorKind::Reg => Err(Error::PriorUnavailable("reg")),
        PriorKind::Kl => Ok(NigParams::new(pred.mu, params.weak_nu, params.weak_alpha, pred.beta)),
        PriorKind::KlMu => Ok(NigParams::new(gt_depth, params.strong_nu, params.strong_alpha, params.strong_beta)),
        PriorKind::KlMuNoisy => {
            let mu = if noise_sigma > T::ZERO {
                let z: f64 = StandardNormal.sample(rng);
                gt_depth + noise_sigma * T::lit(z)
            } else {
                gt_depth
            };
            let beta = noise_sigma * noise_sigma * (params.weak_alpha - T::ONE);
            Ok(NigParams::new(mu, params.weak_nu, params.weak_alpha, beta))
        }
    }
}

/// Breakdown of [`evid_depth_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthLoss<T> {
    pub total: T,
    pub silog: T,
    pub unc: T,
    pub reg: T,
    /// Square-law annealing factor applied to `λ1·unc + λ2·reg`.
    pub anneal: T,
}

/// `L_silog + min(1, (n_cur / (k n_tot))²) (λ1 L_unc + λ2 L_reg)`.
///
/// `L_reg` is the per-pixel mean of the configured regulariser. Noisy priors
/// draw from stream `i` of `cfg.seed` for pixel `i`.
pub fn evid_depth_loss<T: Real>(
    pred: &[NigParams<T>],
    gt: &[T],
    mask: &[bool],
    cfg: &DepthLossConfig<T>,
) -> Result<DepthLoss<T>> {
    cfg.validate()?;
    let mu: Vec<T> = pred.iter().map(|p| p.mu).collect();
    let silog = silog_loss(&mu, gt, mask, cfg.lambda_silog)?;
    let unc = unc_loss(pred, gt, mask)?;
    let idx = masked_indices(mask)?;
    let reg_terms = idx
        .iter()
        .map(|&i| match cfg.prior_kind {
            PriorKind::Reg => Ok(evidence_reg(&pred[i], gt[i])),
            kind => {
                let mut rng = stream_rng(cfg.seed, i as u64);
                let prior = build_nig_prior(kind, &pred[i], gt[i], cfg.noise_sigma, &cfg.prior_params, &mut rng)?;
                kl_nig(&pred[i], &prior)
            }
        })
        .collect::<Result<Vec<T>>>()?;
    let reg = pairwise_mean(&reg_terms).unwrap_or(T::ZERO);
    let anneal = anneal_square(cfg.epoch_current, cfg.epoch_total, cfg.k_anneal);
    Ok(DepthLoss {
        total: silog + anneal * (cfg.lambda1 * unc + cfg.lambda2 * reg),
        silog,
        unc,
        reg,
        anneal,
    })
}

/// Evidential cross-entropy for one pixel: `ln S - ln c_label`.
pub fn ece_term<T: Real>(c: &[T], label: usize) -> Result<T> {
    if label >= c.len() {
        return Err(Error::LabelOutOfRange { label, classes: c.len() });
    }
    let s = c.iter().fold(T::ZERO, |a, &x| a + x);
    Ok(s.ln() - c[label].ln())
}

pub fn ece_grad<T: Real>(c: &[T], label: usize) -> Result<Vec<T>> {
    if label >= c.len() {
        return Err(Error::LabelOutOfRange { label, classes: c.len() });
    }
    let s = c.iter().fold(T::ZERO, |a, &x| a + x);
    Ok(c.iter()
        .enumerate()
        .map(|(i, &ci)| if i == label { T::ONE / s - T::ONE / ci } else { T::ONE / s })
        .collect())
}

/// `KL(Dir(c) ‖ Dir(1))` in closed form.
pub fn dirichlet_kl_uniform<T: Real>(c: &[T]) -> T {
    let k = T::of_usize(c.len());
    let s = c.iter().fold(T::ZERO, |a, &x| a + x);
    let psi_s = digamma(s);
    let mut acc = ln_gamma(s) - ln_gamma(k);
    for &ci in c {
        acc -= ln_gamma(ci);
        acc += (ci - T::ONE) * (digamma(ci) - psi_s);
    }
    acc
}

/// `∂ KL(Dir(c) ‖ Dir(1)) / ∂c_i = (c_i - 1) ψ'(c_i) - (S - K) ψ'(S)`.
pub fn dirichlet_kl_uniform_grad<T: Real>(c: &[T]) -> Vec<T> {
    let k = T::of_usize(c.len());
    let s = c.iter().fold(T::ZERO, |a, &x| a + x);
    let tail = (s - k) * trigamma(s);
    c.iter().map(|&ci| (ci - T::ONE) * trigamma(ci) - tail).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegLoss<T> {
    pub total: T,
    pub ece_term: T,
    pub kl_term: T,
    /// Linear annealing factor applied to `λ3·kl_term`.
    pub anneal: T,
}

/// `L_ece + λ3 min(1, n_cur / (k n_tot)) KL(Dir(c) ‖ Dir(1))`, averaged over the mask.
pub fn evid_seg_loss<T: Real>(
    pred: &[DirichletEvidence<T>],
    labels: &[usize],
    mask: &[bool],
    cfg: &SegLossConfig<T>,
) -> Result<SegLoss<T>> {
    cfg.validate()?;
    check_lengths(pred.len(), labels.len())?;
    check_lengths(pred.len(), mask.len())?;
    let idx = masked_indices(mask)?;
    let mut ece = Vec::with_capacity(idx.len());
    let mut kl = Vec::with_capacity(idx.len());
    for &i in &idx {
        let c = pred[i].concentrations();
        ece.push(ece_term(c, labels[i])?);
        if cfg.remove_true_class {
            let mut tilde = c.to_vec();
            tilde[labels[i]] = T::ONE;
            kl.push(dirichlet_kl_uniform(&tilde));
        } else {
            kl.push(dirichlet_kl_uniform(c));
        }
    }
    let ece_term = pairwise_mean(&ece).unwrap_or(T::ZERO);
    let kl_term = pairwise_mean(&kl).unwrap_or(T::ZERO);
    let anneal = anneal_linear(cfg.epoch_current, cfg.epoch_total, cfg.k_anneal);
    Ok(SegLoss {
        total: ece_term + cfg.lambda3 * anneal * kl_term,
        ece_term,
        kl_term,
        anneal,
    })
}

/// Finite-difference verification of the analytic loss gradients.
pub mod gradcheck {
    use super::*;

    /// Default relative step for central differences.
    pub const REL_STEP: f64 = 1e-4;
    /// Pass threshold on [`GradCheck::max_rel_error`].
    pub const REL_TOL: f64 = 1e-4;
    /// Denominator floor in the relative error, so that components that are
    /// zero to rounding are compared absolutely.
    pub const REL_FLOOR: f64 = 1e-6;

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub enum LossOp {
        Silog,
        Unc,
        KlNig,
        Ece,
        DirichletKl,
    }

    impl LossOp {
        pub const ALL: [LossOp; 5] = [LossOp::Silog, LossOp::Unc, LossOp::KlNig, LossOp::Ece, LossOp::DirichletKl];

        pub fn name(self) -> &'static str {
            match self {
                LossOp::Silog => "silog",
                LossOp::Unc => "unc",
                LossOp::KlNig => "kl_nig",
                LossOp::Ece => "ece",
                LossOp::DirichletKl => "dirichlet_kl",
            }
        }
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct GradCheck<T> {
        pub analytic: Vec<T>,
        pub numeric: Vec<T>,
        pub max_rel_error: T,
    }

    impl<T: Real> GradCheck<T> {
        pub fn passes(&self, tol: T) -> bool {
            self.max_rel_error <= tol
        }

        fn new(analytic: Vec<T>, numeric: Vec<T>) -> Self {
            let floor = T::lit(REL_FLOOR);
            let max_rel_error = analytic
                .iter()
                .zip(&numeric)
                .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
                .fold(T::ZERO, |m, e| if e > m { e } else { m });
            Self { analytic, numeric, max_rel_error }
        }
    }

    /// `rel · |x|`, or `rel` itself at zero.
    fn step<T: Real>(x: T, rel: T) -> T {
        if x == T::ZERO {
            rel
        } else {
            rel * x.abs()
        }
    }

    /// Central differences of `f` at `x`, one coordinate at a time.
    pub fn central_difference<T: Real, F>(x: &[T], rel: T, mut f: F) -> Result<Vec<T>>
    where
        F: FnMut(&[T]) -> Result<T>,
    {
        let mut probe = x.to_vec();
        let mut out = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let h = step(x[i], rel);
            probe[i] = x[i] + h;
            let up = f(&probe)?;
            probe[i] = x[i] - h;
            let down = f(&probe)?;
            probe[i] = x[i];
            out.push((up - down) / (T::TWO * h));
        }
        Ok(out)
    }

    fn nig_domain<T: Real>(p: &NigParams<T>, rel: T) -> Result<()> {
        if p.nu - step(p.nu, rel) <= T::ZERO {
            return Err(Error::DomainBoundary { param: "nu", step: step(p.nu, rel).as_f64() });
        }
        if p.alpha - step(p.alpha, rel) <= T::ONE {
            return Err(Error::DomainBoundary { param: "alpha", step: step(p.alpha, rel).as_f64() });
        }
        if p.beta - step(p.beta, rel) <= T::ZERO {
            return Err(Error::DomainBoundary { param: "beta", step: step(p.beta, rel).as_f64() });
        }
        Ok(())
    }

    fn dirichlet_domain<T: Real>(c: &[T], rel: T) -> Result<()> {
        for &ci in c {
            if ci - step(ci, rel) <= T::ZERO {
                return Err(Error::DomainBoundary { param: "c", step: step(ci, rel).as_f64() });
            }
        }
        Ok(())
    }

    pub fn check_silog<T: Real>(pred_mu: &[T], gt: &[T], mask: &[bool], lambda: T, rel: T) -> Result<GradCheck<T>> {
        let analytic = silog_grad(pred_mu, gt, mask, lambda)?;
        let numeric = central_difference(pred_mu, rel, |mu| silog_loss(mu, gt, mask, lambda))?;
        Ok(GradCheck::new(analytic, numeric))
    }

    /// Gradient of the single-pixel uncertainty loss.
    pub fn check_unc<T: Real>(pred: &NigParams<T>, gt: T, rel: T) -> Result<GradCheck<T>> {
        nig_domain(pred, rel)?;
        let analytic = unc_grad(std::slice::from_ref(pred), &[gt], &[true])?[0].to_vec();
        let numeric = central_difference(&pred.as_array(), rel, |x| {
            unc_loss(&[NigParams::new(x[0], x[1], x[2], x[3])], &[gt], &[true])
        })?;
        Ok(GradCheck::new(analytic, numeric))
    }

    pub fn check_kl_nig<T: Real>(pred: &NigParams<T>, prior: &NigParams<T>, rel: T) -> Result<GradCheck<T>> {
        nig_domain(pred, rel)?;
        let analytic = kl_nig_grad(pred, prior)?.to_vec();
        let numeric = central_difference(&pred.as_array(), rel, |x| {
            kl_nig(&NigParams::new(x[0], x[1], x[2], x[3]), prior)
        })?;
        Ok(GradCheck::new(analytic, numeric))
    }

    pub fn check_ece<T: Real>(c: &[T], label: usize, rel: T) -> Result<GradCheck<T>> {
        dirichlet_domain(c, rel)?;
        let analytic = ece_grad(c, label)?;
        let numeric = central_difference(c, rel, |x| ece_term(x, label))?;
        Ok(GradCheck::new(analytic, numeric))
    }

    pub fn check_dirichlet_kl<T: Real>(c: &[T], rel: T) -> Result<GradCheck<T>> {
        dirichlet_domain(c, rel)?;
        let analytic = dirichlet_kl_uniform_grad(c);
        let numeric = central_difference(c, rel, |x| Ok(dirichlet_kl_uniform(x)))?;
        Ok(GradCheck::new(analytic, numeric))
    }
}

impl TryFrom<String> for PriorKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PriorKind> for String {
    fn from(v: PriorKind) -> String {
        v.name().to_string()
    }
}
