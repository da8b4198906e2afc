use std::fmt;

use crate::error::{Error, Result};
use crate::losses::gradcheck::{
    check_dirichlet_kl, check_ece, check_kl_nig, check_silog, check_unc, GradCheck, LossOp, REL_FLOOR,
};
use crate::losses::{build_nig_prior, evid_depth_loss, evid_seg_loss, DepthLoss, PriorKind, SegLoss};
use crate::rng::stream_rng;
use crate::scalar::Real;
use crate::simrun::dump::{GroundTruthDump, PredictionDump};
use crate::simrun::spec::LossEvalConfig;

/// Gradient-check outcome for one loss operation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow<T> {
    pub op: LossOp,
    pub checked: usize,
    pub passed: usize,
    /// Points skipped because a finite-difference step would leave the
    /// parameter domain, or because the differences at `h` and `h/2`
    /// disagree by more than a quarter of the tolerance, so the numeric
    /// reference itself is not accurate enough to judge.
    pub skipped: usize,
    pub max_rel_error: T,
}

impl<T> GradCheckRow<T> {
    pub fn ok(&self) -> bool {
        self.checked > 0 && self.passed == self.checked
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<T> {
    pub pixels: usize,
    pub depth: DepthLoss<T>,
    pub seg: SegLoss<T>,
    pub gradchecks: Vec<GradCheckRow<T>>,
}

impl<T: Real> LossReport<T> {
    pub fn all_passed(&self) -> bool {
        self.gradchecks.iter().all(GradCheckRow::ok)
    }
}

impl<T: Real> fmt::Display for LossReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pixels {}", self.pixels)?;
        writeln!(f, "depth_total {}", self.depth.total)?;
        writeln!(f, "depth_silog {}", self.depth.silog)?;
        writeln!(f, "depth_unc {}", self.depth.unc)?;
        writeln!(f, "depth_reg {}", self.depth.reg)?;
        writeln!(f, "depth_anneal {}", self.depth.anneal)?;
        writeln!(f, "seg_total {}", self.seg.total)?;
        writeln!(f, "seg_ece {}", self.seg.ece_term)?;
        writeln!(f, "seg_kl {}", self.seg.kl_term)?;
        writeln!(f, "seg_anneal {}", self.seg.anneal)?;
        writeln!(f, "{:<14} {:>7} {:>7} {:>7} {:>12}  result", "gradcheck", "checked", "passed", "skipped", "max_rel_err")?;
        for r in &self.gradchecks {
            writeln!(
                f,
                "{:<14} {:>7} {:>7} {:>7} {:>12.3e}  {}",
                r.op.name(),
                r.checked,
                r.passed,
                r.skipped,
                r.max_rel_error.as_f64(),
                if r.ok() { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

const SILOG_GROUP: usize = 8;

/// Evenly spaced subset of at most `n` entries.
fn sample(idx: &[usize], n: usize) -> Vec<usize> {
    if idx.len() <= n {
        return idx.to_vec();
    }
    (0..n).map(|k| idx[k * idx.len() / n]).collect()
}

struct Tally<T> {
    row: GradCheckRow<T>,
    tol: T,
    rel: T,
}

fn resolved<T: Real>(a: &[T], b: &[T], tol: T) -> bool {
    let floor = T::lit(REL_FLOOR);
    a.iter().zip(b).all(|(&x, &y)| (x - y).abs() <= tol * T::lit(0.25) * x.abs().max(y.abs()).max(floor))
}

impl<T: Real> Tally<T> {
    fn new(op: LossOp, tol: T, rel: T) -> Self {
        Self { row: GradCheckRow { op, checked: 0, passed: 0, skipped: 0, max_rel_error: T::ZERO }, tol, rel }
    }

    /// Runs `check` at the configured step and at half of it.
    fn add(&mut self, check: impl Fn(T) -> Result<GradCheck<T>>) -> Result<()> {
        let both = check(self.rel).and_then(|c| Ok((check(self.rel * T::HALF)?, c)));
        match both {
            Ok((half, c)) if !resolved(&half.numeric, &c.numeric, self.tol) => {
                self.row.skipped += 1;
                Ok(())
            }
            Ok((_, c)) => {
                self.row.checked += 1;
                if c.passes(self.tol) {
                    self.row.passed += 1;
                }
                if c.max_rel_error > self.row.max_rel_error || !c.max_rel_error.finite() {
                    self.row.max_rel_error = c.max_rel_error;
                }
                Ok(())
            }
            Err(Error::DomainBoundary { .. }) => {
                self.row.skipped += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }
}

/// Loss terms of `pred` against `gt` over pixels with a depth return and a
/// label, plus finite-difference checks of every analytic gradient.
pub fn evaluate_losses<T: Real>(
    pred: &PredictionDump<T>,
    gt: &GroundTruthDump<T>,
    cfg: &LossEvalConfig<T>,
) -> Result<LossReport<T>> {
    cfg.validate()?;
    for (w, h) in [
        (pred.depth.width(), pred.depth.height()),
        (pred.sem.width(), pred.sem.height()),
        (gt.label.width(), gt.label.height()),
    ] {
        if (w, h) != (gt.depth.width(), gt.depth.height()) {
            return Err(Error::DimensionMismatch { expected: gt.depth.len(), actual: w * h });
        }
    }
    let mask = gt.mask().into_pixels();
    let gt_depth = gt.depth.pixels();
    let labels: Vec<usize> = gt.label.pixels().iter().map(|l| l.unwrap_or(0)).collect();
    let nig = pred.depth.pixels();
    let sem = pred.sem.pixels();

    let depth = evid_depth_loss(nig, gt_depth, &mask, &cfg.depth)?;
    let seg = evid_seg_loss(sem, &labels, &mask, &cfg.seg)?;

    let g = &cfg.gradcheck;
    let masked: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let picked = sample(&masked, g.max_pixels);
    let mut rows = Vec::with_capacity(LossOp::ALL.len());
    for op in LossOp::ALL {
        let mut tally = Tally::new(op, g.tol, g.rel_step);
        match op {
            LossOp::Silog => {
                // The loss couples pixels, so each point is a small group.
                for group in picked.chunks(SILOG_GROUP) {
                    let mu: Vec<T> = group.iter().map(|&i| nig[i].mu).collect();
                    let d: Vec<T> = group.iter().map(|&i| gt_depth[i]).collect();
                    let all = vec![true; group.len()];
                    tally.add(|h| check_silog(&mu, &d, &all, cfg.depth.lambda_silog, h))?;
                }
            }
            LossOp::Unc => {
                for &i in &picked {
                    tally.add(|h| check_unc(&nig[i], gt_depth[i], h))?;
                }
            }
            LossOp::KlNig => {
                // The plain regulariser has no prior; check against the
                // ground-truth anchored one instead.
                let kind = match cfg.depth.prior_kind {
                    PriorKind::Reg => PriorKind::KlMu,
                    k => k,
                };
                for &i in &picked {
                    let mut rng = stream_rng(cfg.depth.seed, i as u64);
                    let prior = build_nig_prior(kind, &nig[i], gt_depth[i], cfg.depth.noise_sigma, &cfg.depth.prior_params, &mut rng)?;
                    tally.add(|h| check_kl_nig(&nig[i], &prior, h))?;
                }
            }
            LossOp::Ece => {
                for &i in &picked {
                    tally.add(|h| check_ece(sem[i].concentrations(), labels[i], h))?;
                }
            }
            LossOp::DirichletKl => {
                for &i in &picked {
                    tally.add(|h| check_dirichlet_kl(sem[i].concentrations(), h))?;
                }
            }
        }
        rows.push(tally.row);
    }
    Ok(LossReport { pixels: masked.len(), depth, seg, gradchecks: rows })
}
