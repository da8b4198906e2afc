use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::evidmodel::{DirichletEvidence, NigParams};
use crate::image::Image;
use crate::rng::stream_rng;
use crate::scalar::Real;

/// Measurement synthesizer settings.
///
/// Depth noise has standard deviation `a + b·d²`. A fraction `outlier_prob`
/// of pixels has that deviation multiplied by `outlier_scale`; the inflated
/// value is also what the pixel reports, so depth error tracks the reported
/// uncertainty rather than depth alone.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct NoiseModel<T> {
    pub a: T,
    pub b: T,
    /// Probability that a pixel's evidence lands on a random wrong class.
    pub q: T,
    /// Evidence magnitude placed on the chosen class.
    pub evidence: T,
    pub nu: T,
    pub alpha: T,
    pub outlier_prob: T,
    pub outlier_scale: T,
    /// Share of the evidence spread evenly over the other classes.
    pub soft_fraction: T,
    /// Floor on the reported variance so a noiseless pixel still has a valid NIG.
    pub min_variance: T,
}

impl<T: Real> Default for NoiseModel<T> {
    fn default() -> Self {
        Self {
            a: T::lit(0.01),
            b: T::lit(0.002),
            q: T::lit(0.1),
            evidence: T::lit(10.0),
            nu: T::ONE,
            alpha: T::TWO,
            outlier_prob: T::lit(0.1),
            outlier_scale: T::lit(4.0),
            soft_fraction: T::ZERO,
            min_variance: T::lit(1e-8),
        }
    }
}

impl<T: Real> NoiseModel<T> {
    /// Noiseless channel: exact depth, exact labels.
    pub fn zero() -> Self {
        Self {
            a: T::ZERO,
            b: T::ZERO,
            q: T::ZERO,
            outlier_prob: T::ZERO,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x >= T::ZERO && x <= T::ONE;
        if !(self.a >= T::ZERO) || !self.a.finite() {
            return Err(Error::InvalidNoise("a must be >= 0"));
        }
        if !(self.b >= T::ZERO) || !self.b.finite() {
            return Err(Error::InvalidNoise("b must be >= 0"));
        }
        if !unit(self.q) {
            return Err(Error::InvalidNoise("q must lie in [0, 1]"));
        }
        if !(self.evidence >= T::ZERO) || !self.evidence.finite() {
            return Err(Error::InvalidNoise("evidence must be >= 0"));
        }
        if !(self.nu > T::ZERO) || !self.nu.finite() {
            return Err(Error::InvalidNoise("nu must be > 0"));
        }
        if !(self.alpha > T::ONE) || !self.alpha.finite() {
            return Err(Error::InvalidNoise("alpha must be > 1"));
        }
        if !unit(self.outlier_prob) {
            return Err(Error::InvalidNoise("outlier_prob must lie in [0, 1]"));
        }
        if !(self.outlier_scale >= T::ONE) || !self.outlier_scale.finite() {
            return Err(Error::InvalidNoise("outlier_scale must be >= 1"));
        }
        if !unit(self.soft_fraction) {
            return Err(Error::InvalidNoise("soft_fraction must lie in [0, 1]"));
        }
        if !(self.min_variance > T::ZERO) || !self.min_variance.finite() {
            return Err(Error::InvalidNoise("min_variance must be > 0"));
        }
        Ok(())
    }

    /// Nominal depth standard deviation at depth `d`.
    pub fn sigma(&self, d: T) -> T {
        self.a + self.b * d * d
    }

    /// NIG whose aleatoric variance equals `variance`.
    pub fn nig(&self, mu: T, variance: T) -> NigParams<T> {
        NigParams::new(mu, self.nu, self.alpha, variance.max(self.min_variance) * (self.alpha - T::ONE))
    }

    fn concentrations(&self, chosen: usize, classes: usize) -> Vec<T> {
        let mut c = vec![T::ONE; classes];
        if classes == 1 {
            c[0] += self.evidence;
            return c;
        }
        let spread = self.evidence * self.soft_fraction / T::of_usize(classes - 1);
        for (k, ck) in c.iter_mut().enumerate() {
            *ck += if k == chosen { self.evidence * (T::ONE - self.soft_fraction) } else { spread };
        }
        c
    }
}

/// Evidential depth and semantic images from ground truth.
///
/// Pixel `i` draws from its own stream `i` of the generator seeded by
/// `seed`, so output does not depend on evaluation order. Invalid pixels
/// (depth 0 or no label) get mean 0 and uniform semantics.
pub fn corrupt_frame<T: Real>(
    gt_depth: &Image<T>,
    gt_label: &Image<Option<usize>>,
    noise: &NoiseModel<T>,
    classes: usize,
    seed: u64,
) -> Result<(Image<NigParams<T>>, Image<DirichletEvidence<T>>)> {
    noise.validate()?;
    if !gt_depth.same_shape(gt_label) {
        return Err(Error::DimensionMismatch {
            expected: gt_depth.len(),
            actual: gt_label.len(),
        });
    }
    if classes == 0 {
        return Err(Error::InvalidScene("scene needs at least one class"));
    }
    let mut depth = Vec::with_capacity(gt_depth.len());
    let mut sem = Vec::with_capacity(gt_depth.len());
    for (i, (&d, &label)) in gt_depth.pixels().iter().zip(gt_label.pixels()).enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        // Fixed draw count per pixel.
        let z: f64 = rng.sample(StandardNormal);
        let outlier_u: f64 = rng.random();
        let flip_u: f64 = rng.random();
        let wrong: usize = rng.random_range(0..classes.max(2) - 1);

        let label = match label {
            Some(l) if d > T::ZERO => l,
            _ => {
                depth.push(noise.nig(T::ZERO, noise.min_variance));
                sem.push(DirichletEvidence::uniform(classes));
                continue;
            }
        };
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let mut sigma = noise.sigma(d);
        if T::lit(outlier_u) < noise.outlier_prob {
            sigma *= noise.outlier_scale;
        }
        depth.push(noise.nig(d + sigma * T::lit(z), sigma * sigma));

        let chosen = if classes > 1 && T::lit(flip_u) < noise.q {
            if wrong >= label { wrong + 1 } else { wrong }
        } else {
            label
        };
        sem.push(DirichletEvidence::new(noise.concentrations(chosen, classes))?);
    }
    let (w, h) = (gt_depth.width(), gt_depth.height());
    Ok((Image::from_vec(w, h, depth)?, Image::from_vec(w, h, sem)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(d: f64, n: usize, label: usize) -> (Image<f64>, Image<Option<usize>>) {
        (Image::filled(n, n, d), Image::filled(n, n, Some(label)))
    }

    #[test]
    fn noiseless_channel_is_exact() {
        let (d, l) = frame(2.5, 8, 1);
        let (depth, sem) = corrupt_frame(&d, &l, &NoiseModel::zero(), 3, 7).unwrap();
        for (p, s) in depth.pixels().iter().zip(sem.pixels()) {
            assert_eq!(p.mu, 2.5);
            assert!(p.validate().is_ok());
            assert_eq!(s.argmax(), 1);
            assert_eq!(s.concentrations(), &[1.0, 11.0, 1.0]);
        }
    }

    #[test]
    fn calibrated_nig_arithmetic() {
        let noise = NoiseModel::<f64> { outlier_prob: 0.0, ..NoiseModel::default() };
        let sigma = noise.sigma(3.0);
        assert!((sigma - 0.028).abs() < 1e-15);
        let nig = noise.nig(3.0, sigma * sigma);
        assert_eq!(nig.alpha, 2.0);
        assert!((nig.beta - 0.028 * 0.028).abs() < 1e-15);
        let m = nig.moments().unwrap();
        assert!((m.aleatoric - sigma * sigma).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_noise() {
        let (d, l) = frame(1.0, 2, 0);
        for bad in [
            NoiseModel { a: -0.1, ..NoiseModel::default() },
            NoiseModel { b: -0.1, ..NoiseModel::default() },
            NoiseModel { q: 1.5, ..NoiseModel::default() },
        ] {
            assert!(matches!(corrupt_frame(&d, &l, &bad, 2, 0), Err(Error::InvalidNoise(_))));
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let (d, l) = frame(2.0, 6, 0);
        let noise = NoiseModel::default();
        let a = corrupt_frame(&d, &l, &noise, 4, 11).unwrap();
        let b = corrupt_frame(&d, &l, &noise, 4, 11).unwrap();
        let c = corrupt_frame(&d, &l, &noise, 4, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn half_flip_two_classes_is_coin_toss() {
        let (d, l) = frame(1.0, 200, 0);
        let noise = NoiseModel { q: 0.5, ..NoiseModel::zero() };
        let (_, sem) = corrupt_frame(&d, &l, &noise, 2, 3).unwrap();
        let correct = sem.pixels().iter().filter(|s| s.argmax() == 0).count() as f64 / sem.len() as f64;
        // 40 000 Bernoulli(0.5) draws: sd 0.0025.
        assert!((correct - 0.5).abs() < 0.0125, "accuracy {correct}");
    }

    #[test]
    fn z_scores_look_normal() {
        let (d, l) = frame(2.0, 200, 0);
        let noise = NoiseModel::<f64>::default();
        let (depth, _) = corrupt_frame(&d, &l, &noise, 2, 5).unwrap();
        let mean_abs_z: f64 = depth
            .pixels()
            .iter()
            .map(|p| (p.mu - 2.0).abs() / p.moments().unwrap().aleatoric.sqrt())
            .sum::<f64>()
            / depth.len() as f64;
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean_abs_z - expected).abs() < 0.1 * expected, "{mean_abs_z}");
    }

    #[test]
    fn invalid_pixels_are_neutral() {
        let d = Image::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let l = Image::from_vec(2, 1, vec![None, Some(0)]).unwrap();
        let (depth, sem) = corrupt_frame(&d, &l, &NoiseModel::zero(), 2, 0).unwrap();
        assert_eq!(depth.pixels()[0].mu, 0.0);
        assert_eq!(sem.pixels()[0], DirichletEvidence::uniform(2));
    }
}
