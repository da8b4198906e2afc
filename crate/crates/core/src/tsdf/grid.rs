use std::collections::HashMap;
use std::str::FromStr;

use nalgebra::{ComplexField, Vector3};

use crate::cloudgen::{EvidCloud, EvidPoint};
use crate::error::{Error, Result};
use crate::evidmodel::{DirichletEvidence, LabelSpace, VoxelState};
use crate::scalar::Real;
use crate::semfuse::{self, FusionConfig};
use crate::tsdf::dda::{traverse, voxel_center, voxel_index};

/// Voxels per block edge.
pub const BLOCK_EDGE: i64 = 8;
pub const BLOCK_VOXELS: usize = (BLOCK_EDGE * BLOCK_EDGE * BLOCK_EDGE) as usize;

/// Variances are floored here before inversion.
pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WeightMode {
    /// `1 / depth²`.
    InverseDepthSquared,
    /// `1 / (u_ep + u_al)`.
    #[default]
    InverseTotalUncertainty,
}

impl WeightMode {
    pub fn name(self) -> &'static str {
        match self {
            WeightMode::InverseDepthSquared => "distance",
            WeightMode::InverseTotalUncertainty => "uncertainty",
        }
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distance" | "inverse_depth_squared" | "1/d2" => Ok(WeightMode::InverseDepthSquared),
            "uncertainty" | "inverse_total_uncertainty" | "1/u_tot" => Ok(WeightMode::InverseTotalUncertainty),
            other => Err(Error::Config(format!("unknown weight mode `{other}` (expected `distance` or `uncertainty`)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct GridConfig<T> {
    pub voxel_size: T,
    pub truncation: T,
    pub weight_mode: WeightMode,
    pub max_weight: T,
    /// Minimum weight for a voxel to count as a mapped surface.
    pub epsilon: T,
}

impl<T: Real> Default for GridConfig<T> {
    fn default() -> Self {
        Self {
            voxel_size: T::lit(0.05),
            truncation: T::lit(0.15),
            weight_mode: WeightMode::default(),
            max_weight: T::lit(1e4),
            epsilon: T::lit(0.01),
        }
    }
}

impl<T: Real> GridConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > T::ZERO) || !self.voxel_size.finite() {
            return Err(Error::invalid("voxel_size", self.voxel_size.as_f64(), "must be > 0"));
        }
        if !(self.truncation >= T::TWO * self.voxel_size) || !self.truncation.finite() {
            return Err(Error::invalid("truncation", self.truncation.as_f64(), "must be >= 2 * voxel_size"));
        }
        if !(self.max_weight > T::ZERO) {
            return Err(Error::invalid("max_weight", self.max_weight.as_f64(), "must be > 0"));
        }
        if !(self.epsilon > T::ZERO) || !self.epsilon.finite() {
            return Err(Error::invalid("epsilon", self.epsilon.as_f64(), "must be > 0"));
        }
        Ok(())
    }
}

/// Per-measurement TSDF weight.
pub fn measurement_weight<T: Real>(u_ep: T, u_al: T, mode: WeightMode, depth: T) -> Result<T> {
    match mode {
        WeightMode::InverseTotalUncertainty => {
            if !(u_ep >= T::ZERO && u_al >= T::ZERO) || !(u_ep + u_al).finite() {
                return Err(Error::invalid("u_tot", (u_ep + u_al).as_f64(), "must be finite and >= 0"));
            }
            Ok(T::ONE / (u_ep + u_al).max(T::lit(VARIANCE_FLOOR)))
        }
        WeightMode::InverseDepthSquared => {
            if !(depth > T::ZERO) || !depth.finite() {
                return Err(Error::invalid("depth", depth.as_f64(), "must be > 0"));
            }
            Ok(T::ONE / (depth * depth))
        }
    }
}

/// Sum of reciprocals kept as an unevaluated pair `hi + lo`, so `n` equal
/// terms `1/u` give back `u/n` to the last bit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct ReciprocalSum<T> {
    pub(crate) hi: T,
    pub(crate) lo: T,
}

fn two_sum<T: Real>(a: T, b: T) -> (T, T) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl<T: Real> ReciprocalSum<T> {
    fn add(&mut self, x: T) {
        let (s, e) = two_sum(self.hi, x);
        let e = e + self.lo;
        let hi = s + e;
        self.lo = e - (hi - s);
        self.hi = hi;
    }

    pub(crate) fn add_reciprocal(&mut self, u: T) {
        let r = T::ONE / u;
        let r_lo = ComplexField::mul_add(-r, u, T::ONE) / u;
        self.add(r);
        self.add(r_lo);
    }

    /// `1 / (hi + lo)`; infinite while empty.
    pub(crate) fn reciprocal(&self) -> T {
        if !(self.hi > T::ZERO) {
            return T::INFINITY;
        }
        let q = T::ONE / self.hi;
        let e = ComplexField::mul_add(-q, self.hi, T::ONE) - q * self.lo;
        ComplexField::mul_add(q, e, q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsdfVoxel<T: Real> {
    /// Truncated signed distance, positive in front of the surface.
    pub distance: T,
    pub weight: T,
    pub(crate) inv_u_ep: ReciprocalSum<T>,
    /// Dirichlet over classes plus free and unknown.
    pub sem: DirichletEvidence<T>,
    /// Running mean of unit view directions (not renormalized).
    pub mean_view: Vector3<T>,
    pub obs_count: u64,
}

impl<T: Real> TsdfVoxel<T> {
    pub fn empty(states: usize) -> Self {
        Self {
            distance: T::ZERO,
            weight: T::ZERO,
            inv_u_ep: ReciprocalSum::default(),
            sem: DirichletEvidence::uniform(states),
            mean_view: Vector3::zeros(),
            obs_count: 0,
        }
    }

    /// Fused epistemic variance, infinite before the first observation.
    pub fn u_ep(&self) -> T {
        self.inv_u_ep.reciprocal()
    }

    pub fn is_observed(&self) -> bool {
        self.obs_count > 0
    }

    /// Harmonic fusion of one epistemic observation.
    pub fn fuse_epistemic(&mut self, u_m: T) {
        self.inv_u_ep.add_reciprocal(u_m.max(T::lit(VARIANCE_FLOOR)));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block<T: Real> {
    pub(crate) voxels: Vec<TsdfVoxel<T>>,
}

impl<T: Real> Block<T> {
    fn new(states: usize) -> Self {
        Self { voxels: vec![TsdfVoxel::empty(states); BLOCK_VOXELS] }
    }
}

/// Split a voxel index into block key and offset within the block.
pub fn block_of(idx: [i64; 3]) -> ([i64; 3], usize) {
    let key = idx.map(|i| i.div_euclid(BLOCK_EDGE));
    let l = idx.map(|i| i.rem_euclid(BLOCK_EDGE));
    (key, (l[0] + BLOCK_EDGE * (l[1] + BLOCK_EDGE * l[2])) as usize)
}

fn voxel_of(key: [i64; 3], offset: usize) -> [i64; 3] {
    let o = offset as i64;
    let l = [o % BLOCK_EDGE, (o / BLOCK_EDGE) % BLOCK_EDGE, o / (BLOCK_EDGE * BLOCK_EDGE)];
    [0, 1, 2].map(|i| key[i] * BLOCK_EDGE + l[i])
}

/// Counts from integrating a cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntegrationSummary {
    pub points: usize,
    pub voxel_updates: usize,
    pub semantic_updates: usize,
    pub new_blocks: usize,
}

impl std::ops::AddAssign for IntegrationSummary {
    fn add_assign(&mut self, o: Self) {
        self.points += o.points;
        self.voxel_updates += o.voxel_updates;
        self.semantic_updates += o.semantic_updates;
        self.new_blocks += o.new_blocks;
    }
}

/// Sparse TSDF map of 8³-voxel blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T: Real> {
    config: GridConfig<T>,
    space: LabelSpace,
    pub(crate) blocks: HashMap<[i64; 3], Block<T>>,
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(config: GridConfig<T>, classes: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, space: LabelSpace::new(classes)?, blocks: HashMap::new() })
    }

    pub fn config(&self) -> &GridConfig<T> {
        &self.config
    }

    pub fn label_space(&self) -> LabelSpace {
        self.space
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn voxel_index(&self, p: &Vector3<T>) -> [i64; 3] {
        voxel_index(p, self.config.voxel_size)
    }

    pub fn voxel_center(&self, idx: [i64; 3]) -> Vector3<T> {
        voxel_center(idx, self.config.voxel_size)
    }

    /// Observed voxel at an integer index.
    pub fn voxel(&self, idx: [i64; 3]) -> Option<&TsdfVoxel<T>> {
        let (key, off) = block_of(idx);
        self.blocks.get(&key).map(|b| &b.voxels[off]).filter(|v| v.is_observed())
    }

    /// Observed voxel containing `p`.
    pub fn query(&self, p: &Vector3<T>) -> Option<&TsdfVoxel<T>> {
        self.voxel(self.voxel_index(p))
    }

    /// Sorted block keys, for order-independent iteration.
    pub fn block_keys(&self) -> Vec<[i64; 3]> {
        let mut keys: Vec<_> = self.blocks.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    /// Observed voxels in block-key then offset order.
    pub fn observed_voxels(&self) -> Vec<([i64; 3], &TsdfVoxel<T>)> {
        let mut out = Vec::new();
        for key in self.block_keys() {
            for (off, v) in self.blocks[&key].voxels.iter().enumerate() {
                if v.is_observed() {
                    out.push((voxel_of(key, off), v));
                }
            }
        }
        out
    }

    /// Voxels with `|distance| < voxel_size` and weight above `epsilon`.
    pub fn surface_voxels(&self) -> Vec<([i64; 3], &TsdfVoxel<T>)> {
        let vs = self.config.voxel_size;
        let eps = self.config.epsilon;
        self.observed_voxels()
            .into_iter()
            .filter(|(_, v)| v.distance.abs() < vs && v.weight > eps)
            .collect()
    }

    /// Surface voxels reported as semantic surface, with their thresholded
    /// label. Voxels labeled free are left out: their evidence says the space
    /// is empty even though the distance field puts them next to a surface.
    pub fn semantic_surface_voxels(&self, tau: T) -> Vec<([i64; 3], &TsdfVoxel<T>, VoxelState)> {
        self.surface_voxels()
            .into_iter()
            .map(|(idx, v)| (idx, v, semfuse::voxel_label(&v.sem, tau)))
            .filter(|(_, _, s)| *s != VoxelState::Free)
            .collect()
    }

    fn voxel_entry(&mut self, idx: [i64; 3], new_blocks: &mut usize) -> &mut TsdfVoxel<T> {
        let (key, off) = block_of(idx);
        let states = self.space.states();
        let block = self.blocks.entry(key).or_insert_with(|| {
            *new_blocks += 1;
            Block::new(states)
        });
        &mut block.voxels[off]
    }

    /// Casts one point into the map. `depth` is the point's camera z-depth,
    /// used by the distance weighting. Every voxel from the camera to
    /// `truncation` behind the point gets a geometric update; semantics are
    /// left alone.
    pub fn integrate_point(&mut self, origin: &Vector3<T>, point: &EvidPoint<T>, depth: T) -> Result<IntegrationSummary> {
        let mut summary = IntegrationSummary { points: 1, ..Default::default() };
        self.cast(origin, point, depth, &mut summary, |_, _, _, _| {})?;
        Ok(summary)
    }

    fn cast<F>(
        &mut self,
        origin: &Vector3<T>,
        point: &EvidPoint<T>,
        depth: T,
        summary: &mut IntegrationSummary,
        mut touched: F,
    ) -> Result<()>
    where
        F: FnMut([i64; 3], T, T, &TsdfVoxel<T>),
    {
        point.validate()?;
        if point.c.len() != self.space.classes() {
            return Err(Error::DimensionMismatch { expected: self.space.classes(), actual: point.c.len() });
        }
        let ray = point.x - origin;
        let length = ray.norm();
        if !(length > T::ZERO) || !length.finite() {
            return Err(Error::invalid("ray length", length.as_f64(), "must be > 0"));
        }
        let dir = ray / length;
        let cfg = self.config;
        let w_m = measurement_weight(point.u_ep, point.u_al, cfg.weight_mode, depth)?;
        let end = point.x + dir * cfg.truncation;
        for idx in traverse(origin, &end, cfg.voxel_size) {
            let center = voxel_center(idx, cfg.voxel_size);
            let sdf = length - (center - origin).dot(&dir);
            if sdf < -cfg.truncation {
                continue;
            }
            let voxel = self.voxel_entry(idx, &mut summary.new_blocks);
            touched(idx, sdf, w_m, voxel);
            let clamped = sdf.min(cfg.truncation);
            let total = voxel.weight + w_m;
            voxel.distance = (voxel.weight * voxel.distance + w_m * clamped) / total;
            voxel.weight = total.min(cfg.max_weight);
            voxel.fuse_epistemic(point.u_ep);
            let n = T::lit((voxel.obs_count + 1) as f64);
            voxel.mean_view += (dir - voxel.mean_view) / n;
            voxel.obs_count += 1;
            summary.voxel_updates += 1;
        }
        Ok(())
    }

    /// Integrates `cloud` in two passes. First every point updates geometry
    /// in order. Then, when `fusion` is given, every (point, voxel) pair
    /// inside the truncation band fuses the point's evidence in the same
    /// order. Routing sees the voxel weight after this cloud's geometry;
    /// the viewpoint discount compares against the mean view held before
    /// this cloud, since the whole cloud shares one viewpoint.
    pub fn integrate_cloud(&mut self, cloud: &EvidCloud<T>, fusion: Option<&FusionConfig<T>>) -> Result<IntegrationSummary> {
        if let Some(f) = fusion {
            f.validate()?;
        }
        let origin = cloud.pose().origin();
        let forward = cloud.pose().forward();
        let truncation = self.config.truncation;
        let mut summary = IntegrationSummary::default();
        let mut touches: Vec<(usize, [i64; 3], T, T)> = Vec::new();
        let mut before: HashMap<[i64; 3], (Vector3<T>, u64)> = HashMap::new();
        for (i, p) in cloud.points().iter().enumerate() {
            let depth = (p.x - origin).dot(&forward);
            summary.points += 1;
            self.cast(&origin, p, depth, &mut summary, |idx, sdf, w_m, voxel| {
                if fusion.is_some() && sdf <= truncation {
                    before.entry(idx).or_insert((voxel.mean_view, voxel.obs_count));
                    touches.push((i, idx, sdf, w_m));
                }
            })?;
        }
        let Some(f) = fusion else {
            return Ok(summary);
        };
        let evidence: Vec<Vec<T>> = cloud.points().iter().map(|p| p.c.evidence()).collect();
        for (i, idx, sdf, w_m) in touches {
            let (mean_view, obs_count) = before[&idx];
            let (key, off) = block_of(idx);
            let voxel = &mut self.blocks.get_mut(&key).expect("touched block exists").voxels[off];
            let lambda_d = semfuse::depth_weight(semfuse::occupancy_belief(w_m, sdf), f);
            let routed = semfuse::route_evidence(&evidence[i], sdf, voxel.weight, lambda_d, f);
            let lambda_v = semfuse::viewpoint_discount(&mean_view, obs_count, &cloud.view_dirs()[i], f);
            semfuse::fuse_in_place(&mut voxel.sem, &routed, lambda_v, f)?;
            summary.semantic_updates += 1;
        }
        Ok(summary)
    }
}

impl TryFrom<String> for WeightMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WeightMode> for String {
    fn from(v: WeightMode) -> String {
        v.name().to_string()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn point(x: Vector3<f64>, u: f64, classes: usize) -> EvidPoint<f64> {
        let mut c = vec![1.0; classes];
        c[0] = 5.0;
        EvidPoint { x, rgb: [0; 3], u_ep: u, u_al: u, c: DirichletEvidence::new(c).unwrap() }
    }

    fn grid(mode: WeightMode) -> VoxelGrid<f64> {
        VoxelGrid::new(GridConfig { weight_mode: mode, ..GridConfig::default() }, 2).unwrap()
    }

    #[test]
    fn weight_examples() {
        let u = WeightMode::InverseTotalUncertainty;
        let d = WeightMode::InverseDepthSquared;
        assert_eq!(measurement_weight(0.5, 0.5, u, 1.0).unwrap(), 1.0);
        assert_eq!(measurement_weight(0.0, 0.0, d, 2.0).unwrap(), 0.25);
        assert!((measurement_weight(0.05, 0.05, u, 3.0).unwrap() - 10.0f64).abs() < 1e-12);
        assert!((measurement_weight(0.05, 0.05, d, 3.0).unwrap() - 1.0f64 / 9.0).abs() < 1e-15);
        assert_eq!(measurement_weight(0.0, 0.0, u, 1.0).unwrap(), 1.0 / 1e-9);
        assert!(measurement_weight(0.1f64, 0.1, d, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(GridConfig::<f64>::default().validate().is_ok());
        assert!(GridConfig { truncation: 0.09, ..GridConfig::<f64>::default() }.validate().is_err());
        assert!(GridConfig { epsilon: 0.0, ..GridConfig::<f64>::default() }.validate().is_err());
        assert!("1/d2".parse::<WeightMode>().is_ok());
        assert!("median".parse::<WeightMode>().is_err());
    }

    #[test]
    fn block_indexing_round_trip() {
        for idx in [[0, 0, 0], [-1, 7, 8], [-9, -8, 15], [100, -3, 2]] {
            let (key, off) = block_of(idx);
            assert_eq!(voxel_of(key, off), idx);
        }
        assert_eq!(block_of([-1, 0, 0]).0, [-1, 0, 0]);
    }

    #[test]
    fn reciprocal_sum_is_exact_for_equal_terms() {
        for &u in &[0.05f64, 0.3, 1.0 / 3.0, 7e-4, 2.5] {
            let mut acc = ReciprocalSum::default();
            assert_eq!(acc.reciprocal(), f64::INFINITY);
            for n in 1..=2000u32 {
                acc.add_reciprocal(u);
                assert_eq!(acc.reciprocal(), u / n as f64, "u={u} n={n}");
            }
        }
    }

    #[test]
    fn first_and_repeated_observation() {
        let mut g = grid(WeightMode::InverseTotalUncertainty);
        let origin = Vector3::new(0.01, 0.02, 0.0);
        let p = point(Vector3::new(0.01, 0.02, 1.0), 0.25, 2);
        g.integrate_point(&origin, &p, 1.0).unwrap();
        // Voxel centered 0.05 in front of the point along +z.
        let v = g.query(&Vector3::new(0.01, 0.02, 0.93)).unwrap().clone();
        let sdf = 1.0 - 0.925;
        assert!((v.distance - sdf).abs() < 1e-12);
        assert_eq!(v.weight, 2.0);
        assert_eq!(v.u_ep(), 0.25);
        g.integrate_point(&origin, &p, 1.0).unwrap();
        let v2 = g.query(&Vector3::new(0.01, 0.02, 0.93)).unwrap();
        assert_eq!(v2.weight, 4.0);
        assert!((v2.distance - sdf).abs() < 1e-15);
        assert_eq!(v2.u_ep(), 0.125);
        // Free space near the camera is clamped to +truncation.
        let near = g.query(&Vector3::new(0.01, 0.02, 0.3)).unwrap();
        assert_eq!(near.distance, 0.15);
        // Behind the band nothing is touched.
        assert!(g.query(&Vector3::new(0.01, 0.02, 1.2)).is_none());
        assert!(g.query(&Vector3::new(0.01, 0.02, 1.1)).is_some());
    }

    #[test]
    fn weight_is_capped() {
        let cfg = GridConfig { max_weight: 3.0, ..GridConfig::default() };
        let mut g = VoxelGrid::new(cfg, 2).unwrap();
        let p = point(Vector3::new(0.01, 0.02, 1.0), 0.25, 2);
        for _ in 0..5 {
            g.integrate_point(&Vector3::new(0.01, 0.02, 0.0), &p, 1.0).unwrap();
        }
        assert_eq!(g.query(&p.x).unwrap().weight, 3.0);
    }

    #[test]
    fn rejects_wrong_class_count_and_zero_ray() {
        let mut g = grid(WeightMode::InverseTotalUncertainty);
        let p = point(Vector3::new(0.0, 0.0, 1.0), 0.1, 3);
        assert!(matches!(g.integrate_point(&Vector3::zeros(), &p, 1.0), Err(Error::DimensionMismatch { .. })));
        let p = point(Vector3::new(0.0, 0.0, 1.0), 0.1, 2);
        assert!(g.integrate_point(&p.x, &p, 1.0).is_err());
    }

    fn single_point_cloud(p: &EvidPoint<f64>) -> EvidCloud<f64> {
        EvidCloud::new(vec![p.clone()], crate::cloudgen::Pose::identity(), 0).unwrap()
    }

    #[test]
    fn semantic_band_routing() {
        let mut g = VoxelGrid::new(GridConfig::default(), 2).unwrap();
        let f = FusionConfig::default();
        let p = point(Vector3::new(0.01, 0.02, 1.0), 0.25, 2);
        let s = g.integrate_cloud(&single_point_cloud(&p), Some(&f)).unwrap();
        let space = g.label_space();
        // Band: 0.15 m either side of the point, three voxels per 0.15 m.
        assert_eq!(s.semantic_updates, 6);
        let front = g.query(&Vector3::new(0.01, 0.02, 0.98)).unwrap();
        assert_eq!(front.sem.argmax(), space.free());
        let behind = g.query(&Vector3::new(0.01, 0.02, 1.03)).unwrap();
        assert_eq!(behind.sem.argmax(), 0);
        // Free-space voxels outside the band carry no semantic evidence.
        let far = g.query(&Vector3::new(0.01, 0.02, 0.5)).unwrap();
        assert_eq!(far.sem, DirichletEvidence::uniform(4));
        // Geometry-only integration leaves semantics untouched.
        let mut h = VoxelGrid::new(GridConfig::default(), 2).unwrap();
        assert_eq!(h.integrate_cloud(&single_point_cloud(&p), None).unwrap().semantic_updates, 0);
        assert!(h.observed_voxels().iter().all(|(_, v)| v.sem == DirichletEvidence::uniform(4)));
    }

    #[test]
    fn low_weight_voxels_route_to_unknown() {
        // Distance weight 1/z² falls below epsilon = 0.01 beyond 10 m.
        let cfg = GridConfig { weight_mode: WeightMode::InverseDepthSquared, ..GridConfig::default() };
        let mut g = VoxelGrid::new(cfg, 2).unwrap();
        let p = point(Vector3::new(0.01, 0.02, 12.0), 0.01, 2);
        g.integrate_cloud(&single_point_cloud(&p), Some(&FusionConfig::default())).unwrap();
        let v = g.query(&Vector3::new(0.01, 0.02, 12.03)).unwrap();
        assert_eq!(v.sem.argmax(), g.label_space().unknown());
    }

    #[test]
    fn same_view_repeats_are_discounted() {
        let mut g = VoxelGrid::new(GridConfig::default(), 2).unwrap();
        let f = FusionConfig::default();
        let p = point(Vector3::new(0.01, 0.02, 1.0), 0.25, 2);
        let probe = Vector3::new(0.01, 0.02, 1.03);
        g.integrate_cloud(&single_point_cloud(&p), Some(&f)).unwrap();
        let first = g.query(&probe).unwrap().sem.strength();
        g.integrate_cloud(&single_point_cloud(&p), Some(&f)).unwrap();
        let second = g.query(&probe).unwrap().sem.strength();
        let gain = first - 4.0;
        assert!(((second - first) - f.lambda_view_min * gain).abs() < 1e-9 * gain);
    }

    proptest! {
        #[test]
        fn order_robust(
            za in 0.8f64..2.0, zb in 0.8f64..2.0,
            ua in 0.001f64..0.1, ub in 0.001f64..0.1,
            xa in -0.2f64..0.2, xb in -0.2f64..0.2,
        ) {
            let origin = Vector3::new(0.011, 0.013, 0.0);
            let a = point(Vector3::new(xa, 0.01, za), ua, 2);
            let b = point(Vector3::new(xb, -0.01, zb), ub, 2);
            let mut g1 = grid(WeightMode::InverseTotalUncertainty);
            let mut g2 = grid(WeightMode::InverseTotalUncertainty);
            g1.integrate_point(&origin, &a, za).unwrap();
            g1.integrate_point(&origin, &b, zb).unwrap();
            g2.integrate_point(&origin, &b, zb).unwrap();
            g2.integrate_point(&origin, &a, za).unwrap();
            let v1 = g1.observed_voxels();
            let v2 = g2.observed_voxels();
            prop_assert_eq!(v1.len(), v2.len());
            for ((i1, x), (i2, y)) in v1.iter().zip(&v2) {
                prop_assert_eq!(i1, i2);
                prop_assert!((x.distance - y.distance).abs() < 1e-6);
                prop_assert_eq!(x.weight, y.weight);
                prop_assert!(x.u_ep() <= ua.max(ub) + 1e-15);
            }
        }

        #[test]
        fn weights_never_decrease(zs in prop::collection::vec(0.5f64..2.0, 1..8)) {
            let origin = Vector3::new(0.011, 0.013, 0.0);
            let mut g = grid(WeightMode::InverseDepthSquared);
            let mut before: HashMap<[i64; 3], f64> = HashMap::new();
            for z in zs {
                g.integrate_point(&origin, &point(Vector3::new(0.011, 0.013, z), 0.01, 2), z).unwrap();
                for (idx, v) in g.observed_voxels() {
                    let prev = before.insert(idx, v.weight).unwrap_or(0.0);
                    prop_assert!(v.weight >= prev);
                    prop_assert!(v.distance.abs() <= g.config().truncation + 1e-15);
                }
            }
        }
    }
}
