use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::simrun::spec::ExperimentSpec;
use crate::simrun::build_map;
use crate::tsdf::WeightMode;

/// Overrides applied to a base spec for one row of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant<T> {
    pub name: String,
    pub weight_mode: Option<WeightMode>,
    pub tau: Option<T>,
    pub lambda_view_min: Option<T>,
    pub seed: Option<u64>,
}

impl<T> Variant<T> {
    pub fn named(name: impl Into<String>) -> Self {
        Self { name: name.into(), weight_mode: None, tau: None, lambda_view_min: None, seed: None }
    }
}

impl<T: Real> Variant<T> {
    pub fn apply(&self, base: &ExperimentSpec<T>) -> ExperimentSpec<T> {
        let mut spec = base.clone();
        if let Some(m) = self.weight_mode {
            spec.grid.weight_mode = m;
        }
        if let Some(t) = self.tau {
            spec.fusion.tau = t;
        }
        if let Some(l) = self.lambda_view_min {
            spec.fusion.lambda_view_min = l;
        }
        if let Some(s) = self.seed {
            spec.run.seed = s;
        }
        spec.run.output = None;
        spec.run.ablation = false;
        spec
    }
}

/// `[name:]key=value[,key=value…]` with keys `weight_mode`, `tau`,
/// `lambda_view_min` and `seed`. Without a name the text itself is used.
impl<T: Real> FromStr for Variant<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, body) = match s.split_once(':') {
            Some((n, b)) => (n.trim(), b),
            None => (s.trim(), s),
        };
        let mut v = Variant::named(name);
        for pair in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("variant `{s}`: expected key=value, found `{pair}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || Error::Config(format!("variant `{s}`: bad value `{value}` for `{key}`"));
            match key {
                "weight_mode" => v.weight_mode = Some(value.parse()?),
                "tau" => v.tau = Some(value.parse().map_err(|_| bad())?),
                "lambda_view_min" => v.lambda_view_min = Some(value.parse().map_err(|_| bad())?),
                "seed" => v.seed = Some(value.parse().map_err(|_| bad())?),
                other => return Err(Error::Config(format!("variant `{s}`: unknown key `{other}`"))),
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow<T> {
    pub name: String,
    pub miou: T,
    pub voxel_acc: T,
    pub voxel_ece: T,
    pub abstention_rate: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable<T> {
    pub rows: Vec<AblationRow<T>>,
}

impl<T: Real> AblationTable<T> {
    pub fn row(&self, name: &str) -> Option<&AblationRow<T>> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "variant,miou_3d,voxel_acc,voxel_ece,abstention_rate")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.name, r.miou, r.voxel_acc, r.voxel_ece, r.abstention_rate)?;
        }
        Ok(())
    }
}

impl<T: Real> fmt::Display for AblationTable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.name.len()).chain(["variant".len()]).max().unwrap_or(7);
        writeln!(f, "{:<width$}  {:>8}  {:>9}  {:>9}  {:>10}", "variant", "mIoU", "voxel acc", "voxel ECE", "abstention")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>8.4}  {:>9.4}  {:>9.4}  {:>10.4}",
                r.name,
                r.miou.as_f64(),
                r.voxel_acc.as_f64(),
                r.voxel_ece.as_f64(),
                r.abstention_rate.as_f64()
            )?;
        }
        Ok(())
    }
}

/// Builds and evaluates one map per variant of `base`.
pub fn ablation_table<T: Real>(base: &ExperimentSpec<T>, variants: &[Variant<T>]) -> Result<AblationTable<T>> {
    if variants.is_empty() {
        return Err(Error::Config("ablation needs at least one variant".into()));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let spec = v.apply(base);
        let m = build_map(&spec)?.report.map;
        rows.push(AblationRow {
            name: v.name.clone(),
            miou: m.miou,
            voxel_acc: m.voxel_acc,
            voxel_ece: m.ece,
            abstention_rate: m.abstention_rate,
        });
    }
    Ok(AblationTable { rows })
}
