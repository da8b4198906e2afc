//! `evidmap`: simulate evidential frames, integrate them into a semantic
//! TSDF map, evaluate maps and losses, and export results.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use evidmap::cloudgen::load_evcl;
use evidmap::metrics::{map_metrics, write_metrics_csv};
use evidmap::simrun::{
    ablation_table, evaluate_losses, load_gt_dump, load_pred_dump, simulate_to_dir, ExperimentSpec, LossEvalConfig,
    Variant,
};
use evidmap::tsdf::{load_evvx, save_evvx, save_ply, PlyColoring, VoxelGrid, WeightMode};
use evidmap::{Error, Result};

type Spec = ExperimentSpec<f64>;

/// Crate version plus the file format versions read and written.
const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (EVCL v1, EVVX v1)");

#[derive(Parser, Debug)]
#[command(name = "evidmap", version = VERSION, about = "Evidential semantic TSDF mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a spec's frames and write clouds, ground truth and predictions.
    Simulate {
        /// Experiment spec (TOML). Defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Integrate every `.evcl` cloud in a directory, in file name order.
    Integrate {
        /// Directory of `.evcl` clouds.
        #[arg(long)]
        clouds: PathBuf,
        /// Experiment spec supplying `[grid]`, `[fusion]` and the scene's class count.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output map file (EVVX).
        #[arg(long)]
        out: PathBuf,
        /// Measurement weighting: `uncertainty` or `distance`.
        #[arg(long, value_parser = parse_weight_mode)]
        weight_mode: Option<WeightMode>,
    },
    /// Score a map against a spec's scene; writes metrics and calibration CSVs.
    EvalMap {
        /// Map file (EVVX).
        #[arg(long)]
        map: PathBuf,
        /// Experiment spec whose `[scene]` is the ground truth.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Label confidence threshold; defaults to the spec's `fusion.tau`.
        #[arg(long)]
        tau: Option<f64>,
        /// Output directory for `metrics.csv` and `calibration.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the training losses on a prediction dump and check their gradients.
    LossEval {
        /// Prediction dump (EVPRED).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth dump (EVGT).
        #[arg(long)]
        gt: PathBuf,
        /// Loss config with optional `[depth]`, `[seg]` and `[gradcheck]` sections.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a map's semantic surface as an ASCII PLY point cloud.
    ExportPly {
        /// Map file (EVVX).
        #[arg(long)]
        map: PathBuf,
        /// Output PLY file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Coloring::Label)]
        coloring: Coloring,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
    /// Build one map per variant of a spec and tabulate the map metrics.
    Ablate {
        /// Experiment spec (TOML). Defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory for `ablation.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `[name:]key=value,...` with keys weight_mode, tau, lambda_view_min,
        /// seed. Repeatable. Without any, compares the two weighting modes.
        #[arg(long = "variant")]
        variants: Vec<String>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Coloring {
    Label,
    Uncertainty,
}

fn parse_weight_mode(s: &str) -> std::result::Result<WeightMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_spec(path: Option<&Path>) -> Result<Spec> {
    match path {
        Some(p) => Spec::load(p),
        None => Ok(Spec::default()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let io = |e| Error::Io { path: path.to_path_buf(), source: e };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    f(&mut w).and_then(|_| w.flush()).map_err(io)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn simulate(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = load_spec(spec)?;
    if let Some(s) = seed {
        spec.run.seed = s;
    }
    let entries = simulate_to_dir(&spec, out)?;
    let points: usize = entries.iter().map(|e| e.points).sum();
    println!("frames {} points {} out {}", entries.len(), points, out.display());
    Ok(())
}

fn cloud_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |e| Error::Io { path: dir.to_path_buf(), source: e };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().is_some_and(|x| x == "evcl") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("{}: no .evcl clouds found", dir.display())));
    }
    Ok(files)
}

fn integrate(clouds: &Path, config: Option<&Path>, out: &Path, weight_mode: Option<WeightMode>) -> Result<()> {
    let mut spec = load_spec(config)?;
    if let Some(m) = weight_mode {
        spec.grid.weight_mode = m;
    }
    let classes = spec.scene_spec()?.classes();
    let files = cloud_files(clouds)?;
    let start = Instant::now();
    let mut grid = VoxelGrid::new(spec.grid, classes)?;
    let mut points = 0;
    for (i, path) in files.iter().enumerate() {
        let cloud = load_evcl::<f64>(path, i as u64)?;
        points += grid.integrate_cloud(&cloud, Some(&spec.fusion))?.points;
    }
    let wall = start.elapsed();
    ensure_parent(out)?;
    save_evvx(out, &grid)?;
    println!(
        "clouds {} points {} voxels {} blocks {} wall_ms {:.3}",
        files.len(),
        points,
        grid.observed_voxels().len(),
        grid.block_count(),
        wall.as_secs_f64() * 1e3
    );
    Ok(())
}

fn eval_map(map: &Path, scene: Option<&Path>, tau: Option<f64>, out: Option<&Path>) -> Result<()> {
    let spec = load_spec(scene)?;
    let grid = load_evvx::<f64>(map)?;
    let tau = tau.unwrap_or(spec.fusion.tau);
    let metrics = map_metrics(&grid, &spec.scene_spec()?, tau)?;
    let rows = metrics.rows();
    for (name, value) in &rows {
        println!("{name} {value}");
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("metrics.csv"), |w| write_metrics_csv(&rows, w))?;
        write_file(&dir.join("calibration.csv"), |w| metrics.calibration.write_curve_csv(w))?;
    }
    Ok(())
}

fn loss_eval(pred: &Path, gt: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(p) => LossEvalConfig::load(p)?,
        None => LossEvalConfig::default(),
    };
    let pred = load_pred_dump::<f64>(pred)?;
    let gt = load_gt_dump::<f64>(gt)?;
    let report = evaluate_losses(&pred, &gt, &cfg)?;
    print!("{report}");
    Ok(())
}

fn export_ply(map: &Path, out: &Path, coloring: Coloring, tau: f64) -> Result<()> {
    let grid = load_evvx::<f64>(map)?;
    let coloring = match coloring {
        Coloring::Label => PlyColoring::Label,
        Coloring::Uncertainty => PlyColoring::Uncertainty,
    };
    ensure_parent(out)?;
    save_ply(out, &grid, coloring, tau)
}

fn ablate(spec: Option<&Path>, out: Option<&Path>, variants: &[String], seed: Option<u64>) -> Result<()> {
    let mut spec = load_spec(spec)?;
    if let Some(s) = seed {
        spec.run.seed = s;
    }
    let variants: Vec<Variant<f64>> = if variants.is_empty() {
        [WeightMode::InverseDepthSquared, WeightMode::InverseTotalUncertainty]
            .map(|m| Variant { weight_mode: Some(m), ..Variant::named(m.name()) })
            .to_vec()
    } else {
        variants.iter().map(|v| v.parse()).collect::<Result<_>>()?
    };
    let table = ablation_table(&spec, &variants)?;
    print!("{table}");
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("ablation.csv"), |w| table.write_csv(w))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { spec, out, seed } => simulate(spec.as_deref(), &out, seed),
        Command::Integrate { clouds, config, out, weight_mode } => {
            integrate(&clouds, config.as_deref(), &out, weight_mode)
        }
        Command::EvalMap { map, scene, tau, out } => eval_map(&map, scene.as_deref(), tau, out.as_deref()),
        Command::LossEval { pred, gt, config } => loss_eval(&pred, &gt, config.as_deref()),
        Command::ExportPly { map, out, coloring, tau } => export_ply(&map, &out, coloring, tau),
        Command::Ablate { spec, out, variants, seed } => ablate(spec.as_deref(), out.as_deref(), &variants, seed),
    }
}

/// 1 for unreadable or malformed files, 2 for everything the caller can
/// fix in the configuration or inputs' shapes.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
