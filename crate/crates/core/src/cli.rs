//! Command-line front end. Every failure is reported as one line starting
//! with `error:` and a nonzero exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{bench_csv, run_benchmark, BenchConfig, SamplerKind};
use crate::error::{Error, Result};
use crate::field::{bake, FieldConfig, FieldModel};
use crate::io::{
    apply_deformation, load_model, load_scene, read_image, save_model, save_scene, write_image, CameraSet,
    DeformationFile,
};
use crate::math::FEATURE_DIM;
use crate::render::{with_threads, RenderConfig, Renderer};
use crate::ris::SamplerConfig;
use crate::train::{log_csv, Dataset, LearningRates, PruneConfig, TrainConfig, Trainer};

#[derive(Parser, Debug)]
#[command(
    name = "iris",
    version,
    about = "Render, train, edit and benchmark neural-anchor scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render one image per camera frame.
    Render(RenderArgs),
    /// Fit a scene and model to posed images.
    Train(TrainArgs),
    /// Apply a deformation file to a baked scene.
    Edit(EditArgs),
    /// Store hash-grid features on the anchors.
    Bake(BakeArgs),
    /// Measure sampler throughput against the baselines.
    BenchSampler(BenchArgs),
    /// Print a scene summary.
    Info(InfoArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Background {
    White,
    Black,
}

impl Background {
    fn rgb(self) -> [f64; 3] {
        match self {
            Background::White => [1.0; 3],
            Background::Black => [0.0; 3],
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SamplerArgs {
    /// Maximum samples per ray.
    #[arg(long)]
    pub quota: Option<usize>,
    /// Squared Mahalanobis radius of the proxy ellipsoids.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Use the unbounded-scene defaults (quota 256, λ 11.3449).
    #[arg(long)]
    pub unbounded: bool,
}

impl SamplerArgs {
    fn config(&self) -> SamplerConfig {
        let mut cfg = if self.unbounded {
            SamplerConfig::unbounded()
        } else {
            SamplerConfig::bounded()
        };
        if let Some(q) = self.quota {
            cfg.quota = q;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        cfg
    }
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, value_enum, default_value_t = Background::White)]
    pub background: Background,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Start from this model instead of a fresh one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 4096)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write a validation render every N iterations (and after the last).
    #[arg(long)]
    pub val_every: Option<usize>,
    #[arg(long)]
    pub lr_grid: Option<f64>,
    #[arg(long)]
    pub lr_mlp: Option<f64>,
    #[arg(long)]
    pub lr_features: Option<f64>,
    #[arg(long)]
    pub lr_geometry: Option<f64>,
    #[arg(long)]
    pub lr_opacity: Option<f64>,
    /// Disable visibility-aware pruning.
    #[arg(long)]
    pub no_prune: bool,
    #[arg(long, value_enum, default_value_t = Background::White)]
    pub background: Background,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EditArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub deform: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BakeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Comma-separated sizes (`64,256`, `2^10`) or a power range `2^6..2^16`.
    #[arg(long, default_value = "2^6..2^16")]
    pub batches: String,
    #[arg(long, default_value = "ris,uniform,grid")]
    pub samplers: String,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Largest batch for the uniform baseline.
    #[arg(long, default_value_t = 1024)]
    pub uniform_max_batch: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    #[arg(long)]
    pub scene: PathBuf,
}

fn parse_size(tok: &str) -> Result<usize> {
    let tok = tok.trim();
    let bad = || Error::Config(format!("invalid batch size `{tok}`"));
    match tok.strip_prefix("2^") {
        Some(e) => {
            let e: u32 = e.parse().map_err(|_| bad())?;
            1usize.checked_shl(e).filter(|_| e < 40).ok_or_else(bad)
        }
        None => tok.parse().map_err(|_| bad()),
    }
}

/// `2^6..2^16` expands to every power of two in the range.
pub fn parse_batches(spec: &str) -> Result<Vec<usize>> {
    let sizes = if let Some((a, b)) = spec.split_once("..") {
        let (lo, hi) = (parse_size(a)?, parse_size(b)?);
        if !lo.is_power_of_two() || !hi.is_power_of_two() || lo > hi {
            return Err(Error::Config(format!("invalid batch range `{spec}`")));
        }
        (lo.trailing_zeros()..=hi.trailing_zeros())
            .map(|e| 1usize << e)
            .collect()
    } else {
        spec.split(',').map(parse_size).collect::<Result<Vec<_>>>()?
    };
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Config(format!("invalid batch list `{spec}`")));
    }
    Ok(sizes)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn render(args: &RenderArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let model = load_model(&args.model)?;
    let cameras = CameraSet::load(&args.cameras)?;
    let cfg = RenderConfig {
        width: args.width,
        height: args.height,
        background: args.background.rgb(),
        sampler: args.sampler.config(),
        threads: args.threads,
        ..Default::default()
    };
    cfg.sampler.validate()?;
    let renderer = Renderer::new(&scene, &model, cfg)?;
    create_dir(&args.out)?;
    for (i, f) in cameras.frames.iter().enumerate() {
        let img = renderer.render(&f.camera)?;
        write_image(&args.out.join(format!("eval_img_{i:04}.ppm")), &img)?;
    }
    log::info!("rendered {} views into {}", cameras.len(), args.out.display());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let cameras = CameraSet::load(&args.cameras)?;
    let paths = cameras.image_paths(&args.images);
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.is_file()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingFrames(missing));
    }
    let views = cameras
        .frames
        .iter()
        .zip(&paths)
        .map(|(f, p)| Ok((f.camera.clone(), read_image(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset::from_views(&views);

    let model = match &args.model {
        Some(p) => load_model(p)?,
        None => FieldModel::new(&FieldConfig::default(), args.seed)?,
    };
    let d = LearningRates::default();
    let cfg = TrainConfig {
        lr: LearningRates {
            hash_grid: args.lr_grid.unwrap_or(d.hash_grid),
            mlp: args.lr_mlp.unwrap_or(d.mlp),
            features: args.lr_features.unwrap_or(d.features),
            geometry: args.lr_geometry.unwrap_or(d.geometry),
            opacity: args.lr_opacity.unwrap_or(d.opacity),
        },
        batch_size: args.batch,
        iterations: args.iters,
        seed: args.seed,
        prune: (!args.no_prune).then(PruneConfig::default),
        sampler: args.sampler.config(),
        background: args.background.rgb(),
        threads: args.threads,
        ..Default::default()
    };
    let mut trainer = Trainer::new(scene, model, cfg)?;
    create_dir(&args.out)?;

    let val = |t: &Trainer, iter: usize| -> Result<()> {
        let Some((cam, img)) = views.first() else {
            return Ok(());
        };
        let rcfg = RenderConfig {
            width: img.width,
            height: img.height,
            background: cfg.background,
            sampler: cfg.sampler,
            rca: cfg.rca,
            threads: cfg.threads,
        };
        let out = Renderer::new(&t.scene, &t.model, rcfg)?.render(cam)?;
        write_image(&args.out.join(format!("val_{iter:06}.ppm")), &out)
    };

    for i in 1..=args.iters {
        let row = trainer.step(&data)?;
        if i % 100 == 0 || i == args.iters {
            log::info!("iter {i}: loss {:.6e}, psnr {:.2}", row.loss, row.psnr);
        }
        if args.val_every.is_some_and(|n| n > 0 && i % n == 0) {
            val(&trainer, i)?;
        }
    }
    val(&trainer, args.iters)?;
    save_scene(&trainer.scene, &args.out.join("scene.iris"))?;
    save_model(&trainer.model, &args.out.join("model.irmd"))?;
    let log_path = args.out.join("train_log.csv");
    std::fs::write(&log_path, log_csv(&trainer.log)).map_err(|e| Error::io(&log_path, e))?;
    Ok(())
}

fn edit(args: &EditArgs) -> Result<()> {
    let mut scene = load_scene(&args.scene)?;
    let deform = DeformationFile::load(&args.deform)?;
    apply_deformation(&mut scene, &deform)?;
    save_scene(&scene, &args.out)
}

fn bake_cmd(args: &BakeArgs) -> Result<()> {
    let mut scene = load_scene(&args.scene)?;
    let model = load_model(&args.model)?;
    bake(&mut scene, &model)?;
    save_scene(&scene, &args.out)
}

fn bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let samplers = args
        .samplers
        .split(',')
        .map(|s| s.trim().parse::<SamplerKind>())
        .collect::<Result<Vec<_>>>()?;
    let cfg = BenchConfig {
        batch_sizes: parse_batches(&args.batches)?,
        samplers,
        repeats: args.repeats,
        sampler: args.sampler.config(),
        uniform_max_batch: args.uniform_max_batch,
        ..Default::default()
    };
    cfg.sampler.validate()?;
    let csv = bench_csv(&run_benchmark(&scene, &cfg)?);
    match &args.out {
        Some(p) => std::fs::write(p, csv).map_err(|e| Error::io(p, e)),
        None => out.write_all(csv.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Summary printed by `info`.
pub fn info_text(scene: &crate::scene::Scene) -> String {
    let mut s = format!("anchors: {}, baked: {}, dim: {FEATURE_DIM}\n", scene.len(), scene.baked);
    match scene.bounds() {
        Some((lo, hi)) => {
            s += &format!(
                "bounds: [{:.6}, {:.6}, {:.6}] .. [{:.6}, {:.6}, {:.6}]\n",
                lo.x, lo.y, lo.z, hi.x, hi.y, hi.z
            )
        }
        None => s += "bounds: empty\n",
    }
    s
}

/// Runs a parsed command, writing command output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Render(a) => with_threads(a.threads, || render(a))?,
        Command::Train(a) => with_threads(a.threads, || train(a))?,
        Command::Edit(a) => edit(a),
        Command::Bake(a) => bake_cmd(a),
        Command::BenchSampler(a) => {
            let mut buf = Vec::new();
            with_threads(a.threads, || bench(a, &mut buf))??;
            out.write_all(&buf).map_err(|e| Error::io("<stdout>", e))
        }
        Command::Info(a) => {
            let scene = load_scene(&a.scene)?;
            out.write_all(info_text(&scene).as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Help and version go to `out`; errors to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let msg = first.strip_prefix("error: ").unwrap_or(first);
            let _ = writeln!(err, "error: {msg}");
            return 2;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_specs() {
        assert_eq!(parse_batches("2^6..2^8").unwrap(), vec![64, 128, 256]);
        assert_eq!(parse_batches("3,2^4").unwrap(), vec![3, 16]);
        assert!(parse_batches("0").is_err());
        assert!(parse_batches("2^8..2^6").is_err());
        assert!(parse_batches("x").is_err());
    }

    #[test]
    fn unknown_flag_is_single_line_error() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(["iris", "info", "--scene", "a", "--bogus"], &mut out, &mut err);
        assert_eq!(code, 2);
        let err = String::from_utf8(err).unwrap();
        assert!(err.starts_with("error:"));
        assert_eq!(err.lines().count(), 1);
    }

    #[test]
    fn missing_file_fails() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(["iris", "info", "--scene", "/nonexistent/x.iris"], &mut out, &mut err);
        assert_eq!(code, 1);
        assert!(String::from_utf8(err)
            .unwrap()
            .starts_with("error: /nonexistent/x.iris"));
    }
}
