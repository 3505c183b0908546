//! Command-line driver: dataset generation, training, reconstruction,
//! evaluation, lambda sweeps and difference maps.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ctrecon::dataset::{
    build_dataset, load_dataset, read_manifest, write_png, DatasetManifest, NoiseSpec, Protocol,
};
use ctrecon::geometry::Image;
use ctrecon::metrics::MetricReport;
use ctrecon::network::{
    history_to_csv, sinogram_batch_to_tensor, tensor_to_images, train, DualDomainNetwork,
    TrainConfig, TrainingSample,
};
use ctrecon::nn::checkpoint::{read_arrays, write_arrays, ArrayEntry};
use ctrecon::nn::BnMode;
use ctrecon::phantom::{PhantomKind, PhantomSpec};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "ctrecon", about = "Dual-domain sinogram/CT reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate phantoms and package a dataset.
    Generate(GenerateArgs),
    /// Train the dual-domain network on a dataset.
    Train(TrainArgs),
    /// Reconstruct images from a dataset with a checkpoint or the FBP baseline.
    Reconstruct(ReconstructArgs),
    /// Score a folder of reconstructions against a reference.
    Eval(EvalArgs),
    /// Train at several lambda values and tabulate sinogram/image quality.
    SweepLambda(SweepArgs),
    /// Write absolute-difference PNGs between two image folders.
    Diffmap(DiffmapArgs),
}

#[derive(Args, Clone, serde::Deserialize, Default)]
struct GenerateArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// direct-180 or sub-90-interp-180
    #[arg(long)]
    protocol: Option<String>,
    /// shepp-logan or random-ellipses
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "noise-b")]
    noise_b: Option<f64>,
    #[arg(long = "noise-var")]
    noise_var: Option<f64>,
    /// Noise seed (defaults to the phantom seed).
    #[arg(long = "noise-seed")]
    noise_seed: Option<u64>,
}

#[derive(Args, Clone, serde::Deserialize, Default)]
struct TrainArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Run directory for checkpoint, history and hyperparameters.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Sinogram-block channel width.
    #[arg(long)]
    width1: Option<usize>,
    /// Image-block channel width.
    #[arg(long)]
    width2: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress wall-clock timing in the history (bit-identical reruns).
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    deterministic: bool,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint file written by `train`; omit with --baseline fbp.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// "fbp": plain ramp-filter FBP of the noisy inputs.
    #[arg(long)]
    baseline: Option<String>,
    /// Also write PNG previews.
    #[arg(long, default_value_t = false)]
    png: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Folder with reconstructed images (array files).
    #[arg(long)]
    images: PathBuf,
    /// Reference folder: a dataset directory (uses the u labels) or another
    /// image folder.
    #[arg(long)]
    reference: PathBuf,
    /// Output directory for report.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Held-out dataset to score; defaults to the validation split.
    #[arg(long)]
    test_dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.5, 0.9])]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0u64])]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 8)]
    width1: usize,
    #[arg(long, default_value_t = 12)]
    width2: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
}

#[derive(Args)]
struct DiffmapArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Multiplier applied to the absolute difference before clamping.
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SweepLambda(a) => cmd_sweep(a),
        Command::Diffmap(a) => cmd_diffmap(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn merge<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let file: GenerateArgs = match &args.config {
        Some(p) => serde_json::from_slice(&std::fs::read(p).context("reading config")?)
            .context("parsing config")?,
        None => GenerateArgs::default(),
    };
    let out = args
        .out
        .or(file.out)
        .context("--out is required (or set \"out\" in the config)")?;
    let protocol = Protocol::parse(&merge(args.protocol, file.protocol, "direct-180".into()))?;
    let kind = match merge(args.kind, file.kind, "random-ellipses".into()).as_str() {
        "shepp-logan" => PhantomKind::SheppLogan,
        "random-ellipses" => PhantomKind::RandomEllipses,
        other => bail!("unknown phantom kind {other}"),
    };
    let seed = merge(args.seed, file.seed, 0);
    let spec = PhantomSpec {
        kind,
        count: merge(args.count, file.count, 50),
        size: merge(args.size, file.size, 64),
        ellipse_count: (2, 8),
        intensity: (-0.4, 1.0),
        seed,
    };
    let noise = NoiseSpec {
        b: merge(args.noise_b, file.noise_b, 1e7),
        var: merge(args.noise_var, file.noise_var, 0.002),
        seed: merge(args.noise_seed, file.noise_seed, seed),
    };

    // Idempotence: identical manifest already on disk means nothing to do.
    if out.join("manifest.json").exists() {
        let existing = read_manifest(&out)?;
        let candidate = DatasetManifest {
            created_unix: existing.created_unix,
            ..DatasetManifest {
                format_version: 1,
                image_size: spec.size,
                n_input: protocol.measured_angles(),
                n_label: ctrecon::dataset::LABEL_ANGLES,
                protocol,
                noise,
                phantoms: spec.clone(),
                sample_count: existing.sample_count,
                files: existing.files.clone(),
                created_unix: 0,
            }
        };
        if existing.same_content(&candidate) && spec.count == existing.sample_count {
            println!("dataset at {} is up to date", out.display());
            return Ok(());
        }
    }

    let manifest = build_dataset(&out, &spec, protocol, &noise)?;
    println!(
        "wrote {} samples ({}x{} images, protocol {:?}) to {}",
        manifest.sample_count,
        manifest.image_size,
        manifest.image_size,
        manifest.protocol,
        out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let file: TrainArgs = match &args.config {
        Some(p) => serde_json::from_slice(&std::fs::read(p).context("reading config")?)
            .context("parsing config")?,
        None => TrainArgs::default(),
    };
    let dataset = args.dataset.or(file.dataset).context("--dataset is required")?;
    let out = args.out.or(file.out).context("--out is required")?;
    let config = TrainConfig {
        lambda: merge(args.lambda, file.lambda, 0.1),
        lr: merge(args.lr, file.lr, 1e-3),
        epochs: merge(args.epochs, file.epochs, 10),
        batch_size: merge(args.batch, file.batch, 4),
        sigma1_channels: merge(args.width1, file.width1, 16),
        sigma2_channels: merge(args.width2, file.width2, 24),
        seed: merge(args.seed, file.seed, 0),
        val_fraction: 0.1,
        suppress_timing: args.deterministic || file.deterministic,
    };

    let (manifest, samples) = load_dataset(&dataset)?;
    let geom = ctrecon::dataset::make_geometry_180(manifest.image_size)?;
    let result = train(geom, &samples, &config)?;

    std::fs::create_dir_all(&out)?;
    write_arrays(&out.join("checkpoint.bin"), &result.network.to_entries())?;
    std::fs::write(&out.join("history.csv"), history_to_csv(&result.history))?;
    std::fs::write(
        &out.join("hyperparams.json"),
        serde_json::to_vec_pretty(&serde_json::json!({
            "config": config,
            "dataset": dataset.display().to_string(),
            "image_size": manifest.image_size,
            "n_label": manifest.n_label,
            "protocol": manifest.protocol,
            "sino_scale": result.network.sino_scale,
            "best_val_psnr": result.best_val_psnr,
            "diverged": result.diverged,
        }))?,
    )?;
    if result.diverged {
        bail!("training diverged; wrote last finite checkpoint to {}", out.display());
    }
    println!(
        "trained {} epochs, best val PSNR {:.2} dB, checkpoint at {}",
        result.history.len(),
        result.best_val_psnr,
        out.join("checkpoint.bin").display()
    );
    Ok(())
}

fn load_network(checkpoint: &Path, manifest: &DatasetManifest) -> anyhow::Result<DualDomainNetwork> {
    let entries = read_arrays(checkpoint)?;
    // Infer widths from the stored first-layer filters.
    let width1 = entries
        .iter()
        .find(|e| e.name == "sigma1/conv0/filter")
        .context("checkpoint missing sigma1/conv0/filter")?
        .dims[3];
    let width2 = entries
        .iter()
        .find(|e| e.name == "sigma2/conv0/filter")
        .context("checkpoint missing sigma2/conv0/filter")?
        .dims[3];
    let geom = ctrecon::dataset::make_geometry_180(manifest.image_size)?;
    let mut net = DualDomainNetwork::new(geom, width1, width2, 1.0, 0)?;
    net.load_entries(&entries)?;
    Ok(net)
}

fn cmd_reconstruct(args: ReconstructArgs) -> anyhow::Result<()> {
    let (manifest, samples) = load_dataset(&args.dataset)?;
    std::fs::create_dir_all(&args.out)?;

    let baseline = args.baseline.as_deref();
    if baseline.is_some() && baseline != Some("fbp") {
        bail!("unknown baseline {:?} (only \"fbp\")", args.baseline);
    }
    if baseline.is_none() && args.checkpoint.is_none() {
        bail!("either --checkpoint or --baseline fbp is required");
    }

    let images: Vec<Image> = if baseline.is_some() {
        let geom = ctrecon::dataset::make_geometry_180(manifest.image_size)?;
        let fbp = ctrecon::fbp::FbpLayer::new(geom)?;
        samples
            .iter()
            .map(|s| fbp.forward(&s.x))
            .collect::<ctrecon::Result<_>>()?
    } else {
        let mut net = load_network(args.checkpoint.as_ref().unwrap(), &manifest)?;
        let mut out = Vec::with_capacity(samples.len());
        for s in &samples {
            let x = sinogram_batch_to_tensor(&[&s.x]);
            let cache = net.forward_full(&x, BnMode::Infer)?;
            out.push(tensor_to_images(&cache.ct_out).remove(0));
        }
        out
    };

    for (i, img) in images.iter().enumerate() {
        let entry = ArrayEntry::new("image", vec![img.size, img.size], img.pixels.clone())?;
        write_arrays(&args.out.join(format!("recon_{i:05}.bin")), &[entry])?;
        if args.png {
            write_png(&args.out.join(format!("recon_{i:05}.png")), img)?;
        }
    }
    println!("wrote {} reconstructions to {}", images.len(), args.out.display());
    Ok(())
}

/// Loads every array file in a directory as an image, sorted by file name.
/// Dataset directories contribute their `u` labels.
fn load_image_dir(dir: &Path) -> anyhow::Result<Vec<Image>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .bin image files in {}", dir.display());
    }
    let mut out = Vec::with_capacity(files.len());
    for f in &files {
        let entries = read_arrays(f)?;
        let e = entries
            .iter()
            .find(|e| e.name == "image")
            .or_else(|| entries.iter().find(|e| e.name == "u"))
            .with_context(|| format!("{} holds no image/u array", f.display()))?;
        if e.dims.len() != 2 || e.dims[0] != e.dims[1] {
            bail!("{} is not a square image", f.display());
        }
        out.push(Image { size: e.dims[0], pixels: e.data.clone() });
    }
    Ok(out)
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let images = load_image_dir(&args.images)?;
    let refs = load_image_dir(&args.reference)?;
    if images.len() != refs.len() {
        bail!("{} images vs {} references", images.len(), refs.len());
    }
    let pairs: Vec<(Image, Image)> = images.into_iter().zip(refs).collect();
    let report = MetricReport::from_pairs(&pairs, 255.0)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.csv"), report.to_csv())?;
    std::fs::write(
        args.out.join("summary.json"),
        serde_json::to_vec_pretty(&serde_json::json!({
            "count": report.psnr.len(),
            "psnr_mean": report.psnr_mean,
            "psnr_std": report.psnr_std,
            "ssim_mean": report.ssim_mean,
            "ssim_std": report.ssim_std,
        }))?,
    )?;
    println!(
        "PSNR {:.2} +/- {:.2} dB, SSIM {:.4} +/- {:.4} ({} images)",
        report.psnr_mean,
        report.psnr_std,
        report.ssim_mean,
        report.ssim_std,
        report.psnr.len()
    );
    Ok(())
}

/// Mean sinogram/image PSNR and SSIM of a trained network on a sample set.
fn score_network(
    net: &mut DualDomainNetwork,
    samples: &[TrainingSample],
) -> anyhow::Result<(f64, f64, f64, f64)> {
    let mut sino_psnr = 0.0;
    let mut sino_ssim = 0.0;
    let mut ct_psnr = 0.0;
    let mut ct_ssim = 0.0;
    for s in samples {
        let x = sinogram_batch_to_tensor(&[&s.x]);
        let cache = net.forward_full(&x, BnMode::Infer)?;
        let y_scaled: Vec<f64> = s.y.samples.iter().map(|&v| v * net.sino_scale).collect();
        let m = s.y.detector_count();
        let n = s.y.num_angles();
        sino_psnr += ctrecon::metrics::psnr_flat(&cache.s1_out_scaled.data, &y_scaled, 255.0)?
            .min(99.0);
        sino_ssim += ctrecon::metrics::ssim_rect(&cache.s1_out_scaled.data, &y_scaled, m, n, 255.0)?;
        let ct = &tensor_to_images(&cache.ct_out)[0];
        ct_psnr += ctrecon::metrics::psnr(ct, &s.u, 255.0)?.min(99.0);
        ct_ssim += ctrecon::metrics::ssim(ct, &s.u, 255.0)?;
    }
    let n = samples.len() as f64;
    Ok((sino_psnr / n, sino_ssim / n, ct_psnr / n, ct_ssim / n))
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let (manifest, samples) = load_dataset(&args.dataset)?;
    let geom = ctrecon::dataset::make_geometry_180(manifest.image_size)?;
    let held_out: Option<Vec<TrainingSample>> = match &args.test_dataset {
        Some(d) => Some(load_dataset(d)?.1),
        None => None,
    };

    std::fs::create_dir_all(&args.out)?;
    let mut csv = String::from("lambda,seed,sino_psnr,sino_ssim,ct_psnr,ct_ssim\n");
    for &lambda in &args.lambdas {
        for &seed in &args.seeds {
            let config = TrainConfig {
                lambda,
                lr: args.lr,
                epochs: args.epochs,
                batch_size: args.batch,
                sigma1_channels: args.width1,
                sigma2_channels: args.width2,
                seed,
                val_fraction: 0.2,
                suppress_timing: true,
            };
            let result = train(geom.clone(), &samples, &config)?;
            let mut net = result.network;
            let eval_set: Vec<TrainingSample> = match &held_out {
                Some(t) => t.clone(),
                None => samples.iter().take(samples.len().min(10)).cloned().collect(),
            };
            let (sp, ss, cp, cs) = score_network(&mut net, &eval_set)?;
            csv.push_str(&format!(
                "{lambda},{seed},{sp:.6},{ss:.6},{cp:.6},{cs:.6}\n"
            ));
            println!("lambda {lambda} seed {seed}: sino {sp:.2} dB, image {cp:.2} dB");
        }
    }
    std::fs::write(args.out.join("sweep.csv"), csv)?;
    println!("wrote {}", args.out.join("sweep.csv").display());
    Ok(())
}

fn cmd_diffmap(args: DiffmapArgs) -> anyhow::Result<()> {
    let images = load_image_dir(&args.images)?;
    let refs = load_image_dir(&args.reference)?;
    if images.len() != refs.len() {
        bail!("{} images vs {} references", images.len(), refs.len());
    }
    std::fs::create_dir_all(&args.out)?;
    for (i, (a, b)) in images.iter().zip(&refs).enumerate() {
        if a.size != b.size {
            bail!("image {i}: size {} vs {}", a.size, b.size);
        }
        let diff = Image {
            size: a.size,
            pixels: a
                .pixels
                .iter()
                .zip(&b.pixels)
                .map(|(&x, &y)| args.gain * (x - y).abs())
                .collect(),
        };
        write_png(&args.out.join(format!("diff_{i:05}.png")), &diff)?;
    }
    println!("wrote {} difference maps to {}", images.len(), args.out.display());
    Ok(())
}
