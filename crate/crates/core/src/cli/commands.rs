//! The four subcommands. Each takes resolved options and returns the files
//! it wrote plus the seeds it derived.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::args::{DatasetArgs, EvalArgs, SimulateArgs, TrainArgs};
use crate::error::{Error, Result};
use crate::eval::{self, pca_project, Reconstruct};
use crate::io::archive::{load_archive, save_archive, ArchiveImage, ArchiveManifest};
use crate::io::image::{read_pgm_values, read_sim_image, write_sim_image, ImageSidecar};
use crate::io::pgm::{to_u8, write_pgm, Gray8};
use crate::models::{build_model, Arch, Autoencoder, ModelSpec, ValueDomain};
use crate::noise::NoiseParams;
use crate::nn::Mode;
use crate::patches::{extract_patches, normalize, sample_and_split, subsample_patches, Patch};
use crate::rng;
use crate::sim::{default_extent, simulate, LatticeSpec, LatticeType, RenderParams};
use crate::train::{builtin_configs, find_config, train_with, TrainConfig};

pub const IMAGES_DIR: &str = "images";
pub const ARCHIVE_FILE: &str = "patches.stmp";
pub const CHECKPOINT_FILE: &str = "model.stmw";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PCA_FILE: &str = "pca.csv";
pub const RECON_DIR: &str = "recon";

pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub artifacts: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| crate::train::csv_error(path, e)
}

pub fn resolve_simulate(a: SimulateArgs) -> Result<SimulateArgs> {
    let lattice_constant = a.lattice_constant.unwrap_or(1.0);
    let defaults = NoiseParams::default();
    let render = RenderParams::for_lattice_constant(lattice_constant);
    let r = SimulateArgs {
        lattice: Some(a.lattice.unwrap_or_else(|| "all".into())),
        count: Some(a.count.unwrap_or(1)),
        lattice_constant: Some(lattice_constant),
        extent: a.extent,
        psf_sigma: Some(a.psf_sigma.unwrap_or(render.psf_sigma)),
        brightness_falloff: Some(a.brightness_falloff.unwrap_or(render.brightness_falloff)),
        use_floor: Some(a.use_floor.unwrap_or(render.use_floor)),
        gaussian: Some(a.gaussian.unwrap_or(defaults.gaussian_strength)),
        poisson: Some(a.poisson.unwrap_or(defaults.poisson_strength)),
        striation: Some(a.striation.unwrap_or(defaults.striation_strength)),
        pos_jitter: Some(a.pos_jitter.unwrap_or(defaults.pos_jitter)),
        brightness_jitter: Some(a.brightness_jitter.unwrap_or(defaults.brightness_jitter)),
        clean: Some(a.clean.unwrap_or(false)),
    };
    lattices(r.lattice.as_deref().unwrap_or("all"))?;
    if r.count == Some(0) {
        return Err(Error::invalid("--count must be at least 1"));
    }
    Ok(r)
}

fn lattices(name: &str) -> Result<Vec<LatticeType>> {
    if name.eq_ignore_ascii_case("all") {
        Ok(LatticeType::ALL.to_vec())
    } else {
        name.split(',').map(|n| n.trim().parse()).collect()
    }
}

pub fn simulate_cmd(a: &SimulateArgs, seed: u64, out: &Path) -> Result<Outcome> {
    let kinds = lattices(a.lattice.as_deref().unwrap_or("all"))?;
    let count = a.count.unwrap_or(1);
    let lattice_constant = a.lattice_constant.unwrap_or(1.0);
    let render = RenderParams {
        psf_sigma: a.psf_sigma.unwrap_or(3.0),
        brightness_falloff: a.brightness_falloff.unwrap_or(lattice_constant / 2.0),
        use_floor: a.use_floor.unwrap_or(true),
    };
    render.validate()?;

    let jobs: Vec<(LatticeType, usize)> = kinds.iter().flat_map(|&l| (0..count).map(move |i| (l, i))).collect();
    let images = jobs
        .par_iter()
        .map(|&(lattice, i)| {
            let image_seed = rng::derive_seed(seed, &[rng::tag("image"), rng::tag(lattice.name()), i as u64]);
            let extent = a.extent.unwrap_or_else(|| default_extent(lattice, lattice_constant));
            let spec = LatticeSpec::random(lattice, lattice_constant, extent, image_seed)?;
            let noise = if a.clean == Some(true) {
                NoiseParams::none()
            } else {
                NoiseParams {
                    gaussian_strength: a.gaussian.unwrap_or(0.0),
                    poisson_strength: a.poisson.unwrap_or(0.0),
                    striation_strength: a.striation.unwrap_or(0.0),
                    pos_jitter: a.pos_jitter.unwrap_or(0.0),
                    brightness_jitter: a.brightness_jitter.unwrap_or(0.0),
                    seed: rng::derive_seed(image_seed, &[rng::tag("noise")]),
                }
            };
            simulate(&spec, &render, &noise)
        })
        .collect::<Result<Vec<_>>>()?;

    let dir = out.join(IMAGES_DIR);
    mkdir(&dir)?;
    let mut artifacts = Vec::new();
    for (&(lattice, i), img) in jobs.iter().zip(&images) {
        if img.meta.empty {
            eprintln!("warning: {} image {i} has no atoms on the canvas", lattice.name());
        }
        artifacts.extend(write_sim_image(&dir, &format!("{}_{i:03}", lattice.name()), img)?);
    }
    Ok(Outcome {
        inputs: vec![],
        artifacts,
        seeds: BTreeMap::from([("root".to_string(), seed)]),
    })
}

pub fn resolve_dataset(a: DatasetArgs, out: &Path) -> Result<DatasetArgs> {
    let r = DatasetArgs {
        input: Some(a.input.unwrap_or_else(|| out.join(IMAGES_DIR))),
        patch: Some(a.patch.unwrap_or(Arch::CaeA.input_size())),
        stride: Some(a.stride.unwrap_or(4)),
        subsample: a.subsample,
        archive: Some(a.archive.unwrap_or_else(|| PathBuf::from(ARCHIVE_FILE))),
    };
    if r.patch == Some(0) || r.stride == Some(0) {
        return Err(Error::invalid("patch size and stride must be at least 1"));
    }
    Ok(r)
}

/// A source image with whatever provenance it carries.
struct SourceImage {
    file: PathBuf,
    size: usize,
    pixels: Vec<f32>,
    lattice: Option<LatticeType>,
    image_seed: Option<u64>,
    noise_seed: Option<u64>,
}

/// Images under `dir`, by sidecar when any exist, otherwise as PGMs.
fn read_images(dir: &Path) -> Result<Vec<SourceImage>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    files.sort();
    let with_ext = |ext: &str| -> Vec<PathBuf> {
        files
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == ext))
            .cloned()
            .collect()
    };
    let sidecars: Vec<PathBuf> = with_ext("json")
        .into_iter()
        .filter(|p| {
            fs::read_to_string(p)
                .ok()
                .and_then(|t| serde_json::from_str::<ImageSidecar>(&t).ok())
                .is_some()
        })
        .collect();
    if !sidecars.is_empty() {
        return sidecars
            .into_iter()
            .map(|p| {
                let img = read_sim_image(&p)?;
                Ok(SourceImage {
                    size: img.size,
                    pixels: img.pixels,
                    lattice: Some(img.meta.lattice.lattice),
                    image_seed: Some(img.meta.lattice.seed),
                    noise_seed: img.meta.noise.map(|n| n.seed),
                    file: p,
                })
            })
            .collect();
    }
    with_ext("pgm")
        .into_iter()
        .map(|p| {
            let (size, pixels) = read_pgm_values(&p)?;
            Ok(SourceImage {
                file: p,
                size,
                pixels,
                lattice: None,
                image_seed: None,
                noise_seed: None,
            })
        })
        .collect()
}

pub fn dataset_cmd(a: &DatasetArgs, seed: u64, out: &Path) -> Result<Outcome> {
    let input = a.input.clone().expect("resolved");
    let (patch, stride) = (a.patch.expect("resolved"), a.stride.expect("resolved"));
    let images = read_images(&input)?;
    if images.is_empty() {
        return Err(Error::Degenerate(format!("no images found in {}", input.display())));
    }

    let mut patches = Vec::new();
    let mut records = Vec::new();
    for (id, img) in images.iter().enumerate() {
        let mut record = ArchiveImage {
            id: id as u32,
            file: img.file.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            lattice: img.lattice,
            image_seed: img.image_seed,
            noise_seed: img.noise_seed,
            patches: 0,
            skipped: None,
        };
        match normalize(&img.pixels) {
            Ok(norm) => {
                let cut = extract_patches(&norm, img.size, id as u32, patch, stride)?;
                let kept = match a.subsample {
                    Some(k) => subsample_patches(cut, k, seed, id as u64)?,
                    None => cut,
                };
                record.patches = kept.len();
                patches.extend(kept);
            }
            Err(Error::Degenerate(reason)) => {
                eprintln!("warning: skipping {}: {reason}", img.file.display());
                record.skipped = Some(reason);
            }
            Err(e) => return Err(e),
        }
        records.push(record);
    }
    if patches.is_empty() {
        return Err(Error::Degenerate("every input image was skipped".into()));
    }

    mkdir(out)?;
    let manifest = ArchiveManifest {
        patch_size: patch,
        stride,
        count: patches.len(),
        seed,
        subsample: a.subsample,
        sources: patches.iter().map(|p| p.source).collect(),
        images: records,
    };
    let archive = out.join(a.archive.as_ref().expect("resolved"));
    let written = save_archive(&archive, &patches, &manifest)?;
    for r in &manifest.images {
        eprintln!("{}: {} patches", r.file, r.patches);
    }
    Ok(Outcome {
        inputs: images.into_iter().map(|i| i.file).collect(),
        artifacts: written.to_vec(),
        seeds: BTreeMap::from([("root".to_string(), seed), ("subsample".to_string(), seed)]),
    })
}

/// Starting config: `preset` (or `config_name`) when given, else Baseline.
fn base_config(preset: Option<&str>) -> Result<TrainConfig> {
    match preset {
        Some(name) => find_config(name).ok_or_else(|| {
            let names: Vec<String> = builtin_configs().into_iter().map(|c| c.slug()).collect();
            Error::invalid(format!("unknown training config `{name}` (known: {})", names.join(", ")))
        }),
        None => Ok(find_config("baseline").expect("baseline is built in")),
    }
}

pub fn resolve_train(a: TrainArgs, out: &Path) -> Result<TrainArgs> {
    let base = base_config(a.preset.as_deref())?;
    let arch: Arch = a.arch.as_deref().unwrap_or("cae-a").parse()?;
    let r = TrainArgs {
        arch: Some(arch.name().to_string()),
        archive: Some(a.archive.unwrap_or_else(|| out.join(ARCHIVE_FILE))),
        preset: Some(base.slug()),
        name: Some(a.name.unwrap_or(base.name)),
        lr: Some(a.lr.unwrap_or(base.lr)),
        batch: Some(a.batch.unwrap_or(base.batch)),
        patches_per_image: Some(a.patches_per_image.unwrap_or(base.patches_per_image)),
        epochs: Some(a.epochs.unwrap_or(base.epochs)),
        lr_decay: Some(a.lr_decay.unwrap_or(base.lr_decay)),
        split: Some(a.split.unwrap_or(0.9)),
        list_configs: false,
    };
    train_config(&r)?.validate()?;
    Ok(r)
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let missing = || Error::invalid("unresolved training options");
    Ok(TrainConfig {
        name: a.name.clone().ok_or_else(missing)?,
        lr: a.lr.ok_or_else(missing)?,
        batch: a.batch.ok_or_else(missing)?,
        patches_per_image: a.patches_per_image.ok_or_else(missing)?,
        epochs: a.epochs.ok_or_else(missing)?,
        lr_decay: a.lr_decay.ok_or_else(missing)?,
    })
}

/// Archive patches grouped by source image, in archive order.
fn by_image(patches: Vec<Patch>) -> Vec<Vec<Patch>> {
    let mut groups: BTreeMap<u32, Vec<Patch>> = BTreeMap::new();
    for p in patches {
        groups.entry(p.source.image_id).or_default().push(p);
    }
    groups.into_values().collect()
}

pub fn train_cmd(a: &TrainArgs, seed: u64, out: &Path) -> Result<Outcome> {
    let config = train_config(a)?;
    let arch: Arch = a.arch.as_deref().expect("resolved").parse()?;
    let archive_path = a.archive.clone().expect("resolved");
    let archive = load_archive(&archive_path)?;
    if archive.manifest.patch_size != arch.input_size() {
        return Err(Error::ShapeMismatch {
            context: "patch archive for this architecture",
            expected: vec![arch.input_size(), arch.input_size()],
            actual: vec![archive.manifest.patch_size, archive.manifest.patch_size],
        });
    }

    let seeds = BTreeMap::from([
        ("root".to_string(), seed),
        ("init".to_string(), rng::derive_seed(seed, &[rng::tag("init")])),
        ("split".to_string(), rng::derive_seed(seed, &[rng::tag("split")])),
        ("train".to_string(), rng::derive_seed(seed, &[rng::tag("train")])),
    ]);
    let data = sample_and_split(
        by_image(archive.patches),
        config.patches_per_image,
        a.split.expect("resolved"),
        seeds["split"],
    )?;
    let mut model = build_model(ModelSpec::new(arch), seeds["init"])?;
    eprintln!(
        "training {} ({} parameters) with `{}` on {} train / {} validation patches",
        arch,
        model.param_count(),
        config.name,
        data.train.len(),
        data.val.len()
    );
    let log = train_with(&mut model, &data, &config, seeds["train"], |r| {
        eprintln!(
            "epoch {:>4}  train {:.6}  val {:.6}  ({:.1}s)",
            r.epoch, r.train_loss, r.val_loss, r.seconds
        )
    })?;

    mkdir(out)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    model.save(&ckpt)?;
    let csv = out.join(TRAIN_LOG_FILE);
    log.write_csv(&csv)?;
    Ok(Outcome {
        inputs: vec![archive_path.clone(), crate::io::archive::manifest_path(&archive_path)],
        artifacts: vec![ckpt, csv],
        seeds,
    })
}

pub fn resolve_eval(a: EvalArgs, out: &Path, preset: Option<&str>) -> Result<EvalArgs> {
    let label = match (a.label, preset) {
        (Some(l), _) => l,
        (None, Some(p)) => base_config(Some(p))?.name,
        (None, None) => "custom".to_string(),
    };
    Ok(EvalArgs {
        checkpoint: Some(a.checkpoint.unwrap_or_else(|| out.join(CHECKPOINT_FILE))),
        archive: Some(a.archive.unwrap_or_else(|| out.join(ARCHIVE_FILE))),
        label: Some(label),
        max_patches: a.max_patches,
        samples: Some(a.samples.unwrap_or(8)),
    })
}

fn lattice_label(l: Option<LatticeType>) -> &'static str {
    l.map(LatticeType::name).unwrap_or("unknown")
}

/// Side-by-side original and reconstruction, one blank column between.
fn pair_image(orig: &[f32], recon: &[f64], size: usize) -> Gray8 {
    let width = 2 * size + 1;
    let unit = |v: f64| to_u8(ValueDomain::Signed.to_unit(v));
    let mut pixels = vec![255u8; width * size];
    for r in 0..size {
        for c in 0..size {
            pixels[r * width + c] = unit(orig[r * size + c] as f64);
            pixels[r * width + size + 1 + c] = unit(recon[r * size + c]);
        }
    }
    Gray8 {
        width,
        height: size,
        pixels,
    }
}

fn latents(model: &mut Autoencoder, patches: &[Patch]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(patches.len());
    for group in patches.chunks(256) {
        let x = model.input_tensor(group)?;
        let z = model.encode_batch(&x, Mode::Eval)?;
        out.extend(z.data().chunks(z.item_len()).map(|c| c.to_vec()));
    }
    Ok(out)
}

pub fn eval_cmd(a: &EvalArgs, seed: u64, out: &Path) -> Result<Outcome> {
    let ckpt = a.checkpoint.clone().expect("resolved");
    let archive_path = a.archive.clone().expect("resolved");
    if !ckpt.exists() {
        return Err(Error::io(&ckpt, std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found")));
    }
    let mut model = Autoencoder::load(&ckpt)?;
    let archive = load_archive(&archive_path)?;
    let manifest = archive.manifest;
    let mut patches = archive.patches;
    if patches.is_empty() {
        return Err(Error::Degenerate("archive holds no patches".into()));
    }
    let sample_seed = rng::derive_seed(seed, &[rng::tag("eval")]);
    if let Some(k) = a.max_patches.filter(|&k| k < patches.len()) {
        patches.shuffle(&mut rng::stream(sample_seed, &[]));
        patches.truncate(k);
        patches.sort_by_key(|p| p.source);
    }

    let recon = model.reconstruct_patches(&patches)?;
    let scores = eval::score_reconstructions(&patches, &recon)?;
    let label = a.label.clone().expect("resolved");
    let mut groups: BTreeMap<Option<LatticeType>, (f64, f64, usize)> = BTreeMap::new();
    for (p, s) in patches.iter().zip(&scores) {
        let g = groups.entry(manifest.lattice_of(p.source.image_id)).or_default();
        g.0 += s.0;
        g.1 += s.1;
        g.2 += 1;
    }

    mkdir(out)?;
    let metrics_path = out.join(METRICS_FILE);
    let mut w = csv::Writer::from_path(&metrics_path).map_err(csv_err(&metrics_path))?;
    w.write_record(["lattice", "config", "avg_mse", "avg_ssim"]).map_err(csv_err(&metrics_path))?;
    for (lattice, (mse, ssim, n)) in &groups {
        let (avg_mse, avg_ssim) = (mse / *n as f64, ssim / *n as f64);
        eprintln!("{:<13} {:<22} mse {avg_mse:.6}  ssim {avg_ssim:.4}", lattice_label(*lattice), label);
        w.write_record([
            lattice_label(*lattice).to_string(),
            label.clone(),
            avg_mse.to_string(),
            avg_ssim.to_string(),
        ])
        .map_err(csv_err(&metrics_path))?;
    }
    w.flush().map_err(|e| Error::io(&metrics_path, e))?;
    let mut artifacts = vec![metrics_path];

    let z = latents(&mut model, &patches)?;
    let pca_path = out.join(PCA_FILE);
    let mut w = csv::Writer::from_path(&pca_path).map_err(csv_err(&pca_path))?;
    w.write_record(["pc1", "pc2", "pc3", "lattice", "image_id"]).map_err(csv_err(&pca_path))?;
    match pca_project(&z) {
        Ok(pca) => {
            for (p, pt) in patches.iter().zip(&pca.points) {
                w.write_record([
                    pt[0].to_string(),
                    pt[1].to_string(),
                    pt[2].to_string(),
                    lattice_label(manifest.lattice_of(p.source.image_id)).to_string(),
                    p.source.image_id.to_string(),
                ])
                .map_err(csv_err(&pca_path))?;
            }
        }
        Err(e) => eprintln!("warning: no PCA projection: {e}"),
    }
    w.flush().map_err(|e| Error::io(&pca_path, e))?;
    artifacts.push(pca_path);

    let recon_dir = out.join(RECON_DIR);
    mkdir(&recon_dir)?;
    for (i, (p, r)) in patches.iter().zip(&recon).take(a.samples.unwrap_or(0)).enumerate() {
        let path = recon_dir.join(format!("pair_{i:03}.pgm"));
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_pgm(BufWriter::new(f), &pair_image(&p.values, r, p.size))?;
        artifacts.push(path);
    }

    Ok(Outcome {
        inputs: vec![ckpt, archive_path],
        artifacts,
        seeds: BTreeMap::from([("root".to_string(), seed), ("sample".to_string(), sample_seed)]),
    })
}
