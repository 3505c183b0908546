//! Dataset packaging: renders phantoms, simulates clean sinograms, applies
//! the degradation protocol and writes `(x, y, u)` triples plus a JSON
//! manifest.
//!
//! Each sample is one array file (the versioned binary format from
//! [`crate::nn::checkpoint`]) holding arrays `x`, `y` and `u`; the manifest
//! is written last, atomically.

use crate::degrade::{degrade, interpolate_angles, subsample_angles, DegradeMode, NoiseParams};
use crate::error::{Error, Result};
use crate::geometry::{build_backprojector, AngleSpec, Geometry, Image, Sinogram};
use crate::network::TrainingSample;
use crate::nn::checkpoint::{read_arrays, write_arrays, ArrayEntry};
use crate::phantom::PhantomSpec;
use crate::rng::CounterRng;
use std::path::Path;

pub const LABEL_ANGLES: usize = 180;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Protocol {
    /// Sample 180 angles directly and degrade them.
    #[serde(rename = "direct-180")]
    Direct180,
    /// Sample 90 angles, degrade, then interpolate back to 180 angles.
    #[serde(rename = "sub-90-interp-180")]
    Sub90Interp180,
}

impl Protocol {
    pub fn parse(s: &str) -> Result<Protocol> {
        match s {
            "direct-180" => Ok(Protocol::Direct180),
            "sub-90-interp-180" | "sub-90" => Ok(Protocol::Sub90Interp180),
            other => Err(Error::InvalidArgument(format!("unknown protocol {other}"))),
        }
    }

    /// Number of angles actually measured before any interpolation.
    pub fn measured_angles(&self) -> usize {
        match self {
            Protocol::Direct180 => LABEL_ANGLES,
            Protocol::Sub90Interp180 => LABEL_ANGLES / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub b: f64,
    pub var: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub image_size: usize,
    /// Angles measured for the inputs (90 for the sparse-view protocol).
    pub n_input: usize,
    /// Angles of the stored inputs and labels (always 180).
    pub n_label: usize,
    pub protocol: Protocol,
    pub noise: NoiseSpec,
    pub phantoms: PhantomSpec,
    pub sample_count: usize,
    pub files: Vec<String>,
    pub created_unix: u64,
}

impl DatasetManifest {
    /// Equality ignoring the creation timestamp; used for idempotent
    /// regeneration.
    pub fn same_content(&self, other: &DatasetManifest) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.created_unix = 0;
        b.created_unix = 0;
        a == b
    }
}

/// Builds one `(x, y, u)` triple from a phantom image.
pub fn make_sample(
    u: &Image,
    projector: &crate::geometry::SparseBackprojector,
    protocol: Protocol,
    noise: &NoiseParams,
    mode: DegradeMode,
) -> Result<TrainingSample> {
    let y = projector.radon(u)?;
    let x = match protocol {
        Protocol::Direct180 => degrade(&y, noise, mode)?,
        Protocol::Sub90Interp180 => {
            let y90 = subsample_angles(&y, 2)?;
            let x90 = degrade(&y90, noise, mode)?;
            interpolate_angles(&x90, LABEL_ANGLES)?
        }
    };
    Ok(TrainingSample { x, y, u: u.clone() })
}

fn sample_to_entries(s: &TrainingSample) -> Vec<ArrayEntry> {
    let m = s.u.size;
    let n = s.y.num_angles();
    vec![
        ArrayEntry::new("x", vec![m, n], s.x.samples.clone()).unwrap(),
        ArrayEntry::new("y", vec![m, n], s.y.samples.clone()).unwrap(),
        ArrayEntry::new("u", vec![m, m], s.u.pixels.clone()).unwrap(),
    ]
}

fn entries_to_sample(entries: &[ArrayEntry], geom: &Geometry) -> Result<TrainingSample> {
    let get = |name: &str| -> Result<&ArrayEntry> {
        entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Dataset(format!("sample file missing array {name}")))
    };
    let x = get("x")?;
    let y = get("y")?;
    let u = get("u")?;
    let m = geom.image_size;
    let n = geom.num_angles();
    if x.dims != vec![m, n] || y.dims != vec![m, n] || u.dims != vec![m, m] {
        return Err(Error::Dataset("sample arrays do not match manifest geometry".into()));
    }
    Ok(TrainingSample {
        x: Sinogram::from_samples(geom.clone(), x.data.clone())?,
        y: Sinogram::from_samples(geom.clone(), y.data.clone())?,
        u: Image::from_pixels(m, u.data.clone())?,
    })
}

/// Generates phantoms, simulates the chosen protocol and writes the dataset
/// into `dir`. Per-sample noise seeds are derived from the manifest seed, so
/// the seed determines every byte of the sample files.
pub fn build_dataset(
    dir: &Path,
    phantoms: &PhantomSpec,
    protocol: Protocol,
    noise: &NoiseSpec,
) -> Result<DatasetManifest> {
    let images = crate::phantom::generate_phantoms(phantoms)?;
    let geom_full = make_geometry_180(phantoms.size)?;
    let projector = build_backprojector(&geom_full);

    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(images.len());
    for (i, u) in images.iter().enumerate() {
        let sample_seed = CounterRng::new(noise.seed, i as u64).next_u64();
        let params = NoiseParams { b: noise.b, var: noise.var, seed: sample_seed };
        let sample = make_sample(u, &projector, protocol, &params, DegradeMode::Stochastic)?;
        let name = format!("sample_{i:05}.bin");
        write_arrays(&dir.join(&name), &sample_to_entries(&sample))?;
        files.push(name);
    }

    let manifest = DatasetManifest {
        format_version: 1,
        image_size: phantoms.size,
        n_input: protocol.measured_angles(),
        n_label: LABEL_ANGLES,
        protocol,
        noise: *noise,
        phantoms: phantoms.clone(),
        sample_count: files.len(),
        files,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn make_geometry_180(image_size: usize) -> Result<Geometry> {
    crate::geometry::make_geometry(image_size, AngleSpec::Uniform(LABEL_ANGLES))
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let tmp = dir.join(".manifest.json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(manifest)?)?;
    std::fs::rename(tmp, dir.join("manifest.json"))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let bytes = std::fs::read(dir.join("manifest.json"))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Loads every sample listed in the manifest.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<TrainingSample>)> {
    let manifest = read_manifest(dir)?;
    let geom = make_geometry_180(manifest.image_size)?;
    let mut samples = Vec::with_capacity(manifest.files.len());
    for f in &manifest.files {
        let entries = read_arrays(&dir.join(f))?;
        samples.push(entries_to_sample(&entries, &geom)?);
    }
    Ok((manifest, samples))
}

/// Writes an image as an 8-bit grayscale PNG, clamping to `[0, 255]`.
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let m = img.size as u32;
    let buf: Vec<u8> = img
        .pixels
        .iter()
        .map(|&v| v.clamp(0.0, 255.0).round() as u8)
        .collect();
    let im = image::GrayImage::from_raw(m, m, buf)
        .ok_or_else(|| Error::Dataset("png buffer size mismatch".into()))?;
    im.save(path)
        .map_err(|e| Error::Dataset(format!("png write failed: {e}")))?;
    Ok(())
}
