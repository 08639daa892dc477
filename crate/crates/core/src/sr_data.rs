//! Super-resolution data: synthetic images, bicubic resampling, patch
//! sampling, dihedral augmentation, luma PSNR and binary PNM files.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Bicubic convolution parameter.
pub const BICUBIC_A: f64 = -0.5;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

/// An HR image and its bicubic LR counterpart, both `(3, H, W)` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub hr: Tensor,
    pub lr: Tensor,
    pub provenance: String,
}

impl ImagePair {
    pub fn from_hr(hr: Tensor, scale: usize, provenance: impl Into<String>) -> Result<Self> {
        let lr = downsample_bicubic(&hr, scale)?;
        Ok(Self {
            hr,
            lr,
            provenance: provenance.into(),
        })
    }
}

fn chw(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        [1, c, h, w] => Ok((c, h, w)),
        ref other => Err(Error::Shape(format!("expected a (C, H, W) image, got {other:?}"))),
    }
}

/// Procedural RGB images of `size × size` mixing a colour gradient, oriented
/// sinusoids and sharp-edged rectangles.
pub fn synth_generate(count: usize, size: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| synth_one(size, &mut rng)).collect()
}

fn synth_one(size: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let n = size as f64;
    let mut img = vec![0.0; 3 * size * size];
    let base: [f64; 3] = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
    let slope: [[f64; 2]; 3] = std::array::from_fn(|_| [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)]);
    for c in 0..3 {
        for y in 0..size {
            for x in 0..size {
                img[(c * size + y) * size + x] =
                    base[c] + slope[c][0] * (x as f64 / n - 0.5) + slope[c][1] * (y as f64 / n - 0.5);
            }
        }
    }
    for _ in 0..3 {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let period: f64 = rng.random_range(3.0..12.0);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let amp: f64 = rng.random_range(0.05..0.15);
        let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..1.0));
        let (kx, ky) = (theta.cos() * std::f64::consts::TAU / period, theta.sin() * std::f64::consts::TAU / period);
        for y in 0..size {
            for x in 0..size {
                let v = amp * (kx * x as f64 + ky * y as f64 + phase).sin();
                for c in 0..3 {
                    img[(c * size + y) * size + x] += tint[c] * v;
                }
            }
        }
    }
    for _ in 0..4 {
        let w = rng.random_range(size / 8..=size / 2).max(1);
        let h = rng.random_range(size / 8..=size / 2).max(1);
        let x0 = rng.random_range(0..size.saturating_sub(w).max(1));
        let y0 = rng.random_range(0..size.saturating_sub(h).max(1));
        let colour: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        for y in y0..(y0 + h).min(size) {
            for x in x0..(x0 + w).min(size) {
                for c in 0..3 {
                    img[(c * size + y) * size + x] = colour[c];
                }
            }
        }
    }
    for v in &mut img {
        *v = v.clamp(0.0, 1.0);
    }
    Tensor::new(vec![3, size, size], img).expect("synthetic image shape")
}

/// Keys cubic convolution kernel with parameter `a`.
pub fn cubic(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

/// Sparse resampling matrix along one axis: `(input index, weight)` taps per
/// output sample. Downscaling stretches the kernel by the scale factor.
fn resample_taps(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = output as f64 / input as f64;
    let stretch = if ratio < 1.0 { 1.0 / ratio } else { 1.0 };
    let support = 2.0 * stretch;
    (0..output)
        .map(|i| {
            let centre = (i as f64 + 0.5) / ratio - 0.5;
            let lo = (centre - support).floor() as isize;
            let hi = (centre + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for j in lo..=hi {
                let w = cubic((centre - j as f64) / stretch, BICUBIC_A) / stretch;
                if w == 0.0 {
                    continue;
                }
                total += w;
                let src = reflect(j, input);
                match taps.iter_mut().find(|(s, _)| *s == src) {
                    Some(t) => t.1 += w,
                    None => taps.push((src, w)),
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

fn resize(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = chw(img)?;
    let rows = resample_taps(h, out_h);
    let cols = resample_taps(w, out_w);
    let src = img.data();
    let mut tmp = vec![0.0; c * h * out_w];
    for ch in 0..c {
        for y in 0..h {
            let row = &src[(ch * h + y) * w..(ch * h + y + 1) * w];
            for (x, taps) in cols.iter().enumerate() {
                tmp[(ch * h + y) * out_w + x] = taps.iter().map(|&(j, wt)| row[j] * wt).sum();
            }
        }
    }
    let mut out = vec![0.0; c * out_h * out_w];
    for ch in 0..c {
        for (y, taps) in rows.iter().enumerate() {
            let dst = &mut out[(ch * out_h + y) * out_w..(ch * out_h + y + 1) * out_w];
            for &(j, wt) in taps {
                let srow = &tmp[(ch * h + j) * out_w..(ch * h + j + 1) * out_w];
                for (d, s) in dst.iter_mut().zip(srow) {
                    *d += wt * s;
                }
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Separable bicubic antialiased downscaling by `s` with symmetric boundaries.
pub fn downsample_bicubic(hr: &Tensor, s: usize) -> Result<Tensor> {
    let (_, h, w) = chw(hr)?;
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::Shape(format!("{h}x{w} image is not divisible by scale {s}")));
    }
    resize(hr, h / s, w / s)
}

/// Bicubic interpolation by `s`, the baseline predictor.
pub fn upsample_bicubic(lr: &Tensor, s: usize) -> Result<Tensor> {
    let (_, h, w) = chw(lr)?;
    if s == 0 {
        return Err(Error::Range("scale must be positive".into()));
    }
    resize(lr, h * s, w * s)
}

/// Luma (BT.601) of an RGB image, or the single channel of a gray one.
fn luma(img: &Tensor) -> Result<Vec<f64>> {
    let (c, h, w) = chw(img)?;
    let d = img.data();
    let n = h * w;
    match c {
        1 => Ok(d.to_vec()),
        3 => Ok((0..n)
            .map(|i| 0.299 * d[i] + 0.587 * d[n + i] + 0.114 * d[2 * n + i])
            .collect()),
        _ => Err(Error::Shape(format!("PSNR needs 1 or 3 channels, got {c}"))),
    }
}

/// Luma PSNR between two images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("PSNR of {:?} against {:?}", a.shape(), b.shape())));
    }
    let ya = luma(a)?;
    let yb = luma(b)?;
    let mse = ya.iter().zip(&yb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / ya.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Mean per-image PSNR over `(B, C, H, W)` batches.
pub fn psnr_batch(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("PSNR of {:?} against {:?}", a.shape(), b.shape())));
    }
    let [n, ..] = a.dims4()?;
    let mut total = 0.0;
    for i in 0..n {
        total += psnr(&a.batch_item(i)?, &b.batch_item(i)?)?;
    }
    Ok(total / n as f64)
}

/// Mean PSNR of bicubic upsampling over `pairs`.
pub fn bicubic_baseline_psnr(pairs: &[ImagePair], scale: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Data("no images to evaluate".into()));
    }
    let mut total = 0.0;
    for p in pairs {
        total += psnr(&upsample_bicubic(&p.lr, scale)?, &p.hr)?;
    }
    Ok(total / pairs.len() as f64)
}

/// A training mini-batch: `lr` is `(B, 3, p, p)`, `hr` is `(B, 3, s·p, s·p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub lr: Tensor,
    pub hr: Tensor,
}

fn crop(img: &Tensor, y0: usize, x0: usize, size: usize) -> Result<Tensor> {
    let (c, h, w) = chw(img)?;
    if y0 + size > h || x0 + size > w {
        return Err(Error::Range(format!("{size}px crop at ({y0},{x0}) exceeds {h}x{w}")));
    }
    let d = img.data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for y in y0..y0 + size {
            let start = (ch * h + y) * w + x0;
            out.extend_from_slice(&d[start..start + size]);
        }
    }
    Tensor::new(vec![c, size, size], out)
}

/// Aligned LR/HR patch pair with the HR origin at `scale` times the LR origin.
pub fn crop_pair(pair: &ImagePair, patch: usize, y0: usize, x0: usize, scale: usize) -> Result<ImagePair> {
    Ok(ImagePair {
        lr: crop(&pair.lr, y0, x0, patch)?,
        hr: crop(&pair.hr, y0 * scale, x0 * scale, patch * scale)?,
        provenance: pair.provenance.clone(),
    })
}

/// Draws `count` aligned patch pairs at seeded positions, optionally with a
/// random dihedral transform each.
pub fn extract_patches(
    pairs: &[ImagePair],
    patch: usize,
    count: usize,
    scale: usize,
    rng: &mut ChaCha8Rng,
    augment_patches: bool,
) -> Result<Batch> {
    if pairs.is_empty() {
        return Err(Error::Data("no images to sample patches from".into()));
    }
    if count == 0 || patch == 0 {
        return Err(Error::Range("patch size and count must be positive".into()));
    }
    let mut lrs = Vec::with_capacity(count);
    let mut hrs = Vec::with_capacity(count);
    for _ in 0..count {
        let pair = &pairs[rng.random_range(0..pairs.len())];
        let (_, h, w) = chw(&pair.lr)?;
        if patch > h || patch > w {
            return Err(Error::Range(format!("{patch}px patch exceeds {h}x{w} LR image")));
        }
        let y0 = rng.random_range(0..=h - patch);
        let x0 = rng.random_range(0..=w - patch);
        let mut p = crop_pair(pair, patch, y0, x0, scale)?;
        if augment_patches {
            let t = Dihedral::random(rng);
            p = augment(&p, t)?;
        }
        lrs.push(p.lr);
        hrs.push(p.hr);
    }
    Ok(Batch {
        lr: Tensor::stack(&lrs)?,
        hr: Tensor::stack(&hrs)?,
    })
}

/// One of the eight symmetries of the square: `rotations` quarter turns
/// counter-clockwise, then an optional horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub rotations: u8,
    pub flip: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        rotations: 0,
        flip: false,
    };

    pub fn all() -> [Dihedral; 8] {
        std::array::from_fn(|i| Dihedral {
            rotations: (i % 4) as u8,
            flip: i >= 4,
        })
    }

    pub fn index(self) -> usize {
        self.rotations as usize % 4 + if self.flip { 4 } else { 0 }
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        Self::all()[rng.random_range(0..8)]
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::random(&mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Applies `t` to one image.
pub fn transform(img: &Tensor, t: Dihedral) -> Result<Tensor> {
    let (c, h, w) = chw(img)?;
    let rot = t.rotations % 4;
    if rot % 2 == 1 && h != w {
        return Err(Error::Shape(format!("cannot rotate a non-square {h}x{w} image")));
    }
    let d = img.data();
    let mut out = vec![0.0; d.len()];
    let (oh, ow) = if rot % 2 == 1 { (w, h) } else { (h, w) };
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let xs = if t.flip { ow - 1 - x } else { x };
                let (sy, sx) = match rot {
                    0 => (y, xs),
                    1 => (xs, w - 1 - y),
                    2 => (h - 1 - y, w - 1 - xs),
                    _ => (h - 1 - xs, y),
                };
                out[(ch * oh + y) * ow + x] = d[(ch * h + sy) * w + sx];
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Applies the same transform to both images of a pair.
pub fn augment(pair: &ImagePair, t: Dihedral) -> Result<ImagePair> {
    Ok(ImagePair {
        hr: transform(&pair.hr, t)?,
        lr: transform(&pair.lr, t)?,
        provenance: pair.provenance.clone(),
    })
}

fn pnm_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PNM header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Decodes an 8-bit binary PGM (`P5`) or PPM (`P6`) into `(C, H, W)`.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let channels = match pnm_token(bytes, &mut pos)?.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported PNM magic {other:?}"))),
    };
    let mut number = |what: &str| -> Result<usize> {
        pnm_token(bytes, &mut pos)?
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PNM {what}")))
    };
    let w = number("width")?;
    let h = number("height")?;
    let maxval = number("maxval")?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PNM geometry {w}x{h} max {maxval}")));
    }
    pos += 1;
    let n = w * h * channels;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::Format("PNM raster is truncated".into()))?;
    let mut data = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                data[(c * h + y) * w + x] = raster[(y * w + x) * channels + c] as f64 / maxval as f64;
            }
        }
    }
    Tensor::new(vec![channels, h, w], data)
}

/// Encodes a 1- or 3-channel image in `[0, 1]` as binary PNM.
pub fn encode_pnm(img: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = chw(img)?;
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::Shape(format!("PNM stores 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let d = img.data();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push((d[(ch * h + y) * w + x].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn load_pnm(path: &Path) -> Result<Tensor> {
    decode_pnm(&fs::read(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn store_pnm(path: &Path, img: &Tensor) -> Result<()> {
    fs::write(path, encode_pnm(img)?)?;
    Ok(())
}

/// Where images come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic(u64),
    Dir(PathBuf),
}

impl std::str::FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(seed) = s.strip_prefix("synthetic:") {
            let seed = seed
                .parse()
                .map_err(|_| Error::Config(format!("bad synthetic seed in {s:?}")))?;
            Ok(DataSource::Synthetic(seed))
        } else if let Some(dir) = s.strip_prefix("dir:") {
            Ok(DataSource::Dir(PathBuf::from(dir)))
        } else {
            Err(Error::Config(format!("data source {s:?} is neither synthetic:<seed> nor dir:<path>")))
        }
    }
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSource::Synthetic(seed) => write!(f, "synthetic:{seed}"),
            DataSource::Dir(p) => write!(f, "dir:{}", p.display()),
        }
    }
}

/// Optional `manifest.json` in a dataset directory; paths are relative to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    #[serde(default)]
    pub scale: Option<usize>,
}

/// Synthetic image counts and size.
#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub train: usize,
    pub val: usize,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<ImagePair>,
    pub val: Vec<ImagePair>,
}

fn crop_to_multiple(img: Tensor, s: usize) -> Result<Tensor> {
    let (c, h, w) = chw(&img)?;
    let (nh, nw) = (h - h % s, w - w % s);
    if nh == 0 || nw == 0 {
        return Err(Error::Data(format!("{h}x{w} image is smaller than scale {s}")));
    }
    if (nh, nw) == (h, w) {
        return Tensor::new(vec![c, h, w], img.into_data());
    }
    let d = img.data();
    let mut out = Vec::with_capacity(c * nh * nw);
    for ch in 0..c {
        for y in 0..nh {
            let start = (ch * h + y) * w;
            out.extend_from_slice(&d[start..start + nw]);
        }
    }
    Tensor::new(vec![c, nh, nw], out)
}

fn load_pairs(dir: &Path, files: &[PathBuf], scale: usize) -> Result<Vec<ImagePair>> {
    files
        .iter()
        .map(|f| {
            let img = load_pnm(f)?;
            let (c, ..) = chw(&img)?;
            if c != 3 {
                return Err(Error::Data(format!("{} is not an RGB image", f.display())));
            }
            let hr = crop_to_multiple(img, scale)?;
            let rel = f.strip_prefix(dir).unwrap_or(f);
            ImagePair::from_hr(hr, scale, rel.display().to_string())
        })
        .collect()
}

/// Loads a dataset. Directory sources read `hr/*.ppm` (every tenth sorted
/// file goes to validation) unless a `manifest.json` lists the split.
pub fn load_dataset(source: &DataSource, scale: usize, synth: SynthSpec) -> Result<Dataset> {
    match source {
        DataSource::Synthetic(seed) => {
            let make = |count: usize, stream: u64, tag: &str| -> Result<Vec<ImagePair>> {
                synth_generate(count, synth.size, seed.wrapping_mul(2).wrapping_add(stream))
                    .into_iter()
                    .enumerate()
                    .map(|(i, hr)| ImagePair::from_hr(hr, scale, format!("synthetic:{seed}:{tag}{i}")))
                    .collect()
            };
            if synth.size % scale != 0 {
                return Err(Error::Config(format!(
                    "synthetic size {} is not divisible by scale {scale}",
                    synth.size
                )));
            }
            Ok(Dataset {
                train: make(synth.train, 0, "train")?,
                val: make(synth.val, 1, "val")?,
            })
        }
        DataSource::Dir(dir) => {
            if !dir.is_dir() {
                return Err(Error::Config(format!("data directory {} does not exist", dir.display())));
            }
            let manifest = dir.join("manifest.json");
            let (train, val) = if manifest.is_file() {
                let m: DatasetManifest = serde_json::from_str(&fs::read_to_string(&manifest)?)?;
                if let Some(s) = m.scale {
                    if s != scale {
                        return Err(Error::Config(format!("manifest scale {s} differs from {scale}")));
                    }
                }
                let abs = |v: &[String]| v.iter().map(|p| dir.join(p)).collect::<Vec<_>>();
                (abs(&m.train), abs(&m.val))
            } else {
                let hr = dir.join("hr");
                let mut files: Vec<PathBuf> = fs::read_dir(&hr)
                    .map_err(|e| Error::Config(format!("cannot list {}: {e}", hr.display())))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
                    .collect();
                files.sort();
                let (mut train, mut val) = (Vec::new(), Vec::new());
                for (i, f) in files.into_iter().enumerate() {
                    if i % 10 == 9 {
                        val.push(f);
                    } else {
                        train.push(f);
                    }
                }
                if val.is_empty() && !train.is_empty() {
                    val.push(train.pop().expect("non-empty"));
                }
                (train, val)
            };
            if train.is_empty() {
                return Err(Error::Data(format!("no training images under {}", dir.display())));
            }
            Ok(Dataset {
                train: load_pairs(dir, &train, scale)?,
                val: load_pairs(dir, &val, scale)?,
            })
        }
    }
}
