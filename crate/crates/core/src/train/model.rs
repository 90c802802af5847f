//! Two-layer convolutional segmenter with hand-written backpropagation.
//!
//! `conv 5x5 (1 -> 8) -> ReLU -> conv 1x1 (8 -> 1) -> logistic`, with
//! reflect padding so the output has the input's size.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{reflect_index, GrayImage};

pub const N_FILTERS: usize = 8;
pub const KERNEL: usize = 5;
const HALF: isize = (KERNEL / 2) as isize;

const W1: usize = 0;
const B1: usize = W1 + N_FILTERS * KERNEL * KERNEL;
const W2: usize = B1 + N_FILTERS;
const B2: usize = W2 + N_FILTERS;
pub const N_PARAMS: usize = B2 + 1;

const MAGIC: &[u8; 4] = b"TSEG";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TinySegmenter {
    params: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    width: usize,
    height: usize,
    /// Reflect-padded input, `(w + 4) x (h + 4)`.
    padded: Vec<f64>,
    /// Pre-activations of the first layer, channel-major.
    z1: Vec<f64>,
    pub output: GrayImage,
}

impl TinySegmenter {
    pub fn zeros() -> Self {
        TinySegmenter {
            params: vec![0.0; N_PARAMS],
        }
    }

    /// Every weight and bias uniform in `[-scale, scale]`.
    pub fn random(rng: &mut impl Rng, scale: f64) -> Self {
        TinySegmenter {
            params: (0..N_PARAMS).map(|_| rng.random_range(-scale..=scale)).collect(),
        }
    }

    pub fn from_params(params: Vec<f64>) -> Result<Self> {
        if params.len() != N_PARAMS {
            return Err(Error::invalid(format!("expected {N_PARAMS} parameters, got {}", params.len())));
        }
        Ok(TinySegmenter { params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn conv1_weight_index(filter: usize, ky: usize, kx: usize) -> usize {
        W1 + (filter * KERNEL + ky) * KERNEL + kx
    }

    pub fn forward(&self, img: &GrayImage) -> GrayImage {
        self.forward_pass(img).output
    }

    pub fn forward_pass(&self, img: &GrayImage) -> ForwardPass {
        let (w, h) = (img.width(), img.height());
        let pw = w + KERNEL - 1;
        let ph = h + KERNEL - 1;
        let mut padded = Vec::with_capacity(pw * ph);
        for py in 0..ph {
            let sy = reflect_index(py as isize - HALF, h);
            for px in 0..pw {
                padded.push(img.get(reflect_index(px as isize - HALF, w), sy));
            }
        }
        let p = &self.params;
        let n = w * h;
        let mut z1 = vec![0.0; N_FILTERS * n];
        let mut z2 = vec![p[B2]; n];
        for c in 0..N_FILTERS {
            let kernel = &p[W1 + c * KERNEL * KERNEL..W1 + (c + 1) * KERNEL * KERNEL];
            let plane = &mut z1[c * n..(c + 1) * n];
            for y in 0..h {
                for x in 0..w {
                    let mut s = p[B1 + c];
                    for ky in 0..KERNEL {
                        let row = &padded[(y + ky) * pw + x..(y + ky) * pw + x + KERNEL];
                        let krow = &kernel[ky * KERNEL..(ky + 1) * KERNEL];
                        s += row.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    plane[y * w + x] = s;
                    if s > 0.0 {
                        z2[y * w + x] += p[W2 + c] * s;
                    }
                }
            }
        }
        let out: Vec<f64> = z2.iter().map(|&z| logistic(z)).collect();
        ForwardPass {
            width: w,
            height: h,
            padded,
            z1,
            output: GrayImage::new(w, h, out).expect("finite activations"),
        }
    }

    /// Gradient of `sum(grad_f * f)` with respect to every parameter.
    pub fn backward(&self, img: &GrayImage, grad_f: &GrayImage) -> Result<Vec<f64>> {
        img.same_dims(grad_f)?;
        let pass = self.forward_pass(img);
        self.backward_pass(&pass, grad_f)
    }

    pub fn backward_pass(&self, pass: &ForwardPass, grad_f: &GrayImage) -> Result<Vec<f64>> {
        crate::grid::check_dims(pass.width, pass.height, grad_f.width(), grad_f.height())?;
        let (w, h) = (pass.width, pass.height);
        let pw = w + KERNEL - 1;
        let n = w * h;
        let p = &self.params;
        let mut g = vec![0.0; N_PARAMS];

        let dz2: Vec<f64> = pass
            .output
            .values()
            .iter()
            .zip(grad_f.values())
            .map(|(&o, &gf)| gf * o * (1.0 - o))
            .collect();
        g[B2] = dz2.iter().sum();

        for c in 0..N_FILTERS {
            let plane = &pass.z1[c * n..(c + 1) * n];
            let mut dw2 = 0.0;
            let mut db1 = 0.0;
            let mut dk = [0.0; KERNEL * KERNEL];
            for y in 0..h {
                for x in 0..w {
                    let z = plane[y * w + x];
                    if z <= 0.0 {
                        continue;
                    }
                    let d = dz2[y * w + x];
                    dw2 += d * z;
                    let dz1 = d * p[W2 + c];
                    db1 += dz1;
                    for ky in 0..KERNEL {
                        let row = &pass.padded[(y + ky) * pw + x..(y + ky) * pw + x + KERNEL];
                        for (kx, &a) in row.iter().enumerate() {
                            dk[ky * KERNEL + kx] += dz1 * a;
                        }
                    }
                }
            }
            g[W2 + c] = dw2;
            g[B1 + c] = db1;
            g[W1 + c * KERNEL * KERNEL..W1 + (c + 1) * KERNEL * KERNEL].copy_from_slice(&dk);
        }
        Ok(g)
    }

    /// Whether any first-layer pre-activation lies within `margin` of the
    /// ReLU kink.
    pub fn near_kink(pass: &ForwardPass, margin: f64) -> bool {
        pass.z1.iter().any(|z| z.abs() < margin)
    }

    /// 16-byte header (magic, version, filters, kernel, parameter count)
    /// followed by the parameters as little-endian `f64`.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(N_FILTERS as u16).to_le_bytes())?;
        out.write_all(&(KERNEL as u16).to_le_bytes())?;
        out.write_all(&(N_PARAMS as u32).to_le_bytes())?;
        for v in &self.params {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 16];
        input
            .read_exact(&mut header)
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if &header[0..4] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        let filters = u16::from_le_bytes(header[8..10].try_into().unwrap()) as usize;
        let kernel = u16::from_le_bytes(header[10..12].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        if version != VERSION || filters != N_FILTERS || kernel != KERNEL || count != N_PARAMS {
            return Err(Error::Checkpoint(format!(
                "unsupported layout v{version} {filters}x{kernel}x{kernel} ({count} params)"
            )));
        }
        let mut params = Vec::with_capacity(N_PARAMS);
        let mut buf = [0u8; 8];
        for _ in 0..N_PARAMS {
            input
                .read_exact(&mut buf)
                .map_err(|e| Error::Checkpoint(format!("parameters: {e}")))?;
            params.push(f64::from_le_bytes(buf));
        }
        Ok(TinySegmenter { params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(std::io::BufReader::new(file))
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
