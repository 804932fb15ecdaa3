use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::render::sigmoid;

use super::model::prediction_level;
use super::{afp_blend, self_attention, AfpContext, BlockFeatures, Condition, NoiseSchedule, ScoreModel};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"TAUW";
pub const WEIGHTS_VERSION: u32 = 1;
pub const HIDDEN: usize = 8;
pub const TEXT_DIM: usize = 4;
/// latent (3), mask, edge, depth, validity, text, two noise-level features
pub const FEATURES: usize = 3 + 4 + TEXT_DIM + 2;
pub const POOL: usize = 4;
const CHANNELS: usize = 3;

/// Fixed weights of [`TinyAttentionUnet`], stored in a fixed tensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyUnetWeights {
    pub w_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub wq: DMatrix<f64>,
    pub wk: DMatrix<f64>,
    pub wv: DMatrix<f64>,
    pub wo: DMatrix<f64>,
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
}

fn shapes() -> [(usize, usize); 8] {
    [
        (HIDDEN, FEATURES),
        (HIDDEN, 1),
        (HIDDEN, HIDDEN),
        (HIDDEN, HIDDEN),
        (HIDDEN, HIDDEN),
        (HIDDEN, HIDDEN),
        (CHANNELS, HIDDEN),
        (CHANNELS, 1),
    ]
}

impl TinyUnetWeights {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |rows: usize, cols: usize, std: f64| {
            let n = Normal::new(0.0, std).expect("positive std");
            DMatrix::from_fn(rows, cols, |_, _| n.sample(&mut rng))
        };
        let w_in = gen(HIDDEN, FEATURES, 1.0 / (FEATURES as f64).sqrt());
        let wq = gen(HIDDEN, HIDDEN, 1.0);
        let wk = gen(HIDDEN, HIDDEN, 1.0);
        let wv = gen(HIDDEN, HIDDEN, 1.0 / (HIDDEN as f64).sqrt());
        let wo = gen(HIDDEN, HIDDEN, 2.0 / (HIDDEN as f64).sqrt());
        let w_out = gen(CHANNELS, HIDDEN, 1.0 / (HIDDEN as f64).sqrt());
        Self {
            w_in,
            b_in: DVector::zeros(HIDDEN),
            wq,
            wk,
            wv,
            wo,
            w_out,
            b_out: DVector::zeros(CHANNELS),
        }
    }

    fn tensors(&self) -> [&[f64]; 8] {
        [
            self.w_in.as_slice(),
            self.b_in.as_slice(),
            self.wq.as_slice(),
            self.wk.as_slice(),
            self.wv.as_slice(),
            self.wo.as_slice(),
            self.w_out.as_slice(),
            self.b_out.as_slice(),
        ]
    }

    /// Header (magic, version, tensor count, reserved) then per tensor its
    /// rank, dims and row-major little-endian f32 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(shapes().len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for ((rows, cols), data) in shapes().into_iter().zip(self.tensors()) {
            let dims: Vec<usize> = if cols == 1 { vec![rows] } else { vec![rows, cols] };
            out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for d in &dims {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            // nalgebra storage is column-major
            for r in 0..rows {
                for c in 0..cols {
                    out.extend_from_slice(&(data[c * rows + r] as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], label: &str) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            file: label.to_string(),
            line: 0,
            message,
        };
        let mut pos = 0usize;
        let mut word = || -> Result<u32> {
            let b = bytes
                .get(pos..pos + 4)
                .ok_or_else(|| bad(format!("truncated at byte {pos}")))?;
            pos += 4;
            Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        };
        if bytes.len() < 16 || bytes[..4] != WEIGHTS_MAGIC {
            return Err(bad("not a weights file (bad magic)".into()));
        }
        word()?;
        let version = word()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Unsupported(format!("{label}: weights version {version}")));
        }
        let count = word()? as usize;
        word()?;
        if count != shapes().len() {
            return Err(bad(format!("expected {} tensors, found {count}", shapes().len())));
        }
        let mut mats = Vec::with_capacity(count);
        for (i, (rows, cols)) in shapes().into_iter().enumerate() {
            let rank = word()? as usize;
            let dims: Vec<usize> = (0..rank).map(|_| word().map(|d| d as usize)).collect::<Result<_>>()?;
            let expected: Vec<usize> = if cols == 1 { vec![rows] } else { vec![rows, cols] };
            if dims != expected {
                return Err(bad(format!("tensor {i} has shape {dims:?}, expected {expected:?}")));
            }
            let mut m = DMatrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    let v = f32::from_bits(word()?) as f64;
                    if !v.is_finite() {
                        return Err(bad(format!("tensor {i} has a non-finite value")));
                    }
                    m[(r, c)] = v;
                }
            }
            mats.push(m);
        }
        if pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
        }
        let col = |m: &DMatrix<f64>| DVector::from_column_slice(m.as_slice());
        Ok(Self {
            w_in: mats[0].clone(),
            b_in: col(&mats[1]),
            wq: mats[2].clone(),
            wk: mats[3].clone(),
            wv: mats[4].clone(),
            wo: mats[5].clone(),
            w_out: mats[6].clone(),
            b_out: col(&mats[7]),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Deterministic embedding of a prompt handle.
pub fn text_embedding(text: &str) -> [f64; TEXT_DIM] {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = [0.0; TEXT_DIM];
    for v in &mut out {
        *v = n.sample(&mut rng);
    }
    out
}

/// Small x0-predicting network: per-pixel input layer, one self-attention
/// block over 4×4-pooled tokens with a nearest-upsampled residual, and a
/// sigmoid output head. The noise estimate follows from the x0 estimate,
/// so predictions stay in (0, 1) at every noise level.
#[derive(Debug, Clone)]
pub struct TinyAttentionUnet {
    pub weights: TinyUnetWeights,
    pub schedule: NoiseSchedule,
}

impl TinyAttentionUnet {
    pub fn new(weights: TinyUnetWeights, schedule: NoiseSchedule) -> Self {
        Self { weights, schedule }
    }

    fn input_features(&self, latent: &Raster, t: usize, cond: &Condition) -> DMatrix<f64> {
        let (w, h) = (latent.width(), latent.height());
        let a = prediction_level(&self.schedule, t);
        let text = text_embedding(&cond.text.0);
        let depth_mean = cond.depth_map.as_ref().map(|d| {
            let (s, n) = d
                .data()
                .iter()
                .filter(|v| **v > 0.0)
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 { 1.0 } else { s / n as f64 }
        });
        let mut f = DMatrix::zeros(w * h, FEATURES);
        for y in 0..h {
            for x in 0..w {
                let row = y * w + x;
                let valid = cond.validity.as_ref().map_or(1.0, |v| v.get(x, y, 0));
                let px = latent.pixel(x, y);
                let mut vals = [0.0; FEATURES];
                vals[..3].copy_from_slice(&px[..3]);
                vals[3] = cond.mask.get(x, y, 0);
                vals[4] = cond
                    .edge_map
                    .as_ref()
                    .map_or(0.0, |e| cond.cond_scale_texture * e.edges.get(x, y, 0) * valid);
                vals[5] = match (&cond.depth_map, depth_mean) {
                    (Some(d), Some(m)) if d.get(x, y, 0) > 0.0 => {
                        cond.cond_scale_depth * (d.get(x, y, 0) / m - 1.0) * valid
                    }
                    _ => 0.0,
                };
                vals[6] = valid;
                vals[7..7 + TEXT_DIM].copy_from_slice(&text);
                vals[7 + TEXT_DIM] = a.sqrt();
                vals[8 + TEXT_DIM] = (1.0 - a).sqrt();
                for (c, v) in vals.iter().enumerate() {
                    f[(row, c)] = *v;
                }
            }
        }
        f
    }

    fn forward(
        &self,
        latent: &Raster,
        t: usize,
        cond: &Condition,
        afp: Option<&AfpContext>,
    ) -> Result<(Raster, BlockFeatures)> {
        if latent.channels() != CHANNELS {
            return Err(Error::Dimension(format!(
                "tiny attention model expects {CHANNELS} channels, got {}",
                latent.channels()
            )));
        }
        if t > self.schedule.timesteps() {
            return Err(Error::Invalid(format!("timestep {t} beyond schedule")));
        }
        let (w, h) = (latent.width(), latent.height());
        cond.validate(w, h)?;
        let wt = &self.weights;
        let feats = self.input_features(latent, t, cond);
        let mut hidden = feats * wt.w_in.transpose();
        for mut row in hidden.row_iter_mut() {
            row += wt.b_in.transpose();
            row.apply(|v| *v = v.tanh());
        }
        let (tw, th) = (w.div_ceil(POOL), h.div_ceil(POOL));
        let token_of = |x: usize, y: usize| (y / POOL) * tw + x / POOL;
        let mut tokens = DMatrix::zeros(tw * th, HIDDEN);
        let mut counts = vec![0usize; tw * th];
        for y in 0..h {
            for x in 0..w {
                let k = token_of(x, y);
                counts[k] += 1;
                for c in 0..HIDDEN {
                    tokens[(k, c)] += hidden[(y * w + x, c)];
                }
            }
        }
        for (k, n) in counts.iter().enumerate() {
            for c in 0..HIDDEN {
                tokens[(k, c)] /= *n as f64;
            }
        }
        let q = &tokens * &wt.wq;
        let k = &tokens * &wt.wk;
        let v = &tokens * &wt.wv;
        let mut attended = match afp {
            Some(ctx) => afp_blend(&q, &k, &v, ctx, 0)?,
            None => self_attention(&q, &k, &v, HIDDEN)?,
        };
        if let Some(hook) = afp.and_then(|c| c.clip_image_hook) {
            hook(&mut attended);
        }
        let up = attended * &wt.wo;
        let a = prediction_level(&self.schedule, t);
        let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
        let mut eps = Raster::new(w, h, CHANNELS);
        for y in 0..h {
            for x in 0..w {
                let tok = token_of(x, y);
                let row = y * w + x;
                for ch in 0..CHANNELS {
                    let mut z = wt.b_out[ch];
                    for c in 0..HIDDEN {
                        z += wt.w_out[(ch, c)] * (hidden[(row, c)] + up[(tok, c)]);
                    }
                    let x0 = sigmoid(z);
                    eps.set(x, y, ch, (latent.get(x, y, ch) - sa * x0) / sn);
                }
            }
        }
        Ok((eps, BlockFeatures { keys: k, values: v }))
    }
}

impl ScoreModel for TinyAttentionUnet {
    fn predict_noise(
        &self,
        latent: &Raster,
        t: usize,
        cond: &Condition,
        afp: Option<&AfpContext>,
    ) -> Result<Raster> {
        Ok(self.forward(latent, t, cond, afp)?.0)
    }

    fn predict_noise_capturing(
        &self,
        latent: &Raster,
        t: usize,
        cond: &Condition,
    ) -> Result<(Raster, Vec<BlockFeatures>)> {
        let (eps, feats) = self.forward(latent, t, cond, None)?;
        Ok((eps, vec![feats]))
    }

    fn attention_blocks(&self) -> usize {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip_through_bytes() {
        let w = TinyUnetWeights::seeded(5);
        let bytes = w.to_bytes();
        assert_eq!(&bytes[..4], b"TAUW");
        let back = TinyUnetWeights::from_bytes(&bytes, "mem").unwrap();
        // values pass through f32
        assert!((back.w_in.clone() - w.w_in.clone()).amax() < 1e-6);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let bytes = TinyUnetWeights::seeded(5).to_bytes();
        assert!(TinyUnetWeights::from_bytes(&bytes[..bytes.len() - 1], "t").is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TinyUnetWeights::from_bytes(&bad, "t").is_err());
        let mut newer = bytes.clone();
        newer[4] = 2;
        assert!(matches!(TinyUnetWeights::from_bytes(&newer, "t"), Err(Error::Unsupported(_))));
    }

    #[test]
    fn text_embedding_is_deterministic() {
        assert_eq!(text_embedding("a red chair"), text_embedding("a red chair"));
        assert_ne!(text_embedding("a red chair"), text_embedding("a blue chair"));
    }
}
