use std::collections::VecDeque;

use crate::raster::Raster;

pub const BLUR_SIGMA: f64 = 1.4;
pub const LOW_THRESHOLD: f64 = 0.1;
pub const HIGH_THRESHOLD: f64 = 0.2;

/// Binary edge raster (1 = edge).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub edges: Raster,
}

impl EdgeMap {
    pub fn count(&self) -> usize {
        self.edges.data().iter().filter(|&&v| v > 0.0).count()
    }
}

fn luminance(image: &Raster) -> Vec<f64> {
    let n = image.pixel_count();
    let mut out = Vec::with_capacity(n);
    for y in 0..image.height() {
        for x in 0..image.width() {
            let p = image.pixel(x, y);
            out.push(if image.channels() >= 3 {
                0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
            } else {
                p[0]
            });
        }
    }
    out
}

/// 2D convolution with clamp-to-edge borders.
fn convolve(src: &[f64], w: usize, h: usize, kernel: &[f64], ksize: usize) -> Vec<f64> {
    let r = (ksize / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in -r..=r {
                let sy = (y + ky).clamp(0, h as isize - 1) as usize;
                for kx in -r..=r {
                    let sx = (x + kx).clamp(0, w as isize - 1) as usize;
                    acc += kernel[((ky + r) as usize) * ksize + (kx + r) as usize] * src[sy * w + sx];
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    out
}

fn gaussian_kernel_5x5(sigma: f64) -> Vec<f64> {
    let mut k = Vec::with_capacity(25);
    for y in -2i32..=2 {
        for x in -2i32..=2 {
            k.push((-((x * x + y * y) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let s: f64 = k.iter().sum();
    k.iter().map(|v| v / s).collect()
}

const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];

/// Canny edges: luminance, 5×5 Gaussian blur (σ = 1.4), Sobel gradients,
/// non-maximum suppression over four directions, double threshold at 0.1
/// and 0.2 of the peak magnitude, and 8-connected hysteresis.
pub fn canny_edges(image: &Raster) -> EdgeMap {
    let (w, h) = (image.width(), image.height());
    let gray = luminance(image);
    let blurred = convolve(&gray, w, h, &gaussian_kernel_5x5(BLUR_SIGMA), 5);
    let gx = convolve(&blurred, w, h, &SOBEL_X, 3);
    let gy = convolve(&blurred, w, h, &SOBEL_Y, 3);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    let mut edges = Raster::new(w, h, 1);
    // rounding in the blur leaves gradients of order 1e-17 on flat images;
    // the floor is relative so scaling the image does not move it
    let level = gray.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak <= 1e-9 * level || peak == 0.0 {
        return EdgeMap { edges };
    }
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            let behind = at(xi - dx, yi - dy);
            let ahead = at(xi + dx, yi + dy);
            // asymmetric test keeps exactly one of two equal maxima
            if m >= behind && m > ahead {
                thin[i] = m;
            }
        }
    }
    let (low, high) = (LOW_THRESHOLD * peak, HIGH_THRESHOLD * peak);
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high {
            edges.data_mut()[i] = 1.0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if edges.data()[j] == 0.0 && thin[j] >= low {
                    edges.data_mut()[j] = 1.0;
                    queue.push_back(j);
                }
            }
        }
    }
    EdgeMap { edges }
}
