//! Single-channel `f32` image used by the detectors.

use rayon::prelude::*;

use crate::raster::GeoRaster;

#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    /// First band scaled from `[0, 255]` to `[0, 1]`.
    pub fn from_raster(r: &GeoRaster) -> Self {
        Self {
            width: r.width(),
            height: r.height(),
            data: r.band(0).iter().map(|v| v / 255.0).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn at(&self, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample with edge replication; integer coordinates hit pixel centers.
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (xi, yi) = (x0 as isize, y0 as isize);
        let top = self.at(xi, yi) * (1.0 - fx) + self.at(xi + 1, yi) * fx;
        let bottom = self.at(xi, yi + 1) * (1.0 - fx) + self.at(xi + 1, yi + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| *v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn gaussian_blur(&self, sigma: f32) -> Self {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let tmp = convolve_rows(self, &kernel);
        convolve_cols(&tmp, &kernel)
    }

    /// Anti-aliasing blur along x only.
    pub fn gaussian_blur_x(&self, sigma: f32) -> Self {
        if sigma <= 0.0 {
            return self.clone();
        }
        convolve_rows(self, &gaussian_kernel(sigma))
    }

    /// Every second pixel in both directions.
    pub fn downsample_half(&self) -> Self {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        Self::from_fn(w, h, |x, y| {
            self.get((2 * x).min(self.width - 1), (2 * y).min(self.height - 1))
        })
    }

    /// Area-consistent bilinear resize (pixel centers preserved).
    pub fn resize(&self, width: usize, height: usize) -> Self {
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let rows: Vec<Vec<f32>> = (0..height)
            .into_par_iter()
            .map(|y| {
                let fy = (y as f32 + 0.5) * sy - 0.5;
                (0..width)
                    .map(|x| self.sample((x as f32 + 0.5) * sx - 0.5, fy))
                    .collect()
            })
            .collect();
        Self {
            width,
            height,
            data: rows.concat(),
        }
    }

    /// Central-difference gradients with edge replication.
    pub fn gradients(&self) -> (Self, Self) {
        let gx = Self::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as isize, y as isize);
            0.5 * (self.at(x + 1, y) - self.at(x - 1, y))
        });
        let gy = Self::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as isize, y as isize);
            0.5 * (self.at(x, y + 1) - self.at(x, y - 1))
        });
        (gx, gy)
    }
}

pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-((i * i) as f32) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn convolve_rows(img: &FloatImage, kernel: &[f32]) -> FloatImage {
    let r = (kernel.len() / 2) as isize;
    let w = img.width;
    let rows: Vec<Vec<f32>> = (0..img.height)
        .into_par_iter()
        .map(|y| {
            let row = &img.data[y * w..(y + 1) * w];
            (0..w as isize)
                .map(|x| {
                    let mut acc = 0.0;
                    for (k, kv) in kernel.iter().enumerate() {
                        let xx = (x + k as isize - r).clamp(0, w as isize - 1) as usize;
                        acc += kv * row[xx];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    FloatImage {
        width: w,
        height: img.height,
        data: rows.concat(),
    }
}

fn convolve_cols(img: &FloatImage, kernel: &[f32]) -> FloatImage {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width, img.height);
    let rows: Vec<Vec<f32>> = (0..h as isize)
        .into_par_iter()
        .map(|y| {
            let mut out = vec![0.0f32; w];
            for (k, kv) in kernel.iter().enumerate() {
                let yy = (y + k as isize - r).clamp(0, h as isize - 1) as usize;
                let src = &img.data[yy * w..(yy + 1) * w];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += kv * s;
                }
            }
            out
        })
        .collect();
    FloatImage {
        width: w,
        height: h,
        data: rows.concat(),
    }
}
