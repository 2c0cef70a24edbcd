//! Circle-downsampling demo: a thin circle shrunk by linear interpolation
//! either in one pass or by repeated halving.

use ndarray::Array2;

use crate::scene::{halving_schedule, linear_interp_time, SceneError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DownsampleMode {
    Direct,
    Iterative,
}

/// `size x size` 0/1 image of a one-pixel-thick circle whose diameter spans
/// the frame.
pub fn circle_image(size: usize) -> Array2<f64> {
    let mut img = Array2::zeros((size, size));
    if size == 0 {
        return img;
    }
    let c = (size as f64 - 1.0) / 2.0;
    let r = c;
    // dense angular sampling marks every pixel the curve passes through
    let n = (16.0 * r).ceil().max(8.0) as usize;
    for k in 0..n {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let (y, x) = ((c + r * th.sin()).round(), (c + r * th.cos()).round());
        if (0.0..size as f64).contains(&y) && (0.0..size as f64).contains(&x) {
            img[[y as usize, x as usize]] = 1.0;
        }
    }
    img
}

fn resize_axis0(img: &Array2<f64>, target: usize, mode: DownsampleMode) -> Result<Array2<f64>, SceneError> {
    match mode {
        DownsampleMode::Direct => linear_interp_time(img.view(), target),
        DownsampleMode::Iterative => {
            let mut cur = img.clone();
            for size in halving_schedule(img.nrows(), target) {
                cur = linear_interp_time(cur.view(), size)?;
            }
            if cur.nrows() != target {
                cur = linear_interp_time(cur.view(), target)?;
            }
            Ok(cur)
        }
    }
}

/// Resizes both axes to `target` with the time-axis interpolation.
pub fn downsample_image(img: &Array2<f64>, target: usize, mode: DownsampleMode) -> Result<Array2<f64>, SceneError> {
    let rows = resize_axis0(img, target, mode)?;
    let cols = resize_axis0(&rows.t().to_owned(), target, mode)?;
    Ok(cols.t().as_standard_layout().to_owned())
}

pub fn nonzero_count(img: &Array2<f64>, threshold: f64) -> usize {
    img.iter().filter(|&&v| v > threshold).count()
}

/// Binary PGM (P5), values clamped to [0, 1] and scaled to 0..=255.
pub fn to_pgm(img: &Array2<f64>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.ncols(), img.nrows()).into_bytes();
    out.extend(img.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}
