//! Separable Gaussian filtering and bilinear resampling on planar buffers.

/// How samples outside the image are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Outside samples are zero. The filter is then its own adjoint.
    Zero,
    /// Outside samples repeat the nearest edge pixel. Constants stay constant.
    Replicate,
}

/// Normalized Gaussian taps for `sigma`, radius `ceil(3 sigma)`.
///
/// `sigma == 0` yields the identity kernel.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Blurs one `width x height` plane.
pub fn gaussian_blur(plane: &[f64], width: usize, height: usize, sigma: f64, border: Border) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return plane.to_vec();
    }
    let tmp = convolve_1d(plane, width, height, &kernel, border, true);
    convolve_1d(&tmp, width, height, &kernel, border, false)
}

/// Blurs each channel of an interleaved buffer.
pub fn gaussian_blur_interleaved(
    data: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    sigma: f64,
    border: Border,
) -> Vec<f64> {
    if channels == 1 {
        return gaussian_blur(data, width, height, sigma, border);
    }
    let mut out = vec![0.0; data.len()];
    for c in 0..channels {
        let plane: Vec<f64> = data.iter().skip(c).step_by(channels).copied().collect();
        let blurred = gaussian_blur(&plane, width, height, sigma, border);
        for (i, v) in blurred.into_iter().enumerate() {
            out[i * channels + c] = v;
        }
    }
    out
}

fn convolve_1d(src: &[f64], width: usize, height: usize, kernel: &[f64], border: Border, horizontal: bool) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let (len, lines) = if horizontal { (width, height) } else { (height, width) };
    let index = |line: usize, pos: usize| if horizontal { line * width + pos } else { pos * width + line };
    let mut out = vec![0.0; src.len()];
    for line in 0..lines {
        for pos in 0..len {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let p = pos as i64 + k as i64 - radius;
                let p = if (0..len as i64).contains(&p) {
                    p as usize
                } else {
                    match border {
                        Border::Zero => continue,
                        Border::Replicate => p.clamp(0, len as i64 - 1) as usize,
                    }
                };
                acc += w * src[index(line, p)];
            }
            out[index(line, pos)] = acc;
        }
    }
    out
}

/// Bilinear resampling with pixel-center alignment (edges clamp).
pub fn resize_bilinear(src: &[f64], width: usize, height: usize, new_width: usize, new_height: usize) -> Vec<f64> {
    if width == new_width && height == new_height {
        return src.to_vec();
    }
    let sx = width as f64 / new_width as f64;
    let sy = height as f64 / new_height as f64;
    let axis = |i: usize, scale: f64, n: usize| {
        let f = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, f - i0 as f64)
    };
    let mut out = Vec::with_capacity(new_width * new_height);
    for y in 0..new_height {
        let (y0, y1, fy) = axis(y, sy, height);
        for x in 0..new_width {
            let (x0, x1, fx) = axis(x, sx, width);
            let top = src[y0 * width + x0] * (1.0 - fx) + src[y0 * width + x1] * fx;
            let bottom = src[y1 * width + x0] * (1.0 - fx) + src[y1 * width + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}
