use super::{MediaError, IMAGE_HEIGHT, IMAGE_WIDTH};

/// Interleaved 8-bit image, row-major `height × width × channels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, MediaError> {
        if data.len() != width * height * channels {
            return Err(MediaError::InvalidFrame(format!(
                "{}x{}x{} frame needs {} bytes, got {}",
                height,
                width,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, channels: 3, data }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Mean absolute per-sample difference against another frame of the same size.
    pub fn mean_abs_diff(&self, other: &Frame) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "frame sizes differ");
        if self.data.is_empty() {
            return 0.0;
        }
        let total: u64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
            .sum();
        total as f64 / self.data.len() as f64
    }
}

/// Bilinear resize to 64×64 followed by division by 255.
pub fn resize_normalize(frame: &Frame) -> Result<Vec<f32>, MediaError> {
    resize_normalize_to(frame, IMAGE_HEIGHT, IMAGE_WIDTH)
}

/// Bilinear resize (half-pixel centres, edge clamped) to `out_h × out_w × 3`,
/// scaled into `[0, 1]`. Aspect ratio is not preserved.
pub fn resize_normalize_to(frame: &Frame, out_h: usize, out_w: usize) -> Result<Vec<f32>, MediaError> {
    if frame.channels != 3 {
        return Err(MediaError::BadChannelCount(frame.channels));
    }
    if frame.width == 0 || frame.height == 0 {
        return Err(MediaError::InvalidFrame("frame is empty".into()));
    }
    let xs = axis_taps(frame.width, out_w);
    let ys = axis_taps(frame.height, out_h);
    let mut out = Vec::with_capacity(out_h * out_w * 3);
    for &(y0, y1, wy) in &ys {
        for &(x0, x1, wx) in &xs {
            let p00 = frame.pixel(x0, y0);
            let p01 = frame.pixel(x1, y0);
            let p10 = frame.pixel(x0, y1);
            let p11 = frame.pixel(x1, y1);
            for c in 0..3 {
                let top = lerp(p00[c] as f32, p01[c] as f32, wx);
                let bottom = lerp(p10[c] as f32, p11[c] as f32, wx);
                let v = lerp(top, bottom, wy) / 255.0;
                out.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

#[inline]
fn lerp(a: f32, b: f32, w: f32) -> f32 {
    a + (b - a) * w
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (pos - i0 as f64) as f32)
        })
        .collect()
}

/// Full-range BT.601 RGB → YCbCr.
#[inline]
pub(crate) fn rgb_to_ycbcr(r: u8, g: u8, b: u8) -> (u8, u8, u8) {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    (clamp_u8(y), clamp_u8(cb), clamp_u8(cr))
}

/// YCbCr → RGB; `full_range` false means studio swing (16–235 luma).
#[inline]
pub(crate) fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8, full_range: bool) -> [u8; 3] {
    let (mut y, mut cb, mut cr) = (y as f64, cb as f64 - 128.0, cr as f64 - 128.0);
    if !full_range {
        y = (y - 16.0) * 255.0 / 219.0;
        cb *= 255.0 / 224.0;
        cr *= 255.0 / 224.0;
    }
    [
        clamp_u8(y + 1.402 * cr),
        clamp_u8(y - 0.344_136 * cb - 0.714_136 * cr),
        clamp_u8(y + 1.772 * cb),
    ]
}

#[inline]
fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
