//! Video container access.
//!
//! YUV4MPEG2 (`.y4m`) streams are decoded in-process. Every other container
//! is handed to `ffprobe`/`ffmpeg` when those tools are on `PATH`; the tools
//! emit raw `rgb24` frames on stdout and any failure surfaces as
//! [`MediaError::DecodeError`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};

use serde::Deserialize;

use super::frame::{rgb_to_ycbcr, ycbcr_to_rgb, Frame};
use super::MediaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Y4m,
    Ffmpeg,
}

/// Raw stream facts before any resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamInfo {
    pub backend: Backend,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frame_count: usize,
}

pub fn backend_for(path: &Path) -> Result<Backend, MediaError> {
    let mut magic = [0u8; 9];
    let mut f = File::open(path).map_err(|e| open_error(path, e))?;
    let n = read_up_to(&mut f, &mut magic)?;
    if n == magic.len() && &magic == b"YUV4MPEG2" {
        return Ok(Backend::Y4m);
    }
    if is_y4m_extension(path) {
        return Err(decode_error(path, "missing YUV4MPEG2 signature"));
    }
    if ffmpeg_available() {
        Ok(Backend::Ffmpeg)
    } else {
        Err(decode_error(path, "not a YUV4MPEG2 stream and ffmpeg/ffprobe are not on PATH"))
    }
}

fn is_y4m_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

pub fn ffmpeg_available() -> bool {
    ["ffmpeg", "ffprobe"].iter().all(|tool| {
        Command::new(tool)
            .arg("-version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok_and(|s| s.success())
    })
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> Result<usize, MediaError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

fn open_error(path: &Path, e: std::io::Error) -> MediaError {
    if e.kind() == std::io::ErrorKind::NotFound {
        MediaError::MissingFile(path.to_path_buf())
    } else {
        MediaError::Io(e)
    }
}

pub(crate) fn decode_error(path: &Path, reason: impl Into<String>) -> MediaError {
    MediaError::DecodeError { path: path.to_path_buf(), reason: reason.into() }
}

pub fn stream_info(path: &Path) -> Result<StreamInfo, MediaError> {
    match backend_for(path)? {
        Backend::Y4m => {
            let mut reader = Y4mFrames::open(path)?;
            let mut count = 0;
            while reader.next_frame()?.is_some() {
                count += 1;
            }
            Ok(StreamInfo {
                backend: Backend::Y4m,
                width: reader.width,
                height: reader.height,
                fps: reader.fps,
                frame_count: count,
            })
        }
        Backend::Ffmpeg => ffprobe(path),
    }
}

/// Sequential RGB frames at the source frame rate.
pub trait SourceFrames {
    fn next_frame(&mut self) -> Result<Option<Frame>, MediaError>;
}

pub fn open_source(path: &Path, info: &StreamInfo) -> Result<Box<dyn SourceFrames>, MediaError> {
    Ok(match info.backend {
        Backend::Y4m => Box::new(Y4mFrames::open(path)?),
        Backend::Ffmpeg => Box::new(FfmpegFrames::spawn(path, info.width, info.height)?),
    })
}

pub struct Y4mFrames {
    path: PathBuf,
    decoder: y4m::Decoder<BufReader<File>>,
    width: usize,
    height: usize,
    fps: f64,
    full_range: bool,
    colorspace: y4m::Colorspace,
}

impl Y4mFrames {
    pub fn open(path: &Path) -> Result<Self, MediaError> {
        let file = File::open(path).map_err(|e| open_error(path, e))?;
        let decoder = y4m::Decoder::new(BufReader::new(file))
            .map_err(|e| decode_error(path, format!("bad y4m header: {e:?}")))?;
        let rate = decoder.get_framerate();
        if rate.num == 0 || rate.den == 0 {
            return Err(decode_error(path, "y4m header has a zero frame rate"));
        }
        let colorspace = decoder.get_colorspace();
        if decoder.get_bit_depth() != 8 {
            return Err(decode_error(path, format!("unsupported bit depth {}", decoder.get_bit_depth())));
        }
        let params = String::from_utf8_lossy(decoder.get_raw_params()).into_owned();
        Ok(Self {
            path: path.to_path_buf(),
            width: decoder.get_width(),
            height: decoder.get_height(),
            fps: rate.num as f64 / rate.den as f64,
            full_range: params.split_whitespace().any(|p| p == "XCOLORRANGE=FULL"),
            colorspace,
            decoder,
        })
    }
}

impl SourceFrames for Y4mFrames {
    fn next_frame(&mut self) -> Result<Option<Frame>, MediaError> {
        let (w, h) = (self.width, self.height);
        let frame = match self.decoder.read_frame() {
            Ok(f) => f,
            Err(y4m::Error::EOF) => return Ok(None),
            Err(e) => return Err(decode_error(&self.path, format!("corrupt frame: {e:?}"))),
        };
        let (cw, ch) = match self.colorspace {
            y4m::Colorspace::C444 => (w, h),
            y4m::Colorspace::C422 => (w.div_ceil(2), h),
            y4m::Colorspace::Cmono => (0, 0),
            _ => (w.div_ceil(2), h.div_ceil(2)),
        };
        let (yp, up, vp) = (frame.get_y_plane(), frame.get_u_plane(), frame.get_v_plane());
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let luma = yp[y * w + x];
                let rgb = if cw == 0 {
                    ycbcr_to_rgb(luma, 128, 128, self.full_range)
                } else {
                    let ci = (y * ch / h) * cw + x * cw / w;
                    ycbcr_to_rgb(luma, up[ci], vp[ci], self.full_range)
                };
                data.extend_from_slice(&rgb);
            }
        }
        Ok(Some(Frame { width: w, height: h, channels: 3, data }))
    }
}

/// Writes full-range 4:4:4 YUV4MPEG2 from RGB frames.
pub struct Y4mWriter {
    encoder: y4m::Encoder<BufWriter<File>>,
    width: usize,
    height: usize,
    planes: [Vec<u8>; 3],
}

impl Y4mWriter {
    pub fn create(path: &Path, width: usize, height: usize, fps_num: usize, fps_den: usize) -> Result<Self, MediaError> {
        let file = BufWriter::new(File::create(path)?);
        let range = y4m::VendorExtensionString::new(b"COLORRANGE=FULL".to_vec())
            .map_err(|e| MediaError::InvalidFrame(format!("{e:?}")))?;
        let encoder = y4m::encode(width, height, y4m::Ratio::new(fps_num, fps_den))
            .with_colorspace(y4m::Colorspace::C444)
            .append_vendor_extension(range)
            .write_header(file)
            .map_err(|e| decode_error(path, format!("cannot write y4m header: {e:?}")))?;
        let n = width * height;
        Ok(Self { encoder, width, height, planes: [vec![0; n], vec![0; n], vec![0; n]] })
    }

    pub fn write(&mut self, frame: &Frame) -> Result<(), MediaError> {
        if frame.width != self.width || frame.height != self.height || frame.channels != 3 {
            return Err(MediaError::InvalidFrame(format!(
                "writer expects {}x{} RGB, got {}x{}x{}",
                self.width, self.height, frame.width, frame.height, frame.channels
            )));
        }
        for (i, px) in frame.data.chunks_exact(3).enumerate() {
            let (y, cb, cr) = rgb_to_ycbcr(px[0], px[1], px[2]);
            self.planes[0][i] = y;
            self.planes[1][i] = cb;
            self.planes[2][i] = cr;
        }
        let yuv = y4m::Frame::new([&self.planes[0], &self.planes[1], &self.planes[2]], None);
        self.encoder.write_frame(&yuv).map_err(|e| match e {
            y4m::Error::IoError(io) => MediaError::Io(io),
            other => MediaError::InvalidFrame(format!("{other:?}")),
        })
    }

    pub fn finish(self) -> Result<(), MediaError> {
        drop(self.encoder);
        Ok(())
    }
}

#[derive(Deserialize)]
struct ProbeOutput {
    #[serde(default)]
    streams: Vec<ProbeStream>,
}

#[derive(Deserialize)]
struct ProbeStream {
    width: Option<usize>,
    height: Option<usize>,
    r_frame_rate: Option<String>,
    nb_read_packets: Option<String>,
}

fn ffprobe(path: &Path) -> Result<StreamInfo, MediaError> {
    let out = Command::new("ffprobe")
        .args(["-v", "error", "-select_streams", "v:0", "-count_packets"])
        .args(["-show_entries", "stream=width,height,r_frame_rate,nb_read_packets", "-of", "json"])
        .arg(path)
        .output()?;
    if !out.status.success() {
        return Err(decode_error(path, String::from_utf8_lossy(&out.stderr).trim().to_string()));
    }
    let parsed: ProbeOutput = serde_json::from_slice(&out.stdout)
        .map_err(|e| decode_error(path, format!("unreadable ffprobe output: {e}")))?;
    let stream = parsed.streams.into_iter().next().ok_or_else(|| decode_error(path, "no video stream"))?;
    let fps = stream.r_frame_rate.as_deref().and_then(parse_rate).unwrap_or(0.0);
    let (Some(width), Some(height)) = (stream.width, stream.height) else {
        return Err(decode_error(path, "video stream has no dimensions"));
    };
    if fps <= 0.0 {
        return Err(decode_error(path, "video stream has no frame rate"));
    }
    let frame_count = stream.nb_read_packets.and_then(|n| n.parse().ok()).unwrap_or(0);
    Ok(StreamInfo { backend: Backend::Ffmpeg, width, height, fps, frame_count })
}

fn parse_rate(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (n.parse().ok()?, d.parse().ok()?);
            (d != 0.0).then(|| n / d)
        }
        None => s.parse().ok(),
    }
}

struct FfmpegFrames {
    path: PathBuf,
    child: Child,
    stdout: ChildStdout,
    frame_bytes: usize,
    width: usize,
    height: usize,
}

impl FfmpegFrames {
    fn spawn(path: &Path, width: usize, height: usize) -> Result<Self, MediaError> {
        let mut child = Command::new("ffmpeg")
            .args(["-v", "error", "-i"])
            .arg(path)
            .args(["-map", "0:v:0", "-fps_mode", "passthrough", "-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self { path: path.to_path_buf(), child, stdout, frame_bytes: width * height * 3, width, height })
    }
}

impl SourceFrames for FfmpegFrames {
    fn next_frame(&mut self) -> Result<Option<Frame>, MediaError> {
        let mut buf = vec![0u8; self.frame_bytes];
        let n = read_up_to(&mut self.stdout, &mut buf)?;
        if n == self.frame_bytes {
            return Ok(Some(Frame { width: self.width, height: self.height, channels: 3, data: buf }));
        }
        let status = self.child.wait()?;
        if !status.success() || n != 0 {
            let mut err = String::new();
            if let Some(mut stderr) = self.child.stderr.take() {
                let _ = stderr.read_to_string(&mut err);
            }
            return Err(decode_error(&self.path, format!("ffmpeg failed ({status}): {}", err.trim())));
        }
        Ok(None)
    }
}

impl Drop for FfmpegFrames {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Writes a sequence of RGB frames as a y4m file at an integer frame rate.
pub fn write_y4m(path: &Path, frames: &[Frame], fps: usize) -> Result<(), MediaError> {
    let first = frames.first().ok_or_else(|| MediaError::InvalidFrame("no frames to write".into()))?;
    let mut writer = Y4mWriter::create(path, first.width, first.height, fps, 1)?;
    for f in frames {
        writer.write(f)?;
    }
    writer.finish()
}
