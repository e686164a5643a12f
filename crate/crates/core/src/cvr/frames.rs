use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cvrt::write_atomic;
use crate::error::{Error, Result};

/// `t` RGB8 frames of identical size, stored frame-major, pixel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    t: usize,
    h: usize,
    w: usize,
    data: Vec<u8>,
    pub frame_rate: Option<f32>,
}

#[derive(Serialize, Deserialize)]
struct RawSidecar {
    t: usize,
    h: usize,
    w: usize,
}

impl FrameSequence {
    pub fn new(t: usize, h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if t == 0 || h == 0 || w == 0 {
            return Err(Error::Invalid(format!(
                "frame sequence extents {t}x{h}x{w}"
            )));
        }
        if data.len() != t * h * w * 3 {
            return Err(Error::Shape(format!(
                "{t} frames of {h}x{w} RGB need {} bytes, got {}",
                t * h * w * 3,
                data.len()
            )));
        }
        Ok(Self {
            t,
            h,
            w,
            data,
            frame_rate: None,
        })
    }

    pub fn from_frames(frames: &[Vec<u8>], h: usize, w: usize) -> Result<Self> {
        let data: Vec<u8> = frames.iter().flatten().copied().collect();
        Self::new(frames.len(), h, w, data)
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Interleaved RGB bytes of frame `i`.
    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.h * self.w * 3;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn rgb(&self, i: usize, y: usize, x: usize) -> [u8; 3] {
        let o = ((i * self.h + y) * self.w + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    /// Mean of R, G, B scaled to `[0, 1]`.
    pub fn intensity(&self, i: usize) -> Vec<f32> {
        self.frame(i)
            .chunks_exact(3)
            .map(|p| (p[0] as f32 + p[1] as f32 + p[2] as f32) / (3.0 * 255.0))
            .collect()
    }

    /// Frames `start..start + len` as a new sequence.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.t || len == 0 {
            return Err(Error::Invalid(format!(
                "slice {start}..{} of {} frames",
                start + len,
                self.t
            )));
        }
        let n = self.h * self.w * 3;
        let mut s = Self::new(
            len,
            self.h,
            self.w,
            self.data[start * n..(start + len) * n].to_vec(),
        )?;
        s.frame_rate = self.frame_rate;
        Ok(s)
    }
}

/// Outcome of [`segment_clips`].
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub clips: Vec<FrameSequence>,
    /// Trailing frames that did not fill a clip.
    pub dropped: usize,
    /// Set when the video is shorter than one clip.
    pub insufficient: bool,
}

/// Cuts a video into consecutive non-overlapping `clip_len`-frame clips
/// starting at frame 0; the remainder is dropped.
pub fn segment_clips(video: &FrameSequence, clip_len: usize) -> Result<Segmentation> {
    if clip_len < 2 {
        return Err(Error::Invalid(format!(
            "clip length must be >= 2, got {clip_len}"
        )));
    }
    let n = video.len() / clip_len;
    let clips = (0..n)
        .map(|i| video.slice(i * clip_len, clip_len))
        .collect::<Result<Vec<_>>>()?;
    if n == 0 {
        log::warn!(
            "video has {} frames, fewer than one {clip_len}-frame clip",
            video.len()
        );
    }
    Ok(Segmentation {
        clips,
        dropped: video.len() - n * clip_len,
        insufficient: n == 0,
    })
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// Writes planar RGB8 (per frame: R plane, G plane, B plane) plus a JSON
/// sidecar `{"t","h","w"}` next to it.
pub fn write_frames_raw(path: impl AsRef<Path>, frames: &FrameSequence) -> Result<()> {
    let path = path.as_ref();
    let plane = frames.h * frames.w;
    let mut out = vec![0u8; frames.data.len()];
    for t in 0..frames.t {
        let src = frames.frame(t);
        let dst = &mut out[t * plane * 3..(t + 1) * plane * 3];
        for (p, px) in src.chunks_exact(3).enumerate() {
            for c in 0..3 {
                dst[c * plane + p] = px[c];
            }
        }
    }
    write_atomic(path, &out)?;
    let sidecar = RawSidecar {
        t: frames.t,
        h: frames.h,
        w: frames.w,
    };
    write_atomic(
        &sidecar_path(path),
        serde_json::to_string(&sidecar)?.as_bytes(),
    )
}

fn read_raw(path: &Path) -> Result<FrameSequence> {
    let side = sidecar_path(path);
    let meta: RawSidecar =
        serde_json::from_slice(&fs::read(&side).map_err(|e| Error::io(&side, e))?)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let plane = meta.h * meta.w;
    if bytes.len() != meta.t * plane * 3 {
        return Err(Error::TruncatedPayload {
            expected: meta.t * plane * 3,
            found: bytes.len(),
        });
    }
    let mut data = vec![0u8; bytes.len()];
    for t in 0..meta.t {
        let src = &bytes[t * plane * 3..(t + 1) * plane * 3];
        let dst = &mut data[t * plane * 3..(t + 1) * plane * 3];
        for p in 0..plane {
            for c in 0..3 {
                dst[p * 3 + c] = src[c * plane + p];
            }
        }
    }
    FrameSequence::new(meta.t, meta.h, meta.w, data)
}

fn frame_number(name: &str) -> Option<u64> {
    let digits: String = name.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn read_image_dir(dir: &Path) -> Result<FrameSequence> {
    let mut files: Vec<(u64, std::path::PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .filter_map(|p| {
            let n = frame_number(p.file_stem()?.to_str()?)?;
            Some((n, p))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty(format!(
            "no numbered PNG frames in {}",
            dir.display()
        )));
    }
    let mut frames = Vec::with_capacity(files.len());
    let (mut h, mut w) = (0, 0);
    for (i, (_, p)) in files.iter().enumerate() {
        let img = image::open(p)?.to_rgb8();
        if i == 0 {
            (w, h) = (img.width() as usize, img.height() as usize);
        } else if (img.width() as usize, img.height() as usize) != (w, h) {
            return Err(Error::Shape(format!(
                "{} differs in size from frame 0",
                p.display()
            )));
        }
        frames.push(img.into_raw());
    }
    FrameSequence::from_frames(&frames, h, w)
}

/// Reads a directory of numbered lossless images, or a raw planar RGB8
/// file with its JSON sidecar.
pub fn read_frames(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let path = path.as_ref();
    if path.is_dir() {
        read_image_dir(path)
    } else if path.exists() {
        read_raw(path)
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}
