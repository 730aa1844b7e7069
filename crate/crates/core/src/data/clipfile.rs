//! Binary clip container.
//!
//! Layout: the 8-byte magic `SEMFICLP`, a little-endian `u64` header length, a
//! UTF-8 JSON header, then the frame blob, row-major `[N, H, W, C]`, either
//! little-endian `f32` or `u8` (value × 255, rounded).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SemfiError};
use crate::video::VideoClip;

pub const CLIP_MAGIC: &[u8; 8] = b"SEMFICLP";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipDtype {
    F32,
    #[default]
    U8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipHeader {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub dtype: ClipDtype,
    pub fps: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub caption: String,
    /// Frame-count expert that produced the clip, for generated clips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<usize>,
}

pub fn encode_clip(clip: &VideoClip, dtype: ClipDtype, expert: Option<usize>) -> Result<Vec<u8>> {
    let header = ClipHeader {
        n: clip.n_frames,
        h: clip.height,
        w: clip.width,
        c: clip.channels,
        dtype,
        fps: clip.fps,
        caption: clip.caption.clone(),
        expert,
    };
    let json = serde_json::to_vec(&header)?;
    let width = if dtype == ClipDtype::F32 { 4 } else { 1 };
    let mut out = Vec::with_capacity(16 + json.len() + width * clip.data.len());
    out.extend_from_slice(CLIP_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    match dtype {
        ClipDtype::F32 => clip.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        ClipDtype::U8 => out.extend(clip.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)),
    }
    Ok(out)
}

pub fn decode_clip(bytes: &[u8]) -> Result<(ClipHeader, VideoClip)> {
    if bytes.len() < 16 || &bytes[..8] != CLIP_MAGIC {
        return Err(SemfiError::format("magic", "not a semfi clip file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| SemfiError::format("header_length", format!("{hlen} exceeds file size")))?;
    let header: ClipHeader =
        serde_json::from_slice(body).map_err(|e| SemfiError::format("header", e.to_string()))?;
    let count = header.n * header.h * header.w * header.c;
    let blob = &bytes[16 + hlen..];
    let data: Vec<f32> = match header.dtype {
        ClipDtype::F32 => {
            if blob.len() != 4 * count {
                return Err(SemfiError::format("blob", format!("{} bytes, expected {}", blob.len(), 4 * count)));
            }
            blob.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect()
        }
        ClipDtype::U8 => {
            if blob.len() != count {
                return Err(SemfiError::format("blob", format!("{} bytes, expected {count}", blob.len())));
            }
            blob.iter().map(|&b| f32::from(b) / 255.0).collect()
        }
    };
    let clip = VideoClip::new(header.n, header.h, header.w, header.c, data, header.fps, header.caption.clone())
        .map_err(|e| SemfiError::format("blob", e.to_string()))?;
    Ok((header, clip))
}

pub fn write_clip(path: &Path, clip: &VideoClip, dtype: ClipDtype, expert: Option<usize>) -> Result<()> {
    std::fs::write(path, encode_clip(clip, dtype, expert)?).map_err(|e| SemfiError::io(path, e))
}

pub fn read_clip(path: &Path) -> Result<(ClipHeader, VideoClip)> {
    let bytes = std::fs::read(path).map_err(|e| SemfiError::io(path, e))?;
    decode_clip(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip() -> VideoClip {
        let data: Vec<f32> = (0..2 * 2 * 3 * 3).map(|i| (i % 256) as f32 / 255.0).collect();
        VideoClip::new(2, 2, 3, 3, data, 24, "a red circle").unwrap()
    }

    #[test]
    fn both_dtypes_round_trip() {
        for dtype in [ClipDtype::F32, ClipDtype::U8] {
            let (h, back) = decode_clip(&encode_clip(&clip(), dtype, Some(9)).unwrap()).unwrap();
            assert_eq!(back, clip());
            assert_eq!(h.expert, Some(9));
        }
    }

    #[test]
    fn header_uses_short_field_names() {
        let bytes = encode_clip(&clip(), ClipDtype::U8, None).unwrap();
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let v: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hlen]).unwrap();
        for k in ["N", "H", "W", "C", "dtype", "fps"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v.get("expert").is_none());
    }

    #[test]
    fn truncated_blob_names_the_field() {
        let bytes = encode_clip(&clip(), ClipDtype::U8, None).unwrap();
        match decode_clip(&bytes[..bytes.len() - 1]) {
            Err(SemfiError::Format { field, .. }) => assert_eq!(field, "blob"),
            other => panic!("{other:?}"),
        }
    }
}
