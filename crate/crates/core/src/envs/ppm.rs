//! Binary PPM (P6) and PGM (P5) images, maxval 255.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::Frame;

fn encode(magic: &str, height: usize, width: usize, body: &[u8]) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(body);
    out
}

pub fn write_ppm(path: &Path, frame: &Frame) -> Result<()> {
    let bytes = encode("P6", frame.height(), frame.width(), frame.pixels());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: &Path, height: usize, width: usize, gray: &[u8]) -> Result<()> {
    if gray.len() != height * width {
        return Err(Error::Shape {
            expected: vec![height, width],
            actual: vec![gray.len()],
        });
    }
    fs::write(path, encode("P5", height, width, gray)).map_err(|e| Error::io(path, e))
}

fn decode(path: &Path, magic: &str, channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != magic {
        return Err(bad(&format!("expected {magic}, found {}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let len = width * height * channels;
    if bytes.len() < pos + len {
        return Err(bad("truncated raster"));
    }
    Ok((height, width, bytes[pos..pos + len].to_vec()))
}

pub fn read_ppm(path: &Path) -> Result<Frame> {
    let (h, w, px) = decode(path, "P6", 3)?;
    Frame::new(h, w, px)
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    decode(path, "P5", 1)
}

/// Writes successive frames as `frame_%06d.ppm`.
#[derive(Debug)]
pub struct EpisodeRecorder {
    dir: PathBuf,
    next: usize,
}

impl EpisodeRecorder {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(EpisodeRecorder { dir, next: 0 })
    }

    pub fn record(&mut self, frame: &Frame) -> Result<PathBuf> {
        let path = self.dir.join(format!("frame_{:06}.ppm", self.next));
        write_ppm(&path, frame)?;
        self.next += 1;
        Ok(path)
    }
}
