//! Binary PGM/PPM images, scribble rasters and chain sidecar files.
//!
//! Only `maxval = 255` is accepted. Channel values map to `v / 255`.
//! Scribble rasters are PGMs where value `k < 255` is label `k` and `255`
//! marks an unlabeled pixel. Chain sidecars are plain text, one stroke per
//! line: `label x0 y0 x1 y1 ...`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Chain, GridImage, Labeling, ScribbleMask};

/// Raster value reserved for unlabeled scribble pixels.
pub const UNLABELED: u8 = 255;

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Decoded netpbm raster: `(width, height, channels, bytes)`.
struct Netpbm {
    width: usize,
    height: usize,
    channels: usize,
    bytes: Vec<u8>,
}

fn decode_netpbm(buf: &[u8], path: &Path) -> Result<Netpbm> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        // Skip whitespace and comments.
        while pos < buf.len() {
            if buf[pos].is_ascii_whitespace() {
                pos += 1;
            } else if buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() && buf[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, "truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= buf.len() || !buf[pos].is_ascii_whitespace() {
        return Err(parse_err(path, "missing raster separator"));
    }
    pos += 1;

    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(parse_err(path, format!("unsupported magic {other}"))),
    };
    let num = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| parse_err(path, format!("bad header number {s:?}")))
    };
    let width = num(&tokens[1])?;
    let height = num(&tokens[2])?;
    let maxval = num(&tokens[3])?;
    if maxval != 255 {
        return Err(parse_err(path, format!("maxval {maxval} unsupported, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(parse_err(path, "zero-sized image"));
    }
    let n = width * height * channels;
    if buf.len() < pos + n {
        return Err(parse_err(path, "truncated raster"));
    }
    Ok(Netpbm {
        width,
        height,
        channels,
        bytes: buf[pos..pos + n].to_vec(),
    })
}

fn encode_netpbm(channels: usize, width: usize, height: usize, bytes: &[u8]) -> Vec<u8> {
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    out
}

/// Reads a P5 (gray) or P6 (RGB) file into a normalized image.
pub fn read_image(path: &Path) -> Result<GridImage> {
    let buf = fs::read(path)?;
    let pbm = decode_netpbm(&buf, path)?;
    let data = pbm.bytes.iter().map(|&v| v as f64 / 255.0).collect();
    GridImage::new(pbm.width, pbm.height, pbm.channels, data)
}

/// Writes an image, quantizing each channel to `round(255 v)`.
pub fn write_image(path: &Path, image: &GridImage) -> Result<()> {
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    fs::write(
        path,
        encode_netpbm(image.channels(), image.width(), image.height(), &bytes),
    )?;
    Ok(())
}

/// Reads a label raster (PGM, value = label index).
pub fn read_labeling(path: &Path, num_labels: usize) -> Result<Labeling> {
    let buf = fs::read(path)?;
    let pbm = decode_netpbm(&buf, path)?;
    if pbm.channels != 1 {
        return Err(parse_err(path, "label raster must be P5"));
    }
    let labels = pbm.bytes.iter().map(|&v| v as usize).collect();
    Labeling::new(pbm.width, pbm.height, num_labels, labels)
}

pub fn write_labeling(path: &Path, labeling: &Labeling) -> Result<()> {
    if labeling.num_labels() > 256 {
        return Err(Error::Unsupported("more than 256 labels in a PGM".into()));
    }
    let bytes: Vec<u8> = labeling.labels().iter().map(|&l| l as u8).collect();
    fs::write(
        path,
        encode_netpbm(1, labeling.width(), labeling.height(), &bytes),
    )?;
    Ok(())
}

/// Reads a scribble raster, optionally joined with its chain sidecar.
pub fn read_scribbles(path: &Path, num_labels: usize, chains: Option<&Path>) -> Result<ScribbleMask> {
    let buf = fs::read(path)?;
    let pbm = decode_netpbm(&buf, path)?;
    if pbm.channels != 1 {
        return Err(parse_err(path, "scribble raster must be P5"));
    }
    let entries = pbm
        .bytes
        .iter()
        .map(|&v| (v != UNLABELED).then_some(v as usize))
        .collect();
    let chains = chains.map(read_chains).transpose()?;
    ScribbleMask::new(pbm.width, pbm.height, num_labels, entries, chains)
}

pub fn write_scribbles(path: &Path, mask: &ScribbleMask) -> Result<()> {
    if mask.num_labels() >= UNLABELED as usize {
        return Err(Error::Unsupported(format!(
            "scribble rasters hold at most {} labels",
            UNLABELED
        )));
    }
    let bytes: Vec<u8> = mask
        .entries()
        .iter()
        .map(|e| e.map_or(UNLABELED, |l| l as u8))
        .collect();
    fs::write(path, encode_netpbm(1, mask.width(), mask.height(), &bytes))?;
    Ok(())
}

pub fn read_chains(path: &Path) -> Result<Vec<Chain>> {
    let text = fs::read_to_string(path)?;
    parse_chains(&text).map_err(|msg| parse_err(path, msg))
}

fn parse_chains(text: &str) -> std::result::Result<Vec<Chain>, String> {
    let mut chains = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if nums.len() < 3 || nums.len() % 2 == 0 {
            return Err(format!(
                "line {}: expected `label x0 y0 [x1 y1 ...]`",
                lineno + 1
            ));
        }
        chains.push(Chain {
            label: nums[0],
            pixels: nums[1..].chunks(2).map(|c| (c[0], c[1])).collect(),
        });
    }
    Ok(chains)
}

pub fn write_chains(path: &Path, chains: &[Chain]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for c in chains {
        write!(f, "{}", c.label)?;
        for (x, y) in &c.pixels {
            write!(f, " {x} {y}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comments() {
        let mut buf = b"P5\n# made by hand\n2 1\n# another\n255\n".to_vec();
        buf.extend_from_slice(&[0, 255]);
        let pbm = decode_netpbm(&buf, Path::new("x.pgm")).unwrap();
        assert_eq!((pbm.width, pbm.height, pbm.channels), (2, 1, 1));
        assert_eq!(pbm.bytes, vec![0, 255]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Path::new("x");
        assert!(decode_netpbm(b"P2\n1 1\n255\n0", p).is_err());
        assert!(decode_netpbm(b"P5\n1 1\n65535\n00", p).is_err());
        assert!(decode_netpbm(b"P5\n2 2\n255\n\x00", p).is_err());
        assert!(decode_netpbm(b"P5\n2", p).is_err());
    }

    #[test]
    fn image_and_scribble_files() {
        let dir = tempfile::tempdir().unwrap();
        let img = GridImage::new(2, 1, 3, vec![0.0, 1.0, 128.0 / 255.0, 1.0, 0.0, 0.0]).unwrap();
        let ip = dir.path().join("a.ppm");
        write_image(&ip, &img).unwrap();
        assert_eq!(read_image(&ip).unwrap(), img);

        let chains = vec![
            Chain { label: 1, pixels: vec![(0, 0), (1, 0)] },
            Chain { label: 0, pixels: vec![(2, 1)] },
        ];
        let mask = ScribbleMask::from_chains(3, 2, 2, chains.clone()).unwrap();
        let sp = dir.path().join("s.pgm");
        let cp = dir.path().join("s.chains");
        write_scribbles(&sp, &mask).unwrap();
        write_chains(&cp, &chains).unwrap();
        let raw = fs::read(&sp).unwrap();
        assert_eq!(&raw[raw.len() - 6..], &[1, 1, 255, 255, 255, 0]);
        assert_eq!(read_scribbles(&sp, 2, Some(&cp)).unwrap(), mask);
    }

    #[test]
    fn chain_parse_errors() {
        assert!(parse_chains("1 0").is_err());
        assert!(parse_chains("a 0 0").is_err());
        let c = parse_chains("# header\n\n2 3 4 5 6\n").unwrap();
        assert_eq!(c, vec![Chain { label: 2, pixels: vec![(3, 4), (5, 6)] }]);
    }
}
