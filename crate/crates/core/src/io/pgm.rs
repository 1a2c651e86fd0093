//! Binary portable graymaps (P5), 8 or 16 bits per sample.
//!
//! Intensities map linearly between [−1, 1] and [0, maxval]:
//! `x = 2·q/maxval − 1`, `q = round((x + 1)/2 · maxval)`. Class ids are stored
//! verbatim in 8-bit maps; validity is 0 (invalid) or 255 (valid).

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

pub fn intensity_to_level(x: f64, maxval: u16) -> u16 {
    ((x.clamp(-1.0, 1.0) + 1.0) / 2.0 * maxval as f64).round() as u16
}

pub fn intensity_from_level(q: u16, maxval: u16) -> f64 {
    2.0 * q as f64 / maxval as f64 - 1.0
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn token(bytes: &[u8], pos: &mut usize) -> Option<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = read_bytes(path)?;
    let bad = |msg: &str| Error::format(path, msg.to_string());
    if !bytes.starts_with(b"P5") {
        return Err(bad("not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let width = token(&bytes, &mut pos).ok_or_else(|| bad("bad width"))?;
    let height = token(&bytes, &mut pos).ok_or_else(|| bad("bad height"))?;
    let maxval = token(&bytes, &mut pos).ok_or_else(|| bad("bad maxval"))?;
    if width == 0 || height == 0 || !(1..=65535).contains(&maxval) {
        return Err(bad("width, height must be positive and maxval in 1..65535"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("header must end with a single whitespace byte"));
    }
    pos += 1;
    let wide = maxval > 255;
    let n = width * height;
    let body = &bytes[pos..];
    let need = n * if wide { 2 } else { 1 };
    if body.len() != need {
        return Err(Error::format(
            path,
            format!("raster has {} bytes, expected {need} for {width}x{height}", body.len()),
        ));
    }
    let data: Vec<u16> = if wide {
        body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
    } else {
        body.iter().map(|&b| b as u16).collect()
    };
    if data.iter().any(|&q| q as usize > maxval) {
        return Err(bad("sample exceeds maxval"));
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

pub fn write_pgm(path: &Path, img: &Pgm) -> Result<()> {
    if img.data.len() != img.width * img.height || img.maxval == 0 {
        return Err(Error::validation("PGM raster does not match its dimensions"));
    }
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        img.data.iter().for_each(|q| out.extend(q.to_be_bytes()));
    } else {
        out.extend(img.data.iter().map(|&q| q as u8));
    }
    write_bytes(path, &out)
}

pub fn write_intensity_pgm(path: &Path, width: usize, height: usize, pixels: &[f64], maxval: u16) -> Result<()> {
    let data = pixels.iter().map(|&x| intensity_to_level(x, maxval)).collect();
    write_pgm(path, &Pgm { width, height, maxval, data })
}

/// Image dimensions and intensities in [−1, 1].
pub fn read_intensity_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = read_pgm(path)?;
    let px = img.data.iter().map(|&q| intensity_from_level(q, img.maxval)).collect();
    Ok((img.width, img.height, px))
}

pub fn write_label_pgm(path: &Path, width: usize, height: usize, classes: &[u8]) -> Result<()> {
    let data = classes.iter().map(|&c| c as u16).collect();
    write_pgm(path, &Pgm { width, height, maxval: 255, data })
}

pub fn read_label_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = read_pgm(path)?;
    if img.maxval > 255 {
        return Err(Error::format(path, "label maps must be 8-bit"));
    }
    Ok((img.width, img.height, img.data.iter().map(|&q| q as u8).collect()))
}

pub fn write_validity_pgm(path: &Path, width: usize, height: usize, valid: &[bool]) -> Result<()> {
    let data = valid.iter().map(|&v| if v { 255 } else { 0 }).collect();
    write_pgm(path, &Pgm { width, height, maxval: 255, data })
}

/// Nonzero samples are valid.
pub fn read_validity_pgm(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = read_pgm(path)?;
    Ok((img.width, img.height, img.data.iter().map(|&q| q != 0).collect()))
}
