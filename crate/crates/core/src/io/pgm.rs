//! Binary 8-bit greyscale PGM (`P5`).

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Maps `[0, 1]` to `0..=255`, clamping outside values.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_pgm<W: Write>(mut w: W, img: &Gray8) -> Result<()> {
    if img.pixels.len() != img.width * img.height {
        return Err(Error::ShapeMismatch {
            context: "pgm",
            expected: vec![img.height, img.width],
            actual: vec![img.pixels.len()],
        });
    }
    let io = |e| Error::io("<pgm>", e);
    write!(w, "P5\n{} {}\n255\n", img.width, img.height).map_err(io)?;
    w.write_all(&img.pixels).map_err(io)?;
    w.flush().map_err(io)
}

fn next_token(data: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match data.get(*pos) {
            Some(b'#') => {
                while data.get(*pos).is_some_and(|&c| c != b'\n') {
                    *pos += 1;
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::format("pgm", "truncated header")),
        }
    }
    let start = *pos;
    while data.get(*pos).is_some_and(|c| c.is_ascii_digit()) {
        *pos += 1;
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("pgm", "expected a decimal number in the header"))
}

pub fn read_pgm<R: Read>(mut r: R) -> Result<Gray8> {
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(|e| Error::io("<pgm>", e))?;
    if !data.starts_with(b"P5") {
        return Err(Error::format("pgm", "missing P5 magic"));
    }
    let mut pos = 2;
    let width = next_token(&data, &mut pos)?;
    let height = next_token(&data, &mut pos)?;
    let maxval = next_token(&data, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format("pgm", format!("unsupported maxval {maxval}")));
    }
    if !data.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(Error::format("pgm", "header not terminated by whitespace"));
    }
    pos += 1;
    let body = &data[pos..];
    if body.len() < width * height {
        return Err(Error::format(
            "pgm",
            format!("expected {} pixel bytes, found {}", width * height, body.len()),
        ));
    }
    let scale = 255.0 / maxval as f64;
    let pixels = body[..width * height]
        .iter()
        .map(|&p| if maxval == 255 { p } else { to_u8(p as f64 * scale / 255.0) })
        .collect();
    Ok(Gray8 { width, height, pixels })
}
