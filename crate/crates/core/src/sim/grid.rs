//! Lattice site layouts.

use super::LatticeType;
use crate::error::{Error, Result};

fn check_constant(a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("lattice constant must be positive, got {a}")))
    }
}

/// Staggered rows: `2*extent+1` rows spaced `row_spacing`, each holding
/// `2*extent+1` sites spaced `a`, odd rows shifted right by `a/2`.
fn staggered_rows(a: f64, extent: u32, row_spacing: f64) -> Vec<[f64; 2]> {
    let e = extent as i64;
    let mut sites = Vec::with_capacity(((2 * e + 1) * (2 * e + 1)) as usize);
    for k in -e..=e {
        let y = k as f64 * row_spacing;
        let offset = if k.rem_euclid(2) == 1 { a / 2.0 } else { 0.0 };
        for j in -e..=e {
            sites.push([j as f64 * a + offset, y]);
        }
    }
    sites
}

/// Hexagonal sheet built from triangles of base `a` and height `a/2`,
/// rows every `3a/2`.
pub fn hex1_grid(a: f64, extent: u32) -> Result<Vec<[f64; 2]>> {
    check_constant(a)?;
    Ok(staggered_rows(a, extent, 1.5 * a))
}

/// Same staggering as [`hex1_grid`] with rows pulled apart to `2a`.
pub fn hex2_grid(a: f64, extent: u32) -> Result<Vec<[f64; 2]>> {
    check_constant(a)?;
    Ok(staggered_rows(a, extent, 2.0 * a))
}

/// One-cell-thick slab of a cubic lattice, `z` in `[0, a]`.
///
/// Corners sit on the integer grid `-extent..=extent` in x and y; BCC adds a
/// body centre per cell and FCC adds the six face centres (shared faces are
/// emitted once).
pub fn cubic_grid(lattice: LatticeType, a: f64, extent: u32) -> Result<Vec<[f64; 3]>> {
    check_constant(a)?;
    if !lattice.is_cubic() {
        return Err(Error::invalid(format!("{lattice} is not a cubic lattice")));
    }
    let e = extent as i64;
    let corners = || -e..=e;
    let cells = || -e..e;
    let mut sites = Vec::new();

    for l in [0.0, 1.0] {
        for j in corners() {
            for i in corners() {
                sites.push([i as f64 * a, j as f64 * a, l * a]);
            }
        }
    }
    match lattice {
        LatticeType::Bcc => {
            for j in cells() {
                for i in cells() {
                    sites.push([(i as f64 + 0.5) * a, (j as f64 + 0.5) * a, 0.5 * a]);
                }
            }
        }
        LatticeType::Fcc => {
            // faces normal to z
            for l in [0.0, 1.0] {
                for j in cells() {
                    for i in cells() {
                        sites.push([(i as f64 + 0.5) * a, (j as f64 + 0.5) * a, l * a]);
                    }
                }
            }
            // faces normal to x
            for j in cells() {
                for i in corners() {
                    sites.push([i as f64 * a, (j as f64 + 0.5) * a, 0.5 * a]);
                }
            }
            // faces normal to y
            for j in corners() {
                for i in cells() {
                    sites.push([(i as f64 + 0.5) * a, j as f64 * a, 0.5 * a]);
                }
            }
        }
        _ => {}
    }
    Ok(sites)
}
