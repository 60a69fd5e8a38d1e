//! Window dump: a CSV of nonzero `(row, col, re, im)` entries plus a JSON
//! header `{flavor, size, offset, t, seed}`. Floats carry 17 significant digits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sci17;

use super::window::BandUnitaryWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowHeader {
    pub flavor: String,
    pub size: usize,
    pub offset: i64,
    pub t: Option<f64>,
    pub seed: Option<u64>,
}

pub fn window_header(w: &BandUnitaryWindow) -> WindowHeader {
    WindowHeader {
        flavor: w.flavor().name().to_string(),
        size: w.size(),
        offset: w.offset(),
        t: w.params().map(|p| p.t()),
        seed: w.seed(),
    }
}

/// Local (0-based) row and column indices; add the header offset for
/// lattice indices.
pub fn window_csv(w: &BandUnitaryWindow) -> String {
    let mut out = String::from("row,col,re,im\n");
    for i in 0..w.size() {
        for &(j, v) in w.row(i) {
            out.push_str(&format!("{i},{j},{},{}\n", sci17(v.re), sci17(v.im)));
        }
    }
    out
}

/// Parses a dump back into `(row, col, value)` triples.
pub fn parse_window_csv(text: &str) -> Result<Vec<(usize, usize, Complex64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("row,col,re,im") => {}
        other => return Err(Error::Parse(format!("unexpected CSV header {other:?}"))),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("bad window row '{l}'")));
            }
            let bad = |_| Error::Parse(format!("bad number in '{l}'"));
            let i = f[0].parse::<usize>().map_err(|_| Error::Parse(format!("bad row in '{l}'")))?;
            let j = f[1].parse::<usize>().map_err(|_| Error::Parse(format!("bad col in '{l}'")))?;
            let re = f[2].parse::<f64>().map_err(bad)?;
            let im = f[3].parse::<f64>().map_err(bad)?;
            Ok((i, j, Complex64::new(re, im)))
        })
        .collect()
}
