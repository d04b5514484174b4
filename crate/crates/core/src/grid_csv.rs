//! Dense frames x channels CSV: a `time_s` column followed by one column
//! per channel, headed by its center frequency in Hz.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tf_analysis::GridLayout;

pub fn write_dense<W: Write>(mut out: W, layout: &GridLayout, values: &[f64]) -> std::io::Result<()> {
    write!(out, "time_s")?;
    for f in &layout.center_freqs {
        write!(out, ",{f}")?;
    }
    writeln!(out)?;
    let c = layout.channels();
    for frame in 0..layout.frames {
        write!(out, "{}", frame as f64 / layout.frame_rate)?;
        for v in &values[frame * c..(frame + 1) * c] {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn to_string(layout: &GridLayout, values: &[f64]) -> String {
    let mut buf = Vec::new();
    write_dense(&mut buf, layout, values).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

/// Parses [`write_dense`] output. The frame rate comes from the first two
/// timestamps, or `fallback_rate` when there is a single frame.
pub fn read_dense<R: BufRead>(input: R, fallback_rate: f64) -> Result<(GridLayout, Vec<f64>)> {
    let bad = |line: usize, what: &str| Error::invalid(format!("grid CSV line {}: {what}", line + 1));
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(0, "missing header"))?;
    let header = header.map_err(|e| bad(0, &e.to_string()))?;
    let mut cols = header.trim().split(',');
    if cols.next() != Some("time_s") {
        return Err(bad(0, "first column must be time_s"));
    }
    let center_freqs: Vec<f64> = cols
        .map(|c| c.trim().parse::<f64>().map_err(|_| bad(0, "bad center frequency")))
        .collect::<Result<_>>()?;

    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| bad(i, &e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .trim()
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|_| bad(i, "bad number")))
            .collect::<Result<_>>()?;
        if row.len() != center_freqs.len() + 1 {
            return Err(bad(i, "wrong column count"));
        }
        times.push(row[0]);
        values.extend_from_slice(&row[1..]);
    }
    let frame_rate = match times.as_slice() {
        [t0, t1, ..] if t1 > t0 => 1.0 / (t1 - t0),
        _ => fallback_rate,
    };
    let layout = GridLayout::new(times.len(), frame_rate, center_freqs)?;
    Ok((layout, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let layout = GridLayout::new(3, 1000.0, vec![250.0, 375.5]).unwrap();
        let vals = [0.0, 1.5, 2.25, 0.0, 1e-9, 3.0];
        let text = to_string(&layout, &vals);
        assert!(text.starts_with("time_s,250,375.5\n0,0,1.5\n"));
        let (l2, v2) = read_dense(text.as_bytes(), 1.0).unwrap();
        assert_eq!(l2.shape(), (3, 2));
        assert!((l2.frame_rate - 1000.0).abs() < 1e-6);
        assert_eq!(v2, vals);
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = "time_s,100,200\n0,1\n";
        assert!(read_dense(text.as_bytes(), 1.0).is_err());
    }
}
