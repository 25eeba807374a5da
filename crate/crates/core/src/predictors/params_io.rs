//! Plain-text parameter files: one block per layer, row-major, 17 significant digits.
//!
//! ```text
//! layer 0 16x2
//! -1.2345678901234567e-1 3.0000000000000000e0
//! ...
//!
//! layer 1 1x16
//! ...
//! ```

use std::io::{BufRead, Write};

use super::{LayerShape, Predictor};
use crate::error::{LabError, Result};

pub fn write_params<W: Write>(predictor: &dyn Predictor, theta: &[f64], mut out: W) -> Result<()> {
    if theta.len() != predictor.num_params() {
        return Err(LabError::structural("parameter length does not match predictor"));
    }
    let mut offset = 0;
    for (h, shape) in predictor.layer_shapes().iter().enumerate() {
        if h > 0 {
            writeln!(out)?;
        }
        writeln!(out, "layer {h} {}x{}", shape.rows, shape.cols)?;
        for r in 0..shape.rows {
            let row = &theta[offset + r * shape.cols..offset + (r + 1) * shape.cols];
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        offset += shape.len();
    }
    Ok(())
}

/// Parses a parameter file into its layer shapes and the flat parameter vector.
pub fn read_params<R: BufRead>(input: R) -> Result<(Vec<LayerShape>, Vec<f64>)> {
    let mut shapes = Vec::new();
    let mut theta = Vec::new();
    let mut pending_rows = 0usize;
    let mut current: Option<LayerShape> = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("layer ") {
            if pending_rows != 0 {
                return Err(LabError::structural(format!("line {}: previous layer is short", lineno + 1)));
            }
            let mut parts = rest.split_whitespace();
            let idx: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| LabError::structural(format!("line {}: bad layer index", lineno + 1)))?;
            if idx != shapes.len() {
                return Err(LabError::structural(format!("line {}: layers out of order", lineno + 1)));
            }
            let dims = parts
                .next()
                .and_then(|s| s.split_once('x'))
                .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
                .ok_or_else(|| LabError::structural(format!("line {}: bad layer shape", lineno + 1)))?;
            let shape = LayerShape { rows: dims.0, cols: dims.1 };
            shapes.push(shape);
            current = Some(shape);
            pending_rows = shape.rows;
            continue;
        }
        let shape = current
            .filter(|_| pending_rows > 0)
            .ok_or_else(|| LabError::structural(format!("line {}: values outside a layer block", lineno + 1)))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| LabError::structural(format!("line {}: {e}", lineno + 1)))?;
        if values.len() != shape.cols {
            return Err(LabError::structural(format!(
                "line {}: {} values, layer has {} columns",
                lineno + 1,
                values.len(),
                shape.cols
            )));
        }
        theta.extend(values);
        pending_rows -= 1;
    }
    if pending_rows != 0 {
        return Err(LabError::structural("parameter file ends inside a layer"));
    }
    Ok((shapes, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{HomogeneousMlp, LinearPredictor};

    #[test]
    fn mlp_params_round_trip_bit_exact() {
        let m = HomogeneousMlp::relu(vec![3, 4, 1]).unwrap();
        let theta = m.init(11, 1.0);
        let mut buf = Vec::new();
        write_params(&m, theta.as_slice(), &mut buf).unwrap();
        let (shapes, back) = read_params(buf.as_slice()).unwrap();
        assert_eq!(shapes, m.layer_shapes());
        assert_eq!(back, theta.as_slice());
    }

    #[test]
    fn linear_layout() {
        let p = LinearPredictor::new(2);
        let mut buf = Vec::new();
        write_params(&p, &[0.1, -3.0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "layer 0 1x2\n1.0000000000000001e-1 -3.0000000000000000e0\n");
    }

    #[test]
    fn truncated_file_is_rejected() {
        assert!(read_params("layer 0 2x1\n1.0\n".as_bytes()).is_err());
        assert!(read_params("1.0 2.0\n".as_bytes()).is_err());
    }
}
