//! Plain-text writers for vectors, matrices and tables.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::Result;

/// One value per line with full precision.
pub fn write_vector<W: Write>(v: &[f64], mut out: W) -> Result<()> {
    for x in v {
        writeln!(out, "{x:.16e}")?;
    }
    Ok(())
}

/// Matrix Market `array real general` format, column-major.
pub fn write_matrix_market<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix array real general")?;
    writeln!(out, "{} {}", m.nrows(), m.ncols())?;
    for x in m.iter() {
        writeln!(out, "{x:.16e}")?;
    }
    Ok(())
}

/// Comma separated table with a header line.
pub fn write_csv<W: Write>(header: &[&str], rows: &[Vec<String>], mut out: W) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_market_layout() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let vals: Vec<f64> = text.lines().skip(2).map(|l| l.parse().unwrap()).collect();
        assert_eq!(vals, vec![1.0, 3.0, 2.0, 4.0]);
    }
}
