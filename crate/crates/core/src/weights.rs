use rayon::prelude::*;

/// Dense linear map applied row by row to detector-major data:
/// `out[j] = sum_m w[j][m] * input[m]`.
///
/// The integral operators along the radial or time axis do not depend on
/// the detector, so their quadrature weights are built once and reused for
/// every detector row.
#[derive(Clone, Debug)]
pub(crate) struct RowMap {
    pub out_len: usize,
    pub in_len: usize,
    pub w: Vec<f64>,
}

impl RowMap {
    pub fn zeros(out_len: usize, in_len: usize) -> Self {
        Self {
            out_len,
            in_len,
            w: vec![0.0; out_len * in_len],
        }
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.w[j * self.in_len..(j + 1) * self.in_len]
    }

    pub fn apply_row(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.in_len);
        for (o, wrow) in out.iter_mut().zip(self.w.chunks_exact(self.in_len)) {
            *o = wrow.iter().zip(input).map(|(a, b)| a * b).sum();
        }
    }

    /// Applies the map to every row of a row-major `rows x in_len` block.
    pub fn apply_rows(&self, data: &[f64], rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows * self.out_len];
        out.par_chunks_mut(self.out_len)
            .zip(data.par_chunks(self.in_len))
            .for_each(|(o, i)| self.apply_row(i, o));
        out
    }
}

/// Spreads `weight` at abscissa `x` onto the two hat functions of a uniform
/// grid with spacing `step` whose cell `cell` contains `x`.
#[inline]
pub(crate) fn spread(row: &mut [f64], cell: usize, step: f64, x: f64, weight: f64) {
    let frac = (x / step - cell as f64).clamp(0.0, 1.0);
    row[cell] += weight * (1.0 - frac);
    if frac > 0.0 {
        row[cell + 1] += weight * frac;
    }
}
