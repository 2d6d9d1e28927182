//! Discrete operators of the filtered back-projection pipelines.
//!
//! Every operator acting along the radial (or time) axis is independent of
//! the detector, so its quadrature weights are tabulated once and applied to
//! each detector row. Every operator producing an image goes through the
//! same linear-interpolation back-projection, which keeps all pipelines at
//! `O(N^3)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grids::{check_ring_radius, norm, DetectorRing, ImageData, ImageGrid, MeansData, RadialGrid, WaveTraceData};
use crate::quad::GaussLegendre;
use crate::weights::{spread, RowMap};

const MODULE: &str = "operators";

/// `x log|x|` with the limit value 0 at `x = 0`.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.abs().ln()
    }
}

/// Discrete `d/dr r d/dr`:
/// `(1/h_r)((m+1/2) G[m+1] + (m-1/2) G[m-1] - 2m G[m])`, zero ghosts.
pub fn radial_filter(means: &MeansData) -> MeansData {
    let h = means.rgrid.step();
    let cols = means.cols();
    let mut out = vec![0.0; means.values.len()];
    for (o, g) in out.chunks_exact_mut(cols).zip(means.values.chunks_exact(cols)) {
        for m in 0..cols {
            let mf = m as f64;
            let next = if m + 1 < cols { g[m + 1] } else { 0.0 };
            let prev = if m > 0 { g[m - 1] } else { 0.0 };
            o[m] = ((mf + 0.5) * next + (mf - 0.5) * prev - 2.0 * mf * g[m]) / h;
        }
    }
    means.with_values(out)
}

/// Analytic coefficients of the log kernel against linear splines:
/// `a[m][m'] = int_{r^m'}^{r^m'+1} log|r^2 - (r^m)^2| dr` and
/// `b[m][m'] = int_{r^m'}^{r^m'+1} (r - r^m') log|r^2 - (r^m)^2| dr`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTable {
    pub rgrid: RadialGrid,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl KernelTable {
    pub fn a(&self, m: usize, mp: usize) -> f64 {
        self.a[m * self.rgrid.intervals() + mp]
    }

    pub fn b(&self, m: usize, mp: usize) -> f64 {
        self.b[m * self.rgrid.intervals() + mp]
    }
}

pub fn build_kernel_table(rgrid: &RadialGrid) -> KernelTable {
    let nr = rgrid.intervals();
    let rows = rgrid.len();
    let mut a = vec![0.0; rows * nr];
    let mut b = vec![0.0; rows * nr];
    a.par_chunks_mut(nr)
        .zip(b.par_chunks_mut(nr))
        .enumerate()
        .for_each(|(m, (arow, brow))| {
            let rm = rgrid.node(m);
            let prim_a = |r: f64| xlogx(r - rm) + xlogx(r + rm) - 2.0 * r;
            let prim_b = |r: f64| 0.5 * (xlogx((r - rm) * (r + rm)) - r * r);
            let mut pa = prim_a(0.0);
            let mut pb = prim_b(0.0);
            for mp in 0..nr {
                let hi = rgrid.node(mp + 1);
                let (qa, qb) = (prim_a(hi), prim_b(hi));
                arow[mp] = qa - pa;
                brow[mp] = -rgrid.node(mp) * arow[mp] + (qb - pb);
                pa = qa;
                pb = qb;
            }
        });
    KernelTable { rgrid: *rgrid, a, b }
}

/// Exact integral of the linear spline of each row against
/// `log|r^2 - (r^m)^2|`.
pub fn log_convolve(means: &MeansData, table: &KernelTable) -> Result<MeansData> {
    if means.rgrid != table.rgrid {
        return Err(Error::mismatch(MODULE, "kernel table built on a different radial grid"));
    }
    let nr = table.rgrid.intervals();
    let h = table.rgrid.step();
    let cols = means.cols();
    let mut out = vec![0.0; means.values.len()];
    out.par_chunks_mut(cols)
        .zip(means.values.par_chunks(cols))
        .for_each(|(o, g)| {
            let slopes: Vec<f64> = (0..nr).map(|i| (g[i + 1] - g[i]) / h).collect();
            for (m, om) in o.iter_mut().enumerate() {
                let arow = &table.a[m * nr..(m + 1) * nr];
                let brow = &table.b[m * nr..(m + 1) * nr];
                let mut acc = 0.0;
                for i in 0..nr {
                    acc += arow[i] * g[i] + brow[i] * slopes[i];
                }
                *om = acc;
            }
        });
    Ok(means.with_values(out))
}

/// Trapezoidal back-projection with linear interpolation:
/// `(1/(N_phi+1)) sum_k T^k[G](|x - p^k|)` inside the disk, zero outside.
pub fn back_project(data: &MeansData, igrid: &ImageGrid) -> Result<ImageData> {
    check_ring_radius(&data.ring, igrid.r0())?;
    Ok(back_project_rows(
        &data.ring,
        data.rgrid.step(),
        &data.values,
        igrid,
        0.0,
    ))
}

/// Back-projection of detector rows sampled with spacing `step` from 0.
///
/// Points with `|x| < R0 + margin` are evaluated; with a positive margin the
/// last radial interval is extended linearly so that a stencil reaching just
/// outside the disk still sees smooth values.
pub(crate) fn back_project_rows(
    ring: &DetectorRing,
    step: f64,
    rows: &[f64],
    igrid: &ImageGrid,
    margin: f64,
) -> ImageData {
    let count = ring.count();
    let cols = rows.len() / count;
    let positions = ring.positions();
    let limit = igrid.r0() + margin;
    let inv = 1.0 / count as f64;
    let side = igrid.side();
    let mut values = vec![0.0; side * side];
    values.par_chunks_mut(side).enumerate().for_each(|(i2, line)| {
        for (i1, v) in line.iter_mut().enumerate() {
            let x = igrid.point(i1, i2);
            if norm(x) >= limit {
                continue;
            }
            let mut acc = 0.0;
            for (k, p) in positions.iter().enumerate() {
                let d = (x[0] - p[0]).hypot(x[1] - p[1]);
                let row = &rows[k * cols..(k + 1) * cols];
                let s = d / step;
                let m = (s.floor() as usize).min(cols - 2);
                let frac = s - m as f64;
                acc += row[m] + frac * (row[m + 1] - row[m]);
            }
            *v = acc * inv;
        }
    });
    ImageData { grid: *igrid, values }
}

/// Five-point Laplacian. The boundary ring of the square and every point
/// outside the disk are set to zero.
pub fn discrete_laplacian(img: &ImageData) -> ImageData {
    let g = img.grid;
    let side = g.side();
    let h2 = g.step() * g.step();
    let f = &img.values;
    let mut out = vec![0.0; f.len()];
    for i2 in 1..side.saturating_sub(1) {
        for i1 in 1..side - 1 {
            if !g.inside(i1, i2) {
                continue;
            }
            let c = g.index(i1, i2);
            out[c] = (f[c + 1] + f[c - 1] + f[c + side] + f[c - side] - 4.0 * f[c]) / h2;
        }
    }
    ImageData { grid: g, values: out }
}

/// Laplacian of `x -> G(|x - p|)` evaluated on the radial nodes:
/// `G'' + G'/r`, using the evenness of `G` at `r = 0` and one-sided
/// differences at `r = 2R0`.
pub fn radial_laplacian(data: &MeansData) -> MeansData {
    let h = data.rgrid.step();
    let h2 = h * h;
    let cols = data.cols();
    let mut out = vec![0.0; data.values.len()];
    for (o, g) in out.chunks_exact_mut(cols).zip(data.values.chunks_exact(cols)) {
        let n = cols - 1;
        o[0] = 4.0 * (g[1] - g[0]) / h2;
        for m in 1..n {
            let mf = m as f64;
            o[m] = ((mf + 0.5) * g[m + 1] - 2.0 * mf * g[m] + (mf - 0.5) * g[m - 1]) / (mf * h2);
        }
        if n >= 3 {
            let d2 = (2.0 * g[n] - 5.0 * g[n - 1] + 4.0 * g[n - 2] - g[n - 3]) / h2;
            let d1 = (3.0 * g[n] - 4.0 * g[n - 1] + g[n - 2]) / (2.0 * h);
            o[n] = d2 + d1 / (n as f64 * h);
        } else {
            o[n] = o[n - 1];
        }
    }
    data.with_values(out)
}

/// Symmetry of the extension of radial samples to `[-2R0, 2R0]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Odd => -1.0,
            Parity::Even => 1.0,
        }
    }
}

/// P.V. integral of a unit hat centred at offset `d` (in grid steps) from
/// the evaluation point: `PV int (1-|u|)_+ / (d - u) du`.
#[inline]
pub fn pv_hat(d: f64) -> f64 {
    xlogx(d + 1.0) - 2.0 * xlogx(d) + xlogx(d - 1.0)
}

/// Left half hat (node at the right end of the interval).
fn pv_half_hat_left(d: f64) -> f64 {
    xlogx(1.0 + d) - (1.0 + d) * log_or_zero(d) - 1.0
}

/// Right half hat (node at the left end of the interval).
fn pv_half_hat_right(d: f64) -> f64 {
    (1.0 - d) * log_or_zero(d) + xlogx(d - 1.0) + 1.0
}

/// `log|x|`, with the endpoint divergence at 0 dropped (finite part).
fn log_or_zero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().ln()
    }
}

/// `PV int_{-2R0}^{2R0} g(r) / (s - r) dr` for the linear spline through
/// samples `g[m] = g(m h)` on `[0, 2R0]`, extended to negative `r` with the
/// given parity.
pub fn pv_integral(g: &[f64], step: f64, parity: Parity, s: f64) -> f64 {
    let nr = g.len() - 1;
    let sign = parity.sign();
    let d = s / step;
    let mut acc = g[0] * pv_hat(d);
    for (j, &gj) in g.iter().enumerate().take(nr).skip(1) {
        let jf = j as f64;
        acc += gj * (pv_hat(d - jf) + sign * pv_hat(d + jf));
    }
    if nr >= 1 {
        let n = nr as f64;
        acc += g[nr] * (pv_half_hat_left(d - n) + sign * pv_half_hat_right(d + n));
    }
    acc
}

/// Tabulates `pv_integral` at every radial node for each detector row.
pub fn pv_filter(data: &MeansData, parity: Parity) -> MeansData {
    let cols = data.cols();
    let nr = cols - 1;
    let sign = parity.sign();
    // hat weights by integer offset, odd in the offset
    let hat: Vec<f64> = (0..=2 * nr + 1).map(|d| pv_hat(d as f64)).collect();
    let hat_at = |d: isize| if d >= 0 { hat[d as usize] } else { -hat[(-d) as usize] };
    let n = nr as f64;
    let ends: Vec<(f64, f64)> = (0..cols)
        .map(|m| {
            let mf = m as f64;
            (pv_half_hat_left(mf - n), pv_half_hat_right(mf + n))
        })
        .collect();
    let mut out = vec![0.0; data.values.len()];
    out.par_chunks_mut(cols)
        .zip(data.values.par_chunks(cols))
        .for_each(|(o, g)| {
            for (m, om) in o.iter_mut().enumerate() {
                let mi = m as isize;
                let mut acc = g[0] * hat_at(mi);
                for (j, &gj) in g.iter().enumerate().take(nr).skip(1) {
                    let ji = j as isize;
                    acc += gj * (hat_at(mi - ji) + sign * hat_at(mi + ji));
                }
                acc += g[nr] * (ends[m].0 + sign * ends[m].1);
                *om = acc;
            }
        });
    data.with_values(out)
}

/// `(1/2 pi R0) int_S PV int g(r) / (|x-p| - r) dr ds(p)` for odd `g`
/// sampled on `[0, 2R0]` (the input holds `r d/dr M f`).
pub fn pv_convolve_hilbert(g: &MeansData, igrid: &ImageGrid) -> Result<ImageData> {
    let filtered = pv_filter(g, Parity::Odd);
    back_project(&filtered, igrid)
}

/// `K(t, rbar) = int_t^{2R0} r log|r^2 - rbar^2| / sqrt(r^2 - t^2) dr` in
/// closed form, for `0 <= t, rbar <= 2R0`.
pub fn wave_kernel(t: f64, rbar: f64, r0: f64) -> f64 {
    let d = 2.0 * r0;
    let a = ((d - t) * (d + t)).max(0.0).sqrt();
    if a == 0.0 {
        return 0.0;
    }
    if t < rbar {
        let b = ((rbar - t) * (rbar + t)).sqrt();
        -2.0 * a + xlogx(a + b) + xlogx(a - b)
    } else {
        let c = ((t - rbar) * (t + rbar)).sqrt();
        a * (((d - rbar) * (d + rbar)).ln() - 2.0) + 2.0 * c * a.atan2(c)
    }
}

/// Weights of `H(c^m) = int_c^T G(t) / sqrt(t^2 - c^2) dt` on the samples of
/// `G` (linear interpolant, zero beyond `T`).
///
/// For `c > 0` the substitution `t = c cosh(psi)` removes the singularity;
/// Gauss–Legendre panels end at `acosh(t^j / c)`. At `c = 0` the exact
/// integral of the spline against `1/t` is used and the `t = 0` sample is
/// dropped (the weighted data vanish there).
pub(crate) fn adjoint_inner_weights(tgrid: &crate::grids::TimeGrid, cgrid: &RadialGrid) -> RowMap {
    let gl = GaussLegendre::new(4);
    let ht = tgrid.step();
    let nt = tgrid.intervals();
    let horizon = tgrid.horizon();
    let mut map = RowMap::zeros(cgrid.len(), tgrid.len());
    {
        let row = map.row_mut(0);
        row[1] += 1.0;
        for j in 1..nt {
            let (ta, tb) = (tgrid.node(j), tgrid.node(j + 1));
            let l = (tb / ta).ln();
            row[j] += tb / ht * l - 1.0;
            row[j + 1] += 1.0 - ta / ht * l;
        }
    }
    for m in 1..cgrid.len() {
        let c = cgrid.node(m);
        if c >= horizon {
            continue;
        }
        let row = map.row_mut(m);
        let first = ((c / ht).floor() as usize).min(nt - 1);
        let mut lo = 0.0f64;
        for cell in first..nt {
            let hi = (tgrid.node(cell + 1) / c).acosh();
            for (psi, w) in gl.mapped(lo, hi) {
                spread(row, cell, ht, c * psi.cosh(), w);
            }
            lo = hi;
        }
    }
    map
}

/// Formal adjoint of `P`:
/// `(P* G)(y) = (1/2pi) int_S int_{|y-p|}^inf G(p,t) / sqrt(t^2 - |y-p|^2) dt ds(p)`,
/// truncated at the trace horizon.
///
/// The inner integral is tabulated on `cgrid` (`c = |y - p|` in `[0, 2R0]`)
/// and back-projected with the arc-length weight `R0 h_phi`.
pub fn adjoint_p_star(trace: &WaveTraceData, igrid: &ImageGrid, cgrid: &RadialGrid) -> Result<ImageData> {
    check_ring_radius(&trace.ring, igrid.r0())?;
    check_ring_radius(&trace.ring, cgrid.r0())?;
    if trace.tgrid.horizon() < cgrid.max() * (1.0 - 1e-12) {
        return Err(Error::precondition(
            MODULE,
            format!(
                "adjoint needs traces up to t = {} at least, horizon is {}",
                cgrid.max(),
                trace.tgrid.horizon()
            ),
        ));
    }
    let map = adjoint_inner_weights(&trace.tgrid, cgrid);
    let inner = map.apply_rows(&trace.values, trace.ring.count());
    let img = back_project_rows(&trace.ring, cgrid.step(), &inner, igrid, 0.0);
    Ok(img.scaled(trace.ring.radius()))
}
