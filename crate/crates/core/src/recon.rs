//! Reconstruction pipelines.
//!
//! Every pipeline ends in the discrete back-projection, which averages over
//! detectors with weight `1/(N_phi+1)`. That average realizes
//! `(1/2 pi R0) int_S ds(p)`, so the continuous constants fold as follows:
//!
//! - `MInv`: `f = B I D F`, no extra factor.
//! - `MLap`: `f = Lap B I (r F)`, no extra factor.
//! - `Hilbert`: `f = B PV[r dF/dr]`, no extra factor.
//! - `Filbac`: `f = B (s PV[dF/dr])`, no extra factor.
//! - `WaveFinite`: `1/(R0 pi^2) int_S = (2/pi) B`, so `f = (2/pi) Lap B g`.
//! - `AdjointP/W`: `P* = R0 B H`, so `f = -(2/R0) P* G = -2 B H`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::forward::{first_derivative, second_derivative};
use crate::grids::{check_ring_radius, ImageData, ImageGrid, MeansData, RadialGrid, TraceKind, WaveTraceData};
use crate::operators::{
    adjoint_p_star, back_project, back_project_rows, build_kernel_table, discrete_laplacian, log_convolve, pv_filter,
    radial_filter, radial_laplacian, wave_kernel, Parity,
};
use crate::quad::GaussLegendre;
use crate::weights::{spread, RowMap};

const MODULE: &str = "reconstructors";

/// Constant `c_n` of the even-dimensional inversion formulas at `n = 2`.
pub const C2: f64 = 2.0 * PI;

/// Default trace horizon of the adjoint methods, in units of `R0`.
pub const DEFAULT_TMAX_FACTOR: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    MLap,
    MInv,
    Hilbert,
    Filbac,
    WaveFinite,
    AdjointP,
    AdjointW,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::MLap,
        Method::MInv,
        Method::Hilbert,
        Method::Filbac,
        Method::WaveFinite,
        Method::AdjointP,
        Method::AdjointW,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MLap => "mlap",
            Method::MInv => "minv",
            Method::Hilbert => "hilbert",
            Method::Filbac => "filbac",
            Method::WaveFinite => "wavefinite",
            Method::AdjointP => "adjoint-p",
            Method::AdjointW => "adjoint-w",
        }
    }

    /// Input the method consumes.
    pub fn input(self) -> InputKind {
        match self {
            Method::MLap | Method::MInv | Method::Hilbert | Method::Filbac => InputKind::Means,
            Method::WaveFinite => InputKind::Trace(TraceKind::W),
            Method::AdjointP | Method::AdjointW => InputKind::Trace(TraceKind::P),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::precondition(MODULE, format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    Means,
    Trace(TraceKind),
}

/// Borrowed reconstruction input.
#[derive(Clone, Copy, Debug)]
pub enum ReconInput<'a> {
    Means(&'a MeansData),
    Trace(&'a WaveTraceData),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconConfig {
    pub method: Method,
    pub r0: f64,
    /// Trace horizon the adjoint methods require.
    pub t_max: f64,
    /// Intervals of the radial grid on which the adjoint inner integral is
    /// tabulated; `None` uses the image resolution.
    pub adjoint_intervals: Option<usize>,
    /// Where the outer Laplacian of `MLap` and `WaveFinite` is taken.
    pub laplacian: LaplacianStage,
}

/// Stage at which the Laplacian of the Laplacian-type methods is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LaplacianStage {
    /// On each detector row, as `G'' + G'/r` at the radial nodes, before
    /// back-projection.
    #[default]
    Radial,
    /// Five-point stencil on the back-projected image. The kinks of the
    /// linear interpolant line up at the centre of the disk, where this
    /// variant keeps an `O(1)` error.
    Image,
}

impl ReconConfig {
    pub fn new(method: Method, r0: f64) -> Self {
        Self {
            method,
            r0,
            t_max: DEFAULT_TMAX_FACTOR * r0,
            adjoint_intervals: None,
            laplacian: LaplacianStage::Radial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::precondition(
                MODULE,
                format!("R0 must be positive, got {}", self.r0),
            ));
        }
        if matches!(self.method, Method::AdjointP | Method::AdjointW) && self.t_max < 2.0 * self.r0 {
            return Err(Error::precondition(
                MODULE,
                format!("adjoint methods need T_max >= 2 R0, got {}", self.t_max),
            ));
        }
        Ok(())
    }
}

/// Runs the configured method on matching input.
pub fn reconstruct(input: ReconInput<'_>, igrid: &ImageGrid, cfg: &ReconConfig) -> Result<ImageData> {
    cfg.validate()?;
    if (igrid.r0() - cfg.r0).abs() > 1e-12 * cfg.r0 {
        return Err(Error::mismatch(MODULE, "image grid and configuration disagree on R0"));
    }
    match (cfg.method, input) {
        (Method::MInv, ReconInput::Means(m)) => recon_minv(m, igrid),
        (Method::MLap, ReconInput::Means(m)) => recon_mlap_with(m, igrid, cfg.laplacian),
        (Method::Hilbert, ReconInput::Means(m)) => recon_hilbert(m, igrid),
        (Method::Filbac, ReconInput::Means(m)) => recon_filbac(m, igrid),
        (Method::WaveFinite, ReconInput::Trace(t)) => recon_wavefinite_with(t, igrid, cfg.laplacian),
        (Method::AdjointP | Method::AdjointW, ReconInput::Trace(t)) => recon_adjoint(t, igrid, cfg),
        (m, _) => Err(Error::precondition(
            MODULE,
            format!("method {m} expects {:?} input", m.input()),
        )),
    }
}

fn check_means(means: &MeansData, igrid: &ImageGrid) -> Result<()> {
    check_ring_radius(&means.ring, igrid.r0())?;
    if means.rgrid.intervals() < 2 {
        return Err(Error::precondition(MODULE, "need at least two radial intervals"));
    }
    Ok(())
}

/// `f = B_d I_d D_d F`.
pub fn recon_minv(means: &MeansData, igrid: &ImageGrid) -> Result<ImageData> {
    check_means(means, igrid)?;
    let table = build_kernel_table(&means.rgrid);
    let filtered = log_convolve(&radial_filter(means), &table)?;
    back_project(&filtered, igrid)
}

/// `f = Lap B_d I_d (r F)`.
pub fn recon_mlap(means: &MeansData, igrid: &ImageGrid) -> Result<ImageData> {
    recon_mlap_with(means, igrid, LaplacianStage::Radial)
}

pub fn recon_mlap_with(means: &MeansData, igrid: &ImageGrid, stage: LaplacianStage) -> Result<ImageData> {
    check_means(means, igrid)?;
    let cols = means.cols();
    let rg = means.rgrid;
    let weighted: Vec<f64> = means
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v * rg.node(i % cols))
        .collect();
    let table = build_kernel_table(&rg);
    let g = log_convolve(&means.with_values(weighted), &table)?;
    laplacian_and_back_projection(&g, igrid, stage)
}

fn laplacian_and_back_projection(g: &MeansData, igrid: &ImageGrid, stage: LaplacianStage) -> Result<ImageData> {
    match stage {
        LaplacianStage::Radial => back_project(&radial_laplacian(g), igrid),
        LaplacianStage::Image => {
            // one stencil width beyond the disk so the boundary points see
            // smooth neighbours
            let bp = back_project_rows(&g.ring, g.rgrid.step(), &g.values, igrid, 1.5 * igrid.step());
            Ok(discrete_laplacian(&bp))
        }
    }
}

/// Centered radial derivative of each row of the odd extension, with a zero
/// ghost value beyond `2 R0`.
fn radial_derivative(means: &MeansData) -> MeansData {
    let cols = means.cols();
    let h = means.rgrid.step();
    let mut out = vec![0.0; means.values.len()];
    for (o, f) in out.chunks_exact_mut(cols).zip(means.values.chunks_exact(cols)) {
        o[0] = f[1] / h;
        for m in 1..cols {
            let next = if m + 1 < cols { f[m + 1] } else { 0.0 };
            o[m] = (next - f[m - 1]) / (2.0 * h);
        }
    }
    means.with_values(out)
}

/// `f = B_d PV[r dF/dr]` with the odd extension of `F`.
pub fn recon_hilbert(means: &MeansData, igrid: &ImageGrid) -> Result<ImageData> {
    check_means(means, igrid)?;
    let cols = means.cols();
    let rg = means.rgrid;
    let mut g = radial_derivative(means);
    for (i, v) in g.values.iter_mut().enumerate() {
        *v *= rg.node(i % cols);
    }
    back_project(&pv_filter(&g, Parity::Odd), igrid)
}

/// `f = B_d (s PV[dF/dr])`; the `-1` part of the split kernel integrates the
/// derivative to zero.
pub fn recon_filbac(means: &MeansData, igrid: &ImageGrid) -> Result<ImageData> {
    check_means(means, igrid)?;
    let cols = means.cols();
    let rg = means.rgrid;
    let mut h = pv_filter(&radial_derivative(means), Parity::Even);
    for (i, v) in h.values.iter_mut().enumerate() {
        *v *= rg.node(i % cols);
    }
    back_project(&h, igrid)
}

/// Weights of `g(rbar^m) = int_0^{2R0} U(t) K(t, rbar^m) dt` for the
/// linear interpolant of `U`. Samples beyond `2 R0` are ignored.
///
/// `K` behaves like `sqrt(2R0 - t)` at the upper end and like
/// `sqrt(t - rbar)` just above `t = rbar`; pieces touching those points use
/// `t = (a+b)/2 - (b-a)/2 cos(theta)`, which makes the integrand smooth.
fn wavefinite_weights(tgrid: &crate::grids::TimeGrid, rgrid: &RadialGrid) -> RowMap {
    let r0 = rgrid.r0();
    let end = 2.0 * r0;
    let ht = tgrid.step();
    let plain = GaussLegendre::new(4);
    let singular = GaussLegendre::new(8);
    let mut map = RowMap::zeros(rgrid.len(), tgrid.len());
    for m in 0..rgrid.len() {
        let rbar = rgrid.node(m);
        let row = map.row_mut(m);
        let mut cell = 0;
        while cell < tgrid.intervals() && tgrid.node(cell) < end {
            let a = tgrid.node(cell);
            let b = tgrid.node(cell + 1).min(end);
            let mut cuts = vec![a];
            if rbar > a && rbar < b {
                cuts.push(rbar);
            }
            cuts.push(b);
            for piece in cuts.windows(2) {
                let (lo, hi) = (piece[0], piece[1]);
                if hi <= lo {
                    continue;
                }
                if lo == rbar || hi == end {
                    let mid = 0.5 * (lo + hi);
                    let half = 0.5 * (hi - lo);
                    for (th, w) in singular.mapped(0.0, PI) {
                        let t = mid - half * th.cos();
                        spread(row, cell, ht, t, w * half * th.sin() * wave_kernel(t, rbar, r0));
                    }
                } else {
                    for (t, w) in plain.mapped(lo, hi) {
                        spread(row, cell, ht, t, w * wave_kernel(t, rbar, r0));
                    }
                }
            }
            cell += 1;
        }
    }
    map
}

/// Finite-time inversion from `W f` on `[0, 2R0]`: `f = (2/pi) Lap B_d g`.
pub fn recon_wavefinite(trace: &WaveTraceData, igrid: &ImageGrid) -> Result<ImageData> {
    recon_wavefinite_with(trace, igrid, LaplacianStage::Radial)
}

pub fn recon_wavefinite_with(trace: &WaveTraceData, igrid: &ImageGrid, stage: LaplacianStage) -> Result<ImageData> {
    check_ring_radius(&trace.ring, igrid.r0())?;
    if trace.kind != TraceKind::W {
        return Err(Error::precondition(MODULE, "wavefinite expects a W-trace"));
    }
    let r0 = igrid.r0();
    if trace.tgrid.horizon() < 2.0 * r0 * (1.0 - 1e-12) {
        return Err(Error::precondition(
            MODULE,
            format!(
                "wavefinite needs traces up to 2 R0, horizon is {}",
                trace.tgrid.horizon()
            ),
        ));
    }
    let rg = RadialGrid::new(r0, igrid.n().max(2))?;
    let map = wavefinite_weights(&trace.tgrid, &rg);
    let g = map.apply_rows(&trace.values, trace.ring.count());
    let g = MeansData::from_values(trace.ring, rg, g)?;
    Ok(laplacian_and_back_projection(&g, igrid, stage)?.scaled(2.0 / PI))
}

/// Long-time inversion from `P f` through the adjoint of `P`.
pub fn recon_adjoint(trace: &WaveTraceData, igrid: &ImageGrid, cfg: &ReconConfig) -> Result<ImageData> {
    cfg.validate()?;
    check_ring_radius(&trace.ring, igrid.r0())?;
    if trace.kind != TraceKind::P {
        return Err(Error::precondition(MODULE, "adjoint methods expect a P-trace"));
    }
    if trace.tgrid.horizon() < cfg.t_max * (1.0 - 1e-12) {
        return Err(Error::precondition(
            MODULE,
            format!(
                "trace horizon {} is shorter than T_max = {}",
                trace.tgrid.horizon(),
                cfg.t_max
            ),
        ));
    }
    let tg = trace.tgrid;
    let h = tg.step();
    let cols = trace.cols();
    let mut g = Vec::with_capacity(trace.values.len());
    for row in trace.values.chunks_exact(cols) {
        match cfg.method {
            Method::AdjointW => {
                let mut d = first_derivative(row, h);
                for (j, v) in d.iter_mut().enumerate() {
                    *v *= tg.node(j);
                }
                g.extend(first_derivative(&d, h));
            }
            _ => {
                let d = second_derivative(row, h);
                g.extend(d.iter().enumerate().map(|(j, v)| v * tg.node(j)));
            }
        }
    }
    let weighted = WaveTraceData::from_values(trace.ring, tg, TraceKind::P, g)?;
    let cgrid = RadialGrid::new(igrid.r0(), cfg.adjoint_intervals.unwrap_or(igrid.n()).max(2))?;
    let img = adjoint_p_star(&weighted, igrid, &cgrid)?;
    Ok(img.scaled(-2.0 / igrid.r0()))
}
