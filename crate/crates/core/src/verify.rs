//! Executable identities, convergence studies and error metrics.

use std::f64::consts::PI;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::forward::{circular_mean, first_derivative, second_derivative, wave_trace_p, wave_trace_w};
use crate::grids::{
    norm, sample_phantom, DetectorRing, ImageData, ImageGrid, MeansData, Phantom, Point, RadialGrid, TimeGrid,
    TraceKind, WaveTraceData,
};
use crate::quad::{tanh_sinh, GaussLegendre};
use crate::recon::{reconstruct, InputKind, Method, ReconConfig, ReconInput, DEFAULT_TMAX_FACTOR};

const MODULE: &str = "verification";

/// Both sides of `int_S log||x-p|^2 - |y-p|^2| ds(p) = 2 pi R0 (log|x-y| + log R0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyIdentity {
    pub lhs: f64,
    pub rhs: f64,
}

impl KeyIdentity {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs() / (1.0 + self.rhs.abs())
    }
}

/// The integrand vanishes at the two angles `theta_e +- acos(a)`, where
/// `theta_e` is the direction of `x - y` and
/// `a = (|x|^2 - |y|^2) / (2 R0 |x - y|)`. The circle is split there and each
/// arc integrated by tanh-sinh quadrature with `quad_n / 2` points, which
/// absorbs the logarithmic endpoint singularities.
pub fn verify_key_identity(x: Point, y: Point, r0: f64, quad_n: usize) -> Result<KeyIdentity> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::precondition(MODULE, format!("R0 must be positive, got {r0}")));
    }
    if norm(x) >= r0 || norm(y) >= r0 {
        return Err(Error::precondition(
            MODULE,
            "both points must lie strictly inside the disk",
        ));
    }
    if x == y {
        return Err(Error::precondition(MODULE, "points must differ"));
    }
    if quad_n < 8 {
        return Err(Error::precondition(
            MODULE,
            format!("quad_n must be at least 8, got {quad_n}"),
        ));
    }
    // canonical order makes the result exactly symmetric in (x, y)
    let (x, y) = if (x[0], x[1]) <= (y[0], y[1]) { (x, y) } else { (y, x) };
    let e = [x[0] - y[0], x[1] - y[1]];
    let dist = e[0].hypot(e[1]);
    let c = (x[0] * x[0] + x[1] * x[1]) - (y[0] * y[0] + y[1] * y[1]);
    let theta_e = e[1].atan2(e[0]);
    let alpha = (c / (2.0 * r0 * dist)).clamp(-1.0, 1.0).acos();
    let f = |phi: f64| (c - 2.0 * r0 * dist * (phi - theta_e).cos()).abs().ln();
    let first = theta_e - alpha;
    let second = theta_e + alpha;
    let points = (quad_n / 2).max(3);
    let lhs = r0 * (tanh_sinh(f, first, second, points) + tanh_sinh(f, second, first + 2.0 * PI, points));
    let rhs = 2.0 * PI * r0 * (dist.ln() + r0.ln());
    Ok(KeyIdentity { lhs, rhs })
}

/// Grids of the trace identity check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceIdentityConfig {
    pub r0: f64,
    pub n_phi: usize,
    pub n_r: usize,
    pub n_t: usize,
    pub t_max: f64,
    /// Resolution of the grid on which `<f, g>` is summed.
    pub image_n: usize,
    pub quad_n: usize,
}

impl TraceIdentityConfig {
    pub fn new(r0: f64) -> Self {
        Self {
            r0,
            n_phi: 128,
            n_r: 512,
            n_t: 4096,
            t_max: DEFAULT_TMAX_FACTOR * r0,
            image_n: 1600,
            quad_n: 1024,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceIdentity {
    /// `<f, g>` over the disk.
    pub lhs: f64,
    /// `-(2/R0) int_S int t u_tt v dt ds`.
    pub rhs_asymm: f64,
    /// `(2/R0) int_S int t u_t v_t dt ds`.
    pub rhs_symm: f64,
    /// `||f|| ||g||`, the natural scale of the three values.
    pub scale: f64,
}

/// `<f, g>` against the two trace pairings of the `P` traces `u = P f`,
/// `v = P g`.
pub fn verify_trace_identity(f: &Phantom, g: &Phantom, cfg: &TraceIdentityConfig) -> Result<TraceIdentity> {
    if cfg.t_max < DEFAULT_TMAX_FACTOR * cfg.r0 * (1.0 - 1e-12) {
        return Err(Error::precondition(
            MODULE,
            format!(
                "trace identity needs T_max >= {} R0, got {}",
                DEFAULT_TMAX_FACTOR, cfg.t_max
            ),
        ));
    }
    f.validate(cfg.r0)?;
    g.validate(cfg.r0)?;
    let igrid = ImageGrid::new(cfg.r0, cfg.image_n)?;
    let fi = sample_phantom(f, &igrid)?;
    let gi = sample_phantom(g, &igrid)?;
    let area = igrid.step() * igrid.step();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * area;
    let lhs = dot(&fi.values, &gi.values);
    let scale = (dot(&fi.values, &fi.values) * dot(&gi.values, &gi.values)).sqrt();

    let ring = DetectorRing::new(cfg.r0, cfg.n_phi)?;
    let rgrid = RadialGrid::new(cfg.r0, cfg.n_r)?;
    let tgrid = TimeGrid::with_horizon(cfg.t_max, cfg.n_t)?;
    let u = wave_trace_p(&circular_mean(f, &ring, &rgrid, cfg.quad_n)?, &tgrid)?;
    let v = wave_trace_p(&circular_mean(g, &ring, &rgrid, cfg.quad_n)?, &tgrid)?;
    let ht = tgrid.step();
    let last = tgrid.intervals();
    let weight = |j: usize| {
        let w = if j == 0 || j == last { 0.5 * ht } else { ht };
        w * tgrid.node(j)
    };
    let (mut asymm, mut symm) = (0.0, 0.0);
    for k in 0..ring.count() {
        let (ur, vr) = (u.row(k), v.row(k));
        let utt = second_derivative(ur, ht);
        let ut = first_derivative(ur, ht);
        let vt = first_derivative(vr, ht);
        for j in 0..tgrid.len() {
            asymm += weight(j) * utt[j] * vr[j];
            symm += weight(j) * ut[j] * vt[j];
        }
    }
    // ds(p) = R0 h_phi, against the 2/R0 prefactor
    let ds = ring.angle_step();
    Ok(TraceIdentity {
        lhs,
        rhs_asymm: -2.0 * ds * asymm,
        rhs_symm: 2.0 * ds * symm,
        scale,
    })
}

/// Both sides of
/// `d/dt int_0^t r h(r)/sqrt(t^2-r^2) dr = (1/t) int_0^t r (r h)'(r)/sqrt(t^2-r^2) dr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffAbel {
    /// Finite-difference derivative, Richardson-extrapolated over halved steps.
    pub derivative: f64,
    /// Quadrature of the right-hand side.
    pub formula: f64,
}

impl DiffAbel {
    pub fn relative_gap(&self) -> f64 {
        (self.derivative - self.formula).abs() / self.formula.abs().max(f64::MIN_POSITIVE)
    }
}

/// Default smooth profile of the differentiation check.
pub fn diff_abel_profile(r: f64) -> f64 {
    (-r * r).exp() * (1.0 + 0.5 * (3.0 * r).sin())
}

pub fn verify_diff_abel<H: Fn(f64) -> f64>(profile: H, t: f64, quad_n: usize) -> Result<DiffAbel> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::precondition(MODULE, format!("t must be positive, got {t}")));
    }
    if quad_n < 4 {
        return Err(Error::precondition(
            MODULE,
            format!("quad_n must be at least 4, got {quad_n}"),
        ));
    }
    let gl = GaussLegendre::new(8);
    let panels = quad_n.div_ceil(8);
    // r = t sin(psi) removes the inverse square root
    let abel = |t: f64, q: &dyn Fn(f64) -> f64| {
        gl.composite(0.0, 0.5 * PI, panels, |psi| {
            let r = t * psi.sin();
            r * q(r)
        })
    };
    let value = |t: f64| abel(t, &|r| profile(r));
    // Richardson table of centered differences with halved steps
    let mut step = 0.1 * t;
    let mut prev: Vec<f64> = vec![(value(t + step) - value(t - step)) / (2.0 * step)];
    let mut derivative = prev[0];
    for _ in 0..8 {
        step *= 0.5;
        let mut row = vec![(value(t + step) - value(t - step)) / (2.0 * step)];
        let mut factor = 4.0;
        for i in 0..prev.len() {
            let better = row[i] + (row[i] - prev[i]) / (factor - 1.0);
            row.push(better);
            factor *= 4.0;
        }
        let estimate = *row.last().unwrap();
        let settled = (estimate - derivative).abs() <= 1e-12 * estimate.abs().max(1.0);
        derivative = estimate;
        prev = row;
        if settled {
            break;
        }
    }
    let d = 1e-3;
    let rh = |r: f64| r * profile(r);
    let drh = |r: f64| (-rh(r + 2.0 * d) + 8.0 * rh(r + d) - 8.0 * rh(r - d) + rh(r - 2.0 * d)) / (12.0 * d);
    let formula = abel(t, &drh) / t;
    Ok(DiffAbel { derivative, formula })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub rel_l2: f64,
    pub max_abs: f64,
}

/// Error of `recon` against `reference` over the points inside the disk.
/// With a zero reference the absolute (area-weighted) L2 norm is reported.
pub fn image_metrics(recon: &ImageData, reference: &ImageData) -> Result<Metrics> {
    if recon.grid != reference.grid {
        return Err(Error::mismatch(MODULE, "images live on different grids"));
    }
    let g = recon.grid;
    let (mut num, mut den, mut max_abs) = (0.0, 0.0, 0.0f64);
    for i in (0..recon.values.len()).filter(|&i| g.inside_at(i)) {
        let d = recon.values[i] - reference.values[i];
        num += d * d;
        den += reference.values[i] * reference.values[i];
        max_abs = max_abs.max(d.abs());
    }
    let rel_l2 = if den > 0.0 {
        (num / den).sqrt()
    } else {
        (num * g.step() * g.step()).sqrt()
    };
    Ok(Metrics { rel_l2, max_abs })
}

/// Simulated input for one reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSet {
    Means(MeansData),
    Trace(WaveTraceData),
}

impl DataSet {
    pub fn as_input(&self) -> ReconInput<'_> {
        match self {
            DataSet::Means(m) => ReconInput::Means(m),
            DataSet::Trace(t) => ReconInput::Trace(t),
        }
    }
}

/// Resolution choices of simulated experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationOptions {
    pub quad_n: usize,
    /// Time intervals of the long traces the adjoint methods consume.
    pub adjoint_nt: usize,
    pub t_max_factor: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            quad_n: 1024,
            adjoint_nt: 4096,
            t_max_factor: DEFAULT_TMAX_FACTOR,
        }
    }
}

/// Exact data for `method` at `N = N_phi = N_r`: `N + 1` detectors, `N`
/// radial intervals, and for traces `N` time intervals on `[0, 2R0]` or
/// `adjoint_nt` on `[0, T_max]`.
pub fn simulate(phantom: &Phantom, method: Method, r0: f64, n: usize, opts: &SimulationOptions) -> Result<DataSet> {
    let ring = DetectorRing::new(r0, n + 1)?;
    let rgrid = RadialGrid::new(r0, n)?;
    let means = circular_mean(phantom, &ring, &rgrid, opts.quad_n)?;
    Ok(match method.input() {
        InputKind::Means => DataSet::Means(means),
        InputKind::Trace(TraceKind::W) => DataSet::Trace(wave_trace_w(&means, &TimeGrid::with_horizon(2.0 * r0, n)?)?),
        InputKind::Trace(TraceKind::P) => {
            let tg = TimeGrid::with_horizon(opts.t_max_factor * r0, opts.adjoint_nt)?;
            DataSet::Trace(wave_trace_p(&means, &tg)?)
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudyRow {
    pub n: usize,
    pub max_err: f64,
    pub l2_err: f64,
    /// `log2(e_prev / e) / log2(N / N_prev)` of the max-norm error.
    pub order: Option<f64>,
    /// Wall time of the reconstruction alone.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Study {
    pub method: Method,
    pub smooth: bool,
    pub rows: Vec<StudyRow>,
}

impl Study {
    /// Whether every observed order lies in `[lo, hi]`. Indicator phantoms
    /// are rejected: their jumps cap the order.
    pub fn orders_within(&self, lo: f64, hi: f64) -> Result<bool> {
        if !self.smooth {
            return Err(Error::precondition(
                MODULE,
                "order claims need a smooth phantom; indicator phantoms are reported only",
            ));
        }
        Ok(self.rows.iter().filter_map(|r| r.order).all(|o| (lo..=hi).contains(&o)))
    }
}

pub fn convergence_study(
    phantom: &Phantom,
    method: Method,
    sizes: &[usize],
    r0: f64,
    opts: &SimulationOptions,
) -> Result<Study> {
    if sizes.is_empty() {
        return Err(Error::precondition(MODULE, "at least one size is required"));
    }
    if sizes.iter().any(|&n| n < 32) {
        return Err(Error::precondition(MODULE, "every size must be at least 32"));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::precondition(MODULE, "sizes must be strictly ascending"));
    }
    let cfg = ReconConfig {
        t_max: opts.t_max_factor * r0,
        ..ReconConfig::new(method, r0)
    };
    let mut rows: Vec<StudyRow> = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let data = simulate(phantom, method, r0, n, opts)?;
        let igrid = ImageGrid::new(r0, n)?;
        let start = Instant::now();
        let img = reconstruct(data.as_input(), &igrid, &cfg)?;
        let seconds = start.elapsed().as_secs_f64();
        let m = image_metrics(&img, &sample_phantom(phantom, &igrid)?)?;
        let order = rows.last().and_then(|p| {
            (p.max_err > 0.0 && m.max_abs > 0.0)
                .then(|| (p.max_err / m.max_abs).log2() / (n as f64 / p.n as f64).log2())
        });
        rows.push(StudyRow {
            n,
            max_err: m.max_abs,
            l2_err: m.rel_l2,
            order,
            seconds,
        });
    }
    Ok(Study {
        method,
        smooth: phantom.is_smooth(),
        rows,
    })
}
