//! Sampling geometries, phantoms and the data containers shared by every
//! other module.
//!
//! Layout conventions:
//! * ring data (`MeansData`, `WaveTraceData`) is detector-major: row `k`
//!   holds the samples of detector `p^k`;
//! * images are stored row by row with `i2` (the y index) as the row and
//!   `i1` as the column, row 0 at `y = -R0`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const MODULE: &str = "grids";

/// Detectors `p^k = R0 (cos k h_phi, sin k h_phi)`, `k = 0..count`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorRing {
    radius: f64,
    count: usize,
}

impl DetectorRing {
    pub fn new(radius: f64, count: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::precondition(
                MODULE,
                format!("ring radius must be positive, got {radius}"),
            ));
        }
        if count == 0 {
            return Err(Error::precondition(MODULE, "ring needs at least one detector"));
        }
        Ok(Self { radius, count })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of detectors, `N_phi + 1`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn angle_step(&self) -> f64 {
        2.0 * PI / self.count as f64
    }

    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * self.angle_step()
    }

    pub fn position(&self, k: usize) -> Point {
        let (s, c) = self.angle(k).sin_cos();
        [self.radius * c, self.radius * s]
    }

    pub fn positions(&self) -> Vec<Point> {
        (0..self.count).map(|k| self.position(k)).collect()
    }
}

/// Uniform grid `r^m = m h_r` on `[0, 2 R0]` with `h_r = 2 R0 / N_r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialGrid {
    r0: f64,
    intervals: usize,
}

impl RadialGrid {
    pub fn new(r0: f64, intervals: usize) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::precondition(
                MODULE,
                format!("radial grid R0 must be positive, got {r0}"),
            ));
        }
        if intervals == 0 {
            return Err(Error::precondition(MODULE, "radial grid needs N_r >= 1"));
        }
        Ok(Self { r0, intervals })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// `N_r`; the grid has `N_r + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        2.0 * self.r0 / self.intervals as f64
    }

    pub fn node(&self, m: usize) -> f64 {
        m as f64 * self.step()
    }

    pub fn max(&self) -> f64 {
        2.0 * self.r0
    }

    /// Piecewise linear interpolant of `values` at `r`, zero outside `[0, 2 R0]`.
    pub fn interpolate(&self, values: &[f64], r: f64) -> f64 {
        lerp_uniform(values, self.step(), r)
    }
}

/// Uniform time grid `t^j = j h_t`, `j = 0..=N_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    step: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(step: f64, intervals: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::precondition(
                MODULE,
                format!("time step must be positive, got {step}"),
            ));
        }
        if intervals == 0 {
            return Err(Error::precondition(MODULE, "time grid needs N_t >= 1"));
        }
        Ok(Self { step, intervals })
    }

    /// Grid with `intervals` steps covering `[0, horizon]`.
    pub fn with_horizon(horizon: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::precondition(MODULE, "time grid needs N_t >= 1"));
        }
        Self::new(horizon / intervals as f64, intervals)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.intervals as f64 * self.step
    }

    /// Piecewise linear interpolant of `values` at `t`, zero beyond the horizon.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        lerp_uniform(values, self.step, t)
    }
}

/// Linear interpolation on nodes `i * step`, zero outside the node range.
pub(crate) fn lerp_uniform(values: &[f64], step: f64, x: f64) -> f64 {
    let last = values.len() - 1;
    if x < 0.0 {
        return 0.0;
    }
    let s = x / step;
    let m = s.floor();
    if m >= last as f64 {
        return if s <= last as f64 { values[last] } else { 0.0 };
    }
    let m = m as usize;
    let frac = s - m as f64;
    values[m] + frac * (values[m + 1] - values[m])
}

/// Cartesian grid `x^i = (-R0, -R0) + i h_x`, `i in {0..N}^2`, `h_x = 2 R0 / N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageGrid {
    r0: f64,
    n: usize,
}

impl ImageGrid {
    pub fn new(r0: f64, n: usize) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::precondition(
                MODULE,
                format!("image grid R0 must be positive, got {r0}"),
            ));
        }
        if n == 0 {
            return Err(Error::precondition(MODULE, "image grid needs N >= 1"));
        }
        Ok(Self { r0, n })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// `N`; each axis has `N + 1` points.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> usize {
        self.n + 1
    }

    pub fn step(&self) -> f64 {
        2.0 * self.r0 / self.n as f64
    }

    pub fn point(&self, i1: usize, i2: usize) -> Point {
        let h = self.step();
        [-self.r0 + i1 as f64 * h, -self.r0 + i2 as f64 * h]
    }

    /// Point for a flat (row-major) index.
    pub fn point_at(&self, idx: usize) -> Point {
        self.point(idx % self.side(), idx / self.side())
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i2 * self.side() + i1
    }

    /// Strictly inside the open disk `|x| < R0`.
    pub fn inside(&self, i1: usize, i2: usize) -> bool {
        let [x, y] = self.point(i1, i2);
        x.hypot(y) < self.r0
    }

    pub fn inside_at(&self, idx: usize) -> bool {
        self.inside(idx % self.side(), idx / self.side())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformDisk {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
}

impl UniformDisk {
    pub fn value(&self, x: Point) -> f64 {
        if dist(x, self.center) < self.radius {
            self.amplitude
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianBlob {
    pub center: Point,
    pub sigma: f64,
    pub amplitude: f64,
}

impl GaussianBlob {
    /// Untruncated value `A exp(-|x-c|^2 / (2 sigma^2))`.
    pub fn value(&self, x: Point) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        self.amplitude * (-(dx * dx + dy * dy) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Effective support of a Gaussian blob in units of sigma.
pub const GAUSSIAN_SUPPORT_SIGMAS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Disk(UniformDisk),
    Gaussian(GaussianBlob),
}

impl Primitive {
    pub fn disk(center: Point, radius: f64, amplitude: f64) -> Self {
        Primitive::Disk(UniformDisk {
            center,
            radius,
            amplitude,
        })
    }

    pub fn gaussian(center: Point, sigma: f64, amplitude: f64) -> Self {
        Primitive::Gaussian(GaussianBlob {
            center,
            sigma,
            amplitude,
        })
    }

    pub fn value(&self, x: Point) -> f64 {
        match self {
            Primitive::Disk(d) => d.value(x),
            Primitive::Gaussian(g) => g.value(x),
        }
    }

    /// Radius of the disk around the origin that contains the (effective)
    /// support.
    pub fn extent(&self) -> f64 {
        match self {
            Primitive::Disk(d) => norm(d.center) + d.radius,
            Primitive::Gaussian(g) => norm(g.center) + GAUSSIAN_SUPPORT_SIGMAS * g.sigma,
        }
    }
}

/// Superposition of uniform disks and Gaussian blobs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Phantom {
    pub primitives: Vec<Primitive>,
}

impl Phantom {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Self { primitives }
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// True when the phantom contains no indicator functions.
    pub fn is_smooth(&self) -> bool {
        self.primitives.iter().all(|p| matches!(p, Primitive::Gaussian(_)))
    }

    pub fn concat(&self, other: &Phantom) -> Phantom {
        let mut primitives = self.primitives.clone();
        primitives.extend_from_slice(&other.primitives);
        Phantom { primitives }
    }

    /// Checks the support rules against a disk of radius `r0`.
    pub fn validate(&self, r0: f64) -> Result<()> {
        for (i, p) in self.primitives.iter().enumerate() {
            let (size, what) = match p {
                Primitive::Disk(d) => (d.radius, "disk radius"),
                Primitive::Gaussian(g) => (g.sigma, "gaussian sigma"),
            };
            if !(size > 0.0 && size.is_finite()) {
                return Err(Error::precondition(
                    MODULE,
                    format!("primitive {i}: {what} must be positive"),
                ));
            }
            let amp = match p {
                Primitive::Disk(d) => d.amplitude,
                Primitive::Gaussian(g) => g.amplitude,
            };
            if !amp.is_finite() {
                return Err(Error::precondition(
                    MODULE,
                    format!("primitive {i}: amplitude must be finite"),
                ));
            }
            let extent = p.extent();
            if extent.is_nan() || extent > r0 * (1.0 + 1e-12) {
                return Err(Error::precondition(
                    MODULE,
                    format!("primitive {i} reaches radius {extent}, outside the disk of radius {r0}"),
                ));
            }
        }
        Ok(())
    }

    /// Pointwise value of the superposition (Gaussians untruncated).
    pub fn value(&self, x: Point) -> f64 {
        self.primitives.iter().map(|p| p.value(x)).sum()
    }

    /// Value with everything at `|x| >= r0` set to zero.
    pub fn value_in_disk(&self, x: Point, r0: f64) -> f64 {
        if norm(x) < r0 {
            self.value(x)
        } else {
            0.0
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| match p {
                Primitive::Disk(d) => d.amplitude.abs(),
                Primitive::Gaussian(g) => g.amplitude.abs(),
            })
            .sum()
    }
}

pub(crate) fn norm(x: Point) -> f64 {
    x[0].hypot(x[1])
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Circular means `F[k][m] = (M f)(p^k, r^m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeansData {
    pub ring: DetectorRing,
    pub rgrid: RadialGrid,
    pub values: Vec<f64>,
}

impl MeansData {
    pub fn zeros(ring: DetectorRing, rgrid: RadialGrid) -> Result<Self> {
        check_ring_radius(&ring, rgrid.r0())?;
        Ok(Self {
            ring,
            rgrid,
            values: vec![0.0; ring.count() * rgrid.len()],
        })
    }

    pub fn from_values(ring: DetectorRing, rgrid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        check_ring_radius(&ring, rgrid.r0())?;
        if values.len() != ring.count() * rgrid.len() {
            return Err(Error::mismatch(
                MODULE,
                format!("{} values for {}x{} means", values.len(), ring.count(), rgrid.len()),
            ));
        }
        Ok(Self { ring, rgrid, values })
    }

    pub fn cols(&self) -> usize {
        self.rgrid.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let c = self.cols();
        &self.values[k * c..(k + 1) * c]
    }

    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.values[k * self.cols() + m]
    }

    /// Same geometry, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            ring: self.ring,
            rgrid: self.rgrid,
            values,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    /// `P f`: initial data `(0, f)`.
    P,
    /// `W f = d/dt P f`: initial data `(f, 0)`.
    W,
}

/// Boundary trace `U[k][j] = u(p^k, t^j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveTraceData {
    pub ring: DetectorRing,
    pub tgrid: TimeGrid,
    pub kind: TraceKind,
    pub values: Vec<f64>,
}

impl WaveTraceData {
    pub fn from_values(ring: DetectorRing, tgrid: TimeGrid, kind: TraceKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != ring.count() * tgrid.len() {
            return Err(Error::mismatch(
                MODULE,
                format!("{} values for {}x{} trace", values.len(), ring.count(), tgrid.len()),
            ));
        }
        Ok(Self {
            ring,
            tgrid,
            kind,
            values,
        })
    }

    pub fn cols(&self) -> usize {
        self.tgrid.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let c = self.cols();
        &self.values[k * c..(k + 1) * c]
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.cols() + j]
    }
}

/// Values on the `(N+1)^2` reconstruction grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageData {
    pub grid: ImageGrid,
    pub values: Vec<f64>,
}

impl ImageData {
    pub fn zeros(grid: ImageGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.side() * grid.side()],
        }
    }

    pub fn from_values(grid: ImageGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.side() * grid.side() {
            return Err(Error::mismatch(
                MODULE,
                format!("{} values for a {}^2 image", values.len(), grid.side()),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn get(&self, i1: usize, i2: usize) -> f64 {
        self.values[self.grid.index(i1, i2)]
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self
    }
}

pub(crate) fn check_ring_radius(ring: &DetectorRing, r0: f64) -> Result<()> {
    if (ring.radius() - r0).abs() > 1e-12 * r0 {
        return Err(Error::mismatch(
            MODULE,
            format!("ring radius {} differs from grid R0 {}", ring.radius(), r0),
        ));
    }
    Ok(())
}

/// Samples `phantom` pointwise on `grid`, zero at points with `|x| >= R0`.
pub fn sample_phantom(phantom: &Phantom, grid: &ImageGrid) -> Result<ImageData> {
    phantom.validate(grid.r0())?;
    let side = grid.side();
    let values = (0..side * side)
        .map(|idx| {
            if grid.inside_at(idx) {
                phantom.value(grid.point_at(idx))
            } else {
                0.0
            }
        })
        .collect();
    Ok(ImageData { grid: *grid, values })
}

/// Named test scenes.
pub mod presets {
    use super::{Phantom, Primitive};

    /// Single off-centre Gaussian, the smooth reference scene.
    pub fn gaussian() -> Phantom {
        Phantom::new(vec![Primitive::gaussian([0.1, 0.05], 0.15, 1.0)])
    }

    /// Two smooth blobs of opposite sign.
    pub fn two_gaussians() -> Phantom {
        Phantom::new(vec![
            Primitive::gaussian([-0.25, 0.1], 0.12, 1.0),
            Primitive::gaussian([0.3, -0.2], 0.1, -0.6),
        ])
    }

    /// Several characteristic functions and one Gaussian kernel.
    pub fn mixed() -> Phantom {
        Phantom::new(vec![
            Primitive::disk([0.0, 0.0], 0.7, 0.5),
            Primitive::disk([-0.25, 0.2], 0.25, 0.5),
            Primitive::disk([0.3, -0.25], 0.15, -0.3),
            Primitive::gaussian([0.2, 0.3], 0.08, 0.8),
        ])
    }

    /// Two concentric disks: plateau 1 on `0.3 < |x| < 0.6`, 1.5 inside.
    pub fn concentric() -> Phantom {
        Phantom::new(vec![
            Primitive::disk([0.0, 0.0], 0.6, 1.0),
            Primitive::disk([0.0, 0.0], 0.3, 0.5),
        ])
    }
}
