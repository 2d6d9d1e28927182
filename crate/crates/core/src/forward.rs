//! Measurement simulation: circular means of phantoms, the wave traces
//! `P f` and `W f` derived from them, the inverse Abel step recovering the
//! means from `W f`, and seeded noise.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grids::{
    check_ring_radius, dist, norm, DetectorRing, MeansData, Phantom, Point, Primitive, RadialGrid, TimeGrid, TraceKind,
    UniformDisk, WaveTraceData,
};
use crate::quad::GaussLegendre;
use crate::weights::{spread, RowMap};

const MODULE: &str = "forward";

/// Gauss–Legendre points per panel of the Abel-type integrals. Panels are
/// aligned with the kinks of the linear interpolant, so the integrand is
/// smooth on each panel.
const ABEL_PANEL_ORDER: usize = 6;

/// Fraction of the circle of radius `r` about `p` lying inside `disk`.
pub fn disk_arc_fraction(disk: &UniformDisk, p: Point, r: f64) -> f64 {
    let d = dist(p, disk.center);
    let a = disk.radius;
    if r <= 0.0 {
        return if d < a { 1.0 } else { 0.0 };
    }
    if r + d <= a {
        return 1.0;
    }
    if d >= r + a || r >= d + a {
        return 0.0;
    }
    let cos_half = ((d * d + r * r - a * a) / (2.0 * d * r)).clamp(-1.0, 1.0);
    cos_half.acos() / PI
}

/// Circular means `F[k][m] = (1/2pi) int f(p^k + r^m theta) dtheta`.
///
/// Disks use the closed-form arc fraction; Gaussian blobs use a `quad_n`
/// point periodic trapezoidal rule, with the blob set to zero outside the
/// disk of radius `R0`.
pub fn circular_mean(phantom: &Phantom, ring: &DetectorRing, rgrid: &RadialGrid, quad_n: usize) -> Result<MeansData> {
    if quad_n < 16 {
        return Err(Error::precondition(
            MODULE,
            format!("quad_n must be at least 16, got {quad_n}"),
        ));
    }
    check_ring_radius(ring, rgrid.r0())?;
    phantom.validate(rgrid.r0())?;
    let r0 = rgrid.r0();
    let cols = rgrid.len();
    let trig: Vec<(f64, f64)> = (0..quad_n)
        .map(|i| (2.0 * PI * i as f64 / quad_n as f64).sin_cos())
        .collect();
    let mut values = vec![0.0; ring.count() * cols];
    values.par_chunks_mut(cols).enumerate().for_each(|(k, row)| {
        let p = ring.position(k);
        for (m, out) in row.iter_mut().enumerate() {
            let r = rgrid.node(m);
            let mut acc = 0.0;
            for prim in &phantom.primitives {
                match prim {
                    Primitive::Disk(d) => acc += d.amplitude * disk_arc_fraction(d, p, r),
                    Primitive::Gaussian(g) => {
                        let gap = (dist(p, g.center) - r).abs();
                        if gap > 12.0 * g.sigma {
                            continue;
                        }
                        if r == 0.0 {
                            // detectors sit on the boundary, where the
                            // truncated blob vanishes
                            continue;
                        }
                        let s: f64 = trig
                            .iter()
                            .map(|&(s, c)| {
                                let y = [p[0] + r * c, p[1] + r * s];
                                if norm(y) < r0 {
                                    g.value(y)
                                } else {
                                    0.0
                                }
                            })
                            .sum();
                        acc += s / quad_n as f64;
                    }
                }
            }
            *out = acc;
        }
    });
    MeansData::from_values(*ring, *rgrid, values)
}

/// Weights of `U(t^j) = int_0^t r M(r) / sqrt(t^2 - r^2) dr` acting on the
/// samples of `M` on `rgrid` (linear interpolant, zero beyond `2 R0`).
///
/// The substitution `r = t sin(psi)` turns the integrand into
/// `t sin(psi) M(t sin(psi))`, smooth on every panel between consecutive
/// `asin(r^m / t)`.
pub(crate) fn abel_forward_weights(rgrid: &RadialGrid, tgrid: &TimeGrid) -> RowMap {
    let gl = GaussLegendre::new(ABEL_PANEL_ORDER);
    let h = rgrid.step();
    let nr = rgrid.intervals();
    let mut map = RowMap::zeros(tgrid.len(), rgrid.len());
    for j in 1..tgrid.len() {
        let t = tgrid.node(j);
        let row = map.row_mut(j);
        let upper = t.min(rgrid.max());
        let mut lo = 0.0f64;
        for cell in 0..nr {
            let r_hi = rgrid.node(cell + 1);
            let last = r_hi >= upper;
            let hi = if last {
                if upper >= t {
                    FRAC_PI_2
                } else {
                    (upper / t).asin()
                }
            } else {
                (r_hi / t).asin()
            };
            for (psi, w) in gl.mapped(lo, hi) {
                let r = t * psi.sin();
                spread(row, cell, h, r, w * r);
            }
            lo = hi;
            if last {
                break;
            }
        }
    }
    map
}

/// Weights of `M(r^m) = (2/pi) int_0^r u(t) / sqrt(r^2 - t^2) dt` acting on
/// samples of `u` on `tgrid`, via `t = r sin(psi)`.
pub(crate) fn abel_inverse_weights(tgrid: &TimeGrid, rgrid: &RadialGrid) -> RowMap {
    let gl = GaussLegendre::new(ABEL_PANEL_ORDER);
    let ht = tgrid.step();
    let mut map = RowMap::zeros(rgrid.len(), tgrid.len());
    map.row_mut(0)[0] = 1.0;
    for m in 1..rgrid.len() {
        let r = rgrid.node(m);
        let row = map.row_mut(m);
        let mut lo = 0.0f64;
        for cell in 0..tgrid.intervals() {
            let t_hi = tgrid.node(cell + 1);
            let last = t_hi >= r;
            let hi = if last { FRAC_PI_2 } else { (t_hi / r).asin() };
            for (psi, w) in gl.mapped(lo, hi) {
                spread(row, cell, ht, r * psi.sin(), w * 2.0 / PI);
            }
            lo = hi;
            if last {
                break;
            }
        }
    }
    map
}

/// `P f` trace from circular means.
pub fn wave_trace_p(means: &MeansData, tgrid: &TimeGrid) -> Result<WaveTraceData> {
    let map = abel_forward_weights(&means.rgrid, tgrid);
    let values = map.apply_rows(&means.values, means.ring.count());
    WaveTraceData::from_values(means.ring, *tgrid, TraceKind::P, values)
}

/// `W f = d/dt P f` trace, by centered differences of the `P f` trace.
pub fn wave_trace_w(means: &MeansData, tgrid: &TimeGrid) -> Result<WaveTraceData> {
    let p = wave_trace_p(means, tgrid)?;
    Ok(time_derivative(&p, TraceKind::W))
}

/// Differentiates every detector row in time; the result is tagged `kind`.
pub fn time_derivative(trace: &WaveTraceData, kind: TraceKind) -> WaveTraceData {
    let h = trace.tgrid.step();
    let cols = trace.cols();
    let mut values = vec![0.0; trace.values.len()];
    values
        .par_chunks_mut(cols)
        .zip(trace.values.par_chunks(cols))
        .for_each(|(out, row)| first_derivative_into(row, h, out));
    WaveTraceData {
        ring: trace.ring,
        tgrid: trace.tgrid,
        kind,
        values,
    }
}

/// Centered first differences, second-order one-sided at the ends.
pub fn first_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    first_derivative_into(values, h, &mut out);
    out
}

fn first_derivative_into(v: &[f64], h: f64, out: &mut [f64]) {
    let n = v.len();
    match n {
        0 => {}
        1 => out[0] = 0.0,
        2 => {
            let d = (v[1] - v[0]) / h;
            out[0] = d;
            out[1] = d;
        }
        _ => {
            out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
            for j in 1..n - 1 {
                out[j] = (v[j + 1] - v[j - 1]) / (2.0 * h);
            }
            out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        }
    }
}

/// Centered second differences, second-order one-sided at the ends.
pub fn second_derivative(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let h2 = h * h;
    let mut out = vec![0.0; n];
    if n < 4 {
        if n == 3 {
            let d = (v[2] - 2.0 * v[1] + v[0]) / h2;
            out.fill(d);
        }
        return out;
    }
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
    for j in 1..n - 1 {
        out[j] = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / h2;
    }
    out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    out
}

/// Recovers circular means on `rgrid` from a `W f` trace.
pub fn abel_invert_p2m(trace: &WaveTraceData, rgrid: &RadialGrid) -> Result<MeansData> {
    if trace.kind != TraceKind::W {
        return Err(Error::precondition(MODULE, "Abel inversion expects a W-trace"));
    }
    check_ring_radius(&trace.ring, rgrid.r0())?;
    if trace.tgrid.horizon() < rgrid.max() * (1.0 - 1e-12) {
        return Err(Error::precondition(
            MODULE,
            format!(
                "trace horizon {} is shorter than the diameter {}",
                trace.tgrid.horizon(),
                rgrid.max()
            ),
        ));
    }
    let map = abel_inverse_weights(&trace.tgrid, rgrid);
    let values = map.apply_rows(&trace.values, trace.ring.count());
    MeansData::from_values(trace.ring, *rgrid, values)
}

/// Data types that `add_noise` can perturb.
pub trait Sampled: Clone {
    fn samples(&self) -> &[f64];
    fn samples_mut(&mut self) -> &mut [f64];
}

impl Sampled for MeansData {
    fn samples(&self) -> &[f64] {
        &self.values
    }
    fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

impl Sampled for WaveTraceData {
    fn samples(&self) -> &[f64] {
        &self.values
    }
    fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Adds independent noise uniform on `[-level * max|v|, level * max|v|]`.
pub fn add_noise<T: Sampled>(data: &T, level: f64, seed: u64) -> Result<T> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::precondition(
            MODULE,
            format!("noise level must be >= 0, got {level}"),
        ));
    }
    let mut out = data.clone();
    let peak = data.samples().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let amp = level * peak;
    if amp == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.samples_mut() {
        *v += rng.random_range(-amp..=amp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::presets;
    use crate::quad::{adaptive_with_breaks, periodic_trapezoid};

    fn setup(n_phi: usize, nr: usize) -> (DetectorRing, RadialGrid) {
        (
            DetectorRing::new(1.0, n_phi).unwrap(),
            RadialGrid::new(1.0, nr).unwrap(),
        )
    }

    #[test]
    fn arc_fraction_degenerate_circles() {
        let d = UniformDisk {
            center: [0.1, 0.0],
            radius: 0.3,
            amplitude: 1.0,
        };
        assert_eq!(disk_arc_fraction(&d, [0.0, 0.1], 0.0), 1.0);
        assert_eq!(disk_arc_fraction(&d, [0.9, 0.0], 0.0), 0.0);
        assert_eq!(disk_arc_fraction(&d, [0.1, 0.0], 0.1), 1.0);
        assert_eq!(disk_arc_fraction(&d, [0.1, 0.0], 0.5), 0.0);
    }

    #[test]
    fn arc_fraction_matches_angular_quadrature() {
        let d = UniformDisk {
            center: [0.2, -0.1],
            radius: 0.45,
            amplitude: 1.0,
        };
        let p = [-0.7, 0.55];
        let r = 0.9;
        let exact = disk_arc_fraction(&d, p, r);
        // angles where the circle crosses the disk boundary split the
        // indicator into smooth pieces
        let dc = dist(p, d.center);
        let base = (d.center[1] - p[1]).atan2(d.center[0] - p[0]);
        let half = ((dc * dc + r * r - d.radius * d.radius) / (2.0 * dc * r)).acos();
        let inside = |th: f64| {
            let y = [p[0] + r * th.cos(), p[1] + r * th.sin()];
            if dist(y, d.center) < d.radius {
                1.0
            } else {
                0.0
            }
        };
        let est = adaptive_with_breaks(inside, base - PI, base + PI, &[base - half, base + half], 1e-14, 0.0);
        assert!(
            (est.value / (2.0 * PI) - exact).abs() < 1e-12,
            "{} vs {exact}",
            est.value / (2.0 * PI)
        );
    }

    #[test]
    fn zero_phantom_has_zero_means() {
        let (ring, rg) = setup(8, 16);
        let m = circular_mean(&Phantom::default(), &ring, &rg, 64).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centred_disk_means_vanish_off_support() {
        let (ring, rg) = setup(4, 100);
        let a = 0.5;
        let ph = Phantom::new(vec![Primitive::disk([0.0, 0.0], a, 1.0)]);
        let m = circular_mean(&ph, &ring, &rg, 64).unwrap();
        for mm in 0..rg.len() {
            let r = rg.node(mm);
            let v = m.get(0, mm);
            if r < 1.0 - a || r > 1.0 + a {
                assert_eq!(v, 0.0);
            }
            assert!(v < 1.0);
        }
        // r = 1 closed form
        let expect = ((1.0f64 + 1.0 - a * a) / 2.0).acos() / PI;
        assert!((m.get(0, 50) - expect).abs() < 1e-15);
        let dense = periodic_trapezoid(
            |th: f64| {
                let y = [1.0 + th.cos(), th.sin()];
                if norm(y) < a {
                    1.0
                } else {
                    0.0
                }
            },
            0.0,
            2.0 * PI,
            1 << 20,
        ) / (2.0 * PI);
        assert!((dense - expect).abs() < 1e-5);
    }

    #[test]
    fn gaussian_means_match_dense_quadrature() {
        let (ring, rg) = setup(6, 20);
        let ph = presets::gaussian();
        let m = circular_mean(&ph, &ring, &rg, 1024).unwrap();
        let p = ring.position(2);
        let r = rg.node(11);
        let g = match ph.primitives[0] {
            Primitive::Gaussian(g) => g,
            _ => unreachable!(),
        };
        let dense = crate::quad::adaptive(
            |th: f64| {
                let y = [p[0] + r * th.cos(), p[1] + r * th.sin()];
                if norm(y) < 1.0 {
                    g.value(y)
                } else {
                    0.0
                }
            },
            0.0,
            2.0 * PI,
            1e-14,
            0.0,
            4000,
        );
        let got = m.get(2, 11);
        // the tail cut at the disk boundary limits the trapezoid to ~1e-12
        assert!(
            (got - dense.value / (2.0 * PI)).abs() < 1e-10,
            "{got} {}",
            dense.value / (2.0 * PI)
        );
    }

    #[test]
    fn means_are_bounded_and_start_at_zero() {
        let (ring, rg) = setup(12, 40);
        let ph = presets::mixed();
        let m = circular_mean(&ph, &ring, &rg, 256).unwrap();
        let bound = ph.max_abs();
        assert!(m.values.iter().all(|v| v.abs() <= bound));
        for k in 0..12 {
            assert_eq!(m.get(k, 0), 0.0);
        }
    }

    #[test]
    fn rotation_invariant_phantom_gives_identical_rows() {
        let (ring, rg) = setup(9, 30);
        let ph = Phantom::new(vec![
            Primitive::disk([0.0, 0.0], 0.4, 1.0),
            Primitive::gaussian([0.0, 0.0], 0.1, 2.0),
        ]);
        let m = circular_mean(&ph, &ring, &rg, 512).unwrap();
        for k in 0..9 {
            for mm in 0..rg.len() {
                assert!((m.get(k, mm) - m.get((k + 1) % 9, mm)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn circular_mean_rejects_bad_inputs() {
        let ring = DetectorRing::new(1.0, 4).unwrap();
        let rg = RadialGrid::new(2.0, 8).unwrap();
        assert!(circular_mean(&Phantom::default(), &ring, &rg, 64).is_err());
        let rg = RadialGrid::new(1.0, 8).unwrap();
        assert!(circular_mean(&Phantom::default(), &ring, &rg, 8).is_err());
    }

    #[test]
    fn traces_of_zero_means_are_zero() {
        let (ring, rg) = setup(3, 20);
        let m = MeansData::zeros(ring, rg).unwrap();
        let tg = TimeGrid::with_horizon(2.0, 40).unwrap();
        let p = wave_trace_p(&m, &tg).unwrap();
        let w = wave_trace_w(&m, &tg).unwrap();
        assert!(p.values.iter().chain(&w.values).all(|&v| v == 0.0));
        assert_eq!(w.kind, TraceKind::W);
    }

    #[test]
    fn p_trace_of_constant_means_is_t() {
        // M = 1 on [0, 2R0]: int_0^t r / sqrt(t^2 - r^2) dr = t for t <= 2R0
        let (ring, rg) = setup(1, 10);
        let m = MeansData::from_values(ring, rg, vec![1.0; 11]).unwrap();
        let tg = TimeGrid::with_horizon(2.0, 16).unwrap();
        let p = wave_trace_p(&m, &tg).unwrap();
        assert_eq!(p.get(0, 0), 0.0);
        for j in 0..tg.len() {
            assert!((p.get(0, j) - tg.node(j)).abs() < 1e-13, "{j}");
        }
        // beyond 2R0: t - sqrt(t^2 - 4)
        let tg = TimeGrid::new(0.25, 20).unwrap();
        let p = wave_trace_p(&m, &tg).unwrap();
        for j in 9..tg.len() {
            let t = tg.node(j);
            assert!((p.get(0, j) - (t - (t * t - 4.0).sqrt())).abs() < 1e-13);
        }
    }

    #[test]
    fn p_trace_matches_adaptive_quadrature() {
        let (ring, rg) = setup(2, 64);
        let ph = presets::concentric();
        let m = circular_mean(&ph, &ring, &rg, 64).unwrap();
        let tg = TimeGrid::with_horizon(3.0, 30).unwrap();
        let p = wave_trace_p(&m, &tg).unwrap();
        let row = m.row(1);
        for j in [5, 13, 21, 30] {
            let t = tg.node(j);
            let upper = t.min(2.0);
            let breaks: Vec<f64> = (0..rg.len()).map(|i| rg.node(i)).collect();
            let est = adaptive_with_breaks(
                |r: f64| r * rg.interpolate(row, r) / ((t - r) * (t + r)).sqrt(),
                0.0,
                upper,
                &breaks,
                1e-13,
                1e-13,
            );
            let v = p.get(1, j);
            assert!(
                (v - est.value).abs() <= 1e-6 * est.value.abs().max(1e-12),
                "t={t}: {v} vs {}",
                est.value
            );
        }
    }

    #[test]
    fn w_trace_vanishes_where_p_is_constant() {
        let v = [1.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        let d = first_derivative(&v, 0.1);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn w_trace_is_second_order() {
        // M = r^2 gives P = 2 t^3 / 3 and W = 2 t^2
        let (ring, rg) = setup(1, 2000);
        let vals = (0..=2000).map(|m| rg.node(m).powi(2)).collect();
        let m = MeansData::from_values(ring, rg, vals).unwrap();
        let t_star = 1.2;
        let errs: Vec<f64> = [40usize, 80, 160]
            .iter()
            .map(|&n| {
                let tg = TimeGrid::with_horizon(2.0, n).unwrap();
                let w = wave_trace_w(&m, &tg).unwrap();
                let j = (t_star / tg.step()).round() as usize;
                (w.get(0, j) - 2.0 * t_star * t_star).abs()
            })
            .collect();
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!(o1 > 1.8 && o2 > 1.8, "orders {o1} {o2} from {errs:?}");
    }

    #[test]
    fn abel_inverse_of_linear_trace() {
        // u(t) = t gives (2/pi) int_0^r t / sqrt(r^2 - t^2) dt = 2 r / pi
        let ring = DetectorRing::new(1.0, 1).unwrap();
        let tg = TimeGrid::with_horizon(2.0, 50).unwrap();
        let u: Vec<f64> = (0..tg.len()).map(|j| tg.node(j)).collect();
        let w = WaveTraceData::from_values(ring, tg, TraceKind::W, u).unwrap();
        let rg = RadialGrid::new(1.0, 37).unwrap();
        let m = abel_invert_p2m(&w, &rg).unwrap();
        for mm in 0..rg.len() {
            assert!((m.get(0, mm) - 2.0 * rg.node(mm) / PI).abs() < 1e-8);
        }
    }

    #[test]
    fn abel_inverse_rejects_short_or_wrong_traces() {
        let ring = DetectorRing::new(1.0, 1).unwrap();
        let tg = TimeGrid::with_horizon(1.5, 10).unwrap();
        let w = WaveTraceData::from_values(ring, tg, TraceKind::W, vec![0.0; 11]).unwrap();
        let rg = RadialGrid::new(1.0, 10).unwrap();
        assert!(abel_invert_p2m(&w, &rg).is_err());
        let tg = TimeGrid::with_horizon(2.0, 10).unwrap();
        let p = WaveTraceData::from_values(ring, tg, TraceKind::P, vec![0.0; 11]).unwrap();
        assert!(abel_invert_p2m(&p, &rg).is_err());
        let w = WaveTraceData::from_values(ring, tg, TraceKind::W, vec![0.0; 11]).unwrap();
        assert!(abel_invert_p2m(&w, &rg).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_contract() {
        let (ring, rg) = setup(10, 99);
        let ph = presets::gaussian();
        let m = circular_mean(&ph, &ring, &rg, 256).unwrap();
        assert_eq!(add_noise(&m, 0.0, 3).unwrap(), m);
        assert_eq!(add_noise(&m, 0.05, 11).unwrap(), add_noise(&m, 0.05, 11).unwrap());
        assert_ne!(add_noise(&m, 0.05, 11).unwrap(), add_noise(&m, 0.05, 12).unwrap());
        assert!(add_noise(&m, -0.1, 1).is_err());
    }

    #[test]
    fn noise_statistics() {
        let ring = DetectorRing::new(1.0, 100).unwrap();
        let rg = RadialGrid::new(1.0, 999).unwrap();
        let mut base = MeansData::zeros(ring, rg).unwrap();
        base.values[0] = 2.0;
        let noisy = add_noise(&base, 0.05, 7).unwrap();
        let amp = 0.05 * 2.0;
        let diffs: Vec<f64> = noisy.values.iter().zip(&base.values).map(|(a, b)| a - b).collect();
        assert_eq!(diffs.len(), 100_000);
        assert!(diffs.iter().all(|d| d.abs() <= amp));
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let sd = amp / 3f64.sqrt() / (diffs.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * sd, "mean {mean} sd {sd}");
    }
}
