//! Quadrature rules used by the forward models, the operators and the
//! verification oracles.
//!
//! * [`GaussLegendre`]: fixed-order rule, used panel by panel after a
//!   singularity-removing substitution.
//! * [`adaptive`]: globally adaptive Gauss–Kronrod (7/15) integration with a
//!   priority queue of subintervals. Handles integrable endpoint
//!   singularities by bisection.
//! * [`tanh_sinh`]: double-exponential rule for integrands with endpoint
//!   singularities (log or inverse square root).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule with `panels` equal panels on `[a, b]`.
    pub fn composite<F: Fn(f64) -> f64>(&self, a: f64, b: f64, panels: usize, f: F) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + p as f64 * h;
                self.integrate(lo, lo + h, &f)
            })
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Subdivides the piece with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |value|)` or
/// `max_pieces` is reached.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64, max_pieces: usize) -> Estimate {
    if a == b {
        return Estimate {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    let (value, error) = kronrod15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    while heap.len() < max_pieces {
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (lv, le) = kronrod15(&f, worst.a, mid);
        let (rv, re) = kronrod15(&f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
    }
    // Re-sum to shed the drift of the running total.
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Estimate {
        value,
        error,
        converged: error <= abs_tol.max(rel_tol * value.abs()),
    }
}

/// Adaptive integration split at interior break points (known singular or
/// kink locations). Break points outside `(a, b)` are ignored.
pub fn adaptive_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Estimate {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);
    let share = abs_tol / (edges.len() - 1) as f64;
    let mut out = Estimate {
        value: 0.0,
        error: 0.0,
        converged: true,
    };
    for w in edges.windows(2) {
        let e = adaptive(&f, w[0], w[1], share, rel_tol, 4000);
        out.value += e.value;
        out.error += e.error;
        out.converged &= e.converged;
    }
    out
}

/// Tanh–sinh (double exponential) quadrature with `points` nodes.
///
/// Nodes that round onto an endpoint are dropped, so integrands may be
/// singular (but integrable) at `a` and `b`.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, points: usize) -> f64 {
    let points = points.max(3) | 1;
    let tau_max = 3.5;
    let half = (points / 2) as f64;
    let step = tau_max / half;
    let width = b - a;
    let mut sum = 0.0;
    for i in 0..points {
        let tau = (i as f64 - half) * step;
        let u = 0.5 * PI * tau.sinh();
        let cosh_u = u.cosh();
        // weight of dx/dtau for x = tanh(u), mapped to [a, b]
        let w = 0.5 * PI * tau.cosh() / (cosh_u * cosh_u) * 0.5 * width;
        // distance to the nearer endpoint, computed without cancellation
        let gap = width / (1.0 + (2.0 * u.abs()).exp());
        let x = if tau < 0.0 { a + gap } else { b - gap };
        if x <= a || x >= b || w == 0.0 {
            continue;
        }
        let v = f(x);
        if v.is_finite() {
            sum += w * v;
        }
    }
    sum * step
}

/// Periodic trapezoidal rule with `points` nodes over one period starting at
/// `start`.
pub fn periodic_trapezoid<F: Fn(f64) -> f64>(f: F, start: f64, period: f64, points: usize) -> f64 {
    let h = period / points as f64;
    (0..points).map(|i| f(start + i as f64 * h)).sum::<f64>() * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let gl = GaussLegendre::new(5);
        // degree 9 integrates exactly with 5 nodes
        let v = gl.integrate(0.0, 2.0, |x| x.powi(9) - 3.0 * x.powi(4));
        let exact = 2f64.powi(10) / 10.0 - 3.0 * 2f64.powi(5) / 5.0;
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_high_order_nodes_are_sorted() {
        let gl = GaussLegendre::new(40);
        assert!(gl.nodes.windows(2).all(|w| w[0] < w[1]));
        let v = gl.integrate(0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_log_endpoint() {
        // int_0^1 log x dx = -1
        let e = adaptive(|x: f64| x.ln(), 0.0, 1.0, 1e-13, 0.0, 4000);
        assert!(e.converged);
        assert!((e.value + 1.0).abs() < 1e-12, "{}", e.value);
    }

    #[test]
    fn adaptive_handles_inverse_sqrt() {
        // int_0^1 1/sqrt(x (2 - x)) = pi/2
        let e = adaptive(|x: f64| 1.0 / (x * (2.0 - x)).sqrt(), 0.0, 1.0, 1e-10, 0.0, 4000);
        assert!((e.value - 0.5 * PI).abs() < 1e-8, "{}", e.value);
    }

    #[test]
    fn tanh_sinh_endpoint_singularities() {
        let v = tanh_sinh(|x: f64| x.ln() + (1.0 - x).ln(), 0.0, 1.0, 201);
        assert!((v + 2.0).abs() < 1e-13, "{v}");
        let v = tanh_sinh(|x: f64| 1.0 / (x * (2.0 - x)).sqrt(), 0.0, 1.0, 201);
        assert!((v - 0.5 * PI).abs() < 1e-9, "{v}");
    }

    #[test]
    fn trapezoid_is_spectral_for_periodic() {
        let v = periodic_trapezoid(|t: f64| (t.cos()).exp(), 0.0, 2.0 * PI, 32);
        // 2 pi I0(1)
        let exact = 2.0 * PI * 1.266_065_877_752_008_4;
        assert!((v - exact).abs() < 1e-13);
    }
}
