//! Globally adaptive Gauss–Kronrod quadrature (15-point Kronrod extension of
//! the 7-point Gauss rule), plus the singularity-subtracted principal value.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-300,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kron += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    Segment { a, b, value, error }
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult> {
    integrate_with_points(f, a, b, &[], opts)
}

/// Adaptive integral of `f` over `[a, b]`, with the initial partition split
/// at every point of `points` that lies strictly inside the interval.
pub fn integrate_with_points<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    points: &[f64],
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid(format!("integration bounds must be finite, got ({a}, {b})")));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    if a > b {
        let r = integrate_with_points(f, b, a, points, opts)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }

    let mut cuts: Vec<f64> = points.iter().copied().filter(|&p| p > a && p < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in edges.windows(2) {
        let s = kronrod(&f, w[0], w[1]);
        total += s.value;
        total_err += s.error;
        heap.push(s);
    }

    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= target {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature {
                value: total,
                achieved: total_err,
                requested: target,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be bisected in floating point.
            return Err(Error::Quadrature {
                value: total,
                achieved: total_err,
                requested: target,
            });
        }
        let left = kronrod(&f, worst.a, mid);
        let right = kronrod(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum to shed the cancellation error accumulated by the running total.
    let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    if !value.is_finite() {
        return Err(Error::Quadrature {
            value,
            achieved: f64::INFINITY,
            requested: opts.rel_tol,
        });
    }
    Ok(QuadResult {
        value,
        error,
        intervals: heap.len(),
    })
}

/// Cauchy principal value `P∫ₐᵇ f(x)/(x − c) dx` by singularity subtraction:
/// the regular remainder `(f(x) − f(c))/(x − c)` is integrated adaptively and
/// the subtracted pole contributes `f(c)·ln|(b − c)/(c − a)|`.
pub fn principal_value<F: Fn(f64) -> f64>(
    f: F,
    c: f64,
    a: f64,
    b: f64,
    points: &[f64],
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !(a < c && c < b) {
        return Err(Error::invalid(format!(
            "pole {c} must lie strictly inside ({a}, {b})"
        )));
    }
    let fc = f(c);
    if !fc.is_finite() {
        return Err(Error::invalid(format!("integrand is not finite at the pole {c}")));
    }
    let regular = |x: f64| {
        let d = x - c;
        if d == 0.0 {
            0.0
        } else {
            (f(x) - fc) / d
        }
    };
    let mut pts = points.to_vec();
    pts.push(c);
    let body = integrate_with_points(regular, a, b, &pts, opts)?;
    let log_term = fc * ((b - c) / (c - a)).abs().ln();
    Ok(QuadResult {
        value: body.value + log_term,
        ..body
    })
}

/// Breakpoints at `center ± scale·10^k` for `k = 0..decades`, which helps the
/// adaptive scheme on very wide ranges with algebraic tails.
pub fn geometric_points(center: f64, scale: f64, decades: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * decades as usize + 1);
    out.push(center);
    let mut s = scale;
    for _ in 0..=decades {
        out.push(center - s);
        out.push(center + s);
        s *= 10.0;
    }
    out
}
