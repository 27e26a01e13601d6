//! Adaptive Gauss–Kronrod quadrature, plus an endpoint-singular variant that
//! walks dyadic shells toward the singular end and decides divergence from
//! the decay rate of the shell contributions.

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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-10,
            max_intervals: 4000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            ..Self::default()
        }
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Estimate {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

struct Piece {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
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
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Globally adaptive G7/K15 quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let first = kronrod15(&f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, est: first });
    while error > tol.abs.max(tol.rel * value.abs()) {
        if !value.is_finite() || heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature {
                a,
                b,
                estimate: value,
                error,
            });
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval collapsed to adjacent floats; accept what we have
            heap.push(worst);
            break;
        }
        let left = kronrod15(&f, worst.a, mid);
        let right = kronrod15(&f, mid, worst.b);
        value += left.value + right.value - worst.est.value;
        error += left.error + right.error - worst.est.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            est: left,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            est: right,
        });
    }
    // re-sum to shed the drift of the incremental updates
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.est.value, e + p.est.error));
    Ok(Estimate { value, error })
}

/// Outcome of integrating a nonnegative function with a possible singularity
/// at the left end of `(0, length]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndpointIntegral {
    Finite(Estimate),
    /// `partial` is the sum over the resolved shells, `decay` the fitted
    /// per-shell ratio of contributions (>= 1 means no decay at all).
    Divergent {
        partial: f64,
        decay: f64,
    },
}

impl EndpointIntegral {
    pub fn value(&self) -> f64 {
        match self {
            EndpointIntegral::Finite(e) => e.value,
            EndpointIntegral::Divergent { .. } => f64::INFINITY,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, EndpointIntegral::Divergent { .. })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EndpointOptions {
    pub tol: Tolerance,
    /// Extrapolated integrals above this are declared divergent.
    pub divergence_threshold: f64,
    pub max_shells: usize,
}

impl Default for EndpointOptions {
    fn default() -> Self {
        Self {
            tol: Tolerance::default(),
            divergence_threshold: 1e3,
            max_shells: 1000,
        }
    }
}

const RATIO_SPAN: usize = 8;

/// Integrates `g(d)` over `d ∈ (0, length]` where `g` may blow up as `d → 0`.
///
/// Shell `k` covers `[length·2^{-k-1}, length·2^{-k}]`. Once enough shells are
/// resolved, the decay ratio `r` of their contributions gives a geometric
/// tail `p_k·r/(1-r)`; the integral is divergent when the shells stop
/// decaying or the extrapolated total exceeds the threshold.
pub fn integrate_to_endpoint<G: Fn(f64) -> f64>(g: G, length: f64, opts: EndpointOptions) -> Result<EndpointIntegral> {
    if length <= 0.0 {
        return Err(crate::error::invalid("endpoint integral needs a positive length"));
    }
    let mut shells: Vec<f64> = Vec::new();
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut hi = length;
    let mut last_tail = f64::INFINITY;
    for k in 0..opts.max_shells {
        let lo = 0.5 * hi;
        if lo < f64::MIN_POSITIVE {
            break;
        }
        let piece = integrate(&g, lo, hi, opts.tol)?;
        if !piece.value.is_finite() {
            return Ok(EndpointIntegral::Divergent {
                partial: f64::INFINITY,
                decay: f64::INFINITY,
            });
        }
        shells.push(piece.value);
        sum += piece.value;
        err += piece.error;
        hi = lo;
        if k < RATIO_SPAN {
            continue;
        }
        let p = piece.value;
        let base = shells[k - RATIO_SPAN];
        if base <= 0.0 {
            if p <= 0.0 {
                // integrand vanishes identically near the endpoint
                return Ok(EndpointIntegral::Finite(Estimate { value: sum, error: err }));
            }
            continue;
        }
        let ratio = (p / base).powf(1.0 / RATIO_SPAN as f64);
        if ratio >= 1.0 - 1e-9 {
            if k >= 2 * RATIO_SPAN {
                return Ok(EndpointIntegral::Divergent {
                    partial: sum,
                    decay: ratio,
                });
            }
            continue;
        }
        let tail = p * ratio / (1.0 - ratio);
        if sum + tail > opts.divergence_threshold {
            return Ok(EndpointIntegral::Divergent {
                partial: sum,
                decay: ratio,
            });
        }
        last_tail = tail;
        if tail <= opts.tol.abs.max(opts.tol.rel * sum.abs()) {
            return Ok(EndpointIntegral::Finite(Estimate {
                value: sum + tail,
                error: err + tail,
            }));
        }
    }
    Err(Error::Quadrature {
        a: 0.0,
        b: length,
        estimate: sum,
        error: last_tail,
    })
}
