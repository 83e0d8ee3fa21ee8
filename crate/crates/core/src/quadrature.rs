//! Adaptive Gauss–Kronrod quadrature on finite intervals.
//!
//! The 21-point Kronrod rule is paired with its embedded 10-point Gauss rule;
//! the difference of the two is the local error estimate. Intervals with the
//! largest estimate are bisected until the global estimate meets the
//! requested tolerance.
//!
//! Integrands are vector valued (`[f64; N]`) so that quantities sharing an
//! expensive common factor can be integrated together on one set of nodes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Kronrod abscissae on `[0, 1]`, descending; odd indices are the Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_977_119_312,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Gauss weights for `XGK[1], XGK[3], ..., XGK[9]`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-10,
            abs: 1e-12,
            max_intervals: 400,
        }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self {
            rel,
            abs,
            ..Self::default()
        }
    }
}

/// Integral estimate with its error bound and cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub evaluations: usize,
}

/// Single application of the 21-point Kronrod rule on `[a, b]`.
///
/// Returns `(kronrod, |kronrod - gauss|)` per component.
pub fn gk21<const N: usize, F>(f: &mut F, a: f64, b: f64) -> ([f64; N], [f64; N])
where
    F: FnMut(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    for c in 0..N {
        kron[c] = WGK[10] * fc[c];
    }
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(10).enumerate() {
        let dx = half * x;
        let lo = f(center - dx);
        let hi = f(center + dx);
        for c in 0..N {
            let pair = lo[c] + hi[c];
            kron[c] += w * pair;
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * pair;
            }
        }
    }
    let mut err = [0.0; N];
    for c in 0..N {
        kron[c] *= half;
        gauss[c] *= half;
        err[c] = (kron[c] - gauss[c]).abs();
    }
    (kron, err)
}

struct Piece<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
    score: f64,
}

impl<const N: usize> PartialEq for Piece<N> {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score
    }
}
impl<const N: usize> Eq for Piece<N> {}
impl<const N: usize> PartialOrd for Piece<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Piece<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score)
    }
}

fn score<const N: usize>(err: &[f64; N]) -> f64 {
    err.iter().fold(0.0_f64, |m, e| m.max(*e))
}

fn converged<const N: usize>(value: &[f64; N], error: &[f64; N], tol: &Tolerance) -> bool {
    value
        .iter()
        .zip(error)
        .all(|(v, e)| *e <= tol.abs.max(tol.rel * v.abs()))
}

/// Adaptive integration of a vector-valued integrand over `[a, b]`.
///
/// `b < a` is allowed and yields the negated integral. Fails with
/// [`Error::NumericFailure`] when the interval budget runs out or the
/// integrand produces a non-finite value.
pub fn integrate<const N: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    tol: &Tolerance,
) -> Result<Estimate<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    if a == b {
        return Ok(Estimate {
            value: [0.0; N],
            error: [0.0; N],
            evaluations: 0,
        });
    }
    if b < a {
        let mut est = integrate(f, b, a, tol)?;
        for v in est.value.iter_mut() {
            *v = -*v;
        }
        return Ok(est);
    }

    let (value, error) = gk21(&mut f, a, b);
    let mut evaluations = 21;
    let mut total = value;
    let mut total_err = error;
    let mut heap = BinaryHeap::new();
    heap.push(Piece {
        a,
        b,
        value,
        error,
        score: score(&error),
    });

    loop {
        if total.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("quadrature: non-finite integrand", f64::NAN));
        }
        if converged(&total, &total_err, tol) {
            return Ok(Estimate {
                value: total,
                error: total_err,
                evaluations,
            });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::numeric(
                "quadrature: interval budget exhausted",
                score(&total_err),
            ));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            return Err(Error::numeric(
                "quadrature: interval collapsed below machine resolution",
                score(&total_err),
            ));
        }
        let (lv, le) = gk21(&mut f, worst.a, mid);
        let (rv, re) = gk21(&mut f, mid, worst.b);
        evaluations += 42;
        for c in 0..N {
            total[c] += lv[c] + rv[c] - worst.value[c];
            total_err[c] += le[c] + re[c] - worst.error[c];
        }
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
            score: score(&le),
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
            score: score(&re),
        });
        // Running sums drift; re-add from scratch occasionally.
        if heap.len() % 64 == 0 {
            total = [0.0; N];
            total_err = [0.0; N];
            for p in heap.iter() {
                for c in 0..N {
                    total[c] += p.value[c];
                    total_err[c] += p.error[c];
                }
            }
        }
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(mut f: F, a: f64, b: f64, tol: &Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate(|x| [f(x)], a, b, tol).map(|e| e.value[0])
}

/// Integrate over `[a, b]` split at every `breaks` point lying strictly inside.
pub fn integrate_split<const N: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: &Tolerance,
) -> Result<Estimate<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| *x > lo && *x < hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut out = Estimate {
        value: [0.0; N],
        error: [0.0; N],
        evaluations: 0,
    };
    let mut left = lo;
    for right in cuts.into_iter().chain(std::iter::once(hi)) {
        let est = integrate(&mut f, left, right, tol)?;
        for c in 0..N {
            out.value[c] += sign * est.value[c];
            out.error[c] += est.error[c];
        }
        out.evaluations += est.evaluations;
        left = right;
    }
    Ok(out)
}
