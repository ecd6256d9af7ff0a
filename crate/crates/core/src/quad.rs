//! Globally adaptive Gauss–Kronrod (G10/K21) quadrature.
//!
//! Intervals are kept in a max-heap keyed on their local error estimate and
//! the worst one is bisected until the summed estimate meets
//! `max(abs_tol, rel_tol * |I|)`. Endpoint singularities of integrable type
//! are tolerated because the rule never samples the endpoints; callers with
//! strong algebraic singularities should regularize by substitution first.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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
    0.123_491_976_262_065_851_077_208_641_383_218,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_271,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        QuadOptions {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
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

fn kronrod21(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = WGK[10] * fc;
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv = [(0.0f64, 0.0f64); 10];
    for (j, slot) in fv.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        *slot = (f1, f2);
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        resasc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    integrate_with_breaks(&mut f, &[a, b], opts)
}

/// Integrates over `[points[0], points.last()]`, seeding the adaptive
/// subdivision with the given interior break points (kinks, peaks).
pub fn integrate_with_breaks<F>(mut f: F, points: &[f64], opts: &QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    if points.len() < 2 {
        return Err(Error::Domain("quadrature needs at least two points".into()));
    }
    let mut pts: Vec<f64> = points.to_vec();
    let sign = if pts[pts.len() - 1] < pts[0] {
        -1.0
    } else {
        1.0
    };
    if sign < 0.0 {
        pts.reverse();
    }
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    pts.retain(|&p| p >= lo && p <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }

    let f: &mut dyn FnMut(f64) -> f64 = &mut f;
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut frozen_err = 0.0;
    let mut frozen_value = 0.0;
    let mut evals = 0usize;
    for w in pts.windows(2) {
        let (v, e) = kronrod21(f, w[0], w[1]);
        evals += 21;
        total += v;
        total_err += e;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }

    let mut intervals = heap.len();
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol || !total_err.is_finite() {
            break;
        }
        if intervals >= opts.max_intervals {
            break;
        }
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Cannot split further in floating point; keep its contribution.
            frozen_err += seg.error;
            frozen_value += seg.value;
            continue;
        }
        let (v1, e1) = kronrod21(f, seg.a, mid);
        let (v2, e2) = kronrod21(f, mid, seg.b);
        evals += 42;
        intervals += 1;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }

    // Re-sum to shed accumulated cancellation in the running totals.
    let mut value = frozen_value;
    let mut error = frozen_err;
    for s in heap.iter() {
        value += s.value;
        error += s.error;
    }
    let tol = opts.abs_tol.max(opts.rel_tol * value.abs());
    let value = sign * value;
    if !value.is_finite() || !(error <= tol) {
        return Err(Error::Quadrature {
            value,
            achieved: error,
            requested: tol,
        });
    }
    Ok(QuadResult {
        value,
        error,
        evaluations: evals,
    })
}

/// Integrates `f` over `[a, ∞)` with the map `x = a + t/(1-t)`.
pub fn integrate_to_infinity<F>(mut f: F, a: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    integrate(
        |t| {
            let one_minus = 1.0 - t;
            if one_minus <= 0.0 {
                return 0.0;
            }
            let x = a + t / one_minus;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v / (one_minus * one_minus)
            }
        },
        0.0,
        1.0,
        opts,
    )
}

/// Integrates over the box `[lo, hi]` in up to three dimensions by nesting
/// the one-dimensional rule, innermost axis last.
pub fn integrate_box<F>(f: F, lo: &[f64], hi: &[f64], opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(&[f64]) -> f64,
{
    if lo.len() != hi.len() || lo.is_empty() || lo.len() > 3 {
        return Err(Error::Domain(
            "box quadrature supports dimensions 1 to 3".into(),
        ));
    }
    nested(&f, &[], lo, hi, opts)
}

fn nested<F>(
    f: &F,
    prefix: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &QuadOptions,
) -> Result<QuadResult>
where
    F: Fn(&[f64]) -> f64,
{
    let axis = prefix.len();
    let last = axis + 1 == lo.len();
    let mut failed = false;
    let r = integrate(
        |t| {
            let mut xs = prefix.to_vec();
            xs.push(t);
            if last {
                return f(&xs);
            }
            match value_or_estimate(&nested(f, &xs, lo, hi, opts)) {
                Some((v, _)) => v,
                None => {
                    failed = true;
                    0.0
                }
            }
        },
        lo[axis],
        hi[axis],
        opts,
    );
    if failed {
        return Err(Error::Domain("nested quadrature failed".into()));
    }
    r
}

/// Value of a result, or the best estimate carried by a non-convergence
/// error. Used where a caller reports achieved accuracy instead of failing.
pub fn value_or_estimate(r: &Result<QuadResult>) -> Option<(f64, f64)> {
    match r {
        Ok(q) => Some((q.value, q.error)),
        Err(Error::Quadrature {
            value, achieved, ..
        }) => Some((*value, *achieved)),
        Err(_) => None,
    }
}
