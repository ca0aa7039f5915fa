//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used as an independent oracle for the closed forms in this crate and for
//! the small-`η` correction of the strategy integrals. Nothing on the
//! simulation hot path goes through here.

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    /// `∫|f|` on the segment, for the roundoff floor.
    magnitude: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut magnitude = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (fl, fr) = (f(centre - dx), f(centre + dx));
        let sum = fl + fr;
        kronrod += WGK[j] * sum;
        magnitude += WGK[j] * (fl.abs() + fr.abs());
        // odd Kronrod nodes coincide with the Gauss nodes
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
        magnitude: magnitude * half.abs(),
    }
}

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`, bisecting
/// the worst segment at most `max_subdivisions` times.
///
/// The error target never drops below the rounding level of `∫|f|`, so
/// integrals that cancel to (nearly) zero still terminate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, max_subdivisions: usize) -> Result<f64> {
    integrate_to(f, a, b, rel_tol, 0.0, max_subdivisions)
}

/// [`integrate`] that also accepts an error estimate below `abs_tol`.
pub fn integrate_to<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut segments = vec![kronrod(&f, lo, hi)];
    for _ in 0..=max_subdivisions {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.error).sum();
        let floor = 50.0 * f64::EPSILON * segments.iter().map(|s| s.magnitude).sum::<f64>();
        if err <= (rel_tol * total.abs()).max(floor).max(abs_tol) || err <= 1e-300 {
            return Ok(sign * total);
        }
        if segments.len() > max_subdivisions {
            return Err(Error::Quadrature {
                tol: rel_tol,
                subdivisions: max_subdivisions,
                estimate: err,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        segments.push(kronrod(&f, s.a, mid));
        segments.push(kronrod(&f, mid, s.b));
    }
    unreachable!("loop returns before exhausting subdivisions")
}
