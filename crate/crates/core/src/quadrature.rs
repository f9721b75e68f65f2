//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

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

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates `f` over `[a, b]` by global adaptive bisection until the
/// estimated error is below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = kronrod(&mut f, a, b);
    let mut segs = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    for _ in 0..2000 {
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let (i, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, v0, e0) = segs.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod(&mut f, lo, mid);
        let (v2, e2) = kronrod(&mut f, mid, hi);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
    }
    if err <= 1e3 * abs_tol.max(rel_tol * total.abs()) {
        return Ok(total);
    }
    Err(Error::Conditioning(format!(
        "quadrature on [{a}, {b}] stalled with error estimate {err:.3e}"
    )))
}
