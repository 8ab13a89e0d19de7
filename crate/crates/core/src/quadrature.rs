//! Gauss-Legendre and adaptive Simpson rules.

/// 8-point Gauss-Legendre nodes on [-1, 1].
pub const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];

pub const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Nodes and weights of the 8-point rule mapped to `[a, b]`.
pub fn gauss_legendre_8(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL8_NODES
        .iter()
        .zip(GL8_WEIGHTS.iter())
        .map(move |(x, w)| (mid + half * x, half * w))
}

/// Tensor 8×8 Gauss-Legendre over a rectangle.
pub fn integrate_rect<F: Fn(f64, f64) -> f64>(f: F, x: (f64, f64), y: (f64, f64)) -> f64 {
    let mut acc = 0.0;
    for (xi, wx) in gauss_legendre_8(x.0, x.1) {
        for (yj, wy) in gauss_legendre_8(y.0, y.1) {
            acc += wx * wy * f(xi, yj);
        }
    }
    acc
}

const MIN_DEPTH: u32 = 3;
const MAX_DEPTH: u32 = 40;

/// Adaptive Simpson on `[a, b]`, stopping when the Richardson error estimate
/// of every panel is below its share of `rel_tol * |I| + abs_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    // coarse composite estimate fixes the absolute target
    let n = 16;
    let h = (b - a) / n as f64;
    let mut coarse = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        coarse += w * f(a + i as f64 * h);
    }
    coarse *= h / 3.0;
    let tol = (rel_tol * coarse.abs() + abs_tol).max(f64::MIN_POSITIVE);

    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 0)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || (depth >= MIN_DEPTH && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
}
