//! Small numerical kernels shared by the modules: compensated summation,
//! quadrature rules and a golden-section minimiser.

use num_complex::Complex64;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Trapezoid rule over arbitrary (sorted) abscissae.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    compensated_sum(
        xs.windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])),
    )
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
///
/// Recursion stops at `max_depth`; the accumulated error estimate is
/// returned alongside the integral.
pub fn adaptive_simpson<F, E>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> Result<(f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut err = 0.0;
    let v = simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth, &mut err)?;
    Ok((v, err))
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F, E>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    err: &mut f64,
) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        *err += delta.abs() / 15.0;
        return Ok(left + right + delta / 15.0);
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, err)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, err)?;
    Ok(l + r)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
// Gauss weights attach to odd-indexed Kronrod nodes.
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Gauss–Kronrod panel of a complex-valued integrand.
/// Returns (kronrod estimate, |kronrod − gauss|).
pub fn gauss_kronrod_15<F>(f: &mut F, a: f64, b: f64) -> (Complex64, f64)
where
    F: FnMut(f64) -> Complex64,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WEIGHTS_K[7];
    let mut g = fc * GK_WEIGHTS_G[3];
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        let s = f(c - dx) + f(c + dx);
        k += s * GK_WEIGHTS_K[j];
        if j % 2 == 1 {
            g += s * GK_WEIGHTS_G[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive Gauss–Kronrod integration of a complex integrand over [a, b],
/// bisecting panels whose error estimate exceeds their share of `tol`.
pub fn adaptive_gk<F>(f: &mut F, a: f64, b: f64, tol: f64, max_depth: usize) -> (Complex64, f64)
where
    F: FnMut(f64) -> Complex64,
{
    let (v, e) = gauss_kronrod_15(f, a, b);
    gk_refine(f, a, b, v, e, tol, max_depth)
}

fn gk_refine<F>(
    f: &mut F,
    a: f64,
    b: f64,
    v: Complex64,
    e: f64,
    tol: f64,
    depth: usize,
) -> (Complex64, f64)
where
    F: FnMut(f64) -> Complex64,
{
    if e <= tol || depth == 0 {
        return (v, e);
    }
    let m = 0.5 * (a + b);
    let (lv, le) = gauss_kronrod_15(f, a, m);
    let (rv, re) = gauss_kronrod_15(f, m, b);
    let (lv, le) = gk_refine(f, a, m, lv, le, 0.5 * tol, depth - 1);
    let (rv, re) = gk_refine(f, m, b, rv, re, 0.5 * tol, depth - 1);
    (lv + rv, le + re)
}

/// Golden-section minimisation of a unimodal function on [a, b].
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iter = 0;
    while (b - a).abs() > tol && iter < 200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    let (mut bx, mut bf) = (x, fx);
    for (cx, cf) in [(c, fc), (d, fd)] {
        if cf < bf {
            bx = cx;
            bf = cf;
        }
    }
    (bx, bf)
}

/// Ordinary least-squares slope of y against x.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `count` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn geomspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == count - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2);
    (0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1.0e16, 1.0, -1.0e16];
        v.extend(std::iter::repeat_n(1.0, 10));
        assert_eq!(compensated_sum(v), 11.0);
    }

    #[test]
    fn simpson_integrates_exp() {
        let mut f = |x: f64| Ok::<f64, ()>(x.exp());
        let (v, _) = adaptive_simpson(&mut f, 0.0, 1.0, 1e-12, 40).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn gauss_kronrod_integrates_oscillation() {
        let mut f = |t: f64| Complex64::new(0.0, 3.0 * t).exp();
        let (v, e) = adaptive_gk(&mut f, 0.0, 10.0, 1e-12, 30);
        let exact = (Complex64::new(0.0, 30.0).exp() - 1.0) / Complex64::new(0.0, 3.0);
        assert!((v - exact).norm() < 1e-11, "{v} vs {exact} (err {e})");
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section_min(|x| (x - 0.3) * (x - 0.3) + 1.0, -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-14);
    }

    #[test]
    fn slope_of_line() {
        let xs = linspace(0.0, 1.0, 11);
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        assert!((least_squares_slope(&xs, &ys) - 2.5).abs() < 1e-12);
    }
}
