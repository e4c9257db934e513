//! Small numerical toolkit: bracketed root finding, golden-section line
//! search, a derivative-free Powell minimizer and a few statistics helpers.

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Finds the root of a monotone function on `[lo, hi]` with Newton steps
/// safeguarded by bisection. `f` returns `(value, derivative)`.
///
/// The bracket must contain a sign change. Iteration stops once the Newton
/// step or the bracket width drops below `abs_tol + rel_tol * |x|`, or the
/// residual is exactly zero.
pub fn newton_bisect<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo.is_nan() || fhi.is_nan() {
        return Err(Error::numerical("NaN at bracket end"));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::numerical(format!(
            "root not bracketed in [{lo:e}, {hi:e}]"
        )));
    }
    let increasing = fhi > flo;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let tol = abs_tol + rel_tol * x.abs();
        if (hi - lo) <= tol {
            return Ok(0.5 * (lo + hi));
        }
        let step = fx / dfx;
        let newton = x - step;
        if step.is_finite() && newton > lo && newton < hi {
            if step.abs() <= tol {
                return Ok(newton);
            }
            x = newton;
        } else {
            x = 0.5 * (lo + hi);
        }
    }
    Err(Error::numerical(format!(
        "root finder did not converge after {max_iter} iterations (bracket [{lo:e}, {hi:e}])"
    )))
}

/// Minimizes a unimodal function on `[a, b]` by golden-section search.
/// Returns `(x_min, f(x_min))`.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Options for [`powell_minimize`].
#[derive(Debug, Clone, Copy)]
pub struct PowellOptions {
    /// Initial trial step along each direction.
    pub initial_step: f64,
    /// Stop when a full sweep improves the objective by less than this (relative).
    pub f_tol: f64,
    /// Line-search resolution in parameter units.
    pub x_tol: f64,
    pub max_sweeps: usize,
}

impl Default for PowellOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            f_tol: 1e-14,
            x_tol: 1e-10,
            max_sweeps: 400,
        }
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Line search along `dir` from `x`: brackets a minimum by geometric expansion
/// and refines it by golden section. Only ever accepts an improvement.
fn line_minimize<F>(f: &mut F, x: &mut [f64], fx: &mut f64, dir: &[f64], step: f64, x_tol: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut trial = vec![0.0; x.len()];
    let mut eval = |t: f64, trial: &mut Vec<f64>| -> f64 {
        for ((ti, xi), di) in trial.iter_mut().zip(x.iter()).zip(dir) {
            *ti = xi + t * di;
        }
        let v = f(trial);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // Bracket: find a < b < c with f(b) <= f(a), f(c).
    let f0 = *fx;
    let mut s = step;
    let mut fs = eval(s, &mut trial);
    if fs > f0 {
        s = -step;
        fs = eval(s, &mut trial);
        if fs > f0 {
            // Minimum lies within (-step, step); refine there.
            let (t, ft) = golden_section(|t| eval(t, &mut trial), -step, step, x_tol, 200);
            if ft < f0 {
                for (xi, di) in x.iter_mut().zip(dir) {
                    *xi += t * di;
                }
                *fx = ft;
                return t;
            }
            return 0.0;
        }
    }
    let (mut a, mut b, mut fb) = (0.0, s, fs);
    let mut c = b + (b - a) / GOLDEN;
    let mut fcv = eval(c, &mut trial);
    let mut expansions = 0;
    while fcv < fb && expansions < 60 {
        a = b;
        b = c;
        fb = fcv;
        c = b + (b - a) / GOLDEN;
        fcv = eval(c, &mut trial);
        expansions += 1;
    }
    let (lo, hi) = if a < c { (a, c) } else { (c, a) };
    let (mut t, mut ft) = golden_section(|t| eval(t, &mut trial), lo, hi, x_tol, 200);
    if fb < ft {
        t = b;
        ft = fb;
    }
    if ft < f0 {
        for (xi, di) in x.iter_mut().zip(dir) {
            *xi += t * di;
        }
        *fx = ft;
        t
    } else {
        0.0
    }
}

/// Powell's conjugate-direction method. Starts from the coordinate axes, so
/// the first sweep is a coordinate-wise golden-section descent. The objective
/// value never increases between accepted iterates.
pub fn powell_minimize<F>(mut f: F, x0: &[f64], opts: PowellOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if fx.is_nan() {
        fx = f64::INFINITY;
    }
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            d
        })
        .collect();

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let f_start = fx;
        let x_start = x.clone();
        let mut biggest_drop = 0.0;
        let mut biggest_idx = 0;
        for (i, d) in dirs.iter().enumerate() {
            let before = fx;
            line_minimize(&mut f, &mut x, &mut fx, d, opts.initial_step, opts.x_tol);
            if before - fx > biggest_drop {
                biggest_drop = before - fx;
                biggest_idx = i;
            }
        }
        if (f_start - fx).abs() <= opts.f_tol * (f_start.abs() + fx.abs()) + 1e-300 {
            converged = true;
            break;
        }
        // Replace the direction of largest decrease with the net displacement.
        let net: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
        let norm = net.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let unit: Vec<f64> = net.iter().map(|v| v / norm).collect();
            line_minimize(&mut f, &mut x, &mut fx, &unit, opts.initial_step.max(norm), opts.x_tol);
            dirs.remove(biggest_idx);
            dirs.push(unit);
        }
    }
    Minimum {
        x,
        value: fx,
        sweeps,
        converged,
    }
}

/// Logarithmically spaced grid from `start` to `stop` (inclusive) with
/// `per_decade` points per decade.
pub fn log_grid(start: f64, stop: f64, per_decade: usize) -> Vec<f64> {
    assert!(start > 0.0 && stop > start && per_decade > 0);
    let decades = (stop / start).log10();
    let n = (decades * per_decade as f64).round() as usize;
    let n = n.max(1);
    (0..=n)
        .map(|k| start * 10f64.powf(decades * k as f64 / n as f64))
        .collect()
}

/// Gaussian tail probability Q(x) = P(Z > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Wilson score interval for `k` successes out of `n` trials at normal
/// quantile `z` (1.959964 for 95%).
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
