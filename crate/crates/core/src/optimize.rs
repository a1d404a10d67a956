//! Bounded one-dimensional maximization.

use crate::error::{GsarError, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt 5) / 2

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMax {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ScalarOptions {
    /// Stop once the bracketing interval is at most this wide.
    pub x_tol: f64,
    pub max_iter: usize,
    /// Equally spaced evaluations used to pick the bracket before the
    /// golden/parabolic search. `0` searches the whole interval directly.
    pub grid_intervals: usize,
}

impl Default for ScalarOptions {
    fn default() -> Self {
        Self {
            x_tol: 1e-8,
            max_iter: 500,
            grid_intervals: 20,
        }
    }
}

/// Maximizes `f` on `[lo, hi]`.
///
/// Non-finite values are treated as `-inf`. An optional coarse grid picks the
/// cell containing the best grid point; Brent's golden-section search with
/// parabolic interpolation then refines inside the neighbouring two cells.
/// The better of the refined point and the best grid point is returned.
pub fn maximize_bounded<F>(mut f: F, lo: f64, hi: f64, opts: ScalarOptions) -> Result<ScalarMax>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(GsarError::InvalidInput(format!("invalid search interval [{lo}, {hi}]")));
    }
    let mut evals = 0usize;
    let mut eval = |x: f64| {
        evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    if opts.grid_intervals >= 2 {
        let k = opts.grid_intervals;
        let grid: Vec<(f64, f64)> = (0..=k)
            .map(|i| {
                let x = if i == k { hi } else { lo + (hi - lo) * i as f64 / k as f64 };
                (x, eval(x))
            })
            .collect();
        let (ibest, &(xb, fb)) = grid
            .iter()
            .enumerate()
            .max_by(|l, r| l.1 .1.total_cmp(&r.1 .1).then(r.0.cmp(&l.0)))
            .unwrap();
        if fb == f64::NEG_INFINITY {
            return Err(GsarError::InvalidInput("objective is non-finite over the whole interval".into()));
        }
        best = (xb, fb);
        a = grid[ibest.saturating_sub(1)].0;
        b = grid[(ibest + 1).min(k)].0;
    }

    let refined = brent_max(&mut eval, a, b, opts);
    let (x, value) = match refined {
        Some((x, v)) if v >= best.1 => (x, v),
        _ if best.1 > f64::NEG_INFINITY => best,
        _ => return Err(GsarError::InvalidInput("objective is non-finite over the whole interval".into())),
    };
    Ok(ScalarMax {
        x,
        value,
        evaluations: evals,
    })
}

/// Brent's method on `-f`. Returns `None` if every evaluation was `-inf`.
fn brent_max<F: FnMut(f64) -> f64>(f: &mut F, mut a: f64, mut b: f64, opts: ScalarOptions) -> Option<(f64, f64)> {
    // width b - a <= 4 * tol at exit
    let tol = 0.25 * opts.x_tol;
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = -f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..opts.max_iter {
        let m = 0.5 * (a + b);
        if (x - m).abs() <= 2.0 * tol - 0.5 * (b - a) {
            break;
        }
        let mut parabolic = false;
        if e.abs() > tol && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < 2.0 * tol || b - u < 2.0 * tol {
                    d = if x < m { tol } else { -tol };
                }
                parabolic = true;
            }
        }
        if !parabolic {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol { x + d } else { x + tol.copysign(d) };
        let fu = -f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    if fx.is_finite() {
        Some((x, -fx))
    } else {
        None
    }
}

/// Newton steps on central differences of `f` with step `h`, starting from a
/// point already within `radius` of a smooth interior maximum.
///
/// Comparing function values locates a maximum only to about the square
/// root of their rounding error; the difference quotients do better. A step
/// is taken only while the curvature is negative, the step is shorter than
/// `radius` and the new point stays `h` inside `[lo, hi]`. Returns the
/// polished point, or `x` unchanged if no step qualifies.
pub fn polish_maximum<F>(mut f: F, x: f64, lo: f64, hi: f64, h: f64, radius: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    let mut x = x;
    for _ in 0..4 {
        if x - h <= lo || x + h >= hi {
            break;
        }
        let (fm, f0, fp) = (f(x - h), f(x), f(x + h));
        let slope = (fp - fm) / (2.0 * h);
        let curvature = (fp - 2.0 * f0 + fm) / (h * h);
        if !(curvature < 0.0) || !slope.is_finite() {
            break;
        }
        let step = -slope / curvature;
        let next = x + step;
        if !(step.abs() <= radius) || next - h <= lo || next + h >= hi {
            break;
        }
        x = next;
        if step.abs() <= 1e-13 {
            break;
        }
    }
    x
}
