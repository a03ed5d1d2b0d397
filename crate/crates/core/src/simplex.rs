//! Nelder–Mead descent on the unit box `[0, 1]^d`.
//!
//! Trial points are clipped to the box, which is how the fitter enforces
//! parameter bounds after mapping each parameter onto `[0, 1]`.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Stop once the spread of vertex values falls below `tolerance · |f_best|`
    /// (plus a tiny absolute floor).
    pub tolerance: f64,
    /// Edge length of the starting simplex in box units.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_evals: 4000,
            tolerance: 1e-10,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

const ABS_FLOOR: f64 = 1e-14;
const X_FLOOR: f64 = 1e-13;

pub fn minimize<F>(f: &mut F, start: &[f64], opts: &SimplexOptions) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let d = start.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let x0: Vec<f64> = start.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    if d == 0 {
        let value = eval(&x0, &mut evals);
        return SimplexOutcome {
            x: x0,
            value,
            evals,
            converged: true,
        };
    }

    let mut verts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = eval(&x0, &mut evals);
    verts.push((x0.clone(), v0));
    for i in 0..d {
        let mut x = x0.clone();
        let step = opts.initial_step;
        x[i] = if x[i] + step <= 1.0 { x[i] + step } else { x[i] - step };
        let v = eval(&x, &mut evals);
        verts.push((x, v));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        verts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = verts[0].1;
        let worst = verts[d].1;
        let spread_x = (0..d)
            .map(|j| {
                let (lo, hi) = verts
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.0[j]), hi.max(v.0[j])));
                hi - lo
            })
            .fold(0.0, f64::max);
        if worst - best <= opts.tolerance * best.abs() + ABS_FLOOR || spread_x <= X_FLOOR {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; d];
        for (x, _) in &verts[..d] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&verts[d].0)
                .map(|(c, w)| (c + t * (c - w)).clamp(0.0, 1.0))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < verts[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            verts[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < verts[d - 1].1 {
            verts[d] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < verts[d].1 {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < verts[d].1.min(fr) {
            verts[d] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best_x = verts[0].0.clone();
        for v in verts.iter_mut().skip(1) {
            for (xi, bi) in v.0.iter_mut().zip(&best_x) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            v.1 = eval(&v.0, &mut evals);
        }
    }

    verts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = verts.swap_remove(0);
    SimplexOutcome {
        x,
        value,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_quadratic_minimum() {
        let target = [0.3, 0.7, 0.55];
        let mut f = |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let out = minimize(&mut f, &[0.9, 0.1, 0.5], &SimplexOptions::default());
        assert!(out.converged);
        for (a, b) in out.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn respects_box() {
        let mut f = |x: &[f64]| (x[0] + 2.0).powi(2) + (x[1] - 0.5).powi(2);
        let out = minimize(&mut f, &[0.5, 0.5], &SimplexOptions::default());
        assert!(out.x[0].abs() < 1e-6);
        assert!((out.x[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn rosenbrock_in_box() {
        // minimum at (0.5, 0.25) after shifting into the box
        let mut f = |x: &[f64]| {
            let (a, b) = (2.0 * x[0], 4.0 * x[1]);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let opts = SimplexOptions {
            max_evals: 20_000,
            ..SimplexOptions::default()
        };
        let out = minimize(&mut f, &[0.1, 0.9], &opts);
        assert!((out.x[0] - 0.5).abs() < 1e-3, "{:?}", out.x);
        assert!((out.x[1] - 0.25).abs() < 1e-3);
    }

    #[test]
    fn never_worse_than_start_and_respects_budget() {
        let mut f = |x: &[f64]| (x[0] * 13.0).sin() + (x[1] * 7.0).cos();
        let start = [0.4, 0.6];
        let f0 = f(&start);
        let opts = SimplexOptions {
            max_evals: 50,
            ..SimplexOptions::default()
        };
        let out = minimize(&mut f, &start, &opts);
        assert!(out.value <= f0);
        assert!(out.evals <= 50 + 6);
    }
}
