//! Derivative-free minimization: Nelder–Mead with optional box projection, and Latin-hypercube
//! start points for multi-start schedules.

use rand::Rng;

use crate::random::RandomStream;

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    /// Stop once the spread of objective values across the simplex is below this.
    pub f_tol: f64,
    pub max_iter: usize,
    /// Initial simplex edge per coordinate.
    pub initial_step: Vec<f64>,
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn project(x: &mut [f64], bounds: &Option<Vec<(f64, f64)>>) {
    if let Some(b) = bounds {
        for (xi, &(lo, hi)) in x.iter_mut().zip(b) {
            *xi = xi.clamp(lo, hi);
        }
    }
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum {
    let d = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut x0 = start.to_vec();
    project(&mut x0, &opts.bounds);
    simplex.push(x0.clone());
    for i in 0..d {
        let mut x = x0.clone();
        let step = opts.initial_step.get(i).copied().unwrap_or(0.1);
        x[i] += step;
        if let Some(b) = &opts.bounds {
            if x[i] > b[i].1 {
                x[i] = x0[i] - step;
            }
        }
        project(&mut x, &opts.bounds);
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(&mut f, x)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if (values[d] - values[0]).abs() <= opts.f_tol && values[0].is_finite() {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for x in &simplex[..d] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> =
                centroid.iter().zip(&simplex[d]).map(|(c, w)| c + t * (c - w)).collect();
            project(&mut p, &opts.bounds);
            p
        };

        let xr = along(1.0);
        let fr = eval(&mut f, &xr);
        if fr < values[0] {
            let xe = along(2.0);
            let fe = eval(&mut f, &xe);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = along(0.5);
            let fc = eval(&mut f, &xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&mut f, &xc);
            (xc, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=d {
            for (xi, bi) in simplex[i].iter_mut().zip(&best) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            values[i] = eval(&mut f, &simplex[i]);
        }
    }

    let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Minimum { x: simplex[best].clone(), value: values[best], converged, iterations }
}

/// `n` points in the box, one per stratum along every coordinate.
pub fn latin_hypercube(n: usize, bounds: &[(f64, f64)], rng: &mut RandomStream) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; bounds.len()]; n];
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let k = rng.random_range(0..=i);
            strata.swap(i, k);
        }
        for (p, s) in points.iter_mut().zip(strata) {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            p[j] = lo + (hi - lo) * u;
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(d: usize) -> NelderMeadOptions {
        NelderMeadOptions { f_tol: 1e-14, max_iter: 10_000, initial_step: vec![0.5; d], bounds: None }
    }

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &opts(2));
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2) + (x[1] - 0.5).powi(2);
        let mut o = opts(2);
        o.bounds = Some(vec![(0.0, 10.0), (0.0, 10.0)]);
        let m = nelder_mead(f, &[5.0, 5.0], &o);
        assert!(m.x[0].abs() < 1e-6 && (m.x[1] - 0.5).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn latin_hypercube_strata() {
        let mut rng = RandomStream::new(5);
        let pts = latin_hypercube(20, &[(0.0, 10.0), (-1.0, 1.0)], &mut rng);
        for (j, (lo, hi)) in [(0.0, 10.0), (-1.0, 1.0)].into_iter().enumerate() {
            let mut cells: Vec<usize> =
                pts.iter().map(|p| ((p[j] - lo) / (hi - lo) * 20.0) as usize).collect();
            cells.sort_unstable();
            assert_eq!(cells, (0..20).collect::<Vec<_>>());
        }
    }
}
