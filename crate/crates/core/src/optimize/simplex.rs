use super::Bounds;
use crate::scalar::{lit, Real};

/// Nelder–Mead minimization of `f` inside `bounds` (by projection).
///
/// Returns the best vertex and its value. Stops after `max_iter` iterations or
/// once the spread of vertex values falls below `tol` relative to the best.
pub fn nelder_mead<T: Real, F: FnMut(&[T]) -> T>(
    mut f: F,
    x0: &[T],
    bounds: &Bounds<T>,
    max_iter: usize,
    tol: T,
) -> (Vec<T>, T) {
    let n = x0.len();
    let half = lit::<T>(0.5);
    let mut eval = |x: &mut Vec<T>| {
        bounds.project(x);
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    let v0 = eval(&mut start);
    simplex.push((start.clone(), v0));
    for j in 0..n {
        let mut x = start.clone();
        let step = if x[j] != T::zero() {
            x[j] * lit(0.05)
        } else {
            lit(2.5e-4)
        };
        x[j] += step;
        // step the other way when the bound swallowed the move
        let mut xv = x.clone();
        let v = eval(&mut xv);
        if xv[j] == start[j] {
            x[j] = start[j] - step;
            let v = eval(&mut x);
            simplex.push((x, v));
        } else {
            simplex.push((xv, v));
        }
    }

    let by_value = |a: &(Vec<T>, T), b: &(Vec<T>, T)| {
        a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal)
    };
    for _ in 0..max_iter {
        simplex.sort_by(by_value);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= tol * (best.abs() + T::min_positive_value()) {
            break;
        }
        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for j in 0..n {
                centroid[j] += x[j];
            }
        }
        let nt = T::from_usize(n).unwrap_or_else(T::one);
        centroid.iter_mut().for_each(|c| *c /= nt);
        let along = |t: T, worst: &[T]| -> Vec<T> {
            centroid
                .iter()
                .zip(worst)
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };
        let worst_x = simplex[n].0.clone();
        let mut xr = along(T::one(), &worst_x);
        let fr = eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = along(lit(2.0), &worst_x);
            let fe = eval(&mut xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let t = if fr < simplex[n].1 { half } else { -half };
            let mut xc = along(t, &worst_x);
            let fc = eval(&mut xc);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for j in 0..n {
                        x[j] = best_x[j] + half * (x[j] - best_x[j]);
                    }
                    *v = eval(x);
                }
            }
        }
    }
    simplex.sort_by(by_value);
    simplex.swap_remove(0)
}
