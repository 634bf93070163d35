//! Nelder-Mead simplex search with the conventions of Matlab's
//! `fminsearch`: initial simplex from 5% perturbations, termination when
//! both the simplex diameter and the spread of function values fall below
//! the tolerances.

use crate::{LyapError, Result};

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub tol_x: f64,
    pub tol_f: f64,
    /// Defaults to `200 * dim` when `None`.
    pub max_evals: Option<usize>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { tol_x: 1e-4, tol_f: 1e-4, max_evals: None }
    }
}

impl NelderMeadOptions {
    pub fn with_tol(tol: f64) -> Self {
        NelderMeadOptions { tol_x: tol, tol_f: tol, max_evals: None }
    }
}

#[derive(Clone, Debug)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
}

const RHO: f64 = 1.0;
const CHI: f64 = 2.0;
const PSI: f64 = 0.5;
const SIGMA: f64 = 0.5;

/// Minimize `f` starting from `x0`.
///
/// Returns `EvaluationBudgetExceeded` when the budget runs out before the
/// stopping test passes.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let budget = opts.max_evals.unwrap_or(200 * n);
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let y = f(x);
        if y.is_nan() {
            f64::INFINITY
        } else {
            y
        }
    };

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] = if x[i] != 0.0 { 1.05 * x[i] } else { 0.00025 };
        simplex.push(x);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut iterations = 0;

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();

        let spread_f = fv[1..].iter().map(|v| (v - fv[0]).abs()).fold(0.0, f64::max);
        let spread_x = simplex[1..].iter().map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if spread_f <= opts.tol_f && spread_x <= opts.tol_x {
            return Ok(NelderMeadResult { x: simplex[0].clone(), f: fv[0], evals, iterations });
        }
        if evals >= budget {
            return Err(LyapError::EvaluationBudgetExceeded(evals));
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(RHO);
        let fr = eval(&xr, &mut evals);
        if fr < fv[0] {
            let xe = along(RHO * CHI);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
            continue;
        }
        if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < fv[n] {
            let xc = along(PSI * RHO);
            let fc = eval(&xc, &mut evals);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = along(-PSI);
            let fc = eval(&xc, &mut evals);
            let ok = fc < fv[n];
            (xc, fc, ok)
        };
        if accept {
            simplex[n] = xc;
            fv[n] = fc;
            continue;
        }
        for i in 1..=n {
            let x: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, x)| b + SIGMA * (x - b)).collect();
            fv[i] = eval(&x, &mut evals);
            simplex[i] = x;
        }
    }
}
