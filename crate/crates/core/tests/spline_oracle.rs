//! Natural cubic spline against a dense linear-algebra oracle.

use ddeid::interpolation::CubicSpline;
use ddeid::StateVec;
use proptest::prelude::*;

fn states(v: &[f64]) -> Vec<StateVec> {
    v.iter().map(|&x| StateVec::new(vec![x]).unwrap()).collect()
}

/// Second derivatives at the knots from the full (n × n) natural-spline
/// system, solved by Gaussian elimination with partial pivoting.
fn dense_second_derivatives(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut a = vec![vec![0.0; n + 1]; n];
    a[0][0] = 1.0;
    a[n - 1][n - 1] = 1.0;
    for i in 1..n - 1 {
        let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        a[i][i - 1] = h0 / 6.0;
        a[i][i] = (h0 + h1) / 3.0;
        a[i][i + 1] = h1 / 6.0;
        a[i][n] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
        }
    }
    let mut m = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * m[k]).sum();
        m[i] = (a[i][n] - s) / a[i][i];
    }
    m
}

#[test]
fn second_derivatives_match_dense_solve() {
    let t: Vec<f64> = (0..25).map(|i| 0.3 * i as f64 + 0.05 * (i as f64).sin()).collect();
    let y: Vec<f64> = t.iter().map(|x| x.sin()).collect();
    let spline = CubicSpline::fit_natural(&t, &states(&y)).unwrap();
    let oracle = dense_second_derivatives(&t, &y);
    for (ti, mi) in t.iter().zip(&oracle) {
        assert!((spline.second_derivative(*ti)[0] - mi).abs() < 1e-10);
    }
}

#[test]
fn sine_is_approximated_in_the_interior() {
    let t: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
    let y: Vec<f64> = t.iter().map(|x| x.sin()).collect();
    let spline = CubicSpline::fit_natural(&t, &states(&y)).unwrap();
    // away from the natural ends the error is O(h⁴)
    for i in 20..80 {
        let tm = 0.1 * i as f64 + 0.05;
        assert!((spline.eval(tm)[0] - tm.sin()).abs() < 1e-5);
    }
}

fn knots() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 2..20).prop_map(|gaps| {
        let mut t = vec![0.0];
        for g in gaps {
            t.push(t.last().unwrap() + g);
        }
        t
    })
}

proptest! {
    #[test]
    fn passes_through_knots(t in knots(), seed in any::<u64>()) {
        let y: Vec<f64> = t.iter().enumerate().map(|(i, ti)| ((seed % 97) as f64 * 0.1 + i as f64 * ti).cos()).collect();
        let spline = CubicSpline::fit_natural(&t, &states(&y)).unwrap();
        for (ti, yi) in t.iter().zip(&y) {
            prop_assert!((spline.eval(*ti)[0] - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_lines(t in knots(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let y: Vec<f64> = t.iter().map(|x| a * x + b).collect();
        let spline = CubicSpline::fit_natural(&t, &states(&y)).unwrap();
        let last = *t.last().unwrap();
        for k in 0..50 {
            let x = last * k as f64 / 49.0;
            prop_assert!((spline.eval(x)[0] - (a * x + b)).abs() < 1e-9);
            prop_assert!((spline.derivative(x)[0] - a).abs() < 1e-8);
        }
    }

    #[test]
    fn second_derivative_vanishes_at_ends(t in knots()) {
        let y: Vec<f64> = t.iter().map(|x| (3.0 * x).sin()).collect();
        let spline = CubicSpline::fit_natural(&t, &states(&y)).unwrap();
        prop_assert!(spline.second_derivative(t[0])[0].abs() < 1e-9);
        prop_assert!(spline.second_derivative(*t.last().unwrap())[0].abs() < 1e-9);
    }
}
