use nalgebra::{DMatrix, DVector};

use super::*;
use crate::calendar::WaveCalendar;
use crate::error::Error;

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

#[test]
fn intercept_only_poisson_is_log_weighted_mean() {
    let x = DMatrix::from_element(3, 1, 1.0);
    let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let m = fit_poisson_qmle(&x, &y, &ones(3), &names(&[INTERCEPT])).unwrap();
    assert!(m.converged);
    assert!((m.coefficients[0].estimate - 2f64.ln()).abs() < 1e-12);
    let w = DVector::from_vec(vec![1.0, 1.0, 2.0]);
    let m = fit_poisson_qmle(&x, &y, &w, &names(&[INTERCEPT])).unwrap();
    assert!((m.coefficients[0].estimate - 2.25f64.ln()).abs() < 1e-12);
}

#[test]
fn exact_log_linear_fit() {
    let xs: Vec<f64> = (0..10).map(|i| i as f64 / 2.0).collect();
    let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
    let y = DVector::from_iterator(10, xs.iter().map(|v| (0.5 * v).exp()));
    let m = fit_poisson_qmle(&x, &y, &ones(10), &names(&[INTERCEPT, "x"])).unwrap();
    assert!(m.converged);
    assert!((m.coefficient("x").unwrap() - 0.5).abs() < 1e-9);
    assert!(m.coefficient(INTERCEPT).unwrap().abs() < 1e-9);
    assert!(m.deviance.abs() < 1e-9);
}

#[test]
fn score_equations_hold() {
    let n = 40;
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => (i as f64 * 0.37).sin(),
        _ => ((i * 7 % 11) as f64) / 10.0,
    });
    let y = DVector::from_fn(n, |i, _| ((i * 13 % 17) as f64) * 0.8);
    let w = DVector::from_fn(n, |i, _| 0.5 + (i % 4) as f64);
    let m = fit_poisson_qmle(&x, &y, &w, &names(&[INTERCEPT, "a", "b"])).unwrap();
    assert!(m.converged);
    let mu = predict(&m, &x, &names(&[INTERCEPT, "a", "b"])).unwrap();
    for j in 0..3 {
        let col = x.column(j);
        let s: f64 = (0..n).map(|i| w[i] * (y[i] - mu[i]) * col[i]).sum();
        let scale: f64 = (0..n).map(|i| w[i] * y[i].abs() * col[i].abs()).sum();
        assert!(s.abs() / scale < 1e-8, "score component {j}: {s}");
    }
    let total: f64 = w.dot(&mu);
    assert!((total - w.dot(&y)).abs() / w.dot(&y) < 1e-8);

    let m2 = fit_poisson_qmle(&x, &y, &(&w * 37.5), &names(&[INTERCEPT, "a", "b"])).unwrap();
    for (a, b) in m.coefficients.iter().zip(&m2.coefficients) {
        assert!((a.estimate - b.estimate).abs() < 1e-10);
    }
}

#[test]
fn collinear_column_is_dropped_and_predictions_unchanged() {
    let n = 30;
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => i as f64 / 10.0,
        _ => 2.0 * i as f64 / 10.0 + 1.0,
    });
    let y = DVector::from_fn(n, |i, _| 1.0 + ((i * 5) % 7) as f64);
    let full = names(&[INTERCEPT, "a", "b"]);
    let m = fit_poisson_qmle(&x, &y, &ones(n), &full).unwrap();
    assert_eq!(m.dropped_columns, vec!["b".to_string()]);
    assert!(m.coefficient("b").is_none());
    let x2 = x.columns(0, 2).into_owned();
    let m2 = fit_poisson_qmle(&x2, &y, &ones(n), &names(&[INTERCEPT, "a"])).unwrap();
    let p1 = predict(&m, &x, &full).unwrap();
    let p2 = predict(&m2, &x2, &names(&[INTERCEPT, "a"])).unwrap();
    assert!((p1 - p2).amax() < 1e-10);
}

#[test]
fn ols_exact_line() {
    let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
    let y = DVector::from_fn(5, |i, _| 2.0 * i as f64 + 1.0);
    let m = fit_ols(&x, &y, &ones(5), &names(&[INTERCEPT, "x"])).unwrap();
    assert!((m.coefficient(INTERCEPT).unwrap() - 1.0).abs() < 1e-12);
    assert!((m.coefficient("x").unwrap() - 2.0).abs() < 1e-12);
    assert!((m.r_squared.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn ols_orthogonal_and_constant() {
    let x = DMatrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { [-1.0, 1.0, -1.0, 1.0][i] });
    let y = DVector::from_vec(vec![3.0, 3.0, 5.0, 5.0]);
    let m = fit_ols(&x, &y, &ones(4), &names(&[INTERCEPT, "x"])).unwrap();
    assert!(m.coefficient("x").unwrap().abs() < 1e-12);
    let y = DVector::from_element(4, 0.6);
    let m = fit_ols(&x, &y, &ones(4), &names(&[INTERCEPT, "x"])).unwrap();
    assert!(m.coefficient("x").unwrap().abs() < 1e-12);
    assert_eq!(m.r_squared, Some(0.0));
}

#[test]
fn predict_links_and_mismatch() {
    let m = FittedModel {
        coefficients: vec![
            Coefficient { name: "a".into(), estimate: 1.0, std_error: None },
            Coefficient { name: "b".into(), estimate: 2.0, std_error: None },
        ],
        dropped_columns: vec![],
        n_obs: 0,
        converged: true,
        iterations: 0,
        deviance: 0.0,
        link: Link::Identity,
        r_squared: None,
        max_score: 0.0,
    };
    let x = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
    assert_eq!(predict(&m, &x, &names(&["a", "b"])).unwrap()[0], 7.0);
    assert!(matches!(predict(&m, &x, &names(&["a", "c"])), Err(Error::Schema(_))));
    let zero = FittedModel {
        link: Link::Log,
        coefficients: m.coefficients.iter().map(|c| Coefficient { estimate: 0.0, ..c.clone() }).collect(),
        ..m
    };
    assert_eq!(predict(&zero, &x, &names(&["a", "b"])).unwrap()[0], 1.0);
}

fn panel_frame(rows: &[(&str, i32, f64)]) -> Frame {
    Frame::new(rows.len())
        .with_categorical("person_id", rows.iter().map(|r| Some(r.0.to_string())).collect())
        .unwrap()
        .with_numeric("year", rows.iter().map(|r| Some(r.1 as f64)).collect())
        .unwrap()
        .with_numeric("w", rows.iter().map(|r| Some(r.2)).collect())
        .unwrap()
}

#[test]
fn lag_uses_prior_calendar_wave() {
    let f = panel_frame(&[("a", 1995, 300.0), ("a", 1996, 310.0), ("b", 1987, 200.0), ("b", 1992, 220.0)]);
    let spec = DesignSpec::new("w").lag(2);
    let cal = WaveCalendar::psid();
    let d = build_design(&f, &spec, Some(&cal)).unwrap();
    assert_eq!(d.rows, vec![1]);
    assert_eq!(d.columns, names(&[INTERCEPT, "lag_w", "lag_w^2"]));
    assert_eq!(d.x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 300.0, 90000.0]);
    let excluded: Vec<usize> = d.excluded.iter().map(|e| e.0).collect();
    assert_eq!(excluded, vec![0, 2, 3]);
    assert!(d.excluded.iter().all(|e| e.1 == RowExclusion::NoLag));
}

#[test]
fn biennial_lag_after_1997() {
    let f = panel_frame(&[("a", 1997, 1.0), ("a", 1999, 2.0), ("a", 2001, 3.0)]);
    let d = build_design(&f, &DesignSpec::new("w").lag(1), Some(&WaveCalendar::psid())).unwrap();
    assert_eq!(d.rows, vec![1, 2]);
    assert_eq!(d.x[(1, 1)], 2.0);
}

#[test]
fn categorical_and_fixed_effect_expansion() {
    let f = Frame::new(4)
        .with_numeric("y", vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)])
        .unwrap()
        .with_categorical(
            "edu",
            ["hs", "college", "less_hs", "hs"].iter().map(|s| Some(s.to_string())).collect(),
        )
        .unwrap()
        .with_categorical("state", ["OH", "NY", "OH", "CA"].iter().map(|s| Some(s.to_string())).collect())
        .unwrap()
        .with_numeric("age", vec![Some(30.0), None, Some(40.0), Some(50.0)])
        .unwrap();
    let spec = DesignSpec::new("y")
        .covariate(Covariate::numeric("age"))
        .covariate(Covariate::categorical("edu", "hs"))
        .fixed_effect("state");
    let d = build_design(&f, &spec, None).unwrap();
    assert_eq!(d.columns, names(&[INTERCEPT, "age", "edu[less_hs]", "fe_state[OH]"]));
    assert_eq!(d.rows, vec![0, 2, 3]);
    assert_eq!(d.excluded, vec![(1, RowExclusion::Missing("age".into()))]);
    assert!(matches!(
        build_design(&f, &DesignSpec::new("y").covariate(Covariate::numeric("nope")), None),
        Err(Error::Schema(_))
    ));
}
