//! Figure rendering and the association regressions on planted data.

use pfs_cli::association::fit_association;
use pfs_cli::svg::{render, Chart};
use pfs_cli::table::Table;
use pfs_core::glm::{Covariate, DesignSpec, Frame};

#[test]
fn all_secure_prevalence_is_a_flat_zero_line() {
    let mut t = Table::new("figure3", &["year", "prevalence"]);
    for y in 1990..2000 {
        t.push(vec![y.to_string(), "0.000000".into()]);
    }
    let svg = render(&t, "prevalence", &Chart::Lines { x: "year", ys: &["prevalence"] });
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let points: Vec<_> = doc.descendants().filter(|n| n.has_attribute("data-y")).collect();
    assert_eq!(points.len(), 10);
    let cy = points[0].attribute("cy").unwrap();
    for p in &points {
        assert_eq!(p.attribute("data-y"), Some("0.000000"));
        assert_eq!(p.attribute("cy"), Some(cy));
    }
}

#[test]
fn labels_are_escaped() {
    let mut t = Table::new("f", &["group", "whisker_low", "q1", "median", "q3", "whisker_high"]);
    t.push(vec!["a<b & \"c\"".into(), "0.1".into(), "0.2".into(), "0.3".into(), "0.4".into(), "0.5".into()]);
    let svg = render(&t, "x & y", &Chart::Boxes { label: "group" });
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let g = doc.descendants().find(|n| n.has_attribute("data-label")).unwrap();
    assert_eq!(g.attribute("data-label"), Some("a<b & \"c\""));
}

/// 60 persons over 8 years; pfs linear in ln income with a person effect.
fn planted() -> Frame {
    let (mut person, mut year, mut state, mut inc, mut female, mut pfs, mut w) =
        (vec![], vec![], vec![], vec![], vec![], vec![], vec![]);
    for i in 0..60 {
        let effect = ((i * 37) % 11) as f64 / 50.0;
        for t in 0..8 {
            let x = 8.0 + ((i * 7 + t * 13) % 17) as f64 / 5.0;
            let is_female = i % 3 == 0;
            person.push(Some(format!("p{i}")));
            year.push(Some((2000 + t) as f64));
            state.push(Some(["OH", "TX", "CA"][i % 3].to_string()));
            inc.push(Some(x));
            female.push(Some(if is_female { "female" } else { "male" }.to_string()));
            // year effect and person effect; female absorbed by the person effect
            pfs.push(Some(0.2 + 0.045 * x + 0.01 * t as f64 + effect + if is_female { -0.03 } else { 0.0 }));
            w.push(Some(1.0 + (i % 4) as f64));
        }
    }
    Frame::new(person.len())
        .with_categorical("person_id", person)
        .unwrap()
        .with_numeric("year", year)
        .unwrap()
        .with_categorical("state", state)
        .unwrap()
        .with_numeric("ln_income_pc", inc)
        .unwrap()
        .with_categorical("sex", female)
        .unwrap()
        .with_numeric("pfs", pfs)
        .unwrap()
        .with_numeric("w", w)
        .unwrap()
}

fn spec() -> DesignSpec {
    DesignSpec::new("pfs")
        .covariate(Covariate::numeric("ln_income_pc"))
        .covariate(Covariate::categorical("sex", "male"))
        .fixed_effect("state")
        .fixed_effect("year")
        .weighted_by("w")
}

#[test]
fn within_person_fit_recovers_the_planted_slope() {
    let m = fit_association(&planted(), &spec(), Some("person_id")).unwrap();
    let slope = m.coefficient("ln_income_pc").unwrap();
    assert!((slope - 0.045).abs() < 1e-10, "{slope}");
    assert!(m.coefficients.iter().all(|c| c.name != "(intercept)"));
}

#[test]
fn within_person_fit_drops_person_constants() {
    let m = fit_association(&planted(), &spec(), Some("person_id")).unwrap();
    for c in ["sex[female]", "fe_state[OH]", "fe_state[TX]"] {
        assert!(m.dropped_columns.iter().any(|d| d == c), "{c} in {:?}", m.dropped_columns);
        assert!(m.coefficient(c).is_none());
    }
}

#[test]
fn pooled_fit_keeps_constants_and_the_slope_sign() {
    let m = fit_association(&planted(), &spec(), None).unwrap();
    assert!(m.coefficient("(intercept)").is_some());
    assert!(m.coefficient("sex[female]").is_some());
    assert!(m.coefficient("ln_income_pc").unwrap() > 0.0);
}
