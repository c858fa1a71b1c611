//! Production dynamics against brute-force enumeration over every status
//! sequence of length 6, plus conservation properties on random panels.

use proptest::prelude::*;

use pfs_core::dynamics::{
    chronic_in, newly_still_decomposition, spells_in, transition_matrix, GroupLabels, Grouping, PersonSeries,
    Status,
};
use pfs_core::synth::oracle::{oracle_dynamics_enum, Onset};
use pfs_core::WaveCalendar;

const ALL: [Status; 3] = [Status::Secure, Status::Insecure, Status::Unknown];

fn sequence(mut code: usize, n: usize) -> Vec<Status> {
    (0..n)
        .map(|_| {
            let s = ALL[code % 3];
            code /= 3;
            s
        })
        .collect()
}

fn series(id: &str, statuses: Vec<Status>) -> PersonSeries {
    let n = statuses.len();
    let weights = statuses.iter().map(|s| if s.known() { 1.0 } else { 0.0 }).collect();
    PersonSeries { person_id: id.into(), statuses, weights, labels: vec![GroupLabels::default(); n] }
}

#[test]
fn all_729_sequences_agree() {
    let cal = WaveCalendar::annual(2001, 2006);
    for code in 0..729 {
        let seq = sequence(code, 6);
        let want = oracle_dynamics_enum(&seq).unwrap();

        let got: Vec<_> =
            spells_in(&seq, false).iter().map(|s| (s.start, s.end, s.left_censored, s.right_censored)).collect();
        assert_eq!(got, want.spells, "{seq:?}");
        for s in spells_in(&seq, false) {
            assert_eq!(s.length, s.end - s.start + 1);
        }

        let s = series("p", seq.clone());
        let tm = transition_matrix(std::slice::from_ref(&s), &cal, Grouping::Total, &[]);
        let t = tm.get("total").copied().unwrap_or_default();
        let tr = want.transitions;
        assert_eq!(t.secure_both, tr[0][0] as f64, "{seq:?}");
        assert_eq!(t.insecure_second_only, tr[0][1] as f64, "{seq:?}");
        assert_eq!(t.insecure_first_only, tr[1][0] as f64, "{seq:?}");
        assert_eq!(t.insecure_both, tr[1][1] as f64, "{seq:?}");
        assert_eq!(t.n_pairs, tr.iter().flatten().sum::<usize>());

        assert_eq!(chronic_in(&seq, 0, 5), want.chronic, "{seq:?}");

        let ns = newly_still_decomposition(std::slice::from_ref(&s), &cal);
        for (i, row) in ns.iter().enumerate() {
            let expect = match want.onsets[i] {
                None => (0.0, 0.0, 0.0),
                Some(Onset::Still) => (1.0, 0.0, 0.0),
                Some(Onset::Newly) => (0.0, 1.0, 0.0),
                Some(Onset::PriorUnknown) => (0.0, 0.0, 1.0),
            };
            assert_eq!((row.still, row.newly, row.prior_unknown), expect, "{seq:?} wave {i}");
        }
    }
}

fn status() -> impl Strategy<Value = Status> {
    prop_oneof![Just(Status::Secure), Just(Status::Insecure), Just(Status::Unknown)]
}

proptest! {
    #[test]
    fn spell_lengths_add_up_to_insecure_waves(seq in prop::collection::vec(status(), 0..30)) {
        let insecure = seq.iter().filter(|s| **s == Status::Insecure).count();
        let total: usize = spells_in(&seq, false).iter().map(|s| s.length).sum();
        prop_assert_eq!(total, insecure);
        let bridged: usize = spells_in(&seq, true).iter().map(|s| s.length).sum();
        prop_assert_eq!(bridged, insecure);
        prop_assert!(spells_in(&seq, true).len() <= spells_in(&seq, false).len());
    }

    #[test]
    fn pair_and_wave_conservation(
        panel in prop::collection::vec((prop::collection::vec(status(), 8), prop::collection::vec(0.1f64..5.0, 8)), 1..20)
    ) {
        let cal = WaveCalendar::annual(2001, 2008);
        let series: Vec<PersonSeries> = panel
            .iter()
            .enumerate()
            .map(|(i, (st, w))| {
                let weights = st.iter().zip(w).map(|(s, w)| if s.known() { *w } else { 0.0 }).collect();
                PersonSeries { person_id: i.to_string(), statuses: st.clone(), weights, labels: vec![GroupLabels::default(); 8] }
            })
            .collect();
        let tm = transition_matrix(&series, &cal, Grouping::Total, &[]);
        let pair_mass: f64 = series
            .iter()
            .flat_map(|s| (1..8).filter(move |&t| s.statuses[t - 1].known() && s.statuses[t].known()).map(move |t| s.weights[t]))
            .sum();
        let t = tm.get("total").copied().unwrap_or_default();
        prop_assert!((t.total() - pair_mass).abs() <= 1e-12 * pair_mass.max(1.0));
        if t.total() > 0.0 {
            let sh = t.shares();
            prop_assert!((sh.total() - 1.0).abs() < 1e-12);
        }
        for (i, row) in newly_still_decomposition(&series, &cal).iter().enumerate() {
            let insecure: f64 = series.iter().filter(|s| s.statuses[i] == Status::Insecure).map(|s| s.weights[i]).sum();
            let known: f64 = series.iter().filter(|s| s.statuses[i].known()).map(|s| s.weights[i]).sum();
            prop_assert!((row.insecure() - insecure).abs() <= 1e-12 * insecure.max(1.0));
            prop_assert!((row.population - known).abs() <= 1e-12 * known.max(1.0));
        }
    }
}
