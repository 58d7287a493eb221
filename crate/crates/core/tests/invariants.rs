//! Property tests for structural invariants: symmetry of the loss under row
//! sign flips and permutations, greedy selection against the brute-force
//! reference, slope recovery, and snapshot round trips.

use hermite_flow_core::hermite::Activation;
use hermite_flow_core::model::{
    population_loss, read_snapshot, write_snapshot, StudentState, TeacherModel,
};
use hermite_flow_core::oracle::brute_force_greedy;
use hermite_flow_core::selection::greedy_select;
use hermite_flow_core::theory::fit_slope;
use ndarray::Array2;
use proptest::prelude::*;

fn teacher_strategy() -> impl Strategy<Value = TeacherModel> {
    (2usize..=4, proptest::collection::vec(0.05f64..1.0, 4))
        .prop_map(|(p, raw)| {
            let mut a: Vec<f64> = raw.into_iter().take(p).collect();
            a.sort_by(|x, y| y.partial_cmp(x).unwrap());
            let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut a {
                *x /= n;
            }
            TeacherModel::new(a, 8).unwrap()
        })
}

fn student_strategy() -> impl Strategy<Value = StudentState> {
    (1usize..=4, proptest::collection::vec(-1.0f64..1.0, 4 * 8)).prop_filter_map(
        "rows must be nonzero",
        |(m, raw)| {
            let v = Array2::from_shape_vec((4, 8), raw).unwrap();
            let v = v.slice(ndarray::s![0..m, ..]).to_owned();
            StudentState::new(v, 0).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_invariant_under_row_sign_flip(
        teacher in teacher_strategy(),
        student in student_strategy(),
        flip_mask in proptest::collection::vec(proptest::bool::ANY, 4),
    ) {
        let act = Activation::pure_hermite(4).unwrap();
        let base = population_loss(&teacher, &student, &act).unwrap();
        let mut v = student.rows().clone();
        for (k, mut row) in v.rows_mut().into_iter().enumerate() {
            if flip_mask[k % flip_mask.len()] {
                row.mapv_inplace(|x| -x);
            }
        }
        let flipped = population_loss(&teacher, &StudentState::new(v, 0).unwrap(), &act).unwrap();
        prop_assert!((base - flipped).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn loss_invariant_under_row_permutation(
        teacher in teacher_strategy(),
        student in student_strategy(),
        rotate in 0usize..4,
    ) {
        let act = Activation::pure_hermite(4).unwrap();
        let base = population_loss(&teacher, &student, &act).unwrap();
        let m = student.width();
        let mut v = Array2::zeros((m, student.dim()));
        for k in 0..m {
            v.row_mut(k).assign(&student.rows().row((k + rotate) % m));
        }
        let permuted = population_loss(&teacher, &StudentState::new(v, 0).unwrap(), &act).unwrap();
        prop_assert!((base - permuted).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn greedy_matches_brute_force(
        raw in proptest::collection::vec(0.0f64..1.0, 30),
        m in 2usize..=6,
    ) {
        let p = (30 / m.max(1)).clamp(1, 5);
        let score = Array2::from_shape_vec((m, p), raw[..m * p].to_vec()).unwrap();
        let p_star = m.min(p);
        let sel = greedy_select(score.view(), p_star).unwrap();
        let (order, pi) = brute_force_greedy(score.view(), p_star);
        prop_assert_eq!(&sel.student_order[..p_star], &order[..]);
        prop_assert_eq!(&sel.pi[..p_star], &pi[..]);
    }

    #[test]
    fn greedy_selected_scores_dominate_residual(
        raw in proptest::collection::vec(0.0f64..1.0, 24),
    ) {
        let score = Array2::from_shape_vec((4, 6), raw).unwrap();
        let sel = greedy_select(score.view(), 4).unwrap();
        // replay: each selected entry is >= everything in its residual block
        for rank in 0..sel.p_star {
            let chosen = score[(sel.student_order[rank], sel.pi[rank])];
            for &k in &sel.student_order[rank..] {
                for &q in &sel.pi[rank..] {
                    prop_assert!(score[(k, q)] <= chosen + 1e-15);
                }
            }
        }
    }

    #[test]
    fn fit_slope_recovers_exponent(
        exp in -2.0f64..-0.1,
        scale in 0.5f64..4.0,
    ) {
        let series: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = 5.0 * 1.25f64.powi(i);
                (t, scale * t.powf(exp))
            })
            .collect();
        let hi = series[1].1 * 1.001;
        let lo = series[48].1 * 0.999;
        let (slope, _) = fit_slope(&series, (hi, lo)).unwrap();
        prop_assert!((slope - exp).abs() < 1e-9);
    }

    #[test]
    fn snapshot_round_trip(
        teacher in teacher_strategy(),
        student in student_strategy(),
    ) {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &teacher, &student).unwrap();
        let (t2, s2) = read_snapshot(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(teacher, t2);
        prop_assert_eq!(student, s2);
    }
}
