mod oracles;

use agrpose::eval::{match_people, mpjpe, pck, MatchResult, Population};
use agrpose::geometry::{add, Point3};
use proptest::prelude::*;

#[test]
fn ground_truth_scores_zero_error_and_full_pck() {
    oracles::ground_truth_identities();
}

#[test]
fn translated_poses_have_zero_relative_error() {
    oracles::translation_identity();
}

fn point() -> impl Strategy<Value = Point3> {
    [-3000.0..3000.0f64, -3000.0..3000.0f64, 0.0..2000.0f64]
}

fn people(max: usize) -> impl Strategy<Value = Vec<Vec<Point3>>> {
    prop::collection::vec(prop::collection::vec(point(), 4), 0..max)
}

proptest! {
    #[test]
    fn matching_is_a_partial_bijection(gt in people(5), pred in people(5), max_dist in 10.0..5000.0f64) {
        let gr: Vec<Point3> = gt.iter().map(|p| p[0]).collect();
        let pr: Vec<Point3> = pred.iter().map(|p| p[0]).collect();
        let m = match_people(&gr, &pr, max_dist).unwrap();
        prop_assert_eq!(m.pairs.len() + m.unmatched_gt.len(), gr.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_pred.len(), pr.len());
        let mut gs: Vec<usize> = m.pairs.iter().map(|p| p.0).chain(m.unmatched_gt.iter().copied()).collect();
        let mut ps: Vec<usize> = m.pairs.iter().map(|p| p.1).chain(m.unmatched_pred.iter().copied()).collect();
        gs.sort();
        ps.sort();
        prop_assert_eq!(gs, (0..gr.len()).collect::<Vec<_>>());
        prop_assert_eq!(ps, (0..pr.len()).collect::<Vec<_>>());
        for &(g, p) in &m.pairs {
            prop_assert!(agrpose::geometry::distance(gr[g], pr[p]) <= max_dist);
        }
    }

    #[test]
    fn relative_error_ignores_translation(gt in people(4), delta in point()) {
        let pred: Vec<Vec<Point3>> = gt.iter().map(|p| p.iter().map(|&q| add(q, delta)).collect()).collect();
        let m = MatchResult {
            pairs: (0..gt.len()).map(|i| (i, i)).collect(),
            ..MatchResult::default()
        };
        if let Some(rel) = mpjpe(&m, &gt, &pred, Some(0)) {
            prop_assert!(rel < 1e-9, "relative error {}", rel);
        }
    }

    #[test]
    fn errors_and_percentages_are_bounded(gt in people(4), pred in people(4), t in 1.0..1000.0f64) {
        let gr: Vec<Point3> = gt.iter().map(|p| p[0]).collect();
        let pr: Vec<Point3> = pred.iter().map(|p| p[0]).collect();
        let m = match_people(&gr, &pr, 5000.0).unwrap();
        if let Some(e) = mpjpe(&m, &gt, &pred, None) {
            prop_assert!(e >= 0.0 && e.is_finite());
        }
        for pop in [Population::Matched, Population::All] {
            let (a, r) = pck(&m, &gt, &pred, 0, t, t, pop).unwrap();
            for v in [a, r].into_iter().flatten() {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }
        let (self_abs, _) = pck(&match_people(&gr, &gr, 1.0).unwrap(), &gt, &gt, 0, t, t, Population::All).unwrap();
        if !gt.is_empty() {
            prop_assert_eq!(self_abs, Some(100.0));
        }
    }
}
