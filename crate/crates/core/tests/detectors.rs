mod common;

use common::oracle::{self, Grid};
use ndiserve::inference::{
    cluster_rois, local_contrast_detect, threshold_detect, zscore_detect, Candidate, Roi,
};
use proptest::prelude::*;

#[test]
fn worked_examples_agree_with_oracle() {
    let ramp: Grid = vec![vec![1., 2., 3.], vec![4., 5., 6.], vec![7., 8., 9.]];
    let want = oracle::threshold(&ramp, 5.0, 0.5);
    assert_eq!(want, vec![(2, 0, 0.5), (2, 1, 0.75), (2, 2, 1.0)]);
    let got = threshold_detect(&oracle::to_scan(&ramp), 5.0, 0.5, false).unwrap();
    oracle::compare(&got, &want, 0.0).unwrap();

    let row: Grid = vec![vec![0., 0., 0., 0., 10.]];
    let want = oracle::zscore(&row, 1.5, 0.0);
    assert_eq!(want, vec![(0, 4, 1.0)]);
    let got = zscore_detect(&oracle::to_scan(&row), 1.5, 0.0, false).unwrap();
    oracle::compare(&got, &want, 0.0).unwrap();

    let mut spike: Grid = vec![vec![0.0; 5]; 5];
    spike[2][2] = 10.0;
    let want = oracle::local_contrast(&spike, 3, 2.0, 0.0);
    assert!(want.contains(&(2, 2, 1.0)));
    let got = local_contrast_detect(&oracle::to_scan(&spike), 3, 2.0, 0.0, false).unwrap();
    oracle::compare(&got, &want, 0.0).unwrap();
}

fn small_grid(max_side: usize) -> impl Strategy<Value = Grid> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(r, c)| {
        proptest::collection::vec(proptest::collection::vec((0i32..6).prop_map(f64::from), c), r)
    })
}

fn float_grid() -> impl Strategy<Value = Grid> {
    (1usize..=7, 1usize..=7).prop_flat_map(|(r, c)| {
        proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, c), r)
    })
}

fn check_bounds(rois: &[Roi], grid: &Grid) -> Result<(), TestCaseError> {
    for roi in rois {
        prop_assert!(roi.row < grid.len());
        prop_assert!(roi.col < grid[0].len());
        prop_assert!((0.0..=1.0).contains(&roi.score), "score {}", roi.score);
    }
    for pair in rois.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        prop_assert!(a.score > b.score || (a.score == b.score && (a.row, a.col) < (b.row, b.col)));
    }
    Ok(())
}

proptest! {
    #[test]
    fn merged_output_matches_oracle_clustering(grid in small_grid(8), theta in 0.0f64..6.0, conf in 0.0f64..1.0) {
        let scan = oracle::to_scan(&grid);
        let got = threshold_detect(&scan, theta, conf, true).unwrap();
        let want = oracle::merge(&oracle::threshold(&grid, theta, conf));
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!((g.row, g.col), (w.0, w.1));
            prop_assert!((g.score - w.2).abs() <= 1e-12);
        }
    }

    #[test]
    fn rois_respect_bounds(grid in float_grid(), k in 0.1f64..5.0, conf in 0.0f64..1.0, window in prop::sample::select(vec![3usize, 5, 7]), merge: bool) {
        let scan = oracle::to_scan(&grid);
        let t = grid[0][0];
        check_bounds(&threshold_detect(&scan, t, conf, merge).unwrap(), &grid)?;
        check_bounds(&zscore_detect(&scan, k, conf, merge).unwrap(), &grid)?;
        check_bounds(&local_contrast_detect(&scan, window, k, conf, merge).unwrap(), &grid)?;
    }

    #[test]
    fn detectors_are_deterministic(grid in float_grid(), k in 0.1f64..5.0) {
        let scan = oracle::to_scan(&grid);
        prop_assert_eq!(zscore_detect(&scan, k, 0.0, true).unwrap(), zscore_detect(&scan, k, 0.0, true).unwrap());
        prop_assert_eq!(
            local_contrast_detect(&scan, 3, k, 0.0, false).unwrap(),
            local_contrast_detect(&scan, 3, k, 0.0, false).unwrap()
        );
    }

    #[test]
    fn clustering_preserves_best_score(cells in proptest::collection::btree_map((0usize..10, 0usize..10), 0.0f64..1.0, 0..30)) {
        let candidates: Vec<Candidate> = cells.iter().map(|(&(row, col), &score)| Candidate { row, col, score }).collect();
        let rois = cluster_rois(&candidates);
        prop_assert!(rois.len() <= candidates.len());
        let best = candidates.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
        if let Some(top) = rois.first() {
            prop_assert_eq!(top.score, best);
        } else {
            prop_assert!(candidates.is_empty());
        }
    }
}
