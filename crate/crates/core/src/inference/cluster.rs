//! Collapsing adjacent candidate cells into one region of interest per blob.

use std::collections::HashMap;

use super::detectors::Candidate;
use super::Roi;

/// Orders ROIs by descending score, then by `(row, col)` ascending.
pub fn sort_rois(rois: &mut [Roi]) {
    rois.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.row.cmp(&b.row))
            .then(a.col.cmp(&b.col))
    });
}

/// Groups candidates into 8-connected components and emits one ROI per
/// component at its centroid (each coordinate rounded half up) carrying the
/// component's highest score.
pub fn cluster_rois(candidates: &[Candidate]) -> Vec<Roi> {
    let index: HashMap<(usize, usize), usize> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| ((c.row, c.col), i))
        .collect();
    let mut seen = vec![false; candidates.len()];
    let mut stack = Vec::new();
    let mut rois = Vec::new();

    for start in 0..candidates.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut row_sum, mut col_sum, mut count) = (0u128, 0u128, 0u128);
        let mut best = f64::NEG_INFINITY;
        while let Some(i) = stack.pop() {
            let c = candidates[i];
            row_sum += c.row as u128;
            col_sum += c.col as u128;
            count += 1;
            best = best.max(c.score);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (Some(r), Some(cc)) = (c.row.checked_add_signed(dr), c.col.checked_add_signed(dc)) else {
                        continue;
                    };
                    if let Some(&j) = index.get(&(r, cc)) {
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        rois.push(Roi {
            row: round_half_up(row_sum, count),
            col: round_half_up(col_sum, count),
            score: best,
        });
    }
    sort_rois(&mut rois);
    rois
}

/// `floor(sum / count + 1/2)` in exact integer arithmetic.
fn round_half_up(sum: u128, count: u128) -> usize {
    ((2 * sum + count) / (2 * count)) as usize
}
