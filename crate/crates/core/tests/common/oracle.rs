//! Brute-force reference implementations of the detector definitions.
//!
//! Written against plain nested vectors with explicit per-cell loops so they
//! share no code with the library detectors.

use ndiserve::{ArrayData, ScanArray};

pub type Grid = Vec<Vec<f64>>;

/// `(row, col, score)`, sorted by `(row, col)`.
pub type Cells = Vec<(usize, usize, f64)>;

pub fn to_scan(grid: &Grid) -> ScanArray {
    let rows = grid.len();
    let cols = grid.first().map_or(0, Vec::len);
    let flat = grid.iter().flatten().copied().collect();
    ScanArray::new(vec![rows, cols], ArrayData::F64(flat)).unwrap()
}

/// 2-D scans of the float, `i32` and `u8` dtypes as nested rows.
pub fn from_scan(scan: &ScanArray) -> Grid {
    let flat: Vec<f64> = match scan.data() {
        ArrayData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
        ArrayData::F64(v) => v.clone(),
        ArrayData::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
        ArrayData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
        ArrayData::I64(_) => panic!("no exact f64 view of i64 data"),
    };
    flat.chunks(scan.shape()[1]).map(<[f64]>::to_vec).collect()
}

fn normalize(grid: &Grid, stat: impl Fn(usize, usize) -> f64, cut: f64, confidence: f64) -> Cells {
    let rows = grid.len();
    let cols = grid.first().map_or(0, Vec::len);
    let mut largest = f64::NEG_INFINITY;
    for r in 0..rows {
        for c in 0..cols {
            let s = stat(r, c);
            if s > largest {
                largest = s;
            }
        }
    }
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let s = stat(r, c);
            if s >= cut {
                let score = if largest > cut { (s - cut) / (largest - cut) } else { 1.0 };
                if score >= confidence {
                    out.push((r, c, score));
                }
            }
        }
    }
    out
}

pub fn threshold(grid: &Grid, theta: f64, confidence: f64) -> Cells {
    normalize(grid, |r, c| grid[r][c], theta, confidence)
}

pub fn zscore(grid: &Grid, k: f64, confidence: f64) -> Cells {
    let n = grid.iter().map(Vec::len).sum::<usize>() as f64;
    let mut total = 0.0;
    for row in grid {
        for &v in row {
            total += v;
        }
    }
    let mean = total / n;
    let mut squares = 0.0;
    for row in grid {
        for &v in row {
            squares += (v - mean).powi(2);
        }
    }
    let sd = (squares / n).sqrt();
    if sd == 0.0 {
        return Vec::new();
    }
    normalize(grid, |r, c| (grid[r][c] - mean).abs() / sd, k, confidence)
}

fn middle(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n.is_multiple_of(2) {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    } else {
        xs[(n - 1) / 2]
    }
}

pub fn local_contrast(grid: &Grid, window: usize, k: f64, confidence: f64) -> Cells {
    let rows = grid.len() as isize;
    let cols = grid.first().map_or(0, Vec::len) as isize;
    let h = (window / 2) as isize;
    let stat = |r: usize, c: usize| {
        let mut hood = Vec::new();
        for dr in -h..=h {
            for dc in -h..=h {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr >= 0 && rr < rows && cc >= 0 && cc < cols {
                    hood.push(grid[rr as usize][cc as usize]);
                }
            }
        }
        let m = middle(hood.clone());
        let mad = middle(hood.iter().map(|x| (x - m).abs()).collect());
        (grid[r][c] - m).abs() / (mad + 1e-9)
    };
    normalize(grid, stat, k, confidence)
}

/// Union-find over 8-neighborhoods; centroid rounded half up; max score.
/// Sorted by descending score, then `(row, col)`.
pub fn merge(cells: &Cells) -> Cells {
    let n = cells.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        parent[i] = root;
        root
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (cells[i], cells[j]);
            if a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
    for (i, cell) in cells.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(*cell);
    }
    let mut out: Cells = groups
        .values()
        .map(|g| {
            let len = g.len() as f64;
            let mean_r = g.iter().map(|c| c.0 as f64).sum::<f64>() / len;
            let mean_c = g.iter().map(|c| c.1 as f64).sum::<f64>() / len;
            let best = g.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
            ((mean_r + 0.5).floor() as usize, (mean_c + 0.5).floor() as usize, best)
        })
        .collect();
    out.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));
    out
}

/// Compares library output (any order) with oracle cells: exact cell sets,
/// scores within `tol`. Returns a description of the first difference.
pub fn compare(got: &[ndiserve::inference::Roi], want: &Cells, tol: f64) -> Result<(), String> {
    let mut got: Vec<(usize, usize, f64)> = got.iter().map(|r| (r.row, r.col, r.score)).collect();
    got.sort_by_key(|c| (c.0, c.1));
    let mut want = want.clone();
    want.sort_by_key(|c| (c.0, c.1));
    let got_cells: Vec<_> = got.iter().map(|c| (c.0, c.1)).collect();
    let want_cells: Vec<_> = want.iter().map(|c| (c.0, c.1)).collect();
    if got_cells != want_cells {
        return Err(format!("cells differ: got {got_cells:?}, want {want_cells:?}"));
    }
    for (g, w) in got.iter().zip(&want) {
        if (g.2 - w.2).abs() > tol {
            return Err(format!("score at ({}, {}): got {}, want {}", g.0, g.1, g.2, w.2));
        }
    }
    Ok(())
}
