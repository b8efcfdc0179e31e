//! Distance-2 column coloring of a sparsity pattern.

use serde::{Deserialize, Serialize};

use crate::sparse::SparsityPattern;

/// Color per column; columns of one color never share a nonzero row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    pub colors: Vec<usize>,
    pub n_colors: usize,
}

impl Coloring {
    /// Seed vector `e_j = 1` for the columns of color `c`.
    pub fn seed(&self, c: usize) -> Vec<f64> {
        self.colors
            .iter()
            .map(|&k| if k == c { 1.0 } else { 0.0 })
            .collect()
    }

    /// Columns grouped by color.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.n_colors];
        for (j, &c) in self.colors.iter().enumerate() {
            g[c].push(j);
        }
        g
    }
}

/// Greedy coloring in ascending column order: each column takes the
/// smallest color not used by a column sharing one of its rows.
pub fn distance2_coloring(pattern: &SparsityPattern) -> Coloring {
    let n = pattern.n_cols;
    let cols = pattern.transpose();
    let mut colors = vec![usize::MAX; n];
    // forbidden[c] == j marks color c as taken for column j.
    let mut forbidden: Vec<usize> = Vec::new();
    let mut n_colors = 0;
    for j in 0..n {
        for &r in cols.row(j) {
            for &k in pattern.row(r) {
                let c = colors[k];
                if c != usize::MAX {
                    forbidden[c] = j;
                }
            }
        }
        let c = (0..n_colors)
            .find(|&c| forbidden[c] != j)
            .unwrap_or(n_colors);
        if c == n_colors {
            n_colors += 1;
            forbidden.push(usize::MAX);
        }
        colors[j] = c;
    }
    Coloring { colors, n_colors }
}

/// True when no row holds two columns of the same color.
pub fn is_valid_coloring(pattern: &SparsityPattern, coloring: &Coloring) -> bool {
    if coloring.colors.len() != pattern.n_cols {
        return false;
    }
    let mut seen = vec![usize::MAX; coloring.n_colors];
    for i in 0..pattern.n_rows {
        for &j in pattern.row(i) {
            let c = coloring.colors[j];
            if c >= coloring.n_colors || seen[c] == i {
                return false;
            }
            seen[c] = i;
        }
    }
    true
}
