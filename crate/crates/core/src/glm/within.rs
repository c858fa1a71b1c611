use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};

/// Replace every column by its deviation from the weighted group mean.
/// Groups with zero total weight fall back to unweighted means.
pub fn within_transform<G: Hash + Eq>(x: &DMatrix<f64>, groups: &[G], w: &[f64]) -> DMatrix<f64> {
    assert_eq!(x.nrows(), groups.len());
    assert_eq!(x.nrows(), w.len());
    let mut ids: HashMap<&G, usize> = HashMap::new();
    let gid: Vec<usize> = groups
        .iter()
        .map(|g| {
            let n = ids.len();
            *ids.entry(g).or_insert(n)
        })
        .collect();
    let k = ids.len();
    let mut wsum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (i, &g) in gid.iter().enumerate() {
        wsum[g] += w[i];
        count[g] += 1;
    }
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mut sums = vec![0.0; k];
        for (i, &g) in gid.iter().enumerate() {
            sums[g] += if wsum[g] > 0.0 { w[i] * col[i] } else { col[i] };
        }
        let means: Vec<f64> = (0..k)
            .map(|g| if wsum[g] > 0.0 { sums[g] / wsum[g] } else { sums[g] / count[g] as f64 })
            .collect();
        for (i, &g) in gid.iter().enumerate() {
            col[i] -= means[g];
        }
    }
    out
}

pub fn within_transform_vec<G: Hash + Eq>(v: &DVector<f64>, groups: &[G], w: &[f64]) -> DVector<f64> {
    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    within_transform(&m, groups, w).column(0).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demeaning() {
        let v = DVector::from_vec(vec![5.0, 1.0, 3.0, 1.0, 4.0]);
        let g = ["a", "b", "b", "c", "c"];
        let w = [1.0, 1.0, 1.0, 1.0, 2.0];
        let out = within_transform_vec(&v, &g, &w);
        assert_eq!(out.as_slice(), &[0.0, -1.0, 1.0, -2.0, 1.0]);
    }
}
