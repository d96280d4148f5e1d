//! Complex-cell pooling: the mean squared coefficient of each atom over patches.

use crate::sparsecode::SparseCode;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn zeros(n: usize) -> Self {
        FeatureVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Divide by the total response so features sum to one. A zero vector is left as is.
    pub fn divisively_normalized(&self) -> FeatureVector {
        let total = self.sum();
        if total > 0.0 {
            FeatureVector(self.0.iter().map(|f| f / total).collect())
        } else {
            self.clone()
        }
    }
}

/// `f_n = (1/P) Σ_i a_in²`, absent coefficients counting as zero.
pub fn pool_features(codes: &SparseCode, patches: usize, atoms: usize) -> FeatureVector {
    let mut f = vec![0.0; atoms];
    if patches == 0 {
        return FeatureVector(f);
    }
    for code in &codes.patches {
        for &(n, a) in code {
            f[n] += a * a;
        }
    }
    let inv = 1.0 / patches as f64;
    f.iter_mut().for_each(|v| *v *= inv);
    FeatureVector(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_codes_pool_to_zero() {
        let f = pool_features(&SparseCode::empty(4), 4, 10);
        assert_eq!(f, FeatureVector::zeros(10));
    }

    #[test]
    fn single_entry() {
        let codes = SparseCode {
            patches: vec![vec![(5, 2.0)]],
        };
        let f = pool_features(&codes, 1, 8);
        assert_eq!(f.0[5], 4.0);
        assert_eq!(f.sum(), 4.0);
    }

    #[test]
    fn two_patches_same_atom() {
        let codes = SparseCode {
            patches: vec![vec![(2, 1.0)], vec![(2, 3.0)]],
        };
        assert_eq!(pool_features(&codes, 2, 3).0, vec![0.0, 0.0, 5.0]);
    }

    #[test]
    fn sign_invariance() {
        let a = SparseCode {
            patches: vec![vec![(0, 1.5), (1, -0.5)], vec![(1, 2.0)]],
        };
        let b = SparseCode {
            patches: vec![vec![(0, -1.5), (1, 0.5)], vec![(1, -2.0)]],
        };
        assert_eq!(pool_features(&a, 2, 2), pool_features(&b, 2, 2));
    }

    #[test]
    fn divisive_normalization_sums_to_one() {
        let f = FeatureVector(vec![1.0, 3.0, 0.0]).divisively_normalized();
        assert_eq!(f.0, vec![0.25, 0.75, 0.0]);
        assert_eq!(FeatureVector::zeros(2).divisively_normalized(), FeatureVector::zeros(2));
    }
}
