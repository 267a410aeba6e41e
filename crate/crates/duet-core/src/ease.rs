//! Closed-form item-item collaborative filter and the hard-negative
//! sampler built on it.
//!
//! Given the binary interaction matrix X, the model solves
//!
//! ```text
//! P = (X^T X + lambda I)^-1
//! B_ij = -P_ij / P_jj   (i != j),   diag(B) = 0
//! ```
//!
//! which is the exact minimizer of ||X - XB||_F^2 + lambda ||B||_F^2 under
//! the zero-diagonal constraint. Scores are S = X B; hard negatives are the
//! top-scoring items a user never interacted with. The Gram matrix is
//! symmetric positive definite for lambda > 0, so the inverse goes through
//! a Cholesky factorization. Dense solve: the item count is capped by
//! config and the fit fails loudly beyond it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EaseError {
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("{n_items} items exceed the dense-solve cap {cap}")]
    TooManyItems { n_items: usize, cap: usize },
    #[error("matrix must have at least one item")]
    NoItems,
    #[error("Gram matrix is not positive definite (pivot {pivot} at column {col})")]
    NotPositiveDefinite { col: usize, pivot: f64 },
    #[error("user index {index} out of range ({n_users} users)")]
    BadUserIndex { index: usize, n_users: usize },
    #[error("negative count k must be >= 1")]
    BadK,
}

/// Sparse binary user-item interaction matrix with stable id maps. Indices
/// are assigned in sorted id order, so identical datasets always produce
/// identical matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    /// Per user: sorted, deduplicated item indices.
    rows: Vec<Vec<usize>>,
}

impl RatingMatrix {
    pub fn from_dataset(d: &Dataset) -> Self {
        let user_ids: Vec<String> = d.users().into_iter().map(String::from).collect();
        let item_ids: Vec<String> = d.items().into_iter().map(String::from).collect();
        let user_index: BTreeMap<&str, usize> = user_ids
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        let item_index: BTreeMap<&str, usize> = item_ids
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let mut row_sets: Vec<BTreeSet<usize>> = alloc::vec![BTreeSet::new(); user_ids.len()];
        for it in &d.interactions {
            row_sets[user_index[it.user_id.as_str()]].insert(item_index[it.item_id.as_str()]);
        }
        RatingMatrix {
            user_ids,
            item_ids,
            rows: row_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.user_ids.binary_search_by(|u| u.as_str().cmp(user_id)).ok()
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.item_ids.binary_search_by(|i| i.as_str().cmp(item_id)).ok()
    }

    pub fn row(&self, user_index: usize) -> Result<&[usize], EaseError> {
        self.rows.get(user_index).map(Vec::as_slice).ok_or(EaseError::BadUserIndex {
            index: user_index,
            n_users: self.user_ids.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EaseConfig {
    pub lambda: f64,
    /// Dense n^2 memory cap; fits beyond this fail loudly.
    pub max_items: usize,
}

impl Default for EaseConfig {
    fn default() -> Self {
        EaseConfig {
            lambda: 100.0,
            max_items: 20_000,
        }
    }
}

/// Fitted item-item weight matrix, diag(B) exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EaseModel {
    n_items: usize,
    lambda: f64,
    /// Row-major n_items x n_items.
    b: Vec<f64>,
}

impl EaseModel {
    pub fn from_parts(n_items: usize, lambda: f64, b: Vec<f64>) -> Result<Self, EaseError> {
        if lambda.is_nan() || lambda <= 0.0 {
            return Err(EaseError::NonPositiveLambda(lambda));
        }
        assert_eq!(b.len(), n_items * n_items, "weight matrix shape mismatch");
        Ok(EaseModel { n_items, lambda, b })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.n_items + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.b
    }
}

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// (lower triangle), followed by column-wise forward/back substitution
/// against the identity to produce the inverse.
fn spd_inverse(mut g: Vec<f64>, n: usize) -> Result<Vec<f64>, EaseError> {
    // factor: G = L L^T, L stored in the lower triangle of g
    for j in 0..n {
        let mut diag = g[j * n + j];
        for k in 0..j {
            diag -= g[j * n + k] * g[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(EaseError::NotPositiveDefinite { col: j, pivot: diag });
        }
        let ljj = math::sqrt(diag);
        g[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut v = g[i * n + j];
            for k in 0..j {
                v -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = v / ljj;
        }
    }

    // solve L L^T X = I column by column
    let mut inv = alloc::vec![0.0f64; n * n];
    let mut y = alloc::vec![0.0f64; n];
    for col in 0..n {
        // forward: L y = e_col
        for i in 0..n {
            let mut v = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                v -= g[i * n + k] * y[k];
            }
            y[i] = v / g[i * n + i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v -= g[k * n + i] * inv[k * n + col];
            }
            inv[i * n + col] = v / g[i * n + i];
        }
    }
    Ok(inv)
}

/// Fits the closed form: Gram accumulation, regularized inverse, and the
/// zero-diagonal rescaling.
pub fn fit_ease(x: &RatingMatrix, cfg: &EaseConfig) -> Result<EaseModel, EaseError> {
    if cfg.lambda.is_nan() || cfg.lambda <= 0.0 {
        return Err(EaseError::NonPositiveLambda(cfg.lambda));
    }
    let n = x.n_items();
    if n == 0 {
        return Err(EaseError::NoItems);
    }
    if n > cfg.max_items {
        return Err(EaseError::TooManyItems {
            n_items: n,
            cap: cfg.max_items,
        });
    }

    // G = X^T X + lambda I via per-user co-occurrence
    let mut g = alloc::vec![0.0f64; n * n];
    for row in &x.rows {
        for &i in row {
            for &j in row {
                g[i * n + j] += 1.0;
            }
        }
    }
    for d in 0..n {
        g[d * n + d] += cfg.lambda;
    }

    let p = spd_inverse(g, n)?;
    let mut b = alloc::vec![0.0f64; n * n];
    for j in 0..n {
        let pjj = p[j * n + j];
        for i in 0..n {
            b[i * n + j] = if i == j { 0.0 } else { -p[i * n + j] / pjj };
        }
    }
    EaseModel::from_parts(n, cfg.lambda, b)
}

/// The user's row of X times B: one relevance score per item.
pub fn score_user(model: &EaseModel, x: &RatingMatrix, user_index: usize) -> Result<Vec<f64>, EaseError> {
    let row = x.row(user_index)?;
    let n = model.n_items();
    let mut scores = alloc::vec![0.0f64; n];
    for &i in row {
        for (j, s) in scores.iter_mut().enumerate() {
            *s += model.weight(i, j);
        }
    }
    Ok(scores)
}

/// Top-k items by score, excluding the user's interacted items and the
/// explicit exclude set. Ties break toward the lower item index; fewer than
/// k are returned when candidates run out.
pub fn hard_negatives(
    model: &EaseModel,
    x: &RatingMatrix,
    user_index: usize,
    k: usize,
    exclude: &BTreeSet<usize>,
) -> Result<Vec<usize>, EaseError> {
    if k == 0 {
        return Err(EaseError::BadK);
    }
    let scores = score_user(model, x, user_index)?;
    let interacted: BTreeSet<usize> = x.row(user_index)?.iter().copied().collect();
    let mut candidates: Vec<usize> = (0..model.n_items())
        .filter(|i| !interacted.contains(i) && !exclude.contains(i))
        .collect();
    candidates.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then_with(|| a.cmp(&b))
    });
    candidates.truncate(k);
    Ok(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Interaction, RatingScale};
    use alloc::string::ToString;
    use alloc::vec;

    fn rec(user: &str, item: &str) -> Interaction {
        Interaction {
            user_id: user.to_string(),
            item_id: item.to_string(),
            rating: 4,
            timestamp: 1,
            text: String::new(),
            summary: None,
        }
    }

    fn matrix(pairs: &[(&str, &str)]) -> RatingMatrix {
        let d = Dataset::new(
            "t",
            RatingScale::one_to_five(),
            pairs.iter().map(|(u, i)| rec(u, i)).collect(),
        )
        .unwrap();
        RatingMatrix::from_dataset(&d)
    }

    /// Independent Gauss-Jordan inverse for the test oracle.
    fn gauss_jordan_inverse(a: &[f64], n: usize) -> Vec<f64> {
        let mut aug = vec![0.0; n * 2 * n];
        for i in 0..n {
            for j in 0..n {
                aug[i * 2 * n + j] = a[i * n + j];
            }
            aug[i * 2 * n + n + i] = 1.0;
        }
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&r1, &r2| {
                    aug[r1 * 2 * n + col]
                        .abs()
                        .partial_cmp(&aug[r2 * 2 * n + col].abs())
                        .unwrap()
                })
                .unwrap();
            for j in 0..2 * n {
                aug.swap(col * 2 * n + j, pivot_row * 2 * n + j);
            }
            let pivot = aug[col * 2 * n + col];
            assert!(pivot.abs() > 1e-12);
            for j in 0..2 * n {
                aug[col * 2 * n + j] /= pivot;
            }
            for row in 0..n {
                if row == col {
                    continue;
                }
                let factor = aug[row * 2 * n + col];
                for j in 0..2 * n {
                    aug[row * 2 * n + j] -= factor * aug[col * 2 * n + j];
                }
            }
        }
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                inv[i * n + j] = aug[i * 2 * n + n + j];
            }
        }
        inv
    }

    /// Oracle fit: Gram via explicit dense X^T X, inverse via Gauss-Jordan.
    fn oracle_fit(x: &RatingMatrix, lambda: f64) -> Vec<f64> {
        let n = x.n_items();
        let mut dense = vec![vec![0.0f64; n]; x.n_users()];
        for (u, row) in x.rows.iter().enumerate() {
            for &i in row {
                dense[u][i] = 1.0;
            }
        }
        let mut g = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = (0..x.n_users()).map(|u| dense[u][i] * dense[u][j]).sum();
                if i == j {
                    g[i * n + j] += lambda;
                }
            }
        }
        let p = gauss_jordan_inverse(&g, n);
        let mut b = vec![0.0f64; n * n];
        for j in 0..n {
            for i in 0..n {
                b[i * n + j] = if i == j { 0.0 } else { -p[i * n + j] / p[j * n + j] };
            }
        }
        b
    }

    #[test]
    fn empty_interactions_give_zero_weights() {
        // 3 items known only through the id maps: craft a matrix with one
        // user per item removed; simplest is users that never overlap
        let x = matrix(&[("u1", "a"), ("u2", "b"), ("u3", "c")]);
        // wipe the rows to simulate zero interactions while keeping items
        let mut x = x;
        for row in &mut x.rows {
            row.clear();
        }
        let model = fit_ease(&x, &EaseConfig { lambda: 2.5, max_items: 100 }).unwrap();
        assert!(model.weights().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn single_item_is_all_zero() {
        let x = matrix(&[("u1", "only"), ("u2", "only")]);
        let model = fit_ease(&x, &EaseConfig { lambda: 1.0, max_items: 10 }).unwrap();
        assert_eq!(model.weights(), &[0.0]);
    }

    #[test]
    fn three_by_three_hand_case() {
        // X = [[1,1,0],[0,1,1],[1,0,1]], lambda = 1:
        // G = 2I + J with eigenvalues {5, 2, 2}; P = 0.5 I - 0.1 J, so
        // P_jj = 0.4, P_ij = -0.1, and B off-diagonals are 0.25.
        let x = matrix(&[
            ("u1", "a"), ("u1", "b"),
            ("u2", "b"), ("u2", "c"),
            ("u3", "a"), ("u3", "c"),
        ]);
        let model = fit_ease(&x, &EaseConfig { lambda: 1.0, max_items: 10 }).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 0.25 };
                assert!(
                    (model.weight(i, j) - expected).abs() < 1e-9,
                    "B[{i}][{j}] = {}",
                    model.weight(i, j)
                );
            }
        }
        // and against the independent oracle route
        let oracle = oracle_fit(&x, 1.0);
        for (w, o) in model.weights().iter().zip(&oracle) {
            assert!((w - o).abs() < 1e-9);
        }
    }

    #[test]
    fn diagonal_is_exactly_zero() {
        let x = matrix(&[
            ("u1", "a"), ("u1", "b"), ("u1", "c"),
            ("u2", "b"), ("u2", "c"), ("u2", "d"),
            ("u3", "a"), ("u3", "d"),
        ]);
        let model = fit_ease(&x, &EaseConfig::default()).unwrap();
        for i in 0..x.n_items() {
            assert_eq!(model.weight(i, i), 0.0);
        }
    }

    #[test]
    fn rejects_bad_lambda_and_cap() {
        let x = matrix(&[("u", "a"), ("u", "b")]);
        assert!(matches!(
            fit_ease(&x, &EaseConfig { lambda: 0.0, max_items: 10 }),
            Err(EaseError::NonPositiveLambda(_))
        ));
        assert!(matches!(
            fit_ease(&x, &EaseConfig { lambda: 1.0, max_items: 1 }),
            Err(EaseError::TooManyItems { n_items: 2, cap: 1 })
        ));
    }

    #[test]
    fn scores_for_toy_case() {
        let x = matrix(&[
            ("u1", "a"), ("u1", "b"),
            ("u2", "b"), ("u2", "c"),
            ("u3", "a"), ("u3", "c"),
        ]);
        let model = fit_ease(&x, &EaseConfig { lambda: 1.0, max_items: 10 }).unwrap();
        // user u1 has items {a, b}: s_j = B[a][j] + B[b][j]
        let scores = score_user(&model, &x, 0).unwrap();
        let expected = [0.25, 0.25, 0.5];
        for (s, e) in scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-9, "{scores:?}");
        }
    }

    #[test]
    fn zero_user_and_zero_model_score_zero() {
        let x = matrix(&[("u1", "a"), ("u2", "b")]);
        let mut empty = x.clone();
        empty.rows[0].clear();
        let model = fit_ease(&x, &EaseConfig { lambda: 1.0, max_items: 10 }).unwrap();
        let scores = score_user(&model, &empty, 0).unwrap();
        assert!(scores.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn hard_negatives_exclude_interacted_and_explicit() {
        let x = matrix(&[
            ("u1", "a"), ("u1", "b"),
            ("u2", "b"), ("u2", "c"),
            ("u3", "a"), ("u3", "c"),
            ("u4", "d"), ("u4", "a"),
        ]);
        let model = fit_ease(&x, &EaseConfig { lambda: 1.0, max_items: 10 }).unwrap();
        let exclude: BTreeSet<usize> = [x.item_index("c").unwrap()].into_iter().collect();
        let negs = hard_negatives(&model, &x, 0, 10, &exclude).unwrap();
        let interacted: BTreeSet<usize> = x.row(0).unwrap().iter().copied().collect();
        assert!(negs.iter().all(|i| !interacted.contains(i) && !exclude.contains(i)));
        // brute-force comparison: sort the scored complement
        let scores = score_user(&model, &x, 0).unwrap();
        let mut brute: Vec<usize> = (0..x.n_items())
            .filter(|i| !interacted.contains(i) && !exclude.contains(i))
            .collect();
        brute.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        assert_eq!(negs, brute);
    }

    #[test]
    fn hard_negatives_run_out_gracefully() {
        let x = matrix(&[("u1", "a"), ("u1", "b")]);
        let model = fit_ease(&x, &EaseConfig { lambda: 1.0, max_items: 10 }).unwrap();
        let negs = hard_negatives(&model, &x, 0, 5, &BTreeSet::new()).unwrap();
        assert!(negs.is_empty(), "all items interacted");
    }

    /// Frobenius objective ||X - XB||^2 + lambda ||B||^2 computed directly.
    fn objective(x: &RatingMatrix, b: &[f64], lambda: f64) -> f64 {
        let n = x.n_items();
        let mut total = 0.0;
        for row in &x.rows {
            let mut dense = vec![0.0f64; n];
            for &i in row {
                dense[i] = 1.0;
            }
            for j in 0..n {
                let pred: f64 = row.iter().map(|&i| b[i * n + j]).sum();
                let diff = dense[j] - pred;
                total += diff * diff;
            }
        }
        total + lambda * b.iter().map(|w| w * w).sum::<f64>()
    }

    #[test]
    fn kkt_perturbation_check_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        for case in 0..20 {
            let n_items = rng.gen_range(4..=6);
            let n_users = rng.gen_range(4..=7);
            let mut pairs = Vec::new();
            for u in 0..n_users {
                for i in 0..n_items {
                    if rng.gen_bool(0.45) {
                        pairs.push((alloc::format!("u{u}"), alloc::format!("i{i}")));
                    }
                }
            }
            if pairs.is_empty() {
                pairs.push(("u0".to_string(), "i0".to_string()));
            }
            let refs: Vec<(&str, &str)> = pairs.iter().map(|(u, i)| (u.as_str(), i.as_str())).collect();
            let x = matrix(&refs);
            let lambda = 0.5 + rng.gen_range(0.0..2.0);
            let model = fit_ease(&x, &EaseConfig { lambda, max_items: 10 }).unwrap();
            let base = objective(&x, model.weights(), lambda);
            let n = x.n_items();
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    for delta in [1e-3, -1e-3] {
                        let mut perturbed = model.weights().to_vec();
                        perturbed[i * n + j] += delta;
                        let value = objective(&x, &perturbed, lambda);
                        assert!(
                            value >= base - 1e-9,
                            "case {case}: perturbing ({i},{j}) by {delta} lowered the objective"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn item_permutation_equivariance() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let x = matrix(&[
            ("u1", "a"), ("u1", "b"),
            ("u2", "b"), ("u2", "c"),
            ("u3", "a"), ("u3", "c"),
            ("u4", "d"), ("u4", "b"),
            ("u5", "d"), ("u5", "a"),
        ]);
        let model = fit_ease(&x, &EaseConfig { lambda: 1.5, max_items: 10 }).unwrap();

        // relabel items with a fixed shuffle, refit, and compare through
        // the id maps
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let mut new_names = ["w", "x", "y", "z"];
        new_names.shuffle(&mut rng);
        let rename = |old: &str| match old {
            "a" => new_names[0],
            "b" => new_names[1],
            "c" => new_names[2],
            _ => new_names[3],
        };
        let mut pairs = Vec::new();
        for (u, row) in x.rows.iter().enumerate() {
            for &i in row {
                pairs.push((x.user_ids[u].clone(), rename(&x.item_ids[i]).to_string()));
            }
        }
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(u, i)| (u.as_str(), i.as_str())).collect();
        let xp = matrix(&refs);
        let permuted = fit_ease(&xp, &EaseConfig { lambda: 1.5, max_items: 10 }).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let pi = xp.item_index(rename(&x.item_ids[i])).unwrap();
                let pj = xp.item_index(rename(&x.item_ids[j])).unwrap();
                assert!(
                    (model.weight(i, j) - permuted.weight(pi, pj)).abs() < 1e-9,
                    "({i},{j})"
                );
            }
        }
    }
}
