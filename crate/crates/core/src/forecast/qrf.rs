//! Quantile regression forest: an ensemble of variance-splitting regression
//! trees whose leaves retain their training targets, so any quantile of the
//! pooled leaf samples can be read off at prediction time.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ForecastError, QuantileTriple};
use crate::metrics::quantile_sorted;

/// Forest hyperparameters. Defaults: 100 trees, bootstrap resampling,
/// ceil(sqrt(p)) candidate features per split, leaves of at least 5 samples.
#[derive(Debug, Clone)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means ceil(sqrt(p)).
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_leaf: 5,
            mtry: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_values(&self, x: &[f64]) -> &[f64] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { values } => return values,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// A trained forest for one target series.
#[derive(Debug, Clone)]
pub struct QuantileModel {
    trees: Vec<Tree>,
    num_features: usize,
    /// Length of the training window this model was built from, in days.
    pub window_days: u32,
}

/// Train a forest on a feature table (rows) and matching targets.
///
/// `window_days` is descriptive metadata about the span of the training
/// rows; callers assemble the window.
pub fn train_quantile_model(
    features: &[Vec<f64>],
    targets: &[f64],
    window_days: u32,
    params: &ForestParams,
) -> Result<QuantileModel, ForecastError> {
    if features.is_empty() || targets.is_empty() {
        return Err(ForecastError::EmptyTrainingData);
    }
    if features.len() != targets.len() {
        return Err(ForecastError::LengthMismatch {
            expected: features.len(),
            got: targets.len(),
        });
    }
    let p = features[0].len();
    if p == 0 || features.iter().any(|row| row.len() != p) {
        return Err(ForecastError::EmptyTrainingData);
    }
    let mtry = params.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).clamp(1, p);

    let n = features.len();
    let mut trees = Vec::with_capacity(params.n_trees);
    for tree_idx in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(tree_idx as u64));
        // Bootstrap sample of row indices.
        let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut builder = TreeBuilder {
            features,
            targets,
            min_leaf: params.min_leaf,
            mtry,
            nodes: Vec::new(),
            rng,
        };
        builder.grow(sample);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    Ok(QuantileModel {
        trees,
        num_features: p,
        window_days,
    })
}

impl QuantileModel {
    /// Pool leaf samples across all trees for this input; ascending order.
    fn pooled_sorted(&self, fv: &[f64]) -> Result<Vec<f64>, ForecastError> {
        if fv.len() != self.num_features {
            return Err(ForecastError::FeatureWidthMismatch {
                expected: self.num_features,
                got: fv.len(),
            });
        }
        let mut pooled: Vec<f64> = self
            .trees
            .iter()
            .flat_map(|t| t.leaf_values(fv).iter().copied())
            .collect();
        pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(pooled)
    }

    /// Empirical quantile of the pooled leaf distribution, clipped at zero.
    pub fn predict_quantile(&self, fv: &[f64], tau: f64) -> Result<f64, ForecastError> {
        let pooled = self.pooled_sorted(fv)?;
        Ok(quantile_sorted(&pooled, tau).max(0.0))
    }

    /// The 40/50/60th percentiles; monotone by construction.
    pub fn predict_quantiles(&self, fv: &[f64]) -> Result<QuantileTriple, ForecastError> {
        let pooled = self.pooled_sorted(fv)?;
        Ok(QuantileTriple {
            q40: quantile_sorted(&pooled, 0.40).max(0.0),
            q50: quantile_sorted(&pooled, 0.50).max(0.0),
            q60: quantile_sorted(&pooled, 0.60).max(0.0),
        })
    }
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    targets: &'a [f64],
    min_leaf: usize,
    mtry: usize,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: Vec<usize>) {
        self.build_node(rows);
    }

    fn build_node(&mut self, rows: Vec<usize>) -> usize {
        if let Some((feature, threshold, left_rows, right_rows)) = self.best_split(&rows) {
            let idx = self.nodes.len();
            self.nodes.push(Node::Split {
                feature,
                threshold,
                left: 0,
                right: 0,
            });
            let left = self.build_node(left_rows);
            let right = self.build_node(right_rows);
            match &mut self.nodes[idx] {
                Node::Split {
                    left: l, right: r, ..
                } => {
                    *l = left;
                    *r = right;
                }
                Node::Leaf { .. } => unreachable!(),
            }
            idx
        } else {
            let idx = self.nodes.len();
            self.nodes.push(Node::Leaf {
                values: rows.iter().map(|&i| self.targets[i]).collect(),
            });
            idx
        }
    }

    /// Best variance-reducing split over a random feature subset, or None
    /// when the node is too small or pure.
    #[allow(clippy::type_complexity)]
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64, Vec<usize>, Vec<usize>)> {
        let n = rows.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let first = self.targets[rows[0]];
        if rows.iter().all(|&i| self.targets[i] == first) {
            return None;
        }

        let p = self.features[0].len();
        let mut candidates: Vec<usize> = (0..p).collect();
        candidates.shuffle(&mut self.rng);
        candidates.truncate(self.mtry);
        candidates.sort_unstable();

        let total_sum: f64 = rows.iter().map(|&i| self.targets[i]).sum();
        let mut best: Option<(f64, usize, f64)> = None; // (score, feature, threshold)

        let mut order: Vec<usize> = rows.to_vec();
        for &feature in &candidates {
            order.sort_by(|&a, &b| {
                self.features[a][feature]
                    .partial_cmp(&self.features[b][feature])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let mut left_sum = 0.0;
            for (k, &row) in order.iter().enumerate().take(n - 1) {
                left_sum += self.targets[row];
                let nl = k + 1;
                let nr = n - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let x_here = self.features[row][feature];
                let x_next = self.features[order[k + 1]][feature];
                if x_here == x_next {
                    continue;
                }
                // Maximizing sum_l^2/n_l + sum_r^2/n_r minimizes child SSE.
                let right_sum = total_sum - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
                let threshold = 0.5 * (x_here + x_next);
                match best {
                    Some((s, _, _)) if s >= score => {}
                    _ => best = Some((score, feature, threshold)),
                }
            }
        }

        let (_, feature, threshold) = best?;
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.features[i][feature] <= threshold);
        if left_rows.len() < self.min_leaf || right_rows.len() < self.min_leaf {
            return None;
        }
        Some((feature, threshold, left_rows, right_rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_leaf_model(values: &[f64]) -> QuantileModel {
        QuantileModel {
            trees: vec![Tree {
                nodes: vec![Node::Leaf {
                    values: values.to_vec(),
                }],
            }],
            num_features: 1,
            window_days: 30,
        }
    }

    #[test]
    fn single_leaf_quantiles_interpolate() {
        let m = single_leaf_model(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let t = m.predict_quantiles(&[0.0]).unwrap();
        assert!((t.q40 - 2.6).abs() < 1e-12);
        assert!((t.q50 - 3.0).abs() < 1e-12);
        assert!((t.q60 - 3.4).abs() < 1e-12);
    }

    #[test]
    fn constant_target_predicts_constant() {
        let features: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let targets = vec![2.5; 60];
        let m = train_quantile_model(&features, &targets, 30, &ForestParams::default()).unwrap();
        let t = m.predict_quantiles(&[13.0, 3.0]).unwrap();
        assert_eq!(t.q40, 2.5);
        assert_eq!(t.q50, 2.5);
        assert_eq!(t.q60, 2.5);
    }

    #[test]
    fn learns_a_deterministic_step_function() {
        // Target depends only on feature 0; deep trees should recover it
        // closely away from the step.
        let features: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 10.0]).collect();
        let targets: Vec<f64> = features
            .iter()
            .map(|f| if f[0] < 10.0 { 1.0 } else { 5.0 })
            .collect();
        let params = ForestParams {
            n_trees: 50,
            ..ForestParams::default()
        };
        let m = train_quantile_model(&features, &targets, 30, &params).unwrap();
        let low = m.predict_quantiles(&[3.0]).unwrap();
        let high = m.predict_quantiles(&[17.0]).unwrap();
        assert!((low.q50 - 1.0).abs() < 0.2, "{low:?}");
        assert!((high.q50 - 5.0).abs() < 0.2, "{high:?}");
    }

    #[test]
    fn quantiles_are_monotone() {
        let features: Vec<Vec<f64>> = (0..300)
            .map(|i| vec![(i % 24) as f64, (i % 5) as f64])
            .collect();
        let targets: Vec<f64> = (0..300)
            .map(|i| ((i * 37) % 100) as f64 / 17.0 + (i % 24) as f64)
            .collect();
        let m = train_quantile_model(&features, &targets, 30, &ForestParams::default()).unwrap();
        for h in 0..24 {
            let t = m.predict_quantiles(&[h as f64, 2.0]).unwrap();
            assert!(t.q40 <= t.q50 && t.q50 <= t.q60);
            assert!(t.q40 >= 0.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let features: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, (i % 9) as f64]).collect();
        let targets: Vec<f64> = (0..100).map(|i| (i % 13) as f64 * 0.3).collect();
        let params = ForestParams {
            seed: 7,
            ..ForestParams::default()
        };
        let a = train_quantile_model(&features, &targets, 30, &params).unwrap();
        let b = train_quantile_model(&features, &targets, 30, &params).unwrap();
        for probe in 0..20 {
            let fv = [probe as f64 * 4.7, (probe % 9) as f64];
            let ta = a.predict_quantiles(&fv).unwrap();
            let tb = b.predict_quantiles(&fv).unwrap();
            assert_eq!(ta, tb);
        }
    }

    #[test]
    fn feature_width_mismatch_errors() {
        let m = single_leaf_model(&[1.0]);
        assert!(matches!(
            m.predict_quantiles(&[1.0, 2.0]),
            Err(ForecastError::FeatureWidthMismatch { .. })
        ));
    }

    #[test]
    fn empty_training_data_errors() {
        assert!(matches!(
            train_quantile_model(&[], &[], 30, &ForestParams::default()),
            Err(ForecastError::EmptyTrainingData)
        ));
    }
}
