//! Random forest of Gini-impurity classification trees. Each tree is grown
//! to purity on a bootstrap sample, testing a random subset of features at
//! every node; the forest predicts by majority vote.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, BenchmarkError, FeatureVector, N_CLASSES, N_FEATURES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub seed: u64,
    pub n_trees: usize,
    /// Features tried per split; `None` means floor(sqrt(feature count)).
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            seed: 42,
            n_trees: 100,
            max_features: None,
            bootstrap: true,
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [u32; N_CLASSES],
    },
}

/// Nodes stored in an arena; index 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_counts(&self, x: &FeatureVector) -> [u32; N_CLASSES] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split { feature, threshold, left, right } => {
                    i = if x.0[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the reached leaf, ties to the lower class index.
    pub fn predict(&self, x: &FeatureVector) -> usize {
        let counts = self.leaf_counts(x).map(f64::from);
        argmax(&counts)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Vote shares over the trees.
    pub fn probabilities(&self, x: &FeatureVector) -> Vec<f64> {
        let mut votes = [0usize; N_CLASSES];
        for tree in &self.trees {
            votes[tree.predict(x)] += 1;
        }
        let n = self.trees.len() as f64;
        votes.iter().map(|v| *v as f64 / n).collect()
    }
}

fn gini_sum(counts: &[u32; N_CLASSES], n: u32) -> f64 {
    // n * gini = n - sum(c^2) / n
    if n == 0 {
        return 0.0;
    }
    let n = f64::from(n);
    n - counts.iter().map(|c| f64::from(*c).powi(2)).sum::<f64>() / n
}

struct Builder<'a> {
    xs: &'a [FeatureVector],
    ys: &'a [usize],
    max_features: usize,
    max_depth: Option<usize>,
    min_samples_split: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [u32; N_CLASSES] {
        let mut c = [0; N_CLASSES];
        for &i in idx {
            c[self.ys[i]] += 1;
        }
        c
    }

    /// Lowest weighted child impurity over all thresholds of one feature,
    /// or `None` when the feature is constant on `idx`.
    fn best_threshold(&self, idx: &[usize], feature: usize) -> Option<BestSplit> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|a, b| self.xs[*a].0[feature].total_cmp(&self.xs[*b].0[feature]));
        let total = self.counts(idx);
        let n = idx.len() as u32;
        let mut left = [0u32; N_CLASSES];
        let mut best: Option<BestSplit> = None;
        for k in 0..order.len() - 1 {
            left[self.ys[order[k]]] += 1;
            let (lo, hi) = (self.xs[order[k]].0[feature], self.xs[order[k + 1]].0[feature]);
            if lo == hi {
                continue;
            }
            let nl = k as u32 + 1;
            let right: [u32; N_CLASSES] = std::array::from_fn(|c| total[c] - left[c]);
            let score = gini_sum(&left, nl) + gini_sum(&right, n - nl);
            if best.as_ref().is_none_or(|b| score < b.score) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(BestSplit { feature, threshold, score });
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(&idx);
        let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
        let depth_capped = self.max_depth.is_some_and(|d| depth >= d);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        if pure || depth_capped || idx.len() < self.min_samples_split {
            return id;
        }

        // Visit features in random order; keep searching past max_features
        // only while no feature has produced a valid split.
        let mut features: Vec<usize> = (0..N_FEATURES).collect();
        features.shuffle(rng);
        let mut best: Option<BestSplit> = None;
        for (visited, &f) in features.iter().enumerate() {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            if let Some(s) = self.best_threshold(&idx, f) {
                if best.as_ref().is_none_or(|b| s.score < b.score) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else { return id };

        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.xs[i].0[split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

pub fn fit_tree(xs: &[FeatureVector], ys: &[usize], sample: Vec<usize>, cfg: &ForestConfig, rng: &mut ChaCha8Rng) -> Tree {
    let max_features = cfg
        .max_features
        .unwrap_or_else(|| (N_FEATURES as f64).sqrt().floor() as usize)
        .clamp(1, N_FEATURES);
    let mut b = Builder {
        xs,
        ys,
        max_features,
        max_depth: cfg.max_depth,
        min_samples_split: cfg.min_samples_split.max(2),
        nodes: Vec::new(),
    };
    b.grow(sample, 0, rng);
    Tree { nodes: b.nodes }
}

/// Grows `n_trees` trees. Tree `t` uses its own generator seeded from the
/// `t`-th draw of a master generator seeded with `cfg.seed`.
pub fn fit(xs: &[FeatureVector], ys: &[usize], cfg: &ForestConfig) -> Result<Forest, BenchmarkError> {
    if cfg.n_trees == 0 {
        return Err(BenchmarkError::InvalidConfig("n_trees must be positive".into()));
    }
    if xs.is_empty() {
        return Err(BenchmarkError::EmptyTrainingSet);
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trees = (0..cfg.n_trees)
        .map(|_| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
            let sample: Vec<usize> = if cfg.bootstrap {
                (0..xs.len()).map(|_| rng.gen_range(0..xs.len())).collect()
            } else {
                (0..xs.len()).collect()
            };
            fit_tree(xs, ys, sample, cfg, &mut rng)
        })
        .collect();
    Ok(Forest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(class: usize) -> Tree {
        let mut counts = [0; N_CLASSES];
        counts[class] = 3;
        Tree { nodes: vec![Node::Leaf { counts }] }
    }

    #[test]
    fn vote_normalisation() {
        let forest = Forest {
            trees: vec![leaf(0), leaf(0), leaf(1), leaf(2)],
        };
        assert_eq!(forest.probabilities(&FeatureVector([0.0; 8])), vec![0.5, 0.25, 0.25]);
    }

    fn unique_points(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut x = [0.0; N_FEATURES];
                x.iter_mut().for_each(|v| *v = f64::from(rng.gen_range(0..4)));
                // make every vector distinct
                x[0] += i as f64 * 0.37 % 5.0;
                (FeatureVector(x), rng.gen_range(0..N_CLASSES))
            })
            .unzip()
    }

    #[test]
    fn single_tree_shatters_distinct_points() {
        let (xs, ys) = unique_points(50, 5);
        for i in 0..xs.len() {
            for j in 0..i {
                assert_ne!(xs[i], xs[j]);
            }
        }
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let forest = fit(&xs, &ys, &cfg).unwrap();
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, y)| argmax(&forest.probabilities(x)) == **y)
            .count();
        assert_eq!(correct, 50);
    }

    #[test]
    fn tree_order_does_not_matter() {
        let (xs, ys) = unique_points(80, 9);
        let forest = fit(&xs, &ys, &ForestConfig { n_trees: 15, ..Default::default() }).unwrap();
        let mut reversed = forest.clone();
        reversed.trees.reverse();
        let (probe, _) = unique_points(30, 10);
        for x in &probe {
            assert_eq!(forest.probabilities(x), reversed.probabilities(x));
        }
    }

    #[test]
    fn max_depth_is_respected() {
        let (xs, ys) = unique_points(80, 2);
        let cfg = ForestConfig {
            n_trees: 3,
            max_depth: Some(2),
            ..Default::default()
        };
        let forest = fit(&xs, &ys, &cfg).unwrap();
        assert!(forest.trees.iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn same_seed_same_forest() {
        let (xs, ys) = unique_points(60, 4);
        let cfg = ForestConfig { n_trees: 10, seed: 17, ..Default::default() };
        assert_eq!(fit(&xs, &ys, &cfg).unwrap(), fit(&xs, &ys, &cfg).unwrap());
        assert!(fit(&xs, &ys, &ForestConfig { n_trees: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn gini_of_pure_and_even_nodes() {
        assert_eq!(gini_sum(&[4, 0, 0], 4), 0.0);
        assert!((gini_sum(&[2, 2, 2], 6) - 6.0 * (2.0 / 3.0)).abs() < 1e-12);
    }
}
