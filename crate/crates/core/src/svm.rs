//! One-vs-rest linear SVM over one-hot sequence features, trained with
//! Pegasos-style stochastic subgradient steps on the hinge objective
//! `λ/2‖w‖² + mean hinge`.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tokenizer::MaskedExample;

/// Number of one-hot slots per sequence position.
pub const SLOTS: usize = 30;

#[derive(Debug, Clone)]
pub struct SvmConfig {
    pub lambda: f64,
    pub steps: usize,
    pub seed: u64,
    /// Full-objective evaluation interval (steps).
    pub objective_every: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            steps: 20_000,
            seed: 0,
            objective_every: 1000,
        }
    }
}

/// Trained one-vs-rest model: one weight vector and bias per residue class
/// present in the training labels.
#[derive(Debug, Clone)]
pub struct SvmModel {
    /// Ascending class ids (residue token ids).
    pub classes: Vec<u32>,
    /// Per-class weight vector, aligned with `classes`.
    pub weights: Vec<Vec<f32>>,
    pub biases: Vec<f32>,
    pub feature_dim: usize,
    pub lambda: f64,
    /// Full hinge objective per class, sampled every `objective_every`
    /// steps during training.
    pub objective_trace: Vec<Vec<f64>>,
}

/// Concatenated one-hot encoding of `input_ids`: 30 slots per position,
/// `[MASK]`/`[PAD]` one-hot like any other token.
pub fn featurize(example: &MaskedExample) -> Vec<f32> {
    let mut out = vec![0.0f32; example.input_ids.len() * SLOTS];
    for (pos, &id) in example.input_ids.iter().enumerate() {
        out[pos * SLOTS + id as usize] = 1.0;
    }
    out
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Deduplicated training set: identical (features, label) instances are
/// merged with multiplicity. Sampling by normalized cumulative weight makes
/// training invariant to wholesale dataset duplication.
struct DedupSet {
    features: Vec<Vec<f32>>,
    labels: Vec<u32>,
    cumulative: Vec<f64>,
}

impl DedupSet {
    fn build(features: &[Vec<f32>], labels: &[u32]) -> Self {
        let mut merged: BTreeMap<(Vec<u32>, u32), (usize, f64)> = BTreeMap::new();
        let mut order = Vec::new();
        for (f, &l) in features.iter().zip(labels) {
            let key = (f.iter().map(|v| v.to_bits()).collect::<Vec<u32>>(), l);
            match merged.get_mut(&key) {
                Some((_, w)) => *w += 1.0,
                None => {
                    merged.insert(key.clone(), (order.len(), 1.0));
                    order.push((f.clone(), l));
                }
            }
        }
        let mut weights = vec![0.0f64; order.len()];
        for (idx, w) in merged.values() {
            weights[*idx] = *w;
        }
        let total: f64 = weights.iter().sum();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w / total;
            cumulative.push(acc);
        }
        DedupSet {
            features: order.iter().map(|(f, _)| f.clone()).collect(),
            labels: order.iter().map(|(_, l)| *l).collect(),
            cumulative,
        }
    }

    fn sample(&self, u: f64) -> usize {
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(i) => (i + 1).min(self.cumulative.len() - 1),
            Err(i) => i.min(self.cumulative.len() - 1),
        }
    }
}

/// Hinge objective `λ/2‖w‖² + mean_i max(0, 1 - y_i(w·x_i + b))`.
fn objective(w: &[f32], b: f32, lambda: f64, set: &DedupSet, class: u32) -> f64 {
    let norm_sq: f64 = w.iter().map(|&v| v as f64 * v as f64).sum();
    let mut hinge = 0.0;
    for (f, &l) in set.features.iter().zip(&set.labels) {
        let y = if l == class { 1.0 } else { -1.0 };
        let margin = y * (dot(w, f) + b as f64);
        hinge += (1.0 - margin).max(0.0);
    }
    lambda / 2.0 * norm_sq + hinge / set.features.len() as f64
}

/// Trains the one-vs-rest model with Pegasos steps (learning rate `1/(λt)`,
/// scale-trick weight representation, unregularized bias).
pub fn svm_train(features: &[Vec<f32>], labels: &[u32], cfg: &SvmConfig) -> Result<SvmModel> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::ShapeMismatch {
            op: "svm_train",
            lhs: vec![dim],
            rhs: vec![features.iter().map(|f| f.len()).max().unwrap()],
        });
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let set = DedupSet::build(features, labels);
    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    let mut traces = Vec::with_capacity(classes.len());
    for (ci, &class) in classes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(ci as u64));
        // w = scale · w_base
        let mut w_base = vec![0.0f32; dim];
        let mut scale = 1.0f64;
        let mut bias = 0.0f32;
        let mut trace = Vec::new();
        for t in 1..=cfg.steps {
            let i = set.sample(rng.random::<f64>());
            let x = &set.features[i];
            let y = if set.labels[i] == class { 1.0f64 } else { -1.0 };
            let eta = 1.0 / (cfg.lambda * t as f64);
            let margin = y * (scale * dot(&w_base, x) + bias as f64);
            let decay = 1.0 - eta * cfg.lambda; // = 1 - 1/t
            scale *= decay;
            if margin < 1.0 {
                if scale == 0.0 {
                    // First step: the decayed term vanishes entirely.
                    for (wb, &xv) in w_base.iter_mut().zip(x) {
                        *wb = (eta * y) as f32 * xv;
                    }
                    scale = 1.0;
                } else {
                    let coef = (eta * y / scale) as f32;
                    for (wb, &xv) in w_base.iter_mut().zip(x) {
                        *wb += coef * xv;
                    }
                }
                bias += (eta * y) as f32;
            } else if scale == 0.0 {
                scale = 1.0;
                w_base.iter_mut().for_each(|v| *v = 0.0);
            }
            if t % cfg.objective_every == 0 {
                let w: Vec<f32> = w_base.iter().map(|&v| (v as f64 * scale) as f32).collect();
                trace.push(objective(&w, bias, cfg.lambda, &set, class));
            }
        }
        let w: Vec<f32> = w_base.iter().map(|&v| (v as f64 * scale) as f32).collect();
        weights.push(w);
        biases.push(bias);
        traces.push(trace);
    }
    Ok(SvmModel {
        classes,
        weights,
        biases,
        feature_dim: dim,
        lambda: cfg.lambda,
        objective_trace: traces,
    })
}

/// Per-class decision values `w_c·x + b_c`, aligned with `model.classes`.
pub fn decision_values(model: &SvmModel, features: &[f32]) -> Result<Vec<f64>> {
    if features.len() != model.feature_dim {
        return Err(Error::ShapeMismatch {
            op: "svm_predict",
            lhs: vec![model.feature_dim],
            rhs: vec![features.len()],
        });
    }
    Ok(model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, &b)| dot(w, features) + b as f64)
        .collect())
}

/// Argmax class; ties break toward the lower class id.
pub fn svm_predict(model: &SvmModel, features: &[f32]) -> Result<u32> {
    let scores = decision_values(model, features)?;
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(model.classes[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RawMaskedPair;
    use crate::tokenizer::{encode, Vocab};

    fn toy_set() -> (Vec<Vec<f32>>, Vec<u32>) {
        // 1-D separable toy: +1 at x=1 labeled 9 (E), -1 at x=-1 labeled 14 (D).
        (vec![vec![1.0], vec![-1.0]], vec![9, 14])
    }

    #[test]
    fn featurize_layout() {
        let vocab = Vocab::new();
        let pair = RawMaskedPair {
            input_seq: "NPJ".into(),
            label_seq: "JJK".into(),
            mask_positions: vec![2],
            source_id: "t".into(),
        };
        let ex = encode(&vocab, &pair, 6).unwrap();
        let f = featurize(&ex);
        assert_eq!(f.len(), 6 * SLOTS);
        for pos in 0..6 {
            let ones = f[pos * SLOTS..(pos + 1) * SLOTS]
                .iter()
                .filter(|&&v| v == 1.0)
                .count();
            assert_eq!(ones, 1, "position {pos}");
        }
        // Differing at exactly one position differs in exactly 2 coords.
        let pair2 = RawMaskedPair {
            input_seq: "NPK".into(),
            label_seq: "JJJ".into(),
            mask_positions: vec![],
            source_id: "t".into(),
        };
        let ex2 = encode(&vocab, &pair2, 6).unwrap();
        let f2 = featurize(&ex2);
        let diff = f.iter().zip(&f2).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 2);
    }

    #[test]
    fn separable_toy_classifies_perfectly() {
        let (features, labels) = toy_set();
        let cfg = SvmConfig {
            steps: 2000,
            ..SvmConfig::default()
        };
        let model = svm_train(&features, &labels, &cfg).unwrap();
        assert_eq!(svm_predict(&model, &features[0]).unwrap(), 9);
        assert_eq!(svm_predict(&model, &features[1]).unwrap(), 14);
    }

    #[test]
    fn strong_regularization_shrinks_weights() {
        let (features, labels) = toy_set();
        let small = svm_train(
            &features,
            &labels,
            &SvmConfig {
                lambda: 1e-4,
                steps: 5000,
                ..SvmConfig::default()
            },
        )
        .unwrap();
        let large = svm_train(
            &features,
            &labels,
            &SvmConfig {
                lambda: 1.0,
                steps: 5000,
                ..SvmConfig::default()
            },
        )
        .unwrap();
        let norm = |m: &SvmModel| -> f64 {
            m.weights
                .iter()
                .flat_map(|w| w.iter())
                .map(|&v| v as f64 * v as f64)
                .sum::<f64>()
                .sqrt()
        };
        assert!(
            norm(&large) < norm(&small),
            "λ=1.0 norm {} !< λ=1e-4 norm {}",
            norm(&large),
            norm(&small)
        );
    }

    #[test]
    fn duplicated_dataset_trains_the_same_decision_function() {
        let (features, labels) = toy_set();
        let mut doubled_f = features.clone();
        doubled_f.extend(features.clone());
        let mut doubled_l = labels.clone();
        doubled_l.extend(labels.clone());
        let cfg = SvmConfig {
            steps: 3000,
            ..SvmConfig::default()
        };
        let a = svm_train(&features, &labels, &cfg).unwrap();
        let b = svm_train(&doubled_f, &doubled_l, &cfg).unwrap();
        for x in &features {
            let da = decision_values(&a, x).unwrap();
            let db = decision_values(&b, x).unwrap();
            for (va, vb) in da.iter().zip(&db) {
                assert!((va - vb).abs() < 1e-6, "{va} vs {vb}");
            }
        }
    }

    #[test]
    fn single_class_data_is_rejected() {
        let features = vec![vec![1.0], vec![2.0]];
        let labels = vec![9u32, 9];
        assert!(matches!(
            svm_train(&features, &labels, &SvmConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn degenerate_prediction_is_deterministic() {
        let (features, labels) = toy_set();
        let cfg = SvmConfig {
            steps: 1000,
            ..SvmConfig::default()
        };
        let m1 = svm_train(&features, &labels, &cfg).unwrap();
        let m2 = svm_train(&features, &labels, &cfg).unwrap();
        assert_eq!(m1.weights, m2.weights);
        assert_eq!(m1.biases, m2.biases);
    }

    #[test]
    fn objective_trace_mostly_decreases_on_toy() {
        let (features, labels) = toy_set();
        let cfg = SvmConfig {
            steps: 20_000,
            ..SvmConfig::default()
        };
        let model = svm_train(&features, &labels, &cfg).unwrap();
        for trace in &model.objective_trace {
            let pairs = trace.windows(2).count();
            let non_increasing = trace
                .windows(2)
                .filter(|w| w[1] <= w[0] + 1e-9)
                .count();
            assert!(
                non_increasing as f64 >= 0.9 * pairs as f64,
                "{non_increasing}/{pairs} checkpoints non-increasing"
            );
        }
    }
}
