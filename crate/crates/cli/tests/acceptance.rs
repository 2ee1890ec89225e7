//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `-- --nocapture` to see them).
//!
//! The heavyweight training criteria use the bundled synthetic fixture; when
//! a real GPCRdb-derived export is present at `data/gpcrdb_classA.csv`
//! (see `scripts/fetch_fixture.sh`), the pipeline-fidelity criterion checks
//! it too.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gpcrlm::autograd::GradStore;
use gpcrlm::checkpoint::{container_to_bytes, read_checkpoint, write_checkpoint, Container};
use gpcrlm::corpus::synthetic::{full_fixture, small_motif_corpus};
use gpcrlm::corpus::{
    build_motif_dataset, build_span_dataset, filter_corpus, parse_corpus, split_dataset,
    CorpusFormat, MotifKind, RawMaskedPair,
};
use gpcrlm::model::{grad_check_model, masked_cross_entropy, Model, ModelConfig};
use gpcrlm::svm;
use gpcrlm::tensor::Tensor;
use gpcrlm::tokenizer::{encode, encode_query, Vocab};
use gpcrlm::train::{evaluate, train, PlateauScheduler, TrainConfig};
use gpcrlm::tsne::{tsne, TsneConfig};

const FIXTURE_SEED: u64 = 20240817;

fn workspace_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn fixture_pairs(kind: MotifKind) -> Vec<RawMaskedPair> {
    let kept = filter_corpus(&full_fixture(FIXTURE_SEED), 370);
    build_motif_dataset(&kept, kind).unwrap()
}

/// 1. Gradient integrity: finite differences on the tiny configuration in
/// both precisions, under 60 s.
#[test]
fn accept_01_gradient_integrity() {
    let t0 = Instant::now();
    let config = ModelConfig::tiny();
    let f32_report = grad_check_model::<f32>(&config, 12, 1e-3).unwrap();
    assert!(
        f32_report.max_rel_err < 1e-2,
        "f32 max rel err {:.3e} >= 1e-2",
        f32_report.max_rel_err
    );
    let f64_report = grad_check_model::<f64>(&config, 12, 1e-5).unwrap();
    assert!(
        f64_report.max_rel_err < 1e-4,
        "f64 max rel err {:.3e} >= 1e-4",
        f64_report.max_rel_err
    );
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "gradcheck took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 gradient integrity: PASS (f32 {:.3e} < 1e-2, f64 {:.3e} < 1e-4, {:.1?})",
        f32_report.max_rel_err, f64_report.max_rel_err, elapsed
    );
}

/// 2. Overfit proxy: 16-sequence synthetic motif corpus reaches ≥99% train
/// accuracy within 200 epochs on the desk configuration, under 10 min.
#[test]
fn accept_02_overfit_proxy() {
    let t0 = Instant::now();
    let records = small_motif_corpus(MotifKind::NPxxY, 16, 42);
    let pairs = build_motif_dataset(&records, MotifKind::NPxxY).unwrap();
    assert_eq!(pairs.len(), 16);
    let model_cfg = ModelConfig::desk();
    // The reference work fine-tunes a pretrained encoder; training from
    // scratch needs a livelier learning rate than the 1e-4 default. All
    // other settings keep their defaults.
    let train_cfg = TrainConfig {
        epochs: 200,
        n_runs: 1,
        lr0: 1e-3,
        split_ratio: 0.9,
        seed: 5,
        ..TrainConfig::default()
    };
    let (model, metrics) = train(&model_cfg, &train_cfg, &pairs).unwrap();
    let first_hit = metrics
        .epochs
        .iter()
        .find(|e| e.train_acc >= 0.99)
        .map(|e| e.epoch);
    let elapsed = t0.elapsed();
    assert!(
        first_hit.is_some(),
        "train accuracy never reached 0.99 within 200 epochs (best {:.4})",
        metrics.epochs.iter().map(|e| e.train_acc).fold(0.0, f64::max)
    );
    assert!(elapsed.as_secs() < 600, "overfit run took {elapsed:?}");
    // Eval-mode accuracy on the train split confirms the memorization.
    let (train_split, _) = split_dataset(&pairs, train_cfg.split_ratio, train_cfg.seed).unwrap();
    let (_, train_eval_acc) = evaluate(&model, &train_split).unwrap();
    assert!(
        train_eval_acc >= 0.99,
        "eval-mode train accuracy {train_eval_acc:.4} < 0.99"
    );
    println!(
        "ACCEPTANCE 2 overfit proxy: PASS (≥99% at epoch {}, eval train acc {:.4}, {:.1?})",
        first_hit.unwrap(),
        train_eval_acc,
        elapsed
    );
}

fn check_pipeline_counts(records: &[gpcrlm::corpus::ProteinRecord], label: &str) {
    let kept = filter_corpus(records, 370);
    assert_eq!(kept.len(), 254, "{label}: filtered count");
    for (kind, expected) in [
        (MotifKind::NPxxY, 238usize),
        (MotifKind::CWxP, 168),
        (MotifKind::EDRY, 212),
    ] {
        let n = build_motif_dataset(&kept, kind).unwrap().len();
        assert_eq!(n, expected, "{label}: {} pairs", kind.name());
    }
    for count in [5usize, 10, 15, 50] {
        assert_eq!(
            build_span_dataset(&kept, 100, count).unwrap().len(),
            254,
            "{label}: span-{count} pairs"
        );
    }
}

/// 3. Data-pipeline fidelity: filtering yields 254 records and the motif
/// datasets 238/168/212 pairs exactly, on the bundled fixture and, when
/// fetched, on the real export.
#[test]
fn accept_03_pipeline_fidelity() {
    let bundled = workspace_path("data/fixture_synthetic.csv");
    let records = parse_corpus(&bundled, CorpusFormat::Csv).unwrap();
    assert_eq!(records.len(), 293);
    check_pipeline_counts(&records, "bundled fixture");
    let real = workspace_path("data/gpcrdb_classA.csv");
    let real_checked = if real.exists() {
        let records = parse_corpus(&real, CorpusFormat::Csv).unwrap();
        check_pipeline_counts(&records, "real export");
        "bundled fixture + real export"
    } else {
        "bundled fixture (real export not fetched; see scripts/fetch_fixture.sh)"
    };
    println!(
        "ACCEPTANCE 3 pipeline fidelity: PASS (293→254 records; 238/168/212 motif pairs; 254 span pairs; {real_checked})"
    );
}

/// 4. E/DRY desk-scale floor: from-scratch training beats the
/// majority-class frequency of the training labels on the test split.
#[test]
fn accept_04_edry_desk_floor() {
    let t0 = Instant::now();
    let pairs = fixture_pairs(MotifKind::EDRY);
    assert_eq!(pairs.len(), 212);
    let model_cfg = ModelConfig::desk();
    // Four epochs are enough at desk scale; runs and split follow the
    // reference protocol (0.75:0.25, three seed-shifted runs).
    let train_cfg = TrainConfig {
        epochs: 4,
        n_runs: 3,
        lr0: 1e-3,
        seed: 3,
        ..TrainConfig::default()
    };
    let (train_split, test_split) =
        split_dataset(&pairs, train_cfg.split_ratio, train_cfg.seed).unwrap();
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    let mut total = 0usize;
    for pair in &train_split {
        for &pos in &pair.mask_positions {
            let truth = pair.label_seq.chars().nth(pos).unwrap();
            *counts.entry(truth).or_insert(0) += 1;
            total += 1;
        }
    }
    let (majority_residue, majority_count) =
        counts.iter().max_by_key(|(_, &c)| c).map(|(&r, &c)| (r, c)).unwrap();
    let majority_freq = majority_count as f64 / total as f64;

    let (_, metrics) = train(&model_cfg, &train_cfg, &pairs).unwrap();
    let mean_test_acc = metrics.summary.test_acc.mean;
    assert!(
        mean_test_acc >= majority_freq,
        "mean test accuracy {mean_test_acc:.4} below majority baseline {majority_freq:.4}"
    );
    println!(
        "ACCEPTANCE 4 E/DRY desk floor: PASS (test acc {:.4} ± {:.4} over {} runs ≥ majority '{}' {:.4}; gap to the reference 100%: {:.2} pp; test split {} pairs; {:.0?})",
        mean_test_acc,
        metrics.summary.test_acc.std,
        train_cfg.n_runs,
        majority_residue,
        majority_freq,
        (1.0 - mean_test_acc) * 100.0,
        test_split.len(),
        t0.elapsed()
    );
}

/// 5. Attention normalization over ≥100 random inputs: rows sum to 1 ± 1e-5
/// over unpadded columns and padded columns are exactly zero.
#[test]
fn accept_05_attention_normalization() {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let vocab = Vocab::new();
    let residues: Vec<char> = "ACDEFGHIKLMNPQRSTVWY".chars().collect();
    let mut checked_rows = 0usize;
    for case in 0..100 {
        let config = ModelConfig {
            n_layers: rng.random_range(1..=2),
            n_heads: [1, 2, 4][rng.random_range(0..3)],
            d_model: 16,
            d_ff: 32,
            max_len: 16,
            vocab_size: 30,
            head_h1: 8,
            head_h2: 8,
            dropout: 0.25,
        };
        let model = Model::<f32>::init(&config, case as u64).unwrap();
        let seq_len = rng.random_range(1..=12usize);
        let seq: String = (0..seq_len)
            .map(|_| residues[rng.random_range(0..residues.len())])
            .collect();
        let max_len = rng.random_range(seq_len + 1..=16);
        let example = encode_query(&vocab, "r", &seq, max_len).unwrap();
        let out = model.infer(&example, true).unwrap();
        for layer in &out.attention.unwrap().layers {
            for head in layer {
                for i in 0..head.rows() {
                    let mut sum = 0.0f64;
                    for j in 0..head.cols() {
                        let w = head.at(i, j);
                        if example.attention_mask[j] == 0 {
                            assert_eq!(w, 0.0, "case {case}: padded column nonzero");
                        } else {
                            sum += w as f64;
                        }
                    }
                    assert!(
                        (sum - 1.0).abs() < 1e-5,
                        "case {case} row {i}: sum {sum}"
                    );
                    checked_rows += 1;
                }
            }
        }
    }
    println!(
        "ACCEPTANCE 5 attention normalization: PASS (100 random inputs, {checked_rows} rows row-stochastic, padding exactly zero)"
    );
}

/// 6. Uniform-logit loss equals ln 30.
#[test]
fn accept_06_uniform_logit_loss() {
    let logits = Tensor::<f32>::zeros(vec![5, 30]);
    let labels = vec![3, -100, 17, 29, 0];
    let (loss, n) = masked_cross_entropy(&logits, &labels).unwrap();
    let expected = 30.0f64.ln();
    assert_eq!(n, 4);
    assert!(
        (loss as f64 - expected).abs() < 1e-4,
        "loss {loss} vs ln 30 {expected}"
    );
    println!(
        "ACCEPTANCE 6 uniform-logit loss: PASS (loss {:.6} = ln 30 ± 1e-4)",
        loss
    );
}

/// 7. Checkpoint round-trip on random desk-scale parameters is
/// byte-identical.
#[test]
fn accept_07_checkpoint_roundtrip() {
    let model = Model::<f32>::init(&ModelConfig::desk(), 2024).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    write_checkpoint(&model, &p1).unwrap();
    let reread = read_checkpoint(&p1).unwrap();
    write_checkpoint(&reread, &p2).unwrap();
    let b1 = std::fs::read(&p1).unwrap();
    let b2 = std::fs::read(&p2).unwrap();
    assert_eq!(b1, b2, "write→read→write changed bytes");
    // Same property at the container level.
    let container = Container {
        meta: vec![("kind".into(), "test".into())],
        tensors: model
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect(),
    };
    let bytes = container_to_bytes(&container).unwrap();
    let back = gpcrlm::checkpoint::container_from_bytes(&bytes).unwrap();
    assert_eq!(container_to_bytes(&back).unwrap(), bytes);
    println!(
        "ACCEPTANCE 7 checkpoint round-trip: PASS ({} tensors, {} bytes, byte-identical)",
        container.tensors.len(),
        b1.len()
    );
}

/// 8. t-SNE proxy: three synthetic Gaussian clusters (n=60, d=32) halve the
/// KL divergence and embed with ≥0.9 nearest-centroid purity, under 60 s.
#[test]
fn accept_08_tsne_clusters() {
    use rand::Rng;
    use rand::SeedableRng;
    let t0 = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for cluster in 0..3usize {
        for _ in 0..20 {
            let row: Vec<f64> = (0..32)
                .map(|k| {
                    let center = if k % 3 == cluster { 10.0 } else { 0.0 };
                    center + rng.random::<f64>() - 0.5
                })
                .collect();
            points.push(row);
            labels.push(cluster);
        }
    }
    let result = tsne(&points, &TsneConfig::default()).unwrap();
    let initial = result.kl_trace[0];
    let final_kl = *result.kl_trace.last().unwrap();
    assert!(
        final_kl < 0.5 * initial,
        "KL {initial:.4} -> {final_kl:.4}: not halved"
    );
    let mut centroids = [[0.0f64; 2]; 3];
    for (pt, &c) in result.coords.iter().zip(&labels) {
        centroids[c][0] += pt[0] / 20.0;
        centroids[c][1] += pt[1] / 20.0;
    }
    let correct = result
        .coords
        .iter()
        .zip(&labels)
        .filter(|(pt, &c)| {
            let nearest = (0..3)
                .min_by(|&a, &b| {
                    let da = (pt[0] - centroids[a][0]).powi(2)
                        + (pt[1] - centroids[a][1]).powi(2);
                    let db = (pt[0] - centroids[b][0]).powi(2)
                        + (pt[1] - centroids[b][1]).powi(2);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            nearest == c
        })
        .count();
    let purity = correct as f64 / labels.len() as f64;
    let elapsed = t0.elapsed();
    assert!(purity >= 0.9, "purity {purity:.3} < 0.9");
    assert!(elapsed.as_secs() < 60, "t-SNE took {elapsed:?}");
    println!(
        "ACCEPTANCE 8 t-SNE clusters: PASS (KL {initial:.3} -> {final_kl:.3}, purity {purity:.3}, {elapsed:.1?})"
    );
}

/// 9. SVM baseline: perfect on the separable toy, at or above the majority
/// baseline on the E/DRY fixture.
#[test]
fn accept_09_svm_baseline() {
    // Separable toy.
    let toy_features = vec![vec![1.0f32], vec![-1.0]];
    let toy_labels = vec![9u32, 14];
    let toy = svm::svm_train(
        &toy_features,
        &toy_labels,
        &svm::SvmConfig {
            steps: 2000,
            ..svm::SvmConfig::default()
        },
    )
    .unwrap();
    for (f, &l) in toy_features.iter().zip(&toy_labels) {
        assert_eq!(svm::svm_predict(&toy, f).unwrap(), l, "toy misclassified");
    }

    // E/DRY fixture.
    let pairs = fixture_pairs(MotifKind::EDRY);
    let (train_pairs, test_pairs) = split_dataset(&pairs, 0.75, 0).unwrap();
    let vocab = Vocab::new();
    let instances = |pairs: &[RawMaskedPair]| {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for pair in pairs {
            let ex = encode(&vocab, pair, 372).unwrap();
            let f = svm::featurize(&ex);
            for &pos in &ex.mask_positions {
                features.push(f.clone());
                labels.push(ex.label_ids[pos] as u32);
            }
        }
        (features, labels)
    };
    let (train_f, train_l) = instances(&train_pairs);
    let (test_f, test_l) = instances(&test_pairs);
    let model = svm::svm_train(&train_f, &train_l, &svm::SvmConfig::default()).unwrap();
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in &train_l {
        *counts.entry(l).or_insert(0) += 1;
    }
    let majority = *counts.iter().max_by_key(|(_, &c)| c).unwrap().0;
    let majority_acc =
        test_l.iter().filter(|&&l| l == majority).count() as f64 / test_l.len() as f64;
    let correct = test_f
        .iter()
        .zip(&test_l)
        .filter(|(f, &l)| svm::svm_predict(&model, f).unwrap() == l)
        .count();
    let acc = correct as f64 / test_l.len() as f64;
    assert!(
        acc >= majority_acc,
        "svm test accuracy {acc:.4} below majority {majority_acc:.4}"
    );
    println!(
        "ACCEPTANCE 9 SVM baseline: PASS (toy 100%; E/DRY test acc {:.4} ≥ majority {:.4}; reference-reported SVM E/DRY was 90.57%, context only)",
        acc, majority_acc
    );
}

/// 10. Determinism: two `train` invocations with identical seed, config,
/// and data produce bit-identical metric CSVs — both through the library
/// and through the command-line binary.
#[test]
fn accept_10_train_determinism() {
    let records = small_motif_corpus(MotifKind::EDRY, 12, 8);
    let pairs = build_motif_dataset(&records, MotifKind::EDRY).unwrap();
    let mut model_cfg = ModelConfig::tiny();
    model_cfg.max_len = 64;
    let train_cfg = TrainConfig {
        epochs: 3,
        n_runs: 2,
        batch_size: 4,
        lr0: 1e-3,
        seed: 21,
        ..TrainConfig::default()
    };
    let (_, m1) = train(&model_cfg, &train_cfg, &pairs).unwrap();
    let (_, m2) = train(&model_cfg, &train_cfg, &pairs).unwrap();
    assert_eq!(m1.epochs_csv(), m2.epochs_csv(), "library metrics differ");
    assert_eq!(m1.summary_text(), m2.summary_text());

    // Through the binary.
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    std::fs::create_dir_all(&data_dir).unwrap();
    let rows: Vec<(String, RawMaskedPair)> =
        pairs.iter().map(|p| ("syn".to_string(), p.clone())).collect();
    std::fs::write(data_dir.join("pairs.csv"), gpcrlm::corpus::pairs_to_csv(&rows)).unwrap();
    let model_cfg_path = dir.path().join("model.cfg");
    std::fs::write(
        &model_cfg_path,
        "n_layers = 2\nn_heads = 2\nd_model = 16\nd_ff = 64\nmax_len = 64\nhead_h1 = 32\nhead_h2 = 16\n",
    )
    .unwrap();
    let train_cfg_path = dir.path().join("train.cfg");
    std::fs::write(
        &train_cfg_path,
        "epochs = 3\nbatch_size = 4\nlr0 = 0.001\nn_runs = 2\n",
    )
    .unwrap();
    let run_once = |out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_gpcrlm"))
            .args([
                "train",
                "--data",
                data_dir.to_str().unwrap(),
                "--model-config",
                model_cfg_path.to_str().unwrap(),
                "--train-config",
                train_cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "21",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.with_extension("metrics.csv")).unwrap()
    };
    let csv_a = run_once(&dir.path().join("a.ckpt"));
    let csv_b = run_once(&dir.path().join("b.ckpt"));
    assert_eq!(csv_a, csv_b, "CLI metric CSVs differ between invocations");
    println!(
        "ACCEPTANCE 10 train determinism: PASS (library and CLI metric CSVs bit-identical, {} bytes)",
        csv_a.len()
    );
}

/// 11. Scheduler contract: a stagnating loss series triggers exactly ×0.2
/// decays at the configured patience boundaries.
#[test]
fn accept_11_scheduler_contract() {
    for patience in [2usize, 3] {
        let mut sched = PlateauScheduler::new(1e-3, 0.2, patience, 1e-4);
        let mut lrs = Vec::new();
        for _ in 0..(3 * patience + 1) {
            lrs.push(sched.step(1.0));
        }
        for (i, &lr) in lrs.iter().enumerate() {
            // Step 0 initializes `best`; decays land every `patience` steps
            // after that.
            let decays = i / patience;
            let expected = 1e-3 * 0.2f64.powi(decays as i32);
            assert!(
                (lr - expected).abs() < 1e-15,
                "patience {patience}, step {i}: lr {lr:.3e} != {expected:.3e}"
            );
        }
        // An improving loss resets the stagnation counter.
        let mut sched = PlateauScheduler::new(1e-3, 0.2, patience, 1e-4);
        sched.step(1.0);
        for _ in 0..patience - 1 {
            sched.step(1.0);
        }
        assert_eq!(sched.step(0.5), 1e-3, "improvement must reset stagnation");
    }
    println!(
        "ACCEPTANCE 11 scheduler contract: PASS (exact ×0.2 decays at patience boundaries, improvement resets)"
    );
}
