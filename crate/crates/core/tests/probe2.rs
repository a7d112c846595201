use adscreen::featurize::{Featurizer, FeaturizerConfig};
use adscreen::learners::{fit, LearnerParams, LearnerSpec};
use adscreen::pipeline::*;
use adscreen::types::Label;

#[test]
fn probe_gbdt_depth() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.seed = 1;
    cfg.paths.out_dir = dir.path().to_path_buf();
    cfg.synth.n_ads = 2000;
    stage_synth(&cfg).unwrap();
    stage_extract(&cfg).unwrap();
    stage_clean(&cfg).unwrap();
    // replicate train stage inputs
    let records: Vec<adscreen::extract::AdRecord> = {
        let text = std::fs::read_to_string(cfg.artifact("cleaned.jsonl")).unwrap();
        let labels = read_labels_csv(&cfg.labels_path()).unwrap();
        text.lines().map(|l| {
            let mut r: adscreen::extract::AdRecord = serde_json::from_str(l).unwrap();
            r.label = labels.get(&r.id).copied();
            r
        }).collect()
    };
    let y: Vec<Label> = records.iter().map(|r| r.label.unwrap()).collect();
    let (x, _f) = Featurizer::fit_transform(&records, FeaturizerConfig::default()).unwrap();
    eprintln!("n {} d {}", x.n_rows(), x.n_cols());

    for (name, tweak) in [
        ("gbdt default", None),
        ("gbdt patience200+delta0", Some((200usize, 0.0f64, 31usize, 0.05f64))),
        ("gbdt lr0.1 128 leaves", Some((200, 0.0, 128, 0.1))),
    ] {
        let mut spec = LearnerSpec::preset("gbdt").unwrap();
        if let Some((pat, delta, leaves, lr)) = tweak {
            if let LearnerParams::Gbdt(p) = &mut spec.params {
                p.early_stop = Some(adscreen::learners::EarlyStop { holdout_fraction: 0.1, patience: pat, min_delta: delta });
                p.max_leaves = leaves;
                p.learning_rate = lr;
            }
        }
        let t = std::time::Instant::now();
        let m = fit(&spec, &x, &y).unwrap();
        let g = m.gbdt().unwrap();
        let probs = m.predict_proba(&x).unwrap();
        let acc = probs.iter().zip(&y).filter(|(&p, &l)| Label::from_p_fake(p) == l).count() as f64 / y.len() as f64;
        eprintln!("{name}: trees {} (trained {}), in-sample acc {:.4}, last train loss {:.5}, time {:?}",
            g.n_trees(), g.rounds_trained, acc, g.train_loss_curve.last().unwrap(), t.elapsed());
    }
}
