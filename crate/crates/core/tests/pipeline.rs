#![allow(clippy::field_reassign_with_default)]

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use common::{burst_clip, sine, write, SR};
use voicegraph::graph_features::GraphFeatureVector;
use voicegraph::learn::{
    DecisionTree, ForestConfig, FusionStrategy, Node, RandomForestModel, Split,
    MODEL_FORMAT_VERSION,
};
use voicegraph::pipeline::{
    cmd_extract, cmd_graph_export, cmd_predict, cmd_train, Family, FamilyModel, FeatureTable,
    Manifest, PipelineError, RunConfig, SubjectEntry, ERRORS_FILE,
};
use voicegraph::signal::load_wav;
use voicegraph::visibility::{build_vg_fast, build_vg_naive, graph_series, VgInput};

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn save_manifest(dir: &Path, m: &Manifest) -> PathBuf {
    let p = dir.join("manifest.json");
    std::fs::write(&p, serde_json::to_string(m).unwrap()).unwrap();
    p
}

fn subject(id: &str, label: Option<u8>, split: Split, clips: &[&str]) -> SubjectEntry {
    SubjectEntry {
        subject_id: id.into(),
        label,
        split,
        clips: clips.iter().map(PathBuf::from).collect(),
        egemaps_csv: None,
        text_scores_csv: None,
    }
}

// ---------------------------------------------------------------- graph-export

#[test]
fn graph_export_of_sine_is_a_path() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("sine.wav");
    write(&wav, &sine(10.0, 1.0, 1.0));
    let mut cfg = RunConfig::default();
    // A short window keeps each envelope crest at the sine's exact maximum;
    // the distance keeps one peak per period.
    cfg.peaks.window_ms = 1.0;
    cfg.peaks.min_distance_ms = 60.0;
    let out = cmd_graph_export(&wav, &cfg, &dir.path().join("g.json"), None).unwrap();
    let n = out.graph.n_nodes();
    assert_eq!(n, 10);
    let expected: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    assert_eq!(out.graph.edges(), expected);
}

#[test]
fn graph_export_of_two_peaks_is_one_edge() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("two.wav");
    write(&wav, &burst_clip(&[0.5, 0.7]));
    let g = dir.path().join("g.json");
    let f = dir.path().join("f.csv");
    cmd_graph_export(&wav, &RunConfig::default(), &g, Some(&f)).unwrap();
    assert_eq!(read(&g).trim_end(), r#"{"n_nodes":2,"edges":[[0,1]]}"#);
    let row = FeatureTable::read(&f).unwrap();
    assert_eq!(row.rows[0].0, "two");
    assert_eq!(row.rows[0].1[2], 1.0);
}

#[test]
fn graph_export_of_convex_envelope_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("convex.wav");
    let amps: Vec<f64> = (0..8)
        .map(|k| 0.1 + 0.8 * (k as f64 / 7.0).powi(2))
        .collect();
    write(&wav, &burst_clip(&amps));
    let f = dir.path().join("f.csv");
    let out = cmd_graph_export(
        &wav,
        &RunConfig::default(),
        &dir.path().join("g.json"),
        Some(&f),
    )
    .unwrap();
    assert_eq!(out.graph.n_nodes(), 8);
    assert_eq!(out.graph.n_edges(), 28);
    let table = FeatureTable::read(&f).unwrap();
    let density = GraphFeatureVector::NAMES
        .iter()
        .position(|n| *n == "density")
        .unwrap();
    assert_eq!(table.names[density], "density");
    assert_eq!(table.rows[0].1[density], 1.0);
}

#[test]
fn graph_export_without_peaks_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("flat.wav");
    write(&wav, &vec![0.25; 8000]);
    let err = cmd_graph_export(
        &wav,
        &RunConfig::default(),
        &dir.path().join("g.json"),
        None,
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("peak"), "{err}");
}

#[test]
fn fast_and_naive_agree_on_am_sine_envelope_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("am.wav");
    let x: Vec<f64> = (0..3 * SR as usize)
        .map(|i| {
            let t = i as f64 / SR as f64;
            let env = 0.5 + 0.4 * (std::f64::consts::TAU * 3.3 * t).sin() * (1.7 * t).cos();
            0.9 * env * (std::f64::consts::TAU * 180.0 * t).sin()
        })
        .collect();
    write(&wav, &x);
    let clip = load_wav(&wav).unwrap();
    for input in [VgInput::Peaks, VgInput::Raw] {
        let s = graph_series(&clip, &Default::default(), input).unwrap();
        let s = if input == VgInput::Raw {
            s.select(&(0..4000).collect::<Vec<_>>())
        } else {
            s
        };
        assert_eq!(build_vg_fast(&s).unwrap(), build_vg_naive(&s).unwrap());
    }
}

// ---------------------------------------------------------------- extract

fn three_clip_corpus(dir: &Path, with_short: bool) -> Manifest {
    let mut names = vec!["a", "b", "c"];
    write(&dir.join("a.wav"), &burst_clip(&[0.3, 0.8, 0.5, 0.6]));
    write(&dir.join("b.wav"), &common::am_tone(0.8));
    write(&dir.join("c.wav"), &burst_clip(&[0.9, 0.2, 0.4]));
    if with_short {
        write(&dir.join("short.wav"), &sine(440.0, 0.5, 0.01));
        names.push("short");
    }
    let mut eg = String::from("name");
    for k in 0..88 {
        eg.push_str(&format!(",f{k}"));
    }
    eg.push('\n');
    for (i, n) in names.iter().enumerate() {
        eg.push_str(n);
        for k in 0..88 {
            eg.push_str(&format!(",{}", i * 100 + k));
        }
        eg.push('\n');
    }
    std::fs::write(dir.join("eg.csv"), eg).unwrap();
    let clips: Vec<String> = names.iter().map(|n| format!("{n}.wav")).collect();
    let clips: Vec<&str> = clips.iter().map(String::as_str).collect();
    let mut s = subject("s1", Some(1), Split::Test, &clips);
    s.egemaps_csv = Some("eg.csv".into());
    let path = save_manifest(dir, &Manifest { subjects: vec![s] });
    Manifest::load(&path).unwrap()
}

#[test]
fn extract_writes_one_row_per_clip_and_family() {
    let dir = tempfile::tempdir().unwrap();
    let m = three_clip_corpus(dir.path(), false);
    let out = dir.path().join("feat");
    let summary = cmd_extract(&m, &RunConfig::default(), &out).unwrap();
    assert!(summary.errors.is_empty(), "{:?}", summary.errors);
    for family in Family::ALL {
        let t = FeatureTable::read(&out.join(family.features_file())).unwrap();
        let ids: Vec<&str> = t.rows.iter().map(|r| r.0.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"], "{family}");
    }
    let vg = read(&out.join("features_vg.csv"));
    assert!(vg.starts_with(
        "clip_id,avg_degree,avg_clustering,density,transitivity,diameter,local_eff,global_eff,avg_shortest_path\n"
    ));
    let mfcc = FeatureTable::read(&out.join("features_mfcc.csv")).unwrap();
    assert_eq!(mfcc.names.len(), 26 + 52 + 514);
    assert_eq!(read(&out.join(ERRORS_FILE)), "clip_id,stage,error\n");
}

#[test]
fn extract_records_too_short_clip_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let m = three_clip_corpus(dir.path(), true);
    let out = dir.path().join("feat");
    let summary = cmd_extract(&m, &RunConfig::default(), &out).unwrap();
    let stages: Vec<(&str, &str)> = summary
        .errors
        .iter()
        .map(|e| (e.id.as_str(), e.stage.as_str()))
        .collect();
    assert_eq!(stages, [("short", "vg"), ("short", "mfcc")]);
    let sidecar = read(&out.join(ERRORS_FILE));
    assert_eq!(sidecar.lines().count(), 3);
    assert!(sidecar.lines().skip(1).all(|l| l.starts_with("short,")));
    for family in [Family::Vg, Family::Mfcc] {
        let t = FeatureTable::read(&out.join(family.features_file())).unwrap();
        assert_eq!(t.rows.len(), 3);
    }
    // eGeMAPS rows come from the CSV, so the short clip still has one.
    let eg = FeatureTable::read(&out.join("features_egemaps.csv")).unwrap();
    assert_eq!(eg.rows.len(), 4);
}

#[test]
fn extract_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let m = three_clip_corpus(dir.path(), true);
    let mut cfg = RunConfig::default();
    cfg.threads = Some(1);
    cmd_extract(&m, &cfg, &dir.path().join("one")).unwrap();
    cfg.threads = Some(4);
    cmd_extract(&m, &cfg, &dir.path().join("four")).unwrap();
    cmd_extract(&m, &cfg, &dir.path().join("again")).unwrap();
    for f in [
        "features_vg.csv",
        "features_mfcc.csv",
        "features_egemaps.csv",
        ERRORS_FILE,
        "extract_config.json",
    ] {
        let a = std::fs::read(dir.path().join("one").join(f)).unwrap();
        assert_eq!(
            a,
            std::fs::read(dir.path().join("four").join(f)).unwrap(),
            "{f}"
        );
        assert_eq!(
            a,
            std::fs::read(dir.path().join("again").join(f)).unwrap(),
            "{f}"
        );
    }
}

// ---------------------------------------------------------------- predict

/// A one-tree model: `x[0] <= 0.5` scores `low`, otherwise `high`.
fn stump(family: Family, names: &[&str], low: f64, high: f64) -> FamilyModel {
    let leaf = |p: f64| Node::Leaf {
        proba: [1.0 - p, p],
    };
    FamilyModel {
        family,
        feature_names: names.iter().map(|s| s.to_string()).collect(),
        normalizer: None,
        train_subjects: vec!["trainee".into()],
        forest: RandomForestModel {
            format_version: MODEL_FORMAT_VERSION,
            config: ForestConfig::default(),
            n_features: names.len(),
            trees: vec![DecisionTree {
                nodes: vec![
                    Node::Split {
                        feature: 0,
                        threshold: 0.5,
                        left: 1,
                        right: 2,
                    },
                    leaf(low),
                    leaf(high),
                ],
            }],
        },
    }
}

struct HandCase {
    _dir: tempfile::TempDir,
    manifest: Manifest,
    features: PathBuf,
    models: PathBuf,
    out: PathBuf,
}

/// Subjects `half` (clips scored 0.5, text 0.5), `high` (0.9 everywhere),
/// and `mixed` (vg clips 0.9 and 0.3, other families 0.5, text 0.5).
fn hand_case() -> HandCase {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ids = ["h1", "h2", "g1", "g2", "m1", "m2"];
    for id in ids {
        std::fs::write(d.join(format!("{id}.wav")), b"not decoded by predict").unwrap();
    }
    for (s, p) in [("half", 0.5), ("high", 0.9), ("mixed", 0.5)] {
        std::fs::write(
            d.join(format!("{s}.csv")),
            format!("subject_id,subseq_id,probability\n{s},0,{p}\n"),
        )
        .unwrap();
    }
    let mut subjects = vec![
        subject("half", Some(1), Split::Test, &["h1.wav", "h2.wav"]),
        subject("high", Some(1), Split::Test, &["g1.wav", "g2.wav"]),
        subject("mixed", Some(0), Split::Test, &["m1.wav", "m2.wav"]),
    ];
    for s in &mut subjects {
        s.text_scores_csv = Some(format!("{}.csv", s.subject_id).into());
    }
    let manifest = Manifest::load(&save_manifest(d, &Manifest { subjects })).unwrap();

    // Feature 0 selects the leaf: 0 -> low, 1 -> high.
    let features = d.join("feat");
    let models = d.join("models");
    std::fs::create_dir_all(&models).unwrap();
    let names = ["x0", "x1"];
    let save = |family: Family, x: [[f64; 2]; 6], model: FamilyModel| {
        FeatureTable {
            names: names.iter().map(|s| s.to_string()).collect(),
            rows: ids
                .iter()
                .zip(x)
                .map(|(id, v)| (id.to_string(), v.to_vec()))
                .collect(),
        }
        .write(&features.join(family.features_file()))
        .unwrap();
        std::fs::write(
            models.join(family.model_file()),
            serde_json::to_string(&model).unwrap(),
        )
        .unwrap();
    };
    let flat = [
        [0.0, 0.0],
        [0.0, 0.0],
        [1.0, 0.0],
        [1.0, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
    ];
    for family in [Family::Mfcc, Family::Egemaps] {
        save(family, flat, stump(family, &names, 0.5, 0.9));
    }
    // vg: x0 > 0.5 -> 0.9; otherwise x1 <= 0.5 -> 0.5, else 0.3.
    let mut vg = stump(Family::Vg, &names, 0.0, 0.9);
    vg.forest.trees[0].nodes = vec![
        Node::Split {
            feature: 0,
            threshold: 0.5,
            left: 1,
            right: 2,
        },
        Node::Split {
            feature: 1,
            threshold: 0.5,
            left: 3,
            right: 4,
        },
        Node::Leaf { proba: [0.1, 0.9] },
        Node::Leaf { proba: [0.5, 0.5] },
        Node::Leaf { proba: [0.7, 0.3] },
    ];
    save(
        Family::Vg,
        [
            [0.0, 0.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
        ],
        vg,
    );

    HandCase {
        manifest,
        features,
        models,
        out: d.join("out"),
        _dir: dir,
    }
}

#[test]
fn predict_reproduces_hand_examples() {
    let case = hand_case();
    let summary = cmd_predict(
        &case.manifest,
        &case.features,
        &case.models,
        &RunConfig::default(),
        Some(Split::Test),
        &case.out,
    )
    .unwrap();
    let by_id = |id: &str| {
        summary
            .predictions
            .iter()
            .find(|p| p.subject_id == id)
            .unwrap()
    };

    // All scores 0.5: final exactly 0.5, which classifies positive.
    assert_eq!(by_id("half").fused.final_p, 0.5);
    assert_eq!(by_id("half").fused.label, 1);
    // Everything 0.9.
    assert!((by_id("high").fused.final_p - 0.9).abs() < 1e-12);

    let report = read(&case.out.join("report.csv"));
    assert!(report.starts_with("subject_id,voice_avg,text_p,final_p,label\n"));
    assert!(report.contains("\nhalf,0.5,0.5,0.5,1\n"), "{report}");
    assert!(report.contains("\nhigh,0.9,0.9,0.9,1\n"), "{report}");

    // Clip scores {0.9, 0.3} with c = 2 aggregate to 0.75.
    let families = read(&case.out.join("family_scores.csv"));
    assert!(
        families.contains("\nmixed,vg,2,0.9,0.6,2,0.75\n"),
        "{families}"
    );
    let mixed = by_id("mixed").fused;
    assert!((mixed.voice_avg - (0.75 + 0.5 + 0.5) / 3.0).abs() < 1e-12);

    let metrics: serde_json::Value =
        serde_json::from_str(&read(&case.out.join("metrics.json"))).unwrap();
    assert_eq!(metrics["c"], 2.0);
    assert_eq!(metrics["fusion"], "average_merge");
    assert!(metrics["fused"]["f1"].is_number());
    assert_eq!(
        read(&case.out.join("predict_errors.csv")),
        "subject_id,stage,error\n"
    );
}

#[test]
fn predict_rejects_feature_name_mismatch() {
    let case = hand_case();
    let path = case.features.join(Family::Mfcc.features_file());
    let mut t = FeatureTable::read(&path).unwrap();
    t.names[1] = "renamed".into();
    t.write(&path).unwrap();
    let err = cmd_predict(
        &case.manifest,
        &case.features,
        &case.models,
        &RunConfig::default(),
        None,
        &case.out,
    )
    .unwrap_err();
    assert!(
        matches!(
            err,
            PipelineError::FamilyMismatch {
                family: Family::Mfcc,
                ..
            }
        ),
        "{err}"
    );
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn predict_without_models_is_model_missing() {
    let case = hand_case();
    let empty = case.out.join("no-models");
    std::fs::create_dir_all(&empty).unwrap();
    let err = cmd_predict(
        &case.manifest,
        &case.features,
        &empty,
        &RunConfig::default(),
        None,
        &case.out,
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::ModelMissing(_)));
}

#[test]
fn predict_missing_text_goes_to_sidecar() {
    let mut case = hand_case();
    case.manifest.subjects[2].text_scores_csv = None;
    let summary = cmd_predict(
        &case.manifest,
        &case.features,
        &case.models,
        &RunConfig::default(),
        None,
        &case.out,
    )
    .unwrap();
    assert_eq!(summary.predictions.len(), 2);
    assert_eq!(summary.errors[0].id, "mixed");
    // Its voice families are still reported.
    assert!(read(&case.out.join("family_scores.csv")).contains("\nmixed,vg,"));
}

#[test]
fn forest_fusion_needs_a_fusion_model() {
    let case = hand_case();
    let mut cfg = RunConfig::default();
    cfg.fusion = FusionStrategy::Forest;
    let err = cmd_predict(
        &case.manifest,
        &case.features,
        &case.models,
        &cfg,
        None,
        &case.out,
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

// ---------------------------------------------------------------- train

fn small_corpus(dir: &Path) -> Manifest {
    let cfg = voicegraph::pipeline::SynthConfig {
        per_class: 8,
        split: [4, 2, 2],
        clips_per_subject: 2,
        duration_s: 1.0,
        ..Default::default()
    };
    Manifest::load(&voicegraph::pipeline::cmd_synth(&cfg, dir).unwrap()).unwrap()
}

fn small_forest() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.forest.n_trees = 25;
    cfg
}

#[test]
fn train_skips_family_without_features() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = small_corpus(&dir.path().join("corpus"));
    m.subjects.iter_mut().for_each(|s| s.egemaps_csv = None);
    let feat = dir.path().join("feat");
    cmd_extract(&m, &small_forest(), &feat).unwrap();
    assert!(!feat.join("features_egemaps.csv").exists());
    let report = cmd_train(&m, &feat, &small_forest(), &dir.path().join("models")).unwrap();
    assert!(!report.families[&Family::Egemaps].trained);
    assert!(report.families[&Family::Vg].trained);
    assert!(report.families[&Family::Mfcc].trained);
    assert!(report.warnings.iter().any(|w| w.contains("egemaps")));
    assert!(!dir.path().join("models/model_egemaps.json").exists());
}

#[test]
fn train_skips_single_class_family() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_corpus(&dir.path().join("corpus"));
    let feat = dir.path().join("feat");
    cmd_extract(&m, &small_forest(), &feat).unwrap();
    // Keep only label-0 training clips in the vg table.
    let owners = m.clip_owners();
    let path = feat.join("features_vg.csv");
    let mut t = FeatureTable::read(&path).unwrap();
    t.rows.retain(|(id, _)| {
        let s = &m.subjects[owners[id]];
        s.split != Split::Train || s.label == Some(0)
    });
    t.write(&path).unwrap();
    let report = cmd_train(&m, &feat, &small_forest(), &dir.path().join("models")).unwrap();
    let vg = &report.families[&Family::Vg];
    assert!(!vg.trained);
    assert!(vg.skip_reason.as_deref().unwrap().contains("class"));
    assert!(report.families[&Family::Mfcc].trained);
}

#[test]
fn train_is_reproducible_and_models_never_score_their_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_corpus(&dir.path().join("corpus"));
    let feat = dir.path().join("feat");
    let mut cfg = small_forest();
    cfg.normalize = true;
    cfg.fusion = FusionStrategy::Forest;
    cmd_extract(&m, &cfg, &feat).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    cmd_train(&m, &feat, &cfg, &a).unwrap();
    cfg.threads = Some(1);
    cmd_train(&m, &feat, &cfg, &b).unwrap();
    for f in [
        "model_vg.json",
        "model_mfcc.json",
        "model_egemaps.json",
        "model_fusion.json",
        "training_report.json",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let vg = FamilyModel::load(&a.join("model_vg.json")).unwrap();
    assert!(vg.normalizer.is_some());
    assert_eq!(vg.train_subjects.len(), 8);

    let out = dir.path().join("out");
    for split in [Some(Split::Train), Some(Split::Val), None] {
        let err = cmd_predict(&m, &feat, &a, &cfg, split, &out).unwrap_err();
        assert!(matches!(err, PipelineError::Leakage(_)), "{split:?}: {err}");
    }
    cmd_predict(&m, &feat, &a, &cfg, Some(Split::Test), &out).unwrap();
}

#[test]
fn synthetic_corpus_validation_f1_per_family() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manifest::load(&common::default_corpus(&dir.path().join("corpus"))).unwrap();
    let feat = dir.path().join("feat");
    let cfg = RunConfig::default();
    cmd_extract(&m, &cfg, &feat).unwrap();
    let report = cmd_train(&m, &feat, &cfg, &dir.path().join("models")).unwrap();
    for (family, r) in &report.families {
        let f1 = r.val_metrics.unwrap().f1;
        assert!(f1 >= 0.9, "{family}: validation f1 {f1}");
    }
}

// ---------------------------------------------------------------- CLI

fn voicegraph(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_voicegraph"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    assert_eq!(
        voicegraph(&["extract", "--no-such-flag"]).status.code(),
        Some(1)
    );
    assert_eq!(voicegraph(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let wav = format!("{d}/two.wav");
    write(Path::new(&wav), &burst_clip(&[0.5, 0.7]));
    let json = format!("{d}/g.json");
    let ok = voicegraph(&["graph-export", "--wav", &wav, "--out", &json]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert_eq!(
        read(Path::new(&json)).trim_end(),
        r#"{"n_nodes":2,"edges":[[0,1]]}"#
    );

    let bad_c = voicegraph(&["graph-export", "--wav", &wav, "--out", &json, "--c", "-1"]);
    assert_eq!(bad_c.status.code(), Some(1));

    let missing = voicegraph(&[
        "extract",
        "--manifest",
        &format!("{d}/none.json"),
        "--out",
        d,
    ]);
    assert_eq!(missing.status.code(), Some(2));

    std::fs::write(
        format!("{d}/m.json"),
        r#"{"subjects":[{"subject_id":"x","split":"test","clips":["gone.wav"]}]}"#,
    )
    .unwrap();
    let invalid = voicegraph(&["extract", "--manifest", &format!("{d}/m.json"), "--out", d]);
    assert_eq!(invalid.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("gone.wav"));
}

#[test]
fn cli_end_to_end_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let corpus = format!("{d}/corpus");
    let s = voicegraph(&[
        "synth",
        "--out",
        &corpus,
        "--per-class",
        "6",
        "--split",
        "3,1,2",
        "--clips-per-subject",
        "2",
        "--duration-s",
        "1",
    ]);
    assert_eq!(
        s.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&s.stderr)
    );
    let manifest = format!("{corpus}/manifest.json");
    let (feat, models, out) = (
        format!("{d}/feat"),
        format!("{d}/models"),
        format!("{d}/out"),
    );
    for args in [
        vec![
            "extract",
            "--manifest",
            &manifest,
            "--out",
            &feat,
            "--threads",
            "2",
        ],
        vec![
            "train",
            "--manifest",
            &manifest,
            "--features",
            &feat,
            "--models",
            &models,
            "--n-trees",
            "20",
        ],
        vec![
            "predict",
            "--manifest",
            &manifest,
            "--features",
            &feat,
            "--models",
            &models,
            "--out",
            &out,
        ],
    ] {
        let o = voicegraph(&args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let r = voicegraph(&["report", "--metrics", &format!("{out}/metrics.json")]);
    assert_eq!(r.status.code(), Some(0));
    let table = String::from_utf8(r.stdout).unwrap();
    assert!(table.starts_with("split=test subjects=4"), "{table}");
    assert!(table.contains("\nfused "), "{table}");
}
