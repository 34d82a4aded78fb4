//! End-to-end tests of the four subcommands against the spawned binary.

mod common;

use std::fs;

use gotalign_core::io::{read_embeddings, EmbeddingFormat};
use gotalign_core::mask::{compute_mask, MaskGenerator};
use gotalign_core::ot::{sinkhorn, transport_cost, MarginalDistribution, SinkhornConfig};
use gotalign_core::cross_cost_matrix;

use common::{assert_success, exit_code, run_in, stdout_string};

fn parse_summary(text: &str) -> serde_json::Value {
    serde_json::from_str(text).expect("summary parses as JSON")
}

#[test]
fn align_lambda_one_matches_wasserstein_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "synth", "--n-patches", "10", "--n-labels", "3", "--dim", "6", "--noise-frac",
            "0.2", "--seed", "21",
        ],
    );
    assert_success(&out);
    let out = run_in(
        dir.path(),
        &[
            "align",
            "--source-emb",
            "patches.emb",
            "--target-emb",
            "labels.emb",
            "--lambda",
            "1.0",
            "--max-iterations",
            "100000",
        ],
    );
    assert_success(&out);
    let summary = parse_summary(&fs::read_to_string(dir.path().join("summary.json")).unwrap());
    let objective = summary["objective"].as_f64().unwrap();

    let patches = read_embeddings(&dir.path().join("patches.emb"), EmbeddingFormat::Binary)
        .unwrap();
    let labels = read_embeddings(&dir.path().join("labels.emb"), EmbeddingFormat::Binary)
        .unwrap();
    let cross = cross_cost_matrix(&patches, &labels).unwrap();
    let u = MarginalDistribution::uniform(patches.len());
    let v = MarginalDistribution::uniform(labels.len());
    let cfg = SinkhornConfig {
        entropy_weight: 0.1,
        max_iterations: 100_000,
        tolerance: 1e-9,
    };
    let plan = sinkhorn(&cross, &u, &v, &cfg).unwrap();
    let expected = transport_cost(&plan, &cross).unwrap();
    assert!(
        (objective - expected).abs() <= 1e-9,
        "summary {objective} vs direct {expected}"
    );
    assert_eq!(summary["lambda"].as_f64().unwrap(), 1.0);
    assert!(summary["iterations_used"].as_u64().unwrap() > 0);
}

#[test]
fn align_identical_single_vectors_give_zero_objective() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("one.csv"), "id,dim0,dim1\nonly,0.6,0.8\n").unwrap();
    fs::write(dir.path().join("two.csv"), "id,dim0,dim1\nlabel,0.6,0.8\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "align",
            "--source-emb",
            "one.csv",
            "--target-emb",
            "two.csv",
        ],
    );
    assert_success(&out);
    let text = stdout_string(&out);
    let objective: f64 = text.trim().parse().unwrap();
    assert!(objective.abs() <= 1e-12, "objective {objective}");
}

#[test]
fn learned_mask_does_not_worsen_the_objective_on_noisy_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "synth", "--n-patches", "24", "--n-labels", "4", "--dim", "8", "--noise-frac",
            "0.5", "--seed", "31",
        ],
    );
    assert_success(&out);
    let common_args = [
        "align",
        "--source-emb",
        "patches.emb",
        "--target-emb",
        "labels.emb",
        "--max-iterations",
        "50000",
        "--seed",
        "31",
    ];
    let plain = run_in(
        dir.path(),
        &[
            &common_args[..],
            &["--plan-out", "p1.csv", "--summary-out", "s1.json"][..],
        ]
        .concat(),
    );
    assert_success(&plain);
    let masked = run_in(
        dir.path(),
        &[
            &common_args[..],
            &[
                "--mask",
                "learn",
                "--epochs",
                "30",
                "--learning-rate",
                "1.0",
                "--plan-out",
                "p2.csv",
                "--summary-out",
                "s2.json",
                "--mask-out",
                "m2.csv",
            ][..],
        ]
        .concat(),
    );
    assert_success(&masked);
    let plain_objective: f64 = stdout_string(&plain).trim().parse().unwrap();
    let masked_objective: f64 = stdout_string(&masked).trim().parse().unwrap();
    assert!(
        masked_objective <= plain_objective,
        "masked {masked_objective} vs plain {plain_objective}"
    );
    assert!(dir.path().join("m2.csv").exists());
}

#[test]
fn align_batch_mode_processes_directory_in_order() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("sources")).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "synth", "--n-patches", "6", "--n-labels", "2", "--dim", "4", "--seed", "1",
            "--patches-out", "sources/alpha.emb", "--labels-out", "labels.emb",
            "--truth-out", "t1.csv",
        ],
    );
    assert_success(&out);
    let out = run_in(
        dir.path(),
        &[
            "synth", "--n-patches", "5", "--n-labels", "2", "--dim", "4", "--seed", "2",
            "--patches-out", "sources/beta.emb", "--labels-out", "labels2.emb",
            "--truth-out", "t2.csv",
        ],
    );
    assert_success(&out);
    let out = run_in(
        dir.path(),
        &[
            "align",
            "--source-emb",
            "sources",
            "--target-emb",
            "labels.emb",
            "--out-dir",
            "results",
            "--max-iterations",
            "50000",
        ],
    );
    assert_success(&out);
    let text = stdout_string(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("alpha.emb: "));
    assert!(lines[1].starts_with("beta.emb: "));
    for stem in ["alpha", "beta"] {
        assert!(dir.path().join(format!("results/{stem}.plan.csv")).exists());
        assert!(dir
            .path()
            .join(format!("results/{stem}.summary.json"))
            .exists());
    }
}

#[test]
fn fairness_perfect_classifier_prints_unit_metrics() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("preds.csv"),
        "sample_id,group,true_label,pred_label\n\
         s1,g0,x,x\ns2,g0,y,y\ns3,g1,x,x\ns4,g1,y,y\n",
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["fairness", "--predictions", "preds.csv"],
    );
    assert_success(&out);
    let text = stdout_string(&out);
    assert_eq!(text, "pqd=1.000000\ndpm=1.000000\neom=1.000000\n");
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn synth_rejection_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // 40 directions with pairwise cosine < 0.5 cannot fit in 2 dimensions.
    let out = run_in(
        dir.path(),
        &[
            "synth", "--n-patches", "1", "--n-labels", "40", "--dim", "2", "--seed", "0",
        ],
    );
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn train_mask_zero_epochs_exports_initial_mask() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "synth", "--n-patches", "8", "--n-labels", "2", "--dim", "5", "--seed", "42",
        ],
    );
    assert_success(&out);
    let out = run_in(
        dir.path(),
        &[
            "train-mask",
            "--source-emb",
            "patches.emb",
            "--target-emb",
            "labels.emb",
            "--epochs",
            "0",
            "--seed",
            "42",
        ],
    );
    assert_success(&out);

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace, "epoch,objective\n");

    let patches = read_embeddings(&dir.path().join("patches.emb"), EmbeddingFormat::Binary)
        .unwrap();
    let expected = compute_mask(&MaskGenerator::random(5, 42), &patches).unwrap();
    let mask_text = fs::read_to_string(dir.path().join("mask.csv")).unwrap();
    let written: Vec<f64> = mask_text
        .lines()
        .skip(1)
        .map(|line| line.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(written.len(), expected.weights().len());
    for (w, e) in written.iter().zip(expected.weights()) {
        assert!((w - e).abs() <= 1e-8, "{w} vs {e}");
    }
}

#[test]
fn train_mask_trace_has_one_row_per_epoch_and_improves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "synth", "--n-patches", "20", "--n-labels", "3", "--dim", "8", "--noise-frac",
            "0.6", "--seed", "13",
        ],
    );
    assert_success(&out);
    let out = run_in(
        dir.path(),
        &[
            "train-mask",
            "--source-emb",
            "patches.emb",
            "--target-emb",
            "labels.emb",
            "--epochs",
            "15",
            "--learning-rate",
            "1.0",
            "--seed",
            "13",
            "--max-iterations",
            "50000",
        ],
    );
    assert_success(&out);
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let rows: Vec<&str> = trace.lines().collect();
    assert_eq!(rows.len(), 16, "header plus one row per epoch");
    let first: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    let final_objective: f64 = stdout_string(&out).trim().parse().unwrap();
    assert!(
        final_objective < first,
        "final {final_objective} vs initial {first}"
    );
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["align", "--no-such-flag"]);
    assert_eq!(exit_code(&out), 1);

    fs::write(dir.path().join("e.csv"), "id,dim0\na,1\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "align",
            "--source-emb",
            "e.csv",
            "--target-emb",
            "e.csv",
            "--mask",
            "file",
        ],
    );
    assert_eq!(exit_code(&out), 1, "--mask file without --mask-file");

    let out = run_in(
        dir.path(),
        &[
            "align",
            "--source-emb",
            "e.csv",
            "--target-emb",
            "e.csv",
            "--tau",
            "3.0",
        ],
    );
    assert_eq!(exit_code(&out), 1, "out-of-range --tau is a usage error");

    let out = run_in(
        dir.path(),
        &["synth", "--noise-frac", "1.5", "--seed", "0"],
    );
    assert_eq!(exit_code(&out), 1, "out-of-range --noise-frac is a usage error");
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["fairness", "--predictions", "no_such_file.csv"],
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--help"]);
    assert_eq!(exit_code(&out), 0);
}
