//! Generator, CSV and split behaviour on realistic cohort sizes.

use fairmargin::autodiff::sigmoid;
use fairmargin::data::{batches, generate, split, Cohort, CohortConfig, DataError, Split, SplitFractions};
use fairmargin::metrics::{build_report, OperatingPoint, PredictionSet};
use sha2::{Digest, Sha256};

/// Bayes scorer for class k: the class axis is a sufficient statistic
/// when every group shares the same noise and no shift.
fn oracle_predictions(cohort: &Cohort, rows: &[usize]) -> PredictionSet {
    let k = cohort.num_classes;
    let scores = rows
        .iter()
        .flat_map(|&i| (0..k).map(move |c| sigmoid(cohort.samples[i].features[c] - 1.0)))
        .collect();
    PredictionSet::new(k, scores, cohort.labels(rows).into_data(), cohort.catalog().subset(rows)).unwrap()
}

#[test]
fn unbiased_cohort_oracle_has_small_eodds() {
    let cohort = generate(&CohortConfig::unbiased()).unwrap();
    let all: Vec<usize> = (0..cohort.len()).collect();
    let preds = oracle_predictions(&cohort, &all);
    let op = OperatingPoint::select(&preds).unwrap();
    let report = build_report("oracle", &preds, &op, None);
    let joint = report.joint.eodds.unwrap();
    println!("oracle joint EOdds {joint}");
    assert!(joint < 0.05, "joint EOdds {joint}");
}

#[test]
fn biased_cohort_oracle_shows_disparity() {
    let cohort = generate(&CohortConfig::biased()).unwrap();
    let all: Vec<usize> = (0..cohort.len()).collect();
    let preds = oracle_predictions(&cohort, &all);
    let op = OperatingPoint::select(&preds).unwrap();
    let report = build_report("oracle", &preds, &op, None);
    assert!(report.joint.eodds.unwrap() > 0.1, "{:?}", report.joint);
}

#[test]
fn prevalence_within_three_binomial_sd() {
    let mut cfg = CohortConfig::biased();
    cfg.prevalence = vec![0.5, 0.3];
    let cohort = generate(&cfg).unwrap();
    let n = cohort.len() as f64;
    for (k, &p) in cfg.prevalence.iter().enumerate() {
        let positives = cohort.samples.iter().filter(|s| s.labels[k] == 1).count() as f64;
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((positives - n * p).abs() <= 3.0 * sd, "class {k}: {positives}");
    }
}

#[test]
fn larger_shift_raises_group_mean_oracle_score() {
    let base = CohortConfig::biased();
    let mut raised = base.clone();
    raised.attributes[1].values[2].shift += 0.5;
    let mean_score = |cfg: &CohortConfig| {
        let c = generate(cfg).unwrap();
        let members: Vec<_> = c.samples.iter().filter(|s| s.attributes[1] == 2).collect();
        members.iter().map(|s| sigmoid(s.features[0])).sum::<f64>() / members.len() as f64
    };
    assert!(mean_score(&raised) > mean_score(&base));
}

#[test]
fn same_seed_same_file_hash() {
    let dir = tempfile::tempdir().unwrap();
    let hash = |name: &str| {
        let path = dir.path().join(name);
        generate(&CohortConfig::biased()).unwrap().save_csv(&path).unwrap();
        Sha256::digest(std::fs::read(&path).unwrap())
    };
    assert_eq!(hash("a.csv"), hash("b.csv"));
}

#[test]
fn different_seed_different_cohort() {
    let a = generate(&CohortConfig::biased()).unwrap();
    let b = generate(&CohortConfig {
        seed: 7,
        ..CohortConfig::biased()
    })
    .unwrap();
    assert_ne!(a.fingerprint, b.fingerprint);
    assert_ne!(a.samples[0].features, b.samples[0].features);
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cohort.csv");
    let cohort = generate(&CohortConfig {
        n_samples: 300,
        ..CohortConfig::biased()
    })
    .unwrap();
    cohort.save_csv(&path).unwrap();
    assert_eq!(Cohort::load_csv(&path).unwrap(), cohort);
}

#[test]
fn header_matches_schema() {
    let cohort = generate(&CohortConfig {
        n_samples: 50,
        ..CohortConfig::biased()
    })
    .unwrap();
    let text = cohort.to_csv_string();
    let header = text.lines().nth(2).unwrap();
    let mut expected = vec!["id".to_string()];
    expected.extend((0..12).map(|j| format!("f{j}")));
    expected.extend(["y0", "y1", "age", "race", "sex", "split"].map(String::from));
    assert_eq!(header, expected.join(","));
    assert!(text.starts_with(&format!("# fairmargin-cohort fingerprint={}\n", cohort.fingerprint)));
    assert!(text.lines().nth(1).unwrap().starts_with("# schema age=<60|60+;"));
}

#[test]
fn three_label_columns_parse_as_three_classes() {
    let text = "\
# fairmargin-cohort fingerprint=0000000000000000
# schema sex=F|M
id,f0,f1,y0,y1,y2,sex,split
0,0.5,-1.0,1,0,1,F,train
1,1.5,2.0,0,1,0,M,val
2,-0.5,0.25,1,1,0,M,test
";
    let c = Cohort::from_csv_str(text).unwrap();
    assert_eq!(c.num_classes, 3);
    assert_eq!(c.feature_dim, 2);
    assert_eq!(c.samples[2].labels, vec![1, 1, 0]);
    assert_eq!(c.indices(Split::Val), vec![1]);
}

#[test]
fn truncated_row_reports_its_line() {
    let text = "\
# fairmargin-cohort fingerprint=0000000000000000
# schema sex=F|M
id,f0,y0,sex,split
0,0.5,1,F,train
1,0.7,0
";
    match Cohort::from_csv_str(text) {
        Err(DataError::Parse { line, .. }) => assert_eq!(line, 5),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_value_is_named() {
    let text = "\
# fairmargin-cohort fingerprint=0000000000000000
# schema sex=F|M
id,f0,y0,sex,split
0,0.5,1,X,train
";
    let err = Cohort::from_csv_str(text).unwrap_err();
    assert!(
        matches!(&err, DataError::UnknownValue { line: 4, value, .. } if value == "X"),
        "{err}"
    );
    assert!(err.to_string().contains("`X`"));
}

#[test]
fn resplit_is_deterministic_and_stratified() {
    let cohort = generate(&CohortConfig {
        n_samples: 100,
        ..CohortConfig::biased()
    })
    .unwrap();
    let a = split(cohort.clone(), SplitFractions::default(), 11).unwrap();
    let b = split(cohort.clone(), SplitFractions::default(), 11).unwrap();
    let c = split(cohort, SplitFractions::default(), 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.indices(Split::Test), c.indices(Split::Test));
    assert_eq!(
        [Split::Train, Split::Val, Split::Test].map(|s| a.indices(s).len()),
        [60, 20, 20]
    );
}

#[test]
fn empty_split_is_an_error() {
    let cohort = generate(&CohortConfig {
        n_samples: 2,
        ..CohortConfig::biased()
    });
    assert!(matches!(cohort, Err(DataError::EmptySplit(_))));
}

#[test]
fn batches_130_by_64() {
    let rows: Vec<usize> = (0..130).collect();
    let e0 = batches(&rows, 64, 5, 0);
    assert_eq!(e0.iter().map(Vec::len).collect::<Vec<_>>(), [64, 64, 2]);
    assert_ne!(e0, batches(&rows, 64, 5, 1));
    assert_eq!(e0, batches(&rows, 64, 5, 0));
}
