use serde_json::Value;
use tailaug_demo::{augment_json, rank_json, ttest_json};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn augmentation_reports_points_and_losses() {
    for mode in ["no-aug", "aug-no-c", "aug-gen", "aug-gen-div", "complete"] {
        let v = parse(&augment_json(mode, 6, 3).unwrap());
        assert_eq!(v["train"].as_array().unwrap().len(), 3 * 60 + 3 * 3);
        let generated = v["generated"].as_array().unwrap().len();
        let protos = v["prototypes"].as_array().unwrap().len();
        if mode == "no-aug" {
            assert_eq!((generated, protos), (0, 0));
            assert_eq!(v["tail_macro_f1"], v["tail_macro_f1_before"]);
        } else {
            assert_eq!(protos, 3);
            assert_eq!(generated, 3 * 3 * 6);
            assert!(v["generated"][0]["tail"].as_bool().unwrap());
        }
        println!("{mode}: tail F1 {} -> {}, L_var {}", v["tail_macro_f1_before"], v["tail_macro_f1"], v["l_var"]);
    }
}

#[test]
fn augmentation_is_deterministic() {
    assert_eq!(augment_json("complete", 4, 9).unwrap(), augment_json("complete", 4, 9).unwrap());
    assert_ne!(augment_json("complete", 4, 9).unwrap(), augment_json("complete", 4, 10).unwrap());
}

#[test]
fn ranking_metrics_by_hand() {
    let v = parse(&rank_json("0.9, 0.1, 0.5, 0.7", "1 0 0 1", 2).unwrap());
    assert_eq!(v["order"], serde_json::json!([0, 3, 2, 1]));
    assert_eq!(v["precision"], 1.0);
    assert_eq!(v["ndcg"], 1.0);
    let v = parse(&rank_json("0.9 0.1 0.5 0.7", "0 0 1 0", 3).unwrap());
    assert!((v["ndcg"].as_f64().unwrap() - 0.5).abs() < 1e-15);
    assert!((v["precision"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn ttest_matches_a_hand_computation() {
    // means 2 and 4, both sample variances 1, pooled se = sqrt(2/3)
    let v = parse(&ttest_json("1 2 3", "3 4 5").unwrap());
    let t = v["t"].as_f64().unwrap();
    assert!((t + 2.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(v["df"], 4.0);
    assert!((v["p"].as_f64().unwrap() - 0.07048399691021993).abs() < 1e-9);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(augment_json("sideways", 4, 0).is_err());
    assert!(rank_json("1 2", "1", 1).is_err());
    assert!(rank_json("1 x", "1 0", 1).is_err());
    assert!(ttest_json("1", "2 3").is_err());
}
