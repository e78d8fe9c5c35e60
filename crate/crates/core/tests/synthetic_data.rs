mod common;

use common::oracle::centroid_accuracy;
use eitnet_core::eval::synth::skeleton::JOINTS;
use eitnet_core::eval::{generate_synthetic_dataset, make_split, ActionLabel, SplitAxis, SyntheticConfig};

#[test]
fn four_hundred_balanced_samples() {
    let data = generate_synthetic_dataset(&SyntheticConfig::default(), 7).unwrap();
    assert_eq!(data.len(), 400);
    for l in ActionLabel::ALL {
        assert_eq!(data.iter().filter(|s| s.label == l).count(), 100);
    }
    assert!(data.iter().all(|s| s.poses.len() == s.clip.shape()[1] && s.poses[0].len() == JOINTS));
}

#[test]
fn classes_separable_by_centroid() {
    let data = generate_synthetic_dataset(&SyntheticConfig::default(), 7).unwrap();
    let subj = make_split(SplitAxis::Subject, 7);
    let acc = centroid_accuracy(&data, |s| subj.is_train(s.subject_id));
    println!("centroid cross-subject accuracy {acc:.1}%");
    assert!(acc > 90.0, "centroid accuracy {acc}");
    let view = make_split(SplitAxis::View, 7);
    let acc = centroid_accuracy(&data, |s| view.is_train(s.view_id));
    println!("centroid cross-view accuracy {acc:.1}%");
}
