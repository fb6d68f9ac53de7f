mod common;

use bertprep::pretrain::{read_tfrecords, write_tfrecords, SerializedExample};
use common::fixture;

// Records written by TensorFlow's own TFRecordWriter and tf.train.Example.
fn reference_examples() -> Vec<SerializedExample> {
    (0..3i64)
        .map(|i| SerializedExample {
            input_ids: vec![2, 10 + i, 3, 4, 3, 0],
            input_mask: vec![1, 1, 1, 1, 1, 0],
            segment_ids: vec![0, 0, 0, 1, 1, 0],
            masked_lm_positions: vec![3, 0],
            masked_lm_ids: vec![20 + i, 0],
            masked_lm_weights: vec![1.0, 0.0],
            next_sentence_labels: i % 2,
        })
        .collect()
}

#[test]
fn decodes_tensorflow_written_records() {
    let got: Vec<SerializedExample> = read_tfrecords(&[fixture("tf_reference.tfrecord")])
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(got, reference_examples());
}

#[test]
fn our_records_have_the_same_framing() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_tfrecords(&reference_examples(), dir.path(), 1).unwrap();
    let ours = std::fs::read(&paths[0]).unwrap();
    let theirs = std::fs::read(fixture("tf_reference.tfrecord")).unwrap();
    // Map entry order inside an Example is unspecified, so compare lengths
    // and the decoded content rather than raw bytes.
    assert_eq!(ours.len(), theirs.len());
    let back: Vec<SerializedExample> = read_tfrecords(&paths).collect::<Result<_, _>>().unwrap();
    assert_eq!(back, reference_examples());
}
