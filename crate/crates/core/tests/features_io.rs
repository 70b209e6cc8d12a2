use std::fs;

use delaysinc::features::{
    interleave_target, load_features, load_labels, stack_frames, write_features, write_labels, znorm_per_speaker,
};
use delaysinc::{Dataset, Error, FeatureSequence, Partition, Recording, SampledSignal, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frames(rng: &mut ChaCha8Rng, t: usize, d: usize, speaker: &str) -> FeatureSequence {
    let v: Vec<f64> = (0..t * d).map(|_| rng.gen_range(-3.0..5.0)).collect();
    FeatureSequence::new(v, d, 25.0, speaker).unwrap()
}

fn recording(id: &str, f: FeatureSequence) -> Recording {
    let labels = SampledSignal::new(vec![0.0; f.len()], f.fs()).unwrap();
    Recording::new(id, f, labels, Partition::Train).unwrap()
}

#[test]
fn two_speaker_znorm_matches_reference_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let specs = [("a", 40), ("b", 25), ("a", 13), ("b", 7), ("a", 2)];
    let recs: Vec<Recording> = specs
        .iter()
        .enumerate()
        .map(|(i, (s, t))| recording(&format!("r{i}"), random_frames(&mut rng, *t, 3, s)))
        .collect();
    let ds = Dataset::new(Task::Arousal, recs).unwrap();
    let out = znorm_per_speaker(&ds).unwrap();

    for speaker in ["a", "b"] {
        for d in 0..3 {
            let vals: Vec<f64> = ds
                .recordings
                .iter()
                .filter(|r| r.speaker_id() == speaker)
                .flat_map(|r| r.features.channel(d))
                .collect();
            let mut sum = 0.0;
            for v in &vals {
                sum += v;
            }
            let mean = sum / vals.len() as f64;
            let mut sq = 0.0;
            for v in &vals {
                sq += (v - mean) * (v - mean);
            }
            let std = (sq / vals.len() as f64).sqrt();
            for (before, after) in ds.recordings.iter().zip(&out.recordings) {
                if before.speaker_id() != speaker {
                    continue;
                }
                for (x, z) in before.features.channel(d).iter().zip(after.features.channel(d)) {
                    assert!(((x - mean) / std - z).abs() <= 1e-12);
                }
            }
        }
    }
    // labels and metadata are untouched
    for (a, b) in ds.recordings.iter().zip(&out.recordings) {
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.id, b.id);
    }
}

#[test]
fn alternating_interleave_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_frames(&mut rng, 30, 4, "a");
    let b = random_frames(&mut rng, 30, 4, "b");
    let mask: Vec<bool> = (0..30).map(|t| t % 2 == 0).collect();
    let out = interleave_target(&a, &b, &mask).unwrap();
    assert_eq!((out.len(), out.dims(), out.fs()), (30, 8, 25.0));
    assert_eq!(out.speaker_id(), "a");
    for t in 0..30 {
        let mut want = vec![0.0; 8];
        for d in 0..4 {
            if mask[t] {
                want[d] = a.row(t)[d];
            } else {
                want[4 + d] = b.row(t)[d];
            }
        }
        assert_eq!(out.row(t), &want[..]);
    }
    let short = random_frames(&mut rng, 29, 4, "b");
    assert!(matches!(interleave_target(&a, &short, &mask), Err(Error::ShapeMismatch(_))));
    assert!(interleave_target(&a, &b, &mask[..29]).is_err());
}

#[test]
fn filterbank_stacking_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = FeatureSequence::new((0..100 * 40).map(|_| rng.gen()).collect(), 40, 100.0, "s").unwrap();
    let s = stack_frames(&f, 4).unwrap();
    assert_eq!((s.len(), s.dims(), s.fs()), (25, 160, 25.0));
    for i in 0..25 {
        let want: Vec<f64> = (0..4).flat_map(|j| f.row(4 * i + j).to_vec()).collect();
        assert_eq!(s.row(i), &want[..]);
    }
    assert_eq!(stack_frames(&f, 1).unwrap(), f);

    let g = FeatureSequence::new((0..14).map(|v| v as f64).collect(), 2, 25.0, "s").unwrap();
    let s = stack_frames(&g, 3).unwrap();
    assert_eq!((s.len(), s.dims()), (2, 6));
    assert_eq!(s.frames(), &(0..12).map(|v| v as f64).collect::<Vec<_>>()[..]);
}

#[test]
fn files_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = FeatureSequence::new((0..50 * 3).map(|_| rng.gen_range(-1e3..1e3)).collect(), 3, 25.0, "spk7").unwrap();
    let y = SampledSignal::new((0..50).map(|_| rng.gen::<f64>()).collect(), 25.0).unwrap();
    let fp = dir.path().join("f.csv");
    let lp = dir.path().join("l.csv");
    write_features(&fp, &f).unwrap();
    write_labels(&lp, &y).unwrap();
    let text = fs::read_to_string(&fp).unwrap();
    assert!(text.starts_with("# fs=25 dims=3 speaker=spk7\n"), "{}", &text[..40]);
    assert_eq!(load_features(&fp).unwrap(), f);
    assert_eq!(load_labels(&lp).unwrap(), y);
    assert!(fs::read_to_string(&lp).unwrap().starts_with("# fs=25\n"));

    let missing = dir.path().join("nope.csv");
    assert!(matches!(load_features(&missing), Err(Error::Io { .. })));
    fs::write(&fp, "1,2,3\n").unwrap();
    assert!(matches!(load_features(&fp), Err(Error::MissingHeader(_))));
}

#[test]
fn dataset_round_trips_through_directory() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let recs = ["a", "b", "c"]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let f = random_frames(&mut rng, 20 + i, 2, s);
            let y = SampledSignal::new((0..f.len()).map(|_| rng.gen()).collect(), 25.0).unwrap();
            let part = [Partition::Train, Partition::Dev, Partition::Test][i];
            Recording::new(format!("rec{i}"), f, y, part).unwrap()
        })
        .collect();
    let ds = Dataset::new(Task::Valence, recs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    assert!(dir.path().join("dataset.json").exists());
    assert!(dir.path().join("rec1.features.csv").exists());
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.speakers(), vec!["a", "b", "c"]);
    assert_eq!(back.partition(Partition::Test).count(), 1);
}

#[test]
fn empty_dataset_rejected() {
    assert!(matches!(Dataset::new(Task::Synthetic, vec![]), Err(Error::EmptyInput(_))));
}
