use clipforge::dataset::{build_manifest, preprocess, split_manifest, Label, Split, DEFAULT_FRACTIONS};
use clipforge::media::{probe_video, read_frames};
use clipforge::synthetic::{generate, generate_composite, motion_energy, render_clip, SynthSpec};

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

#[test]
fn classes_separate_by_more_than_twice_the_spread() {
    let spec = SynthSpec { seed: 21, ..SynthSpec::default() };
    let energy = |l| (0..60).map(|i| motion_energy(&render_clip(&spec, l, i))).collect::<Vec<_>>();
    let (mc, sc) = mean_std(&energy(Label::NonViolence));
    let (mv, sv) = mean_std(&energy(Label::Violence));
    assert!(mv - mc > 2.0 * sc.max(sv), "calm {mc}±{sc}, violent {mv}±{sv}");
}

#[test]
fn generated_folder_feeds_the_dataset_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { n_per_class: 7, seed: 3, ..SynthSpec::default() };
    let clips = generate(&spec, dir.path()).unwrap();
    assert!(clips.iter().all(|c| c.path.exists()));
    let (m, skipped) = build_manifest(dir.path()).unwrap();
    assert_eq!(m.entries.len(), 14);
    assert_eq!(skipped.skipped.len(), 0);
    let m = split_manifest(&m, DEFAULT_FRACTIONS, 1).unwrap();
    let train = preprocess(&m.split(Split::Train)).unwrap();
    assert_eq!(train.len(), 2 * 5);
    assert!(train.data.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn composite_is_violent_only_inside_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.y4m");
    let spec = SynthSpec { seed: 5, ..SynthSpec::default() };
    let gt = generate_composite(&spec, 6.0, &[(2.0, 4.0)], &path).unwrap();
    assert_eq!(gt.fps, 16);
    let meta = probe_video(&path).unwrap();
    assert_eq!(meta.frame_count, 96);
    let frames = read_frames(&meta, &(0..96).collect::<Vec<_>>()).unwrap();
    let diff = |k: usize| frames[k].iter().zip(&frames[k + 1]).map(|(a, b)| (a - b).abs() as f64).sum::<f64>();
    let calm = (4..28).chain(68..94).map(diff).fold(0.0, f64::max);
    let violent = (34..62).map(diff).fold(f64::MAX, f64::min);
    assert!(violent > calm, "{violent} <= {calm}");
}
