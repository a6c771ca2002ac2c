mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{clipped, rasterised_box, Capsule};
use icetrack::dataset::{load_manifest, load_split, sequence_dir, verify_integrity, DatasetError};
use icetrack::geometry::{
    iou, relative_pose, rotation_angle_from_diagonal, rotation_angle_from_heading, FanGeometry, RigidTransform,
};
use icetrack::simulator::{
    annotate, generate_dataset, generate_trajectory, sample_scene, MotionKind, MotionProfile, SceneConfig, SplitsConfig,
};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_scene() -> SceneConfig {
    let mut c = SceneConfig::default();
    c.fan = FanGeometry::new(90.0, 48.0, 64, 64).unwrap();
    c.motion.frames_per_sequence = 8;
    c.splits = SplitsConfig::with_counts(4, 2, 3);
    c
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn regeneration_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_scene();
    generate_dataset(&config, 11, &dir.path().join("a")).unwrap();
    generate_dataset(&config, 11, &dir.path().join("b")).unwrap();
    let a = files_under(&dir.path().join("a"));
    let b = files_under(&dir.path().join("b"));
    assert!(
        a.len() > 9 * 8,
        "expected frames and annotations, found {} files",
        a.len()
    );
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between runs");
    }

    generate_dataset(&config, 12, &dir.path().join("c")).unwrap();
    let c = files_under(&dir.path().join("c"));
    assert_ne!(a["manifest.json"], c["manifest.json"]);
}

#[test]
fn manifest_counts_and_disjoint_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&small_scene(), 1, dir.path()).unwrap();
    let counts: Vec<_> = manifest.splits.iter().map(|s| (s.name.as_str(), s.count)).collect();
    assert_eq!(counts, [("train", 4), ("val", 2), ("test", 3)]);
    let train = manifest.split("train").unwrap();
    let test = manifest.split("test").unwrap();
    assert!(train.sequence_ids.iter().all(|id| !test.sequence_ids.contains(id)));
    assert!(train.background_ids.iter().all(|id| !test.background_ids.contains(id)));
    assert_eq!(load_manifest(dir.path()).unwrap(), manifest);
    verify_integrity(dir.path()).unwrap();
}

#[test]
fn stored_annotations_match_the_analytic_ones() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_scene();
    generate_dataset(&config, 5, dir.path()).unwrap();
    for split in ["train", "val", "test"] {
        for seq in load_split(dir.path(), split).unwrap() {
            assert_eq!(seq.len(), config.motion.frames_per_sequence);
            for a in &seq.annotations {
                let again = annotate(&config.fan, &config.tip, &a.tip_pose, a.frame_index);
                assert_eq!(&again, a, "{} frame {}", seq.sequence_id, a.frame_index);
                assert_eq!(a.visible, a.bbox.is_some());
            }
        }
    }
}

#[test]
fn pixels_outside_the_fan_are_black() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_scene();
    generate_dataset(&config, 2, dir.path()).unwrap();
    let mask = config.fan.pixel_mask();
    assert!(mask.iter().any(|&m| !m));
    for seq in load_split(dir.path(), "train").unwrap() {
        for frame in &seq.frames {
            for (v, &m) in frame.data.iter().zip(&mask) {
                if !m {
                    assert!(*v <= 1e-6, "{}: {v} outside the fan", seq.sequence_id);
                }
            }
        }
    }
}

#[test]
fn visible_boxes_move_continuously() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_scene();
    generate_dataset(&config, 3, dir.path()).unwrap();
    let fan = &config.fan;
    let (w, h) = (fan.image_width as f64, fan.image_height as f64);
    let mut pairs = 0;
    for split in ["train", "val", "test"] {
        for seq in load_split(dir.path(), split).unwrap() {
            let meta = seq.meta.as_ref().unwrap();
            let bound = meta.profile.step_mm() / fan.mm_per_px + 2.0;
            for pair in seq.annotations.windows(2) {
                let (Some(a), Some(b)) = (pair[0].bbox, pair[1].bbox) else {
                    continue;
                };
                if clipped(&a) || clipped(&b) {
                    continue;
                }
                let (ca, cb) = (a.center(), b.center());
                let d = ((ca.0 - cb.0) * w).hypot((ca.1 - cb.1) * h);
                assert!(
                    d <= bound,
                    "{} frame {}: {d:.2} px > {bound:.2}",
                    seq.sequence_id,
                    pair[1].frame_index
                );
                pairs += 1;
            }
        }
    }
    assert!(pairs > 20);
}

#[test]
fn diagonal_rotation_agrees_with_heading_on_elongated_boxes() {
    let config = SceneConfig::default();
    let fan = &config.fan;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut checked, mut exempt) = (0, 0);
    for _ in 0..100 {
        let (scene, poses, annotations) = sample_scene(&config, &mut rng).unwrap();
        for (pose, a) in poses.iter().zip(&annotations) {
            let Some(bbox) = a.bbox else { continue };
            let e_ice_tip = relative_pose(&scene.e_world_ice, pose);
            let heading = e_ice_tip.heading();
            if bbox.aspect_ratio(fan.image_width, fan.image_height) < 1.5 {
                exempt += 1;
                continue;
            }
            let from_box =
                rotation_angle_from_diagonal(fan, &bbox, [heading.x, heading.z], config.tip.diameter_mm).unwrap();
            let truth = rotation_angle_from_heading(&e_ice_tip).unwrap();
            let err = icetrack::geometry::angular_error(from_box, truth);
            assert!(err <= 10.0, "diagonal {from_box:.2} vs heading {truth:.2}");
            checked += 1;
        }
    }
    assert!(checked > 100, "only {checked} elongated frames ({exempt} exempt)");
}

#[test]
fn annotation_box_matches_the_rasterised_capsule() {
    let config = SceneConfig::default();
    let fan = &config.fan;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 1.0;
    for scene_index in 0..200 {
        let (scene, poses, annotations) = sample_scene(&config, &mut rng).unwrap();
        let k = annotations
            .iter()
            .position(|a| a.visible)
            .expect("accepted scenes show the tip");
        let e_ice_tip = relative_pose(&scene.e_world_ice, &poses[k]);
        let capsule = Capsule::from_pose(&e_ice_tip, config.tip.length_mm, config.tip.diameter_mm);
        let oracle = rasterised_box(fan, &capsule, 4).expect("visible tip covers samples");
        let score = iou(&annotations[k].bbox.unwrap(), &oracle);
        assert!(score >= 0.9, "scene {scene_index}: IoU {score:.3}");
        worst = worst.min(score);
    }
    assert!(worst < 1.0, "a finite raster cannot match every box exactly");
}

#[test]
fn injected_overlap_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&small_scene(), 4, dir.path()).unwrap();
    let path = dir.path().join("manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let train_id = manifest["splits"][0]["sequence_ids"][0].clone();
    manifest["splits"][2]["sequence_ids"][0] = train_id;
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    assert!(matches!(
        verify_integrity(dir.path()),
        Err(DatasetError::SplitOverlap(_))
    ));
}

#[test]
fn overlapping_seed_ranges_are_refused_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_scene();
    config.splits.test.trajectory_seed_start = config.splits.train.trajectory_seed_start + 1;
    let root = dir.path().join("out");
    let err = generate_dataset(&config, 0, &root).unwrap_err();
    assert!(err.to_string().starts_with("SplitOverlap"), "{err}");
    assert!(!root.join("manifest.json").exists());
}

#[test]
fn reference_split_sizes_are_accepted() {
    let mut config = SceneConfig::default();
    config.splits = SplitsConfig::with_counts(5400, 48, 250);
    config.validate().unwrap();
    config.check_split_overlap().unwrap();
}

#[test]
fn sequence_directories_follow_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&small_scene(), 8, dir.path()).unwrap();
    for split in &manifest.splits {
        for id in &split.sequence_ids {
            assert!(sequence_dir(dir.path(), &split.name, id).is_dir());
        }
    }
}

fn profile(kind: MotionKind, speed: f64, drift: f64, seed: u64) -> MotionProfile {
    MotionProfile {
        kind,
        speed_mm_s: speed,
        frame_rate_hz: 25.0,
        n_frames: 30,
        heading_drift_deg_s: drift,
        seed,
        allow_any_speed: false,
    }
}

fn kind_strategy() -> impl Strategy<Value = MotionKind> {
    prop_oneof![
        Just(MotionKind::Insertion),
        Just(MotionKind::Withdrawal),
        Just(MotionKind::Mixed)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn per_frame_displacement_matches_speed(
        kind in kind_strategy(),
        speed in 10.0f64..=20.0,
        drift in 0.0f64..120.0,
        seed in any::<u64>(),
        origin in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let p = profile(kind, speed, drift, seed);
        let ice = RigidTransform::from_axis_angle(&Vector3::y(), 0.4, Vector3::new(3.0, -2.0, 1.0));
        let tip = RigidTransform::with_heading(
            &Vector3::new(0.3, 0.8, -0.2),
            0.1,
            Vector3::from(origin),
        );
        let poses = generate_trajectory(&p, &ice, &tip);
        prop_assert_eq!(poses.len(), 30);
        let step = speed / 25.0;
        let max_turn = drift / 25.0 + 1e-6;
        for (k, pair) in poses.windows(2).enumerate() {
            let d = (pair[1].translation() - pair[0].translation()).norm();
            prop_assert!((d - step).abs() <= 0.01 * step, "frame {}: {} vs {}", k, d, step);
            let cos = pair[0].heading().normalize().dot(&pair[1].heading().normalize()).clamp(-1.0, 1.0);
            prop_assert!(cos.acos().to_degrees() <= max_turn);
        }
        prop_assert_eq!(generate_trajectory(&p, &ice, &tip), poses);
    }

    #[test]
    fn motion_direction_follows_the_profile(speed in 10.0f64..=20.0, seed in any::<u64>()) {
        let ice = RigidTransform::identity();
        let tip = RigidTransform::with_heading(&Vector3::x(), 0.0, Vector3::zeros());
        for (kind, sign) in [(MotionKind::Insertion, 1.0), (MotionKind::Withdrawal, -1.0)] {
            let poses = generate_trajectory(&profile(kind, speed, 0.0, seed), &ice, &tip);
            for pair in poses.windows(2) {
                let along = (pair[1].translation() - pair[0].translation()).dot(&pair[0].heading());
                prop_assert!(along * sign > 0.0);
            }
        }
        let poses = generate_trajectory(&profile(MotionKind::Mixed, speed, 0.0, seed), &ice, &tip);
        let signs: Vec<bool> = poses
            .windows(2)
            .map(|p| (p[1].translation() - p[0].translation()).dot(&p[0].heading()) > 0.0)
            .collect();
        prop_assert!(signs[0]);
        prop_assert!(!signs[signs.len() - 1]);
        prop_assert_eq!(signs.windows(2).filter(|w| w[0] != w[1]).count(), 1);
    }
}

#[test]
fn out_of_band_speeds_need_an_explicit_override() {
    let mut config = small_scene();
    config.motion.speed_mm_s = [5.0, 15.0];
    assert!(config.validate().is_err());
    config.motion.allow_any_speed = true;
    config.validate().unwrap();
}
