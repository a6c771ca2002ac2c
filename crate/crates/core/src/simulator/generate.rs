use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{BackgroundMode, SceneConfig, SplitSpec};
use super::motion::sample_scene;
use super::render::{render_frame, Background};
use super::SimulationError;
use crate::dataset::{
    canonical_hash, file_hash, sequence_dir, write_manifest, write_sequence, Manifest, SequenceMeta, SplitManifest,
    FORMAT_VERSION,
};
use crate::imaging::GrayFrame;

const TRAJECTORY_STREAM: u64 = 0x7472_616a;
const BACKGROUND_STREAM: u64 = 0x6267_6e64;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent RNG seed for `(global seed, stream, id)`.
pub fn derive_seed(seed: u64, stream: u64, id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream ^ splitmix64(id)))
}

pub fn sequence_id(trajectory_seed: u64) -> String {
    format!("seq{trajectory_seed:07}")
}

struct PoolImage {
    id: String,
    image: GrayFrame,
}

fn read_pool(dir: &Path) -> Result<Vec<PoolImage>, SimulationError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| SimulationError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(SimulationError::InvalidConfig(format!(
            "background pool {} contains no PNG images",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let hash = file_hash(p)?;
            Ok(PoolImage {
                id: format!("pool-{}", &hash[..16]),
                image: GrayFrame::load_png(p).map_err(crate::dataset::DatasetError::from)?,
            })
        })
        .collect()
}

/// Generates all three splits under `root` and writes the manifest last.
///
/// Sequences are generated in parallel; each draws from its own RNG streams
/// derived from `(seed, trajectory seed)` and `(seed, background seed)`, so
/// the output does not depend on scheduling.
pub fn generate_dataset(config: &SceneConfig, seed: u64, root: &Path) -> Result<Manifest, SimulationError> {
    config.validate()?;

    let pools = match config.background.mode {
        BackgroundMode::ProceduralSpeckle => None,
        BackgroundMode::ImagePool => {
            let read = |s: &SplitSpec| read_pool(s.background_pool.as_deref().expect("validated"));
            let pools = [
                read(&config.splits.train)?,
                read(&config.splits.val)?,
                read(&config.splits.test)?,
            ];
            if let Some(shared) = pools[0].iter().find(|a| pools[2].iter().any(|b| b.id == a.id)) {
                return Err(SimulationError::SplitOverlap(format!(
                    "background image {} present in both train and test pools",
                    shared.id
                )));
            }
            Some(pools)
        }
    };

    std::fs::create_dir_all(root).map_err(|e| SimulationError::Io(format!("{}: {e}", root.display())))?;
    let mut splits = Vec::new();
    for (split_idx, (name, spec)) in config.splits.iter().enumerate() {
        let jobs: Vec<(u64, u64)> = spec.trajectory_seeds().zip(spec.background_seeds()).collect();
        let background_ids = jobs
            .par_iter()
            .map(|&(traj_seed, bg_seed)| {
                let pool = pools.as_ref().map(|p| &p[split_idx]);
                generate_sequence(config, seed, root, name, traj_seed, bg_seed, pool)
            })
            .collect::<Result<Vec<String>, SimulationError>>()?;
        splits.push(SplitManifest {
            name: name.to_string(),
            count: spec.count,
            sequence_ids: spec.trajectory_seeds().map(sequence_id).collect(),
            trajectory_seeds: [spec.trajectory_seeds().start, spec.trajectory_seeds().end],
            background_ids,
        });
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        generator: format!("icetrack {}", env!("CARGO_PKG_VERSION")),
        seed,
        config_hash: canonical_hash(config),
        image_width: config.fan.image_width,
        image_height: config.fan.image_height,
        frames_per_sequence: config.motion.frames_per_sequence,
        config: config.clone(),
        splits,
    };
    write_manifest(root, &manifest)?;
    Ok(manifest)
}

fn generate_sequence(
    config: &SceneConfig,
    seed: u64,
    root: &Path,
    split: &str,
    trajectory_seed: u64,
    background_seed: u64,
    pool: Option<&Vec<PoolImage>>,
) -> Result<String, SimulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TRAJECTORY_STREAM, trajectory_seed));
    let (scene, poses, _) = sample_scene(config, &mut rng)?;

    let (background, background_id) = match pool {
        None => (
            Background::procedural(
                &config.fan,
                &config.background,
                derive_seed(seed, BACKGROUND_STREAM, background_seed),
            ),
            format!("speckle-{background_seed}"),
        ),
        Some(pool) => {
            let pick = &pool[(background_seed % pool.len() as u64) as usize];
            (
                Background::from_image(&config.fan, &pick.image, &config.background),
                pick.id.clone(),
            )
        }
    };

    let frames: Vec<_> = poses
        .iter()
        .enumerate()
        .map(|(k, pose)| {
            render_frame(
                &config.fan,
                &background,
                &config.tip,
                &scene.e_world_ice,
                pose,
                k as u32,
                &mut rng,
            )
        })
        .collect();

    let id = sequence_id(trajectory_seed);
    let meta = SequenceMeta {
        sequence_id: id.clone(),
        split: split.to_string(),
        trajectory_seed,
        background_id: background_id.clone(),
        profile: scene.profile,
        e_world_ice: scene.e_world_ice,
    };
    write_sequence(&sequence_dir(root, split, &id), &meta, &frames)?;
    Ok(background_id)
}
