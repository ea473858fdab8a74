//! Writing and reading the binary feature, mask and pixel-map files plus the
//! JSON manifest that ties a dataset together.

use continual_ad::featio::{
    load_manifest, pool_mask_to_grid, read_feature_file, read_mask_file, write_feature_file,
    write_manifest, write_mask_file, ClassEntry, FeatureRecord, FeatureSample, Label, Manifest,
    Mask, SampleEntry, StageGrid,
};
use continual_ad::numcore::{Mat, RandomStream};
use continual_ad::NUM_STAGES;

fn main() -> continual_ad::Result<()> {
    let dir = std::env::temp_dir().join("continual-ad-files");
    let mut rng = RandomStream::new(1);

    let stages: Vec<StageGrid> = (0..NUM_STAGES)
        .map(|_| {
            StageGrid::new(
                4,
                4,
                Mat::from_vec(16, 8, rng.gaussian_of(128, 1.0).unwrap()).unwrap(),
            )
            .unwrap()
        })
        .collect();
    let record = FeatureRecord {
        label: Label::Anomalous,
        stages: stages.try_into().unwrap(),
    };
    let mut mask = Mask::zeros(16, 16);
    for r in 4..8 {
        for c in 4..10 {
            mask.set(r, c, true);
        }
    }
    let sample = FeatureSample::new("toy/a0", "toy", record, Some(mask.clone()))?;
    write_feature_file(&sample, dir.join("toy/a0.cmfg"))?;
    write_mask_file(&mask, dir.join("toy/a0.cmsk"))?;

    let manifest = Manifest {
        dataset_name: "toy".into(),
        text_bank: None,
        classes: vec![ClassEntry {
            class_id: "toy".into(),
            train_normals: vec![],
            train_anomalies: vec![SampleEntry {
                sample_id: "toy/a0".into(),
                feature_path: "toy/a0.cmfg".into(),
                mask_path: Some("toy/a0.cmsk".into()),
                label: Label::Anomalous,
            }],
            test_samples: vec![],
        }],
        base_dir: dir.clone(),
    };
    write_manifest(&manifest, dir.join("manifest.json"))?;

    let loaded = load_manifest(dir.join("manifest.json"))?;
    let entry = &loaded.classes[0].train_anomalies[0];
    let back = loaded.load_sample("toy", entry)?;
    assert_eq!(back.record(), read_feature_file(dir.join("toy/a0.cmfg"))?);
    assert_eq!(read_mask_file(dir.join("toy/a0.cmsk"))?, mask);

    // Masks reach the feature grid by max pooling.
    let grid = pool_mask_to_grid(&mask, 4, 4)?;
    println!("mask pooled to 4x4: {:?}", grid.data());
    println!("{} stages, wrote {}", back.stages.len(), dir.display());
    Ok(())
}
