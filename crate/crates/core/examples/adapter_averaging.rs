//! Building an adapter bank and merging it by weight averaging.
//!
//! The merged set uses the elementwise mean of every `W1` and `W2`. Because a
//! bottleneck adapter is bilinear in its two matrices, forwarding through the
//! mean weights is *not* the mean of the individual forwards unless the sets
//! share one of the matrices; the example prints both gaps.

use continual_ad::adapters::{residual_blend, Adapter, AdapterBank, AdapterSet, SetTag};
use continual_ad::numcore::{Mat, RandomStream};
use continual_ad::NUM_STAGES;

fn random(rng: &mut RandomStream, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, rng.gaussian_of(rows * cols, 0.3).unwrap()).unwrap()
}

fn mean_of_forwards(bank: &AdapterBank, f: &Mat) -> Mat {
    let mut acc = Mat::zeros(f.rows(), f.cols());
    for set in bank.sets() {
        acc.add_assign(&set.stage(1).forward(f).unwrap()).unwrap();
    }
    acc.scale(1.0 / bank.len() as f64)
}

fn main() -> continual_ad::Result<()> {
    let mut rng = RandomStream::new(3);
    let (d, h) = (16, 4);
    let features = random(&mut rng, 10, d);

    let independent = |rng: &mut RandomStream, tag| {
        let adapters: Vec<Adapter> = (1..=NUM_STAGES)
            .map(|s| Adapter::new(s, random(rng, h, d), random(rng, d, h)).unwrap())
            .collect();
        AdapterSet::new(tag, adapters.try_into().unwrap()).unwrap()
    };
    let mut bank = AdapterBank::new(independent(&mut rng, SetTag::Base));
    for t in 1..=2 {
        bank.push_task(independent(&mut rng, SetTag::Task(t)))?;
    }
    let merged = bank.average()?;
    let gap = merged
        .stage(1)
        .forward(&features)?
        .sub(&mean_of_forwards(&bank, &features))?;
    let scale = mean_of_forwards(&bank, &features).frobenius_norm();
    println!(
        "independent sets: relative gap {:.3}",
        gap.frobenius_norm() / scale
    );

    let shared_w1 = random(&mut rng, h, d);
    let set = |rng: &mut RandomStream, tag| {
        let adapters: Vec<Adapter> = (1..=NUM_STAGES)
            .map(|s| Adapter::new(s, shared_w1.clone(), random(rng, d, h)).unwrap())
            .collect();
        AdapterSet::new(tag, adapters.try_into().unwrap()).unwrap()
    };
    let mut shared = AdapterBank::new(set(&mut rng, SetTag::Base));
    shared.push_task(set(&mut rng, SetTag::Task(1)))?;
    let gap = shared
        .average()?
        .stage(1)
        .forward(&features)?
        .sub(&mean_of_forwards(&shared, &features))?;
    println!(
        "shared W1:        absolute gap {:.3e}",
        gap.frobenius_norm()
    );

    let blended = residual_blend(&features, &merged.stage(1).forward(&features)?, 0.9)?;
    println!("blended features: {} x {}", blended.rows(), blended.cols());
    Ok(())
}
