//! Training one adapter set on a generated class and checking the analytic
//! gradient against central differences.

use continual_ad::adapters::SetTag;
use continual_ad::harness::{synth_classes, synth_text_bank, SynthSpec};
use continual_ad::numcore::RandomStream;
use continual_ad::training::{
    draw_sample_noise, loss_log_csv, sample_loss_and_grad, train_adapter_set, TrainConfig,
};

fn main() -> continual_ad::Result<()> {
    let spec = SynthSpec {
        n_classes: 1,
        ..SynthSpec::default()
    };
    let class = synth_classes(&spec)?.remove(0);
    let text = synth_text_bank(spec.dim)?;
    let samples: Vec<_> = class
        .train_normals
        .iter()
        .chain(&class.train_anomalies)
        .cloned()
        .collect();

    let cfg = TrainConfig {
        seed: 5,
        ..TrainConfig::default()
    };
    let tau = 0.07;
    let outcome = train_adapter_set(&samples, &text, &cfg, tau, 30, SetTag::Base)?;
    let log = loss_log_csv(&outcome.log);
    for line in log.lines().step_by(10) {
        println!("{line}");
    }

    // One weight, perturbed both ways, against the analytic derivative.
    let sample = &samples[0];
    let noise = draw_sample_noise(sample, cfg.beta, &mut RandomStream::new(1))?;
    let (_, grad) = sample_loss_and_grad(sample, &outcome.set, &text, &cfg, tau, &noise)?;
    let step = 1e-5;
    let loss_at = |delta: f64| {
        let mut set = outcome.set.clone();
        set.adapters[0].w2.data_mut()[0] += delta;
        sample_loss_and_grad(sample, &set, &text, &cfg, tau, &noise).map(|(b, _)| b.l_total)
    };
    let numeric = (loss_at(step)? - loss_at(-step)?) / (2.0 * step);
    println!(
        "dL/dW2[0,0]: analytic {:.8} numeric {:.8}",
        grad.dw2[0].data()[0],
        numeric
    );
    Ok(())
}
