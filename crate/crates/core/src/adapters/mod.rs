//! Per-stage bottleneck adapters, residual blending, noise-driven anomaly
//! synthesis, and task-wise adapter banks averaged at inference.

mod checkpoint;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{matmul_bt, Mat, RandomStream};
use crate::NUM_STAGES;

pub use checkpoint::{decode_bank, encode_bank, read_bank, write_bank, BANK_MAGIC};

/// Two linear maps `d → h → d` attached to one encoder stage (1-based index).
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    pub stage: usize,
    /// `h × d`
    pub w1: Mat,
    /// `d × h`
    pub w2: Mat,
}

/// Bottleneck width for a stage of dimension `d`: `d / 4`, at least 1.
pub fn hidden_width(d: usize) -> usize {
    (d / 4).max(1)
}

impl Adapter {
    pub fn new(stage: usize, w1: Mat, w2: Mat) -> Result<Self> {
        if !(1..=NUM_STAGES).contains(&stage) {
            return Err(Error::contract(format!(
                "stage index {stage} outside 1..=4"
            )));
        }
        let (h, d) = w1.shape();
        if h == 0 || d == 0 || w2.shape() != (d, h) {
            return Err(Error::contract(format!(
                "adapter shapes w1 {h}x{d}, w2 {}x{} are inconsistent",
                w2.rows(),
                w2.cols()
            )));
        }
        if !w1.is_finite() || !w2.is_finite() {
            return Err(Error::contract("adapter weights must be finite"));
        }
        Ok(Adapter { stage, w1, w2 })
    }

    /// Random init: `w1 ~ U(±1/√d)`, `w2 ~ U(±1e-3/√h)`, so the adapter starts
    /// close to the zero map.
    pub fn init(stage: usize, d: usize, h: usize, rng: &mut RandomStream) -> Result<Self> {
        if d == 0 || h == 0 {
            return Err(Error::contract("adapter dims must be at least 1"));
        }
        let b1 = 1.0 / (d as f64).sqrt();
        let b2 = 1e-3 / (h as f64).sqrt();
        let w1 = (0..h * d).map(|_| rng.uniform_in(-b1, b1)).collect();
        let w2 = (0..d * h).map(|_| rng.uniform_in(-b2, b2)).collect();
        Adapter::new(stage, Mat::from_vec(h, d, w1)?, Mat::from_vec(d, h, w2)?)
    }

    pub fn dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    /// `(w2 · (w1 · Fᵀ))ᵀ` for `F` of shape `G × d`.
    pub fn forward(&self, features: &Mat) -> Result<Mat> {
        Ok(self.forward_with_hidden(features)?.1)
    }

    /// Also returns the `G × h` bottleneck activations, needed by backprop.
    pub fn forward_with_hidden(&self, features: &Mat) -> Result<(Mat, Mat)> {
        if features.cols() != self.dim() {
            return Err(Error::contract(format!(
                "stage {} adapter expects d={}, got {}",
                self.stage,
                self.dim(),
                features.cols()
            )));
        }
        let hidden = matmul_bt(features, &self.w1)?;
        let out = matmul_bt(&hidden, &self.w2)?;
        Ok((hidden, out))
    }
}

/// `alpha·F + (1 − alpha)·AF`, elementwise.
pub fn residual_blend(features: &Mat, adapted: &Mat, alpha: f64) -> Result<Mat> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        features.ensure_same_shape(adapted)?;
        return Ok(features.clone());
    }
    features.zip_with(adapted, |f, a| alpha * f + (1.0 - alpha) * a)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Residual ratio and relative noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            alpha: 0.9,
            beta: 1.0,
        }
    }
}

impl BlendConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::contract(format!(
                "beta {} must be nonnegative",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Gaussian noise for the synthetic branch: i.i.d. over the whole grid with
/// std `beta × std(F)`. `None` when that std is zero.
pub fn draw_noise(features: &Mat, rng: &mut RandomStream, beta: f64) -> Result<Option<Mat>> {
    if !(beta >= 0.0) {
        return Err(Error::contract(format!("beta {beta} must be nonnegative")));
    }
    let sigma = beta * features.mean_std().1;
    if sigma == 0.0 {
        return Ok(None);
    }
    let noise = rng.gaussian_of(features.len(), sigma)?;
    Ok(Some(Mat::from_vec(
        features.rows(),
        features.cols(),
        noise,
    )?))
}

/// Synthetic anomaly features `A(F + γ)`. With `beta == 0` this is exactly `A(F)`.
pub fn synthesize_anomaly(
    adapter: &Adapter,
    features: &Mat,
    rng: &mut RandomStream,
    beta: f64,
) -> Result<Mat> {
    match draw_noise(features, rng, beta)? {
        Some(noise) => adapter.forward(&features.add(&noise)?),
        None => adapter.forward(features),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetTag {
    Base,
    Task(u32),
    Average,
}

impl SetTag {
    /// Label used to derive per-set random streams.
    pub fn label(self) -> String {
        match self {
            SetTag::Base => "base".into(),
            SetTag::Task(n) => format!("task_{n}"),
            SetTag::Average => "average".into(),
        }
    }
}

/// One adapter per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterSet {
    pub tag: SetTag,
    pub adapters: [Adapter; NUM_STAGES],
}

impl AdapterSet {
    pub fn new(tag: SetTag, adapters: [Adapter; NUM_STAGES]) -> Result<Self> {
        for (i, a) in adapters.iter().enumerate() {
            if a.stage != i + 1 {
                return Err(Error::contract(format!(
                    "adapter in slot {} has stage index {}",
                    i + 1,
                    a.stage
                )));
            }
        }
        Ok(AdapterSet { tag, adapters })
    }

    /// Fresh set with `h = hidden_width(d)` per stage.
    pub fn init(tag: SetTag, dims: [usize; NUM_STAGES], rng: &mut RandomStream) -> Result<Self> {
        let mut adapters = Vec::with_capacity(NUM_STAGES);
        for (i, &d) in dims.iter().enumerate() {
            adapters.push(Adapter::init(i + 1, d, hidden_width(d), rng)?);
        }
        AdapterSet::new(tag, adapters.try_into().expect("four adapters"))
    }

    pub fn dims(&self) -> [usize; NUM_STAGES] {
        std::array::from_fn(|i| self.adapters[i].dim())
    }

    pub fn hidden_widths(&self) -> [usize; NUM_STAGES] {
        std::array::from_fn(|i| self.adapters[i].hidden())
    }

    pub fn stage(&self, stage: usize) -> &Adapter {
        &self.adapters[stage - 1]
    }

    fn shape_compatible(&self, other: &AdapterSet) -> bool {
        self.dims() == other.dims() && self.hidden_widths() == other.hidden_widths()
    }
}

/// Base adapter set plus one set per completed task, in training order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterBank {
    pub base: AdapterSet,
    pub tasks: Vec<AdapterSet>,
}

impl AdapterBank {
    pub fn new(base: AdapterSet) -> Self {
        AdapterBank {
            base,
            tasks: Vec::new(),
        }
    }

    pub fn push_task(&mut self, set: AdapterSet) -> Result<()> {
        if !self.base.shape_compatible(&set) {
            return Err(Error::contract(
                "task adapter set is not shape-compatible with the bank",
            ));
        }
        self.tasks.push(set);
        Ok(())
    }

    pub fn len(&self) -> usize {
        1 + self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sets(&self) -> impl Iterator<Item = &AdapterSet> {
        std::iter::once(&self.base).chain(&self.tasks)
    }

    /// Elementwise mean of every set's weights, per stage:
    /// `A_avg = (A_base + Σ A_task) / (N + 1)`, summed base first then tasks in
    /// order. With no tasks the base set is returned unchanged.
    pub fn average(&self) -> Result<AdapterSet> {
        if self.tasks.is_empty() {
            return Ok(self.base.clone());
        }
        if let Some(bad) = self
            .tasks
            .iter()
            .position(|t| !self.base.shape_compatible(t))
        {
            return Err(Error::contract(format!(
                "task set {} is not shape-compatible with the base set",
                bad + 1
            )));
        }
        let count = self.len() as f64;
        let mut adapters = Vec::with_capacity(NUM_STAGES);
        for s in 0..NUM_STAGES {
            let mut w1 = self.base.adapters[s].w1.clone();
            let mut w2 = self.base.adapters[s].w2.clone();
            for t in &self.tasks {
                w1.add_assign(&t.adapters[s].w1)?;
                w2.add_assign(&t.adapters[s].w2)?;
            }
            adapters.push(Adapter::new(
                s + 1,
                w1.scale(1.0 / count),
                w2.scale(1.0 / count),
            )?);
        }
        AdapterSet::new(SetTag::Average, adapters.try_into().expect("four adapters"))
    }
}

/// Convenience wrapper for [`AdapterBank::average`].
pub fn average_bank(bank: &AdapterBank) -> Result<AdapterSet> {
    bank.average()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_mat(rng: &mut RandomStream, r: usize, c: usize) -> Mat {
        Mat::from_vec(
            r,
            c,
            (0..r * c).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
        )
        .unwrap()
    }

    fn rand_set(rng: &mut RandomStream, tag: SetTag, d: usize, h: usize) -> AdapterSet {
        let adapters = std::array::from_fn(|i| {
            Adapter::new(i + 1, rand_mat(rng, h, d), rand_mat(rng, d, h)).unwrap()
        });
        AdapterSet::new(tag, adapters).unwrap()
    }

    #[test]
    fn zero_w2_gives_zero_output() {
        let mut rng = RandomStream::new(1);
        let a = Adapter::new(1, rand_mat(&mut rng, 2, 3), Mat::zeros(3, 2)).unwrap();
        let out = a.forward(&rand_mat(&mut rng, 4, 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_weights_pass_through() {
        let mut rng = RandomStream::new(2);
        let a = Adapter::new(2, Mat::identity(3), Mat::identity(3)).unwrap();
        let f = rand_mat(&mut rng, 5, 3);
        assert_eq!(a.forward(&f).unwrap(), f);
    }

    #[test]
    fn small_integer_case() {
        // G=2, d=3, h=2.
        let w1 = Mat::from_rows(&[&[1.0, 0.0, 2.0], &[0.0, 1.0, -1.0]]);
        let w2 = Mat::from_rows(&[&[1.0, 1.0], &[2.0, 0.0], &[0.0, -1.0]]);
        let f = Mat::from_rows(&[&[1.0, 2.0, 3.0], &[-1.0, 0.0, 1.0]]);
        let a = Adapter::new(1, w1.clone(), w2.clone()).unwrap();
        // Oracle: out[g][i] = Σ_j w2[i][j] Σ_k w1[j][k] f[g][k]
        let mut expected = Mat::zeros(2, 3);
        for g in 0..2 {
            for i in 0..3 {
                let mut s = 0.0;
                for j in 0..2 {
                    let mut hj = 0.0;
                    for k in 0..3 {
                        hj += w1.get(j, k) * f.get(g, k);
                    }
                    s += w2.get(i, j) * hj;
                }
                expected.set(g, i, s);
            }
        }
        // Row 0: hidden = [7, -1] -> [6, 14, 1]; row 1: hidden = [1, -1] -> [0, 2, 1].
        assert_eq!(
            expected,
            Mat::from_rows(&[&[6.0, 14.0, 1.0], &[0.0, 2.0, 1.0]])
        );
        assert_eq!(a.forward(&f).unwrap(), expected);
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let a = Adapter::new(1, Mat::zeros(1, 3), Mat::zeros(3, 1)).unwrap();
        assert!(a.forward(&Mat::zeros(2, 4)).is_err());
        assert!(Adapter::new(5, Mat::zeros(1, 3), Mat::zeros(3, 1)).is_err());
        assert!(Adapter::new(1, Mat::zeros(1, 3), Mat::zeros(1, 3)).is_err());
    }

    #[test]
    fn blend_cases() {
        let f = Mat::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let zero = Mat::zeros(2, 2);
        assert_eq!(residual_blend(&f, &zero, 1.0).unwrap(), f);
        assert_eq!(residual_blend(&f, &zero, 0.9).unwrap(), f.scale(0.9));
        let mid = residual_blend(&Mat::filled(1, 1, 2.0), &Mat::filled(1, 1, 4.0), 0.5).unwrap();
        assert_eq!(mid.get(0, 0), 3.0);
        assert!(residual_blend(&f, &zero, 1.5).is_err());
        assert!(residual_blend(&f, &Mat::zeros(1, 2), 0.9).is_err());
    }

    #[test]
    fn synthesis_beta_zero_is_plain_forward() {
        let mut rng = RandomStream::new(3);
        let a = Adapter::init(1, 6, 2, &mut rng).unwrap();
        let f = rand_mat(&mut rng, 4, 6);
        let mut noise_rng = RandomStream::new(4);
        assert_eq!(
            synthesize_anomaly(&a, &f, &mut noise_rng, 0.0).unwrap(),
            a.forward(&f).unwrap()
        );
        assert_eq!(noise_rng.counter(), 0);
    }

    #[test]
    fn synthesis_is_reproducible_and_linear() {
        let mut rng = RandomStream::new(5);
        let a = Adapter::new(1, rand_mat(&mut rng, 3, 6), rand_mat(&mut rng, 6, 3)).unwrap();
        let f = rand_mat(&mut rng, 4, 6);
        let s1 = synthesize_anomaly(&a, &f, &mut RandomStream::new(9), 1.0).unwrap();
        let s2 = synthesize_anomaly(&a, &f, &mut RandomStream::new(9), 1.0).unwrap();
        assert_eq!(s1, s2);
        let noise = draw_noise(&f, &mut RandomStream::new(9), 1.0)
            .unwrap()
            .unwrap();
        let lhs = s1.sub(&a.forward(&f).unwrap()).unwrap();
        let rhs = a.forward(&noise).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn noise_scale_tracks_feature_std() {
        let mut rng = RandomStream::new(6);
        let f = Mat::from_vec(
            100,
            50,
            (0..5000).map(|_| 3.0 * rng.uniform_in(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let noise = draw_noise(&f, &mut RandomStream::new(1), 0.5)
            .unwrap()
            .unwrap();
        let (_, fs) = f.mean_std();
        let (_, ns) = noise.mean_std();
        assert!((ns / fs - 0.5).abs() < 0.02);
        assert!(draw_noise(&Mat::filled(3, 3, 1.0), &mut rng, 1.0)
            .unwrap()
            .is_none());
    }

    #[test]
    fn init_ranges_and_magnitude() {
        let a = Adapter::init(1, 1, 1, &mut RandomStream::new(1)).unwrap();
        assert!(a.w1.get(0, 0).abs() <= 1.0);
        assert!(a.w2.get(0, 0).abs() <= 1e-3);
        let b = Adapter::init(1, 1, 1, &mut RandomStream::new(1)).unwrap();
        assert_eq!(a, b);

        let mut rng = RandomStream::new(2);
        for &d in &[4usize, 16, 64] {
            let a = Adapter::init(1, d, hidden_width(d), &mut rng).unwrap();
            let f = Mat::from_vec(32, d, rng.gaussian_of(32 * d, 1.0).unwrap()).unwrap();
            let out = a.forward(&f).unwrap();
            assert!(out.frobenius_norm() <= 1e-2 * f.frobenius_norm());
        }
    }

    #[test]
    fn average_with_no_tasks_is_base() {
        let mut rng = RandomStream::new(7);
        let base = rand_set(&mut rng, SetTag::Base, 4, 2);
        let bank = AdapterBank::new(base.clone());
        assert_eq!(average_bank(&bank).unwrap(), base);
    }

    #[test]
    fn average_hand_case_and_equal_sets() {
        let one = |v: f64| Adapter::new(1, Mat::filled(1, 1, v), Mat::filled(1, 1, v)).unwrap();
        let set = |v: f64, tag| {
            let mut adapters: [Adapter; 4] = std::array::from_fn(|_| one(v));
            for (i, a) in adapters.iter_mut().enumerate() {
                a.stage = i + 1;
            }
            AdapterSet::new(tag, adapters).unwrap()
        };
        let mut bank = AdapterBank::new(set(2.0, SetTag::Base));
        bank.push_task(set(4.0, SetTag::Task(1))).unwrap();
        let avg = bank.average().unwrap();
        assert!(avg
            .adapters
            .iter()
            .all(|a| a.w1.get(0, 0) == 3.0 && a.w2.get(0, 0) == 3.0));

        let mut same = AdapterBank::new(set(0.5, SetTag::Base));
        same.push_task(set(0.5, SetTag::Task(1))).unwrap();
        same.push_task(set(0.5, SetTag::Task(2))).unwrap();
        let avg = same.average().unwrap();
        assert!(avg.adapters.iter().all(|a| a.w1.get(0, 0) == 0.5));
    }

    #[test]
    fn push_rejects_incompatible_set() {
        let mut rng = RandomStream::new(8);
        let mut bank = AdapterBank::new(rand_set(&mut rng, SetTag::Base, 4, 2));
        assert!(bank
            .push_task(rand_set(&mut rng, SetTag::Task(1), 4, 1))
            .is_err());
    }
}
