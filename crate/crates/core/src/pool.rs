//! Consensus aggregation against a reference pool.
//!
//! The pool holds, for a set of training pixels, the vector of machine
//! outputs on a noisy training image together with the clean intensity at
//! that pixel. A pixel `p` of a new image is estimated as the mean clean
//! intensity over the pool entries whose machine vectors agree with the
//! machine vector at `p` (same consensus rule as the window mode):
//!
//! ```text
//! f(p) = sum_q w(p, q) y(q) / sum_q w(p, q),   q in pool
//! ```
//!
//! Unlike the window mode, `p` is not part of the pool, so the set of
//! agreeing entries can be empty. Such pixels fall back to the plain mean
//! of the machine outputs at `p`.

use rand::seq::index;
use rayon::prelude::*;

use crate::aggregate::{aggregate_image, count_agreeing, CobraParams, MachineOutputs, Window};
use crate::error::{Error, Result};
use crate::filters::{apply_bank, FilterBank};
use crate::image::{clamp, Image};
use crate::noise::rng_from_seed;

/// Training pixels: machine vectors and their clean intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePool {
    machines: usize,
    /// Row-major `len x machines` matrix of machine outputs.
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl ReferencePool {
    /// Pool from precomputed machine outputs and the matching clean images.
    pub fn from_outputs(entries: &[(MachineOutputs, Image)]) -> Result<Self> {
        let (first, _) = entries
            .first()
            .ok_or_else(|| Error::EmptyInput("reference pool needs at least one training pair".into()))?;
        let machines = first.machines();
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for (outs, clean) in entries {
            if outs.machines() != machines {
                return Err(Error::InvalidParameter(format!(
                    "training pair has {} machines, expected {machines}",
                    outs.machines()
                )));
            }
            outs.outputs()[0].ensure_same_dims(clean)?;
            for idx in 0..clean.len() {
                features.extend_from_slice(outs.at(idx));
                targets.push(clean.data()[idx]);
            }
        }
        Ok(Self { machines, features, targets })
    }

    /// Run `bank` on every noisy training image and pool the results.
    pub fn build(bank: &FilterBank, pairs: &[(Image, Image)]) -> Result<Self> {
        let entries = pairs
            .iter()
            .map(|(noisy, clean)| Ok((MachineOutputs::new(apply_bank(bank, noisy)?)?, clean.clone())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_outputs(&entries)
    }

    /// Keep at most `max_len` entries, drawn uniformly without replacement.
    /// Kept entries stay in their original order.
    pub fn subsample(self, max_len: usize, seed: u64) -> Self {
        if self.len() <= max_len {
            return self;
        }
        let mut rng = rng_from_seed(seed);
        let mut keep = index::sample(&mut rng, self.len(), max_len).into_vec();
        keep.sort_unstable();
        let m = self.machines;
        let mut features = Vec::with_capacity(max_len * m);
        let mut targets = Vec::with_capacity(max_len);
        for i in keep {
            features.extend_from_slice(&self.features[i * m..(i + 1) * m]);
            targets.push(self.targets[i]);
        }
        Self { machines: m, features, targets }
    }

    pub fn machines(&self) -> usize {
        self.machines
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn entry(&self, i: usize) -> (&[f64], f64) {
        let m = self.machines;
        (&self.features[i * m..(i + 1) * m], self.targets[i])
    }
}

/// Per-pixel vote histograms of one image against a pool at a fixed
/// `epsilon`. Any vote threshold can be read off without another pass.
#[derive(Debug, Clone)]
pub struct PoolSweep {
    width: usize,
    height: usize,
    machines: usize,
    /// `(machines + 1)` bins per pixel: sum of targets and entry count for
    /// entries with exactly that many agreeing machines.
    sums: Vec<f64>,
    counts: Vec<u32>,
    fallback: Vec<f64>,
}

impl PoolSweep {
    pub fn new(pool: &ReferencePool, outs: &MachineOutputs, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        if pool.is_empty() {
            return Err(Error::EmptyInput("reference pool is empty".into()));
        }
        let m = outs.machines();
        if pool.machines() != m {
            return Err(Error::InvalidParameter(format!(
                "pool built for {} machines, image has {m}",
                pool.machines()
            )));
        }
        let (width, height) = outs.dims();
        let bins = m + 1;
        let per_row: Vec<(Vec<f64>, Vec<u32>)> = (0..height)
            .into_par_iter()
            .map(|row| {
                let mut sums = vec![0.0; width * bins];
                let mut counts = vec![0u32; width * bins];
                for col in 0..width {
                    let here = outs.at(row * width + col);
                    let s = &mut sums[col * bins..(col + 1) * bins];
                    let c = &mut counts[col * bins..(col + 1) * bins];
                    for (feat, &y) in pool.features.chunks_exact(m).zip(&pool.targets) {
                        let k = count_agreeing(here, feat, epsilon);
                        s[k] += y;
                        c[k] += 1;
                    }
                }
                (sums, counts)
            })
            .collect();
        let mut sums = Vec::with_capacity(width * height * bins);
        let mut counts = Vec::with_capacity(width * height * bins);
        for (s, c) in per_row {
            sums.extend(s);
            counts.extend(c);
        }
        let fallback = (0..width * height)
            .map(|idx| outs.at(idx).iter().sum::<f64>() / m as f64)
            .collect();
        Ok(Self { width, height, machines: m, sums, counts, fallback })
    }

    /// Aggregate for a vote threshold `need` (at least one machine).
    pub fn image(&self, need: usize) -> Image {
        let need = need.clamp(1, self.machines);
        let bins = self.machines + 1;
        let data = (0..self.width * self.height)
            .map(|idx| {
                let s = &self.sums[idx * bins..(idx + 1) * bins];
                let c = &self.counts[idx * bins..(idx + 1) * bins];
                let mut sum = 0.0;
                let mut n = 0u64;
                for k in (need..bins).rev() {
                    sum += s[k];
                    n += u64::from(c[k]);
                }
                if n == 0 {
                    self.fallback[idx]
                } else {
                    sum / n as f64
                }
            })
            .collect();
        clamp(&Image::from_vec(self.width, self.height, data).expect("sweep dims"))
    }

    /// Pixels with no agreeing pool entry at threshold `need`.
    pub fn uncovered(&self, need: usize) -> usize {
        let need = need.clamp(1, self.machines);
        let bins = self.machines + 1;
        (0..self.width * self.height)
            .filter(|idx| self.counts[idx * bins + need..(idx + 1) * bins].iter().all(|&c| c == 0))
            .count()
    }
}

/// Pool-mode aggregation of one image.
pub fn aggregate_from_pool(pool: &ReferencePool, outs: &MachineOutputs, params: &CobraParams) -> Result<Image> {
    params.validate()?;
    let sweep = PoolSweep::new(pool, outs, params.epsilon)?;
    Ok(sweep.image(params.alpha.required_votes(outs.machines())))
}

/// How machine vectors are turned into an estimate.
#[derive(Debug, Clone)]
pub enum Aggregator {
    /// Average noisy intensities over the consensus set inside a window of
    /// the image itself.
    Local,
    /// Average clean training intensities over the consensus set of a
    /// reference pool.
    Reference(ReferencePool),
}

impl Aggregator {
    pub fn name(&self) -> &'static str {
        match self {
            Aggregator::Local => "local",
            Aggregator::Reference(_) => "reference",
        }
    }

    pub fn aggregate(&self, noisy: &Image, outs: &MachineOutputs, params: &CobraParams) -> Result<Image> {
        match self {
            Aggregator::Local => aggregate_image(noisy, outs, params, None),
            Aggregator::Reference(pool) => {
                noisy.ensure_same_dims(&outs.outputs()[0])?;
                aggregate_from_pool(pool, outs, params)
            }
        }
    }

    /// Aggregates for several vote thresholds at one `epsilon`, in the order
    /// of `needs`. Each image equals what [`Aggregator::aggregate`] returns
    /// for the same threshold.
    pub fn sweep(
        &self,
        noisy: &Image,
        outs: &MachineOutputs,
        base: &CobraParams,
        needs: &[usize],
    ) -> Result<Vec<Image>> {
        match self {
            Aggregator::Local => needs
                .iter()
                .map(|&need| {
                    let params = CobraParams {
                        alpha: crate::aggregate::Alpha::new(need as u64, outs.machines() as u64)?,
                        ..*base
                    };
                    aggregate_image(noisy, outs, &params, None)
                })
                .collect(),
            Aggregator::Reference(pool) => {
                base.validate()?;
                noisy.ensure_same_dims(&outs.outputs()[0])?;
                let sweep = PoolSweep::new(pool, outs, base.epsilon)?;
                Ok(needs.iter().map(|&need| sweep.image(need)).collect())
            }
        }
    }
}

/// Window used by pool-mode parameters; the pool ignores it.
pub const POOL_WINDOW: Window = Window::Full;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::Alpha;
    use crate::filters::DenoiseFilter;

    fn outs_of(images: Vec<Image>) -> MachineOutputs {
        MachineOutputs::new(images).unwrap()
    }

    fn row(values: &[f64]) -> Image {
        Image::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn identity_machine_recovers_clean_lookup() {
        // Training: noisy value 0.2 always means clean 0.25, 0.8 means 0.75.
        let noisy = row(&[0.2, 0.8, 0.2, 0.8]);
        let clean = row(&[0.25, 0.75, 0.25, 0.75]);
        let pool = ReferencePool::from_outputs(&[(outs_of(vec![noisy]), clean)]).unwrap();
        let test = outs_of(vec![row(&[0.8, 0.2])]);
        let params = CobraParams::new(0.01, Alpha::new(1, 1).unwrap(), POOL_WINDOW).unwrap();
        let out = aggregate_from_pool(&pool, &test, &params).unwrap();
        assert_eq!(out.data(), &[0.75, 0.25]);
    }

    #[test]
    fn empty_consensus_falls_back_to_machine_mean() {
        let pool = ReferencePool::from_outputs(&[(outs_of(vec![row(&[0.0]), row(&[0.0])]), row(&[0.0]))]).unwrap();
        let test = outs_of(vec![row(&[0.6]), row(&[0.8])]);
        let params = CobraParams::new(0.1, Alpha::new(1, 2).unwrap(), POOL_WINDOW).unwrap();
        let sweep = PoolSweep::new(&pool, &test, 0.1).unwrap();
        assert_eq!(sweep.uncovered(1), 1);
        let out = aggregate_from_pool(&pool, &test, &params).unwrap();
        assert!((out.data()[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn vote_threshold_selects_entries() {
        // Against (0.5, 0.5): entry 0 = (0.5, 0.9) gets one vote, entry 1 =
        // (0.5, 0.5) gets two.
        let feats = vec![row(&[0.5, 0.5]), row(&[0.9, 0.5])];
        let pool = ReferencePool::from_outputs(&[(outs_of(feats), row(&[0.1, 0.3]))]).unwrap();
        let test = outs_of(vec![row(&[0.5]), row(&[0.5])]);
        let sweep = PoolSweep::new(&pool, &test, 0.05).unwrap();
        assert!((sweep.image(1).data()[0] - 0.2).abs() < 1e-15);
        assert_eq!(sweep.image(2).data()[0], 0.3);
    }

    #[test]
    fn sweep_matches_single_aggregation_bitwise() {
        let clean = crate::scene::scene_variant(24, 3);
        let noisy = clean.map(|v| (v * 7.0).sin().abs());
        let bank = FilterBank::new(vec![
            DenoiseFilter::identity(),
            DenoiseFilter::median(3),
            DenoiseFilter::new("gaussian", crate::FilterKind::Gaussian { sigma: 1.0 }).unwrap(),
        ])
        .unwrap();
        let pool = ReferencePool::build(&bank, &[(noisy.clone(), clean.clone())]).unwrap().subsample(200, 5);
        assert_eq!(pool.len(), 200);
        let test_noisy = crate::scene::scene_variant(24, 4);
        let outs = MachineOutputs::new(apply_bank(&bank, &test_noisy).unwrap()).unwrap();
        let agg = Aggregator::Reference(pool);
        let base = CobraParams::new(0.05, Alpha::new(1, 1).unwrap(), POOL_WINDOW).unwrap();
        let swept = agg.sweep(&test_noisy, &outs, &base, &[1, 2, 3]).unwrap();
        for (need, img) in (1..=3).zip(&swept) {
            let params = CobraParams { alpha: Alpha::new(need, 3).unwrap(), ..base };
            assert_eq!(&agg.aggregate(&test_noisy, &outs, &params).unwrap(), img);
        }
    }

    #[test]
    fn local_sweep_matches_window_aggregation() {
        let noisy = crate::scene::scene_variant(12, 9);
        let bank = FilterBank::new(vec![DenoiseFilter::identity(), DenoiseFilter::median(3)]).unwrap();
        let outs = MachineOutputs::new(apply_bank(&bank, &noisy).unwrap()).unwrap();
        let base = CobraParams::new(0.1, Alpha::new(1, 1).unwrap(), Window::Radius(3)).unwrap();
        let swept = Aggregator::Local.sweep(&noisy, &outs, &base, &[1, 2]).unwrap();
        let direct = aggregate_image(&noisy, &outs, &CobraParams { alpha: Alpha::new(1, 2).unwrap(), ..base }, None).unwrap();
        assert_eq!(swept[0], direct);
    }

    #[test]
    fn subsample_is_seeded_and_bounded() {
        let img = crate::scene::scene_variant(16, 1);
        let pool = ReferencePool::from_outputs(&[(outs_of(vec![img.clone()]), img)]).unwrap();
        let a = pool.clone().subsample(50, 7);
        let b = pool.clone().subsample(50, 7);
        let c = pool.clone().subsample(50, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(pool.clone().subsample(10_000, 1), pool);
    }

    #[test]
    fn mismatched_machine_counts_rejected() {
        let pool = ReferencePool::from_outputs(&[(outs_of(vec![row(&[0.0])]), row(&[0.0]))]).unwrap();
        let test = outs_of(vec![row(&[0.0]), row(&[0.0])]);
        assert!(PoolSweep::new(&pool, &test, 0.1).is_err());
        assert!(ReferencePool::from_outputs(&[]).is_err());
    }
}
