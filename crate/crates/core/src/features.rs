//! Frozen layer features: the per-layer hidden-state stack of a speech
//! encoder, softmax-weighted layer aggregation, and mean pooling.

use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstk::{self, FiniteCheck, RawLstk};

/// Stride of common self-supervised speech encoders (20 ms hop).
pub const DEFAULT_FRAME_RATE: f32 = 50.0;

/// `L x T x D` hidden states, one `T x D` matrix per encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    data: Array3<f32>,
    frame_rate: f32,
}

impl LayerStack {
    pub fn new(data: Array3<f32>, frame_rate: f32) -> Result<Self> {
        let (l, t, d) = data.dim();
        if l == 0 || t == 0 || d == 0 {
            return Err(Error::DimensionMismatch(format!(
                "layer stack needs L, T, D >= 1, got {l}x{t}x{d}"
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::Validation(format!("frame_rate must be > 0, got {frame_rate}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(Self { data, frame_rate })
    }

    pub fn layers(&self) -> usize {
        self.data.dim().0
    }

    pub fn frames(&self) -> usize {
        self.data.dim().1
    }

    pub fn dim(&self) -> usize {
        self.data.dim().2
    }

    pub fn frame_rate(&self) -> f32 {
        self.frame_rate
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    /// Per-layer time average, `L x D`.
    ///
    /// Mean pooling is linear, so pooling the weighted sum equals the
    /// weighted sum of these layer means.
    pub fn layer_means(&self) -> Array2<f64> {
        let t = self.frames() as f64;
        let mut out = Array2::<f64>::zeros((self.layers(), self.dim()));
        for ((l, _, d), &v) in self.data.indexed_iter() {
            out[[l, d]] += v as f64;
        }
        out.mapv_inplace(|v| v / t);
        out
    }
}

pub fn read_layerstack(path: impl AsRef<Path>) -> Result<LayerStack> {
    let raw = lstk::read_file(path.as_ref(), FiniteCheck::Strict)?;
    if raw.version != lstk::VERSION_FEATURES {
        return Err(Error::UnsupportedVersion(raw.version));
    }
    let data = Array3::from_shape_vec((raw.layers, raw.frames, raw.dim), raw.data)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    LayerStack::new(data, raw.frame_rate)
}

pub fn write_layerstack(stack: &LayerStack, path: impl AsRef<Path>) -> Result<()> {
    let raw = RawLstk {
        version: lstk::VERSION_FEATURES,
        layers: stack.layers(),
        frames: stack.frames(),
        dim: stack.dim(),
        frame_rate: stack.frame_rate,
        data: stack.data.iter().copied().collect(),
    };
    lstk::write_file(path.as_ref(), &raw)
}

/// Unconstrained per-layer logits; the mixing weights are their softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights {
    pub logits: Vec<f64>,
}

impl AggregationWeights {
    pub fn uniform(layers: usize) -> Self {
        Self {
            logits: vec![0.0; layers],
        }
    }

    pub fn from_logits(logits: Vec<f64>) -> Self {
        Self { logits }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.logits)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `out[t, d] = sum_l softmax(w)[l] * stack[l, t, d]`.
pub fn weighted_sum(stack: &LayerStack, weights: &AggregationWeights) -> Result<Array2<f64>> {
    if weights.len() != stack.layers() {
        return Err(Error::LayerCountMismatch {
            weights: weights.len(),
            layers: stack.layers(),
        });
    }
    let w = weights.weights();
    let mut out = Array2::<f64>::zeros((stack.frames(), stack.dim()));
    for (l, layer) in stack.data.axis_iter(Axis(0)).enumerate() {
        out.zip_mut_with(&layer, |o, &x| *o += w[l] * x as f64);
    }
    Ok(out)
}

/// Average over frames: `T x D -> D`.
pub fn mean_pool(features: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    features.mean_axis(Axis(0)).ok_or(Error::EmptyInput)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stack(rng: &mut ChaCha8Rng, l: usize, t: usize, d: usize) -> LayerStack {
        let data = Array::from_shape_fn((l, t, d), |_| rng.gen_range(-2.0f32..2.0));
        LayerStack::new(data, DEFAULT_FRAME_RATE).unwrap()
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.lstk");
        let stack = LayerStack::new(Array3::zeros((2, 3, 4)), 50.0).unwrap();
        write_layerstack(&stack, &path).unwrap();
        assert_eq!(read_layerstack(&path).unwrap(), stack);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stack = random_stack(&mut rng, 3, 5, 2);
        write_layerstack(&stack, &path).unwrap();
        let back = read_layerstack(&path).unwrap();
        let bits = |s: &LayerStack| s.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&stack));
    }

    #[test]
    fn short_payload_is_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.lstk");
        let raw = RawLstk {
            version: 1,
            layers: 1,
            frames: 5,
            dim: 2,
            frame_rate: 50.0,
            data: vec![0.0; 8],
        };
        std::fs::write(&path, lstk::encode(&raw)).unwrap();
        assert!(matches!(read_layerstack(&path), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn nan_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.lstk");
        let raw = RawLstk {
            version: 1,
            layers: 1,
            frames: 1,
            dim: 3,
            frame_rate: 50.0,
            data: vec![0.0, f32::NAN, 1.0],
        };
        std::fs::write(&path, lstk::encode(&raw)).unwrap();
        assert!(matches!(read_layerstack(&path), Err(Error::NonFiniteValue(1))));
    }

    #[test]
    fn uniform_weights_over_identical_layers_is_identity() {
        let x = array![[1.0f32, -2.0], [0.5, 3.0]];
        let data = ndarray::stack(Axis(0), &[x.view(), x.view(), x.view()]).unwrap();
        let stack = LayerStack::new(data, 50.0).unwrap();
        let out = weighted_sum(&stack, &AggregationWeights::uniform(3)).unwrap();
        for (o, e) in out.iter().zip(x.iter()) {
            assert!((o - *e as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logits_select_one_layer() {
        let a = array![[1.0f32, 2.0, 3.0]];
        let b = array![[-7.0f32, 8.0, 0.25]];
        let data = ndarray::stack(Axis(0), &[a.view(), b.view()]).unwrap();
        let stack = LayerStack::new(data, 50.0).unwrap();
        let out = weighted_sum(&stack, &AggregationWeights::from_logits(vec![50.0, -50.0])).unwrap();
        for (o, e) in out.iter().zip(a.iter()) {
            assert!((o - *e as f64).abs() < 1e-6);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn weighted_sum_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let stack = random_stack(&mut rng, 4, 2, 3);
            let logits: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let out = weighted_sum(&stack, &AggregationWeights::from_logits(logits.clone())).unwrap();

            let z: f64 = logits.iter().map(|v| v.exp()).sum();
            for t in 0..2 {
                for d in 0..3 {
                    let mut acc = 0.0;
                    for l in 0..4 {
                        acc += logits[l].exp() / z * stack.data()[[l, t, d]] as f64;
                    }
                    assert!((out[[t, d]] - acc).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn weighted_sum_rejects_wrong_layer_count() {
        let stack = LayerStack::new(Array3::zeros((2, 1, 1)), 50.0).unwrap();
        assert!(matches!(
            weighted_sum(&stack, &AggregationWeights::uniform(3)),
            Err(Error::LayerCountMismatch { weights: 3, layers: 2 })
        ));
    }

    #[test]
    fn mean_pool_cases() {
        let single = array![[1.5, -2.0, 4.0]];
        assert_eq!(mean_pool(single.view()).unwrap(), array![1.5, -2.0, 4.0]);
        let two = array![[1.0, 3.0], [3.0, 1.0]];
        assert_eq!(mean_pool(two.view()).unwrap(), array![2.0, 2.0]);
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(matches!(mean_pool(empty.view()), Err(Error::EmptyInput)));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Array2::from_shape_fn((7, 5), |_| rng.gen_range(-1.0..1.0));
        let pooled = mean_pool(m.view()).unwrap();
        for d in 0..5 {
            let mut acc = 0.0;
            for t in 0..7 {
                acc += m[[t, d]];
            }
            assert!((pooled[d] - acc / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_weights_normalized() {
        let w = AggregationWeights::from_logits(vec![0.3, -1.0, 2.0, 5.0]).weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shift_invariance_and_convexity(
                seed in 0u64..10_000,
                shift in -20.0f64..20.0,
                logits in proptest::collection::vec(-5.0f64..5.0, 3),
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let stack = random_stack(&mut rng, 3, 4, 2);
                let base = weighted_sum(&stack, &AggregationWeights::from_logits(logits.clone())).unwrap();
                let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
                let moved = weighted_sum(&stack, &AggregationWeights::from_logits(shifted)).unwrap();
                for (a, b) in base.iter().zip(moved.iter()) {
                    prop_assert!((a - b).abs() < 1e-6);
                }
                for t in 0..4 {
                    for d in 0..2 {
                        let col: Vec<f64> = (0..3).map(|l| stack.data()[[l, t, d]] as f64).collect();
                        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        prop_assert!(base[[t, d]] >= lo - 1e-9 && base[[t, d]] <= hi + 1e-9);
                    }
                }
            }
        }
    }
}
