//! Interval bound propagation through the main evaluator.
//!
//! Given a box over the network inputs, computes per-neuron pre-activation
//! intervals layer by layer: each pre-activation bound pairs positive
//! weights with the matching input bound and negative weights with the
//! opposite one, then hidden activations clamp at zero. The resulting
//! intervals are sound (they contain every reachable pre-activation) and
//! become the neuron-specific big-M constants of the MILP encoding.

use crate::surrogate::MlpStack;

/// Per-layer, per-neuron pre-activation intervals. The last layer is the
/// linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronBounds {
    pub pre: Vec<Vec<(f64, f64)>>,
}

impl NeuronBounds {
    pub fn output(&self) -> (f64, f64) {
        self.pre[self.pre.len() - 1][0]
    }
}

/// Propagate an input box `[(lo, hi); n_in]` through the stack.
pub fn propagate_bounds(main: &MlpStack, input_box: &[(f64, f64)]) -> NeuronBounds {
    assert_eq!(
        input_box.len(),
        main.input_dim(),
        "input box does not match network input dimension"
    );
    let mut post: Vec<(f64, f64)> = input_box.to_vec();
    let mut pre = Vec::with_capacity(main.layers.len());
    let last = main.layers.len() - 1;
    for (li, layer) in main.layers.iter().enumerate() {
        let mut layer_pre = Vec::with_capacity(layer.w.nrows());
        for r in 0..layer.w.nrows() {
            let mut lo = layer.b[r];
            let mut hi = layer.b[r];
            for c in 0..layer.w.ncols() {
                let w = layer.w[[r, c]];
                let (il, ih) = post[c];
                if w >= 0.0 {
                    lo += w * il;
                    hi += w * ih;
                } else {
                    lo += w * ih;
                    hi += w * il;
                }
            }
            layer_pre.push((lo, hi));
        }
        if li != last {
            post = layer_pre.iter().map(|&(l, h)| (l.max(0.0), h.max(0.0))).collect();
        }
        pre.push(layer_pre);
    }
    NeuronBounds { pre }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{DenseLayer, MlpStack};
    use ndarray::{arr1, arr2};

    #[test]
    fn single_neuron_identity_interval() {
        let main = MlpStack {
            layers: vec![DenseLayer {
                w: arr2(&[[1.0]]),
                b: arr1(&[0.0]),
            }],
        };
        let b = propagate_bounds(&main, &[(0.0, 1.0)]);
        assert_eq!(b.pre[0][0], (0.0, 1.0));
    }

    #[test]
    fn opposing_weights_interval() {
        let main = MlpStack {
            layers: vec![DenseLayer {
                w: arr2(&[[1.0, -1.0]]),
                b: arr1(&[0.0]),
            }],
        };
        let b = propagate_bounds(&main, &[(0.0, 1.0), (0.0, 1.0)]);
        assert_eq!(b.pre[0][0], (-1.0, 1.0));
    }

    #[test]
    fn hidden_clamp_tightens_downstream() {
        // h = ReLU(x), y = -h: y in [-1, 0] for x in [-1, 1].
        let main = MlpStack {
            layers: vec![
                DenseLayer {
                    w: arr2(&[[1.0]]),
                    b: arr1(&[0.0]),
                },
                DenseLayer {
                    w: arr2(&[[-1.0]]),
                    b: arr1(&[0.0]),
                },
            ],
        };
        let b = propagate_bounds(&main, &[(-1.0, 1.0)]);
        assert_eq!(b.pre[0][0], (-1.0, 1.0));
        assert_eq!(b.output(), (-1.0, 0.0));
    }

    #[test]
    fn monte_carlo_containment() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let dims = [4usize, 6, 5, 1];
        let layers: Vec<DenseLayer> = dims
            .windows(2)
            .map(|w| DenseLayer {
                w: ndarray::Array2::from_shape_fn((w[1], w[0]), |_| rng.gen_range(-1.0..1.0)),
                b: ndarray::Array1::from_shape_fn(w[1], |_| rng.gen_range(-0.5..0.5)),
            })
            .collect();
        let main = MlpStack { layers };
        let input_box: Vec<(f64, f64)> = (0..4)
            .map(|_| {
                let a: f64 = rng.gen_range(-2.0..0.0);
                let b: f64 = rng.gen_range(0.0..2.0);
                (a, b)
            })
            .collect();
        let bounds = propagate_bounds(&main, &input_box);
        for _ in 0..20_000 {
            let x: Vec<f64> = input_box
                .iter()
                .map(|&(l, h)| rng.gen_range(l..=h))
                .collect();
            let mut h = ndarray::Array1::from_vec(x);
            for (li, layer) in main.layers.iter().enumerate() {
                let pre = layer.w.dot(&h) + &layer.b;
                for (i, v) in pre.iter().enumerate() {
                    let (lo, hi) = bounds.pre[li][i];
                    assert!(
                        *v >= lo - 1e-9 && *v <= hi + 1e-9,
                        "pre-activation {v} escapes [{lo}, {hi}] at layer {li} neuron {i}"
                    );
                }
                h = if li + 1 < main.layers.len() {
                    pre.mapv(|v| v.max(0.0))
                } else {
                    pre
                };
            }
        }
    }

    #[test]
    fn shrinking_box_never_widens_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let layers: Vec<DenseLayer> = [3usize, 5, 1]
            .windows(2)
            .map(|w| DenseLayer {
                w: ndarray::Array2::from_shape_fn((w[1], w[0]), |_| rng.gen_range(-1.0..1.0)),
                b: ndarray::Array1::from_shape_fn(w[1], |_| rng.gen_range(-0.5..0.5)),
            })
            .collect();
        let main = MlpStack { layers };
        let wide: Vec<(f64, f64)> = vec![(-2.0, 2.0); 3];
        let narrow: Vec<(f64, f64)> = vec![(-1.0, 1.5); 3];
        let bw = propagate_bounds(&main, &wide);
        let bn = propagate_bounds(&main, &narrow);
        for (lw, ln) in bw.pre.iter().zip(&bn.pre) {
            for (&(wl, wh), &(nl, nh)) in lw.iter().zip(ln) {
                assert!(nl >= wl - 1e-12);
                assert!(nh <= wh + 1e-12);
            }
        }
    }
}
