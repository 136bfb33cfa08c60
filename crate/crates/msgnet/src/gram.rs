//! Gram-matrix style statistics and the CoMatch feature-matching layer.
//!
//! A featuremap `F` of shape CxHxW reshapes to `phi(F)` of shape Cx(HW);
//! its Gram matrix is `phi(F) * phi(F)^T`, optionally divided by `C*H*W`.
//! The CoMatch layer tunes a content featuremap toward a target Gram `G`
//! through a learnable CxC matrix `W`:
//!
//! ```text
//! Y = unreshape( [ phi(F)^T  W  G ]^T )
//! ```
//!
//! With `W = G^{-1}` the layer reproduces `F` (content extreme); in the
//! square case `C = H*W` with invertible `phi(F)` and `W = phi(F)^{-T}
//! L^{-1}`, where `G = L L^T`, the output's Gram equals `G` (style extreme).
//! Both identities are pinned by tests; the network learns `W` from the
//! perceptual loss to balance the two.

use crate::error::{Error, Result};
use crate::linalg::cholesky_f64;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Relative jitter applied to the diagonal when a Gram factorization fails.
const CHOLESKY_JITTER: f64 = 1e-8;

/// CxC second-order feature statistics of one featuremap.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Vec<f32>,
    channels: usize,
    source_dims: (usize, usize, usize),
    normalized: bool,
}

impl GramMatrix {
    pub fn new(
        values: Vec<f32>,
        channels: usize,
        source_dims: (usize, usize, usize),
        normalized: bool,
    ) -> Result<Self> {
        if values.len() != channels * channels {
            return Err(Error::shape(format!(
                "gram matrix for {channels} channels needs {} values, got {}",
                channels * channels,
                values.len()
            )));
        }
        Ok(GramMatrix {
            values,
            channels,
            source_dims,
            normalized,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn source_dims(&self) -> (usize, usize, usize) {
        self.source_dims
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// As a CxC tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.channels, self.channels], self.values.clone())
            .expect("consistent dimensions")
    }

    pub fn trace(&self) -> f64 {
        (0..self.channels)
            .map(|i| self.values[i * self.channels + i] as f64)
            .sum()
    }

    /// Frobenius distance to another Gram matrix.
    pub fn frobenius_distance(&self, other: &GramMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Shape of a featuremap accepted by the Gram/CoMatch operations: CxHxW or
/// 1xCxHxW.
fn featuremap_dims(shape: &[usize], op: &str) -> Result<(usize, usize, usize)> {
    match shape {
        [c, h, w] => Ok((*c, *h, *w)),
        [1, c, h, w] => Ok((*c, *h, *w)),
        _ => Err(Error::shape(format!(
            "{op}: expected CxHxW or 1xCxHxW featuremap, got {shape:?}"
        ))),
    }
}

impl Tape {
    /// Differentiable Gram matrix of a single featuremap, computed through
    /// the reshape `phi`: `G = phi(F) phi(F)^T`, divided by `C*H*W` when
    /// `normalize` is set. Output is a CxC node.
    pub fn gram(&self, f: Var, normalize: bool) -> Result<Var> {
        let (c, h, w) = featuremap_dims(&self.shape(f), "gram")?;
        let phi = self.reshape(f, &[c, h * w])?;
        let phi_t = self.permute(phi, &[1, 0])?;
        let g = self.matmul(phi, phi_t)?;
        Ok(if normalize {
            self.div_scalar(g, (c * h * w) as f32)
        } else {
            g
        })
    }

    /// Differentiable CoMatch transform of a batched featuremap. `g` and `w`
    /// are CxC nodes; each sample is reshaped to Cx(HW) and mapped through
    /// `[phi^T W G]^T`.
    pub fn comatch(&self, f: Var, g: Var, w: Var) -> Result<Var> {
        let shape = self.shape(f);
        if shape.len() != 4 {
            return Err(Error::shape(format!(
                "comatch: expected NCHW featuremap, got {shape:?}"
            )));
        }
        let (n, c, h, wd) = (shape[0], shape[1], shape[2], shape[3]);
        for (name, m) in [("style gram", g), ("weight", w)] {
            let ms = self.shape(m);
            if ms != vec![c, c] {
                return Err(Error::shape(format!(
                    "comatch: {name} shape {ms:?} does not match {c} feature channels"
                )));
            }
        }
        let mut outputs = Vec::with_capacity(n);
        for s in 0..n {
            let sample = self.narrow(f, 0, s, 1)?;
            let phi = self.reshape(sample, &[c, h * wd])?;
            let phi_t = self.permute(phi, &[1, 0])?;
            let tw = self.matmul(phi_t, w)?;
            let twg = self.matmul(tw, g)?;
            let y = self.permute(twg, &[1, 0])?;
            outputs.push(self.reshape(y, &[1, c, h, wd])?);
        }
        self.concat(&outputs, 0)
    }
}

/// Gram matrix of a plain featuremap tensor (CxHxW or 1xCxHxW) through the
/// reshape-and-multiply path.
pub fn gram_matrix(f: &Tensor, normalize: bool) -> Result<GramMatrix> {
    let (c, h, w) = featuremap_dims(f.shape(), "gram")?;
    let tape = Tape::new();
    let v = tape.constant(f);
    let g = tape.gram(v, normalize)?;
    GramMatrix::new(tape.value(g), c, (c, h, w), normalize)
}

/// CoMatch transform of plain tensors; convenience wrapper over the tape op.
pub fn comatch_forward(f_c: &Tensor, g_s: &GramMatrix, w: &Tensor) -> Result<Tensor> {
    let shape = f_c.shape().to_vec();
    let (c, h, wd) = featuremap_dims(&shape, "comatch")?;
    let tape = Tape::new();
    let f = tape.constant(f_c);
    let f = tape.reshape(f, &[1, c, h, wd])?;
    let g = tape.constant(&g_s.to_tensor());
    let wv = tape.constant(w);
    let y = tape.comatch(f, g, wv)?;
    let y = tape.reshape(y, &shape)?;
    Ok(tape.tensor(y))
}

/// Lower-triangular Cholesky factor of a Gram matrix. If the plain
/// factorization fails, a jitter of `1e-8 * trace` is added to the diagonal
/// and the factorization retried once.
pub fn cholesky(g: &GramMatrix) -> Result<Tensor> {
    let c = g.channels();
    let a: Vec<f64> = g.values().iter().map(|&v| v as f64).collect();
    let l = cholesky_f64(c, &a).or_else(|| {
        let jitter = CHOLESKY_JITTER * g.trace();
        let mut aj = a.clone();
        for i in 0..c {
            aj[i * c + i] += jitter;
        }
        cholesky_f64(c, &aj)
    });
    match l {
        Some(l) => Tensor::new(vec![c, c], l.iter().map(|&v| v as f32).collect()),
        None => Err(Error::numeric(
            "cholesky: matrix remains indefinite after jitter",
        )),
    }
}

/// The content/style objective on plain tensors:
/// `|Y - F_c|_F^2 + alpha * |G(Y) - G_s|_F^2`. The Gram of `Y` is computed
/// with the same normalization mode as `g_s`.
pub fn eval_objective(y: &Tensor, f_c: &Tensor, g_s: &GramMatrix, alpha: f32) -> Result<f64> {
    if y.shape() != f_c.shape() {
        return Err(Error::shape(format!(
            "eval_objective: Y shape {:?} differs from content {:?}",
            y.shape(),
            f_c.shape()
        )));
    }
    if alpha < 0.0 {
        return Err(Error::config("eval_objective: alpha must be nonnegative"));
    }
    let content: f64 = y
        .data()
        .iter()
        .zip(f_c.data())
        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
        .sum();
    let g_y = gram_matrix(y, g_s.normalized())?;
    if g_y.channels() != g_s.channels() {
        return Err(Error::shape(format!(
            "eval_objective: Gram channel mismatch, {} vs {}",
            g_y.channels(),
            g_s.channels()
        )));
    }
    let style: f64 = g_y
        .values()
        .iter()
        .zip(g_s.values())
        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
        .sum();
    Ok(content + alpha as f64 * style)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;
    use proptest::prelude::*;

    /// Direct double-sum Gram oracle: G[a][b] = sum_{h,w} F[a,h,w]*F[b,h,w].
    fn gram_oracle(f: &Tensor, normalize: bool) -> Vec<f32> {
        let s = f.shape();
        let (c, h, w) = (s[0], s[1], s[2]);
        let mut g = vec![0.0f32; c * c];
        for a in 0..c {
            for b in 0..c {
                let mut acc = 0.0f64;
                for y in 0..h {
                    for x in 0..w {
                        acc += f.data()[a * h * w + y * w + x] as f64
                            * f.data()[b * h * w + y * w + x] as f64;
                    }
                }
                if normalize {
                    acc /= (c * h * w) as f64;
                }
                g[a * c + b] = acc as f32;
            }
        }
        g
    }

    #[test]
    fn gram_of_zeros_is_zero() {
        let f = Tensor::zeros(vec![3, 2, 2]);
        let g = gram_matrix(&f, false).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gram_single_channel_matches_double_sum() {
        // C=1, F=[1,2]: G = 1^2 + 2^2 = 5.
        let f = Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap();
        let g = gram_matrix(&f, false).unwrap();
        assert_eq!(g.values(), &[5.0]);
    }

    #[test]
    fn gram_matches_oracle_on_random_input() {
        let mut rng = Prng::new(17);
        let f = Tensor::rand_uniform(vec![4, 3, 5], &mut rng, -1.0, 1.0);
        for normalize in [false, true] {
            let g = gram_matrix(&f, normalize).unwrap();
            let oracle = gram_oracle(&f, normalize);
            for (a, b) in g.values().iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gram_is_spatial_permutation_invariant() {
        let mut rng = Prng::new(23);
        let f = Tensor::rand_uniform(vec![3, 2, 3], &mut rng, -1.0, 1.0);
        // Apply one fixed permutation of the 6 spatial positions per channel.
        let perm = [3usize, 0, 5, 2, 1, 4];
        let mut permuted = vec![0.0f32; 18];
        for c in 0..3 {
            for (dst, &src) in perm.iter().enumerate() {
                permuted[c * 6 + dst] = f.data()[c * 6 + src];
            }
        }
        let fp = Tensor::new(vec![3, 2, 3], permuted).unwrap();
        let ga = gram_matrix(&f, false).unwrap();
        let gb = gram_matrix(&fp, false).unwrap();
        assert_eq!(ga.values(), gb.values());
    }

    /// Gauss-Jordan inverse with partial pivoting, test-only.
    fn invert(n: usize, a: &[f32]) -> Vec<f32> {
        let mut m: Vec<f64> = a.iter().map(|&v| v as f64).collect();
        let mut inv = vec![0.0f64; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&a, &b| {
                    m[a * n + col]
                        .abs()
                        .partial_cmp(&m[b * n + col].abs())
                        .unwrap()
                })
                .unwrap();
            assert!(m[pivot_row * n + col].abs() > 1e-12, "singular test matrix");
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
                inv.swap(col * n + k, pivot_row * n + k);
            }
            let p = m[col * n + col];
            for k in 0..n {
                m[col * n + k] /= p;
                inv[col * n + k] /= p;
            }
            for row in 0..n {
                if row == col {
                    continue;
                }
                let f = m[row * n + col];
                for k in 0..n {
                    m[row * n + k] -= f * m[col * n + k];
                    inv[row * n + k] -= f * inv[col * n + k];
                }
            }
        }
        inv.iter().map(|&v| v as f32).collect()
    }

    #[test]
    fn comatch_inverse_gram_weight_recovers_content() {
        // W = G_s^{-1} minimizes the content term: the layer returns F_c.
        for seed in 0..4u64 {
            let mut rng = Prng::new(seed);
            let c = 4;
            let f_c = Tensor::rand_uniform(vec![c, 2, 2], &mut rng, -1.0, 1.0);
            let style = Tensor::rand_uniform(vec![c, 3, 3], &mut rng, -1.0, 1.0);
            // Well-conditioned PSD target: add a diagonal boost.
            let mut g = gram_oracle(&style, false);
            for i in 0..c {
                g[i * c + i] += 1.0;
            }
            let g_s = GramMatrix::new(g.clone(), c, (c, 3, 3), false).unwrap();
            let w = Tensor::new(vec![c, c], invert(c, &g)).unwrap();
            let y = comatch_forward(&f_c, &g_s, &w).unwrap();
            for (a, b) in y.data().iter().zip(f_c.data()) {
                assert!(
                    (a - b).abs() <= 1e-4 * b.abs().max(1.0),
                    "seed {seed}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn comatch_square_case_matches_style_gram() {
        // Square case C = H*W: with W = phi(F_c)^{-T} L^{-1} and G = L L^T,
        // the output's Gram equals the supplied Gram.
        for seed in 0..4u64 {
            let mut rng = Prng::new(1000 + seed);
            let c = 4; // H = W = 2, so phi(F_c) is 4x4
            let mut phi = Tensor::rand_uniform(vec![c, c], &mut rng, -1.0, 1.0);
            for i in 0..c {
                phi.data_mut()[i * c + i] += 2.0; // keep phi invertible
            }
            let f_c = Tensor::new(vec![c, 2, 2], phi.data().to_vec()).unwrap();
            let style = Tensor::rand_uniform(vec![c, 3, 3], &mut rng, -1.0, 1.0);
            let mut g = gram_oracle(&style, false);
            for i in 0..c {
                g[i * c + i] += 0.5;
            }
            let g_s = GramMatrix::new(g.clone(), c, (c, 3, 3), false).unwrap();
            let l = cholesky(&g_s).unwrap();
            // W = phi^{-T} L^{-1}
            let phi_inv = invert(c, phi.data());
            let mut phi_inv_t = vec![0.0f32; c * c];
            for i in 0..c {
                for j in 0..c {
                    phi_inv_t[i * c + j] = phi_inv[j * c + i];
                }
            }
            let l_inv = invert(c, l.data());
            let mut w = vec![0.0f32; c * c];
            for i in 0..c {
                for j in 0..c {
                    let mut acc = 0.0f64;
                    for k in 0..c {
                        acc += phi_inv_t[i * c + k] as f64 * l_inv[k * c + j] as f64;
                    }
                    w[i * c + j] = acc as f32;
                }
            }
            let w = Tensor::new(vec![c, c], w).unwrap();
            let y = comatch_forward(&f_c, &g_s, &w).unwrap();
            let g_y = gram_matrix(&y, false).unwrap();
            let dist = g_y.frobenius_distance(&g_s);
            let norm = g_s.frobenius_norm();
            assert!(
                dist / norm < 1e-3,
                "seed {seed}: relative Frobenius distance {}",
                dist / norm
            );
        }
    }

    #[test]
    fn comatch_argmin_consistency_at_content_extreme() {
        // eval_objective(comatch(F, G, G^{-1}), F, G, alpha = 0) vanishes.
        let mut rng = Prng::new(77);
        let c = 3;
        let f_c = Tensor::rand_uniform(vec![c, 2, 3], &mut rng, -1.0, 1.0);
        let style = Tensor::rand_uniform(vec![c, 4, 4], &mut rng, -1.0, 1.0);
        let mut g = gram_oracle(&style, false);
        for i in 0..c {
            g[i * c + i] += 1.0;
        }
        let g_s = GramMatrix::new(g.clone(), c, (c, 4, 4), false).unwrap();
        let w = Tensor::new(vec![c, c], invert(c, &g)).unwrap();
        let y = comatch_forward(&f_c, &g_s, &w).unwrap();
        let obj = eval_objective(&y, &f_c, &g_s, 0.0).unwrap();
        assert!(obj < 1e-8, "objective {obj}");
    }

    #[test]
    fn comatch_with_zero_weight_is_zero() {
        let mut rng = Prng::new(5);
        let f = Tensor::rand_uniform(vec![3, 2, 2], &mut rng, -1.0, 1.0);
        let g = gram_matrix(&f, false).unwrap();
        let w = Tensor::zeros(vec![3, 3]);
        let y = comatch_forward(&f, &g, &w).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cholesky_identity_is_identity() {
        let eye = GramMatrix::new(vec![1.0, 0.0, 0.0, 1.0], 2, (2, 1, 2), false).unwrap();
        let l = cholesky(&eye).unwrap();
        assert_eq!(l.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn cholesky_hand_factorization() {
        let g = GramMatrix::new(vec![4.0, 2.0, 2.0, 5.0], 2, (2, 1, 2), false).unwrap();
        let l = cholesky(&g).unwrap();
        assert_eq!(l.data(), &[2.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn cholesky_reconstructs_random_psd() {
        let mut rng = Prng::new(40);
        let f = Tensor::rand_uniform(vec![4, 3, 3], &mut rng, -1.0, 1.0);
        let g = gram_matrix(&f, false).unwrap();
        let l = cholesky(&g).unwrap();
        let c = 4;
        let mut norm = 0.0f64;
        let mut dist = 0.0f64;
        for i in 0..c {
            for j in 0..c {
                let mut acc = 0.0f64;
                for k in 0..c {
                    acc += l.data()[i * c + k] as f64 * l.data()[j * c + k] as f64;
                }
                let want = g.values()[i * c + j] as f64;
                dist += (acc - want).powi(2);
                norm += want.powi(2);
                if i == j {
                    assert!(l.data()[i * c + i] >= 0.0);
                }
            }
        }
        assert!(dist.sqrt() / norm.sqrt() < 1e-5);
    }

    #[test]
    fn objective_is_zero_at_self_target() {
        let mut rng = Prng::new(8);
        let f = Tensor::rand_uniform(vec![2, 3, 3], &mut rng, -1.0, 1.0);
        let g = gram_matrix(&f, false).unwrap();
        let v = eval_objective(&f, &f, &g, 2.5).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn objective_alpha_zero_is_content_distance() {
        let mut rng = Prng::new(9);
        let f = Tensor::rand_uniform(vec![2, 2, 2], &mut rng, -1.0, 1.0);
        let y = Tensor::rand_uniform(vec![2, 2, 2], &mut rng, -1.0, 1.0);
        let g = gram_matrix(&f, false).unwrap();
        let got = eval_objective(&y, &f, &g, 0.0).unwrap();
        let want: f64 = y
            .data()
            .iter()
            .zip(f.data())
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_direct_summation() {
        let mut rng = Prng::new(10);
        let f = Tensor::rand_uniform(vec![3, 2, 2], &mut rng, -1.0, 1.0);
        let y = Tensor::rand_uniform(vec![3, 2, 2], &mut rng, -1.0, 1.0);
        let g = gram_matrix(&f, true).unwrap();
        let alpha = 1.7f32;
        let got = eval_objective(&y, &f, &g, alpha).unwrap();
        // Direct summation oracle.
        let content: f64 = y
            .data()
            .iter()
            .zip(f.data())
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum();
        let gy = gram_oracle(&y, true);
        let style: f64 = gy
            .iter()
            .zip(g.values())
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum();
        let want = content + alpha as f64 * style;
        assert!(
            (got - want).abs() <= 1e-6 * want.abs().max(1.0),
            "{got} vs {want}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gram_is_symmetric_and_scales_quadratically(
            seed in any::<u64>(),
            c in 1usize..5,
            h in 1usize..4,
            w in 1usize..4,
            scale in 0.1f32..3.0,
        ) {
            let mut rng = Prng::new(seed);
            let f = Tensor::rand_uniform(vec![c, h, w], &mut rng, -1.0, 1.0);
            let g = gram_matrix(&f, false).unwrap();
            // Symmetry: |G - G^T|_max < 1e-5 * |G|_max.
            let gmax = g.values().iter().fold(0.0f32, |m, v| m.max(v.abs()));
            for i in 0..c {
                for j in 0..c {
                    let d = (g.values()[i * c + j] - g.values()[j * c + i]).abs();
                    prop_assert!(d <= 1e-5 * gmax.max(f32::MIN_POSITIVE));
                }
            }
            // gram(s*F) == s^2 * gram(F) within 1e-5 relative.
            let scaled = Tensor::new(
                vec![c, h, w],
                f.data().iter().map(|&v| v * scale).collect(),
            ).unwrap();
            let gs = gram_matrix(&scaled, false).unwrap();
            for (a, b) in gs.values().iter().zip(g.values()) {
                let want = b * scale * scale;
                prop_assert!((a - want).abs() <= 1e-5 * want.abs().max(1e-3));
            }
        }
    }
}
