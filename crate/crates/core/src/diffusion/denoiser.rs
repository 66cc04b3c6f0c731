//! Conditional denoiser `g(z_t, y, t)`.
//!
//! ```text
//! e_y = LayerNorm(MLP(y))                    y normalized to [0, 1]
//! e_t = Affine(SinusoidalPE(t))
//! out = Head(Blocks(Affine([z_t, e_y, e_t])))
//! ```
//!
//! Blocks are residual (`x + Affine(Dropout(Relu(Affine(LayerNorm(x)))))`);
//! the head is `LayerNorm -> Relu -> Affine(hidden -> m)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::net::ForwardCache;
use crate::numeric::{
    sinusoidal_embed, Affine, DenseNet, Grads, Layer, LayerNorm, Matrix, Mode, Parameterized, SeededRng,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserArch {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub dropout: f64,
}

impl DenoiserArch {
    pub fn desk_scale(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            embed_dim: 64,
            hidden: 256,
            blocks: 3,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Denoiser {
    pub arch: DenoiserArch,
    pub target_net: DenseNet,
    pub time_net: DenseNet,
    pub trunk: DenseNet,
}

pub struct DenoiserCache {
    target: ForwardCache,
    time: ForwardCache,
    trunk: ForwardCache,
}

impl Denoiser {
    pub fn new(arch: DenoiserArch, rng: &mut SeededRng) -> Result<Self> {
        if arch.feature_dim == 0 || arch.hidden == 0 {
            return Err(Error::config("denoiser widths must be positive"));
        }
        let e = arch.embed_dim;
        if e == 0 || !e.is_multiple_of(2) {
            return Err(Error::value(
                "diffusion.embed_dim",
                format!("must be even and positive, got {e}"),
            ));
        }
        let target_net = DenseNet::new(
            1,
            vec![
                Layer::Affine(Affine::new(1, e, rng)),
                Layer::Relu,
                Layer::Affine(Affine::new(e, e, rng)),
                Layer::LayerNorm(LayerNorm::new(e)),
            ],
        )?;
        let time_net = DenseNet::new(e, vec![Layer::Affine(Affine::new(e, e, rng))])?;
        let h = arch.hidden;
        let mut layers = vec![Layer::Affine(Affine::new(arch.feature_dim + 2 * e, h, rng))];
        for _ in 0..arch.blocks {
            layers.push(DenseNet::residual_block(h, arch.dropout, rng));
        }
        layers.push(Layer::LayerNorm(LayerNorm::new(h)));
        layers.push(Layer::Relu);
        layers.push(Layer::Affine(Affine::new(h, arch.feature_dim, rng)));
        let trunk = DenseNet::new(arch.feature_dim + 2 * e, layers)?;
        Ok(Self {
            arch,
            target_net,
            time_net,
            trunk,
        })
    }

    fn time_embedding(&self, t: &[usize]) -> Result<Matrix> {
        let e = self.arch.embed_dim;
        let mut out = Matrix::zeros(t.len(), e);
        for (i, &ti) in t.iter().enumerate() {
            out.row_mut(i).copy_from_slice(&sinusoidal_embed(ti as f64, e)?);
        }
        Ok(out)
    }

    pub fn forward(
        &self,
        zt: &Matrix,
        y: &[f64],
        t: &[usize],
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<(Matrix, DenoiserCache)> {
        let n = zt.rows();
        if y.len() != n || t.len() != n {
            return Err(Error::shape(format!(
                "{n} noisy rows with {} conditions and {} timesteps",
                y.len(),
                t.len()
            )));
        }
        if zt.cols() != self.arch.feature_dim {
            return Err(Error::shape(format!(
                "denoiser expects width {}, got {}",
                self.arch.feature_dim,
                zt.cols()
            )));
        }
        let y_in = Matrix::from_vec(n, 1, y.to_vec())?;
        let (ey, target) = self.target_net.forward(&y_in, mode, rng)?;
        let (et, time) = self.time_net.forward(&self.time_embedding(t)?, mode, rng)?;
        let h = Matrix::hstack(&[zt, &ey, &et])?;
        let (out, trunk) = self.trunk.forward(&h, mode, rng)?;
        Ok((out, DenoiserCache { target, time, trunk }))
    }

    pub fn predict(&self, zt: &Matrix, y: &[f64], t: &[usize]) -> Result<Matrix> {
        let mut rng = SeededRng::new(0, 0);
        self.forward(zt, y, t, Mode::Eval, &mut rng).map(|(o, _)| o)
    }

    pub fn backward(&self, cache: &DenoiserCache, grad_out: &Matrix) -> Result<Grads> {
        let (gh, g_trunk) = self.trunk.backward(&cache.trunk, grad_out)?;
        let m = self.arch.feature_dim;
        let e = self.arch.embed_dim;
        let g_ey = gh.column_block(m, e);
        let g_et = gh.column_block(m + e, e);
        let (_, mut grads) = self.target_net.backward(&cache.target, &g_ey)?;
        let (_, g_time) = self.time_net.backward(&cache.time, &g_et)?;
        grads.extend(g_time);
        grads.extend(g_trunk);
        Ok(grads)
    }
}

impl Parameterized for Denoiser {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.target_net.params();
        p.extend(self.time_net.params());
        p.extend(self.trunk.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.target_net.params_mut();
        p.extend(self.time_net.params_mut());
        p.extend(self.trunk.params_mut());
        p
    }
}
