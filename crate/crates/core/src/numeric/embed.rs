use crate::error::{Error, Result};

/// Interleaved sinusoidal encoding: component `2i` is `sin(t·ω_i)` and
/// `2i + 1` is `cos(t·ω_i)` with `ω_i = 10000^(-2i/dim)`.
pub fn sinusoidal_embed(t: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::config(format!(
            "embedding width must be even and positive, got {dim}"
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::config(format!("timestep must be nonnegative, got {t}")));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(10000f64.ln()) * (2 * i) as f64 / dim as f64).exp();
        let angle = t * freq;
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}
