//! Closed-form forward process and the v-parameterization identities.

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// `z_t = √ᾱ_t·z0 + √(1−ᾱ_t)·ε`
pub fn forward_sample(s: &NoiseSchedule, z0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
    s.check_timestep(t)?;
    same_len(z0, eps)?;
    let (a, b) = s.signal_noise(t);
    Ok(z0.iter().zip(eps).map(|(z, e)| a * z + b * e).collect())
}

/// `v_t = √ᾱ_t·ε − √(1−ᾱ_t)·z0`
pub fn velocity_target(s: &NoiseSchedule, z0: &[f64], eps: &[f64], t: usize) -> Result<Vec<f64>> {
    s.check_timestep(t)?;
    same_len(z0, eps)?;
    let (a, b) = s.signal_noise(t);
    Ok(z0.iter().zip(eps).map(|(z, e)| a * e - b * z).collect())
}

/// `ẑ0 = √ᾱ_t·z_t − √(1−ᾱ_t)·v̂`
pub fn recover_z0(s: &NoiseSchedule, zt: &[f64], v_hat: &[f64], t: usize) -> Result<Vec<f64>> {
    s.check_timestep(t)?;
    same_len(zt, v_hat)?;
    let (a, b) = s.signal_noise(t);
    Ok(zt.iter().zip(v_hat).map(|(z, v)| a * z - b * v).collect())
}

/// `ẑ0 = (z_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t` for the noise-prediction ablation.
pub fn recover_z0_from_noise(s: &NoiseSchedule, zt: &[f64], eps_hat: &[f64], t: usize) -> Result<Vec<f64>> {
    s.check_timestep(t)?;
    same_len(zt, eps_hat)?;
    let (a, b) = s.signal_noise(t);
    Ok(zt.iter().zip(eps_hat).map(|(z, e)| (z - b * e) / a).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::ScheduleKind;
    use crate::numeric::SeededRng;
    use proptest::prelude::*;

    /// Schedule whose ᾱ at t=1 is overridden to a chosen value.
    fn with_alpha_bar(ab: f64) -> NoiseSchedule {
        let mut s = NoiseSchedule::cosine(10);
        s.alpha_bars[1] = ab;
        s
    }

    #[test]
    fn noiseless_forward_scales_signal() {
        let s = NoiseSchedule::cosine(50);
        let z = forward_sample(&s, &[2.0, -1.0], 10, &[0.0, 0.0]).unwrap();
        let a = s.alpha_bar(10).sqrt();
        assert_eq!(z, vec![2.0 * a, -a]);
    }

    #[test]
    fn unit_alpha_bar_is_identity() {
        let s = with_alpha_bar(1.0);
        assert_eq!(forward_sample(&s, &[3.0, 4.0], 1, &[9.0, 9.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn pure_noise_component() {
        let s = with_alpha_bar(0.36);
        let z = forward_sample(&s, &[0.0, 0.0], 1, &[1.0, 0.0]).unwrap();
        assert!((z[0] - 0.8).abs() < 1e-15 && z[1] == 0.0);
    }

    #[test]
    fn velocity_limits() {
        let s = NoiseSchedule::cosine(50);
        let (a, b) = s.signal_noise(7);
        assert_eq!(velocity_target(&s, &[0.0], &[2.0], 7).unwrap(), vec![2.0 * a]);
        assert_eq!(velocity_target(&s, &[2.0], &[0.0], 7).unwrap(), vec![-2.0 * b]);
    }

    #[test]
    fn recover_with_zero_velocity() {
        let s = NoiseSchedule::cosine(50);
        let a = s.alpha_bar(3).sqrt();
        assert_eq!(recover_z0(&s, &[1.5], &[0.0], 3).unwrap(), vec![1.5 * a]);
    }

    #[test]
    fn recover_hand_example() {
        let s = with_alpha_bar(0.25);
        let z = recover_z0(&s, &[2.0, 0.0], &[1.0, 0.0], 1).unwrap();
        assert!((z[0] - 0.133_974_596_215_561_4).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_timesteps() {
        let s = NoiseSchedule::cosine(50);
        assert!(forward_sample(&s, &[0.0], 0, &[0.0]).is_err());
        assert!(velocity_target(&s, &[0.0], &[0.0], 51).is_err());
        assert!(recover_z0(&s, &[0.0], &[0.0], 0).is_err());
    }

    #[test]
    fn noise_prediction_inverts_forward() {
        let s = NoiseSchedule::new(ScheduleKind::Linear, 50, 0.0).unwrap();
        let mut rng = SeededRng::new(0, 0);
        let z0: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let eps: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let zt = forward_sample(&s, &z0, 20, &eps).unwrap();
        let back = recover_z0_from_noise(&s, &zt, &eps, 20).unwrap();
        for (a, b) in back.iter().zip(&z0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn v_round_trip(seed in 0u64..10_000, t in 1usize..=50) {
            let s = NoiseSchedule::cosine(50);
            let mut rng = SeededRng::new(seed, 1);
            let z0: Vec<f64> = (0..6).map(|_| 3.0 * rng.normal()).collect();
            let eps: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            let zt = forward_sample(&s, &z0, t, &eps).unwrap();
            let v = velocity_target(&s, &z0, &eps, t).unwrap();
            let back = recover_z0(&s, &zt, &v, t).unwrap();
            for (a, b) in back.iter().zip(&z0) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
