use serde::{Deserialize, Serialize};

use crate::latent::LatentGrid;
use crate::schedule::DenoiseSchedule;
use crate::GroundingError;

/// Noise predictor `eps(z_t, t)`. `guided` asks for the grounding path; a
/// denoiser without grounding tokens ignores it.
pub trait Denoiser {
    fn predict_noise(&self, z: &LatentGrid, t: usize, guided: bool) -> Result<LatentGrid, GroundingError>;

    fn has_grounding(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Deterministic DDIM, eta = 0.
    #[default]
    Ddim,
    /// Pseudo linear multistep: Adams-Bashforth combinations of the last
    /// four noise predictions, lower orders while the history fills.
    Plms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub latent: LatentGrid,
    /// Per reverse step, in execution order, whether guidance was applied.
    pub guided: Vec<bool>,
    pub guided_steps_executed: usize,
    pub model_calls: usize,
}

/// Runs all `schedule.steps` reverse steps from `init`. The first
/// `schedule.guided_steps` of them use the grounding path.
pub fn denoise_sample(
    init: &LatentGrid,
    schedule: &DenoiseSchedule,
    model: &dyn Denoiser,
    kind: SamplerKind,
) -> Result<SampleOutput, GroundingError> {
    let n = schedule.steps;
    let mut z = init.clone();
    let mut history: Vec<LatentGrid> = Vec::new();
    let mut guided = Vec::with_capacity(n);
    for i in 0..n {
        let t = n - i;
        let use_guidance = i < schedule.guided_steps && model.has_grounding();
        let eps = model.predict_noise(&z, t, use_guidance)?;
        z.check_same_shape(&eps)?;
        guided.push(use_guidance);
        let eps_used = match kind {
            SamplerKind::Ddim => eps,
            SamplerKind::Plms => {
                let e = multistep(&eps, &history);
                history.insert(0, eps);
                history.truncate(3);
                e
            }
        };
        z = ddim_step(&z, &eps_used, schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
    }
    Ok(SampleOutput {
        latent: z,
        guided_steps_executed: guided.iter().filter(|g| **g).count(),
        model_calls: guided.len(),
        guided,
    })
}

fn ddim_step(z: &LatentGrid, eps: &LatentGrid, ab_t: f64, ab_prev: f64) -> LatentGrid {
    let z0 = z.combine(1.0 / ab_t.sqrt(), eps, -(1.0 - ab_t).sqrt() / ab_t.sqrt());
    z0.combine(ab_prev.sqrt(), eps, (1.0 - ab_prev).sqrt())
}

fn multistep(eps: &LatentGrid, old: &[LatentGrid]) -> LatentGrid {
    let coeffs: &[f64] = match old.len() {
        0 => &[1.0],
        1 => &[3.0 / 2.0, -1.0 / 2.0],
        2 => &[23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0],
        _ => &[55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0],
    };
    let mut out = LatentGrid {
        data: eps.data.mapv(|v| v * coeffs[0]),
    };
    for (c, e) in coeffs[1..].iter().zip(old) {
        out = out.combine(1.0, e, *c);
    }
    out
}

/// The exact noise for a known clean target:
/// `eps(z_t) = (z_t - sqrt(ab_t) z*) / sqrt(1 - ab_t)`.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    pub target: LatentGrid,
    pub schedule: DenoiseSchedule,
}

impl Denoiser for OracleDenoiser {
    fn predict_noise(&self, z: &LatentGrid, t: usize, _guided: bool) -> Result<LatentGrid, GroundingError> {
        let ab = self.schedule.alpha_bar(t);
        Ok(z.combine(1.0 / (1.0 - ab).sqrt(), &self.target, -ab.sqrt() / (1.0 - ab).sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::cell::Cell;

    struct Counting {
        guided_calls: Cell<usize>,
        grounding: bool,
    }

    impl Denoiser for Counting {
        fn predict_noise(&self, z: &LatentGrid, _t: usize, guided: bool) -> Result<LatentGrid, GroundingError> {
            if guided {
                self.guided_calls.set(self.guided_calls.get() + 1);
            }
            Ok(LatentGrid {
                data: z.data.mapv(|v| if guided { 0.1 * v } else { 0.2 * v }),
            })
        }
        fn has_grounding(&self) -> bool {
            self.grounding
        }
    }

    #[test]
    fn guided_steps_are_the_first_round_alpha_n() {
        let z = LatentGrid::standard_normal((1, 1, 2, 2), &mut ChaCha8Rng::seed_from_u64(0));
        for (alpha, k) in [(0.1, 5), (0.2, 10), (0.3, 15)] {
            for kind in [SamplerKind::Ddim, SamplerKind::Plms] {
                let m = Counting {
                    guided_calls: Cell::new(0),
                    grounding: true,
                };
                let s = DenoiseSchedule::linear(50).unwrap().with_alpha(alpha);
                let out = denoise_sample(&z, &s, &m, kind).unwrap();
                assert_eq!(out.guided_steps_executed, k);
                assert_eq!(m.guided_calls.get(), k);
                assert_eq!(out.model_calls, 50);
                assert!(out.guided[..k].iter().all(|g| *g) && out.guided[k..].iter().all(|g| !*g));
            }
        }
    }

    #[test]
    fn alpha_zero_matches_a_run_without_grounding() {
        let z = LatentGrid::standard_normal((1, 2, 2, 2), &mut ChaCha8Rng::seed_from_u64(1));
        let s = DenoiseSchedule::linear(20).unwrap();
        let with = Counting {
            guided_calls: Cell::new(0),
            grounding: true,
        };
        let without = Counting {
            guided_calls: Cell::new(0),
            grounding: false,
        };
        let a = denoise_sample(&z, &s.clone().with_alpha(0.0), &with, SamplerKind::Ddim).unwrap();
        let b = denoise_sample(&z, &s.with_alpha(0.5), &without, SamplerKind::Ddim).unwrap();
        assert_eq!(a.latent, b.latent);
        assert_eq!(b.guided_steps_executed, 0);
    }

    #[test]
    fn ddim_with_oracle_recovers_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = LatentGrid::standard_normal(LatentGrid::DESK_SHAPE, &mut rng);
        let init = LatentGrid::standard_normal(LatentGrid::DESK_SHAPE, &mut rng);
        let s = DenoiseSchedule::linear(50).unwrap();
        let oracle = OracleDenoiser {
            target: target.clone(),
            schedule: s.clone(),
        };
        let out = denoise_sample(&init, &s, &oracle, SamplerKind::Ddim).unwrap();
        assert!(out.latent.max_abs_diff(&target) < 1e-6);
    }

    #[test]
    fn plms_multistep_coefficients_sum_to_one() {
        let one = LatentGrid {
            data: ndarray::Array4::from_elem((1, 1, 1, 1), 1.0),
        };
        for k in 0..5 {
            let old = vec![one.clone(); k];
            assert!((multistep(&one, &old).data[[0, 0, 0, 0]] - 1.0).abs() < 1e-15);
        }
    }
}
