use super::DiffusionError;

/// Linear β schedule and the derived α, ᾱ tables, all computed in f64.
///
/// Timesteps are 1-based: `beta(1)` is the first forward step and `beta(T)` the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Schedule {
    pub fn linear(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Self, DiffusionError> {
        if timesteps == 0 {
            return Err(DiffusionError::Schedule("at least one timestep is required".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(DiffusionError::Schedule(format!(
                "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let betas: Vec<f64> = (0..timesteps)
            .map(|i| {
                if timesteps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (timesteps - 1) as f64
                }
            })
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, &a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self { betas, alphas, alpha_bars })
    }

    /// Number of diffusion steps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn check(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.len() {
            Err(DiffusionError::Timestep { t, max: self.len() })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// Reverse-step noise scale `σ_t = √β_t`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.beta(t).sqrt()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_single_step() {
        let s = Schedule::linear(1000, 1e-4, 0.02).unwrap();
        assert_eq!(s.beta(1), 1e-4);
        assert!((s.beta(1000) - 0.02).abs() < 1e-17);
        let one = Schedule::linear(1, 0.3, 0.5).unwrap();
        assert_eq!(one.alpha_bar(1), 0.7);
    }

    #[test]
    fn invalid_ranges() {
        assert!(Schedule::linear(0, 1e-4, 0.02).is_err());
        assert!(Schedule::linear(10, 0.0, 0.02).is_err());
        assert!(Schedule::linear(10, 0.03, 0.02).is_err());
        assert!(Schedule::linear(10, 0.1, 1.0).is_err());
        let s = Schedule::linear(10, 0.1, 0.2).unwrap();
        assert!(s.check(0).is_err() && s.check(11).is_err() && s.check(10).is_ok());
    }

    #[test]
    fn alpha_bar_decreases() {
        let s = Schedule::linear(200, 5e-4, 0.1).unwrap();
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar(200) < 1e-3);
    }
}
