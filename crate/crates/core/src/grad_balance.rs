//! Rescaling of the recognizer's image gradient against the critic's.
//!
//! Two rules are available. `full` matches both moments of the recognizer
//! gradient to the critic gradient, then scales by `alpha`. `std_only`
//! matches only the spread, so the result is a positive multiple of the
//! recognizer gradient and never flips a sign.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    /// Plain sum `grad_D + lambda * grad_R`.
    None,
    /// Mean and standard deviation matching.
    Full,
    /// Standard-deviation matching only.
    #[default]
    StdOnly,
}

impl std::str::FromStr for BalanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "full" => Ok(Self::Full),
            "std_only" | "std-only" => Ok(Self::StdOnly),
            other => Err(Error::Config(format!("unknown balance mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for BalanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Full => "full",
            Self::StdOnly => "std_only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradBalanceConfig {
    pub mode: BalanceMode,
    pub alpha: f64,
    /// Weight of the recognizer term; only used when `mode = none`.
    pub lambda: f64,
}

impl Default for GradBalanceConfig {
    fn default() -> Self {
        Self {
            mode: BalanceMode::StdOnly,
            alpha: 1.0,
            lambda: 1.0,
        }
    }
}

impl GradBalanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode != BalanceMode::None && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "gb.alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "gb.lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Population mean and standard deviation (divide by N).
pub fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check(grad_r: &[f64], grad_d: &[f64]) -> Result<()> {
    if grad_r.len() != grad_d.len() {
        return Err(Error::ShapeMismatch(format!(
            "recognizer gradient has {} elements, critic gradient {}",
            grad_r.len(),
            grad_d.len()
        )));
    }
    if grad_r.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// `alpha * (sigma_D / sigma_R * (grad_R - mu_R) + mu_D)`.
pub fn balance_full(grad_r: &[f64], grad_d: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check(grad_r, grad_d)?;
    let (mu_r, sd_r) = moments(grad_r);
    let (mu_d, sd_d) = moments(grad_d);
    if sd_r == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let ratio = sd_d / sd_r;
    Ok(grad_r
        .iter()
        .map(|&g| alpha * (ratio * (g - mu_r) + mu_d))
        .collect())
}

/// `alpha * sigma_D / sigma_R * grad_R`.
pub fn balance_std(grad_r: &[f64], grad_d: &[f64], alpha: f64) -> Result<Vec<f64>> {
    Ok(scale_std(grad_r, grad_d, alpha)?.0)
}

fn scale_std(grad_r: &[f64], grad_d: &[f64], alpha: f64) -> Result<(Vec<f64>, f64)> {
    check(grad_r, grad_d)?;
    let (_, sd_r) = moments(grad_r);
    let (_, sd_d) = moments(grad_d);
    if sd_r == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let c = alpha * (sd_d / sd_r);
    Ok((grad_r.iter().map(|&g| c * g).collect(), c))
}

/// Image gradient handed to the generator: the critic gradient plus the
/// (possibly rebalanced) recognizer gradient.
pub fn combine_generator_gradient(
    grad_d: &[f64],
    grad_r: &[f64],
    config: &GradBalanceConfig,
) -> Result<Vec<f64>> {
    check(grad_r, grad_d)?;
    let r = match config.mode {
        BalanceMode::None => grad_r.iter().map(|g| config.lambda * g).collect(),
        BalanceMode::Full => balance_full(grad_r, grad_d, config.alpha)?,
        BalanceMode::StdOnly => balance_std(grad_r, grad_d, config.alpha)?,
    };
    Ok(grad_d.iter().zip(&r).map(|(d, r)| d + r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_with_identical_inputs_returns_critic_gradient() {
        let g = [0.5, -1.0, 2.0, 0.25];
        let out = balance_full(&g, &g, 1.0).unwrap();
        for (a, b) in out.iter().zip(&g) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn full_hand_example() {
        assert_eq!(
            balance_full(&[1.0, -1.0], &[2.0, 0.0], 1.0).unwrap(),
            vec![2.0, 0.0]
        );
        assert_eq!(
            balance_full(&[1.0, -1.0], &[2.0, 0.0], 0.0).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn std_unit_scale_is_identity() {
        let r = [1.0, -3.0, 2.0];
        let d = [2.0, -2.0, 3.0];
        // same spread: shift of r by 1
        let out = balance_std(&r, &[r[0] + 1.0, r[1] + 1.0, r[2] + 1.0], 1.0).unwrap();
        for (a, b) in out.iter().zip(&r) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(balance_std(&r, &d, 1.0).unwrap()[1] < 0.0);
    }

    #[test]
    fn constant_recognizer_gradient_is_degenerate() {
        assert!(matches!(
            balance_std(&[1.0, 1.0], &[0.0, 1.0], 1.0),
            Err(Error::DegenerateGradient)
        ));
        assert!(matches!(
            balance_full(&[0.0, 0.0], &[0.0, 1.0], 1.0),
            Err(Error::DegenerateGradient)
        ));
        assert!(matches!(
            balance_std(&[1.0], &[0.0, 1.0], 1.0),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn combine_modes() {
        let d = [1.0, 2.0, -1.0];
        let r = [0.5, -0.5, 0.0];
        let none = combine_generator_gradient(
            &d,
            &r,
            &GradBalanceConfig {
                mode: BalanceMode::None,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(none, vec![1.5, 1.5, -1.0]);
        // equal spreads -> std_only with alpha 1 equals the plain sum
        let r2 = [d[0] - 7.0, d[1] - 7.0, d[2] - 7.0];
        let plain = combine_generator_gradient(
            &d,
            &r2,
            &GradBalanceConfig {
                mode: BalanceMode::None,
                ..Default::default()
            },
        )
        .unwrap();
        let std = combine_generator_gradient(&d, &r2, &GradBalanceConfig::default()).unwrap();
        for (a, b) in plain.iter().zip(&std) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_ratio_scales_recognizer_direction() {
        let d = [0.3, -0.2, 0.9, 0.1];
        let r = [1.0, 2.0, -1.0, 0.5];
        let proj = |alpha: f64| {
            let cfg = GradBalanceConfig {
                mode: BalanceMode::StdOnly,
                alpha,
                lambda: 1.0,
            };
            let out = combine_generator_gradient(&d, &r, &cfg).unwrap();
            out.iter()
                .zip(&d)
                .zip(&r)
                .map(|((o, d), r)| (o - d) * r)
                .sum::<f64>()
        };
        let ratio = proj(10.0) / proj(0.1);
        assert!((ratio - 100.0).abs() < 1e-9);
    }

    #[test]
    fn parses_modes() {
        assert_eq!(
            "std_only".parse::<BalanceMode>().unwrap(),
            BalanceMode::StdOnly
        );
        assert_eq!("full".parse::<BalanceMode>().unwrap(), BalanceMode::Full);
        assert!("both".parse::<BalanceMode>().is_err());
        assert!(GradBalanceConfig {
            alpha: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GradBalanceConfig {
            mode: BalanceMode::None,
            alpha: 0.0,
            lambda: 1.0
        }
        .validate()
        .is_ok());
    }
}
