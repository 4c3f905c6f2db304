//! Hölder exponents and the solver parameter schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::ProblemInstance;

/// The exponent `rho` together with its conjugate `s` and the penalty
/// constant `C_s = (1/s)(1 - 1/s)^(s-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderPair {
    pub rho: f64,
    pub s: f64,
    pub c_s: f64,
}

impl HolderPair {
    /// `s * C_s`, the scale in front of the gradient sums.
    pub fn s_c_s(&self) -> f64 {
        self.s * self.c_s
    }

    /// `t^s` for `t >= 0`, exact for integral `s`.
    #[inline]
    pub fn pow_s(&self, t: f64) -> f64 {
        pow_nonneg(t, self.s)
    }

    /// `t^(s-1)` for `t >= 0`.
    #[inline]
    pub fn pow_s1(&self, t: f64) -> f64 {
        pow_nonneg(t, self.s - 1.0)
    }
}

/// `t^e` using repeated multiplication when `e` is a small integer.
#[inline]
pub fn pow_nonneg(t: f64, e: f64) -> f64 {
    if e == 1.0 {
        t
    } else if e == 2.0 {
        t * t
    } else if e.fract() == 0.0 && e > 0.0 && e <= 64.0 {
        t.powi(e as i32)
    } else {
        t.powf(e)
    }
}

pub fn holder_pair(rho: f64) -> Result<HolderPair> {
    if !(rho > 1.0 && rho <= 2.0) {
        return Err(Error::RhoOutOfRange(rho));
    }
    let s = rho / (rho - 1.0);
    // Snap to the nearest integer when rho is one of the usual exact values.
    let s = if (s - s.round()).abs() < 1e-9 { s.round() } else { s };
    let c_s = (1.0 / s) * (1.0 - 1.0 / s).powf(s - 1.0);
    Ok(HolderPair { rho, s, c_s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Worst-case schedule with every field given by its closed form.
    Paper,
    /// Same functional forms anchored to the preprocessed instance.
    #[default]
    Practical,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Paper => "paper",
            Mode::Practical => "practical",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Mode::Paper),
            "practical" => Ok(Mode::Practical),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// The constants `c0..c4` of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { c0: 0.1, c1: 0.1, c2: 0.1, c3: 0.1, c4: 2.0 }
    }
}

/// Optional per-field replacements for derived parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub sigma: Option<f64>,
    pub sigma_mu: Option<f64>,
    pub sigma_nu: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_max: Option<f64>,
    pub delta: Option<f64>,
    pub max_iters: Option<u64>,
    pub eps0: Option<f64>,
    pub constants: Option<Constants>,
}

impl Overrides {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma", self.sigma),
            ("sigma_mu", self.sigma_mu),
            ("sigma_nu", self.sigma_nu),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("tau", self.tau),
            ("lambda", self.lambda),
            ("lambda_max", self.lambda_max),
            ("delta", self.delta),
            ("eps0", self.eps0),
        ];
        for (name, v) in fields {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::OverrideNonPositive(name));
                }
            }
        }
        if self.max_iters == Some(0) {
            return Err(Error::OverrideNonPositive("max_iters"));
        }
        if let Some(c) = self.constants {
            for (name, v) in [("c0", c.c0), ("c1", c.c1), ("c2", c.c2), ("c3", c.c3), ("c4", c.c4)] {
                if !(v > 0.0) {
                    return Err(Error::OverrideNonPositive(name));
                }
            }
        }
        Ok(())
    }
}

/// Parameter bundle for the solver. Dual quantities (`lambda`, `lambda_max`)
/// are stored as fractions of `r^rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub rho: f64,
    pub eps: f64,
    pub sigma: f64,
    pub sigma_mu: f64,
    pub sigma_nu: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub tau: f64,
    pub lambda: f64,
    /// Largest step of the adaptive rule; equals `lambda` in paper mode.
    pub lambda_max: f64,
    pub delta: f64,
    pub max_iters: u64,
    pub mode: Mode,
    /// Kernel floor fraction.
    pub eps0: f64,
    pub constants: Constants,
    #[serde(skip)]
    pub overrides: Overrides,
}

const DEFAULT_DELTA: f64 = 0.1;
const PRACTICAL_LAMBDA_MAX: f64 = 0.25;

/// Largest power of two not exceeding `x`.
pub fn dyadic_floor(x: f64) -> f64 {
    let e = x.log2().floor();
    let mut p = 2f64.powi(e as i32);
    if p > x {
        p *= 0.5;
    }
    p
}

fn iteration_cap(c4: f64, lambda: f64, eps2: f64) -> u64 {
    let cap = (c4 / (lambda * eps2)).ceil();
    if cap >= u64::MAX as f64 {
        u64::MAX
    } else {
        cap.max(1.0) as u64
    }
}

/// Derives the parameter schedule from `(rho, eps)` and support sizes.
///
/// In practical mode the data-dependent fields are provisional (uniform
/// masses, separation `eps^rho`) until [`SolverParams::fit`] sees the
/// preprocessed instance.
pub fn derive_params(
    rho: f64,
    eps: f64,
    n: usize,
    m: usize,
    mode: Mode,
    overrides: Option<&Overrides>,
) -> Result<SolverParams> {
    let hp = holder_pair(rho)?;
    if !(eps > 0.0 && eps <= 0.25) {
        return Err(Error::EpsOutOfRange(eps));
    }
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput);
    }
    let ov = overrides.cloned().unwrap_or_default();
    ov.validate()?;
    let c = ov.constants.unwrap_or_default();
    let (nf, mf) = (n as f64, m as f64);
    let expo = (rho - 1.0) / rho;

    let sigma = ov.sigma.unwrap_or(eps.powf(rho));
    let sigma_mu = ov.sigma_mu.unwrap_or(eps.powf(rho) / nf);
    let sigma_nu = ov.sigma_nu.unwrap_or(eps.powf(rho));
    let eps2 = ov.eps2.unwrap_or_else(|| match mode {
        Mode::Paper => c.c0 * eps * (sigma_mu * sigma_nu / (mf * nf)).powf(expo),
        Mode::Practical => c.c0 * eps * (1.0 / (nf * mf)).powf(expo),
    });
    let mut p = SolverParams {
        rho,
        eps,
        sigma,
        sigma_mu,
        sigma_nu,
        eps1: 0.0,
        eps2,
        tau: 0.0,
        lambda: 0.0,
        lambda_max: 0.0,
        delta: ov.delta.unwrap_or(DEFAULT_DELTA),
        max_iters: 1,
        mode,
        eps0: ov.eps0.unwrap_or(eps / 2.0),
        constants: c,
        overrides: ov,
    };
    p.derive_downstream(hp.s);
    Ok(p)
}

impl SolverParams {
    fn derive_downstream(&mut self, s: f64) {
        let c = self.constants;
        let ov = &self.overrides;
        self.eps1 = ov.eps1.unwrap_or(c.c1 * self.eps2 / s);
        self.tau = ov.tau.unwrap_or(c.c2 * self.eps2);
        let raw_lambda = c.c3 * self.eps2 * (self.sigma / s).powi(2);
        self.lambda = ov.lambda.unwrap_or(match self.mode {
            Mode::Paper => raw_lambda,
            Mode::Practical => dyadic_floor(raw_lambda),
        });
        self.lambda_max = ov.lambda_max.unwrap_or(match self.mode {
            Mode::Paper => self.lambda,
            Mode::Practical => PRACTICAL_LAMBDA_MAX.max(self.lambda),
        });
        self.max_iters = ov.max_iters.unwrap_or_else(|| iteration_cap(c.c4, self.lambda, self.eps2));
    }

    /// Re-anchors the data-dependent fields to a preprocessed instance.
    /// Paper-mode parameters are returned unchanged.
    pub fn fit(&self, inst: &ProblemInstance) -> Result<SolverParams> {
        let hp = holder_pair(self.rho)?;
        let mut p = self.clone();
        if self.mode == Mode::Paper {
            return Ok(p);
        }
        let expo = (self.rho - 1.0) / self.rho;
        p.sigma = self.overrides.sigma.unwrap_or(inst.sigma_actual);
        let inf = inst.mu.min_mass() * inst.nu.min_mass();
        p.eps2 = self.overrides.eps2.unwrap_or(self.constants.c0 * self.eps * inf.powf(expo));
        p.derive_downstream(hp.s);
        Ok(p)
    }

    pub fn holder(&self) -> HolderPair {
        holder_pair(self.rho).expect("rho validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn holder_examples() {
        let h = holder_pair(2.0).unwrap();
        assert_eq!((h.s, h.c_s), (2.0, 0.25));
        let h = holder_pair(1.5).unwrap();
        assert_eq!(h.s, 3.0);
        assert_relative_eq!(h.c_s, 4.0 / 27.0, epsilon = 1e-15);
        let h = holder_pair(1.25).unwrap();
        assert_eq!(h.s, 5.0);
        assert_relative_eq!(h.c_s, 0.08192, epsilon = 1e-15);
    }

    #[test]
    fn rho_outside_range_rejected() {
        for rho in [1.0, 0.5, 2.0001, f64::NAN] {
            assert!(matches!(holder_pair(rho), Err(Error::RhoOutOfRange(_))));
        }
    }

    #[test]
    fn paper_mode_closed_forms() {
        let p = derive_params(1.5, 0.1, 4, 5, Mode::Paper, None).unwrap();
        let e = 0.1f64.powf(1.5);
        assert_relative_eq!(p.sigma, 0.031622776601683794, epsilon = 1e-15);
        assert_relative_eq!(p.sigma_nu, e, epsilon = 1e-15);
        assert_relative_eq!(p.sigma_mu, e / 4.0, epsilon = 1e-15);
        let eps2 = 0.1 * 0.1 * (e / 4.0 * e / 20.0).powf(1.0 / 3.0);
        assert_relative_eq!(p.eps2, eps2, max_relative = 1e-14);
        assert_eq!(p.eps1, 0.1 * p.eps2 / 3.0);
        assert_eq!(p.tau, 0.1 * p.eps2);
        assert_relative_eq!(p.lambda, 0.1 * p.eps2 * (e / 3.0).powi(2), max_relative = 1e-14);
        assert_eq!(p.max_iters, (2.0 / (p.lambda * p.eps2)).ceil() as u64);
    }

    #[test]
    fn practical_uniform_eps2() {
        let p = derive_params(1.5, 0.1, 4, 4, Mode::Practical, None).unwrap();
        assert_relative_eq!(p.eps2, 3.9685e-3, max_relative = 1e-4);
        assert_eq!(p.lambda, dyadic_floor(p.lambda));
    }

    #[test]
    fn overrides_and_errors() {
        let ov = Overrides { eps2: Some(1e-3), ..Default::default() };
        let p = derive_params(2.0, 0.2, 3, 3, Mode::Practical, Some(&ov)).unwrap();
        assert_eq!(p.eps2, 1e-3);
        assert_eq!(p.eps1, 0.1 * 1e-3 / 2.0);
        let bad = Overrides { tau: Some(0.0), ..Default::default() };
        assert_eq!(
            derive_params(2.0, 0.2, 3, 3, Mode::Paper, Some(&bad)).unwrap_err(),
            Error::OverrideNonPositive("tau")
        );
        assert!(matches!(derive_params(2.0, 0.3, 3, 3, Mode::Paper, None), Err(Error::EpsOutOfRange(_))));
    }

    #[test]
    fn dyadic_floor_is_power_of_two_below() {
        for x in [1e-9, 0.3, 0.5, 1.0, 3.7] {
            let d = dyadic_floor(x);
            assert!(d <= x && 2.0 * d > x);
            assert_eq!(d.log2().fract(), 0.0);
        }
    }
}
