use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FitError;

/// Evenly spaced values `lo, lo + step, ..., <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridAxis {
    pub const fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let finite = self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite();
        if !finite || self.step <= 0.0 || self.lo < 0.0 {
            return Err(FitError::InvalidGrid(format!("bad axis {self}")));
        }
        if self.lo > self.hi {
            return Err(FitError::EmptyGrid);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.lo > self.hi || self.step <= 0.0 || self.lo.is_nan() || self.hi.is_nan() || self.step.is_nan() {
            return 0;
        }
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `k`-th grid value, rounded to 1e-9 so decimal steps print cleanly.
    pub fn value(&self, k: usize) -> f64 {
        ((self.lo + k as f64 * self.step) * 1e9).round() / 1e9
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.value(k)).collect()
    }
}

impl fmt::Display for GridAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.step)
    }
}

/// Search grid over the group parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub beta: GridAxis,
    pub gamma: GridAxis,
    pub sigma_g: GridAxis,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            beta: GridAxis::new(0.0, 2.0, 0.01),
            gamma: GridAxis::new(0.0, 2.0, 0.01),
            sigma_g: GridAxis::new(0.0, 0.3, 0.01),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), FitError> {
        self.beta.validate()?;
        self.gamma.validate()?;
        self.sigma_g.validate()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b:{},g:{},s:{}", self.beta, self.gamma, self.sigma_g)
    }
}

/// Parses `b:lo:hi:step,g:lo:hi:step,s:lo:hi:step`; omitted axes keep
/// their defaults.
impl FromStr for GridSpec {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut grid = GridSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let fields: Vec<&str> = part.split(':').collect();
            if fields.len() != 4 {
                return Err(FitError::InvalidGrid(format!("expected name:lo:hi:step, got '{part}'")));
            }
            let num = |x: &str| {
                x.trim().parse::<f64>().map_err(|_| FitError::InvalidGrid(format!("bad number '{x}' in '{part}'")))
            };
            let axis = GridAxis::new(num(fields[1])?, num(fields[2])?, num(fields[3])?);
            match fields[0].trim() {
                "b" | "beta" => grid.beta = axis,
                "g" | "gamma" => grid.gamma = axis,
                "s" | "sigma_g" => grid.sigma_g = axis,
                other => return Err(FitError::InvalidGrid(format!("unknown axis '{other}'"))),
            }
        }
        grid.validate()?;
        Ok(grid)
    }
}

/// Which group parameters are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Full,
    #[serde(rename = "gamma_fixed_1")]
    GammaFixed1,
    #[serde(rename = "beta_fixed_0")]
    BetaFixed0,
    #[serde(rename = "beta_fixed_1")]
    BetaFixed1,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] =
        [ModelVariant::Full, ModelVariant::GammaFixed1, ModelVariant::BetaFixed0, ModelVariant::BetaFixed1];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Full => "full",
            ModelVariant::GammaFixed1 => "gamma_fixed_1",
            ModelVariant::BetaFixed0 => "beta_fixed_0",
            ModelVariant::BetaFixed1 => "beta_fixed_1",
        }
    }

    pub fn n_free(self) -> usize {
        match self {
            ModelVariant::Full => 3,
            _ => 2,
        }
    }

    pub fn fixed_beta(self) -> Option<f64> {
        match self {
            ModelVariant::BetaFixed0 => Some(0.0),
            ModelVariant::BetaFixed1 => Some(1.0),
            _ => None,
        }
    }

    pub fn fixed_gamma(self) -> Option<f64> {
        match self {
            ModelVariant::GammaFixed1 => Some(1.0),
            _ => None,
        }
    }

    pub(crate) fn beta_axis(self, grid: &GridSpec) -> GridAxis {
        self.fixed_beta().map_or(grid.beta, |b| GridAxis::new(b, b, 1.0))
    }

    pub(crate) fn gamma_axis(self, grid: &GridSpec) -> GridAxis {
        self.fixed_gamma().map_or(grid.gamma, |g| GridAxis::new(g, g, 1.0))
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| FitError::InvalidGrid(format!("unknown model variant '{s}'")))
    }
}
