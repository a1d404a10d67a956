//! Exponential-family members: links, variance functions and the
//! per-observation quasi-likelihood kernels used to profile `rho`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GsarError, Result};

/// Lower clamp for means under the logit link (and `1 - MU_EPS_LOGIT` above).
pub const MU_EPS_LOGIT: f64 = 1e-12;
/// Lower clamp for means under the log link.
pub const MU_MIN_LOG: f64 = 1e-300;
/// Upper clamp on the log-link linear predictor; keeps `exp` finite.
pub const ETA_MAX_LOG: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    Normal,
    Binomial,
    Poisson,
    Gamma,
    NegativeBinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkId {
    Identity,
    Log,
    Logit,
}

impl FamilyId {
    pub fn name(self) -> &'static str {
        match self {
            FamilyId::Normal => "normal",
            FamilyId::Binomial => "binomial",
            FamilyId::Poisson => "poisson",
            FamilyId::Gamma => "gamma",
            FamilyId::NegativeBinomial => "negative_binomial",
        }
    }

    /// The only link accepted for this family.
    pub fn default_link(self) -> LinkId {
        match self {
            FamilyId::Normal => LinkId::Identity,
            FamilyId::Binomial => LinkId::Logit,
            FamilyId::Poisson | FamilyId::Gamma | FamilyId::NegativeBinomial => LinkId::Log,
        }
    }
}

impl LinkId {
    pub fn name(self) -> &'static str {
        match self {
            LinkId::Identity => "identity",
            LinkId::Log => "log",
            LinkId::Logit => "logit",
        }
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyId {
    type Err = GsarError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "normal" | "gaussian" => Ok(FamilyId::Normal),
            "binomial" => Ok(FamilyId::Binomial),
            "poisson" => Ok(FamilyId::Poisson),
            "gamma" => Ok(FamilyId::Gamma),
            "negative_binomial" | "negbin" | "nb" => Ok(FamilyId::NegativeBinomial),
            other => Err(GsarError::InvalidInput(format!("unknown family '{other}'"))),
        }
    }
}

impl FromStr for LinkId {
    type Err = GsarError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(LinkId::Identity),
            "log" => Ok(LinkId::Log),
            "logit" => Ok(LinkId::Logit),
            other => Err(GsarError::InvalidInput(format!("unknown link '{other}'"))),
        }
    }
}

/// A validated (family, link) pair plus the negative-binomial shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    family: FamilyId,
    link: LinkId,
    aux: Option<f64>,
}

impl FamilySpec {
    pub fn new(family: FamilyId, link: LinkId, aux: Option<f64>) -> Result<Self> {
        if family.default_link() != link {
            return Err(GsarError::UnsupportedLink {
                family: family.name().into(),
                link: link.name().into(),
            });
        }
        let aux = match (family, aux) {
            (FamilyId::NegativeBinomial, Some(k)) if k.is_finite() && k > 0.0 => Some(k),
            (FamilyId::NegativeBinomial, Some(k)) => {
                return Err(GsarError::InvalidInput(format!("negative-binomial shape must be positive, got {k}")))
            }
            (FamilyId::NegativeBinomial, None) => {
                return Err(GsarError::InvalidInput("negative-binomial family needs a shape parameter".into()))
            }
            (_, _) => None,
        };
        Ok(Self { family, link, aux })
    }

    /// Family with its canonical/default link.
    pub fn of(family: FamilyId) -> Result<Self> {
        Self::new(family, family.default_link(), None)
    }

    pub fn normal() -> Self {
        Self::of(FamilyId::Normal).unwrap()
    }

    pub fn poisson() -> Self {
        Self::of(FamilyId::Poisson).unwrap()
    }

    pub fn binomial() -> Self {
        Self::of(FamilyId::Binomial).unwrap()
    }

    pub fn gamma() -> Self {
        Self::of(FamilyId::Gamma).unwrap()
    }

    pub fn negative_binomial(shape: f64) -> Result<Self> {
        Self::new(FamilyId::NegativeBinomial, LinkId::Log, Some(shape))
    }

    pub fn family(&self) -> FamilyId {
        self.family
    }

    pub fn link(&self) -> LinkId {
        self.link
    }

    pub fn aux(&self) -> Option<f64> {
        self.aux
    }

    /// `g(mu)`, with the same clamps as [`FamilySpec::inv_link`].
    pub fn link_fn(&self, mu: f64) -> f64 {
        match self.link {
            LinkId::Identity => mu,
            LinkId::Log => mu.max(MU_MIN_LOG).ln(),
            LinkId::Logit => {
                let m = mu.clamp(MU_EPS_LOGIT, 1.0 - MU_EPS_LOGIT);
                (m / (1.0 - m)).ln()
            }
        }
    }

    pub fn inv_link(&self, eta: f64) -> f64 {
        match self.link {
            LinkId::Identity => eta,
            LinkId::Log => eta.min(ETA_MAX_LOG).exp().max(MU_MIN_LOG),
            LinkId::Logit => logistic(eta).clamp(MU_EPS_LOGIT, 1.0 - MU_EPS_LOGIT),
        }
    }

    /// `d mu / d eta`.
    pub fn d_inv_link(&self, eta: f64) -> f64 {
        match self.link {
            LinkId::Identity => 1.0,
            LinkId::Log => self.inv_link(eta),
            LinkId::Logit => {
                let mu = self.inv_link(eta);
                mu * (1.0 - mu)
            }
        }
    }

    /// `d² mu / d eta²`.
    pub fn d2_inv_link(&self, eta: f64) -> f64 {
        match self.link {
            LinkId::Identity => 0.0,
            LinkId::Log => self.inv_link(eta),
            LinkId::Logit => {
                let mu = self.inv_link(eta);
                mu * (1.0 - mu) * (1.0 - 2.0 * mu)
            }
        }
    }

    fn check_mean(&self, mu: f64) -> Result<()> {
        let ok = match self.family {
            FamilyId::Normal => mu.is_finite(),
            FamilyId::Binomial => (0.0..=1.0).contains(&mu),
            FamilyId::Poisson | FamilyId::NegativeBinomial => mu.is_finite() && mu >= 0.0,
            FamilyId::Gamma => mu.is_finite() && mu > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(GsarError::MeanDomain {
                family: self.family.name().into(),
                value: mu,
            })
        }
    }

    /// Variance function `V(mu)`.
    pub fn variance(&self, mu: f64) -> Result<f64> {
        self.check_mean(mu)?;
        Ok(self.variance_unchecked(mu))
    }

    pub(crate) fn variance_unchecked(&self, mu: f64) -> f64 {
        match self.family {
            FamilyId::Normal => 1.0,
            FamilyId::Poisson => mu,
            FamilyId::Binomial => mu * (1.0 - mu),
            FamilyId::Gamma => mu * mu,
            FamilyId::NegativeBinomial => mu + mu * mu / self.aux.expect("validated at construction"),
        }
    }

    /// Quasi-likelihood contribution of one observation at mean `mu`.
    ///
    /// The normal kernel is `-(y - mu)² / 2`; dividing by the unit-specific
    /// dispersion is left to the caller. Binomial contributions are scaled by
    /// the number of trials.
    pub fn ql_kernel(&self, obs: Observation, mu: f64) -> Result<f64> {
        self.check_mean(mu)?;
        let y = obs.y;
        let value = match self.family {
            FamilyId::Normal => -0.5 * (y - mu) * (y - mu),
            FamilyId::Poisson => xlogy(y, mu) - mu,
            FamilyId::Gamma => -y / mu - mu.ln(),
            FamilyId::Binomial => obs.trials * (xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu)),
            FamilyId::NegativeBinomial => {
                let v = self.variance_unchecked(mu);
                y * mu / (mu + v) + v * (v / (v + mu)).ln()
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(GsarError::NonFinite { index: obs.index })
        }
    }

    /// Checks a response value against the family's support.
    pub fn validate_observation(&self, obs: Observation) -> Result<()> {
        let Observation { y, trials, index } = obs;
        let bad = |why: &str| Err(GsarError::Validation(format!("observation {index}: {why} (y = {y})")));
        if !y.is_finite() {
            return bad("response is not finite");
        }
        match self.family {
            FamilyId::Normal => {}
            FamilyId::Poisson | FamilyId::NegativeBinomial if y < 0.0 => return bad("response must be >= 0"),
            FamilyId::Gamma if y <= 0.0 => return bad("response must be > 0"),
            FamilyId::Binomial => {
                if !(trials >= 1.0 && trials.fract() == 0.0) {
                    return bad("trials must be a positive integer");
                }
                if !(0.0..=1.0).contains(&y) {
                    return bad("binomial proportion must lie in [0, 1]");
                }
                let successes = y * trials;
                if (successes - successes.round()).abs() > 1e-9 {
                    return bad("proportion times trials is not an integer");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Starting mean for IRLS from an observed response.
    pub(crate) fn initial_mu(&self, y: f64, trials: f64) -> f64 {
        match self.family {
            FamilyId::Normal => y,
            FamilyId::Binomial => (trials * y + 0.5) / (trials + 1.0),
            FamilyId::Poisson | FamilyId::NegativeBinomial => y + 0.1,
            FamilyId::Gamma => y,
        }
    }
}

/// One response value with its binomial trial count (1 for other families).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub trials: f64,
    /// Position in the data set, used in error messages.
    pub index: usize,
}

impl Observation {
    pub fn new(y: f64) -> Self {
        Self { y, trials: 1.0, index: 0 }
    }

    pub fn with_trials(y: f64, trials: f64) -> Self {
        Self { y, trials, index: 0 }
    }

    pub fn at(mut self, index: usize) -> Self {
        self.index = index;
        self
    }
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `x ln y` with the convention `0 ln 0 = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}
