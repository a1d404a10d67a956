//! JSON fit report and its plain-text table.

use std::fmt::Write as _;

use gsar::effects::Effect;
use gsar::FitResult;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::INTERCEPT_NAME;

pub const MODEL_NAME: &str = "gsar";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    /// `None` when the sandwich variance of this coefficient is zero.
    pub std_error: Option<f64>,
    pub z_value: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterations {
    pub outer: usize,
    pub inner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub model: String,
    pub family: String,
    pub link: String,
    pub n: usize,
    pub p: usize,
    pub rho_hat: f64,
    pub var_rho: Option<f64>,
    pub phi_hat: f64,
    pub coefficients: Vec<Coefficient>,
    pub effects: Vec<Effect>,
    pub converged: bool,
    pub iterations: Iterations,
}

/// Two-sided p-value under the standard normal reference.
pub fn two_sided_p(z: f64) -> f64 {
    let std = Normal::standard();
    2.0 * std.sf(z.abs())
}

fn coefficient(name: &str, estimate: f64, variance: Option<f64>) -> Coefficient {
    let se = variance.filter(|v| *v > 0.0).map(f64::sqrt);
    let z = se.map(|s| estimate / s);
    Coefficient {
        name: name.to_string(),
        estimate,
        std_error: se,
        z_value: z,
        p_value: z.map(two_sided_p),
    }
}

impl FitReport {
    pub fn new(fit: &FitResult, names: &[String], effects: Vec<Effect>) -> Self {
        let coefficients = names
            .iter()
            .enumerate()
            .map(|(k, name)| coefficient(name, fit.beta_hat[k], Some(fit.vcov_beta[(k, k)])))
            .collect();
        Self {
            model: MODEL_NAME.to_string(),
            family: fit.spec.family().name().to_string(),
            link: fit.spec.link().name().to_string(),
            n: fit.n(),
            p: fit.p(),
            rho_hat: fit.rho_hat,
            var_rho: fit.var_rho,
            phi_hat: fit.phi_hat,
            coefficients,
            effects,
            converged: fit.converged,
            iterations: Iterations {
                outer: fit.n_outer,
                inner: fit.n_inner_total,
            },
        }
    }

    /// Index of the intercept among the coefficients, if present.
    pub fn intercept(&self) -> Option<usize> {
        self.coefficients.iter().position(|c| c.name == INTERCEPT_NAME)
    }

    /// `rho` with its standard error, for tabulation next to the betas.
    pub fn rho_row(&self) -> Coefficient {
        coefficient("rho", self.rho_hat, self.var_rho)
    }

    /// Fixed-width table with one row per coefficient plus `rho`.
    pub fn table(&self) -> String {
        let mut rows: Vec<(Coefficient, Option<&Effect>)> = self
            .coefficients
            .iter()
            .map(|c| (c.clone(), self.effects.iter().find(|e| e.name == c.name)))
            .collect();
        rows.push((self.rho_row(), None));
        let width = rows.iter().map(|(c, _)| c.name.len()).max().unwrap_or(0).max(8);
        let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.5}"));
        let pval = |v: Option<f64>| match v {
            Some(p) if p < f64::EPSILON => "<2.2e-16".to_string(),
            Some(p) if p < 1e-4 => format!("{p:.2e}"),
            other => num(other),
        };

        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$} {:>11} {:>11} {:>10} {:>10} {:>11} {:>11} {:>11}",
            "", "Estimate", "Std Error", "z value", "p value", "Direct", "Indirect", "Total"
        );
        for (c, e) in &rows {
            let _ = writeln!(
                out,
                "{:<width$} {:>11} {:>11} {:>10} {:>10} {:>11} {:>11} {:>11}",
                c.name,
                num(Some(c.estimate)),
                num(c.std_error),
                c.z_value.map_or_else(|| "-".to_string(), |z| format!("{z:.3}")),
                pval(c.p_value),
                num(e.map(|e| e.direct)),
                num(e.map(|e| e.indirect)),
                num(e.map(|e| e.total)),
            );
        }
        let _ = writeln!(
            out,
            "\n{} {}/{}  n = {}  phi = {:.5}  converged = {}  outer iterations = {}",
            self.model, self.family, self.link, self.n, self.phi_hat, self.converged, self.iterations.outer
        );
        out
    }
}

/// Plain-text table of effects alone.
pub fn effects_table(effects: &[Effect]) -> String {
    let width = effects.iter().map(|e| e.name.len()).max().unwrap_or(0).max(8);
    let mut out = format!("{:<width$} {:>12} {:>12} {:>12}\n", "", "Direct", "Indirect", "Total");
    for e in effects {
        let _ = writeln!(out, "{:<width$} {:>12.6} {:>12.6} {:>12.6}", e.name, e.direct, e.indirect, e.total);
    }
    out
}
