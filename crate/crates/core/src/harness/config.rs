use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ingest::{ColumnRef, Delimiter};
use crate::control::BasisKind;
use crate::error::{Error, Result};
use crate::targets::MixtureVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Uniform target on `[0, 1]^d` with the cube integrands.
    Cube,
    /// Two-component Gaussian mixture, `g(x) = x`.
    Mixture,
    /// Bayesian linear regression posterior on a user dataset.
    Blr,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cube" => Ok(Family::Cube),
            "mixture" => Ok(Family::Mixture),
            "blr" => Ok(Family::Blr),
            other => Err(Error::Config(format!(
                "unknown experiment family `{other}` (cube, mixture, blr)"
            ))),
        }
    }
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Cube => "cube",
            Family::Mixture => "mixture",
            Family::Blr => "blr",
        }
    }
}

/// What to do with non-numeric dataset columns listed in `categorical`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalPolicy {
    #[default]
    Drop,
    /// Replace each level by its rank in sorted order of the distinct levels.
    Ordinal,
}

impl FromStr for CategoricalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "drop" => Ok(CategoricalPolicy::Drop),
            "ordinal" => Ok(CategoricalPolicy::Ordinal),
            other => Err(Error::Config(format!(
                "unknown categorical policy `{other}` (drop, ordinal)"
            ))),
        }
    }
}

/// Everything needed to reproduce one experiment.
///
/// `stages` lists the checkpoints (cumulative stage counts) at which the
/// estimates are formed; the run itself lasts `max(stages)` stages of
/// `per_stage` particles each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: Family,
    /// Ignored for `blr`, where the dataset fixes the dimension.
    pub dim: usize,
    pub stages: Vec<usize>,
    pub per_stage: usize,
    pub reps: usize,
    pub base_seed: u64,
    /// Student-t degrees of freedom.
    pub dof: f64,
    /// Initial policy covariance `sigma0 * I`; `None` picks the family default.
    pub sigma0: Option<f64>,
    pub initial_mean: Option<Vec<f64>>,
    /// Defensive mixture weight on the fixed initial policy; `None` is off.
    pub eta: Option<f64>,
    pub bases: Vec<BasisKind>,
    /// Integrand names; empty selects the family default.
    pub integrands: Vec<String>,
    pub variant: MixtureVariant,
    pub dataset: Option<PathBuf>,
    pub target_col: ColumnRef,
    pub delimiter: Delimiter,
    pub header: bool,
    pub categorical: Vec<ColumnRef>,
    pub categorical_policy: CategoricalPolicy,
    /// Rescale every feature column to mean 0 and unit sample variance.
    pub standardize: bool,
    /// Observation noise of the regression model.
    pub sigma: f64,
    /// Isotropic prior variance of the regression coefficients.
    pub prior_var: f64,
}

impl ExperimentSpec {
    pub fn defaults(family: Family) -> Self {
        let (dof, bases) = match family {
            Family::Cube => (8.0, vec![BasisKind::LegendrePairs { max_degree: 6 }]),
            Family::Mixture => (8.0, vec![BasisKind::SteinMonomials { max_total_degree: 2 }]),
            Family::Blr => (
                10.0,
                vec![
                    BasisKind::SteinMonomials { max_total_degree: 1 },
                    BasisKind::SteinMonomials { max_total_degree: 2 },
                ],
            ),
        };
        Self {
            family,
            dim: 4,
            stages: vec![5, 10, 20],
            per_stage: 1000,
            reps: 20,
            base_seed: 20240101,
            dof,
            sigma0: None,
            initial_mean: None,
            eta: None,
            bases,
            integrands: Vec::new(),
            variant: MixtureVariant::Isotropic,
            dataset: None,
            target_col: ColumnRef::Last,
            delimiter: Delimiter::Comma,
            header: true,
            categorical: Vec::new(),
            categorical_policy: CategoricalPolicy::Drop,
            standardize: true,
            sigma: 50.0,
            prior_var: 100.0,
        }
    }

    /// Builds a spec from `key = value` pairs applied in order over the
    /// family defaults. A `family` key in `pairs` overrides `family`.
    pub fn from_pairs(family: Option<Family>, pairs: &[(String, String)]) -> Result<Self> {
        let family = match pairs.iter().rev().find(|(k, _)| k == "family") {
            Some((_, v)) => v.parse()?,
            None => family.ok_or_else(|| Error::Config("no experiment family given".into()))?,
        };
        let mut spec = Self::defaults(family);
        for (key, value) in pairs.iter().filter(|(k, _)| k != "family") {
            spec.set(key, value)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "family" => self.family = value.parse()?,
            "d" | "dim" => self.dim = parse_num(key, value)?,
            "stages" | "checkpoints" => {
                let mut stages: Vec<usize> = parse_list(key, value)?;
                stages.sort_unstable();
                stages.dedup();
                self.stages = stages;
            }
            "per_stage" | "n_t" => self.per_stage = parse_num(key, value)?,
            "reps" | "replications" => self.reps = parse_num(key, value)?,
            "seed" | "base_seed" => self.base_seed = parse_num(key, value)?,
            "dof" | "nu" => self.dof = parse_num(key, value)?,
            "sigma0" => self.sigma0 = parse_optional(key, value)?,
            "initial_mean" | "mu0" => {
                self.initial_mean = match value {
                    "" | "default" => None,
                    v => Some(parse_list(key, v)?),
                }
            }
            "eta" => self.eta = parse_optional(key, value)?,
            "basis" | "bases" => {
                self.bases = split_list(value).map(BasisKind::parse).collect::<Result<_>>()?;
            }
            "integrand" | "integrands" => self.integrands = split_list(value).map(String::from).collect(),
            "variant" => self.variant = value.parse()?,
            "dataset" => self.dataset = (!value.is_empty()).then(|| PathBuf::from(value)),
            "target_col" => self.target_col = value.parse()?,
            "delimiter" => self.delimiter = value.parse()?,
            "header" => self.header = parse_bool(key, value)?,
            "categorical" => self.categorical = split_list(value).map(str::parse).collect::<Result<_>>()?,
            "categorical_policy" => self.categorical_policy = value.parse()?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "prior_var" => self.prior_var = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.stages.is_empty() || self.stages[0] == 0 {
            return bad("stages must be a nonempty list of positive checkpoints".into());
        }
        if self.per_stage == 0 {
            return bad("per_stage must be at least 1".into());
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.family != Family::Blr && self.dim == 0 {
            return bad("d must be at least 1".into());
        }
        if !(self.dof > 2.0) {
            return bad(format!("dof must exceed 2, got {}", self.dof));
        }
        if let Some(s) = self.sigma0 {
            if !(s > 0.0) {
                return bad(format!("sigma0 must be positive, got {s}"));
            }
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta < 1.0) {
                return bad(format!("eta must lie in (0, 1), got {eta}"));
            }
        }
        if let (Some(mean), false) = (&self.initial_mean, self.family == Family::Blr) {
            if mean.len() != self.dim {
                return bad(format!("initial_mean has {} entries, d = {}", mean.len(), self.dim));
            }
        }
        if !(self.sigma > 0.0) || !(self.prior_var > 0.0) {
            return bad("sigma and prior_var must be positive".into());
        }
        Ok(())
    }

    /// Total number of stages run.
    pub fn total_stages(&self) -> usize {
        self.stages.last().copied().unwrap_or(0)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key} expects true or false, got `{other}`"))),
    }
}

/// Parses a flat configuration file: one `key = value` per line, `#`
/// starts a comment, blank lines are ignored.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            column: 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line: idx + 1,
                column: 1,
                message: "empty key".into(),
            });
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{value}`")))
}

fn parse_optional(key: &str, value: &str) -> Result<Option<f64>> {
    match value {
        "" | "off" | "none" | "default" => Ok(None),
        v => parse_num(key, v).map(Some),
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    split_list(value).map(|v| parse_num(key, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_round_trip() {
        let text = "\
# cube run
family = cube
d = 3
stages = 20, 5,10
basis = legendre:k=4, none
eta = 0.1   # defensive
";
        let pairs = parse_config(text).unwrap();
        let spec = ExperimentSpec::from_pairs(None, &pairs).unwrap();
        assert_eq!(spec.family, Family::Cube);
        assert_eq!(spec.dim, 3);
        assert_eq!(spec.stages, vec![5, 10, 20]);
        assert_eq!(
            spec.bases,
            vec![BasisKind::LegendrePairs { max_degree: 4 }, BasisKind::Empty]
        );
        assert_eq!(spec.eta, Some(0.1));
        assert_eq!(spec.total_stages(), 20);
    }

    #[test]
    fn later_pairs_win() {
        let pairs = vec![
            ("reps".to_string(), "3".to_string()),
            ("reps".to_string(), "7".to_string()),
        ];
        let spec = ExperimentSpec::from_pairs(Some(Family::Mixture), &pairs).unwrap();
        assert_eq!(spec.reps, 7);
    }

    #[test]
    fn malformed_lines_report_position() {
        match parse_config("d = 4\nnonsense\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (k, v) in [
            ("reps", "0"),
            ("dof", "2"),
            ("eta", "1.5"),
            ("stages", ""),
            ("colour", "red"),
            ("d", "x"),
        ] {
            let pairs = vec![(k.to_string(), v.to_string())];
            assert!(
                matches!(
                    ExperimentSpec::from_pairs(Some(Family::Cube), &pairs),
                    Err(Error::Config(_))
                ),
                "{k} = {v}"
            );
        }
    }

    #[test]
    fn missing_family_is_an_error() {
        assert!(ExperimentSpec::from_pairs(None, &[]).is_err());
    }
}
