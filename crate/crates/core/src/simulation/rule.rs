use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use super::dgp::SimulatedSample;
use super::trees::BaggedTrees;
use crate::error::{IpdError, Result};

pub const DEFAULT_N_TREES: usize = 100;
pub const DEFAULT_MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    /// `f(z) = c * sum_{j in S} z_j`.
    AttenuatedLinear { c: f64 },
    /// Bagged regression trees on the features in `S`. Without a seed the
    /// harness derives one from its master seed.
    BaggedTrees {
        n_trees: usize,
        max_depth: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

/// A prediction rule before training. `subset` holds zero-based feature
/// indices; the text form uses one-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRule {
    #[serde(flatten)]
    pub kind: RuleKind,
    pub subset: Vec<usize>,
}

impl PredictionRule {
    pub fn attenuated(c: f64, subset: Vec<usize>) -> Self {
        PredictionRule { kind: RuleKind::AttenuatedLinear { c }, subset }
    }

    pub fn trees(subset: Vec<usize>) -> Self {
        PredictionRule {
            kind: RuleKind::BaggedTrees { n_trees: DEFAULT_N_TREES, max_depth: DEFAULT_MAX_DEPTH, seed: None },
            subset,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.subset.is_empty() {
            return Err(IpdError::InvalidConfig("rule feature subset is empty".into()));
        }
        if let Some(&j) = self.subset.iter().find(|&&j| j >= p) {
            return Err(IpdError::InvalidConfig(format!("rule uses feature {} but p = {p}", j + 1)));
        }
        let mut s = self.subset.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.subset.len() {
            return Err(IpdError::InvalidConfig("rule feature subset has duplicates".into()));
        }
        match self.kind {
            RuleKind::AttenuatedLinear { c } if !(c > 0.0 && c <= 1.0) => {
                Err(IpdError::InvalidConfig(format!("attenuation {c} outside (0, 1]")))
            }
            RuleKind::BaggedTrees { n_trees: 0, .. } => {
                Err(IpdError::InvalidConfig("bagged trees need at least one tree".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PredictionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RuleKind::AttenuatedLinear { c } => write!(f, "attenuated:{c}:")?,
            RuleKind::BaggedTrees { n_trees, max_depth, .. } => write!(f, "trees:{n_trees}:{max_depth}:")?,
        }
        f.write_str(&format_subset(&self.subset))
    }
}

/// Compresses sorted runs to `lo-hi`, one-based.
fn format_subset(subset: &[usize]) -> String {
    let mut parts = Vec::new();
    let mut k = 0;
    while k < subset.len() {
        let start = subset[k];
        let mut end = start;
        while k + 1 < subset.len() && subset[k + 1] == end + 1 {
            k += 1;
            end += 1;
        }
        parts.push(if end > start { format!("{}-{}", start + 1, end + 1) } else { format!("{}", start + 1) });
        k += 1;
    }
    parts.join(",")
}

fn parse_subset(s: &str) -> core::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a, b),
            None => (part, part),
        };
        let lo: usize = lo.trim().parse().map_err(|_| format!("bad feature index in '{part}'"))?;
        let hi: usize = hi.trim().parse().map_err(|_| format!("bad feature index in '{part}'"))?;
        if lo == 0 || hi < lo {
            return Err(format!("bad feature range '{part}' (indices are 1-based)"));
        }
        out.extend(lo - 1..hi);
    }
    Ok(out)
}

impl FromStr for PredictionRule {
    type Err = IpdError;

    /// `attenuated:<c>:<set>` or `trees:<n>:<depth>:<set>`, where `<set>` is
    /// a comma list of one-based indices and `lo-hi` ranges.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| IpdError::InvalidConfig(format!("rule '{s}': {msg}"));
        let fields: Vec<&str> = s.trim().split(':').collect();
        match fields.as_slice() {
            ["attenuated", c, set] => {
                let c: f64 = c.parse().map_err(|_| bad("attenuation is not a number".into()))?;
                Ok(PredictionRule::attenuated(c, parse_subset(set).map_err(bad)?))
            }
            ["trees", n, depth, set] => {
                let n_trees = n.parse().map_err(|_| bad("tree count is not an integer".into()))?;
                let max_depth = depth.parse().map_err(|_| bad("depth is not an integer".into()))?;
                Ok(PredictionRule {
                    kind: RuleKind::BaggedTrees { n_trees, max_depth, seed: None },
                    subset: parse_subset(set).map_err(bad)?,
                })
            }
            _ => Err(bad("expected attenuated:<c>:<set> or trees:<n>:<depth>:<set>".to_string())),
        }
    }
}

/// A trained rule that maps a feature row to a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FrozenRule {
    AttenuatedLinear { c: f64, subset: Vec<usize> },
    BaggedTrees(BaggedTrees),
}

impl FrozenRule {
    pub fn predict(&self, z: &[f64]) -> f64 {
        match self {
            FrozenRule::AttenuatedLinear { c, subset } => c * subset.iter().map(|&j| z[j]).sum::<f64>(),
            FrozenRule::BaggedTrees(f) => f.predict(z),
        }
    }

    pub fn predict_all(&self, z: &[Vec<f64>]) -> Vec<f64> {
        z.iter().map(|row| self.predict(row)).collect()
    }
}

/// Trains `rule` on `train`. Attenuated rules ignore the sample; trees
/// without a seed use `default_seed`.
pub fn fit_rule(train: &SimulatedSample, rule: &PredictionRule, default_seed: u64) -> Result<FrozenRule> {
    match rule.kind {
        RuleKind::AttenuatedLinear { c } => Ok(FrozenRule::AttenuatedLinear { c, subset: rule.subset.clone() }),
        RuleKind::BaggedTrees { n_trees, max_depth, seed } => {
            if train.is_empty() {
                return Err(IpdError::InsufficientData { needed: 1, available: 0 });
            }
            rule.validate(train.z[0].len())?;
            let forest =
                BaggedTrees::fit(&train.z, &train.y, &rule.subset, n_trees, max_depth, seed.unwrap_or(default_seed))?;
            Ok(FrozenRule::BaggedTrees(forest))
        }
    }
}

/// Population quantities of the naive regression of `f(Z)` on `(1, Z_1)`
/// under the unit-coefficient linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticNaive {
    pub eta1: f64,
    pub bias: f64,
    pub resid_var: f64,
    pub oracle_resid_var: f64,
}

pub fn analytic_naive_slope(rule: &PredictionRule, p: usize) -> Result<AnalyticNaive> {
    let RuleKind::AttenuatedLinear { c } = rule.kind else {
        return Err(IpdError::Unsupported("analytic slope needs an attenuated linear rule".into()));
    };
    rule.validate(p)?;
    let has_first = rule.subset.contains(&0);
    let others = rule.subset.len() - usize::from(has_first);
    let eta1 = if has_first { c } else { 0.0 };
    Ok(AnalyticNaive { eta1, bias: eta1 - 1.0, resid_var: c * c * others as f64, oracle_resid_var: p as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn grammar_round_trip() {
        let r: PredictionRule = "attenuated:0.8:1-2".parse().unwrap();
        assert_eq!(r, PredictionRule::attenuated(0.8, vec![0, 1]));
        let r: PredictionRule = "attenuated:1.0:2-3,7".parse().unwrap();
        assert_eq!(r.subset, vec![1, 2, 6]);
        assert_eq!(r.to_string(), "attenuated:1:2-3,7");
        let t: PredictionRule = "trees:100:8:1-10".parse().unwrap();
        assert_eq!(t, PredictionRule::trees((0..10).collect()));
        assert_eq!(t.to_string(), "trees:100:8:1-10");
        for bad in ["attenuated:x:1", "trees:1:2", "attenuated:1:0-3", "forest:1:1-2", "attenuated:1:3-2"] {
            assert!(bad.parse::<PredictionRule>().is_err(), "{bad}");
        }
    }

    #[test]
    fn analytic_values() {
        let a = analytic_naive_slope(&PredictionRule::attenuated(1.0, (0..10).collect()), 10).unwrap();
        assert_eq!((a.bias, a.resid_var, a.oracle_resid_var), (0.0, 9.0, 10.0));
        for c in [0.3, 1.0] {
            let a = analytic_naive_slope(&PredictionRule::attenuated(c, (1..10).collect()), 10).unwrap();
            assert_eq!(a.bias, -1.0);
        }
        let a = analytic_naive_slope(&PredictionRule::attenuated(0.8, vec![0, 1]), 10).unwrap();
        assert!((a.bias + 0.2).abs() < 1e-15);
        assert!((a.resid_var - 0.64).abs() < 1e-15);
        assert!(matches!(analytic_naive_slope(&PredictionRule::trees(vec![0]), 10), Err(IpdError::Unsupported(_))));
    }

    #[test]
    fn excluded_feature_has_zero_derivative() {
        let rule = fit_rule(&SimulatedSample { z: vec![], y: vec![] }, &PredictionRule::attenuated(1.0, vec![1, 2]), 0)
            .unwrap();
        let z = [0.4, -1.0, 2.0];
        let h = 1e-4;
        let fd = (rule.predict(&[z[0] + h, z[1], z[2]]) - rule.predict(&[z[0] - h, z[1], z[2]])) / (2.0 * h);
        assert_eq!(fd, 0.0);
    }

    #[test]
    fn validation() {
        assert!(PredictionRule::attenuated(0.0, vec![0]).validate(3).is_err());
        assert!(PredictionRule::attenuated(1.0, vec![]).validate(3).is_err());
        assert!(PredictionRule::attenuated(1.0, vec![3]).validate(3).is_err());
        assert!(fit_rule(&SimulatedSample { z: vec![], y: vec![] }, &PredictionRule::trees(vec![0]), 1).is_err());
    }
}
