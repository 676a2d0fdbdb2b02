//! Mamdani inference of the cost limit from traffic density and risk level.
//!
//! Inputs are fuzzified with piecewise-linear sets, each rule fires at the
//! minimum of its two antecedent degrees, rules sharing a consequent are
//! combined by maximum, and the clipped output sets are max-aggregated and
//! reduced to their centroid.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FuzzyError {
    #[error("no rule fired")]
    NoRuleFired,
    #[error("membership `{label}`: {reason}")]
    InvalidSet { label: String, reason: String },
    #[error("variable `{0}` has an empty or inverted domain")]
    InvalidDomain(String),
    #[error("unknown label `{label}` for `{variable}`")]
    UnknownLabel { variable: String, label: String },
    #[error("rule table is incomplete: missing {risk} x {density}")]
    MissingRule { risk: String, density: String },
    #[error("duplicate rule for {risk} x {density}")]
    DuplicateRule { risk: String, density: String },
    #[error("grid step must be positive and smaller than the output domain")]
    InvalidGrid,
    #[error("input {value} is not finite")]
    NonFinite { value: f64 },
    #[error("activation vector has {got} entries, expected {expected}")]
    ActivationLength { got: usize, expected: usize },
    #[error("failed to read fuzzy definition: {0}")]
    Io(String),
    #[error("failed to parse fuzzy definition: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipKind {
    Triangle,
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipFunction {
    pub label: String,
    pub kind: MembershipKind,
    pub breakpoints: Vec<f64>,
}

impl MembershipFunction {
    pub fn triangle(label: &str, a: f64, b: f64, c: f64) -> Self {
        Self { label: label.into(), kind: MembershipKind::Triangle, breakpoints: vec![a, b, c] }
    }

    pub fn trapezoid(label: &str, a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { label: label.into(), kind: MembershipKind::Trapezoid, breakpoints: vec![a, b, c, d] }
    }

    pub fn validate(&self) -> Result<(), FuzzyError> {
        let want = match self.kind {
            MembershipKind::Triangle => 3,
            MembershipKind::Trapezoid => 4,
        };
        let bad = |reason: String| FuzzyError::InvalidSet { label: self.label.clone(), reason };
        if self.breakpoints.len() != want {
            return Err(bad(format!("expected {want} breakpoints, got {}", self.breakpoints.len())));
        }
        if self.breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(bad("breakpoints must be finite".into()));
        }
        if self.breakpoints.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("breakpoints must be nondecreasing".into()));
        }
        Ok(())
    }

    fn corners(&self) -> [f64; 4] {
        match self.breakpoints[..] {
            [a, b, c] => [a, b, b, c],
            [a, b, c, d] => [a, b, c, d],
            _ => unreachable!("validated breakpoint count"),
        }
    }

    /// Degree of membership of `x`. Vertical edges (coincident breakpoints)
    /// belong to the plateau.
    pub fn degree(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.corners();
        if x < a || x > d {
            0.0
        } else if x >= b && x <= c {
            1.0
        } else if x < b {
            (x - a) / (b - a)
        } else {
            (d - x) / (d - c)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyVariable {
    pub name: String,
    pub domain: [f64; 2],
    pub sets: Vec<MembershipFunction>,
}

impl FuzzyVariable {
    pub fn validate(&self) -> Result<(), FuzzyError> {
        let [lo, hi] = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || self.sets.is_empty() {
            return Err(FuzzyError::InvalidDomain(self.name.clone()));
        }
        for (i, s) in self.sets.iter().enumerate() {
            s.validate()?;
            if self.sets[..i].iter().any(|o| o.label == s.label) {
                return Err(FuzzyError::InvalidSet { label: s.label.clone(), reason: "duplicate label".into() });
            }
        }
        Ok(())
    }

    pub fn index_of(&self, label: &str) -> Result<usize, FuzzyError> {
        self.sets
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| FuzzyError::UnknownLabel { variable: self.name.clone(), label: label.into() })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.sets.iter().map(|s| s.label.as_str()).collect()
    }

    /// Membership degree in every set, in set order. `value` is clamped to the domain.
    pub fn fuzzify(&self, value: f64) -> Vec<f64> {
        let x = value.clamp(self.domain[0], self.domain[1]);
        self.sets.iter().map(|s| s.degree(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub risk: String,
    pub density: String,
    pub cost_limit: String,
}

/// Complete map from (risk label, density label) to a cost-limit label.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    /// `consequent[risk][density]` is an index into the cost-limit sets.
    consequent: Vec<Vec<usize>>,
}

impl RuleTable {
    pub fn new(rules: &[Rule], risk: &FuzzyVariable, density: &FuzzyVariable, cost: &FuzzyVariable) -> Result<Self, FuzzyError> {
        let mut cells = vec![vec![None; density.sets.len()]; risk.sets.len()];
        for r in rules {
            let (i, j) = (risk.index_of(&r.risk)?, density.index_of(&r.density)?);
            let k = cost.index_of(&r.cost_limit)?;
            if cells[i][j].replace(k).is_some() {
                return Err(FuzzyError::DuplicateRule { risk: r.risk.clone(), density: r.density.clone() });
            }
        }
        let consequent = cells
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(j, k)| {
                        k.ok_or_else(|| FuzzyError::MissingRule {
                            risk: risk.sets[i].label.clone(),
                            density: density.sets[j].label.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { consequent })
    }

    pub fn consequent(&self, risk: usize, density: usize) -> usize {
        self.consequent[risk][density]
    }
}

/// Min-activation of every rule, max-combined per output label.
pub fn evaluate_rules(mu_density: &[f64], mu_risk: &[f64], table: &RuleTable, outputs: usize) -> Vec<f64> {
    let mut act = vec![0.0_f64; outputs];
    for (i, &r) in mu_risk.iter().enumerate() {
        for (j, &d) in mu_density.iter().enumerate() {
            let k = table.consequent(i, j);
            act[k] = act[k].max(r.min(d));
        }
    }
    act
}

/// Centroid of `max_k min(activation_k, μ_k(z))` over the output domain,
/// integrated with the trapezoidal rule on a uniform grid.
pub fn defuzzify_centroid(activations: &[f64], output: &FuzzyVariable, grid_step: f64) -> Result<f64, FuzzyError> {
    if activations.len() != output.sets.len() {
        return Err(FuzzyError::ActivationLength { got: activations.len(), expected: output.sets.len() });
    }
    if !activations.iter().any(|a| *a > 0.0) {
        return Err(FuzzyError::NoRuleFired);
    }
    let [lo, hi] = output.domain;
    if !(grid_step > 0.0 && grid_step < hi - lo) {
        return Err(FuzzyError::InvalidGrid);
    }
    let n = ((hi - lo) / grid_step).round() as usize;
    let h = (hi - lo) / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=n {
        let z = lo + i as f64 * h;
        let g = output
            .sets
            .iter()
            .zip(activations)
            .map(|(s, &a)| a.min(s.degree(z)))
            .fold(0.0_f64, f64::max);
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        num += w * z * g;
        den += w * g;
    }
    if den <= 0.0 {
        return Err(FuzzyError::NoRuleFired);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FuzzyDefinition {
    grid_step: f64,
    density: FuzzyVariable,
    risk: FuzzyVariable,
    cost_limit: FuzzyVariable,
    rules: Vec<Rule>,
}

/// Complete two-input inference system.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySystem {
    pub density: FuzzyVariable,
    pub risk: FuzzyVariable,
    pub cost_limit: FuzzyVariable,
    pub rules: Vec<Rule>,
    pub grid_step: f64,
    table: RuleTable,
}

/// Per-stage values of one inference, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub mu_density: Vec<f64>,
    pub mu_risk: Vec<f64>,
    pub activations: Vec<f64>,
    pub eta: f64,
}

impl FuzzySystem {
    pub fn new(
        density: FuzzyVariable,
        risk: FuzzyVariable,
        cost_limit: FuzzyVariable,
        rules: Vec<Rule>,
        grid_step: f64,
    ) -> Result<Self, FuzzyError> {
        density.validate()?;
        risk.validate()?;
        cost_limit.validate()?;
        if !(grid_step > 0.0 && grid_step < cost_limit.domain[1] - cost_limit.domain[0]) {
            return Err(FuzzyError::InvalidGrid);
        }
        let table = RuleTable::new(&rules, &risk, &density, &cost_limit)?;
        Ok(Self { density, risk, cost_limit, rules, grid_step, table })
    }

    pub fn table(&self) -> &RuleTable {
        &self.table
    }

    pub fn with_grid_step(&self, grid_step: f64) -> Result<Self, FuzzyError> {
        Self::new(self.density.clone(), self.risk.clone(), self.cost_limit.clone(), self.rules.clone(), grid_step)
    }

    pub fn infer(&self, density: f64, risk_percent: f64) -> Result<Inference, FuzzyError> {
        for value in [density, risk_percent] {
            if !value.is_finite() {
                return Err(FuzzyError::NonFinite { value });
            }
        }
        let mu_density = self.density.fuzzify(density);
        let mu_risk = self.risk.fuzzify(risk_percent);
        let activations = evaluate_rules(&mu_density, &mu_risk, &self.table, self.cost_limit.sets.len());
        let eta = defuzzify_centroid(&activations, &self.cost_limit, self.grid_step)?;
        Ok(Inference { mu_density, mu_risk, activations, eta })
    }

    pub fn infer_cost_limit(&self, density: f64, risk_percent: f64) -> Result<f64, FuzzyError> {
        Ok(self.infer(density, risk_percent)?.eta)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, FuzzyError> {
        let def: FuzzyDefinition = toml::from_str(text).map_err(|e| FuzzyError::Parse(e.to_string()))?;
        Self::new(def.density, def.risk, def.cost_limit, def.rules, def.grid_step)
    }

    pub fn load(path: &Path) -> Result<Self, FuzzyError> {
        let text = std::fs::read_to_string(path).map_err(|e| FuzzyError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let def = FuzzyDefinition {
            grid_step: self.grid_step,
            density: self.density.clone(),
            risk: self.risk.clone(),
            cost_limit: self.cost_limit.clone(),
            rules: self.rules.clone(),
        };
        toml::to_string(&def).expect("fuzzy definition serializes")
    }
}

impl Default for FuzzySystem {
    fn default() -> Self {
        use MembershipFunction as M;
        let density = FuzzyVariable {
            name: "traffic_density".into(),
            domain: [0.5, 1.0],
            sets: vec![
                M::trapezoid("low", 0.5, 0.5, 0.5, 0.7),
                M::trapezoid("medium", 0.5, 0.7, 0.8, 1.0),
                M::trapezoid("high", 0.8, 1.0, 1.0, 1.0),
            ],
        };
        let risk = FuzzyVariable {
            name: "risk_level".into(),
            domain: [0.0, 100.0],
            sets: vec![
                M::trapezoid("conservative", 0.0, 0.0, 30.0, 50.0),
                M::triangle("neutral", 30.0, 50.0, 70.0),
                M::trapezoid("aggressive", 50.0, 70.0, 100.0, 100.0),
            ],
        };
        let cost_limit = FuzzyVariable {
            name: "cost_limit".into(),
            domain: [0.0, 0.1],
            sets: vec![
                M::triangle("small", 0.0, 0.0, 0.05),
                M::triangle("medium", 0.0, 0.05, 0.1),
                M::triangle("large", 0.05, 0.1, 0.1),
            ],
        };
        let table = [
            ("conservative", [("high", "small"), ("medium", "small"), ("low", "medium")]),
            ("neutral", [("high", "small"), ("medium", "medium"), ("low", "large")]),
            ("aggressive", [("high", "medium"), ("medium", "large"), ("low", "large")]),
        ];
        let rules = table
            .iter()
            .flat_map(|(risk, row)| {
                row.iter().map(move |(density, out)| Rule {
                    risk: (*risk).into(),
                    density: (*density).into(),
                    cost_limit: (*out).into(),
                })
            })
            .collect();
        Self::new(density, risk, cost_limit, rules, 1e-4).expect("built-in fuzzy system is valid")
    }
}

/// Cost limit from the built-in system.
pub fn infer_cost_limit(density: f64, risk_percent: f64) -> Result<f64, FuzzyError> {
    FuzzySystem::default().infer_cost_limit(density, risk_percent)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        let t = MembershipFunction::trapezoid("t", 1.0, 2.0, 3.0, 4.0);
        assert_eq!(t.degree(2.5), 1.0);
        assert_eq!(t.degree(0.5), 0.0);
        assert_eq!(t.degree(4.5), 0.0);
        assert_eq!(t.degree(1.5), 0.5);
        let shoulder = MembershipFunction::triangle("s", 0.0, 0.0, 0.05);
        assert_eq!(shoulder.degree(0.0), 1.0);
    }

    #[test]
    fn medium_density_plateau() {
        let sys = FuzzySystem::default();
        assert_eq!(sys.density.fuzzify(0.75), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn single_rule_activation() {
        let sys = FuzzySystem::default();
        // density order low, medium, high; risk order conservative, neutral, aggressive
        let act = evaluate_rules(&[0.0, 0.0, 0.6], &[0.4, 0.0, 0.0], sys.table(), 3);
        assert_eq!(act, vec![0.4, 0.0, 0.0]);
        let act = evaluate_rules(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], sys.table(), 3);
        assert_eq!(act[2], 1.0);
        assert_eq!(evaluate_rules(&[0.0; 3], &[0.0; 3], sys.table(), 3), vec![0.0; 3]);
    }

    #[test]
    fn symmetric_set_centroid_is_its_apex() {
        let sys = FuzzySystem::default();
        let eta = defuzzify_centroid(&[0.0, 1.0, 0.0], &sys.cost_limit, 1e-4).unwrap();
        assert!((eta - 0.05).abs() < 1e-9);
        assert_eq!(defuzzify_centroid(&[0.0; 3], &sys.cost_limit, 1e-4), Err(FuzzyError::NoRuleFired));
    }

    #[test]
    fn small_set_alone_has_its_own_centroid() {
        let sys = FuzzySystem::default();
        let eta = defuzzify_centroid(&[1.0, 0.0, 0.0], &sys.cost_limit, 1e-4).unwrap();
        assert!((eta - 0.05 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn incomplete_table_is_rejected() {
        let sys = FuzzySystem::default();
        let rules = sys.rules[1..].to_vec();
        let err = FuzzySystem::new(sys.density, sys.risk, sys.cost_limit, rules, 1e-4).unwrap_err();
        assert!(matches!(err, FuzzyError::MissingRule { .. }));
    }

    #[test]
    fn toml_round_trip() {
        let sys = FuzzySystem::default();
        let back = FuzzySystem::from_toml_str(&sys.to_toml_string()).unwrap();
        assert_eq!(back, sys);
    }
}
