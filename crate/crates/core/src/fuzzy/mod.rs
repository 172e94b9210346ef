//! Mamdani fuzzy controller: min for AND, min-clipping implication, max
//! aggregation and centroid defuzzification.
//!
//! The controller has a fixed roster of six crisp inputs (line offset, line
//! angle, three sonar zone distances, reference speed) and three crisp outputs
//! (steering bias, left wheel speed, right wheel speed). Variables, terms and
//! rules are loaded from a rule-base file; see [`config`].

pub mod config;
mod validate;

use thiserror::Error;

pub use config::{load_controller, parse_controller, ConfigError};
pub use validate::{validate_rulebase, Diagnostic, DiagnosticKind, Severity};

/// Number of samples across an output universe used for the centroid.
pub const CENTROID_SAMPLES: usize = 1001;

pub const INPUT_NAMES: [&str; 6] = [
    "offset",
    "angle",
    "sonar_left",
    "sonar_center",
    "sonar_right",
    "speed",
];
pub const OUTPUT_NAMES: [&str; 3] = ["steer", "left", "right"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("invalid membership function {0}")]
    InvalidShape(String),
    #[error("variable `{name}`: {reason}")]
    InvalidVariable { name: String, reason: String },
    #[error("expected {expected} {kind} variables named {names:?}, found {found:?}")]
    Roster {
        kind: &'static str,
        expected: usize,
        names: Vec<&'static str>,
        found: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipFunction {
    Triangular { a: f64, b: f64, c: f64 },
    Trapezoidal { a: f64, b: f64, c: f64, d: f64 },
}

impl MembershipFunction {
    pub fn triangular(a: f64, b: f64, c: f64) -> Result<Self, FuzzyError> {
        let mf = MembershipFunction::Triangular { a, b, c };
        mf.check()?;
        Ok(mf)
    }

    pub fn trapezoidal(a: f64, b: f64, c: f64, d: f64) -> Result<Self, FuzzyError> {
        let mf = MembershipFunction::Trapezoidal { a, b, c, d };
        mf.check()?;
        Ok(mf)
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            MembershipFunction::Triangular { a, b, c } => vec![a, b, c],
            MembershipFunction::Trapezoidal { a, b, c, d } => vec![a, b, c, d],
        }
    }

    fn check(&self) -> Result<(), FuzzyError> {
        let p = self.params();
        if p.iter().any(|v| !v.is_finite()) || p.windows(2).any(|w| w[0] > w[1]) {
            return Err(FuzzyError::InvalidShape(format!(
                "{self:?}: parameters must be finite and non-decreasing"
            )));
        }
        Ok(())
    }

    /// Support interval `[first, last]`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            MembershipFunction::Triangular { a, c, .. } => (a, c),
            MembershipFunction::Trapezoidal { a, d, .. } => (a, d),
        }
    }

    /// The shape reflected through zero.
    pub fn mirrored(&self) -> Self {
        match *self {
            MembershipFunction::Triangular { a, b, c } => MembershipFunction::Triangular { a: -c, b: -b, c: -a },
            MembershipFunction::Trapezoidal { a, b, c, d } => {
                MembershipFunction::Trapezoidal { a: -d, b: -c, c: -b, d: -a }
            }
        }
    }

    pub fn grade(&self, u: f64) -> f64 {
        membership_grade(self, u)
    }
}

/// Piecewise-linear grade in `[0, 1]`; zero outside the support.
pub fn membership_grade(mf: &MembershipFunction, u: f64) -> f64 {
    let (a, b, c, d) = match *mf {
        MembershipFunction::Triangular { a, b, c } => (a, b, b, c),
        MembershipFunction::Trapezoidal { a, b, c, d } => (a, b, c, d),
    };
    if (b..=c).contains(&u) {
        1.0
    } else if u > a && u < b {
        (u - a) / (b - a)
    } else if u > c && u < d {
        (d - u) / (d - c)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub label: String,
    pub mf: MembershipFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticVariable {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub terms: Vec<Term>,
}

impl LinguisticVariable {
    /// Checks the universe, that every term's support lies inside it, and that
    /// the terms leave no gap in the universe.
    pub fn new(name: impl Into<String>, min: f64, max: f64, terms: Vec<Term>) -> Result<Self, FuzzyError> {
        let var = LinguisticVariable {
            name: name.into(),
            min,
            max,
            terms,
        };
        let bad = |reason: String| FuzzyError::InvalidVariable {
            name: var.name.clone(),
            reason,
        };
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(bad(format!("universe [{min}, {max}] is empty or not finite")));
        }
        if var.terms.is_empty() {
            return Err(bad("no terms".into()));
        }
        for t in &var.terms {
            t.mf.check()?;
            let (lo, hi) = t.mf.support();
            if lo < min - 1e-12 || hi > max + 1e-12 {
                return Err(bad(format!("term {} support [{lo}, {hi}] leaves the universe", t.label)));
            }
            if var.terms.iter().filter(|o| o.label == t.label).count() > 1 {
                return Err(bad(format!("duplicate term {}", t.label)));
            }
        }
        if let Some(u) = var.first_gap() {
            return Err(bad(format!("no term covers u = {u}")));
        }
        Ok(var)
    }

    fn first_gap(&self) -> Option<f64> {
        const N: usize = 2000;
        (0..=N)
            .map(|i| self.min + (self.max - self.min) * i as f64 / N as f64)
            .find(|&u| self.terms.iter().all(|t| t.mf.grade(u) <= 0.0))
    }

    pub fn term_index(&self, label: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.label == label)
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.min, self.max)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// A variable/term pair as written in a rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clause {
    pub variable: String,
    pub term: String,
}

impl Clause {
    pub fn new(variable: impl Into<String>, term: impl Into<String>) -> Self {
        Clause {
            variable: variable.into(),
            term: term.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub antecedent: Vec<Clause>,
    pub consequent: Vec<Clause>,
    /// 1-based source line, when loaded from a file.
    pub line: Option<usize>,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ante: Vec<String> = self.antecedent.iter().map(|c| format!("{} IS {}", c.variable, c.term)).collect();
        let cons: Vec<String> = self.consequent.iter().map(|c| format!("{} IS {}", c.variable, c.term)).collect();
        write!(f, "IF {} THEN {}", ante.join(" AND "), cons.join(", "))
    }
}

/// Which variables trade places, and which flip sign, under a left/right mirror.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MirrorMap {
    pub swap: Vec<(String, String)>,
    pub negate: Vec<String>,
}

impl MirrorMap {
    pub fn partner<'a>(&'a self, var: &'a str) -> &'a str {
        for (a, b) in &self.swap {
            if a == var {
                return b;
            }
            if b == var {
                return a;
            }
        }
        var
    }

    pub fn negates(&self, var: &str) -> bool {
        self.negate.iter().any(|v| v == var)
    }
}

/// Crisp controller inputs in roster order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerInputs {
    pub offset: f64,
    pub angle: f64,
    pub sonar_left: f64,
    pub sonar_center: f64,
    pub sonar_right: f64,
    pub speed_ref: f64,
}

impl ControllerInputs {
    pub fn to_array(self) -> [f64; 6] {
        [
            self.offset,
            self.angle,
            self.sonar_left,
            self.sonar_center,
            self.sonar_right,
            self.speed_ref,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        ControllerInputs {
            offset: v[0],
            angle: v[1],
            sonar_left: v[2],
            sonar_center: v[3],
            sonar_right: v[4],
            speed_ref: v[5],
        }
    }

    /// Left/right reflection of the situation.
    pub fn mirrored(self) -> Self {
        ControllerInputs {
            offset: -self.offset,
            angle: -self.angle,
            sonar_left: self.sonar_right,
            sonar_center: self.sonar_center,
            sonar_right: self.sonar_left,
            speed_ref: self.speed_ref,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerOutput {
    /// `[steer, left, right]`
    pub values: [f64; 3],
    /// Set per output when no rule fired and the universe midpoint was returned.
    pub no_rule_fired: [bool; 3],
}

impl ControllerOutput {
    pub fn steer(&self) -> f64 {
        self.values[0]
    }
    pub fn left(&self) -> f64 {
        self.values[1]
    }
    pub fn right(&self) -> f64 {
        self.values[2]
    }
}

/// Rule with variable/term names resolved to indices.
#[derive(Debug, Clone)]
struct CompiledRule {
    antecedent: Vec<(usize, usize)>,
    consequent: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct FuzzyController {
    inputs: Vec<LinguisticVariable>,
    outputs: Vec<LinguisticVariable>,
    rules: Vec<Rule>,
    mirror: MirrorMap,
    compiled: Vec<CompiledRule>,
}

impl FuzzyController {
    /// Builds a controller. The variable roster is enforced here; rule
    /// references are not, so that [`validate_rulebase`] can report them.
    /// Rules with unresolved references never fire.
    pub fn new(
        inputs: Vec<LinguisticVariable>,
        outputs: Vec<LinguisticVariable>,
        rules: Vec<Rule>,
        mirror: MirrorMap,
    ) -> Result<Self, FuzzyError> {
        check_roster("input", &inputs, &INPUT_NAMES)?;
        check_roster("output", &outputs, &OUTPUT_NAMES)?;
        let mut ctrl = FuzzyController {
            inputs,
            outputs,
            rules,
            mirror,
            compiled: Vec::new(),
        };
        ctrl.compiled = ctrl.rules.iter().filter_map(|r| ctrl.compile(r)).collect();
        Ok(ctrl)
    }

    /// The shipped reference rule base.
    pub fn default_controller() -> Self {
        parse_controller(DEFAULT_RULEBASE, "<builtin default rule base>")
            .expect("builtin rule base parses")
    }

    /// Same variables with a different rule list.
    pub fn with_rules(&self, rules: Vec<Rule>) -> Self {
        FuzzyController::new(self.inputs.clone(), self.outputs.clone(), rules, self.mirror.clone())
            .expect("roster already checked")
    }

    fn compile(&self, rule: &Rule) -> Option<CompiledRule> {
        let resolve = |vars: &[LinguisticVariable], c: &Clause| {
            let v = vars.iter().position(|v| v.name == c.variable)?;
            let t = vars[v].term_index(&c.term)?;
            Some((v, t))
        };
        let antecedent = rule
            .antecedent
            .iter()
            .map(|c| resolve(&self.inputs, c))
            .collect::<Option<Vec<_>>>()?;
        let consequent = rule
            .consequent
            .iter()
            .map(|c| resolve(&self.outputs, c))
            .collect::<Option<Vec<_>>>()?;
        if antecedent.is_empty() || consequent.is_empty() {
            return None;
        }
        Some(CompiledRule { antecedent, consequent })
    }

    pub fn inputs(&self) -> &[LinguisticVariable] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[LinguisticVariable] {
        &self.outputs
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn mirror(&self) -> &MirrorMap {
        &self.mirror
    }

    pub fn input(&self, name: &str) -> Option<&LinguisticVariable> {
        self.inputs.iter().find(|v| v.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&LinguisticVariable> {
        self.outputs.iter().find(|v| v.name == name)
    }

    /// Firing strength of each compiled rule for clamped crisp inputs.
    fn firing(&self, crisp: &[f64; 6]) -> Vec<f64> {
        let clamped: Vec<f64> = self.inputs.iter().zip(crisp).map(|(v, &u)| v.clamp(u)).collect();
        self.compiled
            .iter()
            .map(|r| {
                r.antecedent
                    .iter()
                    .map(|&(v, t)| self.inputs[v].terms[t].mf.grade(clamped[v]))
                    .fold(1.0_f64, f64::min)
            })
            .collect()
    }

    /// Per-output flag: does any rule with a consequent on that output fire
    /// with nonzero strength?
    pub(crate) fn outputs_covered(&self, crisp: &[f64; 6]) -> [bool; 3] {
        let mut covered = [false; 3];
        for (r, w) in self.compiled.iter().zip(self.firing(crisp)) {
            if w > 0.0 {
                for &(o, _) in &r.consequent {
                    covered[o] = true;
                }
            }
        }
        covered
    }

    pub fn infer(&self, inputs: &ControllerInputs) -> ControllerOutput {
        infer(self, inputs.to_array())
    }
}

fn check_roster(kind: &'static str, vars: &[LinguisticVariable], names: &[&'static str]) -> Result<(), FuzzyError> {
    let found: Vec<String> = vars.iter().map(|v| v.name.clone()).collect();
    if found.len() != names.len() || found.iter().zip(names).any(|(a, b)| a != b) {
        return Err(FuzzyError::Roster {
            kind,
            expected: names.len(),
            names: names.to_vec(),
            found,
        });
    }
    Ok(())
}

/// Runs one inference pass. Inputs are clamped into their universes first.
pub fn infer(ctrl: &FuzzyController, crisp: [f64; 6]) -> ControllerOutput {
    let strengths = ctrl.firing(&crisp);
    // clip level per (output, term): max firing over rules concluding it
    let mut levels: Vec<Vec<f64>> = ctrl.outputs.iter().map(|v| vec![0.0; v.terms.len()]).collect();
    for (rule, &w) in ctrl.compiled.iter().zip(&strengths) {
        if w <= 0.0 {
            continue;
        }
        for &(o, t) in &rule.consequent {
            levels[o][t] = levels[o][t].max(w);
        }
    }
    let mut out = ControllerOutput::default();
    for (o, var) in ctrl.outputs.iter().enumerate() {
        match centroid(var, &levels[o]) {
            Some(c) => out.values[o] = c,
            None => {
                out.values[o] = var.midpoint();
                out.no_rule_fired[o] = true;
            }
        }
    }
    out
}

/// Centroid of `max_t min(level_t, mf_t(u))` by the trapezoidal rule over
/// [`CENTROID_SAMPLES`] uniform samples. `None` when the aggregate has no area.
fn centroid(var: &LinguisticVariable, levels: &[f64]) -> Option<f64> {
    let active: Vec<(&MembershipFunction, f64)> = var
        .terms
        .iter()
        .zip(levels)
        .filter(|(_, &l)| l > 0.0)
        .map(|(t, &l)| (&t.mf, l))
        .collect();
    if active.is_empty() {
        return None;
    }
    let n = CENTROID_SAMPLES - 1;
    let step = (var.max - var.min) / n as f64;
    // samples outside every active support contribute exact zeros
    let (lo, hi) = active.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (mf, _)| {
        let (a, b) = mf.support();
        (lo.min(a), hi.max(b))
    });
    let first = (((lo - var.min) / step).floor() as isize - 1).max(0) as usize;
    let last = ((((hi - var.min) / step).ceil() as isize + 1).max(0) as usize).min(n);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in first..=last {
        let u = var.min + step * i as f64;
        let mut mu = 0.0_f64;
        for &(mf, l) in &active {
            mu = mu.max(mf.grade(u).min(l));
        }
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        num += w * mu * u;
        den += w * mu;
    }
    if den <= 0.0 {
        return None;
    }
    Some(num / den)
}

pub(crate) const DEFAULT_RULEBASE: &str = include_str!("../../data/rules/default.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grade_examples() {
        let tri = MembershipFunction::triangular(0.0, 1.0, 2.0).unwrap();
        assert_eq!(membership_grade(&tri, 1.0), 1.0);
        assert_eq!(membership_grade(&tri, 0.5), 0.5);
        assert_eq!(membership_grade(&tri, -0.1), 0.0);
        assert_eq!(membership_grade(&tri, 2.0), 0.0);
        let trap = MembershipFunction::trapezoidal(0.0, 1.0, 2.0, 3.0).unwrap();
        assert_eq!(membership_grade(&trap, 2.5), 0.5);
        assert_eq!(membership_grade(&trap, 1.5), 1.0);
        assert_eq!(membership_grade(&trap, 3.5), 0.0);
    }

    #[test]
    fn shoulder_trapezoid_is_one_at_edge() {
        let left = MembershipFunction::trapezoidal(-1.0, -1.0, -0.5, 0.0).unwrap();
        assert_eq!(left.grade(-1.0), 1.0);
        assert_eq!(left.grade(-0.25), 0.5);
    }

    #[test]
    fn rejects_unordered_shapes() {
        assert!(MembershipFunction::triangular(1.0, 0.0, 2.0).is_err());
        assert!(MembershipFunction::trapezoidal(0.0, 1.0, 3.0, 2.0).is_err());
        assert!(MembershipFunction::triangular(0.0, f64::NAN, 2.0).is_err());
    }

    #[test]
    fn variable_rejects_gaps_and_outside_support() {
        let t = |l: &str, a, b, c| Term {
            label: l.into(),
            mf: MembershipFunction::triangular(a, b, c).unwrap(),
        };
        assert!(LinguisticVariable::new("v", 0.0, 2.0, vec![t("A", 0.0, 0.5, 0.9), t("B", 1.0, 1.5, 2.0)]).is_err());
        assert!(LinguisticVariable::new("v", 0.0, 1.0, vec![t("A", -1.0, 0.0, 2.0)]).is_err());
        assert!(LinguisticVariable::new("v", 0.0, 2.0, vec![t("A", -0.0, 0.0, 1.1), t("B", 0.9, 2.0, 2.0)]).is_ok());
    }

    #[test]
    fn mirrored_shape_reflects_grades() {
        let mf = MembershipFunction::trapezoidal(-0.3, 0.1, 0.2, 0.9).unwrap();
        let m = mf.mirrored();
        for i in -20..=20 {
            let u = i as f64 * 0.05;
            assert_eq!(mf.grade(u), m.grade(-u));
        }
    }

    #[test]
    fn default_controller_loads() {
        let c = FuzzyController::default_controller();
        assert_eq!(c.inputs().len(), 6);
        assert_eq!(c.outputs().len(), 3);
        assert!(!c.rules().is_empty());
    }

    #[test]
    fn no_rules_gives_midpoints_and_flags() {
        let c = FuzzyController::default_controller().with_rules(vec![]);
        let out = infer(&c, [0.0, 0.0, 10.0, 10.0, 10.0, 0.4]);
        assert_eq!(out.no_rule_fired, [true; 3]);
        for (v, var) in out.values.iter().zip(c.outputs()) {
            assert_eq!(*v, var.midpoint());
        }
    }

    #[test]
    fn single_rule_symmetric_consequent_centroid() {
        let base = FuzzyController::default_controller();
        let rule = Rule {
            antecedent: vec![Clause::new("speed", "MED")],
            consequent: vec![Clause::new("steer", "PS")],
            line: None,
        };
        let c = base.with_rules(vec![rule]);
        let peak = match c.output("steer").unwrap().terms[c.output("steer").unwrap().term_index("PS").unwrap()].mf {
            MembershipFunction::Triangular { b, .. } => b,
            _ => unreachable!(),
        };
        let med = match c.input("speed").unwrap().terms[c.input("speed").unwrap().term_index("MED").unwrap()].mf {
            MembershipFunction::Triangular { b, .. } => b,
            MembershipFunction::Trapezoidal { b, .. } => b,
        };
        let out = infer(&c, [0.0, 0.0, 10.0, 10.0, 10.0, med]);
        // sample spacing of the steer universe bounds the discretisation error
        assert!((out.steer() - peak).abs() < 2e-3, "{} vs {peak}", out.steer());
        assert!(!out.no_rule_fired[0]);
        assert!(out.no_rule_fired[1] && out.no_rule_fired[2]);
    }

    #[test]
    fn clamps_out_of_range_inputs() {
        let c = FuzzyController::default_controller();
        let a = infer(&c, [5.0, 0.0, 10.0, 10.0, 10.0, 0.4]);
        let umax = c.input("offset").unwrap().max;
        let b = infer(&c, [umax, 0.0, 10.0, 10.0, 10.0, 0.4]);
        assert_eq!(a, b);
    }
}
