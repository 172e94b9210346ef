//! Static checks on a rule base.

use std::collections::BTreeSet;
use std::fmt;

use super::{Clause, FuzzyController, LinguisticVariable, MembershipFunction, Rule, OUTPUT_NAMES};

/// Grid points per input used for the coverage check.
const COVERAGE_SAMPLES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagnosticKind {
    UnknownVariable { variable: String },
    UnknownTerm { variable: String, term: String },
    EmptyRule,
    NoCoverage { output: String },
    Asymmetric { mirror: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    /// 1-based rule-base line, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(l) => write!(f, "{sev}: line {l}: {}", self.message),
            None => write!(f, "{sev}: {}", self.message),
        }
    }
}

/// Reports unresolved references, outputs left uncovered on a sampled input
/// grid, and rules whose left/right mirror image is missing (warnings).
pub fn validate_rulebase(ctrl: &FuzzyController) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for rule in ctrl.rules() {
        check_references(ctrl, rule, &mut diags);
    }
    check_coverage(ctrl, &mut diags);
    check_symmetry(ctrl, &mut diags);
    diags
}

fn check_references(ctrl: &FuzzyController, rule: &Rule, diags: &mut Vec<Diagnostic>) {
    if rule.antecedent.is_empty() || rule.consequent.is_empty() {
        diags.push(Diagnostic {
            severity: Severity::Error,
            kind: DiagnosticKind::EmptyRule,
            line: rule.line,
            message: format!("rule `{rule}` needs at least one condition and one conclusion"),
        });
    }
    let sides: [(&[Clause], &[LinguisticVariable], &str); 2] = [
        (&rule.antecedent, ctrl.inputs(), "input"),
        (&rule.consequent, ctrl.outputs(), "output"),
    ];
    for (clauses, vars, kind) in sides {
        for c in clauses {
            match vars.iter().find(|v| v.name == c.variable) {
                None => diags.push(Diagnostic {
                    severity: Severity::Error,
                    kind: DiagnosticKind::UnknownVariable {
                        variable: c.variable.clone(),
                    },
                    line: rule.line,
                    message: format!("unknown {kind} variable `{}` in `{rule}`", c.variable),
                }),
                Some(v) if v.term_index(&c.term).is_none() => diags.push(Diagnostic {
                    severity: Severity::Error,
                    kind: DiagnosticKind::UnknownTerm {
                        variable: c.variable.clone(),
                        term: c.term.clone(),
                    },
                    line: rule.line,
                    message: format!("variable `{}` has no term `{}` in `{rule}`", c.variable, c.term),
                }),
                Some(_) => {}
            }
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn check_coverage(ctrl: &FuzzyController, diags: &mut Vec<Diagnostic>) {
    let axes: Vec<Vec<f64>> = ctrl
        .inputs()
        .iter()
        .map(|v| {
            (0..COVERAGE_SAMPLES)
                .map(|i| v.min + (v.max - v.min) * i as f64 / (COVERAGE_SAMPLES - 1) as f64)
                .collect()
        })
        .collect();
    let mut uncovered: [Option<[f64; 6]>; 3] = [None; 3];
    let mut idx = [0usize; 6];
    'grid: loop {
        let point: [f64; 6] = std::array::from_fn(|k| axes[k][idx[k]]);
        let covered = ctrl.outputs_covered(&point);
        for o in 0..3 {
            if !covered[o] && uncovered[o].is_none() {
                uncovered[o] = Some(point);
            }
        }
        for k in 0..6 {
            idx[k] += 1;
            if idx[k] < COVERAGE_SAMPLES {
                continue 'grid;
            }
            idx[k] = 0;
        }
        break;
    }
    for (o, miss) in uncovered.iter().enumerate() {
        if let Some(p) = miss {
            diags.push(Diagnostic {
                severity: Severity::Error,
                kind: DiagnosticKind::NoCoverage {
                    output: OUTPUT_NAMES[o].to_string(),
                },
                line: None,
                message: format!("no rule drives output `{}` at inputs {:?}", OUTPUT_NAMES[o], p),
            });
        }
    }
}

fn same_shape(a: &MembershipFunction, b: &MembershipFunction) -> bool {
    let (pa, pb) = (a.params(), b.params());
    pa.len() == pb.len() && pa.iter().zip(&pb).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Mirror image of one clause, or `None` when the reflected term does not exist.
fn mirror_clause(vars: &[LinguisticVariable], ctrl: &FuzzyController, c: &Clause) -> Option<Clause> {
    let map = ctrl.mirror();
    let var = vars.iter().find(|v| v.name == c.variable)?;
    let partner_name = map.partner(&c.variable);
    let partner = vars.iter().find(|v| v.name == partner_name)?;
    let term = &var.terms[var.term_index(&c.term)?];
    if map.negates(&c.variable) {
        let want = term.mf.mirrored();
        let t = partner.terms.iter().find(|t| same_shape(&t.mf, &want))?;
        Some(Clause::new(partner_name, t.label.clone()))
    } else {
        partner.term_index(&c.term)?;
        Some(Clause::new(partner_name, c.term.clone()))
    }
}

type RuleKey = (BTreeSet<Clause>, BTreeSet<Clause>);

fn key(antecedent: &[Clause], consequent: &[Clause]) -> RuleKey {
    (
        antecedent.iter().cloned().collect(),
        consequent.iter().cloned().collect(),
    )
}

fn check_symmetry(ctrl: &FuzzyController, diags: &mut Vec<Diagnostic>) {
    let existing: BTreeSet<RuleKey> = ctrl.rules().iter().map(|r| key(&r.antecedent, &r.consequent)).collect();
    for rule in ctrl.rules() {
        let ante: Option<Vec<Clause>> = rule.antecedent.iter().map(|c| mirror_clause(ctrl.inputs(), ctrl, c)).collect();
        let cons: Option<Vec<Clause>> = rule.consequent.iter().map(|c| mirror_clause(ctrl.outputs(), ctrl, c)).collect();
        // unresolved references are already reported as errors
        let (Some(ante), Some(cons)) = (ante, cons) else {
            continue;
        };
        if !existing.contains(&key(&ante, &cons)) {
            let mirror = Rule {
                antecedent: ante,
                consequent: cons,
                line: None,
            };
            diags.push(Diagnostic {
                severity: Severity::Warning,
                kind: DiagnosticKind::Asymmetric {
                    mirror: mirror.to_string(),
                },
                line: rule.line,
                message: format!("rule `{rule}` has no mirror rule `{mirror}`"),
            });
        }
    }
}
