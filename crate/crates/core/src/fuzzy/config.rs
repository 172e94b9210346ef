//! Rule-base file loading.
//!
//! The file is TOML. Variables are declared as `[[input]]` / `[[output]]`
//! tables with a `universe = [min, max]` and a list of terms, each either a
//! `triangle = [a, b, c]` or a `trapezoid = [a, b, c, d]`. Rules are plain
//! strings of the form
//!
//! ```text
//! IF offset IS NS AND angle IS ZE THEN steer IS PS, left IS FAST, right IS SLOW
//! ```
//!
//! Keywords are case-insensitive; consequents are separated by `,` or `AND`.
//! An optional `[mirror]` table names the variable pairs that swap and the
//! variables that change sign under a left/right reflection; the validator
//! uses it to check rule symmetry.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use super::{Clause, FuzzyController, LinguisticVariable, MembershipFunction, MirrorMap, Rule, Term};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path, line, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line containing byte offset `pos`.
pub fn line_of(src: &str, pos: usize) -> usize {
    src[..pos.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub(crate) fn toml_error(src: &str, path: &str, err: &toml::de::Error) -> ConfigError {
    ConfigError {
        path: path.to_string(),
        line: err.span().map(|s| line_of(src, s.start)),
        message: err.message().trim().to_string(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleBaseFile {
    #[serde(default)]
    rulebase: RulesSection,
    #[serde(default)]
    mirror: MirrorSection,
    #[serde(default)]
    input: Vec<Spanned<VariableDef>>,
    #[serde(default)]
    output: Vec<Spanned<VariableDef>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesSection {
    #[serde(default)]
    rules: Vec<Spanned<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MirrorSection {
    #[serde(default)]
    swap: Vec<[String; 2]>,
    #[serde(default)]
    negate: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableDef {
    name: String,
    universe: [f64; 2],
    terms: Vec<Spanned<TermDef>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDef {
    label: String,
    triangle: Option<[f64; 3]>,
    trapezoid: Option<[f64; 4]>,
}

pub fn load_controller(path: &Path) -> Result<FuzzyController, ConfigError> {
    let shown = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: shown.clone(),
        line: None,
        message: format!("cannot read rule base: {e}"),
    })?;
    parse_controller(&src, &shown)
}

/// Parses a rule-base document. `path` is only used in error messages.
pub fn parse_controller(src: &str, path: &str) -> Result<FuzzyController, ConfigError> {
    let err_at = |span: Range<usize>, message: String| ConfigError {
        path: path.to_string(),
        line: Some(line_of(src, span.start)),
        message,
    };
    let file: RuleBaseFile = toml::from_str(src).map_err(|e| toml_error(src, path, &e))?;

    let build_vars = |defs: &[Spanned<VariableDef>]| -> Result<Vec<LinguisticVariable>, ConfigError> {
        defs.iter()
            .map(|def| {
                let span = def.span();
                let def = def.get_ref();
                let terms = def
                    .terms
                    .iter()
                    .map(|t| {
                        let tspan = t.span();
                        let t = t.get_ref();
                        let mf = match (t.triangle, t.trapezoid) {
                            (Some([a, b, c]), None) => MembershipFunction::triangular(a, b, c),
                            (None, Some([a, b, c, d])) => MembershipFunction::trapezoidal(a, b, c, d),
                            _ => {
                                return Err(err_at(
                                    tspan,
                                    format!("term {}: give exactly one of `triangle` or `trapezoid`", t.label),
                                ))
                            }
                        }
                        .map_err(|e| err_at(tspan.clone(), format!("term {}: {e}", t.label)))?;
                        Ok(Term {
                            label: t.label.clone(),
                            mf,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                LinguisticVariable::new(def.name.clone(), def.universe[0], def.universe[1], terms)
                    .map_err(|e| err_at(span.clone(), e.to_string()))
            })
            .collect()
    };
    let inputs = build_vars(&file.input)?;
    let outputs = build_vars(&file.output)?;

    let rules = file
        .rulebase
        .rules
        .iter()
        .map(|r| {
            let line = line_of(src, r.span().start);
            parse_rule(r.get_ref())
                .map(|mut rule| {
                    rule.line = Some(line);
                    rule
                })
                .map_err(|m| ConfigError {
                    path: path.to_string(),
                    line: Some(line),
                    message: m,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mirror = MirrorMap {
        swap: file.mirror.swap.into_iter().map(|[a, b]| (a, b)).collect(),
        negate: file.mirror.negate,
    };
    FuzzyController::new(inputs, outputs, rules, mirror).map_err(|e| ConfigError {
        path: path.to_string(),
        line: None,
        message: e.to_string(),
    })
}

/// Parses `IF v IS T [AND v IS T]* THEN v IS T [(,|AND) v IS T]*`.
pub fn parse_rule(text: &str) -> Result<Rule, String> {
    let spaced = text.replace(',', " , ");
    let tokens: Vec<&str> = spaced.split_whitespace().collect();
    let kw = |tok: Option<&&str>, word: &str| tok.is_some_and(|t| t.eq_ignore_ascii_case(word));

    if !kw(tokens.first(), "IF") {
        return Err(format!("rule must start with IF: `{text}`"));
    }
    let then = tokens
        .iter()
        .position(|t| t.eq_ignore_ascii_case("THEN"))
        .ok_or_else(|| format!("rule has no THEN: `{text}`"))?;

    fn clauses(tokens: &[&str], allow_comma: bool, text: &str) -> Result<Vec<Clause>, String> {
        let mut out = Vec::new();
        let mut i = 0;
        loop {
            if i + 3 > tokens.len() {
                return Err(format!("expected `<variable> IS <term>` in `{text}`"));
            }
            let (var, is, term) = (tokens[i], tokens[i + 1], tokens[i + 2]);
            if !is.eq_ignore_ascii_case("IS") || var == "," || term == "," {
                return Err(format!("expected `<variable> IS <term>`, found `{var} {is} {term}` in `{text}`"));
            }
            out.push(Clause::new(var, term));
            i += 3;
            if i == tokens.len() {
                return Ok(out);
            }
            let sep = tokens[i];
            let ok = sep.eq_ignore_ascii_case("AND") || (allow_comma && sep == ",");
            if !ok {
                return Err(format!("unexpected `{sep}` in `{text}`"));
            }
            i += 1;
        }
    }

    let antecedent = clauses(&tokens[1..then], false, text)?;
    let consequent = clauses(&tokens[then + 1..], true, text)?;
    Ok(Rule {
        antecedent,
        consequent,
        line: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rule_text() {
        let r = parse_rule("IF offset IS NS AND angle IS ZE THEN steer IS PS, left IS FAST, right IS SLOW").unwrap();
        assert_eq!(r.antecedent, vec![Clause::new("offset", "NS"), Clause::new("angle", "ZE")]);
        assert_eq!(r.consequent.len(), 3);
        assert_eq!(r.consequent[2], Clause::new("right", "SLOW"));
        let r2 = parse_rule("if speed is MED then left is MED and right is MED").unwrap();
        assert_eq!(r2.consequent.len(), 2);
    }

    #[test]
    fn rule_syntax_errors() {
        assert!(parse_rule("offset IS NS THEN steer IS PS").is_err());
        assert!(parse_rule("IF offset IS NS steer IS PS").is_err());
        assert!(parse_rule("IF offset NS THEN steer IS PS").is_err());
        assert!(parse_rule("IF offset IS NS, angle IS ZE THEN steer IS PS").is_err());
        assert!(parse_rule("IF offset IS NS THEN").is_err());
        assert!(parse_rule("IF THEN steer IS PS").is_err());
    }

    #[test]
    fn rule_errors_report_line_numbers() {
        let src = super::super::DEFAULT_RULEBASE.replacen(
            "\"IF offset IS ZE AND angle IS ZE THEN steer IS ZE\"",
            "\"IF offset IS ZE AND angle ZE THEN steer IS ZE\"",
            1,
        );
        assert_ne!(src, super::super::DEFAULT_RULEBASE, "fixture rule not found");
        let expected_line = src
            .lines()
            .position(|l| l.contains("angle ZE THEN"))
            .unwrap()
            + 1;
        let err = parse_controller(&src, "rules.toml").unwrap_err();
        assert_eq!(err.line, Some(expected_line));
        assert!(err.to_string().starts_with(&format!("rules.toml:{expected_line}:")));
    }

    #[test]
    fn toml_errors_report_line_numbers() {
        let src = "[rulebase]\nrules = [\n  \"IF a IS B THEN c IS D\"\n\n[[input]\n";
        let err = parse_controller(src, "bad.toml").unwrap_err();
        assert!(err.line.is_some());
        assert_eq!(err.path, "bad.toml");
    }

    #[test]
    fn bad_term_shape_reports_line() {
        let src = super::super::DEFAULT_RULEBASE.replacen("triangle = [-1.0, -0.5, 0.0]", "triangle = [0.0, -0.5, -1.0]", 1);
        assert_ne!(src, super::super::DEFAULT_RULEBASE, "fixture term not found");
        let line = src.lines().position(|l| l.contains("[0.0, -0.5, -1.0]")).unwrap() + 1;
        let err = parse_controller(&src, "r.toml").unwrap_err();
        assert_eq!(err.line, Some(line));
    }
}
