use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{KnowledgeBase, RuleKind};
use crate::rule::Formula;

/// Rules with at most this many variables are checked exhaustively.
pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 12;
/// Random assignments tried for rules above the exhaustive limit.
pub const SAMPLE_COUNT: usize = 10_000;
const SAMPLE_SEED: u64 = 0x6b62_6c69_6e74;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LintCode {
    UndefinedAtom,
    DuplicateName,
    UnsatisfiableRule,
    TautologyRule,
    UnusedFactor,
    OverrideShadow,
}

impl LintCode {
    pub fn as_str(self) -> &'static str {
        match self {
            LintCode::UndefinedAtom => "UNDEFINED_ATOM",
            LintCode::DuplicateName => "DUPLICATE_NAME",
            LintCode::UnsatisfiableRule => "UNSATISFIABLE_RULE",
            LintCode::TautologyRule => "TAUTOLOGY_RULE",
            LintCode::UnusedFactor => "UNUSED_FACTOR",
            LintCode::OverrideShadow => "OVERRIDE_SHADOW",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LintFinding {
    pub code: LintCode,
    pub subject: String,
    pub severity: Severity,
    pub message: String,
}

impl LintFinding {
    pub fn new(severity: Severity, code: LintCode, subject: impl Into<String>, message: impl Into<String>) -> Self {
        LintFinding {
            code,
            subject: subject.into(),
            severity,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// Two-valued evaluator over a bitmask; variables are indexed by position
/// in the rule's sorted free-variable set.
enum Compiled {
    Var(usize),
    Const(bool),
    Not(Box<Compiled>),
    And(Box<Compiled>, Box<Compiled>),
    Or(Box<Compiled>, Box<Compiled>),
    Implies(Box<Compiled>, Box<Compiled>),
}

impl Compiled {
    fn new(f: &Formula, index: &BTreeMap<String, usize>) -> Compiled {
        let c = |f: &Formula| Box::new(Compiled::new(f, index));
        match f {
            Formula::Var(name) => Compiled::Var(index[name]),
            Formula::Const(b) => Compiled::Const(*b),
            Formula::Not(inner) => Compiled::Not(c(inner)),
            Formula::And(l, r) => Compiled::And(c(l), c(r)),
            Formula::Or(l, r) => Compiled::Or(c(l), c(r)),
            Formula::Implies(l, r) => Compiled::Implies(c(l), c(r)),
        }
    }

    fn eval(&self, bits: &[bool]) -> bool {
        match self {
            Compiled::Var(i) => bits[*i],
            Compiled::Const(b) => *b,
            Compiled::Not(inner) => !inner.eval(bits),
            Compiled::And(l, r) => l.eval(bits) && r.eval(bits),
            Compiled::Or(l, r) => l.eval(bits) || r.eval(bits),
            Compiled::Implies(l, r) => !l.eval(bits) || r.eval(bits),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleCoverage {
    pub ever_true: bool,
    pub always_true: bool,
    /// Every assignment was tried.
    pub exhaustive: bool,
}

/// Checks a rule over TRUE/FALSE assignments of its variables: exhaustively
/// when it has at most `exhaustive_limit` variables, otherwise over
/// [`SAMPLE_COUNT`] seeded random assignments.
pub fn rule_coverage(rule: &Formula, exhaustive_limit: usize) -> RuleCoverage {
    let vars = rule.free_variables();
    let n = vars.len();
    let index: BTreeMap<String, usize> = vars.into_iter().enumerate().map(|(i, v)| (v, i)).collect();
    let compiled = Compiled::new(rule, &index);
    let mut bits = vec![false; n];
    let mut ever_true = false;
    let mut always_true = true;
    let mut record = |value: bool| {
        ever_true |= value;
        always_true &= value;
    };

    let exhaustive = n <= exhaustive_limit && n < 64;
    if exhaustive {
        for mask in 0u64..(1u64 << n) {
            for (i, bit) in bits.iter_mut().enumerate() {
                *bit = mask >> i & 1 == 1;
            }
            record(compiled.eval(&bits));
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        for _ in 0..SAMPLE_COUNT {
            for bit in bits.iter_mut() {
                *bit = rng.random();
            }
            record(compiled.eval(&bits));
        }
    }
    RuleCoverage {
        ever_true,
        always_true,
        exhaustive,
    }
}

/// Consistency findings for a knowledge base, sorted by (code, subject).
pub fn lint_kb(kb: &KnowledgeBase, exhaustive_limit: usize) -> Vec<LintFinding> {
    let mut findings = Vec::new();

    for (kind, name) in kb.duplicates() {
        findings.push(LintFinding::new(
            Severity::Error,
            LintCode::DuplicateName,
            name.clone(),
            format!("{kind} name `{name}` is declared more than once"),
        ));
    }

    for (rec, kind, atom) in kb.undefined_atoms() {
        findings.push(LintFinding::new(
            Severity::Error,
            LintCode::UndefinedAtom,
            rec,
            format!("{kind} references undeclared factor `{atom}`"),
        ));
    }

    let mut referenced = BTreeSet::new();
    for rec in &kb.recommendations {
        for (kind, rule) in rec.rules() {
            referenced.extend(rule.free_variables());
            if let Some(finding) = check_rule(&rec.id, kind, rule, exhaustive_limit) {
                findings.push(finding);
            }
        }
    }

    let mut reported = BTreeSet::new();
    for factor in &kb.factors {
        if !referenced.contains(&factor.name) && reported.insert(factor.name.as_str()) {
            findings.push(LintFinding::new(
                Severity::Warning,
                LintCode::UnusedFactor,
                factor.name.clone(),
                format!("factor `{}` is not referenced by any rule", factor.name),
            ));
        }
    }

    findings.sort();
    findings
}

fn check_rule(id: &str, kind: RuleKind, rule: &Formula, exhaustive_limit: usize) -> Option<LintFinding> {
    let coverage = rule_coverage(rule, exhaustive_limit);
    let scope = if coverage.exhaustive {
        "every assignment".to_string()
    } else {
        format!("{SAMPLE_COUNT} sampled assignments")
    };
    if !coverage.ever_true {
        let severity = if coverage.exhaustive { Severity::Error } else { Severity::Warning };
        Some(LintFinding::new(
            severity,
            LintCode::UnsatisfiableRule,
            id,
            format!("{kind} `{rule}` is false under {scope}"),
        ))
    } else if coverage.always_true {
        Some(LintFinding::new(
            Severity::Warning,
            LintCode::TautologyRule,
            id,
            format!("{kind} `{rule}` is true under {scope}"),
        ))
    } else {
        None
    }
}
