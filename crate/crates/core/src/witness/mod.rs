//! Refinement witnesses: the relation R, the input class I, optional
//! stuttering data, an optional bisimulation B and Skolem hints.
//!
//! ```text
//! witness for ni {
//!   R: qT = qS && t = s;
//!   I: inputs;
//!   stutter: target, rank sumtracks(S.loc = L2 ? 1 : 0), bound 8;
//!   bisim: t = s;
//!   skolem sigmaS := sigmaT;
//!   skolem pS := pT;
//! }
//! ```

pub mod compile;
pub mod formula;

use std::fmt;

use crate::automaton::parse_class;
use crate::lex::{Cursor, SyntaxError};
use crate::traceops::EventClass;
pub use formula::{parse_formula, PExpr, Side, TrackRef};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WitnessError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("unknown {0}")]
    Unknown(String),
    #[error("type error: {0}")]
    Type(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StutterSide {
    /// The source may stay put while the target steps.
    Source,
    /// The target may stay put while the source steps.
    Target,
    Both,
}

impl StutterSide {
    pub fn source_stays(self) -> bool {
        matches!(self, StutterSide::Source | StutterSide::Both)
    }

    pub fn target_stays(self) -> bool {
        matches!(self, StutterSide::Target | StutterSide::Both)
    }
}

impl fmt::Display for StutterSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StutterSide::Source => "source",
            StutterSide::Target => "target",
            StutterSide::Both => "both",
        })
    }
}

pub const DEFAULT_STUTTER_BOUND: i64 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stutter {
    pub side: StutterSide,
    pub rank: PExpr,
    pub bound: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub property: String,
    pub r: PExpr,
    pub inputs: EventClass,
    pub stutter: Option<Stutter>,
    pub bisim: Option<PExpr>,
    /// `(existential, term)` pairs, e.g. `("sigmaS", "sigmaT")`.
    pub skolems: Vec<(String, String)>,
}

impl Witness {
    pub fn new(property: &str, r: PExpr) -> Self {
        Witness {
            property: property.to_string(),
            r,
            inputs: EventClass::Inputs(None),
            stutter: None,
            bisim: None,
            skolems: Vec::new(),
        }
    }

    pub fn with_default_skolems(mut self) -> Self {
        self.skolems = vec![
            ("sigmaS".into(), "sigmaT".into()),
            ("pS".into(), "pT".into()),
        ];
        self
    }

    pub fn skolem(&self, name: &str) -> Option<&str> {
        self.skolems.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "witness for {} {{", self.property)?;
        writeln!(f, "  R: {};", self.r)?;
        writeln!(f, "  I: {};", self.inputs)?;
        if let Some(s) = &self.stutter {
            writeln!(f, "  stutter: {}, rank {}, bound {};", s.side, s.rank, s.bound)?;
        }
        if let Some(b) = &self.bisim {
            writeln!(f, "  bisim: {b};")?;
        }
        for (n, t) in &self.skolems {
            writeln!(f, "  skolem {n} := {t};")?;
        }
        writeln!(f, "}}")
    }
}

pub fn parse_witness(text: &str) -> Result<Witness, WitnessError> {
    let mut c = Cursor::new(text)?;
    c.expect_kw("witness")?;
    c.expect_kw("for")?;
    let property = c.ident()?;
    c.expect_sym("{")?;
    let mut r = None;
    let mut w = Witness::new(&property, PExpr::Bool(true));
    while !c.eat_sym("}") {
        let at = c.pos();
        let key = c.ident()?;
        match key.as_str() {
            "R" => {
                c.expect_sym(":")?;
                r = Some(formula::parse(&mut c)?);
            }
            "I" => {
                c.expect_sym(":")?;
                w.inputs = parse_class(&mut c)?;
            }
            "stutter" => {
                c.expect_sym(":")?;
                let side = match c.ident()?.as_str() {
                    "source" => StutterSide::Source,
                    "target" => StutterSide::Target,
                    "both" => StutterSide::Both,
                    other => {
                        return Err(SyntaxError {
                            pos: at,
                            msg: format!("unknown stutter side `{other}`"),
                        }
                        .into())
                    }
                };
                c.expect_sym(",")?;
                c.expect_kw("rank")?;
                let rank = formula::parse(&mut c)?;
                let mut bound = DEFAULT_STUTTER_BOUND;
                if c.eat_sym(",") {
                    c.expect_kw("bound")?;
                    bound = c.int()?;
                }
                w.stutter = Some(Stutter { side, rank, bound });
            }
            "bisim" => {
                c.expect_sym(":")?;
                w.bisim = Some(formula::parse(&mut c)?);
            }
            "skolem" => {
                let name = c.ident()?;
                c.expect_sym(":=")?;
                let term = c.ident()?;
                w.skolems.push((name, term));
            }
            other => {
                return Err(SyntaxError {
                    pos: at,
                    msg: format!("unknown witness field `{other}`"),
                }
                .into())
            }
        }
        c.expect_sym(";")?;
    }
    if !c.at_end() {
        return Err(c.error(format!("unexpected {} after witness", c.describe())).into());
    }
    w.r = r.ok_or_else(|| c.error("witness has no `R` field"))?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "witness for fme {\n  R: qT = qS && t = s && (T1.loc = L3 -> T1.y = 42);\n  I: inputs;\n  \
        stutter: target, rank sumtracks(S.loc = L2 ? 1 : 0), bound 4;\n  bisim: t = s;\n  \
        skolem sigmaS := sigmaT;\n  skolem pS := pT;\n}\n";

    #[test]
    fn round_trip() {
        let w = parse_witness(TEXT).unwrap();
        assert_eq!(w.property, "fme");
        assert_eq!(w.stutter.as_ref().unwrap().bound, 4);
        assert_eq!(w.skolem("pS"), Some("pT"));
        let again = parse_witness(&w.to_string()).unwrap();
        assert_eq!(again, w);
    }

    #[test]
    fn missing_r_is_an_error() {
        assert!(parse_witness("witness for p { I: inputs; }").is_err());
    }

    #[test]
    fn unknown_field_reports_position() {
        let e = parse_witness("witness for p {\n  Q: true;\n}").unwrap_err();
        assert!(e.to_string().starts_with("2:3"), "{e}");
    }
}
