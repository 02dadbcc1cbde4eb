//! Ready-made negated-property automata and the property bundle format.
//!
//! ```text
//! property fme
//! prefix forall forall
//! model final-memory vars x, y, z
//! automaton fme.aut
//! ```
//!
//! Automaton paths are resolved against the directory of the bundle.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::automaton::{parse_automaton, parse_guard, AutomatonError, BundleAutomaton, CmpOp, ExtKind, Guard, Term};
use crate::lex::{Cursor, SyntaxError};
use crate::secir::{AttackModel, Channel};
use crate::traceops::EventClass;

fn agree(class: EventClass) -> Guard {
    Guard::Agree(0, 1, class)
}

/// Constant-time violation detector: `phi` filters the first
/// letter (the initial inputs), then any differing label is a failure.
pub fn negated_constant_time(phi: Guard) -> BundleAutomaton {
    let same = agree(EventClass::All);
    BundleAutomaton::build(
        "ct",
        2,
        &[("I", false), ("S", false), ("M", false), ("F", true)],
        &[
            ("I", phi.clone(), "M"),
            ("I", Guard::not(phi), "S"),
            ("M", same.clone(), "M"),
            ("M", Guard::not(same), "F"),
            ("S", Guard::True, "S"),
            ("F", Guard::True, "F"),
        ],
    )
}

/// Both tracks read public inputs with different values.
fn public_inputs_differ() -> Guard {
    let public_in = |i| Guard::and(Guard::Kind(i, "input"), Guard::Chan(i, Channel::Public));
    Guard::and(
        Guard::and(public_in(0), public_in(1)),
        Guard::Cmp(CmpOp::Ne, Term::Val(0), Term::Val(1)),
    )
}

/// Non-interference violation detector over the `low` class
/// (public inputs and outputs plus final-memory exposures; restrict the
/// exposed variables through the attack model). Runs whose public inputs
/// diverge later are discarded into the sink.
pub fn negated_noninterference() -> BundleAutomaton {
    let low = agree(EventClass::Low);
    let diverge = public_inputs_differ();
    BundleAutomaton::build(
        "ni",
        2,
        &[("I", false), ("S", false), ("M", false), ("F", true)],
        &[
            ("I", low.clone(), "M"),
            ("I", Guard::not(low.clone()), "S"),
            ("M", low.clone(), "M"),
            ("M", diverge.clone(), "S"),
            ("M", Guard::and(Guard::not(low), Guard::not(diverge)), "F"),
            ("S", Guard::True, "S"),
            ("F", Guard::True, "F"),
        ],
    )
}

/// Accepts pairs whose final-memory exposures differ on one of `vars`.
pub fn final_memory_equal(vars: &[&str]) -> BundleAutomaton {
    let both_final = Guard::and(Guard::ExtIs(0, ExtKind::Final), Guard::ExtIs(1, ExtKind::Final));
    let differs = vars
        .iter()
        .map(|v| Guard::Cmp(CmpOp::Ne, Term::Mem(0, v.to_string()), Term::Mem(1, v.to_string())))
        .reduce(Guard::or)
        .unwrap_or(Guard::False);
    let bad = Guard::and(both_final, differs);
    BundleAutomaton::build(
        "fme",
        2,
        &[("W", false), ("F", true)],
        &[
            ("W", bad.clone(), "F"),
            ("W", Guard::not(bad), "W"),
            ("F", Guard::True, "F"),
        ],
    )
}

/// Accepts every bundle of `k` traces.
pub fn universal(k: usize) -> BundleAutomaton {
    BundleAutomaton::build("all", k, &[("Q", true)], &[("Q", Guard::True, "Q")])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quant {
    Forall,
    Exists,
}

impl fmt::Display for Quant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quant::Forall => "forall",
            Quant::Exists => "exists",
        })
    }
}

/// A quantifier prefix, one automaton per violation type, and the attack
/// model under which programs are observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Property {
    pub name: String,
    pub prefix: Vec<Quant>,
    pub automata: Vec<BundleAutomaton>,
    /// Automaton file names as written in the bundle, when loaded from one.
    pub files: Vec<String>,
    pub model: AttackModel,
}

impl Property {
    pub fn universal(name: &str, automata: Vec<BundleAutomaton>, model: AttackModel) -> Self {
        let k = automata.first().map_or(0, |a| a.k);
        Property {
            name: name.to_string(),
            prefix: vec![Quant::Forall; k],
            files: automata.iter().map(|a| format!("{}.aut", a.name)).collect(),
            automata,
            model,
        }
    }

    pub fn k(&self) -> usize {
        self.prefix.len()
    }

    pub fn is_universal(&self) -> bool {
        self.prefix.iter().all(|q| *q == Quant::Forall)
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "property {}", self.name)?;
        let qs: Vec<String> = self.prefix.iter().map(|q| q.to_string()).collect();
        writeln!(f, "prefix {}", qs.join(" "))?;
        write!(f, "model {}", self.model.name)?;
        if let Some(vs) = &self.model.final_vars {
            write!(f, " vars {}", vs.join(", "))?;
        }
        writeln!(f)?;
        for file in &self.files {
            writeln!(f, "automaton {file}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PropError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{path}: {err}")]
    Automaton { path: String, err: AutomatonError },
    #[error("cannot read {path}: {err}")]
    Io { path: String, err: std::io::Error },
    #[error("automaton `{name}` has {found} tracks, the prefix has {expected}")]
    Arity { name: String, found: usize, expected: usize },
}

/// Parses a bundle; `load` maps each automaton file name to its text.
pub fn parse_property_with(
    text: &str,
    mut load: impl FnMut(&str) -> Result<String, PropError>,
) -> Result<Property, PropError> {
    let mut c = Cursor::new(text)?;
    c.expect_kw("property")?;
    let name = c.ident()?;
    c.expect_kw("prefix")?;
    let mut prefix = Vec::new();
    loop {
        if c.eat_kw("forall") {
            prefix.push(Quant::Forall);
        } else if c.eat_kw("exists") {
            prefix.push(Quant::Exists);
        } else {
            break;
        }
    }
    if prefix.is_empty() {
        return Err(c.error("empty quantifier prefix").into());
    }
    c.expect_kw("model")?;
    let mname = model_name(&mut c)?;
    let mut model = match AttackModel::by_name(&mname) {
        Some(m) => m,
        None => return Err(c.error(format!("unknown attack model `{mname}`")).into()),
    };
    if c.eat_kw("vars") {
        let mut vars = vec![c.ident()?];
        while c.eat_sym(",") {
            vars.push(c.ident()?);
        }
        model.final_vars = Some(vars);
    }
    let mut automata = Vec::new();
    let mut files = Vec::new();
    while c.eat_kw("automaton") {
        let file = file_name(&mut c)?;
        let src = load(&file)?;
        let a = parse_automaton(&src).map_err(|err| PropError::Automaton {
            path: file.clone(),
            err,
        })?;
        if a.k != prefix.len() {
            return Err(PropError::Arity {
                name: a.name,
                found: a.k,
                expected: prefix.len(),
            });
        }
        automata.push(a);
        files.push(file);
    }
    if !c.at_end() {
        return Err(c.error(format!("unexpected {}", c.describe())).into());
    }
    if automata.is_empty() {
        return Err(c.error("property lists no automaton").into());
    }
    Ok(Property {
        name,
        prefix,
        automata,
        files,
        model,
    })
}

/// Reads a bundle from disk, resolving automaton files next to it.
pub fn load_property(path: &Path) -> Result<Property, PropError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|err| PropError::Io {
            path: p.display().to_string(),
            err,
        })
    };
    let text = read(path)?;
    let dir: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_property_with(&text, |f| read(&dir.join(f)))
}

// `final-memory` lexes as three tokens.
fn model_name(c: &mut Cursor) -> Result<String, SyntaxError> {
    let mut s = c.ident()?;
    while c.eat_sym("-") {
        s.push('-');
        s.push_str(&c.ident()?);
    }
    Ok(s)
}

fn file_name(c: &mut Cursor) -> Result<String, SyntaxError> {
    let mut s = c.ident()?;
    loop {
        if c.eat_sym(".") {
            s.push('.');
        } else if c.eat_sym("-") {
            s.push('-');
        } else if c.eat_sym("/") {
            s.push('/');
        } else {
            break;
        }
        s.push_str(&c.ident()?);
    }
    Ok(s)
}

/// Guard text helper for callers building `phi` from a string.
pub fn guard_from_str(text: &str) -> Result<Guard, SyntaxError> {
    let mut c = Cursor::new(text)?;
    let g = parse_guard(&mut c)?;
    if !c.at_end() {
        return c.err(format!("unexpected {}", c.describe()));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secir::{Event, Ext};
    use std::sync::Arc;

    fn inp(c: Channel, v: i64) -> Event {
        Event::Input { chan: c, val: v }
    }

    fn out(v: i64) -> Event {
        Event::Output { chan: Channel::Public, val: v }
    }

    fn run(a: &BundleAutomaton, word: &[Vec<Event>]) -> Vec<usize> {
        let mut qs = vec![a.initial];
        for v in word {
            let mut next: Vec<usize> = qs.iter().flat_map(|&q| a.successors(q, v)).collect();
            next.sort_unstable();
            next.dedup();
            qs = next;
        }
        qs
    }

    fn reaches_f(a: &BundleAutomaton, word: &[Vec<Event>]) -> bool {
        run(a, word).iter().any(|&q| a.is_accepting(q))
    }

    #[test]
    fn shapes_and_round_trips() {
        for a in [
            negated_constant_time(Guard::True),
            negated_noninterference(),
            final_memory_equal(&["x", "y"]),
            universal(2),
        ] {
            assert_eq!(parse_automaton(&a.to_string()).unwrap(), a, "{}", a.name);
        }
        for a in [negated_constant_time(Guard::True), negated_noninterference()] {
            assert_eq!(a.states.len(), 4);
            assert_eq!(a.accepting.iter().filter(|x| **x).count(), 1);
        }
    }

    #[test]
    fn constant_time_examples() {
        let a = negated_constant_time(Guard::True);
        let br = |b| Event::Ext(Ext::Branch(b));
        let s0 = vec![inp(Channel::Secret, 0), inp(Channel::Secret, 1)];
        assert!(!reaches_f(&a, &[s0.clone(), vec![br(true), br(true)], vec![Event::Bot, Event::Bot]]));
        assert!(reaches_f(&a, &[s0.clone(), vec![br(true), br(false)]]));
        let never = negated_constant_time(Guard::False);
        assert!(!reaches_f(&never, &[s0, vec![br(true), br(false)]]));
    }

    #[test]
    fn noninterference_examples() {
        let a = negated_noninterference();
        let low = |i| inp(Channel::Public, i);
        // differing low inputs go to the sink
        assert_eq!(run(&a, &[vec![low(0), low(1)]]), vec![a.state_index("S").unwrap()]);
        assert!(reaches_f(&a, &[vec![low(0), low(0)], vec![out(0), out(1)]]));
        assert!(!reaches_f(&a, &[vec![low(0), low(0)], vec![out(1), out(1)], vec![Event::Bot, Event::Bot]]));
        // secret inputs are not low
        assert!(!reaches_f(&a, &[vec![inp(Channel::Secret, 0), inp(Channel::Secret, 1)]]));
        assert!(!reaches_f(&a, &[vec![out(0), out(0)], vec![low(0), low(1)], vec![out(0), out(1)]]));
    }

    #[test]
    fn final_memory_examples() {
        let a = final_memory_equal(&["x"]);
        let fin = |x: i64, y: i64| {
            Event::Ext(Ext::Final(vec![(Arc::from("x"), x), (Arc::from("y"), y)]))
        };
        assert!(!reaches_f(&a, &[vec![fin(0, 0), fin(0, 1)]]));
        assert!(reaches_f(&a, &[vec![fin(0, 0), fin(1, 0)]]));
    }

    #[test]
    fn bundle_format() {
        let aut = final_memory_equal(&["x"]).to_string();
        let text = "property p\nprefix forall forall\nmodel final-memory vars x, y\nautomaton fme.aut\n";
        let p = parse_property_with(text, |f| {
            assert_eq!(f, "fme.aut");
            Ok(aut.clone())
        })
        .unwrap();
        assert!(p.is_universal());
        assert_eq!(p.model.final_vars, Some(vec!["x".to_string(), "y".to_string()]));
        assert_eq!(p.to_string(), text);
        let bad = "property p\nprefix forall\nmodel io\nautomaton fme.aut\n";
        assert!(matches!(
            parse_property_with(bad, |_| Ok(aut.clone())),
            Err(PropError::Arity { .. })
        ));
    }
}
