//! The bundled example pairs: a source program, the site to transform, and
//! the property each pair is checked against.
//!
//! Layout written by [`write_fixture`]:
//!
//! ```text
//! fixtures/<kind>/source.sec
//! fixtures/<kind>/target.sec
//! fixtures/<kind>/witness.wit      (absent for dead_store_elimination)
//! fixtures/<kind>/property.prop
//! fixtures/<kind>/<automaton>.aut
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::automaton::{BundleAutomaton, Guard};
use crate::optimizer::{apply_transform, Site, SwitchMode, TransformError, TransformKind, TransformResult};
use crate::props::{final_memory_equal, negated_constant_time, negated_noninterference, Property};
use crate::secir::{parse_program, AttackModel, Program};
use crate::traceops::EventClass;

pub const DEFAULT_DOMAIN: i64 = 2;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub kind: TransformKind,
    pub source: Program,
    pub site: Site,
    pub property: Property,
}

fn folding(d: i64) -> String {
    format!(
        "program fold domain {d}\nvar x, y, z\n\
         L1: x := input(secret)\nL2: y := 42\nL3: z := y - 41\nL4: x := x * (z - 1)\n"
    )
}

fn factorization(d: i64) -> String {
    format!(
        "program factor domain {d}\nvar j, n, a, b\narray arr[2]\n\
         I1: j := input(secret)\nI2: n := 1\n\
         L1: if (j < n) goto L2 else goto L5\n\
         L2: a := arr[0]\nL3: b := arr[j]\nL4: halt\n\
         L5: a := arr[0]\nL6: b := arr[n - 1]\n"
    )
}

fn switching(d: i64) -> String {
    format!(
        "program switch domain {d}\nvar j, v\narray a[{d}], b[{d}]\n\
         L2: {{ v := input(secret); a[0] := v }}\n\
         L3: {{ v := input(secret); b[0] := v }}\n\
         L4: j := 1\n\
         L5: a[j] := b[j - 1]\nL6: b[j] := a[j - 1]\nL7: output(public, j)\n\
         L8: j := j + 1\nL9: if (j != 0) goto L5 else goto End\n"
    )
}

fn dead_branch(d: i64) -> String {
    format!(
        "program deadbranch domain {d}\nvar x\n\
         L1: x := input(secret)\nL2: if (0) goto L5 else goto L3\n\
         L3: output(secret, x)\nL4: halt\nL5: output(public, x)\n"
    )
}

/// `x := (f(a) + b) * (g(c) / d)` where `f` and `g` each bump a call
/// counter `n` and read it, so the two evaluation orders differ.
fn flattening(d: i64) -> String {
    format!(
        "program flatten domain {d}\nvar a, b, c, d, n, x\n\
         L1: a := input(secret)\nL2: b := input(public)\nL3: c := input(secret)\nL4: d := input(public)\n\
         L5: choose {{ x := ((a + (n + 1)) + b) * ((c * (n + 2)) / d); n := n + 2 }} \
         | {{ x := ((a + (n + 2)) + b) * ((c * (n + 1)) / d); n := n + 2 }}\n\
         L6: output(public, x)\n"
    )
}

fn peeling(d: i64) -> String {
    let bound = (d - 1).max(1);
    format!(
        "program peel domain {d}\nvar x, k\n\
         L1: x := 0\nL2: k := 0\n\
         L3: if (k < {bound}) goto L4 else goto End\n\
         L4: if (k == 0) goto L5 else goto L7\n\
         L5: x := input(secret)\nL6: goto L9\nL7: x := x + x\n\
         L9: k := k + 1\nL10: output(public, x)\nL11: goto L3\n"
    )
}

fn spilling(d: i64) -> String {
    format!(
        "program spill domain {d}\nvar a, b, t0, t1\n\
         L1: a := input(secret)\nL2: b := input(secret)\n\
         L3: t0 := a + b\nL4: output(public, t0)\nL5: t1 := a - b\n"
    )
}

/// Reads a two-part key, reports whether it is valid, then clears it.
fn dead_store(d: i64) -> String {
    format!(
        "program dse domain {d}\nvar x, y\n\
         L1: x := input(secret)\nL2: y := input(secret)\n\
         L3: if (x == y) goto L4 else goto L7\n\
         L4: output(public, 1)\nL5: {{ x := 0; y := 0 }}\nL6: halt\n\
         L7: {{ x := 0; y := 0 }}\n"
    )
}

/// Accepts when exactly one track produces an output at some position.
pub fn validity_leak() -> BundleAutomaton {
    let differ = Guard::not(Guard::Agree(0, 1, EventClass::Outputs(None)));
    BundleAutomaton::build(
        "validity",
        2,
        &[("I", false), ("F", true)],
        &[("I", differ.clone(), "F"), ("I", Guard::not(differ), "I"), ("F", Guard::True, "F")],
    )
}

fn property(name: &str, automata: Vec<BundleAutomaton>, model: AttackModel) -> Property {
    let mut p = Property::universal(name, automata, model);
    p.files = p.automata.iter().map(|a| format!("{}.aut", a.name)).collect();
    p
}

pub fn fixture(kind: TransformKind, domain: i64) -> Fixture {
    let ni = || property("ni", vec![negated_noninterference()], AttackModel::io());
    let (src, site, prop) = match kind {
        TransformKind::ConstantFolding => (
            folding(domain),
            Site::default(),
            property("fme", vec![final_memory_equal(&["x", "y", "z"])], AttackModel::final_memory()),
        ),
        TransformKind::CommonBranchFactorization => (
            factorization(domain),
            Site::at("L1"),
            property("ct", vec![negated_constant_time(Guard::True)], AttackModel::mem()),
        ),
        TransformKind::SwitchInstructions => (
            switching(domain),
            Site { mode: SwitchMode::Synchronized, ..Site::at("L5") },
            ni(),
        ),
        TransformKind::DeadBranchElimination => (dead_branch(domain), Site::at("L2"), ni()),
        TransformKind::ExpressionFlattening => (flattening(domain), Site::at("L5"), ni()),
        TransformKind::LoopPeeling => (peeling(domain), Site::at("L3"), ni()),
        TransformKind::RegisterSpilling => (spilling(domain), Site::default(), ni()),
        TransformKind::DeadStoreElimination => (
            dead_store(domain),
            Site::at("L5"),
            property(
                "keyleak",
                vec![validity_leak(), final_memory_equal(&["x", "y"]).renamed("key")],
                AttackModel::final_memory(),
            ),
        ),
    };
    Fixture {
        kind,
        source: parse_program(&src).expect("fixture source parses"),
        site,
        property: prop,
    }
}

trait Renamed {
    fn renamed(self, name: &str) -> Self;
}

impl Renamed for BundleAutomaton {
    fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }
}

impl Fixture {
    /// Applies the fixture's transformation; the witness is tagged with the
    /// property name.
    pub fn transform(&self) -> Result<TransformResult, TransformError> {
        let mut r = apply_transform(self.kind, &self.source, &self.site)?;
        if let Some(w) = r.witness.as_mut() {
            w.property = self.property.name.clone();
        }
        Ok(r)
    }
}

/// Writes one fixture directory and returns its path.
pub fn write_fixture(root: &Path, kind: TransformKind, domain: i64) -> io::Result<PathBuf> {
    let fx = fixture(kind, domain);
    let r = fx
        .transform()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let dir = root.join(kind.name());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("source.sec"), r.source.to_string())?;
    fs::write(dir.join("target.sec"), r.target.to_string())?;
    match &r.witness {
        Some(w) => fs::write(dir.join("witness.wit"), w.to_string())?,
        None => {
            let stale = dir.join("witness.wit");
            if stale.exists() {
                fs::remove_file(stale)?;
            }
        }
    }
    fs::write(dir.join("property.prop"), fx.property.to_string())?;
    for (a, file) in fx.property.automata.iter().zip(&fx.property.files) {
        fs::write(dir.join(file), a.to_string())?;
    }
    Ok(dir)
}

pub fn write_all(root: &Path, domain: i64) -> io::Result<Vec<PathBuf>> {
    TransformKind::ALL
        .into_iter()
        .map(|k| write_fixture(root, k, domain))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refinement::{check_property, Status, DEFAULT_BUDGET};
    use crate::witness::parse_witness;

    #[test]
    fn every_fixture_transforms() {
        for k in TransformKind::ALL {
            let r = fixture(k, DEFAULT_DOMAIN).transform().unwrap_or_else(|e| panic!("{k}: {e}"));
            assert_eq!(r.witness.is_some(), k.has_witness(), "{k}");
            if let Some(w) = &r.witness {
                let again = parse_witness(&w.to_string()).unwrap_or_else(|e| panic!("{k}: {e}\n{w}"));
                assert_eq!(&again, w, "{k}");
            }
        }
    }

    #[test]
    fn folding_target_matches_the_classic_pair() {
        let r = fixture(TransformKind::ConstantFolding, 4).transform().unwrap();
        let body: Vec<String> = r.target.ast().body.iter().map(|(l, i)| format!("{l}: {i}")).collect();
        assert_eq!(body, ["L1: x := input(secret)", "L2: y := 42", "L3: z := 1", "L4: x := 0"]);
    }

    #[test]
    fn spilling_matches_the_two_register_schedule() {
        let r = fixture(TransformKind::RegisterSpilling, 2).transform().unwrap();
        let body: Vec<String> = r.target.ast().body.iter().map(|(_, i)| i.to_string()).collect();
        assert_eq!(
            body,
            [
                "RegA := input(secret)",
                "RegB := input(secret)",
                "spill[0] := RegA",
                "RegA := RegA + RegB",
                "output(public, RegA)",
                "RegA := spill[0]",
                "RegA := RegA - RegB",
            ]
        );
    }

    #[test]
    #[ignore = "slow; covered by the acceptance target"]
    fn witnesses_validate() {
        for k in TransformKind::ALL.into_iter().filter(|k| k.has_witness()) {
            let fx = fixture(k, DEFAULT_DOMAIN);
            let r = fx.transform().unwrap();
            let w = r.witness.as_ref().unwrap();
            let (st, vs) = check_property(&fx.property, &r.source, &r.target, w, 2, false, DEFAULT_BUDGET).unwrap();
            assert_eq!(st, Status::Valid, "{k}: {vs:?}\n{w}");
        }
    }
}
