//! Line-delimited JSON verdict records.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::secir::AttackModel;

/// Limits in force for one invocation; unset entries do not apply to the
/// subcommand.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Budgets {
    pub budget_states: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer_bound: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stem_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loop_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<i64>,
}

/// One record. Fields keep insertion order, so equal runs print equal lines.
#[derive(Debug, Clone)]
pub struct Report {
    fields: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, model: Option<&AttackModel>, budgets: &Budgets) -> Self {
        let mut fields = Map::new();
        fields.insert("tool".into(), "secwit".into());
        fields.insert("version".into(), crate::VERSION.into());
        fields.insert("command".into(), command.into());
        fields.insert("attack_model".into(), json(&model));
        fields.insert("budgets".into(), json(budgets));
        Report { fields }
    }

    pub fn set(&mut self, key: &str, v: impl Serialize) -> &mut Self {
        self.fields.insert(key.to_string(), json(&v));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(&self.fields).expect("report serializes")
    }
}

fn json(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("report field serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comes_first() {
        let mut r = Report::new("check", Some(&AttackModel::io()), &Budgets::default());
        r.set("status", "valid");
        let line = r.to_line();
        assert!(line.starts_with("{\"tool\":\"secwit\",\"version\":"), "{line}");
        let v: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["attack_model"]["name"], "io");
        assert_eq!(v["budgets"]["budget_states"], 0);
        assert_eq!(v["status"], "valid");
    }
}
