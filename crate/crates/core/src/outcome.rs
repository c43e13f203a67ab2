use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Decision of a single test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, f64>,
}

impl TestOutcome {
    /// Reject when `statistic > critical_value`.
    pub fn upper(name: &str, statistic: f64, critical_value: f64) -> Self {
        Self {
            name: name.to_string(),
            statistic,
            critical_value,
            reject: statistic > critical_value,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: f64) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }
}
