use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Row, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Continuous,
            categories: None,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: Some(categories.into_iter().map(Into::into).collect()),
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.kind == FeatureKind::Continuous
    }

    /// Declared categories; empty for continuous features.
    pub fn category_list(&self) -> &[String] {
        self.categories.as_deref().unwrap_or(&[])
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.category_list().iter().position(|c| c == value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub labels: Vec<String>,
    pub minority_label: String,
}

impl TargetSpec {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        labels: impl IntoIterator<Item = S>,
        minority_label: impl Into<String>,
    ) -> Self {
        TargetSpec {
            name: name.into(),
            labels: labels.into_iter().map(Into::into).collect(),
            minority_label: minority_label.into(),
        }
    }
}

/// Column layout of a binary-target table. Serialized as the schema JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub target: TargetSpec,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, target: TargetSpec) -> Result<Self> {
        let schema = Schema { features, target };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schema(m));
        if self.features.is_empty() {
            return bad("schema needs at least one feature".into());
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return bad("feature names must be non-empty".into());
            }
            if !seen.insert(f.name.as_str()) {
                return bad(format!("duplicate feature name {:?}", f.name));
            }
            if f.name == self.target.name {
                return bad(format!("feature {:?} collides with the target name", f.name));
            }
            match (f.kind, &f.categories) {
                (FeatureKind::Categorical, Some(cats)) if !cats.is_empty() => {
                    let distinct: HashSet<_> = cats.iter().collect();
                    if distinct.len() != cats.len() {
                        return bad(format!("feature {:?} declares a category twice", f.name));
                    }
                    if cats.iter().any(String::is_empty) {
                        return bad(format!("feature {:?} declares an empty category", f.name));
                    }
                }
                (FeatureKind::Categorical, _) => {
                    return bad(format!("categorical feature {:?} must list its categories", f.name))
                }
                (FeatureKind::Continuous, Some(_)) => {
                    return bad(format!("continuous feature {:?} must not list categories", f.name))
                }
                (FeatureKind::Continuous, None) => {}
            }
        }
        let t = &self.target;
        if t.name.is_empty() {
            return bad("target name must be non-empty".into());
        }
        if t.labels.len() != 2 || t.labels[0] == t.labels[1] {
            return bad(format!("target must declare exactly 2 distinct labels, got {:?}", t.labels));
        }
        if t.labels.iter().any(String::is_empty) {
            return bad("target labels must be non-empty".into());
        }
        if !t.labels.contains(&t.minority_label) {
            return bad(format!("minority label {:?} is not a declared label", t.minority_label));
        }
        Ok(())
    }

    /// Number of features, M.
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_continuous(&self) -> usize {
        self.features.iter().filter(|f| f.is_continuous()).count()
    }

    pub fn n_categorical(&self) -> usize {
        self.n_features() - self.n_continuous()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn minority_label(&self) -> &str {
        &self.target.minority_label
    }

    /// The label that is not the minority label.
    pub fn majority_label(&self) -> &str {
        self.target
            .labels
            .iter()
            .find(|l| **l != self.target.minority_label)
            .expect("validated schema has two labels")
    }

    pub(crate) fn check_row(&self, row: &Row) -> std::result::Result<(), String> {
        if row.values.len() != self.features.len() {
            return Err(format!(
                "expected {} values, found {}",
                self.features.len(),
                row.values.len()
            ));
        }
        for (f, v) in self.features.iter().zip(&row.values) {
            match (f.kind, v) {
                (FeatureKind::Continuous, Value::Num(x)) if x.is_finite() => {}
                (FeatureKind::Continuous, _) => {
                    return Err(format!("feature {:?} needs a finite number", f.name))
                }
                (FeatureKind::Categorical, Value::Cat(c)) if f.category_index(c).is_some() => {}
                (FeatureKind::Categorical, _) => {
                    return Err(format!("feature {:?} has an undeclared category", f.name))
                }
            }
        }
        if !self.target.labels.contains(&row.label) {
            return Err(format!("undeclared label {:?}", row.label));
        }
        Ok(())
    }
}
