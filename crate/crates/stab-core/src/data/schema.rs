//! Dataset schema: typed feature lists supplied as a TOML document.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StabError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaTask {
    Classification,
    Regression,
}

/// Declares which columns are features, their types, the target and the
/// optional split column. Categorical cardinalities are learned from the
/// training split when the preprocessor is fitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    pub target: String,
    pub task: SchemaTask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_column: Option<String>,
}

impl DatasetSchema {
    pub fn features(&self) -> usize {
        self.numeric.len() + self.categorical.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features() == 0 {
            return Err(StabError::Schema("schema declares no features".into()));
        }
        let mut names: Vec<&String> = self.numeric.iter().chain(&self.categorical).collect();
        names.sort();
        for pair in names.windows(2) {
            if pair[0] == pair[1] {
                return Err(StabError::Schema(format!("duplicate feature name {}", pair[0])));
            }
        }
        if self.numeric.contains(&self.target) || self.categorical.contains(&self.target) {
            return Err(StabError::Schema(format!(
                "target {} is also listed as a feature",
                self.target
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: DatasetSchema =
            toml::from_str(text).map_err(|e| StabError::Schema(format!("schema parse: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}
