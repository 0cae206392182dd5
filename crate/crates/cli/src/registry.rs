//! Named experiments and their lookup table.

use serde::Serialize;
use weakcoupling::report::ExperimentReport;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiments;

pub trait Experiment: Send + Sync {
    fn name(&self) -> &str;

    fn description(&self) -> &str;

    /// Starting point before the config file and overrides are applied.
    fn defaults(&self) -> ExperimentConfig {
        ExperimentConfig::defaults_for(self.name())
    }

    /// One report per CSV file; the report name is the file stem.
    fn run(&self, config: &ExperimentConfig) -> Result<Vec<ExperimentReport>, CliError>;
}

#[derive(Serialize)]
pub struct ListEntry<'a> {
    pub name: &'a str,
    pub description: &'a str,
}

pub struct Registry {
    entries: Vec<Box<dyn Experiment>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        for e in experiments::builtins() {
            r.register(e).expect("built-in names are unique");
        }
        r
    }

    pub fn register(&mut self, e: Box<dyn Experiment>) -> Result<(), CliError> {
        if self.get(e.name()).is_some() {
            return Err(CliError::Usage {
                field: "experiment".into(),
                message: format!("`{}` is already registered", e.name()),
            });
        }
        if matches!(e.name(), "list" | "rerun" | "show-config" | "help") || e.name().is_empty() {
            return Err(CliError::Usage {
                field: "experiment".into(),
                message: format!("`{}` is reserved", e.name()),
            });
        }
        self.entries.push(e);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&dyn Experiment> {
        self.entries.iter().find(|e| e.name() == name).map(|e| e.as_ref())
    }

    pub fn lookup(&self, name: &str) -> Result<&dyn Experiment, CliError> {
        self.get(name).ok_or_else(|| CliError::Usage {
            field: "experiment".into(),
            message: format!("unknown experiment `{name}`; available: {}", self.names().join(", ")),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn list_text(&self) -> String {
        let width = self.entries.iter().map(|e| e.name().len()).max().unwrap_or(0);
        self.entries
            .iter()
            .map(|e| format!("{:width$}  {}\n", e.name(), e.description()))
            .collect()
    }

    pub fn list_json(&self) -> String {
        let list: Vec<ListEntry> = self
            .entries
            .iter()
            .map(|e| ListEntry { name: e.name(), description: e.description() })
            .collect();
        serde_json::to_string_pretty(&list).expect("list serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl Experiment for Echo {
        fn name(&self) -> &str {
            "echo"
        }

        fn description(&self) -> &str {
            "one-row report of the seed"
        }

        fn run(&self, config: &ExperimentConfig) -> Result<Vec<ExperimentReport>, CliError> {
            let mut r = ExperimentReport::new("echo", &["seed"]);
            r.push_row(vec![config.seed as f64]);
            Ok(vec![r])
        }
    }

    #[test]
    fn builtins_then_plugin() {
        let mut r = Registry::with_builtins();
        assert_eq!(r.names(), ["kernel-limit", "landau-q", "scatter", "nbody-run", "consistency", "chaos"]);
        assert_eq!(r.list_text().lines().count(), 6);
        r.register(Box::new(Echo)).unwrap();
        assert_eq!(r.len(), 7);
        let json: serde_json::Value = serde_json::from_str(&r.list_json()).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 7);
        assert_eq!(json[6]["name"], "echo");
        assert!(r.register(Box::new(Echo)).is_err());
    }

    #[test]
    fn unknown_name_is_a_usage_error() {
        let r = Registry::with_builtins();
        assert!(matches!(r.lookup("nope"), Err(CliError::Usage { .. })));
    }
}
