//! Coding tasks, their label sets and the gate that lets the first task
//! switch the others off.
//!
//! A suite is loaded from TOML:
//!
//! ```toml
//! [gate]
//! task = "involvement"
//! label = "not_applicable"
//!
//! [[tasks]]
//! id = "involvement"
//! name = "Type of paternal involvement"
//! default_label = "not_applicable"
//!
//! [[tasks.labels]]
//! id = "passive"
//! description_short = "..."
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How much label explanation goes into a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionLevel {
    None,
    Short,
    Long,
}

impl DescriptionLevel {
    pub const ALL: [DescriptionLevel; 3] =
        [DescriptionLevel::None, DescriptionLevel::Short, DescriptionLevel::Long];

    pub fn as_str(self) -> &'static str {
        match self {
            DescriptionLevel::None => "none",
            DescriptionLevel::Short => "short",
            DescriptionLevel::Long => "long",
        }
    }
}

impl fmt::Display for DescriptionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DescriptionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(DescriptionLevel::None),
            "short" => Ok(DescriptionLevel::Short),
            "long" => Ok(DescriptionLevel::Long),
            other => Err(Error::Config(format!("unknown description level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_short: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_long: Option<String>,
}

impl LabelDef {
    pub fn new(id: impl Into<String>) -> Self {
        LabelDef { id: id.into(), aliases: Vec::new(), description_short: None, description_long: None }
    }

    pub fn description(&self, level: DescriptionLevel) -> Option<&str> {
        match level {
            DescriptionLevel::None => None,
            DescriptionLevel::Short => self.description_short.as_deref(),
            DescriptionLevel::Long => self.description_long.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingTask {
    pub id: String,
    pub name: String,
    /// Label assigned when a model answer matches nothing.
    pub default_label: String,
    /// Levels a prompt may use for this task. Derived from the label
    /// descriptions when left empty in the config.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub description_levels: Vec<DescriptionLevel>,
    /// Label forced by the gate. Defaults to the gate's trigger label id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_applicable_label: Option<String>,
    pub labels: Vec<LabelDef>,
}

impl CodingTask {
    pub fn label(&self, id: &str) -> Option<&LabelDef> {
        self.labels.iter().find(|l| l.id == id)
    }

    pub fn has_label(&self, id: &str) -> bool {
        self.label(id).is_some()
    }

    pub fn label_ids(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| l.id.as_str())
    }

    pub fn supports(&self, level: DescriptionLevel) -> bool {
        self.description_levels.contains(&level)
    }

    /// Richest available level that does not exceed `requested`.
    pub fn clamp_level(&self, requested: DescriptionLevel) -> DescriptionLevel {
        self.description_levels
            .iter()
            .copied()
            .filter(|l| *l <= requested)
            .max()
            .unwrap_or(DescriptionLevel::None)
    }

    fn derived_levels(&self) -> Vec<DescriptionLevel> {
        let mut levels = vec![DescriptionLevel::None];
        if self.labels.iter().all(|l| l.description_short.is_some()) {
            levels.push(DescriptionLevel::Short);
        }
        if self.labels.iter().all(|l| l.description_long.is_some()) {
            levels.push(DescriptionLevel::Long);
        }
        levels
    }
}

/// When `task` (always the first task) is labelled `label`, every other
/// task takes its not-applicable label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub task: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSuite {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<Gate>,
    pub tasks: Vec<CodingTask>,
}

/// Outcome of matching a model's surface string against a task's labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    pub label: String,
    pub fallback: bool,
}

pub(crate) fn normalize_surface(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn check_label_id(task: &str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::Schema(format!("task `{task}` has an empty label id")));
    }
    if id.contains(',') || id.contains('\n') || id.contains('\r') {
        return Err(Error::Schema(format!(
            "label `{id}` in task `{task}` contains a comma or newline"
        )));
    }
    if id.to_lowercase() != id || id.trim() != id {
        return Err(Error::Schema(format!(
            "label `{id}` in task `{task}` must be lowercase without surrounding whitespace"
        )));
    }
    Ok(())
}

impl TaskSuite {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let suite: TaskSuite =
            toml::from_str(src).map_err(|e| Error::Schema(format!("cannot parse task suite: {e}")))?;
        suite.validated()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("task suite", e))
    }

    /// Checks every invariant and fills derived fields.
    pub fn validated(mut self) -> Result<Self> {
        if self.tasks.is_empty() {
            return Err(Error::Schema("task suite has no tasks".into()));
        }
        let mut seen_tasks = HashMap::new();
        for (i, task) in self.tasks.iter_mut().enumerate() {
            if let Some(prev) = seen_tasks.insert(task.id.clone(), i) {
                return Err(Error::Schema(format!(
                    "duplicate task id `{}` (positions {prev} and {i})",
                    task.id
                )));
            }
            if task.labels.len() < 2 {
                return Err(Error::Schema(format!(
                    "task `{}` needs at least two labels, found {}",
                    task.id,
                    task.labels.len()
                )));
            }
            let mut surfaces: HashMap<String, String> = HashMap::new();
            for label in &task.labels {
                check_label_id(&task.id, &label.id)?;
                let forms = std::iter::once(&label.id).chain(label.aliases.iter());
                for (k, form) in forms.enumerate() {
                    let key = normalize_surface(form);
                    if key.is_empty() {
                        return Err(Error::Schema(format!(
                            "label `{}` in task `{}` has an empty alias",
                            label.id, task.id
                        )));
                    }
                    let owner = if k == 0 { "id".to_string() } else { format!("alias of `{}`", label.id) };
                    if let Some(prev) = surfaces.insert(key.clone(), owner.clone()) {
                        return Err(Error::Schema(format!(
                            "label collision in task `{}`: `{key}` is both {prev} and {owner}",
                            task.id
                        )));
                    }
                }
            }
            if !task.has_label(&task.default_label) {
                return Err(Error::Schema(format!(
                    "default label `{}` of task `{}` is not one of its labels",
                    task.default_label, task.id
                )));
            }
            let derived = task.derived_levels();
            if task.description_levels.is_empty() {
                task.description_levels = derived;
            } else {
                for level in &task.description_levels {
                    if !derived.contains(level) {
                        return Err(Error::Schema(format!(
                            "task `{}` declares `{level}` descriptions but not every label has one",
                            task.id
                        )));
                    }
                }
                if !task.description_levels.contains(&DescriptionLevel::None) {
                    task.description_levels.push(DescriptionLevel::None);
                }
                task.description_levels.sort();
                task.description_levels.dedup();
            }
        }

        if let Some(gate) = &self.gate {
            let first = &self.tasks[0];
            if !seen_tasks.contains_key(&gate.task) {
                return Err(Error::Schema(format!("gate references unknown task `{}`", gate.task)));
            }
            if first.id != gate.task {
                return Err(Error::Schema(format!(
                    "gating task `{}` must be the first task (found `{}`)",
                    gate.task, first.id
                )));
            }
            if !first.has_label(&gate.label) {
                return Err(Error::Schema(format!(
                    "gate references unknown label `{}` of task `{}`",
                    gate.label, gate.task
                )));
            }
            for task in &self.tasks[1..] {
                let na = task.not_applicable_label.as_deref().unwrap_or(&gate.label);
                if !task.has_label(na) {
                    return Err(Error::Schema(format!(
                        "task `{}` has no not-applicable label `{na}` required by the gate",
                        task.id
                    )));
                }
            }
        } else {
            for task in &self.tasks {
                if let Some(na) = &task.not_applicable_label {
                    if !task.has_label(na) {
                        return Err(Error::Schema(format!(
                            "not-applicable label `{na}` of task `{}` is not one of its labels",
                            task.id
                        )));
                    }
                }
            }
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, id: &str) -> Option<&CodingTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn require_task(&self, id: &str) -> Result<(usize, &CodingTask)> {
        self.task_index(id)
            .map(|i| (i, &self.tasks[i]))
            .ok_or_else(|| Error::Invalid(format!("unknown task `{id}`")))
    }

    /// Label a downstream task takes when the gate fires.
    pub fn not_applicable_label(&self, task_index: usize) -> Option<&str> {
        let task = self.tasks.get(task_index)?;
        if let Some(na) = task.not_applicable_label.as_deref() {
            return Some(na);
        }
        let gate = self.gate.as_ref()?;
        task.has_label(&gate.label).then_some(gate.label.as_str())
    }

    /// True when `first_label` on the first task triggers the gate.
    pub fn gate_fires(&self, first_label: &str) -> bool {
        self.gate.as_ref().is_some_and(|g| g.label == first_label)
    }

    /// Forces downstream labels to not-applicable when the gate fires.
    ///
    /// Accepts one label per task, or only the gating task's label (which
    /// is expanded to a full row if it fires).
    pub fn apply_gate(&self, labels: &[String]) -> Result<Vec<String>> {
        if labels.len() != self.tasks.len() && labels.len() != 1 {
            return Err(Error::Invalid(format!(
                "expected {} labels (or only the gating label), got {}",
                self.tasks.len(),
                labels.len()
            )));
        }
        for (task, label) in self.tasks.iter().zip(labels) {
            if !task.has_label(label) {
                return Err(Error::Invalid(format!("unknown label `{label}` for task `{}`", task.id)));
            }
        }
        if !self.gate_fires(&labels[0]) {
            return Ok(labels.to_vec());
        }
        let mut out = Vec::with_capacity(self.tasks.len());
        out.push(labels[0].clone());
        for i in 1..self.tasks.len() {
            let na = self.not_applicable_label(i).expect("validated suite has not-applicable labels");
            out.push(na.to_string());
        }
        Ok(out)
    }
}

impl CodingTask {
    /// Case- and whitespace-insensitive match against ids, then aliases.
    /// Anything else maps to the task default with `fallback` set.
    pub fn resolve_label(&self, surface: &str) -> Resolved {
        let key = normalize_surface(surface);
        if let Some(l) = self.labels.iter().find(|l| l.id == key) {
            return Resolved { label: l.id.clone(), fallback: false };
        }
        if let Some(l) = self
            .labels
            .iter()
            .find(|l| l.aliases.iter().any(|a| normalize_surface(a) == key))
        {
            return Resolved { label: l.id.clone(), fallback: false };
        }
        Resolved { label: self.default_label.clone(), fallback: true }
    }
}
