//! Task specification policy: tasks own categories, categories own classes.
//!
//! Every class is one binary attribute. Attributes are indexed in policy
//! order (task, then category, then class), which is the layout of label
//! vectors, model outputs and metric reports. A category with `K` classes
//! carries loss weight `1 / K`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub classes: Vec<String>,
}

impl Category {
    pub fn new(name: &str, classes: &[&str]) -> Self {
        Self { name: name.into(), classes: classes.iter().map(|&c| c.into()).collect() }
    }

    /// `R_c`: the number of classes in the category.
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub categories: Vec<Category>,
}

impl Task {
    pub fn new(name: &str, categories: Vec<Category>) -> Self {
        Self { name: name.into(), categories }
    }

    pub fn width(&self) -> usize {
        self.categories.iter().map(Category::class_count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RawPolicy {
    #[serde(default)]
    name: String,
    tasks: Vec<Task>,
}

/// Validated tasks -> categories -> classes hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct TaskPolicy {
    name: String,
    tasks: Vec<Task>,
    /// Start index of each task's attributes; one extra trailing entry.
    offsets: Vec<usize>,
}

/// Location of one attribute inside the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttributeRef<'a> {
    pub index: usize,
    pub task: usize,
    pub category: usize,
    pub task_name: &'a str,
    pub category_name: &'a str,
    pub class_name: &'a str,
    /// Class count of the owning category.
    pub category_size: usize,
}

impl TryFrom<RawPolicy> for TaskPolicy {
    type Error = Error;
    fn try_from(raw: RawPolicy) -> Result<Self> {
        TaskPolicy::new(&raw.name, raw.tasks)
    }
}

impl From<TaskPolicy> for RawPolicy {
    fn from(p: TaskPolicy) -> Self {
        RawPolicy { name: p.name, tasks: p.tasks }
    }
}

fn ensure_unique<'a>(what: &str, scope: &str, names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for n in names {
        if n.is_empty() {
            return Err(config_err!("empty {} name in {}", what, scope));
        }
        if seen.contains(&n) {
            return Err(config_err!("duplicate {} name '{}' in {}", what, n, scope));
        }
        seen.push(n);
    }
    Ok(())
}

impl TaskPolicy {
    /// Builds a policy, rejecting empty tasks or categories and duplicate
    /// names. Class names must be unique within their category, category
    /// names within their task and task names within the policy, so every
    /// attribute resolves to exactly one (task, category) pair.
    pub fn new(name: &str, tasks: Vec<Task>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(config_err!("policy '{}' has no tasks", name));
        }
        ensure_unique("task", "policy", tasks.iter().map(|t| t.name.as_str()))?;
        for t in &tasks {
            if t.categories.is_empty() {
                return Err(config_err!("task '{}' has no categories", t.name));
            }
            ensure_unique("category", &format!("task '{}'", t.name), t.categories.iter().map(|c| c.name.as_str()))?;
            for c in &t.categories {
                if c.classes.is_empty() {
                    return Err(config_err!("category '{}/{}' is empty", t.name, c.name));
                }
                ensure_unique(
                    "class",
                    &format!("category '{}/{}'", t.name, c.name),
                    c.classes.iter().map(String::as_str),
                )?;
            }
        }
        let mut offsets = Vec::with_capacity(tasks.len() + 1);
        let mut acc = 0;
        for t in &tasks {
            offsets.push(acc);
            acc += t.width();
        }
        offsets.push(acc);
        Ok(Self { name: name.into(), tasks, offsets })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    /// Total attribute count `A`.
    pub fn attribute_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Attribute index range owned by task `t`.
    pub fn task_range(&self, t: usize) -> Range<usize> {
        self.offsets[t]..self.offsets[t + 1]
    }

    pub fn attributes(&self) -> impl Iterator<Item = AttributeRef<'_>> + '_ {
        let mut index = 0;
        self.tasks
            .iter()
            .enumerate()
            .flat_map(move |(ti, t)| {
                t.categories
                    .iter()
                    .enumerate()
                    .flat_map(move |(ci, c)| c.classes.iter().map(move |k| (ti, t, ci, c, k)))
            })
            .map(move |(ti, t, ci, c, k)| {
                let r = AttributeRef {
                    index,
                    task: ti,
                    category: ci,
                    task_name: &t.name,
                    category_name: &c.name,
                    class_name: k,
                    category_size: c.class_count(),
                };
                index += 1;
                r
            })
    }

    /// `R_c` of the category owning each attribute, in attribute order.
    pub fn category_sizes(&self) -> Vec<usize> {
        self.attributes().map(|a| a.category_size).collect()
    }

    /// Per-attribute category weight `1 / R_c`.
    pub fn category_weights(&self) -> Vec<f64> {
        self.attributes().map(|a| 1.0 / a.category_size as f64).collect()
    }

    /// Index of the category each attribute belongs to, counted across the
    /// whole policy.
    pub fn category_ids(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.attribute_count());
        let mut id = 0;
        for t in &self.tasks {
            for c in &t.categories {
                out.extend(core::iter::repeat_n(id, c.class_count()));
                id += 1;
            }
        }
        out
    }

    pub fn index_of(&self, task: &str, category: &str, class: &str) -> Option<usize> {
        self.attributes()
            .find(|a| a.task_name == task && a.category_name == category && a.class_name == class)
            .map(|a| a.index)
    }

    /// `Task/Category/Class` label of attribute `i`.
    pub fn attribute_name(&self, i: usize) -> Option<String> {
        self.attributes().nth(i).map(|a| format!("{}/{}/{}", a.task_name, a.category_name, a.class_name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small() -> TaskPolicy {
        TaskPolicy::new(
            "small",
            vec![
                Task::new(
                    "Body",
                    vec![Category::new("Gender", &["F", "M"]), Category::new("Age", &["Young", "Mid", "Old"])],
                ),
                Task::new("Head", vec![Category::new("Hat", &["Hat"])]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn hierarchy_indexing() {
        let p = small();
        assert_eq!(p.attribute_count(), 6);
        assert_eq!(p.task_range(0), 0..5);
        assert_eq!(p.task_range(1), 5..6);
        assert_eq!(p.category_sizes(), vec![2, 2, 3, 3, 3, 1]);
        assert_eq!(p.category_ids(), vec![0, 0, 1, 1, 1, 2]);
        assert_eq!(p.index_of("Body", "Age", "Old"), Some(4));
        assert_eq!(p.index_of("Head", "Age", "Old"), None);
        assert_eq!(p.attribute_name(5).as_deref(), Some("Head/Hat/Hat"));
    }

    #[test]
    fn single_category_weight() {
        let p = TaskPolicy::new("one", vec![Task::new("T", vec![Category::new("C", &["a", "b", "c", "d"])])]).unwrap();
        assert_eq!(p.task_count(), 1);
        assert!(p.category_weights().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn rejects_duplicates_and_empties() {
        let dup = TaskPolicy::new("d", vec![Task::new("T", vec![Category::new("C", &["a", "a"])])]);
        assert!(matches!(dup, Err(Error::Config(_))));
        let empty = TaskPolicy::new("e", vec![Task::new("T", vec![Category::new("C", &[])])]);
        assert!(matches!(empty, Err(Error::Config(_))));
        let no_cat = TaskPolicy::new("e", vec![Task::new("T", vec![])]);
        assert!(matches!(no_cat, Err(Error::Config(_))));
        let dup_task = TaskPolicy::new(
            "d",
            vec![Task::new("T", vec![Category::new("C", &["a"])]), Task::new("T", vec![Category::new("D", &["b"])])],
        );
        assert!(matches!(dup_task, Err(Error::Config(_))));
        // the same class name under different categories is fine
        assert!(TaskPolicy::new(
            "ok",
            vec![Task::new("T", vec![Category::new("C", &["Other"]), Category::new("D", &["Other"])])]
        )
        .is_ok());
    }
}
