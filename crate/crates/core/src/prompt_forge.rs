//! Prompt rendering: instruction, codebook, few-shot examples, target.
//!
//! The layout is fixed byte for byte:
//!
//! ```text
//! {instruction}
//! [{task name}:]            <- joint prompts only, once per task
//! - {label}[: {description}]
//! ...
//!
//! Text: {example text}
//! Label: {label}[, {label}, ...]
//!
//! Text: {target text}
//! Label:
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::assets::DEFAULT_INSTRUCTION;
use crate::corpus_ingest::Instance;
use crate::error::{Error, Result};
use crate::task_schema::{DescriptionLevel, TaskSuite};

/// A hand-labelled sentence shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(rename = "id")]
    pub instance_id: String,
    pub text: String,
    /// One label per task, already gated.
    pub labels: Vec<String>,
}

impl FewShotExample {
    /// Validates labels against the suite and expands a lone gating label.
    pub fn gated(mut self, suite: &TaskSuite) -> Result<Self> {
        if self.labels.len() == 1 && suite.len() > 1 && !suite.gate_fires(&self.labels[0]) {
            return Err(Error::Invalid(format!(
                "example `{}` has a single label `{}` that does not trigger the gate",
                self.instance_id, self.labels[0]
            )));
        }
        self.labels = suite
            .apply_gate(&self.labels)
            .map_err(|e| Error::Invalid(format!("example `{}`: {e}", self.instance_id)))?;
        Ok(self)
    }
}

/// Parses line-delimited `{id, text, labels}` records and gates them.
pub fn parse_examples(src: &str, suite: &TaskSuite) -> Result<Vec<FewShotExample>> {
    let raw: Vec<FewShotExample> = crate::io::parse_jsonl(src, "few-shot examples")?;
    let mut ids = HashSet::new();
    raw.into_iter()
        .map(|ex| {
            if !ids.insert(ex.instance_id.clone()) {
                return Err(Error::Invalid(format!("duplicate example id `{}`", ex.instance_id)));
            }
            ex.gated(suite)
        })
        .collect()
}

pub fn load_examples(path: impl AsRef<Path>, suite: &TaskSuite) -> Result<Vec<FewShotExample>> {
    parse_examples(&crate::io::read_to_string(path)?, suite)
}

/// Which tasks a prompt asks for.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TaskSelection {
    Single(String),
    Joint,
}

impl TaskSelection {
    pub fn parse(s: &str) -> Self {
        match s.trim() {
            "joint" | "all" => TaskSelection::Joint,
            other => TaskSelection::Single(other.to_string()),
        }
    }
}

impl fmt::Display for TaskSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskSelection::Single(t) => f.write_str(t),
            TaskSelection::Joint => f.write_str("joint"),
        }
    }
}

impl Serialize for TaskSelection {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TaskSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(TaskSelection::parse(&String::deserialize(d)?))
    }
}

/// Order of the selected examples: as authored, an explicit permutation,
/// or a seeded shuffle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum ExampleOrder {
    #[default]
    Authored,
    Permutation(Vec<usize>),
    Seed(u64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OrderRepr {
    Name(String),
    Seed(u64),
    Permutation(Vec<usize>),
}

impl Serialize for ExampleOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExampleOrder::Authored => OrderRepr::Name("authored".into()),
            ExampleOrder::Permutation(p) => OrderRepr::Permutation(p.clone()),
            ExampleOrder::Seed(x) => OrderRepr::Seed(*x),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExampleOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match OrderRepr::deserialize(d)? {
            OrderRepr::Name(n) if n == "authored" => Ok(ExampleOrder::Authored),
            OrderRepr::Name(n) => Err(serde::de::Error::custom(format!(
                "unknown example order `{n}` (use \"authored\", a seed, or a permutation)"
            ))),
            OrderRepr::Seed(x) => Ok(ExampleOrder::Seed(x)),
            OrderRepr::Permutation(p) => Ok(ExampleOrder::Permutation(p)),
        }
    }
}

impl ExampleOrder {
    /// Concrete permutation of `n` items.
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        match self {
            ExampleOrder::Authored => Ok((0..n).collect()),
            ExampleOrder::Permutation(p) => {
                check_permutation(p, n)?;
                Ok(p.clone())
            }
            ExampleOrder::Seed(seed) => {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
                Ok(p)
            }
        }
    }
}

fn default_cpt() -> f64 {
    4.0
}

fn default_instruction() -> String {
    DEFAULT_INSTRUCTION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub tasks: TaskSelection,
    pub description_level: DescriptionLevel,
    pub n_examples: usize,
    #[serde(default)]
    pub order: ExampleOrder,
    #[serde(default = "default_instruction")]
    pub instruction: String,
    #[serde(default = "default_cpt")]
    pub chars_per_token: f64,
}

impl PromptConfig {
    pub fn new(tasks: TaskSelection, description_level: DescriptionLevel, n_examples: usize) -> Self {
        PromptConfig {
            tasks,
            description_level,
            n_examples,
            order: ExampleOrder::Authored,
            instruction: default_instruction(),
            chars_per_token: default_cpt(),
        }
    }

    pub fn with_order(mut self, order: ExampleOrder) -> Self {
        self.order = order;
        self
    }
}

/// Byte ranges of each part of a rendered prompt. Together they tile the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentMap {
    pub instruction: Range<usize>,
    pub codebook: Range<usize>,
    /// Absent for zero-shot prompts.
    pub examples: Option<Range<usize>>,
    pub target: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PromptStats {
    pub words: usize,
    pub chars: usize,
    pub estimated_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prompt {
    pub text: String,
    pub segments: SegmentMap,
    pub stats: PromptStats,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Prompt {
    pub fn segment(&self, range: &Range<usize>) -> &str {
        &self.text[range.clone()]
    }
}

/// `ceil(chars / chars_per_token)`.
pub fn estimate_tokens(text: &str, chars_per_token: f64) -> usize {
    let chars = text.chars().count();
    if chars == 0 {
        return 0;
    }
    let cpt = if chars_per_token > 0.0 { chars_per_token } else { default_cpt() };
    (chars as f64 / cpt).ceil() as usize
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::Invalid(format!("permutation has {} entries, expected {n}", order.len())));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Invalid(format!("{order:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// `out[i] = items[order[i]]`.
pub fn permute_examples<T: Clone>(items: &[T], order: &[usize]) -> Result<Vec<T>> {
    check_permutation(order, items.len())?;
    Ok(order.iter().map(|&i| items[i].clone()).collect())
}

fn factorial_at_least(n: usize, k: usize) -> bool {
    let mut f: usize = 1;
    for i in 2..=n {
        f = f.saturating_mul(i);
        if f >= k {
            return true;
        }
    }
    f >= k
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    // lexicographic successor enumeration
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    while let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) {
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
    out
}

/// `k` distinct permutations of `0..n`; the first is always the identity.
pub fn enumerate_orders(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Invalid("at least one order is required".into()));
    }
    if !factorial_at_least(n, k) {
        return Err(Error::Invalid(format!("{k} distinct orders requested but {n}! is smaller")));
    }
    let identity: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n <= 7 {
        let mut rest: Vec<Vec<usize>> = all_permutations(n).into_iter().skip(1).collect();
        rest.shuffle(&mut rng);
        let mut out = vec![identity];
        out.extend(rest.into_iter().take(k - 1));
        return Ok(out);
    }
    let mut seen: HashSet<Vec<usize>> = HashSet::from([identity.clone()]);
    let mut out = vec![identity];
    while out.len() < k {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut rng);
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    Ok(out)
}

fn render_bullets(
    out: &mut String,
    labels: &[crate::task_schema::LabelDef],
    level: DescriptionLevel,
) {
    for label in labels {
        out.push_str("- ");
        out.push_str(&label.id);
        if let Some(desc) = label.description(level) {
            out.push_str(": ");
            out.push_str(desc);
        }
        out.push('\n');
    }
}

fn example_label_line(ex: &FewShotExample, suite: &TaskSuite, selected: &[usize]) -> String {
    if selected.len() > 1 && suite.gate_fires(&ex.labels[0]) {
        return ex.labels[0].clone();
    }
    selected.iter().map(|&i| ex.labels[i].as_str()).collect::<Vec<_>>().join(", ")
}

/// Task indices a selection covers.
pub fn selected_tasks(selection: &TaskSelection, suite: &TaskSuite) -> Result<Vec<usize>> {
    match selection {
        TaskSelection::Joint => Ok((0..suite.len()).collect()),
        TaskSelection::Single(id) => Ok(vec![suite.require_task(id)?.0]),
    }
}

/// Renders the prompt for one target sentence.
pub fn build_prompt(
    cfg: &PromptConfig,
    suite: &TaskSuite,
    examples: &[FewShotExample],
    target: &Instance,
) -> Result<Prompt> {
    let selected = selected_tasks(&cfg.tasks, suite)?;
    let levels: Vec<DescriptionLevel> = match &cfg.tasks {
        TaskSelection::Single(id) => {
            let task = &suite.tasks[selected[0]];
            if !task.supports(cfg.description_level) {
                return Err(Error::Invalid(format!(
                    "task `{id}` has no `{}` label descriptions",
                    cfg.description_level
                )));
            }
            vec![cfg.description_level]
        }
        TaskSelection::Joint => {
            if !suite.tasks.iter().any(|t| t.supports(cfg.description_level)) {
                return Err(Error::Invalid(format!(
                    "no task has `{}` label descriptions",
                    cfg.description_level
                )));
            }
            suite.tasks.iter().map(|t| t.clamp_level(cfg.description_level)).collect()
        }
    };
    if cfg.n_examples > examples.len() {
        return Err(Error::Invalid(format!(
            "{} examples requested but the pool has {}",
            cfg.n_examples,
            examples.len()
        )));
    }
    for ex in &examples[..cfg.n_examples] {
        if ex.labels.len() != suite.len() {
            return Err(Error::Invalid(format!(
                "example `{}` has {} labels, expected {}",
                ex.instance_id,
                ex.labels.len(),
                suite.len()
            )));
        }
    }
    let order = cfg.order.resolve(cfg.n_examples)?;
    let chosen = permute_examples(&examples[..cfg.n_examples], &order)?;

    let mut warnings = Vec::new();
    if !chosen.is_empty() {
        for &ti in &selected {
            let task = &suite.tasks[ti];
            let present: BTreeSet<&str> = chosen.iter().map(|e| e.labels[ti].as_str()).collect();
            let missing: Vec<&str> = task.label_ids().filter(|l| !present.contains(l)).collect();
            if !missing.is_empty() {
                let msg = format!(
                    "examples do not cover every `{}` label; missing: {}",
                    task.id,
                    missing.join(", ")
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let mut text = String::new();
    text.push_str(&cfg.instruction);
    text.push('\n');
    let instruction = 0..text.len();

    let codebook_start = text.len();
    if selected.len() == 1 {
        render_bullets(&mut text, &suite.tasks[selected[0]].labels, levels[0]);
    } else {
        for (&ti, &level) in selected.iter().zip(&levels) {
            let task = &suite.tasks[ti];
            text.push_str(&task.name);
            text.push_str(":\n");
            render_bullets(&mut text, &task.labels, level);
        }
    }
    text.push('\n');
    let codebook = codebook_start..text.len();

    let examples_range = if chosen.is_empty() {
        None
    } else {
        let start = text.len();
        for ex in &chosen {
            text.push_str("Text: ");
            text.push_str(&ex.text);
            text.push_str("\nLabel: ");
            text.push_str(&example_label_line(ex, suite, &selected));
            text.push_str("\n\n");
        }
        Some(start..text.len())
    };

    let target_start = text.len();
    text.push_str("Text: ");
    text.push_str(&target.text);
    text.push_str("\nLabel:");
    let target_range = target_start..text.len();

    let stats = PromptStats {
        words: text.split_whitespace().count(),
        chars: text.chars().count(),
        estimated_tokens: estimate_tokens(&text, cfg.chars_per_token),
    };
    Ok(Prompt {
        text,
        segments: SegmentMap { instruction, codebook, examples: examples_range, target: target_range },
        stats,
        warnings,
    })
}

/// Writes `{dir}/{instance_id}.txt` for auditing.
pub fn dump_prompt(dir: impl AsRef<Path>, instance_id: &str, prompt: &Prompt) -> Result<()> {
    let safe: String = instance_id
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    crate::io::write_file(dir.as_ref().join(format!("{safe}.txt")), &prompt.text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{FATHERHOOD_EXAMPLES, FATHERHOOD_TASKS};
    use proptest::prelude::*;

    fn suite() -> TaskSuite {
        TaskSuite::from_toml_str(FATHERHOOD_TASKS).unwrap()
    }

    fn pool(suite: &TaskSuite) -> Vec<FewShotExample> {
        parse_examples(FATHERHOOD_EXAMPLES, suite).unwrap()
    }

    fn target(text: &str) -> Instance {
        Instance::new("t1", "doc", text)
    }

    #[test]
    fn example_pool_is_gated_on_load() {
        let s = suite();
        let p = pool(&s);
        assert_eq!(p.len(), 18);
        assert_eq!(p[0].labels, vec!["not_applicable"; 3]);
        assert_eq!(p[2].labels, vec!["passive", "explicit", "descriptive"]);
    }

    #[test]
    fn lone_non_gating_label_rejected() {
        let s = suite();
        let src = r#"{"id":"x","text":"t","labels":["passive"]}"#;
        assert!(parse_examples(src, &s).is_err());
    }

    #[test]
    fn joint_long_fifteen_renders_examples() {
        let s = suite();
        let cfg = PromptConfig::new(TaskSelection::Joint, DescriptionLevel::Long, 15);
        let p = build_prompt(&cfg, &s, &pool(&s), &target("hans far är här .")).unwrap();
        let ex = p.segment(p.segments.examples.as_ref().unwrap());
        assert!(ex.starts_with(
            "Text: i båda fallen är modern genetisk mor till barnet .\nLabel: not_applicable\n\n"
        ));
        assert!(ex.contains("\nLabel: passive, explicit, descriptive\n\n"));
        assert_eq!(ex.matches("Text: ").count(), 15);
        assert!(p.text.ends_with("Text: hans far är här .\nLabel:"));
        assert!(p.text.contains("Type of paternal involvement:\n- passive: This is a category"));
        assert!(p.text.contains("Explicitness of the description:\n- implicit\n- explicit\n"));
        assert!(p.text.contains("- ideal: if the sentence is prescriptive"));
    }

    #[test]
    fn single_task_zero_shot_bare_labels() {
        let s = suite();
        let cfg = PromptConfig::new(TaskSelection::Single("explicitness".into()), DescriptionLevel::None, 0);
        let p = build_prompt(&cfg, &s, &pool(&s), &target("min pappa läser .")).unwrap();
        let expected = format!(
            "{DEFAULT_INSTRUCTION}\n- implicit\n- explicit\n- not_applicable\n\nText: min pappa läser .\nLabel:"
        );
        assert_eq!(p.text, expected);
        assert!(p.segments.examples.is_none());
    }

    #[test]
    fn empty_target() {
        let s = suite();
        let cfg = PromptConfig::new(TaskSelection::Single("involvement".into()), DescriptionLevel::Short, 2);
        let p = build_prompt(&cfg, &s, &pool(&s), &target("")).unwrap();
        assert!(p.text.ends_with("Text: \nLabel:"));
        assert!(!p.warnings.is_empty(), "two examples cannot cover six labels");
    }

    #[test]
    fn single_task_example_labels() {
        let s = suite();
        let cfg = PromptConfig::new(TaskSelection::Single("normativeness".into()), DescriptionLevel::Short, 3);
        let p = build_prompt(&cfg, &s, &pool(&s), &target("x")).unwrap();
        let ex = p.segment(p.segments.examples.as_ref().unwrap());
        let labels: Vec<_> = ex.lines().filter_map(|l| l.strip_prefix("Label: ")).collect();
        assert_eq!(labels, vec!["not_applicable", "not_applicable", "descriptive"]);
    }

    #[test]
    fn prompt_errors() {
        let s = suite();
        let p = pool(&s);
        let too_many = PromptConfig::new(TaskSelection::Joint, DescriptionLevel::Long, 19);
        assert!(build_prompt(&too_many, &s, &p, &target("x")).is_err());
        let unknown = PromptConfig::new(TaskSelection::Single("nope".into()), DescriptionLevel::None, 0);
        assert!(build_prompt(&unknown, &s, &p, &target("x")).is_err());
        let no_long = PromptConfig::new(TaskSelection::Single("explicitness".into()), DescriptionLevel::Long, 0);
        assert!(build_prompt(&no_long, &s, &p, &target("x")).is_err());
        let bad_order = PromptConfig::new(TaskSelection::Joint, DescriptionLevel::None, 3)
            .with_order(ExampleOrder::Permutation(vec![0, 0, 1]));
        assert!(build_prompt(&bad_order, &s, &p, &target("x")).is_err());
    }

    #[test]
    fn none_level_has_no_descriptions() {
        let s = suite();
        let cfg = PromptConfig::new(TaskSelection::Joint, DescriptionLevel::None, 0);
        let p = build_prompt(&cfg, &s, &pool(&s), &target("x")).unwrap();
        let codebook = p.segment(&p.segments.codebook);
        for line in codebook.lines().filter(|l| l.starts_with("- ")) {
            assert!(!line.contains(':'), "{line}");
        }
    }

    #[test]
    fn permute_examples_cases() {
        let v = vec!['a', 'b', 'c'];
        assert_eq!(permute_examples(&v, &[0, 1, 2]).unwrap(), v);
        assert_eq!(permute_examples(&v, &[2, 1, 0]).unwrap(), vec!['c', 'b', 'a']);
        let w = vec![1, 2];
        let once = permute_examples(&w, &[1, 0]).unwrap();
        assert_eq!(permute_examples(&once, &[1, 0]).unwrap(), w);
        assert!(permute_examples(&v, &[0, 1]).is_err());
        assert!(permute_examples(&v, &[0, 1, 3]).is_err());
    }

    #[test]
    fn enumerate_orders_cases() {
        let orders = enumerate_orders(15, 3, 11).unwrap();
        assert_eq!(orders.len(), 3);
        assert_eq!(orders[0], (0..15).collect::<Vec<_>>());
        let distinct: HashSet<_> = orders.iter().collect();
        assert_eq!(distinct.len(), 3);
        assert_eq!(orders, enumerate_orders(15, 3, 11).unwrap());
        assert_eq!(enumerate_orders(1, 1, 5).unwrap(), vec![vec![0]]);
        assert!(enumerate_orders(3, 7, 0).is_err());
        assert_eq!(enumerate_orders(3, 6, 0).unwrap().len(), 6);
        assert!(enumerate_orders(4, 0, 0).is_err());
    }

    #[test]
    fn estimate_tokens_cases() {
        assert_eq!(estimate_tokens("abcdefgh", 4.0), 2);
        assert_eq!(estimate_tokens("", 4.0), 0);
        assert_eq!(estimate_tokens("abcdefghi", 4.0), 3);
        assert_eq!(estimate_tokens("åäö", 1.0), 3);
    }

    #[test]
    fn order_config_serde() {
        #[derive(Deserialize)]
        struct W {
            order: ExampleOrder,
        }
        let a: W = toml::from_str("order = \"authored\"").unwrap();
        assert_eq!(a.order, ExampleOrder::Authored);
        let b: W = toml::from_str("order = 7").unwrap();
        assert_eq!(b.order, ExampleOrder::Seed(7));
        let c: W = toml::from_str("order = [1, 0]").unwrap();
        assert_eq!(c.order, ExampleOrder::Permutation(vec![1, 0]));
        assert!(toml::from_str::<W>("order = \"random\"").is_err());
    }

    fn level() -> impl Strategy<Value = DescriptionLevel> {
        prop::sample::select(DescriptionLevel::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn rendering_invariants(
            joint in any::<bool>(),
            lvl in level(),
            n in 0usize..=18,
            seed: u64,
            words in prop::collection::vec("[a-zåäö]{1,8}", 0..12),
        ) {
            let s = suite();
            let p = pool(&s);
            let tasks = if joint { TaskSelection::Joint } else { TaskSelection::Single("involvement".into()) };
            let cfg = PromptConfig::new(tasks, lvl, n).with_order(ExampleOrder::Seed(seed));
            let t = target(&words.join(" "));
            let a = build_prompt(&cfg, &s, &p, &t).unwrap();
            let b = build_prompt(&cfg, &s, &p, &t).unwrap();
            prop_assert_eq!(&a.text, &b.text);

            let seg = &a.segments;
            prop_assert_eq!(seg.instruction.start, 0);
            prop_assert_eq!(seg.instruction.end, seg.codebook.start);
            let after_codebook = seg.examples.as_ref().map(|e| { e.start }).unwrap_or(seg.target.start);
            prop_assert_eq!(seg.codebook.end, after_codebook);
            if let Some(e) = &seg.examples { prop_assert_eq!(e.end, seg.target.start); }
            prop_assert_eq!(seg.target.end, a.text.len());
            prop_assert_eq!(seg.examples.is_none(), n == 0);

            let needle = format!("Text: {}\nLabel:", t.text);
            prop_assert!(a.segment(&seg.target) == needle);
            prop_assert_eq!(a.stats.chars, a.text.chars().count());
            prop_assert_eq!(a.stats.words, a.text.split_whitespace().count());
            prop_assert_eq!(a.stats.estimated_tokens, estimate_tokens(&a.text, 4.0));

            if lvl == DescriptionLevel::None {
                prop_assert!(!a.text.contains("This is a category"));
                prop_assert!(!a.text.contains("fathers who are not actively"));
            }
        }

        #[test]
        fn enumerate_orders_are_permutations(n in 1usize..10, k in 1usize..6, seed: u64) {
            prop_assume!(factorial_at_least(n, k));
            let orders = enumerate_orders(n, k, seed).unwrap();
            prop_assert_eq!(orders.len(), k);
            for o in &orders { prop_assert!(check_permutation(o, n).is_ok()); }
            let distinct: HashSet<_> = orders.iter().collect();
            prop_assert_eq!(distinct.len(), k);
        }
    }
}
