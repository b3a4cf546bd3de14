//! Codebook and few-shot pool for the Swedish fatherhood coding scheme,
//! bundled so examples and tests run without external files.

/// Three-task suite: involvement (6 labels), explicitness, normativeness,
/// gated on `involvement = not_applicable`.
pub const FATHERHOOD_TASKS: &str = include_str!("../data/fatherhood_tasks.toml");

/// Eighteen hand-labelled example sentences, one JSON record per line.
pub const FATHERHOOD_EXAMPLES: &str = include_str!("../data/fatherhood_examples.jsonl");

/// Keywords that mark a sentence as being about fathers.
pub const FATHER_KEYWORDS: &[&str] = &["pappa", "pappor", "fäder", "fader", "far"];

/// Default instruction line placed at the top of every prompt.
pub const DEFAULT_INSTRUCTION: &str =
    "Label the Swedish text according to how it describes the role of the father in the family. Possible labels are:";
