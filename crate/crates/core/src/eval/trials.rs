//! Trial lists and score files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One verification comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trial {
    pub target: bool,
    pub enroll: String,
    pub test: String,
}

impl Trial {
    pub fn new(target: bool, enroll: impl Into<String>, test: impl Into<String>) -> Self {
        Self {
            target,
            enroll: enroll.into(),
            test: test.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn n_target(&self) -> usize {
        self.trials.iter().filter(|t| t.target).count()
    }

    pub fn n_nontarget(&self) -> usize {
        self.len() - self.n_target()
    }

    /// Every id mentioned, sorted and deduplicated.
    pub fn unique_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .trials
            .iter()
            .flat_map(|t| [t.enroll.clone(), t.test.clone()])
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// `<label 0|1> <enroll_id> <test_id>` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.trials {
            let _ = writeln!(s, "{} {} {}", t.target as u8, t.enroll, t.test);
        }
        s
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut trials = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Line {
                path: source.to_string(),
                line: i + 1,
                msg,
            };
            if fields.len() != 3 {
                return Err(err(format!("expected `<label> <enroll> <test>`, got {} fields", fields.len())));
            }
            trials.push(Trial::new(parse_label(fields[0]).map_err(err)?, fields[1], fields[2]));
        }
        Ok(Self { trials })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_label(s: &str) -> std::result::Result<bool, String> {
    match s {
        "1" | "target" => Ok(true),
        "0" | "nontarget" => Ok(false),
        other => Err(format!("label must be 0 or 1, got `{other}`")),
    }
}

/// A scored trial as stored in a score file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: Trial,
    pub score: f64,
}

/// `<label> <enroll_id> <test_id> <score>` per line.
pub fn format_scores(rows: &[ScoredTrial]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(s, "{} {} {} {}", r.trial.target as u8, r.trial.enroll, r.trial.test, r.score);
    }
    s
}

/// Parses a score file; non-finite scores are rejected with their line number.
pub fn parse_scores(text: &str, source: &str) -> Result<Vec<ScoredTrial>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Line {
            path: source.to_string(),
            line: i + 1,
            msg,
        };
        if fields.len() != 4 {
            return Err(err(format!("expected `<label> <enroll> <test> <score>`, got {} fields", fields.len())));
        }
        let target = parse_label(fields[0]).map_err(err)?;
        let score: f64 = fields[3].parse().map_err(|_| err(format!("score `{}` is not a number", fields[3])))?;
        if !score.is_finite() {
            return Err(err(format!("score `{}` is not finite", fields[3])));
        }
        rows.push(ScoredTrial {
            trial: Trial::new(target, fields[1], fields[2]),
            score,
        });
    }
    Ok(rows)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoredTrial>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text, &path.display().to_string())
}
