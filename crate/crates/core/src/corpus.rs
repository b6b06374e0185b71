//! Corpus records and the line-delimited JSON corpus format.
//!
//! One `Example` per line with fields `id`, `article`, `reference`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A news article paired with its human-written summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub article: String,
    pub reference: String,
}

impl Example {
    pub fn new(
        id: impl Into<String>,
        article: impl Into<String>,
        reference: impl Into<String>,
    ) -> Result<Self> {
        let example = Example {
            id: id.into(),
            article: article.into(),
            reference: reference.into(),
        };
        example.validate()?;
        Ok(example)
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Data("example id must be nonempty".into()));
        }
        if self.article.trim().is_empty() {
            return Err(Error::Data(format!("example `{}` has an empty article", self.id)));
        }
        if self.reference.trim().is_empty() {
            return Err(Error::Data(format!(
                "example `{}` has an empty reference",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Validation,
}

/// An ordered, id-unique collection of examples.
#[derive(Debug, Clone)]
pub struct Corpus {
    split: Split,
    examples: Vec<Example>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting invalid examples and duplicate ids.
    pub fn new(split: Split, examples: Vec<Example>) -> Result<Self> {
        let mut index = HashMap::with_capacity(examples.len());
        for (i, example) in examples.iter().enumerate() {
            example.validate()?;
            if index.insert(example.id.clone(), i).is_some() {
                return Err(Error::Data(format!(
                    "duplicate example id `{}` in {:?} corpus",
                    example.id, split
                )));
            }
        }
        Ok(Corpus {
            split,
            examples,
            index,
        })
    }

    pub fn load_jsonl(path: impl AsRef<Path>, split: Split) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let mut examples = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::file(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let example: Example = serde_json::from_str(&line).map_err(|e| {
                Error::Data(format!("{}:{}: {}", path.display(), lineno + 1, e))
            })?;
            examples.push(example);
        }
        Corpus::new(split, examples)
            .map_err(|e| Error::Data(format!("{}: {}", path.display(), e)))
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut out = BufWriter::new(file);
        for example in &self.examples {
            serde_json::to_writer(&mut out, example)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.index.get(id).map(|&i| &self.examples[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|e| e.id.as_str())
    }

    /// Fails when the two corpora share any id.
    pub fn ensure_disjoint(&self, other: &Corpus) -> Result<()> {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        if let Some(id) = small.ids().find(|id| large.contains(id)) {
            return Err(Error::Data(format!(
                "example `{id}` appears in both the {:?} and {:?} corpora",
                self.split, other.split
            )));
        }
        Ok(())
    }
}
