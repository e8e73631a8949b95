use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use incnlu_core::corpus::{parse_corpus, AnnotatedUtterance, ImportOptions, SlotLexicon};
use incnlu_core::slot_lexicon;

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_corpus(path: &Path, keep_case: bool) -> Result<Vec<AnnotatedUtterance>> {
    let text = read(path)?;
    parse_corpus(
        &text,
        ImportOptions {
            lowercase: !keep_case,
        },
    )
    .with_context(|| format!("parsing corpus {}", path.display()))
}

pub fn read_lexicon(lexicon: Option<&Path>, corpus: Option<&Path>) -> Result<SlotLexicon> {
    match (lexicon, corpus) {
        (Some(path), _) => Ok(SlotLexicon::from_lines(&read(path)?)),
        (None, Some(path)) => Ok(slot_lexicon(&read_corpus(path, false)?)),
        (None, None) => bail!("a slot lexicon or corpus is required"),
    }
}

/// Fails early when an output file could not be created later.
pub fn check_output(path: &Path) -> Result<()> {
    let parent = parent_dir(path);
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    if path.is_dir() {
        bail!("output path {} is a directory", path.display());
    }
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes `contents` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path))
        .with_context(|| format!("creating temporary file for {}", path.display()))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.flush())
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("moving output into place at {}", path.display()))?;
    Ok(())
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}
