//! Persistent summary store: proven (or recorded-unproven) nonterminal
//! summaries keyed by a canonical fingerprint of the nonterminal's reachable
//! sub-grammar. One record per line, human-readable and mergeable; writers
//! take an advisory file lock.

use std::fs::{File, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use indexmap::IndexMap;
use thiserror::Error;

use crate::logic::{parse_formula_text, print_formula, Formula, FormulaScope, VarSort};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on store `{path}`: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error("corrupt store `{path}` at line {line}: {msg} (refusing to write)")]
    Corrupt { path: PathBuf, line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofStatus {
    Proven,
    Unproven,
}

impl std::fmt::Display for ProofStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProofStatus::Proven => write!(f, "proven"),
            ProofStatus::Unproven => write!(f, "unproven"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StoreEntry {
    pub fingerprint: String,
    pub nonterminal: String,
    pub status: ProofStatus,
    pub timestamp: u64,
    /// Formals the stored body is written over, with sorts; on lookup the
    /// body is rebased onto the requesting benchmark's profile names.
    pub formals: Vec<(String, VarSort)>,
    pub summary: Formula,
}

#[derive(Debug, Default)]
pub struct SummaryStore {
    entries: IndexMap<String, StoreEntry>,
}

fn sort_token(s: VarSort) -> &'static str {
    match s {
        VarSort::Int => "Int",
        VarSort::Bool => "Bool",
        VarSort::Idx => "Idx",
        VarSort::VecInt => "VecInt",
        VarSort::VecBool => "VecBool",
    }
}

fn parse_sort_token(s: &str) -> Option<VarSort> {
    Some(match s {
        "Int" => VarSort::Int,
        "Bool" => VarSort::Bool,
        "Idx" => VarSort::Idx,
        "VecInt" => VarSort::VecInt,
        "VecBool" => VarSort::VecBool,
        _ => return None,
    })
}

impl SummaryStore {
    pub fn load(path: &Path) -> Result<SummaryStore, StoreError> {
        if !path.exists() {
            return Ok(SummaryStore::default());
        }
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|err| StoreError::Io { path: path.to_path_buf(), err })?;
        let mut entries = IndexMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.splitn(6, '\t').collect();
            if parts.len() != 6 {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected 6 tab-separated fields, found {}", parts.len()),
                });
            }
            let status = match parts[2] {
                "proven" => ProofStatus::Proven,
                "unproven" => ProofStatus::Unproven,
                other => {
                    return Err(StoreError::Corrupt {
                        path: path.to_path_buf(),
                        line: i + 1,
                        msg: format!("bad status `{other}`"),
                    })
                }
            };
            let timestamp = parts[3].parse::<u64>().map_err(|_| StoreError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "bad timestamp".into(),
            })?;
            let mut formals = Vec::new();
            for tok in parts[4].split(',').filter(|t| !t.is_empty()) {
                let (name, sort) = tok.split_once(':').ok_or_else(|| StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("bad formal `{tok}`"),
                })?;
                let sort = parse_sort_token(sort).ok_or_else(|| StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("bad sort in `{tok}`"),
                })?;
                formals.push((name.to_string(), sort));
            }
            let mut scope = FormulaScope::default();
            for (v, s) in &formals {
                if *s == VarSort::Bool {
                    scope.bool_vars.insert(v.clone());
                }
            }
            let summary =
                parse_formula_text(parts[5], &scope).map_err(|e| StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            entries.insert(
                parts[0].to_string(),
                StoreEntry {
                    fingerprint: parts[0].to_string(),
                    nonterminal: parts[1].to_string(),
                    status,
                    timestamp,
                    formals,
                    summary,
                },
            );
        }
        Ok(SummaryStore { entries })
    }

    /// Proven summary for the given fingerprint, if any.
    pub fn lookup(&self, fingerprint: &str) -> Option<&StoreEntry> {
        self.entries
            .get(fingerprint)
            .filter(|e| e.status == ProofStatus::Proven)
    }

    pub fn entries(&self) -> impl Iterator<Item = &StoreEntry> {
        self.entries.values()
    }

    pub fn insert(&mut self, entry: StoreEntry) {
        self.entries.insert(entry.fingerprint.clone(), entry);
    }

    /// Persist under an advisory lock. Existing entries with the same
    /// fingerprint are replaced; the load is re-done under the lock so
    /// concurrent writers merge rather than clobber.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let lock_path = path.with_extension("lock");
        let lock = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(false)
            .open(&lock_path)
            .map_err(|err| StoreError::Io { path: lock_path.clone(), err })?;
        lock.lock().map_err(|err| StoreError::Io { path: lock_path.clone(), err })?;
        let mut merged = SummaryStore::load(path)?;
        for e in self.entries.values() {
            merged.insert(e.clone());
        }
        let mut out = String::new();
        for e in merged.entries.values() {
            let formals = e
                .formals
                .iter()
                .map(|(v, s)| format!("{v}:{}", sort_token(*s)))
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.fingerprint,
                e.nonterminal,
                e.status,
                e.timestamp,
                formals,
                print_formula(&e.summary)
            ));
        }
        let result = std::fs::write(path, out)
            .map_err(|err| StoreError::Io { path: path.to_path_buf(), err });
        let _ = lock.unlock();
        result
    }
}

pub fn now_epoch_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gimp::parse_grammar_text;
    use crate::logic::Term;

    fn entry(fp: &str) -> StoreEntry {
        StoreEntry {
            fingerprint: fp.to_string(),
            nonterminal: "N".to_string(),
            status: ProofStatus::Proven,
            timestamp: 123,
            formals: vec![("e_t".to_string(), VarSort::Int)],
            summary: Formula::eq(Term::modulo(Term::var("e_t"), 2), Term::Int(0)),
        }
    }

    #[test]
    fn round_trip_and_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.tsv");
        let mut store = SummaryStore::default();
        store.insert(entry("abc"));
        store.save(&path).unwrap();
        let loaded = SummaryStore::load(&path).unwrap();
        let hit = loaded.lookup("abc").unwrap();
        assert_eq!(hit.nonterminal, "N");
        assert_eq!(hit.formals.len(), 1);
        assert!(loaded.lookup("other").is_none());
    }

    #[test]
    fn same_grammar_text_hits_twice() {
        let g = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let fp1 = g.fingerprint("N").unwrap();
        let g2 = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        assert_eq!(fp1, g2.fingerprint("N").unwrap());
    }

    #[test]
    fn alpha_renamed_nonterminals_hit() {
        let g1 = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let g2 = parse_grammar_text("(nonterm Q IntExpr 2 (+ 2 Q))").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.tsv");
        let mut store = SummaryStore::default();
        store.insert(entry(&g1.fingerprint("N").unwrap()));
        store.save(&path).unwrap();
        let loaded = SummaryStore::load(&path).unwrap();
        assert!(loaded.lookup(&g2.fingerprint("Q").unwrap()).is_some());
    }

    #[test]
    fn extra_production_misses() {
        let g1 = parse_grammar_text("(nonterm N IntExpr 2 (+ 2 N))").unwrap();
        let g2 = parse_grammar_text("(nonterm N IntExpr 2 3 (+ 2 N))").unwrap();
        assert_ne!(g1.fingerprint("N").unwrap(), g2.fingerprint("N").unwrap());
    }

    #[test]
    fn corrupt_store_refuses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.tsv");
        std::fs::write(&path, "garbage line without tabs\n").unwrap();
        assert!(matches!(SummaryStore::load(&path), Err(StoreError::Corrupt { .. })));
        // save() re-loads under the lock, so it refuses too.
        let mut s = SummaryStore::default();
        s.insert(entry("abc"));
        assert!(s.save(&path).is_err());
    }

    #[test]
    fn merge_under_lock_keeps_other_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.tsv");
        let mut a = SummaryStore::default();
        a.insert(entry("one"));
        a.save(&path).unwrap();
        let mut b = SummaryStore::default();
        b.insert(entry("two"));
        b.save(&path).unwrap();
        let loaded = SummaryStore::load(&path).unwrap();
        assert!(loaded.lookup("one").is_some());
        assert!(loaded.lookup("two").is_some());
    }
}
