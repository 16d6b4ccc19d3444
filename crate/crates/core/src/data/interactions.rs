//! Interaction log ingestion and the leave-one-out split.
//!
//! Raw logs arrive either as MovieLens-style `::`-separated ratings or as a
//! plain TSV. Ratings are binarized away (any interaction counts as 1), raw
//! ids are remapped to dense 0-based ids in first-seen order, and duplicate
//! (user, item) pairs collapse to their latest timestamp. The split holds out
//! each user's latest interaction for test and the next-latest for
//! validation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Raw-id ↔ dense-id table, assigned in first-seen order so re-ingesting the
/// same file reproduces the same mapping.
#[derive(Clone, Debug, Default)]
pub struct IdRemap {
    to_dense: HashMap<String, u32>,
    to_raw: Vec<String>,
}

impl IdRemap {
    pub fn new() -> Self {
        IdRemap::default()
    }

    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&d) = self.to_dense.get(raw) {
            return d;
        }
        let d = self.to_raw.len() as u32;
        self.to_dense.insert(raw.to_string(), d);
        self.to_raw.push(raw.to_string());
        d
    }

    pub fn dense(&self, raw: &str) -> Option<u32> {
        self.to_dense.get(raw).copied()
    }

    pub fn raw(&self, dense: u32) -> Option<&str> {
        self.to_raw.get(dense as usize).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.to_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_raw.is_empty()
    }

    /// TSV export, `raw_id<TAB>dense_id`, in dense order.
    pub fn write_tsv(&self, w: &mut impl Write) -> Result<()> {
        for (d, raw) in self.to_raw.iter().enumerate() {
            writeln!(w, "{raw}\t{d}")?;
        }
        Ok(())
    }

    pub fn read_tsv(r: impl BufRead) -> Result<Self> {
        let mut remap = IdRemap::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let raw = parts.next().unwrap_or("");
            let dense: u32 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: "<remap>".into(),
                    line: lineno + 1,
                    message: "expected raw_id<TAB>dense_id".into(),
                })?;
            if dense as usize != remap.to_raw.len() {
                return Err(Error::Parse {
                    path: "<remap>".into(),
                    line: lineno + 1,
                    message: format!("dense ids must be contiguous, got {dense}"),
                });
            }
            remap.intern(raw);
        }
        Ok(remap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub timestamp: i64,
}

#[derive(Clone, Debug)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
    pub num_users: usize,
    pub num_items: usize,
    pub users: IdRemap,
    pub items: IdRemap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogFormat {
    /// `UserID::MovieID::Rating::Timestamp`; the rating is discarded.
    MovielensDat,
    /// `user<TAB>item<TAB>timestamp`.
    Tsv,
}

impl LogFormat {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "movielens_dat" => Ok(LogFormat::MovielensDat),
            "tsv" => Ok(LogFormat::Tsv),
            other => Err(Error::Config(format!(
                "unknown interaction format {other:?} (expected movielens_dat or tsv)"
            ))),
        }
    }
}

fn parse_line(format: LogFormat, line: &str) -> Option<(&str, &str, i64)> {
    match format {
        LogFormat::MovielensDat => {
            let mut it = line.split("::");
            let user = it.next()?;
            let item = it.next()?;
            let _rating = it.next()?;
            let ts: i64 = it.next()?.trim().parse().ok()?;
            if it.next().is_some() || user.is_empty() || item.is_empty() {
                return None;
            }
            Some((user, item, ts))
        }
        LogFormat::Tsv => {
            let mut it = line.split('\t');
            let user = it.next()?;
            let item = it.next()?;
            let ts: i64 = it.next()?.trim().parse().ok()?;
            if it.next().is_some() || user.is_empty() || item.is_empty() {
                return None;
            }
            Some((user, item, ts))
        }
    }
}

pub fn load_interactions(path: &Path, format: LogFormat) -> Result<InteractionLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_interactions(BufReader::new(file), format, &path.display().to_string())
}

pub fn parse_interactions(
    r: impl BufRead,
    format: LogFormat,
    path: &str,
) -> Result<InteractionLog> {
    let mut users = IdRemap::new();
    let mut items = IdRemap::new();
    // (user, item) -> latest timestamp; duplicates keep the latest.
    let mut latest: HashMap<(u32, u32), i64> = HashMap::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (u_raw, i_raw, ts) = parse_line(format, &line).ok_or_else(|| Error::Parse {
            path: path.to_string(),
            line: lineno + 1,
            message: format!("malformed record: {line:?}"),
        })?;
        let u = users.intern(u_raw);
        let i = items.intern(i_raw);
        let e = latest.entry((u, i)).or_insert(ts);
        if ts > *e {
            *e = ts;
        }
    }
    if latest.is_empty() {
        return Err(Error::EmptyLog(path.to_string()));
    }
    let mut records: Vec<Interaction> = latest
        .into_iter()
        .map(|((user, item), timestamp)| Interaction {
            user,
            item,
            timestamp,
        })
        .collect();
    records.sort_unstable_by_key(|r| (r.user, r.timestamp, r.item));
    Ok(InteractionLog {
        num_users: users.len(),
        num_items: items.len(),
        records,
        users,
        items,
    })
}

#[derive(Clone, Debug)]
pub struct SplitDataset {
    /// Training interactions; shares the full log's id space and remaps.
    pub train: InteractionLog,
    /// user → held-out validation item (second-latest interaction).
    pub val: Vec<(u32, u32)>,
    /// user → held-out test item (latest interaction).
    pub test: Vec<(u32, u32)>,
    /// Per-user sorted set of every interacted item (train ∪ val ∪ test).
    pub positives_by_user: Vec<Vec<u32>>,
    /// Users dropped for having fewer than 3 interactions. They keep their
    /// dense ids but appear in no split.
    pub filtered_users: usize,
}

impl SplitDataset {
    pub fn is_positive(&self, user: u32, item: u32) -> bool {
        self.positives_by_user
            .get(user as usize)
            .map(|p| p.binary_search(&item).is_ok())
            .unwrap_or(false)
    }
}

/// Sort key for timestamp ties: numeric raw ids compare numerically so that
/// e.g. item "10" outranks item "9"; non-numeric ids fall back to the string.
fn raw_item_key(raw: &str) -> (u64, &str) {
    match raw.parse::<u64>() {
        Ok(n) => (n, ""),
        Err(_) => (u64::MAX, raw),
    }
}

/// Per user: latest interaction → test, next-latest → val, remainder → train.
/// Ties on timestamp send the larger raw item id to the later slot. Users
/// with fewer than 3 interactions are dropped (counted, not an error).
pub fn leave_one_out_split(log: &InteractionLog) -> SplitDataset {
    let mut per_user: Vec<Vec<Interaction>> = vec![Vec::new(); log.num_users];
    for r in &log.records {
        per_user[r.user as usize].push(*r);
    }

    let mut train_records = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    let mut positives_by_user = vec![Vec::new(); log.num_users];
    let mut filtered_users = 0usize;

    for (u, mut recs) in per_user.into_iter().enumerate() {
        if recs.is_empty() {
            continue;
        }
        if recs.len() < 3 {
            filtered_users += 1;
            continue;
        }
        recs.sort_by(|a, b| {
            a.timestamp.cmp(&b.timestamp).then_with(|| {
                let ka = raw_item_key(log.items.raw(a.item).unwrap_or(""));
                let kb = raw_item_key(log.items.raw(b.item).unwrap_or(""));
                ka.cmp(&kb)
            })
        });
        let t = recs.pop().expect("len >= 3");
        let v = recs.pop().expect("len >= 2 after pop");
        test.push((u as u32, t.item));
        val.push((u as u32, v.item));
        let mut pos: Vec<u32> = recs.iter().map(|r| r.item).collect();
        pos.push(v.item);
        pos.push(t.item);
        pos.sort_unstable();
        positives_by_user[u] = pos;
        train_records.extend(recs);
    }

    SplitDataset {
        train: InteractionLog {
            records: train_records,
            num_users: log.num_users,
            num_items: log.num_items,
            users: log.users.clone(),
            items: log.items.clone(),
        },
        val,
        test,
        positives_by_user,
        filtered_users,
    }
}

impl InteractionLog {
    /// TSV export of the records, `user<TAB>item<TAB>timestamp` (dense ids).
    pub fn write_records_tsv(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = String::new();
        for r in &self.records {
            buf.clear();
            let _ = writeln!(buf, "{}\t{}\t{}", r.user, r.item, r.timestamp);
            w.write_all(buf.as_bytes())?;
        }
        Ok(())
    }
}

/// Parse dense-id records (`user<TAB>item<TAB>timestamp`) written by
/// [`InteractionLog::write_records_tsv`].
pub fn read_records_tsv(r: impl BufRead, path: &str) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let rec = (|| {
            Some(Interaction {
                user: it.next()?.parse().ok()?,
                item: it.next()?.parse().ok()?,
                timestamp: it.next()?.parse().ok()?,
            })
        })()
        .ok_or_else(|| Error::Parse {
            path: path.to_string(),
            line: lineno + 1,
            message: "expected user<TAB>item<TAB>timestamp".into(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
