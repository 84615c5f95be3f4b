//! Cross-session group memory.
//!
//! Every completed session contributes its relevant items to the store: they
//! start a new group when none of them is grouped yet, extend the group they
//! touch, or merge every group they touch into one. Groups are kept in a
//! union-find forest with path compression and union by size.
//!
//! On disk the store is JSON lines: a header `{"generation": n}` followed by
//! one `{"id": .., "root": ..}` object per grouped item.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One answered batch: which items were shown and which were marked relevant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub session_id: String,
    #[serde(default)]
    pub query_id: Option<String>,
    pub iteration: usize,
    pub shown: Vec<String>,
    pub relevant: Vec<String>,
    /// Milliseconds since the epoch, or a logical clock in simulations.
    pub timestamp: u64,
}

impl FeedbackEvent {
    pub fn validate(&self) -> Result<()> {
        if let Some(id) = self.relevant.iter().find(|id| !self.shown.contains(id)) {
            return Err(Error::Validation(format!(
                "event {}#{}: relevant item {id:?} was not shown",
                self.session_id, self.iteration
            )));
        }
        Ok(())
    }

    pub fn nonrelevant(&self) -> impl Iterator<Item = &String> + '_ {
        self.shown
            .iter()
            .filter(move |id| !self.relevant.contains(id))
    }
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<FeedbackEvent>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: FeedbackEvent = serde_json::from_str(&line).map_err(|e| Error::Format {
            line: idx + 1,
            message: e.to_string(),
        })?;
        event.validate()?;
        events.push(event);
    }
    Ok(events)
}

pub fn append_events(path: impl AsRef<Path>, events: &[FeedbackEvent]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// How [`GroupStore::record_session`] changed the store.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordOutcome {
    NoOp,
    Created { root: String },
    Extended { root: String },
    Merged { root: String, merged: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    pub generation: u64,
    pub group_count: usize,
    pub grouped_items: usize,
    /// group size → number of groups of that size
    pub size_histogram: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, Default)]
pub struct GroupStore {
    ids: Vec<String>,
    node: HashMap<String, usize>,
    parent: Vec<usize>,
    size: Vec<usize>,
    generation: u64,
}

impl GroupStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn grouped_items(&self) -> usize {
        self.ids.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node.contains_key(id)
    }

    fn root_of(&self, mut n: usize) -> usize {
        while self.parent[n] != n {
            n = self.parent[n];
        }
        n
    }

    fn find(&mut self, n: usize) -> usize {
        let root = self.root_of(n);
        let mut cur = n;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return a;
        }
        if self.size[a] < self.size[b]
            || (self.size[a] == self.size[b] && self.ids[b] < self.ids[a])
        {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        a
    }

    fn node_for(&mut self, id: &str) -> usize {
        if let Some(&n) = self.node.get(id) {
            return n;
        }
        let n = self.ids.len();
        self.ids.push(id.to_string());
        self.parent.push(n);
        self.size.push(1);
        self.node.insert(id.to_string(), n);
        n
    }

    /// Root id of the group holding `id`.
    pub fn root(&self, id: &str) -> Option<&str> {
        self.node
            .get(id)
            .map(|&n| self.ids[self.root_of(n)].as_str())
    }

    pub fn group_size(&self, root: &str) -> usize {
        match self.node.get(root) {
            Some(&n) if self.parent[n] == n => self.size[n],
            _ => 0,
        }
    }

    pub fn group_count(&self) -> usize {
        (0..self.ids.len()).filter(|&n| self.parent[n] == n).count()
    }

    /// Every group keyed by root id, members sorted.
    pub fn groups(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (n, id) in self.ids.iter().enumerate() {
            out.entry(self.ids[self.root_of(n)].clone())
                .or_default()
                .push(id.clone());
        }
        for members in out.values_mut() {
            members.sort();
        }
        out
    }

    pub fn stats(&self) -> GroupStats {
        let mut size_histogram = BTreeMap::new();
        for n in 0..self.ids.len() {
            if self.parent[n] == n {
                *size_histogram.entry(self.size[n]).or_insert(0) += 1;
            }
        }
        GroupStats {
            generation: self.generation,
            group_count: size_histogram.values().sum(),
            grouped_items: self.ids.len(),
            size_histogram,
        }
    }

    /// Roots of every group holding at least one of `relevant`.
    pub fn match_groups<S: AsRef<str>>(&self, relevant: &[S]) -> BTreeSet<String> {
        relevant
            .iter()
            .filter_map(|id| self.root(id.as_ref()))
            .map(str::to_string)
            .collect()
    }

    /// Up to `needed` distinct members of the groups rooted at `roots`, drawn
    /// without replacement after removing `exclude`. When fewer members are
    /// available all of them are returned, in id order.
    pub fn group_fill<S>(
        &self,
        roots: &BTreeSet<String>,
        needed: usize,
        exclude: &std::collections::HashSet<S>,
        seed: u64,
    ) -> Vec<String>
    where
        S: std::borrow::Borrow<str> + Eq + std::hash::Hash,
    {
        self.group_fill_where(roots, needed, |id| !exclude.contains(id), seed)
    }

    pub fn group_fill_where(
        &self,
        roots: &BTreeSet<String>,
        needed: usize,
        allowed: impl Fn(&str) -> bool,
        seed: u64,
    ) -> Vec<String> {
        if needed == 0 || roots.is_empty() {
            return Vec::new();
        }
        let root_nodes: BTreeSet<usize> = roots
            .iter()
            .filter_map(|r| self.node.get(r.as_str()).copied())
            .filter(|&n| self.parent[n] == n)
            .collect();
        let mut pool: Vec<&str> = (0..self.ids.len())
            .filter(|&n| root_nodes.contains(&self.root_of(n)))
            .map(|n| self.ids[n].as_str())
            .filter(|id| allowed(id))
            .collect();
        pool.sort_unstable();
        if pool.len() <= needed {
            return pool.into_iter().map(str::to_string).collect();
        }
        let mut rng = rng::rng(seed);
        index::sample(&mut rng, pool.len(), needed)
            .into_iter()
            .map(|i| pool[i].to_string())
            .collect()
    }

    /// Folds one session's final relevant set into the store.
    ///
    /// `matched_roots` are groups known to be connected to the session; the
    /// relevant items are unioned with them and with any group already holding
    /// one of them.
    pub fn record_session<S: AsRef<str>>(
        &mut self,
        final_relevant: &[S],
        matched_roots: &BTreeSet<String>,
    ) -> RecordOutcome {
        if final_relevant.is_empty() {
            return RecordOutcome::NoOp;
        }
        let matched: Vec<usize> = matched_roots
            .iter()
            .filter_map(|r| self.node.get(r.as_str()).copied())
            .collect();
        let mut touched: BTreeSet<usize> = matched.into_iter().map(|n| self.find(n)).collect();
        for id in final_relevant {
            if let Some(&n) = self.node.get(id.as_ref()) {
                let r = self.find(n);
                touched.insert(r);
            }
        }

        let nodes: Vec<usize> = final_relevant
            .iter()
            .map(|id| self.node_for(id.as_ref()))
            .collect();
        let mut root = nodes[0];
        for &n in touched.iter().chain(&nodes[1..]) {
            root = self.union(root, n);
        }
        self.generation += 1;

        let root = self.ids[root].clone();
        match touched.len() {
            0 => RecordOutcome::Created { root },
            1 => RecordOutcome::Extended { root },
            merged => RecordOutcome::Merged { root, merged },
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("jsonl.tmp");
        {
            let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut out = BufWriter::new(file);
            self.write_to(&mut out)?;
            out.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let io = |e| Error::io("<groups>", e);
        serde_json::to_writer(
            &mut *out,
            &Header {
                generation: self.generation,
            },
        )?;
        out.write_all(b"\n").map_err(io)?;
        for (root, members) in self.groups() {
            for id in members {
                serde_json::to_writer(
                    &mut *out,
                    &Membership {
                        id: &id,
                        root: &root,
                    },
                )?;
                out.write_all(b"\n").map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file))
    }

    /// Loads `path` if it exists, otherwise starts empty.
    pub fn load_or_default(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut store = GroupStore::default();
        let mut lines = reader
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
        let format_err = |line: usize, e: serde_json::Error| Error::Format {
            line,
            message: e.to_string(),
        };
        if let Some((idx, line)) = lines.next() {
            let line = line.map_err(|e| Error::io("<groups>", e))?;
            let header: Header = serde_json::from_str(&line).map_err(|e| format_err(idx + 1, e))?;
            store.generation = header.generation;
        }
        let mut assigned: BTreeMap<String, String> = BTreeMap::new();
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io("<groups>", e))?;
            let m: OwnedMembership =
                serde_json::from_str(&line).map_err(|e| format_err(idx + 1, e))?;
            if assigned.insert(m.id.clone(), m.root).is_some() {
                return Err(Error::Validation(format!("item {:?} listed twice", m.id)));
            }
        }
        for (id, root) in &assigned {
            if let Some(of_root) = assigned.get(root) {
                if of_root != root {
                    return Err(Error::Validation(format!(
                        "root {root:?} of {id:?} is itself a member of group {of_root:?}"
                    )));
                }
            }
        }
        for (id, root) in &assigned {
            let r = store.node_for(root);
            let n = store.node_for(id);
            if n != r {
                store.parent[n] = r;
                store.size[r] += 1;
            }
        }
        Ok(store)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    generation: u64,
}

#[derive(Serialize)]
struct Membership<'a> {
    id: &'a str,
    root: &'a str,
}

#[derive(Deserialize)]
struct OwnedMembership {
    id: String,
    root: String,
}
