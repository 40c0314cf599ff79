use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

/// The four generalization scenarios, numbered as in the challenge layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    AcrossTime,
    AcrossSubject,
    AcrossElicitor,
    AcrossVersion,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::AcrossTime,
        Scenario::AcrossSubject,
        Scenario::AcrossElicitor,
        Scenario::AcrossVersion,
    ];

    pub fn number(self) -> u32 {
        self as u32 + 1
    }

    pub fn from_number(k: u32) -> Option<Scenario> {
        Scenario::ALL.get((k as usize).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::AcrossTime => "across_time",
            Scenario::AcrossSubject => "across_subject",
            Scenario::AcrossElicitor => "across_elicitor",
            Scenario::AcrossVersion => "across_version",
        }
    }

    pub fn dir_name(self) -> String {
        format!("scenario_{}", self.number())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    /// Accepts `across_time`, `scenario_1` or `1`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        if let Some(sc) = Scenario::ALL.iter().find(|sc| sc.name() == s) {
            return Ok(*sc);
        }
        let digits = s.strip_prefix("scenario_").unwrap_or(&s);
        digits
            .parse::<u32>()
            .ok()
            .and_then(Scenario::from_number)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub scenario: Scenario,
    pub fold: u32,
    pub split: Split,
    pub subject_id: u32,
    pub video_id: u32,
    pub physiology: PathBuf,
    /// Absent for test files whose ratings are not distributed.
    pub annotations: Option<PathBuf>,
}

impl IndexEntry {
    pub fn key(&self) -> String {
        format!(
            "{}/fold_{}/{}/sub_{}_vid_{}",
            self.scenario.dir_name(),
            self.fold,
            self.split.name(),
            self.subject_id,
            self.video_id
        )
    }

    pub fn file_name(&self) -> String {
        format!("sub_{}_vid_{}.csv", self.subject_id, self.video_id)
    }
}

/// Immutable, sorted listing of a challenge-layout directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    entries: Vec<IndexEntry>,
}

impl DatasetIndex {
    /// Builds an index from entries, sorting them and rejecting duplicate keys.
    pub fn from_entries(root: PathBuf, mut entries: Vec<IndexEntry>) -> Result<Self> {
        entries.sort_by(|a, b| {
            (a.scenario, a.fold, a.split, a.subject_id, a.video_id).cmp(&(
                b.scenario,
                b.fold,
                b.split,
                b.subject_id,
                b.video_id,
            ))
        });
        for w in entries.windows(2) {
            if w[0].key() == w[1].key() {
                return Err(CorpusError::DuplicateEntry(w[0].key()));
            }
        }
        Ok(DatasetIndex { root, entries })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        let set: BTreeSet<Scenario> = self.entries.iter().map(|e| e.scenario).collect();
        set.into_iter().collect()
    }

    pub fn folds(&self, scenario: Scenario) -> Vec<u32> {
        let set: BTreeSet<u32> = self
            .entries
            .iter()
            .filter(|e| e.scenario == scenario)
            .map(|e| e.fold)
            .collect();
        set.into_iter().collect()
    }

    pub fn select(&self, scenario: Scenario, fold: u32, split: Split) -> Vec<&IndexEntry> {
        self.entries
            .iter()
            .filter(|e| e.scenario == scenario && e.fold == fold && e.split == split)
            .collect()
    }

    /// (train, test) entry counts per (scenario, fold).
    pub fn counts(&self) -> BTreeMap<(Scenario, u32), (usize, usize)> {
        let mut out: BTreeMap<(Scenario, u32), (usize, usize)> = BTreeMap::new();
        for e in &self.entries {
            let c = out.entry((e.scenario, e.fold)).or_default();
            match e.split {
                Split::Train => c.0 += 1,
                Split::Test => c.1 += 1,
            }
        }
        out
    }
}

/// Parses `sub_S_vid_V.csv` into (subject, video).
pub fn parse_entry_name(path: &Path) -> Result<(u32, u32)> {
    let bad = || CorpusError::MalformedName(path.to_path_buf());
    let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(bad)?;
    let stem = name.strip_suffix(".csv").ok_or_else(bad)?;
    let parts: Vec<&str> = stem.split('_').collect();
    match parts.as_slice() {
        ["sub", s, "vid", v] => {
            let s = s.parse::<u32>().map_err(|_| bad())?;
            let v = v.parse::<u32>().map_err(|_| bad())?;
            Ok((s, v))
        }
        _ => Err(bad()),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn list_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for item in std::fs::read_dir(path).map_err(|e| io_err(path, e))? {
        let item = item.map_err(|e| io_err(path, e))?;
        let p = item.path();
        let hidden = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_none_or(|n| n.starts_with('.'));
        if !hidden {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn numbered(path: &Path, prefix: &str) -> Option<u32> {
    path.file_name()?
        .to_str()?
        .strip_prefix(prefix)?
        .parse()
        .ok()
}

fn csv_files(dir: &Path) -> Result<BTreeMap<(u32, u32), PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for p in list_dir(dir)? {
        if !p.is_file() {
            continue;
        }
        let key = parse_entry_name(&p)?;
        out.insert(key, p);
    }
    Ok(out)
}

fn scan_split(
    scenario: Scenario,
    fold: u32,
    split: Split,
    dir: &Path,
    entries: &mut Vec<IndexEntry>,
) -> Result<()> {
    let phys = csv_files(&dir.join("physiology"))?;
    let ann = csv_files(&dir.join("annotations"))?;
    for (key, p) in &phys {
        let a = ann.get(key).cloned();
        if a.is_none() && split == Split::Train {
            return Err(CorpusError::OrphanFile(p.clone()));
        }
        entries.push(IndexEntry {
            scenario,
            fold,
            split,
            subject_id: key.0,
            video_id: key.1,
            physiology: p.clone(),
            annotations: a,
        });
    }
    if let Some((_, a)) = ann.iter().find(|(k, _)| !phys.contains_key(k)) {
        return Err(CorpusError::OrphanFile(a.clone()));
    }
    Ok(())
}

fn scan_fold(scenario: Scenario, fold: u32, dir: &Path, entries: &mut Vec<IndexEntry>) -> Result<()> {
    for split in [Split::Train, Split::Test] {
        let d = dir.join(split.name());
        if d.is_dir() {
            scan_split(scenario, fold, split, &d, entries)?;
        }
    }
    Ok(())
}

/// Indexes `scenario_k/fold_j/{train,test}/{physiology,annotations}/`. A
/// scenario directory holding `train`/`test` directly is read as fold 0.
/// Unrecognized directories and hidden files are skipped.
pub fn enumerate_dataset(root: &Path) -> Result<DatasetIndex> {
    let mut entries = Vec::new();
    for sdir in list_dir(root)? {
        if !sdir.is_dir() {
            continue;
        }
        let Some(scenario) = numbered(&sdir, "scenario_").and_then(Scenario::from_number) else {
            continue;
        };
        scan_fold(scenario, 0, &sdir, &mut entries)?;
        for fdir in list_dir(&sdir)? {
            if let (true, Some(fold)) = (fdir.is_dir(), numbered(&fdir, "fold_")) {
                scan_fold(scenario, fold, &fdir, &mut entries)?;
            }
        }
    }
    DatasetIndex::from_entries(root.to_path_buf(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(root: &Path, rel: &str) {
        let p = root.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, "").unwrap();
    }

    #[test]
    fn names() {
        assert_eq!(parse_entry_name(Path::new("a/sub_3_vid_21.csv")).unwrap(), (3, 21));
        for bad in ["sub_3.csv", "sub_x_vid_2.csv", "sub_1_vid_2.txt", "vid_1_sub_2.csv"] {
            assert!(matches!(
                parse_entry_name(Path::new(bad)),
                Err(CorpusError::MalformedName(_))
            ));
        }
        assert_eq!("across_elicitor".parse::<Scenario>().unwrap(), Scenario::AcrossElicitor);
        assert_eq!("scenario_4".parse::<Scenario>().unwrap(), Scenario::AcrossVersion);
        assert_eq!("2".parse::<Scenario>().unwrap(), Scenario::AcrossSubject);
        assert!("5".parse::<Scenario>().is_err());
    }

    #[test]
    fn layout_with_and_without_fold_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        for s in ["train", "test"] {
            touch(r, &format!("scenario_1/{s}/physiology/sub_1_vid_0.csv"));
            touch(r, &format!("scenario_1/{s}/annotations/sub_1_vid_0.csv"));
            touch(r, &format!("scenario_2/fold_3/{s}/physiology/sub_2_vid_4.csv"));
        }
        touch(r, "scenario_2/fold_3/train/annotations/sub_2_vid_4.csv");
        touch(r, "scenario_2/fold_3/train/physiology/.DS_Store");
        touch(r, "notes/readme.txt");
        let idx = enumerate_dataset(r).unwrap();
        assert_eq!(idx.len(), 4);
        assert_eq!(idx.counts()[&(Scenario::AcrossTime, 0)], (1, 1));
        assert_eq!(idx.folds(Scenario::AcrossSubject), vec![3]);
        let test = idx.select(Scenario::AcrossSubject, 3, Split::Test);
        assert!(test[0].annotations.is_none());
    }

    #[test]
    fn orphans_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        touch(r, "scenario_1/train/physiology/sub_1_vid_0.csv");
        assert!(matches!(enumerate_dataset(r), Err(CorpusError::OrphanFile(_))));

        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        touch(r, "scenario_1/train/annotations/sub_1_vid_0.csv");
        assert!(matches!(enumerate_dataset(r), Err(CorpusError::OrphanFile(_))));

        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        touch(r, "scenario_1/train/physiology/subject1.csv");
        assert!(matches!(enumerate_dataset(r), Err(CorpusError::MalformedName(_))));
    }

    #[test]
    fn duplicate_fold_zero_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        for base in ["scenario_1/train", "scenario_1/fold_0/train"] {
            touch(r, &format!("{base}/physiology/sub_1_vid_0.csv"));
            touch(r, &format!("{base}/annotations/sub_1_vid_0.csv"));
        }
        assert!(matches!(enumerate_dataset(r), Err(CorpusError::DuplicateEntry(_))));
    }
}
