//! Fold layouts, model groupings and the video quadrant meta-analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationTrack, DatasetIndex, IndexEntry, Scenario, Split, Target};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("no annotation tracks given")]
    EmptyInput,
    #[error("incomplete index: {0}")]
    IncompleteIndex(String),
    #[error("no matching model: {0}")]
    NoMatchingModel(String),
    #[error("invalid video groups: {0}")]
    InvalidGroups(String),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

/// Scale midpoint separating low from high ratings.
pub const MIDPOINT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadrant {
    pub high_valence: bool,
    pub high_arousal: bool,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::new(true, true),
        Quadrant::new(false, true),
        Quadrant::new(false, false),
        Quadrant::new(true, false),
    ];

    pub const fn new(high_valence: bool, high_arousal: bool) -> Self {
        Quadrant {
            high_valence,
            high_arousal,
        }
    }

    fn sign(high: bool) -> f64 {
        if high {
            1.0
        } else {
            -1.0
        }
    }

    /// Signed distance of a rating pair into this quadrant.
    pub fn projection(self, valence: f64, arousal: f64) -> f64 {
        Self::sign(self.high_valence) * (valence - MIDPOINT)
            + Self::sign(self.high_arousal) * (arousal - MIDPOINT)
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}V,{}A)",
            if self.high_valence { "H" } else { "L" },
            if self.high_arousal { "H" } else { "L" }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoEvidence {
    pub mean_valence: f64,
    pub mean_arousal: f64,
    pub median_valence: f64,
    pub median_arousal: f64,
}

impl VideoEvidence {
    fn distance(&self) -> f64 {
        (self.mean_valence - MIDPOINT).hypot(self.mean_arousal - MIDPOINT)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoQuadrantMap {
    pub quadrants: BTreeMap<u32, Quadrant>,
    pub evidence: BTreeMap<u32, VideoEvidence>,
}

impl VideoQuadrantMap {
    pub fn quadrant(&self, video_id: u32) -> Option<Quadrant> {
        self.quadrants.get(&video_id).copied()
    }
}

/// Mean of values summed in sorted order, so any input order gives the same
/// bits.
fn sorted_stats(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    (mean, median)
}

/// Per-video rating evidence pooled over all tracks, with quadrant signs from
/// the mean. If `groups` is given (four disjoint video groups), the groups are
/// mapped one-to-one onto the quadrants by the assignment that maximizes the
/// summed signed projection of each group's most extreme video; ties between
/// assignments go to the first in enumeration order.
pub fn quadrant_meta_analysis(
    tracks: &[(u32, &AnnotationTrack)],
    groups: Option<&[Vec<u32>]>,
) -> Result<VideoQuadrantMap> {
    if tracks.is_empty() {
        return Err(ScenarioError::EmptyInput);
    }
    let mut pooled: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (video, track) in tracks {
        let e = pooled.entry(*video).or_default();
        e.0.extend_from_slice(&track.valence);
        e.1.extend_from_slice(&track.arousal);
    }
    let mut evidence = BTreeMap::new();
    for (video, (v, a)) in pooled {
        if v.is_empty() {
            return Err(ScenarioError::EmptyInput);
        }
        let (mean_valence, median_valence) = sorted_stats(v);
        let (mean_arousal, median_arousal) = sorted_stats(a);
        evidence.insert(
            video,
            VideoEvidence {
                mean_valence,
                mean_arousal,
                median_valence,
                median_arousal,
            },
        );
    }
    let mut quadrants: BTreeMap<u32, Quadrant> = evidence
        .iter()
        .map(|(&v, e)| {
            (
                v,
                Quadrant::new(e.mean_valence >= MIDPOINT, e.mean_arousal >= MIDPOINT),
            )
        })
        .collect();

    if let Some(groups) = groups {
        let assignment = assign_groups(&evidence, groups)?;
        for (group, q) in groups.iter().zip(assignment) {
            for v in group {
                if evidence.contains_key(v) {
                    quadrants.insert(*v, q);
                }
            }
        }
    }
    Ok(VideoQuadrantMap {
        quadrants,
        evidence,
    })
}

/// All 24 orderings of the four quadrants, lexicographic by index.
pub fn quadrant_permutations() -> Vec<[Quadrant; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let idx = [a, b, c, d];
                    let distinct: BTreeSet<usize> = idx.iter().copied().collect();
                    if distinct.len() == 4 {
                        out.push(idx.map(|i| Quadrant::ALL[i]));
                    }
                }
            }
        }
    }
    out
}

/// The most extreme video of a group: largest distance from the midpoint,
/// lower id on ties.
fn most_extreme(evidence: &BTreeMap<u32, VideoEvidence>, group: &[u32]) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    let mut ids: Vec<u32> = group.iter().copied().filter(|v| evidence.contains_key(v)).collect();
    ids.sort_unstable();
    for v in ids {
        let d = evidence[&v].distance();
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((v, d));
        }
    }
    best.map(|b| b.0)
}

fn assign_groups(evidence: &BTreeMap<u32, VideoEvidence>, groups: &[Vec<u32>]) -> Result<[Quadrant; 4]> {
    if groups.len() != 4 {
        return Err(ScenarioError::InvalidGroups(format!(
            "expected 4 groups, got {}",
            groups.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for g in groups {
        for v in g {
            if !seen.insert(*v) {
                return Err(ScenarioError::InvalidGroups(format!("video {v} in two groups")));
            }
        }
    }
    let mut anchors = Vec::with_capacity(4);
    for g in groups {
        let v = most_extreme(evidence, g).ok_or_else(|| {
            ScenarioError::InvalidGroups(format!("no ratings for any video of group {g:?}"))
        })?;
        anchors.push(evidence[&v]);
    }
    let mut best: Option<([Quadrant; 4], f64)> = None;
    for perm in quadrant_permutations() {
        let score: f64 = perm
            .iter()
            .zip(&anchors)
            .map(|(q, e)| q.projection(e.mean_valence, e.mean_arousal))
            .sum();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((perm, score));
        }
    }
    Ok(best.expect("24 candidates").0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelGrouping {
    PerFile,
    PerVideo,
    PerQuadrantPairPerTarget,
    PerVideoGroup,
}

/// Training quadrants for each target in an across-elicitor fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRules {
    pub test_quadrant: Quadrant,
    pub valence: [Quadrant; 2],
    pub arousal: [Quadrant; 2],
}

impl TargetRules {
    /// Valence trains on both valence halves at the opposite arousal level;
    /// arousal trains on both arousal halves at the opposite valence level.
    pub fn for_test_quadrant(q: Quadrant) -> Self {
        TargetRules {
            test_quadrant: q,
            valence: [
                Quadrant::new(false, !q.high_arousal),
                Quadrant::new(true, !q.high_arousal),
            ],
            arousal: [
                Quadrant::new(!q.high_valence, false),
                Quadrant::new(!q.high_valence, true),
            ],
        }
    }

    pub fn quadrants(&self, target: Target) -> [Quadrant; 2] {
        match target {
            Target::Valence => self.valence,
            Target::Arousal => self.arousal,
        }
    }
}

/// A set of training files fitted as one model. `target` restricts the group
/// to one rating dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGroup {
    pub key: String,
    pub target: Option<Target>,
    pub members: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub scenario: Scenario,
    pub fold_id: u32,
    pub train_entries: Vec<IndexEntry>,
    pub test_entries: Vec<IndexEntry>,
    pub model_grouping: ModelGrouping,
    pub groups: Vec<ModelGroup>,
    pub target_rules: Option<TargetRules>,
}

impl FoldSpec {
    /// Groups that train a model for `target`.
    pub fn groups_for(&self, target: Target) -> impl Iterator<Item = &ModelGroup> {
        self.groups.iter().filter(move |g| g.target.is_none_or(|t| t == target))
    }
}

fn file_key(e: &IndexEntry) -> String {
    format!("sub_{}_vid_{}", e.subject_id, e.video_id)
}

fn video_key(v: u32) -> String {
    format!("vid_{v}")
}

/// Builds every fold of `scenario` present in `index`.
pub fn build_folds(
    scenario: Scenario,
    index: &DatasetIndex,
    quadrants: Option<&VideoQuadrantMap>,
) -> Result<Vec<FoldSpec>> {
    let folds = index.folds(scenario);
    if folds.is_empty() {
        return Err(ScenarioError::IncompleteIndex(format!("no folds for {scenario}")));
    }
    let mut out = Vec::with_capacity(folds.len());
    for fold_id in folds {
        let train: Vec<IndexEntry> = index.select(scenario, fold_id, Split::Train).into_iter().cloned().collect();
        let test: Vec<IndexEntry> = index.select(scenario, fold_id, Split::Test).into_iter().cloned().collect();
        if train.is_empty() || test.is_empty() {
            return Err(ScenarioError::IncompleteIndex(format!(
                "{scenario} fold {fold_id}: {} train / {} test entries",
                train.len(),
                test.len()
            )));
        }
        let (grouping, groups, rules) = match scenario {
            Scenario::AcrossTime => (
                ModelGrouping::PerFile,
                train
                    .iter()
                    .map(|e| ModelGroup {
                        key: file_key(e),
                        target: None,
                        members: vec![e.clone()],
                    })
                    .collect(),
                None,
            ),
            Scenario::AcrossSubject => (ModelGrouping::PerVideo, per_video(&train), None),
            Scenario::AcrossVersion => (ModelGrouping::PerVideoGroup, per_video(&train), None),
            Scenario::AcrossElicitor => {
                let map = quadrants.ok_or_else(|| {
                    ScenarioError::IncompleteIndex("across_elicitor needs a quadrant map".into())
                })?;
                let (groups, rules) = elicitor_groups(fold_id, &train, &test, map)?;
                (ModelGrouping::PerQuadrantPairPerTarget, groups, Some(rules))
            }
        };
        out.push(FoldSpec {
            scenario,
            fold_id,
            train_entries: train,
            test_entries: test,
            model_grouping: grouping,
            groups,
            target_rules: rules,
        });
    }
    Ok(out)
}

fn per_video(train: &[IndexEntry]) -> Vec<ModelGroup> {
    let mut by_video: BTreeMap<u32, Vec<IndexEntry>> = BTreeMap::new();
    for e in train {
        by_video.entry(e.video_id).or_default().push(e.clone());
    }
    by_video
        .into_iter()
        .map(|(v, members)| ModelGroup {
            key: video_key(v),
            target: None,
            members,
        })
        .collect()
}

fn lookup(map: &VideoQuadrantMap, video: u32) -> Result<Quadrant> {
    map.quadrant(video)
        .ok_or_else(|| ScenarioError::IncompleteIndex(format!("video {video} has no quadrant")))
}

fn elicitor_groups(
    fold_id: u32,
    train: &[IndexEntry],
    test: &[IndexEntry],
    map: &VideoQuadrantMap,
) -> Result<(Vec<ModelGroup>, TargetRules)> {
    let test_quadrants: BTreeSet<Quadrant> =
        test.iter().map(|e| lookup(map, e.video_id)).collect::<Result<_>>()?;
    if test_quadrants.len() != 1 {
        return Err(ScenarioError::IncompleteIndex(format!(
            "across_elicitor fold {fold_id}: test videos span {} quadrants",
            test_quadrants.len()
        )));
    }
    let rules = TargetRules::for_test_quadrant(*test_quadrants.iter().next().unwrap());
    let mut groups = Vec::new();
    for target in Target::BOTH {
        let allowed = rules.quadrants(target);
        let mut members = Vec::new();
        for e in train {
            if allowed.contains(&lookup(map, e.video_id)?) {
                members.push(e.clone());
            }
        }
        if members.is_empty() {
            return Err(ScenarioError::NoMatchingModel(format!(
                "across_elicitor fold {fold_id}: no training files in {} and {} for {target}",
                allowed[0], allowed[1]
            )));
        }
        groups.push(ModelGroup {
            key: format!("{target}_{}_{}", allowed[0], allowed[1]),
            target: Some(target),
            members,
        });
    }
    Ok((groups, rules))
}

/// Models (by group key) whose predictions make up `target` for one test
/// file, with their training members.
pub fn training_subsets_for_target<'a>(
    fold: &'a FoldSpec,
    target: Target,
    test_entry: &IndexEntry,
) -> Result<Vec<&'a ModelGroup>> {
    if !fold.test_entries.iter().any(|e| e == test_entry) {
        return Err(ScenarioError::NoMatchingModel(format!(
            "{} is not a test entry of {} fold {}",
            test_entry.key(),
            fold.scenario,
            fold.fold_id
        )));
    }
    let wanted: Option<String> = match fold.scenario {
        Scenario::AcrossTime => Some(file_key(test_entry)),
        Scenario::AcrossSubject => Some(video_key(test_entry.video_id)),
        Scenario::AcrossElicitor | Scenario::AcrossVersion => None,
    };
    let picked: Vec<&ModelGroup> = fold
        .groups_for(target)
        .filter(|g| wanted.as_ref().is_none_or(|k| &g.key == k))
        .collect();
    if picked.is_empty() {
        return Err(ScenarioError::NoMatchingModel(format!(
            "{} in {} fold {} for {target}",
            test_entry.key(),
            fold.scenario,
            fold.fold_id
        )));
    }
    Ok(picked)
}

/// Video groups implied by the across-elicitor folds: each fold's test videos.
pub fn elicitor_video_groups(index: &DatasetIndex) -> Vec<Vec<u32>> {
    index
        .folds(Scenario::AcrossElicitor)
        .into_iter()
        .map(|f| {
            let set: BTreeSet<u32> = index
                .select(Scenario::AcrossElicitor, f, Split::Test)
                .iter()
                .map(|e| e.video_id)
                .collect();
            set.into_iter().collect()
        })
        .collect()
}
