use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::plan::{ConsistencyGroups, SceneSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupOptions {
    /// Merge names that differ only in case or surrounding whitespace, keyed
    /// by the first spelling seen.
    #[serde(default)]
    pub normalize_names: bool,
    /// Also group scenes by identical background strings.
    #[serde(default)]
    pub include_backgrounds: bool,
}

/// Exact, case-sensitive name matching over entity names.
pub fn build_consistency_groups(scenes: &[SceneSpec]) -> ConsistencyGroups {
    build_consistency_groups_with(scenes, GroupOptions::default())
}

pub fn build_consistency_groups_with(scenes: &[SceneSpec], opts: GroupOptions) -> ConsistencyGroups {
    let mut groups: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    let mut canonical: BTreeMap<String, String> = BTreeMap::new();
    let mut key = |name: &str| -> String {
        if !opts.normalize_names {
            return name.to_string();
        }
        let folded = name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        canonical.entry(folded).or_insert_with(|| name.trim().to_string()).clone()
    };
    for scene in scenes {
        for e in &scene.entities {
            groups.entry(key(&e.name)).or_default().insert(scene.index);
        }
        if opts.include_backgrounds && !scene.background.is_empty() {
            groups.entry(key(&scene.background)).or_default().insert(scene.index);
        }
    }
    ConsistencyGroups(
        groups
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect(),
    )
}
