//! Evaluation prompt-set generators and the prompt-set file format.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::VpevalQuery;
use crate::layout::Direction;

const DIRECTION_SEEDS: &str = include_str!("../../assets/datasets/direction_seeds.txt");
const COREF_EPISODES: &str = include_str!("../../assets/datasets/coref_episodes.toml");
const COREF_ENTITIES: &str = include_str!("../../assets/datasets/coref_entities.toml");

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("template error: {0}")]
    Template(String),
    #[error("invalid argument: {0}")]
    Arg(String),
    #[error("{0}")]
    Io(String),
}

impl DatasetError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Template(_) => "TEMPLATE_ERROR",
            Self::Arg(_) => "ARG_ERROR",
            Self::Io(_) => "IO_ERROR",
        }
    }
}

/// One record of a prompt-set file (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_entity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vpeval: Option<VpevalQuery>,
}

impl PromptRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            expected_direction: None,
            target_entity: None,
            episode_id: None,
            scenes: Vec::new(),
            vpeval: None,
        }
    }
}

pub fn read_prompt_set(path: &Path) -> Result<Vec<PromptRecord>, DatasetError> {
    crate::eval::read_jsonl(path).map_err(|e| DatasetError::Io(e.to_string()))
}

pub fn write_prompt_set(path: &Path, records: &[PromptRecord]) -> Result<(), DatasetError> {
    let io = |e: std::io::Error| DatasetError::Io(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).expect("prompt record serializes")).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// The bundled synthetic seed captions, one per line.
pub fn default_direction_seeds() -> Vec<String> {
    DIRECTION_SEEDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Output of a generator plus notes about skipped input.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated<T> {
    pub items: Vec<T>,
    pub diagnostics: Vec<String>,
}

/// Rewrites every caption containing "left to right" or "right to left"
/// into one prompt per direction. Only the first phrase is replaced; all
/// other text is kept byte for byte.
pub fn gen_actionbench_direction(seed_captions: &[String]) -> Generated<PromptRecord> {
    let mut items = Vec::with_capacity(seed_captions.len() * 4);
    let mut diagnostics = Vec::new();
    for (i, caption) in seed_captions.iter().enumerate() {
        let found = [Direction::LeftToRight, Direction::RightToLeft]
            .iter()
            .filter_map(|d| caption.find(d.phrase()).map(|at| (at, d.phrase().len())))
            .min();
        let Some((at, len)) = found else {
            diagnostics.push(format!("caption {} has no direction phrase: {caption:?}", i + 1));
            continue;
        };
        for d in Direction::ALL {
            let text = format!("{}{}{}", &caption[..at], d.phrase(), &caption[at + len..]);
            let mut rec = PromptRecord::new(format!("dir-{:03}-{}", i + 1, d.as_str()), text);
            rec.expected_direction = Some(d);
            items.push(rec);
        }
    }
    Generated { items, diagnostics }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EpisodeTemplate {
    pub id: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PronounSet {
    pub subj: String,
    pub obj: String,
    pub poss: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CorefEntity {
    pub name: String,
    pub phrase: String,
    pub pronouns: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CorefEntityTable {
    #[serde(rename = "entity")]
    pub entities: Vec<CorefEntity>,
    pub pronouns: BTreeMap<String, PronounSet>,
}

#[derive(Deserialize)]
struct EpisodeFile {
    episode: Vec<EpisodeTemplate>,
}

pub fn parse_episode_templates(source: &str) -> Result<Vec<EpisodeTemplate>, DatasetError> {
    toml::from_str::<EpisodeFile>(source)
        .map(|f| f.episode)
        .map_err(|e| DatasetError::Template(e.to_string()))
}

pub fn parse_entity_table(source: &str) -> Result<CorefEntityTable, DatasetError> {
    toml::from_str(source).map_err(|e| DatasetError::Template(e.to_string()))
}

pub fn default_episode_templates() -> Vec<EpisodeTemplate> {
    parse_episode_templates(COREF_EPISODES).expect("bundled episode templates")
}

pub fn default_entity_table() -> CorefEntityTable {
    parse_entity_table(COREF_ENTITIES).expect("bundled entity table")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub template_id: String,
    pub target_entity: String,
    pub sentences: Vec<String>,
}

impl Episode {
    pub fn to_record(&self) -> PromptRecord {
        let mut r = PromptRecord::new(self.episode_id.clone(), self.sentences.join(" "));
        r.episode_id = Some(self.episode_id.clone());
        r.target_entity = Some(self.target_entity.clone());
        r.scenes = self.sentences.clone();
        r
    }
}

const FIRST: &str = "[[C]]";

fn capitalize_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Fills one template with one character.
pub fn fill_episode(
    template: &EpisodeTemplate,
    entity: &CorefEntity,
    pronouns: &BTreeMap<String, PronounSet>,
) -> Result<Vec<String>, DatasetError> {
    let firsts = template.sentences.iter().map(|s| s.matches(FIRST).count()).sum::<usize>();
    if firsts != 1 {
        return Err(DatasetError::Template(format!(
            "episode {} must mark exactly one first mention, found {firsts}",
            template.id
        )));
    }
    let set = pronouns.get(&entity.pronouns).ok_or_else(|| {
        DatasetError::Template(format!("entity {} uses unknown pronoun set {:?}", entity.name, entity.pronouns))
    })?;
    let mut out = Vec::with_capacity(template.sentences.len());
    for s in &template.sentences {
        let mut filled = String::with_capacity(s.len() + 16);
        let mut rest = s.as_str();
        while let Some(start) = rest.find("[[") {
            let Some(end) = rest[start..].find("]]").map(|e| start + e + 2) else {
                break;
            };
            filled.push_str(&rest[..start]);
            let word = match &rest[start..end] {
                "[[C]]" => entity.phrase.as_str(),
                "[[C:subj]]" => set.subj.as_str(),
                "[[C:obj]]" => set.obj.as_str(),
                "[[C:poss]]" => set.poss.as_str(),
                other => {
                    return Err(DatasetError::Template(format!(
                        "episode {}: unknown marker {other}",
                        template.id
                    )))
                }
            };
            if filled.trim().is_empty() {
                filled.push_str(&capitalize_first(word));
            } else {
                filled.push_str(word);
            }
            rest = &rest[end..];
        }
        filled.push_str(rest);
        out.push(filled);
    }
    Ok(out)
}

/// Cartesian product of templates and entities.
pub fn gen_coref_sv(templates: &[EpisodeTemplate], table: &CorefEntityTable) -> Result<Vec<Episode>, DatasetError> {
    let mut out = Vec::with_capacity(templates.len() * table.entities.len());
    for t in templates {
        for (j, e) in table.entities.iter().enumerate() {
            out.push(Episode {
                episode_id: format!("{}-e{:02}", t.id, j + 1),
                template_id: t.id.clone(),
                target_entity: e.name.clone(),
                sentences: fill_episode(t, e, &table.pronouns)?,
            });
        }
    }
    Ok(out)
}

/// `"<prompt>, step n/N"` for n in 1..=N.
pub fn hirest_scene_prompts(task_prompt: &str, n_scenes: i64) -> Result<Vec<String>, DatasetError> {
    if n_scenes < 1 {
        return Err(DatasetError::Arg(format!("n_scenes must be at least 1, got {n_scenes}")));
    }
    Ok((1..=n_scenes).map(|n| format!("{task_prompt}, step {n}/{n_scenes}")).collect())
}
