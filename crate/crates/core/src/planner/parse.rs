use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::layout::blend;
use crate::plan::{quantize_box, BoundingBox, EntityTrack, Keyframe, SceneSpec, GRID_UNIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Repaired,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<u32>,
    pub message: String,
}

impl ParseDiagnostic {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            frame: None,
            message: message.into(),
        }
    }

    fn at(code: &str, frame: u32, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            frame: Some(frame),
            message: message.into(),
        }
    }
}

/// Result of parsing one completion. `fragment` is `None` exactly when the
/// status is `Invalid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome<T> {
    pub status: ParseStatus,
    pub fragment: Option<T>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl<T> ParseOutcome<T> {
    fn invalid(diagnostics: Vec<ParseDiagnostic>) -> Self {
        Self {
            status: ParseStatus::Invalid,
            fragment: None,
            diagnostics,
        }
    }

    fn accepted(fragment: T, repaired: bool, diagnostics: Vec<ParseDiagnostic>) -> Self {
        Self {
            status: if repaired {
                ParseStatus::Repaired
            } else {
                ParseStatus::Ok
            },
            fragment: Some(fragment),
            diagnostics,
        }
    }

    pub fn is_usable(&self) -> bool {
        self.status != ParseStatus::Invalid
    }

    /// One line summarizing the diagnostics, used in repair re-prompts.
    pub fn diagnostic_summary(&self) -> String {
        self.diagnostics
            .iter()
            .map(|d| match d.frame {
                Some(f) => format!("{} (frame {f}): {}", d.code, d.message),
                None => format!("{}: {}", d.code, d.message),
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Scene text recovered from a step-1 reply, before layouts exist.
pub type Step1Scene = SceneSpec;

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z]*[ \t]*\r?\n(.*?)```").unwrap())
}

enum JsonSource {
    Fenced(Value),
    Bare(Value),
}

/// Finds the structured block: a fenced block first, then the outermost
/// braces of the raw text.
fn extract_json(raw: &str) -> Option<JsonSource> {
    for cap in fence_re().captures_iter(raw) {
        if let Ok(v) = serde_json::from_str::<Value>(cap[1].trim()) {
            return Some(JsonSource::Fenced(v));
        }
    }
    for (open, close) in [('{', '}'), ('[', ']')] {
        if let (Some(a), Some(b)) = (raw.find(open), raw.rfind(close)) {
            if a < b {
                if let Ok(v) = serde_json::from_str::<Value>(&raw[a..=b]) {
                    return Some(JsonSource::Bare(v));
                }
            }
        }
    }
    None
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Trims and collapses whitespace, flagging the change.
fn clean(s: &str, changed: &mut bool) -> String {
    let c = collapse_ws(s);
    if c != s {
        *changed = true;
    }
    c
}

fn assign_ids(entities: &mut [EntityTrack]) {
    let mut seen: HashMap<String, u32> = HashMap::new();
    for e in entities {
        let n = seen.entry(e.name.clone()).or_insert(0);
        *n += 1;
        e.id = if *n == 1 {
            e.name.clone()
        } else {
            format!("{}#{}", e.name, n)
        };
    }
}

/// Extracts per-scene description, entities and background from a step-1
/// completion.
pub fn parse_step1_response(raw: &str) -> ParseOutcome<Vec<Step1Scene>> {
    let mut diags = Vec::new();
    if raw.trim().is_empty() {
        return ParseOutcome::invalid(vec![ParseDiagnostic::new("EMPTY_RESPONSE", "response is empty")]);
    }
    match extract_json(raw) {
        Some(JsonSource::Fenced(v)) => step1_from_json(&v, false, diags),
        Some(JsonSource::Bare(v)) => {
            diags.push(ParseDiagnostic::new("UNFENCED", "structured block was not fenced"));
            step1_from_json(&v, true, diags)
        }
        None => {
            let scenes = step1_from_lines(raw, &mut diags);
            if scenes.is_empty() {
                diags.push(ParseDiagnostic::new("NO_SCENES", "no recognizable scene list"));
                ParseOutcome::invalid(diags)
            } else {
                diags.push(ParseDiagnostic::new(
                    "LINE_FORMAT",
                    "scene list recovered from free text",
                ));
                ParseOutcome::accepted(scenes, true, diags)
            }
        }
    }
}

fn step1_from_json(
    v: &Value,
    mut repaired: bool,
    mut diags: Vec<ParseDiagnostic>,
) -> ParseOutcome<Vec<Step1Scene>> {
    let list = match v {
        Value::Object(o) => o.get("scenes").and_then(Value::as_array),
        Value::Array(a) => {
            repaired = true;
            diags.push(ParseDiagnostic::new("BARE_LIST", "scene list without \"scenes\" key"));
            Some(a)
        }
        _ => None,
    };
    let Some(list) = list else {
        diags.push(ParseDiagnostic::new("NO_SCENES", "structured block has no \"scenes\" list"));
        return ParseOutcome::invalid(diags);
    };

    let mut scenes = Vec::new();
    for (i, item) in list.iter().enumerate() {
        let pos = i + 1;
        let Some(obj) = item.as_object() else {
            diags.push(ParseDiagnostic::new("BAD_SCENE", format!("scene {pos} is not an object")));
            repaired = true;
            continue;
        };
        let text = |key: &str| obj.get(key).and_then(Value::as_str);
        let Some(description) = text("description").filter(|d| !d.trim().is_empty()) else {
            diags.push(ParseDiagnostic::new(
                "BAD_SCENE",
                format!("scene {pos} has no description; dropped"),
            ));
            repaired = true;
            continue;
        };
        let background = match text("background") {
            Some(b) => clean(b, &mut repaired),
            None => {
                diags.push(ParseDiagnostic::new(
                    "MISSING_BACKGROUND",
                    format!("scene {pos} has no background"),
                ));
                repaired = true;
                String::new()
            }
        };
        let mut entities = Vec::new();
        for e in obj.get("entities").and_then(Value::as_array).into_iter().flatten() {
            match e {
                Value::String(name) if !name.trim().is_empty() => {
                    repaired = true;
                    entities.push(EntityTrack::new("", collapse_ws(name), ""));
                }
                Value::Object(eo) => {
                    let name = eo.get("name").and_then(Value::as_str).unwrap_or("");
                    if name.trim().is_empty() {
                        diags.push(ParseDiagnostic::new(
                            "BAD_ENTITY",
                            format!("scene {pos} has an entity without a name"),
                        ));
                        repaired = true;
                        continue;
                    }
                    let desc = eo.get("description").and_then(Value::as_str).unwrap_or("");
                    entities.push(EntityTrack::new(
                        "",
                        clean(name, &mut repaired),
                        clean(desc, &mut repaired),
                    ));
                }
                _ => {
                    diags.push(ParseDiagnostic::new(
                        "BAD_ENTITY",
                        format!("scene {pos} has an unreadable entity"),
                    ));
                    repaired = true;
                }
            }
        }
        assign_ids(&mut entities);
        let mut scene = SceneSpec::new(scenes.len() as u32 + 1, clean(description, &mut repaired), background);
        scene.entities = entities;
        scenes.push(scene);
    }
    if scenes.is_empty() {
        diags.push(ParseDiagnostic::new("NO_SCENES", "scene list is empty"));
        return ParseOutcome::invalid(diags);
    }
    ParseOutcome::accepted(scenes, repaired, diags)
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^[\s*#>-]*(?:scene\s*(\d+)\s*[:.)\-]|(\d+)\s*[.):])\s*(.*)$").unwrap()
    })
}

fn field_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^[\s*\-]*(description|entities|background)\s*:\s*(.*)$").unwrap())
}

/// Splits on `;` or `,` outside parentheses.
fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ';' | ',' if depth <= 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur);
    out.into_iter()
        .map(|p| collapse_ws(&p))
        .filter(|p| !p.is_empty())
        .collect()
}

/// `name (attributes)` or bare `name`.
fn parse_entity_item(item: &str) -> EntityTrack {
    match (item.find('('), item.rfind(')')) {
        (Some(a), Some(b)) if a < b => {
            EntityTrack::new("", collapse_ws(&item[..a]), collapse_ws(&item[a + 1..b]))
        }
        _ => EntityTrack::new("", collapse_ws(item), ""),
    }
}

fn step1_from_lines(raw: &str, diags: &mut Vec<ParseDiagnostic>) -> Vec<Step1Scene> {
    let mut scenes: Vec<SceneSpec> = Vec::new();
    let mut numbers = Vec::new();
    for line in raw.lines() {
        if let Some(c) = header_re().captures(line) {
            let n: Option<u32> = c.get(1).or(c.get(2)).and_then(|m| m.as_str().parse().ok());
            numbers.push(n);
            let idx = scenes.len() as u32 + 1;
            scenes.push(SceneSpec::new(idx, collapse_ws(&c[3]), ""));
            continue;
        }
        let Some(current) = scenes.last_mut() else {
            continue;
        };
        if let Some(c) = field_re().captures(line) {
            let value = c[2].to_string();
            match c[1].to_ascii_lowercase().as_str() {
                "description" => current.description = collapse_ws(&value),
                "background" => current.background = collapse_ws(&value),
                _ => {
                    current.entities.extend(split_top_level(&value).iter().map(|s| parse_entity_item(s)));
                }
            }
        }
    }
    let before = scenes.len();
    scenes.retain(|s| !s.description.is_empty());
    if scenes.len() != before {
        diags.push(ParseDiagnostic::new(
            "BAD_SCENE",
            format!("{} scene header(s) without a description dropped", before - scenes.len()),
        ));
    }
    let expected: Vec<Option<u32>> = (1..=numbers.len() as u32).map(Some).collect();
    if numbers != expected {
        diags.push(ParseDiagnostic::new("RENUMBERED", "scene numbering normalized to 1..N"));
    }
    for (i, s) in scenes.iter_mut().enumerate() {
        s.index = i as u32 + 1;
        assign_ids(&mut s.entities);
        if s.background.is_empty() {
            diags.push(ParseDiagnostic::new(
                "MISSING_BACKGROUND",
                format!("scene {} has no background", s.index),
            ));
        }
    }
    scenes
}

struct RawFrame {
    frame: i64,
    boxes: Vec<(String, Vec<f64>)>,
}

fn frame_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^[\s*\-]*frame\s*(\d+)\s*[:.\-]\s*(.*)$").unwrap())
}

fn box_item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([^;\[\]]*?)\s*[:=]?\s*\[([^\]]*)\]").unwrap())
}

fn frames_from_json(v: &Value, diags: &mut Vec<ParseDiagnostic>) -> Option<Vec<RawFrame>> {
    let list = match v {
        Value::Object(o) => o.get("frames")?.as_array()?,
        Value::Array(a) => a,
        _ => return None,
    };
    let mut frames = Vec::new();
    for (i, f) in list.iter().enumerate() {
        let frame = f.get("frame").and_then(Value::as_i64).unwrap_or(i as i64 + 1);
        let mut boxes = Vec::new();
        for b in f.get("boxes").and_then(Value::as_array).into_iter().flatten() {
            let name = b.get("name").and_then(Value::as_str).unwrap_or("");
            let coords = b
                .get("box")
                .and_then(Value::as_array)
                .map(|a| a.iter().map(|c| c.as_f64().unwrap_or(f64::NAN)).collect())
                .unwrap_or_default();
            boxes.push((name.to_string(), coords));
        }
        if f.get("boxes").is_none() {
            diags.push(ParseDiagnostic::new("BAD_FRAME", format!("frame entry {} has no boxes key", i + 1)));
        }
        frames.push(RawFrame { frame, boxes });
    }
    Some(frames)
}

fn frames_from_lines(raw: &str) -> Vec<RawFrame> {
    let mut frames = Vec::new();
    for line in raw.lines() {
        let Some(c) = frame_line_re().captures(line) else {
            continue;
        };
        let frame = c[1].parse().unwrap_or(-1);
        let boxes = box_item_re()
            .captures_iter(&c[2])
            .map(|b| {
                let name = b[1].trim().trim_matches(|ch: char| ch == ',' || ch == ':').trim();
                let coords = b[2]
                    .split(',')
                    .map(|n| n.trim().parse::<f64>().unwrap_or(f64::NAN))
                    .collect();
                (name.to_string(), coords)
            })
            .collect();
        frames.push(RawFrame { frame, boxes });
    }
    frames
}

enum NameMatch {
    Exact(usize),
    Loose(usize),
    Unknown,
}

fn match_entity(scene: &SceneSpec, name: &str) -> NameMatch {
    if let Some(i) = scene.entities.iter().position(|e| e.id == name || e.name == name) {
        return NameMatch::Exact(i);
    }
    let norm = collapse_ws(name).to_lowercase();
    match scene
        .entities
        .iter()
        .position(|e| e.id.to_lowercase() == norm || e.name.to_lowercase() == norm)
    {
        Some(i) => NameMatch::Loose(i),
        None => NameMatch::Unknown,
    }
}

/// Fills the keyframe boxes of every entity of `scene` from a step-2
/// completion. Frames are numbered from 1 in the reply and stored from 0.
pub fn parse_step2_response(raw: &str, scene: &SceneSpec) -> ParseOutcome<SceneSpec> {
    let k = scene.num_keyframes as i64;
    let mut diags = Vec::new();
    let mut repaired = false;

    let frames = match extract_json(raw) {
        Some(JsonSource::Fenced(v)) => frames_from_json(&v, &mut diags),
        Some(JsonSource::Bare(v)) => {
            repaired = true;
            diags.push(ParseDiagnostic::new("UNFENCED", "structured block was not fenced"));
            frames_from_json(&v, &mut diags)
        }
        None => None,
    };
    let frames = match frames {
        Some(f) => f,
        None => {
            let f = frames_from_lines(raw);
            if !f.is_empty() {
                repaired = true;
                diags.push(ParseDiagnostic::new("LINE_FORMAT", "frames recovered from free text"));
            }
            f
        }
    };

    // slot (0-based) -> boxes, first occurrence wins
    let mut slots: BTreeMap<u32, Vec<(String, Vec<f64>)>> = BTreeMap::new();
    for f in frames {
        if !(1..=k).contains(&f.frame) {
            repaired = true;
            diags.push(ParseDiagnostic::new(
                "EXTRA_FRAME",
                format!("frame {} outside 1..{k} ignored", f.frame),
            ));
            continue;
        }
        let slot = (f.frame - 1) as u32;
        if slots.contains_key(&slot) {
            repaired = true;
            diags.push(ParseDiagnostic::at("DUPLICATE_FRAME", slot + 1, "repeated frame ignored"));
            continue;
        }
        slots.insert(slot, f.boxes);
    }

    let mut invalid = false;
    let missing: Vec<u32> = (0..k as u32).filter(|s| !slots.contains_key(s)).collect();
    if !missing.is_empty() {
        invalid = true;
        let list = missing.iter().map(|s| (s + 1).to_string()).collect::<Vec<_>>().join(", ");
        diags.push(ParseDiagnostic::new(
            "MISSING_KEYFRAMES",
            format!("{} of {k} frames parsed; missing frame(s) {list}", slots.len()),
        ));
    }

    let mut per_entity: Vec<BTreeMap<u32, BoundingBox>> = vec![BTreeMap::new(); scene.entities.len()];
    let mut snapped = 0usize;
    for (&slot, boxes) in &slots {
        let frame_no = slot + 1;
        let mut placed = 0usize;
        for (name, coords) in boxes {
            let idx = match match_entity(scene, name) {
                NameMatch::Exact(i) => i,
                NameMatch::Loose(i) => {
                    repaired = true;
                    diags.push(ParseDiagnostic::at(
                        "NAME_NORMALIZED",
                        frame_no,
                        format!("{name:?} matched to entity {:?}", scene.entities[i].id),
                    ));
                    i
                }
                NameMatch::Unknown => {
                    repaired = true;
                    diags.push(ParseDiagnostic::at(
                        "UNKNOWN_ENTITY",
                        frame_no,
                        format!("box for unknown entity {name:?} ignored"),
                    ));
                    continue;
                }
            };
            let raw_box = match coords.as_slice() {
                [a, b, c, d] => BoundingBox::new(*a, *b, *c, *d),
                _ => {
                    repaired = true;
                    diags.push(ParseDiagnostic::at(
                        "BAD_BOX",
                        frame_no,
                        format!("box for {name:?} does not have 4 coordinates"),
                    ));
                    continue;
                }
            };
            let Ok(q) = quantize_box(&raw_box, GRID_UNIT) else {
                repaired = true;
                diags.push(ParseDiagnostic::at(
                    "BAD_BOX",
                    frame_no,
                    format!("box for {name:?} has non-numeric coordinates"),
                ));
                continue;
            };
            if q != raw_box {
                snapped += 1;
            }
            if per_entity[idx].contains_key(&slot) {
                repaired = true;
                diags.push(ParseDiagnostic::at(
                    "DUPLICATE_BOX",
                    frame_no,
                    format!("second box for {:?} ignored", scene.entities[idx].id),
                ));
                continue;
            }
            per_entity[idx].insert(slot, q);
            placed += 1;
        }
        if placed == 0 {
            invalid = true;
            diags.push(ParseDiagnostic::at("EMPTY_FRAME", frame_no, "frame has no usable boxes"));
        }
    }
    if snapped > 0 {
        repaired = true;
        diags.push(ParseDiagnostic::new(
            "QUANTIZED",
            format!("{snapped} box(es) snapped to the {GRID_UNIT} grid"),
        ));
    }
    if invalid {
        return ParseOutcome::invalid(diags);
    }

    let mut out = scene.clone();
    let mut keep = Vec::with_capacity(out.entities.len());
    for (entity, boxes) in out.entities.iter_mut().zip(&per_entity) {
        if boxes.is_empty() {
            repaired = true;
            diags.push(ParseDiagnostic::new(
                "ENTITY_ABSENT",
                format!("entity {:?} has no boxes and was dropped", entity.id),
            ));
            keep.push(false);
            continue;
        }
        if boxes.len() < k as usize {
            repaired = true;
            diags.push(ParseDiagnostic::new(
                "FILLED_KEYFRAMES",
                format!(
                    "entity {:?} present in {} of {k} frames; gaps filled",
                    entity.id,
                    boxes.len()
                ),
            ));
        }
        entity.keyframes = fill_track(boxes, k as u32);
        keep.push(true);
    }
    let mut flags = keep.into_iter();
    out.entities.retain(|_| flags.next().unwrap_or(false));
    ParseOutcome::accepted(out, repaired, diags)
}

/// Completes a partial keyframe map over `0..k`: linear blends between known
/// slots (snapped to the grid), constant extension beyond them.
fn fill_track(known: &BTreeMap<u32, BoundingBox>, k: u32) -> Vec<Keyframe> {
    (0..k)
        .map(|slot| {
            if let Some(b) = known.get(&slot) {
                return Keyframe::new(slot, *b);
            }
            let before = known.range(..slot).next_back();
            let after = known.range(slot..).next();
            let b = match (before, after) {
                (Some((&a, ba)), Some((&z, bz))) => {
                    let w = (slot - a) as f64 / (z - a) as f64;
                    quantize_box(&blend(ba, bz, w), GRID_UNIT).unwrap_or(*ba)
                }
                (Some((_, b)), None) | (None, Some((_, b))) => *b,
                (None, None) => unreachable!("fill_track called with no known boxes"),
            };
            Keyframe::new(slot, b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::on_grid;

    const FOUR_SCENES: &str = r#"Sure! Here is the plan.
```json
{"scenes": [
 {"description": "a chef preheats the oven", "entities": [{"name": "chef", "description": "white apron"}, {"name": "oven", "description": "steel"}], "background": "a kitchen"},
 {"description": "the chef mixes the batter", "entities": [{"name": "chef", "description": "white apron"}], "background": "a kitchen"},
 {"description": "the chef fills the moulds", "entities": [{"name": "chef", "description": "white apron"}], "background": "a kitchen"},
 {"description": "the chef serves the cakes", "entities": [{"name": "chef", "description": "white apron"}], "background": "a kitchen"}
]}
```
Enjoy!"#;

    #[test]
    fn step1_fenced_is_ok() {
        let out = parse_step1_response(FOUR_SCENES);
        assert_eq!(out.status, ParseStatus::Ok, "{:?}", out.diagnostics);
        let scenes = out.fragment.unwrap();
        assert_eq!(scenes.len(), 4);
        assert_eq!(scenes[0].entities[1].id, "oven");
        assert_eq!(scenes[3].index, 4);
        assert!(scenes.iter().all(|s| s.entities.iter().all(|e| e.keyframes.is_empty())));
    }

    #[test]
    fn step1_empty_and_garbage_are_invalid() {
        for raw in ["", "   \n", "I cannot help with that."] {
            let out = parse_step1_response(raw);
            assert_eq!(out.status, ParseStatus::Invalid);
            assert!(out.fragment.is_none());
            assert!(!out.diagnostics.is_empty());
        }
    }

    #[test]
    fn step1_unfenced_json_is_repaired() {
        let raw = r#"Plan: {"scenes": [{"description": "a cat sleeps", "entities": [{"name": "cat", "description": ""}], "background": "a sofa"}]}"#;
        let out = parse_step1_response(raw);
        assert_eq!(out.status, ParseStatus::Repaired);
        assert_eq!(out.fragment.unwrap().len(), 1);
    }

    #[test]
    fn step1_mixed_headers_are_repaired() {
        let raw = "Scene 1: a chef preheats the oven\nEntities: chef (white apron), oven (steel)\nBackground: a kitchen\n\
                   2. the chef mixes the batter\nEntities: chef (white apron)\nBackground: a kitchen\n\
                   Scene 3: the chef fills the moulds\nEntities: chef\nBackground:   a   kitchen\n\
                   4) the chef serves the cakes\nEntities: chef (white apron; tall hat)\nBackground: a kitchen\n";
        let out = parse_step1_response(raw);
        assert_eq!(out.status, ParseStatus::Repaired);
        let scenes = out.fragment.unwrap();
        assert_eq!(scenes.len(), 4);
        assert_eq!(scenes[0].entities.len(), 2);
        assert_eq!(scenes[0].entities[0].description, "white apron");
        assert_eq!(scenes[2].background, "a kitchen");
        assert_eq!(scenes[3].entities[0].description, "white apron; tall hat");
    }

    #[test]
    fn step1_whitespace_normalization_is_repaired() {
        let raw = "```json\n{\"scenes\": [{\"description\": \"  a dog  runs \", \"entities\": [{\"name\": \"dog\", \"description\": \"brown\"}], \"background\": \"park\"}]}\n```";
        let out = parse_step1_response(raw);
        assert_eq!(out.status, ParseStatus::Repaired);
        assert_eq!(out.fragment.unwrap()[0].description, "a dog runs");
    }

    #[test]
    fn duplicate_entity_names_get_distinct_ids() {
        let raw = "```json\n{\"scenes\": [{\"description\": \"two cats\", \"entities\": [{\"name\": \"cat\", \"description\": \"black\"}, {\"name\": \"cat\", \"description\": \"white\"}], \"background\": \"sofa\"}]}\n```";
        let scenes = parse_step1_response(raw).fragment.unwrap();
        let ids: Vec<_> = scenes[0].entities.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["cat", "cat#2"]);
    }

    fn two_entity_scene() -> SceneSpec {
        let mut s = SceneSpec::new(1, "a dog chases a ball", "a park");
        s.entities.push(EntityTrack::new("dog", "dog", "brown"));
        s.entities.push(EntityTrack::new("ball", "ball", "red"));
        s
    }

    fn step2_json(frames: usize, coord: impl Fn(usize) -> [f64; 4]) -> String {
        let body: Vec<String> = (1..=frames)
            .map(|f| {
                let c = coord(f);
                format!(
                    r#"{{"frame": {f}, "boxes": [{{"name": "dog", "box": [{}, {}, {}, {}]}}, {{"name": "ball", "box": [0.6, 0.6, 0.7, 0.7]}}]}}"#,
                    c[0], c[1], c[2], c[3]
                )
            })
            .collect();
        format!("```json\n{{\"frames\": [{}]}}\n```", body.join(",\n"))
    }

    #[test]
    fn step2_nine_on_grid_frames_ok() {
        let raw = step2_json(9, |f| [f as f64 / 20.0, 0.1, (f + 4) as f64 / 20.0, 0.4]);
        let out = parse_step2_response(&raw, &two_entity_scene());
        assert_eq!(out.status, ParseStatus::Ok, "{:?}", out.diagnostics);
        let s = out.fragment.unwrap();
        assert!(s.is_layout_complete());
        assert_eq!(s.entities[0].keyframes[8].frame, 8);
        assert!((s.entities[0].keyframes[8].bbox.x0 - 0.45).abs() < 1e-9);
    }

    #[test]
    fn step2_eight_frames_invalid() {
        let raw = step2_json(8, |_| [0.1, 0.1, 0.3, 0.3]);
        let out = parse_step2_response(&raw, &two_entity_scene());
        assert_eq!(out.status, ParseStatus::Invalid);
        assert!(out.fragment.is_none());
        assert!(out.diagnostics.iter().any(|d| d.code == "MISSING_KEYFRAMES"));
    }

    #[test]
    fn step2_off_grid_is_snapped_and_repaired() {
        let raw = step2_json(9, |_| [0.326, 0.1, 0.674, 0.9]);
        let out = parse_step2_response(&raw, &two_entity_scene());
        assert_eq!(out.status, ParseStatus::Repaired);
        let s = out.fragment.unwrap();
        for kf in &s.entities[0].keyframes {
            assert_eq!(kf.bbox, quantize_box(&BoundingBox::new(0.326, 0.1, 0.674, 0.9), GRID_UNIT).unwrap());
            assert!(kf.bbox.to_array().iter().all(|c| on_grid(*c, GRID_UNIT, 1e-9)));
        }
    }

    #[test]
    fn step2_empty_frame_invalid() {
        let mut raw = step2_json(9, |_| [0.1, 0.1, 0.3, 0.3]);
        raw = raw.replacen(
            r#"{"frame": 4, "boxes": [{"name": "dog", "box": [0.1, 0.1, 0.3, 0.3]}, {"name": "ball", "box": [0.6, 0.6, 0.7, 0.7]}]}"#,
            r#"{"frame": 4, "boxes": []}"#,
            1,
        );
        let out = parse_step2_response(&raw, &two_entity_scene());
        assert_eq!(out.status, ParseStatus::Invalid);
        assert!(out.diagnostics.iter().any(|d| d.code == "EMPTY_FRAME" && d.frame == Some(4)));
    }

    #[test]
    fn step2_line_format_with_gaps_and_case() {
        let mut raw = String::from("Layout:\n");
        for f in 1..=9 {
            if f % 2 == 0 {
                raw.push_str(&format!("Frame {f}: Dog [0.1, 0.1, 0.3, 0.3]\n"));
            } else {
                raw.push_str(&format!("Frame {f}: Dog [0.1, 0.1, 0.3, 0.3]; ball [0.5, 0.5, 0.7, 0.7]; kite [0, 0, 1, 1]\n"));
            }
        }
        let out = parse_step2_response(&raw, &two_entity_scene());
        assert_eq!(out.status, ParseStatus::Repaired, "{:?}", out.diagnostics);
        let s = out.fragment.unwrap();
        assert!(s.is_layout_complete());
        let codes: Vec<_> = out.diagnostics.iter().map(|d| d.code.as_str()).collect();
        assert!(codes.contains(&"LINE_FORMAT"));
        assert!(codes.contains(&"NAME_NORMALIZED"));
        assert!(codes.contains(&"UNKNOWN_ENTITY"));
        assert!(codes.contains(&"FILLED_KEYFRAMES"));
    }

    #[test]
    fn step2_extra_frames_trimmed() {
        let raw = step2_json(11, |_| [0.1, 0.1, 0.3, 0.3]);
        let out = parse_step2_response(&raw, &two_entity_scene());
        assert_eq!(out.status, ParseStatus::Repaired);
        assert!(out.fragment.unwrap().is_layout_complete());
    }

    #[test]
    fn absent_entity_is_dropped() {
        let body: Vec<String> = (1..=9)
            .map(|f| format!(r#"{{"frame": {f}, "boxes": [{{"name": "dog", "box": [0.1, 0.1, 0.3, 0.3]}}]}}"#))
            .collect();
        let raw = format!("```json\n{{\"frames\": [{}]}}\n```", body.join(","));
        let out = parse_step2_response(&raw, &two_entity_scene());
        assert_eq!(out.status, ParseStatus::Repaired);
        assert_eq!(out.fragment.unwrap().entities.len(), 1);
    }

    #[test]
    fn fill_interpolates_between_known_slots() {
        let mut known = BTreeMap::new();
        known.insert(2, BoundingBox::new(0.0, 0.0, 0.2, 0.2));
        known.insert(6, BoundingBox::new(0.4, 0.0, 0.6, 0.2));
        let kfs = fill_track(&known, 9);
        assert_eq!(kfs[0].bbox, known[&2]);
        assert!((kfs[4].bbox.x0 - 0.2).abs() < 1e-9);
        assert_eq!(kfs[8].bbox, known[&6]);
    }
}
