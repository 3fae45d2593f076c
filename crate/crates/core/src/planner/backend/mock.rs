use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;
use serde_json::json;

use crate::layout::Direction;

use super::{BackendError, DecodingParams, LlmBackend};

pub const CHEF_PROMPT: &str = "make caraway cakes";

/// One scripted scene for the mock's step-1 reply.
#[derive(Debug, Clone, PartialEq)]
pub struct MockScene {
    pub description: String,
    pub background: String,
    pub entities: Vec<(String, String)>,
}

impl MockScene {
    pub fn new(description: &str, background: &str, entities: &[(&str, &str)]) -> Self {
        Self {
            description: description.to_string(),
            background: background.to_string(),
            entities: entities
                .iter()
                .map(|(n, d)| (n.to_string(), d.to_string()))
                .collect(),
        }
    }
}

/// Deterministic stand-in for a chat model. It recognizes which planning
/// step a prompt belongs to from its final line and answers in the format
/// the bundled templates ask for.
#[derive(Debug)]
pub struct RuleBasedMock {
    scenarios: HashMap<String, Vec<MockScene>>,
    corrupt_step1: Vec<String>,
    corrupt_step2: Vec<String>,
    alpha_reply: String,
    line_format: bool,
    calls: AtomicUsize,
}

impl Default for RuleBasedMock {
    fn default() -> Self {
        Self::new()
    }
}

impl RuleBasedMock {
    pub fn new() -> Self {
        let chef = vec![
            MockScene::new(
                "a chef in a white apron preheats the oven",
                "a bright home kitchen",
                &[("chef", "white apron, tall hat"), ("oven", "stainless steel oven")],
            ),
            MockScene::new(
                "the chef mixes flour, butter and caraway seeds in a bowl",
                "a bright home kitchen",
                &[("chef", "white apron, tall hat")],
            ),
            MockScene::new(
                "the chef shapes the dough into small round cakes",
                "a bright home kitchen",
                &[("chef", "white apron, tall hat")],
            ),
            MockScene::new(
                "the chef arranges the golden caraway cakes on a plate",
                "a bright home kitchen",
                &[("chef", "white apron, tall hat")],
            ),
        ];
        let mut scenarios = HashMap::new();
        scenarios.insert(CHEF_PROMPT.to_string(), chef);
        Self {
            scenarios,
            corrupt_step1: Vec::new(),
            corrupt_step2: Vec::new(),
            alpha_reply: "0.2".to_string(),
            line_format: false,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_scenario(mut self, prompt: &str, scenes: Vec<MockScene>) -> Self {
        self.scenarios.insert(prompt.to_string(), scenes);
        self
    }

    /// Step-2 replies for scenes whose description contains `pattern` come
    /// back with a frame missing.
    pub fn corrupt_step2_matching(mut self, pattern: &str) -> Self {
        self.corrupt_step2.push(pattern.to_string());
        self
    }

    /// Step-1 replies for source prompts containing `pattern` are prose with
    /// no scene list.
    pub fn corrupt_step1_matching(mut self, pattern: &str) -> Self {
        self.corrupt_step1.push(pattern.to_string());
        self
    }

    pub fn with_alpha_reply(mut self, reply: &str) -> Self {
        self.alpha_reply = reply.to_string();
        self
    }

    /// Answer step 1 with numbered free-text scenes instead of a fenced block.
    pub fn with_line_format(mut self, on: bool) -> Self {
        self.line_format = on;
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn scenes_for(&self, prompt: &str) -> Vec<MockScene> {
        if let Some(s) = self.scenarios.get(prompt) {
            return s.clone();
        }
        let subject = direction_subject(prompt).unwrap_or_else(|| last_word(prompt));
        vec![MockScene::new(prompt, "a plain studio backdrop", &[(subject.as_str(), "")])]
    }

    fn step1(&self, prompt: &str) -> String {
        let source = last_field(prompt, "Prompt:").unwrap_or_default();
        if self.corrupt_step1.iter().any(|p| source.contains(p.as_str())) {
            return "I am not sure how to split this into scenes.".to_string();
        }
        let scenes = self.scenes_for(&source);
        if self.line_format {
            let mut out = String::new();
            for (i, s) in scenes.iter().enumerate() {
                let ents = s
                    .entities
                    .iter()
                    .map(|(n, d)| if d.is_empty() { n.clone() } else { format!("{n} ({d})") })
                    .collect::<Vec<_>>()
                    .join("; ");
                let header = if i % 2 == 0 {
                    format!("Scene {}:", i + 1)
                } else {
                    format!("{}.", i + 1)
                };
                out.push_str(&format!(
                    "{header} {}\nEntities: {ents}\nBackground: {}\n",
                    s.description, s.background
                ));
            }
            return out;
        }
        let body = json!({
            "scenes": scenes.iter().map(|s| json!({
                "description": s.description,
                "entities": s.entities.iter().map(|(n, d)| json!({"name": n, "description": d})).collect::<Vec<_>>(),
                "background": s.background,
            })).collect::<Vec<_>>()
        });
        format!("```json\n{}\n```", serde_json::to_string_pretty(&body).unwrap())
    }

    fn step2(&self, prompt: &str) -> String {
        let description = last_field(prompt, "Scene:").unwrap_or_default();
        let entities: Vec<String> = last_field(prompt, "Entities:")
            .unwrap_or_default()
            .split(';')
            .map(|e| match e.find('(') {
                Some(i) => e[..i].trim().to_string(),
                None => e.trim().to_string(),
            })
            .filter(|e| !e.is_empty())
            .collect();
        let frames = prompt
            .lines()
            .filter(|l| {
                l.strip_prefix("Frame ")
                    .is_some_and(|n| n.trim().parse::<u32>().is_ok())
            })
            .count()
            .max(2);
        let direction = Direction::find_in(&description).map(|(d, _)| d);
        let mover = direction.map(|_| {
            direction_subject(&description)
                .and_then(|s| entities.iter().position(|e| *e == s))
                .unwrap_or(0)
        });

        let corrupt = self.corrupt_step2.iter().any(|p| description.contains(p.as_str()));
        let emitted = if corrupt { frames - 1 } else { frames };
        let out: Vec<_> = (0..emitted)
            .map(|k| {
                let boxes: Vec<_> = entities
                    .iter()
                    .enumerate()
                    .map(|(i, name)| {
                        let moving = if mover == Some(i) { direction } else { None };
                        json!({"name": name, "box": mock_box(i, k, frames, moving)})
                    })
                    .collect();
                json!({"frame": k + 1, "boxes": boxes})
            })
            .collect();
        let body = json!({ "frames": out });
        format!("```json\n{}\n```", serde_json::to_string(&body).unwrap())
    }
}

/// Grid-aligned box for entity `i` at keyframe `k` of `frames`. A moving
/// entity travels 12 grid units along its axis; others stay put.
fn mock_box(i: usize, k: usize, frames: usize, moving: Option<Direction>) -> [f64; 4] {
    let base_x = 1 + 5 * (i % 4) as i64;
    let base_y = 2 + 6 * ((i / 4) % 3) as i64;
    let (mut x, mut y) = (base_x, base_y);
    if let Some(d) = moving {
        let travel = (12 * k as i64 + (frames as i64 - 1) / 2) / (frames as i64 - 1);
        let pos = if d.sign() > 0.0 { 2 + travel } else { 14 - travel };
        if d.is_horizontal() {
            x = pos;
        } else {
            y = pos;
        }
    }
    [x, y, x + 4, y + 4].map(|u| u as f64 / 20.0)
}

fn last_field(prompt: &str, key: &str) -> Option<String> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
}

fn last_word(text: &str) -> String {
    text.split_whitespace()
        .rev()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .find(|w| !w.is_empty())
        .unwrap_or("object")
        .to_lowercase()
}

/// Guesses the moving object of a direction prompt: the last word before the
/// direction phrase that is not an -ing verb, an -ly adverb or a filler word.
pub fn direction_subject(text: &str) -> Option<String> {
    const SKIP: [&str; 10] = ["from", "the", "a", "an", "to", "across", "is", "are", "and", "its"];
    let (_, range) = Direction::find_in(text)?;
    text[..range.start]
        .split_whitespace()
        .rev()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .find(|w| !w.is_empty() && !w.ends_with("ing") && !w.ends_with("ly") && !SKIP.contains(&w.as_str()))
}

#[async_trait]
impl LlmBackend for RuleBasedMock {
    fn model_id(&self) -> String {
        "rule-based-mock".to_string()
    }

    async fn complete(&self, prompt: &str, _params: &DecodingParams) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let last = prompt.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
        Ok(match last {
            "Plan:" => self.step1(prompt),
            "Layout:" => self.step2(prompt),
            "Alpha:" => self.alpha_reply.clone(),
            _ => "I do not understand the request.".to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{
        parse_step1_response, parse_step2_response, render_step1_prompt, render_step2_prompt, ParseStatus,
        PromptTemplate,
    };

    #[test]
    fn subject_heuristic() {
        assert_eq!(direction_subject("pushing a glass from left to right").as_deref(), Some("glass"));
        assert_eq!(
            direction_subject("a red ball rolling from right to left").as_deref(),
            Some("ball")
        );
        assert_eq!(direction_subject("no phrase here"), None);
    }

    #[test]
    fn mock_boxes_are_on_grid_and_in_range() {
        for d in Direction::ALL {
            for i in 0..12 {
                for k in 0..9 {
                    let b = mock_box(i, k, 9, Some(d));
                    assert!(b.iter().all(|c| (0.0..=1.0).contains(c)));
                    assert!(b[0] <= b[2] && b[1] <= b[3]);
                }
            }
        }
        let first = mock_box(0, 0, 9, Some(Direction::LeftToRight));
        let last = mock_box(0, 8, 9, Some(Direction::LeftToRight));
        assert!(last[0] > first[0]);
    }

    #[tokio::test]
    async fn chef_scenario_round_trips_through_parsers() {
        let mock = RuleBasedMock::new();
        let p = render_step1_prompt(CHEF_PROMPT, &PromptTemplate::default_step1()).unwrap();
        let reply = mock.complete(&p, &DecodingParams::default()).await.unwrap();
        let out = parse_step1_response(&reply);
        assert_eq!(out.status, ParseStatus::Ok);
        let scenes = out.fragment.unwrap();
        assert_eq!(scenes.len(), 4);

        let p2 = render_step2_prompt(&scenes[0], &PromptTemplate::default_step2()).unwrap();
        let reply = mock.complete(&p2, &DecodingParams::default()).await.unwrap();
        let out = parse_step2_response(&reply, &scenes[0]);
        assert_eq!(out.status, ParseStatus::Ok, "{:?}", out.diagnostics);
        assert!(out.fragment.unwrap().is_layout_complete());
    }

    #[tokio::test]
    async fn line_format_parses_as_repaired() {
        let mock = RuleBasedMock::new().with_line_format(true);
        let p = render_step1_prompt(CHEF_PROMPT, &PromptTemplate::default_step1()).unwrap();
        let reply = mock.complete(&p, &DecodingParams::default()).await.unwrap();
        assert!(reply.contains("Scene 1:") && reply.contains("\n2. "));
        let out = parse_step1_response(&reply);
        assert_eq!(out.status, ParseStatus::Repaired);
        let scenes = out.fragment.unwrap();
        assert_eq!(scenes.len(), 4);
        assert_eq!(scenes[0].entities[0].description, "white apron, tall hat");
    }

    #[tokio::test]
    async fn unknown_request_and_alpha() {
        let mock = RuleBasedMock::new().with_alpha_reply("0.25");
        let d = DecodingParams::default();
        assert_eq!(mock.complete("Alpha:", &d).await.unwrap(), "0.25");
        assert!(mock.complete("hello", &d).await.unwrap().contains("not understand"));
        assert_eq!(mock.call_count(), 2);
    }
}
