use serde::{Deserialize, Serialize};

use crate::descriptor::ScenarioText;
use crate::gateway::ChatMessage;
use crate::memory::RecallResult;

/// Versioned system prompt for the driving task.
pub const SYSTEM_PROMPT: &str = include_str!("../../assets/system_prompt_v1.txt");
pub const SYSTEM_PROMPT_VERSION: &str = "v1";

pub const FORMAT_REMINDER: &str = "Your reply could not be parsed. Reason step by step, then end with a final line of the form \"decision: <ACTION>\" where <ACTION> is one of LANE_LEFT, IDLE, LANE_RIGHT, FASTER, SLOWER.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub shots: Vec<Shot>,
    pub user: String,
    pub k: usize,
}

impl PromptBundle {
    pub fn to_messages(&self) -> Vec<ChatMessage> {
        let mut messages = Vec::with_capacity(2 + 2 * self.shots.len());
        messages.push(ChatMessage::system(self.system.clone()));
        for shot in &self.shots {
            messages.push(ChatMessage::user(shot.user.clone()));
            messages.push(ChatMessage::assistant(shot.assistant.clone()));
        }
        messages.push(ChatMessage::user(self.user.clone()));
        messages
    }
}

/// Assembles the few-shot prompt. `recalled` comes most-similar first; the
/// shots are placed most-similar last, next to the live scenario.
pub fn build_prompt(system: &str, scenario: &ScenarioText, recalled: &[RecallResult]) -> PromptBundle {
    let suffix = scenario.suffix().trim_start();
    let shots: Vec<Shot> = recalled
        .iter()
        .rev()
        .map(|r| Shot {
            user: format!("{} {}", r.experience.description.trim_end(), suffix),
            assistant: r.experience.reasoning.clone(),
        })
        .collect();
    PromptBundle {
        system: system.to_string(),
        k: shots.len(),
        shots,
        user: scenario.text.clone(),
    }
}
