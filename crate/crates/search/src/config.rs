use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Http,
    Mock,
}

/// Chat-completion endpoint settings. The bearer token is read from the
/// environment at request time and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub url: String,
    pub model: String,
    pub token_env: String,
    pub timeout_secs: u64,
    pub attempts: u32,
    pub backoff_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "reward-writer".into(),
            token_env: "REWARDSMITH_API_KEY".into(),
            timeout_secs: 120,
            attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub rounds: usize,
    pub per_round: usize,
    /// Screening trial length.
    pub steps: usize,
    pub generator: GeneratorKind,
    pub temperature: f64,
    pub max_generation_tokens: u32,
    pub sample_questions_per_prompt: usize,
    pub seed: u64,
    pub http: HttpSettings,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            rounds: 5,
            per_round: 10,
            steps: 500,
            generator: GeneratorKind::Http,
            temperature: 0.6,
            max_generation_tokens: 8192,
            sample_questions_per_prompt: 20,
            seed: 3407,
            http: HttpSettings::default(),
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.rounds == 0 || self.per_round == 0 || self.steps == 0 {
            return Err("rounds, per_round and steps must be at least 1".into());
        }
        if !(self.temperature >= 0.0) {
            return Err("temperature must be non-negative".into());
        }
        Ok(())
    }
}
