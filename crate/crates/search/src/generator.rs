//! Candidate sources: a chat-completion endpoint or an offline mock.

use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{HttpSettings, SearchConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    pub code: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub round: u32,
    pub prompt: String,
    pub count: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("unparseable generator response: {message}")]
    Unparseable { message: String, raw: String },
    #[error("missing API token: environment variable {0} is not set")]
    MissingToken(String),
}

pub trait Generator {
    fn generate(&self, req: &GeneratorRequest) -> Result<Vec<Candidate>, GenError>;
}

/// Extracts the JSON array of candidates from model output, tolerating
/// surrounding prose and code fences.
pub fn parse_candidates(content: &str) -> Result<Vec<Candidate>, GenError> {
    let bad = |message: String| GenError::Unparseable { message, raw: content.to_string() };
    let start = content.find('[').ok_or_else(|| bad("no JSON array".into()))?;
    let end = content.rfind(']').ok_or_else(|| bad("no JSON array".into()))?;
    if end < start {
        return Err(bad("no JSON array".into()));
    }
    serde_json::from_str(&content[start..=end]).map_err(|e| bad(e.to_string()))
}

pub struct HttpGenerator {
    settings: HttpSettings,
}

impl HttpGenerator {
    pub fn new(settings: HttpSettings) -> Self {
        HttpGenerator { settings }
    }

    fn post(&self, token: &str, body: &serde_json::Value) -> Result<String, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(self.settings.timeout_secs)))
            .build()
            .into();
        let mut resp = agent
            .post(&self.settings.url)
            .header("Authorization", &format!("Bearer {token}"))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, req: &GeneratorRequest) -> Result<Vec<Candidate>, GenError> {
        let token = std::env::var(&self.settings.token_env)
            .map_err(|_| GenError::MissingToken(self.settings.token_env.clone()))?;
        let body = serde_json::json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let attempts = self.settings.attempts.max(1);
        let mut last = String::new();
        let mut payload = None;
        for i in 0..attempts {
            match self.post(&token, &body) {
                Ok(text) => {
                    payload = Some(text);
                    break;
                }
                Err(e) => last = e,
            }
            if i + 1 < attempts {
                thread::sleep(Duration::from_millis(self.settings.backoff_ms << i));
            }
        }
        let raw = payload.ok_or(GenError::Transport { attempts, message: last })?;
        let v: serde_json::Value = serde_json::from_str(&raw)
            .map_err(|e| GenError::Unparseable { message: e.to_string(), raw: raw.clone() })?;
        let content = v["choices"][0]["message"]["content"].as_str().ok_or_else(|| GenError::Unparseable {
            message: "missing choices[0].message.content".into(),
            raw: raw.clone(),
        })?;
        parse_candidates(content)
    }
}

/// Offline generator: seeded parameter jitter over a bank of reward skeletons.
/// Output depends only on the seed, the round and the requested count.
pub struct MockGenerator {
    seed: u64,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        MockGenerator { seed }
    }
}

impl Generator for MockGenerator {
    fn generate(&self, req: &GeneratorRequest) -> Result<Vec<Candidate>, GenError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (u64::from(req.round) << 32) ^ 0x6d6f636b);
        Ok((0..req.count)
            .map(|i| {
                let t = rng.random_range(0..TEMPLATES.len());
                let (stem, code, description) = TEMPLATES[t](&mut rng);
                let name = format!("{stem}_r{}_{i}", req.round);
                Candidate {
                    code: code.replace("NAME", &name),
                    name,
                    description,
                }
            })
            .collect())
    }
}

pub fn generator_for(cfg: &SearchConfig) -> Box<dyn Generator> {
    match cfg.generator {
        crate::config::GeneratorKind::Http => Box::new(HttpGenerator::new(cfg.http.clone())),
        crate::config::GeneratorKind::Mock => Box::new(MockGenerator::new(cfg.seed)),
    }
}

type Template = fn(&mut ChaCha8Rng) -> (&'static str, String, String);

const TEMPLATES: [Template; 12] = [
    lines_at_least,
    calc_presence,
    calc_density,
    solution_numeric,
    answer_close,
    length_window,
    single_tags,
    lines_exact,
    equation_lines,
    solution_short,
    exact_bonus,
    closed_solution,
];

fn weight(rng: &mut ChaCha8Rng) -> f64 {
    [0.5, 1.0, 1.5, 2.0][rng.random_range(0..4)]
}

const THINK: &str = "r'<thinking>(.*?)</thinking>'";
const SOL: &str = "r'<solution>(.*?)</solution>'";

fn lines_at_least(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let k = rng.random_range(2..=4);
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion in completions:
        m = re.search({THINK}, completion[0]['content'], re.DOTALL)
        if not m:
            scores.append(-1.0)
            continue
        lines = [s for s in m.group(1).split('\\n') if s.strip()]
        scores.append({w:?} if len(lines) >= {k} else 0.0)
    return scores
"
    );
    ("lines_at_least", code, format!("{w} when the thinking block has at least {k} lines"))
}

fn calc_presence(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion in completions:
        m = re.search({THINK}, completion[0]['content'], re.DOTALL)
        if m and re.search(r'\\d+\\s*[+\\-*/]\\s*\\d+', m.group(1)):
            scores.append({w:?})
        else:
            scores.append(0.0)
    return scores
"
    );
    ("calc_presence", code, format!("{w} when the reasoning shows an arithmetic step"))
}

fn calc_density(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let t = [0.3, 0.5, 0.7][rng.random_range(0..3)];
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion in completions:
        m = re.search({THINK}, completion[0]['content'], re.DOTALL)
        lines = [s for s in m.group(1).split('\\n') if s.strip()] if m else []
        if not lines:
            scores.append(0.0)
            continue
        calc = [s for s in lines if re.search(r'\\d+\\s*[+\\-*/]\\s*\\d+', s)]
        scores.append({w:?} if len(calc) / len(lines) >= {t:?} else 0.0)
    return scores
"
    );
    ("calc_density", code, format!("{w} when at least {t} of reasoning lines are calculations"))
}

fn solution_numeric(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion in completions:
        m = re.search({SOL}, completion[0]['content'], re.DOTALL)
        if m and re.fullmatch(r'\\s*-?[\\d,]+(\\.\\d+)?\\s*', m.group(1)):
            scores.append({w:?})
        else:
            scores.append(-{w:?} / 2)
    return scores
"
    );
    ("solution_numeric", code, format!("{w} when the solution is a plain number"))
}

fn answer_close(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let r = [0.05, 0.1, 0.2][rng.random_range(0..3)];
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion, ref_text in zip(completions, answer):
        m = re.search({SOL}, completion[0]['content'], re.DOTALL)
        if not m or not re.fullmatch(r'\\s*-?\\d+(\\.\\d+)?\\s*', m.group(1).replace(',', '')):
            scores.append(-1.0)
            continue
        pred = float(m.group(1).replace(',', ''))
        ref = float(ref_text)
        if ref == 0:
            scores.append({w:?} if pred == 0 else 0.0)
        elif abs(pred / ref - 1) <= {r:?}:
            scores.append({w:?})
        else:
            scores.append(0.0)
    return scores
"
    );
    ("answer_close", code, format!("{w} when the answer is within {r} relative error"))
}

fn length_window(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let lo = rng.random_range(1..=6) * 20;
    let hi = lo + rng.random_range(2..=10) * 20;
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion in completions:
        m = re.search({THINK}, completion[0]['content'], re.DOTALL)
        n = len(m.group(1)) if m else 0
        scores.append({w:?} if {lo} <= n <= {hi} else 0.0)
    return scores
"
    );
    ("length_window", code, format!("{w} for reasoning between {lo} and {hi} characters"))
}

fn single_tags(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    tags = ['<thinking>', '</thinking>', '<solution>', '</solution>']
    scores = []
    for completion in completions:
        resp = completion[0]['content']
        ok = all(resp.count(t) == 1 for t in tags)
        scores.append({w:?} if ok else -{w:?})
    return scores
"
    );
    ("single_tags", code, format!("{w} when every tag appears exactly once"))
}

fn lines_exact(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let k = rng.random_range(1..=4);
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion in completions:
        m = re.search({THINK}, completion[0]['content'], re.DOTALL)
        lines = [s for s in m.group(1).split('\\n') if s.strip()] if m else []
        scores.append({w:?} if len(lines) == {k} else 0.0)
    return scores
"
    );
    ("lines_exact", code, format!("{w} for exactly {k} reasoning lines"))
}

fn equation_lines(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let cap = rng.random_range(2..=4);
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion in completions:
        m = re.search({THINK}, completion[0]['content'], re.DOTALL)
        if not m:
            scores.append(0.0)
            continue
        n = len(re.findall(r'=\\s*-?\\d', m.group(1)))
        scores.append({w:?} * min(n, {cap}) / {cap})
    return scores
"
    );
    ("equation_lines", code, format!("up to {w} for lines ending in a computed value"))
}

fn solution_short(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let max = rng.random_range(4..=12);
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion in completions:
        m = re.search({SOL}, completion[0]['content'], re.DOTALL)
        if m and 0 < len(m.group(1).strip()) <= {max}:
            scores.append({w:?})
        else:
            scores.append(0.0)
    return scores
"
    );
    ("solution_short", code, format!("{w} for a non-empty solution of at most {max} characters"))
}

fn exact_bonus(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    import re
    scores = []
    for completion, ref_text in zip(completions, answer):
        m = re.search({SOL}, completion[0]['content'], re.DOTALL)
        scores.append({w:?} if m and m.group(1).strip() == str(ref_text).strip() else 0.0)
    return scores
"
    );
    ("exact_bonus", code, format!("{w} for an exact answer match"))
}

fn closed_solution(rng: &mut ChaCha8Rng) -> (&'static str, String, String) {
    let w = weight(rng);
    let code = format!(
        "def NAME(prompts, completions, answer, **kwargs):
    scores = []
    for completion in completions:
        resp = completion[0]['content']
        scores.append({w:?} if '<solution>' in resp and '</solution>' in resp else -{w:?})
    return scores
"
    );
    ("closed_solution", code, format!("{w} when the solution block is closed"))
}
