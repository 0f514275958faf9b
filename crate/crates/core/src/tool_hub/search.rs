//! The five search tools and their record/replay backends.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::registry::{ToolFailure, ToolHandler};
use super::validate::Args;
use super::{ParamSpec, ParamType, ToolKind, ToolSpec};

/// Snippets beyond this are dropped before the executor sees them.
pub const MAX_SNIPPETS: usize = 5;

pub const SEARCH_TOOLS: [&str; 5] = [
    "google_search",
    "google_scholar_search",
    "arxiv_search",
    "wikipedia_search",
    "youtube_search",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSnippet {
    pub title: String,
    pub url: String,
    pub snippet: String,
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, tool: &str, args: &Args) -> Result<Vec<SearchSnippet>, String>;
}

/// Replay key: tool name plus the canonical argument serialization, with
/// text trimmed and lowercased and the `timeout` parameter left out.
pub fn request_key(tool: &str, args: &Args) -> String {
    let normalized: BTreeMap<&str, Value> = args
        .iter()
        .filter(|(k, _)| k.as_str() != "timeout")
        .map(|(k, v)| {
            let v = match v {
                Value::String(s) => Value::String(s.trim().to_lowercase()),
                other => other.clone(),
            };
            (k.as_str(), v)
        })
        .collect();
    format!("{tool} {}", serde_json::to_string(&normalized).expect("args serialize"))
}

/// One recorded search, stored one per line in `<dir>/<tool>.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchFixture {
    pub tool: String,
    pub args: Args,
    pub results: Vec<SearchSnippet>,
}

fn fixture_path(dir: &Path, tool: &str) -> PathBuf {
    dir.join(format!("{tool}.jsonl"))
}

fn load_fixtures(dir: &Path, tool: &str) -> Result<BTreeMap<String, Vec<SearchSnippet>>, String> {
    let path = fixture_path(dir, tool);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(format!("{}: {e}", path.display())),
    };
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: SearchFixture =
            serde_json::from_str(line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        out.insert(request_key(&f.tool, &f.args), f.results);
    }
    Ok(out)
}

/// Answers only from recorded fixtures; an unrecorded request is an error.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl SearchBackend for ReplayBackend {
    fn search(&self, tool: &str, args: &Args) -> Result<Vec<SearchSnippet>, String> {
        let key = request_key(tool, args);
        load_fixtures(&self.dir, tool)?
            .remove(&key)
            .ok_or_else(|| format!("replay: no recorded response for `{key}` in {}", self.dir.display()))
    }
}

/// Replay mode without a fixture directory; every search fails.
pub struct UnavailableSearch;

impl SearchBackend for UnavailableSearch {
    fn search(&self, _: &str, _: &Args) -> Result<Vec<SearchSnippet>, String> {
        Err("replay: no search fixture directory configured".into())
    }
}

/// Forwards to a live backend and appends every response to the fixture dir.
pub struct RecordingBackend {
    inner: Arc<dyn SearchBackend>,
    dir: PathBuf,
    lock: Mutex<()>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn SearchBackend>, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
            lock: Mutex::new(()),
        }
    }
}

impl SearchBackend for RecordingBackend {
    fn search(&self, tool: &str, args: &Args) -> Result<Vec<SearchSnippet>, String> {
        let results = self.inner.search(tool, args)?;
        let record = SearchFixture {
            tool: tool.to_owned(),
            args: args.iter().filter(|(k, _)| k.as_str() != "timeout").map(|(k, v)| (k.clone(), v.clone())).collect(),
            results: results.clone(),
        };
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        fs::create_dir_all(&self.dir).map_err(|e| e.to_string())?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(fixture_path(&self.dir, tool))
            .map_err(|e| e.to_string())?;
        writeln!(file, "{}", serde_json::to_string(&record).expect("fixture serializes")).map_err(|e| e.to_string())?;
        Ok(results)
    }
}

/// Credentials for the live search services, read from the environment.
#[derive(Debug, Clone, Default)]
pub struct LiveCredentials {
    pub google_api_key: Option<String>,
    pub google_cse_id: Option<String>,
    pub serpapi_key: Option<String>,
    pub youtube_api_key: Option<String>,
}

impl LiveCredentials {
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Self {
            google_api_key: var("GOOGLE_API_KEY"),
            google_cse_id: var("GOOGLE_CSE_ID"),
            serpapi_key: var("SERPAPI_API_KEY"),
            youtube_api_key: var("YOUTUBE_API_KEY"),
        }
    }
}

/// Talks to the real services over HTTPS.
pub struct LiveBackend {
    agent: ureq::Agent,
    creds: LiveCredentials,
}

impl LiveBackend {
    pub fn new(creds: LiveCredentials) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self { agent, creds }
    }

    fn get_json(&self, url: &str, query: &[(&str, &str)]) -> Result<Value, String> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        let mut resp = req.call().map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())
    }

    fn get_text(&self, url: &str, query: &[(&str, &str)]) -> Result<String, String> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        let mut resp = req.call().map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

fn need<'a>(v: &'a Option<String>, name: &str) -> Result<&'a str, String> {
    v.as_deref().ok_or_else(|| format!("live mode requires {name}"))
}

fn str_field(v: &Value, path: &[&str]) -> String {
    let mut cur = v;
    for p in path {
        cur = &cur[*p];
    }
    cur.as_str().unwrap_or_default().to_owned()
}

fn strip_tags(s: &str) -> String {
    let re = Regex::new(r"<[^>]+>").expect("static regex");
    re.replace_all(s, "").split_whitespace().collect::<Vec<_>>().join(" ")
}

impl SearchBackend for LiveBackend {
    fn search(&self, tool: &str, args: &Args) -> Result<Vec<SearchSnippet>, String> {
        let text_arg = |name: &str| args.get(name).and_then(Value::as_str).unwrap_or_default().to_owned();
        let limit = MAX_SNIPPETS.to_string();
        match tool {
            "google_search" => {
                let q = text_arg("query");
                let body = self.get_json(
                    "https://www.googleapis.com/customsearch/v1",
                    &[
                        ("key", need(&self.creds.google_api_key, "GOOGLE_API_KEY")?),
                        ("cx", need(&self.creds.google_cse_id, "GOOGLE_CSE_ID")?),
                        ("q", &q),
                        ("num", &limit),
                    ],
                )?;
                Ok(items(&body["items"], |i| SearchSnippet {
                    title: str_field(i, &["title"]),
                    url: str_field(i, &["link"]),
                    snippet: str_field(i, &["snippet"]),
                }))
            }
            "google_scholar_search" => {
                let q = text_arg("query");
                let body = self.get_json(
                    "https://serpapi.com/search.json",
                    &[
                        ("engine", "google_scholar"),
                        ("q", &q),
                        ("api_key", need(&self.creds.serpapi_key, "SERPAPI_API_KEY")?),
                    ],
                )?;
                Ok(items(&body["organic_results"], |i| SearchSnippet {
                    title: str_field(i, &["title"]),
                    url: str_field(i, &["link"]),
                    snippet: str_field(i, &["snippet"]),
                }))
            }
            "arxiv_search" => {
                let q = format!("all:{}", text_arg("query"));
                let feed = self.get_text(
                    "https://export.arxiv.org/api/query",
                    &[("search_query", &q), ("max_results", &limit)],
                )?;
                Ok(parse_arxiv_feed(&feed))
            }
            "wikipedia_search" => {
                let topic = text_arg("topic");
                let body = self.get_json(
                    "https://en.wikipedia.org/w/rest.php/v1/search/page",
                    &[("q", &topic), ("limit", &limit)],
                )?;
                Ok(items(&body["pages"], |p| SearchSnippet {
                    title: str_field(p, &["title"]),
                    url: format!("https://en.wikipedia.org/wiki/{}", str_field(p, &["key"])),
                    snippet: strip_tags(&str_field(p, &["excerpt"])),
                }))
            }
            "youtube_search" => {
                let q = text_arg("query");
                let body = self.get_json(
                    "https://www.googleapis.com/youtube/v3/search",
                    &[
                        ("part", "snippet"),
                        ("type", "video"),
                        ("q", &q),
                        ("maxResults", &limit),
                        ("key", need(&self.creds.youtube_api_key, "YOUTUBE_API_KEY")?),
                    ],
                )?;
                Ok(items(&body["items"], |i| SearchSnippet {
                    title: str_field(i, &["snippet", "title"]),
                    url: format!("https://www.youtube.com/watch?v={}", str_field(i, &["id", "videoId"])),
                    snippet: str_field(i, &["snippet", "description"]),
                }))
            }
            other => Err(format!("no live backend for `{other}`")),
        }
    }
}

fn items(list: &Value, f: impl Fn(&Value) -> SearchSnippet) -> Vec<SearchSnippet> {
    list.as_array()
        .map(|a| a.iter().take(MAX_SNIPPETS).map(f).collect())
        .unwrap_or_default()
}

fn parse_arxiv_feed(feed: &str) -> Vec<SearchSnippet> {
    let entry = Regex::new(r"(?s)<entry>(.*?)</entry>").expect("static regex");
    let field = |body: &str, tag: &str| {
        Regex::new(&format!(r"(?s)<{tag}[^>]*>(.*?)</{tag}>"))
            .expect("static regex")
            .captures(body)
            .map(|c| c[1].split_whitespace().collect::<Vec<_>>().join(" "))
            .unwrap_or_default()
    };
    entry
        .captures_iter(feed)
        .take(MAX_SNIPPETS)
        .map(|c| SearchSnippet {
            title: field(&c[1], "title"),
            url: field(&c[1], "id"),
            snippet: field(&c[1], "summary"),
        })
        .collect()
}

/// Handler shared by all five search tools.
pub struct SearchTool {
    name: String,
    backend: Arc<dyn SearchBackend>,
}

impl SearchTool {
    pub fn new(name: &str, backend: Arc<dyn SearchBackend>) -> Self {
        Self {
            name: name.to_owned(),
            backend,
        }
    }
}

impl ToolHandler for SearchTool {
    fn call(&self, args: &Args) -> Result<Value, ToolFailure> {
        let mut results = self.backend.search(&self.name, args).map_err(ToolFailure::Error)?;
        results.truncate(MAX_SNIPPETS);
        let summarize = self.name == "wikipedia_search" && args.get("summarize").and_then(Value::as_bool).unwrap_or(true);
        Ok(Value::String(render_snippets(&results, summarize)))
    }
}

pub fn render_snippets(results: &[SearchSnippet], summarize: bool) -> String {
    if results.is_empty() {
        return "No results found.".to_owned();
    }
    if summarize {
        let top = &results[0];
        return format!("{}: {}", top.title, top.snippet);
    }
    results
        .iter()
        .enumerate()
        .map(|(i, r)| format!("[{}] {}\n{}\n{}", i + 1, r.title, r.url, r.snippet))
        .collect::<Vec<_>>()
        .join("\n")
}

fn timeout_param() -> ParamSpec {
    ParamSpec::optional(
        "timeout",
        ParamType::Integer,
        json!(30),
        "seconds to wait before the call is abandoned",
    )
}

fn query_param(what: &str) -> ParamSpec {
    ParamSpec::required("query", ParamType::Text, what)
}

pub fn search_tool_specs() -> Vec<ToolSpec> {
    let general = |name: &str, params: Vec<ParamSpec>, metadata: &str| ToolSpec {
        name: name.into(),
        params,
        returns: ParamType::Text,
        metadata: metadata.into(),
        kind: ToolKind::General,
        timeout_secs: None,
        handler: None,
    };
    vec![
        general(
            "google_search",
            vec![query_param("web search terms"), timeout_param()],
            "General web search for up-to-date information across various topics. Use for recent news, \
             manufacturer data and facts that may postdate the knowledge base.",
        ),
        general(
            "google_scholar_search",
            vec![query_param("scholarly search terms"), timeout_param()],
            "Searches scholarly literature and citations. Use to find peer-reviewed papers, authors and \
             experimental results in materials science.",
        ),
        general(
            "arxiv_search",
            vec![query_param("terms matched against arXiv titles and abstracts"), timeout_param()],
            "Searches arXiv preprints and returns titles, links and abstracts. Use for the latest research \
             on materials, condensed matter physics and chemistry.",
        ),
        general(
            "wikipedia_search",
            vec![
                ParamSpec::required("topic", ParamType::Text, "article topic to look up"),
                ParamSpec::optional(
                    "summarize",
                    ParamType::Boolean,
                    json!(true),
                    "return only a summary of the best matching article",
                ),
            ],
            "Retrieves and optionally summarizes Wikipedia articles. Useful for quick reference checks of \
             definitions, concepts and material properties.",
        ),
        general(
            "youtube_search",
            vec![query_param("video search terms"), timeout_param()],
            "Searches YouTube videos and returns titles, links and descriptions. Use for lectures, \
             demonstrations and tutorials.",
        ),
    ]
}
