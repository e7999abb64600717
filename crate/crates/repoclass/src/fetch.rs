//! Corpus collection from a code-hosting REST API.
//!
//! Given a list of `owner/name` slugs, fetches each repository's metadata
//! and README and appends one [`RepoRecord`] line to a JSONL corpus. The
//! HTTP layer sits behind the [`Transport`] trait so everything above it —
//! retries, rate limiting, decoding, skipping — runs against canned
//! responses in tests. Failures on individual repositories are logged and
//! skipped; only a rejected auth token (checked before any repository
//! request) or an output-file error aborts the run.

use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::Deserialize;

use crate::corpus::RepoRecord;
use crate::error::{Error, Result};

pub const DEFAULT_API_BASE: &str = "https://api.github.com";
pub const DEFAULT_RPM: u32 = 60;
pub const DEFAULT_CONCURRENCY: usize = 4;
/// Seconds slept before retry 1, 2 and 3 of a failed request.
pub const BACKOFF_SECS: [u64; 3] = [1, 4, 16];

/// What to fetch, how fast, and where to put it.
#[derive(Debug, Clone)]
pub struct FetchSpec {
    /// Repositories as `owner/name` slugs.
    pub slugs: Vec<String>,
    /// Optional bearer token; validated before any repository request.
    pub token: Option<String>,
    /// Request budget per 60-second window.
    pub rpm: u32,
    /// Output JSONL path (created or truncated).
    pub out: PathBuf,
    /// Maximum in-flight requests.
    pub concurrency: usize,
}

impl FetchSpec {
    pub fn new(slugs: Vec<String>, out: impl Into<PathBuf>) -> Self {
        FetchSpec {
            slugs,
            token: None,
            rpm: DEFAULT_RPM,
            out: out.into(),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rpm == 0 {
            return Err(Error::Validation("rate limit must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Validation("concurrency must be positive".into()));
        }
        if self.slugs.is_empty() {
            return Err(Error::Validation("no slugs to fetch".into()));
        }
        for slug in &self.slugs {
            let mut parts = slug.split('/');
            let valid = matches!(
                (parts.next(), parts.next(), parts.next()),
                (Some(owner), Some(name), None)
                    if !owner.is_empty()
                        && !name.is_empty()
                        && !slug.chars().any(char::is_whitespace)
            );
            if !valid {
                return Err(Error::Validation(format!(
                    "slug {slug:?} is not of the form owner/name"
                )));
            }
        }
        Ok(())
    }
}

/// One slug per line; blank lines and `#` comments are skipped.
pub fn read_slugs(path: &Path) -> Result<Vec<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Minimal HTTP GET abstraction. `sleep` routes through the transport so
/// tests can observe backoff and pacing without waiting.
pub trait Transport: Sync {
    /// GET `path` (relative to the API root). Transport-level failures
    /// (connection refused, timeouts) are `Err`; HTTP error statuses are
    /// `Ok` with the status set.
    fn get(&self, path: &str, token: Option<&str>) -> Result<HttpResponse>;

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Production transport.
pub struct HttpTransport {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base: &str) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(concat!("repoclass/", env!("CARGO_PKG_VERSION")))
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Fetch(e.to_string()))?;
        Ok(HttpTransport {
            base: base.trim_end_matches('/').to_string(),
            client,
        })
    }
}

impl Transport for HttpTransport {
    fn get(&self, path: &str, token: Option<&str>) -> Result<HttpResponse> {
        let mut request = self
            .client
            .get(format!("{}/{path}", self.base))
            .header("Accept", "application/vnd.github+json");
        if let Some(token) = token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| Error::Fetch(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .bytes()
            .map_err(|e| Error::Fetch(e.to_string()))?
            .to_vec();
        Ok(HttpResponse { status, body })
    }
}

/// Sliding-window pacer: at most `rpm` requests in any 60-second window.
/// Callers reserve a slot with the current time in milliseconds and wait
/// the returned number of milliseconds before firing.
pub struct RateLimiter {
    rpm: usize,
    window_ms: u64,
    stamps: VecDeque<u64>,
}

impl RateLimiter {
    pub fn new(rpm: u32) -> Self {
        RateLimiter {
            rpm: rpm.max(1) as usize,
            window_ms: 60_000,
            stamps: VecDeque::new(),
        }
    }

    /// Reserves the next slot. The request may fire `wait` ms after
    /// `now_ms`; the slot is booked at that future instant, so concurrent
    /// reservations stay within budget too.
    pub fn reserve(&mut self, now_ms: u64) -> u64 {
        let fire = if self.stamps.len() == self.rpm {
            (self.stamps[0] + self.window_ms).max(now_ms)
        } else {
            now_ms
        };
        if self.stamps.len() == self.rpm {
            self.stamps.pop_front();
        }
        self.stamps.push_back(fire);
        fire - now_ms
    }
}

#[derive(Deserialize)]
struct OwnerMeta {
    login: String,
}

#[derive(Deserialize)]
struct RepoMeta {
    name: String,
    owner: OwnerMeta,
    description: Option<String>,
    #[serde(default)]
    topics: Vec<String>,
}

#[derive(Deserialize)]
struct ReadmeMeta {
    content: String,
    #[serde(default)]
    encoding: String,
}

struct Session<'a> {
    transport: &'a dyn Transport,
    limiter: Mutex<RateLimiter>,
    epoch: Instant,
    token: Option<&'a str>,
}

impl<'a> Session<'a> {
    fn paced_get(&self, path: &str) -> Result<HttpResponse> {
        let now_ms = self.epoch.elapsed().as_millis() as u64;
        let wait = self.limiter.lock().expect("limiter lock").reserve(now_ms);
        if wait > 0 {
            self.transport.sleep(Duration::from_millis(wait));
        }
        self.transport.get(path, self.token)
    }

    /// One request with up to three retries (1s/4s/16s) on rate-limit
    /// responses, server errors and transport failures.
    fn get_with_retry(&self, path: &str) -> Result<HttpResponse> {
        let mut last = String::new();
        for attempt in 0..=BACKOFF_SECS.len() {
            if attempt > 0 {
                log::warn!("{path}: {last}; retrying in {}s", BACKOFF_SECS[attempt - 1]);
                self.transport
                    .sleep(Duration::from_secs(BACKOFF_SECS[attempt - 1]));
            }
            match self.paced_get(path) {
                Ok(resp) if resp.status == 403 || resp.status >= 500 => {
                    last = format!("HTTP {}", resp.status);
                }
                Ok(resp) => return Ok(resp),
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Fetch(format!(
            "{path}: giving up after {} attempts ({last})",
            BACKOFF_SECS.len() + 1
        )))
    }
}

fn parse_json<'d, T: Deserialize<'d>>(path: &str, body: &'d [u8]) -> Result<T> {
    serde_json::from_slice(body)
        .map_err(|e| Error::Fetch(format!("{path}: malformed response: {e}")))
}

fn decode_readme(path: &str, meta: &ReadmeMeta) -> Result<String> {
    if !meta.encoding.is_empty() && meta.encoding != "base64" {
        return Err(Error::Fetch(format!(
            "{path}: unsupported README encoding {:?}",
            meta.encoding
        )));
    }
    let cleaned: String = meta
        .content
        .chars()
        .filter(|c| !c.is_ascii_whitespace())
        .collect();
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(cleaned)
        .map_err(|e| Error::Fetch(format!("{path}: bad base64 README: {e}")))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// `Ok(None)` means the repository was skipped (deleted or private).
fn fetch_one(session: &Session, slug: &str) -> Result<Option<RepoRecord>> {
    let repo_path = format!("repos/{slug}");
    let response = session.get_with_retry(&repo_path)?;
    if response.status == 404 {
        log::warn!("{slug}: not found, skipping");
        return Ok(None);
    }
    if response.status != 200 {
        return Err(Error::Fetch(format!("{repo_path}: HTTP {}", response.status)));
    }
    let meta: RepoMeta = parse_json(&repo_path, &response.body)?;

    let readme_path = format!("repos/{slug}/readme");
    let response = session.get_with_retry(&readme_path)?;
    let readme = match response.status {
        200 => decode_readme(&readme_path, &parse_json(&readme_path, &response.body)?)?,
        404 => String::new(),
        status => return Err(Error::Fetch(format!("{readme_path}: HTTP {status}"))),
    };

    Ok(Some(RepoRecord {
        id: slug.to_string(),
        user: meta.owner.login,
        name: meta.name,
        tags: meta.topics,
        description: meta.description.unwrap_or_default(),
        readme,
        gold_labels: None,
    }))
}

/// Fetch every slug in `spec` through `transport`, writing one JSONL line
/// per success; returns the number written. Lines are written whole under a
/// lock and flushed immediately, so the output is valid JSONL even if the
/// run is interrupted.
pub fn fetch_records_with(spec: &FetchSpec, transport: &dyn Transport) -> Result<usize> {
    spec.validate()?;
    let session = Session {
        transport,
        limiter: Mutex::new(RateLimiter::new(spec.rpm)),
        epoch: Instant::now(),
        token: spec.token.as_deref(),
    };

    if let Some(token) = session.token {
        let response = session.paced_get("user")?;
        match response.status {
            200 => {}
            401 | 403 => {
                return Err(Error::Fetch(format!(
                    "authentication token rejected (HTTP {}); no repositories fetched",
                    response.status
                )))
            }
            status => {
                return Err(Error::Fetch(format!("token preflight failed: HTTP {status}")));
            }
        }
        let _ = token;
    }

    let file = std::fs::File::create(&spec.out)
        .map_err(|e| Error::io(spec.out.display().to_string(), e))?;
    let writer = Mutex::new(std::io::BufWriter::new(file));
    let next = AtomicUsize::new(0);
    let written = AtomicUsize::new(0);
    let io_error: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..spec.concurrency.min(spec.slugs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= spec.slugs.len() || io_error.lock().expect("error lock").is_some() {
                    break;
                }
                let slug = &spec.slugs[i];
                let record = match fetch_one(&session, slug) {
                    Ok(Some(record)) => record,
                    Ok(None) => continue,
                    Err(e) => {
                        log::warn!("{slug}: {e}; skipping");
                        continue;
                    }
                };
                let mut line = serde_json::to_string(&record).expect("record serialization");
                line.push('\n');
                let mut writer = writer.lock().expect("writer lock");
                let wrote = writer
                    .write_all(line.as_bytes())
                    .and_then(|_| writer.flush());
                match wrote {
                    Ok(()) => {
                        written.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => {
                        *io_error.lock().expect("error lock") =
                            Some(Error::io(spec.out.display().to_string(), e));
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = io_error.into_inner().expect("error lock") {
        return Err(e);
    }
    Ok(written.into_inner())
}

/// [`fetch_records_with`] against the live API.
pub fn fetch_records(spec: &FetchSpec) -> Result<usize> {
    let transport = HttpTransport::new(DEFAULT_API_BASE)?;
    fetch_records_with(spec, &transport)
}
