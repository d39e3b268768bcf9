//! Semantic embeddings of feature descriptions: providers, the on-disk
//! cache, and description completion through a chat endpoint.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::FeatureMetadata;
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "HRLFS_EMBED_API_KEY";
pub const MAX_BATCH: usize = 64;
pub const MAX_RETRIES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Remote,
    Cache,
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawEmbedding {
    pub vector: Vec<f64>,
    pub source: EmbeddingSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    Cache,
    Zero,
}

pub trait EmbeddingProvider {
    fn kind(&self) -> ProviderKind;
    fn model(&self) -> &str;
    fn dim(&self) -> usize;
    /// One vector per text, in input order.
    fn embed(&mut self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Produces all-zero vectors of a fixed dimension.
#[derive(Clone, Debug)]
pub struct ZeroProvider {
    pub dim: usize,
}

impl EmbeddingProvider for ZeroProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Zero
    }
    fn model(&self) -> &str {
        "zero"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn embed(&mut self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![vec![0.0; self.dim]; texts.len()])
    }
}

/// Serves only what the cache already holds.
#[derive(Clone, Debug)]
pub struct CacheOnlyProvider {
    model: String,
    dim: usize,
}

impl CacheOnlyProvider {
    pub fn for_cache(cache: &EmbeddingCache) -> Self {
        Self {
            model: cache.model.clone(),
            dim: cache.dim,
        }
    }
}

impl EmbeddingProvider for CacheOnlyProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Cache
    }
    fn model(&self) -> &str {
        &self.model
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn embed(&mut self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Err(Error::Provider(format!(
            "cache-only provider has no vectors for {} text(s), first {:?}",
            texts.len(),
            texts.first()
        )))
    }
}

/// Minimal JSON-over-HTTP transport so the remote clients can be exercised
/// without a network.
pub trait Transport: Send {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<Value>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: config.into(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<Value> {
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer}"))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(401) | ureq::Error::StatusCode(403) => Error::Transport(
                    format!("{url}: authentication rejected; check {API_KEY_ENV}"),
                ),
                e => Error::Transport(format!("{url}: {e}")),
            })?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| Error::Transport(format!("{url}: bad response body: {e}")))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: MAX_RETRIES,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    fn run<T>(&self, sleep: &dyn Fn(Duration), mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let mut delay = self.initial_backoff;
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt < self.max_retries => {
                    log::warn!("request failed (attempt {}): {e}; retrying in {delay:?}", attempt + 1);
                    sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// OpenAI-compatible `/embeddings` client.
pub struct RemoteProvider {
    base_url: String,
    model: String,
    dim: usize,
    api_key: String,
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    sleep: Box<dyn Fn(Duration) + Send>,
    requests: usize,
}

impl RemoteProvider {
    pub fn new(
        base_url: &str,
        model: &str,
        dim: usize,
        api_key: String,
        transport: Box<dyn Transport>,
    ) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            dim,
            api_key,
            transport,
            retry: RetryPolicy::default(),
            sleep: Box::new(std::thread::sleep),
            requests: 0,
        }
    }

    /// Reads the bearer token from [`API_KEY_ENV`].
    pub fn from_env(base_url: &str, model: &str, dim: usize) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Provider(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(base_url, model, dim, key, Box::new(HttpTransport::default())))
    }

    pub fn with_retry(mut self, retry: RetryPolicy, sleep: Box<dyn Fn(Duration) + Send>) -> Self {
        self.retry = retry;
        self.sleep = sleep;
        self
    }

    /// HTTP requests attempted so far, retries included.
    pub fn requests(&self) -> usize {
        self.requests
    }

    fn embed_batch(&mut self, batch: &[String]) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/embeddings", self.base_url);
        let body = json!({ "model": self.model, "input": batch });
        let transport = &self.transport;
        let key = &self.api_key;
        let requests = &mut self.requests;
        let resp = self.retry.run(&*self.sleep, || {
            *requests += 1;
            transport.post_json(&url, key, &body)
        })?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Provider("embedding response lacks a data array".into()))?;
        if data.len() != batch.len() {
            return Err(Error::Provider(format!(
                "asked for {} embeddings, received {}",
                batch.len(),
                data.len()
            )));
        }
        data.iter()
            .map(|item| {
                let v: Vec<f64> = item
                    .get("embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Provider("data item lacks an embedding".into()))?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| Error::Provider("non-numeric embedding".into())))
                    .collect::<Result<_>>()?;
                if v.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: v.len(),
                        context: format!("model {} returned a vector of unexpected length", self.model),
                    });
                }
                Ok(v)
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }
    fn model(&self) -> &str {
        &self.model
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn embed(&mut self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(MAX_BATCH) {
            out.extend(self.embed_batch(chunk)?);
        }
        Ok(out)
    }
}

/// On-disk cache: `{ "model", "dim", "vectors": { name: [..] } }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCache {
    pub model: String,
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingCache {
    pub fn new(model: &str, dim: usize) -> Self {
        Self {
            model: model.to_string(),
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cache: Self = serde_json::from_str(&text)?;
        if let Some((name, v)) = cache.vectors.iter().find(|(_, v)| v.len() != cache.dim) {
            return Err(Error::DimensionMismatch {
                expected: cache.dim,
                actual: v.len(),
                context: format!("cached vector for {name:?}"),
            });
        }
        Ok(cache)
    }

    pub fn load_or_new(path: &Path, model: &str, dim: usize) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new(model, dim))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Text sent to the embedding model for one feature.
pub fn embedding_text(name: &str, description: Option<&str>) -> String {
    match description {
        Some(d) if !d.trim().is_empty() => format!("{name}: {d}"),
        _ => name.to_string(),
    }
}

/// Raw (unreduced) embeddings for every feature, in `names` order.
///
/// The zero provider, or metadata with neither a dataset description nor any
/// feature description, yields all-zero vectors. Otherwise the cache is
/// consulted first and only misses go to the provider; new vectors are
/// added to the cache.
pub fn fetch_embeddings(
    names: &[String],
    metadata: &FeatureMetadata,
    provider: &mut dyn EmbeddingProvider,
    mut cache: Option<&mut EmbeddingCache>,
) -> Result<Vec<RawEmbedding>> {
    let dim = provider.dim();
    if let Some(c) = cache.as_deref() {
        if c.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: c.dim,
                context: format!(
                    "cache built with model {:?} (dim {}) but provider {:?} declares dim {}",
                    c.model,
                    c.dim,
                    provider.model(),
                    dim
                ),
            });
        }
    }

    if provider.kind() == ProviderKind::Zero || metadata.is_fully_missing() {
        if let Some(c) = cache.as_deref_mut() {
            for name in names {
                c.vectors.entry(name.clone()).or_insert_with(|| vec![0.0; dim]);
            }
        }
        return Ok(names
            .iter()
            .map(|_| RawEmbedding {
                vector: vec![0.0; dim],
                source: EmbeddingSource::Zero,
            })
            .collect());
    }

    let mut out: Vec<Option<RawEmbedding>> = vec![None; names.len()];
    let mut misses = Vec::new();
    for (i, name) in names.iter().enumerate() {
        match cache.as_deref().and_then(|c| c.vectors.get(name)) {
            Some(v) => {
                out[i] = Some(RawEmbedding {
                    vector: v.clone(),
                    source: EmbeddingSource::Cache,
                })
            }
            None => misses.push(i),
        }
    }
    if !misses.is_empty() {
        let texts: Vec<String> = misses
            .iter()
            .map(|&i| embedding_text(&names[i], metadata.description(&names[i])))
            .collect();
        let vectors = provider.embed(&texts)?;
        for (&i, v) in misses.iter().zip(vectors) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                    context: format!("embedding for {:?}", names[i]),
                });
            }
            if let Some(c) = cache.as_deref_mut() {
                c.vectors.insert(names[i].clone(), v.clone());
            }
            out[i] = Some(RawEmbedding {
                vector: v,
                source: EmbeddingSource::Remote,
            });
        }
    }
    Ok(out.into_iter().map(|e| e.expect("every slot filled")).collect())
}

pub trait ChatProvider {
    fn complete(&mut self, prompt: &str) -> Result<String>;
}

/// OpenAI-compatible `/chat/completions` client with one user message.
pub struct RemoteChat {
    base_url: String,
    model: String,
    api_key: String,
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    sleep: Box<dyn Fn(Duration) + Send>,
}

impl RemoteChat {
    pub fn new(base_url: &str, model: &str, api_key: String, transport: Box<dyn Transport>) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            transport,
            retry: RetryPolicy::default(),
            sleep: Box::new(std::thread::sleep),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy, sleep: Box<dyn Fn(Duration) + Send>) -> Self {
        self.retry = retry;
        self.sleep = sleep;
        self
    }
}

impl ChatProvider for RemoteChat {
    fn complete(&mut self, prompt: &str) -> Result<String> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = json!({
            "model": self.model,
            "messages": [ { "role": "user", "content": prompt } ],
        });
        let resp = self
            .retry
            .run(&*self.sleep, || self.transport.post_json(&url, &self.api_key, &body))?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Provider("chat response lacks choices[0].message.content".into()))
    }
}

/// Prompt asking for descriptions of the features in `missing`.
pub fn description_prompt(metadata: &FeatureMetadata, feature_names: &[String], missing: &[String]) -> String {
    let mut p = String::new();
    p.push_str("You are documenting the columns of a tabular dataset.\n\n");
    p.push_str("Dataset description: ");
    p.push_str(metadata.dataset_description.as_deref().unwrap_or("(not available)"));
    p.push_str("\n\nFeatures with known descriptions:\n");
    let mut any = false;
    for name in feature_names {
        if let Some(d) = metadata.description(name) {
            p.push_str(&format!("- {name}: {d}\n"));
            any = true;
        }
    }
    if !any {
        p.push_str("(none)\n");
    }
    p.push_str("\nFeatures without descriptions:\n");
    for name in missing {
        p.push_str(&format!("- {name}\n"));
    }
    p.push_str(
        "\nWrite a concise one-sentence description for every feature without a description, \
         using the dataset description and the known features as context. Respond with a single \
         JSON object that maps each of those feature names to its description, and nothing else.\n",
    );
    p
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptionCompletion {
    pub metadata: FeatureMetadata,
    pub warnings: Vec<String>,
    pub remote_called: bool,
}

/// Fills missing feature descriptions through a chat model.
///
/// Existing descriptions are never altered. Names the model invents are
/// dropped with a warning; an unparseable reply leaves the metadata unchanged
/// and is reported as a warning.
pub fn complete_descriptions(
    provider: &mut dyn ChatProvider,
    metadata: &FeatureMetadata,
    feature_names: &[String],
) -> Result<DescriptionCompletion> {
    let missing: Vec<String> = feature_names
        .iter()
        .filter(|n| metadata.description(n).is_none())
        .cloned()
        .collect();
    if missing.is_empty() {
        return Ok(DescriptionCompletion {
            metadata: metadata.clone(),
            warnings: Vec::new(),
            remote_called: false,
        });
    }

    let prompt = description_prompt(metadata, feature_names, &missing);
    let reply = provider.complete(&prompt)?;
    let mut warnings = Vec::new();
    let mut out = metadata.clone();
    match parse_description_reply(&reply) {
        Some(map) => {
            let wanted: BTreeSet<&str> = missing.iter().map(String::as_str).collect();
            for (name, desc) in map {
                if !wanted.contains(name.as_str()) {
                    let w = format!("discarding description for unrequested feature {name:?}");
                    log::warn!("{w}");
                    warnings.push(w);
                    continue;
                }
                out.descriptions.insert(name, desc);
            }
            let still: Vec<&String> = missing.iter().filter(|n| !out.descriptions.contains_key(*n)).collect();
            if !still.is_empty() {
                warnings.push(format!("no description returned for {still:?}; name-only embedding used"));
            }
        }
        None => {
            let w = "could not parse the description reply as a JSON object; \
                     missing features fall back to name-only embeddings"
                .to_string();
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    out.recompute_missing(feature_names);
    Ok(DescriptionCompletion {
        metadata: out,
        warnings,
        remote_called: true,
    })
}

/// Extracts the outermost `{...}` of a reply (tolerating code fences) and
/// reads it as a name → description map.
fn parse_description_reply(reply: &str) -> Option<BTreeMap<String, String>> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    if end < start {
        return None;
    }
    let value: Value = serde_json::from_str(&reply[start..=end]).ok()?;
    let obj = value.as_object()?;
    let mut map = BTreeMap::new();
    for (k, v) in obj {
        map.insert(k.clone(), v.as_str()?.to_string());
    }
    Some(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn described(pairs: &[(&str, &str)], all: &[String]) -> FeatureMetadata {
        let mut m = FeatureMetadata {
            dataset_description: Some("test data".into()),
            descriptions: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            missing: vec![],
        };
        m.recompute_missing(all);
        m
    }

    /// Fake endpoint: returns vectors of `dim` whose first entry is the
    /// input length; fails the first `fail_first` calls.
    struct FakeEmbeddings {
        dim: usize,
        calls: Arc<AtomicUsize>,
        fail_first: usize,
        bodies: Arc<Mutex<Vec<Value>>>,
    }

    impl Transport for FakeEmbeddings {
        fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<Value> {
            assert!(url.ends_with("/embeddings"));
            assert_eq!(bearer, "k");
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(Error::Transport("boom".into()));
            }
            self.bodies.lock().unwrap().push(body.clone());
            let data: Vec<Value> = body["input"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| {
                    let mut v = vec![0.0; self.dim];
                    v[0] = t.as_str().unwrap().len() as f64;
                    json!({ "embedding": v })
                })
                .collect();
            Ok(json!({ "data": data }))
        }
    }

    fn fake(dim: usize, fail_first: usize) -> (RemoteProvider, Arc<AtomicUsize>, Arc<Mutex<Vec<Value>>>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let t = FakeEmbeddings {
            dim,
            calls: calls.clone(),
            fail_first,
            bodies: bodies.clone(),
        };
        let p = RemoteProvider::new("http://x/v1/", "m", dim, "k".into(), Box::new(t))
            .with_retry(RetryPolicy::default(), Box::new(|_| {}));
        (p, calls, bodies)
    }

    #[test]
    fn zero_provider_without_metadata() {
        let n = names(&["a", "b", "c"]);
        let meta = FeatureMetadata::empty(&n);
        let out = fetch_embeddings(&n, &meta, &mut ZeroProvider { dim: 8 }, None).unwrap();
        assert_eq!(out.len(), 3);
        for e in out {
            assert_eq!(e.vector, vec![0.0; 8]);
            assert_eq!(e.source, EmbeddingSource::Zero);
        }
    }

    #[test]
    fn fully_missing_metadata_skips_remote() {
        let n = names(&["a", "b"]);
        let (mut p, calls, _) = fake(4, 0);
        let out = fetch_embeddings(&n, &FeatureMetadata::empty(&n), &mut p, None).unwrap();
        assert!(out.iter().all(|e| e.vector == vec![0.0; 4]));
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn full_cache_issues_no_remote_calls() {
        let n = names(&["a", "b"]);
        let mut cache = EmbeddingCache::new("m", 4);
        cache.vectors.insert("a".into(), vec![1.0, 0.0, 0.0, 0.0]);
        cache.vectors.insert("b".into(), vec![0.0, 1.0, 0.0, 0.0]);
        let (mut p, calls, _) = fake(4, 0);
        let meta = described(&[("a", "x")], &n);
        let out = fetch_embeddings(&n, &meta, &mut p, Some(&mut cache)).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 0);
        assert_eq!(out[1].vector, vec![0.0, 1.0, 0.0, 0.0]);
        assert!(out.iter().all(|e| e.source == EmbeddingSource::Cache));
    }

    #[test]
    fn cache_dimension_mismatch() {
        let n = names(&["a", "b"]);
        let mut cache = EmbeddingCache::new("m", 8);
        let (mut p, _, _) = fake(16, 0);
        let meta = described(&[("a", "x")], &n);
        let err = fetch_embeddings(&n, &meta, &mut p, Some(&mut cache)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 16, actual: 8, .. }));
    }

    #[test]
    fn misses_go_remote_and_fill_cache() {
        let n = names(&["alpha", "b"]);
        let mut cache = EmbeddingCache::new("m", 3);
        cache.vectors.insert("b".into(), vec![9.0, 9.0, 9.0]);
        let (mut p, calls, bodies) = fake(3, 0);
        let meta = described(&[("alpha", "first letter")], &n);
        let out = fetch_embeddings(&n, &meta, &mut p, Some(&mut cache)).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(bodies.lock().unwrap()[0]["input"], json!(["alpha: first letter"]));
        assert_eq!(bodies.lock().unwrap()[0]["model"], json!("m"));
        assert_eq!(out[0].source, EmbeddingSource::Remote);
        assert_eq!(out[0].vector[0], "alpha: first letter".len() as f64);
        assert!(cache.vectors.contains_key("alpha"));
    }

    #[test]
    fn batches_are_capped_and_ordered() {
        let n: Vec<String> = (0..150).map(|i| format!("f{i:03}")).collect();
        let (mut p, calls, bodies) = fake(2, 0);
        let mut meta = FeatureMetadata::empty(&n);
        meta.dataset_description = Some("d".into());
        let out = fetch_embeddings(&n, &meta, &mut p, None).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        let sizes: Vec<usize> = bodies.lock().unwrap().iter().map(|b| b["input"].as_array().unwrap().len()).collect();
        assert_eq!(sizes, vec![64, 64, 22]);
        assert_eq!(out.len(), 150);
    }

    #[test]
    fn retries_then_succeeds() {
        let n = names(&["a", "b"]);
        let (mut p, calls, _) = fake(2, 2);
        let meta = described(&[("a", "x"), ("b", "y")], &n);
        fetch_embeddings(&n, &meta, &mut p, None).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert_eq!(p.requests(), 3);
    }

    #[test]
    fn gives_up_after_three_retries_with_doubling_backoff() {
        let n = names(&["a", "b"]);
        let delays = Arc::new(Mutex::new(Vec::new()));
        let d = delays.clone();
        let (p, calls, _) = fake(2, 100);
        let mut p = p.with_retry(RetryPolicy::default(), Box::new(move |x| d.lock().unwrap().push(x)));
        let meta = described(&[("a", "x")], &n);
        assert!(matches!(fetch_embeddings(&n, &meta, &mut p, None), Err(Error::Transport(_))));
        assert_eq!(calls.load(Ordering::SeqCst), 4);
        let secs: Vec<u64> = delays.lock().unwrap().iter().map(|d| d.as_secs()).collect();
        assert_eq!(secs, vec![1, 2, 4]);
    }

    #[test]
    fn remote_dimension_mismatch() {
        let n = names(&["a", "b"]);
        let calls = Arc::new(AtomicUsize::new(0));
        let t = FakeEmbeddings {
            dim: 5,
            calls,
            fail_first: 0,
            bodies: Arc::new(Mutex::new(vec![])),
        };
        let mut p = RemoteProvider::new("http://x", "m", 4, "k".into(), Box::new(t));
        let meta = described(&[("a", "x")], &n);
        assert!(matches!(
            fetch_embeddings(&n, &meta, &mut p, None),
            Err(Error::DimensionMismatch { expected: 4, actual: 5, .. })
        ));
    }

    #[test]
    fn cache_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let mut c = EmbeddingCache::new("m", 2);
        c.vectors.insert("a".into(), vec![0.25, -1.0]);
        c.save(&path).unwrap();
        assert_eq!(EmbeddingCache::load(&path).unwrap(), c);
        let raw: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["dim"], json!(2));
        assert_eq!(raw["vectors"]["a"], json!([0.25, -1.0]));
    }

    #[test]
    fn text_template() {
        assert_eq!(embedding_text("age", Some("years since birth")), "age: years since birth");
        assert_eq!(embedding_text("age", None), "age");
    }

    struct ScriptedChat {
        reply: String,
        prompts: Vec<String>,
    }

    impl ChatProvider for ScriptedChat {
        fn complete(&mut self, prompt: &str) -> Result<String> {
            self.prompts.push(prompt.to_string());
            Ok(self.reply.clone())
        }
    }

    #[test]
    fn completion_noop_when_nothing_missing() {
        let n = names(&["a", "b"]);
        let meta = described(&[("a", "x"), ("b", "y")], &n);
        let mut chat = ScriptedChat {
            reply: String::new(),
            prompts: vec![],
        };
        let out = complete_descriptions(&mut chat, &meta, &n).unwrap();
        assert!(!out.remote_called);
        assert!(chat.prompts.is_empty());
        assert_eq!(out.metadata, meta);
    }

    #[test]
    fn completion_preserves_known_entries() {
        let n = names(&["a", "b", "c"]);
        let meta = described(&[("a", "apples sold"), ("b", "bananas sold")], &n);
        let mut chat = ScriptedChat {
            reply: "```json\n{\"c\": \"cherries sold\", \"a\": \"overwritten?\", \"zz\": \"invented\"}\n```".into(),
            prompts: vec![],
        };
        let out = complete_descriptions(&mut chat, &meta, &n).unwrap();
        assert_eq!(out.metadata.descriptions.len(), 3);
        assert_eq!(out.metadata.description("a"), Some("apples sold"));
        assert_eq!(out.metadata.description("b"), Some("bananas sold"));
        assert_eq!(out.metadata.description("c"), Some("cherries sold"));
        assert!(out.metadata.missing.is_empty());
        assert!(out.warnings.iter().any(|w| w.contains("zz")));
        let prompt = &chat.prompts[0];
        assert!(prompt.contains("test data"));
        assert!(prompt.contains("- a: apples sold"));
        assert!(prompt.contains("- c\n"));
    }

    #[test]
    fn unparseable_completion_falls_back() {
        let n = names(&["a", "b"]);
        let meta = described(&[("a", "x")], &n);
        let mut chat = ScriptedChat {
            reply: "sorry, I cannot".into(),
            prompts: vec![],
        };
        let out = complete_descriptions(&mut chat, &meta, &n).unwrap();
        assert_eq!(out.metadata, meta);
        assert_eq!(out.warnings.len(), 1);
    }

    struct FakeChatTransport;

    impl Transport for FakeChatTransport {
        fn post_json(&self, url: &str, _bearer: &str, body: &Value) -> Result<Value> {
            assert!(url.ends_with("/chat/completions"));
            assert_eq!(body["messages"].as_array().unwrap().len(), 1);
            assert_eq!(body["messages"][0]["role"], json!("user"));
            Ok(json!({ "choices": [ { "message": { "role": "assistant", "content": "{\"b\": \"bee\"}" } } ] }))
        }
    }

    #[test]
    fn remote_chat_wire_shape() {
        let n = names(&["a", "b"]);
        let meta = described(&[("a", "x")], &n);
        let mut chat = RemoteChat::new("http://h/v1", "chat", "k".into(), Box::new(FakeChatTransport));
        let out = complete_descriptions(&mut chat, &meta, &n).unwrap();
        assert_eq!(out.metadata.description("b"), Some("bee"));
    }
}
