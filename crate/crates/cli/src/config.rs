//! Flag, TOML and default layering onto `RunConfig`.

use std::path::Path;

use anyhow::{Context, Result};
use hrlfs_core::engine::RunConfig;
use hrlfs_core::feature_state::embed::{ProviderKind, API_KEY_ENV};

use crate::args::{ClusterArgs, CommonArgs, EmbedArgs, ProviderArgs, SelectArgs};

/// Bad invocation; reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

pub fn api_key() -> Result<String> {
    match std::env::var(API_KEY_ENV) {
        Ok(k) if !k.is_empty() => Ok(k),
        _ => usage(format!("{API_KEY_ENV} is not set; export it to use the remote provider")),
    }
}

fn base(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

fn overlay<T: Copy>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_common(cfg: &mut RunConfig, c: &CommonArgs) {
    overlay(&mut cfg.seed, c.seed);
    overlay(&mut cfg.k_max, c.k_max);
    overlay(&mut cfg.holdout, c.holdout);
}

fn apply_provider(cfg: &mut RunConfig, p: &ProviderArgs) -> Result<()> {
    let emb = &mut cfg.embedding;
    if let Some(kind) = p.provider {
        emb.provider = kind.into();
    }
    if let Some(path) = &p.embed_cache {
        emb.cache = Some(path.clone());
    }
    if let Some(model) = &p.embed_model {
        emb.model = model.clone();
    }
    overlay(&mut emb.dim, p.embed_dim);
    if let Some(url) = &p.base_url {
        if emb.provider != ProviderKind::Remote {
            return usage("--base-url only applies to --provider remote");
        }
        emb.base_url = url.clone();
    }
    if emb.dim == 0 {
        return usage("--embed-dim must be positive");
    }
    match emb.provider {
        ProviderKind::Cache if emb.cache.is_none() => usage("--provider cache needs --embed-cache"),
        ProviderKind::Remote => api_key().map(|_| ()),
        _ => Ok(()),
    }
}

fn finish(cfg: RunConfig) -> Result<RunConfig> {
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

pub fn select_config(a: &SelectArgs) -> Result<RunConfig> {
    let mut cfg = base(a.common.config.as_deref())?;
    apply_common(&mut cfg, &a.common);
    overlay(&mut cfg.alpha, a.alpha);
    overlay(&mut cfg.lambda, a.lambda);
    overlay(&mut cfg.explore_epochs, a.explore_epochs);
    overlay(&mut cfg.optimize_epochs, a.optimize_epochs);
    if a.level_cap.is_some() {
        cfg.level_cap = a.level_cap;
    }
    if let Some(r) = a.reward_assign {
        cfg.reward_assign = r.into();
    }
    apply_provider(&mut cfg, &a.provider)?;
    finish(cfg)
}

pub fn cluster_config(a: &ClusterArgs) -> Result<RunConfig> {
    let mut cfg = base(a.common.config.as_deref())?;
    apply_common(&mut cfg, &a.common);
    apply_provider(&mut cfg, &a.provider)?;
    finish(cfg)
}

pub fn embed_config(a: &EmbedArgs) -> Result<RunConfig> {
    let mut cfg = base(a.config.as_deref())?;
    apply_provider(&mut cfg, &a.provider)?;
    finish(cfg)
}
