//! The select/drop loop: hierarchical traversal, rewards, the exploration
//! and optimization phases, subset evaluation and the run report.

pub mod config;
pub mod report;
pub mod reward;
pub mod traverse;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{EmbeddingConfig, RewardAssign, RunConfig};
pub use report::{BestSubset, MeanActivated, Phase, RunReport, StepRecord, Timing, WallClock};
pub use reward::{assign_rewards, combined_reward, quantity_reward};
pub use traverse::{hex_to_mask, mask_to_hex, traverse, traverse_with, Traversal};

use crate::dataset::{split_table, FeatureMetadata, FeatureTable, SplitPair};
use crate::error::{Error, Result};
use crate::evaluator::{train_forest, ForestParams, MetricKind};
use crate::feature_state::embed::{
    CacheOnlyProvider, EmbeddingCache, EmbeddingProvider, ProviderKind, RemoteProvider, ZeroProvider,
};
use crate::feature_state::gmm::EmConfig;
use crate::feature_state::{build_feature_states, global_state, FeatureStates};
use crate::hierarchy::{build_hierarchy, diagnostics, expected_active, AgentTree, TreeExport};
use crate::rl::{ActionMode, AgentBrain, Experience, LearnParams, HIDDEN};
use crate::seed::{derive_seed, rng_from};

const STATES_STREAM: u64 = 1;
const BRAIN_STREAM: u64 = 2;
const ACT_STREAM: u64 = 3;
const LEARN_STREAM: u64 = 4;
const FOREST_STREAM: u64 = 5;

/// Validation metric per exact feature mask.
#[derive(Clone, Debug, Default)]
pub struct EvalCache {
    scores: HashMap<Vec<bool>, f64>,
    pub fits: usize,
    pub hits: usize,
}

impl EvalCache {
    pub fn get(&self, mask: &[bool]) -> Option<f64> {
        self.scores.get(mask).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Forest seed for a mask: depends only on the run seed and the mask, so a
/// cached score equals a fresh one.
fn forest_seed(seed: u64, mask: &[bool]) -> u64 {
    let mut path = vec![FOREST_STREAM, mask.len() as u64];
    path.extend(mask.chunks(64).map(|c| {
        c.iter()
            .enumerate()
            .fold(0u64, |acc, (b, &on)| acc | (u64::from(on) << b))
    }));
    derive_seed(seed, &path)
}

/// Trains a forest on the masked training columns and scores it on the
/// validation rows. An empty mask scores 0 without training.
pub fn evaluate_subset(
    split: &SplitPair,
    mask: &[bool],
    forest: &ForestParams,
    metric: MetricKind,
    cache: &mut EvalCache,
    seed: u64,
) -> Result<f64> {
    if !mask.iter().any(|&m| m) {
        return Ok(0.0);
    }
    if let Some(v) = cache.get(mask) {
        cache.hits += 1;
        return Ok(v);
    }
    let model = train_forest(&split.train, mask, forest, forest_seed(seed, mask))?;
    let score = model.score(&split.valid, metric)?;
    cache.fits += 1;
    cache.scores.insert(mask.to_vec(), score);
    Ok(score)
}

/// Everything computed before the agents start acting.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub split: SplitPair,
    pub states: FeatureStates,
    pub tree: AgentTree,
}

/// Holdout split, mixture and embedding states of the training rows, and
/// the Ward agent tree.
pub fn prepare(
    table: &FeatureTable,
    metadata: &FeatureMetadata,
    config: &RunConfig,
    provider: &mut dyn EmbeddingProvider,
    cache: Option<&mut EmbeddingCache>,
) -> Result<Prepared> {
    config.validate()?;
    let split = split_table(table, config.holdout, config.seed)?;
    let states = build_feature_states(
        &split.train.z_normalized(),
        metadata,
        provider,
        cache,
        config.k_max,
        &EmConfig::default(),
        derive_seed(config.seed, &[STATES_STREAM]),
    )?;
    let tree = build_hierarchy(&states.hybrid_vectors())?;
    Ok(Prepared { split, states, tree })
}

/// Loads the configured embedding cache, if any (a missing file yields an
/// empty cache).
pub fn load_cache(emb: &EmbeddingConfig) -> Result<Option<EmbeddingCache>> {
    emb.cache
        .as_ref()
        .map(|path| EmbeddingCache::load_or_new(path, &emb.model, emb.dim))
        .transpose()
}

/// Provider named in the embedding config. The zero provider adopts the
/// cache dimension when a cache is present; the cache provider requires one.
pub fn provider_from_config(
    emb: &EmbeddingConfig,
    cache: Option<&EmbeddingCache>,
) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match emb.provider {
        ProviderKind::Zero => Box::new(ZeroProvider {
            dim: cache.map_or(emb.dim, |c| c.dim),
        }),
        ProviderKind::Cache => {
            let c = cache.ok_or_else(|| {
                Error::InvalidArgument("the cache provider needs an embedding cache path".into())
            })?;
            Box::new(CacheOnlyProvider::for_cache(c))
        }
        ProviderKind::Remote => Box::new(RemoteProvider::from_env(&emb.base_url, &emb.model, emb.dim)?),
    })
}

/// Builds the provider named in `config.embedding`, runs, and writes the
/// embedding cache back if it gained vectors.
pub fn run(table: &FeatureTable, metadata: &FeatureMetadata, config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let emb = &config.embedding;
    let mut cache = load_cache(emb)?;
    let mut provider = provider_from_config(emb, cache.as_ref())?;
    let before = cache.as_ref().map(|c| c.vectors.len());
    let report = run_with_provider(table, metadata, config, provider.as_mut(), cache.as_mut())?;
    if let (Some(path), Some(c)) = (&emb.cache, &cache) {
        if before != Some(c.vectors.len()) || !path.exists() {
            c.save(path)?;
        }
    }
    Ok(report)
}

/// Full pipeline with an explicit embedding provider.
pub fn run_with_provider(
    table: &FeatureTable,
    metadata: &FeatureMetadata,
    config: &RunConfig,
    provider: &mut dyn EmbeddingProvider,
    cache: Option<&mut EmbeddingCache>,
) -> Result<RunReport> {
    let clock = Instant::now();
    let seed = config.seed;
    let n = table.n_features();
    let metric = MetricKind::default_for(table.task());

    let t0 = Instant::now();
    let Prepared { split, states, tree } = prepare(table, metadata, config, provider, cache)?;
    let prepare_secs = t0.elapsed().as_secs_f64();
    let tree_export = TreeExport::from(&tree);
    log::info!(
        "k = {}, tree height {}, balance factor {:.4}",
        states.k,
        tree_export.height,
        tree_export.balance_factor
    );

    let compressed = states.compressed();
    let input_dim = n * states.state_width();
    let mut brains = (0..tree.len())
        .map(|id| {
            let mut rng = rng_from(seed, &[BRAIN_STREAM, id as u64]);
            AgentBrain::new(id, input_dim, &HIDDEN, config.replay_capacity, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let learn = LearnParams {
        gamma: config.gamma,
        lr_actor: config.lr_actor,
        lr_critic: config.lr_critic,
    };

    let mut evals = EvalCache::default();
    let full_set_metric = evaluate_subset(&split, &vec![true; n], &config.forest, metric, &mut evals, seed)?;

    let mut s_prev: Arc<[f64]> = Arc::from(global_state(&compressed, &vec![true; n])?);
    let mut steps = Vec::with_capacity(config.explore_epochs + config.optimize_epochs);
    let mut best: Option<BestSubset> = None;
    let mut negative = Vec::new();
    let mut learn_calls = 0usize;
    let mut experiences = 0usize;
    let mut phase_secs = [0.0f64; 2];

    for t in 0..config.explore_epochs + config.optimize_epochs {
        let t0 = Instant::now();
        let phase = if t < config.explore_epochs {
            Phase::Explore
        } else {
            Phase::Optimize
        };
        let mode = match phase {
            Phase::Explore => ActionMode::UniformRandom,
            Phase::Optimize => ActionMode::Sample,
        };
        let at = |e: Error| e.at_step(t);

        let mut rng = rng_from(seed, &[ACT_STREAM, t as u64]);
        let tr = traverse(&tree, &brains, &s_prev, mode, &mut rng, config.level_cap).map_err(at)?;
        let n_selected = tr.mask.iter().filter(|&&m| m).count();
        let r_perf = evaluate_subset(&split, &tr.mask, &config.forest, metric, &mut evals, seed).map_err(at)?;
        let r_quantity = quantity_reward(n, n_selected, config.lambda);
        let r_total = combined_reward(r_perf, r_quantity, config.alpha);
        let s_next: Arc<[f64]> = Arc::from(global_state(&compressed, &tr.mask).map_err(at)?);

        let shares = assign_rewards(r_total, &tr.activated, config.reward_assign);
        for ((id, reward), &action) in shares.into_iter().zip(&tr.actions) {
            brains[id].remember(Experience {
                state: s_prev.clone(),
                action,
                reward,
                next_state: s_next.clone(),
            });
            experiences += 1;
        }

        if phase == Phase::Optimize {
            let mut active = vec![false; tree.len()];
            tr.activated.iter().for_each(|&id| active[id] = true);
            let learned = brains
                .par_iter_mut()
                .filter(|b| active[b.node])
                .map(|b| {
                    let mut rng = rng_from(seed, &[LEARN_STREAM, t as u64, b.node as u64]);
                    b.train_step(config.minibatch, config.per_alpha, config.per_beta, &learn, &mut rng)
                        .map(|o| o.is_some())
                })
                .collect::<Result<Vec<bool>>>()
                .map_err(at)?;
            learn_calls += learned.iter().filter(|&&l| l).count();
        }

        if r_perf < 0.0 {
            negative.push(t);
        }
        let mask_hex = mask_to_hex(&tr.mask);
        let improves = |b: &BestSubset| r_perf > b.metric || (r_perf == b.metric && n_selected < b.features.len());
        if n_selected > 0 && best.as_ref().is_none_or(improves) {
            best = Some(BestSubset {
                step: t,
                mask_hex: mask_hex.clone(),
                features: (0..n)
                    .filter(|&j| tr.mask[j])
                    .map(|j| table.feature_names()[j].clone())
                    .collect(),
                metric: r_perf,
            });
        }
        steps.push(StepRecord {
            step: t,
            phase,
            mask_hex,
            n_selected,
            r_perf,
            r_quantity,
            r_total,
            activated: tr.activated,
        });
        s_prev = s_next;
        phase_secs[(phase == Phase::Optimize) as usize] += t0.elapsed().as_secs_f64();
    }

    let mean_of = |p: Phase| {
        let counts: Vec<usize> = steps.iter().filter(|s| s.phase == p).map(|s| s.activated.len()).collect();
        (!counts.is_empty()).then(|| counts.iter().sum::<usize>() as f64 / counts.len() as f64)
    };
    let mean_activated = MeanActivated {
        explore: mean_of(Phase::Explore),
        optimize: mean_of(Phase::Optimize),
    };
    if let Some(mean) = mean_activated.explore {
        let height = diagnostics(&tree).height;
        let reference = expected_active(height, 0.5)?;
        let within = (mean - reference).abs() <= 0.15 * reference;
        log::info!(
            "exploration mean activated {mean:.3} vs {reference:.3} for a perfect tree of height {height} ({})",
            if within { "within 15%" } else { "outside 15%" }
        );
    }

    let timing = Timing {
        forest_fits: evals.fits,
        cache_hits: evals.hits,
        learn_calls,
        experiences,
        wall_clock_secs: config.record_wall_clock.then(|| WallClock {
            prepare: prepare_secs,
            explore: phase_secs[0],
            optimize: phase_secs[1],
            total: clock.elapsed().as_secs_f64(),
        }),
    };
    Ok(RunReport {
        config: config.clone(),
        task: table.task(),
        metric,
        feature_names: table.feature_names().to_vec(),
        k: states.k,
        tree: tree_export,
        steps,
        best,
        full_set_metric,
        negative_r_perf_steps: negative,
        timing,
        mean_activated,
    })
}
