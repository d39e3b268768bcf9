mod args;
mod config;
mod svg;

use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use hrlfs_core::dataset::{load_metadata, load_table_inferred, write_metadata, FeatureMetadata, FeatureTable};
use hrlfs_core::engine::{self, load_cache, provider_from_config, RunReport};
use hrlfs_core::feature_state::embed::{
    complete_descriptions, fetch_embeddings, EmbeddingCache, EmbeddingSource, HttpTransport, RemoteChat,
};
use hrlfs_core::hierarchy::{diagnostics, expected_active, simulate_active, AgentTree, TreeExport};
use serde::Serialize;

use args::{ClusterArgs, Cli, Command, DataArgs, EmbedArgs, SelectArgs, SimulateArgs, TaskArg};
use config::{api_key, UsageError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Embed(a) => cmd_embed(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            ExitCode::from(1)
        }
    }
}

/// Error chain joined with `: `, skipping causes already quoted by their parent.
fn chain(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn load_inputs(data: &DataArgs) -> Result<(FeatureTable, FeatureMetadata)> {
    let table = load_table_inferred(&data.data, &data.label, data.task == TaskArg::Clf)
        .with_context(|| format!("loading {}", data.data.display()))?;
    let metadata = match &data.metadata {
        Some(path) => load_metadata(path, &table).with_context(|| format!("loading {}", path.display()))?,
        None => FeatureMetadata::empty(table.feature_names()),
    };
    Ok((table, metadata))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_select(a: SelectArgs) -> Result<()> {
    let cfg = config::select_config(&a)?;
    let (table, metadata) = load_inputs(&a.data)?;
    let report = engine::run(&table, &metadata, &cfg)?;
    write_file(&a.out, &report.to_json()?)?;
    if let Some(path) = &a.svg {
        write_file(path, &svg::render(&report))?;
    }
    print_summary(&report);
    println!("report written to {}", a.out.display());
    Ok(())
}

fn print_summary(report: &RunReport) {
    let mut out = std::io::stdout().lock();
    let n = report.feature_names.len();
    match &report.best {
        Some(best) => {
            let names: Vec<&str> = best.features.iter().map(String::as_str).collect();
            let _ = writeln!(
                out,
                "best subset: {}/{} features at step {}, {} = {:.4} (full set {:.4})",
                best.features.len(),
                n,
                best.step,
                report.metric,
                best.metric,
                report.full_set_metric
            );
            let _ = writeln!(out, "selected: {}", names.join(", "));
        }
        None => {
            let _ = writeln!(out, "no non-empty subset was evaluated");
        }
    }
}

#[derive(Serialize)]
struct ClusterOutput<'a> {
    feature_names: &'a [String],
    k: usize,
    per_feature_k: &'a [usize],
    node_count: usize,
    tree: TreeExport,
}

fn cmd_cluster(a: ClusterArgs) -> Result<()> {
    let cfg = config::cluster_config(&a)?;
    let (table, metadata) = load_inputs(&a.data)?;
    let emb = &cfg.embedding;
    let mut cache = load_cache(emb)?;
    let mut provider = provider_from_config(emb, cache.as_ref())?;
    let before = cache.as_ref().map(|c| c.vectors.len());
    let prepared = engine::prepare(&table, &metadata, &cfg, provider.as_mut(), cache.as_mut())?;
    save_cache_if_changed(emb.cache.as_deref(), cache.as_ref(), before)?;

    let d = diagnostics(&prepared.tree);
    let out = ClusterOutput {
        feature_names: table.feature_names(),
        k: prepared.states.k,
        per_feature_k: &prepared.states.per_feature_k,
        node_count: d.node_count,
        tree: TreeExport::from(&prepared.tree),
    };
    write_file(&a.out, &serde_json::to_string_pretty(&out)?)?;
    println!(
        "k = {}, nodes = {}, height = {}, balance factor = {:.4}",
        out.k, d.node_count, d.height, d.balance_factor
    );
    for m in prepared.tree.merges().iter().take(5) {
        let names: Vec<String> = [m.a, m.b]
            .iter()
            .map(|&c| members_label(&prepared.tree, c, table.feature_names()))
            .collect();
        println!(
            "merge {:>3}: {} + {} at {:.6}",
            m.new,
            names[0],
            names[1],
            prepared.tree.node(m.new).merge_height
        );
    }
    println!("tree written to {}", a.out.display());
    Ok(())
}

fn members_label(tree: &AgentTree, id: usize, names: &[String]) -> String {
    let members = &tree.node(id).members;
    if members.len() == 1 {
        names[members[0]].clone()
    } else {
        format!("{{{} features}}", members.len())
    }
}

fn save_cache_if_changed(path: Option<&Path>, cache: Option<&EmbeddingCache>, before: Option<usize>) -> Result<()> {
    if let (Some(path), Some(c)) = (path, cache) {
        if before != Some(c.vectors.len()) || !path.exists() {
            c.save(path)?;
        }
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.p) {
        return Err(UsageError(format!("--p {} must lie in [0, 1]", a.p)).into());
    }
    if a.height == 0 || a.height > 24 {
        return Err(UsageError(format!("--height {} must lie in 1..=24", a.height)).into());
    }
    if a.trials == 0 {
        return Err(UsageError("--trials must be positive".into()).into());
    }
    let tree = AgentTree::perfect(a.height)?;
    let sim = simulate_active(&tree, a.p, a.trials, a.seed)?;
    let rec = expected_active(a.height, a.p)?;
    println!("height {}, p {}, {} trials, {} nodes", a.height, a.p, a.trials, tree.len());
    println!("{:<12} {:>14} {:>12}", "", "active", "std error");
    println!("{:<12} {:>14} {:>12}", "monte-carlo", fmt_num(sim.mean), fmt_num(sim.std_error));
    println!("{:<12} {:>14}", "recurrence", fmt_num(rec));

    if let Some(path) = &a.sweep {
        if a.sweep_points < 2 {
            return Err(UsageError("--sweep-points must be at least 2".into()).into());
        }
        let mut csv = String::from("p,mean,std_error,recurrence\n");
        for i in 0..a.sweep_points {
            let p = i as f64 / (a.sweep_points - 1) as f64;
            let s = simulate_active(&tree, p, a.trials, a.seed)?;
            csv.push_str(&format!("{p},{},{},{}\n", s.mean, s.std_error, expected_active(a.height, p)?));
        }
        write_file(path, &csv)?;
        println!("sweep written to {}", path.display());
    }
    Ok(())
}

/// Integers print without a fractional part so exact cases read cleanly.
fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.0}")
    } else {
        format!("{x:.4}")
    }
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    let cfg = config::embed_config(&a)?;
    let emb = &cfg.embedding;
    let cache_path = emb
        .cache
        .clone()
        .ok_or_else(|| UsageError("embed needs --embed-cache".into()))?;
    let chat_key = if a.complete_descriptions {
        Some(api_key()?)
    } else {
        None
    };
    let (table, mut metadata) = load_inputs(&a.data)?;
    let names = table.feature_names();

    if let Some(key) = chat_key {
        let mut chat = RemoteChat::new(&emb.base_url, &a.chat_model, key, Box::new(HttpTransport::default()));
        let done = complete_descriptions(&mut chat, &metadata, names)?;
        for w in &done.warnings {
            eprintln!("warning: {w}");
        }
        let added = done.metadata.descriptions.len() - metadata.descriptions.len();
        println!("descriptions completed: {added} added");
        metadata = done.metadata;
        if let Some(path) = &a.metadata_out {
            write_metadata(path, &metadata)?;
            println!("metadata written to {}", path.display());
        }
    } else if a.metadata_out.is_some() {
        return Err(UsageError("--metadata-out requires --complete-descriptions".into()).into());
    }

    let mut cache = load_cache(emb)?.expect("cache path checked above");
    let mut provider = provider_from_config(emb, Some(&cache))?;
    let before = cache.vectors.len();
    let got = fetch_embeddings(names, &metadata, provider.as_mut(), Some(&mut cache))?;
    save_cache_if_changed(Some(&cache_path), Some(&cache), Some(before))?;

    let count = |s: EmbeddingSource| got.iter().filter(|e| e.source == s).count();
    println!(
        "{} features: {} cached, {} fetched, {} zero; cache holds {} vectors of dim {} ({})",
        names.len(),
        count(EmbeddingSource::Cache),
        count(EmbeddingSource::Remote),
        count(EmbeddingSource::Zero),
        cache.vectors.len(),
        cache.dim,
        cache_path.display()
    );
    Ok(())
}
