use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lmmg::baselines::{baseline_avg, baseline_ccl, baseline_ccn, Target};
use lmmg::io::{load_dataset, save_dataset, ModelFile, Provenance};
use lmmg::metrics::{evaluate, log_prob, Metrics};
use lmmg::prediction::{classify_nodes, predict_links, predict_missing_features, Score};
use lmmg::selection::{select_k, CvTask};
use lmmg::synth::{synth_generate, Planted, Preset};
use lmmg::{fit_holdout, Dataset, Error};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::*;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(c) => fit(c),
        Command::PredictFeatures(c) => predict_features(c),
        Command::PredictLinks(c) => predict_links_cmd(c),
        Command::Classify(c) => classify(c),
        Command::SelectK(c) => select(c),
        Command::Synth(c) => synth(c),
        Command::Eval(c) => eval(c),
        Command::Baseline(c) => baseline(c),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidParameter(msg.into()).into()
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(&text, out)
}

fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let (data, report) =
        load_dataset(&args.edges, &args.features, args.undirected).with_context(|| {
            format!(
                "loading {} and {}",
                args.edges.display(),
                args.features.display()
            )
        })?;
    if report.self_loops_dropped > 0 {
        eprintln!("dropped {} self-loop(s)", report.self_loops_dropped);
    }
    Ok(data)
}

/// Provenance for a model file; honours `SOURCE_DATE_EPOCH` so repeated
/// runs can produce identical files.
fn provenance(seed: u64) -> Provenance {
    let command = std::env::args().collect();
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(ts) => Provenance {
            command,
            seed,
            timestamp: ts,
        },
        Err(_) => Provenance::now(command, seed),
    }
}

#[derive(Serialize)]
struct NamedScore {
    id: String,
    index: usize,
    prob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<bool>,
}

fn named(scores: &[Score], names: &[String]) -> Vec<NamedScore> {
    scores
        .iter()
        .map(|s| NamedScore {
            id: names[s.index].clone(),
            index: s.index,
            prob: s.prob,
            truth: s.truth,
        })
        .collect()
}

fn fit(c: FitCmd) -> Result<()> {
    let hyper = c.hyper.to_hyper()?;
    let data = load(&c.data)?;
    let holdout = c
        .holdout
        .iter()
        .map(|id| data.node_index(id))
        .collect::<lmmg::Result<Vec<_>>>()?;
    let (state, report) = fit_holdout(&data, c.k, &hyper, &holdout)?;
    let last = report
        .objective_trace
        .last()
        .copied()
        .unwrap_or(report.initial);
    eprintln!(
        "fit: {} nodes, {} edges, {} features, K = {}; objective {:.4} -> {:.4} in {} iterations ({})",
        data.n_nodes(),
        data.n_edges(),
        data.n_features(),
        c.k,
        report.initial.total,
        last.total,
        report.outer_iters_run,
        if report.converged { "converged" } else { "iteration cap" }
    );
    let file = ModelFile::from_state(&state, &data, provenance(hyper.seed));
    write_text(&file.to_json()?, c.out.as_deref())?;
    if let Some(path) = &c.report {
        write_json(&report, Some(path))?;
    }
    Ok(())
}

/// Indices of observed features of `u` named by `--mask`.
fn mask_indices(data: &Dataset, u: usize, mask: Option<&str>) -> Result<Vec<usize>> {
    let observed = |l: &usize| data.feature(u, *l).is_some();
    match mask {
        None => Ok(Vec::new()),
        Some("all") => Ok((0..data.n_features()).filter(observed).collect()),
        Some(list) => list
            .split(',')
            .map(|name| {
                data.feature_index(name.trim())
                    .ok_or_else(|| usage(format!("unknown feature '{name}'")))
            })
            .collect(),
    }
}

fn predict_features(c: PredictFeaturesCmd) -> Result<()> {
    let file = lmmg::io::load_model(&c.model)?;
    let data = load(&c.data)?;
    if file.node_ids != data.node_ids() || file.feature_names != data.feature_names() {
        return Err(
            Error::Data("model and dataset disagree on node ids or feature names".into()).into(),
        );
    }
    let state = file.to_state()?;
    let u = data.node_index(&c.node)?;
    let masked_idx = mask_indices(&data, u, c.mask.as_deref())?;
    let masked = data.with_masked_features(u, &masked_idx);
    let truth = data.features().row(u).to_vec();
    let r = predict_missing_features(&state, &masked, u, Some(&truth))?;
    eprintln!(
        "predicted {} feature(s) of {}{}",
        r.scores.len(),
        r.node,
        r.loglik
            .map(|l| format!("; held-out loglik {l:.4}"))
            .unwrap_or_default()
    );
    write_json(
        &serde_json::json!({
            "target": r.target,
            "node": r.node,
            "scores": named(&r.scores, data.feature_names()),
            "loglik": r.loglik,
        }),
        c.out.as_deref(),
    )
}

fn predict_links_cmd(c: PredictLinksCmd) -> Result<()> {
    let hyper = c.hyper.to_hyper()?;
    let data = load(&c.data)?;
    let u = data.node_index(&c.holdout)?;
    let (state, report) = fit_holdout(&data, c.k, &hyper, &[u])?;
    let p = predict_links(&state, &data, u)?;
    let ids = data.node_ids();
    let scores = if c.data.undirected {
        p.undirected()
    } else {
        p.outgoing.scores.clone()
    };
    let pairs: Vec<(f64, bool)> = scores
        .iter()
        .filter_map(|s| s.truth.map(|t| (s.prob, t)))
        .collect();
    let metrics = evaluate(&pairs)?;
    eprintln!(
        "links of {}: {} candidates, AUC {}, fit in {} iterations",
        c.holdout,
        scores.len(),
        metrics
            .auc
            .map_or("undefined".into(), |a| format!("{a:.4}")),
        report.outer_iters_run
    );
    write_json(
        &serde_json::json!({
            "target": "links",
            "node": c.holdout,
            "direction": if c.data.undirected { "pair" } else { "outgoing" },
            "scores": named(&scores, ids),
            "incoming": named(&p.incoming.scores, ids),
            "loglik_outgoing": p.outgoing.loglik,
            "loglik_incoming": p.incoming.loglik,
            "metrics": metrics,
        }),
        c.out.as_deref(),
    )
}

fn classify(c: ClassifyCmd) -> Result<()> {
    let hyper = c.hyper.to_hyper()?;
    if !(c.train_frac > 0.0 && c.train_frac < 1.0) {
        return Err(usage(format!(
            "--train-frac must lie in (0, 1), got {}",
            c.train_frac
        )));
    }
    let data = load(&c.data)?;
    let label = data
        .feature_index(&c.label_col)
        .ok_or_else(|| usage(format!("unknown label column '{}'", c.label_col)))?;
    let mut labelled: Vec<usize> = (0..data.n_nodes())
        .filter(|&i| data.feature(i, label).is_some())
        .collect();
    if labelled.is_empty() {
        return Err(Error::Data(format!(
            "label column '{}' is entirely missing",
            c.label_col
        ))
        .into());
    }
    labelled.shuffle(&mut ChaCha8Rng::seed_from_u64(hyper.seed));
    let n_train =
        ((c.train_frac * labelled.len() as f64).round() as usize).clamp(1, labelled.len());
    let mut train_mask = vec![false; data.n_nodes()];
    for &i in &labelled[..n_train] {
        train_mask[i] = true;
    }
    let results = classify_nodes(&data, label, &train_mask, c.k, &hyper)?;
    let scores: Vec<NamedScore> = results
        .iter()
        .map(|r| NamedScore {
            id: r.node.clone(),
            index: data.node_index(&r.node).unwrap_or_default(),
            prob: r.scores[0].prob,
            truth: r.scores[0].truth,
        })
        .collect();
    let pairs: Vec<(f64, bool)> = scores
        .iter()
        .filter_map(|s| s.truth.map(|t| (s.prob, t)))
        .collect();
    let metrics = if pairs.is_empty() {
        None
    } else {
        Some(evaluate(&pairs)?)
    };
    eprintln!(
        "classified {} node(s) after training on {n_train}; AUC {}",
        scores.len(),
        metrics
            .and_then(|m| m.auc)
            .map_or("undefined".into(), |a| format!("{a:.4}"))
    );
    write_json(
        &serde_json::json!({
            "target": "label",
            "label": c.label_col,
            "train_nodes": n_train,
            "scores": scores,
            "metrics": metrics,
        }),
        c.out.as_deref(),
    )
}

fn select(c: SelectKCmd) -> Result<()> {
    let hyper = c.hyper.to_hyper()?;
    let data = load(&c.data)?;
    let task = match c.cv_task {
        CvTaskArg::Features => CvTask::Features,
        CvTaskArg::Link => CvTask::Link,
    };
    let candidates = (!c.candidates.is_empty()).then_some(c.candidates.as_slice());
    let report = select_k(&data, &hyper, candidates, c.reps, task)?;
    for s in &report.cv_loglik {
        eprintln!("K = {:>2}: mean {:.4} (std {:.4})", s.k, s.mean, s.std);
    }
    eprintln!("chosen K = {}", report.chosen_k);
    write_json(&report, c.out.as_deref())
}

fn synth(c: SynthCmd) -> Result<()> {
    let preset = match c.preset {
        PresetArg::Homophily => Preset::Homophily,
        PresetArg::CorePeriphery => Preset::CorePeriphery,
    };
    let s = synth_generate(
        c.n,
        c.l,
        c.k,
        &Planted::Preset(preset),
        c.seed,
        c.synth_use_z,
    )?;
    let path = |suffix: &str| PathBuf::from(format!("{}.{suffix}", c.out_prefix));
    let (edges, features, truth) = (path("edges.tsv"), path("features.tsv"), path("truth.json"));
    save_dataset(&s.data, &edges, &features)?;
    let z: Vec<Vec<u8>> =
        s.z.rows()
            .into_iter()
            .map(|r| r.iter().map(|&b| u8::from(b)).collect())
            .collect();
    let phi: Vec<Vec<f64>> = s.phi.rows().into_iter().map(|r| r.to_vec()).collect();
    write_json(
        &serde_json::json!({
            "preset": preset,
            "seed": c.seed,
            "features_from_z": c.synth_use_z,
            "node_ids": s.data.node_ids(),
            "z": z,
            "phi": phi,
            "planted": s.planted,
        }),
        Some(&truth),
    )?;
    eprintln!(
        "synth: {} nodes, {} edges, {} features",
        c.n,
        s.data.n_edges(),
        c.l
    );
    write_json(
        &serde_json::json!({
            "edges": edges,
            "features": features,
            "truth": truth,
            "n_edges": s.data.n_edges(),
        }),
        None,
    )
}

/// Reads `(score, truth)` pairs from the `scores` array of a JSON document
/// (entries without a truth value are skipped) or from `score<TAB>0|1` lines.
fn read_scores(path: &Path) -> Result<Vec<(f64, bool)>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.display().to_string();
    if let Ok(doc) = serde_json::from_str::<serde_json::Value>(&text) {
        let entries = doc
            .get("scores")
            .and_then(|s| s.as_array())
            .ok_or_else(|| Error::Data(format!("{name}: no 'scores' array")))?;
        return Ok(entries
            .iter()
            .filter_map(|e| Some((e.get("prob")?.as_f64()?, e.get("truth")?.as_bool()?)))
            .collect());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(no, line)| {
            let bad = || Error::Parse {
                path: name.clone(),
                line: no + 1,
                msg: "expected 'score<TAB>0|1'".into(),
            };
            let mut f = line.split_whitespace();
            let score = f
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(bad)?;
            let truth = match f.next() {
                Some("1") => true,
                Some("0") => false,
                _ => return Err(bad().into()),
            };
            Ok((score, truth))
        })
        .collect()
}

fn eval(c: EvalCmd) -> Result<()> {
    let scores = read_scores(&c.scores)?;
    let m: Metrics = evaluate(&scores)?;
    eprintln!(
        "{} scores: AUC {}, loglik {:.4}, accuracy {:.4}",
        m.count,
        m.auc.map_or("undefined".into(), |a| format!("{a:.4}")),
        m.loglik,
        m.accuracy
    );
    write_json(&m, c.out.as_deref())
}

fn baseline(c: BaselineCmd) -> Result<()> {
    let data = load(&c.data)?;
    let u = data.node_index(&c.node)?;
    let method = match c.method {
        MethodArg::Avg => baseline_avg,
        MethodArg::Ccn => baseline_ccn,
        MethodArg::Ccl => baseline_ccl,
    };
    let (scores, names) = match c.task {
        TaskArg::Features => {
            let masked_idx = mask_indices(&data, u, c.mask.as_deref())?;
            let masked = data.with_masked_features(u, &masked_idx);
            let scores: Vec<Score> = (0..data.n_features())
                .filter(|&l| masked.feature(u, l).is_none())
                .map(|l| Score {
                    index: l,
                    prob: method(
                        &masked,
                        Target::Feature {
                            node: u,
                            feature: l,
                        },
                        &[],
                    ),
                    truth: data.feature(u, l),
                })
                .collect();
            (scores, data.feature_names())
        }
        TaskArg::Links => {
            let mut hidden = vec![u];
            for id in &c.hidden {
                hidden.push(data.node_index(id)?);
            }
            let scores: Vec<Score> = (0..data.n_nodes())
                .filter(|&j| j != u)
                .map(|j| Score {
                    index: j,
                    prob: method(&data, Target::Link { source: u, dest: j }, &hidden),
                    truth: Some(data.has_edge(u, j)),
                })
                .collect();
            (scores, data.node_ids())
        }
    };
    let loglik = scores
        .iter()
        .filter_map(|s| s.truth.map(|t| log_prob(s.prob, t)))
        .reduce(|a, b| a + b);
    eprintln!(
        "{:?} baseline: {} score(s) for {}",
        c.method,
        scores.len(),
        c.node
    );
    write_json(
        &serde_json::json!({
            "target": match c.task { TaskArg::Features => "features", TaskArg::Links => "links" },
            "method": format!("{:?}", c.method).to_lowercase(),
            "node": c.node,
            "scores": named(&scores, names),
            "loglik": loglik,
        }),
        c.out.as_deref(),
    )
}
