//! TSV dataset files and the JSON model file.
//!
//! Edge file: one `src<TAB>dst` per line; blank lines and lines starting with
//! `#` are skipped. Feature file: a header `node<TAB>f1<TAB>...<TAB>fL`, then
//! one row per node with cells `0`, `1` or `?` (missing).
//!
//! Model file numbers are written as decimal strings in Rust's shortest
//! round-trip notation, so save → load reproduces every value bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AffinityTensor, Dataset, FeatureWeights, Hyperparams, Memberships, ModelState, PhiSweep,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

/// Parses the two files' contents. `edges_name`/`features_name` label errors.
pub fn parse_dataset(
    edges_text: &str,
    edges_name: &str,
    features_text: &str,
    features_name: &str,
    undirected: bool,
) -> Result<(Dataset, LoadReport)> {
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut lines = content_lines(features_text);
    let feature_names: Vec<String> = match lines.next() {
        Some((_, header)) => header.split('\t').skip(1).map(str::to_string).collect(),
        None => return Err(parse_err(features_name, 1, "missing header line")),
    };
    let l = feature_names.len();
    let mut rows: Vec<Vec<Option<bool>>> = Vec::new();
    for (no, line) in lines {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != l + 1 {
            return Err(parse_err(
                features_name,
                no,
                format!("expected {} fields, found {}", l + 1, cells.len()),
            ));
        }
        let id = cells[0].trim().to_string();
        if index.contains_key(&id) {
            return Err(parse_err(
                features_name,
                no,
                format!("duplicate node '{id}'"),
            ));
        }
        let row = cells[1..]
            .iter()
            .map(|c| match c.trim() {
                "0" => Ok(Some(false)),
                "1" => Ok(Some(true)),
                "?" => Ok(None),
                other => Err(parse_err(
                    features_name,
                    no,
                    format!("feature value '{other}' is not 0, 1 or ?"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        index.insert(id.clone(), ids.len());
        ids.push(id);
        rows.push(row);
    }

    let mut report = LoadReport::default();
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (no, line) in content_lines(edges_text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                edges_name,
                no,
                format!("expected 'src<TAB>dst', found {} fields", fields.len()),
            ));
        }
        let mut node = |id: &str| -> usize {
            *index.entry(id.to_string()).or_insert_with(|| {
                ids.push(id.to_string());
                rows.push(vec![None; l]);
                ids.len() - 1
            })
        };
        let (s, d) = (node(fields[0]), node(fields[1]));
        if s == d {
            report.self_loops_dropped += 1;
            continue;
        }
        let pairs: &[(usize, usize)] = if undirected {
            &[(s, d), (d, s)]
        } else {
            &[(s, d)]
        };
        for &p in pairs {
            if seen.insert(p) {
                edges.push(p);
            } else {
                report.duplicate_edges += 1;
            }
        }
    }
    if report.self_loops_dropped > 0 {
        log::warn!("dropped {} self-loop(s)", report.self_loops_dropped);
    }
    let n = ids.len();
    let features = Array2::from_shape_fn((n, l), |(i, j)| rows[i][j]);
    let data = Dataset::new(ids, feature_names, edges, features)?;
    Ok((data, report))
}

pub fn load_dataset(
    edges_path: impl AsRef<Path>,
    features_path: impl AsRef<Path>,
    undirected: bool,
) -> Result<(Dataset, LoadReport)> {
    let (ep, fp) = (edges_path.as_ref(), features_path.as_ref());
    let edges = std::fs::read_to_string(ep)?;
    let features = std::fs::read_to_string(fp)?;
    parse_dataset(
        &edges,
        &ep.display().to_string(),
        &features,
        &fp.display().to_string(),
        undirected,
    )
}

pub fn edges_to_tsv(data: &Dataset) -> String {
    let ids = data.node_ids();
    let mut out = String::new();
    for (s, d) in data.edges() {
        let _ = writeln!(out, "{}\t{}", ids[s], ids[d]);
    }
    out
}

pub fn features_to_tsv(data: &Dataset) -> String {
    let mut out = String::from("node");
    for f in data.feature_names() {
        out.push('\t');
        out.push_str(f);
    }
    out.push('\n');
    for (i, id) in data.node_ids().iter().enumerate() {
        out.push_str(id);
        for l in 0..data.n_features() {
            out.push('\t');
            out.push(match data.feature(i, l) {
                Some(true) => '1',
                Some(false) => '0',
                None => '?',
            });
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(
    data: &Dataset,
    edges_path: impl AsRef<Path>,
    features_path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(edges_path, edges_to_tsv(data))?;
    std::fs::write(features_path, features_to_tsv(data))?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn parse_num(s: &str, field: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Data(format!("model field {field}: '{s}' is not a number")))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: Vec<String>,
    pub seed: u64,
    pub timestamp: String,
}

impl Provenance {
    pub fn now(command: Vec<String>, seed: u64) -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command,
            seed,
            timestamp: secs.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperFile {
    pub lambda: String,
    pub gamma_phi: String,
    pub gamma_f: String,
    pub gamma_a: String,
    pub clamp_eps: String,
    pub max_outer_iters: usize,
    pub rel_tol: String,
    pub seed: u64,
    pub backtracking: bool,
    pub inner_passes: usize,
    pub sweep: PhiSweep,
    pub foldin_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub n: usize,
    pub l: usize,
    pub k: usize,
    pub node_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub phi: Vec<Vec<String>>,
    pub w: Vec<Vec<String>>,
    pub theta: Vec<[[String; 2]; 2]>,
    pub alpha: Vec<[String; 2]>,
    pub hyper: HyperFile,
    pub heldout: Vec<String>,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn from_state(state: &ModelState, data: &Dataset, provenance: Provenance) -> Self {
        let h = &state.hyper;
        let matrix = |m: &Array2<f64>| -> Vec<Vec<String>> {
            m.rows()
                .into_iter()
                .map(|r| r.iter().map(|&x| num(x)).collect())
                .collect()
        };
        Self {
            format_version: FORMAT_VERSION,
            n: state.n_nodes(),
            l: state.n_features(),
            k: state.k_groups(),
            node_ids: data.node_ids().to_vec(),
            feature_names: data.feature_names().to_vec(),
            phi: matrix(&state.memberships.phi),
            w: matrix(&state.weights.w),
            theta: state
                .affinities
                .theta
                .iter()
                .map(|t| [[num(t[0][0]), num(t[0][1])], [num(t[1][0]), num(t[1][1])]])
                .collect(),
            alpha: (0..state.k_groups())
                .map(|g| {
                    let [a, b] = h.alpha_for(g);
                    [num(a), num(b)]
                })
                .collect(),
            hyper: HyperFile {
                lambda: num(h.lambda),
                gamma_phi: num(h.gamma_phi),
                gamma_f: num(h.gamma_f),
                gamma_a: num(h.gamma_a),
                clamp_eps: num(h.clamp_eps),
                max_outer_iters: h.max_outer_iters,
                rel_tol: num(h.rel_tol),
                seed: h.seed,
                backtracking: h.backtracking,
                inner_passes: h.inner_passes,
                sweep: h.sweep,
                foldin_iters: h.foldin_iters,
            },
            heldout: state
                .heldout
                .iter()
                .map(|&u| data.node_ids()[u].clone())
                .collect(),
            provenance,
        }
    }

    pub fn to_state(&self) -> Result<ModelState> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let (n, l, k) = (self.n, self.l, self.k);
        let shape_ok = self.phi.len() == n
            && self.phi.iter().all(|r| r.len() == k)
            && self.w.len() == l
            && self.w.iter().all(|r| r.len() == k + 1)
            && self.theta.len() == k
            && self.alpha.len() == k
            && self.node_ids.len() == n
            && self.feature_names.len() == l;
        if !shape_ok {
            return Err(Error::Data(
                "model file payload shapes disagree with n, l, k".into(),
            ));
        }
        let matrix = |rows: &[Vec<String>], cols: usize, field: &str| -> Result<Array2<f64>> {
            let flat = rows
                .iter()
                .flatten()
                .map(|s| parse_num(s, field))
                .collect::<Result<Vec<f64>>>()?;
            Array2::from_shape_vec((rows.len(), cols), flat)
                .map_err(|e| Error::Data(format!("model field {field}: {e}")))
        };
        let phi = matrix(&self.phi, k, "phi")?;
        let w = matrix(&self.w, k + 1, "w")?;
        let theta = self
            .theta
            .iter()
            .map(|t| {
                Ok([
                    [parse_num(&t[0][0], "theta")?, parse_num(&t[0][1], "theta")?],
                    [parse_num(&t[1][0], "theta")?, parse_num(&t[1][1], "theta")?],
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        let alpha = self
            .alpha
            .iter()
            .map(|[a, b]| Ok([parse_num(a, "alpha")?, parse_num(b, "alpha")?]))
            .collect::<Result<Vec<_>>>()?;
        let hf = &self.hyper;
        let hyper = Hyperparams {
            alpha,
            lambda: parse_num(&hf.lambda, "lambda")?,
            gamma_phi: parse_num(&hf.gamma_phi, "gamma_phi")?,
            gamma_f: parse_num(&hf.gamma_f, "gamma_f")?,
            gamma_a: parse_num(&hf.gamma_a, "gamma_a")?,
            clamp_eps: parse_num(&hf.clamp_eps, "clamp_eps")?,
            max_outer_iters: hf.max_outer_iters,
            rel_tol: parse_num(&hf.rel_tol, "rel_tol")?,
            seed: hf.seed,
            backtracking: hf.backtracking,
            inner_passes: hf.inner_passes,
            sweep: hf.sweep,
            foldin_iters: hf.foldin_iters,
        };
        let mut state = ModelState::new(
            Memberships::new(phi),
            FeatureWeights::new(w),
            AffinityTensor::new(theta),
            hyper,
        )?;
        state.heldout = self
            .heldout
            .iter()
            .map(|id| {
                self.node_ids
                    .iter()
                    .position(|x| x == id)
                    .ok_or_else(|| Error::UnknownNode(id.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_model(path: impl AsRef<Path>, file: &ModelFile) -> Result<()> {
    std::fs::write(path, file.to_json()?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    ModelFile::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directed_pair_is_two_edges() {
        let (d, r) = parse_dataset("a\tb\nb\ta\n", "e", "node\n", "f", false).unwrap();
        assert_eq!(d.n_edges(), 2);
        assert_eq!(r, LoadReport::default());
        let (d, r) = parse_dataset("a\tb\nb\ta\n", "e", "node\n", "f", true).unwrap();
        assert_eq!(d.n_edges(), 2);
        assert_eq!(r.duplicate_edges, 2);
    }

    #[test]
    fn self_loop_dropped_with_count() {
        let (d, r) =
            parse_dataset("a\ta\n# c\n\na\tb\n", "e", "node\tx\na\t1\n", "f", false).unwrap();
        assert_eq!(r.self_loops_dropped, 1);
        assert_eq!(d.n_edges(), 1);
        // b appears only in edges: all-missing row
        assert_eq!(d.feature(d.node_index("b").unwrap(), 0), None);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let e = parse_dataset("a\tb\nc\n", "edges.tsv", "node\n", "f", false).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_dataset("", "e", "node\tx\na\t2\n", "feat.tsv", false).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_dataset("", "e", "node\tx\na\t1\na\t0\n", "feat.tsv", false).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn version_mismatch_rejected() {
        let (d, _) = parse_dataset("a\tb\n", "e", "node\tx\na\t1\nb\t0\n", "f", false).unwrap();
        let state = crate::fitting::initialize(&d, 1, &Hyperparams::default(), &[]).unwrap();
        let mut file = ModelFile::from_state(&state, &d, Provenance::now(vec![], 0));
        file.format_version = 99;
        assert!(matches!(
            file.to_state(),
            Err(Error::FormatVersion { found: 99, .. })
        ));
    }
}
