//! Reading networks and covariates, writing positions, and the flat
//! key-value config format.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdjacencyMatrix, Params};

/// How node ids in a file map onto matrix indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdBase {
    Zero,
    One,
    /// One-based if no id is 0, zero-based otherwise.
    Auto,
}

impl std::str::FromStr for IdBase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "0" | "zero" => Ok(IdBase::Zero),
            "1" | "one" => Ok(IdBase::One),
            "auto" => Ok(IdBase::Auto),
            other => Err(Error::Config(format!("unknown id base '{other}' (expected 0, 1 or auto)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EdgeList {
    pub adjacency: AdjacencyMatrix,
    /// Offset subtracted from file ids (0 or 1).
    pub offset: usize,
    pub self_loops: usize,
    pub duplicates: usize,
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty())
}

fn content(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

pub fn read_edge_list(path: &Path, base: IdBase, declared_n: Option<usize>) -> Result<EdgeList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path, base, declared_n)
}

/// Parses "u v" pairs, one per line, split on whitespace or commas. `#`
/// starts a comment. `path` is only used in error messages.
pub fn parse_edge_list(text: &str, path: &Path, base: IdBase, declared_n: Option<usize>) -> Result<EdgeList> {
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks: Vec<&str> = tokens(content(line)).collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 2 {
            return Err(parse_err(path, lineno, format!("expected two node ids, found '{}'", line.trim())));
        }
        let mut ids = [0usize; 2];
        for (slot, tok) in ids.iter_mut().zip(&toks) {
            *slot = tok.parse().map_err(|_| parse_err(path, lineno, format!("'{tok}' is not a nonnegative integer node id")))?;
        }
        raw.push((lineno, ids[0], ids[1]));
    }
    let offset = match base {
        IdBase::Zero => 0,
        IdBase::One => 1,
        IdBase::Auto => usize::from(!raw.is_empty() && raw.iter().all(|&(_, u, v)| u > 0 && v > 0)),
    };
    let mut max_id = 0;
    for &(lineno, u, v) in &raw {
        if u < offset || v < offset {
            return Err(parse_err(path, lineno, "node id 0 in a one-based file"));
        }
        let (u, v) = (u - offset, v - offset);
        if let Some(n) = declared_n {
            if u >= n || v >= n {
                return Err(parse_err(path, lineno, format!("node id {} exceeds declared node count {n}", u.max(v) + offset)));
            }
        }
        max_id = max_id.max(u).max(v);
    }
    let n = declared_n.unwrap_or(if raw.is_empty() { 0 } else { max_id + 1 });
    let mut edges = BTreeSet::new();
    let (mut self_loops, mut duplicates) = (0, 0);
    for &(_, u, v) in &raw {
        let (u, v) = (u - offset, v - offset);
        if u == v {
            self_loops += 1;
        } else if !edges.insert((u.min(v), u.max(v))) {
            duplicates += 1;
        }
    }
    if self_loops > 0 {
        warn!("{}: dropped {self_loops} self-loop(s)", path.display());
    }
    let adjacency = AdjacencyMatrix::from_edges(n, edges)?;
    Ok(EdgeList { adjacency, offset, self_loops, duplicates })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateFormat {
    /// `n` rows of `n` values.
    Dense,
    /// "i j x" lines with zero-based ids; pairs not listed are 0.
    Triplet,
    /// Dense when the file has exactly `n` rows of `n` values.
    Auto,
}

/// Reads an `n×n` covariate matrix. Entries given in both orientations are
/// averaged, one-sided entries mirrored, and the diagonal is zeroed.
pub fn read_covariates(path: &Path, n: usize, format: CovariateFormat) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_covariates(&text, path, n, format)
}

pub fn parse_covariates(text: &str, path: &Path, n: usize, format: CovariateFormat) -> Result<DMatrix<f64>> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let toks: Vec<&str> = tokens(content(line)).collect();
        if toks.is_empty() {
            continue;
        }
        let vals = toks
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(path, idx + 1, format!("'{t}' is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(path, idx + 1, format!("non-finite covariate {v}")));
        }
        rows.push((idx + 1, vals));
    }
    let dense = match format {
        CovariateFormat::Dense => true,
        CovariateFormat::Triplet => false,
        CovariateFormat::Auto => rows.len() == n && rows.iter().all(|(_, r)| r.len() == n),
    };
    let mut x = DMatrix::zeros(n, n);
    if dense {
        if rows.len() != n {
            return Err(Error::dim("covariate rows", n, rows.len()));
        }
        for (i, (lineno, r)) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(parse_err(path, *lineno, format!("expected {n} values, found {}", r.len())));
            }
            for (j, v) in r.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        x = (&x + x.transpose()) * 0.5;
    } else {
        let mut seen = DMatrix::<u8>::zeros(n, n);
        for (lineno, r) in &rows {
            if r.len() != 3 {
                return Err(parse_err(path, *lineno, format!("expected 'i j x', found {} values", r.len())));
            }
            let id = |v: f64| -> Result<usize> {
                if v >= 0.0 && v.fract() == 0.0 && (v as usize) < n {
                    Ok(v as usize)
                } else {
                    Err(parse_err(path, *lineno, format!("invalid node id {v} for {n} nodes")))
                }
            };
            let (i, j) = (id(r[0])?, id(r[1])?);
            x[(i, j)] = r[2];
            seen[(i, j)] = 1;
        }
        for i in 0..n {
            for j in i + 1..n {
                let v = match (seen[(i, j)], seen[(j, i)]) {
                    (1, 1) => 0.5 * (x[(i, j)] + x[(j, i)]),
                    (1, _) => x[(i, j)],
                    (_, 1) => x[(j, i)],
                    _ => 0.0,
                };
                x[(i, j)] = v;
                x[(j, i)] = v;
            }
        }
    }
    if (0..n).any(|i| x[(i, i)] != 0.0) {
        warn!("{}: nonzero covariate diagonal set to zero", path.display());
        x.fill_diagonal(0.0);
    }
    Ok(x)
}

/// One label per line as "node label" (ids with the given offset) or just
/// "label" in node order.
pub fn read_labels(path: &Path, n: usize, offset: usize) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path, n, offset)
}

/// [`read_labels`] on text already in memory; `path` is used in messages.
pub fn parse_labels(text: &str, path: &Path, n: usize, offset: usize) -> Result<Vec<String>> {
    let mut out = vec![None; n];
    let mut next = 0;
    for (idx, line) in text.lines().enumerate() {
        let toks: Vec<&str> = tokens(content(line)).collect();
        let (node, label) = match toks.as_slice() {
            [] => continue,
            [label] => {
                next += 1;
                (next - 1, *label)
            }
            [id, label, ..] => {
                let id: usize = id.parse().map_err(|_| parse_err(path, idx + 1, format!("'{id}' is not a node id")))?;
                if id < offset {
                    return Err(parse_err(path, idx + 1, format!("node id {id} below base {offset}")));
                }
                (id - offset, *label)
            }
        };
        if node >= n {
            return Err(parse_err(path, idx + 1, format!("node {} out of range for {n} nodes", node + offset)));
        }
        out[node] = Some(label.to_string());
    }
    out.into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Config(format!("{}: no label for node {}", path.display(), i + offset))))
        .collect()
}

/// Maps string labels to `0..K` in order of first appearance.
pub fn encode_labels(labels: &[String]) -> Vec<usize> {
    let mut seen: Vec<&String> = Vec::new();
    labels
        .iter()
        .map(|l| match seen.iter().position(|s| *s == l) {
            Some(i) => i,
            None => {
                seen.push(l);
                seen.len() - 1
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionsMeta {
    pub beta_hat: f64,
    pub n: usize,
    pub k: usize,
}

/// Sidecar path holding `beta_hat` next to a positions CSV.
pub fn positions_sidecar(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes `node_id, z_1..z_k, alpha_hat[, label]` rows and a JSON
/// sidecar with `beta_hat`. Values use the shortest round-trip decimal
/// form, so reading them back is exact.
pub fn emit_positions(params: &Params, labels: Option<&[String]>, offset: usize, path: &Path) -> Result<()> {
    let (n, k) = (params.n(), params.k());
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::dim("labels", n, l.len()));
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["node_id".to_string()];
    header.extend((1..=k).map(|c| format!("z_{c}")));
    header.push("alpha_hat".into());
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..n {
        let mut rec = vec![(i + offset).to_string()];
        rec.extend((0..k).map(|c| params.z[(i, c)].to_string()));
        rec.push(params.alpha[i].to_string());
        if let Some(l) = labels {
            rec.push(l[i].clone());
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(&positions_sidecar(path), &PositionsMeta { beta_hat: params.beta, n, k })
}

/// Reads back what [`emit_positions`] wrote.
pub fn read_positions(path: &Path) -> Result<(Params, Option<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let k = header.iter().filter(|h| h.starts_with("z_")).count();
    let has_label = header.iter().any(|h| h == "label");
    let mut z_vals = Vec::new();
    let mut alpha = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| parse_err(path, row + 2, format!("bad number in column {}", c + 1)))
        };
        for c in 0..k {
            z_vals.push(num(1 + c)?);
        }
        alpha.push(num(1 + k)?);
        if has_label {
            labels.push(rec.get(2 + k).unwrap_or("").to_string());
        }
    }
    let meta: PositionsMeta = read_json(&positions_sidecar(path))?;
    let n = alpha.len();
    let params = Params {
        z: DMatrix::from_row_slice(n, k, &z_vals),
        alpha: DVector::from_vec(alpha),
        beta: meta.beta_hat,
    };
    Ok((params, has_label.then_some(labels)))
}

pub fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Parses `key = value` lines (`key value` and `key: value` also work).
/// Blank lines and `#` comments are skipped; keys are lowercased with `-`
/// folded to `_`.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = content(line);
        if line.is_empty() {
            continue;
        }
        let split = line.find(['=', ':']).or_else(|| line.find(char::is_whitespace));
        let Some(at) = split else {
            return Err(parse_err(path, idx + 1, format!("expected 'key = value', found '{line}'")));
        };
        let key = line[..at].trim().to_ascii_lowercase().replace('-', "_");
        let value = line[at + 1..].trim().trim_matches('"').to_string();
        if key.is_empty() || value.is_empty() {
            return Err(parse_err(path, idx + 1, format!("expected 'key = value', found '{line}'")));
        }
        out.insert(key, value);
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}
