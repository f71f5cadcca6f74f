//! Plain-text file formats.
//!
//! Every format is UTF-8, one record per line, whitespace-separated fields.
//! Lines starting with `#` are comments unless they carry one of the
//! documented `key=value` headers. Writers emit a canonical form (sorted
//! records, headers only where the records alone would not determine the
//! shape), so loading and saving a canonical file reproduces it byte for byte.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use attrguard_core::classifier::{DifferentiableClassifier, LinearOva, Mlp};
use attrguard_core::graph::{BehaviorMatrix, BinaryLabels, LabelSet, MulticlassLabels, Sign, SocialGraph};
use attrguard_core::prior::BinaryLrModel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{message} at line {line}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] attrguard_core::Error),
}

impl FormatError {
    /// Validation failures (bad input) as opposed to numerical ones.
    pub fn is_validation(&self) -> bool {
        match self {
            FormatError::Core(e) => e.is_validation(),
            _ => true,
        }
    }
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| FormatError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

enum Line<'a> {
    Header(&'a str, &'a str),
    Record(Vec<&'a str>),
}

/// Numbered non-blank, non-comment lines plus `# key=value` headers.
fn lines(text: &str) -> impl Iterator<Item = (usize, Line<'_>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let t = raw.trim();
        if t.is_empty() {
            return None;
        }
        if let Some(comment) = t.strip_prefix('#') {
            let c = comment.trim();
            return c.split_once('=').filter(|(k, _)| !k.contains(char::is_whitespace)).map(|(k, v)| (i + 1, Line::Header(k, v.trim())));
        }
        Some((i + 1, Line::Record(t.split_whitespace().collect())))
    })
}

fn parse_num<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| parse_err(line, format!("invalid {what} '{field}'")))
}

fn parse_prob(line: usize, field: &str) -> Result<f64> {
    let v: f64 = parse_num(line, field, "value")?;
    if !(0.0..=1.0).contains(&v) {
        return Err(parse_err(line, format!("value out of range: {field} is not in [0, 1]")));
    }
    Ok(v)
}

fn expect_fields<'a>(line: usize, fields: &[&'a str], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(parse_err(line, format!("expected {n} fields, found {}", fields.len())));
    }
    Ok(())
}

fn header_count(line: usize, seen: &mut Option<usize>, key: &str, value: &str) -> Result<()> {
    if seen.is_some() {
        return Err(parse_err(line, format!("repeated '{key}' header")));
    }
    *seen = Some(parse_num(line, value, key)?);
    Ok(())
}

// ---------------------------------------------------------------- graph

/// Edge list `u v`. An optional `# nodes=N` header declares the node count,
/// which is how isolated nodes are expressed. Without it the node count is
/// `max id + 1` and every id below it must occur in some edge.
pub fn parse_graph(text: &str) -> Result<SocialGraph> {
    let mut declared = None;
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (line, l) in lines(text) {
        match l {
            Line::Header("nodes", v) => header_count(line, &mut declared, "nodes", v)?,
            Line::Header(..) => {}
            Line::Record(f) => {
                expect_fields(line, &f, 2)?;
                let u: usize = parse_num(line, f[0], "node id")?;
                let v: usize = parse_num(line, f[1], "node id")?;
                if u == v {
                    return Err(parse_err(line, "self-loop"));
                }
                if !seen.insert((u.min(v), u.max(v))) {
                    return Err(parse_err(line, format!("duplicate edge {u}-{v}")));
                }
                edges.push((line, u, v));
            }
        }
    }
    let node_count = match declared {
        Some(n) => {
            if let Some(&(line, u, v)) = edges.iter().find(|(_, u, v)| *u >= n || *v >= n) {
                return Err(parse_err(line, format!("dangling node id {} (header declares {n} nodes)", u.max(v))));
            }
            n
        }
        None => {
            let n = edges.iter().map(|(_, u, v)| u.max(v) + 1).max().unwrap_or(0);
            let mut present = vec![false; n];
            for &(_, u, v) in &edges {
                present[u] = true;
                present[v] = true;
            }
            if let Some(gap) = present.iter().position(|p| !p) {
                return Err(FormatError::Invalid(format!(
                    "node id {gap} never appears; ids must be dense or declared with '# nodes=N'"
                )));
            }
            n
        }
    };
    if node_count == 0 {
        return Err(FormatError::Invalid("graph has no nodes".into()));
    }
    Ok(SocialGraph::from_edges(node_count, edges.into_iter().map(|(_, u, v)| (u, v)))?)
}

pub fn write_graph(g: &SocialGraph) -> String {
    let mut out = String::new();
    if g.degrees().any(|d| d == 0) {
        let _ = writeln!(out, "# nodes={}", g.node_count());
    }
    for (u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn load_graph(path: &Path) -> Result<SocialGraph> {
    parse_graph(&read_text(path)?)
}

pub fn save_graph(path: &Path, g: &SocialGraph) -> Result<()> {
    write_text(path, &write_graph(g))
}

// ---------------------------------------------------------------- behaviors

/// Triplets `user object value` with values in `[0, 1]`. The optional header
/// `# users=U objects=O` fixes the shape; otherwise it is inferred from the
/// largest ids.
pub fn parse_behaviors(text: &str) -> Result<BehaviorMatrix> {
    let (mut users, mut objects) = (None, None);
    let mut triplets = Vec::new();
    let mut seen = HashSet::new();
    for (line, l) in lines(text) {
        match l {
            Line::Header(k, v) if k == "users" => {
                // `# users=U objects=O` arrives as key `users`, value `U objects=O`
                let (u, rest) = v.split_once(char::is_whitespace).unwrap_or((v, ""));
                header_count(line, &mut users, "users", u)?;
                if let Some(o) = rest.trim().strip_prefix("objects=") {
                    header_count(line, &mut objects, "objects", o.trim())?;
                }
            }
            Line::Header("objects", v) => header_count(line, &mut objects, "objects", v)?,
            Line::Header(..) => {}
            Line::Record(f) => {
                expect_fields(line, &f, 3)?;
                let u: usize = parse_num(line, f[0], "user id")?;
                let o: usize = parse_num(line, f[1], "object id")?;
                let v = parse_prob(line, f[2])?;
                if !seen.insert((u, o)) {
                    return Err(parse_err(line, format!("duplicate entry for user {u}, object {o}")));
                }
                if users.is_some_and(|n| u >= n) || objects.is_some_and(|n| o >= n) {
                    return Err(parse_err(line, format!("entry ({u}, {o}) lies outside the declared shape")));
                }
                triplets.push((u, o, v));
            }
        }
    }
    let users = users.unwrap_or_else(|| triplets.iter().map(|t| t.0 + 1).max().unwrap_or(0));
    let objects = objects.unwrap_or_else(|| triplets.iter().map(|t| t.1 + 1).max().unwrap_or(0));
    Ok(BehaviorMatrix::from_triplets(users, objects, triplets)?)
}

pub fn write_behaviors(b: &BehaviorMatrix) -> String {
    let mut out = String::new();
    let max_user = b.triplets().map(|t| t.0 + 1).max().unwrap_or(0);
    let max_object = b.triplets().map(|t| t.1 + 1).max().unwrap_or(0);
    if max_user != b.user_count() || max_object != b.object_count() {
        let _ = writeln!(out, "# users={} objects={}", b.user_count(), b.object_count());
    }
    for (u, o, v) in b.triplets() {
        let _ = writeln!(out, "{u} {o} {v}");
    }
    out
}

pub fn load_behaviors(path: &Path) -> Result<BehaviorMatrix> {
    parse_behaviors(&read_text(path)?)
}

pub fn save_behaviors(path: &Path, b: &BehaviorMatrix) -> Result<()> {
    write_text(path, &write_behaviors(b))
}

// ---------------------------------------------------------------- labels

/// `user label` lines. Labels written `+1`/`-1` make a binary set; plain
/// integers `1..=m` make a multiclass set, with `m` taken from an optional
/// `# classes=m` header or else the largest label.
pub fn parse_labels(text: &str) -> Result<LabelSet> {
    let mut classes = None;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (line, l) in lines(text) {
        match l {
            Line::Header("classes", v) => header_count(line, &mut classes, "classes", v)?,
            Line::Header(..) => {}
            Line::Record(f) => {
                expect_fields(line, &f, 2)?;
                let u: usize = parse_num(line, f[0], "user id")?;
                if !seen.insert(u) {
                    return Err(parse_err(line, format!("user {u} labeled twice")));
                }
                records.push((line, u, f[1]));
            }
        }
    }
    let signed = |s: &str| s.starts_with('+') || s.starts_with('-');
    let binary = records.iter().any(|r| signed(r.2));
    if binary {
        if let Some(line) = classes.and(records.first().map(|r| r.0)) {
            return Err(parse_err(line, "a '# classes' header cannot accompany +1/-1 labels"));
        }
        let mut out = Vec::with_capacity(records.len());
        for (line, u, lab) in records {
            let s = match lab {
                "+1" => Sign::Positive,
                "-1" => Sign::Negative,
                other => return Err(parse_err(line, format!("label out of range: '{other}' (binary labels are +1 or -1)"))),
            };
            out.push((u, s));
        }
        return Ok(LabelSet::Binary(BinaryLabels::new(out)));
    }
    let mut out = Vec::with_capacity(records.len());
    for &(line, u, lab) in &records {
        let c: usize = parse_num(line, lab, "label")?;
        if c == 0 || classes.is_some_and(|m| c > m) {
            return Err(parse_err(line, format!("label out of range: {c}")));
        }
        out.push((u, c - 1));
    }
    let m = classes.unwrap_or_else(|| out.iter().map(|(_, c)| c + 1).max().unwrap_or(0));
    Ok(LabelSet::Multiclass(MulticlassLabels::new(m, out)?))
}

pub fn write_labels(labels: &LabelSet) -> String {
    let mut out = String::new();
    match labels {
        LabelSet::Binary(b) => {
            let sorted: BTreeMap<usize, Sign> = b.iter().collect();
            for (u, s) in sorted {
                let _ = writeln!(out, "{u} {}", if s == Sign::Positive { "+1" } else { "-1" });
            }
        }
        LabelSet::Multiclass(m) => {
            let sorted: BTreeMap<usize, usize> = m.iter().collect();
            if sorted.values().map(|c| c + 1).max() != Some(m.classes()) {
                let _ = writeln!(out, "# classes={}", m.classes());
            }
            for (u, c) in sorted {
                let _ = writeln!(out, "{u} {}", c + 1);
            }
        }
    }
    out
}

pub fn load_labels(path: &Path) -> Result<LabelSet> {
    parse_labels(&read_text(path)?)
}

pub fn save_labels(path: &Path, labels: &LabelSet) -> Result<()> {
    write_text(path, &write_labels(labels))
}

pub fn load_binary_labels(path: &Path) -> Result<BinaryLabels> {
    match load_labels(path)? {
        LabelSet::Binary(b) => Ok(b),
        LabelSet::Multiclass(_) => Err(FormatError::Invalid(format!("{}: expected +1/-1 labels", path.display()))),
    }
}

pub fn load_multiclass_labels(path: &Path) -> Result<MulticlassLabels> {
    match load_labels(path)? {
        LabelSet::Multiclass(m) => Ok(m),
        LabelSet::Binary(_) => Err(FormatError::Invalid(format!("{}: expected integer labels 1..m", path.display()))),
    }
}

// ---------------------------------------------------------------- per-user values

/// `user value` lines covering users `0..n` exactly once, in any order.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let mut map = BTreeMap::new();
    for (line, l) in lines(text) {
        if let Line::Record(f) = l {
            expect_fields(line, &f, 2)?;
            let u: usize = parse_num(line, f[0], "user id")?;
            let v: f64 = parse_num(line, f[1], "value")?;
            if !v.is_finite() {
                return Err(parse_err(line, "value is not finite"));
            }
            if map.insert(u, v).is_some() {
                return Err(parse_err(line, format!("user {u} listed twice")));
            }
        }
    }
    if let Some((i, _)) = map.keys().enumerate().find(|(i, u)| i != *u) {
        return Err(FormatError::Invalid(format!("user {i} is missing")));
    }
    Ok(map.into_values().collect())
}

pub fn write_values(values: &[f64]) -> String {
    let mut out = String::new();
    for (u, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn load_values(path: &Path) -> Result<Vec<f64>> {
    parse_values(&read_text(path)?)
}

// ---------------------------------------------------------------- matrices

/// Whitespace-separated rows of numbers.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, l) in lines(text) {
        if let Line::Record(f) = l {
            let row = f.iter().map(|v| parse_num(line, v, "number")).collect::<Result<Vec<f64>>>()?;
            if rows.first().is_some_and(|r| r.len() != row.len()) {
                return Err(parse_err(line, format!("row has {} entries, expected {}", row.len(), rows[0].len())));
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn load_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    parse_matrix(&read_text(path)?)
}

// ---------------------------------------------------------------- models

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

struct Fields<'a> {
    entries: Vec<(usize, &'a str, Vec<&'a str>)>,
}

impl<'a> Fields<'a> {
    fn new(text: &'a str) -> Self {
        let entries = lines(text)
            .filter_map(|(line, l)| match l {
                Line::Record(f) => Some((line, f[0], f[1..].to_vec())),
                Line::Header(..) => None,
            })
            .collect();
        Fields { entries }
    }

    fn get(&self, key: &str) -> Result<(usize, &[&'a str])> {
        self.entries
            .iter()
            .find(|e| e.1 == key)
            .map(|e| (e.0, e.2.as_slice()))
            .ok_or_else(|| FormatError::Invalid(format!("model file lacks '{key}'")))
    }

    fn scalar<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (line, v) = self.get(key)?;
        expect_fields(line, v, 1)?;
        parse_num(line, v[0], key)
    }

    fn vector(&self, key: &str, len: usize) -> Result<Vec<f64>> {
        let (line, v) = self.get(key)?;
        expect_fields(line, v, len)?;
        v.iter().map(|s| parse_num(line, s, key)).collect()
    }

    fn rows(&self, key: &str, count: usize, len: usize) -> Result<Vec<Vec<f64>>> {
        (0..count).map(|i| self.vector(&format!("{key}[{i}]"), len)).collect()
    }

    fn kind(&self) -> Result<&'a str> {
        let (line, v) = self.get("kind")?;
        expect_fields(line, v, 1)?;
        Ok(v[0])
    }
}

/// ```text
/// kind binary-lr
/// object_count 3
/// l2 1
/// bias -0.25
/// weights 0.5 -1 2
/// ```
pub fn write_prior_model(m: &BinaryLrModel) -> String {
    format!(
        "kind binary-lr\nobject_count {}\nl2 {}\nbias {}\nweights {}\n",
        m.weights.len(),
        m.l2,
        m.bias,
        join(&m.weights)
    )
}

pub fn parse_prior_model(text: &str) -> Result<BinaryLrModel> {
    let f = Fields::new(text);
    if f.kind()? != "binary-lr" {
        return Err(FormatError::Invalid("not a binary-lr model".into()));
    }
    let n: usize = f.scalar("object_count")?;
    Ok(BinaryLrModel { weights: f.vector("weights", n)?, bias: f.scalar("bias")?, l2: f.scalar("l2")? })
}

pub fn load_prior_model(path: &Path) -> Result<BinaryLrModel> {
    parse_prior_model(&read_text(path)?)
}

/// Linear models list `bias` (one per class) and one `weights[i]` row per
/// class; networks list `w1[j]`/`b1` for the hidden layer and `w2[i]`/`b2`
/// for the class outputs.
pub fn write_classifier(clf: &DifferentiableClassifier) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "classes {}\nfeatures {}", clf.classes(), clf.features());
    match clf {
        DifferentiableClassifier::LinearOva(l) => {
            out.insert_str(0, "kind linear-ova\n");
            let _ = writeln!(out, "bias {}", join(&l.bias));
            for (i, w) in l.weights.iter().enumerate() {
                let _ = writeln!(out, "weights[{i}] {}", join(w));
            }
        }
        DifferentiableClassifier::Mlp(m) => {
            out.insert_str(0, "kind one-hidden-relu\n");
            let _ = writeln!(out, "hidden {}", m.b1.len());
            let _ = writeln!(out, "b1 {}", join(&m.b1));
            for (j, w) in m.w1.iter().enumerate() {
                let _ = writeln!(out, "w1[{j}] {}", join(w));
            }
            let _ = writeln!(out, "b2 {}", join(&m.b2));
            for (i, w) in m.w2.iter().enumerate() {
                let _ = writeln!(out, "w2[{i}] {}", join(w));
            }
        }
    }
    out
}

pub fn parse_classifier(text: &str) -> Result<DifferentiableClassifier> {
    let f = Fields::new(text);
    let m: usize = f.scalar("classes")?;
    let n: usize = f.scalar("features")?;
    match f.kind()? {
        "linear-ova" => Ok(DifferentiableClassifier::LinearOva(LinearOva { bias: f.vector("bias", m)?, weights: f.rows("weights", m, n)? })),
        "one-hidden-relu" => {
            let h: usize = f.scalar("hidden")?;
            Ok(DifferentiableClassifier::Mlp(Mlp {
                w1: f.rows("w1", h, n)?,
                b1: f.vector("b1", h)?,
                w2: f.rows("w2", m, h)?,
                b2: f.vector("b2", m)?,
            }))
        }
        other => Err(FormatError::Invalid(format!("unknown classifier kind '{other}'"))),
    }
}

pub fn load_classifier(path: &Path) -> Result<DifferentiableClassifier> {
    parse_classifier(&read_text(path)?)
}
