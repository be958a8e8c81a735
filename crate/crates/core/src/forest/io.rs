//! Plain-text model files.
//!
//! ```text
//! lmtune-forest 1
//! hyperparams num_trees=20 features_per_node=4 max_depth=none min_samples_leaf=1 bootstrap=true seed=1
//! schema reuse_degree,lmem_bytes,...
//! tree 0
//! node 2 0.5
//! leaf -0.25
//! leaf 1.5
//! end
//! ```
//!
//! Nodes are listed in pre-order. Floats use the shortest representation
//! that parses back to the same bits.

use std::fmt::Write as _;
use std::path::Path;

use crate::access::NUM_FEATURES;
use crate::error::{Error, Result};

use super::{Forest, Hyperparams, Node, Tree};

const MAGIC: &str = "lmtune-forest";
const VERSION: u32 = 1;

pub fn to_text(forest: &Forest) -> String {
    let hp = &forest.hyperparams;
    let mut s = format!("{MAGIC} {VERSION}\n");
    let depth = hp.max_depth.map_or_else(|| "none".to_string(), |d| d.to_string());
    let _ = writeln!(
        s,
        "hyperparams num_trees={} features_per_node={} max_depth={depth} min_samples_leaf={} bootstrap={} seed={}",
        hp.num_trees, hp.features_per_node, hp.min_samples_leaf, hp.bootstrap, hp.seed
    );
    let _ = writeln!(s, "schema {}", forest.schema.join(","));
    for (t, tree) in forest.trees.iter().enumerate() {
        let _ = writeln!(s, "tree {t}");
        for node in &tree.nodes {
            let _ = match node {
                Node::Split { feature, threshold, .. } => writeln!(s, "node {feature} {threshold}"),
                Node::Leaf { value } => writeln!(s, "leaf {value}"),
            };
        }
    }
    s.push_str("end\n");
    s
}

pub fn save(forest: &Forest, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(forest)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Forest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|(line, message)| Error::Malformed { path: path.to_path_buf(), line, message })
}

type ParseResult<T> = std::result::Result<T, (u64, String)>;

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: u64,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> ParseResult<(u64, &'a str)> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i as u64 + 1;
                Ok((self.last, l.trim_end()))
            }
            None => Err((self.last + 1, format!("unexpected end of file, expected {what}"))),
        }
    }
}

fn parse_hyperparams(line: u64, rest: &str) -> ParseResult<Hyperparams> {
    let mut hp = Hyperparams::default();
    let mut seen = [false; 6];
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or((line, format!("expected key=value, found `{kv}`")))?;
        let bad = || (line, format!("bad value `{v}` for {k}"));
        let slot = match k {
            "num_trees" => {
                hp.num_trees = v.parse().map_err(|_| bad())?;
                0
            }
            "features_per_node" => {
                hp.features_per_node = v.parse().map_err(|_| bad())?;
                1
            }
            "max_depth" => {
                hp.max_depth = if v == "none" { None } else { Some(v.parse().map_err(|_| bad())?) };
                2
            }
            "min_samples_leaf" => {
                hp.min_samples_leaf = v.parse().map_err(|_| bad())?;
                3
            }
            "bootstrap" => {
                hp.bootstrap = v.parse().map_err(|_| bad())?;
                4
            }
            "seed" => {
                hp.seed = v.parse().map_err(|_| bad())?;
                5
            }
            _ => return Err((line, format!("unknown hyperparameter `{k}`"))),
        };
        seen[slot] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err((line, "hyperparams line is incomplete".into()));
    }
    hp.validate().map_err(|e| (line, e.to_string()))?;
    Ok(hp)
}

fn parse_tree(lines: &mut Lines<'_>, t: usize) -> ParseResult<Tree> {
    let mut nodes = Vec::new();
    // Splits on the current path, with whether their left subtree is done.
    let mut open: Vec<(usize, bool)> = Vec::new();
    loop {
        let k = nodes.len();
        let (line, text) = lines.next(&format!("node {k} of tree {t}"))?;
        let at = |msg: String| (line, format!("tree {t} node {k}: {msg}"));
        let mut parts = text.split_whitespace();
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("node"), Some(f), Some(thr), None) => {
                let feature: usize = f.parse().map_err(|_| at(format!("bad feature index `{f}`")))?;
                if feature >= NUM_FEATURES {
                    return Err(at(format!("feature index {feature} out of range 0..{NUM_FEATURES}")));
                }
                let threshold: f64 = thr.parse().map_err(|_| at(format!("bad threshold `{thr}`")))?;
                if !threshold.is_finite() {
                    return Err(at(format!("threshold {threshold} is not finite")));
                }
                nodes.push(Node::Split { feature, threshold, right: 0 });
                open.push((k, false));
            }
            (Some("leaf"), Some(v), None, None) => {
                let value: f64 = v.parse().map_err(|_| at(format!("bad leaf value `{v}`")))?;
                if !value.is_finite() {
                    return Err(at(format!("leaf value {value} is not finite")));
                }
                nodes.push(Node::Leaf { value });
                loop {
                    match open.last_mut() {
                        None => return Ok(Tree { nodes }),
                        Some((_, true)) => {
                            open.pop();
                        }
                        Some((parent, left_done)) => {
                            *left_done = true;
                            let next = nodes.len();
                            if let Node::Split { right, .. } = &mut nodes[*parent] {
                                *right = next;
                            }
                            break;
                        }
                    }
                }
            }
            _ => return Err(at(format!("expected `node <feature> <threshold>` or `leaf <value>`, found `{text}`"))),
        }
    }
}

pub fn parse(text: &str) -> ParseResult<Forest> {
    let mut lines = Lines { inner: text.lines().enumerate().peekable(), last: 0 };
    let (line, header) = lines.next("header")?;
    let mut h = header.split_whitespace();
    if h.next() != Some(MAGIC) {
        return Err((line, format!("not a model file (expected `{MAGIC}` header)")));
    }
    match h.next().map(str::parse::<u32>) {
        Some(Ok(VERSION)) => {}
        _ => return Err((line, format!("unsupported model version, expected {VERSION}"))),
    }
    let (line, text) = lines.next("hyperparams")?;
    let rest = text.strip_prefix("hyperparams ").ok_or((line, "expected hyperparams line".to_string()))?;
    let hyperparams = parse_hyperparams(line, rest)?;
    let (line, text) = lines.next("schema")?;
    let schema_text = text.strip_prefix("schema ").ok_or((line, "expected schema line".to_string()))?;
    let schema: Vec<String> = schema_text.split(',').map(str::to_string).collect();

    let mut trees = Vec::new();
    loop {
        let (line, text) = lines.next("tree or end")?;
        if text == "end" {
            break;
        }
        let expected = format!("tree {}", trees.len());
        if text != expected {
            return Err((line, format!("expected `{expected}`, found `{text}`")));
        }
        trees.push(parse_tree(&mut lines, trees.len())?);
    }
    if let Some((i, l)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err((i as u64 + 1, format!("trailing content after end: `{l}`")));
    }
    if trees.is_empty() {
        return Err((lines.last, "model has no trees".into()));
    }
    if trees.len() != hyperparams.num_trees {
        return Err((lines.last, format!("{} trees present, header says {}", trees.len(), hyperparams.num_trees)));
    }
    let forest = Forest { trees, hyperparams, schema };
    forest.check_schema().map_err(|e| (3, e.to_string()))?;
    Ok(forest)
}
