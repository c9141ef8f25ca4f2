//! Plain-text dataset formats.
//!
//! All formats are whitespace-separated, ignore blank lines and lines whose
//! first non-space character is `#`, and use 0-based node indices.
//!
//! | file     | layout                                                        |
//! |----------|---------------------------------------------------------------|
//! | edges    | `N E`, then `E` lines `u v`                                   |
//! | features | `N d`, then `N` lines of `d` floats                           |
//! | labels   | `N` lines, one class id each                                  |
//! | split    | sections headed `train`, `val`, `test`; one index per line    |
//! | graphs   | `graphs G`, then per graph `graph n e label split`, `n` token |
//! |          | lines (ids of that node) and `e` edge lines `u v`             |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{CsrGraph, NodeInput, NodeSplit, TokenRows};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Non-comment lines with their 1-based line numbers.
struct Lines {
    path: PathBuf,
    items: std::vec::IntoIter<(usize, String)>,
}

impl Lines {
    fn open(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let items: Vec<(usize, String)> = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let t = l.trim();
                (!t.is_empty() && !t.starts_with('#')).then(|| (i + 1, t.to_string()))
            })
            .collect();
        Ok(Lines {
            path: path.to_path_buf(),
            items: items.into_iter(),
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, String)> {
        self.items.next().ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn fields<T: FromStr>(&self, line: usize, text: &str, expect: Option<usize>) -> Result<Vec<T>> {
        let out = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<T>()
                    .map_err(|_| self.err(line, format!("cannot parse {tok:?}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(n) = expect {
            if out.len() != n {
                return Err(self.err(line, format!("expected {n} fields, found {}", out.len())));
            }
        }
        Ok(out)
    }

    fn pair(&mut self, what: &str) -> Result<(usize, usize, usize)> {
        let (line, text) = self.next_line(what)?;
        let v: Vec<usize> = self.fields(line, &text, Some(2))?;
        Ok((line, v[0], v[1]))
    }

    fn finish(mut self) -> Result<()> {
        match self.items.next() {
            Some((line, _)) => Err(self.err(line, "trailing content")),
            None => Ok(()),
        }
    }
}

fn check_node(u: usize, n: usize) -> Result<()> {
    if u >= n {
        return Err(Error::Range {
            what: "node",
            index: u,
            limit: n,
        });
    }
    Ok(())
}

/// Reads an edge list into a symmetric CSR graph.
///
/// Repeated edges collapse and explicit self-loops are dropped.
pub fn load_graph(path: impl AsRef<Path>) -> Result<CsrGraph> {
    let mut lines = Lines::open(path.as_ref())?;
    let (_, n, e) = lines.pair("header \"N E\"")?;
    let mut edges = Vec::with_capacity(e);
    for _ in 0..e {
        let (_, u, v) = lines.pair("edge line")?;
        check_node(u, n)?;
        check_node(v, n)?;
        edges.push((u, v));
    }
    lines.finish()?;
    CsrGraph::from_edges(n, &edges)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Matrix> {
    let mut lines = Lines::open(path.as_ref())?;
    let (_, n, d) = lines.pair("header \"N d\"")?;
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let (line, text) = lines.next_line("feature row")?;
        let row: Vec<f64> = lines.fields(line, &text, Some(d))?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(lines.err(line, "non-finite feature value"));
        }
        data.extend(row);
    }
    lines.finish()?;
    Matrix::from_vec(n, d, data)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let lines = Lines::open(path.as_ref())?;
    let items: Vec<(usize, String)> = lines.items.clone().collect();
    items
        .iter()
        .map(|(line, text)| Ok(lines.fields::<usize>(*line, text, Some(1))?[0]))
        .collect()
}

/// Reads a split file; a missing or empty section yields an empty mask.
pub fn load_split(path: impl AsRef<Path>, num_nodes: usize) -> Result<NodeSplit> {
    let mut lines = Lines::open(path.as_ref())?;
    let mut sections: [Vec<usize>; 3] = Default::default();
    let mut current: Option<usize> = None;
    while let Some((line, text)) = lines.items.next() {
        match text.as_str() {
            "train" => current = Some(0),
            "val" => current = Some(1),
            "test" => current = Some(2),
            _ => {
                let Some(c) = current else {
                    return Err(lines.err(line, "index before any section header"));
                };
                let v: Vec<usize> = lines.fields(line, &text, Some(1))?;
                sections[c].push(v[0]);
            }
        }
    }
    let [train, val, test] = sections;
    NodeSplit::from_indices(num_nodes, &train, &val, &test)
}

/// Which split a graph of a graph-classification dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphSplit {
    Train,
    Val,
    Test,
}

/// One member of a graph-classification dataset.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub graph: CsrGraph,
    pub tokens: TokenRows,
    pub label: usize,
    pub split: GraphSplit,
}

pub fn load_graph_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledGraph>> {
    let mut lines = Lines::open(path.as_ref())?;
    let (line, text) = lines.next_line("header \"graphs G\"")?;
    let count = match text.split_whitespace().collect::<Vec<_>>()[..] {
        ["graphs", g] => g
            .parse::<usize>()
            .map_err(|_| lines.err(line, "bad graph count"))?,
        _ => return Err(lines.err(line, "expected \"graphs G\"")),
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, text) = lines.next_line("graph header")?;
        let f: Vec<&str> = text.split_whitespace().collect();
        if f.len() != 5 || f[0] != "graph" {
            return Err(lines.err(line, "expected \"graph n e label split\""));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| lines.err(line, format!("cannot parse {s:?}")))
        };
        let (n, e, label) = (num(f[1])?, num(f[2])?, num(f[3])?);
        let split = match f[4] {
            "train" => GraphSplit::Train,
            "val" => GraphSplit::Val,
            "test" => GraphSplit::Test,
            other => return Err(lines.err(line, format!("unknown split {other:?}"))),
        };
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, text) = lines.next_line("token line")?;
            let ids: Vec<usize> = lines.fields(line, &text, None)?;
            rows.push(ids);
        }
        let mut edges = Vec::with_capacity(e);
        for _ in 0..e {
            let (_, u, v) = lines.pair("edge line")?;
            check_node(u, n)?;
            check_node(v, n)?;
            edges.push((u, v));
        }
        out.push(LabeledGraph {
            graph: CsrGraph::from_edges(n, &edges)?,
            tokens: TokenRows::new(&rows),
            label,
            split,
        });
    }
    lines.finish()?;
    Ok(out)
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_graph(path: impl AsRef<Path>, g: &CsrGraph) -> Result<()> {
    let mut s = format!("{} {}\n", g.num_nodes(), g.num_edges());
    for (u, v) in g.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    write(path.as_ref(), s)
}

/// Values are written with Rust's shortest round-trip formatting.
pub fn write_features(path: impl AsRef<Path>, x: &Matrix) -> Result<()> {
    let mut s = format!("{} {}\n", x.rows(), x.cols());
    for row in x.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    write(path.as_ref(), s)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut s = String::new();
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    write(path.as_ref(), s)
}

pub fn write_split(path: impl AsRef<Path>, split: &NodeSplit) -> Result<()> {
    let mut s = String::new();
    for (name, mask) in [
        ("train", &split.train_mask),
        ("val", &split.val_mask),
        ("test", &split.test_mask),
    ] {
        let _ = writeln!(s, "{name}");
        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            let _ = writeln!(s, "{i}");
        }
    }
    write(path.as_ref(), s)
}

pub fn write_graph_dataset(path: impl AsRef<Path>, graphs: &[LabeledGraph]) -> Result<()> {
    let mut s = format!("graphs {}\n", graphs.len());
    for g in graphs {
        let split = match g.split {
            GraphSplit::Train => "train",
            GraphSplit::Val => "val",
            GraphSplit::Test => "test",
        };
        let _ = writeln!(
            s,
            "graph {} {} {} {split}",
            g.graph.num_nodes(),
            g.graph.num_edges(),
            g.label
        );
        for i in 0..g.tokens.num_rows() {
            let ids: Vec<String> = g.tokens.row(i).iter().map(|t| t.to_string()).collect();
            let _ = writeln!(s, "{}", ids.join(" "));
        }
        for (u, v) in g.graph.edges() {
            let _ = writeln!(s, "{u} {v}");
        }
    }
    write(path.as_ref(), s)
}

impl From<LabeledGraph> for (CsrGraph, NodeInput, usize) {
    fn from(g: LabeledGraph) -> Self {
        (g.graph, NodeInput::Tokens(g.tokens), g.label)
    }
}
