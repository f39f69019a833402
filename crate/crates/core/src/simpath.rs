//! Meta-path parsing, commuting matrices and PathSim similarity.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hin::{HinGraph, NodeType, Schema};
use crate::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    User,
    Item,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::User => "user",
            Side::Item => "item",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(Side::User),
            "item" => Ok(Side::Item),
            other => Err(Error::Config(format!("unknown side `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub relation: String,
    pub transposed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaPath {
    pub label: String,
    pub steps: Vec<Step>,
    pub endpoint: NodeType,
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Resolves a node-type letter sequence such as `UIBIU` into relation steps.
///
/// The expression must have odd length of at least three and read the same
/// in both directions, so the commuting matrix is square and symmetric.
pub fn parse_metapath(expr: &str, schema: &Schema) -> Result<MetaPath> {
    let fail = |reason: String| Error::MetaPath {
        expr: expr.to_string(),
        reason,
    };
    let types: Vec<NodeType> = expr.chars().collect();
    if types.len() < 3 {
        return Err(fail("needs at least three node types".into()));
    }
    if types.len() % 2 == 0 {
        return Err(fail("even-length meta-path".into()));
    }
    if types.iter().ne(types.iter().rev()) {
        return Err(fail("non-palindromic meta-path".into()));
    }
    if let Some(t) = types.iter().find(|t| !schema.has_node_type(**t)) {
        return Err(fail(format!("unknown node type `{t}`")));
    }

    let mut steps = Vec::with_capacity(types.len() - 1);
    for pair in types.windows(2) {
        let candidates = schema.relations_between(pair[0], pair[1]);
        match candidates.as_slice() {
            [] => {
                return Err(fail(format!(
                    "no relation between `{}` and `{}`",
                    pair[0], pair[1]
                )))
            }
            [(def, transposed)] => steps.push(Step {
                relation: def.label.clone(),
                transposed: *transposed,
            }),
            _ => {
                return Err(fail(format!(
                    "ambiguous relation between `{}` and `{}`",
                    pair[0], pair[1]
                )))
            }
        }
    }
    Ok(MetaPath {
        label: expr.to_string(),
        steps,
        endpoint: types[0],
    })
}

/// Ordered product of the step matrices, evaluated left to right.
/// Entry `(a, b)` counts the path instances from `a` to `b`.
pub fn commuting_matrix(graph: &HinGraph, path: &MetaPath) -> Result<SparseMatrix> {
    let mut steps = path.steps.iter();
    let first = steps
        .next()
        .ok_or_else(|| Error::DimensionMismatch(format!("meta-path `{path}` has no steps")))?;
    let mut acc = graph.relation_matrix(&first.relation, first.transposed)?;
    for step in steps {
        let m = graph.relation_ref(&step.relation)?;
        acc = if step.transposed {
            acc.matmul(&m.transpose())?
        } else {
            acc.matmul(m)?
        };
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub aspect: String,
    pub side: Side,
    pub matrix: SparseMatrix,
}

/// PathSim: `2 M(a,b) / (M(a,a) + M(b,b))`, zero where the denominator is zero.
pub fn pathsim(commuting: &SparseMatrix) -> Result<SparseMatrix> {
    let (n, m) = commuting.shape();
    if n != m {
        return Err(Error::DimensionMismatch(format!(
            "PathSim needs a square commuting matrix, got {n}x{m}"
        )));
    }
    let diag = commuting.diagonal();
    Ok(commuting.map_values(|a, b, v| {
        if a == b {
            return if v > 0.0 { 1.0 } else { 0.0 };
        }
        let denom = diag[a] + diag[b];
        if denom > 0.0 {
            // Symmetric evaluation order keeps sim(a,b) == sim(b,a) bitwise.
            (2.0 * v) / denom
        } else {
            0.0
        }
    }))
}

impl SimilarityMatrix {
    pub fn from_commuting(aspect: &str, side: Side, commuting: &SparseMatrix) -> Result<Self> {
        Ok(SimilarityMatrix {
            aspect: aspect.to_string(),
            side,
            matrix: pathsim(commuting)?,
        })
    }

    pub fn compute(graph: &HinGraph, aspect: &str, side: Side, path: &MetaPath) -> Result<Self> {
        let commuting = commuting_matrix(graph, path)?;
        Self::from_commuting(aspect, side, &commuting)
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Dense similarity row of `node`; the raw MLP input for that node.
    pub fn similarity_row(&self, node: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n()];
        self.write_row(node, &mut out)?;
        Ok(out)
    }

    pub fn write_row(&self, node: usize, out: &mut [f64]) -> Result<()> {
        if node >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: node,
                len: self.n(),
            });
        }
        self.matrix.write_dense_row(node, out);
        Ok(())
    }

    /// Text format: header `aspect side n`, then one `row col value` line per
    /// stored entry in row-major order. Values carry 17 significant digits.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.aspect, self.side, self.n())?;
        for (r, c, v) in self.matrix.iter() {
            writeln!(w, "{r} {c} {v:.16e}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if self.aspect.is_empty() || self.aspect.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!(
                "aspect label `{}` must be a single non-empty token",
                self.aspect
            )));
        }
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read_from(r: impl BufRead, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))?
            .map_err(|e| Error::io(format!("reading {}", origin.display()), e))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [aspect, side, n] = fields.as_slice() else {
            return Err(parse_err(1, format!("bad header `{header}`")));
        };
        let side: Side = side
            .parse()
            .map_err(|e: Error| parse_err(1, e.to_string()))?;
        let n: usize = n
            .parse()
            .map_err(|_| parse_err(1, format!("bad dimension `{n}`")))?;

        let mut triplets = Vec::new();
        for (k, line) in lines.enumerate() {
            let lineno = k + 2;
            let line = line.map_err(|e| Error::io(format!("reading {}", origin.display()), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next())
            else {
                return Err(parse_err(
                    lineno,
                    format!("expected `row col value`, got `{line}`"),
                ));
            };
            let r: usize = r
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad row `{r}`")))?;
            let c: usize = c
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad col `{c}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad value `{v}`")))?;
            if r >= n || c >= n {
                return Err(parse_err(
                    lineno,
                    format!("entry ({r}, {c}) outside {n}x{n}"),
                ));
            }
            triplets.push((r, c, v));
        }
        Ok(SimilarityMatrix {
            aspect: aspect.to_string(),
            side,
            matrix: SparseMatrix::from_triplets(n, n, triplets)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_from(std::io::BufReader::new(file), path)
    }
}
