//! Typed tabular data: schema files, CSV loading, and per-node views.

use std::collections::BTreeSet;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeKind, Pdag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Binary,
    Categorical,
    Continuous,
}

impl ColumnType {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "binary" => Some(ColumnType::Binary),
            "categorical" => Some(ColumnType::Categorical),
            "continuous" => Some(ColumnType::Continuous),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Binary => "binary",
            ColumnType::Categorical => "categorical",
            ColumnType::Continuous => "continuous",
        }
    }

    pub fn is_discrete(self) -> bool {
        self != ColumnType::Continuous
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sensitive,
    Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnType,
    pub role: Option<Role>,
}

/// One `name:type[:role]` line per column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns: Vec<ColumnSpec> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(':').map(str::trim).collect();
            let bad = |m: &str| Error::Schema(format!("line {}: {m}", lineno + 1));
            if parts.len() < 2 || parts.len() > 3 || parts[0].is_empty() {
                return Err(bad("expected `name:type[:role]`"));
            }
            let kind = ColumnType::parse(parts[1])
                .ok_or_else(|| bad(&format!("unknown column type `{}`", parts[1])))?;
            let role = match parts.get(2) {
                None => None,
                Some(&"sensitive") => Some(Role::Sensitive),
                Some(&"outcome") => Some(Role::Outcome),
                Some(other) => return Err(bad(&format!("unknown role `{other}`"))),
            };
            if columns.iter().any(|c| c.name == parts[0]) {
                return Err(bad(&format!("duplicate column `{}`", parts[0])));
            }
            columns.push(ColumnSpec {
                name: parts[0].to_string(),
                kind,
                role,
            });
        }
        if columns.is_empty() {
            return Err(Error::Schema("schema declares no columns".into()));
        }
        Ok(Schema { columns })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.columns {
            out.push_str(&c.name);
            out.push(':');
            out.push_str(c.kind.as_str());
            match c.role {
                Some(Role::Sensitive) => out.push_str(":sensitive"),
                Some(Role::Outcome) => out.push_str(":outcome"),
                None => {}
            }
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnType,
    /// Binary columns hold 0/1, categorical columns the index into `levels`.
    pub values: Vec<f64>,
    pub levels: Vec<String>,
}

impl Column {
    pub fn continuous(name: &str, values: Vec<f64>) -> Self {
        Column {
            name: name.to_string(),
            kind: ColumnType::Continuous,
            values,
            levels: Vec::new(),
        }
    }

    pub fn binary(name: &str, values: Vec<f64>) -> Self {
        Column {
            name: name.to_string(),
            kind: ColumnType::Binary,
            values,
            levels: Vec::new(),
        }
    }

    fn format_value(&self, v: f64) -> String {
        match self.kind {
            ColumnType::Continuous => format!("{v}"),
            ColumnType::Binary => format!("{}", v as u8),
            ColumnType::Categorical => self.levels[v as usize].clone(),
        }
    }
}

/// A table of typed columns with no missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    rows: usize,
    /// Rows with missing cells dropped while loading.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "?")
}

impl Dataset {
    pub fn from_columns(columns: Vec<Column>) -> Result<Self> {
        let rows = columns.first().map(|c| c.values.len()).unwrap_or(0);
        if columns.iter().any(|c| c.values.len() != rows) {
            return Err(Error::Data("columns have different lengths".into()));
        }
        Ok(Dataset {
            columns,
            rows,
            dropped_rows: 0,
        })
    }

    pub fn load(path: &FsPath, schema: &Schema) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, schema)
    }

    pub fn from_csv_str(text: &str, schema: &Schema) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut positions = Vec::with_capacity(schema.columns.len());
        for spec in &schema.columns {
            let pos = header.iter().position(|h| *h == spec.name).ok_or_else(|| {
                Error::Schema(format!("column `{}` missing from data header", spec.name))
            })?;
            positions.push(pos);
        }
        if let Some(extra) = header.iter().find(|h| schema.column(h).is_none()) {
            return Err(Error::Schema(format!(
                "data column `{extra}` not declared in schema"
            )));
        }

        let mut raw: Vec<Vec<String>> = vec![Vec::new(); schema.columns.len()];
        let mut dropped = 0;
        let mut lines = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::DataCell {
                line,
                column: String::new(),
                message: e.to_string(),
            })?;
            let cells: Vec<&str> = positions
                .iter()
                .map(|&p| record.get(p).unwrap_or(""))
                .collect();
            if cells.iter().any(|c| is_missing(c)) {
                dropped += 1;
                continue;
            }
            for (k, c) in cells.iter().enumerate() {
                raw[k].push(c.to_string());
            }
            lines.push(line);
        }
        if lines.is_empty() {
            return Err(Error::Data("dataset has no complete rows".into()));
        }

        let mut columns = Vec::with_capacity(schema.columns.len());
        for (spec, cells) in schema.columns.iter().zip(raw) {
            let cell_error = |row: usize, message: String| Error::DataCell {
                line: lines[row],
                column: spec.name.clone(),
                message,
            };
            let column = match spec.kind {
                ColumnType::Continuous => {
                    let mut values = Vec::with_capacity(cells.len());
                    for (r, c) in cells.iter().enumerate() {
                        let v: f64 = c
                            .parse()
                            .map_err(|_| cell_error(r, format!("`{c}` is not a number")))?;
                        if !v.is_finite() {
                            return Err(cell_error(r, format!("`{c}` is not finite")));
                        }
                        values.push(v);
                    }
                    Column::continuous(&spec.name, values)
                }
                ColumnType::Binary => {
                    let mut values = Vec::with_capacity(cells.len());
                    for (r, c) in cells.iter().enumerate() {
                        let v = match c.parse::<f64>() {
                            Ok(v) if v == 0.0 || v == 1.0 => v,
                            _ => return Err(cell_error(r, format!("`{c}` is not 0 or 1"))),
                        };
                        values.push(v);
                    }
                    Column::binary(&spec.name, values)
                }
                ColumnType::Categorical => {
                    let levels: Vec<String> = cells
                        .iter()
                        .cloned()
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    let values = cells
                        .iter()
                        .map(|c| levels.binary_search(c).expect("level present") as f64)
                        .collect();
                    Column {
                        name: spec.name.clone(),
                        kind: ColumnType::Categorical,
                        values,
                        levels,
                    }
                }
            };
            columns.push(column);
        }
        Ok(Dataset {
            columns,
            rows: lines.len(),
            dropped_rows: dropped,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn schema(&self) -> Schema {
        Schema {
            columns: self
                .columns
                .iter()
                .map(|c| ColumnSpec {
                    name: c.name.clone(),
                    kind: c.kind,
                    role: None,
                })
                .collect(),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    values: rows.iter().map(|&r| c.values[r]).collect(),
                    ..c.clone()
                })
                .collect(),
            rows: rows.len(),
            dropped_rows: 0,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(self.columns.iter().map(|c| c.name.as_str()))
            .expect("in-memory write");
        for r in 0..self.rows {
            writer
                .write_record(self.columns.iter().map(|c| c.format_value(c.values[r])))
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Columns aligned with the nodes of a graph. The prediction node has no column.
#[derive(Clone, Debug)]
pub struct NodeData {
    rows: usize,
    values: Vec<Option<Vec<f64>>>,
    kinds: Vec<Option<ColumnType>>,
    levels: Vec<usize>,
    sensitive: NodeId,
    outcome: Option<NodeId>,
}

impl NodeData {
    /// Binds dataset columns to graph nodes by name. Every feature and the
    /// sensitive attribute need a column; the outcome is optional.
    pub fn from_dataset(graph: &Pdag, data: &Dataset) -> Result<Self> {
        let n = graph.node_count();
        let mut values = vec![None; n];
        let mut kinds = vec![None; n];
        let mut levels = vec![0; n];
        for node in graph.nodes() {
            if node.kind == NodeKind::Prediction {
                continue;
            }
            let Some(col) = data.column(&node.name) else {
                match node.kind {
                    NodeKind::Outcome => continue,
                    _ => {
                        return Err(Error::Schema(format!(
                            "no data column for graph node `{}`",
                            node.name
                        )))
                    }
                }
            };
            let binary_only = matches!(node.kind, NodeKind::Sensitive | NodeKind::Outcome);
            if binary_only && col.kind != ColumnType::Binary {
                return Err(Error::Schema(format!(
                    "{} column `{}` must be binary, found {}",
                    node.kind.as_str(),
                    node.name,
                    col.kind.as_str()
                )));
            }
            values[node.id.0] = Some(col.values.clone());
            kinds[node.id.0] = Some(col.kind);
            levels[node.id.0] = match col.kind {
                ColumnType::Categorical => col.levels.len(),
                _ => 2,
            };
        }
        let outcome = graph.outcome().filter(|y| kinds[y.0].is_some());
        Ok(NodeData {
            rows: data.rows(),
            values,
            kinds,
            levels,
            sensitive: graph.sensitive(),
            outcome,
        })
    }

    /// Continuous columns given directly by node; `None` for nodes without data.
    pub fn from_node_columns(graph: &Pdag, columns: Vec<Option<Vec<f64>>>) -> Result<Self> {
        let mut cols = Vec::new();
        for node in graph.nodes() {
            if let Some(values) = &columns[node.id.0] {
                let kind = match node.kind {
                    NodeKind::Sensitive | NodeKind::Outcome => {
                        Column::binary(&node.name, values.clone())
                    }
                    _ => Column::continuous(&node.name, values.clone()),
                };
                cols.push(kind);
            }
        }
        Self::from_dataset(graph, &Dataset::from_columns(cols)?)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn column(&self, node: NodeId) -> Option<&[f64]> {
        self.values[node.0].as_deref()
    }

    pub fn value(&self, node: NodeId, row: usize) -> f64 {
        self.values[node.0].as_ref().expect("node has data")[row]
    }

    pub fn kind(&self, node: NodeId) -> Option<ColumnType> {
        self.kinds[node.0]
    }

    /// Number of categories of a discrete node.
    pub fn levels(&self, node: NodeId) -> usize {
        self.levels[node.0]
    }

    pub fn sensitive(&self, row: usize) -> f64 {
        self.value(self.sensitive, row)
    }

    pub fn sensitive_node(&self) -> NodeId {
        self.sensitive
    }

    pub fn outcome(&self, row: usize) -> Option<f64> {
        self.outcome.map(|y| self.value(y, row))
    }

    pub fn has_outcome(&self) -> bool {
        self.outcome.is_some()
    }

    /// Columns used in model inputs: one per continuous or binary node,
    /// `levels - 1` reference-dropped indicators per categorical node.
    pub fn width(&self, node: NodeId) -> usize {
        match self.kinds[node.0] {
            Some(ColumnType::Categorical) => self.levels[node.0] - 1,
            _ => 1,
        }
    }

    pub fn encode_value(&self, node: NodeId, value: f64, out: &mut Vec<f64>) {
        match self.kinds[node.0] {
            Some(ColumnType::Categorical) => {
                let k = value as usize;
                for level in 1..self.levels[node.0] {
                    out.push(if level == k { 1.0 } else { 0.0 });
                }
            }
            _ => out.push(value),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> NodeData {
        NodeData {
            rows: rows.len(),
            values: self
                .values
                .iter()
                .map(|c| c.as_ref().map(|v| rows.iter().map(|&r| v[r]).collect()))
                .collect(),
            kinds: self.kinds.clone(),
            levels: self.levels.clone(),
            sensitive: self.sensitive,
            outcome: self.outcome,
        }
    }

    /// `(node, values, is_discrete)` for every node with data.
    pub fn ci_columns(&self) -> Vec<(NodeId, Vec<f64>, bool)> {
        (0..self.values.len())
            .filter_map(|i| {
                let v = self.values[i].clone()?;
                Some((NodeId(i), v, self.kinds[i]?.is_discrete()))
            })
            .collect()
    }

    /// Replace one node's column, keeping its type.
    pub fn with_column(&self, node: NodeId, values: Vec<f64>) -> NodeData {
        let mut out = self.clone();
        out.values[node.0] = Some(values);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::G1;

    const SCHEMA: &str =
        "A:binary:sensitive\nX1:continuous\nX2:categorical\nX3:continuous\nY:binary:outcome\n";

    #[test]
    fn parses_schema_and_round_trips() {
        let s = Schema::parse(SCHEMA).unwrap();
        assert_eq!(s.columns.len(), 5);
        assert_eq!(s.columns[0].role, Some(Role::Sensitive));
        assert_eq!(Schema::parse(&s.to_text()).unwrap(), s);
        assert!(Schema::parse("A:integer").is_err());
        assert!(Schema::parse("A:binary\nA:binary").is_err());
    }

    #[test]
    fn loads_csv_and_drops_missing_rows() {
        let s = Schema::parse(SCHEMA).unwrap();
        let csv = "A,X1,X2,X3,Y\n0,1.5,red,0.1,1\n1,,blue,0.2,0\n1,-2,blue,0.3,0\n";
        let d = Dataset::from_csv_str(csv, &s).unwrap();
        assert_eq!(d.rows(), 2);
        assert_eq!(d.dropped_rows, 1);
        let x2 = d.column("X2").unwrap();
        assert_eq!(x2.levels, vec!["blue", "red"]);
        assert_eq!(x2.values, vec![1.0, 0.0]);
        let again = Dataset::from_csv_str(&d.to_csv_string(), &s).unwrap();
        assert_eq!(again.column("X1").unwrap().values, vec![1.5, -2.0]);
    }

    #[test]
    fn type_errors_name_line_and_column() {
        let s = Schema::parse(SCHEMA).unwrap();
        let csv = "A,X1,X2,X3,Y\n0,1.5,red,0.1,1\n2,1,red,0.1,1\n";
        match Dataset::from_csv_str(csv, &s) {
            Err(Error::DataCell { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "A");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Dataset::from_csv_str("A,X1,X2,X3,Y\n", &s),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn node_data_requires_binary_sensitive_column() {
        let g = Pdag::parse(G1).unwrap();
        let s =
            Schema::parse("A:continuous\nX1:continuous\nX2:continuous\nX3:continuous\n").unwrap();
        let d = Dataset::from_csv_str("A,X1,X2,X3\n0.5,1,2,3\n", &s).unwrap();
        assert!(matches!(
            NodeData::from_dataset(&g, &d),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn categorical_encoding_drops_reference_level() {
        let g = Pdag::parse(G1).unwrap();
        let s = Schema::parse(SCHEMA).unwrap();
        let csv = "A,X1,X2,X3,Y\n0,1,a,0,1\n1,2,b,0,0\n1,3,c,0,0\n";
        let d = Dataset::from_csv_str(csv, &s).unwrap();
        let nd = NodeData::from_dataset(&g, &d).unwrap();
        let x2 = g.node_by_name("X2").unwrap();
        assert_eq!(nd.width(x2), 2);
        let mut out = Vec::new();
        nd.encode_value(x2, 0.0, &mut out);
        nd.encode_value(x2, 2.0, &mut out);
        assert_eq!(out, vec![0.0, 0.0, 0.0, 1.0]);
        assert!(nd.has_outcome());
    }
}
