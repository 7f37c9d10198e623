//! Plain-text results tables shared by the training, stats, and export
//! subcommands. One row per measurement, tab-separated, with `#` header
//! lines naming the condition and columns. Accuracies are written with
//! fixed precision so identical runs produce identical bytes.

use std::fs;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub condition: String,
    pub columns: Vec<String>,
    /// Mixed-type rows kept as strings except the final accuracy column.
    pub rows: Vec<(Vec<String>, f64)>,
}

impl ResultsTable {
    pub fn new(condition: &str, columns: &[&str]) -> Self {
        ResultsTable {
            condition: condition.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, keys: &[String], accuracy: f64) {
        assert_eq!(keys.len() + 1, self.columns.len(), "row arity");
        self.rows.push((keys.to_vec(), accuracy));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("# eegdec results v1\n");
        s.push_str(&format!("# condition = {}\n", self.condition));
        s.push_str(&format!("# columns = {}\n", self.columns.join("\t")));
        for (keys, acc) in &self.rows {
            for k in keys {
                s.push_str(k);
                s.push('\t');
            }
            s.push_str(&format!("{acc:.6}\n"));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.render()).map_err(|e| {
            CliError::Output(format!("writing {}: {e}", path.display()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Input(format!("reading {}: {e}", path.display()))
        })?;
        let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
        let mut condition = None;
        let mut columns: Vec<String> = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("condition =") {
                    condition = Some(v.trim().to_string());
                } else if let Some(v) = rest.strip_prefix("columns =") {
                    columns = v.trim().split('\t').map(|c| c.to_string()).collect();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if columns.is_empty() || fields.len() != columns.len() {
                return Err(bad(format!(
                    "line {line_no}: expected {} tab-separated fields, got {}",
                    columns.len(),
                    fields.len()
                )));
            }
            let acc: f64 = fields[fields.len() - 1]
                .parse()
                .map_err(|e| bad(format!("line {line_no}: bad accuracy: {e}")))?;
            let keys = fields[..fields.len() - 1]
                .iter()
                .map(|s| s.to_string())
                .collect();
            rows.push((keys, acc));
        }
        Ok(ResultsTable {
            condition: condition.ok_or_else(|| bad("missing condition header".into()))?,
            columns,
            rows,
        })
    }

    /// Rows keyed by the value in `key_col`, preserving file order of
    /// first appearance. Each key maps to its accuracies in file order.
    pub fn grouped(&self, key_col: usize) -> Vec<(String, Vec<f64>)> {
        let mut order: Vec<String> = Vec::new();
        let mut map: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
        for (keys, acc) in &self.rows {
            let k = keys[key_col].clone();
            if !map.contains_key(&k) {
                order.push(k.clone());
            }
            map.entry(k).or_default().push(*acc);
        }
        order
            .into_iter()
            .map(|k| {
                let v = map[&k].clone();
                (k, v)
            })
            .collect()
    }
}
