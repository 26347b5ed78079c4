use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::UtilityOracle;
use crate::coalition::{Coalition, MAX_CLIENTS};
use crate::error::{Error, Result};

/// Utilities for some or all coalitions of `n` clients.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityTable {
    n: usize,
    entries: BTreeMap<Coalition, f64>,
}

impl UtilityTable {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_CLIENTS {
            return Err(Error::InvalidArgument(format!(
                "client count {n} outside 1..={MAX_CLIENTS}"
            )));
        }
        Ok(Self {
            n,
            entries: BTreeMap::new(),
        })
    }

    /// Complete table from utilities indexed by coalition bitmask.
    pub fn from_dense(n: usize, values: &[f64]) -> Result<Self> {
        let mut table = Self::new(n)?;
        if n >= 32 || values.len() != 1usize << n {
            return Err(Error::InvalidArgument(format!(
                "dense table for n = {n} needs 2^n values, got {}",
                values.len()
            )));
        }
        for (bits, &value) in values.iter().enumerate() {
            table.insert(Coalition::new(n, bits as u64)?, value)?;
        }
        Ok(table)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts or replaces a utility.
    pub fn insert(&mut self, coalition: Coalition, utility: f64) -> Result<Option<f64>> {
        if coalition.n() != self.n {
            return Err(Error::InvalidCoalition(format!(
                "{coalition} belongs to n = {}, table has n = {}",
                coalition.n(),
                self.n
            )));
        }
        if !utility.is_finite() {
            return Err(Error::Data(format!("utility of {coalition} is not finite")));
        }
        Ok(self.entries.insert(coalition, utility))
    }

    pub fn get(&self, coalition: &Coalition) -> Option<f64> {
        self.entries.get(coalition).copied()
    }

    /// True when every one of the `2^n` coalitions has a utility.
    pub fn is_complete(&self) -> bool {
        self.n < 64 && self.entries.len() as u64 == 1u64 << self.n
    }

    pub fn iter(&self) -> impl Iterator<Item = (Coalition, f64)> + '_ {
        self.entries.iter().map(|(c, u)| (*c, *u))
    }
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    n: usize,
    entries: Vec<TableRecord>,
}

#[derive(Serialize, Deserialize)]
struct TableRecord {
    coalition: String,
    utility: f64,
}

/// Oracle that looks utilities up in a [`UtilityTable`].
#[derive(Clone, Debug)]
pub struct TableOracle {
    table: UtilityTable,
}

impl TableOracle {
    pub fn table(&self) -> &UtilityTable {
        &self.table
    }
}

pub fn table_oracle(table: UtilityTable) -> Result<TableOracle> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("utility table is empty".into()));
    }
    Ok(TableOracle { table })
}

impl UtilityOracle for TableOracle {
    fn n(&self) -> usize {
        self.table.n
    }

    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        if coalition.n() != self.table.n {
            return Err(Error::MissingCoalition(format!(
                "{coalition} (table covers n = {})",
                self.table.n
            )));
        }
        self.table
            .get(&coalition)
            .ok_or_else(|| Error::MissingCoalition(coalition.to_string()))
    }
}

pub fn table_to_json(table: &UtilityTable) -> Result<String> {
    let file = TableFile {
        n: table.n,
        entries: table
            .iter()
            .map(|(coalition, utility)| TableRecord {
                coalition: coalition.to_string(),
                utility,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn table_from_json(text: &str) -> Result<UtilityTable> {
    let file: TableFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        context: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut table = UtilityTable::new(file.n).map_err(|e| Error::Parse {
        context: "field `n`".into(),
        message: e.to_string(),
    })?;
    for (idx, record) in file.entries.iter().enumerate() {
        let context = || format!("entries[{idx}] ({})", record.coalition);
        let coalition = Coalition::parse(file.n, &record.coalition).map_err(|e| Error::Parse {
            context: context(),
            message: e.to_string(),
        })?;
        let previous = table
            .insert(coalition, record.utility)
            .map_err(|e| Error::Parse {
                context: context(),
                message: e.to_string(),
            })?;
        if previous.is_some() {
            return Err(Error::Parse {
                context: context(),
                message: format!("duplicate coalition {coalition}"),
            });
        }
    }
    Ok(table)
}

pub fn save_table(table: &UtilityTable, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, table_to_json(table)?)?;
    Ok(())
}

pub fn load_table(path: impl AsRef<Path>) -> Result<UtilityTable> {
    table_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_client_table() -> UtilityTable {
        UtilityTable::from_dense(3, &[0.10, 0.50, 0.70, 0.80, 0.60, 0.90, 0.90, 0.96]).unwrap()
    }

    #[test]
    fn lookups() {
        let oracle = table_oracle(three_client_table()).unwrap();
        let pair = Coalition::parse(3, "{1,2}").unwrap();
        assert_eq!(oracle.evaluate(pair).unwrap(), 0.80);
        assert_eq!(oracle.evaluate(Coalition::empty(3)).unwrap(), 0.10);
        let wider = Coalition::parse(4, "{1,2,3,4}").unwrap();
        let err = oracle.evaluate(wider).unwrap_err();
        assert!(err.to_string().contains("{1,2,3,4}"), "{err}");
    }

    #[test]
    fn missing_entry_names_coalition() {
        let mut table = UtilityTable::new(3).unwrap();
        table.insert(Coalition::empty(3), 0.1).unwrap();
        let oracle = table_oracle(table).unwrap();
        let err = oracle.evaluate(Coalition::parse(3, "{2,3}").unwrap()).unwrap_err();
        assert!(matches!(err, Error::MissingCoalition(ref s) if s == "{2,3}"));
    }

    #[test]
    fn empty_table_rejected() {
        assert!(table_oracle(UtilityTable::new(2).unwrap()).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut table = UtilityTable::new(2).unwrap();
        assert!(table.insert(Coalition::empty(2), f64::NAN).is_err());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut table = three_client_table();
        table
            .insert(Coalition::parse(3, "{3}").unwrap(), 0.1 + 0.2)
            .unwrap();
        let back = table_from_json(&table_to_json(&table).unwrap()).unwrap();
        assert_eq!(back, table);
        assert!(back.is_complete());
    }

    #[test]
    fn duplicate_record_is_parse_error() {
        let text = r#"{"n": 2, "entries": [
            {"coalition": "{}", "utility": 0.0},
            {"coalition": "{1}", "utility": 0.5},
            {"coalition": "{1}", "utility": 0.6}
        ]}"#;
        let err = table_from_json(text).unwrap_err();
        match err {
            Error::Parse { context, message } => {
                assert!(context.contains("entries[2]"), "{context}");
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = table_from_json("{\"n\": 2,\n \"entries\": [ {\"coalition\": } ] }").unwrap_err();
        assert!(matches!(err, Error::Parse { ref context, .. } if context.starts_with("line 2")));
        let err = table_from_json(r#"{"n": 2, "entries": [{"coalition": "{3}", "utility": 1}]}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { ref context, .. } if context.contains("entries[0]")));
    }

    #[test]
    fn partial_table_is_incomplete() {
        let mut records = vec![r#"{"coalition": "{}", "utility": 0.05}"#.to_string()];
        for c in ["{1}", "{2}", "{3}", "{4}", "{1,2}", "{1,3}", "{1,4}", "{2,4}", "{3,4}"] {
            records.push(format!(r#"{{"coalition": "{c}", "utility": 0.5}}"#));
        }
        let text = format!(r#"{{"n": 4, "entries": [{}]}}"#, records.join(","));
        let table = table_from_json(&text).unwrap();
        assert_eq!(table.len(), 10);
        assert!(!table.is_complete());
    }
}
