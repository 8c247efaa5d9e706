//! Dataset CSV: a header of variable names followed by `regime`, then one
//! row per unit with `0`/`1` values and the regime label.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::graph::{is_valid_name, REGIME_COLUMN};
use crate::scm::{Dataset, Regime};

pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = dataset.columns().iter().map(String::as_str).collect();
    header.push(REGIME_COLUMN);
    w.write_record(&header)?;
    for (row, label) in dataset.rows().iter().zip(dataset.regime_labels()) {
        let mut record: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        record.push(label);
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn dataset_to_string(dataset: &Dataset) -> String {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is ascii")
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    let n = header.len();
    if n == 0 || &header[n - 1] != REGIME_COLUMN {
        return Err(Error::Csv(format!("last header column must be `{REGIME_COLUMN}`")));
    }
    let columns: Vec<String> = header.iter().take(n - 1).map(str::to_string).collect();
    for (i, c) in columns.iter().enumerate() {
        if !is_valid_name(c) {
            return Err(Error::Csv(format!("invalid column name `{c}`")));
        }
        if columns[..i].contains(c) {
            return Err(Error::Csv(format!("duplicate column `{c}`")));
        }
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != n {
            return Err(Error::Csv(format!("line {line}: expected {n} fields, found {}", record.len())));
        }
        let row = record
            .iter()
            .take(n - 1)
            .map(|f| match f {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(Error::Csv(format!("line {line}: value `{f}` is not 0 or 1"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        let label = &record[n - 1];
        let regime = Regime::parse_label(label).map_err(|_| Error::Csv(format!("line {line}: bad regime label `{label}`")))?;
        for v in regime.clamps().keys() {
            if !columns.contains(v) {
                return Err(Error::Csv(format!("line {line}: regime names unknown column `{v}`")));
            }
        }
        rows.push(row);
        labels.push(label.to_string());
    }
    Dataset::from_rows(columns, rows, labels)
}

pub fn dataset_from_str(text: &str) -> Result<Dataset> {
    read_dataset(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let d = Dataset::from_rows(
            vec!["a".into(), "b".into()],
            vec![vec![true, false], vec![false, false]],
            vec!["natural".into(), "a=1,b=0".into()],
        )
        .unwrap();
        let text = dataset_to_string(&d);
        assert_eq!(text, "a,b,regime\n1,0,natural\n0,0,\"a=1,b=0\"\n");
        assert_eq!(dataset_from_str(&text).unwrap(), d);
    }

    #[test]
    fn strict_values() {
        assert!(dataset_from_str("a,regime\n2,natural\n").is_err());
        assert!(dataset_from_str("a,regime\ntrue,natural\n").is_err());
        assert!(dataset_from_str("a,b\n1,0\n").is_err());
        assert!(dataset_from_str("a,regime\n1,a=2\n").is_err());
        assert!(dataset_from_str("a,regime\n1,c=0\n").is_err());
        assert!(dataset_from_str("a,a,regime\n1,1,natural\n").is_err());
        assert!(dataset_from_str("a,regime\n1\n").is_err());
        assert_eq!(dataset_from_str("a,regime\n").unwrap().len(), 0);
    }
}
