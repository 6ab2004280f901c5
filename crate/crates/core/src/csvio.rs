//! CSV conventions shared by every emitted table: a leading metadata comment
//! `# vispinn schema=<name> seed=<seed> version=<semver>`, a header row, and
//! floats printed with 17 significant digits so they parse back exactly.

use std::io::Write;

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn metadata_line(schema: &str, seed: &str) -> String {
    format!("# vispinn schema={schema} seed={seed} version={VERSION}")
}

/// 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes metadata, header and rows.
pub fn write_table<W: Write>(
    mut out: W,
    schema: &str,
    seed: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    writeln!(out, "{}", metadata_line(schema, seed))?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn table_to_string(
    schema: &str,
    seed: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<String> {
    let mut buf = Vec::new();
    write_table(&mut buf, schema, seed, header, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Parsed table: metadata fields, header and string records.
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn read_table(text: &str) -> Result<Table> {
    let metadata = text
        .lines()
        .find(|l| l.starts_with('#'))
        .map(|l| {
            l.trim_start_matches('#')
                .split_whitespace()
                .filter_map(|kv| kv.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        })
        .unwrap_or_default();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok(Table {
        metadata,
        header,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_roundtrip_preserves_bits() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 123_456.789];
        let text = table_to_string(
            "demo",
            "7",
            &["a"],
            vals.iter().map(|v| vec![fmt_f64(*v)]),
        )
        .unwrap();
        assert!(text.starts_with("# vispinn schema=demo seed=7 version="));
        let t = read_table(&text).unwrap();
        assert_eq!(t.meta("schema"), Some("demo"));
        assert_eq!(t.header, vec!["a"]);
        for (row, v) in t.rows.iter().zip(vals) {
            assert_eq!(row[0].parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
