//! Tables rendered as CSV or Markdown.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Cell text for a missing or undefined value.
pub const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.6}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), fmt_f64)
}

impl Table {
    pub fn new<S: Into<String>>(name: impl Into<String>, header: impl IntoIterator<Item = S>) -> Self {
        Table { name: name.into(), header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory csv");
        for r in &self.rows {
            w.write_record(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 cells")
    }

    pub fn to_markdown(&self) -> String {
        let esc = |s: &str| s.replace('|', "\\|");
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", self.header.iter().map(|h| esc(h)).collect::<Vec<_>>().join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.header.len()));
        for r in &self.rows {
            let _ = writeln!(out, "| {} |", r.iter().map(|c| esc(c)).collect::<Vec<_>>().join(" | "));
        }
        out
    }

    /// `<dir>/<name>.csv` led by a `# config_sha256=` line.
    pub fn write_csv(&self, dir: &Path, config_hash: &str) -> anyhow::Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        write_with_header(&path, &format!("# config_sha256={config_hash}\n"), &self.to_csv())?;
        Ok(path)
    }

    /// `<dir>/<name>.md` led by an HTML comment carrying the hash.
    pub fn write_markdown(&self, dir: &Path, config_hash: &str) -> anyhow::Result<PathBuf> {
        let path = dir.join(format!("{}.md", self.name));
        write_with_header(&path, &format!("<!-- config_sha256={config_hash} -->\n"), &self.to_markdown())?;
        Ok(path)
    }
}

fn write_with_header(path: &Path, header: &str, body: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, format!("{header}{body}")).with_context(|| format!("writing {}", path.display()))
}

/// The hash recorded in an output's first line, if any.
pub fn header_hash(path: &Path) -> Option<String> {
    let text = fs::read_to_string(path).ok()?;
    let first = text.lines().next()?;
    let rest = first.split_once("config_sha256=")?.1;
    Some(rest.trim_end_matches(" -->").trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering() {
        let mut t = Table::new("t", ["a", "b"]);
        t.push(["x,y", "1"]);
        t.push(["p|q", NA]);
        assert_eq!(t.to_csv(), "a,b\n\"x,y\",1\np|q,NA\n");
        assert_eq!(t.to_markdown(), "| a | b |\n|---|---|\n| x,y | 1 |\n| p\\|q | NA |\n");
        let dir = tempfile::tempdir().unwrap();
        let p = t.write_csv(dir.path(), "abc").unwrap();
        let m = t.write_markdown(dir.path(), "abc").unwrap();
        assert_eq!(header_hash(&p).as_deref(), Some("abc"));
        assert_eq!(header_hash(&m).as_deref(), Some("abc"));
        assert_eq!(fmt_opt(None), NA);
        assert_eq!(fmt_f64(0.25), "0.250000");
    }
}
