use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Format, RunError};

pub const BUILD_ID: &str = env!("LCSLAB_BUILD_ID");

/// Rows of strings under named columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal, so rewriting a value never changes its bits.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Table(Table),
    Json(Value),
    Svg(String),
}

impl Artifact {
    pub fn format(&self) -> Format {
        match self {
            Artifact::Table(_) => Format::Csv,
            Artifact::Json(_) => Format::Json,
            Artifact::Svg(_) => Format::Svg,
        }
    }
}

fn meta(cfg: &ExperimentConfig) -> Value {
    json!({
        "build": BUILD_ID,
        "experiment": cfg.experiment,
        "config_hash": cfg.hash(),
        "seed": cfg.seed(),
        "config": serde_json::from_str::<Value>(&cfg.canonical_json()).expect("valid json"),
    })
}

/// Serializes an artifact with its provenance header.
pub fn render(cfg: &ExperimentConfig, artifact: &Artifact) -> Result<Vec<u8>, RunError> {
    let mut out = Vec::new();
    match artifact {
        Artifact::Table(t) => {
            writeln!(out, "# build: {BUILD_ID}")?;
            writeln!(out, "# config_hash: {}", cfg.hash())?;
            writeln!(out, "# seed: {}", cfg.seed())?;
            writeln!(out, "# config: {}", cfg.canonical_json())?;
            let mut w = csv::Writer::from_writer(&mut out);
            let io = |e: csv::Error| RunError::Io(e.to_string());
            w.write_record(&t.columns).map_err(io)?;
            for r in &t.rows {
                w.write_record(r).map_err(io)?;
            }
            w.flush()?;
        }
        Artifact::Json(v) => {
            let doc = json!({ "meta": meta(cfg), "result": v });
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| RunError::Io(e.to_string()))?;
            out.push(b'\n');
        }
        Artifact::Svg(s) => {
            let comment = format!(
                "<!-- build: {BUILD_ID} config_hash: {} seed: {} config: {} -->\n",
                cfg.hash(),
                cfg.seed(),
                cfg.canonical_json().replace("--", "- -")
            );
            // keep an XML declaration first if present
            match s.strip_prefix("<?xml") {
                Some(rest) => {
                    let end = rest.find("?>").map(|i| i + 2).unwrap_or(0);
                    out.extend_from_slice(b"<?xml");
                    out.extend_from_slice(&rest.as_bytes()[..end]);
                    out.push(b'\n');
                    out.extend_from_slice(comment.as_bytes());
                    out.extend_from_slice(rest[end..].trim_start().as_bytes());
                }
                None => {
                    out.extend_from_slice(comment.as_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
    }
    Ok(out)
}

/// Writes to `path` through a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| RunError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Renders and writes the artifact to `cfg.out`, or to stdout when no path is set.
pub fn emit(cfg: &ExperimentConfig, artifact: &Artifact) -> Result<(), RunError> {
    if let Some(f) = cfg.format {
        if f != artifact.format() {
            return Err(RunError::Usage(format!(
                "{} produces {:?} output, config asks for {:?}",
                cfg.experiment,
                artifact.format(),
                f
            )));
        }
    }
    let bytes = render(cfg, artifact)?;
    match &cfg.out {
        Some(p) => write_atomic(p, &bytes),
        None => {
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::new("demo", json!({"k": 1}));
        c.seed = Some(9);
        c
    }

    #[test]
    fn csv_has_header_lines_and_rfc4180_quoting() {
        let mut t = Table::new(&["name", "value"]);
        t.push(vec!["a,b".into(), "say \"hi\"".into()]);
        let s = String::from_utf8(render(&cfg(), &Artifact::Table(t)).unwrap()).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert!(lines[0].starts_with("# build: "));
        assert_eq!(lines[1], format!("# config_hash: {}", cfg().hash()));
        assert_eq!(lines[2], "# seed: 9");
        assert!(lines[3].starts_with("# config: {"));
        assert_eq!(lines[4], "name,value");
        assert_eq!(lines[5], "\"a,b\",\"say \"\"hi\"\"\"");
    }

    #[test]
    fn json_wraps_result_with_meta() {
        let s = render(&cfg(), &Artifact::Json(json!({"x": 1}))).unwrap();
        let v: Value = serde_json::from_slice(&s).unwrap();
        assert_eq!(v["result"]["x"], 1);
        assert_eq!(v["meta"]["seed"], 9);
        assert_eq!(v["meta"]["config"]["params"]["k"], 1);
    }

    #[test]
    fn svg_comment_follows_declaration() {
        let svg = "<?xml version=\"1.0\"?>\n<svg></svg>";
        let s = String::from_utf8(render(&cfg(), &Artifact::Svg(svg.into())).unwrap()).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "<?xml version=\"1.0\"?>");
        assert!(lines[1].starts_with("<!-- build: "));
        assert_eq!(lines[2], "<svg></svg>");
    }

    #[test]
    fn num_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.0, -2.5e17] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
