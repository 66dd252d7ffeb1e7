//! Model-spec files: a TOML document with one `[[block]]` table per latent
//! block. The grammar is documented in `docs/model-spec.md`.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::models::{BlockKind, CrossStructure, LatentBlock, ModelClass, ModelSpec, ParamVector};

/// A parsed spec file.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub spec: ModelSpec,
    /// Parameter values when every block lists them.
    pub theta: Option<ParamVector>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    channels: usize,
    #[serde(default)]
    class: ModelClass,
    #[serde(rename = "block", default)]
    blocks: Vec<RawBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    kind: BlockKind,
    channels: Vec<usize>,
    #[serde(default)]
    cross: CrossStructure,
    #[serde(default)]
    values: RawValues,
}

#[derive(Debug, Deserialize, Default)]
#[serde(untagged)]
enum RawValues {
    #[default]
    Missing,
    Keyword(String),
    List(Vec<f64>),
}

pub fn read_spec_file(path: &Path) -> Result<SpecFile> {
    let text = std::fs::read_to_string(path)?;
    parse_spec(&text).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

/// Parses spec-file text; errors are plain messages without a path.
pub fn parse_spec(text: &str) -> std::result::Result<SpecFile, String> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| e.to_string())?;
    if raw.blocks.is_empty() {
        return Err("the model has no [[block]] entries".into());
    }
    let mut blocks = Vec::with_capacity(raw.blocks.len());
    let mut values = Vec::with_capacity(raw.blocks.len());
    for (k, b) in raw.blocks.into_iter().enumerate() {
        if b.channels.contains(&0) {
            return Err(format!("block {}: channels are numbered from 1", k + 1));
        }
        blocks.push(LatentBlock::new(b.kind, b.channels.iter().map(|c| c - 1).collect()).with_cross(b.cross));
        values.push(match b.values {
            RawValues::Missing => None,
            RawValues::Keyword(w) if w == "auto" => None,
            RawValues::Keyword(w) => {
                return Err(format!("block {}: values must be a list of numbers or \"auto\", got {w:?}", k + 1))
            }
            RawValues::List(v) => Some(v),
        });
    }
    let spec = ModelSpec::new(raw.channels, blocks, raw.class);
    let given = values.iter().filter(|v| v.is_some()).count();
    let theta = if given == 0 {
        None
    } else if given < values.len() {
        return Err("give values for every block or for none of them".into());
    } else {
        let layout = spec.layout();
        let mut theta = Vec::with_capacity(layout.len());
        for (k, v) in values.into_iter().flatten().enumerate() {
            let expected = layout.block_range(k).len();
            if v.len() != expected {
                let names: Vec<String> = layout.entries()[layout.block_range(k)].iter().map(|e| e.name()).collect();
                return Err(format!(
                    "block {}: expected {expected} values ({}), got {}",
                    k + 1,
                    names.join(", "),
                    v.len()
                ));
            }
            theta.extend(v);
        }
        Some(ParamVector::new(theta))
    };
    Ok(SpecFile { spec, theta })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GYROS: &str = r#"
channels = 3
class = "M1"

[[block]]
kind = "WN"
channels = [1, 2, 3]
values = [1.010e-4, 7.12e-5, 4.90e-5]

[[block]]
kind = "RW"
channels = [1, 2, 3]
cross = "full"
values = [0.0119, 0.0220, 0.1628, -0.0004, 0.0048, 0.0093]
"#;

    #[test]
    fn parses_a_complete_spec() {
        let f = parse_spec(GYROS).unwrap();
        assert_eq!(f.spec.channels, 3);
        assert_eq!(f.spec.class, ModelClass::M1);
        assert_eq!(f.spec.blocks[1].channels, vec![0, 1, 2]);
        assert_eq!(f.spec.blocks[1].cross, CrossStructure::Full);
        assert_eq!(f.theta.unwrap().len(), 9);
    }

    #[test]
    fn auto_values_leave_theta_empty() {
        let text = "channels = 1\n[[block]]\nkind = \"WN\"\nchannels = [1]\nvalues = \"auto\"\n";
        assert_eq!(parse_spec(text).unwrap().theta, None);
    }

    #[test]
    fn reports_malformed_files() {
        let wrong_count = GYROS.replace("values = [1.010e-4, 7.12e-5, 4.90e-5]", "values = [1.0]");
        assert!(parse_spec(&wrong_count).unwrap_err().contains("expected 3 values"));
        let mixed = GYROS.replace("values = [1.010e-4, 7.12e-5, 4.90e-5]", "values = \"auto\"");
        assert!(parse_spec(&mixed).unwrap_err().contains("every block"));
        let zero = GYROS.replace("channels = [1, 2, 3]\nvalues", "channels = [0, 1]\nvalues");
        assert!(parse_spec(&zero).unwrap_err().contains("numbered from 1"));
        assert!(parse_spec("channels = 1\n").unwrap_err().contains("no [[block]]"));
        assert!(parse_spec("channels = 1\n[[block]]\nkind = \"XX\"\nchannels = [1]\n").is_err());
        assert!(parse_spec("channels = 1\n[[block]]\nkind = \"WN\"\nchannels = [1]\nvalues = \"later\"\n").is_err());
    }
}
