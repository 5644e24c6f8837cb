use std::path::Path;

use infocoupling::channel::ChannelMatrix;
use infocoupling::coupling::MacChannel;
use infocoupling::linalg::Matrix;
use infocoupling::prob::Distribution;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Tolerance for stochasticity and normalization of parsed specs.
pub const SPEC_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReceiverSpec {
    pub name: String,
    pub channel: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransmitterSpec {
    pub input_dist: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dist: Option<Vec<f64>>,
    /// `channel[y][x] = P(y | x)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub receivers: Vec<ReceiverSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transmitters: Vec<TransmitterSpec>,
    /// `joint_channel[y][(x₁, …, x_k)]` with `x_k` fastest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_channel: Option<Vec<Vec<f64>>>,
}

/// Byte offset of a 1-based `(line, column)` position in `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_spec(text: &str, origin: &str) -> Result<ChannelSpec, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Parse(format!(
            "{origin}: byte offset {}: {e}",
            byte_offset(text, e.line(), e.column())
        ))
    })
}

pub fn load_spec(path: &Path) -> Result<ChannelSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    parse_spec(&text, &path.display().to_string())
}

fn invalid(name: &str, what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Parse(format!("spec '{name}': {what}: {e}"))
}

fn channel_from_rows(name: &str, what: &str, rows: &[Vec<f64>]) -> Result<ChannelMatrix, CliError> {
    let m = Matrix::from_rows(rows).ok_or_else(|| invalid(name, what, "rows have unequal lengths or are empty"))?;
    ChannelMatrix::with_tolerance(m, SPEC_TOL).map_err(|e| invalid(name, what, e))
}

fn distribution(name: &str, what: &str, p: &[f64]) -> Result<Distribution, CliError> {
    Distribution::with_tolerance(p.to_vec(), SPEC_TOL).map_err(|e| invalid(name, what, e))
}

impl ChannelSpec {
    pub fn input(&self) -> Result<Distribution, CliError> {
        let p = self
            .input_dist
            .as_deref()
            .ok_or_else(|| invalid(&self.name, "input_dist", "missing"))?;
        distribution(&self.name, "input_dist", p)
    }

    /// The point-to-point channel and its input law.
    pub fn point_to_point(&self) -> Result<(ChannelMatrix, Distribution), CliError> {
        let rows = self
            .channel
            .as_deref()
            .ok_or_else(|| invalid(&self.name, "channel", "missing"))?;
        let w = channel_from_rows(&self.name, "channel", rows)?;
        let px = self.input()?;
        if w.input_size() != px.alphabet_size() {
            return Err(invalid(
                &self.name,
                "channel",
                format!("{} input columns for {} input probabilities", w.input_size(), px.alphabet_size()),
            ));
        }
        Ok((w, px))
    }

    /// Receiver channels: the `receivers` list, or the single `channel`.
    pub fn receiver_channels(&self) -> Result<Vec<(String, ChannelMatrix, Distribution)>, CliError> {
        if self.receivers.is_empty() {
            let (w, px) = self.point_to_point()?;
            return Ok(vec![(self.name.clone(), w, px)]);
        }
        let px = self.input()?;
        self.receivers
            .iter()
            .map(|r| {
                let w = channel_from_rows(&self.name, &format!("receiver '{}'", r.name), &r.channel)?;
                if w.input_size() != px.alphabet_size() {
                    return Err(invalid(&self.name, &format!("receiver '{}'", r.name), "input size mismatch"));
                }
                Ok((r.name.clone(), w, px.clone()))
            })
            .collect()
    }

    pub fn mac(&self) -> Result<MacChannel, CliError> {
        if self.transmitters.is_empty() {
            return Err(invalid(&self.name, "transmitters", "missing"));
        }
        let laws = self
            .transmitters
            .iter()
            .enumerate()
            .map(|(i, t)| distribution(&self.name, &format!("transmitter {i}"), &t.input_dist))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = self
            .joint_channel
            .as_deref()
            .ok_or_else(|| invalid(&self.name, "joint_channel", "missing"))?;
        let joint = channel_from_rows(&self.name, "joint_channel", rows)?;
        MacChannel::new(laws, joint).map_err(|e| invalid(&self.name, "joint_channel", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_count_bytes() {
        let text = "{\n  \"name\": \"n\",\n  x\n}";
        let err = parse_spec(text, "t").unwrap_err();
        let CliError::Parse(msg) = err else { panic!() };
        assert!(msg.contains("byte offset 19"), "{msg}");
    }

    #[test]
    fn rejects_non_stochastic() {
        let spec = parse_spec(r#"{"name":"x","input_dist":[0.5,0.5],"channel":[[0.9,0.1],[0.2,0.9]]}"#, "t").unwrap();
        assert!(matches!(spec.point_to_point(), Err(CliError::Parse(_))));
    }
}
