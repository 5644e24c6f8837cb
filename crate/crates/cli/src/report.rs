use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub command: String,
    pub inputs: Value,
    pub results: Value,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl Report {
    pub fn new(command: &str, inputs: Value, results: Value) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            inputs,
            results,
            seeds: BTreeMap::new(),
            wall_time_s: None,
        }
    }

    pub fn with_seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    /// Pretty JSON with every float in scientific notation at `digits`
    /// significant digits.
    pub fn render(&self, digits: usize) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter::new(digits));
        self.serialize(&mut ser).expect("reports serialize");
        out.push(b'\n');
        String::from_utf8(out).expect("utf-8 output")
    }
}

/// A rate in both units.
pub fn rate(nats: f64) -> Value {
    serde_json::json!({ "nats": nats, "bits": nats / std::f64::consts::LN_2 })
}

pub struct SciFormatter {
    pretty: PrettyFormatter<'static>,
    digits: usize,
}

impl SciFormatter {
    pub fn new(digits: usize) -> Self {
        Self {
            pretty: PrettyFormatter::new(),
            digits: digits.clamp(1, 17),
        }
    }
}

impl Formatter for SciFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{:.*e}", self.digits - 1, value)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}
