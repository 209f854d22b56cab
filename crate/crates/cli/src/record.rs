//! The ablation CSV schema.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crl_core::bounds::{BoundEntry, BoundMode, EntryParams};

use crate::CliError;

pub const HEADER: [&str; 15] = [
    "axis",
    "axis_value",
    "k",
    "n",
    "depth",
    "width",
    "bound",
    "mode",
    "value",
    "train_risk",
    "test_risk",
    "gap",
    "eta",
    "delta",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub axis: String,
    pub axis_value: usize,
    pub k: usize,
    pub n: usize,
    pub depth: usize,
    pub width: usize,
    pub bound: String,
    pub mode: BoundMode,
    pub value: f64,
    pub train_risk: f64,
    pub test_risk: f64,
    pub gap: f64,
    pub eta: f64,
    pub delta: f64,
    pub seed: u64,
}

impl Row {
    /// The report entry this row came from. Constants the schema does not
    /// carry (M, thresholds, violation counts) take their defaults.
    pub fn to_entry(&self) -> BoundEntry {
        BoundEntry {
            bound: self.bound.clone(),
            mode: self.mode,
            value: self.value,
            params: EntryParams {
                eta: self.eta,
                delta: self.delta,
                n: self.n,
                k: self.k,
                ..Default::default()
            },
        }
    }

    /// Whether the row agrees with `e` on every column it shares with it.
    pub fn matches(&self, e: &BoundEntry) -> bool {
        self.bound == e.bound
            && self.mode == e.mode
            && self.value.to_bits() == e.value.to_bits()
            && self.eta.to_bits() == e.params.eta.to_bits()
            && self.delta.to_bits() == e.params.delta.to_bits()
            && self.n == e.params.n
            && self.k == e.params.k
    }
}

/// Writes the header and rows.
pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows back, rejecting any header other than [`HEADER`].
pub fn read_rows<R: Read>(input: R) -> Result<Vec<Row>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(CliError::Runtime(format!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>())));
    }
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: f64) -> Row {
        Row {
            axis: "depth".into(),
            axis_value: 3,
            k: 10,
            n: 200,
            depth: 3,
            width: 64,
            bound: "thm2".into(),
            mode: BoundMode::Full,
            value,
            train_risk: 1e-5,
            test_risk: 0.25,
            gap: 0.25 - 1e-5,
            eta: 1.0,
            delta: 0.1,
            seed: 2,
        }
    }

    #[test]
    fn header_line_is_exact() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "axis,axis_value,k,n,depth,width,bound,mode,value,train_risk,test_risk,gap,eta,delta,seed\n"
        );
    }

    #[test]
    fn rows_read_back_bit_exact() {
        let rows = vec![row(0.1 + 0.2), row(1.234_567_890_123e300), row(5e-324)];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        assert_eq!(read_rows(&buf[..]).unwrap(), rows);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("depth,3,10,200,3,64,thm2,full,"));
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(read_rows("axis,value\ndepth,1\n".as_bytes()).is_err());
    }
}
