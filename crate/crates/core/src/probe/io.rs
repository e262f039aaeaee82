//! Versioned text serialization of trained probes.
//!
//! ```text
//! synprobe-probe	1
//! kind	MLP
//! ...
//! tensor	hidden.weight	<rows>	<cols>
//! <row-major values, one tab-separated line per row>
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Dense, Network, ProbeConfig, ProbeError, ProbeKind, TrainedProbe};

const MAGIC: &str = "synprobe-probe";
const VERSION: u32 = 1;

fn write_tensor(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f32]) {
    let _ = writeln!(out, "tensor\t{name}\t{rows}\t{cols}");
    for row in values.chunks_exact(cols.max(1)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
}

pub fn write_probe(probe: &TrainedProbe) -> String {
    let c = &probe.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}\t{VERSION}");
    let _ = writeln!(out, "kind\t{}", c.kind);
    let _ = writeln!(out, "input_dim\t{}", probe.input_dim());
    let _ = writeln!(out, "hidden_units\t{}", c.hidden_units);
    let _ = writeln!(out, "dropout\t{}", c.dropout);
    let _ = writeln!(out, "batch_size\t{}", c.batch_size);
    let grid: Vec<String> = c.lr_grid.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(out, "lr_grid\t{}", grid.join(","));
    let _ = writeln!(out, "max_epochs\t{}", c.max_epochs);
    let _ = writeln!(out, "patience\t{}", c.patience);
    let _ = writeln!(out, "seed\t{}", c.seed);
    let _ = writeln!(out, "selected_lr\t{}", probe.selected_lr);
    let _ = writeln!(out, "dev_accuracy\t{}", probe.dev_accuracy);
    let _ = writeln!(out, "train_task\t{}", probe.train_task);
    if let Some(h) = probe.network.hidden() {
        write_tensor(&mut out, "hidden.weight", h.out_dim(), h.in_dim(), h.weights());
        write_tensor(&mut out, "hidden.bias", 1, h.out_dim(), h.bias());
    }
    let o = probe.network.output();
    write_tensor(&mut out, "output.weight", o.out_dim(), o.in_dim(), o.weights());
    write_tensor(&mut out, "output.bias", 1, o.out_dim(), o.bias());
    out.push_str("end\n");
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> ProbeError {
        ProbeError::Parse { line: self.last, reason: reason.into() }
    }

    fn next(&mut self) -> Result<&'a str, ProbeError> {
        let (i, line) = self.lines.next().ok_or_else(|| ProbeError::Parse { line: self.last + 1, reason: "unexpected end of file".into() })?;
        self.last = i + 1;
        Ok(line)
    }

    fn field(&mut self, key: &str) -> Result<&'a str, ProbeError> {
        let line = self.next()?;
        match line.split_once('\t') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.err(format!("expected field {key:?}"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ProbeError> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("bad value for {key}: {v:?}")))
    }

    fn tensor(&mut self, name: &str) -> Result<(usize, usize, Vec<f32>), ProbeError> {
        let header = self.next()?;
        let cols: Vec<&str> = header.split('\t').collect();
        let (rows, width) = match cols.as_slice() {
            ["tensor", n, r, c] if *n == name => (
                r.parse::<usize>().map_err(|_| self.err("bad row count"))?,
                c.parse::<usize>().map_err(|_| self.err("bad column count"))?,
            ),
            _ => return Err(self.err(format!("expected tensor {name}"))),
        };
        let mut values = Vec::with_capacity(rows * width);
        for _ in 0..rows {
            let line = self.next()?;
            let before = values.len();
            for v in line.split('\t') {
                values.push(v.parse::<f32>().map_err(|_| self.err(format!("bad number {v:?}")))?);
            }
            if values.len() - before != width {
                return Err(self.err(format!("expected {width} values")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(self.err("non-finite parameter"));
        }
        Ok((rows, width, values))
    }
}

pub fn read_probe(text: &str) -> Result<TrainedProbe, ProbeError> {
    let mut r = Reader { lines: text.lines().enumerate(), last: 0 };
    let version: u32 = r.parsed(MAGIC)?;
    if version != VERSION {
        return Err(r.err(format!("unsupported probe version {version}")));
    }
    let kind: ProbeKind = r.field("kind")?.parse()?;
    let input_dim: usize = r.parsed("input_dim")?;
    let hidden_units: usize = r.parsed("hidden_units")?;
    let dropout: f64 = r.parsed("dropout")?;
    let batch_size: usize = r.parsed("batch_size")?;
    let grid = r.field("lr_grid")?;
    let lr_grid = grid
        .split(',')
        .map(|v| v.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| r.err("bad lr_grid"))?;
    let max_epochs: usize = r.parsed("max_epochs")?;
    let patience: usize = r.parsed("patience")?;
    let seed: u64 = r.parsed("seed")?;
    let selected_lr: f64 = r.parsed("selected_lr")?;
    let dev_accuracy: f64 = r.parsed("dev_accuracy")?;
    let train_task = r.field("train_task")?.to_string();
    let config = ProbeConfig { kind, hidden_units, dropout, batch_size, lr_grid, max_epochs, patience, seed };
    let hidden = match kind {
        ProbeKind::Mlp => {
            let (rows, cols, w) = r.tensor("hidden.weight")?;
            let (_, bcols, b) = r.tensor("hidden.bias")?;
            if cols != input_dim || rows != hidden_units || bcols != rows {
                return Err(r.err("hidden layer shape does not match header"));
            }
            Some(Dense::new(rows, cols, w, b))
        }
        ProbeKind::Lr => None,
    };
    let (rows, cols, w) = r.tensor("output.weight")?;
    let (_, bcols, b) = r.tensor("output.bias")?;
    let expected_in = if kind == ProbeKind::Mlp { hidden_units } else { input_dim };
    if rows != 2 || cols != expected_in || bcols != 2 {
        return Err(r.err("output layer shape does not match header"));
    }
    if r.next()? != "end" {
        return Err(r.err("expected end marker"));
    }
    let network = Network::from_layers(hidden, Dense::new(rows, cols, w, b));
    Ok(TrainedProbe { config, network, selected_lr, dev_accuracy, train_task })
}

pub fn store_probe(probe: &TrainedProbe, path: &Path) -> Result<(), ProbeError> {
    std::fs::write(path, write_probe(probe))?;
    Ok(())
}

pub fn load_probe(path: &Path) -> Result<TrainedProbe, ProbeError> {
    read_probe(&std::fs::read_to_string(path)?)
}
