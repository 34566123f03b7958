//! Plain-text model files.
//!
//! ```text
//! reclab-model 1
//! kind linear
//! trace.epochs 500
//! trace.learning_rate 1.0000000000000001e-1
//! trace.epsilon 0e0
//! vector w 2 <v0> <v1>
//! ```
//!
//! One entry per line: `<key> <value>` for scalars, `vector <key> <len> <values…>`
//! and `matrix <key> <rows> <cols> <values…>` (row-major). Reals are written with
//! 17 significant digits so a round trip reproduces every weight bit for bit.
//! Networks store `<prefix>.layers <count>` followed by `<prefix>.<i>.weight`
//! matrices and `<prefix>.<i>.bias` vectors.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

use super::mlp::{Dense, MlpModel, Network};
use super::ntk::NtkModel;
use super::vae::VaeModel;
use super::{LinearModel, Predictor, TrainTrace};

const MAGIC: &str = "reclab-model 1";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

struct Writer {
    out: String,
}

impl Writer {
    fn new(kind: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "kind {kind}");
        Self { out }
    }

    fn scalar(&mut self, key: &str, v: f64) {
        let _ = writeln!(self.out, "{key} {}", real(v));
    }

    fn count(&mut self, key: &str, v: usize) {
        let _ = writeln!(self.out, "{key} {v}");
    }

    fn vector(&mut self, key: &str, v: &Vector) {
        let _ = write!(self.out, "vector {key} {}", v.len());
        for x in v.iter() {
            let _ = write!(self.out, " {}", real(*x));
        }
        self.out.push('\n');
    }

    fn matrix(&mut self, key: &str, m: &Matrix) {
        let _ = write!(self.out, "matrix {key} {} {}", m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let _ = write!(self.out, " {}", real(m[(i, j)]));
            }
        }
        self.out.push('\n');
    }

    fn trace(&mut self, t: &TrainTrace) {
        self.count("trace.epochs", t.epochs);
        self.scalar("trace.learning_rate", t.learning_rate);
        self.scalar("trace.epsilon", t.epsilon);
    }

    fn network(&mut self, prefix: &str, net: &Network) {
        self.count(&format!("{prefix}.layers"), net.layers.len());
        for (i, l) in net.layers.iter().enumerate() {
            self.matrix(&format!("{prefix}.{i}.weight"), &l.weight);
            self.vector(&format!("{prefix}.{i}.bias"), &l.bias);
        }
    }
}

pub fn write_predictor(model: &Predictor) -> String {
    let mut w = Writer::new(model.kind());
    match model {
        Predictor::Linear(m) => {
            w.trace(&m.trace);
            w.vector("w", &m.w);
        }
        Predictor::Ntk(m) => {
            w.scalar("beta", m.beta);
            w.scalar("epsilon", m.epsilon);
            w.matrix("anchors", &m.anchors);
            w.vector("labels", &m.labels);
            w.vector("weights", &m.weights);
        }
        Predictor::Mlp(m) => {
            w.trace(&m.trace);
            w.network("net", &m.net);
        }
    }
    w.out
}

pub fn write_vae(vae: &VaeModel) -> String {
    let mut w = Writer::new("vae");
    w.scalar("val_recon_mean", vae.val_recon_mean);
    w.scalar("val_recon_std", vae.val_recon_std);
    w.network("encoder", &vae.encoder);
    w.network("decoder", &vae.decoder);
    w.out
}

struct Entry {
    line: usize,
    tokens: Vec<String>,
}

struct Reader {
    entries: HashMap<String, Entry>,
    kind: String,
}

fn bad(line: usize, reason: impl Into<String>) -> Error {
    Error::ModelFormat {
        line,
        reason: reason.into(),
    }
}

fn parse_real(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| bad(line, format!("not a number: {tok}")))?;
    if !v.is_finite() {
        return Err(bad(line, format!("non-finite value: {tok}")));
    }
    Ok(v)
}

fn parse_count(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| bad(line, format!("not a count: {tok}")))
}

impl Reader {
    fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            Some((i, _)) => return Err(bad(i + 1, format!("expected header `{MAGIC}`"))),
            None => return Err(bad(0, "empty model file")),
        }
        let mut entries = HashMap::new();
        for (i, l) in lines {
            let line = i + 1;
            let mut tokens: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
            let key = match tokens[0].as_str() {
                "vector" | "matrix" if tokens.len() >= 2 => tokens.remove(1),
                _ => tokens[0].clone(),
            };
            if entries
                .insert(key.clone(), Entry { line, tokens })
                .is_some()
            {
                return Err(bad(line, format!("duplicate key {key}")));
            }
        }
        let kind = match entries.get("kind") {
            Some(e) if e.tokens.len() == 2 => e.tokens[1].clone(),
            Some(e) => return Err(bad(e.line, "malformed kind line")),
            None => return Err(bad(0, "missing kind")),
        };
        Ok(Self { entries, kind })
    }

    fn get(&self, key: &str) -> Result<&Entry> {
        self.entries
            .get(key)
            .ok_or_else(|| bad(0, format!("missing key {key}")))
    }

    fn scalar_tok(&self, key: &str) -> Result<(&str, usize)> {
        let e = self.get(key)?;
        if e.tokens.len() != 2 {
            return Err(bad(e.line, format!("{key} expects one value")));
        }
        Ok((&e.tokens[1], e.line))
    }

    fn scalar(&self, key: &str) -> Result<f64> {
        let (t, line) = self.scalar_tok(key)?;
        parse_real(t, line)
    }

    fn count(&self, key: &str) -> Result<usize> {
        let (t, line) = self.scalar_tok(key)?;
        parse_count(t, line)
    }

    fn vector(&self, key: &str) -> Result<Vector> {
        let e = self.get(key)?;
        if e.tokens[0] != "vector" || e.tokens.len() < 2 {
            return Err(bad(e.line, format!("{key} is not a vector")));
        }
        let len = parse_count(&e.tokens[1], e.line)?;
        if e.tokens.len() != len + 2 {
            return Err(bad(
                e.line,
                format!("{key}: expected {len} values, found {}", e.tokens.len() - 2),
            ));
        }
        let vals = e.tokens[2..]
            .iter()
            .map(|t| parse_real(t, e.line))
            .collect::<Result<Vec<_>>>()?;
        Ok(Vector::from_vec(vals))
    }

    fn matrix(&self, key: &str) -> Result<Matrix> {
        let e = self.get(key)?;
        if e.tokens[0] != "matrix" || e.tokens.len() < 3 {
            return Err(bad(e.line, format!("{key} is not a matrix")));
        }
        let rows = parse_count(&e.tokens[1], e.line)?;
        let cols = parse_count(&e.tokens[2], e.line)?;
        if e.tokens.len() != rows * cols + 3 {
            return Err(bad(
                e.line,
                format!(
                    "{key}: expected {} values, found {}",
                    rows * cols,
                    e.tokens.len() - 3
                ),
            ));
        }
        let vals = e.tokens[3..]
            .iter()
            .map(|t| parse_real(t, e.line))
            .collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_row_slice(rows, cols, &vals))
    }

    fn trace(&self) -> Result<TrainTrace> {
        Ok(TrainTrace {
            epochs: self.count("trace.epochs")?,
            learning_rate: self.scalar("trace.learning_rate")?,
            epsilon: self.scalar("trace.epsilon")?,
        })
    }

    fn network(&self, prefix: &str) -> Result<Network> {
        let n = self.count(&format!("{prefix}.layers"))?;
        let layers = (0..n)
            .map(|i| {
                Dense::new(
                    self.matrix(&format!("{prefix}.{i}.weight"))?,
                    self.vector(&format!("{prefix}.{i}.bias"))?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)
    }
}

pub fn parse_predictor(text: &str) -> Result<Predictor> {
    let r = Reader::parse(text)?;
    match r.kind.as_str() {
        "linear" => Ok(LinearModel::with_trace(r.vector("w")?, r.trace()?).into()),
        "ntk" => {
            let m = NtkModel {
                anchors: r.matrix("anchors")?,
                weights: r.vector("weights")?,
                labels: r.vector("labels")?,
                beta: r.scalar("beta")?,
                epsilon: r.scalar("epsilon")?,
            };
            if m.weights.len() != m.anchors.nrows() || m.labels.len() != m.anchors.nrows() {
                return Err(bad(0, "ntk weights/labels length must equal anchor count"));
            }
            if m.beta <= 0.0 {
                return Err(bad(0, "ntk beta must be positive"));
            }
            Ok(m.into())
        }
        "mlp" => {
            let mut m = MlpModel::new(r.network("net")?)?;
            m.trace = r.trace()?;
            Ok(m.into())
        }
        other => Err(bad(0, format!("unknown predictor kind {other}"))),
    }
}

pub fn parse_vae(text: &str) -> Result<VaeModel> {
    let r = Reader::parse(text)?;
    if r.kind != "vae" {
        return Err(bad(0, format!("expected kind vae, found {}", r.kind)));
    }
    let mut vae = VaeModel::new(r.network("encoder")?, r.network("decoder")?)?;
    vae.val_recon_mean = r.scalar("val_recon_mean")?;
    vae.val_recon_std = r.scalar("val_recon_std")?;
    Ok(vae)
}
