//! Record streams in CSV or NDJSON with fixed 17-significant-digit numbers.

use std::io::{self, Write};

use num_complex::Complex64;
use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Ndjson,
}

#[derive(Debug, Clone)]
pub enum Field {
    Num(f64),
    Int(u64),
    Str(String),
    Bool(bool),
    /// Expanded to `name_1, name_2, …` in CSV.
    Nums(Vec<f64>),
    /// Flat `[re, im, re, im, …]` in NDJSON; `name_re_k, name_im_k` in CSV.
    Complexes(Vec<Complex64>),
    /// Variable-length complex list, NDJSON only.
    List(Vec<Complex64>),
}

#[derive(Debug, Clone)]
pub struct Record {
    kind: &'static str,
    fields: Vec<(String, Field)>,
}

impl Record {
    pub fn new(kind: &'static str) -> Self {
        Record {
            kind,
            fields: Vec::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, f: Field) -> Self {
        self.fields.push((name.into(), f));
        self
    }

    pub fn num(self, name: impl Into<String>, v: f64) -> Self {
        self.with(name, Field::Num(v))
    }

    pub fn str(self, name: impl Into<String>, v: impl Into<String>) -> Self {
        self.with(name, Field::Str(v.into()))
    }
}

pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn json_num(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    Value::Number(
        fmt_num(v)
            .parse::<Number>()
            .expect("formatted float is a JSON number"),
    )
}

fn flat(zs: &[Complex64]) -> Value {
    Value::Array(
        zs.iter()
            .flat_map(|z| [json_num(z.re), json_num(z.im)])
            .collect(),
    )
}

pub struct Sink<W: Write> {
    out: W,
    format: Format,
    header: Option<Vec<String>>,
}

impl<W: Write> Sink<W> {
    pub fn new(out: W, format: Format) -> Self {
        Sink {
            out,
            format,
            header: None,
        }
    }

    pub fn emit(&mut self, rec: &Record) -> io::Result<()> {
        match self.format {
            Format::Ndjson => {
                let mut m = Map::new();
                m.insert("kind".into(), Value::String(rec.kind.into()));
                for (name, f) in &rec.fields {
                    let v = match f {
                        Field::Num(x) => json_num(*x),
                        Field::Int(i) => Value::from(*i),
                        Field::Str(s) => Value::String(s.clone()),
                        Field::Bool(b) => Value::Bool(*b),
                        Field::Nums(xs) => Value::Array(xs.iter().map(|x| json_num(*x)).collect()),
                        Field::Complexes(zs) | Field::List(zs) => flat(zs),
                    };
                    m.insert(name.clone(), v);
                }
                writeln!(self.out, "{}", Value::Object(m))
            }
            Format::Csv => {
                if rec.kind == "warning" {
                    // keep the table rectangular
                    let msg = rec.fields.iter().find_map(|(_, f)| match f {
                        Field::Str(s) => Some(s.as_str()),
                        _ => None,
                    });
                    eprintln!("warning: {}", msg.unwrap_or(""));
                    return Ok(());
                }
                let (names, values) = csv_row(rec);
                match &self.header {
                    None => {
                        writeln!(self.out, "{}", names.join(","))?;
                        self.header = Some(names);
                    }
                    Some(h) if *h != names => {
                        writeln!(self.out, "{}", names.join(","))?;
                        self.header = Some(names);
                    }
                    Some(_) => {}
                }
                writeln!(self.out, "{}", values.join(","))
            }
        }
    }

    pub fn warning(&mut self, msg: &str) -> io::Result<()> {
        self.emit(&Record::new("warning").str("message", msg))
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_row(rec: &Record) -> (Vec<String>, Vec<String>) {
    let mut names = vec!["kind".to_string()];
    let mut values = vec![rec.kind.to_string()];
    for (name, f) in &rec.fields {
        match f {
            Field::Num(x) => {
                names.push(name.clone());
                values.push(fmt_num(*x));
            }
            Field::Int(i) => {
                names.push(name.clone());
                values.push(i.to_string());
            }
            Field::Str(s) => {
                names.push(name.clone());
                values.push(csv_escape(s));
            }
            Field::Bool(b) => {
                names.push(name.clone());
                values.push(b.to_string());
            }
            Field::Nums(xs) => {
                for (k, x) in xs.iter().enumerate() {
                    names.push(format!("{name}_{}", k + 1));
                    values.push(fmt_num(*x));
                }
            }
            Field::Complexes(zs) => {
                for (k, z) in zs.iter().enumerate() {
                    names.push(format!("{name}_re_{}", k + 1));
                    values.push(fmt_num(z.re));
                    names.push(format!("{name}_im_{}", k + 1));
                    values.push(fmt_num(z.im));
                }
            }
            Field::List(_) => {}
        }
    }
    (names, values)
}
