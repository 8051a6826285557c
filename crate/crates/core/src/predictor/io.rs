//! Plain-text parameter files.
//!
//! ```text
//! gpnas-predictor 1
//! arch <gcn_layers> <d_emb> <d_ep> <hidden> <mlp0> <mlp1> <levels>
//! <tensor name> <rows> <cols> <v0> <v1> ...
//! ```
//!
//! One tensor per line, values row-major; vectors have one row. The file is
//! UTF-8 text, so it has no byte order. Floats use Rust's shortest round-trip
//! formatting, so save/load is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Architecture, PredictorError, PredictorParams};

pub const FORMAT_HEADER: &str = "gpnas-predictor 1";

type Tensor<'a> = (String, (usize, usize), &'a mut [f64]);

fn matrix(name: String, m: &mut ndarray::Array2<f64>) -> Tensor<'_> {
    let dim = m.dim();
    (name, dim, m.as_slice_mut().expect("standard layout"))
}

fn vector(name: String, v: &mut ndarray::Array1<f64>) -> Tensor<'_> {
    let dim = (1, v.len());
    (name, dim, v.as_slice_mut().expect("standard layout"))
}

fn all_tensors_mut(params: &mut PredictorParams) -> Vec<Tensor<'_>> {
    let mut out = vec![
        matrix("op_embedding".into(), &mut params.op_embedding),
        matrix("epoch_embedding".into(), &mut params.epoch_embedding),
    ];
    for (k, w) in params.gcn.iter_mut().enumerate() {
        out.push(matrix(format!("gcn.{k}"), w));
    }
    for (l, layer) in params.mlp.iter_mut().enumerate() {
        out.push(matrix(format!("mlp.{l}.weight"), &mut layer.weight));
        out.push(vector(format!("mlp.{l}.bias"), &mut layer.bias));
        if let Some(bn) = layer.norm.as_mut() {
            out.push(vector(format!("mlp.{l}.gamma"), &mut bn.gamma));
            out.push(vector(format!("mlp.{l}.beta"), &mut bn.beta));
            out.push(vector(format!("mlp.{l}.running_mean"), &mut bn.running_mean));
            out.push(vector(format!("mlp.{l}.running_var"), &mut bn.running_var));
        }
    }
    out
}

pub fn write_params<W: Write>(params: &PredictorParams, mut w: W) -> Result<(), PredictorError> {
    let a = params.arch;
    writeln!(w, "{FORMAT_HEADER}")?;
    writeln!(
        w,
        "arch {} {} {} {} {} {} {}",
        a.gcn_layers, a.d_emb, a.d_ep, a.hidden, a.mlp_hidden[0], a.mlp_hidden[1], a.levels
    )?;
    let mut copy = params.clone();
    for (name, (rows, cols), values) in all_tensors_mut(&mut copy) {
        write!(w, "{name} {rows} {cols}")?;
        for v in values.iter() {
            write!(w, " {v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_params<R: Read>(r: R) -> Result<PredictorParams, PredictorError> {
    let err = |line: usize, reason: String| PredictorError::Format { line, reason };
    let mut lines = BufReader::new(r).lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String), PredictorError> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, header) = next("header")?;
    if header.trim() != FORMAT_HEADER {
        return Err(err(n, format!("unknown header {header:?}")));
    }
    let (n, arch_line) = next("arch line")?;
    let fields: Vec<&str> = arch_line.split_whitespace().collect();
    if fields.len() != 8 || fields[0] != "arch" {
        return Err(err(n, "expected `arch` followed by seven sizes".into()));
    }
    let sizes = fields[1..]
        .iter()
        .map(|s| s.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| err(n, e.to_string()))?;
    let arch = Architecture {
        gcn_layers: sizes[0],
        d_emb: sizes[1],
        d_ep: sizes[2],
        hidden: sizes[3],
        mlp_hidden: [sizes[4], sizes[5]],
        levels: sizes[6],
    };
    arch.validate().map_err(|e| err(n, e.to_string()))?;
    let mut params = PredictorParams::init(arch, 0)?;
    for (name, dim, slot) in all_tensors_mut(&mut params) {
        let (n, line) = next(&name)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name.as_str()) {
            return Err(err(n, format!("expected tensor {name}")));
        }
        let mut size = || -> Result<usize, PredictorError> {
            parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(n, "missing tensor shape".into()))
        };
        let shape = (size()?, size()?);
        if shape != dim {
            return Err(err(n, format!("{name} has shape {shape:?}, expected {dim:?}")));
        }
        let len = slot.len();
        let mut count = 0;
        for (dst, tok) in slot.iter_mut().zip(parts.by_ref()) {
            let v: f64 = tok.parse().map_err(|_| err(n, format!("bad number {tok:?}")))?;
            if !v.is_finite() {
                return Err(err(n, format!("non-finite value in {name}")));
            }
            *dst = v;
            count += 1;
        }
        if count != len || parts.next().is_some() {
            return Err(err(n, format!("{name} value count does not match its length")));
        }
    }
    Ok(params)
}

pub fn save_params(params: &PredictorParams, path: &Path) -> Result<(), PredictorError> {
    write_params(params, BufWriter::new(File::create(path)?))
}

pub fn load_params(path: &Path) -> Result<PredictorParams, PredictorError> {
    read_params(File::open(path)?)
}
