//! On-disk formats.
//!
//! Feature sets travel either as a line-oriented CSV with a single `#` header
//! or as a little-endian binary container (magic `MKSF`). Learned projections
//! are always binary (magic `MKPJ`); kernelized projections embed the full
//! training context so they are self-contained at evaluation time.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::KernelKind;

use super::{FeatureSet, Projection, SplitTag};

const FEATURE_MAGIC: &[u8; 4] = b"MKSF";
const PROJECTION_MAGIC: &[u8; 4] = b"MKPJ";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Binary,
}

/// Decide CSV vs. binary by sniffing the magic bytes.
pub fn detect_format(path: &Path) -> Result<FileFormat> {
    let mut file = File::open(path)?;
    let mut head = [0u8; 4];
    let n = file.read(&mut head)?;
    if n == 4 && &head == FEATURE_MAGIC {
        Ok(FileFormat::Binary)
    } else {
        Ok(FileFormat::Csv)
    }
}

pub fn load_feature_set(path: &Path, format: FileFormat) -> Result<FeatureSet> {
    match format {
        FileFormat::Csv => read_csv(&mut BufReader::new(File::open(path)?)),
        FileFormat::Binary => read_binary(&mut BufReader::new(File::open(path)?)),
    }
}

pub fn save_feature_set(fs: &FeatureSet, path: &Path, format: FileFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        FileFormat::Csv => write_csv(fs, &mut out)?,
        FileFormat::Binary => write_binary(fs, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(fs: &FeatureSet, out: &mut W) -> Result<()> {
    let (d, n) = (fs.dim(), fs.len());
    writeln!(
        out,
        "# d={d} n={n} cols=person_id,view_id,split,f0..f{}",
        d - 1
    )?;
    for j in 0..n {
        match fs.person_ids()[j] {
            Some(id) => write!(out, "{id}")?,
            None => {}
        }
        write!(out, ",{},{}", fs.view_ids()[j], fs.split_tags()[j])?;
        for i in 0..d {
            write!(out, ",{}", fs.features()[(i, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_csv<R: BufRead>(input: &mut R) -> Result<FeatureSet> {
    let mut lines = input.lines().enumerate();
    let (d, n) = loop {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file, expected a header line"))?;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        break parse_header(idx + 1, &line)?;
    };

    let mut features = DMatrix::<f64>::zeros(d, n);
    let mut person_ids = Vec::with_capacity(n);
    let mut view_ids = Vec::with_capacity(n);
    let mut split_tags = Vec::with_capacity(n);
    let mut row = 0usize;

    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if row >= n {
            return Err(parse_err(lineno, format!("more than {n} data rows")));
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 + d {
            return Err(parse_err(
                lineno,
                format!("row {row}: expected {} fields, found {}", 3 + d, fields.len()),
            ));
        }
        let pid_field = fields[0].trim();
        let pid = if pid_field.is_empty() {
            None
        } else {
            Some(pid_field.parse::<i64>().map_err(|_| {
                parse_err(lineno, format!("bad person_id {pid_field:?}"))
            })?)
        };
        let view = fields[1]
            .trim()
            .parse::<u32>()
            .map_err(|_| parse_err(lineno, format!("bad view_id {:?}", fields[1])))?;
        let tag = SplitTag::parse(fields[2].trim())
            .ok_or_else(|| parse_err(lineno, format!("bad split tag {:?}", fields[2])))?;
        for i in 0..d {
            features[(i, row)] = fields[3 + i].trim().parse::<f64>().map_err(|_| {
                parse_err(lineno, format!("bad feature value {:?}", fields[3 + i]))
            })?;
        }
        person_ids.push(pid);
        view_ids.push(view);
        split_tags.push(tag);
        row += 1;
    }
    if row != n {
        return Err(parse_err(0, format!("header promised {n} rows, found {row}")));
    }
    FeatureSet::new(features, person_ids, view_ids, split_tags)
}

fn parse_header(lineno: usize, line: &str) -> Result<(usize, usize)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(lineno, "header line must start with '#'"))?
        .trim();
    let mut d = None;
    let mut n = None;
    let mut cols = None;
    for token in body.split_whitespace() {
        if let Some(v) = token.strip_prefix("d=") {
            d = Some(v.parse::<usize>().map_err(|_| parse_err(lineno, "bad d="))?);
        } else if let Some(v) = token.strip_prefix("n=") {
            n = Some(v.parse::<usize>().map_err(|_| parse_err(lineno, "bad n="))?);
        } else if let Some(v) = token.strip_prefix("cols=") {
            cols = Some(v.to_string());
        }
    }
    let d = d.ok_or_else(|| parse_err(lineno, "header missing d=<int>"))?;
    let n = n.ok_or_else(|| parse_err(lineno, "header missing n=<int>"))?;
    if d == 0 || n == 0 {
        return Err(parse_err(lineno, "d and n must be positive"));
    }
    let expected = format!("person_id,view_id,split,f0..f{}", d - 1);
    match cols {
        Some(c) if c == expected => Ok((d, n)),
        Some(c) => Err(parse_err(
            lineno,
            format!("cols={c} does not match expected {expected}"),
        )),
        None => Err(parse_err(lineno, "header missing cols= description")),
    }
}

fn tag_byte(tag: SplitTag) -> u8 {
    match tag {
        SplitTag::Labeled => 0,
        SplitTag::Unlabeled => 1,
        SplitTag::Probe => 2,
        SplitTag::Gallery => 3,
    }
}

fn byte_tag(b: u8) -> Result<SplitTag> {
    match b {
        0 => Ok(SplitTag::Labeled),
        1 => Ok(SplitTag::Unlabeled),
        2 => Ok(SplitTag::Probe),
        3 => Ok(SplitTag::Gallery),
        other => Err(Error::Format(format!("unknown split tag byte {other}"))),
    }
}

fn write_u64<W: Write>(out: &mut W, v: u64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(out: &mut W, v: f64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u8<R: Read>(input: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    input.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_i64<R: Read>(input: &mut R) -> Result<i64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_len<R: Read>(input: &mut R, what: &str) -> Result<usize> {
    let v = read_u64(input)?;
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} out of range: {v}")))
}

pub fn write_binary<W: Write>(fs: &FeatureSet, out: &mut W) -> Result<()> {
    out.write_all(FEATURE_MAGIC)?;
    out.write_all(&[FORMAT_VERSION])?;
    write_u64(out, fs.dim() as u64)?;
    write_u64(out, fs.len() as u64)?;
    for v in fs.features().iter() {
        write_f64(out, *v)?; // column-major, matching storage order
    }
    for j in 0..fs.len() {
        match fs.person_ids()[j] {
            Some(id) => {
                out.write_all(&[1])?;
                out.write_all(&id.to_le_bytes())?;
            }
            None => {
                out.write_all(&[0])?;
                out.write_all(&0i64.to_le_bytes())?;
            }
        }
        out.write_all(&fs.view_ids()[j].to_le_bytes())?;
        out.write_all(&[tag_byte(fs.split_tags()[j])])?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(input: &mut R) -> Result<FeatureSet> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format("bad magic, not a feature container".into()));
    }
    let version = read_u8(input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "feature container version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let d = read_len(input, "feature dimension")?;
    let n = read_len(input, "sample count")?;
    if d == 0 || n == 0 {
        return Err(Error::Format("empty feature container".into()));
    }
    let mut values = vec![0.0f64; d * n];
    for v in values.iter_mut() {
        *v = read_f64(input)?;
    }
    let features = DMatrix::from_vec(d, n, values);
    let mut person_ids = Vec::with_capacity(n);
    let mut view_ids = Vec::with_capacity(n);
    let mut split_tags = Vec::with_capacity(n);
    for _ in 0..n {
        let flag = read_u8(input)?;
        let id = read_i64(input)?;
        person_ids.push(if flag == 1 { Some(id) } else { None });
        view_ids.push(read_u32(input)?);
        split_tags.push(byte_tag(read_u8(input)?)?);
    }
    FeatureSet::new(features, person_ids, view_ids, split_tags)
}

fn write_matrix_row_major<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            write_f64(out, m[(i, j)])?;
        }
    }
    Ok(())
}

fn read_matrix_row_major<R: Read>(input: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = read_f64(input)?;
        }
    }
    Ok(m)
}

pub fn save_projection(p: &Projection, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(PROJECTION_MAGIC)?;
    out.write_all(&[FORMAT_VERSION])?;
    match p {
        Projection::Linear { basis } => {
            out.write_all(&[0])?;
            write_u64(&mut out, basis.nrows() as u64)?;
            write_u64(&mut out, basis.ncols() as u64)?;
            write_matrix_row_major(&mut out, basis)?;
        }
        Projection::Kernelized {
            coefficients,
            train_features,
            kinds,
            beta,
            mu,
        } => {
            out.write_all(&[1])?;
            write_u64(&mut out, coefficients.nrows() as u64)?;
            write_u64(&mut out, coefficients.ncols() as u64)?;
            write_matrix_row_major(&mut out, coefficients)?;
            write_u64(&mut out, train_features.nrows() as u64)?;
            write_u64(&mut out, train_features.ncols() as u64)?;
            write_matrix_row_major(&mut out, train_features)?;
            write_f64(&mut out, *mu)?;
            write_u64(&mut out, kinds.len() as u64)?;
            for kind in kinds {
                match kind {
                    KernelKind::Gaussian { c } => {
                        out.write_all(&[0])?;
                        write_f64(&mut out, *c)?;
                    }
                    KernelKind::Linear => {
                        out.write_all(&[1])?;
                        write_f64(&mut out, 0.0)?;
                    }
                }
            }
            for b in beta.iter() {
                write_f64(&mut out, *b)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_projection(path: &Path) -> Result<Projection> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != PROJECTION_MAGIC {
        return Err(Error::Format("bad magic, not a projection file".into()));
    }
    let version = read_u8(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "projection file version {version}, expected {FORMAT_VERSION}"
        )));
    }
    match read_u8(&mut input)? {
        0 => {
            let rows = read_len(&mut input, "basis rows")?;
            let cols = read_len(&mut input, "basis cols")?;
            let basis = read_matrix_row_major(&mut input, rows, cols)?;
            Ok(Projection::Linear { basis })
        }
        1 => {
            let rows = read_len(&mut input, "coefficient rows")?;
            let cols = read_len(&mut input, "coefficient cols")?;
            let coefficients = read_matrix_row_major(&mut input, rows, cols)?;
            let d = read_len(&mut input, "train feature dim")?;
            let m = read_len(&mut input, "train sample count")?;
            if m != rows {
                return Err(Error::Format(format!(
                    "coefficient rows {rows} do not match {m} training samples"
                )));
            }
            let train_features = read_matrix_row_major(&mut input, d, m)?;
            let mu = read_f64(&mut input)?;
            let members = read_len(&mut input, "kernel count")?;
            let mut kinds = Vec::with_capacity(members);
            for _ in 0..members {
                let kind = read_u8(&mut input)?;
                let c = read_f64(&mut input)?;
                kinds.push(match kind {
                    0 => KernelKind::Gaussian { c },
                    1 => KernelKind::Linear,
                    other => {
                        return Err(Error::Format(format!("unknown kernel kind byte {other}")))
                    }
                });
            }
            let mut beta = DVector::<f64>::zeros(members);
            for i in 0..members {
                beta[i] = read_f64(&mut input)?;
            }
            Ok(Projection::Kernelized {
                coefficients,
                train_features,
                kinds,
                beta,
                mu,
            })
        }
        other => Err(Error::Format(format!("unknown projection kind byte {other}"))),
    }
}
