//! Minimal PLY support: ASCII and binary little-endian bodies, scalar and
//! list properties, arbitrary elements.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Property {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Column {
    Scalar(Vec<f64>),
    List(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Element {
    pub name: String,
    pub count: usize,
    pub properties: Vec<Property>,
    pub columns: Vec<Column>,
}

impl Element {
    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        let i = self.properties.iter().position(|p| p.name == name)?;
        match &self.columns[i] {
            Column::Scalar(v) => Some(v),
            Column::List(_) => None,
        }
    }

    pub fn list(&self, names: &[&str]) -> Option<&[Vec<f64>]> {
        let i = self.properties.iter().position(|p| names.contains(&p.name.as_str()))?;
        match &self.columns[i] {
            Column::List(v) => Some(v),
            Column::Scalar(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Ply {
    pub format: PlyFormat,
    pub elements: Vec<Element>,
}

impl Ply {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }
}

/// Upper bound on list lengths; real files never come close and it keeps a
/// corrupt count from requesting absurd allocations.
const MAX_LIST_LEN: usize = 1 << 16;

pub(crate) fn parse(bytes: &[u8], label: &str) -> Result<Ply> {
    let err = |line: usize, msg: String| Error::parse(label, line, msg);
    let mut pos = 0;
    let mut line_no = 0;
    let next_line = |pos: &mut usize| -> Option<&[u8]> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| *pos + i);
        let line = &bytes[*pos..end];
        *pos = (end + 1).min(bytes.len());
        Some(line.strip_suffix(b"\r").unwrap_or(line))
    };

    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_magic = false;
    loop {
        line_no += 1;
        let raw = next_line(&mut pos).ok_or_else(|| err(line_no, "header ends before end_header".into()))?;
        let text = std::str::from_utf8(raw).map_err(|_| err(line_no, "header is not UTF-8".into()))?;
        let words: Vec<&str> = text.split_whitespace().collect();
        if !saw_magic {
            if words != ["ply"] {
                return Err(err(line_no, "missing `ply` magic".into()));
            }
            saw_magic = true;
            continue;
        }
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, version] => {
                if *version != "1.0" {
                    return Err(err(line_no, format!("unsupported PLY version {version}")));
                }
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(err(line_no, format!("unsupported PLY format {other}"))),
                });
            }
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| err(line_no, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    columns: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(line_no, "property before any element".into()))?;
                let (Some(count), Some(item)) = (ScalarType::parse(count), ScalarType::parse(item)) else {
                    return Err(err(line_no, "unknown list property type".into()));
                };
                if !count.is_integer() {
                    return Err(err(line_no, "list count type must be an integer".into()));
                }
                el.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::List { count, item },
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(line_no, "property before any element".into()))?;
                let ty = ScalarType::parse(ty).ok_or_else(|| err(line_no, format!("unknown property type `{ty}`")))?;
                el.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::Scalar(ty),
                });
            }
            ["end_header"] => break,
            _ => return Err(err(line_no, format!("unrecognized header line `{text}`"))),
        }
    }
    let format = format.ok_or_else(|| err(line_no, "header has no format line".into()))?;
    let body = &bytes[pos..];
    match format {
        PlyFormat::Ascii => read_ascii(body, line_no, &mut elements, label)?,
        PlyFormat::BinaryLittleEndian => read_binary(body, &mut elements, label)?,
    }
    Ok(Ply { format, elements })
}

fn empty_columns(el: &Element, reserve: usize) -> Vec<Column> {
    el.properties
        .iter()
        .map(|p| match p.kind {
            PropertyKind::Scalar(_) => Column::Scalar(Vec::with_capacity(reserve)),
            PropertyKind::List { .. } => Column::List(Vec::with_capacity(reserve)),
        })
        .collect()
}

fn read_ascii(body: &[u8], header_lines: usize, elements: &mut [Element], label: &str) -> Result<()> {
    let text = std::str::from_utf8(body).map_err(|_| Error::parse(label, header_lines + 1, "body is not UTF-8"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (header_lines + 1 + i, l))
        .filter(|(_, l)| !l.trim().is_empty());
    for el in elements.iter_mut() {
        let mut cols = empty_columns(el, el.count.min(body.len() / 2 + 1));
        for row in 0..el.count {
            let (line_no, line) = lines.next().ok_or_else(|| {
                Error::parse(
                    label,
                    header_lines,
                    format!("element `{}` declares {} rows but the file ends at row {row}", el.name, el.count),
                )
            })?;
            let mut tokens = line.split_whitespace();
            let mut number = |what: &str| -> Result<f64> {
                let tok = tokens
                    .next()
                    .ok_or_else(|| Error::parse(label, line_no, format!("missing {what}")))?;
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(label, line_no, format!("`{tok}` is not a number")))
            };
            for (p, col) in el.properties.iter().zip(cols.iter_mut()) {
                match (&p.kind, col) {
                    (PropertyKind::Scalar(_), Column::Scalar(v)) => v.push(number(&p.name)?),
                    (PropertyKind::List { .. }, Column::List(v)) => {
                        let n = number("list length")?;
                        if !(n >= 0.0 && n.fract() == 0.0 && n <= MAX_LIST_LEN as f64) {
                            return Err(Error::parse(label, line_no, format!("bad list length {n}")));
                        }
                        let items = (0..n as usize).map(|_| number(&p.name)).collect::<Result<Vec<_>>>()?;
                        v.push(items);
                    }
                    _ => unreachable!(),
                }
            }
            if let Some(extra) = tokens.next() {
                return Err(Error::parse(label, line_no, format!("unexpected trailing value `{extra}`")));
            }
        }
        el.columns = cols;
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(Error::parse(label, line_no, "data after the last declared element"));
    }
    Ok(())
}

fn read_binary(body: &[u8], elements: &mut [Element], label: &str) -> Result<()> {
    let mut pos = 0usize;
    let truncated = |el: &str, row: usize| Error::parse(label, 0, format!("binary body truncated in element `{el}` at row {row}"));
    for el in elements.iter_mut() {
        // every row needs at least one byte per property
        let min_row: usize = el
            .properties
            .iter()
            .map(|p| match p.kind {
                PropertyKind::Scalar(t) => t.size(),
                PropertyKind::List { count, .. } => count.size(),
            })
            .sum();
        if el.count.saturating_mul(min_row) > body.len() - pos {
            return Err(truncated(&el.name, (body.len() - pos) / min_row.max(1)));
        }
        let mut cols = empty_columns(el, el.count);
        for row in 0..el.count {
            for (p, col) in el.properties.iter().zip(cols.iter_mut()) {
                match (&p.kind, col) {
                    (PropertyKind::Scalar(t), Column::Scalar(v)) => {
                        let b = body.get(pos..pos + t.size()).ok_or_else(|| truncated(&el.name, row))?;
                        v.push(t.decode(b));
                        pos += t.size();
                    }
                    (PropertyKind::List { count, item }, Column::List(v)) => {
                        let b = body.get(pos..pos + count.size()).ok_or_else(|| truncated(&el.name, row))?;
                        let n = count.decode(b);
                        pos += count.size();
                        if !(n >= 0.0 && n <= MAX_LIST_LEN as f64) {
                            return Err(Error::parse(label, 0, format!("bad list length {n} in `{}` row {row}", el.name)));
                        }
                        let n = n as usize;
                        let need = n * item.size();
                        let raw = body.get(pos..pos + need).ok_or_else(|| truncated(&el.name, row))?;
                        v.push(raw.chunks_exact(item.size()).map(|c| item.decode(c)).collect());
                        pos += need;
                    }
                    _ => unreachable!(),
                }
            }
        }
        el.columns = cols;
    }
    if pos != body.len() {
        return Err(Error::parse(label, 0, format!("{} bytes after the last element", body.len() - pos)));
    }
    Ok(())
}

/// A scalar property column to write.
pub(crate) struct OutScalar<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Writes a vertex element of `double` scalars and an optional face
/// element of `uchar`-counted `int` index lists.
pub(crate) fn write(format: PlyFormat, vertex: &[OutScalar<'_>], faces: Option<&[[usize; 3]]>) -> Vec<u8> {
    let n = vertex.first().map_or(0, |c| c.values.len());
    let mut out = String::new();
    out.push_str("ply\n");
    out.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    out.push_str(&format!("element vertex {n}\n"));
    for c in vertex {
        out.push_str(&format!("property double {}\n", c.name));
    }
    if let Some(f) = faces {
        out.push_str(&format!("element face {}\nproperty list uchar int vertex_indices\n", f.len()));
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    match format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            for i in 0..n {
                let row: Vec<String> = vertex.iter().map(|c| format!("{:?}", c.values[i])).collect();
                body.push_str(&row.join(" "));
                body.push('\n');
            }
            for t in faces.unwrap_or(&[]) {
                body.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
            }
            bytes.extend_from_slice(body.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            for i in 0..n {
                for c in vertex {
                    bytes.extend_from_slice(&c.values[i].to_le_bytes());
                }
            }
            for t in faces.unwrap_or(&[]) {
                bytes.push(3);
                for &v in t {
                    bytes.extend_from_slice(&(v as i32).to_le_bytes());
                }
            }
        }
    }
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ascii_with_lists_and_comments() {
        let src = b"ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float x\nproperty float y\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n1 2\n3 4\n3 0 1 1\n";
        let ply = parse(src, "t.ply").unwrap();
        let v = ply.element("vertex").unwrap();
        assert_eq!(v.scalar("x").unwrap(), &[1.0, 3.0]);
        assert_eq!(ply.element("face").unwrap().list(&["vertex_indices"]).unwrap()[0], vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn binary_round_trip() {
        let xs = [0.1, -2.5];
        let ys = [1e-300, 7.0];
        let bytes = write(
            PlyFormat::BinaryLittleEndian,
            &[OutScalar { name: "x", values: &xs }, OutScalar { name: "y", values: &ys }],
            Some(&[[0, 1, 0]]),
        );
        let ply = parse(&bytes, "b.ply").unwrap();
        assert_eq!(ply.format, PlyFormat::BinaryLittleEndian);
        assert_eq!(ply.element("vertex").unwrap().scalar("y").unwrap(), &ys);
        for cut in 0..bytes.len() {
            assert!(parse(&bytes[..cut], "b.ply").is_err(), "cut {cut}");
        }
    }

    #[test]
    fn errors_name_the_line() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nend_header\n1 2\n3\n";
        let e = parse(src, "bad.ply").unwrap_err().to_string();
        assert!(e.contains("bad.ply") && e.contains("line 8"), "{e}");
        assert!(parse(b"plx\n", "m.ply").is_err());
        assert!(parse(b"ply\nformat binary_big_endian 1.0\nend_header\n", "m.ply").is_err());
        let short = b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nend_header\n1\n2\n";
        assert!(parse(short, "s.ply").unwrap_err().to_string().contains("3 rows"));
    }
}
