use crate::error::{Error, Result};
use crate::network::Vec3;

/// Parses whitespace-separated `x y z [nx ny nz]` rows. Blank lines and
/// `#` comments are skipped; every row must have the same arity.
pub(crate) fn parse(text: &str, label: &str) -> Result<(Vec<Vec3>, Option<Vec<Vec3>>)> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut arity = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut vals = [0.0; 6];
        let mut n = 0;
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            if n == 6 {
                return Err(Error::parse(label, line_no, "more than 6 values"));
            }
            vals[n] = tok
                .parse()
                .map_err(|_| Error::parse(label, line_no, format!("`{tok}` is not a number")))?;
            n += 1;
        }
        if n != 3 && n != 6 {
            return Err(Error::parse(label, line_no, format!("expected 3 or 6 values, found {n}")));
        }
        match arity {
            None => arity = Some(n),
            Some(a) if a != n => {
                return Err(Error::parse(label, line_no, format!("expected {a} values like the first row, found {n}")))
            }
            _ => {}
        }
        points.push(Vec3::new(vals[0], vals[1], vals[2]));
        if n == 6 {
            normals.push(Vec3::new(vals[3], vals[4], vals[5]));
        }
    }
    let normals = (arity == Some(6)).then_some(normals);
    Ok((points, normals))
}

pub(crate) fn write(points: &[Vec3], normals: Option<&[Vec3]>) -> String {
    let mut out = String::with_capacity(points.len() * 64);
    for (i, p) in points.iter().enumerate() {
        out.push_str(&format!("{:?} {:?} {:?}", p[0], p[1], p[2]));
        if let Some(n) = normals {
            out.push_str(&format!(" {:?} {:?} {:?}", n[i][0], n[i][1], n[i][2]));
        }
        out.push('\n');
    }
    out
}
