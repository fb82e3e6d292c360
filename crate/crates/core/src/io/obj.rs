use crate::error::{Error, Result};
use crate::network::Vec3;

/// Reads `v` and `f` records. Polygons are fan-triangulated, `v/vt/vn`
/// references keep only the vertex index and negative indices count back
/// from the latest vertex. Everything else is ignored.
pub(crate) fn parse(text: &str, label: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| Error::parse(label, line_no, "vertex needs 3 coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| Error::parse(label, line_no, format!("`{tok}` is not a number")))?;
                }
                // an optional w or per-vertex colour may follow; ignore it
                vertices.push(Vec3::from(p));
            }
            Some("f") => {
                let mut idx = Vec::with_capacity(4);
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let raw: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(label, line_no, format!("bad face index `{tok}`")))?;
                    let resolved = match raw {
                        r if r > 0 => r - 1,
                        r if r < 0 => vertices.len() as i64 + r,
                        _ => return Err(Error::parse(label, line_no, "face index 0 is invalid")),
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::parse(label, line_no, format!("face index {raw} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(Error::parse(label, line_no, "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

pub(crate) fn write(vertices: &[Vec3], triangles: &[[usize; 3]]) -> String {
    let mut out = String::with_capacity(vertices.len() * 60 + triangles.len() * 24);
    for v in vertices {
        out.push_str(&format!("v {:?} {:?} {:?}\n", v[0], v[1], v[2]));
    }
    for t in triangles {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    out
}
