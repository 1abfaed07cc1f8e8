//! Readers and writers for OFF, PLY and OBJ shapes and for plain-text
//! correspondence files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Mesh, PointCloud, PointMap, Point3, Shape};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeFormat {
    Off,
    Ply,
    Obj,
}

impl ShapeFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "off" => Ok(ShapeFormat::Off),
            "ply" => Ok(ShapeFormat::Ply),
            "obj" => Ok(ShapeFormat::Obj),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer shape format from {}; expected .off, .ply or .obj",
                path.display()
            ))),
        }
    }
}

/// Loads a shape; `format` defaults to the one implied by the extension.
/// Files with faces become meshes, files without become point clouds.
pub fn load_shape(path: impl AsRef<Path>, format: Option<ShapeFormat>) -> Result<Shape> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => ShapeFormat::from_path(path)?,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (positions, faces) = match format {
        ShapeFormat::Off => parse_off(path, text(path, &bytes)?)?,
        ShapeFormat::Obj => parse_obj(path, text(path, &bytes)?)?,
        ShapeFormat::Ply => parse_ply(path, &bytes)?,
    };
    if faces.is_empty() {
        Ok(Shape::Cloud(PointCloud::new(positions)?))
    } else {
        Ok(Shape::Mesh(Mesh::new(positions, faces)?))
    }
}

fn text<'a>(path: &Path, bytes: &'a [u8]) -> Result<&'a str> {
    std::str::from_utf8(bytes).map_err(|_| Error::parse(path, 0, "file is not valid UTF-8 text"))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} '{tok}'")))
}

fn parse_point(path: &Path, line: usize, toks: &[&str]) -> Result<Point3> {
    if toks.len() < 3 {
        return Err(Error::parse(path, line, "vertex needs three coordinates"));
    }
    let mut p = [0.0f64; 3];
    for d in 0..3 {
        p[d] = parse_num(path, line, toks[d], "coordinate")?;
        if !p[d].is_finite() {
            return Err(Error::parse(path, line, "non-finite coordinate"));
        }
    }
    Ok(p)
}

fn check_face(path: &Path, line: usize, f: [usize; 3], n: usize) -> Result<[usize; 3]> {
    if let Some(&v) = f.iter().find(|&&v| v >= n) {
        return Err(Error::parse(
            path,
            line,
            format!("face index {v} out of range for {n} vertices"),
        ));
    }
    Ok(f)
}

fn parse_off(path: &Path, src: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut lines = content_lines(src);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let mut header_toks = header.split_whitespace();
    if header_toks.next() != Some("OFF") {
        return Err(Error::parse(path, hl, "missing OFF header"));
    }
    let rest: Vec<&str> = header_toks.collect();
    let (cl, counts) = if rest.is_empty() {
        let (l, c) = lines
            .next()
            .ok_or_else(|| Error::parse(path, hl + 1, "missing element counts"))?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (hl, rest)
    };
    if counts.len() < 2 {
        return Err(Error::parse(path, cl, "expected vertex and face counts"));
    }
    let nv: usize = parse_num(path, cl, counts[0], "vertex count")?;
    let nf: usize = parse_num(path, cl, counts[1], "face count")?;

    let mut positions = Vec::with_capacity(nv);
    let mut last_line = cl;
    for k in 0..nv {
        let (l, s) = lines.next().ok_or_else(|| {
            Error::parse(
                path,
                last_line + 1,
                format!("expected {nv} vertices, found only {k}"),
            )
        })?;
        last_line = l;
        let toks: Vec<&str> = s.split_whitespace().collect();
        positions.push(parse_point(path, l, &toks)?);
    }
    let mut faces = Vec::with_capacity(nf);
    for k in 0..nf {
        let (l, s) = lines.next().ok_or_else(|| {
            Error::parse(path, last_line + 1, format!("expected {nf} faces, found only {k}"))
        })?;
        last_line = l;
        let toks: Vec<&str> = s.split_whitespace().collect();
        let arity: usize = parse_num(path, l, toks[0], "face arity")?;
        if arity != 3 {
            return Err(Error::parse(path, l, format!("only triangles are supported, face has {arity} vertices")));
        }
        if toks.len() < 4 {
            return Err(Error::parse(path, l, "truncated face"));
        }
        let f = [
            parse_num(path, l, toks[1], "face index")?,
            parse_num(path, l, toks[2], "face index")?,
            parse_num(path, l, toks[3], "face index")?,
        ];
        faces.push(check_face(path, l, f, nv)?);
    }
    Ok((positions, faces))
}

fn parse_obj(path: &Path, src: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut positions = Vec::new();
    let mut raw_faces = Vec::new();
    for (l, s) in content_lines(src) {
        let mut toks = s.split_whitespace();
        match toks.next() {
            Some("v") => {
                let rest: Vec<&str> = toks.collect();
                positions.push(parse_point(path, l, &rest)?);
            }
            Some("f") => {
                let refs: Vec<&str> = toks.collect();
                if refs.len() != 3 {
                    return Err(Error::parse(path, l, format!("only triangles are supported, face has {} vertices", refs.len())));
                }
                let mut f = [0i64; 3];
                for (d, r) in refs.iter().enumerate() {
                    let idx = r.split('/').next().unwrap_or("");
                    f[d] = parse_num(path, l, idx, "face index")?;
                }
                raw_faces.push((l, f, positions.len()));
            }
            _ => {}
        }
    }
    let n = positions.len();
    let faces = raw_faces
        .into_iter()
        .map(|(l, f, seen)| {
            let mut out = [0usize; 3];
            for d in 0..3 {
                let v = match f[d] {
                    0 => return Err(Error::parse(path, l, "OBJ indices are 1-based; found 0")),
                    i if i > 0 => (i - 1) as usize,
                    i => {
                        let back = (-i) as usize;
                        if back > seen {
                            return Err(Error::parse(path, l, format!("relative index {i} out of range")));
                        }
                        seen - back
                    }
                };
                out[d] = v;
            }
            check_face(path, l, out, n)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((positions, faces))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, Debug)]
enum PlyScalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyScalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => PlyScalar::I8,
            "uchar" | "uint8" => PlyScalar::U8,
            "short" | "int16" => PlyScalar::I16,
            "ushort" | "uint16" => PlyScalar::U16,
            "int" | "int32" => PlyScalar::I32,
            "uint" | "uint32" => PlyScalar::U32,
            "float" | "float32" => PlyScalar::F32,
            "double" | "float64" => PlyScalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyScalar::I8 | PlyScalar::U8 => 1,
            PlyScalar::I16 | PlyScalar::U16 => 2,
            PlyScalar::I32 | PlyScalar::U32 | PlyScalar::F32 => 4,
            PlyScalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            PlyScalar::I8 => b[0] as i8 as f64,
            PlyScalar::U8 => b[0] as f64,
            PlyScalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            PlyScalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            PlyScalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            PlyScalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            PlyScalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            PlyScalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum PlyProperty {
    Scalar(String, PlyScalar),
    List(String, PlyScalar, PlyScalar),
}

#[derive(Clone, Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    // Header is ASCII and ends with "end_header\n".
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::parse(path, 1, "missing end_header"))?;
    let mut body_start = end + marker.len();
    while body_start < bytes.len() && bytes[body_start] != b'\n' {
        body_start += 1;
    }
    body_start += 1;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::parse(path, 1, "header is not ASCII"))?;

    let mut encoding = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_lines = 0;
    for (i, line) in header.lines().enumerate() {
        header_lines = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("ply") if i == 0 => {}
            _ if i == 0 => return Err(Error::parse(path, 1, "missing 'ply' magic")),
            Some("format") => {
                encoding = Some(match toks.get(1).copied() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLe,
                    other => {
                        return Err(Error::parse(
                            path,
                            i + 1,
                            format!("unsupported PLY format {}", other.unwrap_or("")),
                        ))
                    }
                })
            }
            Some("element") => {
                if toks.len() < 3 {
                    return Err(Error::parse(path, i + 1, "malformed element line"));
                }
                elements.push(PlyElement {
                    name: toks[1].to_string(),
                    count: parse_num(path, i + 1, toks[2], "element count")?,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, i + 1, "property before any element"))?;
                let bad = || Error::parse(path, i + 1, "malformed property line");
                if toks.get(1) == Some(&"list") {
                    let c = PlyScalar::parse(toks.get(2).ok_or_else(bad)?).ok_or_else(bad)?;
                    let v = PlyScalar::parse(toks.get(3).ok_or_else(bad)?).ok_or_else(bad)?;
                    el.properties.push(PlyProperty::List(toks.get(4).ok_or_else(bad)?.to_string(), c, v));
                } else {
                    let t = PlyScalar::parse(toks.get(1).ok_or_else(bad)?).ok_or_else(bad)?;
                    el.properties.push(PlyProperty::Scalar(toks.get(2).ok_or_else(bad)?.to_string(), t));
                }
            }
            _ => {}
        }
    }
    let encoding = encoding.ok_or_else(|| Error::parse(path, 2, "missing format line"))?;
    let body = &bytes[body_start.min(bytes.len())..];
    let mut reader: Box<dyn PlyReader> = match encoding {
        PlyEncoding::Ascii => Box::new(AsciiBody::new(
            std::str::from_utf8(body).map_err(|_| Error::parse(path, header_lines + 1, "body is not ASCII"))?,
            header_lines + 1,
        )),
        PlyEncoding::BinaryLe => Box::new(BinaryBody { data: body, pos: 0 }),
    };

    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        let coord_slots: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|axis| {
                el.properties
                    .iter()
                    .position(|p| matches!(p, PlyProperty::Scalar(n, _) if n == axis))
            })
            .collect();
        for k in 0..el.count {
            reader.begin_record().map_err(|m| {
                Error::parse(path, reader.line(), format!("{m}; expected {} {} records, found {k}", el.count, el.name))
            })?;
            let mut scalars = Vec::with_capacity(el.properties.len());
            let mut list: Option<Vec<f64>> = None;
            for prop in &el.properties {
                match prop {
                    PlyProperty::Scalar(_, t) => {
                        scalars.push(reader.next(*t).map_err(|m| Error::parse(path, reader.line(), m))?);
                    }
                    PlyProperty::List(name, ct, vt) => {
                        let len = reader.next(*ct).map_err(|m| Error::parse(path, reader.line(), m))? as usize;
                        let mut vals = Vec::with_capacity(len);
                        for _ in 0..len {
                            vals.push(reader.next(*vt).map_err(|m| Error::parse(path, reader.line(), m))?);
                        }
                        if name == "vertex_indices" || name == "vertex_index" {
                            list = Some(vals);
                        }
                        scalars.push(f64::NAN);
                    }
                }
            }
            if el.name == "vertex" {
                let mut p = [0.0; 3];
                for d in 0..3 {
                    let slot = coord_slots[d]
                        .ok_or_else(|| Error::parse(path, reader.line(), "vertex element lacks x/y/z"))?;
                    p[d] = scalars[slot];
                    if !p[d].is_finite() {
                        return Err(Error::parse(path, reader.line(), "non-finite coordinate"));
                    }
                }
                positions.push(p);
            } else if el.name == "face" {
                let vals = list.ok_or_else(|| Error::parse(path, reader.line(), "face element lacks vertex_indices"))?;
                if vals.len() != 3 {
                    return Err(Error::parse(
                        path,
                        reader.line(),
                        format!("only triangles are supported, face has {} vertices", vals.len()),
                    ));
                }
                let f = [vals[0] as usize, vals[1] as usize, vals[2] as usize];
                faces.push((reader.line(), f));
            }
        }
    }
    let n = positions.len();
    let faces = faces
        .into_iter()
        .map(|(l, f)| check_face(path, l, f, n))
        .collect::<Result<Vec<_>>>()?;
    Ok((positions, faces))
}

trait PlyReader {
    fn begin_record(&mut self) -> std::result::Result<(), String>;
    fn next(&mut self, t: PlyScalar) -> std::result::Result<f64, String>;
    fn line(&self) -> usize;
}

struct AsciiBody<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    first_line: usize,
    current: Vec<&'a str>,
    cursor: usize,
    line_no: usize,
}

impl<'a> AsciiBody<'a> {
    fn new(src: &'a str, first_line: usize) -> Self {
        Self {
            lines: src.lines().enumerate().peekable(),
            first_line,
            current: Vec::new(),
            cursor: 0,
            line_no: first_line,
        }
    }
}

impl PlyReader for AsciiBody<'_> {
    fn begin_record(&mut self) -> std::result::Result<(), String> {
        loop {
            match self.lines.next() {
                Some((i, l)) => {
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    if toks.is_empty() {
                        continue;
                    }
                    self.current = toks;
                    self.cursor = 0;
                    self.line_no = self.first_line + i;
                    return Ok(());
                }
                None => return Err("unexpected end of file".into()),
            }
        }
    }

    fn next(&mut self, _t: PlyScalar) -> std::result::Result<f64, String> {
        let tok = self
            .current
            .get(self.cursor)
            .ok_or_else(|| "record has too few values".to_string())?;
        self.cursor += 1;
        tok.parse::<f64>().map_err(|_| format!("invalid number '{tok}'"))
    }

    fn line(&self) -> usize {
        self.line_no
    }
}

struct BinaryBody<'a> {
    data: &'a [u8],
    pos: usize,
}

impl PlyReader for BinaryBody<'_> {
    fn begin_record(&mut self) -> std::result::Result<(), String> {
        Ok(())
    }

    fn next(&mut self, t: PlyScalar) -> std::result::Result<f64, String> {
        let s = t.size();
        if self.pos + s > self.data.len() {
            return Err("unexpected end of binary body".into());
        }
        let v = t.read_le(&self.data[self.pos..self.pos + s]);
        self.pos += s;
        Ok(v)
    }

    // Binary bodies have no lines; report the byte offset instead.
    fn line(&self) -> usize {
        self.pos
    }
}

/// Writes a shape in the format implied by the extension. Coordinates are
/// written with full round-trip precision.
pub fn save_shape(path: impl AsRef<Path>, shape: &Shape) -> Result<()> {
    let path = path.as_ref();
    let format = ShapeFormat::from_path(path)?;
    let (positions, faces): (&[Point3], &[[usize; 3]]) = match shape {
        Shape::Mesh(m) => (m.positions(), m.faces()),
        Shape::Cloud(c) => (c.positions(), &[]),
    };
    let mut out = String::new();
    use std::fmt::Write as _;
    match format {
        ShapeFormat::Off => {
            let _ = writeln!(out, "OFF\n{} {} 0", positions.len(), faces.len());
            for p in positions {
                let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
            }
            for f in faces {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
        ShapeFormat::Obj => {
            for p in positions {
                let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
            }
            for f in faces {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
        ShapeFormat::Ply => return write_ply(path, positions, faces, None),
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// ASCII PLY with per-vertex RGB colors.
pub fn write_ply_colored(path: impl AsRef<Path>, positions: &[Point3], faces: &[[usize; 3]], colors: &[[u8; 3]]) -> Result<()> {
    if colors.len() != positions.len() {
        return Err(Error::shape("write_ply_colored", "one color per vertex required"));
    }
    write_ply(path.as_ref(), positions, faces, Some(colors))
}

fn write_ply(path: &Path, positions: &[Point3], faces: &[[usize; 3]], colors: Option<&[[u8; 3]]>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", positions.len()).map_err(io)?;
    writeln!(w, "property double x\nproperty double y\nproperty double z").map_err(io)?;
    if colors.is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue").map_err(io)?;
    }
    if !faces.is_empty() {
        writeln!(w, "element face {}\nproperty list uchar int vertex_indices", faces.len()).map_err(io)?;
    }
    writeln!(w, "end_header").map_err(io)?;
    for (i, p) in positions.iter().enumerate() {
        match colors {
            Some(c) => writeln!(w, "{} {} {} {} {} {}", p[0], p[1], p[2], c[i][0], c[i][1], c[i][2]),
            None => writeln!(w, "{} {} {}", p[0], p[1], p[2]),
        }
        .map_err(io)?;
    }
    for f in faces {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2]).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a correspondence file: one target index per line, line `i` holding
/// the image of source vertex `i`. Indices are 1-based unless `zero_indexed`.
pub fn read_map(path: impl AsRef<Path>, zero_indexed: bool) -> Result<PointMap> {
    let path = path.as_ref();
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut targets = Vec::new();
    for (l, s) in content_lines(&src) {
        let v: usize = parse_num(path, l, s, "vertex index")?;
        if zero_indexed {
            targets.push(v);
        } else {
            if v == 0 {
                return Err(Error::parse(path, l, "index 0 in a 1-indexed map file"));
            }
            targets.push(v - 1);
        }
    }
    Ok(PointMap::new(targets))
}

pub fn write_map(path: impl AsRef<Path>, map: &PointMap, zero_indexed: bool) -> Result<()> {
    let path = path.as_ref();
    let offset = usize::from(!zero_indexed);
    let mut out = String::with_capacity(map.source_size() * 6);
    for &t in map.targets() {
        out.push_str(&(t + offset).to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
