//! PCD v0.7 and PLY reading/writing.
//!
//! Both formats support ASCII and binary little-endian encodings and the
//! field sets {x y z}, {x y z, colour}, {x y z, normals} and their union.
//! Colours in PCD use the packed-float `rgb` convention
//! (`0x00RRGGBB` reinterpreted as a float); PLY uses `uchar` red/green/blue.

use super::{CloudError, PointCloud};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Point3, Vector3};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Pcd,
    Ply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    Binary,
}

/// Guesses the format from the file extension.
pub fn format_from_path(path: &Path) -> Option<CloudFormat> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "pcd" => Some(CloudFormat::Pcd),
        "ply" => Some(CloudFormat::Ply),
        _ => None,
    }
}

pub fn write_cloud(
    cloud: &PointCloud,
    path: &Path,
    format: CloudFormat,
    encoding: Encoding,
) -> Result<(), CloudError> {
    cloud.validate()?;
    let bytes = match format {
        CloudFormat::Pcd => encode_pcd(cloud, encoding),
        CloudFormat::Ply => encode_ply(cloud, encoding),
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud, CloudError> {
    let data = std::fs::read(path)?;
    match format {
        CloudFormat::Pcd => decode_pcd(&data),
        CloudFormat::Ply => decode_ply(&data),
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> CloudError {
    CloudError::Parse {
        offset: offset as u64,
        message: message.into(),
    }
}

fn pack_rgb([r, g, b]: [u8; 3]) -> f32 {
    f32::from_bits(((r as u32) << 16) | ((g as u32) << 8) | b as u32)
}

fn unpack_rgb(v: f32) -> [u8; 3] {
    let bits = v.to_bits();
    [(bits >> 16) as u8, (bits >> 8) as u8, bits as u8]
}

// ---------------------------------------------------------------- writing

fn encode_pcd(cloud: &PointCloud, encoding: Encoding) -> Vec<u8> {
    let has_rgb = cloud.colors.is_some();
    let has_normals = cloud.normals.is_some();
    let mut fields = vec!["x", "y", "z"];
    if has_rgb {
        fields.push("rgb");
    }
    if has_normals {
        fields.extend_from_slice(&["normal_x", "normal_y", "normal_z"]);
    }
    let n = cloud.len();
    let mut header = String::new();
    let _ = writeln!(header, "# .PCD v0.7 - Point Cloud Data file format");
    let _ = writeln!(header, "VERSION 0.7");
    let _ = writeln!(header, "FIELDS {}", fields.join(" "));
    let _ = writeln!(header, "SIZE {}", vec!["4"; fields.len()].join(" "));
    let _ = writeln!(header, "TYPE {}", vec!["F"; fields.len()].join(" "));
    let _ = writeln!(header, "COUNT {}", vec!["1"; fields.len()].join(" "));
    let _ = writeln!(header, "WIDTH {n}");
    let _ = writeln!(header, "HEIGHT 1");
    let _ = writeln!(header, "VIEWPOINT 0 0 0 1 0 0 0");
    let _ = writeln!(header, "POINTS {n}");
    let _ = writeln!(
        header,
        "DATA {}",
        match encoding {
            Encoding::Ascii => "ascii",
            Encoding::Binary => "binary",
        }
    );

    let mut out = header.into_bytes();
    for i in 0..n {
        let p = &cloud.points[i];
        let mut values: Vec<f32> = vec![p.x as f32, p.y as f32, p.z as f32];
        if let Some(colors) = &cloud.colors {
            values.push(pack_rgb(colors[i]));
        }
        if let Some(normals) = &cloud.normals {
            let m = normals[i];
            values.extend_from_slice(&[m.x as f32, m.y as f32, m.z as f32]);
        }
        match encoding {
            Encoding::Ascii => {
                let line = values
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                out.extend_from_slice(line.as_bytes());
                out.push(b'\n');
            }
            Encoding::Binary => {
                for v in values {
                    out.write_f32::<LittleEndian>(v).expect("vec write");
                }
            }
        }
    }
    out
}

fn encode_ply(cloud: &PointCloud, encoding: Encoding) -> Vec<u8> {
    let n = cloud.len();
    let mut header = String::new();
    let _ = writeln!(header, "ply");
    let _ = writeln!(
        header,
        "format {} 1.0",
        match encoding {
            Encoding::Ascii => "ascii",
            Encoding::Binary => "binary_little_endian",
        }
    );
    let _ = writeln!(header, "element vertex {n}");
    let _ = writeln!(header, "property float x");
    let _ = writeln!(header, "property float y");
    let _ = writeln!(header, "property float z");
    if cloud.colors.is_some() {
        let _ = writeln!(header, "property uchar red");
        let _ = writeln!(header, "property uchar green");
        let _ = writeln!(header, "property uchar blue");
    }
    if cloud.normals.is_some() {
        let _ = writeln!(header, "property float nx");
        let _ = writeln!(header, "property float ny");
        let _ = writeln!(header, "property float nz");
    }
    let _ = writeln!(header, "end_header");

    let mut out = header.into_bytes();
    for i in 0..n {
        let p = &cloud.points[i];
        match encoding {
            Encoding::Ascii => {
                let mut line = format!("{} {} {}", p.x as f32, p.y as f32, p.z as f32);
                if let Some(colors) = &cloud.colors {
                    let [r, g, b] = colors[i];
                    let _ = write!(line, " {r} {g} {b}");
                }
                if let Some(normals) = &cloud.normals {
                    let m = normals[i];
                    let _ = write!(line, " {} {} {}", m.x as f32, m.y as f32, m.z as f32);
                }
                out.extend_from_slice(line.as_bytes());
                out.push(b'\n');
            }
            Encoding::Binary => {
                out.write_f32::<LittleEndian>(p.x as f32).expect("vec write");
                out.write_f32::<LittleEndian>(p.y as f32).expect("vec write");
                out.write_f32::<LittleEndian>(p.z as f32).expect("vec write");
                if let Some(colors) = &cloud.colors {
                    out.extend_from_slice(&colors[i]);
                }
                if let Some(normals) = &cloud.normals {
                    let m = normals[i];
                    out.write_f32::<LittleEndian>(m.x as f32).expect("vec write");
                    out.write_f32::<LittleEndian>(m.y as f32).expect("vec write");
                    out.write_f32::<LittleEndian>(m.z as f32).expect("vec write");
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------- reading

/// Line-oriented reader over raw bytes that tracks byte offsets.
struct Lines<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(data: &'a [u8]) -> Self {
        Lines { data, pos: 0 }
    }

    /// Next line (without the terminator) and its starting offset.
    fn next_line(&mut self) -> Result<(usize, &'a str), CloudError> {
        if self.pos >= self.data.len() {
            return Err(parse_err(self.data.len(), "unexpected end of file"));
        }
        let start = self.pos;
        let rest = &self.data[start..];
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        self.pos = start + if end < rest.len() { end + 1 } else { end };
        let mut line = &rest[..end];
        if line.last() == Some(&b'\r') {
            line = &line[..line.len() - 1];
        }
        let text = std::str::from_utf8(line)
            .map_err(|_| parse_err(start, "header line is not valid UTF-8"))?;
        Ok((start, text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PcdFieldSet {
    Xyz,
    XyzRgb,
    XyzNormals,
    XyzRgbNormals,
}

impl PcdFieldSet {
    fn from_names(names: &[&str]) -> Option<Self> {
        match names {
            ["x", "y", "z"] => Some(PcdFieldSet::Xyz),
            ["x", "y", "z", "rgb"] => Some(PcdFieldSet::XyzRgb),
            ["x", "y", "z", "normal_x", "normal_y", "normal_z"] => Some(PcdFieldSet::XyzNormals),
            ["x", "y", "z", "rgb", "normal_x", "normal_y", "normal_z"] => {
                Some(PcdFieldSet::XyzRgbNormals)
            }
            _ => None,
        }
    }

    fn count(self) -> usize {
        match self {
            PcdFieldSet::Xyz => 3,
            PcdFieldSet::XyzRgb => 4,
            PcdFieldSet::XyzNormals => 6,
            PcdFieldSet::XyzRgbNormals => 7,
        }
    }

    fn has_rgb(self) -> bool {
        matches!(self, PcdFieldSet::XyzRgb | PcdFieldSet::XyzRgbNormals)
    }

    fn has_normals(self) -> bool {
        matches!(self, PcdFieldSet::XyzNormals | PcdFieldSet::XyzRgbNormals)
    }
}

fn decode_pcd(data: &[u8]) -> Result<PointCloud, CloudError> {
    let mut lines = Lines::new(data);
    let mut fields: Option<(usize, PcdFieldSet)> = None;
    let mut width: Option<usize> = None;
    let mut height: usize = 1;
    let mut points: Option<usize> = None;
    let encoding;
    let payload_start;

    loop {
        let (offset, line) = lines.next_line()?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_ascii_whitespace();
        let key = tokens.next().unwrap_or("");
        let rest: Vec<&str> = tokens.collect();
        match key {
            "VERSION" => {
                if rest != ["0.7"] && rest != [".7"] {
                    return Err(parse_err(offset, format!("unsupported version {rest:?}")));
                }
            }
            "FIELDS" => {
                let set = PcdFieldSet::from_names(&rest).ok_or_else(|| {
                    parse_err(offset, format!("unsupported fields {}", rest.join(" ")))
                })?;
                fields = Some((offset, set));
            }
            "SIZE" => {
                if rest.iter().any(|s| *s != "4") {
                    return Err(parse_err(offset, "only 4-byte fields are supported"));
                }
            }
            "TYPE" => {
                if rest.iter().any(|s| *s != "F") {
                    return Err(parse_err(offset, "only float fields are supported"));
                }
            }
            "COUNT" => {
                if rest.iter().any(|s| *s != "1") {
                    return Err(parse_err(offset, "multi-count fields are not supported"));
                }
            }
            "WIDTH" => {
                width = Some(parse_usize(offset, rest.first().copied(), "WIDTH")?);
            }
            "HEIGHT" => {
                height = parse_usize(offset, rest.first().copied(), "HEIGHT")?;
            }
            "VIEWPOINT" => {}
            "POINTS" => {
                points = Some(parse_usize(offset, rest.first().copied(), "POINTS")?);
            }
            "DATA" => {
                encoding = match rest.first().copied() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary") => Encoding::Binary,
                    other => {
                        return Err(parse_err(
                            offset,
                            format!("unsupported data encoding {other:?}"),
                        ))
                    }
                };
                payload_start = lines.pos;
                break;
            }
            _ => return Err(parse_err(offset, format!("unknown header entry {key}"))),
        }
    }

    let (fields_offset, field_set) =
        fields.ok_or_else(|| parse_err(payload_start, "missing FIELDS entry"))?;
    let n = match (points, width) {
        (Some(p), _) => p,
        (None, Some(w)) => w * height,
        (None, None) => return Err(parse_err(payload_start, "missing POINTS and WIDTH")),
    };
    if let Some(w) = width {
        if w * height != n {
            return Err(parse_err(
                fields_offset,
                format!("WIDTH {w} x HEIGHT {height} does not match POINTS {n}"),
            ));
        }
    }

    let mut cloud = PointCloud::new("unspecified");
    cloud.points.reserve(n);
    if field_set.has_rgb() {
        cloud.colors = Some(Vec::with_capacity(n));
    }
    if field_set.has_normals() {
        cloud.normals = Some(Vec::with_capacity(n));
    }

    match encoding {
        Encoding::Ascii => {
            let mut lines = Lines {
                data,
                pos: payload_start,
            };
            for _ in 0..n {
                let (offset, line) = lines
                    .next_line()
                    .map_err(|_| parse_err(data.len(), format!("expected {n} data rows")))?;
                let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
                if tokens.len() != field_set.count() {
                    return Err(parse_err(
                        offset,
                        format!(
                            "expected {} values per row, got {}",
                            field_set.count(),
                            tokens.len()
                        ),
                    ));
                }
                let mut values = tokens.iter().map(|t| {
                    t.parse::<f32>()
                        .map_err(|_| parse_err(offset, format!("invalid float {t:?}")))
                });
                let mut next = || values.next().expect("token count checked");
                let (x, y, z) = (next()?, next()?, next()?);
                cloud.points.push(Point3::new(x as f64, y as f64, z as f64));
                if let Some(colors) = &mut cloud.colors {
                    colors.push(unpack_rgb(next()?));
                }
                if let Some(normals) = &mut cloud.normals {
                    let (nx, ny, nz) = (next()?, next()?, next()?);
                    normals.push(Vector3::new(nx as f64, ny as f64, nz as f64));
                }
            }
        }
        Encoding::Binary => {
            let stride = 4 * field_set.count();
            let need = n * stride;
            let payload = &data[payload_start.min(data.len())..];
            if payload.len() < need {
                return Err(parse_err(
                    data.len(),
                    format!("binary payload truncated: need {need} bytes, have {}", payload.len()),
                ));
            }
            let mut reader = payload;
            for _ in 0..n {
                let x = reader.read_f32::<LittleEndian>().expect("length checked");
                let y = reader.read_f32::<LittleEndian>().expect("length checked");
                let z = reader.read_f32::<LittleEndian>().expect("length checked");
                cloud.points.push(Point3::new(x as f64, y as f64, z as f64));
                if let Some(colors) = &mut cloud.colors {
                    let v = reader.read_f32::<LittleEndian>().expect("length checked");
                    colors.push(unpack_rgb(v));
                }
                if let Some(normals) = &mut cloud.normals {
                    let nx = reader.read_f32::<LittleEndian>().expect("length checked");
                    let ny = reader.read_f32::<LittleEndian>().expect("length checked");
                    let nz = reader.read_f32::<LittleEndian>().expect("length checked");
                    normals.push(Vector3::new(nx as f64, ny as f64, nz as f64));
                }
            }
        }
    }
    Ok(cloud)
}

fn parse_usize(offset: usize, token: Option<&str>, key: &str) -> Result<usize, CloudError> {
    token
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| parse_err(offset, format!("invalid {key} value")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyType {
    F32,
    F64,
    U8,
}

impl PlyType {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "float" | "float32" => Some(PlyType::F32),
            "double" | "float64" => Some(PlyType::F64),
            "uchar" | "uint8" => Some(PlyType::U8),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            PlyType::F32 => 4,
            PlyType::F64 => 8,
            PlyType::U8 => 1,
        }
    }
}

const PLY_SCALAR_NAMES: [&str; 9] = ["x", "y", "z", "red", "green", "blue", "nx", "ny", "nz"];

fn decode_ply(data: &[u8]) -> Result<PointCloud, CloudError> {
    let mut lines = Lines::new(data);
    let (offset, magic) = lines.next_line()?;
    if magic.trim() != "ply" {
        return Err(parse_err(offset, "missing ply magic"));
    }
    let mut encoding: Option<Encoding> = None;
    let mut vertex_count: Option<usize> = None;
    let mut props: Vec<(String, PlyType)> = Vec::new();
    let mut in_vertex_element = false;
    let payload_start;

    loop {
        let (offset, line) = lines.next_line()?;
        let line = line.trim();
        let mut tokens = line.split_ascii_whitespace();
        match tokens.next().unwrap_or("") {
            "comment" | "obj_info" | "" => {}
            "format" => {
                let kind = tokens.next().unwrap_or("");
                let version = tokens.next().unwrap_or("");
                if version != "1.0" {
                    return Err(parse_err(offset, format!("unsupported version {version}")));
                }
                encoding = Some(match kind {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Binary,
                    other => {
                        return Err(parse_err(offset, format!("unsupported format {other}")))
                    }
                });
            }
            "element" => {
                let name = tokens.next().unwrap_or("");
                let count = parse_usize(offset, tokens.next(), "element count")?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(parse_err(offset, "duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else {
                    if count != 0 {
                        return Err(parse_err(
                            offset,
                            format!("unsupported element {name} with {count} entries"),
                        ));
                    }
                    in_vertex_element = false;
                }
            }
            "property" => {
                if !in_vertex_element {
                    // Property of an empty element; nothing to decode.
                    continue;
                }
                let type_name = tokens.next().unwrap_or("");
                if type_name == "list" {
                    return Err(parse_err(offset, "list properties are not supported"));
                }
                let ty = PlyType::parse(type_name).ok_or_else(|| {
                    parse_err(offset, format!("unsupported property type {type_name}"))
                })?;
                let name = tokens.next().unwrap_or("");
                if !PLY_SCALAR_NAMES.contains(&name) {
                    return Err(parse_err(offset, format!("unsupported property {name}")));
                }
                if ty == PlyType::U8 && !["red", "green", "blue"].contains(&name) {
                    return Err(parse_err(offset, format!("property {name} must be float")));
                }
                props.push((name.to_string(), ty));
            }
            "end_header" => {
                payload_start = lines.pos;
                break;
            }
            other => return Err(parse_err(offset, format!("unknown header entry {other}"))),
        }
    }

    let encoding = encoding.ok_or_else(|| parse_err(payload_start, "missing format entry"))?;
    let n = vertex_count.ok_or_else(|| parse_err(payload_start, "missing vertex element"))?;
    let names: Vec<&str> = props.iter().map(|(n, _)| n.as_str()).collect();
    let has = |name: &str| names.contains(&name);
    for required in ["x", "y", "z"] {
        if !has(required) {
            return Err(parse_err(
                payload_start,
                format!("vertex element lacks property {required}"),
            ));
        }
    }
    let has_rgb = has("red") || has("green") || has("blue");
    if has_rgb && !(has("red") && has("green") && has("blue")) {
        return Err(parse_err(payload_start, "incomplete colour properties"));
    }
    let has_normals = has("nx") || has("ny") || has("nz");
    if has_normals && !(has("nx") && has("ny") && has("nz")) {
        return Err(parse_err(payload_start, "incomplete normal properties"));
    }

    let mut cloud = PointCloud::new("unspecified");
    cloud.points.reserve(n);
    if has_rgb {
        cloud.colors = Some(Vec::with_capacity(n));
    }
    if has_normals {
        cloud.normals = Some(Vec::with_capacity(n));
    }

    let push_vertex = |values: &[f64], cloud: &mut PointCloud| {
        let get = |name: &str| values[names.iter().position(|n| *n == name).unwrap()];
        cloud
            .points
            .push(Point3::new(get("x"), get("y"), get("z")));
        if let Some(colors) = &mut cloud.colors {
            colors.push([get("red") as u8, get("green") as u8, get("blue") as u8]);
        }
        if let Some(normals) = &mut cloud.normals {
            normals.push(Vector3::new(get("nx"), get("ny"), get("nz")));
        }
    };

    match encoding {
        Encoding::Ascii => {
            let mut lines = Lines {
                data,
                pos: payload_start,
            };
            for _ in 0..n {
                let (offset, line) = lines
                    .next_line()
                    .map_err(|_| parse_err(data.len(), format!("expected {n} vertex rows")))?;
                let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
                if tokens.len() != props.len() {
                    return Err(parse_err(
                        offset,
                        format!("expected {} values per row, got {}", props.len(), tokens.len()),
                    ));
                }
                let mut values = Vec::with_capacity(props.len());
                for (t, (_, ty)) in tokens.iter().zip(&props) {
                    let v = match ty {
                        PlyType::U8 => t.parse::<u8>().map(|v| v as f64).map_err(|_| ()),
                        PlyType::F32 => t.parse::<f32>().map(|v| v as f64).map_err(|_| ()),
                        PlyType::F64 => t.parse::<f64>().map_err(|_| ()),
                    }
                    .map_err(|_| parse_err(offset, format!("invalid value {t:?}")))?;
                    values.push(v);
                }
                push_vertex(&values, &mut cloud);
            }
        }
        Encoding::Binary => {
            let stride: usize = props.iter().map(|(_, t)| t.size()).sum();
            let need = n * stride;
            let payload = &data[payload_start.min(data.len())..];
            if payload.len() < need {
                return Err(parse_err(
                    data.len(),
                    format!("binary payload truncated: need {need} bytes, have {}", payload.len()),
                ));
            }
            let mut reader = payload;
            for _ in 0..n {
                let mut values = Vec::with_capacity(props.len());
                for (_, ty) in &props {
                    let v = match ty {
                        PlyType::U8 => reader.read_u8().expect("length checked") as f64,
                        PlyType::F32 => {
                            reader.read_f32::<LittleEndian>().expect("length checked") as f64
                        }
                        PlyType::F64 => {
                            reader.read_f64::<LittleEndian>().expect("length checked")
                        }
                    };
                    values.push(v);
                }
                push_vertex(&values, &mut cloud);
            }
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample_cloud(colors: bool, normals: bool) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 64;
        let mut cloud = PointCloud::from_points(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                    )
                })
                .collect(),
            "world",
        );
        if colors {
            cloud.colors = Some((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect());
        }
        if normals {
            let mut normals: Vec<Vector3<f64>> = (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                    .normalize()
                })
                .collect();
            // An invalid (NaN-flagged) entry must survive the round trip.
            normals[3] = Vector3::new(f64::NAN, f64::NAN, f64::NAN);
            cloud.normals = Some(normals);
        }
        cloud
    }

    fn squeeze_f32(cloud: &PointCloud) -> PointCloud {
        let mut out = cloud.clone();
        for p in &mut out.points {
            *p = Point3::new(p.x as f32 as f64, p.y as f32 as f64, p.z as f32 as f64);
        }
        if let Some(normals) = &mut out.normals {
            for m in normals.iter_mut() {
                *m = Vector3::new(m.x as f32 as f64, m.y as f32 as f64, m.z as f32 as f64);
            }
        }
        out.frame = "unspecified".into();
        out
    }

    fn clouds_equal(a: &PointCloud, b: &PointCloud) -> bool {
        let norm_eq = |x: &Option<Vec<Vector3<f64>>>, y: &Option<Vec<Vector3<f64>>>| match (x, y) {
            (None, None) => true,
            (Some(x), Some(y)) => {
                x.len() == y.len()
                    && x.iter().zip(y).all(|(u, v)| {
                        (0..3).all(|i| u[i].to_bits() == v[i].to_bits() || (u[i].is_nan() && v[i].is_nan()))
                    })
            }
            _ => false,
        };
        a.points == b.points && a.colors == b.colors && norm_eq(&a.normals, &b.normals)
    }

    #[test]
    fn roundtrip_all_formats_and_encodings() {
        let dir = tempfile::tempdir().unwrap();
        for (colors, normals) in [(false, false), (true, false), (false, true), (true, true)] {
            let cloud = sample_cloud(colors, normals);
            let expected = squeeze_f32(&cloud);
            for format in [CloudFormat::Pcd, CloudFormat::Ply] {
                for encoding in [Encoding::Ascii, Encoding::Binary] {
                    let path = dir.path().join("cloud.bin");
                    write_cloud(&cloud, &path, format, encoding).unwrap();
                    let back = read_cloud(&path, format).unwrap();
                    assert!(
                        clouds_equal(&back, &expected),
                        "round trip failed for {format:?}/{encoding:?} colors={colors} normals={normals}"
                    );
                }
            }
        }
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = sample_cloud(true, true);
        for format in [CloudFormat::Pcd, CloudFormat::Ply] {
            for encoding in [Encoding::Ascii, Encoding::Binary] {
                let first = dir.path().join("a");
                let second = dir.path().join("b");
                write_cloud(&cloud, &first, format, encoding).unwrap();
                let back = read_cloud(&first, format).unwrap();
                write_cloud(&back, &second, format, encoding).unwrap();
                assert_eq!(
                    std::fs::read(&first).unwrap(),
                    std::fs::read(&second).unwrap(),
                    "{format:?}/{encoding:?}"
                );
            }
        }
    }

    #[test]
    fn pcd_rgb_packing_follows_convention() {
        let dir = tempfile::tempdir().unwrap();
        let mut cloud = PointCloud::from_points(vec![Point3::new(1.0, 2.0, 3.0)], "world");
        cloud.colors = Some(vec![[255, 128, 1]]);
        let path = dir.path().join("c.pcd");
        write_cloud(&cloud, &path, CloudFormat::Pcd, Encoding::Binary).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let rgb_le = &bytes[bytes.len() - 4..];
        let packed = u32::from_le_bytes(rgb_le.try_into().unwrap());
        assert_eq!(packed, (255u32 << 16) | (128 << 8) | 1);
        let back = read_cloud(&path, CloudFormat::Pcd).unwrap();
        assert_eq!(back.colors.unwrap()[0], [255, 128, 1]);
    }

    #[test]
    fn reads_hand_written_pcl_style_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hand.pcd");
        let packed = pack_rgb([200, 50, 25]);
        let body = format!(
            "# .PCD v0.7 - Point Cloud Data file format\n\
             VERSION 0.7\nFIELDS x y z rgb\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\n\
             WIDTH 2\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS 2\nDATA ascii\n\
             0.5 -1.25 3 {packed}\n1 2 3 {packed}\n"
        );
        std::fs::write(&path, body).unwrap();
        let cloud = read_cloud(&path, CloudFormat::Pcd).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points[0], Point3::new(0.5, -1.25, 3.0));
        assert_eq!(cloud.colors.unwrap(), vec![[200, 50, 25]; 2]);
    }

    #[test]
    fn truncated_binary_payload_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = sample_cloud(false, false);
        let path = dir.path().join("t.pcd");
        write_cloud(&cloud, &path, CloudFormat::Pcd, Encoding::Binary).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 7);
        std::fs::write(&path, &bytes).unwrap();
        match read_cloud(&path, CloudFormat::Pcd) {
            Err(CloudError::Parse { offset, message }) => {
                assert_eq!(offset as usize, bytes.len());
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_pcd_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.pcd");
        let body = "VERSION 0.7\nFIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\n\
                    COUNT 1 1 1 1\nWIDTH 0\nHEIGHT 1\nPOINTS 0\nDATA ascii\n";
        std::fs::write(&path, body).unwrap();
        match read_cloud(&path, CloudFormat::Pcd) {
            Err(CloudError::Parse { offset, message }) => {
                assert_eq!(offset, 12);
                assert!(message.contains("intensity"), "{message}");
            }
            other => panic!("expected field error, got {other:?}"),
        }
    }

    #[test]
    fn ply_rejects_populated_face_element() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ply");
        let body = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\n\
                    property float y\nproperty float z\nelement face 2\n\
                    property list uchar int vertex_indices\nend_header\n";
        std::fs::write(&path, body).unwrap();
        assert!(matches!(
            read_cloud(&path, CloudFormat::Ply),
            Err(CloudError::Parse { .. })
        ));
    }

    #[test]
    fn ply_accepts_empty_face_element_and_double_coords() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ply");
        let body = "ply\nformat ascii 1.0\ncomment external writer\n\
                    element vertex 2\nproperty double x\nproperty double y\nproperty double z\n\
                    element face 0\nproperty list uchar int vertex_indices\nend_header\n\
                    0.25 0.5 0.125\n-1 -2 -3\n";
        std::fs::write(&path, body).unwrap();
        let cloud = read_cloud(&path, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.points[0], Point3::new(0.25, 0.5, 0.125));
        assert_eq!(cloud.points[1], Point3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn format_detection_from_extension() {
        assert_eq!(format_from_path(Path::new("a/b.pcd")), Some(CloudFormat::Pcd));
        assert_eq!(format_from_path(Path::new("a/B.PLY")), Some(CloudFormat::Ply));
        assert_eq!(format_from_path(Path::new("a/b.txt")), None);
    }
}
