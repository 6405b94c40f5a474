//! Point cloud readers and mesh/cloud writers.
//!
//! Supported inputs: PLY (ascii or binary little-endian, `x`/`y`/`z` vertex
//! properties in float32 or float64, other properties skipped), plain `xyz`
//! text, and packed KITTI velodyne binaries (float32 x, y, z, reflectance;
//! reflectance dropped). Meshes and clouds are written as binary
//! little-endian PLY with float32 coordinates, byte-deterministic for
//! identical input.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::Error;
use crate::mesher::TriangleMesh;

/// Input cloud encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Xyz,
    KittiBin,
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "ply" => Ok(Self::Ply),
            "xyz" => Ok(Self::Xyz),
            "kitti-bin" => Ok(Self::KittiBin),
            other => Err(Error::Config(format!(
                "unknown cloud format '{other}' (expected ply, xyz or kitti-bin)"
            ))),
        }
    }
}

impl std::fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ply => "ply",
            Self::Xyz => "xyz",
            Self::KittiBin => "kitti-bin",
        })
    }
}

impl CloudFormat {
    /// Guesses the format from the file extension.
    pub fn infer(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "ply" => Some(Self::Ply),
            "xyz" | "txt" => Some(Self::Xyz),
            "bin" => Some(Self::KittiBin),
            _ => None,
        }
    }
}

/// A loaded point cloud with the sensor pose it was scanned from.
///
/// File formats carry no pose, so readers default it to the origin; callers
/// override it from a flag or scanner spec.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub sensor_pose: Vector3<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, sensor_pose: Vector3<f64>) -> Self {
        PointCloud {
            points,
            sensor_pose,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Reads a point cloud, dropping rows with non-finite coordinates (the count
/// of dropped rows is logged as a warning).
pub fn read_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud, Error> {
    let (points, dropped) = match format {
        CloudFormat::Ply => read_ply_points(path)?,
        CloudFormat::Xyz => read_xyz_points(path)?,
        CloudFormat::KittiBin => read_kitti_points(path)?,
    };
    if dropped > 0 {
        log::warn!("dropped {dropped} non-finite points while reading {}", path.display());
    }
    Ok(PointCloud::new(points, Vector3::zeros()))
}

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
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
    fn parse(token: &str) -> Option<Self> {
        match token {
            "char" | "int8" => Some(Self::I8),
            "uchar" | "uint8" => Some(Self::U8),
            "short" | "int16" => Some(Self::I16),
            "ushort" | "uint16" => Some(Self::U16),
            "int" | "int32" => Some(Self::I32),
            "uint" | "uint32" => Some(Self::U32),
            "float" | "float32" => Some(Self::F32),
            "double" | "float64" => Some(Self::F64),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, kind: ScalarType },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

/// Reader wrapper that tracks the number of consumed bytes for parse errors.
struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    fn read_exact(&mut self, buf: &mut [u8], path: &Path) -> Result<(), Error> {
        let at = self.offset;
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::parse(path, at, "unexpected end of file"))?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn skip(&mut self, n: usize, path: &Path) -> Result<(), Error> {
        let mut remaining = n;
        let mut chunk = [0u8; 256];
        while remaining > 0 {
            let take = remaining.min(chunk.len());
            self.read_exact(&mut chunk[..take], path)?;
            remaining -= take;
        }
        Ok(())
    }
}

impl<R: BufRead> CountingReader<R> {
    /// Reads one `\n`-terminated header line, trimming the line ending.
    fn read_line(&mut self, path: &Path) -> Result<String, Error> {
        let at = self.offset;
        let mut raw = Vec::new();
        let n = self
            .inner
            .read_until(b'\n', &mut raw)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::parse(path, at, "unexpected end of header"));
        }
        self.offset += n as u64;
        let mut line = String::from_utf8(raw)
            .map_err(|_| Error::parse(path, at, "header is not valid utf-8"))?;
        while line.ends_with('\n') || line.ends_with('\r') {
            line.pop();
        }
        Ok(line)
    }
}

fn parse_ply_header<R: BufRead>(
    reader: &mut CountingReader<R>,
    path: &Path,
) -> Result<(PlyEncoding, Vec<Element>), Error> {
    let magic = reader.read_line(path)?;
    if magic.trim() != "ply" {
        return Err(Error::parse(path, 0, "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let at = reader.offset;
        let line = reader.read_line(path)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => continue,
            ["end_header"] => break,
            ["format", kind, _version] => {
                encoding = Some(match *kind {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(Error::parse(
                            path,
                            at,
                            "big-endian PLY is not supported; re-export as binary_little_endian",
                        ))
                    }
                    other => {
                        return Err(Error::parse(path, at, format!("unknown PLY format '{other}'")))
                    }
                });
            }
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| Error::parse(path, at, format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: (*name).to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, _name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, at, "property before element"))?;
                let count = ScalarType::parse(count)
                    .ok_or_else(|| Error::parse(path, at, format!("unknown type '{count}'")))?;
                let item = ScalarType::parse(item)
                    .ok_or_else(|| Error::parse(path, at, format!("unknown type '{item}'")))?;
                element.properties.push(Property::List { count, item });
            }
            ["property", kind, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, at, "property before element"))?;
                let kind = ScalarType::parse(kind)
                    .ok_or_else(|| Error::parse(path, at, format!("unknown type '{kind}'")))?;
                element.properties.push(Property::Scalar {
                    name: (*name).to_string(),
                    kind,
                });
            }
            _ => return Err(Error::parse(path, at, format!("unrecognized header line '{line}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::parse(path, 0, "header has no format line"))?;
    Ok((encoding, elements))
}

/// Positions and types of the x/y/z properties inside a vertex element.
fn vertex_layout(element: &Element, path: &Path) -> Result<[(usize, ScalarType); 3], Error> {
    let mut found = [None; 3];
    for (i, prop) in element.properties.iter().enumerate() {
        if let Property::Scalar { name, kind } = prop {
            let slot = match name.as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => continue,
            };
            if !matches!(kind, ScalarType::F32 | ScalarType::F64) {
                return Err(Error::parse(
                    path,
                    0,
                    format!("vertex property '{name}' must be float32 or float64"),
                ));
            }
            found[slot] = Some((i, *kind));
        }
    }
    match found {
        [Some(x), Some(y), Some(z)] => Ok([x, y, z]),
        _ => Err(Error::parse(path, 0, "vertex element lacks x/y/z properties")),
    }
}

fn read_ply_points(path: &Path) -> Result<(Vec<Vector3<f64>>, usize), Error> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = CountingReader::new(BufReader::new(file));
    let (encoding, elements) = parse_ply_header(&mut reader, path)?;

    let mut points = Vec::new();
    let mut dropped = 0usize;
    for element in &elements {
        let layout = if element.name == "vertex" {
            Some(vertex_layout(element, path)?)
        } else {
            None
        };
        match encoding {
            PlyEncoding::Ascii => read_ascii_element(
                &mut reader,
                path,
                element,
                layout,
                &mut points,
                &mut dropped,
            )?,
            PlyEncoding::BinaryLittleEndian => read_binary_element(
                &mut reader,
                path,
                element,
                layout,
                &mut points,
                &mut dropped,
            )?,
        }
    }
    Ok((points, dropped))
}

fn read_ascii_element<R: BufRead>(
    reader: &mut CountingReader<R>,
    path: &Path,
    element: &Element,
    layout: Option<[(usize, ScalarType); 3]>,
    points: &mut Vec<Vector3<f64>>,
    dropped: &mut usize,
) -> Result<(), Error> {
    for _ in 0..element.count {
        let at = reader.offset;
        let line = reader.read_line(path)?;
        let mut tokens = line.split_whitespace();
        let mut coords = [0.0f64; 3];
        for (prop_index, prop) in element.properties.iter().enumerate() {
            match prop {
                Property::Scalar { .. } => {
                    let token = tokens
                        .next()
                        .ok_or_else(|| Error::parse(path, at, "row has too few values"))?;
                    if let Some(layout) = &layout {
                        if let Some(slot) = layout.iter().position(|(i, _)| *i == prop_index) {
                            coords[slot] = token.parse::<f64>().map_err(|_| {
                                Error::parse(path, at, format!("bad float '{token}'"))
                            })?;
                        }
                    }
                }
                Property::List { .. } => {
                    let token = tokens
                        .next()
                        .ok_or_else(|| Error::parse(path, at, "row has too few values"))?;
                    let n: usize = token
                        .parse()
                        .map_err(|_| Error::parse(path, at, format!("bad list count '{token}'")))?;
                    for _ in 0..n {
                        tokens
                            .next()
                            .ok_or_else(|| Error::parse(path, at, "list row truncated"))?;
                    }
                }
            }
        }
        if layout.is_some() {
            push_point(coords, points, dropped);
        }
    }
    Ok(())
}

fn read_binary_element<R: Read>(
    reader: &mut CountingReader<R>,
    path: &Path,
    element: &Element,
    layout: Option<[(usize, ScalarType); 3]>,
    points: &mut Vec<Vector3<f64>>,
    dropped: &mut usize,
) -> Result<(), Error> {
    let mut buf8 = [0u8; 8];
    for _ in 0..element.count {
        let mut coords = [0.0f64; 3];
        for (prop_index, prop) in element.properties.iter().enumerate() {
            match prop {
                Property::Scalar { kind, .. } => {
                    let size = kind.size();
                    reader.read_exact(&mut buf8[..size], path)?;
                    if let Some(layout) = &layout {
                        if let Some(slot) = layout.iter().position(|(i, _)| *i == prop_index) {
                            coords[slot] = match kind {
                                ScalarType::F32 => {
                                    f32::from_le_bytes(buf8[..4].try_into().unwrap()) as f64
                                }
                                ScalarType::F64 => f64::from_le_bytes(buf8),
                                _ => unreachable!("layout only admits float properties"),
                            };
                        }
                    }
                }
                Property::List { count, item, .. } => {
                    let size = count.size();
                    reader.read_exact(&mut buf8[..size], path)?;
                    let n = decode_unsigned(&buf8[..size], *count).ok_or_else(|| {
                        Error::parse(path, reader.offset, "negative list count")
                    })?;
                    reader.skip(n * item.size(), path)?;
                }
            }
        }
        if layout.is_some() {
            push_point(coords, points, dropped);
        }
    }
    Ok(())
}

fn decode_unsigned(bytes: &[u8], kind: ScalarType) -> Option<usize> {
    let value: i64 = match kind {
        ScalarType::I8 => bytes[0] as i8 as i64,
        ScalarType::U8 => bytes[0] as i64,
        ScalarType::I16 => i16::from_le_bytes(bytes.try_into().unwrap()) as i64,
        ScalarType::U16 => u16::from_le_bytes(bytes.try_into().unwrap()) as i64,
        ScalarType::I32 => i32::from_le_bytes(bytes.try_into().unwrap()) as i64,
        ScalarType::U32 => u32::from_le_bytes(bytes.try_into().unwrap()) as i64,
        ScalarType::F32 | ScalarType::F64 => return None,
    };
    usize::try_from(value).ok()
}

fn push_point(coords: [f64; 3], points: &mut Vec<Vector3<f64>>, dropped: &mut usize) {
    if coords.iter().all(|c| c.is_finite()) {
        points.push(Vector3::new(coords[0], coords[1], coords[2]));
    } else {
        *dropped += 1;
    }
}

// ---------------------------------------------------------------------------
// xyz text and KITTI binary
// ---------------------------------------------------------------------------

fn read_xyz_points(path: &Path) -> Result<(Vec<Vector3<f64>>, usize), Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    let mut dropped = 0usize;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len() as u64;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut coords = [0.0f64; 3];
        for coord in coords.iter_mut() {
            let token = tokens
                .next()
                .ok_or_else(|| Error::parse(path, at, "row has fewer than 3 columns"))?;
            *coord = token
                .parse::<f64>()
                .map_err(|_| Error::parse(path, at, format!("bad float '{token}'")))?;
        }
        // extra columns (intensity etc.) are ignored
        push_point(coords, &mut points, &mut dropped);
    }
    Ok((points, dropped))
}

fn read_kitti_points(path: &Path) -> Result<(Vec<Vector3<f64>>, usize), Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 16 != 0 {
        return Err(Error::parse(
            path,
            (bytes.len() - bytes.len() % 16) as u64,
            "file size is not a multiple of 16 bytes (x,y,z,reflectance float32)",
        ));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    let mut dropped = 0usize;
    for record in bytes.chunks_exact(16) {
        let x = f32::from_le_bytes(record[0..4].try_into().unwrap()) as f64;
        let y = f32::from_le_bytes(record[4..8].try_into().unwrap()) as f64;
        let z = f32::from_le_bytes(record[8..12].try_into().unwrap()) as f64;
        // bytes 12..16 are reflectance, discarded
        push_point([x, y, z], &mut points, &mut dropped);
    }
    Ok((points, dropped))
}

// ---------------------------------------------------------------------------
// writers
// ---------------------------------------------------------------------------

/// Writes a mesh as binary little-endian PLY: float32 vertex coordinates and
/// int32 face index lists. Output bytes are deterministic for a given mesh.
pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<(), Error> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    w.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    for v in &mesh.vertices {
        for c in [v.x as f32, v.y as f32, v.z as f32] {
            w.write_all(&c.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    for tri in &mesh.triangles {
        w.write_all(&[3u8]).map_err(|e| Error::io(path, e))?;
        for &i in tri {
            w.write_all(&(i as i32).to_le_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a point cloud as a vertex-only binary little-endian PLY.
pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<(), Error> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.points.len()
    );
    w.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    for p in &cloud.points {
        for c in [p.x as f32, p.y as f32, p.z as f32] {
            w.write_all(&c.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;
    use tempfile::tempdir;

    fn write_file(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, bytes).unwrap();
        path
    }

    #[test]
    fn ascii_ply_three_point_fixture() {
        let dir = tempdir().unwrap();
        let body = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar intensity\nend_header\n1.0 2.0 3.0 7\n-0.5 0.25 0.125 9\n4 5 6 11\n";
        let path = write_file(&dir, "fixture.ply", body.as_bytes());
        let cloud = read_cloud(&path, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.len(), 3);
        assert_eq!(cloud.points[0], Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(cloud.points[1], Vector3::new(-0.5, 0.25, 0.125));
        assert_eq!(cloud.points[2], Vector3::new(4.0, 5.0, 6.0));
    }

    #[test]
    fn ascii_ply_reorders_properties() {
        let dir = tempdir().unwrap();
        let body = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float z\nproperty float x\nproperty float y\nend_header\n3 1 2\n";
        let path = write_file(&dir, "reorder.ply", body.as_bytes());
        let cloud = read_cloud(&path, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.points[0], Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn big_endian_ply_is_rejected() {
        let dir = tempdir().unwrap();
        let body = "ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        let path = write_file(&dir, "big.ply", body.as_bytes());
        match read_cloud(&path, CloudFormat::Ply) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("big-endian")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_ply_reports_offset() {
        let dir = tempdir().unwrap();
        let header = "ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        let mut bytes = header.as_bytes().to_vec();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        // second point entirely missing, first point missing z
        let path = write_file(&dir, "trunc.ply", &bytes);
        match read_cloud(&path, CloudFormat::Ply) {
            Err(Error::Parse { offset, .. }) => {
                assert_eq!(offset, header.len() as u64 + 8);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn xyz_reader_skips_comments_and_drops_non_finite() {
        let dir = tempdir().unwrap();
        let body = "# header comment\n1 2 3\n\nnan 0 0\n4.5 5.5 6.5 99\n";
        let path = write_file(&dir, "cloud.xyz", body.as_bytes());
        let cloud = read_cloud(&path, CloudFormat::Xyz).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points[0], Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(cloud.points[1], Vector3::new(4.5, 5.5, 6.5));
    }

    #[test]
    fn xyz_bad_row_reports_offset() {
        let dir = tempdir().unwrap();
        let body = "1 2 3\n4 five 6\n";
        let path = write_file(&dir, "bad.xyz", body.as_bytes());
        match read_cloud(&path, CloudFormat::Xyz) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn kitti_fixture_two_records() {
        let dir = tempdir().unwrap();
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.9, -4.0, -5.0, -6.0, 0.1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = write_file(&dir, "scan.bin", &bytes);
        let cloud = read_cloud(&path, CloudFormat::KittiBin).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points[0], Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(cloud.points[1], Vector3::new(-4.0, -5.0, -6.0));
    }

    #[test]
    fn kitti_truncated_reports_offset() {
        let dir = tempdir().unwrap();
        let path = write_file(&dir, "short.bin", &[0u8; 20]);
        match read_cloud(&path, CloudFormat::KittiBin) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn mesh_round_trip_preserves_vertices() {
        let dir = tempdir().unwrap();
        let mesh = TriangleMesh {
            vertices: vec![
                Vector3::new(0.125, -3.5, 7.25),
                Vector3::new(1.0, 2.0, 3.0),
                Vector3::new(-0.0625, 0.5, 9.75),
            ],
            triangles: vec![[0, 1, 2]],
            normals: None,
        };
        let path = dir.path().join("mesh.ply");
        write_mesh(&mesh, &path).unwrap();
        let cloud = read_cloud(&path, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.len(), 3);
        for (read, original) in cloud.points.iter().zip(mesh.vertices.iter()) {
            // float32 on disk
            for i in 0..3 {
                assert_eq!(read[i], original[i] as f32 as f64);
            }
        }
    }

    #[test]
    fn empty_mesh_is_valid_ply() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.ply");
        write_mesh(&TriangleMesh::default(), &path).unwrap();
        let cloud = read_cloud(&path, CloudFormat::Ply).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn single_triangle_mesh_bytes_match_hand_built_golden() {
        // golden bytes assembled by hand, independent of the writer
        let mesh = TriangleMesh {
            vertices: vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            triangles: vec![[0, 1, 2]],
            normals: None,
        };
        let mut expected = Vec::new();
        expected.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
        expected.extend_from_slice(b"element vertex 3\n");
        expected.extend_from_slice(b"property float x\nproperty float y\nproperty float z\n");
        expected.extend_from_slice(b"element face 1\n");
        expected.extend_from_slice(b"property list uchar int vertex_indices\n");
        expected.extend_from_slice(b"end_header\n");
        for coords in [[0.0f32, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
            for c in coords {
                expected.extend_from_slice(&c.to_le_bytes());
            }
        }
        expected.push(3u8);
        for i in [0i32, 1, 2] {
            expected.extend_from_slice(&i.to_le_bytes());
        }

        let dir = tempdir().unwrap();
        let path = dir.path().join("golden.ply");
        write_mesh(&mesh, &path).unwrap();
        let written = std::fs::read(&path).unwrap();
        assert_eq!(written, expected);
    }

    #[test]
    fn cloud_write_read_round_trip() {
        let dir = tempdir().unwrap();
        let cloud = PointCloud::new(
            vec![Vector3::new(1.5, 2.5, 3.5), Vector3::new(-1.0, 0.0, 4.0)],
            Vector3::zeros(),
        );
        let path = dir.path().join("cloud.ply");
        write_cloud(&cloud, &path).unwrap();
        let read = read_cloud(&path, CloudFormat::Ply).unwrap();
        assert_eq!(read.points, cloud.points);
    }

    #[test]
    fn binary_ply_with_double_and_extra_properties() {
        let dir = tempdir().unwrap();
        let header = "ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nproperty ushort ring\nend_header\n";
        let mut bytes = header.as_bytes().to_vec();
        for (p, ring) in [([0.1f64, 0.2, 0.3], 7u16), ([5.0, 6.0, 7.0], 9)] {
            for c in p {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.extend_from_slice(&ring.to_le_bytes());
        }
        let path = write_file(&dir, "double.ply", &bytes);
        let cloud = read_cloud(&path, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points[0], Vector3::new(0.1, 0.2, 0.3));
    }

    #[test]
    fn format_inference_from_extension() {
        assert_eq!(CloudFormat::infer(Path::new("a.ply")), Some(CloudFormat::Ply));
        assert_eq!(CloudFormat::infer(Path::new("a.xyz")), Some(CloudFormat::Xyz));
        assert_eq!(CloudFormat::infer(Path::new("a.bin")), Some(CloudFormat::KittiBin));
        assert_eq!(CloudFormat::infer(Path::new("a.pcd")), None);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_cloud(Path::new("/nonexistent/nope.ply"), CloudFormat::Ply);
        assert!(matches!(err, Err(Error::Io { .. })));
    }
}
