//! On-disk formats: the binary tensor file, label/edge/statistics CSVs and
//! `key=value` manifests.
//!
//! Tensor file layout (all integers little-endian):
//!
//! ```text
//! b"CGCTENS1"
//! u32 d
//! u64 dims[d]
//! d axis names, each NUL-terminated UTF-8
//! u8 flags            bit 0: face mask present
//! f64 payload[prod(dims)], row-major
//! u8 mask[dims[0] * dims[1]]   only if flagged, 1 = valid
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cgc::{AdjacentPair, ResolutionPoint};
use crate::clustering::LabelGrid;
use crate::error::{Error, Result};
use crate::mier::NmiGraph;
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 8] = b"CGCTENS1";
const FLAG_MASK: u8 = 1;

/// A tensor together with its optional validity mask over the first two axes.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub tensor: DenseTensor,
    pub mask: Option<Vec<bool>>,
}

impl TensorFile {
    pub fn new(tensor: DenseTensor, mask: Option<Vec<bool>>) -> Result<Self> {
        if let Some(m) = &mask {
            let dims = tensor.dims();
            if dims.len() < 2 || m.len() != dims[0] * dims[1] {
                return Err(Error::Shape(format!(
                    "mask of {} cells for tensor dims {dims:?}",
                    m.len()
                )));
            }
        }
        Ok(Self { tensor, mask })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dims = self.tensor.dims();
        w.write_all(MAGIC)?;
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for &d in dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for name in self.tensor.axis_names() {
            w.write_all(name.as_bytes())?;
            w.write_all(&[0])?;
        }
        let flags = if self.mask.is_some() { FLAG_MASK } else { 0 };
        w.write_all(&[flags])?;
        for v in self.tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(mask) = &self.mask {
            let bytes: Vec<u8> = mask.iter().map(|&ok| u8::from(ok)).collect();
            w.write_all(&bytes)?;
        }
        w.flush()
    }

    /// Parses a complete tensor file image.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Format("bad magic, expected CGCTENS1".into()));
        }
        let d = u32::from_le_bytes(cur.array()?) as usize;
        let mut dims = Vec::with_capacity(d.min(64));
        for _ in 0..d {
            let v = u64::from_le_bytes(cur.array()?);
            dims.push(
                usize::try_from(v)
                    .map_err(|_| Error::Format(format!("dimension {v} too large")))?,
            );
        }
        let mut names = Vec::with_capacity(d.min(64));
        for _ in 0..d {
            names.push(cur.cstr()?);
        }
        let flags = cur.take(1)?[0];
        if flags & !FLAG_MASK != 0 {
            return Err(Error::Format(format!("unknown header flags {flags:#04x}")));
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let payload = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let data: Vec<f64> = cur
            .take(payload)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mask = if flags & FLAG_MASK != 0 {
            if d < 2 {
                return Err(Error::Format(
                    "mask flagged on a tensor with fewer than 2 axes".into(),
                ));
            }
            let raw = cur.take(dims[0] * dims[1])?;
            Some(
                raw.iter()
                    .map(|&b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(Error::Format(format!("mask byte {other}"))),
                    })
                    .collect::<Result<Vec<bool>>>()?,
            )
        } else {
            None
        };
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - cur.pos
            )));
        }
        let tensor =
            DenseTensor::new(dims, data, names).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(tensor, mask)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated: wanted {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn cstr(&mut self) -> Result<String> {
        let rest = &self.bytes[self.pos..];
        let len = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or_else(|| Error::Format("unterminated axis name".into()))?;
        let name = std::str::from_utf8(&rest[..len])
            .map_err(|_| Error::Format("axis name is not UTF-8".into()))?
            .to_string();
        self.pos += len + 1;
        Ok(name)
    }
}

pub fn save_tensor(path: impl AsRef<Path>, file: &TensorFile) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_to(BufWriter::new(f))
        .map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    TensorFile::from_bytes(&bytes)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

pub const LABELS_HEADER: &str = "i1,i2,label";

pub fn labels_csv(grid: &LabelGrid) -> String {
    let (rows, cols) = grid.dims();
    let mut out = String::with_capacity(rows * cols * 10);
    out.push_str(LABELS_HEADER);
    out.push('\n');
    for r in 0..rows {
        for c in 0..cols {
            out.push_str(&format!("{r},{c},{}\n", grid.get(r, c)));
        }
    }
    out
}

pub fn write_labels(path: impl AsRef<Path>, grid: &LabelGrid) -> Result<()> {
    write_text(path.as_ref(), &labels_csv(grid))
}

/// Reads an `i1,i2,label` file; every grid cell must appear exactly once.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelGrid> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let bad = |line: usize, what: &str| Error::Format(format!("{}:{line}: {what}", path.display()));
    match lines.first() {
        Some(h) if h.trim() == LABELS_HEADER => {}
        _ => return Err(bad(1, "expected header i1,i2,label")),
    }
    let mut cells = Vec::with_capacity(lines.len());
    for (no, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [r, c, l] = fields[..] else {
            return Err(bad(no + 1, "expected 3 fields"));
        };
        let r: usize = r.parse().map_err(|_| bad(no + 1, "bad i1"))?;
        let c: usize = c.parse().map_err(|_| bad(no + 1, "bad i2"))?;
        let l: i32 = l.parse().map_err(|_| bad(no + 1, "bad label"))?;
        cells.push((r, c, l));
    }
    if cells.is_empty() {
        return Err(bad(1, "no cells"));
    }
    let rows = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let cols = cells.iter().map(|c| c.1).max().unwrap() + 1;
    if cells.len() != rows * cols {
        return Err(bad(
            1,
            &format!("{} cells do not fill a {rows}x{cols} grid", cells.len()),
        ));
    }
    let mut labels = vec![None; rows * cols];
    for (r, c, l) in cells {
        if labels[r * cols + c].replace(l).is_some() {
            return Err(bad(1, &format!("cell ({r},{c}) repeated")));
        }
    }
    LabelGrid::new(
        (rows, cols),
        labels.into_iter().map(Option::unwrap).collect(),
    )
    .map_err(|e| Error::Format(e.to_string()))
}

/// Spatial level as written in CSVs: `l` when isotropic, `l1:l2` otherwise.
fn spatial_field(p: &ResolutionPoint) -> String {
    let (a, b) = p.spatial;
    if a == b {
        a.to_string()
    } else {
        format!("{a}:{b}")
    }
}

pub const EDGES_HEADER: &str = "p_spatial,p_temporal,q_spatial,q_temporal,nmi";

pub fn edges_csv(g: &NmiGraph) -> String {
    let mut out = format!("{EDGES_HEADER}\n");
    for p in 0..g.n() {
        for q in p + 1..g.n() {
            let (a, b) = (&g.nodes[p], &g.nodes[q]);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                spatial_field(a),
                a.temporal,
                spatial_field(b),
                b.temporal,
                g.weight(p, q)
            ));
        }
    }
    out
}

pub fn write_edges(path: impl AsRef<Path>, g: &NmiGraph) -> Result<()> {
    write_text(path.as_ref(), &edges_csv(g))
}

pub const STATS_HEADER: &str = "pair,min,avg,max";

/// One `{min, avg, max}` row of a statistics table.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub pair: String,
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

impl StatsRow {
    /// `None` for an empty sample.
    pub fn from_values(pair: impl Into<String>, values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let avg = values.iter().sum::<f64>() / values.len() as f64;
        Some(Self {
            pair: pair.into(),
            min,
            avg,
            max,
        })
    }
}

pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.pair, r.min, r.avg, r.max));
    }
    out
}

pub fn write_stats(path: impl AsRef<Path>, rows: &[StatsRow]) -> Result<()> {
    write_text(path.as_ref(), &stats_csv(rows))
}

pub fn read_stats(path: impl AsRef<Path>) -> Result<Vec<StatsRow>> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    if lines.first().map(|h| h.trim()) != Some(STATS_HEADER) {
        return Err(Error::Format(format!(
            "{}: expected header {STATS_HEADER}",
            path.display()
        )));
    }
    lines
        .iter()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Format(format!("{}: bad number in {line:?}", path.display()))
                })
            };
            match f[..] {
                [pair, min, avg, max] => Ok(StatsRow {
                    pair: pair.to_string(),
                    min: num(min)?,
                    avg: num(avg)?,
                    max: num(max)?,
                }),
                _ => Err(Error::Format(format!(
                    "{}: expected 4 fields in {line:?}",
                    path.display()
                ))),
            }
        })
        .collect()
}

pub const ADJACENT_HEADER: &str = "pair,axis,nmi";

pub fn adjacent_csv(pairs: &[AdjacentPair]) -> String {
    let mut out = format!("{ADJACENT_HEADER}\n");
    for p in pairs {
        let axis = match p.axis {
            crate::cgc::ScaleAxis::Spatial => "spatial",
            crate::cgc::ScaleAxis::Temporal => "temporal",
        };
        out.push_str(&format!("{},{axis},{}\n", p.label(), p.nmi));
    }
    out
}

/// Ordered `key=value` lines. Keys may repeat; values must be single-line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        let value = value.to_string().replace('\n', " ");
        self.entries.push((key, value));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line {}: missing '='", no + 1)))?;
            m.entries.push((k.to_string(), v.to_string()));
        }
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_string())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

impl std::fmt::Display for Manifest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::AffinityMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1e6..1e6)).collect();
        DenseTensor::from_vec(dims.to_vec(), data).unwrap()
    }

    fn bytes_of(f: &TensorFile) -> Vec<u8> {
        let mut out = Vec::new();
        f.write_to(&mut out).unwrap();
        out
    }

    #[test]
    fn tensor_round_trip_is_bit_exact() {
        let mut t = random_tensor(&[3, 4, 5, 2], 1);
        t.data_mut()[0] = -0.0;
        t.data_mut()[1] = f64::MIN_POSITIVE / 4.0;
        let f = TensorFile::new(t, None).unwrap();
        let back = TensorFile::from_bytes(&bytes_of(&f)).unwrap();
        let bits = |t: &DenseTensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.tensor), bits(&f.tensor));
        assert_eq!(back, f);

        let mask: Vec<bool> = (0..12).map(|i| i % 5 != 0).collect();
        let f = TensorFile::new(random_tensor(&[3, 4, 2, 1], 2), Some(mask)).unwrap();
        assert_eq!(TensorFile::from_bytes(&bytes_of(&f)).unwrap(), f);
    }

    #[test]
    fn header_layout() {
        let t =
            DenseTensor::new(vec![1, 2], vec![1.0, 2.0], vec!["a".into(), "bc".into()]).unwrap();
        let b = bytes_of(&TensorFile::new(t, None).unwrap());
        assert_eq!(&b[..8], b"CGCTENS1");
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..20], &1u64.to_le_bytes());
        assert_eq!(&b[20..28], &2u64.to_le_bytes());
        assert_eq!(&b[28..33], b"a\0bc\0");
        assert_eq!(b[33], 0);
        assert_eq!(&b[34..42], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 50);
    }

    #[test]
    fn format_errors() {
        let good = bytes_of(&TensorFile::new(random_tensor(&[2, 2, 2, 1], 3), None).unwrap());
        let mut bad = good.clone();
        bad[..8].copy_from_slice(b"XXXXXXXX");
        assert!(matches!(
            TensorFile::from_bytes(&bad),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            TensorFile::from_bytes(&good[..good.len() - 3]),
            Err(Error::Format(_))
        ));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(
            TensorFile::from_bytes(&extra),
            Err(Error::Format(_))
        ));
        // dims claim more cells than the payload carries
        let mut big = good.clone();
        big[12..20].copy_from_slice(&3u64.to_le_bytes());
        assert!(matches!(
            TensorFile::from_bytes(&big),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            TensorFile::from_bytes(b"CGC"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cgct");
        let f = TensorFile::new(random_tensor(&[2, 3, 4, 1], 4), Some(vec![true; 6])).unwrap();
        save_tensor(&path, &f).unwrap();
        assert_eq!(load_tensor(&path).unwrap(), f);
        assert!(matches!(
            load_tensor(dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = LabelGrid::new((2, 3), vec![0, 1, -1, 2, 2, 0]).unwrap();
        let path = dir.path().join("sub/labels.csv");
        write_labels(&path, &grid).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("i1,i2,label\n0,0,0\n0,1,1\n0,2,-1\n"));
        assert_eq!(read_labels(&path).unwrap(), grid);

        fs::write(&path, "i1,i2,label\n0,0,1\n1,1,1\n").unwrap();
        assert!(read_labels(&path).is_err());
        fs::write(&path, "a,b\n").unwrap();
        assert!(read_labels(&path).is_err());
    }

    #[test]
    fn edges_and_stats() {
        let g = NmiGraph {
            nodes: vec![
                ResolutionPoint::new(1, 1, 1),
                ResolutionPoint::new(1, 1, 2),
                ResolutionPoint::new(2, 2, 1),
            ],
            weights: AffinityMatrix::new(3, vec![0.0, 0.5, 0.25, 0.5, 0.0, 1.0, 0.25, 1.0, 0.0])
                .unwrap(),
        };
        assert_eq!(
            edges_csv(&g),
            "p_spatial,p_temporal,q_spatial,q_temporal,nmi\n1,1,1,2,0.5\n1,1,2,1,0.25\n1,2,2,1,1\n"
        );

        let row = StatsRow::from_values("1_1_1-1_1_2", &[0.5, 0.25, 0.75]).unwrap();
        assert_eq!((row.min, row.avg, row.max), (0.25, 0.5, 0.75));
        assert!(StatsRow::from_values("x", &[]).is_none());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.csv");
        write_stats(&path, std::slice::from_ref(&row)).unwrap();
        assert_eq!(read_stats(&path).unwrap(), vec![row]);
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = Manifest::new();
        m.push("seed", 42)
            .push("point", "1_1_1")
            .push("point", "a=b");
        let text = m.to_string();
        assert_eq!(text, "seed=42\npoint=1_1_1\npoint=a=b\n");
        let back = Manifest::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("seed"), Some("42"));
        assert_eq!(back.get_all("point").collect::<Vec<_>>(), ["1_1_1", "a=b"]);
        assert!(Manifest::parse("novalue\n").is_err());
    }
}
