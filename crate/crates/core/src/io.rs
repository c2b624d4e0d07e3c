//! Binary field dumps, line profiles and CSV emission.

use std::io::{Read, Write};
use std::path::Path;

use crate::effective::EffectiveLedgerRow;
use crate::error::{Error, Result};
use crate::geometry::{DomainLabels, Material};
use crate::grid::Grid;
use crate::micro::LedgerRow;

const MAGIC: &[u8; 4] = b"GLFD";
const VERSION: u32 = 1;

/// Column names of the per-step micro CSV.
pub const MICRO_COLUMNS: [&str; 7] = [
    "t",
    "energy_stored",
    "energy_injected",
    "norm_L2_fluid",
    "norm_L2_solid",
    "norm_L2_grain_scaled",
    "jump_norm",
];

/// Column names of the per-step effective-model CSV.
pub const EFFECTIVE_COLUMNS: [&str; 4] = ["t", "K_iterations", "E_final", "eta"];

/// Full-precision, locale-independent float text (shortest round-trip form).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Cell-centred scalar field with its material labels.
///
/// Layout (little endian): `GLFD`, version `u32`, `d: u32`, `dims: [u32; 3]`,
/// `spacing: [f64; 3]`, `origin: [f64; 3]`, label map (`u32` count, then per entry
/// `u8` code, `u8` name length, name bytes), `u8` label per cell, `f64` value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub d: usize,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub labels: Vec<u8>,
    pub values: Vec<f64>,
}

impl FieldDump {
    pub fn new(grid: &Grid, labels: Vec<u8>, values: Vec<f64>) -> Result<Self> {
        let n = grid.ncells();
        for len in [labels.len(), values.len()] {
            if len != n {
                return Err(Error::GridMismatch { expected: n, found: len });
            }
        }
        Ok(FieldDump { d: grid.d, dims: grid.dims, spacing: grid.spacing, origin: grid.origin, labels, values })
    }

    pub fn from_domain(domain: &DomainLabels, values: Vec<f64>) -> Result<Self> {
        let labels = domain.labels.iter().map(|m| m.code()).collect();
        Self::new(&domain.grid, labels, values)
    }

    pub fn ncells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.d, self.dims, self.spacing, self.origin, [false; 3])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96 + 9 * self.ncells());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for n in self.dims {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for v in self.spacing.iter().chain(&self.origin) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let map = Material::ALL;
        out.extend_from_slice(&(map.len() as u32).to_le_bytes());
        for m in map {
            out.push(m.code());
            out.push(m.name().len() as u8);
            out.extend_from_slice(m.name().as_bytes());
        }
        out.extend_from_slice(&self.labels);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::BadDump("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::BadDump(format!("unsupported version {version}")));
        }
        let d = r.u32()? as usize;
        if !(1..=3).contains(&d) {
            return Err(Error::BadDump(format!("dimension {d}")));
        }
        let mut dims = [0usize; 3];
        for n in &mut dims {
            *n = r.u32()? as usize;
        }
        let mut spacing = [0.0; 3];
        let mut origin = [0.0; 3];
        for v in spacing.iter_mut().chain(origin.iter_mut()) {
            *v = r.f64()?;
        }
        let entries = r.u32()?;
        for _ in 0..entries {
            r.take(1)?;
            let len = r.take(1)?[0] as usize;
            r.take(len)?;
        }
        let n: usize = dims.iter().product();
        let labels = r.take(n)?.to_vec();
        let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::BadDump(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(FieldDump { d, dims, spacing, origin, labels, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| Error::BadDump("truncated".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Samples the dump along `axis` through the nearest cells; `offsets` gives the
/// coordinates of the remaining axes in increasing axis order.
pub fn extract_profile(dump: &FieldDump, axis: usize, offsets: &[f64]) -> Result<Vec<(f64, f64)>> {
    if axis >= dump.d {
        return Err(Error::Config(format!("profile axis {axis} >= dimension {}", dump.d)));
    }
    if offsets.len() != dump.d - 1 {
        return Err(Error::Config(format!("profile needs {} offsets, got {}", dump.d - 1, offsets.len())));
    }
    let mut fixed = [0usize; 3];
    let mut it = offsets.iter();
    for a in (0..dump.d).filter(|&a| a != axis) {
        let x = *it.next().unwrap();
        let lo = dump.origin[a];
        let hi = lo + dump.spacing[a] * dump.dims[a] as f64;
        if !(lo..=hi).contains(&x) || !x.is_finite() {
            return Err(Error::OffsetOutside { offset: x, lo, hi });
        }
        fixed[a] = (((x - lo) / dump.spacing[a]).floor() as usize).min(dump.dims[a] - 1);
    }
    let grid = dump.grid();
    Ok((0..dump.dims[axis])
        .map(|k| {
            let mut idx = fixed;
            idx[axis] = k;
            let coord = dump.origin[axis] + (k as f64 + 0.5) * dump.spacing[axis];
            (coord, dump.values[grid.index(idx)])
        })
        .collect())
}

/// Mean grain temperature over each period cell of width `eps` (lateral cell centres, mean).
pub fn grain_cell_averages(dump: &FieldDump, eps: f64) -> Vec<([f64; 2], f64)> {
    let grid = dump.grid();
    let grain = Material::Grain.code();
    let nl: Vec<usize> = (0..dump.d - 1)
        .map(|a| ((dump.spacing[a] * dump.dims[a] as f64) / eps).round().max(1.0) as usize)
        .collect();
    let ncell: usize = nl.iter().product();
    let mut sum = vec![0.0; ncell];
    let mut count = vec![0usize; ncell];
    for c in (0..dump.ncells()).filter(|&c| dump.labels[c] == grain) {
        let x = grid.center(c);
        let mut slot = 0;
        for a in (0..dump.d - 1).rev() {
            let j = (((x[a] - dump.origin[a]) / eps).floor() as usize).min(nl[a] - 1);
            slot = slot * nl[a] + j;
        }
        sum[slot] += dump.values[c];
        count[slot] += 1;
    }
    (0..ncell)
        .filter(|&s| count[s] > 0)
        .map(|s| {
            let mut centre = [0.0; 2];
            let mut rest = s;
            for a in 0..dump.d - 1 {
                centre[a] = dump.origin[a] + (rest % nl[a]) as f64 * eps + 0.5 * eps;
                rest /= nl[a];
            }
            (centre, sum[s] / count[s] as f64)
        })
        .collect()
}

/// In-memory CSV table of preformatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().copied().map(fmt_f64).collect());
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            wr.write_record(r).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn to_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("utf8 csv")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let rows = rd
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()).map_err(csv_err))
            .collect::<Result<_>>()?;
        Ok(CsvTable { header, rows })
    }

    /// Column `name` parsed as floats.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[i].parse().ok()).collect()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn micro_table(rows: &[LedgerRow]) -> CsvTable {
    let mut t = CsvTable::new(&MICRO_COLUMNS);
    for r in rows {
        t.push_f64(&[
            r.t,
            r.energy_stored,
            r.energy_injected,
            r.norm_l2_fluid,
            r.norm_l2_solid,
            r.norm_l2_grain_scaled,
            r.jump_norm,
        ]);
    }
    t
}

pub fn effective_table(rows: &[EffectiveLedgerRow]) -> CsvTable {
    let mut t = CsvTable::new(&EFFECTIVE_COLUMNS);
    for r in rows {
        t.push(vec![fmt_f64(r.t), r.k_iterations.to_string(), fmt_f64(r.e_final), fmt_f64(r.eta)]);
    }
    t
}

pub fn profile_table(profile: &[(f64, f64)]) -> CsvTable {
    let mut t = CsvTable::new(&["coordinate", "value"]);
    for &(x, v) in profile {
        t.push_f64(&[x, v]);
    }
    t
}

/// Per-point mean grain temperature: `x1[, x2], mean_grain`.
pub fn bank_table(d: usize, points: &[[f64; 2]], means: &[f64]) -> CsvTable {
    let header: &[&str] = if d == 2 { &["x1", "mean_grain"] } else { &["x1", "x2", "mean_grain"] };
    let mut t = CsvTable::new(header);
    for (p, &m) in points.iter().zip(means) {
        if d == 2 {
            t.push_f64(&[p[0], m]);
        } else {
            t.push_f64(&[p[0], p[1], m]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(d: usize, f: impl Fn([f64; 3]) -> f64) -> FieldDump {
        let dims = if d == 2 { [4, 8, 1] } else { [3, 3, 6] };
        let sp = if d == 2 { [0.25, 0.25, 1.0] } else { [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0] };
        let o = if d == 2 { [0.0, -1.0, 0.0] } else { [0.0, 0.0, -1.0] };
        let g = Grid::new(d, dims, sp, o, [false; 3]);
        let vals = (0..g.ncells()).map(|c| f(g.center(c))).collect();
        FieldDump::new(&g, vec![0; g.ncells()], vals).unwrap()
    }

    #[test]
    fn dump_round_trips() {
        let dump = sample(3, |x| x[0] + 10.0 * x[2]);
        let back = FieldDump::from_bytes(&dump.to_bytes()).unwrap();
        assert_eq!(dump, back);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.glfd");
        dump.write(&p).unwrap();
        assert_eq!(FieldDump::read(&p).unwrap(), dump);
    }

    #[test]
    fn corrupt_dumps_rejected() {
        let bytes = sample(2, |_| 1.0).to_bytes();
        assert!(matches!(FieldDump::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::BadDump(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FieldDump::from_bytes(&bad).is_err());
    }

    #[test]
    fn constant_and_linear_profiles() {
        let c = sample(2, |_| 3.5);
        assert!(extract_profile(&c, 1, &[0.4]).unwrap().iter().all(|&(_, v)| v == 3.5));
        let l = sample(2, |x| 2.0 * x[1] + 1.0);
        let prof = extract_profile(&l, 1, &[0.6]).unwrap();
        assert_eq!(prof.len(), 8);
        for (y, v) in prof {
            assert!((v - (2.0 * y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_outside_is_error() {
        let c = sample(2, |_| 0.0);
        assert!(matches!(extract_profile(&c, 1, &[1.5]), Err(Error::OffsetOutside { .. })));
        assert!(matches!(extract_profile(&c, 0, &[-1.2]), Err(Error::OffsetOutside { .. })));
    }

    #[test]
    fn csv_floats_round_trip() {
        let mut t = CsvTable::new(&["a", "b"]);
        let xs = [0.1 + 0.2, 1e-300, -3.0, f64::MAX, 1.0 / 3.0];
        for x in xs {
            t.push_f64(&[x, -x]);
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        t.write(&p).unwrap();
        let back = CsvTable::read(&p).unwrap();
        assert_eq!(back.column("a").unwrap(), xs.to_vec());
        assert!(t.to_string().starts_with("a,b\n"));
    }
}
