//! RSKF binary and CSV feature files, plus the `<name>.meta.json` sidecar.
//!
//! RSKF layout (little-endian):
//!
//! ```text
//! "RSKF" | version u32 = 1 | N u64 | D u32 | C u32
//! labels u32×N | group u8×N | split u8×N | features f32×(N·D) row-major
//! CRC32 (IEEE) of all preceding bytes
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{FeatureDataset, Group, Split};
use crate::error::{Result, RiskError};
use crate::ndcore::Matrix;

pub const RSKF_MAGIC: [u8; 4] = *b"RSKF";
pub const RSKF_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4;

/// Sidecar key under which CSV files record their class count.
const CLASSES_KEY: &str = "classes";

/// `dir/<stem>.meta.json` for `dir/<stem>.<ext>`.
pub fn metadata_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

fn write_metadata(path: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    fs::write(metadata_path(path), text + "\n")?;
    Ok(())
}

fn read_metadata(path: &Path) -> Result<BTreeMap<String, String>> {
    let meta = metadata_path(path);
    if !meta.exists() {
        return Ok(BTreeMap::new());
    }
    Ok(serde_json::from_str(&fs::read_to_string(meta)?)?)
}

pub fn write_rskf(ds: &FeatureDataset) -> Vec<u8> {
    let n = ds.len();
    let d = ds.dim();
    let mut buf = Vec::with_capacity(HEADER_LEN + n * (6 + 4 * d) + 4);
    buf.extend_from_slice(&RSKF_MAGIC);
    buf.extend_from_slice(&RSKF_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.classes() as u32).to_le_bytes());
    for &l in ds.labels() {
        buf.extend_from_slice(&(l as u32).to_le_bytes());
    }
    buf.extend(ds.groups().iter().map(|g| g.tag()));
    buf.extend(ds.splits().iter().map(|s| s.tag()));
    for &v in ds.features().data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(RiskError::Truncated {
                needed: self.pos.saturating_add(len),
                found: self.bytes.len(),
            });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_rskf(bytes: &[u8]) -> Result<FeatureDataset> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != RSKF_MAGIC {
        return Err(RiskError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != RSKF_VERSION {
        return Err(RiskError::VersionMismatch(version));
    }
    let n = r.u64()? as usize;
    let d = r.u32()? as usize;
    let classes = r.u32()? as usize;

    let body = n
        .checked_mul(4 + 1 + 1)
        .and_then(|x| n.checked_mul(d)?.checked_mul(4)?.checked_add(x))
        .ok_or(RiskError::Truncated {
            needed: usize::MAX,
            found: bytes.len(),
        })?;
    let needed = HEADER_LEN + body + 4;
    if bytes.len() < needed {
        return Err(RiskError::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    let stored = u32::from_le_bytes(bytes[needed - 4..needed].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..needed - 4]);
    if stored != computed {
        return Err(RiskError::ChecksumMismatch { stored, computed });
    }

    let labels = (0..n)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let groups = r
        .take(n)?
        .iter()
        .map(|&t| Group::from_tag(t))
        .collect::<Result<Vec<_>>>()?;
    let splits = r
        .take(n)?
        .iter()
        .map(|&t| Split::from_tag(t))
        .collect::<Result<Vec<_>>>()?;
    let features = r
        .take(n * d * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureDataset::new(Matrix::new(n, d, features)?, labels, groups, splits, classes)
}

pub fn save_rskf(ds: &FeatureDataset, path: &Path) -> Result<()> {
    fs::write(path, write_rskf(ds))?;
    if !ds.metadata.is_empty() {
        write_metadata(path, &ds.metadata)?;
    }
    Ok(())
}

pub fn load_rskf(path: &Path) -> Result<FeatureDataset> {
    let ds = read_rskf(&fs::read(path)?)?;
    Ok(ds.with_metadata(read_metadata(path)?))
}

/// Writes `label,group,split,f0..f{D-1}` rows. The class count goes to the
/// sidecar alongside any metadata.
pub fn save_csv(ds: &FeatureDataset, path: &Path) -> Result<()> {
    let mut out = String::from("label,group,split");
    for j in 0..ds.dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for i in 0..ds.len() {
        out.push_str(&format!(
            "{},{},{}",
            ds.labels()[i],
            ds.groups()[i].tag(),
            ds.splits()[i].tag()
        ));
        for &v in ds.features().row(i) {
            out.push_str(&format!(",{}", v as f32));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    let mut meta = ds.metadata.clone();
    meta.insert(CLASSES_KEY.into(), ds.classes().to_string());
    write_metadata(path, &meta)
}

/// Reads a CSV feature file. The class count comes from `classes`, else the
/// sidecar, else `max label + 1`.
pub fn load_csv(path: &Path, classes: Option<usize>) -> Result<FeatureDataset> {
    let text = fs::read_to_string(path)?;
    let mut meta = read_metadata(path)?;
    let sidecar_classes = meta
        .remove(CLASSES_KEY)
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| RiskError::InvalidConfig(format!("sidecar classes {v:?}")))
        })
        .transpose()?;

    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(RiskError::Csv {
        line: 1,
        msg: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[..3] != ["label", "group", "split"] {
        return Err(RiskError::Csv {
            line: 1,
            msg: "header must start with label,group,split".into(),
        });
    }
    let d = cols.len() - 3;
    for (j, name) in cols[3..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(RiskError::Csv {
                line: 1,
                msg: format!("expected column f{j}, found {name:?}"),
            });
        }
    }

    let (mut labels, mut groups, mut splits, mut data) = (vec![], vec![], vec![], vec![]);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 3 {
            return Err(RiskError::Csv {
                line: lineno,
                msg: format!("expected {} fields, found {}", d + 3, fields.len()),
            });
        }
        let int = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| RiskError::Csv {
                line: lineno,
                msg: format!("bad {what} {s:?}"),
            })
        };
        labels.push(int(fields[0], "label")? as usize);
        let g = int(fields[1], "group")?;
        groups.push(Group::from_tag(u8::try_from(g).map_err(|_| RiskError::UnknownGroupFlag(255))?)?);
        let s = int(fields[2], "split")?;
        splits.push(Split::from_tag(u8::try_from(s).map_err(|_| RiskError::UnknownSplitTag(255))?)?);
        for f in &fields[3..] {
            let v: f32 = f.parse().map_err(|_| RiskError::Csv {
                line: lineno,
                msg: format!("bad float {f:?}"),
            })?;
            data.push(v as f64);
        }
    }
    let n = labels.len();
    let classes = classes
        .or(sidecar_classes)
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let ds = FeatureDataset::new(Matrix::new(n, d, data)?, labels, groups, splits, classes)?;
    Ok(ds.with_metadata(meta))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads by extension: `.csv` as CSV, anything else as RSKF.
pub fn load_features(path: &Path) -> Result<FeatureDataset> {
    if is_csv(path) {
        load_csv(path, None)
    } else {
        load_rskf(path)
    }
}

pub fn save_features(ds: &FeatureDataset, path: &Path) -> Result<()> {
    if is_csv(path) {
        save_csv(ds, path)
    } else {
        save_rskf(ds, path)
    }
}
