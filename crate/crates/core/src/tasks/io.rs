//! Dataset files: a small container with a JSON header describing named
//! sections, followed by raw little-endian payloads, plus JSONL export for
//! eyeball inspection.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

use super::order::{OrderPair, OrderPairDataset};
use super::set::{card_index, SetTriple};
use super::sorting::{SortingDataset, SortingSplit};

const MAGIC: &str = "ABLD1";

#[derive(Debug, Clone, PartialEq)]
pub enum SectionData {
    F64(Vec<f64>),
    U32(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: SectionData,
}

impl Section {
    pub fn f64(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_numel(name, &shape, data.len())?;
        Ok(Section { name: name.to_string(), shape, data: SectionData::F64(data) })
    }

    pub fn u32(name: &str, shape: Vec<usize>, data: Vec<u32>) -> Result<Self> {
        check_numel(name, &shape, data.len())?;
        Ok(Section { name: name.to_string(), shape, data: SectionData::U32(data) })
    }

    pub fn as_f64(&self) -> Result<&[f64]> {
        match &self.data {
            SectionData::F64(v) => Ok(v),
            SectionData::U32(_) => Err(LabError::format(format!(
                "section {} holds u32, not f64",
                self.name
            ))),
        }
    }

    pub fn as_u32(&self) -> Result<&[u32]> {
        match &self.data {
            SectionData::U32(v) => Ok(v),
            SectionData::F64(_) => Err(LabError::format(format!(
                "section {} holds f64, not u32",
                self.name
            ))),
        }
    }
}

fn check_numel(name: &str, shape: &[usize], got: usize) -> Result<()> {
    let want: usize = shape.iter().product();
    if want != got {
        return Err(LabError::format(format!(
            "section {name}: shape {shape:?} needs {want} values, got {got}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SectionMeta {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub task: String,
    pub seed: u64,
    sections: Vec<SectionMeta>,
}

pub fn write_container(
    path: impl AsRef<Path>,
    task: &str,
    seed: u64,
    sections: &[Section],
) -> Result<()> {
    let metas: Vec<SectionMeta> = sections
        .iter()
        .map(|s| SectionMeta {
            name: s.name.clone(),
            dtype: match s.data {
                SectionData::F64(_) => "f64".to_string(),
                SectionData::U32(_) => "u32".to_string(),
            },
            shape: s.shape.clone(),
        })
        .collect();
    let header = ContainerHeader { task: task.to_string(), seed, sections: metas };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| LabError::format(format!("container header encode: {e}")))?;

    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(header_json.as_bytes());
    out.push(b'\n');
    for s in sections {
        match &s.data {
            SectionData::F64(v) => {
                for &x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            SectionData::U32(v) => {
                for &x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<(ContainerHeader, Vec<Section>)> {
    let bytes = fs::read(path)?;
    let first_nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LabError::format("dataset container has no magic line"))?;
    if &bytes[..first_nl] != MAGIC.as_bytes() {
        return Err(LabError::format(format!(
            "unrecognized dataset container: expected magic {MAGIC:?}"
        )));
    }
    let rest = &bytes[first_nl + 1..];
    let second_nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LabError::format("dataset container has no header line"))?;
    let header: ContainerHeader = serde_json::from_slice(&rest[..second_nl])
        .map_err(|e| LabError::format(format!("container header decode: {e}")))?;

    let mut payload = &rest[second_nl + 1..];
    let mut sections = Vec::with_capacity(header.sections.len());
    for meta in &header.sections {
        let n: usize = meta.shape.iter().product();
        let width = match meta.dtype.as_str() {
            "f64" => 8,
            "u32" => 4,
            other => {
                return Err(LabError::format(format!(
                    "section {}: unknown dtype {other}",
                    meta.name
                )))
            }
        };
        if payload.len() < n * width {
            return Err(LabError::format(format!(
                "section {}: payload truncated ({} bytes left, {} needed)",
                meta.name,
                payload.len(),
                n * width
            )));
        }
        let (raw, tail) = payload.split_at(n * width);
        payload = tail;
        let data = match meta.dtype.as_str() {
            "f64" => SectionData::F64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            _ => SectionData::U32(
                raw.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        sections.push(Section { name: meta.name.clone(), shape: meta.shape.clone(), data });
    }
    if !payload.is_empty() {
        return Err(LabError::format(format!(
            "{} trailing bytes after the last section",
            payload.len()
        )));
    }
    Ok((header, sections))
}

/// Writes one JSON value per line.
pub fn export_jsonl(path: impl AsRef<Path>, rows: &[serde_json::Value]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| LabError::format(format!("jsonl encode: {e}")))?;
        f.write_all(line.as_bytes())?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn find<'a>(sections: &'a [Section], name: &str) -> Result<&'a Section> {
    sections
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| LabError::format(format!("container is missing section {name}")))
}

impl SortingDataset {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut sections = Vec::new();
        for (tag, split) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            sections.push(Section::u32(
                &format!("{tag}.indices"),
                vec![split.n, self.seq_len],
                split.indices.iter().map(|&v| v as u32).collect(),
            )?);
            sections.push(Section::u32(
                &format!("{tag}.targets"),
                vec![split.n, self.seq_len],
                split.targets.iter().map(|&v| v as u32).collect(),
            )?);
            sections.push(Section::f64(
                &format!("{tag}.inputs"),
                vec![split.n, self.seq_len, self.d],
                split.inputs.clone(),
            )?);
        }
        write_container(path, "sorting", self.seed, &sections)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, sections) = read_container(path)?;
        if header.task != "sorting" {
            return Err(LabError::format(format!(
                "expected a sorting dataset, found task {}",
                header.task
            )));
        }
        let shape = find(&sections, "train.inputs")?.shape.clone();
        let (seq_len, d) = (shape[1], shape[2]);
        let split = |tag: &str| -> Result<SortingSplit> {
            let idx = find(&sections, &format!("{tag}.indices"))?;
            let tgt = find(&sections, &format!("{tag}.targets"))?;
            let inp = find(&sections, &format!("{tag}.inputs"))?;
            Ok(SortingSplit {
                n: idx.shape[0],
                indices: idx.as_u32()?.iter().map(|&v| v as usize).collect(),
                targets: tgt.as_u32()?.iter().map(|&v| v as usize).collect(),
                inputs: inp.as_f64()?.to_vec(),
            })
        };
        Ok(SortingDataset {
            seq_len,
            d,
            seed: header.seed,
            train: split("train")?,
            val: split("val")?,
            test: split("test")?,
        })
    }
}

impl OrderPairDataset {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let pack = |pairs: &[OrderPair]| -> Vec<u32> {
            pairs
                .iter()
                .flat_map(|&(i, j, y)| [i as u32, j as u32, y as u32])
                .collect()
        };
        let sections = vec![
            Section::f64("objects", vec![self.n_objects, self.d], self.objects.clone())?,
            Section::u32("train.pairs", vec![self.train.len(), 3], pack(&self.train))?,
            Section::u32("val.pairs", vec![self.val.len(), 3], pack(&self.val))?,
            Section::u32("test.pairs", vec![self.test.len(), 3], pack(&self.test))?,
        ];
        write_container(path, "order_pairs", self.seed, &sections)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, sections) = read_container(path)?;
        if header.task != "order_pairs" {
            return Err(LabError::format(format!(
                "expected an order-pair dataset, found task {}",
                header.task
            )));
        }
        let objects = find(&sections, "objects")?;
        let shape = objects.shape.clone();
        let unpack = |name: &str| -> Result<Vec<OrderPair>> {
            let s = find(&sections, name)?;
            Ok(s.as_u32()?
                .chunks_exact(3)
                .map(|c| (c[0] as usize, c[1] as usize, c[2] as usize))
                .collect())
        };
        Ok(OrderPairDataset {
            n_objects: shape[0],
            d: shape[1],
            seed: header.seed,
            objects: objects.as_f64()?.to_vec(),
            train: unpack("train.pairs")?,
            val: unpack("val.pairs")?,
            test: unpack("test.pairs")?,
        })
    }
}

pub fn save_set_dataset(
    triples: &[SetTriple],
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut cards = Vec::with_capacity(triples.len() * 3);
    let mut labels = Vec::with_capacity(triples.len());
    for t in triples {
        for c in &t.cards {
            cards.push(card_index(c) as u32);
        }
        labels.push(u32::from(t.label));
    }
    let sections = vec![
        Section::u32("cards", vec![triples.len(), 3], cards)?,
        Section::u32("labels", vec![triples.len()], labels)?,
    ];
    write_container(path, "set_triples", seed, &sections)
}

pub fn load_set_dataset(path: impl AsRef<Path>) -> Result<(Vec<SetTriple>, u64)> {
    let (header, sections) = read_container(path)?;
    if header.task != "set_triples" {
        return Err(LabError::format(format!(
            "expected a SET dataset, found task {}",
            header.task
        )));
    }
    let cards = find(&sections, "cards")?.as_u32()?.to_vec();
    let labels = find(&sections, "labels")?.as_u32()?.to_vec();
    let mut triples = Vec::with_capacity(labels.len());
    for (k, &label) in labels.iter().enumerate() {
        let c: [super::set::Card; 3] = std::array::from_fn(|i| {
            super::set::card_from_index(cards[k * 3 + i] as usize)
        });
        let t = SetTriple::new(c)?;
        if t.label != (label == 1) {
            return Err(LabError::format(format!(
                "stored label disagrees with the rule oracle at triple {k}"
            )));
        }
        triples.push(t);
    }
    Ok((triples, header.seed))
}
