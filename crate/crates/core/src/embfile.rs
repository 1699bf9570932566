//! Binary embedding file (`CPME`).
//!
//! Little-endian layout:
//!
//! ```text
//! magic   b"CPME"
//! version u16 (= 1)
//! dim     u32
//! count   u64
//! count × { id_len u16, id (UTF-8, id_len bytes), dim × f32 }
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::embedding::Embedding;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CPME";
pub const VERSION: u16 = 1;

/// Records of one embedding file, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub records: Vec<(String, Embedding)>,
}

impl EmbeddingFile {
    pub fn new(dim: usize) -> Self {
        EmbeddingFile {
            dim,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, embedding: Embedding) -> Result<()> {
        embedding.check_dim(self.dim)?;
        self.records.push((id.into(), embedding));
        Ok(())
    }

    pub fn into_map(self) -> BTreeMap<String, Embedding> {
        self.records.into_iter().collect()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        write_records(
            w,
            self.dim,
            self.records.iter().map(|(id, e)| (id.as_str(), e)),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Stream records to `w`. The iterator must yield exactly the records to be
/// counted in the header, so it is collected first.
pub fn write_records<'a, W, I>(mut w: W, dim: usize, records: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a Embedding)>,
{
    let records: Vec<_> = records.into_iter().collect();
    let dim32 = u32::try_from(dim)
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::format(None, format!("unsupported dim {dim}")))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim32.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for (i, (id, emb)) in records.iter().enumerate() {
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::format(Some(i as u64), "id longer than 65535 bytes"))?;
        if emb.dim() != dim {
            return Err(Error::format(
                Some(i as u64),
                format!("record has dim {}, header dim {dim}", emb.dim()),
            ));
        }
        w.write_all(&id_len.to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        for v in emb.values() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact_or<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    record: Option<u64>,
    what: &str,
) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(record, format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

/// Parse an embedding file from a reader. Trailing bytes after the last
/// record are rejected.
pub fn read_from<R: Read>(mut r: R) -> Result<EmbeddingFile> {
    let mut header = [0u8; 18];
    read_exact_or(&mut r, &mut header, None, "header")?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(None, "bad magic (expected CPME)"));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::format(
            None,
            format!("unsupported version {version}"),
        ));
    }
    let dim = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::format(None, "header dim must be positive"));
    }
    let count = u64::from_le_bytes(header[10..18].try_into().unwrap());

    let mut out = EmbeddingFile::new(dim);
    let mut seen = HashSet::new();
    let mut values = vec![0u8; dim * 4];
    for i in 0..count {
        let rec = Some(i);
        let mut len = [0u8; 2];
        read_exact_or(&mut r, &mut len, rec, "record id length")?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or(&mut r, &mut id, rec, "record id")?;
        let id = String::from_utf8(id).map_err(|_| Error::format(rec, "id is not valid UTF-8"))?;
        read_exact_or(
            &mut r,
            &mut values,
            rec,
            "record values (fewer than header dim)",
        )?;
        let floats: Vec<f32> = values
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let emb = Embedding::from_f32(&floats).map_err(|e| Error::format(rec, e.to_string()))?;
        if !seen.insert(id.clone()) {
            return Err(Error::format(rec, format!("duplicate id {id:?}")));
        }
        out.records.push((id, emb));
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(out),
        _ => Err(Error::format(
            Some(count),
            "trailing bytes after last record (record/dim mismatch with header)",
        )),
    }
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    read_from(BufReader::new(File::open(path)?))
}
