//! Binary feature archive: per utterance `FEATURE_MAGIC`, u32 rows, u32 cols,
//! then little-endian f32 row-major values; a text index maps
//! `utt_id<TAB>byte_offset`.

use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const FEATURE_MAGIC: [u8; 4] = *b"RSFM";

pub fn write_archive(
    data_path: impl AsRef<Path>,
    index_path: impl AsRef<Path>,
    mats: &[FeatureMatrix],
) -> Result<()> {
    let (data_path, index_path) = (data_path.as_ref(), index_path.as_ref());
    let mut data = std::io::BufWriter::new(
        std::fs::File::create(data_path).map_err(|e| Error::io(data_path, e))?,
    );
    let mut index = std::io::BufWriter::new(
        std::fs::File::create(index_path).map_err(|e| Error::io(index_path, e))?,
    );
    let mut offset = 0u64;
    for m in mats {
        let mut rec = Vec::with_capacity(12 + 4 * m.data().len());
        rec.extend_from_slice(&FEATURE_MAGIC);
        rec.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        rec.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.data() {
            rec.extend_from_slice(&v.to_le_bytes());
        }
        data.write_all(&rec).map_err(|e| Error::io(data_path, e))?;
        writeln!(index, "{}\t{}", m.source_utt, offset).map_err(|e| Error::io(index_path, e))?;
        offset += rec.len() as u64;
    }
    data.flush().map_err(|e| Error::io(data_path, e))?;
    index.flush().map_err(|e| Error::io(index_path, e))
}

pub fn read_archive_index(index_path: impl AsRef<Path>) -> Result<Vec<(String, u64)>> {
    let path = index_path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (utt, off) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, format!("line {}: missing tab", i + 1)))?;
        let off = off
            .parse()
            .map_err(|_| Error::format(path, format!("line {}: bad offset", i + 1)))?;
        out.push((utt.to_string(), off));
    }
    Ok(out)
}

fn read_record<R: Read>(r: &mut R, path: &Path) -> Result<FeatureMatrix> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    if head[..4] != FEATURE_MAGIC {
        return Err(Error::format(path, "bad feature record magic"));
    }
    let rows = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; rows * cols * 4];
    r.read_exact(&mut payload).map_err(|e| Error::io(path, e))?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(rows, cols, data)
}

pub fn read_matrix_at(data_path: impl AsRef<Path>, offset: u64) -> Result<FeatureMatrix> {
    let path = data_path.as_ref();
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    f.seek(SeekFrom::Start(offset)).map_err(|e| Error::io(path, e))?;
    read_record(&mut f, path)
}

/// All matrices in index order, each tagged with its utterance id.
pub fn read_archive(
    data_path: impl AsRef<Path>,
    index_path: impl AsRef<Path>,
) -> Result<Vec<FeatureMatrix>> {
    let path = data_path.as_ref();
    let index = read_archive_index(index_path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    index
        .into_iter()
        .map(|(utt, off)| {
            let start = usize::try_from(off).ok().filter(|&o| o <= bytes.len());
            let start = start.ok_or_else(|| Error::format(path, format!("offset {off} past end")))?;
            let mut cursor = &bytes[start..];
            Ok(read_record(&mut cursor, path)?.with_source(utt))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn archive_round_trips(shapes in proptest::collection::vec((1usize..20, 1usize..6), 1..5)) {
            let dir = tempfile::tempdir().unwrap();
            let mats: Vec<FeatureMatrix> = shapes
                .iter()
                .enumerate()
                .map(|(i, &(r, c))| {
                    let data = (0..r * c).map(|k| (k as f32 * 0.37 - i as f32).sin()).collect();
                    FeatureMatrix::new(r, c, data).unwrap().with_source(format!("utt{i}"))
                })
                .collect();
            let (d, x) = (dir.path().join("f.ark"), dir.path().join("f.idx"));
            write_archive(&d, &x, &mats).unwrap();
            let back = read_archive(&d, &x).unwrap();
            prop_assert_eq!(&back, &mats);
            let idx = read_archive_index(&x).unwrap();
            let last = read_matrix_at(&d, idx.last().unwrap().1).unwrap();
            prop_assert_eq!(last.data(), mats.last().unwrap().data());
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("f.ark");
        std::fs::write(&d, b"XXXX\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(read_matrix_at(&d, 0).is_err());
    }
}
