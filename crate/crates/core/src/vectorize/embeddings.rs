//! Precomputed per-tweet dense vectors, read from `id<TAB>f1 f2 ... fd` rows.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalEmbeddings {
    vectors: BTreeMap<u64, Vec<f32>>,
    dim: usize,
}

impl ExternalEmbeddings {
    pub fn new(dim: usize) -> Self {
        ExternalEmbeddings {
            vectors: BTreeMap::new(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&[f32]> {
        self.vectors.get(&id).map(Vec::as_slice)
    }

    /// Vector of `id` widened to `f64`.
    pub fn get_f64(&self, id: u64) -> Option<Vec<f64>> {
        self.get(id).map(|v| v.iter().map(|&x| x as f64).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f32])> {
        self.vectors.iter().map(|(&id, v)| (id, v.as_slice()))
    }

    pub fn insert(&mut self, id: u64, vector: Vec<f32>) -> Result<()> {
        if self.vectors.is_empty() && self.dim == 0 {
            self.dim = vector.len();
        }
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value in vector {id}")));
        }
        if self.vectors.insert(id, vector).is_some() {
            return Err(Error::DuplicateId(id));
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut out = ExternalEmbeddings::default();
        for (n, line) in BufReader::new(input).lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected id<TAB>values".into()))?;
            let id: u64 = id
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad id {id:?}")))?;
            let vector = rest
                .split_whitespace()
                .map(|f| f.parse::<f32>().map_err(|_| parse_err(format!("non-numeric value {f:?}"))))
                .collect::<Result<Vec<f32>>>()?;
            if vector.is_empty() {
                return Err(parse_err("empty vector".into()));
            }
            out.insert(id, vector).map_err(|e| match e {
                Error::DimensionMismatch { expected, got } => {
                    parse_err(format!("ragged row: {got} values, expected {expected}"))
                }
                other => other,
            })?;
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        ExternalEmbeddings::read_from(file)
    }

    /// Write in id order. `f32` Display is the shortest string that parses
    /// back to the same value, so a write/load round trip is exact.
    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        for (id, v) in &self.vectors {
            write!(out, "{id}\t")?;
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    out.write_all(b" ")?;
                }
                write!(out, "{x}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn parses_one_row() {
        let e = ExternalEmbeddings::read_from(&b"7\t0.1 0.2 0.3\n"[..]).unwrap();
        assert_eq!(e.dim(), 3);
        assert_eq!(e.get(7).unwrap(), [0.1f32, 0.2, 0.3]);
    }

    #[test]
    fn rejects_bad_files() {
        for bad in [
            &b"1\t0.1 0.2\n2\t0.3\n"[..],
            b"1\t0.1 abc\n",
            b"1\t0.1\n1\t0.2\n",
            b"x\t0.1\n",
            b"1 0.1\n",
            b"1\tNaN\n",
        ] {
            assert!(ExternalEmbeddings::read_from(bad).is_err(), "{:?}", String::from_utf8_lossy(bad));
        }
    }

    #[test]
    fn large_roundtrip_is_bit_exact() {
        let mut rng = crate::seed::rng(3);
        let mut e = ExternalEmbeddings::new(8);
        for id in 0..20_000u64 {
            let v = (0..8)
                .map(|_| {
                    let mag = 10f32.powi(rng.random_range(-30..30));
                    rng.random_range(-1.0f32..1.0) * mag
                })
                .collect();
            e.insert(id * 7919, v).unwrap();
        }
        let mut buf = Vec::new();
        e.write_to(&mut buf).unwrap();
        let back = ExternalEmbeddings::read_from(&buf[..]).unwrap();
        assert_eq!(back.len(), 20_000);
        for ((ia, va), (ib, vb)) in e.iter().zip(back.iter()) {
            assert_eq!(ia, ib);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(va), bits(vb));
        }
    }
}
