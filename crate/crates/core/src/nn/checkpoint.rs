//! Binary model checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "FLAGCKPT"
//! version      u32       1
//! task         u8        0 = node classification, 1 = graph classification
//! embedding    u8        0 = absent, 1 = present
//! num_layers   u32
//! [embedding]  rows u64, cols u64, rows*cols f64 (row-major)
//! layers       num_layers records:
//!   tag u8     0 = gcn, 1 = dense, 2 = relu, 3 = dropout, 4 = readout
//!   gcn/dense  rows u64, cols u64, rows*cols f64 weight (row-major), cols f64 bias
//!   dropout    p f64
//!   readout    mode u8 (0 = mean, 1 = sum)
//! ```

use std::fs;
use std::path::Path;

use super::model::{Affine, Layer, Model, ReadoutMode, Task};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 8] = b"FLAGCKPT";
const VERSION: u32 = 1;

fn put_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    buf.extend((m.rows() as u64).to_le_bytes());
    buf.extend((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        buf.extend(v.to_le_bytes());
    }
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend(MAGIC);
    buf.extend(VERSION.to_le_bytes());
    buf.push(match model.task() {
        Task::NodeClassification => 0,
        Task::GraphClassification => 1,
    });
    buf.push(model.embedding().is_some() as u8);
    buf.extend((model.layers().len() as u32).to_le_bytes());
    if let Some(t) = model.embedding() {
        put_matrix(&mut buf, t);
    }
    for layer in model.layers() {
        match layer {
            Layer::Gcn(a) | Layer::Dense(a) => {
                buf.push(if matches!(layer, Layer::Gcn(_)) { 0 } else { 1 });
                put_matrix(&mut buf, &a.weight);
                for b in &a.bias {
                    buf.extend(b.to_le_bytes());
                }
            }
            Layer::Relu => buf.push(2),
            Layer::Dropout(p) => {
                buf.push(3);
                buf.extend(p.to_le_bytes());
            }
            Layer::Readout(mode) => {
                buf.push(4);
                buf.push(match mode {
                    ReadoutMode::Mean => 0,
                    ReadoutMode::Sum => 1,
                });
            }
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Checkpoint("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("size overflow".into()))?;
        Matrix::from_vec(rows, cols, self.floats(n)?)
    }
}

pub fn decode(buf: &[u8]) -> Result<Model> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let task = match r.u8()? {
        0 => Task::NodeClassification,
        1 => Task::GraphClassification,
        t => return Err(Error::Checkpoint(format!("unknown task tag {t}"))),
    };
    let has_embedding = r.u8()? == 1;
    let num_layers = r.u32()? as usize;
    let embedding = if has_embedding { Some(r.matrix()?) } else { None };
    let mut layers = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let tag = r.u8()?;
        layers.push(match tag {
            0 | 1 => {
                let weight = r.matrix()?;
                let bias = r.floats(weight.cols())?;
                let a = Affine { weight, bias };
                if tag == 0 {
                    Layer::Gcn(a)
                } else {
                    Layer::Dense(a)
                }
            }
            2 => Layer::Relu,
            3 => Layer::Dropout(r.f64()?),
            4 => Layer::Readout(match r.u8()? {
                0 => ReadoutMode::Mean,
                1 => ReadoutMode::Sum,
                m => return Err(Error::Checkpoint(format!("unknown readout mode {m}"))),
            }),
            t => return Err(Error::Checkpoint(format!("unknown layer tag {t}"))),
        });
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Model::new(embedding, layers, task).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn header_layout() {
        let m = Model::gcn(&[3, 2], 0.0, &mut stream(0, Stream::Init)).unwrap();
        let bytes = encode(&m);
        assert_eq!(&bytes[..8], b"FLAGCKPT");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(bytes[12], 0);
        assert_eq!(bytes[13], 0);
        assert_eq!(&bytes[14..18], &[1, 0, 0, 0]);
        assert_eq!(bytes[18], 0);
        // tag + 2×u64 dims + 6 weights + 2 biases
        assert_eq!(bytes.len(), 19 + 16 + 8 * 8);
    }

    #[test]
    fn round_trip_graph_model() {
        let m = Model::graph_classifier(7, 3, &[4, 4], 2, 0.25, ReadoutMode::Sum, &mut stream(1, Stream::Init)).unwrap();
        assert_eq!(decode(&encode(&m)).unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let m = Model::gcn(&[3, 2], 0.5, &mut stream(0, Stream::Init)).unwrap();
        let mut bytes = encode(&m);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
    }
}
