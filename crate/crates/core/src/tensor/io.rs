//! Little-endian tensor files: `"EITT"`, `u8` rank, `rank x u32` extents,
//! then the `f64` payload in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Tensor, MAX_RANK};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"EITT";

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&[t.rank() as u8])?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format(format!("bad tensor magic {magic:?}")));
    }
    let mut rank = [0u8; 1];
    r.read_exact(&mut rank).map_err(truncated)?;
    let rank = rank[0] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format(format!("tensor rank {rank} outside 1..={MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut n: usize = 1;
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(truncated)?;
        let d = u32::from_le_bytes(b) as usize;
        n = n
            .checked_mul(d)
            .ok_or_else(|| Error::Format("tensor element count overflows".into()))?;
        shape.push(d);
    }
    let mut data = Vec::with_capacity(n.min(1 << 24));
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b).map_err(truncated)?;
        data.push(f64::from_le_bytes(b));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after tensor payload".into()));
    }
    Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

fn truncated(e: std::io::Error) -> Error {
    Error::Format(format!("truncated tensor: {e}"))
}

pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(5 + 4 * t.rank() + 8 * t.len());
    write_tensor(&mut buf, t).expect("writing to a Vec cannot fail");
    buf
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    read_tensor(bytes)
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_layout() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap();
        let b = tensor_to_bytes(&t);
        let mut want = b"EITT".to_vec();
        want.push(2);
        want.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0]);
        want.extend_from_slice(&1.0f64.to_le_bytes());
        want.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(b, want);
        assert_eq!(tensor_from_bytes(&b).unwrap(), t);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(tensor_from_bytes(b"EITX\x01\x01\x00\x00\x00").is_err());
        let mut b = tensor_to_bytes(&Tensor::from_vec(vec![1.0, 2.0]));
        b.pop();
        assert!(tensor_from_bytes(&b).is_err());
        let mut b = tensor_to_bytes(&Tensor::from_vec(vec![1.0]));
        b.push(0);
        assert!(tensor_from_bytes(&b).is_err());
    }
}
