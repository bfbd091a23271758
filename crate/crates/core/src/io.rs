//! Binary tensor files.
//!
//! Layout: `b"AGRT"`, version `0x01`, dtype byte (`0x01` f32, `0x02` f64), rank byte,
//! `rank` little-endian `u32` dims, then the row-major little-endian payload.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AGRT";
pub const VERSION: u8 = 0x01;

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 4 * t.rank() + T::DTYPE.size() * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE.code());
    out.push(u8::try_from(t.rank()).expect("rank fits in a byte"));
    for &d in t.dims() {
        out.extend_from_slice(&u32::try_from(d).expect("dim fits in u32").to_le_bytes());
    }
    for &x in t.data() {
        x.write_le(&mut out);
    }
    out
}

/// Decodes a tensor; `origin` only labels errors.
pub fn decode<T: Scalar>(bytes: &[u8], origin: &Path) -> Result<Tensor<T>> {
    let fail = |msg: String| Error::format(origin, msg);
    if bytes.len() < 7 {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail(format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes[4] != VERSION {
        return Err(fail(format!("unsupported version {:#04x}", bytes[4])));
    }
    let dtype = DType::from_code(bytes[5]).ok_or_else(|| fail(format!("unknown dtype {:#04x}", bytes[5])))?;
    if dtype != T::DTYPE {
        return Err(fail(format!("dtype {dtype:?} does not match requested {:?}", T::DTYPE)));
    }
    let rank = bytes[6] as usize;
    let header = 7 + 4 * rank;
    if bytes.len() < header {
        return Err(fail("truncated dims".into()));
    }
    let dims: Vec<usize> = bytes[7..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let n: usize = dims.iter().product();
    let size = dtype.size();
    if bytes.len() != header + n * size {
        return Err(fail(format!(
            "payload has {} bytes, dims {dims:?} need {}",
            bytes.len() - header,
            n * size
        )));
    }
    let data = bytes[header..].chunks_exact(size).map(T::read_le).collect();
    Tensor::new(dims, data).map_err(|e| fail(e.to_string()))
}

pub fn write_tensor<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let b = encode(&t);
        assert_eq!(&b[..7], &[b'A', b'G', b'R', b'T', 1, 1, 2]);
        assert_eq!(&b[7..11], &2u32.to_le_bytes());
        assert_eq!(&b[11..15], &3u32.to_le_bytes());
        assert_eq!(b.len(), 15 + 24);
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::<f64>::zeros(&[4]);
        let p = Path::new("x.agrt");
        let mut b = encode(&t);
        assert!(decode::<f32>(&b, p).is_err());
        b.pop();
        assert!(decode::<f64>(&b, p).is_err());
        let mut b = encode(&t);
        b[0] = b'X';
        let msg = decode::<f64>(&b, p).unwrap_err().to_string();
        assert!(msg.contains("x.agrt") && msg.contains("magic"), "{msg}");
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(dims in proptest::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
            let mut s = seed;
            let t = Tensor::<f64>::from_fn(&dims, |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                f64::from_bits(s >> 2)
            });
            let back: Tensor<f64> = decode(&encode(&t), Path::new("p")).unwrap();
            prop_assert_eq!(back.dims(), t.dims());
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
