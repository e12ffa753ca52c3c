//! Binary checkpoint layout for [`NetworkParams`].
//!
//! ```text
//! magic    4 bytes  "AMNP"
//! version  u32 LE   (currently 1)
//! layers   u32 LE
//! per layer: rows u32 LE, cols u32 LE, activation u8
//! count    u64 LE
//! values   count × f64 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::{Activation, LayerShape, NetworkParams};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AMNP";
pub const VERSION: u32 = 1;

impl NetworkParams {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers().len() as u32).to_le_bytes())?;
        for s in self.layers() {
            w.write_all(&(s.rows as u32).to_le_bytes())?;
            w.write_all(&(s.cols as u32).to_le_bytes())?;
            w.write_all(&[s.activation.tag()])?;
        }
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in self.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n_layers = read_u32(&mut r)? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag)?;
            let activation = Activation::from_tag(tag[0])
                .ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {}", tag[0])))?;
            layers.push(LayerShape::new(rows, cols, activation));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let count = u64::from_le_bytes(buf8) as usize;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf8)?;
            values.push(f64::from_le_bytes(buf8));
        }
        NetworkParams::new(layers, values).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..12) {
            let mut rng = crate::rng::seeded(seed);
            let p = NetworkParams::mlp(&[3, hidden, 2], Activation::Softplus, Activation::Tanh, &mut rng);
            let mut buf = Vec::new();
            p.write_to(&mut buf).unwrap();
            let q = NetworkParams::read_from(buf.as_slice()).unwrap();
            prop_assert_eq!(p.layers(), q.layers());
            let a: Vec<u64> = p.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = q.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_and_foreign_files_rejected() {
        let mut rng = crate::rng::seeded(3);
        let p = NetworkParams::mlp(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut rng);
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert!(NetworkParams::read_from(&buf[..buf.len() - 3]).is_err());
        buf[0] = b'X';
        assert!(matches!(NetworkParams::read_from(buf.as_slice()), Err(Error::Checkpoint(_))));
    }
}
