//! Binary container: magic, `u32` version, `u64` step, a length-prefixed
//! JSON metadata blob, then named `f64` blocks. All integers little-endian.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PLTNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub meta: serde_json::Value,
    pub blocks: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn new(step: u64, meta: serde_json::Value) -> Self {
        Self { step, meta, blocks: Vec::new() }
    }

    /// Appends every block of `store` under `prefix/name`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for b in store.blocks() {
            self.blocks.push((format!("{prefix}/{}", b.name), b.value.clone()));
        }
    }

    /// Copies the blocks saved under `prefix` back into a store of the same layout.
    pub fn restore_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let key = format!("{prefix}/{}", store.block(id).name);
            let (_, v) = self
                .blocks
                .iter()
                .find(|(n, _)| *n == key)
                .ok_or_else(|| Error::shape(format!("checkpoint has no block {key}")))?;
            if v.dim() != store.value(id).dim() {
                return Err(Error::shape(format!(
                    "block {key} is {:?} in the checkpoint, {:?} in the network",
                    v.dim(),
                    store.value(id).dim()
                )));
            }
            store.value_mut(id).assign(v);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta)?;
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.blocks.len() as u64).to_le_bytes());
        for (name, v) in &self.blocks {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(v.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(v.ncols() as u64).to_le_bytes());
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let step = r.u64()?;
        let meta_len = r.len()?;
        let meta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| format!("metadata: {e}"))?;
        let n = r.len()?;
        let mut blocks = Vec::new();
        for _ in 0..n {
            let name_len = r.len()?;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| "block name is not utf-8")?;
            let rows = r.len()?;
            let cols = r.len()?;
            let count = rows.checked_mul(cols).ok_or("block too large")?;
            let raw = r.take(count.checked_mul(8).ok_or("block too large")?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let v = Array2::from_shape_vec((rows, cols), data).map_err(|e| e.to_string())?;
            blocks.push((name, v));
        }
        if r.pos != bytes.len() {
            return Err("trailing bytes".into());
        }
        Ok(Self { step, meta, blocks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::Checkpoint { path: path.to_path_buf(), reason: e.to_string() })?
            .read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Checkpoint { path: path.to_path_buf(), reason })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "length overflow".to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{init_params, InitScheme, ParamSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store() -> ParamStore {
        let specs = [ParamSpec::weight("w", 3, 2), ParamSpec::bias("b", 3)];
        init_params(&specs, InitScheme::UniformFanin, &mut ChaCha8Rng::seed_from_u64(9))
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let s = store();
        let mut ck = Checkpoint::new(1234, serde_json::json!({"core": "gru"}));
        ck.push_store("actor", &s);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let mut fresh = init_params(
            &[ParamSpec::weight("w", 3, 2), ParamSpec::bias("b", 3)],
            InitScheme::Zeros,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        back.restore_store("actor", &mut fresh).unwrap();
        assert_eq!(fresh.fingerprint(), s.fingerprint());
    }

    #[test]
    fn rejects_corruption() {
        let mut ck = Checkpoint::new(1, serde_json::Value::Null);
        ck.push_store("q1", &store());
        let bytes = ck.to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).unwrap_err().contains("magic"));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(Checkpoint::from_bytes(&bad).unwrap_err().contains("version"));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());

        let mut other = ParamStore::new();
        other.add("w", Array2::zeros((2, 2)));
        assert!(ck.restore_store("q1", &mut other).is_err());
        assert!(Checkpoint::load(Path::new("/nonexistent/x.ckpt")).is_err());
    }
}
