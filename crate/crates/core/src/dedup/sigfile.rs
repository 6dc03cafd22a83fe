//! Binary signature files, little-endian:
//! `MHSG`, version u16, k u16, n u16, seed u64, then per document a u32
//! byte length, the UTF-8 doc id, and k u64 values.

use std::io::{self, Read, Write};

use super::{params_id, DedupError, MinHashSignature};
use crate::doc::DocId;

pub const SIGNATURE_MAGIC: &[u8; 4] = b"MHSG";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignatureHeader {
    pub k: u16,
    pub n: u16,
    pub seed: u64,
}

impl SignatureHeader {
    pub fn params_id(&self) -> u64 {
        params_id(self.k as usize, self.n as usize, self.seed)
    }
}

pub fn write_signatures<'a, W: Write>(
    mut w: W,
    header: SignatureHeader,
    docs: impl IntoIterator<Item = (&'a DocId, &'a MinHashSignature)>,
) -> Result<(), DedupError> {
    w.write_all(SIGNATURE_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&header.k.to_le_bytes())?;
    w.write_all(&header.n.to_le_bytes())?;
    w.write_all(&header.seed.to_le_bytes())?;
    let expected = header.params_id();
    for (id, sig) in docs {
        if sig.params_id != expected || sig.values.len() != header.k as usize {
            return Err(DedupError::ParamsMismatch);
        }
        let id = id.to_string();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        for v in &sig.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn bad(msg: impl Into<String>) -> DedupError {
    DedupError::BadSignatureFile(msg.into())
}

pub fn read_signatures<R: Read>(
    mut r: R,
) -> Result<(SignatureHeader, Vec<(DocId, MinHashSignature)>), DedupError> {
    let magic: [u8; 4] = read_array(&mut r).map_err(|_| bad("missing header"))?;
    if &magic != SIGNATURE_MAGIC {
        return Err(bad("wrong magic"));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let header = SignatureHeader {
        k: u16::from_le_bytes(read_array(&mut r)?),
        n: u16::from_le_bytes(read_array(&mut r)?),
        seed: u64::from_le_bytes(read_array(&mut r)?),
    };
    let pid = header.params_id();

    let mut docs = Vec::new();
    loop {
        let mut len = [0u8; 4];
        match r.read(&mut len[..1])? {
            0 => break,
            _ => r.read_exact(&mut len[1..]).map_err(|_| bad("truncated entry"))?,
        }
        let mut id = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut id).map_err(|_| bad("truncated doc id"))?;
        let id: DocId = String::from_utf8(id)
            .map_err(|_| bad("doc id is not UTF-8"))?
            .parse()
            .map_err(|e| bad(format!("{e}")))?;
        let mut values = Vec::with_capacity(header.k as usize);
        for _ in 0..header.k {
            values.push(u64::from_le_bytes(
                read_array(&mut r).map_err(|_| bad("truncated signature"))?,
            ));
        }
        docs.push((id, MinHashSignature { values, params_id: pid }));
    }
    Ok((header, docs))
}
