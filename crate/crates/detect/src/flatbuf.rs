//! Bounds-checked reader for the subset of the FlatBuffers wire format that
//! TF-Lite model files use: tables, vectors, strings and scalars.

use std::fmt;

#[derive(Debug, Clone)]
pub struct FbError(pub String);

impl fmt::Display for FbError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type FbResult<T> = Result<T, FbError>;

fn oob(what: &str, pos: usize) -> FbError {
    FbError(format!("{what} at byte {pos} is out of bounds"))
}

fn bytes<const N: usize>(buf: &[u8], pos: usize) -> FbResult<[u8; N]> {
    buf.get(pos..pos + N)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| oob("scalar", pos))
}

fn u32_at(buf: &[u8], pos: usize) -> FbResult<u32> {
    bytes::<4>(buf, pos).map(u32::from_le_bytes)
}

fn u16_at(buf: &[u8], pos: usize) -> FbResult<u16> {
    bytes::<2>(buf, pos).map(u16::from_le_bytes)
}

/// Follow a forward `uoffset_t` stored at `pos`.
fn follow(buf: &[u8], pos: usize) -> FbResult<usize> {
    let off = u32_at(buf, pos)? as usize;
    pos.checked_add(off)
        .filter(|&p| p < buf.len())
        .ok_or_else(|| oob("offset target", pos))
}

#[derive(Clone, Copy)]
pub struct Table<'a> {
    buf: &'a [u8],
    pos: usize,
    vtable: usize,
    vt_len: usize,
}

impl<'a> Table<'a> {
    pub fn root(buf: &'a [u8]) -> FbResult<Self> {
        let pos = follow(buf, 0)?;
        Self::at(buf, pos)
    }

    fn at(buf: &'a [u8], pos: usize) -> FbResult<Self> {
        let soff = i32::from_le_bytes(bytes::<4>(buf, pos)?) as i64;
        let vtable = pos as i64 - soff;
        if vtable < 0 || vtable as usize + 4 > buf.len() {
            return Err(oob("vtable", pos));
        }
        let vtable = vtable as usize;
        let vt_len = u16_at(buf, vtable)? as usize;
        Ok(Self {
            buf,
            pos,
            vtable,
            vt_len,
        })
    }

    /// Absolute position of field `id`, or `None` when absent.
    fn field(&self, id: usize) -> FbResult<Option<usize>> {
        let slot = 4 + 2 * id;
        if slot + 2 > self.vt_len {
            return Ok(None);
        }
        let off = u16_at(self.buf, self.vtable + slot)? as usize;
        Ok((off != 0).then_some(self.pos + off))
    }

    pub fn u8_or(&self, id: usize, default: u8) -> FbResult<u8> {
        match self.field(id)? {
            Some(p) => self.buf.get(p).copied().ok_or_else(|| oob("u8", p)),
            None => Ok(default),
        }
    }

    pub fn i32_or(&self, id: usize, default: i32) -> FbResult<i32> {
        match self.field(id)? {
            Some(p) => bytes::<4>(self.buf, p).map(i32::from_le_bytes),
            None => Ok(default),
        }
    }

    pub fn u32_or(&self, id: usize, default: u32) -> FbResult<u32> {
        match self.field(id)? {
            Some(p) => u32_at(self.buf, p),
            None => Ok(default),
        }
    }

    pub fn table(&self, id: usize) -> FbResult<Option<Table<'a>>> {
        match self.field(id)? {
            Some(p) => Ok(Some(Table::at(self.buf, follow(self.buf, p)?)?)),
            None => Ok(None),
        }
    }

    fn vector(&self, id: usize, elem: usize) -> FbResult<Option<(usize, usize)>> {
        let Some(p) = self.field(id)? else {
            return Ok(None);
        };
        let start = follow(self.buf, p)?;
        let len = u32_at(self.buf, start)? as usize;
        let data = start + 4;
        match len.checked_mul(elem).and_then(|n| n.checked_add(data)) {
            Some(end) if end <= self.buf.len() => Ok(Some((data, len))),
            _ => Err(oob("vector", start)),
        }
    }

    pub fn bytes(&self, id: usize) -> FbResult<&'a [u8]> {
        Ok(match self.vector(id, 1)? {
            Some((data, len)) => &self.buf[data..data + len],
            None => &[],
        })
    }

    pub fn string(&self, id: usize) -> FbResult<String> {
        Ok(String::from_utf8_lossy(self.bytes(id)?).into_owned())
    }

    pub fn i32s(&self, id: usize) -> FbResult<Vec<i32>> {
        Ok(match self.vector(id, 4)? {
            Some((data, len)) => self.buf[data..data + 4 * len]
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect(),
            None => Vec::new(),
        })
    }

    pub fn tables(&self, id: usize) -> FbResult<Vec<Table<'a>>> {
        let Some((data, len)) = self.vector(id, 4)? else {
            return Ok(Vec::new());
        };
        (0..len)
            .map(|i| Table::at(self.buf, follow(self.buf, data + 4 * i)?))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled buffer: root table with an i32 field (id 0 = 7), a
    /// missing field (id 1), and an int vector [3, -4] (id 2).
    fn sample() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&16u32.to_le_bytes()); // root -> table at 16
                                                   // vtable at 4: len 10, obj 12, fields: id0 @4, id1 absent, id2 @8
        for v in [10u16, 12, 4, 0, 8] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&[0, 0]);
        b.extend_from_slice(&12i32.to_le_bytes()); // vtable = 16 - 12
        b.extend_from_slice(&7i32.to_le_bytes()); // id0 @ 20
        b.extend_from_slice(&8u32.to_le_bytes()); // id2 @ 24 -> vector at 32
        b.extend_from_slice(&[0; 4]);
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&3i32.to_le_bytes());
        b.extend_from_slice(&(-4i32).to_le_bytes());
        b
    }

    #[test]
    fn reads_fields_and_defaults() {
        let buf = sample();
        let t = Table::root(&buf).unwrap();
        assert_eq!(t.i32_or(0, -1).unwrap(), 7);
        assert_eq!(t.i32_or(1, 42).unwrap(), 42);
        assert_eq!(t.i32s(2).unwrap(), vec![3, -4]);
        assert_eq!(t.i32_or(9, 5).unwrap(), 5);
    }

    #[test]
    fn truncation_is_an_error_not_a_panic() {
        let buf = sample();
        for cut in 0..buf.len() {
            let short = &buf[..cut];
            if let Ok(t) = Table::root(short) {
                let _ = t.i32_or(0, 0);
                let _ = t.i32s(2);
            }
        }
    }
}
