//! Little-endian field readers shared by the binary formats.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub(crate) struct FieldReader<R> {
    inner: R,
}

impl<R: Read> FieldReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn bytes(&mut self, field: &'static str, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Truncated { field },
            _ => Error::Io(e),
        })
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let mut found = [0u8; 4];
        self.bytes("magic", &mut found)?;
        if &found != expected {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(&found).into_owned(),
            });
        }
        Ok(())
    }

    pub fn u8(&mut self, field: &'static str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.bytes(field, &mut b)?;
        Ok(b[0])
    }

    pub fn u16(&mut self, field: &'static str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.bytes(field, &mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    pub fn u32(&mut self, field: &'static str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.bytes(field, &mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self, field: &'static str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.bytes(field, &mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn f32(&mut self, field: &'static str) -> Result<f32> {
        let mut b = [0u8; 4];
        self.bytes(field, &mut b)?;
        Ok(f32::from_le_bytes(b))
    }

    pub fn f64(&mut self, field: &'static str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.bytes(field, &mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    pub fn f32_vec(&mut self, field: &'static str, len: usize) -> Result<Vec<f32>> {
        let mut raw = vec![0u8; len * 4];
        self.bytes(field, &mut raw)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    /// Fails if any byte remains in the stream.
    pub fn expect_end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        loop {
            return match self.inner.read(&mut b) {
                Ok(0) => Ok(()),
                Ok(_) => Err(Error::format("eof", "trailing bytes after payload")),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => Err(Error::Io(e)),
            };
        }
    }
}

/// Byte-counting writer.
pub(crate) struct CountingWriter<W> {
    inner: W,
    pub written: u64,
}

impl<W: Write> CountingWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner, written: 0 }
    }

    pub fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes)?;
        self.written += bytes.len() as u64;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}
