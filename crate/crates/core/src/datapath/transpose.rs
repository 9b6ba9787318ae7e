//! Transpose unit: values are written as rows and read back as bit-planes.

use crate::error::{Error, Result};

pub const DEFAULT_ROWS: usize = 256;
pub const DEFAULT_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransposeBuffer {
    rows: usize,
    width: usize,
    /// `grid[r]` bit `c` is the cell at row `r`, column `c`.
    grid: Vec<u64>,
    written: usize,
    read: usize,
}

impl Default for TransposeBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_ROWS, DEFAULT_WIDTH).expect("default geometry is valid")
    }
}

impl TransposeBuffer {
    pub fn new(rows: usize, width: usize) -> Result<Self> {
        if rows == 0 || width == 0 || width > 64 {
            return Err(Error::Config(format!("transpose buffer {rows}x{width} is not supported")));
        }
        Ok(TransposeBuffer { rows, width, grid: vec![0; rows], written: 0, read: 0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn written(&self) -> usize {
        self.written
    }

    /// Writes one row; bit `c` of `word` lands in column `c`.
    pub fn write(&mut self, word: u64) -> Result<()> {
        if self.written == self.rows {
            return Err(Error::Capacity(format!("transpose buffer holds {} rows", self.rows)));
        }
        if self.width < 64 && word >> self.width != 0 {
            return Err(Error::Range { value: word, bits: self.width as u32 });
        }
        self.grid[self.written] = word;
        self.written += 1;
        Ok(())
    }

    /// Next column as one bit per written row, in write order.
    pub fn read_plane(&mut self) -> Result<Vec<bool>> {
        if self.read == self.width {
            return Err(Error::Capacity("all columns already read".into()));
        }
        let c = self.read;
        self.read += 1;
        Ok(self.grid[..self.written].iter().map(|w| (w >> c) & 1 == 1).collect())
    }

    /// Next column shifted out as a word: the first written row ends in the
    /// most significant position. Needs at most 64 written rows.
    pub fn read(&mut self) -> Result<u64> {
        if self.written > 64 {
            return Err(Error::Capacity(format!(
                "{} rows do not fit a 64-bit column word; use read_plane",
                self.written
            )));
        }
        Ok(self.read_plane()?.into_iter().fold(0u64, |acc, b| (acc << 1) | u64::from(b)))
    }

    /// Empties the buffer for the next batch.
    pub fn clear(&mut self) {
        self.grid.iter_mut().for_each(|w| *w = 0);
        self.written = 0;
        self.read = 0;
    }
}

pub fn transpose_write(buf: &mut TransposeBuffer, word: u64) -> Result<()> {
    buf.write(word)
}

pub fn transpose_read(buf: &mut TransposeBuffer) -> Result<u64> {
    buf.read()
}

/// Pushes `values` through transpose buffers in batches and returns the
/// `bits` bit-planes (plane `j` holds bit `j` of every value), plus the
/// number of buffer batches used.
pub fn transpose_values(values: &[u64], bits: u32, rows: usize) -> Result<(Vec<Vec<bool>>, usize)> {
    let mut planes = vec![Vec::with_capacity(values.len()); bits as usize];
    let mut buf = TransposeBuffer::new(rows, bits as usize)?;
    let mut batches = 0;
    for chunk in values.chunks(rows) {
        buf.clear();
        for &v in chunk {
            buf.write(v)?;
        }
        for plane in planes.iter_mut() {
            plane.extend(buf.read_plane()?);
        }
        batches += 1;
    }
    Ok((planes, batches))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let mut b = TransposeBuffer::new(2, 2).unwrap();
        transpose_write(&mut b, 0b01).unwrap();
        transpose_write(&mut b, 0b10).unwrap();
        assert_eq!(transpose_read(&mut b).unwrap(), 0b10);
        assert_eq!(transpose_read(&mut b).unwrap(), 0b01);
        assert!(b.read().is_err());
    }

    #[test]
    fn identity_matrix_cells() {
        let mut b = TransposeBuffer::new(4, 4).unwrap();
        for r in 0..4 {
            b.write(1 << r).unwrap();
        }
        for c in 0..4 {
            let plane = b.read_plane().unwrap();
            assert_eq!(plane, (0..4).map(|r| r == c).collect::<Vec<_>>());
        }
    }

    #[test]
    fn capacity() {
        let mut b = TransposeBuffer::new(1, 8).unwrap();
        b.write(3).unwrap();
        assert!(matches!(b.write(1), Err(Error::Capacity(_))));
        let mut b = TransposeBuffer::default();
        assert!(matches!(b.write(256), Err(Error::Range { .. })));
    }

    #[test]
    fn batched_planes() {
        let values: Vec<u64> = (0..10).map(|v| v % 8).collect();
        let (planes, batches) = transpose_values(&values, 3, 4).unwrap();
        assert_eq!(batches, 3);
        for (i, &v) in values.iter().enumerate() {
            let back = (0..3).fold(0, |acc, j| acc | (u64::from(planes[j][i]) << j));
            assert_eq!(back, v);
        }
    }
}
