//! Bit-level model of one DRAM subarray with the reserved compute rows used for
//! in-memory AND, majority ADD and multiplication.
//!
//! Row map (fixed, independent of the column count):
//!
//! | rows                              | use                                    |
//! |-----------------------------------|----------------------------------------|
//! | 0..9                              | compute rows `A A-1 B B-1 Cin Cin-1 Cout Cout-1 row0` |
//! | 9..9+(n-1)                        | intermediate accumulator rows `I0..I(n-2)` |
//! | next 2n                           | product rows `P0..P(2n-1)`             |
//! | remainder                         | operand slots, 2n rows each            |
//!
//! Operands are stored transposed: one column carries one multiplication, with
//! the `n` bits of the activation followed by the `n` bits of the weight, LSB in
//! the lowest-indexed row. Products are stored the same way.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{AapEvent, AapKind, AapTrace, OpKind, RowRef, TraceSummary};

pub const NUM_COMPUTE_ROWS: usize = 9;

/// The nine reserved compute rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComputeRow {
    A,
    A1,
    B,
    B1,
    Cin,
    Cin1,
    /// Dual-contact cell; readable through a negated port.
    Cout,
    /// Dual-contact cell; readable through a negated port.
    Cout1,
    Row0,
}

impl ComputeRow {
    pub const ALL: [ComputeRow; NUM_COMPUTE_ROWS] = [
        ComputeRow::A,
        ComputeRow::A1,
        ComputeRow::B,
        ComputeRow::B1,
        ComputeRow::Cin,
        ComputeRow::Cin1,
        ComputeRow::Cout,
        ComputeRow::Cout1,
        ComputeRow::Row0,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn is_dual_contact(self) -> bool {
        matches!(self, ComputeRow::Cout | ComputeRow::Cout1)
    }
}

const A: usize = ComputeRow::A.index();
const A1: usize = ComputeRow::A1.index();
const B: usize = ComputeRow::B.index();
const B1: usize = ComputeRow::B1.index();
const CIN: usize = ComputeRow::Cin.index();
const CIN1: usize = ComputeRow::Cin1.index();
const COUT: usize = ComputeRow::Cout.index();
const COUT1: usize = ComputeRow::Cout1.index();
const ROW0: usize = ComputeRow::Row0.index();

/// Operand bit width `n` (1..=32). Products are `2n` bits wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Precision(u32);

impl Precision {
    pub const MAX: u32 = 32;

    pub fn new(n: u32) -> Result<Self> {
        if n == 0 || n > Self::MAX {
            return Err(Error::Config(format!("precision must be in 1..={}, got {n}", Self::MAX)));
        }
        Ok(Precision(n))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn product_bits(self) -> u32 {
        2 * self.0
    }

    pub fn max_operand(self) -> u64 {
        (1u64 << self.0) - 1
    }
}

impl TryFrom<u32> for Precision {
    type Error = Error;

    fn try_from(n: u32) -> Result<Self> {
        Precision::new(n)
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLayout {
    pub n: Precision,
    pub intermediate: Range<usize>,
    pub product: Range<usize>,
    pub data_start: usize,
    pub rows: usize,
}

impl RowLayout {
    /// Rows needed for the reserved region plus one operand slot.
    pub fn min_rows(n: Precision) -> usize {
        let n = n.bits() as usize;
        NUM_COMPUTE_ROWS + (n - 1) + 2 * n + 2 * n
    }

    fn new(rows: usize, n: Precision) -> Self {
        let bits = n.bits() as usize;
        let intermediate = NUM_COMPUTE_ROWS..NUM_COMPUTE_ROWS + bits - 1;
        let product = intermediate.end..intermediate.end + 2 * bits;
        RowLayout { n, data_start: product.end, intermediate, product, rows }
    }

    pub fn intermediate_row(&self, i: usize) -> usize {
        debug_assert!(i < self.intermediate.len());
        self.intermediate.start + i
    }

    pub fn product_row(&self, j: usize) -> usize {
        debug_assert!(j < self.product.len());
        self.product.start + j
    }

    /// Number of operand pairs that can be stacked in one column.
    pub fn pair_slots(&self) -> usize {
        (self.rows - self.data_start) / (2 * self.n.bits() as usize)
    }

    /// `(activation rows, weight rows)` of operand slot `slot`.
    pub fn operand_rows(&self, slot: usize) -> (Range<usize>, Range<usize>) {
        let n = self.n.bits() as usize;
        let base = self.data_start + slot * 2 * n;
        (base..base + n, base + n..base + 2 * n)
    }

    pub fn is_data_row(&self, row: usize) -> bool {
        row >= self.data_start
    }
}

type Word = u64;
const WORD_BITS: usize = Word::BITS as usize;

/// Bit grid of one subarray plus its command trace.
#[derive(Debug, Clone)]
pub struct SubarrayState {
    rows: usize,
    cols: usize,
    words: usize,
    layout: RowLayout,
    cells: Vec<Word>,
    /// Columns gated in for writes; all columns unless a multiply restricts it.
    mask: Vec<Word>,
    trace: AapTrace,
}

impl SubarrayState {
    pub fn new(rows: usize, cols: usize, n: Precision) -> Result<Self> {
        let needed = RowLayout::min_rows(n);
        if rows < needed {
            return Err(Error::Config(format!(
                "{rows} rows cannot hold precision {}: need {needed} ({} short)",
                n.bits(),
                needed - rows
            )));
        }
        if cols == 0 {
            return Err(Error::Config("subarray needs at least one column".into()));
        }
        let words = cols.div_ceil(WORD_BITS);
        let mut s = SubarrayState {
            rows,
            cols,
            words,
            layout: RowLayout::new(rows, n),
            cells: vec![0; rows * words],
            mask: Vec::new(),
            trace: AapTrace::new(),
        };
        s.mask = s.range_mask(0..cols);
        Ok(s)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn precision(&self) -> Precision {
        self.layout.n
    }

    pub fn layout(&self) -> &RowLayout {
        &self.layout
    }

    pub fn trace(&self) -> &AapTrace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> AapTrace {
        std::mem::take(&mut self.trace)
    }

    fn range_mask(&self, cols: Range<usize>) -> Vec<Word> {
        let mut m = vec![0; self.words];
        for c in cols {
            m[c / WORD_BITS] |= 1 << (c % WORD_BITS);
        }
        m
    }

    fn row_words(&self, row: usize) -> &[Word] {
        &self.cells[row * self.words..(row + 1) * self.words]
    }

    fn check_row(&self, row: usize) -> Result<()> {
        if row >= self.rows {
            return Err(Error::RowBounds { row, rows: self.rows });
        }
        Ok(())
    }

    fn check_col(&self, col: usize) -> Result<()> {
        if col >= self.cols {
            return Err(Error::ColumnBounds { col, cols: self.cols });
        }
        Ok(())
    }

    fn store(&mut self, row: usize, value: &[Word]) {
        let w = self.words;
        let dst = &mut self.cells[row * w..(row + 1) * w];
        for ((d, v), m) in dst.iter_mut().zip(value).zip(&self.mask) {
            *d = (*d & !m) | (v & m);
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> bool {
        (self.row_words(row)[col / WORD_BITS] >> (col % WORD_BITS)) & 1 == 1
    }

    /// Host-side write of a single cell; not an in-memory command and not traced.
    pub fn set_cell(&mut self, row: usize, col: usize, bit: bool) {
        let idx = row * self.words + col / WORD_BITS;
        let b = 1 << (col % WORD_BITS);
        if bit {
            self.cells[idx] |= b;
        } else {
            self.cells[idx] &= !b;
        }
    }

    /// Host-side write of a whole row; not traced.
    pub fn fill_row(&mut self, row: usize, bit: bool) -> Result<()> {
        self.check_row(row)?;
        let fill = if bit { Word::MAX } else { 0 };
        let w = self.words;
        self.cells[row * w..(row + 1) * w].fill(fill);
        self.clear_tail(row);
        Ok(())
    }

    fn clear_tail(&mut self, row: usize) {
        let rem = self.cols % WORD_BITS;
        if rem != 0 {
            let idx = row * self.words + self.words - 1;
            self.cells[idx] &= (1 << rem) - 1;
        }
    }

    pub fn row_bits(&self, row: usize) -> Vec<bool> {
        (0..self.cols).map(|c| self.cell(row, c)).collect()
    }

    /// Raw 64-bit words of a row (bit `c % 64` of word `c / 64` is column `c`).
    pub fn row_word_slice(&self, row: usize) -> &[u64] {
        self.row_words(row)
    }

    /// RowClone a row onto another: one AAP.
    pub fn row_clone(&mut self, src: usize, dst: usize) -> Result<TraceSummary> {
        self.row_clone_to(src, &[dst])
    }

    /// RowClone onto several destination rows raised together by the second
    /// ACTIVATE: still one AAP.
    pub fn row_clone_to(&mut self, src: usize, dsts: &[usize]) -> Result<TraceSummary> {
        self.check_row(src)?;
        if dsts.is_empty() {
            return Err(Error::Config("row clone needs a destination".into()));
        }
        for &d in dsts {
            self.check_row(d)?;
            if d == src {
                return Err(Error::Aliasing(format!("row clone of row {src} onto itself")));
            }
        }
        let mark = self.trace.mark();
        self.copy(src, dsts);
        Ok(self.trace.since(mark))
    }

    fn copy(&mut self, src: usize, dsts: &[usize]) {
        let value = self.row_words(src).to_vec();
        for &d in dsts {
            self.store(d, &value);
        }
        self.trace.push(AapEvent {
            kind: AapKind::Copy,
            activated: vec![RowRef::Plain(src)],
            written: dsts.to_vec(),
        });
    }

    /// Zero `row0` together with the carry-in pair: one AAP.
    fn write_row0(&mut self) {
        let zero = vec![0; self.words];
        for r in [ROW0, CIN, CIN1] {
            self.store(r, &zero);
        }
        self.trace.push(AapEvent {
            kind: AapKind::WriteRow0,
            activated: vec![],
            written: vec![ROW0, CIN, CIN1],
        });
    }

    /// Simultaneous activation of three or five compute rows. Each column
    /// resolves to the majority of the connected cells; every activated cell is
    /// restored to that value. With `use_negated_cout`, `Cout` and `Cout-1` join
    /// through their negated ports (contributing `!Cout` twice), so `row_set`
    /// must then hold exactly three rows.
    pub fn multi_row_activate(&mut self, row_set: &[usize], use_negated_cout: bool) -> Result<Vec<bool>> {
        let mut refs: Vec<RowRef> = row_set.iter().map(|&r| RowRef::Plain(r)).collect();
        if use_negated_cout {
            refs.push(RowRef::Negated(COUT));
            refs.push(RowRef::Negated(COUT1));
        }
        self.validate_activation(&refs)?;
        let result = self.activate(&refs, &[]);
        Ok((0..self.cols)
            .map(|c| (result[c / WORD_BITS] >> (c % WORD_BITS)) & 1 == 1)
            .collect())
    }

    fn validate_activation(&self, refs: &[RowRef]) -> Result<()> {
        if refs.len() != 3 && refs.len() != 5 {
            return Err(Error::UnsupportedActivation(format!(
                "{} rows activated; only 3 or 5 are supported",
                refs.len()
            )));
        }
        let mut seen = [false; NUM_COMPUTE_ROWS];
        for r in refs {
            let row = r.row();
            if row >= ROW0 {
                return Err(Error::UnsupportedActivation(format!(
                    "row {row} is not an activatable compute row"
                )));
            }
            if let RowRef::Negated(_) = r {
                if !ComputeRow::ALL[row].is_dual_contact() {
                    return Err(Error::UnsupportedActivation(format!(
                        "row {row} has no negated port"
                    )));
                }
            }
            if seen[row] {
                return Err(Error::UnsupportedActivation(format!("row {row} activated twice")));
            }
            seen[row] = true;
        }
        Ok(())
    }

    /// One AAP: charge-share the `activated` rows, then raise `written`.
    fn activate(&mut self, activated: &[RowRef], written: &[usize]) -> Vec<Word> {
        let inputs: Vec<Vec<Word>> = activated
            .iter()
            .map(|r| match *r {
                RowRef::Plain(row) => self.row_words(row).to_vec(),
                RowRef::Negated(row) => self.row_words(row).iter().map(|w| !w).collect(),
            })
            .collect();
        let result: Vec<Word> = (0..self.words)
            .map(|i| {
                let column: Vec<Word> = inputs.iter().map(|v| v[i]).collect();
                majority_word(&column)
            })
            .collect();
        let negated: Vec<Word> = result.iter().map(|w| !w).collect();
        for r in activated {
            match *r {
                RowRef::Plain(row) => self.store(row, &result),
                RowRef::Negated(row) => self.store(row, &negated),
            }
        }
        for &row in written {
            self.store(row, &result);
        }
        for r in activated {
            self.clear_tail(r.row());
        }
        let kind = if activated.len() == 3 { AapKind::TripleActivate } else { AapKind::QuintupleActivate };
        self.trace.push(AapEvent { kind, activated: activated.to_vec(), written: written.to_vec() });
        result
    }

    fn check_result_row(&self, row: usize) -> Result<()> {
        self.check_row(row)?;
        if row == ROW0 || self.layout.is_data_row(row) {
            return Err(Error::Config(format!(
                "row {row} cannot receive a compute result (must be a compute, intermediate or product row)"
            )));
        }
        Ok(())
    }

    /// Bitwise AND of two rows in three AAPs: copy `a` into `A`, copy `b`
    /// into `A-1`, then raise the AND wordline (the value in `A` selects which
    /// cell reaches the bitline) and latch the sensed result in `dst`. `A` and
    /// `A-1` are left holding the result as well.
    pub fn and_op(&mut self, src_a: usize, src_b: usize, dst: &[usize]) -> Result<TraceSummary> {
        self.check_row(src_a)?;
        self.check_row(src_b)?;
        if dst.is_empty() || dst.len() > 2 {
            return Err(Error::Config(format!("AND takes 1 or 2 destination rows, got {}", dst.len())));
        }
        for &d in dst {
            self.check_result_row(d)?;
            if d == src_a || d == src_b {
                return Err(Error::Aliasing(format!("AND destination {d} overlaps a source row")));
            }
        }
        for s in [src_a, src_b] {
            if s == A || s == A1 {
                return Err(Error::Aliasing(format!(
                    "AND source {s} is one of the AND compute rows"
                )));
            }
        }
        let mark = self.trace.mark();
        self.and_rows(src_a, src_b, dst);
        Ok(self.trace.since(mark))
    }

    fn and_rows(&mut self, src_a: usize, src_b: usize, dst: &[usize]) {
        self.trace.begin(OpKind::And);
        self.copy(src_a, &[A]);
        self.copy(src_b, &[A1]);
        let result: Vec<Word> = self
            .row_words(A)
            .iter()
            .zip(self.row_words(A1))
            .map(|(a, b)| a & b)
            .collect();
        self.store(A, &result);
        self.store(A1, &result);
        for &d in dst {
            self.store(d, &result);
        }
        self.trace.push(AapEvent {
            kind: AapKind::AndStage,
            activated: vec![RowRef::Plain(A), RowRef::Plain(A1)],
            written: dst.to_vec(),
        });
        self.trace.end();
    }

    /// Ripple-carry addition of two `n`-bit row groups (LSB first) into `n+1`
    /// output rows using triple/quintuple activations: `4n + 1` AAPs.
    pub fn add_bitserial(&mut self, a_rows: &[usize], b_rows: &[usize], out_rows: &[usize]) -> Result<TraceSummary> {
        let n = a_rows.len();
        if n == 0 || b_rows.len() != n || out_rows.len() != n + 1 {
            return Err(Error::Config(format!(
                "add needs n, n and n+1 rows, got {}, {} and {}",
                a_rows.len(),
                b_rows.len(),
                out_rows.len()
            )));
        }
        let groups = [a_rows, b_rows, out_rows];
        for g in groups {
            for &r in g {
                self.check_row(r)?;
                if r < NUM_COMPUTE_ROWS {
                    return Err(Error::Aliasing(format!("row {r} is a compute row")));
                }
            }
        }
        let mut all: Vec<usize> = groups.iter().flat_map(|g| g.iter().copied()).collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Aliasing("add row groups overlap".into()));
        }

        let mark = self.trace.mark();
        self.trace.begin(OpKind::Add);
        self.copy(ROW0, &[CIN, CIN1]);
        let bits: Vec<RippleBit> = (0..n)
            .map(|j| RippleBit {
                x: a_rows[j],
                y: b_rows[j],
                sum_dst: Some(out_rows[j]),
                carry_dst: (j == n - 1).then_some(out_rows[n]),
            })
            .collect();
        self.ripple([CIN, CIN1, B1], [A, A1, B], &bits);
        self.trace.end();
        Ok(self.trace.since(mark))
    }

    /// Bit-serial ripple over the six triad rows. `carry[0]` and `carry[1]`
    /// hold the incoming carry; `carry[2]` and `free` are scratch. Each bit
    /// costs four AAPs: two operand copies, the carry (triple) activation and
    /// the sum (quintuple) activation. The triple activation leaves the new
    /// carry in all three rows it touched, so the roles rotate and the carry
    /// never has to be copied.
    fn ripple(&mut self, mut carry: [usize; 3], mut free: [usize; 3], bits: &[RippleBit]) {
        for bit in bits {
            let [c0, c1, c2] = carry;
            let [f0, f1, f2] = free;
            self.copy(bit.x, &[f0, f1]);
            self.copy(bit.y, &[f2, c2]);
            let mut carry_dst = vec![COUT, COUT1];
            carry_dst.extend(bit.carry_dst);
            self.activate(&[RowRef::Plain(f0), RowRef::Plain(f2), RowRef::Plain(c0)], &carry_dst);
            let sum_dst: Vec<usize> = bit.sum_dst.into_iter().collect();
            self.activate(
                &[
                    RowRef::Plain(f1),
                    RowRef::Plain(c2),
                    RowRef::Plain(c1),
                    RowRef::Negated(COUT),
                    RowRef::Negated(COUT1),
                ],
                &sum_dst,
            );
            carry = [f0, f2, c0];
            free = [f1, c2, c1];
        }
    }

    /// Writes an activation/weight pair into operand slot `slot` of column `col`.
    pub fn write_operands(&mut self, slot: usize, col: usize, a: u64, b: u64) -> Result<()> {
        self.check_col(col)?;
        let n = self.layout.n;
        if slot >= self.layout.pair_slots() {
            return Err(Error::Capacity(format!(
                "operand slot {slot} exceeds the {} slots of this subarray",
                self.layout.pair_slots()
            )));
        }
        for v in [a, b] {
            if v > n.max_operand() {
                return Err(Error::Range { value: v, bits: n.bits() });
            }
        }
        let (a_rows, b_rows) = self.layout.operand_rows(slot);
        for (j, row) in a_rows.enumerate() {
            self.set_cell(row, col, (a >> j) & 1 == 1);
        }
        for (j, row) in b_rows.enumerate() {
            self.set_cell(row, col, (b >> j) & 1 == 1);
        }
        Ok(())
    }

    pub fn write_operand_column(&mut self, col: usize, a: u64, b: u64) -> Result<()> {
        self.write_operands(0, col, a, b)
    }

    pub fn read_operands(&self, slot: usize, col: usize) -> Result<(u64, u64)> {
        self.check_col(col)?;
        let (a_rows, b_rows) = self.layout.operand_rows(slot);
        if b_rows.end > self.rows {
            return Err(Error::RowBounds { row: b_rows.end - 1, rows: self.rows });
        }
        let read = |rows: Range<usize>| {
            rows.enumerate()
                .fold(0u64, |acc, (j, r)| acc | (u64::from(self.cell(r, col)) << j))
        };
        Ok((read(a_rows), read(b_rows)))
    }

    pub fn read_product_column(&self, col: usize) -> Result<u64> {
        self.check_col(col)?;
        Ok(self
            .layout
            .product
            .clone()
            .enumerate()
            .fold(0u64, |acc, (j, r)| acc | (u64::from(self.cell(r, col)) << j)))
    }

    /// Product bit-plane `j` (row `Pj`) as one bit per column.
    pub fn product_plane(&self, j: usize) -> Vec<bool> {
        self.row_bits(self.layout.product_row(j))
    }

    /// Multiplies the operands in slot 0 for every column in `cols`.
    pub fn multiply(&mut self, cols: Range<usize>) -> Result<TraceSummary> {
        self.multiply_slot(0, cols)
    }

    /// Multiplies the operand pair stored in slot `slot` of every column in
    /// `cols` and leaves the `2n`-bit products in `P0..P(2n-1)`. The command
    /// sequence depends only on `n`; all columns are computed by the same
    /// commands. Columns outside `cols` are not written.
    pub fn multiply_slot(&mut self, slot: usize, cols: Range<usize>) -> Result<TraceSummary> {
        if cols.start >= cols.end || cols.end > self.cols {
            return Err(Error::Config(format!(
                "column range {cols:?} is empty or exceeds {} columns",
                self.cols
            )));
        }
        if slot >= self.layout.pair_slots() {
            return Err(Error::Config(format!(
                "operand slot {slot} is beyond the {} reserved slots",
                self.layout.pair_slots()
            )));
        }
        let mark = self.trace.mark();
        self.mask = self.range_mask(cols);
        match self.layout.n.bits() {
            1 => self.multiply_1bit(slot),
            2 => self.multiply_2bit(slot),
            _ => self.multiply_wide(slot),
        }
        self.mask = self.range_mask(0..self.cols);
        Ok(self.trace.since(mark))
    }

    fn operand_bit_rows(&self, slot: usize) -> (Vec<usize>, Vec<usize>) {
        let (a, b) = self.layout.operand_rows(slot);
        (a.collect(), b.collect())
    }

    /// Single partial product, resolved through the final-column sum/carry
    /// pass so that `P1` receives the (zero) carry.
    fn multiply_1bit(&mut self, slot: usize) {
        let (a, b) = self.operand_bit_rows(slot);
        let p = |j| self.layout.product_row(j);
        let (p0, p1) = (p(0), p(1));
        self.write_row0();
        self.and_rows(a[0], b[0], &[A, A1]);
        self.copy(ROW0, &[B, B1]);
        self.activate(&[RowRef::Plain(A), RowRef::Plain(B), RowRef::Plain(CIN)], &[COUT, COUT1, p1]);
        self.activate(&Self::quint_refs(), &[p0]);
    }

    fn quint_refs() -> [RowRef; 5] {
        [
            RowRef::Plain(A1),
            RowRef::Plain(B1),
            RowRef::Plain(CIN1),
            RowRef::Negated(COUT),
            RowRef::Negated(COUT1),
        ]
    }

    fn multiply_2bit(&mut self, slot: usize) {
        let (a, b) = self.operand_bit_rows(slot);
        let p: Vec<usize> = self.layout.product.clone().collect();
        let triple = [RowRef::Plain(A), RowRef::Plain(B), RowRef::Plain(CIN)];

        self.write_row0();
        // P0 = A0 B0
        self.and_rows(a[0], b[0], &[p[0]]);
        // A0 B1 parks in B/B-1 before the A-pair is reused for A1 B0.
        self.and_rows(a[0], b[1], &[B, B1]);
        self.and_rows(a[1], b[0], &[A, A1]);
        // P1 = A1B0 + A0B1 + 0, carry kept in Cin.
        self.trace.begin(OpKind::Add);
        self.activate(&triple, &[COUT, COUT1]);
        self.activate(&Self::quint_refs(), &[p[1]]);
        self.copy(CIN, &[CIN1]);
        self.trace.end();
        // P2, P3 = A1B1 + carry.
        self.and_rows(a[1], b[1], &[A, A1]);
        self.trace.begin(OpKind::Add);
        self.copy(ROW0, &[B, B1]);
        self.activate(&triple, &[COUT, COUT1, p[3]]);
        self.activate(&Self::quint_refs(), &[p[2]]);
        self.trace.end();
    }

    /// Column-by-column multiply for `n > 2` with an `(n-1)`-bit running sum
    /// in `I0..I(n-2)`. Each column's partial products are folded into the
    /// running sum by `(n-1)`-bit ADDs (`4(n-1)` AAPs each). A freshly computed
    /// partial product sitting in `A`/`A-1` serves as the ADD's carry-in; the
    /// first ADD of a column also takes a second partial product (parked in
    /// the next, not yet written, product row) as bit 0 of its second operand.
    /// The column's last ADD writes its result shifted down: bit 0 to `Pc`,
    /// the remaining bits and the carry-out back into `I`.
    fn multiply_wide(&mut self, slot: usize) {
        let n = self.layout.n.bits() as usize;
        let (a, b) = self.operand_bit_rows(slot);
        let p: Vec<usize> = self.layout.product.clone().collect();
        let inter: Vec<usize> = self.layout.intermediate.clone().collect();
        let last_col = 2 * n - 2;

        for c in 0..=last_col {
            let terms: Vec<(usize, usize)> = (c.saturating_sub(n - 1)..=c.min(n - 1))
                .rev()
                .map(|i| (a[i], b[c - i]))
                .collect();
            if c == 0 {
                let (ta, tb) = terms[0];
                self.and_rows(ta, tb, &[p[0]]);
                continue;
            }
            if c == last_col {
                let (ta, tb) = terms[0];
                self.and_rows(ta, tb, &[A, A1]);
                let mut dst = self.shifted_destinations(&inter, p[c]);
                dst.sum[1] = Some(p[c + 1]);
                self.accumulate(&inter, ROW0, dst);
                continue;
            }
            let scratch = p[c + 1];
            let (ta, tb) = terms[0];
            self.and_rows(ta, tb, &[scratch]);
            let (ta, tb) = terms[1];
            self.and_rows(ta, tb, &[A, A1]);
            // Column 1 starts from an empty running sum: read row0 instead of I.
            let running: Vec<usize> = if c == 1 { vec![ROW0; n - 1] } else { inter.clone() };
            let dst = if terms.len() == 2 {
                self.shifted_destinations(&inter, p[c])
            } else {
                AddDestinations::in_place(&inter)
            };
            self.accumulate(&running, scratch, dst);
            for (k, &(ta, tb)) in terms.iter().enumerate().skip(2) {
                self.and_rows(ta, tb, &[A, A1]);
                let dst = if k == terms.len() - 1 {
                    self.shifted_destinations(&inter, p[c])
                } else {
                    AddDestinations::in_place(&inter)
                };
                self.accumulate(&inter, ROW0, dst);
            }
        }
    }

    fn shifted_destinations(&self, inter: &[usize], product_row: usize) -> AddDestinations {
        let w = inter.len();
        let mut sum = vec![None; w];
        sum[0] = Some(product_row);
        for j in 1..w {
            sum[j] = Some(inter[j - 1]);
        }
        AddDestinations { sum, carry: Some(inter[w - 1]) }
    }

    /// `(n-1)`-bit ADD: `running + y0 + carry-in`, where the carry-in is the
    /// partial product already latched in `A`/`A-1` and `y0` is bit 0 of the
    /// second operand (higher bits come from `row0`).
    fn accumulate(&mut self, running: &[usize], y0: usize, dst: AddDestinations) {
        self.trace.begin(OpKind::Add);
        let bits: Vec<RippleBit> = running
            .iter()
            .enumerate()
            .map(|(j, &x)| RippleBit {
                x,
                y: if j == 0 { y0 } else { ROW0 },
                sum_dst: dst.sum[j],
                carry_dst: if j == running.len() - 1 { dst.carry } else { None },
            })
            .collect();
        self.ripple([A, A1, CIN1], [B, B1, CIN], &bits);
        self.trace.end();
    }
}

#[derive(Debug, Clone, Copy)]
struct RippleBit {
    x: usize,
    y: usize,
    sum_dst: Option<usize>,
    carry_dst: Option<usize>,
}

struct AddDestinations {
    sum: Vec<Option<usize>>,
    carry: Option<usize>,
}

impl AddDestinations {
    fn in_place(inter: &[usize]) -> Self {
        AddDestinations { sum: inter.iter().copied().map(Some).collect(), carry: None }
    }
}

/// Per-bit majority of 3 or 5 words, bit-sliced.
fn majority_word(inputs: &[Word]) -> Word {
    // Three-bit bit-sliced counter.
    let (mut s0, mut s1, mut s2) = (0, 0, 0);
    for &x in inputs {
        let c0 = s0 & x;
        s0 ^= x;
        let c1 = s1 & c0;
        s1 ^= c0;
        s2 |= c1;
    }
    match inputs.len() {
        3 => s1 | s2,
        5 => s2 | (s1 & s0),
        k => unreachable!("majority of {k} inputs"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u32) -> Precision {
        Precision::new(n).unwrap()
    }

    #[test]
    fn new_reserves_rows() {
        let s = SubarrayState::new(4096, 4096, p(4)).unwrap();
        assert_eq!(s.layout().intermediate.len(), 3);
        assert_eq!(s.layout().product.len(), 8);
        assert_eq!(s.layout().data_start, 9 + 3 + 8);
        assert!((0..4096).all(|c| !s.cell(4095, c)));

        let s = SubarrayState::new(32, 8, p(2)).unwrap();
        assert_eq!(RowLayout::min_rows(p(2)), 18);
        assert_eq!(s.layout().pair_slots(), (32 - 14) / 4);

        let err = SubarrayState::new(16, 8, p(4)).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("short")), "{err}");
        assert!(SubarrayState::new(32, 0, p(2)).is_err());
    }

    #[test]
    fn row_clone_semantics() {
        let mut s = SubarrayState::new(32, 70, p(2)).unwrap();
        s.fill_row(20, true).unwrap();
        let d = s.row_clone(20, 21).unwrap();
        assert_eq!(d.total_aap, 1);
        assert!(s.row_bits(21).iter().all(|&b| b));
        s.row_clone(ROW0, 21).unwrap();
        assert!(s.row_bits(21).iter().all(|&b| !b));
        assert!(matches!(s.row_clone(21, 21), Err(Error::Aliasing(_))));
        assert!(matches!(s.row_clone(21, 99), Err(Error::RowBounds { .. })));
    }

    fn set_col(s: &mut SubarrayState, rows: &[usize], bits: &[bool], col: usize) {
        for (&r, &b) in rows.iter().zip(bits) {
            s.set_cell(r, col, b);
        }
    }

    #[test]
    fn majority_examples() {
        let mut s = SubarrayState::new(32, 1, p(2)).unwrap();
        set_col(&mut s, &[A, B, CIN], &[true, true, false], 0);
        assert_eq!(s.multi_row_activate(&[A, B, CIN], false).unwrap(), vec![true]);
        // destructive: all three now hold the majority
        assert!(s.cell(A, 0) && s.cell(B, 0) && s.cell(CIN, 0));

        set_col(&mut s, &[A1, B1, CIN1, COUT, COUT1], &[true, false, false, false, false], 0);
        assert_eq!(s.multi_row_activate(&[A1, B1, CIN1], true).unwrap(), vec![true]);

        set_col(&mut s, &[A, B, CIN], &[false, false, false], 0);
        assert_eq!(s.multi_row_activate(&[A, B, CIN], false).unwrap(), vec![false]);
        assert_eq!(s.trace().total_aap(), 3);
    }

    #[test]
    fn majority_matches_popcount_threshold() {
        for k in [3usize, 5] {
            let rows: Vec<usize> = (0..k).collect();
            for pattern in 0u32..(1 << k) {
                let mut s = SubarrayState::new(32, 1, p(2)).unwrap();
                for (i, &r) in rows.iter().enumerate() {
                    s.set_cell(r, 0, (pattern >> i) & 1 == 1);
                }
                let got = s.multi_row_activate(&rows, false).unwrap()[0];
                assert_eq!(got, pattern.count_ones() as usize > k / 2, "k={k} pattern={pattern:b}");
            }
        }
    }

    #[test]
    fn unsupported_activations() {
        let mut s = SubarrayState::new(32, 1, p(2)).unwrap();
        assert!(matches!(s.multi_row_activate(&[A, B], false), Err(Error::UnsupportedActivation(_))));
        assert!(matches!(s.multi_row_activate(&[A, B, CIN, A1], false), Err(Error::UnsupportedActivation(_))));
        assert!(matches!(s.multi_row_activate(&[A, B, 20], false), Err(Error::UnsupportedActivation(_))));
        assert!(matches!(s.multi_row_activate(&[A, B, COUT], true), Err(Error::UnsupportedActivation(_))));
        assert_eq!(s.trace().total_aap(), 0);
    }

    #[test]
    fn and_truth_table() {
        let mut s = SubarrayState::new(32, 4, p(2)).unwrap();
        let (x, y) = (20, 21);
        for (c, (a, b)) in [(false, false), (false, true), (true, false), (true, true)].into_iter().enumerate() {
            s.set_cell(x, c, a);
            s.set_cell(y, c, b);
        }
        let p0 = s.layout().product_row(0);
        let d = s.and_op(x, y, &[p0]).unwrap();
        assert_eq!(d.total_aap, 3);
        assert_eq!(d.and_ops, 1);
        assert_eq!(s.row_bits(p0), vec![false, false, false, true]);
        assert_eq!(s.row_bits(A), s.row_bits(p0));
        s.and_op(x, y, &[B, B1]).unwrap();
        assert_eq!(s.row_bits(B), s.row_bits(B1));
        assert!(matches!(s.and_op(x, y, &[x]), Err(Error::Aliasing(_)) | Err(Error::Config(_))));
        assert!(matches!(s.and_op(x, y, &[p0, 12, 13]), Err(Error::Config(_))));
    }

    fn write_group(s: &mut SubarrayState, rows: &[usize], col: usize, v: u64) {
        for (j, &r) in rows.iter().enumerate() {
            s.set_cell(r, col, (v >> j) & 1 == 1);
        }
    }

    fn read_group(s: &SubarrayState, rows: &[usize], col: usize) -> u64 {
        rows.iter().enumerate().fold(0, |acc, (j, &r)| acc | (u64::from(s.cell(r, col)) << j))
    }

    #[test]
    fn add_exhaustive_2_and_4_bit() {
        for n in [2usize, 4] {
            let pairs: Vec<(u64, u64)> = (0..1u64 << n).flat_map(|a| (0..1u64 << n).map(move |b| (a, b))).collect();
            let rows = 40 + 3 * n + 1;
            let mut s = SubarrayState::new(rows, pairs.len(), p(2)).unwrap();
            let a_rows: Vec<usize> = (40..40 + n).collect();
            let b_rows: Vec<usize> = (40 + n..40 + 2 * n).collect();
            let o_rows: Vec<usize> = (40 + 2 * n..40 + 3 * n + 1).collect();
            for (c, &(a, b)) in pairs.iter().enumerate() {
                write_group(&mut s, &a_rows, c, a);
                write_group(&mut s, &b_rows, c, b);
            }
            let d = s.add_bitserial(&a_rows, &b_rows, &o_rows).unwrap();
            assert_eq!(d.total_aap, 4 * n as u64 + 1);
            assert_eq!(d.add_ops, 1);
            for (c, &(a, b)) in pairs.iter().enumerate() {
                assert_eq!(read_group(&s, &o_rows, c), a + b, "n={n} a={a} b={b}");
                assert_eq!(read_group(&s, &a_rows, c), a);
            }
        }
    }

    #[test]
    fn add_examples_and_aliasing() {
        let mut s = SubarrayState::new(64, 2, p(2)).unwrap();
        let a: Vec<usize> = (30..34).collect();
        let b: Vec<usize> = (34..38).collect();
        let o: Vec<usize> = (38..43).collect();
        write_group(&mut s, &a, 0, 0b1111);
        write_group(&mut s, &b, 0, 0b0001);
        write_group(&mut s, &a, 1, 0);
        write_group(&mut s, &b, 1, 11);
        assert_eq!(s.add_bitserial(&a, &b, &o).unwrap().total_aap, 17);
        assert_eq!(read_group(&s, &o, 0), 0b10000);
        assert_eq!(read_group(&s, &o, 1), 11);
        assert!(matches!(s.add_bitserial(&a, &a, &o), Err(Error::Aliasing(_))));
        assert!(matches!(s.add_bitserial(&a, &b, &o[..4]), Err(Error::Config(_))));
    }

    #[test]
    fn multiply_examples() {
        let mut s = SubarrayState::new(64, 1, p(2)).unwrap();
        s.write_operand_column(0, 0b11, 0b10).unwrap();
        let d = s.multiply(0..1).unwrap();
        assert_eq!(s.read_product_column(0).unwrap(), 6);
        assert_eq!(d.total_aap, 19);

        let mut s = SubarrayState::new(64, 1, p(4)).unwrap();
        s.write_operand_column(0, 15, 15).unwrap();
        let d = s.multiply(0..1).unwrap();
        assert_eq!(s.read_product_column(0).unwrap(), 225);
        assert_eq!(d.total_aap, 168);
        assert_eq!(d.and_ops, 16);
        assert_eq!(d.add_ops, 10);

        let mut s = SubarrayState::new(64, 2, p(4)).unwrap();
        s.write_operand_column(0, 5, 0).unwrap();
        s.write_operand_column(1, 2, 3).unwrap();
        s.multiply(0..2).unwrap();
        assert_eq!(s.read_product_column(0).unwrap(), 0);
        assert_eq!(s.read_product_column(1).unwrap(), 6);
    }

    #[test]
    fn operand_range_errors() {
        let mut s = SubarrayState::new(64, 1, p(4)).unwrap();
        assert!(matches!(s.write_operand_column(0, 16, 0), Err(Error::Range { value: 16, bits: 4 })));
        assert!(matches!(s.write_operand_column(1, 1, 1), Err(Error::ColumnBounds { .. })));
        assert!(s.multiply(0..0).is_err());
        assert!(s.multiply_slot(99, 0..1).is_err());
    }

    #[test]
    fn columns_outside_range_untouched() {
        let mut s = SubarrayState::new(64, 4, p(3)).unwrap();
        for c in 0..4 {
            s.write_operand_column(c, 7, 7).unwrap();
        }
        s.multiply(1..3).unwrap();
        assert_eq!(s.read_product_column(0).unwrap(), 0);
        assert_eq!(s.read_product_column(1).unwrap(), 49);
        assert_eq!(s.read_product_column(2).unwrap(), 49);
        assert_eq!(s.read_product_column(3).unwrap(), 0);
    }
}
