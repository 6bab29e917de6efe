//! Brownian sheet generation on a lattice.
//!
//! Every sheet is the cumulative double sum of i.i.d. `N(0, 1/m²)` cell
//! increments drawn in row-major cell order from a ChaCha8 stream keyed by
//! `(master_seed, sheet_role)` and positioned by `stream_index`. The same
//! `SeedSpec` always yields the same lattice, bit for bit, whichever thread
//! generates it.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Lattice};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SheetRole {
    /// The sheet `W` that drives the diffusion.
    DrivingW,
    /// The independent sheet `B` carrying the limit process.
    IndependentB,
}

impl SheetRole {
    fn tag(self) -> u32 {
        match self {
            SheetRole::DrivingW => 0,
            SheetRole::IndependentB => 1,
        }
    }

    fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(SheetRole::DrivingW),
            1 => Some(SheetRole::IndependentB),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_index: u64,
    pub sheet_role: SheetRole,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_index: u64, sheet_role: SheetRole) -> Self {
        Self {
            master_seed,
            stream_index,
            sheet_role,
        }
    }

    /// The generator for this stream. The ChaCha key packs the master seed and
    /// the role; the 64-bit stream id is the replicate index.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..12].copy_from_slice(&self.sheet_role.tag().to_le_bytes());
        key[12..16].copy_from_slice(b"BSHT");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Row-by-row Brownian sheet generator.
///
/// Holds two rows of the lattice; each call to [`SheetStream::advance`] draws
/// the next row of cell increments and hands every cell's lower-left corner
/// value and increment to the callback.
pub struct SheetStream {
    rng: ChaCha8Rng,
    mesh: f64,
    prev: Vec<f64>,
    cur: Vec<f64>,
    row: usize,
    m: usize,
}

impl SheetStream {
    pub fn new(grid: Grid, seed: &SeedSpec) -> Self {
        let side = grid.side();
        Self {
            rng: seed.rng(),
            mesh: grid.mesh(),
            prev: vec![0.0; side],
            cur: vec![0.0; side],
            row: 0,
            m: grid.n(),
        }
    }

    /// Index of the last completed row (0 before any call to `advance`).
    pub fn row(&self) -> usize {
        self.row
    }

    pub fn is_done(&self) -> bool {
        self.row == self.m
    }

    /// Draws row `k = row() + 1`. The callback receives `(l, W((k-1)/m, (l-1)/m), ΔW_{k,l})`
    /// for `l = 1..=m`. Returns the completed row `W(k/m, ·)`.
    pub fn advance(&mut self, mut on_cell: impl FnMut(usize, f64, f64)) -> &[f64] {
        assert!(self.row < self.m, "sheet stream exhausted");
        std::mem::swap(&mut self.prev, &mut self.cur);
        let mut row_sum = 0.0;
        for l in 1..=self.m {
            let z: f64 = self.rng.sample(StandardNormal);
            let dw = z * self.mesh;
            on_cell(l, self.prev[l - 1], dw);
            row_sum += dw;
            self.cur[l] = self.prev[l] + row_sum;
        }
        self.row += 1;
        &self.cur
    }

    /// The row before the one most recently completed.
    pub fn previous_row(&self) -> &[f64] {
        &self.prev
    }
}

#[derive(Clone, Debug)]
pub struct BrownianSheet {
    lattice: Lattice,
    seed: Option<SeedSpec>,
    /// The increments as drawn, when the sheet came from the generator.
    drawn: Option<Vec<f64>>,
}

impl PartialEq for BrownianSheet {
    fn eq(&self, other: &Self) -> bool {
        self.lattice == other.lattice && self.seed == other.seed
    }
}

impl BrownianSheet {
    /// Wraps an arbitrary lattice (used for deterministic fixtures).
    pub fn from_lattice(lattice: Lattice, seed: Option<SeedSpec>) -> Self {
        Self {
            lattice,
            seed,
            drawn: None,
        }
    }

    /// Cell increments, row-major `n×n`. For generated sheets these are the
    /// exact draws; otherwise they are recomputed from the lattice.
    pub fn increments(&self) -> std::borrow::Cow<'_, [f64]> {
        match &self.drawn {
            Some(d) => std::borrow::Cow::Borrowed(d),
            None => std::borrow::Cow::Owned(self.lattice.cell_increments()),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn grid(&self) -> Grid {
        self.lattice.grid()
    }

    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }

    pub fn into_lattice(self) -> Lattice {
        self.lattice
    }
}

impl AsRef<Lattice> for BrownianSheet {
    fn as_ref(&self) -> &Lattice {
        &self.lattice
    }
}

pub fn generate_sheet(grid: Grid, seed: SeedSpec) -> BrownianSheet {
    let side = grid.side();
    let m = grid.n();
    let mut values = vec![0.0; side * side];
    let mut drawn = vec![0.0; m * m];
    let mut stream = SheetStream::new(grid, &seed);
    for k in 1..=m {
        let incs = &mut drawn[(k - 1) * m..k * m];
        let row = stream.advance(|l, _, dw| incs[l - 1] = dw);
        values[k * side..(k + 1) * side].copy_from_slice(row);
    }
    let lattice = Lattice::from_values(grid, values).expect("lattice size matches grid");
    BrownianSheet {
        lattice,
        seed: Some(seed),
        drawn: Some(drawn),
    }
}

/// Restriction of a sheet to `G_n`; `n` must divide the sheet resolution.
pub fn coarsen(sheet: &BrownianSheet, n: usize) -> Result<BrownianSheet> {
    if n == sheet.grid().n() {
        return Ok(sheet.clone());
    }
    Ok(BrownianSheet::from_lattice(sheet.lattice.restrict(n)?, sheet.seed))
}

/// All cell increments `Δ_{i,j}W`, row-major `n×n`.
pub fn cell_increments(sheet: &BrownianSheet) -> Vec<f64> {
    sheet.increments().into_owned()
}

const DUMP_MAGIC: &[u8; 8] = b"BSHEETv1";
const NO_ROLE: u32 = u32::MAX;
/// Header: magic, m, master seed, stream index, role tag, reserved word.
pub const DUMP_HEADER_LEN: usize = 8 + 8 + 8 + 8 + 4 + 4;

/// Writes the binary lattice dump: a 40-byte little-endian header followed by
/// the `(m+1)²` values as row-major little-endian `f64`.
pub fn write_dump<W: Write>(sheet: &BrownianSheet, mut out: W) -> Result<()> {
    let (master, stream, role) = match sheet.seed {
        Some(s) => (s.master_seed, s.stream_index, s.sheet_role.tag()),
        None => (0, 0, NO_ROLE),
    };
    let mut header = Vec::with_capacity(DUMP_HEADER_LEN);
    header.extend_from_slice(DUMP_MAGIC);
    header.extend_from_slice(&(sheet.grid().n() as u64).to_le_bytes());
    header.extend_from_slice(&master.to_le_bytes());
    header.extend_from_slice(&stream.to_le_bytes());
    header.extend_from_slice(&role.to_le_bytes());
    header.extend_from_slice(&0u32.to_le_bytes());
    out.write_all(&header)?;
    let mut payload = Vec::with_capacity(sheet.lattice.values().len() * 8);
    for v in sheet.lattice.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

pub fn read_dump<R: Read>(mut input: R) -> Result<BrownianSheet> {
    let mut header = [0u8; DUMP_HEADER_LEN];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Format(format!("short header: {e}")))?;
    if &header[..8] != DUMP_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let word = |at: usize| u64::from_le_bytes(header[at..at + 8].try_into().unwrap());
    let m = usize::try_from(word(8)).map_err(|_| Error::Format("resolution overflow".into()))?;
    let grid = Grid::new(m).map_err(|_| Error::Format("zero resolution".into()))?;
    let master = word(16);
    let stream = word(24);
    let role = u32::from_le_bytes(header[32..36].try_into().unwrap());
    let seed = if role == NO_ROLE {
        None
    } else {
        let role = SheetRole::from_tag(role).ok_or_else(|| Error::Format(format!("unknown role {role}")))?;
        Some(SeedSpec::new(master, stream, role))
    };
    let count = grid
        .side()
        .checked_mul(grid.side())
        .ok_or_else(|| Error::Format("resolution overflow".into()))?;
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    if payload.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(BrownianSheet::from_lattice(Lattice::from_values(grid, values)?, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(k: u64) -> SeedSpec {
        SeedSpec::new(7, k, SheetRole::DrivingW)
    }

    #[test]
    fn single_cell_sheet() {
        let s = generate_sheet(Grid::new(1).unwrap(), seed(0));
        let l = s.lattice();
        assert_eq!(l.at(0, 0), 0.0);
        assert_eq!(l.at(0, 1), 0.0);
        assert_eq!(l.at(1, 0), 0.0);
        assert!(l.at(1, 1).is_finite() && l.at(1, 1) != 0.0);
        assert_eq!(cell_increments(&s), vec![l.at(1, 1)]);
    }

    #[test]
    fn axes_vanish_and_increments_reconstruct() {
        let g = Grid::new(17).unwrap();
        let s = generate_sheet(g, seed(3));
        assert!(s.lattice().vanishes_on_axes());
        let rebuilt = Lattice::from_increments(g, &cell_increments(&s)).unwrap();
        assert_eq!(rebuilt.values(), s.lattice().values());
        for (a, b) in s.lattice().cell_increments().iter().zip(cell_increments(&s)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reproducible_and_role_separated() {
        let g = Grid::new(8).unwrap();
        let a = generate_sheet(g, seed(5));
        let b = generate_sheet(g, seed(5));
        assert_eq!(a.lattice().values(), b.lattice().values());
        let c = generate_sheet(g, SeedSpec::new(7, 5, SheetRole::IndependentB));
        assert_ne!(a.lattice().values(), c.lattice().values());
        let d = generate_sheet(g, seed(6));
        assert_ne!(a.lattice().values(), d.lattice().values());
    }

    #[test]
    fn stream_matches_generated_sheet() {
        let g = Grid::new(6).unwrap();
        let sheet = generate_sheet(g, seed(1));
        let mut stream = SheetStream::new(g, &seed(1));
        let mut k = 0;
        while !stream.is_done() {
            k += 1;
            let mut corners = Vec::new();
            let row = stream.advance(|l, w, _| corners.push((l, w))).to_vec();
            assert_eq!(row, sheet.lattice().row(k));
            for (l, w) in corners {
                assert_eq!(w, sheet.lattice().at(k - 1, l - 1));
            }
        }
    }

    #[test]
    fn coarsen_identity_and_even_sublattice() {
        let s = generate_sheet(Grid::new(4).unwrap(), seed(2));
        assert_eq!(coarsen(&s, 4).unwrap(), s);
        let c = coarsen(&s, 2).unwrap();
        for i in 0..=2 {
            for j in 0..=2 {
                assert_eq!(c.lattice().at(i, j), s.lattice().at(2 * i, 2 * j));
            }
        }
        assert!(coarsen(&s, 3).is_err());
    }

    #[test]
    fn zero_sheet_has_zero_increments() {
        let s = BrownianSheet::from_lattice(Lattice::zeros(Grid::new(5).unwrap()), None);
        assert!(cell_increments(&s).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dump_round_trip() {
        let s = generate_sheet(Grid::new(3).unwrap(), SeedSpec::new(11, 4, SheetRole::IndependentB));
        let mut bytes = Vec::new();
        write_dump(&s, &mut bytes).unwrap();
        assert_eq!(bytes.len(), DUMP_HEADER_LEN + 16 * 8);
        let back = read_dump(bytes.as_slice()).unwrap();
        assert_eq!(back, s);

        let unseeded = BrownianSheet::from_lattice(Lattice::zeros(Grid::new(1).unwrap()), None);
        let mut bytes = Vec::new();
        write_dump(&unseeded, &mut bytes).unwrap();
        assert_eq!(read_dump(bytes.as_slice()).unwrap(), unseeded);
    }

    #[test]
    fn dump_rejects_garbage() {
        assert!(read_dump(&b"nope"[..]).is_err());
        let s = generate_sheet(Grid::new(2).unwrap(), seed(0));
        let mut bytes = Vec::new();
        write_dump(&s, &mut bytes).unwrap();
        bytes.pop();
        assert!(matches!(read_dump(bytes.as_slice()), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(read_dump(bytes.as_slice()), Err(Error::Format(_))));
    }
}
