//! Binary dataset files.
//!
//! A fixed 64-byte header is followed by an extension block (OFDM framing,
//! SIR grid, SNR table) and then one record per example: the interleaved
//! `f32` I/Q samples and a fixed-width provenance record. All little-endian.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Dataset, DatasetKind, DatasetSpec, PacketSpec, Source, Split, N_CHANNELS};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::signal::ofdm::OfdmConfig;
use crate::signal::ModScheme;

pub const MAGIC: &[u8; 8] = b"OODDSET1";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 64;
pub const PROVENANCE_BYTES: usize = 72;

fn header(ds: &Dataset) -> Vec<u8> {
    let s = &ds.spec;
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(ds.kind.source() as u8);
    w.u8(ds.kind.channel() as u8);
    w.u8(matches!(s.split, Split::Test) as u8);
    w.u8(0);
    for d in s.dims() {
        w.u32(d as u32);
    }
    w.u32(s.block_size() as u32);
    w.u32(N_CHANNELS as u32);
    w.u64(s.sir_hash());
    w.u64(s.base_seed);
    w.u64(ds.len() as u64);
    debug_assert_eq!(w.buf.len(), HEADER_BYTES);
    for x in [s.ofdm.k, s.ofdm.cp_len, s.ofdm.n_symbols, s.dsss_samples_per_chip] {
        w.u32(x as u32);
    }
    s.sir_db.iter().chain(&s.snr_db).for_each(|&x| w.f64(x));
    w.buf
}

fn provenance(w: &mut Writer, m: &PacketSpec) {
    let start = w.buf.len();
    w.u8(m.modulation.index() as u8);
    w.u8(m.source as u8);
    w.u8(m.channel as u8);
    w.u8(m.sir_bin);
    w.bytes(&m.mti_q.to_le_bytes());
    w.bytes(&[0, 0]);
    for x in [m.sir_db, m.snr_db, m.theta, m.cfo, m.interferer_power] {
        w.f64(x);
    }
    for x in [m.victim_seed, m.noise_seed, m.interferer_seed] {
        w.u64(x);
    }
    debug_assert_eq!(w.buf.len() - start, PROVENANCE_BYTES);
}

pub fn write(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let per = ds.example_len();
    if ds.iq.len() != per * ds.len() {
        return Err(Error::data(format!("{} samples for {} examples", ds.iq.len(), ds.len())));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&header(ds))?;
    let mut w = Writer::default();
    for (i, m) in ds.meta.iter().enumerate() {
        w.buf.clear();
        ds.example(i).iter().for_each(|&x| w.f32(x));
        provenance(&mut w, m);
        out.write_all(&w.buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Dataset> {
    from_bytes(&fs::read(path)?)
}

pub(crate) fn from_bytes(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(buf);
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::format(0, "not a dataset file (bad magic)"));
    }
    let at = r.offset();
    let v = r.u32("version")?;
    if v != VERSION {
        return Err(Error::format(at, format!("unsupported dataset version {v}")));
    }
    let at = r.offset();
    let source = Source::from_code(r.u8("kind")?).ok_or_else(|| Error::format(at, "unknown interferer source"))?;
    let channel = r.u8("channel flag")? != 0;
    let kind = DatasetKind::from_parts(source, channel).map_err(|e| Error::format(at, e.to_string()))?;
    let split = if r.u8("split")? != 0 { Split::Test } else { Split::Train };
    r.u8("reserved")?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.u32("dimension")? as usize;
    }
    let block = r.u32("block size")? as usize;
    let at = r.offset();
    if r.u32("channel count")? as usize != N_CHANNELS {
        return Err(Error::format(at, "only 2-channel I/Q data is supported"));
    }
    let sir_hash = r.u64("sir hash")?;
    let base_seed = r.u64("base seed")?;
    let at = r.offset();
    let n = r.usize("example count")?;
    if n != dims.iter().product::<usize>() {
        return Err(Error::format(at, format!("example count {n} disagrees with dims {dims:?}")));
    }
    let mut ext = [0usize; 4];
    for x in &mut ext {
        *x = r.u32("framing")? as usize;
    }
    let ofdm = OfdmConfig { k: ext[0], cp_len: ext[1], n_symbols: ext[2] };
    let sir_db = (0..dims[1]).map(|_| r.f64("sir grid")).collect::<Result<Vec<_>>>()?;
    let mut snr_db = [0.0; 4];
    for x in &mut snr_db {
        *x = r.f64("snr table")?;
    }
    let spec = DatasetSpec {
        n_mod: dims[0],
        n_sir_bins: dims[1],
        n_batches: dims[2],
        batch_size: dims[3],
        ofdm,
        sir_db,
        snr_db,
        base_seed,
        split,
        dsss_samples_per_chip: ext[3],
    };
    if spec.block_size() != block {
        return Err(Error::format(at, format!("block size {block} disagrees with framing {ofdm:?}")));
    }
    if spec.sir_hash() != sir_hash {
        return Err(Error::format(40, "SIR grid does not match its header fingerprint"));
    }
    let per = block * N_CHANNELS;
    let mut iq = Vec::with_capacity(n * per);
    let mut meta = Vec::with_capacity(n);
    for i in 0..n {
        let at = r.offset();
        if r.remaining() < per * 4 + PROVENANCE_BYTES {
            return Err(Error::format(at, format!("file truncated inside example {i} of {n}")));
        }
        let raw = r.take(per * 4, "samples")?;
        iq.extend(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())));
        let at = r.offset();
        let modulation = ModScheme::from_index(r.u8("modulation")? as usize).map_err(|e| Error::format(at, e.to_string()))?;
        let src = Source::from_code(r.u8("source")?).ok_or_else(|| Error::format(at, "unknown source"))?;
        let ch = r.u8("channel")? != 0;
        let sir_bin = r.u8("sir bin")?;
        let q = r.take(2, "mti q")?;
        let mti_q = u16::from_le_bytes([q[0], q[1]]);
        r.take(2, "padding")?;
        meta.push(PacketSpec {
            modulation,
            source: src,
            channel: ch,
            sir_bin,
            sir_db: r.f64("sir")?,
            snr_db: r.f64("snr")?,
            theta: r.f64("theta")?,
            cfo: r.f64("cfo")?,
            interferer_power: r.f64("interferer power")?,
            victim_seed: r.u64("victim seed")?,
            noise_seed: r.u64("noise seed")?,
            interferer_seed: r.u64("interferer seed")?,
            mti_q,
        });
    }
    if r.remaining() != 0 {
        return Err(r.err(format!("{} trailing bytes", r.remaining())));
    }
    Ok(Dataset { spec, kind, iq, meta })
}
