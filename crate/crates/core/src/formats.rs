//! Binary signal (`FFAST01\0`) and spectrum (`FFASTSP0`) files.
//!
//! Signal: magic, u64 n, then n interleaved (re, im) f64 pairs.
//! Spectrum: magic, u64 n, u64 k, then k records of (u64 index, f64 re, f64 im).
//! Every field is little-endian.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral_model::{SparseSpectrum, TimeSignal};

pub const SIGNAL_MAGIC: &[u8; 8] = b"FFAST01\0";
pub const SPECTRUM_MAGIC: &[u8; 8] = b"FFASTSP0";
/// First line of every CSV this crate writes.
pub const CSV_VERSION_LINE: &str = "# ffast-csv v1";

/// CSV writer with the version comment already emitted.
pub fn csv_writer<W: Write>(mut w: W) -> Result<csv::Writer<W>> {
    writeln!(w, "{CSV_VERSION_LINE}")?;
    Ok(csv::Writer::from_writer(w))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn to_usize(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in memory")))
}

pub fn write_signal<W: Write>(w: &mut W, x: &TimeSignal) -> Result<()> {
    w.write_all(SIGNAL_MAGIC)?;
    w.write_all(&(x.n() as u64).to_le_bytes())?;
    for s in x.samples() {
        w.write_all(&s.re.to_le_bytes())?;
        w.write_all(&s.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_signal<R: Read>(r: &mut R) -> Result<TimeSignal> {
    expect_magic(r, SIGNAL_MAGIC)?;
    let n = to_usize(read_u64(r)?, "signal length")?;
    let mut samples = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        samples.push(Complex64::new(re, im));
    }
    TimeSignal::new(samples)
}

pub fn write_spectrum<W: Write>(w: &mut W, s: &SparseSpectrum) -> Result<()> {
    w.write_all(SPECTRUM_MAGIC)?;
    w.write_all(&(s.n() as u64).to_le_bytes())?;
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    for &(l, v) in s.entries() {
        w.write_all(&(l as u64).to_le_bytes())?;
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_spectrum<R: Read>(r: &mut R) -> Result<SparseSpectrum> {
    expect_magic(r, SPECTRUM_MAGIC)?;
    let n = to_usize(read_u64(r)?, "spectrum length")?;
    let k = to_usize(read_u64(r)?, "entry count")?;
    if k > n {
        return Err(Error::Format(format!("{k} entries for length {n}")));
    }
    let mut entries = Vec::with_capacity(k);
    for _ in 0..k {
        let l = to_usize(read_u64(r)?, "index")?;
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        entries.push((l, Complex64::new(re, im)));
    }
    SparseSpectrum::new(n, entries).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn signal_layout_is_bit_exact() {
        let x = TimeSignal::new(vec![Complex64::new(1.5, -2.0)]).unwrap();
        let mut buf = Vec::new();
        write_signal(&mut buf, &x).unwrap();
        let mut expected = b"FFAST01\0".to_vec();
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1.5f64.to_le_bytes());
        expected.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn spectrum_layout_is_bit_exact() {
        let s = SparseSpectrum::new(20, vec![(10, Complex64::new(0.25, 4.0))]).unwrap();
        let mut buf = Vec::new();
        write_spectrum(&mut buf, &s).unwrap();
        assert_eq!(&buf[..8], b"FFASTSP0");
        assert_eq!(buf.len(), 8 + 8 + 8 + 24);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 20);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[24..32].try_into().unwrap()), 10);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bad = b"FFAST02\0".to_vec();
        bad.extend_from_slice(&0u64.to_le_bytes());
        assert!(matches!(read_signal(&mut bad.as_slice()), Err(Error::Format(_))));

        let x = TimeSignal::zeros(4).unwrap();
        let mut buf = Vec::new();
        write_signal(&mut buf, &x).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_signal(&mut buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn spectrum_round_trip(
            n in 1usize..500,
            raw in proptest::collection::vec((0usize..500, -1e6f64..1e6, -1e6f64..1e6), 0..20),
        ) {
            let mut entries: Vec<_> = raw
                .into_iter()
                .map(|(l, re, im)| (l % n, Complex64::new(re, im)))
                .collect();
            entries.sort_by_key(|e| e.0);
            entries.dedup_by_key(|e| e.0);
            let s = SparseSpectrum::new(n, entries).unwrap();
            let mut buf = Vec::new();
            write_spectrum(&mut buf, &s).unwrap();
            prop_assert_eq!(read_spectrum(&mut buf.as_slice()).unwrap(), s);
        }

        #[test]
        fn signal_round_trip(samples in proptest::collection::vec((any::<f64>(), any::<f64>()), 1..64)) {
            let x = TimeSignal::new(samples.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap();
            let mut buf = Vec::new();
            write_signal(&mut buf, &x).unwrap();
            let back = read_signal(&mut buf.as_slice()).unwrap();
            for (a, b) in x.samples().iter().zip(back.samples()) {
                prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }
}
