//! Spectrum files (CSV and a compact binary container) and digests.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use qsim_core::sweep::Spectrum;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `freq_hz`, then `re_`, `im_`, `mag_` per probe. Values use the shortest
/// round-trip representation, so rereading is exact.
pub fn spectrum_to_csv(s: &Spectrum) -> String {
    let mut out = String::from("freq_hz");
    for p in &s.probes {
        write!(out, ",re_{p},im_{p},mag_{p}").unwrap();
    }
    out.push('\n');
    for (k, f) in s.freqs.iter().enumerate() {
        write!(out, "{f:e}").unwrap();
        for col in &s.response {
            let v = col[k];
            write!(out, ",{:e},{:e},{:e}", v.re, v.im, v.norm()).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn spectrum_from_csv(text: &str) -> Result<Spectrum> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| anyhow!("empty spectrum file"))?.split(',').collect();
    if header.first() != Some(&"freq_hz") {
        bail!("spectrum CSV must start with a freq_hz column");
    }
    // Probe columns: (name, re index, im index).
    let mut probes = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if let Some(name) = h.strip_prefix("re_") {
            let im = header
                .iter()
                .position(|x| x.strip_prefix("im_") == Some(name))
                .ok_or_else(|| anyhow!("column re_{name} has no matching im_{name}"))?;
            probes.push((name.to_string(), i, im));
        }
    }
    if probes.is_empty() {
        bail!("no probes");
    }
    let mut freqs = Vec::new();
    let mut response = vec![Vec::new(); probes.len()];
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            bail!("row {}: expected {} columns, found {}", n + 2, header.len(), cells.len());
        }
        let num = |i: usize| -> Result<f64> {
            cells[i].trim().parse().with_context(|| format!("row {}: bad number `{}`", n + 2, cells[i]))
        };
        freqs.push(num(0)?);
        for (col, &(_, re, im)) in response.iter_mut().zip(&probes) {
            col.push(Complex64::new(num(re)?, num(im)?));
        }
    }
    Ok(Spectrum {
        freqs,
        probes: probes.into_iter().map(|(n, _, _)| n).collect(),
        response,
        netlist_digest: String::new(),
    })
}

const MAGIC: &[u8; 8] = b"QSIMSPC1";

/// Little-endian container: magic, probe count (u32), sample count (u64),
/// length-prefixed probe names, digest, frequencies, then `re, im` pairs
/// probe by probe.
pub fn spectrum_to_bin(s: &Spectrum) -> Vec<u8> {
    let n = s.freqs.len();
    let mut out = Vec::with_capacity(32 + 8 * n * (1 + 2 * s.probes.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(s.probes.len() as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for name in s.probes.iter().chain(std::iter::once(&s.netlist_digest)) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for f in &s.freqs {
        out.extend_from_slice(&f.to_le_bytes());
    }
    for col in &s.response {
        for v in col {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out
}

pub fn is_bin(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}

pub fn spectrum_from_bin(bytes: &[u8]) -> Result<Spectrum> {
    struct Reader<'a>(&'a [u8]);
    impl Reader<'_> {
        fn take(&mut self, n: usize) -> Result<&[u8]> {
            if self.0.len() < n {
                bail!("truncated spectrum container");
            }
            let (a, b) = self.0.split_at(n);
            self.0 = b;
            Ok(a)
        }
        fn u32(&mut self) -> Result<u32> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into()?))
        }
        fn u64(&mut self) -> Result<u64> {
            Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
        }
        fn f64(&mut self) -> Result<f64> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into()?))
        }
        fn string(&mut self) -> Result<String> {
            let n = self.u32()? as usize;
            Ok(String::from_utf8(self.take(n)?.to_vec())?)
        }
    }
    let mut r = Reader(bytes);
    if r.take(8)? != MAGIC {
        bail!("not a spectrum container");
    }
    let n_probes = r.u32()? as usize;
    let n = r.u64()? as usize;
    let probes = (0..n_probes).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let netlist_digest = r.string()?;
    let freqs = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let response = (0..n_probes)
        .map(|_| (0..n).map(|_| Ok(Complex64::new(r.f64()?, r.f64()?))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    if !r.0.is_empty() {
        bail!("trailing bytes in spectrum container");
    }
    Ok(Spectrum { freqs, probes, response, netlist_digest })
}

pub fn read_spectrum(bytes: &[u8]) -> Result<Spectrum> {
    if is_bin(bytes) {
        spectrum_from_bin(bytes)
    } else {
        spectrum_from_csv(std::str::from_utf8(bytes).context("spectrum file is neither UTF-8 CSV nor binary")?)
    }
}
