//! Text and binary file formats: `mmspace v1` spaces, kernel CSV triples and
//! `HKT1` heat tensors.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use harnacklab_core::heat::{HeatTensor, TensorData};
use harnacklab_core::{JumpKernel, MetricMeasureSpace};

use crate::{CliError, Result};

fn bad(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("mmspace line {line}: {msg}"))
}

/// Measure and row-major distance matrix of an `mmspace v1` file.
pub fn parse_mmspace(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (ln, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let n: usize = header
        .strip_prefix("mmspace v1 n=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad(ln, format!("expected `mmspace v1 n=<int>`, found `{header}`")))?;
    let num = |ln: usize, s: &str| s.parse::<f64>().map_err(|e| bad(ln, format!("`{s}`: {e}")));
    let mut measure = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = lines.next().ok_or_else(|| CliError::Config(format!("mmspace: expected {n} `mu` lines")))?;
        let v = l.strip_prefix("mu ").ok_or_else(|| bad(ln, format!("expected `mu <float>`, found `{l}`")))?;
        measure.push(num(ln, v.trim())?);
    }
    let mut seen: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut dist = vec![0.0; n * n];
    for (ln, l) in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        let [tag, i, j, v] = f[..] else { return Err(bad(ln, format!("expected `d <i> <j> <float>`, found `{l}`"))) };
        if tag != "d" {
            return Err(bad(ln, format!("unexpected record `{tag}`")));
        }
        let idx = |s: &str| {
            s.parse::<usize>().ok().filter(|&k| k < n).ok_or_else(|| bad(ln, format!("index `{s}` not in 0..{n}")))
        };
        let (i, j, v) = (idx(i)?, idx(j)?, num(ln, v)?);
        if i == j {
            return Err(bad(ln, "diagonal entries are implicit"));
        }
        let key = (i.min(j), i.max(j));
        if let Some(&prev) = seen.get(&key) {
            if prev != v && i > j {
                return Err(CliError::Core(harnacklab_core::Error::NonMetric(format!(
                    "d({},{}) = {prev} but d({i},{j}) = {v}",
                    key.0, key.1
                ))));
            }
            return Err(bad(ln, format!("duplicate pair ({}, {})", key.0, key.1)));
        }
        seen.insert(key, v);
        dist[i * n + j] = v;
        dist[j * n + i] = v;
    }
    let expected = n * n.saturating_sub(1) / 2;
    if seen.len() != expected {
        let missing = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).find(|k| !seen.contains_key(k)).unwrap();
        return Err(CliError::Config(format!(
            "mmspace: {} of {expected} pairs given, first missing ({}, {})",
            seen.len(),
            missing.0,
            missing.1
        )));
    }
    Ok((measure, dist))
}

pub fn write_mmspace(space: &MetricMeasureSpace, out: &mut impl Write) -> std::io::Result<()> {
    let n = space.len();
    writeln!(out, "mmspace v1 n={n}")?;
    for x in 0..n {
        writeln!(out, "mu {:?}", space.mu(x))?;
    }
    for i in 0..n {
        for j in i + 1..n {
            writeln!(out, "d {i} {j} {:?}", space.d(i, j))?;
        }
    }
    Ok(())
}

/// Nonzero off-diagonal entries as `i,j,J` rows.
pub fn write_kernel_csv(kernel: &JumpKernel, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "J"]).map_err(csv_err)?;
    for i in 0..kernel.len() {
        for (j, &v) in kernel.row(i).iter().enumerate() {
            if i != j && v != 0.0 {
                w.serialize((i, j, v)).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_kernel_csv(input: impl Read, n: usize) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let mut j = vec![0.0; n * n];
    for rec in r.deserialize() {
        let (a, b, v): (usize, usize, f64) = rec.map_err(csv_err)?;
        if a >= n || b >= n {
            return Err(CliError::Runtime(format!("kernel entry ({a}, {b}) out of range")));
        }
        j[a * n + b] = v;
    }
    Ok(j)
}

pub(crate) fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv: {e}"))
}

pub const HKT1_MAGIC: &[u8; 4] = b"HKT1";

/// Dense tensor as `(n, times, values)` with values `[t][x][y]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Hkt1 {
    pub n: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Hkt1 {
    /// `None` for translation tensors, which are cheaper to rebuild than to store.
    pub fn from_tensor(t: &HeatTensor) -> Option<Self> {
        match &t.data {
            TensorData::Dense(rows) => Some(Self { n: t.len(), times: t.times.clone(), values: rows.concat() }),
            TensorData::Translation { .. } => None,
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n * self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(HKT1_MAGIC)?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.times.len() as u64).to_le_bytes())?;
        for v in self.times.iter().chain(&self.values) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(input: &mut impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf)?;
        let corrupt = |m: &str| CliError::Runtime(format!("HKT1: {m}"));
        if buf.len() < 20 || &buf[..4] != HKT1_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let word = |k: usize| u64::from_le_bytes(buf[k..k + 8].try_into().unwrap()) as usize;
        let (n, m) = (word(4), word(12));
        let count = n.checked_mul(n).and_then(|v| v.checked_mul(m)).and_then(|v| v.checked_add(m));
        if count.and_then(|c| c.checked_mul(8)) != Some(buf.len() - 20) {
            return Err(corrupt("length does not match header"));
        }
        let mut floats = buf[20..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let times = floats.by_ref().take(m).collect();
        Ok(Self { n, times, values: floats.collect() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use harnacklab_core::space::Metric;
    use proptest::prelude::*;

    fn sample(n: usize) -> String {
        let mut s = format!("mmspace v1 n={n}\n");
        for _ in 0..n {
            s.push_str("mu 1.0\n");
        }
        for i in 0..n {
            for j in i + 1..n {
                s.push_str(&format!("d {i} {j} {}\n", (j - i) as f64));
            }
        }
        s
    }

    #[test]
    fn mmspace_round_trip() {
        let (mu, d) = parse_mmspace(&sample(5)).unwrap();
        let s = MetricMeasureSpace::custom(mu, d).unwrap();
        let mut out = Vec::new();
        write_mmspace(&s, &mut out).unwrap();
        let (mu2, d2) = parse_mmspace(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(mu2, s.measure());
        assert!((0..5).all(|i| (0..5).all(|j| d2[i * 5 + j] == s.d(i, j))));
    }

    #[test]
    fn mmspace_rejects_duplicates_and_gaps() {
        let dup = format!("{}d 1 0 1.0\n", sample(4));
        assert!(matches!(parse_mmspace(&dup), Err(CliError::Config(m)) if m.contains("duplicate")));
        let gap = sample(4).replace("d 1 3 2\n", "");
        assert!(matches!(parse_mmspace(&gap), Err(CliError::Config(m)) if m.contains("missing (1, 3)")));
        let asym = format!("{}d 2 0 3.5\n", sample(4));
        assert!(matches!(parse_mmspace(&asym), Err(CliError::Core(harnacklab_core::Error::NonMetric(_)))));
        assert!(parse_mmspace("mmspace v2 n=3\n").is_err());
    }

    #[test]
    fn kernel_csv_round_trip() {
        let s = MetricMeasureSpace::torus(1, 8, Metric::L2).unwrap();
        let phi = harnacklab_core::ScaleFunction::power(1.0);
        let k = harnacklab_core::kernel::make_kernel(&s, &phi, &harnacklab_core::KernelSpec::StableLike).unwrap();
        let mut out = Vec::new();
        write_kernel_csv(&k, &mut out).unwrap();
        let j = read_kernel_csv(out.as_slice(), 8).unwrap();
        for x in 0..8 {
            for y in 0..8 {
                if x != y {
                    assert_eq!(j[x * 8 + y], k.get(x, y));
                }
            }
        }
    }

    #[test]
    fn hkt1_round_trip_and_corruption() {
        let h = Hkt1 { n: 2, times: vec![0.5, 1.0], values: (0..8).map(f64::from).collect() };
        let mut out = Vec::new();
        h.write(&mut out).unwrap();
        assert_eq!(&out[..4], b"HKT1");
        assert_eq!(out.len(), 20 + 8 * 10);
        assert_eq!(Hkt1::read(&mut out.as_slice()).unwrap(), h);
        assert_eq!(h.rows()[1], vec![4.0, 5.0, 6.0, 7.0]);
        out.pop();
        assert!(Hkt1::read(&mut out.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn hkt1_round_trips(n in 1usize..5, m in 0usize..4, seed in any::<u64>()) {
            let mut x = seed;
            let mut next = || {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits(x >> 2)
            };
            let times = (0..m).map(|_| next()).collect();
            let values = (0..n * n * m).map(|_| next()).collect();
            let h = Hkt1 { n, times, values };
            let mut out = Vec::new();
            h.write(&mut out).unwrap();
            prop_assert_eq!(Hkt1::read(&mut out.as_slice()).unwrap(), h);
        }

        #[test]
        fn mmspace_parses_what_it_writes(n in 2usize..7, w in proptest::collection::vec(0.1f64..10.0, 7)) {
            let s = MetricMeasureSpace::custom(w[..n].to_vec(), (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 + (k / n + k % n) as f64 * 0.125 }).collect());
            prop_assume!(s.is_ok());
            let s = s.unwrap();
            let mut out = Vec::new();
            write_mmspace(&s, &mut out).unwrap();
            let (mu, d) = parse_mmspace(std::str::from_utf8(&out).unwrap()).unwrap();
            prop_assert_eq!(mu.as_slice(), s.measure());
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(d[i * n + j], s.d(i, j));
                }
            }
        }
    }
}
