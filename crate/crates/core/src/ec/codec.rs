use serde::{Deserialize, Serialize};

use super::{gf256, Code, EcError};

/// Code parameters: `k` data chunks and `m` parity chunks per submessage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcConfig {
    pub k: usize,
    pub m: usize,
    pub code: Code,
}

impl EcConfig {
    pub fn new(k: usize, m: usize, code: Code) -> Result<Self, EcError> {
        let cfg = EcConfig { k, m, code };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EcError> {
        if self.k == 0 || self.m == 0 {
            return Err(EcError::BadParams("k and m must be at least 1".into()));
        }
        match self.code {
            Code::Xor if self.k % self.m != 0 => Err(EcError::BadParams(format!(
                "XOR requires m to divide k (k={}, m={})",
                self.k, self.m
            ))),
            Code::Mds if self.k + self.m > 256 => Err(EcError::BadParams(format!(
                "MDS over GF(256) supports k+m <= 256, got {}",
                self.k + self.m
            ))),
            _ => Ok(()),
        }
    }

    /// Parity ratio `R = k / m`.
    pub fn ratio(&self) -> f64 {
        self.k as f64 / self.m as f64
    }

    pub fn blocks(&self) -> usize {
        self.k + self.m
    }

    /// XOR group a block belongs to; data `j` maps to `j mod m`, parity `i`
    /// (block index `k + i`) to `i`.
    fn group(&self, block: usize) -> usize {
        if block < self.k {
            block % self.m
        } else {
            block - self.k
        }
    }

    /// Cauchy coefficient for parity row `i`, data column `j`.
    fn cauchy(&self, i: usize, j: usize) -> u8 {
        gf256::inv(i as u8 ^ (self.m + j) as u8)
    }
}

/// Whether a submessage is recoverable given which of its `k + m` blocks
/// arrived.
pub fn decodable(cfg: &EcConfig, present: &[bool]) -> bool {
    debug_assert_eq!(present.len(), cfg.blocks());
    match cfg.code {
        Code::Mds => present.iter().filter(|p| !**p).count() <= cfg.m,
        Code::Xor => {
            let mut missing = vec![0u8; cfg.m];
            for (b, _) in present.iter().enumerate().filter(|(_, p)| !**p) {
                let g = cfg.group(b);
                missing[g] += 1;
                if missing[g] > 1 {
                    return false;
                }
            }
            true
        }
    }
}

fn check_lengths<B: AsRef<[u8]>>(blocks: impl Iterator<Item = (usize, B)>) -> Result<usize, EcError> {
    let mut expected = None;
    for (index, b) in blocks {
        let len = b.as_ref().len();
        match expected {
            None => expected = Some(len),
            Some(e) if e != len => {
                return Err(EcError::BlockLength {
                    index,
                    len,
                    expected: e,
                })
            }
            _ => {}
        }
    }
    Ok(expected.unwrap_or(0))
}

/// Computes the `m` parity blocks of `k` equal-length data blocks.
pub fn ec_encode<B: AsRef<[u8]>>(data: &[B], cfg: &EcConfig) -> Result<Vec<Vec<u8>>, EcError> {
    cfg.validate()?;
    if data.len() != cfg.k {
        return Err(EcError::BadParams(format!(
            "expected {} data blocks, got {}",
            cfg.k,
            data.len()
        )));
    }
    let len = check_lengths(data.iter().enumerate())?;
    let mut parity = vec![vec![0u8; len]; cfg.m];
    for (j, d) in data.iter().enumerate() {
        for (i, p) in parity.iter_mut().enumerate() {
            let c = match cfg.code {
                Code::Xor if j % cfg.m == i => 1,
                Code::Xor => 0,
                Code::Mds => cfg.cauchy(i, j),
            };
            gf256::mul_acc(p, d.as_ref(), c);
        }
    }
    Ok(parity)
}

/// Reconstructs the `k` data blocks from the blocks that arrived. Block
/// indices `0..k` are data, `k..k+m` parity.
pub fn ec_decode<B: AsRef<[u8]>>(
    present: &[(usize, B)],
    cfg: &EcConfig,
) -> Result<Vec<Vec<u8>>, EcError> {
    cfg.validate()?;
    let mut slots: Vec<Option<&[u8]>> = vec![None; cfg.blocks()];
    for (idx, b) in present {
        if *idx >= cfg.blocks() || slots[*idx].is_some() {
            return Err(EcError::BadIndex(*idx));
        }
        slots[*idx] = Some(b.as_ref());
    }
    let len = check_lengths(present.iter().map(|(i, b)| (*i, b)))?;
    let mask: Vec<bool> = slots.iter().map(Option::is_some).collect();
    if !decodable(cfg, &mask) {
        return Err(EcError::Undecodable);
    }
    let missing: Vec<usize> = (0..cfg.k).filter(|&j| slots[j].is_none()).collect();
    let mut out: Vec<Vec<u8>> = slots[..cfg.k]
        .iter()
        .map(|s| s.map_or_else(|| vec![0; len], <[u8]>::to_vec))
        .collect();
    if missing.is_empty() {
        return Ok(out);
    }

    match cfg.code {
        Code::Xor => {
            for &j in &missing {
                let g = j % cfg.m;
                let rec = &mut out[j];
                rec.copy_from_slice(slots[cfg.k + g].expect("group parity present"));
                for other in (g..cfg.k).step_by(cfg.m).filter(|&o| o != j) {
                    gf256::mul_acc(rec, slots[other].expect("one erasure per group"), 1);
                }
            }
        }
        Code::Mds => {
            // Use the first k arrived blocks; their generator rows form an
            // invertible matrix because every Cauchy minor is nonsingular.
            let chosen: Vec<usize> = (0..cfg.blocks()).filter(|&b| mask[b]).take(cfg.k).collect();
            let rows: Vec<Vec<u8>> = chosen
                .iter()
                .map(|&b| {
                    (0..cfg.k)
                        .map(|j| {
                            if b < cfg.k {
                                u8::from(b == j)
                            } else {
                                cfg.cauchy(b - cfg.k, j)
                            }
                        })
                        .collect()
                })
                .collect();
            let inv = gf256::invert(rows).ok_or(EcError::Undecodable)?;
            for &j in &missing {
                let rec = &mut out[j];
                for (r, &b) in chosen.iter().enumerate() {
                    gf256::mul_acc(rec, slots[b].unwrap(), inv[j][r]);
                }
            }
        }
    }
    Ok(out)
}
