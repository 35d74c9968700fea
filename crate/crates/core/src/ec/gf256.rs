//! Arithmetic in GF(2^8) with the reduction polynomial x^8+x^4+x^3+x^2+1.

const POLY: u16 = 0x11D;

const fn build_tables() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        exp[i + 255] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    (exp, log)
}

const TABLES: ([u8; 512], [u8; 256]) = build_tables();
static EXP: [u8; 512] = TABLES.0;
static LOG: [u8; 256] = TABLES.1;

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
    }
}

pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(256)");
    EXP[255 - LOG[a as usize] as usize]
}

/// `dst ^= c * src`, byte-wise.
pub fn mul_acc(dst: &mut [u8], src: &[u8], c: u8) {
    match c {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        _ => {
            let mut row = [0u8; 256];
            let lc = LOG[c as usize] as usize;
            for (v, r) in row.iter_mut().enumerate().skip(1) {
                *r = EXP[LOG[v] as usize + lc];
            }
            dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= row[*s as usize]);
        }
    }
}

/// Inverts a square matrix by Gauss-Jordan elimination; `None` if singular.
pub fn invert(mut a: Vec<Vec<u8>>) -> Option<Vec<Vec<u8>>> {
    let n = a.len();
    let mut b: Vec<Vec<u8>> = (0..n)
        .map(|i| (0..n).map(|j| u8::from(i == j)).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| a[r][col] != 0)?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let s = inv(a[col][col]);
        for j in 0..n {
            a[col][j] = mul(a[col][j], s);
            b[col][j] = mul(b[col][j], s);
        }
        for r in 0..n {
            let f = a[r][col];
            if r != col && f != 0 {
                for j in 0..n {
                    a[r][j] ^= mul(f, a[col][j]);
                    b[r][j] ^= mul(f, b[col][j]);
                }
            }
        }
    }
    Some(b)
}
