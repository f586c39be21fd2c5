//! Arithmetic in GF(2^8) modulo x^8 + x^4 + x^3 + x^2 + 1 (0x11D) and the
//! Reed-Solomon code used by QR symbols (generator roots α^0 .. α^(d-1)).

use std::sync::OnceLock;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        for i in 0..255 {
            exp[i] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= 0x11D;
            }
        }
        for i in 255..512 {
            exp[i] = exp[i - 255];
        }
        Tables { exp, log }
    })
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let t = tables();
    t.exp[t.log[a as usize] as usize + t.log[b as usize] as usize]
}

#[inline]
pub fn div(a: u8, b: u8) -> u8 {
    assert!(b != 0, "division by zero in GF(256)");
    if a == 0 {
        return 0;
    }
    let t = tables();
    t.exp[t.log[a as usize] as usize + 255 - t.log[b as usize] as usize]
}

/// α^e for any non-negative exponent.
#[inline]
pub fn exp(e: usize) -> u8 {
    tables().exp[e % 255]
}

#[inline]
pub fn inv(a: u8) -> u8 {
    div(1, a)
}

/// Generator polynomial of degree `degree`, highest power first, monic term
/// omitted.
pub fn generator(degree: usize) -> Vec<u8> {
    let mut g = vec![0u8; degree];
    g[degree - 1] = 1;
    let mut root = 1u8;
    for _ in 0..degree {
        for j in 0..degree {
            g[j] = mul(g[j], root);
            if j + 1 < degree {
                g[j] ^= g[j + 1];
            }
        }
        root = mul(root, 2);
    }
    g
}

/// Error correction codewords for one block of data codewords.
pub fn rs_encode(data: &[u8], ecc_len: usize) -> Vec<u8> {
    let g = generator(ecc_len);
    let mut rem = vec![0u8; ecc_len];
    for &b in data {
        let factor = b ^ rem[0];
        rem.rotate_left(1);
        rem[ecc_len - 1] = 0;
        for (r, &c) in rem.iter_mut().zip(&g) {
            *r ^= mul(c, factor);
        }
    }
    rem
}

/// Evaluate a polynomial stored lowest power first.
fn eval_low_first(poly: &[u8], x: u8) -> u8 {
    poly.iter().rev().fold(0u8, |acc, &c| mul(acc, x) ^ c)
}

/// Corrects a received block (data followed by `ecc_len` check codewords) in
/// place. Returns the number of corrected codewords, or `None` when the errors
/// exceed the code's capacity.
pub fn rs_correct(block: &mut [u8], ecc_len: usize) -> Option<usize> {
    let n = block.len();
    // block[i] is the coefficient of x^(n-1-i)
    let syndromes: Vec<u8> = (0..ecc_len)
        .map(|i| {
            let x = exp(i);
            block.iter().fold(0u8, |acc, &c| mul(acc, x) ^ c)
        })
        .collect();
    if syndromes.iter().all(|&s| s == 0) {
        return Some(0);
    }

    // Berlekamp-Massey; polynomials lowest power first.
    let mut lambda = vec![1u8];
    let mut prev = vec![1u8];
    let mut l = 0usize;
    let mut m = 1usize;
    let mut b = 1u8;
    for k in 0..ecc_len {
        let mut delta = syndromes[k];
        for i in 1..=l.min(lambda.len() - 1) {
            delta ^= mul(lambda[i], syndromes[k - i]);
        }
        if delta == 0 {
            m += 1;
            continue;
        }
        let coef = div(delta, b);
        let mut next = lambda.clone();
        if next.len() < prev.len() + m {
            next.resize(prev.len() + m, 0);
        }
        for (i, &p) in prev.iter().enumerate() {
            next[i + m] ^= mul(coef, p);
        }
        if 2 * l <= k {
            l = k + 1 - l;
            prev = std::mem::replace(&mut lambda, next);
            b = delta;
            m = 1;
        } else {
            lambda = next;
            m += 1;
        }
    }
    while lambda.len() > 1 && *lambda.last().unwrap() == 0 {
        lambda.pop();
    }
    let degree = lambda.len() - 1;
    if degree != l || 2 * l > ecc_len {
        return None;
    }

    // Chien search over valid positions: position p (power) has locator α^p.
    let mut positions = Vec::with_capacity(degree);
    for power in 0..n {
        let x_inv = inv(exp(power));
        if eval_low_first(&lambda, x_inv) == 0 {
            positions.push(power);
        }
    }
    if positions.len() != degree {
        return None;
    }

    // Ω(x) = S(x)Λ(x) mod x^ecc_len
    let mut omega = vec![0u8; ecc_len];
    for (i, &s) in syndromes.iter().enumerate() {
        for (j, &c) in lambda.iter().enumerate() {
            if i + j < ecc_len {
                omega[i + j] ^= mul(s, c);
            }
        }
    }
    // formal derivative: odd-power terms shift down
    let deriv: Vec<u8> = lambda
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| if i % 2 == 1 { c } else { 0 })
        .collect();

    for &power in &positions {
        let x = exp(power);
        let x_inv = inv(x);
        let denom = eval_low_first(&deriv, x_inv);
        if denom == 0 {
            return None;
        }
        // Forney with first consecutive root α^0: e = X · Ω(X^-1) / Λ'(X^-1)
        let magnitude = mul(x, div(eval_low_first(&omega, x_inv), denom));
        block[n - 1 - power] ^= magnitude;
    }

    let clean = (0..ecc_len).all(|i| {
        let x = exp(i);
        block.iter().fold(0u8, |acc, &c| mul(acc, x) ^ c) == 0
    });
    clean.then_some(positions.len())
}
