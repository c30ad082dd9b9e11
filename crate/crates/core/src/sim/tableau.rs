//! CHP stabilizer tableau with bit-packed rows.

/// `2n` generator rows (destabilizers then stabilizers) plus one scratch row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tableau {
    n: usize,
    words: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    r: Vec<bool>,
}

impl Tableau {
    /// The all-zeros state |0...0>.
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        let rows = 2 * n + 1;
        let mut t = Tableau { n, words, x: vec![0; rows * words], z: vec![0; rows * words], r: vec![false; rows] };
        for q in 0..n {
            t.x[q * words + q / 64] |= 1 << (q % 64);
            t.z[(q + n) * words + q / 64] |= 1 << (q % 64);
        }
        t
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    #[inline]
    fn bit(v: &[u64], words: usize, row: usize, q: usize) -> bool {
        v[row * words + q / 64] >> (q % 64) & 1 == 1
    }

    #[inline]
    fn xb(&self, row: usize, q: usize) -> bool {
        Self::bit(&self.x, self.words, row, q)
    }

    #[inline]
    fn zb(&self, row: usize, q: usize) -> bool {
        Self::bit(&self.z, self.words, row, q)
    }

    pub fn h(&mut self, a: usize) {
        let (w, m) = (a / 64, 1u64 << (a % 64));
        for row in 0..2 * self.n {
            let i = row * self.words + w;
            let (x, z) = (self.x[i] & m, self.z[i] & m);
            self.r[row] ^= x != 0 && z != 0;
            self.x[i] = (self.x[i] & !m) | z;
            self.z[i] = (self.z[i] & !m) | x;
        }
    }

    pub fn s(&mut self, a: usize) {
        let (w, m) = (a / 64, 1u64 << (a % 64));
        for row in 0..2 * self.n {
            let i = row * self.words + w;
            let (x, z) = (self.x[i] & m, self.z[i] & m);
            self.r[row] ^= x != 0 && z != 0;
            self.z[i] ^= x;
        }
    }

    pub fn sdg(&mut self, a: usize) {
        let (w, m) = (a / 64, 1u64 << (a % 64));
        for row in 0..2 * self.n {
            let i = row * self.words + w;
            let (x, z) = (self.x[i] & m, self.z[i] & m);
            self.r[row] ^= x != 0 && z == 0;
            self.z[i] ^= x;
        }
    }

    pub fn x(&mut self, a: usize) {
        for row in 0..2 * self.n {
            self.r[row] ^= self.zb(row, a);
        }
    }

    pub fn z(&mut self, a: usize) {
        for row in 0..2 * self.n {
            self.r[row] ^= self.xb(row, a);
        }
    }

    pub fn y(&mut self, a: usize) {
        for row in 0..2 * self.n {
            self.r[row] ^= self.xb(row, a) ^ self.zb(row, a);
        }
    }

    pub fn cx(&mut self, c: usize, t: usize) {
        let (wc, mc) = (c / 64, c % 64);
        let (wt, mt) = (t / 64, t % 64);
        for row in 0..2 * self.n {
            let base = row * self.words;
            let xc = self.x[base + wc] >> mc & 1;
            let zc = self.z[base + wc] >> mc & 1;
            let xt = self.x[base + wt] >> mt & 1;
            let zt = self.z[base + wt] >> mt & 1;
            self.r[row] ^= xc & zt & (xt ^ zc ^ 1) == 1;
            self.x[base + wt] ^= xc << mt;
            self.z[base + wc] ^= zt << mc;
        }
    }

    /// Left-multiplies row `h` by row `i`, tracking the sign.
    fn rowsum(&mut self, h: usize, i: usize) {
        let (bh, bi) = (h * self.words, i * self.words);
        let (mut plus, mut minus) = (0u32, 0u32);
        for w in 0..self.words {
            let (x1, z1) = (self.x[bi + w], self.z[bi + w]);
            let (x2, z2) = (self.x[bh + w], self.z[bh + w]);
            plus += ((x1 & z1 & z2 & !x2) | (x1 & !z1 & z2 & x2) | (!x1 & z1 & x2 & !z2)).count_ones();
            minus += ((x1 & z1 & x2 & !z2) | (x1 & !z1 & z2 & !x2) | (!x1 & z1 & x2 & z2)).count_ones();
            self.x[bh + w] = x2 ^ x1;
            self.z[bh + w] = z2 ^ z1;
        }
        let phase = 2 * self.r[h] as i64 + 2 * self.r[i] as i64 + plus as i64 - minus as i64;
        self.r[h] = phase.rem_euclid(4) == 2;
    }

    fn copy_row(&mut self, dst: usize, src: usize) {
        let w = self.words;
        self.x.copy_within(src * w..(src + 1) * w, dst * w);
        self.z.copy_within(src * w..(src + 1) * w, dst * w);
        self.r[dst] = self.r[src];
    }

    fn clear_row(&mut self, row: usize) {
        let w = self.words;
        self.x[row * w..(row + 1) * w].fill(0);
        self.z[row * w..(row + 1) * w].fill(0);
        self.r[row] = false;
    }

    /// Z-basis measurement of qubit `a`; `coin` is consulted only when the
    /// outcome is random. Returns `(outcome, was_random)`.
    pub fn measure(&mut self, a: usize, coin: impl FnOnce() -> bool) -> (bool, bool) {
        let n = self.n;
        if let Some(p) = (n..2 * n).find(|&i| self.xb(i, a)) {
            for i in 0..2 * n {
                if i != p && self.xb(i, a) {
                    self.rowsum(i, p);
                }
            }
            self.copy_row(p - n, p);
            self.clear_row(p);
            let outcome = coin();
            self.z[p * self.words + a / 64] |= 1 << (a % 64);
            self.r[p] = outcome;
            (outcome, true)
        } else {
            let scratch = 2 * n;
            self.clear_row(scratch);
            for i in 0..n {
                if self.xb(i, a) {
                    self.rowsum(scratch, i + n);
                }
            }
            (self.r[scratch], false)
        }
    }

    /// Measures and flips back to |0>.
    pub fn reset(&mut self, a: usize, coin: impl FnOnce() -> bool) {
        if self.measure(a, coin).0 {
            self.x(a);
        }
    }

    fn commutes(&self, i: usize, j: usize) -> bool {
        let (bi, bj) = (i * self.words, j * self.words);
        let mut parity = 0u32;
        for w in 0..self.words {
            parity += (self.x[bi + w] & self.z[bj + w]).count_ones();
            parity += (self.z[bi + w] & self.x[bj + w]).count_ones();
        }
        parity % 2 == 0
    }

    /// Checks the symplectic structure: destabilizer `i` anticommutes with
    /// stabilizer `i` and every other pair of generators commutes.
    pub fn is_valid(&self) -> bool {
        let n = self.n;
        for i in 0..2 * n {
            for j in i + 1..2 * n {
                let should_anticommute = j == i + n;
                if self.commutes(i, j) == should_anticommute {
                    return false;
                }
            }
        }
        true
    }
}
