//! Deterministic floating-point reductions.

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

const BLOCK: usize = 256;

/// Dot product over equally long slices: fixed-width lanes within blocks of
/// 256, compensated across blocks. The order of operations depends only on
/// the length, so the result is reproducible and symmetric in its arguments.
pub fn block_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut total = Neumaier::default();
    for (ca, cb) in a.chunks(BLOCK).zip(b.chunks(BLOCK)) {
        let mut lanes = [0.0f64; 8];
        let mut ia = ca.chunks_exact(8);
        let mut ib = cb.chunks_exact(8);
        for (xa, xb) in (&mut ia).zip(&mut ib) {
            for i in 0..8 {
                lanes[i] += xa[i] * xb[i];
            }
        }
        let mut tail = 0.0;
        for (x, y) in ia.remainder().iter().zip(ib.remainder()) {
            tail += x * y;
        }
        let block = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
            + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
            + tail;
        total.add(block);
    }
    total.total()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_mass() {
        let mut s = Neumaier::default();
        for v in [1e16, 1.0, -1e16] {
            s.add(v);
        }
        assert_eq!(s.total(), 1.0);
    }

    #[test]
    fn block_dot_matches_plain_sum_on_integers() {
        let a: Vec<f64> = (0..1000).map(|i| (i % 7) as f64).collect();
        let b: Vec<f64> = (0..1000).map(|i| (i % 5) as f64).collect();
        let plain: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(block_dot(&a, &b), plain);
        assert_eq!(block_dot(&a, &b), block_dot(&b, &a));
    }
}
