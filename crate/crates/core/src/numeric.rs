//! Small numerical helpers shared across modules.

/// Kahan-compensated sum.
pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Streaming `log(sum_i exp(a_i))` that merges associatively.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSumExp {
    pub(crate) fn push(&mut self, a: f64) {
        if a == f64::NEG_INFINITY {
            return;
        }
        if a <= self.max {
            self.scaled += (a - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - a).exp() + 1.0;
            self.max = a;
        }
    }

    pub(crate) fn merge(mut self, other: LogSumExp) -> LogSumExp {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        if other.max <= self.max {
            self.scaled += other.scaled * (other.max - self.max).exp();
            self
        } else {
            LogSumExp { max: other.max, scaled: other.scaled + self.scaled * (self.max - other.max).exp() }
        }
    }

    pub(crate) fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmax, max)`.
pub(crate) fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `x ln x` with the convention `0 ln 0 = 0`.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_cancellation() {
        let vals = std::iter::once(1.0).chain(std::iter::repeat_n(1e-16, 10_000));
        let s = kahan_sum(vals);
        assert!((s - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_merge_matches_direct() {
        let xs = [-1000.0, -999.0, 3.0, 2.5, -4.0];
        let direct = xs.iter().map(|x: &f64| (x - 3.0).exp()).sum::<f64>().ln() + 3.0;
        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        for (i, x) in xs.iter().enumerate() {
            if i % 2 == 0 {
                a.push(*x)
            } else {
                b.push(*x)
            }
        }
        assert!((a.merge(b).value() - direct).abs() < 1e-14);
        assert_eq!(LogSumExp::default().value(), f64::NEG_INFINITY);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3) + 2.0, -1.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((v - 2.0).abs() < 1e-14);
    }
}
