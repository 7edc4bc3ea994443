//! Log-domain numeric helpers shared across kernels.

use statrs::function::gamma::ln_gamma;
use std::sync::OnceLock;

const FACT_CACHE: usize = 1024;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0.0; FACT_CACHE];
        for n in 2..FACT_CACHE {
            t[n] = t[n - 1] + (n as f64).ln();
        }
        t
    })
}

pub fn ln_factorial(n: u64) -> f64 {
    let table = ln_factorial_table();
    if (n as usize) < table.len() {
        table[n as usize]
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// ln of the rising factorial a(a+1)...(a+b-1), requiring a > 0.
pub fn ln_rising(a: f64, b: u64) -> f64 {
    debug_assert!(a > 0.0);
    if b == 0 {
        0.0
    } else if b <= 20 {
        let mut acc = 0.0;
        for i in 0..b {
            acc += (a + i as f64).ln();
        }
        acc
    } else {
        ln_gamma(a + b as f64) - ln_gamma(a)
    }
}

/// Streaming log-sum-exp accumulator for strictly positive terms given in
/// log form.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    pub fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, ln_term: f64) {
        if ln_term == f64::NEG_INFINITY {
            return;
        }
        if ln_term <= self.max {
            self.sum += (ln_term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - ln_term).exp() + 1.0;
            self.max = ln_term;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let mut acc = LogSum::new();
    for &t in terms {
        acc.add(t);
    }
    acc.value()
}
