//! Small floating-point helpers shared by the probability code.

/// Compensated (Neumaier) summation.
///
/// Node masses are sums of many leaf masses; plain left-to-right
/// accumulation drifts by a few ulps, which shows up as `0.48500000000000004`
/// where the decimal inputs add to `0.485`.
pub fn compensated_sum<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Running compensated sum, for prefix masses.
#[derive(Debug, Default, Clone, Copy)]
pub struct Accumulator {
    sum: f64,
    carry: f64,
}

impl Accumulator {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_masses_add_cleanly() {
        assert_eq!(compensated_sum([0.15, 0.13, 0.08, 0.125]), 0.485);
        assert_eq!(
            compensated_sum([0.15, 0.13, 0.08, 0.125, 0.14, 0.125, 0.125, 0.125]),
            1.0
        );
    }

    #[test]
    fn accumulator_matches_batch_sum() {
        let xs = [0.1, 0.2, 0.3, 1e-17, 0.4];
        let mut acc = Accumulator::default();
        xs.iter().for_each(|&x| acc.add(x));
        assert_eq!(acc.value(), compensated_sum(xs));
    }
}
