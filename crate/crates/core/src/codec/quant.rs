//! Uniform scalar quantiser with step `2^((QP - 4) / 6)`.

#[inline]
pub fn step(qp: i32) -> f64 {
    2f64.powf(f64::from(qp - 4) / 6.0)
}

/// Round-half-away-from-zero of `coeff / step`.
pub fn quantize(coeffs: &[f64], qp: i32) -> Vec<i32> {
    let q = step(qp);
    coeffs.iter().map(|&c| (c / q).round() as i32).collect()
}

pub fn dequantize(levels: &[i32], qp: i32) -> Vec<f64> {
    let q = step(qp);
    levels.iter().map(|&l| f64::from(l) * q).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_examples() {
        assert_eq!(step(4), 1.0);
        assert_eq!(step(10), 2.0);
        assert_eq!(quantize(&[2.4, 2.5, -2.5, -0.49], 4), vec![2, 3, -3, 0]);
    }

    #[test]
    fn below_half_step_is_zero() {
        let q = step(28);
        assert_eq!(quantize(&[0.499 * q, -0.499 * q], 28), vec![0, 0]);
        assert_eq!(quantize(&[0.5 * q], 28), vec![1]);
    }

    #[test]
    fn requantising_is_idempotent() {
        let coeffs = [123.4, -77.7, 3.3, 0.1, 999.0];
        for qp in [0, 4, 22, 37, 51] {
            let l = quantize(&coeffs, qp);
            assert_eq!(quantize(&dequantize(&l, qp), qp), l);
        }
    }
}
