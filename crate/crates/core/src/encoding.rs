use crate::error::{Error, Result};

/// Largest frequency divisor of the resolution embedding; divisors are spread
/// geometrically over `[1, RESOLUTION_MAX_PERIOD]`.
pub const RESOLUTION_MAX_PERIOD: f64 = 10.0;

/// Sinusoidal embedding of a ground sample distance (m/pixel).
///
/// The log of `s` is embedded so the 64 to 1 m/pixel ladder is evenly
/// spread. Entries are interleaved `[sin(ln s / w0), cos(ln s / w0), sin(ln s / w1), ...]`
/// with `w_j = RESOLUTION_MAX_PERIOD^(j / (dim/2 - 1))`.
pub fn resolution_embedding(s: f64, dim: usize) -> Result<Vec<f64>> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("resolution must be positive, got {s}")));
    }
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Domain(format!("embedding width must be even and positive, got {dim}")));
    }
    let half = dim / 2;
    let ls = s.ln();
    let mut out = Vec::with_capacity(dim);
    for j in 0..half {
        let w = if half == 1 { 1.0 } else { RESOLUTION_MAX_PERIOD.powf(j as f64 / (half - 1) as f64) };
        out.push((ls / w).sin());
        out.push((ls / w).cos());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_resolution() {
        assert_eq!(resolution_embedding(1.0, 4).unwrap(), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn sixty_four_meters() {
        let e = resolution_embedding(64.0, 4).unwrap();
        let l = 64f64.ln();
        let want = [l.sin(), l.cos(), (l / 10.0).sin(), (l / 10.0).cos()];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ladder_scales_are_distinct() {
        let scales = [64.0, 16.0, 4.0, 1.0];
        for dim in [4, 8, 16, 32] {
            let embs: Vec<_> = scales.iter().map(|&s| resolution_embedding(s, dim).unwrap()).collect();
            for i in 0..4 {
                for j in i + 1..4 {
                    let linf = embs[i].iter().zip(&embs[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    assert!(linf > 1e-6, "dim {dim}: {} vs {}", scales[i], scales[j]);
                }
            }
        }
        let a = resolution_embedding(4.0, 4).unwrap();
        let b = resolution_embedding(16.0, 4).unwrap();
        let l2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(l2 > 0.0);
    }

    #[test]
    fn deterministic() {
        assert_eq!(resolution_embedding(3.7, 64).unwrap(), resolution_embedding(3.7, 64).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(resolution_embedding(0.0, 4).is_err());
        assert!(resolution_embedding(-1.0, 4).is_err());
        assert!(resolution_embedding(1.0, 3).is_err());
        assert!(resolution_embedding(1.0, 0).is_err());
    }
}
