use serde::{Deserialize, Serialize};

/// Axis-aligned chart box. Axes may carry a period, in which case
/// displacements along that axis are reduced to the nearest image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default)]
    pub periods: Vec<Option<f64>>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let n = lo.len();
        assert_eq!(n, hi.len());
        BoxDomain {
            lo,
            hi,
            periods: vec![None; n],
        }
    }

    pub fn cube(n: usize, half_width: f64) -> Self {
        BoxDomain::new(vec![-half_width; n], vec![half_width; n])
    }

    pub fn with_period(mut self, axis: usize, period: f64) -> Self {
        if self.periods.len() < self.lo.len() {
            self.periods.resize(self.lo.len(), None);
        }
        self.periods[axis] = Some(period);
        self
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| v.is_finite() && *v >= *l && *v <= *h)
    }

    pub fn period(&self, axis: usize) -> Option<f64> {
        self.periods.get(axis).copied().flatten()
    }

    /// `b - a` with periodic axes reduced to the representative of least modulus.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| {
                let d = y - x;
                match self.period(k) {
                    Some(p) => d - p * (d / p).round(),
                    None => d,
                }
            })
            .collect()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.displacement(a, b)
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }

    /// Uniform random point in the box, shrunk by `margin` on every side.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R, margin: f64) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| {
                let (a, b) = (l + margin * (h - l), h - margin * (h - l));
                rng.gen_range(a..=b)
            })
            .collect()
    }
}
