//! Finite distributions over the state of nature, plus the named families the
//! command-line front end and the acceptance runs refer to.

use crate::error::DuelError;
use crate::num::dyadic;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A finite state-of-nature space with one probability per outcome.
///
/// Probabilities are held as exact rationals. Floats entering through the
/// JSON form are converted via their exact binary expansion, so float inputs
/// round-trip bit-for-bit while families like `two-thirds` stay exact.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    outcomes: Vec<String>,
    probs: Vec<BigRational>,
}

impl DiscreteDistribution {
    /// Sum-to-one slack accepted for float-sourced probabilities.
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(outcomes: Vec<String>, probs: Vec<BigRational>) -> Result<Self, DuelError> {
        if outcomes.len() != probs.len() {
            return Err(DuelError::Dimension(format!(
                "{} outcomes but {} probabilities",
                outcomes.len(),
                probs.len()
            )));
        }
        if probs.is_empty() {
            return Err(DuelError::Domain("empty distribution".into()));
        }
        if let Some(p) = probs.iter().find(|p| p.is_negative()) {
            return Err(DuelError::Domain(format!("negative probability {p}")));
        }
        let sum: BigRational = probs.iter().sum();
        let err = (sum - BigRational::one()).abs();
        if err.to_f64().unwrap_or(f64::INFINITY) > Self::SUM_TOL {
            return Err(DuelError::Domain(format!(
                "probabilities sum to 1 {} {}",
                if err.is_positive() { "+" } else { "-" },
                err
            )));
        }
        Ok(Self { outcomes, probs })
    }

    /// Distribution over `n` anonymous outcomes labeled `w1..wn`.
    pub fn from_probs(probs: Vec<BigRational>) -> Result<Self, DuelError> {
        let outcomes = (1..=probs.len()).map(|i| format!("w{i}")).collect();
        Self::new(outcomes, probs)
    }

    pub fn from_f64s(probs: &[f64]) -> Result<Self, DuelError> {
        let probs = probs
            .iter()
            .map(|&p| BigRational::from_float(p).ok_or(DuelError::Domain(format!("bad prob {p}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_probs(probs)
    }

    pub fn uniform(n: usize) -> Self {
        let p = BigRational::new(BigInt::one(), BigInt::from(n));
        Self::from_probs(vec![p; n]).expect("uniform is a distribution")
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[BigRational] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> &BigRational {
        &self.probs[i]
    }

    pub fn probs_f64(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.to_f64().unwrap()).collect()
    }

    /// Sample an outcome index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let probs = self.probs_f64();
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// The distribution families referenced by name throughout the test and
/// report tooling.
pub mod families {
    use super::*;

    /// Uniform over `n` outcomes.
    pub fn uniform(n: usize) -> DiscreteDistribution {
        DiscreteDistribution::uniform(n)
    }

    /// Power-of-two probabilities `2^{-a_i}` along a caterpillar profile:
    /// `(1/2, 1/4, ..., 1/2^{n-1}, 1/2^{n-1})`.
    pub fn dyadic_caterpillar(n: usize) -> DiscreteDistribution {
        assert!(n >= 1);
        if n == 1 {
            return DiscreteDistribution::from_probs(vec![BigRational::one()]).unwrap();
        }
        let mut probs: Vec<BigRational> = (1..n).map(|i| dyadic(i as u32)).collect();
        probs.push(dyadic((n - 1) as u32));
        DiscreteDistribution::from_probs(probs).expect("Kraft equality")
    }

    /// The geometric family exhibiting 2/3-beatability of Huffman coding:
    /// `p_1 = 1/3`, `p_i = 1/(3·2^{i-2})` for `1 < i < n`, `p_n = 1/(3·2^{n-3})`.
    /// Defined for `n >= 3`.
    pub fn two_thirds(n: usize) -> DiscreteDistribution {
        assert!(n >= 3, "two-thirds family needs n >= 3");
        let third = BigRational::new(BigInt::one(), BigInt::from(3));
        let mut probs = vec![third.clone()];
        for i in 2..n {
            probs.push(third.clone() * dyadic((i - 2) as u32));
        }
        probs.push(third * dyadic((n - 3) as u32));
        DiscreteDistribution::from_probs(probs).expect("telescopes to 1")
    }

    /// Uniform masses with a strict tie-bias: item order `1..n` carries a
    /// strictly decreasing sort key `1/n + ((n+1)/2 - i)·eps`, which is what
    /// the vanishing perturbation of the uniform distribution selects. The
    /// probability masses themselves stay exactly `1/n`, so greedy's target
    /// is unique while exact-beatability identities still hold.
    pub fn perturbed_uniform(n: usize, _eps: f64) -> DiscreteDistribution {
        DiscreteDistribution::uniform(n)
    }

    /// The literal mass-perturbed family `p_i = 1/n + ((n+1)/2 - i)·eps`
    /// (centered so it sums to exactly one), strictly decreasing in `i`.
    /// `eps` must be a small rational like 1/10000.
    pub fn mass_perturbed_uniform(n: usize, eps: BigRational) -> DiscreteDistribution {
        let base = BigRational::new(BigInt::one(), BigInt::from(n));
        let center = BigRational::new(BigInt::from(n as i64 + 1), BigInt::from(2));
        let probs = (1..=n)
            .map(|i| base.clone() + (center.clone() - BigRational::from_integer(BigInt::from(i))) * eps.clone())
            .collect();
        DiscreteDistribution::from_probs(probs).expect("centered perturbation sums to 1")
    }

    /// Random rational distribution with denominators up to `granularity`.
    pub fn random<R: Rng + ?Sized>(n: usize, granularity: u64, rng: &mut R) -> DiscreteDistribution {
        loop {
            let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=granularity)).collect();
            let total: u64 = weights.iter().sum();
            if total == 0 {
                continue;
            }
            let probs = weights
                .iter()
                .map(|&w| BigRational::new(BigInt::from(w), BigInt::from(total)))
                .collect();
            return DiscreteDistribution::from_probs(probs).unwrap();
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DistWire {
    omega: Vec<String>,
    p: Vec<ProbWire>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProbWire {
    Float(f64),
    Text(String),
}

fn parse_prob(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        // allow the dyadic form "1/2^k"
        let den = den.trim();
        let den: BigInt = if let Some((base, exp)) = den.split_once('^') {
            let base: BigInt = base.trim().parse().ok()?;
            let exp: u32 = exp.trim().parse().ok()?;
            num_traits::pow::pow(base, exp as usize)
        } else {
            den.parse().ok()?
        };
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    // decimal string, exact: "0.125" -> 125/1000
    if let Some((int, frac)) = text.split_once('.') {
        let digits = frac.len() as u32;
        let int: BigInt = if int.is_empty() { BigInt::zero() } else { int.parse().ok()? };
        let frac: BigInt = if frac.is_empty() { BigInt::zero() } else { frac.parse().ok()? };
        let scale = num_traits::pow::pow(BigInt::from(10), digits as usize);
        return Some(BigRational::new(int * &scale + frac, scale));
    }
    let int: BigInt = text.parse().ok()?;
    Some(BigRational::from_integer(int))
}

impl Serialize for DiscreteDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire = DistWire {
            omega: self.outcomes.clone(),
            p: self
                .probs
                .iter()
                .map(|q| ProbWire::Text(format!("{}/{}", q.numer(), q.denom())))
                .collect(),
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DiscreteDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = DistWire::deserialize(deserializer)?;
        let probs = wire
            .p
            .iter()
            .map(|p| match p {
                ProbWire::Float(f) => {
                    BigRational::from_float(*f).ok_or_else(|| D::Error::custom("non-finite prob"))
                }
                ProbWire::Text(s) => {
                    parse_prob(s).ok_or_else(|| D::Error::custom(format!("bad probability {s:?}")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        DiscreteDistribution::new(wire.omega, probs).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_unnormalized() {
        assert!(DiscreteDistribution::from_f64s(&[0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::from_probs(vec![
            BigRational::from_ratio_i64(3, 2),
            BigRational::from_ratio_i64(-1, 2),
        ])
        .is_err());
    }

    trait FromRatio {
        fn from_ratio_i64(n: i64, d: i64) -> BigRational;
    }
    impl FromRatio for BigRational {
        fn from_ratio_i64(n: i64, d: i64) -> BigRational {
            BigRational::new(BigInt::from(n), BigInt::from(d))
        }
    }

    #[test]
    fn families_are_exact() {
        let d = families::dyadic_caterpillar(5);
        assert_eq!(d.probs().iter().sum::<BigRational>(), BigRational::one());
        let t = families::two_thirds(5);
        assert_eq!(t.probs().iter().sum::<BigRational>(), BigRational::one());
        assert_eq!(t.prob(0), &BigRational::from_ratio_i64(1, 3));
        assert_eq!(t.prob(4), &BigRational::from_ratio_i64(1, 12));
        let m = families::mass_perturbed_uniform(4, BigRational::from_ratio_i64(1, 10_000));
        assert_eq!(m.probs().iter().sum::<BigRational>(), BigRational::one());
        assert!(m.prob(0) > m.prob(1) && m.prob(1) > m.prob(2) && m.prob(2) > m.prob(3));
    }

    #[test]
    fn json_round_trip_and_exact_strings() {
        let d = families::two_thirds(4);
        let json = serde_json::to_string(&d).unwrap();
        let back: DiscreteDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(d, back);

        let parsed: DiscreteDistribution =
            serde_json::from_str(r#"{"omega":["a","b"],"p":["0.25","3/4"]}"#).unwrap();
        assert_eq!(parsed.prob(0), &BigRational::from_ratio_i64(1, 4));
        assert_eq!(parsed.prob(1), &BigRational::from_ratio_i64(3, 4));

        let dyad: DiscreteDistribution =
            serde_json::from_str(r#"{"omega":["a","b"],"p":["1/2^1","1/2"]}"#).unwrap();
        assert_eq!(dyad.prob(0), &BigRational::from_ratio_i64(1, 2));

        let floats: DiscreteDistribution =
            serde_json::from_str(r#"{"omega":["a","b"],"p":[0.5,0.5]}"#).unwrap();
        assert_eq!(floats.prob(0), &BigRational::from_ratio_i64(1, 2));
    }
}
