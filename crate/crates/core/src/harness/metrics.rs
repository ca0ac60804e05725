use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Ratio of INS to MagNav final error, rounded half-up to an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advantage {
    Finite(u64),
    /// MagNav final error was exactly zero.
    Infinite,
}

impl Serialize for Advantage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Advantage::Finite(v) => s.serialize_u64(*v),
            Advantage::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Advantage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(v) => Ok(Advantage::Finite(v)),
            Raw::S(s) if s == "inf" => Ok(Advantage::Infinite),
            Raw::S(s) => Err(serde::de::Error::custom(format!("bad advantage {s:?}"))),
        }
    }
}

impl std::fmt::Display for Advantage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Advantage::Finite(v) => write!(f, "{v}"),
            Advantage::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ins_final_m: f64,
    pub magnav_final_m: f64,
    /// Percent of distance, two significant figures.
    pub ins_percent: f64,
    pub magnav_percent: f64,
    pub advantage: Advantage,
    /// max(last 20 %) / median(last 50 %) of the MagNav error.
    pub bounded_statistic: f64,
}

/// Rounds half away from zero to the nearest integer.
pub fn round_half_up(x: f64) -> f64 {
    (x.abs() + 0.5).floor().copysign(x)
}

/// Rounds to `digits` significant figures, ties away from zero. The result is
/// the double nearest the rounded decimal.
pub fn round_significant(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32 - (digits as i32 - 1);
    let mut mantissa = round_half_up(scale_down(x, exp));
    let mut exp = exp;
    if mantissa.abs() >= 10f64.powi(digits as i32) {
        mantissa /= 10.0;
        exp += 1;
    }
    format!("{}e{}", mantissa as i64, exp)
        .parse()
        .expect("formatted float")
}

/// `x / 10^exp`, computed through a decimal string so that values such as
/// 0.0055 are not pushed across a rounding boundary by binary scaling.
fn scale_down(x: f64, exp: i32) -> f64 {
    let shifted: f64 = format!("{x:e}")
        .split_once('e')
        .map(|(m, e)| format!("{m}e{}", e.parse::<i32>().unwrap() - exp))
        .unwrap()
        .parse()
        .unwrap();
    shifted
}

pub fn percent_of_distance(error: f64, distance: f64) -> f64 {
    round_significant(100.0 * error / distance, 2)
}

pub fn advantage_factor(ins_error: f64, magnav_error: f64) -> Advantage {
    if magnav_error == 0.0 {
        Advantage::Infinite
    } else {
        Advantage::Finite(round_half_up(ins_error / magnav_error) as u64)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// max(last 20 %) / median(last 50 %) of a series.
pub fn bounded_statistic(errors: &[f64]) -> f64 {
    let n = errors.len();
    if n == 0 {
        return f64::NAN;
    }
    let tail20 = &errors[n - (n / 5).max(1)..];
    let mut tail50 = errors[n - (n / 2).max(1)..].to_vec();
    let max = tail20.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max / median(&mut tail50)
}

/// Final-error metrics from aligned INS and MagNav horizontal error series (m)
/// over a path of `distance` metres.
pub fn compute_metrics(ins_errors: &[f64], magnav_errors: &[f64], distance: f64) -> Metrics {
    assert!(
        !ins_errors.is_empty() && ins_errors.len() == magnav_errors.len(),
        "series must be aligned and non-empty"
    );
    assert!(distance > 0.0, "distance must be > 0");
    let ins = *ins_errors.last().unwrap();
    let mag = *magnav_errors.last().unwrap();
    Metrics {
        ins_final_m: ins,
        magnav_final_m: mag,
        ins_percent: percent_of_distance(ins, distance),
        magnav_percent: percent_of_distance(mag, distance),
        advantage: advantage_factor(ins, mag),
        bounded_statistic: bounded_statistic(magnav_errors),
    }
}

/// Median of the final quarter of a series.
pub fn final_quarter_median(errors: &[f64]) -> f64 {
    let n = errors.len();
    let mut tail = errors[n - (n / 4).max(1)..].to_vec();
    median(&mut tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn significant_figures() {
        assert_eq!(round_significant(0.006_027, 2), 0.006);
        assert_eq!(round_significant(1.0, 2), 1.0);
        assert_eq!(round_significant(0.0055, 2), 0.0055);
        assert_eq!(round_significant(0.000_555, 2), 0.00056);
        assert_eq!(round_significant(6.666, 2), 6.7);
        assert_eq!(round_significant(9.96, 2), 10.0);
        assert_eq!(round_significant(125.0, 2), 130.0);
    }

    #[test]
    fn half_up() {
        assert_eq!(round_half_up(37.5), 38.0);
        assert_eq!(round_half_up(6.5), 7.0);
        assert_eq!(round_half_up(6.49), 6.0);
    }

    #[test]
    fn zero_magnav_error_is_infinite() {
        assert_eq!(advantage_factor(100.0, 0.0), Advantage::Infinite);
        assert_eq!(
            serde_json::to_string(&Advantage::Infinite).unwrap(),
            "\"inf\""
        );
        assert_eq!(
            serde_json::from_str::<Advantage>("\"inf\"").unwrap(),
            Advantage::Infinite
        );
        assert_eq!(
            serde_json::from_str::<Advantage>("38").unwrap(),
            Advantage::Finite(38)
        );
    }

    #[test]
    fn bounded_statistic_of_flat_series() {
        assert_eq!(bounded_statistic(&[5.0; 100]), 1.0);
        let mut s = vec![1.0; 100];
        s[99] = 4.0;
        assert_eq!(bounded_statistic(&s), 4.0);
    }

    proptest! {
        #[test]
        fn rounding_is_within_half_unit(x in 1e-6f64..1e6) {
            let r = round_significant(x, 2);
            let unit = 10f64.powi(x.log10().floor() as i32 - 1);
            prop_assert!((r - x).abs() <= 0.5 * unit * (1.0 + 1e-9));
        }
    }
}
