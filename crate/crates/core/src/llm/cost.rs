//! Token cost accounting in exact rational dollars.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CostError {
    #[error("token count must be non-negative, got {0}")]
    NegativeTokens(i64),
    #[error("invalid dollar amount `{0}`")]
    InvalidAmount(String),
}

/// US dollar amount held as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Usd(Ratio<i128>);

impl Usd {
    pub const ZERO: Usd = Usd(Ratio::new_raw(0, 1));

    pub fn from_cents(cents: i128) -> Self {
        Usd(Ratio::new(cents, 100))
    }

    pub fn ratio(&self) -> Ratio<i128> {
        self.0
    }

    /// Rounded to whole cents (half away from zero), e.g. `$0.02`.
    pub fn display_cents(&self) -> String {
        let cents = (self.0 * Ratio::from_integer(100)).round().to_integer();
        let sign = if cents < 0 { "-" } else { "" };
        let cents = cents.abs();
        format!("{sign}${}.{:02}", cents / 100, cents % 100)
    }

    /// Exact decimal when the denominator allows it, otherwise `n/d`.
    pub fn exact_string(&self) -> String {
        let (mut num, den) = (*self.0.numer(), *self.0.denom());
        let mut d = den;
        let mut places = 0u32;
        while d % 10 == 0 {
            d /= 10;
            places += 1;
        }
        while d % 2 == 0 || d % 5 == 0 {
            let f = if d % 2 == 0 { 5 } else { 2 };
            d = d * f / 10;
            num *= f;
            places += 1;
        }
        if d != 1 {
            return format!("{}/{}", self.0.numer(), self.0.denom());
        }
        let sign = if num < 0 { "-" } else { "" };
        let num = num.abs();
        let scale = 10i128.pow(places);
        let (whole, frac) = (num / scale, num % scale);
        if places == 0 {
            format!("{sign}{whole}")
        } else {
            format!("{sign}{whole}.{frac:0width$}", width = places as usize)
        }
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_cents())
    }
}

impl FromStr for Usd {
    type Err = CostError;

    /// Parses `0.02`, `$0.02`, `3` or `1/3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CostError::InvalidAmount(s.to_owned());
        let t = s.trim().trim_start_matches('$');
        if let Some((n, d)) = t.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| bad())?;
            let d: i128 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Usd(Ratio::new(n, d)));
        }
        let (neg, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (whole, frac) = t.split_once('.').unwrap_or((t, ""));
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{whole}{frac}");
        let num: i128 = digits.parse().map_err(|_| bad())?;
        let den = 10i128.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        let v = Ratio::new(num, den);
        Ok(Usd(if neg { -v } else { v }))
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.exact_string())
    }
}

impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Running token total and its cost at a fixed price per 1000 tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub total_tokens: u64,
    pub unit_price_per_1000: Usd,
    pub total_cost: Usd,
}

impl CostLedger {
    /// $0.02 per 1000 tokens, the text-davinci-002 list price.
    pub fn davinci() -> Self {
        Self::new(Usd::from_cents(2))
    }

    pub fn new(unit_price_per_1000: Usd) -> Self {
        CostLedger { total_tokens: 0, unit_price_per_1000, total_cost: Usd::ZERO }
    }

    pub fn record(&mut self, tokens: u64) {
        self.total_tokens += tokens;
        self.total_cost = price(self.total_tokens as i128, self.unit_price_per_1000);
    }
}

impl Default for CostLedger {
    fn default() -> Self {
        Self::davinci()
    }
}

fn price(tokens: i128, per_1000: Usd) -> Usd {
    Usd(Ratio::new(tokens, 1000) * per_1000.0)
}

/// Cost of `tokens` at the ledger's unit price.
pub fn estimate_cost(ledger: &CostLedger, tokens: i64) -> Result<Usd, CostError> {
    if tokens < 0 {
        return Err(CostError::NegativeTokens(tokens));
    }
    Ok(price(i128::from(tokens), ledger.unit_price_per_1000))
}
