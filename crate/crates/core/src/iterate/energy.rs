use crate::error::{Error, Result};

/// Prescribed energy loss E(t) and its derivative; constant extension outside
/// the table range (and for negative times).
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyProfile {
    Constant(f64),
    /// E(t) = e0 + slope·t for t ≥ 0, e0 before.
    Linear { e0: f64, slope: f64 },
    /// Piecewise linear through (t, E) knots with increasing t.
    Table(Vec<(f64, f64)>),
}

impl Default for EnergyProfile {
    fn default() -> Self {
        Self::Linear { e0: 0.0, slope: 1.0 }
    }
}

impl EnergyProfile {
    pub fn validate(&self) -> Result<()> {
        if let Self::Table(k) = self {
            if k.is_empty() {
                return Err(Error::Config("empty energy table".into()));
            }
            if k.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::Config("energy table times must increase".into()));
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Constant(e) => *e,
            Self::Linear { e0, slope } => e0 + slope * t.max(0.0),
            Self::Table(k) => {
                let i = k.partition_point(|p| p.0 <= t);
                if i == 0 {
                    k[0].1
                } else if i == k.len() {
                    k[k.len() - 1].1
                } else {
                    let (a, b) = (k[i - 1], k[i]);
                    a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
                }
            }
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            Self::Constant(_) => 0.0,
            Self::Linear { slope, .. } => {
                if t >= 0.0 {
                    *slope
                } else {
                    0.0
                }
            }
            Self::Table(k) => {
                let i = k.partition_point(|p| p.0 <= t);
                if i == 0 || i == k.len() {
                    0.0
                } else {
                    (k[i].1 - k[i - 1].1) / (k[i].0 - k[i - 1].0)
                }
            }
        }
    }

    /// `constant:E`, `linear:E0:SLOPE`, or `table:t0=E0,t1=E1,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse energy profile {s:?}"));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let p = match kind.trim() {
            "constant" => Self::Constant(num(rest)?),
            "linear" => {
                let (a, b) = rest.split_once(':').ok_or_else(bad)?;
                Self::Linear {
                    e0: num(a)?,
                    slope: num(b)?,
                }
            }
            "table" => Self::Table(
                rest.split(',')
                    .map(|kv| {
                        let (t, e) = kv.split_once('=').ok_or_else(bad)?;
                        Ok((num(t)?, num(e)?))
                    })
                    .collect::<Result<_>>()?,
            ),
            _ => return Err(bad()),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Constant(e) => format!("constant:{e}"),
            Self::Linear { e0, slope } => format!("linear:{e0}:{slope}"),
            Self::Table(k) => format!(
                "table:{}",
                k.iter().map(|(t, e)| format!("{t}={e}")).collect::<Vec<_>>().join(",")
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms_and_rates() {
        let l = EnergyProfile::parse("linear:0.5:2").unwrap();
        assert_eq!(l.value(1.0), 2.5);
        assert_eq!(l.rate(0.3), 2.0);
        assert_eq!(l.value(-1.0), 0.5);
        let t = EnergyProfile::parse("table:0=0,1=2,2=2").unwrap();
        assert_eq!(t.value(0.5), 1.0);
        assert_eq!(t.rate(0.5), 2.0);
        assert_eq!(t.rate(1.5), 0.0);
        assert_eq!(t.value(7.0), 2.0);
        assert_eq!(EnergyProfile::parse(&t.describe()).unwrap(), t);
        assert!(EnergyProfile::parse("table:1=0,0=1").is_err());
        assert!(EnergyProfile::parse("cubic:1").is_err());
    }
}
