//! Named parameter families for sweeps.  Each family maps one rational
//! parameter to a polytope document, so every sweep item goes through the
//! same parsing and hashing path as a hand-written spec file.

use num::{BigInt, Signed, ToPrimitive};
use polystab::rat::Rat;
use serde_json::json;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Unit-width trapezium with top edge from (0,1) to (1,l); the vertical
    /// sides carry weight one, the horizontal and slanted edges weight zero.
    Trapezium,
    /// Interval [0,1] with boundary weights (a, 1).
    Interval,
    /// Long thin box [0,1] x [0,n] with unit weights.
    LongThin,
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "trapezium" => Ok(Family::Trapezium),
            "interval" => Ok(Family::Interval),
            "longthin" => Ok(Family::LongThin),
            other => Err(format!(
                "unknown family '{other}'; expected trapezium, interval or longthin"
            )),
        }
    }
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Trapezium => "trapezium",
            Family::Interval => "interval",
            Family::LongThin => "longthin",
        }
    }

    /// Document for one parameter value, or a per-item error for values the
    /// family is not defined at.
    pub fn spec_json(&self, value: &Rat) -> Result<String, String> {
        match self {
            Family::Trapezium => {
                if !value.is_positive() {
                    return Err(format!(
                        "trapezium slope l = {value} degenerates the right edge; l must be positive"
                    ));
                }
                let p: BigInt = value.numer().clone();
                let q: BigInt = value.denom().clone();
                let doc = json!({
                    "dim": 2,
                    "facets": [
                        { "normal": [1, 0], "offset": 0, "sigma_weight": 1 },
                        { "normal": [0, 1], "offset": 0, "sigma_weight": 0 },
                        { "normal": [-1, 0], "offset": -1, "sigma_weight": 1 },
                        {
                            "normal": [bigint_i64(&(&p - &q))?, bigint_i64(&-&q)?],
                            "offset": bigint_i64(&-&q)?,
                            "sigma_weight": 0
                        }
                    ],
                    "mesh": { "resolution": 10 }
                });
                Ok(doc.to_string())
            }
            Family::Interval => {
                if value.is_negative() {
                    return Err(format!("interval weight a = {value} must be nonnegative"));
                }
                let doc = json!({
                    "dim": 1,
                    "facets": [
                        { "normal": [1], "offset": 0, "sigma_weight": value.to_string() },
                        { "normal": [-1], "offset": -1, "sigma_weight": 1 }
                    ],
                    "mesh": { "resolution": 64 }
                });
                Ok(doc.to_string())
            }
            Family::LongThin => {
                if !value.is_positive() {
                    return Err(format!("box height n = {value} must be positive"));
                }
                let neg = -value;
                let doc = json!({
                    "dim": 2,
                    "facets": [
                        { "normal": [1, 0], "offset": 0, "sigma_weight": 1 },
                        { "normal": [0, 1], "offset": 0, "sigma_weight": 1 },
                        { "normal": [-1, 0], "offset": -1, "sigma_weight": 1 },
                        { "normal": [0, -1], "offset": neg.to_string(), "sigma_weight": 1 }
                    ],
                    "mesh": { "resolution": 10 }
                });
                Ok(doc.to_string())
            }
        }
    }
}

fn bigint_i64(n: &BigInt) -> Result<i64, String> {
    n.to_i64()
        .ok_or_else(|| format!("parameter component {n} is out of range"))
}

/// Comma-separated rational values; keeps the raw token for labelling.
pub fn parse_values(text: &str) -> Result<Vec<(String, Rat)>, String> {
    let mut out = Vec::new();
    for token in text.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let r = polystab::rat::parse_rational(token)
            .ok_or_else(|| format!("unreadable value '{token}'"))?;
        out.push((token.to_string(), r));
    }
    if out.is_empty() {
        return Err("no values given".into());
    }
    Ok(out)
}

/// Directory-safe label for one parameter token.
pub fn sanitize(token: &str) -> String {
    token
        .chars()
        .map(|c| match c {
            '0'..='9' | 'a'..='z' | 'A'..='Z' => c,
            '.' => 'p',
            '/' => '_',
            '-' => 'm',
            _ => '_',
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use polystab::rat::rat;

    #[test]
    fn trapezium_documents_parse_into_the_expected_quadrilateral() {
        let doc = Family::Trapezium.spec_json(&rat(2, 1)).unwrap();
        let (poly, mesh) = polystab::geometry::parse_polytope(&doc).unwrap();
        assert_eq!(poly.dim, 2);
        assert_eq!(poly.facets.len(), 4);
        assert_eq!(mesh.resolution, 10);
        // Vertices (0,0), (1,0), (0,1), (1,2).
        assert_eq!(poly.vertices.len(), 4);
    }

    #[test]
    fn degenerate_parameters_are_refused_per_family() {
        assert!(Family::Trapezium.spec_json(&rat(0, 1)).is_err());
        assert!(Family::LongThin.spec_json(&rat(-1, 2)).is_err());
        assert!(Family::Interval.spec_json(&rat(-1, 2)).is_err());
        assert!(Family::Interval.spec_json(&rat(0, 1)).is_ok());
    }

    #[test]
    fn value_lists_accept_rationals_and_decimals() {
        let vs = parse_values("0.5, 1, 2, 1/4").unwrap();
        assert_eq!(vs.len(), 4);
        assert_eq!(vs[0].1, rat(1, 2));
        assert_eq!(vs[3].1, rat(1, 4));
        assert!(parse_values("a,b").is_err());
    }
}
