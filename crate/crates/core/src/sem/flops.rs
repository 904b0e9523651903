//! Multiply-accumulate estimates for the three attention variants.
//!
//! Counts follow the implemented layers exactly: the two embedding maps, the
//! weight computation, and the per-frame aggregation. No term is dropped, so
//! the constant and lower-order parts are visible alongside the leading term.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionVariant {
    Unified,
    SingleFrame,
    CrossFrame,
}

impl AttentionVariant {
    pub const ALL: [AttentionVariant; 3] =
        [AttentionVariant::Unified, AttentionVariant::SingleFrame, AttentionVariant::CrossFrame];

    pub fn name(&self) -> &'static str {
        match self {
            AttentionVariant::Unified => "unified",
            AttentionVariant::SingleFrame => "single-frame",
            AttentionVariant::CrossFrame => "cross-frame",
        }
    }
}

/// MAC counts for one attention layer, split by stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsBreakdown {
    /// f1 and f2 applied at every (frame, joint) position.
    pub embedding: u128,
    /// Attention-weight computation.
    pub weights: u128,
    /// Weighted feature aggregation.
    pub aggregation: u128,
}

impl FlopsBreakdown {
    pub fn total(&self) -> u128 {
        self.embedding + self.weights + self.aggregation
    }
}

/// Exact MAC count of one attention layer for the given variant.
///
/// Weight-stage costs:
/// - unified: `(T N)^2 C_e`
/// - single-frame: `T N^2 C_e`
/// - cross-frame: `T N C_e` (temporal summation) + `N^2 C_e` (outer product)
pub fn attention_layer_macs(
    variant: AttentionVariant,
    n: usize,
    t: usize,
    c_in: usize,
    c_e: usize,
) -> FlopsBreakdown {
    let (n, t, c_in, c_e) = (n as u128, t as u128, c_in as u128, c_e as u128);
    let embedding = 2 * n * t * c_in * c_e;
    let (weights, aggregation) = match variant {
        AttentionVariant::Unified => ((n * t) * (n * t) * c_e, (n * t) * (n * t) * c_in),
        AttentionVariant::SingleFrame => (t * n * n * c_e, t * n * n * c_in),
        AttentionVariant::CrossFrame => (t * n * c_e + n * n * c_e, t * n * n * c_in),
    };
    FlopsBreakdown { embedding, weights, aggregation }
}

/// Coefficients of the total as a polynomial in T: `quadratic·T² + linear·T +
/// constant`. Used to state the leading-term scaling law the estimator is
/// checked against.
pub fn t_polynomial(variant: AttentionVariant, n: usize, c_in: usize, c_e: usize) -> (u128, u128, u128) {
    let (n, c_in, c_e) = (n as u128, c_in as u128, c_e as u128);
    match variant {
        AttentionVariant::Unified => (n * n * (c_e + c_in), 2 * n * c_in * c_e, 0),
        AttentionVariant::SingleFrame => (0, n * n * (c_e + c_in) + 2 * n * c_in * c_e, 0),
        AttentionVariant::CrossFrame => {
            (0, n * c_e + n * n * c_in + 2 * n * c_in * c_e, n * n * c_e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_stage_hand_counts() {
        // T=10, N=5, C_e=4: unified weight cost 10000, cross-frame 300
        let u = attention_layer_macs(AttentionVariant::Unified, 5, 10, 3, 4);
        assert_eq!(u.weights, 10_000);
        let c = attention_layer_macs(AttentionVariant::CrossFrame, 5, 10, 3, 4);
        assert_eq!(c.weights, 300);
    }

    #[test]
    fn ordering_unified_single_cross() {
        for n in [2usize, 3, 8, 25] {
            for t in [2usize, 4, 16, 64] {
                let u = attention_layer_macs(AttentionVariant::Unified, n, t, 3, 16).total();
                let s = attention_layer_macs(AttentionVariant::SingleFrame, n, t, 3, 16).total();
                let c = attention_layer_macs(AttentionVariant::CrossFrame, n, t, 3, 16).total();
                assert!(u > s, "unified {u} <= single {s} at n={n} t={t}");
                assert!(s >= c, "single {s} < cross {c} at n={n} t={t}");
            }
        }
    }

    #[test]
    fn ratio_grows_linearly_in_t_at_leading_order() {
        let (n, c_in, c_e) = (25, 16, 16);
        let (qa, _, _) = t_polynomial(AttentionVariant::Unified, n, c_in, c_e);
        let (_, lc, _) = t_polynomial(AttentionVariant::CrossFrame, n, c_in, c_e);
        let k = qa as f64 / lc as f64;
        for t in [64usize, 256, 1024] {
            let u = attention_layer_macs(AttentionVariant::Unified, n, t, c_in, c_e).total() as f64;
            let c = attention_layer_macs(AttentionVariant::CrossFrame, n, t, c_in, c_e).total() as f64;
            let ratio = u / c;
            let pred = k * t as f64;
            assert!((ratio - pred).abs() / pred < 0.05, "t={t}: ratio {ratio} vs pred {pred}");
        }
    }

    #[test]
    fn polynomial_matches_direct_count() {
        for v in AttentionVariant::ALL {
            let (q, l, c) = t_polynomial(v, 7, 5, 4);
            for t in [1usize, 3, 10] {
                let direct = attention_layer_macs(v, 7, t, 5, 4).total();
                assert_eq!(direct, q * (t as u128) * (t as u128) + l * t as u128 + c);
            }
        }
    }
}
