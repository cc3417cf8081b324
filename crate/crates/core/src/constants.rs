//! Named constants used by the covering bounds and the Monte Carlo
//! verification checks, each carrying a configured-or-fitted flag and
//! a free-text provenance note.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantFlag {
    Configured,
    Fitted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub flag: ConstantFlag,
    pub provenance: String,
}

impl Constant {
    pub fn configured(value: f64, provenance: &str) -> Self {
        Constant {
            value,
            flag: ConstantFlag::Configured,
            provenance: provenance.to_string(),
        }
    }

    pub fn fitted(value: f64, provenance: String) -> Self {
        Constant {
            value,
            flag: ConstantFlag::Fitted,
            provenance,
        }
    }
}

/// The full constant ledger for one block split (m, n).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsConfig {
    pub m: usize,
    pub n: usize,
    pub c_0: Constant,
    pub c_alpha: Constant,
    pub k_0: Constant,
    pub k_1: Constant,
    pub k_2: Constant,
    pub c_1: Constant,
    pub c_2: Constant,
    pub c_3: Constant,
    pub lambda: Constant,
    pub b_0: Constant,
    pub b: Constant,
    pub p: Constant,
    pub r_1: Constant,
    pub r_2: Constant,
    pub xi: Constant,
    pub c_inj: Constant,
    /// Hash of the calibration specification when any constant was fitted.
    #[serde(default)]
    pub calibration_hash: Option<String>,
}

impl ConstantsConfig {
    /// Built-in defaults, all flagged configured. The distortion bound
    /// uses the analytic radius-2 estimate exp(d - 1); the small radius
    /// floor is derived from the rest of the ledger in log space so the
    /// dimension-bound pipeline is self-consistent out of the box.
    pub fn default_for(m: usize, n: usize) -> Self {
        let d = m + n;
        let mn = (m * n) as f64;
        let c_alpha = ((d - 1) as f64).exp();
        let mut cfg = ConstantsConfig {
            m,
            n,
            c_0: Constant::configured(2.0, "placeholder until fitted by the calibration run"),
            c_alpha: Constant::configured(c_alpha, "analytic radius-2 distortion bound exp(d-1)"),
            k_0: Constant::configured(1.0, "default"),
            k_1: Constant::configured(1.0, "default"),
            k_2: Constant::configured(1.0, "default"),
            c_1: Constant::configured(2.0, "default"),
            c_2: Constant::configured(1.0, "default"),
            c_3: Constant::configured(2.0, "default"),
            lambda: Constant::configured(0.25, "default"),
            b_0: Constant::configured(2.0, "default"),
            b: Constant::configured(1.0, "default"),
            p: Constant::configured(d as f64, "default, minimal admissible value"),
            r_1: Constant::configured(0.0, "derived below"),
            r_2: Constant::configured(0.9 / (16.0 * mn.sqrt()), "default, 90% of the ceiling"),
            xi: Constant::configured(0.05, "placeholder until fitted by the calibration run"),
            c_inj: Constant::configured(0.1, "default"),
            calibration_hash: None,
        };
        let r1 = cfg.derived_r1_log().exp();
        cfg.r_1 = Constant::configured(r1, "derived from the ledger via the radius-floor chain");
        cfg
    }

    /// Check the admissibility window of every constant.
    pub fn validate(&self) -> Result<()> {
        let mn = (self.m * self.n) as f64;
        let d = (self.m + self.n) as f64;
        let checks: [(&str, bool); 10] = [
            ("k_0 >= 1", self.k_0.value >= 1.0),
            ("0 < k_1 <= 4", self.k_1.value > 0.0 && self.k_1.value <= 4.0),
            ("k_2 > 0", self.k_2.value > 0.0),
            ("b_0 >= 2", self.b_0.value >= 2.0),
            ("b >= 1", self.b.value >= 1.0),
            ("0 < c_2 <= 1", self.c_2.value > 0.0 && self.c_2.value <= 1.0),
            ("p >= m+n", self.p.value >= d),
            (
                "0 < r_2 < 1/(16 sqrt(mn))",
                self.r_2.value > 0.0 && self.r_2.value < 1.0 / (16.0 * mn.sqrt()),
            ),
            ("lambda > 0", self.lambda.value > 0.0),
            ("c_alpha >= 1", self.c_alpha.value >= 1.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(CoreError::hypothesis(name, "constants config out of range"));
            }
        }
        Ok(())
    }

    /// The integer step count of the dimension-bound pipeline:
    /// ceil(max(4p/(m+n), 2p(mn+2)/lambda, 4bp)).
    pub fn pipeline_k(&self) -> u64 {
        let d = (self.m + self.n) as f64;
        let mn = (self.m * self.n) as f64;
        let p = self.p.value;
        let k = (4.0 * p / d)
            .max(2.0 * p * (mn + 2.0) / self.lambda.value)
            .max(4.0 * self.b.value * p);
        k.ceil() as u64
    }

    /// Onset time of the pipeline: max(K_1, 4 log((k-1) C_1^k)).
    pub fn pipeline_t1(&self) -> f64 {
        let k = self.pipeline_k() as f64;
        self.k_1
            .value
            .max(4.0 * ((k - 1.0).ln() + k * self.c_1.value.ln()))
    }

    /// log of the radius floor chain; evaluated in log space because
    /// the third term underflows f64 for default constants.
    pub fn derived_r3_log(&self) -> f64 {
        let mn = (self.m * self.n) as f64;
        let c = self.c_2.value.ln();
        let k = self.pipeline_k() as f64;
        let t1 = self.pipeline_t1();
        let p = self.p.value;
        let terms = [
            2.0 * c - self.b_0.value / self.b.value,
            (mn + 2.0) * c + (self.k_1.value / (8.0 * self.k_2.value)).ln(),
            3.0 * c
                + 24.0 * p
                    * ((self.k_1.value / (8.0 * (k - 1.0))).ln() - k * self.c_3.value.ln()),
            c - 2.0 * p * t1,
            24.0 * p * mn * (1.0 / (2.0 * mn.sqrt())).ln(),
            self.r_2.value.ln(),
        ];
        terms.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// log of the derived admissible r_1: the 24 p mn root of the floor.
    pub fn derived_r1_log(&self) -> f64 {
        let mn = (self.m * self.n) as f64;
        self.derived_r3_log() / (24.0 * self.p.value * mn)
    }

    /// Stable hash of the whole ledger for report provenance.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("constants serialize");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for &(m, n) in &[(1, 1), (1, 2), (2, 2), (2, 3)] {
            ConstantsConfig::default_for(m, n).validate().unwrap();
        }
    }

    #[test]
    fn bad_r2_rejected() {
        let mut cfg = ConstantsConfig::default_for(1, 1);
        cfg.r_2.value = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_pipeline_k_for_unit_split() {
        // p = 2, lambda = 0.25, b = 1: max(4, 48, 8) = 48.
        let cfg = ConstantsConfig::default_for(1, 1);
        assert_eq!(cfg.pipeline_k(), 48);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ConstantsConfig::default_for(1, 1);
        let b = ConstantsConfig::default_for(1, 1);
        assert_eq!(a.hash(), b.hash());
        let mut c = ConstantsConfig::default_for(1, 1);
        c.k_1.value = 0.5;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn json_round_trip() {
        let a = ConstantsConfig::default_for(2, 1);
        let s = serde_json::to_string_pretty(&a).unwrap();
        let b: ConstantsConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn derived_r1_is_positive_and_small() {
        let cfg = ConstantsConfig::default_for(1, 1);
        let r1 = cfg.derived_r1_log().exp();
        assert!(r1 > 0.0 && r1 < 1e-3, "r1 = {r1}");
        assert_eq!(cfg.r_1.value, r1);
    }
}
