use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::io::CsvTable;

/// Survival probability versus evolution time at one drive strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// Rabi frequency Ω (rad/s).
    pub omega: f64,
    /// AC-Stark shift difference δ_A used to generate the curve, if known (rad/s).
    #[serde(default)]
    pub delta_a: Option<f64>,
    pub times: Vec<f64>,
    pub p_s: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_traj: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl DecayCurve {
    pub fn new(omega: f64, times: Vec<f64>, p_s: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        let c = Self {
            omega,
            delta_a: None,
            times,
            p_s,
            stderr,
            n_traj: 0,
            seed: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega must be positive, got {}", self.omega)));
        }
        let n = self.times.len();
        if self.p_s.len() != n || self.stderr.len() != n {
            return Err(Error::InvalidArgument("times, p_s and stderr lengths differ".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times must be strictly ascending".into()));
        }
        if self.p_s.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("survival probabilities must lie in [0, 1]".into()));
        }
        if self.stderr.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("stderr must be non-negative".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Per-point weights `1/σ`; unit weights when no errors are attached.
    pub fn inverse_sigmas(&self) -> Vec<f64> {
        if self.stderr.iter().all(|&s| s == 0.0) {
            return vec![1.0; self.len()];
        }
        let floor = self
            .stderr
            .iter()
            .copied()
            .filter(|&s| s > 0.0)
            .fold(f64::INFINITY, f64::min);
        self.stderr.iter().map(|&s| 1.0 / s.max(floor)).collect()
    }

    pub fn header(&self) -> Value {
        json!({
            "omega": self.omega,
            "delta_a": self.delta_a,
            "n_traj": self.n_traj,
            "seed": self.seed,
        })
    }

    /// `t_s,p_s,stderr` table; the header carries Ω, δ_A, n_traj, seed plus
    /// whatever `extra` provenance fields the caller merges in.
    pub fn to_table(&self, extra: Option<&Value>) -> CsvTable {
        let mut meta = self.header();
        if let (Some(Value::Object(extra)), Value::Object(m)) = (extra, &mut meta) {
            for (k, v) in extra {
                m.insert(k.clone(), v.clone());
            }
        }
        let mut t = CsvTable::new(&["t_s", "p_s", "stderr"]).with_meta(meta);
        for i in 0..self.len() {
            t.push(vec![self.times[i], self.p_s[i], self.stderr[i]]);
        }
        t
    }

    pub fn from_table(t: &CsvTable) -> Result<Self> {
        let meta = t
            .meta
            .as_ref()
            .ok_or_else(|| Error::Parse("decay curve CSV lacks its JSON header".into()))?;
        let omega = meta
            .get("omega")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Parse("header lacks omega".into()))?;
        let col = |name: &str| {
            t.column(name)
                .ok_or_else(|| Error::Parse(format!("missing column {name}")))
        };
        let c = Self {
            omega,
            delta_a: meta.get("delta_a").and_then(Value::as_f64),
            times: col("t_s")?,
            p_s: col("p_s")?,
            stderr: col("stderr")?,
            n_traj: meta.get("n_traj").and_then(Value::as_u64).unwrap_or(0) as usize,
            seed: meta.get("seed").and_then(Value::as_u64),
        };
        c.validate()?;
        Ok(c)
    }
}
