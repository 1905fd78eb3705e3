//! Synthetic four-channel processes with a known causal graph.
//!
//! Channels C0..C2 are controls and C3 is the autoregressive target. Both
//! generators draw C0 and C1 as unit-variance AR(1) processes; the additive
//! process mixes two lagged controls linearly into the target and derives C2
//! from C0 so that it correlates with the target without causing it. The
//! interactive process makes C2 independent and couples all three controls
//! multiplicatively.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ChannelRole, TimeSeriesDataset};
use crate::causal::CausalGraph;
use crate::error::{Error, Result};

const TARGET: usize = 3;
const N_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Additive,
    Interactive,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Additive => "additive",
            SyntheticKind::Interactive => "interactive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub length: usize,
    pub seed: u64,
    pub burn_in: usize,
    /// Standard deviation of the target's innovation.
    pub noise_std: f64,
    /// Target autoregressive coefficient.
    pub ar_coeff: f64,
    /// Autoregressive coefficient of the C0/C1 control processes.
    pub control_ar: f64,
    /// Lag of each cross-channel term, in generator order.
    ///
    /// Additive: `[C0->C3, C1->C3, C0->C2]`. Interactive: `[C0, C1]` inside the
    /// tanh term, then `[C2, C0]` in the product term.
    pub lags: Vec<usize>,
    /// Coupling of each cross-channel term.
    ///
    /// Additive: `[C0->C3, C1->C3, C0->C2]`. Interactive: `[tanh term, product term]`.
    pub couplings: Vec<f64>,
    /// Scale of the independent noise in the spurious C2 channel (additive only).
    pub spurious_noise: f64,
}

impl SyntheticConfig {
    pub fn additive(seed: u64) -> Self {
        Self {
            length: 6144,
            seed,
            burn_in: 32,
            noise_std: 0.1f64.sqrt(),
            ar_coeff: 0.7,
            control_ar: 0.9,
            lags: vec![4, 9, 2],
            couplings: vec![0.8, 0.5, 0.8],
            spurious_noise: 0.6,
        }
    }

    pub fn interactive(seed: u64) -> Self {
        Self {
            lags: vec![4, 6, 2, 3],
            couplings: vec![0.6, 0.4],
            ..Self::additive(seed)
        }
    }

    pub fn for_kind(kind: SyntheticKind, seed: u64) -> Self {
        match kind {
            SyntheticKind::Additive => Self::additive(seed),
            SyntheticKind::Interactive => Self::interactive(seed),
        }
    }

    fn validate(&self, n_lags: usize, n_couplings: usize) -> Result<()> {
        if self.lags.len() != n_lags || self.couplings.len() != n_couplings {
            return Err(Error::InvalidArgument(format!(
                "expected {n_lags} lags and {n_couplings} couplings, got {} and {}",
                self.lags.len(),
                self.couplings.len()
            )));
        }
        if self.length == 0 {
            return Err(Error::InvalidArgument(
                "synthetic length must be positive".into(),
            ));
        }
        if let Some(&lag) = self.lags.iter().find(|&&l| l >= self.length) {
            return Err(Error::InvalidArgument(format!(
                "lag {lag} not below length {}",
                self.length
            )));
        }
        for (name, a) in [("target", self.ar_coeff), ("control", self.control_ar)] {
            if !(a > -1.0 && a < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} AR coefficient {a} is not stationary"
                )));
            }
        }
        Ok(())
    }
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    x.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

struct Noise(ChaCha8Rng);

impl Noise {
    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }
}

/// Zero-mean AR(1) with unit stationary variance, standardized afterwards.
fn control_process(rng: &mut Noise, n: usize, phi: f64) -> Vec<f64> {
    let innovation = (1.0 - phi * phi).sqrt();
    let mut x = vec![0.0; n];
    for t in 1..n {
        x[t] = phi * x[t - 1] + innovation * rng.normal();
    }
    standardize(&mut x);
    x
}

fn lagged(x: &[f64], t: usize, lag: usize) -> f64 {
    if t >= lag {
        x[t - lag]
    } else {
        0.0
    }
}

fn assemble(
    cfg: &SyntheticConfig,
    kind: SyntheticKind,
    channels: [Vec<f64>; N_CHANNELS],
    graph: CausalGraph,
) -> Result<TimeSeriesDataset> {
    let mut values = Vec::with_capacity(cfg.length * N_CHANNELS);
    for t in cfg.burn_in..cfg.burn_in + cfg.length {
        values.extend(channels.iter().map(|c| c[t]));
    }
    let names = (0..N_CHANNELS).map(|c| format!("C{c}")).collect();
    let roles = vec![
        ChannelRole::Operational,
        ChannelRole::Operational,
        ChannelRole::Operational,
        ChannelRole::Target,
    ];
    TimeSeriesDataset::new(kind.name(), values, names, roles, TARGET, graph)
}

/// Linear additive process with a spurious correlate.
///
/// `C3_t = a·C3_{t-1} + w0·C0_{t-l0} + w1·C1_{t-l1} + e_t` and
/// `C2_t = w2·C0_{t-l2} + s·n_t`, with C2 standardized. Graph: C0→C3, C1→C3.
pub fn generate_additive(cfg: &SyntheticConfig) -> Result<TimeSeriesDataset> {
    cfg.validate(3, 3)?;
    let n = cfg.length + cfg.burn_in;
    let mut rng = Noise(ChaCha8Rng::seed_from_u64(cfg.seed));
    let c0 = control_process(&mut rng, n, cfg.control_ar);
    let c1 = control_process(&mut rng, n, cfg.control_ar);
    let (l0, l1, l2) = (cfg.lags[0], cfg.lags[1], cfg.lags[2]);
    let (w0, w1, w2) = (cfg.couplings[0], cfg.couplings[1], cfg.couplings[2]);

    let mut c2: Vec<f64> = (0..n)
        .map(|t| w2 * lagged(&c0, t, l2) + cfg.spurious_noise * rng.normal())
        .collect();
    standardize(&mut c2);

    let mut c3 = vec![0.0; n];
    for t in 0..n {
        let prev = if t > 0 { c3[t - 1] } else { 0.0 };
        c3[t] = cfg.ar_coeff * prev
            + w0 * lagged(&c0, t, l0)
            + w1 * lagged(&c1, t, l1)
            + cfg.noise_std * rng.normal();
    }
    let graph = CausalGraph::new([(0, TARGET), (1, TARGET)])?;
    assemble(cfg, SyntheticKind::Additive, [c0, c1, c2, c3], graph)
}

/// Nonlinear multiplicative process over all three controls.
///
/// `C3_t = a·C3_{t-1} + w0·tanh(C0_{t-l0}·C1_{t-l1}) + w1·C2_{t-l2}·C0_{t-l3} + e_t`.
/// Graph: C0→C3, C1→C3, C2→C3.
pub fn generate_interactive(cfg: &SyntheticConfig) -> Result<TimeSeriesDataset> {
    cfg.validate(4, 2)?;
    let n = cfg.length + cfg.burn_in;
    let mut rng = Noise(ChaCha8Rng::seed_from_u64(cfg.seed));
    let c0 = control_process(&mut rng, n, cfg.control_ar);
    let c1 = control_process(&mut rng, n, cfg.control_ar);
    let c2 = control_process(&mut rng, n, cfg.control_ar);
    let (w0, w1) = (cfg.couplings[0], cfg.couplings[1]);
    let l = &cfg.lags;

    let mut c3 = vec![0.0; n];
    for t in 0..n {
        let prev = if t > 0 { c3[t - 1] } else { 0.0 };
        c3[t] = cfg.ar_coeff * prev
            + w0 * (lagged(&c0, t, l[0]) * lagged(&c1, t, l[1])).tanh()
            + w1 * lagged(&c2, t, l[2]) * lagged(&c0, t, l[3])
            + cfg.noise_std * rng.normal();
    }
    let graph = CausalGraph::new([(0, TARGET), (1, TARGET), (2, TARGET)])?;
    assemble(cfg, SyntheticKind::Interactive, [c0, c1, c2, c3], graph)
}

pub fn generate(kind: SyntheticKind, cfg: &SyntheticConfig) -> Result<TimeSeriesDataset> {
    match kind {
        SyntheticKind::Additive => generate_additive(cfg),
        SyntheticKind::Interactive => generate_interactive(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_shape_and_graph() {
        let ds = generate_additive(&SyntheticConfig::additive(0)).unwrap();
        assert_eq!((ds.n_rows(), ds.n_vars(), ds.target()), (6144, 4, 3));
        assert_eq!(ds.graph().parents(3), vec![0, 1]);
        assert_eq!(ds.d_u(), 3);
    }

    #[test]
    fn interactive_has_three_causes() {
        let ds = generate_interactive(&SyntheticConfig::interactive(0)).unwrap();
        assert_eq!(ds.graph().parents(3).len(), 3);
    }

    #[test]
    fn seeds_are_deterministic() {
        for kind in [SyntheticKind::Additive, SyntheticKind::Interactive] {
            let a = generate(kind, &SyntheticConfig::for_kind(kind, 7)).unwrap();
            let b = generate(kind, &SyntheticConfig::for_kind(kind, 7)).unwrap();
            let c = generate(kind, &SyntheticConfig::for_kind(kind, 8)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.values(), c.values());
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SyntheticConfig::additive(0);
        cfg.ar_coeff = 1.0;
        assert!(generate_additive(&cfg).is_err());
        let mut cfg = SyntheticConfig::additive(0);
        cfg.length = 8;
        assert!(generate_additive(&cfg).is_err());
        assert!(generate_interactive(&SyntheticConfig::additive(0)).is_err());
    }

    #[test]
    fn additive_target_variance_is_stable() {
        let ds = generate_additive(&SyntheticConfig::additive(1)).unwrap();
        let y = ds.channel(3);
        let tail = &y[y.len() - 5000..];
        let var = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64
        };
        let (a, b) = (var(&tail[..2500]), var(&tail[2500..]));
        assert!(a.is_finite() && b.is_finite());
        assert!((a / b - 1.0).abs() < 0.35, "{a} vs {b}");
    }
}
