//! Operation-count energy model and firing-rate measurement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ForwardTrace;

/// Energy of one 32-bit floating-point multiply-accumulate.
pub const E_MAC_PJ: f64 = 4.6;
/// Energy of one 32-bit floating-point accumulate.
pub const E_AC_PJ: f64 = 0.9;
/// Per-element AMP2 cost with ADD merges: two MACs and one accumulate.
pub const AMP2_ADD_PJ: f64 = 10.1;
/// Per-element AMP2 cost with AND merges: three MACs. Written out because
/// `3.0 * 4.6` rounds to 13.799999999999999.
pub const AMP2_MUL_PJ: f64 = 13.8;

/// Symbolic element counts for one activation layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    /// Membrane cells kept alive.
    pub space: f64,
    /// Elementwise neuron updates.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: usize,
    pub b: usize,
    pub c_channels: usize,
    pub n: usize,
    pub e_mac_pj: f64,
    pub e_ac_pj: f64,
    pub lif_pj: f64,
    pub amp2_add_pj: f64,
    pub amp2_mul_pj: f64,
    pub per_layer_firing_rate: Vec<f64>,
}

impl EnergyReport {
    /// Element counts for ReLU, timestep LIF and AMP2 at these extents.
    pub fn complexity(&self) -> [(&'static str, Complexity); 3] {
        let bcn = (self.b * self.c_channels * self.n) as f64;
        let t = self.t as f64;
        [
            ("relu", Complexity { space: bcn, time: bcn }),
            (
                "lif_timestep",
                Complexity {
                    space: 2.0 * t * bcn,
                    time: t * bcn,
                },
            ),
            (
                "lif_amp2",
                Complexity {
                    space: 2.0 * bcn,
                    time: bcn,
                },
            ),
        ]
    }
}

/// Energy of timestep LIF versus AMP2 with ADD or AND merges.
pub fn estimate_energy(t: usize, b: usize, c_channels: usize, n: usize) -> Result<EnergyReport> {
    for (name, v) in [("t", t), ("b", b), ("c", c_channels), ("n", n)] {
        if v == 0 {
            return Err(Error::InvalidArgument(format!("extent {name} must be at least 1")));
        }
    }
    let bcn = b as f64 * c_channels as f64 * n as f64;
    Ok(EnergyReport {
        t,
        b,
        c_channels,
        n,
        e_mac_pj: E_MAC_PJ,
        e_ac_pj: E_AC_PJ,
        lif_pj: t as f64 * bcn * E_MAC_PJ,
        amp2_add_pj: bcn * AMP2_ADD_PJ,
        amp2_mul_pj: bcn * AMP2_MUL_PJ,
        per_layer_firing_rate: Vec::new(),
    })
}

/// Fraction of ones per SPIKE layer over the whole batch (and all timesteps).
pub fn measure_firing_rates(trace: &ForwardTrace) -> Result<Vec<f64>> {
    if trace.layers.is_empty() {
        return Err(Error::Empty("forward trace"));
    }
    Ok(trace
        .layers
        .iter()
        .map(|l| {
            let ones = l.spikes.data().iter().filter(|&&s| s != 0.0).count();
            ones as f64 / l.spikes.numel() as f64
        })
        .collect())
}

/// Arithmetic mean of the rates sharing a label, keyed by label.
pub fn block_average_rates(rates: &[f64], labels: &[Option<String>]) -> Result<BTreeMap<String, f64>> {
    if rates.len() != labels.len() {
        return Err(Error::shape("block rates", &[rates.len()], &[labels.len()]));
    }
    let mut groups: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (r, l) in rates.iter().zip(labels) {
        if let Some(l) = l {
            let e = groups.entry(l.clone()).or_default();
            e.0 += r;
            e.1 += 1;
        }
    }
    Ok(groups.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}
