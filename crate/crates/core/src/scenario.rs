//! Uncertainty scenarios: representation, sampling, pooling, persistence.
//!
//! A [`Scenario`] holds the three uncertain channels (available DER power,
//! active load, reactive load) as dense `(bus, phase, time)` arrays in
//! per-unit. A [`ScenarioSet`] attaches probabilities. Pooling compresses a
//! set into a fixed-size `(bus, time, feature)` tensor with element-wise
//! min/mean/max per channel, which is what the scenario encoder consumes.

use crate::exec;
use crate::feeder::{BusKind, Feeder, Phase, ALL_PHASES};
use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Number of pooled feature channels: {min, mean, max} x {pg, pd, qd}.
pub const POOLED_FEATURES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Pg,
    Pd,
    Qd,
}

pub const CHANNELS: [Channel; 3] = [Channel::Pg, Channel::Pd, Channel::Qd];

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Pg => "pg",
            Channel::Pd => "pd",
            Channel::Qd => "qd",
        }
    }

    pub fn parse(s: &str) -> Option<Channel> {
        match s {
            "pg" => Some(Channel::Pg),
            "pd" => Some(Channel::Pd),
            "qd" => Some(Channel::Qd),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("malformed scenario data: {0}")]
    Malformed(String),
    #[error("cannot build an empty scenario set")]
    Empty,
}

/// One realization of the uncertain injections over the horizon. Arrays are
/// `(bus, phase, time)` in per-unit on the feeder base.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub pg_hat: Array3<f64>,
    pub pd_hat: Array3<f64>,
    pub qd_hat: Array3<f64>,
}

impl Scenario {
    pub fn zeros(num_buses: usize, horizon: usize) -> Scenario {
        let shape = (num_buses, 3, horizon);
        Scenario {
            pg_hat: Array3::zeros(shape),
            pd_hat: Array3::zeros(shape),
            qd_hat: Array3::zeros(shape),
        }
    }

    pub fn horizon(&self) -> usize {
        self.pg_hat.shape()[2]
    }

    pub fn num_buses(&self) -> usize {
        self.pg_hat.shape()[0]
    }

    pub fn channel(&self, c: Channel) -> &Array3<f64> {
        match c {
            Channel::Pg => &self.pg_hat,
            Channel::Pd => &self.pd_hat,
            Channel::Qd => &self.qd_hat,
        }
    }

    pub fn channel_mut(&mut self, c: Channel) -> &mut Array3<f64> {
        match c {
            Channel::Pg => &mut self.pg_hat,
            Channel::Pd => &mut self.pd_hat,
            Channel::Qd => &mut self.qd_hat,
        }
    }
}

/// A finite collection of scenarios with strictly positive probabilities
/// summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub probabilities: Vec<f64>,
}

impl ScenarioSet {
    pub fn uniform(scenarios: Vec<Scenario>) -> Result<ScenarioSet, ScenarioError> {
        if scenarios.is_empty() {
            return Err(ScenarioError::Empty);
        }
        let p = 1.0 / scenarios.len() as f64;
        let probabilities = vec![p; scenarios.len()];
        Ok(ScenarioSet {
            scenarios,
            probabilities,
        })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.scenarios[0].horizon()
    }

    /// Select a subset by index, renormalizing probabilities.
    pub fn subset(&self, indices: &[usize]) -> Result<ScenarioSet, ScenarioError> {
        if indices.is_empty() {
            return Err(ScenarioError::Empty);
        }
        let scenarios: Vec<Scenario> = indices.iter().map(|&i| self.scenarios[i].clone()).collect();
        let raw: Vec<f64> = indices.iter().map(|&i| self.probabilities[i]).collect();
        let total: f64 = raw.iter().sum();
        Ok(ScenarioSet {
            scenarios,
            probabilities: raw.into_iter().map(|p| p / total).collect(),
        })
    }

    pub fn single(&self, index: usize) -> ScenarioSet {
        self.subset(&[index]).expect("index in range")
    }
}

/// Mix a base seed with a stream index into an independent derived seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined word.
    let mut z = seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Sample `n` scenarios around base profiles with independent uniform
/// relative perturbations: each entry becomes `base * (1 + u)` with
/// `u ~ U(-perturbation, perturbation)`. Deterministic in `seed` and
/// independent of worker count (per-scenario derived streams).
pub fn sample_scenarios(
    profiles: &Scenario,
    n: usize,
    seed: u64,
    perturbation: f64,
) -> Result<ScenarioSet, ScenarioError> {
    if n == 0 {
        return Err(ScenarioError::Empty);
    }
    if !(0.0..1.0).contains(&perturbation) {
        return Err(ScenarioError::Malformed(format!(
            "perturbation {perturbation} outside [0, 1)"
        )));
    }
    let scenarios = exec::map_indices(n, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, s as u64));
        let mut out = profiles.clone();
        for c in CHANNELS {
            for v in out.channel_mut(c).iter_mut() {
                let u: f64 = if perturbation > 0.0 {
                    rng.gen_range(-perturbation..perturbation)
                } else {
                    0.0
                };
                *v *= 1.0 + u;
            }
        }
        out
    });
    ScenarioSet::uniform(scenarios)
}

/// Pooled scenario feature: `(bus, time, feature)` with the feature axis
/// holding `[min, mean, max]` per channel in channel order pg, pd, qd.
/// Per-phase quantities are summed to per-bus before pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeature {
    pub data: Array3<f64>,
}

impl PooledFeature {
    pub fn num_buses(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn horizon(&self) -> usize {
        self.data.shape()[1]
    }
}

/// Element-wise min/mean/max pooling over the scenario axis.
pub fn pool_scenarios(set: &ScenarioSet) -> Result<PooledFeature, ScenarioError> {
    if set.is_empty() {
        return Err(ScenarioError::Empty);
    }
    let n = set.scenarios[0].num_buses();
    let t = set.horizon();
    let s = set.len() as f64;
    let mut data = Array3::<f64>::zeros((n, t, POOLED_FEATURES));
    let mut buf = vec![0.0f64; set.len()];
    for (ci, c) in CHANNELS.into_iter().enumerate() {
        // Per-bus aggregation: sum over the phase axis.
        let per_bus: Vec<Array2<f64>> = set
            .scenarios
            .iter()
            .map(|sc| sc.channel(c).sum_axis(Axis(1)))
            .collect();
        for i in 0..n {
            for k in 0..t {
                for (m, slot) in per_bus.iter().zip(buf.iter_mut()) {
                    *slot = m[[i, k]];
                }
                // Summing in sorted order makes the mean channel exactly
                // invariant to scenario ordering; an all-equal column short
                // circuits so replicated scenarios pool to the value itself.
                buf.sort_unstable_by(f64::total_cmp);
                let (lo, hi) = (buf[0], buf[set.len() - 1]);
                data[[i, k, 3 * ci]] = lo;
                data[[i, k, 3 * ci + 1]] = if lo == hi {
                    lo
                } else {
                    buf.iter().sum::<f64>() / s
                };
                data[[i, k, 3 * ci + 2]] = hi;
            }
        }
    }
    Ok(PooledFeature { data })
}

/// Split the pooled feature into per-period `(bus, feature)` slices.
pub fn reshape_temporal(pooled: &PooledFeature) -> Vec<Array2<f64>> {
    (0..pooled.horizon())
        .map(|t| pooled.data.index_axis(Axis(1), t).to_owned())
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SetManifest {
    version: u32,
    scenarios: usize,
    buses: usize,
    horizon: usize,
    probabilities: Vec<f64>,
}

/// Persist a scenario set as `<stem>.csv` plus `<stem>.manifest.json`.
/// Rows are `(scenario, bus, phase, channel, t, value)` with zeros skipped;
/// ordering is fixed, so identical sets produce identical bytes.
pub fn save_scenario_set(
    set: &ScenarioSet,
    feeder: &Feeder,
    stem: impl AsRef<Path>,
) -> Result<(), ScenarioError> {
    let stem = stem.as_ref();
    let manifest = SetManifest {
        version: 1,
        scenarios: set.len(),
        buses: set.scenarios[0].num_buses(),
        horizon: set.horizon(),
        probabilities: set.probabilities.clone(),
    };
    let mut mf = std::fs::File::create(stem.with_extension("manifest.json"))?;
    mf.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    mf.write_all(b"\n")?;

    let mut w = csv::Writer::from_path(stem.with_extension("csv"))?;
    w.write_record(["scenario", "bus", "phase", "channel", "t", "value"])?;
    for (s, sc) in set.scenarios.iter().enumerate() {
        for c in CHANNELS {
            let arr = sc.channel(c);
            for (i, bus) in feeder.buses.iter().enumerate() {
                for p in ALL_PHASES {
                    for t in 0..sc.horizon() {
                        let v = arr[[i, p.index(), t]];
                        if v != 0.0 {
                            w.write_record([
                                s.to_string(),
                                bus.id.clone(),
                                p.letter().to_string(),
                                c.name().to_string(),
                                t.to_string(),
                                format!("{v}"),
                            ])?;
                        }
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a scenario set saved by [`save_scenario_set`].
pub fn load_scenario_set(
    feeder: &Feeder,
    stem: impl AsRef<Path>,
) -> Result<ScenarioSet, ScenarioError> {
    let stem = stem.as_ref();
    let manifest: SetManifest =
        serde_json::from_str(&std::fs::read_to_string(stem.with_extension("manifest.json"))?)?;
    if manifest.buses != feeder.num_buses() {
        return Err(ScenarioError::Malformed(format!(
            "manifest bus count {} does not match feeder {}",
            manifest.buses,
            feeder.num_buses()
        )));
    }
    if manifest.probabilities.len() != manifest.scenarios {
        return Err(ScenarioError::Malformed(
            "probability count does not match scenario count".into(),
        ));
    }
    let mut scenarios =
        vec![Scenario::zeros(manifest.buses, manifest.horizon); manifest.scenarios];
    let mut r = csv::Reader::from_path(stem.with_extension("csv"))?;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 6 {
            return Err(ScenarioError::Malformed(format!(
                "expected 6 columns, got {}",
                rec.len()
            )));
        }
        let s: usize = rec[0]
            .parse()
            .map_err(|_| ScenarioError::Malformed(format!("bad scenario index {:?}", &rec[0])))?;
        let bus = feeder
            .bus_index(&rec[1])
            .ok_or_else(|| ScenarioError::Malformed(format!("unknown bus {:?}", &rec[1])))?;
        let phase = rec[2]
            .chars()
            .next()
            .and_then(Phase::from_letter)
            .ok_or_else(|| ScenarioError::Malformed(format!("bad phase {:?}", &rec[2])))?;
        let channel = Channel::parse(&rec[3])
            .ok_or_else(|| ScenarioError::Malformed(format!("bad channel {:?}", &rec[3])))?;
        let t: usize = rec[4]
            .parse()
            .map_err(|_| ScenarioError::Malformed(format!("bad period {:?}", &rec[4])))?;
        let v: f64 = rec[5]
            .parse()
            .map_err(|_| ScenarioError::Malformed(format!("bad value {:?}", &rec[5])))?;
        let sc = scenarios
            .get_mut(s)
            .ok_or_else(|| ScenarioError::Malformed(format!("scenario index {s} out of range")))?;
        if t >= manifest.horizon {
            return Err(ScenarioError::Malformed(format!("period {t} out of range")));
        }
        sc.channel_mut(channel)[[bus, phase.index(), t]] = v;
    }
    Ok(ScenarioSet {
        scenarios,
        probabilities: manifest.probabilities,
    })
}

/// Base-profile CSV (`bus, phase, channel, t, value`), the user-facing
/// input to scenario sampling.
pub fn save_profiles(
    profiles: &Scenario,
    feeder: &Feeder,
    path: impl AsRef<Path>,
) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["bus", "phase", "channel", "t", "value"])?;
    for c in CHANNELS {
        let arr = profiles.channel(c);
        for (i, bus) in feeder.buses.iter().enumerate() {
            for p in ALL_PHASES {
                for t in 0..profiles.horizon() {
                    let v = arr[[i, p.index(), t]];
                    if v != 0.0 {
                        w.write_record([
                            bus.id.clone(),
                            p.letter().to_string(),
                            c.name().to_string(),
                            t.to_string(),
                            format!("{v}"),
                        ])?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_profiles(
    feeder: &Feeder,
    horizon: usize,
    path: impl AsRef<Path>,
) -> Result<Scenario, ScenarioError> {
    let mut out = Scenario::zeros(feeder.num_buses(), horizon);
    let mut r = csv::Reader::from_path(path.as_ref())?;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(ScenarioError::Malformed(format!(
                "expected 5 columns, got {}",
                rec.len()
            )));
        }
        let bus = feeder
            .bus_index(&rec[0])
            .ok_or_else(|| ScenarioError::Malformed(format!("unknown bus {:?}", &rec[0])))?;
        let phase = rec[1]
            .chars()
            .next()
            .and_then(Phase::from_letter)
            .ok_or_else(|| ScenarioError::Malformed(format!("bad phase {:?}", &rec[1])))?;
        let channel = Channel::parse(&rec[2])
            .ok_or_else(|| ScenarioError::Malformed(format!("bad channel {:?}", &rec[2])))?;
        let t: usize = rec[3]
            .parse()
            .map_err(|_| ScenarioError::Malformed(format!("bad period {:?}", &rec[3])))?;
        if t >= horizon {
            return Err(ScenarioError::Malformed(format!(
                "period {t} outside horizon {horizon}"
            )));
        }
        let v: f64 = rec[4]
            .parse()
            .map_err(|_| ScenarioError::Malformed(format!("bad value {:?}", &rec[4])))?;
        out.channel_mut(channel)[[bus, phase.index(), t]] = v;
    }
    Ok(out)
}

/// Synthesize smooth day-shaped base profiles for a feeder: every load bus
/// gets `load_peak_kw` per phase at the evening peak with a 0.35 power
/// factor ratio, every DER bus gets a solar bell peaking at `pv_scale`
/// times its capacity.
pub fn synthetic_profiles(feeder: &Feeder, horizon: usize, load_peak_kw: f64, pv_scale: f64) -> Scenario {
    let mut out = Scenario::zeros(feeder.num_buses(), horizon);
    let tf = horizon as f64;
    for (i, bus) in feeder.buses.iter().enumerate() {
        if bus.kind != BusKind::Load {
            continue;
        }
        for p in bus.phases.iter() {
            for t in 0..horizon {
                // Demand trough near midday, peak in the early evening
                // (around 0.8 of the horizon), range [0.45, 1.0].
                let frac = (t as f64 + 0.5) / tf;
                let shape = 0.45 + 0.55 * (0.62 * std::f64::consts::PI * frac).sin().powi(2);
                let pd = load_peak_kw / feeder.base_kva * shape;
                out.pd_hat[[i, p.index(), t]] = pd;
                out.qd_hat[[i, p.index(), t]] = 0.35 * pd;
            }
        }
    }
    for der in &feeder.ders {
        for p in der.phases().iter() {
            for t in 0..horizon {
                let frac = (t as f64 + 0.5) / tf;
                let bell = (std::f64::consts::PI * frac).sin().max(0.0).powi(2);
                out.pg_hat[[der.bus, p.index(), t]] =
                    der.capacity[p.index()] * pv_scale * bell;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::presets;

    fn toy_profiles() -> (Feeder, Scenario) {
        let f = presets::toy10();
        let p = synthetic_profiles(&f, 6, 40.0, 1.0);
        (f, p)
    }

    #[test]
    fn zero_perturbation_reproduces_base() {
        let (_, p) = toy_profiles();
        let set = sample_scenarios(&p, 5, 7, 0.0).unwrap();
        for sc in &set.scenarios {
            assert_eq!(sc, &p);
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let (_, p) = toy_profiles();
        let a = sample_scenarios(&p, 8, 123, 0.2).unwrap();
        let b = sample_scenarios(&p, 8, 123, 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_approaches_base() {
        let (f, p) = toy_profiles();
        let set = sample_scenarios(&p, 4000, 99, 0.2).unwrap();
        let n = f.num_buses();
        for c in CHANNELS {
            let base = p.channel(c);
            let mut mean = Array3::<f64>::zeros(base.raw_dim());
            for sc in &set.scenarios {
                mean = mean + sc.channel(c);
            }
            mean /= set.len() as f64;
            for i in 0..n {
                for ph in 0..3 {
                    for t in 0..p.horizon() {
                        let b = base[[i, ph, t]];
                        if b.abs() > 1e-12 {
                            let m = mean[[i, ph, t]];
                            assert!(
                                (m - b).abs() / b.abs() < 0.01,
                                "mean {m} vs base {b} at ({i},{ph},{t})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one_after_subset() {
        let (_, p) = toy_profiles();
        let set = sample_scenarios(&p, 10, 5, 0.1).unwrap();
        let sub = set.subset(&[0, 3, 7]).unwrap();
        let total: f64 = sub.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooling_single_scenario_is_identity_triple() {
        let (_, p) = toy_profiles();
        let set = sample_scenarios(&p, 1, 0, 0.0).unwrap();
        let pooled = pool_scenarios(&set).unwrap();
        for i in 0..pooled.num_buses() {
            for t in 0..pooled.horizon() {
                for c in 0..3 {
                    let lo = pooled.data[[i, t, 3 * c]];
                    let mid = pooled.data[[i, t, 3 * c + 1]];
                    let hi = pooled.data[[i, t, 3 * c + 2]];
                    assert_eq!(lo, mid);
                    assert_eq!(mid, hi);
                }
            }
        }
    }

    #[test]
    fn pooling_two_values_gives_min_mean_max() {
        let mut a = Scenario::zeros(1, 1);
        let mut b = Scenario::zeros(1, 1);
        a.pd_hat[[0, 0, 0]] = 1.0;
        b.pd_hat[[0, 0, 0]] = 3.0;
        let set = ScenarioSet::uniform(vec![a, b]).unwrap();
        let pooled = pool_scenarios(&set).unwrap();
        assert_eq!(pooled.data[[0, 0, 3]], 1.0);
        assert_eq!(pooled.data[[0, 0, 4]], 2.0);
        assert_eq!(pooled.data[[0, 0, 5]], 3.0);
    }

    #[test]
    fn pooling_order_invariant_and_sorted() {
        let (_, p) = toy_profiles();
        let set = sample_scenarios(&p, 7, 11, 0.3).unwrap();
        let pooled = pool_scenarios(&set).unwrap();
        // Any permutation yields the identical pooled feature.
        let perm = [6, 2, 0, 4, 1, 5, 3];
        let permuted = set.subset(&perm).unwrap();
        let pooled2 = pool_scenarios(&permuted).unwrap();
        assert_eq!(pooled, pooled2);
        // min <= mean <= max everywhere.
        for i in 0..pooled.num_buses() {
            for t in 0..pooled.horizon() {
                for c in 0..3 {
                    assert!(pooled.data[[i, t, 3 * c]] <= pooled.data[[i, t, 3 * c + 1]] + 1e-15);
                    assert!(pooled.data[[i, t, 3 * c + 1]] <= pooled.data[[i, t, 3 * c + 2]] + 1e-15);
                }
            }
        }
    }

    #[test]
    fn reshape_roundtrip() {
        let (_, p) = toy_profiles();
        let set = sample_scenarios(&p, 3, 1, 0.1).unwrap();
        let pooled = pool_scenarios(&set).unwrap();
        let slices = reshape_temporal(&pooled);
        assert_eq!(slices.len(), pooled.horizon());
        for (t, s) in slices.iter().enumerate() {
            assert_eq!(s.shape(), [pooled.num_buses(), POOLED_FEATURES]);
            for i in 0..pooled.num_buses() {
                for f in 0..POOLED_FEATURES {
                    assert_eq!(s[[i, f]], pooled.data[[i, t, f]]);
                }
            }
        }
    }

    #[test]
    fn scenario_io_roundtrip() {
        let (f, p) = toy_profiles();
        let set = sample_scenarios(&p, 4, 77, 0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("set");
        save_scenario_set(&set, &f, &stem).unwrap();
        let loaded = load_scenario_set(&f, &stem).unwrap();
        assert_eq!(set, loaded);
    }

    #[test]
    fn truncated_manifest_is_an_error() {
        let (f, p) = toy_profiles();
        let set = sample_scenarios(&p, 2, 1, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("set");
        save_scenario_set(&set, &f, &stem).unwrap();
        let mpath = stem.with_extension("manifest.json");
        let text = std::fs::read_to_string(&mpath).unwrap();
        std::fs::write(&mpath, &text[..text.len() / 2]).unwrap();
        assert!(load_scenario_set(&f, &stem).is_err());
    }

    #[test]
    fn profiles_io_roundtrip() {
        let (f, p) = toy_profiles();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.csv");
        save_profiles(&p, &f, &path).unwrap();
        let loaded = load_profiles(&f, p.horizon(), &path).unwrap();
        assert_eq!(p, loaded);
    }
}
