//! Offline training corpus: sampled scenarios paired with solver allocations.
//!
//! On disk a dataset is a CSV file
//!
//! ```text
//! sample_id,demand_1..K,gain_1..K,pp_1..K,pic_1..G,ptotal,split
//! ```
//!
//! plus a JSON sidecar (`<csv>.meta.json`) holding the format version, K, G,
//! the scenario space, constraints, normalization constants and per-sample
//! metadata.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Scenario;
use crate::config::{PowerConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::optimizer::{power_feasible, UtilityMode};
use crate::pipeline::Instance;
use crate::rates::PowerAllocation;

pub const FORMAT_VERSION: &str = "owc-hrs-dataset/1";
/// Samples may be resampled at most this fraction of `n` times in total.
pub const MAX_RESAMPLE_RATE: f64 = 0.2;
const MAX_ATTEMPTS_PER_SAMPLE: u64 = 64;
const LABEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Per-user demand and channel-gain summary.
    #[default]
    DemandAndGain,
    /// Per-user demand only.
    DemandOnly,
}

impl FeatureMode {
    /// Feature channels per user.
    pub fn channels(self) -> usize {
        match self {
            FeatureMode::DemandAndGain => 2,
            FeatureMode::DemandOnly => 1,
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "demand-and-gain" => Ok(FeatureMode::DemandAndGain),
            "demand-only" => Ok(FeatureMode::DemandOnly),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    /// Seed the scenario was realised from.
    pub scenario_seed: u64,
    /// Draw attempt that produced the sample (0 unless resampled).
    pub attempt: u64,
    pub utility: f64,
    pub sum_rate: f64,
    pub feasible: bool,
    pub qos_met: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Raw `[demand_1..K, gain_1..K]`.
    pub features: Vec<f64>,
    /// `[pp_1..K, pic_1..G, ptotal]`.
    pub label: Vec<f64>,
    pub meta: SampleMeta,
}

/// Per-column min/max of features and labels over the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub label_min: Vec<f64>,
    pub label_max: Vec<f64>,
}

fn span(min: f64, max: f64) -> f64 {
    if max > min {
        max - min
    } else {
        1.0
    }
}

impl Normalization {
    pub fn fit(samples: &[&Sample]) -> Self {
        let cols = |f: &dyn Fn(&Sample) -> &Vec<f64>| -> (Vec<f64>, Vec<f64>) {
            let n = samples.first().map_or(0, |s| f(s).len());
            let mut lo = vec![f64::INFINITY; n];
            let mut hi = vec![f64::NEG_INFINITY; n];
            for s in samples {
                for (i, &v) in f(s).iter().enumerate() {
                    lo[i] = lo[i].min(v);
                    hi[i] = hi[i].max(v);
                }
            }
            (lo, hi)
        };
        let (feature_min, feature_max) = cols(&|s| &s.features);
        let (label_min, label_max) = cols(&|s| &s.label);
        Self {
            feature_min,
            feature_max,
            label_min,
            label_max,
        }
    }

    pub fn normalize_features(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.feature_min[i]) / span(self.feature_min[i], self.feature_max[i]))
            .collect()
    }

    pub fn denormalize_features(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &v)| v * span(self.feature_min[i], self.feature_max[i]) + self.feature_min[i])
            .collect()
    }

    pub fn normalize_label(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.label_min[i]) / span(self.label_min[i], self.label_max[i]))
            .collect()
    }

    pub fn denormalize_label(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &v)| v * span(self.label_min[i], self.label_max[i]) + self.label_min[i])
            .collect()
    }

    fn all_finite(&self) -> bool {
        [&self.feature_min, &self.feature_max, &self.label_min, &self.label_max]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split membership: a seeded shuffle of `0..n`, cut at 60% / 20% / rest.
pub fn assign_splits(n: usize, master_seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(master_seed, 0x5e11_7000));
    order.shuffle(&mut rng);
    let n_train = n * 6 / 10;
    let n_val = n * 2 / 10;
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    out
}

fn indices_of(splits: &[Split]) -> SplitIndices {
    let mut s = SplitIndices::default();
    for (i, sp) in splits.iter().enumerate() {
        match sp {
            Split::Train => s.train.push(i),
            Split::Validation => s.validation.push(i),
            Split::Test => s.test.push(i),
        }
    }
    s
}

/// SplitMix64 finaliser over a pair.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x632b_e59b_d9b5_e09b);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `attempt`-th draw for sample `index`.
pub fn scenario_seed(master_seed: u64, index: u64, attempt: u64) -> u64 {
    mix(mix(master_seed, index), attempt)
}

/// Scenario for one sample, regenerable from `(master_seed, index)` alone.
pub fn sample_scenario(master_seed: u64, index: u64, space: &ScenarioConfig) -> Result<Scenario> {
    space.realize(scenario_seed(master_seed, index, 0))
}

/// Raw features `[demand_1..K, gain_1..K]` of an instance, gain being the
/// row sum of the user's channel.
pub fn instance_features(inst: &Instance) -> Vec<f64> {
    let k = inst.channel.num_users();
    let mut f = inst.scenario.demands.clone();
    f.extend((0..k).map(|u| inst.channel.gains.row(u).sum()));
    f
}

/// Label `[pp_1..K, pic_1..G, ptotal]` of an allocation.
pub fn allocation_label(a: &PowerAllocation) -> Vec<f64> {
    let mut y = a.p_p.clone();
    y.extend_from_slice(&a.p_ic);
    y.push(a.total());
    y
}

/// FNV-1a over the canonical TOML of the scenario space.
pub fn config_hash(space: &ScenarioConfig) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in space.to_toml_string().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    version: String,
    num_samples: usize,
    k: usize,
    g: usize,
    master_seed: u64,
    utility_mode: String,
    feature_mode: FeatureMode,
    config_hash: String,
    space: ScenarioConfig,
    power: PowerConfig,
    p_oc_fixed: f64,
    resampled: usize,
    normalization: Normalization,
    samples: Vec<SampleMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub k: usize,
    pub g: usize,
    pub master_seed: u64,
    pub utility_mode: UtilityMode,
    pub feature_mode: FeatureMode,
    pub config_hash: String,
    pub space: ScenarioConfig,
    pub samples: Vec<Sample>,
    pub splits: Vec<Split>,
    pub split_indices: SplitIndices,
    pub normalization: Normalization,
    /// Draws discarded and replaced during generation.
    pub resampled: usize,
}

/// Options for [`generate`].
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub n: usize,
    pub master_seed: u64,
    pub utility_mode: UtilityMode,
    pub feature_mode: FeatureMode,
    /// Worker threads; 1 runs serially on the calling thread.
    pub workers: usize,
}

impl GenerateOptions {
    pub fn new(n: usize, master_seed: u64) -> Self {
        Self {
            n,
            master_seed,
            utility_mode: UtilityMode::default(),
            feature_mode: FeatureMode::default(),
            workers: 1,
        }
    }
}

fn generate_one(space: &ScenarioConfig, opts: &GenerateOptions, index: usize) -> Result<(Sample, u64)> {
    for attempt in 0..MAX_ATTEMPTS_PER_SAMPLE {
        let seed = scenario_seed(opts.master_seed, index as u64, attempt);
        let inst = match Instance::from_config(space, seed) {
            Ok(i) => i,
            Err(Error::DisconnectedUser(_)) => continue,
            Err(e) => return Err(e),
        };
        let res = inst.solve(opts.utility_mode, seed)?;
        if !(res.feasible && res.qos_met) {
            continue;
        }
        let sample = Sample {
            features: instance_features(&inst),
            label: allocation_label(&res.allocation),
            meta: SampleMeta {
                scenario_seed: seed,
                attempt,
                utility: res.utility,
                sum_rate: res.sum_rate,
                feasible: res.feasible,
                qos_met: res.qos_met,
            },
        };
        return Ok((sample, attempt));
    }
    Err(Error::Generation(format!(
        "sample {index}: no feasible scenario in {MAX_ATTEMPTS_PER_SAMPLE} draws"
    )))
}

/// Sample, solve and label `n` scenarios. Each sample depends only on
/// `(master_seed, index)`, so the result is identical for any worker count.
pub fn generate(space: &ScenarioConfig, opts: &GenerateOptions) -> Result<DatasetFile> {
    if opts.n < 10 {
        return Err(Error::domain(format!("dataset needs n >= 10, got {}", opts.n)));
    }
    space.validate()?;
    let results: Vec<Result<(Sample, u64)>> = if opts.workers <= 1 {
        (0..opts.n).map(|i| generate_one(space, opts, i)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Generation(e.to_string()))?;
        pool.install(|| (0..opts.n).into_par_iter().map(|i| generate_one(space, opts, i)).collect())
    };
    let mut samples = Vec::with_capacity(opts.n);
    let mut resampled = 0usize;
    for r in results {
        let (s, attempts) = r?;
        resampled += attempts as usize;
        samples.push(s);
    }
    if resampled as f64 > MAX_RESAMPLE_RATE * opts.n as f64 {
        return Err(Error::Generation(format!(
            "{resampled} of {} draws were infeasible (limit {:.0}%)",
            opts.n,
            MAX_RESAMPLE_RATE * 100.0
        )));
    }
    if resampled > 0 {
        eprintln!("dataset: resampled {resampled} infeasible draws");
    }
    let splits = assign_splits(opts.n, opts.master_seed);
    let split_indices = indices_of(&splits);
    let train: Vec<&Sample> = split_indices.train.iter().map(|&i| &samples[i]).collect();
    let normalization = Normalization::fit(&train);
    Ok(DatasetFile {
        k: space.users.count,
        g: space.num_groups(),
        master_seed: opts.master_seed,
        utility_mode: opts.utility_mode,
        feature_mode: opts.feature_mode,
        config_hash: config_hash(space),
        space: space.clone(),
        samples,
        splits,
        split_indices,
        normalization,
        resampled,
    })
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn header(k: usize, g: usize) -> String {
    let mut cols = vec!["sample_id".to_string()];
    cols.extend((1..=k).map(|i| format!("demand_{i}")));
    cols.extend((1..=k).map(|i| format!("gain_{i}")));
    cols.extend((1..=k).map(|i| format!("pp_{i}")));
    cols.extend((1..=g).map(|i| format!("pic_{i}")));
    cols.push("ptotal".into());
    cols.push("split".into());
    cols.join(",")
}

impl DatasetFile {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn p_oc_fixed(&self) -> f64 {
        self.space.power.outer_common_fraction * self.space.power.total
    }

    /// Network input for sample `i`: normalised, restricted to the feature mode.
    pub fn input(&self, i: usize) -> Vec<f64> {
        let z = self.normalization.normalize_features(&self.samples[i].features);
        z[..self.feature_mode.channels() * self.k].to_vec()
    }

    pub fn target(&self, i: usize) -> Vec<f64> {
        self.normalization.normalize_label(&self.samples[i].label)
    }

    /// Reassemble a sample's label into an allocation.
    pub fn label_allocation(&self, i: usize) -> PowerAllocation {
        let y = &self.samples[i].label;
        PowerAllocation {
            p_oc: self.p_oc_fixed(),
            p_ic: y[self.k..self.k + self.g].to_vec(),
            p_p: y[..self.k].to_vec(),
        }
    }

    /// Rebuild the solver instance a sample came from.
    pub fn instance(&self, i: usize) -> Result<Instance> {
        Instance::from_config(&self.space, self.samples[i].meta.scenario_seed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = header(self.k, self.g);
        out.push('\n');
        for (i, (s, split)) in self.samples.iter().zip(&self.splits).enumerate() {
            out.push_str(&i.to_string());
            for v in s.features.iter().chain(&s.label) {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push(',');
            out.push_str(split.as_str());
            out.push('\n');
        }
        out
    }

    fn sidecar(&self) -> Sidecar {
        Sidecar {
            version: FORMAT_VERSION.to_string(),
            num_samples: self.samples.len(),
            k: self.k,
            g: self.g,
            master_seed: self.master_seed,
            utility_mode: self.utility_mode.to_string(),
            feature_mode: self.feature_mode,
            config_hash: self.config_hash.clone(),
            space: self.space.clone(),
            power: self.space.power.clone(),
            p_oc_fixed: self.p_oc_fixed(),
            resampled: self.resampled,
            normalization: self.normalization.clone(),
            samples: self.samples.iter().map(|s| s.meta.clone()).collect(),
        }
    }

    pub fn sidecar_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serialises");
        s.push('\n');
        s
    }

    pub fn save(&self, csv_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        let meta = sidecar_path(csv_path);
        std::fs::write(&meta, self.sidecar_json()).map_err(|e| Error::io(&meta, e))
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let csv = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let meta_path = sidecar_path(csv_path);
        let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        Self::parse(&csv, &meta)
    }

    /// Parse a dataset from its CSV text and sidecar JSON.
    pub fn parse(csv: &str, sidecar_json: &str) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(sidecar_json).map_err(|e| Error::Config(format!("sidecar: {e}")))?;
        if side.version != FORMAT_VERSION {
            return Err(Error::Version {
                found: side.version,
                expected: FORMAT_VERSION.into(),
            });
        }
        let (k, g, n) = (side.k, side.g, side.num_samples);
        if k == 0 || g == 0 || g > k || side.samples.len() != n {
            return Err(Error::Config(format!(
                "sidecar: inconsistent k={k}, g={g}, n={n}, {} sample records",
                side.samples.len()
            )));
        }
        let utility_mode: UtilityMode = side.utility_mode.parse()?;
        let width = 3 * k + g + 1;
        if !side.normalization.all_finite()
            || side.normalization.feature_min.len() != 2 * k
            || side.normalization.feature_max.len() != 2 * k
            || side.normalization.label_min.len() != k + g + 1
            || side.normalization.label_max.len() != k + g + 1
        {
            return Err(Error::Config("sidecar: malformed normalization".into()));
        }

        let expected_header = header(k, g);
        let mut offset = 0usize;
        let mut lines = csv.split_inclusive('\n');
        let first = lines.next().ok_or_else(|| Error::parse(0, "empty dataset file"))?;
        if first.trim_end_matches(['\n', '\r']) != expected_header {
            return Err(Error::parse(0, format!("header does not match k={k}, g={g}")));
        }
        offset += first.len();

        let mut samples = Vec::with_capacity(n);
        let mut splits = Vec::with_capacity(n);
        for line in lines {
            let line_start = offset;
            offset += line.len();
            if !line.ends_with('\n') {
                return Err(Error::parse(line_start, "truncated row (missing newline)"));
            }
            let body = line.trim_end_matches(['\n', '\r']);
            let fields: Vec<&str> = body.split(',').collect();
            if fields.len() != width + 2 {
                return Err(Error::parse(
                    line_start,
                    format!("expected {} fields, found {}", width + 2, fields.len()),
                ));
            }
            let id: usize = fields[0]
                .parse()
                .map_err(|_| Error::parse(line_start, format!("bad sample_id {:?}", fields[0])))?;
            if id != samples.len() {
                return Err(Error::parse(line_start, format!("sample_id {id} out of sequence")));
            }
            if id >= n {
                return Err(Error::parse(line_start, format!("more rows than the {n} declared")));
            }
            let mut values = Vec::with_capacity(width);
            for f in &fields[1..=width] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::parse(line_start, format!("bad number {f:?}")))?;
                if !v.is_finite() {
                    return Err(Error::parse(line_start, format!("non-finite value {f:?}")));
                }
                values.push(v);
            }
            let split = Split::parse(fields[width + 1])
                .ok_or_else(|| Error::parse(line_start, format!("bad split {:?}", fields[width + 1])))?;
            let label = values.split_off(2 * k);
            if label.iter().any(|&v| v < 0.0) {
                return Err(Error::parse(line_start, "negative power in label"));
            }
            let total = side.p_oc_fixed + label[..k + g].iter().sum::<f64>();
            if (total - label[k + g]).abs() > LABEL_TOL {
                return Err(Error::parse(line_start, "ptotal disagrees with the label powers"));
            }
            samples.push(Sample {
                features: values,
                label,
                meta: side.samples[id].clone(),
            });
            splits.push(split);
        }
        if samples.len() != n {
            return Err(Error::parse(
                offset,
                format!("truncated file: {} of {n} rows present", samples.len()),
            ));
        }
        let split_indices = indices_of(&splits);
        Ok(Self {
            k,
            g,
            master_seed: side.master_seed,
            utility_mode,
            feature_mode: side.feature_mode,
            config_hash: side.config_hash,
            space: side.space,
            samples,
            splits,
            split_indices,
            normalization: side.normalization,
            resampled: side.resampled,
        })
    }

    /// Check every label against the power constraints of its scenario.
    pub fn labels_feasible(&self) -> Result<bool> {
        for i in 0..self.len() {
            let inst = self.instance(i)?;
            if !power_feasible(&self.label_allocation(i), &inst.plan, &inst.constraints) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, seed: u64) -> DatasetFile {
        let mut opts = GenerateOptions::new(n, seed);
        opts.utility_mode = UtilityMode::Sum;
        generate(&ScenarioConfig::default(), &opts).unwrap()
    }

    #[test]
    fn split_sizes() {
        for (n, t, v, te) in [(10, 6, 2, 2), (10_000, 6000, 2000, 2000), (17, 10, 3, 4)] {
            let s = indices_of(&assign_splits(n, 3));
            assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (t, v, te));
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert_eq!(assign_splits(100, 9), assign_splits(100, 9));
        assert_ne!(assign_splits(100, 9), assign_splits(100, 10));
    }

    #[test]
    fn scenario_sampling_is_reproducible() {
        let space = ScenarioConfig::default();
        assert_eq!(sample_scenario(5, 3, &space).unwrap(), sample_scenario(5, 3, &space).unwrap());
        assert_ne!(
            sample_scenario(5, 0, &space).unwrap().user_positions,
            sample_scenario(5, 1, &space).unwrap().user_positions
        );
    }

    #[test]
    fn positions_centre_on_the_room() {
        // x ~ U(0, 5): mean 2.5, sd 5/sqrt(12); the mean of 6000 draws has sd 0.0186
        let space = ScenarioConfig::default();
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0.0f64;
        for i in 0..1000 {
            for p in sample_scenario(77, i, &space).unwrap().user_positions {
                sx += p.x;
                sy += p.y;
                n += 1.0;
            }
        }
        let sd = 5.0 / 12f64.sqrt() / n.sqrt();
        assert!((sx / n - 2.5).abs() < 3.0 * sd);
        assert!((sy / n - 2.5).abs() < 3.0 * sd);
    }

    #[test]
    fn small_dataset_round_trip_and_labels() {
        let d = small(10, 1);
        assert_eq!(d.split_indices.train.len(), 6);
        assert_eq!(d.split_indices.validation.len(), 2);
        assert_eq!(d.split_indices.test.len(), 2);
        let back = DatasetFile::parse(&d.to_csv(), &d.sidecar_json()).unwrap();
        assert_eq!(back, d);
        assert!(d.labels_feasible().unwrap());
        for s in &d.samples {
            let k = d.k;
            let g = d.g;
            let total = d.p_oc_fixed() + s.label[..k + g].iter().sum::<f64>();
            assert!((total - s.label[k + g]).abs() < 1e-9);
        }
        // normalisation is invertible
        let x = &d.samples[0].features;
        let z = d.normalization.normalize_features(x);
        for (a, b) in d.normalization.denormalize_features(&z).iter().zip(x) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn parse_errors() {
        let d = small(10, 2);
        let csv = d.to_csv();
        let meta = d.sidecar_json();

        let cut = csv.len() - 40;
        match DatasetFile::parse(&csv[..cut], &meta) {
            Err(Error::Parse { offset, .. }) => {
                let last_line = csv[..cut].rfind('\n').unwrap() + 1;
                assert_eq!(offset, last_line);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        // whole rows missing
        let rows: Vec<&str> = csv.split_inclusive('\n').collect();
        let shortened: String = rows[..rows.len() - 2].concat();
        assert!(matches!(
            DatasetFile::parse(&shortened, &meta),
            Err(Error::Parse { offset, .. }) if offset == shortened.len()
        ));

        let line2 = rows[2];
        let first_num = line2.split(',').nth(1).unwrap();
        let with_nan = csv.replacen(first_num, "NaN", 1);
        assert!(matches!(DatasetFile::parse(&with_nan, &meta), Err(Error::Parse { .. })));

        let wrong_version = meta.replace(FORMAT_VERSION, "owc-hrs-dataset/0");
        assert!(matches!(DatasetFile::parse(&csv, &wrong_version), Err(Error::Version { .. })));
    }

    #[test]
    fn rejects_tiny_n() {
        assert!(generate(&ScenarioConfig::default(), &GenerateOptions::new(5, 0)).is_err());
    }
}
