//! Plain-text weights file.
//!
//! ```text
//! owc-hrs-weights 1
//! spec users 6 groups 2 in_channels 2 conv 8 3 hidden 64 64 64 64
//! normalization feature_min v1 v2 ...
//! normalization feature_max ...
//! normalization label_min ...
//! normalization label_max ...
//! meta seed 0 epochs 200 best_epoch 57 best_validation_loss 1.5e-2
//! tensor conv.weight 8 6 v1 v2 ...
//! ...
//! end
//! ```
//!
//! Values are written in shortest round-trip form, so a save/load cycle is
//! bit-exact. `conv none` and `normalization none` mark absent parts.

use std::path::Path;

use super::{ConvSpec, NetworkSpec, NetworkWeights, Tensor, TrainingMeta};
use crate::dataset::Normalization;
use crate::error::{Error, Result};

pub const WEIGHTS_VERSION: u32 = 1;
const MAGIC: &str = "owc-hrs-weights";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

fn join_usize(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

impl NetworkWeights {
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let mut out = format!("{MAGIC} {WEIGHTS_VERSION}\n");
        let conv = match s.conv {
            Some(c) => format!("{} {}", c.channels, c.kernel),
            None => "none".into(),
        };
        out.push_str(&format!(
            "spec users {} groups {} in_channels {} conv {conv} hidden {}\n",
            s.users,
            s.groups,
            s.in_channels,
            join_usize(&s.hidden)
        )
        .replace("hidden \n", "hidden\n"));
        match &self.normalization {
            Some(n) => {
                out.push_str(&format!("normalization feature_min {}\n", join(&n.feature_min)));
                out.push_str(&format!("normalization feature_max {}\n", join(&n.feature_max)));
                out.push_str(&format!("normalization label_min {}\n", join(&n.label_min)));
                out.push_str(&format!("normalization label_max {}\n", join(&n.label_max)));
            }
            None => out.push_str("normalization none\n"),
        }
        let m = &self.meta;
        out.push_str(&format!(
            "meta seed {} epochs {} best_epoch {} best_validation_loss {:e}\n",
            m.seed, m.epochs, m.best_epoch, m.best_validation_loss
        ));
        for t in &self.tensors {
            out.push_str(&format!("tensor {} {} {} {}\n", t.name, t.rows, t.cols, join(&t.data)));
        }
        out.push_str("end\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parse a weights file; errors carry the byte offset of the bad line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Reader { text, pos: 0 };

        let (off, head) = r.line("header")?;
        let mut tok = head.split(' ');
        if tok.next() != Some(MAGIC) {
            return Err(Error::parse(off, "not a weights file"));
        }
        let version = tok.next().unwrap_or("");
        if version != WEIGHTS_VERSION.to_string() || tok.next().is_some() {
            return Err(Error::Version {
                found: version.to_string(),
                expected: WEIGHTS_VERSION.to_string(),
            });
        }

        let spec = parse_spec(&mut r)?;
        let normalization = parse_normalization(&mut r, &spec)?;
        let meta = parse_meta(&mut r)?;

        let mut tensors = Vec::new();
        for (name, rows, cols) in spec.tensor_shapes() {
            let (off, line) = r.line("tensor")?;
            let mut tok = line.split(' ');
            if tok.next() != Some("tensor") || tok.next() != Some(name.as_str()) {
                return Err(Error::parse(off, format!("expected tensor {name}")));
            }
            let shape = (num::<usize>(off, tok.next())?, num::<usize>(off, tok.next())?);
            if shape != (rows, cols) {
                return Err(Error::parse(
                    off,
                    format!("tensor {name} is {}x{}, expected {rows}x{cols}", shape.0, shape.1),
                ));
            }
            let data = floats(off, tok)?;
            if data.len() != rows * cols {
                return Err(Error::parse(
                    off,
                    format!("tensor {name} has {} values, expected {}", data.len(), rows * cols),
                ));
            }
            tensors.push(Tensor { name, rows, cols, data });
        }
        let (off, last) = r.line("end marker")?;
        if last != "end" {
            return Err(Error::parse(off, "expected end marker"));
        }
        if r.pos != text.len() {
            return Err(Error::parse(r.pos, "trailing data after end marker"));
        }
        Ok(Self {
            spec,
            tensors,
            normalization,
            meta,
        })
    }
}

struct Reader<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Next newline-terminated line and its starting offset.
    fn line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let start = self.pos;
        let rest = &self.text[start..];
        match rest.find('\n') {
            Some(end) => {
                self.pos = start + end + 1;
                Ok((start, &rest[..end]))
            }
            None => Err(Error::parse(start, format!("truncated file: expected {what}"))),
        }
    }
}

fn num<T: std::str::FromStr>(off: usize, tok: Option<&str>) -> Result<T> {
    let t = tok.ok_or_else(|| Error::parse(off, "missing value"))?;
    t.parse().map_err(|_| Error::parse(off, format!("bad number {t:?}")))
}

fn floats<'a>(off: usize, tok: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    tok.map(|t| {
        let v: f64 = t.parse().map_err(|_| Error::parse(off, format!("bad number {t:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::parse(off, format!("non-finite value {t:?}")))
        }
    })
    .collect()
}

fn expect(off: usize, tok: Option<&str>, key: &str) -> Result<()> {
    if tok == Some(key) {
        Ok(())
    } else {
        Err(Error::parse(off, format!("expected {key:?}")))
    }
}

fn parse_spec(r: &mut Reader<'_>) -> Result<NetworkSpec> {
    let (off, line) = r.line("spec line")?;
    let mut tok = line.split(' ');
    expect(off, tok.next(), "spec")?;
    expect(off, tok.next(), "users")?;
    let users = num(off, tok.next())?;
    expect(off, tok.next(), "groups")?;
    let groups = num(off, tok.next())?;
    expect(off, tok.next(), "in_channels")?;
    let in_channels = num(off, tok.next())?;
    expect(off, tok.next(), "conv")?;
    let conv = match tok.next() {
        Some("none") => None,
        t => Some(ConvSpec {
            channels: num(off, t)?,
            kernel: num(off, tok.next())?,
        }),
    };
    expect(off, tok.next(), "hidden")?;
    let hidden = tok.map(|t| num(off, Some(t))).collect::<Result<Vec<usize>>>()?;
    let spec = NetworkSpec {
        users,
        groups,
        in_channels,
        conv,
        hidden,
    };
    // bound sizes before anything is allocated from them
    if spec.users > 4096 || spec.hidden.len() > 64 || spec.hidden.iter().any(|&w| w > 1 << 16) {
        return Err(Error::parse(off, "network dimensions out of range"));
    }
    if let Some(c) = spec.conv {
        if c.channels > 4096 || c.kernel > 4096 {
            return Err(Error::parse(off, "network dimensions out of range"));
        }
    }
    spec.validate().map_err(|e| Error::parse(off, e.to_string()))?;
    Ok(spec)
}

fn parse_normalization(r: &mut Reader<'_>, spec: &NetworkSpec) -> Result<Option<Normalization>> {
    let (off, line) = r.line("normalization")?;
    if line == "normalization none" {
        return Ok(None);
    }
    let mut fields = Vec::with_capacity(4);
    let mut line = (off, line);
    for (i, key) in ["feature_min", "feature_max", "label_min", "label_max"].iter().enumerate() {
        if i > 0 {
            line = r.line("normalization")?;
        }
        let (off, text) = line;
        let mut tok = text.split(' ');
        expect(off, tok.next(), "normalization")?;
        expect(off, tok.next(), key)?;
        let v = floats(off, tok)?;
        let want = if i < 2 { 2 * spec.users } else { spec.output_dim() };
        if v.len() != want {
            return Err(Error::parse(off, format!("{key} has {} values, expected {want}", v.len())));
        }
        fields.push(v);
    }
    let label_max = fields.pop().expect("four fields");
    let label_min = fields.pop().expect("four fields");
    let feature_max = fields.pop().expect("four fields");
    let feature_min = fields.pop().expect("four fields");
    Ok(Some(Normalization {
        feature_min,
        feature_max,
        label_min,
        label_max,
    }))
}

fn parse_meta(r: &mut Reader<'_>) -> Result<TrainingMeta> {
    let (off, line) = r.line("meta line")?;
    let mut tok = line.split(' ');
    expect(off, tok.next(), "meta")?;
    expect(off, tok.next(), "seed")?;
    let seed = num(off, tok.next())?;
    expect(off, tok.next(), "epochs")?;
    let epochs = num(off, tok.next())?;
    expect(off, tok.next(), "best_epoch")?;
    let best_epoch = num(off, tok.next())?;
    expect(off, tok.next(), "best_validation_loss")?;
    let best_validation_loss: f64 = num(off, tok.next())?;
    if !best_validation_loss.is_finite() {
        return Err(Error::parse(off, "non-finite validation loss"));
    }
    if tok.next().is_some() {
        return Err(Error::parse(off, "unexpected trailing fields"));
    }
    Ok(TrainingMeta {
        seed,
        epochs,
        best_epoch,
        best_validation_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMode;

    fn sample() -> NetworkWeights {
        let spec = NetworkSpec::new(3, 1, FeatureMode::DemandAndGain);
        let mut w = NetworkWeights::init(&spec, 4).unwrap();
        w.normalization = Some(Normalization {
            feature_min: vec![0.1, 0.2, 0.3, 1e-6, 2e-6, 3e-6],
            feature_max: vec![1.0 / 3.0; 6],
            label_min: vec![0.0; 5],
            label_max: vec![0.7; 5],
        });
        w.meta = TrainingMeta {
            seed: 4,
            epochs: 2,
            best_epoch: 1,
            best_validation_loss: 0.123456789,
        };
        w
    }

    #[test]
    fn round_trip_is_exact() {
        let w = sample();
        let back = NetworkWeights::parse(&w.to_text()).unwrap();
        assert_eq!(back, w);
        let mut bare = w.clone();
        bare.normalization = None;
        bare.spec.conv = None;
        bare = NetworkWeights::init(&bare.spec, 1).unwrap();
        assert_eq!(NetworkWeights::parse(&bare.to_text()).unwrap(), bare);
    }

    #[test]
    fn truncation_reports_offset() {
        let text = sample().to_text();
        let cut = text.len() / 2;
        match NetworkWeights::parse(&text[..cut]) {
            Err(Error::Parse { offset, .. }) => {
                assert!(offset <= cut);
                assert_eq!(offset, text[..cut].rfind('\n').unwrap() + 1);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            NetworkWeights::parse(&text[..text.len() - 4]),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn version_and_value_checks() {
        let text = sample().to_text();
        assert!(matches!(
            NetworkWeights::parse(&text.replacen("owc-hrs-weights 1", "owc-hrs-weights 2", 1)),
            Err(Error::Version { .. })
        ));
        let bad = text.replacen("best_validation_loss 1.23456789e-1", "best_validation_loss NaN", 1);
        assert!(matches!(NetworkWeights::parse(&bad), Err(Error::Parse { .. })));
    }
}
