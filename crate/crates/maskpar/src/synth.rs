//! Writes a synthetic dataset as PNGs plus a manifest.

use std::path::{Path, PathBuf};

use maskpar_core::data::{synth_generate, synthetic_policy, SynthSpec};

use crate::error::{Error, Result};
use crate::manifest::{self, Record, Split};
use crate::{png, policies, report};

/// Layout under `out`: `images/`, `masks/`, `manifest.jsonl`,
/// `policy.json` and `spec.json`.
pub struct SynthFiles {
    pub manifest: PathBuf,
    pub policy: PathBuf,
}

/// The first 80% of samples train, the next 10% validate, the rest test.
pub fn split_of(i: usize, n: usize) -> Split {
    let tail = n / 10;
    if i + 2 * tail < n {
        Split::Train
    } else if i + tail < n {
        Split::Val
    } else {
        Split::Test
    }
}

pub fn write_synth(spec: &SynthSpec, out: &Path) -> Result<SynthFiles> {
    let samples = synth_generate(spec)?;
    let policy = synthetic_policy();
    for sub in ["images", "masks"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let n = samples.len();
    let mut records = Vec::with_capacity(n);
    for (i, s) in samples.iter().enumerate() {
        let image = PathBuf::from("images").join(format!("{}.png", s.id));
        let mask = PathBuf::from("masks").join(format!("{}.png", s.id));
        png::write_image(&out.join(&image), &s.image)?;
        png::write_mask(&out.join(&mask), &s.mask)?;
        records.push(Record {
            id: s.id.clone(),
            image,
            mask,
            labels: manifest::decode_labels(&s.labels, &policy),
            split: Some(split_of(i, n)),
        });
    }
    let files = SynthFiles { manifest: out.join("manifest.jsonl"), policy: out.join("policy.json") };
    manifest::write_records(&files.manifest, &records)?;
    policies::write_policy(&files.policy, &policy)?;
    report::write_json(&out.join("spec.json"), spec)?;
    Ok(files)
}
