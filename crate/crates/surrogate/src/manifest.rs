//! Dataset manifests: role-tagged, split-tagged file lists.
//!
//! Text format, one entry per line after a seed header:
//!
//! ```text
//! #seed=<u64>
//! <role>\t<split>\t<path>
//! ```
//!
//! Relative paths resolve against the manifest's directory. Files of the
//! paired roles (`clean`, `synthetic`, `real`, `surrogate`) are paired by
//! position within a split; `unpaired` files stand alone.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use surrogate_core::rng;

use crate::error::{Error, Result};
use crate::image::list_images;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    /// Clean ground truth `X`.
    Clean,
    /// Synthetically degraded input `Ys`.
    Synthetic,
    /// Real degraded input `Y`.
    Real,
    /// Surrogate target `Xs`.
    Surrogate,
    /// Clean images not paired with anything.
    Unpaired,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Clean, Role::Synthetic, Role::Real, Role::Surrogate, Role::Unpaired];

    pub fn is_paired(self) -> bool {
        self != Role::Unpaired
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Clean => "clean",
            Role::Synthetic => "synthetic",
            Role::Real => "real",
            Role::Surrogate => "surrogate",
            Role::Unpaired => "unpaired",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown role `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown split `{s}`")))
    }
}

/// Train/val/test fractions, non-negative and summing to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Fractions {
    pub const ALL_TRAIN: Fractions = Fractions {
        train: 1.0,
        val: 0.0,
        test: 0.0,
    };

    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let ok = [train, val, test].iter().all(|f| f.is_finite() && *f >= 0.0);
        if !ok || ((train + val + test) - 1.0).abs() > 1e-9 {
            return Err(Error::Usage(format!(
                "split fractions must be non-negative and sum to 1, got {train},{val},{test}"
            )));
        }
        Ok(Fractions { train, val, test })
    }

    /// Item counts for `n` items; rounding leftovers go to the test split.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let train = ((self.train * n as f64).round() as usize).min(n);
        let val = ((self.val * n as f64).round() as usize).min(n - train);
        [train, val, n - train - val]
    }
}

impl FromStr for Fractions {
    type Err = Error;

    /// `train,val,test`, e.g. `0.8,0.1,0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Usage(format!("bad split fractions `{s}`")))?;
        match parts[..] {
            [a, b, c] => Fractions::new(a, b, c),
            _ => Err(Error::Usage(format!("expected three split fractions, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub role: Role,
    pub split: Split,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub seed: u64,
    pub entries: Vec<Entry>,
}

impl Manifest {
    /// Paths for `(role, split)` in manifest order.
    pub fn files(&self, role: Role, split: Split) -> Vec<&Path> {
        self.entries
            .iter()
            .filter(|e| e.role == role && e.split == split)
            .map(|e| e.path.as_path())
            .collect()
    }

    pub fn count(&self, role: Role, split: Split) -> usize {
        self.entries.iter().filter(|e| e.role == role && e.split == split).count()
    }

    /// Check that paired roles have equal lengths within every split.
    pub fn validate(&self) -> Result<()> {
        for split in Split::ALL {
            let counts: BTreeMap<Role, usize> = Role::ALL
                .into_iter()
                .filter(|r| r.is_paired())
                .map(|r| (r, self.count(r, split)))
                .filter(|&(_, n)| n > 0)
                .collect();
            let mut values = counts.values();
            if let Some(first) = values.next() {
                if values.any(|n| n != first) {
                    return Err(Error::Manifest(format!(
                        "paired roles have different lengths in split `{split}`: {counts:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Serialize with paths relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let mut out = format!("#seed={}\n", self.seed);
        for e in &self.entries {
            let p = e.path.strip_prefix(base).unwrap_or(&e.path);
            out.push_str(&format!("{}\t{}\t{}\n", e.role, e.split, p.display()));
        }
        out
    }

    /// Parse manifest text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let seed = header
            .strip_prefix("#seed=")
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or_else(|| Error::Manifest(format!("missing `#seed=` header, got `{header}`")))?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut f = line.splitn(3, '\t');
            let (Some(role), Some(split), Some(path)) = (f.next(), f.next(), f.next()) else {
                return Err(Error::Manifest(format!("line {}: expected role<TAB>split<TAB>path", i + 2)));
            };
            entries.push(Entry {
                role: role.parse()?,
                split: split.parse()?,
                path: base.join(path),
            });
        }
        let m = Manifest { seed, entries };
        m.validate()?;
        Ok(m)
    }

    /// Read and resolve a manifest file; every listed file must exist.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let m = Self::parse(&text, base)?;
        let missing: Vec<String> = m
            .entries
            .iter()
            .filter(|e| !e.path.is_file())
            .map(|e| e.path.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Manifest(format!("listed files missing: {}", missing.join(", "))));
        }
        Ok(m)
    }

    /// Write atomically (temporary file, then rename).
    pub fn write(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        write_atomic(path, self.to_text(base).as_bytes())
    }
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// A deterministic permutation of `0..n`.
pub fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng(seed));
    idx
}

fn split_of(position: usize, counts: [usize; 3]) -> Split {
    if position < counts[0] {
        Split::Train
    } else if position < counts[0] + counts[1] {
        Split::Val
    } else {
        Split::Test
    }
}

/// Build a manifest from one directory per role. Paired roles must hold the
/// same file names; pairs are shuffled together by `seed` and then split.
/// Unpaired files are shuffled and split independently.
pub fn build_manifest(dirs: &[(Role, PathBuf)], fractions: Fractions, seed: u64) -> Result<Manifest> {
    let mut paired: Vec<(Role, Vec<PathBuf>)> = Vec::new();
    let mut unpaired: Vec<PathBuf> = Vec::new();
    for (role, dir) in dirs {
        let files = list_images(dir)?;
        if files.is_empty() {
            return Err(Error::Manifest(format!("no images for role `{role}` in {}", dir.display())));
        }
        if role.is_paired() {
            if paired.iter().any(|(r, _)| r == role) {
                return Err(Error::Manifest(format!("role `{role}` given twice")));
            }
            paired.push((*role, files));
        } else {
            unpaired.extend(files);
        }
    }
    paired.sort_by_key(|(r, _)| *r);
    if let Some((first_role, first)) = paired.first() {
        let names = |v: &[PathBuf]| -> Vec<std::ffi::OsString> {
            v.iter().map(|p| p.file_name().unwrap_or_default().to_owned()).collect()
        };
        let reference = names(first);
        for (role, files) in &paired[1..] {
            let other = names(files);
            if other != reference {
                let unmatched: Vec<String> = reference
                    .iter()
                    .filter(|n| !other.contains(n))
                    .chain(other.iter().filter(|n| !reference.contains(n)))
                    .map(|n| n.to_string_lossy().into_owned())
                    .collect();
                return Err(Error::Manifest(format!(
                    "roles `{first_role}` and `{role}` are not paired; unmatched files: {}",
                    unmatched.join(", ")
                )));
            }
        }
    }

    let mut entries = Vec::new();
    let n = paired.first().map_or(0, |(_, f)| f.len());
    let order = shuffled(n, rng::derive_str(seed, "manifest-paired"));
    let counts = fractions.counts(n);
    for (pos, &i) in order.iter().enumerate() {
        let split = split_of(pos, counts);
        for (role, files) in &paired {
            entries.push(Entry {
                role: *role,
                split,
                path: files[i].clone(),
            });
        }
    }
    unpaired.sort();
    let order = shuffled(unpaired.len(), rng::derive_str(seed, "manifest-unpaired"));
    let counts = fractions.counts(unpaired.len());
    for (pos, &i) in order.iter().enumerate() {
        entries.push(Entry {
            role: Role::Unpaired,
            split: split_of(pos, counts),
            path: unpaired[i].clone(),
        });
    }
    // Stable order: by split, keeping shuffled order within a split.
    entries.sort_by_key(|e| e.split);
    Ok(Manifest { seed, entries })
}
