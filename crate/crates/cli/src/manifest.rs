//! Dataset manifests: tab-separated records under a `#` header.
//!
//! ```text
//! # classes=checker,noise
//! #image	split	labels	mask	proposals
//! img/a.pgm	train	checker
//! img/b.pgm	test	noise,checker	masks/b.pgm
//! ```
//!
//! Paths are relative to the manifest's directory. Mask value `v > 0` is
//! the v-th class of the class list; 0 is unlabeled.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            _ => bail!("unknown split {s:?}; valid: train, val, test"),
        })
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub image: PathBuf,
    pub split: Split,
    pub labels: Vec<String>,
    pub mask: Option<PathBuf>,
    pub proposals: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub records: Vec<Record>,
}

const COLUMNS: [&str; 5] = ["image", "split", "labels", "mask", "proposals"];

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_text(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &root).with_context(|| format!("manifest {}", path.display()))
    }

    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let mut columns: Option<Vec<String>> = None;
        let mut classes: Option<Vec<String>> = None;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(list) = rest.strip_prefix("classes=") {
                    classes = Some(list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect());
                } else if columns.is_none() && rest.split('\t').any(|c| c.trim() == "image") {
                    let cols: Vec<String> = rest.split('\t').map(|c| c.trim().to_string()).collect();
                    if let Some(bad) = cols.iter().find(|c| !COLUMNS.contains(&c.as_str())) {
                        bail!("line {}: unknown column {bad:?}", n + 1);
                    }
                    for required in ["image", "split", "labels"] {
                        if !cols.iter().any(|c| c == required) {
                            bail!("line {}: header lacks column {required:?}", n + 1);
                        }
                    }
                    columns = Some(cols);
                }
                continue;
            }
            let Some(cols) = &columns else {
                bail!("line {}: record before the '#' header line", n + 1);
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() > cols.len() {
                bail!("line {}: {} fields for {} columns", n + 1, fields.len(), cols.len());
            }
            let get = |name: &str| {
                cols.iter().position(|c| c == name).and_then(|i| fields.get(i)).map(|s| s.trim()).filter(|s| !s.is_empty())
            };
            let image = get("image").with_context(|| format!("line {}: missing image", n + 1))?;
            let split = get("split").with_context(|| format!("line {}: missing split", n + 1))?.parse()?;
            let labels: Vec<String> =
                get("labels").unwrap_or("").split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            records.push(Record {
                image: PathBuf::from(image),
                split,
                labels,
                mask: get("mask").map(PathBuf::from),
                proposals: get("proposals").map(PathBuf::from),
            });
        }
        if columns.is_none() {
            bail!("no '#' header line declaring columns");
        }
        let classes = match classes {
            Some(c) => {
                for r in &records {
                    if let Some(l) = r.labels.iter().find(|l| !c.contains(l)) {
                        bail!("{}: label {l:?} not in the declared classes", r.image.display());
                    }
                }
                c
            }
            None => {
                let mut c: Vec<String> = records.iter().flat_map(|r| r.labels.iter().cloned()).collect();
                c.sort();
                c.dedup();
                c
            }
        };
        Ok(Self { root: root.to_path_buf(), classes, records })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# classes={}\n#{}\n", self.classes.join(","), COLUMNS.join("\t"));
        for r in &self.records {
            let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            let line = [r.image.display().to_string(), r.split.to_string(), r.labels.join(","), opt(&r.mask), opt(&r.proposals)];
            s.push_str(line.join("\t").trim_end_matches('\t'));
            s.push('\n');
        }
        s
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Records of one split; an empty split is an error.
    pub fn split(&self, split: Split) -> Result<Vec<&Record>> {
        let v: Vec<&Record> = self.records.iter().filter(|r| r.split == split).collect();
        if v.is_empty() {
            bail!("empty split {split:?}: the manifest has no {split} records");
        }
        Ok(v)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Class indices of a record's labels.
    pub fn label_indices(&self, r: &Record) -> Vec<usize> {
        r.labels.iter().filter_map(|l| self.class_index(l)).collect()
    }
}

/// Collision-free file stem for a manifest-relative image path.
pub fn cache_stem(image: &Path) -> String {
    let s: String = image
        .with_extension("")
        .to_string_lossy()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    s.trim_start_matches(['.', '_']).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "#image\tsplit\tlabels\tmask\n\
                        a.pgm\ttrain\tstone\n\
                        b.pgm\ttest\twood,stone\tm/b.pgm\n";

    #[test]
    fn parses_and_sorts_classes() {
        let m = Manifest::parse(TEXT, Path::new("/data")).unwrap();
        assert_eq!(m.classes, ["stone", "wood"]);
        assert_eq!(m.records[1].labels, ["wood", "stone"]);
        assert_eq!(m.resolve(m.records[1].mask.as_ref().unwrap()), PathBuf::from("/data/m/b.pgm"));
        assert_eq!(m.label_indices(&m.records[1]), [1, 0]);
        let again = Manifest::parse(&m.to_text(), Path::new("/data")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn declared_classes_keep_order() {
        let m = Manifest::parse(&format!("# classes=wood,stone,other\n{TEXT}"), Path::new("")).unwrap();
        assert_eq!(m.classes, ["wood", "stone", "other"]);
        assert!(Manifest::parse(&format!("# classes=wood\n{TEXT}"), Path::new("")).is_err());
    }

    #[test]
    fn empty_split_is_an_error() {
        let m = Manifest::parse(TEXT, Path::new("")).unwrap();
        let err = m.split(Split::Val).unwrap_err().to_string();
        assert!(err.contains("empty split"), "{err}");
        assert!(Manifest::parse("a.pgm\ttrain\tx\n", Path::new("")).is_err());
        assert!(Manifest::parse("#image\tsplit\tlabels\na.pgm\tdev\tx\n", Path::new("")).is_err());
    }

    #[test]
    fn stems_flatten_directories() {
        assert_eq!(cache_stem(Path::new("images/a b/c.pgm")), "images_a_b_c");
        assert_eq!(cache_stem(Path::new("../x.pgm")), "x");
    }
}
